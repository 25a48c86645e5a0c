//! End-to-end gradient-masking verification: trains a robust model, hardens
//! it, and runs all five checklist sections.
//!
//! Run with: cargo run --release -p forgenet --example masking_checklist

use forgenet::attack::{AttackConfig, AttackKind};
use forgenet::data::{synth_blobs, Split};
use forgenet::masking::{run_checklist, ChecklistConfig};
use forgenet::net::{presets, InsertPolicy};
use forgenet::smoothing::SmoothingConfig;
use forgenet::train::{calibrate_forge, train, Optimizer, TrainConfig};

fn main() -> forgenet::Result<()> {
    let seed = 31;
    let train_ds = synth_blobs(3, 4, 240, 6.0, seed, Split::Train)?;
    let test_ds = synth_blobs(3, 4, 48, 6.0, seed, Split::Test)?;

    println!("training a PGD-adversarially-trained base model...");
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 24,
        learning_rate: 0.3,
        optimizer: Optimizer::Sgd,
        adversarial: Some(
            AttackConfig::new(AttackKind::Pgd, 16.0 / 255.0)
                .with_steps(7)
                .with_seed(seed),
        ),
        seed,
    };
    let (original, _) = train(&presets::mlp_blobs(4, 3, seed)?, &train_ds, None, &cfg)?;

    let mut forged = original.insert_forge(&InsertPolicy::All)?;
    forged.set_c_ratio((2.0f64).powi(-7))?;
    calibrate_forge(&mut forged, &train_ds)?;

    let checklist_cfg = ChecklistConfig {
        smoothing: SmoothingConfig {
            sigma: 0.06,
            n0: 32,
            n: 128,
            ..SmoothingConfig::default()
        },
        radii: vec![0.0, 0.02, 0.05, 0.1],
        seed,
        ..ChecklistConfig::default()
    };
    println!("running the five-point checklist...\n");
    let checklist = run_checklist(&original, &forged, &test_ds, &checklist_cfg)?;

    let wb = checklist.white_vs_black.as_ref().unwrap();
    println!(
        "1. white-box vs black-box: {} ({})",
        wb.verdict.0.label(),
        wb.verdict.1
    );
    let sweeps = checklist.sweeps.as_ref().unwrap();
    println!(
        "2. one-step vs iterative:  {} ({})",
        sweeps.one_step_verdict.0.label(),
        sweeps.one_step_verdict.1
    );
    println!(
        "3. sweep to zero:          {} ({})",
        sweeps.sweep_verdict.0.label(),
        sweeps.sweep_verdict.1
    );
    let transfer = checklist.transfer.as_ref().unwrap();
    println!(
        "4. transfer resistance:    {} (transfer {:.4}, direct {:.4})",
        transfer.verdict.0.label(),
        transfer.transfer_robust,
        transfer.direct_robust
    );
    let smoothing = checklist.smoothing.as_ref().unwrap();
    println!(
        "5. smoothing curves:       {} ({})",
        smoothing.verdict.0.label(),
        smoothing.verdict.1
    );

    println!("\nPGD robust accuracy by radius (forged model):");
    for (model_name, eps, _, pgd) in &sweeps.rows {
        if model_name == "forged" {
            println!("  eps {:>8.5}: {:.4}", eps, pgd);
        }
    }
    Ok(())
}
