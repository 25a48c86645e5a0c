//! Epsilon sweep over the 1..96 over 255 grid: one-step FGSM against
//! nesting-seeded PGD, on an undefended and an adversarially trained model.
//!
//! Run with: cargo run --release -p forgenet --example attack_sweep

use forgenet::attack::{default_epsilon_grid, epsilon_sweep, AttackConfig, AttackKind};
use forgenet::data::{synth_blobs, Split};
use forgenet::net::presets;
use forgenet::train::{train, Optimizer, TrainConfig};

fn main() -> forgenet::Result<()> {
    let seed = 19;
    let train_ds = synth_blobs(3, 4, 300, 6.0, seed, Split::Train)?;
    let test_ds = synth_blobs(3, 4, 90, 6.0, seed, Split::Test)?;

    let standard_cfg = TrainConfig {
        epochs: 40,
        batch_size: 32,
        learning_rate: 0.3,
        optimizer: Optimizer::Sgd,
        adversarial: None,
        seed,
    };
    let adv_cfg = TrainConfig {
        adversarial: Some(
            AttackConfig::new(AttackKind::Pgd, 16.0 / 255.0)
                .with_steps(7)
                .with_seed(seed),
        ),
        ..standard_cfg.clone()
    };
    let base = presets::mlp_blobs(4, 3, seed)?;
    let (undefended, _) = train(&base, &train_ds, None, &standard_cfg)?;
    let (defended, _) = train(&base, &train_ds, None, &adv_cfg)?;

    let grid = default_epsilon_grid();
    let base_cfg = AttackConfig::new(AttackKind::Pgd, 0.0).with_seed(seed);
    let kinds = [AttackKind::Fgsm, AttackKind::Pgd, AttackKind::PgdMargin];

    for (name, model) in [("undefended", &undefended), ("adversarially trained", &defended)] {
        println!("{name} model:");
        println!("{:>12} | 1      2      4      8     16     32     64     96", "eps*255");
        let cells = epsilon_sweep(model, &test_ds, &kinds, &grid, &base_cfg)?;
        for kind in kinds {
            let row: Vec<String> = cells
                .iter()
                .filter(|c| c.kind == kind)
                .map(|c| format!("{:.3}", c.result.robust_accuracy))
                .collect();
            println!("{:>12} | {}", kind.name(), row.join("  "));
        }
        // nesting-seeded PGD is non-increasing and dominated by FGSM
        let pgd: Vec<f64> = cells
            .iter()
            .filter(|c| c.kind == AttackKind::Pgd)
            .map(|c| c.result.robust_accuracy)
            .collect();
        assert!(pgd.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        println!();
    }
    Ok(())
}
