//! Inserts threshold layers into a trained model, calibrates them with a
//! single dataset scan, and sweeps the threshold-ratio grid the way the
//! ablation protocol does: standard and robust accuracy per grid point.
//!
//! Run with: cargo run --release -p forgenet --example forge_calibration

use forgenet::attack::{run_attack, AttackConfig, AttackKind};
use forgenet::data::{synth_blobs, Split};
use forgenet::net::{presets, InsertPolicy};
use forgenet::train::{calibrate_forge, train, Optimizer, TrainConfig};
use forgenet::Tensor;

fn main() -> forgenet::Result<()> {
    let seed = 7;
    let train_ds = synth_blobs(3, 4, 300, 6.0, seed, Split::Train)?;
    let test_ds = synth_blobs(3, 4, 120, 6.0, seed, Split::Test)?;

    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 32,
        learning_rate: 0.3,
        optimizer: Optimizer::Sgd,
        adversarial: Some(
            AttackConfig::new(AttackKind::Pgd, 16.0 / 255.0)
                .with_steps(7)
                .with_seed(seed),
        ),
        seed,
    };
    println!("training a robust base model...");
    let (base, _) = train(&presets::mlp_blobs(4, 3, seed)?, &train_ds, None, &cfg)?;

    // Identity check: with c_ratio = 0 the hardened model is the original.
    let forged = base.insert_forge(&InsertPolicy::All)?;
    let x = Tensor::stack(&[&test_ds.inputs[0]])?;
    assert_eq!(
        base.forward(&x)?.data(),
        forged.forward(&x)?.data(),
        "zero-ratio threshold layers must be exact identities"
    );
    println!("identity check passed: c_ratio = 0 leaves logits bit-identical\n");

    let attack = AttackConfig::new(AttackKind::Pgd, 16.0 / 255.0).with_seed(seed);
    let baseline = run_attack(&base, &test_ds, &attack, false)?;
    println!(
        "{:<12} {:>9} {:>9}",
        "c_ratio", "acc_nat", "acc_pgd"
    );
    println!(
        "{:<12} {:>9.4} {:>9.4}",
        "original", baseline.clean_accuracy, baseline.robust_accuracy
    );

    // The candidate grid: 2^-8, 2^-7, 2^-6.
    for exponent in [-8i32, -7, -6] {
        let c_ratio = (2.0f64).powi(exponent);
        let mut hardened = base.insert_forge(&InsertPolicy::All)?;
        hardened.set_c_ratio(c_ratio)?;
        let stats = calibrate_forge(&mut hardened, &train_ds)?;
        assert_eq!(stats.backward_passes, 0, "calibration is gradient-free");
        let result = run_attack(&hardened, &test_ds, &attack, false)?;
        println!(
            "{:<12} {:>9.4} {:>9.4}",
            format!("2^{exponent}"),
            result.clean_accuracy,
            result.robust_accuracy
        );
    }

    println!("\nper-layer thresholds at c_ratio = 2^-7:");
    let mut hardened = base.insert_forge(&InsertPolicy::All)?;
    hardened.set_c_ratio((2.0f64).powi(-7))?;
    let stats = calibrate_forge(&mut hardened, &train_ds)?;
    for (layer, b, c_th) in &stats.per_layer {
        println!("  layer {layer}: tracked max b = {b:.6}, threshold = {c_th:.8}");
    }
    println!(
        "calibration cost: {} forward passes, {} backward passes",
        stats.forward_passes, stats.backward_passes
    );
    Ok(())
}
