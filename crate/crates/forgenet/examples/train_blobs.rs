//! Trains a small classifier on synthetic blobs twice, standard and PGD
//! adversarial, then compares robust accuracy at the training radius.
//!
//! Run with: cargo run --release -p forgenet --example train_blobs

use forgenet::attack::{run_attack, AttackConfig, AttackKind};
use forgenet::data::{synth_blobs, Split};
use forgenet::net::presets;
use forgenet::train::{train, Optimizer, TrainConfig};

fn main() -> forgenet::Result<()> {
    let seed = 42;
    let train_ds = synth_blobs(3, 4, 300, 6.0, seed, Split::Train)?;
    let test_ds = synth_blobs(3, 4, 90, 6.0, seed, Split::Test)?;
    let model = presets::mlp_blobs(4, 3, seed)?;

    let epsilon = 16.0 / 255.0;
    let standard_cfg = TrainConfig {
        epochs: 40,
        batch_size: 32,
        learning_rate: 0.3,
        optimizer: Optimizer::Sgd,
        adversarial: None,
        seed,
    };
    let adversarial_cfg = TrainConfig {
        adversarial: Some(
            AttackConfig::new(AttackKind::Pgd, epsilon)
                .with_steps(7)
                .with_seed(seed),
        ),
        ..standard_cfg.clone()
    };

    println!("training standard model...");
    let (standard, curve) = train(&model, &train_ds, Some(&test_ds), &standard_cfg)?;
    let last = curve.last().unwrap();
    println!(
        "  final train accuracy {:.4}, test accuracy {:.4}",
        last.train_accuracy,
        last.test_accuracy.unwrap()
    );

    println!("training adversarial model (PGD inner maximization)...");
    let (robust, curve) = train(&model, &train_ds, Some(&test_ds), &adversarial_cfg)?;
    let last = curve.last().unwrap();
    println!(
        "  final train accuracy {:.4}, test accuracy {:.4}",
        last.train_accuracy,
        last.test_accuracy.unwrap()
    );

    println!("\nPGD evaluation at eps = 16/255 (10 steps):");
    let attack = AttackConfig::new(AttackKind::Pgd, epsilon).with_seed(seed);
    for (name, m) in [("standard", &standard), ("adversarial", &robust)] {
        let result = run_attack(m, &test_ds, &attack, false)?;
        println!(
            "  {name:<12} clean {:.4}  robust {:.4}",
            result.clean_accuracy, result.robust_accuracy
        );
    }
    Ok(())
}
