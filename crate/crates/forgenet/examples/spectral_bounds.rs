//! Bound analysis: spectral norms, Gershgorin disks, empirical Lipschitz
//! constants over observed data, and the column-masking shrinkage that
//! thresholding induces.
//!
//! Run with: cargo run --release -p forgenet --example spectral_bounds

use forgenet::data::{synth_blobs, Split};
use forgenet::lipschitz::{
    empirical_lipschitz, gershgorin_bound, gram, layer_bound_report, mask_columns, spectral_norm,
};
use forgenet::net::{presets, InsertPolicy};
use forgenet::train::{calibrate_forge, train, Optimizer, TrainConfig};
use forgenet::Tensor;

fn main() -> forgenet::Result<()> {
    // Matrix-level view first: thresholding an input coordinate to zero is
    // the same as zeroing that column of the gram matrix, and the
    // Gershgorin bound can only shrink.
    let w = Tensor::matrix(
        3,
        3,
        vec![1.2, -0.4, 0.3, 0.7, 0.9, -0.2, -0.5, 0.1, 1.1],
    );
    let a = gram(&w)?;
    let full = gershgorin_bound(&a)?;
    println!("gram matrix Gershgorin bound: {full:.6}");
    for masked in [vec![0usize], vec![0, 2], vec![0, 1, 2]] {
        let shrunk = gershgorin_bound(&mask_columns(&a, &masked)?)?;
        println!("  masked columns {masked:?}: bound {shrunk:.6}");
        assert!(shrunk <= full);
    }
    let sigma = spectral_norm(&w)?;
    println!(
        "spectral norm {:.6} (sigma^2 = {:.6} <= Gershgorin bound {full:.6})\n",
        sigma.value,
        sigma.value * sigma.value
    );

    // Observed data tightens the picture further.
    let seed = 11;
    let train_ds = synth_blobs(3, 4, 250, 5.0, seed, Split::Train)?;
    let cfg = TrainConfig {
        epochs: 15,
        batch_size: 25,
        learning_rate: 0.3,
        optimizer: Optimizer::Sgd,
        adversarial: None,
        seed,
    };
    let (model, _) = train(&presets::mlp_blobs(4, 3, seed)?, &train_ds, None, &cfg)?;
    let mut hardened = model.insert_forge(&InsertPolicy::All)?;
    hardened.set_c_ratio((2.0f64).powi(-6))?;
    calibrate_forge(&mut hardened, &train_ds)?;

    let inputs: Vec<Tensor> = train_ds.inputs.iter().take(60).cloned().collect();
    let report = layer_bound_report(&hardened, &inputs, false)?;
    println!("per-layer bounds for the hardened model (60 observed samples):");
    println!(
        "{:>5} {:>8} {:>10} {:>12} {:>11} {:>12} {:>12}",
        "layer", "form", "sigma_max", "gershgorin", "empirical", "masked_mean", "masked_max"
    );
    for lb in &report.layers {
        let (mm, mx) = lb
            .masked
            .as_ref()
            .map(|m| (format!("{:.6}", m.mean), format!("{:.6}", m.max)))
            .unwrap_or(("-".into(), "-".into()));
        println!(
            "{:>5} {:>8} {:>10.6} {:>12.6} {:>11.6} {:>12} {:>12}",
            lb.layer_index,
            lb.form.label(),
            lb.spectral.value,
            lb.gershgorin,
            lb.empirical.unwrap_or(f64::NAN),
            mm,
            mx
        );
        if let Some(m) = &lb.masked {
            assert_eq!(m.violations, 0, "masked bounds never exceed unmasked");
        }
    }
    println!("product bound over layers: {:.6}", report.product_bound);

    // The empirical constant never exceeds the spectral norm.
    let first = model
        .layers
        .iter()
        .find_map(|l| l.explicit_matrix())
        .unwrap();
    let emp = empirical_lipschitz(&first, &inputs)?;
    let sig = spectral_norm(&first)?.value;
    println!("\nfirst layer: empirical {emp:.6} <= spectral {sig:.6}");
    Ok(())
}
