//! Property tests over the core invariants.

use forgenet::lipschitz::{gershgorin_bound, mask_columns};
use forgenet::net::{forge_apply, io, presets, InsertPolicy};
use forgenet::smoothing::clopper_pearson_lower;
use forgenet::tensor::{matmul, Tensor};
use proptest::prelude::*;

fn small_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len..=len)
}

proptest! {
    /// Thresholding twice is the same as thresholding once.
    #[test]
    fn forge_is_idempotent(values in small_vec(12), c_th in 0.0f64..5.0) {
        let x = Tensor::vector(values);
        let once = forge_apply(&x, c_th).unwrap();
        let twice = forge_apply(&once, c_th).unwrap();
        prop_assert_eq!(once, twice);
    }

    /// Every nonzero output element equals the corresponding input element.
    #[test]
    fn forge_outputs_come_from_the_input(values in small_vec(12), c_th in 0.0f64..5.0) {
        let x = Tensor::vector(values);
        let out = forge_apply(&x, c_th).unwrap();
        for (o, i) in out.data().iter().zip(x.data()) {
            prop_assert!(*o == 0.0 || o == i);
        }
    }

    /// Column masking can only shrink the Gershgorin bound (no tolerance).
    #[test]
    fn column_masking_shrinks_gershgorin(values in small_vec(25), mask_bits in 0u32..32) {
        let w = Tensor::matrix(5, 5, values);
        let a = matmul(&w.transposed().unwrap(), &w).unwrap();
        let masked: Vec<usize> = (0..5).filter(|j| mask_bits >> j & 1 == 1).collect();
        let full = gershgorin_bound(&a).unwrap();
        let shrunk = gershgorin_bound(&mask_columns(&a, &masked).unwrap()).unwrap();
        prop_assert!(shrunk <= full);
    }

    /// The Clopper-Pearson lower bound never exceeds the empirical rate.
    #[test]
    fn clopper_pearson_is_a_lower_bound(k in 0usize..=60, alpha in 0.0001f64..0.5) {
        let n = 60usize;
        let lb = clopper_pearson_lower(k, n, alpha);
        prop_assert!(lb <= k as f64 / n as f64 + 1e-12);
        prop_assert!((0.0..=1.0).contains(&lb));
    }

    /// Zero-ratio threshold layers leave any model's logits bit-identical.
    #[test]
    fn zero_ratio_insertion_is_identity(seed in 0u64..500, x0 in 0.0f64..1.0, x1 in 0.0f64..1.0, x2 in 0.0f64..1.0) {
        let model = presets::mlp("prop", &[3, 8, 4, 2], presets::Activation::Relu, seed).unwrap();
        let forged = model.insert_forge(&InsertPolicy::All).unwrap();
        let batch = Tensor::matrix(1, 3, vec![x0, x1, x2]);
        let plain = model.forward(&batch).unwrap();
        let hardened = forged.forward(&batch).unwrap();
        prop_assert_eq!(plain.data(), hardened.data());
    }

    /// Model files round-trip bit-exactly for arbitrary seeds and shapes.
    #[test]
    fn model_serialization_round_trips(seed in 0u64..1000, hidden in 2usize..10, c_ratio in 0.0f64..0.1) {
        let model = presets::mlp("prop", &[3, hidden, 2], presets::Activation::Silu, seed).unwrap();
        let mut forged = model.insert_forge(&InsertPolicy::All).unwrap();
        forged.set_c_ratio(c_ratio).unwrap();
        let text = io::model_to_string(&forged);
        let back = io::model_from_str(&text).unwrap();
        prop_assert_eq!(forged, back);
    }

    /// Mean cross-entropy gradients flow even under extreme logits.
    #[test]
    fn cross_entropy_is_finite_for_large_logits(scale in 1.0f64..500.0) {
        let mut tape = forgenet::autodiff::Tape::new();
        let logits = tape.leaf(Tensor::matrix(1, 3, vec![scale, -scale, 0.0]));
        let loss = tape.softmax_cross_entropy(logits, &[1]).unwrap();
        let value = tape.value(loss).scalar_value().unwrap();
        prop_assert!(value.is_finite());
        let grads = tape.backward(loss).unwrap();
        prop_assert!(grads.wrt(logits).unwrap().is_finite());
    }
}
