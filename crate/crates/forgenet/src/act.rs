//! Scalar activation kernels and their derivatives.
//!
//! Both the plain inference path and the gradient tape evaluate these same
//! functions, so the two paths produce bit-identical activations.

use crate::special::{erf, normal_cdf, normal_pdf};
use std::f64::consts::SQRT_2;

pub fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn relu_prime(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn silu(v: f64) -> f64 {
    v * sigmoid(v)
}

pub fn silu_prime(v: f64) -> f64 {
    let s = sigmoid(v);
    s * (1.0 + v * (1.0 - s))
}

pub fn gelu(v: f64) -> f64 {
    0.5 * v * (1.0 + erf(v / SQRT_2))
}

pub fn gelu_prime(v: f64) -> f64 {
    normal_cdf(v) + v * normal_pdf(v)
}

/// The thresholding rule: zero where |v| <= c_th, identity elsewhere.
pub fn forge_value(v: f64, c_th: f64) -> f64 {
    if v.abs() <= c_th {
        0.0
    } else {
        v
    }
}

/// Derivative of the thresholding rule almost everywhere: 1 on the pass
/// band, 0 on the suppressed band.
pub fn forge_prime(v: f64, c_th: f64) -> f64 {
    if v.abs() <= c_th {
        0.0
    } else {
        1.0
    }
}

/// log(sum(exp(row))) with max subtraction.
pub fn logsumexp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy of a softmax over `logits` against the true class.
pub fn cross_entropy_from_logits(logits: &[f64], label: usize) -> f64 {
    logsumexp(logits) - logits[label]
}

/// CW-style attack objective from raw logits with confidence margin zero:
/// min(max_{j != y} z_j - z_y, 0). Zero once the sample is misclassified.
pub fn margin_attack_from_logits(logits: &[f64], label: usize) -> f64 {
    let mut best_other = f64::NEG_INFINITY;
    for (j, &z) in logits.iter().enumerate() {
        if j != label && z > best_other {
            best_other = z;
        }
    }
    (best_other - logits[label]).min(0.0)
}
