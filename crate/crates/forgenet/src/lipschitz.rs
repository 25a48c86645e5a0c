//! Bound computations: spectral norms by power iteration, Gershgorin disks
//! and bounds, empirical Lipschitz constants over observed data, column
//! masking, and the per-layer bound report.
//!
//! The key inequality chain: for a linear layer `W` with gram matrix
//! `A = W^T W`, every eigenvalue of `A` lies in the union of its Gershgorin
//! disks, so `max_i(|a_ii| + r_i)` bounds `lambda_max(A) = sigma_max(W)^2`.
//! Zeroing input coordinates zeroes the matching columns of `A`, which can
//! only move disk centers toward zero and shrink radii, so the bound for the
//! masked matrix never exceeds the unmasked one.

use crate::conv;
use crate::error::{Error, Result};
use crate::net::{Layer, Model};
use crate::tensor::{matmul, Tensor};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Global Lipschitz constant of the SiLU activation, reported as an external
/// constant (not derived here).
pub const SILU_LIPSCHITZ: f64 = 1.1;
/// Global Lipschitz constant of the GELU activation, reported as an external
/// constant (not derived here).
pub const GELU_LIPSCHITZ: f64 = 1.13;

/// Power iteration is seeded from this constant so reports are reproducible.
const POWER_SEED: u64 = 0x51ee_7a11_0f0e_d155;
const POWER_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITERATIONS: usize = 5000;

/// Largest-singular-value estimate with convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub converged: bool,
    /// Relative change between the last two estimates.
    pub achieved_tolerance: f64,
    pub iterations: usize,
}

/// Largest singular value of `W` by power iteration on `W^T W`, starting
/// from a fixed seeded random vector. Converged when successive estimates
/// differ by less than 1e-10 relative, capped at 5000 iterations; an
/// unconverged result is flagged with the tolerance it reached.
pub fn spectral_norm(w: &Tensor) -> Result<SpectralEstimate> {
    let (_, n) = w.dims2()?;
    if !w.is_finite() {
        return Err(Error::Numeric("spectral norm of a non-finite matrix".into()));
    }
    if w.data().iter().all(|&v| v == 0.0) {
        return Ok(SpectralEstimate {
            value: 0.0,
            converged: true,
            achieved_tolerance: 0.0,
            iterations: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..n)
        .map(|_| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
        .collect();
    normalize(&mut v);

    let wt = w.transposed()?;
    let mut sigma_prev = 0.0f64;
    let mut rel = f64::INFINITY;
    for iter in 1..=POWER_MAX_ITERATIONS {
        let u = apply(w, &v);
        let sigma = norm(&u);
        if sigma == 0.0 {
            // v landed in the null space; vanishing odds with a random start
            return Ok(SpectralEstimate {
                value: 0.0,
                converged: false,
                achieved_tolerance: f64::INFINITY,
                iterations: iter,
            });
        }
        let mut next = apply(&wt, &u);
        normalize(&mut next);
        v = next;
        rel = (sigma - sigma_prev).abs() / sigma;
        if rel < POWER_TOLERANCE {
            return Ok(SpectralEstimate {
                value: sigma,
                converged: true,
                achieved_tolerance: rel,
                iterations: iter,
            });
        }
        sigma_prev = sigma;
    }
    Ok(SpectralEstimate {
        value: sigma_prev,
        converged: false,
        achieved_tolerance: rel,
        iterations: POWER_MAX_ITERATIONS,
    })
}

fn apply(m: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = m.dims2().expect("matrix");
    let mut out = vec![0.0; rows];
    for i in 0..rows {
        let row = &m.data()[i * cols..(i + 1) * cols];
        out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    out
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let n = norm(x);
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
}

/// Gram matrix `W^T W` (real case of the conjugate-transpose product).
pub fn gram(w: &Tensor) -> Result<Tensor> {
    matmul(&w.transposed()?, w)
}

/// One Gershgorin disk per matrix row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GershgorinDisk {
    pub row: usize,
    /// Diagonal entry.
    pub center: f64,
    /// Sum of off-diagonal absolute values in the row.
    pub radius: f64,
}

impl GershgorinDisk {
    /// Whether a complex point lies in this disk, within `tol`.
    pub fn contains(&self, re: f64, im: f64, tol: f64) -> bool {
        let dr = re - self.center;
        (dr * dr + im * im).sqrt() <= self.radius + tol
    }
}

pub fn gershgorin_disks(a: &Tensor) -> Result<Vec<GershgorinDisk>> {
    let (n, m) = a.dims2()?;
    if n != m {
        return Err(Error::dimension(
            "gershgorin disks",
            "square matrix",
            format!("{n}x{m}"),
        ));
    }
    let mut disks = Vec::with_capacity(n);
    for i in 0..n {
        let row = &a.data()[i * n..(i + 1) * n];
        let center = row[i];
        let radius: f64 = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| v.abs())
            .sum();
        disks.push(GershgorinDisk {
            row: i,
            center,
            radius,
        });
    }
    Ok(disks)
}

/// Upper bound on the modulus of every eigenvalue:
/// `max_i (|a_ii| + radius_i)`.
pub fn gershgorin_bound(a: &Tensor) -> Result<f64> {
    Ok(gershgorin_disks(a)?
        .iter()
        .map(|d| d.center.abs() + d.radius)
        .fold(0.0, f64::max))
}

/// Copy of `a` with the given columns zeroed. Realizes the identity
/// `A f_forge(t) = A' t` for inputs whose masked coordinates are suppressed.
pub fn mask_columns(a: &Tensor, masked: &[usize]) -> Result<Tensor> {
    let (n, m) = a.dims2()?;
    if let Some(&bad) = masked.iter().find(|&&j| j >= m) {
        return Err(Error::Contract(format!(
            "masked column {bad} out of range for {m} columns"
        )));
    }
    let mut out = a.clone();
    for i in 0..n {
        for &j in masked {
            out.set2(i, j, 0.0);
        }
    }
    Ok(out)
}

/// Gershgorin bound of `mask_columns(a, masked)` computed without
/// materializing the masked matrix.
pub fn masked_gershgorin_bound(a: &Tensor, masked: &[bool]) -> Result<f64> {
    let (n, m) = a.dims2()?;
    if n != m || masked.len() != n {
        return Err(Error::dimension(
            "masked gershgorin bound",
            format!("square matrix with {n} mask flags"),
            format!("{n}x{m}, {} flags", masked.len()),
        ));
    }
    let mut bound: f64 = 0.0;
    for i in 0..n {
        let row = &a.data()[i * n..(i + 1) * n];
        let center = if masked[i] { 0.0 } else { row[i] };
        let radius: f64 = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i && !masked[*j])
            .map(|(_, v)| v.abs())
            .sum();
        bound = bound.max(center.abs() + radius);
    }
    Ok(bound)
}

/// Empirical Lipschitz constant: `max_{x in S} ||W x|| / ||x||` over the
/// observed inputs, skipping zero vectors.
pub fn empirical_lipschitz(w: &Tensor, inputs: &[Tensor]) -> Result<f64> {
    let (_, cols) = w.dims2()?;
    if inputs.is_empty() {
        return Err(Error::Contract(
            "empirical Lipschitz constant of an empty dataset".into(),
        ));
    }
    let mut best: Option<f64> = None;
    for x in inputs {
        if x.len() != cols {
            return Err(Error::dimension(
                "empirical Lipschitz input",
                format!("{cols} elements"),
                format!("{}", x.len()),
            ));
        }
        let xn = x.l2_norm();
        if xn == 0.0 {
            continue;
        }
        let wx = apply(w, x.data());
        let ratio = norm(&wx) / xn;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or_else(|| {
        Error::Numeric("empirical Lipschitz ratio undefined: every input is the zero vector".into())
    })
}

/// How a layer's explicit matrix was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixForm {
    /// The dense weight matrix itself.
    Dense,
    /// The `[OC, C*KH*KW]` patch matrix; bounds are per receptive-field
    /// patch and conditional on the configured input shape.
    Im2col,
}

impl MatrixForm {
    pub fn label(self) -> &'static str {
        match self {
            MatrixForm::Dense => "dense",
            MatrixForm::Im2col => "im2col",
        }
    }
}

/// Masked-bound statistics over a dataset for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBoundStats {
    pub mean: f64,
    pub max: f64,
    pub samples: usize,
    /// Samples whose masked bound exceeded the unmasked bound (expected 0).
    pub violations: usize,
}

/// Bounds for one linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBound {
    pub layer_index: usize,
    pub form: MatrixForm,
    pub spectral: SpectralEstimate,
    /// Gershgorin bound on lambda_max of the gram matrix (so on sigma_max^2).
    pub gershgorin: f64,
    /// Empirical constant over the layer's actual inputs from the dataset;
    /// absent when every observed input was the zero vector.
    pub empirical: Option<f64>,
    /// Present when a threshold layer immediately precedes this one.
    pub masked: Option<MaskedBoundStats>,
    /// Per-sample masked bounds (index, masked, unmasked), kept when
    /// requested.
    pub per_sample: Vec<(usize, f64, f64)>,
}

/// Non-unit activation constants included in the product bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationFactor {
    pub layer_index: usize,
    pub kind: String,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub layers: Vec<LayerBound>,
    /// SiLU/GELU factors folded into the product bound; flagged as external
    /// constants. ReLU, threshold, and flatten layers contribute factor 1.
    pub activation_factors: Vec<ActivationFactor>,
    /// Product of per-layer spectral norms and activation constants.
    pub product_bound: f64,
}

/// Computes per-layer bounds over the given observed inputs.
///
/// For each dense/conv layer: spectral norm of the explicit matrix, the
/// Gershgorin bound of its gram matrix, the empirical Lipschitz constant
/// over the layer's actual inputs, and, when a threshold layer immediately
/// precedes it, per-input masked Gershgorin bounds (mean and max).
pub fn layer_bound_report(
    model: &Model,
    inputs: &[Tensor],
    keep_per_sample: bool,
) -> Result<BoundReport> {
    if inputs.is_empty() {
        return Err(Error::Contract("bound report over an empty dataset".into()));
    }
    if model.linear_indices().is_empty() {
        return Err(Error::Contract("model has no linear layers".into()));
    }

    // Activations per sample: acts[s][j] = output of layer j on sample s.
    let mut acts: Vec<Vec<Tensor>> = Vec::with_capacity(inputs.len());
    for x in inputs {
        let batch = Tensor::stack(&[x])?;
        let (_, collected) = model.forward_collect(&batch)?;
        acts.push(collected);
    }

    let mut layers = Vec::new();
    let mut product = 1.0;
    let mut factors = Vec::new();

    for (i, layer) in model.layers.iter().enumerate() {
        match layer {
            Layer::Relu | Layer::Forge(_) | Layer::Flatten => {}
            Layer::Silu => {
                product *= SILU_LIPSCHITZ;
                factors.push(ActivationFactor {
                    layer_index: i,
                    kind: "silu".into(),
                    constant: SILU_LIPSCHITZ,
                });
            }
            Layer::Gelu => {
                product *= GELU_LIPSCHITZ;
                factors.push(ActivationFactor {
                    layer_index: i,
                    kind: "gelu".into(),
                    constant: GELU_LIPSCHITZ,
                });
            }
            Layer::Dense { .. } | Layer::Conv2d { .. } => {
                let matrix = layer
                    .explicit_matrix()
                    .expect("linear layers have explicit matrices");
                let form = match layer {
                    Layer::Dense { .. } => MatrixForm::Dense,
                    _ => MatrixForm::Im2col,
                };
                let spectral = spectral_norm(&matrix)?;
                product *= spectral.value;
                let a = gram(&matrix)?;
                let gersh = gershgorin_bound(&a)?;

                // The layer's actual inputs: activation rows for dense,
                // im2col patch rows for conv.
                let mut observed: Vec<Tensor> = Vec::new();
                for s in 0..inputs.len() {
                    let input_act = if i == 0 {
                        Tensor::stack(&[&inputs[s]])?
                    } else {
                        acts[s][i - 1].clone()
                    };
                    observed.extend(layer_input_vectors(layer, &input_act)?);
                }
                let empirical = match empirical_lipschitz(&matrix, &observed) {
                    Ok(v) => Some(v),
                    Err(Error::Numeric(_)) => None,
                    Err(e) => return Err(e),
                };

                // Masked bounds when the previous layer is a threshold layer.
                let masked = if i > 0 {
                    if let Layer::Forge(state) = &model.layers[i - 1] {
                        let c_th = state.threshold();
                        let mut sum = 0.0;
                        let mut max: f64 = 0.0;
                        let mut violations = 0;
                        let mut per_sample = Vec::new();
                        for (s, x) in inputs.iter().enumerate() {
                            // Input to the threshold layer (pre-suppression).
                            let pre = if i >= 2 {
                                acts[s][i - 2].clone()
                            } else {
                                Tensor::stack(&[x])?
                            };
                            let bound = masked_bound_for_sample(layer, &a, &pre, c_th)?;
                            sum += bound;
                            max = max.max(bound);
                            if bound > gersh + 1e-12 {
                                violations += 1;
                            }
                            if keep_per_sample {
                                per_sample.push((s, bound, gersh));
                            }
                        }
                        Some((
                            MaskedBoundStats {
                                mean: sum / inputs.len() as f64,
                                max,
                                samples: inputs.len(),
                                violations,
                            },
                            per_sample,
                        ))
                    } else {
                        None
                    }
                } else {
                    None
                };
                let (masked_stats, per_sample) = match masked {
                    Some((stats, per_sample)) => (Some(stats), per_sample),
                    None => (None, Vec::new()),
                };

                layers.push(LayerBound {
                    layer_index: i,
                    form,
                    spectral,
                    gershgorin: gersh,
                    empirical,
                    masked: masked_stats,
                    per_sample,
                });
            }
        }
    }

    Ok(BoundReport {
        layers,
        activation_factors: factors,
        product_bound: product,
    })
}

/// The vectors a linear layer actually multiplies: the activation row for a
/// dense layer, every im2col patch for a conv layer.
fn layer_input_vectors(layer: &Layer, input_act: &Tensor) -> Result<Vec<Tensor>> {
    match layer {
        Layer::Dense { .. } => {
            let flat = input_act.reshape(vec![input_act.len()])?;
            Ok(vec![flat])
        }
        Layer::Conv2d {
            kernel,
            stride,
            padding,
            ..
        } => {
            let [_, _, kh, kw] = conv::nchw_dims(kernel)?;
            let (cols, _, _) = conv::im2col(input_act, kh, kw, *stride, *padding)?;
            let (rows, width) = cols.dims2()?;
            Ok((0..rows)
                .map(|r| {
                    Tensor::vector(cols.data()[r * width..(r + 1) * width].to_vec())
                })
                .collect())
        }
        _ => Ok(Vec::new()),
    }
}

/// Per-sample masked Gershgorin bound for the layer that follows a
/// threshold layer. Suppressed coordinates of the observed pre-threshold
/// input become masked columns of the layer's gram matrix. A zero threshold
/// suppresses nothing, so the mask is empty and the bound is unmasked.
fn masked_bound_for_sample(layer: &Layer, a: &Tensor, pre: &Tensor, c_th: f64) -> Result<f64> {
    let (n, _) = a.dims2()?;
    match layer {
        Layer::Dense { .. } => {
            let mut flags = vec![false; n];
            if c_th > 0.0 {
                for (j, &v) in pre.data().iter().enumerate() {
                    if v.abs() <= c_th {
                        flags[j] = true;
                    }
                }
            }
            masked_gershgorin_bound(a, &flags)
        }
        Layer::Conv2d {
            kernel,
            stride,
            padding,
            ..
        } => {
            let [_, _, kh, kw] = conv::nchw_dims(kernel)?;
            // Lower a suppression indicator map through im2col; a patch entry
            // of 1 means that patch coordinate was suppressed.
            let indicator = if c_th > 0.0 {
                pre.map(|v| if v.abs() <= c_th { 1.0 } else { 0.0 })
            } else {
                pre.map(|_| 0.0)
            };
            let (cols, _, _) = conv::im2col(&indicator, kh, kw, *stride, *padding)?;
            let (rows, width) = cols.dims2()?;
            let mut worst: f64 = 0.0;
            let mut flags = vec![false; width];
            for r in 0..rows {
                let row = &cols.data()[r * width..(r + 1) * width];
                for (f, &v) in flags.iter_mut().zip(row) {
                    *f = v == 1.0;
                }
                worst = worst.max(masked_gershgorin_bound(a, &flags)?);
            }
            Ok(worst)
        }
        _ => Err(Error::Contract(
            "masked bound requested for a non-linear layer".into(),
        )),
    }
}
