//! Gradient-based and gradient-free attacks under an L-infinity budget,
//! plus the evaluation protocols built on them: epsilon sweeps with nested
//! seeding, transfer attacks, and candidate-augmented runs.
//!
//! Iterative attacks keep a candidate set per sample (the one-step point,
//! every iterate, and any caller-supplied warm starts). The returned
//! adversarial example is the best candidate, where a misclassifying
//! candidate always beats a non-misclassifying one and ties break by attack
//! loss then by encounter order. Because the candidate set of a PGD run
//! contains the one-step point, and a sweep at a larger radius contains the
//! previous radius' adversary, the dominance properties hold exactly rather
//! than statistically.

use crate::act;
use crate::autodiff::Tape;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::Model;
use crate::tensor::{argmax, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The default epsilon grid, in 1/255 units.
pub const DEFAULT_EPSILON_GRID_255: [u32; 8] = [1, 2, 4, 8, 16, 32, 64, 96];

/// Default attack radius (8/255).
pub fn default_epsilon() -> f64 {
    8.0 / 255.0
}

/// The default epsilon grid as input-unit radii.
pub fn default_epsilon_grid() -> Vec<f64> {
    DEFAULT_EPSILON_GRID_255
        .iter()
        .map(|&n| n as f64 / 255.0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Fgsm,
    Pgd,
    /// PGD driven by the margin objective (CW-style with kappa = 0).
    PgdMargin,
    /// Gradient-free random sign-pattern search at the epsilon boundary.
    RandomSearch,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::PgdMargin => "pgd-margin",
            AttackKind::RandomSearch => "random-search",
        }
    }

    pub fn parse(s: &str) -> Result<AttackKind> {
        match s {
            "fgsm" => Ok(AttackKind::Fgsm),
            "pgd" => Ok(AttackKind::Pgd),
            "pgd-margin" => Ok(AttackKind::PgdMargin),
            "random-search" => Ok(AttackKind::RandomSearch),
            other => Err(Error::Config(format!("unknown attack kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// L-infinity radius in input units.
    pub epsilon: f64,
    /// Iterations (PGD) or query budget (random search).
    pub steps: usize,
    /// Per-step size; defaults to 2.5 * epsilon / steps when unset.
    pub step_size: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(kind: AttackKind, epsilon: f64) -> AttackConfig {
        AttackConfig {
            kind,
            epsilon,
            steps: 10,
            step_size: None,
            restarts: 1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> AttackConfig {
        self.seed = seed;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> AttackConfig {
        self.steps = steps;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> AttackConfig {
        self.restarts = restarts;
        self
    }

    pub fn effective_step_size(&self) -> f64 {
        self.step_size
            .unwrap_or(2.5 * self.epsilon / self.steps.max(1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 || !self.epsilon.is_finite() {
            return Err(Error::Contract(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        if self.restarts < 1 {
            return Err(Error::Contract("restarts must be >= 1".into()));
        }
        match self.kind {
            AttackKind::Pgd | AttackKind::PgdMargin => {
                if self.steps < 1 {
                    return Err(Error::Contract("pgd needs steps >= 1".into()));
                }
            }
            AttackKind::Fgsm | AttackKind::RandomSearch => {}
        }
        if let Some(s) = self.step_size {
            if s < 0.0 || !s.is_finite() {
                return Err(Error::Contract(format!("invalid step size {s}")));
            }
        }
        Ok(())
    }

    /// Short config echo for report rows.
    pub fn provenance(&self) -> String {
        format!(
            "kind={} eps={} steps={} step_size={} restarts={} seed={}",
            self.kind.name(),
            self.epsilon,
            self.steps,
            self.effective_step_size(),
            self.restarts,
            self.seed
        )
    }
}

/// Per-sample attack outcome.
#[derive(Debug, Clone)]
pub struct SampleAttack {
    pub adversarial: Tensor,
    /// Whether the model misclassifies the adversarial example.
    pub success: bool,
    /// Attack loss attained at the returned example.
    pub loss: f64,
}

/// Dataset-level attack outcome.
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub clean_accuracy: f64,
    pub robust_accuracy: f64,
    pub success: Vec<bool>,
    /// Retained adversarial examples when requested.
    pub adversarial: Option<Vec<Tensor>>,
    pub config: AttackConfig,
}

/// Loss value and input gradient of the attack objective at `x`.
fn loss_and_input_gradient(
    model: &Model,
    x: &Tensor,
    label: usize,
    margin: bool,
    sample: usize,
) -> Result<(f64, Tensor)> {
    let mut tape = Tape::new();
    let leaf = tape.leaf(Tensor::stack(&[x])?);
    let fwd = model.forward_on_tape(&mut tape, leaf)?;
    let loss_id = if margin {
        tape.margin_attack_loss(fwd.output, &[label])?
    } else {
        tape.softmax_cross_entropy(fwd.output, &[label])?
    };
    let loss = tape.value(loss_id).scalar_value()?;
    let grads = tape.backward(loss_id)?;
    let g = grads
        .wrt(leaf)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(tape.value(leaf).shape().to_vec()));
    if !g.is_finite() || !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite gradient at sample {sample}"
        )));
    }
    Ok((loss, g.reshape(x.shape().to_vec())?))
}

fn logits_of(model: &Model, x: &Tensor) -> Result<Vec<f64>> {
    let out = model.forward(&Tensor::stack(&[x])?)?;
    let (_, c) = out.dims2()?;
    Ok(out.data()[..c].to_vec())
}

/// success flag and attack loss of a candidate under the chosen objective.
fn evaluate_candidate(model: &Model, x: &Tensor, label: usize, margin: bool) -> Result<(bool, f64)> {
    let logits = logits_of(model, x)?;
    let success = argmax(&logits) != label;
    let loss = if margin {
        act::margin_attack_from_logits(&logits, label)
    } else {
        act::cross_entropy_from_logits(&logits, label)
    };
    Ok((success, loss))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_in_box(x: &Tensor) -> Result<()> {
    if x.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Contract("input lies outside the unit box".into()));
    }
    Ok(())
}

/// Per-coordinate feasible interval: the epsilon ball intersected with the
/// unit box.
fn feasible_bounds(x: &Tensor, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
    let lo: Vec<f64> = x.data().iter().map(|&v| (v - epsilon).max(0.0)).collect();
    let hi: Vec<f64> = x.data().iter().map(|&v| (v + epsilon).min(1.0)).collect();
    (lo, hi)
}

fn clamp_into(x: &Tensor, lo: &[f64], hi: &[f64]) -> Tensor {
    let data: Vec<f64> = x
        .data()
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| v.clamp(l, h))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Single-step signed-gradient attack:
/// `x_adv = clip(x + epsilon * sign(grad CE), [0,1])`.
pub fn fgsm(model: &Model, x: &Tensor, label: usize, epsilon: f64, sample: usize) -> Result<Tensor> {
    check_in_box(x)?;
    if epsilon < 0.0 {
        return Err(Error::Contract(format!("negative epsilon {epsilon}")));
    }
    let (_, g) = loss_and_input_gradient(model, x, label, false, sample)?;
    Ok(fgsm_from_gradient(x, &g, epsilon))
}

fn fgsm_from_gradient(x: &Tensor, g: &Tensor, epsilon: f64) -> Tensor {
    let data: Vec<f64> = x
        .data()
        .iter()
        .zip(g.data())
        .map(|(&v, &gv)| (v + epsilon * sign(gv)).clamp(0.0, 1.0))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Candidate tracker: success beats failure, then higher loss wins, then
/// the earlier candidate is kept.
struct Best {
    success: bool,
    loss: f64,
    example: Tensor,
}

impl Best {
    fn consider(&mut self, success: bool, loss: f64, example: &Tensor) {
        let better = (success, loss) > (self.success, self.loss);
        if better {
            self.success = success;
            self.loss = loss;
            self.example = example.clone();
        }
    }
}

/// Attacks one sample. `warm_starts` enter the candidate set after being
/// projected into the feasible region (used for sweep nesting and transfer
/// seeding).
pub fn attack_sample(
    model: &Model,
    x: &Tensor,
    label: usize,
    config: &AttackConfig,
    warm_starts: &[Tensor],
    sample: usize,
) -> Result<SampleAttack> {
    config.validate()?;
    check_in_box(x)?;
    let sample_seed = config.seed ^ sample as u64;
    match config.kind {
        AttackKind::Fgsm => {
            let adv = fgsm(model, x, label, config.epsilon, sample)?;
            let (success, loss) = evaluate_candidate(model, &adv, label, false)?;
            Ok(SampleAttack {
                adversarial: adv,
                success,
                loss,
            })
        }
        AttackKind::Pgd => pgd_sample(model, x, label, config, warm_starts, sample, sample_seed, false),
        AttackKind::PgdMargin => {
            pgd_sample(model, x, label, config, warm_starts, sample, sample_seed, true)
        }
        AttackKind::RandomSearch => {
            random_search_sample(model, x, label, config, warm_starts, sample_seed)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn pgd_sample(
    model: &Model,
    x: &Tensor,
    label: usize,
    config: &AttackConfig,
    warm_starts: &[Tensor],
    sample: usize,
    sample_seed: u64,
    margin: bool,
) -> Result<SampleAttack> {
    let eps = config.epsilon;
    let (lo, hi) = feasible_bounds(x, eps);
    let alpha = config.effective_step_size();
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);

    let mut best = if margin {
        // Zero-step admission: an already misclassified input succeeds as-is.
        let (success, loss) = evaluate_candidate(model, x, label, margin)?;
        Best {
            success,
            loss,
            example: x.clone(),
        }
    } else {
        Best {
            success: false,
            loss: f64::NEG_INFINITY,
            example: x.clone(),
        }
    };

    // Gradient at the clean point, shared by the one-step candidate and the
    // first step of restart 0.
    let (_, g0) = loss_and_input_gradient(model, x, label, margin, sample)?;
    let one_step = fgsm_from_gradient(x, &g0, eps);
    let (s, l) = evaluate_candidate(model, &one_step, label, margin)?;
    best.consider(s, l, &one_step);

    for start in warm_starts {
        let projected = clamp_into(start, &lo, &hi);
        let (s, l) = evaluate_candidate(model, &projected, label, margin)?;
        best.consider(s, l, &projected);
    }

    for restart in 0..config.restarts {
        let mut cur = if restart == 0 {
            x.clone()
        } else {
            let data: Vec<f64> = x
                .data()
                .iter()
                .zip(lo.iter().zip(&hi))
                .map(|(&v, (&l, &h))| (v + rng.random_range(-eps..=eps)).clamp(l, h))
                .collect();
            Tensor::new(x.shape().to_vec(), data)
        };
        for step in 0..config.steps {
            let g = if restart == 0 && step == 0 {
                g0.clone()
            } else {
                loss_and_input_gradient(model, &cur, label, margin, sample)?.1
            };
            let stepped: Vec<f64> = cur
                .data()
                .iter()
                .zip(g.data())
                .zip(lo.iter().zip(&hi))
                .map(|((&v, &gv), (&l, &h))| (v + alpha * sign(gv)).clamp(l, h))
                .collect();
            cur = Tensor::new(x.shape().to_vec(), stepped);
            let (s, l) = evaluate_candidate(model, &cur, label, margin)?;
            best.consider(s, l, &cur);
        }
    }

    Ok(SampleAttack {
        adversarial: best.example,
        success: best.success,
        loss: best.loss,
    })
}

fn random_search_sample(
    model: &Model,
    x: &Tensor,
    label: usize,
    config: &AttackConfig,
    warm_starts: &[Tensor],
    sample_seed: u64,
) -> Result<SampleAttack> {
    let (lo, hi) = feasible_bounds(x, config.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);

    // The zero perturbation is always a candidate; budget 0 returns x.
    let (success, loss) = evaluate_candidate(model, x, label, false)?;
    let mut best = Best {
        success,
        loss,
        example: x.clone(),
    };
    for start in warm_starts {
        let projected = clamp_into(start, &lo, &hi);
        let (s, l) = evaluate_candidate(model, &projected, label, false)?;
        best.consider(s, l, &projected);
    }
    for _ in 0..config.steps {
        let data: Vec<f64> = x
            .data()
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(&v, (&l, &h))| {
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                (v + config.epsilon * s).clamp(l, h)
            })
            .collect();
        let cand = Tensor::new(x.shape().to_vec(), data);
        let (s, l) = evaluate_candidate(model, &cand, label, false)?;
        best.consider(s, l, &cand);
    }
    Ok(SampleAttack {
        adversarial: best.example,
        success: best.success,
        loss: best.loss,
    })
}

/// Runs the configured attack over a dataset.
pub fn run_attack(
    model: &Model,
    data: &Dataset,
    config: &AttackConfig,
    keep_adversarial: bool,
) -> Result<AttackResult> {
    run_attack_with_candidates(model, data, config, None, keep_adversarial)
}

/// Like [`run_attack`], with optional per-sample warm-start candidates
/// (one per sample).
pub fn run_attack_with_candidates(
    model: &Model,
    data: &Dataset,
    config: &AttackConfig,
    warm_starts: Option<&[Tensor]>,
    keep_adversarial: bool,
) -> Result<AttackResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Contract("attack over an empty dataset".into()));
    }
    if data.classes != model.meta.classes {
        return Err(Error::Contract(format!(
            "model expects {} classes but dataset has {}",
            model.meta.classes, data.classes
        )));
    }
    if let Some(ws) = warm_starts {
        if ws.len() != data.len() {
            return Err(Error::Contract(format!(
                "{} warm starts for {} samples",
                ws.len(),
                data.len()
            )));
        }
    }
    let clean = model.accuracy(&data.inputs, &data.labels)?;
    let mut success = Vec::with_capacity(data.len());
    let mut kept = Vec::with_capacity(if keep_adversarial { data.len() } else { 0 });
    for (i, (x, &y)) in data.inputs.iter().zip(&data.labels).enumerate() {
        let ws = warm_starts.map(|w| std::slice::from_ref(&w[i])).unwrap_or(&[]);
        let outcome = attack_sample(model, x, y, config, ws, i)?;
        debug_assert!(feasible(x, &outcome.adversarial, config.epsilon));
        success.push(outcome.success);
        if keep_adversarial {
            kept.push(outcome.adversarial);
        }
    }
    // Same arithmetic as clean accuracy so a no-op attack matches it bitwise.
    let robust = success.iter().filter(|&&s| !s).count() as f64 / data.len() as f64;
    Ok(AttackResult {
        clean_accuracy: clean,
        robust_accuracy: robust,
        success,
        adversarial: keep_adversarial.then_some(kept),
        config: config.clone(),
    })
}

/// L-infinity feasibility of a finished adversarial example.
pub fn feasible(x: &Tensor, adv: &Tensor, epsilon: f64) -> bool {
    adv.data()
        .iter()
        .zip(x.data())
        .all(|(&a, &v)| (a - v).abs() <= epsilon + 1e-12 && (0.0..=1.0).contains(&a))
}

/// Adversaries crafted on `source`, accuracy measured on `target`.
pub fn transfer_attack(
    source: &Model,
    target: &Model,
    data: &Dataset,
    config: &AttackConfig,
) -> Result<AttackResult> {
    if source.meta.input_shape != target.meta.input_shape {
        return Err(Error::Contract(format!(
            "source and target input shapes differ: {:?} vs {:?}",
            source.meta.input_shape, target.meta.input_shape
        )));
    }
    let crafted = run_attack(source, data, config, true)?;
    let examples = crafted.adversarial.expect("retention requested");
    let clean = target.accuracy(&data.inputs, &data.labels)?;
    let mut success = Vec::with_capacity(data.len());
    for (adv, &y) in examples.iter().zip(&data.labels) {
        let pred = target.predict(&Tensor::stack(&[adv])?)?[0];
        success.push(pred != y);
    }
    let robust = success.iter().filter(|&&s| !s).count() as f64 / data.len() as f64;
    Ok(AttackResult {
        clean_accuracy: clean,
        robust_accuracy: robust,
        success,
        adversarial: Some(examples),
        config: config.clone(),
    })
}

/// One sweep cell: a kind, a radius, and the attack outcome there.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub result: AttackResult,
}

/// Full grid of robust accuracies over strictly increasing radii.
///
/// PGD-family columns are nesting-seeded: the adversary found at the
/// previous radius enters the next radius' candidate set, so those columns
/// are non-increasing by construction.
pub fn epsilon_sweep(
    model: &Model,
    data: &Dataset,
    kinds: &[AttackKind],
    epsilons: &[f64],
    base: &AttackConfig,
) -> Result<Vec<SweepCell>> {
    if epsilons.is_empty() || kinds.is_empty() {
        return Err(Error::Contract("empty attack grid".into()));
    }
    if epsilons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract(
            "epsilon grid must be strictly increasing".into(),
        ));
    }
    let mut cells = Vec::with_capacity(kinds.len() * epsilons.len());
    for &kind in kinds {
        let mut carry: Option<Vec<Tensor>> = None;
        for &eps in epsilons {
            let cfg = AttackConfig {
                kind,
                epsilon: eps,
                ..base.clone()
            };
            let nested = matches!(kind, AttackKind::Pgd | AttackKind::PgdMargin);
            let result = run_attack_with_candidates(
                model,
                data,
                &cfg,
                if nested { carry.as_deref() } else { None },
                true,
            )?;
            if nested {
                carry = result.adversarial.clone();
            }
            let slim = AttackResult {
                adversarial: None,
                ..result
            };
            cells.push(SweepCell {
                kind,
                epsilon: eps,
                result: slim,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::net::presets;
    use crate::net::{Layer, Model, ModelMeta};

    /// 1-D logistic model as a two-class softmax: logits = [0, w x].
    fn logistic_model(w: f64) -> Model {
        Model::new(
            vec![Layer::dense(
                Tensor::matrix(2, 1, vec![0.0, w]),
                Tensor::zeros(vec![2]),
            )
            .unwrap()],
            ModelMeta {
                name: "logistic".into(),
                input_shape: vec![1],
                classes: 2,
                seed: 0,
            },
        )
    }

    #[test]
    fn fgsm_on_logistic_model_matches_closed_form() {
        // At x = 0 with true class 1, dCE/dx = -(1 - sigma(0)) * w = -1 for
        // w = 2, so the step goes negative and clips to the box edge 0.
        let model = logistic_model(2.0);
        let x = Tensor::vector(vec![0.0]);
        let adv = fgsm(&model, &x, 1, 0.1, 0).unwrap();
        assert_eq!(adv.data(), &[0.0]);
        // From the interior the step moves by exactly epsilon.
        let x = Tensor::vector(vec![0.5]);
        let adv = fgsm(&model, &x, 1, 0.1, 0).unwrap();
        assert!((adv.data()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn fgsm_epsilon_zero_is_identity() {
        let model = logistic_model(2.0);
        let x = Tensor::vector(vec![0.3]);
        let adv = fgsm(&model, &x, 1, 0.0, 0).unwrap();
        assert_eq!(adv, x);
    }

    #[test]
    fn fgsm_matches_linear_two_class_closed_form() {
        // Linear two-class model: the CE gradient direction is
        // (w_wrong - w_true) componentwise, so FGSM steps along its sign.
        let w_true = [0.7, -0.3, 0.2];
        let w_wrong = [-0.5, 0.4, 0.9];
        let mut weight = Vec::new();
        weight.extend_from_slice(&w_true);
        weight.extend_from_slice(&w_wrong);
        let model = Model::new(
            vec![Layer::dense(Tensor::matrix(2, 3, weight), Tensor::zeros(vec![2])).unwrap()],
            ModelMeta {
                name: "linear".into(),
                input_shape: vec![3],
                classes: 2,
                seed: 0,
            },
        );
        let x = Tensor::vector(vec![0.5, 0.5, 0.5]);
        let eps = 0.05;
        let adv = fgsm(&model, &x, 0, eps, 0).unwrap();
        for j in 0..3 {
            let dir = (w_wrong[j] - w_true[j]).signum();
            let expect = (0.5 + eps * dir).clamp(0.0, 1.0);
            assert!((adv.data()[j] - expect).abs() < 1e-12, "component {j}");
        }
    }

    #[test]
    fn pgd_single_full_step_is_bitwise_fgsm() {
        let model = presets::mlp("m", &[3, 8, 2], presets::Activation::Relu, 3).unwrap();
        let x = Tensor::vector(vec![0.2, 0.8, 0.5]);
        let eps = 8.0 / 255.0;
        let cfg = AttackConfig {
            kind: AttackKind::Pgd,
            epsilon: eps,
            steps: 1,
            step_size: Some(eps),
            restarts: 1,
            seed: 9,
        };
        let direct = fgsm(&model, &x, 1, eps, 0).unwrap();
        let via_pgd = attack_sample(&model, &x, 1, &cfg, &[], 0).unwrap();
        assert_eq!(direct.data(), via_pgd.adversarial.data());
    }

    #[test]
    fn pgd_attains_at_least_fgsm_loss() {
        let model = presets::mlp("m", &[4, 12, 3], presets::Activation::Relu, 5).unwrap();
        let cfg = AttackConfig::new(AttackKind::Pgd, 0.1).with_seed(4);
        let mut st = 1u64;
        for i in 0..20 {
            let x = Tensor::vector(
                (0..4)
                    .map(|_| {
                        st = st.wrapping_mul(6364136223846793005).wrapping_add(99);
                        (st >> 11) as f64 / (1u64 << 53) as f64
                    })
                    .collect(),
            );
            let y = i % 3;
            let f = fgsm(&model, &x, y, 0.1, i).unwrap();
            let (_, f_loss) = evaluate_candidate(&model, &f, y, false).unwrap();
            let p = attack_sample(&model, &x, y, &cfg, &[], i).unwrap();
            assert!(
                p.loss >= f_loss - 1e-12,
                "pgd loss {} below fgsm loss {f_loss}",
                p.loss
            );
        }
    }

    #[test]
    fn margin_pgd_admits_already_misclassified_input() {
        // Model that always prefers class 0; label 1 is misclassified as-is.
        let model = logistic_model(-5.0);
        let x = Tensor::vector(vec![0.9]);
        let cfg = AttackConfig::new(AttackKind::PgdMargin, 0.05).with_seed(2);
        let out = attack_sample(&model, &x, 1, &cfg, &[], 0).unwrap();
        assert!(out.success);
        assert_eq!(out.adversarial, x);
    }

    #[test]
    fn margin_pgd_epsilon_zero_succeeds_iff_clean_misclassified() {
        let model = logistic_model(3.0);
        let cfg = AttackConfig {
            kind: AttackKind::PgdMargin,
            epsilon: 0.0,
            steps: 3,
            step_size: None,
            restarts: 1,
            seed: 0,
        };
        // x = 0.9 -> logits [0, 2.7] -> predicted class 1
        let x = Tensor::vector(vec![0.9]);
        let correct = attack_sample(&model, &x, 1, &cfg, &[], 0).unwrap();
        assert!(!correct.success);
        let wrong = attack_sample(&model, &x, 0, &cfg, &[], 0).unwrap();
        assert!(wrong.success);
    }

    #[test]
    fn margin_gradient_sign_matches_cross_entropy_on_logistic_model() {
        let model = logistic_model(2.0);
        let x = Tensor::vector(vec![0.4]);
        let (_, g_ce) = loss_and_input_gradient(&model, &x, 1, false, 0).unwrap();
        let (_, g_m) = loss_and_input_gradient(&model, &x, 1, true, 0).unwrap();
        assert_eq!(g_ce.data()[0].signum(), g_m.data()[0].signum());
    }

    #[test]
    fn random_search_budget_zero_returns_input() {
        let model = logistic_model(2.0);
        let x = Tensor::vector(vec![0.4]);
        let cfg = AttackConfig {
            kind: AttackKind::RandomSearch,
            epsilon: 0.1,
            steps: 0,
            step_size: None,
            restarts: 1,
            seed: 3,
        };
        let out = attack_sample(&model, &x, 1, &cfg, &[], 0).unwrap();
        assert_eq!(out.adversarial, x);
    }

    #[test]
    fn random_search_is_deterministic_per_seed() {
        let model = presets::mlp("m", &[2, 6, 2], presets::Activation::Relu, 8).unwrap();
        let x = Tensor::vector(vec![0.3, 0.7]);
        let cfg = AttackConfig {
            kind: AttackKind::RandomSearch,
            epsilon: 0.1,
            steps: 40,
            step_size: None,
            restarts: 1,
            seed: 77,
        };
        let a = attack_sample(&model, &x, 0, &cfg, &[], 5).unwrap();
        let b = attack_sample(&model, &x, 0, &cfg, &[], 5).unwrap();
        assert_eq!(a.adversarial, b.adversarial);
    }

    #[test]
    fn random_search_finds_the_best_corner_on_a_linear_model() {
        // In 2-D the optimum over the ball for a linear model is one of the
        // four corners; enumerate them as the oracle.
        let model = presets::linear(2, 2, 21).unwrap();
        let data = crate::data::synth_blobs(2, 2, 12, 6.0, 3, Split::Train).unwrap();
        let eps = 0.15;
        let cfg = AttackConfig {
            kind: AttackKind::RandomSearch,
            epsilon: eps,
            steps: 10_000,
            step_size: None,
            restarts: 1,
            seed: 5,
        };
        for (i, (x, &y)) in data.inputs.iter().zip(&data.labels).enumerate() {
            let mut corner_success = false;
            for pattern in 0..4u32 {
                let cand: Vec<f64> = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let s = if pattern >> j & 1 == 1 { 1.0 } else { -1.0 };
                        (v + eps * s).clamp(0.0, 1.0)
                    })
                    .collect();
                let cand = Tensor::vector(cand);
                if evaluate_candidate(&model, &cand, y, false).unwrap().0 {
                    corner_success = true;
                }
            }
            let clean_success = evaluate_candidate(&model, x, y, false).unwrap().0;
            let out = attack_sample(&model, x, y, &cfg, &[], i).unwrap();
            assert_eq!(
                out.success,
                corner_success || clean_success,
                "sample {i}: search should match corner enumeration"
            );
        }
    }

    #[test]
    fn transfer_to_self_equals_direct_attack() {
        let model = presets::mlp("m", &[2, 8, 2], presets::Activation::Relu, 13).unwrap();
        let data = crate::data::synth_blobs(2, 2, 16, 5.0, 4, Split::Test).unwrap();
        let cfg = AttackConfig::new(AttackKind::Pgd, 0.08).with_seed(6);
        let direct = run_attack(&model, &data, &cfg, false).unwrap();
        let transferred = transfer_attack(&model, &model, &data, &cfg).unwrap();
        assert_eq!(direct.robust_accuracy, transferred.robust_accuracy);
        assert_eq!(direct.success, transferred.success);
    }

    #[test]
    fn transfer_epsilon_zero_returns_target_clean_accuracy() {
        let source = presets::mlp("s", &[2, 8, 2], presets::Activation::Relu, 1).unwrap();
        let target = presets::mlp("t", &[2, 8, 2], presets::Activation::Relu, 2).unwrap();
        let data = crate::data::synth_blobs(2, 2, 16, 5.0, 4, Split::Test).unwrap();
        let cfg = AttackConfig::new(AttackKind::Pgd, 0.0).with_seed(6);
        let out = transfer_attack(&source, &target, &data, &cfg).unwrap();
        assert_eq!(out.robust_accuracy, out.clean_accuracy);
    }

    #[test]
    fn sweep_with_zero_grid_rejected_and_single_zero_matches_clean() {
        let model = presets::mlp("m", &[2, 8, 2], presets::Activation::Relu, 13).unwrap();
        let data = crate::data::synth_blobs(2, 2, 10, 5.0, 4, Split::Test).unwrap();
        let base = AttackConfig::new(AttackKind::Pgd, 0.0).with_seed(1);
        assert!(epsilon_sweep(&model, &data, &[AttackKind::Pgd], &[], &base).is_err());
        assert!(epsilon_sweep(&model, &data, &[AttackKind::Pgd], &[0.1, 0.1], &base).is_err());
    }

    #[test]
    fn attack_config_echo_includes_every_knob() {
        let cfg = AttackConfig::new(AttackKind::PgdMargin, 0.1).with_seed(3);
        let p = cfg.provenance();
        for needle in ["kind=pgd-margin", "eps=0.1", "steps=10", "seed=3"] {
            assert!(p.contains(needle), "missing {needle} in {p}");
        }
    }
}
