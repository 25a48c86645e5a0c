//! The five-point gradient-masking checklist, run over an original model
//! and its hardened counterpart:
//!
//! 1. white-box attacks should beat black-box attacks at equal budget;
//! 2. iterative attacks should beat one-step attacks;
//! 3. robust accuracy should fall to zero as the radius grows;
//! 4. the hardened model should resist adversaries crafted on the original;
//! 5. randomized-smoothing curves should behave (monotone in the radius).
//!
//! Items 2-4 are exact by construction here (candidate-set nesting), item 1
//! is a seeded statistical comparison that warns rather than fails, and
//! item 5 checks curve monotonicity. Each section runs independently so one
//! failure does not block the others.

use crate::attack::{self, AttackConfig, AttackKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::Model;
use crate::report::Verdict;
use crate::smoothing::{self, CurvePoint, SmoothingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ChecklistConfig {
    /// Radius for the fixed-radius sections (1 and 4).
    pub epsilon: f64,
    /// Strictly increasing radii for the sweep sections (2 and 3).
    pub epsilon_grid: Vec<f64>,
    pub steps: usize,
    pub restarts: usize,
    /// Seeds used in the white-box-vs-black-box comparison.
    pub attack_seeds: u64,
    pub smoothing: SmoothingConfig,
    /// Non-decreasing certification radii for section 5.
    pub radii: Vec<f64>,
    pub seed: u64,
}

impl Default for ChecklistConfig {
    fn default() -> Self {
        ChecklistConfig {
            epsilon: attack::default_epsilon(),
            epsilon_grid: attack::default_epsilon_grid(),
            steps: 10,
            restarts: 1,
            attack_seeds: 5,
            smoothing: SmoothingConfig {
                n0: 32,
                n: 128,
                ..SmoothingConfig::default()
            },
            radii: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            seed: 0,
        }
    }
}

/// Section 1 outcome: per-seed robust accuracies under PGD and under
/// random search at the same per-sample query budget.
#[derive(Debug, Clone)]
pub struct WhiteVsBlack {
    pub rows: Vec<(u64, f64, f64)>,
    pub pgd_mean: f64,
    pub random_search_mean: f64,
    pub verdict: (Verdict, String),
}

/// Sections 2 and 3 share one sweep over both models.
#[derive(Debug, Clone)]
pub struct SweepSection {
    /// `(model, epsilon, fgsm_robust, pgd_robust)` rows.
    pub rows: Vec<(String, f64, f64, f64)>,
    pub clean_original: f64,
    pub clean_forged: f64,
    pub terminal_original: f64,
    pub terminal_forged: f64,
    pub one_step_verdict: (Verdict, String),
    pub sweep_verdict: (Verdict, String),
}

#[derive(Debug, Clone)]
pub struct TransferSection {
    pub transfer_robust: f64,
    pub direct_robust: f64,
    pub verdict: (Verdict, String),
}

#[derive(Debug, Clone)]
pub struct SmoothingSection {
    pub original: Vec<CurvePoint>,
    pub forged: Vec<CurvePoint>,
    pub verdict: (Verdict, String),
}

/// All five sections; each carries its own error so one failed sub-run
/// leaves the rest intact.
pub struct Checklist {
    pub white_vs_black: Result<WhiteVsBlack>,
    pub sweeps: Result<SweepSection>,
    pub transfer: Result<TransferSection>,
    pub smoothing: Result<SmoothingSection>,
}

impl Checklist {
    /// First sub-run error, if any section failed.
    pub fn first_failure(&self) -> Option<&Error> {
        [
            self.white_vs_black.as_ref().err(),
            self.sweeps.as_ref().err(),
            self.transfer.as_ref().err(),
            self.smoothing.as_ref().err(),
        ]
        .into_iter()
        .flatten()
        .next()
    }

    /// Consumes the checklist, yielding the first sub-run error.
    pub fn into_first_failure(self) -> Option<Error> {
        [
            self.white_vs_black.err(),
            self.sweeps.err(),
            self.transfer.err(),
            self.smoothing.err(),
        ]
        .into_iter()
        .flatten()
        .next()
    }
}

pub fn run_checklist(
    original: &Model,
    forged: &Model,
    data: &Dataset,
    config: &ChecklistConfig,
) -> Result<Checklist> {
    if original.meta.input_shape != forged.meta.input_shape {
        return Err(Error::Contract(format!(
            "input shapes differ: {:?} vs {:?}",
            original.meta.input_shape, forged.meta.input_shape
        )));
    }
    if data.is_empty() {
        return Err(Error::Contract("checklist over an empty dataset".into()));
    }
    Ok(Checklist {
        white_vs_black: white_vs_black(forged, data, config),
        sweeps: sweeps(original, forged, data, config),
        transfer: transfer(original, forged, data, config),
        smoothing: smoothing_curves(original, forged, data, config),
    })
}

fn white_vs_black(forged: &Model, data: &Dataset, cfg: &ChecklistConfig) -> Result<WhiteVsBlack> {
    let budget = cfg.steps * cfg.restarts;
    let mut rows = Vec::new();
    let mut pgd_sum = 0.0;
    let mut rs_sum = 0.0;
    for i in 0..cfg.attack_seeds {
        let seed = cfg.seed.wrapping_add(i);
        let pgd_cfg = AttackConfig {
            kind: AttackKind::Pgd,
            epsilon: cfg.epsilon,
            steps: cfg.steps,
            step_size: None,
            restarts: cfg.restarts,
            seed,
        };
        let rs_cfg = AttackConfig {
            kind: AttackKind::RandomSearch,
            epsilon: cfg.epsilon,
            steps: budget,
            step_size: None,
            restarts: 1,
            seed,
        };
        let pgd = attack::run_attack(forged, data, &pgd_cfg, false)?;
        let rs = attack::run_attack(forged, data, &rs_cfg, false)?;
        pgd_sum += pgd.robust_accuracy;
        rs_sum += rs.robust_accuracy;
        rows.push((seed, pgd.robust_accuracy, rs.robust_accuracy));
    }
    let n = cfg.attack_seeds.max(1) as f64;
    let pgd_mean = pgd_sum / n;
    let random_search_mean = rs_sum / n;
    let verdict = if pgd_mean <= random_search_mean + 1e-12 {
        (
            Verdict::Pass,
            format!("mean pgd robust {pgd_mean:.4} <= mean random-search robust {random_search_mean:.4}"),
        )
    } else {
        (
            Verdict::Warn,
            format!("mean pgd robust {pgd_mean:.4} > mean random-search robust {random_search_mean:.4} (statistical check)"),
        )
    };
    Ok(WhiteVsBlack {
        rows,
        pgd_mean,
        random_search_mean,
        verdict,
    })
}

fn sweeps(
    original: &Model,
    forged: &Model,
    data: &Dataset,
    cfg: &ChecklistConfig,
) -> Result<SweepSection> {
    let base = AttackConfig {
        kind: AttackKind::Pgd,
        epsilon: 0.0,
        steps: cfg.steps,
        step_size: None,
        restarts: cfg.restarts,
        seed: cfg.seed,
    };
    let kinds = [AttackKind::Fgsm, AttackKind::Pgd];
    let mut rows = Vec::new();
    let mut dominates = true;
    let mut monotone = true;
    let mut terminal_ok = true;
    let mut cleans = [0.0f64; 2];
    let mut terminals = [0.0f64; 2];

    for (mi, (name, model)) in [("original", original), ("forged", forged)]
        .into_iter()
        .enumerate()
    {
        let cells = attack::epsilon_sweep(model, data, &kinds, &cfg.epsilon_grid, &base)?;
        let fgsm: Vec<_> = cells.iter().filter(|c| c.kind == AttackKind::Fgsm).collect();
        let pgd: Vec<_> = cells.iter().filter(|c| c.kind == AttackKind::Pgd).collect();
        for (f, p) in fgsm.iter().zip(&pgd) {
            rows.push((
                name.to_string(),
                f.epsilon,
                f.result.robust_accuracy,
                p.result.robust_accuracy,
            ));
            if p.result.robust_accuracy > f.result.robust_accuracy + 1e-12 {
                dominates = false;
            }
        }
        for w in pgd.windows(2) {
            if w[1].result.robust_accuracy > w[0].result.robust_accuracy + 1e-12 {
                monotone = false;
            }
        }
        let clean = pgd.first().map(|c| c.result.clean_accuracy).unwrap_or(0.0);
        let terminal = pgd.last().map(|c| c.result.robust_accuracy).unwrap_or(1.0);
        if terminal > 0.01 * clean + 1e-12 {
            terminal_ok = false;
        }
        cleans[mi] = clean;
        terminals[mi] = terminal;
    }

    let one_step_verdict = if dominates {
        (
            Verdict::Pass,
            "pgd <= fgsm at every radius (nesting-seeded)".to_string(),
        )
    } else {
        (Verdict::Warn, "fgsm outperformed pgd somewhere".to_string())
    };
    let sweep_verdict = if monotone && terminal_ok {
        (
            Verdict::Pass,
            "pgd robust accuracy is non-increasing and collapses at the largest radius".to_string(),
        )
    } else if monotone {
        (
            Verdict::Warn,
            "terminal robust accuracy above 1% of clean".to_string(),
        )
    } else {
        (Verdict::Warn, "pgd robust accuracy not monotone".to_string())
    };
    Ok(SweepSection {
        rows,
        clean_original: cleans[0],
        clean_forged: cleans[1],
        terminal_original: terminals[0],
        terminal_forged: terminals[1],
        one_step_verdict,
        sweep_verdict,
    })
}

fn transfer(
    original: &Model,
    forged: &Model,
    data: &Dataset,
    cfg: &ChecklistConfig,
) -> Result<TransferSection> {
    let attack_cfg = AttackConfig {
        kind: AttackKind::Pgd,
        epsilon: cfg.epsilon,
        steps: cfg.steps,
        step_size: None,
        restarts: cfg.restarts,
        seed: cfg.seed,
    };
    let transferred = attack::transfer_attack(original, forged, data, &attack_cfg)?;
    let examples = transferred
        .adversarial
        .as_deref()
        .expect("transfer keeps examples");
    // The direct attack sees the transfer example as a warm start, so its
    // success set contains the transfer attack's.
    let direct = attack::run_attack_with_candidates(forged, data, &attack_cfg, Some(examples), false)?;
    let verdict = if direct.robust_accuracy <= transferred.robust_accuracy + 1e-12 {
        let eq = if (direct.robust_accuracy - transferred.robust_accuracy).abs() <= 1e-12 {
            " (equal)"
        } else {
            ""
        };
        (
            Verdict::Pass,
            format!("direct white-box attack is at least as strong as transfer{eq}"),
        )
    } else {
        (
            Verdict::Warn,
            "transfer attack outperformed the direct attack".to_string(),
        )
    };
    Ok(TransferSection {
        transfer_robust: transferred.robust_accuracy,
        direct_robust: direct.robust_accuracy,
        verdict,
    })
}

fn smoothing_curves(
    original: &Model,
    forged: &Model,
    data: &Dataset,
    cfg: &ChecklistConfig,
) -> Result<SmoothingSection> {
    let smoothing_cfg = SmoothingConfig {
        seed: cfg.seed,
        ..cfg.smoothing.clone()
    };
    let (curve_original, _) =
        smoothing::certified_accuracy_curve(original, data, &cfg.radii, &smoothing_cfg)?;
    let (curve_forged, _) =
        smoothing::certified_accuracy_curve(forged, data, &cfg.radii, &smoothing_cfg)?;
    let monotone = |curve: &[CurvePoint]| {
        curve
            .windows(2)
            .all(|w| w[1].certified_accuracy <= w[0].certified_accuracy)
    };
    let verdict = if monotone(&curve_original) && monotone(&curve_forged) {
        (
            Verdict::Pass,
            "both certified curves are non-increasing".to_string(),
        )
    } else {
        (
            Verdict::Warn,
            "a certified curve increased with radius".to_string(),
        )
    };
    Ok(SmoothingSection {
        original: curve_original,
        forged: curve_forged,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, Split};
    use crate::net::{presets, InsertPolicy};
    use crate::train::calibrate_forge;

    #[test]
    fn checklist_on_identity_forge_passes_exact_sections() {
        let model = presets::mlp_blobs(2, 3, 4).unwrap();
        let train = synth_blobs(3, 2, 90, 6.0, 4, Split::Train).unwrap();
        let (model, _) = crate::train::train(
            &model,
            &train,
            None,
            &crate::train::TrainConfig {
                epochs: 15,
                batch_size: 16,
                learning_rate: 0.4,
                optimizer: crate::train::Optimizer::Sgd,
                adversarial: None,
                seed: 4,
            },
        )
        .unwrap();
        let mut forged = model.insert_forge(&InsertPolicy::All).unwrap();
        calibrate_forge(&mut forged, &train).unwrap();
        let data = synth_blobs(3, 2, 24, 6.0, 4, Split::Test).unwrap();
        let cfg = ChecklistConfig {
            attack_seeds: 2,
            steps: 5,
            smoothing: SmoothingConfig {
                n0: 8,
                n: 32,
                sigma: 0.1,
                ..SmoothingConfig::default()
            },
            radii: vec![0.0, 0.05, 0.1],
            ..ChecklistConfig::default()
        };
        let checklist = run_checklist(&model, &forged, &data, &cfg).unwrap();
        assert!(checklist.first_failure().is_none());
        // c_ratio is 0 after plain insertion, so transfer equals direct.
        let transfer = checklist.transfer.unwrap();
        assert_eq!(transfer.verdict.0, Verdict::Pass);
        assert_eq!(transfer.transfer_robust, transfer.direct_robust);
        let sweeps = checklist.sweeps.unwrap();
        assert_eq!(sweeps.one_step_verdict.0, Verdict::Pass);
        let smoothing = checklist.smoothing.unwrap();
        assert_eq!(smoothing.verdict.0, Verdict::Pass);
    }

    #[test]
    fn shape_mismatch_is_rejected_up_front() {
        let a = presets::mlp_blobs(2, 3, 1).unwrap();
        let b = presets::mlp_blobs(3, 3, 1).unwrap();
        let data = synth_blobs(3, 2, 6, 6.0, 1, Split::Test).unwrap();
        assert!(run_checklist(&a, &b, &data, &ChecklistConfig::default()).is_err());
    }
}
