//! Self-checks on synthetic data: Monte Carlo against the closed form, z
//! calibration under no association, and recovery of planted copying.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lexicon::Lexicon;
use crate::matching::{lsm_score, MatchError, MatchScore, NullMethod, ScoreConfig, ShuffleScheme};
use crate::stats::mann_whitney_u;
use crate::synth::{generate, MarkerRates, SynthConfig, SynthError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub permutations: usize,
    pub seed: u64,
    pub scheme: ShuffleScheme,
    pub oracle_cases: usize,
    pub calibration_conversations: usize,
    pub calibration_utterances: usize,
    pub recovery_seeds: usize,
    pub recovery_utterances: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            permutations: 10_000,
            seed: 0,
            scheme: ShuffleScheme::Permutation,
            oracle_cases: 100,
            calibration_conversations: 500,
            calibration_utterances: 200,
            recovery_seeds: 100,
            recovery_utterances: 200,
        }
    }
}

impl ValidationConfig {
    fn monte_carlo(&self) -> ScoreConfig {
        ScoreConfig {
            permutations: self.permutations,
            seed: self.seed,
            method: NullMethod::MonteCarlo,
            scheme: self.scheme,
        }
    }

    fn case_rng(&self, suite: u64, case: usize) -> ChaCha8Rng {
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.seed ^ suite.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        rng.set_stream(case as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, lower: Option<f64>, upper: Option<f64>) -> Check {
        let passed = value.is_finite()
            && lower.is_none_or(|l| value >= l)
            && upper.is_none_or(|u| value <= u);
        Check {
            name: name.to_string(),
            value,
            lower,
            upper,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl SuiteReport {
    fn new(name: &str, cases: usize, checks: Vec<Check>) -> SuiteReport {
        SuiteReport {
            name: name.to_string(),
            cases,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

fn focal_score(
    conversation_cfg: &SynthConfig,
    lexicon: &Lexicon,
    score_cfg: &ScoreConfig,
) -> Result<MatchScore<f64>, ValidationError> {
    let c = generate(conversation_cfg, lexicon)?;
    let focal = conversation_cfg.speakers[1].clone();
    Ok(lsm_score(&c, &focal, lexicon, score_cfg)?)
}

/// Share of random small conversations where, for every defined marker,
/// the Monte Carlo mean lies within 4 standard errors of the closed form
/// and the two z values differ by at most 0.1.
pub fn oracle_agreement(
    lexicon: &Lexicon,
    cfg: &ValidationConfig,
) -> Result<SuiteReport, ValidationError> {
    let mc = cfg.monte_carlo();
    let analytic = ScoreConfig {
        method: NullMethod::Analytic,
        ..mc
    };
    let outcomes = (0..cfg.oracle_cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = cfg.case_rng(1, i);
            let focal_count = rng.gen_range(5..=50usize);
            let rates = (0..crate::MARKER_COUNT)
                .map(|_| MarkerRates::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)))
                .collect();
            let conv = SynthConfig {
                id: format!("oracle-{i}"),
                n_utterances: 2 * focal_count,
                rates,
                seed: rng.gen(),
                ..SynthConfig::default()
            };
            let a = focal_score(&conv, lexicon, &analytic)?;
            let m = focal_score(&conv, lexicon, &mc)?;
            let se_scale = (cfg.permutations as f64).sqrt();
            let ok = a
                .per_marker
                .iter()
                .zip(&m.per_marker)
                .all(|(a, m)| match (a.z, m.z) {
                    (None, None) => true,
                    (Some(za), Some(zm)) => {
                        let (ma, sa) = (a.null_mean.unwrap_or(0.0), a.null_std.unwrap_or(0.0));
                        let mm = m.null_mean.unwrap_or(f64::NAN);
                        (mm - ma).abs() <= 4.0 * sa / se_scale && (za - zm).abs() <= 0.1
                    }
                    _ => false,
                });
            Ok(ok)
        })
        .collect::<Result<Vec<bool>, ValidationError>>()?;
    let share = outcomes.iter().filter(|&&b| b).count() as f64 / outcomes.len().max(1) as f64;
    Ok(SuiteReport::new(
        "oracle-agreement",
        outcomes.len(),
        vec![Check::new("agreeing share", share, Some(0.95), None)],
    ))
}

/// Distribution of marker z when responses ignore their predecessor.
pub fn null_calibration(
    lexicon: &Lexicon,
    cfg: &ValidationConfig,
) -> Result<SuiteReport, ValidationError> {
    let mc = cfg.monte_carlo();
    let per_conv = (0..cfg.calibration_conversations)
        .into_par_iter()
        .map(|i| {
            let mut rng = cfg.case_rng(2, i);
            let rates = (0..crate::MARKER_COUNT)
                .map(|_| {
                    let q = rng.gen_range(0.3..0.7);
                    MarkerRates::new(q, q)
                })
                .collect();
            let conv = SynthConfig {
                id: format!("calibration-{i}"),
                n_utterances: cfg.calibration_utterances,
                rates,
                seed: rng.gen(),
                ..SynthConfig::default()
            };
            let s = focal_score(&conv, lexicon, &mc)?;
            Ok(s.per_marker
                .iter()
                .filter_map(|m| m.z)
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>, ValidationError>>()?;
    let zs: Vec<f64> = per_conv.into_iter().flatten().collect();
    let n = zs.len().max(1) as f64;
    let mean = zs.iter().sum::<f64>() / n;
    let tail = zs.iter().filter(|z| z.abs() > 1.96).count() as f64 / n;
    Ok(SuiteReport::new(
        "null-calibration",
        cfg.calibration_conversations,
        vec![
            Check::new("mean z", mean, Some(-0.1), Some(0.1)),
            Check::new("share |z| > 1.96", tail, Some(0.02), Some(0.08)),
        ],
    ))
}

/// Mean z of the responder under planted copying and under no copying.
pub fn recovery_batches(
    lexicon: &Lexicon,
    cfg: &ValidationConfig,
    q0: f64,
    q1: f64,
) -> Result<(Vec<Option<f64>>, Vec<Option<f64>>), ValidationError> {
    let mc = cfg.monte_carlo();
    let batch = |q1: f64| {
        (0..cfg.recovery_seeds)
            .into_par_iter()
            .map(|i| {
                let conv = SynthConfig {
                    id: format!("recovery-{i}"),
                    n_utterances: cfg.recovery_utterances,
                    rates: MarkerRates::uniform(q0, q1),
                    seed: cfg.seed.wrapping_add(i as u64),
                    ..SynthConfig::default()
                };
                Ok(focal_score(&conv, lexicon, &mc)?.mean_z)
            })
            .collect::<Result<Vec<_>, ValidationError>>()
    };
    Ok((batch(q1)?, batch(q0)?))
}

/// Planted copying (`q1 = 0.9`, `q0 = 0.3`) must give positive mean z in
/// nearly every conversation and dominate the no-copying batch.
pub fn planted_recovery(
    lexicon: &Lexicon,
    cfg: &ValidationConfig,
) -> Result<SuiteReport, ValidationError> {
    let (planted, null) = recovery_batches(lexicon, cfg, 0.3, 0.9)?;
    let positive = planted
        .iter()
        .filter(|z| z.is_some_and(|z| z > 0.0))
        .count() as f64
        / planted.len().max(1) as f64;
    let a: Vec<f64> = planted.iter().flatten().copied().collect();
    let b: Vec<f64> = null.iter().flatten().copied().collect();
    let mut checks = vec![Check::new("share mean z > 0", positive, Some(0.95), None)];
    match mann_whitney_u(&a, &b) {
        Ok(t) => {
            let half = (a.len() * b.len()) as f64 / 2.0;
            checks.push(Check::new("rank test p", t.p_two_sided, None, Some(0.01)));
            checks.push(Check::new(
                "U minus half of pairs",
                t.u_a - half,
                Some(0.0),
                None,
            ));
        }
        Err(_) => checks.push(Check::new("rank test p", f64::NAN, None, Some(0.01))),
    }
    Ok(SuiteReport::new("planted-recovery", planted.len(), checks))
}

pub fn run_all(
    lexicon: &Lexicon,
    cfg: &ValidationConfig,
) -> Result<Vec<SuiteReport>, ValidationError> {
    Ok(vec![
        null_calibration(lexicon, cfg)?,
        oracle_agreement(lexicon, cfg)?,
        planted_recovery(lexicon, cfg)?,
    ])
}
