use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lsm_core::polls::PollWindowDiff;
use lsm_core::stats::{fixed_effects_ols, PanelRow};
use lsm_core::synth::{generate, CopySchedule, MarkerRates, SynthConfig};
use lsm_core::temporal::{grouped_curves, prefix_curve};
use lsm_core::{Lexicon, ScoreConfig, MARKER_COUNT};

#[test]
fn ramped_copying_gives_rising_curve() {
    let lex = Lexicon::reference();
    let cfg = ScoreConfig {
        permutations: 1000,
        ..ScoreConfig::default()
    };
    let mut profiles = Vec::new();
    let mut diffs = Vec::new();
    for seed in 0..8 {
        let conv = generate(
            &SynthConfig {
                id: format!("ramp-{seed}"),
                n_utterances: 400,
                rates: MarkerRates::uniform(0.3, 0.9),
                schedule: CopySchedule::Linear {
                    start: vec![0.3; MARKER_COUNT],
                },
                seed,
                ..SynthConfig::default()
            },
            &lex,
        )
        .unwrap();
        profiles.push(prefix_curve::<f64>(&conv, "B", &lex, 8, &cfg).unwrap());
        diffs.push(PollWindowDiff {
            debate_id: conv.id.clone(),
            candidate: "B".into(),
            median_before: 40.0,
            median_after: 42.0,
            p_diff: 2.0,
            n_before: 1,
            n_after: 1,
        });
    }
    let g = grouped_curves(&profiles, &diffs).unwrap();
    assert_eq!(g.increased.n_profiles, 8);
    assert_eq!(g.decreased.n_profiles, 0);
    let means: Vec<f64> = g
        .increased
        .points
        .iter()
        .map(|p| p.summary.mean.unwrap())
        .collect();
    assert_eq!(means.len(), 8);
    assert!(g.increased.trend_slope().unwrap() > 0.0, "{means:?}");
    assert!(means[7] > means[0] + 1.0, "{means:?}");
}

#[test]
fn noise_outcome_interval_covers_zero() {
    let reps = 1000;
    let mut covered = 0;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        rng.set_stream(rep);
        let panel: Vec<PanelRow<f64>> = (0..30)
            .map(|i| PanelRow {
                candidate: format!("c{}", i % 5),
                election_year: 2000 + 4 * (i % 3),
                debate_id: format!("d{i}"),
                z: rng.gen_range(-2.0..2.0),
                // sum of twelve uniforms: close enough to Gaussian for OLS coverage
                p_diff: (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0,
            })
            .collect();
        let fit = fixed_effects_ols(&panel, &[]).unwrap();
        let (lo, hi) = fit.confidence_interval("z", 0.95).unwrap();
        if lo <= 0.0 && 0.0 <= hi {
            covered += 1;
        }
    }
    let share = covered as f64 / reps as f64;
    assert!((0.92..=0.98).contains(&share), "{share}");
}
