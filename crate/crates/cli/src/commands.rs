use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use lsm_core::matching::{turn_lsm_focal, MatchScore};
use lsm_core::polls::{poll_diff, PollError, PollWindowDiff};
use lsm_core::stats::{
    fixed_effects_ols, group_by_matching, join_scores, mann_whitney_u, pearson_r,
    simple_regression_band, student_t_two_sided, t_test, GroupSummary, PanelFactor, PanelRow,
};
use lsm_core::synth::{generate, CopySchedule, MarkerRates, SynthConfig, Topology};
use lsm_core::temporal::{grouped_curves, prefix_curve, TemporalError, TemporalProfile};
use lsm_core::validation::{self, ValidationConfig};
use lsm_core::{lsm_scores, Conversation, Lexicon, ScoreConfig, ShuffleScheme, MARKER_COUNT};

use crate::args::{
    CommonArgs, Fault, InputArgs, ScoreArgs, Study1Args, SynthArgs, TemporalArgs, TopologyArg,
    ValidateArgs,
};
use crate::io::{
    config_error, focal_speakers, input_names, load_conversations, load_lexicon, load_poll_data,
    num, opt, write_file, PollData, Report, RunManifest, Table,
};

fn score_config(common: &CommonArgs) -> Result<ScoreConfig> {
    if common.permutations == 0 {
        return Err(config_error("--permutations must be at least 1"));
    }
    Ok(ScoreConfig {
        permutations: common.permutations,
        seed: common.seed,
        method: common.method.into(),
        scheme: ShuffleScheme::Permutation,
    })
}

/// Scores every selected speaker of every conversation, in sorted order.
fn score_all(
    conversations: &[Conversation],
    input: &InputArgs,
    lexicon: &Lexicon,
    config: &ScoreConfig,
) -> Result<Vec<MatchScore<f64>>> {
    let speakers: Vec<Vec<String>> = conversations
        .iter()
        .map(|c| focal_speakers(c, input.speakers))
        .collect();
    let jobs: Vec<(&Conversation, &str)> = conversations
        .iter()
        .zip(&speakers)
        .flat_map(|(c, ss)| ss.iter().map(move |s| (c, s.as_str())))
        .collect();
    if jobs.is_empty() {
        return Err(config_error(
            "no speakers to score; mark candidates in the transcripts or pass --speakers all",
        ));
    }
    lsm_scores::<f64>(&jobs, lexicon, config)
        .into_iter()
        .zip(&jobs)
        .map(|(r, (c, s))| r.with_context(|| format!("scoring '{s}' in '{}'", c.id)))
        .collect()
}

fn score_table(scores: &[MatchScore<f64>]) -> Table {
    let mut t = Table::new(
        "scores",
        &[
            "conversation_id",
            "focal_speaker",
            "marker",
            "n_prev",
            "n_joint",
            "p_obs",
            "null_mean",
            "null_std",
            "z",
            "defined",
        ],
    );
    for s in scores {
        for m in &s.per_marker {
            t.push(vec![
                s.conversation_id.clone(),
                s.focal_speaker.clone(),
                m.marker.clone(),
                m.n_prev.to_string(),
                m.n_joint.to_string(),
                opt(m.p_obs),
                opt(m.null_mean),
                opt(m.null_std),
                opt(m.z),
                m.defined.to_string(),
            ]);
        }
        t.push(vec![
            s.conversation_id.clone(),
            s.focal_speaker.clone(),
            "mean_z".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            opt(s.mean_z),
            s.mean_z.is_some().to_string(),
        ]);
    }
    t
}

pub fn score(args: &ScoreArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let lexicon = load_lexicon(&args.common)?;
    let config = score_config(&args.common)?;
    let conversations = load_conversations(&args.input)?;
    let scores = score_all(&conversations, &args.input, &lexicon, &config)?;
    let manifest = input_manifest("score", argv, &args.common, &args.input);
    let mut record = serde_json::Map::new();
    record.insert("scores".into(), serde_json::to_value(&scores)?);
    Report {
        manifest,
        tables: vec![score_table(&scores)],
        record,
    }
    .emit(args.common.format, args.common.out.as_deref(), stdout)
}

fn input_manifest(
    command: &str,
    argv: &[String],
    common: &CommonArgs,
    input: &InputArgs,
) -> RunManifest {
    RunManifest::new(command, argv, common, input_names(input))
        .flag("transcript_format", input.transcript_format)
        .flag("drop_utterances", &input.drop_utterances)
        .flag("speakers", input.speakers)
}

/// Poll changes for every scored (debate, candidate); pairs without polls in
/// both windows are skipped with a warning.
fn poll_diffs(
    scores: &[MatchScore<f64>],
    polls: &PollData,
    rule: lsm_core::BoundaryRule,
) -> Result<Vec<PollWindowDiff<f64>>> {
    let mut out = Vec::new();
    for s in scores {
        let Some(schedule) = polls
            .schedules
            .iter()
            .find(|sch| sch.debates.iter().any(|d| d.id == s.conversation_id))
        else {
            eprintln!(
                "warning: '{}' is not in any schedule; skipped",
                s.conversation_id
            );
            continue;
        };
        match poll_diff(
            &polls.observations,
            schedule,
            &s.conversation_id,
            &s.focal_speaker,
            rule,
        ) {
            Ok(d) => out.push(d),
            Err(e @ PollError::InsufficientData { .. }) => eprintln!("warning: {e}; skipped"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn summary_row(group: &str, s: &GroupSummary<f64>) -> Vec<String> {
    vec![
        group.to_string(),
        s.n.to_string(),
        opt(s.mean),
        opt(s.median),
        opt(s.ci_low),
        opt(s.ci_high),
    ]
}

fn test_row(
    test: &str,
    statistic: Option<f64>,
    df: Option<f64>,
    p: Option<f64>,
    effect: Option<f64>,
    note: &str,
) -> Vec<String> {
    vec![
        test.to_string(),
        opt(statistic),
        opt(df),
        opt(p),
        opt(effect),
        note.to_string(),
    ]
}

pub fn study1(args: &Study1Args, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let lexicon = load_lexicon(&args.common)?;
    let config = score_config(&args.common)?;
    let conversations = load_conversations(&args.input)?;
    let polls = load_poll_data(&args.polls)?;
    let scores = score_all(&conversations, &args.input, &lexicon, &config)?;
    let diffs = poll_diffs(&scores, &polls, args.polls.boundary.into())?;
    let joined = join_scores(&scores, &diffs);
    let groups = group_by_matching(&scores, &diffs).context("joining scores with poll changes")?;

    let mut record = serde_json::Map::new();

    // matcher / non-matcher comparison
    let mut group_table = Table::new(
        "study1_groups",
        &["group", "n", "mean", "median", "ci_low", "ci_high"],
    );
    group_table.push(summary_row("matchers", &groups.matcher_summary));
    group_table.push(summary_row("non_matchers", &groups.non_matcher_summary));
    if groups.has_empty_group() {
        eprintln!("warning: one matching group is empty; group tests are not computable");
    }
    let mut tests = Table::new(
        "study1_tests",
        &["test", "statistic", "df", "p_value", "effect", "note"],
    );
    let mwu = mann_whitney_u(&groups.matchers, &groups.non_matchers);
    match &mwu {
        Ok(m) => tests.push(test_row(
            "mann_whitney_u",
            Some(m.u_a),
            None,
            Some(m.p_two_sided),
            None,
            match m.method {
                lsm_core::stats::MwuMethod::Exact => "exact",
                lsm_core::stats::MwuMethod::Normal => "normal approximation",
            },
        )),
        Err(e) => tests.push(test_row(
            "mann_whitney_u",
            None,
            None,
            None,
            None,
            &e.to_string(),
        )),
    }
    let tt = t_test(&groups.matchers, &groups.non_matchers, args.t_test.into());
    match &tt {
        Ok(t) => tests.push(test_row(
            "t_test",
            Some(t.t),
            Some(t.df),
            Some(t.p_two_sided),
            Some(t.eta_squared),
            match t.variant {
                lsm_core::TTestVariant::Welch => "welch; effect is eta squared",
                lsm_core::TTestVariant::Pooled => "pooled; effect is eta squared",
            },
        )),
        Err(e) => tests.push(test_row("t_test", None, None, None, None, &e.to_string())),
    }

    // scatter with regression band
    let z: Vec<f64> = joined.iter().map(|r| r.z).collect();
    let y: Vec<f64> = joined.iter().map(|r| r.p_diff).collect();
    let mut scatter = Table::new(
        "study1_scatter",
        &[
            "debate_id",
            "candidate",
            "election_year",
            "z",
            "p_diff",
            "fit",
            "band_low",
            "band_high",
        ],
    );
    let mut band_table = Table::new("study1_band", &["z", "fit", "band_low", "band_high"]);
    let band = simple_regression_band(&z, &y, 0.95);
    for (i, r) in joined.iter().enumerate() {
        let pt = band.as_ref().ok().map(|b| b.band[i]);
        scatter.push(vec![
            r.debate_id.clone(),
            r.candidate.clone(),
            polls
                .election_year(&r.debate_id)
                .map(|y| y.to_string())
                .unwrap_or_default(),
            num(r.z),
            num(r.p_diff),
            opt(pt.map(|p| p.fit)),
            opt(pt.map(|p| p.lower)),
            opt(pt.map(|p| p.upper)),
        ]);
    }
    match &band {
        Ok(b) => {
            let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for k in 0..=100 {
                let p = b.fit.band_at(lo + (hi - lo) * k as f64 / 100.0);
                band_table.push(vec![num(p.x), num(p.fit), num(p.lower), num(p.upper)]);
            }
            tests.push(test_row(
                "simple_regression_slope",
                Some(b.fit.slope),
                Some((b.fit.n - 2) as f64),
                None,
                None,
                "intercept in record output",
            ));
        }
        Err(e) => tests.push(test_row(
            "simple_regression_slope",
            None,
            None,
            None,
            None,
            &e.to_string(),
        )),
    }

    // fixed-effects panel
    let panel: Vec<PanelRow<f64>> = joined
        .iter()
        .filter_map(|r| {
            Some(PanelRow {
                candidate: r.candidate.clone(),
                election_year: polls.election_year(&r.debate_id)?,
                debate_id: r.debate_id.clone(),
                z: r.z,
                p_diff: r.p_diff,
            })
        })
        .collect();
    let mut reg = Table::new(
        "study1_regression",
        &[
            "model",
            "term",
            "estimate",
            "std_error",
            "t",
            "p_value",
            "r_squared",
            "adjusted_r_squared",
            "residual_df",
            "note",
        ],
    );
    let mut models = Vec::new();
    for (name, factors) in [
        ("no_fe", vec![]),
        ("candidate_fe", vec![PanelFactor::Candidate]),
        (
            "candidate_year_fe",
            vec![PanelFactor::Candidate, PanelFactor::ElectionYear],
        ),
    ] {
        match fixed_effects_ols(&panel, &factors) {
            Ok(r) => {
                let note = r
                    .absorbed
                    .iter()
                    .filter(|(_, levels)| levels.len() == 1)
                    .map(|(f, _)| format!("{} has a single level", f.as_str()))
                    .collect::<Vec<_>>()
                    .join("; ");
                for c in &r.coefficients {
                    reg.push(vec![
                        name.into(),
                        c.name.clone(),
                        num(c.estimate),
                        num(c.std_error),
                        num(c.t_stat),
                        num(c.p_value),
                        num(r.r_squared),
                        num(r.adjusted_r_squared),
                        r.residual_df.to_string(),
                        note.clone(),
                    ]);
                }
                models.push(json!({ "model": name, "result": r }));
            }
            Err(e) => {
                let mut row = vec![name.to_string()];
                row.extend(std::iter::repeat_n(String::new(), 8));
                row.push(e.to_string());
                reg.push(row);
                models.push(json!({ "model": name, "error": e.to_string() }));
            }
        }
    }

    // turn-by-turn similarity against the permutation score
    let by_id: BTreeMap<&str, &Conversation> =
        conversations.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut turn = Table::new(
        "study1_turn_lsm",
        &["debate_id", "candidate", "mean_z", "turn_lsm"],
    );
    let mut pairs = Vec::new();
    for s in &scores {
        let (Some(z), Some(c)) = (s.mean_z, by_id.get(s.conversation_id.as_str())) else {
            continue;
        };
        match turn_lsm_focal::<f64>(c, &s.focal_speaker, &lexicon) {
            Ok(t) => {
                turn.push(vec![
                    s.conversation_id.clone(),
                    s.focal_speaker.clone(),
                    num(z),
                    num(t),
                ]);
                pairs.push((z, t));
            }
            Err(e) => eprintln!(
                "warning: turn-by-turn score for '{}' in '{}': {e}",
                s.focal_speaker, s.conversation_id
            ),
        }
    }
    let zs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ts: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let r = pearson_r(&zs, &ts);
    match &r {
        Ok(r) => {
            let df = (pairs.len() - 2) as f64;
            let t = r * (df / (1.0 - r * r)).sqrt();
            tests.push(test_row(
                "pearson_turn_lsm",
                Some(*r),
                Some(df),
                Some(student_t_two_sided(t, df)),
                None,
                "",
            ));
        }
        Err(e) => tests.push(test_row(
            "pearson_turn_lsm",
            None,
            None,
            None,
            None,
            &e.to_string(),
        )),
    }

    record.insert("scores".into(), serde_json::to_value(&scores)?);
    record.insert("poll_diffs".into(), serde_json::to_value(&diffs)?);
    record.insert("groups".into(), serde_json::to_value(&groups)?);
    record.insert("mann_whitney".into(), result_value(&mwu));
    record.insert("t_test".into(), result_value(&tt));
    record.insert("regression_band".into(), result_value(&band));
    record.insert("panel".into(), serde_json::to_value(&panel)?);
    record.insert("fixed_effects".into(), Value::Array(models));
    record.insert("turn_lsm_correlation".into(), result_value(&r));

    let manifest = input_manifest("study1", argv, &args.common, &args.input)
        .flag("polls", args.polls.polls.display().to_string())
        .flag(
            "schedule",
            args.polls
                .schedule
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>(),
        )
        .flag("boundary", args.polls.boundary)
        .flag("t_test", args.t_test);
    Report {
        manifest,
        tables: vec![group_table, tests, scatter, band_table, reg, turn],
        record,
    }
    .emit(args.common.format, args.common.out.as_deref(), stdout)
}

fn result_value<T: serde::Serialize, E: std::fmt::Display>(r: &Result<T, E>) -> Value {
    match r {
        Ok(v) => json!({ "ok": v }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn temporal(args: &TemporalArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let lexicon = load_lexicon(&args.common)?;
    let config = score_config(&args.common)?;
    if args.common.parts == 0 {
        return Err(config_error("--parts must be at least 1"));
    }
    let conversations = load_conversations(&args.input)?;
    let polls = load_poll_data(&args.polls)?;
    let jobs: Vec<(&Conversation, String)> = conversations
        .iter()
        .flat_map(|c| {
            focal_speakers(c, args.input.speakers)
                .into_iter()
                .map(move |s| (c, s))
        })
        .collect();
    let results: Vec<Result<TemporalProfile<f64>, TemporalError>> = jobs
        .par_iter()
        .map(|(c, s)| prefix_curve::<f64>(c, s, &lexicon, args.common.parts, &config))
        .collect();
    let mut profiles = Vec::new();
    for ((c, s), r) in jobs.iter().zip(results) {
        match r {
            Ok(p) => profiles.push(p),
            Err(TemporalError::TooFewUtterances { utterances, parts }) => eprintln!(
                "warning: '{}' has {utterances} utterances, fewer than {parts} parts; skipped",
                c.id
            ),
            Err(e) => {
                return Err(
                    anyhow::Error::from(e).context(format!("prefix curve of '{s}' in '{}'", c.id))
                )
            }
        }
    }
    // poll changes are keyed like scores
    let keys: Vec<MatchScore<f64>> = profiles
        .iter()
        .map(|p| MatchScore {
            conversation_id: p.conversation_id.clone(),
            focal_speaker: p.focal_speaker.clone(),
            per_marker: Vec::new(),
            mean_z: None,
            n_permutations: config.permutations,
            seed: config.seed,
            method: config.method,
        })
        .collect();
    let diffs = poll_diffs(&keys, &polls, args.polls.boundary.into())?;
    let grouped = grouped_curves(&profiles, &diffs).context("grouping prefix curves")?;

    let mut plot = Table::new(
        "temporal_curves",
        &["group", "prefix_index", "n", "mean", "ci_low", "ci_high"],
    );
    for (group, curve) in [
        ("increased", &grouped.increased),
        ("decreased", &grouped.decreased),
    ] {
        for p in &curve.points {
            plot.push(vec![
                group.into(),
                p.prefix_index.to_string(),
                p.summary.n.to_string(),
                opt(p.summary.mean),
                opt(p.summary.ci_low),
                opt(p.summary.ci_high),
            ]);
        }
    }
    let diff_of: BTreeMap<(&str, &str), f64> = diffs
        .iter()
        .map(|d| ((d.debate_id.as_str(), d.candidate.as_str()), d.p_diff))
        .collect();
    let mut prof = Table::new(
        "temporal_profiles",
        &[
            "conversation_id",
            "focal_speaker",
            "p_diff",
            "prefix_index",
            "mean_z",
        ],
    );
    for p in &profiles {
        let d = diff_of
            .get(&(p.conversation_id.as_str(), p.focal_speaker.as_str()))
            .copied();
        for (i, v) in p.curve.iter().enumerate() {
            prof.push(vec![
                p.conversation_id.clone(),
                p.focal_speaker.clone(),
                opt(d),
                (i + 1).to_string(),
                opt(*v),
            ]);
        }
    }
    let mut record = serde_json::Map::new();
    record.insert("profiles".into(), serde_json::to_value(&profiles)?);
    record.insert("poll_diffs".into(), serde_json::to_value(&diffs)?);
    record.insert("curves".into(), serde_json::to_value(&grouped)?);
    record.insert(
        "trend_slopes".into(),
        json!({
            "increased": grouped.increased.trend_slope(),
            "decreased": grouped.decreased.trend_slope(),
        }),
    );
    let manifest = input_manifest("temporal", argv, &args.common, &args.input)
        .flag("polls", args.polls.polls.display().to_string())
        .flag(
            "schedule",
            args.polls
                .schedule
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>(),
        )
        .flag("boundary", args.polls.boundary);
    Report {
        manifest,
        tables: vec![plot, prof],
        record,
    }
    .emit(args.common.format, args.common.out.as_deref(), stdout)
}

/// Returns whether every suite passed.
pub fn validate(args: &ValidateArgs, argv: &[String], stdout: &mut dyn Write) -> Result<bool> {
    let lexicon = load_lexicon(&args.common)?;
    let base = ValidationConfig::default();
    let mut cfg = ValidationConfig {
        permutations: args.common.permutations,
        seed: args.common.seed,
        scheme: match args.fault {
            Fault::None => ShuffleScheme::Permutation,
            Fault::BiasedNull => ShuffleScheme::WithReplacement,
        },
        ..base
    };
    if cfg.permutations == 0 {
        return Err(config_error("--permutations must be at least 1"));
    }
    if args.quick {
        cfg.oracle_cases = 20;
        cfg.calibration_conversations = 100;
        cfg.recovery_seeds = 20;
    }
    let reports = validation::run_all(&lexicon, &cfg)?;
    let mut table = Table::new(
        "validation",
        &[
            "suite", "cases", "check", "value", "lower", "upper", "passed",
        ],
    );
    for r in &reports {
        for c in &r.checks {
            table.push(vec![
                r.name.clone(),
                r.cases.to_string(),
                c.name.clone(),
                num(c.value),
                opt(c.lower),
                opt(c.upper),
                c.passed.to_string(),
            ]);
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    let mut record = serde_json::Map::new();
    record.insert("config".into(), serde_json::to_value(&cfg)?);
    record.insert("suites".into(), serde_json::to_value(&reports)?);
    record.insert("passed".into(), Value::Bool(passed));
    let manifest = RunManifest::new("validate", argv, &args.common, Vec::new())
        .flag("fault", args.fault)
        .flag("quick", args.quick);
    Report {
        manifest,
        tables: vec![table],
        record,
    }
    .emit(args.common.format, args.common.out.as_deref(), stdout)?;
    Ok(passed)
}

pub fn synth(args: &SynthArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let Some(out) = &args.common.out else {
        return Err(config_error("synth needs --out DIR"));
    };
    let lexicon = load_lexicon(&args.common)?;
    let manifest = RunManifest::new("synth", argv, &args.common, Vec::new())
        .flag("count", args.count)
        .flag("utterances", args.utterances)
        .flag("q0", args.q0)
        .flag("q1", args.q1)
        .flag("ramp_from", args.ramp_from)
        .flag("topology", args.topology);
    let width = args.count.max(1).to_string().len().max(3);
    let mut index = Table::new(
        "synth_index",
        &["conversation_id", "file", "truth_file", "utterances"],
    );
    for i in 0..args.count {
        let id = format!("synth-{:0width$}", i + 1);
        let cfg = SynthConfig {
            id: id.clone(),
            n_utterances: args.utterances,
            topology: match args.topology {
                TopologyArg::Alternating => Topology::Alternating,
                TopologyArg::Moderator => Topology::ModeratorInterleaved,
            },
            rates: MarkerRates::uniform(args.q0, args.q1),
            schedule: match args.ramp_from {
                Some(q) => CopySchedule::Linear {
                    start: vec![q; MARKER_COUNT],
                },
                None => CopySchedule::Constant,
            },
            seed: args.common.seed.wrapping_add(i as u64),
            ..SynthConfig::default()
        };
        let mut c = generate(&cfg, &lexicon).map_err(|e| config_error(e.to_string()))?;
        c.metadata
            .insert("manifest".into(), serde_json::to_value(&manifest)?);
        let file = format!("{id}.json");
        let truth_file = format!("{id}.truth.json");
        write_file(&out.join(&file), c.to_canonical_json().as_bytes())?;
        let truth = json!({
            "manifest": manifest,
            "conversation_id": id,
            "ground_truth": lsm_core::synth::truth(&c)?,
        });
        let mut text = serde_json::to_string_pretty(&truth)?;
        text.push('\n');
        write_file(&out.join(&truth_file), text.as_bytes())?;
        index.push(vec![id, file, truth_file, c.len().to_string()]);
    }
    let report = Report {
        manifest,
        tables: vec![index],
        record: serde_json::Map::new(),
    };
    report.emit(crate::args::OutputFormat::Table, Some(out), stdout)?;
    writeln!(
        stdout,
        "wrote {} transcripts to {}",
        args.count,
        out.display()
    )?;
    Ok(())
}
