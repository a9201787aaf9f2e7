//! Style-matching scores.
//!
//! For a focal speaker and a marker category, the observed statistic is the
//! fraction of the speaker's responses that contain the marker among the
//! responses whose predecessor contained it. It is compared with its
//! distribution when the speaker's own utterances are re-arranged over the
//! speaker's own turn positions (everyone else stays in place). The
//! per-marker z-score is `(observed - mean) / std`, so positive values mean
//! more matching than chance, and the speaker's score is the mean z over
//! the markers where it is defined.

mod null;
mod turn;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Lexicon, MarkerMask, MARKER_COUNT};
use crate::scalar::Scalar;
use crate::transcript::{Conversation, TranscriptError};

pub use null::{
    analytic_moments, enumeration_moments, hypergeometric_moments, monte_carlo_counts,
    monte_carlo_moments, replicate_rng, FocalSlots, NullMoments, Rational, ShuffleScheme,
    MAX_ENUMERATION,
};
pub use turn::{lsm_asymmetry, turn_lsm, turn_lsm_focal, TURN_LSM_EPSILON};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("unknown marker '{0}'")]
    UnknownMarker(String),
    #[error("null distribution undefined for marker '{marker}': {reason}")]
    UndefinedNull {
        marker: String,
        reason: &'static str,
    },
    #[error("exact enumeration needs at most {MAX_ENUMERATION} focal utterances, found {0}")]
    EnumerationTooLarge(usize),
    #[error("permutation count must be at least 1")]
    NoPermutations,
    #[error("not computable: {0}")]
    NotComputable(String),
}

/// Null distribution used for the z-score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullMethod {
    #[default]
    MonteCarlo,
    Analytic,
    ExactEnumeration,
}

impl NullMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            NullMethod::MonteCarlo => "monte-carlo",
            NullMethod::Analytic => "analytic",
            NullMethod::ExactEnumeration => "exact-enumeration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub permutations: usize,
    pub seed: u64,
    pub method: NullMethod,
    #[serde(default)]
    pub scheme: ShuffleScheme,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            permutations: 10_000,
            seed: 0,
            method: NullMethod::MonteCarlo,
            scheme: ShuffleScheme::Permutation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerMatchStat<T> {
    pub marker: String,
    /// Responses whose predecessor contains the marker.
    pub n_prev: usize,
    /// Of those, responses that contain the marker too.
    pub n_joint: usize,
    pub p_obs: Option<T>,
    pub null_mean: Option<T>,
    pub null_std: Option<T>,
    pub z: Option<T>,
    pub defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScore<T> {
    pub conversation_id: String,
    pub focal_speaker: String,
    pub per_marker: Vec<MarkerMatchStat<T>>,
    /// Mean z over defined markers; absent when none is defined.
    pub mean_z: Option<T>,
    pub n_permutations: usize,
    pub seed: u64,
    pub method: NullMethod,
}

impl<T> MatchScore<T> {
    pub fn is_empty(&self) -> bool {
        self.mean_z.is_none()
    }

    pub fn marker(&self, name: &str) -> Option<&MarkerMatchStat<T>> {
        self.per_marker.iter().find(|m| m.marker == name)
    }
}

/// Null mean and standard deviation (population form) in the working scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullSummary<T> {
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> NullSummary<T> {
    fn from_moments(m: NullMoments) -> Self {
        NullSummary {
            mean: T::lit(m.mean_f64()),
            std: T::lit(m.std_f64()),
        }
    }
}

/// Observed counts for one marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedCounts {
    pub n_prev: usize,
    pub n_joint: usize,
}

impl ObservedCounts {
    /// `n_joint / n_prev`, undefined when `n_prev` is 0.
    pub fn p_obs<T: Scalar>(&self) -> Option<T> {
        (self.n_prev > 0).then(|| T::from_count(self.n_joint) / T::from_count(self.n_prev))
    }
}

/// The null z-score is undefined when the null has no spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("degenerate marker: null standard deviation is zero")]
pub struct DegenerateMarker;

/// `(p_obs - null_mean) / null_std`; positive means more matching than chance.
pub fn marker_z<T: Scalar>(p_obs: T, null_mean: T, null_std: T) -> Result<T, DegenerateMarker> {
    if null_std > T::zero() {
        Ok((p_obs - null_mean) / null_std)
    } else {
        Err(DegenerateMarker)
    }
}

/// Marker masks of every utterance, computed once per conversation.
#[derive(Debug, Clone)]
pub struct IncidenceTable<'a> {
    conversation: &'a Conversation,
    masks: Vec<MarkerMask>,
    marker_names: Vec<String>,
}

impl<'a> IncidenceTable<'a> {
    pub fn new(conversation: &'a Conversation, lexicon: &Lexicon) -> Self {
        let masks = conversation
            .utterances()
            .iter()
            .map(|u| lexicon.incidence_mask(&u.tokens))
            .collect();
        IncidenceTable {
            conversation,
            masks,
            marker_names: lexicon
                .marker_names()
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }

    pub fn conversation(&self) -> &Conversation {
        self.conversation
    }

    pub fn masks(&self) -> &[MarkerMask] {
        &self.masks
    }

    /// Slots of `focal` among the first `prefix_len` utterances.
    pub fn focal_slots(&self, focal: &str, prefix_len: usize) -> FocalSlots {
        let n = prefix_len.min(self.masks.len());
        let speakers = self.conversation.utterances()[..n]
            .iter()
            .map(|u| u.speaker.as_str());
        FocalSlots::new(speakers, &self.masks[..n], focal)
    }

    fn marker_index(&self, marker: &str) -> Result<usize, MatchError> {
        self.marker_names
            .iter()
            .position(|m| m == marker)
            .ok_or_else(|| MatchError::UnknownMarker(marker.to_string()))
    }

    fn checked_slots(&self, focal: &str) -> Result<FocalSlots, MatchError> {
        if !self.conversation.contains_speaker(focal) {
            return Err(TranscriptError::SpeakerNotFound(focal.to_string()).into());
        }
        Ok(self.focal_slots(focal, self.masks.len()))
    }

    /// Scores `focal` on the first `prefix_len` utterances. Returns `Ok(None)`
    /// when the focal speaker has no utterance in the prefix.
    pub fn score_prefix<T: Scalar>(
        &self,
        focal: &str,
        prefix_len: usize,
        config: &ScoreConfig,
    ) -> Result<Option<MatchScore<T>>, MatchError> {
        let slots = self.focal_slots(focal, prefix_len);
        if slots.is_empty() {
            return Ok(None);
        }
        score_slots(
            &slots,
            &self.marker_names,
            &self.conversation.id,
            focal,
            config,
        )
        .map(Some)
    }
}

fn null_moments(
    slots: &FocalSlots,
    config: &ScoreConfig,
) -> Result<[Option<NullMoments>; MARKER_COUNT], MatchError> {
    match config.method {
        NullMethod::MonteCarlo => {
            if config.permutations == 0 {
                return Err(MatchError::NoPermutations);
            }
            Ok(monte_carlo_moments(
                slots,
                config.permutations,
                config.seed,
                config.scheme,
            ))
        }
        NullMethod::Analytic => Ok(analytic_moments(slots)),
        NullMethod::ExactEnumeration => {
            enumeration_moments(slots).ok_or(MatchError::EnumerationTooLarge(slots.len()))
        }
    }
}

fn score_slots<T: Scalar>(
    slots: &FocalSlots,
    marker_names: &[String],
    conversation_id: &str,
    focal: &str,
    config: &ScoreConfig,
) -> Result<MatchScore<T>, MatchError> {
    let moments = null_moments(slots, config)?;
    let joint = slots.observed_joint();
    let per_marker: Vec<MarkerMatchStat<T>> = marker_names
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let counts = ObservedCounts {
                n_prev: slots.n_prev(m),
                n_joint: joint[m] as usize,
            };
            let p_obs = counts.p_obs::<T>();
            let null = moments[m].map(NullSummary::<T>::from_moments);
            let z = match (p_obs, null) {
                (Some(p), Some(n)) => marker_z(p, n.mean, n.std).ok(),
                _ => None,
            };
            MarkerMatchStat {
                marker: name.clone(),
                n_prev: counts.n_prev,
                n_joint: counts.n_joint,
                p_obs,
                null_mean: null.map(|n| n.mean),
                null_std: null.map(|n| n.std),
                z,
                defined: z.is_some(),
            }
        })
        .collect();
    let defined: Vec<T> = per_marker.iter().filter_map(|m| m.z).collect();
    let mean_z = (!defined.is_empty()).then(|| crate::scalar::mean(&defined));
    Ok(MatchScore {
        conversation_id: conversation_id.to_string(),
        focal_speaker: focal.to_string(),
        per_marker,
        mean_z,
        n_permutations: config.permutations,
        seed: config.seed,
        method: config.method,
    })
}

/// Observed counts for one marker.
pub fn observed_probability(
    conversation: &Conversation,
    focal: &str,
    marker: &str,
    lexicon: &Lexicon,
) -> Result<ObservedCounts, MatchError> {
    let table = IncidenceTable::new(conversation, lexicon);
    let m = table.marker_index(marker)?;
    let slots = table.checked_slots(focal)?;
    Ok(ObservedCounts {
        n_prev: slots.n_prev(m),
        n_joint: slots.observed_joint()[m] as usize,
    })
}

fn single_marker_null<T: Scalar>(
    conversation: &Conversation,
    focal: &str,
    marker: &str,
    lexicon: &Lexicon,
    moments: impl FnOnce(&FocalSlots) -> [Option<NullMoments>; MARKER_COUNT],
) -> Result<NullSummary<T>, MatchError> {
    let table = IncidenceTable::new(conversation, lexicon);
    let m = table.marker_index(marker)?;
    let slots = table.checked_slots(focal)?;
    let undefined = |reason| MatchError::UndefinedNull {
        marker: marker.to_string(),
        reason,
    };
    if slots.n_prev(m) == 0 {
        return Err(undefined("no predecessor contains the marker"));
    }
    if slots.len() < 2 {
        return Err(undefined("fewer than two focal utterances"));
    }
    moments(&slots)[m]
        .map(NullSummary::from_moments)
        .ok_or_else(|| undefined("no replicates"))
}

/// Monte Carlo permutation null for one marker.
pub fn permutation_null<T: Scalar>(
    conversation: &Conversation,
    focal: &str,
    marker: &str,
    lexicon: &Lexicon,
    permutations: usize,
    seed: u64,
) -> Result<NullSummary<T>, MatchError> {
    if permutations == 0 {
        return Err(MatchError::NoPermutations);
    }
    single_marker_null(conversation, focal, marker, lexicon, |s| {
        monte_carlo_moments(s, permutations, seed, ShuffleScheme::Permutation)
    })
}

/// Replicate values of the conditional probability, in replicate order.
pub fn permutation_samples<T: Scalar>(
    conversation: &Conversation,
    focal: &str,
    marker: &str,
    lexicon: &Lexicon,
    permutations: usize,
    seed: u64,
) -> Result<Vec<T>, MatchError> {
    let table = IncidenceTable::new(conversation, lexicon);
    let m = table.marker_index(marker)?;
    let slots = table.checked_slots(focal)?;
    let n_prev = slots.n_prev(m);
    if n_prev == 0 {
        return Err(MatchError::UndefinedNull {
            marker: marker.to_string(),
            reason: "no predecessor contains the marker",
        });
    }
    let denom = T::from_count(n_prev);
    Ok(
        monte_carlo_counts(&slots, permutations, seed, ShuffleScheme::Permutation)
            .into_iter()
            .map(|c| T::from_count(c[m] as usize) / denom)
            .collect(),
    )
}

/// Closed-form hypergeometric null for one marker.
pub fn analytic_null<T: Scalar>(
    conversation: &Conversation,
    focal: &str,
    marker: &str,
    lexicon: &Lexicon,
) -> Result<NullSummary<T>, MatchError> {
    single_marker_null(conversation, focal, marker, lexicon, analytic_moments)
}

/// Null over every arrangement of at most [`MAX_ENUMERATION`] utterances.
pub fn exact_null<T: Scalar>(
    conversation: &Conversation,
    focal: &str,
    marker: &str,
    lexicon: &Lexicon,
) -> Result<NullSummary<T>, MatchError> {
    let table = IncidenceTable::new(conversation, lexicon);
    let n = table.checked_slots(focal)?.len();
    if n > MAX_ENUMERATION {
        return Err(MatchError::EnumerationTooLarge(n));
    }
    single_marker_null(conversation, focal, marker, lexicon, |s| {
        enumeration_moments(s).expect("size checked")
    })
}

/// Full score for one focal speaker.
pub fn lsm_score<T: Scalar>(
    conversation: &Conversation,
    focal: &str,
    lexicon: &Lexicon,
    config: &ScoreConfig,
) -> Result<MatchScore<T>, MatchError> {
    let table = IncidenceTable::new(conversation, lexicon);
    let slots = table.checked_slots(focal)?;
    score_slots(&slots, &table.marker_names, &conversation.id, focal, config)
}

/// Scores several (conversation, speaker) jobs in parallel, preserving the
/// input order.
pub fn lsm_scores<T: Scalar>(
    jobs: &[(&Conversation, &str)],
    lexicon: &Lexicon,
    config: &ScoreConfig,
) -> Vec<Result<MatchScore<T>, MatchError>> {
    jobs.par_iter()
        .map(|(c, s)| lsm_score(c, s, lexicon, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::{RawTurn, Role};
    use chrono::NaiveDate;

    fn conversation(turns: &[(&str, &str)]) -> Conversation {
        let turns = turns
            .iter()
            .map(|(s, t)| RawTurn::new(*s, Role::Candidate, *t));
        Conversation::from_turns(
            "t",
            NaiveDate::from_ymd_opt(2000, 10, 3).unwrap(),
            None,
            turns,
        )
        .unwrap()
    }

    /// M,C,M,C,M,C with predecessor article incidence (T,F,T) and focal
    /// article incidence (T,T,F).
    fn alternation() -> Conversation {
        conversation(&[
            ("M", "the question"),
            ("C", "the answer"),
            ("M", "zz"),
            ("C", "an answer"),
            ("M", "a question"),
            ("C", "zz"),
        ])
    }

    #[test]
    fn observed_counts_by_hand() {
        let lex = Lexicon::reference();
        let c = observed_probability(&alternation(), "C", "articles", &lex).unwrap();
        assert_eq!(
            c,
            ObservedCounts {
                n_prev: 2,
                n_joint: 1
            }
        );
        assert_eq!(c.p_obs::<f64>(), Some(0.5));
    }

    #[test]
    fn marker_absent_everywhere() {
        let lex = Lexicon::reference();
        let c = observed_probability(&alternation(), "C", "quantifiers", &lex).unwrap();
        assert_eq!(c.n_prev, 0);
        assert_eq!(c.p_obs::<f64>(), None);
        assert!(matches!(
            permutation_null::<f64>(&alternation(), "C", "quantifiers", &lex, 10, 1),
            Err(MatchError::UndefinedNull { .. })
        ));
    }

    #[test]
    fn marker_everywhere_gives_one() {
        let lex = Lexicon::reference();
        let conv = conversation(&[("M", "the"), ("C", "the"), ("M", "the"), ("C", "the")]);
        let c = observed_probability(&conv, "C", "articles", &lex).unwrap();
        assert_eq!(c.p_obs::<f64>(), Some(1.0));
        let null = permutation_null::<f64>(&conv, "C", "articles", &lex, 100, 1).unwrap();
        assert_eq!(null.std, 0.0);
        let s = lsm_score::<f64>(&conv, "C", &lex, &ScoreConfig::default()).unwrap();
        assert!(!s.marker("articles").unwrap().defined);
    }

    #[test]
    fn worked_example_nulls() {
        let lex = Lexicon::reference();
        let conv = alternation();
        let exact = exact_null::<f64>(&conv, "C", "articles", &lex).unwrap();
        let closed = analytic_null::<f64>(&conv, "C", "articles", &lex).unwrap();
        assert!((exact.mean - 2.0 / 3.0).abs() < 1e-12);
        assert!((exact.std - (1.0f64 / 18.0).sqrt()).abs() < 1e-12);
        assert_eq!(exact, closed);
        assert!((closed.std - 0.2357).abs() < 5e-5);
        let z = marker_z(0.5, closed.mean, closed.std).unwrap();
        assert!((z + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12, "{z}");
    }

    #[test]
    fn marker_z_cases() {
        assert_eq!(marker_z(0.4f64, 0.4, 0.1), Ok(0.0));
        assert_eq!(marker_z(0.4f64, 0.3, 0.0), Err(DegenerateMarker));
    }

    #[test]
    fn singleton_mean() {
        let lex = Lexicon::reference();
        let cfg = ScoreConfig {
            method: NullMethod::Analytic,
            ..ScoreConfig::default()
        };
        let s = lsm_score::<f64>(&alternation(), "C", &lex, &cfg).unwrap();
        let defined: Vec<_> = s.per_marker.iter().filter(|m| m.defined).collect();
        assert_eq!(defined.len(), 1);
        assert_eq!(defined[0].marker, "articles");
        let expected = -(0.5f64).sqrt();
        assert!((s.mean_z.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn planted_copying_is_positive() {
        let lex = Lexicon::reference();
        let mut turns = Vec::new();
        for i in 0..30 {
            let lead = if i % 3 == 0 {
                "the plan"
            } else if i % 3 == 1 {
                "but zz"
            } else {
                "all zz"
            };
            turns.push(("M", lead));
            turns.push(("C", lead));
        }
        let conv = conversation(&turns);
        let cfg = ScoreConfig {
            permutations: 2000,
            ..ScoreConfig::default()
        };
        let s = lsm_score::<f64>(&conv, "C", &lex, &cfg).unwrap();
        assert!(s.mean_z.unwrap() > 0.0);
    }

    #[test]
    fn exact_rejects_large_speakers() {
        let lex = Lexicon::reference();
        let turns: Vec<_> = (0..20)
            .map(|i| (if i % 2 == 0 { "M" } else { "C" }, "the"))
            .collect();
        let cfg = ScoreConfig {
            method: NullMethod::ExactEnumeration,
            ..ScoreConfig::default()
        };
        assert!(matches!(
            lsm_score::<f64>(&conversation(&turns), "C", &lex, &cfg),
            Err(MatchError::EnumerationTooLarge(10))
        ));
    }

    #[test]
    fn unknown_speaker_and_marker() {
        let lex = Lexicon::reference();
        assert!(matches!(
            lsm_score::<f64>(&alternation(), "X", &lex, &ScoreConfig::default()),
            Err(MatchError::Transcript(TranscriptError::SpeakerNotFound(_)))
        ));
        assert!(matches!(
            observed_probability(&alternation(), "C", "nouns", &lex),
            Err(MatchError::UnknownMarker(_))
        ));
    }

    #[test]
    fn samples_match_summary() {
        let lex = Lexicon::reference();
        let conv = alternation();
        let samples = permutation_samples::<f64>(&conv, "C", "articles", &lex, 500, 9).unwrap();
        let null = permutation_null::<f64>(&conv, "C", "articles", &lex, 500, 9).unwrap();
        let mean = samples.iter().sum::<f64>() / 500.0;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 500.0;
        assert!((mean - null.mean).abs() < 1e-12);
        assert!((var.sqrt() - null.std).abs() < 1e-9);
    }

    #[test]
    fn f32_scores() {
        let lex = Lexicon::reference();
        let cfg = ScoreConfig {
            method: NullMethod::Analytic,
            ..ScoreConfig::default()
        };
        let s = lsm_score::<f32>(&alternation(), "C", &lex, &cfg).unwrap();
        assert!((s.mean_z.unwrap() + 0.70710677).abs() < 1e-6);
    }
}
