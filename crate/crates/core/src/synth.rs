//! Synthetic conversations with known matching strength.
//!
//! Each utterance carries each marker independently: with probability `q1`
//! when the previous utterance carried it, `q0` otherwise. Marker tokens are
//! drawn from words that belong to exactly one marker category, so the
//! generated incidence is what the lexicon sees.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Lexicon, MarkerMask, Pattern, MARKER_COUNT};
use crate::transcript::{Conversation, RawTurn, Role, TranscriptError};

/// Metadata key holding the generating parameters.
pub const TRUTH_KEY: &str = "ground_truth";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{what} = {value} for marker {marker} is outside [0, 1]")]
    RateOutOfRange {
        what: &'static str,
        marker: usize,
        value: f64,
    },
    #[error("expected {MARKER_COUNT} marker rates, got {0}")]
    RateCount(usize),
    #[error("no lexicon word belongs to marker '{0}' alone")]
    EmptyPool(String),
    #[error("filler token '{0}' is not a single token outside every marker")]
    BadFiller(String),
    #[error("need at least one filler token per utterance")]
    NoFiller,
    #[error("need at least 2 utterances, got {0}")]
    TooFewUtterances(usize),
    #[error("need two distinct speakers")]
    Speakers,
    #[error("conversation carries no '{TRUTH_KEY}' metadata")]
    MissingMetadata,
    #[error("malformed ground truth: {0}")]
    BadMetadata(String),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerRates {
    /// Probability of the marker when the predecessor lacks it.
    pub q0: f64,
    /// Probability of the marker when the predecessor has it.
    pub q1: f64,
}

impl MarkerRates {
    pub fn new(q0: f64, q1: f64) -> Self {
        MarkerRates { q0, q1 }
    }

    pub fn uniform(q0: f64, q1: f64) -> Vec<MarkerRates> {
        vec![MarkerRates::new(q0, q1); MARKER_COUNT]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// The two speakers take turns.
    #[default]
    Alternating,
    /// A moderator turn precedes each pair of speaker turns.
    ModeratorInterleaved,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CopySchedule {
    /// `q1` holds for the whole conversation.
    #[default]
    Constant,
    /// Copy rate moves linearly from `start[m]` at the first utterance to
    /// the configured `q1` at the last.
    Linear { start: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub id: String,
    pub date: NaiveDate,
    pub n_utterances: usize,
    pub speakers: [String; 2],
    pub moderator: String,
    pub topology: Topology,
    /// Rates for every speaker without an override, in marker order.
    pub rates: Vec<MarkerRates>,
    pub speaker_rates: BTreeMap<String, Vec<MarkerRates>>,
    pub schedule: CopySchedule,
    pub seed: u64,
    pub filler: Vec<String>,
    pub filler_per_utterance: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            id: "synthetic".into(),
            date: NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date"),
            n_utterances: 200,
            speakers: ["A".into(), "B".into()],
            moderator: "MODERATOR".into(),
            topology: Topology::Alternating,
            rates: MarkerRates::uniform(0.3, 0.3),
            speaker_rates: BTreeMap::new(),
            schedule: CopySchedule::Constant,
            seed: 0,
            filler: [
                "lorem", "ipsum", "dolor", "amet", "tempor", "magna", "elit", "nisi",
            ]
            .map(String::from)
            .to_vec(),
            filler_per_utterance: 4,
        }
    }
}

/// Generating parameters stored with a synthetic conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rates: Vec<MarkerRates>,
    pub speaker_rates: BTreeMap<String, Vec<MarkerRates>>,
    pub schedule: CopySchedule,
    pub topology: Topology,
    pub seed: u64,
}

impl GroundTruth {
    pub fn rates_for(&self, speaker: &str) -> &[MarkerRates] {
        self.speaker_rates.get(speaker).unwrap_or(&self.rates)
    }
}

/// Words that carry exactly one marker, per marker.
pub fn marker_pools(lexicon: &Lexicon) -> Result<Vec<Vec<String>>, SynthError> {
    lexicon
        .markers()
        .iter()
        .enumerate()
        .map(|(m, cat)| {
            let mut pool: Vec<String> = cat
                .patterns()
                .iter()
                .map(|p| match p {
                    Pattern::Literal(w) | Pattern::Prefix(w) => w.clone(),
                })
                .filter(|w| is_single_token(w) && lexicon.token_markers(w) == only(m))
                .collect();
            pool.sort();
            pool.dedup();
            if pool.is_empty() {
                Err(SynthError::EmptyPool(cat.name().to_string()))
            } else {
                Ok(pool)
            }
        })
        .collect()
}

fn only(m: usize) -> MarkerMask {
    let mut mask = MarkerMask::default();
    mask.insert(m);
    mask
}

fn is_single_token(w: &str) -> bool {
    crate::transcript::tokenize(w) == [w.to_string()]
}

fn check_rates(rates: &[MarkerRates]) -> Result<(), SynthError> {
    if rates.len() != MARKER_COUNT {
        return Err(SynthError::RateCount(rates.len()));
    }
    for (marker, r) in rates.iter().enumerate() {
        for (what, value) in [("q0", r.q0), ("q1", r.q1)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthError::RateOutOfRange {
                    what,
                    marker,
                    value,
                });
            }
        }
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self, lexicon: &Lexicon) -> Result<Vec<Vec<String>>, SynthError> {
        if self.n_utterances < 2 {
            return Err(SynthError::TooFewUtterances(self.n_utterances));
        }
        let [a, b] = &self.speakers;
        if a == b
            || (self.topology == Topology::ModeratorInterleaved
                && (&self.moderator == a || &self.moderator == b))
        {
            return Err(SynthError::Speakers);
        }
        check_rates(&self.rates)?;
        for r in self.speaker_rates.values() {
            check_rates(r)?;
        }
        if let CopySchedule::Linear { start } = &self.schedule {
            let as_rates: Vec<MarkerRates> =
                start.iter().map(|&s| MarkerRates::new(0.0, s)).collect();
            check_rates(&as_rates)?;
        }
        if self.filler_per_utterance == 0 || self.filler.is_empty() {
            return Err(SynthError::NoFiller);
        }
        if let Some(bad) = self
            .filler
            .iter()
            .find(|w| !is_single_token(w) || lexicon.token_markers(w) != MarkerMask::default())
        {
            return Err(SynthError::BadFiller(bad.clone()));
        }
        marker_pools(lexicon)
    }

    fn speaker_at(&self, i: usize) -> (&str, Role) {
        match self.topology {
            Topology::Alternating => (&self.speakers[i % 2], Role::Candidate),
            Topology::ModeratorInterleaved => match i % 3 {
                0 => (&self.moderator, Role::Moderator),
                k => (&self.speakers[k - 1], Role::Candidate),
            },
        }
    }

    fn copy_rate(&self, rates: &[MarkerRates], m: usize, i: usize) -> f64 {
        match &self.schedule {
            CopySchedule::Constant => rates[m].q1,
            CopySchedule::Linear { start } => {
                let frac = i as f64 / (self.n_utterances - 1) as f64;
                start[m] + (rates[m].q1 - start[m]) * frac
            }
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            rates: self.rates.clone(),
            speaker_rates: self.speaker_rates.clone(),
            schedule: self.schedule.clone(),
            topology: self.topology,
            seed: self.seed,
        }
    }
}

/// Generates a conversation; identical configs give identical output.
pub fn generate(config: &SynthConfig, lexicon: &Lexicon) -> Result<Conversation, SynthError> {
    let pools = config.validate(lexicon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut previous = MarkerMask::default();
    let mut turns = Vec::with_capacity(config.n_utterances);
    for i in 0..config.n_utterances {
        let (speaker, role) = config.speaker_at(i);
        let rates = config.speaker_rates.get(speaker).unwrap_or(&config.rates);
        let mut words: Vec<&str> = Vec::new();
        let mut mask = MarkerMask::default();
        for (m, pool) in pools.iter().enumerate() {
            let p = if i > 0 && previous.contains(m) {
                config.copy_rate(rates, m, i)
            } else {
                rates[m].q0
            };
            if rng.gen_bool(p) {
                mask.insert(m);
                words.push(pool.choose(&mut rng).expect("pool is nonempty"));
            }
        }
        for _ in 0..config.filler_per_utterance {
            words.push(config.filler.choose(&mut rng).expect("filler is nonempty"));
        }
        words.shuffle(&mut rng);
        turns.push(RawTurn::new(speaker, role, words.join(" ")));
        previous = mask;
    }
    let mut conversation = Conversation::from_turns(config.id.clone(), config.date, None, turns)?;
    conversation.metadata.insert(
        TRUTH_KEY.to_string(),
        serde_json::to_value(config.ground_truth()).expect("ground truth serializes"),
    );
    Ok(conversation)
}

/// Reads back the parameters stored by [`generate`].
pub fn truth(conversation: &Conversation) -> Result<GroundTruth, SynthError> {
    let value = conversation
        .metadata
        .get(TRUTH_KEY)
        .ok_or(SynthError::MissingMetadata)?;
    serde_json::from_value(value.clone()).map_err(|e| SynthError::BadMetadata(e.to_string()))
}
