//! Language style matching between speakers in a conversation, scored
//! against a within-speaker permutation null, together with the poll
//! windows and panel statistics used to relate scores to outcomes.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); null moments
//! are exact rationals. The aliases at the crate root fix `f64`.

pub mod lexicon;
pub mod matching;
pub mod polls;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod temporal;
pub mod transcript;
pub mod validation;

pub use lexicon::{load_lexicon, Lexicon, LexiconError, LexiconFormat, MARKER_COUNT, MARKER_NAMES};
pub use matching::{
    lsm_score, lsm_scores, turn_lsm, MatchError, NullMethod, Rational, ScoreConfig, ShuffleScheme,
};
pub use polls::{BoundaryRule, DebateSchedule, PollError};
pub use scalar::Scalar;
pub use stats::{PanelFactor, StatsError, TTestVariant};
pub use synth::{SynthConfig, SynthError};
pub use temporal::TemporalError;
pub use transcript::{Conversation, Role, TranscriptError, TranscriptFormat};

pub type MatchScore = matching::MatchScore<f64>;
pub type MarkerMatchStat = matching::MarkerMatchStat<f64>;
pub type PollObservation = polls::PollObservation<f64>;
pub type PollWindowDiff = polls::PollWindowDiff<f64>;
pub type PanelRow = stats::PanelRow<f64>;
pub type RegressionResult = stats::RegressionResult<f64>;
pub type TemporalProfile = temporal::TemporalProfile<f64>;
pub type GroupSummary = stats::GroupSummary<f64>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Poll(#[from] PollError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}
