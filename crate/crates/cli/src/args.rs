use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lsm_core::{BoundaryRule, NullMethod, TTestVariant};

#[derive(Debug, Parser)]
#[command(
    name = "lsm",
    version,
    about = "Language style matching scores, poll windows and panel statistics for debate transcripts",
    after_help = "The worker count defaults to the number of CPUs; set LSM_WORKERS to override it."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every (transcript, speaker) pair against the permutation null.
    Score(ScoreArgs),
    /// Scores joined with poll changes: group comparison, regressions and turn-by-turn correlation.
    Study1(Study1Args),
    /// Cumulative-prefix score curves grouped by the sign of the poll change.
    Temporal(TemporalArgs),
    /// Run the synthetic null-calibration, oracle-agreement and planted-recovery suites.
    Validate(ValidateArgs),
    /// Write synthetic transcripts with known copying rates.
    Synth(SynthArgs),
    /// Re-run the command recorded in an output file's manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Mc,
    Analytic,
    Exact,
}

impl From<MethodArg> for NullMethod {
    fn from(m: MethodArg) -> NullMethod {
        match m {
            MethodArg::Mc => NullMethod::MonteCarlo,
            MethodArg::Analytic => NullMethod::Analytic,
            MethodArg::Exact => NullMethod::ExactEnumeration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    /// CSV tables with a `# manifest:` first line.
    Table,
    /// One JSON document with a `manifest` field.
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LexiconFormatArg {
    /// `.dic` files are read as LIWC dictionaries, anything else as native.
    Auto,
    Native,
    Liwc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TranscriptFormatArg {
    /// `.json` files are canonical; others are plain text with a
    /// `<name>.speakers.json` sidecar.
    Auto,
    Canonical,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeakerSelection {
    /// Speakers with the candidate role.
    Candidates,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryArg {
    /// Polls dated on a debate day count toward that debate's after-window.
    After,
    /// Polls dated on a debate day are left out.
    Exclude,
}

impl From<BoundaryArg> for BoundaryRule {
    fn from(b: BoundaryArg) -> BoundaryRule {
        match b {
            BoundaryArg::After => BoundaryRule::DebateDayAfter,
            BoundaryArg::Exclude => BoundaryRule::Exclude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TTestArg {
    Welch,
    Pooled,
}

impl From<TTestArg> for TTestVariant {
    fn from(t: TTestArg) -> TTestVariant {
        match t {
            TTestArg::Welch => TTestVariant::Welch,
            TTestArg::Pooled => TTestVariant::Pooled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    None,
    /// Resample with replacement instead of permuting.
    BiasedNull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyArg {
    Alternating,
    Moderator,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CommonArgs {
    /// Lexicon file; the built-in reference lexicon when omitted.
    #[arg(long, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LexiconFormatArg::Auto)]
    pub lexicon_format: LexiconFormatArg,
    /// Monte Carlo replicates per null.
    #[arg(long, default_value_t = 10_000, value_name = "N")]
    pub permutations: usize,
    #[arg(long, default_value_t = 0, value_name = "N")]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = MethodArg::Mc)]
    pub method: MethodArg,
    /// Parts per conversation for prefix curves.
    #[arg(long, default_value_t = 40, value_name = "N")]
    pub parts: usize,
    /// Output directory; standard output when omitted.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InputArgs {
    /// Transcript files.
    #[arg(required = true, value_name = "TRANSCRIPT")]
    pub transcripts: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = TranscriptFormatArg::Auto)]
    pub transcript_format: TranscriptFormatArg,
    /// Drop utterances whose text matches this regular expression
    /// (e.g. moderator housekeeping) before scoring.
    #[arg(long, value_name = "REGEX")]
    pub drop_utterances: Option<String>,
    #[arg(long, value_enum, default_value_t = SpeakerSelection::Candidates)]
    pub speakers: SpeakerSelection,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PollArgs {
    /// Poll table with header `candidate,date,percent`.
    #[arg(long, value_name = "CSV")]
    pub polls: PathBuf,
    /// Debate schedule JSON; repeat for several election years.
    #[arg(long, required = true, value_name = "JSON")]
    pub schedule: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = BoundaryArg::After)]
    pub boundary: BoundaryArg,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Study1Args {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub polls: PollArgs,
    #[arg(long, value_enum, default_value_t = TTestArg::Welch)]
    pub t_test: TTestArg,
}

#[derive(Debug, Clone, Args)]
pub struct TemporalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub polls: PollArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = Fault::None)]
    pub fault: Fault,
    /// Smaller batches, for a fast smoke run.
    #[arg(long)]
    pub quick: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of transcripts.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 200)]
    pub utterances: usize,
    /// Marker probability when the previous utterance lacks the marker.
    #[arg(long, default_value_t = 0.3)]
    pub q0: f64,
    /// Marker probability when the previous utterance has the marker.
    #[arg(long, default_value_t = 0.3)]
    pub q1: f64,
    /// Let the copy rate move linearly from this value to q1.
    #[arg(long, value_name = "Q")]
    pub ramp_from: Option<f64>,
    #[arg(long, value_enum, default_value_t = TopologyArg::Alternating)]
    pub topology: TopologyArg,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// A file written by any command.
    pub file: PathBuf,
}
