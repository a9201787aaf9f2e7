use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use regex::Regex;
use serde::{Deserialize, Serialize};

use lsm_core::polls::{load_polls, PollObservation};
use lsm_core::transcript::{parse_transcript, SpeakerMap};
use lsm_core::{Conversation, DebateSchedule, Lexicon, LexiconFormat, Role, TranscriptFormat};

use crate::args::{
    CommonArgs, InputArgs, LexiconFormatArg, OutputFormat, PollArgs, SpeakerSelection,
    TranscriptFormatArg,
};

/// A problem with the invocation itself: missing files, bad flag values.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(message: impl Into<String>) -> anyhow::Error {
    ConfigError(message.into()).into()
}

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command-line arguments after the program name, verbatim.
    pub args: Vec<String>,
    pub inputs: Vec<String>,
    pub lexicon: String,
    pub permutations: usize,
    pub seed: u64,
    pub method: String,
    pub parts: usize,
    pub out: Option<String>,
    pub format: OutputFormat,
    pub flags: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], common: &CommonArgs, inputs: Vec<String>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: args.to_vec(),
            inputs,
            lexicon: common
                .lexicon
                .as_ref()
                .map_or_else(|| "reference".to_string(), |p| p.display().to_string()),
            permutations: common.permutations,
            seed: common.seed,
            method: lsm_core::NullMethod::from(common.method)
                .as_str()
                .to_string(),
            parts: common.parts,
            out: common.out.as_ref().map(|p| p.display().to_string()),
            format: common.format,
            flags: BTreeMap::new(),
        }
    }

    pub fn flag(mut self, name: &str, value: impl Serialize) -> Self {
        self.flags.insert(
            name.to_string(),
            serde_json::to_value(value).expect("flag serializes"),
        );
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }

    /// Finds the manifest in a CSV table, a JSON record, or a synthetic
    /// transcript.
    pub fn from_output(text: &str) -> Result<RunManifest> {
        if let Some(rest) = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("# manifest: "))
        {
            return serde_json::from_str(rest).context("parsing manifest line");
        }
        let doc: serde_json::Value =
            serde_json::from_str(text).context("file is neither a table nor a JSON record")?;
        let m = doc
            .get("manifest")
            .or_else(|| doc.get("metadata").and_then(|m| m.get("manifest")))
            .ok_or_else(|| anyhow::anyhow!("no manifest found"))?;
        serde_json::from_value(m.clone()).context("parsing manifest field")
    }
}

pub fn load_lexicon(common: &CommonArgs) -> Result<Lexicon> {
    let Some(path) = &common.lexicon else {
        return Ok(Lexicon::reference());
    };
    let file = File::open(path)
        .map_err(|e| config_error(format!("cannot open lexicon {}: {e}", path.display())))?;
    let format = match common.lexicon_format {
        LexiconFormatArg::Native => LexiconFormat::Native,
        LexiconFormatArg::Liwc => LexiconFormat::LiwcDic,
        LexiconFormatArg::Auto => {
            if path.extension().is_some_and(|e| e == "dic") {
                LexiconFormat::LiwcDic
            } else {
                LexiconFormat::Native
            }
        }
    };
    lsm_core::load_lexicon(BufReader::new(file), format)
        .with_context(|| format!("lexicon {}", path.display()))
}

fn open_input(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| config_error(format!("cannot open {}: {e}", path.display())))
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("speakers.json")
}

fn load_one(path: &Path, format: TranscriptFormatArg) -> Result<Conversation> {
    let canonical = match format {
        TranscriptFormatArg::Canonical => true,
        TranscriptFormatArg::Plain => false,
        TranscriptFormatArg::Auto => path.extension().is_some_and(|e| e == "json"),
    };
    let fmt = if canonical {
        TranscriptFormat::Canonical
    } else {
        let side = sidecar_path(path);
        let map: SpeakerMap = serde_json::from_reader(open_input(&side)?)
            .with_context(|| format!("speaker map {}", side.display()))?;
        TranscriptFormat::Plain(map)
    };
    parse_transcript(open_input(path)?, &fmt)
        .with_context(|| format!("transcript {}", path.display()))
}

/// Loads, filters and sorts conversations by id.
pub fn load_conversations(input: &InputArgs) -> Result<Vec<Conversation>> {
    let drop = input
        .drop_utterances
        .as_deref()
        .map(Regex::new)
        .transpose()
        .map_err(|e| config_error(format!("bad --drop-utterances pattern: {e}")))?;
    let mut out = Vec::with_capacity(input.transcripts.len());
    for path in &input.transcripts {
        let mut c = load_one(path, input.transcript_format)?;
        if let Some(re) = &drop {
            c = c
                .retain_utterances(|u| !re.is_match(&u.text))
                .with_context(|| format!("transcript {} after filtering", path.display()))?;
        }
        out.push(c);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    let mut seen = HashSet::new();
    for c in &out {
        if !seen.insert(c.id.as_str()) {
            return Err(config_error(format!(
                "conversation id '{}' appears twice",
                c.id
            )));
        }
    }
    Ok(out)
}

/// Scored speakers of a conversation, sorted.
pub fn focal_speakers(c: &Conversation, selection: SpeakerSelection) -> Vec<String> {
    let mut v: Vec<String> = match selection {
        SpeakerSelection::Candidates => c.speakers_with_role(Role::Candidate),
        SpeakerSelection::All => c.speakers(),
    }
    .into_iter()
    .map(String::from)
    .collect();
    v.sort();
    v
}

pub fn input_names(input: &InputArgs) -> Vec<String> {
    input
        .transcripts
        .iter()
        .map(|p| p.display().to_string())
        .collect()
}

pub struct PollData {
    pub observations: Vec<PollObservation<f64>>,
    pub schedules: Vec<DebateSchedule>,
}

impl PollData {
    pub fn election_year(&self, debate_id: &str) -> Option<i32> {
        self.schedules
            .iter()
            .find(|s| s.debates.iter().any(|d| d.id == debate_id))
            .map(|s| s.election_year)
    }
}

pub fn load_poll_data(args: &PollArgs) -> Result<PollData> {
    let observations = load_polls(open_input(&args.polls)?)
        .with_context(|| format!("polls {}", args.polls.display()))?;
    let mut schedules = Vec::new();
    for path in &args.schedule {
        schedules.push(
            DebateSchedule::from_json(open_input(path)?)
                .with_context(|| format!("schedule {}", path.display()))?,
        );
    }
    schedules.sort_by_key(|s| s.election_year);
    Ok(PollData {
        observations,
        schedules,
    })
}

/// A named CSV table.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Table {
        Table {
            name: name.to_string(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// A command's result in both renderings.
pub struct Report {
    pub manifest: RunManifest,
    pub tables: Vec<Table>,
    pub record: serde_json::Map<String, serde_json::Value>,
}

impl Report {
    fn record_json(&self) -> String {
        let mut doc = serde_json::Map::new();
        doc.insert(
            "manifest".into(),
            serde_json::to_value(&self.manifest).expect("manifest serializes"),
        );
        doc.extend(self.record.clone());
        let mut s = serde_json::to_string_pretty(&doc).expect("record serializes");
        s.push('\n');
        s
    }

    fn table_bytes(&self, table: &Table) -> Result<Vec<u8>> {
        let mut buf = format!("# manifest: {}\n", self.manifest.to_json()).into_bytes();
        table.write_csv(&mut buf)?;
        Ok(buf)
    }

    /// Writes to `out` as `<name>.csv` files or one `<command>.json`, or to
    /// `stdout` when no directory is given.
    pub fn emit(
        &self,
        format: OutputFormat,
        out: Option<&Path>,
        stdout: &mut dyn Write,
    ) -> Result<()> {
        match (format, out) {
            (OutputFormat::Record, None) => stdout.write_all(self.record_json().as_bytes())?,
            (OutputFormat::Record, Some(dir)) => write_file(
                &dir.join(format!("{}.json", self.manifest.command)),
                self.record_json().as_bytes(),
            )?,
            (OutputFormat::Table, Some(dir)) => {
                for t in &self.tables {
                    write_file(&dir.join(format!("{}.csv", t.name)), &self.table_bytes(t)?)?;
                }
            }
            (OutputFormat::Table, None) => {
                writeln!(stdout, "# manifest: {}", self.manifest.to_json())?;
                for (i, t) in self.tables.iter().enumerate() {
                    if self.tables.len() > 1 {
                        if i > 0 {
                            writeln!(stdout)?;
                        }
                        writeln!(stdout, "# table: {}", t.name)?;
                    }
                    t.write_csv(&mut *stdout)?;
                }
            }
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
