//! Conversation transcripts: tokenization, parsing, turn merging and the
//! (predecessor, response) pairs on which matching is measured.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("transcript '{id}' has {found} distinct speaker(s); at least 2 are required")]
    TooFewSpeakers { id: String, found: usize },
    #[error("speaker '{0}' does not appear in the conversation")]
    SpeakerNotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TranscriptError {
    fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        TranscriptError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Candidate,
    Moderator,
    Questioner,
    Other,
}

/// Lowercase word tokens. Splits on every character that is not a letter,
/// digit or apostrophe; apostrophes are kept inside tokens and trimmed from
/// their ends.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || is_apostrophe(c)))
        .map(|t| t.trim_matches(is_apostrophe))
        .filter(|t| !t.is_empty())
        .map(|t| t.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase())
        .collect()
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{2018}')
}

/// One unmerged turn as it appears in a source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTurn {
    pub speaker: String,
    pub role: Role,
    pub text: String,
}

impl RawTurn {
    pub fn new(speaker: impl Into<String>, role: Role, text: impl Into<String>) -> Self {
        RawTurn {
            speaker: speaker.into(),
            role,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub index: usize,
    pub speaker: String,
    pub role: Role,
    pub text: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub id: String,
    pub date: NaiveDate,
    pub election_year: Option<i32>,
    utterances: Vec<Utterance>,
    /// Free-form annotations carried through the canonical format.
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Conversation {
    /// Builds a conversation from raw turns, merging consecutive turns by
    /// the same speaker (texts joined with one space, first role kept).
    pub fn from_turns(
        id: impl Into<String>,
        date: NaiveDate,
        election_year: Option<i32>,
        turns: impl IntoIterator<Item = RawTurn>,
    ) -> Result<Self, TranscriptError> {
        let id = id.into();
        let mut merged: Vec<RawTurn> = Vec::new();
        for turn in turns {
            match merged.last_mut() {
                Some(last) if last.speaker == turn.speaker => {
                    if !turn.text.is_empty() {
                        if !last.text.is_empty() {
                            last.text.push(' ');
                        }
                        last.text.push_str(&turn.text);
                    }
                }
                _ => merged.push(turn),
            }
        }
        let distinct: HashSet<&str> = merged.iter().map(|t| t.speaker.as_str()).collect();
        if distinct.len() < 2 {
            return Err(TranscriptError::TooFewSpeakers {
                id,
                found: distinct.len(),
            });
        }
        let utterances = merged
            .into_iter()
            .enumerate()
            .map(|(index, t)| Utterance {
                index,
                tokens: tokenize(&t.text),
                speaker: t.speaker,
                role: t.role,
                text: t.text,
            })
            .collect();
        Ok(Conversation {
            id,
            date,
            election_year,
            utterances,
            metadata: BTreeMap::new(),
        })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Distinct speakers in order of first appearance.
    pub fn speakers(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.utterances
            .iter()
            .map(|u| u.speaker.as_str())
            .filter(|s| seen.insert(*s))
            .collect()
    }

    /// Speakers with the given role, in order of first appearance.
    pub fn speakers_with_role(&self, role: Role) -> Vec<&str> {
        self.speakers()
            .into_iter()
            .filter(|s| {
                self.utterances
                    .iter()
                    .any(|u| u.speaker == *s && u.role == role)
            })
            .collect()
    }

    pub fn contains_speaker(&self, speaker: &str) -> bool {
        self.utterances.iter().any(|u| u.speaker == speaker)
    }

    /// Drops every utterance rejected by `keep` and re-merges turns.
    pub fn retain_utterances(
        &self,
        keep: impl Fn(&Utterance) -> bool,
    ) -> Result<Conversation, TranscriptError> {
        let turns = self
            .utterances
            .iter()
            .filter(|u| keep(u))
            .map(|u| RawTurn::new(u.speaker.clone(), u.role, u.text.clone()));
        let mut conv =
            Conversation::from_turns(self.id.clone(), self.date, self.election_year, turns)?;
        conv.metadata = self.metadata.clone();
        Ok(conv)
    }

    /// Canonical JSON rendering, the inverse of [`parse_transcript`] with
    /// [`TranscriptFormat::Canonical`].
    pub fn to_canonical_json(&self) -> String {
        let doc = CanonicalTranscript {
            id: self.id.clone(),
            date: self.date,
            election_year: self.election_year,
            utterances: self
                .utterances
                .iter()
                .map(|u| RawTurn::new(u.speaker.clone(), u.role, u.text.clone()))
                .collect(),
            metadata: self.metadata.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("transcript serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonicalTranscript {
    id: String,
    date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    election_year: Option<i32>,
    utterances: Vec<RawTurn>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, serde_json::Value>,
}

/// Sidecar for the plain `SPEAKER: text` format: conversation header fields
/// plus the role of every speaker label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerMap {
    pub id: String,
    pub date: NaiveDate,
    #[serde(default)]
    pub election_year: Option<i32>,
    pub speakers: BTreeMap<String, Role>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranscriptFormat {
    /// JSON document `{id, date, election_year?, utterances: [{speaker, role, text}]}`.
    Canonical,
    /// Lines of `SPEAKER: text`. A line whose label is not a mapped speaker
    /// continues the previous turn; an all-caps label that is not mapped is
    /// an error.
    Plain(SpeakerMap),
}

pub fn parse_transcript<R: Read>(
    mut source: R,
    format: &TranscriptFormat,
) -> Result<Conversation, TranscriptError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    match format {
        TranscriptFormat::Canonical => parse_canonical(&text),
        TranscriptFormat::Plain(map) => parse_plain(&text, map),
    }
}

fn parse_canonical(text: &str) -> Result<Conversation, TranscriptError> {
    let doc: CanonicalTranscript = serde_json::from_str(text).map_err(|e| {
        TranscriptError::parse(
            format!("line {}, column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let mut conv = Conversation::from_turns(doc.id, doc.date, doc.election_year, doc.utterances)?;
    conv.metadata = doc.metadata;
    Ok(conv)
}

fn looks_like_label(label: &str) -> bool {
    label.len() <= 40
        && label.chars().any(|c| c.is_alphabetic())
        && label
            .chars()
            .all(|c| c.is_uppercase() || c.is_ascii_digit() || " .'-".contains(c))
}

fn parse_plain(text: &str, map: &SpeakerMap) -> Result<Conversation, TranscriptError> {
    let mut turns: Vec<RawTurn> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let labelled = line
            .split_once(':')
            .map(|(l, rest)| (l.trim(), rest.trim()));
        match labelled {
            Some((label, rest)) if map.speakers.contains_key(label) => {
                turns.push(RawTurn::new(label, map.speakers[label], rest));
            }
            Some((label, _)) if looks_like_label(label) => {
                return Err(TranscriptError::parse(
                    format!("line {}", i + 1),
                    format!("speaker '{label}' is not in the speaker map"),
                ));
            }
            _ => match turns.last_mut() {
                Some(last) => {
                    if !last.text.is_empty() {
                        last.text.push(' ');
                    }
                    last.text.push_str(line);
                }
                None => {
                    return Err(TranscriptError::parse(
                        format!("line {}", i + 1),
                        "text before the first 'SPEAKER:' label",
                    ))
                }
            },
        }
    }
    Conversation::from_turns(map.id.clone(), map.date, map.election_year, turns)
}

/// A focal-speaker response and the utterance right before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdjacentPair {
    pub predecessor_index: usize,
    pub response_index: usize,
}

/// One pair per utterance of `focal` that has a predecessor.
pub fn adjacent_pairs(
    conversation: &Conversation,
    focal: &str,
) -> Result<Vec<AdjacentPair>, TranscriptError> {
    if !conversation.contains_speaker(focal) {
        return Err(TranscriptError::SpeakerNotFound(focal.to_string()));
    }
    Ok(conversation
        .utterances
        .iter()
        .filter(|u| u.index > 0 && u.speaker == focal)
        .map(|u| AdjacentPair {
            predecessor_index: u.index - 1,
            response_index: u.index,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2012, 10, 3).unwrap()
    }

    fn conv(speakers: &[&str]) -> Conversation {
        let turns = speakers
            .iter()
            .map(|s| RawTurn::new(*s, Role::Candidate, format!("words from {s}")));
        Conversation::from_turns("d", date(), Some(2012), turns).unwrap()
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("I'm ready."), vec!["i'm", "ready"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("The THE the"), vec!["the", "the", "the"]);
        assert_eq!(
            tokenize("'quoted' it\u{2019}s--fine"),
            vec!["quoted", "it's", "fine"]
        );
        assert_eq!(
            tokenize("in 1976, 26 debates"),
            vec!["in", "1976", "26", "debates"]
        );
    }

    #[test]
    fn merges_consecutive_turns() {
        let c = conv(&["A", "A", "B"]);
        assert_eq!(c.len(), 2);
        assert_eq!(c.utterances()[0].text, "words from A words from A");
        assert_eq!(conv(&["A", "B", "A"]).len(), 3);
    }

    #[test]
    fn single_speaker_rejected() {
        let turns = vec![
            RawTurn::new("A", Role::Candidate, "x"),
            RawTurn::new("A", Role::Candidate, "y"),
        ];
        let err = Conversation::from_turns("d", date(), None, turns).unwrap_err();
        assert!(matches!(
            err,
            TranscriptError::TooFewSpeakers { found: 1, .. }
        ));
    }

    #[test]
    fn pairs_for_focal_speaker() {
        let c = conv(&["M", "C", "M", "C"]);
        let pairs: Vec<_> = adjacent_pairs(&c, "C")
            .unwrap()
            .iter()
            .map(|p| (p.predecessor_index, p.response_index))
            .collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3)]);

        let c = conv(&["C", "M", "C"]);
        let pairs: Vec<_> = adjacent_pairs(&c, "C")
            .unwrap()
            .iter()
            .map(|p| (p.predecessor_index, p.response_index))
            .collect();
        assert_eq!(pairs, vec![(1, 2)]);

        assert!(matches!(
            adjacent_pairs(&c, "X"),
            Err(TranscriptError::SpeakerNotFound(_))
        ));
    }

    #[test]
    fn canonical_round_trip() {
        let src = r#"{
            "id": "1988-1", "date": "1988-09-25", "election_year": 1988,
            "utterances": [
                {"speaker": "LEHRER", "role": "moderator", "text": "Good evening."},
                {"speaker": "BUSH", "role": "candidate", "text": "Thank you, Jim."},
                {"speaker": "BUSH", "role": "candidate", "text": "I'm glad to be here."},
                {"speaker": "DUKAKIS", "role": "candidate", "text": "So am I."}
            ]}"#;
        let c = parse_transcript(src.as_bytes(), &TranscriptFormat::Canonical).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(
            c.utterances()[1].text,
            "Thank you, Jim. I'm glad to be here."
        );
        let again = parse_transcript(
            c.to_canonical_json().as_bytes(),
            &TranscriptFormat::Canonical,
        )
        .unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn canonical_errors_have_location() {
        let err = parse_transcript("{\n \"id\": 3 }".as_bytes(), &TranscriptFormat::Canonical)
            .unwrap_err();
        match err {
            TranscriptError::Parse { location, .. } => assert!(location.starts_with("line 2")),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn plain_format() {
        let map = SpeakerMap {
            id: "x".into(),
            date: date(),
            election_year: None,
            speakers: [
                ("LEHRER".to_string(), Role::Moderator),
                ("OBAMA".to_string(), Role::Candidate),
            ]
            .into_iter()
            .collect(),
        };
        let src = "LEHRER: Welcome.\nThe first question: jobs.\n\nOBAMA: Thanks, Jim.\nOBAMA: And more.\nLEHRER: Ok.";
        let c = parse_transcript(src.as_bytes(), &TranscriptFormat::Plain(map.clone())).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.utterances()[0].text, "Welcome. The first question: jobs.");
        assert_eq!(c.utterances()[0].role, Role::Moderator);
        assert_eq!(c.utterances()[1].text, "Thanks, Jim. And more.");

        let err = parse_transcript(
            "ROMNEY: hi".as_bytes(),
            &TranscriptFormat::Plain(map.clone()),
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("line 1"), "{err}");
        let err = parse_transcript("hello\nOBAMA: hi".as_bytes(), &TranscriptFormat::Plain(map))
            .unwrap_err();
        assert!(err.to_string().starts_with("line 1"), "{err}");
    }

    #[test]
    fn retain_remerges() {
        let c = conv(&["A", "M", "A", "B"]);
        let filtered = c.retain_utterances(|u| u.speaker != "M").unwrap();
        assert_eq!(filtered.speakers(), vec!["A", "B"]);
        assert_eq!(filtered.len(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn turns() -> impl Strategy<Value = Vec<RawTurn>> {
            prop::collection::vec((0..3usize, "[a-z ]{0,12}"), 2..30).prop_map(|v| {
                v.into_iter()
                    .map(|(s, t)| RawTurn::new(["A", "B", "C"][s], Role::Other, t))
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn no_consecutive_same_speaker(turns in turns()) {
                if let Ok(c) = Conversation::from_turns("p", date(), None, turns) {
                    for w in c.utterances().windows(2) {
                        prop_assert_ne!(&w[0].speaker, &w[1].speaker);
                    }
                    for (i, u) in c.utterances().iter().enumerate() {
                        prop_assert_eq!(u.index, i);
                        prop_assert_eq!(&u.tokens, &tokenize(&u.text));
                    }
                }
            }

            #[test]
            fn pair_count_rule(turns in turns()) {
                if let Ok(c) = Conversation::from_turns("p", date(), None, turns) {
                    for s in c.speakers() {
                        let n = c.utterances().iter().filter(|u| u.speaker == s).count();
                        let opening = usize::from(c.utterances()[0].speaker == s);
                        prop_assert_eq!(adjacent_pairs(&c, s).unwrap().len(), n - opening);
                    }
                }
            }

            #[test]
            fn canonical_parse_inverts_serialize(turns in turns()) {
                if let Ok(c) = Conversation::from_turns("p", date(), Some(2000), turns) {
                    let again = parse_transcript(c.to_canonical_json().as_bytes(), &TranscriptFormat::Canonical).unwrap();
                    prop_assert_eq!(c, again);
                }
            }
        }
    }
}
