//! Word-category dictionaries.
//!
//! A [`Lexicon`] holds the eight function-word marker categories used for
//! style matching, plus any number of auxiliary categories (emotion,
//! negation, assent, ...) that are only used for frequency reporting.
//!
//! Two file layouts are accepted, see [`LexiconFormat`]. The native layout
//! is a sequence of `%category <name>` sections with one pattern per line:
//!
//! ```text
//! # comment
//! %category articles
//! a
//! an
//! the
//! %category negations
//! no
//! never
//! not*
//! ```
//!
//! A pattern is either a literal token or a stem followed by `*`, which
//! matches every token beginning with the stem (the stem itself included).

mod liwc;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use liwc::{default_liwc_names, parse_liwc_dic};

/// Names of the eight marker categories, in canonical order.
pub const MARKER_NAMES: [&str; 8] = [
    "quantifiers",
    "conjunctions",
    "adverbs",
    "auxiliary verbs",
    "prepositions",
    "articles",
    "personal pronouns",
    "impersonal pronouns",
];

/// Number of marker categories.
pub const MARKER_COUNT: usize = MARKER_NAMES.len();

const REFERENCE_LEXICON: &str = include_str!("../../data/reference.lexicon");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid pattern '{pattern}': {reason}")]
    InvalidPattern {
        pattern: String,
        reason: &'static str,
    },
    #[error("category '{category}' lists pattern '{pattern}' more than once")]
    DuplicatePattern { category: String, pattern: String },
    #[error("category '{0}' has no patterns")]
    EmptyCategory(String),
    #[error("category '{0}' is defined more than once")]
    DuplicateCategory(String),
    #[error("missing marker category '{0}'")]
    MissingMarker(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Input layout accepted by [`load_lexicon`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LexiconFormat {
    /// `%category <name>` sections.
    Native,
    /// Two-part LIWC `.dic` layout. Category ids are mapped to names with
    /// [`default_liwc_names`].
    LiwcDic,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    Literal(String),
    Prefix(String),
}

impl Pattern {
    pub fn parse(raw: &str) -> Result<Pattern, LexiconError> {
        let invalid = |reason| LexiconError::InvalidPattern {
            pattern: raw.to_string(),
            reason,
        };
        if raw.is_empty() {
            return Err(invalid("empty pattern"));
        }
        if raw.chars().any(char::is_whitespace) {
            return Err(invalid("patterns cannot contain whitespace"));
        }
        if raw.chars().any(char::is_uppercase) {
            return Err(invalid("patterns must be lowercase"));
        }
        match raw.find('*') {
            None => Ok(Pattern::Literal(raw.to_string())),
            Some(pos) if pos + 1 == raw.len() && pos > 0 => {
                Ok(Pattern::Prefix(raw[..pos].to_string()))
            }
            Some(0) => Err(invalid("wildcard needs a stem")),
            Some(_) => Err(invalid("'*' is only allowed as the final character")),
        }
    }

    pub fn matches(&self, token: &str) -> bool {
        match self {
            Pattern::Literal(word) => word == token,
            Pattern::Prefix(stem) => token.starts_with(stem.as_str()),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Literal(w) => f.write_str(w),
            Pattern::Prefix(s) => write!(f, "{s}*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerCategory {
    name: String,
    patterns: Vec<Pattern>,
}

impl MarkerCategory {
    /// Builds a category, rejecting empty pattern lists and duplicates.
    pub fn new(name: impl Into<String>, patterns: Vec<Pattern>) -> Result<Self, LexiconError> {
        let name = name.into();
        if patterns.is_empty() {
            return Err(LexiconError::EmptyCategory(name));
        }
        let mut seen = HashSet::new();
        for p in &patterns {
            if !seen.insert(p) {
                return Err(LexiconError::DuplicatePattern {
                    category: name,
                    pattern: p.to_string(),
                });
            }
        }
        Ok(MarkerCategory { name, patterns })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn matches(&self, token: &str) -> bool {
        self.patterns.iter().any(|p| p.matches(token))
    }
}

/// Bit set over the eight marker categories; bit `i` is marker `i` of the
/// lexicon's marker list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct MarkerMask(pub u8);

impl MarkerMask {
    pub fn contains(self, marker: usize) -> bool {
        self.0 & (1 << marker) != 0
    }

    pub fn insert(&mut self, marker: usize) {
        self.0 |= 1 << marker;
    }

    pub fn to_vec(self) -> Vec<bool> {
        (0..MARKER_COUNT).map(|m| self.contains(m)).collect()
    }
}

/// Token lookup table over every category of a lexicon.
#[derive(Debug, Clone, Default)]
struct CategoryIndex {
    literal: HashMap<String, Vec<usize>>,
    prefix: HashMap<String, Vec<usize>>,
    max_stem_chars: usize,
}

impl CategoryIndex {
    fn build<'a>(categories: impl Iterator<Item = &'a MarkerCategory>) -> Self {
        let mut idx = CategoryIndex::default();
        for (c, cat) in categories.enumerate() {
            for p in &cat.patterns {
                match p {
                    Pattern::Literal(w) => idx.literal.entry(w.clone()).or_default().push(c),
                    Pattern::Prefix(s) => {
                        idx.max_stem_chars = idx.max_stem_chars.max(s.chars().count());
                        idx.prefix.entry(s.clone()).or_default().push(c);
                    }
                }
            }
        }
        idx
    }

    /// Calls `hit` for every category matched by `token`. A category may be
    /// reported more than once when several of its patterns match.
    fn for_each_hit(&self, token: &str, mut hit: impl FnMut(usize)) {
        if let Some(cats) = self.literal.get(token) {
            cats.iter().copied().for_each(&mut hit);
        }
        if self.prefix.is_empty() {
            return;
        }
        for (n_chars, (start, ch)) in token.char_indices().enumerate() {
            if n_chars >= self.max_stem_chars {
                break;
            }
            let end = start + ch.len_utf8();
            if let Some(cats) = self.prefix.get(&token[..end]) {
                cats.iter().copied().for_each(&mut hit);
            }
        }
    }
}

/// Immutable set of marker and auxiliary categories.
#[derive(Debug, Clone)]
pub struct Lexicon {
    markers: Vec<MarkerCategory>,
    auxiliary: Vec<MarkerCategory>,
    index: CategoryIndex,
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.markers == other.markers && self.auxiliary == other.auxiliary
    }
}

impl Lexicon {
    /// Splits `categories` into the marker set and auxiliary categories.
    ///
    /// Every name in [`MARKER_NAMES`] must be present. Marker order follows
    /// the input order.
    pub fn from_categories(categories: Vec<MarkerCategory>) -> Result<Self, LexiconError> {
        let mut seen = HashSet::new();
        for cat in &categories {
            if !seen.insert(cat.name.clone()) {
                return Err(LexiconError::DuplicateCategory(cat.name.clone()));
            }
        }
        if let Some(missing) = MARKER_NAMES.iter().find(|n| !seen.contains(**n)) {
            return Err(LexiconError::MissingMarker(missing.to_string()));
        }
        let (markers, auxiliary): (Vec<_>, Vec<_>) = categories
            .into_iter()
            .partition(|c| MARKER_NAMES.contains(&c.name.as_str()));
        let index = CategoryIndex::build(markers.iter().chain(auxiliary.iter()));
        Ok(Lexicon {
            markers,
            auxiliary,
            index,
        })
    }

    /// The bundled open reference lexicon.
    pub fn reference() -> Lexicon {
        load_lexicon(REFERENCE_LEXICON.as_bytes(), LexiconFormat::Native)
            .expect("bundled reference lexicon is valid")
    }

    pub fn markers(&self) -> &[MarkerCategory] {
        &self.markers
    }

    pub fn auxiliary(&self) -> &[MarkerCategory] {
        &self.auxiliary
    }

    /// Markers followed by auxiliary categories.
    pub fn categories(&self) -> impl Iterator<Item = &MarkerCategory> {
        self.markers.iter().chain(self.auxiliary.iter())
    }

    pub fn category(&self, name: &str) -> Option<&MarkerCategory> {
        self.categories().find(|c| c.name == name)
    }

    pub fn marker_names(&self) -> Vec<&str> {
        self.markers.iter().map(|c| c.name.as_str()).collect()
    }

    /// Marker categories matched by a single token.
    pub fn token_markers(&self, token: &str) -> MarkerMask {
        let mut mask = MarkerMask::default();
        self.index.for_each_hit(token, |c| {
            if c < MARKER_COUNT {
                mask.insert(c);
            }
        });
        mask
    }

    /// Marker categories present anywhere in `tokens`.
    pub fn incidence_mask<S: AsRef<str>>(&self, tokens: &[S]) -> MarkerMask {
        let mut mask = MarkerMask::default();
        for t in tokens {
            mask.0 |= self.token_markers(t.as_ref()).0;
            if mask.0 == u8::MAX {
                break;
            }
        }
        mask
    }

    /// Per-marker flag: does any token match any pattern of the marker?
    pub fn marker_incidence<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<bool> {
        self.incidence_mask(tokens).to_vec()
    }

    /// Number of tokens matching each category, markers first. A token
    /// counts once per category it matches.
    pub fn category_counts<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let n_cat = self.markers.len() + self.auxiliary.len();
        let mut counts = vec![0usize; n_cat];
        let mut hit = vec![false; n_cat];
        let mut touched = Vec::new();
        for t in tokens {
            self.index.for_each_hit(t.as_ref(), |c| {
                if !hit[c] {
                    hit[c] = true;
                    touched.push(c);
                }
            });
            for c in touched.drain(..) {
                counts[c] += 1;
                hit[c] = false;
            }
        }
        counts
    }

    /// Percentage of tokens falling in each category (markers first, then
    /// auxiliary categories, in lexicon order).
    pub fn category_percentages<T: Scalar, S: AsRef<str>>(
        &self,
        tokens: &[S],
    ) -> Result<CategoryPercentages<T>, EmptyText> {
        if tokens.is_empty() {
            return Err(EmptyText);
        }
        let total = T::from_count(tokens.len());
        let hundred = T::lit(100.0);
        let entries = self
            .categories()
            .zip(self.category_counts(tokens))
            .map(|(cat, n)| (cat.name.clone(), hundred * T::from_count(n) / total))
            .collect();
        Ok(CategoryPercentages { entries })
    }

    /// Serializes to the native `%category` layout.
    pub fn to_native(&self) -> String {
        let mut out = String::new();
        for cat in self.categories() {
            out.push_str("%category ");
            out.push_str(&cat.name);
            out.push('\n');
            for p in &cat.patterns {
                out.push_str(&p.to_string());
                out.push('\n');
            }
        }
        out
    }
}

/// Category percentages are undefined for an empty token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("percentages are undefined for an empty token sequence")]
pub struct EmptyText;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryPercentages<T> {
    pub entries: Vec<(String, T)>,
}

impl<T: Copy> CategoryPercentages<T> {
    pub fn get(&self, name: &str) -> Option<T> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// Reads a lexicon from `source`.
pub fn load_lexicon<R: Read>(
    mut source: R,
    format: LexiconFormat,
) -> Result<Lexicon, LexiconError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let categories = match format {
        LexiconFormat::Native => parse_native(&text)?,
        LexiconFormat::LiwcDic => parse_liwc_dic(&text, &default_liwc_names())?,
    };
    Lexicon::from_categories(categories)
}

fn parse_native(text: &str) -> Result<Vec<MarkerCategory>, LexiconError> {
    let mut sections: Vec<(String, Vec<Pattern>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('%') {
            let name = rest
                .strip_prefix("category")
                .filter(|r| r.starts_with(char::is_whitespace))
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| LexiconError::Parse {
                    line: line_no,
                    message: format!("expected '%category <name>', found '{line}'"),
                })?;
            sections.push((name.to_lowercase(), Vec::new()));
            continue;
        }
        let (_, patterns) = sections.last_mut().ok_or_else(|| LexiconError::Parse {
            line: line_no,
            message: "pattern before the first %category header".into(),
        })?;
        let pattern = Pattern::parse(line).map_err(|e| LexiconError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        patterns.push(pattern);
    }
    sections
        .into_iter()
        .map(|(name, patterns)| MarkerCategory::new(name, patterns))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        crate::transcript::tokenize(s)
    }

    #[test]
    fn reference_sizes_match_table() {
        let lex = Lexicon::reference();
        let sizes: Vec<usize> = lex.markers().iter().map(MarkerCategory::len).collect();
        assert_eq!(sizes, vec![20, 28, 68, 147, 60, 4, 71, 46]);
        assert_eq!(lex.marker_names(), MARKER_NAMES.to_vec());
        let articles = lex.category("articles").unwrap();
        for w in ["a", "an", "the"] {
            assert!(articles.matches(w), "{w}");
        }
    }

    #[test]
    fn table_examples_are_in_reference() {
        let lex = Lexicon::reference();
        let examples = [
            ("quantifiers", ["all", "remaining", "somewhat"]),
            ("conjunctions", ["also", "but", "unless"]),
            ("adverbs", ["about", "especially", "perhaps"]),
            ("auxiliary verbs", ["am", "must", "might"]),
            ("prepositions", ["about", "besides", "near"]),
            ("personal pronouns", ["he", "she", "our"]),
            ("impersonal pronouns", ["anybody", "these", "it"]),
        ];
        for (cat, words) in examples {
            let c = lex.category(cat).unwrap();
            for w in words {
                assert!(c.matches(w), "{cat}: {w}");
            }
        }
    }

    #[test]
    fn incidence_of_example_sentence() {
        let lex = Lexicon::reference();
        let inc = lex.marker_incidence(&toks("I am near the door"));
        let by_name: HashMap<_, _> = lex.marker_names().into_iter().zip(inc).collect();
        assert!(by_name["personal pronouns"]);
        assert!(by_name["auxiliary verbs"]);
        assert!(by_name["prepositions"]);
        assert!(by_name["articles"]);
        assert!(!by_name["quantifiers"]);
    }

    #[test]
    fn incidence_empty_and_no_hits() {
        let lex = Lexicon::reference();
        let none: Vec<String> = Vec::new();
        assert_eq!(lex.marker_incidence(&none), vec![false; 8]);
        assert_eq!(lex.marker_incidence(&toks("zzz qqq")), vec![false; 8]);
    }

    #[test]
    fn empty_category_rejected() {
        let mut text = Lexicon::reference().to_native();
        text = text.replace(
            "%category articles\na\nan\nthe\nalot\n",
            "%category articles\n",
        );
        let err = load_lexicon(text.as_bytes(), LexiconFormat::Native).unwrap_err();
        assert!(
            matches!(err, LexiconError::EmptyCategory(ref n) if n == "articles"),
            "{err}"
        );
    }

    #[test]
    fn duplicate_pattern_rejected() {
        let text = Lexicon::reference()
            .to_native()
            .replace("%category articles\n", "%category articles\nthe\n");
        let err = load_lexicon(text.as_bytes(), LexiconFormat::Native).unwrap_err();
        assert!(
            matches!(err, LexiconError::DuplicatePattern { ref pattern, .. } if pattern == "the"),
            "{err}"
        );
    }

    #[test]
    fn missing_marker_is_named() {
        let text = "%category articles\nthe\n";
        let err = load_lexicon(text.as_bytes(), LexiconFormat::Native).unwrap_err();
        assert_eq!(err.to_string(), "missing marker category 'quantifiers'");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = load_lexicon("# header\nthe\n".as_bytes(), LexiconFormat::Native).unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }), "{err}");
        let err =
            load_lexicon("%category x\nab*c\n".as_bytes(), LexiconFormat::Native).unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }), "{err}");
        let err = load_lexicon("%categoryx\n".as_bytes(), LexiconFormat::Native).unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn wildcard_matches_stem_and_extensions() {
        let p = Pattern::parse("happ*").unwrap();
        assert!(p.matches("happ"));
        assert!(p.matches("happy"));
        assert!(p.matches("happiness"));
        assert!(!p.matches("hap"));
        assert!(!p.matches("unhappy"));
        assert!(Pattern::parse("*").is_err());
        assert!(Pattern::parse("The").is_err());
    }

    #[test]
    fn percentages() {
        let lex = Lexicon::reference();
        let p = lex
            .category_percentages::<f64, _>(&toks("yes ok zz zz zz zz zz zz zz zz"))
            .unwrap();
        assert_eq!(p.get("assent"), Some(20.0));
        let p = lex.category_percentages::<f64, _>(&toks("the")).unwrap();
        assert_eq!(p.get("articles"), Some(100.0));
        let none: Vec<&str> = Vec::new();
        assert_eq!(lex.category_percentages::<f64, _>(&none), Err(EmptyText));
    }

    #[test]
    fn multi_category_token_counts_in_each() {
        let lex = Lexicon::reference();
        let p = lex
            .category_percentages::<f64, _>(&toks("about zz"))
            .unwrap();
        assert_eq!(p.get("adverbs"), Some(50.0));
        assert_eq!(p.get("prepositions"), Some(50.0));
    }

    #[test]
    fn literal_and_prefix_hit_counts_once() {
        let cats = MARKER_NAMES
            .iter()
            .map(|n| MarkerCategory::new(*n, vec![Pattern::parse("q").unwrap()]).unwrap())
            .chain(std::iter::once(
                MarkerCategory::new(
                    "x",
                    vec![
                        Pattern::parse("good").unwrap(),
                        Pattern::parse("goo*").unwrap(),
                    ],
                )
                .unwrap(),
            ))
            .collect();
        let lex = Lexicon::from_categories(cats).unwrap();
        assert_eq!(lex.category_counts(&["good", "goose", "bad"])[8], 2);
    }

    #[test]
    fn native_round_trip() {
        let lex = Lexicon::reference();
        let again = load_lexicon(lex.to_native().as_bytes(), LexiconFormat::Native).unwrap();
        assert_eq!(lex, again);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn word() -> impl Strategy<Value = String> {
            prop::sample::select(vec![
                "the", "a", "about", "i", "am", "near", "but", "all", "it", "zz", "happy", "never",
                "yes", "we'll", "qq",
            ])
            .prop_map(String::from)
        }

        proptest! {
            #[test]
            fn incidence_is_monotone(a in prop::collection::vec(word(), 0..12),
                                     b in prop::collection::vec(word(), 0..12)) {
                let lex = Lexicon::reference();
                let before = lex.incidence_mask(&a);
                let mut joined = a.clone();
                joined.extend(b);
                let after = lex.incidence_mask(&joined);
                prop_assert_eq!(before.0 & !after.0, 0);
            }

            #[test]
            fn percentages_bounded_and_consistent(a in prop::collection::vec(word(), 1..20)) {
                let lex = Lexicon::reference();
                let pct = lex.category_percentages::<f64, _>(&a).unwrap();
                let inc = lex.marker_incidence(&a);
                for (i, (_, v)) in pct.entries.iter().enumerate() {
                    prop_assert!((0.0..=100.0).contains(v));
                    if i < MARKER_COUNT && !inc[i] {
                        prop_assert_eq!(*v, 0.0);
                    }
                }
            }
        }
    }
}
