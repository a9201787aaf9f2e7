//! Converter for the two-part LIWC `.dic` layout:
//!
//! ```text
//! %
//! 1	funct
//! 17	article
//! %
//! a	1	17
//! abandon*	125	127
//! ```
//!
//! Entries whose category field is conditional, e.g. `(02 134)125/464`,
//! are assigned to every category listed after the closing parenthesis.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{LexiconError, MarkerCategory, Pattern};

/// LIWC 2007 category labels and the names used by this crate.
/// Labels not listed here keep their LIWC name.
pub fn default_liwc_names() -> HashMap<String, String> {
    [
        ("quant", "quantifiers"),
        ("conj", "conjunctions"),
        ("adverb", "adverbs"),
        ("auxverb", "auxiliary verbs"),
        ("preps", "prepositions"),
        ("article", "articles"),
        ("ppron", "personal pronouns"),
        ("ipron", "impersonal pronouns"),
        ("posemo", "positive emotion"),
        ("negemo", "negative emotion"),
        ("negate", "negations"),
        ("assent", "assent"),
        ("affect", "affect"),
        ("i", "first person singular"),
        ("we", "first person plural"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

/// Parses a `.dic` file into categories, ordered by category id. Words are
/// lowercased and repeated words within a category are collapsed.
pub fn parse_liwc_dic(
    text: &str,
    names: &HashMap<String, String>,
) -> Result<Vec<MarkerCategory>, LexiconError> {
    let parse_err = |line: usize, message: String| LexiconError::Parse { line, message };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        Some((_, "%")) => {}
        Some((n, other)) => return Err(parse_err(n, format!("expected '%', found '{other}'"))),
        None => return Err(parse_err(1, "empty dictionary".into())),
    }

    let mut labels: BTreeMap<u32, String> = BTreeMap::new();
    let mut closed = false;
    for (n, line) in lines.by_ref() {
        if line == "%" {
            closed = true;
            break;
        }
        let mut fields = line.split_whitespace();
        let id = fields
            .next()
            .and_then(|f| f.parse::<u32>().ok())
            .ok_or_else(|| parse_err(n, format!("expected '<id> <name>', found '{line}'")))?;
        let label = fields
            .next()
            .ok_or_else(|| parse_err(n, format!("category {id} has no name")))?;
        let name = names
            .get(label)
            .cloned()
            .unwrap_or_else(|| label.to_string());
        if labels.insert(id, name).is_some() {
            return Err(parse_err(n, format!("category id {id} defined twice")));
        }
    }
    if !closed {
        return Err(parse_err(
            text.lines().count(),
            "unterminated category header".into(),
        ));
    }

    let mut members: BTreeMap<u32, (Vec<Pattern>, HashSet<Pattern>)> = BTreeMap::new();
    for (n, line) in lines {
        let mut fields = entry_fields(line).into_iter();
        let word = fields.next().expect("line is nonempty").to_lowercase();
        let pattern = Pattern::parse(&word).map_err(|e| parse_err(n, e.to_string()))?;
        for field in fields {
            let field = field.as_str();
            for id in category_ids(field)
                .ok_or_else(|| parse_err(n, format!("bad category field '{field}' for '{word}'")))?
            {
                if !labels.contains_key(&id) {
                    return Err(parse_err(n, format!("unknown category id {id}")));
                }
                let (ordered, seen) = members.entry(id).or_default();
                if seen.insert(pattern.clone()) {
                    ordered.push(pattern.clone());
                }
            }
        }
    }

    labels
        .into_iter()
        .filter_map(|(id, name)| members.remove(&id).map(|(p, _)| (name, p)))
        .map(|(name, patterns)| MarkerCategory::new(name, patterns))
        .collect()
}

/// Whitespace-separated fields, keeping a parenthesised group such as
/// `(02 134)125/464` together.
fn entry_fields(line: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut open = false;
    for tok in line.split_whitespace() {
        if open {
            let last = out.last_mut().expect("group was opened");
            last.push(' ');
            last.push_str(tok);
        } else {
            out.push(tok.to_string());
        }
        open = if open {
            !tok.contains(')')
        } else {
            tok.starts_with('(') && !tok.contains(')')
        };
    }
    out
}

fn category_ids(field: &str) -> Option<Vec<u32>> {
    let tail = match field.rfind(')') {
        Some(pos) => &field[pos + 1..],
        None => field,
    };
    tail.split('/').map(|s| s.parse::<u32>().ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{load_lexicon, LexiconFormat, MARKER_NAMES};

    fn sample_dic() -> String {
        let mut s = String::from("%\n");
        let labels = [
            "quant", "conj", "adverb", "auxverb", "preps", "article", "ppron", "ipron",
        ];
        for (i, l) in labels.iter().enumerate() {
            s.push_str(&format!("{}\t{}\n", i + 1, l));
        }
        s.push_str("126\tposemo\n%\n");
        s.push_str("all\t1\nbut\t2\nabout\t3\t5\nam\t4\nthe\t6\nA\t6\nhe\t7\nit\t8\n");
        s.push_str("happ*\t126\nkind\t(02 134)126/3\n");
        s
    }

    #[test]
    fn converts_dic_layout() {
        let lex = load_lexicon(sample_dic().as_bytes(), LexiconFormat::LiwcDic).unwrap();
        assert_eq!(lex.marker_names(), MARKER_NAMES.to_vec());
        let articles = lex.category("articles").unwrap();
        assert_eq!(articles.len(), 2);
        assert!(articles.matches("a"));
        let adverbs = lex.category("adverbs").unwrap();
        assert!(adverbs.matches("about") && adverbs.matches("kind"));
        let pos = lex.category("positive emotion").unwrap();
        assert!(pos.matches("happiness") && pos.matches("kind"));
    }

    #[test]
    fn repeated_words_collapse() {
        let dic = sample_dic() + "the\t6\n";
        let lex = load_lexicon(dic.as_bytes(), LexiconFormat::LiwcDic).unwrap();
        assert_eq!(lex.category("articles").unwrap().len(), 2);
    }

    #[test]
    fn unknown_id_reports_line() {
        let dic = sample_dic() + "zebra\t999\n";
        let err = load_lexicon(dic.as_bytes(), LexiconFormat::LiwcDic).unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 22, .. }), "{err}");
    }

    #[test]
    fn missing_header() {
        let err = load_lexicon("1\tfoo\n".as_bytes(), LexiconFormat::LiwcDic).unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 1, .. }));
    }
}
