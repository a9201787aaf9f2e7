//! Turn-by-turn percentage similarity and score asymmetry.

use crate::lexicon::{Lexicon, MARKER_COUNT};
use crate::scalar::Scalar;
use crate::transcript::{adjacent_pairs, Conversation, TranscriptError, Utterance};

use super::{lsm_score, MatchError, ScoreConfig};

/// Added to the denominator of the per-category similarity.
pub const TURN_LSM_EPSILON: f64 = 0.0001;

fn marker_percentages<T: Scalar>(lexicon: &Lexicon, u: &Utterance) -> Option<[T; MARKER_COUNT]> {
    if u.tokens.is_empty() {
        return None;
    }
    let counts = lexicon.category_counts(&u.tokens);
    let total = T::from_count(u.tokens.len());
    Some(std::array::from_fn(|m| {
        T::lit(100.0) * T::from_count(counts[m]) / total
    }))
}

/// Mean over markers of `1 - |a - b| / (a + b + 0.0001)`.
fn pair_similarity<T: Scalar>(a: &[T; MARKER_COUNT], b: &[T; MARKER_COUNT]) -> T {
    let eps = T::lit(TURN_LSM_EPSILON);
    let total: T = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| T::one() - (x - y).abs() / (x + y + eps))
        .sum();
    total / T::from_count(MARKER_COUNT)
}

fn average_over_pairs<'a, T: Scalar>(
    lexicon: &Lexicon,
    pairs: impl Iterator<Item = (&'a Utterance, &'a Utterance)>,
) -> Option<T> {
    let sims: Vec<T> = pairs
        .filter_map(|(x, y)| {
            let px = marker_percentages::<T>(lexicon, x)?;
            let py = marker_percentages::<T>(lexicon, y)?;
            Some(pair_similarity(&px, &py))
        })
        .collect();
    (!sims.is_empty()).then(|| crate::scalar::mean(&sims))
}

/// Turn-by-turn percentage similarity between two speakers, averaged over
/// every adjacent turn pair in which one of them answers the other. Pairs
/// with an empty utterance are skipped.
pub fn turn_lsm<T: Scalar>(
    conversation: &Conversation,
    speaker_a: &str,
    speaker_b: &str,
    lexicon: &Lexicon,
) -> Result<T, MatchError> {
    for s in [speaker_a, speaker_b] {
        if !conversation.contains_speaker(s) {
            return Err(TranscriptError::SpeakerNotFound(s.to_string()).into());
        }
    }
    let us = conversation.utterances();
    let pairs = us.windows(2).map(|w| (&w[0], &w[1])).filter(|(x, y)| {
        (x.speaker == speaker_a && y.speaker == speaker_b)
            || (x.speaker == speaker_b && y.speaker == speaker_a)
    });
    average_over_pairs(lexicon, pairs).ok_or_else(|| {
        MatchError::NotComputable(format!(
            "no adjacent turns between '{speaker_a}' and '{speaker_b}'"
        ))
    })
}

/// Turn-by-turn similarity of `focal`'s responses to whoever spoke right
/// before, over the same pairs the permutation score uses.
pub fn turn_lsm_focal<T: Scalar>(
    conversation: &Conversation,
    focal: &str,
    lexicon: &Lexicon,
) -> Result<T, MatchError> {
    let us = conversation.utterances();
    let pairs = adjacent_pairs(conversation, focal)?;
    average_over_pairs(
        lexicon,
        pairs
            .iter()
            .map(|p| (&us[p.predecessor_index], &us[p.response_index])),
    )
    .ok_or_else(|| MatchError::NotComputable(format!("'{focal}' has no scorable responses")))
}

/// `mean_z(a) - mean_z(b)`; positive when `a` matches more than `b`.
pub fn lsm_asymmetry<T: Scalar>(
    conversation: &Conversation,
    speaker_a: &str,
    speaker_b: &str,
    lexicon: &Lexicon,
    config: &ScoreConfig,
) -> Result<T, MatchError> {
    let za = lsm_score::<T>(conversation, speaker_a, lexicon, config)?.mean_z;
    let zb = lsm_score::<T>(conversation, speaker_b, lexicon, config)?.mean_z;
    match (za, zb) {
        (Some(a), Some(b)) => Ok(a - b),
        _ => Err(MatchError::NotComputable(
            "a speaker has no defined marker".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::{RawTurn, Role};
    use chrono::NaiveDate;

    fn conversation(turns: &[(&str, &str)]) -> Conversation {
        let turns = turns.iter().map(|(s, t)| RawTurn::new(*s, Role::Other, *t));
        Conversation::from_turns(
            "t",
            NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
            None,
            turns,
        )
        .unwrap()
    }

    #[test]
    fn identical_texts_score_one() {
        let lex = Lexicon::reference();
        let c = conversation(&[
            ("A", "i think the plan is good"),
            ("B", "i think the plan is good"),
        ]);
        let s: f64 = turn_lsm(&c, "A", "B", &lex).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_category_difference() {
        let a = [10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b = [5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let first: f64 = 1.0 - 5.0 / 15.0001;
        assert!((first - 0.6667).abs() < 5e-5);
        let expected = (first + 7.0) / 8.0;
        assert!((pair_similarity::<f64>(&a, &b) - expected).abs() < 1e-15);
    }

    #[test]
    fn no_pairs_is_an_error() {
        let lex = Lexicon::reference();
        let c = conversation(&[("A", "the"), ("M", "the"), ("B", "the")]);
        assert!(matches!(
            turn_lsm::<f64>(&c, "A", "B", &lex),
            Err(MatchError::NotComputable(_))
        ));
    }

    #[test]
    fn focal_variant_uses_all_predecessors() {
        let lex = Lexicon::reference();
        let c = conversation(&[("M", "the"), ("A", "the"), ("B", "zz"), ("A", "zz")]);
        let s: f64 = turn_lsm_focal(&c, "A", &lex).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
