use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{summarize, GroupSummary, StatsError};
use crate::matching::MatchScore;
use crate::polls::PollWindowDiff;
use crate::scalar::Scalar;

/// A match score joined with the candidate's poll change for the same debate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedRow<T> {
    pub debate_id: String,
    pub candidate: String,
    pub z: T,
    pub p_diff: T,
}

/// Joins on (debate id, candidate). Scores without a defined mean z and
/// rows missing on either side are dropped. Output follows score order.
pub fn join_scores<T: Scalar>(
    scores: &[MatchScore<T>],
    diffs: &[PollWindowDiff<T>],
) -> Vec<JoinedRow<T>> {
    let by_key: HashMap<(&str, &str), &PollWindowDiff<T>> = diffs
        .iter()
        .map(|d| ((d.debate_id.as_str(), d.candidate.as_str()), d))
        .collect();
    scores
        .iter()
        .filter_map(|s| {
            let z = s.mean_z?;
            let d = by_key.get(&(s.conversation_id.as_str(), s.focal_speaker.as_str()))?;
            Some(JoinedRow {
                debate_id: s.conversation_id.clone(),
                candidate: s.focal_speaker.clone(),
                z,
                p_diff: d.p_diff,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingGroups<T> {
    /// Poll changes of rows with `z > 0`.
    pub matchers: Vec<T>,
    /// Poll changes of rows with `z < 0`.
    pub non_matchers: Vec<T>,
    /// Rows with `z == 0`, in neither group.
    pub excluded_zero: usize,
    pub matcher_summary: GroupSummary<T>,
    pub non_matcher_summary: GroupSummary<T>,
}

impl<T> MatchingGroups<T> {
    /// True when either group is empty, so no comparison is possible.
    pub fn has_empty_group(&self) -> bool {
        self.matchers.is_empty() || self.non_matchers.is_empty()
    }
}

/// Splits joined rows at `z = 0` and summarises poll changes per group.
pub fn group_by_matching<T: Scalar>(
    scores: &[MatchScore<T>],
    diffs: &[PollWindowDiff<T>],
) -> Result<MatchingGroups<T>, StatsError> {
    let rows = join_scores(scores, diffs);
    if rows.is_empty() {
        return Err(StatsError::EmptyJoin);
    }
    let mut matchers = Vec::new();
    let mut non_matchers = Vec::new();
    let mut excluded_zero = 0;
    for r in rows {
        if r.z > T::zero() {
            matchers.push(r.p_diff);
        } else if r.z < T::zero() {
            non_matchers.push(r.p_diff);
        } else {
            excluded_zero += 1;
        }
    }
    Ok(MatchingGroups {
        matcher_summary: summarize(&matchers, 0.95),
        non_matcher_summary: summarize(&non_matchers, 0.95),
        matchers,
        non_matchers,
        excluded_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::NullMethod;

    fn score(id: &str, who: &str, z: Option<f64>) -> MatchScore<f64> {
        MatchScore {
            conversation_id: id.into(),
            focal_speaker: who.into(),
            per_marker: Vec::new(),
            mean_z: z,
            n_permutations: 0,
            seed: 0,
            method: NullMethod::Analytic,
        }
    }

    fn diff(id: &str, who: &str, p: f64) -> PollWindowDiff<f64> {
        PollWindowDiff {
            debate_id: id.into(),
            candidate: who.into(),
            median_before: 0.0,
            median_after: p,
            p_diff: p,
            n_before: 1,
            n_after: 1,
        }
    }

    #[test]
    fn split_at_zero() {
        let scores = [
            score("d1", "A", Some(0.5)),
            score("d1", "B", Some(-0.2)),
            score("d2", "A", Some(0.0)),
            score("d2", "B", None),
            score("d3", "A", Some(1.0)),
        ];
        let diffs = [
            diff("d1", "A", 2.0),
            diff("d1", "B", -1.0),
            diff("d2", "A", 5.0),
            diff("d2", "B", 3.0),
            diff("d3", "A", 4.0),
        ];
        let g = group_by_matching(&scores, &diffs).unwrap();
        assert_eq!(g.matchers, vec![2.0, 4.0]);
        assert_eq!(g.non_matchers, vec![-1.0]);
        assert_eq!(g.excluded_zero, 1);
        assert_eq!(g.matcher_summary.mean, Some(3.0));
        assert_eq!(g.non_matcher_summary.ci_low, None);
    }

    #[test]
    fn all_matchers_flagged() {
        let g = group_by_matching(&[score("d", "A", Some(1.0))], &[diff("d", "A", 1.0)]).unwrap();
        assert!(g.has_empty_group());
        assert_eq!(g.non_matcher_summary.n, 0);
    }

    #[test]
    fn empty_join() {
        assert_eq!(
            group_by_matching(&[score("d", "A", Some(1.0))], &[diff("e", "A", 1.0)]),
            Err(StatsError::EmptyJoin)
        );
    }
}
