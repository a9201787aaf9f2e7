//! Cumulative-prefix matching curves.

use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicon;
use crate::matching::{IncidenceTable, MatchError, ScoreConfig};
use crate::polls::PollWindowDiff;
use crate::scalar::Scalar;
use crate::stats::{summarize, GroupSummary};
use crate::transcript::{Conversation, TranscriptError};

pub const DEFAULT_PARTS: usize = 40;

#[derive(Debug, Error)]
pub enum TemporalError {
    #[error("part count must be at least 1")]
    ZeroParts,
    #[error("{utterances} utterances cannot be split into {parts} parts")]
    TooFewUtterances { utterances: usize, parts: usize },
    #[error("profiles disagree on part count ({0} vs {1})")]
    MismatchedParts(usize, usize),
    #[error("no profile joins a nonzero poll change")]
    EmptyJoin,
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// Splits `n` items into `parts` contiguous ranges whose sizes differ by at
/// most one; the first `n % parts` ranges take the extra item.
pub fn partition(n: usize, parts: usize) -> Result<Vec<Range<usize>>, TemporalError> {
    if parts == 0 {
        return Err(TemporalError::ZeroParts);
    }
    if n < parts {
        return Err(TemporalError::TooFewUtterances {
            utterances: n,
            parts,
        });
    }
    let (base, extra) = (n / parts, n % parts);
    let mut start = 0;
    Ok((0..parts)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

pub fn segment(
    conversation: &Conversation,
    parts: usize,
) -> Result<Vec<Range<usize>>, TemporalError> {
    partition(conversation.len(), parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalProfile<T> {
    pub conversation_id: String,
    pub focal_speaker: String,
    pub parts: usize,
    /// Entry `i` is the mean z over parts `1..=i + 1`; absent while no
    /// marker is defined.
    pub curve: Vec<Option<T>>,
}

/// Scores `focal` on every cumulative prefix of parts, recomputing the null
/// within each prefix.
pub fn prefix_curve<T: Scalar>(
    conversation: &Conversation,
    focal: &str,
    lexicon: &Lexicon,
    parts: usize,
    config: &ScoreConfig,
) -> Result<TemporalProfile<T>, TemporalError> {
    if !conversation.contains_speaker(focal) {
        return Err(MatchError::from(TranscriptError::SpeakerNotFound(focal.to_string())).into());
    }
    let ranges = segment(conversation, parts)?;
    let table = IncidenceTable::new(conversation, lexicon);
    let curve = ranges
        .par_iter()
        .map(|r| {
            table
                .score_prefix::<T>(focal, r.end, config)
                .map(|s| s.and_then(|s| s.mean_z))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TemporalProfile {
        conversation_id: conversation.id.clone(),
        focal_speaker: focal.to_string(),
        parts,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint<T> {
    /// 1-based number of parts in the prefix.
    pub prefix_index: usize,
    pub summary: GroupSummary<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCurve<T> {
    pub n_profiles: usize,
    pub points: Vec<CurvePoint<T>>,
}

impl<T: Scalar> GroupCurve<T> {
    /// Least-squares slope of the group mean against prefix index, over
    /// prefixes with a mean. `None` with fewer than two such prefixes.
    pub fn trend_slope(&self) -> Option<T> {
        let pts: Vec<(T, T)> = self
            .points
            .iter()
            .filter_map(|p| Some((T::from_count(p.prefix_index), p.summary.mean?)))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = T::from_count(pts.len());
        let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
        let my = pts.iter().map(|p| p.1).sum::<T>() / n;
        let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Some(sxy / sxx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedCurves<T> {
    pub parts: usize,
    /// Profiles whose candidate gained in the polls.
    pub increased: GroupCurve<T>,
    /// Profiles whose candidate lost in the polls.
    pub decreased: GroupCurve<T>,
    /// Joined profiles with no poll change.
    pub excluded_zero: usize,
}

/// One row of the plot-data table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow<T> {
    pub group: String,
    pub prefix_index: usize,
    pub mean: Option<T>,
    pub ci_low: Option<T>,
    pub ci_high: Option<T>,
}

impl<T: Scalar> GroupedCurves<T> {
    pub fn plot_rows(&self) -> Vec<PlotRow<T>> {
        [
            ("increased", &self.increased),
            ("decreased", &self.decreased),
        ]
        .into_iter()
        .flat_map(|(group, curve)| {
            curve.points.iter().map(move |p| PlotRow {
                group: group.to_string(),
                prefix_index: p.prefix_index,
                mean: p.summary.mean,
                ci_low: p.summary.ci_low,
                ci_high: p.summary.ci_high,
            })
        })
        .collect()
    }
}

fn group_curve<T: Scalar>(profiles: &[&TemporalProfile<T>], parts: usize) -> GroupCurve<T> {
    let points = (0..parts)
        .map(|i| {
            let values: Vec<T> = profiles.iter().filter_map(|p| p.curve[i]).collect();
            CurvePoint {
                prefix_index: i + 1,
                summary: summarize(&values, 0.95),
            }
        })
        .collect();
    GroupCurve {
        n_profiles: profiles.len(),
        points,
    }
}

/// Per-prefix means and 95% intervals of the curves, split by the sign of
/// the candidate's poll change.
pub fn grouped_curves<T: Scalar>(
    profiles: &[TemporalProfile<T>],
    diffs: &[PollWindowDiff<T>],
) -> Result<GroupedCurves<T>, TemporalError> {
    let parts = profiles.first().map_or(0, |p| p.parts);
    if let Some(p) = profiles.iter().find(|p| p.parts != parts) {
        return Err(TemporalError::MismatchedParts(parts, p.parts));
    }
    let by_key: HashMap<(&str, &str), T> = diffs
        .iter()
        .map(|d| ((d.debate_id.as_str(), d.candidate.as_str()), d.p_diff))
        .collect();
    let mut up = Vec::new();
    let mut down = Vec::new();
    let mut excluded_zero = 0;
    for p in profiles {
        match by_key.get(&(p.conversation_id.as_str(), p.focal_speaker.as_str())) {
            Some(&d) if d > T::zero() => up.push(p),
            Some(&d) if d < T::zero() => down.push(p),
            Some(_) => excluded_zero += 1,
            None => {}
        }
    }
    if up.is_empty() && down.is_empty() {
        return Err(TemporalError::EmptyJoin);
    }
    Ok(GroupedCurves {
        parts,
        increased: group_curve(&up, parts),
        decreased: group_curve(&down, parts),
        excluded_zero,
    })
}
