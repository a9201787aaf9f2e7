//! Poll series, per-debate before/after windows and median poll changes.

use std::collections::BTreeSet;
use std::io::Read;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{median, Scalar};

#[derive(Debug, Error)]
pub enum PollError {
    #[error("poll file line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("poll file line {line}: percent {percent} outside [0, 100]")]
    OutOfRange { line: u64, percent: f64 },
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("unknown debate '{0}'")]
    UnknownDebate(String),
    #[error("no polls for '{candidate}' in the {window} window of debate '{debate}'")]
    InsufficientData {
        debate: String,
        candidate: String,
        window: &'static str,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollObservation<T> {
    pub candidate: String,
    /// Last field day of the poll.
    pub date: NaiveDate,
    pub percent: T,
}

/// Reads `candidate,date,percent` rows (ISO-8601 dates), sorted by date.
/// The sort is stable, so same-day rows keep file order.
pub fn load_polls<T: Scalar, R: Read>(source: R) -> Result<Vec<PollObservation<T>>, PollError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PollError::Row {
                line: 1,
                message: format!("missing column '{name}'"),
            })
    };
    let (ci, di, pi) = (column("candidate")?, column("date")?, column("percent")?);

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| PollError::Row { line, message };
        let field = |i: usize, name: &str| {
            record
                .get(i)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| row_err(format!("empty '{name}'")))
        };
        let candidate = field(ci, "candidate")?.to_string();
        let date_raw = field(di, "date")?;
        let date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
            .map_err(|e| row_err(format!("bad date '{date_raw}': {e}")))?;
        let pct_raw = field(pi, "percent")?;
        let percent: f64 = pct_raw
            .parse()
            .map_err(|_| row_err(format!("bad percent '{pct_raw}'")))?;
        if !(0.0..=100.0).contains(&percent) {
            return Err(PollError::OutOfRange { line, percent });
        }
        out.push(PollObservation {
            candidate,
            date,
            percent: T::lit(percent),
        });
    }
    out.sort_by_key(|o| o.date);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledDebate {
    pub id: String,
    pub date: NaiveDate,
}

/// Debates of one race, bracketed by the window start and election day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DebateSchedule {
    pub election_year: i32,
    pub debates: Vec<ScheduledDebate>,
    pub window_start: NaiveDate,
    pub election_day: NaiveDate,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    election_year: i32,
    election_day: NaiveDate,
    #[serde(default)]
    window_start: Option<NaiveDate>,
    debates: Vec<ScheduledDebate>,
}

impl DebateSchedule {
    /// `window_start` defaults to September 1 of the election year.
    pub fn new(
        election_year: i32,
        debates: Vec<ScheduledDebate>,
        window_start: Option<NaiveDate>,
        election_day: NaiveDate,
    ) -> Result<Self, PollError> {
        let window_start = match window_start {
            Some(d) => d,
            None => NaiveDate::from_ymd_opt(election_year, 9, 1)
                .ok_or_else(|| PollError::Schedule(format!("bad election year {election_year}")))?,
        };
        if debates.is_empty() {
            return Err(PollError::Schedule("no debates".into()));
        }
        let mut ids = BTreeSet::new();
        for d in &debates {
            if !ids.insert(d.id.as_str()) {
                return Err(PollError::Schedule(format!(
                    "debate id '{}' repeated",
                    d.id
                )));
            }
        }
        let dates: Vec<NaiveDate> = std::iter::once(window_start)
            .chain(debates.iter().map(|d| d.date))
            .chain(std::iter::once(election_day))
            .collect();
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(PollError::Schedule(format!(
                "dates out of order: {} is not before {}",
                w[0], w[1]
            )));
        }
        Ok(DebateSchedule {
            election_year,
            debates,
            window_start,
            election_day,
        })
    }

    pub fn from_json<R: Read>(source: R) -> Result<Self, PollError> {
        let f: ScheduleFile = serde_json::from_reader(source)?;
        if f.election_day.year() != f.election_year {
            return Err(PollError::Schedule(format!(
                "election day {} is not in {}",
                f.election_day, f.election_year
            )));
        }
        DebateSchedule::new(f.election_year, f.debates, f.window_start, f.election_day)
    }
}

/// Where polls dated exactly on a debate day go.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryRule {
    /// Into the after-window of that debate.
    #[default]
    DebateDayAfter,
    /// Nowhere: both windows are open at debate days.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub start_inclusive: bool,
    pub end: NaiveDate,
    pub end_inclusive: bool,
}

impl DateWindow {
    pub fn contains(&self, date: NaiveDate) -> bool {
        let after_start = date > self.start || (self.start_inclusive && date == self.start);
        let before_end = date < self.end || (self.end_inclusive && date == self.end);
        after_start && before_end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DebateWindows {
    pub debate_id: String,
    pub date: NaiveDate,
    pub before: DateWindow,
    pub after: DateWindow,
}

/// Before/after windows for every debate. Debate `i` looks back to the
/// previous debate (or the window start) and forward to the next debate
/// (or election day, inclusive).
pub fn build_windows(schedule: &DebateSchedule, rule: BoundaryRule) -> Vec<DebateWindows> {
    let debate_day_after = rule == BoundaryRule::DebateDayAfter;
    let n = schedule.debates.len();
    schedule
        .debates
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let prev = if i == 0 {
                schedule.window_start
            } else {
                schedule.debates[i - 1].date
            };
            let (next, last) = if i + 1 == n {
                (schedule.election_day, true)
            } else {
                (schedule.debates[i + 1].date, false)
            };
            DebateWindows {
                debate_id: d.id.clone(),
                date: d.date,
                before: DateWindow {
                    start: prev,
                    start_inclusive: debate_day_after && i > 0,
                    end: d.date,
                    end_inclusive: false,
                },
                after: DateWindow {
                    start: d.date,
                    start_inclusive: debate_day_after,
                    end: next,
                    end_inclusive: last,
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollWindowDiff<T> {
    pub debate_id: String,
    pub candidate: String,
    pub median_before: T,
    pub median_after: T,
    pub p_diff: T,
    pub n_before: usize,
    pub n_after: usize,
}

/// Median poll level after the debate minus the median before it.
pub fn window_diff<T: Scalar>(
    observations: &[PollObservation<T>],
    windows: &DebateWindows,
    candidate: &str,
) -> Result<PollWindowDiff<T>, PollError> {
    let pick = |w: &DateWindow| -> Vec<T> {
        observations
            .iter()
            .filter(|o| o.candidate == candidate && w.contains(o.date))
            .map(|o| o.percent)
            .collect()
    };
    let before = pick(&windows.before);
    let after = pick(&windows.after);
    let insufficient = |window| PollError::InsufficientData {
        debate: windows.debate_id.clone(),
        candidate: candidate.to_string(),
        window,
    };
    if before.is_empty() {
        return Err(insufficient("before"));
    }
    if after.is_empty() {
        return Err(insufficient("after"));
    }
    let median_before = median(&before);
    let median_after = median(&after);
    Ok(PollWindowDiff {
        debate_id: windows.debate_id.clone(),
        candidate: candidate.to_string(),
        median_before,
        median_after,
        p_diff: median_after - median_before,
        n_before: before.len(),
        n_after: after.len(),
    })
}

pub fn poll_diff<T: Scalar>(
    observations: &[PollObservation<T>],
    schedule: &DebateSchedule,
    debate_id: &str,
    candidate: &str,
    rule: BoundaryRule,
) -> Result<PollWindowDiff<T>, PollError> {
    let windows = build_windows(schedule, rule)
        .into_iter()
        .find(|w| w.debate_id == debate_id)
        .ok_or_else(|| PollError::UnknownDebate(debate_id.to_string()))?;
    window_diff(observations, &windows, candidate)
}

/// Differences for every debate of the schedule and every candidate with
/// at least one observation; pairs lacking data are returned as errors.
pub fn all_poll_diffs<T: Scalar>(
    observations: &[PollObservation<T>],
    schedule: &DebateSchedule,
    rule: BoundaryRule,
) -> Vec<Result<PollWindowDiff<T>, PollError>> {
    let candidates: BTreeSet<&str> = observations.iter().map(|o| o.candidate.as_str()).collect();
    build_windows(schedule, rule)
        .iter()
        .flat_map(|w| {
            candidates
                .iter()
                .map(move |c| window_diff(observations, w, c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2012, m, day).unwrap()
    }

    fn schedule() -> DebateSchedule {
        DebateSchedule::new(
            2012,
            vec![
                ScheduledDebate {
                    id: "d1".into(),
                    date: d(10, 3),
                },
                ScheduledDebate {
                    id: "d2".into(),
                    date: d(10, 16),
                },
            ],
            None,
            d(11, 6),
        )
        .unwrap()
    }

    fn obs(c: &str, date: NaiveDate, p: f64) -> PollObservation<f64> {
        PollObservation {
            candidate: c.into(),
            date,
            percent: p,
        }
    }

    #[test]
    fn window_construction_open_intervals() {
        let w = build_windows(&schedule(), BoundaryRule::Exclude);
        let open = |s, e| DateWindow {
            start: s,
            start_inclusive: false,
            end: e,
            end_inclusive: false,
        };
        assert_eq!(w[0].before, open(d(9, 1), d(10, 3)));
        assert_eq!(w[0].after, open(d(10, 3), d(10, 16)));
        assert_eq!(w[1].before, open(d(10, 3), d(10, 16)));
        assert_eq!(
            w[1].after,
            DateWindow {
                end_inclusive: true,
                ..open(d(10, 16), d(11, 6))
            }
        );
    }

    #[test]
    fn debate_day_polls_go_after() {
        let w = build_windows(&schedule(), BoundaryRule::DebateDayAfter);
        assert!(!w[0].before.contains(d(10, 3)));
        assert!(w[0].after.contains(d(10, 3)));
        assert!(w[1].before.contains(d(10, 3)));
        assert!(!w[0].before.contains(d(9, 1)));
        assert!(w[1].after.contains(d(11, 6)));
        assert!(!w[1].after.contains(d(11, 7)));
    }

    #[test]
    fn single_debate() {
        let s = DebateSchedule::new(
            2012,
            vec![ScheduledDebate {
                id: "only".into(),
                date: d(10, 3),
            }],
            None,
            d(11, 6),
        )
        .unwrap();
        let w = build_windows(&s, BoundaryRule::Exclude);
        assert_eq!((w[0].before.start, w[0].before.end), (d(9, 1), d(10, 3)));
        assert_eq!((w[0].after.start, w[0].after.end), (d(10, 3), d(11, 6)));
        assert!(w[0].after.end_inclusive);
    }

    #[test]
    fn unordered_schedule_rejected() {
        let err = DebateSchedule::new(
            2012,
            vec![ScheduledDebate {
                id: "late".into(),
                date: d(11, 20),
            }],
            None,
            d(11, 6),
        )
        .unwrap_err();
        assert!(matches!(err, PollError::Schedule(_)));
    }

    #[test]
    fn median_difference() {
        let o = vec![
            obs("X", d(9, 10), 45.0),
            obs("X", d(9, 20), 47.0),
            obs("X", d(9, 25), 46.0),
            obs("X", d(10, 5), 48.0),
            obs("X", d(10, 10), 50.0),
        ];
        let diff = poll_diff(&o, &schedule(), "d1", "X", BoundaryRule::DebateDayAfter).unwrap();
        assert_eq!(diff.median_before, 46.0);
        assert_eq!(diff.median_after, 49.0);
        assert_eq!(diff.p_diff, 3.0);
        assert_eq!((diff.n_before, diff.n_after), (3, 2));
    }

    #[test]
    fn identical_windows_and_empty_window() {
        let o = vec![obs("X", d(9, 10), 45.0), obs("X", d(10, 10), 45.0)];
        let diff = poll_diff(&o, &schedule(), "d1", "X", BoundaryRule::DebateDayAfter).unwrap();
        assert_eq!(diff.p_diff, 0.0);
        let err = poll_diff(&o, &schedule(), "d2", "X", BoundaryRule::DebateDayAfter).unwrap_err();
        assert!(matches!(
            err,
            PollError::InsufficientData {
                window: "after",
                ..
            }
        ));
        let err = poll_diff(&o, &schedule(), "d9", "X", BoundaryRule::DebateDayAfter).unwrap_err();
        assert!(matches!(err, PollError::UnknownDebate(_)));
    }

    #[test]
    fn load_sorted_rows() {
        let src = "candidate,date,percent\nX,2012-10-05,48\nY,2012-09-10,45.5\nX,2012-09-20,47\n";
        let o: Vec<PollObservation<f64>> = load_polls(src.as_bytes()).unwrap();
        let dates: Vec<_> = o.iter().map(|p| p.date).collect();
        assert_eq!(dates, vec![d(9, 10), d(9, 20), d(10, 5)]);
        assert_eq!(o[0].percent, 45.5);
    }

    #[test]
    fn load_errors() {
        let err = load_polls::<f64, _>("candidate,date,percent\nX,2012-10-05,105\n".as_bytes())
            .unwrap_err();
        assert!(
            matches!(err, PollError::OutOfRange { line: 2, .. }),
            "{err}"
        );
        let err = load_polls::<f64, _>(
            "candidate,date,percent\nX,2012-10-05,4\nX,10/05/2012,4\n".as_bytes(),
        )
        .unwrap_err();
        assert!(matches!(err, PollError::Row { line: 3, .. }), "{err}");
        assert!(load_polls::<f64, _>("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn schedule_json() {
        let src = r#"{"election_year": 2012, "election_day": "2012-11-06",
                      "debates": [{"id": "d1", "date": "2012-10-03"}]}"#;
        let s = DebateSchedule::from_json(src.as_bytes()).unwrap();
        assert_eq!(s.window_start, d(9, 1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn polls() -> impl Strategy<Value = Vec<PollObservation<f64>>> {
            prop::collection::vec((0..67u64, 0..1000u32), 4..60).prop_map(|v| {
                v.into_iter()
                    .map(|(day, p)| obs("X", d(9, 1) + chrono::Days::new(day), f64::from(p) / 20.0))
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn constant_shift_leaves_diffs(o in polls(), k in -5.0..5.0f64) {
                let shifted: Vec<_> = o.iter().map(|p| obs("X", p.date, p.percent + k)).collect();
                for id in ["d1", "d2"] {
                    let a = poll_diff(&o, &schedule(), id, "X", BoundaryRule::DebateDayAfter);
                    let b = poll_diff(&shifted, &schedule(), id, "X", BoundaryRule::DebateDayAfter);
                    if let (Ok(a), Ok(b)) = (a, b) {
                        prop_assert!((a.p_diff - b.p_diff).abs() < 1e-9);
                    }
                }
            }

            #[test]
            fn each_date_in_at_most_one_window(day in 0..80u64) {
                let date = d(9, 1) + chrono::Days::new(day);
                for rule in [BoundaryRule::DebateDayAfter, BoundaryRule::Exclude] {
                    let w = build_windows(&schedule(), rule);
                    prop_assert!(w.iter().filter(|x| x.before.contains(date)).count() <= 1);
                    prop_assert!(w.iter().filter(|x| x.after.contains(date)).count() <= 1);
                    for x in &w {
                        prop_assert!(!(x.before.contains(date) && x.after.contains(date)));
                    }
                }
            }

            #[test]
            fn duplicating_median_observation(o in polls()) {
                if let Ok(base) = poll_diff(&o, &schedule(), "d1", "X", BoundaryRule::DebateDayAfter) {
                    let w = &build_windows(&schedule(), BoundaryRule::DebateDayAfter)[0];
                    if let Some(dup) = o.iter().find(|p| w.before.contains(p.date) && p.percent == base.median_before) {
                        let mut more = o.clone();
                        more.push(dup.clone());
                        let again = poll_diff(&more, &schedule(), "d1", "X", BoundaryRule::DebateDayAfter).unwrap();
                        prop_assert_eq!(again.p_diff, base.p_diff);
                    }
                }
            }
        }
    }
}
