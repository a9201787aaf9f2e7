//! Null distributions of the conditional marker probability under
//! re-arrangement of the focal speaker's utterances.
//!
//! All three routes report exact rational moments: the Monte Carlo route
//! accumulates integer joint counts, so its mean and variance do not depend
//! on summation order or on how replicates were split across threads.

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lexicon::{MarkerMask, MARKER_COUNT};

pub type Rational = Ratio<i128>;

/// Largest focal utterance count accepted by exact enumeration.
pub const MAX_ENUMERATION: usize = 8;

/// How focal utterances are redistributed in a Monte Carlo replicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleScheme {
    /// Uniform permutation of the focal utterances over the focal slots.
    #[default]
    Permutation,
    /// Each slot draws a focal utterance independently, with replacement.
    /// This is not the permutation null; it exists to check that the
    /// calibration suite notices a misconfigured shuffle.
    WithReplacement,
}

/// The focal speaker's turn positions: the marker mask of the utterance in
/// each slot and the mask of the utterance right before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FocalSlots {
    pub responses: Vec<MarkerMask>,
    /// `None` for a slot that opens the conversation.
    pub predecessors: Vec<Option<MarkerMask>>,
}

impl FocalSlots {
    /// Extracts slots for `focal` from per-utterance speakers and masks.
    pub fn new<'a>(
        speakers: impl IntoIterator<Item = &'a str>,
        masks: &[MarkerMask],
        focal: &str,
    ) -> FocalSlots {
        let mut responses = Vec::new();
        let mut predecessors = Vec::new();
        for (i, speaker) in speakers.into_iter().enumerate() {
            if speaker == focal {
                responses.push(masks[i]);
                predecessors.push(i.checked_sub(1).map(|p| masks[p]));
            }
        }
        FocalSlots {
            responses,
            predecessors,
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Number of slots whose predecessor contains `marker`.
    pub fn n_prev(&self, marker: usize) -> usize {
        self.predecessors
            .iter()
            .filter(|p| p.is_some_and(|m| m.contains(marker)))
            .count()
    }

    /// Number of focal utterances containing `marker`.
    pub fn n_with_marker(&self, marker: usize) -> usize {
        self.responses.iter().filter(|m| m.contains(marker)).count()
    }

    /// Joint counts per marker when slot `j` holds utterance `arrangement(j)`.
    fn joint_counts(&self, arrangement: impl Fn(usize) -> usize) -> [u64; MARKER_COUNT] {
        let mut counts = [0u64; MARKER_COUNT];
        for (j, pred) in self.predecessors.iter().enumerate() {
            if let Some(pred) = pred {
                let both = pred.0 & self.responses[arrangement(j)].0;
                if both != 0 {
                    for (m, c) in counts.iter_mut().enumerate() {
                        *c += u64::from((both >> m) & 1);
                    }
                }
            }
        }
        counts
    }

    /// Observed joint counts.
    pub fn observed_joint(&self) -> [u64; MARKER_COUNT] {
        self.joint_counts(|j| j)
    }
}

/// Exact mean and variance of the replicate probabilities for one marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NullMoments {
    pub mean: Rational,
    pub variance: Rational,
}

impl NullMoments {
    pub fn mean_f64(&self) -> f64 {
        ratio_f64(self.mean)
    }

    pub fn std_f64(&self) -> f64 {
        ratio_f64(self.variance).sqrt()
    }
}

pub(crate) fn ratio_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Running sums of joint counts and squared joint counts per marker.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct CountSums {
    sum: [u128; MARKER_COUNT],
    sum_sq: [u128; MARKER_COUNT],
    replicates: u128,
}

impl CountSums {
    fn add(mut self, counts: &[u64; MARKER_COUNT]) -> Self {
        for m in 0..MARKER_COUNT {
            let c = u128::from(counts[m]);
            self.sum[m] += c;
            self.sum_sq[m] += c * c;
        }
        self.replicates += 1;
        self
    }

    fn merge(mut self, other: Self) -> Self {
        for m in 0..MARKER_COUNT {
            self.sum[m] += other.sum[m];
            self.sum_sq[m] += other.sum_sq[m];
        }
        self.replicates += other.replicates;
        self
    }

    /// Moments of `count / n_prev` for each marker; `None` where n_prev is 0.
    fn moments(&self, n_prev: &[usize; MARKER_COUNT]) -> [Option<NullMoments>; MARKER_COUNT] {
        std::array::from_fn(|m| {
            if n_prev[m] == 0 || self.replicates == 0 {
                return None;
            }
            let r = self.replicates as i128;
            let n = n_prev[m] as i128;
            let mean = Rational::new(self.sum[m] as i128, r * n);
            let second = Rational::new(self.sum_sq[m] as i128, r * n * n);
            Some(NullMoments {
                mean,
                variance: second - mean * mean,
            })
        })
    }
}

fn n_prev_all(slots: &FocalSlots) -> [usize; MARKER_COUNT] {
    std::array::from_fn(|m| slots.n_prev(m))
}

/// Random stream for one replicate, determined by `(seed, replicate)` only.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

fn replicate_counts(
    slots: &FocalSlots,
    scheme: ShuffleScheme,
    seed: u64,
    replicate: u64,
    order: &mut Vec<usize>,
) -> [u64; MARKER_COUNT] {
    let mut rng = replicate_rng(seed, replicate);
    let n = slots.len();
    match scheme {
        ShuffleScheme::Permutation => {
            order.clear();
            order.extend(0..n);
            order.shuffle(&mut rng);
            slots.joint_counts(|j| order[j])
        }
        ShuffleScheme::WithReplacement => {
            order.clear();
            order.extend((0..n).map(|_| rng.gen_range(0..n)));
            slots.joint_counts(|j| order[j])
        }
    }
}

/// Joint counts of every replicate, in replicate order.
pub fn monte_carlo_counts(
    slots: &FocalSlots,
    replicates: usize,
    seed: u64,
    scheme: ShuffleScheme,
) -> Vec<[u64; MARKER_COUNT]> {
    (0..replicates as u64)
        .into_par_iter()
        .map_init(Vec::new, |order, r| {
            replicate_counts(slots, scheme, seed, r, order)
        })
        .collect()
}

/// Monte Carlo moments for every marker.
pub fn monte_carlo_moments(
    slots: &FocalSlots,
    replicates: usize,
    seed: u64,
    scheme: ShuffleScheme,
) -> [Option<NullMoments>; MARKER_COUNT] {
    if slots.is_empty() {
        return [None; MARKER_COUNT];
    }
    let sums = (0..replicates as u64)
        .into_par_iter()
        .fold(
            || (Vec::new(), CountSums::default()),
            |(mut order, acc), r| {
                let counts = replicate_counts(slots, scheme, seed, r, &mut order);
                (order, acc.add(&counts))
            },
        )
        .map(|(_, acc)| acc)
        .reduce(CountSums::default, CountSums::merge);
    sums.moments(&n_prev_all(slots))
}

/// Closed-form moments: the joint count is hypergeometric with population
/// `N` (focal utterances), `K` successes (focal utterances containing the
/// marker) and `n_prev` draws.
///
/// `None` when `n_prev` is 0 or when there are fewer than two focal
/// utterances.
pub fn hypergeometric_moments(
    population: usize,
    successes: usize,
    draws: usize,
) -> Option<NullMoments> {
    if draws == 0 || population < 2 || draws > population || successes > population {
        return None;
    }
    let n = population as i128;
    let k = successes as i128;
    let d = draws as i128;
    let mean = Rational::new(k, n);
    let variance = mean * (Rational::from_integer(1) - mean) * Rational::new(n - d, (n - 1) * d);
    Some(NullMoments { mean, variance })
}

pub fn analytic_moments(slots: &FocalSlots) -> [Option<NullMoments>; MARKER_COUNT] {
    std::array::from_fn(|m| {
        hypergeometric_moments(slots.len(), slots.n_with_marker(m), slots.n_prev(m))
    })
}

/// Moments over all `N!` arrangements, visited with Heap's algorithm.
/// Returns `None` when `N` exceeds [`MAX_ENUMERATION`].
pub fn enumeration_moments(slots: &FocalSlots) -> Option<[Option<NullMoments>; MARKER_COUNT]> {
    let n = slots.len();
    if n > MAX_ENUMERATION {
        return None;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sums = CountSums::default().add(&slots.joint_counts(|j| perm[j]));
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            sums = sums.add(&slots.joint_counts(|j| perm[j]));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Some(sums.moments(&n_prev_all(slots)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[bool]) -> MarkerMask {
        let mut m = MarkerMask::default();
        for (i, b) in bits.iter().enumerate() {
            if *b {
                m.insert(i);
            }
        }
        m
    }

    /// Focal responses (T, T, F) after predecessors (T, F, T), marker 0 only.
    fn worked_example() -> FocalSlots {
        FocalSlots {
            responses: vec![mask(&[true]), mask(&[true]), mask(&[false])],
            predecessors: vec![
                Some(mask(&[true])),
                Some(mask(&[false])),
                Some(mask(&[true])),
            ],
        }
    }

    /// Brute force over distinct placements of the marker-free utterance.
    #[test]
    fn worked_example_by_hand() {
        // placements of the single 'false' response: slot 0, 1 or 2
        let p: Vec<f64> = (0..3)
            .map(|f| {
                let resp: Vec<bool> = (0..3).map(|j| j != f).collect();
                let pred = [true, false, true];
                let joint = (0..3).filter(|&j| pred[j] && resp[j]).count();
                joint as f64 / 2.0
            })
            .collect();
        assert_eq!(p, vec![0.5, 1.0, 0.5]);
        let mean = p.iter().sum::<f64>() / 3.0;
        let var = p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((mean - 2.0 / 3.0).abs() < 1e-15);
        assert!((var.sqrt() - 0.2357).abs() < 5e-5);

        let slots = worked_example();
        let exact = enumeration_moments(&slots).unwrap()[0].unwrap();
        assert_eq!(exact.mean, Rational::new(2, 3));
        assert_eq!(exact.variance, Rational::new(1, 18));
        let closed = analytic_moments(&slots)[0].unwrap();
        assert_eq!(closed, exact);
    }

    #[test]
    fn closed_form_edges() {
        let zero = hypergeometric_moments(5, 0, 3).unwrap();
        assert_eq!(zero.mean, Rational::from_integer(0));
        assert_eq!(zero.variance, Rational::from_integer(0));
        let all = hypergeometric_moments(5, 5, 3).unwrap();
        assert_eq!(all.mean, Rational::from_integer(1));
        assert_eq!(all.variance, Rational::from_integer(0));
        assert!(hypergeometric_moments(1, 1, 1).is_none());
        assert!(hypergeometric_moments(4, 2, 0).is_none());
    }

    #[test]
    fn enumeration_refuses_large_inputs() {
        let slots = FocalSlots {
            responses: vec![MarkerMask(1); 9],
            predecessors: vec![Some(MarkerMask(1)); 9],
        };
        assert!(enumeration_moments(&slots).is_none());
    }

    #[test]
    fn monte_carlo_is_reproducible_and_order_free() {
        let slots = worked_example();
        let a = monte_carlo_moments(&slots, 5000, 7, ShuffleScheme::Permutation);
        let b = monte_carlo_moments(&slots, 5000, 7, ShuffleScheme::Permutation);
        assert_eq!(a, b);
        let counts = monte_carlo_counts(&slots, 5000, 7, ShuffleScheme::Permutation);
        let sum: u64 = counts.iter().map(|c| c[0]).sum();
        assert_eq!(a[0].unwrap().mean, Rational::new(sum as i128, 10000));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let single =
            pool.install(|| monte_carlo_moments(&slots, 5000, 7, ShuffleScheme::Permutation));
        assert_eq!(a, single);
    }

    #[test]
    fn monte_carlo_near_exact() {
        let slots = worked_example();
        let mc = monte_carlo_moments(&slots, 20000, 1, ShuffleScheme::Permutation)[0].unwrap();
        let se = (1.0f64 / 18.0).sqrt() / (20000f64).sqrt();
        assert!((mc.mean_f64() - 2.0 / 3.0).abs() < 4.0 * se);
    }

    #[test]
    fn all_marked_responses_are_degenerate() {
        let slots = FocalSlots {
            responses: vec![MarkerMask(1); 4],
            predecessors: vec![
                None,
                Some(MarkerMask(1)),
                Some(MarkerMask(0)),
                Some(MarkerMask(1)),
            ],
        };
        let mc = monte_carlo_moments(&slots, 200, 3, ShuffleScheme::Permutation)[0].unwrap();
        assert_eq!(mc.mean, Rational::from_integer(1));
        assert_eq!(mc.variance, Rational::from_integer(0));
    }
}
