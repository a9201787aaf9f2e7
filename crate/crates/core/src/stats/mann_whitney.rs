use serde::{Deserialize, Serialize};

use super::{check_finite, normal_two_sided, StatsError};
use crate::scalar::Scalar;

/// Largest smaller-sample size for which the exact null is used.
pub const EXACT_MAX_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MwuMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney<T> {
    /// Number of (a, b) pairs with `a > b`, ties counting one half.
    pub u_a: T,
    pub u_b: T,
    pub p_two_sided: T,
    pub method: MwuMethod,
    /// Continuity-corrected normal deviate, when the normal route is used.
    pub z: Option<T>,
}

/// Counts of each U value under the null for sample sizes `n1`, `n2`:
/// the coefficients of the Gaussian binomial `[n1 + n2, n1]_q`.
/// `None` when the total number of arrangements does not fit in 128 bits.
pub fn u_distribution(n1: usize, n2: usize) -> Option<Vec<u128>> {
    let (k, m) = (n1.min(n2), n1.max(n2));
    let mut total: i128 = 1;
    for i in 1..=k {
        total = total.checked_mul((m + i) as i128)? / i as i128;
    }
    let max_u = k.checked_mul(m)?;
    let mut c = vec![0i128; max_u + 1];
    c[0] = 1;
    for i in 1..=k {
        // multiply by (1 - q^(m+i)), then divide by (1 - q^i)
        let up = m + i;
        for j in (up..=max_u).rev() {
            c[j] -= c[j - up];
        }
        for j in i..=max_u {
            c[j] += c[j - i];
        }
    }
    Some(c.into_iter().map(|v| v as u128).collect())
}

fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    (ranks, tie_term)
}

/// Two-sided Mann-Whitney U test.
///
/// Uses the exact null when the smaller sample has at most
/// [`EXACT_MAX_SIZE`] values and there are no ties; otherwise the normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney_u<T: Scalar>(a: &[T], b: &[T]) -> Result<MannWhitney<T>, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("b"));
    }
    check_finite(a, "a")?;
    check_finite(b, "b")?;
    let (n1, n2) = (a.len(), b.len());
    let all: Vec<f64> = a.iter().chain(b).map(|v| v.as_f64()).collect();
    let (ranks, tie_term) = midranks(&all);
    let r1: f64 = ranks[..n1].iter().sum();
    let (f1, f2) = (n1 as f64, n2 as f64);
    let u_a = r1 - f1 * (f1 + 1.0) / 2.0;
    let u_b = f1 * f2 - u_a;

    if n1.min(n2) <= EXACT_MAX_SIZE && tie_term == 0.0 {
        if let Some(dist) = u_distribution(n1, n2) {
            let total: f64 = dist.iter().map(|&c| c as f64).sum();
            let u = u_a.round() as usize;
            let lower: f64 = dist[..=u].iter().map(|&c| c as f64).sum::<f64>() / total;
            let upper: f64 = dist[u..].iter().map(|&c| c as f64).sum::<f64>() / total;
            return Ok(MannWhitney {
                u_a: T::lit(u_a),
                u_b: T::lit(u_b),
                p_two_sided: T::lit((2.0 * lower.min(upper)).min(1.0)),
                method: MwuMethod::Exact,
                z: None,
            });
        }
    }

    let n = f1 + f2;
    let mu = f1 * f2 / 2.0;
    let var = f1 * f2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let (p, z) = if var <= 0.0 || !var.is_finite() {
        (1.0, None)
    } else {
        let z = ((u_a - mu).abs() - 0.5) / var.sqrt();
        (normal_two_sided(z.max(0.0)).min(1.0), Some(z))
    };
    Ok(MannWhitney {
        u_a: T::lit(u_a),
        u_b: T::lit(u_b),
        p_two_sided: T::lit(p),
        method: MwuMethod::Normal,
        z: z.map(T::lit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: u128, k: u128) -> u128 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn small_distribution() {
        // sizes 2 and 2: U in 0..=4 with counts 1,1,2,1,1
        assert_eq!(u_distribution(2, 2).unwrap(), vec![1, 1, 2, 1, 1]);
        assert_eq!(u_distribution(1, 3).unwrap(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn exact_matches_reference() {
        // scipy.stats.mannwhitneyu(a, b, method="exact")
        let r: MannWhitney<f64> = mann_whitney_u(&[1.5, 3.2, 4.8], &[2.1, 5.5, 6.0, 7.7]).unwrap();
        assert_eq!(r.method, MwuMethod::Exact);
        assert_eq!(r.u_a, 2.0);
        assert!((r.p_two_sided - 0.22857142857142856).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_with_ties_matches_reference() {
        // scipy.stats.mannwhitneyu(a, b, method="asymptotic")
        let a = [1.0, 2.0, 2.0, 3.0, 5.0, 7.0, 8.0, 9.0, 10.0];
        let b = [2.0, 3.0, 4.0, 4.0, 6.0, 11.0, 12.0, 13.0, 14.0];
        let r: MannWhitney<f64> = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.method, MwuMethod::Normal);
        assert_eq!(r.u_a, 26.5);
        assert!((r.p_two_sided - 0.2317796914723741).abs() < 1e-9);
    }

    #[test]
    fn all_tied_gives_one() {
        let r = mann_whitney_u(&[1.0; 10], &[1.0; 12]).unwrap();
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.u_a, 60.0);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(
            mann_whitney_u::<f64>(&[], &[1.0]),
            Err(StatsError::EmptySample("a"))
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn distribution_sums_to_binomial(n1 in 1usize..9, n2 in 1usize..40) {
                let d = u_distribution(n1, n2).unwrap();
                prop_assert_eq!(d.len(), n1 * n2 + 1);
                prop_assert_eq!(d.iter().sum::<u128>(), binom((n1 + n2) as u128, n1 as u128));
                let rev: Vec<u128> = d.iter().rev().copied().collect();
                prop_assert_eq!(rev, d);
            }

            #[test]
            fn u_sum_and_swap(
                a in prop::collection::vec(-20i32..20, 1..15),
                b in prop::collection::vec(-20i32..20, 1..15),
            ) {
                let a: Vec<f64> = a.into_iter().map(f64::from).collect();
                let b: Vec<f64> = b.into_iter().map(f64::from).collect();
                let ab = mann_whitney_u(&a, &b).unwrap();
                let ba = mann_whitney_u(&b, &a).unwrap();
                prop_assert_eq!(ab.u_a + ab.u_b, (a.len() * b.len()) as f64);
                prop_assert_eq!(ab.u_a, ba.u_b);
                prop_assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-12);
                prop_assert!(ab.p_two_sided > 0.0 && ab.p_two_sided <= 1.0);
            }
        }
    }
}
