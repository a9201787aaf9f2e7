//! Inferential statistics: rank test, t-test, correlation, simple
//! regression with a confidence band, dummy-variable fixed-effects
//! regression, and the matcher/non-matcher split.

mod groups;
mod mann_whitney;
mod regression;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::scalar::{mean, median, sample_variance, Scalar};

pub use groups::{group_by_matching, join_scores, JoinedRow, MatchingGroups};
pub use mann_whitney::{mann_whitney_u, u_distribution, MannWhitney, MwuMethod, EXACT_MAX_SIZE};
pub use regression::{
    fixed_effects_ols, least_squares, simple_regression_band, within_slope, BandPoint, Coefficient,
    LeastSquares, PanelFactor, PanelRow, RegressionBand, RegressionResult, SimpleFit,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("sample '{0}' is empty")]
    EmptySample(&'static str),
    #[error("need at least {needed} observations, found {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("'{0}' is constant")]
    ConstantInput(&'static str),
    #[error("both samples have zero variance")]
    ZeroVariance,
    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("no residual degrees of freedom")]
    NoResidualDf,
    #[error("{factor} level '{level}' has a single row")]
    SingletonLevel { factor: &'static str, level: String },
    #[error("non-finite value in '{0}'")]
    NonFinite(&'static str),
    #[error("no rows left after joining scores with poll changes")]
    EmptyJoin,
    #[error("confidence level must lie in (0, 1)")]
    BadConfidence,
}

fn check_finite<T: Scalar>(xs: &[T], name: &'static str) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite(name))
    }
}

/// Two-sided p-value of a Student t statistic.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Upper quantile `t` with `P(T <= t) = prob`.
pub fn student_t_quantile(prob: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(prob)
}

pub fn normal_two_sided(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * n.sf(z.abs())).min(1.0)
}

/// Mean, median and t-based confidence interval of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary<T> {
    pub n: usize,
    pub mean: Option<T>,
    pub median: Option<T>,
    /// Absent when fewer than two values are available.
    pub ci_low: Option<T>,
    pub ci_high: Option<T>,
}

pub fn summarize<T: Scalar>(xs: &[T], confidence: f64) -> GroupSummary<T> {
    let n = xs.len();
    if n == 0 {
        return GroupSummary {
            n,
            mean: None,
            median: None,
            ci_low: None,
            ci_high: None,
        };
    }
    let m = mean(xs);
    let (ci_low, ci_high) = if n >= 2 {
        let se = (sample_variance(xs) / T::from_count(n)).sqrt();
        let q = T::lit(student_t_quantile(0.5 + confidence / 2.0, (n - 1) as f64));
        (Some(m - q * se), Some(m + q * se))
    } else {
        (None, None)
    };
    GroupSummary {
        n,
        mean: Some(m),
        median: Some(median(xs)),
        ci_low,
        ci_high,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TTestVariant {
    /// Unequal variances, Welch–Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, `n_a + n_b - 2` degrees of freedom.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest<T> {
    pub t: T,
    pub df: T,
    pub p_two_sided: T,
    pub eta_squared: T,
    pub variant: TTestVariant,
}

/// `t² / (t² + df)`.
pub fn eta_squared<T: Scalar>(t: T, df: T) -> T {
    let t2 = t * t;
    t2 / (t2 + df)
}

/// Two-sample t-test of `mean(a) - mean(b)`.
pub fn t_test<T: Scalar>(a: &[T], b: &[T], variant: TTestVariant) -> Result<TTest<T>, StatsError> {
    for (xs, name) in [(a, "a"), (b, "b")] {
        if xs.len() < 2 {
            return Err(StatsError::TooFewObservations {
                needed: 2,
                found: xs.len(),
            });
        }
        check_finite(xs, name)?;
    }
    let (na, nb) = (T::from_count(a.len()), T::from_count(b.len()));
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if va == T::zero() && vb == T::zero() {
        return Err(StatsError::ZeroVariance);
    }
    let diff = mean(a) - mean(b);
    let one = T::one();
    let (t, df) = match variant {
        TTestVariant::Welch => {
            let (sa, sb) = (va / na, vb / nb);
            let se2 = sa + sb;
            let df = se2 * se2 / (sa * sa / (na - one) + sb * sb / (nb - one));
            (diff / se2.sqrt(), df)
        }
        TTestVariant::Pooled => {
            let df = na + nb - T::lit(2.0);
            let sp2 = ((na - one) * va + (nb - one) * vb) / df;
            (diff / (sp2 * (one / na + one / nb)).sqrt(), df)
        }
    };
    Ok(TTest {
        t,
        df,
        p_two_sided: T::lit(student_t_two_sided(t.as_f64(), df.as_f64())),
        eta_squared: eta_squared(t, df),
        variant,
    })
}

/// Product-moment correlation.
pub fn pearson_r<T: Scalar>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewObservations {
            needed: 3,
            found: x.len(),
        });
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxx = T::zero();
    let mut syy = T::zero();
    let mut sxy = T::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
        sxy = sxy + dx * dy;
    }
    if sxx == T::zero() {
        return Err(StatsError::ConstantInput("x"));
    }
    if syy == T::zero() {
        return Err(StatsError::ConstantInput("y"));
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}
