use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_finite, student_t_quantile, student_t_two_sided, StatsError};
use crate::scalar::{mean, Scalar};

/// One (debate, candidate) observation of the poll panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow<T> {
    pub candidate: String,
    pub election_year: i32,
    pub debate_id: String,
    /// Mean marker z-score of the candidate in the debate.
    pub z: T,
    /// Poll change after minus before the debate.
    pub p_diff: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PanelFactor {
    Candidate,
    ElectionYear,
}

impl PanelFactor {
    pub fn as_str(self) -> &'static str {
        match self {
            PanelFactor::Candidate => "candidate",
            PanelFactor::ElectionYear => "election_year",
        }
    }

    fn level<T>(self, row: &PanelRow<T>) -> String {
        match self {
            PanelFactor::Candidate => row.candidate.clone(),
            PanelFactor::ElectionYear => row.election_year.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient<T> {
    pub name: String,
    pub estimate: T,
    pub std_error: T,
    pub t_stat: T,
    pub p_value: T,
}

/// Ordinary least squares fit of an arbitrary design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquares<T> {
    pub coefficients: Vec<Coefficient<T>>,
    pub fitted: Vec<T>,
    pub rss: T,
    pub tss: T,
    pub n_obs: usize,
    pub residual_df: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult<T> {
    pub coefficients: Vec<Coefficient<T>>,
    pub r_squared: T,
    pub adjusted_r_squared: T,
    pub residual_df: usize,
    pub n_obs: usize,
    pub rss: T,
    /// Levels of each absorbed factor, reference level first.
    pub absorbed: Vec<(PanelFactor, Vec<String>)>,
}

impl<T: Scalar> RegressionResult<T> {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient<T>> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Coefficient on the matching score.
    pub fn slope(&self) -> &Coefficient<T> {
        self.coefficient("z").expect("z is always in the design")
    }

    /// Two-sided t interval for a named coefficient.
    pub fn confidence_interval(&self, name: &str, confidence: f64) -> Option<(T, T)> {
        let c = self.coefficient(name)?;
        let q = T::lit(student_t_quantile(
            0.5 + confidence / 2.0,
            self.residual_df as f64,
        ));
        Some((c.estimate - q * c.std_error, c.estimate + q * c.std_error))
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Least squares via modified Gram-Schmidt with one re-orthogonalisation
/// pass. `columns` holds the design column by column; `tss` is taken about
/// the mean of `y`.
pub fn least_squares<T: Scalar>(
    names: &[String],
    columns: &[Vec<T>],
    y: &[T],
) -> Result<LeastSquares<T>, StatsError> {
    let n = y.len();
    let p = columns.len();
    for c in columns {
        if c.len() != n {
            return Err(StatsError::LengthMismatch(c.len(), n));
        }
        check_finite(c, "design")?;
    }
    check_finite(y, "y")?;

    let tol = T::epsilon() * T::lit(1e3);
    let mut q: Vec<Vec<T>> = Vec::with_capacity(p);
    let mut r = vec![vec![T::zero(); p]; p];
    let mut collinear = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let mut v = col.clone();
        let scale = dot(col, col).sqrt();
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let proj = dot(qi, &v);
                r[i][j] = r[i][j] + proj;
                for (vk, &qk) in v.iter_mut().zip(qi) {
                    *vk = *vk - proj * qk;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if scale == T::zero() || norm <= tol * scale {
            collinear.push(names[j].clone());
            // keep the basis square; this column's direction is dropped
            q.push(vec![T::zero(); n]);
            continue;
        }
        r[j][j] = norm;
        q.push(v.into_iter().map(|x| x / norm).collect());
    }
    if !collinear.is_empty() {
        return Err(StatsError::RankDeficient(collinear));
    }
    if n <= p {
        return Err(StatsError::NoResidualDf);
    }

    let qty: Vec<T> = q.iter().map(|qi| dot(qi, y)).collect();
    let mut beta = vec![T::zero(); p];
    for i in (0..p).rev() {
        let s: T = (i + 1..p).map(|k| r[i][k] * beta[k]).sum();
        beta[i] = (qty[i] - s) / r[i][i];
    }
    // R^-1 by back substitution, column by column
    let mut rinv = vec![vec![T::zero(); p]; p];
    for c in 0..p {
        for i in (0..=c).rev() {
            let e = if i == c { T::one() } else { T::zero() };
            let s: T = (i + 1..=c).map(|k| r[i][k] * rinv[k][c]).sum();
            rinv[i][c] = (e - s) / r[i][i];
        }
    }

    let fitted: Vec<T> = (0..n)
        .map(|row| (0..p).map(|j| columns[j][row] * beta[j]).sum())
        .collect();
    let rss: T = y
        .iter()
        .zip(&fitted)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let my = mean(y);
    let tss: T = y.iter().map(|&a| (a - my) * (a - my)).sum();
    let residual_df = n - p;
    let sigma2 = rss / T::from_count(residual_df);
    let coefficients = (0..p)
        .map(|j| {
            // diag of (X'X)^-1 = R^-1 R^-T
            let d: T = rinv[j].iter().map(|&x| x * x).sum();
            let se = (sigma2 * d).sqrt();
            let t = beta[j] / se;
            let p_value = if se == T::zero() {
                if beta[j] == T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                T::lit(student_t_two_sided(t.as_f64(), residual_df as f64))
            };
            Coefficient {
                name: names[j].clone(),
                estimate: beta[j],
                std_error: se,
                t_stat: t,
                p_value,
            }
        })
        .collect();
    Ok(LeastSquares {
        coefficients,
        fitted,
        rss,
        tss,
        n_obs: n,
        residual_df,
    })
}

fn factor_levels<T>(panel: &[PanelRow<T>], factor: PanelFactor) -> Result<Vec<String>, StatsError> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for row in panel {
        *counts.entry(factor.level(row)).or_default() += 1;
    }
    if let Some((level, _)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(StatsError::SingletonLevel {
            factor: factor.as_str(),
            level: level.clone(),
        });
    }
    Ok(counts.into_keys().collect())
}

fn dummy_name(factor: PanelFactor, level: &str) -> String {
    match factor {
        PanelFactor::Candidate => format!("candidate[{level}]"),
        PanelFactor::ElectionYear => format!("year[{level}]"),
    }
}

/// Regresses `p_diff` on `z` with an intercept and one dummy per
/// non-reference level of each requested factor. The reference level is the
/// first in sorted order.
pub fn fixed_effects_ols<T: Scalar>(
    panel: &[PanelRow<T>],
    factors: &[PanelFactor],
) -> Result<RegressionResult<T>, StatsError> {
    let mut factors = factors.to_vec();
    factors.sort();
    factors.dedup();

    let n = panel.len();
    let mut names = vec!["(intercept)".to_string(), "z".to_string()];
    let mut columns = vec![vec![T::one(); n], panel.iter().map(|r| r.z).collect()];
    let mut absorbed = Vec::new();
    for &factor in &factors {
        let levels = factor_levels(panel, factor)?;
        for level in levels.iter().skip(1) {
            names.push(dummy_name(factor, level));
            columns.push(
                panel
                    .iter()
                    .map(|r| {
                        if &factor.level(r) == level {
                            T::one()
                        } else {
                            T::zero()
                        }
                    })
                    .collect(),
            );
        }
        absorbed.push((factor, levels));
    }
    let y: Vec<T> = panel.iter().map(|r| r.p_diff).collect();
    if n < 3 {
        return Err(StatsError::TooFewObservations {
            needed: 3,
            found: n,
        });
    }
    let fit = least_squares(&names, &columns, &y)?;
    if fit.tss == T::zero() {
        return Err(StatsError::ConstantInput("p_diff"));
    }
    let r_squared = T::one() - fit.rss / fit.tss;
    let (nf, pf) = (T::from_count(n), T::from_count(columns.len()));
    let adjusted_r_squared = T::one() - (T::one() - r_squared) * (nf - T::one()) / (nf - pf);
    Ok(RegressionResult {
        coefficients: fit.coefficients,
        r_squared,
        adjusted_r_squared,
        residual_df: fit.residual_df,
        n_obs: n,
        rss: fit.rss,
        absorbed,
    })
}

/// Slope of `p_diff` on `z` after demeaning both within each level of
/// `factor`.
pub fn within_slope<T: Scalar>(
    panel: &[PanelRow<T>],
    factor: PanelFactor,
) -> Result<T, StatsError> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, row) in panel.iter().enumerate() {
        groups.entry(factor.level(row)).or_default().push(i);
    }
    let mut szz = T::zero();
    let mut szy = T::zero();
    for idx in groups.values() {
        let zs: Vec<T> = idx.iter().map(|&i| panel[i].z).collect();
        let ys: Vec<T> = idx.iter().map(|&i| panel[i].p_diff).collect();
        let (mz, my) = (mean(&zs), mean(&ys));
        for (&z, &y) in zs.iter().zip(&ys) {
            szz = szz + (z - mz) * (z - mz);
            szy = szy + (z - mz) * (y - my);
        }
    }
    if szz == T::zero() {
        return Err(StatsError::ConstantInput("z within groups"));
    }
    Ok(szy / szz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint<T> {
    pub x: T,
    pub fit: T,
    pub lower: T,
    pub upper: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleFit<T> {
    pub slope: T,
    pub intercept: T,
    pub n: usize,
    pub x_mean: T,
    pub sxx: T,
    /// Residual standard error with `n - 2` degrees of freedom.
    pub sigma: T,
    pub confidence: f64,
}

impl<T: Scalar> SimpleFit<T> {
    pub fn predict(&self, x: T) -> T {
        self.intercept + self.slope * x
    }

    /// Mean-response confidence interval at `x`.
    pub fn band_at(&self, x: T) -> BandPoint<T> {
        let q = T::lit(student_t_quantile(
            0.5 + self.confidence / 2.0,
            (self.n - 2) as f64,
        ));
        let dx = x - self.x_mean;
        let se = self.sigma * (T::one() / T::from_count(self.n) + dx * dx / self.sxx).sqrt();
        let fit = self.predict(x);
        BandPoint {
            x,
            fit,
            lower: fit - q * se,
            upper: fit + q * se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionBand<T> {
    pub fit: SimpleFit<T>,
    /// Band evaluated at each input `x`, in input order.
    pub band: Vec<BandPoint<T>>,
}

pub fn simple_regression_band<T: Scalar>(
    x: &[T],
    y: &[T],
    confidence: f64,
) -> Result<RegressionBand<T>, StatsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::BadConfidence);
    }
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations {
            needed: 3,
            found: n,
        });
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    let (mx, my) = (mean(x), mean(y));
    let sxx: T = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    if sxx == T::zero() {
        return Err(StatsError::ConstantInput("x"));
    }
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: T = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let fit = SimpleFit {
        slope,
        intercept,
        n,
        x_mean: mx,
        sxx,
        sigma: (rss / T::from_count(n - 2)).sqrt(),
        confidence,
    };
    let band = x.iter().map(|&v| fit.band_at(v)).collect();
    Ok(RegressionBand { fit, band })
}
