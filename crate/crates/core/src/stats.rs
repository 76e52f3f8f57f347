//! Hypothesis tests and trend fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Largest tie-free sample for which the exact Wilcoxon distribution is used by default.
pub const EXACT_WILCOXON_CUTOFF: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
}

/// How to pick the null distribution for the signed-rank test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    /// Exact when `n <= cutoff` and there are no tied ranks.
    Auto { cutoff: usize },
    Exact,
    Normal,
}

impl Default for MethodChoice {
    fn default() -> Self {
        MethodChoice::Auto {
            cutoff: EXACT_WILCOXON_CUTOFF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: Method,
    pub alternative: Alternative,
}

pub(crate) fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Average ranks (1-based) of `values`, with the tie-group sizes.
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of sign assignments giving each value of the doubled positive-rank sum.
///
/// `doubled_ranks` are `2 * rank` so averaged ties stay integral. Index `s` of the
/// result counts subsets whose doubled rank sum equals `s`.
pub fn signed_rank_counts(doubled_ranks: &[usize]) -> Vec<f64> {
    let total: usize = doubled_ranks.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled_ranks {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Wilcoxon signed-rank test on paired samples, testing `a - b`.
///
/// The statistic is the sum of ranks of positive differences. Zero differences
/// are dropped.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)], alternative: Alternative) -> Result<TestResult> {
    wilcoxon_signed_rank_with(pairs, alternative, MethodChoice::default())
}

pub fn wilcoxon_signed_rank_with(
    pairs: &[(f64, f64)],
    alternative: Alternative,
    choice: MethodChoice,
) -> Result<TestResult> {
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("non-finite paired difference".into()));
    }
    let n = diffs.len();
    if n == 0 {
        return Err(Error::DegenerateSample("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&abs);
    let statistic: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let has_ties = ties.iter().any(|&t| t > 1);

    let method = match choice {
        MethodChoice::Auto { cutoff } if n <= cutoff && !has_ties => Method::Exact,
        MethodChoice::Auto { .. } => Method::NormalApprox,
        MethodChoice::Exact => Method::Exact,
        MethodChoice::Normal => Method::NormalApprox,
    };

    let p_value = match method {
        Method::Exact => {
            let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
            let counts = signed_rank_counts(&doubled);
            let total: f64 = counts.iter().sum();
            let w2 = (2.0 * statistic).round() as usize;
            let upper: f64 = counts[w2..].iter().sum::<f64>() / total;
            let lower: f64 = counts[..=w2].iter().sum::<f64>() / total;
            match alternative {
                Alternative::Greater => upper,
                Alternative::Less => lower,
                Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
            }
        }
        Method::NormalApprox => {
            let nf = n as f64;
            let mean = nf * (nf + 1.0) / 4.0;
            let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
            let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
            if var <= 0.0 {
                return Err(Error::DegenerateSample("zero variance of the signed-rank statistic".into()));
            }
            let sd = var.sqrt();
            let phi = std_normal();
            match alternative {
                Alternative::Greater => phi.sf((statistic - mean - 0.5) / sd),
                Alternative::Less => phi.cdf((statistic - mean + 0.5) / sd),
                Alternative::TwoSided => {
                    let z = ((statistic - mean).abs() - 0.5).max(0.0) / sd;
                    (2.0 * phi.sf(z)).min(1.0)
                }
            }
        }
    };

    Ok(TestResult {
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
        n,
        method,
        alternative,
    })
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Shapiro-Wilk normality test with Royston's approximations for the
/// coefficients and the null distribution of W.
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestResult> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::SampleSize { n, min: 3, max: 5000 });
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    // NaN ranges are rejected too.
    if range.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateSample("zero variance".into()));
    }
    let nf = n as f64;
    let phi = std_normal();

    let half = n / 2;
    let mut a = vec![0.0; n];
    if n == 3 {
        a[0] = -std::f64::consts::FRAC_1_SQRT_2;
        a[2] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let m: Vec<f64> = (1..=n)
            .map(|i| phi.inverse_cdf((i as f64 - 0.375) / (nf + 0.25)))
            .collect();
        let ssq: f64 = m.iter().map(|v| v * v).sum();
        let u = 1.0 / nf.sqrt();
        let c1 = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
        let c2 = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let an = -m[0] / ssq.sqrt() + poly(&c1, u);
        if n > 5 {
            let an1 = -m[1] / ssq.sqrt() + poly(&c2, u);
            let fac = ((ssq - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * an * an - 2.0 * an1 * an1))
                .sqrt();
            a[n - 1] = an;
            a[n - 2] = an1;
            for i in 2..half {
                a[n - 1 - i] = -m[i] / fac;
            }
        } else {
            let fac = ((ssq - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * an * an)).sqrt();
            a[n - 1] = an;
            for i in 1..half {
                a[n - 1 - i] = -m[i] / fac;
            }
        }
        for i in 0..half {
            a[i] = -a[n - 1 - i];
        }
    }

    let mean = x.iter().sum::<f64>() / nf;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
    let w = (num * num / ss).min(1.0);

    let p_value = if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - 0.75f64.sqrt().asin());
        p.max(0.0)
    } else {
        let y = (1.0 - w).ln();
        if n <= 11 {
            let gamma = poly(&[-2.273, 0.459], nf);
            if y >= gamma {
                1e-99
            } else {
                let y = -(gamma - y).ln();
                let mu = poly(&[0.544, -0.39978, 0.025054, -6.714e-4], nf);
                let sigma = poly(&[1.3822, -0.77857, 0.062767, -0.0020322], nf).exp();
                phi.sf((y - mu) / sigma)
            }
        } else {
            let ln_n = nf.ln();
            let mu = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n);
            let sigma = poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp();
            phi.sf((y - mu) / sigma)
        }
    };

    Ok(TestResult {
        statistic: w,
        p_value: p_value.clamp(0.0, 1.0),
        n,
        method: Method::NormalApprox,
        alternative: Alternative::Less,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub p_value: f64,
    pub r2: f64,
    /// `slope * 3`: the change per election cycle.
    pub per_cycle: f64,
    pub n: usize,
}

/// Pooled OLS of value on calendar year with a two-sided t-test on the slope.
///
/// Perfect fits report `p = 0, r2 = 1`; constant values report `slope = 0, p = 1, r2 = 0`.
pub fn linear_trend(observations: &[(f64, f64)]) -> Result<TrendResult> {
    let n = observations.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("trend needs at least 3 observations, got {n}")));
    }
    let nf = n as f64;
    let x_mean = observations.iter().map(|o| o.0).sum::<f64>() / nf;
    let y_mean = observations.iter().map(|o| o.1).sum::<f64>() / nf;
    let sxx: f64 = observations.iter().map(|o| (o.0 - x_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("trend needs at least 2 distinct years".into()));
    }
    let constant = observations.iter().all(|o| o.1 == observations[0].1);
    if constant {
        return Ok(TrendResult {
            slope: 0.0,
            intercept: observations[0].1,
            slope_se: 0.0,
            p_value: 1.0,
            r2: 0.0,
            per_cycle: 0.0,
            n,
        });
    }
    let sxy: f64 = observations
        .iter()
        .map(|o| (o.0 - x_mean) * (o.1 - y_mean))
        .sum();
    let syy: f64 = observations.iter().map(|o| (o.1 - y_mean).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let rss: f64 = observations
        .iter()
        .map(|o| (o.1 - y_mean - slope * (o.0 - x_mean)).powi(2))
        .sum();
    let df = nf - 2.0;
    let perfect = rss <= 1e-24 * syy;
    let (slope_se, p_value, r2) = if perfect {
        (0.0, 0.0, 1.0)
    } else {
        let se = (rss / df / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        (se, 2.0 * t.sf((slope / se).abs()), 1.0 - rss / syy)
    };
    Ok(TrendResult {
        slope,
        intercept,
        slope_se,
        p_value: p_value.clamp(0.0, 1.0),
        r2,
        per_cycle: slope * 3.0,
        n,
    })
}

/// Collapses observations to one mean per distinct year.
pub fn yearly_means(observations: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut groups: std::collections::BTreeMap<i64, (f64, f64, usize)> = Default::default();
    for &(x, y) in observations {
        let e = groups.entry(x.to_bits() as i64).or_insert((x, 0.0, 0));
        e.1 += y;
        e.2 += 1;
    }
    let mut out: Vec<(f64, f64)> = groups
        .into_values()
        .map(|(x, s, c)| (x, s / c as f64))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive_three() {
        let pairs = [(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)];
        let r = wilcoxon_signed_rank(&pairs, Alternative::Greater).unwrap();
        assert_eq!(r.statistic, 6.0);
        assert_eq!(r.method, Method::Exact);
        assert!((r.p_value - 0.125).abs() < 1e-15);
    }

    #[test]
    fn degenerate_pairs() {
        let pairs = [(1.0, 1.0), (2.0, 2.0)];
        assert!(matches!(
            wilcoxon_signed_rank(&pairs, Alternative::TwoSided),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn swapping_mirrors_alternatives() {
        let pairs = [(1.3, 0.2), (0.4, 0.9), (2.2, 0.1), (0.5, 0.45), (3.0, 1.0)];
        let swapped: Vec<_> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        let g = wilcoxon_signed_rank(&pairs, Alternative::Greater).unwrap();
        let l = wilcoxon_signed_rank(&swapped, Alternative::Less).unwrap();
        assert!((g.p_value - l.p_value).abs() < 1e-15);
    }

    #[test]
    fn ties_fall_back_to_normal() {
        let pairs = [(1.0, 0.0), (1.0, 0.0), (2.0, 0.0), (-3.0, 0.0)];
        let r = wilcoxon_signed_rank(&pairs, Alternative::TwoSided).unwrap();
        assert_eq!(r.method, Method::NormalApprox);
        assert_eq!(r.statistic, 1.5 + 1.5 + 3.0);
    }

    #[test]
    fn average_ranks_with_ties() {
        let (r, t) = average_ranks(&[10.0, 20.0, 10.0, 5.0]);
        assert_eq!(r, vec![2.5, 4.0, 2.5, 1.0]);
        assert_eq!(t, vec![1, 2, 1]);
    }

    #[test]
    fn shapiro_rejects_bad_input() {
        assert!(matches!(shapiro_wilk(&[1.0, 2.0]), Err(Error::SampleSize { .. })));
        assert!(matches!(shapiro_wilk(&[2.0; 10]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn shapiro_three_points() {
        let r = shapiro_wilk(&[1.0, 2.0, 3.0]).unwrap();
        assert!((r.statistic - 1.0).abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trend_perfect_and_constant() {
        let obs: Vec<_> = (0..5).map(|i| (2004.0 + 3.0 * i as f64, 1.5 * i as f64)).collect();
        let r = linear_trend(&obs).unwrap();
        assert!((r.slope - 0.5).abs() < 1e-12);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.r2, 1.0);
        let flat: Vec<_> = (0..5).map(|i| (2004.0 + 3.0 * i as f64, 7.1)).collect();
        let r = linear_trend(&flat).unwrap();
        assert_eq!((r.slope, r.p_value), (0.0, 1.0));
        assert!(linear_trend(&[(2004.0, 1.0), (2004.0, 2.0), (2004.0, 3.0)]).is_err());
    }

    #[test]
    fn yearly_means_collapse() {
        let m = yearly_means(&[(2007.0, 1.0), (2004.0, 2.0), (2007.0, 3.0)]);
        assert_eq!(m, vec![(2004.0, 2.0), (2007.0, 2.0)]);
    }
}
