//! Panel construction and OLS, time-fixed-effects and random-intercept fits.

mod direction;
mod lmm;
mod panel;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::stats::std_normal;

pub use direction::{comparison_table, run_direction1, run_direction2, ComparisonRow, FitCell};
pub use lmm::{lmm_at_lambda, lmm_random_intercept, LmmOptions, LAMBDA_MAX, LAMBDA_MIN};
pub use panel::{build_panel, parse_socio, Column, PanelFrame, PanelOptions, PanelRow, SocioRow, MAX_PROVINCE_MISMATCH};

pub const INTERCEPT: &str = "(Intercept)";

/// VIF at or above this value is flagged.
pub const VIF_THRESHOLD: f64 = 5.0;

/// A response vector and design matrix with optional grouping.
#[derive(Debug, Clone)]
pub struct Design {
    pub response: String,
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Group index per observation, into `group_labels`.
    pub groups: Vec<usize>,
    pub group_labels: Vec<String>,
}

impl Design {
    /// Builds a design from raw columns; an intercept column is prepended.
    pub fn new(response: &str, y: Vec<f64>, predictors: &[(&str, Vec<f64>)], groups: &[String]) -> Design {
        let n = y.len();
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(predictors.iter().map(|(name, _)| name.to_string()));
        let x = DMatrix::from_fn(n, names.len(), |i, j| if j == 0 { 1.0 } else { predictors[j - 1].1[i] });
        let (group_idx, group_labels) = index_groups(groups);
        Design {
            response: response.into(),
            names,
            x,
            y: DVector::from_vec(y),
            groups: group_idx,
            group_labels,
        }
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// Appends a dummy column per level except the first.
    pub fn with_dummies(mut self, prefix: &str, levels: &[i32]) -> Result<Design> {
        let distinct: Vec<i32> = {
            let mut v = levels.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        };
        if distinct.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "{prefix} effects need at least 2 levels, found {}",
                distinct.len()
            )));
        }
        for &level in &distinct[1..] {
            let col = DVector::from_iterator(levels.len(), levels.iter().map(|&l| f64::from(l == level)));
            let j = self.x.ncols();
            self.x = self.x.insert_column(j, 0.0);
            self.x.set_column(j, &col);
            self.names.push(format!("{prefix}_{level}"));
        }
        Ok(self)
    }
}

fn index_groups(groups: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut labels: Vec<String> = groups.to_vec();
    labels.sort();
    labels.dedup();
    let lookup: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    (groups.iter().map(|g| lookup[g.as_str()]).collect(), labels)
}

/// Pooled rows with no missing value among `response` and `predictors`.
pub fn panel_design(frame: &PanelFrame, response: Column, predictors: &[Column]) -> (Design, Vec<i32>) {
    let rows: Vec<&PanelRow> = frame
        .rows
        .iter()
        .filter(|r| r.get(response).is_some() && predictors.iter().all(|&c| r.get(c).is_some()))
        .collect();
    let y = rows.iter().map(|r| r.get(response).unwrap()).collect();
    let cols: Vec<(&str, Vec<f64>)> = predictors
        .iter()
        .map(|&c| (c.name(), rows.iter().map(|r| r.get(c).unwrap()).collect()))
        .collect();
    let groups: Vec<String> = rows.iter().map(|r| r.province.clone()).collect();
    let years = rows.iter().map(|r| r.year).collect();
    (Design::new(response.name(), y, &cols, &groups), years)
}

/// One row per province holding the mean of each column over its complete rows.
pub fn averaged_design(frame: &PanelFrame, response: Column, predictors: &[Column]) -> Design {
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for r in &frame.rows {
        let Some(y) = r.get(response) else { continue };
        let Some(xs) = predictors.iter().map(|&c| r.get(c)).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let e = sums
            .entry(r.province.as_str())
            .or_insert_with(|| (vec![0.0; predictors.len() + 1], 0));
        e.0[0] += y;
        for (s, x) in e.0[1..].iter_mut().zip(xs) {
            *s += x;
        }
        e.1 += 1;
    }
    let means: Vec<(&str, Vec<f64>)> = sums
        .into_iter()
        .map(|(p, (s, c))| (p, s.into_iter().map(|v| v / c as f64).collect()))
        .collect();
    let y = means.iter().map(|m| m.1[0]).collect();
    let cols: Vec<(&str, Vec<f64>)> = predictors
        .iter()
        .enumerate()
        .map(|(j, c)| (c.name(), means.iter().map(|m| m.1[j + 1]).collect()))
        .collect();
    let groups: Vec<String> = means.iter().map(|m| m.0.to_string()).collect();
    Design::new(response.name(), y, &cols, &groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ols,
    FixedEffects,
    Lmm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::FixedEffects => "fixed_effects",
            ModelKind::Lmm => "lmm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// t statistic for OLS-type fits, z for the mixed model.
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma2_alpha: f64,
    pub sigma2_e: f64,
    /// `sigma2_alpha / sigma2_e`.
    pub lambda: f64,
    pub reml: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub response: String,
    pub coefficients: Vec<Coefficient>,
    /// Ordinary R² for OLS fits, marginal R² for the mixed model.
    pub r2: f64,
    pub conditional_r2: Option<f64>,
    pub log_likelihood: f64,
    pub aic: f64,
    /// Estimated parameters, including variance components.
    pub k: usize,
    pub n_obs: usize,
    pub n_groups: Option<usize>,
    pub variance: Option<VarianceComponents>,
    /// Predicted random intercepts per group.
    pub random_effects: Option<Vec<(String, f64)>>,
    /// Set when the fit hit a boundary or a degenerate input.
    pub note: Option<String>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Least-squares solution by Householder QR.
pub(crate) struct LeastSquares {
    pub beta: DVector<f64>,
    /// `(X'X)^-1`.
    pub xtx_inv: DMatrix<f64>,
    pub rss: f64,
    pub residuals: DVector<f64>,
    /// `log det(X'X)`.
    pub log_det_xtx: f64,
}

const RANK_TOL: f64 = 1e-9;

pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<LeastSquares> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::RankDeficient(names[n..].to_vec()));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let norm = x.column(j).norm();
        if norm == 0.0 {
            return Err(Error::RankDeficient(vec![names[j].clone()]));
        }
        if r[(j, j)].abs() <= RANK_TOL * norm {
            let r11 = r.view((0, 0), (j, j)).clone_owned();
            let r12 = r.view((0, j), (j, 1)).clone_owned();
            let coef = r11.solve_upper_triangular(&r12).unwrap_or_else(|| DMatrix::zeros(j, 1));
            let mut cols: Vec<String> = (0..j)
                .filter(|&i| (coef[(i, 0)] * x.column(i).norm()).abs() > 1e-8 * norm)
                .map(|i| names[i].clone())
                .collect();
            cols.push(names[j].clone());
            return Err(Error::RankDeficient(cols));
        }
    }
    let q = qr.q();
    let qty = q.transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient(names.to_vec()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient(names.to_vec()))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = y - x * &beta;
    let log_det_xtx = 2.0 * (0..p).map(|j| r[(j, j)].abs().ln()).sum::<f64>();
    Ok(LeastSquares {
        beta,
        xtx_inv,
        rss: residuals.norm_squared(),
        residuals,
        log_det_xtx,
    })
}

/// Two-sided test of `estimate / se` against a t (finite `df`) or normal reference.
pub(crate) fn wald(estimate: f64, se: f64, df: Option<f64>) -> (f64, f64) {
    if se == 0.0 || !se.is_finite() {
        return if estimate == 0.0 { (0.0, 1.0) } else { (estimate.signum() * f64::INFINITY, 0.0) };
    }
    let stat = estimate / se;
    let p = match df {
        Some(df) => 2.0 * StudentsT::new(0.0, 1.0, df).expect("positive df").sf(stat.abs()),
        None => 2.0 * std_normal().sf(stat.abs()),
    };
    (stat, p.clamp(0.0, 1.0))
}

pub(crate) fn gaussian_log_likelihood(n: f64, sigma2: f64) -> f64 {
    if sigma2 <= 0.0 {
        return f64::INFINITY;
    }
    -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0)
}

fn total_ss(y: &DVector<f64>) -> f64 {
    let mean = y.mean();
    y.iter().map(|v| (v - mean).powi(2)).sum()
}

fn is_constant(y: &DVector<f64>) -> bool {
    y.iter().all(|v| *v == y[0])
}

/// Fit for a response with zero variance: intercept at the constant, every
/// other coefficient exactly zero.
fn constant_response_fit(design: &Design, model: ModelKind, k: usize) -> FitResult {
    let c = design.y[0];
    let coefficients = design
        .names
        .iter()
        .map(|name| Coefficient {
            name: name.clone(),
            estimate: if name == INTERCEPT { c } else { 0.0 },
            std_error: 0.0,
            statistic: 0.0,
            p_value: 1.0,
        })
        .collect();
    let log_likelihood = f64::INFINITY;
    FitResult {
        model,
        response: design.response.clone(),
        coefficients,
        r2: 0.0,
        conditional_r2: None,
        log_likelihood,
        aic: 2.0 * k as f64 - 2.0 * log_likelihood,
        k,
        n_obs: design.n_obs(),
        n_groups: None,
        variance: None,
        random_effects: None,
        note: Some("degenerate: zero-variance response".into()),
        residuals: vec![0.0; design.n_obs()],
    }
}

fn ols_core(design: &Design, model: ModelKind) -> Result<FitResult> {
    let n = design.n_obs();
    let p = design.x.ncols();
    if n <= p {
        return Err(Error::InvalidInput(format!(
            "{} observations for {} coefficients",
            n, p
        )));
    }
    let k = p + 1;
    if is_constant(&design.y) {
        least_squares(&design.x, &design.y, &design.names)?;
        return Ok(constant_response_fit(design, model, k));
    }
    let ls = least_squares(&design.x, &design.y, &design.names)?;
    let df = (n - p) as f64;
    let s2 = ls.rss / df;
    let coefficients = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = (s2 * ls.xtx_inv[(j, j)]).max(0.0).sqrt();
            let (statistic, p_value) = wald(ls.beta[j], se, Some(df));
            Coefficient {
                name: name.clone(),
                estimate: ls.beta[j],
                std_error: se,
                statistic,
                p_value,
            }
        })
        .collect();
    let log_likelihood = gaussian_log_likelihood(n as f64, ls.rss / n as f64);
    Ok(FitResult {
        model,
        response: design.response.clone(),
        coefficients,
        r2: 1.0 - ls.rss / total_ss(&design.y),
        conditional_r2: None,
        log_likelihood,
        aic: 2.0 * k as f64 - 2.0 * log_likelihood,
        k,
        n_obs: n,
        n_groups: None,
        variance: None,
        random_effects: None,
        note: (ls.rss == 0.0).then(|| "degenerate: perfect fit".to_string()),
        residuals: ls.residuals.iter().copied().collect(),
    })
}

/// Ordinary least squares with Gaussian likelihood and `k = p + 1`.
pub fn ols(design: &Design) -> Result<FitResult> {
    ols_core(design, ModelKind::Ols)
}

/// OLS with a dummy per year except the first.
pub fn fixed_effects(design: &Design, years: &[i32]) -> Result<FitResult> {
    let augmented = design.clone().with_dummies("year", years)?;
    ols_core(&augmented, ModelKind::FixedEffects)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifEntry {
    pub predictor: String,
    pub vif: f64,
    pub flagged: bool,
}

/// Variance inflation factor of each non-intercept column of `design`.
pub fn vif(design: &Design) -> Result<Vec<VifEntry>> {
    let p = design.x.ncols();
    if p < 3 {
        return Err(Error::InvalidInput("VIF needs at least 2 predictors".into()));
    }
    let mut out = Vec::with_capacity(p - 1);
    for j in 1..p {
        let target = design.x.column(j).clone_owned();
        let keep: Vec<usize> = (0..p).filter(|&i| i != j).collect();
        let others = design.x.select_columns(&keep);
        let names: Vec<String> = keep.iter().map(|&i| design.names[i].clone()).collect();
        let value = match least_squares(&others, &target, &names) {
            Ok(ls) => {
                let sst = total_ss(&target);
                if sst == 0.0 {
                    f64::INFINITY
                } else {
                    let r2 = 1.0 - ls.rss / sst;
                    if r2 >= 1.0 - 1e-12 {
                        f64::INFINITY
                    } else {
                        1.0 / (1.0 - r2)
                    }
                }
            }
            Err(Error::RankDeficient(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        out.push(VifEntry {
            predictor: design.names[j].clone(),
            vif: value,
            flagged: value >= VIF_THRESHOLD,
        });
    }
    Ok(out)
}

/// Sorted residuals paired with standard-normal quantiles at `(i - 0.5) / n`.
pub fn qq_pairs(residuals: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let normal = std_normal();
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, e)| (normal.inverse_cdf((i as f64 + 0.5) / n), e))
        .collect()
}
