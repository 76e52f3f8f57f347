use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    gaussian_log_likelihood, is_constant, least_squares, ols_core, wald, Coefficient, Design, FitResult,
    LeastSquares, ModelKind, VarianceComponents,
};
use crate::error::{Error, Result};

pub const LAMBDA_MIN: f64 = 1e-8;
pub const LAMBDA_MAX: f64 = 1e8;
const GRID_POINTS: usize = 101;
const LOG_LAMBDA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmmOptions {
    pub reml: bool,
    pub max_iterations: usize,
}

impl Default for LmmOptions {
    fn default() -> Self {
        LmmOptions {
            reml: false,
            max_iterations: 200,
        }
    }
}

struct Groups {
    sizes: Vec<usize>,
}

impl Groups {
    fn of(design: &Design) -> Groups {
        let mut sizes = vec![0; design.group_labels.len()];
        for &g in &design.groups {
            sizes[g] += 1;
        }
        Groups { sizes }
    }

    /// Applies `V^{-1/2}` blockwise, where `V = I + lambda * Z Z'`.
    fn whiten(&self, design: &Design, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
        let theta: Vec<f64> = self
            .sizes
            .iter()
            .map(|&n| 1.0 - 1.0 / (1.0 + lambda * n as f64).sqrt())
            .collect();
        let p = design.x.ncols();
        let mut sums = DMatrix::<f64>::zeros(self.sizes.len(), p + 1);
        for (i, &g) in design.groups.iter().enumerate() {
            for j in 0..p {
                sums[(g, j)] += design.x[(i, j)];
            }
            sums[(g, p)] += design.y[i];
        }
        let shift = |g: usize, j: usize| theta[g] * sums[(g, j)] / self.sizes[g] as f64;
        let x = DMatrix::from_fn(design.n_obs(), p, |i, j| {
            let g = design.groups[i];
            design.x[(i, j)] - shift(g, j)
        });
        let y = DVector::from_fn(design.n_obs(), |i, _| {
            let g = design.groups[i];
            design.y[i] - shift(g, p)
        });
        (x, y)
    }

    fn log_det_v(&self, lambda: f64) -> f64 {
        self.sizes.iter().map(|&n| (lambda * n as f64).ln_1p()).sum()
    }
}

struct Profile {
    log_likelihood: f64,
    ls: LeastSquares,
    sigma2_e: f64,
}

fn profile(design: &Design, groups: &Groups, lambda: f64, reml: bool) -> Result<Profile> {
    let (x, y) = groups.whiten(design, lambda);
    let ls = least_squares(&x, &y, &design.names)?;
    let n = design.n_obs() as f64;
    let p = design.x.ncols() as f64;
    let log_det_v = groups.log_det_v(lambda);
    let (sigma2_e, log_likelihood) = if reml {
        let s2 = ls.rss / (n - p);
        (s2, gaussian_log_likelihood(n - p, s2) - 0.5 * log_det_v - 0.5 * ls.log_det_xtx)
    } else {
        let s2 = ls.rss / n;
        (s2, gaussian_log_likelihood(n, s2) - 0.5 * log_det_v)
    };
    Ok(Profile {
        log_likelihood,
        ls,
        sigma2_e,
    })
}

fn check_groups(design: &Design, groups: &Groups) -> Result<()> {
    if groups.sizes.len() < 2 {
        return Err(Error::InvalidInput("random intercepts need at least 2 groups".into()));
    }
    if groups.sizes.iter().all(|&n| n < 2) {
        return Err(Error::InvalidInput(
            "random intercepts need a group with at least 2 observations".into(),
        ));
    }
    if design.n_obs() <= design.x.ncols() {
        return Err(Error::InvalidInput(format!(
            "{} observations for {} coefficients",
            design.n_obs(),
            design.x.ncols()
        )));
    }
    Ok(())
}

fn assemble(design: &Design, groups: &Groups, lambda: f64, prof: Profile, reml: bool, note: Option<String>) -> FitResult {
    let n = design.n_obs();
    let p = design.x.ncols();
    let Profile {
        log_likelihood,
        ls,
        sigma2_e,
    } = prof;
    let coefficients = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = (sigma2_e * ls.xtx_inv[(j, j)]).max(0.0).sqrt();
            let (statistic, p_value) = wald(ls.beta[j], se, None);
            Coefficient {
                name: name.clone(),
                estimate: ls.beta[j],
                std_error: se,
                statistic,
                p_value,
            }
        })
        .collect();

    let fixed = &design.x * &ls.beta;
    let marginal = &design.y - &fixed;
    let mut resid_sums = vec![0.0; groups.sizes.len()];
    for (i, &g) in design.groups.iter().enumerate() {
        resid_sums[g] += marginal[i];
    }
    let blups: Vec<f64> = groups
        .sizes
        .iter()
        .zip(&resid_sums)
        .map(|(&ng, &s)| {
            let ng = ng as f64;
            lambda * ng / (1.0 + lambda * ng) * s / ng
        })
        .collect();
    let residuals = (0..n).map(|i| marginal[i] - blups[design.groups[i]]).collect();

    let sigma2_alpha = lambda * sigma2_e;
    let fixed_mean = fixed.mean();
    let sigma2_f = fixed.iter().map(|v| (v - fixed_mean).powi(2)).sum::<f64>() / n as f64;
    let total = sigma2_f + sigma2_alpha + sigma2_e;
    let (r2, conditional_r2) = if total > 0.0 {
        (sigma2_f / total, (sigma2_f + sigma2_alpha) / total)
    } else {
        (0.0, 0.0)
    };
    let k = p + 2;
    FitResult {
        model: ModelKind::Lmm,
        response: design.response.clone(),
        coefficients,
        r2,
        conditional_r2: Some(conditional_r2),
        log_likelihood,
        aic: 2.0 * k as f64 - 2.0 * log_likelihood,
        k,
        n_obs: n,
        n_groups: Some(groups.sizes.len()),
        variance: Some(VarianceComponents {
            sigma2_alpha,
            sigma2_e,
            lambda,
            reml,
        }),
        random_effects: Some(design.group_labels.iter().cloned().zip(blups).collect()),
        note,
        residuals,
    }
}

/// Mixed-model fit with the variance ratio held at `lambda`.
pub fn lmm_at_lambda(design: &Design, lambda: f64, reml: bool) -> Result<FitResult> {
    let groups = Groups::of(design);
    check_groups(design, &groups)?;
    let prof = profile(design, &groups, lambda, reml)?;
    Ok(assemble(design, &groups, lambda, prof, reml, None))
}

/// Random-intercept model `y = X b + a_g + e` fitted by profiling the likelihood
/// over `lambda = sigma2_alpha / sigma2_e` on a log scale.
pub fn lmm_random_intercept(design: &Design, opts: &LmmOptions) -> Result<FitResult> {
    let groups = Groups::of(design);
    check_groups(design, &groups)?;
    if is_constant(&design.y) {
        least_squares(&design.x, &design.y, &design.names)?;
        let mut fit = super::constant_response_fit(design, ModelKind::Lmm, design.x.ncols() + 2);
        fit.n_groups = Some(groups.sizes.len());
        return Ok(fit);
    }
    let ols_fit = ols_core(design, ModelKind::Ols)?;
    if ols_fit.note.is_some() {
        let prof = profile(design, &groups, 0.0, opts.reml)?;
        return Ok(assemble(design, &groups, 0.0, prof, opts.reml, ols_fit.note));
    }

    let f = |t: f64| -> Result<f64> { Ok(profile(design, &groups, t.exp(), opts.reml)?.log_likelihood) };
    let (lo, hi) = (LAMBDA_MIN.ln(), LAMBDA_MAX.ln());
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let values = grid.iter().map(|&t| f(t)).collect::<Result<Vec<f64>>>()?;
    let best = (0..GRID_POINTS)
        .max_by(|&a, &b| values[a].total_cmp(&values[b]).then(b.cmp(&a)))
        .unwrap();
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(GRID_POINTS - 1)]);
    let (mut t_best, mut f_best) = (grid[best], values[best]);

    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut iterations = 0;
    while b - a > LOG_LAMBDA_TOL {
        iterations += 1;
        if iterations > opts.max_iterations {
            return Err(Error::NoConvergence {
                best_lambda: t_best.exp(),
            });
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
    }
    for (t, v) in [(c, fc), (d, fd)] {
        if v > f_best {
            t_best = t;
            f_best = v;
        }
    }

    let zero = profile(design, &groups, 0.0, opts.reml)?;
    if zero.log_likelihood >= f_best || t_best <= lo + LOG_LAMBDA_TOL {
        let note = Some("random effect degenerate: variance ratio at lower bound".to_string());
        return Ok(assemble(design, &groups, 0.0, zero, opts.reml, note));
    }
    let note = (t_best >= hi - LOG_LAMBDA_TOL)
        .then(|| "residual variance degenerate: variance ratio at upper bound".to_string());
    let lambda = t_best.exp();
    let prof = profile(design, &groups, lambda, opts.reml)?;
    Ok(assemble(design, &groups, lambda, prof, opts.reml, note))
}
