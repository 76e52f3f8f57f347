use serde::{Deserialize, Serialize};

use super::{
    averaged_design, fixed_effects, lmm_random_intercept, ols, panel_design, Column, FitResult, LmmOptions,
    ModelKind, PanelFrame,
};
use crate::error::Result;

/// One model fit (or its failure) within a direction's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCell {
    pub direction: u8,
    pub response: String,
    /// Socioeconomic family for reverse fits, e.g. `HDI`.
    pub family: Option<String>,
    pub model: ModelKind,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

fn three_fits(
    direction: u8,
    frame: &PanelFrame,
    response: Column,
    predictors: &[Column],
    family: Option<&str>,
    opts: &LmmOptions,
) -> Vec<FitCell> {
    let (pooled, years) = panel_design(frame, response, predictors);
    let attempts: [(ModelKind, Result<FitResult>); 3] = [
        (ModelKind::Ols, ols(&averaged_design(frame, response, predictors))),
        (ModelKind::FixedEffects, fixed_effects(&pooled, &years)),
        (
            ModelKind::Lmm,
            pooled
                .clone()
                .with_dummies("year", &years)
                .and_then(|d| lmm_random_intercept(&d, opts)),
        ),
    ];
    attempts
        .into_iter()
        .map(|(model, res)| {
            if let Err(e) = &res {
                log::warn!("{} fit of {} failed: {e}", model.as_str(), response.name());
            }
            let (fit, error) = match res {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            FitCell {
                direction,
                response: response.name().into(),
                family: family.map(str::to_string),
                model,
                fit,
                error,
            }
        })
        .collect()
}

/// Socioeconomic outcomes on the four dynastic indicators.
///
/// The OLS fit uses one province-averaged row per province and no year terms;
/// the fixed-effects and mixed fits use pooled rows with year dummies.
pub fn run_direction1(frame: &PanelFrame, opts: &LmmOptions) -> Vec<FitCell> {
    [Column::Hdi, Column::Pov]
        .into_iter()
        .flat_map(|response| three_fits(1, frame, response, &Column::DYNASTIC, None, opts))
        .collect()
}

/// Each dynastic indicator on a socioeconomic value and its lag, for both families.
pub fn run_direction2(frame: &PanelFrame, opts: &LmmOptions) -> Vec<FitCell> {
    let families = [
        ("HDI", [Column::Hdi, Column::HdiLag]),
        ("POV", [Column::Pov, Column::PovLag]),
    ];
    let mut out = Vec::new();
    for response in Column::DYNASTIC {
        for (name, predictors) in &families {
            out.extend(three_fits(2, frame, response, predictors, Some(name), opts));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub direction: u8,
    pub response: String,
    pub family: String,
    pub model: ModelKind,
    pub n_obs: Option<usize>,
    pub r2: Option<f64>,
    pub conditional_r2: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub aic: Option<f64>,
    pub note: String,
}

/// Fit metrics side by side, one row per cell.
pub fn comparison_table(cells: &[FitCell]) -> Vec<ComparisonRow> {
    cells
        .iter()
        .map(|c| ComparisonRow {
            direction: c.direction,
            response: c.response.clone(),
            family: c.family.clone().unwrap_or_default(),
            model: c.model,
            n_obs: c.fit.as_ref().map(|f| f.n_obs),
            r2: c.fit.as_ref().map(|f| f.r2),
            conditional_r2: c.fit.as_ref().and_then(|f| f.conditional_r2),
            log_likelihood: c.fit.as_ref().map(|f| f.log_likelihood),
            aic: c.fit.as_ref().map(|f| f.aic),
            note: c
                .error
                .clone()
                .or_else(|| c.fit.as_ref().and_then(|f| f.note.clone()))
                .unwrap_or_default(),
        })
        .collect()
}
