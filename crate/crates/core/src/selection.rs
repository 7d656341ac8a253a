//! Penalized model selection over a collection of spaces, with the
//! two-stage data-driven calibration of the penalty constants.

use serde::{Deserialize, Serialize};

use crate::bases::{quantile, BasisSpec};
use crate::error::{invalid, Error, Result};
use crate::lsq::{fit_nested, Fit, PreparedSample};
use crate::quadvar::Target;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMode {
    /// `kappa (s^2 / M) (D + ln(D + 1)^2.5)`.
    Practical,
    /// `kappa s^2 D / (M Delta)` for the drift, `kappa s^2 D / M` for the
    /// diffusion, with `s^2` the known bound (`sigma_1^2`, resp. `sigma_1^4`).
    Theoretical,
}

pub const DEFAULT_KAPPA: f64 = 2.0;

/// Quantile of the preliminary diffusion fit used for the final constant.
pub const CALIBRATION_QUANTILE: f64 = 0.995;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub target: Target,
    pub s_sq: f64,
    /// Number of regression points the contrast averages over.
    pub count: usize,
    /// Block length `Delta`.
    pub block: f64,
    pub kappa: f64,
    pub mode: PenaltyMode,
}

impl PenaltyParams {
    pub fn practical(target: Target, s_sq: f64, count: usize, block: f64) -> Self {
        Self {
            target,
            s_sq,
            count,
            block,
            kappa: DEFAULT_KAPPA,
            mode: PenaltyMode::Practical,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.s_sq > 0.0 && self.s_sq.is_finite()) {
            return Err(invalid("s_sq", format!("must be positive, got {}", self.s_sq)));
        }
        if self.count == 0 {
            return Err(invalid("count", "must be at least 1"));
        }
        Ok(())
    }
}

pub fn penalty(spec: &BasisSpec, params: &PenaltyParams) -> f64 {
    let d = spec.dim() as f64;
    let m = params.count as f64;
    match params.mode {
        PenaltyMode::Practical => params.kappa * params.s_sq / m * (d + (d + 1.0).ln().powf(2.5)),
        PenaltyMode::Theoretical => match params.target {
            Target::Drift => params.kappa * params.s_sq * d / (m * params.block),
            Target::DiffSq => params.kappa * params.s_sq * d / m,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub spec: BasisSpec,
    pub contrast: f64,
    pub penalty: f64,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub table: Vec<SelectionRow>,
    /// Index of the chosen row in `table`.
    pub chosen: usize,
    pub fit: Fit,
    pub params: PenaltyParams,
}

impl SelectionOutcome {
    pub fn chosen_spec(&self) -> BasisSpec {
        self.table[self.chosen].spec
    }

    pub fn min_criterion(&self) -> f64 {
        self.table[self.chosen].criterion
    }
}

/// Fit every space of the collection; infeasible fits (fewer points than
/// dimensions) are dropped. Nested chains (the trigonometric family, and
/// piecewise polynomials of one depth) share a single decomposition.
pub fn fit_collection(sample: &PreparedSample, collection: &[BasisSpec]) -> Result<Vec<Fit>> {
    let mut chains: Vec<Vec<BasisSpec>> = Vec::new();
    for spec in collection {
        let key = chain_key(spec);
        match chains.iter_mut().find(|c| chain_key(&c[0]) == key) {
            Some(c) => c.push(*spec),
            None => chains.push(vec![*spec]),
        }
    }
    #[cfg(feature = "parallel")]
    let fitted: Vec<Result<Vec<Fit>>> = {
        use rayon::prelude::*;
        chains.par_iter().map(|c| fit_nested(sample, c)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fitted: Vec<Result<Vec<Fit>>> = chains.iter().map(|c| fit_nested(sample, c)).collect();
    let fitted: Vec<Fit> = fitted.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    Ok(collection
        .iter()
        .filter_map(|spec| fitted.iter().find(|f| f.spec == *spec).cloned())
        .collect())
}

fn chain_key(spec: &BasisSpec) -> Option<u32> {
    match spec {
        BasisSpec::Trig { .. } => None,
        BasisSpec::PiecewisePoly { depth, .. } => Some(*depth),
    }
}

/// Argmin of contrast + penalty over already computed fits. Ties go to the
/// smaller dimension, then to the earlier fit.
pub fn select_from_fits(fits: &[Fit], params: &PenaltyParams) -> Result<SelectionOutcome> {
    params.validate()?;
    if fits.is_empty() {
        return Err(Error::NoFeasibleModel);
    }
    let table: Vec<SelectionRow> = fits
        .iter()
        .map(|f| {
            let pen = penalty(&f.spec, params);
            SelectionRow {
                spec: f.spec,
                contrast: f.contrast,
                penalty: pen,
                criterion: f.contrast + pen,
            }
        })
        .collect();
    let mut chosen = 0;
    for (i, row) in table.iter().enumerate().skip(1) {
        let best = &table[chosen];
        if row.criterion < best.criterion || (row.criterion == best.criterion && row.spec.dim() < best.spec.dim()) {
            chosen = i;
        }
    }
    Ok(SelectionOutcome {
        table,
        chosen,
        fit: fits[chosen].clone(),
        params: *params,
    })
}

pub fn select(sample: &PreparedSample, collection: &[BasisSpec], params: &PenaltyParams) -> Result<SelectionOutcome> {
    select_from_fits(&fit_collection(sample, collection)?, params)
}

/// Relative size below which a calibrated constant is numerically zero.
pub const NUMERICAL_ZERO: f64 = 1e-24;

/// Replace a non-positive calibrated constant by a tiny positive floor.
/// Returns the constant and whether the floor was used.
pub fn guard_constant(s_sq: f64, responses: &[f64]) -> (f64, bool) {
    let second_moment = if responses.is_empty() {
        0.0
    } else {
        responses.iter().map(|y| y * y).sum::<f64>() / responses.len() as f64
    };
    // Contrasts at rounding level count as zero.
    if s_sq.is_finite() && s_sq > NUMERICAL_ZERO * second_moment && s_sq > 0.0 {
        return (s_sq, false);
    }
    let floor = f64::MIN_POSITIVE * second_moment;
    (if floor > 0.0 { floor } else { f64::MIN_POSITIVE }, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffCalibration {
    /// `2 max_m contrast_m` used in the preliminary run.
    pub prelim_s_sq: f64,
    pub prelim_spec: BasisSpec,
    /// 99.5% quantile of the preliminary fit at the design points.
    pub quantile: f64,
    /// Twice the quantile.
    pub s2: f64,
    /// `s2^2`, the constant of the final diffusion penalty.
    pub s2_sq: f64,
    pub degenerate: bool,
}

/// Two-stage calibration of the diffusion penalty constant.
///
/// `prelim_fits` are fits of the diffusion sample on the preliminary
/// (trigonometric) collection; `design` are the realized volatility values
/// at which the preliminary estimator is evaluated.
pub fn calibrate_diff_constant(
    prelim_fits: &[Fit],
    sample: &PreparedSample,
    design: &[f64],
    kappa: f64,
) -> Result<(SelectionOutcome, DiffCalibration)> {
    if prelim_fits.is_empty() {
        return Err(Error::NoFeasibleModel);
    }
    let max_contrast = prelim_fits.iter().map(|f| f.contrast).fold(f64::NEG_INFINITY, f64::max);
    let (prelim_s_sq, degenerate_prelim) = guard_constant(2.0 * max_contrast, &sample.ys);
    let params = PenaltyParams {
        kappa,
        ..PenaltyParams::practical(Target::DiffSq, prelim_s_sq, sample.len(), sample.block)
    };
    let prelim = select_from_fits(prelim_fits, &params)?;
    let values: Vec<f64> = design
        .iter()
        .filter(|v| prelim.fit.domain.contains(**v))
        .map(|&v| prelim.fit.evaluate(v))
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let q = quantile(&values, CALIBRATION_QUANTILE);
    let s2 = 2.0 * q;
    let (s2_sq, degenerate_final) = guard_constant(s2 * s2, &sample.ys);
    let calibration = DiffCalibration {
        prelim_s_sq,
        prelim_spec: prelim.chosen_spec(),
        quantile: q,
        s2,
        s2_sq,
        degenerate: degenerate_prelim || degenerate_final,
    };
    Ok((prelim, calibration))
}

/// `max` of the diffusion estimate over the design points in its domain,
/// divided by `block`.
pub fn calibrate_drift_constant(diff_fit: &Fit, design: &[f64], block: f64) -> Result<f64> {
    design
        .iter()
        .filter(|v| diff_fit.domain.contains(**v))
        .map(|&v| diff_fit.evaluate(v))
        .reduce(f64::max)
        .map(|m| m / block)
        .ok_or(Error::EmptyDomain)
}
