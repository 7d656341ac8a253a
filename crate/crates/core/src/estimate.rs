//! Drift and diffusion estimation from realized quadratic variation.
//!
//! The diffusion is estimated first: a preliminary trigonometric selection
//! with constant `2 max_m contrast_m`, then the final selection with the
//! squared twice-99.5%-quantile of the preliminary estimate. The drift
//! constant is the maximum of the final diffusion estimate over the design
//! points divided by the block length.

use serde::{Deserialize, Serialize};

use crate::bases::{collection, domain_from_data, max_dimension, BasisSpec, EstimationDomain, Family, DEFAULT_MAX_DEGREE, DEFAULT_Q_HI, DEFAULT_Q_LO};
use crate::error::{invalid, Result};
use crate::lsq::PreparedSample;
use crate::quadvar::{build_regression, QuadVarSeries, Target};
use crate::selection::{
    calibrate_diff_constant, calibrate_drift_constant, fit_collection, guard_constant, select_from_fits, DiffCalibration, PenaltyMode, PenaltyParams,
    SelectionOutcome, DEFAULT_KAPPA,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSettings {
    pub family: Family,
    /// Optional cap below the data-driven `floor(N Delta / ln^1.5 N)`.
    pub max_dim: Option<usize>,
    pub max_degree: usize,
    pub q_lo: f64,
    pub q_hi: f64,
    pub kappa: f64,
    pub mode: PenaltyMode,
    /// Known bound on the squared diffusion over the domain; required by
    /// the theoretical penalty.
    pub sigma1_sq: Option<f64>,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            family: Family::Trig,
            max_dim: None,
            max_degree: DEFAULT_MAX_DEGREE,
            q_lo: DEFAULT_Q_LO,
            q_hi: DEFAULT_Q_HI,
            kappa: DEFAULT_KAPPA,
            mode: PenaltyMode::Practical,
            sigma1_sq: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimation {
    pub domain: EstimationDomain,
    /// Dimension cap of the collections.
    pub max_dim: usize,
    pub diffusion: SelectionOutcome,
    pub drift: SelectionOutcome,
    /// Present in practical mode.
    pub calibration: Option<DiffCalibration>,
    /// Constant of the drift penalty.
    pub s1_sq: f64,
    /// A calibrated constant hit the degenerate floor.
    pub degenerate: bool,
}

pub fn collection_for(settings: &EstimatorSettings, qv: &QuadVarSeries) -> (usize, Vec<BasisSpec>) {
    let mut cap = max_dimension(qv.len(), qv.block());
    if let Some(m) = settings.max_dim {
        cap = cap.min(m.max(1));
    }
    (cap, collection(settings.family, cap, settings.max_degree))
}

pub fn estimate(qv: &QuadVarSeries, settings: &EstimatorSettings) -> Result<Estimation> {
    if !(settings.kappa > 0.0 && settings.kappa.is_finite()) {
        return Err(invalid("penalty.kappa", format!("must be positive, got {}", settings.kappa)));
    }
    let domain = domain_from_data(qv, settings.q_lo, settings.q_hi)?;
    estimate_on(qv, domain, settings)
}

/// Same as [`estimate`] with a given estimation domain.
pub fn estimate_on(qv: &QuadVarSeries, domain: EstimationDomain, settings: &EstimatorSettings) -> Result<Estimation> {
    let (cap, specs) = collection_for(settings, qv);
    let block = qv.block();
    let diff_sample = PreparedSample::new(&build_regression(qv, Target::DiffSq)?, domain)?;
    let drift_sample = PreparedSample::new(&build_regression(qv, Target::Drift)?, domain)?;
    let design = &qv.values;

    let diff_fits = fit_collection(&diff_sample, &specs)?;
    let (diffusion, calibration, s1_sq, degenerate) = match settings.mode {
        PenaltyMode::Practical => {
            let trig = collection(Family::Trig, cap, 0);
            let prelim_fits = if settings.family == Family::Trig {
                diff_fits.clone()
            } else {
                fit_collection(&diff_sample, &trig)?
            };
            let (_, cal) = calibrate_diff_constant(&prelim_fits, &diff_sample, design, settings.kappa)?;
            let params = PenaltyParams {
                kappa: settings.kappa,
                ..PenaltyParams::practical(Target::DiffSq, cal.s2_sq, diff_sample.len(), block)
            };
            let diffusion = select_from_fits(&diff_fits, &params)?;
            let raw = calibrate_drift_constant(&diffusion.fit, design, block)?;
            let (s1_sq, floored) = guard_constant(raw, &drift_sample.ys);
            let degenerate = cal.degenerate || floored;
            (diffusion, Some(cal), s1_sq, degenerate)
        }
        PenaltyMode::Theoretical => {
            let sigma1_sq = settings
                .sigma1_sq
                .filter(|s| *s > 0.0 && s.is_finite())
                .ok_or_else(|| invalid("penalty.sigma1_sq", "theoretical penalty needs a positive bound"))?;
            let params = PenaltyParams {
                kappa: settings.kappa,
                mode: PenaltyMode::Theoretical,
                ..PenaltyParams::practical(Target::DiffSq, sigma1_sq * sigma1_sq, diff_sample.len(), block)
            };
            (select_from_fits(&diff_fits, &params)?, None, sigma1_sq, false)
        }
    };

    let drift_params = PenaltyParams {
        kappa: settings.kappa,
        mode: settings.mode,
        ..PenaltyParams::practical(Target::Drift, s1_sq, drift_sample.len(), block)
    };
    let drift = select_from_fits(&fit_collection(&drift_sample, &specs)?, &drift_params)?;
    Ok(Estimation {
        domain,
        max_dim: cap,
        diffusion,
        drift,
        calibration,
        s1_sq,
        degenerate,
    })
}
