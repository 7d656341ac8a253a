//! Browser bindings for the demo page in `www/`.
//!
//! Each export takes plain numbers and strings and returns a JSON string,
//! or throws the error message. The work happens in the `*_view` functions,
//! which are ordinary Rust and tested natively.

use serde::Serialize;
use stovol::bases::Family;
use stovol::estimate::{estimate, EstimatorSettings};
use stovol::harness::{ModelSpec, SamplingPlan};
use stovol::models::ModelId;
use stovol::quadvar::{quad_var, QuadVarSeries, Target};
use stovol::rng::{Purpose, Seeds};
use stovol::sampling::{generate_observations, simulate_integrated};
use stovol::selection::{penalty, PenaltyParams};
use stovol::Result;
use wasm_bindgen::prelude::*;

/// Fine and observation steps of the demo; the horizon is chosen by the user.
const FINE_STEP: f64 = 1e-3;
const OBS_STEP: f64 = 1e-2;
const MAX_HORIZON: f64 = 2000.0;
const PLOT_POINTS: usize = 1500;
const CURVE_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoParams {
    pub model: ModelId,
    pub seed: u32,
    pub horizon: f64,
    pub k: usize,
}

impl DemoParams {
    pub fn parse(model: &str, seed: u32, horizon: f64, k: usize) -> Result<Self> {
        let model: ModelId = model.parse()?;
        if model == ModelId::Custom {
            return Err(stovol::Error::UnknownModel(model.to_string()));
        }
        if !(1.0..=MAX_HORIZON).contains(&horizon) {
            return Err(stovol::Error::ConfigInvalid {
                key: "horizon".into(),
                message: format!("must lie in [1, {MAX_HORIZON}], got {horizon}"),
            });
        }
        Ok(Self {
            model,
            seed,
            horizon: (horizon / OBS_STEP).round() * OBS_STEP,
            k,
        })
    }

    fn simulate(&self, keep_path: bool) -> Result<(QuadVarSeries, Option<Vec<f64>>)> {
        let plan = SamplingPlan {
            horizon: self.horizon,
            fine_step: FINE_STEP,
            obs_step: OBS_STEP,
        };
        let counts = plan.counts()?;
        let model = ModelSpec::reference(self.model).build()?;
        let seeds = Seeds::new(u64::from(self.seed));
        let (j, path) = simulate_integrated(
            &model,
            FINE_STEP,
            counts.fine_intervals,
            counts.ratio,
            &mut seeds.stream(Purpose::Volatility, 0),
            keep_path,
        )?;
        let obs = generate_observations(&j, &mut seeds.stream(Purpose::Price, 0))?;
        Ok((quad_var(&obs, self.k)?, path))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PathView {
    /// Thinned path on the observation grid.
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    /// Block midpoints and quadratic variation values.
    pub block_t: Vec<f64>,
    pub qv: Vec<f64>,
    pub block: f64,
}

pub fn path_view(p: &DemoParams) -> Result<PathView> {
    let (qv, path) = p.simulate(true)?;
    let path = path.unwrap_or_default();
    let stride = path.len().div_ceil(PLOT_POINTS).max(1);
    let (t, v) = path.iter().enumerate().step_by(stride).map(|(i, &v)| (i as f64 * OBS_STEP, v)).unzip();
    let block = qv.block();
    Ok(PathView {
        t,
        v,
        block_t: (0..qv.len()).map(|i| (i as f64 + 0.5) * block).collect(),
        qv: qv.values,
        block,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveView {
    pub spec: String,
    pub dim: usize,
    pub v: Vec<f64>,
    /// Absent outside the model's state space.
    pub truth: Vec<Option<f64>>,
    pub fit: Vec<f64>,
    /// Regression pairs inside the domain.
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateView {
    pub domain: [f64; 2],
    pub blocks: usize,
    pub max_dim: usize,
    pub drift: CurveView,
    pub diffusion: CurveView,
}

pub fn estimate_view(p: &DemoParams, family: Family) -> Result<EstimateView> {
    let (qv, _) = p.simulate(false)?;
    let model = ModelSpec::reference(p.model).build()?;
    let est = estimate(&qv, &EstimatorSettings { family, ..Default::default() })?;
    let curve = |outcome: &stovol::selection::SelectionOutcome, target: Target| -> Result<CurveView> {
        let (lo, hi) = model.state_space();
        let truth = |v: f64| {
            (v > lo && v < hi).then(|| match target {
                Target::Drift => model.drift(v),
                Target::DiffSq => model.diff_sq(v),
            })
        };
        let sample = stovol::quadvar::build_regression(&qv, target)?;
        let (xs, ys) = sample.xs.iter().zip(&sample.ys).filter(|(x, _)| est.domain.contains(**x)).map(|(x, y)| (*x, *y)).unzip();
        let v = est.domain.grid(CURVE_POINTS);
        Ok(CurveView {
            spec: outcome.chosen_spec().to_string(),
            dim: outcome.chosen_spec().dim(),
            truth: v.iter().map(|&x| truth(x)).collect(),
            fit: v.iter().map(|&x| outcome.fit.evaluate(x)).collect(),
            v,
            xs,
            ys,
        })
    };
    Ok(EstimateView {
        domain: [est.domain.lo, est.domain.hi],
        blocks: qv.len(),
        max_dim: est.max_dim,
        drift: curve(&est.drift, Target::Drift)?,
        diffusion: curve(&est.diffusion, Target::DiffSq)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionRow {
    pub spec: String,
    pub dim: usize,
    pub contrast: f64,
    pub penalty: f64,
    pub criterion: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionView {
    pub rows: Vec<CriterionRow>,
    pub chosen: usize,
    pub s_sq: f64,
}

/// Contrast, penalty and criterion over the collection for one target,
/// with the calibrated constant scaled by `kappa / 2`.
pub fn criterion_view(p: &DemoParams, family: Family, target: Target, kappa: f64) -> Result<CriterionView> {
    let (qv, _) = p.simulate(false)?;
    let settings = EstimatorSettings {
        family,
        kappa,
        ..Default::default()
    };
    let est = estimate(&qv, &settings)?;
    let outcome = match target {
        Target::Drift => &est.drift,
        Target::DiffSq => &est.diffusion,
    };
    let params: &PenaltyParams = &outcome.params;
    let rows = outcome
        .table
        .iter()
        .map(|r| CriterionRow {
            spec: r.spec.to_string(),
            dim: r.spec.dim(),
            contrast: r.contrast,
            penalty: penalty(&r.spec, params),
            criterion: r.criterion,
        })
        .collect();
    Ok(CriterionView {
        rows,
        chosen: outcome.chosen,
        s_sq: params.s_sq,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

fn family(name: &str) -> Result<Family> {
    name.parse()
}

/// Volatility path and quadratic variation blocks.
#[wasm_bindgen]
pub fn simulate(model: &str, seed: u32, horizon: f64, k: usize) -> std::result::Result<String, JsError> {
    to_js(DemoParams::parse(model, seed, horizon, k).and_then(|p| path_view(&p)))
}

/// Fitted drift and squared diffusion against the true functions.
#[wasm_bindgen(js_name = estimateCurves)]
pub fn estimate_curves(model: &str, seed: u32, horizon: f64, k: usize, basis: &str) -> std::result::Result<String, JsError> {
    to_js(DemoParams::parse(model, seed, horizon, k).and_then(|p| estimate_view(&p, family(basis)?)))
}

/// Selection criterion over the collection; `target` is `drift` or `diff-sq`.
#[wasm_bindgen(js_name = criterionTable)]
pub fn criterion_table(model: &str, seed: u32, horizon: f64, k: usize, basis: &str, target: &str, kappa: f64) -> std::result::Result<String, JsError> {
    let target = match target {
        "drift" => Target::Drift,
        _ => Target::DiffSq,
    };
    to_js(DemoParams::parse(model, seed, horizon, k).and_then(|p| criterion_view(&p, family(basis)?, target, kappa)))
}
