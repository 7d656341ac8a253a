//! Monte Carlo experiments: simulate, observe, estimate, and aggregate the
//! empirical errors over replications.
//!
//! Replication `r` draws its volatility path from stream
//! `(seed, Volatility, r)` and its price noise from `(seed, Price, r)`, so a report depends only on the plan, never on
//! how replications are scheduled across workers. One simulated path serves
//! every `(basis, k)` cell of the plan.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bases::{EstimationDomain, Family};
use crate::error::{invalid, Error, Result};
use crate::estimate::{estimate, EstimatorSettings};
use crate::io::fmt_f64;
use crate::lsq::{empirical_error, Fit};
use crate::models::{builtin_model, DiffusionModel, ModelId};
use crate::quadvar::{quad_var, Target};
use crate::rng::{Purpose, Seeds};
use crate::sampling::{generate_observations, simulate_integrated};

/// A built-in model with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: ModelId,
    pub theta: f64,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
}

impl ModelSpec {
    /// Parameters of the reference experiments: `theta = 1, c = 0.75` for
    /// the three OU transforms, `theta = 0.75, c = 1/3, d = 9` for CIR.
    pub fn reference(id: ModelId) -> Self {
        match id {
            ModelId::Cir => Self {
                id,
                theta: 0.75,
                c: 1.0 / 3.0,
                d: Some(9),
            },
            _ => Self {
                id,
                theta: 1.0,
                c: 0.75,
                d: None,
            },
        }
    }

    pub fn build(&self) -> Result<DiffusionModel> {
        builtin_model(self.id, self.theta, self.c, self.d)
    }
}

/// Horizon and grid steps. `obs_step / fine_step` and `horizon / obs_step`
/// must be integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    pub horizon: f64,
    pub fine_step: f64,
    pub obs_step: f64,
}

/// Integer counts implied by a [`SamplingPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCounts {
    /// Fine intervals per observation step.
    pub ratio: usize,
    /// Observed increments `n`.
    pub observations: usize,
    /// Fine intervals `N'`.
    pub fine_intervals: usize,
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = (num / den).round();
    (r >= 1.0 && (r * den - num).abs() <= 1e-9 * num.abs()).then_some(r as usize)
}

impl SamplingPlan {
    pub fn counts(&self) -> Result<GridCounts> {
        for (name, v) in [("sampling.horizon", self.horizon), ("sampling.fine_step", self.fine_step), ("sampling.obs_step", self.obs_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ConfigInvalid {
                    key: name.into(),
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        let ratio = integer_ratio(self.obs_step, self.fine_step).ok_or_else(|| Error::ConfigInvalid {
            key: "sampling.obs_step / sampling.fine_step".into(),
            message: format!("obs_step {} is not a multiple of fine_step {}", self.obs_step, self.fine_step),
        })?;
        let observations = integer_ratio(self.horizon, self.obs_step).ok_or_else(|| Error::ConfigInvalid {
            key: "sampling.horizon / sampling.obs_step".into(),
            message: format!("horizon {} is not a multiple of obs_step {}", self.horizon, self.obs_step),
        })?;
        Ok(GridCounts {
            ratio,
            observations,
            fine_intervals: ratio * observations,
        })
    }
}

pub const DEFAULT_CURVE_REPLICATIONS: usize = 20;
pub const BUNDLE_POINTS: usize = 101;
/// A table aborts when more than this fraction of replications fail.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub model: ModelSpec,
    pub sampling: SamplingPlan,
    pub ks: Vec<usize>,
    pub families: Vec<Family>,
    pub settings: EstimatorSettings,
    pub replications: usize,
    pub seeds: Seeds,
    /// Replications (from index 0) whose fitted curves go in the report.
    pub curve_replications: usize,
}

impl ExperimentPlan {
    /// Small CI-sized plan: `T = 200, delta' = 1e-3, delta = 1e-2, k = 50, R = 20`.
    pub fn desk(model: ModelSpec, seed: u64) -> Self {
        Self {
            model,
            sampling: SamplingPlan {
                horizon: 200.0,
                fine_step: 1e-3,
                obs_step: 1e-2,
            },
            ks: vec![50],
            families: vec![Family::Trig],
            settings: EstimatorSettings::default(),
            replications: 20,
            seeds: Seeds::new(seed),
            curve_replications: DEFAULT_CURVE_REPLICATIONS,
        }
    }

    /// Full-scale CIR design over `k` in `{150, 200, 250, 300, 500}`:
    /// `T = 1000, delta' = 2e-4, delta = 2e-3`, 100 replications.
    pub fn table1(seed: u64) -> Self {
        Self {
            model: ModelSpec::reference(ModelId::Cir),
            sampling: SamplingPlan {
                horizon: 1000.0,
                fine_step: 2e-4,
                obs_step: 2e-3,
            },
            ks: vec![150, 200, 250, 300, 500],
            families: vec![Family::Trig],
            settings: EstimatorSettings::default(),
            replications: 100,
            seeds: Seeds::new(seed),
            curve_replications: DEFAULT_CURVE_REPLICATIONS,
        }
    }

    /// The four models at `k = 250`, trigonometric basis, plus the
    /// piecewise polynomial basis for CIR.
    pub fn table2(seed: u64) -> Vec<Self> {
        ModelId::BUILTINS
            .iter()
            .map(|&id| {
                let mut plan = Self::table1(seed);
                plan.model = ModelSpec::reference(id);
                plan.ks = vec![250];
                if id == ModelId::Cir {
                    plan.families = vec![Family::Trig, Family::PiecewisePoly];
                }
                plan
            })
            .collect()
    }

    pub fn validate(&self) -> Result<GridCounts> {
        let counts = self.sampling.counts()?;
        self.model.build()?;
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if self.ks.is_empty() || self.families.is_empty() {
            return Err(invalid("ks", "need at least one k and one basis family"));
        }
        for &k in &self.ks {
            if k == 0 || 3 * k > counts.observations {
                return Err(Error::ConfigInvalid {
                    key: "sampling.k".into(),
                    message: format!("k = {k} leaves fewer than 3 blocks out of {} increments", counts.observations),
                });
            }
        }
        Ok(counts)
    }
}

/// Fitted and true curves on a grid of the estimation domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBundle {
    pub replication: usize,
    pub target: Target,
    pub v: Vec<f64>,
    /// Absent outside the model's state space.
    pub truth: Vec<Option<f64>>,
    pub estimate: Vec<f64>,
}

impl CurveBundle {
    fn new(replication: usize, fit: &Fit, truth: impl Fn(f64) -> f64, state_space: (f64, f64), points: usize) -> Self {
        let v = fit.domain.grid(points);
        Self {
            replication,
            target: fit.target,
            truth: v.iter().map(|&x| (x > state_space.0 && x < state_space.1).then(|| truth(x))).collect(),
            estimate: v.iter().map(|&x| fit.evaluate(x)).collect(),
            v,
        }
    }
}

/// Errors of one `(basis, k)` cell in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellErrors {
    pub error_b: f64,
    pub error_sig: f64,
    pub dim_b: usize,
    pub dim_sig: usize,
    /// Design points inside the domain and the state space.
    pub retained: usize,
    /// Design points inside the domain but outside the state space; they
    /// carry no error term.
    pub outside_state_space: usize,
    pub domain: EstimationDomain,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub curves: Vec<CurveBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub family: Family,
    pub k: usize,
    pub result: std::result::Result<CellErrors, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub cells: Vec<CellOutcome>,
}

fn run_cell(plan: &ExperimentPlan, model: &DiffusionModel, obs: &crate::sampling::ObservationSet, family: Family, k: usize, rep: usize) -> Result<CellErrors> {
    let qv = quad_var(obs, k)?;
    let settings = EstimatorSettings { family, ..plan.settings };
    let settings = match (settings.mode, settings.sigma1_sq) {
        (crate::selection::PenaltyMode::Theoretical, None) => {
            // the harness knows the truth: use its maximum over the domain
            let domain = crate::bases::domain_from_data(&qv, settings.q_lo, settings.q_hi)?;
            let sup = domain.grid(1001).into_iter().map(|v| model.diff_sq(v)).fold(0.0, f64::max);
            EstimatorSettings { sigma1_sq: Some(sup), ..settings }
        }
        _ => settings,
    };
    let est = estimate(&qv, &settings)?;
    // The true functions exist only on the state space, which noisy
    // quadratic variation values can leave.
    let (lo, hi) = model.state_space();
    let design: Vec<f64> = qv.values.iter().copied().filter(|v| *v > lo && *v < hi).collect();
    let outside = qv.values.iter().filter(|v| est.domain.contains(**v)).count();
    let b = empirical_error(&est.drift.fit, |v| model.drift(v), &design)?;
    let s = empirical_error(&est.diffusion.fit, |v| model.diff_sq(v), &design)?;
    let outside = outside - b.retained;
    let curves = if rep < plan.curve_replications {
        vec![
            CurveBundle::new(rep, &est.drift.fit, |v| model.drift(v), (lo, hi), BUNDLE_POINTS),
            CurveBundle::new(rep, &est.diffusion.fit, |v| model.diff_sq(v), (lo, hi), BUNDLE_POINTS),
        ]
    } else {
        Vec::new()
    };
    Ok(CellErrors {
        error_b: b.value,
        error_sig: s.value,
        dim_b: est.drift.chosen_spec().dim(),
        dim_sig: est.diffusion.chosen_spec().dim(),
        retained: b.retained,
        outside_state_space: outside,
        domain: est.domain,
        degenerate: est.degenerate,
        curves,
    })
}

/// One replication: simulate once, then estimate every `(basis, k)` cell.
/// Failures are recorded per cell.
pub fn run_replication(plan: &ExperimentPlan, rep: usize) -> Result<ReplicationOutcome> {
    let counts = plan.validate()?;
    let model = plan.model.build()?;
    let simulated = simulate_integrated(
        &model,
        plan.sampling.fine_step,
        counts.fine_intervals,
        counts.ratio,
        &mut plan.seeds.stream(Purpose::Volatility, rep as u64),
        false,
    )
    .and_then(|(j, _)| generate_observations(&j, &mut plan.seeds.stream(Purpose::Price, rep as u64)));
    let mut cells = Vec::with_capacity(plan.families.len() * plan.ks.len());
    for &family in &plan.families {
        for &k in &plan.ks {
            let result = match &simulated {
                Ok(obs) => run_cell(plan, &model, obs, family, k, rep).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            cells.push(CellOutcome { family, k, result });
        }
    }
    Ok(ReplicationOutcome { replication: rep, cells })
}

/// Mean and sample standard deviation of per-replication errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Absent with fewer than two values.
    pub std: Option<f64>,
}

impl ErrorSummary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
        let std = (n >= 2).then(|| (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self { values, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub model: ModelSpec,
    pub basis: Family,
    pub k: usize,
    /// Block length `k delta`.
    pub block: f64,
    /// Number of blocks `N`.
    pub blocks: usize,
    pub replications: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub drift: ErrorSummary,
    pub diffusion: ErrorSummary,
    pub dims_b: BTreeMap<usize, usize>,
    pub dims_sig: BTreeMap<usize, usize>,
    pub degenerate_runs: usize,
    /// Design points skipped over all replications because they fall
    /// outside the state space.
    pub outside_state_space: usize,
    pub curves: Vec<CurveBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub plan: ExperimentPlan,
    pub counts: GridCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub plans: Vec<PlanSummary>,
    pub cells: Vec<CellReport>,
}

impl McReport {
    pub fn merge(reports: impl IntoIterator<Item = McReport>) -> McReport {
        let mut out = McReport { plans: Vec::new(), cells: Vec::new() };
        for r in reports {
            out.plans.extend(r.plans);
            out.cells.extend(r.cells);
        }
        out
    }

    pub fn cell(&self, model: ModelId, basis: Family, k: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.model.id == model && c.basis == basis && c.k == k)
    }

    /// `model,basis,k,target,mean,std,R,failures`, one row per cell and target.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "basis", "k", "target", "mean", "std", "R", "failures"])?;
        for c in &self.cells {
            for (target, s) in [(Target::Drift, &c.drift), (Target::DiffSq, &c.diffusion)] {
                w.write_record([
                    c.model.id.to_string(),
                    c.basis.to_string(),
                    c.k.to_string(),
                    target.as_str().to_string(),
                    fmt_f64(s.mean),
                    s.std.map(fmt_f64).unwrap_or_default(),
                    c.replications.to_string(),
                    c.failures.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn run_all(plan: &ExperimentPlan, workers: Option<usize>) -> Result<Vec<ReplicationOutcome>> {
    let reps = 0..plan.replications;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let job = || reps.clone().into_par_iter().map(|r| run_replication(plan, r)).collect::<Result<Vec<_>>>();
        match workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| invalid("workers", e.to_string()))?
                .install(job),
            None => job(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        reps.map(|r| run_replication(plan, r)).collect()
    }
}

/// All replications of a plan, aggregated per `(basis, k)` cell in
/// replication order. `workers` caps the thread count.
pub fn run_table(plan: &ExperimentPlan, workers: Option<usize>) -> Result<McReport> {
    let counts = plan.validate()?;
    let outcomes = run_all(plan, workers)?;
    reduce(plan, counts, &outcomes)
}

/// Single-threaded reducer over replication outcomes sorted by index.
pub fn reduce(plan: &ExperimentPlan, counts: GridCounts, outcomes: &[ReplicationOutcome]) -> Result<McReport> {
    let mut cells = Vec::new();
    for (ci, (family, k)) in plan.families.iter().flat_map(|&f| plan.ks.iter().map(move |&k| (f, k))).enumerate() {
        let mut b = Vec::new();
        let mut s = Vec::new();
        let mut dims_b = BTreeMap::new();
        let mut dims_sig = BTreeMap::new();
        let mut failure_messages = Vec::new();
        let mut curves = Vec::new();
        let mut degenerate_runs = 0;
        let mut outside_state_space = 0;
        for out in outcomes {
            let cell = &out.cells[ci];
            debug_assert!(cell.family == family && cell.k == k);
            match &cell.result {
                Ok(e) => {
                    b.push(e.error_b);
                    s.push(e.error_sig);
                    *dims_b.entry(e.dim_b).or_insert(0) += 1;
                    *dims_sig.entry(e.dim_sig).or_insert(0) += 1;
                    degenerate_runs += usize::from(e.degenerate);
                    outside_state_space += e.outside_state_space;
                    curves.extend(e.curves.iter().cloned());
                }
                Err(msg) => failure_messages.push(format!("replication {}: {msg}", out.replication)),
            }
        }
        let failures = failure_messages.len();
        if failures as f64 > MAX_FAILURE_RATE * plan.replications as f64 {
            return Err(Error::TooManyFailures {
                failed: failures,
                total: plan.replications,
            });
        }
        let blocks = counts.observations / k;
        cells.push(CellReport {
            model: plan.model,
            basis: family,
            k,
            block: k as f64 * plan.sampling.obs_step,
            blocks,
            replications: plan.replications,
            failures,
            failure_messages,
            drift: ErrorSummary::from_values(b),
            diffusion: ErrorSummary::from_values(s),
            dims_b,
            dims_sig,
            degenerate_runs,
            outside_state_space,
            curves,
        });
    }
    Ok(McReport {
        plans: vec![PlanSummary { plan: plan.clone(), counts }],
        cells,
    })
}

/// Caps the global thread pool used by estimation. Takes effect only when
/// called before any parallel work; later calls are ignored.
pub fn cap_global_workers(workers: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
}

/// Worker cap from `STOVOL_WORKERS`, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var("STOVOL_WORKERS").ok()?.trim().parse().ok().filter(|n| *n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ExperimentPlan {
        let mut p = ExperimentPlan::desk(ModelSpec::reference(ModelId::Cir), seed);
        p.sampling.horizon = 100.0;
        p.replications = 3;
        p.curve_replications = 1;
        p
    }

    #[test]
    fn grid_counts() {
        let t1 = ExperimentPlan::table1(0);
        let c = t1.validate().unwrap();
        assert_eq!(c, GridCounts { ratio: 10, observations: 500_000, fine_intervals: 5_000_000 });
        let bad = SamplingPlan { horizon: 1.0, fine_step: 0.003, obs_step: 0.01 };
        let err = bad.counts().unwrap_err().to_string();
        assert!(err.contains("obs_step") && err.contains("fine_step"), "{err}");
    }

    #[test]
    fn replication_is_deterministic() {
        let p = tiny(5);
        assert_eq!(run_replication(&p, 1).unwrap(), run_replication(&p, 1).unwrap());
        assert_ne!(run_replication(&p, 1).unwrap(), run_replication(&p, 2).unwrap());
    }

    #[test]
    fn report_independent_of_workers() {
        let p = tiny(6);
        let a = run_table(&p, Some(1)).unwrap();
        let b = run_table(&p, Some(3)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn aggregates_match_stored_values() {
        let p = tiny(7);
        let r = run_table(&p, None).unwrap();
        let c = &r.cells[0];
        assert_eq!(c.drift.values.len() + c.failures, 3);
        for s in [&c.drift, &c.diffusion] {
            let again = ErrorSummary::from_values(s.values.clone());
            assert_eq!(&again, s);
            assert!(s.values.iter().all(|&v| v >= 0.0));
            assert!(s.std.is_some());
        }
        assert_eq!(c.curves.len(), 2);
        assert!(r.to_csv().unwrap().starts_with("model,basis,k,target,mean,std,R,failures\n"));
    }

    #[test]
    fn single_replication_has_no_std() {
        let mut p = tiny(8);
        p.replications = 1;
        let r = run_table(&p, None).unwrap();
        let c = &r.cells[0];
        assert_eq!(c.drift.mean, c.drift.values[0]);
        assert!(c.drift.std.is_none() && c.diffusion.std.is_none());
    }

    #[test]
    fn failures_are_counted_and_abort() {
        let p = tiny(9);
        let counts = p.validate().unwrap();
        let ok = run_replication(&p, 0).unwrap();
        let mut bad = ok.clone();
        bad.replication = 1;
        bad.cells[0].result = Err("degenerate".into());
        let mut many = vec![ok.clone(); 40];
        for (i, o) in many.iter_mut().enumerate() {
            o.replication = i;
        }
        many[3] = ReplicationOutcome { replication: 3, ..bad.clone() };
        let mut p40 = p.clone();
        p40.replications = 40;
        let r = reduce(&p40, counts, &many).unwrap();
        assert_eq!(r.cells[0].failures, 1);
        assert_eq!(r.cells[0].drift.values.len(), 39);
        many[4] = ReplicationOutcome { replication: 4, ..bad.clone() };
        many[5] = ReplicationOutcome { replication: 5, ..bad };
        assert!(matches!(reduce(&p40, counts, &many), Err(Error::TooManyFailures { failed: 3, total: 40 })));
    }

    #[test]
    fn errors_skip_points_outside_state_space() {
        let mut p = ExperimentPlan::desk(ModelSpec::reference(ModelId::TanhOuShift), 2);
        p.replications = 3;
        let r = run_table(&p, None).unwrap();
        let c = &r.cells[0];
        assert!(c.outside_state_space > 0);
        assert!(c.drift.values.iter().chain(&c.diffusion.values).all(|v| v.is_finite()));
        let bundle = &c.curves[0];
        assert!(bundle.truth.iter().zip(&bundle.v).all(|(t, v)| t.is_some() == (*v > 1.0 && *v < 3.0)));
    }

    #[test]
    fn invalid_plans_rejected() {
        let mut p = tiny(1);
        p.ks = vec![100_000];
        assert!(p.validate().is_err());
        p.ks = vec![50];
        p.replications = 0;
        assert!(p.validate().is_err());
    }
}
