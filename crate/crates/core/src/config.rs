//! TOML run configuration.
//!
//! A file names a preset and overrides any of its values:
//!
//! ```toml
//! preset = "desk"
//!
//! [model]
//! name = "cir"
//!
//! [basis]
//! family = "gp"
//! max_dim = 32
//!
//! [domain]
//! q_lo = 0.05
//! ```
//!
//! Unknown keys are rejected. [`RunConfig::to_toml`] writes every resolved
//! value, and parsing that output gives back the same [`RunConfig`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bases::{Family, DEFAULT_MAX_DEGREE, DEFAULT_Q_HI, DEFAULT_Q_LO};
use crate::error::{Error, Result};
use crate::estimate::EstimatorSettings;
use crate::harness::{ExperimentPlan, GridCounts, ModelSpec, SamplingPlan, DEFAULT_CURVE_REPLICATIONS};
use crate::models::ModelId;
use crate::rng::Seeds;
use crate::selection::{PenaltyMode, DEFAULT_KAPPA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    Desk,
    Table1,
    Table2,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "table1" => Ok(Preset::Table1),
            "table2" => Ok(Preset::Table2),
            _ => Err(Error::ConfigInvalid {
                key: "preset".into(),
                message: format!("unknown preset `{s}`, expected desk, table1 or table2"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: ModelId,
    pub theta: f64,
    pub c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub horizon: f64,
    pub fine_step: f64,
    pub obs_step: f64,
    /// Block size of single runs.
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_dim: Option<usize>,
    pub max_degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub q_lo: f64,
    pub q_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    pub mode: PenaltyMode,
    pub kappa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1_sq: Option<f64>,
}

/// Monte Carlo tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub replications: usize,
    pub ks: Vec<usize>,
    /// Models of the table. The one named in `[model]` uses its parameters,
    /// the others their reference values.
    pub models: Vec<ModelId>,
    /// Models also estimated with the piecewise polynomial basis.
    pub also_gp: Vec<ModelId>,
    pub curve_replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: ModelSection,
    pub sampling: SamplingSection,
    pub basis: BasisSection,
    pub domain: DomainSection,
    pub penalty: PenaltySection,
    pub seeds: Seeds,
    pub mc: McSection,
}

// Parsed form: everything optional, filled from the preset.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: Option<ModelId>,
    theta: Option<f64>,
    c: Option<f64>,
    d: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    horizon: Option<f64>,
    fine_step: Option<f64>,
    obs_step: Option<f64>,
    k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    family: Option<Family>,
    max_dim: Option<usize>,
    max_degree: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    q_lo: Option<f64>,
    q_hi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPenalty {
    mode: Option<PenaltyMode>,
    kappa: Option<f64>,
    sigma1_sq: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    replications: Option<usize>,
    ks: Option<Vec<usize>>,
    models: Option<Vec<ModelId>>,
    also_gp: Option<Vec<ModelId>>,
    curve_replications: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<Preset>,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    sampling: RawSampling,
    #[serde(default)]
    basis: RawBasis,
    #[serde(default)]
    domain: RawDomain,
    #[serde(default)]
    penalty: RawPenalty,
    #[serde(default)]
    seeds: Seeds,
    #[serde(default)]
    mc: RawMc,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        key: key.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Fully defaulted configuration of a preset.
    pub fn preset(preset: Preset) -> Self {
        let full = ExperimentPlan::table1(0);
        let (plan, k, models, also_gp) = match preset {
            Preset::Desk => (ExperimentPlan::desk(ModelSpec::reference(ModelId::Cir), 0), 50, vec![ModelId::Cir], vec![]),
            Preset::Table1 => (full.clone(), 250, vec![ModelId::Cir], vec![]),
            Preset::Table2 => (full, 250, ModelId::BUILTINS.to_vec(), vec![ModelId::Cir]),
        };
        let ks = match preset {
            Preset::Table1 => plan.ks.clone(),
            _ => vec![k],
        };
        let m = plan.model;
        let s = EstimatorSettings::default();
        Self {
            preset,
            model: ModelSection {
                name: m.id,
                theta: m.theta,
                c: m.c,
                d: m.d,
            },
            sampling: SamplingSection {
                horizon: plan.sampling.horizon,
                fine_step: plan.sampling.fine_step,
                obs_step: plan.sampling.obs_step,
                k,
            },
            basis: BasisSection {
                family: s.family,
                max_dim: s.max_dim,
                max_degree: DEFAULT_MAX_DEGREE,
            },
            domain: DomainSection {
                q_lo: DEFAULT_Q_LO,
                q_hi: DEFAULT_Q_HI,
            },
            penalty: PenaltySection {
                mode: PenaltyMode::Practical,
                kappa: DEFAULT_KAPPA,
                sigma1_sq: None,
            },
            seeds: Seeds::default(),
            mc: McSection {
                replications: plan.replications,
                ks,
                models,
                also_gp,
                curve_replications: DEFAULT_CURVE_REPLICATIONS,
            },
        }
    }

    /// Parses and validates a TOML configuration.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_preset(text, None)
    }

    /// As [`RunConfig::parse`], with `preset` replacing the file's preset.
    pub fn parse_with_preset(text: &str, preset: Option<Preset>) -> Result<Self> {
        let mut raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigSyntax {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        if preset.is_some() {
            raw.preset = preset;
        }
        let mut cfg = Self::preset(raw.preset.unwrap_or_default());

        let m = raw.model;
        if let Some(name) = m.name {
            if name == ModelId::Custom {
                return Err(bad("model.name", "custom models are not available from a config file"));
            }
            let r = ModelSpec::reference(name);
            cfg.model = ModelSection {
                name,
                theta: r.theta,
                c: r.c,
                d: r.d,
            };
            if raw.mc.models.is_none() && cfg.preset != Preset::Table2 {
                cfg.mc.models = vec![name];
            }
        }
        set(&mut cfg.model.theta, m.theta);
        set(&mut cfg.model.c, m.c);
        if m.d.is_some() {
            cfg.model.d = m.d;
        }

        let s = raw.sampling;
        set(&mut cfg.sampling.horizon, s.horizon);
        set(&mut cfg.sampling.fine_step, s.fine_step);
        set(&mut cfg.sampling.obs_step, s.obs_step);
        if let Some(k) = s.k {
            cfg.sampling.k = k;
            if raw.mc.ks.is_none() && cfg.preset != Preset::Table1 {
                cfg.mc.ks = vec![k];
            }
        }

        set(&mut cfg.basis.family, raw.basis.family);
        if raw.basis.max_dim.is_some() {
            cfg.basis.max_dim = raw.basis.max_dim;
        }
        set(&mut cfg.basis.max_degree, raw.basis.max_degree);
        set(&mut cfg.domain.q_lo, raw.domain.q_lo);
        set(&mut cfg.domain.q_hi, raw.domain.q_hi);
        set(&mut cfg.penalty.mode, raw.penalty.mode);
        set(&mut cfg.penalty.kappa, raw.penalty.kappa);
        if raw.penalty.sigma1_sq.is_some() {
            cfg.penalty.sigma1_sq = raw.penalty.sigma1_sq;
        }
        cfg.seeds = raw.seeds;

        set(&mut cfg.mc.replications, raw.mc.replications);
        set(&mut cfg.mc.ks, raw.mc.ks);
        set(&mut cfg.mc.models, raw.mc.models);
        set(&mut cfg.mc.also_gp, raw.mc.also_gp);
        set(&mut cfg.mc.curve_replications, raw.mc.curve_replications);

        cfg.validate()?;
        Ok(cfg)
    }

    /// Command-line overrides: base seed, basis family, and a single block
    /// size for both single runs and tables.
    pub fn with_overrides(mut self, seed: Option<u64>, family: Option<Family>, k: Option<usize>) -> Result<Self> {
        if let Some(seed) = seed {
            self.seeds.base = seed;
        }
        set(&mut self.basis.family, family);
        if let Some(k) = k {
            self.sampling.k = k;
            self.mc.ks = vec![k];
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to toml")
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            id: self.model.name,
            theta: self.model.theta,
            c: self.model.c,
            d: self.model.d,
        }
    }

    pub fn sampling_plan(&self) -> SamplingPlan {
        SamplingPlan {
            horizon: self.sampling.horizon,
            fine_step: self.sampling.fine_step,
            obs_step: self.sampling.obs_step,
        }
    }

    pub fn settings(&self) -> EstimatorSettings {
        EstimatorSettings {
            family: self.basis.family,
            max_dim: self.basis.max_dim,
            max_degree: self.basis.max_degree,
            q_lo: self.domain.q_lo,
            q_hi: self.domain.q_hi,
            kappa: self.penalty.kappa,
            mode: self.penalty.mode,
            sigma1_sq: self.penalty.sigma1_sq,
        }
    }

    /// Checks every constraint, naming the offending keys.
    pub fn validate(&self) -> Result<GridCounts> {
        let counts = self.sampling_plan().counts()?;
        self.model_spec().build().map_err(|e| bad("model", e.to_string()))?;
        let (lo, hi) = (self.domain.q_lo, self.domain.q_hi);
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(bad("domain.q_lo / domain.q_hi", format!("need 0 <= q_lo < q_hi <= 1, got {lo} and {hi}")));
        }
        if !(self.penalty.kappa > 0.0 && self.penalty.kappa.is_finite()) {
            return Err(bad("penalty.kappa", format!("must be positive, got {}", self.penalty.kappa)));
        }
        if self.penalty.mode == PenaltyMode::Theoretical && !self.penalty.sigma1_sq.is_some_and(|s| s > 0.0 && s.is_finite()) {
            return Err(bad("penalty.sigma1_sq", "the theoretical penalty needs a positive bound"));
        }
        if self.basis.max_dim == Some(0) {
            return Err(bad("basis.max_dim", "must be at least 1"));
        }
        let blocks = |k: usize, key: &str| {
            if k == 0 || 3 * k > counts.observations {
                Err(bad(key, format!("k = {k} leaves fewer than 3 blocks of {} increments", counts.observations)))
            } else {
                Ok(())
            }
        };
        blocks(self.sampling.k, "sampling.k")?;
        for &k in &self.mc.ks {
            blocks(k, "mc.ks")?;
        }
        if self.mc.ks.is_empty() {
            return Err(bad("mc.ks", "must not be empty"));
        }
        if self.mc.models.is_empty() {
            return Err(bad("mc.models", "must not be empty"));
        }
        if self.mc.models.contains(&ModelId::Custom) || self.mc.also_gp.contains(&ModelId::Custom) {
            return Err(bad("mc.models", "custom models are not available from a config file"));
        }
        for (key, seed) in [("seeds.base", Some(self.seeds.base)), ("seeds.volatility", self.seeds.volatility), ("seeds.price", self.seeds.price)] {
            if seed.is_some_and(|s| s > i64::MAX as u64) {
                return Err(bad(key, "seeds must fit in a signed 64-bit integer"));
            }
        }
        if self.mc.replications == 0 {
            return Err(bad("mc.replications", "must be at least 1"));
        }
        Ok(counts)
    }

    /// Plans of `mc-table`, one per model.
    pub fn experiment_plans(&self) -> Vec<ExperimentPlan> {
        self.mc
            .models
            .iter()
            .map(|&id| {
                let model = if id == self.model.name { self.model_spec() } else { ModelSpec::reference(id) };
                let mut families = vec![self.basis.family];
                if self.mc.also_gp.contains(&id) && !families.contains(&Family::PiecewisePoly) {
                    families.push(Family::PiecewisePoly);
                }
                ExperimentPlan {
                    model,
                    sampling: self.sampling_plan(),
                    ks: self.mc.ks.clone(),
                    families,
                    settings: self.settings(),
                    replications: self.mc.replications,
                    seeds: self.seeds,
                    curve_replications: self.mc.curve_replications,
                }
            })
            .collect()
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}
