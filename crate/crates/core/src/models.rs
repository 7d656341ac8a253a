//! Volatility models: closed-form drift and squared diffusion plus an
//! exact (or fine-grid Euler) path stepper.
//!
//! The four built-ins are functions of a latent Ornstein-Uhlenbeck state:
//!
//! ```text
//! ExpOu        V = exp(U)
//! TanhOuShift  V = tanh(U) + 2
//! ExpTanhOu    V = exp(tanh(U))
//! Cir          V = U_1^2 + ... + U_d^2,  U_j OU with rate theta/2, vol c/2
//! ```
//!
//! with `dU = -theta U dt + c dW` for the first three, so every path is
//! simulated without discretization error.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    ExpOu,
    TanhOuShift,
    ExpTanhOu,
    Cir,
    Custom,
}

impl ModelId {
    pub const BUILTINS: [ModelId; 4] = [
        ModelId::ExpOu,
        ModelId::TanhOuShift,
        ModelId::ExpTanhOu,
        ModelId::Cir,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::ExpOu => "exp-ou",
            ModelId::TanhOuShift => "tanh-ou-shift",
            ModelId::ExpTanhOu => "exp-tanh-ou",
            ModelId::Cir => "cir",
            ModelId::Custom => "custom",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "exp-ou" | "expou" | "v1" => Ok(ModelId::ExpOu),
            "tanh-ou-shift" | "tanhoushift" | "v2" => Ok(ModelId::TanhOuShift),
            "exp-tanh-ou" | "exptanhou" | "v3" => Ok(ModelId::ExpTanhOu),
            "cir" | "v4" => Ok(ModelId::Cir),
            "custom" => Ok(ModelId::Custom),
            _ => Err(Error::UnknownModel(s.to_string())),
        }
    }
}

/// Parameters of `dU = -rate U dt + vol dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub rate: f64,
    pub vol: f64,
}

impl OuParams {
    pub fn new(rate: f64, vol: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid("rate", format!("must be positive, got {rate}")));
        }
        if !(vol >= 0.0 && vol.is_finite()) {
            return Err(invalid("vol", format!("must be non-negative, got {vol}")));
        }
        Ok(Self { rate, vol })
    }

    pub fn stationary_variance(&self) -> f64 {
        self.vol * self.vol / (2.0 * self.rate)
    }

    /// Decay factor and conditional standard deviation of a step of size `h`.
    pub fn transition(&self, h: f64) -> (f64, f64) {
        let decay = (-self.rate * h).exp();
        let sd = self.vol * (-(-2.0 * self.rate * h).exp_m1() / (2.0 * self.rate)).sqrt();
        (decay, sd)
    }
}

/// Exact OU transition over a step `h` driven by one standard normal draw.
pub fn ou_exact_step(u: f64, params: OuParams, h: f64, noise: f64) -> f64 {
    let (decay, sd) = params.transition(h);
    decay * u + sd * noise
}

/// Draw from the OU stationary law `N(0, vol^2 / (2 rate))`.
pub fn stationary_draw(params: OuParams, noise: f64) -> f64 {
    params.stationary_variance().sqrt() * noise
}

/// Drift of `tanh(U)`.
fn tanh_drift(x: f64, theta: f64, c: f64) -> f64 {
    -(1.0 - x * x) * (c * c * x + 0.5 * theta * ((1.0 + x) / (1.0 - x)).ln())
}

/// Squared diffusion of `tanh(U)`: `(c (1 - x^2))^2`.
fn tanh_diff_sq(x: f64, c: f64) -> f64 {
    let s = c * (1.0 - x * x);
    s * s
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type StepFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// How a user-supplied model advances one fine step.
#[derive(Clone)]
pub enum CustomStepper {
    /// `(v, h, noise) -> v'` drawn from the exact transition law.
    Exact(StepFn),
    /// Euler scheme built from the drift and squared diffusion; approximate.
    Euler,
    /// No stepper; the model can be evaluated but not simulated.
    None,
}

#[derive(Clone)]
pub struct CustomModel {
    pub name: String,
    pub drift: ScalarFn,
    pub diff_sq: ScalarFn,
    pub state_space: (f64, f64),
    pub initial: f64,
    pub stepper: CustomStepper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LatentMap {
    Exp,
    TanhShift,
    ExpTanh,
    SquaredNorm,
}

#[derive(Clone)]
enum Dynamics {
    Latent {
        ou: OuParams,
        dim: usize,
        map: LatentMap,
    },
    Custom(CustomModel),
}

/// A one-dimensional positive volatility diffusion.
#[derive(Clone)]
pub struct DiffusionModel {
    id: ModelId,
    params: BTreeMap<String, f64>,
    state_space: (f64, f64),
    dynamics: Dynamics,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("id", &self.id)
            .field("params", &self.params)
            .field("state_space", &self.state_space)
            .finish()
    }
}

/// Build one of the four reference models.
///
/// `dim` is required for [`ModelId::Cir`] and ignored otherwise.
pub fn builtin_model(id: ModelId, theta: f64, c: f64, dim: Option<u32>) -> Result<DiffusionModel> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid("theta", format!("must be positive, got {theta}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("c", format!("must be positive, got {c}")));
    }
    let mut params = BTreeMap::from([("theta".to_string(), theta), ("c".to_string(), c)]);
    let (dynamics, state_space) = match id {
        ModelId::ExpOu | ModelId::TanhOuShift | ModelId::ExpTanhOu => {
            let map = match id {
                ModelId::ExpOu => LatentMap::Exp,
                ModelId::TanhOuShift => LatentMap::TanhShift,
                _ => LatentMap::ExpTanh,
            };
            let space = match map {
                LatentMap::Exp => (0.0, f64::INFINITY),
                LatentMap::TanhShift => (1.0, 3.0),
                _ => ((-1.0f64).exp(), 1.0f64.exp()),
            };
            let ou = OuParams::new(theta, c)?;
            (Dynamics::Latent { ou, dim: 1, map }, space)
        }
        ModelId::Cir => {
            let d = match dim {
                Some(d) if d >= 1 => d,
                Some(d) => return Err(invalid("d", format!("must be at least 1, got {d}"))),
                None => return Err(invalid("d", "required for the CIR model")),
            };
            params.insert("d".to_string(), f64::from(d));
            let ou = OuParams::new(theta / 2.0, c / 2.0)?;
            let dynamics = Dynamics::Latent {
                ou,
                dim: d as usize,
                map: LatentMap::SquaredNorm,
            };
            (dynamics, (0.0, f64::INFINITY))
        }
        ModelId::Custom => return Err(invalid("id", "custom models are built with DiffusionModel::custom")),
    };
    Ok(DiffusionModel {
        id,
        params,
        state_space,
        dynamics,
    })
}

impl DiffusionModel {
    pub fn custom(model: CustomModel) -> Result<Self> {
        let (lo, hi) = model.state_space;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(invalid("state_space", format!("empty interval ({lo}, {hi})")));
        }
        if !(model.initial > lo && model.initial < hi) {
            return Err(invalid("initial", format!("{} outside ({lo}, {hi})", model.initial)));
        }
        Ok(Self {
            id: ModelId::Custom,
            params: BTreeMap::new(),
            state_space: model.state_space,
            dynamics: Dynamics::Custom(model),
        })
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    pub fn name(&self) -> &str {
        match &self.dynamics {
            Dynamics::Custom(m) => &m.name,
            Dynamics::Latent { .. } => self.id.as_str(),
        }
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn state_space(&self) -> (f64, f64) {
        self.state_space
    }

    /// False when paths come from an Euler scheme.
    pub fn is_exact(&self) -> bool {
        !matches!(
            &self.dynamics,
            Dynamics::Custom(CustomModel {
                stepper: CustomStepper::Euler,
                ..
            })
        )
    }

    fn theta_c(&self) -> (f64, f64) {
        (self.params["theta"], self.params["c"])
    }

    pub fn drift(&self, v: f64) -> f64 {
        match &self.dynamics {
            Dynamics::Custom(m) => (m.drift)(v),
            Dynamics::Latent { map, dim, .. } => {
                let (theta, c) = self.theta_c();
                match map {
                    LatentMap::Exp => v * (-theta * v.ln() + 0.5 * c * c),
                    LatentMap::TanhShift => tanh_drift(v - 2.0, theta, c),
                    LatentMap::ExpTanh => {
                        let x = v.ln();
                        v * (tanh_drift(x, theta, c) + 0.5 * tanh_diff_sq(x, c))
                    }
                    LatentMap::SquaredNorm => *dim as f64 * c * c / 4.0 - theta * v,
                }
            }
        }
    }

    pub fn diff_sq(&self, v: f64) -> f64 {
        match &self.dynamics {
            Dynamics::Custom(m) => (m.diff_sq)(v),
            Dynamics::Latent { map, .. } => {
                let (_, c) = self.theta_c();
                match map {
                    LatentMap::Exp => c * c * v * v,
                    LatentMap::TanhShift => tanh_diff_sq(v - 2.0, c),
                    LatentMap::ExpTanh => v * v * tanh_diff_sq(v.ln(), c),
                    LatentMap::SquaredNorm => c * c * v,
                }
            }
        }
    }

    /// Stationary mean where it has a closed form.
    pub fn stationary_mean(&self) -> Option<f64> {
        match &self.dynamics {
            Dynamics::Latent { ou, map: LatentMap::Exp, .. } => Some((0.5 * ou.stationary_variance()).exp()),
            Dynamics::Latent {
                ou,
                dim,
                map: LatentMap::SquaredNorm,
            } => Some(*dim as f64 * ou.stationary_variance()),
            _ => None,
        }
    }

    /// A stepper advancing paths of this model on a grid of step `h`.
    pub fn stepper(&self, h: f64) -> Result<PathStepper<'_>> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("h", format!("step must be positive, got {h}")));
        }
        let kind = match &self.dynamics {
            Dynamics::Latent { ou, dim, map } => {
                let (decay, sd) = ou.transition(h);
                StepKind::Latent {
                    ou: *ou,
                    decay,
                    sd,
                    map: *map,
                    latent: vec![0.0; *dim],
                }
            }
            Dynamics::Custom(m) => match &m.stepper {
                CustomStepper::None => return Err(Error::NoStepper(m.name.clone())),
                CustomStepper::Exact(f) => StepKind::CustomExact(f.clone(), m.initial),
                CustomStepper::Euler => StepKind::Euler(m.initial),
            },
        };
        Ok(PathStepper { model: self, h, kind })
    }
}

enum StepKind {
    Latent {
        ou: OuParams,
        decay: f64,
        sd: f64,
        map: LatentMap,
        latent: Vec<f64>,
    },
    CustomExact(StepFn, f64),
    Euler(f64),
}

/// Sequential path generator for one model at a fixed step.
pub struct PathStepper<'a> {
    model: &'a DiffusionModel,
    h: f64,
    kind: StepKind,
}

impl PathStepper<'_> {
    fn observe(map: LatentMap, latent: &[f64]) -> f64 {
        match map {
            LatentMap::Exp => latent[0].exp(),
            LatentMap::TanhShift => latent[0].tanh() + 2.0,
            LatentMap::ExpTanh => latent[0].tanh().exp(),
            LatentMap::SquaredNorm => latent.iter().map(|u| u * u).sum(),
        }
    }

    /// Initialize the state (stationary draw for built-ins) and return `V_0`.
    pub fn start<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        match &mut self.kind {
            StepKind::Latent { ou, map, latent, .. } => {
                for u in latent.iter_mut() {
                    *u = stationary_draw(*ou, rng.sample(StandardNormal));
                }
                Self::observe(*map, latent)
            }
            StepKind::CustomExact(_, v) | StepKind::Euler(v) => {
                if let Dynamics::Custom(m) = &self.model.dynamics {
                    *v = m.initial;
                }
                *v
            }
        }
    }

    /// Advance one step and return the new value of `V`.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let h = self.h;
        match &mut self.kind {
            StepKind::Latent {
                decay, sd, map, latent, ..
            } => {
                for u in latent.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *u = *decay * *u + *sd * z;
                }
                Ok(Self::observe(*map, latent))
            }
            StepKind::CustomExact(f, v) => {
                *v = f(*v, h, rng.sample(StandardNormal));
                Ok(*v)
            }
            StepKind::Euler(v) => {
                let z: f64 = rng.sample(StandardNormal);
                let m = self.model;
                let s2 = m.diff_sq(*v).max(0.0);
                *v += m.drift(*v) * h + (s2 * h).sqrt() * z;
                Ok(*v)
            }
        }
    }
}
