//! Fine-grid volatility paths, integrated volatility blocks and the
//! observed price increments.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{DiffusionModel, ModelId};

/// Values of `V` at ticks `0, step, ..., len * step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineGridPath {
    pub step: f64,
    pub values: Vec<f64>,
    pub model: ModelId,
}

impl FineGridPath {
    /// Number of fine intervals `N'`.
    pub fn intervals(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.intervals() as f64
    }
}

/// `values[l]` approximates the integral of `V` over `[l * step, (l + 1) * step]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedSeries {
    pub step: f64,
    pub ratio: usize,
    pub values: Vec<f64>,
}

/// Price increments on the observation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub step: f64,
    pub increments: Vec<f64>,
}

impl ObservationSet {
    pub fn new(step: f64, increments: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid("delta", format!("must be positive, got {step}")));
        }
        if let Some(i) = increments.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { step, increments })
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Cumulated prices `X_0 = 0, X_1, ..., X_n`.
    pub fn prices(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = 0.0;
        x.push(acc);
        for dx in &self.increments {
            acc += dx;
            x.push(acc);
        }
        x
    }
}

fn check_grid(step: f64, intervals: usize) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid("fine_step", format!("must be positive, got {step}")));
    }
    if intervals == 0 {
        return Err(invalid("fine_len", "need at least one fine interval"));
    }
    Ok(())
}

fn check_state(model: &DiffusionModel, value: f64, tick: usize) -> Result<f64> {
    let (lo, hi) = model.state_space();
    if value > lo && value < hi {
        Ok(value)
    } else {
        Err(Error::LeftStateSpace { value, lo, hi, tick })
    }
}

/// Simulate `V` at `intervals + 1` ticks of size `step`, starting stationary.
pub fn simulate_fine_path<R: Rng + ?Sized>(
    model: &DiffusionModel,
    step: f64,
    intervals: usize,
    rng: &mut R,
) -> Result<FineGridPath> {
    check_grid(step, intervals)?;
    let mut stepper = model.stepper(step)?;
    let mut values = Vec::with_capacity(intervals + 1);
    values.push(check_state(model, stepper.start(rng), 0)?);
    for tick in 1..=intervals {
        values.push(check_state(model, stepper.advance(rng)?, tick)?);
    }
    Ok(FineGridPath {
        step,
        values,
        model: model.id(),
    })
}

/// Composite trapezoid over `ratio` fine intervals per block.
pub fn integrate_blocks(path: &FineGridPath, ratio: usize) -> Result<IntegratedSeries> {
    let len = path.intervals();
    if ratio == 0 || len == 0 || !len.is_multiple_of(ratio) {
        return Err(Error::RatioMismatch { ratio, len });
    }
    let values = path
        .values
        .windows(ratio + 1)
        .step_by(ratio)
        .map(|w| path.step * trapezoid_sum(w))
        .collect();
    Ok(IntegratedSeries {
        step: path.step * ratio as f64,
        ratio,
        values,
    })
}

/// `w[0]/2 + w[1] + ... + w[r-1] + w[r]/2`.
fn trapezoid_sum(w: &[f64]) -> f64 {
    let inner: f64 = w[1..w.len() - 1].iter().sum();
    0.5 * (w[0] + w[w.len() - 1]) + inner
}

/// Simulate and integrate in one pass without storing the fine path.
///
/// Consumes the random stream exactly as [`simulate_fine_path`] does and
/// returns the same blocks as `integrate_blocks(simulate_fine_path(..))`,
/// plus the block-end values of `V` when `keep_coarse` is set.
pub fn simulate_integrated<R: Rng + ?Sized>(
    model: &DiffusionModel,
    fine_step: f64,
    intervals: usize,
    ratio: usize,
    rng: &mut R,
    keep_coarse: bool,
) -> Result<(IntegratedSeries, Option<Vec<f64>>)> {
    check_grid(fine_step, intervals)?;
    if ratio == 0 || !intervals.is_multiple_of(ratio) {
        return Err(Error::RatioMismatch { ratio, len: intervals });
    }
    let blocks = intervals / ratio;
    let mut stepper = model.stepper(fine_step)?;
    let mut window = vec![0.0; ratio + 1];
    window[0] = check_state(model, stepper.start(rng), 0)?;
    let mut values = Vec::with_capacity(blocks);
    let mut coarse = keep_coarse.then(|| {
        let mut c = Vec::with_capacity(blocks + 1);
        c.push(window[0]);
        c
    });
    let mut tick = 0;
    for _ in 0..blocks {
        for slot in window.iter_mut().skip(1) {
            tick += 1;
            *slot = check_state(model, stepper.advance(rng)?, tick)?;
        }
        values.push(fine_step * trapezoid_sum(&window));
        window[0] = window[ratio];
        if let Some(c) = coarse.as_mut() {
            c.push(window[0]);
        }
    }
    let series = IntegratedSeries {
        step: fine_step * ratio as f64,
        ratio,
        values,
    };
    Ok((series, coarse))
}

/// `dX_l = sqrt(J_l) * eps_l` with `eps` drawn from `rng`.
pub fn generate_observations<R: Rng + ?Sized>(integrated: &IntegratedSeries, rng: &mut R) -> Result<ObservationSet> {
    let increments = integrated
        .values
        .iter()
        .enumerate()
        .map(|(index, &j)| {
            if j < 0.0 || j.is_nan() {
                return Err(Error::NegativeIntegral { index, value: j });
            }
            let eps: f64 = rng.sample(StandardNormal);
            Ok(j.sqrt() * eps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservationSet {
        step: integrated.step,
        increments,
    })
}
