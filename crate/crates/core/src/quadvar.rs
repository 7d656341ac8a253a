//! Realized quadratic variation blocks and the regression samples built
//! from them.

use serde::{Deserialize, Serialize};

use crate::bases::EstimationDomain;
use crate::error::{invalid, Error, Result};
use crate::sampling::{IntegratedSeries, ObservationSet};

/// `values[i] = (1 / (k delta)) * sum of the k squared increments of block i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadVarSeries {
    pub values: Vec<f64>,
    pub k: usize,
    pub delta: f64,
}

impl QuadVarSeries {
    /// Block length `k * delta`.
    pub fn block(&self) -> f64 {
        self.k as f64 * self.delta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn quad_var(obs: &ObservationSet, k: usize) -> Result<QuadVarSeries> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if k > obs.len() {
        return Err(Error::TooShort { needed: k, got: obs.len() });
    }
    let scale = 1.0 / (k as f64 * obs.step);
    let values = obs
        .increments
        .chunks_exact(k)
        .map(|c| scale * c.iter().map(|x| x * x).sum::<f64>())
        .collect();
    Ok(QuadVarSeries {
        values,
        k,
        delta: obs.step,
    })
}

/// Block averages of the true volatility, `(1/Delta) * integral over block i`,
/// from integrated fine blocks. Diagnostic companion of [`quad_var`].
pub fn integrated_block_means(integrated: &IntegratedSeries, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > integrated.values.len() {
        return Err(Error::TooShort { needed: k.max(1), got: integrated.values.len() });
    }
    let scale = 1.0 / (k as f64 * integrated.step);
    Ok(integrated
        .values
        .chunks_exact(k)
        .map(|c| scale * c.iter().sum::<f64>())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Drift,
    DiffSq,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Drift => "drift",
            Target::DiffSq => "diff-sq",
        }
    }
}

/// Design/response pairs for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    pub target: Target,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Block length `Delta`.
    pub block: f64,
    pub domain: Option<EstimationDomain>,
}

impl RegressionSample {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn with_domain(mut self, domain: EstimationDomain) -> Self {
        self.domain = Some(domain);
        self
    }
}

/// Pair `V_i` with the response built from blocks `i + 1` and `i + 2`.
pub fn build_regression(qv: &QuadVarSeries, target: Target) -> Result<RegressionSample> {
    let n = qv.len();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    let block = qv.block();
    let v = &qv.values;
    let ys = (0..n - 2)
        .map(|i| {
            let d = v[i + 2] - v[i + 1];
            match target {
                Target::Drift => d / block,
                Target::DiffSq => 1.5 * d * d / block,
            }
        })
        .collect();
    Ok(RegressionSample {
        target,
        xs: v[..n - 2].to_vec(),
        ys,
        block,
        domain: None,
    })
}
