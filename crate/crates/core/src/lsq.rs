//! Least-squares projection of a regression sample on one function space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bases::{design_matrix, BasisSpec, EstimationDomain};
use crate::error::{Error, Result};
use crate::quadvar::{RegressionSample, Target};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Points of a sample that fall inside the domain, mapped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub target: Target,
    pub block: f64,
    pub domain: EstimationDomain,
    pub us: Vec<f64>,
    pub ys: Vec<f64>,
}

impl PreparedSample {
    pub fn new(sample: &RegressionSample, domain: EstimationDomain) -> Result<Self> {
        if let Some(i) = sample.ys.iter().position(|y| !y.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let (us, ys): (Vec<f64>, Vec<f64>) = sample
            .xs
            .iter()
            .zip(&sample.ys)
            .filter(|(x, _)| domain.contains(**x))
            .map(|(&x, &y)| (domain.to_unit(x).clamp(0.0, 1.0), y))
            .unzip();
        if us.is_empty() {
            return Err(Error::EmptyDomain);
        }
        Ok(Self {
            target: sample.target,
            block: sample.block,
            domain,
            us,
            ys,
        })
    }

    /// Uses the sample's own domain, or `[min x, max x]` when it has none.
    pub fn from_sample(sample: &RegressionSample) -> Result<Self> {
        let domain = match sample.domain {
            Some(d) => d,
            None => {
                let lo = sample.xs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = sample.xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if sample.xs.is_empty() {
                    return Err(Error::EmptyDomain);
                }
                EstimationDomain::new(lo, hi)?
            }
        };
        Self::new(sample, domain)
    }

    pub fn len(&self) -> usize {
        self.us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.us.is_empty()
    }
}

/// A fitted function `sum_j coeffs[j] phi_j(map(v))` supported on the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub spec: BasisSpec,
    pub coeffs: Vec<f64>,
    /// Mean squared residual over the retained points.
    pub contrast: f64,
    pub domain: EstimationDomain,
    pub retained: usize,
    pub target: Target,
}

impl Fit {
    /// Fewer retained points than basis functions.
    pub fn is_feasible(&self) -> bool {
        self.retained >= self.spec.dim()
    }

    /// Value at `v`; zero outside the domain.
    pub fn evaluate(&self, v: f64) -> f64 {
        if !self.domain.contains(v) {
            return 0.0;
        }
        let u = self.domain.to_unit(v).clamp(0.0, 1.0);
        self.spec.eval(u).iter().zip(&self.coeffs).map(|(p, c)| p * c).sum()
    }

    /// Curve on `n` equally spaced points of the domain.
    pub fn curve(&self, n: usize) -> Vec<(f64, f64)> {
        self.domain.grid(n).into_iter().map(|v| (v, self.evaluate(v))).collect()
    }
}

pub fn evaluate(fit: &Fit, v: f64) -> f64 {
    fit.evaluate(v)
}

/// Minimum-norm least-squares solution of `a x ~ b` via SVD, discarding
/// singular values below `RANK_TOL` times the largest.
pub fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = RANK_TOL * s_max;
    let mut x = DVector::zeros(a.ncols());
    if s_max == 0.0 {
        return x;
    }
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let w = u.column(i).dot(b) / s;
            x += w * v_t.row(i).transpose();
        }
    }
    x
}

pub fn fit_prepared(sample: &PreparedSample, spec: BasisSpec) -> Result<Fit> {
    let a = design_matrix(&spec, &sample.us)?;
    let y = DVector::from_column_slice(&sample.ys);
    let coeffs = min_norm_lstsq(&a, &y);
    let residual = &y - &a * &coeffs;
    let contrast = residual.norm_squared() / sample.len() as f64;
    Ok(Fit {
        spec,
        coeffs: coeffs.iter().copied().collect(),
        contrast,
        domain: sample.domain,
        retained: sample.len(),
        target: sample.target,
    })
}

/// Fit a chain of nested spaces, each spanned by the leading columns of
/// the largest one, from a single Householder QR of the largest design.
///
/// For each space the minimum-norm solution of the leading triangular
/// block is taken by SVD, which is the minimum-norm least-squares solution
/// of the full problem. Spaces with more dimensions than points are
/// skipped. Fits come back in the order of `chain`.
pub fn fit_nested(sample: &PreparedSample, chain: &[BasisSpec]) -> Result<Vec<Fit>> {
    let m = sample.len();
    let Some(top) = chain.iter().filter(|s| s.dim() <= m).max_by_key(|s| s.dim()).copied() else {
        return Ok(Vec::new());
    };
    let a = design_matrix(&top, &sample.us)?;
    let qr = a.qr();
    let r = qr.r();
    let mut qty = DVector::from_column_slice(&sample.ys);
    qr.q_tr_mul(&mut qty);
    // tail[d] = sum of qty[j]^2 for j >= d
    let mut tail = vec![0.0; top.dim() + 1];
    tail[top.dim()] = qty.rows(top.dim(), m - top.dim()).norm_squared();
    for d in (0..top.dim()).rev() {
        tail[d] = tail[d + 1] + qty[d] * qty[d];
    }
    chain
        .iter()
        .filter(|s| s.dim() <= m)
        .map(|&spec| {
            let d = spec.dim();
            let r_d = r.view((0, 0), (d, d)).into_owned();
            let c = qty.rows(0, d).into_owned();
            let x = min_norm_lstsq(&r_d, &c);
            let inner = (&c - &r_d * &x).norm_squared();
            Ok(Fit {
                spec,
                coeffs: x.iter().copied().collect(),
                contrast: (tail[d] + inner) / m as f64,
                domain: sample.domain,
                retained: m,
                target: sample.target,
            })
        })
        .collect()
}

/// Fit `spec` to the points of `sample` inside its domain.
pub fn fit(sample: &RegressionSample, spec: BasisSpec) -> Result<Fit> {
    fit_prepared(&PreparedSample::from_sample(sample)?, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalError {
    pub value: f64,
    pub retained: usize,
}

/// Mean of `(truth(v) - fit(v))^2` over the design points inside the domain.
pub fn empirical_error(fit: &Fit, truth: impl Fn(f64) -> f64, design: &[f64]) -> Result<EmpiricalError> {
    let (sum, count) = design
        .iter()
        .filter(|v| fit.domain.contains(**v))
        .fold((0.0, 0usize), |(s, c), &v| {
            let e = truth(v) - fit.evaluate(v);
            (s + e * e, c + 1)
        });
    if count == 0 {
        return Err(Error::EmptyDomain);
    }
    Ok(EmpiricalError {
        value: sum / count as f64,
        retained: count,
    })
}
