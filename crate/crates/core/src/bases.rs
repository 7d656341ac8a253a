//! Finite-dimensional function spaces on `[0, 1]` and the affine map from
//! the estimation interval onto it.
//!
//! Two families are provided:
//!
//! * trigonometric: `1, sqrt2 cos(2 pi q x), sqrt2 sin(2 pi q x)` for
//!   `q = 1..m`, dimension `2m + 1`;
//! * dyadic piecewise polynomials: `2^p` equal cells, on each cell the
//!   orthonormal shifted Legendre polynomials of degree `<= r`, dimension
//!   `2^p (r + 1)`. Columns are ordered degree-major (`s * 2^p + cell`), so
//!   for a fixed depth the lower-degree spaces are leading column blocks.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadvar::QuadVarSeries;

/// Interval `[lo, hi]` on which functions are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationDomain {
    pub lo: f64,
    pub hi: f64,
}

impl EstimationDomain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(invalid("domain", format!("non-finite bounds [{lo}, {hi}]")));
        }
        if lo == hi {
            return Err(Error::DegenerateDomain(lo));
        }
        if lo > hi {
            return Err(invalid("domain", format!("lower bound {lo} above upper bound {hi}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `n` equally spaced points from `lo` to `hi` inclusive.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.lo],
            _ => (0..n).map(|i| self.from_unit(i as f64 / (n - 1) as f64)).collect(),
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics:
/// position `q (n - 1)` in the sorted sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub const DEFAULT_Q_LO: f64 = 0.025;
pub const DEFAULT_Q_HI: f64 = 0.975;

/// Estimation interval from the empirical `q_lo` and `q_hi` quantiles of
/// the realized volatility blocks.
pub fn domain_from_data(qv: &QuadVarSeries, q_lo: f64, q_hi: f64) -> Result<EstimationDomain> {
    domain_from_values(&qv.values, q_lo, q_hi)
}

pub fn domain_from_values(values: &[f64], q_lo: f64, q_hi: f64) -> Result<EstimationDomain> {
    if !(0.0..1.0).contains(&q_lo) || !(q_lo < q_hi && q_hi <= 1.0) {
        return Err(invalid("quantiles", format!("need 0 <= q_lo < q_hi <= 1, got ({q_lo}, {q_hi})")));
    }
    if values.len() < 10 {
        return Err(Error::TooShort { needed: 10, got: values.len() });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    EstimationDomain::new(quantile_sorted(&sorted, q_lo), quantile_sorted(&sorted, q_hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "trig")]
    Trig,
    #[serde(rename = "gp")]
    PiecewisePoly,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Trig => "trig",
            Family::PiecewisePoly => "gp",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trig" | "t" | "trigonometric" => Ok(Family::Trig),
            "gp" | "pp" | "piecewise-poly" | "piecewise" => Ok(Family::PiecewisePoly),
            _ => Err(invalid("basis.family", format!("unknown family `{s}`"))),
        }
    }
}

/// One function space of a collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum BasisSpec {
    /// Frequencies `0..=m`.
    Trig { m: usize },
    /// `2^depth` cells, degree `<= degree` on each.
    PiecewisePoly { depth: u32, degree: usize },
}

impl BasisSpec {
    pub fn trig_dim(dim: usize) -> Result<Self> {
        if dim.is_multiple_of(2) {
            return Err(invalid("dim", format!("trigonometric dimensions are odd, got {dim}")));
        }
        Ok(BasisSpec::Trig { m: dim / 2 })
    }

    pub fn dim(&self) -> usize {
        match *self {
            BasisSpec::Trig { m } => 2 * m + 1,
            BasisSpec::PiecewisePoly { depth, degree } => (1usize << depth) * (degree + 1),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            BasisSpec::Trig { .. } => Family::Trig,
            BasisSpec::PiecewisePoly { .. } => Family::PiecewisePoly,
        }
    }

    /// Fill `row` (length `dim()`) with every basis function at `x`.
    /// `x` is assumed to lie in `[0, 1]`.
    pub fn eval_into(&self, x: f64, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.dim());
        match *self {
            BasisSpec::Trig { m } => {
                row[0] = 1.0;
                for q in 1..=m {
                    let (s, c) = (2.0 * PI * q as f64 * x).sin_cos();
                    row[2 * q - 1] = SQRT_2 * c;
                    row[2 * q] = SQRT_2 * s;
                }
            }
            BasisSpec::PiecewisePoly { depth, degree } => {
                row.fill(0.0);
                let cells = 1usize << depth;
                let cell = ((x * cells as f64).floor() as usize).min(cells - 1);
                let len = 1.0 / cells as f64;
                let t = 2.0 * (x - cell as f64 * len) / len - 1.0;
                let mut p = [0.0; 16];
                let p = &mut p[..=degree.min(15)];
                if degree >= 16 {
                    let mut big = vec![0.0; degree + 1];
                    legendre_into(t, &mut big);
                    for (s, v) in big.iter().enumerate() {
                        row[s * cells + cell] = v * ((2 * s + 1) as f64 / len).sqrt();
                    }
                    return;
                }
                legendre_into(t, p);
                for (s, v) in p.iter().enumerate() {
                    row[s * cells + cell] = v * ((2 * s + 1) as f64 / len).sqrt();
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.dim()];
        self.eval_into(x, &mut row);
        row
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisSpec::Trig { m } => write!(f, "trig(D={})", 2 * m + 1),
            BasisSpec::PiecewisePoly { depth, degree } => {
                write!(f, "gp(p={depth},r={degree},D={})", self.dim())
            }
        }
    }
}

/// Legendre polynomials `P_0..P_{out.len()-1}` at `t` in `[-1, 1]`.
fn legendre_into(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = t;
    }
    for s in 2..out.len() {
        let s_f = s as f64;
        out[s] = ((2.0 * s_f - 1.0) * t * out[s - 1] - (s_f - 1.0) * out[s - 2]) / s_f;
    }
}

/// The `j`-th trigonometric basis function (1-based) at `x` in `[0, 1]`.
pub fn trig_eval(j: usize, x: f64) -> Result<f64> {
    if j < 1 {
        return Err(Error::BadBasisIndex);
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutsideUnitInterval(x));
    }
    if j == 1 {
        return Ok(1.0);
    }
    let q = (j / 2) as f64;
    Ok(if j.is_multiple_of(2) {
        SQRT_2 * (2.0 * PI * q * x).cos()
    } else {
        SQRT_2 * (2.0 * PI * q * x).sin()
    })
}

pub const DEFAULT_MAX_DEGREE: usize = 4;

/// Every space of `family` with dimension at most `max_dim`, in increasing
/// `(depth, degree)` order for piecewise polynomials and increasing
/// dimension for the trigonometric family.
pub fn collection(family: Family, max_dim: usize, max_degree: usize) -> Vec<BasisSpec> {
    match family {
        Family::Trig => (0..)
            .map(|m| BasisSpec::Trig { m })
            .take_while(|s| s.dim() <= max_dim)
            .collect(),
        Family::PiecewisePoly => {
            let mut out = Vec::new();
            let mut depth = 0u32;
            while (1usize << depth) <= max_dim {
                for degree in 0..=max_degree {
                    let spec = BasisSpec::PiecewisePoly { depth, degree };
                    if spec.dim() <= max_dim {
                        out.push(spec);
                    }
                }
                depth += 1;
            }
            out
        }
    }
}

/// Cap `floor(N Delta / ln^1.5 N)` on collection dimensions, at least 1.
pub fn max_dimension(blocks: usize, block: f64) -> usize {
    if blocks < 2 {
        return 1;
    }
    let n = blocks as f64;
    let cap = (n * block / n.ln().powf(1.5)).floor();
    if cap.is_finite() && cap >= 1.0 {
        cap as usize
    } else {
        1
    }
}

/// Rows `phi_1(x_i), ..., phi_D(x_i)` for points already mapped to `[0, 1]`.
pub fn design_matrix(spec: &BasisSpec, xs: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(&x) = xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::OutsideUnitInterval(x));
    }
    let d = spec.dim();
    let mut m = DMatrix::zeros(xs.len(), d);
    let mut row = vec![0.0; d];
    for (i, &x) in xs.iter().enumerate() {
        spec.eval_into(x, &mut row);
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng;

    #[test]
    fn trig_examples() {
        assert_eq!(trig_eval(1, 0.73).unwrap(), 1.0);
        assert!((trig_eval(2, 0.25).unwrap() - SQRT_2 * (PI / 2.0).cos()).abs() < 1e-15);
        assert!((trig_eval(3, 0.25).unwrap() - SQRT_2).abs() < 1e-15);
        assert!((trig_eval(4, 0.25).unwrap() + SQRT_2).abs() < 1e-15);
        assert!(trig_eval(0, 0.5).is_err());
        assert!(trig_eval(2, 1.5).is_err());
        // eval_into agrees with the indexed form
        let spec = BasisSpec::trig_dim(9).unwrap();
        for &x in &[0.0, 0.17, 0.5, 1.0] {
            let row = spec.eval(x);
            for j in 1..=9 {
                assert!((row[j - 1] - trig_eval(j, x).unwrap()).abs() < 1e-14);
            }
        }
    }

    /// Composite Gauss-Legendre (5 nodes, exact to degree 9) on `cells`
    /// equal cells.
    fn quad5(cells: usize, f: impl Fn(f64) -> f64) -> f64 {
        let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
        let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
        let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
        let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
        let nodes = [-b, -a, 0.0, a, b];
        let weights = [wb, wa, 128.0 / 225.0, wa, wb];
        let h = 1.0 / cells as f64;
        (0..cells)
            .map(|c| {
                let mid = (c as f64 + 0.5) * h;
                nodes.iter().zip(&weights).map(|(t, w)| w * f(mid + 0.5 * h * t)).sum::<f64>() * 0.5 * h
            })
            .sum()
    }

    #[test]
    fn trig_orthonormal_by_quadrature() {
        // 10^4-point rectangle rule is exact for trig polynomials of degree
        // below 10^4 on the periodic unit interval.
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        for j in 1..=25 {
            for k in j..=25 {
                let s: f64 = xs.iter().map(|&x| trig_eval(j, x).unwrap() * trig_eval(k, x).unwrap()).sum::<f64>() / n as f64;
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-8, "({j},{k}) -> {s}");
            }
        }
    }

    #[test]
    fn piecewise_orthonormal() {
        for depth in 0..3u32 {
            for degree in 0..=4 {
                let spec = BasisSpec::PiecewisePoly { depth, degree };
                let d = spec.dim();
                // products have degree <= 8 on each cell: exact up to rounding
                for a in 0..d {
                    for b in a..d {
                        let s = quad5(1 << depth, |x| {
                            let r = spec.eval(x);
                            r[a] * r[b]
                        });
                        let expect = if a == b { 1.0 } else { 0.0 };
                        assert!((s - expect).abs() < 1e-12, "{spec} ({a},{b}) -> {s}");
                    }
                }
            }
        }
    }

    #[test]
    fn distinct_cells_exactly_orthogonal() {
        let spec = BasisSpec::PiecewisePoly { depth: 2, degree: 2 };
        for i in 0..=1000 {
            let r = spec.eval(i as f64 / 1000.0);
            let nonzero_cells: std::collections::BTreeSet<usize> =
                r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j % 4).collect();
            assert!(nonzero_cells.len() <= 1);
        }
    }

    #[test]
    fn design_matrix_examples() {
        let ones = design_matrix(&BasisSpec::Trig { m: 0 }, &[0.1, 0.5, 0.9]).unwrap();
        assert!(ones.iter().all(|&v| v == 1.0));
        let gp = design_matrix(&BasisSpec::PiecewisePoly { depth: 1, degree: 0 }, &[0.2, 0.7]).unwrap();
        assert_eq!(gp.nrows(), 2);
        assert!((gp[(0, 0)] - SQRT_2).abs() < 1e-15 && gp[(0, 1)] == 0.0);
        assert!(gp[(1, 0)] == 0.0 && (gp[(1, 1)] - SQRT_2).abs() < 1e-15);
        assert!(design_matrix(&BasisSpec::Trig { m: 1 }, &[1.2]).is_err());
    }

    #[test]
    fn uniform_design_gram_near_identity() {
        let mut rng = stream(5, Purpose::Oracle, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let m = design_matrix(&BasisSpec::trig_dim(25).unwrap(), &xs).unwrap();
        let gram = m.transpose() * &m / xs.len() as f64;
        for i in 0..25 {
            for j in 0..25 {
                let expect = if i == j { 1.0 } else { 0.0 };
                // Monte Carlo error ~ 1/sqrt(10^4) per entry
                assert!((gram[(i, j)] - expect).abs() < 6e-2, "({i},{j}) {}", gram[(i, j)]);
            }
        }
    }

    #[test]
    fn uniform_grid_design_gram_identity() {
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let m = design_matrix(&BasisSpec::trig_dim(25).unwrap(), &xs).unwrap();
        let gram = m.transpose() * &m / n as f64;
        let off = (gram - DMatrix::<f64>::identity(25, 25)).amax();
        assert!(off < 1e-2, "{off}");
    }

    #[test]
    fn collections() {
        let dims: Vec<usize> = collection(Family::Trig, 7, 0).iter().map(|s| s.dim()).collect();
        assert_eq!(dims, vec![1, 3, 5, 7]);
        assert_eq!(max_dimension(2000, 0.5), 47);
        let t = collection(Family::Trig, max_dimension(2000, 0.5), 0);
        assert_eq!(t.last().unwrap().dim(), 47);
        assert_eq!(t.len(), 24);

        let gp = collection(Family::PiecewisePoly, 8, 1);
        let pairs: Vec<(u32, usize)> = gp
            .iter()
            .map(|s| match s {
                BasisSpec::PiecewisePoly { depth, degree } => (*depth, *degree),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(pairs, vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1), (3, 0)]);
        assert!(collection(Family::PiecewisePoly, 47, DEFAULT_MAX_DEGREE).iter().all(|s| s.dim() <= 47));
    }

    #[test]
    fn trig_spaces_nested() {
        // Columns of the smaller design are exactly the leading columns of the larger.
        let xs = [0.0, 0.3, 0.77, 1.0];
        let small = design_matrix(&BasisSpec::trig_dim(5).unwrap(), &xs).unwrap();
        let big = design_matrix(&BasisSpec::trig_dim(11).unwrap(), &xs).unwrap();
        assert_eq!(small, big.columns(0, 5).into_owned());
    }

    #[test]
    fn piecewise_spaces_nested_by_degree() {
        let xs = [0.0, 0.1, 0.45, 0.8, 1.0];
        let small = design_matrix(&BasisSpec::PiecewisePoly { depth: 2, degree: 1 }, &xs).unwrap();
        let big = design_matrix(&BasisSpec::PiecewisePoly { depth: 2, degree: 3 }, &xs).unwrap();
        assert_eq!(small, big.columns(0, 8).into_owned());
    }

    #[test]
    fn domain_quantiles() {
        let grid = QuadVarSeries { values: (0..=20).map(|i| i as f64 / 20.0).collect(), k: 1, delta: 1.0 };
        let d = domain_from_data(&grid, 0.0, 1.0).unwrap();
        assert_eq!((d.lo, d.hi), (0.0, 1.0));

        let flat = QuadVarSeries { values: vec![0.4; 30], k: 1, delta: 1.0 };
        assert!(matches!(domain_from_data(&flat, 0.025, 0.975), Err(Error::DegenerateDomain(_))));
        assert!(domain_from_data(&QuadVarSeries { values: vec![1.0; 5], k: 1, delta: 1.0 }, 0.0, 1.0).is_err());
        assert!(domain_from_data(&grid, 0.5, 0.5).is_err());

        // 1..100 at 2.5% / 97.5%: order-statistic oracle at positions
        // 0.025 * 99 = 2.475 and 0.975 * 99 = 96.525 (0-based).
        let hundred = QuadVarSeries { values: (1..=100).rev().map(f64::from).collect(), k: 1, delta: 1.0 };
        let d = domain_from_data(&hundred, DEFAULT_Q_LO, DEFAULT_Q_HI).unwrap();
        let oracle = |pos: f64| {
            let below = pos.floor();
            (below + 1.0) + (pos - below) * 1.0
        };
        assert!((d.lo - oracle(2.475)).abs() < 1e-12, "{}", d.lo);
        assert!((d.hi - oracle(96.525)).abs() < 1e-12, "{}", d.hi);
        assert!((d.lo - 3.475).abs() < 1e-12 && (d.hi - 97.525).abs() < 1e-12);
    }

    #[test]
    fn domain_round_trip() {
        let d = EstimationDomain::new(0.13, 0.91).unwrap();
        assert_eq!(d.to_unit(d.lo), 0.0);
        assert_eq!(d.to_unit(d.hi), 1.0);
        for v in d.grid(101) {
            assert!((d.from_unit(d.to_unit(v)) - v).abs() < 1e-15);
        }
    }
}
