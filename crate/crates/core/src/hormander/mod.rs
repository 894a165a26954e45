//! The determinant criterion for the weak Hörmander condition, its scan
//! along the equilibrium curve, and the Lie-bracket basis.

mod brackets;

pub use brackets::{
    bracket_basis, hormander_rank_map, lie_bracket, BracketBasis, FieldExpr, RankNode,
    VectorField6, RANK_TOLERANCE,
};

use nalgebra::Matrix3;

use crate::calculus::gating_drift_derivatives;
use crate::error::Result;
use crate::model::gating_equilibrium;

/// Determinant of `(∂ᵏ_v bⁱ)` for gates `i = n, m, h` and orders `k = 2, 3, 4`.
///
/// Depends on `(v, n, m, h)` only: neither time nor the input level enter.
pub fn determinant_d(v: f64, n: f64, m: f64, h: f64) -> Result<f64> {
    let d = gating_drift_derivatives(v, n, m, h, 4)?;
    Ok(derivative_matrix(|gate, k| d.row(gate)[k]).determinant())
}

/// The 3×3 matrix of second to fourth derivatives, from any provider of
/// `∂ᵏ_v b^gate`.
pub fn derivative_matrix(entry: impl Fn(usize, usize) -> f64) -> Matrix3<f64> {
    Matrix3::from_fn(|gate, col| entry(gate, col + 2))
}

/// `D` evaluated on the equilibrium curve `(v, n∞(v), m∞(v), h∞(v))`.
pub fn determinant_on_curve(v: f64) -> Result<f64> {
    let (n, m, h) = gating_equilibrium(v)?;
    determinant_d(v, n, m, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveScan {
    /// `(v, D(v, n∞(v), m∞(v), h∞(v)))` samples.
    pub samples: Vec<(f64, f64)>,
    /// Sign-change roots refined by bisection.
    pub roots: Vec<f64>,
}

/// Bisection tolerance for curve roots.
pub const ROOT_TOLERANCE: f64 = 1e-10;

/// Samples `v ↦ D` on the equilibrium curve over `[v_lo, v_hi]` and refines
/// each sign change by bisection. An empty or inverted range gives an empty
/// scan.
pub fn scan_equilibrium_curve(v_lo: f64, v_hi: f64, step: f64) -> Result<CurveScan> {
    if !(step > 0.0) || !(v_hi > v_lo) {
        return Ok(CurveScan { samples: Vec::new(), roots: Vec::new() });
    }
    let count = ((v_hi - v_lo) / step).floor() as usize;
    let mut samples = Vec::with_capacity(count + 1);
    for i in 0..=count {
        let v = v_lo + i as f64 * step;
        samples.push((v, determinant_on_curve(v)?));
    }
    let mut roots = Vec::new();
    for w in samples.windows(2) {
        let ((a, fa), (b, fb)) = (w[0], w[1]);
        if fa == 0.0 {
            roots.push(a);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            roots.push(bisect(determinant_on_curve, a, b, fa)?);
        }
    }
    if let Some(&(v, f)) = samples.last() {
        if f == 0.0 {
            roots.push(v);
        }
    }
    Ok(CurveScan { samples, roots })
}

fn bisect(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, f_lo: f64) -> Result<f64> {
    let sign_lo = f_lo.signum();
    while hi - lo > ROOT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
