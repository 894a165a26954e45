//! Exact high-order derivatives of the gating rate functions in `v`.
//!
//! The rate functions are compositions of exponentials, affine maps and the
//! ratio `u / (e^u − 1)`; the latter has a removable singularity at `u = 0`
//! (`α_n` at `v = 10`, `α_m` at `v = 25`). Jets are built from primitives
//! that stay accurate through that point.

pub mod dual;
pub mod jet;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
pub use dual::{MultiDual, Scalar};
pub use jet::{TaylorJet, MAX_ORDER};

/// Half-width of the window around `u = 0` in which [`exprel_inv`] switches
/// to its Bernoulli series.
pub const SERIES_WINDOW: f64 = 1e-3;

// u/(e^u − 1) = Σ B_k u^k / k!, even part beyond k = 1, through degree 12.
const BERNOULLI_SERIES: [f64; 13] = [
    1.0,
    -0.5,
    1.0 / 12.0,
    0.0,
    -1.0 / 720.0,
    0.0,
    1.0 / 30_240.0,
    0.0,
    -1.0 / 1_209_600.0,
    0.0,
    1.0 / 47_900_160.0,
    0.0,
    -691.0 / 1_307_674_368_000.0,
];

/// `u / (e^u − 1)` with its analytic continuation `1` at `u = 0`.
pub fn exprel_inv(u: f64) -> f64 {
    if u.abs() < SERIES_WINDOW {
        BERNOULLI_SERIES.iter().rev().fold(0.0, |acc, c| acc * u + c)
    } else if u > 0.0 {
        let w = (-u).exp();
        u * w / (1.0 - w)
    } else {
        u / u.exp_m1()
    }
}

/// Jet of `g(u) = u / (e^u − 1)` at `u0`.
///
/// Near the origin `g = 1 / h` with the entire function
/// `h(u) = Σ_j u^j / (j+1)!`, whose Taylor coefficients at `u0` are summed
/// directly; away from it the closed form is expanded.
pub fn jet_exprel_inv(u0: f64, order: usize) -> TaylorJet {
    const TERMS: usize = 40;
    if u0.abs() < 1.0 {
        // c_k = Σ_{j≥k} C(j,k) u0^{j−k} / (j+1)!
        let coeffs = (0..=order)
            .map(|k| {
                let mut sum = 0.0;
                let mut binom = 1.0; // C(j, k) starting at j = k
                let mut pow = 1.0;
                let mut fact = jet::factorial(k + 1);
                for j in k..k + TERMS {
                    sum += binom * pow / fact;
                    binom = binom * (j + 1) as f64 / (j + 1 - k) as f64;
                    pow *= u0;
                    fact *= (j + 2) as f64;
                }
                sum
            })
            .collect();
        TaylorJet::from_coeffs(u0, coeffs).recip()
    } else if u0 > 0.0 {
        let u = TaylorJet::variable(u0, order);
        let w = (-&u).exp();
        let denom = (-&w).add_scalar(1.0);
        (&u * &w).div(&denom)
    } else {
        let u = TaylorJet::variable(u0, order);
        let em1 = u.exp().add_scalar(-1.0);
        u.div(&em1)
    }
}

/// The six Hodgkin-Huxley gating rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateId {
    AlphaN,
    BetaN,
    AlphaM,
    BetaM,
    AlphaH,
    BetaH,
}

impl RateId {
    pub const ALL: [RateId; 6] = [
        RateId::AlphaN,
        RateId::BetaN,
        RateId::AlphaM,
        RateId::BetaM,
        RateId::AlphaH,
        RateId::BetaH,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RateId::AlphaN => "alpha_n",
            RateId::BetaN => "beta_n",
            RateId::AlphaM => "alpha_m",
            RateId::BetaM => "beta_m",
            RateId::AlphaH => "alpha_h",
            RateId::BetaH => "beta_h",
        }
    }
}

impl fmt::Display for RateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RateId::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown rate function `{s}`")))
    }
}

/// Jet of `c · exp(a·v)` at `v`.
fn exp_rate_jet(c: f64, a: f64, v: f64, order: usize) -> TaylorJet {
    TaylorJet::variable(a * v, order)
        .exp()
        .compose_affine(a, 0.0)
        .scale(c)
}

/// Exact Taylor coefficients of one rate function at `v`, up to `order`.
pub fn jet_of_rate(rate: RateId, v: f64, order: usize) -> Result<TaylorJet> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("potential must be finite, got {v}")));
    }
    if order > MAX_ORDER {
        return Err(Error::Domain(format!(
            "jet order {order} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    let jet = match rate {
        RateId::AlphaN => jet_exprel_inv(1.0 - 0.1 * v, order)
            .compose_affine(-0.1, 1.0)
            .scale(0.1),
        RateId::BetaN => exp_rate_jet(0.125, -1.0 / 80.0, v, order),
        RateId::AlphaM => jet_exprel_inv(2.5 - 0.1 * v, order).compose_affine(-0.1, 2.5),
        RateId::BetaM => exp_rate_jet(4.0, -1.0 / 18.0, v, order),
        RateId::AlphaH => exp_rate_jet(0.07, -1.0 / 20.0, v, order),
        RateId::BetaH => {
            // 1/(e^u + 1) with u = 3 − 0.1 v, written to avoid overflow.
            let u0 = 3.0 - 0.1 * v;
            let u = TaylorJet::variable(u0, order);
            let logistic = if u0 <= 0.0 {
                u.exp().add_scalar(1.0).recip()
            } else {
                let w = (-&u).exp();
                w.div(&w.add_scalar(1.0))
            };
            logistic.compose_affine(-0.1, 3.0)
        }
    };
    Ok(TaylorJet::from_coeffs(v, jet.coeffs().to_vec()))
}

/// `∂ᵏ_v` of the three gating drifts at fixed `(n, m, h)`.
///
/// Index `k` of each row holds the k-th derivative; index 0 is the drift
/// value itself.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingDerivatives {
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub h: Vec<f64>,
}

impl GatingDerivatives {
    pub fn order(&self) -> usize {
        self.n.len() - 1
    }

    /// Row for gate `i ∈ {0, 1, 2}` (n, m, h).
    pub fn row(&self, gate: usize) -> &[f64] {
        match gate {
            0 => &self.n,
            1 => &self.m,
            2 => &self.h,
            _ => panic!("gate index {gate} out of range"),
        }
    }
}

pub fn gating_drift_derivatives(
    v: f64,
    n: f64,
    m: f64,
    h: f64,
    order: usize,
) -> Result<GatingDerivatives> {
    let row = |alpha: RateId, beta: RateId, x: f64| -> Result<Vec<f64>> {
        let a = jet_of_rate(alpha, v, order)?.derivatives();
        let b = jet_of_rate(beta, v, order)?.derivatives();
        Ok(a.iter().zip(&b).map(|(a, b)| a * (1.0 - x) - b * x).collect())
    };
    Ok(GatingDerivatives {
        n: row(RateId::AlphaN, RateId::BetaN, n)?,
        m: row(RateId::AlphaM, RateId::BetaM, m)?,
        h: row(RateId::AlphaH, RateId::BetaH, h)?,
    })
}
