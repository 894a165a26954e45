//! Truncated Taylor series of a scalar function of one variable.
//!
//! A [`TaylorJet`] of order `K` at center `v0` stores the normalized
//! coefficients `f^(k)(v0) / k!` for `k = 0..=K`. All arithmetic is closed
//! at the order of the operands, so derivatives of compositions of the
//! model's closed forms come out exact up to rounding.

use std::ops::{Add, Mul, Neg, Sub};

/// Largest supported order.
pub const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorJet {
    center: f64,
    coeffs: Vec<f64>,
}

impl TaylorJet {
    /// Builds a jet from normalized coefficients (`c_k = f^(k)(v0) / k!`).
    pub fn from_coeffs(center: f64, coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet has at least a value coefficient");
        Self { center, coeffs }
    }

    pub fn constant(center: f64, value: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = value;
        Self { center, coeffs }
    }

    /// The identity function `v ↦ v` expanded at `center`.
    pub fn variable(center: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = center;
        if order >= 1 {
            coeffs[1] = 1.0;
        }
        Self { center, coeffs }
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `k`-th derivative at the center, `k! · c_k`.
    pub fn derivative(&self, k: usize) -> f64 {
        self.coeffs.get(k).map_or(0.0, |c| c * factorial(k))
    }

    /// All derivatives `f^(k)(v0)` for `k = 0..=K`.
    pub fn derivatives(&self) -> Vec<f64> {
        (0..=self.order()).map(|k| self.derivative(k)).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            center: self.center,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// Multiplicative inverse; the value coefficient must be nonzero.
    pub fn recip(&self) -> Self {
        let b0 = self.coeffs[0];
        assert!(b0 != 0.0, "jet reciprocal of a function vanishing at the center");
        let k_max = self.order();
        let mut q = vec![0.0; k_max + 1];
        q[0] = 1.0 / b0;
        for k in 1..=k_max {
            let s: f64 = (1..=k).map(|j| self.coeffs[j] * q[k - j]).sum();
            q[k] = -s / b0;
        }
        Self { center: self.center, coeffs: q }
    }

    pub fn div(&self, rhs: &Self) -> Self {
        self * &rhs.recip()
    }

    pub fn exp(&self) -> Self {
        // (e^f)' = f' e^f  gives  k e_k = Σ_{j=1..k} j f_j e_{k-j}.
        let k_max = self.order();
        let mut e = vec![0.0; k_max + 1];
        e[0] = self.coeffs[0].exp();
        for k in 1..=k_max {
            let s: f64 = (1..=k)
                .map(|j| j as f64 * self.coeffs[j] * e[k - j])
                .sum();
            e[k] = s / k as f64;
        }
        Self { center: self.center, coeffs: e }
    }

    /// Re-expresses a jet of `g` at `u0 = a·v0 + b` as a jet of
    /// `v ↦ g(a·v + b)` at `v0`.
    pub fn compose_affine(&self, a: f64, b: f64) -> Self {
        let center = (self.center - b) / a;
        let mut scale = 1.0;
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| {
                let out = c * scale;
                scale *= a;
                out
            })
            .collect();
        Self { center, coeffs }
    }

    /// Evaluates the truncated polynomial at `center + dv`.
    pub fn eval_offset(&self, dv: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * dv + c)
    }

    fn check_compatible(&self, rhs: &Self) {
        assert_eq!(self.order(), rhs.order(), "jet orders differ");
        assert!(
            self.center == rhs.center || self.center.is_nan() && rhs.center.is_nan(),
            "jet centers differ"
        );
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * j as f64)
}

impl Add for &TaylorJet {
    type Output = TaylorJet;
    fn add(self, rhs: &TaylorJet) -> TaylorJet {
        self.check_compatible(rhs);
        TaylorJet {
            center: self.center,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &TaylorJet {
    type Output = TaylorJet;
    fn sub(self, rhs: &TaylorJet) -> TaylorJet {
        self.check_compatible(rhs);
        TaylorJet {
            center: self.center,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &TaylorJet {
    type Output = TaylorJet;
    fn mul(self, rhs: &TaylorJet) -> TaylorJet {
        self.check_compatible(rhs);
        let k_max = self.order();
        let coeffs = (0..=k_max)
            .map(|k| (0..=k).map(|j| self.coeffs[j] * rhs.coeffs[k - j]).sum())
            .collect();
        TaylorJet { center: self.center, coeffs }
    }
}

impl Neg for &TaylorJet {
    type Output = TaylorJet;
    fn neg(self) -> TaylorJet {
        self.scale(-1.0)
    }
}
