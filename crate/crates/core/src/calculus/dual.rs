//! Numbers carrying several independent first-order infinitesimals.
//!
//! A [`MultiDual`] is a polynomial in nilpotent symbols `ε_0 … ε_{D-1}` with
//! `ε_i² = 0`; one coefficient per subset of symbols. Seeding a fresh symbol
//! per nesting level turns the evaluation of a vector field into an exact
//! directional derivative, and nesting levels compose into exact iterated
//! Lie brackets. Non-polynomial functions are applied through their Taylor
//! jets at the real part, which is exact because the infinitesimal part is
//! nilpotent.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::exprel_inv;
use super::jet::TaylorJet;

/// Number of independent infinitesimals a [`MultiDual`] can carry.
pub const MAX_INFINITESIMALS: usize = 5;
const SLOTS: usize = 1 << MAX_INFINITESIMALS;

/// Scalar arithmetic shared by `f64` and [`MultiDual`], enough to write the
/// model's vector fields once.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    /// Real part.
    fn re(&self) -> f64;
    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// `u / (e^u − 1)`, continued analytically by 1 at `u = 0`.
    fn exprel_inv(self) -> Self;

    fn scale(self, s: f64) -> Self {
        self * Self::from_f64(s)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn re(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exprel_inv(self) -> Self {
        exprel_inv(self)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiDual {
    c: [f64; SLOTS],
    /// Union of the symbols that may carry nonzero coefficients.
    mask: u8,
}

impl MultiDual {
    pub fn constant(x: f64) -> Self {
        let mut c = [0.0; SLOTS];
        c[0] = x;
        Self { c, mask: 0 }
    }

    /// `re + slope · ε_index`.
    pub fn seeded(re: f64, slope: f64, index: usize) -> Self {
        assert!(index < MAX_INFINITESIMALS);
        let mut out = Self::constant(re);
        out.c[1 << index] = slope;
        out.mask = 1 << index;
        out
    }

    /// Coefficient of the monomial `Π_{i ∈ subset} ε_i`.
    pub fn coeff(&self, subset: u8) -> f64 {
        self.c[subset as usize]
    }

    /// `self + other · ε_index`, where `other` must not involve `ε_index`.
    pub fn plus_eps_times(&self, other: &Self, index: usize) -> Self {
        let bit = 1u8 << index;
        debug_assert!(self.mask & bit == 0 && other.mask & bit == 0);
        let mut out = *self;
        for s in submasks(other.mask) {
            out.c[(s | bit) as usize] += other.c[s as usize];
        }
        out.mask |= other.mask | bit;
        out
    }

    /// The coefficient of `ε_index`, i.e. the directional derivative seeded
    /// in that symbol, as a number in the remaining symbols.
    pub fn eps_part(&self, index: usize) -> Self {
        let bit = 1u8 << index;
        let mut out = Self::constant(0.0);
        if self.mask & bit == 0 {
            return out;
        }
        let rest = self.mask & !bit;
        for s in submasks(rest) {
            out.c[s as usize] = self.c[(s | bit) as usize];
        }
        out.mask = rest;
        out
    }

    /// Applies the function whose normalized Taylor coefficients at the real
    /// part are `coeffs`. Needs at least `popcount(mask)` + 1 coefficients.
    fn compose(&self, coeffs: &[f64]) -> Self {
        let mut delta = *self;
        delta.c[0] = 0.0;
        let order = self.mask.count_ones() as usize;
        debug_assert!(coeffs.len() > order);
        let mut out = Self::constant(coeffs[0]);
        out.mask = self.mask;
        let mut power = Self::constant(1.0);
        for ck in coeffs.iter().take(order + 1).skip(1) {
            power = power * delta;
            for s in submasks(self.mask) {
                out.c[s as usize] += ck * power.c[s as usize];
            }
        }
        out
    }

    fn order(&self) -> usize {
        self.mask.count_ones() as usize
    }
}

fn submasks(mask: u8) -> impl Iterator<Item = u8> {
    // Enumerates every subset of `mask`, including 0 and `mask` itself.
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let s = next?;
        next = if s == 0 { None } else { Some((s - 1) & mask) };
        Some(s)
    })
}

impl Add for MultiDual {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        out.mask |= rhs.mask;
        for s in submasks(rhs.mask) {
            out.c[s as usize] += rhs.c[s as usize];
        }
        out
    }
}

impl Sub for MultiDual {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for MultiDual {
    type Output = Self;
    fn neg(self) -> Self {
        let mut out = self;
        for s in submasks(self.mask) {
            out.c[s as usize] = -out.c[s as usize];
        }
        out
    }
}

impl Mul for MultiDual {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mask = self.mask | rhs.mask;
        let mut out = Self::constant(0.0);
        out.mask = mask;
        for s in submasks(mask) {
            let mut acc = 0.0;
            for a in submasks(s) {
                acc += self.c[a as usize] * rhs.c[(s ^ a) as usize];
            }
            out.c[s as usize] = acc;
        }
        out
    }
}

impl Div for MultiDual {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let b0 = rhs.c[0];
        let order = rhs.order();
        // 1/(b0 + δ) = Σ (−1)^k δ^k / b0^{k+1}
        let mut coeffs = Vec::with_capacity(order + 1);
        let mut term = 1.0 / b0;
        for _ in 0..=order {
            coeffs.push(term);
            term *= -1.0 / b0;
        }
        self * rhs.compose(&coeffs)
    }
}

impl Scalar for MultiDual {
    fn from_f64(x: f64) -> Self {
        Self::constant(x)
    }
    fn re(&self) -> f64 {
        self.c[0]
    }
    fn exp(self) -> Self {
        let order = self.order();
        let jet = TaylorJet::variable(self.c[0], order).exp();
        self.compose(jet.coeffs())
    }
    fn sin(self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        let cycle = [s, c, -s, -c];
        let coeffs: Vec<f64> = (0..=self.order())
            .map(|k| cycle[k % 4] / super::jet::factorial(k))
            .collect();
        self.compose(&coeffs)
    }
    fn cos(self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        let cycle = [c, -s, -c, s];
        let coeffs: Vec<f64> = (0..=self.order())
            .map(|k| cycle[k % 4] / super::jet::factorial(k))
            .collect();
        self.compose(&coeffs)
    }
    fn exprel_inv(self) -> Self {
        let jet = super::jet_exprel_inv(self.c[0], self.order());
        self.compose(jet.coeffs())
    }
    fn scale(self, s: f64) -> Self {
        let mut out = self;
        for k in submasks(self.mask) {
            out.c[k as usize] *= s;
        }
        out
    }
}
