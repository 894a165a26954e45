//! Hodgkin-Huxley coefficients and the drift/diffusion fields of the
//! five-dimensional system driven by Ornstein-Uhlenbeck input.
//!
//! Units follow the classical convention: potentials in mV, time in ms.
//! The state is `(v, n, m, h, ζ)` with the gating fractions in `[0, 1]` and
//! `ζ` the dendritic input level.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::calculus::Scalar;
use crate::error::{Error, Result};

/// Conductances and reversal potentials of the classical model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HhConstants {
    pub g_k: f64,
    pub g_na: f64,
    pub g_l: f64,
    pub e_k: f64,
    pub e_na: f64,
    pub e_l: f64,
}

pub const HH: HhConstants = HhConstants {
    g_k: 36.0,
    g_na: 120.0,
    g_l: 0.3,
    e_k: -12.0,
    e_na: 120.0,
    e_l: 10.6,
};

/// Tolerance for gating values slightly outside `[0, 1]` (rounding).
pub const GATE_CLIP: f64 = 1e-12;

/// One point `(v, n, m, h, ζ)` of the state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State5 {
    pub v: f64,
    pub n: f64,
    pub m: f64,
    pub h: f64,
    pub zeta: f64,
}

impl State5 {
    pub fn new(v: f64, n: f64, m: f64, h: f64, zeta: f64) -> Result<Self> {
        if !v.is_finite() || !zeta.is_finite() {
            return Err(Error::Domain(format!(
                "potential and input level must be finite (v = {v}, zeta = {zeta})"
            )));
        }
        let gate = |name: &str, x: f64| -> Result<f64> {
            if !(-GATE_CLIP..=1.0 + GATE_CLIP).contains(&x) {
                return Err(Error::Domain(format!("gating variable {name} = {x} outside [0, 1]")));
            }
            Ok(x.clamp(0.0, 1.0))
        };
        Ok(Self {
            v,
            n: gate("n", n)?,
            m: gate("m", m)?,
            h: gate("h", h)?,
            zeta,
        })
    }

    pub fn from_array(x: [f64; 5]) -> Result<Self> {
        Self::new(x[0], x[1], x[2], x[3], x[4])
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.v, self.n, self.m, self.h, self.zeta]
    }

    /// Equilibrium point of the deterministic system with constant input
    /// `f_infinity(v)`, extended by the given input level.
    pub fn resting(v: f64, zeta: f64) -> Result<Self> {
        let (n, m, h) = gating_equilibrium(v)?;
        Self::new(v, n, m, h, zeta)
    }
}

/// A `T`-periodic analytic input: a constant plus a finite trigonometric
/// polynomial, together with the Ornstein-Uhlenbeck speed `τ` and spread `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub period: f64,
    pub c0: f64,
    /// Coefficients `(a_j, b_j)` of `cos(2πjt/T)` and `sin(2πjt/T)`, `j = 1, 2, …`.
    #[serde(default)]
    pub harmonics: Vec<(f64, f64)>,
    pub tau: f64,
    pub gamma: f64,
}

impl SignalSpec {
    pub fn constant(c0: f64, period: f64, tau: f64, gamma: f64) -> Self {
        Self { period, c0, harmonics: Vec::new(), tau, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Config(format!("period must be positive, got {}", self.period)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        let finite = self.c0.is_finite()
            && self.harmonics.iter().all(|(a, b)| a.is_finite() && b.is_finite());
        if !finite {
            return Err(Error::Config("signal coefficients must be finite".into()));
        }
        Ok(())
    }

    /// `S(t)`; the argument is reduced modulo the period first.
    pub fn eval(&self, t: f64) -> f64 {
        let phase = TAU * t.rem_euclid(self.period) / self.period;
        self.harmonics
            .iter()
            .enumerate()
            .fold(self.c0, |acc, (j, (a, b))| {
                let (s, c) = ((j + 1) as f64 * phase).sin_cos();
                acc + a * c + b * s
            })
    }

    /// `S(t)` for a generic scalar time argument (no modular reduction).
    pub fn eval_scalar<S: Scalar>(&self, t: S) -> S {
        let omega = TAU / self.period;
        self.harmonics
            .iter()
            .enumerate()
            .fold(S::from_f64(self.c0), |acc, (j, (a, b))| {
                let arg = t.scale((j + 1) as f64 * omega);
                acc + arg.cos().scale(*a) + arg.sin().scale(*b)
            })
    }

    /// Noise amplitude `γ√τ` shared by the `v` and `ζ` equations.
    pub fn noise_amplitude(&self) -> f64 {
        self.gamma * self.tau.sqrt()
    }

    pub fn is_constant(&self) -> bool {
        self.harmonics.iter().all(|&(a, b)| a == 0.0 && b == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatingRates {
    pub alpha_n: f64,
    pub beta_n: f64,
    pub alpha_m: f64,
    pub beta_m: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
}

/// The six rates at a (possibly infinitesimally perturbed) potential, in the
/// order `α_n, β_n, α_m, β_m, α_h, β_h`.
pub fn rates_scalar<S: Scalar>(v: S) -> [S; 6] {
    let one = S::from_f64(1.0);
    let alpha_n = (one - v.scale(0.1)).exprel_inv().scale(0.1);
    let beta_n = v.scale(-1.0 / 80.0).exp().scale(0.125);
    let alpha_m = (S::from_f64(2.5) - v.scale(0.1)).exprel_inv();
    let beta_m = v.scale(-1.0 / 18.0).exp().scale(4.0);
    let alpha_h = v.scale(-1.0 / 20.0).exp().scale(0.07);
    let beta_h = one / ((S::from_f64(3.0) - v.scale(0.1)).exp() + one);
    [alpha_n, beta_n, alpha_m, beta_m, alpha_h, beta_h]
}

pub fn rates(v: f64) -> Result<GatingRates> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("potential must be finite, got {v}")));
    }
    let [alpha_n, beta_n, alpha_m, beta_m, alpha_h, beta_h] = rates_scalar(v);
    Ok(GatingRates { alpha_n, beta_n, alpha_m, beta_m, alpha_h, beta_h })
}

/// `(n∞, m∞, h∞)` at potential `v`.
pub fn gating_equilibrium(v: f64) -> Result<(f64, f64, f64)> {
    let r = rates(v)?;
    Ok((
        r.alpha_n / (r.alpha_n + r.beta_n),
        r.alpha_m / (r.alpha_m + r.beta_m),
        r.alpha_h / (r.alpha_h + r.beta_h),
    ))
}

pub fn ionic_current_scalar<S: Scalar>(v: S, n: S, m: S, h: S) -> S {
    let n2 = n * n;
    let m3 = m * m * m;
    (n2 * n2).scale(HH.g_k) * (v - S::from_f64(HH.e_k))
        + (m3 * h).scale(HH.g_na) * (v - S::from_f64(HH.e_na))
        + (v - S::from_f64(HH.e_l)).scale(HH.g_l)
}

/// Ionic current `F(v, n, m, h)`.
pub fn ionic_current(v: f64, n: f64, m: f64, h: f64) -> f64 {
    ionic_current_scalar(v, n, m, h)
}

/// `∂_v F`, which is independent of `v`.
pub fn ionic_current_slope(n: f64, m: f64, h: f64) -> f64 {
    HH.g_k * n.powi(4) + HH.g_na * m.powi(3) * h + HH.g_l
}

/// Ionic current along the gating equilibrium curve.
pub fn f_infinity(v: f64) -> Result<f64> {
    let (n, m, h) = gating_equilibrium(v)?;
    Ok(ionic_current(v, n, m, h))
}

/// Search interval for [`equilibrium_for_input`].
pub const EQUILIBRIUM_BRACKET: (f64, f64) = (-100.0, 200.0);

/// Potential `v` with `f_infinity(v) = c`, by bisection.
pub fn equilibrium_for_input(c: f64) -> Result<f64> {
    let (mut lo, mut hi) = EQUILIBRIUM_BRACKET;
    let f_lo = f_infinity(lo)? - c;
    let f_hi = f_infinity(hi)? - c;
    if !c.is_finite() || f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::Range(format!(
            "input level {c} outside [{}, {}]",
            f_lo + c,
            f_hi + c
        )));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f_infinity(mid)? < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Drift `(b¹, …, b⁵)` for generic scalars; `x = (v, n, m, h, ζ)`.
pub fn drift_scalar<S: Scalar>(t: S, x: &[S; 5], spec: &SignalSpec) -> [S; 5] {
    let [v, n, m, h, zeta] = *x;
    let [an, bn, am, bm, ah, bh] = rates_scalar(v);
    let one = S::from_f64(1.0);
    let input = (spec.eval_scalar(t) - zeta).scale(spec.tau);
    [
        input - ionic_current_scalar(v, n, m, h),
        an * (one - n) - bn * n,
        am * (one - m) - bm * m,
        ah * (one - h) - bh * h,
        input,
    ]
}

/// Drift of the five-dimensional system at time `t`.
pub fn drift(t: f64, x: &State5, spec: &SignalSpec) -> [f64; 5] {
    drift_raw(t, &x.to_array(), spec)
}

/// Same as [`drift`] on an unchecked coordinate array.
pub fn drift_raw(t: f64, x: &[f64; 5], spec: &SignalSpec) -> [f64; 5] {
    let [v, n, m, h, zeta] = *x;
    let r = rates_scalar(v);
    let input = (spec.eval(t) - zeta) * spec.tau;
    [
        input - ionic_current(v, n, m, h),
        r[0] * (1.0 - n) - r[1] * n,
        r[2] * (1.0 - m) - r[3] * m,
        r[4] * (1.0 - h) - r[5] * h,
        input,
    ]
}

/// Constant diffusion column `γ√τ (1, 0, 0, 0, 1)`.
pub fn diffusion(spec: &SignalSpec) -> [f64; 5] {
    let s = spec.noise_amplitude();
    [s, 0.0, 0.0, 0.0, s]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec() -> SignalSpec {
        SignalSpec {
            period: 20.0,
            c0: 3.0,
            harmonics: vec![(1.5, -0.5), (0.0, 0.25)],
            tau: 0.8,
            gamma: 1.3,
        }
    }

    #[test]
    fn rates_at_simple_points() {
        let r0 = rates(0.0).unwrap();
        assert_eq!(r0.beta_n, 0.125);
        assert_relative_eq!(r0.alpha_h, 0.07);
        assert_relative_eq!(r0.alpha_n, 0.1 / (1f64.exp() - 1.0), max_relative = 1e-14);
        assert_relative_eq!(rates(10.0).unwrap().alpha_n, 0.1, max_relative = 1e-15);
        assert_relative_eq!(rates(25.0).unwrap().alpha_m, 1.0, max_relative = 1e-15);
        assert!(matches!(rates(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn gating_equilibrium_regression_values() {
        let (n0, _, _) = gating_equilibrium(0.0).unwrap();
        let an0 = 0.1 / (1f64.exp() - 1.0);
        assert_relative_eq!(n0, an0 / (an0 + 0.125), max_relative = 1e-14);
        let (n10, _, _) = gating_equilibrium(10.0).unwrap();
        assert_relative_eq!(n10, 0.1 / (0.1 + 0.125 * (-0.125f64).exp()), max_relative = 1e-14);
    }

    #[test]
    fn ionic_current_reference_points() {
        assert_eq!(ionic_current(10.6, 0.0, 0.0, 0.5), 0.0);
        assert_relative_eq!(ionic_current(-12.0, 0.7, 0.0, 0.0), -6.78, max_relative = 1e-14);
    }

    #[test]
    fn f_infinity_reference_values() {
        assert!((f_infinity(0.0).unwrap() + 0.0534).abs() < 1e-3);
        assert!((f_infinity(-10.0).unwrap() + 6.15).abs() < 1e-2);
        assert!((f_infinity(10.0).unwrap() - 26.61).abs() < 1e-2);
    }

    #[test]
    fn f_infinity_increasing_on_grid() {
        let mut prev = f_infinity(-15.0).unwrap();
        let mut v = -15.0;
        while v < 30.0 {
            v += 0.01;
            let cur = f_infinity(v).unwrap();
            assert!(cur > prev, "not increasing at {v}");
            prev = cur;
        }
    }

    #[test]
    fn equilibrium_inverse() {
        assert!(equilibrium_for_input(-0.05).unwrap().abs() < 0.05);
        assert!((equilibrium_for_input(-6.15).unwrap() + 10.0).abs() < 0.05);
        let c = f_infinity(3.7).unwrap();
        let v = equilibrium_for_input(c).unwrap();
        assert!((v - 3.7).abs() < 1e-9);
        assert!((f_infinity(v).unwrap() - c).abs() < 1e-8);
        assert!(matches!(equilibrium_for_input(1e9), Err(Error::Range(_))));
        assert!(matches!(equilibrium_for_input(-1e9), Err(Error::Range(_))));
    }

    #[test]
    fn state_constructor_clips_rounding_and_rejects_bad_gates() {
        let s = State5::new(0.0, 1.0 + 5e-13, -5e-13, 0.5, 0.0).unwrap();
        assert_eq!((s.n, s.m), (1.0, 0.0));
        assert!(State5::new(0.0, 1.01, 0.5, 0.5, 0.0).is_err());
        assert!(State5::new(f64::NAN, 0.5, 0.5, 0.5, 0.0).is_err());
        assert!(State5::new(0.0, 0.5, 0.5, 0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn signal_evaluation() {
        let constant = SignalSpec::constant(5.0, 10.0, 1.0, 1.0);
        assert_eq!(constant.eval(123.4), 5.0);
        let one_cos = SignalSpec { harmonics: vec![(1.0, 0.0)], ..constant };
        assert_relative_eq!(one_cos.eval(0.0), 6.0);
        assert_relative_eq!(one_cos.eval(10.0), 6.0);
    }

    #[test]
    fn signal_scalar_and_plain_agree() {
        let s = spec();
        for &t in &[0.0, 1.3, 7.77, 19.99] {
            assert_relative_eq!(s.eval(t), s.eval_scalar(t), max_relative = 1e-12);
        }
    }

    #[test]
    fn drift_structure() {
        let s = spec();
        let x = State5::new(-3.0, 0.3, 0.2, 0.6, 1.1).unwrap();
        let t = 4.2;
        let b = drift(t, &x, &s);
        assert_relative_eq!(b[0] - b[4], -ionic_current(x.v, x.n, x.m, x.h), max_relative = 1e-13);

        let at_rest = State5::resting(x.v, s.eval(t)).unwrap();
        let b = drift(t, &at_rest, &s);
        assert!(b[1].abs() < 1e-15 && b[2].abs() < 1e-15 && b[3].abs() < 1e-15);
        assert_eq!(b[4], 0.0);
    }

    #[test]
    fn diffusion_column() {
        let s = spec();
        let d = diffusion(&s);
        assert_eq!(d[1..4], [0.0; 3]);
        assert_eq!(d[0], d[4]);
        assert_relative_eq!(d[0], 1.3 * 0.8f64.sqrt());
        let quiet = SignalSpec { gamma: 0.0, ..s };
        assert_eq!(diffusion(&quiet), [0.0; 5]);
    }

    #[test]
    fn drift_matches_hand_coded_formulas() {
        use rand::{Rng, SeedableRng};
        let s = spec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let t = rng.random_range(0.0..40.0);
            let v = rng.random_range(-80.0..120.0);
            let (n, m, h) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let z = rng.random_range(-30.0..30.0);
            let b = drift(t, &State5::new(v, n, m, h, z).unwrap(), &s);
            let sig = 3.0 + 1.5 * (TAU * t / 20.0).cos() - 0.5 * (TAU * t / 20.0).sin()
                + 0.25 * (2.0 * TAU * t / 20.0).sin();
            let an = (0.1 - 0.01 * v) / ((1.0 - 0.1 * v).exp() - 1.0);
            let bn = 0.125 * (-v / 80.0).exp();
            let am = (2.5 - 0.1 * v) / ((2.5 - 0.1 * v).exp() - 1.0);
            let bm = 4.0 * (-v / 18.0).exp();
            let ah = 0.07 * (-v / 20.0).exp();
            let bh = 1.0 / ((3.0 - 0.1 * v).exp() + 1.0);
            let f = 36.0 * n.powi(4) * (v + 12.0) + 120.0 * m.powi(3) * h * (v - 120.0)
                + 0.3 * (v - 10.6);
            let expected = [
                (sig - z) * 0.8 - f,
                an * (1.0 - n) - bn * n,
                am * (1.0 - m) - bm * m,
                ah * (1.0 - h) - bh * h,
                (sig - z) * 0.8,
            ];
            for i in 0..5 {
                assert!(
                    (b[i] - expected[i]).abs() <= 1e-9 * (1.0 + expected[i].abs()),
                    "component {i}: {} vs {}",
                    b[i],
                    expected[i]
                );
            }
        }
    }

    proptest! {
        #[test]
        fn rates_positive_and_equilibria_inside(v in -200.0f64..300.0) {
            let r = rates(v).unwrap();
            for x in [r.alpha_n, r.beta_n, r.alpha_m, r.beta_m, r.alpha_h, r.beta_h] {
                prop_assert!(x > 0.0);
            }
            let (n, m, h) = gating_equilibrium(v).unwrap();
            for x in [n, m, h] {
                prop_assert!(x > 0.0 && x < 1.0);
            }
        }

        #[test]
        fn ionic_current_affine_in_v(
            v1 in -100.0f64..150.0, v2 in -100.0f64..150.0,
            n in 0.0f64..=1.0, m in 0.0f64..=1.0, h in 0.0f64..=1.0,
        ) {
            prop_assume!((v1 - v2).abs() > 1e-3);
            let slope = (ionic_current(v1, n, m, h) - ionic_current(v2, n, m, h)) / (v1 - v2);
            let expected = ionic_current_slope(n, m, h);
            prop_assert!((slope - expected).abs() < 1e-8 * expected.max(1.0));
            prop_assert!(expected > 0.0);
        }

        #[test]
        fn signal_periodic(t in 0.0f64..1000.0) {
            let s = spec();
            prop_assert!((s.eval(t + s.period) - s.eval(t)).abs() < 1e-12);
        }
    }
}
