//! Euler-Maruyama simulation of the five-dimensional system, `T`-skeleton
//! sampling, and the exact Ornstein-Uhlenbeck transition used to validate it.
//!
//! One scalar Brownian increment per step drives both `v` and `ζ`. Gating
//! variables are clamped to `[0, 1]` after every step. Randomness comes from
//! counter-based ChaCha streams addressed by `(seed, stream id)`, so a batch
//! of trajectories can be generated in any order and still be reproduced bit
//! for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drift_raw, ionic_current, rates_scalar, SignalSpec, State5, HH};
use crate::quad;

/// Seeded source of standard Gaussian and uniform variates.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Integration scheme. Only Euler-Maruyama is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Euler,
}

/// What to do with gating values that leave `[0, 1]` after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatingPolicy {
    #[default]
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub gating_policy: GatingPolicy,
}

pub const DEFAULT_DT: f64 = 0.005;

impl SimConfig {
    pub fn new(dt: f64, t_end: f64, seed: u64) -> Self {
        Self { dt, t_end, seed, scheme: Scheme::Euler, gating_policy: GatingPolicy::Clamp }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        Ok(())
    }

    /// Number of Euler steps covering one period; errors unless `T/dt` is an
    /// integer up to rounding.
    pub fn steps_per_period(&self, spec: &SignalSpec) -> Result<usize> {
        self.validate()?;
        let ratio = spec.period / self.dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "period {} is not an integer multiple of dt {}",
                spec.period, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State5>,
    pub seed: u64,
    pub stream: u64,
    pub config: SimConfig,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `(min, max)` of each gating variable over the path.
    pub fn gating_range(&self) -> [(f64, f64); 3] {
        let mut out = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        for s in &self.states {
            for (r, x) in out.iter_mut().zip([s.n, s.m, s.h]) {
                r.0 = r.0.min(x);
                r.1 = r.1.max(x);
            }
        }
        out
    }

    /// CSV with columns `t,v,n,m,h,zeta`.
    pub fn to_csv(&self) -> String {
        let rows = self.times.iter().zip(&self.states).map(|(t, s)| {
            let mut row = vec![*t];
            row.extend(s.to_array());
            row
        });
        crate::export::csv_table(&["t", "v", "n", "m", "h", "zeta"], rows)
    }
}

/// One Euler-Maruyama step. `dw` is the Brownian increment over `dt`
/// (variance `dt`).
pub fn step_euler(t: f64, x: &State5, dt: f64, dw: f64, spec: &SignalSpec) -> Result<State5> {
    let next = step_raw(t, &x.to_array(), dt, dw, spec);
    if next.iter().any(|c| !c.is_finite()) {
        return Err(Error::Simulation { t, state: x.to_array() });
    }
    Ok(State5 {
        v: next[0],
        n: next[1].clamp(0.0, 1.0),
        m: next[2].clamp(0.0, 1.0),
        h: next[3].clamp(0.0, 1.0),
        zeta: next[4],
    })
}

#[inline]
fn step_raw(t: f64, x: &[f64; 5], dt: f64, dw: f64, spec: &SignalSpec) -> [f64; 5] {
    let b = drift_raw(t, x, spec);
    let noise = spec.noise_amplitude() * dw;
    [
        x[0] + b[0] * dt + noise,
        x[1] + b[1] * dt,
        x[2] + b[2] * dt,
        x[3] + b[3] * dt,
        x[4] + b[4] * dt + noise,
    ]
}

/// Advances `x` from time `start_step·dt` by `steps` Euler steps, drawing
/// increments from `noise`; `observe(k, t, state)` is called after step `k`
/// (1-based). Times are always `index·dt`, so paths split at any step agree
/// bit for bit with unsplit ones.
pub fn integrate(
    x0: &State5,
    start_step: usize,
    steps: usize,
    dt: f64,
    spec: &SignalSpec,
    noise: &mut NoiseStream,
    mut observe: impl FnMut(usize, f64, &State5),
) -> Result<State5> {
    let sqrt_dt = dt.sqrt();
    let mut x = *x0;
    for k in 0..steps {
        let t = (start_step + k) as f64 * dt;
        let dw = sqrt_dt * noise.gaussian();
        x = step_euler(t, &x, dt, dw, spec)?;
        observe(k + 1, (start_step + k + 1) as f64 * dt, &x);
    }
    Ok(x)
}

/// Full path on `[0, t_end]` on stream 0 of `cfg.seed`.
pub fn simulate(x0: &State5, cfg: &SimConfig, spec: &SignalSpec) -> Result<Trajectory> {
    simulate_stream(x0, cfg, spec, 0)
}

pub fn simulate_stream(
    x0: &State5,
    cfg: &SimConfig,
    spec: &SignalSpec,
    stream: u64,
) -> Result<Trajectory> {
    cfg.validate()?;
    spec.validate()?;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let mut noise = NoiseStream::new(cfg.seed, stream);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(*x0);
    integrate(x0, 0, steps, cfg.dt, spec, &mut noise, |_, t, x| {
        times.push(t);
        states.push(*x);
    })?;
    Ok(Trajectory { times, states, seed: cfg.seed, stream, config: cfg.clone() })
}

fn classical_rhs(t: f64, y: &[f64; 4], spec: &SignalSpec) -> [f64; 4] {
    let [v, n, m, h] = *y;
    let r = rates_scalar(v);
    [
        spec.eval(t) - ionic_current(v, n, m, h),
        r[0] * (1.0 - n) - r[1] * n,
        r[2] * (1.0 - m) - r[3] * m,
        r[4] * (1.0 - h) - r[5] * h,
    ]
}

/// The classical four-dimensional system driven directly by the input
/// current, `dv = S(t) dt − F dt`, integrated by classical Runge-Kutta with
/// step `cfg.dt`. The `zeta` column of the result carries `S(t)`; noise
/// parameters of `spec` are ignored.
pub fn simulate_classical(x0: &State5, cfg: &SimConfig, spec: &SignalSpec) -> Result<Trajectory> {
    cfg.validate()?;
    spec.validate()?;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let dt = cfg.dt;
    let mut y = [x0.v, x0.n, x0.m, x0.h];
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(State5::new(y[0], y[1], y[2], y[3], spec.eval(0.0))?);
    let add = |a: &[f64; 4], b: &[f64; 4], f: f64| std::array::from_fn::<f64, 4, _>(|i| a[i] + f * b[i]);
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = classical_rhs(t, &y, spec);
        let k2 = classical_rhs(t + 0.5 * dt, &add(&y, &k1, 0.5 * dt), spec);
        let k3 = classical_rhs(t + 0.5 * dt, &add(&y, &k2, 0.5 * dt), spec);
        let k4 = classical_rhs(t + dt, &add(&y, &k3, dt), spec);
        let next: [f64; 4] =
            std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        if next.iter().any(|c| !c.is_finite()) {
            return Err(Error::Simulation { t, state: states.last().expect("nonempty").to_array() });
        }
        y = [next[0], next[1].clamp(0.0, 1.0), next[2].clamp(0.0, 1.0), next[3].clamp(0.0, 1.0)];
        let t1 = (k + 1) as f64 * dt;
        times.push(t1);
        states.push(State5::new(y[0], y[1], y[2], y[3], spec.eval(t1))?);
    }
    Ok(Trajectory { times, states, seed: cfg.seed, stream: 0, config: cfg.clone() })
}

/// States at periods `k0, k0 + 1, …, k0 + k_max`, continuing the given noise.
pub fn skeleton_from(
    x0: &State5,
    k0: usize,
    k_max: usize,
    cfg: &SimConfig,
    spec: &SignalSpec,
    noise: &mut NoiseStream,
) -> Result<Vec<State5>> {
    let per = cfg.steps_per_period(spec)?;
    spec.validate()?;
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(*x0);
    let mut x = *x0;
    for k in 0..k_max {
        x = integrate(&x, (k0 + k) * per, per, cfg.dt, spec, noise, |_, _, _| {})?;
        out.push(x);
    }
    Ok(out)
}

/// The `T`-skeleton `X_0, X_T, …, X_{k_max T}` on stream 0 of `cfg.seed`;
/// identical to subsampling [`simulate`] at multiples of `T`.
pub fn skeleton(
    x0: &State5,
    k_max: usize,
    cfg: &SimConfig,
    spec: &SignalSpec,
) -> Result<Vec<State5>> {
    skeleton_stream(x0, k_max, cfg, spec, 0)
}

pub fn skeleton_stream(
    x0: &State5,
    k_max: usize,
    cfg: &SimConfig,
    spec: &SignalSpec,
    stream: u64,
) -> Result<Vec<State5>> {
    let mut noise = NoiseStream::new(cfg.seed, stream);
    skeleton_from(x0, 0, k_max, cfg, spec, &mut noise)
}

/// Skeletons from several starts in parallel; start `i` uses stream
/// `first_stream + i`.
pub fn skeleton_batch(
    starts: &[State5],
    k_max: usize,
    cfg: &SimConfig,
    spec: &SignalSpec,
    first_stream: u64,
) -> Result<Vec<Vec<State5>>> {
    starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| skeleton_stream(x0, k_max, cfg, spec, first_stream + i as u64))
        .collect()
}

/// CSV with columns `k,v,n,m,h,zeta`.
pub fn skeleton_csv(states: &[State5]) -> String {
    let rows = states.iter().enumerate().map(|(k, s)| {
        let mut row = vec![k as f64];
        row.extend(s.to_array());
        row
    });
    crate::export::csv_table(&["k", "v", "n", "m", "h", "zeta"], rows)
}

/// Bound constants for `|V_t| ≤ |ξ_t| + C₁∫|V_s|ds + C₂t`, from bounding every
/// gating factor in `F` by one.
pub const ENVELOPE_C1: f64 = HH.g_k + HH.g_na + HH.g_l;
pub const ENVELOPE_C2: f64 = HH.g_k * 12.0 + HH.g_na * 120.0 + HH.g_l * 10.6;

/// Largest value of `|v_k| − envelope_k` along a path, where the envelope is
/// `|v_0| + |ζ_0| + |ζ_k| + C₁ Σ_{j<k} |v_j| dt + C₂ t_k`; non-positive when
/// the a-priori bound holds. The initial terms account for a start off the
/// line `v = ζ`.
pub fn envelope_excess(traj: &Trajectory) -> f64 {
    let Some(first) = traj.states.first() else {
        return f64::NEG_INFINITY;
    };
    let dt = traj.config.dt;
    let offset = first.v.abs() + first.zeta.abs();
    let mut integral = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let envelope = offset + s.zeta.abs() + ENVELOPE_C1 * integral + ENVELOPE_C2 * t;
        worst = worst.max(s.v.abs() - envelope);
        integral += s.v.abs() * dt;
    }
    worst
}

/// Check that `v` and `ζ` increments differ by exactly `−F dt` for one step.
pub fn potential_input_gap(x: &State5, dt: f64) -> f64 {
    -ionic_current(x.v, x.n, x.m, x.h) * dt
}

/// Mean of `ξ_t` given `ξ_s = xi`: `xi e^{−τΔ} + τ∫_s^t e^{−τ(t−u)} S(u) du`.
pub fn ou_conditional_mean(xi: f64, s: f64, t: f64, spec: &SignalSpec) -> f64 {
    let tau = spec.tau;
    let decay = (-tau * (t - s)).exp();
    let omega = std::f64::consts::TAU / spec.period;
    let forced = spec.harmonics.iter().enumerate().fold(
        spec.c0 * (1.0 - decay),
        |acc, (j, &(a, b))| {
            let w = (j + 1) as f64 * omega;
            let k = tau / (tau * tau + w * w);
            let (st, ct) = (w * t).sin_cos();
            let (ss, cs) = (w * s).sin_cos();
            let cos_part = (tau * ct + w * st) - decay * (tau * cs + w * ss);
            let sin_part = (tau * st - w * ct) - decay * (tau * ss - w * cs);
            acc + k * (a * cos_part + b * sin_part)
        },
    );
    xi * decay + forced
}

/// Standard deviation of `ξ_t` given `ξ_s`.
pub fn ou_conditional_sd(s: f64, t: f64, spec: &SignalSpec) -> f64 {
    spec.gamma * (-(-2.0 * spec.tau * (t - s)).exp_m1() / 2.0).sqrt()
}

/// Exact draw of `ξ_t` given `ξ_s = xi`, from a standard normal `z`.
pub fn ou_exact_step(xi: f64, s: f64, t: f64, spec: &SignalSpec, z: f64) -> f64 {
    ou_conditional_mean(xi, s, t, spec) + ou_conditional_sd(s, t, spec) * z
}

/// Truncation point of the exponential weight in [`m_moving_average`].
pub const MOVING_AVERAGE_CUTOFF: f64 = 40.0;

/// `M(s) = ∫_0^∞ S(s − r/τ) e^{−r} dr` by composite Gauss-Legendre quadrature
/// on `[0, 40]`.
pub fn m_moving_average(spec: &SignalSpec, s: f64) -> f64 {
    // Resolve the highest harmonic in r-units with several panels per cycle.
    let omega_max = std::f64::consts::TAU * spec.harmonics.len().max(1) as f64 / spec.period;
    let cycles = MOVING_AVERAGE_CUTOFF * omega_max / spec.tau / std::f64::consts::TAU;
    let panels = (40.0f64).max(4.0 * cycles).ceil() as usize;
    quad::integrate(
        |r| spec.eval(s - r / spec.tau) * (-r).exp(),
        0.0,
        MOVING_AVERAGE_CUTOFF,
        panels,
        8,
    )
}

/// Closed form of `M(s)` for a trigonometric signal.
pub fn m_moving_average_closed(spec: &SignalSpec, s: f64) -> f64 {
    let omega = std::f64::consts::TAU / spec.period;
    spec.harmonics.iter().enumerate().fold(spec.c0, |acc, (j, &(a, b))| {
        let w = (j + 1) as f64 * omega;
        let k = w / spec.tau;
        let (sn, cs) = (w * s).sin_cos();
        acc + (a * (cs + k * sn) + b * (sn - k * cs)) / (1.0 + k * k)
    })
}

/// Outcome of the skeleton stationarity check for the input process.
#[derive(Debug, Clone, PartialEq)]
pub struct OuStationarity {
    pub paths: usize,
    pub periods: usize,
    pub target_mean: f64,
    pub target_variance: f64,
    pub sample_mean: f64,
    pub standard_error: f64,
    pub sample_variance: f64,
    pub mean_ok: bool,
    pub variance_ok: bool,
}

/// Starts `paths` input processes from the stationary law `N(M(0), γ²/2)`,
/// advances each by `periods` periods with Euler steps of size `dt`, and
/// compares the skeleton marginal with that law: mean within 3 standard
/// errors, variance within 5 %.
pub fn ou_skeleton_stationarity(
    spec: &SignalSpec,
    dt: f64,
    paths: usize,
    periods: usize,
    seed: u64,
) -> Result<OuStationarity> {
    spec.validate()?;
    let cfg = SimConfig::new(dt, spec.period * periods as f64, seed);
    let per = cfg.steps_per_period(spec)?;
    if paths < 2 {
        return Err(Error::InsufficientData("need at least two paths".into()));
    }
    let target_mean = m_moving_average(spec, 0.0);
    let target_variance = spec.gamma * spec.gamma / 2.0;
    let amp = spec.noise_amplitude();
    let finals: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut noise = NoiseStream::new(seed, i);
            let mut xi = target_mean + target_variance.sqrt() * noise.gaussian();
            let sqrt_dt = dt.sqrt();
            for k in 0..per * periods {
                let t = k as f64 * dt;
                xi += (spec.eval(t) - xi) * spec.tau * dt + amp * sqrt_dt * noise.gaussian();
            }
            xi
        })
        .collect();
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    Ok(OuStationarity {
        paths,
        periods,
        target_mean,
        target_variance,
        sample_mean: mean,
        standard_error: se,
        sample_variance: var,
        mean_ok: (mean - target_mean).abs() <= 3.0 * se,
        variance_ok: (var - target_variance).abs() <= 0.05 * target_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{equilibrium_for_input, gating_equilibrium};
    use approx::assert_relative_eq;

    fn sine_spec() -> SignalSpec {
        SignalSpec { period: 10.0, c0: 2.0, harmonics: vec![(1.0, -0.5), (0.3, 0.2)], tau: 0.6, gamma: 1.5 }
    }

    #[test]
    fn classical_system_rests_at_its_input_equilibrium() {
        let c = 2.0;
        let v = equilibrium_for_input(c).unwrap();
        let spec = SignalSpec::constant(c, 10.0, 1.0, 3.0);
        let traj = simulate_classical(&State5::resting(v, 0.0).unwrap(), &SimConfig::new(0.01, 50.0, 0), &spec)
            .unwrap();
        let end = traj.states.last().unwrap();
        assert!((end.v - v).abs() < 1e-8, "{}", end.v - v);
        assert_eq!(end.zeta, c);
    }

    #[test]
    fn equilibrium_is_stationary_without_noise() {
        // With ζ at the constant input, v only feels −F, so rest needs F∞(v) = 0.
        let v = equilibrium_for_input(0.0).unwrap();
        let c = 7.5;
        let spec = SignalSpec::constant(c, 10.0, 1.0, 0.0);
        let x = State5::resting(v, c).unwrap();
        let next = step_euler(0.0, &x, 0.01, 0.0, &spec).unwrap();
        for (a, b) in next.to_array().iter().zip(x.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn increments_of_v_and_zeta_differ_by_ionic_current() {
        let spec = sine_spec();
        let x = State5::new(12.0, 0.4, 0.3, 0.5, -1.0).unwrap();
        let dt = 0.01;
        let next = step_euler(1.0, &x, dt, 0.37, &spec).unwrap();
        let gap = (next.v - x.v) - (next.zeta - x.zeta);
        assert_relative_eq!(gap, potential_input_gap(&x, dt), max_relative = 1e-10);
    }

    #[test]
    fn euler_local_error_is_second_order() {
        // Deterministic step versus two half steps: the difference shrinks ∝ dt².
        let spec = sine_spec();
        let x = State5::new(-20.0, 0.35, 0.1, 0.55, 3.0).unwrap();
        let gap = |dt: f64| {
            let full = step_euler(0.5, &x, dt, 0.0, &spec).unwrap();
            let half = step_euler(0.5, &x, dt / 2.0, 0.0, &spec).unwrap();
            let two = step_euler(0.5 + dt / 2.0, &half, dt / 2.0, 0.0, &spec).unwrap();
            (full.v - two.v).abs()
        };
        let ratio = gap(1e-3) / gap(5e-4);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn non_finite_state_is_reported() {
        let spec = sine_spec();
        let x = State5::new(f64::MAX / 2.0, 0.5, 0.5, 0.5, 0.0).unwrap();
        assert!(matches!(step_euler(0.0, &x, 1.0, 0.0, &spec), Err(Error::Simulation { .. })));
    }

    #[test]
    fn gating_stays_in_unit_box() {
        let spec = sine_spec();
        let x0 = State5::new(0.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        let traj = simulate(&x0, &SimConfig::new(0.01, 50.0, 3), &spec).unwrap();
        for (lo, hi) in traj.gating_range() {
            assert!(lo >= 0.0 && hi <= 1.0);
        }
        assert!(traj.states.iter().all(|s| s.n <= 1.0));
    }

    #[test]
    fn identical_seeds_identical_paths() {
        let spec = sine_spec();
        let x0 = State5::resting(0.0, 0.0).unwrap();
        let cfg = SimConfig::new(0.01, 20.0, 99);
        let a = simulate(&x0, &cfg, &spec).unwrap();
        let b = simulate(&x0, &cfg, &spec).unwrap();
        assert_eq!(a, b);
        let c = simulate_stream(&x0, &cfg, &spec, 1).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn a_priori_envelope_holds() {
        let spec = SignalSpec { gamma: 4.0, ..sine_spec() };
        let x0 = State5::new(35.0, 0.2, 0.9, 0.1, -8.0).unwrap();
        let traj = simulate(&x0, &SimConfig::new(0.005, 60.0, 5), &spec).unwrap();
        assert!(envelope_excess(&traj) <= 0.0);
        assert_relative_eq!(ENVELOPE_C2, 36.0 * 12.0 + 120.0 * 120.0 + 0.3 * 10.6);
    }

    #[test]
    fn skeleton_subsamples_the_path() {
        let spec = sine_spec();
        let x0 = State5::resting(5.0, 1.0).unwrap();
        let cfg = SimConfig::new(0.01, 30.0, 17);
        let path = simulate(&x0, &cfg, &spec).unwrap();
        let skel = skeleton(&x0, 3, &cfg, &spec).unwrap();
        assert_eq!(skel.len(), 4);
        for (k, s) in skel.iter().enumerate() {
            assert_eq!(*s, path.states[k * 1000]);
        }
        assert_eq!(skeleton(&x0, 0, &cfg, &spec).unwrap(), vec![x0]);
    }

    #[test]
    fn skeleton_rejects_incommensurate_step() {
        let spec = sine_spec();
        let x0 = State5::resting(0.0, 0.0).unwrap();
        let cfg = SimConfig::new(0.003, 30.0, 1);
        assert!(matches!(skeleton(&x0, 2, &cfg, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn skeleton_concatenation_with_continued_noise() {
        let spec = sine_spec();
        let x0 = State5::resting(-3.0, 2.0).unwrap();
        let cfg = SimConfig::new(0.01, 0.0, 23);
        let whole = skeleton_stream(&x0, 6, &cfg, &spec, 4).unwrap();
        let mut noise = NoiseStream::new(23, 4);
        let first = skeleton_from(&x0, 0, 3, &cfg, &spec, &mut noise).unwrap();
        let second =
            skeleton_from(first.last().unwrap(), 3, 3, &cfg, &spec, &mut noise)
                .unwrap();
        assert_eq!(&whole[..4], &first[..]);
        assert_eq!(&whole[3..], &second[..]);
    }

    #[test]
    fn fixed_point_skeleton_without_noise() {
        let v = equilibrium_for_input(0.0).unwrap();
        let c = -3.0;
        let spec = SignalSpec::constant(c, 5.0, 1.0, 0.0);
        let x0 = State5::resting(v, c).unwrap();
        let skel = skeleton(&x0, 10, &SimConfig::new(0.005, 0.0, 0), &spec).unwrap();
        for s in skel {
            for (a, b) in s.to_array().iter().zip(x0.to_array()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ou_conditional_mean_matches_quadrature() {
        let spec = sine_spec();
        let (xi, s, t) = (1.3, 2.2, 9.7);
        let quadrature = xi * (-spec.tau * (t - s)).exp()
            + spec.tau
                * quad::integrate(|u| (-spec.tau * (t - u)).exp() * spec.eval(u), s, t, 50, 8);
        assert!((ou_conditional_mean(xi, s, t, &spec) - quadrature).abs() < 1e-10);
    }

    #[test]
    fn ou_limits() {
        let spec = SignalSpec::constant(4.0, 10.0, 0.5, 2.0);
        assert!((ou_conditional_mean(-7.0, 0.0, 200.0, &spec) - 4.0).abs() < 1e-12);
        assert!((ou_conditional_sd(0.0, 200.0, &spec) - 2.0 / 2f64.sqrt()).abs() < 1e-12);
        let tiny = ou_exact_step(-7.0, 1.0, 1.0 + 1e-12, &spec, 0.5);
        assert!((tiny + 7.0).abs() < 1e-5);
    }

    #[test]
    fn ou_variance_matches_euler_monte_carlo() {
        let spec = SignalSpec::constant(0.0, 1.0, 1.0, 1.0);
        let sd = ou_conditional_sd(0.0, 1.0, &spec);
        let dt = 1e-4;
        let paths = 4000;
        let amp = spec.noise_amplitude();
        let finals: Vec<f64> = (0..paths)
            .into_par_iter()
            .map(|i| {
                let mut noise = NoiseStream::new(77, i);
                let mut xi = 0.0;
                for _ in 0..10_000 {
                    xi += -xi * spec.tau * dt + amp * dt.sqrt() * noise.gaussian();
                }
                xi
            })
            .collect();
        let var = finals.iter().map(|x| x * x).sum::<f64>() / paths as f64;
        assert!((var / (sd * sd) - 1.0).abs() < 0.06, "var {var} vs {}", sd * sd);
    }

    #[test]
    fn moving_average_properties() {
        let constant = SignalSpec::constant(3.5, 7.0, 0.8, 1.0);
        assert!((m_moving_average(&constant, 1.23) - 3.5).abs() < 1e-12);

        let spec = sine_spec();
        for &s in &[0.0, 1.7, 4.4, 9.1] {
            let q = m_moving_average(&spec, s);
            assert!((q - m_moving_average_closed(&spec, s)).abs() < 1e-10);
            assert!((m_moving_average(&spec, s + spec.period) - q).abs() < 1e-10);
        }

        let slow = SignalSpec { tau: 0.5, ..spec.clone() };
        let fast = SignalSpec { tau: 5.0, ..spec.clone() };
        let err = |sp: &SignalSpec| {
            (0..20).map(|i| {
                let s = i as f64 * 0.5;
                (m_moving_average(sp, s) - sp.eval(s)).abs()
            })
            .fold(0.0f64, f64::max)
        };
        assert!(err(&fast) < err(&slow));
    }

    #[test]
    fn gating_equilibrium_start_helper() {
        let x = State5::resting(0.0, 0.0).unwrap();
        let (n, m, h) = gating_equilibrium(0.0).unwrap();
        assert_eq!((x.n, x.m, x.h), (n, m, h));
    }
}
