//! Explicit steering of the first four coordinates to the resting point.
//!
//! The potential follows the bridge `v̄_t = γ(t)·v₀`, which reaches 0 at
//! `t = 1`; the gates solve their linear ODEs along that bridge; the control
//! `ḣ` is chosen so that the first equation of the controlled system holds
//! identically. Replaying the controlled ODE then recovers the design up to
//! integration error.

use crate::error::{Error, Result};
use crate::model::{gating_equilibrium, ionic_current, rates_scalar, SignalSpec, State5};
use crate::quad::gauss_legendre;

/// Quintic smoothstep from 1 down to 0 on `[0, 1]`; 0 afterwards.
pub fn bump(t: f64) -> f64 {
    let u = t.clamp(0.0, 1.0);
    1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

pub fn bump_derivative(t: f64) -> f64 {
    if !(0.0..1.0).contains(&t) {
        return 0.0;
    }
    -30.0 * t * t * (1.0 - t) * (1.0 - t)
}

/// Relaxation rate `a = α + β` and source `b = α` of each gate at `v`.
fn gate_coefficients(v: f64) -> ([f64; 3], [f64; 3]) {
    let r = rates_scalar(v);
    ([r[0] + r[1], r[2] + r[3], r[4] + r[5]], [r[0], r[2], r[4]])
}

/// Gate relaxation rates at `v = 0`, `(a_n(0), a_m(0), a_h(0))`.
pub fn resting_decay_rates() -> [f64; 3] {
    gate_coefficients(0.0).0
}

const GL_POINTS: usize = 5;

/// Solves the gate ODEs along `v̄(t) = bump(t)·v0` between nearby times.
struct Bridge {
    v0: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    rest_a: [f64; 3],
    rest_eq: [f64; 3],
}

impl Bridge {
    fn new(v0: f64) -> Self {
        let (nodes, weights) = gauss_legendre(GL_POINTS);
        let (rest_a, rest_b) = gate_coefficients(0.0);
        let rest_eq = [0, 1, 2].map(|i| rest_b[i] / rest_a[i]);
        Self { v0, nodes, weights, rest_a, rest_eq }
    }

    fn vbar(&self, t: f64) -> f64 {
        bump(t) * self.v0
    }

    /// Gauss-Legendre nodes and weights mapped to `[a, b]`.
    fn rule(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, w * half))
    }

    /// `∫_a^b a_g(v̄(r)) dr` for each gate.
    fn integrated_rate(&self, a: f64, b: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (r, w) in self.rule(a, b) {
            let (rate, _) = gate_coefficients(self.vbar(r));
            for g in 0..3 {
                out[g] += w * rate[g];
            }
        }
        out
    }

    /// Gates at time `t` given gates `x` at time `s ≤ t`, with `t − s` small.
    fn propagate(&self, x: [f64; 3], s: f64, t: f64) -> [f64; 3] {
        if t <= s {
            return x;
        }
        if s >= 1.0 || self.v0 == 0.0 {
            // v̄ ≡ 0: exact exponential relaxation.
            return [0, 1, 2].map(|g| {
                self.rest_eq[g] + (x[g] - self.rest_eq[g]) * (-self.rest_a[g] * (t - s)).exp()
            });
        }
        let total = self.integrated_rate(s, t);
        let mut source = [0.0; 3];
        for (u, w) in self.rule(s, t) {
            let (_, b) = gate_coefficients(self.vbar(u));
            let tail = self.integrated_rate(u, t);
            for g in 0..3 {
                source[g] += w * b[g] * (-tail[g]).exp();
            }
        }
        [0, 1, 2].map(|g| x[g] * (-total[g]).exp() + source[g])
    }
}

/// Bridge samples on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingBridge {
    pub times: Vec<f64>,
    pub vbar: Vec<f64>,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub h: Vec<f64>,
}

fn grid_steps(t_end: f64, grid_dt: f64) -> Result<usize> {
    if !(grid_dt > 0.0 && grid_dt.is_finite()) {
        return Err(Error::Config(format!("grid_dt must be positive, got {grid_dt}")));
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::Config(format!("t_end must be non-negative, got {t_end}")));
    }
    let ratio = t_end / grid_dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Config(format!(
            "t_end {t_end} is not an integer multiple of grid_dt {grid_dt}"
        )));
    }
    Ok(steps as usize)
}

/// Gate values along the bridge from `x0` on the grid `k·grid_dt`,
/// `k = 0..=t_end/grid_dt`.
pub fn gating_bridge(x0: &State5, t_end: f64, grid_dt: f64) -> Result<GatingBridge> {
    let steps = grid_steps(t_end, grid_dt)?;
    let bridge = Bridge::new(x0.v);
    let mut out = GatingBridge {
        times: Vec::with_capacity(steps + 1),
        vbar: Vec::with_capacity(steps + 1),
        n: Vec::with_capacity(steps + 1),
        m: Vec::with_capacity(steps + 1),
        h: Vec::with_capacity(steps + 1),
    };
    let mut x = [x0.n, x0.m, x0.h];
    for k in 0..=steps {
        let t = k as f64 * grid_dt;
        if k > 0 {
            x = bridge.propagate(x, (k - 1) as f64 * grid_dt, t);
        }
        out.times.push(t);
        out.vbar.push(bridge.vbar(t));
        out.n.push(x[0]);
        out.m.push(x[1]);
        out.h.push(x[2]);
    }
    Ok(out)
}

/// Euclidean distance of `(n, m, h)` to the resting gates.
fn gate_distance(x: [f64; 3], rest: [f64; 3]) -> f64 {
    x.iter().zip(rest).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Smallest grid time `t₀` with the bridge gates inside `B_{ε/2}` of the
/// resting gates for every `t ≥ t₀`.
///
/// Past `t = 1` each gate relaxes exponentially, so the distance is
/// decreasing there and the crossing is found by bisection; before that, the
/// grid is scanned backwards from 1.
pub fn horizon_for(x0: &State5, eps: f64, grid_dt: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Horizon { t_end: 0.0, required: f64::INFINITY });
    }
    let (nr, mr, hr) = gating_equilibrium(0.0)?;
    let rest = [nr, mr, hr];
    let radius = 0.5 * eps;
    let one_steps = (1.0 / grid_dt).ceil();
    let t_one = one_steps * grid_dt;
    let early = gating_bridge(x0, t_one, grid_dt)?;
    let at = |k: usize| [early.n[k], early.m[k], early.h[k]];
    let last = early.times.len() - 1;
    let d_one = gate_distance(at(last), rest);
    if d_one >= radius {
        let a = resting_decay_rates();
        let offset = [0, 1, 2].map(|g| at(last)[g] - rest[g]);
        let dist = |s: f64| {
            (0..3).map(|g| (offset[g] * (-a[g] * s).exp()).powi(2)).sum::<f64>().sqrt()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while dist(hi) >= radius {
            hi *= 2.0;
        }
        while hi - lo > 1e-3 * grid_dt {
            let mid = 0.5 * (lo + hi);
            if dist(mid) < radius {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return Ok(t_one + (hi / grid_dt).ceil() * grid_dt);
    }
    let mut k = last;
    while k > 0 && gate_distance(at(k - 1), rest) < radius {
        k -= 1;
    }
    Ok(k as f64 * grid_dt)
}

/// The designed controlled trajectory and its control.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    pub x0: State5,
    pub times: Vec<f64>,
    pub vbar: Vec<f64>,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub h: Vec<f64>,
    /// Control derivative `ḣ` on the grid.
    pub hdot: Vec<f64>,
    /// Designed fifth coordinate `Jʰ`.
    pub j: Vec<f64>,
    pub eps: f64,
    pub t0: f64,
    pub grid_dt: f64,
}

impl ControlPath {
    /// `∫ ḣ²` by Simpson's rule (trapezoid on an odd number of intervals).
    pub fn energy(&self) -> f64 {
        let f: Vec<f64> = self.hdot.iter().map(|x| x * x).collect();
        let intervals = f.len().saturating_sub(1);
        if intervals == 0 {
            return 0.0;
        }
        let dt = self.grid_dt;
        if intervals % 2 == 0 {
            let inner: f64 = f[1..intervals]
                .iter()
                .enumerate()
                .map(|(i, x)| if i % 2 == 0 { 4.0 * x } else { 2.0 * x })
                .sum();
            dt / 3.0 * (f[0] + inner + f[intervals])
        } else {
            dt * (0.5 * f[0] + f[1..intervals].iter().sum::<f64>() + 0.5 * f[intervals])
        }
    }

    /// CSV with columns `s,vbar,nbar,mbar,hbar,hdot,J`.
    pub fn to_csv(&self) -> String {
        let rows = (0..self.times.len()).map(|k| {
            vec![
                self.times[k],
                self.vbar[k],
                self.n[k],
                self.m[k],
                self.h[k],
                self.hdot[k],
                self.j[k],
            ]
        });
        crate::export::csv_table(&["s", "vbar", "nbar", "mbar", "hbar", "hdot", "J"], rows)
    }
}

/// Builds the control steering `x0` into `B_ε` of the resting point over
/// `[0, t_end]`. Fails with a horizon error when `t_end < t₀(ε)`.
pub fn synthesize_control(
    x0: &State5,
    t_end: f64,
    spec: &SignalSpec,
    grid_dt: f64,
    eps: f64,
) -> Result<ControlPath> {
    spec.validate()?;
    let steps = grid_steps(t_end, grid_dt)?;
    let t0 = horizon_for(x0, eps, grid_dt).map_err(|e| match e {
        Error::Horizon { required, .. } => Error::Horizon { t_end, required },
        other => other,
    })?;
    if t_end + 1e-9 * grid_dt < t0 {
        return Err(Error::Horizon { t_end, required: t0 });
    }
    if spec.gamma <= 0.0 {
        return Err(Error::Config("control requires γ > 0".into()));
    }
    let bridge = Bridge::new(x0.v);
    let gates = gating_bridge(x0, t_end, grid_dt)?;
    let current = |t: f64, g: [f64; 3]| ionic_current(bridge.vbar(t), g[0], g[1], g[2]);

    // Jʰ_s = ζ + v̄_s − v + ∫_0^s F(v̄, n̄, m̄, h̄), interval by interval.
    let mut j = Vec::with_capacity(steps + 1);
    let mut integral = 0.0;
    for k in 0..=steps {
        let t = gates.times[k];
        if k > 0 {
            let s = gates.times[k - 1];
            let start = [gates.n[k - 1], gates.m[k - 1], gates.h[k - 1]];
            integral += bridge
                .rule(s, t)
                .map(|(u, w)| w * current(u, bridge.propagate(start, s, u)))
                .sum::<f64>();
        }
        j.push(x0.zeta + gates.vbar[k] - x0.v + integral);
    }

    let scale = spec.noise_amplitude();
    let hdot = (0..=steps)
        .map(|k| {
            let t = gates.times[k];
            let g = [gates.n[k], gates.m[k], gates.h[k]];
            (x0.v * bump_derivative(t) + current(t, g) + (j[k] - spec.eval(t)) * spec.tau) / scale
        })
        .collect();

    Ok(ControlPath {
        x0: *x0,
        times: gates.times,
        vbar: gates.vbar,
        n: gates.n,
        m: gates.m,
        h: gates.h,
        hdot,
        j,
        eps,
        t0,
        grid_dt,
    })
}

/// Outcome of integrating the controlled system with a synthesized control.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub terminal: State5,
    /// `(v, n, m, h, ζ)` at the replay nodes (every second grid point).
    pub times: Vec<f64>,
    pub states: Vec<[f64; 5]>,
    /// Sup-norm gap between replayed and designed `(v, n, m, h)`.
    pub max_deviation: f64,
    /// Sup-norm gap between replayed `ζ` and `Jʰ`.
    pub max_j_deviation: f64,
    pub max_v_deviation: f64,
    /// Distance of the terminal `(n, m, h)` to the resting gates.
    pub gate_distance: f64,
    /// Distance of the terminal `(v, n, m, h)` to the resting point.
    pub distance: f64,
}

fn controlled_rhs(t: f64, x: &[f64; 5], hdot: f64, spec: &SignalSpec) -> [f64; 5] {
    let [v, n, m, h, zeta] = *x;
    let r = rates_scalar(v);
    let dzeta = (spec.eval(t) - zeta) * spec.tau + spec.noise_amplitude() * hdot;
    [
        dzeta - ionic_current(v, n, m, h),
        r[0] * (1.0 - n) - r[1] * n,
        r[2] * (1.0 - m) - r[3] * m,
        r[4] * (1.0 - h) - r[5] * h,
        dzeta,
    ]
}

/// Integrates the controlled system from `path.x0` by classical RK4 with step
/// `2·grid_dt`, so every stage time is a grid point where `ḣ` is known.
/// A trailing odd interval is covered by one Heun step.
pub fn replay_control(path: &ControlPath, spec: &SignalSpec) -> Result<Replay> {
    let dt = path.grid_dt;
    let last = path.times.len() - 1;
    let mut x = path.x0.to_array();
    let mut times = vec![0.0];
    let mut states = vec![x];
    let add = |x: &[f64; 5], k: &[f64; 5], c: f64| -> [f64; 5] {
        [0, 1, 2, 3, 4].map(|i| x[i] + c * k[i])
    };
    let mut k = 0;
    while k + 2 <= last {
        let (t, h) = (path.times[k], 2.0 * dt);
        let k1 = controlled_rhs(t, &x, path.hdot[k], spec);
        let k2 = controlled_rhs(path.times[k + 1], &add(&x, &k1, dt), path.hdot[k + 1], spec);
        let k3 = controlled_rhs(path.times[k + 1], &add(&x, &k2, dt), path.hdot[k + 1], spec);
        let k4 = controlled_rhs(path.times[k + 2], &add(&x, &k3, h), path.hdot[k + 2], spec);
        x = [0, 1, 2, 3, 4].map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        k += 2;
        times.push(path.times[k]);
        states.push(x);
    }
    if k < last {
        let k1 = controlled_rhs(path.times[k], &x, path.hdot[k], spec);
        let k2 = controlled_rhs(path.times[k + 1], &add(&x, &k1, dt), path.hdot[k + 1], spec);
        x = [0, 1, 2, 3, 4].map(|i| x[i] + 0.5 * dt * (k1[i] + k2[i]));
        times.push(path.times[last]);
        states.push(x);
    }
    if x.iter().any(|c| !c.is_finite()) {
        return Err(Error::Simulation { t: path.times[last], state: x });
    }

    let mut max_deviation = 0.0f64;
    let mut max_j_deviation = 0.0f64;
    let mut max_v_deviation = 0.0f64;
    for (i, s) in states.iter().enumerate() {
        let g = if i * 2 <= last { i * 2 } else { last };
        let design = [path.vbar[g], path.n[g], path.m[g], path.h[g]];
        for c in 0..4 {
            max_deviation = max_deviation.max((s[c] - design[c]).abs());
        }
        max_v_deviation = max_v_deviation.max((s[0] - design[0]).abs());
        max_j_deviation = max_j_deviation.max((s[4] - path.j[g]).abs());
    }
    let (nr, mr, hr) = gating_equilibrium(0.0)?;
    let gate_distance = gate_distance([x[1], x[2], x[3]], [nr, mr, hr]);
    let distance = (gate_distance.powi(2) + x[0].powi(2)).sqrt();
    let terminal = State5::new(
        x[0],
        x[1].clamp(0.0, 1.0),
        x[2].clamp(0.0, 1.0),
        x[3].clamp(0.0, 1.0),
        x[4],
    )?;
    Ok(Replay {
        terminal,
        times,
        states,
        max_deviation,
        max_j_deviation,
        max_v_deviation,
        gate_distance,
        distance,
    })
}

/// Least-squares decay rate of `|x(t) − target|` over `t ∈ [t_lo, t_hi]`,
/// ignoring points whose gap has fallen below `floor`.
pub fn fitted_decay_rate(
    times: &[f64],
    values: &[f64],
    target: f64,
    t_lo: f64,
    t_hi: f64,
    floor: f64,
) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, x)| **t >= t_lo && **t <= t_hi && (**x - target).abs() > floor)
        .map(|(t, x)| (*t, (x - target).abs().ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Some(-sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attainability {
    pub reached: bool,
    pub eps: f64,
    pub t0: f64,
    pub t_end: f64,
    pub distance: f64,
    pub gate_distance: f64,
    pub max_deviation: f64,
}

/// Synthesizes over `[0, max(t₀(ε), 1)]` (rounded up to an even number of
/// grid steps) and replays; reached iff the replayed `(v, n, m, h)` ends in
/// `B_ε` of the resting point.
pub fn attainability_check(
    x0: &State5,
    eps: f64,
    spec: &SignalSpec,
    grid_dt: f64,
) -> Result<Attainability> {
    let t0 = horizon_for(x0, eps, grid_dt)?;
    let pairs = (t0.max(1.0) / (2.0 * grid_dt)).ceil();
    let t_end = pairs * 2.0 * grid_dt;
    let path = synthesize_control(x0, t_end, spec, grid_dt, eps)?;
    let replay = replay_control(&path, spec)?;
    Ok(Attainability {
        reached: replay.distance < eps,
        eps,
        t0,
        t_end,
        distance: replay.distance,
        gate_distance: replay.gate_distance,
        max_deviation: replay.max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::f_infinity;
    use approx::assert_relative_eq;

    fn spec() -> SignalSpec {
        SignalSpec { period: 10.0, c0: 1.0, harmonics: vec![(0.5, 0.2)], tau: 0.7, gamma: 1.2 }
    }

    #[test]
    fn bump_endpoints_and_symmetry() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(3.0), 0.0);
        assert!((bump(0.5) - 0.5).abs() < 1e-15);
        for &t in &[0.1, 0.3, 0.77] {
            assert!((bump(t) + bump(1.0 - t) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn bump_derivative_matches_difference_quotient() {
        let h = 1e-6;
        for &t in &[0.05, 0.4, 0.5, 0.93] {
            let fd = (bump(t + h) - bump(t - h)) / (2.0 * h);
            assert!((bump_derivative(t) - fd).abs() < 1e-8);
        }
        assert_eq!(bump_derivative(0.0), 0.0);
        assert_eq!(bump_derivative(1.0), 0.0);
    }

    #[test]
    fn resting_bridge_relaxes_at_resting_rate() {
        let x0 = State5::new(0.0, 0.9, 0.05, 0.2, 0.0).unwrap();
        let b = gating_bridge(&x0, 20.0, 1e-2).unwrap();
        assert!(b.vbar.iter().all(|v| *v == 0.0));
        let (nr, mr, hr) = gating_equilibrium(0.0).unwrap();
        let a = resting_decay_rates();
        for (k, &t) in b.times.iter().enumerate().step_by(100) {
            assert!((b.n[k] - (nr + (0.9 - nr) * (-a[0] * t).exp())).abs() < 1e-12);
            assert!((b.m[k] - (mr + (0.05 - mr) * (-a[1] * t).exp())).abs() < 1e-12);
            assert!((b.h[k] - (hr + (0.2 - hr) * (-a[2] * t).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn bridge_matches_fine_ode_integration() {
        let x0 = State5::new(50.0, 0.9, 0.1, 0.9, 0.0).unwrap();
        let b = gating_bridge(&x0, 3.0, 1e-2).unwrap();
        // RK4 on the frozen-v̄ gate ODEs with a much finer step.
        let f = |t: f64, x: [f64; 3]| {
            let (a, s) = gate_coefficients(bump(t) * 50.0);
            [0, 1, 2].map(|g| s[g] - a[g] * x[g])
        };
        let h = 1e-4;
        let mut x = [0.9, 0.1, 0.9];
        for step in 0..30_000 {
            let t = step as f64 * h;
            let k1 = f(t, x);
            let k2 = f(t + h / 2.0, [0, 1, 2].map(|g| x[g] + h / 2.0 * k1[g]));
            let k3 = f(t + h / 2.0, [0, 1, 2].map(|g| x[g] + h / 2.0 * k2[g]));
            let k4 = f(t + h, [0, 1, 2].map(|g| x[g] + h * k3[g]));
            x = [0, 1, 2].map(|g| x[g] + h / 6.0 * (k1[g] + 2.0 * k2[g] + 2.0 * k3[g] + k4[g]));
            if (step + 1) % 100 == 0 {
                let k = (step + 1) / 100;
                assert!((b.n[k] - x[0]).abs() < 1e-6);
                assert!((b.m[k] - x[1]).abs() < 1e-6);
                assert!((b.h[k] - x[2]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bridge_stays_in_open_unit_interval() {
        let x0 = State5::new(-70.0, 0.999, 0.001, 0.999, 0.0).unwrap();
        let b = gating_bridge(&x0, 5.0, 1e-3).unwrap();
        for g in [&b.n, &b.m, &b.h] {
            assert!(g.iter().all(|x| *x > 0.0 && *x < 1.0));
        }
    }

    #[test]
    fn grid_must_divide_horizon() {
        let x0 = State5::resting(0.0, 0.0).unwrap();
        assert!(matches!(gating_bridge(&x0, 1.0, 0.3), Err(Error::Config(_))));
    }

    #[test]
    fn resting_start_gives_linear_j() {
        let c = 2.0;
        let spec = SignalSpec::constant(c, 10.0, 1.0, 1.0);
        let x0 = State5::resting(0.0, c).unwrap();
        let path = synthesize_control(&x0, 5.0, &spec, 1e-2, 0.05).unwrap();
        let slope = f_infinity(0.0).unwrap();
        for (t, j) in path.times.iter().zip(&path.j) {
            assert!((j - (c + slope * t)).abs() < 1e-3 * t.max(1.0));
        }
        assert!((slope + 0.0534).abs() < 1e-3);
    }

    #[test]
    fn control_scales_inversely_with_gamma() {
        let x0 = State5::new(30.0, 0.5, 0.2, 0.4, 1.0).unwrap();
        let s1 = spec();
        let s2 = SignalSpec { gamma: 2.0 * s1.gamma, ..s1.clone() };
        let p1 = synthesize_control(&x0, 40.0, &s1, 1e-2, 0.05).unwrap();
        let p2 = synthesize_control(&x0, 40.0, &s2, 1e-2, 0.05).unwrap();
        for (a, b) in p1.hdot.iter().zip(&p2.hdot) {
            assert!((a - 2.0 * b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn control_energy_converges_under_refinement() {
        let x0 = State5::new(30.0, 0.5, 0.2, 0.4, 1.0).unwrap();
        let coarse = synthesize_control(&x0, 40.0, &spec(), 2e-3, 0.05).unwrap().energy();
        let fine = synthesize_control(&x0, 40.0, &spec(), 1e-3, 0.05).unwrap().energy();
        assert!(coarse.is_finite());
        assert!((coarse - fine).abs() / fine < 1e-4, "{coarse} vs {fine}");
    }

    #[test]
    fn replay_reproduces_design() {
        let x0 = State5::new(50.0, 0.9, 0.1, 0.9, -20.0).unwrap();
        let path = synthesize_control(&x0, 40.0, &spec(), 1e-3, 0.05).unwrap();
        let replay = replay_control(&path, &spec()).unwrap();
        assert!(replay.max_deviation < 1e-5, "{}", replay.max_deviation);
        assert!(replay.max_j_deviation < 1e-5, "{}", replay.max_j_deviation);
        assert!(replay.gate_distance < 0.025);
    }

    #[test]
    fn horizon_error_below_t0() {
        let x0 = State5::new(50.0, 0.9, 0.1, 0.9, -20.0).unwrap();
        let t0 = horizon_for(&x0, 0.05, 1e-2).unwrap();
        match synthesize_control(&x0, 2.0, &spec(), 1e-2, 0.05) {
            Err(Error::Horizon { t_end, required }) => {
                assert_eq!(t_end, 2.0);
                assert_relative_eq!(required, t0);
            }
            other => panic!("expected horizon error, got {other:?}"),
        }
        assert!(matches!(
            synthesize_control(&x0, 50.0, &spec(), 1e-2, 0.0),
            Err(Error::Horizon { .. })
        ));
    }

    #[test]
    fn horizon_is_monotone_in_eps() {
        let x0 = State5::new(-40.0, 0.2, 0.6, 0.1, 0.0).unwrap();
        let horizons: Vec<f64> = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5]
            .iter()
            .map(|e| horizon_for(&x0, *e, 1e-2).unwrap())
            .collect();
        assert!(horizons.windows(2).all(|w| w[1] <= w[0]), "{horizons:?}");
    }

    #[test]
    fn bridge_decays_at_resting_rates() {
        let x0 = State5::new(50.0, 0.9, 0.1, 0.9, -20.0).unwrap();
        let b = gating_bridge(&x0, 30.0, 1e-2).unwrap();
        let (nr, mr, hr) = gating_equilibrium(0.0).unwrap();
        let a = resting_decay_rates();
        for (g, (vals, rest)) in [(&b.n, nr), (&b.m, mr), (&b.h, hr)].into_iter().enumerate() {
            let rate = fitted_decay_rate(&b.times, vals, rest, 1.0, 29.0, 1e-12).unwrap();
            assert!(rate >= a[g] * (1.0 - 1e-2), "gate {g}: {rate} vs {}", a[g]);
        }
    }

    #[test]
    fn resting_point_is_attained_immediately() {
        for zeta in [-5.0, 0.0, 12.0] {
            let x0 = State5::resting(0.0, zeta).unwrap();
            for eps in [1e-3, 0.05] {
                let r = attainability_check(&x0, eps, &spec(), 1e-2).unwrap();
                assert!(r.reached);
                assert_eq!(r.t0, 0.0);
            }
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let x0 = State5::resting(0.0, 0.0).unwrap();
        let path = synthesize_control(&x0, 1.0, &spec(), 0.5, 0.1).unwrap();
        let csv = path.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "s,vbar,nbar,mbar,hbar,hdot,J");
        assert_eq!(lines.len(), 4);
    }
}
