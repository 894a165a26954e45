use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{drift, SignalSpec, State5};
use crate::sde::{integrate, NoiseStream, SimConfig};

/// The Lyapunov function `Φ = |v| + ζ²`, smoothed on `|v| < r` by the even
/// quartic that matches `|v|` to second order at `±r`, plus the constant
/// `offset` that lifts the minimum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovConfig {
    pub smoothing_radius: f64,
    pub offset: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self::new(2.0)
    }
}

impl LyapunovConfig {
    pub fn new(smoothing_radius: f64) -> Self {
        // The quartic's minimum is q(0) = 3r/8.
        let offset = (1.0 - 3.0 * smoothing_radius / 8.0).max(0.0);
        Self { smoothing_radius, offset }
    }

    /// `(q, q′, q″)` of the smoothed `|v|`.
    fn smoothed_abs(&self, v: f64) -> (f64, f64, f64) {
        let r = self.smoothing_radius;
        if v.abs() >= r {
            return (v.abs(), v.signum(), 0.0);
        }
        let (a, b, c) = (3.0 * r / 8.0, 3.0 / (4.0 * r), -1.0 / (8.0 * r * r * r));
        let v2 = v * v;
        (a + b * v2 + c * v2 * v2, 2.0 * b * v + 4.0 * c * v * v2, 2.0 * b + 12.0 * c * v2)
    }
}

pub fn lyapunov_phi(x: &State5, cfg: &LyapunovConfig) -> f64 {
    phi_raw(x.v, x.zeta, cfg)
}

fn phi_raw(v: f64, zeta: f64, cfg: &LyapunovConfig) -> f64 {
    cfg.smoothed_abs(v).0 + zeta * zeta + cfg.offset
}

/// Generator of the diffusion applied to `Φ` at time `t`.
pub fn generator_phi(t: f64, x: &State5, spec: &SignalSpec, cfg: &LyapunovConfig) -> f64 {
    let b = drift(t, x, spec);
    let (_, dq, d2q) = cfg.smoothed_abs(x.v);
    let diffusion = spec.gamma * spec.gamma * spec.tau;
    b[0] * dq + 2.0 * x.zeta * b[4] + 0.5 * diffusion * (d2q + 2.0)
}

/// Constants with `L_tΦ ≤ −c₁Φ + c₂` on a set of space-time points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorBound {
    pub c1: f64,
    pub c2: f64,
    pub points: usize,
}

/// Takes `c₁` as half the median of `−L_tΦ/Φ` over the points and the
/// smallest `c₂ ≥ 0` making the bound hold at every point.
pub fn fit_generator_bound(
    points: &[(f64, State5)],
    spec: &SignalSpec,
    cfg: &LyapunovConfig,
) -> Result<GeneratorBound> {
    if points.is_empty() {
        return Err(Error::InsufficientData("no points to fit the generator bound".into()));
    }
    let pairs: Vec<(f64, f64)> = points
        .iter()
        .map(|(t, x)| (generator_phi(*t, x, spec, cfg), lyapunov_phi(x, cfg)))
        .collect();
    let mut ratios: Vec<f64> = pairs.iter().map(|(l, p)| -l / p).collect();
    ratios.sort_by(f64::total_cmp);
    let c1 = (0.5 * ratios[ratios.len() / 2]).max(0.0);
    let c2 = pairs.iter().map(|(l, p)| l + c1 * p).fold(0.0f64, f64::max);
    Ok(GeneratorBound { c1, c2, points: points.len() })
}

/// Monte Carlo estimate of `P_{0,T}Φ(x) − Φ(x)` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub point: State5,
    pub estimate: f64,
    pub standard_error: f64,
    /// `estimate + 3·SE < 0`.
    pub negative: bool,
}

pub const MIN_DRIFT_SAMPLES: usize = 1000;

/// Estimates the one-period drift of `Φ` at each point from `mc` paths.
/// Path `j` of point `i` uses stream `stream_base + i·mc + j`.
pub fn skeleton_drift_check(
    points: &[State5],
    mc: usize,
    lcfg: &LyapunovConfig,
    sim: &SimConfig,
    spec: &SignalSpec,
    stream_base: u64,
) -> Result<Vec<DriftEstimate>> {
    if mc < MIN_DRIFT_SAMPLES {
        return Err(Error::Config(format!(
            "skeleton drift check needs at least {MIN_DRIFT_SAMPLES} samples per point, got {mc}"
        )));
    }
    let per = sim.steps_per_period(spec)?;
    points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let phi0 = lyapunov_phi(x, lcfg);
            let diffs: Vec<f64> = (0..mc)
                .into_par_iter()
                .map(|j| {
                    let stream = stream_base + (i * mc + j) as u64;
                    let mut noise = NoiseStream::new(sim.seed, stream);
                    let end = integrate(x, 0, per, sim.dt, spec, &mut noise, |_, _, _| {})?;
                    Ok(lyapunov_phi(&end, lcfg) - phi0)
                })
                .collect::<Result<_>>()?;
            let n = mc as f64;
            let mean = diffs.iter().sum::<f64>() / n;
            let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            Ok(DriftEstimate {
                point: *x,
                estimate: mean,
                standard_error: se,
                negative: mean + 3.0 * se < 0.0,
            })
        })
        .collect()
}

/// Points at "radius" `r` in the `(v, ζ)` plane: the four axis points and the
/// four diagonal ones, with gates at their equilibrium for the given `v`.
pub fn ring_points(r: f64) -> Result<Vec<State5>> {
    [(r, 0.0), (-r, 0.0), (0.0, r), (0.0, -r), (r, r), (-r, -r), (r, -r), (-r, r)]
        .iter()
        .map(|&(v, zeta)| State5::resting(v, zeta))
        .collect()
}

/// Boundary `C₂` of the compact `K = {|v| ≤ C₂, |ζ| ≤ C₂}` found by an
/// outward scan over `radii`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactFit {
    /// Largest scanned radius with a non-negative estimate (0 when all are
    /// negative); every radius beyond it had only negative estimates.
    pub c2: f64,
    pub rings: Vec<(f64, Vec<DriftEstimate>)>,
}

impl CompactFit {
    pub fn outside(&self, x: &State5) -> bool {
        x.v.abs() > self.c2 || x.zeta.abs() > self.c2
    }

    /// Smallest `−estimate` over the rings outside `K`: an empirical `ε`.
    pub fn epsilon(&self) -> f64 {
        self.rings
            .iter()
            .filter(|(r, _)| *r > self.c2)
            .flat_map(|(_, e)| e.iter().map(|d| -d.estimate))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn fit_compact(
    radii: &[f64],
    mc: usize,
    lcfg: &LyapunovConfig,
    sim: &SimConfig,
    spec: &SignalSpec,
    stream_base: u64,
) -> Result<CompactFit> {
    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rings = Vec::with_capacity(sorted.len());
    let mut c2 = 0.0f64;
    for (k, r) in sorted.into_iter().enumerate() {
        let points = ring_points(r)?;
        let base = stream_base + (k * points.len() * mc) as u64;
        let est = skeleton_drift_check(&points, mc, lcfg, sim, spec, base)?;
        if est.iter().any(|e| !e.negative) {
            c2 = r;
        }
        rings.push((r, est));
    }
    Ok(CompactFit { c2, rings })
}

/// The `(v, ζ)` test grid `±|v| × ±|ζ|` with gates at equilibrium, skipping
/// duplicate signs of zero.
pub fn drift_grid(v_abs: &[f64], zeta_abs: &[f64]) -> Result<Vec<State5>> {
    let mut out = Vec::new();
    for &v in v_abs {
        for &z in zeta_abs {
            let vs: &[f64] = if v == 0.0 { &[1.0] } else { &[1.0, -1.0] };
            let zs: &[f64] = if z == 0.0 { &[1.0] } else { &[1.0, -1.0] };
            for sv in vs {
                for sz in zs {
                    out.push(State5::resting(sv * v, sz * z)?);
                }
            }
        }
    }
    Ok(out)
}
