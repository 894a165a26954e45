use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{SignalSpec, State5};
use crate::sde::{integrate, skeleton_batch, NoiseStream, SimConfig};

/// Weighted point cloud, normalized to total mass 1. Points may be grouped
/// into blocks (regeneration cycles, say) for block bootstrapping.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    blocks: Vec<usize>,
}

impl EmpiricalMeasure {
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::weighted(points, w)
    }

    pub fn weighted(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Config("points and weights differ in length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InsufficientData("empirical measure with zero mass".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        let blocks = (0..points.len()).collect();
        Ok(Self { points, weights, blocks })
    }

    /// Assigns point `i` to block `blocks[i]`; points of one block must be
    /// contiguous.
    pub fn with_blocks(mut self, blocks: Vec<usize>) -> Result<Self> {
        if blocks.len() != self.points.len() {
            return Err(Error::Config("one block label per point required".into()));
        }
        self.blocks = blocks;
        Ok(self)
    }

    pub fn block_count(&self) -> usize {
        self.block_ranges().len()
    }

    fn block_ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.blocks.len() {
            if i == self.blocks.len() || self.blocks[i] != self.blocks[start] {
                out.push((start, i));
                start = i;
            }
        }
        out
    }

    /// Block bootstrap replicate: as many blocks as the original, drawn with
    /// replacement, each keeping its weights.
    pub fn block_resample(&self, noise: &mut NoiseStream) -> Self {
        let ranges = self.block_ranges();
        let (mut points, mut weights, mut blocks) = (Vec::new(), Vec::new(), Vec::new());
        for b in 0..ranges.len() {
            let (lo, hi) = ranges[((noise.uniform() * ranges.len() as f64) as usize).min(ranges.len() - 1)];
            points.extend_from_slice(&self.points[lo..hi]);
            weights.extend_from_slice(&self.weights[lo..hi]);
            blocks.extend(std::iter::repeat_n(b, hi - lo));
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { points, weights, blocks }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    /// `n` independent draws.
    pub fn resample(&self, n: usize, noise: &mut NoiseStream) -> Vec<Vec<f64>> {
        let mut cdf = Vec::with_capacity(self.weights.len());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cdf.push(acc);
        }
        (0..n)
            .map(|_| {
                let u = noise.uniform() * acc;
                let i = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
                self.points[i].clone()
            })
            .collect()
    }
}

fn scaled_dist(a: &[f64], b: &[f64], scales: &[f64]) -> f64 {
    a.iter().zip(b).zip(scales).map(|((x, y), s)| ((x - y) / s).powi(2)).sum::<f64>().sqrt()
}

fn mean_cross(a: &[Vec<f64>], b: &[Vec<f64>], scales: &[f64]) -> f64 {
    // Row sums in parallel, total in a fixed order for reproducible bits.
    let rows: Vec<f64> = a
        .par_iter()
        .map(|x| b.iter().map(|y| scaled_dist(x, y, scales)).sum::<f64>())
        .collect();
    rows.iter().sum::<f64>() / (a.len() * b.len()) as f64
}

/// Per-coordinate standard deviations of the pooled samples, floored at
/// `1e−9`.
pub fn pooled_scales(samples: &[&[Vec<f64>]]) -> Vec<f64> {
    let d = samples.iter().find_map(|s| s.first()).map_or(0, |x| x.len());
    let n: usize = samples.iter().map(|s| s.len()).sum();
    (0..d)
        .map(|i| {
            let mean = samples.iter().flat_map(|s| s.iter()).map(|x| x[i]).sum::<f64>() / n as f64;
            let var = samples.iter().flat_map(|s| s.iter()).map(|x| (x[i] - mean).powi(2)).sum::<f64>()
                / n as f64;
            var.sqrt().max(1e-9)
        })
        .collect()
}

/// Energy distance `2E|X−Y| − E|X−X′| − E|Y−Y′|` between two samples
/// (V-statistic, so never negative), with coordinates divided by `scales`.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>], scales: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    (2.0 * mean_cross(a, b, scales) - mean_cross(a, a, scales) - mean_cross(b, b, scales)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiStartConfig {
    /// Skeleton indices discarded before comparison; `k_max/4` when absent.
    pub burn_in: Option<usize>,
    /// Extra runs of the first start on fresh streams for the noise floor.
    pub replicates: usize,
    /// Starts whose distances are within this multiple of the noise floor
    /// are linked.
    pub threshold_factor: f64,
    /// Points per sample after thinning.
    pub max_points: usize,
    /// First noise stream; start `i` uses `first_stream + i`.
    pub first_stream: u64,
}

impl Default for MultiStartConfig {
    fn default() -> Self {
        Self { burn_in: None, replicates: 4, threshold_factor: 3.0, max_points: 1000, first_stream: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiStartReport {
    /// Pairwise energy distances of the `(v, ζ)` marginals.
    pub vz_distance: Vec<Vec<f64>>,
    /// Pairwise energy distances of the `(n, m, h)` marginals.
    pub gating_distance: Vec<Vec<f64>>,
    pub vz_floor: f64,
    pub gating_floor: f64,
    pub clusters: Vec<Vec<usize>>,
}

fn thin(states: &[State5], burn_in: usize, max_points: usize) -> Vec<[f64; 5]> {
    let kept = &states[burn_in.min(states.len())..];
    let stride = kept.len().div_ceil(max_points.max(1)).max(1);
    kept.iter().step_by(stride).map(|s| s.to_array()).collect()
}

fn project(sample: &[[f64; 5]], idx: &[usize]) -> Vec<Vec<f64>> {
    sample.iter().map(|x| idx.iter().map(|&i| x[i]).collect()).collect()
}

fn single_linkage(n: usize, linked: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if linked(i, j) {
                let (a, b) = (label[i], label[j]);
                if a != b {
                    for l in label.iter_mut() {
                        if *l == b {
                            *l = a;
                        }
                    }
                }
            }
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for i in 0..n {
        match seen.iter().position(|&l| l == label[i]) {
            Some(c) => out[c].push(i),
            None => {
                seen.push(label[i]);
                out.push(vec![i]);
            }
        }
    }
    out
}

/// Compares the empirical skeleton laws from several starts. The noise
/// floor is the mean distance between the first start's sample and
/// replicates of it on fresh streams.
pub fn multi_start_diagnostic(
    starts: &[State5],
    k_max: usize,
    sim: &SimConfig,
    spec: &SignalSpec,
    cfg: &MultiStartConfig,
) -> Result<MultiStartReport> {
    if starts.len() < 2 {
        return Err(Error::Config("multi-start diagnostic needs at least two starts".into()));
    }
    let burn_in = cfg.burn_in.unwrap_or(k_max / 4);
    if burn_in >= k_max {
        return Err(Error::Config(format!("burn-in {burn_in} leaves nothing of {k_max} periods")));
    }
    let mut all: Vec<State5> = starts.to_vec();
    all.extend(std::iter::repeat_n(starts[0], cfg.replicates));
    let paths = skeleton_batch(&all, k_max, sim, spec, cfg.first_stream)?;
    let samples: Vec<Vec<[f64; 5]>> = paths.iter().map(|p| thin(p, burn_in, cfg.max_points)).collect();

    let distances = |idx: &[usize]| {
        let proj: Vec<Vec<Vec<f64>>> = samples.iter().map(|s| project(s, idx)).collect();
        let refs: Vec<&[Vec<f64>]> = proj.iter().map(|p| p.as_slice()).collect();
        let scales = pooled_scales(&refs);
        let n = starts.len();
        let mut matrix = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = energy_distance(&proj[i], &proj[j], &scales);
                matrix[i][j] = d;
                matrix[j][i] = d;
            }
        }
        let floor = if cfg.replicates == 0 {
            0.0
        } else {
            (n..n + cfg.replicates).map(|r| energy_distance(&proj[0], &proj[r], &scales)).sum::<f64>()
                / cfg.replicates as f64
        };
        (matrix, floor)
    };
    let (vz_distance, vz_floor) = distances(&[0, 4]);
    let (gating_distance, gating_floor) = distances(&[1, 2, 3]);
    let f = cfg.threshold_factor;
    let clusters = single_linkage(starts.len(), |i, j| {
        vz_distance[i][j] <= f * vz_floor && gating_distance[i][j] <= f * gating_floor
    });
    Ok(MultiStartReport { vz_distance, gating_distance, vz_floor, gating_floor, clusters })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceConfig {
    /// Draws from the estimated measure per sample.
    pub samples: usize,
    /// Independent replicate pairs averaged into the residual and the floor.
    pub replicates: usize,
    /// The residual passes when it is at most this multiple of the floor.
    pub tolerance_factor: f64,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        Self { samples: 500, replicates: 8, tolerance_factor: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicInvariance {
    pub phase: f64,
    pub residual: f64,
    pub noise_floor: f64,
    pub pass: bool,
}

fn push_forward(
    points: &[Vec<f64>],
    start_step: usize,
    steps: usize,
    sim: &SimConfig,
    spec: &SignalSpec,
    tag: u64,
) -> Result<Vec<Vec<f64>>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let x = State5::from_array([p[0], p[1], p[2], p[3], p[4]])?;
            let mut noise = NoiseStream::new(sim.seed, (tag << 32) | i as u64);
            let y = integrate(&x, start_step, steps, sim.dt, spec, &mut noise, |_, _, _| {})?;
            Ok(y.to_array().to_vec())
        })
        .collect()
}

/// Checks that `μ_s = μP_{0,s}` is invariant for the skeleton at phase `s`.
///
/// In each replicate a sample `A` of `μ_s` is pushed over `[s, s + T]` to
/// `B`, and a second sample `A′` of `μ*P_{0,s}` is drawn, with `μ*` a block
/// bootstrap of `μ`. The residual is the mean energy distance between `A`
/// and `B`, the noise floor the mean distance between `A` and `A′`, so the
/// floor carries both sampling noise and the estimation error of `μ`.
pub fn periodic_invariance_check(
    mu: &EmpiricalMeasure,
    phase: f64,
    sim: &SimConfig,
    spec: &SignalSpec,
    cfg: &InvarianceConfig,
) -> Result<PeriodicInvariance> {
    let per = sim.steps_per_period(spec)?;
    let s_steps = (phase / sim.dt).round() as usize;
    if phase < 0.0 || (s_steps as f64 * sim.dt - phase).abs() > 1e-9 * phase.max(1.0) {
        return Err(Error::Config(format!("phase {phase} is not a multiple of dt = {}", sim.dt)));
    }
    if mu.points().first().is_none_or(|p| p.len() != 5) {
        return Err(Error::Config("invariance check needs a measure on five-dimensional states".into()));
    }
    if cfg.replicates == 0 || cfg.samples == 0 {
        return Err(Error::Config("invariance check needs samples and replicates".into()));
    }
    let (mut residual, mut floor) = (0.0, 0.0);
    for r in 0..cfg.replicates as u64 {
        let tag = 1 + 4 * r;
        let mut noise = NoiseStream::new(sim.seed, tag << 32 | u32::MAX as u64);
        let a = push_forward(&mu.resample(cfg.samples, &mut noise), 0, s_steps, sim, spec, tag)?;
        let b = push_forward(&a, s_steps, per, sim, spec, tag + 1)?;
        let boot = mu.block_resample(&mut noise);
        let a2 = push_forward(&boot.resample(cfg.samples, &mut noise), 0, s_steps, sim, spec, tag + 2)?;
        let scales = pooled_scales(&[&a, &b, &a2]);
        residual += energy_distance(&a, &b, &scales);
        floor += energy_distance(&a, &a2, &scales);
    }
    let residual = residual / cfg.replicates as f64;
    let noise_floor = floor / cfg.replicates as f64;
    Ok(PeriodicInvariance {
        phase,
        residual,
        noise_floor,
        pass: residual <= cfg.tolerance_factor * noise_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_sample(n: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut noise = NoiseStream::new(seed, 0);
        (0..n).map(|_| vec![noise.gaussian() + shift, noise.gaussian()]).collect()
    }

    #[test]
    fn energy_distance_separates_shifted_laws() {
        let a = gaussian_sample(400, 0.0, 1);
        let b = gaussian_sample(400, 0.0, 2);
        let c = gaussian_sample(400, 1.0, 3);
        let s = [1.0, 1.0];
        assert_eq!(energy_distance(&a, &a, &s), 0.0);
        let same = energy_distance(&a, &b, &s);
        let shifted = energy_distance(&a, &c, &s);
        assert!(shifted > 10.0 * same, "{same} vs {shifted}");
    }

    #[test]
    fn energy_distance_matches_one_dimensional_closed_form() {
        // Two point masses at 0 and 1: 2·1 − 0 − 0.
        let a = vec![vec![0.0]; 3];
        let b = vec![vec![1.0]; 5];
        assert!((energy_distance(&a, &b, &[1.0]) - 2.0).abs() < 1e-15);
        assert!((energy_distance(&a, &b, &[2.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn measure_normalizes_and_resamples() {
        let m = EmpiricalMeasure::weighted(vec![vec![0.0], vec![1.0]], vec![1.0, 3.0]).unwrap();
        assert_eq!(m.weights(), &[0.25, 0.75]);
        assert!((m.expectation(|x| x[0]) - 0.75).abs() < 1e-15);
        let mut noise = NoiseStream::new(0, 0);
        let draws = m.resample(20_000, &mut noise);
        let ones = draws.iter().filter(|x| x[0] == 1.0).count() as f64 / 20_000.0;
        assert!((ones - 0.75).abs() < 0.015);
        assert!(EmpiricalMeasure::weighted(vec![vec![0.0]], vec![-1.0]).is_err());
        assert!(EmpiricalMeasure::uniform(vec![]).is_err());
    }

    #[test]
    fn block_bootstrap_keeps_blocks_whole() {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![(i / 3) as f64]).collect();
        let m = EmpiricalMeasure::uniform(pts).unwrap().with_blocks((0..9).map(|i| i / 3).collect()).unwrap();
        assert_eq!(m.block_count(), 3);
        let mut noise = NoiseStream::new(5, 0);
        for _ in 0..20 {
            let b = m.block_resample(&mut noise);
            assert_eq!(b.len(), 9);
            assert_eq!(b.block_count(), 3);
            for chunk in b.points().chunks(3) {
                assert!(chunk.iter().all(|p| p == &chunk[0]));
            }
            assert!((b.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linkage_merges_transitively() {
        let c = single_linkage(5, |i, j| (i, j) == (0, 3) || (i, j) == (3, 4));
        assert_eq!(c, vec![vec![0, 3, 4], vec![1], vec![2]]);
    }

    fn quiet() -> (SignalSpec, SimConfig) {
        (SignalSpec::constant(0.0, 1.0, 1.0, 2.0), SimConfig::new(0.01, 0.0, 3))
    }

    #[test]
    fn identical_starts_and_streams_have_zero_distance() {
        let (spec, sim) = quiet();
        let x = State5::resting(0.0, 0.0).unwrap();
        let cfg = MultiStartConfig { replicates: 2, ..Default::default() };
        let mut report = multi_start_diagnostic(&[x, x], 40, &sim, &spec, &cfg).unwrap();
        assert!(report.vz_distance[0][1] > 0.0);
        // Same stream for both starts.
        let paths = skeleton_batch(&[x], 40, &sim, &spec, 0).unwrap();
        let s = thin(&paths[0], 10, 1000);
        let p = project(&s, &[0, 4]);
        assert_eq!(energy_distance(&p, &p, &[1.0, 1.0]), 0.0);
        report.clusters.sort();
        assert_eq!(report.clusters, vec![vec![0, 1]]);
    }

    #[test]
    fn multi_start_needs_two_starts() {
        let (spec, sim) = quiet();
        let x = State5::resting(0.0, 0.0).unwrap();
        assert!(multi_start_diagnostic(&[x], 10, &sim, &spec, &MultiStartConfig::default()).is_err());
    }

    #[test]
    fn invariance_rejects_off_grid_phase() {
        let (spec, sim) = quiet();
        let mu = EmpiricalMeasure::uniform(vec![State5::resting(0.0, 0.0).unwrap().to_array().to_vec()])
            .unwrap();
        let cfg = InvarianceConfig::default();
        assert!(periodic_invariance_check(&mu, 0.005, &sim, &spec, &cfg).is_err());
    }
}
