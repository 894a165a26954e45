use rayon::prelude::*;
use serde::Serialize;

use super::diagnostics::EmpiricalMeasure;
use super::kernel::SkeletonKernel;
use super::minorization::{MinorizationBall, TransitionPair};
use crate::error::{Error, Result};
use crate::sde::NoiseStream;

/// Regeneration indices of one path with respect to one ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegenerationRecord {
    pub path_id: u64,
    pub ball: usize,
    /// `R₀ = 0` followed by the regeneration indices.
    pub indices: Vec<usize>,
    /// `(l, U_l)` for every visit `l ≥ 1` to the center ball.
    pub uniforms: Vec<(usize, f64)>,
}

impl RegenerationRecord {
    /// Number of regenerations after `R₀`.
    pub fn count(&self) -> usize {
        self.indices.len() - 1
    }

    /// Complete cycles `(R_n, R_{n+1}]` for `n ≥ 1`.
    pub fn cycles(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices.windows(2).skip(1).map(|w| (w[0] + 1, w[1]))
    }
}

fn uniform_stream(seed: u64, path_id: u64, ball: usize) -> NoiseStream {
    NoiseStream::new(seed, (path_id << 16) | ball as u64)
}

/// Applies the stopping rule `R_{n+1} = inf{l > R_n : X_l ∈ B(x_k), U_l ≤ β_k}`
/// to a fixed path, separately for every ball. The uniforms for path `p` and
/// ball `k` come from their own stream of `seed`.
pub fn regeneration_times(
    path: &[Vec<f64>],
    path_id: u64,
    balls: &[MinorizationBall],
    seed: u64,
) -> Vec<RegenerationRecord> {
    balls
        .iter()
        .enumerate()
        .map(|(k, ball)| {
            let mut noise = uniform_stream(seed, path_id, k);
            let mut indices = vec![0];
            let mut uniforms = Vec::new();
            for (l, x) in path.iter().enumerate().skip(1) {
                if ball.contains_center(x) {
                    let u = noise.uniform();
                    uniforms.push((l, u));
                    if u <= ball.beta {
                        indices.push(l);
                    }
                }
            }
            RegenerationRecord { path_id, ball: k, indices, uniforms }
        })
        .collect()
}

/// A path of the split chain: whenever `X_l` lies in the center ball and
/// `U_l ≤ β`, `X_{l+1}` is drawn from `ν`; otherwise from the residual
/// kernel `(P(X_l, ·) − βν)/(1 − β)` when the kernel has a density, and from
/// `P(X_l, ·)` when it does not.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitChain {
    pub states: Vec<Vec<f64>>,
    pub record: RegenerationRecord,
    /// Residual proposals where `βν(y) > p(x, y)`, i.e. the minorization
    /// failed at a sampled point.
    pub violations: usize,
    /// Residual draws that gave up after the rejection cap.
    pub capped: usize,
    /// Whether the residual kernel was sampled exactly.
    pub exact: bool,
}

const RESIDUAL_CAP: usize = 10_000;

/// Runs the split chain for `steps` transitions from `x0`. The kernel draws
/// use stream `2·path_id` of `seed`, the splitting uniforms and `ν` draws
/// stream `2·path_id + 1`.
pub fn run_split_chain<K: SkeletonKernel>(
    kernel: &K,
    ball: &MinorizationBall,
    x0: &[f64],
    steps: usize,
    seed: u64,
    path_id: u64,
) -> Result<SplitChain> {
    if !(ball.beta > 0.0 && ball.beta <= 1.0) {
        return Err(Error::Domain(format!("ball weight {} outside (0, 1]", ball.beta)));
    }
    let mut motion = NoiseStream::new(seed, 2 * path_id);
    let mut aux = NoiseStream::new(seed, 2 * path_id + 1);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    let mut indices = vec![0];
    let mut uniforms = Vec::new();
    let (mut violations, mut capped) = (0, 0);
    let exact = kernel.density(x0, x0).is_some();
    for l in 0..steps {
        let x = &states[l];
        let visit = l >= 1 && ball.contains_center(x);
        let next = if visit {
            let u = aux.uniform();
            uniforms.push((l, u));
            if u <= ball.beta {
                indices.push(l);
                ball.sample_nu(&mut aux)
            } else if exact {
                let mut tries = 0;
                loop {
                    let y = kernel.sample(x, &mut motion)?;
                    let p = kernel.density(x, &y).unwrap_or(f64::INFINITY);
                    let ratio = ball.beta * ball.nu_density(&y) / p;
                    if ratio > 1.0 {
                        violations += 1;
                    }
                    tries += 1;
                    if aux.uniform() >= ratio {
                        break y;
                    }
                    if tries >= RESIDUAL_CAP {
                        capped += 1;
                        break y;
                    }
                }
            } else {
                kernel.sample(x, &mut motion)?
            }
        } else {
            kernel.sample(x, &mut motion)?
        };
        states.push(next);
    }
    Ok(SplitChain {
        states,
        record: RegenerationRecord { path_id, ball: 0, indices, uniforms },
        violations,
        capped,
        exact,
    })
}

/// Independent split chains, chain `i` with path id `first_path + i`.
pub fn run_split_chains<K: SkeletonKernel>(
    kernel: &K,
    ball: &MinorizationBall,
    starts: &[Vec<f64>],
    steps: usize,
    seed: u64,
    first_path: u64,
) -> Result<Vec<SplitChain>> {
    starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| run_split_chain(kernel, ball, x0, steps, seed, first_path + i as u64))
        .collect()
}

/// Transitions of chains from `starts`, each run for `periods` steps on
/// stream `first_stream + i` of `seed`.
pub fn transition_pairs<K: SkeletonKernel>(
    kernel: &K,
    starts: &[Vec<f64>],
    periods: usize,
    seed: u64,
    first_stream: u64,
) -> Result<Vec<TransitionPair>> {
    let chunks: Vec<Vec<TransitionPair>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let mut noise = NoiseStream::new(seed, first_stream + i as u64);
            let mut x = x0.clone();
            let mut out = Vec::with_capacity(periods);
            for _ in 0..periods {
                let y = kernel.sample(&x, &mut noise)?;
                out.push(TransitionPair { x, y: y.clone() });
                x = y;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorConfig {
    pub bootstrap: usize,
    /// Two-sided confidence level of the interval.
    pub level: f64,
    pub min_cycles: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { bootstrap: 1000, level: 0.95, min_cycles: 30, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantEstimate {
    pub estimate: f64,
    pub ci: (f64, f64),
    pub cycles: usize,
    pub mean_cycle_length: f64,
    /// States visited during complete cycles, equally weighted, one block
    /// per cycle.
    pub measure: EmpiricalMeasure,
}

/// Ratio estimator `Σ f(X_l) / Σ (cycle lengths)` over all complete cycles
/// of the given chains, with a percentile bootstrap over cycles.
pub fn regeneration_invariant_estimate(
    chains: &[SplitChain],
    f: impl Fn(&[f64]) -> f64 + Sync,
    cfg: &EstimatorConfig,
) -> Result<InvariantEstimate> {
    let mut sums = Vec::new();
    let mut lens = Vec::new();
    let mut points = Vec::new();
    let mut blocks = Vec::new();
    for chain in chains {
        for (a, b) in chain.record.cycles() {
            let cycle = &chain.states[a..=b];
            sums.push(cycle.iter().map(|x| f(x)).sum::<f64>());
            lens.push(cycle.len() as f64);
            blocks.extend(std::iter::repeat_n(sums.len() - 1, cycle.len()));
            points.extend(cycle.iter().cloned());
        }
    }
    let cycles = sums.len();
    if cycles < cfg.min_cycles.max(1) {
        return Err(Error::InsufficientData(format!(
            "{cycles} complete regeneration cycles, need at least {}",
            cfg.min_cycles
        )));
    }
    let total_len: f64 = lens.iter().sum();
    let estimate = sums.iter().sum::<f64>() / total_len;

    let mut noise = NoiseStream::new(cfg.seed, 0);
    let mut boot: Vec<f64> = (0..cfg.bootstrap)
        .map(|_| {
            let (mut s, mut n) = (0.0, 0.0);
            for _ in 0..cycles {
                let i = ((noise.uniform() * cycles as f64) as usize).min(cycles - 1);
                s += sums[i];
                n += lens[i];
            }
            s / n
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let ci = if boot.is_empty() {
        (estimate, estimate)
    } else {
        let tail = 0.5 * (1.0 - cfg.level);
        let at = |q: f64| boot[((q * boot.len() as f64) as usize).min(boot.len() - 1)];
        (at(tail), at(1.0 - tail))
    };
    Ok(InvariantEstimate {
        estimate,
        ci,
        cycles,
        mean_cycle_length: total_len / cycles as f64,
        measure: EmpiricalMeasure::uniform(points)?.with_blocks(blocks)?,
    })
}
