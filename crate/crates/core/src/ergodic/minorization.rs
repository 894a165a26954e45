use serde::Serialize;

use super::kernel::OuSkeleton;
use crate::error::{Error, Result};
use crate::sde::NoiseStream;

/// Volume of the unit ball in `ℝᵈ`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// A pair of balls with `P(x, ·) ≥ β ν` for `x` in the center ball, where
/// `ν` is uniform on the partner ball.
///
/// Balls are ellipsoids `Σ ((x_i − c_i)/s_i)² ≤ r²`: one radius in units of
/// the per-coordinate scales `s_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinorizationBall {
    pub center: Vec<f64>,
    pub partner: Vec<f64>,
    pub radius: f64,
    pub scales: Vec<f64>,
    pub beta: f64,
}

impl MinorizationBall {
    fn scaled_dist2(&self, x: &[f64], c: &[f64]) -> f64 {
        x.iter()
            .zip(c)
            .zip(&self.scales)
            .map(|((a, b), s)| ((a - b) / s).powi(2))
            .sum()
    }

    pub fn contains_center(&self, x: &[f64]) -> bool {
        self.scaled_dist2(x, &self.center) <= self.radius * self.radius
    }

    pub fn contains_partner(&self, y: &[f64]) -> bool {
        self.scaled_dist2(y, &self.partner) <= self.radius * self.radius
    }

    /// Lebesgue volume of either ball.
    pub fn volume(&self) -> f64 {
        let d = self.center.len();
        unit_ball_volume(d) * self.radius.powi(d as i32) * self.scales.iter().product::<f64>()
    }

    /// Density of `ν` at `y`.
    pub fn nu_density(&self, y: &[f64]) -> f64 {
        if self.contains_partner(y) {
            1.0 / self.volume()
        } else {
            0.0
        }
    }

    /// Uniform draw from the partner ball.
    pub fn sample_nu(&self, noise: &mut NoiseStream) -> Vec<f64> {
        let d = self.partner.len();
        let dir: Vec<f64> = (0..d).map(|_| noise.gaussian()).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rho = self.radius * noise.uniform().powf(1.0 / d as f64);
        (0..d).map(|i| self.partner[i] + self.scales[i] * rho * dir[i] / norm).collect()
    }
}

/// Exact minorization for the sampled input process: center ball around
/// `center`, partner ball around its one-period mean, both of radius
/// `radius`, and `β` from the Gaussian density's infimum over the two balls.
pub fn ou_minorization(kernel: &OuSkeleton, center: f64, radius: f64) -> Result<MinorizationBall> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
    }
    let partner = kernel.mean(center);
    // The mean map is affine, so |y − m(x)| is largest at a pair of endpoints.
    let mut inf = f64::INFINITY;
    for x in [center - radius, center + radius] {
        for y in [partner - radius, partner + radius] {
            inf = inf.min(super::kernel::SkeletonKernel::density(kernel, &[x], &[y]).unwrap());
        }
    }
    let beta = (2.0 * radius * inf).min(1.0);
    Ok(MinorizationBall {
        center: vec![center],
        partner: vec![partner],
        radius,
        scales: vec![1.0],
        beta,
    })
}

/// One observed transition of a skeleton chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Settings for [`find_minorization`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinorizationConfig {
    /// Maximum number of balls.
    pub balls: usize,
    /// Candidate radii in scale units; every one is tried and the balls
    /// with the largest weights are kept.
    pub radii: Vec<f64>,
    /// Kernel bandwidth in scale units; Scott's rule when absent.
    pub bandwidth: Option<f64>,
    /// Factor applied to every estimated `β`.
    pub discount: f64,
    /// Candidate centers examined per ball.
    pub candidates: usize,
    /// Transitions nearest to each probe start whose landings enter the
    /// density estimate.
    pub probe_neighbours: usize,
}

impl Default for MinorizationConfig {
    fn default() -> Self {
        Self {
            balls: 4,
            radii: vec![0.25, 0.5, 1.0],
            bandwidth: None,
            discount: 0.5,
            candidates: 200,
            probe_neighbours: 100,
        }
    }
}

/// Robust per-coordinate spread of the starting points: the interquartile
/// range over 1.349 (the standard deviation for Gaussian data), falling back
/// to the standard deviation when the quartiles coincide.
fn column_scales(pairs: &[TransitionPair]) -> Vec<f64> {
    let d = pairs[0].x.len();
    let n = pairs.len() as f64;
    (0..d)
        .map(|i| {
            let mut col: Vec<f64> = pairs.iter().map(|p| p.x[i]).collect();
            col.sort_by(f64::total_cmp);
            let q = |f: f64| col[((f * (col.len() - 1) as f64).round() as usize).min(col.len() - 1)];
            let iqr = (q(0.75) - q(0.25)) / 1.349;
            if iqr > 1e-6 {
                return iqr;
            }
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            var.sqrt().max(1e-6)
        })
        .collect()
}

fn strided<T: Clone>(items: &[T], max: usize) -> Vec<T> {
    let stride = items.len().div_ceil(max.max(1)).max(1);
    items.iter().step_by(stride).cloned().collect()
}

/// Gaussian product-kernel density estimate at `y` from `sample`, in scaled
/// coordinates (the result is a density per unit scaled volume).
fn kde_scaled(sample: &[&Vec<f64>], y: &[f64], scales: &[f64], h: f64) -> f64 {
    let d = y.len() as i32;
    let norm = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0) * h.powi(d);
    let sum: f64 = sample
        .iter()
        .map(|s| {
            let q: f64 = s.iter().zip(y).zip(scales).map(|((a, b), c)| ((a - b) / c).powi(2)).sum();
            (-0.5 * q / (h * h)).exp()
        })
        .sum();
    sum / (sample.len() as f64 * norm)
}

/// Finds balls `B_r(x_k)`, `B_r(y_k)` and conservative weights `β_k` from
/// observed transitions.
///
/// For every candidate radius, centers are chosen greedily where uncovered
/// starting points are densest; the partner is the most crowded landing point
/// of transitions leaving the center ball; the radius shrinks so the partner
/// ball stays inside `bounds`. Probe starts sit at the center and at `±r`
/// along every axis; for each probe the landings of its nearest transitions
/// give a Gaussian kernel density estimate at the partner and at `±r` along
/// every axis. `β_k` is the discounted minimum over probes and test points
/// of `λ(B)·density`, capped by the discounted minimum empirical landing
/// fraction and by 1. Over all radii, the `balls` balls
/// with the largest `β_k × (starting points in the center ball)` are
/// returned in that order.
pub fn find_minorization(
    pairs: &[TransitionPair],
    cfg: &MinorizationConfig,
    bounds: &[(f64, f64)],
) -> Result<Vec<MinorizationBall>> {
    let insufficient = || {
        Error::InsufficientData(
            "no minorization ball found; use more transitions or a larger bandwidth".into(),
        )
    };
    if pairs.is_empty() || cfg.balls == 0 {
        return Err(insufficient());
    }
    let scales = column_scales(pairs);
    let mut scored: Vec<(f64, MinorizationBall)> = cfg
        .radii
        .iter()
        .filter(|r| **r > 0.0)
        .flat_map(|&r| greedy_balls(pairs, cfg, bounds, &scales, r))
        .map(|b| {
            let visits = pairs.iter().filter(|p| b.contains_center(&p.x)).count();
            (b.beta * visits as f64, b)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let balls: Vec<MinorizationBall> = scored.into_iter().take(cfg.balls).map(|(_, b)| b).collect();
    if balls.is_empty() {
        return Err(insufficient());
    }
    Ok(balls)
}

fn greedy_balls(
    pairs: &[TransitionPair],
    cfg: &MinorizationConfig,
    bounds: &[(f64, f64)],
    scales: &[f64],
    select_radius: f64,
) -> Vec<MinorizationBall> {
    let d = pairs[0].x.len();
    let in_ball = |x: &[f64], c: &[f64], r: f64| {
        x.iter().zip(c).zip(scales).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>()
            <= r * r
    };
    let candidates = strided(pairs, cfg.candidates);
    let mut covered = vec![false; pairs.len()];
    let mut balls = Vec::new();
    let min_members = cfg.probe_neighbours.max(1);

    for _ in 0..cfg.balls {
        let best = candidates
            .iter()
            .map(|c| {
                let count = pairs
                    .iter()
                    .zip(&covered)
                    .filter(|(p, cov)| !**cov && in_ball(&p.x, &c.x, select_radius))
                    .count();
                (count, c)
            })
            .max_by_key(|(count, _)| *count);
        let Some((count, center)) = best else { break };
        if count < min_members {
            break;
        }
        let center = center.x.clone();
        let members: Vec<&TransitionPair> =
            pairs.iter().filter(|p| in_ball(&p.x, &center, select_radius)).collect();
        let landing: Vec<&Vec<f64>> = members.iter().map(|p| &p.y).collect();
        let partner = strided(&landing, cfg.candidates)
            .into_iter()
            .max_by_key(|y| landing.iter().filter(|z| in_ball(z, y, select_radius)).count())
            .expect("center ball has members")
            .clone();
        let mut radius = select_radius;
        for (i, (lo, hi)) in bounds.iter().enumerate().take(d) {
            radius = radius.min((partner[i] - lo) / scales[i]).min((hi - partner[i]) / scales[i]);
        }
        for (p, cov) in pairs.iter().zip(covered.iter_mut()) {
            if in_ball(&p.x, &center, select_radius) {
                *cov = true;
            }
        }
        if !(radius > 0.0) {
            continue;
        }
        let members: Vec<&TransitionPair> =
            pairs.iter().filter(|p| in_ball(&p.x, &center, radius)).collect();
        if members.len() < min_members {
            continue;
        }
        let axis_points = |c: &[f64]| {
            let mut out = vec![c.to_vec()];
            for i in 0..d {
                for sign in [-1.0, 1.0] {
                    let mut y = c.to_vec();
                    y[i] += sign * radius * scales[i];
                    out.push(y);
                }
            }
            out
        };
        let tests = axis_points(&partner);
        let dist2 = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).zip(scales).map(|((x, y), s)| ((x - y) / s).powi(2)).sum::<f64>()
        };
        let mut mass_bound = f64::INFINITY;
        let mut fraction_bound = f64::INFINITY;
        for probe in axis_points(&center) {
            let mut near: Vec<(f64, &TransitionPair)> =
                members.iter().map(|p| (dist2(&p.x, &probe), *p)).collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0));
            let ys: Vec<&Vec<f64>> = near.iter().take(min_members).map(|(_, p)| &p.y).collect();
            let h = cfg.bandwidth.unwrap_or_else(|| (ys.len() as f64).powf(-1.0 / (d as f64 + 4.0)));
            let density = tests
                .iter()
                .map(|y| kde_scaled(&ys, y, scales, h))
                .fold(f64::INFINITY, f64::min);
            mass_bound = mass_bound.min(unit_ball_volume(d) * radius.powi(d as i32) * density);
            let hits = ys.iter().filter(|y| in_ball(y, &partner, radius)).count();
            fraction_bound = fraction_bound.min(hits as f64 / ys.len() as f64);
        }
        let beta = (cfg.discount * mass_bound.min(fraction_bound)).min(1.0);
        if beta > 0.0 {
            balls.push(MinorizationBall { center, partner, radius, scales: scales.to_vec(), beta });
        }
    }
    balls
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodic::kernel::SkeletonKernel;
    use crate::model::SignalSpec;

    fn ou() -> OuSkeleton {
        OuSkeleton { spec: SignalSpec::constant(1.0, 5.0, 0.2, 2.0) }
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
        let b = MinorizationBall {
            center: vec![0.0; 2],
            partner: vec![0.0; 2],
            radius: 2.0,
            scales: vec![1.0, 3.0],
            beta: 0.1,
        };
        assert!((b.volume() - std::f64::consts::PI * 12.0).abs() < 1e-12);
    }

    #[test]
    fn nu_samples_stay_in_partner_ball_and_fill_it() {
        let b = MinorizationBall {
            center: vec![0.0; 3],
            partner: vec![1.0, -2.0, 0.5],
            radius: 0.7,
            scales: vec![1.0, 10.0, 0.1],
            beta: 0.2,
        };
        let mut noise = NoiseStream::new(1, 0);
        let mut outer = 0;
        for _ in 0..5000 {
            let y = b.sample_nu(&mut noise);
            assert!(b.contains_partner(&y));
            if b.scaled_dist2(&y, &b.partner) > 0.7f64.powi(2) * 0.5f64.powf(2.0 / 3.0) {
                outer += 1;
            }
        }
        // Uniform in 3-d: the shell beyond radius r·(1/2)^{1/3} holds half the mass.
        let frac = outer as f64 / 5000.0;
        assert!((frac - 0.5).abs() < 0.03, "{frac}");
    }

    #[test]
    fn exact_ou_minorization_holds() {
        let k = ou();
        let b = ou_minorization(&k, 1.0, 0.8).unwrap();
        assert!(b.beta > 0.0 && b.beta <= 1.0);
        for i in 0..=20 {
            let x = 0.2 + 1.6 * i as f64 / 20.0;
            for j in 0..=20 {
                let y = b.partner[0] - 0.8 + 1.6 * j as f64 / 20.0;
                let p = k.density(&[x], &[y]).unwrap();
                assert!(p >= b.beta * b.nu_density(&[y]) - 1e-15);
            }
        }
    }

    #[test]
    fn beta_per_volume_never_exceeds_peak_density() {
        let k = ou();
        let peak = 1.0 / (k.sd() * (2.0 * std::f64::consts::PI).sqrt());
        for r in [2.0, 1.0, 0.5, 0.25, 0.125] {
            let b = ou_minorization(&k, 1.0, r).unwrap();
            assert!(b.beta / b.volume() <= peak);
            let half = ou_minorization(&k, 1.0, r / 2.0).unwrap();
            assert!(half.beta <= b.beta / 2.0 * (peak * b.volume() / b.beta));
        }
    }

    fn ou_pairs(n: usize) -> Vec<TransitionPair> {
        let k = ou();
        let mut noise = NoiseStream::new(9, 0);
        let mut x = vec![1.0];
        (0..n)
            .map(|_| {
                let y = k.sample(&x, &mut noise).unwrap();
                let pair = TransitionPair { x: x.clone(), y: y.clone() };
                x = y;
                pair
            })
            .collect()
    }

    #[test]
    fn kernel_estimate_is_conservative_on_ou() {
        let k = ou();
        let pairs = ou_pairs(20_000);
        let balls = find_minorization(&pairs, &MinorizationConfig::default(), &[]).unwrap();
        assert!(!balls.is_empty());
        for b in &balls {
            assert!(b.beta > 0.0 && b.beta <= 1.0);
            // Check the minorization against the true density on a grid.
            let (c, p, r, s) = (b.center[0], b.partner[0], b.radius, b.scales[0]);
            for i in 0..=10 {
                let x = c - r * s + 2.0 * r * s * i as f64 / 10.0;
                for j in 0..=10 {
                    let y = p - r * s + 2.0 * r * s * j as f64 / 10.0;
                    let dens = k.density(&[x], &[y]).unwrap();
                    assert!(dens >= b.beta * b.nu_density(&[y]), "ball {b:?} at ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn no_ball_without_data() {
        let cfg = MinorizationConfig::default();
        assert!(matches!(find_minorization(&[], &cfg, &[]), Err(Error::InsufficientData(_))));
        let few = ou_pairs(20);
        assert!(matches!(find_minorization(&few, &cfg, &[]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn partner_ball_respects_bounds() {
        let pairs: Vec<TransitionPair> = ou_pairs(5000)
            .into_iter()
            .map(|p| TransitionPair {
                x: vec![p.x[0], 0.5 + 0.01 * p.x[0]],
                y: vec![p.y[0], 0.5 + 0.01 * p.y[0]],
            })
            .collect();
        let balls =
            find_minorization(&pairs, &MinorizationConfig::default(), &[(f64::MIN, f64::MAX), (0.49, 0.51)])
                .unwrap();
        for b in balls {
            assert!(b.partner[1] - b.radius * b.scales[1] >= 0.49 - 1e-12);
            assert!(b.partner[1] + b.radius * b.scales[1] <= 0.51 + 1e-12);
        }
    }
}
