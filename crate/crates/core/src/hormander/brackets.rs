//! Lie brackets of the space-time vector fields `b̄` and `σ̄`.
//!
//! Coordinates are `(t, v, n, m, h, ζ)`. Two routes are provided: a
//! central-difference bracket for arbitrary fields ([`lie_bracket`]) and an
//! exact bracket algebra on field expressions ([`FieldExpr`]), which seeds a
//! fresh infinitesimal per nesting level so that iterated brackets carry no
//! truncation error.

use nalgebra::{Matrix5, SVector};
use rayon::prelude::*;

use crate::calculus::{MultiDual, Scalar};
use crate::calculus::dual::MAX_INFINITESIMALS;
use crate::model::{drift_scalar, SignalSpec, State5};

use super::determinant_d;

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// A vector field on space-time, time component first.
pub trait VectorField6 {
    fn eval(&self, p: &[f64; 6]) -> [f64; 6];
}

impl<F: Fn(&[f64; 6]) -> [f64; 6]> VectorField6 for F {
    fn eval(&self, p: &[f64; 6]) -> [f64; 6] {
        self(p)
    }
}

/// `[f, g]` at `p` with Jacobians by central differences, step
/// `1e-5 · max(1, |p_j|)` per coordinate.
pub fn lie_bracket(f: &dyn VectorField6, g: &dyn VectorField6, p: &[f64; 6]) -> [f64; 6] {
    let fp = f.eval(p);
    let gp = g.eval(p);
    let mut out = [0.0; 6];
    for j in 0..6 {
        let h = 1e-5 * p[j].abs().max(1.0);
        let mut plus = *p;
        let mut minus = *p;
        plus[j] += h;
        minus[j] -= h;
        let (fp_j, fm_j) = (f.eval(&plus), f.eval(&minus));
        let (gp_j, gm_j) = (g.eval(&plus), g.eval(&minus));
        for i in 0..6 {
            let dg = (gp_j[i] - gm_j[i]) / (2.0 * h);
            let df = (fp_j[i] - fm_j[i]) / (2.0 * h);
            out[i] += fp[j] * dg - gp[j] * df;
        }
    }
    out
}

/// Vector fields generated by the drift and diffusion under brackets.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldExpr {
    /// `b̄ = (1, b¹, …, b⁵)`.
    Drift,
    /// `σ̄ = γ√τ (0, 1, 0, 0, 0, 1)`.
    Diffusion,
    Bracket(Box<FieldExpr>, Box<FieldExpr>),
}

impl FieldExpr {
    pub fn bracket(f: FieldExpr, g: FieldExpr) -> FieldExpr {
        FieldExpr::Bracket(Box::new(f), Box::new(g))
    }

    /// `σ̄, [b̄,σ̄], [σ̄,[b̄,σ̄]], [σ̄,[σ̄,[b̄,σ̄]]], [σ̄,[σ̄,[σ̄,[b̄,σ̄]]]]`.
    pub fn basis() -> [FieldExpr; 5] {
        let first = FieldExpr::bracket(FieldExpr::Drift, FieldExpr::Diffusion);
        let second = FieldExpr::bracket(FieldExpr::Diffusion, first.clone());
        let third = FieldExpr::bracket(FieldExpr::Diffusion, second.clone());
        let fourth = FieldExpr::bracket(FieldExpr::Diffusion, third.clone());
        [FieldExpr::Diffusion, first, second, third, fourth]
    }

    /// Bracket nesting depth.
    pub fn depth(&self) -> usize {
        match self {
            FieldExpr::Drift | FieldExpr::Diffusion => 0,
            FieldExpr::Bracket(f, g) => 1 + f.depth().max(g.depth()),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, FieldExpr::Diffusion)
    }

    /// Exact value at `p`. Panics if the nesting depth exceeds the number of
    /// available infinitesimals.
    pub fn eval(&self, p: &[f64; 6], spec: &SignalSpec) -> [f64; 6] {
        assert!(
            self.depth() <= MAX_INFINITESIMALS,
            "bracket depth {} exceeds {MAX_INFINITESIMALS}",
            self.depth()
        );
        let q = p.map(MultiDual::constant);
        self.eval_dual(&q, 0, spec).map(|x| x.re())
    }

    pub fn bind<'a>(&'a self, spec: &'a SignalSpec) -> BoundField<'a> {
        BoundField { expr: self, spec }
    }

    fn eval_dual(&self, p: &[MultiDual; 6], next: usize, spec: &SignalSpec) -> [MultiDual; 6] {
        match self {
            FieldExpr::Drift => {
                let x = [p[1], p[2], p[3], p[4], p[5]];
                let b = drift_scalar(p[0], &x, spec);
                [MultiDual::constant(1.0), b[0], b[1], b[2], b[3], b[4]]
            }
            FieldExpr::Diffusion => {
                let s = MultiDual::constant(spec.noise_amplitude());
                let z = MultiDual::constant(0.0);
                [z, s, z, z, z, s]
            }
            FieldExpr::Bracket(f, g) => {
                // [f, g] = Dg·f − Df·g, each a derivative along a direction
                // seeded in the infinitesimal `next`.
                let directional = |field: &FieldExpr, dir: &[MultiDual; 6]| {
                    let shifted: [MultiDual; 6] =
                        std::array::from_fn(|j| p[j].plus_eps_times(&dir[j], next));
                    field
                        .eval_dual(&shifted, next + 1, spec)
                        .map(|x| x.eps_part(next))
                };
                let zero = [MultiDual::constant(0.0); 6];
                let dg_f = if g.is_constant() {
                    zero
                } else {
                    directional(g, &f.eval_dual(p, next, spec))
                };
                let df_g = if f.is_constant() {
                    zero
                } else {
                    directional(f, &g.eval_dual(p, next, spec))
                };
                std::array::from_fn(|i| dg_f[i] - df_g[i])
            }
        }
    }
}

/// A [`FieldExpr`] bound to a signal, usable wherever a [`VectorField6`] is.
#[derive(Debug, Clone, Copy)]
pub struct BoundField<'a> {
    expr: &'a FieldExpr,
    spec: &'a SignalSpec,
}

impl VectorField6 for BoundField<'_> {
    fn eval(&self, p: &[f64; 6]) -> [f64; 6] {
        self.expr.eval(p, self.spec)
    }
}

/// The five basis brackets at one space-time point with their determinant
/// and numeric rank.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketBasis {
    pub t: f64,
    pub point: State5,
    /// Space parts (coordinates 1..=5) of the basis fields.
    pub columns: [[f64; 5]; 5],
    /// Largest absolute time component over the columns (zero in exact arithmetic).
    pub time_component: f64,
    pub det: f64,
    /// Determinant after scaling every column to unit length.
    pub normalized_det: f64,
    pub singular_values: [f64; 5],
    pub rank: usize,
}

impl BracketBasis {
    pub fn column_norm_product(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .product()
    }
}

/// Numeric rank with singular values taken on unit-normalized columns.
fn numeric_rank(columns: &[[f64; 5]; 5]) -> ([f64; 5], usize, f64) {
    let normalized = Matrix5::from_fn(|i, j| {
        let norm = columns[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            columns[j][i] / norm
        } else {
            0.0
        }
    });
    let sv: SVector<f64, 5> = normalized.singular_values();
    let mut values = [0.0; 5];
    values.copy_from_slice(sv.as_slice());
    values.sort_by(|a, b| b.total_cmp(a));
    let largest = values[0];
    let rank = values
        .iter()
        .filter(|&&s| largest > 0.0 && s > RANK_TOLERANCE * largest)
        .count();
    (values, rank, normalized.determinant())
}

pub fn bracket_basis(t: f64, x: &State5, spec: &SignalSpec) -> BracketBasis {
    let p = [t, x.v, x.n, x.m, x.h, x.zeta];
    let mut columns = [[0.0; 5]; 5];
    let mut time_component = 0.0f64;
    for (col, field) in columns.iter_mut().zip(FieldExpr::basis()) {
        let value = field.eval(&p, spec);
        time_component = time_component.max(value[0].abs());
        col.copy_from_slice(&value[1..]);
    }
    let det = Matrix5::from_fn(|i, j| columns[j][i]).determinant();
    let (singular_values, rank, normalized_det) = numeric_rank(&columns);
    BracketBasis {
        t,
        point: *x,
        columns,
        time_component,
        det,
        normalized_det,
        singular_values,
        rank,
    }
}

/// One node of a rank map over `(v, n, m, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankNode {
    pub v: f64,
    pub n: f64,
    pub m: f64,
    pub h: f64,
    pub d: f64,
    pub rank: usize,
}

/// Rank of the bracket basis (at `t = 0`, `ζ = 0`) and the determinant
/// criterion at every node, in input order.
pub fn hormander_rank_map(nodes: &[[f64; 4]], spec: &SignalSpec) -> crate::Result<Vec<RankNode>> {
    nodes
        .par_iter()
        .map(|&[v, n, m, h]| {
            let state = State5::new(v, n, m, h, 0.0)?;
            let basis = bracket_basis(0.0, &state, spec);
            Ok(RankNode { v, n, m, h, d: determinant_d(v, n, m, h)?, rank: basis.rank })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::gating_drift_derivatives;
    use crate::model::{gating_equilibrium, ionic_current_slope};
    use rand::{Rng, SeedableRng};

    fn spec() -> SignalSpec {
        SignalSpec {
            period: 15.0,
            c0: 2.0,
            harmonics: vec![(1.0, 0.5)],
            tau: 0.7,
            gamma: 1.4,
        }
    }

    fn random_point(rng: &mut impl Rng) -> [f64; 6] {
        [
            rng.random_range(0.0..15.0),
            rng.random_range(-40.0..60.0),
            rng.random_range(0.05..0.95),
            rng.random_range(0.05..0.95),
            rng.random_range(0.05..0.95),
            rng.random_range(-10.0..10.0),
        ]
    }

    #[test]
    fn diffusion_commutes_with_itself() {
        let s = spec();
        let sigma = FieldExpr::Diffusion;
        let p = [1.0, 2.0, 0.3, 0.4, 0.5, -1.0];
        let fd = lie_bracket(&sigma.bind(&s), &sigma.bind(&s), &p);
        assert_eq!(fd, [0.0; 6]);
        let exact = FieldExpr::bracket(FieldExpr::Diffusion, FieldExpr::Diffusion).eval(&p, &s);
        assert_eq!(exact, [0.0; 6]);
    }

    #[test]
    fn exact_and_finite_difference_brackets_agree() {
        let s = spec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let drift = FieldExpr::Drift;
        let sigma = FieldExpr::Diffusion;
        let first = FieldExpr::bracket(FieldExpr::Drift, FieldExpr::Diffusion);
        for _ in 0..50 {
            let p = random_point(&mut rng);
            for (f, g) in [(&drift, &sigma), (&sigma, &first), (&drift, &first)] {
                let fd = lie_bracket(&f.bind(&s), &g.bind(&s), &p);
                let exact = FieldExpr::bracket(f.clone(), g.clone()).eval(&p, &s);
                let scale = exact.iter().fold(1.0f64, |a, x| a.max(x.abs()));
                for i in 0..6 {
                    assert!((fd[i] - exact[i]).abs() < 1e-5 * scale, "{i}: {fd:?} vs {exact:?}");
                }
            }
        }
    }

    #[test]
    fn antisymmetry() {
        let s = spec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let fields = [
            FieldExpr::Drift,
            FieldExpr::Diffusion,
            FieldExpr::bracket(FieldExpr::Drift, FieldExpr::Diffusion),
        ];
        for _ in 0..50 {
            let p = random_point(&mut rng);
            for f in &fields {
                for g in &fields {
                    let fg = lie_bracket(&f.bind(&s), &g.bind(&s), &p);
                    let gf = lie_bracket(&g.bind(&s), &f.bind(&s), &p);
                    for i in 0..6 {
                        assert!((fg[i] + gf[i]).abs() < 1e-10 * (1.0 + fg[i].abs()));
                    }
                    let efg = FieldExpr::bracket(f.clone(), g.clone()).eval(&p, &s);
                    let egf = FieldExpr::bracket(g.clone(), f.clone()).eval(&p, &s);
                    for i in 0..6 {
                        assert!((efg[i] + egf[i]).abs() < 1e-10 * (1.0 + efg[i].abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn jacobi_identity() {
        let s = spec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let b = FieldExpr::Drift;
        let sg = FieldExpr::Diffusion;
        let bs = FieldExpr::bracket(FieldExpr::Drift, FieldExpr::Diffusion);
        let br = |x: &FieldExpr, y: &FieldExpr| FieldExpr::bracket(x.clone(), y.clone());
        for _ in 0..20 {
            let p = random_point(&mut rng);
            let (f, g, h) = (&b, &sg, &bs);
            let terms = [br(f, &br(g, h)), br(g, &br(h, f)), br(h, &br(f, g))];
            let vals: Vec<[f64; 6]> = terms.iter().map(|e| e.eval(&p, &s)).collect();
            let scale = vals.iter().flatten().fold(1.0f64, |a, x| a.max(x.abs()));
            for i in 0..6 {
                let residual = vals[0][i] + vals[1][i] + vals[2][i];
                assert!(residual.abs() < 1e-3 * scale, "residual {residual}");
            }
            // The finite-difference route on top of exact inner brackets.
            let fd: Vec<[f64; 6]> = [(f, br(g, h)), (g, br(h, f)), (h, br(f, g))]
                .iter()
                .map(|(x, y)| lie_bracket(&x.bind(&s), &y.bind(&s), &p))
                .collect();
            for i in 0..6 {
                let residual = fd[0][i] + fd[1][i] + fd[2][i];
                assert!(residual.abs() < 1e-3 * scale, "fd residual {residual}");
            }
        }
    }

    #[test]
    fn basis_time_components_vanish_and_det_factorizes() {
        let s = spec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let kappa = s.gamma.powi(11) * s.tau.powf(5.5);
        for _ in 0..50 {
            let p = random_point(&mut rng);
            let x = State5::new(p[1], p[2], p[3], p[4], p[5]).unwrap();
            let basis = bracket_basis(p[0], &x, &s);
            assert_eq!(basis.time_component, 0.0);
            let d = determinant_d(x.v, x.n, x.m, x.h).unwrap();
            let expected = -kappa * ionic_current_slope(x.n, x.m, x.h) * d;
            assert!(
                (basis.det - expected).abs() <= 1e-8 * expected.abs().max(1e-300),
                "{} vs {expected}",
                basis.det
            );
        }
    }

    #[test]
    fn rank_full_at_resting_point() {
        let s = spec();
        let (n, m, h) = gating_equilibrium(0.0).unwrap();
        let x = State5::new(0.0, n, m, h, 0.0).unwrap();
        assert_eq!(bracket_basis(0.0, &x, &s).rank, 5);
    }

    #[test]
    fn rank_invariant_in_time_and_input() {
        let s = spec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        let base = State5::new(-5.0, 0.4, 0.3, 0.6, 0.0).unwrap();
        let reference = bracket_basis(0.0, &base, &s);
        for _ in 0..10 {
            let t = rng.random_range(0.0..15.0);
            let z = rng.random_range(-20.0..20.0);
            let b = bracket_basis(t, &State5 { zeta: z, ..base }, &s);
            assert_eq!(b.rank, reference.rank);
            assert!((b.det - reference.det).abs() <= 1e-10 * reference.det.abs());
        }
    }

    #[test]
    fn first_column_matches_closed_form() {
        let s = spec();
        let x = State5::new(7.0, 0.2, 0.8, 0.3, 1.0).unwrap();
        let basis = bracket_basis(3.0, &x, &s);
        let d = gating_drift_derivatives(x.v, x.n, x.m, x.h, 1).unwrap();
        let a = s.noise_amplitude();
        let slope = ionic_current_slope(x.n, x.m, x.h);
        let expected = [
            a * slope + s.gamma * s.tau.powf(1.5),
            -a * d.n[1],
            -a * d.m[1],
            -a * d.h[1],
            s.gamma * s.tau.powf(1.5),
        ];
        for i in 0..5 {
            assert!((basis.columns[1][i] - expected[i]).abs() < 1e-12 * (1.0 + expected[i].abs()));
        }
    }

    #[test]
    fn empty_rank_map() {
        assert!(hormander_rank_map(&[], &spec()).unwrap().is_empty());
    }
}
