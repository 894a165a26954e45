use std::collections::BTreeMap;
use std::fmt::Write;

use anyhow::{Context, Result};
use hhlab_core::control::{
    fitted_decay_rate, horizon_for, replay_control, resting_decay_rates, synthesize_control,
};
use hhlab_core::ergodic::{
    drift_grid, find_minorization, fit_compact, fit_generator_bound, multi_start_diagnostic,
    periodic_invariance_check, regeneration_invariant_estimate, run_split_chains, skeleton_drift_check,
    transition_pairs, EstimatorConfig, HhSkeleton, InvarianceConfig, LyapunovConfig, MinorizationConfig,
    MultiStartConfig,
};
use hhlab_core::export::csv_table;
use hhlab_core::hormander::{hormander_rank_map, scan_equilibrium_curve};
use hhlab_core::model::{equilibrium_for_input, gating_equilibrium, State5};
use hhlab_core::sde::{
    envelope_excess, ou_skeleton_stationarity, simulate, simulate_classical, NoiseStream, SimConfig,
};
use serde::Serialize;

use crate::config::{RunConfig, Start, System};
use crate::plot::{line_plot, Series};
use crate::spikes::spike_times;

/// Files produced by a command, keyed by file name, and a human summary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Artifacts {
    pub files: BTreeMap<String, String>,
    pub summary: String,
}

impl Artifacts {
    fn add(&mut self, name: &str, content: String) {
        self.files.insert(name.to_string(), content);
    }

    fn manifest<T: Serialize>(&mut self, cfg: &RunConfig, command: &str, results: &T) {
        #[derive(Serialize)]
        struct Manifest<'a, T> {
            command: &'a str,
            version: &'a str,
            results: &'a T,
            config: &'a RunConfig,
        }
        let m = Manifest { command, version: env!("CARGO_PKG_VERSION"), results, config: cfg };
        self.add("manifest.toml", toml::to_string(&m).expect("manifest serializes"));
    }

    fn say(&mut self, line: impl AsRef<str>) {
        self.summary.push_str(line.as_ref());
        self.summary.push('\n');
    }
}

pub const COMMANDS: [&str; 5] = ["scan-hormander", "simulate", "control-demo", "ergodicity", "ou-validate"];

/// Runs `command` with a validated configuration.
pub fn run_command(command: &str, cfg: &RunConfig) -> Result<Artifacts> {
    cfg.validate(command)?;
    match command {
        "scan-hormander" => scan_hormander(cfg),
        "simulate" => simulate_cmd(cfg),
        "control-demo" => control_demo(cfg),
        "ergodicity" => ergodicity(cfg),
        "ou-validate" => ou_validate(cfg),
        _ => unreachable!("validated command"),
    }
}

#[derive(Serialize)]
struct ScanResults {
    roots: Vec<f64>,
    samples: usize,
    rank_nodes: usize,
    rank_full: usize,
    rank_min: usize,
    max_abs_d: f64,
}

pub fn scan_hormander(cfg: &RunConfig) -> Result<Artifacts> {
    let s = &cfg.scan_hormander;
    let spec = cfg.signal_spec()?;
    let scan = scan_equilibrium_curve(s.v_min, s.v_max, s.step).context("scanning the equilibrium curve")?;
    let mut noise = NoiseStream::new(cfg.seed, 0);
    let nodes: Vec<[f64; 4]> = if s.v_max > s.v_min {
        (0..s.rank_samples)
            .map(|_| {
                let v = s.v_min + (s.v_max - s.v_min) * noise.uniform();
                let mut g = || 0.1 + 0.8 * noise.uniform();
                [v, g(), g(), g()]
            })
            .collect()
    } else {
        Vec::new()
    };
    let ranks = hormander_rank_map(&nodes, &spec).context("computing the rank map")?;

    let mut out = Artifacts::default();
    out.add("curve.csv", csv_table(&["v", "D"], scan.samples.iter().map(|(v, d)| vec![*v, *d])));
    out.add("roots.csv", csv_table(&["root"], scan.roots.iter().map(|r| vec![*r])));
    out.add(
        "rank_map.csv",
        csv_table(
            &["v", "n", "m", "h", "D", "rank"],
            ranks.iter().map(|r| vec![r.v, r.n, r.m, r.h, r.d, r.rank as f64]),
        ),
    );
    out.add(
        "curve.svg",
        line_plot(
            "D on the equilibrium curve",
            "v [mV]",
            "D",
            &[Series { label: "D(v, n∞, m∞, h∞)", points: &scan.samples }],
        ),
    );
    let results = ScanResults {
        roots: scan.roots.clone(),
        samples: scan.samples.len(),
        rank_nodes: ranks.len(),
        rank_full: ranks.iter().filter(|r| r.rank == 5).count(),
        rank_min: ranks.iter().map(|r| r.rank).min().unwrap_or(0),
        max_abs_d: ranks.iter().map(|r| r.d.abs()).fold(0.0, f64::max),
    };
    out.say(format!("{} curve samples on [{}, {}]", results.samples, s.v_min, s.v_max));
    if scan.roots.is_empty() {
        out.say("no roots");
    }
    for r in &scan.roots {
        out.say(format!("root at v = {r:.4}"));
    }
    out.say(format!("rank 5 at {} of {} random nodes", results.rank_full, results.rank_nodes));
    out.manifest(cfg, "scan-hormander", &results);
    Ok(out)
}

#[derive(Serialize)]
struct SimulateResults {
    system: System,
    start: [f64; 5],
    steps: usize,
    spike_count: usize,
    spike_threshold: f64,
    spike_debounce: f64,
    gating_min: [f64; 3],
    gating_max: [f64; 3],
    envelope_excess: Option<f64>,
}

/// The start state described by the `[simulate]` block.
pub fn simulate_start(cfg: &RunConfig) -> Result<State5> {
    let spec = cfg.signal_spec()?;
    Ok(match &cfg.simulate.start {
        Start::State(x) => State5::from_array(*x).context("simulate.start")?,
        Start::Named(_) => match cfg.simulate.system {
            // Rest of the classical system: F∞(v) = c0.
            System::Classical => State5::resting(equilibrium_for_input(spec.c0)?, spec.c0)?,
            // Rest of the five-dimensional system: ζ = c0 and F∞(v) = 0.
            System::Stochastic => State5::resting(equilibrium_for_input(0.0)?, spec.c0)?,
        },
    })
}

pub fn simulate_cmd(cfg: &RunConfig) -> Result<Artifacts> {
    let spec = cfg.signal_spec()?;
    let sim = cfg.sim_config()?;
    let s = &cfg.simulate;
    let x0 = simulate_start(cfg)?;
    let traj = match s.system {
        System::Stochastic => simulate(&x0, &sim, &spec),
        System::Classical => simulate_classical(&x0, &sim, &spec),
    }
    .with_context(|| format!("simulating from {:?}", x0.to_array()))?;
    let v: Vec<f64> = traj.states.iter().map(|x| x.v).collect();
    let spikes = spike_times(&traj.times, &v, s.spike_threshold, s.spike_debounce);
    let range = traj.gating_range();

    let mut out = Artifacts::default();
    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .step_by(s.record_every)
        .map(|(t, x)| {
            let mut row = vec![*t];
            row.extend(x.to_array());
            row
        });
    out.add("trajectory.csv", csv_table(&["t", "v", "n", "m", "h", "zeta"], rows));
    out.add("spikes.csv", csv_table(&["t"], spikes.iter().map(|t| vec![*t])));
    let vt: Vec<(f64, f64)> = traj.times.iter().copied().zip(v.iter().copied()).collect();
    out.add("trajectory.svg", line_plot("Membrane potential", "t [ms]", "v [mV]", &[Series { label: "v", points: &vt }]));
    let results = SimulateResults {
        system: s.system,
        start: x0.to_array(),
        steps: traj.len() - 1,
        spike_count: spikes.len(),
        spike_threshold: s.spike_threshold,
        spike_debounce: s.spike_debounce,
        gating_min: [range[0].0, range[1].0, range[2].0],
        gating_max: [range[0].1, range[1].1, range[2].1],
        envelope_excess: (s.system == System::Stochastic).then(|| envelope_excess(&traj)),
    };
    out.say(format!("{} spikes over {} ms", results.spike_count, sim.t_end));
    for (name, (lo, hi)) in ["n", "m", "h"].iter().zip(range) {
        out.say(format!("{name} in [{lo:.6}, {hi:.6}]"));
    }
    out.manifest(cfg, "simulate", &results);
    Ok(out)
}

#[derive(Serialize)]
struct ControlResults {
    eps: f64,
    t0: f64,
    t_end: f64,
    distance: f64,
    gate_distance: f64,
    max_deviation: f64,
    energy: f64,
    /// Fitted decay rates of the replayed gates after the bump, and the
    /// linearized rates at rest. NaN when a gate never left the fit floor.
    decay_rates: [f64; 3],
    resting_rates: [f64; 3],
    pass: bool,
}

pub fn control_demo(cfg: &RunConfig) -> Result<Artifacts> {
    let spec = cfg.signal_spec()?;
    let c = &cfg.control;
    let x0 = State5::from_array(c.start)?;
    let t0 = horizon_for(&x0, c.eps, c.grid_dt)?;
    let t_end = match c.t_end {
        Some(t) => t,
        None => (t0.max(1.0) / (2.0 * c.grid_dt)).ceil() * 2.0 * c.grid_dt,
    };
    let path = synthesize_control(&x0, t_end, &spec, c.grid_dt, c.eps)?;
    let replay = replay_control(&path, &spec)?;
    let (nr, mr, hr) = gating_equilibrium(0.0)?;
    let decay: Vec<Option<f64>> = [(1, nr), (2, mr), (3, hr)]
        .iter()
        .map(|&(i, rest)| {
            let vals: Vec<f64> = replay.states.iter().map(|x| x[i]).collect();
            fitted_decay_rate(&replay.times, &vals, rest, 1.0, t_end, c.decay_floor)
        })
        .collect();
    let results = ControlResults {
        eps: c.eps,
        t0,
        t_end,
        distance: replay.distance,
        gate_distance: replay.gate_distance,
        max_deviation: replay.max_deviation,
        energy: path.energy(),
        decay_rates: [0, 1, 2].map(|g| decay[g].unwrap_or(f64::NAN)),
        resting_rates: resting_decay_rates(),
        pass: replay.distance < c.eps,
    };

    let mut out = Artifacts::default();
    out.add("control.csv", path.to_csv());
    out.add(
        "replay.csv",
        csv_table(
            &["t", "v", "n", "m", "h", "zeta"],
            replay.times.iter().zip(&replay.states).map(|(t, x)| {
                let mut row = vec![*t];
                row.extend(x);
                row
            }),
        ),
    );
    let design: Vec<(f64, f64)> = path.times.iter().copied().zip(path.vbar.iter().copied()).collect();
    let replayed: Vec<(f64, f64)> = replay.times.iter().zip(&replay.states).map(|(t, x)| (*t, x[0])).collect();
    out.add(
        "control.svg",
        line_plot(
            "Steering to rest",
            "t [ms]",
            "v [mV]",
            &[Series { label: "designed", points: &design }, Series { label: "replayed", points: &replayed }],
        ),
    );
    out.say(format!("horizon t0 = {t0:.4}, control interval [0, {t_end}]"));
    out.say(format!(
        "terminal distance {:.3e} to rest: {} at eps = {}",
        results.distance,
        if results.pass { "PASS" } else { "FAIL" },
        c.eps
    ));
    out.manifest(cfg, "control-demo", &results);
    Ok(out)
}

#[derive(Serialize)]
struct DriftRow {
    v: f64,
    zeta: f64,
    estimate: f64,
    standard_error: f64,
    negative: bool,
    outside: bool,
}

#[derive(Serialize)]
struct BallRow {
    center: Vec<f64>,
    partner: Vec<f64>,
    radius: f64,
    scales: Vec<f64>,
    beta: f64,
}

#[derive(Serialize)]
struct EstimateRow {
    name: &'static str,
    estimate: f64,
    ci_low: f64,
    ci_high: f64,
}

#[derive(Serialize)]
struct InvarianceRow {
    phase: f64,
    residual: f64,
    noise_floor: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ErgodicityResults {
    c1: f64,
    c2: f64,
    compact_c2: f64,
    epsilon: f64,
    drift_all_negative_outside: bool,
    drift: Vec<DriftRow>,
    transitions: usize,
    balls: Vec<BallRow>,
    regenerations: usize,
    cycles: usize,
    mean_cycle_length: f64,
    estimates: Vec<EstimateRow>,
    multi_start_clusters: Vec<Vec<usize>>,
    multi_start_vz_floor: f64,
    multi_start_gating_floor: f64,
    invariance: Vec<InvarianceRow>,
}

/// Starting points for the transition sample: potentials spread over
/// `[−20, 60]` at equilibrium gates, input levels over `c0 ± 2γ`.
fn transition_starts(cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let spec = cfg.signal_spec()?;
    let n = cfg.ergodicity.transition_starts;
    let mut noise = NoiseStream::new(cfg.seed, 1 << 40);
    (0..n)
        .map(|_| {
            let v = -20.0 + 80.0 * noise.uniform();
            let zeta = spec.c0 + 2.0 * spec.gamma * (2.0 * noise.uniform() - 1.0);
            Ok(State5::resting(v, zeta)?.to_array().to_vec())
        })
        .collect()
}

pub fn ergodicity(cfg: &RunConfig) -> Result<Artifacts> {
    let spec = cfg.signal_spec()?;
    let sim = SimConfig::new(cfg.sim.dt, 0.0, cfg.seed);
    let e = &cfg.ergodicity;
    let lcfg = LyapunovConfig::new(e.smoothing_radius);
    let kernel = HhSkeleton::new(spec.clone(), sim.dt)?;

    // Drift.
    let compact = fit_compact(&e.compact_radii, e.compact_mc, &lcfg, &sim, &spec, 1 << 41)
        .context("scanning for the compact set")?;
    let grid = drift_grid(&e.drift_v, &e.drift_zeta)?;
    let drift = skeleton_drift_check(&grid, e.drift_mc, &lcfg, &sim, &spec, 1 << 42)?;
    let generator_points: Vec<(f64, State5)> = (0..8)
        .flat_map(|k| {
            let t = spec.period * k as f64 / 8.0;
            grid.iter().map(move |x| (t, *x))
        })
        .collect();
    let bound = fit_generator_bound(&generator_points, &spec, &lcfg)?;
    let drift_rows: Vec<DriftRow> = drift
        .iter()
        .map(|d| DriftRow {
            v: d.point.v,
            zeta: d.point.zeta,
            estimate: d.estimate,
            standard_error: d.standard_error,
            negative: d.negative,
            outside: compact.outside(&d.point),
        })
        .collect();
    let all_negative = drift_rows.iter().filter(|r| r.outside).all(|r| r.negative);

    // Minorization and regeneration.
    let starts = transition_starts(cfg)?;
    let pairs = transition_pairs(&kernel, &starts, e.transition_periods, cfg.seed, 1 << 43)?;
    let mcfg = MinorizationConfig {
        balls: e.balls,
        radii: e.radii.clone(),
        bandwidth: e.bandwidth,
        discount: e.discount,
        probe_neighbours: e.probe_neighbours,
        ..Default::default()
    };
    let bounds = [(f64::MIN, f64::MAX), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (f64::MIN, f64::MAX)];
    let balls = find_minorization(&pairs, &mcfg, &bounds).with_context(|| {
        format!("{} transitions; raise ergodicity.transition_starts or transition_periods", pairs.len())
    })?;
    let ball = &balls[0];
    let chains =
        run_split_chains(&kernel, ball, &vec![ball.center.clone(); e.chains], e.chain_length, cfg.seed, 1 << 20)?;
    let est_cfg = EstimatorConfig { bootstrap: e.bootstrap, level: 0.95, min_cycles: e.min_cycles, seed: cfg.seed };
    let budget = || format!("raise ergodicity.chains or ergodicity.chain_length (now {} x {})", e.chains, e.chain_length);
    let mut estimates = Vec::new();
    let mut measure = None;
    let tests: [(&'static str, fn(&[f64]) -> f64); 4] =
        [("one", |_| 1.0), ("v", |x| x[0]), ("zeta", |x| x[4]), ("v_above_0", |x| (x[0] > 0.0) as u8 as f64)];
    let mut cycles = 0;
    let mut mean_len = 0.0;
    for (name, f) in tests {
        let est = regeneration_invariant_estimate(&chains, f, &est_cfg).with_context(budget)?;
        estimates.push(EstimateRow { name, estimate: est.estimate, ci_low: est.ci.0, ci_high: est.ci.1 });
        cycles = est.cycles;
        mean_len = est.mean_cycle_length;
        measure.get_or_insert(est.measure);
    }
    let measure = measure.expect("at least one estimate");

    // Diagnostics.
    let ms_starts: Vec<State5> =
        e.multi_starts.iter().map(|[v, z]| State5::resting(*v, *z)).collect::<hhlab_core::Result<_>>()?;
    let ms_cfg = MultiStartConfig {
        replicates: e.multi_replicates,
        threshold_factor: e.multi_threshold,
        first_stream: 1 << 44,
        ..Default::default()
    };
    let ms = multi_start_diagnostic(&ms_starts, e.multi_k_max, &sim, &spec, &ms_cfg)?;
    let inv_cfg = InvarianceConfig {
        samples: e.invariance_samples,
        replicates: e.invariance_replicates,
        tolerance_factor: e.invariance_factor,
    };
    let mut invariance = Vec::new();
    for frac in &e.phases {
        let steps = (frac * spec.period / sim.dt).round();
        let r = periodic_invariance_check(&measure, steps * sim.dt, &sim, &spec, &inv_cfg)?;
        invariance.push(InvarianceRow { phase: r.phase, residual: r.residual, noise_floor: r.noise_floor, pass: r.pass });
    }

    let results = ErgodicityResults {
        c1: bound.c1,
        c2: bound.c2,
        compact_c2: compact.c2,
        epsilon: compact.epsilon(),
        drift_all_negative_outside: all_negative,
        transitions: pairs.len(),
        balls: balls
            .iter()
            .map(|b| BallRow {
                center: b.center.clone(),
                partner: b.partner.clone(),
                radius: b.radius,
                scales: b.scales.clone(),
                beta: b.beta,
            })
            .collect(),
        regenerations: chains.iter().map(|c| c.record.count()).sum(),
        cycles,
        mean_cycle_length: mean_len,
        estimates,
        multi_start_clusters: ms.clusters.clone(),
        multi_start_vz_floor: ms.vz_floor,
        multi_start_gating_floor: ms.gating_floor,
        invariance,
        drift: drift_rows,
    };

    let mut out = Artifacts::default();
    out.add(
        "drift.csv",
        csv_table(
            &["v", "zeta", "estimate", "standard_error", "negative", "outside"],
            results.drift.iter().map(|r| {
                vec![r.v, r.zeta, r.estimate, r.standard_error, r.negative as u8 as f64, r.outside as u8 as f64]
            }),
        ),
    );
    out.add(
        "compact.csv",
        csv_table(
            &["radius", "v", "zeta", "estimate", "standard_error", "negative"],
            compact.rings.iter().flat_map(|(r, est)| {
                est.iter().map(move |d| {
                    vec![*r, d.point.v, d.point.zeta, d.estimate, d.standard_error, d.negative as u8 as f64]
                })
            }),
        ),
    );
    let mut balls_csv = String::from("ball,beta,radius,coordinate,center,partner,scale\n");
    for (k, b) in balls.iter().enumerate() {
        for i in 0..b.center.len() {
            let _ = writeln!(
                balls_csv,
                "{k},{},{},{i},{},{},{}",
                b.beta, b.radius, b.center[i], b.partner[i], b.scales[i]
            );
        }
    }
    out.add("balls.csv", balls_csv);
    let mut regs = String::from("path_id,index\n");
    for c in &chains {
        for r in &c.record.indices[1..] {
            let _ = writeln!(regs, "{},{r}", c.record.path_id);
        }
    }
    out.add("regenerations.csv", regs);
    let mut est_csv = String::from("function,estimate,ci_low,ci_high\n");
    for r in &results.estimates {
        let _ = writeln!(est_csv, "{},{},{},{}", r.name, r.estimate, r.ci_low, r.ci_high);
    }
    out.add("estimates.csv", est_csv);
    let n = ms_starts.len();
    let mut ms_csv = String::from("i,j,vz_distance,gating_distance\n");
    for i in 0..n {
        for j in (i + 1)..n {
            let _ = writeln!(ms_csv, "{i},{j},{},{}", ms.vz_distance[i][j], ms.gating_distance[i][j]);
        }
    }
    out.add("multistart.csv", ms_csv);
    out.add(
        "invariance.csv",
        csv_table(
            &["phase", "residual", "noise_floor", "pass"],
            results.invariance.iter().map(|r| vec![r.phase, r.residual, r.noise_floor, r.pass as u8 as f64]),
        ),
    );

    out.say(format!("generator bound: c1 = {:.4}, c2 = {:.4}", results.c1, results.c2));
    out.say(format!("compact set radius C2 = {}, epsilon = {:.4}", results.compact_c2, results.epsilon));
    out.say(format!(
        "drift negative at all {} grid points outside the compact set: {}",
        results.drift.iter().filter(|r| r.outside).count(),
        results.drift_all_negative_outside
    ));
    out.say(format!("{} balls from {} transitions, best beta = {:.4e}", balls.len(), pairs.len(), ball.beta));
    out.say(format!("{} regenerations, {} complete cycles", results.regenerations, cycles));
    for r in &results.estimates {
        out.say(format!("E[{}] = {:.6} [{:.6}, {:.6}]", r.name, r.estimate, r.ci_low, r.ci_high));
    }
    out.say(format!("multi-start clusters: {:?}", ms.clusters));
    for r in &results.invariance {
        out.say(format!(
            "phase {}: residual {:.3e}, floor {:.3e}: {}",
            r.phase,
            r.residual,
            r.noise_floor,
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    out.manifest(cfg, "ergodicity", &results);
    Ok(out)
}

pub fn ou_validate(cfg: &RunConfig) -> Result<Artifacts> {
    let spec = cfg.signal_spec()?;
    let o = &cfg.ou_validate;
    let r = ou_skeleton_stationarity(&spec, cfg.sim.dt, o.paths, o.periods, cfg.seed)?;
    #[derive(Serialize)]
    struct OuResults {
        paths: usize,
        periods: usize,
        target_mean: f64,
        target_variance: f64,
        sample_mean: f64,
        standard_error: f64,
        sample_variance: f64,
        mean_ok: bool,
        variance_ok: bool,
    }
    let results = OuResults {
        paths: r.paths,
        periods: r.periods,
        target_mean: r.target_mean,
        target_variance: r.target_variance,
        sample_mean: r.sample_mean,
        standard_error: r.standard_error,
        sample_variance: r.sample_variance,
        mean_ok: r.mean_ok,
        variance_ok: r.variance_ok,
    };
    let mut out = Artifacts::default();
    out.add(
        "ou.csv",
        csv_table(
            &["target_mean", "sample_mean", "standard_error", "target_variance", "sample_variance"],
            [vec![r.target_mean, r.sample_mean, r.standard_error, r.target_variance, r.sample_variance]],
        ),
    );
    out.say(format!(
        "mean {:.5} (target {:.5}, SE {:.5}): {}",
        r.sample_mean,
        r.target_mean,
        r.standard_error,
        if r.mean_ok { "PASS" } else { "FAIL" }
    ));
    out.say(format!(
        "variance {:.5} (target {:.5}): {}",
        r.sample_variance,
        r.target_variance,
        if r.variance_ok { "PASS" } else { "FAIL" }
    ));
    out.manifest(cfg, "ou-validate", &results);
    Ok(out)
}
