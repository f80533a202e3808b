use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, PathSpec, Scheme};
use super::report::{Comparison, ExperimentReport, Series, Verdict};
use crate::characteristics::{small_time_horizon, CharacteristicContext};
use crate::domain::{l1_norm, solve_phi, CoefficientSet, Field, Grid};
use crate::error::{Error, Result};
use crate::kinetic::{self, defect_measures, XiGrid};
use crate::paths::{FbmGenerator, SamplePath};
use crate::solver::{self, chain_rule_defect, energy_report, SolverConfig, Trajectory};

/// Extra path length beyond `t_final`.
const PATH_MARGIN: f64 = 1.0;

fn path_steps(horizon: f64, dt: f64) -> usize {
    (horizon / dt - 1e-9).ceil().max(1.0) as usize
}

/// Produces driving paths for a config, one per seed.
enum PathSource {
    Zero { channels: usize, steps: usize, dt: f64 },
    Fbm { generator: FbmGenerator, channels: usize },
    Fixed(SamplePath),
}

impl PathSource {
    fn new(cfg: &ExperimentConfig, path_dt: f64) -> Result<Self> {
        let channels = cfg.coefficients.len();
        let horizon = cfg.t_final + PATH_MARGIN;
        Ok(match &cfg.path {
            PathSpec::Zero => PathSource::Zero {
                channels,
                steps: path_steps(horizon, path_dt),
                dt: path_dt,
            },
            PathSpec::Fbm { hurst, .. } => PathSource::Fbm {
                generator: FbmGenerator::new(*hurst, path_steps(horizon, path_dt), path_dt)?,
                channels,
            },
            PathSpec::Csv { file } => {
                let p = SamplePath::read_csv(file)?;
                if p.n_channels() != channels {
                    return Err(Error::param(format!(
                        "{} has {} channels but {} coefficients are configured",
                        file.display(),
                        p.n_channels(),
                        channels
                    )));
                }
                if p.horizon() < cfg.t_final {
                    return Err(Error::param(format!(
                        "{} ends at t = {} before t_final = {}",
                        file.display(),
                        p.horizon(),
                        cfg.t_final
                    )));
                }
                PathSource::Fixed(p)
            }
        })
    }

    fn sample(&self, seed: u64) -> Result<SamplePath> {
        match self {
            PathSource::Zero { channels, steps, dt } => SamplePath::zero(*channels, *steps, *dt),
            PathSource::Fbm { generator, channels } => Ok(generator.sample(*channels, seed)),
            PathSource::Fixed(p) => Ok(p.clone()),
        }
    }
}

/// Seeds used by the config; empty when the path is not random.
fn seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    match cfg.path {
        PathSpec::Fbm { seed, .. } => (0..cfg.n_paths as u64).map(|i| seed + i).collect(),
        _ => Vec::new(),
    }
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    seeds(cfg).first().copied().unwrap_or(0)
}

fn noise_free(cfg: &ExperimentConfig) -> bool {
    matches!(cfg.path, PathSpec::Zero) || cfg.coefficients.iter().all(|k| k.is_zero())
}

fn context(cfg: &ExperimentConfig, grid: &Grid, path: SamplePath) -> Result<CharacteristicContext> {
    CharacteristicContext::raw(CoefficientSet::new(grid, cfg.coefficients.clone()), path)
}

fn integrate(
    scheme: Scheme,
    u0: &Field,
    t_final: f64,
    solver: &SolverConfig,
    ctx: &CharacteristicContext,
) -> Result<Trajectory> {
    match scheme {
        Scheme::Direct => solver::solve(u0, t_final, solver, ctx),
        Scheme::Transformed => solver::solve_transformed(u0, t_final, solver, ctx),
    }
}

fn new_report(cfg: &ExperimentConfig, kind: ExperimentKind) -> ExperimentReport {
    let mut echo = cfg.echo().clone();
    echo.insert("experiment".into(), kind.to_string());
    ExperimentReport::new(kind.name(), echo, seeds(cfg))
}

/// `a / b`, with `0 / 0 = 0`.
fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn nonnegative_field(cfg: &ExperimentConfig, grid: &Grid, what: &str) -> Result<Field> {
    let u = cfg.initial.field(grid, cfg.solver.m)?;
    if u.min() < 0.0 {
        return Err(Error::Precondition(format!(
            "{what} needs nonnegative initial data; min u0 = {:e}",
            u.min()
        )));
    }
    Ok(u)
}

/// Runs `kind` on a pool of `workers` threads (0 picks the default).
pub fn run_experiment(cfg: &ExperimentConfig, kind: ExperimentKind, workers: usize) -> Result<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match kind {
        ExperimentKind::Solve => run_solve(cfg),
        ExperimentKind::Contraction => run_contraction(cfg),
        ExperimentKind::Convergence => run_convergence(cfg),
        ExperimentKind::Cocycle => run_cocycle(cfg),
        ExperimentKind::Positivity => run_positivity(cfg),
        ExperimentKind::Diagnose => run_diagnose(cfg),
    })
}

pub fn run_solve(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_solve_with_trajectory(cfg).map(|(r, _)| r)
}

/// Single run; also returns the trajectory for export.
pub fn run_solve_with_trajectory(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Trajectory)> {
    let grid = cfg.grid();
    let u0 = cfg.initial.field(&grid, cfg.solver.m)?;
    let path = PathSource::new(cfg, cfg.path_dt)?.sample(first_seed(cfg))?;
    let ctx = context(cfg, &grid, path)?;
    let traj = integrate(cfg.scheme, &u0, cfg.t_final, &cfg.solver, &ctx)?;
    let mut report = new_report(cfg, ExperimentKind::Solve);
    let mut series = Series::new(&["t", "l1", "min", "max", "newton_iterations", "newton_residual"]);
    for n in 0..traj.len() {
        let u = traj.physical_state(n);
        let (iters, res) = match n {
            0 => (0.0, 0.0),
            _ => {
                let d = traj.diagnostics()[n - 1];
                (d.newton_iterations as f64, d.residual)
            }
        };
        series.push(vec![traj.times()[n], l1_norm(&grid, u.values()), u.min(), u.max(), iters, res]);
    }
    let energy = energy_report(&traj);
    report.metric("steps", (traj.len() - 1) as f64);
    report.metric("min_value", traj.min_value());
    report.metric("sup_abs", traj.sup_abs());
    report.metric("final_l1", l1_norm(&grid, traj.final_state().values()));
    report.metric("sup_l2_squared", energy.sup_l2_squared);
    report.metric("porous_dissipation", energy.porous_dissipation);
    report.metric("viscous_dissipation", energy.viscous_dissipation);
    if let Some(r) = energy.identity_residual {
        report.metric("energy_identity_residual", r);
    }
    let max_iter = traj.diagnostics().iter().map(|d| d.newton_iterations).max().unwrap_or(0);
    report.metric("max_newton_iterations", max_iter as f64);
    report.add_series("trajectory", series);
    Ok((report, traj))
}

struct ContractionLevel {
    times: Vec<f64>,
    weighted: Vec<f64>,
    plain: Vec<f64>,
    t_star: f64,
    max_increase: f64,
    c_obs: f64,
}

fn contraction_level(cfg: &ExperimentConfig, path: &SamplePath) -> Result<ContractionLevel> {
    let grid = cfg.grid();
    let second = cfg.initial_second.as_ref().ok_or_else(|| Error::Config {
        line: None,
        message: "contraction needs `initial_second`".into(),
    })?;
    let u1 = nonnegative_field(cfg, &grid, "contraction")?;
    let u2 = second.field(&grid, cfg.solver.m)?;
    if u2.min() < 0.0 {
        return Err(Error::Precondition(format!(
            "contraction needs nonnegative initial data; min of the second datum = {:e}",
            u2.min()
        )));
    }
    let ctx = context(cfg, &grid, path.clone())?;
    let (a, b) = rayon::join(
        || integrate(cfg.scheme, &u1, cfg.t_final, &cfg.solver, &ctx).map_err(|e| e.in_run("first trajectory")),
        || integrate(cfg.scheme, &u2, cfg.t_final, &cfg.solver, &ctx).map_err(|e| e.in_run("second trajectory")),
    );
    let (a, b) = (a?, b?);
    let phi = solve_phi(&grid)?;
    let weights_ctx = a.context();
    let mut weighted = Vec::with_capacity(a.len());
    let mut plain = Vec::with_capacity(a.len());
    for n in 0..a.len() {
        let diff = a.physical_state(n).sub(&b.physical_state(n))?.mul(&phi)?;
        let v = weights_ctx.weight_field(0.0, a.times()[n])?;
        weighted.push(l1_norm(&grid, diff.mul(&v)?.values()));
        plain.push(l1_norm(&grid, diff.values()));
    }
    let dt = cfg.solver.dt;
    let t_star = small_time_horizon(weights_ctx, &phi, cfg.t_final, dt)?;
    let times = a.times().to_vec();
    let max_increase = (0..a.len() - 1)
        .filter(|&n| times[n + 1] <= t_star + 1e-9 * dt)
        .map(|n| weighted[n + 1] - weighted[n])
        .fold(0.0, f64::max);
    let sup = plain.iter().copied().fold(0.0, f64::max);
    Ok(ContractionLevel {
        c_obs: ratio(sup, plain[0]),
        times,
        weighted,
        plain,
        t_star,
        max_increase,
    })
}

fn distance_series(level: &ContractionLevel) -> Series {
    let mut s = Series::new(&["t", "weighted_distance", "distance", "within_t_star"]);
    for n in 0..level.times.len() {
        let inside = (level.times[n] <= level.t_star + 1e-12) as u8 as f64;
        s.push(vec![level.times[n], level.weighted[n], level.plain[n], inside]);
    }
    s
}

/// Weighted L¹ distance of two runs sharing one path.
pub fn run_contraction(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let path = PathSource::new(cfg, cfg.path_dt)?.sample(first_seed(cfg))?;
    let base = contraction_level(cfg, &path)?;
    let mut report = new_report(cfg, ExperimentKind::Contraction);
    let tol = 10.0 * cfg.solver.newton_tol;
    report.metric("t_star", base.t_star);
    report.metric("c_obs", base.c_obs);
    report.metric("max_weighted_increase", base.max_increase);
    report.verdict(Verdict::new(
        "weighted_distance_nonincreasing_on_t_star",
        base.max_increase,
        Comparison::LessEq,
        tol,
    ));
    report.verdict(Verdict::new("c_obs_finite", base.c_obs, Comparison::LessEq, f64::MAX));
    report.add_series("distance", distance_series(&base));
    if cfg.refine {
        let fine = contraction_level(&cfg.refined(), &path).map_err(|e| e.in_run("refined level"))?;
        let drift = ratio((fine.c_obs - base.c_obs).abs(), base.c_obs);
        report.metric("c_obs_refined", fine.c_obs);
        report.metric("t_star_refined", fine.t_star);
        report.metric("c_obs_drift", drift);
        report.verdict(Verdict::new(
            "refined_weighted_distance_nonincreasing_on_t_star",
            fine.max_increase,
            Comparison::LessEq,
            tol,
        ));
        report.verdict(Verdict::new("c_obs_refinement_drift", drift, Comparison::LessEq, 0.1));
        report.add_series("distance_refined", distance_series(&fine));
    }
    Ok(report)
}

/// Path spacing fine enough to mollify at `eps_min`.
fn path_dt_for(cfg: &ExperimentConfig, eps_min: f64) -> f64 {
    cfg.path_dt.min(eps_min / 4.0)
}

/// Cauchy differences along `ε_k = ε₀ 2^{-k}`, `η_k = η₀ 2^{-k}`, averaged over the configured paths.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let k_max = cfg.levels.unwrap_or(4);
    if k_max < 3 {
        return Err(Error::param(format!("convergence needs levels ≥ 3, got {k_max}")));
    }
    let grid = cfg.grid();
    let u0 = cfg.initial.field(&grid, cfg.solver.m)?;
    let eps_min = cfg.solver.epsilon / (1u64 << k_max) as f64;
    let source = PathSource::new(cfg, path_dt_for(cfg, eps_min))?;
    let paths = sample_all(cfg, &source)?;
    let jobs: Vec<(usize, usize)> = (0..paths.len())
        .flat_map(|p| (0..=k_max).map(move |k| (p, k)))
        .collect();
    let runs: Vec<Trajectory> = jobs
        .par_iter()
        .map(|&(p, k)| {
            let scale = (1u64 << k) as f64;
            let mut s = cfg.solver.clone();
            s.epsilon /= scale;
            s.eta /= scale;
            let ctx = context(cfg, &grid, paths[p].clone())?;
            integrate(cfg.scheme, &u0, cfg.t_final, &s, &ctx)
                .map_err(|e| e.in_run(format!("path {p}, level k = {k}")))
        })
        .collect::<Result<_>>()?;
    let dt = cfg.solver.dt;
    let per_path = k_max + 1;
    let cauchy_of = |a: &Trajectory, b: &Trajectory| -> f64 {
        (1..a.len())
            .map(|n| {
                let d = a.physical_state(n).sub(&b.physical_state(n)).expect("same grid");
                dt * l1_norm(&grid, d.values())
            })
            .sum()
    };
    let mut report = new_report(cfg, ExperimentKind::Convergence);
    let mut raw = Series::new(&["path", "k", "e_k"]);
    let mut e = vec![0.0; k_max];
    for p in 0..paths.len() {
        for k in 0..k_max {
            let v = cauchy_of(&runs[p * per_path + k], &runs[p * per_path + k + 1]);
            raw.push(vec![p as f64, k as f64, v]);
            e[k] += v / paths.len() as f64;
        }
    }
    let mut cauchy = Series::new(&["k", "e_k"]);
    for (k, v) in e.iter().enumerate() {
        cauchy.push(vec![k as f64, *v]);
        report.metric(&format!("e_{k}"), *v);
    }
    let mut per_run = Series::new(&[
        "path",
        "k",
        "epsilon",
        "eta",
        "sup_l2_squared",
        "porous_dissipation",
        "viscous_dissipation",
        "min_value",
    ]);
    for (&(p, k), t) in jobs.iter().zip(&runs) {
        let en = energy_report(t);
        per_run.push(vec![
            p as f64,
            k as f64,
            t.config().epsilon,
            t.config().eta,
            en.sup_l2_squared,
            en.porous_dissipation,
            en.viscous_dissipation,
            t.min_value(),
        ]);
    }
    let growth = (1..k_max - 1).map(|k| ratio(e[k + 1], e[k])).fold(0.0, f64::max);
    let last = ratio(e[k_max - 1], e[1]);
    report.verdict(Verdict::new("cauchy_nonincreasing_from_k1", growth, Comparison::LessEq, 1.0));
    report.verdict(Verdict::new("cauchy_last_over_first", last, Comparison::LessEq, 0.5));
    report.add_series("cauchy", cauchy);
    report.add_series("cauchy_paths", raw);
    report.add_series("runs", per_run);
    Ok(report)
}

/// One path per seed, or the single fixed path.
fn sample_all(cfg: &ExperimentConfig, source: &PathSource) -> Result<Vec<SamplePath>> {
    let list = match seeds(cfg) {
        s if s.is_empty() => vec![0],
        s => s,
    };
    list.par_iter().map(|&s| source.sample(s)).collect()
}

/// Restart mismatch `‖A(T) - B(T - s)‖_{L¹}` for one path and one level.
fn restart_mismatch(
    cfg: &ExperimentConfig,
    grid: &Grid,
    u0: &Field,
    path: &SamplePath,
    solver: &SolverConfig,
    split: f64,
) -> Result<f64> {
    let ctx = context(cfg, grid, path.clone())?;
    let whole = integrate(cfg.scheme, u0, cfg.t_final, solver, &ctx)?;
    let head = integrate(cfg.scheme, u0, split, solver, &ctx)?;
    let shifted = context(cfg, grid, path.shifted(split)?)?;
    let tail = integrate(cfg.scheme, &head.final_state(), cfg.t_final - split, solver, &shifted)?;
    let d = whole.final_state().sub(&tail.final_state())?;
    Ok(l1_norm(grid, d.values()))
}

/// Restart with the shifted path, over simultaneous `(dt, ε)` halvings.
pub fn run_cocycle(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let split = cfg
        .split_time
        .ok_or_else(|| Error::param("cocycle needs `split_time`"))?;
    let dt = cfg.solver.dt;
    let n = (split / dt).round();
    if !(split > 0.0 && split < cfg.t_final) || (n * dt - split).abs() > 1e-9 * split.max(dt) {
        return Err(Error::param(format!(
            "split_time {split} must lie strictly inside (0, {}) on the step grid of {dt}",
            cfg.t_final
        )));
    }
    let levels = cfg.levels.unwrap_or(3);
    let grid = cfg.grid();
    let u0 = cfg.initial.field(&grid, cfg.solver.m)?;
    let eps_min = cfg.solver.epsilon / (1u64 << levels) as f64;
    let source = PathSource::new(cfg, path_dt_for(cfg, eps_min))?;
    let paths = sample_all(cfg, &source)?;
    let jobs: Vec<(usize, usize)> = (0..paths.len())
        .flat_map(|p| (0..=levels).map(move |l| (p, l)))
        .collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(p, l)| {
            let scale = (1u64 << l) as f64;
            let mut s = cfg.solver.clone();
            s.dt /= scale;
            s.epsilon /= scale;
            let m = restart_mismatch(cfg, &grid, &u0, &paths[p], &s, split)
                .map_err(|e| e.in_run(format!("seed index {p}, level {l}")))?;
            let omega = paths[p].modulus_of_continuity(s.epsilon, cfg.t_final + PATH_MARGIN)?;
            Ok((m, omega))
        })
        .collect::<Result<_>>()?;
    let mut report = new_report(cfg, ExperimentKind::Cocycle);
    let mut raw = Series::new(&["path", "level", "mismatch", "modulus"]);
    for (&(p, l), &(m, w)) in jobs.iter().zip(&results) {
        raw.push(vec![p as f64, l as f64, m, w]);
    }
    let mut summary = Series::new(&["level", "dt", "epsilon", "mismatch_mean", "mismatch_max", "modulus_mean"]);
    let mut means = Vec::new();
    for l in 0..=levels {
        let at: Vec<(f64, f64)> = jobs
            .iter()
            .zip(&results)
            .filter(|((_, ll), _)| *ll == l)
            .map(|(_, r)| *r)
            .collect();
        let count = at.len() as f64;
        let mean = at.iter().map(|r| r.0).sum::<f64>() / count;
        let max = at.iter().map(|r| r.0).fold(0.0, f64::max);
        let omega = at.iter().map(|r| r.1).sum::<f64>() / count;
        let scale = (1u64 << l) as f64;
        summary.push(vec![l as f64, dt / scale, cfg.solver.epsilon / scale, mean, max, omega]);
        report.metric(&format!("mismatch_mean_{l}"), mean);
        means.push(mean);
    }
    if noise_free(cfg) {
        let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
        report.verdict(Verdict::new(
            "restart_mismatch",
            worst,
            Comparison::LessEq,
            cfg.solver.newton_tol,
        ));
    } else {
        let factor = means
            .windows(2)
            .map(|w| w[0] / w[1])
            .fold(f64::INFINITY, f64::min);
        report.metric("min_halving_factor", factor);
        report.verdict(Verdict::new("mismatch_halving_factor", factor, Comparison::GreaterEq, 1.5));
    }
    report.add_series("levels", summary);
    report.add_series("mismatch", raw);
    Ok(report)
}

/// Minimum over all nodes and times, for every configured path.
pub fn run_positivity(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let grid = cfg.grid();
    let u0 = nonnegative_field(cfg, &grid, "positivity")?;
    let phi = solve_phi(&grid)?;
    let source = PathSource::new(cfg, cfg.path_dt)?;
    let seed_list = match seeds(cfg) {
        s if s.is_empty() => vec![0],
        s => s,
    };
    let runs: Vec<(Trajectory, Vec<f64>)> = seed_list
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let ctx = context(cfg, &grid, source.sample(seed)?)?;
            let t = integrate(cfg.scheme, &u0, cfg.t_final, &cfg.solver, &ctx)
                .map_err(|e| e.in_run(format!("path {i}")))?;
            let weighted = (0..t.len())
                .map(|n| Ok(l1_norm(&grid, t.physical_state(n).mul(&phi)?.values())))
                .collect::<Result<Vec<f64>>>()?;
            Ok((t, weighted))
        })
        .collect::<Result<_>>()?;
    let mut report = new_report(cfg, ExperimentKind::Positivity);
    let mut per_path = Series::new(&["path", "min_value", "c_obs"]);
    let mut global_min = f64::INFINITY;
    let mut c_max: f64 = 0.0;
    for (i, (t, w)) in runs.iter().enumerate() {
        let min = t.min_value();
        let c = ratio(w.iter().copied().fold(0.0, f64::max), w[0]);
        per_path.push(vec![i as f64, min, c]);
        global_min = global_min.min(min);
        c_max = c_max.max(c);
    }
    let (first, w) = &runs[0];
    let mut traj = Series::new(&["t", "min", "weighted_l1"]);
    for n in 0..first.len() {
        traj.push(vec![first.times()[n], first.physical_state(n).min(), w[n]]);
    }
    report.metric("min_value", global_min);
    report.metric("c_obs", c_max);
    report.verdict(Verdict::new(
        "min_value",
        global_min,
        Comparison::GreaterEq,
        -10.0 * cfg.solver.newton_tol,
    ));
    report.add_series("paths", per_path);
    report.add_series("trajectory", traj);
    Ok(report)
}

struct Diagnostics {
    singular: f64,
    log: Option<f64>,
    transport: Option<f64>,
    ibp: Option<f64>,
    identity: Option<f64>,
    dxi: f64,
    xi_max: f64,
    chain_defect: f64,
    defects: Series,
}

fn diagnose_level(cfg: &ExperimentConfig, path: &SamplePath) -> Result<Diagnostics> {
    let grid = cfg.grid();
    let u0 = cfg.initial.field(&grid, cfg.solver.m)?;
    let ctx = context(cfg, &grid, path.clone())?;
    let traj = integrate(cfg.scheme, &u0, cfg.t_final, &cfg.solver, &ctx)?;
    let xi = XiGrid::for_trajectory(&traj, cfg.n_xi)?;
    let states = traj.physical_states();
    let rows: Vec<Vec<f64>> = states
        .par_iter()
        .enumerate()
        .map(|(n, u)| {
            let snap = defect_measures(u, traj.config(), &xi)?;
            Ok(vec![
                traj.times()[n],
                l1_norm(&grid, u.values()),
                snap.total_p(),
                snap.total_q(),
                snap.signed_chi_mass(),
            ])
        })
        .collect::<Result<_>>()?;
    let mut defects = Series::new(&["t", "l1", "total_p", "total_q", "signed_chi_mass"]);
    rows.into_iter().for_each(|r| defects.push(r));
    let singular = kinetic::singular_moment(&traj, cfg.delta, &xi)?;
    let nonneg = u0.min() >= 0.0;
    let log = match &cfg.psi {
        Some(psi) if nonneg => {
            let field = Field::from_fn(&grid, |x| psi.spatial(x).0);
            Some(kinetic::log_moment(&traj, &field, &xi)?)
        }
        _ => None,
    };
    let transport = match &cfg.rho {
        Some(rho) => Some(kinetic::transport_residual(&traj, rho, 0.0, traj.times()[traj.len() - 1], &xi)?),
        None => None,
    };
    let ibp = match &cfg.psi {
        Some(psi) => Some(kinetic::ibp_residual(&traj, psi, &xi)?),
        None => None,
    };
    let energy = energy_report(&traj);
    Ok(Diagnostics {
        singular,
        log,
        transport,
        ibp,
        identity: energy.identity_residual,
        dxi: xi.dxi(),
        xi_max: xi.xi_max(),
        chain_defect: chain_rule_defect(&traj.final_state(), cfg.solver.m, cfg.solver.power_floor),
        defects,
    })
}

/// Kinetic diagnostics of one run, optionally compared with one refinement.
pub fn run_diagnose(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let path = PathSource::new(cfg, cfg.path_dt)?.sample(first_seed(cfg))?;
    let coarse = diagnose_level(cfg, &path)?;
    let mut report = new_report(cfg, ExperimentKind::Diagnose);
    let put = |report: &mut ExperimentReport, d: &Diagnostics, suffix: &str| {
        report.metric(&format!("dxi{suffix}"), d.dxi);
        report.metric(&format!("xi_max{suffix}"), d.xi_max);
        report.metric(&format!("singular_moment{suffix}"), d.singular);
        report.metric(&format!("chain_rule_defect{suffix}"), d.chain_defect);
        for (name, v) in [
            ("log_moment", d.log),
            ("transport_residual", d.transport),
            ("ibp_residual", d.ibp),
            ("energy_identity_residual", d.identity),
        ] {
            if let Some(v) = v {
                report.metric(&format!("{name}{suffix}"), v);
            }
        }
    };
    put(&mut report, &coarse, "");
    report.metric("n_xi", cfg.n_xi as f64);
    report.add_series("defects", coarse.defects.clone());
    if cfg.refine {
        let rcfg = cfg.refined();
        let fine = diagnose_level(&rcfg, &path).map_err(|e| e.in_run("refined level"))?;
        put(&mut report, &fine, "_refined");
        report.metric("n_xi_refined", rcfg.n_xi as f64);
        let variation = |a: f64, b: f64| ratio((b - a).abs(), a.abs());
        report.verdict(Verdict::new(
            "singular_moment_variation",
            variation(coarse.singular, fine.singular),
            Comparison::LessEq,
            0.15,
        ));
        if let (Some(a), Some(b)) = (coarse.log, fine.log) {
            report.verdict(Verdict::new("log_moment_variation", variation(a, b), Comparison::LessEq, 0.15));
        }
        for (name, a, b) in [
            ("transport_residual_ratio", coarse.transport, fine.transport),
            ("ibp_residual_ratio", coarse.ibp, fine.ibp),
            ("energy_identity_ratio", coarse.identity, fine.identity),
        ] {
            if let (Some(a), Some(b)) = (a, b) {
                report.verdict(Verdict::new(name, a / b, Comparison::GreaterEq, 1.5));
            }
        }
        report.add_series("defects_refined", fine.defects);
    }
    Ok(report)
}
