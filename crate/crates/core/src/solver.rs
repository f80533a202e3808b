//! Implicit monotone finite-difference scheme for the regularized porous-medium equation
//! `∂_t u = Δ u^{[m]} + η Δ u + Σ_k f_k ż^{k,ε} u` and its characteristic transform.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::characteristics::{CharacteristicContext, Driver};
use crate::domain::{grad_l2_squared, l1_norm, l2_squared, Field, Grid};
pub use crate::domain::signed_power;
use crate::error::{Error, Result};

const MAX_HALVINGS: usize = 30;

/// Parameters of the implicit scheme.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub m: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub power_floor: f64,
}

impl SolverConfig {
    /// Default Newton settings; `power_floor` is `1e-8` for `m < 1` and 0 otherwise.
    pub fn new(m: f64, eta: f64, epsilon: f64, dt: f64) -> Result<Self> {
        let c = Self {
            m,
            eta,
            epsilon,
            dt,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            power_floor: if m < 1.0 { 1e-8 } else { 0.0 },
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::param(format!("m must be positive, got {}", self.m)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::param(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::param("newton_tol must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::param("newton_max_iter must be at least 1"));
        }
        if !(self.power_floor >= 0.0) {
            return Err(Error::param("power_floor must be nonnegative"));
        }
        if self.m < 1.0 && self.power_floor <= 0.0 {
            return Err(Error::param("m < 1 needs a positive power_floor"));
        }
        Ok(())
    }
}

/// `c_j y_j - b_j - dt [Δ_h y^{[m]} + η Δ_h y]_j = 0` on interior nodes; residual
/// measured as `max_j |s_j R_j|`.
struct ImplicitProblem<'a> {
    grid: &'a Grid,
    c: &'a [f64],
    b: &'a [f64],
    scale: &'a [f64],
    config: &'a SolverConfig,
}

impl ImplicitProblem<'_> {
    /// For `m < 1` the unknown is `w = y^{[m]}`, whose inverse map is C¹.
    fn power_variable(&self) -> bool {
        self.config.m < 1.0
    }

    fn residual(&self, x: &[f64], beta: &mut [f64], lap: &mut [f64], out: &mut [f64]) -> f64 {
        let (m, eta, dt) = (self.config.m, self.config.eta, self.config.dt);
        let pv = self.power_variable();
        for (bj, &xj) in beta.iter_mut().zip(x) {
            *bj = if pv {
                xj + eta * signed_power(xj, 1.0 / m)
            } else {
                signed_power(xj, m) + eta * xj
            };
        }
        self.grid.laplacian_into(beta, lap);
        let mut worst = 0.0f64;
        for p in 0..x.len() {
            if self.grid.is_boundary(p) {
                out[p] = 0.0;
                continue;
            }
            let y = if pv { signed_power(x[p], 1.0 / m) } else { x[p] };
            out[p] = self.c[p] * y - self.b[p] - dt * lap[p];
            worst = worst.max((self.scale[p] * out[p]).abs());
        }
        worst
    }

    /// Damped Newton from the initial guess in `y`; returns (iterations, residual).
    fn solve(&self, y: &mut [f64]) -> Result<(usize, f64)> {
        let pv = self.power_variable();
        if pv {
            let m = self.config.m;
            y.iter_mut().for_each(|v| *v = signed_power(*v, m));
        }
        let out = self.newton(y);
        if pv {
            let inv = 1.0 / self.config.m;
            y.iter_mut().for_each(|v| *v = signed_power(*v, inv));
        }
        out
    }

    fn newton(&self, y: &mut [f64]) -> Result<(usize, f64)> {
        let pv = self.power_variable();
        let n = y.len();
        let cfg = self.config;
        let interior = self.grid.interior_nodes();
        let mut beta = vec![0.0; n];
        let mut lap = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut res = self.residual(y, &mut beta, &mut lap, &mut r);
        if !res.is_finite() {
            return Err(Error::Numerical("non-finite residual at Newton start".into()));
        }
        let mut trial = vec![0.0; n];
        let mut r_trial = vec![0.0; n];
        let mut slope = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; interior.len()];
        for iter in 0..cfg.newton_max_iter {
            if res <= cfg.newton_tol {
                return Ok((iter, res));
            }
            let jac = if pv {
                let inv = 1.0 / cfg.m;
                for (p, &wj) in y.iter().enumerate() {
                    let dy = inv * wj.abs().powf(inv - 1.0);
                    diag[p] = self.c[p] * dy;
                    slope[p] = 1.0 + cfg.eta * dy;
                }
                self.grid.assemble_operator(&diag, &slope, cfg.dt)
            } else {
                for (s, &yj) in slope.iter_mut().zip(y.iter()) {
                    let a = yj.abs() + cfg.power_floor;
                    *s = if cfg.m == 1.0 { 1.0 } else { cfg.m * a.powf(cfg.m - 1.0) } + cfg.eta;
                }
                self.grid.assemble_operator(self.c, &slope, cfg.dt)
            };
            let lu = jac.factorize()?;
            for (slot, &p) in interior.iter().enumerate() {
                rhs[slot] = -r[p];
            }
            lu.solve_in_place(&mut rhs);
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                trial.copy_from_slice(y);
                for (slot, &p) in interior.iter().enumerate() {
                    trial[p] += lambda * rhs[slot];
                }
                let res_trial = self.residual(&trial, &mut beta, &mut lap, &mut r_trial);
                if res_trial < res {
                    y.copy_from_slice(&trial);
                    std::mem::swap(&mut r, &mut r_trial);
                    res = res_trial;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Err(Error::NewtonFailed {
                    iterations: iter + 1,
                    residual: res,
                });
            }
        }
        if res <= cfg.newton_tol {
            Ok((cfg.newton_max_iter, res))
        } else {
            Err(Error::NewtonFailed {
                iterations: cfg.newton_max_iter,
                residual: res,
            })
        }
    }
}

/// Per-step solver diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub newton_iterations: usize,
    pub residual: f64,
    /// Smallest value of the physical solution after the step.
    pub min: f64,
    /// `max_j |Σ_k f_k(x_j) ż^{k,ε}|` at the step midpoint.
    pub reaction_max: f64,
}

/// How trajectory states are stored.
#[derive(Clone, Debug)]
pub enum Representation {
    Physical,
    /// States hold `ũ_n = v_{0,t_n} u_n`; `weights[n]` is `v_{0,t_n}` at the nodes.
    Transformed { weights: Vec<Vec<f64>> },
}

/// Time levels of one run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    config: SolverConfig,
    context: CharacteristicContext,
    times: Vec<f64>,
    states: Vec<Field>,
    diagnostics: Vec<StepDiagnostics>,
    representation: Representation,
}

impl Trajectory {
    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn context(&self) -> &CharacteristicContext {
        &self.context
    }

    pub fn grid(&self) -> &Grid {
        self.context.grid()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Stored states (transformed variable for transformed runs).
    pub fn states(&self) -> &[Field] {
        &self.states
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn representation(&self) -> &Representation {
        &self.representation
    }

    pub fn is_transformed(&self) -> bool {
        matches!(self.representation, Representation::Transformed { .. })
    }

    /// `u_n`, undoing the transform when needed.
    pub fn physical_state(&self, n: usize) -> Field {
        match &self.representation {
            Representation::Physical => self.states[n].clone(),
            Representation::Transformed { weights } => {
                let w = &weights[n];
                let values = self.states[n]
                    .values()
                    .iter()
                    .zip(w)
                    .map(|(u, v)| u / v)
                    .collect();
                Field::from_values(self.grid(), values).expect("same grid")
            }
        }
    }

    pub fn physical_states(&self) -> Vec<Field> {
        (0..self.len()).map(|n| self.physical_state(n)).collect()
    }

    pub fn final_state(&self) -> Field {
        self.physical_state(self.len() - 1)
    }

    /// Largest `|u|` over all physical states.
    pub fn sup_abs(&self) -> f64 {
        (0..self.len())
            .map(|n| self.physical_state(n).max_abs())
            .fold(0.0, f64::max)
    }

    /// Smallest value over all physical states.
    pub fn min_value(&self) -> f64 {
        (0..self.len())
            .map(|n| self.physical_state(n).min())
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the stored time closest to `t`, if within rounding of a grid time.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let n = (t / self.config.dt).round();
        if n < 0.0 || (n * self.config.dt - t).abs() > 1e-9 * self.config.dt.max(t) {
            return None;
        }
        let n = n as usize;
        (n < self.len()).then_some(n)
    }

    /// Writes one CSV per recorded time and `manifest.json`.
    pub fn export(&self, dir: &Path, record_every: usize) -> Result<()> {
        let every = record_every.max(1);
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut records = Vec::new();
        for n in (0..self.len()).filter(|n| n % every == 0 || *n == self.len() - 1) {
            let file = format!("state_{n:06}.csv");
            let path = dir.join(&file);
            fs::write(&path, self.physical_state(n).to_csv()).map_err(|e| Error::io(&path, e))?;
            let d = if n == 0 { None } else { Some(self.diagnostics[n - 1]) };
            records.push(serde_json::json!({
                "step": n,
                "time": self.times[n],
                "file": file,
                "diagnostics": d,
            }));
        }
        let driver = match self.context.driver() {
            Driver::Raw(p) => serde_json::json!({
                "channels": p.n_channels(), "dt": p.dt(), "steps": p.n_steps(), "epsilon": null
            }),
            Driver::Mollified(p) => serde_json::json!({
                "channels": p.n_channels(), "dt": p.base().dt(), "steps": p.base().n_steps(),
                "epsilon": p.epsilon()
            }),
        };
        let coefficients: Vec<String> = self
            .context
            .coefficients()
            .kinds()
            .iter()
            .map(ToString::to_string)
            .collect();
        let manifest = serde_json::json!({
            "config": self.config,
            "grid": self.grid(),
            "path": driver,
            "coefficients": coefficients,
            "scheme": if self.is_transformed() { "transformed" } else { "direct" },
            "record_every": every,
            "records": records,
        });
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Prepares a context driven by the path mollified at the configured scale.
fn mollified_context(config: &SolverConfig, ctx: &CharacteristicContext) -> Result<CharacteristicContext> {
    match ctx.driver() {
        Driver::Mollified(p) => {
            if (p.epsilon() - config.epsilon).abs() > 1e-12 * config.epsilon {
                return Err(Error::param(format!(
                    "context mollified at {} but the solver is configured with epsilon {}",
                    p.epsilon(),
                    config.epsilon
                )));
            }
            Ok(ctx.clone())
        }
        Driver::Raw(_) => ctx.with_mollification(config.epsilon),
    }
}

/// `Σ_k f_k(x_j) ż^{k,ε}(t)` at every node.
fn reaction_rate(ctx: &CharacteristicContext, t: f64) -> Result<Vec<f64>> {
    let Driver::Mollified(p) = ctx.driver() else {
        return Err(Error::param("reaction rate needs a mollified path"));
    };
    let dz = p.derivative(t)?;
    let coeffs = ctx.coefficients();
    Ok((0..ctx.grid().len())
        .map(|j| dz.iter().enumerate().map(|(k, d)| coeffs.value(k, j) * d).sum())
        .collect())
}

/// One implicit Euler step of the direct scheme from `u_n` at `t_n`.
pub fn step(u_n: &Field, t_n: f64, config: &SolverConfig, ctx: &CharacteristicContext) -> Result<Field> {
    config.validate()?;
    let ctx = mollified_context(config, ctx)?;
    check_field(u_n, &ctx)?;
    Ok(direct_step(u_n, t_n, config, &ctx)?.0)
}

fn direct_step(
    u_n: &Field,
    t_n: f64,
    config: &SolverConfig,
    ctx: &CharacteristicContext,
) -> Result<(Field, StepDiagnostics)> {
    let grid = ctx.grid();
    let a = reaction_rate(ctx, t_n + 0.5 * config.dt)?;
    let mut c = vec![1.0; grid.len()];
    for p in 0..grid.len() {
        if grid.is_boundary(p) {
            continue;
        }
        c[p] = 1.0 - config.dt * a[p];
        if c[p] <= 0.0 {
            return Err(Error::Stability {
                node: p,
                diagonal: c[p],
            });
        }
    }
    let scale = vec![1.0; grid.len()];
    let problem = ImplicitProblem {
        grid,
        c: &c,
        b: u_n.values(),
        scale: &scale,
        config,
    };
    let mut y = u_n.values().to_vec();
    let (iters, res) = problem.solve(&mut y)?;
    let next = Field::from_values(grid, y)?;
    let diag = StepDiagnostics {
        newton_iterations: iters,
        residual: res,
        min: next.min(),
        reaction_max: a.iter().fold(0.0, |m, v| m.max(v.abs())),
    };
    Ok((next, diag))
}

fn check_field(u: &Field, ctx: &CharacteristicContext) -> Result<()> {
    if u.grid() != ctx.grid() {
        return Err(Error::param("initial data and coefficients live on different grids"));
    }
    let b = u.boundary_max_abs();
    if b != 0.0 {
        return Err(Error::Precondition(format!(
            "data must vanish on boundary nodes (found |u| = {b:e})"
        )));
    }
    Ok(())
}

fn step_count(t_final: f64, config: &SolverConfig, ctx: &CharacteristicContext) -> Result<usize> {
    if !(t_final >= 0.0) {
        return Err(Error::param(format!("final time must be nonnegative, got {t_final}")));
    }
    let n = (t_final / config.dt).round();
    if (n * config.dt - t_final).abs() > 1e-9 * t_final.max(config.dt) {
        return Err(Error::param(format!(
            "final time {t_final} is not a multiple of dt = {}",
            config.dt
        )));
    }
    if t_final > ctx.horizon() * (1.0 + 1e-9) {
        return Err(Error::param(format!(
            "final time {t_final} beyond the path horizon {}",
            ctx.horizon()
        )));
    }
    Ok(n as usize)
}

/// Runs the direct scheme up to `t_final`.
pub fn solve(u0: &Field, t_final: f64, config: &SolverConfig, ctx: &CharacteristicContext) -> Result<Trajectory> {
    config.validate()?;
    let ctx = mollified_context(config, ctx)?;
    check_field(u0, &ctx)?;
    let steps = step_count(t_final, config, &ctx)?;
    let mut times = vec![0.0];
    let mut states = vec![u0.clone()];
    let mut diagnostics = Vec::with_capacity(steps);
    for n in 0..steps {
        let t_n = n as f64 * config.dt;
        let (next, d) = direct_step(&states[n], t_n, config, &ctx).map_err(|e| Error::Step {
            step: n,
            source: Box::new(e),
        })?;
        times.push((n + 1) as f64 * config.dt);
        states.push(next);
        diagnostics.push(d);
    }
    Ok(Trajectory {
        config: config.clone(),
        context: ctx,
        times,
        states,
        diagnostics,
        representation: Representation::Physical,
    })
}

/// Runs the scheme for `ũ = v^ε_{0,t} u`, which carries no noise term.
pub fn solve_transformed(
    u0: &Field,
    t_final: f64,
    config: &SolverConfig,
    ctx: &CharacteristicContext,
) -> Result<Trajectory> {
    config.validate()?;
    let ctx = mollified_context(config, ctx)?;
    check_field(u0, &ctx)?;
    let steps = step_count(t_final, config, &ctx)?;
    let grid = *ctx.grid();
    let ones = vec![1.0; grid.len()];
    let v0 = ctx.weight_field(0.0, 0.0)?.into_values();
    let mut times = vec![0.0];
    let mut states = vec![Field::from_values(
        &grid,
        u0.values().iter().zip(&v0).map(|(u, v)| u * v).collect(),
    )?];
    let mut weights = vec![v0];
    let mut diagnostics = Vec::with_capacity(steps);
    for n in 0..steps {
        let t_next = (n + 1) as f64 * config.dt;
        let result = (|| -> Result<(Field, Vec<f64>, StepDiagnostics)> {
            let v = ctx.weight_field(0.0, t_next)?.into_values();
            let b: Vec<f64> = states[n].values().iter().zip(&v).map(|(u, w)| u / w).collect();
            let problem = ImplicitProblem {
                grid: &grid,
                c: &ones,
                b: &b,
                scale: &v,
                config,
            };
            let mut y = b.clone();
            let (iters, res) = problem.solve(&mut y)?;
            let min = y.iter().copied().fold(f64::INFINITY, f64::min);
            let tilde: Vec<f64> = y.iter().zip(&v).map(|(u, w)| u * w).collect();
            let a = reaction_rate(&ctx, t_next - 0.5 * config.dt)?;
            let d = StepDiagnostics {
                newton_iterations: iters,
                residual: res,
                min,
                reaction_max: a.iter().fold(0.0, |m, x| m.max(x.abs())),
            };
            Ok((Field::from_values(&grid, tilde)?, v, d))
        })()
        .map_err(|e| Error::Step {
            step: n,
            source: Box::new(e),
        })?;
        times.push(t_next);
        states.push(result.0);
        weights.push(result.1);
        diagnostics.push(result.2);
    }
    Ok(Trajectory {
        config: config.clone(),
        context: ctx,
        times,
        states,
        diagnostics,
        representation: Representation::Transformed { weights },
    })
}

/// Energy and dissipation totals of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `sup_n ‖u_n‖²_{L²}`.
    pub sup_l2_squared: f64,
    /// `Σ_{n≥1} dt ‖∇_h u_n^{[(m+1)/2]}‖²_{L²}`.
    pub porous_dissipation: f64,
    /// `η Σ_{n≥1} dt ‖∇_h u_n‖²_{L²}`.
    pub viscous_dissipation: f64,
    /// `Σ_n |‖u_{n+1}‖² - ‖u_n‖² + dt (8m/(m+1)²) ‖∇_h u_{n+1}^{[(m+1)/2]}‖² + 2 dt η ‖∇_h u_{n+1}‖²|`,
    /// reported only when the noise coefficients vanish.
    pub identity_residual: Option<f64>,
}

pub fn energy_report(traj: &Trajectory) -> EnergyReport {
    let grid = traj.grid();
    let cfg = traj.config();
    let half = 0.5 * (cfg.m + 1.0);
    let states = traj.physical_states();
    let l2: Vec<f64> = states.iter().map(|u| l2_squared(grid, u.values())).collect();
    let porous: Vec<f64> = states
        .iter()
        .map(|u| {
            let w: Vec<f64> = u.values().iter().map(|&x| signed_power(x, half)).collect();
            grad_l2_squared(grid, &w)
        })
        .collect();
    let grads: Vec<f64> = states.iter().map(|u| grad_l2_squared(grid, u.values())).collect();
    let dt = cfg.dt;
    let kappa = 8.0 * cfg.m / ((cfg.m + 1.0) * (cfg.m + 1.0));
    let identity_residual = traj.context().coefficients().is_zero().then(|| {
        (1..states.len())
            .map(|n| (l2[n] - l2[n - 1] + dt * kappa * porous[n] + 2.0 * dt * cfg.eta * grads[n]).abs())
            .sum()
    });
    EnergyReport {
        sup_l2_squared: l2.iter().copied().fold(0.0, f64::max),
        porous_dissipation: dt * porous.iter().skip(1).sum::<f64>(),
        viscous_dissipation: cfg.eta * dt * grads.iter().skip(1).sum::<f64>(),
        identity_residual,
    }
}

/// `‖∇_h u^{[m]} - (2m/(m+1)) |u|^{(m-1)/2} ∇_h u^{[(m+1)/2]}‖_{L¹}`, with `|u|` replaced
/// by `|u| + floor` in the powers.
pub fn chain_rule_defect(u: &Field, m: f64, floor: f64) -> f64 {
    let grid = u.grid();
    let pw = |x: f64, r: f64| {
        if x == 0.0 && floor == 0.0 {
            0.0
        } else {
            x.signum() * (x.abs() + floor).powf(r)
        }
    };
    let a: Vec<f64> = u.values().iter().map(|&x| pw(x, m)).collect();
    let b: Vec<f64> = u.values().iter().map(|&x| pw(x, 0.5 * (m + 1.0))).collect();
    let ga = grid.gradient(&a);
    let gb = grid.gradient(&b);
    let c = 2.0 * m / (m + 1.0);
    let defect: Vec<f64> = (0..grid.len())
        .map(|p| {
            let f = c * (u.values()[p].abs() + floor).powf(0.5 * (m - 1.0));
            let d0 = ga[p][0] - f * gb[p][0];
            let d1 = ga[p][1] - f * gb[p][1];
            (d0 * d0 + d1 * d1).sqrt()
        })
        .collect();
    l1_norm(grid, &defect)
}
