use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::characteristics::TestFunction;
use crate::domain::{parse_descriptor, take_args, CoefficientKind, Field, Grid};
use crate::error::{Error, Result};
use crate::kinetic::DEFAULT_N_XI;
use crate::solver::SolverConfig;

/// Which experiment a config drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Solve,
    Contraction,
    Convergence,
    Cocycle,
    Positivity,
    Diagnose,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Solve,
        ExperimentKind::Contraction,
        ExperimentKind::Convergence,
        ExperimentKind::Cocycle,
        ExperimentKind::Positivity,
        ExperimentKind::Diagnose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Contraction => "contraction",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Cocycle => "cocycle",
            ExperimentKind::Positivity => "positivity",
            ExperimentKind::Diagnose => "diagnose",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param(format!("unknown experiment `{s}`")))
    }
}

/// Time discretization used by the experiment drivers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Noise as an implicit reaction term.
    Direct,
    /// Evolve `v_{0,t} u`, which carries no noise term.
    Transformed,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Direct => "direct",
            Scheme::Transformed => "transformed",
        }
    }
}

/// Source of the driving path.
#[derive(Clone, Debug, PartialEq)]
pub enum PathSpec {
    Zero,
    Fbm { hurst: f64, seed: u64 },
    Csv { file: PathBuf },
}

/// Closed-form initial data.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    Zero,
    /// `amp · Π_i sin(mode π x_i / L_i)`.
    Sine { amp: f64, mode: f64 },
    /// Self-similar source solution of the porous-medium equation at time `t0`.
    Barenblatt { c: f64, t0: f64, center: [f64; 2] },
    /// `amp (1 - r²)²` on `r = |x - center| / width < 1`.
    Bump { amp: f64, center: [f64; 2], width: f64 },
    /// Sum of two bumps of equal width.
    TwoBump {
        amp1: f64,
        center1: [f64; 2],
        amp2: f64,
        center2: [f64; 2],
        width: f64,
    },
}

fn bump_value(x: [f64; 2], dim: usize, center: [f64; 2], width: f64) -> f64 {
    let mut r2 = 0.0;
    for a in 0..dim {
        let d = (x[a] - center[a]) / width;
        r2 += d * d;
    }
    if r2 < 1.0 {
        (1.0 - r2) * (1.0 - r2)
    } else {
        0.0
    }
}

impl InitialData {
    /// Node values; boundary nodes are set to zero.
    pub fn field(&self, grid: &Grid, m: f64) -> Result<Field> {
        let dim = grid.dim();
        let ext = grid.extent();
        let mut u = match *self {
            InitialData::Zero => Field::zeros(grid),
            InitialData::Sine { amp, mode } => Field::from_fn(grid, |x| {
                (0..dim)
                    .map(|a| (mode * std::f64::consts::PI * x[a] / ext[a]).sin())
                    .product::<f64>()
                    * amp
            }),
            InitialData::Barenblatt { c, t0, center } => {
                if !(m > 1.0) {
                    return Err(Error::param("the Barenblatt profile needs m > 1"));
                }
                let d = dim as f64;
                let alpha = d / (d * (m - 1.0) + 2.0);
                let beta = alpha / d;
                let k = alpha * (m - 1.0) / (2.0 * m * d);
                Field::from_fn(grid, |x| {
                    let r2: f64 = (0..dim).map(|a| (x[a] - center[a]).powi(2)).sum();
                    let inner = (c - k * r2 * t0.powf(-2.0 * beta)).max(0.0);
                    t0.powf(-alpha) * inner.powf(1.0 / (m - 1.0))
                })
            }
            InitialData::Bump { amp, center, width } => {
                Field::from_fn(grid, |x| amp * bump_value(x, dim, center, width))
            }
            InitialData::TwoBump {
                amp1,
                center1,
                amp2,
                center2,
                width,
            } => Field::from_fn(grid, |x| {
                amp1 * bump_value(x, dim, center1, width) + amp2 * bump_value(x, dim, center2, width)
            }),
        };
        u.clear_boundary();
        Ok(u)
    }

    /// True when the profile has no negative values anywhere.
    pub fn is_nonnegative(&self) -> bool {
        match *self {
            InitialData::Zero | InitialData::Barenblatt { .. } => true,
            InitialData::Sine { amp, mode } => amp >= 0.0 && mode == 1.0,
            InitialData::Bump { amp, .. } => amp >= 0.0,
            InitialData::TwoBump { amp1, amp2, .. } => amp1 >= 0.0 && amp2 >= 0.0,
        }
    }
}

impl FromStr for InitialData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, kv) = parse_descriptor(s)?;
        let take = |allowed: &[&str]| take_args(&name, &kv, allowed);
        let width = |w: Option<f64>| -> Result<f64> {
            let w = w.unwrap_or(0.25);
            if w > 0.0 {
                Ok(w)
            } else {
                Err(Error::param("bump width must be positive"))
            }
        };
        match name.as_str() {
            "zero" => {
                take(&[])?;
                Ok(InitialData::Zero)
            }
            "sine" => {
                let v = take(&["amp", "mode"])?;
                Ok(InitialData::Sine {
                    amp: v[0].unwrap_or(1.0),
                    mode: v[1].unwrap_or(1.0),
                })
            }
            "barenblatt" => {
                let v = take(&["c", "t0", "center", "center_y"])?;
                let t0 = v[1].unwrap_or(0.01);
                if !(t0 > 0.0) {
                    return Err(Error::param("barenblatt t0 must be positive"));
                }
                let c = v[2].unwrap_or(0.5);
                Ok(InitialData::Barenblatt {
                    c: v[0].unwrap_or(0.03),
                    t0,
                    center: [c, v[3].unwrap_or(c)],
                })
            }
            "bump" => {
                let v = take(&["amp", "center", "center_y", "width"])?;
                let c = v[1].unwrap_or(0.5);
                Ok(InitialData::Bump {
                    amp: v[0].unwrap_or(1.0),
                    center: [c, v[2].unwrap_or(c)],
                    width: width(v[3])?,
                })
            }
            "two_bump" => {
                let v = take(&["amp1", "center1", "amp2", "center2", "center_y", "width"])?;
                let cy = v[4].unwrap_or(0.5);
                Ok(InitialData::TwoBump {
                    amp1: v[0].unwrap_or(1.0),
                    center1: [v[1].unwrap_or(0.35), cy],
                    amp2: v[2].unwrap_or(1.0),
                    center2: [v[3].unwrap_or(0.65), cy],
                    width: width(v[5])?,
                })
            }
            other => Err(Error::param(format!("unknown initial data `{other}`"))),
        }
    }
}

const KEYS: &[&str] = &[
    "experiment",
    "dim",
    "length",
    "length_y",
    "nodes",
    "nodes_y",
    "m",
    "eta",
    "epsilon",
    "dt",
    "t_final",
    "newton_tol",
    "newton_max_iter",
    "power_floor",
    "scheme",
    "coefficients",
    "path",
    "hurst",
    "seed",
    "path_dt",
    "path_file",
    "n_paths",
    "initial",
    "initial_second",
    "levels",
    "split_time",
    "n_xi",
    "delta",
    "psi",
    "rho",
    "record_every",
    "refine",
    "output",
];

/// Validated experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub solver: SolverConfig,
    pub dim: usize,
    pub length: [f64; 2],
    pub nodes: [usize; 2],
    pub t_final: f64,
    pub scheme: Scheme,
    pub coefficients: Vec<CoefficientKind>,
    pub path: PathSpec,
    pub path_dt: f64,
    pub n_paths: usize,
    pub initial: InitialData,
    pub initial_second: Option<InitialData>,
    pub levels: Option<usize>,
    pub split_time: Option<f64>,
    pub n_xi: usize,
    pub delta: f64,
    pub psi: Option<TestFunction>,
    pub rho: Option<TestFunction>,
    pub record_every: usize,
    pub refine: bool,
    pub output: Option<PathBuf>,
    echo: BTreeMap<String, String>,
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|(l, _)| *l)
    }

    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.line(key),
            message: message.into(),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("`{key}` expects {what}, got `{v}`"))),
        }
    }

    fn real(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.parse(key, "a number")?;
        if let Some(x) = v {
            if !x.is_finite() {
                return Err(self.err(key, format!("`{key}` must be finite")));
            }
        }
        Ok(v)
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        self.parse(key, "a nonnegative integer")
    }

    fn required_real(&self, key: &str) -> Result<f64> {
        self.real(key)?
            .ok_or_else(|| self.err(key, format!("missing required key `{key}`")))
    }

    fn descriptor<T: FromStr<Err = Error>>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| match e {
                Error::Parameter(msg) => self.err(key, msg),
                other => self.err(key, other.to_string()),
            }),
        }
    }
}

/// Parses flat `key = value` lines with `#` comments.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| Error::Config {
            line: Some(line),
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::Config {
                line: Some(line),
                message: format!("unknown key `{k}`"),
            });
        }
        if v.is_empty() {
            return Err(Error::Config {
                line: Some(line),
                message: format!("`{k}` has no value"),
            });
        }
        if map.insert(k.to_string(), (line, v.to_string())).is_some() {
            return Err(Error::Config {
                line: Some(line),
                message: format!("duplicate key `{k}`"),
            });
        }
    }
    build(Entries { map })
}

fn build(e: Entries) -> Result<ExperimentConfig> {
    let kind = e.descriptor::<ExperimentKind>("experiment")?;
    let dim = e.count("dim")?.unwrap_or(1);
    if dim != 1 && dim != 2 {
        return Err(e.err("dim", format!("dim must be 1 or 2, got {dim}")));
    }
    let lx = e.real("length")?.unwrap_or(1.0);
    if !(lx > 0.0) {
        return Err(e.err("length", "length must be positive"));
    }
    let ly = e.real("length_y")?.unwrap_or(lx);
    if !(ly > 0.0) {
        return Err(e.err("length_y", "length_y must be positive"));
    }
    let nx = e.count("nodes")?.unwrap_or(65);
    if nx < 3 {
        return Err(e.err("nodes", "need at least 3 nodes per axis"));
    }
    let ny = match e.count("nodes_y")? {
        Some(n) => n,
        None => {
            let n = (nx - 1) as f64 * ly / lx;
            if (n - n.round()).abs() > 1e-9 {
                return Err(e.err("length_y", "length_y is not a multiple of the x spacing"));
            }
            n.round() as usize + 1
        }
    };
    let (length, nodes) = if dim == 1 {
        ([lx, 0.0], [nx, 1])
    } else {
        ([lx, ly], [nx, ny])
    };
    let extents = &length[..dim];
    let counts = &nodes[..dim];
    Grid::new(dim, extents, counts).map_err(|err| e.err("nodes", err.to_string()))?;

    let m = e.required_real("m")?;
    if !(m > 0.0) {
        return Err(e.err("m", format!("m must be positive, got {m}")));
    }
    let dt = e.required_real("dt")?;
    if !(dt > 0.0) {
        return Err(e.err("dt", format!("dt must be positive, got {dt}")));
    }
    let t_final = e.required_real("t_final")?;
    if !(t_final >= 0.0) {
        return Err(e.err("t_final", "t_final must be nonnegative"));
    }
    let steps = (t_final / dt).round();
    if (steps * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(e.err("t_final", format!("t_final {t_final} is not a multiple of dt {dt}")));
    }
    let eta = e.real("eta")?.unwrap_or(0.0);
    if !(eta >= 0.0) {
        return Err(e.err("eta", "eta must be nonnegative"));
    }
    let epsilon = e.real("epsilon")?.unwrap_or(0.05);
    if !(epsilon > 0.0) {
        return Err(e.err("epsilon", "epsilon must be positive"));
    }
    let mut solver = SolverConfig::new(m, eta, epsilon, dt).map_err(|err| e.err("m", err.to_string()))?;
    if let Some(tol) = e.real("newton_tol")? {
        if !(tol > 0.0) {
            return Err(e.err("newton_tol", "newton_tol must be positive"));
        }
        solver.newton_tol = tol;
    }
    if let Some(it) = e.count("newton_max_iter")? {
        if it == 0 {
            return Err(e.err("newton_max_iter", "newton_max_iter must be at least 1"));
        }
        solver.newton_max_iter = it;
    }
    if let Some(f) = e.real("power_floor")? {
        if !(f >= 0.0) || (m < 1.0 && f == 0.0) {
            return Err(e.err("power_floor", "power_floor must be nonnegative, and positive for m < 1"));
        }
        solver.power_floor = f;
    }

    let scheme = match e.raw("scheme").unwrap_or("transformed") {
        "direct" => Scheme::Direct,
        "transformed" => Scheme::Transformed,
        other => return Err(e.err("scheme", format!("scheme must be direct or transformed, got `{other}`"))),
    };
    let coefficients = match e.raw("coefficients") {
        None => vec![CoefficientKind::Constant { c: 0.0 }],
        Some(list) => {
            let parsed: Result<Vec<CoefficientKind>> = list
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect();
            let parsed = parsed.map_err(|err| e.err("coefficients", err.to_string()))?;
            if parsed.is_empty() {
                return Err(e.err("coefficients", "at least one coefficient is required"));
            }
            parsed
        }
    };

    let path_kind = e.raw("path").unwrap_or("zero");
    let hurst = e.real("hurst")?;
    let seed: Option<u64> = e.parse("seed", "a nonnegative integer")?;
    let path_file = e.raw("path_file");
    let path = match path_kind {
        "zero" => PathSpec::Zero,
        "fbm" => {
            let h = hurst.unwrap_or(0.5);
            if !(h > 0.0 && h < 1.0) {
                return Err(e.err("hurst", format!("hurst must lie in (0, 1), got {h}")));
            }
            PathSpec::Fbm {
                hurst: h,
                seed: seed.unwrap_or(0),
            }
        }
        "csv" => PathSpec::Csv {
            file: PathBuf::from(
                path_file.ok_or_else(|| e.err("path", "path = csv needs `path_file`"))?,
            ),
        },
        other => return Err(e.err("path", format!("path must be zero, fbm or csv, got `{other}`"))),
    };
    let path_dt = e.real("path_dt")?.unwrap_or_else(|| dt.min(epsilon / 4.0));
    if !(path_dt > 0.0) || epsilon < 2.0 * path_dt * (1.0 - 1e-12) {
        return Err(e.err("path_dt", format!("path_dt must be positive and at most epsilon / 2 = {}", epsilon / 2.0)));
    }
    let n_paths = e.count("n_paths")?.unwrap_or(1);
    if n_paths == 0 {
        return Err(e.err("n_paths", "n_paths must be at least 1"));
    }

    let initial = e
        .descriptor::<InitialData>("initial")?
        .ok_or_else(|| e.err("initial", "missing required key `initial`"))?;
    let initial_second = e.descriptor::<InitialData>("initial_second")?;
    let levels = e.count("levels")?;
    let split_time = e.real("split_time")?;
    let n_xi = e.count("n_xi")?.unwrap_or(DEFAULT_N_XI);
    if n_xi < 2 || n_xi % 2 != 0 {
        return Err(e.err("n_xi", "n_xi must be even and at least 2"));
    }
    let delta = e.real("delta")?.unwrap_or(m.min(1.0));
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(e.err("delta", "delta must lie in (0, 1]"));
    }
    let psi = e.descriptor::<TestFunction>("psi")?;
    let rho = e.descriptor::<TestFunction>("rho")?;
    for (key, f) in [("psi", &psi), ("rho", &rho)] {
        if let Some(f) = f {
            if f.space().len() != dim {
                return Err(e.err(key, format!("`{key}` needs one spatial bump per axis")));
            }
        }
    }
    let record_every = e.count("record_every")?.unwrap_or(1).max(1);
    let refine = match e.raw("refine") {
        None | Some("false") => false,
        Some("true") => true,
        Some(other) => return Err(e.err("refine", format!("`refine` expects true or false, got `{other}`"))),
    };
    let output = e.raw("output").map(PathBuf::from);

    let mut cfg = ExperimentConfig {
        kind,
        solver,
        dim,
        length,
        nodes,
        t_final,
        scheme,
        coefficients,
        path,
        path_dt,
        n_paths,
        initial,
        initial_second,
        levels,
        split_time,
        n_xi,
        delta,
        psi,
        rho,
        record_every,
        refine,
        output,
        echo: BTreeMap::new(),
    };
    cfg.echo = make_echo(&cfg, &e);
    Ok(cfg)
}

fn make_echo(c: &ExperimentConfig, e: &Entries) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        out.insert(k.to_string(), v);
    };
    if let Some(k) = c.kind {
        put("experiment", k.to_string());
    }
    put("dim", c.dim.to_string());
    put("length", c.length[0].to_string());
    put("nodes", c.nodes[0].to_string());
    if c.dim == 2 {
        put("length_y", c.length[1].to_string());
        put("nodes_y", c.nodes[1].to_string());
    }
    put("m", c.solver.m.to_string());
    put("eta", c.solver.eta.to_string());
    put("epsilon", c.solver.epsilon.to_string());
    put("dt", c.solver.dt.to_string());
    put("t_final", c.t_final.to_string());
    put("newton_tol", c.solver.newton_tol.to_string());
    put("newton_max_iter", c.solver.newton_max_iter.to_string());
    put("power_floor", c.solver.power_floor.to_string());
    put("scheme", c.scheme.name().to_string());
    put(
        "coefficients",
        c.coefficients.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"),
    );
    match &c.path {
        PathSpec::Zero => put("path", "zero".into()),
        PathSpec::Fbm { hurst, seed } => {
            put("path", "fbm".into());
            put("hurst", hurst.to_string());
            put("seed", seed.to_string());
        }
        PathSpec::Csv { file } => {
            put("path", "csv".into());
            put("path_file", file.display().to_string());
        }
    }
    put("path_dt", c.path_dt.to_string());
    put("n_paths", c.n_paths.to_string());
    put("n_xi", c.n_xi.to_string());
    put("delta", c.delta.to_string());
    put("record_every", c.record_every.to_string());
    put("refine", c.refine.to_string());
    for key in ["initial", "initial_second", "psi", "rho"] {
        if let Some(v) = e.raw(key) {
            put(key, v.to_string());
        }
    }
    if let Some(l) = c.levels {
        put("levels", l.to_string());
    }
    if let Some(s) = c.split_time {
        put("split_time", s.to_string());
    }
    out
}

impl ExperimentConfig {
    /// Effective settings, defaults included, as strings.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.echo
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.dim, &self.length[..self.dim], &self.nodes[..self.dim]).expect("validated grid")
    }

    /// Copy with `h` and `dt` halved and `n_xi` doubled; the driving path is unchanged.
    pub fn refined(&self) -> ExperimentConfig {
        let mut c = self.clone();
        for a in 0..self.dim {
            c.nodes[a] = 2 * (self.nodes[a] - 1) + 1;
        }
        c.solver.dt = self.solver.dt / 2.0;
        c.n_xi = 2 * self.n_xi;
        c.echo.insert("nodes".into(), c.nodes[0].to_string());
        if self.dim == 2 {
            c.echo.insert("nodes_y".into(), c.nodes[1].to_string());
        }
        c.echo.insert("dt".into(), c.solver.dt.to_string());
        c.echo.insert("n_xi".into(), c.n_xi.to_string());
        c
    }

    /// Same config with the path file resolved against `dir` when relative.
    pub fn resolve_paths(mut self, dir: &std::path::Path) -> Self {
        if let PathSpec::Csv { file } = &self.path {
            if file.is_relative() {
                self.path = PathSpec::Csv { file: dir.join(file) };
            }
        }
        self
    }
}
