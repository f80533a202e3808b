//! Driving signals `z: [0, T] -> R^n`.
//!
//! A [`SamplePath`] stores node values on a uniform grid and is evaluated
//! off-node by linear interpolation. [`FbmGenerator`] draws exact-covariance
//! fractional Brownian motion samples, and [`MollifiedPath`] convolves a path
//! with a compactly supported smooth kernel so the noise has a classical time
//! derivative.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Largest number of fBM increments the dense generator accepts.
pub const MAX_FBM_STEPS: usize = 1 << 14;

/// Longest horizon (in path time units) the fBM generator accepts.
pub const MAX_FBM_HORIZON: f64 = 1.0e4;

/// Relative slack used when checking that a time lies inside the horizon.
const TIME_SLACK: f64 = 1e-12;

/// Discrete driving signal with `n_channels` components on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    dt: f64,
    values: Vec<Vec<f64>>,
}

impl SamplePath {
    /// Builds a path from raw samples, shifting every channel so that it starts at zero.
    pub fn from_samples(values: Vec<Vec<f64>>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param(format!("path spacing must be positive, got {dt}")));
        }
        let Some(first) = values.first() else {
            return Err(Error::param("path needs at least one channel"));
        };
        let len = first.len();
        if len == 0 {
            return Err(Error::param("path channels must hold at least one sample"));
        }
        if let Some((k, ch)) = values.iter().enumerate().find(|(_, ch)| ch.len() != len) {
            return Err(Error::param(format!(
                "ragged path: channel 0 has {len} samples, channel {k} has {}",
                ch.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::param("path samples must be finite"));
        }
        let values = values
            .into_iter()
            .map(|ch| {
                let z0 = ch[0];
                ch.into_iter().map(|v| v - z0).collect()
            })
            .collect();
        Ok(Self { dt, values })
    }

    /// The identically-zero path.
    pub fn zero(n_channels: usize, n_steps: usize, dt: f64) -> Result<Self> {
        Self::from_samples(vec![vec![0.0; n_steps + 1]; n_channels.max(1)], dt)
    }

    pub fn n_channels(&self) -> usize {
        self.values.len()
    }

    pub fn n_steps(&self) -> usize {
        self.values[0].len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    /// Node values of channel `k`.
    pub fn channel(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.values
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let horizon = self.horizon();
        if !(t >= -TIME_SLACK * horizon.max(1.0) && t <= horizon * (1.0 + TIME_SLACK) + TIME_SLACK)
        {
            return Err(Error::param(format!(
                "time {t} outside path horizon [0, {horizon}]"
            )));
        }
        Ok(())
    }

    /// `z_{t ∨ 0}` with constant extension past the horizon, linear between nodes.
    pub(crate) fn eval_extended(&self, k: usize, t: f64) -> f64 {
        let ch = &self.values[k];
        if t <= 0.0 {
            return 0.0;
        }
        let pos = t / self.dt;
        let n = ch.len() - 1;
        if pos >= n as f64 {
            return ch[n];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if frac == 0.0 {
            ch[i]
        } else {
            ch[i] + frac * (ch[i + 1] - ch[i])
        }
    }

    /// Path value at `t`, linearly interpolated between nodes.
    pub fn value(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok((0..self.n_channels())
            .map(|k| self.eval_extended(k, t))
            .collect())
    }

    /// Increment `z_{s,t} = z_t - z_s`, componentwise.
    pub fn increment(&self, s: f64, t: f64) -> Result<Vec<f64>> {
        self.check_time(s)?;
        self.check_time(t)?;
        Ok((0..self.n_channels())
            .map(|k| self.eval_extended(k, t) - self.eval_extended(k, s))
            .collect())
    }

    /// Modulus of continuity `ω(δ; T)`: largest max-norm increment over node
    /// pairs in `[0, T]` at most `δ` apart.
    pub fn modulus_of_continuity(&self, delta: f64, t_max: f64) -> Result<f64> {
        if !(delta > 0.0) {
            return Err(Error::param(format!("modulus window must be positive, got {delta}")));
        }
        self.check_time(t_max)?;
        let last = ((t_max / self.dt) * (1.0 + TIME_SLACK)).floor() as usize;
        let last = last.min(self.n_steps());
        let width = ((delta / self.dt) * (1.0 + TIME_SLACK)).floor() as usize;
        let mut best = 0.0_f64;
        for ch in &self.values {
            for i in 0..=last {
                let hi = (i + width).min(last);
                for j in i + 1..=hi {
                    best = best.max((ch[j] - ch[i]).abs());
                }
            }
        }
        Ok(best)
    }

    /// Time-shifted path `θ_s z = z_{s+·} - z_s`, resampled on the same spacing.
    pub fn shifted(&self, s: f64) -> Result<SamplePath> {
        self.check_time(s)?;
        let remaining = self.horizon() - s;
        let n = ((remaining / self.dt) * (1.0 + TIME_SLACK)).floor() as usize;
        let values = (0..self.n_channels())
            .map(|k| {
                let zs = self.eval_extended(k, s);
                (0..=n)
                    .map(|i| self.eval_extended(k, s + i as f64 * self.dt) - zs)
                    .collect()
            })
            .collect();
        SamplePath::from_samples(values, self.dt)
    }

    /// CSV text with header `t,z1,...,zn`, one row per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for k in 0..self.n_channels() {
            let _ = write!(out, ",z{}", k + 1);
        }
        out.push('\n');
        for i in 0..=self.n_steps() {
            let _ = write!(out, "{:e}", i as f64 * self.dt);
            for ch in &self.values {
                let _ = write!(out, ",{:e}", ch[i]);
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV layout produced by [`SamplePath::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::param("empty path CSV"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "t" {
            return Err(Error::param("path CSV header must be `t,z1,...,zn`"));
        }
        let n_channels = cols.len() - 1;
        let mut times = Vec::new();
        let mut values = vec![Vec::new(); n_channels];
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::param(format!(
                    "path CSV row {} has {} fields, expected {}",
                    row + 2,
                    fields.len(),
                    cols.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::param(format!("path CSV row {}: bad number `{s}`", row + 2)))
            };
            times.push(parse(fields[0])?);
            for (k, f) in fields[1..].iter().enumerate() {
                values[k].push(parse(f)?);
            }
        }
        if times.len() < 2 {
            return Err(Error::param("path CSV needs at least two rows"));
        }
        let dt = times[1] - times[0];
        for (i, t) in times.iter().enumerate() {
            let expected = times[0] + i as f64 * dt;
            if (t - expected).abs() > 1e-9 * dt.max(expected.abs()) {
                return Err(Error::param(format!("path CSV times are not uniform at row {}", i + 2)));
            }
        }
        SamplePath::from_samples(values, dt)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// fBM covariance `E[z_t z_s] = ½(t^{2H} + s^{2H} - |t-s|^{2H})`.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> f64 {
    let two_h = 2.0 * hurst;
    0.5 * (t.abs().powf(two_h) + s.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

/// Exact-covariance fBM sampler backed by a dense Cholesky factor of the
/// covariance at the nodes `dt, 2dt, ..., n_steps·dt`.
#[derive(Clone, Debug)]
pub struct FbmGenerator {
    hurst: f64,
    dt: f64,
    n_steps: usize,
    // packed lower triangle, row i starts at i(i+1)/2
    factor: Vec<f64>,
}

impl FbmGenerator {
    pub fn new(hurst: f64, n_steps: usize, dt: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::param(format!("Hurst index must lie in (0,1), got {hurst}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param(format!("path spacing must be positive, got {dt}")));
        }
        if n_steps > MAX_FBM_STEPS {
            return Err(Error::param(format!(
                "{n_steps} fBM steps exceeds the dense-generator limit {MAX_FBM_STEPS}"
            )));
        }
        if n_steps as f64 * dt > MAX_FBM_HORIZON {
            return Err(Error::param(format!(
                "fBM horizon {} exceeds {MAX_FBM_HORIZON}",
                n_steps as f64 * dt
            )));
        }
        let n = n_steps;
        let mut factor = vec![0.0; n * (n + 1) / 2];
        let row = |i: usize| i * (i + 1) / 2;
        for i in 0..n {
            let ti = (i + 1) as f64 * dt;
            for j in 0..=i {
                let tj = (j + 1) as f64 * dt;
                let mut sum = fbm_covariance(hurst, ti, tj);
                let (ri, rj) = (row(i), row(j));
                for k in 0..j {
                    sum -= factor[ri + k] * factor[rj + k];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::Numerical(format!(
                            "fBM covariance not positive definite: pivot {i} is {sum:e} (H={hurst}, dt={dt})"
                        )));
                    }
                    factor[ri + i] = sum.sqrt();
                } else {
                    factor[ri + j] = sum / factor[rj + j];
                }
            }
        }
        Ok(Self {
            hurst,
            dt,
            n_steps,
            factor,
        })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Draws `n_channels` independent channels from a ChaCha stream seeded by `seed`.
    pub fn sample(&self, n_channels: usize, seed: u64) -> SamplePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n_channels, &mut rng)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, n_channels: usize, rng: &mut R) -> SamplePath {
        let n = self.n_steps;
        let mut noise = vec![0.0; n];
        let values = (0..n_channels.max(1))
            .map(|_| {
                for g in noise.iter_mut() {
                    *g = StandardNormal.sample(rng);
                }
                let mut ch = Vec::with_capacity(n + 1);
                ch.push(0.0);
                for i in 0..n {
                    let r = &self.factor[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
                    ch.push(r.iter().zip(&noise).map(|(l, g)| l * g).sum());
                }
                ch
            })
            .collect();
        SamplePath {
            dt: self.dt,
            values,
        }
    }
}

/// One-shot fBM sample; see [`FbmGenerator`] to amortise the factorisation.
pub fn sample_fbm(
    hurst: f64,
    n_channels: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<SamplePath> {
    if n_channels == 0 {
        return Err(Error::param("fBM needs at least one channel"));
    }
    Ok(FbmGenerator::new(hurst, n_steps, dt)?.sample(n_channels, seed))
}

fn bump_exponent(s: f64) -> f64 {
    -1.0 / (1.0 - s * s)
}

/// Normalisation of `exp(-1/(1-s²))` on (-1,1), computed once.
fn kernel_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| {
        let n = 200_000;
        let ds = 2.0 / n as f64;
        (0..n)
            .map(|i| {
                let s = -1.0 + (i as f64 + 0.5) * ds;
                bump_exponent(s).exp()
            })
            .sum::<f64>()
            * ds
    })
}

/// Unit-mass mollifier `ρ(s) ∝ exp(-1/(1-s²))` supported on [-1, 1].
pub fn mollifier(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        bump_exponent(s).exp() / kernel_mass()
    }
}

/// Derivative of [`mollifier`].
pub fn mollifier_derivative(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - s * s;
        mollifier(s) * (-2.0 * s / (d * d))
    }
}

/// Path convolved with `ρ^ε(s) = ρ(s/ε)/ε`, using `z_{s∨0}` for negative times.
#[derive(Clone, Debug)]
pub struct MollifiedPath {
    base: SamplePath,
    epsilon: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    dweights: Vec<f64>,
}

impl MollifiedPath {
    /// Minimum number of midpoint samples across the kernel support.
    pub const MIN_QUADRATURE: usize = 33;
    const MAX_QUADRATURE: usize = 8193;

    pub fn new(base: SamplePath, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::param(format!("mollification scale must be positive, got {epsilon}")));
        }
        if epsilon < 2.0 * base.dt() * (1.0 - 1e-12) {
            return Err(Error::param(format!(
                "mollification scale {epsilon} below twice the path spacing {}",
                base.dt()
            )));
        }
        // at least eight samples per path cell so the kinks of the
        // piecewise-linear path are resolved
        let mut n = ((8.0 * epsilon / base.dt()).ceil() as usize).max(Self::MIN_QUADRATURE);
        n = n.min(Self::MAX_QUADRATURE);
        if n % 2 == 0 {
            n += 1;
        }
        let ds = 2.0 / n as f64;
        let nodes: Vec<f64> = (0..n).map(|i| -1.0 + (i as f64 + 0.5) * ds).collect();
        let mut weights: Vec<f64> = nodes.iter().map(|&s| mollifier(s) * ds).collect();
        let mut dweights: Vec<f64> = nodes.iter().map(|&s| mollifier_derivative(s) * ds).collect();
        // exact zeroth moment of ρ and exact first moment of ρ' on the discrete nodes
        let mass: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= mass);
        let moment: f64 = -nodes.iter().zip(&dweights).map(|(s, d)| s * d).sum::<f64>();
        dweights.iter_mut().for_each(|d| *d /= moment);
        Ok(Self {
            base,
            epsilon,
            nodes,
            weights,
            dweights,
        })
    }

    pub fn base(&self) -> &SamplePath {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_channels(&self) -> usize {
        self.base.n_channels()
    }

    pub fn horizon(&self) -> f64 {
        self.base.horizon()
    }

    /// `(z^ε_t, ż^ε_t)`.
    pub fn eval(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.base.check_time(t)?;
        let n = self.n_channels();
        let mut z = vec![0.0; n];
        let mut dz = vec![0.0; n];
        for (k, (zk, dzk)) in z.iter_mut().zip(dz.iter_mut()).enumerate() {
            *zk = self.convolve(k, t, &self.weights);
            *dzk = -self.convolve(k, t, &self.dweights) / self.epsilon;
        }
        Ok((z, dz))
    }

    pub fn value(&self, t: f64) -> Result<Vec<f64>> {
        self.base.check_time(t)?;
        Ok((0..self.n_channels()).map(|k| self.convolve(k, t, &self.weights)).collect())
    }

    /// `Σ_i w_i z_k(t + ε σ_i)`.
    fn convolve(&self, k: usize, t: f64, w: &[f64]) -> f64 {
        let ch = self.base.channel(k);
        let dt = self.base.dt();
        let lo = t + self.epsilon * self.nodes[0];
        let hi = t + self.epsilon * self.nodes[self.nodes.len() - 1];
        if lo <= 0.0 || hi >= (ch.len() - 1) as f64 * dt {
            return self
                .nodes
                .iter()
                .zip(w)
                .map(|(s, w)| w * self.base.eval_extended(k, t + self.epsilon * s))
                .sum();
        }
        let inv = 1.0 / dt;
        let mut acc = 0.0;
        for (s, w) in self.nodes.iter().zip(w) {
            let pos = (t + self.epsilon * s) * inv;
            let i = pos as usize;
            let frac = pos - i as f64;
            acc += w * (ch[i] + frac * (ch[i + 1] - ch[i]));
        }
        acc
    }

    pub fn derivative(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.eval(t)?.1)
    }

    pub fn increment(&self, s: f64, t: f64) -> Result<Vec<f64>> {
        let zs = self.value(s)?;
        let zt = self.value(t)?;
        Ok(zt.iter().zip(&zs).map(|(a, b)| a - b).collect())
    }
}

/// Convenience wrapper matching the operation signature `mollify_eval(path, t)`.
pub fn mollify_eval(path: &MollifiedPath, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    path.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize, dt: f64) -> SamplePath {
        SamplePath::from_samples(vec![(0..=n).map(|i| i as f64 * dt).collect()], dt).unwrap()
    }

    #[test]
    fn from_samples_subtracts_first_value() {
        let p = SamplePath::from_samples(vec![vec![2.0, 3.0, 5.0]], 0.5).unwrap();
        assert_eq!(p.channel(0), &[0.0, 1.0, 3.0]);
        let ramp = SamplePath::from_samples(vec![vec![0.0, 1.0, 2.0]], 1.0).unwrap();
        assert_eq!(ramp.value(2.0).unwrap(), vec![2.0]);
        assert_eq!(ramp.value(1.5).unwrap(), vec![1.5]);
    }

    #[test]
    fn ragged_channels_rejected() {
        let err = SamplePath::from_samples(vec![vec![0.0; 3], vec![0.0; 4]], 1.0).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }

    #[test]
    fn increment_conventions() {
        let p = ramp(4, 0.25);
        assert!((p.increment(0.25, 0.75).unwrap()[0] - 0.5).abs() < 1e-15);
        assert_eq!(p.increment(0.4, 0.4).unwrap()[0], 0.0);
        assert!(p.increment(0.0, 1.5).is_err());
    }

    #[test]
    fn increments_are_additive_on_node_triples() {
        let p = sample_fbm(0.5, 2, 40, 1.0 / 40.0, 9).unwrap();
        for i in 0..=40 {
            for j in i..=40 {
                for k in j..=40 {
                    let (s, t, u) = (i as f64 / 40.0, j as f64 / 40.0, k as f64 / 40.0);
                    let su = p.increment(s, u).unwrap();
                    let st = p.increment(s, t).unwrap();
                    let tu = p.increment(t, u).unwrap();
                    for c in 0..2 {
                        assert!((su[c] - st[c] - tu[c]).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn modulus_of_ramp_is_window() {
        let p = ramp(100, 0.01);
        assert!((p.modulus_of_continuity(0.1, 1.0).unwrap() - 0.1).abs() < 1e-12);
        // below node spacing: single-step increments
        assert!((p.modulus_of_continuity(0.01, 1.0).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn modulus_is_nondecreasing_in_window() {
        let p = sample_fbm(0.4, 1, 128, 1.0 / 128.0, 4).unwrap();
        let mut prev = 0.0;
        for w in 1..=128 {
            let delta = w as f64 / 128.0;
            let omega = p.modulus_of_continuity(delta, 1.0).unwrap();
            // brute force over node pairs
            let ch = p.channel(0);
            let mut brute = 0.0_f64;
            for i in 0..=128 {
                for j in i..=(i + w).min(128) {
                    brute = brute.max((ch[j] - ch[i]).abs());
                }
            }
            assert_eq!(omega, brute);
            assert!(omega >= prev);
            prev = omega;
        }
    }

    #[test]
    fn fbm_zero_steps_is_origin() {
        let p = sample_fbm(0.3, 2, 0, 0.1, 1).unwrap();
        assert_eq!(p.n_steps(), 0);
        assert_eq!(p.channel(1), &[0.0]);
    }

    #[test]
    fn fbm_rejects_bad_hurst() {
        assert!(matches!(sample_fbm(1.0, 1, 4, 0.1, 0), Err(Error::Parameter(_))));
        assert!(matches!(sample_fbm(0.0, 1, 4, 0.1, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn fbm_is_seed_deterministic() {
        let a = sample_fbm(0.7, 3, 64, 0.01, 42).unwrap();
        let b = sample_fbm(0.7, 3, 64, 0.01, 42).unwrap();
        let c = sample_fbm(0.7, 3, 64, 0.01, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn brownian_terminal_variance() {
        let gen = FbmGenerator::new(0.5, 1024, 1.0 / 1024.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| gen.sample_with(1, &mut rng).channel(0)[1024])
            .collect();
        let sq: Vec<f64> = draws.iter().map(|z| z * z).collect();
        let mean = sq.iter().sum::<f64>() / sq.len() as f64;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (sq.len() - 1) as f64;
        let se = (var / sq.len() as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn fbm_variance_at_half() {
        let gen = FbmGenerator::new(0.75, 32, 1.0 / 64.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sq: Vec<f64> = (0..10_000)
            .map(|_| gen.sample_with(1, &mut rng).channel(0)[32].powi(2))
            .collect();
        let mean = sq.iter().sum::<f64>() / sq.len() as f64;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (sq.len() - 1) as f64;
        let se = (var / sq.len() as f64).sqrt();
        let expected = 0.5_f64.powf(1.5);
        assert!((expected - 0.353_553_390_593_273_8).abs() < 1e-15);
        assert!((mean - expected).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn fbm_channels_uncorrelated() {
        let gen = FbmGenerator::new(0.5, 16, 1.0 / 16.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let prod: Vec<f64> = (0..10_000)
            .map(|_| {
                let p = gen.sample_with(2, &mut rng);
                p.channel(0)[16] * p.channel(1)[16]
            })
            .collect();
        let mean = prod.iter().sum::<f64>() / prod.len() as f64;
        let var = prod.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (prod.len() - 1) as f64;
        assert!(mean.abs() <= 3.0 * (var / prod.len() as f64).sqrt());
    }

    #[test]
    fn kernel_has_unit_mass() {
        let n = 100_000;
        let ds = 2.0 / n as f64;
        let mass: f64 = (0..n).map(|i| mollifier(-1.0 + (i as f64 + 0.5) * ds) * ds).sum();
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mollified_zero_path() {
        let p = MollifiedPath::new(SamplePath::zero(2, 100, 0.01).unwrap(), 0.05).unwrap();
        let (z, dz) = p.eval(0.3).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert_eq!(dz, vec![0.0, 0.0]);
    }

    #[test]
    fn mollified_ramp_is_exact_away_from_origin() {
        let p = MollifiedPath::new(ramp(200, 0.01), 0.1).unwrap();
        for &t in &[0.1, 0.25, 0.5, 1.0, 1.9] {
            let (z, dz) = p.eval(t).unwrap();
            assert!((z[0] - t).abs() < 1e-12, "t={t} z={}", z[0]);
            assert!((dz[0] - 1.0).abs() < 1e-12, "t={t} dz={}", dz[0]);
        }
    }

    #[test]
    fn unresolved_kernel_rejected() {
        assert!(MollifiedPath::new(ramp(10, 0.1), 0.15).is_err());
    }

    #[test]
    fn mollification_error_bounded_by_modulus() {
        let base = sample_fbm(0.5, 1, 2048, 1.0 / 1024.0, 3).unwrap();
        let eps = 0.02;
        let p = MollifiedPath::new(base.clone(), eps).unwrap();
        let omega = base.modulus_of_continuity(eps, 2.0).unwrap();
        let mut sup = 0.0_f64;
        for i in 0..=1024 {
            let t = i as f64 / 1024.0;
            sup = sup.max((p.value(t).unwrap()[0] - base.value(t).unwrap()[0]).abs());
        }
        assert!(sup <= omega, "sup {sup} omega {omega}");
    }

    #[test]
    fn derivative_integrates_to_increment() {
        let base = sample_fbm(0.6, 1, 512, 1.0 / 256.0, 8).unwrap();
        let p = MollifiedPath::new(base, 0.05).unwrap();
        let (s, t) = (0.2, 1.3);
        let n = 4000;
        let h = (t - s) / n as f64;
        let integral: f64 = (0..n)
            .map(|i| p.derivative(s + (i as f64 + 0.5) * h).unwrap()[0] * h)
            .sum();
        let inc = p.increment(s, t).unwrap()[0];
        assert!((integral - inc).abs() < 1e-4 * (1.0 + inc.abs()), "{integral} vs {inc}");
    }

    #[test]
    fn csv_roundtrip() {
        let p = sample_fbm(0.3, 2, 10, 0.1, 2).unwrap();
        let q = SamplePath::from_csv(&p.to_csv()).unwrap();
        assert_eq!(p.n_steps(), q.n_steps());
        for k in 0..2 {
            for (a, b) in p.channel(k).iter().zip(q.channel(k)) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn shift_restarts_at_zero() {
        let p = sample_fbm(0.5, 1, 100, 0.01, 1).unwrap();
        let q = p.shifted(0.3).unwrap();
        assert_eq!(q.channel(0)[0], 0.0);
        let expected = p.channel(0)[50] - p.channel(0)[30];
        assert!((q.channel(0)[20] - expected).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn mollification_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0.0f64..0.9, seed in 0u64..50) {
            let z = sample_fbm(0.5, 1, 100, 0.01, seed).unwrap();
            let w = sample_fbm(0.5, 1, 100, 0.01, seed + 1000).unwrap();
            let combo: Vec<f64> = z.channel(0).iter().zip(w.channel(0)).map(|(x, y)| a * x + b * y).collect();
            let c = SamplePath::from_samples(vec![combo], 0.01).unwrap();
            let (mz, mdz) = MollifiedPath::new(z, 0.05).unwrap().eval(t).unwrap();
            let (mw, mdw) = MollifiedPath::new(w, 0.05).unwrap().eval(t).unwrap();
            let (mc, mdc) = MollifiedPath::new(c, 0.05).unwrap().eval(t).unwrap();
            prop_assert!((mc[0] - a * mz[0] - b * mw[0]).abs() < 1e-12);
            prop_assert!((mdc[0] - a * mdz[0] - b * mdw[0]).abs() < 1e-10);
        }
    }
}
