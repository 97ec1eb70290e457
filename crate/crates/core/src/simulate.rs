//! Euler-Maruyama integration of hybrid delay equations.
//!
//! Times live on an absolute grid `t = i * dt` (`i` an integer). For a delay
//! bound `ρ > 0` the step is `dt = ρ / k`, so every observation instant of the
//! sawtooth delay is a grid point and delayed reads of the controlled system
//! hit stored states exactly. The mesh is refined at the exact jump times of
//! the mode path; on every sub-interval the mode is frozen at its left end.

use rand_distr::{Distribution, StandardNormal};

use crate::model::{build_controlled_model, ControlledModelSpec, DelaySpec, HybridDelayModel};
use crate::prelude::*;
use crate::rng::{stream, Purpose};
use crate::switching::{sample_mode_path, Generator, Mode, ModePath};
use crate::{Error, Result};

pub const DEFAULT_BLOWUP_GUARD: f64 = 1e8;

/// Relative tolerance (in units of `dt`) for recognising a time as a grid
/// point.
const GRID_SNAP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Base step; used directly for delay-free models and, when
    /// `steps_per_rho` is unset, required to divide ρ.
    pub dt: f64,
    /// `k` with `dt = ρ / k` for delayed models.
    pub steps_per_rho: Option<u32>,
    pub seed: u64,
    pub blowup_guard: f64,
}

impl SimConfig {
    pub fn new(dt: f64, seed: u64) -> Self {
        SimConfig { dt, steps_per_rho: None, seed, blowup_guard: DEFAULT_BLOWUP_GUARD }
    }

    pub fn per_rho(steps_per_rho: u32, dt: f64, seed: u64) -> Self {
        SimConfig { dt, steps_per_rho: Some(steps_per_rho), seed, blowup_guard: DEFAULT_BLOWUP_GUARD }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SimConfig { seed, ..self }
    }

    /// Grid used for a model whose delay bound is `rho` (0 when delay-free).
    pub fn grid_for(&self, rho: f64) -> Result<TimeGrid> {
        if rho > 0.0 {
            let k = match self.steps_per_rho {
                Some(k) if k >= 1 => k as f64,
                Some(_) => return Err(Error::InvalidArgument("steps_per_rho must be positive".to_string())),
                None => {
                    let k = (rho / self.dt).round();
                    if k < 1.0 || (k * self.dt - rho).abs() > 1e-9 * rho {
                        return Err(Error::GridMisalignment(format!(
                            "rho = {rho} is not an integer multiple of dt = {}",
                            self.dt
                        )));
                    }
                    k
                }
            };
            Ok(TimeGrid { dt: rho / k, steps_per_rho: Some(k as usize) })
        } else {
            if !(self.dt > 0.0 && self.dt.is_finite()) {
                return Err(Error::InvalidArgument(format!("dt = {} must be positive", self.dt)));
            }
            Ok(TimeGrid { dt: self.dt, steps_per_rho: None })
        }
    }
}

/// Absolute time grid `i * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps_per_rho: Option<usize>,
}

impl TimeGrid {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_per_rho(&self) -> Option<usize> {
        self.steps_per_rho
    }

    pub fn time(&self, index: i64) -> f64 {
        index as f64 * self.dt
    }

    /// Grid index of `t` when `t` is a grid point.
    pub fn exact_index(&self, t: f64) -> Option<i64> {
        let i = (t / self.dt).round();
        ((i * self.dt - t).abs() <= GRID_SNAP * self.dt).then_some(i as i64)
    }

    pub fn index(&self, t: f64) -> Result<i64> {
        self.exact_index(t)
            .ok_or_else(|| Error::GridMisalignment(format!("time {t} is not a multiple of dt = {}", self.dt)))
    }

    /// Largest grid index not after `t`.
    pub fn floor_index(&self, t: f64) -> i64 {
        self.exact_index(t).unwrap_or_else(|| (t / self.dt).floor() as i64)
    }
}

/// `m + 1` equally spaced samples of a path over `[t - ρ, t]`, paired with the
/// mode at `t`. With `ρ = 0` it degenerates to a single point of `ℝⁿ × S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGrid {
    rho: f64,
    dim: usize,
    values: Vec<f64>,
    mode: Mode,
}

impl SegmentGrid {
    pub fn new(rho: f64, dim: usize, values: Vec<f64>, mode: Mode) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!("{} samples for dimension {dim}", values.len())));
        }
        let points = values.len() / dim;
        if !(0.0..=1.0).contains(&rho) || (rho == 0.0) != (points == 1) {
            return Err(Error::ShapeMismatch(format!("{points} samples do not fit rho = {rho}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("segment samples must be finite".to_string()));
        }
        Ok(SegmentGrid { rho, dim, values, mode })
    }

    /// Point of `ℝⁿ × S`.
    pub fn point(value: Vec<f64>, mode: Mode) -> Result<Self> {
        let dim = value.len();
        SegmentGrid::new(0.0, dim, value, mode)
    }

    pub fn constant(rho: f64, m: usize, value: &[f64], mode: Mode) -> Result<Self> {
        let points = if rho == 0.0 { 1 } else { m + 1 };
        SegmentGrid::new(rho, value.len(), value.repeat(points), mode)
    }

    /// Sample `f(τ)` at `τ = -ρ + q ρ / m`, `q = 0..=m`.
    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(rho: f64, m: usize, dim: usize, f: F, mode: Mode) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("a segment needs m >= 1".to_string()));
        }
        let mut values = Vec::with_capacity((m + 1) * dim);
        for q in 0..=m {
            let v = f(-rho + rho * q as f64 / m as f64);
            if v.len() != dim {
                return Err(Error::ShapeMismatch(format!("segment function returned {} values", v.len())));
            }
            values.extend(v);
        }
        SegmentGrid::new(rho, dim, values, mode)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn points(&self) -> usize {
        self.values.len() / self.dim
    }

    /// Number of intervals `m`.
    pub fn intervals(&self) -> usize {
        self.points() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, q: usize) -> &[f64] {
        &self.values[q * self.dim..(q + 1) * self.dim]
    }

    /// Value at relative time 0.
    pub fn endpoint(&self) -> &[f64] {
        self.sample(self.points() - 1)
    }

    /// Linear interpolation at relative time `tau ∈ [-ρ, 0]`.
    pub fn at(&self, tau: f64) -> Vec<f64> {
        let m = self.intervals();
        if m == 0 {
            return self.endpoint().to_vec();
        }
        let pos = ((tau + self.rho) / self.rho * m as f64).clamp(0.0, m as f64);
        let lo = (pos.floor() as usize).min(m - 1);
        let w = pos - lo as f64;
        let (a, b) = (self.sample(lo), self.sample(lo + 1));
        a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
    }

    /// Same function on `m + 1` points.
    pub fn resample(&self, m: usize) -> Result<SegmentGrid> {
        if self.rho == 0.0 || m == self.intervals() {
            return Ok(self.clone());
        }
        SegmentGrid::from_fn(self.rho, m, self.dim, |tau| self.at(tau), self.mode)
    }

    /// `sup_τ |ψ(τ)|` over the samples.
    pub fn sup_norm(&self) -> f64 {
        (0..self.points()).map(|q| self.sample(q).iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    /// Projection `(ψ, j) ↦ (ψ(0), j)`.
    pub fn to_point(&self) -> SegmentGrid {
        SegmentGrid { rho: 0.0, dim: self.dim, values: self.endpoint().to_vec(), mode: self.mode }
    }

    /// Same samples under a different mode.
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
}

/// Initial history on `[s - ρ, s]`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSegment {
    Constant(Vec<f64>),
    Grid(SegmentGrid),
}

impl InitialSegment {
    fn dim(&self) -> usize {
        match self {
            InitialSegment::Constant(v) => v.len(),
            InitialSegment::Grid(g) => g.dim(),
        }
    }

    /// Samples at `s - ρ + q dt`, `q = 0..=k` (a single sample when `k = 0`).
    fn history(&self, rho: f64, k: usize) -> Result<Vec<f64>> {
        match self {
            InitialSegment::Constant(v) => Ok(v.repeat(k + 1)),
            InitialSegment::Grid(g) if k == 0 => Ok(g.endpoint().to_vec()),
            InitialSegment::Grid(g) => {
                if (g.rho() - rho).abs() > 1e-12 {
                    return Err(Error::GridMismatch(format!(
                        "initial segment covers rho = {}, model needs {rho}",
                        g.rho()
                    )));
                }
                Ok(g.resample(k)?.values().to_vec())
            }
        }
    }
}

impl From<SegmentGrid> for InitialSegment {
    fn from(g: SegmentGrid) -> Self {
        InitialSegment::Grid(g)
    }
}

/// A sampled solution: states on the base grid refined by mode-jump times,
/// plus the initial history before `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    grid: TimeGrid,
    rho: f64,
    start_index: i64,
    times: Vec<f64>,
    states: Vec<f64>,
    /// Position in `times` of base index `start_index + q`.
    base_positions: Vec<usize>,
    /// History samples at base indices `start_index - k .. start_index`.
    history: Vec<f64>,
    mode_path: ModePath,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
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

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mode_path(&self) -> &ModePath {
        &self.mode_path
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    fn k(&self) -> i64 {
        self.grid.steps_per_rho.unwrap_or(0) as i64
    }

    fn base_value(&self, index: i64) -> Option<&[f64]> {
        let rel = index - self.start_index;
        if rel >= 0 {
            let pos = *self.base_positions.get(rel as usize)?;
            Some(self.state(pos))
        } else {
            let h = rel + self.k();
            if h < 0 {
                return None;
            }
            let h = h as usize;
            if h * self.dim >= self.history.len() {
                return None;
            }
            Some(&self.history[h * self.dim..(h + 1) * self.dim])
        }
    }

    /// `u(t)` for `t ∈ [s - ρ, end]`, linear between stored points.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.state_at_into(t, &mut out)?;
        Ok(out)
    }

    fn state_at_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let out_of_range = || Error::OutOfRange { t, start: self.start() - self.rho, end: self.end() };
        if let Some(i) = self.grid.exact_index(t) {
            let v = self.base_value(i).ok_or_else(out_of_range)?;
            out.copy_from_slice(v);
            return Ok(());
        }
        if t < self.start() {
            let i = self.grid.floor_index(t);
            let (a, b) =
                (self.base_value(i).ok_or_else(out_of_range)?, self.base_value(i + 1).ok_or_else(out_of_range)?);
            let w = (t - self.grid.time(i)) / self.grid.dt;
            for k in 0..self.dim {
                out[k] = a[k] + w * (b[k] - a[k]);
            }
            return Ok(());
        }
        if t > self.end() {
            return Err(out_of_range());
        }
        let p = self.times.partition_point(|&x| x <= t);
        if p >= self.times.len() {
            out.copy_from_slice(self.final_state());
            return Ok(());
        }
        let (ta, tb) = (self.times[p - 1], self.times[p]);
        let w = (t - ta) / (tb - ta);
        let (a, b) = (self.state(p - 1), self.state(p));
        for k in 0..self.dim {
            out[k] = a[k] + w * (b[k] - a[k]);
        }
        Ok(())
    }

    /// The segment `u_t` on `m + 1 = k + 1` points with the mode at `t`. For a
    /// delay-free trajectory this is the single point `(u(t), r(t))`.
    pub fn segment_at(&self, t: f64) -> Result<SegmentGrid> {
        if !(t >= self.start() - GRID_SNAP * self.grid.dt && t <= self.end() + GRID_SNAP * self.grid.dt) {
            return Err(Error::OutOfRange { t, start: self.start(), end: self.end() });
        }
        let t = t.clamp(self.start(), self.end());
        let mode = self.mode_path.mode_at(t)?;
        let k = self.k();
        if k == 0 {
            return SegmentGrid::point(self.state_at(t)?, mode);
        }
        let mut values = vec![0.0; (k as usize + 1) * self.dim];
        match self.grid.exact_index(t) {
            Some(it) => {
                for q in 0..=k {
                    let v = self.base_value(it - k + q).ok_or(Error::OutOfRange {
                        t,
                        start: self.start(),
                        end: self.end(),
                    })?;
                    values[q as usize * self.dim..(q as usize + 1) * self.dim].copy_from_slice(v);
                }
            }
            None => {
                for q in 0..=k {
                    let tau = t - self.rho + q as f64 * self.grid.dt;
                    self.state_at_into(tau, &mut values[q as usize * self.dim..(q as usize + 1) * self.dim])?;
                }
            }
        }
        SegmentGrid::new(self.rho, self.dim, values, mode)
    }

    /// `(u(end), r(end))`.
    pub fn endpoint(&self) -> SegmentGrid {
        let mode = self.mode_path.mode_at(self.end()).expect("path covers its end");
        SegmentGrid { rho: 0.0, dim: self.dim, values: self.final_state().to_vec(), mode }
    }
}

/// Integrate from `(s, ξ, j0)` to `t_end` on path stream `path` of `cfg.seed`.
pub fn integrate(
    m: &HybridDelayModel,
    s: f64,
    xi: &InitialSegment,
    j0: Mode,
    t_end: f64,
    cfg: &SimConfig,
    path: u64,
) -> Result<Trajectory> {
    let grid = cfg.grid_for(m.rho())?;
    integrate_on_grid(m, grid, s, xi, j0, t_end, cfg, path)
}

/// Two solutions from different initial data driven by the same mode path and
/// the same Wiener increments.
#[allow(clippy::too_many_arguments)]
pub fn integrate_pair(
    m: &HybridDelayModel,
    s: f64,
    xi1: &InitialSegment,
    xi2: &InitialSegment,
    j0: Mode,
    t_end: f64,
    cfg: &SimConfig,
    path: u64,
) -> Result<(Trajectory, Trajectory)> {
    Ok((integrate(m, s, xi1, j0, t_end, cfg, path)?, integrate(m, s, xi2, j0, t_end, cfg, path)?))
}

/// The sampled-data system with observation interval `spec.rho` and its
/// continuously observed companion started from `ξ(0)`, sharing grid, mode
/// path and Wiener increments.
#[allow(clippy::too_many_arguments)]
pub fn integrate_coupled_delay_limit(
    spec: &ControlledModelSpec,
    g: &Generator,
    s: f64,
    xi: &SegmentGrid,
    j0: Mode,
    t_end: f64,
    cfg: &SimConfig,
    path: u64,
) -> Result<(Trajectory, Trajectory)> {
    let delayed = build_controlled_model(spec, g)?;
    let free = spec.delay_free_model(g)?;
    let grid = cfg.grid_for(spec.rho)?;
    let with_delay = integrate_on_grid(&delayed, grid, s, &InitialSegment::Grid(xi.clone()), j0, t_end, cfg, path)?;
    let limit = integrate_on_grid(
        &free,
        TimeGrid { steps_per_rho: None, ..grid },
        s,
        &InitialSegment::Constant(xi.endpoint().to_vec()),
        j0,
        t_end,
        cfg,
        path,
    )?;
    Ok((with_delay, limit))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate_on_grid(
    m: &HybridDelayModel,
    grid: TimeGrid,
    s: f64,
    xi: &InitialSegment,
    j0: Mode,
    t_end: f64,
    cfg: &SimConfig,
    path: u64,
) -> Result<Trajectory> {
    let n = m.dim();
    let w = m.noise_dim();
    if xi.dim() != n {
        return Err(Error::ShapeMismatch(format!("initial value has dimension {}, model {n}", xi.dim())));
    }
    let i_s = grid.index(s)?;
    let i_e = grid.index(t_end)?;
    if i_e <= i_s {
        return Err(Error::InvalidArgument(format!("t_end {t_end} must exceed s {s}")));
    }
    let k = grid.steps_per_rho.unwrap_or(0);
    let rho = if k > 0 { m.rho() } else { 0.0 };

    let mode_path = sample_mode_path(m.generator(), j0, s, t_end, &mut stream(cfg.seed, Purpose::Modes, path))?;
    let mut noise = stream(cfg.seed, Purpose::Noise, path);

    let mut hist = xi.history(rho, k)?;
    let initial = hist.split_off(k * n);
    let steps = (i_e - i_s) as usize;
    let capacity = steps + mode_path.jump_times().len() + 1;
    let mut tr = Trajectory {
        dim: n,
        grid,
        rho,
        start_index: i_s,
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity * n),
        base_positions: Vec::with_capacity(steps + 1),
        history: hist,
        mode_path,
    };
    tr.times.push(grid.time(i_s));
    tr.states.extend_from_slice(&initial);
    tr.base_positions.push(0);

    let mut x = initial;
    let mut y = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n * w];
    let mut dw = vec![0.0; w];
    let mut next_jump = 0usize;
    let jumps: Vec<f64> = tr.mode_path.jump_times().to_vec();
    let modes: Vec<Mode> = tr.mode_path.modes().to_vec();

    for i in i_s..i_e {
        let a0 = grid.time(i);
        let b0 = grid.time(i + 1);
        let mut left = a0;
        let mut on_base = true;
        loop {
            let right = match jumps.get(next_jump) {
                Some(&j) if j <= left => {
                    next_jump += 1;
                    continue;
                }
                Some(&j) if j < b0 => j,
                _ => b0,
            };
            let mode = modes[next_jump];

            // delayed argument
            match m.delay() {
                DelaySpec::None => y.copy_from_slice(&x),
                DelaySpec::Sawtooth { .. } => {
                    let obs = i.div_euclid(k as i64) * k as i64;
                    y.copy_from_slice(tr.base_value(obs).expect("observation instant is stored"));
                }
                DelaySpec::Constant { .. } if on_base => {
                    y.copy_from_slice(tr.base_value(i - k as i64).expect("lagged grid point is stored"));
                }
                delay => {
                    let lag = delay.lag(left);
                    tr.state_at_into(left - lag, &mut y)?;
                }
            }

            let h = right - left;
            m.drift(left, mode, &x, &y, &mut f);
            m.diffusion(left, mode, &x, &y, &mut g);
            if f.iter().chain(g.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteCoefficient { t: left, mode: mode.label() as usize });
            }
            let sq = h.sqrt();
            for d in dw.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut noise);
                *d = sq * z;
            }
            let mut norm2 = 0.0;
            for r in 0..n {
                let mut v = x[r] + f[r] * h;
                for c in 0..w {
                    v += g[r * w + c] * dw[c];
                }
                x[r] = v;
                norm2 += v * v;
            }
            if !(norm2.sqrt() <= cfg.blowup_guard) {
                return Err(Error::Blowup { t: right, path: None });
            }
            tr.times.push(right);
            tr.states.extend_from_slice(&x);
            if right == b0 {
                break;
            }
            left = right;
            on_base = false;
        }
        tr.base_positions.push(tr.times.len() - 1);
    }
    Ok(tr)
}
