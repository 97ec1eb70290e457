//! The switching chain r(t): generator validation, stationary law and exact
//! (Gillespie) sampling of mode paths.

use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::linalg::{self, Mat};
use crate::prelude::*;
use crate::{Error, Result};

/// Absolute tolerance on generator row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A mode of the switching chain, labelled `1..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mode(u32);

impl Mode {
    /// Mode with 1-based label `label`. Panics on 0.
    pub fn new(label: u32) -> Self {
        assert!(label >= 1, "modes are labelled from 1");
        Mode(label)
    }

    pub fn from_index(index: usize) -> Self {
        Mode(index as u32 + 1)
    }

    pub fn label(self) -> u32 {
        self.0
    }

    /// 0-based position, for indexing per-mode tables.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Transition-rate matrix of the switching chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    rates: Mat,
}

impl Generator {
    /// Validated generator.
    pub fn new(rates: Mat) -> Result<Self> {
        let g = Generator::new_unchecked(rates)?;
        validate_generator(&g)?;
        Ok(g)
    }

    /// Square-shape check only. Meant for limiting cases such as a single
    /// absorbing mode or a reducible chain used in tests.
    pub fn new_unchecked(rates: Mat) -> Result<Self> {
        if !rates.is_square() || rates.rows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "generator must be square and non-empty, got {}x{}",
                rates.rows(),
                rates.cols()
            )));
        }
        Ok(Generator { rates })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Generator::new(Mat::from_rows(rows)?)
    }

    /// The single-mode chain `[[0]]`.
    pub fn single_mode() -> Self {
        Generator { rates: Mat::zeros(1, 1) }
    }

    pub fn n_states(&self) -> usize {
        self.rates.rows()
    }

    pub fn rates(&self) -> &Mat {
        &self.rates
    }

    /// γ_ij
    pub fn rate(&self, from: Mode, to: Mode) -> f64 {
        self.rates.get(from.index(), to.index())
    }

    /// Total exit rate −r_ii of a mode.
    pub fn exit_rate(&self, mode: Mode) -> f64 {
        -self.rates.get(mode.index(), mode.index())
    }

    pub fn contains(&self, mode: Mode) -> bool {
        mode.index() < self.n_states()
    }

    pub fn modes(&self) -> impl Iterator<Item = Mode> {
        (0..self.n_states()).map(Mode::from_index)
    }

    pub(crate) fn check_mode(&self, mode: Mode) -> Result<()> {
        if self.contains(mode) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("mode {mode} outside 1..={}", self.n_states())))
        }
    }
}

/// Check positivity of off-diagonal rates and zero row sums. Indices in the
/// errors are 1-based like the modes.
pub fn validate_generator(g: &Generator) -> Result<()> {
    let n = g.n_states();
    let q = g.rates();
    for i in 0..n {
        for j in 0..n {
            let r = q.get(i, j);
            if i != j && !(r > 0.0) {
                return Err(Error::NonPositiveRate { row: i + 1, col: j + 1, rate: r });
            }
        }
        let sum: f64 = q.row(i).iter().sum();
        if !(sum.abs() <= ROW_SUM_TOL) {
            return Err(Error::RowSumViolation { row: i + 1, sum });
        }
    }
    Ok(())
}

/// Solve πΓ = 0, Σπ = 1.
pub fn stationary_distribution(g: &Generator) -> Result<Vec<f64>> {
    let n = g.n_states();
    // Rows of Γᵀ are the balance equations; the last one is replaced by the
    // normalisation.
    let mut a = g.rates().transpose();
    for c in 0..n {
        a.set(n - 1, c, 1.0);
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let pi = linalg::solve(&a, &b)?;
    if pi.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::SingularSystem(format!("non-positive stationary weights {pi:?}")));
    }
    let residual = (0..n).map(|j| (0..n).map(|i| pi[i] * g.rates().get(i, j)).sum::<f64>().abs()).fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(Error::SingularSystem(format!("residual {residual:e} of the balance equations")));
    }
    Ok(pi)
}

/// Right-continuous step path of the switching chain over
/// `[start_time, end_time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePath {
    start_time: f64,
    end_time: f64,
    jump_times: Vec<f64>,
    modes: Vec<Mode>,
}

impl ModePath {
    pub fn new(start_time: f64, end_time: f64, jump_times: Vec<f64>, modes: Vec<Mode>) -> Result<Self> {
        if modes.len() != jump_times.len() + 1 {
            return Err(Error::ShapeMismatch("modes must be one longer than jump_times".to_string()));
        }
        if !(end_time >= start_time) {
            return Err(Error::InvalidArgument("end_time before start_time".to_string()));
        }
        let mut prev = start_time;
        for &t in &jump_times {
            if !(t > prev) || t > end_time {
                return Err(Error::InvalidArgument(format!("jump time {t} not increasing inside the horizon")));
            }
            prev = t;
        }
        if modes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("consecutive modes must differ".to_string()));
        }
        Ok(ModePath { start_time, end_time, jump_times, modes })
    }

    /// Path that stays in `mode` on the whole horizon.
    pub fn constant(mode: Mode, start_time: f64, end_time: f64) -> Self {
        ModePath { start_time, end_time, jump_times: Vec::new(), modes: vec![mode] }
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Mode in force at `t` (right-continuous).
    pub fn mode_at(&self, t: f64) -> Result<Mode> {
        if !(t >= self.start_time && t <= self.end_time) {
            return Err(Error::OutOfRange { t, start: self.start_time, end: self.end_time });
        }
        Ok(self.modes[self.jump_times.partition_point(|&j| j <= t)])
    }

    /// Jump times strictly inside `(a, b)`.
    pub fn jumps_between(&self, a: f64, b: f64) -> &[f64] {
        let lo = self.jump_times.partition_point(|&j| j <= a);
        let hi = self.jump_times.partition_point(|&j| j < b);
        &self.jump_times[lo..hi.max(lo)]
    }

    /// Fraction of the horizon spent in each mode.
    pub fn occupation_fractions(&self, n_states: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n_states];
        let span = self.end_time - self.start_time;
        if span <= 0.0 {
            occ[self.modes[0].index()] = 1.0;
            return occ;
        }
        let mut left = self.start_time;
        for (k, &mode) in self.modes.iter().enumerate() {
            let right = self.jump_times.get(k).copied().unwrap_or(self.end_time);
            occ[mode.index()] += right - left;
            left = right;
        }
        occ.iter_mut().for_each(|o| *o /= span);
        occ
    }
}

/// Exact simulation of the chain from `(s, j0)` until `t_end`: Exponential
/// holding times with rate −r_ii and jumps to `j` with probability
/// r_ij / (−r_ii).
pub fn sample_mode_path<R: Rng + ?Sized>(g: &Generator, j0: Mode, s: f64, t_end: f64, rng: &mut R) -> Result<ModePath> {
    g.check_mode(j0)?;
    if !(t_end > s) {
        return Err(Error::InvalidArgument(format!("t_end {t_end} must exceed s {s}")));
    }
    let n = g.n_states();
    let mut jumps = Vec::new();
    let mut modes = vec![j0];
    let mut t = s;
    let mut current = j0;
    loop {
        let exit = g.exit_rate(current);
        if !(exit > 0.0) {
            break;
        }
        let hold: f64 = Exp1.sample(rng);
        t += hold / exit;
        if t > t_end {
            break;
        }
        let mut u = rng.random::<f64>() * exit;
        let mut next = None;
        for j in 0..n {
            if j == current.index() {
                continue;
            }
            let r = g.rates().get(current.index(), j);
            if r <= 0.0 {
                continue;
            }
            next = Some(j);
            if u < r {
                break;
            }
            u -= r;
        }
        // `next` ends on the last admissible state when rounding exhausts u.
        let Some(j) = next else { break };
        current = Mode::from_index(j);
        jumps.push(t);
        modes.push(current);
    }
    Ok(ModePath { start_time: s, end_time: t_end, jump_times: jumps, modes })
}
