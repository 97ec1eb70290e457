//! Hybrid delay SDE models
//!
//! ```text
//! du(t) = f(t, r(t), u(t), u(t - ρ₀(t))) dt + g(t, r(t), u(t), u(t - ρ₀(t))) dW(t)
//! ```
//!
//! with `0 ≤ ρ₀(t) ≤ ρ ≤ 1`, plus the sampled-data controlled family
//! `f = h(j, x) + A(j) y`, `g = σ(j, x)` whose delay is the sawtooth
//! `ρ₀(t) = t - ⌊t/ρ⌋ρ`.

mod checks;
mod delay;

pub use checks::{
    check_bounded_at_zero, check_dissipativity_linear, check_dissipativity_sampled, check_lipschitz_sampled,
    BoundednessEstimate, DissipativityCertificate, DissipativityVerdict, LinearModeMatrices, LipschitzEstimate,
    VerificationMethod,
};
pub use delay::{sawtooth_delay, DelaySpec, TabulatedDelay};

use crate::linalg::Mat;
use crate::prelude::*;
use crate::switching::{Generator, Mode};
use crate::{Error, Result};

/// Drift and diffusion of a hybrid delay equation.
///
/// `drift` writes `n` values; `diffusion` writes an `n x m` matrix in
/// row-major order. Implementations must be pure.
pub trait Coefficients: Send + Sync {
    fn drift(&self, t: f64, mode: Mode, x: &[f64], y: &[f64], out: &mut [f64]);
    fn diffusion(&self, t: f64, mode: Mode, x: &[f64], y: &[f64], out: &mut [f64]);
}

/// Coefficients given by two closures.
pub struct FnCoefficients<F, G> {
    drift: F,
    diffusion: G,
}

impl<F, G> FnCoefficients<F, G>
where
    F: Fn(f64, Mode, &[f64], &[f64], &mut [f64]) + Send + Sync,
    G: Fn(f64, Mode, &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(drift: F, diffusion: G) -> Self {
        FnCoefficients { drift, diffusion }
    }
}

impl<F, G> Coefficients for FnCoefficients<F, G>
where
    F: Fn(f64, Mode, &[f64], &[f64], &mut [f64]) + Send + Sync,
    G: Fn(f64, Mode, &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn drift(&self, t: f64, mode: Mode, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.drift)(t, mode, x, y, out)
    }

    fn diffusion(&self, t: f64, mode: Mode, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, mode, x, y, out)
    }
}

/// Per-mode data of a linear model
/// `f = b + F x + A y`, column `c` of `g` = `s_c + G_c x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModeCoefficients {
    pub offset: Vec<f64>,
    pub state: Mat,
    pub delayed: Mat,
    /// `n x m` additive noise.
    pub noise_offset: Mat,
    /// One `n x n` matrix per noise column.
    pub noise_state: Vec<Mat>,
}

impl LinearModeCoefficients {
    /// All-zero coefficients of the given shape.
    pub fn zeros(dim: usize, noise_dim: usize) -> Self {
        LinearModeCoefficients {
            offset: vec![0.0; dim],
            state: Mat::zeros(dim, dim),
            delayed: Mat::zeros(dim, dim),
            noise_offset: Mat::zeros(dim, noise_dim),
            noise_state: vec![Mat::zeros(dim, dim); noise_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoefficients {
    dim: usize,
    noise_dim: usize,
    modes: Vec<LinearModeCoefficients>,
}

impl LinearCoefficients {
    pub fn new(dim: usize, noise_dim: usize, modes: Vec<LinearModeCoefficients>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::ShapeMismatch("linear model needs at least one mode".to_string()));
        }
        for (k, m) in modes.iter().enumerate() {
            let ok = m.offset.len() == dim
                && (m.state.rows(), m.state.cols()) == (dim, dim)
                && (m.delayed.rows(), m.delayed.cols()) == (dim, dim)
                && (m.noise_offset.rows(), m.noise_offset.cols()) == (dim, noise_dim)
                && m.noise_state.len() == noise_dim
                && m.noise_state.iter().all(|g| (g.rows(), g.cols()) == (dim, dim));
            if !ok {
                return Err(Error::ShapeMismatch(format!(
                    "mode {} coefficients do not match dim {dim}, noise_dim {noise_dim}",
                    k + 1
                )));
            }
        }
        Ok(LinearCoefficients { dim, noise_dim, modes })
    }

    pub fn modes(&self) -> &[LinearModeCoefficients] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }
}

impl Coefficients for LinearCoefficients {
    fn drift(&self, _t: f64, mode: Mode, x: &[f64], y: &[f64], out: &mut [f64]) {
        let m = &self.modes[mode.index()];
        out.copy_from_slice(&m.offset);
        m.state.mul_vec_add(x, out);
        m.delayed.mul_vec_add(y, out);
    }

    fn diffusion(&self, _t: f64, mode: Mode, x: &[f64], _y: &[f64], out: &mut [f64]) {
        let m = &self.modes[mode.index()];
        out.copy_from_slice(m.noise_offset.as_slice());
        let (n, w) = (self.dim, self.noise_dim);
        for (c, g) in m.noise_state.iter().enumerate() {
            for r in 0..n {
                out[r * w + c] += g.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
}

/// A hybrid delay SDE: coefficients, delay, and the switching generator.
#[derive(Clone)]
pub struct HybridDelayModel {
    dim: usize,
    noise_dim: usize,
    coefficients: Arc<dyn Coefficients>,
    delay: DelaySpec,
    generator: Generator,
}

impl core::fmt::Debug for HybridDelayModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("HybridDelayModel")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("delay", &self.delay)
            .field("n_states", &self.generator.n_states())
            .finish_non_exhaustive()
    }
}

impl HybridDelayModel {
    pub fn new(
        dim: usize,
        noise_dim: usize,
        coefficients: Arc<dyn Coefficients>,
        delay: DelaySpec,
        generator: Generator,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ShapeMismatch("state dimension must be positive".to_string()));
        }
        delay.validate()?;
        Ok(HybridDelayModel { dim, noise_dim, coefficients, delay, generator })
    }

    /// Linear model with validated per-mode matrices.
    pub fn linear(coefficients: LinearCoefficients, delay: DelaySpec, generator: Generator) -> Result<Self> {
        if coefficients.modes().len() != generator.n_states() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficient modes for a {}-state generator",
                coefficients.modes().len(),
                generator.n_states()
            )));
        }
        let (dim, noise_dim) = (coefficients.dim(), coefficients.noise_dim());
        HybridDelayModel::new(dim, noise_dim, Arc::new(coefficients), delay, generator)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn delay(&self) -> &DelaySpec {
        &self.delay
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// Maximal delay ρ, or 0 for the delay-free model.
    pub fn rho(&self) -> f64 {
        self.delay.rho()
    }

    pub fn coefficients(&self) -> &Arc<dyn Coefficients> {
        &self.coefficients
    }

    pub fn drift(&self, t: f64, mode: Mode, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.coefficients.drift(t, mode, x, y, out);
    }

    pub fn diffusion(&self, t: f64, mode: Mode, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.coefficients.diffusion(t, mode, x, y, out);
    }

    /// Same coefficients with a different delay.
    pub fn with_delay(&self, delay: DelaySpec) -> Result<Self> {
        delay.validate()?;
        Ok(HybridDelayModel { delay, ..self.clone() })
    }
}

/// `(j, x) -> ℝⁿ`
pub trait ModeVectorField: Send + Sync {
    fn eval(&self, mode: Mode, x: &[f64], out: &mut [f64]);
}

/// `(j, x) -> ℝ^{n x m}`, written row-major.
pub trait ModeMatrixField: Send + Sync {
    fn eval(&self, mode: Mode, x: &[f64], out: &mut [f64]);
}

impl<F> ModeVectorField for F
where
    F: Fn(Mode, &[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, mode: Mode, x: &[f64], out: &mut [f64]) {
        self(mode, x, out)
    }
}

/// `x ↦ F_j x` per mode, optionally minus the componentwise cube `x³`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearField {
    pub matrices: Vec<Mat>,
    pub cubic_damping: bool,
}

impl ModeVectorField for LinearField {
    fn eval(&self, mode: Mode, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.matrices[mode.index()].mul_vec_add(x, out);
        if self.cubic_damping {
            for (o, v) in out.iter_mut().zip(x) {
                *o -= v * v * v;
            }
        }
    }
}

/// Column `c` of `σ(j, x)` is `s_{j,c} + G_{j,c} x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNoise {
    /// Per mode, `n x m`.
    pub offsets: Vec<Mat>,
    /// Per mode, one `n x n` matrix per noise column.
    pub columns: Vec<Vec<Mat>>,
}

impl ModeMatrixField for LinearNoise {
    fn eval(&self, mode: Mode, x: &[f64], out: &mut [f64]) {
        let offset = &self.offsets[mode.index()];
        out.copy_from_slice(offset.as_slice());
        let m = offset.cols();
        for (c, g) in self.columns[mode.index()].iter().enumerate() {
            for r in 0..g.rows() {
                out[r * m + c] += g.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
}

/// Look up a named uncontrolled drift `h`.
///
/// - `"linear"`: `h(j, x) = F_j x`
/// - `"cubic"`: `h(j, x) = F_j x - x³` (componentwise cube)
pub fn named_drift(name: &str, matrices: Vec<Mat>) -> Result<Arc<dyn ModeVectorField>> {
    let cubic_damping = match name {
        "linear" => false,
        "cubic" => true,
        other => return Err(Error::InvalidArgument(format!("unknown drift `{other}` (known: linear, cubic)"))),
    };
    Ok(Arc::new(LinearField { matrices, cubic_damping }))
}

/// Uncontrolled coefficients `h`, `σ` together with per-mode feedback gains
/// `A(j)` and observation interval `ρ`.
#[derive(Clone)]
pub struct ControlledModelSpec {
    pub dim: usize,
    pub noise_dim: usize,
    pub h: Arc<dyn ModeVectorField>,
    pub sigma: Arc<dyn ModeMatrixField>,
    pub gains: Vec<Mat>,
    pub rho: f64,
}

impl core::fmt::Debug for ControlledModelSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ControlledModelSpec")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("gains", &self.gains)
            .field("rho", &self.rho)
            .finish_non_exhaustive()
    }
}

impl ControlledModelSpec {
    pub fn with_rho(&self, rho: f64) -> Self {
        ControlledModelSpec { rho, ..self.clone() }
    }

    /// Same `h`, `σ` with every gain set to zero.
    pub fn uncontrolled(&self) -> Self {
        let gains = self.gains.iter().map(|g| Mat::zeros(g.rows(), g.cols())).collect();
        ControlledModelSpec { gains, ..self.clone() }
    }

    fn validate(&self, g: &Generator) -> Result<()> {
        if self.gains.len() != g.n_states() {
            return Err(Error::ShapeMismatch(format!("{} gain matrices for {} modes", self.gains.len(), g.n_states())));
        }
        if let Some((k, a)) = self.gains.iter().enumerate().find(|(_, a)| (a.rows(), a.cols()) != (self.dim, self.dim))
        {
            return Err(Error::ShapeMismatch(format!(
                "gain for mode {} is {}x{}, expected {}x{}",
                k + 1,
                a.rows(),
                a.cols(),
                self.dim,
                self.dim
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidArgument(format!("observation interval {} outside (0, 1]", self.rho)));
        }
        Ok(())
    }

    /// The continuously observed system `du = (h(r,u) + A(r) u) dt + σ(r,u) dW`.
    pub fn delay_free_model(&self, g: &Generator) -> Result<HybridDelayModel> {
        self.validate(g)?;
        let coefficients = ControlledCoefficients {
            h: self.h.clone(),
            sigma: self.sigma.clone(),
            gains: self.gains.clone(),
            feedback_on_current_state: true,
        };
        HybridDelayModel::new(self.dim, self.noise_dim, Arc::new(coefficients), DelaySpec::None, g.clone())
    }
}

struct ControlledCoefficients {
    h: Arc<dyn ModeVectorField>,
    sigma: Arc<dyn ModeMatrixField>,
    gains: Vec<Mat>,
    feedback_on_current_state: bool,
}

impl Coefficients for ControlledCoefficients {
    fn drift(&self, _t: f64, mode: Mode, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.h.eval(mode, x, out);
        let fed_back = if self.feedback_on_current_state { x } else { y };
        self.gains[mode.index()].mul_vec_add(fed_back, out);
    }

    fn diffusion(&self, _t: f64, mode: Mode, x: &[f64], _y: &[f64], out: &mut [f64]) {
        self.sigma.eval(mode, x, out);
    }
}

/// Assemble `f(t, j, x, y) = h(j, x) + A(j) y`, `g = σ(j, x)` with the
/// sawtooth observation delay.
pub fn build_controlled_model(spec: &ControlledModelSpec, g: &Generator) -> Result<HybridDelayModel> {
    spec.validate(g)?;
    let coefficients = ControlledCoefficients {
        h: spec.h.clone(),
        sigma: spec.sigma.clone(),
        gains: spec.gains.clone(),
        feedback_on_current_state: false,
    };
    HybridDelayModel::new(
        spec.dim,
        spec.noise_dim,
        Arc::new(coefficients),
        DelaySpec::Sawtooth { rho: spec.rho },
        g.clone(),
    )
}
