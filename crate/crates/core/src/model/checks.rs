//! Numerical checks of the standing assumptions: global Lipschitz bounds,
//! boundedness of the coefficients at the origin, and the mode-coupled
//! dissipativity inequality
//!
//! ```text
//! 2(x-y)ᵀQ_j[f(j,x,x) - f(j,y,y)] + tr[(g(j,x)-g(j,y))ᵀ Q_j (g(j,x)-g(j,y))]
//!     + Σ_i γ_ji (x-y)ᵀ Q_i (x-y)  ≤  -β |x-y|²
//! ```
//!
//! Only the linear dissipativity test certifies anything. The sampled
//! checks are diagnostics: they maximise difference quotients over random
//! probes and can only ever under-estimate a supremum.

use rand::Rng;

use super::HybridDelayModel;
use crate::linalg::{self, Mat};
use crate::prelude::*;
use crate::switching::{Generator, Mode};
use crate::{Error, Result};

pub const MIN_PROBES: usize = 100;

/// Sampled lower estimates of the Lipschitz constants of `f` and `g` in the
/// additive form `|f(t,j,x₁,y₁) - f(t,j,x₂,y₂)| ≤ L (|x₁-x₂| + |y₁-y₂|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub drift: f64,
    pub diffusion: f64,
    pub probes: usize,
}

/// Per-mode maxima of `|f(t,j,0,0)|` and `|g(t,j,0,0)|` over a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessEstimate {
    pub drift_sup: Vec<f64>,
    pub diffusion_sup: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerificationMethod {
    AnalyticLinear,
    Sampled { probes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityCertificate {
    pub q: Vec<Mat>,
    pub beta: f64,
    pub verified_on: VerificationMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DissipativityVerdict {
    Certified(DissipativityCertificate),
    /// `lambda_max` is the largest eigenvalue of the mode's matrix; it is
    /// non-negative, so no β > 0 works.
    Refuted {
        mode: Mode,
        lambda_max: f64,
    },
}

impl DissipativityVerdict {
    pub fn beta(&self) -> Option<f64> {
        match self {
            DissipativityVerdict::Certified(c) => Some(c.beta),
            DissipativityVerdict::Refuted { .. } => None,
        }
    }
}

/// Linear model data for one mode: `f(j,x,y) = F x + A y`, `g(j,x)` has
/// columns `G_c x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModeMatrices {
    pub state: Mat,
    pub gain: Mat,
    pub noise: Vec<Mat>,
}

fn euclid(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn uniform_box<R: Rng + ?Sized>(rng: &mut R, radius: f64, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.random_range(-radius..=radius);
    }
}

fn check_probe_count(probe_count: usize) -> Result<()> {
    if probe_count < MIN_PROBES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_PROBES} probes, got {probe_count}")));
    }
    Ok(())
}

fn finite_or(values: &[f64], t: f64, mode: Mode) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteCoefficient { t, mode: mode.label() as usize })
    }
}

/// Maximise the Lipschitz quotients over random `(t, j, x₁, x₂, y₁, y₂)` in
/// `[-R, R]`. Not a certificate.
pub fn check_lipschitz_sampled<R: Rng + ?Sized>(
    m: &HybridDelayModel,
    probe_count: usize,
    box_radius: f64,
    rng: &mut R,
) -> Result<LipschitzEstimate> {
    check_probe_count(probe_count)?;
    let (n, w) = (m.dim(), m.noise_dim());
    let modes = m.generator().n_states();
    let (mut x1, mut x2, mut y1, mut y2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut f1, mut f2) = (vec![0.0; n], vec![0.0; n]);
    let (mut g1, mut g2) = (vec![0.0; n * w], vec![0.0; n * w]);
    let (mut lf, mut lg) = (0.0f64, 0.0f64);
    for _ in 0..probe_count {
        let t = rng.random_range(-box_radius..=box_radius);
        let mode = Mode::from_index(rng.random_range(0..modes));
        uniform_box(rng, box_radius, &mut x1);
        uniform_box(rng, box_radius, &mut x2);
        uniform_box(rng, box_radius, &mut y1);
        uniform_box(rng, box_radius, &mut y2);
        let denom = euclid(x1.iter().zip(&x2).map(|(a, b)| a - b)) + euclid(y1.iter().zip(&y2).map(|(a, b)| a - b));
        if denom < 1e-12 {
            continue;
        }
        m.drift(t, mode, &x1, &y1, &mut f1);
        m.drift(t, mode, &x2, &y2, &mut f2);
        m.diffusion(t, mode, &x1, &y1, &mut g1);
        m.diffusion(t, mode, &x2, &y2, &mut g2);
        for v in [&f1, &f2, &g1, &g2] {
            finite_or(v, t, mode)?;
        }
        lf = lf.max(euclid(f1.iter().zip(&f2).map(|(a, b)| a - b)) / denom);
        lg = lg.max(euclid(g1.iter().zip(&g2).map(|(a, b)| a - b)) / denom);
    }
    Ok(LipschitzEstimate { drift: lf, diffusion: lg, probes: probe_count })
}

pub fn check_bounded_at_zero(m: &HybridDelayModel, t_grid: &[f64]) -> Result<BoundednessEstimate> {
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("time grid is empty".to_string()));
    }
    let (n, w) = (m.dim(), m.noise_dim());
    let zero = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n * w];
    let mut out = BoundednessEstimate { drift_sup: Vec::new(), diffusion_sup: Vec::new() };
    for mode in m.generator().modes() {
        let (mut sf, mut sg) = (0.0f64, 0.0f64);
        for &t in t_grid {
            m.drift(t, mode, &zero, &zero, &mut f);
            m.diffusion(t, mode, &zero, &zero, &mut g);
            finite_or(&f, t, mode)?;
            finite_or(&g, t, mode)?;
            sf = sf.max(euclid(f.iter().copied()));
            sg = sg.max(euclid(g.iter().copied()));
        }
        out.drift_sup.push(sf);
        out.diffusion_sup.push(sg);
    }
    Ok(out)
}

fn check_spd(q: &[Mat], n: usize) -> Result<()> {
    for (k, qj) in q.iter().enumerate() {
        if (qj.rows(), qj.cols()) != (n, n) {
            return Err(Error::ShapeMismatch(format!("Q for mode {} must be {n}x{n}", k + 1)));
        }
        let scale = qj.as_slice().iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if !qj.is_finite() || qj.max_asymmetry() > 1e-12 * scale || !(linalg::min_eigenvalue(qj) > 0.0) {
            return Err(Error::NotSpd { mode: k + 1 });
        }
    }
    Ok(())
}

/// Eigenvalue test of the dissipativity inequality for linear models,
/// evaluated on the diagonal `y = x` of the drift. Certifies
/// `β = -max_j λ_max(M_j)` when that is positive.
pub fn check_dissipativity_linear(
    modes: &[LinearModeMatrices],
    g: &Generator,
    q: &[Mat],
) -> Result<DissipativityVerdict> {
    let n_modes = g.n_states();
    if modes.len() != n_modes || q.len() != n_modes {
        return Err(Error::ShapeMismatch(format!(
            "{} mode matrices and {} Q matrices for {n_modes} modes",
            modes.len(),
            q.len()
        )));
    }
    let n = modes[0].state.rows();
    for (k, mm) in modes.iter().enumerate() {
        let shapes_ok = [&mm.state, &mm.gain].into_iter().chain(&mm.noise).all(|a| (a.rows(), a.cols()) == (n, n));
        if !shapes_ok {
            return Err(Error::ShapeMismatch(format!("mode {} matrices must all be {n}x{n}", k + 1)));
        }
    }
    check_spd(q, n)?;

    let mut worst: Option<(Mode, f64)> = None;
    for (j, mm) in modes.iter().enumerate() {
        let closed = mm.state.add(&mm.gain);
        let qj = &q[j];
        let mut mj = qj.matmul(&closed).add(&closed.transpose().matmul(qj));
        for gc in &mm.noise {
            mj = mj.add(&gc.transpose().matmul(qj).matmul(gc));
        }
        for (i, qi) in q.iter().enumerate() {
            let rate = g.rates().get(j, i);
            if rate != 0.0 {
                mj = mj.add(&qi.scale(rate));
            }
        }
        let lambda = linalg::max_eigenvalue(&mj);
        if worst.is_none_or(|(_, l)| lambda > l) {
            worst = Some((Mode::from_index(j), lambda));
        }
    }
    let (mode, lambda_max) = worst.expect("at least one mode");
    if lambda_max < 0.0 {
        Ok(DissipativityVerdict::Certified(DissipativityCertificate {
            q: q.to_vec(),
            beta: -lambda_max,
            verified_on: VerificationMethod::AnalyticLinear,
        }))
    } else {
        Ok(DissipativityVerdict::Refuted { mode, lambda_max })
    }
}

fn quad(q: &Mat, v: &[f64]) -> f64 {
    q.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Minimum over random probes of `-LHS / |x - y|²` for the dissipativity
/// inequality, with time also sampled in `[-R, R]`. Probes with
/// `|x - y| < 1e-12` are skipped.
pub fn check_dissipativity_sampled<R: Rng + ?Sized>(
    m: &HybridDelayModel,
    q: &[Mat],
    probe_count: usize,
    box_radius: f64,
    rng: &mut R,
) -> Result<f64> {
    check_probe_count(probe_count)?;
    let g = m.generator();
    if q.len() != g.n_states() {
        return Err(Error::ShapeMismatch(format!("{} Q matrices for {} modes", q.len(), g.n_states())));
    }
    let (n, w) = (m.dim(), m.noise_dim());
    check_spd(q, n)?;
    let (mut x, mut y, mut diff) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut fx, mut fy) = (vec![0.0; n], vec![0.0; n]);
    let (mut gx, mut gy) = (vec![0.0; n * w], vec![0.0; n * w]);
    let mut col = vec![0.0; n];
    let mut estimate = f64::INFINITY;
    let mut used = 0usize;
    for _ in 0..probe_count {
        let t = rng.random_range(-box_radius..=box_radius);
        let j = Mode::from_index(rng.random_range(0..g.n_states()));
        uniform_box(rng, box_radius, &mut x);
        uniform_box(rng, box_radius, &mut y);
        for k in 0..n {
            diff[k] = x[k] - y[k];
        }
        let dist2: f64 = diff.iter().map(|d| d * d).sum();
        if dist2.sqrt() < 1e-12 {
            continue;
        }
        m.drift(t, j, &x, &x, &mut fx);
        m.drift(t, j, &y, &y, &mut fy);
        m.diffusion(t, j, &x, &x, &mut gx);
        m.diffusion(t, j, &y, &y, &mut gy);
        for v in [&fx, &fy, &gx, &gy] {
            finite_or(v, t, j)?;
        }
        let qj = &q[j.index()];
        let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        let mut lhs = 2.0 * qj.mul_vec(&df).iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>();
        for c in 0..w {
            for r in 0..n {
                col[r] = gx[r * w + c] - gy[r * w + c];
            }
            lhs += quad(qj, &col);
        }
        for (i, qi) in q.iter().enumerate() {
            let rate = g.rates().get(j.index(), i);
            if rate != 0.0 {
                lhs += rate * quad(qi, &diff);
            }
        }
        estimate = estimate.min(-lhs / dist2);
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidArgument("every probe was degenerate".to_string()));
    }
    Ok(estimate)
}
