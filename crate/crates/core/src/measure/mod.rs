//! Empirical probability measures on segment space × modes (or on ℝⁿ × modes
//! for delay-free systems), their Monte-Carlo construction and the
//! bounded-Lipschitz distance between them.

mod bl;
mod transport;

use alloc::collections::BTreeMap;

use rand::Rng;

use crate::model::HybridDelayModel;
use crate::par::try_map_indexed;
use crate::prelude::*;
use crate::rng::{stream, Purpose};
use crate::simulate::{integrate, InitialSegment, SegmentGrid, SimConfig};
use crate::switching::Mode;
use crate::{Error, Result};

pub use bl::bl_distance;

pub const DEFAULT_ATOM_CAP: usize = 400;

/// Distance between modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeMetric {
    /// `|j₁ − j₂|` on the labels.
    #[default]
    LabelDifference,
    /// `1` when the modes differ.
    Discrete,
}

impl ModeMetric {
    pub fn distance(self, a: Mode, b: Mode) -> f64 {
        match self {
            ModeMetric::LabelDifference => (a.label() as f64 - b.label() as f64).abs(),
            ModeMetric::Discrete => f64::from(u8::from(a != b)),
        }
    }
}

/// How points of the state space are compared. Segments use the maximum
/// Euclidean deviation over their shared samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSpec {
    pub mode_metric: ModeMetric,
    /// Measures whose support (after merging identical atoms) is larger are
    /// replaced by this many i.i.d. draws before the distance is computed;
    /// 0 disables the cap.
    pub atom_cap: usize,
    pub subsample_seed: u64,
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec { mode_metric: ModeMetric::LabelDifference, atom_cap: DEFAULT_ATOM_CAP, subsample_seed: 0 }
    }
}

/// Which space the atoms of a measure live in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Space {
    Segment { rho: f64, points: usize, dim: usize },
    State { dim: usize },
}

impl Space {
    pub fn of(point: &SegmentGrid) -> Space {
        if point.rho() == 0.0 {
            Space::State { dim: point.dim() }
        } else {
            Space::Segment { rho: point.rho(), points: point.points(), dim: point.dim() }
        }
    }

    fn compatible(&self, other: &Space) -> bool {
        match (self, other) {
            (Space::State { dim: a }, Space::State { dim: b }) => a == b,
            (Space::Segment { rho: r1, points: p1, dim: d1 }, Space::Segment { rho: r2, points: p2, dim: d2 }) => {
                (r1 - r2).abs() <= 1e-12 && p1 == p2 && d1 == d2
            }
            _ => false,
        }
    }
}

/// `‖ξ₁ − ξ₂‖ + mode distance`.
pub fn h_distance(a: &SegmentGrid, b: &SegmentGrid, spec: &MetricSpec) -> Result<f64> {
    if !Space::of(a).compatible(&Space::of(b)) {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", Space::of(a), Space::of(b))));
    }
    let dim = a.dim();
    let mut sup = 0.0f64;
    for (x, y) in a.values().chunks_exact(dim).zip(b.values().chunks_exact(dim)) {
        let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
        sup = sup.max(d2);
    }
    Ok(sup.sqrt() + spec.mode_metric.distance(a.mode(), b.mode()))
}

/// A probability measure with finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    space: Space,
    atoms: Vec<SegmentGrid>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<SegmentGrid>, weights: Vec<f64>) -> Result<Self> {
        let first = atoms.first().ok_or_else(|| Error::InvalidArgument("a measure needs an atom".to_string()))?;
        if atoms.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!("{} atoms, {} weights", atoms.len(), weights.len())));
        }
        let space = Space::of(first);
        if let Some(bad) = atoms.iter().find(|a| !space.compatible(&Space::of(a))) {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", space, Space::of(bad))));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("weights must be positive".to_string()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
        }
        Ok(EmpiricalMeasure { space, atoms, weights })
    }

    pub fn uniform(atoms: Vec<SegmentGrid>) -> Result<Self> {
        let w = 1.0 / atoms.len().max(1) as f64;
        let n = atoms.len();
        EmpiricalMeasure::new(atoms, vec![w; n])
    }

    pub fn dirac(atom: SegmentGrid) -> Self {
        EmpiricalMeasure { space: Space::of(&atom), atoms: vec![atom], weights: vec![1.0] }
    }

    /// `λ self + (1 − λ) other`.
    pub fn mixture(&self, lambda: f64, other: &EmpiricalMeasure) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidArgument(format!("mixing weight {lambda} outside (0, 1)")));
        }
        self.check_compatible(other)?;
        let atoms = self.atoms.iter().chain(&other.atoms).cloned().collect();
        let weights =
            self.weights.iter().map(|w| lambda * w).chain(other.weights.iter().map(|w| (1.0 - lambda) * w)).collect();
        EmpiricalMeasure::new(atoms, weights)
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn atoms(&self) -> &[SegmentGrid] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn check_compatible(&self, other: &EmpiricalMeasure) -> Result<()> {
        if self.space.compatible(&other.space) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.space, other.space)))
        }
    }

    /// Merge identical atoms, keeping first-appearance order.
    pub(crate) fn merged(atoms: Vec<SegmentGrid>, weights: Vec<f64>) -> Result<Self> {
        let mut index: BTreeMap<(u32, Vec<u64>), usize> = BTreeMap::new();
        let mut out_atoms: Vec<SegmentGrid> = Vec::new();
        let mut out_weights: Vec<f64> = Vec::new();
        for (atom, w) in atoms.into_iter().zip(weights) {
            let key = (atom.mode().label(), atom.values().iter().map(|v| (v + 0.0).to_bits()).collect());
            match index.get(&key) {
                Some(&k) => out_weights[k] += w,
                None => {
                    index.insert(key, out_atoms.len());
                    out_atoms.push(atom);
                    out_weights.push(w);
                }
            }
        }
        EmpiricalMeasure::new(out_atoms, out_weights)
    }
}

/// Uniform measure of `(u_t, r(t))` over `paths` independent solutions from
/// `(s, ξ, j0)`; path `p` uses stream `p` of `cfg.seed`.
pub fn ensemble_at(
    m: &HybridDelayModel,
    s: f64,
    xi: &InitialSegment,
    j0: Mode,
    t: f64,
    paths: usize,
    cfg: &SimConfig,
) -> Result<EmpiricalMeasure> {
    if paths == 0 {
        return Err(Error::InvalidArgument("an ensemble needs at least one path".to_string()));
    }
    let atoms = try_map_indexed(paths, |p| {
        integrate(m, s, xi, j0, t, cfg, p as u64).and_then(|tr| tr.segment_at(t)).map_err(|e| e.with_path(p as u64))
    })?;
    EmpiricalMeasure::uniform(atoms)
}

/// Monte-Carlo estimate of the time-averaged transition law
/// `(t − ρ + n)⁻¹ ∫_{−n}^{t−ρ} P(t, τ, ξ, j0, ·) dτ`: `starts` start times drawn
/// uniformly on `[−n, t − ρ)` (snapped down to the integration grid), each
/// followed by `paths_per_start` solutions.
#[allow(clippy::too_many_arguments)]
pub fn kb_average(
    m: &HybridDelayModel,
    xi: &InitialSegment,
    j0: Mode,
    t: f64,
    n: f64,
    starts: usize,
    paths_per_start: usize,
    cfg: &SimConfig,
) -> Result<EmpiricalMeasure> {
    let rho = m.rho();
    if !(t - rho > -n) {
        return Err(Error::InvalidArgument(format!("lookback {n} leaves no room before t - rho = {}", t - rho)));
    }
    if starts == 0 || paths_per_start == 0 {
        return Err(Error::InvalidArgument("starts and paths_per_start must be positive".to_string()));
    }
    let grid = cfg.grid_for(rho)?;
    let mut rng = stream(cfg.seed, Purpose::StartTimes, 0);
    let t_index = grid.index(t)?;
    let taus: Vec<f64> = (0..starts)
        .map(|_| {
            let tau = rng.random_range(-n..t - rho);
            grid.time(grid.floor_index(tau).min(t_index - 1))
        })
        .collect();
    let atoms = try_map_indexed(starts * paths_per_start, |p| {
        let tau = taus[p / paths_per_start];
        integrate(m, tau, xi, j0, t, cfg, p as u64).and_then(|tr| tr.segment_at(t)).map_err(|e| e.with_path(p as u64))
    })?;
    EmpiricalMeasure::uniform(atoms)
}

/// Pushforward under `(ψ, j) ↦ (ψ(0), j)`; identical images are merged.
pub fn project_t(mu: &EmpiricalMeasure) -> EmpiricalMeasure {
    let atoms = mu.atoms.iter().map(SegmentGrid::to_point).collect();
    EmpiricalMeasure::merged(atoms, mu.weights.clone()).expect("pushforward of a valid measure is valid")
}

/// Restriction of a segment to `[−ρ, 0]`, resampled on `m + 1` points.
pub fn restrict(xi_full: &SegmentGrid, rho: f64, m: usize) -> Result<SegmentGrid> {
    if !(rho > 0.0 && rho <= xi_full.rho() + 1e-12) {
        return Err(Error::InvalidArgument(format!("cannot restrict a segment of length {} to {rho}", xi_full.rho())));
    }
    SegmentGrid::from_fn(rho, m, xi_full.dim(), |tau| xi_full.at(tau), xi_full.mode())
}

/// `Σ wᵢ φ(xᵢ)`. A non-finite `φ` value is reported with `t = NaN` and the
/// mode of the offending atom.
pub fn integrate_functional<F: Fn(&SegmentGrid) -> f64>(mu: &EmpiricalMeasure, phi: F) -> Result<f64> {
    let mut total = 0.0;
    for (atom, w) in mu.atoms.iter().zip(&mu.weights) {
        let v = phi(atom);
        if !v.is_finite() {
            return Err(Error::NonFiniteCoefficient { t: f64::NAN, mode: atom.mode().label() as usize });
        }
        total += w * v;
    }
    Ok(total)
}

/// `sup |ψ(τ₂) − ψ(τ₁)|` over sample pairs at most `η` apart.
pub fn modulus_of_continuity(seg: &SegmentGrid, eta: f64) -> f64 {
    let m = seg.intervals();
    if m == 0 {
        return 0.0;
    }
    let h = seg.rho() / m as f64;
    let lag = ((eta / h + 1e-9).floor() as usize).min(m);
    let mut sup = 0.0f64;
    for q1 in 0..=m {
        for q2 in q1 + 1..=(q1 + lag).min(m) {
            let d2: f64 = seg.sample(q1).iter().zip(seg.sample(q2)).map(|(a, b)| (a - b) * (a - b)).sum();
            sup = sup.max(d2);
        }
    }
    sup.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusSummary {
    pub eta: f64,
    pub mean: f64,
    pub q95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightnessReport {
    /// `(R, P(‖ψ‖ ≤ R))`.
    pub bounded: Vec<(f64, f64)>,
    pub modulus: Vec<ModulusSummary>,
}

/// Boundedness-in-probability and equicontinuity diagnostics of a segment
/// measure.
pub fn tightness_report(mu: &EmpiricalMeasure, r_grid: &[f64], eta_grid: &[f64]) -> Result<TightnessReport> {
    if !matches!(mu.space, Space::Segment { .. }) {
        return Err(Error::InvalidArgument("tightness needs a segment measure".to_string()));
    }
    let norms: Vec<f64> = mu.atoms.iter().map(SegmentGrid::sup_norm).collect();
    let bounded = r_grid
        .iter()
        .map(|&r| (r, norms.iter().zip(&mu.weights).filter(|(n, _)| **n <= r).map(|(_, w)| w).sum::<f64>().min(1.0)))
        .collect();
    let modulus = eta_grid
        .iter()
        .map(|&eta| {
            let mut values: Vec<(f64, f64)> =
                mu.atoms.iter().map(|a| modulus_of_continuity(a, eta)).zip(mu.weights.iter().copied()).collect();
            let mean = values.iter().map(|(v, w)| v * w).sum();
            values.sort_by(|a, b| a.0.total_cmp(&b.0));
            let max = values.last().map_or(0.0, |v| v.0);
            let mut acc = 0.0;
            let mut q95 = max;
            for (v, w) in &values {
                acc += w;
                if acc >= 0.95 - 1e-12 {
                    q95 = *v;
                    break;
                }
            }
            ModulusSummary { eta, mean, q95, max }
        })
        .collect();
    Ok(TightnessReport { bounded, modulus })
}
