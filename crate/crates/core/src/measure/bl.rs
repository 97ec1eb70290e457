//! Exact bounded-Lipschitz distance between finitely supported measures.
//!
//! For a fixed Lipschitz budget `L` (and sup budget `c = 1 - L`) the dual
//! problem is a Kantorovich problem for the truncated cost
//! `min(L d, 2(1 - L))`, so `d_L* = max_L V(L)` with `V` concave and piecewise
//! linear. Every solved slice yields a supporting line of `V`; the 1-D
//! cutting-plane iteration below stops once the upper envelope of those lines
//! meets a solved value.

use alloc::collections::BTreeMap;

use rand::Rng;

use super::transport::Transport;
use super::{h_distance, EmpiricalMeasure, MetricSpec};
use crate::prelude::*;
use crate::rng::{derive_seed, stream, Purpose};
use crate::simulate::SegmentGrid;
use crate::{Error, Result};

const MAX_CUTS: usize = 200;

pub fn bl_distance(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure, spec: &MetricSpec) -> Result<f64> {
    mu1.check_compatible(mu2)?;
    let a = capped(mu1, spec, 1);
    let b = capped(mu2, spec, 2);
    let (sources, supply, sinks, mut demand) = signed_parts(&a, &b);
    let mass: f64 = supply.iter().sum();
    let deficit: f64 = demand.iter().sum();
    if mass <= 1e-14 || sinks.is_empty() || sources.is_empty() {
        return Ok(0.0);
    }
    for d in &mut demand {
        *d *= mass / deficit;
    }

    let nt = sinks.len();
    let mut dist = vec![0.0; sources.len() * nt];
    for (i, x) in sources.iter().enumerate() {
        for (j, y) in sinks.iter().enumerate() {
            dist[i * nt + j] = h_distance(x, y, spec)?;
        }
    }

    let mut lp = Transport::new(&supply, &demand);
    // supporting line at L = 0 (nothing truncated) and at L = 1 (everything)
    let w1 = lp.solve(&dist)?;
    let mut lo = (0.0, w1);
    let mut hi = (2.0 * mass, -2.0 * mass);
    let mut best = 0.0f64;
    let mut cost = vec![0.0; dist.len()];

    for _ in 0..MAX_CUTS {
        // lines are (intercept, slope); lo rises, hi falls
        if lo.1 <= hi.1 {
            return Ok(best);
        }
        let l = ((hi.0 - lo.0) / (lo.1 - hi.1)).clamp(0.0, 1.0);
        let upper = (lo.0 + lo.1 * l).min(hi.0 + hi.1 * l);
        let cap = 2.0 * (1.0 - l);
        for (c, d) in cost.iter_mut().zip(&dist) {
            *c = (l * d).min(cap);
        }
        lp.solve(&cost)?;
        let (mut kept, mut cut) = (0.0, 0.0);
        for (i, _) in sources.iter().enumerate() {
            for j in 0..nt {
                let f = lp.flow(i, j);
                if f > 0.0 {
                    let d = dist[i * nt + j];
                    if l * d <= cap {
                        kept += f * d;
                    } else {
                        cut += 2.0 * f;
                    }
                }
            }
        }
        let value = l * kept + (1.0 - l) * cut;
        best = best.max(value);
        if upper - value <= 1e-13 + 1e-12 * upper {
            return Ok(best);
        }
        let line = (cut, kept - cut);
        if line.1 > 0.0 {
            if line == lo {
                return Ok(best);
            }
            lo = line;
        } else if line.1 < 0.0 {
            if line == hi {
                return Ok(best);
            }
            hi = line;
        } else {
            return Ok(best);
        }
    }
    Err(Error::LpFailure(format!("cutting plane did not close after {MAX_CUTS} cuts")))
}

/// The measure with identical atoms merged, or `atom_cap` i.i.d. draws from
/// it with uniform weights when its support is larger than the cap.
fn capped(mu: &EmpiricalMeasure, spec: &MetricSpec, which: u64) -> Vec<(SegmentGrid, f64)> {
    let merged;
    let mu = if mu.len() > spec.atom_cap && spec.atom_cap != 0 {
        merged = EmpiricalMeasure::merged(mu.atoms().to_vec(), mu.weights().to_vec())
            .expect("merging a valid measure keeps it valid");
        &merged
    } else {
        mu
    };
    if mu.len() <= spec.atom_cap || spec.atom_cap == 0 {
        return mu.atoms().iter().cloned().zip(mu.weights().iter().copied()).collect();
    }
    let mut cumulative = Vec::with_capacity(mu.len());
    let mut acc = 0.0;
    for w in mu.weights() {
        acc += w;
        cumulative.push(acc);
    }
    let mut rng = stream(derive_seed(spec.subsample_seed, which), Purpose::Subsample, 0);
    let share = 1.0 / spec.atom_cap as f64;
    (0..spec.atom_cap)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cumulative.partition_point(|&c| c <= u).min(mu.len() - 1);
            (mu.atoms()[k].clone(), share)
        })
        .collect()
}

type Parts = (Vec<SegmentGrid>, Vec<f64>, Vec<SegmentGrid>, Vec<f64>);

/// Pool both supports, merging identical atoms, and split `w1 - w2` into its
/// positive and negative parts.
fn signed_parts(a: &[(SegmentGrid, f64)], b: &[(SegmentGrid, f64)]) -> Parts {
    let mut index: BTreeMap<(u32, Vec<u64>), usize> = BTreeMap::new();
    let mut atoms: Vec<SegmentGrid> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    for (list, sign) in [(a, 1.0), (b, -1.0)] {
        for (atom, weight) in list {
            let key = (atom.mode().label(), atom.values().iter().map(|v| (v + 0.0).to_bits()).collect());
            let k = *index.entry(key).or_insert_with(|| {
                atoms.push(atom.clone());
                w.push(0.0);
                atoms.len() - 1
            });
            w[k] += sign * weight;
        }
    }
    let mut parts: Parts = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (atom, w) in atoms.into_iter().zip(w) {
        if w > 1e-15 {
            parts.0.push(atom);
            parts.1.push(w);
        } else if w < -1e-15 {
            parts.2.push(atom);
            parts.3.push(-w);
        }
    }
    parts
}
