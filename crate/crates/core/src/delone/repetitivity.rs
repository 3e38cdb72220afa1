//! Empirical repetitivity function on a finite patch.

use super::{cluster_keys, DeloneError, DeloneMultiset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Least grid `T` (step `r_Λ/4`) such that every ball of radius `T` inside the
/// window contains a copy of every `R`-cluster class seen on the patch.
///
/// Ball centers range over patch points; since any center lies within `R_Λ` of
/// a patch point, `R_Λ` is added so the answer covers arbitrary centers.
pub fn repetitivity(patch: &DeloneMultiset, r: f64) -> Result<f64, DeloneError> {
    let w = patch.window_radius();
    let cov = patch.covering_radius();
    let keys = cluster_keys(patch, r);
    let mut ids: HashMap<u128, usize> = HashMap::new();
    let class: Vec<Option<usize>> = keys
        .iter()
        .map(|k| {
            k.map(|k| {
                let n = ids.len();
                *ids.entry(k).or_insert(n)
            })
        })
        .collect();
    let nclass = ids.len();
    if nclass == 0 {
        return Err(DeloneError::EmptyInterior(r));
    }
    let limit = w - r;
    let pos = patch.positions();
    let centers: Vec<usize> = (0..patch.len()).filter(|&k| pos[k].norm() + r + cov <= w).collect();
    // need(p): distance within which every class has an anchor.
    let needs: Vec<(f64, f64)> = centers
        .par_iter()
        .map(|&k| {
            let p = pos[k];
            let cap = w - p.norm() - r - cov;
            let mut d = 4.0 * patch.packing_radius().max(1e-9);
            loop {
                let dd = d.min(cap);
                let mut best = vec![f64::INFINITY; nclass];
                patch.index().for_each_within(pos, p, dd, |j, d2| {
                    if let Some(c) = class[j] {
                        if d2 < best[c] {
                            best[c] = d2;
                        }
                    }
                });
                let need = best.iter().copied().fold(0.0, f64::max).sqrt();
                if need.is_finite() {
                    return (p.norm(), need);
                }
                if dd >= cap {
                    return (p.norm(), f64::INFINITY);
                }
                d *= 2.0;
            }
        })
        .collect();
    let mut sorted = needs;
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prefix = Vec::with_capacity(sorted.len());
    let mut m: f64 = 0.0;
    for &(_, n) in &sorted {
        m = m.max(n);
        prefix.push(m);
    }
    let step = 0.25 * patch.packing_radius();
    let mut k = (r / step).floor() as i64;
    loop {
        let t = k as f64 * step;
        if t + r > w + patch.eps_geo() {
            return Err(DeloneError::NotCertifiable { radius: r, limit });
        }
        if t >= r {
            // Centers allowed for this T: |p| <= W - T.
            let cnt = sorted.partition_point(|e| e.0 + t <= w);
            if cnt > 0 && r + prefix[cnt - 1] + cov <= t {
                return Ok(t);
            }
        }
        k += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitivityProfile {
    pub radii: Vec<f64>,
    pub t: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Largest observed `M̂(R)/R`.
    pub l_hat: f64,
    /// Max over min of the ratios.
    pub spread: f64,
}

pub fn repetitivity_profile(patch: &DeloneMultiset, radii: &[f64]) -> Result<RepetitivityProfile, DeloneError> {
    let mut t = Vec::with_capacity(radii.len());
    for &r in radii {
        t.push(repetitivity(patch, r)?);
    }
    let ratios: Vec<f64> = t.iter().zip(radii).map(|(t, r)| t / r).collect();
    let l_hat = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RepetitivityProfile { radii: radii.to_vec(), t, ratios, l_hat, spread: l_hat / lo })
}
