//! Witness indicators on the collision space and their transversal regularity.
//!
//! A witness `ψ` of level `n` and box `i` is the indicator of the set of
//! collision states on a scatterer of label `j` whose surrounding pattern lies
//! in the base transversal of that box. It ignores the boundary point and the
//! direction, so all estimates reduce to questions about pattern windows.

use crate::billiard::{CollisionState, ScattererConfig};
use crate::delone::{cluster_key, DeloneMultiset, Label, DISTANCE_CAP};
use crate::tower::{occurrences, BoxMeasures, KeyCache, LocalTransversal, TowerError, TowerSystem};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ObservableError {
    #[error("tower has no level {0}")]
    MissingLevel(usize),
    #[error("level {level} has no box {index}")]
    MissingBox { level: usize, index: usize },
    #[error("level {0} has a single box; witnesses need k_n > 1")]
    SingleBox(usize),
    #[error("boxes of level {0} are not recognizable from pattern windows")]
    NotRecognizable(usize),
    #[error("members of box {0} carry more than one label")]
    MixedLabels(usize),
    #[error("window of radius {rec} around scatterer {scatterer} leaves the certified patch")]
    WindowOverflow { scatterer: usize, rec: f64 },
    #[error("no frequency data for level {0}")]
    MissingMeasures(usize),
    #[error(transparent)]
    Tower(#[from] TowerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessObservable {
    pub level: usize,
    pub box_index: usize,
    pub class_id: usize,
    pub transversal: LocalTransversal,
    pub label: Label,
    pub rec: f64,
    /// Expansion entering the seminorm bound.
    pub lambda: f64,
}

/// Indicator of box `i` at level `n`; the seminorm bound uses the effective
/// expansion of the tower.
pub fn witness(tower: &TowerSystem, n: usize, i: usize) -> Result<WitnessObservable, ObservableError> {
    let dec = tower.decompositions.get(n).ok_or(ObservableError::MissingLevel(n))?;
    if dec.k() <= 1 {
        return Err(ObservableError::SingleBox(n));
    }
    if !tower.recognizable.get(n).copied().unwrap_or(true) {
        return Err(ObservableError::NotRecognizable(n));
    }
    let b = dec.boxes.get(i).ok_or(ObservableError::MissingBox { level: n, index: i })?;
    Ok(WitnessObservable {
        level: n,
        box_index: i,
        class_id: b.class_id,
        transversal: b.base.clone(),
        label: b.base.label,
        rec: b.base.rec,
        lambda: tower.lambda_eff,
    })
}

/// All witnesses of level `n`.
pub fn witnesses(tower: &TowerSystem, n: usize) -> Result<Vec<WitnessObservable>, ObservableError> {
    let k = tower.decompositions.get(n).ok_or(ObservableError::MissingLevel(n))?.k();
    (0..k).map(|i| witness(tower, n, i)).collect()
}

pub fn evaluate(obs: &WitnessObservable, config: &ScattererConfig, s: &CollisionState) -> Result<u8, ObservableError> {
    evaluate_at(obs, config.patch(), s.scatterer)
}

/// Value on any state based at scatterer `k`.
pub fn evaluate_at(obs: &WitnessObservable, patch: &DeloneMultiset, k: usize) -> Result<u8, ObservableError> {
    if patch.label_of(k) != obs.label {
        return Ok(0);
    }
    let key = cluster_key(patch, k, obs.rec).map_err(|_| ObservableError::WindowOverflow { scatterer: k, rec: obs.rec })?;
    Ok(u8::from(obs.transversal.table.contains(&key)))
}

/// Value at every scatterer; `None` where the window is not certified.
pub fn support(obs: &WitnessObservable, patch: &DeloneMultiset, cache: &mut KeyCache) -> Vec<Option<bool>> {
    let keys = cache.keys(patch, obs.rec);
    let labels = patch.points();
    keys.iter()
        .zip(labels)
        .map(|(key, p)| key.map(|key| p.label == obs.label && obs.transversal.table.contains(&key)))
        .collect()
}

/// `(2L+1)^α λ^{αn}`.
pub fn holder_bound(obs: &WitnessObservable, alpha: f64, l: f64) -> f64 {
    (2.0 * l + 1.0).powf(alpha) * obs.lambda.powf(alpha * obs.level as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub theoretical: f64,
    pub empirical: f64,
    /// Member and non-member scatterer indices realizing `empirical`.
    pub witness_pair: Option<(usize, usize)>,
    /// Radius on which the two windows of the pair agree.
    pub agreement_radius: f64,
    pub pairs_checked: usize,
}

/// Largest `r` such that the windows seen from `a` and `b` agree on the open
/// ball `B_r`, capped at `r_max`.
pub fn agreement_radius(patch: &DeloneMultiset, a: usize, b: usize, r_max: f64) -> f64 {
    let pos = patch.positions();
    let tol = 4.0 * patch.eps_geo();
    let mut first = r_max;
    for (from, to) in [(a, b), (b, a)] {
        for j in patch.within(pos[from], r_max) {
            let rel = pos[j] - pos[from];
            let ok = patch
                .nearest(pos[to] + rel)
                .is_some_and(|(q, d)| d <= tol && patch.label_of(q) == patch.label_of(j));
            if !ok {
                first = first.min(rel.norm());
            }
        }
    }
    first
}

/// Quotient of a single pair: `0` for identical windows, otherwise `d^{-α}`
/// with `d = min(1/R*, cap)`.
fn quotient(r_star: f64, identical: bool, alpha: f64) -> f64 {
    if identical {
        0.0
    } else {
        r_star.max(1.0 / DISTANCE_CAP).powf(alpha)
    }
}

/// Maximal quotient over the given `(c1, c2)` pairs of scatterers with the
/// witness label; pairs with equal values contribute nothing.
pub fn seminorm_over_pairs(
    obs: &WitnessObservable,
    patch: &DeloneMultiset,
    pairs: &[(usize, usize)],
    alpha: f64,
    l: f64,
) -> Result<HolderReport, ObservableError> {
    let mut best = (0.0, None, 0.0);
    for &(a, b) in pairs {
        let (va, vb) = (evaluate_at(obs, patch, a)?, evaluate_at(obs, patch, b)?);
        if va == vb || patch.label_of(a) != patch.label_of(b) {
            continue;
        }
        let r = agreement_radius(patch, a, b, obs.rec);
        let q = quotient(r, a == b, alpha);
        if q > best.0 {
            best = (q, Some(if va == 1 { (a, b) } else { (b, a) }), r);
        }
    }
    Ok(HolderReport {
        alpha,
        theoretical: holder_bound(obs, alpha, l),
        empirical: best.0,
        witness_pair: best.1,
        agreement_radius: best.2,
        pairs_checked: pairs.len(),
    })
}

/// Maximal quotient over all certifiable member/non-member pairs of the patch.
///
/// Members and non-members are first reduced to one representative per window
/// class at `rec`. The pairs agreeing furthest out are those sharing a key at
/// the largest grid radius where any pair still collides; only those are
/// compared point by point.
pub fn empirical_seminorm(
    obs: &WitnessObservable,
    patch: &DeloneMultiset,
    cache: &mut KeyCache,
    alpha: f64,
    l: f64,
) -> Result<HolderReport, ObservableError> {
    let keys = cache.keys(patch, obs.rec).to_vec();
    let mut inside: HashMap<u128, usize> = HashMap::new();
    let mut outside: HashMap<u128, usize> = HashMap::new();
    let mut total = (0usize, 0usize);
    for (k, key) in keys.iter().enumerate() {
        let Some(key) = *key else { continue };
        if patch.label_of(k) != obs.label {
            continue;
        }
        if obs.transversal.table.contains(&key) {
            total.0 += 1;
            inside.entry(key).or_insert(k);
        } else {
            total.1 += 1;
            outside.entry(key).or_insert(k);
        }
    }
    let pairs_checked = total.0 * total.1;
    let mut report = HolderReport {
        alpha,
        theoretical: holder_bound(obs, alpha, l),
        empirical: 0.0,
        witness_pair: None,
        agreement_radius: 0.0,
        pairs_checked,
    };
    if inside.is_empty() || outside.is_empty() {
        return Ok(report);
    }
    let mut inside: Vec<usize> = inside.into_values().collect();
    let mut outside: Vec<usize> = outside.into_values().collect();
    inside.sort_unstable();
    outside.sort_unstable();
    let step = 0.25 * patch.packing_radius();
    let mut m = (obs.rec / step).ceil() as i64;
    let mut candidates = Vec::new();
    while m >= 0 && candidates.is_empty() {
        let r = m as f64 * step;
        if r < obs.rec {
            let mut groups: HashMap<u128, Vec<usize>> = HashMap::new();
            for &k in &inside {
                groups.entry(cluster_key(patch, k, r).map_err(TowerError::from)?).or_default().push(k);
            }
            for &k in &outside {
                if let Some(g) = groups.get(&cluster_key(patch, k, r).map_err(TowerError::from)?) {
                    candidates.extend(g.iter().map(|&a| (a, k)));
                }
            }
        }
        m -= 1;
    }
    for (a, b) in candidates {
        let r = agreement_radius(patch, a, b, obs.rec);
        let q = quotient(r, false, alpha);
        if q > report.empirical {
            report.empirical = q;
            report.witness_pair = Some((a, b));
            report.agreement_radius = r;
        }
    }
    Ok(report)
}

/// Cosine mass `∫_{∂S}∫ ⟨v,n⟩ dv dx = 4πρ` of the outgoing bundle of a disk.
pub fn cosine_mass(radius: f64) -> f64 {
    4.0 * PI * radius
}

/// Normalization of the collision-space measure on the ball `B_radius(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuNormalization {
    pub radius: f64,
    pub weights: BTreeMap<Label, f64>,
    pub densities: BTreeMap<Label, f64>,
    pub z: f64,
    /// `min_j w(j) / Z`.
    pub rho: f64,
}

pub fn normalization(config: &ScattererConfig, radius: f64) -> MuNormalization {
    let patch = config.patch();
    let eps = patch.eps_geo();
    let area = PI * radius * radius;
    let mut counts: BTreeMap<Label, usize> = config.radius_map().keys().map(|&l| (l, 0)).collect();
    for p in patch.points() {
        if p.position.norm() <= radius + eps {
            *counts.entry(p.label).or_default() += 1;
        }
    }
    let densities: BTreeMap<Label, f64> = counts.iter().map(|(&l, &c)| (l, c as f64 / area)).collect();
    let weights: BTreeMap<Label, f64> =
        config.radius_map().iter().map(|(&l, &r)| (l, cosine_mass(r))).collect();
    let z: f64 = weights.iter().map(|(l, w)| w * densities.get(l).copied().unwrap_or(0.0)).sum();
    let rho = weights.values().copied().fold(f64::INFINITY, f64::min) / z;
    MuNormalization { radius, weights, densities, z, rho }
}

/// `μ̂(ψ) = w(j) ν̂(C) / Z`, with `Z` taken on the ball used for `ν̂`.
pub fn mu_measure(
    obs: &WitnessObservable,
    measures: &BoxMeasures,
    config: &ScattererConfig,
) -> Result<f64, ObservableError> {
    let level = measures
        .levels
        .iter()
        .find(|m| m.level == obs.level)
        .ok_or(ObservableError::MissingMeasures(obs.level))?;
    let b = level.boxes.get(obs.box_index).ok_or(ObservableError::MissingMeasures(obs.level))?;
    let norm = normalization(config, level.radius);
    let w = norm.weights.get(&obs.label).copied().ok_or(ObservableError::MissingMeasures(obs.level))?;
    Ok(w * b.nu_hat / norm.z)
}

/// Member scatterers of a witness inside the ball `B_radius(0)`.
pub fn members_within(
    obs: &WitnessObservable,
    patch: &DeloneMultiset,
    cache: &mut KeyCache,
    radius: f64,
) -> Vec<usize> {
    occurrences(patch, cache, &obs.transversal)
        .into_iter()
        .filter(|&k| patch.label_of(k) == obs.label && patch.positions()[k].norm() <= radius)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub level: usize,
    pub box_index: usize,
    pub label: Label,
    pub rec: f64,
    pub defining_class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableManifest {
    pub tower: String,
    pub witnesses: Vec<ManifestEntry>,
}

pub fn manifest(tower_ref: &str, obs: &[WitnessObservable]) -> ObservableManifest {
    ObservableManifest {
        tower: tower_ref.into(),
        witnesses: obs
            .iter()
            .map(|o| ManifestEntry {
                level: o.level,
                box_index: o.box_index,
                label: o.label,
                rec: o.rec,
                defining_class_id: o.class_id,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests;
