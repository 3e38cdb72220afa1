//! R-clusters, translation classes, catalogs and frequencies.

use super::{DeloneError, DeloneMultiset, LabeledPoint};
use crate::geometry::Vec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Order-independent 128-bit digest of a quantized cluster.
pub type ClusterKey = u128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub anchor: LabeledPoint,
    /// Points of the ball, anchor included, relative to the anchor.
    pub members: Vec<LabeledPoint>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterClass {
    pub canonical: Cluster,
    pub tolerance: f64,
    pub key: ClusterKey,
}

impl ClusterClass {
    pub fn from_cluster(mut c: Cluster, tolerance: f64) -> Self {
        sort_members(&mut c.members);
        let key = digest(c.members.iter().map(|m| (m.position, m.label)), tolerance);
        ClusterClass { canonical: c, tolerance, key }
    }

    /// Member-by-member comparison within the tolerance.
    pub fn matches(&self, c: &Cluster) -> bool {
        if c.members.len() != self.canonical.members.len() || c.anchor.label != self.canonical.anchor.label {
            return false;
        }
        let mut m = c.members.clone();
        sort_members(&mut m);
        m.iter().zip(&self.canonical.members).all(|(a, b)| {
            a.label == b.label && (a.position - b.position).norm() <= self.tolerance
        })
    }
}

fn sort_members(m: &mut [LabeledPoint]) {
    m.sort_by(|a, b| {
        (a.position.x, a.position.y, a.label)
            .partial_cmp(&(b.position.x, b.position.y, b.label))
            .unwrap()
    });
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn point_digest(rel: Vec2, label: u16, eps: f64) -> (u64, u64) {
    let qx = (rel.x / eps).round() as i64 as u64;
    let qy = (rel.y / eps).round() as i64 as u64;
    let a = mix(qx ^ mix(qy ^ ((label as u64) << 48)));
    let b = mix(qy.rotate_left(17) ^ mix(qx.wrapping_add(0x51ED_270B) ^ label as u64));
    (a, b)
}

fn digest(members: impl Iterator<Item = (Vec2, u16)>, eps: f64) -> ClusterKey {
    let (mut a, mut b, mut n) = (0u64, 0u64, 0u64);
    for (p, l) in members {
        let (x, y) = point_digest(p, l, eps);
        a = a.wrapping_add(x);
        b = b.wrapping_add(y);
        n += 1;
    }
    ((mix(a ^ n) as u128) << 64) | mix(b.wrapping_add(n)) as u128
}

fn overflow(patch: &DeloneMultiset, k: usize, r: f64) -> DeloneError {
    DeloneError::WindowOverflow {
        center: patch.positions()[k].norm(),
        radius: r,
        window: patch.window_radius(),
    }
}

/// Patch points within distance `r` of point `k`, recentered at it.
pub fn r_cluster(patch: &DeloneMultiset, k: usize, r: f64) -> Result<Cluster, DeloneError> {
    if !patch.certifies(k, r) {
        return Err(overflow(patch, k, r));
    }
    let c = patch.positions()[k];
    let members = patch
        .within(c, r)
        .into_iter()
        .map(|j| LabeledPoint { position: patch.positions()[j] - c, label: patch.label_of(j) })
        .collect();
    Ok(Cluster {
        anchor: LabeledPoint { position: Vec2::ZERO, label: patch.label_of(k) },
        members,
        radius: r,
    })
}

/// Digest of the `r`-cluster at point `k`.
pub fn cluster_key(patch: &DeloneMultiset, k: usize, r: f64) -> Result<ClusterKey, DeloneError> {
    if !patch.certifies(k, r) {
        return Err(overflow(patch, k, r));
    }
    Ok(key_unchecked(patch, k, r))
}

fn key_unchecked(patch: &DeloneMultiset, k: usize, r: f64) -> ClusterKey {
    let c = patch.positions()[k];
    let eps = patch.eps_geo();
    let pos = patch.positions();
    let (mut a, mut b, mut n) = (0u64, 0u64, 0u64);
    patch.index().for_each_within(pos, c, r + eps, |j, _| {
        let (x, y) = point_digest(pos[j] - c, patch.label_of(j), eps);
        a = a.wrapping_add(x);
        b = b.wrapping_add(y);
        n += 1;
    });
    ((mix(a ^ n) as u128) << 64) | mix(b.wrapping_add(n)) as u128
}

/// Digests for every point whose `r`-ball is certified; `None` elsewhere.
pub fn cluster_keys(patch: &DeloneMultiset, r: f64) -> Vec<Option<ClusterKey>> {
    (0..patch.len())
        .into_par_iter()
        .map(|k| patch.certifies(k, r).then(|| key_unchecked(patch, k, r)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub class: ClusterClass,
    pub multiplicity: usize,
    /// Index of the first anchor realizing the class.
    pub representative: usize,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    pub radius: f64,
    pub entries: Vec<CatalogEntry>,
    lookup: HashMap<ClusterKey, usize>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn position(&self, key: ClusterKey) -> Option<usize> {
        self.lookup.get(&key).copied()
    }
}

/// Translation classes of `r`-clusters anchored at certified points.
pub fn cluster_catalog(patch: &DeloneMultiset, r: f64) -> Result<Catalog, DeloneError> {
    let keys = cluster_keys(patch, r);
    let mut first: HashMap<ClusterKey, (usize, usize)> = HashMap::new();
    for (k, key) in keys.iter().enumerate() {
        if let Some(key) = key {
            first.entry(*key).or_insert((k, 0)).1 += 1;
        }
    }
    if first.is_empty() {
        return Err(DeloneError::EmptyInterior(r));
    }
    let mut list: Vec<(ClusterKey, usize, usize)> =
        first.into_iter().map(|(key, (k, m))| (key, k, m)).collect();
    list.sort_unstable_by_key(|e| e.1);
    let mut entries = Vec::with_capacity(list.len());
    let mut lookup = HashMap::with_capacity(list.len());
    for (i, (key, k, m)) in list.into_iter().enumerate() {
        let class = ClusterClass::from_cluster(r_cluster(patch, k, r)?, patch.eps_geo());
        debug_assert_eq!(class.key, key);
        lookup.insert(key, i);
        entries.push(CatalogEntry { class, multiplicity: m, representative: k });
    }
    Ok(Catalog { radius: r, entries, lookup })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub estimate: f64,
    /// Largest relative change between successive radii.
    pub max_relative_change: f64,
}

/// Occurrences of `class` anchored in `B_R(0)`, per unit area, for each `R`.
pub fn cluster_frequency(
    patch: &DeloneMultiset,
    class: &ClusterClass,
    radii: &[f64],
) -> Result<FrequencyEstimate, DeloneError> {
    let rc = class.canonical.radius;
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    if rmax + rc > patch.window_radius() + patch.eps_geo() {
        return Err(DeloneError::WindowOverflow {
            center: rmax,
            radius: rc,
            window: patch.window_radius(),
        });
    }
    let hits: Vec<f64> = patch
        .within(Vec2::ZERO, rmax)
        .into_par_iter()
        .filter(|&k| patch.label_of(k) == class.canonical.anchor.label)
        .filter(|&k| key_unchecked(patch, k, rc) == class.key)
        .map(|k| patch.positions()[k].norm())
        .collect();
    let eps = patch.eps_geo();
    let values: Vec<f64> = radii
        .iter()
        .map(|&r| hits.iter().filter(|&&d| d <= r + eps).count() as f64 / (PI * r * r))
        .collect();
    let max_relative_change = values
        .windows(2)
        .map(|w| if w[0] > 0.0 { ((w[1] - w[0]) / w[0]).abs() } else if w[1] > 0.0 { 1.0 } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(FrequencyEstimate {
        radii: radii.to_vec(),
        estimate: *values.last().unwrap_or(&0.0),
        values,
        max_relative_change,
    })
}
