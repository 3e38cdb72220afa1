//! Recognition of local transversals from pattern windows.

use super::{LocalTransversal, TowerError};
use crate::delone::{cluster_keys, ClusterKey, DeloneMultiset};
use std::collections::{BTreeSet, HashMap};

/// Keys of every certified point at a set of radii, computed once per radius.
#[derive(Default)]
pub struct KeyCache {
    by_radius: HashMap<u64, Vec<Option<ClusterKey>>>,
}

impl KeyCache {
    pub fn keys(&mut self, patch: &DeloneMultiset, r: f64) -> &[Option<ClusterKey>] {
        self.by_radius.entry(r.to_bits()).or_insert_with(|| cluster_keys(patch, r))
    }
}

/// Whether the `r`-keys of points of class `c` avoid the keys of all other points.
fn separated(keys: &[Option<ClusterKey>], class: &[Option<usize>], c: usize) -> Option<bool> {
    let mut inside = BTreeSet::new();
    for (k, key) in keys.iter().enumerate() {
        if let Some(key) = key {
            if class[k] == Some(c) {
                inside.insert(*key);
            }
        }
    }
    if inside.is_empty() {
        return None;
    }
    let clash = keys
        .iter()
        .enumerate()
        .any(|(k, key)| key.is_some_and(|key| class[k] != Some(c) && inside.contains(&key)));
    Some(!clash)
}

/// Smallest radius on the grid `step * m` at which class `c` is decided by
/// pattern windows on the patch, with the keys of its members there.
pub fn recognition_radius(
    patch: &DeloneMultiset,
    cache: &mut KeyCache,
    class: &[Option<usize>],
    c: usize,
    step: f64,
) -> Result<(f64, BTreeSet<ClusterKey>), TowerError> {
    let grid = |m: u64| m as f64 * step;
    let test = |cache: &mut KeyCache, m: u64| -> Result<bool, TowerError> {
        let keys = cache.keys(patch, grid(m));
        separated(keys, class, c).ok_or(TowerError::InsufficientPatch { radius: grid(m) })
    };
    if test(cache, 0)? {
        return Ok((0.0, members(cache.keys(patch, 0.0), class, c)));
    }
    let mut hi = 1u64;
    while !test(cache, hi)? {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if test(cache, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let r = grid(hi);
    Ok((r, members(cache.keys(patch, r), class, c)))
}

fn members(keys: &[Option<ClusterKey>], class: &[Option<usize>], c: usize) -> BTreeSet<ClusterKey> {
    keys.iter()
        .enumerate()
        .filter_map(|(k, key)| key.filter(|_| class[k] == Some(c)))
        .collect()
}

/// Indices of certified points recognized as members of `t`.
pub fn occurrences(patch: &DeloneMultiset, cache: &mut KeyCache, t: &LocalTransversal) -> Vec<usize> {
    let keys = cache.keys(patch, t.rec);
    keys.iter()
        .enumerate()
        .filter_map(|(k, key)| key.filter(|key| t.table.contains(key)).map(|_| k))
        .collect()
}
