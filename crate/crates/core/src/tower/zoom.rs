//! The zoomed-out relation between two box decompositions, checked on a patch.
//!
//! Every property is evaluated over the coarse occurrences whose neighbourhood
//! of fine occurrences is fully recognized inside the window.

use super::recognize::{occurrences, KeyCache};
use super::{BoxDecomposition, TowerError};
use crate::delone::DeloneMultiset;
use crate::geometry::{Polygon, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub pass: bool,
    pub checked: usize,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomReport {
    pub properties: Vec<PropertyResult>,
    /// Property (i) with closures replaced by interiors.
    pub interior_i: PropertyResult,
    pub coarse_occurrences: usize,
    pub fine_occurrences: usize,
    /// Empirical `O_{i,j}` from the first certified occurrence of each coarse type.
    pub offsets: Vec<Vec<Vec<Vec2>>>,
}

impl ZoomReport {
    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }

    /// Entry counts of the empirical offsets.
    pub fn counts(&self) -> Vec<Vec<u64>> {
        self.offsets.iter().map(|r| r.iter().map(|o| o.len() as u64).collect()).collect()
    }
}

type OffsetKey = (i64, i64);

struct Near {
    point: usize,
    j: usize,
    rel: Vec2,
    key: OffsetKey,
}

fn result(name: &str, checked: usize, witness: Option<String>) -> PropertyResult {
    PropertyResult { name: name.into(), pass: witness.is_none(), checked, witness }
}

fn type_map(
    patch: &DeloneMultiset,
    cache: &mut KeyCache,
    d: &BoxDecomposition,
) -> (Vec<Option<usize>>, Option<String>) {
    let mut t = vec![None; patch.len()];
    let mut clash = None;
    for (i, b) in d.boxes.iter().enumerate() {
        for k in occurrences(patch, cache, &b.base) {
            if let Some(prev) = t[k] {
                clash.get_or_insert(format!("point {k} lies in the bases of types {prev} and {i}"));
            }
            t[k] = Some(i);
        }
    }
    (t, clash)
}

pub fn check_zoomed_out(
    coarse: &BoxDecomposition,
    fine: &BoxDecomposition,
    patch: &DeloneMultiset,
) -> Result<ZoomReport, TowerError> {
    check_zoomed_out_cached(coarse, fine, patch, &mut KeyCache::default())
}

pub fn check_zoomed_out_cached(
    coarse: &BoxDecomposition,
    fine: &BoxDecomposition,
    patch: &DeloneMultiset,
    cache: &mut KeyCache,
) -> Result<ZoomReport, TowerError> {
    let pos = patch.positions();
    let scale = coarse.r_ext.max(fine.r_ext).max(patch.packing_radius());
    let tol = 1e-9 * scale;
    let area_tol = tol * scale;
    let q = 1e3 * patch.eps_geo();
    let quant = |v: Vec2| ((v.x / q).round() as i64, (v.y / q).round() as i64);

    let (fine_type, fine_clash) = type_map(patch, cache, fine);
    let (coarse_type, coarse_clash) = type_map(patch, cache, coarse);
    let reach = coarse.r_ext + fine.r_ext;
    let wc = (patch.window_radius() - reach - fine.rec).min(patch.window_radius() - coarse.rec);
    if wc < 0.0 {
        return Err(TowerError::InsufficientPatch { radius: reach + fine.rec });
    }
    let occ: Vec<(usize, usize)> = (0..patch.len())
        .filter(|&k| pos[k].norm() <= wc)
        .filter_map(|k| coarse_type[k].map(|i| (k, i)))
        .collect();
    if occ.is_empty() {
        return Err(TowerError::InsufficientPatch { radius: reach + fine.rec });
    }
    let near: Vec<Vec<Near>> = occ
        .par_iter()
        .map(|&(k, _)| {
            patch
                .within(pos[k], reach + tol)
                .into_iter()
                .filter_map(|b| {
                    fine_type[b].map(|j| {
                        let rel = pos[b] - pos[k];
                        Near { point: b, j, rel, key: quant(rel) }
                    })
                })
                .collect()
        })
        .collect();
    let kc = coarse.k();
    let by_type: Vec<Vec<usize>> =
        (0..kc).map(|i| (0..occ.len()).filter(|&o| occ[o].1 == i).collect()).collect();
    let fine_piece = |j: usize, x: Vec2| fine.boxes[j].domain.translate(x);

    // (iv): offsets common to all occurrences, then the partition of the closure.
    let mut offsets = vec![vec![Vec::new(); fine.k()]; kc];
    let mut w4 = fine_clash.clone().or(coarse_clash.clone());
    for i in 0..kc {
        let dom = &coarse.boxes[i].domain;
        let Some(&first) = by_type[i].first() else {
            w4.get_or_insert(format!("coarse type {i} has no certified occurrence"));
            continue;
        };
        let inside = |o: usize| -> BTreeSet<(OffsetKey, usize)> {
            near[o]
                .iter()
                .filter(|n| dom.contains(n.rel) && dom.boundary_distance(n.rel) > tol)
                .map(|n| (n.key, n.j))
                .collect()
        };
        let mut common = inside(first);
        for &o in &by_type[i][1..] {
            let s = inside(o);
            common.retain(|e| s.contains(e));
        }
        for n in &near[first] {
            if common.contains(&(n.key, n.j)) {
                offsets[i][n.j].push(n.rel);
            }
        }
        let pieces: Vec<Polygon> = (0..fine.k())
            .flat_map(|j| offsets[i][j].iter().map(move |&x| (j, x)))
            .map(|(j, x)| fine_piece(j, x))
            .collect();
        let total: f64 = pieces.iter().map(Polygon::area).sum();
        let whole = dom.area();
        let at = pos[occ[first].0];
        if let Some(p) = pieces.iter().find(|p| dom.intersection_area(p) < p.area() - area_tol) {
            w4.get_or_insert(format!(
                "type {i} at {at:?}: piece {:?} leaves the coarse domain",
                p.vertices.first()
            ));
        }
        'pairs: for a in 0..pieces.len() {
            for b in a + 1..pieces.len() {
                if pieces[a].intersection_area(&pieces[b]) > area_tol {
                    w4.get_or_insert(format!("type {i} at {at:?}: pieces {a} and {b} overlap"));
                    break 'pairs;
                }
            }
        }
        if ((total - whole) / whole).abs() > 1e-9 {
            w4.get_or_insert(format!(
                "type {i} at {at:?}: pieces cover area {total} of {whole}"
            ));
        }
    }
    let p4 = result("iv", occ.len(), w4);

    // (v): coarse anchors are fine anchors.
    let w5 = occ
        .iter()
        .find(|&&(k, _)| fine_type[k].is_none())
        .map(|&(k, i)| format!("coarse type {i} anchor at {:?} is not in the fine base", pos[k]));
    let p5 = result("v", occ.len(), w5);

    // Partition count: every inner fine occurrence is hit exactly once.
    let mut hits: HashMap<usize, usize> = HashMap::new();
    let mut w7 = None;
    for &(k, i) in &occ {
        for (j, list) in offsets[i].iter().enumerate() {
            for &x in list {
                let target = pos[k] + x;
                match patch.nearest(target) {
                    Some((b, d)) if d <= tol && fine_type[b] == Some(j) => *hits.entry(b).or_default() += 1,
                    _ => {
                        w7.get_or_insert(format!("offset {x:?} from type {i} at {:?} misses a type-{j} anchor", pos[k]));
                    }
                }
            }
        }
    }
    let inner: Vec<usize> = (0..patch.len())
        .filter(|&b| fine_type[b].is_some() && pos[b].norm() + coarse.r_ext + tol <= wc)
        .collect();
    if let Some(&b) = inner.iter().find(|&&b| hits.get(&b).copied().unwrap_or(0) != 1) {
        w7.get_or_insert(format!(
            "fine occurrence at {:?} covered {} times",
            pos[b],
            hits.get(&b).copied().unwrap_or(0)
        ));
    }
    let p7 = result("partition", inner.len(), w7);

    // (i): fine boxes meeting a coarse box are determined by the coarse type.
    let determined = |closure: bool| -> Option<String> {
        for i in 0..kc {
            let dom = &coarse.boxes[i].domain;
            let meets: Vec<BTreeSet<(OffsetKey, usize)>> = by_type[i]
                .par_iter()
                .map(|&o| {
                    near[o]
                        .iter()
                        .filter(|n| {
                            let p = fine_piece(n.j, n.rel);
                            dom.intersection_area(&p) > area_tol || (closure && dom.boundary_gap(&p) <= tol)
                        })
                        .map(|n| (n.key, n.j))
                        .collect()
                })
                .collect();
            let union: BTreeSet<(OffsetKey, usize)> = meets.iter().flatten().copied().collect();
            for (slot, &o) in by_type[i].iter().enumerate() {
                let all: BTreeSet<(OffsetKey, usize)> = near[o].iter().map(|n| (n.key, n.j)).collect();
                if let Some(&(key, j)) = union.iter().find(|e| !all.contains(e)) {
                    let src = by_type[i]
                        .iter()
                        .zip(&meets)
                        .find(|(_, m)| m.contains(&(key, j)))
                        .map(|(&s, _)| pos[occ[s].0]);
                    return Some(format!(
                        "type {i}: a type-{j} fine box at offset ({:.6}, {:.6}) meets the coarse box at {:?} but not at {:?} (occurrence {slot})",
                        key.0 as f64 * q,
                        key.1 as f64 * q,
                        src.unwrap_or_default(),
                        pos[occ[o].0],
                    ));
                }
            }
        }
        None
    };
    let p1 = result("i", occ.len(), determined(true));
    let interior_i = result("i (interiors)", occ.len(), determined(false));

    // (ii): boundary points of coarse domains lie on boundaries of the fine pieces.
    let mut w2 = None;
    let mut samples_checked = 0;
    for i in 0..kc {
        let dom = &coarse.boxes[i].domain;
        let pieces: Vec<(usize, Vec2)> =
            (0..fine.k()).flat_map(|j| offsets[i][j].iter().map(move |&x| (j, x))).collect();
        for (a, b) in dom.edges() {
            for t in [0.0, 0.25, 0.5, 0.75] {
                let x = a + (b - a) * t;
                samples_checked += 1;
                let ok = pieces
                    .iter()
                    .any(|&(j, x0)| fine.boxes[j].domain.boundary_distance(x - x0) <= tol);
                if !ok {
                    w2.get_or_insert(format!("type {i}: boundary point {x:?} is on no fine boundary"));
                }
            }
        }
    }
    let p2 = result("ii", samples_checked, w2);

    // (iii): some fine type meets the coarse box without touching its boundary.
    let mut w3 = None;
    for i in 0..kc {
        let dom = &coarse.boxes[i].domain;
        let stats: Vec<(BTreeSet<usize>, BTreeMap<usize, String>)> = by_type[i]
            .par_iter()
            .map(|&o| {
                let mut overlap = BTreeSet::new();
                let mut touch = BTreeMap::new();
                for n in &near[o] {
                    let p = fine_piece(n.j, n.rel);
                    if dom.intersection_area(&p) > area_tol {
                        overlap.insert(n.j);
                    }
                    if dom.boundary_gap(&p) <= tol {
                        touch.entry(n.j).or_insert_with(|| {
                            format!("fine type {} at {:?} touches coarse type {i} at {:?}", n.j, pos[n.point], pos[occ[o].0])
                        });
                    }
                }
                (overlap, touch)
            })
            .collect();
        let overlap: BTreeSet<usize> = stats.iter().flat_map(|s| s.0.iter().copied()).collect();
        let mut touch: BTreeMap<usize, String> = BTreeMap::new();
        for (_, t) in &stats {
            for (j, w) in t {
                touch.entry(*j).or_insert_with(|| w.clone());
            }
        }
        if !overlap.iter().any(|j| !touch.contains_key(j)) {
            let example = overlap.iter().find_map(|j| touch.get(j)).cloned();
            w3.get_or_insert(format!(
                "coarse type {i}: every overlapping fine type touches its boundary; e.g. {}",
                example.unwrap_or_else(|| "no overlapping fine box".into())
            ));
        }
    }
    let p3 = result("iii", occ.len(), w3);

    Ok(ZoomReport {
        properties: vec![p1, p2, p3, p4, p5, p7],
        interior_i,
        coarse_occurrences: occ.len(),
        fine_occurrences: fine_type.iter().filter(|t| t.is_some()).count(),
        offsets,
    })
}
