//! Box decompositions from Voronoi cells of return vectors.
//!
//! Cells of a return set are assembled from the Voronoi cells of all patch
//! points: each point's cell joins the cell of its nearest return vector (ties
//! broken by the lexicographic order of the offset), so the coarse cells are
//! unions of level-0 cells. With every point a return vector this is the plain
//! Voronoi tiling of the patch.

use super::recognize::{occurrences, KeyCache};
use super::{BoxDecomposition, LocalTransversal, TowerBox, TowerError};
use crate::delone::{cluster_keys, r_cluster, ClusterClass, ClusterKey, DeloneMultiset, GridIndex};
use crate::geometry::{clip_halfplane, Polygon, Vec2};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub const MIN_INTERIOR_CELLS: usize = 10;

#[derive(Debug, Clone)]
pub struct VoronoiDecomposition {
    pub decomposition: BoxDecomposition,
    /// Patch indices of the return vectors.
    pub sites: Vec<usize>,
    /// Absolute cell of each site, `None` when excluded near the window edge.
    pub cells: Vec<Option<Polygon>>,
    /// Box type of each site with a certified cell.
    pub cell_type: Vec<Option<usize>>,
    pub interior: usize,
    pub excluded: usize,
}

/// Voronoi cell of every point whose cell is certified by the window.
fn point_cells(patch: &DeloneMultiset) -> Vec<Option<Polygon>> {
    let pos = patch.positions();
    let reach = 2.0 * patch.covering_radius();
    (0..patch.len())
        .into_par_iter()
        .map(|k| {
            let p = pos[k];
            if p.norm() + reach > patch.window_radius() {
                return None;
            }
            let h = reach;
            let mut poly = vec![p + Vec2::new(-h, -h), p + Vec2::new(h, -h), p + Vec2::new(h, h), p + Vec2::new(-h, h)];
            for j in patch.within(p, reach * 1.001) {
                if j != k {
                    let q = pos[j];
                    poly = clip_halfplane(&poly, (p + q) * 0.5, q - p);
                }
            }
            let cell = Polygon::new(dedup(poly, 1e-12 * (1.0 + p.norm())));
            (cell.circumradius_about(p) <= 0.5 * reach * (1.0 + 1e-9)).then_some(cell)
        })
        .collect()
}

fn dedup(v: Vec<Vec2>, tol: f64) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::with_capacity(v.len());
    for p in v {
        if out.last().is_none_or(|q| q.dist(p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(*out.last().unwrap()) <= tol {
        out.pop();
    }
    out
}

/// Outline of a union of polygons that tile a simply connected region.
fn union_outline(cells: &[&Polygon], q: f64) -> Option<Polygon> {
    let key = |v: Vec2| ((v.x / q).round() as i64, (v.y / q).round() as i64);
    let mut edges: BTreeSet<((i64, i64), (i64, i64))> = BTreeSet::new();
    let mut at: HashMap<(i64, i64), Vec2> = HashMap::new();
    for c in cells {
        for (a, b) in c.edges() {
            let (ka, kb) = (key(a), key(b));
            if ka == kb {
                continue;
            }
            at.insert(ka, a);
            if !edges.remove(&(kb, ka)) {
                edges.insert((ka, kb));
            }
        }
    }
    let mut next: HashMap<(i64, i64), (i64, i64)> = HashMap::new();
    for &(a, b) in &edges {
        if next.insert(a, b).is_some() {
            return None;
        }
    }
    let start = edges.iter().next()?.0;
    let mut chain = vec![start];
    let mut cur = *next.get(&start)?;
    while cur != start {
        chain.push(cur);
        cur = *next.get(&cur)?;
        if chain.len() > edges.len() {
            return None;
        }
    }
    if chain.len() != edges.len() {
        return None;
    }
    let pts: Vec<Vec2> = chain.iter().map(|k| at[k]).collect();
    let n = pts.len();
    let verts: Vec<Vec2> = (0..n)
        .filter(|&i| {
            let (a, b, c) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
            (b - a).cross(c - b).abs() > q * ((b - a).norm() + (c - b).norm())
        })
        .map(|i| pts[i])
        .collect();
    Some(Polygon::new(verts))
}

fn shape_key(domain: &Polygon, q: f64) -> Vec<(i64, i64)> {
    let mut v: Vec<(i64, i64)> =
        domain.vertices.iter().map(|p| ((p.x / q).round() as i64, (p.y / q).round() as i64)).collect();
    let start = (0..v.len()).min_by_key(|&i| v[i]).unwrap_or(0);
    v.rotate_left(start);
    v
}

/// Decomposition from the return vectors of `c`.
pub fn voronoi_tower_refine(patch: &DeloneMultiset, c: &LocalTransversal) -> Result<BoxDecomposition, TowerError> {
    Ok(voronoi_decomposition(patch, c, &mut KeyCache::default())?.decomposition)
}

pub fn voronoi_decomposition(
    patch: &DeloneMultiset,
    c: &LocalTransversal,
    cache: &mut KeyCache,
) -> Result<VoronoiDecomposition, TowerError> {
    let pos = patch.positions();
    let w = patch.window_radius();
    let cov = patch.covering_radius();
    let sites = occurrences(patch, cache, c);
    let site_pos: Vec<Vec2> = sites.iter().map(|&k| pos[k]).collect();
    if sites.len() < MIN_INTERIOR_CELLS {
        return Err(TowerError::TooFewReturns { found: sites.len(), need: MIN_INTERIOR_CELLS });
    }
    let is_site: BTreeSet<usize> = sites.iter().copied().collect();
    let every_point = (0..patch.len()).all(|k| !patch.certifies(k, c.rec) || is_site.contains(&k));
    let fine = point_cells(patch);
    let r0 = (0..patch.len())
        .filter_map(|k| fine[k].as_ref().map(|p| p.circumradius_about(pos[k])))
        .fold(0.0, f64::max);
    let q = 1e-7 * patch.packing_radius();

    // Nearest site of every point, ties to the lexicographically least offset.
    let grid = GridIndex::new(&site_pos, (4.0 * patch.packing_radius()).max(c.rec).max(1e-6));
    let tie = 1e-9 * (1.0 + w);
    let site_limit = w - c.rec;
    let owner: Vec<Option<usize>> = (0..patch.len())
        .into_par_iter()
        .map(|k| {
            fine[k].as_ref()?;
            let p = pos[k];
            let (_, d) = grid.nearest(&site_pos, p, None)?;
            if p.norm() + d > site_limit {
                return None;
            }
            let mut best: Option<(usize, Vec2)> = None;
            grid.for_each_within(&site_pos, p, d + tie, |s, _| {
                let off = site_pos[s] - p;
                if best.is_none_or(|(_, b)| (off.x, off.y) < (b.x, b.y)) {
                    best = Some((s, off));
                }
            });
            best.map(|b| b.0)
        })
        .collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); sites.len()];
    for (k, o) in owner.iter().enumerate() {
        if let Some(s) = o {
            members[*s].push(k);
        }
    }
    let cells: Vec<Option<Polygon>> = (0..sites.len())
        .into_par_iter()
        .map(|s| {
            if members[s].is_empty() {
                return None;
            }
            let parts: Vec<&Polygon> = members[s].iter().filter_map(|&k| fine[k].as_ref()).collect();
            let cell = if parts.len() == 1 {
                parts[0].clone()
            } else {
                union_outline(&parts, q).or_else(|| union_outline(&parts, 7.3 * q))?
            };
            let circ = cell.circumradius_about(site_pos[s]);
            (site_pos[s].norm() + 2.0 * circ + 4.0 * cov <= site_limit).then_some(cell)
        })
        .collect();
    let interior = cells.iter().filter(|c| c.is_some()).count();
    if interior < MIN_INTERIOR_CELLS {
        return Err(TowerError::TooFewReturns { found: interior, need: MIN_INTERIOR_CELLS });
    }
    let r_cells = cells
        .iter()
        .zip(&site_pos)
        .filter_map(|(c, &p)| c.as_ref().map(|c| c.circumradius_about(p)))
        .fold(0.0, f64::max);

    // Types: (shape, pattern) with the pattern radius large enough to fix the shape.
    let mut rho = if every_point { 2.0 * r0 } else { c.rec.max(r_cells + 3.0 * r0) };
    loop {
        let keys = cluster_keys(patch, rho);
        let mut shape_of: HashMap<ClusterKey, Vec<(i64, i64)>> = HashMap::new();
        let mut consistent = true;
        let mut typed: Vec<Option<(ClusterKey, Vec<(i64, i64)>, Polygon)>> = Vec::with_capacity(sites.len());
        for (s, cell) in cells.iter().enumerate() {
            let entry = match (cell, keys[sites[s]]) {
                (Some(cell), Some(key)) => {
                    let dom = cell.translate(-site_pos[s]);
                    let shape = shape_key(&dom, q * 10.0);
                    if shape_of.entry(key).or_insert_with(|| shape.clone()) != &shape {
                        consistent = false;
                    }
                    Some((key, shape, dom))
                }
                _ => None,
            };
            typed.push(entry);
        }
        if !consistent {
            rho += r0;
            if rho >= w {
                return Err(TowerError::InsufficientPatch { radius: rho });
            }
            continue;
        }
        let mut index: BTreeMap<(Vec<(i64, i64)>, ClusterKey), usize> = BTreeMap::new();
        let mut order: Vec<(usize, Polygon)> = Vec::new();
        let mut cell_type = vec![None; sites.len()];
        for (s, t) in typed.into_iter().enumerate() {
            if let Some((key, shape, dom)) = t {
                let next = order.len();
                let id = *index.entry((shape, key)).or_insert(next);
                if id == next {
                    order.push((s, dom));
                }
                cell_type[s] = Some(id);
            }
        }
        let mut boxes = Vec::with_capacity(order.len());
        for (id, (s, dom)) in order.into_iter().enumerate() {
            let k = sites[s];
            let class = ClusterClass::from_cluster(r_cluster(patch, k, rho)?, patch.eps_geo());
            let base = LocalTransversal {
                table: BTreeSet::from([class.key]),
                defining_class: class,
                defining_radius: rho,
                rec: rho,
                label: patch.label_of(k),
            };
            boxes.push(TowerBox { level: 0, class_id: id, base, domain: dom });
        }
        let decomposition = BoxDecomposition::from_boxes(usize::from(!every_point), boxes);
        return Ok(VoronoiDecomposition {
            decomposition,
            excluded: sites.len() - interior,
            sites,
            cells,
            cell_type,
            interior,
        });
    }
}
