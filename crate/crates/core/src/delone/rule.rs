//! Substitution rules on polyomino prototiles and patch generation.
//!
//! Prototiles are unions of unit squares in an integer "frame"; a fixed linear
//! map sends the frame to physical space. Inflation by the integer expansion
//! commutes with that map, so all coordinates stay exact dyadic rationals when
//! the map has dyadic entries.

use super::{DeloneError, DeloneMultiset, Label, LabeledPoint, Provenance};
use crate::geometry::{Mat2, Polygon, Vec2};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq)]
pub struct Prototile {
    pub label: Label,
    /// Lower-left corners of the unit squares, relative to the tile origin.
    pub squares: Vec<[i64; 2]>,
    /// Control points (frame coordinates relative to the tile origin).
    pub motif: Vec<(Vec2, Label)>,
}

/// A tile at some depth of the hierarchy; `origin` is in the units of that depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tile {
    pub origin: [i64; 2],
    pub proto: usize,
}

/// Choice of base point for each level of the supertile hierarchy.
///
/// The level-0 anchor of a tile is motif point `base`; the level-`n` anchor of
/// a supertile is the level-`(n-1)` anchor of its child number `child(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorChain {
    pub base: usize,
    pub children: Vec<usize>,
}

impl AnchorChain {
    pub fn child(&self, n: usize) -> usize {
        self.children[(n - 1) % self.children.len()]
    }
}

#[derive(Debug, Clone)]
pub struct SubstitutionRule {
    name: String,
    expansion: i64,
    frame: Mat2,
    prototiles: Vec<Prototile>,
    rule: Vec<Vec<([i64; 2], usize)>>,
    anchor: AnchorChain,
    polygons: Vec<Polygon>,
}

impl SubstitutionRule {
    /// Validates congruence of every inflation step and primitivity.
    pub fn new(
        name: &str,
        expansion: i64,
        frame: Mat2,
        prototiles: Vec<Prototile>,
        rule: Vec<Vec<([i64; 2], usize)>>,
        anchor: AnchorChain,
    ) -> Result<Self, DeloneError> {
        for (i, kids) in rule.iter().enumerate() {
            let mut inflated = BTreeSet::new();
            for s in &prototiles[i].squares {
                for dy in 0..expansion {
                    for dx in 0..expansion {
                        inflated.insert([s[0] * expansion + dx, s[1] * expansion + dy]);
                    }
                }
            }
            let mut covered = BTreeSet::new();
            let mut overlap = false;
            for (off, c) in kids {
                for s in &prototiles[*c].squares {
                    overlap |= !covered.insert([off[0] + s[0], off[1] + s[1]]);
                }
            }
            if overlap || covered != inflated {
                return Err(DeloneError::NotCongruent {
                    rule: name.to_string(),
                    label: prototiles[i].label,
                });
            }
        }
        let polygons = prototiles.iter().map(|p| outline(&p.squares)).collect();
        let r = SubstitutionRule {
            name: name.to_string(),
            expansion,
            frame,
            prototiles,
            rule,
            anchor,
            polygons,
        };
        if !is_primitive(&r.label_count_matrix()) {
            return Err(DeloneError::NotPrimitive(name.to_string()));
        }
        Ok(r)
    }

    /// Chair substitution on four orientations, control points at the unit
    /// square centers, sheared so the square centers form a near-triangular
    /// lattice with nearest-neighbor distances 1 and about 0.994.
    pub fn chair() -> Self {
        let rot = |v: [i64; 2], o: usize| -> [i64; 2] {
            let mut v = v;
            for _ in 0..o {
                v = [-v[1], v[0]];
            }
            v
        };
        let rotf = |v: Vec2, o: usize| -> Vec2 {
            let mut v = v;
            for _ in 0..o {
                v = Vec2::new(-v.y, v.x);
            }
            v
        };
        let mut prototiles = Vec::new();
        let mut rule = Vec::new();
        for o in 0..4usize {
            // Quadrant missing from the 2x2 box, as a doubled offset from the box center.
            let miss = rot([1, 1], o);
            let squares: Vec<[i64; 2]> = [[0, 0], [1, 0], [0, 1], [1, 1]]
                .into_iter()
                .filter(|s| [2 * s[0] - 1, 2 * s[1] - 1] != miss)
                .collect();
            let center = Vec2::new(1.0, 1.0);
            let motif = [Vec2::new(-0.5, -0.5), Vec2::new(0.5, -0.5), Vec2::new(-0.5, 0.5)]
                .into_iter()
                .map(|q| (center + rotf(q, o), o as Label))
                .collect();
            prototiles.push(Prototile { label: o as Label, squares, motif });
            // Children: center, corner, and the two arms (rotated by +1 and +3).
            let kids = [([0, 0], 0), ([-1, -1], 0), ([1, -1], 1), ([-1, 1], 3)]
                .into_iter()
                .map(|(dv, turn)| {
                    let r = rot(dv, o);
                    ([1 + r[0], 1 + r[1]], (o + turn) % 4)
                })
                .collect();
            rule.push(kids);
        }
        let frame = Mat2 { a: 1.0, b: 0.5, c: 0.0, d: 55.0 / 64.0 };
        let anchor = AnchorChain { base: 0, children: vec![1, 0] };
        SubstitutionRule::new("chair", 2, frame, prototiles, rule, anchor)
            .expect("chair rule is valid")
    }

    /// The periodic control: a unit square split into four.
    pub fn square() -> Self {
        let proto = Prototile {
            label: 0,
            squares: vec![[0, 0]],
            motif: vec![(Vec2::new(0.5, 0.5), 0)],
        };
        let rule = vec![vec![([0, 0], 0), ([1, 0], 0), ([0, 1], 0), ([1, 1], 0)]];
        let anchor = AnchorChain { base: 0, children: vec![0] };
        SubstitutionRule::new("square", 2, Mat2::IDENTITY, vec![proto], rule, anchor)
            .expect("square rule is valid")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "chair" => Some(Self::chair()),
            "square" => Some(Self::square()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn expansion(&self) -> f64 {
        self.expansion as f64
    }
    pub fn frame(&self) -> &Mat2 {
        &self.frame
    }
    pub fn prototiles(&self) -> &[Prototile] {
        &self.prototiles
    }
    pub fn children(&self, proto: usize) -> &[([i64; 2], usize)] {
        &self.rule[proto]
    }
    pub fn anchor_chain(&self) -> &AnchorChain {
        &self.anchor
    }

    /// Outline of prototile `proto` in frame coordinates.
    pub fn polygon(&self, proto: usize) -> &Polygon {
        &self.polygons[proto]
    }

    /// Distinct control-point labels, sorted.
    pub fn labels(&self) -> Vec<Label> {
        let set: BTreeSet<Label> =
            self.prototiles.iter().flat_map(|p| p.motif.iter().map(|m| m.1)).collect();
        set.into_iter().collect()
    }

    pub fn proto_of_label(&self, label: Label) -> Option<usize> {
        self.prototiles.iter().position(|p| p.label == label)
    }

    /// `m[i][j]` = number of children of type `j` in one inflated tile of type `i`.
    pub fn label_count_matrix(&self) -> Vec<Vec<u64>> {
        let k = self.prototiles.len();
        let mut m = vec![vec![0u64; k]; k];
        for (i, kids) in self.rule.iter().enumerate() {
            for (_, c) in kids {
                m[i][*c] += 1;
            }
        }
        m
    }

    pub fn child(&self, t: &Tile, idx: usize) -> Tile {
        let (off, c) = self.rule[t.proto][idx];
        Tile {
            origin: [t.origin[0] * self.expansion + off[0], t.origin[1] * self.expansion + off[1]],
            proto: c,
        }
    }

    pub fn inflate(&self, tiles: &[Tile]) -> Vec<Tile> {
        let mut out = Vec::with_capacity(tiles.len() * 4);
        for t in tiles {
            for idx in 0..self.rule[t.proto].len() {
                out.push(self.child(t, idx));
            }
        }
        out
    }

    /// Tiles after `depth` inflations of a single seed tile.
    pub fn tiles(&self, seed: usize, depth: u32) -> Vec<Tile> {
        let mut tiles = vec![Tile { origin: [0, 0], proto: seed }];
        for _ in 0..depth {
            tiles = self.inflate(&tiles);
        }
        tiles
    }

    /// Outline, in final frame units, of a tile that is a level-`n` supertile.
    pub fn supertile_frame_polygon(&self, t: &Tile, n: u32) -> Polygon {
        let s = (self.expansion as f64).powi(n as i32);
        self.polygons[t.proto]
            .translate(Vec2::new(t.origin[0] as f64, t.origin[1] as f64))
            .scale(s)
    }

    /// Level-`n` anchor of a level-`n` supertile, in final frame units.
    pub fn anchor_frame(&self, t: &Tile, n: u32) -> Vec2 {
        let mut t = *t;
        for m in (1..=n as usize).rev() {
            t = self.child(&t, self.anchor.child(m));
        }
        let o = Vec2::new(t.origin[0] as f64, t.origin[1] as f64);
        o + self.prototiles[t.proto].motif[self.anchor.base].0
    }

    pub fn to_physical(&self, p: Vec2) -> Vec2 {
        self.frame.apply(p)
    }
}

fn is_primitive(m: &[Vec<u64>]) -> bool {
    let k = m.len();
    let mut p: Vec<Vec<bool>> = m.iter().map(|r| r.iter().map(|&x| x > 0).collect()).collect();
    let base = p.clone();
    for _ in 0..(k * k).max(1) {
        if p.iter().all(|r| r.iter().all(|&x| x)) {
            return true;
        }
        let mut q = vec![vec![false; k]; k];
        for i in 0..k {
            for j in 0..k {
                q[i][j] = (0..k).any(|l| p[i][l] && base[l][j]);
            }
        }
        p = q;
    }
    p.iter().all(|r| r.iter().all(|&x| x))
}

/// Boundary of a simply connected union of unit squares, collinear vertices merged.
fn outline(squares: &[[i64; 2]]) -> Polygon {
    let mut edges: BTreeMap<[i64; 2], [i64; 2]> = BTreeMap::new();
    let mut set = BTreeSet::new();
    for s in squares {
        let [a, b] = *s;
        let cyc = [[a, b], [a + 1, b], [a + 1, b + 1], [a, b + 1]];
        for k in 0..4 {
            set.insert((cyc[k], cyc[(k + 1) % 4]));
        }
    }
    for &(p, q) in &set {
        if !set.contains(&(q, p)) {
            edges.insert(p, q);
        }
    }
    let start = *edges.keys().next().expect("non-empty polyomino");
    let mut chain = vec![start];
    let mut cur = edges[&start];
    while cur != start {
        chain.push(cur);
        cur = edges[&cur];
    }
    let n = chain.len();
    let mut verts = Vec::new();
    for i in 0..n {
        let (a, b, c) = (chain[(i + n - 1) % n], chain[i], chain[(i + 1) % n]);
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross != 0 {
            verts.push(Vec2::new(b[0] as f64, b[1] as f64));
        }
    }
    Polygon::new(verts)
}

/// Control-point patch after `levels` inflations of one seed tile, recentered on
/// the point deepest inside the tiled region.
///
/// All generated points are kept; `window_radius` is the distance from the new
/// origin to the boundary of the tiled region, so the patch is complete there.
pub fn generate_patch(
    rule: &SubstitutionRule,
    levels: u32,
    seed_label: Label,
) -> Result<DeloneMultiset, DeloneError> {
    let seed = rule.proto_of_label(seed_label).ok_or(DeloneError::UnknownLabel(seed_label))?;
    let tiles = rule.tiles(seed, levels);
    let region = rule
        .polygon(seed)
        .scale(rule.expansion().powi(levels as i32))
        .transform(rule.frame());
    let mut points = Vec::with_capacity(tiles.len() * 3);
    for t in &tiles {
        let o = Vec2::new(t.origin[0] as f64, t.origin[1] as f64);
        for (m, label) in &rule.prototiles[t.proto].motif {
            points.push(LabeledPoint { position: rule.to_physical(o + *m), label: *label });
        }
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (k, p) in points.iter().enumerate() {
        let d = region.boundary_distance(p.position);
        if d > best.1 {
            best = (k, d);
        }
    }
    let shift = points[best.0].position;
    for p in &mut points {
        p.position = p.position - shift;
    }
    let provenance =
        Provenance { rule: rule.name.clone(), levels, seed_label, shift };
    Ok(DeloneMultiset::new(rule.labels(), points, best.1, Some(provenance)))
}
