//! Tower systems: nested box decompositions of the pattern space.
//!
//! A box `C[D]` is stored as a base transversal `C` (a recognition table of
//! pattern keys) and a polygonal domain `D` about the origin. The substitution
//! tower takes level-`n` supertiles as boxes; its transversals are recognized
//! from pattern windows measured on the patch itself.

mod recognize;
mod voronoi;
mod zoom;

pub use recognize::{occurrences, KeyCache};
pub use voronoi::{voronoi_decomposition, voronoi_tower_refine, VoronoiDecomposition};
pub use zoom::{check_zoomed_out, check_zoomed_out_cached, PropertyResult, ZoomReport};

use crate::delone::{
    cluster_key, r_cluster, ClusterClass, ClusterKey, DeloneError, DeloneMultiset, GridIndex,
    Label, SubstitutionRule, Tile,
};
use crate::geometry::{Polygon, Vec2};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TowerError {
    #[error("repetitivity constant must exceed 1, got {0}")]
    Domain(f64),
    #[error("patch window cannot certify recognition at radius {radius}")]
    InsufficientPatch { radius: f64 },
    #[error("patch was not generated by this rule: {0}")]
    NotGenerated(String),
    #[error("supertile anchor at {0:?} is not a patch point")]
    MissingAnchor(Vec2),
    #[error("tower has no levels")]
    NoLevels,
    #[error("only {found} interior return cells, need {need}")]
    TooFewReturns { found: usize, need: usize },
    #[error("level {0} not in tower")]
    MissingLevel(usize),
    #[error("level {0} bases are not decided by patterns on this patch")]
    NotRecognizable(usize),
    #[error("malformed tower file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Delone(#[from] DeloneError),
}

/// The constants `(λ, K₁, K₂)` attached to a repetitivity constant `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerConstants {
    pub l: f64,
    pub lambda: f64,
    pub k1: f64,
    pub k2: f64,
}

/// `λ = 6L(L+1)²`, `K₁ = 1/(2(L+1)) − L/(λ−1)`, `K₂ = λL/(λ−1)`.
pub fn tower_constants(l: f64) -> Result<TowerConstants, TowerError> {
    if !(l > 1.0) || !l.is_finite() {
        return Err(TowerError::Domain(l));
    }
    let lambda = 6.0 * l * (l + 1.0).powi(2);
    let k1 = 1.0 / (2.0 * (l + 1.0)) - l / (lambda - 1.0);
    let k2 = lambda * l / (lambda - 1.0);
    assert!(0.0 < k1 && k1 < 1.0 && 1.0 < k2, "K1 = {k1}, K2 = {k2} at L = {l}");
    Ok(TowerConstants { l, lambda, k1, k2 })
}

/// Exact version of [`tower_constants`] for rational `L`.
pub fn tower_constants_exact(l: Ratio<i128>) -> Result<(Ratio<i128>, Ratio<i128>, Ratio<i128>), TowerError> {
    let one = Ratio::from_integer(1);
    if l <= one {
        return Err(TowerError::Domain(*l.numer() as f64 / *l.denom() as f64));
    }
    let lambda = Ratio::from_integer(6) * l * (l + one) * (l + one);
    let k1 = one / (Ratio::from_integer(2) * (l + one)) - l / (lambda - one);
    let k2 = lambda * l / (lambda - one);
    Ok((lambda, k1, k2))
}

/// Set of patterns whose window of radius `rec` at the origin has a key in `table`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTransversal {
    pub defining_class: ClusterClass,
    pub defining_radius: f64,
    pub rec: f64,
    pub label: Label,
    #[serde(with = "key_set")]
    pub table: BTreeSet<ClusterKey>,
}

mod key_set {
    use super::ClusterKey;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeSet;

    pub fn serialize<S: Serializer>(t: &BTreeSet<ClusterKey>, s: S) -> Result<S::Ok, S::Error> {
        t.iter().map(|k| format!("{k:032x}")).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<ClusterKey>, D::Error> {
        let v: Vec<String> = Vec::deserialize(d)?;
        v.iter()
            .map(|s| ClusterKey::from_str_radix(s, 16).map_err(serde::de::Error::custom))
            .collect()
    }
}

impl LocalTransversal {
    /// Cylinder set of the `r`-cluster at point `k`.
    pub fn cylinder(patch: &DeloneMultiset, k: usize, r: f64) -> Result<Self, TowerError> {
        let class = ClusterClass::from_cluster(r_cluster(patch, k, r)?, patch.eps_geo());
        let table = BTreeSet::from([class.key]);
        Ok(LocalTransversal { label: patch.label_of(k), defining_radius: r, rec: r, defining_class: class, table })
    }

    /// Membership of the pattern seen from point `k`.
    pub fn contains(&self, patch: &DeloneMultiset, k: usize) -> Result<bool, TowerError> {
        Ok(self.table.contains(&cluster_key(patch, k, self.rec)?))
    }
}

/// Union of transversals, re-keyed at the largest recognition radius.
pub fn union_transversal(
    patch: &DeloneMultiset,
    parts: &[&LocalTransversal],
    cache: &mut KeyCache,
) -> Result<LocalTransversal, TowerError> {
    let first = parts.first().ok_or(TowerError::NoLevels)?;
    let rec = parts.iter().map(|t| t.rec).fold(0.0, f64::max);
    let mut members = BTreeSet::new();
    for t in parts {
        members.extend(recognize::occurrences(patch, cache, t));
    }
    let keys = cache.keys(patch, rec);
    let table: BTreeSet<ClusterKey> = members.iter().filter_map(|&k| keys[k]).collect();
    if table.is_empty() {
        return Err(TowerError::InsufficientPatch { radius: rec });
    }
    let defining_radius = parts.iter().map(|t| t.defining_radius).fold(0.0, f64::max);
    Ok(LocalTransversal {
        defining_class: first.defining_class.clone(),
        defining_radius,
        rec,
        label: first.label,
        table,
    })
}

/// A box `C[D]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerBox {
    pub level: usize,
    pub class_id: usize,
    pub base: LocalTransversal,
    pub domain: Polygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDecomposition {
    pub level: usize,
    pub boxes: Vec<TowerBox>,
    pub r_int: f64,
    pub r_ext: f64,
    pub rec: f64,
}

impl BoxDecomposition {
    pub fn from_boxes(level: usize, boxes: Vec<TowerBox>) -> Self {
        let r_int = boxes.iter().map(|b| b.domain.inradius_about(Vec2::ZERO)).fold(f64::INFINITY, f64::min);
        let r_ext = boxes.iter().map(|b| b.domain.circumradius_about(Vec2::ZERO)).fold(0.0, f64::max);
        let rec = boxes.iter().map(|b| b.base.rec).fold(0.0, f64::max);
        BoxDecomposition { level, boxes, r_int, r_ext, rec }
    }

    pub fn k(&self) -> usize {
        self.boxes.len()
    }
}

/// `entries[i][j] = |offsets[i][j]|`: fine type-`j` boxes inside a coarse type-`i` box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub entries: Vec<Vec<u64>>,
    pub offsets: Vec<Vec<Vec<Vec2>>>,
}

impl TransitionMatrix {
    pub fn row_sums(&self) -> Vec<u64> {
        self.entries.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn power(&self, p: u32) -> Vec<Vec<u64>> {
        let k = self.entries.len();
        let mut acc: Vec<Vec<u64>> = (0..k).map(|i| (0..k).map(|j| u64::from(i == j)).collect()).collect();
        for _ in 0..p {
            acc = (0..k)
                .map(|i| (0..k).map(|j| (0..k).map(|l| acc[i][l] * self.entries[l][j]).sum()).collect())
                .collect();
        }
        acc
    }

    /// Largest relative gap in `Vol(D'_i) = Σ_j m_ij Vol(D_j)`.
    pub fn volume_defect(&self, coarse: &BoxDecomposition, fine: &BoxDecomposition) -> f64 {
        coarse
            .boxes
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let v = b.domain.area();
                let s: f64 = self.entries[i]
                    .iter()
                    .zip(&fine.boxes)
                    .map(|(&m, f)| m as f64 * f.domain.area())
                    .sum();
                ((v - s) / v).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Constants measured on the tower itself at level 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredConstants {
    pub k1_hat: f64,
    pub k2_hat: f64,
    pub c_rec_hat: f64,
    pub k3_hat: Option<f64>,
    pub k4_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerSystem {
    pub decompositions: Vec<BoxDecomposition>,
    /// `matrices[n - 1]` maps level `n` to level `n - 1`.
    pub matrices: Vec<TransitionMatrix>,
    pub lambda_eff: f64,
    pub measured: MeasuredConstants,
    /// Constants attached to a measured repetitivity constant, kept apart from the measured ones.
    pub repetitivity_constants: Option<TowerConstants>,
    /// Whether each level's bases are decided by pattern windows (false for periodic controls).
    pub recognizable: Vec<bool>,
}

impl TowerSystem {
    pub fn levels(&self) -> usize {
        self.decompositions.len()
    }

    pub fn level(&self, n: usize) -> Result<&BoxDecomposition, TowerError> {
        self.decompositions.get(n).ok_or(TowerError::MissingLevel(n))
    }

    pub fn with_repetitivity(mut self, l_hat: f64) -> Result<Self, TowerError> {
        self.repetitivity_constants = Some(tower_constants(l_hat)?);
        Ok(self)
    }

    pub fn with_measures(mut self, m: &BoxMeasures) -> Self {
        self.measured.k3_hat = Some(m.k3_hat);
        self.measured.k4_hat = Some(m.k4_hat);
        self
    }

    /// Per level: `K̂₁λⁿ ≤ r_int < R_ext ≤ K̂₂λⁿ`.
    pub fn sandwich(&self) -> Vec<bool> {
        let tol = 1e-12;
        self.decompositions
            .iter()
            .enumerate()
            .map(|(n, d)| {
                let s = self.lambda_eff.powi(n as i32);
                self.measured.k1_hat * s <= d.r_int * (1.0 + tol)
                    && d.r_int < d.r_ext
                    && d.r_ext <= self.measured.k2_hat * s * (1.0 + tol)
            })
            .collect()
    }

    /// Per level: `rec(B_n) ≤ Ĉ_rec λⁿ`.
    pub fn rec_bound(&self) -> Vec<bool> {
        self.decompositions
            .iter()
            .enumerate()
            .map(|(n, d)| d.rec <= self.measured.c_rec_hat * self.lambda_eff.powi(n as i32) * (1.0 + 1e-12))
            .collect()
    }
}

fn supertile_domain(rule: &SubstitutionRule, proto: usize, n: u32) -> Polygon {
    let t = Tile { origin: [0, 0], proto };
    rule.supertile_frame_polygon(&t, n)
        .translate(-rule.anchor_frame(&t, n))
        .transform(rule.frame())
}

/// Tower whose level-`n` boxes are the `n`-th order supertiles of `rule`.
pub fn build_substitution_tower(
    rule: &SubstitutionRule,
    patch: &DeloneMultiset,
    levels: usize,
) -> Result<TowerSystem, TowerError> {
    let prov = patch
        .provenance()
        .ok_or_else(|| TowerError::NotGenerated("patch has no generation record".into()))?;
    if prov.rule != rule.name() {
        return Err(TowerError::NotGenerated(format!("patch rule `{}`", prov.rule)));
    }
    if (prov.levels as usize) < levels + 1 {
        return Err(TowerError::NotGenerated(format!(
            "{} inflation steps, need {}",
            prov.levels,
            levels + 1
        )));
    }
    let seed = rule
        .proto_of_label(prov.seed_label)
        .ok_or(DeloneError::UnknownLabel(prov.seed_label))?;
    let k = rule.prototiles().len();
    let step = patch.packing_radius() / 4.0;
    let tol = 16.0 * patch.eps_geo();
    let mut cache = KeyCache::default();
    let mut decompositions = Vec::with_capacity(levels + 1);
    let mut recognizable = vec![true; levels + 1];
    for n in 0..=levels {
        let tiles = rule.tiles(seed, prov.levels - n as u32);
        let mut class = vec![None; patch.len()];
        for t in &tiles {
            let a = rule.to_physical(rule.anchor_frame(t, n as u32)) - prov.shift;
            match patch.nearest(a) {
                Some((idx, d)) if d <= tol => class[idx] = Some(t.proto),
                _ => return Err(TowerError::MissingAnchor(a)),
            }
        }
        let mut boxes = Vec::with_capacity(k);
        for i in 0..k {
            let domain = supertile_domain(rule, i, n as u32);
            let (rec, table) = match recognize::recognition_radius(patch, &mut cache, &class, i, step) {
                Ok(found) => found,
                // A single class whose anchors look like every other point: the
                // hierarchy is invisible to patterns and the base is all of U.
                Err(TowerError::InsufficientPatch { .. }) if k == 1 => {
                    recognizable[n] = false;
                    (0.0, cache.keys(patch, 0.0).iter().flatten().copied().collect())
                }
                Err(e) => return Err(e),
            };
            let reach = domain.circumradius_about(Vec2::ZERO);
            let rep = (0..patch.len())
                .filter(|&p| class[p] == Some(i) && patch.certifies(p, reach))
                .min_by(|&a, &b| patch.positions()[a].norm().total_cmp(&patch.positions()[b].norm()))
                .ok_or(TowerError::InsufficientPatch { radius: reach })?;
            let mut cluster = r_cluster(patch, rep, reach)?;
            cluster.members.retain(|m| domain.contains(m.position) || domain.boundary_distance(m.position) <= tol);
            let defining_class = ClusterClass::from_cluster(cluster, patch.eps_geo());
            let base = LocalTransversal {
                defining_class,
                defining_radius: reach,
                rec,
                label: rule.prototiles()[i].label,
                table,
            };
            boxes.push(TowerBox { level: n, class_id: i, base, domain });
        }
        decompositions.push(BoxDecomposition::from_boxes(n, boxes));
    }
    let matrices = (1..=levels).map(|n| substitution_matrix(rule, n as u32)).collect();
    let lambda_eff = rule.expansion();
    let m = levels.min(1);
    let s = lambda_eff.powi(m as i32);
    let d = &decompositions[m];
    let measured = MeasuredConstants {
        k1_hat: d.r_int / s,
        k2_hat: d.r_ext / s,
        c_rec_hat: d.rec / s,
        k3_hat: None,
        k4_hat: None,
    };
    Ok(TowerSystem { decompositions, matrices, lambda_eff, measured, repetitivity_constants: None, recognizable })
}

fn substitution_matrix(rule: &SubstitutionRule, n: u32) -> TransitionMatrix {
    let k = rule.prototiles().len();
    let mut entries = vec![vec![0u64; k]; k];
    let mut offsets = vec![vec![Vec::new(); k]; k];
    for i in 0..k {
        let parent = Tile { origin: [0, 0], proto: i };
        let a = rule.anchor_frame(&parent, n);
        for c in 0..rule.children(i).len() {
            let child = rule.child(&parent, c);
            let off = rule.to_physical(rule.anchor_frame(&child, n - 1) - a);
            entries[i][child.proto] += 1;
            offsets[i][child.proto].push(off);
        }
    }
    TransitionMatrix { entries, offsets }
}

/// Anchor positions of a transversal on the patch, with half their minimum gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnVectors {
    pub indices: Vec<usize>,
    pub vectors: Vec<Vec2>,
    pub packing_radius: Option<f64>,
    pub warning: Option<String>,
}

pub fn return_vectors(patch: &DeloneMultiset, c: &LocalTransversal) -> ReturnVectors {
    return_vectors_cached(patch, c, &mut KeyCache::default())
}

pub fn return_vectors_cached(patch: &DeloneMultiset, c: &LocalTransversal, cache: &mut KeyCache) -> ReturnVectors {
    let indices = recognize::occurrences(patch, cache, c);
    let vectors: Vec<Vec2> = indices.iter().map(|&k| patch.positions()[k]).collect();
    let packing_radius = if vectors.len() < 2 {
        None
    } else {
        let cell = (patch.packing_radius() * 4.0).max(c.rec);
        let grid = GridIndex::new(&vectors, cell.max(1e-6));
        let gap = (0..vectors.len())
            .filter_map(|k| grid.nearest(&vectors, vectors[k], Some(k)).map(|(_, d)| d))
            .fold(f64::INFINITY, f64::min);
        Some(0.5 * gap)
    };
    let warning = match vectors.len() {
        0 => Some("no occurrence in the certified window; repetitivity too coarse for this patch".into()),
        1 => Some("a single occurrence; packing radius undefined".into()),
        _ => None,
    };
    ReturnVectors { indices, vectors, packing_radius, warning }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxMeasure {
    pub class_id: usize,
    pub nu_hat: f64,
    pub volume: f64,
    pub mu_hat: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMeasures {
    pub level: usize,
    /// Counting ball radius `W − rec(B_n)`.
    pub radius: f64,
    pub boxes: Vec<BoxMeasure>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxMeasures {
    pub levels: Vec<LevelMeasures>,
    /// `max ν̂ λ^{dn}` over levels `n ≥ 1`.
    pub k3_hat: f64,
    /// `1 / min ν̂ λ^{dn}` over levels `n ≥ 1`.
    pub k4_hat: f64,
    /// `max / min` of `ν̂ λ^{dn}` over levels `n ≥ 1`.
    pub scaling_spread: f64,
}

/// Base frequencies by direct counting in `B_R(0)`, `R = W − rec(B_n)`.
///
/// The count of recognized anchors equals the summed frequencies of the
/// `rec`-clusters in the recognition table.
pub fn box_measures(tower: &TowerSystem, patch: &DeloneMultiset) -> Result<BoxMeasures, TowerError> {
    let mut cache = KeyCache::default();
    box_measures_cached(tower, patch, &mut cache)
}

pub fn box_measures_cached(
    tower: &TowerSystem,
    patch: &DeloneMultiset,
    cache: &mut KeyCache,
) -> Result<BoxMeasures, TowerError> {
    let d = patch.dimension() as i32;
    let mut levels = Vec::new();
    let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
    for dec in &tower.decompositions {
        if !tower.recognizable.get(dec.level).copied().unwrap_or(true) {
            return Err(TowerError::NotRecognizable(dec.level));
        }
        let radius = patch.window_radius() - dec.rec;
        if radius <= patch.covering_radius() {
            return Err(TowerError::InsufficientPatch { radius: dec.rec });
        }
        let vol = PI * radius * radius;
        let mut boxes = Vec::new();
        for b in &dec.boxes {
            let count = recognize::occurrences(patch, cache, &b.base)
                .into_iter()
                .filter(|&k| patch.positions()[k].norm() <= radius + patch.eps_geo())
                .count();
            let nu_hat = count as f64 / vol;
            let volume = b.domain.area();
            boxes.push(BoxMeasure { class_id: b.class_id, nu_hat, volume, mu_hat: nu_hat * volume, count });
            if dec.level >= 1 || tower.levels() == 1 {
                let scaled = nu_hat * tower.lambda_eff.powi(d * dec.level as i32);
                hi = hi.max(scaled);
                lo = lo.min(scaled);
            }
        }
        let total = boxes.iter().map(|b| b.mu_hat).sum();
        levels.push(LevelMeasures { level: dec.level, radius, boxes, total });
    }
    Ok(BoxMeasures { levels, k3_hat: hi, k4_hat: 1.0 / lo, scaling_spread: hi / lo })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis1Report {
    pub k: Vec<usize>,
    pub holds_at_all_computed_levels: bool,
    pub first_violation: Option<usize>,
    pub statement: String,
}

/// `k_n > 1` at every computed level `n ≥ 1` (level 0 alone if that is all there is).
pub fn check_hypothesis1(tower: &TowerSystem) -> Result<Hypothesis1Report, TowerError> {
    if tower.decompositions.is_empty() {
        return Err(TowerError::NoLevels);
    }
    let k: Vec<usize> = tower.decompositions.iter().map(|d| d.k()).collect();
    let start = usize::from(k.len() > 1);
    let first_violation = (start..k.len()).find(|&n| k[n] <= 1);
    let statement = match first_violation {
        None => format!("k_n > 1 for all computed levels {start}..={}", k.len() - 1),
        Some(n) => format!("k_n = {} at level {n}", k[n]),
    };
    Ok(Hypothesis1Report { holds_at_all_computed_levels: first_violation.is_none(), k, first_violation, statement })
}

/// On-disk form of a tower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerFile {
    pub levels: Vec<LevelFile>,
    pub matrices: Vec<Vec<Vec<u64>>>,
    pub offsets: Vec<Vec<Vec<Vec<Vec2>>>>,
    pub lambda_eff: f64,
    pub constants: ConstantsFile,
    pub recognizable: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFile {
    pub k: usize,
    pub boxes: Vec<BoxFile>,
    pub r_int: f64,
    #[serde(rename = "R_ext")]
    pub r_ext: f64,
    pub rec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxFile {
    pub class_id: usize,
    pub rec: f64,
    pub domain_vertices: Vec<Vec2>,
    pub base: LocalTransversal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsFile {
    pub measured: MeasuredConstants,
    pub repetitivity_constants: Option<TowerConstants>,
}

impl From<&TowerSystem> for TowerFile {
    fn from(t: &TowerSystem) -> Self {
        TowerFile {
            levels: t
                .decompositions
                .iter()
                .map(|d| LevelFile {
                    k: d.k(),
                    boxes: d
                        .boxes
                        .iter()
                        .map(|b| BoxFile {
                            class_id: b.class_id,
                            rec: b.base.rec,
                            domain_vertices: b.domain.vertices.clone(),
                            base: b.base.clone(),
                        })
                        .collect(),
                    r_int: d.r_int,
                    r_ext: d.r_ext,
                    rec: d.rec,
                })
                .collect(),
            matrices: t.matrices.iter().map(|m| m.entries.clone()).collect(),
            offsets: t.matrices.iter().map(|m| m.offsets.clone()).collect(),
            lambda_eff: t.lambda_eff,
            constants: ConstantsFile { measured: t.measured, repetitivity_constants: t.repetitivity_constants },
            recognizable: t.recognizable.clone(),
        }
    }
}

impl TryFrom<TowerFile> for TowerSystem {
    type Error = TowerError;

    fn try_from(f: TowerFile) -> Result<Self, TowerError> {
        if f.matrices.len() != f.offsets.len() || f.matrices.len() + 1 != f.levels.len().max(1) {
            return Err(TowerError::Malformed("matrix count does not match level count".into()));
        }
        let decompositions = f
            .levels
            .into_iter()
            .enumerate()
            .map(|(n, l)| {
                if l.k != l.boxes.len() {
                    return Err(TowerError::Malformed(format!("level {n}: k = {} but {} boxes", l.k, l.boxes.len())));
                }
                let boxes = l
                    .boxes
                    .into_iter()
                    .map(|b| TowerBox { level: n, class_id: b.class_id, base: b.base, domain: Polygon::new(b.domain_vertices) })
                    .collect();
                Ok(BoxDecomposition { level: n, boxes, r_int: l.r_int, r_ext: l.r_ext, rec: l.rec })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let matrices = f
            .matrices
            .into_iter()
            .zip(f.offsets)
            .map(|(entries, offsets)| TransitionMatrix { entries, offsets })
            .collect();
        Ok(TowerSystem {
            decompositions,
            matrices,
            lambda_eff: f.lambda_eff,
            measured: f.constants.measured,
            repetitivity_constants: f.constants.repetitivity_constants,
            recognizable: f.recognizable,
        })
    }
}

impl TowerSystem {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TowerFile::from(self)).expect("tower serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TowerError> {
        let f: TowerFile = serde_json::from_str(s).map_err(|e| TowerError::Malformed(e.to_string()))?;
        TowerSystem::try_from(f)
    }
}
