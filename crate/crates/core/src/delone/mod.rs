//! Finite patches of Delone multisets and their local combinatorics.

mod cluster;
mod index;
mod io;
mod lattice;
mod metric;
mod repetitivity;
mod rule;

pub use cluster::{
    cluster_catalog, cluster_frequency, cluster_key, cluster_keys, r_cluster, Catalog,
    CatalogEntry, Cluster, ClusterClass, ClusterKey, FrequencyEstimate,
};
pub use index::GridIndex;
pub use io::{exact_decimal, PatchFile};
pub use lattice::{square_lattice, triangular_lattice};
pub use metric::{pattern_distance, DISTANCE_CAP};
pub use repetitivity::{repetitivity, repetitivity_profile, RepetitivityProfile};
pub use rule::{generate_patch, AnchorChain, Prototile, SubstitutionRule, Tile};

use crate::geometry::Vec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type Label = u16;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DeloneError {
    #[error("ball of radius {radius} about a point at distance {center} exceeds window {window}")]
    WindowOverflow { center: f64, radius: f64, window: f64 },
    #[error("rule `{0}` is not primitive")]
    NotPrimitive(String),
    #[error("rule `{rule}`: inflated prototile {label} is not tiled by its children")]
    NotCongruent { rule: String, label: Label },
    #[error("unknown label {0}")]
    UnknownLabel(Label),
    #[error("no T <= {limit} certifies repetitivity at R = {radius}")]
    NotCertifiable { radius: f64, limit: f64 },
    #[error("window too small: need radius {need}, have {have}")]
    WindowTooSmall { need: f64, have: f64 },
    #[error("no point of the patch is certifiable at radius {0}")]
    EmptyInterior(f64),
    #[error("unsupported dimension {0}; only d = 2 kernels are built")]
    Dimension(usize),
    #[error("malformed patch: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub position: Vec2,
    pub label: Label,
}

/// Generation history of a patch produced by a substitution rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub rule: String,
    pub levels: u32,
    pub seed_label: Label,
    /// Physical position of the point moved to the origin.
    pub shift: Vec2,
}

/// A labeled point patch complete inside the closed ball of radius `window_radius`.
#[derive(Debug, Clone)]
pub struct DeloneMultiset {
    dimension: usize,
    labels: Vec<Label>,
    points: Vec<LabeledPoint>,
    positions: Vec<Vec2>,
    window_radius: f64,
    packing_radius: f64,
    covering_radius: f64,
    provenance: Option<Provenance>,
    index: GridIndex,
}

impl DeloneMultiset {
    /// Builds a patch and measures its packing and covering radii.
    pub fn new(
        labels: Vec<Label>,
        points: Vec<LabeledPoint>,
        window_radius: f64,
        provenance: Option<Provenance>,
    ) -> Self {
        let positions: Vec<Vec2> = points.iter().map(|p| p.position).collect();
        let index = GridIndex::new(&positions, 1.0);
        let min_gap = min_gap(&positions, &index);
        let packing = if min_gap.is_finite() { 0.5 * min_gap } else { window_radius };
        let index = GridIndex::new(&positions, (2.0 * packing).max(1e-6));
        let covering = covering_radius(&positions, &index, window_radius, packing);
        DeloneMultiset {
            dimension: 2,
            labels,
            points,
            positions,
            window_radius,
            packing_radius: packing,
            covering_radius: covering,
            provenance,
            index,
        }
    }

    /// Builds a patch with declared radii (used when reading files).
    pub fn with_radii(
        labels: Vec<Label>,
        points: Vec<LabeledPoint>,
        window_radius: f64,
        packing_radius: f64,
        covering_radius: f64,
        provenance: Option<Provenance>,
    ) -> Self {
        let positions: Vec<Vec2> = points.iter().map(|p| p.position).collect();
        let index = GridIndex::new(&positions, (2.0 * packing_radius).max(1e-6));
        DeloneMultiset {
            dimension: 2,
            labels,
            points,
            positions,
            window_radius,
            packing_radius,
            covering_radius,
            provenance,
            index,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }
    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }
    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn window_radius(&self) -> f64 {
        self.window_radius
    }
    pub fn packing_radius(&self) -> f64 {
        self.packing_radius
    }
    pub fn covering_radius(&self) -> f64 {
        self.covering_radius
    }
    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }
    pub fn index(&self) -> &GridIndex {
        &self.index
    }

    /// Matching tolerance for translation equivalence.
    pub fn eps_geo(&self) -> f64 {
        1e-9 * self.packing_radius
    }

    pub fn label_of(&self, k: usize) -> Label {
        self.points[k].label
    }

    /// Whether the ball of radius `r` about point `k` is certified complete.
    pub fn certifies(&self, k: usize, r: f64) -> bool {
        self.positions[k].norm() + r <= self.window_radius + self.eps_geo()
    }

    pub fn within(&self, c: Vec2, r: f64) -> Vec<usize> {
        self.index.within(&self.positions, c, r + self.eps_geo())
    }

    pub fn nearest(&self, c: Vec2) -> Option<(usize, f64)> {
        self.index.nearest(&self.positions, c, None)
    }

    /// Index of the point at the origin.
    pub fn origin_index(&self) -> Option<usize> {
        self.nearest(Vec2::ZERO).filter(|&(_, d)| d <= self.eps_geo()).map(|(k, _)| k)
    }

    /// Count of points with label `l` divided by the window area.
    pub fn label_density(&self, l: Label, radius: f64) -> f64 {
        let n = self.within(Vec2::ZERO, radius).into_iter().filter(|&k| self.label_of(k) == l).count();
        n as f64 / (std::f64::consts::PI * radius * radius)
    }

    /// Translated copy (positions shifted by `-t`); the window shrinks by `|t|`.
    pub fn translated(&self, t: Vec2) -> DeloneMultiset {
        let w = self.window_radius - t.norm();
        let points: Vec<LabeledPoint> = self
            .points
            .iter()
            .map(|p| LabeledPoint { position: p.position - t, label: p.label })
            .filter(|p| p.position.norm() <= w + self.eps_geo())
            .collect();
        DeloneMultiset::with_radii(
            self.labels.clone(),
            points,
            w,
            self.packing_radius,
            self.covering_radius,
            None,
        )
    }

    /// Sub-patch restricted to a smaller window.
    pub fn cropped(&self, w: f64) -> DeloneMultiset {
        let w = w.min(self.window_radius);
        let points: Vec<LabeledPoint> =
            self.points.iter().copied().filter(|p| p.position.norm() <= w + self.eps_geo()).collect();
        DeloneMultiset::with_radii(
            self.labels.clone(),
            points,
            w,
            self.packing_radius,
            self.covering_radius,
            self.provenance.clone(),
        )
    }
}

fn min_gap(positions: &[Vec2], index: &GridIndex) -> f64 {
    let mut best = f64::INFINITY;
    for (k, &p) in positions.iter().enumerate() {
        if let Some((_, d)) = index.nearest(positions, p, Some(k)) {
            best = best.min(d);
        }
    }
    best
}

/// Largest empty ball certified inside the window, from a grid search with
/// spacing `r/4`, plus the grid half-diagonal so the value is an upper bound.
fn covering_radius(positions: &[Vec2], index: &GridIndex, w: f64, r: f64) -> f64 {
    if positions.is_empty() {
        return w;
    }
    let h = 0.25 * r;
    let n = (w / h).ceil() as i64;
    let (best, any) = (-n..=n)
        .into_par_iter()
        .map(|iy| {
            let mut best: f64 = 0.0;
            let mut any = false;
            for ix in -n..=n {
                let y = Vec2::new(ix as f64 * h, iy as f64 * h);
                let ny = y.norm();
                if ny > w {
                    continue;
                }
                if let Some((_, d)) = index.nearest(positions, y, None) {
                    if ny + d <= w {
                        any = true;
                        best = best.max(d);
                    }
                }
            }
            (best, any)
        })
        .reduce(|| (0.0, false), |a, b| (a.0.max(b.0), a.1 || b.1));
    if any {
        (best + h * std::f64::consts::FRAC_1_SQRT_2).max(r)
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_patch_radii() {
        let p = square_lattice(1.0, 6.0);
        assert!((p.packing_radius() - 0.5).abs() < 1e-12);
        let cov = p.covering_radius();
        assert!((std::f64::consts::FRAC_1_SQRT_2 - 1e-12..0.8).contains(&cov), "{cov}");
        assert_eq!(p.origin_index().map(|k| p.positions()[k]), Some(Vec2::ZERO));
    }
}
