//! Periodic single-label control patches.

use super::{DeloneMultiset, LabeledPoint};
use crate::geometry::Vec2;

fn lattice_patch(e1: Vec2, e2: Vec2, radius: f64) -> DeloneMultiset {
    let row = e1.cross(e2).abs() / e1.norm().max(e2.norm());
    let m = 2 * (radius / row).ceil() as i64 + 2;
    let mut points = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let p = e1 * i as f64 + e2 * j as f64;
            if p.norm() <= radius {
                points.push(LabeledPoint { position: p, label: 0 });
            }
        }
    }
    points.sort_by(|a, b| {
        (a.position.y, a.position.x).partial_cmp(&(b.position.y, b.position.x)).unwrap()
    });
    DeloneMultiset::new(vec![0], points, radius, None)
}

/// Square lattice `spacing * Z^2` inside the ball of radius `radius`.
pub fn square_lattice(spacing: f64, radius: f64) -> DeloneMultiset {
    lattice_patch(Vec2::new(spacing, 0.0), Vec2::new(0.0, spacing), radius)
}

/// Triangular lattice with nearest-neighbor distance `spacing`.
pub fn triangular_lattice(spacing: f64, radius: f64) -> DeloneMultiset {
    lattice_patch(
        Vec2::new(spacing, 0.0),
        Vec2::new(0.5 * spacing, 0.5 * 3f64.sqrt() * spacing),
        radius,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangular_radii() {
        let p = triangular_lattice(1.0, 8.0);
        assert!((p.packing_radius() - 0.5).abs() < 1e-12);
        let r = 1.0 / 3f64.sqrt();
        assert!(p.covering_radius() >= r - 1e-9 && p.covering_radius() < r + 0.1);
    }
}
