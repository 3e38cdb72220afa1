//! Pattern-space distance between two patches.
//!
//! Two shifted copies `Λ1 - x` and `Λ2 - y` agree on a ball iff `Λ1 = Λ2 + s`
//! there with `s = x - y`; taking `x = s/2`, `y = -s/2` turns the pair of
//! shifts into one relative shift with `|s| < 2ε`. Candidate shifts come from
//! matching the point of `Λ1` nearest the origin against same-label points of
//! `Λ2`, which is exhaustive whenever that point lies in the ball.

use super::{DeloneError, DeloneMultiset};
use crate::geometry::Vec2;

pub const DISTANCE_CAP: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn agree(a: &DeloneMultiset, b: &DeloneMultiset, s: Vec2, radius: f64) -> bool {
    let x = s * 0.5;
    let tol = a.eps_geo().max(b.eps_geo()) * 16.0;
    let one_way = |p: &DeloneMultiset, q: &DeloneMultiset, xp: Vec2, xq: Vec2| {
        p.within(xp, radius).into_iter().all(|k| {
            let target = p.positions()[k] - xp + xq;
            q.nearest(target)
                .is_some_and(|(j, d)| d <= tol && q.label_of(j) == p.label_of(k))
        })
    };
    one_way(a, b, x, -x) && one_way(b, a, -x, x)
}

/// Smallest `ε` of the grid for which the patches agree on `B_{1/ε}(0)` up to
/// shifts smaller than `ε`, capped at `2^{-1/2}`.
pub fn pattern_distance(
    a: &DeloneMultiset,
    b: &DeloneMultiset,
    eps_grid: &[f64],
) -> Result<f64, DeloneError> {
    let emin = eps_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let emax = eps_grid.iter().copied().fold(0.0, f64::max);
    let need = 1.0 / emin + emax;
    let have = a.window_radius().min(b.window_radius());
    if need > have {
        return Err(DeloneError::WindowTooSmall { need, have });
    }
    let anchor = a.nearest(Vec2::ZERO);
    let mut best = DISTANCE_CAP;
    for &eps in eps_grid {
        if eps >= best {
            continue;
        }
        let mut cands = vec![Vec2::ZERO];
        if let Some((k, _)) = anchor {
            let p = a.positions()[k];
            for j in b.within(p, 2.0 * eps) {
                let s = p - b.positions()[j];
                if b.label_of(j) == a.label_of(k) && s.norm() < 2.0 * eps && s != Vec2::ZERO {
                    cands.push(s);
                }
            }
        }
        if cands.iter().any(|&s| agree(a, b, s, 1.0 / eps)) {
            best = eps;
        }
    }
    Ok(best.min(DISTANCE_CAP))
}
