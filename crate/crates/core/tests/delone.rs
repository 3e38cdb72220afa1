use aperiodic_lorentz::delone::*;
use aperiodic_lorentz::geometry::Vec2;
use proptest::prelude::*;
use std::sync::OnceLock;

fn chair(levels: u32) -> DeloneMultiset {
    generate_patch(&SubstitutionRule::chair(), levels, 0).unwrap()
}

fn chair6() -> &'static DeloneMultiset {
    static P: OnceLock<DeloneMultiset> = OnceLock::new();
    P.get_or_init(|| chair(6))
}

fn eps_grid() -> Vec<f64> {
    (1..=18).map(|j| 0.7 * 0.9f64.powi(j)).collect()
}

#[test]
fn square_lattice_unit_cluster_is_a_plus() {
    let z = square_lattice(1.0, 10.0);
    let o = z.origin_index().unwrap();
    let c = r_cluster(&z, o, 1.0).unwrap();
    assert_eq!(c.members.len(), 5);
    assert!(c.members.iter().all(|m| m.position.norm() <= 1.0 + 1e-12));
    let c = r_cluster(&z, o, 1.5).unwrap();
    assert_eq!(c.members.len(), 9);
    let edge = z.nearest(Vec2::new(9.0, 0.0)).unwrap().0;
    assert!(matches!(r_cluster(&z, edge, 2.0), Err(DeloneError::WindowOverflow { .. })));
}

#[test]
fn lattice_catalogs_are_trivial() {
    let z = square_lattice(1.0, 20.0);
    for r in [0.0, 1.0, 2.5, 5.0] {
        assert_eq!(cluster_catalog(&z, r).unwrap().len(), 1);
    }
    let t = triangular_lattice(1.0, 20.0);
    assert_eq!(cluster_catalog(&t, 3.0).unwrap().len(), 1);
}

#[test]
fn chair_catalogs_grow_with_radius() {
    let p = chair6();
    let eps = p.eps_geo();
    let sizes: Vec<usize> =
        [0.0, 0.5, 1.0, 1.5, 2.0, 3.0].iter().map(|&r| cluster_catalog(p, r + eps).unwrap().len()).collect();
    assert_eq!(sizes[0], 4);
    assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{sizes:?}");
    assert!(sizes[5] > sizes[0]);
}

#[test]
fn catalog_is_stable_under_a_larger_patch() {
    let small = chair6();
    let big = chair(7);
    for r in [0.0, 1.0, 1.5] {
        let a = cluster_catalog(small, r + small.eps_geo()).unwrap();
        let b = cluster_catalog(&big, r + big.eps_geo()).unwrap();
        assert_eq!(a.len(), b.len(), "r = {r}");
        for e in &a.entries {
            assert!(b.position(e.class.key).is_some());
        }
    }
}

#[test]
fn multiplicities_count_every_certified_point() {
    let p = chair6();
    for r in [0.0, 1.0, 2.0] {
        let c = cluster_catalog(p, r).unwrap();
        let certified = (0..p.len()).filter(|&k| p.certifies(k, r)).count();
        assert_eq!(c.entries.iter().map(|e| e.multiplicity).sum::<usize>(), certified);
        for e in &c.entries {
            assert!(e.class.matches(&r_cluster(p, e.representative, r).unwrap()));
        }
    }
}

#[test]
fn chair_labels_are_equidistributed() {
    let p = chair6();
    let r = p.window_radius() / 2.0;
    let total: f64 = p.labels().iter().map(|&l| p.label_density(l, r)).sum();
    for &l in p.labels() {
        let f = p.label_density(l, r) / total;
        assert!((f - 0.25).abs() < 0.03, "label {l}: {f}");
    }
    let m = SubstitutionRule::chair().label_count_matrix();
    for row in &m {
        assert_eq!(row.iter().sum::<u64>(), 4);
    }
}

#[test]
fn square_lattice_repetitivity_is_linear() {
    let z = square_lattice(1.0, 30.0);
    for r in [1.0, 2.0, 4.0, 8.0] {
        let t = repetitivity(&z, r).unwrap();
        assert!((t - (r + 1.0)).abs() <= 0.25, "R = {r}: {t}");
    }
    let prof = repetitivity_profile(&z, &[2.0, 4.0, 8.0]).unwrap();
    assert!(prof.ratios.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn pattern_distance_basics() {
    let p = chair6();
    let grid = eps_grid();
    let emin = grid.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(pattern_distance(p, p, &grid).unwrap(), emin);
    let q = chair6().translated(p.positions()[p.nearest(Vec2::new(3.0, 1.0)).unwrap().0]);
    let d = pattern_distance(p, &q, &grid).unwrap();
    assert!(d > emin && d <= DISTANCE_CAP);
    assert_eq!(d, pattern_distance(&q, p, &grid).unwrap());
    assert!(matches!(pattern_distance(p, p, &[1e-3]), Err(DeloneError::WindowTooSmall { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pattern_distance_is_symmetric_and_capped(x in -4.0..4.0f64, y in -4.0..4.0f64) {
        let p = chair6();
        let q = p.translated(Vec2::new(x, y));
        let grid = eps_grid();
        let d = pattern_distance(p, &q, &grid).unwrap();
        prop_assert!(d > 0.0 && d <= DISTANCE_CAP);
        prop_assert_eq!(d, pattern_distance(&q, p, &grid).unwrap());
    }

    #[test]
    fn tiny_shifts_are_close(x in -0.02..0.02f64, y in -0.02..0.02f64) {
        let p = chair6();
        let q = p.translated(Vec2::new(x, y));
        let d = pattern_distance(p, &q, &eps_grid()).unwrap();
        let s = (x * x + y * y).sqrt();
        prop_assert!(d <= (s / 2.0).max(0.7 * 0.9f64.powi(18)) / 0.9 + 1e-12, "shift {} distance {}", s, d);
    }
}
