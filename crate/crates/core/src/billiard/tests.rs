use super::*;
use crate::delone::{square_lattice, triangular_lattice, LabeledPoint};
use proptest::prelude::*;

fn disks(centers: &[(f64, f64)], window: f64) -> ScattererConfig {
    let points = centers.iter().map(|&(x, y)| LabeledPoint { position: Vec2::new(x, y), label: 0 }).collect();
    let patch = DeloneMultiset::new(vec![0], points, window, None);
    ScattererConfig::uniform(patch, 1.0).unwrap()
}

fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
    a.dist(b) <= tol
}

#[test]
fn reflect_examples() {
    let n = Vec2::new(0.0, 1.0);
    assert_eq!(reflect(Vec2::new(0.0, -1.0), n).unwrap(), Vec2::new(0.0, 1.0));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert!(close(reflect(Vec2::new(s, -s), n).unwrap(), Vec2::new(s, s), 1e-15));
    assert_eq!(reflect(Vec2::new(1.0, 0.0), n).unwrap(), Vec2::new(1.0, 0.0));
    assert!(matches!(reflect(Vec2::new(2.0, 0.0), n), Err(BilliardError::NonUnit(_))));
    assert!(matches!(reflect(Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.5)), Err(BilliardError::NonUnit(_))));
}

#[test]
fn free_flight_examples() {
    let c = disks(&[(0.0, 0.0), (4.0, 0.0)], 10.0);
    match free_flight(&c, Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0)).unwrap() {
        Flight::Hit { scatterer, point, time } => {
            assert_eq!(scatterer, 1);
            assert_eq!(point, Vec2::new(3.0, 0.0));
            assert_eq!(time, 2.0);
        }
        f => panic!("{f:?}"),
    }
    assert!(matches!(free_flight(&c, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)).unwrap(), Flight::Escape { .. }));
    assert_eq!(
        free_flight(&c, Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0)),
        Err(BilliardError::StartInside(Vec2::new(0.5, 0.0), 0))
    );
}

#[test]
fn tangent_departure_skips_the_origin_disk() {
    let c = disks(&[(0.0, 0.0), (1.0, 3.0)], 10.0);
    match free_flight(&c, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)).unwrap() {
        Flight::Hit { scatterer, time, .. } => {
            assert_eq!(scatterer, 1);
            assert!(time > MIN_FLIGHT && (time - 2.0).abs() < 1e-12);
        }
        f => panic!("{f:?}"),
    }
}

#[test]
fn overlapping_disks_are_rejected() {
    let points = [(0.0, 0.0), (1.5, 0.0)].iter().map(|&(x, y)| LabeledPoint { position: Vec2::new(x, y), label: 0 }).collect();
    let patch = DeloneMultiset::new(vec![0], points, 5.0, None);
    assert_eq!(ScattererConfig::uniform(patch.clone(), 1.0).unwrap_err(), BilliardError::Overlap(0, 1));
    assert!(ScattererConfig::uniform(patch.clone(), 0.7).is_ok());
    assert!(matches!(ScattererConfig::new(patch, BTreeMap::new()), Err(BilliardError::MissingRadius(0))));
}

#[test]
fn head_on_bounce() {
    let c = disks(&[(0.0, 0.0), (4.0, 0.0)], 10.0);
    let s = CollisionState { scatterer: 0, theta: 0.0, v: Vec2::new(1.0, 0.0) };
    let step = billiard_map(&c, &s).unwrap();
    assert_eq!(step.state.scatterer, 1);
    assert!(close(step.state.point(&c), Vec2::new(3.0, 0.0), 1e-15));
    assert_eq!(step.state.v, Vec2::new(-1.0, 0.0));
    assert_eq!(step.time, 2.0);
    step.state.validate(&c).unwrap();
}

#[test]
fn inward_state_is_invalid() {
    let c = disks(&[(0.0, 0.0), (4.0, 0.0)], 10.0);
    let s = CollisionState { scatterer: 0, theta: 0.0, v: Vec2::new(-1.0, 0.0) };
    assert!(matches!(billiard_map(&c, &s), Err(BilliardError::InvalidState(_))));
}

fn triangular(radius: f64, window: f64) -> ScattererConfig {
    ScattererConfig::uniform(triangular_lattice(1.0, window), radius).unwrap()
}

#[test]
fn time_reversal_returns_the_start() {
    let c = triangular(0.45, 20.0);
    let sampler = InvariantSampler::new(&c, 5.0).unwrap();
    let mut rng = stream(7, 0);
    for _ in 0..2000 {
        let s = sampler.sample(&mut rng);
        let t = billiard_map(&c, &s).unwrap().state;
        let back = billiard_map(&c, &t.reversed()).unwrap().state.reversed();
        assert_eq!(back.scatterer, s.scatterer);
        assert!(close(back.point(&c), s.point(&c), 1e-9));
        assert!(close(back.v, s.v, 1e-9));
    }
}

#[test]
fn speed_is_preserved_along_long_orbits() {
    let c = triangular(0.45, 120.0);
    let s = invariant_sample(&c, 1.0, 3).unwrap();
    let steps = orbit(&c, &s, 100_000).unwrap();
    let mut travelled = 0.0;
    let m = steps.iter().map(|s| s.time).fold(0.0, f64::max);
    for (k, st) in steps.iter().enumerate() {
        assert!((st.state.v.norm() - 1.0).abs() < 1e-8);
        st.state.validate(&c).unwrap();
        travelled += st.time;
        assert!(travelled <= (k + 1) as f64 * m + 1e-9);
    }
}

#[test]
fn invariant_sample_has_the_cosine_mean() {
    let c = triangular(0.45, 20.0);
    let sampler = InvariantSampler::new(&c, 10.0).unwrap();
    let mut rng = stream(11, 0);
    let n = 100_000;
    let cos: Vec<f64> = (0..n)
        .map(|_| {
            let s = sampler.sample(&mut rng);
            s.validate(&c).unwrap();
            s.cosine()
        })
        .collect();
    let sigma = (2.0 / 3.0 - PI * PI / 16.0_f64).sqrt() / (n as f64).sqrt();
    let mean = crate::stats::mean(&cos);
    assert!((mean - PI / 4.0).abs() < 3.0 * sigma, "{mean}");
    assert_eq!(invariant_sample(&c, 10.0, 5).unwrap(), invariant_sample(&c, 10.0, 5).unwrap());
}

#[test]
fn square_corridors_raise_the_growth_flag() {
    let c = ScattererConfig::uniform(square_lattice(1.0, 40.0), 0.3).unwrap();
    let h = estimate_horizon(&c, 20_000, 1).unwrap();
    assert!(h.growth_flag, "{h:?}");
    assert!(h.escapes > 0);
}

#[test]
fn closed_triangular_corridors_saturate() {
    let c = triangular(0.45, 30.0);
    let h = estimate_horizon(&c, 20_000, 1).unwrap();
    assert!(!h.growth_flag, "{h:?}");
    assert!(h.max_free_path > 0.0 && h.max_free_path < 2.0, "{h:?}");
    let one = estimate_horizon(&c, 1, 9).unwrap();
    let s = InvariantSampler::new(&c, 0.5 * c.flight_window()).unwrap().sample(&mut stream(9, 0));
    let Flight::Hit { time, .. } = free_flight(&c, s.point(&c), s.v).unwrap() else { panic!() };
    assert_eq!(one.max_free_path, time);
}

#[test]
fn orbit_csv_has_one_row_per_collision() {
    let c = triangular(0.45, 20.0);
    let s = invariant_sample(&c, 1.0, 1).unwrap();
    let rows: Vec<OrbitRow> = orbit(&c, &s, 5)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(k, st)| OrbitRow {
            trajectory: 0,
            k,
            scatterer: st.state.scatterer,
            theta: st.state.theta,
            vx: st.state.v.x,
            vy: st.state.v.y,
            flight_time: st.time,
        })
        .collect();
    let mut buf = Vec::new();
    write_orbit_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("trajectory,k,scatterer,theta,vx,vy,flight_time"));
    let f = c.to_file("patch.json");
    let back: ConfigFile = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
    assert_eq!(back, f);
}

fn unit() -> impl Strategy<Value = Vec2> {
    (0.0..2.0 * PI).prop_map(Vec2::from_angle)
}

proptest! {
    #[test]
    fn reflect_is_an_involution(v in unit(), n in unit()) {
        let w = reflect(v, n).unwrap();
        prop_assert!((w.norm() - 1.0).abs() < 1e-12);
        prop_assert!((w.dot(n) + v.dot(n)).abs() < 1e-12);
        prop_assert!(reflect(w, n).unwrap().dist(v) < 1e-12);
    }

    #[test]
    fn reversal_is_an_involution(theta in 0.0..2.0 * PI, phi in -1.5..1.5f64) {
        let s = CollisionState { scatterer: 0, theta, v: Vec2::from_angle(theta + phi) };
        let r = s.reversed();
        prop_assert!(r.cosine() >= -1e-12);
        prop_assert!(r.reversed().v.dist(s.v) < 1e-12);
    }
}
