use super::*;
use crate::billiard::stream;
use crate::delone::{generate_patch, SubstitutionRule};
use crate::geometry::Vec2;
use crate::tower::{box_measures_cached, build_substitution_tower};
use rand::Rng;

fn chair(levels: u32, tower_levels: usize) -> (DeloneMultiset, TowerSystem) {
    let rule = SubstitutionRule::chair();
    let patch = generate_patch(&rule, levels, 0).unwrap();
    let tower = build_substitution_tower(&rule, &patch, tower_levels).unwrap();
    (patch, tower)
}

fn config(patch: &DeloneMultiset) -> ScattererConfig {
    let r = patch.packing_radius();
    let map = [0.90, 0.92, 0.94, 0.96].iter().enumerate().map(|(l, f)| (l as Label, f * r)).collect();
    ScattererConfig::new(patch.clone(), map).unwrap()
}

#[test]
fn witness_takes_the_box_fields() {
    let (_, tower) = chair(6, 2);
    let w = witness(&tower, 1, 1).unwrap();
    let b = &tower.decompositions[1].boxes[1];
    assert_eq!(w.rec, b.base.rec);
    assert_eq!(w.label, b.base.label);
    assert_eq!(w.lambda, tower.lambda_eff);
    assert_eq!(witness(&tower, 5, 0), Err(ObservableError::MissingLevel(5)));
    assert_eq!(witness(&tower, 1, 9), Err(ObservableError::MissingBox { level: 1, index: 9 }));
}

#[test]
fn square_tower_has_no_witnesses() {
    let rule = SubstitutionRule::square();
    let patch = generate_patch(&rule, 5, 0).unwrap();
    let tower = build_substitution_tower(&rule, &patch, 1).unwrap();
    assert_eq!(witness(&tower, 1, 0), Err(ObservableError::SingleBox(1)));
}

#[test]
fn supports_are_disjoint_and_ignore_direction() {
    let (patch, tower) = chair(6, 2);
    let c = config(&patch);
    let mut cache = KeyCache::default();
    for n in 1..=2 {
        let ws = witnesses(&tower, n).unwrap();
        let sup: Vec<Vec<Option<bool>>> = ws.iter().map(|w| support(w, &patch, &mut cache)).collect();
        for k in 0..patch.len() {
            let hits = sup.iter().filter(|s| s[k] == Some(true)).count();
            assert!(hits <= 1, "scatterer {k} level {n}");
        }
        for w in &ws {
            let members = members_within(w, &patch, &mut cache, patch.window_radius());
            assert!(!members.is_empty());
            let k = members[0];
            let mut rng = stream(3, k as u64);
            for _ in 0..100 {
                let theta = rng.gen::<f64>() * 2.0 * PI;
                let v = Vec2::from_angle(theta + rng.gen_range(-1.5..1.5));
                let s = CollisionState { scatterer: k, theta, v };
                assert_eq!(evaluate(w, &c, &s).unwrap(), 1);
            }
            let other = (0..patch.len()).find(|&j| patch.label_of(j) != w.label).unwrap();
            assert_eq!(evaluate_at(w, &patch, other).unwrap(), 0);
        }
    }
    let w = witness(&tower, 1, 0).unwrap();
    let edge = (0..patch.len())
        .find(|&k| patch.label_of(k) == w.label && !patch.certifies(k, w.rec))
        .unwrap();
    assert!(matches!(evaluate_at(&w, &patch, edge), Err(ObservableError::WindowOverflow { .. })));
}

#[test]
fn holder_bound_examples() {
    let (_, tower) = chair(6, 1);
    let mut w = witness(&tower, 1, 0).unwrap();
    w.lambda = 108.0;
    assert!((holder_bound(&w, 1.0, 2.0) - 540.0).abs() < 1e-9);
    assert_eq!(holder_bound(&w, 0.0, 2.0), 1.0);
    assert!(holder_bound(&w, 2.0, 2.0) > holder_bound(&w, 1.0, 2.0));
    let mut deeper = w.clone();
    deeper.level = 2;
    assert!(holder_bound(&deeper, 1.0, 2.0) > holder_bound(&w, 1.0, 2.0));
}

#[test]
fn grouped_seminorm_matches_brute_force() {
    let (patch, tower) = chair(5, 1);
    let mut cache = KeyCache::default();
    let w = witness(&tower, 1, 2).unwrap();
    let same: Vec<usize> = (0..patch.len())
        .filter(|&k| patch.label_of(k) == w.label && patch.certifies(k, w.rec))
        .collect();
    let mut pairs = Vec::new();
    for &a in &same {
        for &b in &same {
            if a < b {
                pairs.push((a, b));
            }
        }
    }
    for alpha in [0.5, 1.0, 2.0] {
        let brute = seminorm_over_pairs(&w, &patch, &pairs, alpha, 2.0).unwrap();
        let fast = empirical_seminorm(&w, &patch, &mut cache, alpha, 2.0).unwrap();
        assert!((brute.empirical - fast.empirical).abs() < 1e-12, "{brute:?} {fast:?}");
        assert!(fast.empirical > 0.0 && fast.empirical <= fast.theoretical);
        assert!(fast.agreement_radius < w.rec);
    }
    let diag: Vec<(usize, usize)> = same.iter().map(|&a| (a, a)).collect();
    assert_eq!(seminorm_over_pairs(&w, &patch, &diag, 1.0, 2.0).unwrap().empirical, 0.0);
}

#[test]
fn measures_scale_and_add_up() {
    let (patch, tower) = chair(7, 2);
    let c = config(&patch);
    let mut cache = KeyCache::default();
    let m = box_measures_cached(&tower, &patch, &mut cache).unwrap();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for n in 1..=2 {
        let ws = witnesses(&tower, n).unwrap();
        let radius = m.levels[n].radius;
        let norm = normalization(&c, radius);
        let mut by_label: BTreeMap<Label, f64> = BTreeMap::new();
        for w in &ws {
            let mu = mu_measure(w, &m, &c).unwrap();
            *by_label.entry(w.label).or_default() += mu;
            let scaled = mu * tower.lambda_eff.powi(2 * n as i32);
            lo = lo.min(scaled);
            hi = hi.max(scaled);
        }
        for (l, total) in by_label {
            let share = norm.weights[&l] * norm.densities[&l] / norm.z;
            assert!(total <= share + 1e-12, "label {l}: {total} > {share}");
        }
    }
    assert!(hi / lo <= 10.0, "{hi} / {lo}");
}

#[test]
fn single_label_measure_is_frequency_over_density() {
    let (patch, tower) = chair(6, 1);
    let c = ScattererConfig::uniform(patch.clone(), 0.9 * patch.packing_radius()).unwrap();
    let m = crate::tower::box_measures(&tower, &patch).unwrap();
    let w = witness(&tower, 1, 0).unwrap();
    let radius = m.levels[1].radius;
    let total: f64 = normalization(&c, radius).densities.values().sum();
    let mu = mu_measure(&w, &m, &c).unwrap();
    assert!((mu - m.levels[1].boxes[0].nu_hat / total).abs() < 1e-12);
}

#[test]
fn manifest_round_trip() {
    let (_, tower) = chair(6, 1);
    let ws = witnesses(&tower, 1).unwrap();
    let man = manifest("tower.json", &ws);
    assert_eq!(man.witnesses.len(), 4);
    let back: ObservableManifest = serde_json::from_str(&serde_json::to_string(&man).unwrap()).unwrap();
    assert_eq!(back, man);
}
