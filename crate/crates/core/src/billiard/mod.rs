//! Lorentz gas dynamics among disjoint round scatterers.
//!
//! Collision states live on the outgoing half of the unit tangent bundle of the
//! scatterer boundaries. Flights are certified only while they stay inside the
//! ball where every scatterer that could block them is known.

mod grid;

use crate::delone::{DeloneMultiset, Label};
use crate::geometry::Vec2;
use grid::DiskGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Flights shorter than this are re-hits of the departure point.
pub const MIN_FLIGHT: f64 = 1e-12;
const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BilliardError {
    #[error("vector {0:?} is not a unit vector")]
    NonUnit(Vec2),
    #[error("scatterers {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("no radius for label {0}")]
    MissingRadius(Label),
    #[error("radius {0} for label {1} is not positive")]
    BadRadius(f64, Label),
    #[error("start point {0:?} lies inside scatterer {1}")]
    StartInside(Vec2, usize),
    #[error("trajectory left the certified window at {0:?}")]
    Escape(Vec2),
    #[error("invalid collision state: {0}")]
    InvalidState(String),
    #[error("no scatterer within sampling radius {0}")]
    EmptySample(f64),
    #[error("malformed configuration: {0}")]
    Malformed(String),
}

/// `v' = v − 2⟨v,n⟩n`, renormalized.
pub fn reflect(v: Vec2, n: Vec2) -> Result<Vec2, BilliardError> {
    for w in [v, n] {
        if (w.norm() - 1.0).abs() > UNIT_TOL {
            return Err(BilliardError::NonUnit(w));
        }
    }
    Ok((v - n * (2.0 * v.dot(n))).normalized())
}

#[derive(Debug, Clone)]
pub struct ScattererConfig {
    patch: DeloneMultiset,
    radius_map: BTreeMap<Label, f64>,
    radii: Vec<f64>,
    mass_bound: f64,
    /// Radius of the ball in which flights are certified.
    flight_window: f64,
    grid: DiskGrid,
}

impl ScattererConfig {
    pub fn new(patch: DeloneMultiset, radius_map: BTreeMap<Label, f64>) -> Result<Self, BilliardError> {
        for (&l, &r) in &radius_map {
            if !(r > 0.0) || !r.is_finite() {
                return Err(BilliardError::BadRadius(r, l));
            }
        }
        let radii = patch
            .points()
            .iter()
            .map(|p| radius_map.get(&p.label).copied().ok_or(BilliardError::MissingRadius(p.label)))
            .collect::<Result<Vec<f64>, _>>()?;
        let mass_bound = radii.iter().copied().fold(0.0, f64::max);
        let pos = patch.positions();
        for k in 0..patch.len() {
            for j in patch.within(pos[k], radii[k] + mass_bound) {
                if j > k && pos[k].dist(pos[j]) <= radii[k] + radii[j] {
                    return Err(BilliardError::Overlap(k, j));
                }
            }
        }
        let cell = (2.0 * mass_bound).max(patch.packing_radius());
        let grid = DiskGrid::new(pos, &radii, cell);
        let flight_window = patch.window_radius() - mass_bound;
        Ok(ScattererConfig { patch, radius_map, radii, mass_bound, flight_window, grid })
    }

    /// Same label-to-radius multiplier for every label.
    pub fn uniform(patch: DeloneMultiset, radius: f64) -> Result<Self, BilliardError> {
        let map = patch.labels().iter().map(|&l| (l, radius)).collect();
        Self::new(patch, map)
    }

    pub fn patch(&self) -> &DeloneMultiset {
        &self.patch
    }
    pub fn radius_map(&self) -> &BTreeMap<Label, f64> {
        &self.radius_map
    }
    pub fn radius(&self, k: usize) -> f64 {
        self.radii[k]
    }
    pub fn radius_of_label(&self, l: Label) -> Option<f64> {
        self.radius_map.get(&l).copied()
    }
    pub fn mass_bound(&self) -> f64 {
        self.mass_bound
    }
    pub fn flight_window(&self) -> f64 {
        self.flight_window
    }
    pub fn center(&self, k: usize) -> Vec2 {
        self.patch.positions()[k]
    }
    pub fn len(&self) -> usize {
        self.patch.len()
    }
    pub fn is_empty(&self) -> bool {
        self.patch.is_empty()
    }
}

/// A point of the outgoing collision space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionState {
    pub scatterer: usize,
    pub theta: f64,
    pub v: Vec2,
}

impl CollisionState {
    pub fn normal(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    pub fn point(&self, config: &ScattererConfig) -> Vec2 {
        config.center(self.scatterer) + self.normal() * config.radius(self.scatterer)
    }

    /// `⟨v, n⟩`.
    pub fn cosine(&self) -> f64 {
        self.v.dot(self.normal())
    }

    pub fn validate(&self, config: &ScattererConfig) -> Result<(), BilliardError> {
        if self.scatterer >= config.len() {
            return Err(BilliardError::InvalidState(format!("scatterer {} out of range", self.scatterer)));
        }
        if (self.v.norm() - 1.0).abs() > 1e-12 {
            return Err(BilliardError::InvalidState(format!("|v| = {}", self.v.norm())));
        }
        if self.cosine() < -1e-12 {
            return Err(BilliardError::InvalidState(format!("inward velocity, <v,n> = {}", self.cosine())));
        }
        Ok(())
    }

    /// The time-reversal involution `v ↦ 2⟨v,n⟩n − v` at the same boundary point.
    pub fn reversed(&self) -> CollisionState {
        let n = self.normal();
        CollisionState { v: (n * (2.0 * self.v.dot(n)) - self.v).normalized(), ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flight {
    Hit { scatterer: usize, point: Vec2, time: f64 },
    Escape { exit: Vec2 },
}

/// Smallest entering root of `|x + t v − c| = r` beyond [`MIN_FLIGHT`].
fn entry_time(x: Vec2, v: Vec2, c: Vec2, r: f64) -> Option<f64> {
    let d = x - c;
    let b = v.dot(d);
    if b >= 0.0 {
        return None;
    }
    let cc = d.norm2() - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let t = cc / (-b + disc.sqrt());
    (t > MIN_FLIGHT).then_some(t)
}

/// First scatterer hit along `x + t v`, or the exit point of the certified ball.
pub fn free_flight(config: &ScattererConfig, x: Vec2, v: Vec2) -> Result<Flight, BilliardError> {
    if (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(BilliardError::NonUnit(v));
    }
    let w = config.flight_window;
    if x.norm() > w {
        return Err(BilliardError::Escape(x));
    }
    let pos = config.patch.positions();
    let mut inside = None;
    config.grid.for_each_near(x, 0.0, |k| {
        let r = config.radii[k];
        if (x - pos[k]).norm2() < r * r * (1.0 - 1e-12) {
            inside = Some(k);
        }
    });
    if let Some(k) = inside {
        return Err(BilliardError::StartInside(x, k));
    }
    let xv = x.dot(v);
    let t_limit = -xv + (xv * xv - x.norm2() + w * w).max(0.0).sqrt();
    let mut best: Option<(usize, f64)> = None;
    config.grid.walk(x, v, t_limit, |items, t_exit| {
        for &k in items {
            let k = k as usize;
            if let Some(t) = entry_time(x, v, pos[k], config.radii[k]) {
                if best.is_none_or(|(bk, bt)| t < bt || (t == bt && k < bk)) {
                    best = Some((k, t));
                }
            }
        }
        best.is_some_and(|(_, t)| t <= t_exit)
    });
    Ok(match best {
        Some((k, t)) if t <= t_limit => Flight::Hit { scatterer: k, point: x + v * t, time: t },
        _ => Flight::Escape { exit: x + v * t_limit },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: CollisionState,
    /// Flight time, equal to the distance at unit speed.
    pub time: f64,
}

/// Flight to the next scatterer followed by specular reflection.
pub fn billiard_map(config: &ScattererConfig, s: &CollisionState) -> Result<Step, BilliardError> {
    s.validate(config)?;
    let x = s.point(config);
    match free_flight(config, x, s.v)? {
        Flight::Escape { exit } => Err(BilliardError::Escape(exit)),
        Flight::Hit { scatterer, point, time } => {
            let n = (point - config.center(scatterer)).normalized();
            let v = reflect(s.v, n)?;
            let theta = n.angle();
            let v = if v.dot(n) < 0.0 { (v - n * v.dot(n)).normalized() } else { v };
            Ok(Step { state: CollisionState { scatterer, theta, v }, time })
        }
    }
}

/// The first `k` images of `s`.
pub fn orbit(config: &ScattererConfig, s: &CollisionState, k: usize) -> Result<Vec<Step>, BilliardError> {
    let mut out = Vec::with_capacity(k);
    let mut cur = *s;
    for _ in 0..k {
        let step = billiard_map(config, &cur)?;
        cur = step.state;
        out.push(step);
    }
    Ok(out)
}

/// Samples the invariant measure restricted to scatterers centered in `B_R(0)`.
#[derive(Debug, Clone)]
pub struct InvariantSampler {
    indices: Vec<usize>,
    cumulative: Vec<f64>,
}

impl InvariantSampler {
    pub fn new(config: &ScattererConfig, radius: f64) -> Result<Self, BilliardError> {
        let pos = config.patch.positions();
        let mut indices: Vec<usize> = config.patch.within(Vec2::ZERO, radius);
        indices.retain(|&k| pos[k].norm() <= radius);
        indices.sort_unstable();
        if indices.is_empty() {
            return Err(BilliardError::EmptySample(radius));
        }
        Ok(Self::from_indices(config, indices))
    }

    /// Restriction to the listed scatterers, which must be nonempty.
    pub fn from_indices(config: &ScattererConfig, indices: Vec<usize>) -> Self {
        assert!(!indices.is_empty(), "empty scatterer set");
        let mut acc = 0.0;
        let cumulative = indices
            .iter()
            .map(|&k| {
                acc += 2.0 * PI * config.radii[k];
                acc
            })
            .collect();
        InvariantSampler { indices, cumulative }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Scatterer by perimeter, boundary angle uniform, `⟨v,n⟩`-weighted direction.
    pub fn sample(&self, rng: &mut impl Rng) -> CollisionState {
        let total = *self.cumulative.last().unwrap();
        let u = rng.gen::<f64>() * total;
        let slot = self.cumulative.partition_point(|&c| c <= u).min(self.indices.len() - 1);
        let theta = rng.gen::<f64>() * 2.0 * PI;
        let phi = (2.0 * rng.gen::<f64>() - 1.0).clamp(-1.0, 1.0).asin();
        let v = Vec2::from_angle(theta + phi);
        CollisionState { scatterer: self.indices[slot], theta, v }
    }
}

pub fn invariant_sample(config: &ScattererConfig, radius: f64, seed: u64) -> Result<CollisionState, BilliardError> {
    let s = InvariantSampler::new(config, radius)?;
    Ok(s.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Independent stream for trajectory `index` under a master seed.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonEstimate {
    pub max_free_path: f64,
    pub sample_count: usize,
    /// Max over the first tenth of the samples.
    pub early_max: f64,
    pub escapes: usize,
    pub growth_flag: bool,
}

/// Relative growth of the running maximum after the first tenth that raises the flag.
pub const GROWTH_TOLERANCE: f64 = 0.10;

/// One flight from each of `n` invariant samples drawn in half the flight window.
pub fn estimate_horizon(config: &ScattererConfig, n: usize, seed: u64) -> Result<HorizonEstimate, BilliardError> {
    use rayon::prelude::*;
    let n = n.max(1);
    let sampler = InvariantSampler::new(config, 0.5 * config.flight_window)?;
    // Escapes record the distance to the window boundary, a lower bound on the free path.
    let paths: Vec<(f64, bool)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s = sampler.sample(&mut stream(seed, i));
            let x = s.point(config);
            match free_flight(config, x, s.v) {
                Ok(Flight::Hit { time, .. }) => (time, false),
                Ok(Flight::Escape { exit }) => (exit.dist(x), true),
                Err(_) => (0.0, true),
            }
        })
        .collect();
    let escapes = paths.iter().filter(|p| p.1).count();
    let head = (n / 10).max(1);
    let max_of = |xs: &[(f64, bool)]| xs.iter().map(|p| p.0).fold(0.0, f64::max);
    let early_max = max_of(&paths[..head]);
    let max_free_path = max_of(&paths);
    let growth_flag = escapes > 0 || max_free_path > (1.0 + GROWTH_TOLERANCE) * early_max;
    Ok(HorizonEstimate { max_free_path, sample_count: n, early_max, escapes, growth_flag })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitRow {
    pub trajectory: u64,
    pub k: usize,
    pub scatterer: usize,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub flight_time: f64,
}

pub fn write_orbit_csv<W: std::io::Write>(w: W, rows: &[OrbitRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// On-disk form of a configuration; the patch is referenced by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub patch: String,
    pub radius_map: BTreeMap<Label, f64>,
    pub window: f64,
}

impl ScattererConfig {
    pub fn to_file(&self, patch_ref: &str) -> ConfigFile {
        ConfigFile { patch: patch_ref.into(), radius_map: self.radius_map.clone(), window: self.patch.window_radius() }
    }
}

#[cfg(test)]
mod tests;
