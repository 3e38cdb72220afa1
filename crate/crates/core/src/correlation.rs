//! Correlations of observables along billiard orbits, the zero-correlation
//! window of witness pairs, and mixing-rate verdicts.

use crate::billiard::{
    billiard_map, stream, BilliardError, CollisionState, HorizonEstimate, InvariantSampler, ScattererConfig,
};
use crate::delone::Label;
use crate::observables::{evaluate, normalization, ObservableError, WitnessObservable};
use crate::stats::linear_fit;
use crate::tower::TowerSystem;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Orbit batches behind every standard error.
pub const BATCHES: usize = 32;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CorrelationError {
    #[error("trajectory {trajectory} failed: {source}")]
    Orbit { trajectory: u64, source: BilliardError },
    #[error(transparent)]
    Billiard(#[from] BilliardError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("orbits of length {k} from B_{radius} need a flight window of {need}, have {have}")]
    WindowTooSmall { k: usize, radius: f64, need: f64, have: f64 },
    #[error("configuration has no finite horizon (growth flag raised)")]
    InfiniteHorizon,
    #[error("level {0} is not usable: {1}")]
    BadLevel(usize, String),
    #[error("need at least {need} tower levels, have {have}")]
    InsufficientLevels { need: usize, have: usize },
    #[error("only {usable} points above the noise floor, need {need}")]
    InsufficientSignal { usable: usize, need: usize },
    #[error("invalid input: {0}")]
    Domain(String),
}

/// A real function on collision states.
pub trait Observable: Sync {
    fn value(&self, config: &ScattererConfig, s: &CollisionState) -> Result<f64, CorrelationError>;
    fn name(&self) -> String;
}

impl Observable for WitnessObservable {
    fn value(&self, config: &ScattererConfig, s: &CollisionState) -> Result<f64, CorrelationError> {
        Ok(f64::from(evaluate(self, config, s)?))
    }
    fn name(&self) -> String {
        format!("psi[{}][{}]", self.level, self.box_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl Observable for Constant {
    fn value(&self, _: &ScattererConfig, _: &CollisionState) -> Result<f64, CorrelationError> {
        Ok(self.0)
    }
    fn name(&self) -> String {
        format!("const[{}]", self.0)
    }
}

/// Indicator of being on a scatterer with the given label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelIndicator(pub Label);

impl Observable for LabelIndicator {
    fn value(&self, config: &ScattererConfig, s: &CollisionState) -> Result<f64, CorrelationError> {
        Ok(f64::from(u8::from(config.patch().label_of(s.scatterer) == self.0)))
    }
    fn name(&self) -> String {
        format!("label[{}]", self.0)
    }
}

/// `Σ aᵢ gᵢ`.
pub struct Linear<'a>(pub Vec<(f64, &'a dyn Observable)>);

impl Observable for Linear<'_> {
    fn value(&self, config: &ScattererConfig, s: &CollisionState) -> Result<f64, CorrelationError> {
        self.0.iter().map(|(a, g)| Ok(a * g.value(config, s)?)).sum()
    }
    fn name(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|(a, g)| format!("{a}*{}", g.name())).collect();
        parts.join("+")
    }
}

/// Mean with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

fn batch_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    let b = BATCHES.min(n).max(1);
    (0..b).map(|j| j * n / b..(j + 1) * n / b).collect()
}

fn batch_estimate(sums: &[(f64, usize)]) -> Estimate {
    let total: f64 = sums.iter().map(|s| s.0).sum();
    let count: usize = sums.iter().map(|s| s.1).sum();
    let value = total / count as f64;
    let means: Vec<f64> = sums.iter().filter(|s| s.1 > 0).map(|s| s.0 / s.1 as f64).collect();
    let stderr = if means.len() > 1 {
        (crate::stats::variance(&means) / means.len() as f64).sqrt()
    } else {
        0.0
    };
    Estimate { value, stderr }
}

/// `β(g)` over the scatterers centered in `B_R(0)`, with `Ξ` normalized to mass 1.
pub fn spatial_average(
    config: &ScattererConfig,
    g: &dyn Observable,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate, CorrelationError> {
    if radius > config.flight_window() {
        return Err(CorrelationError::WindowTooSmall { k: 0, radius, need: radius, have: config.flight_window() });
    }
    let sampler = InvariantSampler::new(config, radius)?;
    let sums = batch_ranges(n_samples)
        .into_par_iter()
        .map(|r| {
            let mut acc = 0.0;
            for i in r.clone() {
                let s = sampler.sample(&mut stream(seed, i as u64));
                acc += g.value(config, &s)?;
            }
            Ok((acc, r.len()))
        })
        .collect::<Result<Vec<_>, CorrelationError>>()?;
    Ok(batch_estimate(&sums))
}

/// Metadata of a correlation series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub observables: (String, String),
    pub window: f64,
    pub samples: usize,
    pub seed: u64,
}

/// `Ĉ(k) = ⟨g₁∘f^k · g₂⟩ − β̂(g₁)β̂(g₂)` for a range of `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub ks: Vec<usize>,
    pub estimates: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Uncentered averages `⟨g₁∘f^k · g₂⟩`.
    pub raw: Vec<f64>,
    pub beta1: Estimate,
    pub beta2: Estimate,
    pub meta: SeriesMeta,
}

impl CorrelationSeries {
    pub fn product(&self) -> f64 {
        self.beta1.value * self.beta2.value
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "estimate", "stderr"])?;
        for i in 0..self.ks.len() {
            out.write_record([self.ks[i].to_string(), self.estimates[i].to_string(), self.stderrs[i].to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_reach(config: &ScattererConfig, horizon: Option<f64>, k: usize, radius: f64) -> Result<(), CorrelationError> {
    let m = horizon.unwrap_or(0.0);
    let need = radius + k as f64 * m + config.mass_bound();
    if need > config.flight_window() {
        return Err(CorrelationError::WindowTooSmall { k, radius, need, have: config.flight_window() });
    }
    Ok(())
}

/// Correlation series from `n_samples` cosine-weighted starts in `B_R(0)`.
///
/// `max_free_path` is used only to refuse windows that cannot hold the orbits.
#[allow(clippy::too_many_arguments)]
pub fn correlation_series(
    config: &ScattererConfig,
    g1: &dyn Observable,
    g2: &dyn Observable,
    ks: &[usize],
    radius: f64,
    n_samples: usize,
    seed: u64,
    max_free_path: Option<f64>,
) -> Result<CorrelationSeries, CorrelationError> {
    let k_max = ks.iter().copied().max().unwrap_or(0);
    check_reach(config, max_free_path, k_max, radius)?;
    let sampler = InvariantSampler::new(config, radius)?;
    let nk = ks.len();
    // Per batch: Σ g1(f^k s) g2(s) for each k, Σ g1(s), Σ g2(s), count.
    type Sums = (Vec<f64>, f64, f64, usize);
    let batches = batch_ranges(n_samples)
        .into_par_iter()
        .map(|r| -> Result<Sums, CorrelationError> {
            let mut cross = vec![0.0; nk];
            let (mut b1, mut b2) = (0.0, 0.0);
            for i in r.clone() {
                let mut s = sampler.sample(&mut stream(seed, i as u64));
                let v2 = g2.value(config, &s)?;
                b1 += g1.value(config, &s)?;
                b2 += v2;
                if v2 == 0.0 {
                    continue;
                }
                let mut along = vec![0.0; k_max + 1];
                along[0] = g1.value(config, &s)?;
                for slot in along.iter_mut().skip(1) {
                    s = billiard_map(config, &s)
                        .map_err(|source| CorrelationError::Orbit { trajectory: i as u64, source })?
                        .state;
                    *slot = g1.value(config, &s)?;
                }
                for (j, &k) in ks.iter().enumerate() {
                    cross[j] += along[k] * v2;
                }
            }
            Ok((cross, b1, b2, r.len()))
        })
        .collect::<Result<Vec<Sums>, _>>()?;
    let n: usize = batches.iter().map(|b| b.3).sum();
    let beta1 = batch_estimate(&batches.iter().map(|b| (b.1, b.3)).collect::<Vec<_>>());
    let beta2 = batch_estimate(&batches.iter().map(|b| (b.2, b.3)).collect::<Vec<_>>());
    let mut estimates = Vec::with_capacity(nk);
    let mut stderrs = Vec::with_capacity(nk);
    let mut raw = Vec::with_capacity(nk);
    for j in 0..nk {
        let total: f64 = batches.iter().map(|b| b.0[j]).sum();
        let mean = total / n as f64;
        raw.push(mean);
        estimates.push(mean - beta1.value * beta2.value);
        let per: Vec<f64> = batches
            .iter()
            .filter(|b| b.3 > 0)
            .map(|b| b.0[j] / b.3 as f64 - (b.1 / b.3 as f64) * (b.2 / b.3 as f64))
            .collect();
        let se = if per.len() > 1 { (crate::stats::variance(&per) / per.len() as f64).sqrt() } else { 0.0 };
        stderrs.push(se);
    }
    Ok(CorrelationSeries {
        ks: ks.to_vec(),
        estimates,
        stderrs,
        raw,
        beta1,
        beta2,
        meta: SeriesMeta { observables: (g1.name(), g2.name()), window: radius, samples: n, seed },
    })
}

/// Uncentered leafwise average `⟨g₁∘f^k · g₂⟩` with its standard error.
pub fn leafwise_correlation(
    config: &ScattererConfig,
    g1: &dyn Observable,
    g2: &dyn Observable,
    k: usize,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate, CorrelationError> {
    check_reach(config, None, k, radius)?;
    Ok(batch_estimate(&raw_batches(config, g1, g2, k, radius, n_samples, seed)?))
}

fn raw_batches(
    config: &ScattererConfig,
    g1: &dyn Observable,
    g2: &dyn Observable,
    k: usize,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<(f64, usize)>, CorrelationError> {
    let sampler = InvariantSampler::new(config, radius)?;
    batch_ranges(n_samples)
        .into_par_iter()
        .map(|r| {
            let mut acc = 0.0;
            for i in r.clone() {
                let s0 = sampler.sample(&mut stream(seed, i as u64));
                let mut s = s0;
                for _ in 0..k {
                    s = billiard_map(config, &s)
                        .map_err(|source| CorrelationError::Orbit { trajectory: i as u64, source })?
                        .state;
                }
                acc += g1.value(config, &s)? * g2.value(config, &s0)?;
            }
            Ok((acc, r.len()))
        })
        .collect()
}

/// Inputs and result of the zero-correlation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBound {
    pub k_star: usize,
    pub level: usize,
    pub m_hat: f64,
    /// Measured level-`n` inradius used in place of `K₁λⁿ`.
    pub inradius: f64,
    /// `K̂₁ λ_eff^n`, reported alongside.
    pub k1_proxy: f64,
    pub k1_hat: f64,
    pub lambda_eff: f64,
    pub r_lambda: f64,
    pub b_s: f64,
}

/// `⌊(2/M)(proxy − 2R_Λ − B_S)⌋`, floored at 0.
pub fn window_k_star(m_hat: f64, proxy: f64, r_lambda: f64, b_s: f64) -> usize {
    let x = 2.0 / m_hat * (proxy - 2.0 * r_lambda - b_s);
    if x > 0.0 {
        x.floor() as usize
    } else {
        0
    }
}

pub fn zero_window(
    tower: &TowerSystem,
    horizon: &HorizonEstimate,
    config: &ScattererConfig,
    n: usize,
) -> Result<WindowBound, CorrelationError> {
    if horizon.growth_flag {
        return Err(CorrelationError::InfiniteHorizon);
    }
    let dec = tower.decompositions.get(n).ok_or(CorrelationError::BadLevel(n, "missing".into()))?;
    if dec.k() <= 1 {
        return Err(CorrelationError::BadLevel(n, "single box".into()));
    }
    let r_lambda = config.patch().covering_radius();
    let b_s = config.mass_bound();
    let k1_hat = tower.measured.k1_hat;
    Ok(WindowBound {
        k_star: window_k_star(horizon.max_free_path, dec.r_int, r_lambda, b_s),
        level: n,
        m_hat: horizon.max_free_path,
        inradius: dec.r_int,
        k1_proxy: k1_hat * tower.lambda_eff.powi(n as i32),
        k1_hat,
        lambda_eff: tower.lambda_eff,
        r_lambda,
        b_s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub pass: bool,
    pub k_star: usize,
    pub n_starts: usize,
    /// `(trajectory, k)` with `ψᵢ(f^k s)·ψⱼ(s) ≠ 0` and `k < k_star`.
    pub exceptions: Vec<(u64, usize)>,
}

/// Starts drawn cosine-weighted from the support of `ψⱼ` inside `B_R(0)`.
fn support_sampler(
    config: &ScattererConfig,
    psi: &WitnessObservable,
    radius: f64,
) -> Result<InvariantSampler, CorrelationError> {
    let patch = config.patch();
    let mut members = Vec::new();
    for k in patch.within(crate::geometry::Vec2::ZERO, radius) {
        if patch.positions()[k].norm() <= radius && crate::observables::evaluate_at(psi, patch, k)? == 1 {
            members.push(k);
        }
    }
    members.sort_unstable();
    if members.is_empty() {
        return Err(CorrelationError::Domain(format!("no support of {} within {radius}", psi.name())));
    }
    Ok(InvariantSampler::from_indices(config, members))
}

/// Radius of starts whose `k`-collision orbits stay certified for windows of radius `rec`.
pub fn start_radius(config: &ScattererConfig, m_hat: f64, k: usize, rec: f64) -> f64 {
    let reach = k as f64 * m_hat + config.mass_bound();
    (config.flight_window() - reach).min(config.patch().window_radius() - rec - reach)
}

/// Checks `ψᵢ(f^k s) = 0` for `0 ≤ k < k_star` along orbits started in `supp ψⱼ`.
#[allow(clippy::too_many_arguments)]
pub fn verify_window(
    config: &ScattererConfig,
    psi_i: &WitnessObservable,
    psi_j: &WitnessObservable,
    k_star: usize,
    n_starts: usize,
    radius: f64,
    seed: u64,
) -> Result<WindowReport, CorrelationError> {
    if psi_i.level != psi_j.level || psi_i.box_index == psi_j.box_index {
        return Err(CorrelationError::Domain("witnesses must be distinct boxes of one level".into()));
    }
    if k_star == 0 {
        return Ok(WindowReport { pass: true, k_star, n_starts, exceptions: vec![] });
    }
    let sampler = support_sampler(config, psi_j, radius)?;
    let exceptions: Vec<(u64, usize)> = (0..n_starts as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<(u64, usize)>, CorrelationError> {
            let mut s = sampler.sample(&mut stream(seed, i));
            let mut hits = Vec::new();
            for k in 0..k_star {
                if k > 0 {
                    s = billiard_map(config, &s).map_err(|source| CorrelationError::Orbit { trajectory: i, source })?.state;
                }
                if evaluate(psi_i, config, &s)? == 1 {
                    hits.push((i, k));
                }
            }
            Ok(hits)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(WindowReport { pass: exceptions.is_empty(), k_star, n_starts, exceptions })
}

/// Smallest `k ≤ k_max` at which some orbit from `supp ψⱼ` lands in `supp ψᵢ`.
pub fn first_overlap(
    config: &ScattererConfig,
    psi_i: &WitnessObservable,
    psi_j: &WitnessObservable,
    k_max: usize,
    n_starts: usize,
    radius: f64,
    seed: u64,
) -> Result<Option<usize>, CorrelationError> {
    let sampler = support_sampler(config, psi_j, radius)?;
    let firsts = (0..n_starts as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<usize>, CorrelationError> {
            let mut s = sampler.sample(&mut stream(seed, i));
            for k in 0..=k_max {
                if k > 0 {
                    s = billiard_map(config, &s).map_err(|source| CorrelationError::Orbit { trajectory: i, source })?.state;
                }
                if evaluate(psi_i, config, &s)? == 1 {
                    return Ok(Some(k));
                }
            }
            Ok(None)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(firsts.into_iter().flatten().min())
}

/// `ϱ² K₄^{−2} λ^{−2dn}`.
pub fn correlation_lower_bound(rho: f64, k4: f64, lambda: f64, d: u32, n: u32) -> f64 {
    rho * rho / (k4 * k4) * lambda.powf(-2.0 * f64::from(d) * f64::from(n))
}

/// Measured constants entering the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictInputs {
    pub d: u32,
    pub m_hat: f64,
    pub l_hat: f64,
    pub k1_hat: f64,
    pub k4_hat: f64,
    pub rho: f64,
    pub lambda_eff: f64,
    pub r_lambda: f64,
    pub b_s: f64,
    /// Unknown constant of the assumed mixing bound.
    pub c_mix: f64,
    /// Measured inradius per computed tower level.
    pub inradius: Vec<f64>,
}

impl VerdictInputs {
    pub fn measure(
        tower: &TowerSystem,
        config: &ScattererConfig,
        horizon: &HorizonEstimate,
        l_hat: f64,
    ) -> Result<Self, CorrelationError> {
        if tower.levels() < 2 {
            return Err(CorrelationError::InsufficientLevels { need: 2, have: tower.levels() });
        }
        let k4_hat = tower
            .measured
            .k4_hat
            .ok_or_else(|| CorrelationError::Domain("tower has no measured K4".into()))?;
        Ok(VerdictInputs {
            d: config.patch().dimension() as u32,
            m_hat: horizon.max_free_path,
            l_hat,
            k1_hat: tower.measured.k1_hat,
            k4_hat,
            rho: normalization(config, config.flight_window()).rho,
            lambda_eff: tower.lambda_eff,
            r_lambda: config.patch().covering_radius(),
            b_s: config.mass_bound(),
            c_mix: 1.0,
            inradius: tower.decompositions.iter().map(|d| d.r_int).collect(),
        })
    }

    /// Measured inradius where available, `K̂₁ λ_eff^n` beyond.
    pub fn proxy(&self, n: usize) -> f64 {
        self.inradius.get(n).copied().unwrap_or(self.k1_hat * self.lambda_eff.powi(n as i32))
    }

    pub fn k_window(&self, n: usize) -> usize {
        window_k_star(self.m_hat, self.proxy(n), self.r_lambda, self.b_s)
    }

    /// `log C* = log(ϱ² K₄^{−2} / (C (2L+1)^{2α}))`.
    pub fn log_c_star(&self, alpha: f64) -> f64 {
        (self.rho * self.rho / (self.k4_hat * self.k4_hat)).ln()
            - self.c_mix.ln()
            - 2.0 * alpha * (2.0 * self.l_hat + 1.0).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContradictionRow {
    pub n: usize,
    pub k_window: usize,
    /// `log C* − 2n(d+α) log λ_eff`.
    pub lhs: f64,
    /// Same side without the large-`n` simplification.
    pub lhs_exact: f64,
    pub rhs: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContradictionTable {
    pub tau: f64,
    /// Stretch exponent; `1` for the exponential case.
    pub gamma_s: f64,
    pub rows: Vec<ContradictionRow>,
    pub first_violation: Option<usize>,
}

/// Rows `1..=n_max` of the inequality `lhs ≤ k(n)^{γ_s} log τ` implied by
/// mixing at rate `τ^{k^{γ_s}}`.
pub fn contradiction_table(inputs: &VerdictInputs, alpha: f64, tau: f64, gamma_s: f64, n_max: usize) -> ContradictionTable {
    let d = f64::from(inputs.d);
    let ln_l = inputs.lambda_eff.ln();
    let rows: Vec<ContradictionRow> = (1..=n_max)
        .map(|n| {
            let nf = n as f64;
            let k = inputs.k_window(n);
            let lhs = inputs.log_c_star(alpha) - 2.0 * nf * (d + alpha) * ln_l;
            let holder = (2.0 * inputs.l_hat + 1.0).powf(alpha) * inputs.lambda_eff.powf(alpha * nf);
            let lhs_exact = (inputs.rho * inputs.rho / (inputs.k4_hat * inputs.k4_hat)).ln()
                - 2.0 * d * nf * ln_l
                - inputs.c_mix.ln()
                - 2.0 * (1.0 + holder).ln();
            let rhs = (k as f64).powf(gamma_s) * tau.ln();
            ContradictionRow { n, k_window: k, lhs, lhs_exact, rhs, violated: k > 0 && rhs < lhs_exact }
        })
        .collect();
    let first_violation = rows.iter().find(|r| r.violated).map(|r| r.n);
    ContradictionTable { tau, gamma_s, rows, first_violation }
}

pub fn tau_grid() -> Vec<f64> {
    (1..20).map(|j| j as f64 / 20.0).collect()
}

pub fn gamma_s_grid() -> Vec<f64> {
    (1..10).map(|j| j as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub model: String,
    /// Fitted decay parameter: rate, stretched rate, or polynomial exponent.
    pub rate: f64,
    pub amplitude: f64,
    /// Stretch exponent for the stretched model.
    pub shape: Option<f64>,
    pub rss: f64,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFits {
    pub exponential: Fit,
    pub stretched: Fit,
    pub polynomial: Fit,
    pub preferred: String,
    pub usable: usize,
}

pub const MIN_FIT_POINTS: usize = 8;

/// Least-squares fits of `log|Ĉ|` against `k`, `k^γ` and `log k`, compared by AIC.
pub fn fit_decay(series: &CorrelationSeries) -> Result<DecayFits, CorrelationError> {
    let pts: Vec<(f64, f64)> = series
        .ks
        .iter()
        .zip(&series.estimates)
        .zip(&series.stderrs)
        .filter(|((&k, &c), &se)| k >= 1 && c.abs() > 2.0 * se && c != 0.0)
        .map(|((&k, &c), _)| (k as f64, c.abs().ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(CorrelationError::InsufficientSignal { usable: pts.len(), need: MIN_FIT_POINTS });
    }
    let m = pts.len() as f64;
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let w = vec![1.0; pts.len()];
    let aic = |rss: f64, p: f64| m * (rss / m).max(1e-300).ln() + 2.0 * p;
    let fit = |x: Vec<f64>, model: &str, shape: Option<f64>| -> Option<Fit> {
        let (a, b, rss) = linear_fit(&x, &y, &w)?;
        let p = if shape.is_some() { 3.0 } else { 2.0 };
        Some(Fit { model: model.into(), rate: -b, amplitude: a.exp(), shape, rss, aic: aic(rss, p) })
    };
    let insufficient = || CorrelationError::InsufficientSignal { usable: pts.len(), need: MIN_FIT_POINTS };
    let exponential = fit(pts.iter().map(|p| p.0).collect(), "exponential", None).ok_or_else(insufficient)?;
    let polynomial = fit(pts.iter().map(|p| p.0.ln()).collect(), "polynomial", None).ok_or_else(insufficient)?;
    let stretched = gamma_s_grid()
        .into_iter()
        .filter_map(|g| fit(pts.iter().map(|p| p.0.powf(g)).collect(), "stretched", Some(g)))
        .min_by(|a, b| a.rss.total_cmp(&b.rss))
        .ok_or_else(insufficient)?;
    let preferred = [&exponential, &stretched, &polynomial]
        .into_iter()
        .min_by(|a, b| a.aic.total_cmp(&b.aic))
        .map(|f| f.model.clone())
        .unwrap_or_default();
    Ok(DecayFits { exponential, stretched, polynomial, preferred, usable: pts.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVerdict {
    pub gamma_max: f64,
    pub alpha: f64,
    pub inputs: VerdictInputs,
    pub contradiction_table: Vec<ContradictionTable>,
    pub stretched_table: Vec<ContradictionTable>,
    pub fits: Vec<Result<DecayFits, String>>,
}

/// `2(d + α)`.
pub fn gamma_max(d: u32, alpha: f64) -> f64 {
    2.0 * (f64::from(d) + alpha)
}

/// Levels searched for a stretched-exponential contradiction.
pub const STRETCHED_SEARCH: usize = 400;

pub fn rate_verdict(
    inputs: &VerdictInputs,
    alpha: f64,
    n_max: usize,
    series: &[CorrelationSeries],
) -> Result<RateVerdict, CorrelationError> {
    if inputs.inradius.len() < 2 {
        return Err(CorrelationError::InsufficientLevels { need: 2, have: inputs.inradius.len() });
    }
    if !(alpha > 0.0) {
        return Err(CorrelationError::Domain(format!("alpha = {alpha}")));
    }
    let exponential = tau_grid().into_iter().map(|t| contradiction_table(inputs, alpha, t, 1.0, n_max)).collect();
    let stretched_table = gamma_s_grid()
        .into_iter()
        .flat_map(|g| tau_grid().into_iter().map(move |t| (t, g)))
        .map(|(t, g)| {
            let mut full = contradiction_table(inputs, alpha, t, g, STRETCHED_SEARCH);
            full.rows.truncate(n_max);
            full
        })
        .collect();
    let fits = series.iter().map(|s| fit_decay(s).map_err(|e| e.to_string())).collect();
    Ok(RateVerdict {
        gamma_max: gamma_max(inputs.d, alpha),
        alpha,
        inputs: inputs.clone(),
        contradiction_table: exponential,
        stretched_table,
        fits,
    })
}

impl RateVerdict {
    pub fn first_violation(&self, tau: f64) -> Option<usize> {
        self.contradiction_table.iter().find(|t| (t.tau - tau).abs() < 1e-9).and_then(|t| t.first_violation)
    }

    /// `{gamma_max, contradiction_table, fits}` plus the stretched table.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}
