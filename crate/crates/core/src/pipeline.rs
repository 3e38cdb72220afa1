//! Configuration-driven experiment pipeline.
//!
//! Stages run in a fixed order and write their artifacts under the output
//! directory. Each stage is keyed by a SHA-256 hash of its inputs and of the
//! previous stage; a rerun reloads a stage from disk when its hash and files
//! are unchanged.

use crate::billiard::{estimate_horizon, HorizonEstimate, ScattererConfig};
use crate::correlation::{
    correlation_lower_bound, correlation_series, rate_verdict, start_radius, verify_window, zero_window,
    CorrelationSeries, RateVerdict, VerdictInputs, WindowBound, WindowReport,
};
use crate::delone::{cluster_catalog, generate_patch, repetitivity, DeloneMultiset, Label, SubstitutionRule};
use crate::observables::{
    empirical_seminorm, manifest, mu_measure, witness, HolderReport, ObservableManifest, WitnessObservable,
};
use crate::tower::{box_measures_cached, build_substitution_tower, check_hypothesis1, BoxMeasures, KeyCache, TowerSystem};
use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Substitution rule: `chair` or `square`.
    pub rule: String,
    /// Number of substitution steps applied to the seed tile.
    pub levels: u32,
    #[serde(default)]
    pub seed_label: Label,
}

/// A pair of witnesses `ψᵢ, ψⱼ` of one tower level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WitnessPair {
    pub level: usize,
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    /// Free flights used to estimate the horizon.
    pub horizon: usize,
    /// Cosine-weighted starts per correlation series.
    pub correlation: usize,
    /// Starts in the support of `ψⱼ` for the window check.
    pub window_starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    /// Disk radius per label in units of the packing radius of the patch.
    pub radius_map: BTreeMap<Label, f64>,
    /// Crop radius of the patch; the whole patch when absent.
    #[serde(default)]
    pub window: Option<f64>,
    pub tower_levels: usize,
    pub witnesses: Vec<WitnessPair>,
    /// Hölder exponents.
    pub alphas: Vec<f64>,
    /// Largest lag of the correlation series.
    pub k_max: usize,
    pub samples: SampleCounts,
    /// Radii at which the repetitivity function is measured.
    pub repetitivity_radii: Vec<f64>,
    /// Levels tabulated in the rate verdict.
    #[serde(default = "default_verdict_levels")]
    pub verdict_levels: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// Run correlation stages even when the horizon looks infinite; taints the report.
    #[serde(default)]
    pub allow_infinite_horizon: bool,
}

fn default_verdict_levels() -> usize {
    12
}

pub fn config_schema() -> String {
    serde_json::to_string_pretty(&schemars::schema_for!(ExperimentConfig)).expect("schema serializes") + "\n"
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage `{stage}` failed: {cause}")]
    Stage { stage: String, cause: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        let c: ExperimentConfig = serde_json::from_str(s).map_err(|e| invalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let s = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    /// Checks everything that can be checked before any work is done.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let rule = SubstitutionRule::by_name(&self.generator.rule)
            .ok_or_else(|| invalid(format!("unknown rule `{}`", self.generator.rule)))?;
        let labels = rule.labels();
        if !labels.contains(&self.generator.seed_label) {
            return Err(invalid(format!("rule has no label {}", self.generator.seed_label)));
        }
        for l in labels {
            match self.radius_map.get(&l) {
                Some(&r) if r > 0.0 && r < 1.0 => {}
                Some(&r) => return Err(invalid(format!("radius factor {r} for label {l} not in (0, 1)"))),
                None => return Err(invalid(format!("no radius for label {l}"))),
            }
        }
        if self.tower_levels < 1 {
            return Err(invalid("tower_levels must be at least 1"));
        }
        for w in &self.witnesses {
            if w.level > self.tower_levels {
                return Err(invalid(format!("witness level {} exceeds tower_levels {}", w.level, self.tower_levels)));
            }
            if w.i == w.j {
                return Err(invalid(format!("witness pair at level {} uses box {} twice", w.level, w.i)));
            }
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0)) {
            return Err(invalid("alphas must be nonempty and positive"));
        }
        if self.samples.horizon == 0 || self.samples.correlation == 0 || self.samples.window_starts == 0 {
            return Err(invalid("sample counts must be positive"));
        }
        if self.repetitivity_radii.iter().any(|&r| !(r > 0.0)) {
            return Err(invalid("repetitivity radii must be positive"));
        }
        if let Some(w) = self.window {
            if !(w > 0.0) {
                return Err(invalid("window must be positive"));
            }
        }
        Ok(())
    }
}

pub const STAGES: [&str; 7] = ["generate", "analyze", "tower", "horizon", "witnesses", "correlations", "verdict"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub name: String,
    pub status: String,
    pub hash: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KStar {
    pub level: usize,
    pub k_star: usize,
    pub inradius: f64,
    pub k1_proxy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub alpha: f64,
    pub gamma_max: f64,
    /// First contradicting level per `τ` on the grid.
    pub first_violation: Vec<(f64, Option<usize>)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub m_hat: Option<f64>,
    pub l_hat: Option<f64>,
    pub k_n: Vec<usize>,
    pub k_star: Vec<KStar>,
    pub verdict: Vec<VerdictSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stages: Vec<StageStatus>,
    pub files: Vec<String>,
    pub headline: Headline,
    pub tainted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitivityPoint {
    pub radius: f64,
    pub t: Option<f64>,
    pub ratio: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub points: usize,
    pub window_radius: f64,
    pub packing_radius: f64,
    pub covering_radius: f64,
    pub label_density: BTreeMap<Label, f64>,
    pub catalog_sizes: Vec<(f64, usize)>,
    pub repetitivity: Vec<RepetitivityPoint>,
    /// Largest certified `M̂(R)/R`.
    pub l_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerArtifacts {
    pub measures: BoxMeasures,
    pub hypothesis: crate::tower::Hypothesis1Report,
    pub sandwich: Vec<bool>,
    pub rec_bound: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessArtifacts {
    pub manifest: ObservableManifest,
    pub mu: Vec<f64>,
    pub holder: Vec<Vec<HolderReport>>,
    /// `L` used in the seminorm bounds.
    pub l_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair: WitnessPair,
    pub series_file: String,
    pub series: CorrelationSeries,
    /// Absent when the horizon is not finite.
    pub window: Option<WindowBound>,
    pub check: Option<WindowReport>,
    pub lower_bound: f64,
    /// `μ̂(ψᵢ) μ̂(ψⱼ)` from frequencies, for comparison with `β̂β̂`.
    pub mu_product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationArtifacts {
    pub pairs: Vec<PairResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StageRecord {
    hash: String,
    files: Vec<String>,
}

/// Fallback `L` when no repetitivity radius could be certified.
const DEFAULT_L: f64 = 2.0;

struct Runner {
    out: PathBuf,
    records: BTreeMap<String, StageRecord>,
    stages: Vec<StageStatus>,
    parent: String,
    files: Vec<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn stage_err(stage: &str, cause: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage { stage: stage.into(), cause: cause.to_string() }
}

impl Runner {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&mut self, stage: &str, name: &str, contents: &[u8]) -> Result<(), PipelineError> {
        fs::write(self.path(name), contents).map_err(|e| stage_err(stage, format!("{name}: {e}")))?;
        Ok(())
    }

    fn read<T: DeserializeOwned>(&self, stage: &str, name: &str) -> Result<T, PipelineError> {
        let s = fs::read_to_string(self.path(name)).map_err(|e| stage_err(stage, format!("{name}: {e}")))?;
        serde_json::from_str(&s).map_err(|e| stage_err(stage, format!("{name}: {e}")))
    }

    /// Runs `work` unless a stage with the same hash left all its files behind.
    fn stage<T>(
        &mut self,
        name: &str,
        inputs: &impl Serialize,
        load: impl FnOnce(&Self) -> Result<T, PipelineError>,
        work: impl FnOnce(&mut Self) -> Result<(T, Vec<String>), PipelineError>,
    ) -> Result<T, PipelineError> {
        let mut h = Sha256::new();
        h.update(name.as_bytes());
        h.update(serde_json::to_vec(inputs).expect("inputs serialize"));
        h.update(self.parent.as_bytes());
        let hash = hex(&h.finalize());
        let cached = self
            .records
            .get(name)
            .filter(|r| r.hash == hash && r.files.iter().all(|f| self.path(f).is_file()))
            .cloned();
        let (value, files) = match cached.map(|r| (load(self), r.files)) {
            Some((Ok(v), files)) => {
                eprintln!("stage {name}: up to date");
                (v, files)
            }
            _ => {
                eprintln!("stage {name}: running");
                let (v, files) = work(self)?;
                self.records.insert(name.into(), StageRecord { hash: hash.clone(), files: files.clone() });
                let rec = serde_json::to_string_pretty(&self.records).expect("records serialize");
                self.write(name, "stages.json", rec.as_bytes())?;
                (v, files)
            }
        };
        self.files.extend(files.iter().cloned());
        self.stages.push(StageStatus { name: name.into(), status: "ok".into(), hash: hash.clone(), files });
        self.parent = hash;
        Ok(value)
    }
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s.into_bytes()
}

fn build_config(cfg: &ExperimentConfig, patch: &DeloneMultiset) -> Result<ScattererConfig, PipelineError> {
    let r = patch.packing_radius();
    let map = cfg.radius_map.iter().map(|(&l, &f)| (l, f * r)).collect();
    ScattererConfig::new(patch.clone(), map).map_err(|e| stage_err("generate", e))
}

/// Runs the full pipeline.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunReport, PipelineError> {
    run_until(cfg, "verdict")
}

/// Runs stages up to and including `last`.
pub fn run_until(cfg: &ExperimentConfig, last: &str) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let stop = STAGES.iter().position(|&s| s == last).ok_or_else(|| invalid(format!("unknown stage `{last}`")))?;
    fs::create_dir_all(&cfg.output).map_err(|e| stage_err("generate", format!("{}: {e}", cfg.output.display())))?;
    let records = fs::read_to_string(cfg.output.join("stages.json"))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or_default();
    let mut run = Runner { out: cfg.output.clone(), records, stages: vec![], parent: String::new(), files: vec![] };
    let mut headline = Headline::default();
    let mut tainted = false;
    let finish = |run: Runner, headline: Headline, tainted: bool| -> Result<RunReport, PipelineError> {
        let report = RunReport { stages: run.stages, files: run.files, headline, tainted };
        fs::write(run.out.join("report.json"), json(&report)).map_err(|e| stage_err("report", e))?;
        Ok(report)
    };

    // generate
    let gen_inputs = (&cfg.generator, cfg.window, &cfg.radius_map);
    let patch = run.stage(
        "generate",
        &gen_inputs,
        |r| {
            let s = fs::read_to_string(r.path("patch.json")).map_err(|e| stage_err("generate", e))?;
            DeloneMultiset::from_json(&s).map_err(|e| stage_err("generate", e))
        },
        |r| {
            let rule = SubstitutionRule::by_name(&cfg.generator.rule).expect("validated");
            let mut patch = generate_patch(&rule, cfg.generator.levels, cfg.generator.seed_label)
                .map_err(|e| stage_err("generate", e))?;
            if let Some(w) = cfg.window {
                if w > patch.window_radius() {
                    return Err(stage_err("generate", format!("window {w} exceeds patch radius {}", patch.window_radius())));
                }
                patch = patch.cropped(w);
            }
            let sc = build_config(cfg, &patch)?;
            r.write("generate", "patch.json", patch.to_json().as_bytes())?;
            r.write("generate", "scatterers.json", &json(&sc.to_file("patch.json")))?;
            Ok((patch, vec!["patch.json".into(), "scatterers.json".into()]))
        },
    )?;
    let config = build_config(cfg, &patch)?;
    if stop == 0 {
        return finish(run, headline, tainted);
    }

    // analyze
    let analysis: Analysis = run.stage(
        "analyze",
        &cfg.repetitivity_radii,
        |r| r.read("analyze", "analysis.json"),
        |r| {
            let a = analyze(&patch, &cfg.repetitivity_radii)?;
            r.write("analyze", "analysis.json", &json(&a))?;
            Ok((a, vec!["analysis.json".into()]))
        },
    )?;
    headline.l_hat = analysis.l_hat;
    let l_used = analysis.l_hat.unwrap_or(DEFAULT_L);
    if stop == 1 {
        return finish(run, headline, tainted);
    }

    // tower
    let mut cache = KeyCache::default();
    let (tower, tower_art): (TowerSystem, TowerArtifacts) = run.stage(
        "tower",
        &cfg.tower_levels,
        |r| {
            let s = fs::read_to_string(r.path("tower.json")).map_err(|e| stage_err("tower", e))?;
            let t = TowerSystem::from_json(&s).map_err(|e| stage_err("tower", e))?;
            Ok((t, r.read("tower", "tower_measures.json")?))
        },
        |r| {
            let rule = SubstitutionRule::by_name(&cfg.generator.rule).expect("validated");
            let tower = build_substitution_tower(&rule, &patch, cfg.tower_levels).map_err(|e| stage_err("tower", e))?;
            let tower = tower.with_repetitivity(l_used.max(1.0 + 1e-9)).map_err(|e| stage_err("tower", e))?;
            let measures = box_measures_cached(&tower, &patch, &mut cache).map_err(|e| stage_err("tower", e))?;
            let tower = tower.with_measures(&measures);
            let art = TowerArtifacts {
                hypothesis: check_hypothesis1(&tower).map_err(|e| stage_err("tower", e))?,
                sandwich: tower.sandwich(),
                rec_bound: tower.rec_bound(),
                measures,
            };
            r.write("tower", "tower.json", tower.to_json().as_bytes())?;
            r.write("tower", "tower_measures.json", &json(&art))?;
            Ok(((tower, art), vec!["tower.json".into(), "tower_measures.json".into()]))
        },
    )?;
    headline.k_n = tower.decompositions.iter().map(|d| d.k()).collect();
    for w in &cfg.witnesses {
        let k = tower.decompositions[w.level].k();
        if w.i >= k || w.j >= k {
            return Err(stage_err("tower", format!("level {} has {k} boxes; pair ({}, {}) does not exist", w.level, w.i, w.j)));
        }
    }
    if stop == 2 {
        return finish(run, headline, tainted);
    }

    // horizon
    let horizon: HorizonEstimate = run.stage(
        "horizon",
        &(cfg.samples.horizon, cfg.seed),
        |r| r.read("horizon", "horizon.json"),
        |r| {
            let h = estimate_horizon(&config, cfg.samples.horizon, cfg.seed).map_err(|e| stage_err("horizon", e))?;
            r.write("horizon", "horizon.json", &json(&h))?;
            Ok((h, vec!["horizon.json".into()]))
        },
    )?;
    headline.m_hat = Some(horizon.max_free_path);
    if horizon.growth_flag {
        if !cfg.allow_infinite_horizon {
            let _ = finish(run, headline.clone(), tainted);
            return Err(stage_err("horizon", "growth flag raised: horizon not finite on this window"));
        }
        tainted = true;
    }
    if stop == 3 {
        return finish(run, headline, tainted);
    }

    // witnesses
    let levels: Vec<usize> = {
        let mut v: Vec<usize> = cfg.witnesses.iter().map(|w| w.level).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut observables: Vec<WitnessObservable> = Vec::new();
    for &n in &levels {
        for i in 0..tower.decompositions[n].k() {
            observables.push(witness(&tower, n, i).map_err(|e| stage_err("witnesses", e))?);
        }
    }
    let find = |n: usize, i: usize| observables.iter().find(|o| o.level == n && o.box_index == i).expect("built above");
    let wit: WitnessArtifacts = run.stage(
        "witnesses",
        &(&levels, &cfg.alphas),
        |r| r.read("witnesses", "witnesses.json"),
        |r| {
            let mut mu = Vec::new();
            let mut holder = Vec::new();
            for o in &observables {
                mu.push(mu_measure(o, &tower_art.measures, &config).map_err(|e| stage_err("witnesses", e))?);
                let mut reps = Vec::new();
                for &a in &cfg.alphas {
                    reps.push(empirical_seminorm(o, &patch, &mut cache, a, l_used).map_err(|e| stage_err("witnesses", e))?);
                }
                holder.push(reps);
            }
            let art = WitnessArtifacts { manifest: manifest("tower.json", &observables), mu, holder, l_used };
            r.write("witnesses", "witnesses.json", &json(&art))?;
            Ok((art, vec!["witnesses.json".into()]))
        },
    )?;
    if stop == 4 {
        return finish(run, headline, tainted);
    }

    // correlations
    let ks: Vec<usize> = (0..=cfg.k_max).collect();
    let corr: CorrelationArtifacts = run.stage(
        "correlations",
        &(&cfg.witnesses, cfg.k_max, cfg.samples.correlation, cfg.samples.window_starts, cfg.seed),
        |r| r.read("correlations", "correlations.json"),
        |r| {
            let mut pairs = Vec::new();
            let mut files = vec!["correlations.json".to_string()];
            let rho = crate::observables::normalization(&config, config.flight_window()).rho;
            let k4 = tower.measured.k4_hat.unwrap_or(f64::NAN);
            for (idx, p) in cfg.witnesses.iter().enumerate() {
                let (wi, wj) = (find(p.level, p.i), find(p.level, p.j));
                let window = if horizon.growth_flag {
                    None
                } else {
                    Some(zero_window(&tower, &horizon, &config, p.level).map_err(|e| stage_err("correlations", e))?)
                };
                let rec = wi.rec.max(wj.rec);
                let radius = start_radius(&config, horizon.max_free_path, cfg.k_max, rec);
                if radius <= 0.0 {
                    return Err(stage_err("correlations", format!("patch too small for k_max = {}", cfg.k_max)));
                }
                let seed = cfg.seed ^ ((idx as u64 + 1) << 40);
                let series = correlation_series(&config, wi, wj, &ks, radius, cfg.samples.correlation, seed, Some(horizon.max_free_path))
                    .map_err(|e| stage_err("correlations", e))?;
                let check = match &window {
                    Some(w) => {
                        let check_radius = start_radius(&config, horizon.max_free_path, w.k_star, rec);
                        Some(
                            verify_window(&config, wi, wj, w.k_star, cfg.samples.window_starts, check_radius, seed)
                                .map_err(|e| stage_err("correlations", e))?,
                        )
                    }
                    None => None,
                };
                let lower_bound = correlation_lower_bound(rho, k4, tower.lambda_eff, 2, p.level as u32);
                let mu_of = |o: &WitnessObservable| {
                    observables.iter().position(|x| x == o).map(|k| wit.mu[k]).unwrap_or(f64::NAN)
                };
                let name = format!("series_L{}_{}_{}.csv", p.level, p.i, p.j);
                let mut buf = Vec::new();
                series.write_csv(&mut buf).map_err(|e| stage_err("correlations", e))?;
                r.write("correlations", &name, &buf)?;
                files.push(name.clone());
                pairs.push(PairResult {
                    pair: *p,
                    series_file: name,
                    mu_product: mu_of(wi) * mu_of(wj),
                    series,
                    window,
                    check,
                    lower_bound,
                });
            }
            let art = CorrelationArtifacts { pairs };
            r.write("correlations", "correlations.json", &json(&art))?;
            Ok((art, files))
        },
    )?;
    headline.k_star = corr
        .pairs
        .iter()
        .filter_map(|p| {
            let w = p.window.as_ref()?;
            Some(KStar { level: p.pair.level, k_star: w.k_star, inradius: w.inradius, k1_proxy: w.k1_proxy })
        })
        .collect();
    headline.k_star.dedup_by_key(|k| k.level);
    if stop == 5 {
        return finish(run, headline, tainted);
    }

    // verdict
    let verdicts: Vec<RateVerdict> = run.stage(
        "verdict",
        &(cfg.verdict_levels, &cfg.alphas),
        |r| r.read("verdict", "verdict.json"),
        |r| {
            let inputs = VerdictInputs::measure(&tower, &config, &horizon, l_used).map_err(|e| stage_err("verdict", e))?;
            let series: Vec<CorrelationSeries> = corr.pairs.iter().map(|p| p.series.clone()).collect();
            let v = cfg
                .alphas
                .iter()
                .map(|&a| rate_verdict(&inputs, a, cfg.verdict_levels, &series))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| stage_err("verdict", e))?;
            r.write("verdict", "verdict.json", &json(&v))?;
            Ok((v, vec!["verdict.json".into()]))
        },
    )?;
    headline.verdict = verdicts
        .iter()
        .map(|v| VerdictSummary {
            alpha: v.alpha,
            gamma_max: v.gamma_max,
            first_violation: v.contradiction_table.iter().map(|t| (t.tau, t.first_violation)).collect(),
        })
        .collect();
    finish(run, headline, tainted)
}

fn analyze(patch: &DeloneMultiset, radii: &[f64]) -> Result<Analysis, PipelineError> {
    let eps = patch.eps_geo();
    let inner = patch.window_radius() / 2.0;
    let label_density = patch
        .labels()
        .iter()
        .map(|&l| (l, patch.label_density(l, inner)))
        .collect();
    let mut catalog_sizes = Vec::new();
    for m in 0..=4 {
        let r = m as f64 * patch.covering_radius();
        let c = cluster_catalog(patch, r + eps).map_err(|e| stage_err("analyze", e))?;
        catalog_sizes.push((r, c.len()));
    }
    let repetitivity: Vec<RepetitivityPoint> = radii
        .iter()
        .map(|&r| match repetitivity(patch, r) {
            Ok(t) => RepetitivityPoint { radius: r, t: Some(t), ratio: Some(t / r), error: None },
            Err(e) => RepetitivityPoint { radius: r, t: None, ratio: None, error: Some(e.to_string()) },
        })
        .collect();
    let l_hat = repetitivity.iter().filter_map(|p| p.ratio).reduce(f64::max);
    Ok(Analysis {
        points: patch.len(),
        window_radius: patch.window_radius(),
        packing_radius: patch.packing_radius(),
        covering_radius: patch.covering_radius(),
        label_density,
        catalog_sizes,
        repetitivity,
        l_hat,
    })
}

/// Tidy plot data: one CSV per series and one file of markers.
pub fn export_plots_data(report: &RunReport, out: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let corr_path = out.join("correlations.json");
    if !report.files.iter().any(|f| f == "correlations.json") || !corr_path.is_file() {
        return Err(stage_err("export", "report has no correlation series"));
    }
    let s = fs::read_to_string(&corr_path).map_err(|e| stage_err("export", e))?;
    let corr: CorrelationArtifacts = serde_json::from_str(&s).map_err(|e| stage_err("export", e))?;
    if corr.pairs.is_empty() {
        return Err(stage_err("export", "report has no correlation series"));
    }
    let mut written = Vec::new();
    let mut markers = csv::Writer::from_writer(Vec::new());
    markers.write_record(["series", "kind", "level", "value"]).map_err(|e| stage_err("export", e))?;
    for p in &corr.pairs {
        let tag = format!("L{}_{}_{}", p.pair.level, p.pair.i, p.pair.j);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["k", "abs_estimate", "stderr", "log10_k", "log10_abs_estimate"]).map_err(|e| stage_err("export", e))?;
        for (idx, &k) in p.series.ks.iter().enumerate() {
            let c = p.series.estimates[idx].abs();
            w.write_record([
                k.to_string(),
                c.to_string(),
                p.series.stderrs[idx].to_string(),
                if k > 0 { (k as f64).log10().to_string() } else { String::new() },
                if c > 0.0 { c.log10().to_string() } else { String::new() },
            ])
            .map_err(|e| stage_err("export", e))?;
        }
        let path = out.join(format!("plot_{tag}.csv"));
        fs::write(&path, w.into_inner().map_err(|e| stage_err("export", e))?).map_err(|e| stage_err("export", e))?;
        written.push(path);
        let level = p.pair.level.to_string();
        if let Some(w) = &p.window {
            markers.write_record([&tag, "k_star", &level, &w.k_star.to_string()]).map_err(|e| stage_err("export", e))?;
        }
        markers.write_record([&tag, "lower_bound", &level, &p.lower_bound.to_string()]).map_err(|e| stage_err("export", e))?;
    }
    let path = out.join("plot_markers.csv");
    fs::write(&path, markers.into_inner().map_err(|e| stage_err("export", e))?).map_err(|e| stage_err("export", e))?;
    written.push(path);
    Ok(written)
}

pub fn load_report(out: &Path) -> Result<RunReport, PipelineError> {
    let s = fs::read_to_string(out.join("report.json")).map_err(|e| stage_err("export", e))?;
    serde_json::from_str(&s).map_err(|e| stage_err("export", e))
}

#[cfg(test)]
mod tests;
