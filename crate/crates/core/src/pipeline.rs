//! End-to-end pipeline: stage orchestration, artifact store, reports.
//!
//! A run proceeds in six steps — fix the objective; sample graphs and a
//! p-value panel and score every graph into a dataset; cross-validate the
//! surrogate structure; train the final surrogate; maximize it under the
//! family constraints; refine the winner on the true objective — followed
//! by optional baselines and a report.
//!
//! Every stage persists its artifact under the output directory together
//! with a content key derived from the configuration fields and upstream
//! keys it depends on. Re-running skips stages whose key and files are
//! intact, so an interrupted run resumes where it stopped and produces a
//! bit-identical report; changing any config field changes the keys
//! downstream of it and recomputes exactly those stages. Stage wall times
//! are persisted inside the artifacts, so resumed reports reproduce the
//! original timings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fnn::{cross_validate, train, CvReport, Dataset, Network, NetworkSpec, TrainConfig};
use crate::graph::Graph;
use crate::objective::{ObjectiveSpec, WeightVector};
use crate::opt::{
    augmented_lagrangian, brute_force_baseline, isres_baseline, local_refine, ALConfig,
    IsresBudget, IsresConfig, ObjectiveFn, OptProblem, OptResult, RefineConfig,
};
use crate::sim::{sample_pvalues, PValuePanel, Scenario, ScenarioConfig};
use crate::space::{build_space, decode, sample_uniform, FamilyConfig, ParamSpace};

/// Hex SHA-256 of a byte string; the pipeline's content address.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hex SHA-256 of a UTF-8 string.
pub fn digest_str(s: &str) -> String {
    digest_bytes(s.as_bytes())
}

/// The family a run optimizes over: the unrestricted family of the
/// scenario's dimension, or an explicit mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilyChoice {
    /// The string `"fully_free"`.
    Named(String),
    /// An explicit family configuration.
    Inline(FamilyConfig),
}

impl Default for FamilyChoice {
    fn default() -> FamilyChoice {
        FamilyChoice::Named("fully_free".to_string())
    }
}

/// Objective weights and optional gate, as written in run configs
/// (hypotheses 1-based).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Importance weight per hypothesis; must sum to one.
    pub weights: Vec<f64>,
    /// 1-based index of the gate hypothesis, if the gated objective is
    /// wanted.
    #[serde(default)]
    pub gate: Option<usize>,
}

impl ObjectiveConfig {
    fn build(&self, m: usize) -> Result<ObjectiveSpec> {
        if self.weights.len() != m {
            return Err(Error::config(format!(
                "{} objective weights for {} hypotheses",
                self.weights.len(),
                m
            )));
        }
        let weights = WeightVector::new(self.weights.clone())?;
        match self.gate {
            None => Ok(ObjectiveSpec::plain(weights)),
            Some(g) => {
                if g == 0 || g > m {
                    return Err(Error::config(format!(
                        "gate {g} out of range 1..={m}"
                    )));
                }
                ObjectiveSpec::gated(weights, g - 1)
            }
        }
    }
}

/// Graph/panel sampling sizes and derived seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Number of sampled graphs (dataset rows).
    pub graphs: usize,
    /// Rows of the training p-value panel.
    pub panel_rows: usize,
}

impl Default for DatasetConfig {
    fn default() -> DatasetConfig {
        DatasetConfig { graphs: 2_000, panel_rows: 100_000 }
    }
}

/// Surrogate structure selection and final training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    /// Candidate architectures for cross-validation.
    pub candidates: Vec<NetworkSpec>,
    /// Cross-validation folds.
    pub cv_folds: usize,
    /// Epochs per cross-validation fit.
    pub cv_epochs: usize,
    /// Epochs for the final fit on the training split.
    pub final_epochs: usize,
    /// Fraction of dataset rows held out of the final fit for the
    /// validation MSE (taken from the end of the dataset).
    pub holdout_fraction: f64,
    /// RMSProp settings shared by all fits (epochs and seed are supplied
    /// by the pipeline).
    pub learning_rate: f64,
    /// RMSProp accumulator decay.
    pub rho: f64,
    /// RMSProp stabilizer.
    pub delta: f64,
    /// Minibatch size.
    pub batch: usize,
}

impl Default for SurrogateConfig {
    fn default() -> SurrogateConfig {
        SurrogateConfig {
            candidates: vec![
                NetworkSpec::new(vec![40, 40]),
                NetworkSpec::new(vec![40, 40, 40]),
            ],
            cv_folds: 5,
            cv_epochs: 600,
            final_epochs: 10_000,
            holdout_fraction: 0.2,
            learning_rate: 1e-3,
            rho: 0.9,
            delta: 1e-8,
            batch: 128,
        }
    }
}

impl SurrogateConfig {
    fn train_config(&self, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            delta: self.delta,
            batch: self.batch,
            epochs,
            seed,
        }
    }
}

/// Surrogate optimizer settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Augmented-Lagrangian settings.
    pub auglag: ALConfig,
    /// Number of multi-start points, sampled uniformly from the family.
    pub starts: usize,
    /// Refinement settings for the true-objective polish.
    pub refine: RefineConfig,
}

impl Default for OptimizerConfig {
    fn default() -> OptimizerConfig {
        OptimizerConfig {
            auglag: ALConfig::default(),
            starts: 16,
            refine: RefineConfig::default(),
        }
    }
}

/// How the evolution-strategy baseline's budget is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum IsresBudgetConfig {
    /// Wall seconds equal to `factor` times the measured surrogate
    /// pipeline time (cross-validation + final training + optimization +
    /// refinement).
    WallFactor(f64),
    /// Fixed wall seconds.
    WallSecs(f64),
    /// Fixed objective-evaluation count (bit-reproducible).
    Evals(u64),
}

impl Default for IsresBudgetConfig {
    fn default() -> IsresBudgetConfig {
        IsresBudgetConfig::WallFactor(1.5)
    }
}

/// Baseline toggles.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Run the evolution strategy on the true objective.
    pub isres: bool,
    /// Evolution-strategy budget rule.
    pub isres_budget: IsresBudgetConfig,
    /// Random starts for the refiner-only baseline (0 disables it).
    pub refine_only_starts: usize,
    /// Report the best dataset row.
    pub brute_force: bool,
}

impl Default for BaselineConfig {
    fn default() -> BaselineConfig {
        BaselineConfig {
            isres: true,
            isres_budget: IsresBudgetConfig::default(),
            refine_only_starts: 1,
            brute_force: true,
        }
    }
}

/// Held-out evaluation panel settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Rows of the held-out panel (defaults to the training panel size).
    pub panel_rows: Option<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> EvaluationConfig {
        EvaluationConfig { panel_rows: None }
    }
}

/// Seed derivation for every randomized stage. Each stage seed is
/// `base` plus a fixed stage offset, so one number reseeds the whole run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedConfig {
    /// Master seed.
    pub base: u64,
}

impl Default for SeedConfig {
    fn default() -> SeedConfig {
        SeedConfig { base: 0 }
    }
}

impl SeedConfig {
    /// Training p-value panel.
    pub fn panel(&self) -> u64 {
        self.base.wrapping_add(1_001)
    }

    /// Graph sampling.
    pub fn graphs(&self) -> u64 {
        self.base.wrapping_add(2_002)
    }

    /// Network initialization/shuffling/dropout.
    pub fn train(&self) -> u64 {
        self.base.wrapping_add(3_003)
    }

    /// Optimizer multi-start sampling.
    pub fn starts(&self) -> u64 {
        self.base.wrapping_add(4_004)
    }

    /// Evolution-strategy baseline.
    pub fn isres(&self) -> u64 {
        self.base.wrapping_add(5_005)
    }

    /// Refiner-only baseline starts.
    pub fn refine_only(&self) -> u64 {
        self.base.wrapping_add(6_006)
    }

    /// Held-out evaluation panel.
    pub fn holdout_panel(&self) -> u64 {
        self.base.wrapping_add(7_007)
    }
}

/// A full run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// The trial scenario.
    pub scenario: ScenarioConfig,
    /// The family of graphs to optimize over.
    #[serde(default)]
    pub family: FamilyChoice,
    /// The objective.
    pub objective: ObjectiveConfig,
    /// Sampling sizes.
    #[serde(default)]
    pub dataset: DatasetConfig,
    /// Surrogate selection and training.
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    /// Surrogate optimizer.
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Baselines.
    #[serde(default)]
    pub baselines: BaselineConfig,
    /// Held-out evaluation.
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Seeds.
    #[serde(default)]
    pub seeds: SeedConfig,
}

impl RunConfig {
    /// Parse a config file.
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse from a JSON string.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::json("<run config>", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical JSON form (the basis of the config digest).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Hex digest of the canonical JSON form.
    pub fn digest(&self) -> String {
        digest_str(&self.to_json())
    }

    /// The family configuration this run optimizes over.
    pub fn family_config(&self) -> Result<FamilyConfig> {
        let scenario = Scenario::from_config(&self.scenario)?;
        match &self.family {
            FamilyChoice::Named(name) if name == "fully_free" => {
                Ok(FamilyConfig::fully_free(scenario.m(), scenario.alpha()))
            }
            FamilyChoice::Named(other) => Err(Error::config(format!(
                "unknown family name {other:?}; use \"fully_free\" or an inline family object"
            ))),
            FamilyChoice::Inline(cfg) => {
                if cfg.m != scenario.m() {
                    return Err(Error::config(format!(
                        "family has {} hypotheses, scenario has {}",
                        cfg.m,
                        scenario.m()
                    )));
                }
                if (cfg.alpha_total - scenario.alpha()).abs() > 1e-12 {
                    return Err(Error::config(format!(
                        "family alpha_total {} != scenario alpha {}",
                        cfg.alpha_total,
                        scenario.alpha()
                    )));
                }
                Ok(cfg.clone())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let scenario = Scenario::from_config(&self.scenario)?;
        let m = scenario.m();
        self.objective.build(m)?;
        build_space(&self.family_config()?)?;
        if self.dataset.graphs < 2 {
            return Err(Error::config("dataset needs at least two graphs"));
        }
        if self.dataset.panel_rows < 2 {
            return Err(Error::config("panel needs at least two rows"));
        }
        if self.surrogate.candidates.is_empty() {
            return Err(Error::config("surrogate needs at least one candidate"));
        }
        if self.surrogate.cv_folds < 2 {
            return Err(Error::config("cross-validation needs at least two folds"));
        }
        if !(0.0..1.0).contains(&self.surrogate.holdout_fraction) {
            return Err(Error::config("holdout fraction must lie in [0, 1)"));
        }
        if self.optimizer.starts == 0 {
            return Err(Error::config("optimizer needs at least one start"));
        }
        self.surrogate.train_config(1, 0).validate()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Artifact store
// ---------------------------------------------------------------------------

const MANIFEST_FILE: &str = "manifest.json";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageEntry {
    /// Content key: digest of the stage's config fields and upstream keys.
    key: String,
    /// Artifact files and their content digests.
    files: BTreeMap<String, String>,
    /// Wall seconds the stage took when it actually ran.
    elapsed_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
struct Manifest {
    version: u32,
    config_digest: String,
    stages: BTreeMap<String, StageEntry>,
}

impl Manifest {
    fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest { version: 1, ..Manifest::default() });
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialization");
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Exclusive ownership of an output directory for the duration of a
/// mutating command. The guard file is removed on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    /// Acquire the lock, creating the directory if needed.
    pub fn acquire(dir: &Path) -> Result<DirLock> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::config(format!(
                    "output directory {} is locked by another run (remove {} if stale)",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(Error::io(path.display().to_string(), e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// An artifact JSON wrapper persisting the stage's wall time next to its
/// payload, so resumed runs report the original timing.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Timed<T> {
    elapsed_secs: f64,
    data: T,
}

struct Store {
    dir: PathBuf,
    manifest: Manifest,
}

impl Store {
    fn open(dir: &Path, config_digest: &str) -> Result<Store> {
        let mut manifest = Manifest::load(dir)?;
        manifest.version = 1;
        manifest.config_digest = config_digest.to_string();
        Ok(Store { dir: dir.to_path_buf(), manifest })
    }

    /// Whether `stage` is cached under `key` with intact files.
    fn is_fresh(&self, stage: &str, key: &str) -> bool {
        match self.manifest.stages.get(stage) {
            Some(entry) if entry.key == key => entry.files.iter().all(|(name, digest)| {
                fs::read(self.dir.join(name))
                    .map(|bytes| digest_bytes(&bytes) == *digest)
                    .unwrap_or(false)
            }),
            _ => false,
        }
    }

    fn elapsed(&self, stage: &str) -> f64 {
        self.manifest
            .stages
            .get(stage)
            .map(|e| e.elapsed_secs)
            .unwrap_or(0.0)
    }

    fn record(
        &mut self,
        stage: &str,
        key: &str,
        files: &[&str],
        elapsed_secs: f64,
    ) -> Result<()> {
        let mut digests = BTreeMap::new();
        for name in files {
            let path = self.dir.join(name);
            let bytes = fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            digests.insert(name.to_string(), digest_bytes(&bytes));
        }
        self.manifest.stages.insert(
            stage.to_string(),
            StageEntry { key: key.to_string(), files: digests, elapsed_secs },
        );
        self.manifest.save(&self.dir)
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let path = self.dir.join(name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("artifact serialization");
        write_atomic(&self.dir.join(name), text.as_bytes())
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), text.as_bytes())
    }

    fn read_text(&self, name: &str) -> Result<String> {
        let path = self.dir.join(name);
        fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Everything the stages share: validated config pieces and derived
/// objects.
pub struct PipelineContext {
    cfg: RunConfig,
    scenario: Scenario,
    spec: ObjectiveSpec,
    space: ParamSpace,
    store: Store,
    _lock: DirLock,
}

impl PipelineContext {
    /// Validate the config, lock the output directory, and open the store.
    pub fn open(cfg: RunConfig, out: &Path) -> Result<PipelineContext> {
        cfg.validate()?;
        let scenario = Scenario::from_config(&cfg.scenario)?;
        let spec = cfg.objective.build(scenario.m())?;
        let space = build_space(&cfg.family_config()?)?;
        let lock = DirLock::acquire(out)?;
        let store = Store::open(out, &cfg.digest())?;
        Ok(PipelineContext { cfg, scenario, spec, space, store, _lock: lock })
    }

    /// The run configuration.
    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// The validated scenario.
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// The parameter space.
    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    fn objective_digest(&self) -> String {
        digest_str(&serde_json::to_string(&self.cfg.objective).expect("objective serialization"))
    }

    // -- step 2a: training panel ------------------------------------------

    fn panel_key(&self) -> String {
        digest_str(&format!(
            "panel:{}:{}:{}",
            self.scenario.digest(),
            self.cfg.dataset.panel_rows,
            self.cfg.seeds.panel()
        ))
    }

    /// Sample (or reload) the training p-value panel.
    pub fn stage_panel(&mut self) -> Result<PValuePanel> {
        let key = self.panel_key();
        let bin = "panel_train.bin";
        if self.store.is_fresh("panel", &key) {
            return PValuePanel::load(&self.store.dir.join(bin));
        }
        let t0 = Instant::now();
        let panel = sample_pvalues(
            &self.scenario,
            self.cfg.dataset.panel_rows,
            self.cfg.seeds.panel(),
        );
        panel.save(&self.store.dir.join(bin))?;
        let elapsed = t0.elapsed().as_secs_f64();
        self.store
            .record("panel", &key, &[bin, "panel_train.json"], elapsed)?;
        Ok(panel)
    }

    // -- step 2b: graphs + dataset ----------------------------------------

    fn dataset_key(&self) -> String {
        digest_str(&format!(
            "dataset:{}:{}:{}:{}:{}",
            self.panel_key(),
            self.space.digest(),
            self.objective_digest(),
            self.cfg.dataset.graphs,
            self.cfg.seeds.graphs()
        ))
    }

    /// Sample the graphs and score each on the training panel.
    pub fn stage_dataset(&mut self) -> Result<Dataset> {
        let key = self.dataset_key();
        let file = "dataset.csv";
        if self.store.is_fresh("dataset", &key) {
            return Dataset::from_csv(&self.store.read_text(file)?);
        }
        let panel = self.stage_panel()?;
        let t0 = Instant::now();
        let xs = sample_uniform(&self.space, self.cfg.dataset.graphs, self.cfg.seeds.graphs());
        let mut data = Dataset::new(self.space.dim());
        for x in &xs {
            let graph = decode(&self.space, x)?;
            let value =
                crate::objective::objective_value_on_panel(&graph, &panel, &self.spec)?;
            data.push(x, value);
        }
        self.store.write_text(file, &data.to_csv())?;
        let elapsed = t0.elapsed().as_secs_f64();
        self.store.record("dataset", &key, &[file], elapsed)?;
        Ok(data)
    }

    // -- step 3: cross-validation -----------------------------------------

    fn cv_key(&self) -> String {
        digest_str(&format!(
            "cv:{}:{}:{}:{}:{}:{}",
            self.dataset_key(),
            serde_json::to_string(&self.cfg.surrogate.candidates).unwrap(),
            self.cfg.surrogate.cv_folds,
            self.cfg.surrogate.cv_epochs,
            digest_str(&serde_json::to_string(&self.cfg.surrogate.train_config(0, 0)).unwrap()),
            self.cfg.seeds.train()
        ))
    }

    /// Select the surrogate structure by k-fold cross-validation.
    pub fn stage_cv(&mut self) -> Result<CvReport> {
        let key = self.cv_key();
        let file = "cv_report.json";
        if self.store.is_fresh("cv", &key) {
            let timed: Timed<CvReport> = self.store.read_json(file)?;
            return Ok(timed.data);
        }
        let data = self.stage_dataset()?;
        let t0 = Instant::now();
        let cfg = self
            .cfg
            .surrogate
            .train_config(self.cfg.surrogate.cv_epochs, self.cfg.seeds.train());
        let report = cross_validate(
            &data,
            &self.cfg.surrogate.candidates,
            &cfg,
            self.cfg.surrogate.cv_folds,
        )?;
        let elapsed = t0.elapsed().as_secs_f64();
        self.store
            .write_json(file, &Timed { elapsed_secs: elapsed, data: report.clone() })?;
        self.store.record("cv", &key, &[file], elapsed)?;
        Ok(report)
    }

    // -- step 4: final training -------------------------------------------

    fn train_key(&self) -> String {
        digest_str(&format!(
            "train:{}:{}:{}",
            self.cv_key(),
            self.cfg.surrogate.final_epochs,
            self.cfg.surrogate.holdout_fraction
        ))
    }

    /// Train the selected structure on the training split and measure the
    /// validation MSE on the held-out tail of the dataset.
    pub fn stage_train(&mut self) -> Result<(Network, TrainSummary)> {
        let key = self.train_key();
        let net_file = "network.json";
        let sum_file = "train_summary.json";
        if self.store.is_fresh("train", &key) {
            let net = Network::from_json(&self.store.read_text(net_file)?)?;
            let timed: Timed<TrainSummary> = self.store.read_json(sum_file)?;
            return Ok((net, timed.data));
        }
        let cv = self.stage_cv()?;
        let data = self.stage_dataset()?;
        let t0 = Instant::now();
        let n = data.len();
        let holdout = ((n as f64) * self.cfg.surrogate.holdout_fraction).round() as usize;
        let split = n - holdout.min(n.saturating_sub(2));
        let train_rows: Vec<usize> = (0..split).collect();
        let val_rows: Vec<usize> = (split..n).collect();
        let train_data = data.select(&train_rows);
        let cfg = self
            .cfg
            .surrogate
            .train_config(self.cfg.surrogate.final_epochs, self.cfg.seeds.train());
        let net = train(&train_data, cv.best_spec(), &cfg)?;
        let validation_mse = if val_rows.is_empty() {
            None
        } else {
            Some(net.mse(&data.select(&val_rows)))
        };
        let summary = TrainSummary {
            chosen: cv.best_spec().clone(),
            train_rows: train_rows.len(),
            validation_rows: val_rows.len(),
            validation_mse,
            network_digest: net.digest(),
        };
        let elapsed = t0.elapsed().as_secs_f64();
        self.store.write_text(net_file, &net.to_json())?;
        self.store
            .write_json(sum_file, &Timed { elapsed_secs: elapsed, data: summary.clone() })?;
        self.store.record("train", &key, &[net_file, sum_file], elapsed)?;
        Ok((net, summary))
    }

    // -- step 5: surrogate optimization -----------------------------------

    fn optimize_key(&self) -> String {
        digest_str(&format!(
            "optimize:{}:{}:{}:{}",
            self.train_key(),
            serde_json::to_string(&self.cfg.optimizer.auglag).unwrap(),
            self.cfg.optimizer.starts,
            self.cfg.seeds.starts()
        ))
    }

    /// Maximize the surrogate under the family constraints.
    pub fn stage_optimize(&mut self) -> Result<OptResult> {
        let key = self.optimize_key();
        let file = "optimize_result.json";
        if self.store.is_fresh("optimize", &key) {
            let timed: Timed<OptResult> = self.store.read_json(file)?;
            return Ok(timed.data);
        }
        let (net, _) = self.stage_train()?;
        let t0 = Instant::now();
        let starts = sample_uniform(&self.space, self.cfg.optimizer.starts, self.cfg.seeds.starts());
        let problem = OptProblem::from_space(&net, &self.space);
        let result = augmented_lagrangian(&problem, &starts, &self.cfg.optimizer.auglag)?;
        let graph = decode(&self.space, &result.x)?;
        let elapsed = t0.elapsed().as_secs_f64();
        self.store.write_text("graph_surrogate.json", &graph.to_json())?;
        self.store
            .write_json(file, &Timed { elapsed_secs: elapsed, data: result.clone() })?;
        self.store
            .record("optimize", &key, &[file, "graph_surrogate.json"], elapsed)?;
        Ok(result)
    }

    // -- step 6: true-objective refinement --------------------------------

    fn refine_key(&self) -> String {
        digest_str(&format!(
            "refine:{}:{}:{}",
            self.optimize_key(),
            self.panel_key(),
            serde_json::to_string(&self.cfg.optimizer.refine).unwrap()
        ))
    }

    /// Polish the surrogate's winner on the true (panel) objective.
    pub fn stage_refine(&mut self) -> Result<OptResult> {
        let key = self.refine_key();
        let file = "refine_result.json";
        if self.store.is_fresh("refine", &key) {
            let timed: Timed<OptResult> = self.store.read_json(file)?;
            return Ok(timed.data);
        }
        let surrogate_best = self.stage_optimize()?;
        let panel = self.stage_panel()?;
        let t0 = Instant::now();
        let objective = PanelObjective {
            space: &self.space,
            panel: &panel,
            spec: &self.spec,
        };
        let problem = OptProblem::from_space(&objective, &self.space);
        let result = local_refine(&problem, &surrogate_best.x, &self.cfg.optimizer.refine)?;
        let graph = decode(&self.space, &result.x)?;
        let elapsed = t0.elapsed().as_secs_f64();
        self.store.write_text("graph_optimal.json", &graph.to_json())?;
        self.store
            .write_json(file, &Timed { elapsed_secs: elapsed, data: result.clone() })?;
        self.store
            .record("refine", &key, &[file, "graph_optimal.json"], elapsed)?;
        Ok(result)
    }

    // -- baselines ---------------------------------------------------------

    fn isres_key(&self) -> String {
        digest_str(&format!(
            "isres:{}:{}:{}:{}:{}",
            self.dataset_key(),
            self.panel_key(),
            serde_json::to_string(&self.cfg.baselines.isres_budget).unwrap(),
            self.cfg.seeds.isres(),
            self.space.digest()
        ))
    }

    /// The evolution-strategy baseline on the true objective. The wall
    /// budget (when rule-based) is `factor` times the measured surrogate
    /// pipeline time: cross-validation + training + optimization +
    /// refinement.
    pub fn stage_isres(&mut self) -> Result<OptResult> {
        let key = self.isres_key();
        let file = "baseline_isres.json";
        if self.store.is_fresh("isres", &key) {
            let timed: Timed<OptResult> = self.store.read_json(file)?;
            return Ok(timed.data);
        }
        // Budget needs the measured pipeline time, so the pipeline stages
        // must exist first.
        self.stage_refine()?;
        let budget = match self.cfg.baselines.isres_budget {
            IsresBudgetConfig::WallFactor(factor) => {
                let measured = self.store.elapsed("cv")
                    + self.store.elapsed("train")
                    + self.store.elapsed("optimize")
                    + self.store.elapsed("refine");
                IsresBudget::Wall(factor * measured)
            }
            IsresBudgetConfig::WallSecs(secs) => IsresBudget::Wall(secs),
            IsresBudgetConfig::Evals(evals) => IsresBudget::Evals(evals),
        };
        let panel = self.stage_panel()?;
        let t0 = Instant::now();
        let objective = PanelObjective {
            space: &self.space,
            panel: &panel,
            spec: &self.spec,
        };
        let problem = OptProblem::from_space(&objective, &self.space);
        let cfg = IsresConfig {
            population: None,
            pf: 0.45,
            budget,
            seed: self.cfg.seeds.isres(),
        };
        let result = isres_baseline(&problem, &cfg)?;
        let graph = decode(&self.space, &result.x)?;
        let elapsed = t0.elapsed().as_secs_f64();
        self.store.write_text("graph_isres.json", &graph.to_json())?;
        self.store
            .write_json(file, &Timed { elapsed_secs: elapsed, data: result.clone() })?;
        self.store
            .record("isres", &key, &[file, "graph_isres.json"], elapsed)?;
        Ok(result)
    }

    fn refine_only_key(&self) -> String {
        digest_str(&format!(
            "refine_only:{}:{}:{}:{}",
            self.dataset_key(),
            self.panel_key(),
            serde_json::to_string(&self.cfg.optimizer.refine).unwrap(),
            format!(
                "{}:{}",
                self.cfg.baselines.refine_only_starts,
                self.cfg.seeds.refine_only()
            )
        ))
    }

    /// The refiner-only baseline: local refinement of the true objective
    /// from random feasible starts, best result kept.
    pub fn stage_refine_only(&mut self) -> Result<OptResult> {
        let key = self.refine_only_key();
        let file = "baseline_refine_only.json";
        if self.store.is_fresh("refine_only", &key) {
            let timed: Timed<OptResult> = self.store.read_json(file)?;
            return Ok(timed.data);
        }
        let panel = self.stage_panel()?;
        let t0 = Instant::now();
        let starts = sample_uniform(
            &self.space,
            self.cfg.baselines.refine_only_starts,
            self.cfg.seeds.refine_only(),
        );
        let objective = PanelObjective {
            space: &self.space,
            panel: &panel,
            spec: &self.spec,
        };
        let problem = OptProblem::from_space(&objective, &self.space);
        let mut best: Option<OptResult> = None;
        let mut evals = 0;
        for start in &starts {
            let r = local_refine(&problem, start, &self.cfg.optimizer.refine)?;
            evals += r.evaluations;
            let better = best.as_ref().map(|b| r.value > b.value).unwrap_or(true);
            if better {
                best = Some(r);
            }
        }
        let mut result =
            best.ok_or_else(|| Error::config("refiner-only baseline needs at least one start"))?;
        result.evaluations = evals;
        let graph = decode(&self.space, &result.x)?;
        let elapsed = t0.elapsed().as_secs_f64();
        self.store
            .write_text("graph_refine_only.json", &graph.to_json())?;
        self.store
            .write_json(file, &Timed { elapsed_secs: elapsed, data: result.clone() })?;
        self.store
            .record("refine_only", &key, &[file, "graph_refine_only.json"], elapsed)?;
        Ok(result)
    }

    /// The brute-force baseline: the best dataset row.
    pub fn stage_brute_force(&mut self) -> Result<OptResult> {
        let key = digest_str(&format!("brute:{}", self.dataset_key()));
        let file = "baseline_brute.json";
        if self.store.is_fresh("brute", &key) {
            let timed: Timed<OptResult> = self.store.read_json(file)?;
            return Ok(timed.data);
        }
        let data = self.stage_dataset()?;
        let t0 = Instant::now();
        let result = brute_force_baseline(&data)?;
        let elapsed = t0.elapsed().as_secs_f64();
        self.store
            .write_json(file, &Timed { elapsed_secs: elapsed, data: result.clone() })?;
        self.store.record("brute", &key, &[file], elapsed)?;
        Ok(result)
    }

    // -- held-out evaluation panel ----------------------------------------

    fn eval_panel_key(&self) -> String {
        digest_str(&format!(
            "eval_panel:{}:{}:{}",
            self.scenario.digest(),
            self.eval_rows(),
            self.cfg.seeds.holdout_panel()
        ))
    }

    fn eval_rows(&self) -> usize {
        self.cfg
            .evaluation
            .panel_rows
            .unwrap_or(self.cfg.dataset.panel_rows)
    }

    /// Sample (or reload) the held-out evaluation panel.
    pub fn stage_eval_panel(&mut self) -> Result<PValuePanel> {
        let key = self.eval_panel_key();
        let bin = "panel_eval.bin";
        if self.store.is_fresh("eval_panel", &key) {
            return PValuePanel::load(&self.store.dir.join(bin));
        }
        let t0 = Instant::now();
        let panel = sample_pvalues(&self.scenario, self.eval_rows(), self.cfg.seeds.holdout_panel());
        panel.save(&self.store.dir.join(bin))?;
        let elapsed = t0.elapsed().as_secs_f64();
        self.store
            .record("eval_panel", &key, &[bin, "panel_eval.json"], elapsed)?;
        Ok(panel)
    }

    // -- report ------------------------------------------------------------

    /// Score a method's final point on the training and held-out panels.
    fn method_row(
        &mut self,
        method: &str,
        result: &OptResult,
        elapsed_secs: f64,
        graph_file: &str,
    ) -> Result<MethodRow> {
        let graph = decode(&self.space, &result.x)?;
        let train_panel = self.stage_panel()?;
        let eval_panel = self.stage_eval_panel()?;
        let (value_train, se_train) =
            crate::objective::objective_with_se_on_panel(&graph, &train_panel, &self.spec)?;
        let (value_holdout, se_holdout) =
            crate::objective::objective_with_se_on_panel(&graph, &eval_panel, &self.spec)?;
        Ok(MethodRow {
            method: method.to_string(),
            value_train,
            se_train,
            value_holdout,
            se_holdout,
            elapsed_secs,
            evaluations: result.evaluations,
            converged: result.converged,
            graph_file: graph_file.to_string(),
        })
    }

    /// Run the full pipeline (six steps plus toggled baselines) and emit
    /// the report artifacts.
    pub fn run(&mut self) -> Result<Report> {
        self.stage_panel()?;
        self.stage_dataset()?;
        let cv = self.stage_cv()?;
        let (_, train_summary) = self.stage_train()?;
        self.stage_optimize()?;
        let refined = self.stage_refine()?;

        let mut rows = Vec::new();
        let fnn_elapsed = self.store.elapsed("cv")
            + self.store.elapsed("train")
            + self.store.elapsed("optimize")
            + self.store.elapsed("refine");
        rows.push(self.method_row("fnn_pipeline", &refined, fnn_elapsed, "graph_optimal.json")?);

        if self.cfg.baselines.isres {
            let r = self.stage_isres()?;
            let elapsed = self.store.elapsed("isres");
            rows.push(self.method_row("isres", &r, elapsed, "graph_isres.json")?);
        }
        if self.cfg.baselines.refine_only_starts > 0 {
            let r = self.stage_refine_only()?;
            let elapsed = self.store.elapsed("refine_only");
            rows.push(self.method_row("refine_only", &r, elapsed, "graph_refine_only.json")?);
        }
        let dataset_max = if self.cfg.baselines.brute_force {
            let r = self.stage_brute_force()?;
            let elapsed = self.store.elapsed("brute");
            rows.push(self.method_row("brute_force", &r, elapsed, "dataset.csv")?);
            Some(DatasetMax { value: r.value, x: r.x.clone() })
        } else {
            None
        };

        let report = Report {
            config_digest: self.cfg.digest(),
            scenario_digest: self.scenario.digest(),
            family_digest: self.space.digest(),
            dim: self.space.dim(),
            cv,
            train: train_summary,
            dataset_max,
            methods: rows,
        };
        self.store.write_json("report.json", &report)?;
        self.store.write_text("report.csv", &report.to_csv())?;
        self.store.write_text("plot_data.csv", &report.to_plot_csv())?;
        let report_files = ["report.json", "report.csv", "plot_data.csv"];
        let report_key = digest_str(&format!(
            "report:{}:{}:{}:{}",
            self.refine_key(),
            self.isres_key(),
            self.refine_only_key(),
            self.eval_panel_key()
        ));
        self.store.record("report", &report_key, &report_files, 0.0)?;
        Ok(report)
    }
}

/// The true objective as a function of free coordinates: decode and score
/// on a fixed panel. Infeasible points score negative infinity, which the
/// refiner treats as "worse than anything feasible".
struct PanelObjective<'a> {
    space: &'a ParamSpace,
    panel: &'a PValuePanel,
    spec: &'a ObjectiveSpec,
}

impl ObjectiveFn for PanelObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match decode(self.space, x) {
            Ok(graph) => {
                crate::objective::objective_value_on_panel(&graph, self.panel, self.spec)
                    .unwrap_or(f64::NEG_INFINITY)
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

/// Final-training outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    /// The cross-validation winner that was trained.
    pub chosen: NetworkSpec,
    /// Rows in the final training split.
    pub train_rows: usize,
    /// Rows in the validation split.
    pub validation_rows: usize,
    /// Mean squared error on the validation split, objective units
    /// (absent when the holdout fraction is zero).
    pub validation_mse: Option<f64>,
    /// Digest of the persisted network.
    pub network_digest: String,
}

/// The best dataset row (the brute-force baseline).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMax {
    /// Its objective value on the training panel.
    pub value: f64,
    /// Its free coordinates.
    pub x: Vec<f64>,
}

/// One method's scores. Values are recomputed from the decoded graph on
/// the shared panels, never taken from the optimizer's bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRow {
    /// Method name (`fnn_pipeline`, `isres`, `refine_only`, `brute_force`).
    pub method: String,
    /// Objective on the training panel.
    pub value_train: f64,
    /// Monte Carlo standard error on the training panel.
    pub se_train: f64,
    /// Objective on the held-out panel.
    pub value_holdout: f64,
    /// Monte Carlo standard error on the held-out panel.
    pub se_holdout: f64,
    /// Wall seconds the method took (persisted; stable across resumes).
    pub elapsed_secs: f64,
    /// Objective evaluations the method spent.
    pub evaluations: u64,
    /// Whether the method reported convergence.
    pub converged: bool,
    /// The persisted graph (or dataset) behind the row.
    pub graph_file: String,
}

/// The pipeline report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    /// Digest of the run configuration.
    pub config_digest: String,
    /// Digest of the scenario.
    pub scenario_digest: String,
    /// Digest of the family.
    pub family_digest: String,
    /// Free-coordinate dimension.
    pub dim: usize,
    /// Structure-selection table.
    pub cv: CvReport,
    /// Final-training summary.
    pub train: TrainSummary,
    /// Best dataset row, when brute force ran.
    pub dataset_max: Option<DatasetMax>,
    /// One row per method.
    pub methods: Vec<MethodRow>,
}

impl Report {
    /// Table rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "method,value_train,se_train,value_holdout,se_holdout,elapsed_secs,evaluations,converged\n",
        );
        for r in &self.methods {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                r.value_train,
                r.se_train,
                r.value_holdout,
                r.se_holdout,
                r.elapsed_secs,
                r.evaluations,
                r.converged
            ));
        }
        s
    }

    /// Dot-chart data: one labeled value per method (training panel),
    /// plus the dataset max when present.
    pub fn to_plot_csv(&self) -> String {
        let mut s = String::from("label,value\n");
        for r in &self.methods {
            s.push_str(&format!("{},{}\n", r.method, r.value_train));
        }
        if let Some(max) = &self.dataset_max {
            s.push_str(&format!("dataset_max,{}\n", max.value));
        }
        s
    }

    /// The row for a method, if it ran.
    pub fn method(&self, name: &str) -> Option<&MethodRow> {
        self.methods.iter().find(|r| r.method == name)
    }
}

// ---------------------------------------------------------------------------
// One-shot operations
// ---------------------------------------------------------------------------

/// Run the full pipeline in `out` and return the report.
pub fn run_pipeline(cfg: &RunConfig, out: &Path) -> Result<Report> {
    PipelineContext::open(cfg.clone(), out)?.run()
}

/// Monte Carlo objective of a stored graph under a scenario: returns
/// `(value, standard error)` on a fresh panel of `n` rows from `seed`.
pub fn evaluate_graph(
    graph: &Graph,
    scenario: &Scenario,
    spec: &ObjectiveSpec,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let panel = sample_pvalues(scenario, n, seed);
    crate::objective::objective_with_se_on_panel(graph, &panel, spec)
}

/// Run the pipeline plus every baseline and return the comparison report.
/// This is [`run_pipeline`] with all baselines forced on.
pub fn compare_methods(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mut cfg = cfg.clone();
    cfg.baselines.isres = true;
    cfg.baselines.brute_force = true;
    if cfg.baselines.refine_only_starts == 0 {
        cfg.baselines.refine_only_starts = 1;
    }
    run_pipeline(&cfg, out)
}
