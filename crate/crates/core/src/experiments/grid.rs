//! Hyperparameter grids, resumable parallel execution, and per-split
//! model selection.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::OptimizerKind;
use super::stats::mean_std;
use super::train::{train_model, TrainSpec};
use crate::data::{Dataset, SplitSet};
use crate::error::{Error, Result};
use crate::layers::{ModelConfig, ModelKind, Propagation};
use crate::numerics::Activation;

/// Lists of candidate values. Every combination is one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub model: Option<ModelKind>,
    pub depth: Vec<usize>,
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Vec<Activation>,
    #[serde(default = "zero")]
    pub p_input: Vec<f64>,
    #[serde(default = "zero")]
    pub p_layer: Vec<f64>,
    #[serde(default = "zero")]
    pub weight_decay: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_activation() -> Vec<Activation> {
    vec![Activation::Tanh]
}
fn zero() -> Vec<f64> {
    vec![0.0]
}
fn default_alpha() -> Vec<f64> {
    vec![0.1]
}
fn default_lambda() -> Vec<f64> {
    vec![1.0]
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}
fn default_lr() -> f64 {
    0.01
}
fn default_max_epochs() -> usize {
    1000
}
fn default_patience() -> usize {
    200
}

/// One expanded grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub id: usize,
    pub model: ModelConfig,
    pub train: TrainSpec,
}

impl GridSpec {
    /// Single-point grid with the synthetic training protocol.
    pub fn single(depth: usize, hidden: usize, activation: Activation) -> Self {
        Self {
            model: None,
            depth: vec![depth],
            hidden: vec![hidden],
            activation: vec![activation],
            p_input: zero(),
            p_layer: zero(),
            weight_decay: zero(),
            alpha: default_alpha(),
            lambda: default_lambda(),
            optimizer: default_optimizer(),
            lr: default_lr(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: 0,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })
    }

    /// Cartesian product in the order depth, hidden, activation,
    /// weight_decay, p_input, p_layer, alpha, lambda. `alpha` and `lambda`
    /// only vary for GCNII kinds.
    pub fn expand(&self, kind: ModelKind) -> Result<Vec<GridConfig>> {
        let lists: [(&str, usize); 8] = [
            ("depth", self.depth.len()),
            ("hidden", self.hidden.len()),
            ("activation", self.activation.len()),
            ("weight_decay", self.weight_decay.len()),
            ("p_input", self.p_input.len()),
            ("p_layer", self.p_layer.len()),
            ("alpha", self.alpha.len()),
            ("lambda", self.lambda.len()),
        ];
        if let Some((name, _)) = lists.iter().find(|(_, len)| *len == 0) {
            return Err(Error::Config(format!("grid list '{name}' is empty")));
        }
        let (alphas, lambdas) = if kind.is_gcnii() {
            (self.alpha.clone(), self.lambda.clone())
        } else {
            (vec![self.alpha[0]], vec![self.lambda[0]])
        };
        let mut out = Vec::new();
        for &depth in &self.depth {
            for &hidden in &self.hidden {
                for &activation in &self.activation {
                    for &weight_decay in &self.weight_decay {
                        for &p_input in &self.p_input {
                            for &p_layer in &self.p_layer {
                                for &alpha in &alphas {
                                    for &lambda in &lambdas {
                                        let model = ModelConfig {
                                            p_input,
                                            p_layer,
                                            alpha,
                                            lambda,
                                            ..ModelConfig::new(kind, depth, hidden, activation)
                                        };
                                        model.validate()?;
                                        let train = TrainSpec {
                                            optimizer: self.optimizer,
                                            lr: self.lr,
                                            weight_decay,
                                            max_epochs: self.max_epochs,
                                            patience: self.patience,
                                            seed: self.seed,
                                        };
                                        train.validate()?;
                                        out.push(GridConfig {
                                            id: out.len(),
                                            model,
                                            train,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Seed of one (configuration, trial) cell, independent of scheduling.
pub fn cell_seed(base: u64, config_id: usize, trial: usize) -> u64 {
    let mut z = base ^ (config_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (trial as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One row of `results.csv`. Failed trials carry NaN accuracies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub dataset: String,
    pub model: ModelKind,
    pub config_id: usize,
    pub trial: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    pub epochs: usize,
    pub seconds: f64,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        !self.val_acc.is_finite()
    }
}

/// The configuration chosen for one split by validation accuracy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Selection {
    pub trial: usize,
    pub config_id: usize,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSummary {
    pub dataset: String,
    pub model: ModelKind,
    pub trials: usize,
    pub mean_val: f64,
    pub std_val: f64,
    pub mean_test: f64,
    pub std_test: f64,
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub configs: Vec<GridConfig>,
    /// Sorted by (config_id, trial).
    pub results: Vec<TrialResult>,
    pub selections: Vec<Selection>,
    pub summary: GridSummary,
    /// Highest mean validation accuracy across trials.
    pub best_config: usize,
    /// Configurations whose every trial failed.
    pub excluded: Vec<usize>,
}

impl GridOutcome {
    pub fn test_accuracies(&self) -> Vec<f64> {
        self.selections.iter().map(|s| s.test_acc).collect()
    }

    pub fn best(&self) -> &GridConfig {
        &self.configs[self.best_config]
    }
}

#[derive(Clone, Debug, Default)]
pub struct GridOptions {
    pub workers: usize,
    /// Directory for `grid.json`, `results.csv`, `selection.csv` and
    /// `summary.csv`. Completed cells found there are not rerun.
    pub out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct GridManifest {
    dataset: String,
    model: ModelKind,
    trials: usize,
    configs: Vec<GridConfig>,
}

/// Runs every (configuration, trial) cell and selects per split.
pub fn grid_search(ds: &Dataset, splits: &SplitSet, kind: ModelKind, grid: &GridSpec, opts: &GridOptions) -> Result<GridOutcome> {
    if let Some(m) = grid.model {
        if m != kind {
            return Err(Error::Config(format!("grid declares model {m} but {kind} was requested")));
        }
    }
    let configs = grid.expand(kind)?;
    let results = run_cells(ds, splits, &configs, opts)?;
    let outcome = select(ds, kind, configs, results, splits.len())?;
    if let Some(dir) = &opts.out_dir {
        write_results(&dir.join("results.csv"), &outcome.results)?;
        write_selections(&dir.join("selection.csv"), &outcome.selections)?;
        write_summary(&dir.join("summary.csv"), std::slice::from_ref(&outcome.summary))?;
    }
    Ok(outcome)
}

/// Trains every configuration on every split. Results are sorted by
/// (config_id, trial) regardless of worker count.
pub fn run_cells(ds: &Dataset, splits: &SplitSet, configs: &[GridConfig], opts: &GridOptions) -> Result<Vec<TrialResult>> {
    if splits.is_empty() {
        return Err(Error::Config("no splits to train on".into()));
    }
    if configs.is_empty() {
        return Err(Error::Config("grid has no configurations".into()));
    }
    let kind = configs[0].model.kind;
    let mut done: BTreeMap<(usize, usize), TrialResult> = BTreeMap::new();
    let sink = match &opts.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let manifest = GridManifest {
                dataset: ds.name.clone(),
                model: kind,
                trials: splits.len(),
                configs: configs.to_vec(),
            };
            check_manifest(&dir.join("grid.json"), &manifest)?;
            let path = dir.join("results.csv");
            if path.exists() {
                for r in read_results(&path)? {
                    if r.dataset == ds.name && r.model == kind && r.config_id < configs.len() && r.trial < splits.len() {
                        done.insert((r.config_id, r.trial), r);
                    }
                }
                if !done.is_empty() {
                    log::info!("resuming: {} of {} cells already complete", done.len(), configs.len() * splits.len());
                }
            }
            Some(Mutex::new(ResultSink::open(&path)?))
        }
        None => None,
    };

    let prop = Propagation::new(&ds.graph);
    let pending: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..splits.len()).map(move |t| (c, t)))
        .filter(|key| !done.contains_key(key))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let fresh: Vec<Result<TrialResult>> = pool.install(|| {
        pending
            .par_iter()
            .map(|&(c, t)| {
                let cfg = &configs[c];
                let spec = TrainSpec {
                    seed: cell_seed(cfg.train.seed, c, t),
                    ..cfg.train.clone()
                };
                let row = match train_model(&cfg.model, &spec, ds, &prop, &splits.trials[t]) {
                    Ok(m) => TrialResult {
                        dataset: ds.name.clone(),
                        model: kind,
                        config_id: c,
                        trial: t,
                        val_acc: m.val_acc,
                        test_acc: m.test_acc,
                        epochs: m.epochs,
                        seconds: m.seconds,
                    },
                    Err(Error::Diverged { epoch }) => {
                        log::warn!("{kind} config {c} trial {t} diverged at epoch {epoch}");
                        TrialResult {
                            dataset: ds.name.clone(),
                            model: kind,
                            config_id: c,
                            trial: t,
                            val_acc: f64::NAN,
                            test_acc: f64::NAN,
                            epochs: epoch,
                            seconds: 0.0,
                        }
                    }
                    Err(e) => return Err(e),
                };
                log::debug!("{kind} config {c} trial {t}: val {:.4} test {:.4} ({} epochs)", row.val_acc, row.test_acc, row.epochs);
                if let Some(sink) = &sink {
                    sink.lock().map_err(|_| Error::Contract("result sink poisoned".into()))?.push(&row)?;
                }
                Ok(row)
            })
            .collect()
    });
    for row in fresh {
        let row = row?;
        done.insert((row.config_id, row.trial), row);
    }
    Ok(done.into_values().collect())
}

fn check_manifest(path: &Path, manifest: &GridManifest) -> Result<()> {
    if path.exists() {
        let existing: GridManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if existing != *manifest {
            return Err(Error::Config(format!(
                "{} describes a different grid; use a fresh output directory",
                path.display()
            )));
        }
        return Ok(());
    }
    fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

struct ResultSink {
    writer: csv::Writer<File>,
}

impl ResultSink {
    fn open(path: &Path) -> Result<Self> {
        let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            writer.write_record(RESULT_HEADER)?;
            writer.flush()?;
        }
        Ok(Self { writer })
    }

    fn push(&mut self, row: &TrialResult) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

const RESULT_HEADER: [&str; 8] = ["dataset", "model", "config_id", "trial", "val_acc", "test_acc", "epochs", "seconds"];

/// Reads `results.csv`. A truncated final line from an interrupted run is
/// skipped.
pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize::<TrialResult>() {
        match record {
            Ok(r) => rows.push(r),
            Err(e) => log::warn!("{}: skipping unreadable row ({e})", path.display()),
        }
    }
    Ok(rows)
}

/// Picks, for every split, the configuration with the highest validation
/// accuracy (lowest id on ties). Test accuracy is only reported.
pub fn select(ds: &Dataset, kind: ModelKind, configs: Vec<GridConfig>, results: Vec<TrialResult>, trials: usize) -> Result<GridOutcome> {
    let mut excluded = Vec::new();
    let mut best_config = None;
    let mut best_mean = f64::NEG_INFINITY;
    for cfg in &configs {
        let vals: Vec<f64> = results
            .iter()
            .filter(|r| r.config_id == cfg.id && !r.failed())
            .map(|r| r.val_acc)
            .collect();
        if vals.is_empty() {
            log::warn!("{kind} config {} failed on every trial and is excluded", cfg.id);
            excluded.push(cfg.id);
            continue;
        }
        let (mean, _) = mean_std(&vals);
        if mean > best_mean {
            best_mean = mean;
            best_config = Some(cfg.id);
        }
    }
    let best_config = best_config.ok_or_else(|| Error::Evaluation(format!("every {kind} configuration failed")))?;

    let mut selections = Vec::with_capacity(trials);
    for t in 0..trials {
        let chosen = results
            .iter()
            .filter(|r| r.trial == t && !r.failed())
            .fold(None::<&TrialResult>, |acc, r| match acc {
                Some(a) if a.val_acc > r.val_acc || (a.val_acc == r.val_acc && a.config_id <= r.config_id) => Some(a),
                _ => Some(r),
            });
        match chosen {
            Some(r) => selections.push(Selection {
                trial: t,
                config_id: r.config_id,
                val_acc: r.val_acc,
                test_acc: r.test_acc,
            }),
            None => log::warn!("{kind}: every configuration failed on trial {t}"),
        }
    }
    if selections.is_empty() {
        return Err(Error::Evaluation(format!("{kind}: no trial produced a usable result")));
    }
    let vals: Vec<f64> = selections.iter().map(|s| s.val_acc).collect();
    let tests: Vec<f64> = selections.iter().map(|s| s.test_acc).collect();
    let (mean_val, std_val) = mean_std(&vals);
    let (mean_test, std_test) = mean_std(&tests);
    Ok(GridOutcome {
        configs,
        results,
        selections,
        summary: GridSummary {
            dataset: ds.name.clone(),
            model: kind,
            trials: tests.len(),
            mean_val,
            std_val,
            mean_test,
            std_test,
        },
        best_config,
        excluded,
    })
}

fn atomic_csv(path: &Path, write: impl FnOnce(&mut csv::Writer<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("csv.partial");
    let mut w = csv::Writer::from_path(&tmp)?;
    write(&mut w)?;
    w.flush()?;
    drop(w);
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Rewrites `results.csv` in (config_id, trial) order.
pub fn write_results(path: &Path, rows: &[TrialResult]) -> Result<()> {
    atomic_csv(path, |w| {
        for r in rows {
            w.serialize(r)?;
        }
        Ok(())
    })
}

pub fn write_selections(path: &Path, rows: &[Selection]) -> Result<()> {
    atomic_csv(path, |w| {
        w.write_record(["trial", "config_id", "val_acc", "test_acc"])?;
        for s in rows {
            w.write_record([
                s.trial.to_string(),
                s.config_id.to_string(),
                format!("{:.4}", s.val_acc),
                format!("{:.4}", s.test_acc),
            ])?;
        }
        Ok(())
    })
}

/// Mean and standard deviation per (dataset, model), 4 decimals.
pub fn write_summary(path: &Path, rows: &[GridSummary]) -> Result<()> {
    atomic_csv(path, |w| {
        w.write_record(["dataset", "model", "trials", "mean_val", "std_val", "mean_test", "std_test"])?;
        for s in rows {
            w.write_record([
                s.dataset.clone(),
                s.model.name().to_string(),
                s.trials.to_string(),
                format!("{:.4}", s.mean_val),
                format!("{:.4}", s.std_val),
                format!("{:.4}", s.mean_test),
                format!("{:.4}", s.std_test),
            ])?;
        }
        Ok(())
    })
}
