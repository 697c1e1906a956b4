//! Experiment driver: single runs, grid sweeps, and checkpoint evaluation.
//!
//! A run directory holds `metrics.csv`, `final.ckpt` and `summary.txt`. A
//! sweep directory holds one run directory per cell under `cells/`, plus
//! `results.csv` (one row per cell and seed) and `aggregate.csv` (mean and
//! sample standard deviation over seeds).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Model, Tensor};
use crate::checkpoint::Checkpoint;
use crate::config::{DataConfig, DataSource, RunConfig};
use crate::data::{load_cifar10_binary, load_mnist_dir, synth_blobs_with, Dataset, Split};
use crate::error::{DpError, Result};
use crate::graddrop::DropCriterion;
use crate::prepruning::PruneCriterion;
use crate::trainer::{evaluate, MetricsRow, NoiseSpec, Trainer};

/// Environment variable that overrides every configured output directory.
pub const OUTPUT_DIR_ENV: &str = "DPSSGD_OUTPUT_DIR";

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "final.ckpt";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Training, optional DP-SNIP and test splits of a configured dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub prune: Option<Dataset>,
    pub test: Option<Dataset>,
}

fn concat(parts: Vec<Dataset>) -> Result<Dataset> {
    let first = parts
        .first()
        .ok_or_else(|| DpError::config("no data files"))?;
    let shape = first.sample_shape().to_vec();
    let classes = first.num_classes();
    let split = first.split();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for p in &parts {
        if p.sample_shape() != shape.as_slice() {
            return Err(DpError::Data("data files disagree on sample shape".into()));
        }
        data.extend_from_slice(p.images().data());
        labels.extend_from_slice(p.labels());
    }
    let mut full = vec![labels.len()];
    full.extend(shape);
    Dataset::new(Tensor::new(full, data)?, labels, classes, split)
}

fn rows(data: &Dataset, range: std::ops::Range<usize>, split: Split) -> Dataset {
    let idx: Vec<usize> = range.collect();
    let (images, labels) = data.batch(&idx);
    Dataset::new(images, labels, data.num_classes(), split)
        .expect("nonempty slice of a valid dataset")
}

/// Loads and preprocesses the datasets a config refers to.
pub fn load_splits(cfg: &DataConfig, seed: u64) -> Result<Splits> {
    let (mut train, mut test) = match &cfg.source {
        DataSource::Mnist { path } => (
            load_mnist_dir(path, Split::Train)?,
            Some(load_mnist_dir(path, Split::Test)?),
        ),
        DataSource::Cifar10 { train, test } => (
            concat(
                train
                    .iter()
                    .map(|p| load_cifar10_binary(p, Split::Train))
                    .collect::<Result<_>>()?,
            )?,
            test.as_ref()
                .map(|p| load_cifar10_binary(p, Split::Test))
                .transpose()?,
        ),
        DataSource::Blobs {
            classes,
            per_class,
            dim,
            margin,
            spread,
            test_per_class,
        } => {
            let all = synth_blobs_with(
                *classes,
                per_class + test_per_class,
                *dim,
                seed,
                *margin,
                *spread,
            )?;
            let n_train = classes * per_class;
            let test = (*test_per_class > 0).then(|| rows(&all, n_train..all.len(), Split::Test));
            (rows(&all, 0..n_train, Split::Train), test)
        }
    };
    if let Some(limit) = cfg.limit {
        train = train.head(limit);
    }
    let mut prune = None;
    if let Some(h) = cfg.prune_holdout {
        if h >= train.len() {
            return Err(DpError::config(format!(
                "data.prune_holdout = {h} leaves no training data ({} examples)",
                train.len()
            )));
        }
        let n = train.len() - h;
        prune = Some(rows(&train, n..train.len(), Split::Prune));
        train = rows(&train, 0..n, Split::Train);
    }
    if let Some(norm) = &cfg.normalize {
        train.normalize(norm.clone())?;
        if let Some(t) = &mut test {
            t.normalize(norm.clone())?;
        }
        if let Some(p) = &mut prune {
            p.normalize(norm.clone())?;
        }
    }
    Ok(Splits { train, prune, test })
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub test_acc: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub steps: u64,
    pub wall_clock_s: f64,
}

/// Output directory: the environment override wins, then the config's
/// `output_dir`, then `runs/<config file stem>`.
pub fn resolve_output_dir(config_path: &Path, configured: Option<&Path>) -> PathBuf {
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = configured {
        return dir.to_path_buf();
    }
    let stem = config_path.file_stem().unwrap_or_default();
    Path::new("runs").join(stem)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| DpError::io(dir, e))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| DpError::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(DpError::from))
        .collect()
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| DpError::Internal(format!("thread pool: {e}"))),
    }
}

/// Trains per `cfg` and writes the run directory `out`.
pub fn run_config(cfg: &RunConfig, out: &Path) -> Result<RunResult> {
    in_pool(cfg.threads, || run_in(cfg, out))?
}

fn run_in(cfg: &RunConfig, out: &Path) -> Result<RunResult> {
    let start = Instant::now();
    let splits = load_splits(&cfg.data, cfg.seed)?;
    let train_cfg = cfg.train_config(splits.train.len());
    let model = Model::new(cfg.model.clone(), cfg.seed)?;
    create_dir(out)?;
    let mut trainer = Trainer::new(
        train_cfg,
        model,
        &splits.train,
        splits.prune.as_ref(),
        splits.test.as_ref(),
    )?;
    if let Err(e) = trainer.run() {
        if let DpError::Diverged { dump, .. } = &e {
            dump.save(&out.join("diverged.ckpt"))?;
        }
        write_metrics(&out.join(METRICS_FILE), &trainer.state.metrics)?;
        return Err(e);
    }
    let state = &trainer.state;
    write_metrics(&out.join(METRICS_FILE), &state.metrics)?;
    trainer
        .checkpoint(cfg.data.normalize.clone())
        .save(&out.join(CHECKPOINT_FILE))?;
    let test_acc = match &splits.test {
        Some(t) => evaluate(&state.model, t)?,
        None => f64::NAN,
    };
    let epsilon = trainer.epsilon()?;
    let result = RunResult {
        test_acc,
        epsilon,
        delta: cfg.delta,
        sigma: state.sigma,
        steps: state.step,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    let summary = summary(cfg, &trainer, &result, splits.train.len());
    let path = out.join(SUMMARY_FILE);
    std::fs::write(&path, summary).map_err(|e| DpError::io(&path, e))?;
    Ok(result)
}

fn summary(cfg: &RunConfig, trainer: &Trainer, r: &RunResult, n_train: usize) -> String {
    let t = trainer.config();
    let report = trainer.prune_report();
    let acc = trainer.state.accountant.as_ref();
    let mut s = String::new();
    let _ = writeln!(s, "seed                 {}", cfg.seed);
    let _ = writeln!(
        s,
        "parameters           {}",
        trainer.state.model.num_params()
    );
    let _ = writeln!(s, "training examples    {n_train}");
    let _ = writeln!(s, "steps                {}", r.steps);
    let _ = writeln!(
        s,
        "batch                {} ({:?}, q = {})",
        t.batch_size,
        t.batch_mode,
        acc.map_or(f64::NAN, |a| a.q())
    );
    let _ = writeln!(s, "learning rate        {}", t.learning_rate);
    let _ = writeln!(s, "clip norm            {}", t.clip_norm);
    let _ = writeln!(
        s,
        "pre-pruning          {} at {} ({} weights removed)",
        report.criterion.name(),
        report.rate,
        report.pruned_total
    );
    for (layer, kept) in &report.retained_per_layer {
        let _ = writeln!(s, "  layer {layer:<3}           {kept} weights kept");
    }
    let _ = writeln!(
        s,
        "gradient dropping    {:?} at {} ({:?})",
        t.drop.criterion, t.drop.rate, t.drop.scope
    );
    let _ = writeln!(s, "test accuracy        {:.4}", r.test_acc);
    let _ = writeln!(s, "wall clock           {:.1} s", r.wall_clock_s);
    let _ = writeln!(s);
    let _ = writeln!(s, "privacy ledger");
    match report.sigma {
        Some(sp) => {
            let _ = writeln!(
                s,
                "  pre-pruning query  ε = {}, δ = {}, σ = {sp}",
                report.eps_spent, t.prune.delta
            );
        }
        None => {
            let _ = writeln!(s, "  pre-pruning query  none (ε = 0)");
        }
    }
    match acc {
        Some(a) => {
            let eps_gd = a.to_eps_delta(t.delta).unwrap_or(f64::NAN);
            let _ = writeln!(
                s,
                "  training           ε = {eps_gd}, δ = {}, σ = {}, {} steps at q = {}",
                t.delta,
                a.sigma(),
                a.steps(),
                a.q()
            );
            if t.batch_mode == crate::data::BatchMode::Fixed {
                let _ = writeln!(s, "  note               fixed-size batches accounted as Poisson sampling at q = B/N");
            }
        }
        None => {
            let _ = writeln!(s, "  training           no noise: no privacy guarantee");
        }
    }
    let delta_total = t.delta
        + if report.sigma.is_some() {
            t.prune.delta
        } else {
            0.0
        };
    let _ = writeln!(
        s,
        "  total              ε = {}, δ = {delta_total}",
        r.epsilon
    );
    if let NoiseSpec::Budget { epsilon } = t.noise {
        let _ = writeln!(s, "  target             ε = {epsilon}");
    }
    s
}

/// Grid of runs sharing a base config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Base run config, relative to the sweep file.
    pub base: PathBuf,
    pub pre_rates: Vec<f64>,
    pub drop_rates: Vec<f64>,
    #[serde(default = "default_pre_criteria")]
    pub pre_criteria: Vec<PruneCriterion>,
    #[serde(default = "default_drop_criteria")]
    pub drop_criteria: Vec<DropCriterion>,
    pub seeds: Vec<u64>,
    /// Cells trained concurrently.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_pre_criteria() -> Vec<PruneCriterion> {
    vec![PruneCriterion::Synflow]
}

fn default_drop_criteria() -> Vec<DropCriterion> {
    vec![DropCriterion::Random]
}

impl SweepSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DpError::io(path, e))?;
        let mut spec: SweepSpec = toml::from_str(&text).map_err(|e| {
            DpError::Schema(vec![crate::error::SchemaError::new("<sweep>", e.message())])
        })?;
        spec.base = path.parent().unwrap_or(Path::new("")).join(&spec.base);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::SchemaError;
        let mut errs = Vec::new();
        for (name, v) in [
            ("pre_rates", &self.pre_rates),
            ("drop_rates", &self.drop_rates),
        ] {
            if v.is_empty() {
                errs.push(SchemaError::new(name, "grid axis is empty"));
            }
            for (i, r) in v.iter().enumerate() {
                if !(0.0..1.0).contains(r) {
                    errs.push(SchemaError::new(
                        format!("{name}[{i}]"),
                        format!("must be in [0, 1), got {r}"),
                    ));
                }
            }
        }
        for (name, empty) in [
            ("pre_criteria", self.pre_criteria.is_empty()),
            ("drop_criteria", self.drop_criteria.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                errs.push(SchemaError::new(name, "grid axis is empty"));
            }
        }
        if self.workers == Some(0) {
            errs.push(SchemaError::new("workers", "must be >= 1"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(DpError::Schema(errs))
        }
    }

    /// The cells of the grid, seeds innermost.
    pub fn cells(&self, base: &RunConfig) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &pc in &self.pre_criteria {
            for &pp in &self.pre_rates {
                for &dc in &self.drop_criteria {
                    for &gd in &self.drop_rates {
                        for &seed in &self.seeds {
                            let mut c = base.clone();
                            c.seed = seed;
                            c.output_dir = None;
                            c.prune.criterion = if pp == 0.0 && pc != PruneCriterion::DpSnip {
                                PruneCriterion::None
                            } else {
                                pc
                            };
                            c.prune.rate = pp;
                            if c.prune.criterion == PruneCriterion::DpSnip && c.prune.epsilon == 0.0
                            {
                                if let NoiseSpec::Budget { epsilon } = c.noise {
                                    c.prune.epsilon = crate::config::DEFAULT_EPS_PP_SHARE * epsilon;
                                }
                            }
                            c.drop.criterion = dc;
                            c.drop.rate = gd;
                            out.push(c);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Stable identifier of a run config, used to name and skip finished cells.
pub fn cell_hash(cfg: &RunConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell: String,
    pub seed: u64,
    pub pre_criterion: String,
    pub pi_pp: f64,
    pub drop_criterion: String,
    pub pi_gd: f64,
    pub target_epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub steps: u64,
    pub test_acc: f64,
    pub final_epsilon: f64,
    pub wall_clock_s: f64,
    pub status: String,
    pub error: String,
}

/// One row of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub pre_criterion: String,
    pub pi_pp: f64,
    pub drop_criterion: String,
    pub pi_gd: f64,
    pub runs: usize,
    pub failed: usize,
    pub acc_mean: f64,
    pub acc_sd: f64,
    pub eps_mean: f64,
    pub eps_sd: f64,
}

fn drop_name(c: DropCriterion) -> &'static str {
    match c {
        DropCriterion::Random => "random",
        DropCriterion::Magnitude => "magnitude",
    }
}

fn result_row(cfg: &RunConfig, cell: &str, outcome: &Result<RunResult>) -> ResultRow {
    let (result, status, error) = match outcome {
        Ok(r) => (Some(r), "ok".to_string(), String::new()),
        Err(e) => (None, format!("failed:{}", e.category()), e.to_string()),
    };
    ResultRow {
        cell: cell.to_string(),
        seed: cfg.seed,
        pre_criterion: cfg.prune.criterion.name().to_string(),
        pi_pp: cfg.prune.rate,
        drop_criterion: drop_name(cfg.drop.criterion).to_string(),
        pi_gd: cfg.drop.rate,
        target_epsilon: match cfg.noise {
            NoiseSpec::Budget { epsilon } => epsilon,
            NoiseSpec::Sigma(_) => f64::NAN,
        },
        delta: cfg.delta,
        sigma: result.map_or(f64::NAN, |r| r.sigma),
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        clip_norm: cfg.clip_norm,
        steps: result.map_or(0, |r| r.steps),
        test_acc: result.map_or(f64::NAN, |r| r.test_acc),
        final_epsilon: result.map_or(f64::NAN, |r| r.epsilon),
        wall_clock_s: result.map_or(f64::NAN, |r| r.wall_clock_s),
        status,
        error,
    }
}

const CELL_RESULT: &str = "result.json";

fn run_cell(cfg: &RunConfig, dir: &Path) -> ResultRow {
    let cell = cell_hash(cfg);
    let cell_dir = dir.join("cells").join(&cell);
    let done = cell_dir.join(CELL_RESULT);
    if let Ok(bytes) = std::fs::read(&done) {
        if let Ok(row) = serde_json::from_slice::<ResultRow>(&bytes) {
            return row;
        }
    }
    let outcome = run_in(cfg, &cell_dir);
    let row = result_row(cfg, &cell, &outcome);
    // Failed cells are recorded but not marked done, so a rerun retries them.
    if outcome.is_ok() {
        let _ = std::fs::write(
            &done,
            serde_json::to_vec_pretty(&row).expect("row serializes"),
        );
    }
    row
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() < 2 {
        0.0
    } else {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, sd)
}

/// Per-cell mean and sample standard deviation over seeds, in first-seen
/// cell order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (
            r.pre_criterion.clone(),
            r.pi_pp.to_string(),
            r.drop_criterion.clone(),
            r.pi_gd.to_string(),
        );
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let ok: Vec<&&ResultRow> = g.iter().filter(|r| r.status == "ok").collect();
            let (acc_mean, acc_sd) = mean_sd(&ok.iter().map(|r| r.test_acc).collect::<Vec<_>>());
            let (eps_mean, eps_sd) =
                mean_sd(&ok.iter().map(|r| r.final_epsilon).collect::<Vec<_>>());
            AggregateRow {
                pre_criterion: g[0].pre_criterion.clone(),
                pi_pp: g[0].pi_pp,
                drop_criterion: g[0].drop_criterion.clone(),
                pi_gd: g[0].pi_gd,
                runs: g.len(),
                failed: g.len() - ok.len(),
                acc_mean,
                acc_sd,
                eps_mean,
                eps_sd,
            }
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| DpError::io(path, e))
}

/// Runs every cell of `spec` into `dir`. Cells whose result already exists
/// are skipped; failed cells are recorded and the sweep continues.
pub fn sweep(spec: &SweepSpec, dir: &Path) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let base = RunConfig::from_path(&spec.base)?;
    let cells = spec.cells(&base);
    create_dir(&dir.join("cells"))?;
    let rows: Vec<ResultRow> = match spec.workers {
        Some(w) if w > 1 => in_pool(Some(w), || {
            cells.par_iter().map(|c| run_cell(c, dir)).collect()
        })?,
        _ => in_pool(base.threads, || {
            cells.iter().map(|c| run_cell(c, dir)).collect()
        })?,
    };
    write_rows(&dir.join("results.csv"), &rows)?;
    write_rows(&dir.join("aggregate.csv"), &aggregate(&rows))?;
    Ok(rows)
}

/// Test accuracy of a checkpoint on a dataset: an MNIST directory (its
/// `t10k` split) or a CIFAR-10 binary batch file. The checkpoint's
/// normalization is applied.
pub fn eval_checkpoint(checkpoint: &Path, dataset: &Path) -> Result<f64> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    let mut data = if dataset.is_dir() {
        load_mnist_dir(dataset, Split::Test)?
    } else {
        load_cifar10_binary(dataset, Split::Test)?
    };
    if let Some(norm) = ck.normalization {
        data.normalize(norm)?;
    }
    evaluate(&model, &data)
}
