//! Run configuration files (TOML).
//!
//! ```toml
//! seed = 0
//!
//! [model]
//! input_shape = [1, 28, 28]
//! layers = [
//!     { kind = "conv2d", out_channels = 16, in_channels = 1, kernel_h = 5, kernel_w = 5 },
//!     { kind = "relu" },
//!     { kind = "flatten" },
//!     { kind = "fully_connected", out_features = 10, in_features = 9216 },
//! ]
//!
//! [data]
//! kind = "mnist"            # mnist | cifar10 | blobs
//! path = "data/mnist"
//!
//! [privacy]
//! epsilon = 3.0             # or: sigma = 1.1
//! delta = 1e-5
//!
//! [training]
//! epochs = 20               # or: steps = 300
//! batch_size = 512
//! learning_rate = 3.0
//! clip_norm = 1.0
//!
//! [prune]
//! criterion = "synflow"     # none | random | synflow | dp_snip
//! rate = 0.5
//!
//! [drop]
//! criterion = "random"      # random | magnitude
//! rate = 0.8
//! ```
//!
//! Every violation is reported with its field path; parsing does not stop at
//! the first one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::autodiff::{LayerSpec, ModelSpec};
use crate::data::{BatchMode, Normalization};
use crate::error::{DpError, Result, SchemaError};
use crate::graddrop::{DropCriterion, DropPolicy, DropScope};
use crate::prepruning::PruneCriterion;
use crate::trainer::{NoiseSpec, PruneSpec, TrainConfig};

/// Default share of `ε` given to a DP-SNIP query.
pub const DEFAULT_EPS_PP_SHARE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Directory holding `train-*` and `t10k-*` IDX files.
    Mnist { path: PathBuf },
    /// CIFAR-10 binary batch files.
    Cifar10 {
        train: Vec<PathBuf>,
        test: Option<PathBuf>,
    },
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        margin: f64,
        spread: f64,
        test_per_class: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    /// Fixed normalization constants. They must not be derived from the
    /// private training data.
    pub normalize: Option<Normalization>,
    /// Use only the first `limit` training examples.
    pub limit: Option<usize>,
    /// Hold out the last `n` training examples as a separate DP-SNIP set.
    pub prune_holdout: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duration {
    Steps(u64),
    Epochs(f64),
}

impl Duration {
    /// Step count for a training set of `n` examples and batch size `b`.
    pub fn steps(&self, n: usize, b: usize) -> u64 {
        match *self {
            Duration::Steps(s) => s,
            Duration::Epochs(e) => ((e * n as f64 / b as f64).round() as u64).max(1),
        }
    }
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub model: ModelSpec,
    pub data: DataConfig,
    pub noise: NoiseSpec,
    pub delta: f64,
    pub duration: Duration,
    pub batch_size: usize,
    pub batch_mode: BatchMode,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub eval_every: Option<u64>,
    pub prune: PruneSpec,
    pub drop: DropPolicy,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DpError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Parses `text`; relative data paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            DpError::Schema(vec![SchemaError::new("<file>", e.message())])
        })?;
        Self::from_table(&table, base)
    }

    pub fn from_table(table: &Table, base: &Path) -> Result<Self> {
        let mut errs = Vec::new();
        let cfg = build(table, base, &mut errs);
        match cfg {
            Some(c) if errs.is_empty() => Ok(c),
            _ => Err(DpError::Schema(errs)),
        }
    }

    /// Trainer settings for a training set of `n_train` examples.
    pub fn train_config(&self, n_train: usize) -> TrainConfig {
        TrainConfig {
            noise: self.noise,
            delta: self.delta,
            clip_norm: self.clip_norm,
            prune: self.prune,
            drop: self.drop,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            batch_mode: self.batch_mode,
            steps: self.duration.steps(n_train, self.batch_size),
            eval_every: self.eval_every,
            seed: self.seed,
        }
    }
}

/// Typed access to one TOML table, collecting errors under a path prefix.
struct Fields<'a> {
    table: &'a Table,
    prefix: String,
    used: Vec<&'static str>,
}

impl<'a> Fields<'a> {
    fn new(table: &'a Table, prefix: &str) -> Self {
        Self {
            table,
            prefix: prefix.to_string(),
            used: Vec::new(),
        }
    }

    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.push(key);
        self.table.get(key)
    }

    fn opt<T>(
        &mut self,
        key: &'static str,
        errs: &mut Vec<SchemaError>,
        what: &str,
        conv: impl Fn(&'a Value) -> Option<T>,
    ) -> Option<T> {
        let v = self.get(key)?;
        let out = conv(v);
        if out.is_none() {
            errs.push(SchemaError::new(
                self.path(key),
                format!("expected {what}, found {}", v.type_str()),
            ));
        }
        out
    }

    fn req<T>(
        &mut self,
        key: &'static str,
        errs: &mut Vec<SchemaError>,
        what: &str,
        conv: impl Fn(&'a Value) -> Option<T>,
    ) -> Option<T> {
        if !self.table.contains_key(key) {
            self.used.push(key);
            errs.push(SchemaError::new(self.path(key), "missing required field"));
            return None;
        }
        self.opt(key, errs, what, conv)
    }

    fn float(&mut self, key: &'static str, errs: &mut Vec<SchemaError>) -> Option<f64> {
        self.opt(key, errs, "a number", as_f64)
    }

    fn count(&mut self, key: &'static str, errs: &mut Vec<SchemaError>) -> Option<usize> {
        self.opt(key, errs, "a nonnegative integer", as_usize)
    }

    fn sub(&mut self, key: &'static str, errs: &mut Vec<SchemaError>) -> Option<Fields<'a>> {
        let path = self.path(key);
        self.opt(key, errs, "a table", |v| v.as_table())
            .map(|t| Fields::new(t, &path))
    }

    fn choice<T: for<'de> Deserialize<'de>>(
        &mut self,
        key: &'static str,
        errs: &mut Vec<SchemaError>,
        options: &str,
    ) -> Option<T> {
        let v = self.get(key)?;
        match v
            .as_str()
            .map(|s| T::deserialize(Value::String(s.to_string())))
        {
            Some(Ok(x)) => Some(x),
            _ => {
                errs.push(SchemaError::new(
                    self.path(key),
                    format!("expected one of {options}, found {v}"),
                ));
                None
            }
        }
    }

    /// Reports keys that were never read.
    fn finish(self, errs: &mut Vec<SchemaError>) {
        for key in self.table.keys() {
            if !self.used.contains(&key.as_str()) {
                errs.push(SchemaError::new(self.path(key), "unknown field"));
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

fn as_usize(v: &Value) -> Option<usize> {
    v.as_integer().and_then(|i| usize::try_from(i).ok())
}

fn check(errs: &mut Vec<SchemaError>, ok: bool, path: &str, message: impl Into<String>) {
    if !ok {
        errs.push(SchemaError::new(path, message));
    }
}

fn build(table: &Table, base: &Path, errs: &mut Vec<SchemaError>) -> Option<RunConfig> {
    let mut top = Fields::new(table, "");
    let seed = top.opt("seed", errs, "a nonnegative integer", |v| {
        v.as_integer().and_then(|i| u64::try_from(i).ok())
    });
    let output_dir = top.opt("output_dir", errs, "a string", |v| {
        v.as_str().map(PathBuf::from)
    });
    let threads = top.count("threads", errs);
    check(errs, threads != Some(0), "threads", "must be >= 1");

    let model = top.sub("model", errs).map(|f| model_section(f, errs));
    if !table.contains_key("model") {
        errs.push(SchemaError::new("model", "missing required section"));
    }
    let data = match top.sub("data", errs) {
        Some(f) => data_section(f, base, errs),
        None => {
            if !table.contains_key("data") {
                errs.push(SchemaError::new("data", "missing required section"));
            }
            None
        }
    };

    let (noise, delta) = match top.sub("privacy", errs) {
        Some(f) => privacy_section(f, errs),
        None => {
            if !table.contains_key("privacy") {
                errs.push(SchemaError::new("privacy", "missing required section"));
            }
            (None, None)
        }
    };

    let training = match top.sub("training", errs) {
        Some(f) => training_section(f, errs),
        None => {
            if !table.contains_key("training") {
                errs.push(SchemaError::new("training", "missing required section"));
            }
            None
        }
    };

    let total_eps = match noise {
        Some(NoiseSpec::Budget { epsilon }) => Some(epsilon),
        _ => None,
    };
    let prune = match top.sub("prune", errs) {
        Some(f) => prune_section(f, total_eps, delta.unwrap_or(1e-5), errs),
        None => Some(PruneSpec {
            delta: delta.unwrap_or(1e-5),
            ..PruneSpec::default()
        }),
    };
    let drop = match top.sub("drop", errs) {
        Some(f) => drop_section(f, errs),
        None => Some(DropPolicy {
            criterion: DropCriterion::Random,
            rate: 0.0,
            scope: DropScope::PerLayer,
        }),
    };
    top.finish(errs);

    if let (Some(p), Some(d)) = (&prune, &data) {
        check(
            errs,
            p.criterion == PruneCriterion::DpSnip || d.prune_holdout.is_none(),
            "data.prune_holdout",
            "only used by prune.criterion = \"dp_snip\"",
        );
    }

    let t = training?;
    Some(RunConfig {
        seed: seed.unwrap_or(0),
        output_dir,
        threads,
        model: model??,
        data: data?,
        noise: noise?,
        delta: delta?,
        duration: t.duration,
        batch_size: t.batch_size,
        batch_mode: t.batch_mode,
        learning_rate: t.learning_rate,
        clip_norm: t.clip_norm,
        eval_every: t.eval_every,
        prune: prune?,
        drop: drop?,
    })
}

fn model_section(mut f: Fields, errs: &mut Vec<SchemaError>) -> Option<ModelSpec> {
    let input_shape = f.req("input_shape", errs, "an array of positive integers", |v| {
        v.as_array()?
            .iter()
            .map(as_usize)
            .collect::<Option<Vec<_>>>()
    });
    let layer_values = f.req("layers", errs, "an array of layer tables", |v| {
        v.as_array().cloned()
    });
    let path = f.path("layers");
    f.finish(errs);
    let mut layers = Vec::new();
    for (i, v) in layer_values.unwrap_or_default().into_iter().enumerate() {
        match LayerSpec::deserialize(v) {
            Ok(l) => layers.push(l),
            Err(e) => errs.push(SchemaError::new(
                format!("{path}[{i}]"),
                e.to_string().trim(),
            )),
        }
    }
    let spec = ModelSpec {
        input_shape: input_shape?,
        layers,
    };
    if let Err(e) = spec.activation_shapes() {
        errs.push(SchemaError::new("model", e.to_string()));
        return None;
    }
    Some(spec)
}

fn data_section(mut f: Fields, base: &Path, errs: &mut Vec<SchemaError>) -> Option<DataConfig> {
    let kind: Option<String> = f.req("kind", errs, "a string", |v| v.as_str().map(String::from));
    let resolve = |p: &str| base.join(p);
    let source = match kind.as_deref() {
        Some("mnist") => f
            .req("path", errs, "a string", |v| v.as_str().map(resolve))
            .map(|path| DataSource::Mnist { path }),
        Some("cifar10") => {
            let train = f.req("train", errs, "an array of file paths", |v| {
                v.as_array()?
                    .iter()
                    .map(|p| p.as_str().map(resolve))
                    .collect::<Option<Vec<_>>>()
            });
            let test = f.opt("test", errs, "a string", |v| v.as_str().map(resolve));
            if let Some(t) = &train {
                check(
                    errs,
                    !t.is_empty(),
                    &f.path("train"),
                    "needs at least one file",
                );
            }
            train.map(|train| DataSource::Cifar10 { train, test })
        }
        Some("blobs") => {
            let classes = f.req("classes", errs, "a positive integer", as_usize);
            let per_class = f.req("per_class", errs, "a positive integer", as_usize);
            let dim = f.req("dim", errs, "a positive integer", as_usize);
            let margin = f.float("margin", errs).unwrap_or(4.0);
            let spread = f.float("spread", errs).unwrap_or(1.0);
            let test_per_class = f.count("test_per_class", errs).unwrap_or(0);
            for (key, v) in [("classes", classes), ("per_class", per_class), ("dim", dim)] {
                check(errs, v != Some(0), &f.path(key), "must be >= 1");
            }
            check(
                errs,
                margin > 0.0 && spread >= 0.0,
                &f.path("margin"),
                "margin must be > 0 and spread >= 0",
            );
            Some(DataSource::Blobs {
                classes: classes?,
                per_class: per_class?,
                dim: dim?,
                margin,
                spread,
                test_per_class,
            })
        }
        Some(other) => {
            errs.push(SchemaError::new(
                f.path("kind"),
                format!("expected one of mnist, cifar10, blobs, found {other:?}"),
            ));
            None
        }
        None => None,
    };
    let normalize = f.sub("normalize", errs).and_then(|mut n| {
        let nums = |v: &Value| v.as_array()?.iter().map(as_f64).collect::<Option<Vec<_>>>();
        let mean = n.req("mean", errs, "an array of numbers", nums);
        let std = n.req("std", errs, "an array of numbers", nums);
        let path = n.prefix.clone();
        n.finish(errs);
        let (mean, std) = (mean?, std?);
        check(
            errs,
            mean.len() == std.len() && !mean.is_empty(),
            &path,
            "mean and std need one entry per channel",
        );
        check(
            errs,
            std.iter().all(|&s| s > 0.0),
            &format!("{path}.std"),
            "must be > 0",
        );
        Some(Normalization { mean, std })
    });
    let limit = f.count("limit", errs);
    let prune_holdout = f.count("prune_holdout", errs);
    check(errs, limit != Some(0), &f.path("limit"), "must be >= 1");
    check(
        errs,
        prune_holdout != Some(0),
        &f.path("prune_holdout"),
        "must be >= 1",
    );
    f.finish(errs);
    Some(DataConfig {
        source: source?,
        normalize,
        limit,
        prune_holdout,
    })
}

fn privacy_section(mut f: Fields, errs: &mut Vec<SchemaError>) -> (Option<NoiseSpec>, Option<f64>) {
    let epsilon = f.float("epsilon", errs);
    let sigma = f.float("sigma", errs);
    let delta = f.req("delta", errs, "a number", as_f64);
    let noise = match (epsilon, sigma) {
        (Some(e), None) => {
            check(
                errs,
                e > 0.0 && e.is_finite(),
                &f.path("epsilon"),
                "must be > 0",
            );
            Some(NoiseSpec::Budget { epsilon: e })
        }
        (None, Some(s)) => {
            check(
                errs,
                s >= 0.0 && s.is_finite(),
                &f.path("sigma"),
                "must be >= 0",
            );
            Some(NoiseSpec::Sigma(s))
        }
        (Some(_), Some(_)) => {
            errs.push(SchemaError::new(
                f.path("sigma"),
                "give either epsilon or sigma, not both",
            ));
            None
        }
        (None, None) => {
            errs.push(SchemaError::new(
                f.path("epsilon"),
                "one of epsilon or sigma is required",
            ));
            None
        }
    };
    if let Some(d) = delta {
        check(
            errs,
            d > 0.0 && d < 1.0,
            &f.path("delta"),
            "must be in (0, 1)",
        );
    }
    f.finish(errs);
    (noise, delta)
}

struct Training {
    duration: Duration,
    batch_size: usize,
    batch_mode: BatchMode,
    learning_rate: f64,
    clip_norm: f64,
    eval_every: Option<u64>,
}

fn training_section(mut f: Fields, errs: &mut Vec<SchemaError>) -> Option<Training> {
    let steps = f.count("steps", errs);
    let epochs = f.float("epochs", errs);
    let duration = match (steps, epochs) {
        (Some(s), None) if s > 0 => Some(Duration::Steps(s as u64)),
        (None, Some(e)) if e > 0.0 => Some(Duration::Epochs(e)),
        (Some(_), Some(_)) => {
            errs.push(SchemaError::new(
                f.path("epochs"),
                "give either steps or epochs, not both",
            ));
            None
        }
        (None, None) => {
            errs.push(SchemaError::new(
                f.path("steps"),
                "one of steps or epochs is required",
            ));
            None
        }
        (Some(_), None) => {
            errs.push(SchemaError::new(f.path("steps"), "must be >= 1"));
            None
        }
        (None, Some(_)) => {
            errs.push(SchemaError::new(f.path("epochs"), "must be > 0"));
            None
        }
    };
    let batch_size = f.req("batch_size", errs, "a positive integer", as_usize);
    check(
        errs,
        batch_size != Some(0),
        &f.path("batch_size"),
        "must be >= 1",
    );
    let batch_mode = f
        .choice("batch_mode", errs, "poisson, fixed")
        .unwrap_or_default();
    let learning_rate = f.req("learning_rate", errs, "a number", as_f64);
    if let Some(lr) = learning_rate {
        check(
            errs,
            lr > 0.0 && lr.is_finite(),
            &f.path("learning_rate"),
            "must be > 0",
        );
    }
    let clip_norm = f.req("clip_norm", errs, "a number", as_f64);
    if let Some(c) = clip_norm {
        check(errs, c > 0.0, &f.path("clip_norm"), "must be > 0");
    }
    let eval_every = f.count("eval_every", errs);
    check(
        errs,
        eval_every != Some(0),
        &f.path("eval_every"),
        "must be >= 1",
    );
    f.finish(errs);
    Some(Training {
        duration: duration?,
        batch_size: batch_size?,
        batch_mode,
        learning_rate: learning_rate?,
        clip_norm: clip_norm?,
        eval_every: eval_every.map(|e| e as u64),
    })
}

fn rate_ok(errs: &mut Vec<SchemaError>, path: String, rate: Option<f64>) -> f64 {
    let r = rate.unwrap_or(0.0);
    check(
        errs,
        (0.0..1.0).contains(&r),
        &path,
        format!("must be in [0, 1), got {r}"),
    );
    r
}

fn prune_section(
    mut f: Fields,
    total_eps: Option<f64>,
    delta: f64,
    errs: &mut Vec<SchemaError>,
) -> Option<PruneSpec> {
    let criterion: PruneCriterion = f
        .choice("criterion", errs, "none, random, synflow, dp_snip")
        .unwrap_or_default();
    let rate_path = f.path("rate");
    let rate = f.float("rate", errs);
    let rate = rate_ok(errs, rate_path, rate);
    check(
        errs,
        criterion != PruneCriterion::None || rate == 0.0,
        &f.path("criterion"),
        "a nonzero rate needs a criterion",
    );
    let rounds = f.count("rounds", errs).unwrap_or(100);
    check(errs, rounds >= 1, &f.path("rounds"), "must be >= 1");
    let clip_norm = f.float("clip_norm", errs).unwrap_or(1.0);
    check(errs, clip_norm > 0.0, &f.path("clip_norm"), "must be > 0");
    let epsilon = f.float("epsilon", errs);
    let prune_delta = f.float("delta", errs).unwrap_or(delta);
    check(
        errs,
        prune_delta > 0.0 && prune_delta < 1.0,
        &f.path("delta"),
        "must be in (0, 1)",
    );
    let epsilon = match (criterion, epsilon, total_eps) {
        (PruneCriterion::DpSnip, Some(e), total) => {
            check(errs, e > 0.0, &f.path("epsilon"), "must be > 0");
            if let Some(t) = total {
                check(
                    errs,
                    e < t,
                    &f.path("epsilon"),
                    format!("must be below privacy.epsilon = {t}"),
                );
            }
            e
        }
        (PruneCriterion::DpSnip, None, Some(t)) => DEFAULT_EPS_PP_SHARE * t,
        (PruneCriterion::DpSnip, None, None) => {
            errs.push(SchemaError::new(
                f.path("epsilon"),
                "required for dp_snip when privacy.sigma is given",
            ));
            0.0
        }
        (_, Some(_), _) => {
            errs.push(SchemaError::new(
                f.path("epsilon"),
                "only used by criterion = \"dp_snip\"",
            ));
            0.0
        }
        (_, None, _) => 0.0,
    };
    f.finish(errs);
    Some(PruneSpec {
        criterion,
        rate,
        rounds,
        clip_norm,
        epsilon,
        delta: prune_delta,
    })
}

fn drop_section(mut f: Fields, errs: &mut Vec<SchemaError>) -> Option<DropPolicy> {
    let criterion = f
        .choice("criterion", errs, "random, magnitude")
        .unwrap_or_default();
    let rate_path = f.path("rate");
    let rate = f.float("rate", errs);
    let rate = rate_ok(errs, rate_path, rate);
    let scope = f
        .choice("scope", errs, "per_layer, global")
        .unwrap_or_default();
    f.finish(errs);
    Some(DropPolicy {
        criterion,
        rate,
        scope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 3
        [model]
        input_shape = [4]
        layers = [
            { kind = "fully_connected", out_features = 3, in_features = 4 },
        ]
        [data]
        kind = "blobs"
        classes = 3
        per_class = 20
        dim = 4
        [privacy]
        epsilon = 2.0
        delta = 1e-5
        [training]
        steps = 10
        batch_size = 8
        learning_rate = 0.5
        clip_norm = 1.0
    "#;

    fn paths(err: DpError) -> Vec<String> {
        match err {
            DpError::Schema(v) => v.into_iter().map(|e| e.path).collect(),
            other => panic!("expected schema error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = RunConfig::parse(MINIMAL, Path::new("")).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.prune.criterion, PruneCriterion::None);
        assert_eq!(c.drop.rate, 0.0);
        assert_eq!(c.batch_mode, BatchMode::Poisson);
        assert_eq!(c.train_config(60).steps, 10);
    }

    #[test]
    fn dp_snip_gets_default_share() {
        let text = format!("{MINIMAL}\n[prune]\ncriterion = \"dp_snip\"\nrate = 0.3\n");
        let c = RunConfig::parse(&text, Path::new("")).unwrap();
        assert!((c.prune.epsilon - 0.2).abs() < 1e-15);
        assert_eq!(c.prune.delta, 1e-5);
    }

    #[test]
    fn errors_name_every_field() {
        let text = MINIMAL
            .replace("batch_size = 8", "batch_size = -8\nbogus = 1")
            .replace("epsilon = 2.0", "epsilon = 2.0\nsigma = 1.0")
            .replace("kind = \"fully_connected\"", "kind = \"dense\"");
        let p = paths(RunConfig::parse(&text, Path::new("")).unwrap_err());
        for want in [
            "training.batch_size",
            "training.bogus",
            "privacy.sigma",
            "model.layers[0]",
        ] {
            assert!(p.iter().any(|x| x == want), "{want} missing from {p:?}");
        }
    }

    #[test]
    fn missing_dataset_path_is_named() {
        let text = MINIMAL.replace(
            "kind = \"blobs\"\n        classes = 3\n        per_class = 20\n        dim = 4",
            "kind = \"mnist\"",
        );
        assert_eq!(
            paths(RunConfig::parse(&text, Path::new("")).unwrap_err()),
            vec!["data.path"]
        );
    }

    #[test]
    fn rates_must_be_below_one() {
        let text = format!("{MINIMAL}\n[drop]\nrate = 1.0\n");
        assert_eq!(
            paths(RunConfig::parse(&text, Path::new("")).unwrap_err()),
            vec!["drop.rate"]
        );
    }

    #[test]
    fn epochs_convert_to_steps() {
        assert_eq!(Duration::Epochs(2.0).steps(1000, 100), 20);
        assert_eq!(Duration::Epochs(0.01).steps(10, 100), 1);
    }

    #[test]
    fn relative_paths_follow_config_location() {
        let text = MINIMAL.replace(
            "kind = \"blobs\"\n        classes = 3\n        per_class = 20\n        dim = 4",
            "kind = \"mnist\"\n        path = \"mnist\"",
        );
        let c = RunConfig::parse(&text, Path::new("/cfg")).unwrap();
        assert_eq!(
            c.data.source,
            DataSource::Mnist {
                path: PathBuf::from("/cfg/mnist")
            }
        );
    }
}
