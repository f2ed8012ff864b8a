//! Run configuration: a line-oriented `key = value` file with `[section]`
//! headers. `#` starts a comment. Every key is validated; unknown keys are
//! errors that carry their line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::{Condition, Strategy, TrainConfig};
use crate::nn::{InitSpec, LayerClass, NetworkSpec};
use crate::optim::{LrSchedule, OptimizerKind};
use crate::pruning::{PruneConfig, PruneMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Iterative,
    OneShot,
    RandomBaseline,
    Controls,
    Analysis,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Iterative => "iterative",
            Kind::OneShot => "oneshot",
            Kind::RandomBaseline => "random-baseline",
            Kind::Controls => "controls",
            Kind::Analysis => "analysis",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// `train-images-idx3-ubyte` etc. in `dir`.
    Mnist { dir: PathBuf },
    /// `data_batch_{1..5}.bin` and `test_batch.bin` in `dir`.
    Cifar10 { dir: PathBuf },
    /// Gaussian clusters, optionally viewed as `[c, h, w]` images.
    Blobs {
        classes: usize,
        per_class: usize,
        test_per_class: usize,
        dims: usize,
        separation: f64,
        image_shape: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub validation: usize,
    pub split_seed: u64,
    /// Keep only these classes (relabelled in this order).
    pub classes: Option<Vec<usize>>,
    /// Integer block-averaging factor for image data.
    pub downsample: Option<usize>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkChoice {
    Preset(String),
    Mlp { hidden: Vec<usize> },
    Conv { modules: Vec<usize>, fc: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub choice: NetworkChoice,
    pub dropout: f64,
    pub init: InitSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: Kind,
    pub trials: u32,
    pub seed: u64,
    pub f32: bool,
    pub output: PathBuf,
    pub strategy: Strategy,
    pub rounds: u32,
    pub conditions: Vec<Condition>,
    /// Rounds whose tickets get controls; empty means every pruned round.
    pub control_rounds: Vec<u32>,
    pub control_reps: u32,
    /// Fractions of fully-connected weights removed by one-shot pruning.
    pub oneshot_targets: Vec<f64>,
    /// Per-layer keep fractions of the random baseline.
    pub random_keep: Vec<f64>,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub prune: PruneConfig,
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Raw {
    entries: BTreeMap<(String, String), Entry>,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

const SECTIONS: [&str; 5] = ["experiment", "data", "network", "train", "prune"];

impl Raw {
    fn parse(text: &str) -> Result<Raw> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(line, format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected 'key = value', got '{content}'")))?;
            let sec = section.clone().ok_or_else(|| err(line, "key before any [section]"))?;
            let key = key.trim().to_string();
            let entry = Entry {
                value: value.trim().to_string(),
                line,
                used: false,
            };
            if let Some(prev) = entries.insert((sec.clone(), key.clone()), entry) {
                return Err(err(line, format!("[{sec}] {key} already set on line {}", prev.line)));
            }
        }
        Ok(Raw { entries })
    }

    fn get(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(&(section.to_string(), key.to_string())).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn parse_opt<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| err(line, format!("[{section}] {key}: cannot parse '{v}'"))),
        }
    }

    fn parse_or<T: FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.parse_opt(section, key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| err(line, format!("[{section}] {key}: cannot parse '{s}'"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn line_of(&self, section: &str, key: &str) -> usize {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map_or(0, |e| e.line)
    }

    fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|(_, e)| !e.used) {
            Some(((sec, key), e)) => Err(err(e.line, format!("unknown key '{key}' in [{sec}]"))),
            None => Ok(()),
        }
    }
}

fn parse_kind(v: &str, line: usize) -> Result<Kind> {
    Ok(match v {
        "iterative" => Kind::Iterative,
        "oneshot" => Kind::OneShot,
        "random-baseline" => Kind::RandomBaseline,
        "controls" => Kind::Controls,
        "analysis" => Kind::Analysis,
        other => return Err(err(line, format!("unknown experiment kind '{other}'"))),
    })
}

fn opt_usize(raw: &mut Raw, section: &str, key: &str) -> Result<Option<usize>> {
    match raw.get(section, key) {
        None => Ok(None),
        Some((v, _)) if v == "all" => Ok(None),
        Some((v, line)) => v
            .parse()
            .map(Some)
            .map_err(|_| err(line, format!("[{section}] {key}: expected a count or 'all', got '{v}'"))),
    }
}

impl RunConfig {
    /// Parses and validates `text`. Relative output paths are kept as
    /// written; the caller resolves them.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut raw = Raw::parse(text)?;
        let r = &mut raw;

        let (kind_s, kind_line) = r
            .get("experiment", "kind")
            .ok_or_else(|| err(0, "[experiment] kind is required"))?;
        let kind = parse_kind(&kind_s, kind_line)?;
        let trials = r.parse_or("experiment", "trials", 1u32)?;
        let seed = r.parse_or("experiment", "seed", 0u64)?;
        let output: PathBuf = r.parse_or("experiment", "output", PathBuf::from("run"))?;
        let precision: String = r.parse_or("experiment", "precision", "f64".to_string())?;
        let f32 = match precision.as_str() {
            "f64" => false,
            "f32" => true,
            other => return Err(err(r.line_of("experiment", "precision"), format!("precision '{other}'"))),
        };
        let strategy = match r.parse_or("experiment", "strategy", "reset".to_string())?.as_str() {
            "reset" => Strategy::Reset,
            "continue" => Strategy::Continue,
            other => return Err(err(r.line_of("experiment", "strategy"), format!("strategy '{other}'"))),
        };
        let rounds = r.parse_or("experiment", "rounds", 1u32)?;
        let conditions: Vec<Condition> = r.list("experiment", "conditions")?.unwrap_or_default();
        let control_rounds = r.list("experiment", "control_rounds")?.unwrap_or_default();
        let control_reps = r.parse_or("experiment", "control_reps", 1u32)?;
        let oneshot_targets = r.list("experiment", "oneshot_targets")?.unwrap_or_default();
        let random_keep = r.list("experiment", "random_keep")?.unwrap_or_default();

        // [data]
        let (src, src_line) = r
            .get("data", "source")
            .ok_or_else(|| err(0, "[data] source is required"))?;
        let dir = |r: &mut Raw| -> Result<PathBuf> {
            r.parse_opt::<PathBuf>("data", "dir")?
                .ok_or_else(|| err(src_line, format!("[data] dir is required for source '{src}'")))
        };
        let source = match src.as_str() {
            "mnist" => DataSource::Mnist { dir: dir(r)? },
            "cifar10" => DataSource::Cifar10 { dir: dir(r)? },
            "blobs" => {
                let image_shape: Option<Vec<usize>> = r.list("data", "image_shape")?;
                let dims = match &image_shape {
                    Some(s) => s.iter().product(),
                    None => r.parse_or("data", "dims", 10usize)?,
                };
                DataSource::Blobs {
                    classes: r.parse_or("data", "classes_count", 2usize)?,
                    per_class: r.parse_or("data", "per_class", 200usize)?,
                    test_per_class: r.parse_or("data", "test_per_class", 100usize)?,
                    dims,
                    separation: r.parse_or("data", "separation", 4.0f64)?,
                    image_shape,
                }
            }
            other => return Err(err(src_line, format!("unknown data source '{other}'"))),
        };
        let default_validation = match &source {
            DataSource::Blobs { classes, per_class, .. } => classes * per_class / 5,
            _ => 5_000,
        };
        let data = DataConfig {
            validation: r.parse_or("data", "validation", default_validation)?,
            split_seed: r.parse_or("data", "split_seed", 0u64)?,
            classes: r.list("data", "classes")?,
            downsample: r.parse_opt("data", "downsample")?,
            train_limit: opt_usize(r, "data", "train_limit")?,
            test_limit: opt_usize(r, "data", "test_limit")?,
            source,
        };

        // [network]
        let preset: Option<String> = r.parse_opt("network", "preset")?;
        let hidden: Option<Vec<usize>> = r.list("network", "hidden")?;
        let modules: Option<Vec<usize>> = r.list("network", "conv")?;
        let fc: Option<Vec<usize>> = r.list("network", "fc")?;
        let net_line = r.line_of("network", "preset");
        let choice = match (preset, hidden, modules) {
            (Some(p), None, None) if fc.is_none() => {
                NetworkSpec::preset(&p).map_err(|e| err(net_line, e.to_string()))?;
                NetworkChoice::Preset(p)
            }
            (None, Some(hidden), None) if fc.is_none() => NetworkChoice::Mlp { hidden },
            (None, None, Some(modules)) => NetworkChoice::Conv {
                modules,
                fc: fc.unwrap_or_default(),
            },
            _ => {
                return Err(err(
                    net_line,
                    "[network] needs exactly one of: preset, hidden, or conv (+ fc)",
                ))
            }
        };
        let init = match r.parse_or("network", "init", "glorot".to_string())?.as_str() {
            "glorot" => InitSpec::GaussianGlorot,
            "gaussian" => {
                let std = r.parse_opt::<f64>("network", "init_std")?.ok_or_else(|| {
                    err(r.line_of("network", "init"), "gaussian init needs init_std")
                })?;
                InitSpec::Gaussian { std }
            }
            other => return Err(err(r.line_of("network", "init"), format!("init '{other}'"))),
        };
        let network = NetworkConfig {
            dropout: r.parse_or("network", "dropout", 0.0)?,
            init,
            choice,
        };
        let preset_name = match &network.choice {
            NetworkChoice::Preset(p) => Some(p.clone()),
            _ => None,
        };

        // [train]
        let mut train = match &preset_name {
            Some(p) => TrainConfig::for_preset(p).expect("preset validated above"),
            None => TrainConfig::adam(1e-3, 1_000),
        };
        let opt_line = r.line_of("train", "optimizer");
        let optimizer: Option<String> = r.parse_opt("train", "optimizer")?;
        let momentum: f64 = r.parse_or("train", "momentum", 0.9)?;
        match optimizer.as_deref() {
            None => {}
            Some("adam") => train.optimizer = OptimizerKind::ADAM,
            Some("sgd") => train.optimizer = OptimizerKind::Sgd,
            Some("momentum") => train.optimizer = OptimizerKind::Momentum { coefficient: momentum },
            Some(other) => return Err(err(opt_line, format!("optimizer '{other}'"))),
        }
        train.schedule = LrSchedule {
            base_rate: r.parse_or("train", "lr", train.schedule.base_rate)?,
            warmup_iters: r.parse_or("train", "warmup", 0u64)?,
            decay_at: r.list("train", "decay_at")?.unwrap_or_default(),
            decay_factor: r.parse_or("train", "decay_factor", 10.0)?,
        };
        if train.schedule.decay_at.is_empty() {
            train.schedule.decay_factor = 1.0;
        }
        train.batch_size = r.parse_or("train", "batch_size", train.batch_size)?;
        train.iterations = r.parse_or("train", "iterations", train.iterations)?;
        train.eval_interval = r.parse_or("train", "eval_interval", train.eval_interval)?;
        train.weight_decay = r.parse_or("train", "weight_decay", 0.0)?;
        if r.entries.contains_key(&("train".into(), "train_eval_size".into())) {
            train.train_eval_size = opt_usize(r, "train", "train_eval_size")?;
        }

        // [prune]
        let mut prune = match &preset_name {
            Some(p) => PruneConfig::for_preset(p, rounds).expect("preset validated above"),
            None => PruneConfig::layerwise(0.2, 0.1, rounds),
        };
        prune.rounds = rounds;
        let target: Option<f64> = r.parse_opt("prune", "target")?;
        if let Some(t) = target {
            let rate = PruneConfig::rate_for_target(t, rounds)
                .map_err(|e| err(r.line_of("prune", "target"), e.to_string()))?;
            prune.fc_rate = rate;
            prune.conv_rate = rate;
        }
        prune.fc_rate = r.parse_or("prune", "fc_rate", prune.fc_rate)?;
        prune.conv_rate = r.parse_or("prune", "conv_rate", prune.conv_rate)?;
        prune.output_rate = r.parse_or("prune", "output_rate", prune.fc_rate / 2.0)?;
        let mode_line = r.line_of("prune", "mode");
        match r.parse_or("prune", "mode", "layerwise".to_string())?.as_str() {
            "layerwise" => {}
            "global" => {
                let scope: Vec<String> = r.list("prune", "global_scope")?.unwrap_or_else(|| vec!["conv".into()]);
                let scope = scope
                    .iter()
                    .map(|s| match s.as_str() {
                        "conv" => Ok(LayerClass::Conv),
                        "fc" => Ok(LayerClass::Fc),
                        "output" => Ok(LayerClass::Output),
                        other => Err(err(r.line_of("prune", "global_scope"), format!("scope '{other}'"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let rate = r.parse_or("prune", "global_rate", prune.conv_rate)?;
                prune.mode = PruneMode::Global { scope, rate };
            }
            other => return Err(err(mode_line, format!("pruning mode '{other}'"))),
        }

        raw.finish()?;
        let cfg = RunConfig {
            kind,
            trials,
            seed,
            f32,
            output,
            strategy,
            rounds,
            conditions,
            control_rounds,
            control_reps,
            oneshot_targets,
            random_keep,
            data,
            network,
            train,
            prune,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(err(0, m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.rounds == 0 && matches!(self.kind, Kind::Iterative | Kind::Controls | Kind::Analysis) {
            return bad("rounds must be at least 1".into());
        }
        self.train.validate().or_else(|e| bad(e.to_string()))?;
        self.prune.validate().or_else(|e| bad(e.to_string()))?;
        if !(0.0..1.0).contains(&self.network.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.network.dropout));
        }
        if let InitSpec::Gaussian { std } = self.network.init {
            if !(std > 0.0 && std.is_finite()) {
                return bad(format!("init_std {std} must be positive"));
            }
        }
        match self.kind {
            Kind::Controls => {
                if self.conditions.is_empty() {
                    return bad("controls need [experiment] conditions".into());
                }
                if let Some(c) = self.conditions.iter().find(|c| {
                    matches!(c, Condition::Winning | Condition::OneShot | Condition::Continued)
                }) {
                    return bad(format!("{c} is not a control condition"));
                }
                if let Some(r) = self.control_rounds.iter().find(|&&r| r == 0 || r > self.rounds) {
                    return bad(format!("control round {r} outside 1..={}", self.rounds));
                }
                if self.control_reps == 0 {
                    return bad("control_reps must be at least 1".into());
                }
                if self.strategy != Strategy::Reset {
                    return bad("controls run on reset-strategy tickets".into());
                }
            }
            Kind::OneShot => {
                if self.oneshot_targets.is_empty() || self.oneshot_targets.iter().any(|t| !(0.0..1.0).contains(t)) {
                    return bad("oneshot_targets must be fractions in [0, 1)".into());
                }
            }
            Kind::RandomBaseline => {
                if self.random_keep.is_empty() || self.random_keep.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
                    return bad("random_keep must be fractions in (0, 1]".into());
                }
            }
            Kind::Iterative | Kind::Analysis => {}
        }
        Ok(())
    }

    /// Control rounds with the default (every pruned round) expanded.
    pub fn effective_control_rounds(&self) -> Vec<u32> {
        if self.control_rounds.is_empty() {
            (1..=self.rounds).collect()
        } else {
            self.control_rounds.clone()
        }
    }

    /// Canonical text of the effective configuration. Parsing it yields an
    /// identical `RunConfig`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[String]| v.join(", ");
        let nums = |v: Vec<String>| v.join(", ");
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "kind = {}", self.kind.name());
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "precision = {}", if self.f32 { "f32" } else { "f64" });
        let _ = writeln!(s, "output = {}", self.output.display());
        let _ = writeln!(
            s,
            "strategy = {}",
            match self.strategy {
                Strategy::Reset => "reset",
                Strategy::Continue => "continue",
            }
        );
        let _ = writeln!(s, "rounds = {}", self.rounds);
        if !self.conditions.is_empty() {
            let c: Vec<String> = self.conditions.iter().map(ToString::to_string).collect();
            let _ = writeln!(s, "conditions = {}", list(&c));
        }
        if !self.control_rounds.is_empty() {
            let _ = writeln!(s, "control_rounds = {}", nums(self.control_rounds.iter().map(ToString::to_string).collect()));
        }
        let _ = writeln!(s, "control_reps = {}", self.control_reps);
        if !self.oneshot_targets.is_empty() {
            let _ = writeln!(s, "oneshot_targets = {}", nums(self.oneshot_targets.iter().map(|v| format!("{v:?}")).collect()));
        }
        if !self.random_keep.is_empty() {
            let _ = writeln!(s, "random_keep = {}", nums(self.random_keep.iter().map(|v| format!("{v:?}")).collect()));
        }

        let d = &self.data;
        let _ = writeln!(s, "\n[data]");
        match &d.source {
            DataSource::Mnist { dir } => {
                let _ = writeln!(s, "source = mnist\ndir = {}", dir.display());
            }
            DataSource::Cifar10 { dir } => {
                let _ = writeln!(s, "source = cifar10\ndir = {}", dir.display());
            }
            DataSource::Blobs {
                classes,
                per_class,
                test_per_class,
                dims,
                separation,
                image_shape,
            } => {
                let _ = writeln!(s, "source = blobs");
                let _ = writeln!(s, "classes_count = {classes}");
                let _ = writeln!(s, "per_class = {per_class}");
                let _ = writeln!(s, "test_per_class = {test_per_class}");
                match image_shape {
                    Some(shape) => {
                        let _ = writeln!(s, "image_shape = {}", nums(shape.iter().map(ToString::to_string).collect()));
                    }
                    None => {
                        let _ = writeln!(s, "dims = {dims}");
                    }
                }
                let _ = writeln!(s, "separation = {separation:?}");
            }
        }
        let _ = writeln!(s, "validation = {}", d.validation);
        let _ = writeln!(s, "split_seed = {}", d.split_seed);
        if let Some(c) = &d.classes {
            let _ = writeln!(s, "classes = {}", nums(c.iter().map(ToString::to_string).collect()));
        }
        if let Some(f) = d.downsample {
            let _ = writeln!(s, "downsample = {f}");
        }
        let limit = |v: Option<usize>| v.map_or("all".to_string(), |n| n.to_string());
        let _ = writeln!(s, "train_limit = {}", limit(d.train_limit));
        let _ = writeln!(s, "test_limit = {}", limit(d.test_limit));

        let n = &self.network;
        let _ = writeln!(s, "\n[network]");
        match &n.choice {
            NetworkChoice::Preset(p) => {
                let _ = writeln!(s, "preset = {p}");
            }
            NetworkChoice::Mlp { hidden } => {
                let _ = writeln!(s, "hidden = {}", nums(hidden.iter().map(ToString::to_string).collect()));
            }
            NetworkChoice::Conv { modules, fc } => {
                let _ = writeln!(s, "conv = {}", nums(modules.iter().map(ToString::to_string).collect()));
                if !fc.is_empty() {
                    let _ = writeln!(s, "fc = {}", nums(fc.iter().map(ToString::to_string).collect()));
                }
            }
        }
        let _ = writeln!(s, "dropout = {:?}", n.dropout);
        match n.init {
            InitSpec::GaussianGlorot => {
                let _ = writeln!(s, "init = glorot");
            }
            InitSpec::Gaussian { std } => {
                let _ = writeln!(s, "init = gaussian\ninit_std = {std:?}");
            }
        }

        let t = &self.train;
        let _ = writeln!(s, "\n[train]");
        match t.optimizer {
            OptimizerKind::Sgd => {
                let _ = writeln!(s, "optimizer = sgd");
            }
            OptimizerKind::Momentum { coefficient } => {
                let _ = writeln!(s, "optimizer = momentum\nmomentum = {coefficient:?}");
            }
            OptimizerKind::Adam { .. } => {
                let _ = writeln!(s, "optimizer = adam");
            }
        }
        let _ = writeln!(s, "lr = {:?}", t.schedule.base_rate);
        let _ = writeln!(s, "warmup = {}", t.schedule.warmup_iters);
        if !t.schedule.decay_at.is_empty() {
            let _ = writeln!(s, "decay_at = {}", nums(t.schedule.decay_at.iter().map(ToString::to_string).collect()));
            let _ = writeln!(s, "decay_factor = {:?}", t.schedule.decay_factor);
        }
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "iterations = {}", t.iterations);
        let _ = writeln!(s, "eval_interval = {}", t.eval_interval);
        let _ = writeln!(s, "weight_decay = {:?}", t.weight_decay);
        let _ = writeln!(s, "train_eval_size = {}", limit(t.train_eval_size));

        let p = &self.prune;
        let _ = writeln!(s, "\n[prune]");
        let _ = writeln!(s, "fc_rate = {:?}", p.fc_rate);
        let _ = writeln!(s, "conv_rate = {:?}", p.conv_rate);
        let _ = writeln!(s, "output_rate = {:?}", p.output_rate);
        match &p.mode {
            PruneMode::Layerwise => {
                let _ = writeln!(s, "mode = layerwise");
            }
            PruneMode::Global { scope, rate } => {
                let sc: Vec<String> = scope
                    .iter()
                    .map(|c| match c {
                        LayerClass::Conv => "conv".to_string(),
                        LayerClass::Fc => "fc".to_string(),
                        LayerClass::Output => "output".to_string(),
                    })
                    .collect();
                let _ = writeln!(s, "mode = global\nglobal_scope = {}\nglobal_rate = {rate:?}", list(&sc));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[experiment]
kind = iterative   # comment
rounds = 2
[data]
source = blobs
[network]
hidden = 8
";

    #[test]
    fn minimal_config_and_round_trip() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.kind, Kind::Iterative);
        assert_eq!(c.rounds, 2);
        assert_eq!(c.prune.output_rate, 0.1);
        let again = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_text(), c.to_text());
    }

    #[test]
    fn presets_supply_defaults() {
        let c = RunConfig::parse(
            "[experiment]\nkind = controls\nrounds = 3\nconditions = reinit, noise-0.5\n\
             [data]\nsource = mnist\ndir = /x\n[network]\npreset = lenet-300-100\n\
             [train]\niterations = 25000\n",
        )
        .unwrap();
        assert_eq!(c.train.schedule.base_rate, 1.2e-3);
        assert_eq!(c.train.batch_size, 60);
        assert_eq!(c.train.iterations, 25_000);
        assert_eq!(c.prune.fc_rate, 0.2);
        assert_eq!(c.conditions, [Condition::Reinit, Condition::Noise(0.5)]);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    fn line_of_error(text: &str) -> usize {
        match RunConfig::parse(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of_error(&format!("{MINIMAL}bogus = 1\n")), 9);
        assert_eq!(line_of_error("[experiment]\nkind = nope\n"), 2);
        assert_eq!(line_of_error("[experiment]\nkind = iterative\nkind = oneshot\n"), 3);
        assert_eq!(line_of_error("[nope]\n"), 1);
        assert_eq!(line_of_error("kind = iterative\n"), 1);
        assert_eq!(line_of_error("[experiment]\nkind iterative\n"), 2);
        assert_eq!(line_of_error(&MINIMAL.replace("rounds = 2", "rounds = two")), 4);
    }

    #[test]
    fn global_pruning_and_warmup() {
        let c = RunConfig::parse(&format!(
            "{MINIMAL}[train]\nwarmup = 100\ndecay_at = 500\n[prune]\nmode = global\nglobal_scope = conv, fc\nglobal_rate = 0.2\n"
        ))
        .unwrap();
        assert_eq!(c.train.schedule.warmup_iters, 100);
        assert_eq!(c.train.schedule.decay_factor, 10.0);
        assert_eq!(
            c.prune.mode,
            PruneMode::Global {
                scope: vec![LayerClass::Conv, LayerClass::Fc],
                rate: 0.2
            }
        );
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }
}
