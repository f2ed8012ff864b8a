//! Executing a [`RunConfig`] into a run directory, and reading it back.
//!
//! Layout:
//!
//! ```text
//! config.ini            effective configuration (re-runnable)
//! config.sha256         hash of config.ini, checked on --resume
//! records/<key>.csv     one finished training run each
//! traces/<key>.csv      its metrics trace
//! checkpoints/t<i>/     masks, trained parameters and halt markers
//! analysis/t<i>/        histogram and connectivity tables (analysis runs)
//! tickets.csv           every record
//! tickets_agg.csv       mean/min/max per (condition, round)
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use sha2::{Digest, Sha256};

use super::config::{DataConfig, DataSource, Kind, NetworkChoice, RunConfig};
use super::tables::{agg_csv, parse_tickets_csv, record_row, tickets_csv, TICKETS_HEADER, TICKETS_VERSION};
use super::write_atomic;
use crate::analysis::{
    connectivity, connectivity_csv, init_histogram, movement_from_zero, weight_movement, Direction, DEFAULT_BINS,
};
use crate::data::{load_cifar10, load_idx, split, synthetic_blobs, DataSplits, Dataset};
use crate::error::{Error, Result};
use crate::experiment::{aggregate_trials, AggregateRow, Condition, Outcome, Strategy, TicketRecord, Trial};
use crate::nn::{NetworkSpec, ParamSet};
use crate::pruning::Mask;
use crate::rng;
use crate::tensor::Real;

pub const CONFIG_FILE: &str = "config.ini";
const HASH_FILE: &str = "config.sha256";

/// Identifies one training run inside a run directory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordKey {
    pub condition: Condition,
    pub trial: u32,
    pub round: u32,
    pub rep: u32,
}

impl RecordKey {
    fn new(condition: Condition, trial: u32, round: u32, rep: u32) -> Self {
        RecordKey {
            condition,
            trial,
            round,
            rep,
        }
    }

    pub fn name(&self) -> String {
        format!("{}_t{}_r{}_rep{}", self.condition, self.trial, self.round, self.rep)
    }
}

/// Every record a complete run of `cfg` produces, per trial.
pub fn plan(cfg: &RunConfig, trial: u32) -> Vec<RecordKey> {
    let k = |c, r, rep| RecordKey::new(c, trial, r, rep);
    let mut keys = Vec::new();
    match cfg.kind {
        Kind::Iterative | Kind::Controls | Kind::Analysis => match cfg.strategy {
            Strategy::Reset => keys.extend((0..=cfg.rounds).map(|r| k(Condition::Winning, r, 0))),
            Strategy::Continue => {
                keys.push(k(Condition::Winning, 0, 0));
                keys.extend((1..=cfg.rounds).map(|r| k(Condition::Continued, r, 0)));
                keys.push(k(Condition::Winning, cfg.rounds, 0));
            }
        },
        Kind::OneShot | Kind::RandomBaseline => keys.push(k(Condition::Winning, 0, 0)),
    }
    match cfg.kind {
        Kind::Controls => {
            for r in cfg.effective_control_rounds() {
                for &c in &cfg.conditions {
                    keys.extend((0..cfg.control_reps).map(|rep| k(c, r, rep)));
                }
            }
        }
        Kind::OneShot => keys.extend((1..=cfg.oneshot_targets.len() as u32).map(|i| k(Condition::OneShot, i, 0))),
        Kind::RandomBaseline => {
            keys.extend((1..=cfg.random_keep.len() as u32).map(|i| k(Condition::RandomSparse, i, 0)))
        }
        Kind::Iterative | Kind::Analysis => {}
    }
    keys
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn record(&self, key: &RecordKey) -> PathBuf {
        self.root.join("records").join(format!("{}.csv", key.name()))
    }

    fn trace(&self, key: &RecordKey) -> PathBuf {
        self.root.join("traces").join(format!("{}.csv", key.name()))
    }

    fn checkpoint(&self, trial: u32, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("t{trial}")).join(name)
    }

    fn mask(&self, trial: u32, round: u32) -> PathBuf {
        self.checkpoint(trial, &format!("mask_r{round}.bin"))
    }

    fn params(&self, trial: u32, round: u32) -> PathBuf {
        self.checkpoint(trial, &format!("params_r{round}.bin"))
    }

    fn halted(&self, trial: u32) -> PathBuf {
        self.checkpoint(trial, "halted")
    }

    /// Round at which the trial's pruning chain stopped because training
    /// diverged.
    fn halted_at(&self, trial: u32) -> Result<Option<u32>> {
        match fs::read_to_string(self.halted(trial)) {
            Ok(s) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::format(0, format!("bad halt marker for trial {trial}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn read_record(&self, key: &RecordKey) -> Result<Option<TicketRecord>> {
        let text = match fs::read_to_string(self.record(key)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut records = parse_tickets_csv(&text)?;
        if records.len() != 1 {
            return Err(Error::format(0, format!("{} holds {} rows", key.name(), records.len())));
        }
        Ok(records.pop())
    }

    fn write_record(&self, key: &RecordKey, record: &TicketRecord) -> Result<()> {
        let text = format!("{TICKETS_VERSION}\n{TICKETS_HEADER}\n{}\n", record_row(record));
        write_atomic(&self.record(key), text.as_bytes())
    }
}

/// The records a run directory is expected to hold, after accounting for
/// trials whose pruning chain halted on divergence. Returns the present
/// records and the names of missing ones.
pub fn collect(cfg: &RunConfig, dir: &RunDir) -> Result<(Vec<TicketRecord>, Vec<String>)> {
    let mut present = Vec::new();
    let mut missing = Vec::new();
    for t in 0..cfg.trials {
        let halted = dir.halted_at(t)?;
        for key in plan(cfg, t) {
            if let Some(h) = halted {
                if key.round > h && !matches!(key.condition, Condition::OneShot | Condition::RandomSparse) {
                    continue;
                }
            }
            match dir.read_record(&key)? {
                Some(r) => present.push(r),
                None => missing.push(key.name()),
            }
        }
    }
    present.sort_by(|a, b| {
        a.condition
            .order(&b.condition)
            .then(a.round.cmp(&b.round))
            .then(a.trial.cmp(&b.trial))
    });
    Ok((present, missing))
}

fn limit(d: Dataset, n: Option<usize>) -> Result<Dataset> {
    match n {
        Some(n) if n < d.len() => d.subset(&(0..n).collect::<Vec<_>>()),
        _ => Ok(d),
    }
}

/// Loads, filters and splits the configured data.
pub fn load_data(cfg: &DataConfig) -> Result<DataSplits> {
    let (train_full, test) = match &cfg.source {
        DataSource::Mnist { dir } => (
            load_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?,
            load_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?,
        ),
        DataSource::Cifar10 { dir } => {
            let batches: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            let refs: Vec<&Path> = batches.iter().map(PathBuf::as_path).collect();
            (load_cifar10(&refs)?, load_cifar10(&[&dir.join("test_batch.bin")])?)
        }
        DataSource::Blobs {
            classes,
            per_class,
            test_per_class,
            dims,
            separation,
            image_shape,
        } => {
            let all = synthetic_blobs(*classes, per_class + test_per_class, *dims, *separation, cfg.split_seed)?;
            let n_train = classes * per_class;
            let train = all.subset(&(0..n_train).collect::<Vec<_>>())?;
            let test = all.subset(&(n_train..all.len()).collect::<Vec<_>>())?;
            match image_shape {
                Some(shape) => (train.reshape(shape.clone())?, test.reshape(shape.clone())?),
                None => (train, test),
            }
        }
    };
    let prepare = |d: Dataset| -> Result<Dataset> {
        let d = match &cfg.classes {
            Some(keep) => d.filter_classes(keep)?,
            None => d,
        };
        match cfg.downsample {
            Some(f) if f > 1 => d.downsample(f),
            _ => Ok(d),
        }
    };
    let (train, validation) = split(&prepare(train_full)?, cfg.validation, cfg.split_seed)?;
    if validation.is_empty() {
        return Err(Error::invalid("the validation set is empty; early stopping needs one"));
    }
    Ok(DataSplits {
        train: limit(train, cfg.train_limit)?,
        validation,
        test: limit(prepare(test)?, cfg.test_limit)?,
    })
}

/// The network for `cfg`, with the datasets viewed in its input shape.
pub fn build_spec(cfg: &RunConfig, data: DataSplits) -> Result<(NetworkSpec, DataSplits)> {
    let shape = data.train.example_shape().to_vec();
    let classes = data.train.classes();
    let spec = match &cfg.network.choice {
        NetworkChoice::Preset(p) => NetworkSpec::preset(p)?,
        NetworkChoice::Mlp { hidden } => NetworkSpec::mlp(shape.iter().product(), hidden, classes),
        NetworkChoice::Conv { modules, fc } => {
            let &[c, h, w] = shape.as_slice() else {
                return Err(Error::invalid(format!("convolutional networks need [c, h, w] data, got {shape:?}")));
            };
            NetworkSpec::vgg_like([c, h, w], modules, fc, classes)
        }
    }
    .with_dropout(cfg.network.dropout);
    spec.shapes()?;
    if spec.classes() != classes {
        return Err(Error::invalid(format!(
            "network has {} outputs but the data has {classes} classes",
            spec.classes()
        )));
    }
    let view = |d: Dataset| -> Result<Dataset> {
        if d.example_shape() == spec.input_shape.as_slice() {
            Ok(d)
        } else {
            d.reshape(spec.input_shape.clone())
        }
    };
    let data = DataSplits {
        train: view(data.train)?,
        validation: view(data.validation)?,
        test: view(data.test)?,
    };
    Ok((spec, data))
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub resume: bool,
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<TicketRecord>,
    pub aggregate: Vec<AggregateRow>,
}

impl RunSummary {
    pub fn diverged(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.outcome, Outcome::Diverged { .. }))
            .count()
    }
}

fn prepare_dir(cfg: &RunConfig, dir: &RunDir, resume: bool) -> Result<()> {
    let text = cfg.to_text();
    // The output location is not part of a run's identity.
    let hash = config_hash(&RunConfig {
        output: PathBuf::new(),
        ..cfg.clone()
    }
    .to_text());
    let hash_path = dir.root().join(HASH_FILE);
    if hash_path.exists() {
        if !resume {
            return Err(Error::invalid(format!(
                "{} already holds a run; pass --resume to continue it",
                dir.root().display()
            )));
        }
        let stored = fs::read_to_string(&hash_path)?;
        if stored.trim() != hash {
            return Err(Error::invalid(format!(
                "{} was started with a different configuration",
                dir.root().display()
            )));
        }
        return Ok(());
    }
    if dir.root().exists() && fs::read_dir(dir.root())?.next().is_some() {
        return Err(Error::invalid(format!("{} exists and is not a run directory", dir.root().display())));
    }
    fs::create_dir_all(dir.root())?;
    write_atomic(&dir.root().join(CONFIG_FILE), text.as_bytes())?;
    write_atomic(&hash_path, format!("{hash}\n").as_bytes())
}

/// Runs (or resumes) `cfg` into `out`.
pub fn run(cfg: &RunConfig, out: &Path, opts: RunOptions) -> Result<RunSummary> {
    let dir = RunDir::new(out);
    // Data problems surface before anything is written to `out`.
    let data = load_data(&cfg.data)?;
    let (spec, data) = build_spec(cfg, data)?;
    prepare_dir(cfg, &dir, opts.resume)?;
    info!(
        "{}: {} prunable weights; {} train / {} validation / {} test examples",
        spec.name,
        spec.weight_count(),
        data.train.len(),
        data.validation.len(),
        data.test.len()
    );
    let ctx = Ctx {
        cfg,
        dir: &dir,
        spec: &spec,
        data: &data,
    };
    if cfg.f32 {
        run_trials::<f32>(&ctx, opts.jobs)?;
    } else {
        run_trials::<f64>(&ctx, opts.jobs)?;
    }
    let (records, missing) = collect(cfg, &dir)?;
    if !missing.is_empty() {
        return Err(Error::Incomplete(format!("records missing after the run: {}", missing.join(", "))));
    }
    let aggregate = aggregate_trials(&records)?;
    write_atomic(&dir.root().join("tickets.csv"), tickets_csv(&records).as_bytes())?;
    write_atomic(&dir.root().join("tickets_agg.csv"), agg_csv(&aggregate).as_bytes())?;
    let summary = RunSummary { records, aggregate };
    if summary.diverged() > 0 {
        warn!("{} training runs diverged; they are excluded from the aggregates", summary.diverged());
    }
    Ok(summary)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    dir: &'a RunDir,
    spec: &'a NetworkSpec,
    data: &'a DataSplits,
}

fn run_trials<F: Real>(ctx: &Ctx<'_>, jobs: usize) -> Result<()> {
    let next = AtomicUsize::new(0);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    let workers = jobs.clamp(1, ctx.cfg.trials as usize);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if first_error.lock().expect("lock").is_some() {
                    return;
                }
                let t = next.fetch_add(1, Ordering::SeqCst);
                if t >= ctx.cfg.trials as usize {
                    return;
                }
                if let Err(e) = run_trial::<F>(ctx, t as u32) {
                    first_error.lock().expect("lock").get_or_insert(e);
                    return;
                }
            });
        }
    });
    match first_error.into_inner().expect("lock") {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run_trial<F: Real>(ctx: &Ctx<'_>, t: u32) -> Result<()> {
    let cfg = ctx.cfg;
    let dir = ctx.dir;
    let trial = Trial {
        spec: ctx.spec,
        init: cfg.network.init,
        train: &cfg.train,
        prune: &cfg.prune,
        data: ctx.data,
        seed: rng::derive(cfg.seed, &[t as u64]),
        index: t,
    };
    let theta0 = trial.theta0::<F>()?;
    let chain_rounds = match cfg.kind {
        Kind::Iterative | Kind::Controls | Kind::Analysis => cfg.rounds,
        Kind::OneShot | Kind::RandomBaseline => 0,
    };
    let save_result = |key: &RecordKey, result: &crate::experiment::RoundResult<F>| -> Result<()> {
        write_atomic(&dir.trace(key), result.trace.to_csv().as_bytes())?;
        dir.write_record(key, &result.record)
    };

    // Pruning chain: round r trains under mask_r; its trained weights give
    // mask_{r+1}. Checkpoints are written before the record, so an existing
    // record implies the next round's inputs exist too.
    let mut mask = Mask::full(ctx.spec);
    let mut halted = dir.halted_at(t)?;
    for r in 0..=chain_rounds {
        if halted.is_some() {
            break;
        }
        let continued = cfg.strategy == Strategy::Continue && r > 0;
        let cond = if continued { Condition::Continued } else { Condition::Winning };
        let key = RecordKey::new(cond, t, r, 0);
        if !dir.mask(t, r).exists() {
            mask.save(&dir.mask(t, r))?;
        }
        if dir.read_record(&key)?.is_none() {
            let start = if continued {
                ParamSet::<F>::from_bytes(&fs::read(dir.params(t, r - 1))?, ctx.spec)?
            } else {
                theta0.rewound(&mask)?
            };
            let result = trial.run(&start, &mask, cond, r, 0)?;
            match &result.trained {
                Some(trained) => {
                    if r < chain_rounds {
                        trial.next_mask(trained, &mask)?.save(&dir.mask(t, r + 1))?;
                    }
                    if r == 0 || (cfg.strategy == Strategy::Continue && r < chain_rounds) {
                        write_atomic(&dir.params(t, r), &trained.to_bytes())?;
                    }
                }
                None => {
                    write_atomic(&dir.halted(t), format!("{r}\n").as_bytes())?;
                    halted = Some(r);
                }
            }
            save_result(&key, &result)?;
        } else if let Some(Outcome::Diverged { .. }) = dir.read_record(&key)?.map(|r| r.outcome) {
            halted = Some(r);
        }
        if r < chain_rounds && halted.is_none() {
            mask = Mask::load(&dir.mask(t, r + 1))?;
        }
    }
    if halted.is_none() && cfg.strategy == Strategy::Continue && chain_rounds > 0 {
        let key = RecordKey::new(Condition::Winning, t, chain_rounds, 0);
        if dir.read_record(&key)?.is_none() {
            let result = trial.run(&theta0.rewound(&mask)?, &mask, Condition::Winning, chain_rounds, 0)?;
            save_result(&key, &result)?;
        }
    }

    match cfg.kind {
        Kind::Controls => {
            for r in cfg.effective_control_rounds() {
                if halted.is_some_and(|h| r > h) {
                    continue;
                }
                let ticket = Mask::load(&dir.mask(t, r))?;
                for &c in &cfg.conditions {
                    for rep in 0..cfg.control_reps {
                        let key = RecordKey::new(c, t, r, rep);
                        if dir.read_record(&key)?.is_none() {
                            let mut result = trial.control::<F>(c, &ticket, r, rep)?;
                            result.record.trial = t * cfg.control_reps + rep;
                            save_result(&key, &result)?;
                        }
                    }
                }
            }
        }
        Kind::OneShot if halted.is_none() => {
            let dense = ParamSet::<F>::from_bytes(&fs::read(dir.params(t, 0))?, ctx.spec)?;
            for (i, &target) in cfg.oneshot_targets.iter().enumerate() {
                let key = RecordKey::new(Condition::OneShot, t, i as u32 + 1, 0);
                if dir.read_record(&key)?.is_none() {
                    let mut result = trial.oneshot(&dense, target)?;
                    result.record.round = i as u32 + 1;
                    save_result(&key, &result)?;
                }
            }
        }
        Kind::RandomBaseline => {
            for (i, &keep) in cfg.random_keep.iter().enumerate() {
                let key = RecordKey::new(Condition::RandomSparse, t, i as u32 + 1, 0);
                if dir.read_record(&key)?.is_none() {
                    let result = trial.random_sparse::<F>(keep, i as u32 + 1)?;
                    save_result(&key, &result)?;
                }
            }
        }
        Kind::Analysis if halted.is_none() => {
            let dense = ParamSet::<F>::from_bytes(&fs::read(dir.params(t, 0))?, ctx.spec)?;
            write_analysis(dir, t, &theta0, &dense, &mask)?;
        }
        _ => {}
    }
    Ok(())
}

fn write_analysis<F: Real>(dir: &RunDir, t: u32, theta0: &ParamSet<F>, dense: &ParamSet<F>, ticket: &Mask) -> Result<()> {
    let out = dir.root().join("analysis").join(format!("t{t}"));
    let put = |name: String, text: String| write_atomic(&out.join(name), text.as_bytes());
    for (l, layer) in ticket.layers().iter().enumerate() {
        let name = layer.name();
        if layer.ones() > 0 {
            put(format!("init_{name}.csv"), init_histogram(theta0, ticket, l, DEFAULT_BINS)?.to_csv())?;
        }
        put(format!("incoming_{name}.csv"), connectivity_csv(&connectivity(ticket, l, Direction::Incoming)?))?;
        put(format!("outgoing_{name}.csv"), connectivity_csv(&connectivity(ticket, l, Direction::Outgoing)?))?;
    }
    let mut summary = String::from("measure,side,count,mean,mass_above_zero\n");
    for (what, part) in [
        ("movement", weight_movement(theta0, dense, ticket, DEFAULT_BINS)?),
        ("from_zero", movement_from_zero(theta0, dense, ticket, DEFAULT_BINS)?),
    ] {
        for (side, hist) in [("in", &part.in_ticket), ("out", &part.out_of_ticket)] {
            if let Some(h) = hist {
                put(format!("{what}_{side}.csv"), h.to_csv())?;
                summary.push_str(&format!("{what},{side},{},{:?},{:?}\n", h.count, h.mean, h.mass_above(0.0)));
            }
        }
    }
    put("summary.csv".into(), summary)
}

/// Loads the echoed configuration of a run directory.
pub fn read_run_config(root: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(root.join(CONFIG_FILE)).map_err(|e| {
        Error::Incomplete(format!("{} is not a run directory ({e})", root.display()))
    })?;
    RunConfig::parse(&text)
}

/// Aggregated rows of a complete run directory. Fails listing the missing
/// records when the run is partial. Never writes.
pub fn summarize(root: &Path) -> Result<Vec<AggregateRow>> {
    let cfg = read_run_config(root)?;
    let (records, missing) = collect(&cfg, &RunDir::new(root))?;
    if !missing.is_empty() {
        return Err(Error::Incomplete(format!("missing records: {}", missing.join(", "))));
    }
    aggregate_trials(&records)
}
