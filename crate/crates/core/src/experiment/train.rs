use std::fmt::Write as _;

use crate::data::{BatchStream, DataSplits, Dataset};
use crate::error::{Error, Result};
use crate::nn::{evaluate, loss_and_grads, Evaluation, Mode, NetworkSpec, ParamSet};
use crate::optim::{LrSchedule, Optimizer, OptimizerKind, WeightDecay};
use crate::pruning::Mask;
use crate::rng;
use crate::tensor::Real;

/// Everything that controls one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub iterations: u64,
    pub eval_interval: u64,
    pub weight_decay: f64,
    /// Train loss/accuracy are measured on this many fixed training
    /// examples (all of them when `None`).
    pub train_eval_size: Option<usize>,
}

impl TrainConfig {
    /// Adam at `lr`, batch 60, evaluation every 100 iterations.
    pub fn adam(lr: f64, iterations: u64) -> Self {
        TrainConfig {
            optimizer: OptimizerKind::ADAM,
            schedule: LrSchedule::constant(lr),
            batch_size: 60,
            iterations,
            eval_interval: 100,
            weight_decay: 0.0,
            train_eval_size: Some(5_000),
        }
    }

    /// Default optimizer settings for the named presets.
    pub fn for_preset(name: &str) -> Result<Self> {
        match name {
            "lenet-300-100" | "lenet" => Ok(Self::adam(1.2e-3, 50_000)),
            "conv-2" => Ok(Self::adam(2e-4, 20_000)),
            "conv-4" => Ok(Self::adam(3e-4, 25_000)),
            "conv-6" => Ok(Self::adam(3e-4, 30_000)),
            other => Err(Error::invalid(format!("no training preset for '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.eval_interval == 0 || !self.iterations.is_multiple_of(self.eval_interval) {
            return Err(Error::invalid(format!(
                "iterations ({}) must be a multiple of the eval interval ({})",
                self.iterations, self.eval_interval
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        if self.train_eval_size == Some(0) {
            return Err(Error::invalid("train_eval_size must be positive"));
        }
        Ok(())
    }
}

/// Metrics sampled at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: u64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub points: Vec<TracePoint>,
}

const TRACE_HEADER: &str = "iteration,train_loss,train_acc,val_loss,val_acc,test_loss,test_acc";

impl TrainingTrace {
    pub fn last(&self) -> Option<&TracePoint> {
        self.points.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRACE_HEADER);
        s.push('\n');
        for p in &self.points {
            // `{:?}` prints the shortest representation that round-trips.
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?},{:?},{:?}",
                p.iteration, p.train_loss, p.train_acc, p.val_loss, p.val_acc, p.test_loss, p.test_acc
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(TRACE_HEADER) {
            return Err(Error::format(0, "trace header missing"));
        }
        let mut points = Vec::new();
        let mut offset = TRACE_HEADER.len() as u64 + 1;
        for line in lines {
            let bad = || Error::format(offset, format!("malformed trace row '{line}'"));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            points.push(TracePoint {
                iteration: f[0].parse().map_err(|_| bad())?,
                train_loss: num(1)?,
                train_acc: num(2)?,
                val_loss: num(3)?,
                val_acc: num(4)?,
                test_loss: num(5)?,
                test_acc: num(6)?,
            });
            offset += line.len() as u64 + 1;
        }
        Ok(TrainingTrace { points })
    }
}

/// The point of minimum validation loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub iteration: u64,
    pub val_loss: f64,
    pub test_acc: f64,
    pub train_acc: f64,
}

/// Argmin of the validation loss; ties go to the earliest iteration.
pub fn early_stop(trace: &TrainingTrace) -> Result<EarlyStop> {
    let best = trace
        .points
        .iter()
        .reduce(|best, p| if p.val_loss < best.val_loss { p } else { best })
        .ok_or_else(|| Error::invalid("early stopping needs a non-empty trace"))?;
    Ok(EarlyStop {
        iteration: best.iteration,
        val_loss: best.val_loss,
        test_acc: best.test_acc,
        train_acc: best.train_acc,
    })
}

/// Seeds for the two random streams a training run consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainSeeds {
    pub order: u64,
    pub dropout: u64,
}

fn train_eval_subset(train: &Dataset, size: Option<usize>) -> Result<Option<Dataset>> {
    match size {
        Some(k) if k < train.len() => {
            // Evenly strided so the subset is fixed and class-balanced in
            // expectation.
            let idx: Vec<usize> = (0..k).map(|i| i * train.len() / k).collect();
            Ok(Some(train.subset(&idx)?))
        }
        _ => Ok(None),
    }
}

fn diverged(e: Error, iteration: u64) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged { iteration },
        other => other,
    }
}

/// Trains `params` under `mask` for exactly `config.iterations` mini-batch
/// steps from a fresh optimizer, evaluating at iteration 0 and every
/// `eval_interval` steps. Early stopping is left to [`early_stop`].
pub fn train_once<F: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<F>,
    mask: &Mask,
    config: &TrainConfig,
    data: &DataSplits,
    seeds: TrainSeeds,
) -> Result<(TrainingTrace, ParamSet<F>)> {
    config.validate()?;
    let mut params = params.clone();
    params.apply_mask(mask)?;
    let train_eval = train_eval_subset(&data.train, config.train_eval_size)?;
    let train_eval = train_eval.as_ref().unwrap_or(&data.train);

    let measure = |params: &ParamSet<F>, iteration: u64| -> Result<TracePoint> {
        let run = |d: &Dataset| -> Result<Evaluation> {
            let e = evaluate(spec, params, mask, d).map_err(|e| diverged(e, iteration))?;
            if !e.loss.is_finite() {
                return Err(Error::Diverged { iteration });
            }
            Ok(e)
        };
        let (tr, va, te) = (run(train_eval)?, run(&data.validation)?, run(&data.test)?);
        Ok(TracePoint {
            iteration,
            train_loss: tr.loss,
            train_acc: tr.accuracy,
            val_loss: va.loss,
            val_acc: va.accuracy,
            test_loss: te.loss,
            test_acc: te.accuracy,
        })
    };

    let mut trace = TrainingTrace {
        points: vec![measure(&params, 0)?],
    };
    if config.iterations == 0 {
        return Ok((trace, params));
    }
    let mut batches = BatchStream::new(data.train.len(), config.batch_size, seeds.order)?;
    let mut dropout = rng::stream(seeds.dropout, &[]);
    let mut opt = Optimizer::new(config.optimizer, &params);
    let decay = WeightDecay(config.weight_decay);
    for it in 1..=config.iterations {
        let (x, y) = data.train.gather::<F>(batches.next_batch())?;
        let (_, grads) = loss_and_grads(spec, &params, mask, &x, &y, Mode::Train, &mut dropout)
            .map_err(|e| diverged(e, it))?;
        // The rate for update `it` is the schedule at the iteration count
        // before the update.
        let lr = config.schedule.lr_at(it - 1);
        opt.apply_update(&mut params, &grads, mask, lr, decay)
            .map_err(|e| diverged(e, it))?;
        if it % config.eval_interval == 0 {
            trace.points.push(measure(&params, it)?);
        }
    }
    Ok((trace, params))
}
