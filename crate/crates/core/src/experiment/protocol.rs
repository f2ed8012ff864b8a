use log::{info, warn};

use super::controls::{control_dm_resample, control_noise, control_reinit};
use super::records::{Condition, Outcome, TicketRecord};
use super::train::{train_once, TrainConfig, TrainSeeds, TrainingTrace};
use crate::data::DataSplits;
use crate::error::{Error, Result};
use crate::nn::{build_network, InitSpec, NetworkSpec, ParamSet};
use crate::pruning::{prune, prune_at_init, random_mask, sparsity, Mask, PruneConfig};
use crate::rng::{self, label};
use crate::tensor::Real;

/// Iterative pruning strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Train, prune, rewind survivors to θ₀, repeat.
    Reset,
    /// Train, prune, keep training the survivors from their trained values;
    /// rewind to θ₀ once after the last round.
    Continue,
}

/// The result of one training run inside a trial.
#[derive(Debug, Clone)]
pub struct RoundResult<F> {
    pub record: TicketRecord,
    pub mask: Mask,
    pub trace: TrainingTrace,
    /// `None` when the run diverged.
    pub trained: Option<ParamSet<F>>,
}

/// One trial of an experiment: a network, its data, and a trial seed from
/// which every random stream is derived.
#[derive(Debug, Clone, Copy)]
pub struct Trial<'a> {
    pub spec: &'a NetworkSpec,
    pub init: InitSpec,
    pub train: &'a TrainConfig,
    pub prune: &'a PruneConfig,
    pub data: &'a DataSplits,
    pub seed: u64,
    pub index: u32,
}

impl<'a> Trial<'a> {
    /// θ₀ for this trial.
    pub fn theta0<F: Real>(&self) -> Result<ParamSet<F>> {
        build_network(self.spec, self.init, rng::derive(self.seed, &[label::INIT]))
    }

    pub fn train_seeds(&self, condition: Condition, round: u32, rep: u32) -> TrainSeeds {
        let [c, m] = condition.key();
        let path = |l| [l, c, m, round as u64, rep as u64];
        TrainSeeds {
            order: rng::derive(self.seed, &path(label::TRAIN_ORDER)),
            dropout: rng::derive(self.seed, &path(label::TRAIN_DROPOUT)),
        }
    }

    pub fn control_seed(&self, condition: Condition, round: u32, rep: u32) -> u64 {
        let [c, m] = condition.key();
        rng::derive(self.seed, &[label::CONTROL, c, m, round as u64, rep as u64])
    }

    /// Trains `start` under `mask` and packages the outcome. Divergence is
    /// recorded rather than returned as an error.
    pub fn run<F: Real>(
        &self,
        start: &ParamSet<F>,
        mask: &Mask,
        condition: Condition,
        round: u32,
        rep: u32,
    ) -> Result<RoundResult<F>> {
        let p_m = sparsity(mask).fraction();
        info!(
            "trial {} {condition} round {round} rep {rep}: training at P_m = {:.2}%",
            self.index,
            100.0 * p_m
        );
        let seeds = self.train_seeds(condition, round, rep);
        let (trace, trained, outcome) = match train_once(self.spec, start, mask, self.train, self.data, seeds) {
            Ok((trace, trained)) => {
                let outcome = Outcome::from_trace(&trace)?;
                (trace, Some(trained), outcome)
            }
            Err(Error::Diverged { iteration }) => {
                warn!("trial {} {condition} round {round} diverged at iteration {iteration}", self.index);
                (TrainingTrace::default(), None, Outcome::Diverged { iteration })
            }
            Err(e) => return Err(e),
        };
        Ok(RoundResult {
            record: TicketRecord {
                round,
                p_m,
                condition,
                trial: self.index,
                outcome,
            },
            mask: mask.clone(),
            trace,
            trained,
        })
    }

    /// The next round's mask from a trained network.
    pub fn next_mask<F: Real>(&self, trained: &ParamSet<F>, mask: &Mask) -> Result<Mask> {
        Ok(prune(self.spec, trained, mask, self.prune)?.mask)
    }

    /// Round 0 trains the dense network; rounds `1..=rounds` each prune the
    /// previous round's trained weights. Stops early if a round diverges.
    pub fn iterative<F: Real>(&self, strategy: Strategy, rounds: u32) -> Result<Vec<RoundResult<F>>> {
        if rounds == 0 {
            return Err(Error::invalid("iterative pruning needs at least one round"));
        }
        let theta0 = self.theta0::<F>()?;
        let mut results = vec![self.run(&theta0, &Mask::full(self.spec), Condition::Winning, 0, 0)?];
        for round in 1..=rounds {
            let prev = results.last().expect("round 0 exists");
            let Some(trained) = &prev.trained else { break };
            let mask = self.next_mask(trained, &prev.mask)?;
            let result = match strategy {
                Strategy::Reset => self.run(&theta0.rewound(&mask)?, &mask, Condition::Winning, round, 0)?,
                Strategy::Continue => self.run(trained, &mask, Condition::Continued, round, 0)?,
            };
            results.push(result);
        }
        if strategy == Strategy::Continue {
            let last = results.last().expect("round 0 exists");
            if last.trained.is_some() && last.record.round == rounds {
                let mask = last.mask.clone();
                results.push(self.run(&theta0.rewound(&mask)?, &mask, Condition::Winning, rounds, 0)?);
            }
        }
        Ok(results)
    }

    /// Prunes `target` of the weights of every fully-connected layer (other
    /// classes at their proportionally compounded rates) in one step from
    /// the dense network trained in round 0, rewinds and retrains.
    pub fn oneshot<F: Real>(&self, dense_trained: &ParamSet<F>, target: f64) -> Result<RoundResult<F>> {
        let config = oneshot_config(self.prune, target)?;
        let mask = prune(self.spec, dense_trained, &Mask::full(self.spec), &config)?.mask;
        let theta0 = self.theta0::<F>()?;
        let mut result = self.run(&theta0.rewound(&mask)?, &mask, Condition::Winning, 1, 0)?;
        result.record.condition = Condition::OneShot;
        Ok(result)
    }

    /// Trains one control subnetwork for the winning ticket `mask` found in
    /// `round`.
    pub fn control<F: Real>(&self, condition: Condition, mask: &Mask, round: u32, rep: u32) -> Result<RoundResult<F>> {
        let theta0 = self.theta0::<F>()?;
        let seed = self.control_seed(condition, round, rep);
        let (start, mask) = match condition {
            Condition::Reinit => (control_reinit(mask, self.spec, self.init, seed)?, mask.clone()),
            Condition::RandomSparse => {
                let random = random_mask(mask, &sparsity(mask).layer_fractions(), seed)?;
                (theta0.rewound(&random)?, random)
            }
            Condition::DmResample => (control_dm_resample(&theta0, mask, seed)?, mask.clone()),
            Condition::Noise(multiple) => (control_noise(&theta0, mask, multiple, seed)?, mask.clone()),
            Condition::InitPruned => {
                let mut m = Mask::full(self.spec);
                for _ in 0..round {
                    m = prune_at_init(self.spec, &theta0, &m, self.prune)?.mask;
                }
                (theta0.rewound(&m)?, m)
            }
            other => return Err(Error::invalid(format!("{other} is not a control condition"))),
        };
        self.run(&start, &mask, condition, round, rep)
    }

    /// θ₀ under a random mask keeping `keep` of every layer.
    pub fn random_sparse<F: Real>(&self, keep: f64, round: u32) -> Result<RoundResult<F>> {
        let full = Mask::full(self.spec);
        let fractions = vec![keep; full.layers().len()];
        let mask = random_mask(&full, &fractions, self.control_seed(Condition::RandomSparse, round, 0))?;
        self.run(&self.theta0::<F>()?.rewound(&mask)?, &mask, Condition::RandomSparse, round, 0)
    }
}

/// Rates that prune `target` of each fully-connected layer in one step:
/// `config` compounded over `ln(1 - target) / ln(1 - r)` rounds, where `r`
/// is the fc rate (the conv rate for networks without a pruned fc rate).
pub fn oneshot_config(config: &PruneConfig, target: f64) -> Result<PruneConfig> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::invalid(format!("one-shot target {target} is outside [0, 1)")));
    }
    let base = if config.fc_rate > 0.0 { config.fc_rate } else { config.conv_rate };
    if base <= 0.0 {
        return Err(Error::invalid("one-shot pruning needs a positive fc or conv rate"));
    }
    let rounds = (1.0 - target).ln() / (1.0 - base).ln();
    let mut c = config.compounded(rounds);
    if base == config.fc_rate {
        c.fc_rate = target;
    } else {
        c.conv_rate = target;
    }
    Ok(c)
}
