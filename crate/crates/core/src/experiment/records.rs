use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::train::{early_stop, EarlyStop, TrainingTrace};
use crate::error::{Error, Result};

/// Which subnetwork a record measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    /// Magnitude-pruned survivors rewound to their original initialization.
    Winning,
    /// Same mask, freshly sampled initialization.
    Reinit,
    /// Random mask with the ticket's per-layer counts.
    RandomSparse,
    /// Survivors redrawn from the ticket's own initial values, per layer.
    DmResample,
    /// Survivors perturbed by Gaussian noise of `multiple` × the layer's init
    /// std.
    Noise(f64),
    /// Mask chosen by initial rather than trained magnitudes.
    InitPruned,
    /// Pruned in a single step from the dense network.
    OneShot,
    /// Intermediate round of iterative pruning with continued training.
    Continued,
}

impl Condition {
    /// Stable key used for seed derivation; part of the reproducibility
    /// contract.
    pub fn key(&self) -> [u64; 2] {
        match self {
            Condition::Winning => [0, 0],
            Condition::Reinit => [1, 0],
            Condition::RandomSparse => [2, 0],
            Condition::DmResample => [3, 0],
            Condition::Noise(m) => [4, m.to_bits()],
            Condition::InitPruned => [5, 0],
            Condition::OneShot => [6, 0],
            Condition::Continued => [7, 0],
        }
    }

    fn rank(&self) -> (u8, f64) {
        match self {
            Condition::Winning => (0, 0.0),
            Condition::OneShot => (1, 0.0),
            Condition::Continued => (2, 0.0),
            Condition::Reinit => (3, 0.0),
            Condition::RandomSparse => (4, 0.0),
            Condition::DmResample => (5, 0.0),
            Condition::Noise(m) => (6, *m),
            Condition::InitPruned => (7, 0.0),
        }
    }

    /// Report ordering: winning, oneshot, continued, then the controls.
    pub fn order(&self, other: &Condition) -> Ordering {
        let (a, b) = (self.rank(), other.rank());
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Winning => f.write_str("winning"),
            Condition::Reinit => f.write_str("reinit"),
            Condition::RandomSparse => f.write_str("random-sparse"),
            Condition::DmResample => f.write_str("dm-resample"),
            Condition::Noise(m) => write!(f, "noise-{m}"),
            Condition::InitPruned => f.write_str("init-pruned"),
            Condition::OneShot => f.write_str("oneshot"),
            Condition::Continued => f.write_str("continued"),
        }
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "winning" => Condition::Winning,
            "reinit" => Condition::Reinit,
            "random-sparse" => Condition::RandomSparse,
            "dm-resample" => Condition::DmResample,
            "init-pruned" => Condition::InitPruned,
            "oneshot" => Condition::OneShot,
            "continued" => Condition::Continued,
            other => match other.strip_prefix("noise-").map(str::parse::<f64>) {
                Some(Ok(m)) if m >= 0.0 && m.is_finite() => Condition::Noise(m),
                _ => return Err(Error::invalid(format!("unknown condition '{other}'"))),
            },
        })
    }
}

/// What a finished (or diverged) training run measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Finished {
        early: EarlyStop,
        final_test_acc: f64,
        final_train_acc: f64,
    },
    Diverged {
        iteration: u64,
    },
}

impl Outcome {
    pub fn from_trace(trace: &TrainingTrace) -> Result<Self> {
        let last = trace.last().ok_or_else(|| Error::invalid("empty trace"))?;
        Ok(Outcome::Finished {
            early: early_stop(trace)?,
            final_test_acc: last.test_acc,
            final_train_acc: last.train_acc,
        })
    }
}

/// One row of the results table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TicketRecord {
    pub round: u32,
    pub p_m: f64,
    pub condition: Condition,
    pub trial: u32,
    pub outcome: Outcome,
}

impl TicketRecord {
    /// The six per-record metrics in CSV column order, or `None` for a
    /// diverged run.
    pub fn metrics(&self) -> Option<[f64; 6]> {
        match self.outcome {
            Outcome::Finished {
                early,
                final_test_acc,
                final_train_acc,
            } => Some([
                early.iteration as f64,
                early.val_loss,
                early.test_acc,
                early.train_acc,
                final_test_acc,
                final_train_acc,
            ]),
            Outcome::Diverged { .. } => None,
        }
    }
}

pub const METRIC_NAMES: [&str; 6] = [
    "early_stop_iter",
    "val_loss_at_stop",
    "test_acc_at_stop",
    "train_acc_at_stop",
    "final_test_acc",
    "final_train_acc",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Result<Stat> {
        if values.is_empty() {
            return Err(Error::invalid("no values to aggregate"));
        }
        Ok(Stat {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Summary of one (condition, round) group across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub condition: Condition,
    pub round: u32,
    pub p_m: f64,
    /// Trials that finished and enter the statistics.
    pub trials: usize,
    pub diverged: usize,
    /// In [`METRIC_NAMES`] order; `None` when every trial diverged.
    pub metrics: Option<[Stat; 6]>,
}

/// Groups records by (condition, round) and summarizes each group over
/// trials, excluding diverged ones. Rows come out ordered by condition then
/// round, independent of input order.
pub fn aggregate_trials(records: &[TicketRecord]) -> Result<Vec<AggregateRow>> {
    if records.is_empty() {
        return Err(Error::invalid("no records to aggregate"));
    }
    let mut groups: BTreeMap<(u8, u64, u32), Vec<&TicketRecord>> = BTreeMap::new();
    for r in records {
        let (rank, m) = r.condition.rank();
        groups.entry((rank, m.to_bits(), r.round)).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for mut group in groups.into_values() {
        // Sum in trial order so the result does not depend on input order.
        group.sort_by_key(|r| r.trial);
        let first = group[0];
        if let Some(other) = group.iter().find(|r| r.p_m != first.p_m) {
            // Only random masks could disagree, and they are drawn to the
            // ticket's exact counts; anything else is a bookkeeping bug.
            return Err(Error::invalid(format!(
                "{} round {} has P_m {} and {}",
                first.condition, first.round, first.p_m, other.p_m
            )));
        }
        let finished: Vec<[f64; 6]> = group.iter().filter_map(|r| r.metrics()).collect();
        let metrics = if finished.is_empty() {
            None
        } else {
            let mut stats = [Stat {
                mean: 0.0,
                min: 0.0,
                max: 0.0,
            }; 6];
            for (k, s) in stats.iter_mut().enumerate() {
                let column: Vec<f64> = finished.iter().map(|m| m[k]).collect();
                *s = Stat::of(&column)?;
            }
            Some(stats)
        };
        rows.push(AggregateRow {
            condition: first.condition,
            round: first.round,
            p_m: first.p_m,
            trials: finished.len(),
            diverged: group.len() - finished.len(),
            metrics,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(trial: u32, acc: f64) -> TicketRecord {
        TicketRecord {
            round: 1,
            p_m: 0.8,
            condition: Condition::Winning,
            trial,
            outcome: Outcome::Finished {
                early: EarlyStop {
                    iteration: 100 * trial as u64,
                    val_loss: 0.1,
                    test_acc: acc,
                    train_acc: acc,
                },
                final_test_acc: acc,
                final_train_acc: 1.0,
            },
        }
    }

    #[test]
    fn aggregation() {
        let rows = aggregate_trials(&[rec(1, 1.0), rec(2, 2.0), rec(3, 3.0)]).unwrap();
        assert_eq!(rows.len(), 1);
        let m = rows[0].metrics.unwrap();
        assert_eq!((m[2].mean, m[2].min, m[2].max), (2.0, 1.0, 3.0));
        assert_eq!(m[0].mean, 200.0);
        let reordered = aggregate_trials(&[rec(3, 3.0), rec(1, 1.0), rec(2, 2.0)]).unwrap();
        assert_eq!(rows, reordered);
        let single = aggregate_trials(&[rec(1, 0.5)]).unwrap()[0].metrics.unwrap();
        assert!(single.iter().all(|s| s.mean == s.min && s.min == s.max));
        assert!(aggregate_trials(&[]).is_err());
    }

    #[test]
    fn diverged_trials_are_excluded() {
        let mut bad = rec(4, 9.0);
        bad.outcome = Outcome::Diverged { iteration: 7 };
        let rows = aggregate_trials(&[rec(1, 1.0), bad]).unwrap();
        assert_eq!((rows[0].trials, rows[0].diverged), (1, 1));
        assert_eq!(rows[0].metrics.unwrap()[2].mean, 1.0);
        let only_bad = aggregate_trials(&[bad]).unwrap();
        assert!(only_bad[0].metrics.is_none());
    }

    #[test]
    fn condition_names_round_trip() {
        for c in [
            Condition::Winning,
            Condition::Reinit,
            Condition::RandomSparse,
            Condition::DmResample,
            Condition::Noise(0.5),
            Condition::Noise(3.0),
            Condition::InitPruned,
            Condition::OneShot,
            Condition::Continued,
        ] {
            assert_eq!(c.to_string().parse::<Condition>().unwrap(), c);
        }
        assert!("noise--1".parse::<Condition>().is_err());
        assert!("bogus".parse::<Condition>().is_err());
        assert_ne!(Condition::Noise(0.5).key(), Condition::Noise(1.0).key());
    }
}
