//! The lottery-ticket protocol: training runs, early stopping, iterative and
//! one-shot pruning, control subnetworks and trial aggregation.

mod controls;
mod protocol;
mod records;
mod train;

pub use controls::{control_dm_resample, control_noise, control_reinit};
pub use protocol::{oneshot_config, RoundResult, Strategy, Trial};
pub use records::{aggregate_trials, AggregateRow, Condition, Outcome, Stat, TicketRecord, METRIC_NAMES};
pub use train::{early_stop, train_once, EarlyStop, TracePoint, TrainConfig, TrainSeeds, TrainingTrace};
