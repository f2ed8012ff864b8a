//! CSV schemas of the run directory. Each file starts with a version line
//! that readers check before anything else.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::experiment::{AggregateRow, Condition, EarlyStop, Outcome, TicketRecord, METRIC_NAMES};

pub const TICKETS_VERSION: &str = "# lottery-tickets v1";
pub const AGG_VERSION: &str = "# lottery-tickets-agg v1";
pub const TICKETS_HEADER: &str = "round,P_m,condition,trial,early_stop_iter,val_loss_at_stop,test_acc_at_stop,train_acc_at_stop,final_test_acc,final_train_acc";

const DIVERGED: &str = "diverged@";

pub fn record_row(r: &TicketRecord) -> String {
    let metrics = match r.outcome {
        Outcome::Finished {
            early,
            final_test_acc,
            final_train_acc,
        } => format!(
            "{},{:?},{:?},{:?},{:?},{:?}",
            early.iteration, early.val_loss, early.test_acc, early.train_acc, final_test_acc, final_train_acc
        ),
        Outcome::Diverged { iteration } => format!("{DIVERGED}{iteration},NaN,NaN,NaN,NaN,NaN"),
    };
    format!("{},{:?},{},{},{}", r.round, r.p_m, r.condition, r.trial, metrics)
}

pub fn parse_row(line: &str) -> Result<TicketRecord> {
    let bad = || Error::format(0, format!("malformed record row '{line}'"));
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 10 {
        return Err(bad());
    }
    let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
    let outcome = match f[4].strip_prefix(DIVERGED) {
        Some(it) => Outcome::Diverged {
            iteration: it.parse().map_err(|_| bad())?,
        },
        None => Outcome::Finished {
            early: EarlyStop {
                iteration: f[4].parse().map_err(|_| bad())?,
                val_loss: num(5)?,
                test_acc: num(6)?,
                train_acc: num(7)?,
            },
            final_test_acc: num(8)?,
            final_train_acc: num(9)?,
        },
    };
    Ok(TicketRecord {
        round: f[0].parse().map_err(|_| bad())?,
        p_m: num(1)?,
        condition: f[2].parse::<Condition>().map_err(|_| bad())?,
        trial: f[3].parse().map_err(|_| bad())?,
        outcome,
    })
}

/// Full tickets table: version line, header, one row per record.
pub fn tickets_csv(records: &[TicketRecord]) -> String {
    let mut s = format!("{TICKETS_VERSION}\n{TICKETS_HEADER}\n");
    for r in records {
        s.push_str(&record_row(r));
        s.push('\n');
    }
    s
}

pub fn parse_tickets_csv(text: &str) -> Result<Vec<TicketRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(TICKETS_VERSION) => {}
        Some(other) if other.starts_with("# lottery-tickets") => {
            return Err(Error::format(0, format!("unsupported table version '{other}'")))
        }
        _ => return Err(Error::format(0, "missing table version line")),
    }
    if lines.next() != Some(TICKETS_HEADER) {
        return Err(Error::format(TICKETS_VERSION.len() as u64 + 1, "unexpected table header"));
    }
    lines.filter(|l| !l.is_empty()).map(parse_row).collect()
}

pub fn agg_header() -> String {
    let mut s = String::from("condition,round,P_m,trials,diverged");
    for m in METRIC_NAMES {
        let _ = write!(s, ",{m}_mean,{m}_min,{m}_max");
    }
    s
}

pub fn agg_csv(rows: &[AggregateRow]) -> String {
    let mut s = format!("{AGG_VERSION}\n{}\n", agg_header());
    for r in rows {
        let _ = write!(s, "{},{},{:?},{},{}", r.condition, r.round, r.p_m, r.trials, r.diverged);
        match &r.metrics {
            Some(stats) => {
                for st in stats {
                    let _ = write!(s, ",{:?},{:?},{:?}", st.mean, st.min, st.max);
                }
            }
            None => s.push_str(&",NaN".repeat(3 * METRIC_NAMES.len())),
        }
        s.push('\n');
    }
    s
}

/// Fixed-width summary table for the terminal.
pub fn report_table(rows: &[AggregateRow]) -> String {
    let mut s = format!("{:<14} {:>5} {:>8} {:>6} {:>8}", "condition", "round", "P_m(%)", "trials", "diverged");
    let cols = [
        ("early_stop_iter", 0usize, 1.0, 0usize),
        ("test_acc@stop(%)", 2, 100.0, 2),
        ("val_loss@stop", 1, 1.0, 4),
        ("final_test_acc(%)", 4, 100.0, 2),
        ("final_train_acc(%)", 5, 100.0, 2),
    ];
    for (name, ..) in cols {
        let _ = write!(s, "  {name:>30}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{:<14} {:>5} {:>8.2} {:>6} {:>8}",
            r.condition.to_string(),
            r.round,
            100.0 * r.p_m,
            r.trials,
            r.diverged
        );
        for (_, idx, scale, prec) in cols {
            let cell = match &r.metrics {
                Some(m) => {
                    let st = m[idx];
                    format!(
                        "{:.p$} ({:.p$}, {:.p$})",
                        st.mean * scale,
                        st.min * scale,
                        st.max * scale,
                        p = prec
                    )
                }
                None => "-".to_string(),
            };
            let _ = write!(s, "  {cell:>30}");
        }
        s.push('\n');
    }
    s
}
