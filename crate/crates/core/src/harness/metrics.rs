//! Per-interval training metrics and their CSV form.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One task's view of one logging interval. `None` cells mean nothing was
/// observed in the interval (no finished episode, no update yet, ...).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub step: usize,
    pub task_id: usize,
    pub episodic_return: Option<f64>,
    pub td_loss: Option<f64>,
    pub cra_critic_loss: Option<f64>,
    pub cra_actor_loss: Option<f64>,
    pub mean_r_knw: Option<f64>,
    pub w_sim: Option<f64>,
    pub w_per: Option<f64>,
    pub w: Option<f64>,
    pub epsilon: f64,
}

pub const COLUMNS: [&str; 11] = [
    "step",
    "task_id",
    "episodic_return",
    "td_loss",
    "cra_critic_loss",
    "cra_actor_loss",
    "mean_r_knw",
    "w_sim",
    "w_per",
    "w",
    "epsilon",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<MetricRow>,
}

impl RunMetrics {
    pub fn push(&mut self, row: MetricRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.step <= row.step));
        self.rows.push(row);
    }

    pub fn task_rows(&self, task_id: usize) -> impl DoubleEndedIterator<Item = &MetricRow> {
        self.rows.iter().filter(move |r| r.task_id == task_id)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        if self.rows.is_empty() {
            out.write_record(COLUMNS).map_err(csv_error)?;
        }
        for row in &self.rows {
            out.serialize(row).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Validation(format!("csv: {other:?}")),
    }
}

/// Running mean that is emptied at each logging interval.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Mean {
    sum: f64,
    count: usize,
}

impl Mean {
    pub(crate) fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    pub(crate) fn take(&mut self) -> Option<f64> {
        let out = (self.count > 0).then(|| self.sum / self.count as f64);
        *self = Mean::default();
        out
    }
}
