//! Per-epoch metrics as CSV: `epoch,loss,soft_acc,hard_acc,wall_seconds`.
//! Accuracies are empty on epochs without an evaluation.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use deepbool_core::training::EpochMetrics;

use crate::error::{Error, Result};

pub const HEADER: [&str; 5] = ["epoch", "loss", "soft_acc", "hard_acc", "wall_seconds"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record(m: &EpochMetrics) -> [String; 5] {
    [
        m.epoch.to_string(),
        m.loss.to_string(),
        fmt_opt(m.soft_acc),
        fmt_opt(m.hard_acc),
        m.wall_seconds.to_string(),
    ]
}

/// Streams rows to a file, flushing after each so a crash keeps progress.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricsWriter<File> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(file).map_err(|e| Error::io(path, e))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> std::io::Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, m: &EpochMetrics) -> std::io::Result<()> {
        self.inner.write_record(record(m))?;
        self.inner.flush()
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format("metrics CSV", e.to_string()))?;
    let bad = |e: &dyn std::fmt::Display| Error::format("metrics CSV", e.to_string());
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| bad(&e))?;
        let num = |i: usize| row.get(i).unwrap_or("").parse::<f64>().map_err(|e| bad(&e));
        let opt = |i: usize| match row.get(i).unwrap_or("") {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|e| bad(&e)),
        };
        out.push(EpochMetrics {
            epoch: num(0)? as usize,
            loss: num(1)?,
            soft_acc: opt(2)?,
            hard_acc: opt(3)?,
            wall_seconds: num(4)?,
        });
    }
    Ok(out)
}
