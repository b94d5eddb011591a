//! Per-run metric traces, serialised one JSON record per line.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceRecord {
    Eval {
        iteration: usize,
        wall_time: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sm_loss: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fnet_norm: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        elbo: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    Event {
        iteration: usize,
        message: String,
    },
    Error {
        iteration: usize,
        message: String,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    pub records: Vec<TraceRecord>,
}

impl MetricTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn event(&mut self, iteration: usize, message: impl Into<String>) {
        let message = message.into();
        log::debug!("iteration {iteration}: {message}");
        self.push(TraceRecord::Event { iteration, message });
    }

    pub fn error(&mut self, iteration: usize, message: impl Into<String>) {
        let message = message.into();
        log::warn!("iteration {iteration}: {message}");
        self.push(TraceRecord::Error { iteration, message });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn evals(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| matches!(r, TraceRecord::Eval { .. }))
    }

    pub fn sm_losses(&self) -> Vec<f64> {
        self.evals()
            .filter_map(|r| match r {
                TraceRecord::Eval { sm_loss, .. } => *sm_loss,
                _ => None,
            })
            .collect()
    }

    pub fn fnet_norms(&self) -> Vec<f64> {
        self.evals()
            .filter_map(|r| match r {
                TraceRecord::Eval { fnet_norm, .. } => *fnet_norm,
                _ => None,
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(f)
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(MetricTrace { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Appends one record to an existing JSONL file.
pub fn append_record(path: impl AsRef<Path>, r: &TraceRecord) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    serde_json::to_writer(&mut f, r)?;
    f.write_all(b"\n")?;
    Ok(())
}
