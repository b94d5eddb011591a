//! Sample matrices and their CSV form.
//!
//! The first line is a header `# dim=<d> count=<n> seed=<s> label=<text>`;
//! each following line is one sample written with 17 significant digits.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    data: Vec<f64>,
    d: usize,
    pub label: String,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(data: Vec<f64>, d: usize, label: impl Into<String>, seed: u64) -> Result<Self> {
        if d == 0 || data.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                context: "sample matrix width",
                expected: d,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite entry in sample {}", i / d)));
        }
        Ok(SampleSet {
            data,
            d,
            label: label.into(),
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for row in self.data.chunks_exact(self.d) {
            for (a, v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.len().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> SampleSet {
        let n = n.min(self.len());
        SampleSet {
            data: self.data[..n * self.d].to_vec(),
            d: self.d,
            label: self.label.clone(),
            seed: self.seed,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(
            w,
            "# dim={} count={} seed={} label={}",
            self.d,
            self.len(),
            self.seed,
            self.label.replace(['\n', '\r'], " ")
        )?;
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for row in self.data.chunks_exact(self.d) {
            csv.write_record(row.iter().map(|v| format!("{v:.16e}")))
                .map_err(|e| Error::Invalid(e.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let header = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Invalid("sample file lacks its header line".into()))?;
        let (mut d, mut count, mut seed, mut label) = (None, None, 0u64, String::new());
        let mut rest = header.trim();
        while !rest.is_empty() {
            let (key, tail) = rest
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("malformed header field `{rest}`")))?;
            if key.trim() == "label" {
                label = tail.to_string();
                break;
            }
            let (value, tail) = tail.split_once(' ').unwrap_or((tail, ""));
            let parse = |v: &str| v.parse::<u64>().map_err(|e| Error::Invalid(format!("header {key}: {e}")));
            match key.trim() {
                "dim" => d = Some(parse(value)? as usize),
                "count" => count = Some(parse(value)? as usize),
                "seed" => seed = parse(value)?,
                other => return Err(Error::Invalid(format!("unknown header field `{other}`"))),
            }
            rest = tail.trim_start();
        }
        let d = d.ok_or_else(|| Error::Invalid("header lacks dim".into()))?;
        let mut data = Vec::new();
        let mut csv = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        for rec in csv.records() {
            let rec = rec.map_err(|e| Error::Invalid(e.to_string()))?;
            if rec.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "sample row width",
                    expected: d,
                    actual: rec.len(),
                });
            }
            for f in rec.iter() {
                data.push(f.trim().parse::<f64>().map_err(|e| Error::Invalid(e.to_string()))?);
            }
        }
        let set = SampleSet::new(data, d, label, seed)?;
        if let Some(c) = count {
            if c != set.len() {
                return Err(Error::Invalid(format!("header says {c} samples, file has {}", set.len())));
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
