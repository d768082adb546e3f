//! Append-only database of model evaluations.
//!
//! Every record is kept in memory and, when the store is backed by a file,
//! appended to it as one JSON object per line:
//!
//! ```text
//! {"x":[1.0,2.0],"y":5.0,"iter":0,"src":"sampler-start","seq":0}
//! ```
//!
//! A truncated final line (a crash mid-write) is dropped on load.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;

/// Which part of the workflow produced an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    SamplerStart,
    SolverStep,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub x: Vec<f64>,
    pub y: f64,
    #[serde(rename = "iter")]
    pub iteration: usize,
    #[serde(rename = "src")]
    pub source: Source,
    pub seq: u64,
}

/// Inputs and outputs pulled out of the store, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub seqs: Vec<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    fn push(&mut self, r: &EvalRecord) {
        self.xs.push(r.x.clone());
        self.ys.push(r.y);
        self.seqs.push(r.seq);
    }
}

impl<'a> FromIterator<&'a EvalRecord> for Dataset {
    fn from_iter<I: IntoIterator<Item = &'a EvalRecord>>(iter: I) -> Self {
        let mut d = Dataset::default();
        for r in iter {
            d.push(r);
        }
        d
    }
}

type CacheKey = Vec<u64>;

fn cache_key(x: &[f64]) -> CacheKey {
    x.iter().map(|v| v.to_bits()).collect()
}

/// The evaluation database.
#[derive(Debug)]
pub struct EvalStore {
    dim: usize,
    records: Vec<EvalRecord>,
    index: HashMap<CacheKey, usize>,
    writer: Option<BufWriter<File>>,
    path: Option<PathBuf>,
    model_calls: u64,
    cache_hits: u64,
}

impl EvalStore {
    /// A store that lives only in memory.
    pub fn in_memory(dim: usize) -> Self {
        EvalStore {
            dim,
            records: Vec::new(),
            index: HashMap::new(),
            writer: None,
            path: None,
            model_calls: 0,
            cache_hits: 0,
        }
    }

    /// Opens (or creates) a file-backed store; existing records are loaded and
    /// new ones appended.
    pub fn open(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut store = EvalStore::in_memory(dim);
        if path.exists() {
            let valid_len = store.read_lines(path)?;
            let file = OpenOptions::new().write(true).open(path)?;
            file.set_len(valid_len)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        store.writer = Some(BufWriter::new(file));
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    /// Loads a store file into memory without keeping it open for writing.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut store = EvalStore::in_memory(0);
        store.dim = usize::MAX;
        store.read_lines(path)?;
        if store.dim == usize::MAX {
            store.dim = 0;
        }
        Ok(store)
    }

    /// Writes every record to `path`, replacing its contents.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for r in &self.records {
            write_record(&mut w, r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a store file, returning the byte length of the valid prefix.
    fn read_lines(&mut self, path: &Path) -> Result<u64> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut line = String::new();
        let mut offset = 0u64;
        let mut lineno = 0usize;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            lineno += 1;
            let complete = line.ends_with('\n');
            let text = line.trim();
            if text.is_empty() {
                offset += n as u64;
                continue;
            }
            match serde_json::from_str::<EvalRecord>(text) {
                Ok(rec) if complete || reader.fill_buf()?.is_empty() => {
                    if self.dim == usize::MAX {
                        self.dim = rec.x.len();
                    }
                    self.insert_loaded(rec, lineno)?;
                    offset += n as u64;
                }
                Ok(_) => unreachable!("a line without newline is always the last one"),
                Err(e) => {
                    if !complete {
                        log::warn!("{}: dropping truncated final record on line {lineno}", path.display());
                        break;
                    }
                    return Err(Error::Format(format!("{}:{lineno}: {e}", path.display())));
                }
            }
        }
        Ok(offset)
    }

    fn insert_loaded(&mut self, rec: EvalRecord, lineno: usize) -> Result<()> {
        if rec.x.len() != self.dim {
            return Err(Error::Format(format!(
                "line {lineno}: record has dimension {}, store has {}",
                rec.x.len(),
                self.dim
            )));
        }
        if let Some(last) = self.records.last() {
            if rec.seq <= last.seq {
                return Err(Error::Format(format!("line {lineno}: seq {} is not increasing", rec.seq)));
            }
        }
        self.index.entry(cache_key(&rec.x)).or_insert(self.records.len());
        self.records.push(rec);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    /// Number of times [`EvalStore::cached_evaluate`] had to call the model.
    pub fn model_calls(&self) -> u64 {
        self.model_calls
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits
    }

    /// Highest iteration stamp present, if any.
    pub fn max_iteration(&self) -> Option<usize> {
        self.records.iter().map(|r| r.iteration).max()
    }

    /// Output stored for exactly this input (bit-for-bit), first write wins.
    pub fn lookup(&self, x: &[f64]) -> Option<f64> {
        self.index.get(&cache_key(x)).map(|&i| self.records[i].y)
    }

    /// Appends a record and persists it; returns its sequence number.
    pub fn record(&mut self, x: &[f64], y: f64, iteration: usize, source: Source) -> Result<u64> {
        Error::check_dim(self.dim, x.len())?;
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("refusing to store non-finite evaluation y({x:?}) = {y}")));
        }
        let seq = self.records.last().map_or(0, |r| r.seq + 1);
        let rec = EvalRecord { x: x.to_vec(), y, iteration, source, seq };
        if let Some(w) = self.writer.as_mut() {
            write_record(w, &rec)?;
            w.flush()?;
        }
        self.index.entry(cache_key(x)).or_insert(self.records.len());
        self.records.push(rec);
        Ok(seq)
    }

    /// Returns the stored output for `x` if present, otherwise evaluates the
    /// model, records the result and returns it.
    pub fn cached_evaluate<M: Model + ?Sized>(
        &mut self,
        model: &M,
        x: &[f64],
        iteration: usize,
        source: Source,
    ) -> Result<f64> {
        Error::check_dim(self.dim, x.len())?;
        if let Some(y) = self.lookup(x) {
            self.cache_hits += 1;
            return Ok(y);
        }
        self.model_calls += 1;
        let y = model.evaluate(x)?;
        self.record(x, y, iteration, source)?;
        Ok(y)
    }

    /// Bumps the call counters for evaluations made outside
    /// [`EvalStore::cached_evaluate`] (e.g. by concurrent solvers).
    pub(crate) fn count_calls(&mut self, model_calls: u64, cache_hits: u64) {
        self.model_calls += model_calls;
        self.cache_hits += cache_hits;
    }

    pub fn query_all(&self) -> Dataset {
        self.records.iter().collect()
    }

    pub fn query_iteration(&self, iteration: usize) -> Dataset {
        self.records.iter().filter(|r| r.iteration == iteration).collect()
    }

    /// Per-iteration partitions for the last `n` iterations up to the newest,
    /// oldest first; truncated at the start of the history.
    pub fn query_last_iterations(&self, n: usize) -> Vec<Dataset> {
        let Some(last) = self.max_iteration() else {
            return Vec::new();
        };
        let first = (last + 1).saturating_sub(n);
        (first..=last).map(|i| self.query_iteration(i)).collect()
    }
}

fn write_record<W: Write>(w: &mut W, rec: &EvalRecord) -> Result<()> {
    serde_json::to_writer(&mut *w, rec).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}
