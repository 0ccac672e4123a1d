//! Embedding access traces: data model, file formats, synthesis and subsampling.
//!
//! A trace is an ordered list of samples. Each sample holds, for every table,
//! the (possibly empty) list of row indices looked up by that sparse feature.
//!
//! Two on-disk formats are supported:
//!
//! - text: one record per line, `sample_id,table_id,idx0;idx1;...`, with the
//!   table specs in a JSON sidecar (array of [`EmbTableSpec`]);
//! - binary: `"SCTR"`, version `u32`, table count `u32`, the table specs, a
//!   sample count `u64`, then for every sample and table a `u32` length followed
//!   by that many `u32` indices. Everything is little-endian.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SCTR";
const VERSION: u32 = 1;

/// Row-length fraction of the largest table below which a table is considered
/// small enough to be fully eligible for on-device placement.
pub const SMALL_TABLE_FRACTION: f64 = 1e-4;

/// Static description of one embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbTableSpec {
    pub table_id: u32,
    /// Number of rows.
    pub row_len: u64,
    /// Embedding dimension in elements.
    pub dim: u32,
    /// Element size in bytes.
    pub df: u32,
    /// Cap on the access fraction that may be served from DRAM or TT storage.
    pub hot_thr: f64,
}

impl EmbTableSpec {
    pub fn new(table_id: u32, row_len: u64, dim: u32, df: u32, hot_thr: f64) -> Result<Self> {
        let spec = EmbTableSpec {
            table_id,
            row_len,
            dim,
            df,
            hot_thr,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.row_len == 0 || self.dim == 0 || self.df == 0 {
            return Err(Error::Config(format!(
                "table {}: row_len, dim and df must be >= 1",
                self.table_id
            )));
        }
        if self.row_len > u64::from(u32::MAX) + 1 {
            return Err(Error::Config(format!(
                "table {}: row_len {} does not fit 32-bit indices",
                self.table_id, self.row_len
            )));
        }
        if !(self.hot_thr > 0.0 && self.hot_thr <= 1.0) {
            return Err(Error::Config(format!(
                "table {}: hot_thr {} outside (0, 1]",
                self.table_id, self.hot_thr
            )));
        }
        Ok(())
    }

    /// Bytes of one row.
    pub fn row_bytes(&self) -> u64 {
        u64::from(self.dim) * u64::from(self.df)
    }

    /// Bytes of the whole table.
    pub fn bytes(&self) -> u64 {
        self.row_len * self.row_bytes()
    }
}

/// Sets `hot_thr` to 1 for tables shorter than 0.01% of the largest table and
/// to 0.99 for the rest.
pub fn apply_hot_threshold_policy(specs: &mut [EmbTableSpec]) {
    let max_rows = specs.iter().map(|s| s.row_len).max().unwrap_or(0) as f64;
    for spec in specs.iter_mut() {
        spec.hot_thr = if (spec.row_len as f64) < SMALL_TABLE_FRACTION * max_rows {
            1.0
        } else {
            0.99
        };
    }
}

/// Lookups of one sample, indexed by table position.
pub type Sample = Vec<Vec<u32>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessTrace {
    pub tables: Vec<EmbTableSpec>,
    pub samples: Vec<Sample>,
}

impl AccessTrace {
    pub fn new(tables: Vec<EmbTableSpec>, samples: Vec<Sample>) -> Result<Self> {
        let trace = AccessTrace { tables, samples };
        trace.validate()?;
        Ok(trace)
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn num_tables(&self) -> usize {
        self.tables.len()
    }

    /// Position of `table_id` in [`AccessTrace::tables`].
    pub fn table_position(&self, table_id: u32) -> Option<usize> {
        self.tables.iter().position(|t| t.table_id == table_id)
    }

    /// Per-sample pooling factors of the table at position `table`.
    pub fn pf_list(&self, table: usize) -> Vec<usize> {
        self.samples.iter().map(|s| s[table].len()).collect()
    }

    pub fn total_lookups(&self) -> usize {
        self.samples
            .iter()
            .map(|s| s.iter().map(Vec::len).sum::<usize>())
            .sum()
    }

    /// Checks table specs, sample arity and every index bound.
    pub fn validate(&self) -> Result<()> {
        check_specs(&self.tables)?;
        for (s, sample) in self.samples.iter().enumerate() {
            if sample.len() != self.tables.len() {
                return Err(Error::parse(
                    s,
                    format!(
                        "sample {s} has {} tables, expected {}",
                        sample.len(),
                        self.tables.len()
                    ),
                ));
            }
            for (t, lookups) in sample.iter().enumerate() {
                let spec = &self.tables[t];
                if let Some(&bad) = lookups.iter().find(|&&i| u64::from(i) >= spec.row_len) {
                    return Err(Error::OutOfBounds {
                        record: s,
                        sample: s,
                        table_id: spec.table_id,
                        index: u64::from(bad),
                        row_len: spec.row_len,
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_specs(specs: &[EmbTableSpec]) -> Result<()> {
    let mut seen = HashMap::new();
    for (pos, spec) in specs.iter().enumerate() {
        spec.validate()?;
        if let Some(prev) = seen.insert(spec.table_id, pos) {
            return Err(Error::Config(format!(
                "table_id {} appears at positions {prev} and {pos}",
                spec.table_id
            )));
        }
    }
    Ok(())
}

// ── File formats ─────────────────────────────────────────────────────────────

/// How a trace file is encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceFormat {
    /// Text records plus the JSON table-spec sidecar at `tables`.
    Text {
        tables: PathBuf,
    },
    Binary,
}

pub fn load_trace(path: &Path, format: &TraceFormat) -> Result<AccessTrace> {
    match format {
        TraceFormat::Text { tables } => {
            let specs = read_table_specs(tables)?;
            read_text(BufReader::new(File::open(path)?), specs)
        }
        TraceFormat::Binary => read_binary(BufReader::new(File::open(path)?)),
    }
}

pub fn save_trace(trace: &AccessTrace, path: &Path, format: &TraceFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        TraceFormat::Text { tables } => {
            write_text(trace, &mut out)?;
            write_table_specs(&trace.tables, tables)?;
        }
        TraceFormat::Binary => write_binary(trace, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

pub fn read_table_specs(path: &Path) -> Result<Vec<EmbTableSpec>> {
    let specs: Vec<EmbTableSpec> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    check_specs(&specs)?;
    Ok(specs)
}

pub fn write_table_specs(specs: &[EmbTableSpec], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, specs)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Parses text records. Records are numbered from 1 by line; blank lines and
/// lines starting with `#` are skipped. Sample ids must be non-decreasing and
/// (sample, table) pairs unique; pairs without a record have no lookups.
pub fn read_text<R: BufRead>(reader: R, specs: Vec<EmbTableSpec>) -> Result<AccessTrace> {
    check_specs(&specs)?;
    let position: HashMap<u32, usize> = specs
        .iter()
        .enumerate()
        .map(|(p, s)| (s.table_id, p))
        .collect();
    let mut samples: Vec<Sample> = Vec::new();
    // tables already recorded for the newest sample
    let mut seen = vec![false; specs.len()];

    for (line_no, line) in reader.lines().enumerate() {
        let record = line_no + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.splitn(3, ',');
        let (Some(sid), Some(tid), Some(idx)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::parse(
                record,
                "expected `sample_id,table_id,indices`",
            ));
        };
        let sample_id: usize = sid
            .trim()
            .parse()
            .map_err(|e| Error::parse(record, format!("bad sample_id {sid:?}: {e}")))?;
        let table_id: u32 = tid
            .trim()
            .parse()
            .map_err(|e| Error::parse(record, format!("bad table_id {tid:?}: {e}")))?;
        let &table = position
            .get(&table_id)
            .ok_or_else(|| Error::parse(record, format!("unknown table_id {table_id}")))?;

        if sample_id + 1 < samples.len() {
            return Err(Error::parse(
                record,
                format!("sample_id {sample_id} out of order"),
            ));
        }
        if sample_id >= samples.len() {
            seen.fill(false);
        }
        while samples.len() <= sample_id {
            samples.push(vec![Vec::new(); specs.len()]);
        }
        if std::mem::replace(&mut seen[table], true) {
            return Err(Error::parse(
                record,
                format!("duplicate record for sample {sample_id} table {table_id}"),
            ));
        }
        let slot = &mut samples[sample_id][table];

        let row_len = specs[table].row_len;
        for tok in idx.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let index: u64 = tok
                .parse()
                .map_err(|e| Error::parse(record, format!("bad index {tok:?}: {e}")))?;
            if index >= row_len {
                return Err(Error::OutOfBounds {
                    record,
                    sample: sample_id,
                    table_id,
                    index,
                    row_len,
                });
            }
            slot.push(index as u32);
        }
    }

    Ok(AccessTrace {
        tables: specs,
        samples,
    })
}

pub fn write_text<W: Write>(trace: &AccessTrace, out: &mut W) -> Result<()> {
    for (s, sample) in trace.samples.iter().enumerate() {
        for (t, lookups) in sample.iter().enumerate() {
            write!(out, "{s},{},", trace.tables[t].table_id)?;
            for (k, idx) in lookups.iter().enumerate() {
                if k > 0 {
                    out.write_all(b";")?;
                }
                write!(out, "{idx}")?;
            }
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_binary<W: Write>(trace: &AccessTrace, out: &mut W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(trace.tables.len() as u32).to_le_bytes())?;
    for spec in &trace.tables {
        out.write_all(&spec.table_id.to_le_bytes())?;
        out.write_all(&spec.row_len.to_le_bytes())?;
        out.write_all(&spec.dim.to_le_bytes())?;
        out.write_all(&spec.df.to_le_bytes())?;
        out.write_all(&spec.hot_thr.to_le_bytes())?;
    }
    out.write_all(&(trace.samples.len() as u64).to_le_bytes())?;
    for sample in &trace.samples {
        for lookups in sample {
            out.write_all(&(lookups.len() as u32).to_le_bytes())?;
            for idx in lookups {
                out.write_all(&idx.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

struct LeReader<R> {
    inner: R,
    record: usize,
}

impl<R: Read> LeReader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::parse(self.record, format!("truncated binary trace: {e}")))?;
        Ok(buf)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

/// Parses the binary format. Record numbers in errors count (sample, table)
/// index lists from 0.
pub fn read_binary<R: Read>(reader: R) -> Result<AccessTrace> {
    let mut r = LeReader {
        inner: reader,
        record: 0,
    };
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::parse(0, "bad magic, expected SCTR"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::parse(0, format!("unsupported version {version}")));
    }
    let n_tables = r.u32()? as usize;
    let mut tables = Vec::with_capacity(n_tables);
    for _ in 0..n_tables {
        tables.push(EmbTableSpec {
            table_id: r.u32()?,
            row_len: r.u64()?,
            dim: r.u32()?,
            df: r.u32()?,
            hot_thr: r.f64()?,
        });
    }
    check_specs(&tables)?;
    let n_samples = r.u64()? as usize;
    let mut samples = Vec::with_capacity(n_samples.min(1 << 20));
    for s in 0..n_samples {
        let mut sample = Vec::with_capacity(n_tables);
        for spec in &tables {
            let len = r.u32()? as usize;
            let mut lookups = Vec::with_capacity(len);
            for _ in 0..len {
                let idx = r.u32()?;
                if u64::from(idx) >= spec.row_len {
                    return Err(Error::OutOfBounds {
                        record: r.record,
                        sample: s,
                        table_id: spec.table_id,
                        index: u64::from(idx),
                        row_len: spec.row_len,
                    });
                }
                lookups.push(idx);
            }
            sample.push(lookups);
            r.record += 1;
        }
        samples.push(sample);
    }
    Ok(AccessTrace { tables, samples })
}

// ── Synthesis ────────────────────────────────────────────────────────────────

/// Row counts of synthesized tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RowLenDist {
    Fixed {
        rows: u64,
    },
    /// Log-uniform between `min` and `max` inclusive.
    LogUniform {
        min: u64,
        max: u64,
    },
}

/// Per-sample lookup count model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PfModel {
    /// Poisson around the table mean, clamped to `[0, 4 * mean]`.
    #[default]
    Poisson,
    /// Every sample looks up `round(mean)` rows.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTraceConfig {
    pub num_tables: usize,
    pub rows: RowLenDist,
    pub dim: u32,
    pub df: u32,
    /// Zipf exponent of row popularity.
    pub alpha: f64,
    /// Mean pooling factor used for every table without an override.
    pub mean_pf: f64,
    /// Optional per-table mean pooling factors.
    #[serde(default)]
    pub table_pf: Option<Vec<f64>>,
    #[serde(default)]
    pub pf_model: PfModel,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SyntheticTraceConfig {
    fn default() -> Self {
        SyntheticTraceConfig {
            num_tables: 8,
            rows: RowLenDist::Fixed { rows: 100_000 },
            dim: 64,
            df: 4,
            alpha: 1.05,
            mean_pf: 8.34,
            table_pf: None,
            pf_model: PfModel::Poisson,
            samples: 10_000,
            seed: 7,
        }
    }
}

impl SyntheticTraceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_tables == 0 {
            return bad("num_tables must be >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        match self.rows {
            RowLenDist::Fixed { rows: 0 } => return bad("rows must be >= 1".into()),
            RowLenDist::LogUniform { min, max } if min == 0 || min > max => {
                return bad(format!("bad log-uniform row range [{min}, {max}]"))
            }
            _ => {}
        }
        if self.dim == 0 || self.df == 0 {
            return bad("dim and df must be >= 1".into());
        }
        for pf in self.table_pf.iter().flatten().chain([&self.mean_pf]) {
            if !(*pf >= 0.0 && pf.is_finite()) {
                return bad(format!("mean PF must be >= 0, got {pf}"));
            }
        }
        if let Some(pfs) = &self.table_pf {
            if pfs.len() != self.num_tables {
                return bad(format!(
                    "table_pf has {} entries for {} tables",
                    pfs.len(),
                    self.num_tables
                ));
            }
        }
        Ok(())
    }

    fn pf_of(&self, table: usize) -> f64 {
        self.table_pf
            .as_ref()
            .map_or(self.mean_pf, |pfs| pfs[table])
    }
}

/// RNG stream for table `table`; stream 0 is reserved for table shapes.
fn table_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Synthesizes a power-law trace. Output depends only on `cfg`; each table
/// draws from its own RNG stream so per-table work can run in parallel.
pub fn generate_trace(cfg: &SyntheticTraceConfig) -> Result<AccessTrace> {
    cfg.validate()?;

    let mut shape_rng = table_rng(cfg.seed, 0);
    let mut tables: Vec<EmbTableSpec> = (0..cfg.num_tables)
        .map(|j| {
            let row_len = match cfg.rows {
                RowLenDist::Fixed { rows } => rows,
                RowLenDist::LogUniform { min, max } => {
                    let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
                    let v = shape_rng.random_range(lo..=hi).exp().round() as u64;
                    v.clamp(min, max)
                }
            };
            EmbTableSpec {
                table_id: j as u32,
                row_len,
                dim: cfg.dim,
                df: cfg.df,
                hot_thr: 1.0,
            }
        })
        .collect();
    apply_hot_threshold_policy(&mut tables);
    check_specs(&tables)?;

    let jobs: Vec<usize> = (0..cfg.num_tables).collect();
    let columns = crate::par::map(&jobs, |&j| generate_table(tables[j].row_len, cfg, j));
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;

    let samples = (0..cfg.samples)
        .map(|s| columns.iter().map(|col| col[s].clone()).collect())
        .collect();
    Ok(AccessTrace { tables, samples })
}

fn generate_table(row_len: u64, cfg: &SyntheticTraceConfig, table: usize) -> Result<Vec<Vec<u32>>> {
    let mut rng = table_rng(cfg.seed, table as u64 + 1);
    let mut perm: Vec<u32> = (0..row_len).map(|r| r as u32).collect();
    perm.shuffle(&mut rng);

    let zipf =
        Zipf::new(row_len as f64, cfg.alpha).map_err(|e| Error::Config(format!("zipf: {e}")))?;
    let mean = cfg.pf_of(table);
    let cap = (4.0 * mean).floor() as usize;
    let poisson = if mean > 0.0 {
        Some(Poisson::new(mean).map_err(|e| Error::Config(format!("poisson: {e}")))?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let pf = match (cfg.pf_model, &poisson) {
            (_, None) => 0,
            (PfModel::Constant, Some(_)) => mean.round() as usize,
            (PfModel::Poisson, Some(p)) => (p.sample(&mut rng) as usize).min(cap),
        };
        let lookups = (0..pf)
            .map(|_| {
                let rank = zipf.sample(&mut rng) as usize - 1;
                perm[rank.min(perm.len() - 1)]
            })
            .collect();
        out.push(lookups);
    }
    Ok(out)
}

/// Uniform subsample without replacement of `round(rate * N)` samples, keeping
/// the original sample order.
pub fn subsample(trace: &AccessTrace, rate: f64, seed: u64) -> Result<AccessTrace> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Config(format!(
            "subsample rate {rate} outside (0, 1]"
        )));
    }
    let n = trace.samples.len();
    let k = (rate * n as f64).round() as usize;
    if k == 0 {
        return Err(Error::EmptyTrace(format!(
            "rate {rate} of {n} samples keeps none"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(AccessTrace {
        tables: trace.tables.clone(),
        samples: picked
            .into_iter()
            .map(|i| trace.samples[i].clone())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_table(row_len: u64) -> Vec<EmbTableSpec> {
        vec![EmbTableSpec::new(0, row_len, 4, 4, 1.0).unwrap()]
    }

    #[test]
    fn text_round_trip_and_pf() {
        let text = "0,0,0;1\n1,0,3\n";
        let trace = read_text(text.as_bytes(), one_table(4)).unwrap();
        assert_eq!(trace.num_samples(), 2);
        assert_eq!(trace.pf_list(0), vec![2, 1]);

        let mut buf = Vec::new();
        write_text(&trace, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn text_bounds_error_names_sample() {
        let err = read_text("0,0,4\n".as_bytes(), one_table(4)).unwrap_err();
        match err {
            Error::OutOfBounds {
                record,
                sample,
                index,
                ..
            } => {
                assert_eq!((record, sample, index), (1, 0, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn text_parse_errors() {
        assert!(matches!(
            read_text("0,0\n".as_bytes(), one_table(4)),
            Err(Error::Parse { record: 1, .. })
        ));
        assert!(matches!(
            read_text("0,9,1\n".as_bytes(), one_table(4)),
            Err(Error::Parse { record: 1, .. })
        ));
        assert!(matches!(
            read_text("0,0,1\n0,0,2\n".as_bytes(), one_table(4)),
            Err(Error::Parse { record: 2, .. })
        ));
        assert!(matches!(
            read_text("3,0,1\n1,0,x\n".as_bytes(), one_table(4)),
            Err(Error::Parse { record: 2, .. })
        ));
    }

    #[test]
    fn missing_records_are_empty_lookups() {
        let trace = read_text("# header\n0,0,1\n\n2,0,2\n".as_bytes(), one_table(4)).unwrap();
        assert_eq!(trace.pf_list(0), vec![1, 0, 1]);
    }

    #[test]
    fn binary_round_trip() {
        let cfg = SyntheticTraceConfig {
            num_tables: 3,
            rows: RowLenDist::LogUniform { min: 10, max: 5000 },
            samples: 50,
            ..Default::default()
        };
        let trace = generate_trace(&cfg).unwrap();
        let mut buf = Vec::new();
        write_binary(&trace, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SCTR");
        assert_eq!(read_binary(buf.as_slice()).unwrap(), trace);
    }

    #[test]
    fn binary_rejects_bad_magic_and_truncation() {
        assert!(read_binary(&b"XXXX\x01\0\0\0"[..]).is_err());
        let trace = AccessTrace::new(one_table(4), vec![vec![vec![1, 2]]]).unwrap();
        let mut buf = Vec::new();
        write_binary(&trace, &mut buf).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(matches!(
            read_binary(buf.as_slice()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticTraceConfig {
            samples: 200,
            rows: RowLenDist::Fixed { rows: 1000 },
            ..Default::default()
        };
        let a = generate_trace(&cfg).unwrap();
        let b = generate_trace(&cfg).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_binary(&a, &mut ba).unwrap();
        write_binary(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);

        let other = generate_trace(&SyntheticTraceConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn constant_pf_model() {
        let cfg = SyntheticTraceConfig {
            num_tables: 2,
            rows: RowLenDist::Fixed { rows: 100 },
            mean_pf: 3.0,
            pf_model: PfModel::Constant,
            samples: 20,
            ..Default::default()
        };
        let trace = generate_trace(&cfg).unwrap();
        assert!(trace.pf_list(1).iter().all(|&pf| pf == 3));
    }

    #[test]
    fn pf_clamped_to_four_times_mean() {
        let cfg = SyntheticTraceConfig {
            num_tables: 1,
            rows: RowLenDist::Fixed { rows: 100 },
            mean_pf: 0.5,
            samples: 5000,
            ..Default::default()
        };
        let trace = generate_trace(&cfg).unwrap();
        assert!(trace.pf_list(0).iter().all(|&pf| pf <= 2));
    }

    #[test]
    fn invalid_configs() {
        let base = SyntheticTraceConfig::default();
        for cfg in [
            SyntheticTraceConfig {
                alpha: 0.0,
                ..base.clone()
            },
            SyntheticTraceConfig {
                mean_pf: -1.0,
                ..base.clone()
            },
            SyntheticTraceConfig {
                num_tables: 0,
                ..base.clone()
            },
            SyntheticTraceConfig {
                table_pf: Some(vec![1.0]),
                ..base.clone()
            },
        ] {
            assert!(matches!(generate_trace(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn subsample_sizes() {
        let tables = one_table(4);
        let samples: Vec<Sample> = (0..131_072u32).map(|i| vec![vec![i % 4]]).collect();
        let trace = AccessTrace::new(tables.clone(), samples).unwrap();
        assert_eq!(subsample(&trace, 0.1, 1).unwrap().num_samples(), 13_107);
        assert_eq!(subsample(&trace, 1.0, 1).unwrap(), trace);

        let pair = AccessTrace::new(tables, vec![vec![vec![0]], vec![vec![1]]]).unwrap();
        let a = subsample(&pair, 0.5, 42).unwrap();
        assert_eq!(a.num_samples(), 1);
        assert_eq!(a, subsample(&pair, 0.5, 42).unwrap());

        assert!(matches!(
            subsample(&pair, 0.2, 1),
            Err(Error::EmptyTrace(_))
        ));
        assert!(matches!(subsample(&pair, 0.0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn hot_threshold_policy() {
        let mut specs = vec![
            EmbTableSpec::new(0, 10, 4, 4, 0.5).unwrap(),
            EmbTableSpec::new(1, 1_000_000, 4, 4, 0.5).unwrap(),
            EmbTableSpec::new(2, 100, 4, 4, 0.5).unwrap(),
        ];
        apply_hot_threshold_policy(&mut specs);
        let thr: Vec<f64> = specs.iter().map(|s| s.hot_thr).collect();
        assert_eq!(thr, vec![1.0, 0.99, 0.99]);
    }

    #[test]
    fn spec_validation() {
        assert!(EmbTableSpec::new(0, 0, 4, 4, 1.0).is_err());
        assert!(EmbTableSpec::new(0, 4, 4, 4, 0.0).is_err());
        assert!(EmbTableSpec::new(0, 4, 4, 4, 1.01).is_err());
        let dup = vec![
            EmbTableSpec::new(3, 4, 4, 4, 1.0).unwrap(),
            EmbTableSpec::new(3, 4, 4, 4, 1.0).unwrap(),
        ];
        assert!(AccessTrace::new(dup, vec![]).is_err());
    }
}
