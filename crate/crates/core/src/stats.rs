//! Per-table access statistics and the hardware profile fed to the planner.
//!
//! The inverse CDF is sampled on an access-coverage grid: `icdf[i]` is the
//! smallest fraction of a table's rows (hottest first) whose lookups cover at
//! least `i / step` of all lookups of that table, with `step = min(row_len, 100)`.
//! Between grid points the curve is read by linear interpolation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{self, CoreGeometry, MlpMode};
use crate::trace::{AccessTrace, EmbTableSpec};
use crate::tt::TTShape;

/// Upper bound on the interpolation grid.
pub const MAX_STEP: usize = 100;

/// Cost-model parameters derived for one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub table_id: u32,
    pub step: usize,
    /// `step + 1` row fractions, non-decreasing, `icdf[0] = 0`.
    pub icdf: Vec<f64>,
    /// Mean lookups per sample.
    pub avg_pf: f64,
    /// `step + 1` TT-core byte sizes indexed by row-fraction grid point.
    pub tt_cm: Vec<u64>,
    pub total_accesses: u64,
    /// Set when the table saw no lookups at all.
    #[serde(default)]
    pub cold: bool,
}

impl TableStats {
    /// Rows covering grid point `i` of a table with `row_len` rows.
    pub fn rows_at(&self, i: usize, row_len: u64) -> u64 {
        (self.icdf[i] * row_len as f64).round() as u64
    }

    /// Linear interpolation of the inverse CDF at access fraction `f`.
    pub fn icdf_interp(&self, f: f64) -> f64 {
        let x = f.clamp(0.0, 1.0) * self.step as f64;
        let lo = (x.floor() as usize).min(self.step);
        let hi = (lo + 1).min(self.step);
        let t = x - lo as f64;
        self.icdf[lo] + (self.icdf[hi] - self.icdf[lo]) * t
    }

    /// Smallest row-fraction grid index whose TT footprint covers `rows` rows.
    pub fn tt_grid_index(&self, rows: u64, row_len: u64) -> usize {
        if rows == 0 {
            return 0;
        }
        let idx = (u128::from(rows) * self.step as u128).div_ceil(u128::from(row_len));
        (idx as usize).min(self.step)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("table {}: {m}", self.table_id)));
        if self.step == 0 {
            return bad("step must be >= 1".into());
        }
        if self.icdf.len() != self.step + 1 || self.tt_cm.len() != self.step + 1 {
            return bad(format!(
                "icdf/tt_cm must hold step + 1 = {} points",
                self.step + 1
            ));
        }
        if self.icdf[0] != 0.0
            || self.icdf.windows(2).any(|w| w[1] < w[0])
            || self.icdf[self.step] > 1.0
        {
            return bad("icdf must rise from 0 and stay within [0, 1]".into());
        }
        if self.tt_cm.windows(2).any(|w| w[1] < w[0]) {
            return bad("tt_cm must be non-decreasing".into());
        }
        if !(self.avg_pf >= 0.0 && self.avg_pf.is_finite()) {
            return bad(format!("avg_pf {} must be >= 0", self.avg_pf));
        }
        Ok(())
    }
}

/// Lookup count of every row of the table at position `table`.
pub fn access_counts(trace: &AccessTrace, table: usize) -> Vec<u64> {
    let mut counts = vec![0u64; trace.tables[table].row_len as usize];
    for sample in &trace.samples {
        for &idx in &sample[table] {
            counts[idx as usize] += 1;
        }
    }
    counts
}

/// Every row of the table, hottest first. Ties and never-accessed rows are
/// ordered by ascending row index.
pub fn hotness_order(trace: &AccessTrace, table: usize) -> Vec<u32> {
    let counts = access_counts(trace, table);
    let mut order: Vec<u32> = (0..counts.len() as u32).collect();
    order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    order
}

fn position(trace: &AccessTrace, table_id: u32) -> Result<usize> {
    trace
        .table_position(table_id)
        .ok_or_else(|| Error::Config(format!("table {table_id} not in trace")))
}

/// Inverse CDF of one table. `avg_pf` and `tt_cm` are left empty.
pub fn compute_cdf(trace: &AccessTrace, table_id: u32) -> Result<TableStats> {
    let table = position(trace, table_id)?;
    let row_len = trace.tables[table].row_len;
    let step = (row_len as usize).min(MAX_STEP);

    let mut counts: Vec<u64> = access_counts(trace, table)
        .into_iter()
        .filter(|&c| c > 0)
        .collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let total: u64 = counts.iter().sum();

    let mut icdf = vec![0.0; step + 1];
    if total > 0 {
        // cum[r] = lookups covered by the r hottest rows
        let mut cum = Vec::with_capacity(counts.len() + 1);
        cum.push(0u64);
        for c in &counts {
            cum.push(cum.last().unwrap() + c);
        }
        for (i, slot) in icdf.iter_mut().enumerate() {
            let need = i as u128 * u128::from(total);
            let rows = cum.partition_point(|&c| u128::from(c) * (step as u128) < need);
            *slot = rows as f64 / row_len as f64;
        }
    }

    Ok(TableStats {
        table_id,
        step,
        icdf,
        avg_pf: 0.0,
        tt_cm: Vec::new(),
        total_accesses: total,
        cold: total == 0,
    })
}

/// Mean lookups per sample.
pub fn compute_pf(trace: &AccessTrace, table_id: u32) -> Result<f64> {
    let table = position(trace, table_id)?;
    if trace.samples.is_empty() {
        return Err(Error::EmptyTrace("pooling factor needs samples".into()));
    }
    let lookups: usize = trace.samples.iter().map(|s| s[table].len()).sum();
    Ok(lookups as f64 / trace.samples.len() as f64)
}

/// TT compression settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtOptions {
    pub rank: usize,
    /// Number of TT cores.
    pub d: usize,
}

impl Default for TtOptions {
    fn default() -> Self {
        TtOptions { rank: 4, d: 3 }
    }
}

/// TT footprint in bytes for every row-fraction grid point: grid point `i`
/// compresses `ceil(i / step * row_len)` rows. Kept non-decreasing by carrying
/// the running maximum, since balanced factorizations of neighbouring row
/// counts can differ by a core reshuffle.
pub fn compute_tt_cm_curve(spec: &EmbTableSpec, step: usize, tt: TtOptions) -> Result<Vec<u64>> {
    if tt.rank == 0 || tt.d < 2 {
        return Err(Error::Config(format!(
            "TT needs rank >= 1 and d >= 2, got rank {} d {}",
            tt.rank, tt.d
        )));
    }
    // fail early on an unfactorizable dimension even when step is tiny
    crate::tt::factor_dim(spec.dim, tt.d)?;

    let mut curve = Vec::with_capacity(step + 1);
    let mut best = 0u64;
    for i in 0..=step {
        let rows = (u128::from(spec.row_len) * i as u128).div_ceil(step as u128) as u64;
        let bytes = if rows == 0 {
            0
        } else {
            let shape = TTShape::for_region(rows, spec.dim, tt.d, tt.rank)?;
            shape.param_count() as u64 * u64::from(spec.df)
        };
        best = best.max(bytes);
        curve.push(best);
    }
    Ok(curve)
}

/// Full statistics for every table of `trace`.
pub fn analyze_trace(trace: &AccessTrace, tt: TtOptions) -> Result<Vec<TableStats>> {
    let results = crate::par::map(&trace.tables, |spec| -> Result<TableStats> {
        let mut stats = compute_cdf(trace, spec.table_id)?;
        stats.avg_pf = compute_pf(trace, spec.table_id)?;
        stats.tt_cm = compute_tt_cm_curve(spec, stats.step, tt)?;
        Ok(stats)
    });
    results.into_iter().collect()
}

// ── Hardware profile ─────────────────────────────────────────────────────────

/// Device counts, per-device capacities (bytes) and latencies (ns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    /// Number of devices `M`.
    pub devices: usize,
    pub cap_bram: u64,
    pub cap_dram: u64,
    pub cap_ssd: u64,
    /// Per-lookup latencies.
    pub t_dram: f64,
    pub t_ssd: f64,
    pub t_tt: f64,
    /// Per-mini-batch MLP latencies.
    pub t_mlp_top: f64,
    pub t_mlp_bot: f64,
    pub batch_size: u32,
    /// Batch processed by one MLP core tile pass.
    pub mini_batch: u32,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        HardwareProfile {
            devices: 8,
            cap_bram: 4_325_000,
            cap_dram: 4 << 30,
            cap_ssd: 3_840_000_000_000,
            t_dram: 100.0,
            t_ssd: 45_000.0,
            t_tt: 40.0,
            t_mlp_top: 1_000.0,
            t_mlp_bot: 1_000.0,
            batch_size: 1024,
            mini_batch: 32,
        }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.devices < 2 {
            return bad(format!(
                "need at least 2 devices (one MLP, one EMB), got {}",
                self.devices
            ));
        }
        for (name, t) in [
            ("t_dram", self.t_dram),
            ("t_ssd", self.t_ssd),
            ("t_tt", self.t_tt),
            ("t_mlp_top", self.t_mlp_top),
            ("t_mlp_bot", self.t_mlp_bot),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("{name} must be > 0, got {t}"));
            }
        }
        if self.mini_batch == 0 || self.mini_batch > self.batch_size {
            return bad(format!(
                "need 1 <= mini_batch ({}) <= batch_size ({})",
                self.mini_batch, self.batch_size
            ));
        }
        Ok(())
    }

    /// `BS / BS_mini` as a real ratio.
    pub fn mini_batches(&self) -> f64 {
        f64::from(self.batch_size) / f64::from(self.mini_batch)
    }
}

/// Core geometry plus the workloads whose latencies get calibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreModel {
    pub geometry: CoreGeometry,
    /// Shape of one TT row reconstruction.
    pub tt_shape: TTShape,
    /// Layer widths `[in, hidden.., out]`; empty keeps the profile value.
    #[serde(default)]
    pub bottom_mlp: Vec<usize>,
    #[serde(default)]
    pub top_mlp: Vec<usize>,
    #[serde(default)]
    pub mlp_mode: MlpMode,
}

/// Replaces `t_tt`, `t_mlp_top` and `t_mlp_bot` with analytic cycle estimates
/// times the clock period. Memory latencies and batch sizes are untouched.
pub fn calibrate_latencies(
    profile: &HardwareProfile,
    model: &CoreModel,
) -> Result<HardwareProfile> {
    let clock = model.geometry.clock_ns;
    let mut out = profile.clone();
    out.t_tt = sim::estimate_tt_latency(&model.tt_shape, &model.geometry) as f64 * clock;
    let mini = profile.mini_batch as usize;
    if !model.bottom_mlp.is_empty() {
        out.t_mlp_bot =
            sim::estimate_mlp_latency(&model.bottom_mlp, &model.geometry, mini, model.mlp_mode)?
                as f64
                * clock;
    }
    if !model.top_mlp.is_empty() {
        out.t_mlp_top =
            sim::estimate_mlp_latency(&model.top_mlp, &model.geometry, mini, model.mlp_mode)?
                as f64
                * clock;
    }
    Ok(out)
}

// ── Stats file ───────────────────────────────────────────────────────────────

/// Everything the planner needs about the tables, without the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub tt: TtOptions,
    pub specs: Vec<EmbTableSpec>,
    pub stats: Vec<TableStats>,
}

impl StatsFile {
    pub fn validate(&self) -> Result<()> {
        if self.specs.len() != self.stats.len() {
            return Err(Error::Config(format!(
                "{} specs but {} stats entries",
                self.specs.len(),
                self.stats.len()
            )));
        }
        for (spec, st) in self.specs.iter().zip(&self.stats) {
            spec.validate()?;
            st.validate()?;
            if spec.table_id != st.table_id {
                return Err(Error::Config(format!(
                    "stats for table {} aligned with spec {}",
                    st.table_id, spec.table_id
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: StatsFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }
}
