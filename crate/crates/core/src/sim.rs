//! Trace-driven latency simulation and analytic core cycle models.
//!
//! Every lookup of a batch is routed through the remap tables to a tier of
//! the device holding its table. Tiers of one device work in parallel, as do
//! the devices, so a device costs its slowest tier and the embedding stage
//! costs its slowest device. MLP stages are data parallel over the MLP
//! devices and the bottom MLP overlaps the embedding stage:
//!
//! ```text
//! latency = max(t_bot, t_emb) + t_top + transfer
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{CoreType, PlannerSolution};
use crate::remap::RemapTable;
use crate::stats::HardwareProfile;
use crate::trace::{AccessTrace, Sample};
use crate::tt::TTShape;

/// Tile and array extents of the EMB and MLP cores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreGeometry {
    /// Output tile of the TT matmul engine.
    pub emb_tile_rows: usize,
    pub emb_tile_cols: usize,
    /// PE array of one MLP compute unit.
    pub pe_rows: usize,
    pub pe_cols: usize,
    pub compute_units: usize,
    pub clock_ns: f64,
}

impl Default for CoreGeometry {
    fn default() -> Self {
        CoreGeometry {
            emb_tile_rows: 16,
            emb_tile_cols: 32,
            pe_rows: 8,
            pe_cols: 16,
            compute_units: 4,
            clock_ns: 5.0,
        }
    }
}

impl CoreGeometry {
    pub fn validate(&self) -> Result<()> {
        let extents = [
            self.emb_tile_rows,
            self.emb_tile_cols,
            self.pe_rows,
            self.pe_cols,
            self.compute_units,
        ];
        if extents.contains(&0) || !(self.clock_ns > 0.0 && self.clock_ns.is_finite()) {
            return Err(Error::Config(format!(
                "core geometry needs positive extents and clock, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// How a mini-batch is spread over the MLP compute units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlpMode {
    /// Each unit takes its own slice of the mini-batch.
    #[default]
    Throughput,
    /// Every unit sees the whole mini-batch and computes a slice of the outputs.
    Latency,
}

fn tiles(n: usize, tile: usize) -> u64 {
    n.div_ceil(tile) as u64
}

/// Cycles to rebuild one embedding row from TT cores: the chain of
/// `(prod J_1..J_k) x R_k` by `R_k x (J_{k+1} R_{k+1})` products, each costing
/// its output tiles times the inner dimension.
pub fn estimate_tt_latency(shape: &TTShape, geometry: &CoreGeometry) -> u64 {
    let j = &shape.col_factors;
    let r = &shape.ranks;
    let mut rows = 1usize;
    let mut cycles = 0u64;
    for k in 0..shape.d().saturating_sub(1) {
        rows *= j[k];
        let inner = r[k + 1];
        let cols = j[k + 1] * r[k + 2];
        cycles += tiles(rows, geometry.emb_tile_rows)
            * tiles(cols, geometry.emb_tile_cols)
            * inner as u64;
    }
    cycles.max(1)
}

/// Multiply-accumulates of one sample through the layers `[in, .., out]`.
pub fn mlp_macs(layers: &[usize]) -> u64 {
    layers.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
}

/// Cycles for one mini-batch of `batch` samples through `layers`.
pub fn estimate_mlp_latency(
    layers: &[usize],
    geometry: &CoreGeometry,
    batch: usize,
    mode: MlpMode,
) -> Result<u64> {
    if layers.len() < 2 || layers.contains(&0) {
        return Err(Error::Config(format!(
            "an MLP needs at least one layer of non-zero width, got widths {layers:?}"
        )));
    }
    let cus = geometry.compute_units;
    let cycles = layers
        .windows(2)
        .map(|w| {
            let (inp, out) = (w[0], w[1]);
            let (rows, cols) = match mode {
                MlpMode::Throughput => (batch.div_ceil(cus), out),
                MlpMode::Latency => (batch, out.div_ceil(cus)),
            };
            tiles(rows, geometry.pe_rows) * tiles(cols, geometry.pe_cols) * inp as u64
        })
        .sum();
    Ok(cycles)
}

/// Knobs of the simulation that are not part of the hardware profile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Fixed host/all-to-all transfer time added to every batch.
    #[serde(default)]
    pub transfer_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub batch_id: usize,
    pub latency_ns: f64,
    pub emb_ns: f64,
    pub mlp_bot_ns: f64,
    pub mlp_top_ns: f64,
    /// Lookups routed to `[DRAM, TT, SSD]` over all devices.
    pub tier_lookups: [u64; 3],
    /// Busy time of `[DRAM, TT, SSD]` per device.
    pub device_tier_ns: Vec<[f64; 3]>,
}

impl BatchReport {
    pub fn device_ns(&self) -> Vec<f64> {
        self.device_tier_ns
            .iter()
            .map(|t| t[0].max(t[1]).max(t[2]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub batch_size: u32,
    pub batches: usize,
    pub mean_latency_ns: f64,
    pub p50_latency_ns: f64,
    pub p99_latency_ns: f64,
    pub ips: f64,
    pub mean_emb_ns: f64,
    pub mlp_bot_ns: f64,
    pub mlp_top_ns: f64,
    pub tier_lookups: [u64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub summary: SimSummary,
    pub batches: Vec<BatchReport>,
}

/// Routing of trace tables to plan devices and remap tables.
pub struct Simulator<'a> {
    profile: &'a HardwareProfile,
    opts: SimOptions,
    devices: usize,
    mlp_devices: usize,
    /// Per trace table position: `(device, remap)`.
    routes: Vec<(usize, &'a RemapTable)>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        plan: &'a PlannerSolution,
        remaps: &'a [RemapTable],
        tables: &[crate::trace::EmbTableSpec],
        profile: &'a HardwareProfile,
        opts: SimOptions,
    ) -> Result<Self> {
        profile.validate()?;
        if plan.cores.len() != profile.devices {
            return Err(Error::Shape(format!(
                "plan covers {} devices, profile has {}",
                plan.cores.len(),
                profile.devices
            )));
        }
        let mut routes = Vec::with_capacity(tables.len());
        for spec in tables {
            let unknown = || Error::Config(format!("table {} is not in the plan", spec.table_id));
            let j = plan
                .tables
                .iter()
                .position(|t| t.table_id == spec.table_id)
                .ok_or_else(unknown)?;
            let device = plan.device_of(j).ok_or_else(unknown)?;
            if plan.cores[device] != CoreType::Emb {
                return Err(Error::Config(format!(
                    "table {} sits on MLP device {device}",
                    spec.table_id
                )));
            }
            let remap = remaps
                .iter()
                .find(|r| r.table_id == spec.table_id)
                .ok_or_else(|| Error::Config(format!("no remap for table {}", spec.table_id)))?;
            if remap.row_len() as u64 != spec.row_len {
                return Err(Error::Shape(format!(
                    "remap of table {} has {} rows, table has {}",
                    spec.table_id,
                    remap.row_len(),
                    spec.row_len
                )));
            }
            routes.push((device, remap));
        }
        Ok(Simulator {
            profile,
            opts,
            devices: plan.cores.len(),
            mlp_devices: plan.mlp_devices(),
            routes,
        })
    }

    fn mlp_ns(&self) -> (f64, f64) {
        if self.mlp_devices == 0 {
            return (f64::INFINITY, f64::INFINITY);
        }
        let scale = self.profile.mini_batches() / self.mlp_devices as f64;
        (
            self.profile.t_mlp_bot * scale,
            self.profile.t_mlp_top * scale,
        )
    }

    pub fn simulate_batch(&self, batch_id: usize, window: &[Sample]) -> Result<BatchReport> {
        let mut counts = vec![[0u64; 3]; self.devices];
        for sample in window {
            if sample.len() != self.routes.len() {
                return Err(Error::Shape(format!(
                    "sample has {} tables, expected {}",
                    sample.len(),
                    self.routes.len()
                )));
            }
            for (lookups, &(device, remap)) in sample.iter().zip(&self.routes) {
                for &raw in lookups {
                    let (tier, _) = remap.resolve(u64::from(raw))?;
                    counts[device][tier as usize] += 1;
                }
            }
        }
        let p = self.profile;
        let lat = [p.t_dram, p.t_tt, p.t_ssd];
        let device_tier_ns: Vec<[f64; 3]> = counts
            .iter()
            .map(|c| [0, 1, 2].map(|t| c[t] as f64 * lat[t]))
            .collect();
        let emb_ns = device_tier_ns
            .iter()
            .map(|t| t[0].max(t[1]).max(t[2]))
            .fold(0.0, f64::max);
        let (bot, top) = self.mlp_ns();
        let mut tier_lookups = [0u64; 3];
        for c in &counts {
            for t in 0..3 {
                tier_lookups[t] += c[t];
            }
        }
        Ok(BatchReport {
            batch_id,
            latency_ns: bot.max(emb_ns) + top + self.opts.transfer_ns,
            emb_ns,
            mlp_bot_ns: bot,
            mlp_top_ns: top,
            tier_lookups,
            device_tier_ns,
        })
    }

    /// Folds [`Simulator::simulate_batch`] over consecutive full batches; a
    /// trailing partial batch is ignored.
    pub fn simulate_trace(&self, trace: &AccessTrace) -> Result<SimReport> {
        let bs = self.profile.batch_size as usize;
        if trace.samples.len() < bs {
            return Err(Error::ShortTrace {
                samples: trace.samples.len(),
                batch: bs,
            });
        }
        let windows: Vec<(usize, &[Sample])> = trace.samples.chunks_exact(bs).enumerate().collect();
        let batches = crate::par::map(&windows, |&(id, w)| self.simulate_batch(id, w))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(SimReport {
            summary: summarize(self.profile.batch_size, &batches),
            batches,
        })
    }
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize(batch_size: u32, batches: &[BatchReport]) -> SimSummary {
    let n = batches.len() as f64;
    let mut lat: Vec<f64> = batches.iter().map(|b| b.latency_ns).collect();
    let mean = lat.iter().sum::<f64>() / n;
    lat.sort_by(f64::total_cmp);
    let mut tier_lookups = [0u64; 3];
    for b in batches {
        for t in 0..3 {
            tier_lookups[t] += b.tier_lookups[t];
        }
    }
    SimSummary {
        batch_size,
        batches: batches.len(),
        mean_latency_ns: mean,
        p50_latency_ns: percentile(&lat, 50.0),
        p99_latency_ns: percentile(&lat, 99.0),
        ips: f64::from(batch_size) / (mean * 1e-9),
        mean_emb_ns: batches.iter().map(|b| b.emb_ns).sum::<f64>() / n,
        mlp_bot_ns: batches[0].mlp_bot_ns,
        mlp_top_ns: batches[0].mlp_top_ns,
        tier_lookups,
    }
}

pub fn simulate_batch(
    plan: &PlannerSolution,
    remaps: &[RemapTable],
    tables: &[crate::trace::EmbTableSpec],
    window: &[Sample],
    profile: &HardwareProfile,
    opts: SimOptions,
) -> Result<BatchReport> {
    Simulator::new(plan, remaps, tables, profile, opts)?.simulate_batch(0, window)
}

pub fn simulate_trace(
    plan: &PlannerSolution,
    remaps: &[RemapTable],
    trace: &AccessTrace,
    profile: &HardwareProfile,
    opts: SimOptions,
) -> Result<SimReport> {
    Simulator::new(plan, remaps, &trace.tables, profile, opts)?.simulate_trace(trace)
}

// ── Report files ─────────────────────────────────────────────────────────────

/// One CSV row per batch: latency, tier lookup counts and per-device times.
pub fn write_report_csv<W: Write>(report: &SimReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let devices = report.batches.first().map_or(0, |b| b.device_tier_ns.len());
    let mut header: Vec<String> = [
        "batch_id",
        "latency_ns",
        "emb_ns",
        "mlp_bot_ns",
        "mlp_top_ns",
        "dram_lookups",
        "tt_lookups",
        "ssd_lookups",
    ]
    .iter()
    .map(ToString::to_string)
    .collect();
    for m in 0..devices {
        for tier in ["dram", "tt", "ssd"] {
            header.push(format!("dev{m}_{tier}_ns"));
        }
        header.push(format!("dev{m}_ns"));
    }
    w.write_record(&header)?;
    for b in &report.batches {
        let mut row = vec![
            b.batch_id.to_string(),
            b.latency_ns.to_string(),
            b.emb_ns.to_string(),
            b.mlp_bot_ns.to_string(),
            b.mlp_top_ns.to_string(),
        ];
        row.extend(b.tier_lookups.iter().map(ToString::to_string));
        for t in &b.device_tier_ns {
            row.extend(t.iter().map(ToString::to_string));
            row.push(t[0].max(t[1]).max(t[2]).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.json` next to each other.
pub fn save_report(report: &SimReport, csv_path: &Path, json_path: &Path) -> Result<()> {
    write_report_csv(report, BufWriter::new(File::create(csv_path)?))?;
    let mut out = BufWriter::new(File::create(json_path)?);
    serde_json::to_writer_pretty(&mut out, &report.summary)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_summary(path: &Path) -> Result<SimSummary> {
    Ok(serde_json::from_reader(std::io::BufReader::new(
        File::open(path)?,
    ))?)
}
