//! Sharding planner: picks a core type per device, places every table on an
//! EMB device and splits each table row-wise across DRAM, TT-compressed BRAM
//! and SSD.
//!
//! Per table `j` the split is a pair of grid indices `(a, b)` on the table's
//! access-coverage grid: the `a / step` hottest share of lookups is served from
//! DRAM and the next `b / step` from TT cores, the rest from SSD. Byte
//! footprints follow from the inverse CDF. The objective is
//!
//! ```text
//! C = max(c_mlp_bot, c_emb) + c_mlp_top
//! c_emb = max over EMB devices m of max(c_dram_m, c_tt_m, c_ssd_m)
//! ```
//!
//! where each tier cost is `pf_j * BS * share * t_tier` summed over the tables
//! of the device, and MLP costs are `t_mlp * (BS / BS_mini)` divided by the
//! number of MLP devices.

mod check;
mod exact;
mod heuristic;
mod lp;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use check::{check_plan, describe, ConstraintKind, Violation};
pub use exact::{solve_exact, solve_exact_with, ExactLimits};
pub use heuristic::{solve_heuristic, solve_heuristic_with};
pub use lp::write_lp;

use crate::error::{Error, Result};
use crate::stats::{HardwareProfile, StatsFile, TableStats};
use crate::trace::EmbTableSpec;

/// Relative tolerance for cost comparisons.
pub(crate) const COST_TOL: f64 = 1e-9;

pub(crate) fn cost_lt(a: f64, b: f64) -> bool {
    a < b - COST_TOL * b.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoreType {
    Mlp,
    Emb,
}

/// Tables, their statistics and the hardware they are planned onto.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerInstance {
    pub profile: HardwareProfile,
    pub specs: Vec<EmbTableSpec>,
    pub stats: Vec<TableStats>,
}

impl PlannerInstance {
    pub fn new(
        profile: HardwareProfile,
        specs: Vec<EmbTableSpec>,
        stats: Vec<TableStats>,
    ) -> Result<Self> {
        profile.validate()?;
        let file = StatsFile {
            tt: Default::default(),
            specs,
            stats,
        };
        file.validate()?;
        if file.specs.is_empty() {
            return Err(Error::Config("planner needs at least one table".into()));
        }
        Ok(PlannerInstance {
            profile,
            specs: file.specs,
            stats: file.stats,
        })
    }

    pub fn from_stats(profile: HardwareProfile, stats: &StatsFile) -> Result<Self> {
        PlannerInstance::new(profile, stats.specs.clone(), stats.stats.clone())
    }

    pub fn num_tables(&self) -> usize {
        self.specs.len()
    }

    pub fn num_devices(&self) -> usize {
        self.profile.devices
    }

    /// Largest `a + b` allowed by the table's hot threshold.
    pub fn hot_limit(&self, table: usize) -> usize {
        let step = self.stats[table].step;
        ((self.specs[table].hot_thr * step as f64 + 1e-9).floor() as usize).min(step)
    }

    /// Footprint and per-tier cost of one grid choice.
    pub fn option(&self, table: usize, grid: GridChoice) -> TableOption {
        let spec = &self.specs[table];
        let st = &self.stats[table];
        let step = st.step;
        let (a, b) = (grid.dram.min(step), grid.tt.min(step));
        let ptr = (a + b).min(step);
        let row_bytes = spec.row_bytes();

        let dram_rows = st.rows_at(a, spec.row_len);
        let hot_rows = st.rows_at(ptr, spec.row_len).max(dram_rows);
        let tt_rows = hot_rows - dram_rows;
        let ssd_rows = spec.row_len - hot_rows;
        let tt_cap = st.tt_cm[st.tt_grid_index(tt_rows, spec.row_len)];

        let load = st.avg_pf * f64::from(self.profile.batch_size);
        let stepf = step as f64;
        let cold = step.saturating_sub(a + b) as f64 / stepf;
        TableOption {
            grid: GridChoice { dram: a, tt: b },
            dram_rows,
            tt_rows,
            ssd_rows,
            mem_dram: dram_rows * row_bytes,
            mem_tt: tt_rows * row_bytes,
            tt_cap,
            ssd_bytes: ssd_rows * row_bytes,
            cost: [
                load * (a as f64 / stepf) * self.profile.t_dram,
                load * (b as f64 / stepf) * self.profile.t_tt,
                load * cold * self.profile.t_ssd,
            ],
        }
    }

    /// Every grid choice allowed by the hot threshold, in `(a, b)` order.
    pub fn options(&self, table: usize) -> Vec<TableOption> {
        let limit = self.hot_limit(table);
        let mut out = Vec::new();
        for a in 0..=limit {
            for b in 0..=limit - a {
                out.push(self.option(table, GridChoice { dram: a, tt: b }));
            }
        }
        out
    }

    /// `(c_mlp_bot, c_mlp_top)` for `mlp_devices` MLP devices.
    pub fn mlp_costs(&self, mlp_devices: usize) -> (f64, f64) {
        if mlp_devices == 0 {
            return (f64::INFINITY, f64::INFINITY);
        }
        let scale = self.profile.mini_batches() / mlp_devices as f64;
        (
            self.profile.t_mlp_bot * scale,
            self.profile.t_mlp_top * scale,
        )
    }

    pub fn with_caps(&self, dram: u64, bram: u64, ssd: u64) -> Self {
        let mut inst = self.clone();
        inst.profile.cap_dram = dram;
        inst.profile.cap_bram = bram;
        inst.profile.cap_ssd = ssd;
        inst
    }
}

/// Grid indices of a table split: DRAM serves `dram / step` of the lookups,
/// TT the next `tt / step`.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct GridChoice {
    pub dram: usize,
    pub tt: usize,
}

/// Precomputed consequences of one [`GridChoice`].
#[derive(Debug, Clone, PartialEq)]
pub struct TableOption {
    pub grid: GridChoice,
    pub dram_rows: u64,
    pub tt_rows: u64,
    pub ssd_rows: u64,
    pub mem_dram: u64,
    pub mem_tt: u64,
    pub tt_cap: u64,
    pub ssd_bytes: u64,
    /// `[c_dram, c_tt, c_ssd]` of the table.
    pub cost: [f64; 3],
}

impl TableOption {
    /// Bytes charged to `[DRAM, BRAM, SSD]`.
    pub fn usage(&self) -> [u64; 3] {
        [self.mem_dram, self.tt_cap, self.ssd_bytes]
    }
}

/// Decision variables of a plan: core types, table placement (`assign[m][j]`)
/// and per-table grid choices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSkeleton {
    pub cores: Vec<CoreType>,
    pub assign: Vec<Vec<bool>>,
    pub grid: Vec<GridChoice>,
}

impl PlanSkeleton {
    /// Skeleton placing table `j` on device `device_of[j]`.
    pub fn from_devices(cores: Vec<CoreType>, device_of: &[usize], grid: Vec<GridChoice>) -> Self {
        let mut assign = vec![vec![false; device_of.len()]; cores.len()];
        for (j, &m) in device_of.iter().enumerate() {
            assign[m][j] = true;
        }
        PlanSkeleton {
            cores,
            assign,
            grid,
        }
    }
}

/// Placement and split of one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePlan {
    pub table_id: u32,
    pub dram_step: usize,
    pub tt_step: usize,
    pub pct_dram: f64,
    pub pct_tt: f64,
    pub dram_rows: u64,
    pub tt_rows: u64,
    pub ssd_rows: u64,
    /// DRAM bytes.
    pub mem_dram: u64,
    /// Uncompressed bytes of the TT region.
    pub mem_tt: u64,
    /// Compressed TT-core bytes.
    pub tt_cap: u64,
    pub ssd_bytes: u64,
    pub c_dram: f64,
    pub c_tt: f64,
    pub c_ssd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Per-device tier costs.
    pub c_dram: Vec<f64>,
    pub c_tt: Vec<f64>,
    pub c_ssd: Vec<f64>,
    pub c_emb: f64,
    pub c_mlp_bot: f64,
    pub c_mlp_top: f64,
    pub c_fnt: f64,
    /// Objective `C`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSolution {
    pub cores: Vec<CoreType>,
    pub assign: Vec<Vec<bool>>,
    pub tables: Vec<TablePlan>,
    pub costs: CostBreakdown,
}

impl PlannerSolution {
    pub fn skeleton(&self) -> PlanSkeleton {
        PlanSkeleton {
            cores: self.cores.clone(),
            assign: self.assign.clone(),
            grid: self
                .tables
                .iter()
                .map(|t| GridChoice {
                    dram: t.dram_step,
                    tt: t.tt_step,
                })
                .collect(),
        }
    }

    /// First device holding table `j`.
    pub fn device_of(&self, j: usize) -> Option<usize> {
        self.assign
            .iter()
            .position(|row| row.get(j).copied().unwrap_or(false))
    }

    pub fn emb_devices(&self) -> usize {
        self.cores.iter().filter(|&&c| c == CoreType::Emb).count()
    }

    pub fn mlp_devices(&self) -> usize {
        self.cores.len() - self.emb_devices()
    }
}

/// Fills footprints and costs of `skeleton` without checking any constraint.
pub fn assemble(instance: &PlannerInstance, skeleton: &PlanSkeleton) -> Result<PlannerSolution> {
    let j_count = instance.num_tables();
    if skeleton.grid.len() != j_count
        || skeleton.assign.len() != skeleton.cores.len()
        || skeleton.assign.iter().any(|row| row.len() != j_count)
    {
        return Err(Error::Shape(format!(
            "skeleton has {} grid entries and a {}x? assignment for {} tables",
            skeleton.grid.len(),
            skeleton.assign.len(),
            j_count
        )));
    }
    let tables: Vec<TablePlan> = (0..j_count)
        .map(|j| {
            let opt = instance.option(j, skeleton.grid[j]);
            let step = instance.stats[j].step as f64;
            TablePlan {
                table_id: instance.specs[j].table_id,
                dram_step: skeleton.grid[j].dram,
                tt_step: skeleton.grid[j].tt,
                pct_dram: skeleton.grid[j].dram as f64 / step,
                pct_tt: skeleton.grid[j].tt as f64 / step,
                dram_rows: opt.dram_rows,
                tt_rows: opt.tt_rows,
                ssd_rows: opt.ssd_rows,
                mem_dram: opt.mem_dram,
                mem_tt: opt.mem_tt,
                tt_cap: opt.tt_cap,
                ssd_bytes: opt.ssd_bytes,
                c_dram: opt.cost[0],
                c_tt: opt.cost[1],
                c_ssd: opt.cost[2],
            }
        })
        .collect();

    let costs = compute_costs(instance, &skeleton.cores, &skeleton.assign, &tables);
    Ok(PlannerSolution {
        cores: skeleton.cores.clone(),
        assign: skeleton.assign.clone(),
        tables,
        costs,
    })
}

pub(crate) fn compute_costs(
    instance: &PlannerInstance,
    cores: &[CoreType],
    assign: &[Vec<bool>],
    tables: &[TablePlan],
) -> CostBreakdown {
    let m_count = cores.len();
    let mut c_dram = vec![0.0; m_count];
    let mut c_tt = vec![0.0; m_count];
    let mut c_ssd = vec![0.0; m_count];
    for (m, row) in assign.iter().enumerate() {
        for (j, &placed) in row.iter().enumerate() {
            if placed {
                c_dram[m] += tables[j].c_dram;
                c_tt[m] += tables[j].c_tt;
                c_ssd[m] += tables[j].c_ssd;
            }
        }
    }
    let c_emb = (0..m_count)
        .map(|m| c_dram[m].max(c_tt[m]).max(c_ssd[m]))
        .fold(0.0, f64::max);
    let mlp = cores.iter().filter(|&&c| c == CoreType::Mlp).count();
    let (c_mlp_bot, c_mlp_top) = instance.mlp_costs(mlp);
    let c_fnt = c_mlp_bot.max(c_emb);
    CostBreakdown {
        c_dram,
        c_tt,
        c_ssd,
        c_emb,
        c_mlp_bot,
        c_mlp_top,
        c_fnt,
        total: c_fnt + c_mlp_top,
    }
}

/// Fills footprints and costs of a candidate, rejecting it with the list of
/// violated constraints when it is not a valid plan.
pub fn evaluate(instance: &PlannerInstance, skeleton: &PlanSkeleton) -> Result<PlannerSolution> {
    let plan = assemble(instance, skeleton)?;
    let violations = check_plan(instance, &plan);
    if violations.is_empty() {
        Ok(plan)
    } else {
        Err(Error::Constraint(violations))
    }
}

// ── Plan file ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    #[default]
    Heuristic,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Exact => "exact",
            Backend::Heuristic => "heuristic",
        })
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Backend::Exact),
            "heuristic" => Ok(Backend::Heuristic),
            other => Err(Error::Config(format!(
                "unknown backend {other:?}, expected exact or heuristic"
            ))),
        }
    }
}

/// Options shared by both solvers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveOptions {
    /// Force exactly this many EMB devices.
    pub emb_devices: Option<usize>,
}

pub fn solve(
    instance: &PlannerInstance,
    backend: Backend,
    opts: SolveOptions,
) -> Result<PlannerSolution> {
    match backend {
        Backend::Exact => solve_exact_with(instance, &ExactLimits::default(), opts),
        Backend::Heuristic => solve_heuristic_with(instance, opts),
    }
}

/// Plan plus solver metadata, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub backend: Backend,
    /// Memory levels the plan was allowed to use (1 = SSD only, 2 = plus
    /// DRAM, 3 = plus TT-compressed BRAM).
    #[serde(default = "all_levels")]
    pub ablation: u8,
    pub plan: PlannerSolution,
}

fn all_levels() -> u8 {
    3
}

impl PlanFile {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }
}

/// Names the capacities whose relaxation makes an infeasible instance
/// solvable, for diagnostics.
pub(crate) fn binding_capacities(
    instance: &PlannerInstance,
    feasible: impl Fn(&PlannerInstance) -> bool,
) -> String {
    let p = &instance.profile;
    let relaxed = [
        ("DRAM", instance.with_caps(u64::MAX, p.cap_bram, p.cap_ssd)),
        ("BRAM", instance.with_caps(p.cap_dram, u64::MAX, p.cap_ssd)),
        ("SSD", instance.with_caps(p.cap_dram, p.cap_bram, u64::MAX)),
    ];
    let binding: Vec<&str> = relaxed
        .iter()
        .filter(|(_, inst)| feasible(inst))
        .map(|(name, _)| *name)
        .collect();
    if binding.is_empty() {
        "no single capacity relaxation helps; combined DRAM/BRAM/SSD capacity too small".into()
    } else {
        format!("binding capacity: {}", binding.join(", "))
    }
}
