use std::fmt;

use serde::{Deserialize, Serialize};

use super::{compute_costs, CoreType, GridChoice, PlannerInstance, PlannerSolution};

/// Constraint families of the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    /// At least one MLP and one EMB device.
    DeviceAllocation,
    /// Every table on exactly one device.
    TableAssignment,
    /// Tables only on EMB devices.
    TableOnMlpDevice,
    /// Grid indices within `0..=step` and shares consistent with them.
    GridBounds,
    /// DRAM plus TT share at most `hot_thr`.
    HotThreshold,
    /// DRAM rows and bytes match the inverse CDF at the DRAM grid point.
    DramFootprint,
    /// TT rows and bytes sit between the DRAM and SSD regions.
    TtFootprint,
    /// Compressed TT bytes match the TT footprint curve.
    TtCompressedSize,
    DramCapacity,
    SsdCapacity,
    BramCapacity,
    /// Reported costs equal the ones recomputed from the plan.
    CostDefinition,
}

impl ConstraintKind {
    pub fn label(self) -> &'static str {
        match self {
            ConstraintKind::DeviceAllocation => "device-allocation",
            ConstraintKind::TableAssignment => "table-assignment",
            ConstraintKind::TableOnMlpDevice => "table-on-mlp-device",
            ConstraintKind::GridBounds => "grid-bounds",
            ConstraintKind::HotThreshold => "hot-threshold",
            ConstraintKind::DramFootprint => "dram-footprint",
            ConstraintKind::TtFootprint => "tt-footprint",
            ConstraintKind::TtCompressedSize => "tt-compressed-size",
            ConstraintKind::DramCapacity => "dram-capacity",
            ConstraintKind::SsdCapacity => "ssd-capacity",
            ConstraintKind::BramCapacity => "bram-capacity",
            ConstraintKind::CostDefinition => "cost-definition",
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub device: Option<usize>,
    pub table: Option<usize>,
    /// How far the constraint is exceeded, in its own unit.
    pub slack: f64,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.kind)?;
        if let Some(m) = self.device {
            write!(f, " device {m}")?;
        }
        if let Some(j) = self.table {
            write!(f, " table {j}")?;
        }
        write!(f, ": {} (excess {})", self.detail, self.slack)
    }
}

/// One line per violation.
pub fn describe(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(
        &mut self,
        kind: ConstraintKind,
        device: Option<usize>,
        table: Option<usize>,
        slack: f64,
        detail: String,
    ) {
        self.out.push(Violation {
            kind,
            device,
            table,
            slack,
            detail,
        });
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Replays every constraint against `plan`; empty iff the plan is valid.
pub fn check_plan(instance: &PlannerInstance, plan: &PlannerSolution) -> Vec<Violation> {
    use ConstraintKind::*;
    let mut c = Checker { out: Vec::new() };
    let m_count = instance.num_devices();
    let j_count = instance.num_tables();

    if plan.cores.len() != m_count
        || plan.assign.len() != m_count
        || plan.assign.iter().any(|r| r.len() != j_count)
        || plan.tables.len() != j_count
    {
        c.push(
            TableAssignment,
            None,
            None,
            0.0,
            format!(
                "plan shape ({} devices, {} tables) does not match instance ({m_count}, {j_count})",
                plan.cores.len(),
                plan.tables.len()
            ),
        );
        return c.out;
    }

    let emb = plan.emb_devices();
    if emb < 1 || emb > m_count - 1 {
        let slack = if emb < 1 {
            1.0
        } else {
            (emb + 1 - m_count) as f64
        };
        c.push(
            DeviceAllocation,
            None,
            None,
            slack,
            format!("{emb} EMB devices, need between 1 and {}", m_count - 1),
        );
    }

    for j in 0..j_count {
        let holders: Vec<usize> = (0..m_count).filter(|&m| plan.assign[m][j]).collect();
        if holders.len() != 1 {
            c.push(
                TableAssignment,
                None,
                Some(j),
                holders.len() as f64 - 1.0,
                format!("placed on {} devices {:?}", holders.len(), holders),
            );
        }
        for &m in &holders {
            if plan.cores[m] == CoreType::Mlp {
                c.push(
                    TableOnMlpDevice,
                    Some(m),
                    Some(j),
                    1.0,
                    "placed on a device running an MLP core".into(),
                );
            }
        }
    }

    for (j, t) in plan.tables.iter().enumerate() {
        let spec = &instance.specs[j];
        let st = &instance.stats[j];
        let step = st.step;
        if t.table_id != spec.table_id {
            c.push(
                GridBounds,
                None,
                Some(j),
                0.0,
                format!("table_id {} where {} expected", t.table_id, spec.table_id),
            );
        }
        if t.dram_step + t.tt_step > step
            || !close(t.pct_dram, t.dram_step as f64 / step as f64)
            || !close(t.pct_tt, t.tt_step as f64 / step as f64)
        {
            c.push(
                GridBounds,
                None,
                Some(j),
                (t.dram_step + t.tt_step).saturating_sub(step) as f64,
                format!(
                    "grid ({}, {}) with pct ({}, {}) on a step-{step} grid",
                    t.dram_step, t.tt_step, t.pct_dram, t.pct_tt
                ),
            );
            continue;
        }
        let hot = t.pct_dram + t.pct_tt;
        if t.dram_step + t.tt_step > instance.hot_limit(j) {
            c.push(
                HotThreshold,
                None,
                Some(j),
                hot - spec.hot_thr,
                format!("pct_dram + pct_tt = {hot} above hot_thr {}", spec.hot_thr),
            );
        }

        let opt = instance.option(
            j,
            GridChoice {
                dram: t.dram_step,
                tt: t.tt_step,
            },
        );
        if t.dram_rows != opt.dram_rows || t.mem_dram != opt.mem_dram {
            c.push(
                DramFootprint,
                None,
                Some(j),
                t.mem_dram as f64 - opt.mem_dram as f64,
                format!(
                    "{} rows / {} bytes in DRAM, inverse CDF gives {} / {}",
                    t.dram_rows, t.mem_dram, opt.dram_rows, opt.mem_dram
                ),
            );
        }
        if t.tt_rows != opt.tt_rows
            || t.mem_tt != opt.mem_tt
            || t.ssd_rows != opt.ssd_rows
            || t.ssd_bytes != opt.ssd_bytes
        {
            c.push(
                TtFootprint,
                None,
                Some(j),
                t.mem_tt as f64 - opt.mem_tt as f64,
                format!(
                    "TT/SSD rows {}/{} where the inverse CDF gives {}/{}",
                    t.tt_rows, t.ssd_rows, opt.tt_rows, opt.ssd_rows
                ),
            );
        }
        if t.tt_cap != opt.tt_cap {
            c.push(
                TtCompressedSize,
                None,
                Some(j),
                t.tt_cap as f64 - opt.tt_cap as f64,
                format!(
                    "tt_cap {} but the footprint curve gives {}",
                    t.tt_cap, opt.tt_cap
                ),
            );
        }
        if !close(t.c_dram, opt.cost[0])
            || !close(t.c_tt, opt.cost[1])
            || !close(t.c_ssd, opt.cost[2])
        {
            c.push(
                CostDefinition,
                None,
                Some(j),
                0.0,
                "per-table tier costs differ from the latency model".into(),
            );
        }
    }

    let p = &instance.profile;
    for m in 0..m_count {
        let mut used = [0u128; 3];
        for (j, t) in plan.tables.iter().enumerate() {
            if plan.assign[m][j] {
                used[0] += u128::from(t.mem_dram);
                used[1] += u128::from(t.tt_cap);
                used[2] += u128::from(t.ssd_bytes);
            }
        }
        for (kind, u, cap) in [
            (DramCapacity, used[0], p.cap_dram),
            (BramCapacity, used[1], p.cap_bram),
            (SsdCapacity, used[2], p.cap_ssd),
        ] {
            if u > u128::from(cap) {
                c.push(
                    kind,
                    Some(m),
                    None,
                    (u - u128::from(cap)) as f64,
                    format!("{u} bytes placed, capacity {cap}"),
                );
            }
        }
    }

    let expect = compute_costs(instance, &plan.cores, &plan.assign, &plan.tables);
    let got = &plan.costs;
    let vec_close =
        |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y));
    let scalars = [
        (got.c_emb, expect.c_emb),
        (got.c_mlp_bot, expect.c_mlp_bot),
        (got.c_mlp_top, expect.c_mlp_top),
        (got.c_fnt, expect.c_fnt),
        (got.total, expect.total),
    ];
    let finite_ok = scalars
        .iter()
        .all(|(a, b)| (a.is_infinite() && b.is_infinite()) || close(*a, *b));
    if !finite_ok
        || !vec_close(&got.c_dram, &expect.c_dram)
        || !vec_close(&got.c_tt, &expect.c_tt)
        || !vec_close(&got.c_ssd, &expect.c_ssd)
    {
        c.push(
            CostDefinition,
            None,
            None,
            got.total - expect.total,
            format!(
                "reported C = {} but the plan implies {}",
                got.total, expect.total
            ),
        );
    }

    c.out
}
