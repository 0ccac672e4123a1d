#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use screc::planner::PlannerInstance;
use screc::stats::{HardwareProfile, TableStats};
use screc::trace::EmbTableSpec;
use screc::tt::{EmbMatrix, TTCores};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small planner instance with `row_len = step <= max_step`, so every grid
/// point maps to a whole number of rows.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_devices: usize,
    max_tables: usize,
    max_step: usize,
) -> PlannerInstance {
    let devices = rng.random_range(2..=max_devices);
    let tables = rng.random_range(1..=max_tables);
    let mut specs = Vec::new();
    let mut stats = Vec::new();
    let mut total_rows = 0u64;
    let mut total_tt = 0u64;
    for j in 0..tables {
        let row_len = rng.random_range(1..=max_step as u64);
        let step = row_len as usize;
        let hot_thr = [1.0, 1.0, 0.99, 0.75, 0.5][rng.random_range(0..5)];
        specs.push(EmbTableSpec::new(j as u32, row_len, 4, 4, hot_thr).unwrap());

        let icdf = icdf_of_counts(rng, row_len as usize);
        let mut tt_cm = vec![0u64];
        for _ in 0..step {
            let last = *tt_cm.last().unwrap();
            tt_cm.push(last + rng.random_range(0..40));
        }
        total_rows += row_len;
        total_tt += tt_cm[step];
        let avg_pf = if rng.random_bool(0.1) {
            0.0
        } else {
            rng.random_range(0.1..10.0)
        };
        stats.push(TableStats {
            table_id: j as u32,
            step,
            icdf,
            avg_pf,
            tt_cm,
            total_accesses: 100,
            cold: false,
        });
    }
    let bytes = total_rows * 16;
    let batch_size = rng.random_range(1..=64);
    let profile = HardwareProfile {
        devices,
        cap_bram: rng.random_range(0..=total_tt),
        cap_dram: rng.random_range(0..=bytes),
        cap_ssd: if rng.random_bool(0.7) {
            1 << 40
        } else {
            rng.random_range(0..=bytes)
        },
        t_dram: rng.random_range(1.0..20.0),
        t_ssd: rng.random_range(20.0..500.0),
        t_tt: rng.random_range(1.0..20.0),
        t_mlp_top: rng.random_range(1.0..500.0),
        t_mlp_bot: rng.random_range(1.0..500.0),
        batch_size,
        mini_batch: rng.random_range(1..=batch_size),
    };
    PlannerInstance::new(profile, specs, stats).unwrap()
}

/// Inverse CDF of random per-row lookup counts on a `row_len`-point grid:
/// entry `i` is the fewest hottest rows covering `i / row_len` of the lookups.
fn icdf_of_counts(rng: &mut ChaCha8Rng, row_len: usize) -> Vec<f64> {
    let mut counts: Vec<u64> = (0..row_len).map(|_| rng.random_range(0..20)).collect();
    counts[0] += 1;
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let total: u64 = counts.iter().sum();
    (0..=row_len)
        .map(|i| {
            let (mut rows, mut covered) = (0, 0);
            while covered * (row_len as u64) < i as u64 * total {
                covered += counts[rows];
                rows += 1;
            }
            rows as f64 / row_len as f64
        })
        .collect()
}

/// Usage `[dram, bram, ssd]` in bytes and tier costs `[dram, tt, ssd]` of one
/// grid choice, straight from the cost model's definitions.
struct Choice {
    usage: [u64; 3],
    cost: [f64; 3],
}

fn choices(inst: &PlannerInstance, j: usize) -> Vec<Choice> {
    let spec = &inst.specs[j];
    let st = &inst.stats[j];
    let p = &inst.profile;
    let step = st.step;
    let row_bytes = u64::from(spec.dim) * u64::from(spec.df);
    let rows = |i: usize| (st.icdf[i] * spec.row_len as f64).round() as u64;
    let limit = (spec.hot_thr * step as f64 + 1e-9).floor() as usize;
    let load = st.avg_pf * f64::from(p.batch_size);
    let mut out = Vec::new();
    for a in 0..=step {
        for b in 0..=step - a {
            if a + b > limit {
                continue;
            }
            let dram_rows = rows(a);
            let hot_rows = rows(a + b).max(dram_rows);
            let tt_rows = hot_rows - dram_rows;
            let ssd_rows = spec.row_len - hot_rows;
            let tt_index = (tt_rows as usize * step).div_ceil(spec.row_len as usize);
            out.push(Choice {
                usage: [
                    dram_rows * row_bytes,
                    st.tt_cm[tt_index],
                    ssd_rows * row_bytes,
                ],
                cost: [
                    load * a as f64 / step as f64 * p.t_dram,
                    load * b as f64 / step as f64 * p.t_tt,
                    load * (step - a - b) as f64 / step as f64 * p.t_ssd,
                ],
            });
        }
    }
    out
}

/// Lowest max-tier cost of one device holding `tables`, by trying every grid
/// combination; infinite when no combination fits the capacities.
fn device_best(inst: &PlannerInstance, opts: &[Vec<Choice>], tables: &[usize]) -> f64 {
    let p = &inst.profile;
    let caps = [p.cap_dram, p.cap_bram, p.cap_ssd];
    let mut best = f64::INFINITY;
    let mut pick = vec![0usize; tables.len()];
    loop {
        let mut usage = [0u64; 3];
        let mut cost = [0.0f64; 3];
        for (slot, &j) in tables.iter().enumerate() {
            let c = &opts[j][pick[slot]];
            for t in 0..3 {
                usage[t] += c.usage[t];
                cost[t] += c.cost[t];
            }
        }
        if (0..3).all(|t| usage[t] <= caps[t]) {
            best = best.min(cost[0].max(cost[1]).max(cost[2]));
        }
        // odometer over the grid choices of the tables
        let mut k = 0;
        loop {
            if k == tables.len() {
                return best;
            }
            pick[k] += 1;
            if pick[k] < opts[tables[k]].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

/// Optimal objective by full enumeration of core types, table placements
/// and grid choices; `None` when nothing is feasible.
pub fn oracle_optimum(inst: &PlannerInstance) -> Option<f64> {
    let m_count = inst.profile.devices;
    let j_count = inst.specs.len();
    let opts: Vec<Vec<Choice>> = (0..j_count).map(|j| choices(inst, j)).collect();

    // Grid choices only interact through per-device capacities, so the best
    // split of every table subset is enumerated once and reused.
    let subset_best: Vec<f64> = (0..1usize << j_count)
        .map(|mask| {
            let tables: Vec<usize> = (0..j_count).filter(|j| mask >> j & 1 == 1).collect();
            device_best(inst, &opts, &tables)
        })
        .collect();

    let p = &inst.profile;
    let mut best = f64::INFINITY;
    for cores in 0..1usize << m_count {
        let emb: Vec<usize> = (0..m_count).filter(|m| cores >> m & 1 == 1).collect();
        let mlp = m_count - emb.len();
        if emb.is_empty() || mlp == 0 {
            continue;
        }
        let scale = f64::from(p.batch_size) / f64::from(p.mini_batch) / mlp as f64;
        let (bot, top) = (p.t_mlp_bot * scale, p.t_mlp_top * scale);
        let placements = emb.len().pow(j_count as u32);
        for code in 0..placements {
            let mut masks = vec![0usize; emb.len()];
            let mut c = code;
            for j in 0..j_count {
                masks[c % emb.len()] |= 1 << j;
                c /= emb.len();
            }
            let c_emb = masks.iter().map(|&m| subset_best[m]).fold(0.0, f64::max);
            best = best.min(bot.max(c_emb) + top);
        }
    }
    best.is_finite().then_some(best)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> EmbMatrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    EmbMatrix::new(rows, cols, data).unwrap()
}

/// Element `(i, j)` as the plain product of core slices
/// `G_1[:, i_1, j_1, :] ... G_d[:, i_d, j_d, :]`.
pub fn naive_element(tt: &TTCores, i: usize, j: usize) -> f64 {
    let s = &tt.shape;
    let d = s.row_factors.len();
    let mut row_digits = vec![0; d];
    let mut col_digits = vec![0; d];
    let (mut i, mut j) = (i, j);
    for k in (0..d).rev() {
        row_digits[k] = i % s.row_factors[k];
        i /= s.row_factors[k];
        col_digits[k] = j % s.col_factors[k];
        j /= s.col_factors[k];
    }
    let mut v = vec![1.0f64];
    for k in 0..d {
        let (r_in, ik, jk, r_out) = (
            s.ranks[k],
            s.row_factors[k],
            s.col_factors[k],
            s.ranks[k + 1],
        );
        let mut next = vec![0.0; r_out];
        for a in 0..r_in {
            for b in 0..r_out {
                let at = ((a * ik + row_digits[k]) * jk + col_digits[k]) * r_out + b;
                next[b] += v[a] * f64::from(tt.cores[k][at]);
            }
        }
        v = next;
    }
    v[0]
}
