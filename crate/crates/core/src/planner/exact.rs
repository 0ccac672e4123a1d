//! Exact solver for small instances.
//!
//! Devices are interchangeable, so the search splits into two layers: for
//! every subset of tables the best single-device split is found once by
//! branch and bound, and the device layer enumerates set partitions of the
//! tables over the EMB devices. A second pass over the optimal `C` picks the
//! plan with the smallest summed embedding latency, breaking remaining ties
//! by the lexicographic order of core types, placement and grid choices.

use std::collections::HashMap;

use super::{
    assemble, binding_capacities, cost_lt, CoreType, PlanSkeleton, PlannerInstance,
    PlannerSolution, SolveOptions, TableOption, COST_TOL,
};
use crate::error::{Error, Result};

/// Option index of every member, per device group mask.
type GroupPicks = Vec<(u32, Vec<usize>)>;

/// Size limits beyond which the exact solver refuses to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactLimits {
    pub max_devices: usize,
    pub max_tables: usize,
    pub max_step: usize,
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits {
            max_devices: 4,
            max_tables: 6,
            max_step: 10,
        }
    }
}

pub fn solve_exact(instance: &PlannerInstance) -> Result<PlannerSolution> {
    solve_exact_with(instance, &ExactLimits::default(), SolveOptions::default())
}

pub fn solve_exact_with(
    instance: &PlannerInstance,
    limits: &ExactLimits,
    opts: SolveOptions,
) -> Result<PlannerSolution> {
    let m_count = instance.num_devices();
    let j_count = instance.num_tables();
    let max_step = instance.stats.iter().map(|s| s.step).max().unwrap_or(0);
    if m_count > limits.max_devices || j_count > limits.max_tables || max_step > limits.max_step {
        return Err(Error::TooLarge(format!(
            "exact backend handles at most {} devices, {} tables and grid step {}; \
             got {m_count}, {j_count} and {max_step} (use the heuristic backend)",
            limits.max_devices, limits.max_tables, limits.max_step
        )));
    }
    let ks = emb_counts(m_count, opts)?;

    match search(instance, &ks) {
        Some(skeleton) => assemble(instance, &skeleton),
        None => Err(Error::Infeasible(binding_capacities(instance, |inst| {
            search(inst, &ks).is_some()
        }))),
    }
}

pub(crate) fn emb_counts(m_count: usize, opts: SolveOptions) -> Result<Vec<usize>> {
    match opts.emb_devices {
        Some(k) if k >= 1 && k < m_count => Ok(vec![k]),
        Some(k) => Err(Error::Infeasible(format!(
            "{k} EMB devices requested on {m_count} devices; need at least one MLP and one EMB device"
        ))),
        None => Ok((1..m_count).collect()),
    }
}

struct Prepared {
    caps: [u128; 3],
    /// Options that fit an empty device, in `(a, b)` order.
    opts: Vec<Vec<TableOption>>,
}

impl Prepared {
    fn new(instance: &PlannerInstance) -> Self {
        let p = &instance.profile;
        let caps = [p.cap_dram, p.cap_bram, p.cap_ssd].map(u128::from);
        let opts = (0..instance.num_tables())
            .map(|j| {
                instance
                    .options(j)
                    .into_iter()
                    .filter(|o| fits(&[0; 3], o, &caps))
                    .collect()
            })
            .collect();
        Prepared { caps, opts }
    }
}

fn fits(used: &[u128; 3], o: &TableOption, caps: &[u128; 3]) -> bool {
    let u = o.usage();
    (0..3).all(|r| used[r] + u128::from(u[r]) <= caps[r])
}

fn add(used: &[u128; 3], o: &TableOption) -> [u128; 3] {
    let u = o.usage();
    [
        used[0] + u128::from(u[0]),
        used[1] + u128::from(u[1]),
        used[2] + u128::from(u[2]),
    ]
}

fn tier_add(tiers: &[f64; 3], o: &TableOption) -> [f64; 3] {
    [
        tiers[0] + o.cost[0],
        tiers[1] + o.cost[1],
        tiers[2] + o.cost[2],
    ]
}

fn max3(t: &[f64; 3]) -> f64 {
    t[0].max(t[1]).max(t[2])
}

fn total(o: &TableOption) -> f64 {
    o.cost[0] + o.cost[1] + o.cost[2]
}

/// Per-position minima over the remaining tables of a member list, used as
/// lower bounds by both searches.
struct Suffix {
    use_min: Vec<[u128; 3]>,
    total_min: Vec<f64>,
    ssd_min: Vec<f64>,
    single_max: Vec<f64>,
}

impl Suffix {
    fn new(opts: &[&[TableOption]]) -> Self {
        let n = opts.len();
        let mut s = Suffix {
            use_min: vec![[0; 3]; n + 1],
            total_min: vec![0.0; n + 1],
            ssd_min: vec![0.0; n + 1],
            single_max: vec![0.0; n + 1],
        };
        for i in (0..n).rev() {
            let list = opts[i];
            let mut u = [u128::MAX; 3];
            for o in list {
                for (r, v) in o.usage().into_iter().enumerate() {
                    u[r] = u[r].min(u128::from(v));
                }
            }
            for r in 0..3 {
                s.use_min[i][r] = s.use_min[i + 1][r] + u[r];
            }
            let fold =
                |f: &dyn Fn(&TableOption) -> f64| list.iter().map(f).fold(f64::INFINITY, f64::min);
            s.total_min[i] = s.total_min[i + 1] + fold(&total);
            s.ssd_min[i] = s.ssd_min[i + 1] + fold(&|o| o.cost[2]);
            s.single_max[i] = s.single_max[i + 1].max(fold(&|o| max3(&o.cost)));
        }
        s
    }

    fn capacity_ok(&self, i: usize, used: &[u128; 3], caps: &[u128; 3]) -> bool {
        (0..3).all(|r| used[r] + self.use_min[i][r] <= caps[r])
    }
}

/// Smallest device max-cost for one group of tables, with the option indices
/// that reach it.
fn min_max(prep: &Prepared, members: &[usize]) -> Option<(f64, Vec<usize>)> {
    if members.is_empty() {
        return Some((0.0, Vec::new()));
    }
    // Cheap options first so good incumbents appear early.
    let orders: Vec<Vec<usize>> = members
        .iter()
        .map(|&j| {
            let list = &prep.opts[j];
            let mut idx: Vec<usize> = (0..list.len()).collect();
            idx.sort_by(|&x, &y| {
                max3(&list[x].cost)
                    .total_cmp(&max3(&list[y].cost))
                    .then(x.cmp(&y))
            });
            idx
        })
        .collect();
    let lists: Vec<&[TableOption]> = members.iter().map(|&j| prep.opts[j].as_slice()).collect();
    if lists.iter().any(|l| l.is_empty()) {
        return None;
    }
    let suffix = Suffix::new(&lists);

    struct Ctx<'a> {
        lists: &'a [&'a [TableOption]],
        orders: &'a [Vec<usize>],
        suffix: &'a Suffix,
        caps: [u128; 3],
        best: f64,
        best_pick: Option<Vec<usize>>,
        pick: Vec<usize>,
    }

    fn dfs(c: &mut Ctx<'_>, i: usize, tiers: [f64; 3], used: [u128; 3]) {
        let n = c.lists.len();
        if i == n {
            let v = max3(&tiers);
            if c.best_pick.is_none() || cost_lt(v, c.best) {
                c.best = v;
                c.best_pick = Some(c.pick.clone());
            }
            return;
        }
        for k in 0..c.orders[i].len() {
            let oi = c.orders[i][k];
            let o = &c.lists[i][oi];
            if !fits(&used, o, &c.caps) {
                continue;
            }
            let used2 = add(&used, o);
            if !c.suffix.capacity_ok(i + 1, &used2, &c.caps) {
                continue;
            }
            let t = tier_add(&tiers, o);
            let lb = max3(&t)
                .max(t[2] + c.suffix.ssd_min[i + 1])
                .max((t[0] + t[1] + t[2] + c.suffix.total_min[i + 1]) / 3.0)
                .max(c.suffix.single_max[i + 1]);
            if c.best_pick.is_some() && !cost_lt(lb, c.best) {
                continue;
            }
            c.pick.push(oi);
            dfs(c, i + 1, t, used2);
            c.pick.pop();
        }
    }

    let mut ctx = Ctx {
        lists: &lists,
        orders: &orders,
        suffix: &suffix,
        caps: prep.caps,
        best: f64::INFINITY,
        best_pick: None,
        pick: Vec::with_capacity(members.len()),
    };
    dfs(&mut ctx, 0, [0.0; 3], [0; 3]);
    ctx.best_pick.map(|p| (ctx.best, p))
}

/// Smallest summed cost of one group with every tier at most `theta`,
/// enumerated in `(a, b)` order so the lexicographically first optimum wins.
fn min_sum(
    prep: &Prepared,
    members: &[usize],
    theta: f64,
    seed: (f64, Vec<usize>),
) -> (f64, Vec<usize>) {
    if members.is_empty() {
        return (0.0, Vec::new());
    }
    let limit = theta + COST_TOL * theta.abs().max(1.0);
    let lists: Vec<Vec<(usize, &TableOption)>> = members
        .iter()
        .map(|&j| {
            prep.opts[j]
                .iter()
                .enumerate()
                .filter(|(_, o)| max3(&o.cost) <= limit)
                .collect()
        })
        .collect();
    let plain: Vec<Vec<TableOption>> = lists
        .iter()
        .map(|l| l.iter().map(|(_, o)| (*o).clone()).collect())
        .collect();
    let refs: Vec<&[TableOption]> = plain.iter().map(Vec::as_slice).collect();
    let suffix = Suffix::new(&refs);

    struct Ctx<'a> {
        lists: &'a [Vec<(usize, &'a TableOption)>],
        suffix: &'a Suffix,
        caps: [u128; 3],
        limit: f64,
        best: f64,
        best_pick: Option<Vec<usize>>,
        pick: Vec<usize>,
    }

    fn dfs(c: &mut Ctx<'_>, i: usize, tiers: [f64; 3], sum: f64, used: [u128; 3]) {
        if i == c.lists.len() {
            if cost_lt(sum, c.best) {
                c.best = sum;
                c.best_pick = Some(c.pick.clone());
            }
            return;
        }
        for k in 0..c.lists[i].len() {
            let (oi, o) = c.lists[i][k];
            let t = tier_add(&tiers, o);
            if max3(&t) > c.limit || !fits(&used, o, &c.caps) {
                continue;
            }
            let used2 = add(&used, o);
            if !c.suffix.capacity_ok(i + 1, &used2, &c.caps) {
                continue;
            }
            let s = sum + total(o);
            if !cost_lt(s + c.suffix.total_min[i + 1], c.best) {
                continue;
            }
            c.pick.push(oi);
            dfs(c, i + 1, t, s, used2);
            c.pick.pop();
        }
    }

    let (seed_sum, seed_pick) = seed;
    let mut ctx = Ctx {
        lists: &lists,
        suffix: &suffix,
        caps: prep.caps,
        limit,
        best: seed_sum + 2.0 * COST_TOL * seed_sum.abs().max(1.0),
        best_pick: None,
        pick: Vec::with_capacity(members.len()),
    };
    dfs(&mut ctx, 0, [0.0; 3], 0.0, [0; 3]);
    match ctx.best_pick {
        Some(p) => (ctx.best, p),
        None => (seed_sum, seed_pick),
    }
}

/// Restricted growth strings of length `n` using at most `k` labels, in
/// lexicographic order.
pub(crate) fn partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(buf: &mut Vec<usize>, n: usize, k: usize, used: usize, out: &mut Vec<Vec<usize>>) {
        if buf.len() == n {
            out.push(buf.clone());
            return;
        }
        for label in 0..(used + 1).min(k) {
            buf.push(label);
            rec(buf, n, k, used.max(label + 1), out);
            buf.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(&mut Vec::with_capacity(n), n, k, 0, &mut out);
    }
    out
}

fn groups(rgs: &[usize], k: usize) -> Vec<u32> {
    let mut masks = vec![0u32; k];
    for (j, &g) in rgs.iter().enumerate() {
        masks[g] |= 1 << j;
    }
    masks
}

fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|&j| mask & (1 << j) != 0).collect()
}

fn search(instance: &PlannerInstance, ks: &[usize]) -> Option<PlanSkeleton> {
    let m_count = instance.num_devices();
    let j_count = instance.num_tables();
    let prep = Prepared::new(instance);

    let mut g_memo: HashMap<u32, Option<(f64, Vec<usize>)>> = HashMap::new();
    let mut g = |mask: u32| -> Option<(f64, Vec<usize>)> {
        g_memo
            .entry(mask)
            .or_insert_with(|| min_max(&prep, &members(mask)))
            .clone()
    };

    let objective = |k: usize, emb: f64| {
        let (bot, top) = instance.mlp_costs(m_count - k);
        bot.max(emb) + top
    };

    // Layer one: optimal C.
    let mut best_c = f64::INFINITY;
    let mut per_k: Vec<(usize, Vec<Vec<usize>>)> = Vec::new();
    for &k in ks {
        let parts = partitions(j_count, k);
        let mut best_emb = f64::INFINITY;
        for rgs in &parts {
            let mut emb = 0.0f64;
            for mask in groups(rgs, k) {
                match g(mask) {
                    Some((v, _)) => emb = emb.max(v),
                    None => {
                        emb = f64::INFINITY;
                        break;
                    }
                }
            }
            best_emb = best_emb.min(emb);
        }
        if best_emb.is_finite() {
            let c = objective(k, best_emb);
            if c < best_c {
                best_c = c;
            }
            per_k.push((k, parts));
        }
    }
    if !best_c.is_finite() {
        return None;
    }

    // Layer two: among plans reaching C, the smallest summed latency.
    let tol = COST_TOL * best_c.abs().max(1.0);
    let mut best: Option<(f64, usize, Vec<usize>, GroupPicks)> = None;
    for (k, parts) in &per_k {
        let k = *k;
        let (bot, top) = instance.mlp_costs(m_count - k);
        if bot + top > best_c + tol {
            continue;
        }
        let theta = best_c - top;
        let mut h_memo: HashMap<u32, (f64, Vec<usize>)> = HashMap::new();
        for rgs in parts {
            let masks = groups(rgs, k);
            let mut ok = true;
            for &mask in &masks {
                match g(mask) {
                    Some((v, _)) if v <= theta + tol => {}
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let mut sum = 0.0;
            let mut picks = Vec::with_capacity(k);
            for &mask in &masks {
                let entry = h_memo.entry(mask).or_insert_with(|| {
                    let (_, seed_pick) = g(mask).expect("group checked feasible");
                    let mem = members(mask);
                    let seed_sum: f64 = mem
                        .iter()
                        .zip(&seed_pick)
                        .map(|(&j, &oi)| total(&prep.opts[j][oi]))
                        .sum();
                    min_sum(&prep, &mem, theta, (seed_sum, seed_pick))
                });
                sum += entry.0;
                picks.push((mask, entry.1.clone()));
            }
            let better = match &best {
                None => true,
                Some((s, ..)) => cost_lt(sum, *s),
            };
            if better {
                best = Some((sum, k, rgs.clone(), picks));
            }
        }
    }

    let (_, k, rgs, picks) = best?;
    let mut cores = vec![CoreType::Mlp; m_count - k];
    cores.extend(std::iter::repeat_n(CoreType::Emb, k));
    let device_of: Vec<usize> = rgs.iter().map(|&g| m_count - k + g).collect();
    let mut grid = vec![Default::default(); j_count];
    for (mask, pick) in picks {
        for (&j, &oi) in members(mask).iter().zip(&pick) {
            grid[j] = prep.opts[j][oi].grid;
        }
    }
    Some(PlanSkeleton::from_devices(cores, &device_of, grid))
}
