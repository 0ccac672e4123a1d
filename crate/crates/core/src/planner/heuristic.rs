//! Greedy planner for instances of any size.
//!
//! For each EMB device count the tables are spread by longest-processing-time
//! on their all-SSD cost (and, separately, packed by their smallest SSD
//! footprint), then every device is split greedily (DRAM steps
//! before TT steps, the reverse, and both competing), each time taking the
//! move with the best latency reduction per byte. A neighbourhood pass
//! polishes the grid and a relocation pass moves or swaps tables off the
//! bottleneck device.

use super::{
    assemble, binding_capacities, cost_lt, exact::emb_counts, CoreType, GridChoice, PlanSkeleton,
    PlannerInstance, PlannerSolution, SolveOptions, TableOption, COST_TOL,
};
use crate::error::{Error, Result};

const MAX_REFINE_ROUNDS: usize = 100_000;
const MAX_RELOCATION_PASSES: usize = 64;

pub fn solve_heuristic(instance: &PlannerInstance) -> Result<PlannerSolution> {
    solve_heuristic_with(instance, SolveOptions::default())
}

pub fn solve_heuristic_with(
    instance: &PlannerInstance,
    opts: SolveOptions,
) -> Result<PlannerSolution> {
    let ks = emb_counts(instance.num_devices(), opts)?;
    match best_over(instance, &ks) {
        Some(skeleton) => assemble(instance, &skeleton),
        None => Err(Error::Infeasible(binding_capacities(instance, |inst| {
            best_over(inst, &ks).is_some()
        }))),
    }
}

fn best_over(instance: &PlannerInstance, ks: &[usize]) -> Option<PlanSkeleton> {
    let mut best: Option<(f64, PlanSkeleton)> = None;
    for &k in ks {
        if let Some((c, sk)) = plan_for(instance, k) {
            if best.as_ref().is_none_or(|(bc, _)| cost_lt(c, *bc)) {
                best = Some((c, sk));
            }
        }
    }
    best.map(|(_, sk)| sk)
}

#[derive(Clone, Copy)]
struct Eval {
    tiers: [f64; 3],
    used: [u128; 3],
}

impl Eval {
    fn max(&self) -> f64 {
        self.tiers[0].max(self.tiers[1]).max(self.tiers[2])
    }

    fn sum(&self) -> f64 {
        self.tiers.iter().sum()
    }
}

/// How hard [`State::refine`] searches before stopping.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Depth {
    /// Single and paired grid steps.
    Steps,
    /// Also whole-grid jumps of one table.
    Jumps,
    /// Also partial rebuilds of the device.
    Rebuild,
}

#[derive(Clone, Copy)]
enum FillOrder {
    DramFirst,
    TtFirst,
    /// DRAM and TT steps compete, bytes weighed against each capacity.
    Joint,
}

/// Every grid option of every table, in the `(a, b)` order of
/// [`PlannerInstance::options`].
struct Options {
    tables: Vec<Vec<TableOption>>,
    limits: Vec<usize>,
}

impl Options {
    fn new(inst: &PlannerInstance) -> Self {
        let n = inst.num_tables();
        Options {
            tables: (0..n).map(|j| inst.options(j)).collect(),
            limits: (0..n).map(|j| inst.hot_limit(j)).collect(),
        }
    }

    fn get(&self, j: usize, g: GridChoice) -> &TableOption {
        let (l, a) = (self.limits[j], g.dram);
        let o = &self.tables[j][a * (l + 1) - a * a.saturating_sub(1) / 2 + g.tt];
        debug_assert_eq!(o.grid, g);
        o
    }
}

struct State<'a> {
    inst: &'a PlannerInstance,
    opts: &'a Options,
    caps: [u128; 3],
    k: usize,
    device_of: Vec<usize>,
    grid: Vec<GridChoice>,
}

impl State<'_> {
    fn tables_on(&self, d: usize) -> Vec<usize> {
        (0..self.device_of.len())
            .filter(|&j| self.device_of[j] == d)
            .collect()
    }

    fn eval_with(&self, tables: &[usize], over: &[(usize, GridChoice)]) -> Eval {
        let mut e = Eval {
            tiers: [0.0; 3],
            used: [0; 3],
        };
        for &j in tables {
            let g = over
                .iter()
                .find(|(jj, _)| *jj == j)
                .map_or(self.grid[j], |&(_, g)| g);
            let o = self.opts.get(j, g);
            for r in 0..3 {
                e.tiers[r] += o.cost[r];
                e.used[r] += u128::from(o.usage()[r]);
            }
        }
        e
    }

    fn feasible(&self, e: &Eval) -> bool {
        (0..3).all(|r| e.used[r] <= self.caps[r])
    }

    /// Summed capacity excess, each resource relative to its capacity.
    fn overflow(&self, e: &Eval) -> f64 {
        (0..3)
            .map(|r| e.used[r].saturating_sub(self.caps[r]) as f64 / self.caps[r].max(1) as f64)
            .sum()
    }

    /// `true` when `a` is a better device state than `b`: feasible first,
    /// then smaller overflow, then `(max, sum)`.
    fn better(&self, a: &Eval, b: &Eval) -> bool {
        match (self.feasible(a), self.feasible(b)) {
            (true, false) => true,
            (false, true) => false,
            (false, false) => self.overflow(a) < self.overflow(b),
            (true, true) => {
                cost_lt(a.max(), b.max())
                    || (!cost_lt(b.max(), a.max()) && cost_lt(a.sum(), b.sum()))
            }
        }
    }

    /// Splits one device from an all-SSD start with each fill order and
    /// keeps the best result.
    fn fill(&mut self, d: usize, depth: Depth) {
        let tables = self.tables_on(d);
        let mut best: Option<(Eval, Vec<GridChoice>)> = None;
        for order in [FillOrder::DramFirst, FillOrder::TtFirst, FillOrder::Joint] {
            for &j in &tables {
                self.grid[j] = GridChoice::default();
            }
            self.greedy(&tables, order);
            self.refine(&tables, depth);
            let e = self.eval_with(&tables, &[]);
            if best.as_ref().is_none_or(|(b, _)| self.better(&e, b)) {
                best = Some((e, tables.iter().map(|&j| self.grid[j]).collect()));
            }
        }
        if let Some((_, grid)) = best {
            for (&j, g) in tables.iter().zip(grid) {
                self.grid[j] = g;
            }
        }
    }

    /// Greedy grid steps, each time taking the move with the best latency
    /// reduction per byte (SSD bytes freed per byte while SSD is over
    /// capacity).
    fn greedy(&mut self, tables: &[usize], order: FillOrder) {
        let phases: &[&[usize]] = match order {
            FillOrder::DramFirst => &[&[0], &[1]],
            FillOrder::TtFirst => &[&[1], &[0]],
            FillOrder::Joint => &[&[0, 1]],
        };
        for &resources in phases {
            loop {
                let cur = self.eval_with(tables, &[]);
                let ssd_over = cur.used[2] > self.caps[2];
                let mut pick: Option<(f64, f64, usize, GridChoice)> = None;
                for &j in tables {
                    let g = self.grid[j];
                    if g.dram + g.tt >= self.inst.hot_limit(j) {
                        continue;
                    }
                    for &r in resources {
                        let next = if r == 0 {
                            GridChoice {
                                dram: g.dram + 1,
                                ..g
                            }
                        } else {
                            GridChoice { tt: g.tt + 1, ..g }
                        };
                        let e = self.eval_with(tables, &[(j, next)]);
                        if e.used[0] > self.caps[0] || e.used[1] > self.caps[1] {
                            continue;
                        }
                        let gain = cur.sum() - e.sum();
                        // over SSD capacity, flat stretches of the inverse CDF
                        // are crossed too since the next step may free rows again
                        let accept = if ssd_over {
                            e.used[2] <= cur.used[2]
                        } else {
                            e.max() <= cur.max() + COST_TOL * cur.max().max(1.0) && gain > 0.0
                        };
                        if !accept {
                            continue;
                        }
                        let mut bytes = e.used[r] as f64 - cur.used[r] as f64;
                        if resources.len() > 1 {
                            bytes /= self.caps[r].max(1) as f64;
                        }
                        let benefit = if ssd_over {
                            (cur.used[2] - e.used[2]) as f64
                        } else {
                            gain
                        };
                        let score = if bytes <= 0.0 && benefit > 0.0 {
                            f64::INFINITY
                        } else {
                            benefit / bytes.max(f64::MIN_POSITIVE)
                        };
                        if pick
                            .as_ref()
                            .is_none_or(|&(s, g, ..)| score > s || (score == s && gain > g))
                        {
                            pick = Some((score, gain, j, next));
                        }
                    }
                }
                match pick {
                    Some((.., j, g)) => self.grid[j] = g,
                    None => break,
                }
            }
        }
    }

    /// Grid choices one step away from `g` that respect the hot threshold.
    fn neighbours(&self, j: usize, g: GridChoice) -> Vec<GridChoice> {
        let limit = self.inst.hot_limit(j) as isize;
        let (a, b) = (g.dram as isize, g.tt as isize);
        [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)]
            .into_iter()
            .map(|(da, db)| (a + da, b + db))
            .filter(|&(na, nb)| na >= 0 && nb >= 0 && na + nb <= limit)
            .map(|(na, nb)| GridChoice {
                dram: na as usize,
                tt: nb as usize,
            })
            .collect()
    }

    /// Single-step moves in the grid, accepted on `(max, sum)` improvement,
    /// then (with `depth`) jumps of one table anywhere on its grid; an
    /// infeasible device also tries pairs of single steps to shed overflow.
    fn refine(&mut self, tables: &[usize], depth: Depth) {
        for _ in 0..MAX_REFINE_ROUNDS {
            let cur = self.eval_with(tables, &[]);
            let mut step: Option<Vec<(usize, GridChoice)>> = None;
            'single: for &j in tables {
                for next in self.neighbours(j, self.grid[j]) {
                    let e = self.eval_with(tables, &[(j, next)]);
                    if self.better(&e, &cur) {
                        step = Some(vec![(j, next)]);
                        break 'single;
                    }
                }
            }
            if step.is_none() && depth >= Depth::Jumps {
                step = self.best_response(tables, &cur).map(|m| vec![m]);
            }
            if step.is_none() && !self.feasible(&cur) {
                'pair: for (x, &j) in tables.iter().enumerate() {
                    for &k in &tables[x + 1..] {
                        for gj in self.neighbours(j, self.grid[j]) {
                            for gk in self.neighbours(k, self.grid[k]) {
                                let moves = [(j, gj), (k, gk)];
                                if self.better(&self.eval_with(tables, &moves), &cur) {
                                    step = Some(moves.to_vec());
                                    break 'pair;
                                }
                            }
                        }
                    }
                }
            }
            match step {
                Some(moves) => {
                    for (j, g) in moves {
                        self.grid[j] = g;
                    }
                }
                None => {
                    if !(depth == Depth::Rebuild && self.recreate(tables)) {
                        break;
                    }
                }
            }
        }
    }

    /// Sends each table back to SSD in turn and rebuilds the device by best
    /// responses; keeps the first rebuild that beats the current split.
    fn recreate(&mut self, tables: &[usize]) -> bool {
        let cur = self.eval_with(tables, &[]);
        for &j in tables {
            let saved: Vec<GridChoice> = tables.iter().map(|&t| self.grid[t]).collect();
            self.grid[j] = GridChoice::default();
            for _ in 0..4 * tables.len() {
                let now = self.eval_with(tables, &[]);
                match self.best_response(tables, &now) {
                    Some((t, g)) => self.grid[t] = g,
                    None => break,
                }
            }
            if self.better(&self.eval_with(tables, &[]), &cur) {
                return true;
            }
            for (&t, g) in tables.iter().zip(saved) {
                self.grid[t] = g;
            }
        }
        false
    }

    /// Best grid choice of one table with the others fixed, if it improves
    /// on `cur`.
    fn best_response(&self, tables: &[usize], cur: &Eval) -> Option<(usize, GridChoice)> {
        let mut best: Option<(Eval, usize, GridChoice)> = None;
        for &j in tables {
            let mine = self.opts.get(j, self.grid[j]);
            let mut rest = *cur;
            for r in 0..3 {
                rest.tiers[r] -= mine.cost[r];
                rest.used[r] -= u128::from(mine.usage()[r]);
            }
            for o in &self.opts.tables[j] {
                let mut e = rest;
                for r in 0..3 {
                    e.tiers[r] += o.cost[r];
                    e.used[r] += u128::from(o.usage()[r]);
                }
                let reference = best.as_ref().map_or(cur, |(b, ..)| b);
                if self.better(&e, reference) {
                    best = Some((e, j, o.grid));
                }
            }
        }
        best.map(|(_, j, g)| (j, g))
    }

    fn first_emb(&self) -> usize {
        self.inst.num_devices() - self.k
    }

    fn device_evals(&self) -> Vec<Eval> {
        (self.first_emb()..self.inst.num_devices())
            .map(|d| self.eval_with(&self.tables_on(d), &[]))
            .collect()
    }

    /// `C` of the current state, or `None` if a capacity is exceeded.
    fn objective(&self) -> Option<f64> {
        let evals = self.device_evals();
        if !evals.iter().all(|e| self.feasible(e)) {
            return None;
        }
        let emb = evals.iter().map(Eval::max).fold(0.0, f64::max);
        let (bot, top) = self.inst.mlp_costs(self.inst.num_devices() - self.k);
        Some(bot.max(emb) + top)
    }

    fn relocate(&mut self) {
        let first = self.first_emb();
        let m_count = self.inst.num_devices();
        for _ in 0..MAX_RELOCATION_PASSES {
            let Some(cur) = self.objective() else { return };
            let evals = self.device_evals();
            let bottleneck = first
                + (0..evals.len())
                    .max_by(|&x, &y| evals[x].max().total_cmp(&evals[y].max()).then(y.cmp(&x)))
                    .unwrap_or(0);
            // single moves off the bottleneck first, then swaps with a table
            // of another device
            let mut candidates = Vec::new();
            for j in self.tables_on(bottleneck) {
                for target in (first..m_count).filter(|&t| t != bottleneck) {
                    candidates.push((j, target, None));
                }
            }
            for j in self.tables_on(bottleneck) {
                for target in (first..m_count).filter(|&t| t != bottleneck) {
                    for other in self.tables_on(target) {
                        candidates.push((j, target, Some(other)));
                    }
                }
            }
            let moved = candidates.into_iter().any(|(j, target, other)| {
                let saved = (self.device_of.clone(), self.grid.clone());
                self.device_of[j] = target;
                if let Some(o) = other {
                    self.device_of[o] = bottleneck;
                }
                self.fill(bottleneck, Depth::Steps);
                self.fill(target, Depth::Steps);
                match self.objective() {
                    Some(c) if cost_lt(c, cur) => {
                        self.refine(&self.tables_on(bottleneck), Depth::Jumps);
                        self.refine(&self.tables_on(target), Depth::Jumps);
                        true
                    }
                    _ => {
                        (self.device_of, self.grid) = saved;
                        false
                    }
                }
            });
            if !moved {
                return;
            }
        }
    }
}

/// Longest-processing-time spread on the all-SSD cost, skipping devices
/// whose SSD could no longer hold a table's cold tail.
fn lpt_placement(instance: &PlannerInstance, k: usize) -> Vec<usize> {
    let p = &instance.profile;
    let weight = |j: usize| instance.stats[j].avg_pf * f64::from(p.batch_size) * p.t_ssd;
    let mut order: Vec<usize> = (0..instance.num_tables()).collect();
    order.sort_by(|&x, &y| weight(y).total_cmp(&weight(x)).then(x.cmp(&y)));
    let mut load = vec![0.0f64; k];
    let mut ssd = vec![0u128; k];
    let mut slot_of = vec![0; instance.num_tables()];
    for j in order {
        let need = u128::from(min_ssd(instance, j));
        let by_load = |x: &usize, y: &usize| load[*x].total_cmp(&load[*y]).then(x.cmp(y));
        let slot = (0..k)
            .filter(|&s| ssd[s] + need <= u128::from(p.cap_ssd))
            .min_by(by_load)
            .or_else(|| (0..k).min_by(by_load))
            .unwrap_or(0);
        load[slot] += weight(j);
        ssd[slot] += need;
        slot_of[j] = slot;
    }
    slot_of
}

/// First-fit-decreasing packing of the smallest reachable SSD footprints.
fn ssd_packing(instance: &PlannerInstance, k: usize) -> Vec<usize> {
    let cap = u128::from(instance.profile.cap_ssd);
    let mut order: Vec<usize> = (0..instance.num_tables()).collect();
    order.sort_by_key(|&j| (std::cmp::Reverse(min_ssd(instance, j)), j));
    let mut ssd = vec![0u128; k];
    let mut slot_of = vec![0; instance.num_tables()];
    for j in order {
        let need = u128::from(min_ssd(instance, j));
        let slot = (0..k)
            .find(|&s| ssd[s] + need <= cap)
            .unwrap_or_else(|| (0..k).min_by_key(|&s| (ssd[s], s)).unwrap_or(0));
        ssd[slot] += need;
        slot_of[j] = slot;
    }
    slot_of
}

fn min_ssd(instance: &PlannerInstance, j: usize) -> u64 {
    let limit = instance.hot_limit(j);
    instance
        .option(j, GridChoice { dram: 0, tt: limit })
        .ssd_bytes
}

fn plan_for(instance: &PlannerInstance, k: usize) -> Option<(f64, PlanSkeleton)> {
    let m_count = instance.num_devices();
    let p = &instance.profile;
    let first = m_count - k;

    let lpt = lpt_placement(instance, k);
    let packed = ssd_packing(instance, k);
    let starts = if packed == lpt {
        vec![lpt]
    } else {
        vec![lpt, packed]
    };

    let opts = Options::new(instance);
    let mut best: Option<(f64, State)> = None;
    for slots in starts {
        let mut state = State {
            inst: instance,
            opts: &opts,
            caps: [p.cap_dram, p.cap_bram, p.cap_ssd].map(u128::from),
            k,
            device_of: slots.iter().map(|s| first + s).collect(),
            grid: vec![GridChoice::default(); instance.num_tables()],
        };
        for d in first..m_count {
            state.fill(d, Depth::Jumps);
        }
        state.relocate();
        for d in first..m_count {
            state.refine(&state.tables_on(d), Depth::Rebuild);
        }
        if let Some(c) = state.objective() {
            if best.as_ref().is_none_or(|(bc, _)| cost_lt(c, *bc)) {
                best = Some((c, state));
            }
        }
    }
    let (c, state) = best?;

    let mut cores = vec![CoreType::Mlp; first];
    cores.extend(std::iter::repeat_n(CoreType::Emb, k));
    Some((
        c,
        PlanSkeleton::from_devices(cores, &state.device_of, state.grid),
    ))
}
