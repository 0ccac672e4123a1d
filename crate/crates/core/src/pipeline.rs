//! File-mediated pipeline stages behind the command line tool.
//!
//! Each stage reads the artifacts of the stages before it from the paths in
//! [`PipelineConfig`] and writes its own, so every step can be rerun and
//! diffed on its own. Relative paths in a config file are resolved against
//! the directory holding that file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{self, check_plan, Backend, PlanFile, PlannerInstance, SolveOptions};
use crate::remap::{self, RemapTable};
use crate::sim::{self, SimOptions, SimReport, SimSummary};
use crate::stats::{self, CoreModel, HardwareProfile, StatsFile, TtOptions};
use crate::trace::{self, AccessTrace, SyntheticTraceConfig, TraceFormat};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFileFormat {
    #[default]
    Binary,
    Text,
}

/// Artifact locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub trace: PathBuf,
    pub trace_format: TraceFileFormat,
    /// Table-spec sidecar of a text trace.
    pub tables: PathBuf,
    pub stats: PathBuf,
    pub plan: PathBuf,
    /// Optional LP-text export written by the plan stage.
    pub lp: Option<PathBuf>,
    pub remap: PathBuf,
    /// Stem of simulation reports; level `L` writes `<stem>-lL.csv` and `.json`.
    pub report: PathBuf,
    /// Stem of the comparison table written by the report stage.
    pub comparison: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            trace: "trace.sctr".into(),
            trace_format: TraceFileFormat::Binary,
            tables: "tables.json".into(),
            stats: "stats.json".into(),
            plan: "plan.json".into(),
            lp: None,
            remap: "remap.bin".into(),
            report: "report".into(),
            comparison: "comparison".into(),
        }
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.trace);
        fix(&mut self.tables);
        fix(&mut self.stats);
        fix(&mut self.plan);
        if let Some(lp) = &mut self.lp {
            fix(lp);
        }
        fix(&mut self.remap);
        fix(&mut self.report);
        fix(&mut self.comparison);
    }

    /// CSV and JSON paths of the report for one ablation level.
    pub fn report_files(&self, level: u8) -> (PathBuf, PathBuf) {
        let stem = self.report.to_string_lossy();
        (
            PathBuf::from(format!("{stem}-l{level}.csv")),
            PathBuf::from(format!("{stem}-l{level}.json")),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub profile: HardwareProfile,
    pub trace: SyntheticTraceConfig,
    pub tt: TtOptions,
    pub backend: Backend,
    /// 1 = SSD only, 2 = DRAM and SSD, 3 = DRAM, TT and SSD.
    pub ablation: u8,
    /// Fraction of samples used for profiling.
    pub subsample_rate: f64,
    pub subsample_seed: u64,
    /// When set, TT and MLP latencies come from the cycle models.
    pub core_model: Option<CoreModel>,
    pub sim: SimOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            profile: HardwareProfile::default(),
            trace: SyntheticTraceConfig::default(),
            tt: TtOptions::default(),
            backend: Backend::Heuristic,
            ablation: 3,
            subsample_rate: 1.0,
            subsample_seed: 0,
            core_model: None,
            sim: SimOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_level(self.ablation)?;
        if !(self.subsample_rate > 0.0 && self.subsample_rate <= 1.0) {
            return Err(Error::Config(format!(
                "subsample_rate {} outside (0, 1]",
                self.subsample_rate
            )));
        }
        if let Some(model) = &self.core_model {
            model.geometry.validate()?;
        }
        self.profile.validate()
    }

    pub fn trace_format(&self) -> TraceFormat {
        match self.paths.trace_format {
            TraceFileFormat::Binary => TraceFormat::Binary,
            TraceFileFormat::Text => TraceFormat::Text {
                tables: self.paths.tables.clone(),
            },
        }
    }

    /// Profile with calibrated core latencies, before any ablation.
    pub fn base_profile(&self) -> Result<HardwareProfile> {
        match &self.core_model {
            Some(model) => stats::calibrate_latencies(&self.profile, model),
            None => Ok(self.profile.clone()),
        }
    }
}

fn check_level(level: u8) -> Result<()> {
    if (1..=3).contains(&level) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "ablation level must be 1, 2 or 3, got {level}"
        )))
    }
}

/// Removes the memory levels an ablation run may not use.
pub fn ablation_profile(profile: &HardwareProfile, level: u8) -> Result<HardwareProfile> {
    check_level(level)?;
    let mut p = profile.clone();
    if level < 3 {
        p.cap_bram = 0;
    }
    if level < 2 {
        p.cap_dram = 0;
    }
    Ok(p)
}

// ── Stages ───────────────────────────────────────────────────────────────────

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(std::fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

pub fn gen_trace(cfg: &PipelineConfig) -> Result<AccessTrace> {
    let trace = trace::generate_trace(&cfg.trace)?;
    create_parent(&cfg.paths.trace)?;
    trace::save_trace(&trace, &cfg.paths.trace, &cfg.trace_format())?;
    Ok(trace)
}

pub fn load_full_trace(cfg: &PipelineConfig) -> Result<AccessTrace> {
    trace::load_trace(&cfg.paths.trace, &cfg.trace_format())
}

/// The trace as seen by the profiler, after subsampling.
pub fn profiling_trace(cfg: &PipelineConfig, full: &AccessTrace) -> Result<AccessTrace> {
    if cfg.subsample_rate < 1.0 {
        trace::subsample(full, cfg.subsample_rate, cfg.subsample_seed)
    } else {
        Ok(full.clone())
    }
}

pub fn analyze_in_memory(cfg: &PipelineConfig, full: &AccessTrace) -> Result<StatsFile> {
    let trace = profiling_trace(cfg, full)?;
    let stats = stats::analyze_trace(&trace, cfg.tt)?;
    Ok(StatsFile {
        tt: cfg.tt,
        specs: trace.tables.clone(),
        stats,
    })
}

pub fn analyze(cfg: &PipelineConfig) -> Result<StatsFile> {
    let file = analyze_in_memory(cfg, &load_full_trace(cfg)?)?;
    create_parent(&cfg.paths.stats)?;
    file.save(&cfg.paths.stats)?;
    Ok(file)
}

pub fn plan_in_memory(cfg: &PipelineConfig, stats: &StatsFile, level: u8) -> Result<PlanFile> {
    let profile = ablation_profile(&cfg.base_profile()?, level)?;
    let instance = PlannerInstance::from_stats(profile, stats)?;
    let plan = planner::solve(&instance, cfg.backend, SolveOptions::default())?;
    let violations = check_plan(&instance, &plan);
    if !violations.is_empty() {
        return Err(Error::Constraint(violations));
    }
    Ok(PlanFile {
        backend: cfg.backend,
        ablation: level,
        plan,
    })
}

/// Solves, checks and saves the plan; also returns the solver wall time.
pub fn plan(cfg: &PipelineConfig) -> Result<(PlanFile, Duration)> {
    let stats = StatsFile::load(&cfg.paths.stats)?;
    let start = Instant::now();
    let file = plan_in_memory(cfg, &stats, cfg.ablation)?;
    let elapsed = start.elapsed();
    create_parent(&cfg.paths.plan)?;
    file.save(&cfg.paths.plan)?;
    if let Some(lp) = &cfg.paths.lp {
        let profile = ablation_profile(&cfg.base_profile()?, cfg.ablation)?;
        let instance = PlannerInstance::from_stats(profile, &stats)?;
        create_parent(lp)?;
        let mut out = BufWriter::new(File::create(lp)?);
        planner::write_lp(&instance, &mut out)?;
        out.flush()?;
    }
    Ok((file, elapsed))
}

/// Hotness order of every planned table, taken from the profiling trace.
pub fn hotness_orders(plan: &PlanFile, profiling: &AccessTrace) -> Result<Vec<Vec<u32>>> {
    plan.plan
        .tables
        .iter()
        .map(|t| {
            let pos = profiling.table_position(t.table_id).ok_or_else(|| {
                Error::Config(format!("planned table {} missing from trace", t.table_id))
            })?;
            Ok(stats::hotness_order(profiling, pos))
        })
        .collect()
}

pub fn remap_in_memory(
    cfg: &PipelineConfig,
    plan: &PlanFile,
    full: &AccessTrace,
) -> Result<Vec<RemapTable>> {
    let profiling = profiling_trace(cfg, full)?;
    remap::build_remap(&plan.plan, &hotness_orders(plan, &profiling)?)
}

pub fn remap(cfg: &PipelineConfig) -> Result<Vec<RemapTable>> {
    let plan = PlanFile::load(&cfg.paths.plan)?;
    let tables = remap_in_memory(cfg, &plan, &load_full_trace(cfg)?)?;
    create_parent(&cfg.paths.remap)?;
    remap::save_remap(&tables, &cfg.paths.remap)?;
    Ok(tables)
}

/// Simulates the full trace at `cfg.ablation`. The plan and remap files are
/// used when they were made for that level; otherwise both are rebuilt in
/// memory with the capacities of that level.
pub fn simulate(cfg: &PipelineConfig) -> Result<SimReport> {
    let full = load_full_trace(cfg)?;
    let on_disk = PlanFile::load(&cfg.paths.plan)?;
    let (plan, remaps) = if on_disk.ablation == cfg.ablation {
        let remaps = remap::load_remap(&cfg.paths.remap)?;
        (on_disk, remaps)
    } else {
        let stats = StatsFile::load(&cfg.paths.stats)?;
        let plan = plan_in_memory(cfg, &stats, cfg.ablation)?;
        let remaps = remap_in_memory(cfg, &plan, &full)?;
        (plan, remaps)
    };
    let report = simulate_in_memory(cfg, &plan, &remaps, &full)?;
    let (csv, json) = cfg.paths.report_files(cfg.ablation);
    create_parent(&csv)?;
    sim::save_report(&report, &csv, &json)?;
    Ok(report)
}

pub fn simulate_in_memory(
    cfg: &PipelineConfig,
    plan: &PlanFile,
    remaps: &[RemapTable],
    full: &AccessTrace,
) -> Result<SimReport> {
    let profile = cfg.base_profile()?;
    sim::simulate_trace(&plan.plan, remaps, full, &profile, cfg.sim)
}

// ── Comparison tables ────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub config: String,
    pub mean_latency_ns: f64,
    pub ips: f64,
    /// Mean latency of the first row over this row's.
    pub speedup: f64,
}

pub fn emit_report(reports: &[(String, SimSummary)]) -> Result<Vec<ComparisonRow>> {
    let Some((_, first)) = reports.first() else {
        return Err(Error::Config(
            "report needs at least one simulation summary".into(),
        ));
    };
    if let Some((name, s)) = reports
        .iter()
        .find(|(_, s)| s.batch_size != first.batch_size)
    {
        return Err(Error::Config(format!(
            "{name} uses batch size {} but the first report uses {}; latencies are not comparable",
            s.batch_size, first.batch_size
        )));
    }
    Ok(reports
        .iter()
        .map(|(name, s)| ComparisonRow {
            config: name.clone(),
            mean_latency_ns: s.mean_latency_ns,
            ips: s.ips,
            speedup: first.mean_latency_ns / s.mean_latency_ns,
        })
        .collect())
}

/// Fixed-width text rendering of a comparison.
pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.config.len())
        .chain(["config".len()])
        .max()
        .unwrap_or(6);
    let mut out = format!(
        "{:<width$}  {:>16}  {:>14}  {:>9}\n",
        "config", "mean_latency_ns", "ips", "speedup"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>16.1}  {:>14.2}  {:>9.3}\n",
            r.config, r.mean_latency_ns, r.ips, r.speedup
        ));
    }
    out
}

pub fn save_comparison(rows: &[ComparisonRow], stem: &Path) -> Result<()> {
    create_parent(stem)?;
    let stem = stem.to_string_lossy();
    let mut w = csv::Writer::from_path(format!("{stem}.csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut out = BufWriter::new(File::create(format!("{stem}.json"))?);
    serde_json::to_writer_pretty(&mut out, rows)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Compares the given summaries, or the per-level reports on disk when none
/// are given, and writes the comparison files.
pub fn report(cfg: &PipelineConfig, inputs: &[PathBuf]) -> Result<Vec<ComparisonRow>> {
    let paths: Vec<PathBuf> = if inputs.is_empty() {
        (1..=3)
            .map(|l| cfg.paths.report_files(l).1)
            .filter(|p| p.exists())
            .collect()
    } else {
        inputs.to_vec()
    };
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no simulation reports found next to {}",
            cfg.paths.report.display()
        )));
    }
    let summaries = paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(
                || p.display().to_string(),
                |s| s.to_string_lossy().into_owned(),
            );
            Ok((name, sim::load_summary(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = emit_report(&summaries)?;
    save_comparison(&rows, &cfg.paths.comparison)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(bs: u32, mean: f64) -> SimSummary {
        SimSummary {
            batch_size: bs,
            batches: 1,
            mean_latency_ns: mean,
            p50_latency_ns: mean,
            p99_latency_ns: mean,
            ips: f64::from(bs) / (mean * 1e-9),
            mean_emb_ns: 0.0,
            mlp_bot_ns: 0.0,
            mlp_top_ns: 0.0,
            tier_lookups: [0; 3],
        }
    }

    #[test]
    fn speedup_against_first_row() {
        let rows = emit_report(&[("a".into(), summary(4, 100.0))]).unwrap();
        assert_eq!(rows[0].speedup, 1.0);
        let rows = emit_report(&[
            ("a".into(), summary(4, 100.0)),
            ("b".into(), summary(4, 50.0)),
        ])
        .unwrap();
        assert_eq!(rows[1].speedup, 2.0);
        assert!(format_comparison(&rows).contains("2.000"));
    }

    #[test]
    fn mismatched_batches_refused() {
        let err = emit_report(&[("a".into(), summary(4, 1.0)), ("b".into(), summary(8, 1.0))])
            .unwrap_err();
        assert!(err.to_string().contains("batch size 8"));
        assert!(emit_report(&[]).is_err());
    }

    #[test]
    fn ablation_caps() {
        let p = HardwareProfile::default();
        let one = ablation_profile(&p, 1).unwrap();
        assert_eq!((one.cap_dram, one.cap_bram), (0, 0));
        let two = ablation_profile(&p, 2).unwrap();
        assert_eq!((two.cap_dram, two.cap_bram), (p.cap_dram, 0));
        assert_eq!(ablation_profile(&p, 3).unwrap(), p);
        assert!(ablation_profile(&p, 4).is_err());
    }

    #[test]
    fn config_paths_follow_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"paths": {"plan": "out/p.json"}, "ablation": 2}"#).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.plan, dir.path().join("out/p.json"));
        assert_eq!(cfg.paths.stats, dir.path().join("stats.json"));
        assert_eq!(cfg.ablation, 2);
        assert_eq!(
            cfg.paths.report_files(2).1,
            dir.path().join("report-l2.json")
        );
        std::fs::write(&path, r#"{"ablation": 5}"#).unwrap();
        assert!(PipelineConfig::load(&path).is_err());
    }
}
