use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use screc::pipeline::{self, PipelineConfig};
use screc::planner::Backend;
use screc::remap::Tier;
use screc::{Error, Result};

/// Embedding sharding pipeline: synthesize or load a trace, profile it, plan
/// the table split over DRAM / TT / SSD, build remap tables and simulate.
#[derive(Parser, Debug)]
#[command(name = "screc", version)]
struct Cli {
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the trace synthesizer seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Solver backend: exact or heuristic.
    #[arg(long, global = true)]
    backend: Option<Backend>,

    /// Memory levels: 1 = SSD, 2 = DRAM + SSD, 3 = DRAM + TT + SSD.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    ablation: Option<u8>,

    /// Overrides the device count M.
    #[arg(long, global = true)]
    devices: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a power-law trace.
    GenTrace,
    /// Profile the trace into the stats file.
    Analyze,
    /// Solve the sharding plan from the stats file.
    Plan,
    /// Build remap tables from the plan and the trace.
    Remap,
    /// Simulate the trace under the plan.
    Simulate,
    /// Compare simulation summaries (defaults to the per-level reports).
    Report {
        /// Summary JSON files; the first one is the speedup baseline.
        summaries: Vec<PathBuf>,
    },
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.trace.seed = seed;
    }
    if let Some(backend) = cli.backend {
        cfg.backend = backend;
    }
    if let Some(level) = cli.ablation {
        cfg.ablation = level;
    }
    if let Some(m) = cli.devices {
        cfg.profile.devices = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::GenTrace => {
            let trace = pipeline::gen_trace(&cfg)?;
            println!(
                "wrote {} samples over {} tables ({} lookups) to {}",
                trace.num_samples(),
                trace.num_tables(),
                trace.total_lookups(),
                cfg.paths.trace.display()
            );
        }
        Command::Analyze => {
            let stats = pipeline::analyze(&cfg)?;
            println!(
                "{:>8} {:>10} {:>5} {:>8} {:>10} {:>12}",
                "table", "rows", "step", "avg_pf", "icdf(0.8)", "tt_bytes"
            );
            for (spec, st) in stats.specs.iter().zip(&stats.stats) {
                println!(
                    "{:>8} {:>10} {:>5} {:>8.3} {:>10.5} {:>12}{}",
                    spec.table_id,
                    spec.row_len,
                    st.step,
                    st.avg_pf,
                    st.icdf_interp(0.8),
                    st.tt_cm[st.step],
                    if st.cold { "  (cold)" } else { "" }
                );
            }
            println!("stats written to {}", cfg.paths.stats.display());
        }
        Command::Plan => {
            let (file, elapsed) = pipeline::plan(&cfg)?;
            let plan = &file.plan;
            let c = &plan.costs;
            println!(
                "backend {} ablation {}: {} MLP / {} EMB devices, solved in {:.3} s",
                file.backend,
                file.ablation,
                plan.mlp_devices(),
                plan.emb_devices(),
                elapsed.as_secs_f64()
            );
            println!("C          = {}", c.total);
            println!("c_fnt      = {}", c.c_fnt);
            println!("c_emb      = {}", c.c_emb);
            println!("c_mlp_bot  = {}", c.c_mlp_bot);
            println!("c_mlp_top  = {}", c.c_mlp_top);
            for (m, core) in plan.cores.iter().enumerate() {
                println!(
                    "device {m} {core:?}: dram {} tt {} ssd {}",
                    c.c_dram[m], c.c_tt[m], c.c_ssd[m]
                );
            }
            for (j, t) in plan.tables.iter().enumerate() {
                println!(
                    "table {} -> device {}: pct_dram {:.2} pct_tt {:.2} rows {}/{}/{} tt_cap {}",
                    t.table_id,
                    plan.device_of(j).map_or("-".into(), |m| m.to_string()),
                    t.pct_dram,
                    t.pct_tt,
                    t.dram_rows,
                    t.tt_rows,
                    t.ssd_rows,
                    t.tt_cap
                );
            }
            println!("plan written to {}", cfg.paths.plan.display());
        }
        Command::Remap => {
            let tables = pipeline::remap(&cfg)?;
            for t in &tables {
                let pop = t.populations()?;
                println!(
                    "table {}: {} rows, dram {} tt {} ssd {}",
                    t.table_id,
                    t.row_len(),
                    pop[Tier::Dram as usize],
                    pop[Tier::Tt as usize],
                    pop[Tier::Ssd as usize]
                );
            }
            println!("remap written to {}", cfg.paths.remap.display());
        }
        Command::Simulate => {
            let report = pipeline::simulate(&cfg)?;
            let s = &report.summary;
            println!(
                "ablation {}: {} batches of {}",
                cfg.ablation, s.batches, s.batch_size
            );
            println!(
                "mean latency {:.1} ns (p50 {:.1}, p99 {:.1})",
                s.mean_latency_ns, s.p50_latency_ns, s.p99_latency_ns
            );
            println!("mean embedding {:.1} ns", s.mean_emb_ns);
            println!(
                "lookups dram {} tt {} ssd {}",
                s.tier_lookups[0], s.tier_lookups[1], s.tier_lookups[2]
            );
            println!("IPS {:.2}", s.ips);
            let (csv, json) = cfg.paths.report_files(cfg.ablation);
            println!("report written to {} and {}", csv.display(), json.display());
        }
        Command::Report { summaries } => {
            let rows = pipeline::report(&cfg, summaries)?;
            print!("{}", pipeline::format_comparison(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Constraint(violations) = &e {
                for v in violations {
                    eprintln!("  {v}");
                }
            }
            ExitCode::from(if e.is_constraint() { 2 } else { 1 })
        }
    }
}
