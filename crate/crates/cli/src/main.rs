//! Command-line front end: drives the Liouvillian-gap library from a JSON
//! run configuration and lays results down as self-describing artifacts.
//!
//! Exit codes: 0 — everything succeeded; 1 — one or more tasks (or checks)
//! failed, partial outputs and an `errors.json` manifest are retained;
//! 2 — the configuration did not parse or validate.

mod check;
mod config;
mod emit;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, Task};
use emit::FigureId;

#[derive(Parser)]
#[command(
    name = "kerrgap",
    version,
    about = "Driven-dissipative Kerr resonator: Liouvillian gap, steady states and finite-size scaling"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute the task list declared in the configuration.
    Run(CommonArgs),
    /// Gap at the configured operating point.
    Gap(CommonArgs),
    /// Steady state and observables at the configured operating point.
    Steady(CommonArgs),
    /// Wigner function and peak census at the configured operating point.
    Wigner(CommonArgs),
    /// Mean-field fixed points and bistability edges.
    Semiclassical(CommonArgs),
    /// Gap and observables over the configured (N, F̃) grid.
    Sweep(CommonArgs),
    /// Full finite-size scaling analysis (thresholds, power laws, κ).
    Fit(CommonArgs),
    /// Bose-Hubbard k=0 reduction of the configured lattice.
    Mapcheck(CommonArgs),
    /// Render plot-ready column files from stored artifacts.
    #[command(name = "emit-fig")]
    EmitFig(EmitArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    config: PathBuf,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides the configuration and KERRGAP_THREADS).
    #[arg(long, env = "KERRGAP_THREADS")]
    threads: Option<usize>,
    /// Verify existing artifacts by seeded recomputation instead of
    /// overwriting them.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct EmitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Which figure family to render.
    #[arg(long, value_enum)]
    fig: FigureId,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, override_tasks, fig) = match &cli.cmd {
        Cmd::Run(c) => (c, None, None),
        Cmd::Gap(c) => (c, Some(vec![Task::Gap]), None),
        Cmd::Steady(c) => (c, Some(vec![Task::Steady]), None),
        Cmd::Wigner(c) => (c, Some(vec![Task::Wigner]), None),
        Cmd::Semiclassical(c) => (c, Some(vec![Task::Semiclassical]), None),
        Cmd::Sweep(c) => (c, Some(vec![Task::Sweep]), None),
        Cmd::Fit(c) => (c, Some(vec![Task::Fit]), None),
        Cmd::Mapcheck(c) => (c, Some(vec![Task::Mapcheck]), None),
        Cmd::EmitFig(e) => (&e.common, None, Some(e.fig)),
    };

    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };

    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let threads = common.threads.unwrap_or(cfg.parallelism);
    if threads > 0 {
        // Bounded worker pool for everything rayon-parallel downstream.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    if let Some(fig) = fig {
        return run_emit_fig(&cfg, &out, fig, common.check);
    }

    let tasks = override_tasks.unwrap_or_else(|| cfg.tasks.clone());
    if common.check {
        let reports = check::check(&cfg, &out, &tasks);
        return if reports.iter().all(|r| r.outcome.is_ok()) {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        };
    }

    let (_, reports) = tasks::execute(&cfg, &out, &tasks);
    if reports.iter().all(|r| r.outcome.is_ok()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run_emit_fig(cfg: &RunConfig, out: &std::path::Path, fig: FigureId, check: bool) -> ExitCode {
    let files = match tasks::emit_figures(cfg, out, fig, &tasks::Store::default()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("emit-fig {fig}: {e}");
            return ExitCode::from(1);
        }
    };
    if check {
        // Regenerate in memory and compare bytes against what is on disk.
        let mut drift = false;
        for (rel, body) in &files {
            let path = out.join(rel);
            match std::fs::read_to_string(&path) {
                Ok(existing) if existing == *body => println!("check {}: ok", rel.display()),
                Ok(_) => {
                    eprintln!("check {}: differs from regenerated content", rel.display());
                    drift = true;
                }
                Err(e) => {
                    eprintln!("check {}: {e}", rel.display());
                    drift = true;
                }
            }
        }
        return if drift { ExitCode::from(1) } else { ExitCode::SUCCESS };
    }
    for (rel, body) in &files {
        let path = out.join(rel);
        if let Err(e) = emit::write_atomic(&path, body.as_bytes()) {
            eprintln!("emit-fig {fig}: writing {}: {e}", path.display());
            return ExitCode::from(1);
        }
        println!("wrote {}", path.display());
    }
    ExitCode::SUCCESS
}
