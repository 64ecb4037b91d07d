use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riskfield::cli::{self, ScenarioConfig, Workspace};
use riskfield::inference::FitResult;

#[derive(Parser)]
#[command(name = "riskfield", version, about = "Disease-mapping simulation harness (BYM2 vs SPDE LGCP)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for fitting.
    #[arg(long, env = "RISKFIELD_JOBS")]
    jobs: Option<usize>,
    /// Base simulation seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the replicate datasets of the configured scenario.
    Simulate(Common),
    /// Fit every dataset with every configured model.
    Fit(Common),
    /// Compute replicate metrics and the scenario summary.
    Evaluate(Common),
    /// Heatmaps and exceedance masks of one fit file.
    Map {
        #[command(flatten)]
        common: Common,
        /// FitResult CSV to render.
        #[arg(long)]
        fit: PathBuf,
    },
    /// Simulate, fit and evaluate the whole factorial design.
    Sweep(Common),
}

fn load(common: &Common) -> riskfield::Result<Workspace> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.simulation.seed = s;
    }
    Workspace::build(&cfg)
}

fn jobs(common: &Common) -> usize {
    common
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run(cli: Cli) -> riskfield::Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let ws = load(&c)?;
            ws.write_domain(&c.out)?;
            let m = cli::simulate(&ws, &ws.cfg.scenario, &c.out)?;
            println!(
                "{}: {} datasets, expected cases {:.3} (target {})",
                m.scenario_id,
                m.datasets.len(),
                m.expected_cases,
                m.target_cases
            );
        }
        Command::Fit(c) => {
            let ws = load(&c)?;
            let recs = cli::fit(&ws, &ws.cfg.scenario, &c.out, jobs(&c))?;
            let failed = recs.iter().filter(|r| !r.converged).count();
            println!("{}: {} fits, {failed} failed", ws.cfg.scenario.id(), recs.len());
            for r in recs.iter().filter(|r| !r.converged) {
                eprintln!(
                    "  replicate {} {}: {}",
                    r.replicate,
                    r.model.name(),
                    r.error.as_deref().unwrap_or("")
                );
            }
        }
        Command::Evaluate(c) => {
            let ws = load(&c)?;
            let rows = cli::evaluate(&ws, &ws.cfg.scenario, &c.out)?;
            let gaps = rows.iter().filter(|r| r.status != "ok").count();
            println!(
                "{}: {} replicate rows, {gaps} gaps; summary in {}",
                ws.cfg.scenario.id(),
                rows.len(),
                cli::metrics_dir(&c.out, &ws.cfg.scenario).join("summary.csv").display()
            );
        }
        Command::Map { common, fit } => {
            let ws = load(&common)?;
            let res = FitResult::read_csv(&fit)?;
            // fits/<scenario>/<model>/rep_NNNN.csv -> maps/<scenario>/<model>/rep_NNNN
            let mut dir = common.out.join("maps");
            let stem = fit.with_extension("");
            let parts: Vec<_> = stem.components().collect();
            for c in &parts[parts.len().saturating_sub(3)..] {
                dir.push(c);
            }
            let s = cli::write_maps(ws.grid.raster(), &res, &ws.cfg.map.probability_thresholds, &dir)?;
            for (q, n) in s.masks {
                println!("P(exceedance) > {q}: {n} cells");
            }
            println!("maps written to {}", dir.display());
        }
        Command::Sweep(c) => {
            let ws = load(&c)?;
            ws.write_domain(&c.out)?;
            let specs = cli::sweep(&ws, &c.out, jobs(&c))?;
            println!("{} scenarios; summary in {}", specs.len(), c.out.join("metrics/sweep_summary.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
