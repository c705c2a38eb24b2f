//! `beltrami`: straighten piecewise-constant Beltrami fields and inspect the
//! resulting cone geometry from the command line.
//!
//! Every subcommand reads the same scenario JSON, writes its artifacts into
//! `--out`, and finishes with a machine-readable `report.json`. The process
//! exits non-zero if any recorded invariant check failed. Artifacts are
//! written atomically (temp file + rename) and are byte-identical across
//! repeat runs of the same scenario; wall-clock timings live only in
//! `report.json`.

mod commands;
mod emit;
mod render;
mod report;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Ctx;
use report::RunReport;
use scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "beltrami",
    about = "Straightening maps for piecewise-constant Beltrami fields",
    version
)]
struct Cli {
    /// Scenario description (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    scenario: Option<PathBuf>,

    /// Output directory for artifacts and the run report.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Worker threads. Accepted for interface stability; the pipeline is
    /// single-threaded, so only 1 is meaningful.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Chatty progress on stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sample the field into per-cell averages and write `field.json`.
    Discretize,
    /// Glue the cell charts and write corner residues (`residues.csv`).
    Glue,
    /// Solve the accessory-parameter problem; write the map and its symbol.
    Solve,
    /// Evaluate the solved map at seeded random probes (`probes.csv`).
    Eval,
    /// Trace geodesics of the solved symbol (`geodesics.csv`).
    Trace,
    /// Parallel-transport around every cone point (`transport.csv`).
    Transport,
    /// Tabulate the dilation expansion and the transport-vs-limit comparison.
    Limits,
    /// Draw the mapped grid skeleton and cone points as SVG.
    Render,
    /// Run the full invariant battery and write `verify.csv`.
    Verify,
}

impl Command {
    fn run(self, ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
        match self {
            Command::Discretize => commands::cmd_discretize(ctx, report),
            Command::Glue => commands::cmd_glue(ctx, report),
            Command::Solve => commands::cmd_solve(ctx, report),
            Command::Eval => commands::cmd_eval(ctx, report),
            Command::Trace => commands::cmd_trace(ctx, report),
            Command::Transport => commands::cmd_transport(ctx, report),
            Command::Limits => commands::cmd_limits(ctx, report),
            Command::Render => commands::cmd_render(ctx, report),
            Command::Verify => commands::cmd_verify(ctx, report),
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let path = cli
        .scenario
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("--scenario <FILE> is required"))?;
    let (scenario, scenario_dir) = Scenario::load(path)?;
    if cli.threads != 1 {
        eprintln!(
            "[beltrami] note: --threads {} requested; running single-threaded",
            cli.threads
        );
    }
    let ctx = Ctx {
        scenario: scenario.clone(),
        scenario_dir,
        out: cli.out,
        verbose: cli.verbose,
    };
    let mut report = RunReport::new(scenario);
    let outcome = cli.command.run(&ctx, &mut report);
    // The report is written even for failed runs so the partial record is
    // inspectable; the original error still decides the exit.
    let report_path = ctx.out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    emit::write_atomic(&report_path, text.as_bytes())?;
    outcome?;
    if ctx.verbose {
        for check in &report.invariants {
            eprintln!(
                "[beltrami] {}: {:?} (defect {:.3e}, budget {:.3e})",
                check.name, check.status, check.defect, check.budget
            );
        }
    }
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("[beltrami] invariant checks failed (see report.json)");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("[beltrami] error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
