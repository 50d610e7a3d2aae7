use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use eonsim::engine::{run_batch_with, run_sweep, write_event_log, Experiment, RunOptions};
use eonsim::metrics::{bp_rows, export, ReportRow};
use eonsim::{MetricsReport, SimConfig, TrafficType};

#[derive(Debug, Parser)]
#[command(name = "eonsim", version, about = "Dynamic provisioning simulator for C / C+L elastic optical networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured strategy and band plan over every seed.
    Run(Common),
    /// Run the strategy x band-plan cross product on matched seeds.
    Sweep(Common),
    /// Check a config (and its topology) without simulating.
    Validate(ConfigArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set routing.k=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct Common {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated seed list replacing the configured seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    quiet: bool,
}

fn load(args: &ConfigArgs, seeds: &[u64]) -> Result<Experiment> {
    let mut config = SimConfig::load(&args.config, &args.overrides)?;
    if !seeds.is_empty() {
        config.seeds = seeds.to_vec();
        config.validate()?;
    }
    Ok(Experiment::new(config)?)
}

fn fmt_pm(mean: &ReportRow, std: &ReportRow, col: &str) -> String {
    match (mean.get(col), std.get(col)) {
        (Some(m), Some(s)) => format!("{:.4}±{:.4}", m, s),
        (Some(m), None) => format!("{:.4}", m),
        _ => "-".into(),
    }
}

fn print_summary(reports: &[MetricsReport]) {
    let mut header = format!("{:<6} {:<5} {:>16}", "strat", "band", "bp_total");
    for t in TrafficType::ALL {
        header.push_str(&format!(" {:>16}", format!("bp_{t}")));
    }
    println!("{header}");
    let rows = bp_rows(reports);
    for pair in rows.iter().filter(|r| r.seed == "mean" || r.seed == "std").collect::<Vec<_>>().chunks(2) {
        let (mean, std) = (pair[0], pair[1]);
        let mut line = format!("{:<6} {:<5} {:>16}", mean.strategy, mean.band_plan, fmt_pm(mean, std, "bp_total"));
        for t in TrafficType::ALL {
            line.push_str(&format!(" {:>16}", fmt_pm(mean, std, &format!("bp_type_{t}"))));
        }
        println!("{line}");
    }
}

fn write_outputs(exp: &Experiment, out: &Path, reports: &[MetricsReport]) -> Result<()> {
    export(out, exp.config.to_json(), reports).with_context(|| format!("writing reports to {}", out.display()))
}

fn cmd_run(args: Common) -> Result<()> {
    let exp = load(&args.config, &args.seeds)?;
    let options = RunOptions {
        audit: false,
        record_outcomes: exp.config.event_log,
    };
    let results = run_batch_with(&exp, options)?;
    if exp.config.event_log {
        for (report, log) in &results {
            let path = args.out.join(format!("events_seed{}.csv", report.seed));
            write_event_log(&path, log, &exp.topology)?;
        }
    }
    let reports: Vec<MetricsReport> = results.into_iter().map(|(r, _)| r).collect();
    write_outputs(&exp, &args.out, &reports)?;
    if !args.quiet {
        print_summary(&reports);
    }
    Ok(())
}

fn cmd_sweep(args: Common) -> Result<()> {
    let exp = load(&args.config, &args.seeds)?;
    let reports = run_sweep(&exp)?;
    write_outputs(&exp, &args.out, &reports)?;
    if !args.quiet {
        print_summary(&reports);
        let rel = eonsim::metrics::relative_bps(&reports);
        println!();
        println!("{:<6} {:<5} {:>12}", "strat", "band", "relative_bp");
        for r in rel.iter().filter(|r| r.type_id.is_none()) {
            let v = r.relative_bp.map_or("-".into(), |v| format!("{:+.3}", v));
            println!("{:<6} {:<5} {:>12}", r.strategy, r.band_plan, v);
        }
    }
    Ok(())
}

fn cmd_validate(args: ConfigArgs) -> Result<()> {
    let exp = load(&args, &[])?;
    println!(
        "ok: {} nodes, {} links, strategy {}, band plan {}, {} seed(s)",
        exp.topology.node_count(),
        exp.topology.link_count(),
        exp.config.strategy,
        exp.config.band_plan,
        exp.config.seeds.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
