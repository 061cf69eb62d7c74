use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sesched::agents::read_metrics_csv;
use sesched::bench::{
    compare_table, export_curves, run_experiment, solve_all, write_curves_csv, ExperimentConfig, Summary, DEFAULT_WINDOW,
};
use sesched::error::{Error, Result};
use sesched::mdp::read_solution_csv;
use sesched::structure::{run_applicable_checks, write_reports_csv};

#[derive(Parser)]
#[command(name = "sesched", version, about = "Sensor scheduling experiments over fading channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (system, seed, agent) combination of an experiment config.
    Run { config: PathBuf },
    /// Solve the systems of a config by value iteration and check their structure.
    Solve {
        config: PathBuf,
        /// Defaults to the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the structure checks on a stored solution.
    Check {
        solution: PathBuf,
        /// Exit with an error when any check reports a violation.
        #[arg(long)]
        strict: bool,
        /// Write the violation witnesses to this CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Merge result directories (or summary.json files) into one comparison table.
    Table {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Smooth a training metrics CSV into learning curves.
    Curves {
        metrics: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        /// Defaults to `<metrics>.curves.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(config: &Path) -> Result<()> {
    let out = run_experiment(config)?;
    let table = compare_table(std::slice::from_ref(&out.summary))?;
    print!("{table}");
    println!("results in {}", out.dir.display());
    Ok(())
}

fn solve(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    for s in solve_all(&cfg, &out)? {
        println!(
            "{}: {} states, {} sweeps, residual {:e}",
            s.name,
            s.solution.space.len(),
            s.solution.values.iterations,
            s.solution.values.residual
        );
        for r in &s.reports {
            println!("  {r}");
        }
    }
    println!("results in {}", out.display());
    Ok(())
}

fn check(solution: &Path, strict: bool, report: Option<PathBuf>) -> Result<bool> {
    let art = read_solution_csv(solution)?;
    let space = art.meta.space()?;
    let reports = run_applicable_checks(&art.values, &art.policy, &space, &art.meta.channel, 10.0 * art.meta.tol)?;
    for r in &reports {
        println!("{r}");
    }
    if let Some(path) = report {
        write_reports_csv(&path, &reports)?;
    }
    Ok(!strict || reports.iter().all(|r| r.passed()))
}

fn table(results: &[PathBuf], csv: Option<PathBuf>) -> Result<()> {
    let summaries = results.iter().map(|p| Summary::load(p)).collect::<Result<Vec<_>>>()?;
    let table = compare_table(&summaries)?;
    print!("{table}");
    if let Some(path) = csv {
        table.write_csv(&path)?;
    }
    Ok(())
}

fn curves(metrics: &Path, window: usize, out: Option<PathBuf>) -> Result<()> {
    let rows = read_metrics_csv(metrics)?;
    let points = export_curves(&rows, window)?;
    let out = out.unwrap_or_else(|| metrics.with_extension("curves.csv"));
    write_curves_csv(&out, &points)?;
    println!("{} episodes -> {}", points.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => run(&config),
        Command::Solve { config, out } => solve(&config, out),
        Command::Check {
            solution,
            strict,
            report,
        } => match check(&solution, strict, report) {
            Ok(true) => Ok(()),
            Ok(false) => Err(Error::Validation("structure violations found".into())),
            Err(e) => Err(e),
        },
        Command::Table { results, csv } => table(&results, csv),
        Command::Curves { metrics, window, out } => curves(&metrics, window, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
