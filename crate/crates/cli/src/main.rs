use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jmperc_cli::config::Metric;
use jmperc_cli::error::{EXIT_CHECK, EXIT_CONFIG, EXIT_OK};
use jmperc_cli::{execute, CliError, Command, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "jmperc",
    version,
    about = "Percolation experiments on random Johnson-Mehl and sliced Voronoi tessellations"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Left-right crossing probability of a rho*s x s rectangle.
    Cross(Common),
    /// Size tail of the origin's black cluster.
    Tail(Common),
    /// Bracket the critical level by bisection on crossing estimates.
    Pc(Common),
    /// Run the crossed coupling and verify its global event.
    Couple(Common),
    /// Face-count survival of the origin's cell.
    Faces(Common),
    /// Ratios of planar face-count probabilities.
    Hilhorst(Common),
    /// Draw a tessellation as SVG.
    Render(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    metric: Option<Metric>,
    /// Colouring level; repeat or separate with commas for several.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit with status 3 if the command's acceptance checks fail.
    #[arg(long)]
    check: bool,
}

fn split(sub: Sub) -> (Command, Common) {
    match sub {
        Sub::Cross(c) => (Command::Cross, c),
        Sub::Tail(c) => (Command::Tail, c),
        Sub::Pc(c) => (Command::Pc, c),
        Sub::Couple(c) => (Command::Couple, c),
        Sub::Faces(c) => (Command::Faces, c),
        Sub::Hilhorst(c) => (Command::Hilhorst, c),
        Sub::Render(c) => (Command::Render, c),
    }
}

fn run(command: Command, c: Common) -> Result<bool, CliError> {
    let base = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides {
        metric: c.metric,
        p: c.p,
        rho: c.rho,
        s: c.s,
        trials: c.trials,
        seed: c.seed,
        out: c.out,
    };
    let cfg = base.resolve(command, overrides)?;
    let report = execute(&cfg)?;
    println!("{command}: {}", report.summary);
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    for ch in &report.checks {
        println!("[{}] {}: {}", if ch.pass { "PASS" } else { "FAIL" }, ch.name, ch.detail);
    }
    Ok(!c.check || report.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (command, common) = split(cli.command);
    match run(command, common) {
        Ok(true) => ExitCode::from(EXIT_OK as u8),
        Ok(false) => ExitCode::from(EXIT_CHECK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
