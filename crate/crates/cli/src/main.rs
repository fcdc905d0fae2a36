use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mrenkf_cli::commands::OUT_ENV;
use mrenkf_cli::{compare, plotdata, run, CliResult, PlotKind, RunOptions};

/// Multiresolution ensemble Kalman filter twin experiments on the
/// Kuramoto–Sivashinsky equation.
#[derive(Debug, Parser)]
#[command(name = "mrenkf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one twin experiment and write its run directory.
    Run {
        /// `key = value` config file layered over the defaults.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// `enkf` or `mrenkf`.
        #[arg(long)]
        filter: Option<String>,
        /// Override one config key; repeatable, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Run directory [default: $MRENKF_OUT/<filter>-seed<seed>, with
        /// MRENKF_OUT defaulting to `runs`].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Also write per-scale diagnostics and an observation coefficient dump.
        #[arg(long)]
        verbose: bool,
        /// Rerun the configuration of a manifest and verify every output hash.
        #[arg(long, value_name = "MANIFEST")]
        replay: Option<PathBuf>,
    },
    /// Compare two runs that share truth and observations.
    Compare { run_a: PathBuf, run_b: PathBuf },
    /// Write gnuplot-ready data (and optionally SVG) from run directories.
    Plotdata {
        /// One run directory, or two for an overlaid `l2` plot.
        #[arg(required = true, num_args = 1..=2)]
        runs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Output directory [default: <first run>/plots].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Trajectory,
    Pointwise,
    Rankhist,
    L2,
}

impl From<Kind> for PlotKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Trajectory => PlotKind::Trajectory,
            Kind::Pointwise => PlotKind::Pointwise,
            Kind::Rankhist => PlotKind::RankHist,
            Kind::L2 => PlotKind::L2,
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            filter,
            overrides,
            out,
            verbose,
            replay,
        } => {
            let opts = RunOptions {
                config,
                seed,
                filter,
                overrides,
                out,
                out_root: std::env::var_os(OUT_ENV).map(PathBuf::from),
                verbose,
                replay,
            };
            print!("{}", run(&opts)?);
        }
        Command::Compare { run_a, run_b } => print!("{}", compare(&run_a, &run_b)?),
        Command::Plotdata {
            runs,
            kind,
            out,
            svg,
        } => {
            for path in plotdata(&runs, kind.into(), out.as_deref(), svg)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
