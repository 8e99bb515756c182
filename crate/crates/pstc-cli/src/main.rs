use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use pstc_cli::run::{self, RunOverrides};
use pstc_core::pstc::TriggerMode;

/// Worst-case self-triggered control for output-feedback sampled-data
/// loops: precompute the offline tables, run closed-loop simulations,
/// compare transmission policies and validate persisted tables.
#[derive(Parser)]
#[command(name = "pstc", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Problem configuration file.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,

    /// Table file to use (default: `<out>/<name>.tables`).
    #[arg(long, value_name = "FILE")]
    tables: Option<PathBuf>,

    /// Output directory for tables, traces and summaries.
    #[arg(long, env = "PSTC_OUT_DIR", value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Override the run seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the run duration in seconds.
    #[arg(long)]
    duration: Option<f64>,

    /// Override the trigger budget ε.
    #[arg(long)]
    epsilon: Option<f64>,
}

impl RunArgs {
    fn overrides(&self) -> RunOverrides {
        RunOverrides { seed: self.seed, duration: self.duration, epsilon: self.epsilon }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    /// Self-triggered: horizons decided from the worst-case bound.
    Pstc,
    /// Event detector evaluated every period on the measured signals.
    Petc,
    /// Transmit every period.
    Periodic,
}

impl From<ModeArg> for TriggerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pstc => TriggerMode::Pstc,
            ModeArg::Petc => TriggerMode::Petc,
            ModeArg::Periodic => TriggerMode::Periodic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist the offline tables for a configuration.
    Precompute {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run one closed-loop simulation and write the per-period trace.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,

        /// Transmission policy.
        #[arg(long, value_enum, default_value_t = ModeArg::Pstc)]
        mode: ModeArg,

        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the self-triggered and detector policies on the same sample path
    /// and check the precomputed horizons never exceed the detector's.
    Compare {
        #[command(flatten)]
        common: CommonArgs,

        #[command(flatten)]
        run: RunArgs,
    },
    /// Check persisted tables against quantities recomputed from the
    /// configuration.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Precompute { common } => with_common(common, |cfg, out, tbl| {
            run::cmd_precompute(cfg, out, tbl)
        }),
        Command::Simulate { common, mode, run: run_args } => {
            let ov = run_args.overrides();
            let mode = TriggerMode::from(*mode);
            with_common(common, |cfg, out, tbl| run::cmd_simulate(cfg, out, tbl, mode, &ov))
        }
        Command::Compare { common, run: run_args } => {
            let ov = run_args.overrides();
            with_common(common, |cfg, out, tbl| run::cmd_compare(cfg, out, tbl, &ov))
        }
        Command::Validate { common } => {
            with_common(common, |cfg, out, tbl| run::cmd_validate(cfg, out, tbl))
        }
    };
    if let Err(failure) = result {
        eprintln!("error: {}", failure.message());
        std::process::exit(failure.exit_code());
    }
}

fn with_common<F>(common: &CommonArgs, f: F) -> run::CmdResult<()>
where
    F: FnOnce(
        &pstc_cli::config::ProblemConfig,
        &std::path::Path,
        Option<&std::path::Path>,
    ) -> run::CmdResult<()>,
{
    let cfg = run::load_config(&common.config)?;
    let out_dir = run::resolve_out_dir(common.out.as_deref())?;
    f(&cfg, &out_dir, common.tables.as_deref())
}
