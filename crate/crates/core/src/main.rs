use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lattice_vortex::cli::{self, ExperimentKind, Overrides, EXIT_CERTIFICATE};

#[derive(Parser)]
#[command(
    version,
    about = "Topological solutions of the lattice Chern–Simons system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximal solution on the observation window
    Solve(Common),
    /// λ sweep (kind `sweep_lambda`, default) or small-λ limits (kind `small_lambda`)
    Sweep(Common),
    /// Green's function table and optional dimension sweep
    Green(Common),
    /// Maximal solution plus fitted decay rate
    Decay(Common),
    /// Multi-start Newton comparison
    Uniqueness(Common),
    /// Run whatever kind the config names
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out_dir`, then $LATTICE_VORTEX_OUT, then ./out
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (allowed, common): (&[ExperimentKind], Common) = match cli.command {
        Command::Solve(c) => (&[ExperimentKind::Solve], c),
        Command::Sweep(c) => (
            &[ExperimentKind::SweepLambda, ExperimentKind::SmallLambda],
            c,
        ),
        Command::Green(c) => (&[ExperimentKind::GreenTable], c),
        Command::Decay(c) => (&[ExperimentKind::Decay], c),
        Command::Uniqueness(c) => (&[ExperimentKind::Uniqueness], c),
        Command::Run(c) => (&[], c),
    };

    let mut config = match cli::load_config(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(cli::EXIT_CONFIG as u8);
        }
    };
    if !allowed.is_empty() {
        match config.kind {
            None => config.kind = Some(allowed[0]),
            Some(k) if !allowed.contains(&k) => {
                eprintln!(
                    "error: config field `kind`: `{}` does not match this subcommand",
                    k.name()
                );
                return ExitCode::from(cli::EXIT_CONFIG as u8);
            }
            Some(_) => {}
        }
    }
    let config = cli::apply_overrides(
        config,
        &Overrides {
            out_dir: common.out,
            seed: common.seed,
            workers: common.workers,
        },
    );

    match cli::run(&config) {
        Ok(outcome) => {
            for (name, ok) in &outcome.certificates {
                println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
            }
            println!("outputs in {}", outcome.out_dir.display());
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CERTIFICATE as u8)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
