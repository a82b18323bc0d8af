use std::path::PathBuf;
use std::process::ExitCode;

use acgame::{cmd_dynamics, cmd_equilibrium, cmd_run, cmd_validate_game, exit, load_config, ExperimentConfig, Outcome, Result};
use clap::{Parser, Subcommand};

/// Actor-critic learning in continuous-action potential games.
///
/// Log verbosity is read from ACGAME_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "acgame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the learner for every configured seed.
    Run(Common),
    /// Solve for logit equilibria with random restarts.
    Equilibrium(Common),
    /// Integrate the logit dynamics from the uniform profile.
    Dynamics(Common),
    /// Check the game's declared potential function.
    ValidateGame(Common),
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(dir) = &self.output {
            cfg.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ACGAME_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG_ERROR } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (args, cmd): (&Common, fn(&ExperimentConfig) -> Result<Outcome>) = match &cli.command {
        Command::Run(a) => (a, cmd_run),
        Command::Equilibrium(a) => (a, cmd_equilibrium),
        Command::Dynamics(a) => (a, cmd_dynamics),
        Command::ValidateGame(a) => (a, cmd_validate_game),
    };
    match args.load().and_then(|cfg| cmd(&cfg)) {
        Ok(outcome) => {
            println!("{}", outcome.message);
            for f in &outcome.files {
                println!("  wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
