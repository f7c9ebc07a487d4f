use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nn_economy::agent::Preset;
use nn_economy::config::RunConfig;
use nn_economy::population::Generation;
use nn_economy::run;

#[derive(Parser)]
#[command(version, about = "Aiyagari economy with neural-network agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    preset: Option<Preset>,
    #[arg(long, global = true)]
    agents: Option<usize>,
    #[arg(long, global = true)]
    generation: Option<Generation>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the rational-expectations equilibrium.
    SolveRe,
    /// Simulate a population of learning agents.
    Simulate,
    /// Summarize panels into a report and figure data.
    Stats {
        /// Panel CSVs; defaults to every panel_*.csv in the output directory.
        panels: Vec<PathBuf>,
    },
    /// Long-horizon learners with favourable hyperparameters.
    Asymptotic,
}

fn config(cli: &Cli) -> nn_economy::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.preset {
        cfg.preset = p;
    }
    if let Some(n) = cli.agents {
        cfg.n_agents = n;
        cfg.asymptotic_agents = n;
    }
    if let Some(g) = cli.generation {
        cfg.generation = g;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> nn_economy::Result<()> {
    let cfg = config(cli)?;
    run::with_threads(cfg.threads, || match &cli.command {
        Command::SolveRe => {
            let s = run::cmd_solve_re(&cfg)?;
            println!("r = {:.6}  w = {:.6}  K = {:.6}  L = {:.6}", s.r, s.w, s.capital, s.labor);
            Ok(())
        }
        Command::Simulate => {
            let out = run::cmd_simulate(&cfg)?;
            println!("{} ({} rows)", out.panel_path.display(), out.panel.rows.len());
            Ok(())
        }
        Command::Stats { panels } => {
            print!("{}", run::cmd_stats(&cfg, panels)?.to_text());
            Ok(())
        }
        Command::Asymptotic => {
            for r in run::cmd_asymptotic(&cfg)? {
                println!(
                    "agent {}: final gap {:.4}, max |Euler residual| {:.4}",
                    r.agent_id, r.final_gap, r.max_abs_euler_residual
                );
            }
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
