//! `ddd` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddd_core::harness::{self, verify, ExperimentConfig};
use ddd_core::Result;

#[derive(Parser)]
#[command(name = "ddd", version, about = "Diagonal dual descent for linear inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out_dir`, then `ddd-out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write all artifacts.
    Solve(RunArgs),
    /// Record the ground-truth gap curve and locate its minimum.
    Semiconv(RunArgs),
    /// Tabulate several schedules on the same noisy problem.
    Compare {
        /// Two or more configs sharing problem and noise.
        #[arg(long = "config", required = true, num_args = 1)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Record SURE and select a stopping index by minimal slope.
    Sure(RunArgs),
    /// Run the diagnostics suite.
    Verify,
}

fn load(path: &Path, seed: Option<u64>, max_iters: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = max_iters {
        cfg.max_iters = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("ddd-out"))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve(a) => {
            let cfg = load(&a.config, a.seed, a.max_iters)?;
            let dir = out_dir(a.out, &cfg);
            let s = harness::solve(&cfg, &dir)?;
            let m = &s.metadata;
            println!(
                "{} iterations ({}), δ = {:.4e}, n̄ = {}, GTG(x_n̄) = {:.4e}",
                m.iterations, m.stop_cause, m.delta, m.n_bar, m.gtg_n_bar
            );
            if let (Some(n), Some(g)) = (m.n_hat, m.gtg_n_hat) {
                println!("n̂ = {n}, GTG(x_n̂) = {g:.4e}");
            }
            println!("artifacts in {}", dir.display());
        }
        Command::Semiconv(a) => {
            let cfg = load(&a.config, a.seed, a.max_iters)?;
            let dir = out_dir(a.out, &cfg);
            let s = harness::semiconv(&cfg, &dir)?;
            println!(
                "{} iterations, n̄ = {}, GTG min {:.4e}, final {:.4e}, interior: {}",
                s.iterations, s.n_bar, s.gtg_min, s.gtg_final, s.interior
            );
            for r in &s.sweep {
                println!("  scale {:<5} δ = {:.4e}  n̄ = {}", r.scale, r.delta, r.n_bar);
            }
            if let Some(m) = s.sweep_monotone {
                println!("n̄ nondecreasing as δ shrinks: {m}");
            }
        }
        Command::Compare {
            configs,
            out,
            seed,
            max_iters,
        } => {
            let cfgs = configs
                .iter()
                .map(|p| load(p, seed, max_iters))
                .collect::<Result<Vec<_>>>()?;
            let dir = out_dir(out, &cfgs[0]);
            harness::compare(&cfgs, &dir)?;
            print!("{}", std::fs::read_to_string(dir.join("compare.md"))?);
        }
        Command::Sure(a) => {
            let cfg = load(&a.config, a.seed, a.max_iters)?;
            let dir = out_dir(a.out, &cfg);
            let s = harness::sure(&cfg, &dir)?;
            let m = &s.metadata;
            println!(
                "n̂ = {}, GTG(x_n̂) = {:.4e}; n̄ = {}, GTG(x_n̄) = {:.4e}",
                m.n_hat.unwrap_or(0),
                m.gtg_n_hat.unwrap_or(f64::NAN),
                m.n_bar,
                m.gtg_n_bar
            );
        }
        Command::Verify => {
            let checks = verify::run_suite();
            print!("{}", verify::format_table(&checks));
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e))
        }
    }
}
