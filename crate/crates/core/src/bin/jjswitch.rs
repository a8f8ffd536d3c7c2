use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jjswitch::cli::{self, SweepAxis};
use jjswitch::config::{load_config, parse_config, RunConfig};
use jjswitch::Result;

#[derive(Parser)]
#[command(name = "jjswitch", version, about = "Switching-current telegraph simulator for a junction coupled to a two-level system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file; output CSVs are accepted and reproduce their run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override engine.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Override output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-key override, e.g. --set drive.rabi_MHz=2 (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Telegraph sequence of consecutive ramps with the TLS flag carried over.
    Simulate(Common),
    /// Independent ramps compared against the master equation.
    Ensemble(Common),
    /// One telegraph simulation per value of an axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// rabi_MHz or ramp_rate (μA/s).
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Landau-Zener analysis of the junction-TLS crossing.
    Lz(Common),
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut overrides = c.set.clone();
    if let Some(s) = c.seed {
        overrides.push(format!("engine.master_seed={s}"));
    }
    if let Some(o) = &c.out {
        overrides.push(format!("output.directory={:?}", o.display().to_string()));
    }
    match &c.config {
        Some(p) => load_config(p, &overrides),
        None => parse_config("", &overrides),
    }
}

fn show(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = resolve(&c)?;
            let out = PathBuf::from(&cfg.output.directory);
            let s = cli::with_workers(c.workers, || cli::cmd_simulate(&cfg, &out))??;
            match &s.branches {
                Some(b) => println!(
                    "{} ramps: {} jumps, mean dwell {:.3} (upper {}, lower {}), label fidelity {:.4}",
                    s.ramps,
                    b.jumps,
                    b.mean_dwell,
                    show(b.mean_dwell_upper),
                    show(b.mean_dwell_lower),
                    b.label_fidelity
                ),
                None => println!("{} ramps: {}", s.ramps, s.classification),
            }
        }
        Command::Ensemble(c) => {
            let cfg = resolve(&c)?;
            let out = PathBuf::from(&cfg.output.directory);
            let s = cli::with_workers(c.workers, || cli::cmd_ensemble(&cfg, &out))??;
            println!(
                "{} trajectories: TV distance {:.4}, histogram mode {:.4} uA, master mode {:.4} uA",
                s.trajectories, s.tv_distance, s.histogram_mode_uA, s.master_mode_uA
            );
        }
        Command::Sweep { common, axis, values } => {
            let cfg = resolve(&common)?;
            let axis = SweepAxis::parse(&axis)?;
            let out = PathBuf::from(&cfg.output.directory);
            let points = cli::with_workers(common.workers, || cli::cmd_sweep(&cfg, axis, &values, &out))??;
            for p in points {
                println!("{} = {}: {}", axis.name(), p.value, p.summary.classification);
            }
        }
        Command::Lz(c) => {
            let cfg = resolve(&c)?;
            let r = cli::cmd_lz(&cfg, &PathBuf::from(&cfg.output.directory))?;
            let numeric = r.p_numeric.map(|p| format!("{p:.6}")).unwrap_or_else(|| "not integrated".into());
            println!("crossing current  {:.6} uA", r.crossing_current_uA);
            println!("sweep rate        {:.6e} J/s", r.sweep_rate_J_per_s);
            println!("P_LZ (formula)    {:.6e}", r.p_lz);
            println!("P (numeric)       {numeric}");
            println!("{}", r.regime);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", cli::error_record(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
