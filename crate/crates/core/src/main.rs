use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phasebench::config::{load_file, MethodSelection, Mode, RunConfig};
use phasebench::io::{run, run_sweep};

#[derive(Parser)]
#[command(name = "phasebench", version, about = "Positive-P and truncated-Wigner pulse propagation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the configured pulse.
    Run(Common),
    /// Run one child per [sweep] value.
    Sweep(Common),
    /// Exact single-mode master equation only.
    Oracle(Common),
    /// Single-cell ensembles against the exact oracle.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_parser = ["ppr", "twa", "both"])]
    method: Option<String>,
    #[arg(long, value_name = "N")]
    trajectories: Option<usize>,
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    #[arg(long, value_name = "W")]
    workers: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self, mode: Option<Mode>) -> phasebench::Result<(RunConfig, PathBuf)> {
        let mut cfg = load_file(&self.config, mode)?;
        if let Some(m) = &self.method {
            cfg.method = MethodSelection::parse(m).expect("clap restricts the values");
        }
        if let Some(n) = self.trajectories {
            if n < 2 {
                return Err(phasebench::Error::InvalidArgument("--trajectories must be ≥ 2".into()));
            }
            cfg.trajectories = n;
            cfg.twa_trajectories = None;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(phasebench::Error::InvalidArgument("--workers must be ≥ 1".into()));
            }
            cfg.workers = w;
        }
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output));
        cfg.output = out.to_string_lossy().into_owned();
        Ok((cfg, out))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> phasebench::Result<bool> {
    match cmd {
        Command::Run(c) => {
            let (cfg, out) = c.load(None)?;
            Ok(report(run(&cfg, &out)?))
        }
        Command::Oracle(c) => {
            let (cfg, out) = c.load(Some(Mode::Oracle))?;
            Ok(report(run(&cfg, &out)?))
        }
        Command::Compare(c) => {
            let (cfg, out) = c.load(Some(Mode::Compare))?;
            Ok(report(run(&cfg, &out)?))
        }
        Command::Sweep(c) => {
            let (cfg, out) = c.load(None)?;
            let mut ok = true;
            for child in run_sweep(&cfg, &out)? {
                match child {
                    Ok(o) => ok &= report(o),
                    Err(e) => {
                        eprintln!("sweep child failed: {e}");
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
    }
}

fn report(o: phasebench::io::RunOutcome) -> bool {
    for f in &o.manifest.failures {
        eprintln!("{}: {f}", o.dir.display());
    }
    println!("{} {}", if o.pass() { "ok" } else { "FAILED" }, o.dir.display());
    o.pass()
}
