use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meanfield::parallel::{set_thread_limit, Execution};
use meanfield_cli::{dispatch, parse_config, CliError, Command, Exit};

/// Particle simulations, transport distances and mean-field studies.
#[derive(Parser, Debug)]
#[command(name = "meanfield", version)]
struct Cli {
    /// Cap on worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Integrate a particle system and write its trajectory
    Simulate(Args),
    /// d_1, d_2 and d_inf between two .atoms files
    Distance(Args),
    /// Singularity order and admissibility of a kernel
    CheckKernel(Args),
    /// Mean-field convergence sweep over N
    Converge(Args),
    /// Propagation-of-chaos Monte Carlo study
    Chaos(Args),
    /// Minimum inter-particle distance bound
    Mindist(Args),
    /// Blob density norm deviation bound
    Blobnorm(Args),
    /// Cauchy estimate between regularized systems
    Cauchy(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// Configuration file
    config: PathBuf,
    /// Output directory, overriding the `output` key
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Sub {
    fn split(&self) -> (Command, &Args) {
        match self {
            Sub::Simulate(a) => (Command::Simulate, a),
            Sub::Distance(a) => (Command::Distance, a),
            Sub::CheckKernel(a) => (Command::CheckKernel, a),
            Sub::Converge(a) => (Command::Converge, a),
            Sub::Chaos(a) => (Command::Chaos, a),
            Sub::Mindist(a) => (Command::Mindist, a),
            Sub::Blobnorm(a) => (Command::Blobnorm, a),
            Sub::Cauchy(a) => (Command::Cauchy, a),
        }
    }
}

fn run(cli: &Cli) -> Result<Exit, CliError> {
    let (command, args) = cli.command.split();
    let source = fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut cfg = parse_config(&source, Some(command))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    cfg.output = match &args.out {
        Some(o) => o.clone(),
        None if cfg.output.is_relative() => base.join(&cfg.output),
        None => cfg.output.clone(),
    };
    let exec = match cli.threads {
        Some(1) => Execution::Sequential,
        Some(t) => {
            set_thread_limit(t);
            Execution::Parallel
        }
        None => Execution::Parallel,
    };
    let outcome = dispatch(&cfg, &source, base, exec)?;
    print!("{}", outcome.summary);
    println!("output: {}", cfg.output.display());
    Ok(outcome.exit)
}

fn main() -> ExitCode {
    // usage errors are configuration errors, not clap's default status 2
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Config as u8 } else { 0 });
        }
    };
    let exit = match run(&cli) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit()
        }
    };
    ExitCode::from(exit as u8)
}
