use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::{Failure, EXIT_OK, EXIT_USAGE};
use config::{resolve_tol, CommandKind, Format, Params, RunConfig, SweepRange};

/// Simulate and analyze x[n+1] = alpha x[n-k] / (beta + gamma x[n] ... x[n-k]).
#[derive(Parser, Debug)]
#[command(name = "ratdiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Iterate from an initial window and print x[1..=N].
    Simulate(Common),
    /// Decide whether an initial window eventually hits a zero denominator.
    Forbidden(Common),
    /// Equilibria, characteristic roots and stability verdicts.
    Stability(Common),
    /// Check a window for a (k+1)-cycle, or iterate first with --steps.
    Cycles(Common),
    /// Classify the long-run behavior over a grid of c values.
    Sweep(Common),
    /// Replay a config file or a JSON document written by --format json.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Normalized coefficient c = alpha/beta (excludes --alpha/--beta/--gamma).
    #[arg(long, conflicts_with_all = ["alpha", "beta", "gamma"])]
    c: Option<f64>,
    #[arg(long, requires_all = ["beta", "gamma"])]
    alpha: Option<f64>,
    #[arg(long, requires_all = ["alpha", "gamma"])]
    beta: Option<f64>,
    #[arg(long, requires_all = ["alpha", "beta"])]
    gamma: Option<f64>,
    /// Delay; the window holds k+1 values.
    #[arg(long, allow_hyphen_values = true)]
    k: i64,
    /// Initial window x[-k],...,x[0], comma separated, oldest first.
    #[arg(
        long,
        visible_alias = "window",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    init: Option<Vec<f64>>,
    #[arg(long)]
    steps: Option<usize>,
    /// Overrides the command default and $RATDIFF_TOL.
    #[arg(long)]
    tol: Option<f64>,
    /// Largest threshold index tested by `forbidden`.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    c_from: Option<f64>,
    #[arg(long)]
    c_to: Option<f64>,
    #[arg(long)]
    c_step: Option<f64>,
}

impl Common {
    fn into_config(self, command: CommandKind) -> anyhow::Result<RunConfig> {
        let sweep = match (self.c_from, self.c_to, self.c_step) {
            (None, None, None) => None,
            (Some(from), Some(to), Some(step)) => Some(SweepRange { from, to, step }),
            _ => bail!("--c-from, --c-to and --c-step go together"),
        };
        let params = match (self.c, self.alpha, self.beta, self.gamma) {
            (Some(c), ..) => Params::Normalized { c, k: self.k },
            (None, Some(alpha), Some(beta), Some(gamma)) => Params::Raw {
                alpha,
                beta,
                gamma,
                k: self.k,
            },
            _ => match (command, sweep) {
                (CommandKind::Sweep, Some(r)) => Params::Normalized {
                    c: r.from,
                    k: self.k,
                },
                _ => bail!("give either --c or all of --alpha, --beta, --gamma"),
            },
        };
        if command == CommandKind::Sweep && sweep.is_none() {
            bail!("sweep needs --c-from, --c-to and --c-step");
        }
        Ok(RunConfig {
            command,
            params,
            window: self.init,
            steps: self.steps,
            tol: resolve_tol(command, self.tol)?,
            horizon: self.horizon,
            sweep,
            format: self.format.unwrap_or_default(),
            out: self.out,
        })
    }
}

fn build(cli: Cli) -> anyhow::Result<RunConfig> {
    Ok(match cli.command {
        Command::Simulate(c) => c.into_config(CommandKind::Simulate)?,
        Command::Forbidden(c) => c.into_config(CommandKind::Forbidden)?,
        Command::Stability(c) => c.into_config(CommandKind::Stability)?,
        Command::Cycles(c) => c.into_config(CommandKind::Cycles)?,
        Command::Sweep(c) => c.into_config(CommandKind::Sweep)?,
        Command::Run { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.out = out;
            cfg
        }
    })
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let cfg = build(cli)?;
    let emission = commands::execute(&cfg)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &emission.body)
            .with_context(|| format!("writing {}", path.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(emission.body.as_bytes())
                .and_then(|_| stdout.flush())
                .context("writing to stdout")?;
        }
    }
    Ok(emission.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
