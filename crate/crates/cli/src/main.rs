use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lpsketch::experiment::{run_experiment, run_sweep, threshold_summary, OutputFormat};
use lpsketch::verify::{run_verify, VerifyKind};

mod config;

use config::Settings;

/// Numerical lab for the linear-sketch lower bound on p-th moment estimation.
#[derive(Parser, Debug)]
#[command(name = "lpsketch", version)]
struct Cli {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the measurement threshold and derived constants.
    Threshold(Settings),
    /// Run a property suite: lemma1, chi2, events, frobenius or dpi.
    Verify {
        kind: VerifyKind,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run estimators and the bound chain for each m.
    Experiment(Settings),
    /// Run `experiment` for every n in --n-list.
    Sweep(Settings),
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Threshold(flags) => {
            let s = flags.over(file);
            let cfg = s.experiment()?;
            let summary = threshold_summary(cfg.n, cfg.p, cfg.eps)?;
            with_output(&s, |w| match s.format()? {
                Some(OutputFormat::Json) => {
                    Ok(writeln!(w, "{}", serde_json::to_string_pretty(&summary)?)?)
                }
                Some(OutputFormat::Csv) => {
                    writeln!(w, "n,p,eps,t_p,c,c1,spike,m_threshold_real,m_threshold")?;
                    Ok(writeln!(
                        w,
                        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                        summary.n,
                        summary.p,
                        summary.eps,
                        summary.t_p,
                        summary.c,
                        summary.c1,
                        summary.spike,
                        summary.m_threshold_real,
                        summary.m_threshold
                    )?)
                }
                None => {
                    writeln!(w, "n                = {}", summary.n)?;
                    writeln!(w, "p                = {}", summary.p)?;
                    writeln!(w, "eps              = {}", summary.eps)?;
                    writeln!(w, "t_p              = {}", summary.t_p)?;
                    writeln!(w, "C                = {}", summary.c)?;
                    writeln!(w, "C1               = {}", summary.c1)?;
                    writeln!(w, "spike            = {}", summary.spike)?;
                    writeln!(w, "m_threshold_real = {}", summary.m_threshold_real)?;
                    Ok(writeln!(w, "m_threshold      = {}", summary.m_threshold)?)
                }
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { kind, settings } => {
            let s = settings.over(file);
            let lines = run_verify(kind, &s.verify()?)?;
            with_output(&s, |w| {
                if s.format()? == Some(OutputFormat::Json) {
                    writeln!(w, "{}", serde_json::to_string_pretty(&lines)?)?;
                } else {
                    for l in &lines {
                        writeln!(w, "{l}")?;
                    }
                }
                Ok(())
            })?;
            let failed = lines.iter().filter(|l| !l.passed).count();
            if failed > 0 {
                eprintln!("{failed} of {} checks failed", lines.len());
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment(flags) => {
            let s = flags.over(file);
            let report = run_experiment(&s.experiment()?).context("running experiment")?;
            let format = s.format()?.unwrap_or(OutputFormat::Json);
            with_output(&s, |w| Ok(report.write(format, w)?))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(flags) => {
            let s = flags.over(file);
            let report = run_sweep(&s.sweep()?).context("running sweep")?;
            let format = s.format()?.unwrap_or(OutputFormat::Json);
            with_output(&s, |w| Ok(report.write(format, w)?))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Runs `f` against `--out` when given, stdout otherwise.
fn with_output(s: &Settings, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match &s.out {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()
                .with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            Ok(w.flush()?)
        }
    }
}
