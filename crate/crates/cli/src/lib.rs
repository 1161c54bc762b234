//! The `sigldp` command-line front end.

pub mod error;
pub mod jobs;
pub mod logfmt;
pub mod manifest;
pub mod plot;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use sigldp::mcprobe::{Method, TolerancePolicy};
use sigldp::processes::StepLawModel;
use sigldp::rate::{RateProblem, RateTarget};

use error::{CliError, CliResult, ExitCode};
use jobs::{CheckJob, GenJob, Job, ProbeJob, ProbeSpec, RateJob, ReportJob, SigJob, SigMethod, SuiteConfig, SuiteKind};

#[derive(Debug, Parser)]
#[command(name = "sigldp", version, about = "Iterated sums, signature rate functions and their numerical checks")]
pub struct Cli {
    /// Worker threads for rate and probe (results do not depend on it).
    #[arg(long, global = true, env = "SIGLDP_THREADS")]
    pub threads: Option<usize>,
    /// Permit tensors beyond d = 4 or level 6.
    #[arg(long, global = true)]
    pub allow_large: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetMode {
    Endpoint,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeMethod {
    Naive,
    Tilted,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a step sequence as CSV.
    Gen {
        /// Model JSON {kind, params, dim, centered, seed, len}.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Signature of a sequence (CSV) or path (JSON) at one time.
    Sig {
        input: PathBuf,
        #[arg(long)]
        level: usize,
        #[arg(long)]
        time: Option<f64>,
        #[arg(long, value_enum, default_value = "exact")]
        method: SigMethod,
        /// Quadrature step.
        #[arg(long)]
        step: Option<f64>,
        /// Sample scale of a sequence input; defaults to its length.
        #[arg(long)]
        n: Option<usize>,
        /// Allow long enumerations with the direct method.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the rate function at a target.
    Rate {
        problem: PathBuf,
        #[arg(long)]
        multistart: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        /// Solve the lower envelope over the closed ball of this radius.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<TargetMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo ball probabilities and decay slopes.
    Probe {
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Option<ProbeMethod>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a probe with rate solutions.
    Report {
        #[arg(long)]
        probe: PathBuf,
        /// Rate solution at the ball centre.
        #[arg(long)]
        rate: PathBuf,
        /// Envelope solution over the ball.
        #[arg(long)]
        envelope: Option<PathBuf>,
        #[arg(long)]
        rel: Option<f64>,
        #[arg(long)]
        abs: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a property suite.
    Check {
        #[arg(long, value_enum)]
        suite: SuiteKind,
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-execute a manifest and compare output digests.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).map_err(|e| CliError::io(format!("cannot resolve {}: {e}", p.display())))
}

fn gen_job(model: &Path, len: Option<usize>, seed: Option<u64>, out: PathBuf) -> CliResult<GenJob> {
    let mut value: serde_json::Value = jobs::parse_json(&jobs::read_text(model)?)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::config("model configuration must be a JSON object"))?;
    let file_seed = obj.remove("seed").map(|v| v.as_u64().ok_or_else(|| CliError::config("seed must be an unsigned integer")));
    let file_len = obj.remove("len").map(|v| v.as_u64().ok_or_else(|| CliError::config("len must be an unsigned integer")));
    let model: StepLawModel =
        serde_json::from_value(value).map_err(|e| CliError::config(format!("invalid model: {e}")))?;
    let seed = match seed {
        Some(s) => s,
        None => file_seed.transpose()?.ok_or_else(|| CliError::config("a seed is mandatory"))?,
    };
    let len = match len {
        Some(l) => l,
        None => file_len.transpose()?.ok_or_else(|| CliError::config("sequence length len is missing"))? as usize,
    };
    Ok(GenJob { model, len, seed, out })
}

/// Resolves command-line arguments into a job.
pub fn build_job(cli: Cli) -> CliResult<Option<Job>> {
    let allow_large = cli.allow_large;
    Ok(Some(match cli.command {
        Command::Gen { model, len, seed, out } => Job::Gen(gen_job(&model, len, seed, absolute(&out)?)?),
        Command::Sig {
            input,
            level,
            time,
            method,
            step,
            n,
            force,
            out,
        } => Job::Sig(SigJob::resolve(absolute(&input)?, level, time, method, n, step, force, allow_large, absolute(&out)?)?),
        Command::Rate {
            problem,
            multistart,
            grid,
            delta,
            mode,
            out,
        } => {
            let mut problem: RateProblem = jobs::parse_json(&jobs::read_text(&problem)?)?;
            if let Some(k) = multistart {
                problem.settings.multistart = k;
            }
            if let Some(m) = grid {
                problem.grid = m;
            }
            let actual = match problem.target {
                RateTarget::Endpoint { .. } => TargetMode::Endpoint,
                RateTarget::Path { .. } => TargetMode::Path,
            };
            if mode.is_some_and(|m| m != actual) {
                return Err(CliError::config(format!("--mode {mode:?} does not match the problem target ({actual:?})")));
            }
            Job::Rate(RateJob {
                problem,
                delta,
                allow_large,
                out: absolute(&out)?,
            })
        }
        Command::Probe {
            config,
            method,
            trials,
            out,
        } => {
            let mut spec: ProbeSpec = jobs::parse_json(&jobs::read_text(&config)?)?;
            if let Some(m) = method {
                spec.method = match m {
                    ProbeMethod::Naive => Method::Naive,
                    ProbeMethod::Tilted => Method::Tilted,
                };
            }
            if let Some(t) = trials {
                spec.probe.trials = t;
            }
            Job::Probe(ProbeJob {
                spec,
                allow_large,
                out: absolute(&out)?,
            })
        }
        Command::Report {
            probe,
            rate,
            envelope,
            rel,
            abs,
            out,
        } => {
            let mut policy = TolerancePolicy::default();
            if let Some(r) = rel {
                policy.rel = r;
            }
            if let Some(a) = abs {
                policy.abs = a;
            }
            Job::Report(ReportJob {
                probe: absolute(&probe)?,
                rate: absolute(&rate)?,
                envelope: envelope.as_deref().map(absolute).transpose()?,
                policy,
                out: absolute(&out)?,
            })
        }
        Command::Check { suite, config, out } => Job::Check(CheckJob {
            suite: SuiteConfig::parse(suite, &jobs::read_text(&config)?)?,
            allow_large,
            out: absolute(&out)?,
        }),
        Command::Rerun { .. } => return Ok(None),
    }))
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        // A pool already built by an earlier call in this process is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<ExitCode> {
    configure_threads(cli.threads)?;
    if let Command::Rerun { manifest, out_dir } = &cli.command {
        return manifest::rerun(manifest, out_dir.as_deref());
    }
    let job = build_job(cli)?.expect("non-rerun command");
    manifest::execute(&job)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::Config as i32 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code as i32,
        Err(e) => {
            logfmt::error("failed", &[("code", (e.code as i32).to_string()), ("msg", e.message.clone())]);
            e.code as i32
        }
    }
}
