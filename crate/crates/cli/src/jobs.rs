//! Fully resolved command configurations and their execution.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sigldp::diagnostics::{holder_suite, lln_suite, regularity_suite};
use sigldp::mcprobe::{
    estimate_naive, estimate_tilted, slope_vs_rate_report, LDPEstimate, Method, ProbeConfig, TiltSchedule,
    TolerancePolicy, Verdict,
};
use sigldp::path::{phi_n_from_sequence, PerturbMode};
use sigldp::processes::StepLawModel;
use sigldp::rate::{contraction_rate, rate_lower_envelope, CramerTransform, RateProblem, RateSolution};
use sigldp::signature::{
    iterated_sum_direct, iterated_sum_stream, phi_map_quadrature, signature_at, signature_of_sequence,
};
use sigldp::tensor::check_size;
use sigldp::{PiecewisePath, SampledSequence, SignatureStack};

use crate::error::{CliError, CliResult, ExitCode};
use crate::logfmt;
use crate::plot::{emit_plot, Plot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SigMethod {
    Direct,
    Stream,
    Exact,
    Quad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Holder,
    Lln,
    Regularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenJob {
    pub model: StepLawModel,
    pub len: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigJob {
    pub input: PathBuf,
    pub level: usize,
    pub time: f64,
    pub method: SigMethod,
    /// Sample scale for sequence inputs.
    pub n: Option<usize>,
    pub step: Option<f64>,
    pub force: bool,
    pub allow_large: bool,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateJob {
    pub problem: RateProblem,
    pub delta: Option<f64>,
    pub allow_large: bool,
    pub out: PathBuf,
}

fn default_method() -> Method {
    Method::Naive
}

fn default_tilt_grid() -> usize {
    16
}

fn default_rel_tol() -> f64 {
    1e-3
}

/// Probe configuration file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub model: StepLawModel,
    #[serde(flatten)]
    pub probe: ProbeConfig,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Grid of the rate solve that supplies the tilts.
    #[serde(default = "default_tilt_grid")]
    pub grid: usize,
    /// Relative gap below which local minima join the tilt mixture.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeJob {
    pub spec: ProbeSpec,
    pub allow_large: bool,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJob {
    pub probe: PathBuf,
    pub rate: PathBuf,
    pub envelope: Option<PathBuf>,
    pub policy: TolerancePolicy,
    pub out: PathBuf,
}

fn default_mode() -> PerturbMode {
    PerturbMode::Adversarial
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderConfig {
    pub level: usize,
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub eps2_list: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_mode")]
    pub mode: PerturbMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnConfig {
    pub model: StepLawModel,
    pub level: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityConfig {
    pub level: usize,
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "suite", rename_all = "snake_case")]
pub enum SuiteConfig {
    Holder(HolderConfig),
    Lln(LlnConfig),
    Regularity(RegularityConfig),
}

impl SuiteConfig {
    pub fn parse(kind: SuiteKind, text: &str) -> CliResult<Self> {
        Ok(match kind {
            SuiteKind::Holder => Self::Holder(parse_json(text)?),
            SuiteKind::Lln => Self::Lln(parse_json(text)?),
            SuiteKind::Regularity => Self::Regularity(parse_json(text)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckJob {
    pub suite: SuiteConfig,
    pub allow_large: bool,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    Gen(GenJob),
    Sig(SigJob),
    Rate(RateJob),
    Probe(ProbeJob),
    Report(ReportJob),
    Check(CheckJob),
}

/// Files written by a job and the exit code it ended with.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub code: ExitCode,
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid configuration: {e}")))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::config(format!("cannot parse {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::io(format!("cannot write {}: {e}", path.display()));
    let file = File::create(path).map_err(io)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    }
    w.flush().map_err(io)
}

/// `<out>` with its extension replaced.
pub fn sibling(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

enum Input {
    Sequence(SampledSequence),
    Path(PiecewisePath),
}

fn read_input(path: &Path) -> CliResult<Input> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let f = File::open(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        Ok(Input::Sequence(SampledSequence::read_csv(BufReader::new(f))?))
    } else {
        Ok(Input::Path(read_json(path)?))
    }
}

impl SigJob {
    /// Fills defaults that depend on the input: `n` is the sequence length
    /// and `time` covers the whole input.
    pub fn resolve(
        input: PathBuf,
        level: usize,
        time: Option<f64>,
        method: SigMethod,
        n: Option<usize>,
        step: Option<f64>,
        force: bool,
        allow_large: bool,
        out: PathBuf,
    ) -> CliResult<Self> {
        let (n, time) = match read_input(&input)? {
            Input::Sequence(s) => {
                let n = n.unwrap_or(s.len());
                (Some(n), time.unwrap_or(s.len() as f64 / n.max(1) as f64))
            }
            Input::Path(p) => (None, time.unwrap_or(p.horizon())),
        };
        Ok(Self {
            input,
            level,
            time,
            method,
            n,
            step,
            force,
            allow_large,
            out,
        })
    }

    fn run(&self) -> CliResult<Outcome> {
        let input = read_input(&self.input)?;
        let dim = match &input {
            Input::Sequence(s) => s.dim(),
            Input::Path(p) => p.dim(),
        };
        check_size(dim, self.level, self.allow_large)?;
        let n = || self.n.ok_or_else(|| CliError::config("sequence input needs a sample scale n"));
        let stack: SignatureStack = match (self.method, input) {
            (SigMethod::Direct, Input::Sequence(s)) => iterated_sum_direct(&s, self.level, n()?, self.time, self.force)?,
            (SigMethod::Stream, Input::Sequence(s)) => iterated_sum_stream(&s, self.level, n()?, &[self.time])?
                .pop()
                .expect("one time requested"),
            (SigMethod::Exact, Input::Sequence(s)) => signature_of_sequence(&s, self.level, n()?, self.time)?,
            (SigMethod::Exact, Input::Path(p)) => signature_at(&p, self.level, self.time)?,
            (SigMethod::Quad, input) => {
                let h = self.step.ok_or_else(|| CliError::config("method quad needs --step"))?;
                let path = match input {
                    Input::Sequence(s) => phi_n_from_sequence(&s, n()?, self.time)?,
                    Input::Path(p) if self.time < p.horizon() => p.restrict(self.time)?,
                    Input::Path(p) => p,
                };
                phi_map_quadrature(&path, self.level, h)?.pop().expect("at least one stack")
            }
            (m, Input::Path(_)) => {
                return Err(CliError::config(format!(
                    "method {m:?} needs a sampled sequence (CSV) input"
                )))
            }
        };
        write_json(&self.out, &stack)?;
        logfmt::info(
            "sig.done",
            &[
                ("level", self.level.to_string()),
                ("time", self.time.to_string()),
                ("top_sup_norm", stack.top().sup_norm().to_string()),
            ],
        );
        Ok(Outcome {
            outputs: vec![self.out.clone()],
            code: ExitCode::Ok,
        })
    }
}

impl GenJob {
    fn run(&self) -> CliResult<Outcome> {
        let seq = self.model.sample_sequence(self.len, self.seed)?;
        let io = |e: std::io::Error| CliError::io(format!("cannot write {}: {e}", self.out.display()));
        let file = File::create(&self.out).map_err(io)?;
        let mut w = BufWriter::new(file);
        seq.write_csv(&mut w)?;
        w.flush().map_err(io)?;
        logfmt::info(
            "gen.done",
            &[("model", self.model.kind().name().into()), ("len", self.len.to_string())],
        );
        Ok(Outcome {
            outputs: vec![self.out.clone()],
            code: ExitCode::Ok,
        })
    }
}

fn log_solution(event: &str, s: &RateSolution) {
    logfmt::info(
        event,
        &[
            ("value", s.value.to_string()),
            ("converged", s.converged.to_string()),
            ("residual", s.residual.to_string()),
            ("stationarity", s.stationarity.to_string()),
            ("starts_converged", format!("{}/{}", s.multistart.converged, s.multistart.starts)),
        ],
    );
}

impl RateJob {
    fn run(&self) -> CliResult<Outcome> {
        check_size(self.problem.model.dim(), self.problem.level, self.allow_large)?;
        let sol = match self.delta {
            Some(d) => rate_lower_envelope(&self.problem, d)?,
            None => contraction_rate(&self.problem)?,
        };
        write_json(&self.out, &sol)?;
        log_solution("rate.done", &sol);
        if sol.capped {
            logfmt::warn("rate.capped", &[("msg", "tilt cap reached; value is a lower bound".into())]);
        }
        let code = if sol.converged {
            ExitCode::Ok
        } else {
            logfmt::error("rate.not_converged", &[("residual", sol.residual.to_string())]);
            ExitCode::NotConverged
        };
        Ok(Outcome {
            outputs: vec![self.out.clone()],
            code,
        })
    }
}

impl ProbeJob {
    fn run(&self) -> CliResult<Outcome> {
        let spec = &self.spec;
        let cfg = &spec.probe;
        check_size(spec.model.dim(), cfg.level, self.allow_large)?;
        let est = match spec.method {
            Method::Naive => estimate_naive(&spec.model, cfg)?,
            Method::Tilted => {
                let problem = RateProblem::endpoint(
                    spec.model.clone(),
                    cfg.level,
                    cfg.horizon,
                    cfg.y.clone(),
                    spec.grid,
                    cfg.seed,
                );
                let sol = contraction_rate(&problem)?;
                log_solution("probe.tilt_solve", &sol);
                let ct = CramerTransform::new(spec.model.clone())?;
                let tilt = TiltSchedule::from_solution(&ct, &sol, cfg.horizon, spec.rel_tol)?;
                estimate_tilted(&spec.model, cfg, &tilt)?
            }
        };
        let csv = sibling(&self.out, "csv");
        write_json(&self.out, &est)?;
        write_rows(&csv, &est.rows)?;
        for r in &est.rows {
            logfmt::info(
                "probe.row",
                &[
                    ("n", r.n.to_string()),
                    ("p_hat", r.p_hat.to_string()),
                    ("std_error", r.std_error.to_string()),
                    ("resolved", r.resolved.to_string()),
                ],
            );
        }
        let code = if est.all_resolved() {
            ExitCode::Ok
        } else {
            logfmt::warn("probe.unresolved", &[("msg", "some sample sizes have no usable estimate".into())]);
            ExitCode::Unresolved
        };
        Ok(Outcome {
            outputs: vec![self.out.clone(), csv],
            code,
        })
    }
}

/// The slope-versus-n plot of a report.
pub fn report_plot(est: &LDPEstimate, band: [f64; 2], fitted: Option<f64>) -> Plot {
    Plot {
        title: format!("decay slope, level {}, delta {}", est.level, est.delta),
        x_label: "n".into(),
        y_label: "-log(p_hat)/n".into(),
        log_x: false,
        log_y: false,
        points: est.rows.iter().filter_map(|r| Some((r.n as f64, r.slope?))).collect(),
        band: Some((band[0], band[1])),
        line: fitted.map(|s| (0.0, s)),
        annotation: fitted.map(|s| format!("fitted slope = {s:.6}")),
    }
}

impl ReportJob {
    fn run(&self) -> CliResult<Outcome> {
        let est: LDPEstimate = read_json(&self.probe)?;
        let centre: RateSolution = read_json(&self.rate)?;
        let envelope: RateSolution = match &self.envelope {
            Some(p) => {
                let env: RateSolution = read_json(p)?;
                match env.delta {
                    Some(d) if (d - est.delta).abs() <= 1e-12 * est.delta.max(1.0) => env,
                    Some(d) => {
                        return Err(CliError::config(format!(
                            "envelope radius {d} differs from probe radius {}",
                            est.delta
                        )))
                    }
                    None => return Err(CliError::config("envelope file holds no ball radius")),
                }
            }
            None => {
                logfmt::warn("report.no_envelope", &[("msg", "band collapses to the centre rate".into())]);
                centre.clone()
            }
        };
        let report = slope_vs_rate_report(&est, &envelope, &centre, self.policy);
        let svg = sibling(&self.out, "svg");
        write_json(&self.out, &report)?;
        emit_plot(&report_plot(&est, report.band, report.fitted_slope), &svg)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", svg.display())))?;
        logfmt::info(
            "report.done",
            &[
                ("verdict", format!("{:?}", report.verdict).to_lowercase()),
                ("slope", report.fitted_slope.map_or("none".into(), |s| s.to_string())),
                ("band", format!("{},{}", report.band[0], report.band[1])),
            ],
        );
        let code = if report.verdict == Verdict::Unresolved {
            ExitCode::Unresolved
        } else {
            ExitCode::Ok
        };
        Ok(Outcome {
            outputs: vec![self.out.clone(), svg],
            code,
        })
    }
}

impl CheckJob {
    fn run(&self) -> CliResult<Outcome> {
        let csv = sibling(&self.out, "csv");
        let mut outputs = vec![self.out.clone(), csv.clone()];
        match &self.suite {
            SuiteConfig::Holder(c) => {
                check_size(c.dim, c.level, self.allow_large)?;
                let rep = holder_suite(c.level, c.dim, c.horizon, &c.eps2_list, c.trials, c.mode, c.seed)?;
                write_json(&self.out, &rep)?;
                write_rows(&csv, &rep.rows)?;
                logfmt::info(
                    "check.holder",
                    &[
                        ("exponent", rep.exponent.map_or("none".into(), |e| e.to_string())),
                        ("max_ratio", rep.max_ratio.to_string()),
                        ("median_ratio_non_increasing", rep.median_ratio_non_increasing().to_string()),
                    ],
                );
            }
            SuiteConfig::Lln(c) => {
                check_size(c.model.dim(), c.level, self.allow_large)?;
                let rep = lln_suite(&c.model, c.level, c.horizon, &c.n_list, c.reps, c.seed)?;
                write_json(&self.out, &rep)?;
                write_rows(&csv, &rep.rows)?;
                let svg = sibling(&self.out, "svg");
                let plot = Plot {
                    title: format!("law of large numbers, level {}", c.level),
                    x_label: "n".into(),
                    y_label: "median sup error".into(),
                    log_x: true,
                    log_y: true,
                    points: rep.sizes.iter().map(|s| (s.n as f64, s.median_error)).collect(),
                    annotation: rep.decay_exponent.map(|b| format!("fitted exponent = {b:.6}")),
                    ..Plot::default()
                };
                emit_plot(&plot, &svg).map_err(|e| CliError::io(format!("cannot write {}: {e}", svg.display())))?;
                outputs.push(svg);
                logfmt::info(
                    "check.lln",
                    &[
                        ("max_error", rep.rows.iter().map(|r| r.sup_error).fold(0.0, f64::max).to_string()),
                        ("exponent", rep.decay_exponent.map_or("none".into(), |e| e.to_string())),
                    ],
                );
            }
            SuiteConfig::Regularity(c) => {
                check_size(c.dim, c.level, self.allow_large)?;
                let rep = regularity_suite(c.level, c.dim, c.horizon, c.trials, c.seed)?;
                write_json(&self.out, &rep)?;
                write_rows(&csv, &rep.rows)?;
                let fields = [
                    ("worst_level_slack", rep.worst_level_slack.to_string()),
                    ("worst_lipschitz_slack", rep.worst_lipschitz_slack.to_string()),
                    ("extremal_gap", rep.extremal_gap.to_string()),
                ];
                if rep.passed() {
                    logfmt::info("check.regularity", &fields);
                } else {
                    logfmt::error("check.regularity_violated", &fields);
                }
            }
        }
        Ok(Outcome {
            outputs,
            code: ExitCode::Ok,
        })
    }
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Gen(_) => "gen",
            Job::Sig(_) => "sig",
            Job::Rate(_) => "rate",
            Job::Probe(_) => "probe",
            Job::Report(_) => "report",
            Job::Check(_) => "check",
        }
    }

    pub fn out(&self) -> &Path {
        match self {
            Job::Gen(j) => &j.out,
            Job::Sig(j) => &j.out,
            Job::Rate(j) => &j.out,
            Job::Probe(j) => &j.out,
            Job::Report(j) => &j.out,
            Job::Check(j) => &j.out,
        }
    }

    fn out_mut(&mut self) -> &mut PathBuf {
        match self {
            Job::Gen(j) => &mut j.out,
            Job::Sig(j) => &mut j.out,
            Job::Rate(j) => &mut j.out,
            Job::Probe(j) => &mut j.out,
            Job::Report(j) => &mut j.out,
            Job::Check(j) => &mut j.out,
        }
    }

    /// Moves the primary output into `dir`, keeping its file name.
    pub fn retarget(&mut self, dir: &Path) {
        let name = self.out().file_name().map(PathBuf::from).unwrap_or_else(|| "out".into());
        *self.out_mut() = dir.join(name);
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Gen(j) => Some(j.seed),
            Job::Rate(j) => Some(j.problem.seed),
            Job::Probe(j) => Some(j.spec.probe.seed),
            Job::Check(j) => Some(match &j.suite {
                SuiteConfig::Holder(c) => c.seed,
                SuiteConfig::Lln(c) => c.seed,
                SuiteConfig::Regularity(c) => c.seed,
            }),
            Job::Sig(_) | Job::Report(_) => None,
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Job::Sig(j) => vec![j.input.clone()],
            Job::Report(j) => [Some(&j.probe), Some(&j.rate), j.envelope.as_ref()]
                .into_iter()
                .flatten()
                .cloned()
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn run(&self) -> CliResult<Outcome> {
        match self {
            Job::Gen(j) => j.run(),
            Job::Sig(j) => j.run(),
            Job::Rate(j) => j.run(),
            Job::Probe(j) => j.run(),
            Job::Report(j) => j.run(),
            Job::Check(j) => j.run(),
        }
    }
}
