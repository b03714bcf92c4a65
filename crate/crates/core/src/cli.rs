//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation error, 2 suite failure or oracle
//! mismatch, 3 I/O error. Every error prints `error: <category>: <CODE>`
//! on its first line and human detail after it.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::model::{
    observation_lines, read_observations, write_observations, CaseLabel, ModelDocument, Observation,
    ObservationError, TwoStateHmm,
};
use crate::nodes::{build_barrier_certificate, check_conditions, node_reports, write_node_csv, DEFAULT_MASS_THRESHOLD};
use crate::sample::sample_realization;
use crate::simlab::{
    run_suite, sweep_models, write_sweep_csv, ExperimentPlan, Family, ModelSource, Suite, SuiteConfig,
    SweepGrid, VerificationReport,
};
use crate::state::path_string;
use crate::stream::{run_stream, CsvSegmentSink, RunError};
use crate::viterbi::{decode_batch, decode_brute_force};

/// Longest sequence `decode --oracle` will enumerate.
pub const ORACLE_MAX_LEN: usize = 24;

#[derive(Debug, Parser)]
#[command(name = "twohmm", version, about = "Two-state HMM decoding, node detection and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the case label and the condition table.
    Classify(ModelArg),
    /// Batch MAP decoding of an observation file.
    Decode {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        obs: PathBuf,
        /// Cross-check against exhaustive search (at most 24 observations).
        #[arg(long)]
        oracle: bool,
    },
    /// Online decoding; writes committed segments as CSV.
    Stream {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        obs: PathBuf,
        /// Segment CSV destination (default stdout).
        #[arg(long)]
        segments: Option<PathBuf>,
        /// Stats JSON destination (default stdout after a file CSV, else stderr).
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Draw a realization and write observations (and optionally states).
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        states: Option<PathBuf>,
    },
    /// Per-step node classification as CSV.
    Nodes {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a barrier certificate as JSON.
    Barrier {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        cert: CertArgs,
    },
    /// Run verification suites or a model sweep.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model JSON document.
    #[arg(long = "model")]
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct CertArgs {
    /// Fixed certificate slack in (0, 1); searched on a grid if absent.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MASS_THRESHOLD)]
    pub mass_threshold: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CaseArg {
    Case1,
    Case2,
    Case3,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Categorical,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 100)]
    pub replicas: u64,
    #[arg(long)]
    pub seed: u64,
    /// Fixed model; a random model per replica if absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Restrict generated models to one case.
    #[arg(long, value_enum)]
    pub case: Option<CaseArg>,
    /// Restrict generated models to one emission family.
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long, default_value_t = 1000)]
    pub length: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Report destination (default stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub cert: CertArgs,
    /// Comma-separated stay probabilities; enables sweep mode.
    #[arg(long, value_delimiter = ',')]
    pub sweep_stay: Vec<f64>,
    /// Comma-separated Gaussian mean separations for sweep mode.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub sweep_gap: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub sweep_variance: f64,
    /// Aggregate sweep CSV destination (default stdout).
    #[arg(long)]
    pub sweep_csv: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Validation { code: String, detail: String },
    Io { code: String, detail: String },
    Failure { code: String, detail: String },
}

impl CliError {
    fn validation(code: &str, detail: impl ToString) -> Self {
        CliError::Validation { code: code.to_string(), detail: detail.to_string() }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        CliError::Io { code: "Io".into(), detail: format!("{}: {e}", path.display()) }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 1,
            CliError::Failure { .. } => 2,
            CliError::Io { .. } => 3,
        }
    }

    fn category(&self) -> &'static str {
        match self {
            CliError::Validation { .. } => "validation",
            CliError::Failure { .. } => "failure",
            CliError::Io { .. } => "io",
        }
    }

    fn parts(&self) -> (&str, &str) {
        match self {
            CliError::Validation { code, detail }
            | CliError::Io { code, detail }
            | CliError::Failure { code, detail } => (code, detail),
        }
    }

    pub fn render(&self) -> String {
        let (code, detail) = self.parts();
        format!("error: {}: {code}\n{detail}\n", self.category())
    }
}

type CliResult = Result<(), CliError>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "error: validation: Usage\n{e}");
            return 1;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = err.write_all(e.render().as_bytes());
            e.exit_code()
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    match cmd {
        Command::Classify(m) => classify(&load_model(&m.path)?, out),
        Command::Decode { model, obs, oracle } => decode(&load_model(&model.path)?, &obs, oracle, out),
        Command::Stream { model, obs, segments, stats } => {
            stream(&load_model(&model.path)?, &obs, segments.as_deref(), stats.as_deref(), out, err)
        }
        Command::Simulate { model, length, seed, obs, states } => {
            simulate(&load_model(&model.path)?, length, seed, &obs, states.as_deref())
        }
        Command::Nodes { model, obs, out: dest } => nodes(&load_model(&model.path)?, &obs, dest.as_deref(), out),
        Command::Barrier { model, cert } => barrier(&load_model(&model.path)?, &cert, out),
        Command::Verify(args) => verify(&args, out),
    }
}

pub fn load_model(path: &Path) -> Result<TwoStateHmm, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let doc = ModelDocument::from_json(&text)
        .map_err(|e| CliError::validation("ModelParse", format!("{}: {e}", path.display())))?;
    doc.into_model().map_err(|e| CliError::validation(e.first_code(), e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn observation_error(path: &Path, e: ObservationError) -> CliError {
    match e {
        ObservationError::Io(e) => CliError::io(path, e),
        ObservationError::UnknownSymbol { .. } => CliError::validation("UnknownSymbol", format!("{}: {e}", path.display())),
        ObservationError::BadReal { .. } => CliError::validation("BadReal", format!("{}: {e}", path.display())),
    }
}

fn load_observations(model: &TwoStateHmm, path: &Path) -> Result<Vec<Observation>, CliError> {
    read_observations(model, open(path)?).map_err(|e| observation_error(path, e))
}

fn stdout_io(e: io::Error) -> CliError {
    CliError::Io { code: "Io".into(), detail: format!("stdout: {e}") }
}

fn classify(model: &TwoStateHmm, out: &mut dyn Write) -> CliResult {
    let report = check_conditions(model);
    write!(out, "{}\n{}", model.classify_case(), report.to_table()).map_err(stdout_io)
}

fn decode(model: &TwoStateHmm, obs_path: &Path, oracle: bool, out: &mut dyn Write) -> CliResult {
    let obs = load_observations(model, obs_path)?;
    if oracle && obs.len() > ORACLE_MAX_LEN {
        return Err(CliError::validation(
            "TooLong",
            format!("--oracle enumerates paths and accepts at most {ORACLE_MAX_LEN} observations, got {}", obs.len()),
        ));
    }
    let alignment = decode_batch(model, &obs).map_err(|e| CliError::validation(e.code(), e))?;
    writeln!(out, "path {}", path_string(&alignment.states)).map_err(stdout_io)?;
    writeln!(out, "log_likelihood {:.16e}", alignment.log_likelihood).map_err(stdout_io)?;
    writeln!(out, "tie {}", alignment.tie).map_err(stdout_io)?;
    if oracle {
        let brute = decode_brute_force(model, &obs).map_err(|e| CliError::validation(e.code(), e))?;
        let agree = brute.states == alignment.states && brute.log_likelihood == alignment.log_likelihood;
        let verdict = if agree { "exact" } else { "mismatch" };
        writeln!(out, "oracle_agreement {verdict}").map_err(stdout_io)?;
        if !agree {
            return Err(CliError::Failure {
                code: "OracleMismatch".into(),
                detail: format!(
                    "exhaustive search gives {} with log-likelihood {:.16e}",
                    path_string(&brute.states),
                    brute.log_likelihood
                ),
            });
        }
    }
    Ok(())
}

fn stream(
    model: &TwoStateHmm,
    obs_path: &Path,
    segments: Option<&Path>,
    stats_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult {
    let reader = open(obs_path)?;
    let source = observation_lines(model, reader);
    let run_error = |e: RunError, dest: &Path| match e {
        RunError::Stream(e) => CliError::validation(e.code(), e),
        RunError::Source(e) => observation_error(obs_path, e),
        RunError::Sink(e) => CliError::io(dest, e),
    };
    let stats = match segments {
        Some(p) => {
            let mut sink = CsvSegmentSink::new(create(p)?).map_err(|e| CliError::io(p, e))?;
            let stats = run_stream(model, source, &mut sink).map_err(|e| run_error(e, p))?;
            sink.into_inner().flush().map_err(|e| CliError::io(p, e))?;
            stats
        }
        None => {
            let mut sink = CsvSegmentSink::new(&mut *out).map_err(stdout_io)?;
            run_stream(model, source, &mut sink).map_err(|e| run_error(e, Path::new("stdout")))?
        }
    };
    let json = stats.to_json();
    match (stats_path, segments) {
        (Some(p), _) => {
            let mut f = create(p)?;
            writeln!(f, "{json}").and_then(|_| f.flush()).map_err(|e| CliError::io(p, e))
        }
        (None, Some(_)) => writeln!(out, "{json}").map_err(stdout_io),
        (None, None) => writeln!(err, "{json}").map_err(stdout_io),
    }
}

fn simulate(model: &TwoStateHmm, length: usize, seed: u64, obs: &Path, states: Option<&Path>) -> CliResult {
    let real = sample_realization(model, length, seed).map_err(|e| CliError::validation("EmptyLength", e))?;
    let mut w = create(obs)?;
    write_observations(model, &real.observations, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(obs, e))?;
    if let Some(p) = states {
        let mut w = create(p)?;
        real.states
            .iter()
            .try_for_each(|s| writeln!(w, "{s}"))
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

fn nodes(model: &TwoStateHmm, obs_path: &Path, dest: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let obs = load_observations(model, obs_path)?;
    let reports = node_reports(model, &obs).map_err(|e| CliError::validation(e.code(), e))?;
    match dest {
        Some(p) => {
            let mut w = create(p)?;
            write_node_csv(&reports, &mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(p, e))
        }
        None => write_node_csv(&reports, out).map_err(stdout_io),
    }
}

fn barrier(model: &TwoStateHmm, cert: &CertArgs, out: &mut dyn Write) -> CliResult {
    let c = build_barrier_certificate(model, cert.mass_threshold, cert.epsilon)
        .map_err(|e| CliError::validation(e.code(), e))?;
    writeln!(out, "{}", c.to_json()).map_err(stdout_io)
}

fn write_text(dest: Option<&Path>, text: &str, out: &mut dyn Write) -> CliResult {
    match dest {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(p, e))
        }
        None => out.write_all(text.as_bytes()).map_err(stdout_io),
    }
}

fn suite_failure(reports: &[&VerificationReport]) -> CliResult {
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.suites.iter())
        .filter(|(_, s)| s.status == crate::simlab::SuiteStatus::Failed)
        .map(|(name, s)| {
            let first = s.counterexamples.first().map_or(String::new(), |c| {
                format!(" (replica {}, time {}: {})", c.replica, c.time, c.detail)
            });
            format!("{name}: {} failures{first}", s.failures)
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failure { code: "SuiteFailed".into(), detail: failed.join("\n") })
    }
}

fn verify(args: &VerifyArgs, out: &mut dyn Write) -> CliResult {
    let suite: Suite = args.suite.parse().map_err(|e: crate::simlab::PlanError| CliError::validation(e.code(), e))?;
    let source = match &args.model {
        Some(p) => ModelSource::Fixed(load_model(p)?),
        None => ModelSource::Random {
            case: args.case.map(|c| match c {
                CaseArg::Case1 => CaseLabel::Case1,
                CaseArg::Case2 => CaseLabel::Case2,
                CaseArg::Case3 => CaseLabel::Case3,
            }),
            family: args.family.map(|f| match f {
                FamilyArg::Categorical => Family::Categorical,
                FamilyArg::Gaussian => Family::Gaussian,
            }),
        },
    };
    let plan = ExperimentPlan {
        suite,
        source,
        replicas: args.replicas,
        length: args.length,
        seed: args.seed,
        jobs: args.jobs,
        config: SuiteConfig {
            mass_threshold: args.cert.mass_threshold,
            epsilon: args.cert.epsilon,
            ..SuiteConfig::default()
        },
    };
    let plan_error = |e: crate::simlab::PlanError| CliError::validation(e.code(), e);

    if args.sweep_stay.is_empty() {
        let report = run_suite(&plan).map_err(plan_error)?;
        write_text(args.report.as_deref(), &format!("{}\n", report.to_json()), out)?;
        return suite_failure(&[&report]);
    }

    let grid = SweepGrid {
        stay_probs: args.sweep_stay.clone(),
        mean_gaps: args.sweep_gap.clone(),
        variance: args.sweep_variance,
    };
    let points = sweep_models(&grid, &plan).map_err(plan_error)?;
    let reports: Vec<&VerificationReport> = points.iter().map(|p| &p.report).collect();
    if let Some(p) = &args.report {
        let json = serde_json::to_string_pretty(&reports).expect("reports always serialize");
        write_text(Some(p), &format!("{json}\n"), out)?;
    }
    let mut csv = Vec::new();
    write_sweep_csv(&points, &mut csv).expect("writing to memory");
    write_text(args.sweep_csv.as_deref(), &String::from_utf8(csv).expect("ascii"), out)?;
    suite_failure(&reports)
}
