//! Command-line front end.
//!
//! Every command writes exactly one JSON report. Verdicts, including
//! `DIVERGENT_C` and failed extractions, exit with 0; bad input exits with 2
//! and internal failures (such as an unwritable output) with 1.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use koethe_core::conditions::{
    check_bounded_pair, check_condition_s, Budget, ConditionError, Schedule,
};
use koethe_core::extractor::{
    cbs_search, extract_quasidiagonal, regrade_wlog, verify_extraction, CbsOptions, ExtractError,
    LevelSchedule,
};
use koethe_core::ladder::DEFAULT_DIVERGENCE_RATIO;
use koethe_core::operators::{
    continuity_certificate, log_opnorm_bound, log_opnorm_exact, log_opnorm_oracle, rank_one_probe,
    ContinuityCertificate, ContinuityOptions, OpError,
};
use koethe_core::{KoetheMatrix, Ladder, NormSpec};
use serde_json::json;
use thiserror::Error;

use crate::files::{sha256_hex, MatrixFile, OperatorFile, SpecError};
use crate::report::{
    ConditionReport, ExtractionOutcome, ExtractionReport, OpnormReport, OracleResult, PairDigests,
    ProbeReport, RegradeReport, Report, ReportBody,
};

#[derive(Debug, Parser)]
#[command(
    name = "koethe",
    version,
    about = "Graded seminorms, operator conditions and quasi-diagonal extraction on Köthe matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the bounded-operator matrix inequality for a pair (A, B).
    CheckB(CheckBArgs),
    /// Check condition S for a pair, read as (B, A).
    CheckS(CheckSArgs),
    /// Regrade, extract a quasi-diagonal operator and verify it.
    Extract(ExtractArgs),
    /// Seminorm of the rank-one operator e_i' ⊗ e_v.
    Probe(ProbeArgs),
    /// Bounds on the operator seminorm ‖T‖_{p,q}.
    Opnorm(OpnormArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct LadderArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 64, 256])]
    pub ladder: Vec<usize>,
    /// Growth factor across the ladder that counts as divergence.
    #[arg(long, default_value_t = DEFAULT_DIVERGENCE_RATIO)]
    pub ratio: f64,
}

#[derive(Debug, Args)]
pub struct CheckBArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long, value_delimiter = ',', default_values_t = ["k+1".to_string(), "2k".to_string(), "k^2".to_string()])]
    pub schedules: Vec<String>,
    #[command(flatten)]
    pub ladder: LadderArgs,
    #[arg(long, default_value_t = 3)]
    pub max_n: usize,
    #[arg(long, default_value_t = 3)]
    pub max_r: usize,
    #[arg(long, default_value_t = 3)]
    pub max_k0: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CheckSArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub ladder: LadderArgs,
    #[arg(long, default_value_t = 3)]
    pub max_p: usize,
    #[arg(long, default_value_t = 3)]
    pub max_q: usize,
    #[arg(long, default_value_t = 3)]
    pub max_k: usize,
    #[arg(long, default_value_t = 3)]
    pub max_s: usize,
    #[arg(long, default_value_t = 3)]
    pub max_l: usize,
    #[arg(long, default_value_t = 3)]
    pub max_r: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long)]
    pub op: PathBuf,
    /// l1, l2, lp:<p> or c0.
    #[arg(long, default_value = "l2")]
    pub norm: String,
    /// Cycle k_j through 1..=K.
    #[arg(long, conflicts_with = "klist")]
    pub kcycle: Option<usize>,
    /// Explicit levels k_1, k_2, ...
    #[arg(long, value_delimiter = ',')]
    pub klist: Option<Vec<usize>>,
    /// Number of selections.
    #[arg(long, default_value_t = 8)]
    pub j: usize,
    /// Levels of the continuity certificate; all of B's levels by default.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Given N(k); searched for when absent.
    #[arg(long, value_delimiter = ',')]
    pub nk: Option<Vec<usize>>,
    /// Given ln M_k, one per N(k); certified bounds are used when absent.
    #[arg(
        long,
        value_delimiter = ',',
        requires = "nk",
        allow_hyphen_values = true
    )]
    pub log_m: Option<Vec<f64>>,
    /// Ladder rejecting N(k) whose bound diverges with truncation.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Also search for a common bounded subsequence of at least this size.
    #[arg(long)]
    pub cbs: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long)]
    pub i: usize,
    #[arg(long)]
    pub v: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub q: usize,
    #[arg(long, default_value = "l2")]
    pub norm: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct OpnormArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long)]
    pub op: PathBuf,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub q: usize,
    #[arg(long, default_value = "l2")]
    pub norm: String,
    /// Random starts for the lower-bound search.
    #[arg(long)]
    pub oracle: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("internal failure: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        input(e)
    }
}

impl From<ConditionError> for CliError {
    fn from(e: ConditionError) -> Self {
        input(e)
    }
}

impl From<OpError> for CliError {
    fn from(e: OpError) -> Self {
        input(e)
    }
}

/// `l1`, `l2`, `lp:<p>` (or `l<p>`), `c0`.
pub fn parse_norm(s: &str) -> Result<NormSpec, CliError> {
    let s = s.trim();
    if s == "c0" {
        return Ok(NormSpec::C0);
    }
    let p = s
        .strip_prefix("lp:")
        .or_else(|| s.strip_prefix('l'))
        .and_then(|p| p.parse::<f64>().ok())
        .ok_or_else(|| CliError::Input(format!("unknown norm `{s}`; use l1, l2, lp:<p> or c0")))?;
    NormSpec::lp(p).map_err(input)
}

fn ladder(rungs: &[usize]) -> Result<Ladder, CliError> {
    Ladder::new(rungs.to_vec()).map_err(input)
}

struct Loaded {
    file: MatrixFile,
    matrix: KoetheMatrix,
}

fn load_matrix(path: &Path) -> Result<Loaded, CliError> {
    let file = MatrixFile::read(path)?;
    let matrix = file.build()?;
    Ok(Loaded { file, matrix })
}

fn config_digest(config: serde_json::Value) -> String {
    sha256_hex(config.to_string().as_bytes())
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckB(_) => "check-b",
            Command::CheckS(_) => "check-s",
            Command::Extract(_) => "extract",
            Command::Probe(_) => "probe",
            Command::Opnorm(_) => "opnorm",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::CheckB(c) => &c.common,
            Command::CheckS(c) => &c.common,
            Command::Extract(c) => &c.common,
            Command::Probe(c) => &c.common,
            Command::Opnorm(c) => &c.common,
        }
    }
}

/// Runs one job and returns its report, stamped with `timestamp`.
pub fn execute(command: &Command, timestamp: u64) -> Result<Report, CliError> {
    let seed = command.common().seed;
    let (config, body) = match command {
        Command::CheckB(args) => check_b(args)?,
        Command::CheckS(args) => check_s(args)?,
        Command::Extract(args) => extract(args)?,
        Command::Probe(args) => probe(args)?,
        Command::Opnorm(args) => opnorm(args)?,
    };
    let config = json!({ "command": command.name(), "seed": seed, "job": config });
    Ok(Report::new(
        command.name(),
        seed,
        config_digest(config),
        timestamp,
        body,
    ))
}

type Job = (serde_json::Value, ReportBody);

fn check_b(args: &CheckBArgs) -> Result<Job, CliError> {
    let a = load_matrix(&args.pair.a)?;
    let b = load_matrix(&args.pair.b)?;
    let schedules = args
        .schedules
        .iter()
        .map(|s| Schedule::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    let budget = Budget {
        max_n: args.max_n,
        max_r: args.max_r,
        max_k0: args.max_k0,
        ladder: ladder(&args.ladder.ladder)?,
        divergence_ratio: args.ladder.ratio,
        ..Budget::default()
    };
    let verdict = check_bounded_pair(&a.matrix, &b.matrix, &schedules, &budget)?;
    let names: Vec<String> = schedules.iter().map(|s| s.to_string()).collect();
    let pair = PairDigests {
        a: a.file.digest(),
        b: b.file.digest(),
    };
    let config = json!({ "pair": pair, "budget": budget, "schedules": names });
    Ok((
        config,
        ReportBody::Condition(ConditionReport::new(pair, budget, names, verdict)),
    ))
}

fn check_s(args: &CheckSArgs) -> Result<Job, CliError> {
    let a = load_matrix(&args.pair.a)?;
    let b = load_matrix(&args.pair.b)?;
    let budget = Budget {
        max_p: args.max_p,
        max_q: args.max_q,
        max_k: args.max_k,
        max_s: args.max_s,
        max_l: args.max_l,
        max_r2: args.max_r,
        ladder: ladder(&args.ladder.ladder)?,
        divergence_ratio: args.ladder.ratio,
        ..Budget::default()
    };
    let verdict = check_condition_s(&b.matrix, &a.matrix, &budget)?;
    let pair = PairDigests {
        a: a.file.digest(),
        b: b.file.digest(),
    };
    let config = json!({ "pair": pair, "budget": budget });
    Ok((
        config,
        ReportBody::Condition(ConditionReport::new(pair, budget, Vec::new(), verdict)),
    ))
}

fn extract(args: &ExtractArgs) -> Result<Job, CliError> {
    let a = load_matrix(&args.pair.a)?;
    let b = load_matrix(&args.pair.b)?;
    let op_file = OperatorFile::read(&args.op)?;
    let t = op_file.operator()?;
    let norm = parse_norm(&args.norm)?;
    let schedule = match (&args.klist, args.kcycle) {
        (Some(list), _) => LevelSchedule::List(list.clone()),
        (None, k) => LevelSchedule::Cycle(k.unwrap_or(2)),
    };

    let cert = match &args.nk {
        Some(nk) => {
            let log_m = match &args.log_m {
                Some(m) => m.clone(),
                None => nk
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| {
                        log_opnorm_bound(&t, &a.matrix, &b.matrix, &norm, i + 1, n)
                            .map(|r| r.log_value)
                    })
                    .collect::<Result<_, _>>()?,
            };
            ContinuityCertificate::from_parts(nk, &log_m)?
        }
        None => {
            let opts = ContinuityOptions {
                ladder: args.ladder.as_deref().map(ladder).transpose()?,
                ..ContinuityOptions::default()
            };
            let levels = args.levels.unwrap_or(b.matrix.levels());
            continuity_certificate(&t, &a.matrix, &b.matrix, &norm, levels, &opts)?
        }
    };

    let regraded = regrade_wlog(&a.matrix, &t, &b.matrix, &norm, &cert).map_err(input)?;
    let at = &regraded.matrix;
    let regraded_file = MatrixFile::from_spec(
        &koethe_core::KoetheMatrixSpec::Explicit {
            levels: at.levels(),
            dims: at.dims(),
            log_entries: at.log_grid().to_vec(),
        },
        at.levels(),
        at.dims(),
    );
    let regrade = RegradeReport {
        n_k: regraded.certificate.schedule(),
        log_m: regraded.certificate.rows.iter().map(|r| r.log_m).collect(),
        log_m_used: regraded.log_m_used.clone(),
        regraded: regraded_file.digest(),
    };

    let outcome = match extract_quasidiagonal(&t, at, &b.matrix, &norm, &schedule, args.j) {
        Ok(certificate) => {
            let verification = verify_extraction(
                &certificate,
                at,
                &b.matrix,
                &norm,
                args.samples,
                args.common.seed,
            );
            let cbs = match args.cbs {
                Some(min) => Some(
                    cbs_search(
                        &certificate.operator,
                        at,
                        &b.matrix,
                        certificate.levels,
                        min,
                        &CbsOptions::default(),
                    )
                    .map_err(input)?,
                ),
                None => None,
            };
            ExtractionOutcome::Extracted {
                certificate,
                verification,
                cbs,
            }
        }
        Err(ExtractError::NjNotFound(j)) => ExtractionOutcome::NjNotFound { j },
        Err(ExtractError::VjNotFound(j)) => ExtractionOutcome::VjNotFound { j },
        Err(e) => return Err(input(e)),
    };

    let report = ExtractionReport {
        a: a.file.digest(),
        b: b.file.digest(),
        operator: op_file.digest(),
        norm: norm.to_string(),
        regrade,
        outcome,
    };
    let config = json!({
        "a": report.a,
        "b": report.b,
        "operator": report.operator,
        "norm": report.norm,
        "schedule": schedule,
        "j": args.j,
        "levels": args.levels,
        "nk": args.nk,
        "log_m": args.log_m.as_ref().map(|m| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>()),
        "ladder": args.ladder,
        "samples": args.samples,
        "cbs": args.cbs,
    });
    Ok((config, ReportBody::Extraction(report)))
}

fn probe(args: &ProbeArgs) -> Result<Job, CliError> {
    let a = load_matrix(&args.pair.a)?;
    let b = load_matrix(&args.pair.b)?;
    let norm = parse_norm(&args.norm)?;
    let t = rank_one_probe(args.i, args.v);
    let log_value = log_opnorm_exact(&t, &a.matrix, &b.matrix, &norm, args.p, args.q)?
        .ok_or_else(|| CliError::Internal("rank-one seminorm has no closed form".into()))?;
    let report = ProbeReport {
        a: a.file.digest(),
        b: b.file.digest(),
        i: args.i,
        v: args.v,
        p: args.p,
        q: args.q,
        log_value,
    };
    let config = json!({
        "a": report.a, "b": report.b, "i": args.i, "v": args.v,
        "p": args.p, "q": args.q, "norm": norm.to_string(),
    });
    Ok((config, ReportBody::Probe(report)))
}

fn opnorm(args: &OpnormArgs) -> Result<Job, CliError> {
    let a = load_matrix(&args.pair.a)?;
    let b = load_matrix(&args.pair.b)?;
    let op_file = OperatorFile::read(&args.op)?;
    let t = op_file.operator()?;
    let norm = parse_norm(&args.norm)?;
    let bound = log_opnorm_bound(&t, &a.matrix, &b.matrix, &norm, args.p, args.q)?;
    let oracle = match args.oracle {
        Some(budget) => Some(OracleResult {
            budget,
            log_value: log_opnorm_oracle(
                &t,
                &a.matrix,
                &b.matrix,
                &norm,
                args.p,
                args.q,
                budget,
                args.common.seed,
            )?,
        }),
        None => None,
    };
    let report = OpnormReport {
        a: a.file.digest(),
        b: b.file.digest(),
        operator: op_file.digest(),
        norm: norm.to_string(),
        p: args.p,
        q: args.q,
        bound,
        oracle,
    };
    let config = json!({
        "a": report.a, "b": report.b, "operator": report.operator, "norm": report.norm,
        "p": args.p, "q": args.q, "oracle": args.oracle,
    });
    Ok((config, ReportBody::Opnorm(report)))
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Parses `args`, runs the job, writes the report and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = execute(&cli.command, now()).and_then(|report| {
        let text = report.to_json();
        match &cli.command.common().out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| CliError::Internal(format!("{}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("koethe: {e}");
            e.exit_code()
        }
    }
}
