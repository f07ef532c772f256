//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bad configuration or usage, 2 failed run.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::chain_io::{
    read_chain, read_data, read_matrix, write_atomic, write_chain, write_data, write_matrix, write_scalar_summary,
    write_table,
};
use crate::config::{parse_config, RunConfig};
use crate::distributions::{RngStream, DATA_STREAM_SLOT};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainSummary};
use crate::numerics::SpdMatrix;
use crate::simstudy::{
    frobenius_loss, make_delta_design, run_study, simulate_data, simulate_skew_t_data, DesignKind, StudyReport,
};

#[derive(Debug, Parser)]
#[command(name = "skewgibbs", version, about = "Gibbs samplers for multivariate skew-normal and skew-t models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from one of the study designs.
    GenData(GenDataArgs),
    /// Run one chain on a dataset.
    Fit(FitArgs),
    /// Run the replicated simulation study.
    Study(StudyArgs),
    /// Summarize chain files, optionally against known truth.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub design: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub t: usize,
    #[arg(long, default_value_t = crate::config::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Draw skew-t data with this many degrees of freedom.
    #[arg(long)]
    pub varphi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub chains: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth_delta: Option<PathBuf>,
    #[arg(long)]
    pub truth_omega: Option<PathBuf>,
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(Error),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            CliError::Config(e)
        } else {
            CliError::Runtime(e)
        }
    }
}

fn config_err(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config(Error::Schema {
        path: path.into(),
        message: message.into(),
    })
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let (kind, err) = match &e {
                CliError::Config(err) => ("configuration error", err),
                CliError::Runtime(err) => ("error", err),
            };
            eprintln!("skewgibbs: {kind}: {err}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenData(a) => gen_data(&a),
        Command::Fit(a) => fit(&a),
        Command::Study(a) => study(&a),
        Command::Summarize(a) => summarize(&a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(Error::io(p, e)))?,
        None => "{}".to_string(),
    };
    parse_config(&text).map_err(CliError::Config)
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    write_atomic(path, |w| writeln!(w, "{text}"))
}

fn gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    let design: DesignKind = a.design.parse()?;
    if a.n == 0 {
        return Err(config_err("n", "must be at least 1"));
    }
    if let Some(v) = a.varphi {
        if !(v > 0.0) {
            return Err(config_err("varphi", "must be positive"));
        }
    }
    let delta = make_delta_design(design, a.n)?;
    let mu = DVector::zeros(a.n);
    let omega = SpdMatrix::identity(a.n);
    let mut rng = RngStream::new(a.seed, DATA_STREAM_SLOT);
    let data = match a.varphi {
        None => simulate_data(&mu, &delta, &omega, a.t, &mut rng)?,
        Some(v) => simulate_skew_t_data(&mu, &delta, &omega, a.t, v, &mut rng)?.0,
    };
    write_data(&a.out.join("data.csv"), &data)?;
    write_matrix(&a.out.join("truth_delta.csv"), &delta)?;
    write_matrix(&a.out.join("truth_omega.csv"), omega.matrix())?;
    write_matrix(&a.out.join("truth_mu.csv"), &DMatrix::from_column_slice(a.n, 1, mu.as_slice()))?;
    Ok(())
}

/// Writes the chain, posterior means and scalar summary of one fit into `out`.
pub fn write_fit_outputs(out: &Path, summary: &ChainSummary) -> Result<()> {
    let n = summary.mean_mu.len();
    write_chain(&out.join("chain.csv"), &summary.draws, summary.layout)?;
    write_matrix(&out.join("posterior_mean_mu.csv"), &DMatrix::from_column_slice(n, 1, summary.mean_mu.as_slice()))?;
    write_matrix(&out.join("posterior_mean_delta.csv"), &summary.mean_delta)?;
    write_matrix(&out.join("posterior_mean_omega.csv"), &summary.mean_omega)?;
    write_scalar_summary(&out.join("summary.csv"), &summary.scalars)
}

fn fit(a: &FitArgs) -> Result<(), CliError> {
    let config = load_config(a.config.as_deref())?;
    let data_path = a
        .data
        .clone()
        .or_else(|| config.data.clone())
        .ok_or_else(|| config_err("data", "no data file given"))?;
    let out = a
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| config_err("out", "no output directory given"))?;
    let data = read_data(&data_path)?;
    if let Some(n) = config.n {
        if n != data.n() {
            return Err(config_err("n", format!("config says {n} but the data has {} columns", data.n())));
        }
    }
    let prior = config.prior_for(data.n()).map_err(CliError::Config)?;
    let chain = config.chain_config();
    let started = unix_seconds();
    let mut rng = RngStream::new(config.seed, config.variant.index());
    let summary = run_chain(&data, &prior, &chain, &mut rng)?;
    write_fit_outputs(&out, &summary)?;
    let meta = json!({
        "command": "fit",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "data": data_path,
        "started_unix": started,
        "wall_seconds": summary.wall_seconds,
        "iterations": summary.iterations,
        "stored_draws": summary.stored_draws,
        "varphi_acceptance": summary.varphi_acceptance,
    });
    write_json(&out.join("metadata.json"), &meta)?;
    Ok(())
}

fn fmt_loss(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the job table, cell summary, truths and posterior means of a study.
pub fn write_study_outputs(out: &Path, report: &StudyReport) -> Result<()> {
    let header = [
        "design", "variant", "rep", "delta_loss", "omega_loss", "seed", "stream", "iterations", "status",
    ];
    let rows: Vec<Vec<String>> = report
        .jobs
        .iter()
        .map(|j| {
            let est = j.outcome.as_ref().ok();
            vec![
                j.design.to_string(),
                j.variant.to_string(),
                j.rep.to_string(),
                fmt_loss(est.map(|e| e.delta_loss)),
                fmt_loss(est.map(|e| e.omega_loss)),
                j.seed.to_string(),
                j.stream.to_string(),
                j.iterations.to_string(),
                match &j.outcome {
                    Ok(_) => "ok".to_string(),
                    Err(msg) => msg.clone(),
                },
            ]
        })
        .collect();
    write_table(&out.join("jobs.csv"), &header, &rows)?;

    let header = [
        "design",
        "variant",
        "completed",
        "failed",
        "median_delta_loss",
        "se_delta_loss",
        "median_omega_loss",
        "se_omega_loss",
    ];
    let rows: Vec<Vec<String>> = report
        .cells
        .iter()
        .map(|c| {
            vec![
                c.design.to_string(),
                c.variant.to_string(),
                c.completed.to_string(),
                c.failed.to_string(),
                c.median_delta_loss.to_string(),
                c.se_delta_loss.to_string(),
                c.median_omega_loss.to_string(),
                c.se_omega_loss.to_string(),
            ]
        })
        .collect();
    write_table(&out.join("summary.csv"), &header, &rows)?;

    for truth in &report.truths {
        write_matrix(&out.join("truth").join(format!("{}_delta.csv", truth.design)), &truth.delta)?;
        write_matrix(&out.join("truth").join(format!("{}_omega.csv", truth.design)), &truth.omega)?;
    }
    let means = out.join("means");
    for j in &report.jobs {
        if let Ok(e) = &j.outcome {
            let stem = format!("{}_{}_rep{}", j.design, j.variant, j.rep);
            write_matrix(&means.join(format!("{stem}_delta.csv")), &e.mean_delta)?;
            write_matrix(&means.join(format!("{stem}_omega.csv")), &e.mean_omega)?;
        }
    }
    // Averages over replications: one Δ and one Ω panel per (design, variant).
    for truth in &report.truths {
        for &variant in &report.config.variants {
            let ok: Vec<_> = report
                .jobs
                .iter()
                .filter(|j| j.design == truth.design && j.variant == variant)
                .filter_map(|j| j.outcome.as_ref().ok())
                .collect();
            if ok.is_empty() {
                continue;
            }
            let k = ok.len() as f64;
            let d = ok.iter().fold(DMatrix::zeros(report.config.n, report.config.n), |acc, e| acc + &e.mean_delta) / k;
            let o = ok.iter().fold(DMatrix::zeros(report.config.n, report.config.n), |acc, e| acc + &e.mean_omega) / k;
            write_matrix(&means.join(format!("{}_{}_delta.csv", truth.design, variant)), &d)?;
            write_matrix(&means.join(format!("{}_{}_omega.csv", truth.design, variant)), &o)?;
        }
    }
    Ok(())
}

fn study(a: &StudyArgs) -> Result<(), CliError> {
    let config = load_config(a.config.as_deref())?;
    let out = a
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| config_err("out", "no output directory given"))?;
    let study = config.study_config(a.full_scale).map_err(CliError::Config)?;
    let started = unix_seconds();
    let report = run_study(&study)?;
    write_study_outputs(&out, &report)?;
    let timings: Vec<_> = report
        .jobs
        .iter()
        .map(|j| json!({"design": j.design, "variant": j.variant, "rep": j.rep, "seconds": j.seconds}))
        .collect();
    let meta = json!({
        "command": "study",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "full_scale": a.full_scale || config.full_scale,
        "n": study.n,
        "t": study.t,
        "reps": study.reps,
        "burn_in": study.chain.burn_in,
        "draws": study.chain.draws,
        "thin": study.chain.thin,
        "workers": study.workers,
        "started_unix": started,
        "wall_seconds": report.wall_seconds,
        "job_seconds": timings,
    });
    write_json(&out.join("metadata.json"), &meta)?;
    Ok(())
}

fn summarize(a: &SummarizeArgs) -> Result<(), CliError> {
    let truth_delta = a.truth_delta.as_deref().map(read_matrix).transpose()?;
    let truth_omega = a.truth_omega.as_deref().map(read_matrix).transpose()?;
    let start = Instant::now();
    let mut loss_rows = Vec::new();
    for (k, path) in a.chains.iter().enumerate() {
        let (layout, draws) = read_chain(path)?;
        let summary = ChainSummary::from_draws(draws, layout)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("chain{k}"));
        let stem = if a.chains.len() > 1 { format!("{k}_{stem}") } else { stem };
        let n = layout.n();
        write_scalar_summary(&a.out.join(format!("{stem}_summary.csv")), &summary.scalars)?;
        write_matrix(
            &a.out.join(format!("{stem}_mean_mu.csv")),
            &DMatrix::from_column_slice(n, 1, summary.mean_mu.as_slice()),
        )?;
        write_matrix(&a.out.join(format!("{stem}_mean_delta.csv")), &summary.mean_delta)?;
        write_matrix(&a.out.join(format!("{stem}_mean_omega.csv")), &summary.mean_omega)?;
        if truth_delta.is_some() || truth_omega.is_some() {
            let dl = truth_delta.as_ref().map(|t| frobenius_loss(&summary.mean_delta, t)).transpose()?;
            let ol = truth_omega.as_ref().map(|t| frobenius_loss(&summary.mean_omega, t)).transpose()?;
            loss_rows.push(vec![
                path.display().to_string(),
                summary.stored_draws.to_string(),
                fmt_loss(dl),
                fmt_loss(ol),
            ]);
        }
    }
    if !loss_rows.is_empty() {
        write_table(&a.out.join("losses.csv"), &["chain", "draws", "delta_loss", "omega_loss"], &loss_rows)?;
    }
    let meta = json!({
        "command": "summarize",
        "version": env!("CARGO_PKG_VERSION"),
        "chains": a.chains,
        "started_unix": unix_seconds(),
        "wall_seconds": start.elapsed().as_secs_f64(),
    });
    write_json(&a.out.join("metadata.json"), &meta)?;
    Ok(())
}
