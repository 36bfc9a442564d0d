//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, schema or config error, 2 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::datagen::simulate_dataset;
use crate::domain::{Dataset, RegressionCoefficients};
use crate::estimation::{BicSelection, FitResult};
use crate::experiment::{
    column_scales, default_grid, estimate_method, parse_candidates, parse_degrees, parse_truncation, run_experiment,
    summary_table, write_curves_csv, write_frequencies_csv, write_replicates_csv, write_summary_csv, BaselineKind,
    ConfigError, DegreeChoice, ExperimentConfig, FitSettings, LambdaGrid, Method, DEFAULT_CANDIDATES,
};
use crate::io::{read_dataset_path, write_dataset_path, IoError};
use crate::metrics::confusion_counts;
use crate::selection::{gcv_select, GcvSelection, PenaltyConfig, PenaltyKind, SelectionProblem};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Schema(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

fn output<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Output(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "semicomp", version, about = "Variable selection for semi-competing risks data under a gamma-frailty illness-death model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the unpenalized model to a CSV dataset.
    Fit(FitCmd),
    /// Penalized variable selection on a CSV dataset, tuned by GCV.
    Select(SelectCmd),
    /// Run a replicated simulation study from a config file.
    Simulate(SimulateCmd),
    /// Write one simulated dataset from a config file.
    Generate(GenerateCmd),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV (l, y1, delta1, y2, delta2, covariates).
    #[arg(long)]
    pub data: PathBuf,
    /// Baseline hazard family: weibull or bernstein.
    #[arg(long, default_value = "bernstein")]
    pub baseline: String,
    /// Bernstein degrees `m1,m2,m3`, or `bic`.
    #[arg(long, default_value = "2,2,3")]
    pub degrees: String,
    /// Candidate degrees for `--degrees bic`, as `m1,m2,m3;m1,m2,m3;...`.
    #[arg(long)]
    pub candidates: Option<String>,
    /// Healthy-state exposure: gap, calendar or first-event.
    #[arg(long, default_value = "gap")]
    pub truncation: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl FitArgs {
    fn settings(&self) -> Result<FitSettings, CliError> {
        let baseline: BaselineKind = self.baseline.parse().map_err(CliError::Usage)?;
        let degrees = if self.degrees.trim() == "bic" {
            match &self.candidates {
                Some(c) => DegreeChoice::Bic(parse_candidates(c).map_err(CliError::Usage)?),
                None => DegreeChoice::Bic(DEFAULT_CANDIDATES.to_vec()),
            }
        } else {
            DegreeChoice::Fixed(parse_degrees(&self.degrees).map_err(CliError::Usage)?)
        };
        Ok(FitSettings {
            baseline,
            degrees,
            truncation: parse_truncation(&self.truncation).map_err(CliError::Usage)?,
        })
    }
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct SelectCmd {
    #[command(flatten)]
    pub fit: FitArgs,
    /// bar, lasso, alasso or oracle.
    #[arg(long, default_value = "bar")]
    pub method: String,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub lambda_count: Option<usize>,
    /// Standardize covariate columns before fitting; estimates are reported
    /// on the original scale.
    #[arg(long)]
    pub standardize: bool,
    /// Known support as 1-based indices per transition, `1,2;3;1,4`.
    /// Required by `--method oracle`; otherwise used for confusion counts.
    #[arg(long)]
    pub support: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// Flat TOML study config.
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads (all cores when omitted).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateCmd {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicate index whose dataset is written.
    #[arg(long, default_value_t = 0)]
    pub replicate: usize,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `1,2;3;1,4` into 0-based column lists, checked against `dims`.
pub fn parse_support(s: &str, dims: [usize; 3]) -> Result<[Vec<usize>; 3], String> {
    let blocks: Vec<&str> = s.split(';').collect();
    if blocks.len() != 3 {
        return Err(format!("support '{s}' must have three ';'-separated blocks"));
    }
    let mut out: [Vec<usize>; 3] = Default::default();
    for (k, b) in blocks.iter().enumerate() {
        for t in b.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let j: usize = t.parse().map_err(|_| format!("support index '{t}' is not a positive integer"))?;
            if j == 0 || j > dims[k] {
                return Err(format!("support index {j} out of range 1..={} for transition {}", dims[k], k + 1));
            }
            out[k].push(j - 1);
        }
        out[k].sort_unstable();
        out[k].dedup();
    }
    Ok(out)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(c) => cmd_fit(&c),
        Command::Select(c) => cmd_select(&c),
        Command::Simulate(c) => cmd_simulate(&c),
        Command::Generate(c) => cmd_generate(&c),
    }
}

#[derive(Serialize)]
struct FitReport<'a> {
    n: usize,
    dims: [usize; 3],
    baseline: BaselineKind,
    degrees: Option<[usize; 3]>,
    log_likelihood: f64,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
    gamma: f64,
    beta: &'a RegressionCoefficients,
    baseline_parameters: &'a crate::baselines::BaselineSpec,
}

fn fit_report<'a>(data: &Dataset, settings: &FitSettings, fit: &'a FitResult, bic: Option<&BicSelection>) -> FitReport<'a> {
    let degrees = match (&settings.baseline, &settings.degrees, bic) {
        (BaselineKind::Weibull, _, _) => None,
        (_, _, Some(b)) => Some(b.degrees),
        (_, DegreeChoice::Fixed(d), None) => Some(*d),
        (_, DegreeChoice::Bic(_), None) => None,
    };
    FitReport {
        n: data.len(),
        dims: data.dims(),
        baseline: settings.baseline,
        degrees,
        log_likelihood: fit.log_likelihood,
        converged: fit.converged,
        iterations: fit.iterations,
        gradient_norm: fit.gradient_norm,
        gamma: fit.params.nuisance.gamma(),
        beta: &fit.params.beta,
        baseline_parameters: &fit.params.nuisance.baseline,
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(output)?;
    fs::write(path, text + "\n").map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn write_bic_csv(path: &Path, sel: &BicSelection) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(output)?;
    w.write_record(["m1", "m2", "m3", "log_likelihood", "bic", "converged", "selected", "error"]).map_err(output)?;
    for r in &sel.table {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            r.degrees[0].to_string(),
            r.degrees[1].to_string(),
            r.degrees[2].to_string(),
            opt(r.log_likelihood),
            opt(r.bic),
            r.converged.to_string(),
            (r.degrees == sel.degrees).to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(output)?;
    }
    w.flush().map_err(output)
}

fn fit_or_fail(settings: &FitSettings, data: &Dataset) -> Result<(FitResult, Option<BicSelection>), CliError> {
    let (fit, bic) = settings.fit(data).map_err(|e| CliError::Numerical(e.to_string()))?;
    if !fit.converged {
        log::warn!(
            "unpenalized fit stopped after {} iterations with gradient norm {:.3e}",
            fit.iterations,
            fit.gradient_norm
        );
    }
    Ok((fit, bic))
}

pub fn cmd_fit(c: &FitCmd) -> Result<(), CliError> {
    let settings = c.fit.settings()?;
    let data = read_dataset_path(&c.fit.data)?;
    let (fit, bic) = fit_or_fail(&settings, &data)?;
    create_dir(&c.fit.out)?;
    write_json(&c.fit.out.join("fit_report.json"), &fit_report(&data, &settings, &fit, bic.as_ref()))?;
    if let Some(b) = &bic {
        write_bic_csv(&c.fit.out.join("bic.csv"), b)?;
    }
    println!(
        "log-likelihood {:.6}, gamma {:.4}, converged {} ({} iterations)",
        fit.log_likelihood,
        fit.params.nuisance.gamma(),
        fit.converged,
        fit.iterations
    );
    Ok(())
}

#[derive(Serialize)]
struct SelectReport {
    method: String,
    n: usize,
    dims: [usize; 3],
    standardized: bool,
    lambda: Option<f64>,
    lambda_grid: Vec<f64>,
    note: Option<String>,
    selected: [Vec<usize>; 3],
    beta: RegressionCoefficients,
    confusion: Option<crate::metrics::ConfusionCounts>,
}

fn write_selection_csv(path: &Path, beta: &RegressionCoefficients, eps: f64) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(output)?;
    w.write_record(["covariate", "illness", "death", "death_after_illness"]).map_err(output)?;
    let rows = beta.dims().into_iter().max().unwrap_or(0);
    for j in 0..rows {
        let cell = |k: usize| match beta.blocks[k].get(j) {
            Some(b) if b.abs() >= eps => b.to_string(),
            Some(_) => "0".to_string(),
            None => String::new(),
        };
        w.write_record([(j + 1).to_string(), cell(0), cell(1), cell(2)]).map_err(output)?;
    }
    w.flush().map_err(output)
}

fn write_gcv_csv(path: &Path, sel: &GcvSelection, eps: f64) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(output)?;
    w.write_record(["lambda", "effective_params", "gcv", "selected_count", "log_likelihood", "chosen", "error"])
        .map_err(output)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, p) in sel.path.iter().enumerate() {
        let (count, ll) = match &p.estimate {
            Some(e) => (
                e.beta.iter().filter(|b| b.abs() >= eps).count().to_string(),
                e.log_likelihood.to_string(),
            ),
            None => (String::new(), String::new()),
        };
        w.write_record([
            p.lambda.to_string(),
            opt(p.effective_params),
            opt(p.gcv),
            count,
            ll,
            (i == sel.best_index).to_string(),
            p.error.clone().unwrap_or_default(),
        ])
        .map_err(output)?;
    }
    w.flush().map_err(output)
}

pub fn cmd_select(c: &SelectCmd) -> Result<(), CliError> {
    let settings = c.fit.settings()?;
    let method: Method = c.method.parse().map_err(CliError::Usage)?;
    let data = read_dataset_path(&c.fit.data)?;
    let support = c
        .support
        .as_deref()
        .map(|s| parse_support(s, data.dims()))
        .transpose()
        .map_err(CliError::Usage)?;
    if method == Method::Oracle && support.is_none() {
        return Err(CliError::Usage("--method oracle requires --support".into()));
    }
    let lambdas = match (c.lambda_min, c.lambda_max, c.lambda_count) {
        (None, None, None) => default_grid(data.len()),
        (lo, hi, count) => {
            let d = default_grid(data.len());
            let g = LambdaGrid {
                min: lo.unwrap_or(d[0]),
                max: hi.unwrap_or_else(|| lo.map_or(d[d.len() - 1], |l| l.max(d[d.len() - 1]))),
                count: count.unwrap_or(30),
            };
            g.validate().map_err(CliError::Usage)?;
            g.values()
        }
    };
    let scales = if c.standardize { column_scales(&data) } else { vec![1.0; data.p()] };
    let work = if c.standardize { data.standardized() } else { data.clone() };
    let (fit, bic) = fit_or_fail(&settings, &work)?;
    let degrees = bic.as_ref().map(|b| b.degrees);
    let eps = PenaltyConfig::new(PenaltyKind::Bar, vec![1.0]).zero_threshold;
    let (beta_work, lambda, gcv) = match method.penalty() {
        Some(kind) => {
            let problem = SelectionProblem::new(&work, &fit, &settings.likelihood())
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            let sel = gcv_select(&problem, &PenaltyConfig::new(kind, lambdas.clone()))
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            (sel.best().beta.clone(), Some(sel.best_lambda), Some(sel))
        }
        None => {
            let (b, _) = estimate_method(method, &work, &fit, &settings, &lambdas, degrees, support.as_ref())
                .map_err(CliError::Numerical)?;
            (b, None, None)
        }
    };
    let stacked: Vec<f64> = beta_work.iter().zip(&scales).map(|(b, s)| b / s).collect();
    let beta = RegressionCoefficients::from_stacked(&stacked, data.dims()).map_err(|e| CliError::Numerical(e.to_string()))?;
    let selected: [Vec<usize>; 3] =
        std::array::from_fn(|k| (0..beta.blocks[k].len()).filter(|&j| beta.blocks[k][j].abs() >= eps).map(|j| j + 1).collect());
    let confusion = support.as_ref().map(|s| {
        let mut indicator = RegressionCoefficients::zeros(data.dims());
        for k in 0..3 {
            for &j in &s[k] {
                indicator.blocks[k][j] = 1.0;
            }
        }
        confusion_counts(&stacked, &indicator.stacked(), eps)
    });
    let note = match (method, lambdas.len()) {
        (Method::Oracle, _) => Some("oracle refit on the given support; no tuning".to_string()),
        (_, 1) => Some("degenerate tuning: the grid has a single λ, so GCV made no choice".to_string()),
        _ => None,
    };
    create_dir(&c.fit.out)?;
    write_selection_csv(&c.fit.out.join("selection.csv"), &beta, eps)?;
    if let Some(sel) = &gcv {
        write_gcv_csv(&c.fit.out.join("gcv.csv"), sel, eps)?;
    }
    if let Some(b) = &bic {
        write_bic_csv(&c.fit.out.join("bic.csv"), b)?;
    }
    let report = SelectReport {
        method: method.label().into(),
        n: data.len(),
        dims: data.dims(),
        standardized: c.standardize,
        lambda,
        lambda_grid: lambdas,
        note: note.clone(),
        selected,
        beta,
        confusion,
    };
    write_json(&c.fit.out.join("select_report.json"), &report)?;
    println!(
        "{}: {} covariates selected{}",
        method.label(),
        report.selected.iter().map(Vec::len).sum::<usize>(),
        lambda.map(|l| format!(" at λ = {l:.4e}")).unwrap_or_default()
    );
    if let Some(n) = note {
        println!("note: {n}");
    }
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut file: crate::experiment::ExperimentFile =
        toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if let Some(s) = seed {
        file.seed = s;
    }
    Ok(ExperimentConfig::from_file(file)?)
}

pub fn cmd_simulate(c: &SimulateCmd) -> Result<(), CliError> {
    let cfg = load_config(&c.config, c.seed)?;
    let results = run_experiment(&cfg, c.jobs).map_err(CliError::Numerical)?;
    create_dir(&c.out)?;
    let file = |name: &str| {
        let p = c.out.join(name);
        fs::File::create(&p).map_err(|e| CliError::Output(format!("{}: {e}", p.display())))
    };
    write_replicates_csv(&results, file("replicates.csv")?).map_err(output)?;
    write_summary_csv(&results, file("summary.csv")?).map_err(output)?;
    write_frequencies_csv(&results, cfg.scenario.beta.dims(), file("selection_frequency.csv")?).map_err(output)?;
    write_curves_csv(&results.curves, file("hazard_curves.csv")?).map_err(output)?;
    let table = summary_table(&results);
    fs::write(c.out.join("summary.txt"), &table).map_err(output)?;
    print!("{table}");
    if results.failure_fraction() > 0.2 {
        return Err(CliError::Numerical(format!(
            "{} of {} replicates failed (more than 20%)",
            results.failures, results.replications
        )));
    }
    Ok(())
}

pub fn cmd_generate(c: &GenerateCmd) -> Result<(), CliError> {
    let cfg = load_config(&c.config, c.seed)?;
    let scenario = cfg.replicate_scenario(c.replicate);
    let data = simulate_dataset(&scenario).map_err(|e| CliError::Numerical(e.to_string()))?;
    if let Some(parent) = c.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_dataset_path(&data, &c.out)?;
    let support = scenario.true_support();
    let fmt: Vec<String> = support
        .iter()
        .map(|b| b.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(","))
        .collect();
    println!("wrote {} subjects to {}; true support {}", data.len(), c.out.display(), fmt.join(";"));
    Ok(())
}

/// Parses arguments and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_parsing() {
        assert_eq!(parse_support("1,2;;3", [3, 3, 3]).unwrap(), [vec![0, 1], vec![], vec![2]]);
        assert!(parse_support("4;;", [3, 3, 3]).is_err());
        assert!(parse_support("1;2", [3, 3, 3]).is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["semicomp", "bogus"]), 1);
        assert_eq!(main_with_args(["semicomp", "--version"]), 0);
        assert_eq!(main_with_args(["semicomp", "fit", "--data", "/nonexistent.csv"]), 1);
    }
}
