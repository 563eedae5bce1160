//! Command-line front end. Each command returns its report as text; `main`
//! prints it and maps errors to exit codes.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_ancova, fit_unadjusted, AnalysisResult};
use crate::design::{
    interim_size, max_size, n_unadjusted, n_unadjusted_raw, recalculate, DesignSpec, InterimRounding,
    RecalcMethod, RecalcOutcome, RecalcWarning,
};
use crate::error::{Error, Result};
use crate::io::{ScenarioGrid, SimConfig, TrialCsv, DEFAULT_ARM_DENY_LIST};
use crate::scenario::{RngStream, ScenarioSpec};
use crate::sim::{run_simulation_detailed, Method, ReplicateRecord, SimOptions, SimSummary};

/// Environment variable holding the default number of simulation workers.
pub const WORKERS_ENV: &str = "ANCOVA_SSR_WORKERS";

/// Separates the human-readable report from the JSON block.
pub const JSON_MARKER: &str = "--- json ---";

#[derive(Debug, Parser)]
#[command(name = "ancova-ssr", version, about = "Blinded sample size recalculation for covariate-adjusted trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unadjusted sample size, interim size and cap.
    Design(DesignArgs),
    /// Blinded recalculation from pooled interim data (no arm column allowed).
    Recalc(RecalcArgs),
    /// Final ANCOVA and unadjusted analysis of unblinded data.
    Analyze(AnalyzeArgs),
    /// Monte Carlo study driven by a JSON config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DesignFlags {
    /// One-sided significance level.
    #[arg(long, default_value_t = 0.025)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    pub power: f64,
    /// Treatment effect the trial is powered for.
    #[arg(long)]
    pub delta: f64,
    /// Design-stage within-arm outcome VARIANCE (not the SD).
    #[arg(long)]
    pub sigma2: f64,
    /// Interim fraction of the unadjusted sample size.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Cap multiplier on the unadjusted sample size.
    #[arg(long, default_value_t = 2.0)]
    pub m: f64,
}

impl DesignFlags {
    fn spec(&self, k: usize) -> Result<DesignSpec> {
        Ok(DesignSpec::new(self.alpha, self.power, self.delta, self.sigma2)?
            .with_interim(self.tau, self.m)?
            .with_covariates(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoundingArg {
    Even,
    Floor,
}

impl From<RoundingArg> for InterimRounding {
    fn from(r: RoundingArg) -> Self {
        match r {
            RoundingArg::Even => InterimRounding::Even,
            RoundingArg::Floor => InterimRounding::Floor,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub design: DesignFlags,
    /// How tau * N_unadj is rounded to a subject count.
    #[arg(long, value_enum, default_value = "even")]
    pub interim_rounding: RoundingArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Proposed,
    Simple,
}

#[derive(Debug, Clone, Args)]
pub struct RecalcArgs {
    /// CSV of pooled interim data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub outcome: String,
    /// Comma-separated covariate columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[command(flatten)]
    pub design: DesignFlags,
    #[arg(long, value_enum, default_value = "proposed")]
    pub method: MethodArg,
    /// Column names treated as treatment labels (case-insensitive); replaces the default list.
    #[arg(long, value_delimiter = ',')]
    pub deny_columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// CSV of unblinded trial data.
    #[arg(long)]
    pub data: PathBuf,
    /// Arm column coded 0 (control) / 1 (experimental).
    #[arg(long, default_value = "arm")]
    pub arm: String,
    #[arg(long)]
    pub outcome: String,
    /// Comma-separated covariate columns; defaults to every column other than outcome and arm.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.025)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// JSON simulation config.
    pub config: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Suppress progress messages on stderr.
    #[arg(long)]
    pub quiet: bool,
}

/// `x` to 6 significant digits, without trailing zeros.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

fn push_line(out: &mut String, label: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{label:<22}{value}");
}

fn push_json<T: Serialize>(out: &mut String, value: &T) -> Result<()> {
    out.push_str(JSON_MARKER);
    out.push('\n');
    out.push_str(&serde_json::to_string_pretty(value)?);
    out.push('\n');
    Ok(())
}

/// Extracts and parses the JSON block of a command's output.
pub fn parse_json_block<T: for<'de> Deserialize<'de>>(output: &str) -> Result<T> {
    let start = output
        .find(JSON_MARKER)
        .ok_or_else(|| Error::Usage("output has no JSON block".into()))?;
    Ok(serde_json::from_str(&output[start + JSON_MARKER.len()..])?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub design: DesignSpec,
    pub interim_rounding: InterimRounding,
    pub n_unadj_raw: f64,
    pub n_unadj: usize,
    pub n_tau: usize,
    pub n_max: usize,
}

pub fn cmd_design(args: &DesignArgs) -> Result<String> {
    let spec = args.design.spec(0)?;
    let rounding = InterimRounding::from(args.interim_rounding);
    let n_unadj = n_unadjusted(&spec)?;
    let report = DesignReport {
        design: spec,
        interim_rounding: rounding,
        n_unadj_raw: n_unadjusted_raw(&spec)?,
        n_unadj,
        n_tau: interim_size(&spec, n_unadj, rounding),
        n_max: max_size(&spec, n_unadj),
    };
    let mut out = String::new();
    push_line(&mut out, "alpha (one-sided)", sig6(spec.alpha));
    push_line(&mut out, "power", sig6(spec.power));
    push_line(&mut out, "delta", sig6(spec.delta));
    push_line(&mut out, "sigma2", sig6(spec.sigma2_y));
    push_line(&mut out, "N_unadj (unrounded)", sig6(report.n_unadj_raw));
    push_line(&mut out, "N_unadj", report.n_unadj);
    push_line(&mut out, "N_tau", report.n_tau);
    push_line(&mut out, "N_max", report.n_max);
    push_json(&mut out, &report)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecalcReport {
    pub design: DesignSpec,
    pub outcome_column: String,
    pub covariates: Vec<String>,
    pub result: RecalcOutcome,
}

pub fn cmd_recalc(args: &RecalcArgs) -> Result<String> {
    let csv = TrialCsv::from_path(&args.data)?;
    let covariates = args
        .covariates
        .clone()
        .unwrap_or_else(|| csv.other_columns(&[&args.outcome]));
    let data = match &args.deny_columns {
        Some(list) => csv.blinded(&args.outcome, &covariates, list),
        None => csv.blinded(&args.outcome, &covariates, DEFAULT_ARM_DENY_LIST),
    }?;
    let spec = args.design.spec(covariates.len())?;
    let method = match args.method {
        MethodArg::Proposed => RecalcMethod::Proposed,
        MethodArg::Simple => RecalcMethod::Simple,
    };
    let result = recalculate(method, &data, &spec)?;
    let mut out = String::new();
    let name = match method {
        RecalcMethod::Proposed => "proposed",
        RecalcMethod::Simple => "simple",
    };
    push_line(&mut out, "method", name);
    push_line(&mut out, "outcome", &args.outcome);
    push_line(&mut out, "covariates", covariates.join(","));
    push_line(&mut out, "interim subjects", result.n_tau);
    push_line(&mut out, "residual variance", sig6(result.residual_variance));
    push_line(&mut out, "pooled variance", sig6(result.pooled_variance));
    push_line(&mut out, "numerator", sig6(result.numerator_estimate));
    push_line(&mut out, "denominator", sig6(result.denominator_estimate));
    push_line(&mut out, "N_unadj", result.n_unadj);
    push_line(&mut out, "N_rec (unrounded)", sig6(result.n_rec_raw));
    push_line(&mut out, "N_rec", result.n_rec);
    push_line(&mut out, "N_max", result.n_max);
    push_line(&mut out, "N_fin", result.n_fin);
    for w in &result.warnings {
        match w {
            RecalcWarning::NumeratorFloored { raw, floored_to } => {
                let _ = writeln!(
                    out,
                    "warning: residual variance does not exceed delta^2/4 (numerator {}); floored to {}",
                    sig6(*raw),
                    sig6(*floored_to)
                );
            }
        }
    }
    let report = RecalcReport {
        design: spec,
        outcome_column: args.outcome.clone(),
        covariates,
        result,
    };
    push_json(&mut out, &report)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub covariates: Vec<String>,
    pub ancova: AnalysisResult,
    pub unadjusted: AnalysisResult,
}

fn analysis_row(out: &mut String, label: &str, r: &AnalysisResult) {
    let _ = writeln!(
        out,
        "{label:<12}{:>12}{:>12}{:>8}{:>12}{:>12}  ({}, {})",
        sig6(r.estimate),
        sig6(r.se),
        r.df,
        sig6(r.t_stat),
        sig6(r.p_one_sided),
        sig6(r.ci_low),
        sig6(r.ci_high)
    );
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<String> {
    let csv = TrialCsv::from_path(&args.data)?;
    let covariates = args
        .covariates
        .clone()
        .unwrap_or_else(|| csv.other_columns(&[&args.outcome, &args.arm]));
    let data = csv.unblinded(&args.arm, &args.outcome, &covariates)?;
    let report = AnalyzeReport {
        covariates,
        ancova: fit_ancova(&data, args.alpha)?,
        unadjusted: fit_unadjusted(&data, args.alpha)?,
    };
    let (n0, n1) = data.arm_sizes();
    let mut out = String::new();
    let _ = writeln!(out, "subjects: {} ({n1} experimental, {n0} control)", data.n());
    let _ = writeln!(out, "covariates: {}", report.covariates.join(","));
    let _ = writeln!(
        out,
        "{:<12}{:>12}{:>12}{:>8}{:>12}{:>12}  95% CI",
        "model", "estimate", "SE", "df", "t", "p (1-sided)"
    );
    analysis_row(&mut out, "ANCOVA", &report.ancova);
    analysis_row(&mut out, "unadjusted", &report.unadjusted);
    push_json(&mut out, &report)?;
    Ok(out)
}

/// One row of the simulation summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub family: String,
    pub w_corr: Option<f64>,
    pub yw_corr: Option<f64>,
    pub mu: Option<f64>,
    pub beta: Option<f64>,
    pub strategy: Option<u8>,
    pub delta: f64,
    pub design_delta: f64,
    pub design_sigma2: f64,
    pub method: Method,
    #[serde(rename = "Bias")]
    pub bias: f64,
    #[serde(rename = "EmpSE")]
    pub emp_se: f64,
    #[serde(rename = "Power")]
    pub power: f64,
    #[serde(rename = "Cov.")]
    pub coverage: f64,
    #[serde(rename = "N_Avg")]
    pub n_avg: f64,
    #[serde(rename = "N_Med")]
    pub n_med: f64,
    #[serde(rename = "N_Min")]
    pub n_min: usize,
    #[serde(rename = "N_Max")]
    pub n_max: usize,
    pub replicates: usize,
    pub failures: usize,
    pub mc_se: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ReplicateRow {
    cell: usize,
    seed_index: u64,
    method: Method,
    estimate: f64,
    se: f64,
    true_effect: f64,
    rejected: bool,
    covered: bool,
    n_fin: usize,
    n_rec_raw: Option<f64>,
}

impl ReplicateRow {
    fn new(cell: usize, r: &ReplicateRecord) -> Self {
        Self {
            cell,
            seed_index: r.seed_index,
            method: r.method,
            estimate: r.estimate,
            se: r.se,
            true_effect: r.true_effect,
            rejected: r.rejected,
            covered: r.covered,
            n_fin: r.n_fin,
            n_rec_raw: r.n_rec_raw,
        }
    }
}

/// A replicate record tagged with its cell index.
pub type CellRecord = (usize, ReplicateRecord);

/// One grid cell: scenario plus design.
#[derive(Debug, Clone)]
pub struct SimCell {
    pub scenario: ScenarioSpec,
    pub design: DesignSpec,
    strategy: Option<u8>,
}

/// Expands a config into its grid cells, in a fixed order.
pub fn expand_cells(cfg: &SimConfig) -> Result<Vec<SimCell>> {
    let mut bases: Vec<(ScenarioSpec, Option<u8>)> = Vec::new();
    match &cfg.scenario {
        ScenarioGrid::S1 { w_corr, yw_corr } => {
            for &r in w_corr {
                for &s in yw_corr {
                    bases.push((ScenarioSpec::s1(0.0, r, s), None));
                }
            }
        }
        ScenarioGrid::S2 { mu, beta } => {
            for &m in mu {
                for &b in beta {
                    bases.push((ScenarioSpec::s2(0.0, m, b), None));
                }
            }
        }
        ScenarioGrid::S3 { mu, beta } => {
            for &m in mu {
                for &b in beta {
                    bases.push((ScenarioSpec::s3(0.0, m, b), None));
                }
            }
        }
        ScenarioGrid::S4 { strategies } => {
            for &s in strategies {
                bases.push((ScenarioSpec::s4_with_delta(0.0, s), Some(s.into())));
            }
        }
    }
    let d = &cfg.design;
    let mut cells = Vec::new();
    for &delta in &cfg.delta {
        for (base, strategy) in &bases {
            let design_delta = d.delta.unwrap_or(delta);
            let design = DesignSpec::new(d.alpha, d.power, design_delta, d.sigma2_y * d.sigma2_scale)?
                .with_interim(d.tau, d.m)?;
            let true_delta = if cfg.null_effect { 0.0 } else { delta };
            let scenario = base.clone().with_delta(true_delta);
            scenario.validate()?;
            cells.push(SimCell {
                scenario,
                design,
                strategy: *strategy,
            });
        }
    }
    Ok(cells)
}

fn summary_row(index: usize, cell: &SimCell, s: &SimSummary) -> SummaryRow {
    use crate::scenario::ScenarioFamily as F;
    let (family, w_corr, yw_corr, mu, beta) = match cell.scenario.family {
        F::S1 { w_corr, yw_corr } => ("S1", Some(w_corr), Some(yw_corr), None, None),
        F::S2 { mu, beta } => ("S2", None, None, Some(mu), Some(beta)),
        F::S3 { mu, beta } => ("S3", None, None, Some(mu), Some(beta)),
        F::S4 => ("S4", None, None, None, None),
    };
    SummaryRow {
        cell: index,
        family: family.into(),
        w_corr,
        yw_corr,
        mu,
        beta,
        strategy: cell.strategy,
        delta: cell.scenario.delta,
        design_delta: cell.design.delta,
        design_sigma2: cell.design.sigma2_y,
        method: s.method,
        bias: s.bias,
        emp_se: s.emp_se,
        power: s.power,
        coverage: s.coverage,
        n_avg: s.n_avg,
        n_med: s.n_med,
        n_min: s.n_min,
        n_max: s.n_max_observed,
        replicates: s.replicates,
        failures: s.failures,
        mc_se: s.mc_se_power,
    }
}

/// Runs every cell of `cfg`. Returns the summary rows and the per-replicate
/// records tagged with their cell index.
pub fn run_config(
    cfg: &SimConfig,
    workers: Option<usize>,
    mut progress: impl FnMut(usize, usize, &SimCell),
) -> Result<(Vec<SummaryRow>, Vec<CellRecord>)> {
    let cells = expand_cells(cfg)?;
    let options = SimOptions {
        interim_rounding: cfg.interim_rounding,
        final_rounding: cfg.final_rounding,
        workers,
    };
    let root = RngStream::new(cfg.master_seed);
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        progress(i, cells.len(), cell);
        let seed = root.split(i as u64).next_u64();
        let run = run_simulation_detailed(&cell.scenario, &cell.design, &cfg.methods, cfg.replicates, seed, &options)?;
        rows.extend(run.summaries.iter().map(|s| summary_row(i, cell, s)));
        if cfg.replicate_output.is_some() {
            records.extend(run.records.into_iter().map(|r| (i, r)));
        }
    }
    Ok((rows, records))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let cfg = SimConfig::from_path(&args.config)?;
    let quiet = args.quiet;
    let (rows, records) = run_config(&cfg, args.workers, |i, n, cell| {
        if !quiet {
            eprintln!("cell {}/{n}: {:?}, delta {}", i + 1, cell.scenario.family, cell.scenario.delta);
        }
    })?;
    let mut summary = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        summary.serialize(r)?;
    }
    let summary = String::from_utf8(summary.into_inner().map_err(|e| e.into_error())?)
        .expect("csv output is UTF-8");
    if let Some(path) = &cfg.replicate_output {
        let mut w = csv::Writer::from_path(path)?;
        for (cell, record) in &records {
            w.serialize(ReplicateRow::new(*cell, record))?;
        }
        w.flush()?;
    }
    match &cfg.output {
        Some(path) => {
            std::fs::write(path, &summary)?;
            Ok(format!("wrote {} summary rows to {path}\n", rows.len()))
        }
        None => Ok(summary),
    }
}

pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Recalc(a) => cmd_recalc(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(125.58), "125.58");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.959963985), "1.95996");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(123456.4), "123456");
    }

    #[test]
    fn design_command_reports_sizes() {
        let args = DesignArgs {
            design: DesignFlags {
                alpha: 0.025,
                power: 0.8,
                delta: 0.5,
                sigma2: 1.0,
                tau: 0.5,
                m: 2.0,
            },
            interim_rounding: RoundingArg::Even,
        };
        let out = cmd_design(&args).unwrap();
        let report: DesignReport = parse_json_block(&out).unwrap();
        assert_eq!((report.n_unadj, report.n_tau, report.n_max), (126, 64, 252));
        assert!(out.contains("N_unadj               126"));
    }

    #[test]
    fn cells_expand_in_order() {
        let cfg = SimConfig::from_json(
            r#"{"scenario": {"family": "S2", "mu": [1.0, 1.5], "beta": [0.5]},
                "delta": [0.3, 0.5], "design": {"sigma2_y": 1}, "replicates": 2,
                "master_seed": 1, "null_effect": true}"#,
        )
        .unwrap();
        let cells = expand_cells(&cfg).unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.scenario.delta == 0.0));
        assert_eq!(cells[0].design.delta, 0.3);
        assert_eq!(cells[3].design.delta, 0.5);
    }
}
