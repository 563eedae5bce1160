//! Monte Carlo trial lifecycle: enrol to the interim size, recalculate
//! blinded, enrol the rest, analyse, then summarise across replicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_ancova, fit_unadjusted, AnalysisResult};
use crate::design::{
    interim_size, n_unadjusted, recalculate, DesignSpec, InterimRounding, RecalcMethod,
};
use crate::error::{Error, Result};
use crate::scenario::{RngStream, ScenarioModel, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Blinded ANCOVA recalculation, ANCOVA analysis.
    Proposed,
    /// Residual variance plugged into the unadjusted formula, ANCOVA analysis.
    Simple,
    /// No recalculation: `N_unadj` subjects, difference in means.
    FixedUnadjusted,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Simple => "simple",
            Method::FixedUnadjusted => "fixed_unadjusted",
        }
    }
}

/// Which recalculated size the simulated trial actually enrols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalRounding {
    /// `min{max{N_tau, N_rec}, N_max}`, odd when an odd interim size binds.
    #[default]
    Clamped,
    /// The clamped size rounded up to even.
    Even,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub interim_rounding: InterimRounding,
    pub final_rounding: FinalRounding,
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            interim_rounding: InterimRounding::Floor,
            final_rounding: FinalRounding::Clamped,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub seed_index: u64,
    pub method: Method,
    pub estimate: f64,
    pub se: f64,
    pub true_effect: f64,
    pub rejected: bool,
    pub covered: bool,
    pub n_fin: usize,
    /// Unrounded recalculated size; absent for the fixed design.
    pub n_rec_raw: Option<f64>,
}

fn record(
    seed_index: u64,
    method: Method,
    fit: &AnalysisResult,
    true_effect: f64,
    n_rec_raw: Option<f64>,
) -> ReplicateRecord {
    ReplicateRecord {
        seed_index,
        method,
        estimate: fit.estimate,
        se: fit.se,
        true_effect,
        rejected: fit.rejected,
        covered: fit.ci_low <= true_effect && true_effect <= fit.ci_high,
        n_fin: fit.n,
        n_rec_raw,
    }
}

/// One simulated trial. `design.k` is overwritten with the scenario's
/// adjustment-set size.
pub fn run_replicate(
    model: &ScenarioModel,
    design: &DesignSpec,
    method: Method,
    options: &SimOptions,
    seed_index: u64,
    rng: &mut RngStream,
) -> Result<ReplicateRecord> {
    let design = design.with_covariates(model.spec().k());
    let true_effect = model.spec().delta;
    let n_unadj = n_unadjusted(&design)?;
    let recalc_method = match method {
        Method::FixedUnadjusted => {
            let data = model.sample(n_unadj, rng)?;
            let fit = fit_unadjusted(&data, design.alpha)?;
            return Ok(record(seed_index, method, &fit, true_effect, None));
        }
        Method::Proposed => RecalcMethod::Proposed,
        Method::Simple => RecalcMethod::Simple,
    };
    let n_tau = interim_size(&design, n_unadj, options.interim_rounding);
    let interim = model.sample(n_tau, rng)?;
    let outcome = recalculate(recalc_method, &interim.blind(), &design)?;
    let n_fin = match options.final_rounding {
        FinalRounding::Clamped => outcome.n_fin_clamped,
        FinalRounding::Even => outcome.n_fin,
    };
    let rest = model.sample(n_fin.saturating_sub(n_tau), rng)?;
    let data = interim.concat(&rest)?;
    let fit = fit_ancova(&data, design.alpha)?;
    Ok(record(seed_index, method, &fit, true_effect, Some(outcome.n_rec_raw)))
}

/// Operating characteristics of one method over all successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub method: Method,
    pub true_effect: f64,
    pub bias: f64,
    pub emp_se: f64,
    pub power: f64,
    pub coverage: f64,
    pub n_avg: f64,
    pub n_med: f64,
    pub n_min: usize,
    pub n_max_observed: usize,
    /// Successful replicates.
    pub replicates: usize,
    pub failures: usize,
    pub mc_se_power: f64,
}

/// Summarises records of a single method, in the order given.
pub fn summarize(method: Method, true_effect: f64, records: &[ReplicateRecord], failures: usize) -> Result<SimSummary> {
    let r = records.len();
    if r < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: r });
    }
    let rf = r as f64;
    let mean_est = records.iter().map(|x| x.estimate).sum::<f64>() / rf;
    let ss: f64 = records.iter().map(|x| (x.estimate - mean_est).powi(2)).sum();
    let power = records.iter().filter(|x| x.rejected).count() as f64 / rf;
    let coverage = records.iter().filter(|x| x.covered).count() as f64 / rf;
    let mut ns: Vec<usize> = records.iter().map(|x| x.n_fin).collect();
    ns.sort_unstable();
    let n_med = if r % 2 == 1 {
        ns[r / 2] as f64
    } else {
        0.5 * (ns[r / 2 - 1] + ns[r / 2]) as f64
    };
    Ok(SimSummary {
        method,
        true_effect,
        bias: mean_est - true_effect,
        emp_se: (ss / (rf - 1.0)).sqrt(),
        power,
        coverage,
        n_avg: ns.iter().sum::<usize>() as f64 / rf,
        n_med,
        n_min: ns[0],
        n_max_observed: ns[r - 1],
        replicates: r,
        failures,
        mc_se_power: (power * (1.0 - power) / rf).sqrt(),
    })
}

#[derive(Debug, Clone)]
pub struct SimRun {
    /// One per requested method, in request order.
    pub summaries: Vec<SimSummary>,
    /// Successful replicates, ordered by replicate then method.
    pub records: Vec<ReplicateRecord>,
    /// First error message per method, if any replicate failed.
    pub first_errors: Vec<Option<String>>,
}

/// Runs `replicates` trials per method. Replicate `i` draws from substream `i`
/// of `master_seed` for every method, so methods are compared on the same
/// interim data. Results do not depend on the number of workers.
pub fn run_simulation_detailed(
    scenario: &ScenarioSpec,
    design: &DesignSpec,
    methods: &[Method],
    replicates: usize,
    master_seed: u64,
    options: &SimOptions,
) -> Result<SimRun> {
    if replicates < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            got: replicates,
        });
    }
    design.validate()?;
    let model = ScenarioModel::new(scenario)?;
    let root = RngStream::new(master_seed);
    let work = |i: usize| -> Vec<Result<ReplicateRecord>> {
        let stream = root.split(i as u64);
        methods
            .iter()
            .map(|&m| run_replicate(&model, design, m, options, i as u64, &mut stream.clone()))
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Vec<Result<ReplicateRecord>>> =
        pool.install(|| (0..replicates).into_par_iter().map(work).collect());

    let mut per_method: Vec<Vec<ReplicateRecord>> = vec![Vec::with_capacity(replicates); methods.len()];
    let mut failures = vec![0usize; methods.len()];
    let mut first_errors: Vec<Option<String>> = vec![None; methods.len()];
    let mut records = Vec::new();
    for row in results {
        for (j, res) in row.into_iter().enumerate() {
            match res {
                Ok(rec) => {
                    per_method[j].push(rec.clone());
                    records.push(rec);
                }
                Err(e) => {
                    failures[j] += 1;
                    first_errors[j].get_or_insert_with(|| e.to_string());
                }
            }
        }
    }
    let summaries = methods
        .iter()
        .zip(&per_method)
        .zip(&failures)
        .map(|((&m, recs), &f)| summarize(m, scenario.delta, recs, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimRun {
        summaries,
        records,
        first_errors,
    })
}

pub fn run_simulation(
    scenario: &ScenarioSpec,
    design: &DesignSpec,
    methods: &[Method],
    replicates: usize,
    master_seed: u64,
    options: &SimOptions,
) -> Result<Vec<SimSummary>> {
    run_simulation_detailed(scenario, design, methods, replicates, master_seed, options).map(|r| r.summaries)
}

/// Same machinery with the true effect set to zero while the design keeps
/// its `delta`. The `power` field of each summary is the type I error rate.
pub fn type_one_error_study(
    scenario: &ScenarioSpec,
    design: &DesignSpec,
    methods: &[Method],
    replicates: usize,
    master_seed: u64,
    options: &SimOptions,
) -> Result<Vec<SimSummary>> {
    let null = scenario.clone().with_delta(0.0);
    run_simulation(&null, design, methods, replicates, master_seed, options)
}
