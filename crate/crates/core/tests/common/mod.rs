//! Checks shared by the property tests and the acceptance runner.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use serde::Deserialize;

use ancova_ssr::analysis::{ancova_with_fit, fit_ancova, UnblindedTrialData};
use ancova_ssr::cli::{cmd_recalc, parse_json_block, DesignFlags, MethodArg, RecalcArgs, RecalcReport};
use ancova_ssr::design::{
    even_ceil, finalize_n, interim_size, max_size, n_unadjusted, proposed_n_raw, recalc_proposed, recalc_proposed_with, recalc_simple,
    BaseSize, BlindedInterimData, DenominatorRule, DesignSpec, InterimRounding, ProposedOptions,
};
use ancova_ssr::stats::{ols_fit, sample_covariance_matrix, Matrix};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// Deterministic runner so acceptance output is reproducible.
pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Random trial data: `k` covariates, at least `k + 6` subjects, both arms present.
pub fn trial_data(max_k: usize) -> impl Strategy<Value = UnblindedTrialData> {
    (1..=max_k, 0usize..40)
        .prop_flat_map(|(k, extra)| {
            let n = k + 6 + extra;
            (
                Just(k),
                vec(-10.0..10.0f64, n * k),
                vec(-10.0..10.0f64, n),
                vec(any::<bool>(), n),
            )
        })
        .prop_map(|(k, w, y, mut arm)| {
            let n = y.len();
            arm[0] = false;
            arm[1] = true;
            UnblindedTrialData::new(arm, Matrix::from_row_major(n, k, w).unwrap(), y).unwrap()
        })
}

fn design_matrix(d: &UnblindedTrialData) -> DMatrix<f64> {
    let (n, k) = (d.n(), d.k());
    let a = d.arm_indicator();
    DMatrix::from_fn(n, k + 2, |i, j| match j {
        0 => 1.0,
        1 => a[i],
        _ => d.covariates()[(i, j - 2)],
    })
}

/// Sample-moment ANCOVA variance equals `s^2 [(X'X)^{-1}]_AA`.
pub fn prop_eq11_matches_ols(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&trial_data(4), |d| {
            let (res, _) = ancova_with_fit(&d, 0.025).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let x = design_matrix(&d);
            let y = DVector::from_column_slice(d.outcome());
            let xtx_inv = (x.transpose() * &x).try_inverse().expect("full rank");
            let beta = &xtx_inv * x.transpose() * &y;
            let r = &y - &x * &beta;
            let s2 = r.dot(&r) / (d.n() - d.k() - 2) as f64;
            let oracle = s2 * xtx_inv[(1, 1)];
            check(rel_close(res.se * res.se, oracle, 1e-10), || {
                format!("se^2 {} vs oracle {oracle}", res.se * res.se)
            })?;
            check(rel_close(res.estimate, beta[1], 1e-9), || "estimate".into())
        })
        .map_err(|e| e.to_string())
}

/// Residuals are orthogonal to every regressor.
pub fn prop_ols_orthogonality(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&trial_data(4), |d| {
            let x = d.covariates().with_leading_columns(&[&d.arm_indicator()]);
            let fit = ols_fit(&x, d.outcome()).unwrap();
            let scale: f64 = d.outcome().iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..x.ncols() {
                let col = x.column(j);
                let dot: f64 = col.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
                let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                check(dot.abs() <= 1e-10 * norm * scale, || format!("column {j}: {dot}"))?;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn prop_covariance_psd(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&trial_data(5), |d| {
            let c = sample_covariance_matrix(d.covariates()).unwrap();
            let k = c.nrows();
            let m = DMatrix::from_row_slice(k, k, c.as_slice());
            check((&m - m.transpose()).abs().max() == 0.0, || "asymmetric".into())?;
            let eig = SymmetricEigen::new(m.clone()).eigenvalues;
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            check(min >= -1e-10 * m.trace().max(1.0), || format!("eigenvalue {min}"))
        })
        .map_err(|e| e.to_string())
}

fn small_delta_design(k: usize) -> DesignSpec {
    DesignSpec::new(0.025, 0.8, 1.0, 40.0).unwrap().with_covariates(k)
}

/// Row order and arm labels cannot change a blinded recalculation.
pub fn prop_blinding_invariance(cases: u32) -> Result<(), String> {
    let strat = trial_data(3).prop_flat_map(|d| {
        let idx: Vec<usize> = (0..d.n()).collect();
        let n = d.n();
        (Just(d), Just(idx).prop_shuffle(), vec(any::<bool>(), n))
    });
    runner(cases)
        .run(&strat, |(d, order, relabel)| {
            let spec = small_delta_design(d.k());
            let n_unadj = n_unadjusted(&spec).unwrap();
            let base = recalc_proposed(&d.blind(), &spec, n_unadj);
            let shuffled = recalc_proposed(&d.reorder(&order).blind(), &spec, n_unadj);
            let relabelled = UnblindedTrialData::new(relabel, d.covariates().clone(), d.outcome().to_vec()).unwrap();
            let other = recalc_proposed(&relabelled.blind(), &spec, n_unadj);
            match (base, shuffled, other) {
                (Ok(a), Ok(b), Ok(c)) => {
                    check(a == c, || "arm labels changed the result".into())?;
                    check(a.n_rec == b.n_rec && a.n_fin == b.n_fin, || "row order changed N".into())?;
                    check(rel_close(a.residual_variance, b.residual_variance, 1e-10), || "residual variance".into())?;
                    check(rel_close(a.pooled_variance, b.pooled_variance, 1e-10), || "pooled variance".into())
                }
                (Err(_), Err(_), Err(_)) => Ok(()),
                _ => Err(TestCaseError::fail("success differs across equivalent inputs")),
            }
        })
        .map_err(|e| e.to_string())
}

fn fuzz_design() -> impl Strategy<Value = DesignSpec> {
    (0.001..0.2f64, 0.5..0.99f64, 0.05..5.0f64, 0.01..100.0f64, 0.1..0.9f64, 1.0..4.0f64).prop_map(
        |(alpha, power, delta, sigma2, tau, m)| {
            DesignSpec::new(alpha, power, delta, sigma2)
                .unwrap()
                .with_interim(tau, m)
                .unwrap()
        },
    )
}

/// `N_tau <= N_fin <= N_max` and `N_fin` is even.
pub fn prop_n_fin_bounds(cases: u32) -> Result<(), String> {
    let strat = (fuzz_design(), 0usize..5000, any::<bool>());
    runner(cases)
        .run(&strat, |(spec, n_rec, floor)| {
            let n_unadj = n_unadjusted(&spec).unwrap();
            let rounding = if floor { InterimRounding::Floor } else { InterimRounding::Even };
            let n_tau = interim_size(&spec, n_unadj, rounding);
            let n_max = max_size(&spec, n_unadj);
            let n_fin = finalize_n(n_rec, n_tau, &spec, n_unadj);
            check(n_unadj.is_multiple_of(2) && n_max.is_multiple_of(2), || "odd design size".into())?;
            check(n_tau <= n_fin && n_fin <= n_max, || format!("{n_tau} <= {n_fin} <= {n_max}"))?;
            check(n_fin.is_multiple_of(2), || format!("odd n_fin {n_fin}"))
        })
        .map_err(|e| e.to_string())
}

/// Bounds hold end to end on recalculations from random interim data.
pub fn prop_recalc_bounds(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(trial_data(3), 0.1..3.0f64), |(d, delta)| {
            let spec = DesignSpec::new(0.025, 0.8, delta, 30.0).unwrap().with_covariates(d.k());
            if let Ok(out) = recalc_proposed(&d.blind(), &spec, n_unadjusted(&spec).unwrap()) {
                check(out.n_fin >= out.n_tau && out.n_fin <= out.n_max && out.n_fin % 2 == 0, || {
                    format!("{out:?}")
                })?;
                check(out.n_fin_clamped >= out.n_tau && out.n_fin_clamped <= out.n_max, || "clamped".into())?;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Larger variance or smaller effect never shrinks the unadjusted size; a
/// larger residual variance never shrinks the recalculated size.
pub fn prop_monotonicity(cases: u32) -> Result<(), String> {
    let strat = (fuzz_design(), 1.0..3.0f64, 0.0..1.0f64, 0.0..1.0f64, 1.0..3.0f64);
    runner(cases)
        .run(&strat, |(spec, f, r1, r2, pooled_factor)| {
            let n = n_unadjusted(&spec).unwrap();
            let more_var = DesignSpec { sigma2_y: spec.sigma2_y * f, ..spec };
            let bigger = DesignSpec { delta: spec.delta * f, ..spec };
            check(n_unadjusted(&more_var).unwrap() >= n, || "sigma2".into())?;
            check(n_unadjusted(&bigger).unwrap() <= n, || "delta".into())?;
            // residual variances between delta^2/4 and sigma2 + delta^2/4
            let effect = spec.delta * spec.delta / 4.0;
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let resid = |r: f64| effect + r * spec.sigma2_y;
            let pooled = effect + pooled_factor * spec.sigma2_y;
            let a = proposed_n_raw(n as f64, resid(lo), pooled, &spec).unwrap();
            let b = proposed_n_raw(n as f64, resid(hi), pooled, &spec).unwrap();
            check(b >= a, || format!("{a} > {b}"))?;
            check(even_ceil(b) >= even_ceil(a), || "rounded".into())
        })
        .map_err(|e| e.to_string())
}

/// Without the effect correction and with the design variance as
/// denominator, the proposed formula reduces to the simple one.
pub fn prop_comparator_identity(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(trial_data(3), 0.1..2.0f64, 1.0..50.0f64), |(d, delta, sigma2)| {
            let spec = DesignSpec::new(0.025, 0.8, delta, sigma2).unwrap().with_covariates(d.k());
            let opts = ProposedOptions {
                subtract_effect: false,
                denominator: DenominatorRule::DesignVariance,
                base: BaseSize::Raw,
            };
            let p = recalc_proposed_with(&d.blind(), &spec, n_unadjusted(&spec).unwrap(), opts);
            let s = recalc_simple(&d.blind(), &spec);
            match (p, s) {
                (Ok(p), Ok(s)) => check(rel_close(p.n_rec_raw, s.n_rec_raw, 1e-12), || {
                    format!("{} vs {}", p.n_rec_raw, s.n_rec_raw)
                }),
                (Err(_), Err(_)) => Ok(()),
                (p, s) => Err(TestCaseError::fail(format!("{p:?} / {s:?}"))),
            }
        })
        .map_err(|e| e.to_string())
}

/// Rescaling outcome, effect and variance together leaves the recalculated size unchanged.
pub fn prop_scale_equivariance(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(trial_data(3), 0.01..100.0f64), |(d, c)| {
            let spec = small_delta_design(d.k());
            let scaled_spec = DesignSpec {
                delta: spec.delta * c,
                sigma2_y: spec.sigma2_y * c * c,
                ..spec
            };
            let y: Vec<f64> = d.outcome().iter().map(|v| v * c).collect();
            let scaled = BlindedInterimData::new(y, d.covariates().clone()).unwrap();
            let n_unadj = n_unadjusted(&spec).unwrap();
            let a = recalc_proposed(&d.blind(), &spec, n_unadj);
            let b = recalc_proposed(&scaled, &scaled_spec, n_unadjusted(&scaled_spec).unwrap());
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    check(rel_close(a.n_rec_raw, b.n_rec_raw, 1e-9), || "raw size".into())?;
                    let frac = a.n_rec_raw - a.n_rec_raw.floor();
                    if frac > 1e-6 && frac < 1.0 - 1e-6 {
                        check(a.n_rec == b.n_rec, || "rounded size".into())?;
                    }
                    Ok(())
                }
                (Err(_), Err(_)) => Ok(()),
                (a, b) => Err(TestCaseError::fail(format!("{a:?} / {b:?}"))),
            }
        })
        .map_err(|e| e.to_string())
}

/// Location shifts leave estimate and SE alone; positive rescaling scales
/// both and leaves t and p unchanged.
pub fn prop_analysis_equivariance(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(trial_data(3), -50.0..50.0f64, 0.01..100.0f64), |(d, shift, c)| {
            let base = fit_ancova(&d, 0.025).unwrap();
            let with = |f: &dyn Fn(f64) -> f64| {
                let y = d.outcome().iter().map(|&v| f(v)).collect();
                fit_ancova(&UnblindedTrialData::new(d.arm().to_vec(), d.covariates().clone(), y).unwrap(), 0.025).unwrap()
            };
            let shifted = with(&|v| v + shift);
            let scaled = with(&|v| v * c);
            let tol = 1e-8;
            let abs_ok = |a: f64, b: f64, s: f64| (a - b).abs() <= tol * s.max(1.0);
            check(abs_ok(shifted.estimate, base.estimate, base.se + shift.abs()), || "shift estimate".into())?;
            check(rel_close(shifted.se, base.se, 1e-7), || "shift se".into())?;
            check(abs_ok(scaled.estimate, c * base.estimate, c * base.se), || "scale estimate".into())?;
            check(rel_close(scaled.se, c * base.se, 1e-9), || "scale se".into())?;
            check(abs_ok(scaled.t_stat, base.t_stat, 1.0), || "t".into())?;
            check((scaled.p_one_sided - base.p_one_sided).abs() <= 1e-9, || "p".into())
        })
        .map_err(|e| e.to_string())
}

/// A finite population: support points of `W` with probabilities, and an
/// outcome value for each (arm, point). Arms are equiprobable and
/// independent of `W`.
#[derive(Debug, Clone)]
pub struct Population {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub prob: Vec<f64>,
    pub y: [Vec<f64>; 2],
}

pub fn population() -> impl Strategy<Value = Population> {
    (1usize..=3, 0usize..6)
        .prop_flat_map(|(k, extra)| {
            let m = k + 2 + extra;
            (
                Just(k),
                vec(vec(-3.0..3.0f64, k), m),
                vec(0.05..1.0f64, m),
                vec(-5.0..5.0f64, m),
                vec(-5.0..5.0f64, m),
            )
        })
        .prop_map(|(k, points, raw, y0, y1)| {
            let total: f64 = raw.iter().sum();
            Population {
                k,
                points,
                prob: raw.iter().map(|p| p / total).collect(),
                y: [y0, y1],
            }
        })
}

/// Weighted least squares over the population; returns (coefficients, residual variance).
fn population_ls(pop: &Population, with_arm: bool) -> (DVector<f64>, f64) {
    let p = pop.k + 1 + with_arm as usize;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut rows = Vec::new();
    for a in 0..2 {
        for (j, w) in pop.points.iter().enumerate() {
            let mut x = vec![1.0];
            if with_arm {
                x.push(a as f64);
            }
            x.extend_from_slice(w);
            let x = DVector::from_vec(x);
            let wt = 0.5 * pop.prob[j];
            let y = pop.y[a][j];
            xtx += wt * &x * x.transpose();
            xty += wt * y * &x;
            rows.push((x, y, wt));
        }
    }
    let beta = xtx.lu().solve(&xty).expect("population design is nonsingular");
    let rv = rows.iter().map(|(x, y, wt)| wt * (y - x.dot(&beta)).powi(2)).sum();
    (beta, rv)
}

/// Residual-variance identity and slope coincidence on exact populations.
pub fn prop_population_identities(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&population(), |pop| {
            let k = pop.k;
            let (full, rv_full) = population_ls(&pop, true);
            let (reduced, rv_reduced) = population_ls(&pop, false);
            let arm_mean = |a: usize| pop.prob.iter().zip(&pop.y[a]).map(|(p, y)| p * y).sum::<f64>();
            let delta = arm_mean(1) - arm_mean(0);
            let scale = 1.0 + rv_reduced.abs() + delta * delta;
            check((rv_full - (rv_reduced - delta * delta / 4.0)).abs() <= 1e-10 * scale, || {
                format!("{rv_full} vs {rv_reduced} - {delta}^2/4")
            })?;
            check((full[1] - delta).abs() <= 1e-10 * (1.0 + delta.abs()), || "arm coefficient".into())?;
            // Var(W)^{-1} Cov(W, Y)
            let mw: DVector<f64> = pop
                .points
                .iter()
                .zip(&pop.prob)
                .fold(DVector::zeros(k), |acc, (w, p)| acc + *p * DVector::from_column_slice(w));
            let ey = 0.5 * (arm_mean(0) + arm_mean(1));
            let mut vw = DMatrix::<f64>::zeros(k, k);
            let mut cwy = DVector::<f64>::zeros(k);
            for (j, w) in pop.points.iter().enumerate() {
                let dw = DVector::from_column_slice(w) - &mw;
                vw += pop.prob[j] * &dw * dw.transpose();
                let ybar = 0.5 * (pop.y[0][j] + pop.y[1][j]);
                cwy += pop.prob[j] * (ybar - ey) * &dw;
            }
            let slope = vw.lu().solve(&cwy).expect("Var(W) nonsingular");
            for i in 0..k {
                let s = 1.0 + slope[i].abs();
                check((full[2 + i] - reduced[1 + i]).abs() <= 1e-10 * s, || format!("slope {i} full vs reduced"))?;
                check((reduced[1 + i] - slope[i]).abs() <= 1e-10 * s, || format!("slope {i} vs moment formula"))?;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
pub struct RecalcCase {
    pub file: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub delta: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub power: f64,
    pub expected_n: usize,
}

#[derive(Debug, Deserialize)]
struct RecalcFixtures {
    cases: Vec<RecalcCase>,
}

pub fn recalc_cases() -> Vec<RecalcCase> {
    let path = fixtures_dir().join("recalc").join("expected.json");
    let text = std::fs::read_to_string(path).expect("fixture index");
    serde_json::from_str::<RecalcFixtures>(&text).expect("fixture index parses").cases
}

/// Runs one fixture through the `recalc` command; returns the recalculated size.
pub fn run_recalc_case(case: &RecalcCase) -> Result<usize, String> {
    let args = RecalcArgs {
        data: fixtures_dir().join("recalc").join(&case.file),
        outcome: case.outcome.clone(),
        covariates: Some(case.covariates.clone()),
        design: DesignFlags {
            alpha: case.alpha,
            power: case.power,
            delta: case.delta,
            sigma2: case.sigma2,
            tau: 0.5,
            m: 2.0,
        },
        method: MethodArg::Proposed,
        deny_columns: None,
    };
    let out = cmd_recalc(&args).map_err(|e| e.to_string())?;
    let report: RecalcReport = parse_json_block(&out).map_err(|e| e.to_string())?;
    Ok(report.result.n_rec)
}
