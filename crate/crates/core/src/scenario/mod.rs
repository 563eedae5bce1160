//! Data-generating processes for the simulation scenarios.
//!
//! Every family is linear in the covariates within each arm, so population
//! moments (true effect, within-arm variance, residual variance after
//! adjustment) can be computed exactly from the first two moments of `W`.

mod actg175;
mod rng;

pub use actg175::{actg175, Actg175Params, Actg175Strategy, ArmModel, Reported};
pub use rng::RngStream;

use serde::{Deserialize, Serialize};

use crate::analysis::UnblindedTrialData;
use crate::error::{Error, Result};
use crate::stats::linalg::{cholesky, dot, solve_spd};
use crate::stats::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum ScenarioFamily {
    /// Bivariate normal covariates with correlation `w_corr`; each has
    /// within-arm correlation `yw_corr` with the outcome.
    S1 { w_corr: f64, yw_corr: f64 },
    /// `W1 ~ Ber(0.5)`, `W2 | W1 ~ N(mu * W1, 1)`, `Y = delta*A + beta*(W1 + W2) + e`.
    S2 { mu: f64, beta: f64 },
    /// `W1 ~ Ber(0.5)`, `W2 | W1 ~ Ber(0.5 + mu*(W1 - 0.5))`, same outcome model as S2.
    S3 { mu: f64, beta: f64 },
    /// ACTG 175 mimic with twelve covariates.
    S4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub family: ScenarioFamily,
    /// True treatment effect.
    pub delta: f64,
    /// Covariate columns handed to the analysis, indexing the family's full
    /// covariate vector.
    pub adjustment_set: Vec<usize>,
}

impl ScenarioSpec {
    pub fn s1(delta: f64, w_corr: f64, yw_corr: f64) -> Self {
        Self {
            family: ScenarioFamily::S1 { w_corr, yw_corr },
            delta,
            adjustment_set: vec![0, 1],
        }
    }

    pub fn s2(delta: f64, mu: f64, beta: f64) -> Self {
        Self {
            family: ScenarioFamily::S2 { mu, beta },
            delta,
            adjustment_set: vec![0, 1],
        }
    }

    pub fn s3(delta: f64, mu: f64, beta: f64) -> Self {
        Self {
            family: ScenarioFamily::S3 { mu, beta },
            delta,
            adjustment_set: vec![0, 1],
        }
    }

    /// The ACTG 175 mimic at its reported effect size.
    pub fn s4(strategy: Actg175Strategy) -> Self {
        Self::s4_with_delta(actg175().reported.true_effect, strategy)
    }

    pub fn s4_with_delta(delta: f64, strategy: Actg175Strategy) -> Self {
        Self {
            family: ScenarioFamily::S4,
            delta,
            adjustment_set: strategy.indices(),
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Size of the family's full covariate vector.
    pub fn n_covariates(&self) -> usize {
        match self.family {
            ScenarioFamily::S4 => actg175().n_covariates(),
            _ => 2,
        }
    }

    /// Number of covariates used in the analysis.
    pub fn k(&self) -> usize {
        self.adjustment_set.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if !self.delta.is_finite() {
            return bad(format!("delta must be finite, got {}", self.delta));
        }
        let q = self.n_covariates();
        for (i, &j) in self.adjustment_set.iter().enumerate() {
            if j >= q {
                return bad(format!("adjustment index {j} out of range for {q} covariates"));
            }
            if self.adjustment_set[..i].contains(&j) {
                return bad(format!("adjustment index {j} repeated"));
            }
        }
        match self.family {
            ScenarioFamily::S1 { w_corr, yw_corr } => {
                if !(w_corr.abs() < 1.0) {
                    return bad(format!("covariate correlation {w_corr} must lie in (-1, 1)"));
                }
                if !yw_corr.is_finite() || !(2.0 * yw_corr * yw_corr / (1.0 + w_corr) < 1.0) {
                    return bad(format!(
                        "outcome-covariate correlation {yw_corr} leaves no error variance"
                    ));
                }
            }
            ScenarioFamily::S2 { mu, beta } | ScenarioFamily::S3 { mu, beta } => {
                if !mu.is_finite() || !beta.is_finite() {
                    return bad("scenario parameters must be finite".into());
                }
                if matches!(self.family, ScenarioFamily::S3 { .. }) && mu.abs() > 1.0 {
                    return bad(format!("conditional probabilities 0.5 +/- {mu}/2 leave [0, 1]"));
                }
                let v = linear_predictor_variance(&[beta, beta], &covariate_moments(&self.family).1);
                if !(v < 1.0) {
                    return bad(format!("linear predictor variance {v} is not below 1"));
                }
            }
            ScenarioFamily::S4 => {}
        }
        Ok(())
    }
}

fn linear_predictor_variance(c: &[f64], cov: &Matrix) -> f64 {
    dot(c, &cov.matvec(c).expect("coefficient length matches covariance"))
}

/// Mean and covariance of the full covariate vector.
fn covariate_moments(family: &ScenarioFamily) -> (Vec<f64>, Matrix) {
    match *family {
        ScenarioFamily::S1 { w_corr, .. } => (
            vec![0.0, 0.0],
            Matrix::from_rows(&[[1.0, w_corr], [w_corr, 1.0]]).expect("2x2"),
        ),
        ScenarioFamily::S2 { mu, .. } => (
            vec![0.5, 0.5 * mu],
            Matrix::from_rows(&[[0.25, 0.25 * mu], [0.25 * mu, 1.0 + 0.25 * mu * mu]]).expect("2x2"),
        ),
        ScenarioFamily::S3 { mu, .. } => (
            vec![0.5, 0.5],
            Matrix::from_rows(&[[0.25, 0.25 * mu], [0.25 * mu, 0.25]]).expect("2x2"),
        ),
        ScenarioFamily::S4 => {
            let p = actg175();
            (p.covariate_mean(), p.covariate_cov())
        }
    }
}

#[derive(Debug, Clone)]
enum CovariateSampler {
    Gaussian { mean: Vec<f64>, chol: Matrix },
    BinaryNormal { mu: f64 },
    BinaryBinary { mu: f64 },
    Mixed { mean: Vec<f64>, chol: Matrix, prob: Vec<f64> },
}

fn draw_gaussian(mean: &[f64], chol: &Matrix, rng: &mut RngStream, z: &mut [f64], out: &mut [f64]) {
    let p = mean.len();
    for v in z.iter_mut().take(p) {
        *v = rng.standard_normal();
    }
    for i in 0..p {
        let row = chol.row(i);
        out[i] = mean[i] + dot(&row[..=i], &z[..=i]);
    }
}

impl CovariateSampler {
    fn draw(&self, rng: &mut RngStream, z: &mut [f64], out: &mut [f64]) {
        match self {
            Self::Gaussian { mean, chol } => draw_gaussian(mean, chol, rng, z, out),
            Self::BinaryNormal { mu } => {
                let w1 = if rng.bernoulli(0.5) { 1.0 } else { 0.0 };
                out[0] = w1;
                out[1] = mu * w1 + rng.standard_normal();
            }
            Self::BinaryBinary { mu } => {
                let w1 = if rng.bernoulli(0.5) { 1.0 } else { 0.0 };
                out[0] = w1;
                out[1] = if rng.bernoulli(0.5 + mu * (w1 - 0.5)) { 1.0 } else { 0.0 };
            }
            Self::Mixed { mean, chol, prob } => {
                let p = mean.len();
                draw_gaussian(mean, chol, rng, z, out);
                for (o, &pr) in out[p..].iter_mut().zip(prob) {
                    *o = if rng.bernoulli(pr) { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

/// A validated scenario with everything needed to sample precomputed.
#[derive(Debug, Clone)]
pub struct ScenarioModel {
    spec: ScenarioSpec,
    sampler: CovariateSampler,
    /// Index 0 is control, 1 is experimental.
    arms: [ArmModel; 2],
    w_mean: Vec<f64>,
    w_cov: Matrix,
}

impl ScenarioModel {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let (w_mean, w_cov) = covariate_moments(&spec.family);
        let symmetric = |c: Vec<f64>, error_var: f64| {
            let control = ArmModel {
                intercept: 0.0,
                coefficients: c,
                error_sd: error_var.sqrt(),
            };
            let treated = ArmModel {
                intercept: spec.delta,
                ..control.clone()
            };
            [control, treated]
        };
        let (sampler, arms) = match spec.family {
            ScenarioFamily::S1 { w_corr, yw_corr } => {
                let b = yw_corr / (1.0 + w_corr);
                let sampler = CovariateSampler::Gaussian {
                    mean: w_mean.clone(),
                    chol: cholesky(&w_cov)?,
                };
                (sampler, symmetric(vec![b, b], 1.0 - 2.0 * yw_corr * b))
            }
            ScenarioFamily::S2 { mu, beta } | ScenarioFamily::S3 { mu, beta } => {
                let c = vec![beta, beta];
                let err = 1.0 - linear_predictor_variance(&c, &w_cov);
                let sampler = if matches!(spec.family, ScenarioFamily::S2 { .. }) {
                    CovariateSampler::BinaryNormal { mu }
                } else {
                    CovariateSampler::BinaryBinary { mu }
                };
                (sampler, symmetric(c, err))
            }
            ScenarioFamily::S4 => {
                let p = actg175();
                let sampler = CovariateSampler::Mixed {
                    mean: p.continuous_mean.clone(),
                    chol: cholesky(&p.continuous_cov)?,
                    prob: p.binary_prob.clone(),
                };
                // Shift the experimental intercept so the effect is exactly delta.
                let mut treated = p.treated.clone();
                treated.intercept += spec.delta - p.raw_effect();
                (sampler, [p.control.clone(), treated])
            }
        };
        Ok(Self {
            spec: spec.clone(),
            sampler,
            arms,
            w_mean,
            w_cov,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    /// Arm-specific outcome models over the full covariate vector.
    pub fn arm_models(&self) -> &[ArmModel; 2] {
        &self.arms
    }

    /// Draws `n` subjects: arm, covariates, then outcome error, in that order.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<UnblindedTrialData> {
        let q = self.w_mean.len();
        let adj = &self.spec.adjustment_set;
        let mut full = vec![0.0; q];
        let mut z = vec![0.0; q];
        let mut arm = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n * adj.len());
        for _ in 0..n {
            let a = rng.bernoulli(0.5);
            self.sampler.draw(rng, &mut z, &mut full);
            let m = &self.arms[a as usize];
            y.push(m.intercept + dot(&m.coefficients, &full) + m.error_sd * rng.standard_normal());
            arm.push(a);
            w.extend(adj.iter().map(|&j| full[j]));
        }
        UnblindedTrialData::new(arm, Matrix::from_row_major(n, adj.len(), w)?, y)
    }

    pub fn population(&self) -> PopulationMoments {
        let (m, c) = (&self.w_mean, &self.w_cov);
        let q = m.len();
        // E[W W^T]
        let mut second = c.clone();
        for i in 0..q {
            for j in 0..q {
                second[(i, j)] += m[i] * m[j];
            }
        }
        let arm_mean = |a: &ArmModel| a.intercept + dot(&a.coefficients, m);
        let arm_var = |a: &ArmModel| linear_predictor_variance(&a.coefficients, c) + a.error_sd * a.error_sd;
        let [ctl, trt] = &self.arms;
        let true_effect = arm_mean(trt) - arm_mean(ctl);
        let within = 0.5 * (arm_var(ctl) + arm_var(trt));

        // Exact population least squares of Y on (1, A, W_S), P(A = 1) = 1/2.
        let s = &self.spec.adjustment_set;
        let p = 2 + s.len();
        let mut xx = Matrix::zeros(p, p);
        let mut xy = vec![0.0; p];
        xx[(0, 0)] = 1.0;
        xx[(0, 1)] = 0.5;
        xx[(1, 0)] = 0.5;
        xx[(1, 1)] = 0.5;
        for (u, &i) in s.iter().enumerate() {
            xx[(0, 2 + u)] = m[i];
            xx[(2 + u, 0)] = m[i];
            xx[(1, 2 + u)] = 0.5 * m[i];
            xx[(2 + u, 1)] = 0.5 * m[i];
            for (v, &j) in s.iter().enumerate() {
                xx[(2 + u, 2 + v)] = second[(i, j)];
            }
        }
        let mut ey2 = 0.0;
        for (a, arm) in [ctl, trt].into_iter().enumerate() {
            let mu = arm_mean(arm);
            xy[0] += 0.5 * mu;
            if a == 1 {
                xy[1] += 0.5 * mu;
            }
            let ewc = second.matvec(&arm.coefficients).expect("sizes match");
            for (u, &i) in s.iter().enumerate() {
                xy[2 + u] += 0.5 * (arm.intercept * m[i] + ewc[i]);
            }
            let e_lin2 = arm.intercept * arm.intercept
                + 2.0 * arm.intercept * dot(&arm.coefficients, m)
                + dot(&arm.coefficients, &ewc);
            ey2 += 0.5 * (e_lin2 + arm.error_sd * arm.error_sd);
        }
        let beta = solve_spd(&xx, &xy).expect("population design is positive definite");
        let residual = ey2 - dot(&beta, &xy);
        PopulationMoments {
            true_effect,
            within_arm_variance: within,
            residual_variance_given_w: residual,
            asymptotic_relative_efficiency: residual / within,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationMoments {
    pub true_effect: f64,
    /// Average of the two within-arm outcome variances.
    pub within_arm_variance: f64,
    /// Variance of the population ANCOVA residual on the adjustment set.
    pub residual_variance_given_w: f64,
    pub asymptotic_relative_efficiency: f64,
}

pub fn gen_scenario(spec: &ScenarioSpec, n: usize, rng: &mut RngStream) -> Result<UnblindedTrialData> {
    ScenarioModel::new(spec)?.sample(n, rng)
}

pub fn population_oracle(spec: &ScenarioSpec) -> Result<PopulationMoments> {
    Ok(ScenarioModel::new(spec)?.population())
}

/// `n` draws from `N(mean, cov)`, one per row.
pub fn mvn_sample(mean: &[f64], cov: &Matrix, n: usize, rng: &mut RngStream) -> Result<Matrix> {
    let p = mean.len();
    if cov.nrows() != p || cov.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {p} with {}x{} covariance",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let chol = cholesky(cov)?;
    let mut z = vec![0.0; p];
    let mut row = vec![0.0; p];
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n {
        draw_gaussian(mean, &chol, rng, &mut z, &mut row);
        data.extend_from_slice(&row);
    }
    Matrix::from_row_major(n, p, data)
}
