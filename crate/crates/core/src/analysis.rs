//! Unblinded final analysis: ANCOVA and unadjusted treatment-effect estimates
//! with model-based standard errors, one-sided t-tests and 95% intervals.

use serde::{Deserialize, Serialize};

use crate::design::BlindedInterimData;
use crate::error::{Error, Result};
use crate::stats::linalg::solve_spd;
use crate::stats::{
    linalg::dot, ols_fit, sample_covariance, sample_covariance_matrix, sample_variance, t_cdf,
    t_quantile, Matrix, OlsFit,
};

/// Level of the reported two-sided confidence interval.
pub const CI_LEVEL: f64 = 0.95;

/// Subject-level trial data with arm labels. `arm[i] == true` is the
/// experimental arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnblindedTrialData {
    arm: Vec<bool>,
    w: Matrix,
    y: Vec<f64>,
}

impl UnblindedTrialData {
    pub fn new(arm: Vec<bool>, w: Matrix, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if arm.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} arm labels for {n} outcomes",
                arm.len()
            )));
        }
        let w = if w.nrows() == 0 && w.ncols() == 0 {
            Matrix::zeros(n, 0)
        } else {
            w
        };
        if w.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate rows for {n} outcomes",
                w.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) || !w.is_finite() {
            return Err(Error::DomainError("non-finite value in trial data".into()));
        }
        Ok(Self { arm, w, y })
    }

    pub fn arm(&self) -> &[bool] {
        &self.arm
    }

    pub fn covariates(&self) -> &Matrix {
        &self.w
    }

    pub fn outcome(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    /// Arm indicator as 0.0 / 1.0.
    pub fn arm_indicator(&self) -> Vec<f64> {
        self.arm.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect()
    }

    /// Number of subjects in the (control, experimental) arms.
    pub fn arm_sizes(&self) -> (usize, usize) {
        let treated = self.arm.iter().filter(|&&a| a).count();
        (self.n() - treated, treated)
    }

    /// Drops the arm labels.
    pub fn blind(&self) -> BlindedInterimData {
        BlindedInterimData::new(self.y.clone(), self.w.clone())
            .expect("validated trial data is valid blinded data")
    }

    /// Appends the subjects of `other`.
    pub fn concat(&self, other: &UnblindedTrialData) -> Result<UnblindedTrialData> {
        let w = self.w.vstack(&other.w)?;
        let mut arm = self.arm.clone();
        arm.extend_from_slice(&other.arm);
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        UnblindedTrialData::new(arm, w, y)
    }

    pub fn select_covariates(&self, idx: &[usize]) -> Result<UnblindedTrialData> {
        Ok(UnblindedTrialData {
            arm: self.arm.clone(),
            w: self.w.select_columns(idx)?,
            y: self.y.clone(),
        })
    }

    /// Reorders subjects; `order` must be a permutation of `0..n`.
    pub fn reorder(&self, order: &[usize]) -> UnblindedTrialData {
        UnblindedTrialData {
            arm: order.iter().map(|&i| self.arm[i]).collect(),
            w: self.w.select_rows(order),
            y: order.iter().map(|&i| self.y[i]).collect(),
        }
    }

    fn require_both_arms(&self) -> Result<()> {
        match self.arm_sizes() {
            (0, _) => Err(Error::SingleArm { present: 1 }),
            (_, 0) => Err(Error::SingleArm { present: 0 }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisModel {
    Ancova,
    Unadjusted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub model: AnalysisModel,
    /// Experimental minus control.
    pub estimate: f64,
    #[serde(with = "nonfinite")]
    pub se: f64,
    pub df: usize,
    #[serde(with = "nonfinite")]
    pub t_stat: f64,
    /// Upper-tail p-value for `H0: effect <= 0`.
    pub p_one_sided: f64,
    #[serde(with = "nonfinite")]
    pub ci_low: f64,
    #[serde(with = "nonfinite")]
    pub ci_high: f64,
    pub alpha: f64,
    pub rejected: bool,
    pub n: usize,
}

/// JSON has no infinities or NaN; write them as `"inf"`, `"-inf"`, `"NaN"`.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("NaN")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "NaN" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

fn finish(
    model: AnalysisModel,
    estimate: f64,
    se: f64,
    df: usize,
    alpha: f64,
    n: usize,
) -> Result<AnalysisResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::DomainError(format!("alpha {alpha} not in (0, 1)")));
    }
    let dff = df as f64;
    let t_stat = if se > 0.0 {
        estimate / se
    } else if estimate > 0.0 {
        f64::INFINITY
    } else if estimate < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let p_one_sided = t_cdf(-t_stat, dff)?;
    let half_width = t_quantile(0.5 + 0.5 * CI_LEVEL, dff)? * se;
    Ok(AnalysisResult {
        model,
        estimate,
        se,
        df,
        t_stat,
        p_one_sided,
        ci_low: estimate - half_width,
        ci_high: estimate + half_width,
        alpha,
        rejected: p_one_sided < alpha,
        n,
    })
}

/// OLS of `y ~ 1 + A + W`, returning the fit alongside the analysis.
pub fn ancova_with_fit(data: &UnblindedTrialData, alpha: f64) -> Result<(AnalysisResult, OlsFit)> {
    data.require_both_arms()?;
    let (n, k) = (data.n(), data.k());
    if n < k + 4 {
        return Err(Error::TooFewObservations {
            needed: k + 4,
            got: n,
        });
    }
    let a = data.arm_indicator();
    let x = data.w.with_leading_columns(&[&a]);
    let fit = ols_fit(&x, &data.y)?;
    let estimate = fit.coefficients[1];

    // Model-based variance written through sample moments:
    // Var(resid) / ((n-1) * (Var(A) - Cov(W,A)' Var(W)^{-1} Cov(W,A))).
    let mut a_given_w = sample_variance(&a)?;
    if k > 0 {
        let cov_wa = sample_covariance(&data.w, &a)?;
        let var_w = sample_covariance_matrix(&data.w)?;
        let coef = solve_spd(&var_w, &cov_wa).map_err(|_| Error::RankDeficient { column: 2 })?;
        a_given_w -= dot(&cov_wa, &coef);
    }
    let denom = (n - 1) as f64 * a_given_w;
    if !(denom > 0.0) {
        return Err(Error::RankDeficient { column: 1 });
    }
    let se = (fit.residual_variance / denom).sqrt();
    let result = finish(AnalysisModel::Ancova, estimate, se, fit.df_residual, alpha, n)?;
    Ok((result, fit))
}

/// ANCOVA without treatment-covariate interactions.
pub fn fit_ancova(data: &UnblindedTrialData, alpha: f64) -> Result<AnalysisResult> {
    ancova_with_fit(data, alpha).map(|(r, _)| r)
}

/// Difference in arm means with the pooled-variance two-sample t-test.
pub fn fit_unadjusted(data: &UnblindedTrialData, alpha: f64) -> Result<AnalysisResult> {
    data.require_both_arms()?;
    let n = data.n();
    if n < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: n });
    }
    let (means, ss, counts) = arm_moments(data);
    let estimate = means[1] - means[0];
    let pooled = (ss[0] + ss[1]) / (n - 2) as f64;
    let se = (pooled * (1.0 / counts[0] + 1.0 / counts[1])).sqrt();
    finish(AnalysisModel::Unadjusted, estimate, se, n - 2, alpha, n)
}

fn arm_moments(data: &UnblindedTrialData) -> ([f64; 2], [f64; 2], [f64; 2]) {
    let mut sums = [0.0; 2];
    let mut counts = [0.0; 2];
    for (&a, &y) in data.arm.iter().zip(&data.y) {
        sums[a as usize] += y;
        counts[a as usize] += 1.0;
    }
    let means = [sums[0] / counts[0], sums[1] / counts[1]];
    let mut ss = [0.0; 2];
    for (&a, &y) in data.arm.iter().zip(&data.y) {
        let d = y - means[a as usize];
        ss[a as usize] += d * d;
    }
    (means, ss, counts)
}

/// Plug-in relative efficiency: sample variance of the ANCOVA residuals over
/// that of the arm-mean residuals.
pub fn estimate_relative_efficiency(data: &UnblindedTrialData) -> Result<f64> {
    let (_, fit) = ancova_with_fit(data, 0.025)?;
    let (means, _, _) = arm_moments(data);
    let unadj: Vec<f64> = data
        .arm
        .iter()
        .zip(&data.y)
        .map(|(&a, &y)| y - means[a as usize])
        .collect();
    let denom = sample_variance(&unadj)?;
    if !(denom > 0.0) {
        return Err(Error::DomainError(
            "outcome is constant within arms; relative efficiency undefined".into(),
        ));
    }
    Ok(sample_variance(&fit.residuals)? / denom)
}
