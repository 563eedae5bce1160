//! Constants for the scenario that mimics the ACTG 175 trial, loaded from
//! `data/actg175_scenario.json`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Matrix;

const DATA: &str = include_str!("../../data/actg175_scenario.json");

#[derive(Debug, Deserialize)]
struct RawFile {
    version: u32,
    continuous: RawContinuous,
    binary: RawBinary,
    outcome: RawOutcome,
    reported: Reported,
    strategies: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Deserialize)]
struct RawContinuous {
    names: Vec<String>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    covariance_upper: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct RawBinary {
    names: Vec<String>,
    prob: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct RawOutcome {
    control: ArmModel,
    treated: ArmModel,
}

/// Linear outcome model for one arm: `intercept + coefficients . W + N(0, error_sd^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub error_sd: f64,
}

/// Population summaries published alongside the constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reported {
    pub true_effect: f64,
    pub within_arm_sd: f64,
    pub n_unadj: usize,
}

#[derive(Debug, Clone)]
pub struct Actg175Params {
    pub version: u32,
    pub continuous_names: Vec<String>,
    pub continuous_mean: Vec<f64>,
    pub continuous_cov: Matrix,
    pub binary_names: Vec<String>,
    pub binary_prob: Vec<f64>,
    pub control: ArmModel,
    pub treated: ArmModel,
    pub reported: Reported,
    strategies: BTreeMap<String, Vec<String>>,
}

impl Actg175Params {
    fn parse(text: &str) -> Result<Self> {
        let raw: RawFile = serde_json::from_str(text)?;
        let c = raw.continuous;
        let p = c.names.len();
        if c.mean.len() != p || c.sd.len() != p || c.covariance_upper.len() + 1 != p {
            return Err(Error::InvalidScenario("continuous block has inconsistent sizes".into()));
        }
        let mut cov = Matrix::zeros(p, p);
        for i in 0..p {
            cov[(i, i)] = c.sd[i] * c.sd[i];
        }
        for (i, row) in c.covariance_upper.iter().enumerate() {
            if row.len() != p - 1 - i {
                return Err(Error::InvalidScenario(format!("covariance row {i} has {} entries", row.len())));
            }
            for (off, &v) in row.iter().enumerate() {
                let j = i + 1 + off;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        if raw.binary.names.len() != raw.binary.prob.len() {
            return Err(Error::InvalidScenario("binary block has inconsistent sizes".into()));
        }
        let q = p + raw.binary.names.len();
        for arm in [&raw.outcome.control, &raw.outcome.treated] {
            if arm.coefficients.len() != q {
                return Err(Error::InvalidScenario(format!(
                    "outcome model has {} coefficients for {q} covariates",
                    arm.coefficients.len()
                )));
            }
        }
        Ok(Self {
            version: raw.version,
            continuous_names: c.names,
            continuous_mean: c.mean,
            continuous_cov: cov,
            binary_names: raw.binary.names,
            binary_prob: raw.binary.prob,
            control: raw.outcome.control,
            treated: raw.outcome.treated,
            reported: raw.reported,
            strategies: raw.strategies,
        })
    }

    /// Continuous covariates first, then binary ones.
    pub fn covariate_names(&self) -> Vec<&str> {
        self.continuous_names
            .iter()
            .chain(&self.binary_names)
            .map(String::as_str)
            .collect()
    }

    pub fn n_covariates(&self) -> usize {
        self.continuous_names.len() + self.binary_names.len()
    }

    pub fn covariate_mean(&self) -> Vec<f64> {
        self.continuous_mean.iter().copied().chain(self.binary_prob.iter().copied()).collect()
    }

    /// Covariance of the full covariate vector. The binary block is
    /// independent of everything else.
    pub fn covariate_cov(&self) -> Matrix {
        let q = self.n_covariates();
        let p = self.continuous_names.len();
        let mut out = Matrix::zeros(q, q);
        for i in 0..p {
            for j in 0..p {
                out[(i, j)] = self.continuous_cov[(i, j)];
            }
        }
        for (b, &pr) in self.binary_prob.iter().enumerate() {
            out[(p + b, p + b)] = pr * (1.0 - pr);
        }
        out
    }

    /// Difference of the two arm means at the covariate mean, using the
    /// constants as printed.
    pub fn raw_effect(&self) -> f64 {
        let m = self.covariate_mean();
        let mu = |arm: &ArmModel| arm.intercept + crate::stats::linalg::dot(&arm.coefficients, &m);
        mu(&self.treated) - mu(&self.control)
    }

    /// Column indices of the covariates used by adjustment strategy `s`.
    pub fn strategy_indices(&self, s: Actg175Strategy) -> Vec<usize> {
        let names = self.covariate_names();
        self.strategies
            .get(&(s as u8).to_string())
            .map(|list| {
                list.iter()
                    .filter_map(|n| names.iter().position(|m| m == n))
                    .collect()
            })
            .unwrap_or_default()
    }
}

pub fn actg175() -> &'static Actg175Params {
    static PARAMS: OnceLock<Actg175Params> = OnceLock::new();
    PARAMS.get_or_init(|| Actg175Params::parse(DATA).expect("bundled scenario constants are valid"))
}

/// Covariate adjustment strategies (1)-(6) for the ACTG 175 analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Actg175Strategy {
    Cd4 = 1,
    History = 2,
    Cd4History = 3,
    AllContinuous = 4,
    AllBinary = 5,
    All = 6,
}

impl Actg175Strategy {
    pub const ALL: [Actg175Strategy; 6] = [
        Self::Cd4,
        Self::History,
        Self::Cd4History,
        Self::AllContinuous,
        Self::AllBinary,
        Self::All,
    ];

    pub fn indices(self) -> Vec<usize> {
        actg175().strategy_indices(self)
    }
}

impl TryFrom<u8> for Actg175Strategy {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Self::ALL
            .get((v as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::InvalidScenario(format!("adjustment strategy must be 1-6, got {v}")))
    }
}

impl From<Actg175Strategy> for u8 {
    fn from(s: Actg175Strategy) -> u8 {
        s as u8
    }
}
