//! Sample-size mathematics: the unadjusted two-sample formula, the blinded
//! ANCOVA recalculation, the simple residual-variance comparator, and the
//! clamp that turns a recalculated size into the final enrolment target.
//!
//! All totals are even (1:1 allocation). Rounding is always "ceil, then add
//! one if odd", applied to the raw real-valued size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{normal_quantile, ols_fit, sample_variance, Matrix};

/// Relative floor applied to a non-positive recalculation numerator.
pub const NUMERATOR_FLOOR: f64 = 1e-12;

/// Guard for products of decimal inputs such as `tau * n` that should be exact.
const INTEGER_SLACK: f64 = 1e-9;

/// Design-stage parameters. Fixed once the trial starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// One-sided type I error rate.
    pub alpha: f64,
    /// Target power `1 - beta`.
    pub power: f64,
    /// Prespecified treatment effect, in outcome units.
    pub delta: f64,
    /// Prespecified within-arm outcome variance.
    pub sigma2_y: f64,
    /// Interim fraction of the unadjusted sample size.
    pub tau: f64,
    /// Cap multiplier: the trial never enrols more than `m * N_unadj`.
    pub m: f64,
    /// Number of adjustment covariates.
    pub k: usize,
}

impl DesignSpec {
    /// A design with `tau = 0.5`, `m = 2` and no covariates.
    pub fn new(alpha: f64, power: f64, delta: f64, sigma2_y: f64) -> Result<Self> {
        let spec = DesignSpec {
            alpha,
            power,
            delta,
            sigma2_y,
            tau: 0.5,
            m: 2.0,
            k: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_interim(mut self, tau: f64, m: f64) -> Result<Self> {
        self.tau = tau;
        self.m = m;
        self.validate()?;
        Ok(self)
    }

    pub fn with_covariates(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidDesign(format!("{what} = {v}")));
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad("alpha must lie in (0, 0.5); got alpha", self.alpha);
        }
        if !(self.power > 0.5 && self.power < 1.0) {
            return bad("power must lie in (0.5, 1); got power", self.power);
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive; got delta", self.delta);
        }
        if !(self.sigma2_y > 0.0 && self.sigma2_y.is_finite()) {
            return bad("sigma2_y must be positive; got sigma2_y", self.sigma2_y);
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1); got tau", self.tau);
        }
        if !(self.m >= 1.0 && self.m.is_finite()) {
            return bad("m must be at least 1; got m", self.m);
        }
        Ok(())
    }

    /// `z_{1-alpha}`.
    pub fn z_alpha(&self) -> Result<f64> {
        normal_quantile(1.0 - self.alpha)
    }

    /// `z_{1-beta}`.
    pub fn z_beta(&self) -> Result<f64> {
        normal_quantile(self.power)
    }

    /// The small-sample t-test correction `z_{1-alpha}^2 / 2`.
    pub fn t_correction(&self) -> Result<f64> {
        let z = self.z_alpha()?;
        Ok(0.5 * z * z)
    }

    /// `4 (z_{1-alpha} + z_{1-beta})^2 / delta^2`, the size per unit variance.
    fn size_per_variance(&self) -> Result<f64> {
        let z = self.z_alpha()? + self.z_beta()?;
        Ok(4.0 * z * z / (self.delta * self.delta))
    }
}

/// Ceil a raw size and bump odd results to the next even number.
pub fn even_ceil(raw: f64) -> usize {
    let n = raw.ceil().max(0.0) as usize;
    n + n % 2
}

fn round_up_even(n: usize) -> usize {
    n + n % 2
}

/// Unrounded unadjusted total sample size.
pub fn n_unadjusted_raw(spec: &DesignSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.size_per_variance()? * spec.sigma2_y)
}

/// Unadjusted total sample size, rounded up to an even number.
pub fn n_unadjusted(spec: &DesignSpec) -> Result<usize> {
    n_unadjusted_raw(spec).map(even_ceil)
}

/// How `tau * N_unadj` becomes a subject count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterimRounding {
    /// `floor(tau * N_unadj)`; may be odd.
    Floor,
    /// `ceil(tau * N_unadj)` bumped to even.
    #[default]
    Even,
}

pub fn interim_size(spec: &DesignSpec, n_unadj: usize, rounding: InterimRounding) -> usize {
    let x = spec.tau * n_unadj as f64;
    match rounding {
        InterimRounding::Floor => (x + INTEGER_SLACK).floor() as usize,
        InterimRounding::Even => even_ceil(x - INTEGER_SLACK),
    }
}

/// Upper bound on enrolment, `m * N_unadj` rounded up to even.
pub fn max_size(spec: &DesignSpec, n_unadj: usize) -> usize {
    even_ceil(spec.m * n_unadj as f64 - INTEGER_SLACK)
}

/// `min{max{n_tau, n_rec}, n_max}` without any parity adjustment.
pub fn clamp_n(n_rec: usize, n_tau: usize, n_max: usize) -> usize {
    n_rec.max(n_tau).min(n_max)
}

/// Final sample size: clamp the recalculated size between the interim size
/// and the cap, then round up to even. Never exceeds the (even) cap.
pub fn finalize_n(n_rec: usize, n_tau: usize, spec: &DesignSpec, n_unadj: usize) -> usize {
    round_up_even(clamp_n(n_rec, n_tau, max_size(spec, n_unadj)))
}

/// Pooled interim data with treatment labels removed.
///
/// There is deliberately no field that could hold arm membership; the
/// recalculation functions only accept this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindedInterimData {
    y: Vec<f64>,
    w: Matrix,
}

impl BlindedInterimData {
    pub fn new(y: Vec<f64>, w: Matrix) -> Result<Self> {
        if w.nrows() != y.len() && !(w.ncols() == 0 && w.nrows() == 0) {
            return Err(Error::DimensionMismatch(format!(
                "{} outcomes but {} covariate rows",
                y.len(),
                w.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) || !w.is_finite() {
            return Err(Error::DomainError("non-finite value in interim data".into()));
        }
        let w = if w.nrows() == 0 {
            Matrix::zeros(y.len(), 0)
        } else {
            w
        };
        Ok(Self { y, w })
    }

    pub fn outcome(&self) -> &[f64] {
        &self.y
    }

    pub fn covariates(&self) -> &Matrix {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    /// Residual variance of `y ~ 1 + W` with divisor `n - 1 - k`.
    pub fn residual_variance(&self) -> Result<f64> {
        let (n, k) = (self.n(), self.k());
        if n < k + 3 {
            return Err(Error::TooFewObservations {
                needed: k + 3,
                got: n,
            });
        }
        Ok(ols_fit(&self.w.with_intercept(), &self.y)?.residual_variance)
    }

    /// Pooled sample variance of `y`, ignoring arms.
    pub fn pooled_variance(&self) -> Result<f64> {
        sample_variance(&self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecalcMethod {
    Proposed,
    Simple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecalcWarning {
    /// The residual variance did not exceed `delta^2/4`; the numerator was
    /// replaced by a tiny positive value and the interim clamp takes over.
    NumeratorFloored { raw: f64, floored_to: f64 },
}

/// Everything a recalculation computed, for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecalcOutcome {
    pub method: RecalcMethod,
    pub n_unadj: usize,
    pub n_tau: usize,
    /// Residual variance of the blinded regression of `y` on `W`.
    pub residual_variance: f64,
    /// Pooled variance of `y`.
    pub pooled_variance: f64,
    /// Proposed: residual variance minus `delta^2/4` (floored). Simple: the residual variance.
    pub numerator_estimate: f64,
    /// Proposed: `min{sigma2_y, pooled - delta^2/4}`. Simple: `sigma2_y`.
    pub denominator_estimate: f64,
    pub n_rec_raw: f64,
    pub n_rec: usize,
    pub n_max: usize,
    /// Clamped and rounded to even.
    pub n_fin: usize,
    /// Clamped only; equals `n_fin` unless the interim size is odd and binding.
    pub n_fin_clamped: usize,
    #[serde(default)]
    pub warnings: Vec<RecalcWarning>,
}

/// Denominator used by the proposed ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenominatorRule {
    /// `min{sigma2_y, pooled - delta^2/4}`.
    #[default]
    ClampedPooled,
    /// `pooled - delta^2/4` without the cap at `sigma2_y`.
    Pooled,
    /// The design variance `sigma2_y` itself.
    DesignVariance,
}

/// Multiplier in front of the variance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaseSize {
    /// The even-rounded `N_unadj`.
    #[default]
    Rounded,
    /// The unrounded `4 (z_a + z_b)^2 sigma2_y / delta^2`.
    Raw,
}

/// Switches for the proposed formula. The defaults give the method as
/// published; the others exist to test its relation to the simple formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProposedOptions {
    pub subtract_effect: bool,
    pub denominator: DenominatorRule,
    pub base: BaseSize,
}

impl Default for ProposedOptions {
    fn default() -> Self {
        Self {
            subtract_effect: true,
            denominator: DenominatorRule::ClampedPooled,
            base: BaseSize::Rounded,
        }
    }
}

/// Numerator and denominator of the proposed variance ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRatio {
    pub numerator: f64,
    pub denominator: f64,
    /// Numerator before flooring, when the floor was applied.
    pub floored_from: Option<f64>,
}

pub fn proposed_ratio(
    residual_variance: f64,
    pooled_variance: f64,
    spec: &DesignSpec,
    opts: ProposedOptions,
) -> Result<VarianceRatio> {
    let effect = if opts.subtract_effect {
        0.25 * spec.delta * spec.delta
    } else {
        0.0
    };
    let mut numerator = residual_variance - effect;
    let mut floored_from = None;
    let floor = NUMERATOR_FLOOR * spec.sigma2_y;
    if numerator <= floor {
        floored_from = Some(numerator);
        numerator = floor;
    }
    let denominator = match opts.denominator {
        DenominatorRule::ClampedPooled => spec.sigma2_y.min(pooled_variance - effect),
        DenominatorRule::Pooled => pooled_variance - effect,
        DenominatorRule::DesignVariance => spec.sigma2_y,
    };
    if !(denominator > 0.0) {
        return Err(Error::NonPositiveDenominator { value: denominator });
    }
    Ok(VarianceRatio {
        numerator,
        denominator,
        floored_from,
    })
}

/// Raw proposed size `n_base * numerator / denominator + z_{1-alpha}^2 / 2`.
pub fn proposed_n_raw(
    n_base: f64,
    residual_variance: f64,
    pooled_variance: f64,
    spec: &DesignSpec,
) -> Result<f64> {
    let r = proposed_ratio(residual_variance, pooled_variance, spec, ProposedOptions::default())?;
    Ok(n_base * r.numerator / r.denominator + spec.t_correction()?)
}

/// Raw simple size `4 (z_a + z_b)^2 / delta^2 * residual_variance + z_{1-alpha}^2 / 2`.
pub fn simple_n_raw(residual_variance: f64, spec: &DesignSpec) -> Result<f64> {
    Ok(spec.size_per_variance()? * residual_variance + spec.t_correction()?)
}

fn check_interim(data: &BlindedInterimData, spec: &DesignSpec) -> Result<()> {
    spec.validate()?;
    if data.k() != spec.k {
        return Err(Error::DimensionMismatch(format!(
            "design declares {} covariates but interim data has {}",
            spec.k,
            data.k()
        )));
    }
    Ok(())
}

/// Blinded ANCOVA recalculation with the published defaults.
pub fn recalc_proposed(
    data: &BlindedInterimData,
    spec: &DesignSpec,
    n_unadj: usize,
) -> Result<RecalcOutcome> {
    recalc_proposed_with(data, spec, n_unadj, ProposedOptions::default())
}

pub fn recalc_proposed_with(
    data: &BlindedInterimData,
    spec: &DesignSpec,
    n_unadj: usize,
    opts: ProposedOptions,
) -> Result<RecalcOutcome> {
    check_interim(data, spec)?;
    let residual_variance = data.residual_variance()?;
    let pooled_variance = data.pooled_variance()?;
    let ratio = proposed_ratio(residual_variance, pooled_variance, spec, opts)?;
    let base = match opts.base {
        BaseSize::Rounded => n_unadj as f64,
        BaseSize::Raw => n_unadjusted_raw(spec)?,
    };
    let n_rec_raw = base * ratio.numerator / ratio.denominator + spec.t_correction()?;
    let warnings = ratio
        .floored_from
        .map(|raw| RecalcWarning::NumeratorFloored {
            raw,
            floored_to: ratio.numerator,
        })
        .into_iter()
        .collect();
    Ok(assemble(
        RecalcMethod::Proposed,
        data,
        spec,
        n_unadj,
        residual_variance,
        pooled_variance,
        ratio.numerator,
        ratio.denominator,
        n_rec_raw,
        warnings,
    ))
}

/// Simple recalculation: the blinded residual variance replaces `sigma2_y`
/// in the unadjusted formula, plus the t correction.
pub fn recalc_simple(data: &BlindedInterimData, spec: &DesignSpec) -> Result<RecalcOutcome> {
    check_interim(data, spec)?;
    let n_unadj = n_unadjusted(spec)?;
    let residual_variance = data.residual_variance()?;
    let pooled_variance = data.pooled_variance()?;
    let n_rec_raw = simple_n_raw(residual_variance, spec)?;
    Ok(assemble(
        RecalcMethod::Simple,
        data,
        spec,
        n_unadj,
        residual_variance,
        pooled_variance,
        residual_variance,
        spec.sigma2_y,
        n_rec_raw,
        Vec::new(),
    ))
}

/// Dispatches on `method`.
pub fn recalculate(
    method: RecalcMethod,
    data: &BlindedInterimData,
    spec: &DesignSpec,
) -> Result<RecalcOutcome> {
    match method {
        RecalcMethod::Proposed => recalc_proposed(data, spec, n_unadjusted(spec)?),
        RecalcMethod::Simple => recalc_simple(data, spec),
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    method: RecalcMethod,
    data: &BlindedInterimData,
    spec: &DesignSpec,
    n_unadj: usize,
    residual_variance: f64,
    pooled_variance: f64,
    numerator_estimate: f64,
    denominator_estimate: f64,
    n_rec_raw: f64,
    warnings: Vec<RecalcWarning>,
) -> RecalcOutcome {
    let n_tau = data.n();
    let n_rec = even_ceil(n_rec_raw);
    let n_max = max_size(spec, n_unadj);
    RecalcOutcome {
        method,
        n_unadj,
        n_tau,
        residual_variance,
        pooled_variance,
        numerator_estimate,
        denominator_estimate,
        n_rec_raw,
        n_rec,
        n_max,
        n_fin: finalize_n(n_rec, n_tau, spec, n_unadj),
        n_fin_clamped: clamp_n(n_rec, n_tau, n_max),
        warnings,
    }
}
