//! File formats: subject-level trial CSVs and the JSON simulation config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::UnblindedTrialData;
use crate::design::{BlindedInterimData, InterimRounding};
use crate::error::{Error, Result};
use crate::scenario::Actg175Strategy;
use crate::sim::{FinalRounding, Method};
use crate::stats::Matrix;

/// Column names that look like treatment labels. Matched case-insensitively.
pub const DEFAULT_ARM_DENY_LIST: &[&str] =
    &["arm", "arms", "treat", "treatment", "trt", "group", "allocation", "a"];

/// A numeric CSV with a header row. Every cell must parse as a number.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialCsv {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl TrialCsv {
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(Error::Parse {
                row: 1,
                column: String::new(),
                message: "missing header row".into(),
            });
        }
        for (i, h) in headers.iter().enumerate() {
            if headers[..i].contains(h) {
                return Err(Error::Parse {
                    row: 1,
                    column: h.clone(),
                    message: "duplicate column name".into(),
                });
            }
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            // line 1 is the header
            let row = i + 2;
            for (j, h) in headers.iter().enumerate() {
                let cell = rec.get(j).unwrap_or("");
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: h.clone(),
                    message: if cell.is_empty() {
                        "missing value".into()
                    } else {
                        format!("'{cell}' is not a number")
                    },
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: h.clone(),
                        message: format!("'{cell}' is not finite"),
                    });
                }
                columns[j].push(v);
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    }

    /// First header matching `deny` case-insensitively.
    pub fn find_arm_like(&self, deny: &[impl AsRef<str>]) -> Option<&str> {
        self.headers
            .iter()
            .find(|h| deny.iter().any(|d| d.as_ref().eq_ignore_ascii_case(h)))
            .map(String::as_str)
    }

    fn covariate_matrix(&self, names: &[String]) -> Result<Matrix> {
        let cols = names.iter().map(|c| self.column(c)).collect::<Result<Vec<_>>>()?;
        Matrix::from_columns(self.n_rows(), &cols)
    }

    /// Columns other than those in `exclude`, in file order.
    pub fn other_columns(&self, exclude: &[&str]) -> Vec<String> {
        self.headers
            .iter()
            .filter(|h| !exclude.contains(&h.as_str()))
            .cloned()
            .collect()
    }

    /// Pooled interim data. Refuses files carrying anything that looks like a
    /// treatment label, whether or not it was requested as a covariate.
    pub fn blinded(&self, outcome: &str, covariates: &[String], deny: &[impl AsRef<str>]) -> Result<BlindedInterimData> {
        if let Some(col) = self.find_arm_like(deny) {
            return Err(Error::ArmColumnPresent { column: col.to_owned() });
        }
        let y = self.column(outcome)?.to_vec();
        BlindedInterimData::new(y, self.covariate_matrix(covariates)?)
    }

    /// Trial data with arm labels coded 0 (control) / 1 (experimental).
    pub fn unblinded(&self, arm: &str, outcome: &str, covariates: &[String]) -> Result<UnblindedTrialData> {
        let labels = self.column(arm).map_err(|_| Error::MissingArmColumn { column: arm.to_owned() })?;
        let arm_flags = labels
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                _ => Err(Error::Parse {
                    row: i + 2,
                    column: arm.to_owned(),
                    message: format!("arm must be 0 or 1, got {v}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        let y = self.column(outcome)?.to_vec();
        UnblindedTrialData::new(arm_flags, self.covariate_matrix(covariates)?, y)
    }
}

/// Parameter grid for one scenario family; every list is crossed with every other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", try_from = "RawGrid")]
pub enum ScenarioGrid {
    S1 { w_corr: Vec<f64>, yw_corr: Vec<f64> },
    S2 { mu: Vec<f64>, beta: Vec<f64> },
    S3 { mu: Vec<f64>, beta: Vec<f64> },
    S4 { strategies: Vec<Actg175Strategy> },
}

#[derive(Debug, Clone, Copy, Deserialize)]
enum FamilyTag {
    S1,
    S2,
    S3,
    S4,
}

// Flat mirror of `ScenarioGrid`. Deserializing through it keeps precise
// error paths, which an internally tagged enum would lose.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    family: FamilyTag,
    w_corr: Option<Vec<f64>>,
    yw_corr: Option<Vec<f64>>,
    mu: Option<Vec<f64>>,
    beta: Option<Vec<f64>>,
    strategies: Option<Vec<Actg175Strategy>>,
}

impl TryFrom<RawGrid> for ScenarioGrid {
    type Error = String;

    fn try_from(r: RawGrid) -> std::result::Result<Self, String> {
        let need = |v: Option<Vec<f64>>, name: &str| v.ok_or_else(|| format!("missing field `{name}`"));
        let forbid = |present: bool, name: &str, family: &str| {
            if present {
                Err(format!("field `{name}` does not apply to family {family}"))
            } else {
                Ok(())
            }
        };
        match r.family {
            FamilyTag::S1 => {
                forbid(r.mu.is_some() || r.beta.is_some(), "mu/beta", "S1")?;
                forbid(r.strategies.is_some(), "strategies", "S1")?;
                Ok(Self::S1 {
                    w_corr: need(r.w_corr, "w_corr")?,
                    yw_corr: need(r.yw_corr, "yw_corr")?,
                })
            }
            FamilyTag::S2 | FamilyTag::S3 => {
                let fam = if matches!(r.family, FamilyTag::S2) { "S2" } else { "S3" };
                forbid(r.w_corr.is_some() || r.yw_corr.is_some(), "w_corr/yw_corr", fam)?;
                forbid(r.strategies.is_some(), "strategies", fam)?;
                let (mu, beta) = (need(r.mu, "mu")?, need(r.beta, "beta")?);
                Ok(if fam == "S2" {
                    Self::S2 { mu, beta }
                } else {
                    Self::S3 { mu, beta }
                })
            }
            FamilyTag::S4 => {
                forbid(
                    r.w_corr.is_some() || r.yw_corr.is_some() || r.mu.is_some() || r.beta.is_some(),
                    "w_corr/yw_corr/mu/beta",
                    "S4",
                )?;
                Ok(Self::S4 {
                    strategies: r.strategies.ok_or("missing field `strategies`")?,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBlock {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    /// Design-stage within-arm variance.
    pub sigma2_y: f64,
    /// Multiplies `sigma2_y`, for misspecification studies.
    #[serde(default = "one")]
    pub sigma2_scale: f64,
    /// Design effect; defaults to each cell's true effect.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_m")]
    pub m: f64,
}

fn default_alpha() -> f64 {
    0.025
}
fn default_power() -> f64 {
    0.8
}
fn one() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    0.5
}
fn default_m() -> f64 {
    2.0
}
fn default_methods() -> Vec<Method> {
    vec![Method::Proposed, Method::Simple]
}
fn default_floor() -> InterimRounding {
    InterimRounding::Floor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: ScenarioGrid,
    /// True effects to simulate; each is also the design effect unless
    /// `design.delta` is set.
    pub delta: Vec<f64>,
    pub design: DesignBlock,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Simulate under a true effect of zero while designing for `delta`.
    #[serde(default)]
    pub null_effect: bool,
    #[serde(default = "default_floor")]
    pub interim_rounding: InterimRounding,
    #[serde(default)]
    pub final_rounding: FinalRounding,
    /// Summary CSV path; standard output when absent.
    #[serde(default)]
    pub output: Option<String>,
    /// Optional per-replicate CSV.
    #[serde(default)]
    pub replicate_output: Option<String>,
}

impl SimConfig {
    /// Parses and validates, reporting schema errors with a JSON pointer.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: SimConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            use serde_path_to_error::Segment;
            let pointer: String = e
                .path()
                .iter()
                .filter_map(|seg| match seg {
                    Segment::Seq { index } => Some(format!("/{index}")),
                    Segment::Map { key } => Some(format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
                    Segment::Enum { .. } | Segment::Unknown => None,
                })
                .collect();
            Error::Config {
                pointer,
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let err = |pointer: &str, message: &str| {
            Err(Error::Config {
                pointer: pointer.into(),
                message: message.into(),
            })
        };
        if self.delta.is_empty() {
            return err("/delta", "at least one effect size is required");
        }
        if self.methods.is_empty() {
            return err("/methods", "at least one method is required");
        }
        if self.replicates < 2 {
            return err("/replicates", "at least 2 replicates are required");
        }
        let empty = match &self.scenario {
            ScenarioGrid::S1 { w_corr, yw_corr } => w_corr.is_empty() || yw_corr.is_empty(),
            ScenarioGrid::S2 { mu, beta } | ScenarioGrid::S3 { mu, beta } => mu.is_empty() || beta.is_empty(),
            ScenarioGrid::S4 { strategies } => strategies.is_empty(),
        };
        if empty {
            return err("/scenario", "every parameter list needs at least one value");
        }
        if !(self.design.sigma2_y > 0.0) || !(self.design.sigma2_scale > 0.0) {
            return err("/design", "sigma2_y and sigma2_scale must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str) -> Result<TrialCsv> {
        TrialCsv::from_reader(text.as_bytes())
    }

    #[test]
    fn parses_columns() {
        let t = csv("y,w1,w2\n1,0,2.5\n2, 1 ,3\n").unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.column("w1").unwrap(), &[0.0, 1.0]);
        assert!(matches!(t.column("zz"), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn parse_error_names_row_and_column() {
        match csv("y,w\n1,2\n3,oops\n") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "w");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(csv("y,w\n1,\n"), Err(Error::Parse { row: 2, .. })));
        assert!(matches!(csv("y,y\n1,2\n"), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(csv("y,w\n1,2\n3\n").is_err());
    }

    #[test]
    fn blinding_refuses_arm_like_columns() {
        let t = csv("y,TRT,w\n1,0,2\n2,1,3\n3,0,1\n4,1,0\n").unwrap();
        let deny = DEFAULT_ARM_DENY_LIST;
        match t.blinded("y", &["w".into()], deny) {
            Err(Error::ArmColumnPresent { column }) => assert_eq!(column, "TRT"),
            other => panic!("{other:?}"),
        }
        let custom: [&str; 1] = ["cohort"];
        assert!(t.blinded("y", &["w".into()], &custom).is_ok());
    }

    #[test]
    fn unblinded_requires_binary_arm() {
        let t = csv("y,arm,w\n1,0,2\n2,1,3\n").unwrap();
        let d = t.unblinded("arm", "y", &["w".into()]).unwrap();
        assert_eq!(d.arm(), &[false, true]);
        assert!(matches!(
            t.unblinded("group", "y", &[]),
            Err(Error::MissingArmColumn { .. })
        ));
        let bad = csv("y,arm\n1,2\n").unwrap();
        assert!(matches!(bad.unblinded("arm", "y", &[]), Err(Error::Parse { row: 2, .. })));
    }

    const CONFIG: &str = r#"{
        "scenario": {"family": "S1", "w_corr": [0.25], "yw_corr": [0.5, 0.75]},
        "delta": [0.5],
        "design": {"sigma2_y": 1.0},
        "replicates": 10,
        "master_seed": 3
    }"#;

    #[test]
    fn config_defaults() {
        let c = SimConfig::from_json(CONFIG).unwrap();
        assert_eq!(c.methods, vec![Method::Proposed, Method::Simple]);
        assert_eq!(c.design.alpha, 0.025);
        assert_eq!(c.interim_rounding, InterimRounding::Floor);
        let again: SimConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn config_errors_carry_pointer() {
        let typo = CONFIG.replace("\"sigma2_y\"", "\"sigma_y\"");
        match SimConfig::from_json(&typo) {
            Err(Error::Config { pointer, .. }) => assert!(pointer.starts_with("/design"), "{pointer}"),
            other => panic!("{other:?}"),
        }
        let bad_type = CONFIG.replace("[0.25]", "[\"x\"]");
        match SimConfig::from_json(&bad_type) {
            Err(Error::Config { pointer, .. }) => assert!(pointer.starts_with("/scenario/w_corr"), "{pointer}"),
            other => panic!("{other:?}"),
        }
        let few = CONFIG.replace("\"replicates\": 10", "\"replicates\": 1");
        assert!(matches!(SimConfig::from_json(&few), Err(Error::Config { pointer, .. }) if pointer == "/replicates"));
        let extra = CONFIG.replace("\"master_seed\": 3", "\"master_seed\": 3, \"colour\": 1");
        assert!(SimConfig::from_json(&extra).is_err());
    }

    #[test]
    fn s4_strategies_parse_as_numbers() {
        let c = CONFIG.replace(
            r#"{"family": "S1", "w_corr": [0.25], "yw_corr": [0.5, 0.75]}"#,
            r#"{"family": "S4", "strategies": [1, 6]}"#,
        );
        let cfg = SimConfig::from_json(&c).unwrap();
        assert_eq!(
            cfg.scenario,
            ScenarioGrid::S4 {
                strategies: vec![Actg175Strategy::Cd4, Actg175Strategy::All]
            }
        );
        assert!(SimConfig::from_json(&c.replace("[1, 6]", "[7]")).is_err());
    }
}
