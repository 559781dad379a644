//! Experiment configuration.
//!
//! A run is described by one JSON document. Every field has a default, so `{}` is a valid
//! config; CLI flags override individual fields after loading.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptation::{AdaptationMode, AdaptationSchedule, SupervisedConfig};
use crate::error::{Error, Result};
use crate::losses::InterpolationWeight;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Domain,
    Speaker,
    /// CSV files as written by `gen-data`: a labelled teacher training set, a parallel
    /// adaptation set and a labelled student-side test set.
    FromFile {
        train: PathBuf,
        adapt: PathBuf,
        test: PathBuf,
    },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Domain => "domain",
            Scenario::Speaker => "speaker",
            Scenario::FromFile { .. } => "from_file",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    Supervised,
    Unsupervised,
}

/// Adaptation method. Displays and parses as `hard`, `soft_ts`, `interpolated(0.5)`,
/// `conditional`, `wrong_only`; `interpolated:0.5` is accepted as input too.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Hard,
    SoftTs,
    Interpolated(f64),
    Conditional,
    WrongOnly,
}

impl Method {
    pub fn mode(self) -> Result<AdaptationMode> {
        Ok(match self {
            Method::Hard => AdaptationMode::HardOnly,
            Method::SoftTs => AdaptationMode::SoftOnly,
            Method::Interpolated(l) => AdaptationMode::Interpolated(InterpolationWeight::new(l)?),
            Method::Conditional => AdaptationMode::Conditional,
            Method::WrongOnly => AdaptationMode::WrongOnly,
        })
    }

    /// Position in the comparison table, following the usual row order of such tables.
    pub fn rank(self) -> (u8, u64) {
        match self {
            Method::Hard => (1, 0),
            Method::SoftTs => (2, 0),
            Method::Interpolated(l) => (3, l.to_bits()),
            Method::Conditional => (4, 0),
            Method::WrongOnly => (5, 0),
        }
    }

    /// Name usable in file names.
    pub fn slug(self) -> String {
        match self {
            Method::Interpolated(l) => format!("interpolated-{l}"),
            m => m.to_string(),
        }
    }

    fn parse_with(name: &str, lambda: Option<f64>) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown method `{name}`"));
        let name = name.trim();
        let (base, inline) = if let Some(rest) = name.strip_prefix("interpolated") {
            let rest = rest.trim();
            let inner = rest
                .strip_prefix(':')
                .or_else(|| rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')));
            match (rest.is_empty(), inner) {
                (true, _) => ("interpolated", None),
                (false, Some(v)) => (
                    "interpolated",
                    Some(v.trim().parse::<f64>().map_err(|_| bad())?),
                ),
                (false, None) => return Err(bad()),
            }
        } else {
            (name, None)
        };
        let method = match base {
            "hard" => Method::Hard,
            "soft_ts" => Method::SoftTs,
            "conditional" => Method::Conditional,
            "wrong_only" => Method::WrongOnly,
            "interpolated" => match (inline, lambda) {
                (Some(a), Some(b)) if a != b => {
                    return Err(Error::InvalidConfig(format!(
                        "conflicting lambda values {a} and {b}"
                    )))
                }
                (Some(l), _) | (None, Some(l)) => Method::Interpolated(l),
                (None, None) => {
                    return Err(Error::InvalidConfig(
                        "method `interpolated` requires lambda".to_owned(),
                    ))
                }
            },
            _ => return Err(bad()),
        };
        if lambda.is_some() && !matches!(method, Method::Interpolated(_)) {
            return Err(Error::InvalidConfig(format!(
                "lambda is only valid with method `interpolated`, not `{method}`"
            )));
        }
        if let Method::Interpolated(l) = method {
            InterpolationWeight::new(l).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
        Ok(method)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Hard => f.write_str("hard"),
            Method::SoftTs => f.write_str("soft_ts"),
            Method::Interpolated(l) => write!(f, "interpolated({l})"),
            Method::Conditional => f.write_str("conditional"),
            Method::WrongOnly => f.write_str("wrong_only"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::parse_with(s, None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            epochs: 100,
            lr: 0.1,
            batch_size: 32,
        }
    }
}

impl From<&TeacherConfig> for SupervisedConfig {
    fn from(t: &TeacherConfig) -> Self {
        SupervisedConfig {
            hidden: t.hidden.clone(),
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Method for `adapt`.
    pub method: String,
    /// Required iff `method` is `interpolated`.
    pub lambda: Option<f64>,
    /// Methods for `compare`; the scenario default when absent.
    pub methods: Option<Vec<String>>,
    pub supervision: Supervision,
    /// Main-phase epochs (the conditional phase in conditional mode).
    pub epochs: usize,
    /// Soft warm-up epochs before the conditional phase; domain adaptation only. Non-conditional
    /// methods run `warmup_epochs + epochs` epochs of their own loss so every method gets the
    /// same budget.
    pub warmup_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub temperature: f64,
    /// Add a clean-clean pair for every parallel sample in domain adaptation.
    pub augment_source_pairs: bool,
    pub seeds: Vec<u64>,
    pub teacher: TeacherConfig,
    pub out_dir: PathBuf,
    /// Where `adapt` and `compare` look for teacher checkpoints; `out_dir` when absent.
    pub teacher_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Domain,
            method: "conditional".to_owned(),
            lambda: None,
            methods: None,
            supervision: Supervision::Supervised,
            epochs: 20,
            warmup_epochs: 20,
            lr: 0.05,
            batch_size: 32,
            temperature: 1.0,
            augment_source_pairs: true,
            seeds: vec![1, 2, 3, 4, 5],
            teacher: TeacherConfig::default(),
            out_dir: PathBuf::from("out"),
            teacher_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn resolved_method(&self) -> Result<Method> {
        Method::parse_with(&self.method, self.lambda)
    }

    /// The compare list, without the unadapted baseline (always included).
    pub fn resolved_methods(&self) -> Result<Vec<Method>> {
        match &self.methods {
            Some(list) => list.iter().map(|m| m.parse()).collect(),
            None => {
                let mut v = vec![
                    Method::Hard,
                    Method::SoftTs,
                    Method::Interpolated(0.2),
                    Method::Interpolated(0.5),
                    Method::Interpolated(0.8),
                    Method::Conditional,
                ];
                if self.scenario == Scenario::Speaker {
                    v.push(Method::WrongOnly);
                }
                Ok(v)
            }
        }
    }

    pub fn teacher_dir(&self) -> &Path {
        self.teacher_dir.as_deref().unwrap_or(&self.out_dir)
    }

    pub fn schedule(&self, method: Method, seed: u64) -> Result<AdaptationSchedule> {
        Ok(AdaptationSchedule {
            warmup_epochs: self.warmup_epochs,
            conditional_epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            mode: method.mode()?,
            temperature: self.temperature,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".to_owned());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct".to_owned());
        }
        if self.supervision == Supervision::Unsupervised && self.scenario != Scenario::Speaker {
            return bad("unsupervised adaptation is only defined for the speaker scenario".to_owned());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.teacher.batch_size == 0 {
            return bad("batch sizes must be >= 1".to_owned());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.teacher.lr > 0.0 && self.teacher.lr.is_finite()) {
            return bad(format!("teacher lr must be positive, got {}", self.teacher.lr));
        }
        if self.teacher.hidden.contains(&0) {
            return bad("hidden layer widths must be >= 1".to_owned());
        }
        self.resolved_method()?;
        self.resolved_methods()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Hard,
            Method::SoftTs,
            Method::Interpolated(0.25),
            Method::Conditional,
            Method::WrongOnly,
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("interpolated:0.5".parse::<Method>().unwrap(), Method::Interpolated(0.5));
        assert!("interpolated".parse::<Method>().is_err());
        assert!("interpolated(1.5)".parse::<Method>().is_err());
        assert!("kd".parse::<Method>().is_err());
    }

    #[test]
    fn lambda_iff_interpolated() {
        let mut c = ExperimentConfig {
            lambda: Some(0.5),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.method = "interpolated".to_owned();
        assert_eq!(c.resolved_method().unwrap(), Method::Interpolated(0.5));
        c.lambda = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unsupervised_only_for_speaker() {
        let mut c = ExperimentConfig {
            supervision: Supervision::Unsupervised,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.scenario = Scenario::Speaker;
        c.validate().unwrap();
    }

    #[test]
    fn empty_document_is_default() {
        let c: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let back: ExperimentConfig = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"epoch": 3}"#).is_err());
        let f: ExperimentConfig = serde_json::from_str(
            r#"{"scenario": {"from_file": {"train": "a.csv", "adapt": "b.csv", "test": "c.csv"}}}"#,
        )
        .unwrap();
        assert_eq!(f.scenario.name(), "from_file");
    }
}
