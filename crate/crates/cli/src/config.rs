//! The resolved, validated settings of one invocation.

use std::path::PathBuf;

use efo_fit::builder::CalibrationConfig;
use efo_fit::{InferenceConfig, TNorm};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize)]
pub struct Paths {
    pub kg_observed: Option<PathBuf>,
    pub kg_complete: Option<PathBuf>,
    pub matrices: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub paths: Paths,
    pub conj: TNorm,
    pub disj: TNorm,
    pub exist: TNorm,
    pub epsilon: f64,
    pub delta: f64,
    pub budget_m: usize,
    pub max_enumeration_depth: usize,
    pub use_dense_variant: bool,
    pub seed: u64,
    pub mode: String,
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub structures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graphs: Option<usize>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub quick: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub corrupt: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub classify_only: bool,
}

impl RunConfig {
    pub fn new(command: &'static str) -> Self {
        let inf = InferenceConfig::default();
        let cal = CalibrationConfig::default();
        RunConfig {
            command,
            paths: Paths::default(),
            conj: inf.conj,
            disj: inf.disj,
            exist: inf.exist,
            epsilon: cal.epsilon,
            delta: cal.delta,
            budget_m: inf.budget_m,
            max_enumeration_depth: inf.max_enumeration_depth,
            use_dense_variant: inf.use_dense_variant,
            seed: 0,
            mode: String::new(),
            threads: None,
            structures: Vec::new(),
            count: None,
            top_k: None,
            graphs: None,
            quick: false,
            corrupt: false,
            classify_only: false,
        }
    }

    pub fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            conj: self.conj,
            disj: self.disj,
            exist: self.exist,
            budget_m: self.budget_m,
            max_enumeration_depth: self.max_enumeration_depth,
            use_dense_variant: self.use_dense_variant,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.inference().validate().map_err(CliError::from)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CliError::Usage(format!("--delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(CliError::Usage(format!("--eps must lie in [0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}

/// Worker cap from `EFO_FIT_THREADS`; unset or empty means no cap.
pub fn threads_from_env(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "EFO_FIT_THREADS must be a positive integer, got `{v}`"
            ))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::new("answer");
        c.validate().unwrap();
        assert_eq!(c.budget_m, 10);
        assert_eq!(c.epsilon, 0.005);
        assert!(c.to_json().contains("\"conj\":\"product\""));
    }

    #[test]
    fn rejects_non_godel_exist() {
        let c = RunConfig {
            exist: TNorm::Product,
            ..RunConfig::new("answer")
        };
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let c = RunConfig {
            delta: 1.0,
            ..RunConfig::new("build")
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn thread_env() {
        assert_eq!(threads_from_env(None).unwrap(), None);
        assert_eq!(threads_from_env(Some("4")).unwrap(), Some(4));
        assert!(threads_from_env(Some("0")).is_err());
        assert!(threads_from_env(Some("many")).is_err());
    }
}
