//! Filtered mean reciprocal rank over query datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::fit::{answer, InferenceConfig};
use crate::fuzzy::{FuzzyVector, MatrixSet};
use crate::kg::EntityId;
use crate::sampler::{QuerySample, STRUCTURES};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no target answers to rank")]
    NoTargets,
    #[error("unknown evaluation mode `{0}` (expected hard or faithful)")]
    UnknownMode(String),
}

/// Which answers are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// Answers that need generalization beyond the observed graph.
    #[default]
    Hard,
    /// Answers derivable from the observed graph.
    Faithful,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Hard => "hard",
            EvalMode::Faithful => "faithful",
        })
    }
}

impl FromStr for EvalMode {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard" => Ok(EvalMode::Hard),
            "faithful" | "faithfulness" => Ok(EvalMode::Faithful),
            _ => Err(EvalError::UnknownMode(s.to_string())),
        }
    }
}

/// Mean reciprocal rank of `targets`; every entity in `filtered` other than
/// the one being ranked is left out of the competition. Equal scores are
/// broken by ascending entity id.
pub fn mrr_ranked<T: Scalar>(
    scores: &FuzzyVector<T>,
    targets: &BTreeSet<EntityId>,
    filtered: &BTreeSet<EntityId>,
) -> Result<f64, EvalError> {
    if targets.is_empty() {
        return Err(EvalError::NoTargets);
    }
    let total: f64 = targets
        .iter()
        .map(|&a| {
            let sa = scores.get(a.index());
            let above = scores
                .iter()
                .enumerate()
                .filter(|&(e, se)| {
                    !filtered.contains(&EntityId(e as u32))
                        && (se > sa || (se == sa && e < a.index()))
                })
                .count();
            1.0 / (1 + above) as f64
        })
        .sum();
    Ok(total / targets.len() as f64)
}

/// Ranks each hard answer against entities outside `easy ∪ hard`.
pub fn mrr_filtered<T: Scalar>(
    scores: &FuzzyVector<T>,
    easy: &BTreeSet<EntityId>,
    hard: &BTreeSet<EntityId>,
) -> Result<f64, EvalError> {
    let all = easy.union(hard).copied().collect();
    mrr_ranked(scores, hard, &all)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructureScore {
    /// Percent.
    pub mrr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Averages {
    pub positive: Option<f64>,
    pub negative: Option<f64>,
    pub all: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub structures: BTreeMap<String, StructureScore>,
    /// Structure names whose queries contain negation.
    pub negated: BTreeSet<String>,
    pub averages: Averages,
    /// Samples that could not be answered or had nothing to rank.
    pub failures: usize,
}

impl Serialize for EvalReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.structures.len() + 2))?;
        for (k, v) in &self.structures {
            m.serialize_entry(k, v)?;
        }
        m.serialize_entry("averages", &self.averages)?;
        m.serialize_entry("failures", &self.failures)?;
        m.end()
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl EvalReport {
    fn order(&self) -> Vec<&String> {
        let known = |n: &str| STRUCTURES.iter().position(|s| s.name == n).unwrap_or(usize::MAX);
        let mut names: Vec<&String> = self.structures.keys().collect();
        names.sort_by_key(|n| (known(n), (*n).clone()));
        names
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain report")
    }

    /// Aligned text table: one row per structure, then the averages.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8} {:>6}", "structure", "mrr", "n");
        for name in self.order() {
            let s = &self.structures[name];
            let _ = writeln!(out, "{:<10} {:>8.2} {:>6}", name, s.mrr, s.n);
        }
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        let _ = writeln!(out, "{:<10} {:>8}", "avg+", fmt(self.averages.positive));
        let _ = writeln!(out, "{:<10} {:>8}", "avg-", fmt(self.averages.negative));
        let _ = writeln!(out, "{:<10} {:>8}", "avg", fmt(self.averages.all));
        if self.failures > 0 {
            let _ = writeln!(out, "failures: {}", self.failures);
        }
        out
    }
}

/// Answers every sample and aggregates MRR per structure.
pub fn evaluate<T: Scalar>(
    samples: &[QuerySample],
    matrices: &MatrixSet<T>,
    cfg: &InferenceConfig,
    mode: EvalMode,
) -> EvalReport {
    let scores: Vec<Option<f64>> = samples
        .par_iter()
        .map(|q| {
            let v = answer(&q.formula, matrices, cfg).ok()?;
            match mode {
                EvalMode::Hard => mrr_filtered(&v, &q.easy_answers, &q.hard_answers),
                EvalMode::Faithful => {
                    let all = q.easy_answers.union(&q.hard_answers).copied().collect();
                    mrr_ranked(&v, &q.easy_answers, &all)
                }
            }
            .ok()
        })
        .collect();
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut negated = BTreeSet::new();
    let mut failures = 0;
    for (q, s) in samples.iter().zip(scores) {
        if q.formula.contains_negation() {
            negated.insert(q.structure.clone());
        }
        match s {
            Some(x) => {
                let e = sums.entry(q.structure.clone()).or_default();
                e.0 += x;
                e.1 += 1;
            }
            None => failures += 1,
        }
    }
    let structures: BTreeMap<String, StructureScore> = sums
        .into_iter()
        .map(|(k, (sum, n))| {
            (
                k,
                StructureScore {
                    mrr: 100.0 * sum / n as f64,
                    n,
                },
            )
        })
        .collect();
    let pick = |neg: Option<bool>| {
        mean(
            structures
                .iter()
                .filter(|(k, _)| neg.is_none_or(|b| negated.contains(*k) == b))
                .map(|(_, s)| s.mrr),
        )
    };
    let averages = Averages {
        positive: pick(Some(false)),
        negative: pick(Some(true)),
        all: pick(None),
    };
    EvalReport {
        structures,
        negated,
        averages,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::perfect_matrices;
    use crate::kg::{KnowledgeGraph, Triple};
    use crate::logic::parse_efo1;
    use proptest::prelude::*;

    fn set(v: &[u32]) -> BTreeSet<EntityId> {
        v.iter().map(|&i| EntityId(i)).collect()
    }

    fn vec(v: Vec<f64>) -> FuzzyVector<f64> {
        FuzzyVector::new(v).unwrap()
    }

    #[test]
    fn rank_rules() {
        let s = vec(vec![0.1, 0.9, 0.2, 0.3]);
        assert_eq!(mrr_filtered(&s, &set(&[]), &set(&[1])).unwrap(), 1.0);
        let flat = vec(vec![0.5; 4]);
        assert_eq!(mrr_filtered(&flat, &set(&[]), &set(&[0])).unwrap(), 1.0);
        assert_eq!(mrr_filtered(&flat, &set(&[]), &set(&[2])).unwrap(), 1.0 / 3.0);
        assert_eq!(mrr_filtered(&flat, &set(&[0, 1]), &set(&[2])).unwrap(), 1.0);
        assert_eq!(mrr_filtered(&s, &set(&[]), &set(&[])), Err(EvalError::NoTargets));
        let two = mrr_filtered(&s, &set(&[]), &set(&[0, 1])).unwrap();
        assert!((two - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn rank_only(vals in prop::collection::vec(0.0f64..=1.0, 2..12), hard in 0usize..12) {
            let hard = set(&[(hard % vals.len()) as u32]);
            let a = mrr_filtered(&vec(vals.clone()), &set(&[]), &hard).unwrap();
            let squashed: Vec<f64> = vals.iter().map(|v| v.powi(3) * 0.5 + 0.1).collect();
            let b = mrr_filtered(&vec(squashed), &set(&[]), &hard).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a > 0.0 && a <= 1.0);
        }
    }

    #[test]
    fn perfect_run_is_all_100() {
        let kg = KnowledgeGraph::new(
            4,
            2,
            [
                Triple::new(0, 0, 1),
                Triple::new(0, 0, 2),
                Triple::new(1, 1, 3),
                Triple::new(2, 1, 3),
                Triple::new(2, 1, 1),
            ],
        )
        .unwrap();
        let m: MatrixSet<f64> = perfect_matrices(&kg);
        let q = |structure: &str, f: &str, easy: &[u32], hard: &[u32]| QuerySample {
            structure: structure.into(),
            formula: parse_efo1(f).unwrap(),
            easy_answers: set(easy),
            hard_answers: set(hard),
            tree_form: None,
        };
        let samples = vec![
            q("1p", "r0(a0,f)", &[1], &[2]),
            q("2p", "r0(a0,x1) & r1(x1,f)", &[], &[1, 3]),
            q("2in", "r1(a1,f) & !r1(a2,f)", &[], &[]),
            q("2in", "r1(a2,f) & !r0(a0,f)", &[], &[3]),
        ];
        let cfg = InferenceConfig::default();
        let r = evaluate(&samples, &m, &cfg, EvalMode::Hard);
        assert_eq!(r.failures, 1);
        assert!(r.structures.values().all(|s| s.mrr == 100.0));
        assert_eq!(r.averages.positive, Some(100.0));
        assert_eq!(r.averages.negative, Some(100.0));
        let json = r.to_json();
        assert!(json.contains("\"averages\""));
        assert_eq!(r, evaluate(&samples, &m, &cfg, EvalMode::Hard));
        let faithful = evaluate(&samples, &m, &cfg, EvalMode::Faithful);
        assert_eq!(faithful.structures["1p"].mrr, 100.0);
        assert_eq!(faithful.failures, 3);

        let empty = evaluate::<f64>(&[], &m, &cfg, EvalMode::Hard);
        assert!(empty.structures.is_empty());
        assert_eq!(empty.averages.all, None);
        assert!(empty.to_table().contains("avg"));
    }
}
