//! Randomized end-to-end checks of the engine against the oracles.
//!
//! Three suites run on generated graphs:
//! - perfect: with exact 0/1 matrices and an unbounded enumeration budget,
//!   the answer vector is binary and its support is the classical answer set;
//! - faithful: with matrices that read 1 on observed triples, every answer
//!   derivable from the observed graph scores exactly 1;
//! - qto: on operator-tree queries, the engine reproduces the max-product
//!   tree evaluation bit for bit.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::builder::{
    calibrate_with_dense_variant, consistent_matrices, perfect_matrices, CalibrationConfig,
    NoiseConfig, SyntheticScorer,
};
use crate::fit::{answer, InferenceConfig};
use crate::fuzzy::{FuzzyMatrix, MatrixSet, TNorm};
use crate::kg::{EntityId, KnowledgeGraph, Triple};
use crate::oracle::{answer_set_symbolic, operator_tree_maxprod, OracleLimit};
use crate::sampler::{sample, Structure, STRUCTURES};

/// `|E|` entities, `|R|` relations, each ordered pair of distinct entities
/// carrying each relation with probability `density`.
pub fn random_kg(
    rng: &mut impl Rng,
    entities: usize,
    relations: usize,
    density: f64,
) -> KnowledgeGraph {
    let mut triples = Vec::new();
    for r in 0..relations as u32 {
        for h in 0..entities as u32 {
            for t in 0..entities as u32 {
                if h != t && rng.gen_bool(density) {
                    triples.push(Triple::new(h, r, t));
                }
            }
        }
    }
    KnowledgeGraph::new(entities, relations, triples).expect("ids in range")
}

/// Keeps each triple with probability `keep`.
pub fn random_split(kg: &KnowledgeGraph, rng: &mut impl Rng, keep: f64) -> KnowledgeGraph {
    let kept: Vec<Triple> = kg.triples().iter().copied().filter(|_| rng.gen_bool(keep)).collect();
    KnowledgeGraph::new(kg.entity_count(), kg.relation_count(), kept).expect("subgraph")
}

pub fn empty_like(kg: &KnowledgeGraph) -> KnowledgeGraph {
    KnowledgeGraph::new(kg.entity_count(), kg.relation_count(), []).expect("empty")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestConfig {
    pub seed: u64,
    pub graphs: usize,
    pub min_entities: usize,
    pub max_entities: usize,
    /// Overwrites one stored matrix entry with 0.5 before answering; the
    /// perfect suite must then report a counterexample.
    pub corrupt: bool,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig {
            seed: 0,
            graphs: 10,
            min_entities: 8,
            max_entities: 30,
            corrupt: false,
        }
    }
}

impl SelftestConfig {
    pub fn quick(self) -> Self {
        SelftestConfig {
            max_entities: self.max_entities.min(15),
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn graph(rng: &mut ChaCha8Rng, cfg: &SelftestConfig) -> KnowledgeGraph {
    let n = rng.gen_range(cfg.min_entities..=cfg.max_entities.max(cfg.min_entities));
    let r = rng.gen_range(2..=4);
    let d = rng.gen_range(0.05..=0.15);
    random_kg(rng, n, r, d)
}

fn corrupt(m: MatrixSet<f64>) -> MatrixSet<f64> {
    let n = m.entity_count();
    let mut mats: Vec<FuzzyMatrix<f64>> = m.primary().matrices().to_vec();
    for mat in &mut mats {
        let first = mat.entries().next();
        if let Some((i, j, _)) = first {
            let mut e: Vec<(usize, usize, f64)> = mat.entries().collect();
            e.retain(|&(a, b, _)| (a, b) != (i, j));
            e.push((i, j, 0.5));
            *mat = FuzzyMatrix::from_entries(n, n, e).expect("same shape");
            break;
        }
    }
    MatrixSet::new(n, mats).expect("same shape")
}

pub fn perfect_suite(cfg: &SelftestConfig) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut res = SuiteResult {
        name: "perfect",
        ..Default::default()
    };
    let limit = OracleLimit::default();
    for _ in 0..cfg.graphs {
        let kg = graph(&mut rng, cfg);
        let mut m: MatrixSet<f64> = perfect_matrices(&kg);
        if cfg.corrupt {
            m = corrupt(m);
        }
        let none = empty_like(&kg);
        for s in STRUCTURES {
            let Ok(q) = sample(s, &none, &kg, &mut rng, 50, limit) else {
                continue;
            };
            for conj in [TNorm::Product, TNorm::Godel] {
                let icfg = InferenceConfig {
                    conj,
                    budget_m: kg.entity_count(),
                    ..Default::default()
                };
                res.cases += 1;
                let truth = match answer_set_symbolic(&q.formula, &kg, limit) {
                    Ok(t) => t,
                    Err(e) => {
                        res.failures.push(format!("{}: oracle: {e}", q.formula));
                        continue;
                    }
                };
                match answer(&q.formula, &m, &icfg) {
                    Ok(v) if v.is_binary() && v.support().into_iter().collect::<BTreeSet<_>>() == truth => {}
                    Ok(v) => {
                        let fuzzy = v.iter().enumerate().find(|&(_, x)| x != 0.0 && x != 1.0);
                        let detail = match fuzzy {
                            Some((i, x)) => format!("a{i} scored {x}"),
                            None => format!("support {} != answers {}", ids(v.support()), ids(truth)),
                        };
                        res.failures
                            .push(format!("{} [{}] {}: {detail}", s.name, conj, q.formula));
                    }
                    Err(e) => res.failures.push(format!("{} {}: {e}", s.name, q.formula)),
                }
            }
        }
    }
    res
}

fn ids(xs: impl IntoIterator<Item = EntityId>) -> String {
    let v: Vec<String> = xs.into_iter().map(|e| e.to_string()).collect();
    format!("{{{}}}", v.join(","))
}

/// Structures without negation.
pub fn positive_structures() -> Vec<&'static Structure> {
    STRUCTURES.iter().filter(|s| !s.has_negation()).collect()
}

pub fn faithful_suite(cfg: &SelftestConfig) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut res = SuiteResult {
        name: "faithful",
        ..Default::default()
    };
    let limit = OracleLimit::default();
    for _ in 0..cfg.graphs {
        let complete = graph(&mut rng, cfg);
        let observed = random_split(&complete, &mut rng, 0.7);
        let noise = NoiseConfig {
            density: 0.1,
            cap: 0.9,
        };
        let m: MatrixSet<f64> =
            consistent_matrices(&observed, &mut rng, noise).expect("valid noise");
        let none = empty_like(&complete);
        for s in positive_structures() {
            let Ok(q) = sample(s, &none, &observed, &mut rng, 50, limit) else {
                continue;
            };
            res.cases += 1;
            match answer(&q.formula, &m, &InferenceConfig::default()) {
                Ok(v) => {
                    if let Some(a) = q.hard_answers.iter().find(|a| v.get(a.index()) != 1.0) {
                        res.failures.push(format!(
                            "{} {}: deductible answer {a} scored {}",
                            s.name,
                            q.formula,
                            v.get(a.index())
                        ));
                    }
                }
                Err(e) => res.failures.push(format!("{} {}: {e}", s.name, q.formula)),
            }
        }
    }
    res
}

pub fn qto_suite(cfg: &SelftestConfig) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9701);
    let mut res = SuiteResult {
        name: "qto",
        ..Default::default()
    };
    let limit = OracleLimit::default();
    let exact: Vec<&Structure> = STRUCTURES.iter().filter(|s| s.tree_is_exact()).collect();
    for g in 0..cfg.graphs {
        let kg = graph(&mut rng, cfg);
        let scorer = SyntheticScorer::new(kg.entity_count(), kg.relation_count(), cfg.seed + g as u64)
            .with_boost(kg.clone(), 4.0);
        let m: MatrixSet<f64> =
            calibrate_with_dense_variant(&scorer, &kg, &CalibrationConfig::default())
                .expect("valid calibration");
        let none = empty_like(&kg);
        let icfg = InferenceConfig {
            conj: TNorm::Product,
            ..Default::default()
        };
        for s in &exact {
            let Ok(q) = sample(s, &none, &kg, &mut rng, 50, limit) else {
                continue;
            };
            let Some(tf) = &q.tree_form else { continue };
            let tree = tf.op_tree().expect("sampled tree form");
            res.cases += 1;
            let mats = if q.formula.contains_exists() {
                m.primary()
            } else {
                m.dense_variant().expect("built with dense variant")
            };
            match (answer(&q.formula, &m, &icfg), operator_tree_maxprod(&tree, mats)) {
                (Ok(a), Ok(b)) if a == b => {}
                (Ok(a), Ok(b)) => {
                    let i = (0..a.len()).find(|&i| a.get(i) != b.get(i)).unwrap_or(0);
                    res.failures.push(format!(
                        "{} {}: entity {i}: engine {} vs tree {}",
                        s.name,
                        q.formula,
                        a.get(i),
                        b.get(i)
                    ));
                }
                (a, b) => res.failures.push(format!(
                    "{} {}: {:?} / {:?}",
                    s.name,
                    q.formula,
                    a.err().map(|e| e.to_string()),
                    b.err().map(|e| e.to_string())
                )),
            }
        }
    }
    res
}

pub fn run(cfg: &SelftestConfig) -> Vec<SuiteResult> {
    vec![perfect_suite(cfg), faithful_suite(cfg), qto_suite(cfg)]
}

/// Names accepted by `structure`, for CLI validation.
pub fn known_structures() -> HashSet<&'static str> {
    STRUCTURES.iter().map(|s| s.name).collect()
}
