//! Relation matrices from a graph, from a graph plus noise, or from link
//! predictor scores.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::{FuzzyError, FuzzyMatrix, MatrixSet};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("non-finite score for ({head}, {relation}, {tail})")]
    NonFiniteScore {
        head: EntityId,
        relation: RelationId,
        tail: EntityId,
    },
    #[error("invalid calibration config: {0}")]
    InvalidConfig(String),
    #[error("score source covers {source_entities} entities and {source_relations} relations, graph has {entities} and {relations}")]
    Shape {
        source_entities: usize,
        source_relations: usize,
        entities: usize,
        relations: usize,
    },
    #[error("score file {path}: {message}")]
    Format { path: String, message: String },
    #[error("score file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    Train,
    #[default]
    Test,
    DenseTest,
}

impl fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CalibrationMode::Train => "train",
            CalibrationMode::Test => "test",
            CalibrationMode::DenseTest => "dense-test",
        })
    }
}

impl FromStr for CalibrationMode {
    type Err = BuildError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(CalibrationMode::Train),
            "test" => Ok(CalibrationMode::Test),
            "dense-test" | "dense_test" => Ok(CalibrationMode::DenseTest),
            _ => Err(BuildError::InvalidConfig(format!(
                "unknown calibration mode `{s}` (expected train, test or dense-test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub mode: CalibrationMode,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            epsilon: 0.005,
            delta: 0.001,
            mode: CalibrationMode::Test,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BuildError::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}; unobserved entries must stay strictly below 1",
                self.delta
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(BuildError::InvalidConfig(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Row-oriented access to link predictor scores `s(head, relation, ·)`.
pub trait ScoreSource: Sync {
    fn entity_count(&self) -> usize;
    fn relation_count(&self) -> usize;
    /// Writes the scores of every tail into `out` (length `entity_count`).
    fn fill_row(&self, head: EntityId, relation: RelationId, out: &mut [f64]);
}

/// Scores loaded from a score file.
///
/// The file is a JSON header line followed by little-endian `f32` rows,
/// relation-major then head-major: row `(r, a)` starts at float
/// `(r * N + a) * N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFile {
    entities: usize,
    relations: usize,
    data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreFileHeader {
    pub entities: usize,
    pub relations: usize,
    pub dtype: String,
    pub order: String,
}

const SCORE_ORDER: &str = "relation-major, head-major rows";

impl ScoreFile {
    pub fn open(path: &Path) -> Result<Self, BuildError> {
        let io = |source| BuildError::Io {
            path: path.display().to_string(),
            source,
        };
        let bad = |message: String| BuildError::Format {
            path: path.display().to_string(),
            message,
        };
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(io)?)
            .read_to_end(&mut bytes)
            .map_err(io)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line".into()))?;
        let header: ScoreFileHeader =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(format!("bad header: {e}")))?;
        if header.dtype != "f32" {
            return Err(bad(format!("unsupported dtype {}", header.dtype)));
        }
        if header.order != SCORE_ORDER {
            return Err(bad(format!("unsupported order `{}`", header.order)));
        }
        let body = &bytes[nl + 1..];
        let want = header.relations * header.entities * header.entities * 4;
        if body.len() != want {
            return Err(bad(format!("expected {want} bytes of scores, found {}", body.len())));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(ScoreFile {
            entities: header.entities,
            relations: header.relations,
            data,
        })
    }

    /// Materializes any score source in file format.
    pub fn write(source: &dyn ScoreSource, path: &Path) -> Result<(), BuildError> {
        let io = |source| BuildError::Io {
            path: path.display().to_string(),
            source,
        };
        let n = source.entity_count();
        let header = ScoreFileHeader {
            entities: n,
            relations: source.relation_count(),
            dtype: "f32".into(),
            order: SCORE_ORDER.into(),
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let mut line = serde_json::to_string(&header).expect("header serializes");
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
        let mut row = vec![0.0; n];
        for r in 0..source.relation_count() {
            for a in 0..n {
                source.fill_row(EntityId(a as u32), RelationId(r as u32), &mut row);
                for v in &row {
                    w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }
}

impl ScoreSource for ScoreFile {
    fn entity_count(&self) -> usize {
        self.entities
    }

    fn relation_count(&self) -> usize {
        self.relations
    }

    fn fill_row(&self, head: EntityId, relation: RelationId, out: &mut [f64]) {
        let n = self.entities;
        let start = (relation.index() * n + head.index()) * n;
        for (o, s) in out.iter_mut().zip(&self.data[start..start + n]) {
            *o = f64::from(*s);
        }
    }
}

/// Deterministic pseudo-random scores, optionally raised by `boost` on the
/// triples of a graph so that calibration has signal to find.
#[derive(Debug, Clone)]
pub struct SyntheticScorer {
    entities: usize,
    relations: usize,
    seed: u64,
    spread: f64,
    boost: Option<(KnowledgeGraph, f64)>,
}

impl SyntheticScorer {
    pub fn new(entities: usize, relations: usize, seed: u64) -> Self {
        SyntheticScorer {
            entities,
            relations,
            seed,
            spread: 3.0,
            boost: None,
        }
    }

    /// Scores are drawn uniformly from `[-spread, spread]`.
    pub fn with_spread(mut self, spread: f64) -> Self {
        self.spread = spread;
        self
    }

    pub fn with_boost(mut self, graph: KnowledgeGraph, amount: f64) -> Self {
        self.boost = Some((graph, amount));
        self
    }
}

impl ScoreSource for SyntheticScorer {
    fn entity_count(&self) -> usize {
        self.entities
    }

    fn relation_count(&self) -> usize {
        self.relations
    }

    fn fill_row(&self, head: EntityId, relation: RelationId, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((relation.index() * self.entities + head.index()) as u64);
        for o in out.iter_mut() {
            *o = if self.spread > 0.0 {
                rng.gen_range(-self.spread..=self.spread)
            } else {
                0.0
            };
        }
        if let Some((g, amount)) = &self.boost {
            for t in g.tail_set(head, relation) {
                out[t.index()] += amount;
            }
        }
    }
}

/// `P_r(a, b) = 1` exactly on the graph's triples.
pub fn perfect_matrices<T: Scalar>(kg: &KnowledgeGraph) -> MatrixSet<T> {
    let n = kg.entity_count();
    let mut per_rel: Vec<Vec<(usize, usize, T)>> = vec![Vec::new(); kg.relation_count()];
    for t in kg.triples() {
        per_rel[t.relation.index()].push((t.head.index(), t.tail.index(), T::one()));
    }
    let mats = per_rel
        .into_iter()
        .map(|e| FuzzyMatrix::from_entries(n, n, e).expect("graph ids are in range"))
        .collect();
    MatrixSet::new(n, mats).expect("square by construction")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Probability that an unobserved pair gets a nonzero value.
    pub density: f64,
    /// Upper bound for noisy values; must lie in (0, 1).
    pub cap: f64,
}

/// Observed triples read exactly 1; a random fraction of the other pairs
/// read a value in (0, cap].
pub fn consistent_matrices<T: Scalar>(
    kg_observed: &KnowledgeGraph,
    rng: &mut impl Rng,
    noise: NoiseConfig,
) -> Result<MatrixSet<T>, BuildError> {
    if !(noise.cap > 0.0 && noise.cap < 1.0) {
        return Err(BuildError::InvalidConfig(format!(
            "noise cap must lie in (0, 1), got {}",
            noise.cap
        )));
    }
    if !(0.0..=1.0).contains(&noise.density) {
        return Err(BuildError::InvalidConfig(format!(
            "noise density must lie in [0, 1], got {}",
            noise.density
        )));
    }
    let n = kg_observed.entity_count();
    let cap = T::from_f64_lossy(noise.cap);
    let mut mats = Vec::with_capacity(kg_observed.relation_count());
    for r in 0..kg_observed.relation_count() {
        let r = RelationId(r as u32);
        let mut rows = Vec::with_capacity(n);
        for a in 0..n {
            let tails = kg_observed.tail_set(EntityId(a as u32), r);
            let mut row = Vec::new();
            for b in 0..n {
                if tails.binary_search(&EntityId(b as u32)).is_ok() {
                    row.push((b as u32, T::one()));
                } else if noise.density > 0.0 && rng.gen_bool(noise.density) {
                    let v = T::from_f64_lossy(rng.gen_range(0.0..noise.cap)).min(cap);
                    if v > T::zero() {
                        row.push((b as u32, v));
                    }
                }
            }
            rows.push(row);
        }
        mats.push(FuzzyMatrix::from_sparse_rows(n, n, rows)?);
    }
    Ok(MatrixSet::new(n, mats)?)
}

/// Calibrates one row of scores. `observed` must be sorted.
///
/// Softmax (with max subtraction) gives `P*`; the row is rescaled by
/// `Q = |observed| / sum of P* over observed` (1 when nothing is observed).
/// Train mode stores `min(1, P* Q)`. Test mode stores 1 on observed tails,
/// drops values below epsilon and caps the rest at `1 - delta`. Dense-test
/// mode is test mode without the drop.
pub fn calibrate_row(
    scores: &[f64],
    observed: &[EntityId],
    cfg: &CalibrationConfig,
) -> Vec<(u32, f64)> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exp.iter().sum();
    let p: Vec<f64> = exp.iter().map(|e| e / z).collect();
    let q = if observed.is_empty() {
        1.0
    } else {
        observed.len() as f64 / observed.iter().map(|c| p[c.index()]).sum::<f64>()
    };
    let mut out = Vec::new();
    let mut obs = observed.iter().peekable();
    for (b, pb) in p.iter().enumerate() {
        let is_obs = obs.peek().is_some_and(|c| c.index() == b);
        if is_obs {
            obs.next();
        }
        let v = pb * q;
        let stored = match cfg.mode {
            CalibrationMode::Train => v.min(1.0),
            _ if is_obs => 1.0,
            CalibrationMode::Test if v < cfg.epsilon => 0.0,
            _ => v.min(1.0 - cfg.delta),
        };
        if stored > 0.0 {
            out.push((b as u32, stored));
        }
    }
    out
}

fn check_shape(scores: &dyn ScoreSource, kg: &KnowledgeGraph) -> Result<(), BuildError> {
    if scores.entity_count() != kg.entity_count() || scores.relation_count() != kg.relation_count()
    {
        return Err(BuildError::Shape {
            source_entities: scores.entity_count(),
            source_relations: scores.relation_count(),
            entities: kg.entity_count(),
            relations: kg.relation_count(),
        });
    }
    Ok(())
}

/// Sparse `(tail, value)` rows, one per head.
type RowSet = Vec<Vec<(u32, f64)>>;

/// Calibrated rows for every `(relation, head)`, computed in parallel.
fn calibrated_rows(
    scores: &dyn ScoreSource,
    kg: &KnowledgeGraph,
    cfgs: &[CalibrationConfig],
) -> Result<Vec<Vec<RowSet>>, BuildError> {
    let n = kg.entity_count();
    let nr = kg.relation_count();
    let rows: Vec<RowSet> = (0..nr * n)
        .into_par_iter()
        .map(|k| {
            let (r, a) = (RelationId((k / n) as u32), EntityId((k % n) as u32));
            let mut buf = vec![0.0; n];
            scores.fill_row(a, r, &mut buf);
            if let Some(b) = buf.iter().position(|s| !s.is_finite()) {
                return Err(BuildError::NonFiniteScore {
                    head: a,
                    relation: r,
                    tail: EntityId(b as u32),
                });
            }
            let observed = kg.tail_set(a, r);
            Ok(cfgs.iter().map(|c| calibrate_row(&buf, observed, c)).collect())
        })
        .collect::<Result<_, _>>()?;
    // Regroup as [config][relation][head].
    let mut out: Vec<Vec<RowSet>> =
        cfgs.iter().map(|_| (0..nr).map(|_| Vec::with_capacity(n)).collect()).collect();
    for (k, per_cfg) in rows.into_iter().enumerate() {
        for (c, row) in per_cfg.into_iter().enumerate() {
            out[c][k / n].push(row);
        }
    }
    Ok(out)
}

fn to_matrix<T: Scalar>(
    n: usize,
    rows: Vec<Vec<(u32, f64)>>,
    dense: bool,
) -> Result<FuzzyMatrix<T>, BuildError> {
    let rows: Vec<Vec<(u32, T)>> = rows
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(c, v)| (c, T::from_f64_lossy(v)))
                .filter(|(_, v)| *v > T::zero())
                .collect()
        })
        .collect();
    let m = FuzzyMatrix::from_sparse_rows(n, n, rows)?;
    Ok(if dense { m.to_dense() } else { m })
}

/// Calibrates a score source against the observed graph. The source must
/// cover exactly the graph's relations; pass a reverse-enriched graph when
/// the source carries reverse relations.
pub fn calibrate<T: Scalar>(
    scores: &dyn ScoreSource,
    kg_observed: &KnowledgeGraph,
    cfg: &CalibrationConfig,
) -> Result<MatrixSet<T>, BuildError> {
    cfg.validate()?;
    check_shape(scores, kg_observed)?;
    let n = kg_observed.entity_count();
    let dense = cfg.mode == CalibrationMode::DenseTest;
    let rows = calibrated_rows(scores, kg_observed, std::slice::from_ref(cfg))?;
    let mats = rows
        .into_iter()
        .next()
        .expect("one config")
        .into_iter()
        .map(|r| to_matrix(n, r, dense))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MatrixSet::new(n, mats)?)
}

/// Test-mode matrices plus their dense-test variant, sharing one softmax
/// pass per row.
pub fn calibrate_with_dense_variant<T: Scalar>(
    scores: &dyn ScoreSource,
    kg_observed: &KnowledgeGraph,
    cfg: &CalibrationConfig,
) -> Result<MatrixSet<T>, BuildError> {
    let test = CalibrationConfig {
        mode: CalibrationMode::Test,
        ..*cfg
    };
    let dense = CalibrationConfig {
        mode: CalibrationMode::DenseTest,
        ..*cfg
    };
    test.validate()?;
    check_shape(scores, kg_observed)?;
    let n = kg_observed.entity_count();
    let mut rows = calibrated_rows(scores, kg_observed, &[test, dense])?.into_iter();
    let sparse = rows
        .next()
        .expect("two configs")
        .into_iter()
        .map(|r| to_matrix(n, r, false))
        .collect::<Result<Vec<_>, _>>()?;
    let dense = rows
        .next()
        .expect("two configs")
        .into_iter()
        .map(|r| to_matrix(n, r, true))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MatrixSet::new(n, sparse)?.with_dense_variant(dense)?)
}
