//! Grounded query generation.
//!
//! Every structure is a formula template whose relation and constant ids are
//! slot numbers (`r1`, `a1`, ...). Sampling picks an answer entity first and
//! walks the complete graph backward from it to fill the slots, so the
//! grounded query is satisfiable by construction. Answers are then split into
//! the ones already derivable from the observed graph (easy) and the rest
//! (hard).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::logic::{
    detect_trivial_subsentence, parse_efo1, parse_lisp_tree, Atom, Formula, LispNode, LogicError,
    OpTree, Term, FREE_VAR,
};
use crate::oracle::{answer_set_symbolic, OracleError, OracleLimit};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("unknown structure `{0}`")]
    UnknownStructure(String),
    #[error("structure {structure}: no valid instance after {attempts} attempts")]
    Exhausted { structure: String, attempts: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
}

/// A query shape with its operator-tree approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Structure {
    pub name: &'static str,
    /// Operator-tree form; `lisp_relations`/`lisp_entities` give the slot
    /// consumed by each `p`/`e` token in textual order.
    pub lisp: &'static str,
    pub lisp_relations: &'static [u32],
    pub lisp_entities: &'static [u32],
    /// Explicit template when the operator tree is only an approximation.
    efo1: Option<&'static str>,
}

const fn tree(name: &'static str, lisp: &'static str, r: &'static [u32], e: &'static [u32]) -> Structure {
    Structure {
        name,
        lisp,
        lisp_relations: r,
        lisp_entities: e,
        efo1: None,
    }
}

const fn efo1(
    name: &'static str,
    template: &'static str,
    lisp: &'static str,
    r: &'static [u32],
    e: &'static [u32],
) -> Structure {
    Structure {
        name,
        lisp,
        lisp_relations: r,
        lisp_entities: e,
        efo1: Some(template),
    }
}

pub const STRUCTURES: &[Structure] = &[
    tree("1p", "(p,(e))", &[1], &[1]),
    tree("2p", "(p,(p,(e)))", &[2, 1], &[1]),
    tree("3p", "(p,(p,(p,(e))))", &[3, 2, 1], &[1]),
    tree("2i", "(i,(p,(e)),(p,(e)))", &[1, 2], &[1, 2]),
    tree("3i", "(i,(p,(e)),(p,(e)),(p,(e)))", &[1, 2, 3], &[1, 2, 3]),
    tree("ip", "(p,(i,(p,(e)),(p,(e))))", &[3, 1, 2], &[1, 2]),
    tree("pi", "(i,(p,(p,(e))),(p,(e)))", &[2, 1, 3], &[1, 2]),
    tree("2u", "(u,(p,(e)),(p,(e)))", &[1, 2], &[1, 2]),
    tree("up", "(p,(u,(p,(e)),(p,(e))))", &[3, 1, 2], &[1, 2]),
    tree("2in", "(i,(p,(e)),(n,(p,(e))))", &[1, 2], &[1, 2]),
    tree("3in", "(i,(p,(e)),(p,(e)),(n,(p,(e))))", &[1, 2, 3], &[1, 2, 3]),
    tree("inp", "(p,(i,(p,(e)),(n,(p,(e)))))", &[3, 1, 2], &[1, 2]),
    tree("pin", "(i,(p,(p,(e))),(n,(p,(e))))", &[2, 1, 3], &[1, 2]),
    efo1(
        "pni",
        "r1(a1,x1) & !r2(x1,f) & r3(a2,f)",
        "(i,(n,(p,(p,(e)))),(p,(e)))",
        &[2, 1, 3],
        &[1, 2],
    ),
    efo1("2il", "r1(a1,f) & r2(x1,f)", "(p,(e))", &[1], &[1]),
    efo1(
        "3il",
        "r1(a1,f) & r2(a2,f) & r3(x1,f)",
        "(i,(p,(e)),(p,(e)))",
        &[1, 2],
        &[1, 2],
    ),
    efo1(
        "2m",
        "r1(a1,x1) & r2(x1,f) & r3(x1,f)",
        "(i,(p,(p,(e))),(p,(p,(e))))",
        &[2, 1, 3, 1],
        &[1, 1],
    ),
    efo1(
        "2nm",
        "r1(a1,x1) & r2(x1,f) & !r3(x1,f)",
        "(i,(n,(p,(p,(e)))),(p,(p,(e))))",
        &[3, 1, 2, 1],
        &[1, 1],
    ),
    efo1(
        "3mp",
        "r1(a1,x1) & r2(x1,x2) & r3(x2,f) & r4(x1,x2)",
        "(p,(i,(p,(p,(e))),(p,(p,(e)))))",
        &[3, 2, 1, 4, 1],
        &[1, 1],
    ),
    efo1(
        "3pm",
        "r1(a1,x1) & r2(x1,x2) & r3(x2,f) & r4(x2,f)",
        "(i,(p,(p,(p,(e)))),(p,(p,(p,(e)))))",
        &[3, 2, 1, 4, 2, 1],
        &[1, 1],
    ),
    efo1(
        "im",
        "r1(a1,x1) & r2(a2,x1) & r3(x1,f) & r4(x1,f)",
        "(i,(p,(i,(p,(e)),(p,(e)))),(p,(i,(p,(e)),(p,(e)))))",
        &[3, 1, 2, 4, 1, 2],
        &[1, 2, 1, 2],
    ),
    efo1(
        "3c",
        "r1(a1,x1) & r2(x1,f) & r3(a2,x2) & r4(x2,f) & r5(x1,x2)",
        "(i,(p,(i,(p,(e)),(p,(p,(e))))),(p,(p,(e))))",
        &[4, 3, 5, 1, 2, 1],
        &[2, 1, 1],
    ),
    efo1(
        "3cm",
        "r1(a1,x1) & r2(x1,f) & r3(a2,x2) & r4(x2,f) & r5(x1,x2) & r6(x1,f)",
        "(i,(i,(p,(p,(e))),(p,(p,(e)))),(p,(i,(p,(e)),(p,(p,(e))))))",
        &[2, 1, 6, 1, 4, 3, 5, 1],
        &[1, 1, 2, 1],
    ),
];

/// Structures whose operator tree is exact, plus the legacy `pni`.
pub const LEGACY: &[&str] = &[
    "1p", "2p", "3p", "2i", "3i", "ip", "pi", "2u", "up", "2in", "3in", "inp", "pin", "pni",
];

/// Structures that need the full query-graph treatment.
pub const NEW: &[&str] = &["pni", "2il", "3il", "2m", "2nm", "3mp", "3pm", "im", "3c", "3cm"];

pub fn structure(name: &str) -> Result<&'static Structure, SampleError> {
    STRUCTURES
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| SampleError::UnknownStructure(name.to_string()))
}

impl Structure {
    pub fn lisp_tree(&self) -> LispNode {
        parse_lisp_tree(self.lisp).expect("built-in lisp form")
    }

    /// The operator tree grounded with slot markers as ids.
    pub fn slot_tree(&self) -> OpTree {
        let rs: Vec<RelationId> = self.lisp_relations.iter().map(|&r| RelationId(r)).collect();
        let es: Vec<EntityId> = self.lisp_entities.iter().map(|&e| EntityId(e)).collect();
        self.lisp_tree().ground(&rs, &es).expect("built-in slot lists")
    }

    /// The query template; relation ids and constants are slot numbers.
    pub fn template(&self) -> Formula {
        match self.efo1 {
            Some(t) => parse_efo1(t).expect("built-in template"),
            None => self.slot_tree().to_formula().expect("tree forms without negated compounds"),
        }
    }

    /// True when the operator tree expresses the same query.
    pub fn tree_is_exact(&self) -> bool {
        self.efo1.is_none()
    }

    pub fn has_negation(&self) -> bool {
        self.template().contains_negation()
    }
}

/// Operator-tree form of a grounded query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeForm {
    pub lisp: String,
    pub relations: Vec<RelationId>,
    pub entities: Vec<EntityId>,
}

impl TreeForm {
    pub fn op_tree(&self) -> Result<OpTree, LogicError> {
        parse_lisp_tree(&self.lisp)?.ground(&self.relations, &self.entities)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySample {
    pub structure: String,
    pub formula: Formula,
    pub easy_answers: BTreeSet<EntityId>,
    pub hard_answers: BTreeSet<EntityId>,
    pub tree_form: Option<TreeForm>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    structure: String,
    formula: String,
    easy_answers: Vec<EntityId>,
    hard_answers: Vec<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tree_form: Option<TreeForm>,
}

impl QuerySample {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&SampleRecord {
            structure: self.structure.clone(),
            formula: self.formula.to_string(),
            easy_answers: self.easy_answers.iter().copied().collect(),
            hard_answers: self.hard_answers.iter().copied().collect(),
            tree_form: self.tree_form.clone(),
        })
        .expect("plain record")
    }

    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let rec: SampleRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        Ok(QuerySample {
            structure: rec.structure,
            formula: parse_efo1(&rec.formula).map_err(|e| e.to_string())?,
            easy_answers: rec.easy_answers.into_iter().collect(),
            hard_answers: rec.hard_answers.into_iter().collect(),
            tree_form: rec.tree_form,
        })
    }

    /// Recomputes both answer sets and compares them with the stored ones.
    pub fn revalidate(
        &self,
        observed: &KnowledgeGraph,
        complete: &KnowledgeGraph,
        limit: OracleLimit,
    ) -> Result<bool, SampleError> {
        let (easy, hard) = answer_split(&self.formula, observed, complete, limit)?;
        Ok(easy == self.easy_answers && hard == self.hard_answers)
    }
}

/// `(easy, hard)`: answers on the observed graph, and complete-graph answers
/// not among them.
pub fn answer_split(
    formula: &Formula,
    observed: &KnowledgeGraph,
    complete: &KnowledgeGraph,
    limit: OracleLimit,
) -> Result<(BTreeSet<EntityId>, BTreeSet<EntityId>), SampleError> {
    let easy = answer_set_symbolic(formula, observed, limit)?;
    let all = answer_set_symbolic(formula, complete, limit)?;
    let hard = all.difference(&easy).copied().collect();
    Ok((easy, hard))
}

fn signed_atoms(f: &Formula, positive: bool, out: &mut Vec<(Atom, bool)>) {
    match f {
        Formula::Atom(a) => out.push((a.clone(), positive)),
        Formula::Not(g) => signed_atoms(g, !positive, out),
        Formula::Exists(_, g) => signed_atoms(g, positive, out),
        Formula::And(a, b) | Formula::Or(a, b) => {
            signed_atoms(a, positive, out);
            signed_atoms(b, positive, out);
        }
    }
}

#[derive(Default)]
struct Binding {
    vars: HashMap<String, EntityId>,
    anchors: HashMap<EntityId, EntityId>,
    relations: HashMap<RelationId, RelationId>,
}

impl Binding {
    fn value(&self, t: &Term) -> Option<EntityId> {
        match t {
            Term::Const(slot) => self.anchors.get(slot).copied(),
            Term::Free(n) | Term::Exist(n) => self.vars.get(n).copied(),
        }
    }

    fn bind(&mut self, t: &Term, e: EntityId) {
        match t {
            Term::Const(slot) => self.anchors.insert(*slot, e),
            Term::Free(n) | Term::Exist(n) => self.vars.insert(n.clone(), e),
        };
    }
}

/// Fills every slot of `template` by walking `kg` backward from `answer`.
/// Returns `None` when the walk hits a dead end.
fn ground(
    template: &Formula,
    kg: &KnowledgeGraph,
    answer: EntityId,
    rng: &mut impl Rng,
) -> Option<(HashMap<RelationId, RelationId>, HashMap<EntityId, EntityId>)> {
    let mut pending = Vec::new();
    signed_atoms(template, true, &mut pending);
    let mut b = Binding::default();
    let free = template.free_variables().first().map_or(FREE_VAR, |v| v).to_string();
    b.vars.insert(free, answer);
    while !pending.is_empty() {
        let known = |(a, _): &(Atom, bool)| {
            b.value(&a.head).is_some() as u8 + b.value(&a.tail).is_some() as u8
        };
        let rank = |lit: &(Atom, bool)| match (known(lit), lit.1) {
            (1, true) => 0,
            (1, false) => 1,
            (2, _) => 2,
            _ => 3,
        };
        let i = (0..pending.len()).min_by_key(|&i| rank(&pending[i]))?;
        let (atom, positive) = pending.remove(i);
        let fixed = b.relations.get(&atom.relation).copied();
        let (h, t) = (b.value(&atom.head), b.value(&atom.tail));
        match (h, t, positive) {
            (Some(h), None, true) => {
                let opts: Vec<_> = kg
                    .outgoing(h)
                    .iter()
                    .filter(|(r, _)| fixed.is_none_or(|f| f == *r))
                    .collect();
                let &(r, e) = *opts.choose(rng)?;
                b.relations.insert(atom.relation, r);
                b.bind(&atom.tail, e);
            }
            (None, Some(t), true) => {
                let opts: Vec<_> = kg
                    .incoming(t)
                    .iter()
                    .filter(|(r, _)| fixed.is_none_or(|f| f == *r))
                    .collect();
                let &(r, e) = *opts.choose(rng)?;
                b.relations.insert(atom.relation, r);
                b.bind(&atom.head, e);
            }
            (Some(h), Some(t), true) => {
                let opts: Vec<RelationId> = kg
                    .outgoing(h)
                    .iter()
                    .filter(|(r, e)| *e == t && fixed.is_none_or(|f| f == *r))
                    .map(|(r, _)| *r)
                    .collect();
                b.relations.insert(atom.relation, *opts.choose(rng)?);
            }
            (Some(h), Some(t), false) => {
                let r = match fixed {
                    Some(r) => r,
                    None => RelationId(rng.gen_range(0..kg.relation_count().max(1)) as u32),
                };
                if kg.contains(h, r, t) {
                    return None;
                }
                b.relations.insert(atom.relation, r);
            }
            _ => {
                // A random triple supplies the missing endpoints; a negated
                // literal must then be false for the bound ones.
                let tr = kg
                    .triples()
                    .choose_multiple(rng, 64)
                    .find(|tr| fixed.is_none_or(|f| f == tr.relation))?;
                let hh = h.unwrap_or(tr.head);
                let tt = t.unwrap_or(tr.tail);
                if !positive && kg.contains(hh, tr.relation, tt) {
                    return None;
                }
                if positive && !kg.contains(hh, tr.relation, tt) {
                    return None;
                }
                b.relations.insert(atom.relation, tr.relation);
                b.bind(&atom.head, hh);
                b.bind(&atom.tail, tt);
            }
        }
    }
    Some((b.relations, b.anchors))
}

fn self_loop_atom(f: &Formula) -> bool {
    f.atoms().iter().any(|a| a.head == a.tail)
}

/// Samples one grounded query of `structure`.
pub fn sample(
    structure: &Structure,
    observed: &KnowledgeGraph,
    complete: &KnowledgeGraph,
    rng: &mut impl Rng,
    max_attempts: usize,
    limit: OracleLimit,
) -> Result<QuerySample, SampleError> {
    sample_excluding(structure, observed, complete, rng, max_attempts, limit, &HashSet::new())
}

fn sample_excluding(
    structure: &Structure,
    observed: &KnowledgeGraph,
    complete: &KnowledgeGraph,
    rng: &mut impl Rng,
    max_attempts: usize,
    limit: OracleLimit,
    seen: &HashSet<String>,
) -> Result<QuerySample, SampleError> {
    let template = structure.template();
    let targets: Vec<EntityId> = (0..complete.entity_count() as u32)
        .map(EntityId)
        .filter(|&e| !complete.incoming(e).is_empty())
        .collect();
    for _ in 0..max_attempts {
        let Some(&answer) = targets.choose(rng) else { break };
        let Some((rels, ents)) = ground(&template, complete, answer, rng) else {
            continue;
        };
        let formula = template.map_ids(&|r| rels[&r], &|e| ents[&e]);
        if self_loop_atom(&formula)
            || detect_trivial_subsentence(&formula)
            || seen.contains(&formula.to_string())
        {
            continue;
        }
        let (easy, hard) = answer_split(&formula, observed, complete, limit)?;
        if hard.is_empty() {
            continue;
        }
        let tree_form = TreeForm {
            lisp: structure.lisp.to_string(),
            relations: structure.lisp_relations.iter().map(|s| rels[&RelationId(*s)]).collect(),
            entities: structure.lisp_entities.iter().map(|s| ents[&EntityId(*s)]).collect(),
        };
        return Ok(QuerySample {
            structure: structure.name.to_string(),
            formula,
            easy_answers: easy,
            hard_answers: hard,
            tree_form: Some(tree_form),
        });
    }
    Err(SampleError::Exhausted {
        structure: structure.name.to_string(),
        attempts: max_attempts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleConfig {
    pub seed: u64,
    pub max_attempts: usize,
    pub limit: OracleLimit,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            seed: 0,
            max_attempts: 200,
            limit: OracleLimit::default(),
        }
    }
}

/// Up to `count` distinct samples per structure. Each structure draws from its
/// own stream of the seed, so the result does not depend on scheduling. A
/// structure stops early once a fresh sample cannot be found.
pub fn sample_dataset(
    names: &[&str],
    count: usize,
    observed: &KnowledgeGraph,
    complete: &KnowledgeGraph,
    cfg: SampleConfig,
) -> Result<Vec<Vec<QuerySample>>, SampleError> {
    let structures = names
        .iter()
        .map(|n| structure(n))
        .collect::<Result<Vec<_>, _>>()?;
    structures
        .par_iter()
        .map(|s| {
            let idx = STRUCTURES.iter().position(|x| x.name == s.name).expect("registered");
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(idx as u64);
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                match sample_excluding(
                    s,
                    observed,
                    complete,
                    &mut rng,
                    cfg.max_attempts,
                    cfg.limit,
                    &seen,
                ) {
                    Ok(q) => {
                        seen.insert(q.formula.to_string());
                        out.push(q);
                    }
                    Err(SampleError::Exhausted { .. }) => break,
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect()
}

/// Writes samples as JSON lines; returns how many per structure.
pub fn emit_dataset(
    names: &[&str],
    count: usize,
    observed: &KnowledgeGraph,
    complete: &KnowledgeGraph,
    cfg: SampleConfig,
    path: &Path,
) -> Result<Vec<(String, usize)>, SampleError> {
    let per = sample_dataset(names, count, observed, complete, cfg)?;
    write_samples(per.iter().flatten(), path)?;
    Ok(names
        .iter()
        .zip(&per)
        .map(|(n, v)| (n.to_string(), v.len()))
        .collect())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SampleError + '_ {
    move |source| SampleError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_samples<'a>(
    samples: impl IntoIterator<Item = &'a QuerySample>,
    path: &Path,
) -> Result<(), SampleError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for q in samples {
        writeln!(w, "{}", q.to_json_line()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_samples(path: &Path) -> Result<Vec<QuerySample>, SampleError> {
    let r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(QuerySample::from_json_line(&line).map_err(|message| SampleError::Format {
            path: path.display().to_string(),
            line: i + 1,
            message,
        })?);
    }
    Ok(out)
}
