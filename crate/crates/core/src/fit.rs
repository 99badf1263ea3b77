//! The inference engine.
//!
//! Each conjunctive clause is turned into a query graph whose nodes carry
//! candidate vectors (all ones for variables, one-hot for constants). The
//! graph is reduced in a fixed priority order until only the free variable
//! is left:
//!
//! 1. self-loops fold the relation diagonal into their node,
//! 2. constants push their matrix rows into their neighbours,
//! 3. a leaf is absorbed into its neighbour through a max over the leaf's
//!    values (a free leaf instead promotes its neighbour and recurses),
//! 4. otherwise a cycle node is enumerated over its best candidates.
//!
//! Clause answers are joined with the disjunction t-conorm.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::{FuzzyMatrix, FuzzyVector, MatrixSet, RelationMatrices, TNorm};
use crate::graph::{GraphEdge, GraphError, NodeKind, QueryGraph};
use crate::kg::{EntityId, RelationId};
use crate::logic::{detect_trivial_subsentence, to_dnf, ConjunctiveClause, Formula, LogicError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub conj: TNorm,
    pub disj: TNorm,
    /// Aggregation for existential quantifiers; only Gödel is accepted.
    pub exist: TNorm,
    /// Extra enumeration candidates beyond those with value exactly 1.
    pub budget_m: usize,
    pub max_enumeration_depth: usize,
    /// Route clauses without existential variables to the dense variant.
    pub use_dense_variant: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            conj: TNorm::Product,
            disj: TNorm::Godel,
            exist: TNorm::Godel,
            budget_m: 10,
            max_enumeration_depth: 3,
            use_dense_variant: true,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.exist != TNorm::Godel {
            return Err(FitError::InvalidConfig(format!(
                "existential aggregation must be godel (max), got {}; absorbing a leaf \
                 exchanges the max over its values with the conjunction, which only holds for max",
                self.exist
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("query contains a sentence whose truth value does not depend on the answer")]
    TrivialSubsentence,
    #[error("constant {0} has a self-loop")]
    ConstantSelfLoop(EntityId),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("relation {relation} is not in the matrix set ({available} relations)")]
    UnknownRelation {
        relation: RelationId,
        available: usize,
    },
    #[error("entity {entity} is out of range ({available} entities)")]
    UnknownEntity { entity: EntityId, available: usize },
    #[error("enumeration nested deeper than the cap of {0}")]
    EnumerationDepth(usize),
    #[error("invalid inference config: {0}")]
    InvalidConfig(String),
}

/// Work counters, summed over every step of a query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct InferenceStats {
    /// Matrix entries read.
    pub entry_visits: u64,
    pub constant_removals: u64,
    pub leaf_cuts: u64,
    pub enumerations: u64,
    pub enumerated_candidates: u64,
}

impl AddAssign for InferenceStats {
    fn add_assign(&mut self, o: Self) {
        self.entry_visits += o.entry_visits;
        self.constant_removals += o.constant_removals;
        self.leaf_cuts += o.leaf_cuts;
        self.enumerations += o.enumerations;
        self.enumerated_candidates += o.enumerated_candidates;
    }
}

/// A partially reduced query graph with one candidate vector per node.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceState<T> {
    nodes: Vec<NodeKind>,
    candidates: Vec<FuzzyVector<T>>,
    edges: Vec<GraphEdge>,
    /// Truth value of parts already reduced to a number.
    scalar: T,
    depth: usize,
}

impl<T: Scalar> InferenceState<T> {
    pub fn new(graph: &QueryGraph, entity_count: usize) -> Self {
        let candidates = graph
            .nodes()
            .iter()
            .map(|k| match k {
                NodeKind::Constant(a) => FuzzyVector::one_hot(entity_count, a.index()),
                _ => FuzzyVector::ones(entity_count),
            })
            .collect();
        InferenceState {
            nodes: graph.nodes().to_vec(),
            candidates,
            edges: graph.edges().to_vec(),
            scalar: T::one(),
            depth: 0,
        }
    }

    pub fn graph(&self) -> QueryGraph {
        QueryGraph::from_parts(self.nodes.clone(), self.edges.clone())
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn candidate(&self, node: usize) -> &FuzzyVector<T> {
        &self.candidates[node]
    }

    pub fn set_candidate(&mut self, node: usize, v: FuzzyVector<T>) {
        assert_eq!(v.len(), self.candidates[node].len(), "candidate length");
        self.candidates[node] = v;
    }

    fn remove_node(&mut self, i: usize) {
        self.edges.retain(|e| !e.touches(i));
        for e in &mut self.edges {
            if e.head > i {
                e.head -= 1;
            }
            if e.tail > i {
                e.tail -= 1;
            }
        }
        self.nodes.remove(i);
        self.candidates.remove(i);
    }

    fn degree(&self, i: usize) -> usize {
        let mut nb: Vec<usize> = self
            .edges
            .iter()
            .filter(|e| e.touches(i) && !e.is_loop())
            .map(|e| e.other(i))
            .collect();
        nb.sort_unstable();
        nb.dedup();
        nb.len()
    }
}

struct Ctx<'m, T> {
    mats: &'m RelationMatrices<T>,
    cfg: &'m InferenceConfig,
    stats: InferenceStats,
}

enum LeafOutcome<T> {
    Continue,
    Done(FuzzyVector<T>),
}

impl<'m, T: Scalar> Ctx<'m, T> {
    fn matrix(&self, r: RelationId) -> &'m FuzzyMatrix<T> {
        self.mats.matrix(r).expect("relations checked before inference")
    }

    fn transposed(&self, r: RelationId) -> &'m FuzzyMatrix<T> {
        self.mats.transposed(r).expect("relations checked before inference")
    }

    fn fitc(&mut self, mut st: InferenceState<T>) -> Result<FuzzyVector<T>, FitError> {
        loop {
            if st.nodes.len() == 1 {
                let v = st.candidates.pop().expect("one node");
                return Ok(if st.scalar == T::one() {
                    v
                } else {
                    v.scale(self.cfg.conj, st.scalar)
                });
            }
            if st.edges.iter().any(GraphEdge::is_loop) {
                self.self_loops(&mut st);
                continue;
            }
            if st.nodes.iter().any(NodeKind::is_constant) {
                self.remove_constants(&mut st);
                continue;
            }
            if let Some(x) = (0..st.nodes.len()).find(|&i| st.degree(i) == 0) {
                if !st.nodes[x].is_existential() {
                    return Err(GraphError::Disconnected.into());
                }
                st.scalar = self.cfg.conj.t(st.scalar, st.candidates[x].max_value());
                st.remove_node(x);
                continue;
            }
            if let Some(u) = (0..st.nodes.len()).find(|&i| st.degree(i) == 1) {
                match self.cut_leaf(&mut st, u)? {
                    LeafOutcome::Continue => continue,
                    LeafOutcome::Done(v) => return Ok(v),
                }
            }
            return self.enumerate(st);
        }
    }

    fn self_loops(&mut self, st: &mut InferenceState<T>) {
        let conj = self.cfg.conj;
        let loops: Vec<GraphEdge> = st.edges.iter().copied().filter(GraphEdge::is_loop).collect();
        for e in loops {
            let m = self.matrix(e.relation);
            let cand = st.candidates[e.head].as_mut_slice();
            for (c, v) in cand.iter_mut().enumerate() {
                if *v == T::zero() {
                    continue;
                }
                let d = m.get(c, c);
                self.stats.entry_visits += 1;
                *v = conj.t(*v, if e.positive { d } else { T::one() - d });
            }
            st.candidates[e.head].debug_check();
        }
        st.edges.retain(|e| !e.is_loop());
    }

    /// Pushes every constant's edges into its neighbours, in edge order, then
    /// drops the constant nodes.
    fn remove_constants(&mut self, st: &mut InferenceState<T>) {
        let conj = self.cfg.conj;
        let constant = |st: &InferenceState<T>, i: usize| match st.nodes[i] {
            NodeKind::Constant(a) => Some(a),
            _ => None,
        };
        let incident: Vec<GraphEdge> = st
            .edges
            .iter()
            .copied()
            .filter(|e| constant(st, e.head).is_some() || constant(st, e.tail).is_some())
            .collect();
        for e in incident {
            if let (Some(h), Some(t)) = (constant(st, e.head), constant(st, e.tail)) {
                let p = self.matrix(e.relation).get(h.index(), t.index());
                self.stats.entry_visits += 1;
                st.scalar = conj.t(st.scalar, if e.positive { p } else { T::one() - p });
                continue;
            }
            let (row, v) = match constant(st, e.head) {
                Some(a) => (self.matrix(e.relation).row(a.index()), e.tail),
                None => {
                    let a = constant(st, e.tail).expect("filtered");
                    (self.transposed(e.relation).row(a.index()), e.head)
                }
            };
            self.stats.entry_visits += row.stored_len() as u64;
            let cand = &mut st.candidates[v];
            if e.positive {
                let mut next = vec![T::zero(); cand.len()];
                for (c, p) in row.nonzeros() {
                    next[c] = conj.t(cand.get(c), p);
                }
                *cand = FuzzyVector::from_vec_unchecked(next);
            } else {
                let slice = cand.as_mut_slice();
                for (c, p) in row.nonzeros() {
                    slice[c] = conj.t(slice[c], T::one() - p);
                }
                cand.debug_check();
            }
        }
        for k in (0..st.nodes.len()).rev() {
            if st.nodes[k].is_constant() {
                self.stats.constant_removals += 1;
                st.remove_node(k);
            }
        }
    }

    /// `M(c) = max_b [ w(b) t E(b, c) ]` where `E` combines, with the
    /// conjunction, every edge between the source node `s` and its neighbour.
    fn absorb(&mut self, w: &FuzzyVector<T>, s: usize, edges: &[GraphEdge]) -> FuzzyVector<T> {
        let conj = self.cfg.conj;
        let n = w.len();
        let oriented = |ctx: &Self, e: &GraphEdge| {
            if e.head == s {
                ctx.matrix(e.relation)
            } else {
                ctx.transposed(e.relation)
            }
        };
        let pos: Vec<&FuzzyMatrix<T>> =
            edges.iter().filter(|e| e.positive).map(|e| oriented(self, e)).collect();
        let neg: Vec<&FuzzyMatrix<T>> =
            edges.iter().filter(|e| !e.positive).map(|e| oriented(self, e)).collect();
        let mut m = vec![T::zero(); n];
        for (b, wb) in w.iter().enumerate() {
            if wb == T::zero() {
                continue;
            }
            if let Some((first, rest)) = pos.split_first() {
                let row = first.row(b);
                self.stats.entry_visits += row.stored_len() as u64;
                for (c, p) in row.nonzeros() {
                    let mut val = p;
                    for other in rest {
                        val = conj.t(val, other.get(b, c));
                    }
                    for ng in &neg {
                        val = conj.t(val, T::one() - ng.get(b, c));
                    }
                    self.stats.entry_visits += (rest.len() + neg.len()) as u64;
                    m[c] = m[c].max(conj.t(wb, val));
                }
            } else {
                let rows: Vec<_> = neg.iter().map(|ng| ng.row(b)).collect();
                self.stats.entry_visits += (n * rows.len()) as u64;
                for (c, mc) in m.iter_mut().enumerate() {
                    let mut val = T::one();
                    for row in &rows {
                        val = conj.t(val, T::one() - row.get(c));
                    }
                    *mc = mc.max(conj.t(wb, val));
                }
            }
        }
        FuzzyVector::from_vec_unchecked(m)
    }

    fn cut_leaf(
        &mut self,
        st: &mut InferenceState<T>,
        u: usize,
    ) -> Result<LeafOutcome<T>, FitError> {
        let conj = self.cfg.conj;
        self.stats.leaf_cuts += 1;
        let v = st
            .edges
            .iter()
            .find(|e| e.touches(u))
            .map(|e| e.other(u))
            .expect("leaf has a neighbour");
        if st.nodes[u].is_free() {
            // Promote the neighbour to free, answer the rest, then carry the
            // result across the cut edges.
            let mut sub = st.clone();
            let name = match &st.nodes[u] {
                NodeKind::Free(n) => n.clone(),
                _ => unreachable!(),
            };
            sub.nodes[v] = NodeKind::Free(name);
            sub.remove_node(u);
            let s_val = self.fitc(sub)?;
            let edges: Vec<GraphEdge> =
                st.edges.iter().copied().filter(|e| e.touches(u)).collect();
            let m = self.absorb(&s_val, v, &edges);
            let out = st.candidates[u].combine(conj, &m).expect("equal lengths");
            return Ok(LeafOutcome::Done(out));
        }
        let edges: Vec<GraphEdge> = st.edges.iter().copied().filter(|e| e.touches(u)).collect();
        let m = self.absorb(&st.candidates[u], u, &edges);
        st.candidates[v] = st.candidates[v].combine(conj, &m).expect("equal lengths");
        st.remove_node(u);
        Ok(LeafOutcome::Continue)
    }

    fn enumerate(&mut self, st: InferenceState<T>) -> Result<FuzzyVector<T>, FitError> {
        if st.depth >= self.cfg.max_enumeration_depth {
            return Err(FitError::EnumerationDepth(self.cfg.max_enumeration_depth));
        }
        let u = st.graph().pick_enumeration_node()?;
        let cu = st.candidates[u].clone();
        let certain = cu.iter().filter(|v| *v == T::one()).count();
        let picks: Vec<(EntityId, T)> = cu
            .top_k(certain + self.cfg.budget_m)
            .into_iter()
            .filter(|(_, v)| *v > T::zero())
            .collect();
        self.stats.enumerations += 1;
        self.stats.enumerated_candidates += picks.len() as u64;
        let n = cu.len();
        let mut out = FuzzyVector::zeros(n);
        for (a, value) in picks {
            let mut sub = st.clone();
            sub.nodes[u] = NodeKind::Constant(a);
            sub.candidates[u] = FuzzyVector::one_hot(n, a.index());
            sub.depth += 1;
            let ans = self.fitc(sub)?;
            out.max_assign(&ans.scale(self.cfg.conj, value))
                .expect("equal lengths");
        }
        Ok(out)
    }
}

fn with_ctx<T: Scalar, R>(
    mats: &RelationMatrices<T>,
    cfg: &InferenceConfig,
    f: impl FnOnce(&mut Ctx<'_, T>) -> R,
) -> R {
    let mut ctx = Ctx {
        mats,
        cfg,
        stats: InferenceStats::default(),
    };
    f(&mut ctx)
}

/// Reduces a state to the free variable's answer vector.
pub fn fitc<T: Scalar>(
    state: InferenceState<T>,
    mats: &RelationMatrices<T>,
    cfg: &InferenceConfig,
) -> Result<FuzzyVector<T>, FitError> {
    with_ctx(mats, cfg, |c| c.fitc(state))
}

pub fn step_self_loops<T: Scalar>(
    state: &mut InferenceState<T>,
    mats: &RelationMatrices<T>,
    cfg: &InferenceConfig,
) {
    with_ctx(mats, cfg, |c| c.self_loops(state))
}

/// Removes every constant node, applying their edges in literal order.
pub fn step_remove_constants<T: Scalar>(
    state: &mut InferenceState<T>,
    mats: &RelationMatrices<T>,
    cfg: &InferenceConfig,
) {
    with_ctx(mats, cfg, |c| c.remove_constants(state))
}

/// Cuts the lowest-index leaf. Returns `Some(answer)` when the leaf was the
/// free variable (the rest of the graph is answered recursively), `None`
/// after an ordinary cut or when no leaf exists.
pub fn step_cut_leaf<T: Scalar>(
    state: &mut InferenceState<T>,
    mats: &RelationMatrices<T>,
    cfg: &InferenceConfig,
) -> Result<Option<FuzzyVector<T>>, FitError> {
    let Some(u) = (0..state.nodes.len()).find(|&i| state.degree(i) == 1) else {
        return Ok(None);
    };
    with_ctx(mats, cfg, |c| match c.cut_leaf(state, u)? {
        LeafOutcome::Continue => Ok(None),
        LeafOutcome::Done(v) => Ok(Some(v)),
    })
}

pub fn step_enumerate<T: Scalar>(
    state: InferenceState<T>,
    mats: &RelationMatrices<T>,
    cfg: &InferenceConfig,
) -> Result<FuzzyVector<T>, FitError> {
    with_ctx(mats, cfg, |c| c.enumerate(state))
}

fn check_ids<T: Scalar>(formula: &Formula, matrices: &MatrixSet<T>) -> Result<(), FitError> {
    if let Some(&r) = formula
        .relations()
        .iter()
        .find(|r| r.index() >= matrices.relation_count())
    {
        return Err(FitError::UnknownRelation {
            relation: r,
            available: matrices.relation_count(),
        });
    }
    if let Some(&a) = formula
        .constants()
        .iter()
        .find(|a| a.index() >= matrices.entity_count())
    {
        return Err(FitError::UnknownEntity {
            entity: a,
            available: matrices.entity_count(),
        });
    }
    Ok(())
}

/// Answers a formula: normalize, reject trivial or ill-formed queries,
/// reduce every clause, join with the disjunction.
pub fn answer<T: Scalar>(
    formula: &Formula,
    matrices: &MatrixSet<T>,
    cfg: &InferenceConfig,
) -> Result<FuzzyVector<T>, FitError> {
    answer_with_stats(formula, matrices, cfg).map(|(v, _)| v)
}

pub fn answer_with_stats<T: Scalar>(
    formula: &Formula,
    matrices: &MatrixSet<T>,
    cfg: &InferenceConfig,
) -> Result<(FuzzyVector<T>, InferenceStats), FitError> {
    cfg.validate()?;
    check_ids(formula, matrices)?;
    let clauses = to_dnf(formula)?;
    for c in &clauses {
        if let Some(l) = c
            .literals
            .iter()
            .find(|l| l.atom.head == l.atom.tail && l.atom.head.is_const())
        {
            let crate::logic::Term::Const(a) = l.atom.head else {
                unreachable!()
            };
            return Err(FitError::ConstantSelfLoop(a));
        }
    }
    if detect_trivial_subsentence(formula) {
        return Err(FitError::TrivialSubsentence);
    }
    answer_clauses(&clauses, matrices, cfg)
}

/// Reduces already normalized clauses, skipping the triviality check.
pub fn answer_clauses<T: Scalar>(
    clauses: &[ConjunctiveClause],
    matrices: &MatrixSet<T>,
    cfg: &InferenceConfig,
) -> Result<(FuzzyVector<T>, InferenceStats), FitError> {
    cfg.validate()?;
    let n = matrices.entity_count();
    let mut stats = InferenceStats::default();
    let mut acc: Option<FuzzyVector<T>> = None;
    for clause in clauses {
        let graph = QueryGraph::from_clause(clause)?;
        let mats = match matrices.dense_variant() {
            Some(d) if cfg.use_dense_variant && clause.existentials.is_empty() => d,
            _ => matrices.primary(),
        };
        let mut ctx = Ctx {
            mats,
            cfg,
            stats: InferenceStats::default(),
        };
        let v = ctx.fitc(InferenceState::new(&graph, n))?;
        stats += ctx.stats;
        acc = Some(match acc {
            None => v,
            Some(a) => a.combine_conorm(cfg.disj, &v).expect("equal lengths"),
        });
    }
    Ok((acc.unwrap_or_else(|| FuzzyVector::zeros(n)), stats))
}

/// Cross entropy of an answer vector against an answer set, with values
/// clamped to `[1e-12, 1 - 1e-12]` before taking logs.
pub fn loss<T: Scalar>(answer: &FuzzyVector<T>, truth: &[EntityId]) -> f64 {
    const EPS: f64 = 1e-12;
    let mut is_true = vec![false; answer.len()];
    for a in truth {
        is_true[a.index()] = true;
    }
    -answer
        .iter()
        .zip(is_true)
        .map(|(v, t)| {
            let v = v.to_f64_lossy().clamp(EPS, 1.0 - EPS);
            if t {
                v.ln()
            } else {
                (1.0 - v).ln()
            }
        })
        .sum::<f64>()
}
