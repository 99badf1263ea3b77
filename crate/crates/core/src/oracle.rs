//! Reference evaluators used to check the inference engine.
//!
//! All of them are deliberately naive: the brute-force evaluators walk every
//! assignment of every variable, and the operator-tree evaluator applies set
//! operators on full dense vectors.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::fuzzy::{FuzzyVector, RelationMatrices, TNorm};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::logic::{Formula, LogicError, OpTree, Term};
use crate::scalar::Scalar;

/// Upper bound on `|E|^(variables)` an evaluation may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimit {
    pub max_assignments: u64,
}

impl Default for OracleLimit {
    fn default() -> Self {
        OracleLimit {
            max_assignments: 10_000_000,
        }
    }
}

impl OracleLimit {
    fn check(&self, formula: &Formula, entities: usize) -> Result<(), OracleError> {
        let mut vars = 1u32;
        formula.visit(&mut |g| vars += matches!(g, Formula::Exists(..)) as u32);
        let needed = (entities as u64).saturating_pow(vars);
        if needed > self.max_assignments {
            return Err(OracleError::LimitExceeded {
                needed,
                limit: self.max_assignments,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("evaluation needs {needed} assignments, above the limit of {limit}")]
    LimitExceeded { needed: u64, limit: u64 },
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("variable {0} has no value")]
    Unassigned(String),
    #[error("relation or entity id out of range in {0}")]
    OutOfRange(String),
    #[error("operator tree is not a tree-form query without universal semantics: {0}")]
    UnsupportedTree(String),
}

/// Connectives for fuzzy evaluation; existentials always use max.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Connectives {
    pub conj: TNorm,
    pub disj: TNorm,
}

impl Connectives {
    pub fn new(conj: TNorm, disj: TNorm) -> Self {
        Connectives { conj, disj }
    }
}

type Env = HashMap<String, EntityId>;

fn resolve(t: &Term, env: &Env) -> Result<EntityId, OracleError> {
    match t {
        Term::Const(e) => Ok(*e),
        Term::Free(n) | Term::Exist(n) => {
            env.get(n).copied().ok_or_else(|| OracleError::Unassigned(n.clone()))
        }
    }
}

fn fuzzy_eval<T: Scalar>(
    f: &Formula,
    env: &mut Env,
    mats: &RelationMatrices<T>,
    ops: Connectives,
) -> Result<T, OracleError> {
    Ok(match f {
        Formula::Atom(a) => {
            let (h, t) = (resolve(&a.head, env)?, resolve(&a.tail, env)?);
            let n = mats.entity_count();
            let m = mats
                .matrix(a.relation)
                .filter(|_| h.index() < n && t.index() < n)
                .ok_or_else(|| OracleError::OutOfRange(a.to_string()))?;
            m.get(h.index(), t.index())
        }
        Formula::Not(g) => T::one() - fuzzy_eval(g, env, mats, ops)?,
        Formula::And(a, b) => {
            let x = fuzzy_eval(a, env, mats, ops)?;
            ops.conj.t(x, fuzzy_eval(b, env, mats, ops)?)
        }
        Formula::Or(a, b) => {
            let x = fuzzy_eval(a, env, mats, ops)?;
            ops.disj.s(x, fuzzy_eval(b, env, mats, ops)?)
        }
        Formula::Exists(v, g) => {
            let saved = env.get(v).copied();
            let mut best = T::zero();
            for e in 0..mats.entity_count() {
                env.insert(v.clone(), EntityId(e as u32));
                best = best.max(fuzzy_eval(g, env, mats, ops)?);
                if best == T::one() {
                    break;
                }
            }
            match saved {
                Some(s) => env.insert(v.clone(), s),
                None => env.remove(v),
            };
            best
        }
    })
}

/// Truth value of a formula once its free variables are fixed by `assignment`.
pub fn truth_value<T: Scalar>(
    formula: &Formula,
    assignment: &[(&str, EntityId)],
    mats: &RelationMatrices<T>,
    ops: Connectives,
    limit: OracleLimit,
) -> Result<T, OracleError> {
    limit.check(formula, mats.entity_count())?;
    let mut env: Env = assignment.iter().map(|(n, e)| (n.to_string(), *e)).collect();
    fuzzy_eval(formula, &mut env, mats, ops)
}

fn free_name(formula: &Formula) -> Result<String, OracleError> {
    formula.validate()?;
    Ok(formula.free_variables()[0].to_string())
}

/// Truth value of every substitution of the free variable.
pub fn answer_vector_bruteforce<T: Scalar>(
    formula: &Formula,
    mats: &RelationMatrices<T>,
    ops: Connectives,
    limit: OracleLimit,
) -> Result<FuzzyVector<T>, OracleError> {
    let y = free_name(formula)?;
    limit.check(formula, mats.entity_count())?;
    let values = (0..mats.entity_count())
        .into_par_iter()
        .map(|a| {
            let mut env = Env::from([(y.clone(), EntityId(a as u32))]);
            fuzzy_eval(formula, &mut env, mats, ops)
        })
        .collect::<Result<Vec<T>, _>>()?;
    Ok(FuzzyVector::from_vec_unchecked(values))
}

fn bool_eval(f: &Formula, env: &mut Env, kg: &KnowledgeGraph) -> Result<bool, OracleError> {
    Ok(match f {
        Formula::Atom(a) => {
            let (h, t) = (resolve(&a.head, env)?, resolve(&a.tail, env)?);
            kg.contains(h, a.relation, t)
        }
        Formula::Not(g) => !bool_eval(g, env, kg)?,
        Formula::And(a, b) => bool_eval(a, env, kg)? && bool_eval(b, env, kg)?,
        Formula::Or(a, b) => bool_eval(a, env, kg)? || bool_eval(b, env, kg)?,
        Formula::Exists(v, g) => {
            let saved = env.get(v).copied();
            let mut found = false;
            for e in 0..kg.entity_count() {
                env.insert(v.clone(), EntityId(e as u32));
                if bool_eval(g, env, kg)? {
                    found = true;
                    break;
                }
            }
            match saved {
                Some(s) => env.insert(v.clone(), s),
                None => env.remove(v),
            };
            found
        }
    })
}

/// Classical answer set: entities whose substitution makes the formula true
/// in `kg`.
pub fn answer_set_symbolic(
    formula: &Formula,
    kg: &KnowledgeGraph,
    limit: OracleLimit,
) -> Result<BTreeSet<EntityId>, OracleError> {
    let y = free_name(formula)?;
    limit.check(formula, kg.entity_count())?;
    if formula
        .relations()
        .iter()
        .any(|r| r.index() >= kg.relation_count())
        || formula.constants().iter().any(|e| e.index() >= kg.entity_count())
    {
        return Err(OracleError::OutOfRange(formula.to_string()));
    }
    let hits = (0..kg.entity_count())
        .into_par_iter()
        .map(|a| {
            let e = EntityId(a as u32);
            let mut env = Env::from([(y.clone(), e)]);
            bool_eval(formula, &mut env, kg).map(|b| b.then_some(e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(hits.into_iter().flatten().collect())
}

/// Bottom-up evaluation of an operator tree on dense vectors: projection is
/// a max-product matrix step, intersection a left-to-right product,
/// union an elementwise max, negation `1 - v`. Negation is only accepted
/// directly under an intersection that also has a non-negated branch.
pub fn operator_tree_maxprod<T: Scalar>(
    tree: &OpTree,
    mats: &RelationMatrices<T>,
) -> Result<FuzzyVector<T>, OracleError> {
    check_tree(tree, false)?;
    eval_tree(tree, mats)
}

fn check_tree(tree: &OpTree, under_intersection: bool) -> Result<(), OracleError> {
    match tree {
        OpTree::Anchor(_) => Ok(()),
        OpTree::Project(_, c) => check_tree(c, false),
        OpTree::Negate(c) if under_intersection => check_tree(c, false),
        OpTree::Negate(_) => Err(OracleError::UnsupportedTree(
            "negation outside an intersection".into(),
        )),
        OpTree::Intersect(cs) => {
            if cs.iter().all(|c| matches!(c, OpTree::Negate(_))) {
                return Err(OracleError::UnsupportedTree(
                    "intersection of negations only".into(),
                ));
            }
            cs.iter().try_for_each(|c| check_tree(c, true))
        }
        OpTree::Union(cs) => cs.iter().try_for_each(|c| check_tree(c, false)),
    }
}

fn eval_tree<T: Scalar>(
    tree: &OpTree,
    mats: &RelationMatrices<T>,
) -> Result<FuzzyVector<T>, OracleError> {
    let n = mats.entity_count();
    Ok(match tree {
        OpTree::Anchor(a) => {
            if a.index() >= n {
                return Err(OracleError::OutOfRange(a.to_string()));
            }
            FuzzyVector::one_hot(n, a.index())
        }
        OpTree::Project(r, c) => {
            let v = eval_tree(c, mats)?;
            let m = mats
                .matrix(*r)
                .ok_or_else(|| OracleError::OutOfRange(r.to_string()))?;
            let mut out = vec![T::zero(); n];
            for (b, vb) in v.iter().enumerate() {
                let row = m.row(b);
                for (c, o) in out.iter_mut().enumerate() {
                    *o = o.max(vb * row.get(c));
                }
            }
            FuzzyVector::from_vec_unchecked(out)
        }
        OpTree::Intersect(cs) => {
            let mut acc: Option<FuzzyVector<T>> = None;
            for c in cs {
                let v = eval_tree(c, mats)?;
                acc = Some(match acc {
                    None => v,
                    Some(a) => a.combine(TNorm::Product, &v).expect("equal lengths"),
                });
            }
            acc.unwrap_or_else(|| FuzzyVector::ones(n))
        }
        OpTree::Union(cs) => {
            let mut acc = FuzzyVector::zeros(n);
            for c in cs {
                acc.max_assign(&eval_tree(c, mats)?).expect("equal lengths");
            }
            acc
        }
        OpTree::Negate(c) => eval_tree(c, mats)?.complement(),
    })
}
