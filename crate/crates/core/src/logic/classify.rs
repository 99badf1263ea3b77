use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::QueryGraph;

use super::{to_dnf, Formula, LogicError};

/// Where a query sits relative to the operator-tree fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryClass {
    TreeFormSafe,
    ExistentialLeaf,
    NegationNoConstant,
    Multigraph,
    Cyclic,
    NotEfo1,
}

impl QueryClass {
    pub fn name(self) -> &'static str {
        match self {
            QueryClass::TreeFormSafe => "TreeFormSafe",
            QueryClass::ExistentialLeaf => "ExistentialLeaf",
            QueryClass::NegationNoConstant => "NegationNoConstant",
            QueryClass::Multigraph => "Multigraph",
            QueryClass::Cyclic => "Cyclic",
            QueryClass::NotEfo1 => "NotEFO1",
        }
    }
}

/// Classifies a formula: `{NotEfo1}` when its DNF needs a universal
/// quantifier, otherwise the union of the properties of its clause graphs,
/// or `{TreeFormSafe}` when no clause shows any of them.
pub fn classify(formula: &Formula) -> Result<BTreeSet<QueryClass>, LogicError> {
    let clauses = match to_dnf(formula) {
        Ok(c) => c,
        Err(LogicError::NotEfo1(_)) => return Ok(BTreeSet::from([QueryClass::NotEfo1])),
        Err(e) => return Err(e),
    };
    let mut out = BTreeSet::new();
    for clause in &clauses {
        let r = QueryGraph::from_clause_unchecked(clause).structural_report();
        if !r.acyclic {
            out.insert(QueryClass::Cyclic);
        }
        if !r.simple {
            out.insert(QueryClass::Multigraph);
        }
        if r.property1 {
            out.insert(QueryClass::NegationNoConstant);
        }
        if r.property2 {
            out.insert(QueryClass::ExistentialLeaf);
        }
    }
    if out.is_empty() {
        out.insert(QueryClass::TreeFormSafe);
    }
    Ok(out)
}

/// Whether the formula contains a sentence part, either a subformula with
/// no free variable that mixes with the rest through connectives only, or a
/// clause whose graph splits off a variable group not reaching the free
/// variable. Such queries have answers that do not depend on the candidate.
pub fn detect_trivial_subsentence(formula: &Formula) -> bool {
    if syntactic_sentence(formula) {
        return true;
    }
    match to_dnf(formula) {
        Ok(clauses) => clauses
            .iter()
            .any(|c| QueryGraph::from_clause_unchecked(c).has_sentence_component()),
        Err(_) => false,
    }
}

fn syntactic_sentence(f: &Formula) -> bool {
    match f {
        Formula::Atom(_) | Formula::Not(_) => false,
        Formula::And(a, b) | Formula::Or(a, b) => {
            open_variables(a).is_empty()
                || open_variables(b).is_empty()
                || syntactic_sentence(a)
                || syntactic_sentence(b)
        }
        Formula::Exists(_, body) => syntactic_sentence(body),
    }
}

/// Variables occurring in `f` that no quantifier inside `f` binds.
fn open_variables(f: &Formula) -> BTreeSet<&str> {
    match f {
        Formula::Atom(a) => [&a.head, &a.tail]
            .into_iter()
            .filter_map(|t| t.var_name())
            .collect(),
        Formula::Not(g) => open_variables(g),
        Formula::And(a, b) | Formula::Or(a, b) => {
            let mut out = open_variables(a);
            out.extend(open_variables(b));
            out
        }
        Formula::Exists(v, g) => {
            let mut out = open_variables(g);
            out.remove(v.as_str());
            out
        }
    }
}
