//! Existential first-order formulas with one free variable.
//!
//! Two surface languages are supported: an infix text syntax
//! (`r1(a0,x1) & !r2(x1,f)`, see [`parse_efo1`]) and the lisp-like operator
//! tree language (`(i,(p,(e)),(n,(p,(e))))`, see [`parse_lisp`]).
//! [`to_dnf`] normalizes a formula into conjunctive clauses, the unit the
//! inference engine works on.

mod classify;
mod dnf;
mod lisp;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::kg::{EntityId, RelationId};

pub use classify::{classify, detect_trivial_subsentence, QueryClass};
pub use dnf::{to_dnf, MAX_CLAUSES};
pub use lisp::{parse_lisp, parse_lisp_tree, LispNode, OpTree};
pub use parse::parse_efo1;

/// Conventional name of the free variable in generated formulas.
pub const FREE_VAR: &str = "f";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(EntityId),
    Free(String),
    Exist(String),
}

impl Term {
    pub fn is_const(&self) -> bool {
        matches!(self, Term::Const(_))
    }

    pub fn is_variable(&self) -> bool {
        !self.is_const()
    }

    pub fn var_name(&self) -> Option<&str> {
        match self {
            Term::Const(_) => None,
            Term::Free(n) | Term::Exist(n) => Some(n),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(e) => write!(f, "{e}"),
            Term::Free(n) | Term::Exist(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub relation: RelationId,
    pub head: Term,
    pub tail: Term,
}

impl Atom {
    pub fn new(relation: RelationId, head: Term, tail: Term) -> Self {
        Atom {
            relation,
            head,
            tail,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.relation, self.head, self.tail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Exists(String, Box<Formula>),
}

impl Formula {
    pub fn atom(relation: RelationId, head: Term, tail: Term) -> Self {
        Formula::Atom(Atom::new(relation, head, tail))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn exists(var: impl Into<String>, body: Formula) -> Self {
        Formula::Exists(var.into(), Box::new(body))
    }

    /// Left-nested conjunction; `None` for an empty iterator.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Option<Self> {
        parts.into_iter().reduce(Formula::and)
    }

    pub fn disjunction(parts: impl IntoIterator<Item = Formula>) -> Option<Self> {
        parts.into_iter().reduce(Formula::or)
    }

    /// Pre-order visit of every subformula, the formula itself included.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        match self {
            Formula::Atom(_) => {}
            Formula::Not(g) | Formula::Exists(_, g) => g.visit(f),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.visit(&mut |g| {
            if let Formula::Atom(a) = g {
                out.push(a);
            }
        });
        out
    }

    /// Distinct free-variable names, in order of first appearance.
    pub fn free_variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for atom in self.atoms() {
            for t in [&atom.head, &atom.tail] {
                if let Term::Free(n) = t {
                    if !out.contains(&n.as_str()) {
                        out.push(n);
                    }
                }
            }
        }
        out
    }

    pub fn contains_negation(&self) -> bool {
        let mut found = false;
        self.visit(&mut |g| found |= matches!(g, Formula::Not(_)));
        found
    }

    pub fn contains_exists(&self) -> bool {
        let mut found = false;
        self.visit(&mut |g| found |= matches!(g, Formula::Exists(..)));
        found
    }

    /// True when negation only ever applies to atoms.
    pub fn negation_on_atoms_only(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |g| {
            if let Formula::Not(inner) = g {
                ok &= matches!(**inner, Formula::Atom(_));
            }
        });
        ok
    }

    pub fn relations(&self) -> BTreeSet<RelationId> {
        self.atoms().into_iter().map(|a| a.relation).collect()
    }

    pub fn constants(&self) -> BTreeSet<EntityId> {
        self.atoms()
            .into_iter()
            .flat_map(|a| [&a.head, &a.tail])
            .filter_map(|t| match t {
                Term::Const(e) => Some(*e),
                _ => None,
            })
            .collect()
    }

    /// Renames relation and entity ids, leaving variables untouched.
    pub fn map_ids(
        &self,
        relation: &impl Fn(RelationId) -> RelationId,
        entity: &impl Fn(EntityId) -> EntityId,
    ) -> Formula {
        let term = |t: &Term| match t {
            Term::Const(e) => Term::Const(entity(*e)),
            other => other.clone(),
        };
        match self {
            Formula::Atom(a) => Formula::atom(relation(a.relation), term(&a.head), term(&a.tail)),
            Formula::Not(g) => Formula::not(g.map_ids(relation, entity)),
            Formula::And(a, b) => {
                Formula::and(a.map_ids(relation, entity), b.map_ids(relation, entity))
            }
            Formula::Or(a, b) => {
                Formula::or(a.map_ids(relation, entity), b.map_ids(relation, entity))
            }
            Formula::Exists(v, g) => Formula::exists(v.clone(), g.map_ids(relation, entity)),
        }
    }

    /// Checks the structural invariants: exactly one free variable name and
    /// every existential variable bound by exactly one enclosing quantifier.
    pub fn validate(&self) -> Result<(), LogicError> {
        let free = self.free_variables();
        if free.len() != 1 {
            return Err(LogicError::FreeVariableCount(free.len()));
        }
        check_scopes(self, &mut Vec::new())
    }
}

fn check_scopes(f: &Formula, bound: &mut Vec<String>) -> Result<(), LogicError> {
    match f {
        Formula::Atom(a) => {
            for t in [&a.head, &a.tail] {
                if let Term::Exist(n) = t {
                    if !bound.contains(n) {
                        return Err(LogicError::UnboundVariable(n.clone()));
                    }
                }
            }
            Ok(())
        }
        Formula::Not(g) => check_scopes(g, bound),
        Formula::And(a, b) | Formula::Or(a, b) => {
            check_scopes(a, bound)?;
            check_scopes(b, bound)
        }
        Formula::Exists(v, g) => {
            if bound.contains(v) {
                return Err(LogicError::Rebound(v.clone()));
            }
            bound.push(v.clone());
            let r = check_scopes(g, bound);
            bound.pop();
            r
        }
    }
}

// Printing precedence: quantifier < or < and < unary.
const PREC_EXISTS: u8 = 0;
const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_UNARY: u8 = 3;

impl Formula {
    fn precedence(&self) -> u8 {
        match self {
            Formula::Exists(..) => PREC_EXISTS,
            Formula::Or(..) => PREC_OR,
            Formula::And(..) => PREC_AND,
            Formula::Atom(_) | Formula::Not(_) => PREC_UNARY,
        }
    }

    fn write_prec(&self, out: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.precedence() < min;
        if paren {
            out.write_str("(")?;
        }
        match self {
            Formula::Atom(a) => write!(out, "{a}")?,
            Formula::Not(g) => {
                out.write_str("!")?;
                match &**g {
                    Formula::Atom(a) => write!(out, "{a}")?,
                    other => {
                        out.write_str("(")?;
                        other.write_prec(out, PREC_EXISTS)?;
                        out.write_str(")")?;
                    }
                }
            }
            Formula::And(a, b) => {
                a.write_prec(out, PREC_AND)?;
                out.write_str(" & ")?;
                b.write_prec(out, PREC_UNARY)?;
            }
            Formula::Or(a, b) => {
                a.write_prec(out, PREC_OR)?;
                out.write_str(" | ")?;
                b.write_prec(out, PREC_AND)?;
            }
            Formula::Exists(v, body) => {
                out.write_str("EX ")?;
                out.write_str(v)?;
                let mut body = &**body;
                while let Formula::Exists(w, inner) = body {
                    write!(out, ",{w}")?;
                    body = inner;
                }
                out.write_str(". ")?;
                body.write_prec(out, PREC_EXISTS)?;
            }
        }
        if paren {
            out.write_str(")")?;
        }
        Ok(())
    }
}

/// Prints in the syntax accepted by [`parse_efo1`].
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, PREC_EXISTS)
    }
}

/// A signed atom inside a conjunctive clause.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

impl Literal {
    pub fn to_formula(&self) -> Formula {
        let atom = Formula::Atom(self.atom.clone());
        if self.positive {
            atom
        } else {
            Formula::not(atom)
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            f.write_str("!")?;
        }
        write!(f, "{}", self.atom)
    }
}

/// `EX x1..xk. l1 & ... & ln`: one disjunct of a DNF.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConjunctiveClause {
    pub existentials: Vec<String>,
    pub literals: Vec<Literal>,
}

impl ConjunctiveClause {
    pub fn free_variable(&self) -> Option<&str> {
        self.literals
            .iter()
            .flat_map(|l| [&l.atom.head, &l.atom.tail])
            .find_map(|t| match t {
                Term::Free(n) => Some(n.as_str()),
                _ => None,
            })
    }

    pub fn has_negation(&self) -> bool {
        self.literals.iter().any(|l| !l.positive)
    }

    /// Back to a formula: existentials outermost, literals left-nested.
    pub fn to_formula(&self) -> Formula {
        let body = Formula::conjunction(self.literals.iter().map(Literal::to_formula))
            .expect("clauses are never empty");
        self.existentials
            .iter()
            .rev()
            .fold(body, |acc, v| Formula::exists(v.clone(), acc))
    }
}

impl fmt::Display for ConjunctiveClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_formula())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LogicError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("negation at byte {pos} applies to a compound formula; only atoms may be negated")]
    NegationOverCompound { pos: usize },
    #[error("expected exactly one free variable, found {0}")]
    FreeVariableCount(usize),
    #[error("existential variable `{0}` is not bound by any quantifier")]
    UnboundVariable(String),
    #[error("variable `{0}` is bound more than once")]
    Rebound(String),
    #[error(
        "not an EFO1 formula: {0}; pushing negation through an existential quantifier \
         yields a universal quantifier"
    )]
    NotEfo1(String),
    #[error("DNF has more than {0} clauses")]
    TooManyClauses(usize),
    #[error("clause `{0}` does not mention the free variable")]
    ClauseWithoutFreeVariable(String),
    #[error("lisp formula: {0}")]
    Lisp(String),
}
