//! Disjunctive normal form.
//!
//! Negation is pushed to the atoms, bound variables are renamed apart and the
//! existential quantifiers are pulled out; since every quantifier then sits in
//! a positive position, each disjunct keeps the variables it mentions.

use std::collections::BTreeSet;

use super::{Atom, ConjunctiveClause, Formula, Literal, LogicError, Term};

/// Upper bound on the number of clauses [`to_dnf`] will produce.
pub const MAX_CLAUSES: usize = 4096;

enum Nnf {
    Lit(Literal),
    And(Box<Nnf>, Box<Nnf>),
    Or(Box<Nnf>, Box<Nnf>),
    Exists(String, Box<Nnf>),
}

fn nnf(f: &Formula, negated: bool) -> Result<Nnf, LogicError> {
    Ok(match f {
        Formula::Atom(a) => Nnf::Lit(Literal {
            atom: a.clone(),
            positive: !negated,
        }),
        Formula::Not(g) => nnf(g, !negated)?,
        Formula::And(a, b) if !negated => Nnf::And(Box::new(nnf(a, false)?), Box::new(nnf(b, false)?)),
        Formula::And(a, b) => Nnf::Or(Box::new(nnf(a, true)?), Box::new(nnf(b, true)?)),
        Formula::Or(a, b) if !negated => Nnf::Or(Box::new(nnf(a, false)?), Box::new(nnf(b, false)?)),
        Formula::Or(a, b) => Nnf::And(Box::new(nnf(a, true)?), Box::new(nnf(b, true)?)),
        Formula::Exists(v, g) if !negated => Nnf::Exists(v.clone(), Box::new(nnf(g, false)?)),
        Formula::Exists(..) => return Err(LogicError::NotEfo1(f.to_string())),
    })
}

fn var_number(name: &str) -> Option<u32> {
    name.strip_prefix('x')?.parse().ok()
}

/// Gives every quantifier a distinct name.
fn rename_apart(f: Nnf, used: &mut BTreeSet<String>, next: &mut u32) -> Nnf {
    match f {
        Nnf::Lit(l) => Nnf::Lit(l),
        Nnf::And(a, b) => {
            let a = rename_apart(*a, used, next);
            Nnf::And(Box::new(a), Box::new(rename_apart(*b, used, next)))
        }
        Nnf::Or(a, b) => {
            let a = rename_apart(*a, used, next);
            Nnf::Or(Box::new(a), Box::new(rename_apart(*b, used, next)))
        }
        Nnf::Exists(v, body) => {
            let body = if used.insert(v.clone()) {
                rename_apart(*body, used, next)
            } else {
                let fresh = loop {
                    *next += 1;
                    let cand = format!("x{next}");
                    if used.insert(cand.clone()) {
                        break cand;
                    }
                };
                let body = substitute(*body, &v, &fresh);
                let body = rename_apart(body, used, next);
                return Nnf::Exists(fresh, Box::new(body));
            };
            Nnf::Exists(v, Box::new(body))
        }
    }
}

fn substitute(f: Nnf, from: &str, to: &str) -> Nnf {
    let term = |t: Term| match t {
        Term::Exist(n) if n == from => Term::Exist(to.to_string()),
        other => other,
    };
    match f {
        Nnf::Lit(l) => Nnf::Lit(Literal {
            atom: Atom::new(l.atom.relation, term(l.atom.head), term(l.atom.tail)),
            positive: l.positive,
        }),
        Nnf::And(a, b) => Nnf::And(
            Box::new(substitute(*a, from, to)),
            Box::new(substitute(*b, from, to)),
        ),
        Nnf::Or(a, b) => Nnf::Or(
            Box::new(substitute(*a, from, to)),
            Box::new(substitute(*b, from, to)),
        ),
        // An inner binder of the same name shadows; validation forbids it, but
        // stay correct anyway.
        Nnf::Exists(v, body) if v == from => Nnf::Exists(v, body),
        Nnf::Exists(v, body) => Nnf::Exists(v, Box::new(substitute(*body, from, to))),
    }
}

fn distribute(f: &Nnf) -> Result<Vec<Vec<Literal>>, LogicError> {
    Ok(match f {
        Nnf::Lit(l) => vec![vec![l.clone()]],
        Nnf::Exists(_, body) => distribute(body)?,
        Nnf::Or(a, b) => {
            let mut out = distribute(a)?;
            out.extend(distribute(b)?);
            if out.len() > MAX_CLAUSES {
                return Err(LogicError::TooManyClauses(MAX_CLAUSES));
            }
            out
        }
        Nnf::And(a, b) => {
            let (da, db) = (distribute(a)?, distribute(b)?);
            if da.len().saturating_mul(db.len()) > MAX_CLAUSES {
                return Err(LogicError::TooManyClauses(MAX_CLAUSES));
            }
            let mut out = Vec::with_capacity(da.len() * db.len());
            for ca in &da {
                for cb in &db {
                    out.push(ca.iter().chain(cb).cloned().collect());
                }
            }
            out
        }
    })
}

/// Normalizes a formula into conjunctive clauses. Literal order follows the
/// left-to-right order of the source formula.
pub fn to_dnf(formula: &Formula) -> Result<Vec<ConjunctiveClause>, LogicError> {
    formula.validate()?;
    let n = nnf(formula, false)?;
    let mut used = BTreeSet::new();
    let mut next = 0;
    formula.visit(&mut |g| {
        if let Formula::Exists(v, _) = g {
            next = next.max(var_number(v).unwrap_or(0));
        }
    });
    let n = rename_apart(n, &mut used, &mut next);
    distribute(&n)?
        .into_iter()
        .map(|literals| {
            let mut existentials: Vec<String> = Vec::new();
            for l in &literals {
                for t in [&l.atom.head, &l.atom.tail] {
                    if let Term::Exist(v) = t {
                        if !existentials.contains(v) {
                            existentials.push(v.clone());
                        }
                    }
                }
            }
            let clause = ConjunctiveClause {
                existentials,
                literals,
            };
            if clause.free_variable().is_none() {
                return Err(LogicError::ClauseWithoutFreeVariable(clause.to_string()));
            }
            Ok(clause)
        })
        .collect()
}
