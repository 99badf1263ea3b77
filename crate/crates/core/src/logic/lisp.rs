//! Lisp-like operator-tree queries, e.g. `(i,(p,(e)),(n,(p,(e))))`.
//!
//! `e` is an anchor entity, `p` a relation projection, `i`/`u` n-ary
//! intersection/union and `n` negation. Relations and entities are supplied
//! separately and consumed in textual order of their `p` and `e` tokens.

use crate::kg::{EntityId, RelationId};

use super::{Formula, LogicError, Term, FREE_VAR};

/// Ungrounded operator tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LispNode {
    Entity,
    Projection(Box<LispNode>),
    Intersection(Vec<LispNode>),
    Union(Vec<LispNode>),
    Negation(Box<LispNode>),
}

impl LispNode {
    pub fn projection_count(&self) -> usize {
        match self {
            LispNode::Entity => 0,
            LispNode::Projection(c) => 1 + c.projection_count(),
            LispNode::Negation(c) => c.projection_count(),
            LispNode::Intersection(cs) | LispNode::Union(cs) => {
                cs.iter().map(LispNode::projection_count).sum()
            }
        }
    }

    pub fn entity_count(&self) -> usize {
        match self {
            LispNode::Entity => 1,
            LispNode::Projection(c) | LispNode::Negation(c) => c.entity_count(),
            LispNode::Intersection(cs) | LispNode::Union(cs) => {
                cs.iter().map(LispNode::entity_count).sum()
            }
        }
    }

    /// Assigns relations and entities in textual order.
    pub fn ground(
        &self,
        relations: &[RelationId],
        entities: &[EntityId],
    ) -> Result<OpTree, LogicError> {
        let (np, ne) = (self.projection_count(), self.entity_count());
        if np != relations.len() || ne != entities.len() {
            return Err(LogicError::Lisp(format!(
                "tree has {np} projections and {ne} anchors, got {} relations and {} entities",
                relations.len(),
                entities.len()
            )));
        }
        let mut rs = relations.iter().copied();
        let mut es = entities.iter().copied();
        Ok(self.ground_with(&mut rs, &mut es))
    }

    fn ground_with(
        &self,
        rs: &mut impl Iterator<Item = RelationId>,
        es: &mut impl Iterator<Item = EntityId>,
    ) -> OpTree {
        match self {
            LispNode::Entity => OpTree::Anchor(es.next().expect("counted")),
            LispNode::Projection(c) => {
                let r = rs.next().expect("counted");
                OpTree::Project(r, Box::new(c.ground_with(rs, es)))
            }
            LispNode::Negation(c) => OpTree::Negate(Box::new(c.ground_with(rs, es))),
            LispNode::Intersection(cs) => {
                OpTree::Intersect(cs.iter().map(|c| c.ground_with(rs, es)).collect())
            }
            LispNode::Union(cs) => OpTree::Union(cs.iter().map(|c| c.ground_with(rs, es)).collect()),
        }
    }
}

/// Grounded operator tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpTree {
    Anchor(EntityId),
    Project(RelationId, Box<OpTree>),
    Intersect(Vec<OpTree>),
    Union(Vec<OpTree>),
    Negate(Box<OpTree>),
}

impl OpTree {
    /// Converts to a formula with free variable [`FREE_VAR`]; intermediate
    /// projection targets become existentials `x1, x2, ...` in pre-order.
    pub fn to_formula(&self) -> Result<Formula, LogicError> {
        let mut fresh = 0;
        self.build(&Term::Free(FREE_VAR.into()), &mut fresh)
    }

    fn build(&self, target: &Term, fresh: &mut u32) -> Result<Formula, LogicError> {
        Ok(match self {
            OpTree::Anchor(_) => {
                return Err(LogicError::Lisp(
                    "an anchor entity must be the argument of a projection".into(),
                ))
            }
            OpTree::Project(r, child) => match &**child {
                OpTree::Anchor(a) => Formula::atom(*r, Term::Const(*a), target.clone()),
                child => {
                    *fresh += 1;
                    let name = format!("x{fresh}");
                    let var = Term::Exist(name.clone());
                    let inner = child.build(&var, fresh)?;
                    Formula::exists(name, Formula::and(inner, Formula::atom(*r, var, target.clone())))
                }
            },
            OpTree::Intersect(cs) => {
                let parts = cs
                    .iter()
                    .map(|c| c.build(target, fresh))
                    .collect::<Result<Vec<_>, _>>()?;
                Formula::conjunction(parts).expect("arity checked at parse")
            }
            OpTree::Union(cs) => {
                let parts = cs
                    .iter()
                    .map(|c| c.build(target, fresh))
                    .collect::<Result<Vec<_>, _>>()?;
                Formula::disjunction(parts).expect("arity checked at parse")
            }
            OpTree::Negate(c) => Formula::not(c.build(target, fresh)?),
        })
    }

    /// True for trees with no intermediate variable (every projection reads
    /// an anchor directly).
    pub fn is_existential_free(&self) -> bool {
        match self {
            OpTree::Anchor(_) => true,
            OpTree::Project(_, c) => matches!(**c, OpTree::Anchor(_)),
            OpTree::Negate(c) => c.is_existential_free(),
            OpTree::Intersect(cs) | OpTree::Union(cs) => cs.iter().all(OpTree::is_existential_free),
        }
    }
}

/// Parses the ungrounded tree shape.
pub fn parse_lisp_tree(text: &str) -> Result<LispNode, LogicError> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    let node = parse_node(bytes, &mut pos)?;
    skip_ws(bytes, &mut pos);
    if pos != bytes.len() {
        return Err(syntax(pos, "trailing input"));
    }
    Ok(node)
}

/// Parses and grounds a lisp query into a formula.
pub fn parse_lisp(
    text: &str,
    relations: &[RelationId],
    entities: &[EntityId],
) -> Result<Formula, LogicError> {
    parse_lisp_tree(text)?.ground(relations, entities)?.to_formula()
}

fn syntax(pos: usize, message: &str) -> LogicError {
    LogicError::Syntax {
        pos,
        message: message.into(),
    }
}

fn skip_ws(b: &[u8], pos: &mut usize) {
    while *pos < b.len() && b[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
}

fn eat(b: &[u8], pos: &mut usize, c: u8) -> bool {
    skip_ws(b, pos);
    if b.get(*pos) == Some(&c) {
        *pos += 1;
        true
    } else {
        false
    }
}

fn parse_node(b: &[u8], pos: &mut usize) -> Result<LispNode, LogicError> {
    if !eat(b, pos, b'(') {
        return Err(syntax(*pos, "expected `(`"));
    }
    skip_ws(b, pos);
    let op_pos = *pos;
    let op = *b.get(*pos).ok_or_else(|| syntax(*pos, "unexpected end of input"))?;
    *pos += 1;
    let mut args = Vec::new();
    while eat(b, pos, b',') {
        args.push(parse_node(b, pos)?);
    }
    if !eat(b, pos, b')') {
        return Err(syntax(*pos, "expected `,` or `)`"));
    }
    let arity = |lo: usize, hi: usize| -> Result<(), LogicError> {
        if args.len() < lo || args.len() > hi {
            Err(syntax(op_pos, &format!("`{}` takes {lo}..={hi} arguments", op as char)))
        } else {
            Ok(())
        }
    };
    Ok(match op {
        b'e' => {
            arity(0, 0)?;
            LispNode::Entity
        }
        b'p' => {
            arity(1, 1)?;
            LispNode::Projection(Box::new(args.pop().expect("arity 1")))
        }
        b'n' => {
            arity(1, 1)?;
            if matches!(args[0], LispNode::Entity) {
                return Err(syntax(op_pos, "negation of a bare anchor"));
            }
            LispNode::Negation(Box::new(args.pop().expect("arity 1")))
        }
        b'i' => {
            arity(2, usize::MAX)?;
            LispNode::Intersection(args)
        }
        b'u' => {
            arity(2, usize::MAX)?;
            LispNode::Union(args)
        }
        _ => return Err(syntax(op_pos, "unknown operator; expected one of p, i, u, n, e")),
    })
}
