//! Query graphs of conjunctive clauses.
//!
//! Nodes are terms, edges are signed relation literals. The structural report
//! (acyclicity, simplicity, the two negation/leaf properties) works on the
//! collapsed undirected graph: parallel edges merged, self-loops dropped.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::kg::{EntityId, RelationId};
use crate::logic::{Atom, ConjunctiveClause, Literal, Term};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", content = "name", rename_all = "lowercase")]
pub enum NodeKind {
    Constant(EntityId),
    Existential(String),
    Free(String),
}

impl NodeKind {
    pub fn is_constant(&self) -> bool {
        matches!(self, NodeKind::Constant(_))
    }

    pub fn is_existential(&self) -> bool {
        matches!(self, NodeKind::Existential(_))
    }

    pub fn is_free(&self) -> bool {
        matches!(self, NodeKind::Free(_))
    }

    pub fn to_term(&self) -> Term {
        match self {
            NodeKind::Constant(e) => Term::Const(*e),
            NodeKind::Existential(n) => Term::Exist(n.clone()),
            NodeKind::Free(n) => Term::Free(n.clone()),
        }
    }

    fn from_term(t: &Term) -> Self {
        match t {
            Term::Const(e) => NodeKind::Constant(*e),
            Term::Exist(n) => NodeKind::Existential(n.clone()),
            Term::Free(n) => NodeKind::Free(n.clone()),
        }
    }
}

/// A directed, signed edge `head -r-> tail` between node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct GraphEdge {
    pub head: usize,
    pub relation: RelationId,
    pub tail: usize,
    pub positive: bool,
}

impl GraphEdge {
    pub fn is_loop(&self) -> bool {
        self.head == self.tail
    }

    pub fn touches(&self, node: usize) -> bool {
        self.head == node || self.tail == node
    }

    /// The endpoint opposite `node`.
    pub fn other(&self, node: usize) -> usize {
        if self.head == node {
            self.tail
        } else {
            self.head
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("query graph is disconnected")]
    Disconnected,
    #[error("constant {0} has a self-loop")]
    ConstantSelfLoop(EntityId),
    #[error("query graph has no free variable node")]
    NoFreeNode,
    #[error("query graph is acyclic; nothing to enumerate")]
    Acyclic,
    #[error("no existential node can be removed without disconnecting the variables")]
    NoEnumerationNode,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StructuralReport {
    pub acyclic: bool,
    pub simple: bool,
    pub self_loops: Vec<usize>,
    pub leaves: Vec<usize>,
    /// Some negated edge joins two non-constant nodes.
    pub property1: bool,
    /// Some existential node can be a leaf of a spanning tree.
    pub property2: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryGraph {
    nodes: Vec<NodeKind>,
    edges: Vec<GraphEdge>,
}

impl QueryGraph {
    /// Builds and checks the graph of a clause: connected, no self-loop on a
    /// constant. Nodes appear in order of first mention.
    pub fn from_clause(clause: &ConjunctiveClause) -> Result<Self, GraphError> {
        let g = Self::from_clause_unchecked(clause);
        if let Some(e) = g.edges.iter().find(|e| e.is_loop() && g.nodes[e.head].is_constant()) {
            let NodeKind::Constant(a) = g.nodes[e.head] else {
                unreachable!()
            };
            return Err(GraphError::ConstantSelfLoop(a));
        }
        if g.free_node().is_none() {
            return Err(GraphError::NoFreeNode);
        }
        if !g.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    pub fn from_clause_unchecked(clause: &ConjunctiveClause) -> Self {
        let mut nodes: Vec<NodeKind> = Vec::new();
        let index = |t: &Term, nodes: &mut Vec<NodeKind>| {
            let k = NodeKind::from_term(t);
            match nodes.iter().position(|n| *n == k) {
                Some(i) => i,
                None => {
                    nodes.push(k);
                    nodes.len() - 1
                }
            }
        };
        let mut edges = Vec::with_capacity(clause.literals.len());
        for l in &clause.literals {
            let head = index(&l.atom.head, &mut nodes);
            let tail = index(&l.atom.tail, &mut nodes);
            edges.push(GraphEdge {
                head,
                relation: l.atom.relation,
                tail,
                positive: l.positive,
            });
        }
        QueryGraph { nodes, edges }
    }

    /// Assembles a graph from parts. Edge endpoints must be valid indices.
    pub fn from_parts(nodes: Vec<NodeKind>, edges: Vec<GraphEdge>) -> Self {
        assert!(
            edges.iter().all(|e| e.head < nodes.len() && e.tail < nodes.len()),
            "edge endpoint out of range"
        );
        QueryGraph { nodes, edges }
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn free_node(&self) -> Option<usize> {
        self.nodes.iter().position(NodeKind::is_free)
    }

    /// Reads the graph back as clause literals, in edge order.
    pub fn to_literals(&self) -> Vec<Literal> {
        self.edges
            .iter()
            .map(|e| Literal {
                atom: Atom::new(
                    e.relation,
                    self.nodes[e.head].to_term(),
                    self.nodes[e.tail].to_term(),
                ),
                positive: e.positive,
            })
            .collect()
    }

    /// Undirected neighbour sets with parallel edges merged and loops dropped.
    pub fn collapsed_adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.nodes.len()];
        for e in self.edges.iter().filter(|e| !e.is_loop()) {
            adj[e.head].insert(e.tail);
            adj[e.tail].insert(e.head);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let alive = vec![true; self.nodes.len()];
        components(&self.collapsed_adjacency(), &alive) <= 1
    }

    pub fn structural_report(&self) -> StructuralReport {
        let adj = self.collapsed_adjacency();
        let n = self.nodes.len();
        let alive = vec![true; n];
        let collapsed_edges = adj.iter().map(BTreeSet::len).sum::<usize>() / 2;
        let acyclic = collapsed_edges + components(&adj, &alive) == n;
        let self_loops: Vec<usize> = {
            let set: BTreeSet<usize> =
                self.edges.iter().filter(|e| e.is_loop()).map(|e| e.head).collect();
            set.into_iter().collect()
        };
        let non_loop = self.edges.iter().filter(|e| !e.is_loop()).count();
        let simple = self_loops.is_empty() && non_loop == collapsed_edges;
        let leaves = (0..n).filter(|&i| adj[i].len() == 1).collect();
        let property1 = self.edges.iter().any(|e| {
            !e.positive && !self.nodes[e.head].is_constant() && !self.nodes[e.tail].is_constant()
        });
        let base = components(&adj, &alive);
        let property2 = n >= 2
            && (0..n).any(|v| {
                if !self.nodes[v].is_existential() {
                    return false;
                }
                let mut rest = alive.clone();
                rest[v] = false;
                components(&adj, &rest) <= base
            });
        StructuralReport {
            acyclic,
            simple,
            self_loops,
            leaves,
            property1,
            property2,
        }
    }

    /// Picks the existential node to enumerate in a cyclic graph: one whose
    /// removal keeps the variable nodes connected. Ties go to the node with
    /// the fewest incident edges, then to the lowest index.
    pub fn pick_enumeration_node(&self) -> Result<usize, GraphError> {
        let adj = self.collapsed_adjacency();
        let n = self.nodes.len();
        let all = vec![true; n];
        let collapsed_edges = adj.iter().map(BTreeSet::len).sum::<usize>() / 2;
        if collapsed_edges + components(&adj, &all) == n {
            return Err(GraphError::Acyclic);
        }
        let variables: Vec<bool> = self.nodes.iter().map(|k| !k.is_constant()).collect();
        let incident = |v: usize| self.edges.iter().filter(|e| e.touches(v)).count();
        (0..n)
            .filter(|&v| self.nodes[v].is_existential())
            .filter(|&v| {
                let mut rest = variables.clone();
                rest[v] = false;
                components(&adj, &rest) <= 1
            })
            .min_by_key(|&v| (incident(v), v))
            .ok_or(GraphError::NoEnumerationNode)
    }

    /// Whether some part of the clause is a sentence: a constant-constant
    /// literal, or a group of variables that reaches the free variable only
    /// through constants.
    pub fn has_sentence_component(&self) -> bool {
        if self
            .edges
            .iter()
            .any(|e| self.nodes[e.head].is_constant() && self.nodes[e.tail].is_constant())
        {
            return true;
        }
        let n = self.nodes.len();
        let mut adj = vec![BTreeSet::new(); n];
        for e in self.edges.iter().filter(|e| !e.is_loop()) {
            if !self.nodes[e.head].is_constant() && !self.nodes[e.tail].is_constant() {
                adj[e.head].insert(e.tail);
                adj[e.tail].insert(e.head);
            }
        }
        let Some(free) = self.free_node() else {
            return true;
        };
        let reach = reachable(&adj, free, &vec![true; n]);
        (0..n).any(|v| !self.nodes[v].is_constant() && !reach[v])
    }
}

fn reachable(adj: &[BTreeSet<usize>], start: usize, alive: &[bool]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if alive[w] && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Number of connected components among `alive` nodes.
fn components(adj: &[BTreeSet<usize>], alive: &[bool]) -> usize {
    let mut seen = vec![false; adj.len()];
    let mut count = 0;
    for s in 0..adj.len() {
        if !alive[s] || seen[s] {
            continue;
        }
        count += 1;
        let r = reachable(adj, s, alive);
        for (v, hit) in r.into_iter().enumerate() {
            seen[v] |= hit;
        }
    }
    count
}
