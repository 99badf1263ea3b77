//! Knowledge graph storage: dense integer ids, a duplicate-free triple set and
//! adjacency indexes keyed by `(head, relation)` and `(tail, relation)`.
//!
//! Graphs are immutable once built. Reverse enrichment produces a new graph
//! whose relation `r + |R|` is the inverse of relation `r`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        }
    }
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected 3 tab-separated columns, found {columns}")]
    MalformedLine { line: usize, columns: usize },
    #[error("line {line}: unknown {kind} label `{label}`")]
    UnknownLabel {
        line: usize,
        kind: &'static str,
        label: String,
    },
    #[error("label map line {line}: {message}")]
    BadLabelMap { line: usize, message: String },
    #[error("triple {0:?} references an id outside the graph")]
    IdOutOfRange(Triple),
    #[error("observed triple {0:?} is missing from the complete graph")]
    NotSubgraph(Triple),
    #[error("graphs disagree on size: {0}")]
    SizeMismatch(String),
}

/// Bidirectional string label <-> dense id table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn get_or_insert(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    /// Reads `label<TAB>id` lines. Ids must form the range `0..n` exactly once each.
    pub fn read(path: &Path) -> Result<Self, KgError> {
        let file = File::open(path).map_err(|source| KgError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut pairs = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| KgError::Io {
                path: path.to_owned(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let (label, id) = line.rsplit_once('\t').ok_or_else(|| KgError::BadLabelMap {
                line: lineno + 1,
                message: "expected `label<TAB>id`".into(),
            })?;
            let id: u32 = id.trim().parse().map_err(|_| KgError::BadLabelMap {
                line: lineno + 1,
                message: format!("bad id `{id}`"),
            })?;
            pairs.push((id, label.to_owned(), lineno + 1));
        }
        pairs.sort();
        let mut map = LabelMap::new();
        for (expected, (id, label, line)) in pairs.into_iter().enumerate() {
            if id as usize != expected || map.index.contains_key(&label) {
                return Err(KgError::BadLabelMap {
                    line,
                    message: format!("ids must be contiguous and labels unique (at `{label}`)"),
                });
            }
            map.get_or_insert(&label);
        }
        Ok(map)
    }

    pub fn write(&self, path: &Path) -> Result<(), KgError> {
        let io_err = |source| KgError::Io {
            path: path.to_owned(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for (id, label) in self.labels.iter().enumerate() {
            writeln!(out, "{label}\t{id}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub entities: LabelMap,
    pub relations: LabelMap,
}

/// An indexed, immutable knowledge graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    entity_count: usize,
    relation_count: usize,
    triples: Vec<Triple>,
    by_head: BTreeMap<(EntityId, RelationId), Vec<EntityId>>,
    by_tail: BTreeMap<(EntityId, RelationId), Vec<EntityId>>,
    outgoing: Vec<Vec<(RelationId, EntityId)>>,
    incoming: Vec<Vec<(RelationId, EntityId)>>,
    labels: Option<IdMaps>,
}

impl KnowledgeGraph {
    /// Builds a graph over `0..entity_count` and `0..relation_count`; duplicates are dropped.
    pub fn new(
        entity_count: usize,
        relation_count: usize,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self, KgError> {
        let mut triples: Vec<Triple> = triples.into_iter().collect();
        for t in &triples {
            if t.head.index() >= entity_count
                || t.tail.index() >= entity_count
                || t.relation.index() >= relation_count
            {
                return Err(KgError::IdOutOfRange(*t));
            }
        }
        triples.sort_unstable();
        triples.dedup();
        Ok(Self::index(entity_count, relation_count, triples, None))
    }

    fn index(
        entity_count: usize,
        relation_count: usize,
        triples: Vec<Triple>,
        labels: Option<IdMaps>,
    ) -> Self {
        let mut by_head: BTreeMap<_, Vec<EntityId>> = BTreeMap::new();
        let mut by_tail: BTreeMap<_, Vec<EntityId>> = BTreeMap::new();
        let mut outgoing = vec![Vec::new(); entity_count];
        let mut incoming = vec![Vec::new(); entity_count];
        for t in &triples {
            by_head.entry((t.head, t.relation)).or_default().push(t.tail);
            by_tail.entry((t.tail, t.relation)).or_default().push(t.head);
            outgoing[t.head.index()].push((t.relation, t.tail));
            incoming[t.tail.index()].push((t.relation, t.head));
        }
        for v in by_tail.values_mut() {
            v.sort_unstable();
        }
        for v in incoming.iter_mut() {
            v.sort_unstable();
        }
        KnowledgeGraph {
            entity_count,
            relation_count,
            triples,
            by_head,
            by_tail,
            outgoing,
            incoming,
            labels,
        }
    }

    pub fn with_labels(mut self, labels: IdMaps) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Triples in ascending `(head, relation, tail)` order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn labels(&self) -> Option<&IdMaps> {
        self.labels.as_ref()
    }

    pub fn contains(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.triples
            .binary_search(&Triple {
                head,
                relation,
                tail,
            })
            .is_ok()
    }

    /// `{ b | (head, relation, b) in G }`, ascending.
    pub fn tail_set(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.by_head
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// `{ a | (a, relation, tail) in G }`, ascending.
    pub fn head_set(&self, tail: EntityId, relation: RelationId) -> &[EntityId] {
        self.by_tail
            .get(&(tail, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn outgoing(&self, entity: EntityId) -> &[(RelationId, EntityId)] {
        &self.outgoing[entity.index()]
    }

    pub fn incoming(&self, entity: EntityId) -> &[(RelationId, EntityId)] {
        &self.incoming[entity.index()]
    }

    /// Index of the inverse of `relation` in a graph with `base_relations`
    /// original relations, after [`KnowledgeGraph::reverse_enrich`].
    pub fn reverse_of(relation: RelationId, base_relations: usize) -> RelationId {
        let r = relation.index();
        if r < base_relations {
            RelationId((r + base_relations) as u32)
        } else {
            RelationId((r - base_relations) as u32)
        }
    }

    /// Adds `(b, r + |R|, a)` for every `(a, r, b)`; the relation count doubles.
    pub fn reverse_enrich(&self) -> KnowledgeGraph {
        let base = self.relation_count;
        let reversed = self.triples.iter().map(|t| Triple {
            head: t.tail,
            relation: RelationId((t.relation.index() + base) as u32),
            tail: t.head,
        });
        let mut triples: Vec<Triple> = self.triples.iter().copied().chain(reversed).collect();
        triples.sort_unstable();
        triples.dedup();
        let labels = self.labels.as_ref().map(|maps| {
            let mut relations = maps.relations.clone();
            for r in 0..maps.relations.len() {
                let label = maps.relations.label(r as u32).unwrap_or_default();
                relations.get_or_insert(&format!("{label}_inv"));
            }
            IdMaps {
                entities: maps.entities.clone(),
                relations,
            }
        });
        Self::index(self.entity_count, base * 2, triples, labels)
    }

    /// Errors unless every triple of `self` is also in `complete`.
    pub fn check_subgraph_of(&self, complete: &KnowledgeGraph) -> Result<(), KgError> {
        if self.entity_count != complete.entity_count
            || self.relation_count != complete.relation_count
        {
            return Err(KgError::SizeMismatch(format!(
                "observed {}x{} vs complete {}x{}",
                self.entity_count,
                self.relation_count,
                complete.entity_count,
                complete.relation_count
            )));
        }
        match self
            .triples
            .iter()
            .find(|t| !complete.contains(t.head, t.relation, t.tail))
        {
            Some(t) => Err(KgError::NotSubgraph(*t)),
            None => Ok(()),
        }
    }

    /// Rebuilds the adjacency indexes from the triple set and compares.
    pub fn indexes_consistent(&self) -> bool {
        let rebuilt = Self::index(
            self.entity_count,
            self.relation_count,
            self.triples.clone(),
            None,
        );
        rebuilt.by_head == self.by_head
            && rebuilt.by_tail == self.by_tail
            && rebuilt.outgoing == self.outgoing
            && rebuilt.incoming == self.incoming
    }
}

/// Parses `head<TAB>relation<TAB>tail` lines. With `fixed` maps, unknown labels
/// are errors; otherwise labels get fresh ids in order of first appearance.
pub fn parse_triples(
    reader: impl BufRead,
    fixed: Option<&IdMaps>,
) -> Result<KnowledgeGraph, KgError> {
    let mut maps = fixed.cloned().unwrap_or_default();
    let mut triples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| KgError::Io {
            path: PathBuf::from("<reader>"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(KgError::MalformedLine {
                line: lineno + 1,
                columns: cols.len(),
            });
        }
        let lookup = |map: &mut LabelMap, label: &str, kind: &'static str| {
            let label = label.trim();
            if fixed.is_some() {
                map.get(label).ok_or_else(|| KgError::UnknownLabel {
                    line: lineno + 1,
                    kind,
                    label: label.to_owned(),
                })
            } else {
                Ok(map.get_or_insert(label))
            }
        };
        let head = lookup(&mut maps.entities, cols[0], "entity")?;
        let relation = lookup(&mut maps.relations, cols[1], "relation")?;
        let tail = lookup(&mut maps.entities, cols[2], "entity")?;
        triples.push(Triple::new(head, relation, tail));
    }
    let graph = KnowledgeGraph::new(maps.entities.len(), maps.relations.len(), triples)?;
    Ok(graph.with_labels(maps))
}

pub fn load_triples(path: &Path, fixed: Option<&IdMaps>) -> Result<KnowledgeGraph, KgError> {
    let file = File::open(path).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_triples(BufReader::new(file), fixed).map_err(|e| match e {
        KgError::Io { source, .. } => KgError::Io {
            path: path.to_owned(),
            source,
        },
        other => other,
    })
}

/// Loads an observed/complete split sharing one id space. The complete graph
/// assigns ids (unless `fixed` is given); observed must be a subgraph.
pub fn load_split(
    observed: &Path,
    complete: &Path,
    fixed: Option<&IdMaps>,
) -> Result<(KnowledgeGraph, KnowledgeGraph), KgError> {
    let complete = load_triples(complete, fixed)?;
    let maps = complete.labels().cloned().unwrap_or_default();
    let observed = load_triples(observed, Some(&maps))?;
    observed.check_subgraph_of(&complete)?;
    Ok((observed, complete))
}

pub fn write_triples(graph: &KnowledgeGraph, path: &Path) -> Result<(), KgError> {
    let io_err = |source| KgError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for t in graph.triples() {
        match graph.labels() {
            Some(maps) => writeln!(
                out,
                "{}\t{}\t{}",
                maps.entities.label(t.head.0).unwrap_or_default(),
                maps.relations.label(t.relation.0).unwrap_or_default(),
                maps.entities.label(t.tail.0).unwrap_or_default()
            ),
            None => writeln!(out, "{}\t{}\t{}", t.head.0, t.relation.0, t.tail.0),
        }
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<KnowledgeGraph, KgError> {
        parse_triples(text.as_bytes(), None)
    }

    #[test]
    fn loads_two_triples() {
        let g = parse("a0\tr0\ta1\na0\tr0\ta2\n").unwrap();
        assert_eq!(g.entity_count(), 3);
        assert_eq!(g.relation_count(), 1);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn empty_input_gives_empty_graph() {
        let g = parse("").unwrap();
        assert_eq!((g.entity_count(), g.relation_count(), g.len()), (0, 0, 0));
    }

    #[test]
    fn blank_lines_skipped_and_duplicates_dropped() {
        let g = parse("a0\tr0\ta1\n\n   \na0\tr0\ta1\n").unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn two_columns_is_malformed() {
        match parse("a0\tr0\n") {
            Err(KgError::MalformedLine { line: 1, columns: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_under_fixed_maps() {
        let g = parse("a0\tr0\ta1\n").unwrap();
        let maps = g.labels().unwrap().clone();
        let err = parse_triples("a0\tr0\ta9\n".as_bytes(), Some(&maps)).unwrap_err();
        assert!(matches!(err, KgError::UnknownLabel { kind: "entity", .. }));
    }

    #[test]
    fn reverse_enrich_adds_inverse() {
        let g = KnowledgeGraph::new(2, 1, [Triple::new(0, 0, 1)]).unwrap();
        let e = g.reverse_enrich();
        assert_eq!(e.relation_count(), 2);
        assert_eq!(e.triples(), &[Triple::new(0, 0, 1), Triple::new(1, 1, 0)]);
        assert_eq!(KnowledgeGraph::reverse_of(RelationId(1), 1), RelationId(0));
    }

    #[test]
    fn reverse_enrich_empty_and_self_pair() {
        let empty = KnowledgeGraph::new(0, 3, []).unwrap().reverse_enrich();
        assert_eq!((empty.len(), empty.relation_count()), (0, 6));
        let looped = KnowledgeGraph::new(1, 1, [Triple::new(0, 0, 0)])
            .unwrap()
            .reverse_enrich();
        assert_eq!(looped.len(), 2);
        assert!(looped.contains(EntityId(0), RelationId(1), EntityId(0)));
    }

    #[test]
    fn tail_sets_on_toy_graph() {
        let g = KnowledgeGraph::new(3, 1, [Triple::new(0, 0, 1), Triple::new(0, 0, 2)]).unwrap();
        assert_eq!(g.tail_set(EntityId(0), RelationId(0)), &[EntityId(1), EntityId(2)]);
        assert!(g.tail_set(EntityId(1), RelationId(0)).is_empty());
        let e = g.reverse_enrich();
        assert_eq!(e.tail_set(EntityId(1), RelationId(1)), &[EntityId(0)]);
    }

    #[test]
    fn labels_survive_enrichment() {
        let g = parse("x\tlikes\ty\n").unwrap().reverse_enrich();
        let maps = g.labels().unwrap();
        assert_eq!(maps.relations.label(1), Some("likes_inv"));
    }

    #[test]
    fn subgraph_violation_is_error() {
        let obs = KnowledgeGraph::new(2, 1, [Triple::new(1, 0, 0)]).unwrap();
        let full = KnowledgeGraph::new(2, 1, [Triple::new(0, 0, 1)]).unwrap();
        assert!(matches!(obs.check_subgraph_of(&full), Err(KgError::NotSubgraph(_))));
    }

    #[test]
    fn label_map_roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ent.tsv");
        let mut map = LabelMap::new();
        map.get_or_insert("alpha");
        map.get_or_insert("beta");
        map.write(&path).unwrap();
        assert_eq!(LabelMap::read(&path).unwrap(), map);
    }

    #[test]
    fn split_loading_shares_ids() {
        let dir = tempfile::tempdir().unwrap();
        let obs = dir.path().join("obs.tsv");
        let full = dir.path().join("full.tsv");
        std::fs::write(&obs, "b\tr\tc\n").unwrap();
        std::fs::write(&full, "a\tr\tb\nb\tr\tc\n").unwrap();
        let (o, c) = load_split(&obs, &full, None).unwrap();
        assert_eq!(o.entity_count(), c.entity_count());
        assert_eq!(o.triples(), &[Triple::new(1, 0, 2)]);
        std::fs::write(&obs, "c\tr\tb\n").unwrap();
        assert!(matches!(load_split(&obs, &full, None), Err(KgError::NotSubgraph(_))));
    }

    fn arb_graph() -> impl Strategy<Value = KnowledgeGraph> {
        (1usize..8, 1usize..4).prop_flat_map(|(n, r)| {
            proptest::collection::vec((0..n as u32, 0..r as u32, 0..n as u32), 0..30).prop_map(
                move |ts| {
                    KnowledgeGraph::new(n, r, ts.into_iter().map(|(h, rel, t)| Triple::new(h, rel, t)))
                        .unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn reverse_tail_set_equals_head_lookup(g in arb_graph()) {
            let base = g.relation_count();
            let e = g.reverse_enrich();
            prop_assert!(e.indexes_consistent());
            for a in 0..g.entity_count() as u32 {
                for r in 0..base as u32 {
                    let inv = KnowledgeGraph::reverse_of(RelationId(r), base);
                    prop_assert_eq!(e.tail_set(EntityId(a), inv), g.head_set(EntityId(a), RelationId(r)));
                }
            }
        }
    }
}
