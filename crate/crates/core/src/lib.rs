//! Fuzzy truth-value inference for existential first-order queries with one
//! free variable over knowledge graphs.
//!
//! A query is normalized to conjunctive clauses, each clause becomes a small
//! query graph, and the graph is reduced step by step (self-loops, constants,
//! leaves, bounded enumeration over cycle nodes) while per-node candidate
//! vectors are updated against per-relation membership matrices.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, the width inference uses by default.

pub mod builder;
pub mod eval;
pub mod fit;
pub mod fuzzy;
pub mod graph;
pub mod kg;
pub mod logic;
pub mod oracle;
pub mod sampler;
pub mod scalar;
pub mod selftest;

pub use fit::{answer, FitError, InferenceConfig};
pub use fuzzy::TNorm;
pub use kg::{EntityId, KnowledgeGraph, RelationId, Triple};
pub use logic::{Formula, Term};
pub use scalar::Scalar;

pub type Vector = fuzzy::FuzzyVector<f64>;
pub type Matrix = fuzzy::FuzzyMatrix<f64>;
pub type Matrices = fuzzy::MatrixSet<f64>;
