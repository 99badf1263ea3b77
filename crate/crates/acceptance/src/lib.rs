//! Random instance generators shared by the acceptance criteria.

use efo_fit::fuzzy::{FuzzyMatrix, RelationMatrices};
use efo_fit::logic::{Formula, Term};
use efo_fit::selftest::random_kg;
use efo_fit::{EntityId, KnowledgeGraph, RelationId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// 8 to 30 entities, 2 to 4 relations, edge density between 5% and 15%.
pub fn graph(rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let n = rng.gen_range(8..=30);
    let r = rng.gen_range(2..=4);
    let d = rng.gen_range(0.05..=0.15);
    random_kg(rng, n, r, d)
}

pub fn random_matrices(rng: &mut ChaCha8Rng, n: usize, r: usize) -> RelationMatrices<f64> {
    let mats = (0..r)
        .map(|_| {
            let e: Vec<(usize, usize, f64)> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter_map(|(i, j)| {
                    rng.gen_bool(0.6)
                        .then(|| (i, j, 1.0 - rng.gen_range(0.0..1.0)))
                })
                .collect();
            FuzzyMatrix::from_entries(n, n, e).unwrap()
        })
        .collect();
    RelationMatrices::new(n, mats).unwrap()
}

/// Random formula with negation on atoms only, at most two existentials.
pub fn random_formula(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Formula {
    fn term(rng: &mut ChaCha8Rng, scope: &[String], n: usize) -> Term {
        match rng.gen_range(0..4) {
            0 => Term::Const(EntityId(rng.gen_range(0..n) as u32)),
            1 if !scope.is_empty() => Term::Exist(scope[rng.gen_range(0..scope.len())].clone()),
            _ => Term::Free("f".into()),
        }
    }
    fn go(
        rng: &mut ChaCha8Rng,
        depth: u32,
        scope: &mut Vec<String>,
        used: &mut usize,
        n: usize,
        r: usize,
    ) -> Formula {
        let pick = if depth == 0 { 0 } else { rng.gen_range(0..6) };
        match pick {
            0 | 1 => {
                let a = Formula::atom(
                    RelationId(rng.gen_range(0..r) as u32),
                    term(rng, scope, n),
                    term(rng, scope, n),
                );
                if rng.gen_bool(0.3) {
                    Formula::not(a)
                } else {
                    a
                }
            }
            2 | 3 => Formula::and(
                go(rng, depth - 1, scope, used, n, r),
                go(rng, depth - 1, scope, used, n, r),
            ),
            4 => Formula::or(
                go(rng, depth - 1, scope, used, n, r),
                go(rng, depth - 1, scope, used, n, r),
            ),
            _ if *used < 2 => {
                *used += 1;
                let v = format!("x{used}");
                scope.push(v.clone());
                let body = go(rng, depth - 1, scope, used, n, r);
                scope.pop();
                Formula::exists(v, body)
            }
            _ => go(rng, depth - 1, scope, used, n, r),
        }
    }
    go(rng, 4, &mut Vec::new(), &mut 0, n, r)
}
