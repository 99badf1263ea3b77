//! Acceptance criteria 1-9. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use efo_fit::builder::{
    calibrate, calibrate_with_dense_variant, consistent_matrices, perfect_matrices,
    CalibrationConfig, CalibrationMode, NoiseConfig, ScoreFile, ScoreSource, SyntheticScorer,
};
use efo_fit::eval::{evaluate, EvalMode};
use efo_fit::fit::{answer, answer_with_stats, InferenceConfig};
use efo_fit::fuzzy::{FuzzyVector, MatrixSet, TNorm};
use efo_fit::logic::{parse_efo1, to_dnf, LogicError};
use efo_fit::oracle::{
    answer_set_symbolic, answer_vector_bruteforce, operator_tree_maxprod, truth_value,
    Connectives, OracleLimit,
};
use efo_fit::sampler::{
    answer_split, sample, sample_dataset, structure, QuerySample, SampleConfig, STRUCTURES,
};
use efo_fit::selftest::{empty_like, random_kg, random_split};
use efo_fit::{EntityId, KnowledgeGraph, RelationId, Triple};
use efo_fit_acceptance::{graph, random_formula, random_matrices};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: &[String], summary: String) -> Outcome {
    Outcome {
        pass: failures.is_empty(),
        detail: match failures.first() {
            None => summary,
            Some(f) => format!("{summary}; {} failures, first: {f}", failures.len()),
        },
    }
}

fn support(v: &FuzzyVector<f64>) -> BTreeSet<EntityId> {
    v.support().into_iter().collect()
}

/// Perfect matrices, unbounded budget: support equals the classical answers.
fn perfectness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let limit = OracleLimit::default();
    let mut failures = Vec::new();
    let (mut cases, mut graphs) = (0, 0);
    let mut covered = BTreeSet::new();
    while graphs < 100 {
        let kg = graph(&mut rng);
        graphs += 1;
        let m: MatrixSet<f64> = perfect_matrices(&kg);
        let none = empty_like(&kg);
        for s in STRUCTURES {
            let Ok(q) = sample(s, &none, &kg, &mut rng, 100, limit) else {
                continue;
            };
            covered.insert(s.name);
            let truth = answer_set_symbolic(&q.formula, &kg, limit).expect("within limit");
            for conj in [TNorm::Product, TNorm::Godel] {
                cases += 1;
                let cfg = InferenceConfig {
                    conj,
                    budget_m: kg.entity_count(),
                    ..Default::default()
                };
                match answer(&q.formula, &m, &cfg) {
                    Ok(v) if v.is_binary() && support(&v) == truth => {}
                    Ok(v) => failures.push(format!(
                        "{} [{conj}] {}: {:?} vs {:?}",
                        s.name,
                        q.formula,
                        support(&v),
                        truth
                    )),
                    Err(e) => failures.push(format!("{} {}: {e}", s.name, q.formula)),
                }
            }
        }
    }
    if covered.len() != STRUCTURES.len() {
        failures.push(format!("only {} structures sampled", covered.len()));
    }
    outcome(
        &failures,
        format!("{graphs} graphs, {} structures, {cases} cases", covered.len()),
    )
}

/// Consistent matrices: deductible answers of positive queries score 1.
fn faithfulness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let limit = OracleLimit::default();
    let names = [
        "1p", "2p", "3p", "2i", "3i", "pi", "ip", "2u", "up", "2il", "3il", "2m", "3mp", "3pm",
        "im", "3c", "3cm",
    ];
    let mut failures = Vec::new();
    let mut samples = Vec::new();
    let mut all_matrices = Vec::new();
    for g in 0..30 {
        let complete = graph(&mut rng);
        let observed = random_split(&complete, &mut rng, 0.7);
        let noise = NoiseConfig {
            density: 0.1,
            cap: 0.9,
        };
        let m: MatrixSet<f64> = consistent_matrices(&observed, &mut rng, noise).unwrap();
        let none = empty_like(&complete);
        let mut batch = Vec::new();
        for name in names {
            let s = structure(name).unwrap();
            // Grounded on the observed graph so that deductible answers exist.
            let Ok(q) = sample(s, &none, &observed, &mut rng, 100, limit) else {
                continue;
            };
            let (easy, hard) = answer_split(&q.formula, &observed, &complete, limit).unwrap();
            let v = answer(&q.formula, &m, &InferenceConfig::default()).unwrap();
            for a in &easy {
                if v.get(a.index()) != 1.0 {
                    failures.push(format!(
                        "graph {g} {name} {}: {a} scored {}",
                        q.formula,
                        v.get(a.index())
                    ));
                }
            }
            batch.push(QuerySample {
                easy_answers: easy,
                hard_answers: hard,
                ..q
            });
        }
        all_matrices.push((m, batch.clone()));
        samples.extend(batch);
    }
    let mut rows = BTreeSet::new();
    for (m, batch) in &all_matrices {
        let r = evaluate(batch, m, &InferenceConfig::default(), EvalMode::Faithful);
        for (name, s) in &r.structures {
            rows.insert(name.clone());
            if s.mrr != 100.0 {
                failures.push(format!("faithful MRR of {name} = {}", s.mrr));
            }
        }
    }
    if rows.len() != names.len() {
        failures.push(format!("only {} structures evaluated", rows.len()));
    }
    outcome(
        &failures,
        format!("{} queries over {} structures", samples.len(), rows.len()),
    )
}

/// Operator-tree queries: engine equals the max-product tree evaluation.
fn qto_coincidence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let limit = OracleLimit::default();
    let mut failures = Vec::new();
    let mut cases = 0;
    let cfg = InferenceConfig {
        conj: TNorm::Product,
        exist: TNorm::Godel,
        ..Default::default()
    };
    for g in 0..10u64 {
        let kg = graph(&mut rng);
        let scorer = SyntheticScorer::new(kg.entity_count(), kg.relation_count(), 100 + g)
            .with_boost(kg.clone(), 4.0);
        let m: MatrixSet<f64> =
            calibrate_with_dense_variant(&scorer, &kg, &CalibrationConfig::default()).unwrap();
        let none = empty_like(&kg);
        for s in STRUCTURES.iter().filter(|s| s.tree_is_exact()) {
            let Ok(q) = sample(s, &none, &kg, &mut rng, 100, limit) else {
                continue;
            };
            cases += 1;
            let tree = q.tree_form.as_ref().unwrap().op_tree().unwrap();
            let mats = if q.formula.contains_exists() {
                m.primary()
            } else {
                m.dense_variant().unwrap()
            };
            let fit = answer(&q.formula, &m, &cfg).unwrap();
            let qto = operator_tree_maxprod(&tree, mats).unwrap();
            let same_bits = fit
                .iter()
                .zip(qto.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same_bits {
                let i = (0..fit.len()).find(|&i| fit.get(i) != qto.get(i)).unwrap_or(0);
                failures.push(format!(
                    "{} {}: entity {i} {} vs {}",
                    s.name,
                    q.formula,
                    fit.get(i),
                    qto.get(i)
                ));
            }
        }
    }
    if cases < 50 {
        failures.push(format!("only {cases} instances"));
    }
    outcome(&failures, format!("{cases} instances"))
}

/// Clause-wise evaluation aggregated with the disjunction equals the
/// original formula's value.
fn dnf_soundness(conj: TNorm, disj: TNorm, tol: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let limit = OracleLimit::default();
    let mut failures = Vec::new();
    let (mut formulas, mut worst) = (0, 0.0f64);
    let ops = Connectives::new(conj, disj);
    while formulas < 500 {
        let n = rng.gen_range(3..=6);
        let r = 2;
        let f = random_formula(&mut rng, n, r);
        if f.validate().is_err() {
            continue;
        }
        let clauses = match to_dnf(&f) {
            Ok(c) => c,
            Err(LogicError::ClauseWithoutFreeVariable(_)) => continue,
            Err(e) => panic!("{f}: {e}"),
        };
        formulas += 1;
        let m = random_matrices(&mut rng, n, r);
        for a in 0..n {
            let y = [("f", EntityId(a as u32))];
            let whole: f64 = truth_value(&f, &y, &m, ops, limit).unwrap();
            let parts: f64 = clauses
                .iter()
                .map(|c| truth_value(&c.to_formula(), &y, &m, ops, limit).unwrap())
                .reduce(|x, z| disj.s(x, z))
                .unwrap();
            let diff = (whole - parts).abs();
            worst = worst.max(diff);
            if diff > tol {
                failures.push(format!("{f} at a{a}: {whole} vs {parts}"));
            }
        }
    }
    outcome(
        &failures,
        format!("{formulas} formulas, {conj}/{disj}, max |diff| {worst:e}, tolerance {tol:e}"),
    )
}

/// t-norm and t-conorm axioms on sampled triples.
fn tnorm_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tol = 1e-12;
    let mut failures = Vec::new();
    for k in TNorm::ALL {
        let mut bad = |what: &str, a: f64, b: f64, c: f64| {
            failures.push(format!("{k} {what} at ({a}, {b}, {c})"));
        };
        for _ in 0..100_000 {
            let mut u = || match rng.gen_range(0..20) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.gen_range(0.0..=1.0),
            };
            let (a, b, c): (f64, f64, f64) = (u(), u(), u());
            if (k.t(a, b) - k.t(b, a)).abs() > tol {
                bad("commutativity", a, b, c);
            }
            if (k.t(a, k.t(b, c)) - k.t(k.t(a, b), c)).abs() > tol {
                bad("associativity", a, b, c);
            }
            let (lo, hi) = if b <= c { (b, c) } else { (c, b) };
            if k.t(a, lo) > k.t(a, hi) + tol {
                bad("monotonicity", a, b, c);
            }
            if (k.t(a, 1.0) - a).abs() > tol || k.t(a, 0.0).abs() > tol {
                bad("neutrality/absorption", a, b, c);
            }
            if (k.s(a, b) - (1.0 - k.t(1.0 - a, 1.0 - b))).abs() > tol {
                bad("conorm duality", a, b, c);
            }
            if (k.s(a, 0.0) - a).abs() > tol || (k.s(a, k.s(b, c)) - k.s(k.s(a, b), c)).abs() > tol {
                bad("conorm neutrality/associativity", a, b, c);
            }
            let t = k.t(a, b);
            if !(0.0..=1.0).contains(&t) {
                bad("range", a, b, c);
            }
        }
    }
    outcome(&failures, "3 kinds x 100000 triples".into())
}

/// Test-mode entries against an independent softmax evaluation.
fn calibration_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    let mut entries = 0;
    for g in 0..5u64 {
        let kg = graph(&mut rng);
        let (n, nr) = (kg.entity_count(), kg.relation_count());
        let scorer = SyntheticScorer::new(n, nr, g).with_boost(kg.clone(), rng.gen_range(0.0..6.0));
        let cfg = CalibrationConfig {
            epsilon: 0.005,
            delta: 0.001,
            mode: CalibrationMode::Test,
        };
        let m: MatrixSet<f64> = calibrate(&scorer, &kg, &cfg).unwrap();
        let mut row = vec![0.0; n];
        for r in 0..nr {
            let rid = RelationId(r as u32);
            for a in 0..n {
                let aid = EntityId(a as u32);
                scorer.fill_row(aid, rid, &mut row);
                let mx = row.iter().cloned().fold(f64::MIN, f64::max);
                let z: f64 = row.iter().map(|s| (s - mx).exp()).sum();
                let p: Vec<f64> = row.iter().map(|s| (s - mx).exp() / z).collect();
                let obs = kg.tail_set(aid, rid);
                let q = if obs.is_empty() {
                    1.0
                } else {
                    obs.len() as f64 / obs.iter().map(|b| p[b.index()]).sum::<f64>()
                };
                let mat = m.matrix(rid).unwrap();
                for b in 0..n {
                    entries += 1;
                    let stored = mat.get(a, b);
                    let raw = p[b] * q;
                    let ok = if obs.contains(&EntityId(b as u32)) {
                        stored == 1.0
                    } else if stored > 0.0 {
                        stored >= cfg.epsilon && stored <= 1.0 - cfg.delta
                    } else {
                        raw < cfg.epsilon + 1e-12
                    };
                    if !ok {
                        failures.push(format!("r{r} ({a},{b}): stored {stored}, raw {raw}"));
                    }
                }
            }
        }
    }
    outcome(&failures, format!("{entries} entries"))
}

/// Larger budgets never lower a coordinate; the full budget is exact.
fn budget_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let limit = OracleLimit::default();
    let mut failures = Vec::new();
    let mut cases = 0;
    for g in 0..20u64 {
        let kg = graph(&mut rng);
        let n = kg.entity_count();
        let scorer =
            SyntheticScorer::new(n, kg.relation_count(), 200 + g).with_boost(kg.clone(), 3.0);
        let m: MatrixSet<f64> = calibrate(&scorer, &kg, &CalibrationConfig::default()).unwrap();
        let none = empty_like(&kg);
        for name in ["3c", "3cm"] {
            let Ok(q) = sample(structure(name).unwrap(), &none, &kg, &mut rng, 100, limit) else {
                continue;
            };
            cases += 1;
            let run = |budget_m: usize| {
                let cfg = InferenceConfig {
                    budget_m,
                    ..Default::default()
                };
                answer(&q.formula, &m, &cfg).unwrap()
            };
            let vs: Vec<FuzzyVector<f64>> = [0, 5, 10, n].into_iter().map(run).collect();
            for w in vs.windows(2) {
                if let Some(i) = (0..n).find(|&i| w[1].get(i) < w[0].get(i)) {
                    failures.push(format!("{name} {}: entity {i} decreased", q.formula));
                }
            }
            let brute = answer_vector_bruteforce(
                &q.formula,
                m.primary(),
                Connectives::new(TNorm::Product, TNorm::Godel),
                limit,
            )
            .unwrap();
            let full = &vs[3];
            if let Some(i) = (0..n).find(|&i| (full.get(i) - brute.get(i)).abs() > 1e-12) {
                failures.push(format!(
                    "{name} {}: entity {i} {} vs brute force {}",
                    q.formula,
                    full.get(i),
                    brute.get(i)
                ));
            }
        }
    }
    outcome(&failures, format!("{cases} cyclic queries, budgets 0/5/10/|E|"))
}

/// Chain queries on a ring lattice: entry visits grow by a steady amount
/// per hop.
fn complexity() -> Outcome {
    let (n, k) = (400u32, 3u32);
    let triples = (0..n).flat_map(|i| (1..=k).map(move |d| Triple::new(i, 0, (i + d) % n)));
    let kg = KnowledgeGraph::new(n as usize, 1, triples).unwrap();
    let m: MatrixSet<f64> = perfect_matrices(&kg);
    let chain = |hops: usize| {
        let mut parts = Vec::new();
        let mut prev = "a0".to_string();
        for h in 1..hops {
            parts.push(format!("r0({prev},x{h})"));
            prev = format!("x{h}");
        }
        parts.push(format!("r0({prev},f)"));
        parse_efo1(&parts.join(" & ")).unwrap()
    };
    let visits: Vec<u64> = (2..=4)
        .map(|h| {
            answer_with_stats(&chain(h), &m, &InferenceConfig::default())
                .unwrap()
                .1
                .entry_visits
        })
        .collect();
    let (d1, d2) = (visits[1] - visits[0], visits[2] - visits[1]);
    let ratio = d1.max(d2) as f64 / d1.min(d2).max(1) as f64;
    let failures = if ratio <= 2.0 && d1 > 0 {
        vec![]
    } else {
        vec![format!("increments {d1}, {d2}")]
    };
    outcome(
        &failures,
        format!("visits 2p/3p/4p = {visits:?}, increment ratio {ratio:.3}"),
    )
}

/// Externally supplied scores go through calibration, sampling and
/// evaluation end to end.
fn score_file_ingest() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let complete = random_kg(&mut rng, 20, 3, 0.1);
    let observed = random_split(&complete, &mut rng, 0.8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.bin");
    let scorer = SyntheticScorer::new(20, 3, 9).with_boost(complete.clone(), 3.0);
    ScoreFile::write(&scorer, &path).unwrap();
    let file = ScoreFile::open(&path).unwrap();
    let m: MatrixSet<f64> =
        calibrate_with_dense_variant(&file, &observed, &CalibrationConfig::default()).unwrap();
    let names: Vec<&str> = STRUCTURES.iter().map(|s| s.name).collect();
    let data = sample_dataset(&names, 3, &observed, &complete, SampleConfig::default()).unwrap();
    let samples: Vec<QuerySample> = data.into_iter().flatten().collect();
    let report = evaluate(&samples, &m, &InferenceConfig::default(), EvalMode::Hard);
    let mut failures = Vec::new();
    if samples.is_empty() || report.structures.is_empty() {
        failures.push("no queries evaluated".into());
    }
    if report
        .structures
        .values()
        .any(|s| !(0.0..=100.0).contains(&s.mrr))
    {
        failures.push("MRR outside [0, 100]".into());
    }
    outcome(
        &failures,
        format!(
            "{} queries from an external score file, average MRR {:.1}; published benchmark \
             numbers need pretrained link-predictor scores on the full graphs and are not \
             reproduced here",
            samples.len(),
            report.averages.all.unwrap_or(0.0)
        ),
    )
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 perfectness", perfectness),
        ("2 faithfulness", faithfulness),
        ("3 operator-tree coincidence", qto_coincidence),
        ("4 dnf soundness (godel/godel)", || {
            dnf_soundness(TNorm::Godel, TNorm::Godel, 0.0)
        }),
        ("4 dnf soundness (product/godel)", || {
            dnf_soundness(TNorm::Product, TNorm::Godel, 0.0)
        }),
        ("4 dnf soundness (product/product)", || {
            dnf_soundness(TNorm::Product, TNorm::Product, 1e-12)
        }),
        ("5 t-norm axioms", tnorm_axioms),
        ("6 calibration contract", calibration_contract),
        ("7 enumeration budget monotonicity", budget_monotonicity),
        ("8 complexity smoke", complexity),
        ("9 score-file protocol (disclosure)", score_file_ingest),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        failed += !o.pass as usize;
        println!(
            "criterion {name}: {status} ({:.1}s) {}",
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion check(s) failed");
        std::process::exit(1);
    }
}
