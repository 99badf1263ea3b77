use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use efo_fit::builder::{
    calibrate, calibrate_with_dense_variant, perfect_matrices, CalibrationConfig, CalibrationMode,
    ScoreFile,
};
use efo_fit::eval::{evaluate, EvalMode};
use efo_fit::fuzzy::{read_matrix_set, write_matrix_set};
use efo_fit::kg::{load_split, load_triples};
use efo_fit::logic::{classify, parse_efo1, parse_lisp, Formula, LogicError};
use efo_fit::oracle::OracleLimit;
use efo_fit::sampler::{emit_dataset, read_samples, SampleConfig};
use efo_fit::selftest::{self, SelftestConfig};
use efo_fit::{answer, EntityId, KnowledgeGraph, Matrices, RelationId};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::provenance::write_sidecar;

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

/// Observed and complete graphs in one id space; either may be absent.
fn load_graphs(
    cfg: &RunConfig,
) -> Result<(Option<KnowledgeGraph>, Option<KnowledgeGraph>), CliError> {
    let p = &cfg.paths;
    Ok(match (&p.kg_observed, &p.kg_complete) {
        (Some(o), Some(c)) => {
            let (o, c) = load_split(o, c, None)?;
            (Some(o), Some(c))
        }
        (Some(o), None) => (Some(load_triples(o, None)?), None),
        (None, Some(c)) => (None, Some(load_triples(c, None)?)),
        (None, None) => (None, None),
    })
}

fn inputs(cfg: &RunConfig) -> Vec<&Path> {
    let p = &cfg.paths;
    [&p.kg_observed, &p.kg_complete, &p.matrices, &p.scores, &p.dataset]
        .into_iter()
        .filter_map(|x| x.as_deref())
        .collect()
}

fn load_matrices(cfg: &RunConfig) -> Result<Matrices, CliError> {
    Ok(read_matrix_set(required(&cfg.paths.matrices, "--matrices")?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BuildMode {
    /// 0/1 matrices of the given graph.
    Perfect,
    Train,
    Test,
    DenseTest,
}

pub fn build(cfg: &RunConfig, mode: BuildMode, dense_variant: bool, reverse: bool) -> Result<(), CliError> {
    let out = required(&cfg.paths.out, "--out")?;
    let (observed, complete) = load_graphs(cfg)?;
    let enrich = |g: KnowledgeGraph| if reverse { g.reverse_enrich() } else { g };
    let set: Matrices = match mode {
        BuildMode::Perfect => {
            if dense_variant {
                return Err(CliError::Usage("--dense-variant needs a calibrated mode".into()));
            }
            let g = complete.or(observed).ok_or_else(|| {
                CliError::Usage("perfect mode needs --kg-complete or --kg-observed".into())
            })?;
            perfect_matrices(&enrich(g))
        }
        calibrated => {
            let observed = observed
                .ok_or_else(|| CliError::Usage("calibrated modes need --kg-observed".into()))?;
            let scores = ScoreFile::open(required(&cfg.paths.scores, "--scores")?)?;
            let cal = CalibrationConfig {
                epsilon: cfg.epsilon,
                delta: cfg.delta,
                mode: match calibrated {
                    BuildMode::Train => CalibrationMode::Train,
                    BuildMode::DenseTest => CalibrationMode::DenseTest,
                    _ => CalibrationMode::Test,
                },
            };
            let observed = enrich(observed);
            if dense_variant {
                if cal.mode != CalibrationMode::Test {
                    return Err(CliError::Usage("--dense-variant goes with --mode test".into()));
                }
                calibrate_with_dense_variant(&scores, &observed, &cal)?
            } else {
                calibrate(&scores, &observed, &cal)?
            }
        }
    };
    write_matrix_set(&set, out)?;
    let summary = json!({
        "entities": set.entity_count(),
        "relations": set.relation_count(),
        "dense_variant": set.dense_variant().is_some(),
    });
    let side = write_sidecar("build", cfg, &inputs(cfg), out, summary)?;
    eprintln!(
        "wrote {} ({} entities, {} relations) and {}",
        out.display(),
        set.entity_count(),
        set.relation_count(),
        side.display()
    );
    Ok(())
}

pub fn sample(cfg: &RunConfig, max_attempts: usize, verify: bool) -> Result<(), CliError> {
    let out = required(&cfg.paths.out, "--out")?;
    let (observed, complete) = load_graphs(cfg)?;
    let (Some(observed), Some(complete)) = (observed, complete) else {
        return Err(CliError::Usage("sample needs --kg-observed and --kg-complete".into()));
    };
    let names: Vec<&str> = cfg.structures.iter().map(String::as_str).collect();
    let known = selftest::known_structures();
    if let Some(bad) = names.iter().find(|n| !known.contains(*n)) {
        let mut all: Vec<_> = known.into_iter().collect();
        all.sort_unstable();
        return Err(CliError::Usage(format!(
            "unknown structure `{bad}`; known: {}",
            all.join(",")
        )));
    }
    let sc = SampleConfig {
        seed: cfg.seed,
        max_attempts,
        limit: OracleLimit::default(),
    };
    let counts = emit_dataset(&names, cfg.count.unwrap_or(1), &observed, &complete, sc, out)?;
    for (name, n) in &counts {
        println!("{name}\t{n}");
    }
    if verify {
        let samples = read_samples(out)?;
        let bad = samples
            .iter()
            .map(|q| q.revalidate(&observed, &complete, sc.limit))
            .collect::<Result<Vec<bool>, _>>()?
            .into_iter()
            .filter(|ok| !ok)
            .count();
        if bad > 0 {
            return Err(CliError::Validation(format!(
                "{bad} of {} samples disagree with the oracle",
                samples.len()
            )));
        }
        eprintln!("verified {} samples against the oracle", samples.len());
    }
    let summary = json!({ "counts": counts.iter().cloned().collect::<std::collections::BTreeMap<_, _>>() });
    write_sidecar("sample", cfg, &inputs(cfg), out, summary)?;
    Ok(())
}

/// Queries from the positional list and, if given, a file with one query per
/// line (`#` starts a comment line).
pub fn collect_queries(inline: &[String], file: Option<&Path>) -> Result<Vec<String>, CliError> {
    let mut qs = inline.to_vec();
    if let Some(p) = file {
        let r: Box<dyn BufRead> = if p == Path::new("-") {
            Box::new(BufReader::new(io::stdin()))
        } else {
            Box::new(BufReader::new(File::open(p).map_err(|e| CliError::io(p, e))?))
        };
        for line in r.lines() {
            let line = line.map_err(|e| CliError::io(p, e))?;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                qs.push(t.to_string());
            }
        }
    }
    if qs.is_empty() {
        return Err(CliError::Usage("no query given".into()));
    }
    Ok(qs)
}

fn ids(list: &str, prefixes: &[char]) -> Result<Vec<u32>, LogicError> {
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.strip_prefix(prefixes)
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| LogicError::Lisp(format!("bad id `{t}`")))
        })
        .collect()
}

/// `TREE; r1,r2; a0,a3`: an operator tree with its relations and anchors in
/// textual order.
pub fn parse_lisp_query(text: &str) -> Result<Formula, LogicError> {
    let parts: Vec<&str> = text.split(';').collect();
    let [tree, rels, ents] = parts[..] else {
        return Err(LogicError::Lisp(
            "expected `tree; relations; entities`".into(),
        ));
    };
    let rels: Vec<RelationId> = ids(rels, &['r'])?.into_iter().map(RelationId).collect();
    let ents: Vec<EntityId> = ids(ents, &['a', 'e'])?.into_iter().map(EntityId).collect();
    parse_lisp(tree.trim(), &rels, &ents)
}

fn answer_one(
    text: &str,
    cfg: &RunConfig,
    matrices: Option<&Matrices>,
    lisp: bool,
) -> Result<serde_json::Value, CliError> {
    let f = if lisp { parse_lisp_query(text)? } else { parse_efo1(text)? };
    if cfg.classify_only {
        let classes: Vec<&str> = classify(&f)?.into_iter().map(|c| c.name()).collect();
        return Ok(json!({ "query": text, "classes": classes }));
    }
    let m = matrices.expect("loaded unless classify-only");
    let v = answer(&f, m, &cfg.inference())?;
    let top: Vec<(String, f64)> = v
        .top_k(cfg.top_k.unwrap_or(10))
        .into_iter()
        .map(|(e, s)| (e.to_string(), s))
        .collect();
    Ok(json!({ "query": text, "top_k": top }))
}

/// Streams one JSON line per query. A failing query is reported on stderr and
/// the remaining ones still run; the first failure decides the exit code.
pub fn answer_queries(cfg: &RunConfig, queries: &[String], lisp: bool) -> Result<(), CliError> {
    let matrices = if cfg.classify_only {
        None
    } else {
        Some(load_matrices(cfg)?)
    };
    let mut sink: Box<dyn Write> = match &cfg.paths.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    };
    let mut first_err = None;
    for q in queries {
        match answer_one(q, cfg, matrices.as_ref(), lisp) {
            Ok(v) => writeln!(sink, "{v}").map_err(|e| CliError::Runtime(e.to_string()))?,
            Err(e) => {
                eprintln!("{q}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    sink.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    drop(sink);
    if let Some(p) = &cfg.paths.out {
        write_sidecar("answer", cfg, &inputs(cfg), p, json!({ "queries": queries.len() }))?;
    }
    first_err.map_or(Ok(()), Err)
}

pub fn eval(cfg: &RunConfig, mode: EvalMode) -> Result<(), CliError> {
    let matrices = load_matrices(cfg)?;
    let samples = read_samples(required(&cfg.paths.dataset, "--dataset")?)?;
    let report = evaluate(&samples, &matrices, &cfg.inference(), mode);
    print!("{}", report.to_table());
    if let Some(out) = &cfg.paths.out {
        std::fs::write(out, report.to_json() + "\n").map_err(|e| CliError::io(out, e))?;
        let summary = json!({ "samples": samples.len(), "failures": report.failures });
        write_sidecar("eval", cfg, &inputs(cfg), out, summary)?;
    }
    Ok(())
}

pub fn selftest(cfg: &RunConfig) -> Result<(), CliError> {
    let mut st = SelftestConfig {
        seed: cfg.seed,
        corrupt: cfg.corrupt,
        ..Default::default()
    };
    if let Some(g) = cfg.graphs {
        st.graphs = g;
    }
    if cfg.quick {
        st = st.quick();
    }
    let mut failed = 0;
    for r in selftest::run(&st) {
        if r.passed() {
            println!("{}: PASS ({} cases)", r.name, r.cases);
        } else {
            failed += 1;
            println!("{}: FAIL ({} of {} cases)", r.name, r.failures.len(), r.cases);
            for f in r.failures.iter().take(3) {
                println!("  counterexample: {f}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} suite(s) failed")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lisp_queries() {
        let f = parse_lisp_query("(i,(p,(e)),(n,(p,(e)))); r1,r2; a0,a3").unwrap();
        assert_eq!(f.relations().len(), 2);
        assert!(f.contains_negation());
        assert!(parse_lisp_query("(p,(e)); r1").is_err());
        assert!(parse_lisp_query("(p,(e)); q1; a0").is_err());
        assert!(parse_lisp_query("(p,(e)); r1,r2; a0").is_err());
    }
}
