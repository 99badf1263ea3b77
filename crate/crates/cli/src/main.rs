//! `efo-fit`: build membership matrices, sample query datasets, answer
//! queries and evaluate.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage, 3 invalid query,
//! 4 resource limit.

mod commands;
mod config;
mod error;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use efo_fit::eval::EvalMode;
use efo_fit::sampler::STRUCTURES;
use efo_fit::TNorm;

use commands::BuildMode;
use config::{threads_from_env, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "efo-fit", version, about = "Fuzzy inference for existential one-free-variable queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inference {
    #[arg(long, default_value = "product")]
    conj: TNorm,
    #[arg(long, default_value = "godel")]
    disj: TNorm,
    /// Existential aggregation; only godel is valid.
    #[arg(long, default_value = "godel")]
    exist: TNorm,
    /// Enumeration candidates beyond the ones scoring exactly 1.
    #[arg(long, default_value_t = 10)]
    budget_m: usize,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    /// Keep clauses without existentials on the primary matrices.
    #[arg(long)]
    no_dense_routing: bool,
}

impl Inference {
    fn apply(&self, c: &mut RunConfig) {
        c.conj = self.conj;
        c.disj = self.disj;
        c.exist = self.exist;
        c.budget_m = self.budget_m;
        c.max_enumeration_depth = self.max_depth;
        c.use_dense_variant = !self.no_dense_routing;
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a matrix file from a graph, or from a graph and a score file.
    Build {
        #[arg(long, value_enum)]
        mode: BuildMode,
        #[arg(long)]
        kg_observed: Option<PathBuf>,
        #[arg(long, alias = "kg")]
        kg_complete: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value_t = 0.005)]
        eps: f64,
        #[arg(long, default_value_t = 0.001)]
        delta: f64,
        /// Also store dense-row matrices (test mode only).
        #[arg(long)]
        dense_variant: bool,
        /// Add an inverse relation for every relation.
        #[arg(long)]
        reverse: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample grounded queries with easy and hard answers.
    Sample {
        #[arg(long)]
        kg_observed: Option<PathBuf>,
        #[arg(long)]
        kg_complete: Option<PathBuf>,
        /// Comma-separated structure names; all known structures by default.
        #[arg(long, value_delimiter = ',')]
        structures: Vec<String>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 200)]
        max_attempts: usize,
        /// Re-read the file and recheck every answer set.
        #[arg(long)]
        verify: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer queries, one JSON line each.
    Answer {
        queries: Vec<String>,
        /// File with one query per line, or `-` for stdin.
        #[arg(long)]
        queries_file: Option<PathBuf>,
        #[arg(long)]
        matrices: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Print the query classes instead of answering.
        #[arg(long)]
        classify_only: bool,
        /// Queries are operator trees: `TREE; r1,r2; a0,a3`.
        #[arg(long)]
        lisp: bool,
        #[command(flatten)]
        inference: Inference,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean reciprocal rank of a dataset.
    Eval {
        #[arg(long)]
        matrices: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "hard")]
        mode: EvalMode,
        #[command(flatten)]
        inference: Inference,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the engine against the oracles on random graphs.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        graphs: Option<usize>,
        /// At most 15 entities per graph.
        #[arg(long)]
        quick: bool,
        /// Corrupt one matrix entry; the perfect suite must fail.
        #[arg(long)]
        corrupt: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = threads_from_env(std::env::var("EFO_FIT_THREADS").ok().as_deref())?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let start = |c: &mut RunConfig| -> Result<(), CliError> {
        c.threads = threads;
        c.validate()?;
        eprintln!("config {}", c.to_json());
        Ok(())
    };
    match cli.command {
        Command::Build {
            mode,
            kg_observed,
            kg_complete,
            scores,
            eps,
            delta,
            dense_variant,
            reverse,
            seed,
            out,
        } => {
            let mut c = RunConfig::new("build");
            c.paths.kg_observed = kg_observed;
            c.paths.kg_complete = kg_complete;
            c.paths.scores = scores;
            c.paths.out = out;
            c.epsilon = eps;
            c.delta = delta;
            c.seed = seed;
            c.mode = format!("{mode:?}").to_lowercase();
            start(&mut c)?;
            commands::build(&c, mode, dense_variant, reverse)
        }
        Command::Sample {
            kg_observed,
            kg_complete,
            structures,
            count,
            max_attempts,
            verify,
            seed,
            out,
        } => {
            let mut c = RunConfig::new("sample");
            c.paths.kg_observed = kg_observed;
            c.paths.kg_complete = kg_complete;
            c.paths.out = out;
            c.structures = if structures.is_empty() {
                STRUCTURES.iter().map(|s| s.name.to_string()).collect()
            } else {
                structures
            };
            c.count = Some(count);
            c.seed = seed;
            start(&mut c)?;
            commands::sample(&c, max_attempts, verify)
        }
        Command::Answer {
            queries,
            queries_file,
            matrices,
            top_k,
            classify_only,
            lisp,
            inference,
            seed,
            out,
        } => {
            let mut c = RunConfig::new("answer");
            inference.apply(&mut c);
            c.paths.matrices = matrices;
            c.paths.out = out;
            c.top_k = Some(top_k);
            c.classify_only = classify_only;
            c.seed = seed;
            start(&mut c)?;
            let qs = commands::collect_queries(&queries, queries_file.as_deref())?;
            commands::answer_queries(&c, &qs, lisp)
        }
        Command::Eval {
            matrices,
            dataset,
            mode,
            inference,
            seed,
            out,
        } => {
            let mut c = RunConfig::new("eval");
            inference.apply(&mut c);
            c.paths.matrices = matrices;
            c.paths.dataset = dataset;
            c.paths.out = out;
            c.mode = mode.to_string();
            c.seed = seed;
            start(&mut c)?;
            commands::eval(&c, mode)
        }
        Command::Selftest {
            seed,
            graphs,
            quick,
            corrupt,
        } => {
            let mut c = RunConfig::new("selftest");
            c.seed = seed;
            c.graphs = graphs;
            c.quick = quick;
            c.corrupt = corrupt;
            start(&mut c)?;
            commands::selftest(&c)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
