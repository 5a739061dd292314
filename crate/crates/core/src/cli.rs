//! The `capex` command line: batch simulation, active/passive comparison,
//! scoring and the session server.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::bn::ModelState;
use crate::error::{Error, Result};
use crate::learn::{LearnConfig, Mode};
use crate::scenario::Scenario;
use crate::scoring::{favourable_contexts, ReferenceSpec};
use crate::session::{router, SessionStore};
use crate::sim::{run_trial, Trial};
use crate::trace::{curve, curve_csv, trace_csv, trace_jsonl, write_all_atomic};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "capex",
    version,
    about = "Learn capability models by active experimentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one learning trial against a simulated subject.
    Simulate(SimulateArgs),
    /// Run active and passive learning over many seeds and summarize the curves.
    Compare(CompareArgs),
    /// Score every context of a learned model against a reference.
    Score(ScoreArgs),
    /// Serve the session API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Bundled scenario name or path to a scenario file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 150)]
    pub iters: u64,
    #[arg(long)]
    pub r_threshold: Option<f64>,
    #[arg(long)]
    pub n_min: Option<u64>,
    /// Draw the subject's CPTs at random per seed instead of using the scenario's.
    #[arg(long)]
    pub random_truth: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut s = Scenario::load(&self.scenario)?;
        if self.random_truth {
            s.truth_cpt = None;
        }
        if let Some(r) = self.r_threshold {
            s.defaults.r_threshold = r;
        }
        if let Some(n) = self.n_min {
            s.defaults.n_min = n;
        }
        s.refinement_config().validate()?;
        Ok(s)
    }

    fn config(&self, s: &Scenario, mode: Mode, seed: u64) -> LearnConfig {
        LearnConfig {
            max_iter: self.iters,
            mode,
            seed,
            refinement: s.refinement_config(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    #[arg(long, default_value = "active")]
    pub mode: Mode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trace CSV path (default: <out-dir>/trace.csv).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Trace JSON-lines path (default: <out-dir>/trace.jsonl).
    #[arg(long)]
    pub trace_jsonl: Option<PathBuf>,
    /// Final model path (default: <out-dir>/model.json).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Model JSON written by `simulate`.
    #[arg(long)]
    pub model: PathBuf,
    /// Scenario providing the reference (bundled name or path).
    #[arg(long, conflicts_with = "reference")]
    pub scenario: Option<String>,
    /// Reference file (JSON list of reference rules).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Report path (default: scores.json next to the model).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "CAPEX_DATA_DIR", default_value = "capex-data")]
    pub data_dir: PathBuf,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_validation() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            },
            message: e.to_string(),
        }
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    runtime(format!("{}: {e}", path.display()))
}

fn write_outputs(files: Vec<(PathBuf, Vec<u8>)>) -> Result<(), Failure> {
    for (path, _) in &files {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        }
    }
    write_all_atomic(&files).map_err(|e| runtime(e.to_string()))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into())
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let c = &args.common;
    let scenario = c.load()?;
    let trial = run_trial(&scenario, &c.config(&scenario, args.mode, args.seed))?;
    let trace = &trial.output.trace;
    let model = &trial.output.learner.model;
    let files = vec![
        (
            args.trace
                .clone()
                .unwrap_or_else(|| c.out_dir.join("trace.csv")),
            trace_csv(trace)?.into_bytes(),
        ),
        (
            args.trace_jsonl
                .clone()
                .unwrap_or_else(|| c.out_dir.join("trace.jsonl")),
            trace_jsonl(trace)?.into_bytes(),
        ),
        (
            args.model
                .clone()
                .unwrap_or_else(|| c.out_dir.join("model.json")),
            model.to_json(Some(args.seed))?.into_bytes(),
        ),
    ];
    write_outputs(files)?;
    let promoted: Vec<String> = trace.iter().flat_map(|t| t.promoted_vars.clone()).collect();
    let _ = writeln!(
        out,
        "iterations={} model_error={:.6} kl_to_truth={} promoted={}",
        trace.len(),
        trial.output.learner.model_error(),
        fmt_opt(trial.kl.last().copied()),
        if promoted.is_empty() {
            "none".to_string()
        } else {
            promoted.join(",")
        }
    );
    Ok(())
}

pub fn compare(args: &CompareArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let c = &args.common;
    if args.seeds == 0 {
        return Err(Error::InvalidConfig("need at least one seed".into()).into());
    }
    let scenario = c.load()?;
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let mut files = Vec::new();
    let mut finals = Vec::new();
    for mode in [Mode::Active, Mode::Passive] {
        let trials: Vec<Trial> = seeds
            .par_iter()
            .map(|&seed| run_trial(&scenario, &c.config(&scenario, mode, seed)))
            .collect::<Result<_>>()?;
        let kl: Vec<Vec<f64>> = trials.iter().map(|t| t.kl.clone()).collect();
        let me: Vec<Vec<f64>> = trials.iter().map(|t| t.model_error.clone()).collect();
        let points = curve(&kl, &me)?;
        finals.push(points.last().expect("non-empty curve").kl_mean);
        files.push((
            c.out_dir.join(format!("curves_{mode}.csv")),
            curve_csv(&points)?.into_bytes(),
        ));
    }
    write_outputs(files)?;
    let _ = writeln!(
        out,
        "seeds={} iterations={} final_kl active={:.6} passive={:.6} active_dominated={}",
        args.seeds,
        c.iters,
        finals[0],
        finals[1],
        finals[0] <= finals[1]
    );
    Ok(())
}

pub fn score(args: &ScoreArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.model).map_err(|e| io_failure(&args.model, e))?;
    let model = ModelState::from_json(&text)?;
    let (reference, default_threshold) = match (&args.scenario, &args.reference) {
        (Some(name), _) => {
            let s = Scenario::load(name)?;
            let r = s
                .reference
                .ok_or_else(|| Error::InvalidScenario(format!("`{name}` has no reference")))?;
            (r, s.defaults.threshold)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            let r: ReferenceSpec =
                serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            (r, crate::scoring::DEFAULT_SCORE_THRESHOLD)
        }
        (None, None) => {
            return Err(Error::InvalidConfig("pass --scenario or --reference".into()).into())
        }
    };
    reference.validate_for(&model)?;
    let report = favourable_contexts(
        &model,
        &reference,
        args.threshold.unwrap_or(default_threshold),
    )?;
    let path = args.out.clone().unwrap_or_else(|| {
        args.model
            .parent()
            .unwrap_or(Path::new("."))
            .join("scores.json")
    });
    write_outputs(vec![(
        path,
        serde_json::to_vec_pretty(&report).map_err(Error::from)?,
    )])?;
    let _ = write!(out, "{}", report.to_table());
    Ok(())
}

pub fn serve(args: &ServeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let store = SessionStore::open(&args.data_dir).map_err(|e| runtime(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| runtime(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", args.port))
            .await
            .map_err(|e| runtime(format!("port {}: {e}", args.port)))?;
        let addr = listener.local_addr().map_err(|e| runtime(e.to_string()))?;
        let _ = writeln!(
            out,
            "listening on {addr}, {} session(s) in {}",
            store.ids().len(),
            args.data_dir.display()
        );
        let _ = out.flush();
        axum::serve(listener, router(Arc::new(store)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| runtime(e.to_string()))
    })
}

/// Runs the parsed command, printing results to `out`; returns the exit code.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Compare(a) => compare(a, out),
        Command::Score(a) => score(a, out),
        Command::Serve(a) => serve(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
