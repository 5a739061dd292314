//! The experiment loop: choose a query, sample attributes, run the
//! experiment, update the belief and attribute statistics, then promote any
//! attribute the outcome depends on.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bn::{Instantiation, ModelState, VariableSpec};
use crate::error::{Error, Result};
use crate::learner::LearnerState;
use crate::refinement::{modify_model, promoted_names, AttributeStats, RefinementConfig};
use crate::rng::{SeededStream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Pick the query with the lowest expected posterior error.
    Active,
    /// Pick queries uniformly at random.
    Passive,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Active => "active",
            Mode::Passive => "passive",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(Mode::Active),
            "passive" => Ok(Mode::Passive),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

/// What the learner asks the subject to do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRequest {
    pub query: Instantiation,
    pub attributes: Instantiation,
    /// Situation variables the subject's environment must assign.
    pub environment: Vec<VariableSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub situation: Instantiation,
    pub outcome: Instantiation,
}

/// Anything that can run an experiment: a simulator, a robot bridge, an operator.
pub trait Subject {
    fn experiment(&mut self, request: &ExperimentRequest) -> Result<ExperimentResult>;

    /// Distance of `model` from the subject's true behaviour, when known.
    fn kl_to_truth(&self, _model: &ModelState) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub mode: Mode,
    pub query: Instantiation,
    pub situation: Instantiation,
    pub attributes: Instantiation,
    pub outcome: Instantiation,
    pub model_error: f64,
    pub kl_to_truth: Option<f64>,
    pub promoted_vars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceError {
    pub iteration: u64,
    pub error: String,
}

/// A proposed experiment waiting for its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub iteration: u64,
    pub query: Instantiation,
    pub attributes: Instantiation,
    pub epe: Option<f64>,
    pub model_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub iteration: u64,
    pub model_error: f64,
    pub promoted_vars: Vec<String>,
}

/// Learner, attribute statistics and random streams advancing one
/// experiment at a time. Batch runs and interactive sessions both drive it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experimenter {
    pub learner: LearnerState,
    pub stats: AttributeStats,
    pub config: RefinementConfig,
    pub mode: Mode,
    pub iteration: u64,
    query_rng: SeededStream,
    attribute_rng: SeededStream,
}

impl Experimenter {
    pub fn new(
        learner: LearnerState,
        mut stats: AttributeStats,
        config: RefinementConfig,
        mode: Mode,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        learner.validate()?;
        stats.n_min = config.n_min;
        Ok(Experimenter {
            learner,
            stats,
            config,
            mode,
            iteration: 0,
            query_rng: SeededStream::new(seed, Stream::Query),
            attribute_rng: SeededStream::new(seed, Stream::Attributes),
        })
    }

    pub fn model_error(&self) -> f64 {
        self.learner.model_error()
    }

    /// Chooses the next query and samples each tracked attribute uniformly.
    pub fn propose(&mut self) -> Result<Proposal> {
        let model_error = self.model_error();
        let (query, epe) = match self.mode {
            Mode::Active => {
                let best = self.learner.best_query()?;
                (best.query, Some(best.epe))
            }
            Mode::Passive => (self.learner.passive_query(&mut self.query_rng)?, None),
        };
        let mut attributes = Instantiation::new();
        for a in &self.stats.attributes {
            let i = self.attribute_rng.random_range(0..a.cardinality());
            attributes.bind(&a.name, &a.domain[i]);
        }
        Ok(Proposal {
            iteration: self.iteration + 1,
            query,
            attributes,
            epe,
            model_error,
        })
    }

    pub fn request(&self, proposal: &Proposal) -> ExperimentRequest {
        ExperimentRequest {
            query: proposal.query.clone(),
            attributes: proposal.attributes.clone(),
            environment: self
                .learner
                .uncontrolled_specs()
                .into_iter()
                .cloned()
                .collect(),
        }
    }

    /// Folds one experiment in. Nothing changes when validation fails.
    pub fn observe(
        &mut self,
        situation: &Instantiation,
        attributes: &Instantiation,
        outcome: &Instantiation,
    ) -> Result<StepReport> {
        let mut learner = self.learner.clone();
        let mut stats = self.stats.clone();
        learner.observe(situation, outcome, attributes)?;
        let recorded = &learner.history.last().expect("just observed").situation;
        stats.record(recorded, attributes, outcome)?;

        let promotions = stats.detect(&self.config)?;
        let promoted = promoted_names(&promotions);
        if !promoted.is_empty() {
            (learner, stats) = modify_model(&learner, &stats, &promotions, &self.config)?;
        }
        self.learner = learner;
        self.stats = stats;
        self.iteration += 1;
        Ok(StepReport {
            iteration: self.iteration,
            model_error: self.model_error(),
            promoted_vars: promoted,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub max_iter: u64,
    pub mode: Mode,
    pub seed: u64,
    pub refinement: RefinementConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnOutput {
    pub learner: LearnerState,
    pub stats: AttributeStats,
    /// Distance to the truth before the first experiment, when known.
    pub initial_kl: Option<f64>,
    pub trace: Vec<TraceRecord>,
    pub error: Option<TraceError>,
}

/// Runs exactly `config.max_iter` experiments against `subject`, stopping
/// early only if the subject fails.
pub fn learn_model<S: Subject + ?Sized>(
    subject: &mut S,
    learner: LearnerState,
    stats: AttributeStats,
    config: &LearnConfig,
) -> Result<LearnOutput> {
    let mut exp = Experimenter::new(
        learner,
        stats,
        config.refinement.clone(),
        config.mode,
        config.seed,
    )?;
    let initial_kl = subject.kl_to_truth(&exp.learner.model);
    let mut trace = Vec::with_capacity(config.max_iter as usize);
    let mut error = None;
    while exp.iteration < config.max_iter {
        let proposal = exp.propose()?;
        let step = subject.experiment(&exp.request(&proposal)).and_then(|res| {
            let step = exp.observe(&res.situation, &proposal.attributes, &res.outcome)?;
            Ok((res, step))
        });
        let (res, step) = match step {
            Ok(ok) => ok,
            Err(e) => {
                error = Some(TraceError {
                    iteration: proposal.iteration,
                    error: e.to_string(),
                });
                break;
            }
        };
        let recorded = exp.learner.history.last().expect("observed");
        trace.push(TraceRecord {
            iteration: step.iteration,
            mode: config.mode,
            query: proposal.query,
            situation: recorded.situation.clone(),
            attributes: proposal.attributes,
            outcome: res.outcome,
            model_error: step.model_error,
            kl_to_truth: subject.kl_to_truth(&exp.learner.model),
            promoted_vars: step.promoted_vars,
        });
    }
    Ok(LearnOutput {
        learner: exp.learner,
        stats: exp.stats,
        initial_kl,
        trace,
        error,
    })
}
