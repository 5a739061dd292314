//! Turn-based learning sessions: the learner proposes one experiment, an
//! operator runs it and reports what happened.

mod http;
mod store;

pub use http::router;
pub use store::{SessionStore, StoreError};

use serde::{Deserialize, Serialize};

use crate::bn::{Instantiation, ModelDocument};
use crate::error::{Error, Result};
use crate::learn::{Experimenter, Mode, Proposal, TraceRecord};
use crate::refinement::RefinementConfig;
use crate::scenario::Scenario;
use crate::scoring::{favourable_contexts, ReferenceSpec, ScoreReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Ready,
    AwaitingOutcome,
    Finished,
}

/// A bundled scenario name or an inline scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    Bundled(String),
    Inline(Box<Scenario>),
}

impl ScenarioSource {
    pub fn resolve(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::Bundled(name) => Scenario::bundled(name),
            ScenarioSource::Inline(s) => {
                s.validate()?;
                Ok((**s).clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub scenario: ScenarioSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub max_iter: Option<u64>,
    #[serde(default)]
    pub r_threshold: Option<f64>,
    #[serde(default)]
    pub n_min: Option<u64>,
    #[serde(default)]
    pub threshold: Option<f64>,
}

fn default_mode() -> Mode {
    Mode::Active
}

impl CreateSession {
    pub fn new(scenario: ScenarioSource, seed: u64) -> Self {
        CreateSession {
            scenario,
            seed,
            mode: Mode::Active,
            max_iter: None,
            r_threshold: None,
            n_min: None,
            threshold: None,
        }
    }
}

/// What the operator reports after running the pending experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    /// Values of uncontrolled situation variables; fixed values fill gaps.
    #[serde(default)]
    pub situation: Instantiation,
    pub outcome: Instantiation,
    /// Attribute values actually used; the requested ones fill gaps.
    #[serde(default)]
    pub attributes: Instantiation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextQuery {
    pub iteration: u64,
    pub query: Instantiation,
    pub attributes: Instantiation,
    /// Situation variables the operator must report with the outcome.
    pub environment: Vec<String>,
    pub epe: Option<f64>,
    pub model_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSummary {
    pub iteration: u64,
    pub model_error: f64,
    pub promoted_vars: Vec<String>,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub scenario: String,
    pub status: SessionStatus,
    pub iteration: u64,
    pub model_error: f64,
    pub model: ModelDocument,
    pub query_vars: Vec<String>,
    pub attributes: Vec<String>,
    pub pending: Option<NextQuery>,
    pub trace: Vec<TraceRecord>,
    pub scores: Option<ScoreReport>,
}

/// Why a session request was refused.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Invalid(#[from] Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub scenario: String,
    pub status: SessionStatus,
    pub experimenter: Experimenter,
    pub pending: Option<Proposal>,
    pub log: Vec<TraceRecord>,
    pub reference: Option<ReferenceSpec>,
    pub fixed: Instantiation,
    pub max_iter: Option<u64>,
    pub threshold: f64,
}

impl Session {
    pub fn create(id: String, request: &CreateSession) -> Result<Session> {
        let scenario = request.scenario.resolve()?;
        let mut config: RefinementConfig = scenario.refinement_config();
        if let Some(r) = request.r_threshold {
            config.r_threshold = r;
        }
        if let Some(n) = request.n_min {
            config.n_min = n;
        }
        let threshold = request.threshold.unwrap_or(scenario.defaults.threshold);
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold {threshold} not in [0, 1]"
            )));
        }
        let experimenter = Experimenter::new(
            scenario.learner_state()?,
            scenario.attribute_stats(config.n_min),
            config,
            request.mode,
            request.seed,
        )?;
        let status = if request.max_iter == Some(0) {
            SessionStatus::Finished
        } else {
            SessionStatus::Ready
        };
        Ok(Session {
            id,
            scenario: scenario.name.clone(),
            status,
            experimenter,
            pending: None,
            log: Vec::new(),
            reference: scenario.reference.clone(),
            fixed: scenario.fixed_values(),
            max_iter: request.max_iter,
            threshold,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.experimenter.iteration
    }

    pub fn model_error(&self) -> f64 {
        self.experimenter.model_error()
    }

    fn view(&self, p: &Proposal) -> NextQuery {
        NextQuery {
            iteration: p.iteration,
            query: p.query.clone(),
            attributes: p.attributes.clone(),
            environment: self
                .experimenter
                .learner
                .uncontrolled_specs()
                .iter()
                .map(|v| v.name.clone())
                .collect(),
            epe: p.epe,
            model_error: p.model_error,
        }
    }

    /// Proposes the next experiment, or repeats the pending one.
    pub fn next_query(&mut self, redraw: bool) -> Result<NextQuery, SessionError> {
        match self.status {
            SessionStatus::Finished => Err(SessionError::Conflict("session is finished".into())),
            SessionStatus::AwaitingOutcome if redraw => Err(SessionError::Conflict(
                "an experiment is pending; report its outcome first".into(),
            )),
            SessionStatus::AwaitingOutcome => {
                let p = self.pending.as_ref().expect("pending while awaiting");
                Ok(self.view(p))
            }
            SessionStatus::Ready => {
                let p = self.experimenter.propose()?;
                let view = self.view(&p);
                self.pending = Some(p);
                self.status = SessionStatus::AwaitingOutcome;
                Ok(view)
            }
        }
    }

    /// Folds in the outcome of the pending experiment. Nothing changes on error.
    pub fn post_observation(
        &mut self,
        obs: &Observation,
    ) -> Result<ObservationSummary, SessionError> {
        if self.status != SessionStatus::AwaitingOutcome {
            return Err(SessionError::Conflict("no experiment is pending".into()));
        }
        let pending = self.pending.clone().expect("pending while awaiting");
        let learner = &self.experimenter.learner;
        let mut situation = pending.query.clone();
        for (name, value) in obs.situation.iter() {
            if learner.query_vars.iter().any(|q| q == name) {
                if pending.query.get(name) != Some(value) {
                    return Err(Error::InvalidConfig(format!(
                        "`{name}` was set by the query and cannot be overridden"
                    ))
                    .into());
                }
            } else {
                learner.model.structure.node(name)?;
                situation.bind(name, value);
            }
        }
        for v in learner.uncontrolled_specs() {
            if !situation.contains(&v.name) {
                let value = self.fixed.require(&v.name)?;
                situation.bind(&v.name, value);
            }
        }
        let mut attributes = pending.attributes.clone();
        for (name, value) in obs.attributes.iter() {
            let spec = self.experimenter.stats.attribute(name)?;
            spec.index_of(value)?;
            attributes.bind(name, value);
        }
        for name in obs.outcome.names() {
            let v = learner.model.structure.node(name)?;
            if v.role != crate::bn::Role::Outcome {
                return Err(
                    Error::InvalidConfig(format!("`{name}` is not an outcome variable")).into(),
                );
            }
        }

        let mut exp = self.experimenter.clone();
        let step = exp.observe(&situation, &attributes, &obs.outcome)?;
        let recorded = exp.learner.history.last().expect("observed");
        self.log.push(TraceRecord {
            iteration: step.iteration,
            mode: exp.mode,
            query: pending.query,
            situation: recorded.situation.clone(),
            attributes,
            outcome: recorded.outcome.clone(),
            model_error: step.model_error,
            kl_to_truth: None,
            promoted_vars: step.promoted_vars.clone(),
        });
        self.experimenter = exp;
        self.pending = None;
        self.status = match self.max_iter {
            Some(m) if self.experimenter.iteration >= m => SessionStatus::Finished,
            _ => SessionStatus::Ready,
        };
        Ok(ObservationSummary {
            iteration: step.iteration,
            model_error: step.model_error,
            promoted_vars: step.promoted_vars,
            status: self.status,
        })
    }

    pub fn scores(&self, threshold: Option<f64>) -> Result<Option<ScoreReport>> {
        self.reference
            .as_ref()
            .map(|r| {
                favourable_contexts(
                    &self.experimenter.learner.model,
                    r,
                    threshold.unwrap_or(self.threshold),
                )
            })
            .transpose()
    }

    pub fn state(&self) -> Result<SessionState> {
        Ok(SessionState {
            id: self.id.clone(),
            scenario: self.scenario.clone(),
            status: self.status,
            iteration: self.iteration(),
            model_error: self.model_error(),
            model: self.experimenter.learner.model.to_document(None),
            query_vars: self.experimenter.learner.query_vars.clone(),
            attributes: self
                .experimenter
                .stats
                .attributes
                .iter()
                .map(|a| a.name.clone())
                .collect(),
            pending: self.pending.as_ref().map(|p| self.view(p)),
            trace: self.log.clone(),
            scores: self.scores(None)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ballkick() -> Session {
        let req = CreateSession::new(ScenarioSource::Bundled("ballkick_basic".into()), 1);
        Session::create("s".into(), &req).unwrap()
    }

    fn kick(dir: &str) -> Observation {
        Observation {
            outcome: Instantiation::from_pairs([("KDo", dir)]),
            ..Default::default()
        }
    }

    #[test]
    fn fresh_session() {
        let s = ballkick();
        assert_eq!(s.status, SessionStatus::Ready);
        assert!((s.model_error() - (4f64.ln() - 13.0 / 12.0)).abs() < 1e-12);
        assert!(s.state().unwrap().trace.is_empty());
    }

    #[test]
    fn state_machine() {
        let mut s = ballkick();
        assert!(matches!(
            s.post_observation(&kick("Left")),
            Err(SessionError::Conflict(_))
        ));
        let q1 = s.next_query(false).unwrap();
        assert_eq!(q1.query, s.experimenter.learner.query_space().unwrap()[0]);
        assert_eq!(s.next_query(false).unwrap(), q1);
        assert!(matches!(s.next_query(true), Err(SessionError::Conflict(_))));
        let before = s.clone();
        assert!(matches!(
            s.post_observation(&kick("Up")),
            Err(SessionError::Invalid(_))
        ));
        assert_eq!(s, before);
        let sum = s.post_observation(&kick("Left")).unwrap();
        assert_eq!(sum.iteration, 1);
        assert_eq!(sum.status, SessionStatus::Ready);
        assert!(sum.model_error < q1.model_error);
        let q2 = s.next_query(true).unwrap();
        assert!(q2.epe.unwrap() < q2.model_error);
        assert_eq!(s.state().unwrap().trace.len(), 1);
    }

    #[test]
    fn max_iter_finishes() {
        let mut req = CreateSession::new(ScenarioSource::Bundled("ballkick_basic".into()), 1);
        req.max_iter = Some(1);
        let mut s = Session::create("s".into(), &req).unwrap();
        s.next_query(false).unwrap();
        assert_eq!(
            s.post_observation(&kick("Mid")).unwrap().status,
            SessionStatus::Finished
        );
        assert!(matches!(
            s.next_query(false),
            Err(SessionError::Conflict(_))
        ));
    }

    #[test]
    fn cannot_override_query() {
        let mut s = ballkick();
        let q = s.next_query(false).unwrap();
        let other = if q.query.get("KDc") == Some("Left") {
            "Mid"
        } else {
            "Left"
        };
        let obs = Observation {
            situation: Instantiation::from_pairs([("KDc", other)]),
            ..kick("Left")
        };
        assert!(matches!(
            s.post_observation(&obs),
            Err(SessionError::Invalid(_))
        ));
    }

    #[test]
    fn pickup_scores_attached() {
        let req = CreateSession::new(ScenarioSource::Bundled("pickup".into()), 1);
        let s = Session::create("p".into(), &req).unwrap();
        assert_eq!(s.scores(None).unwrap().unwrap().rows.len(), 12);
    }
}
