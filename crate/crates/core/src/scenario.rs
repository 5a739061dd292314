//! Scenario files: the true subject, what the learner starts from, the
//! reference behaviour and default knobs. Four scenarios ship with the crate.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::bn::{
    enumerate_instantiations, DirichletCpt, Instantiation, ModelState, NetworkStructure, Role,
    VariableSpec, DEFAULT_PRIOR,
};
use crate::error::{Error, Result};
use crate::learner::LearnerState;
use crate::refinement::{AttributeStats, RefinementConfig, DEFAULT_N_MIN, DEFAULT_R_THRESHOLD};
use crate::rng::{SeededStream, Stream};
use crate::scoring::{ReferenceSpec, DEFAULT_SCORE_THRESHOLD};
use crate::sim::{HiddenRule, SubjectSpec};

const BUNDLED: [(&str, &str); 4] = [
    (
        "ballkick_basic",
        include_str!("../scenarios/ballkick_basic.json"),
    ),
    (
        "ballkick_missing_size",
        include_str!("../scenarios/ballkick_missing_size.json"),
    ),
    (
        "ballkick_missing_two",
        include_str!("../scenarios/ballkick_missing_two.json"),
    ),
    ("pickup", include_str!("../scenarios/pickup.json")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioVariable {
    pub name: String,
    pub domain: Vec<String>,
    pub role: Role,
    #[serde(default)]
    pub controllable: bool,
    /// Drawn by the environment and never shown to the learner.
    #[serde(default)]
    pub hidden: bool,
    /// Value the environment always assigns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<String>,
}

impl ScenarioVariable {
    pub fn spec(&self) -> VariableSpec {
        VariableSpec {
            name: self.name.clone(),
            domain: self.domain.clone(),
            role: self.role,
            controllable: self.controllable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Priors {
    /// Symmetric pseudo-count for every row.
    Symmetric(f64),
    /// Explicit rows per outcome variable.
    Rows(IndexMap<String, Vec<Vec<f64>>>),
}

impl Default for Priors {
    fn default() -> Self {
        Priors::Symmetric(DEFAULT_PRIOR)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerInitial {
    pub variables: Vec<String>,
    pub parents: IndexMap<String, Vec<String>>,
    #[serde(default)]
    pub priors: Priors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioDefaults {
    pub r_threshold: f64,
    pub n_min: u64,
    pub threshold: f64,
}

impl Default for ScenarioDefaults {
    fn default() -> Self {
        ScenarioDefaults {
            r_threshold: DEFAULT_R_THRESHOLD,
            n_min: DEFAULT_N_MIN,
            threshold: DEFAULT_SCORE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub variables: Vec<ScenarioVariable>,
    /// True parents of each outcome variable.
    #[serde(default)]
    pub parents: IndexMap<String, Vec<String>>,
    /// True CPT rows; drawn at random per seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_cpt: Option<IndexMap<String, Vec<Vec<f64>>>>,
    #[serde(default)]
    pub noise_rate: f64,
    #[serde(default)]
    pub hidden_rules: Vec<HiddenRule>,
    #[serde(default)]
    pub environment: IndexMap<String, Vec<f64>>,
    pub learner_initial: LearnerInitial,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub defaults: ScenarioDefaults,
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self> {
        let s: Scenario =
            serde_json::from_str(json).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, json) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidScenario(format!("no bundled scenario `{name}`")))?;
        Self::from_json(json)
    }

    /// A bundled scenario name or a path to a scenario file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if bundled_names().any(|n| n == name_or_path) {
            return Self::bundled(name_or_path);
        }
        let text = std::fs::read_to_string(Path::new(name_or_path))
            .map_err(|e| Error::InvalidScenario(format!("{name_or_path}: {e}")))?;
        Self::from_json(&text)
    }

    pub fn variable(&self, name: &str) -> Result<&ScenarioVariable> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.variables.iter().enumerate() {
            v.spec().validate()?;
            if self.variables[..i].iter().any(|w| w.name == v.name) {
                return Err(Error::InvalidScenario(format!(
                    "duplicate variable `{}`",
                    v.name
                )));
            }
            if let Some(f) = &v.fixed {
                v.spec().index_of(f)?;
            }
            if v.hidden && v.role == Role::Outcome {
                return Err(Error::InvalidScenario(format!(
                    "outcome `{}` cannot be hidden",
                    v.name
                )));
            }
            let in_learner = self.learner_initial.variables.contains(&v.name);
            if in_learner && (v.hidden || v.role == Role::Attribute) {
                return Err(Error::InvalidScenario(format!(
                    "`{}` is hidden or an attribute but part of the initial learner",
                    v.name
                )));
            }
        }
        for name in &self.learner_initial.variables {
            self.variable(name)?;
        }
        if self.truth_cpt.is_some() {
            self.subject_spec(0)?.validate()?;
        }
        let learner = self.learner_state()?;
        if let Some(r) = &self.reference {
            r.validate_for(&learner.model)?;
        }
        let d = &self.defaults;
        RefinementConfig {
            r_threshold: d.r_threshold,
            n_min: d.n_min,
            ..RefinementConfig::default()
        }
        .validate()?;
        if !(0.0..=1.0).contains(&d.threshold) {
            return Err(Error::InvalidScenario(
                "score threshold not in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn has_truth(&self) -> bool {
        self.truth_cpt.is_some()
    }

    fn specs(&self) -> Vec<VariableSpec> {
        self.variables.iter().map(ScenarioVariable::spec).collect()
    }

    /// The simulated subject. Missing truth rows are drawn from a flat
    /// Dirichlet keyed by `seed`.
    pub fn subject_spec(&self, seed: u64) -> Result<SubjectSpec> {
        let truth = match &self.truth_cpt {
            Some(t) => t.clone(),
            None => self.random_truth(seed)?,
        };
        let mut environment = self.environment.clone();
        for v in &self.variables {
            if let Some(f) = &v.fixed {
                let mut p = vec![0.0; v.domain.len()];
                p[v.spec().index_of(f)?] = 1.0;
                environment.insert(v.name.clone(), p);
            }
        }
        Ok(SubjectSpec {
            variables: self.specs(),
            parents: self.parents.clone(),
            truth,
            noise_rate: self.noise_rate,
            hidden_rules: self.hidden_rules.clone(),
            environment,
            seed,
        })
    }

    pub fn random_truth(&self, seed: u64) -> Result<IndexMap<String, Vec<Vec<f64>>>> {
        let mut rng = SeededStream::new(seed, Stream::Truth);
        let mut truth = IndexMap::new();
        for o in self.variables.iter().filter(|v| v.role == Role::Outcome) {
            let parents = self
                .parents
                .get(&o.name)
                .ok_or_else(|| Error::InvalidScenario(format!("no parents for `{}`", o.name)))?;
            let rows: usize = parents
                .iter()
                .map(|p| self.variable(p).map(|v| v.domain.len()))
                .product::<Result<usize>>()?;
            let table = (0..rows)
                .map(|_| {
                    let g: Vec<f64> = (0..o.domain.len())
                        .map(|_| -(1.0 - rng.unit()).ln())
                        .collect();
                    let z: f64 = g.iter().sum();
                    g.into_iter().map(|x| x / z).collect()
                })
                .collect();
            truth.insert(o.name.clone(), table);
        }
        Ok(truth)
    }

    /// The learner's starting belief.
    pub fn learner_state(&self) -> Result<LearnerState> {
        let nodes = self
            .learner_initial
            .variables
            .iter()
            .map(|n| self.variable(n).map(ScenarioVariable::spec))
            .collect::<Result<Vec<_>>>()?;
        let structure = NetworkStructure::new(nodes, self.learner_initial.parents.clone())?;
        let model = match &self.learner_initial.priors {
            Priors::Symmetric(a) => ModelState::with_prior(structure, *a)?,
            Priors::Rows(rows) => {
                let mut m = ModelState::with_prior(structure, DEFAULT_PRIOR)?;
                for (name, table) in rows {
                    let cpt = DirichletCpt::from_rows(name.clone(), table.clone())?;
                    let slot = m
                        .cpts
                        .get_mut(name)
                        .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
                    if cpt.len() != slot.len() || cpt.arity() != slot.arity() {
                        return Err(Error::InvalidScenario(format!(
                            "prior rows of `{name}` have wrong shape"
                        )));
                    }
                    *slot = cpt;
                }
                m
            }
        };
        model.validate()?;
        let mut learner = LearnerState::new(model)?;
        for (name, p) in learner.uncontrolled_dist.iter_mut() {
            let v = self.variable(name)?;
            if let Some(f) = &v.fixed {
                *p = vec![0.0; v.domain.len()];
                p[v.spec().index_of(f)?] = 1.0;
            }
        }
        Ok(learner)
    }

    /// Attribute variables visible to the learner.
    pub fn attribute_specs(&self) -> Vec<VariableSpec> {
        self.variables
            .iter()
            .filter(|v| v.role == Role::Attribute && !v.hidden)
            .map(ScenarioVariable::spec)
            .collect()
    }

    pub fn attribute_stats(&self, n_min: u64) -> AttributeStats {
        let outcomes = self
            .variables
            .iter()
            .filter(|v| v.role == Role::Outcome)
            .map(ScenarioVariable::spec)
            .collect();
        AttributeStats::new(self.attribute_specs(), outcomes, n_min)
    }

    pub fn refinement_config(&self) -> RefinementConfig {
        RefinementConfig {
            r_threshold: self.defaults.r_threshold,
            n_min: self.defaults.n_min,
            ..RefinementConfig::default()
        }
    }

    /// Fixed values of the learner's uncontrolled situation variables.
    pub fn fixed_values(&self) -> Instantiation {
        let mut inst = Instantiation::new();
        for v in &self.variables {
            if let Some(f) = &v.fixed {
                inst.bind(&v.name, f);
            }
        }
        inst
    }

    /// The same scenario with every attribute hidden, so nothing can be promoted.
    pub fn without_refinement(&self) -> Scenario {
        let mut s = self.clone();
        for v in &mut s.variables {
            if v.role == Role::Attribute {
                v.hidden = true;
            }
        }
        s
    }

    /// Every context instantiation of the learner's initial model.
    pub fn contexts(&self) -> Result<Vec<Instantiation>> {
        let learner = self.learner_state()?;
        let ctx: Vec<&VariableSpec> = learner.model.structure.context_vars().collect();
        enumerate_instantiations(&ctx)
    }
}
