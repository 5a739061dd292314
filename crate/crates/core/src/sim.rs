//! Simulated subjects with a predefined ground truth, uniform outcome noise
//! and hidden attribute-gated behaviour, plus the distance between a learned
//! model and that truth.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::bn::{
    enumerate_instantiations, kl_unchecked, mixed_radix_index, validate_distribution,
    Instantiation, ModelState, Role, VariableSpec,
};
use crate::error::{Error, Result};
use crate::learn::{
    learn_model, ExperimentRequest, ExperimentResult, LearnConfig, LearnOutput, Subject,
};
use crate::rng::{SeededStream, Stream};
use crate::scenario::Scenario;

/// Overrides the outcome distribution whenever `guard` matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenRule {
    pub guard: Instantiation,
    pub outcome: String,
    pub distribution: Vec<f64>,
}

impl HiddenRule {
    fn matches(&self, binding: &Instantiation) -> bool {
        self.guard.iter().all(|(k, v)| binding.get(k) == Some(v))
    }

    fn compatible_with(&self, other: &HiddenRule) -> bool {
        self.outcome == other.outcome
            && self
                .guard
                .iter()
                .all(|(k, v)| other.guard.get(k).is_none_or(|w| w == v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    /// Every variable of the true model, whether or not the learner sees it.
    pub variables: Vec<VariableSpec>,
    /// Outcome -> true parent list.
    pub parents: IndexMap<String, Vec<String>>,
    /// Outcome -> probability rows in mixed-radix order over its parents.
    pub truth: IndexMap<String, Vec<Vec<f64>>>,
    pub noise_rate: f64,
    #[serde(default)]
    pub hidden_rules: Vec<HiddenRule>,
    /// How the environment assigns uncontrolled situation variables
    /// (uniform when absent).
    #[serde(default)]
    pub environment: IndexMap<String, Vec<f64>>,
    pub seed: u64,
}

impl SubjectSpec {
    pub fn variable(&self, name: &str) -> Result<&VariableSpec> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn outcome_vars(&self) -> impl Iterator<Item = &VariableSpec> {
        self.variables.iter().filter(|v| v.role == Role::Outcome)
    }

    fn parents_of(&self, outcome: &str) -> Result<Vec<&VariableSpec>> {
        self.parents
            .get(outcome)
            .ok_or_else(|| Error::UnknownVariable(outcome.to_string()))?
            .iter()
            .map(|p| self.variable(p))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.variables {
            v.validate()?;
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::InvalidScenario(format!(
                "noise_rate {} not in [0, 1]",
                self.noise_rate
            )));
        }
        for o in self.outcome_vars() {
            let parents = self.parents_of(&o.name)?;
            let rows = self
                .truth
                .get(&o.name)
                .ok_or_else(|| Error::InvalidScenario(format!("no truth rows for `{}`", o.name)))?;
            let expected: usize = parents.iter().map(|p| p.cardinality()).product();
            if rows.len() != expected {
                return Err(Error::InvalidScenario(format!(
                    "`{}` needs {expected} truth rows, got {}",
                    o.name,
                    rows.len()
                )));
            }
            for row in rows {
                if row.len() != o.cardinality() {
                    return Err(Error::InvalidScenario(format!(
                        "truth row of `{}` has wrong length",
                        o.name
                    )));
                }
                validate_distribution(row)?;
            }
        }
        for (i, rule) in self.hidden_rules.iter().enumerate() {
            let o = self.variable(&rule.outcome)?;
            if o.role != Role::Outcome {
                return Err(Error::InvalidScenario(format!(
                    "rule targets non-outcome `{}`",
                    rule.outcome
                )));
            }
            rule.guard.validate(&self.variables)?;
            if rule.distribution.len() != o.cardinality() {
                return Err(Error::InvalidScenario(
                    "rule distribution has wrong length".into(),
                ));
            }
            validate_distribution(&rule.distribution)?;
            for other in &self.hidden_rules[i + 1..] {
                if rule.compatible_with(other) {
                    return Err(Error::InvalidScenario(format!(
                        "hidden rules `{}` and `{}` are not mutually exclusive",
                        rule.guard, other.guard
                    )));
                }
            }
        }
        for (name, p) in &self.environment {
            if p.len() != self.variable(name)?.cardinality() {
                return Err(Error::InvalidScenario(format!(
                    "environment distribution of `{name}` has wrong length"
                )));
            }
            validate_distribution(p)?;
        }
        Ok(())
    }

    fn rule_for(&self, outcome: &str, binding: &Instantiation) -> Result<Option<&HiddenRule>> {
        for rule in self.hidden_rules.iter().filter(|r| r.outcome == outcome) {
            for (k, _) in rule.guard.iter() {
                binding.require(k)?;
            }
            if rule.matches(binding) {
                return Ok(Some(rule));
            }
        }
        Ok(None)
    }

    /// The distribution outcomes are actually drawn from: a matching hidden
    /// rule's override, otherwise the truth row mixed with uniform noise.
    pub fn effective_distribution(
        &self,
        outcome: &str,
        binding: &Instantiation,
    ) -> Result<Vec<f64>> {
        if let Some(rule) = self.rule_for(outcome, binding)? {
            return Ok(rule.distribution.clone());
        }
        let o = self.variable(outcome)?;
        let row = &self.truth[outcome][mixed_radix_index(&self.parents_of(outcome)?, binding)?];
        let k = o.cardinality() as f64;
        Ok(row
            .iter()
            .map(|p| (1.0 - self.noise_rate) * p + self.noise_rate / k)
            .collect())
    }

    /// Variables the truth of `outcome` depends on, in declaration order.
    fn relevant_vars(&self, outcome: &str) -> Result<Vec<String>> {
        let mut names: Vec<String> = self.parents[outcome].clone();
        for r in self.hidden_rules.iter().filter(|r| r.outcome == outcome) {
            names.extend(r.guard.names().map(str::to_string));
        }
        Ok(self
            .variables
            .iter()
            .filter(|v| names.contains(&v.name))
            .map(|v| v.name.clone())
            .collect())
    }
}

fn categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Draws an outcome for every outcome variable.
///
/// Exactly two uniforms are consumed per outcome variable whatever branch is
/// taken, so runs that visit the same situations share their noise.
pub fn sample_outcome(
    spec: &SubjectSpec,
    situation: &Instantiation,
    attributes: &Instantiation,
    rng: &mut SeededStream,
) -> Result<Instantiation> {
    let binding = situation.merged(attributes);
    let mut out = Instantiation::new();
    for o in spec.outcome_vars() {
        let noise_draw = rng.unit();
        let value_draw = rng.unit();
        let idx = if let Some(rule) = spec.rule_for(&o.name, &binding)? {
            categorical(&rule.distribution, value_draw)
        } else {
            let row_idx = mixed_radix_index(&spec.parents_of(&o.name)?, &binding)?;
            if noise_draw < spec.noise_rate {
                ((value_draw * o.cardinality() as f64) as usize).min(o.cardinality() - 1)
            } else {
                categorical(&spec.truth[&o.name][row_idx], value_draw)
            }
        };
        out.bind(&o.name, &o.domain[idx]);
    }
    Ok(out)
}

/// Uniform average over true situations of `KL(truth || learned)`, summed
/// over outcome variables. Learned rows that ignore a true variable are
/// compared against every true row they aggregate.
pub fn eval_kl(learned: &ModelState, spec: &SubjectSpec) -> Result<f64> {
    let mut total = 0.0;
    for o in spec.outcome_vars() {
        let learned_parents = learned
            .structure
            .parents
            .get(&o.name)
            .ok_or_else(|| Error::UnknownVariable(o.name.clone()))?;
        for p in learned_parents {
            let truth_var = spec.variable(p)?;
            if truth_var.domain != learned.structure.node(p)?.domain {
                return Err(Error::InvalidStructure(format!(
                    "domain of `{p}` differs from truth"
                )));
            }
        }
        let mut names = spec.relevant_vars(&o.name)?;
        names.extend(learned_parents.iter().cloned());
        let vars: Vec<&VariableSpec> = spec
            .variables
            .iter()
            .filter(|v| names.contains(&v.name))
            .collect();
        let situations = enumerate_instantiations(&vars)?;
        let cpt = learned.cpt(&o.name)?;
        let mut acc = 0.0;
        for s in &situations {
            let p = spec.effective_distribution(&o.name, s)?;
            let q = cpt.posterior_mean(learned.situation_index(&o.name, s)?)?;
            acc += kl_unchecked(&p, &q);
        }
        total += acc / situations.len() as f64;
    }
    Ok(total)
}

/// A subject that follows a [`SubjectSpec`].
#[derive(Debug, Clone)]
pub struct SimSubject {
    pub spec: SubjectSpec,
    outcome_rng: SeededStream,
    environment_rng: SeededStream,
}

impl SimSubject {
    pub fn new(spec: SubjectSpec) -> Result<Self> {
        spec.validate()?;
        Ok(SimSubject {
            outcome_rng: SeededStream::new(spec.seed, Stream::Outcomes),
            environment_rng: SeededStream::new(spec.seed, Stream::Environment),
            spec,
        })
    }

    fn draw_environment(&mut self, name: &str) -> Result<String> {
        let v = self.spec.variable(name)?;
        let u = self.environment_rng.unit();
        let idx = match self.spec.environment.get(name) {
            Some(p) => categorical(p, u),
            None => ((u * v.cardinality() as f64) as usize).min(v.cardinality() - 1),
        };
        Ok(v.domain[idx].clone())
    }
}

impl Subject for SimSubject {
    fn experiment(&mut self, request: &ExperimentRequest) -> Result<ExperimentResult> {
        let mut situation = request.query.clone();
        for v in &request.environment {
            let value = self.draw_environment(&v.name)?;
            situation.bind(&v.name, value);
        }
        // Variables nobody assigned are hidden from the learner; the
        // environment picks them without reporting them.
        let mut binding = situation.merged(&request.attributes);
        let hidden: Vec<String> = self
            .spec
            .variables
            .iter()
            .filter(|v| v.role != Role::Outcome && !binding.contains(&v.name))
            .map(|v| v.name.clone())
            .collect();
        for name in hidden {
            let value = self.draw_environment(&name)?;
            binding.bind(&name, value);
        }
        let outcome = sample_outcome(
            &self.spec,
            &binding,
            &Instantiation::new(),
            &mut self.outcome_rng,
        )?;
        Ok(ExperimentResult { situation, outcome })
    }

    fn kl_to_truth(&self, model: &ModelState) -> Option<f64> {
        eval_kl(model, &self.spec).ok()
    }
}

/// One simulated learning run with its distance-to-truth series.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub output: LearnOutput,
    /// Distance before the first experiment followed by one value per experiment.
    pub kl: Vec<f64>,
    /// Model error on the same schedule.
    pub model_error: Vec<f64>,
}

/// Runs `config.max_iter` experiments of `scenario` against its simulated subject.
pub fn run_trial(scenario: &Scenario, config: &LearnConfig) -> Result<Trial> {
    let mut subject = SimSubject::new(scenario.subject_spec(config.seed)?)?;
    let learner = scenario.learner_state()?;
    let initial_error = learner.model_error();
    let output = learn_model(
        &mut subject,
        learner,
        scenario.attribute_stats(config.refinement.n_min),
        config,
    )?;
    if let Some(e) = &output.error {
        return Err(Error::Subject(e.error.clone()));
    }
    let kl = std::iter::once(output.initial_kl)
        .chain(output.trace.iter().map(|t| t.kl_to_truth))
        .map(|k| {
            k.ok_or_else(|| Error::InvalidScenario("learned model not comparable to truth".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let model_error = std::iter::once(initial_error)
        .chain(output.trace.iter().map(|t| t.model_error))
        .collect();
    Ok(Trial {
        output,
        kl,
        model_error,
    })
}
