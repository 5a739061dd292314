//! Active selection of experiments by minimizing expected posterior error.
//!
//! The learner's uncertainty is the situation-weighted sum of per-row
//! Dirichlet risks (`ModelError`). For a candidate query the expected
//! posterior error is computed in closed form: each reachable row contributes
//! the Dirichlet-predictive average of its risk after one more observation.

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bn::{
    dirichlet_expected_kl_unchecked, enumerate_instantiations, instantiation_at, joint_cardinality,
    Instantiation, ModelState, VariableSpec,
};
use crate::error::{Error, Result};

/// Two EPE values closer than this are treated as a tie.
pub const EPE_TIE_TOLERANCE: f64 = 1e-12;

/// One completed experiment as seen by the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub situation: Instantiation,
    pub outcome: Instantiation,
    #[serde(default)]
    pub attributes: Instantiation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub model: ModelState,
    /// Controllable situation variables, in enumeration order.
    pub query_vars: Vec<String>,
    /// Learner's estimate of how the environment assigns each uncontrolled
    /// situation variable.
    pub uncontrolled_dist: IndexMap<String, Vec<f64>>,
    #[serde(default)]
    pub history: Vec<ObservationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEvaluation {
    pub query: Instantiation,
    pub epe: f64,
    /// Expected model error after observing `outcome=value` (other outcome
    /// variables averaged), keyed `outcome=value`.
    pub posterior_risk_by_outcome: IndexMap<String, f64>,
}

impl LearnerState {
    /// Learner controlling every controllable situation variable of `model`.
    pub fn new(model: ModelState) -> Result<Self> {
        let q = model
            .structure
            .situation_vars()
            .filter(|v| v.controllable)
            .map(|v| v.name.clone())
            .collect();
        Self::with_query_vars(model, q)
    }

    pub fn with_query_vars(model: ModelState, query_vars: Vec<String>) -> Result<Self> {
        let uncontrolled = model
            .structure
            .situation_vars()
            .filter(|v| !query_vars.contains(&v.name))
            .map(|v| {
                (
                    v.name.clone(),
                    vec![1.0 / v.cardinality() as f64; v.cardinality()],
                )
            })
            .collect();
        let s = LearnerState {
            model,
            query_vars,
            uncontrolled_dist: uncontrolled,
            history: Vec::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let structure = &self.model.structure;
        for q in &self.query_vars {
            let v = structure.node(q)?;
            if !v.role.is_situation() {
                return Err(Error::InvalidConfig(format!(
                    "query variable `{q}` is not a situation variable"
                )));
            }
        }
        for c in structure.command_vars() {
            if !self.query_vars.contains(&c.name) {
                return Err(Error::InvalidConfig(format!(
                    "command `{}` must be a query variable",
                    c.name
                )));
            }
        }
        let expected: Vec<&VariableSpec> = structure
            .situation_vars()
            .filter(|v| !self.query_vars.contains(&v.name))
            .collect();
        if expected.len() != self.uncontrolled_dist.len() {
            return Err(Error::InvalidConfig(
                "uncontrolled distribution must cover exactly the uncontrolled situation variables"
                    .into(),
            ));
        }
        for v in expected {
            let p = self
                .uncontrolled_dist
                .get(&v.name)
                .ok_or_else(|| Error::MissingBinding(v.name.clone()))?;
            if p.len() != v.cardinality() {
                return Err(Error::InvalidDistribution(format!(
                    "environment distribution of `{}` has wrong length",
                    v.name
                )));
            }
            crate::bn::validate_distribution(p)?;
        }
        Ok(())
    }

    pub fn query_specs(&self) -> Result<Vec<&VariableSpec>> {
        self.query_vars
            .iter()
            .map(|q| self.model.structure.node(q))
            .collect()
    }

    pub fn uncontrolled_specs(&self) -> Vec<&VariableSpec> {
        self.model
            .structure
            .situation_vars()
            .filter(|v| !self.query_vars.contains(&v.name))
            .collect()
    }

    pub fn query_space(&self) -> Result<Vec<Instantiation>> {
        enumerate_instantiations(&self.query_specs()?)
    }

    /// Situation-weighted sum of per-row Dirichlet risks over all outcome variables.
    pub fn model_error(&self) -> f64 {
        model_error(&self.model)
    }

    fn check_query(&self, query: &Instantiation) -> Result<()> {
        for (name, value) in query.iter() {
            if !self.query_vars.iter().any(|q| q == name) {
                return Err(Error::NotQueryVariable(name.to_string()));
            }
            self.model.structure.node(name)?.index_of(value)?;
        }
        for q in &self.query_vars {
            query.require(q)?;
        }
        Ok(())
    }

    /// Rows of `outcome` reachable from `query`, with their probability under
    /// the uncontrolled-variable distribution.
    fn reachable_rows(&self, outcome: &str, query: &Instantiation) -> Result<Vec<(usize, f64)>> {
        let parents = self.model.structure.parents_of(outcome)?;
        let free: Vec<&VariableSpec> = parents
            .iter()
            .copied()
            .filter(|p| !query.contains(&p.name))
            .collect();
        let mut rows = Vec::with_capacity(joint_cardinality(&free));
        for i in 0..joint_cardinality(&free) {
            let completion = instantiation_at(&free, i)?;
            let mut prob = 1.0;
            for (name, value) in completion.iter() {
                let spec = self.model.structure.node(name)?;
                let dist = self
                    .uncontrolled_dist
                    .get(name)
                    .ok_or_else(|| Error::MissingBinding(name.to_string()))?;
                prob *= dist[spec.index_of(value)?];
            }
            if prob > 0.0 {
                let situation = query.merged(&completion);
                rows.push((self.model.situation_index(outcome, &situation)?, prob));
            }
        }
        Ok(rows)
    }

    /// Expected model error after running `query` once.
    pub fn expected_posterior_error(&self, query: &Instantiation) -> Result<QueryEvaluation> {
        self.check_query(query)?;
        let current = self.model_error();

        struct OutcomeTerms {
            expected: f64,
            by_value: Vec<(f64, f64)>,
        }
        let mut per_outcome = Vec::new();
        for o in self.model.structure.outcome_vars() {
            let cpt = self.model.cpt(&o.name)?;
            let weights = self.model.weights(&o.name)?;
            let arity = o.cardinality();
            // Per outcome value: predictive mass and mass-weighted risk reduction.
            let mut by_value = vec![(0.0, 0.0); arity];
            let mut expected = 0.0;
            for (row, reach) in self.reachable_rows(&o.name, query)? {
                let alpha = cpt.row(row)?;
                let total: f64 = alpha.iter().sum();
                let before = dirichlet_expected_kl_unchecked(alpha);
                let mut bumped = alpha.to_vec();
                for j in 0..arity {
                    let pred = alpha[j] / total;
                    bumped[j] += 1.0;
                    let after = dirichlet_expected_kl_unchecked(&bumped);
                    bumped[j] -= 1.0;
                    let reduction = weights[row] * (before - after);
                    expected += reach * pred * reduction;
                    by_value[j].0 += reach * pred;
                    by_value[j].1 += reach * pred * reduction;
                }
            }
            per_outcome.push((o, OutcomeTerms { expected, by_value }));
        }

        let total_reduction: f64 = per_outcome.iter().map(|(_, t)| t.expected).sum();
        let epe = current - total_reduction;
        let mut risks = IndexMap::new();
        for (o, terms) in &per_outcome {
            for (j, (mass, weighted)) in terms.by_value.iter().enumerate() {
                let conditional = if *mass > 0.0 { weighted / mass } else { 0.0 };
                risks.insert(
                    format!("{}={}", o.name, o.domain[j]),
                    epe + terms.expected - conditional,
                );
            }
        }
        Ok(QueryEvaluation {
            query: query.clone(),
            epe,
            posterior_risk_by_outcome: risks,
        })
    }

    /// Query with the lowest expected posterior error; the first in
    /// enumeration order wins ties.
    pub fn best_query(&self) -> Result<QueryEvaluation> {
        let mut best: Option<QueryEvaluation> = None;
        for q in self.query_space()? {
            let eval = self.expected_posterior_error(&q)?;
            match &best {
                Some(b) if eval.epe >= b.epe - EPE_TIE_TOLERANCE => {}
                _ => best = Some(eval),
            }
        }
        best.ok_or_else(|| Error::InvalidConfig("empty query space".into()))
    }

    /// Uniform draw over the query space (the passive baseline).
    pub fn passive_query<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Instantiation> {
        let specs = self.query_specs()?;
        let n = joint_cardinality(&specs);
        instantiation_at(&specs, rng.random_range(0..n))
    }

    /// Pure update: returns the state after observing `outcome` in `situation`.
    pub fn record_observation(
        &self,
        situation: &Instantiation,
        outcome: &Instantiation,
        attributes: &Instantiation,
    ) -> Result<LearnerState> {
        let mut next = self.clone();
        next.observe(situation, outcome, attributes)?;
        Ok(next)
    }

    /// In-place form of [`record_observation`](Self::record_observation).
    pub fn observe(
        &mut self,
        situation: &Instantiation,
        outcome: &Instantiation,
        attributes: &Instantiation,
    ) -> Result<()> {
        let structure = &self.model.structure;
        let mut sit = Instantiation::new();
        for v in structure.situation_vars() {
            let value = situation.require(&v.name)?;
            v.index_of(value)?;
            sit.bind(&v.name, value);
        }
        let mut out = Instantiation::new();
        let mut updates = Vec::new();
        for o in structure.outcome_vars() {
            let value = outcome.require(&o.name)?;
            let j = o.index_of(value)?;
            out.bind(&o.name, value);
            updates.push((o.name.clone(), structure.situation_index(&o.name, &sit)?, j));
        }
        for (name, row, j) in updates {
            self.model.cpt_mut(&name)?.increment(row, j)?;
        }
        self.history.push(ObservationRecord {
            situation: sit,
            outcome: out,
            attributes: attributes.clone(),
        });
        self.refresh_uncontrolled_dist();
        Ok(())
    }

    /// Empirical frequencies of uncontrolled variables over the history;
    /// uniform until a variable has been seen.
    pub(crate) fn refresh_uncontrolled_dist(&mut self) {
        let names: Vec<String> = self.uncontrolled_dist.keys().cloned().collect();
        for name in names {
            let Ok(spec) = self.model.structure.node(&name) else {
                continue;
            };
            let mut counts = vec![0u64; spec.cardinality()];
            for rec in &self.history {
                if let Some(idx) = rec.situation.get(&name).and_then(|v| spec.index_of(v).ok()) {
                    counts[idx] += 1;
                }
            }
            let n: u64 = counts.iter().sum();
            let dist = if n == 0 {
                vec![1.0 / spec.cardinality() as f64; spec.cardinality()]
            } else {
                counts.iter().map(|&c| c as f64 / n as f64).collect()
            };
            self.uncontrolled_dist.insert(name, dist);
        }
    }
}

pub fn model_error(model: &ModelState) -> f64 {
    model
        .cpts
        .iter()
        .map(|(name, cpt)| {
            let w = &model.situation_weights[name];
            cpt.rows
                .iter()
                .zip(w)
                .map(|(row, wi)| wi * dirichlet_expected_kl_unchecked(row))
                .sum::<f64>()
        })
        .sum()
}
