use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::cpt::DirichletCpt;
use super::instantiation::{mixed_radix_index, Instantiation};
use super::structure::NetworkStructure;
use super::variable::VariableSpec;
use crate::error::{Error, Result};

/// Default symmetric Dirichlet pseudo-count for fresh CPT rows.
pub const DEFAULT_PRIOR: f64 = 1.0;

/// A capability model: bipartite structure plus a Dirichlet belief per CPT row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct ModelState {
    pub structure: NetworkStructure,
    pub cpts: IndexMap<String, DirichletCpt>,
    /// Per outcome variable, a weight per CPT row summing to one.
    pub situation_weights: IndexMap<String, Vec<f64>>,
}

impl NetworkStructure {
    /// Row of `outcome`'s CPT selected by `situation` (which may bind extra variables).
    pub fn situation_index(&self, outcome: &str, situation: &Instantiation) -> Result<usize> {
        mixed_radix_index(&self.parents_of(outcome)?, situation)
    }
}

fn uniform_weights(rows: usize) -> Vec<f64> {
    vec![1.0 / rows as f64; rows]
}

impl ModelState {
    /// Fresh model with every row at a symmetric `prior` and uniform situation weights.
    pub fn with_prior(structure: NetworkStructure, prior: f64) -> Result<Self> {
        structure.validate()?;
        let mut cpts = IndexMap::new();
        let mut weights = IndexMap::new();
        for o in structure.outcome_vars() {
            let rows = structure.row_count(&o.name)?;
            cpts.insert(
                o.name.clone(),
                DirichletCpt::uniform(&o.name, rows, o.cardinality(), prior)?,
            );
            weights.insert(o.name.clone(), uniform_weights(rows));
        }
        Ok(ModelState {
            structure,
            cpts,
            situation_weights: weights,
        })
    }

    pub fn from_parts(
        structure: NetworkStructure,
        cpts: IndexMap<String, DirichletCpt>,
        situation_weights: IndexMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let m = ModelState {
            structure,
            cpts,
            situation_weights,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.structure.validate()?;
        let outcomes: Vec<&VariableSpec> = self.structure.outcome_vars().collect();
        if outcomes.len() != self.cpts.len() || outcomes.len() != self.situation_weights.len() {
            return Err(Error::InvalidStructure(
                "CPTs and weights must match the outcome variables one to one".into(),
            ));
        }
        for o in outcomes {
            let cpt = self.cpt(&o.name)?;
            cpt.validate()?;
            let rows = self.structure.row_count(&o.name)?;
            if cpt.len() != rows || cpt.arity() != o.cardinality() {
                return Err(Error::InvalidPseudoCounts(format!(
                    "`{}` expects {rows} rows of {} entries",
                    o.name,
                    o.cardinality()
                )));
            }
            let w = self.weights(&o.name)?;
            if w.len() != rows || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "situation weights of `{}` are malformed",
                    o.name
                )));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution(format!(
                    "situation weights of `{}` sum to {total}",
                    o.name
                )));
            }
        }
        Ok(())
    }

    pub fn cpt(&self, outcome: &str) -> Result<&DirichletCpt> {
        self.cpts
            .get(outcome)
            .ok_or_else(|| Error::UnknownVariable(outcome.to_string()))
    }

    pub(crate) fn cpt_mut(&mut self, outcome: &str) -> Result<&mut DirichletCpt> {
        self.cpts
            .get_mut(outcome)
            .ok_or_else(|| Error::UnknownVariable(outcome.to_string()))
    }

    pub fn weights(&self, outcome: &str) -> Result<&[f64]> {
        self.situation_weights
            .get(outcome)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownVariable(outcome.to_string()))
    }

    pub fn situation_index(&self, outcome: &str, situation: &Instantiation) -> Result<usize> {
        self.structure.situation_index(outcome, situation)
    }

    /// Learned conditional `P(outcome | situation)` (posterior mean).
    pub fn predictive(&self, outcome: &str, situation: &Instantiation) -> Result<Vec<f64>> {
        let idx = self.situation_index(outcome, situation)?;
        self.cpt(outcome)?.posterior_mean(idx)
    }

    /// Replaces `outcome`'s CPT by a fresh prior sized for the current structure.
    pub(crate) fn reset_outcome(&mut self, outcome: &str, prior: f64) -> Result<()> {
        let rows = self.structure.row_count(outcome)?;
        let arity = self.structure.node(outcome)?.cardinality();
        self.cpts.insert(
            outcome.to_string(),
            DirichletCpt::uniform(outcome, rows, arity, prior)?,
        );
        self.situation_weights
            .insert(outcome.to_string(), uniform_weights(rows));
        Ok(())
    }

    pub fn to_document(&self, rng_seed: Option<u64>) -> ModelDocument {
        ModelDocument {
            variables: self.structure.nodes.clone(),
            parents: self.structure.parents.clone(),
            cpt_rows: self
                .cpts
                .iter()
                .map(|(k, c)| (k.clone(), c.rows.clone()))
                .collect(),
            situation_weights: self.situation_weights.clone(),
            rng_seed,
        }
    }

    pub fn to_json(&self, rng_seed: Option<u64>) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document(rng_seed))?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(json)?;
        ModelState::try_from(doc)
    }
}

/// On-disk form of a [`ModelState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub variables: Vec<VariableSpec>,
    pub parents: IndexMap<String, Vec<String>>,
    pub cpt_rows: IndexMap<String, Vec<Vec<f64>>>,
    #[serde(default)]
    pub situation_weights: IndexMap<String, Vec<f64>>,
    #[serde(default)]
    pub rng_seed: Option<u64>,
}

impl TryFrom<ModelDocument> for ModelState {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let structure = NetworkStructure::new(doc.variables, doc.parents)?;
        let mut cpts = IndexMap::new();
        let mut weights = doc.situation_weights;
        for o in structure.outcome_vars() {
            let rows =
                doc.cpt_rows.get(&o.name).cloned().ok_or_else(|| {
                    Error::InvalidStructure(format!("missing CPT for `{}`", o.name))
                })?;
            let n = rows.len();
            cpts.insert(o.name.clone(), DirichletCpt::from_rows(&o.name, rows)?);
            if !weights.contains_key(&o.name) {
                weights.insert(o.name.clone(), uniform_weights(n));
            }
        }
        let ordered_weights = structure
            .outcome_vars()
            .map(|o| {
                (
                    o.name.clone(),
                    weights.swap_remove(&o.name).unwrap_or_default(),
                )
            })
            .collect();
        ModelState::from_parts(structure, cpts, ordered_weights)
    }
}

impl From<ModelState> for ModelDocument {
    fn from(m: ModelState) -> Self {
        m.to_document(None)
    }
}
