use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::instantiation::joint_cardinality;
use super::variable::{Role, VariableSpec};
use crate::error::{Error, Result};

/// Bipartite network: edges run from situation variables (context and
/// command) to outcome variables only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStructure {
    pub nodes: Vec<VariableSpec>,
    /// Outcome variable -> ordered parent list.
    pub parents: IndexMap<String, Vec<String>>,
}

impl NetworkStructure {
    pub fn new(nodes: Vec<VariableSpec>, parents: IndexMap<String, Vec<String>>) -> Result<Self> {
        let s = NetworkStructure { nodes, parents };
        s.validate()?;
        Ok(s)
    }

    /// Every outcome gets every situation variable as a parent, in node order.
    pub fn fully_connected(nodes: Vec<VariableSpec>) -> Result<Self> {
        let situation: Vec<String> = nodes
            .iter()
            .filter(|v| v.role.is_situation())
            .map(|v| v.name.clone())
            .collect();
        let parents = nodes
            .iter()
            .filter(|v| v.role == Role::Outcome)
            .map(|v| (v.name.clone(), situation.clone()))
            .collect();
        Self::new(nodes, parents)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for v in &self.nodes {
            v.validate()?;
            if v.role == Role::Attribute {
                return Err(Error::InvalidStructure(format!(
                    "attribute `{}` cannot be a network node",
                    v.name
                )));
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::InvalidStructure(format!(
                    "duplicate node `{}`",
                    v.name
                )));
            }
        }
        let outcomes: Vec<&VariableSpec> = self.outcome_vars().collect();
        if outcomes.is_empty() {
            return Err(Error::InvalidStructure("no outcome variables".into()));
        }
        for o in &outcomes {
            if !self.parents.contains_key(&o.name) {
                return Err(Error::InvalidStructure(format!(
                    "outcome `{}` has no parent list",
                    o.name
                )));
            }
        }
        let mut used = HashSet::new();
        for (child, parents) in &self.parents {
            let c = self.node(child)?;
            if c.role != Role::Outcome {
                return Err(Error::InvalidStructure(format!(
                    "edge into non-outcome `{child}`"
                )));
            }
            let mut seen = HashSet::new();
            for p in parents {
                let pv = self.node(p)?;
                if !pv.role.is_situation() {
                    return Err(Error::InvalidStructure(format!(
                        "parent `{p}` of `{child}` is not a situation variable"
                    )));
                }
                if !seen.insert(p.as_str()) {
                    return Err(Error::InvalidStructure(format!(
                        "duplicate parent `{p}` of `{child}`"
                    )));
                }
                used.insert(p.as_str());
            }
        }
        for v in self.situation_vars() {
            if !used.contains(v.name.as_str()) {
                return Err(Error::InvalidStructure(format!(
                    "situation variable `{}` is not a parent of any outcome",
                    v.name
                )));
            }
        }
        Ok(())
    }

    pub fn node(&self, name: &str) -> Result<&VariableSpec> {
        self.nodes
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.nodes.iter().any(|v| v.name == name)
    }

    pub fn situation_vars(&self) -> impl Iterator<Item = &VariableSpec> {
        self.nodes.iter().filter(|v| v.role.is_situation())
    }

    pub fn context_vars(&self) -> impl Iterator<Item = &VariableSpec> {
        self.nodes.iter().filter(|v| v.role == Role::Context)
    }

    pub fn command_vars(&self) -> impl Iterator<Item = &VariableSpec> {
        self.nodes.iter().filter(|v| v.role == Role::Command)
    }

    pub fn outcome_vars(&self) -> impl Iterator<Item = &VariableSpec> {
        self.nodes.iter().filter(|v| v.role == Role::Outcome)
    }

    pub fn parents_of(&self, outcome: &str) -> Result<Vec<&VariableSpec>> {
        let names = self
            .parents
            .get(outcome)
            .ok_or_else(|| Error::UnknownVariable(outcome.to_string()))?;
        names.iter().map(|n| self.node(n)).collect()
    }

    pub fn row_count(&self, outcome: &str) -> Result<usize> {
        Ok(joint_cardinality(&self.parents_of(outcome)?))
    }
}
