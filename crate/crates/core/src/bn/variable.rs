use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What part a variable plays in a capability model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Extrinsic factor of the situation (turf, ball size, object type).
    Context,
    /// What the subject is told to do. Always controllable.
    Command,
    /// Observed result of an experiment.
    Outcome,
    /// Candidate factor tracked outside the network until promoted.
    Attribute,
}

impl Role {
    pub fn is_situation(self) -> bool {
        matches!(self, Role::Context | Role::Command)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Context => "context",
            Role::Command => "command",
            Role::Outcome => "outcome",
            Role::Attribute => "attribute",
        };
        f.write_str(s)
    }
}

/// A named categorical variable with a fixed, ordered domain.
///
/// Domain order is part of the model: CPT rows and columns are indexed by
/// position in `domain`, so it must never be reordered once a model exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub domain: Vec<String>,
    pub role: Role,
    #[serde(default)]
    pub controllable: bool,
}

impl VariableSpec {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        domain: impl IntoIterator<Item = S>,
        role: Role,
        controllable: bool,
    ) -> Result<Self> {
        let spec = VariableSpec {
            name: name.into(),
            domain: domain.into_iter().map(Into::into).collect(),
            role,
            controllable: controllable || role == Role::Command,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn context<S: Into<String>>(
        name: impl Into<String>,
        domain: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        Self::new(name, domain, Role::Context, true)
    }

    pub fn command<S: Into<String>>(
        name: impl Into<String>,
        domain: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        Self::new(name, domain, Role::Command, true)
    }

    pub fn outcome<S: Into<String>>(
        name: impl Into<String>,
        domain: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        Self::new(name, domain, Role::Outcome, false)
    }

    pub fn attribute<S: Into<String>>(
        name: impl Into<String>,
        domain: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        Self::new(name, domain, Role::Attribute, false)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidVariable {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.trim().is_empty() {
            return Err(invalid("empty name"));
        }
        if self.domain.len() < 2 {
            return Err(invalid("domain needs at least two values"));
        }
        let mut seen = HashSet::with_capacity(self.domain.len());
        for v in &self.domain {
            if v.is_empty() {
                return Err(invalid("empty domain value"));
            }
            if !seen.insert(v.as_str()) {
                return Err(invalid(&format!("duplicate domain value `{v}`")));
            }
        }
        if self.role == Role::Command && !self.controllable {
            return Err(invalid("command variables must be controllable"));
        }
        Ok(())
    }

    pub fn cardinality(&self) -> usize {
        self.domain.len()
    }

    pub fn index_of(&self, value: &str) -> Result<usize> {
        self.domain
            .iter()
            .position(|v| v == value)
            .ok_or_else(|| Error::ValueOutOfDomain {
                variable: self.name.clone(),
                value: value.to_string(),
            })
    }

    pub fn with_role(mut self, role: Role, controllable: bool) -> Self {
        self.role = role;
        self.controllable = controllable || role == Role::Command;
        self
    }
}
