use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::variable::VariableSpec;
use crate::error::{Error, Result};

/// An assignment of values to a set of variables.
///
/// Bindings keep insertion order for display, but equality is by content.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Instantiation(IndexMap<String, String>);

impl Instantiation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<K: Into<String>, V: Into<String>>(
        pairs: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        Instantiation(
            pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        )
    }

    pub fn bind(&mut self, var: impl Into<String>, value: impl Into<String>) {
        self.0.insert(var.into(), value.into());
    }

    pub fn with(mut self, var: impl Into<String>, value: impl Into<String>) -> Self {
        self.bind(var, value);
        self
    }

    pub fn get(&self, var: &str) -> Option<&str> {
        self.0.get(var).map(String::as_str)
    }

    pub fn require(&self, var: &str) -> Result<&str> {
        self.get(var)
            .ok_or_else(|| Error::MissingBinding(var.to_string()))
    }

    pub fn contains(&self, var: &str) -> bool {
        self.0.contains_key(var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Bindings of `other` are added; existing bindings are overwritten.
    pub fn merged(&self, other: &Instantiation) -> Instantiation {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.bind(k, v);
        }
        out
    }

    /// Restriction to `vars`, in the order given. Missing variables are an error.
    pub fn project<'a>(&self, vars: impl IntoIterator<Item = &'a str>) -> Result<Instantiation> {
        let mut out = Instantiation::new();
        for v in vars {
            out.bind(v, self.require(v)?);
        }
        Ok(out)
    }

    /// Checks that every bound value belongs to its variable's domain.
    pub fn validate(&self, vars: &[VariableSpec]) -> Result<()> {
        for (name, value) in self.iter() {
            let spec = vars
                .iter()
                .find(|v| v.name == name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
            spec.index_of(value)?;
        }
        Ok(())
    }

    /// Canonical `Name=value` string in the order of `vars`.
    pub fn key_for(&self, vars: &[&VariableSpec]) -> Result<String> {
        let mut parts = Vec::with_capacity(vars.len());
        for v in vars {
            parts.push(format!("{}={}", v.name, self.require(&v.name)?));
        }
        Ok(parts.join(";"))
    }
}

impl fmt::Display for Instantiation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in self.iter() {
            if !first {
                f.write_str(";")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Number of joint instantiations of `vars`.
pub fn joint_cardinality(vars: &[&VariableSpec]) -> usize {
    vars.iter().map(|v| v.cardinality()).product()
}

/// Mixed-radix index of the binding of `vars` in `inst` (last variable fastest).
pub fn mixed_radix_index(vars: &[&VariableSpec], inst: &Instantiation) -> Result<usize> {
    let mut idx = 0usize;
    for v in vars {
        let value = inst.require(&v.name)?;
        idx = idx * v.cardinality() + v.index_of(value)?;
    }
    Ok(idx)
}

/// Value indices for mixed-radix `index` over `vars`.
pub fn mixed_radix_digits(vars: &[&VariableSpec], mut index: usize) -> Result<Vec<usize>> {
    let len = joint_cardinality(vars);
    if index >= len {
        return Err(Error::IndexOutOfRange { index, len });
    }
    let mut digits = vec![0; vars.len()];
    for (slot, v) in digits.iter_mut().zip(vars.iter()).rev() {
        *slot = index % v.cardinality();
        index /= v.cardinality();
    }
    Ok(digits)
}

pub fn instantiation_at(vars: &[&VariableSpec], index: usize) -> Result<Instantiation> {
    let digits = mixed_radix_digits(vars, index)?;
    Ok(Instantiation::from_pairs(
        vars.iter()
            .zip(digits)
            .map(|(v, d)| (v.name.clone(), v.domain[d].clone())),
    ))
}

/// Every joint instantiation of `vars` in mixed-radix order, last variable fastest.
pub fn enumerate_instantiations(vars: &[&VariableSpec]) -> Result<Vec<Instantiation>> {
    for v in vars {
        if v.domain.is_empty() {
            return Err(Error::InvalidVariable {
                name: v.name.clone(),
                reason: "empty domain".into(),
            });
        }
    }
    (0..joint_cardinality(vars))
        .map(|i| instantiation_at(vars, i))
        .collect()
}
