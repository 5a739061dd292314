use serde::{Deserialize, Serialize};

use super::info::dirichlet_expected_kl_unchecked;
use crate::error::{Error, Result};

/// Dirichlet pseudo-counts for one outcome variable, one row per parent
/// instantiation (mixed-radix order over the declared parents).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCpt {
    pub outcome_var: String,
    pub rows: Vec<Vec<f64>>,
}

impl DirichletCpt {
    pub fn uniform(
        outcome_var: impl Into<String>,
        rows: usize,
        arity: usize,
        prior: f64,
    ) -> Result<Self> {
        Self::from_rows(outcome_var, vec![vec![prior; arity]; rows])
    }

    pub fn from_rows(outcome_var: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let cpt = DirichletCpt {
            outcome_var: outcome_var.into(),
            rows,
        };
        cpt.validate()?;
        Ok(cpt)
    }

    pub fn validate(&self) -> Result<()> {
        let arity = self.rows.first().map(Vec::len).unwrap_or(0);
        if self.rows.is_empty() || arity < 2 {
            return Err(Error::InvalidPseudoCounts(format!(
                "`{}` needs at least one row of two or more entries",
                self.outcome_var
            )));
        }
        for row in &self.rows {
            if row.len() != arity {
                return Err(Error::InvalidPseudoCounts(format!(
                    "`{}` has ragged rows",
                    self.outcome_var
                )));
            }
            if row.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return Err(Error::InvalidPseudoCounts(format!(
                    "`{}` has a non-positive or non-finite entry",
                    self.outcome_var
                )));
            }
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.rows[0].len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, situation: usize) -> Result<&[f64]> {
        self.rows
            .get(situation)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                index: situation,
                len: self.rows.len(),
            })
    }

    fn check(&self, situation: usize, outcome: usize) -> Result<()> {
        let arity = self.row(situation)?.len();
        if outcome >= arity {
            return Err(Error::IndexOutOfRange {
                index: outcome,
                len: arity,
            });
        }
        Ok(())
    }

    /// Conjugate update for one observation; `self` is left untouched.
    pub fn posterior_update(&self, situation: usize, outcome: usize) -> Result<DirichletCpt> {
        let mut next = self.clone();
        next.increment(situation, outcome)?;
        Ok(next)
    }

    pub(crate) fn increment(&mut self, situation: usize, outcome: usize) -> Result<()> {
        self.check(situation, outcome)?;
        self.rows[situation][outcome] += 1.0;
        Ok(())
    }

    /// Posterior mean `α / α₀` of a row.
    pub fn posterior_mean(&self, situation: usize) -> Result<Vec<f64>> {
        let row = self.row(situation)?;
        let total: f64 = row.iter().sum();
        Ok(row.iter().map(|a| a / total).collect())
    }

    /// Expected KL risk of the row's posterior-mean estimate.
    pub fn row_risk(&self, situation: usize) -> Result<f64> {
        Ok(dirichlet_expected_kl_unchecked(self.row(situation)?))
    }
}
