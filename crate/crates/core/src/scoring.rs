//! Reference behaviour, per-context mismatch and capability scores.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bn::{
    enumerate_instantiations, kl_divergence, validate_distribution, Instantiation, ModelState,
    VariableSpec,
};
use crate::error::{Error, Result};

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.5;

/// Expected behaviour of one outcome variable given the command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceRule {
    /// The outcome takes the value of the named command variable.
    MatchCommand { outcome: String, command: String },
    /// The outcome always takes `value`.
    Constant { outcome: String, value: String },
    /// Explicit distributions keyed by command instantiation (`A=x;B=y`).
    Table {
        outcome: String,
        rows: IndexMap<String, Vec<f64>>,
    },
}

impl ReferenceRule {
    pub fn outcome(&self) -> &str {
        match self {
            ReferenceRule::MatchCommand { outcome, .. }
            | ReferenceRule::Constant { outcome, .. }
            | ReferenceRule::Table { outcome, .. } => outcome,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferenceSpec {
    pub rules: Vec<ReferenceRule>,
}

impl ReferenceSpec {
    pub fn new(rules: Vec<ReferenceRule>) -> Self {
        ReferenceSpec { rules }
    }

    fn rule(&self, outcome: &str) -> Result<&ReferenceRule> {
        self.rules
            .iter()
            .find(|r| r.outcome() == outcome)
            .ok_or_else(|| Error::InvalidConfig(format!("reference does not cover `{outcome}`")))
    }

    /// Reference distribution over `outcome`'s domain for one command instantiation.
    pub fn distribution(
        &self,
        outcome: &VariableSpec,
        command: &Instantiation,
    ) -> Result<Vec<f64>> {
        let point = |value: &str| -> Result<Vec<f64>> {
            let j = outcome.index_of(value)?;
            let mut p = vec![0.0; outcome.cardinality()];
            p[j] = 1.0;
            Ok(p)
        };
        match self.rule(&outcome.name)? {
            ReferenceRule::MatchCommand { command: c, .. } => point(command.require(c)?),
            ReferenceRule::Constant { value, .. } => point(value),
            ReferenceRule::Table { rows, .. } => {
                let key = command.to_string();
                let p = rows
                    .get(&key)
                    .ok_or_else(|| Error::MissingBinding(format!("reference row `{key}`")))?;
                if p.len() != outcome.cardinality() {
                    return Err(Error::InvalidDistribution(format!(
                        "reference row `{key}` has wrong length"
                    )));
                }
                validate_distribution(p)?;
                Ok(p.clone())
            }
        }
    }

    /// Checks the reference covers every outcome and command of `model`.
    pub fn validate_for(&self, model: &ModelState) -> Result<()> {
        let commands: Vec<&VariableSpec> = model.structure.command_vars().collect();
        let space = enumerate_instantiations(&commands)?;
        for o in model.structure.outcome_vars() {
            for c in &space {
                self.distribution(o, c)?;
            }
        }
        Ok(())
    }
}

/// Command-averaged divergence of the learned behaviour from the reference
/// in one context. Infinite when the model gives zero mass to an expected outcome.
pub fn mismatch(
    model: &ModelState,
    reference: &ReferenceSpec,
    context: &Instantiation,
) -> Result<f64> {
    let structure = &model.structure;
    for c in structure.context_vars() {
        c.index_of(context.require(&c.name)?)?;
    }
    let commands: Vec<&VariableSpec> = structure.command_vars().collect();
    let space = enumerate_instantiations(&commands)?;
    let mut total = 0.0;
    for command in &space {
        let situation = context.merged(command);
        for o in structure.outcome_vars() {
            let p = reference.distribution(o, command)?;
            let q = model.predictive(&o.name, &situation)?;
            total += kl_divergence(&p, &q)?;
        }
    }
    Ok(total / space.len() as f64)
}

/// `1 / (1 + mismatch)`, zero for infinite mismatch.
pub fn score_from_mismatch(m: f64) -> f64 {
    if m.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + m)
    }
}

pub fn score(
    model: &ModelState,
    reference: &ReferenceSpec,
    context: &Instantiation,
) -> Result<f64> {
    Ok(score_from_mismatch(mismatch(model, reference, context)?))
}

fn serialize_extended<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

fn deserialize_extended<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Extended {
        Num(f64),
        Str(String),
    }
    match Extended::deserialize(d)? {
        Extended::Num(x) => Ok(x),
        Extended::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Extended::Str(s) => Err(serde::de::Error::custom(format!("bad number `{s}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub context: Instantiation,
    #[serde(
        serialize_with = "serialize_extended",
        deserialize_with = "deserialize_extended"
    )]
    pub mismatch: f64,
    pub score: f64,
    pub favourable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// One row per context, in enumeration order.
    pub rows: Vec<ScoreRow>,
    pub threshold: f64,
    /// Favourable contexts by descending score.
    pub favourable: Vec<Instantiation>,
}

/// Scores every context and lists those scoring above `threshold`.
pub fn favourable_contexts(
    model: &ModelState,
    reference: &ReferenceSpec,
    threshold: f64,
) -> Result<ScoreReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidConfig(format!(
            "threshold {threshold} not in [0, 1]"
        )));
    }
    let contexts: Vec<&VariableSpec> = model.structure.context_vars().collect();
    let rows = enumerate_instantiations(&contexts)?
        .into_iter()
        .map(|context| {
            let m = mismatch(model, reference, &context)?;
            let s = score_from_mismatch(m);
            Ok(ScoreRow {
                context,
                mismatch: m,
                score: s,
                favourable: s > threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut fav: Vec<&ScoreRow> = rows.iter().filter(|r| r.favourable).collect();
    fav.sort_by(|a, b| b.score.total_cmp(&a.score));
    let favourable = fav.into_iter().map(|r| r.context.clone()).collect();
    Ok(ScoreReport {
        rows,
        threshold,
        favourable,
    })
}

impl ScoreReport {
    /// Aligned plain-text table: one column per context variable, then
    /// mismatch, score and a favourable flag.
    pub fn to_table(&self) -> String {
        let names: Vec<&str> = self
            .rows
            .first()
            .map(|r| r.context.names().collect())
            .unwrap_or_default();
        let mut header: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        header.extend(["mismatch".into(), "score".into(), "favourable".into()]);
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells: Vec<String> = r.context.iter().map(|(_, v)| v.to_string()).collect();
                cells.push(if r.mismatch.is_infinite() {
                    "inf".into()
                } else {
                    format!("{:.6}", r.mismatch)
                });
                cells.push(format!("{:.6}", r.score));
                cells.push(if r.favourable { "yes" } else { "no" }.into());
                cells
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|row| row[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&body) {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        let _ = writeln!(
            out,
            "threshold {}: {} favourable",
            self.threshold,
            self.favourable.len()
        );
        out
    }
}
