//! Online model refinement: attribute co-occurrence statistics, the
//! coefficient of mutual information between an outcome and an attribute
//! within a situation, and promotion of dependent attributes into the
//! network.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::bn::{entropy_of_counts, Instantiation, Role, VariableSpec, DEFAULT_PRIOR};
use crate::error::{Error, Result};
use crate::learner::LearnerState;

pub const DEFAULT_R_THRESHOLD: f64 = 0.3;
pub const DEFAULT_N_MIN: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub r_threshold: f64,
    pub n_min: u64,
    pub promoted_controllable: bool,
    /// Pseudo-count of CPT rows re-created after a promotion.
    pub reset_prior: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            r_threshold: DEFAULT_R_THRESHOLD,
            n_min: DEFAULT_N_MIN,
            promoted_controllable: true,
            reset_prior: DEFAULT_PRIOR,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_threshold > 0.0 && self.r_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "r_threshold {} not in (0, 1]",
                self.r_threshold
            )));
        }
        if self.n_min == 0 {
            return Err(Error::InvalidConfig("n_min must be at least 1".into()));
        }
        if !(self.reset_prior.is_finite() && self.reset_prior > 0.0) {
            return Err(Error::InvalidConfig("reset_prior must be positive".into()));
        }
        Ok(())
    }
}

/// Counts observed in one situation: attribute -> outcome variable ->
/// `[attribute value][outcome value]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationCounts {
    pub situation: Instantiation,
    pub tables: IndexMap<String, IndexMap<String, Vec<Vec<u64>>>>,
}

/// Empirical co-occurrence counts of (situation, attribute value, outcome value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeStats {
    /// Attributes still outside the network.
    pub attributes: Vec<VariableSpec>,
    pub outcomes: Vec<VariableSpec>,
    /// Keyed by the situation's canonical `Name=value;...` string.
    pub counts: IndexMap<String, SituationCounts>,
    pub attr_marginals: IndexMap<String, Vec<u64>>,
    pub n_min: u64,
}

/// Attributes to promote, per dependent outcome variable.
pub type Promotions = BTreeMap<String, BTreeSet<String>>;

impl AttributeStats {
    pub fn new(attributes: Vec<VariableSpec>, outcomes: Vec<VariableSpec>, n_min: u64) -> Self {
        let attr_marginals = attributes
            .iter()
            .map(|a| (a.name.clone(), vec![0; a.cardinality()]))
            .collect();
        AttributeStats {
            attributes,
            outcomes,
            counts: IndexMap::new(),
            attr_marginals,
            n_min,
        }
    }

    pub fn attribute(&self, name: &str) -> Result<&VariableSpec> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    fn outcome(&self, name: &str) -> Result<(usize, &VariableSpec)> {
        self.outcomes
            .iter()
            .enumerate()
            .find(|(_, o)| o.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn situation_key(situation: &Instantiation) -> String {
        situation.to_string()
    }

    /// Pure form of [`record`](Self::record).
    pub fn update_attribute_stats(
        &self,
        situation: &Instantiation,
        attributes: &Instantiation,
        outcome: &Instantiation,
    ) -> Result<AttributeStats> {
        let mut next = self.clone();
        next.record(situation, attributes, outcome)?;
        Ok(next)
    }

    /// Adds one experiment. `attributes` must bind every tracked attribute;
    /// bindings of untracked names are ignored.
    pub fn record(
        &mut self,
        situation: &Instantiation,
        attributes: &Instantiation,
        outcome: &Instantiation,
    ) -> Result<()> {
        let mut attr_idx = Vec::with_capacity(self.attributes.len());
        for a in &self.attributes {
            attr_idx.push(a.index_of(attributes.require(&a.name)?)?);
        }
        let mut out_idx = Vec::with_capacity(self.outcomes.len());
        for o in &self.outcomes {
            out_idx.push(o.index_of(outcome.require(&o.name)?)?);
        }

        let key = Self::situation_key(situation);
        let attributes_spec = &self.attributes;
        let outcomes_spec = &self.outcomes;
        let entry = self.counts.entry(key).or_insert_with(|| SituationCounts {
            situation: situation.clone(),
            tables: IndexMap::new(),
        });
        for (a, &ai) in attributes_spec.iter().zip(&attr_idx) {
            let per_outcome = entry.tables.entry(a.name.clone()).or_insert_with(|| {
                outcomes_spec
                    .iter()
                    .map(|o| {
                        (
                            o.name.clone(),
                            vec![vec![0; o.cardinality()]; a.cardinality()],
                        )
                    })
                    .collect()
            });
            for (o, &oi) in outcomes_spec.iter().zip(&out_idx) {
                per_outcome
                    .get_mut(&o.name)
                    .expect("table created for every outcome")[ai][oi] += 1;
            }
            self.attr_marginals
                .get_mut(&a.name)
                .expect("marginal created for every attribute")[ai] += 1;
        }
        Ok(())
    }

    fn table(&self, outcome: &str, attr: &str, situation: &str) -> Result<Option<&Vec<Vec<u64>>>> {
        self.attribute(attr)?;
        self.outcome(outcome)?;
        Ok(self
            .counts
            .get(situation)
            .and_then(|c| c.tables.get(attr))
            .and_then(|t| t.get(outcome)))
    }

    /// Number of times each value of `attr` was seen in `situation`.
    fn value_counts(&self, attr: &str, situation: &str) -> Result<Vec<u64>> {
        let spec = self.attribute(attr)?;
        let Some(first) = self.outcomes.first() else {
            return Ok(vec![0; spec.cardinality()]);
        };
        Ok(match self.table(&first.name, attr, situation)? {
            Some(t) => t.iter().map(|row| row.iter().sum()).collect(),
            None => vec![0; spec.cardinality()],
        })
    }

    /// Values of `attr` observed at least `n_min` times in `situation`, in domain order.
    pub fn domain_valid(&self, attr: &str, situation: &str) -> Result<Vec<String>> {
        let spec = self.attribute(attr)?;
        Ok(self
            .value_counts(attr, situation)?
            .into_iter()
            .zip(&spec.domain)
            .filter(|(c, _)| *c >= self.n_min)
            .map(|(_, v)| v.clone())
            .collect())
    }

    fn entropy_terms(&self, outcome: &str, attr: &str, situation: &str) -> Result<(f64, f64)> {
        let table = self.table(outcome, attr, situation)?.ok_or_else(|| {
            Error::UndefinedEstimate(format!("situation `{situation}` never observed"))
        })?;
        let (_, ospec) = self.outcome(outcome)?;
        let mut column = vec![0u64; ospec.cardinality()];
        for row in table {
            for (c, x) in column.iter_mut().zip(row) {
                *c += x;
            }
        }
        let h_outcome = entropy_of_counts(&column);

        let marginal = &self.attr_marginals[attr];
        let valid: Vec<usize> = (0..table.len())
            .filter(|&a| table[a].iter().sum::<u64>() >= self.n_min)
            .collect();
        if valid.len() < 2 {
            return Ok((h_outcome, 0.0));
        }
        let mass: u64 = valid.iter().map(|&a| marginal[a]).sum();
        let conditional: f64 = valid
            .iter()
            .map(|&a| marginal[a] as f64 / mass as f64 * entropy_of_counts(&table[a]))
            .sum();
        Ok((h_outcome, (h_outcome - conditional).max(0.0)))
    }

    /// Plug-in estimate of `I(outcome; attr | situation)`, clamped at zero.
    ///
    /// Only attribute values in `domain_valid` enter the conditional term,
    /// weighted by the global attribute marginal renormalized over those
    /// values. Fewer than two valid values carry no evidence and give 0.
    pub fn mutual_information_estimate(
        &self,
        outcome: &str,
        attr: &str,
        situation: &str,
    ) -> Result<f64> {
        Ok(self.entropy_terms(outcome, attr, situation)?.1)
    }

    /// `R = I / min(H(outcome | situation), H(attr))`, in `[0, 1]`; zero
    /// when either entropy vanishes.
    pub fn coefficient_of_mi(&self, outcome: &str, attr: &str, situation: &str) -> Result<f64> {
        let (h_outcome, mi) = self.entropy_terms(outcome, attr, situation)?;
        let h_attr = entropy_of_counts(&self.attr_marginals[attr]);
        let denom = h_outcome.min(h_attr);
        if denom <= 1e-12 {
            return Ok(0.0);
        }
        Ok((mi / denom).clamp(0.0, 1.0))
    }

    pub fn observed_situations(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    /// Attributes whose coefficient exceeds the threshold in at least one of
    /// `situations`.
    pub fn identify_dependence<'a>(
        &self,
        outcome: &str,
        situations: impl IntoIterator<Item = &'a str>,
        config: &RefinementConfig,
    ) -> Result<BTreeSet<String>> {
        let situations: Vec<&str> = situations.into_iter().collect();
        let mut found = BTreeSet::new();
        for a in &self.attributes {
            for s in &situations {
                if !self.counts.contains_key(*s) {
                    continue;
                }
                if self.coefficient_of_mi(outcome, &a.name, s)? > config.r_threshold {
                    found.insert(a.name.clone());
                    break;
                }
            }
        }
        Ok(found)
    }

    /// Runs [`identify_dependence`](Self::identify_dependence) for every
    /// outcome over every observed situation.
    pub fn detect(&self, config: &RefinementConfig) -> Result<Promotions> {
        let mut out = Promotions::new();
        for o in &self.outcomes {
            let found = self.identify_dependence(&o.name, self.observed_situations(), config)?;
            if !found.is_empty() {
                out.insert(o.name.clone(), found);
            }
        }
        Ok(out)
    }

    /// Stops tracking `attr` and drops its counts.
    pub(crate) fn retire(&mut self, attr: &str) {
        self.attributes.retain(|a| a.name != attr);
        self.attr_marginals.swap_remove(attr);
        for c in self.counts.values_mut() {
            c.tables.swap_remove(attr);
        }
    }
}

/// Names promoted by `promotions`, deduplicated across outcomes.
pub fn promoted_names(promotions: &Promotions) -> Vec<String> {
    let all: BTreeSet<&String> = promotions.values().flatten().collect();
    all.into_iter().cloned().collect()
}

/// Promotes attributes into the network as context variables.
///
/// Affected outcome CPTs restart from the prior; history is kept but not
/// replayed. Promoted variables join the query set iff
/// `config.promoted_controllable`.
pub fn modify_model(
    state: &LearnerState,
    stats: &AttributeStats,
    promotions: &Promotions,
    config: &RefinementConfig,
) -> Result<(LearnerState, AttributeStats)> {
    let mut state = state.clone();
    let mut stats = stats.clone();
    if promotions.values().all(BTreeSet::is_empty) {
        return Ok((state, stats));
    }
    let names = promoted_names(promotions);
    for name in &names {
        if state.model.structure.has_node(name) {
            return Err(Error::InvalidStructure(format!(
                "`{name}` is already a node"
            )));
        }
        let spec = stats
            .attribute(name)?
            .clone()
            .with_role(Role::Context, config.promoted_controllable);
        let outcome_pos = state
            .model
            .structure
            .nodes
            .iter()
            .position(|v| v.role == Role::Outcome)
            .unwrap_or(state.model.structure.nodes.len());
        state
            .model
            .structure
            .nodes
            .insert(outcome_pos, spec.clone());
        if config.promoted_controllable {
            state.query_vars.push(name.clone());
        } else {
            state.uncontrolled_dist.insert(
                name.clone(),
                vec![1.0 / spec.cardinality() as f64; spec.cardinality()],
            );
        }
    }
    for (outcome, attrs) in promotions {
        let parents = state
            .model
            .structure
            .parents
            .get_mut(outcome)
            .ok_or_else(|| Error::UnknownVariable(outcome.clone()))?;
        parents.extend(attrs.iter().cloned());
    }
    state.model.structure.validate()?;
    for (outcome, attrs) in promotions {
        if !attrs.is_empty() {
            state.model.reset_outcome(outcome, config.reset_prior)?;
        }
    }
    state.refresh_uncontrolled_dist();
    for name in &names {
        stats.retire(name);
    }
    state.validate()?;
    Ok((state, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::{ModelState, NetworkStructure};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::LN_2;

    fn size() -> VariableSpec {
        VariableSpec::attribute("BallSize", ["Small", "Large"]).unwrap()
    }
    fn kdo() -> VariableSpec {
        VariableSpec::outcome("KDo", ["Left", "Mid", "Right", "None"]).unwrap()
    }
    fn sit() -> Instantiation {
        Instantiation::from_pairs([("Position", "Middle"), ("KDc", "Left")])
    }
    fn attrs(size: &str) -> Instantiation {
        Instantiation::from_pairs([("BallSize", size)])
    }
    fn out(v: &str) -> Instantiation {
        Instantiation::from_pairs([("KDo", v)])
    }
    fn key() -> String {
        AttributeStats::situation_key(&sit())
    }

    #[test]
    fn record_counts_and_marginals() {
        let stats = AttributeStats::new(vec![size()], vec![kdo()], 5);
        let one = stats
            .update_attribute_stats(&sit(), &attrs("Small"), &out("Left"))
            .unwrap();
        assert_eq!(
            one.counts[&key()].tables["BallSize"]["KDo"][0],
            vec![1, 0, 0, 0]
        );
        assert_eq!(one.attr_marginals["BallSize"], vec![1, 0]);
        assert!(stats.counts.is_empty());

        let mut s = stats.clone();
        for i in 0..7 {
            let v = if i % 3 == 0 { "Large" } else { "Small" };
            s.record(&sit(), &attrs(v), &out("Left")).unwrap();
        }
        assert_eq!(s.attr_marginals["BallSize"], vec![4, 3]);
        let total: u64 = s.counts[&key()].tables["BallSize"]["KDo"]
            .iter()
            .flatten()
            .sum();
        assert_eq!(total, 7);
    }

    #[test]
    fn record_rejects_unknown_value() {
        let mut s = AttributeStats::new(vec![size()], vec![kdo()], 5);
        assert!(s.record(&sit(), &attrs("Huge"), &out("Left")).is_err());
        assert!(s
            .record(&sit(), &Instantiation::new(), &out("Left"))
            .is_err());
    }

    #[test]
    fn domain_valid_thresholds() {
        let mut s = AttributeStats::new(vec![size()], vec![kdo()], 5);
        assert!(s.domain_valid("BallSize", &key()).unwrap().is_empty());
        for _ in 0..5 {
            s.record(&sit(), &attrs("Small"), &out("Left")).unwrap();
        }
        for _ in 0..4 {
            s.record(&sit(), &attrs("Large"), &out("None")).unwrap();
        }
        assert_eq!(s.domain_valid("BallSize", &key()).unwrap(), vec!["Small"]);
        for _ in 0..5 {
            s.record(&sit(), &attrs("Large"), &out("None")).unwrap();
        }
        for _ in 0..2 {
            s.record(&sit(), &attrs("Small"), &out("Left")).unwrap();
        }
        assert_eq!(
            s.domain_valid("BallSize", &key()).unwrap(),
            vec!["Small", "Large"]
        );
    }

    #[test]
    fn deterministic_outcome_gives_zero() {
        let mut s = AttributeStats::new(vec![size()], vec![kdo()], 5);
        for i in 0..20 {
            let v = if i % 2 == 0 { "Small" } else { "Large" };
            s.record(&sit(), &attrs(v), &out("Left")).unwrap();
        }
        assert_eq!(
            s.mutual_information_estimate("KDo", "BallSize", &key())
                .unwrap(),
            0.0
        );
        assert_eq!(s.coefficient_of_mi("KDo", "BallSize", &key()).unwrap(), 0.0);
    }

    #[test]
    fn functional_dependence_gives_ln2_and_r_one() {
        let mut s = AttributeStats::new(vec![size()], vec![kdo()], 5);
        for i in 0..20 {
            let (v, o) = if i % 2 == 0 {
                ("Small", "Left")
            } else {
                ("Large", "None")
            };
            s.record(&sit(), &attrs(v), &out(o)).unwrap();
        }
        assert_abs_diff_eq!(
            s.mutual_information_estimate("KDo", "BallSize", &key())
                .unwrap(),
            LN_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            s.coefficient_of_mi("KDo", "BallSize", &key()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let cfg = RefinementConfig::default();
        let found = s
            .identify_dependence("KDo", s.observed_situations(), &cfg)
            .unwrap();
        assert_eq!(found, BTreeSet::from(["BallSize".to_string()]));
    }

    #[test]
    fn unobserved_situation_is_undefined() {
        let s = AttributeStats::new(vec![size()], vec![kdo()], 5);
        assert!(matches!(
            s.mutual_information_estimate("KDo", "BallSize", "nowhere"),
            Err(Error::UndefinedEstimate(_))
        ));
    }

    #[test]
    fn no_observations_no_dependence() {
        let s = AttributeStats::new(vec![size()], vec![kdo()], 5);
        let cfg = RefinementConfig::default();
        assert!(s.detect(&cfg).unwrap().is_empty());
    }

    #[test]
    fn below_coverage_never_fires() {
        let mut s = AttributeStats::new(vec![size()], vec![kdo()], 5);
        for i in 0..8 {
            let (v, o) = if i % 2 == 0 {
                ("Small", "Left")
            } else {
                ("Large", "None")
            };
            s.record(&sit(), &attrs(v), &out(o)).unwrap();
        }
        assert_eq!(s.coefficient_of_mi("KDo", "BallSize", &key()).unwrap(), 0.0);
    }

    fn ballkick_learner() -> LearnerState {
        let s = NetworkStructure::fully_connected(vec![
            VariableSpec::command("Position", ["LeftSide", "Middle", "RightSide"]).unwrap(),
            VariableSpec::command("KDc", ["Left", "Mid", "Right"]).unwrap(),
            kdo(),
        ])
        .unwrap();
        LearnerState::new(ModelState::with_prior(s, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn promote_ball_size() {
        let mut learner = ballkick_learner();
        learner
            .observe(&sit(), &out("Left"), &attrs("Small"))
            .unwrap();
        let stats = AttributeStats::new(vec![size()], vec![kdo()], 5);
        let cfg = RefinementConfig::default();
        let promos =
            Promotions::from([("KDo".to_string(), BTreeSet::from(["BallSize".to_string()]))]);
        let (next, next_stats) = modify_model(&learner, &stats, &promos, &cfg).unwrap();
        let cpt = next.model.cpt("KDo").unwrap();
        assert_eq!(cpt.len(), 18);
        assert!(cpt.rows.iter().all(|r| r == &vec![1.0; 4]));
        assert_eq!(
            next.model.structure.parents["KDo"],
            vec!["Position", "KDc", "BallSize"]
        );
        assert!(next.query_vars.contains(&"BallSize".to_string()));
        assert_eq!(next.query_space().unwrap().len(), 18);
        assert!(next_stats.attributes.is_empty());
        assert!(!next_stats.attr_marginals.contains_key("BallSize"));
        assert_eq!(next.history.len(), 1);
        let fresh = ModelState::with_prior(next.model.structure.clone(), 1.0).unwrap();
        assert_abs_diff_eq!(
            next.model_error(),
            crate::learner::model_error(&fresh),
            epsilon = 1e-15
        );
    }

    #[test]
    fn promote_nothing_is_identity() {
        let learner = ballkick_learner();
        let stats = AttributeStats::new(vec![size()], vec![kdo()], 5);
        let (next, next_stats) = modify_model(
            &learner,
            &stats,
            &Promotions::new(),
            &RefinementConfig::default(),
        )
        .unwrap();
        assert_eq!(next, learner);
        assert_eq!(next_stats, stats);
    }

    #[test]
    fn promote_unknown_attribute_fails() {
        let learner = ballkick_learner();
        let stats = AttributeStats::new(vec![size()], vec![kdo()], 5);
        let promos = Promotions::from([("KDo".to_string(), BTreeSet::from(["Turf".to_string()]))]);
        assert!(modify_model(&learner, &stats, &promos, &RefinementConfig::default()).is_err());
    }

    #[test]
    fn uncontrollable_promotion_joins_environment() {
        let learner = ballkick_learner();
        let stats = AttributeStats::new(vec![size()], vec![kdo()], 5);
        let cfg = RefinementConfig {
            promoted_controllable: false,
            ..RefinementConfig::default()
        };
        let promos =
            Promotions::from([("KDo".to_string(), BTreeSet::from(["BallSize".to_string()]))]);
        let (next, _) = modify_model(&learner, &stats, &promos, &cfg).unwrap();
        assert!(!next.query_vars.contains(&"BallSize".to_string()));
        assert_eq!(next.uncontrolled_dist["BallSize"], vec![0.5, 0.5]);
        assert_eq!(next.query_space().unwrap().len(), 9);
    }

    #[test]
    fn config_validation() {
        assert!(RefinementConfig::default().validate().is_ok());
        let bad = RefinementConfig {
            r_threshold: 0.0,
            ..RefinementConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RefinementConfig {
            n_min: 0,
            ..RefinementConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
