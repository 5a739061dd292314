#![allow(dead_code)]

use capex::bn::{
    dirichlet_expected_kl, enumerate_instantiations, DirichletCpt, Instantiation, ModelState,
    NetworkStructure, VariableSpec,
};
use capex::learner::LearnerState;
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dirichlet_sample(alpha: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let g: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).unwrap().sample(rng))
        .collect();
    let z: f64 = g.iter().sum();
    g.iter().map(|x| x / z).collect()
}

/// Monte-Carlo mean and standard error of `KL(theta || alpha/alpha0)` for
/// `theta ~ Dirichlet(alpha)`.
pub fn mc_dirichlet_risk(alpha: &[f64], n: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let a0: f64 = alpha.iter().sum();
    let mean: Vec<f64> = alpha.iter().map(|a| a / a0).collect();
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let theta = dirichlet_sample(alpha, &mut r);
        let kl: f64 = theta
            .iter()
            .zip(&mean)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, m)| t * (t / m).ln())
            .sum();
        s += kl;
        s2 += kl * kl;
    }
    let m = s / n as f64;
    let var = (s2 / n as f64 - m * m).max(0.0);
    (m, (var / n as f64).sqrt())
}

/// Binary situation variables `S0..`, the first `controlled` of them
/// controllable, and one outcome `O` with `arity` values.
pub fn binary_model(n_vars: usize, controlled: usize, arity: usize, seed: u64) -> LearnerState {
    let mut r = rng(seed);
    let mut nodes: Vec<VariableSpec> = (0..n_vars)
        .map(|i| {
            let mut v = VariableSpec::context(format!("S{i}"), ["a", "b"]).unwrap();
            v.controllable = i < controlled;
            v
        })
        .collect();
    nodes.push(VariableSpec::outcome("O", (0..arity).map(|j| format!("o{j}"))).unwrap());
    let structure = NetworkStructure::fully_connected(nodes).unwrap();
    let rows = 1usize << n_vars;
    let cpt_rows: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..arity).map(|_| r.random_range(0.5..6.0)).collect())
        .collect();
    let raw: Vec<f64> = (0..rows).map(|_| r.random_range(0.1..1.0)).collect();
    let z: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / z).collect();
    let model = ModelState::from_parts(
        structure,
        IndexMap::from([(
            "O".to_string(),
            DirichletCpt::from_rows("O", cpt_rows).unwrap(),
        )]),
        IndexMap::from([("O".to_string(), weights)]),
    )
    .unwrap();
    let query: Vec<String> = (0..controlled).map(|i| format!("S{i}")).collect();
    let mut state = LearnerState::with_query_vars(model, query).unwrap();
    for i in controlled..n_vars {
        let p: f64 = r.random_range(0.1..0.9);
        state
            .uncontrolled_dist
            .insert(format!("S{i}"), vec![p, 1.0 - p]);
    }
    state
}

/// Model error recomputed from the definition: weighted Dirichlet risk of
/// every row of every outcome.
pub fn model_error_from_scratch(model: &ModelState) -> f64 {
    let mut total = 0.0;
    for (name, cpt) in &model.cpts {
        let w = &model.situation_weights[name];
        for (row, alpha) in cpt.rows.iter().enumerate() {
            total += w[row] * dirichlet_expected_kl(alpha).unwrap();
        }
    }
    total
}

/// Expected posterior model error of `query` by enumerating every
/// completion of the uncontrolled variables and every joint outcome,
/// applying the update and recomputing model error from scratch.
pub fn brute_force_epe(state: &LearnerState, query: &Instantiation) -> f64 {
    let structure = &state.model.structure;
    let free: Vec<&VariableSpec> = structure
        .situation_vars()
        .filter(|v| !query.contains(&v.name))
        .collect();
    let outcomes: Vec<&VariableSpec> = structure.outcome_vars().collect();
    let mut epe = 0.0;
    for completion in enumerate_instantiations(&free).unwrap() {
        let mut p_sit = 1.0;
        for (name, value) in completion.iter() {
            let spec = structure.node(name).unwrap();
            p_sit *= state.uncontrolled_dist[name][spec.index_of(value).unwrap()];
        }
        if p_sit == 0.0 {
            continue;
        }
        let situation = query.merged(&completion);
        for outcome in enumerate_instantiations(&outcomes).unwrap() {
            let mut p_out = 1.0;
            for (name, value) in outcome.iter() {
                let pred = state.model.predictive(name, &situation).unwrap();
                p_out *= pred[structure.node(name).unwrap().index_of(value).unwrap()];
            }
            let next = state
                .record_observation(&situation, &outcome, &Instantiation::new())
                .unwrap();
            epe += p_sit * p_out * model_error_from_scratch(&next.model);
        }
    }
    epe
}

/// Argmin of [`brute_force_epe`] over the query space; first wins ties.
pub fn brute_force_best(state: &LearnerState) -> (Instantiation, f64) {
    let mut best: Option<(Instantiation, f64)> = None;
    for q in state.query_space().unwrap() {
        let e = brute_force_epe(state, &q);
        if best.as_ref().is_none_or(|(_, b)| e < b - 1e-12) {
            best = Some((q, e));
        }
    }
    best.unwrap()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
