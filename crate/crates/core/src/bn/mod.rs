//! Discrete Bayesian-network substrate: variables, instantiations,
//! Dirichlet-parameterized CPTs and information-theoretic primitives.

mod cpt;
mod info;
mod instantiation;
mod model;
mod structure;
mod variable;

pub use cpt::DirichletCpt;
pub use info::{
    dirichlet_expected_kl, entropy, entropy_of_counts, kl_divergence, validate_distribution,
    SIMPLEX_TOL,
};
pub(crate) use info::{dirichlet_expected_kl_unchecked, kl_unchecked};
pub use instantiation::{
    enumerate_instantiations, instantiation_at, joint_cardinality, mixed_radix_digits,
    mixed_radix_index, Instantiation,
};
pub use model::{ModelDocument, ModelState, DEFAULT_PRIOR};
pub use structure::NetworkStructure;
pub use variable::{Role, VariableSpec};
