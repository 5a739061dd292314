//! Information-theoretic primitives over discrete distributions and
//! Dirichlet beliefs. All quantities are in nats.

use statrs::function::gamma::digamma;

use crate::error::{Error, Result};

/// Tolerance on the unit-sum check of probability vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

pub fn validate_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty vector".into()));
    }
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "entry {x} not in [0, inf)"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

/// `D_KL(p || q)`, natural log, with `0 ln(0/q) = 0`.
///
/// Returns `f64::INFINITY` when `q` puts zero mass where `p` does not.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidDistribution(format!(
            "length mismatch {} vs {}",
            p.len(),
            q.len()
        )));
    }
    validate_distribution(p)?;
    validate_distribution(q)?;
    Ok(kl_unchecked(p, q))
}

pub(crate) fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        acc += pi * (pi / qi).ln();
    }
    acc.max(0.0)
}

/// Shannon entropy with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    validate_distribution(p)?;
    Ok(entropy_unchecked(p))
}

pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    h.max(0.0)
}

/// Plug-in entropy of a count vector. Zero for an empty vector.
pub fn entropy_of_counts(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

fn validate_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.len() < 2 {
        return Err(Error::InvalidPseudoCounts(
            "need at least two entries".into(),
        ));
    }
    if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::InvalidPseudoCounts(format!(
            "entry {a} is not positive"
        )));
    }
    Ok(())
}

/// Minimum expected KL risk of a point estimate under `Dir(alpha)`.
///
/// `min_q E_{θ~Dir(α)} KL(θ || q)` is attained at the posterior mean `α/α₀`
/// and equals `Σ_j (α_j/α₀) [ψ(α_j+1) − ψ(α₀+1) − ln(α_j/α₀)]`.
pub fn dirichlet_expected_kl(alpha: &[f64]) -> Result<f64> {
    validate_alpha(alpha)?;
    Ok(dirichlet_expected_kl_unchecked(alpha))
}

pub(crate) fn dirichlet_expected_kl_unchecked(alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let psi0 = digamma(a0 + 1.0);
    let risk: f64 = alpha
        .iter()
        .map(|&a| {
            let m = a / a0;
            m * (digamma(a + 1.0) - psi0 - m.ln())
        })
        .sum();
    risk.max(0.0)
}
