//! Closed-form converse and achievability exponents, and the LSH quantities
//! used to compare zero-communication agreement with hyperplane hashing.
//!
//! Every logarithm here is base 2.

use serde::{Deserialize, Serialize};

use crate::binomial_tails::binary_entropy;
use crate::error::{domain, Error, Result};
use crate::rng::{stream_rng, subseed};
use crate::sources::{CorrelationSource, Samples};

/// Parameters for the agreement-distillation converse.
///
/// `eps` is the source's crossover probability, `eps_prime` the permitted
/// fractional disagreement of the outputs, `alpha` the fraction of min-entropy
/// required of each output, `k` the output length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrBoundQuery {
    pub eps: f64,
    pub eps_prime: f64,
    pub alpha: f64,
    pub k: u64,
    pub gamma_target: f64,
    pub list_size: u64,
}

impl CrBoundQuery {
    pub fn new(eps: f64, eps_prime: f64, alpha: f64, k: u64) -> Result<Self> {
        let q = CrBoundQuery { eps, eps_prime, alpha, k, gamma_target: 1.0, list_size: 1 };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 0.5) {
            return Err(domain!("eps must lie in (0, 0.5], got {}", self.eps));
        }
        if !(self.eps_prime > 0.0 && self.eps_prime <= 0.5) {
            return Err(domain!("eps' must lie in (0, 0.5], got {}", self.eps_prime));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(domain!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.k == 0 || self.list_size == 0 {
            return Err(domain!("k and the list size must be positive"));
        }
        if !(self.gamma_target > 0.0 && self.gamma_target <= 1.0) {
            return Err(domain!("target agreement must lie in (0, 1], got {}", self.gamma_target));
        }
        Ok(())
    }

    /// Largest agreement the converse permits, 2^{−νk}.
    pub fn agreement_ceiling(&self) -> Result<f64> {
        Ok((-nu_correlated(self)? * self.k as f64).exp2())
    }
}

fn exponent(eps: f64, root: f64) -> f64 {
    let gap = root - (1.0 - 2.0 * eps);
    gap * gap / (4.0 * eps * (1.0 - eps))
}

/// ν = α·[√(1 − h(ε′)/α) − (1 − 2ε)]² / (4ε(1−ε)).
pub fn nu_correlated(q: &CrBoundQuery) -> Result<f64> {
    q.validate()?;
    let h = binary_entropy(q.eps_prime)?;
    let cap = 4.0 * q.eps * (1.0 - q.eps) * q.alpha;
    if h > cap {
        return Err(Error::OutOfRegime(format!(
            "h(eps') = {h} exceeds 4*eps*(1-eps)*alpha = {cap} (eps = {}, eps' = {}, alpha = {})",
            q.eps, q.eps_prime, q.alpha
        )));
    }
    Ok(q.alpha * exponent(q.eps, (1.0 - h / q.alpha).sqrt()))
}

fn list_regime(eps: f64, k: u64, b: u64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(domain!("eps must lie in (0, 0.5], got {eps}"));
    }
    if k == 0 || b == 0 {
        return Err(domain!("k and the list size must be positive"));
    }
    let frac = (b as f64).log2() / k as f64;
    let cap = 4.0 * eps * (1.0 - eps);
    if frac > cap {
        return Err(Error::OutOfRegime(format!("log2(b)/k = {frac} exceeds 4*eps*(1-eps) = {cap}")));
    }
    Ok(frac)
}

/// ν = [√(1 − log b / k) − (1 − 2ε)]² / (4ε(1−ε)) for list size b.
pub fn nu_list(eps: f64, k: u64, b: u64) -> Result<f64> {
    let frac = list_regime(eps, k, b)?;
    Ok(exponent(eps, (1.0 - frac).sqrt()))
}

/// Communication needed for agreement γ with list size b:
/// ν·k/2 − (3/2)·log(1/γ) − slack.
pub fn interactive_lb(eps: f64, k: u64, b: u64, gamma: f64, slack: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(domain!("agreement must lie in (0, 1], got {gamma}"));
    }
    if !slack.is_finite() {
        return Err(domain!("slack must be finite"));
    }
    let nu = nu_list(eps, k, b)?;
    Ok(nu * k as f64 / 2.0 - 1.5 * (1.0 / gamma).log2() - slack)
}

/// Agreement of the trivial ball scheme, 1 − exp(−(ε′ − δ)²·k).
pub fn chernoff_achievability(eps_prime: f64, delta: f64, k: u64) -> Result<f64> {
    if !(delta > 0.0 && delta < eps_prime) {
        return Err(domain!("need 0 < delta < eps', got delta = {delta}, eps' = {eps_prime}"));
    }
    let gap = eps_prime - delta;
    Ok(-(-(gap * gap) * k as f64).exp_m1())
}

/// Count of trials in which k DSBS pairs with crossover `eps` differ in at
/// most ⌊ε′k⌋ positions.
pub fn simulate_ball_agreement(eps: f64, eps_prime: f64, k: usize, trials: u64, seed: u64) -> Result<u64> {
    if !(0.0..=0.5).contains(&eps) {
        return Err(domain!("eps must lie in [0, 0.5], got {eps}"));
    }
    if k == 0 {
        return Err(domain!("k must be positive"));
    }
    let src = CorrelationSource::dsbs(1.0 - 2.0 * eps)?;
    let radius = (eps_prime * k as f64 + 1e-9).floor() as u32;
    let mut rng = stream_rng(subseed(seed, "ball-agreement"), 0);
    let mut pair = src.empty_pair(k);
    let mut hits = 0;
    for _ in 0..trials {
        src.fill(&mut rng, k, &mut pair);
        if let (Samples::Binary(x), Samples::Binary(y)) = (&pair.x, &pair.y) {
            if x.hamming(y) <= radius {
                hits += 1;
            }
        }
    }
    Ok(hits)
}

/// (f₀, f_cr) = (log(2/(1+ρ)), (1−ρ)/(1+ρ)).
pub fn lsh_exponents(rho: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(domain!("rho must lie in [0, 1], got {rho}"));
    }
    Ok(((2.0 / (1.0 + rho)).log2(), (1.0 - rho) / (1.0 + rho)))
}

/// log(1/p₁) / log(1/p₂) for collision probabilities p₂ < p₁.
pub fn rho_bar(p1: f64, p2: f64) -> Result<f64> {
    if !(0.0 < p2 && p2 < p1 && p1 < 1.0) {
        return Err(domain!("need 0 < p2 < p1 < 1, got p1 = {p1}, p2 = {p2}"));
    }
    Ok(p1.ln() / p2.ln())
}
