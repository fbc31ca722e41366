//! Zero-communication GapInnerProduct: both parties send sign sketches of
//! their vectors projected on correlated Gaussian draws, and a referee
//! thresholds the Hamming distance.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{domain, Error, Result};
use crate::rng::{stream_rng, subseed};
use crate::sources::{fill_normals, CorrelationSource, Samples};

/// Default constant in t = ⌈C·ln(1/δ)/γ²⌉.
pub const DEFAULT_REPETITION_CONSTANT: f64 = 8.0;
const NORM_TOL: f64 = 1e-10;

/// Distinguish ⟨u,v⟩ ≥ r from ⟨u,v⟩ ≤ s with error at most δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GipInstance {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub r: f64,
    pub s: f64,
    pub delta: f64,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GipInstance {
    pub fn new(u: Vec<f64>, v: Vec<f64>, r: f64, s: f64, delta: f64) -> Result<Self> {
        if u.is_empty() || u.len() != v.len() {
            return Err(domain!("vectors must be nonempty and of equal length ({} vs {})", u.len(), v.len()));
        }
        for (name, x) in [("u", &u), ("v", &v)] {
            let nx = norm(x);
            if (nx - 1.0).abs() > NORM_TOL {
                return Err(domain!("{name} has norm {nx}, expected 1"));
            }
        }
        if !(-1.0 <= s && s < r && r <= 1.0) {
            return Err(domain!("thresholds must satisfy -1 <= s < r <= 1, got s={s}, r={r}"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain!("error budget must lie in (0, 1), got {delta}"));
        }
        Ok(GipInstance { u, v, r, s, delta })
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn inner_product(&self) -> f64 {
        inner(&self.u, &self.v)
    }
}

/// A reduced instance with r = 0, and whether its answer must be inverted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduced {
    pub instance: GipInstance,
    pub flipped: bool,
}

/// Maps an instance to one with r = 0 and ⟨u′,v′⟩ = (⟨u,v⟩ − r)/(1+r).
///
/// A negative r is first removed by negating u, which swaps the roles of the
/// two thresholds and inverts the final answer.
pub fn pad_reduce(instance: &GipInstance) -> Reduced {
    let (u, r, s, flipped) = if instance.r < 0.0 {
        (instance.u.iter().map(|x| -x).collect::<Vec<_>>(), -instance.s, -instance.r, true)
    } else {
        (instance.u.clone(), instance.r, instance.s, false)
    };
    let n = u.len();
    let big = (n as f64 * (1.0 + r)).ceil() as usize;
    let pad = big - n;
    let scale = 1.0 / (1.0 + r).sqrt();
    let mut up: Vec<f64> = u.iter().map(|x| x * scale).collect();
    let mut vp: Vec<f64> = instance.v.iter().map(|x| x * scale).collect();
    if pad > 0 {
        let unit = 1.0 / (big as f64).sqrt();
        let mass = r / (1.0 + r) - (pad - 1) as f64 / big as f64;
        let last = mass.max(0.0).sqrt();
        for j in 0..pad {
            let a = if j + 1 == pad { last } else { unit };
            up.push(a);
            vp.push(-a);
        }
    }
    let s_new = (s - r) / (1.0 + r);
    Reduced {
        instance: GipInstance { u: up, v: vp, r: 0.0, s: s_new, delta: instance.delta },
        flipped,
    }
}

/// One party's t sign bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchBits {
    pub bits: BitVector,
    pub t: usize,
}

/// Bit i is 1 when ⟨vector, draw_i⟩ > 0; `draws` holds t rows of length n.
pub fn sketch(vector: &[f64], draws: &[f64], t: usize) -> Result<SketchBits> {
    let n = vector.len();
    if n == 0 || draws.len() != t * n {
        return Err(domain!("expected {t} draws of length {n}, got {} values", draws.len()));
    }
    let bits = BitVector::from_bits(draws.chunks_exact(n).map(|row| inner(vector, row) > 0.0));
    Ok(SketchBits { bits, t })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Yes,
    No,
}

impl Decision {
    fn flip(self) -> Self {
        match self {
            Decision::Yes => Decision::No,
            Decision::No => Decision::Yes,
        }
    }
}

/// Largest normalized distance still declared YES: midway between the
/// sign-disagreement rates 1/2 (inner product 0) and arccos(γ)/π.
pub fn referee_threshold(gamma: f64) -> f64 {
    0.5 + (gamma.clamp(-1.0, 1.0).acos() / PI - 0.5) / 2.0
}

/// YES iff Δ(a, b)/t ≤ [`referee_threshold`].
pub fn referee_decide(a: &SketchBits, b: &SketchBits, gamma: f64) -> Result<Decision> {
    if a.t != b.t || a.bits.len() != b.bits.len() {
        return Err(Error::Protocol(format!("sketch lengths differ: {} vs {}", a.t, b.t)));
    }
    if a.t == 0 {
        return Err(Error::Protocol("empty sketches".into()));
    }
    let frac = f64::from(a.bits.hamming(&b.bits)) / a.t as f64;
    Ok(if frac <= referee_threshold(gamma) { Decision::Yes } else { Decision::No })
}

/// How the correlated Gaussians are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianMode {
    Direct,
    /// Normalized sums of `block` DSBS pairs.
    Derived { block: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GipConfig {
    pub constant: f64,
    pub gaussian: GaussianMode,
}

impl Default for GipConfig {
    fn default() -> Self {
        GipConfig { constant: DEFAULT_REPETITION_CONSTANT, gaussian: GaussianMode::Direct }
    }
}

/// t = ⌈C·ln(1/δ)/γ²⌉ for γ = ρ·s′, s′ the reduced lower threshold.
pub fn repetitions(instance: &GipInstance, rho: f64, constant: f64) -> Result<(usize, f64)> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(domain!("rho must lie in (0, 1], got {rho}"));
    }
    if !(constant > 0.0) {
        return Err(domain!("repetition constant must be positive"));
    }
    let reduced = pad_reduce(instance);
    let gamma = rho * reduced.instance.s;
    let t = (constant * (1.0 / instance.delta).ln() / (gamma * gamma)).ceil();
    Ok((t.max(1.0) as usize, gamma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GipOutcome {
    pub decision: Decision,
    pub bits_communicated: usize,
    pub t: usize,
    pub gamma: f64,
    pub distance_fraction: f64,
    pub threshold: f64,
    pub flipped: bool,
}

fn source_for(rho: f64, mode: GaussianMode) -> Result<CorrelationSource> {
    match mode {
        GaussianMode::Direct => CorrelationSource::bgs(rho),
        GaussianMode::Derived { block } => CorrelationSource::derived_gaussian(rho, block),
    }
}

/// t rows each for Alice and Bob, drawn from stream 0 of `seed`.
fn correlated_draws(rho: f64, mode: GaussianMode, n: usize, t: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let src = source_for(rho, mode)?;
    let mut rng = stream_rng(subseed(seed, "gip-draws"), 0);
    let mut pair = src.empty_pair(n);
    let (mut xs, mut ys) = (Vec::with_capacity(t * n), Vec::with_capacity(t * n));
    for _ in 0..t {
        src.fill(&mut rng, n, &mut pair);
        if let (Samples::Real(x), Samples::Real(y)) = (&pair.x, &pair.y) {
            xs.extend_from_slice(x);
            ys.extend_from_slice(y);
        }
    }
    Ok((xs, ys))
}

/// Reduce, sketch both sides on shared correlated draws, and let the referee decide.
pub fn solve_gip(instance: &GipInstance, rho: f64, seed: u64, config: &GipConfig) -> Result<GipOutcome> {
    let (t, gamma) = repetitions(instance, rho, config.constant)?;
    let reduced = pad_reduce(instance);
    let inst = &reduced.instance;
    let (xs, ys) = correlated_draws(rho, config.gaussian, inst.n(), t, seed)?;
    let a = sketch(&inst.u, &xs, t)?;
    let b = sketch(&inst.v, &ys, t)?;
    let decision = referee_decide(&a, &b, gamma)?;
    Ok(GipOutcome {
        decision: if reduced.flipped { decision.flip() } else { decision },
        bits_communicated: 2 * t,
        t,
        gamma,
        distance_fraction: f64::from(a.bits.hamming(&b.bits)) / t as f64,
        threshold: referee_threshold(gamma),
        flipped: reduced.flipped,
    })
}

/// Fraction of `reps` sign disagreements between ⟨u, X_i⟩ and ⟨v, Y_i⟩.
pub fn empirical_disagreement(u: &[f64], v: &[f64], rho: f64, reps: usize, seed: u64, mode: GaussianMode) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() || reps == 0 {
        return Err(domain!("need equal nonempty vectors and at least one repetition"));
    }
    let (xs, ys) = correlated_draws(rho, mode, u.len(), reps, seed)?;
    let a = sketch(u, &xs, reps)?;
    let b = sketch(v, &ys, reps)?;
    Ok(f64::from(a.bits.hamming(&b.bits)) / reps as f64)
}

/// Random unit vectors u, v in R^n with ⟨u, v⟩ = `target`.
pub fn unit_pair_with_inner(n: usize, target: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(domain!("need n >= 2 to place two vectors at a prescribed angle"));
    }
    if !(-1.0..=1.0).contains(&target) {
        return Err(domain!("inner product {target} outside [-1, 1]"));
    }
    let mut rng = stream_rng(subseed(seed, "gip-instance"), 0);
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    fill_normals(&mut rng, &mut u);
    fill_normals(&mut rng, &mut w);
    let nu = norm(&u);
    u.iter_mut().for_each(|x| *x /= nu);
    let proj = inner(&u, &w);
    w.iter_mut().zip(&u).for_each(|(x, a)| *x -= proj * a);
    let nw = norm(&w);
    w.iter_mut().for_each(|x| *x /= nw);
    let side = (1.0 - target * target).max(0.0).sqrt();
    let v: Vec<f64> = u.iter().zip(&w).map(|(a, b)| target * a + side * b).collect();
    let nv = norm(&v);
    Ok((u, v.into_iter().map(|x| x / nv).collect()))
}
