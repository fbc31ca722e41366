//! Seeded, parallel Monte Carlo harness for the template scheme, with Wilson
//! intervals and weighted exponent fits.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codebooks::{Codebook, Coloring};
use crate::cr_scheme::{run_protocol, RunOutcome, SchemeParams};
use crate::error::{domain, Error, Result};
use crate::gaussian_tails::{orthant_probability, q_tail, sheppard_disagreement};
use crate::rng::stream_rng;
use crate::sources::CorrelationSource;

/// Ceiling on trials·2^key_bits, the number of codeword evaluations per party.
pub const WORK_LIMIT: f64 = 1.1e12;
/// Configurations predicted to produce fewer successes are refused.
pub const MIN_EXPECTED_SUCCESSES: f64 = 25.0;
/// Output histograms are kept up to this key length.
const HISTOGRAM_MAX_BITS: u32 = 24;
const BLOCK: u64 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub allow_rare: bool,
}

impl TrialPlan {
    pub fn new(trials: u64, seed: u64) -> Self {
        TrialPlan { trials, seed, workers: 1, allow_rare: false }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn allow_rare(mut self, allow: bool) -> Self {
        self.allow_rare = allow;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub k: u32,
    pub key_bits: u32,
    pub trials: u64,
    pub successes: u64,
    pub agreement: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Trials where neither party fell back and both output the same codeword.
    pub codeword_successes: u64,
    pub codeword_agreement: f64,
    pub alice_fallbacks: u64,
    pub bob_fallbacks: u64,
    /// Largest empirical frequency of a single Alice output; None when the key
    /// is too long to histogram.
    pub max_output_freq: Option<f64>,
    pub comm_bits: u32,
    pub wallclock_secs: f64,
    pub config_digest: String,
}

impl EstimateReport {
    /// Copy with the timing field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        EstimateReport { wallclock_secs: 0.0, ..self.clone() }
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Rough agreement forecast used only by the rare-event guard:
/// ½|C|·L(t,φ;ρ) plus the chance that both parties fall back to equal keys.
pub fn predicted_agreement(params: &SchemeParams, source: &CorrelationSource) -> f64 {
    let size = (params.key_bits as f64).exp2();
    let rho = source.rho();
    let orthant = orthant_probability(params.t, params.phi, rho.max(0.0)).unwrap_or(0.0);
    let hit = 0.5 * size * orthant;
    let bit_agree = if source.is_binary() {
        (1.0 + rho) / 2.0
    } else {
        1.0 - sheppard_disagreement(rho).unwrap_or(0.5)
    };
    let alice_fb = (1.0 - size * q_tail(params.t).unwrap_or(0.0)).clamp(0.0, 1.0);
    let bob_fb = if params.zero_comm { (1.0 - size * q_tail(params.s).unwrap_or(0.0)).clamp(0.0, 1.0) } else { 1.0 };
    hit + alice_fb * bob_fb * bit_agree.powi(params.key_bits as i32)
}

fn check_plan(params: &SchemeParams, codebook: &Codebook, coloring: &Coloring, source: &CorrelationSource, plan: &TrialPlan) -> Result<()> {
    if plan.trials == 0 {
        return Err(domain!("trials must be at least 1"));
    }
    if plan.workers == 0 {
        return Err(domain!("workers must be at least 1"));
    }
    if source.is_binary() != codebook.is_binary() {
        return Err(Error::Config("source alphabet does not match the codebook family".into()));
    }
    if coloring.size() != codebook.size() {
        return Err(Error::Config("coloring does not cover the codebook".into()));
    }
    let work = plan.trials as f64 * codebook.size() as f64;
    if work > WORK_LIMIT {
        return Err(Error::ResourceLimit(format!(
            "{} trials over {} codewords exceeds the work limit {WORK_LIMIT:e}",
            plan.trials,
            codebook.size()
        )));
    }
    if !plan.allow_rare {
        let expected = predicted_agreement(params, source) * plan.trials as f64;
        if expected < MIN_EXPECTED_SUCCESSES {
            return Err(Error::ResourceLimit(format!(
                "expected about {expected:.1} agreements, below {MIN_EXPECTED_SUCCESSES}; raise trials or pass allow-rare"
            )));
        }
    }
    Ok(())
}

/// SHA-256 over the canonical description of an experiment, excluding the
/// worker count.
pub fn config_digest(params: &SchemeParams, codebook: &Codebook, coloring: &Coloring, source: &CorrelationSource, trials: u64, seed: u64) -> String {
    let mut colors = Sha256::new();
    for i in 0..coloring.size() {
        colors.update(coloring.color(i).to_le_bytes());
    }
    let doc = serde_json::json!({
        "params": params,
        "codebook": codebook.descriptor(),
        "coloring": hex::encode(colors.finalize()),
        "source": source,
        "trials": trials,
        "seed": seed,
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

#[derive(Clone)]
struct Tally {
    successes: u64,
    codeword: u64,
    alice_fb: u64,
    bob_fb: u64,
    hist: Vec<u32>,
}

impl Tally {
    fn new(bins: usize) -> Self {
        Tally { successes: 0, codeword: 0, alice_fb: 0, bob_fb: 0, hist: vec![0; bins] }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.successes += other.successes;
        self.codeword += other.codeword;
        self.alice_fb += other.alice_fb;
        self.bob_fb += other.bob_fb;
        for (a, b) in self.hist.iter_mut().zip(&other.hist) {
            *a += b;
        }
        self
    }
}

/// Runs trial `i` with its own stream; the outcome depends only on (seed, i).
fn run_block<F: FnMut(u64, RunOutcome)>(
    params: &SchemeParams,
    codebook: &Codebook,
    coloring: &Coloring,
    source: &CorrelationSource,
    seed: u64,
    range: std::ops::Range<u64>,
    mut sink: F,
) -> Result<()> {
    let n = codebook.n();
    let mut pair = source.empty_pair(n);
    for i in range {
        let mut rng = stream_rng(seed, i);
        source.fill(&mut rng, n, &mut pair);
        sink(i, run_protocol(params, codebook, coloring, &pair)?);
    }
    Ok(())
}

/// Estimates agreement and output statistics over `plan.trials` independent runs.
pub fn run_trials(params: &SchemeParams, codebook: &Codebook, coloring: &Coloring, source: &CorrelationSource, plan: &TrialPlan) -> Result<EstimateReport> {
    check_plan(params, codebook, coloring, source, plan)?;
    let start = Instant::now();
    let bins = if params.key_bits <= HISTOGRAM_MAX_BITS { 1usize << params.key_bits } else { 0 };
    let blocks: Vec<u64> = (0..plan.trials.div_ceil(BLOCK)).collect();
    let tally = pool(plan.workers)?.install(|| {
        blocks
            .par_iter()
            .map(|&b| {
                let range = b * BLOCK..((b + 1) * BLOCK).min(plan.trials);
                let mut t = Tally::new(0);
                let mut keys = Vec::with_capacity(BLOCK as usize);
                run_block(params, codebook, coloring, source, plan.seed, range, |_, out| {
                    t.successes += u64::from(out.agreed);
                    t.codeword += u64::from(out.agreed && !out.alice_fell_back && !out.bob_fell_back);
                    t.alice_fb += u64::from(out.alice_fell_back);
                    t.bob_fb += u64::from(out.bob_fell_back);
                    if bins > 0 {
                        keys.push(out.alice_key as u32);
                    }
                })?;
                Ok((t, keys))
            })
            .try_fold(
                || Tally::new(bins),
                |mut acc, item: Result<(Tally, Vec<u32>)>| {
                    let (t, keys) = item?;
                    for k in keys {
                        acc.hist[k as usize] += 1;
                    }
                    acc.successes += t.successes;
                    acc.codeword += t.codeword;
                    acc.alice_fb += t.alice_fb;
                    acc.bob_fb += t.bob_fb;
                    Ok::<Tally, Error>(acc)
                },
            )
            .try_reduce(|| Tally::new(bins), |a, b| Ok(a.merge(b)))
    })?;
    let trials = plan.trials;
    let agreement = tally.successes as f64 / trials as f64;
    let (ci_low, ci_high) = wilson_interval(tally.successes, trials, 1.959_963_984_540_054);
    let max_output_freq = (bins > 0).then(|| f64::from(tally.hist.iter().copied().max().unwrap_or(0)) / trials as f64);
    Ok(EstimateReport {
        k: params.k,
        key_bits: params.key_bits,
        trials,
        successes: tally.successes,
        agreement,
        ci_low,
        ci_high,
        codeword_successes: tally.codeword,
        codeword_agreement: tally.codeword as f64 / trials as f64,
        alice_fallbacks: tally.alice_fb,
        bob_fallbacks: tally.bob_fb,
        max_output_freq,
        comm_bits: params.comm_bits(),
        wallclock_secs: start.elapsed().as_secs_f64(),
        config_digest: config_digest(params, codebook, coloring, source, trials, plan.seed),
    })
}

/// Per-trial outcomes in trial order.
pub fn collect_outcomes(params: &SchemeParams, codebook: &Codebook, coloring: &Coloring, source: &CorrelationSource, plan: &TrialPlan) -> Result<Vec<RunOutcome>> {
    check_plan(params, codebook, coloring, source, &TrialPlan { allow_rare: true, ..*plan })?;
    let blocks: Vec<u64> = (0..plan.trials.div_ceil(BLOCK)).collect();
    let parts: Vec<Vec<RunOutcome>> = pool(plan.workers)?.install(|| {
        blocks
            .par_iter()
            .map(|&b| {
                let range = b * BLOCK..((b + 1) * BLOCK).min(plan.trials);
                let mut out = Vec::with_capacity(range.end.saturating_sub(range.start) as usize);
                run_block(params, codebook, coloring, source, plan.seed, range, |_, o| out.push(o))?;
                Ok(out)
            })
            .collect::<Result<_>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

/// Which agreement count a slope is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgreementKind {
    /// Equal keys, including coincidences between fallback keys.
    Total,
    /// Equal keys reached through the codebook by both parties.
    Codeword,
}

/// Least-squares slope of log₂(agreement) against key length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

/// Weighted fit with inverse-variance weights from the delta method,
/// Var(log₂ p̂) ≈ (1−p)/(N p ln²2), and a residual-based standard error.
pub fn exponent_slope(reports: &[EstimateReport]) -> Result<SlopeFit> {
    exponent_slope_of(reports, AgreementKind::Total)
}

pub fn exponent_slope_of(reports: &[EstimateReport], kind: AgreementKind) -> Result<SlopeFit> {
    let count = |r: &EstimateReport| match kind {
        AgreementKind::Total => r.successes,
        AgreementKind::Codeword => r.codeword_successes,
    };
    let mut ks: Vec<u32> = reports.iter().map(|r| r.key_bits).collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.len() < 4 {
        return Err(Error::InsufficientData(format!("need at least 4 distinct k values, got {}", ks.len())));
    }
    if let Some(r) = reports.iter().find(|r| count(r) == 0) {
        return Err(Error::InsufficientData(format!(
            "no agreements at k = {} after {} trials; run more trials",
            r.key_bits, r.trials
        )));
    }
    let ln2sq = std::f64::consts::LN_2.powi(2);
    let pts: Vec<(f64, f64, f64)> = reports
        .iter()
        .map(|r| {
            let n = r.trials as f64;
            let p = count(r) as f64 / n;
            let var = ((1.0 - p) + 1.0 / n) / (n * p * ln2sq);
            (f64::from(r.key_bits), p.log2(), 1.0 / var)
        })
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xb = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let yb = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xb).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xb) * (p.1 - yb)).sum();
    let slope = sxy / sxx;
    let intercept = yb - slope * xb;
    let rss: f64 = pts.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = (pts.len() - 2) as f64;
    let stderr = (rss / dof / sxx).sqrt();
    Ok(SlopeFit { slope, intercept, stderr })
}
