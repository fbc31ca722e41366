//! The one-way template scheme: parameter derivation, Alice's encoder, Bob's
//! decoder, fallback keys and the secret-key split.

use serde::{Deserialize, Serialize};

use crate::codebooks::{Codebook, CodebookFamily, Coloring};
use crate::error::{domain, Error, Result};
use crate::gaussian_tails::{q_inverse, q_tail};
use crate::sources::{SamplePair, Samples};

/// Default ceiling on the key length; brute-force scans are 2^k per party.
pub const DEFAULT_MAX_K: u32 = 22;
/// Environment variable overriding [`DEFAULT_MAX_K`].
pub const MAX_K_ENV: &str = "CRGEN_MAX_K";

/// Active ceiling on the key length.
pub fn max_key_bits() -> u32 {
    std::env::var(MAX_K_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_MAX_K)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub family: CodebookFamily,
    /// Exponent in Q(t) = 2^{−k}/4.
    pub k: u32,
    /// Output key length.
    pub key_bits: u32,
    pub n: usize,
    pub rho: f64,
    pub delta: f64,
    pub phi: f64,
    /// Alice's threshold.
    pub t: f64,
    /// Bob's threshold φ·t.
    pub s: f64,
    /// Message bits; the color field takes c + 1 bits.
    pub c: u32,
    pub zero_comm: bool,
    /// Alice's Hamming radius ⌊n/2 − t√n/2⌋ (binary families).
    pub r: Option<u32>,
    /// Bob's Hamming radius ⌊n/2 − φt√n/2⌋ (binary families).
    pub r_prime: Option<u32>,
    /// Set when t was lowered to √n so that r ≥ 0.
    pub t_capped: bool,
}

impl SchemeParams {
    /// Bits on the wire per run: c + 1 in one-way mode, none without communication.
    pub fn comm_bits(&self) -> u32 {
        if self.zero_comm {
            0
        } else {
            self.c + 1
        }
    }

    /// ⌈(1−φ²)(k+2)⌉.
    pub fn min_colors_bits(k: u32, phi: f64) -> u32 {
        ((1.0 - phi * phi) * f64::from(k + 2)).ceil().max(0.0) as u32
    }

    /// Replaces c, keeping the other fields.
    pub fn with_c(mut self, c: u32) -> Result<Self> {
        if self.zero_comm && c != 0 {
            return Err(domain!("zero-communication runs use c = 0"));
        }
        if c > self.key_bits {
            return Err(domain!("c = {c} exceeds key length {}", self.key_bits));
        }
        self.c = c;
        Ok(self)
    }
}

/// Derives every scalar of the scheme from (codebook, ρ, δ, mode).
///
/// In zero-communication mode φ is forced to 1, δ to √((1−ρ)/(1+ρ)) and c to 0.
pub fn derive_params(codebook: &Codebook, rho: f64, delta: f64, zero_comm: bool) -> Result<SchemeParams> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(domain!("rho must lie in [0, 1], got {rho}"));
    }
    let key_bits = codebook.key_bits();
    let limit = max_key_bits();
    if key_bits > limit {
        return Err(Error::ResourceLimit(format!(
            "key length {key_bits} exceeds the brute-force limit {limit} (set {MAX_K_ENV} to override)"
        )));
    }
    let max_delta = ((1.0 - rho) / (1.0 + rho)).sqrt();
    let delta = if zero_comm { max_delta } else { delta };
    if !(delta >= 0.0) || delta > max_delta * (1.0 + 1e-12) {
        return Err(domain!("delta {delta} outside [0, {max_delta}]"));
    }
    let phi = if zero_comm { 1.0 } else { (rho + delta * (1.0 - rho * rho).sqrt()).min(1.0) };
    let k = codebook.threshold_bits();
    let mut t = q_inverse((-f64::from(k)).exp2() / 4.0)?;
    let n = codebook.n();
    let c = if zero_comm { 0 } else { SchemeParams::min_colors_bits(k, phi).min(key_bits) };
    let (mut r, mut r_prime, mut t_capped) = (None, None, false);
    if codebook.is_binary() {
        let root = (n as f64).sqrt();
        if t > root {
            t = root;
            t_capped = true;
        }
        let half = n as f64 / 2.0;
        r = Some((half - t * root / 2.0).floor().max(0.0) as u32);
        r_prime = Some((half - phi * t * root / 2.0).floor().max(0.0) as u32);
    }
    Ok(SchemeParams {
        family: codebook.family(),
        k,
        key_bits,
        n,
        rho,
        delta,
        phi,
        t,
        s: phi * t,
        c,
        zero_comm,
        r,
        r_prime,
        t_capped,
    })
}

/// Alice's message: a color, or the auxiliary symbol ⋄.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Message {
    Color(u32),
    Diamond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliceOutput {
    pub key: u64,
    pub message: Message,
    pub fell_back: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobOutput {
    pub key: u64,
    pub fell_back: bool,
}

/// One run of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub alice_key: u64,
    pub bob_key: u64,
    pub key_bits: u32,
    pub message: Message,
    pub message_bits: u32,
    pub alice_fell_back: bool,
    pub bob_fell_back: bool,
    pub agreed: bool,
}

fn check_shapes(params: &SchemeParams, codebook: &Codebook, coloring: &Coloring, sample: &Samples) -> Result<()> {
    if sample.len() != codebook.n() || params.n != codebook.n() {
        return Err(domain!("sample dimension {} does not match n = {}", sample.len(), codebook.n()));
    }
    if sample.is_binary() != codebook.is_binary() {
        return Err(domain!("sample alphabet does not match the codebook family"));
    }
    if coloring.size() != codebook.size() {
        return Err(Error::Config(format!(
            "coloring covers {} codewords but the codebook has {}",
            coloring.size(),
            codebook.size()
        )));
    }
    Ok(())
}

/// Scans `indices` for a unique codeword passing the test; None if zero or
/// several pass.
#[inline]
fn unique_hit<I: Iterator<Item = usize>>(indices: I, mut pass: impl FnMut(usize) -> bool) -> Option<usize> {
    let mut found = None;
    for i in indices {
        if pass(i) {
            if found.is_some() {
                return None;
            }
            found = Some(i);
        }
    }
    found
}

fn scan<I: Iterator<Item = usize>>(codebook: &Codebook, sample: &Samples, indices: I, threshold: f64, radius: Option<u32>) -> Option<usize> {
    match sample {
        Samples::Real(x) => unique_hit(indices, |i| codebook.inner(i, x) > threshold),
        Samples::Binary(b) => {
            let r = radius.expect("binary parameters carry a radius");
            unique_hit(indices, |i| codebook.distance(i, b) <= r)
        }
    }
}

/// Alice: the unique codeword above threshold and its color, else κ_A(x) and ⋄.
pub fn alice_encode(params: &SchemeParams, codebook: &Codebook, coloring: &Coloring, x: &Samples) -> Result<AliceOutput> {
    check_shapes(params, codebook, coloring, x)?;
    match scan(codebook, x, 0..codebook.size(), params.t, params.r) {
        Some(i) => Ok(AliceOutput { key: i as u64, message: Message::Color(coloring.color(i)), fell_back: false }),
        None => Ok(AliceOutput { key: fallback_key(x, params.key_bits)?, message: Message::Diamond, fell_back: true }),
    }
}

/// Bob: the unique codeword of the received color above threshold s, else κ_B(y).
///
/// Without communication Bob scans the whole codebook whatever he receives.
pub fn bob_decode(params: &SchemeParams, codebook: &Codebook, coloring: &Coloring, y: &Samples, received: Message) -> Result<BobOutput> {
    check_shapes(params, codebook, coloring, y)?;
    let hit = match (received, params.zero_comm) {
        (_, true) => scan(codebook, y, 0..codebook.size(), params.s, params.r_prime),
        (Message::Diamond, false) => None,
        (Message::Color(tau), false) => {
            let class = coloring
                .class(tau)
                .ok_or_else(|| Error::Protocol(format!("color {tau} outside the {} colors in use", coloring.num_colors())))?;
            scan(codebook, y, class.iter().map(|&i| i as usize), params.s, params.r_prime)
        }
    };
    match hit {
        Some(i) => Ok(BobOutput { key: i as u64, fell_back: false }),
        None => Ok(BobOutput { key: fallback_key(y, params.key_bits)?, fell_back: true }),
    }
}

/// κ(x): sign bits of the first k coordinates, or the first k raw bits.
/// Bit i of the result is coordinate i.
pub fn fallback_key(x: &Samples, k: u32) -> Result<u64> {
    if k > 64 {
        return Err(domain!("fallback keys hold at most 64 bits, got {k}"));
    }
    if x.len() < k as usize {
        return Err(domain!("sample length {} shorter than key length {k}", x.len()));
    }
    Ok(match x {
        Samples::Binary(b) => b.prefix_u64(k as usize),
        Samples::Real(v) => v[..k as usize]
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &xi)| acc | (u64::from(xi > 0.0) << i)),
    })
}

/// Splits a key into its public c-bit prefix and secret (k−c)-bit suffix.
pub fn secret_key_split(key: u64, coloring: &Coloring, params: &SchemeParams) -> Result<(u64, u64)> {
    if !coloring.is_prefix_aligned() {
        return Err(Error::Config("secret-key split needs a prefix-aligned coloring".into()));
    }
    let c = coloring.c();
    let kb = params.key_bits;
    if c > kb {
        return Err(Error::Config(format!("coloring uses {c} bits but keys have {kb}")));
    }
    let suffix_bits = kb - c;
    let mask = if suffix_bits == 64 { u64::MAX } else { (1u64 << suffix_bits) - 1 };
    let prefix = if suffix_bits >= 64 { 0 } else { key >> suffix_bits };
    Ok((prefix, key & mask))
}

/// Pearson χ² statistic of the c-bit key prefixes against the uniform law.
pub fn prefix_uniformity(keys: &[u64], key_bits: u32, c: u32) -> Result<f64> {
    if c > key_bits || c > 24 {
        return Err(domain!("prefix length {c} invalid for {key_bits}-bit keys"));
    }
    if keys.is_empty() {
        return Err(Error::InsufficientData("no keys supplied".into()));
    }
    let bins = 1usize << c;
    let mut counts = vec![0u64; bins];
    for &k in keys {
        counts[(k >> (key_bits - c)) as usize & (bins - 1)] += 1;
    }
    let expect = keys.len() as f64 / bins as f64;
    Ok(counts.iter().map(|&o| (o as f64 - expect).powi(2) / expect).sum())
}

/// Alice encodes x, Bob decodes y given her message.
pub fn run_protocol(params: &SchemeParams, codebook: &Codebook, coloring: &Coloring, pair: &SamplePair) -> Result<RunOutcome> {
    let a = alice_encode(params, codebook, coloring, &pair.x)?;
    let b = bob_decode(params, codebook, coloring, &pair.y, a.message)?;
    Ok(RunOutcome {
        alice_key: a.key,
        bob_key: b.key,
        key_bits: params.key_bits,
        message: a.message,
        message_bits: params.comm_bits(),
        alice_fell_back: a.fell_back,
        bob_fell_back: b.fell_back,
        agreed: a.key == b.key,
    })
}

/// Q(t) as derived, for reporting.
pub fn threshold_tail(params: &SchemeParams) -> f64 {
    q_tail(params.t).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebooks::{balanced_coloring, basis_codebook, dual_bch_codebook, prefix_coloring};
    use crate::sources::CorrelationSource;

    fn basis_setup(k: u32, rho: f64, zero_comm: bool) -> (SchemeParams, Codebook, Coloring) {
        let cb = basis_codebook(k).unwrap();
        let p = derive_params(&cb, rho, 0.0, zero_comm).unwrap();
        let col = balanced_coloring(cb.size(), p.c, 3).unwrap();
        (p, cb, col)
    }

    #[test]
    fn params_relations() {
        let cb = basis_codebook(10).unwrap();
        let p = derive_params(&cb, 0.5, 0.0, false).unwrap();
        assert_eq!(p.phi, 0.5);
        assert_eq!(p.t, q_inverse(2f64.powi(-10) / 4.0).unwrap());
        assert!((q_tail(p.t).unwrap() / (2f64.powi(-10) / 4.0) - 1.0).abs() < 1e-8);
        assert_eq!(p.c, 9);
        let z = derive_params(&cb, 0.5, 0.0, true).unwrap();
        assert_eq!((z.phi, z.c, z.s), (1.0, 0, z.t));
        assert!((z.delta - (0.5_f64 / 1.5).sqrt()).abs() < 1e-15);
        assert!(derive_params(&cb, 0.5, 0.9, false).is_err());
        assert!(derive_params(&cb, 1.2, 0.0, false).is_err());
    }

    #[test]
    fn binary_radii() {
        let cb = dual_bch_codebook(7, 2, 4.0).unwrap();
        let p = derive_params(&cb, 0.8, 0.0, false).unwrap();
        assert!(!p.t_capped);
        let root = 127f64.sqrt();
        assert_eq!(p.r, Some((63.5 - p.t * root / 2.0).floor() as u32));
        assert_eq!(p.r_prime, Some((63.5 - 0.8 * p.t * root / 2.0).floor() as u32));
        assert!(p.r_prime >= p.r);
    }

    #[test]
    fn alice_examples() {
        let (p, cb, col) = basis_setup(4, 0.5, false);
        let mut x = vec![0.0; 16];
        x[3] = 2.0 * p.t;
        let a = alice_encode(&p, &cb, &col, &Samples::Real(x.clone())).unwrap();
        assert_eq!((a.key, a.fell_back), (3, false));
        assert_eq!(a.message, Message::Color(col.color(3)));
        let zero = alice_encode(&p, &cb, &col, &Samples::Real(vec![0.0; 16])).unwrap();
        assert!(zero.fell_back && zero.message == Message::Diamond);
        x[7] = 2.0 * p.t;
        assert!(alice_encode(&p, &cb, &col, &Samples::Real(x)).unwrap().fell_back);
        let mut tie = vec![0.0; 16];
        tie[2] = p.t;
        assert!(alice_encode(&p, &cb, &col, &Samples::Real(tie)).unwrap().fell_back);
    }

    #[test]
    fn bob_examples() {
        let (p, cb, col) = basis_setup(4, 0.5, false);
        let zero = Samples::Real(vec![0.0; 16]);
        let b = bob_decode(&p, &cb, &col, &zero, Message::Diamond).unwrap();
        assert_eq!((b.key, b.fell_back), (0, true));
        let mut y = vec![0.0; 16];
        y[5] = 2.0 * p.s;
        // Another codeword of a different color also exceeds s.
        let other = (0..16).find(|&i| col.color(i) != col.color(5)).unwrap();
        y[other] = 2.0 * p.s;
        let b = bob_decode(&p, &cb, &col, &Samples::Real(y), Message::Color(col.color(5))).unwrap();
        assert_eq!((b.key, b.fell_back), (5, false));
        assert!(matches!(
            bob_decode(&p, &cb, &col, &zero, Message::Color(1 << 20)),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn perfect_correlation_always_agrees() {
        let (p, cb, col) = basis_setup(6, 1.0, true);
        let src = CorrelationSource::bgs(1.0).unwrap();
        for stream in 0..200 {
            let pair = src.sample_stream(cb.n(), 11, stream).unwrap();
            assert!(run_protocol(&p, &cb, &col, &pair).unwrap().agreed);
        }
    }

    #[test]
    fn fallback_key_examples() {
        let x = Samples::Real(vec![0.3, 1.0, 2.0, 0.1, -1.0]);
        assert_eq!(fallback_key(&x, 4).unwrap(), 0b1111);
        assert_eq!(fallback_key(&x, 5).unwrap(), 0b01111);
        assert!(fallback_key(&x, 6).is_err());
        let b = Samples::Binary(crate::bits::BitVector::from_bits([true, false, true, true]));
        assert_eq!(fallback_key(&b, 3).unwrap(), 0b101);
    }

    #[test]
    fn secret_split_examples() {
        let cb = basis_codebook(8).unwrap();
        let p = derive_params(&cb, 0.5, 0.0, false).unwrap();
        let col = prefix_coloring(8, 3).unwrap();
        assert_eq!(secret_key_split(0b1011_0110, &col, &p).unwrap(), (0b101, 0b10110));
        let all = prefix_coloring(8, 0).unwrap();
        assert_eq!(secret_key_split(0xAB, &all, &p).unwrap(), (0, 0xAB));
        let none = prefix_coloring(8, 8).unwrap();
        assert_eq!(secret_key_split(0xAB, &none, &p).unwrap(), (0xAB, 0));
        let shuffled = balanced_coloring(256, 3, 1).unwrap();
        assert!(matches!(secret_key_split(1, &shuffled, &p), Err(Error::Config(_))));
    }

    #[test]
    fn prefix_of_aligned_color_matches_message() {
        let cb = basis_codebook(8).unwrap();
        let p = derive_params(&cb, 0.5, 0.0, false).unwrap().with_c(3).unwrap();
        let col = prefix_coloring(8, 3).unwrap();
        for i in [0usize, 37, 255] {
            let (prefix, _) = secret_key_split(i as u64, &col, &p).unwrap();
            assert_eq!(prefix, u64::from(col.color(i)));
        }
    }

    #[test]
    fn outcome_serializes() {
        let (p, cb, col) = basis_setup(4, 0.5, false);
        let pair = CorrelationSource::bgs(0.5).unwrap().sample(16, 1).unwrap();
        let out = run_protocol(&p, &cb, &col, &pair).unwrap();
        let json = serde_json::to_string(&out).unwrap();
        let back: RunOutcome = serde_json::from_str(&json).unwrap();
        assert_eq!(back, out);
        assert_eq!(out.agreed, out.alice_key == out.bob_key);
    }
}
