//! Seeded samplers for the correlated sources.
//!
//! Binary samples live in packed `{0,1}` storage; the ±1 view b ↦ 1 − 2b is
//! only applied when a correlation or projection is computed.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{domain, Result};
use crate::rng::{stream_rng, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Doubly symmetric binary source.
    Dsbs,
    /// Bivariate Gaussian source.
    Bgs,
    /// Gaussians obtained by normalized block sums of DSBS samples.
    DerivedGaussian,
}

/// A joint distribution on pairs together with its correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSource {
    kind: SourceKind,
    rho: f64,
    clt_block: usize,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_nan() || rho.abs() > 1.0 {
        return Err(domain!("correlation {rho} outside [-1, 1]"));
    }
    Ok(())
}

impl CorrelationSource {
    pub fn dsbs(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(CorrelationSource { kind: SourceKind::Dsbs, rho, clt_block: 1 })
    }

    pub fn bgs(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(CorrelationSource { kind: SourceKind::Bgs, rho, clt_block: 1 })
    }

    /// Gaussian outputs built from `clt_block` DSBS(rho) pairs each.
    pub fn derived_gaussian(rho: f64, clt_block: usize) -> Result<Self> {
        check_rho(rho)?;
        if clt_block < 1 {
            return Err(domain!("CLT block size must be at least 1"));
        }
        Ok(CorrelationSource { kind: SourceKind::DerivedGaussian, rho, clt_block })
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn clt_block(&self) -> usize {
        self.clt_block
    }

    pub fn is_binary(&self) -> bool {
        self.kind == SourceKind::Dsbs
    }

    /// An empty pair with the right sample domain for this source.
    pub fn empty_pair(&self, n: usize) -> SamplePair {
        if self.is_binary() {
            SamplePair {
                x: Samples::Binary(BitVector::zeros(n)),
                y: Samples::Binary(BitVector::zeros(n)),
            }
        } else {
            SamplePair {
                x: Samples::Real(vec![0.0; n]),
                y: Samples::Real(vec![0.0; n]),
            }
        }
    }

    /// Overwrite `pair` with `n` fresh i.i.d. pairs drawn from `rng`.
    pub fn fill<R: RngCore>(&self, rng: &mut R, n: usize, pair: &mut SamplePair) {
        let fresh = match (&pair.x, self.is_binary()) {
            (Samples::Binary(b), true) => b.len() != n,
            (Samples::Real(v), false) => v.len() != n,
            _ => true,
        };
        if fresh {
            *pair = self.empty_pair(n);
        }
        match (&mut pair.x, &mut pair.y) {
            (Samples::Binary(x), Samples::Binary(y)) => fill_dsbs(rng, self.rho, x, y),
            (Samples::Real(x), Samples::Real(y)) => match self.kind {
                SourceKind::Bgs => fill_bgs(rng, self.rho, x, y),
                _ => fill_derived(rng, self.rho, self.clt_block, x, y),
            },
            _ => unreachable!("pair domains are rebuilt above"),
        }
    }

    /// `n` pairs from stream `stream` of root seed `seed`.
    pub fn sample_stream(&self, n: usize, seed: u64, stream: u64) -> Result<SamplePair> {
        if n == 0 {
            return Err(domain!("sample length must be positive"));
        }
        let mut rng = stream_rng(seed, stream);
        let mut pair = self.empty_pair(n);
        self.fill(&mut rng, n, &mut pair);
        Ok(pair)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SamplePair> {
        self.sample_stream(n, seed, 0)
    }
}

/// One party's view of the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Samples {
    Binary(BitVector),
    Real(Vec<f64>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Binary(b) => b.len(),
            Samples::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Samples::Binary(_))
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match self {
            Samples::Real(v) => Some(v),
            Samples::Binary(_) => None,
        }
    }

    pub fn as_bits(&self) -> Option<&BitVector> {
        match self {
            Samples::Binary(b) => Some(b),
            Samples::Real(_) => None,
        }
    }
}

/// Alice's and Bob's halves of `n` i.i.d. draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub x: Samples,
    pub y: Samples,
}

impl SamplePair {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Empirical correlation: 1 − 2Δ/n for binary pairs (±1 view), Pearson
    /// correlation for real pairs.
    pub fn empirical_correlation(&self) -> f64 {
        match (&self.x, &self.y) {
            (Samples::Binary(x), Samples::Binary(y)) => {
                1.0 - 2.0 * f64::from(x.hamming(y)) / x.len() as f64
            }
            (Samples::Real(x), Samples::Real(y)) => pearson(x, y),
            _ => f64::NAN,
        }
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    sxy / (sxx * syy).sqrt()
}

/// Uniform double in [0, 1) with 53 random bits.
#[inline]
pub(crate) fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Bernoulli(p) that is exact at p = 0 and p = 1.
#[inline]
pub(crate) fn bernoulli<R: RngCore>(rng: &mut R, p: f64) -> bool {
    unit_f64(rng) < p
}

/// A word whose low `bits` positions are i.i.d. Bernoulli(p).
fn bernoulli_word<R: RngCore>(rng: &mut R, p: f64, bits: usize) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
    if p >= 1.0 {
        return mask;
    }
    if p == 0.5 {
        return rng.next_u64() & mask;
    }
    let mut w = 0u64;
    for i in 0..bits {
        if bernoulli(rng, p) {
            w |= 1 << i;
        }
    }
    w
}

fn fill_dsbs<R: RngCore>(rng: &mut R, rho: f64, x: &mut BitVector, y: &mut BitVector) {
    let n = x.len();
    let flip = (1.0 - rho) / 2.0;
    let words = x.words().len();
    for w in 0..words {
        let bits = if w + 1 == words && n % 64 != 0 { n % 64 } else { 64 };
        let xw = rng.next_u64();
        let fw = bernoulli_word(rng, flip, bits);
        x.words_mut()[w] = xw;
        y.words_mut()[w] = xw ^ fw;
    }
    x.clear_tail();
    y.clear_tail();
}

fn fill_bgs<R: RngCore>(rng: &mut R, rho: f64, x: &mut [f64], y: &mut [f64]) {
    let noise = (1.0 - rho * rho).max(0.0).sqrt();
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let a: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        *xi = a;
        *yi = rho * a + noise * z;
    }
}

fn fill_derived<R: RngCore>(rng: &mut R, rho: f64, m: usize, x: &mut [f64], y: &mut [f64]) {
    let flip = (1.0 - rho) / 2.0;
    let scale = 1.0 / (m as f64).sqrt();
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        // Σ(1 − 2b) over the block = m − 2·wt.
        let (mut wx, mut wy) = (0u32, 0u32);
        let mut left = m;
        while left > 0 {
            let bits = left.min(64);
            let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
            let xw = rng.next_u64() & mask;
            let fw = bernoulli_word(rng, flip, bits);
            wx += xw.count_ones();
            wy += (xw ^ fw).count_ones();
            left -= bits;
        }
        *xi = (m as f64 - 2.0 * f64::from(wx)) * scale;
        *yi = (m as f64 - 2.0 * f64::from(wy)) * scale;
    }
}

/// `n` DSBS(rho) pairs, stream 0 of `seed`.
pub fn sample_dsbs(rho: f64, n: usize, seed: u64) -> Result<SamplePair> {
    CorrelationSource::dsbs(rho)?.sample(n, seed)
}

/// `n` BGS(rho) pairs built as Y = ρX + √(1−ρ²)Z, stream 0 of `seed`.
pub fn sample_bgs(rho: f64, n: usize, seed: u64) -> Result<SamplePair> {
    CorrelationSource::bgs(rho)?.sample(n, seed)
}

/// Gaussian pairs from a DSBS source: each output coordinate is the ±1 sum
/// of `block` fresh DSBS pairs divided by √block.
pub fn derive_gaussian(src: &CorrelationSource, block: usize, n: usize, seed: u64) -> Result<SamplePair> {
    if src.kind() != SourceKind::Dsbs {
        return Err(domain!("derive_gaussian needs a DSBS source, got {:?}", src.kind()));
    }
    CorrelationSource::derived_gaussian(src.rho(), block)?.sample(n, seed)
}

/// Fill `out` with standard normals.
pub(crate) fn fill_normals(rng: &mut StreamRng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_one_copies_and_rho_minus_one_complements() {
        let p = sample_dsbs(1.0, 5, 11).unwrap();
        assert_eq!(p.x, p.y);
        let q = sample_dsbs(-1.0, 5, 11).unwrap();
        let (x, y) = (q.x.as_bits().unwrap(), q.y.as_bits().unwrap());
        assert_eq!(x.hamming(y), 5);
    }

    #[test]
    fn bgs_rho_one_is_identity() {
        let p = sample_bgs(1.0, 100, 3).unwrap();
        assert_eq!(p.x, p.y);
    }

    #[test]
    fn out_of_range_rho_is_rejected() {
        assert!(matches!(sample_dsbs(1.5, 4, 0), Err(crate::Error::Domain(_))));
        assert!(matches!(sample_bgs(-1.01, 4, 0), Err(crate::Error::Domain(_))));
        assert!(CorrelationSource::bgs(f64::NAN).is_err());
    }

    #[test]
    fn derive_needs_dsbs_and_positive_block() {
        let bgs = CorrelationSource::bgs(0.5).unwrap();
        assert!(derive_gaussian(&bgs, 4, 10, 0).is_err());
        let dsbs = CorrelationSource::dsbs(0.5).unwrap();
        assert!(derive_gaussian(&dsbs, 0, 10, 0).is_err());
    }

    #[test]
    fn derive_block_one_rho_one_is_pm_one_copy() {
        let dsbs = CorrelationSource::dsbs(1.0).unwrap();
        let p = derive_gaussian(&dsbs, 1, 50, 9).unwrap();
        assert_eq!(p.x, p.y);
        assert!(p.x.as_real().unwrap().iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn same_seed_same_pair() {
        for src in [
            CorrelationSource::dsbs(0.3).unwrap(),
            CorrelationSource::bgs(0.3).unwrap(),
            CorrelationSource::derived_gaussian(0.3, 17).unwrap(),
        ] {
            assert_eq!(src.sample(77, 5).unwrap(), src.sample(77, 5).unwrap());
            assert_ne!(src.sample_stream(77, 5, 1).unwrap(), src.sample(77, 5).unwrap());
        }
    }

    #[test]
    fn bernoulli_extremes_are_exact() {
        let mut rng = stream_rng(0, 0);
        assert!((0..1000).all(|_| !bernoulli(&mut rng, 0.0)));
        assert!((0..1000).all(|_| bernoulli(&mut rng, 1.0)));
    }
}
