//! Codeword families (standard basis, Tao characters, dual-BCH) and the
//! balanced coloring used to compress Alice's message.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{words_for, BitVector};
use crate::error::{domain, Error, Result};
use crate::gf2m::Gf2m;
use crate::rng::{stream_rng, subseed};
use crate::sources::Samples;

/// Largest key length for the standard basis codebook.
pub const BASIS_MAX_K: u32 = 24;
/// Largest number of stored scalars (f64 entries or u64 words) in a codebook.
pub const STORE_LIMIT: usize = 1 << 27;
/// Default subset factor for dual-BCH codebooks.
pub const DEFAULT_GAMMA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodebookFamily {
    #[serde(rename = "basis")]
    StandardBasis,
    #[serde(rename = "tao")]
    TaoCharacter,
    DualBch,
}

impl CodebookFamily {
    pub fn is_binary(self) -> bool {
        matches!(self, CodebookFamily::DualBch)
    }
}

/// Everything needed to rebuild a codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CodebookDescriptor {
    Basis { k: u32 },
    Tao { p: u64, d: u32, key_bits: u32 },
    DualBch { m: u32, d: u32, gamma: f64, key_bits: u32 },
}

impl CodebookDescriptor {
    pub fn build(&self) -> Result<Codebook> {
        match *self {
            CodebookDescriptor::Basis { k } => basis_codebook(k),
            CodebookDescriptor::Tao { p, d, key_bits } => tao_with_key_bits(p, d, key_bits),
            CodebookDescriptor::DualBch { m, d, gamma, key_bits } => {
                let mut cb = dual_bch_with_key_bits(m, d, key_bits)?;
                cb.descriptor = CodebookDescriptor::DualBch { m, d, gamma, key_bits };
                Ok(cb)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Store {
    Basis,
    Real(Vec<f64>),
    Binary { stride: usize, words: Vec<u64> },
}

/// 2^key_bits codewords in dimension n.
#[derive(Debug, Clone)]
pub struct Codebook {
    descriptor: CodebookDescriptor,
    family: CodebookFamily,
    n: usize,
    key_bits: u32,
    threshold_bits: u32,
    store: Store,
}

impl Codebook {
    pub fn family(&self) -> CodebookFamily {
        self.family
    }

    pub fn descriptor(&self) -> &CodebookDescriptor {
        &self.descriptor
    }

    /// Ambient dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Output key length; the codebook has exactly 2^key_bits codewords.
    pub fn key_bits(&self) -> u32 {
        self.key_bits
    }

    /// Exponent k in Q(t) = 2^{−k}/4. Equals `key_bits` except for dual-BCH,
    /// where it is d·m, the log-size of the full code.
    pub fn threshold_bits(&self) -> u32 {
        self.threshold_bits
    }

    pub fn size(&self) -> usize {
        1usize << self.key_bits
    }

    pub fn is_binary(&self) -> bool {
        self.family.is_binary()
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.size() {
            return Err(domain!("codeword index {index} out of range for {} codewords", self.size()));
        }
        Ok(())
    }

    /// ⟨v, x⟩ for Euclidean families.
    #[inline]
    pub fn inner(&self, index: usize, x: &[f64]) -> f64 {
        match &self.store {
            Store::Basis => x[index],
            Store::Real(v) => dot(&v[index * self.n..(index + 1) * self.n], x),
            Store::Binary { .. } => panic!("inner product requested from a binary codebook"),
        }
    }

    /// Δ(v, y) for binary families.
    #[inline]
    pub fn distance(&self, index: usize, y: &BitVector) -> u32 {
        match &self.store {
            Store::Binary { stride, words } => {
                crate::bits::hamming_words(&words[index * stride..(index + 1) * stride], y.words())
            }
            _ => panic!("Hamming distance requested from a Euclidean codebook"),
        }
    }

    /// ⟨v, x⟩ for Euclidean families, Δ(v, x) for binary ones.
    pub fn correlate(&self, index: usize, sample: &Samples) -> Result<f64> {
        self.check_index(index)?;
        if sample.len() != self.n {
            return Err(domain!("sample dimension {} does not match codebook dimension {}", sample.len(), self.n));
        }
        match (sample, self.is_binary()) {
            (Samples::Real(x), false) => Ok(self.inner(index, x)),
            (Samples::Binary(b), true) => Ok(f64::from(self.distance(index, b))),
            (Samples::Real(_), true) => Err(domain!("binary codebook needs binary samples")),
            (Samples::Binary(_), false) => Err(domain!("Euclidean codebook needs real samples")),
        }
    }

    /// The codeword with the given index.
    pub fn codeword(&self, index: usize) -> Result<Samples> {
        self.check_index(index)?;
        Ok(match &self.store {
            Store::Basis => {
                let mut v = vec![0.0; self.n];
                v[index] = 1.0;
                Samples::Real(v)
            }
            Store::Real(v) => Samples::Real(v[index * self.n..(index + 1) * self.n].to_vec()),
            Store::Binary { stride, words } => {
                Samples::Binary(BitVector::from_words(self.n, words[index * stride..(index + 1) * stride].to_vec()))
            }
        })
    }

    /// Index of the codeword equal to `word`, if any.
    pub fn locate(&self, word: &Samples) -> Option<usize> {
        if word.len() != self.n {
            return None;
        }
        match (&self.store, word) {
            (Store::Basis, Samples::Real(x)) => {
                let i = x.iter().position(|&v| v == 1.0)?;
                x.iter().enumerate().all(|(j, &v)| j == i || v == 0.0).then_some(i)
            }
            (Store::Real(v), Samples::Real(x)) => v.chunks_exact(self.n).position(|c| c == x.as_slice()),
            (Store::Binary { stride, words }, Samples::Binary(b)) => {
                words.chunks_exact(*stride).position(|c| c == b.words())
            }
            _ => None,
        }
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0; 4];
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Four dot products against a shared right-hand side.
#[inline]
fn dot4(a: [&[f64]; 4], b: &[f64]) -> [f64; 4] {
    const W: usize = 4;
    let mut acc = [[0.0; W]; 4];
    let chunks = b.chunks_exact(W);
    let tail = chunks.remainder().len();
    let [r0, r1, r2, r3] = a.map(|r| r.chunks_exact(W));
    for ((((y, x0), x1), x2), x3) in chunks.zip(r0).zip(r1).zip(r2).zip(r3) {
        for l in 0..W {
            acc[0][l] += x0[l] * y[l];
            acc[1][l] += x1[l] * y[l];
            acc[2][l] += x2[l] * y[l];
            acc[3][l] += x3[l] * y[l];
        }
    }
    let mut out = [0.0; 4];
    for r in 0..4 {
        out[r] = (acc[r][0] + acc[r][1]) + (acc[r][2] + acc[r][3]);
        for k in b.len() - tail..b.len() {
            out[r] += a[r][k] * b[k];
        }
    }
    out
}

/// The 2^k standard basis vectors of R^{2^k}.
pub fn basis_codebook(k: u32) -> Result<Codebook> {
    if k == 0 {
        return Err(domain!("key length must be positive"));
    }
    if k > BASIS_MAX_K {
        return Err(Error::ResourceLimit(format!("basis codebook limited to k <= {BASIS_MAX_K}, got {k}")));
    }
    Ok(Codebook {
        descriptor: CodebookDescriptor::Basis { k },
        family: CodebookFamily::StandardBasis,
        n: 1 << k,
        key_bits: k,
        threshold_bits: k,
        store: Store::Basis,
    })
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut q = 2;
    while q * q <= p {
        if p % q == 0 {
            return false;
        }
        q += 1;
    }
    true
}

/// The full character family {v_a : a ∈ F_p^d}, realized in R^{2p}.
#[derive(Debug, Clone)]
pub struct TaoFamily {
    p: u64,
    d: u32,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TaoFamily {
    pub fn new(p: u64, d: u32) -> Result<Self> {
        if !is_prime(p) {
            return Err(domain!("p = {p} is not prime"));
        }
        if d == 0 || u64::from(d) >= p {
            return Err(domain!("degree d = {d} must satisfy 1 <= d < p = {p}"));
        }
        let scale = 1.0 / (p as f64).sqrt();
        let angle = |j: u64| 2.0 * std::f64::consts::PI * j as f64 / p as f64;
        Ok(TaoFamily {
            p,
            d,
            cos: (0..p).map(|j| angle(j).cos() * scale).collect(),
            sin: (0..p).map(|j| angle(j).sin() * scale).collect(),
        })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// p^d, or None on overflow.
    pub fn size(&self) -> Option<u64> {
        self.p.checked_pow(self.d)
    }

    /// Dimension 2p of the real realization.
    pub fn n(&self) -> usize {
        2 * self.p as usize
    }

    /// Coefficients (a_1, …, a_d): base-p digits of the index, a_1 least significant.
    pub fn coefficients(&self, mut index: u64) -> Vec<u64> {
        (0..self.d)
            .map(|_| {
                let a = index % self.p;
                index /= self.p;
                a
            })
            .collect()
    }

    /// Exponents f_a(x) = Σ a_j x^j mod p for x ∈ F_p.
    pub fn exponents(&self, index: u64) -> Vec<u64> {
        let coeffs = self.coefficients(index);
        (0..self.p)
            .map(|x| {
                // Horner: ((a_d x + a_{d−1}) x + ⋯ + a_1) x.
                coeffs.iter().rev().fold(0, |acc, &a| (acc + a) * x % self.p)
            })
            .collect()
    }

    /// Writes [Re v_a ; Im v_a] into `out` (length 2p).
    pub fn write_codeword(&self, index: u64, out: &mut [f64]) {
        let p = self.p as usize;
        for (x, e) in self.exponents(index).into_iter().enumerate() {
            out[x] = self.cos[e as usize];
            out[p + x] = self.sin[e as usize];
        }
    }

    pub fn codeword(&self, index: u64) -> Vec<f64> {
        let mut v = vec![0.0; self.n()];
        self.write_codeword(index, &mut v);
        v
    }

    /// All codewords, row-major.
    pub fn materialize(&self, count: u64) -> Result<Vec<f64>> {
        let n = self.n();
        if (count as usize).saturating_mul(n) > STORE_LIMIT {
            return Err(Error::ResourceLimit(format!("{count} codewords of dimension {n} exceed the storage limit")));
        }
        let mut v = vec![0.0; count as usize * n];
        for (i, row) in v.chunks_exact_mut(n).enumerate() {
            self.write_codeword(i as u64, row);
        }
        Ok(v)
    }

    /// max |⟨v_a, v_b⟩| over all distinct pairs, by brute force over the
    /// realized vectors.
    pub fn max_pairwise_inner(&self) -> Result<f64> {
        let size = self.size().ok_or_else(|| Error::ResourceLimit("p^d overflows".into()))?;
        let n = self.n();
        let v = self.materialize(size)?;
        let rows: Vec<&[f64]> = v.chunks_exact(n).collect();
        let last = rows.len() - 1;
        let worst = (0..rows.len())
            .into_par_iter()
            .step_by(4)
            .map(|i| {
                let block = [0, 1, 2, 3].map(|r| rows[(i + r).min(last)]);
                let mut worst = 0.0_f64;
                for (j, b) in rows.iter().enumerate().skip(i + 1) {
                    for (r, d) in dot4(block, b).iter().enumerate() {
                        if i + r < j {
                            worst = worst.max(d.abs());
                        }
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max);
        Ok(worst)
    }
}

/// Tao character codebook with 2^{⌊d·log₂ p⌋} codewords.
pub fn tao_codebook(p: u64, d: u32) -> Result<Codebook> {
    let fam = TaoFamily::new(p, d)?;
    let bits = (f64::from(d) * (p as f64).log2()).floor() as u32;
    tao_from_family(fam, bits)
}

/// Tao character codebook restricted to the first 2^key_bits indices.
pub fn tao_with_key_bits(p: u64, d: u32, key_bits: u32) -> Result<Codebook> {
    tao_from_family(TaoFamily::new(p, d)?, key_bits)
}

fn tao_from_family(fam: TaoFamily, key_bits: u32) -> Result<Codebook> {
    if key_bits == 0 || key_bits >= 63 {
        return Err(domain!("key length {key_bits} out of range"));
    }
    let full = fam.size().unwrap_or(u64::MAX);
    if (1u64 << key_bits) > full {
        return Err(domain!("2^{key_bits} exceeds the family size p^d = {full}"));
    }
    let store = fam.materialize(1u64 << key_bits)?;
    Ok(Codebook {
        descriptor: CodebookDescriptor::Tao { p: fam.p, d: fam.d, key_bits },
        family: CodebookFamily::TaoCharacter,
        n: fam.n(),
        key_bits,
        threshold_bits: key_bits,
        store: Store::Real(store),
    })
}

/// The full dual-BCH code: trace evaluations of a_1x + a_2x³ + ⋯ + a_d x^{2d−1}
/// at every x ∈ GF(2^m)^*, coordinate i holding x = α^i.
#[derive(Debug, Clone)]
pub struct DualBchFamily {
    field: Gf2m,
    d: u32,
    n: usize,
    generators: Vec<BitVector>,
}

impl DualBchFamily {
    pub fn new(m: u32, d: u32) -> Result<Self> {
        let field = Gf2m::new(m)?;
        if d == 0 {
            return Err(domain!("dual-BCH degree parameter d must be positive"));
        }
        if u64::from(d) * u64::from(m) > 62 {
            return Err(Error::ResourceLimit(format!("d*m = {} exceeds 62 index bits", d * m)));
        }
        let n = field.order() as usize;
        let mut generators = Vec::with_capacity((d * m) as usize);
        for j in 1..=d {
            let e = u64::from(2 * j - 1);
            for b in 0..m {
                let coeff = 1u32 << b;
                let bits = (0..n).map(|i| field.trace(field.mul(coeff, field.alpha_pow(i as u64 * e))) == 1);
                generators.push(BitVector::from_bits(bits));
            }
        }
        Ok(DualBchFamily { field, d, n, generators })
    }

    pub fn m(&self) -> u32 {
        self.field.degree()
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Block length 2^m − 1.
    pub fn n(&self) -> usize {
        self.n
    }

    /// log₂ of the code size, d·m.
    pub fn full_bits(&self) -> u32 {
        self.d * self.m()
    }

    /// Coefficients (a_1, …, a_d): index bits [(j−1)m, jm) hold a_j.
    pub fn coefficients(&self, index: u64) -> Vec<u32> {
        let m = self.m();
        (0..self.d).map(|j| ((index >> (j * m)) & ((1 << m) - 1)) as u32).collect()
    }

    /// Codeword by XOR of generator rows.
    pub fn codeword(&self, index: u64) -> BitVector {
        let mut out = BitVector::zeros(self.n);
        for (b, g) in self.generators.iter().enumerate() {
            if index >> b & 1 == 1 {
                for (w, gw) in out.words_mut().iter_mut().zip(g.words()) {
                    *w ^= gw;
                }
            }
        }
        out
    }

    /// Codeword by evaluating the trace polynomial at every point.
    pub fn codeword_direct(&self, index: u64) -> BitVector {
        let f = &self.field;
        let coeffs = self.coefficients(index);
        BitVector::from_bits((0..self.n).map(|i| {
            let x = f.alpha_pow(i as u64);
            let x2 = f.mul(x, x);
            let mut pw = x;
            let mut acc = 0;
            for &a in &coeffs {
                acc ^= f.mul(a, pw);
                pw = f.mul(pw, x2);
            }
            f.trace(acc) == 1
        }))
    }

    /// First `count` codewords packed row-major, built incrementally.
    fn materialize(&self, count: u64) -> Result<(usize, Vec<u64>)> {
        let stride = words_for(self.n);
        if (count as usize).saturating_mul(stride) > STORE_LIMIT {
            return Err(Error::ResourceLimit(format!("{count} codewords of length {} exceed the storage limit", self.n)));
        }
        let mut words = vec![0u64; count as usize * stride];
        for idx in 1..count as usize {
            let low = idx.trailing_zeros() as usize;
            let prev = idx & (idx - 1);
            let (head, tail) = words.split_at_mut(idx * stride);
            let dst = &mut tail[..stride];
            dst.copy_from_slice(&head[prev * stride..(prev + 1) * stride]);
            for (w, g) in dst.iter_mut().zip(self.generators[low].words()) {
                *w ^= g;
            }
        }
        Ok((stride, words))
    }

    /// max |Δ(u, v) − n/2| over distinct codewords, by brute force.
    pub fn max_distance_bias(&self) -> Result<f64> {
        let size = 1u64 << self.full_bits();
        let (stride, words) = self.materialize(size)?;
        let rows: Vec<&[u64]> = words.chunks_exact(stride).collect();
        let half = self.n as f64 / 2.0;
        let mut worst = 0.0_f64;
        for i in 0..rows.len() {
            for b in &rows[i + 1..] {
                let dist = crate::bits::hamming_words(rows[i], b);
                worst = worst.max((f64::from(dist) - half).abs());
            }
        }
        Ok(worst)
    }

    /// Checks direct(a) ⊕ direct(b) = direct(a ⊕ b) for every pair, and that
    /// the generator construction matches direct evaluation.
    pub fn check_linearity(&self) -> bool {
        let size = 1u64 << self.full_bits();
        let direct: Vec<BitVector> = (0..size).map(|i| self.codeword_direct(i)).collect();
        for a in 0..size {
            if direct[a as usize] != self.codeword(a) {
                return false;
            }
            for b in a + 1..size {
                if direct[a as usize].xor(&direct[b as usize]) != direct[(a ^ b) as usize] {
                    return false;
                }
            }
        }
        true
    }
}

/// Dual-BCH codebook of 2^{k′} codewords, k′ = ⌊d·m − log₂(γ·n)⌋.
pub fn dual_bch_codebook(m: u32, d: u32, gamma: f64) -> Result<Codebook> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(domain!("gamma must be positive, got {gamma}"));
    }
    let fam = DualBchFamily::new(m, d)?;
    let kp = (f64::from(fam.full_bits()) - (gamma * fam.n as f64).log2()).floor();
    if kp < 1.0 {
        return Err(domain!("subset size 2^{kp} is empty for m={m}, d={d}, gamma={gamma}; increase d"));
    }
    let mut cb = dual_bch_from_family(fam, kp as u32)?;
    cb.descriptor = CodebookDescriptor::DualBch { m, d, gamma, key_bits: kp as u32 };
    Ok(cb)
}

/// Dual-BCH codebook with an explicit key length.
pub fn dual_bch_with_key_bits(m: u32, d: u32, key_bits: u32) -> Result<Codebook> {
    dual_bch_from_family(DualBchFamily::new(m, d)?, key_bits)
}

fn dual_bch_from_family(fam: DualBchFamily, key_bits: u32) -> Result<Codebook> {
    if key_bits == 0 || key_bits > fam.full_bits() {
        return Err(domain!("key length {key_bits} outside [1, {}]", fam.full_bits()));
    }
    let (stride, words) = fam.materialize(1u64 << key_bits)?;
    let gamma = (1u64 << (fam.full_bits() - key_bits)) as f64 / fam.n as f64;
    Ok(Codebook {
        descriptor: CodebookDescriptor::DualBch { m: fam.m(), d: fam.d, gamma, key_bits },
        family: CodebookFamily::DualBch,
        n: fam.n,
        key_bits,
        threshold_bits: fam.full_bits(),
        store: Store::Binary { stride, words },
    })
}

/// Partition of codeword indices into 2^c balanced color classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    c: u32,
    color_of: Vec<u32>,
    classes: Vec<Vec<u32>>,
    prefix_aligned: bool,
}

impl Coloring {
    pub fn c(&self) -> u32 {
        self.c
    }

    pub fn num_colors(&self) -> usize {
        self.classes.len()
    }

    /// Number of colored codewords.
    pub fn size(&self) -> usize {
        self.color_of.len()
    }

    #[inline]
    pub fn color(&self, index: usize) -> u32 {
        self.color_of[index]
    }

    pub fn class(&self, color: u32) -> Option<&[u32]> {
        self.classes.get(color as usize).map(Vec::as_slice)
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }

    /// |C|·2^{−c} + 1.
    pub fn class_bound(&self) -> f64 {
        self.size() as f64 / self.num_colors() as f64 + 1.0
    }

    /// True when every class shares the top c bits of its indices.
    pub fn is_prefix_aligned(&self) -> bool {
        self.prefix_aligned
    }
}

fn classes_from(color_of: &[u32], colors: usize) -> Vec<Vec<u32>> {
    let mut classes = vec![Vec::new(); colors];
    for (i, &c) in color_of.iter().enumerate() {
        classes[c as usize].push(i as u32);
    }
    classes
}

/// Seeded permutation of the indices dealt round-robin into 2^c colors.
pub fn balanced_coloring(size: usize, c: u32, seed: u64) -> Result<Coloring> {
    if size == 0 {
        return Err(domain!("cannot color an empty codebook"));
    }
    if c >= usize::BITS || (1usize << c) > size {
        return Err(domain!("2^{c} colors exceed the codebook size {size}"));
    }
    let colors = 1usize << c;
    let mut order: Vec<u32> = (0..size as u32).collect();
    let mut rng = stream_rng(subseed(seed, "coloring"), 0);
    order.shuffle(&mut rng);
    let mut color_of = vec![0u32; size];
    for (pos, &idx) in order.iter().enumerate() {
        color_of[idx as usize] = (pos % colors) as u32;
    }
    let classes = classes_from(&color_of, colors);
    Ok(Coloring { c, color_of, classes, prefix_aligned: false })
}

/// Coloring by the top c bits of the k-bit index, so each class shares a
/// common key prefix.
pub fn prefix_coloring(key_bits: u32, c: u32) -> Result<Coloring> {
    if c > key_bits {
        return Err(domain!("c = {c} exceeds key length {key_bits}"));
    }
    if key_bits >= usize::BITS {
        return Err(domain!("key length {key_bits} too large"));
    }
    let size = 1usize << key_bits;
    let shift = key_bits - c;
    let color_of: Vec<u32> = (0..size).map(|i| (i >> shift) as u32).collect();
    let classes = classes_from(&color_of, 1 << c);
    Ok(Coloring { c, color_of, classes, prefix_aligned: true })
}
