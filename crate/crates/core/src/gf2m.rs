//! Arithmetic in GF(2^m) for 2 ≤ m ≤ 20 in the polynomial basis.
//!
//! Elements are integers whose bit j is the coefficient of x^j. The field is
//! built from a fixed primitive polynomial, so x itself generates the
//! multiplicative group.

use crate::error::{Error, Result};

/// Smallest supported extension degree.
pub const MIN_DEGREE: u32 = 2;
/// Largest supported extension degree.
pub const MAX_DEGREE: u32 = 20;
/// Above this degree multiplication falls back to carry-less arithmetic.
const TABLE_LIMIT: u32 = 16;

/// Primitive polynomial for GF(2^m) including the x^m term.
pub fn primitive_polynomial(m: u32) -> Option<u32> {
    Some(match m {
        2 => 0x7,
        3 => 0xB,
        4 => 0x13,
        5 => 0x25,
        6 => 0x43,
        7 => 0x83,
        8 => 0x11D,
        9 => 0x211,
        10 => 0x409,
        11 => 0x805,
        12 => 0x1053,
        13 => 0x201B,
        14 => 0x4443,
        15 => 0x8003,
        16 => 0x1100B,
        17 => 0x20009,
        18 => 0x40081,
        19 => 0x80027,
        20 => 0x100009,
        _ => return None,
    })
}

#[derive(Debug, Clone)]
pub struct Gf2m {
    m: u32,
    poly: u32,
    order: u32,
    trace_mask: u32,
    exp: Vec<u32>,
    log: Vec<u32>,
}

impl Gf2m {
    pub fn new(m: u32) -> Result<Self> {
        let poly = primitive_polynomial(m).ok_or_else(|| {
            Error::Config(format!("no primitive polynomial for GF(2^{m}); supported degrees are {MIN_DEGREE}..={MAX_DEGREE}"))
        })?;
        let order = (1u32 << m) - 1;
        let mut field = Gf2m { m, poly, order, trace_mask: 0, exp: Vec::new(), log: Vec::new() };
        if m <= TABLE_LIMIT {
            let mut exp = Vec::with_capacity(order as usize);
            let mut log = vec![0u32; 1 << m];
            let mut e = 1u32;
            for i in 0..order {
                exp.push(e);
                log[e as usize] = i;
                e = field.times_x(e);
            }
            field.exp = exp;
            field.log = log;
        }
        let mut mask = 0;
        for j in 0..m {
            if field.trace_slow(1 << j) == 1 {
                mask |= 1 << j;
            }
        }
        field.trace_mask = mask;
        Ok(field)
    }

    pub fn degree(&self) -> u32 {
        self.m
    }

    pub fn polynomial(&self) -> u32 {
        self.poly
    }

    /// Size of the multiplicative group, 2^m − 1.
    pub fn order(&self) -> u32 {
        self.order
    }

    #[inline]
    fn times_x(&self, a: u32) -> u32 {
        let s = a << 1;
        if s >> self.m & 1 == 1 {
            s ^ self.poly
        } else {
            s
        }
    }

    fn clmul_reduce(&self, a: u32, b: u32) -> u32 {
        let mut acc: u64 = 0;
        let (a, mut b) = (u64::from(a), b);
        let mut shift = 0;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a << shift;
            }
            b >>= 1;
            shift += 1;
        }
        let poly = u64::from(self.poly);
        for bit in (self.m..2 * self.m).rev() {
            if acc >> bit & 1 == 1 {
                acc ^= poly << (bit - self.m);
            }
        }
        acc as u32
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            return 0;
        }
        if self.exp.is_empty() {
            return self.clmul_reduce(a, b);
        }
        let s = self.log[a as usize] + self.log[b as usize];
        let s = if s >= self.order { s - self.order } else { s };
        self.exp[s as usize]
    }

    pub fn pow(&self, a: u32, mut e: u64) -> u32 {
        let mut base = a;
        let mut acc = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// α^i for the generator α = x.
    pub fn alpha_pow(&self, i: u64) -> u32 {
        let i = (i % u64::from(self.order)) as usize;
        if self.exp.is_empty() {
            self.pow(2, i as u64)
        } else {
            self.exp[i]
        }
    }

    fn trace_slow(&self, a: u32) -> u32 {
        let mut acc = 0;
        let mut cur = a;
        for _ in 0..self.m {
            acc ^= cur;
            cur = self.mul(cur, cur);
        }
        debug_assert!(acc <= 1);
        acc
    }

    /// Absolute trace Tr(a) = a + a² + ⋯ + a^{2^{m−1}} ∈ {0, 1}.
    #[inline]
    pub fn trace(&self, a: u32) -> u32 {
        (a & self.trace_mask).count_ones() & 1
    }

    /// Multiplicative order of a nonzero element.
    pub fn element_order(&self, a: u32) -> u64 {
        let n = u64::from(self.order);
        let mut ord = n;
        for q in prime_factors(n) {
            while ord % q == 0 && self.pow(a, ord / q) == 1 {
                ord /= q;
            }
        }
        ord
    }
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}
