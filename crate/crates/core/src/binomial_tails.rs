//! Hamming-weight tail machinery for correlated binary strings: entropy,
//! binomial tails (exact and log-space), the joint weight distribution of a
//! DSBS pair, the hypergeometric ratio ψ(a), and biased point masses.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gaussian_tails::{q_inverse, q_tail};

/// Largest n accepted by [`binomial_cdf_exact`].
pub const EXACT_CDF_MAX_N: u32 = 64;
/// Largest n accepted by [`correlated_weight_pmf`].
pub const WEIGHT_PMF_MAX_N: usize = 24;

/// h(x) = −x log₂ x − (1−x) log₂(1−x).
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain!("binary entropy needs x in [0, 1], got {x}"));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-(x * x.log2() + (1.0 - x) * (1.0 - x).log2()))
}

/// C(n, k) as an exact integer, valid for n ≤ 128.
pub fn choose_exact(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc·(n−i) is divisible by (i+1) after the multiplication.
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// ln C(n, k) via log-gamma; −∞ when k > n.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    let (n, k) = (n as f64, k as f64);
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain!("probability {p} outside [0, 1]"));
    }
    Ok(())
}

/// Pr[Bin(n, p) ≤ r] for n ≤ 64 using exact integer binomials and
/// compensated summation.
pub fn binomial_cdf_exact(n: u32, p: f64, r: u32) -> Result<f64> {
    check_prob(p)?;
    if n > EXACT_CDF_MAX_N {
        return Err(domain!("exact binomial cdf supports n <= {EXACT_CDF_MAX_N}, got {n}"));
    }
    if r > n {
        return Err(domain!("r = {r} exceeds n = {n}"));
    }
    if r == n {
        return Ok(1.0);
    }
    let q = 1.0 - p;
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for i in 0..=r {
        let term = choose_exact(n, i) as f64 * p.powi(i as i32) * q.powi((n - i) as i32);
        let y = term - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    Ok(sum.min(1.0))
}

/// ln Pr[Bin(n, p) = i].
pub fn binomial_ln_pmf(n: u64, p: f64, i: u64) -> Result<f64> {
    check_prob(p)?;
    if i > n {
        return Ok(f64::NEG_INFINITY);
    }
    let lp = |x: f64, e: u64| if e == 0 { 0.0 } else { e as f64 * x.ln() };
    Ok(ln_choose(n, i) + lp(p, i) + lp(1.0 - p, n - i))
}

/// Pr[Bin(n, p) ≤ r] for any n, summed in log space.
pub fn binomial_cdf(n: u64, p: f64, r: u64) -> Result<f64> {
    check_prob(p)?;
    if r >= n {
        return Ok(1.0);
    }
    let terms: Vec<f64> = (0..=r).map(|i| binomial_ln_pmf(n, p, i)).collect::<Result<_>>()?;
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let s: f64 = terms.iter().map(|&l| (l - peak).exp()).sum();
    Ok((peak + s.ln()).exp().min(1.0))
}

/// Pr[wt(X) ≤ ⌊n/2 − u√n/2⌋] for X uniform on {0,1}^n, or 0 when the
/// radius is negative.
pub fn hamming_ball_tail(n: u64, u: f64) -> Result<f64> {
    let radius = (n as f64 / 2.0 - u * (n as f64).sqrt() / 2.0).floor();
    if radius < 0.0 {
        return Ok(0.0);
    }
    binomial_cdf(n, 0.5, radius as u64)
}

/// Joint law of (wt(X), wt(Y)) for (X, Y) ∼ DSBS(ρ)^{⊗n}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    n: usize,
    probs: Vec<f64>,
}

impl WeightTable {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Pr[wt(X) = r2, wt(Y) = r3].
    pub fn get(&self, r2: usize, r3: usize) -> f64 {
        if r2 > self.n || r3 > self.n {
            return 0.0;
        }
        self.probs[r2 * (self.n + 1) + r3]
    }

    /// Pr[wt(X) = r2].
    pub fn row_sum(&self, r2: usize) -> f64 {
        (0..=self.n).map(|r3| self.get(r2, r3)).sum()
    }

    /// Pr[wt(Y) = r3].
    pub fn col_sum(&self, r3: usize) -> f64 {
        (0..=self.n).map(|r2| self.get(r2, r3)).sum()
    }

    /// Pr[wt(Y) ≤ r_y | wt(X) ≤ r_x].
    pub fn conditional_ball(&self, r_x: usize, r_y: usize) -> f64 {
        let (mut joint, mut marg) = (0.0, 0.0);
        for a in 0..=r_x.min(self.n) {
            for b in 0..=self.n {
                let p = self.get(a, b);
                marg += p;
                if b <= r_y {
                    joint += p;
                }
            }
        }
        if marg == 0.0 {
            0.0
        } else {
            joint / marg
        }
    }
}

/// Exact joint weight distribution by dynamic programming over coordinates.
pub fn correlated_weight_pmf(n: usize, rho: f64) -> Result<WeightTable> {
    if rho.is_nan() || rho.abs() > 1.0 {
        return Err(domain!("correlation {rho} outside [-1, 1]"));
    }
    if n > WEIGHT_PMF_MAX_N {
        return Err(Error::ResourceLimit(format!(
            "correlated weight pmf supports n <= {WEIGHT_PMF_MAX_N}, got {n}"
        )));
    }
    let same = (1.0 + rho) / 4.0;
    let diff = (1.0 - rho) / 4.0;
    let w = n + 1;
    let mut cur = vec![0.0; w * w];
    cur[0] = 1.0;
    for step in 0..n {
        let mut next = vec![0.0; w * w];
        for a in 0..=step {
            for b in 0..=step {
                let p = cur[a * w + b];
                if p == 0.0 {
                    continue;
                }
                next[a * w + b] += same * p;
                next[(a + 1) * w + b + 1] += same * p;
                next[(a + 1) * w + b] += diff * p;
                next[a * w + b + 1] += diff * p;
            }
        }
        cur = next;
    }
    Ok(WeightTable { n, probs: cur })
}

/// Integer configuration for ψ(a), rounded once at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiParams {
    pub n: u64,
    pub theta: f64,
    pub t: f64,
    pub t2: f64,
    /// ⌊n(1+θ)/2⌋.
    pub n1: u64,
    /// n − n1.
    pub n2: u64,
    /// ⌊n/2 − t₂√n/2⌋.
    pub w: u64,
    /// ⌊n(1+θ)/4 − (t+t₂)√n/4⌋.
    pub a_max: u64,
}

impl PsiParams {
    pub fn new(n: u64, theta: f64, t: f64, t2: f64) -> Result<Self> {
        if n == 0 {
            return Err(domain!("n must be positive"));
        }
        if !(0.0..1.0).contains(&theta) {
            return Err(domain!("theta must lie in [0, 1), got {theta}"));
        }
        if !(t >= 0.0 && t2 >= 0.0 && t.is_finite() && t2.is_finite()) {
            return Err(domain!("t and t2 must be finite and nonnegative"));
        }
        let nf = n as f64;
        let root = nf.sqrt();
        let n1 = (nf * (1.0 + theta) / 2.0).floor() as u64;
        let w_real = nf / 2.0 - t2 * root / 2.0;
        let a_real = nf * (1.0 + theta) / 4.0 - (t + t2) * root / 4.0;
        if w_real < 0.0 || a_real < 0.0 {
            return Err(domain!("a_max = {a_real:.4} is negative for n={n}, theta={theta}, t={t}, t2={t2}"));
        }
        Ok(PsiParams {
            n,
            theta,
            t,
            t2,
            n1,
            n2: n - n1,
            w: w_real.floor() as u64,
            a_max: a_real.floor() as u64,
        })
    }

    /// θ·t₂ ≤ t, where the ratio is maximized at or beyond a_max.
    pub fn in_monotone_regime(&self) -> bool {
        self.theta * self.t2 <= self.t
    }
}

/// ψ(a) = C(n1, a)·C(n2, w − a) / C(n, w).
pub fn psi(params: &PsiParams, a: u64) -> Result<f64> {
    if a > params.a_max {
        return Err(domain!("a = {a} outside [0, {}]", params.a_max));
    }
    if a > params.w || params.w - a > params.n2 || a > params.n1 {
        return Ok(0.0);
    }
    let ln = ln_choose(params.n1, a) + ln_choose(params.n2, params.w - a) - ln_choose(params.n, params.w);
    Ok(ln.exp())
}

/// Closed-form lower bound and exact value of Pr[Bin(m, ε) = ℓ], ℓ = round((ε+α)m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasedPointMass {
    pub ell: u64,
    pub lower_bound: f64,
    pub exact: f64,
}

pub fn biased_point_mass_lb(m: u64, eps: f64, alpha: f64, constant: f64) -> Result<BiasedPointMass> {
    if m == 0 {
        return Err(domain!("m must be positive"));
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(domain!("eps must lie in (0, 0.5], got {eps}"));
    }
    let target = ((eps + alpha) * m as f64).round();
    if !(0.0..=m as f64).contains(&target) {
        return Err(domain!("(eps+alpha)m = {target} outside [0, {m}]"));
    }
    if alpha.abs().powi(3) * m as f64 > 1.0 {
        log::warn!("alpha^3 m = {:.3} is not small; the point-mass bound may not apply", alpha.abs().powi(3) * m as f64);
    }
    let ell = target as u64;
    let var = eps * (1.0 - eps);
    let lower_bound = constant / (m as f64).sqrt() * (-(m as f64) * alpha * alpha / (2.0 * var)).exp();
    let exact = binomial_ln_pmf(m, eps, ell)?.exp();
    Ok(BiasedPointMass { ell, lower_bound, exact })
}

/// C·n²·Q(u): the scaled upper envelope for the ball tail.
pub fn bin_tail_upper(n: u64, u: f64, constant: f64) -> Result<f64> {
    Ok(constant * (n as f64).powi(2) * q_tail(u)?)
}

/// Q(u)/(C√n): the scaled lower envelope for the ball tail.
pub fn bin_tail_lower(n: u64, u: f64, constant: f64) -> Result<f64> {
    Ok(q_tail(u)? / (constant * (n as f64).sqrt()))
}

/// 2^{−δ²k}/(C·n^{1.5}): the lower envelope for the conditional ball probability.
pub fn first_cond_lower(n: u64, delta: f64, k: f64, constant: f64) -> f64 {
    (-(delta * delta) * k).exp2() / (constant * (n as f64).powf(1.5))
}

/// C·e^{−t²/2}/√n: the upper envelope for ψ(a_max).
pub fn psi_a_max_upper(n: u64, t: f64, constant: f64) -> f64 {
    constant * (-t * t / 2.0).exp() / (n as f64).sqrt()
}

/// Frozen envelope constants, each the fitted value from
/// [`calibrate_envelopes`] rounded up.
pub const FROZEN_ENVELOPES: EnvelopeFit = EnvelopeFit {
    bin_tail_upper: 5e-4,
    bin_tail_lower: 0.2,
    first_cond_lower: 0.2,
    psi_a_max_upper: 2.5,
};

/// Smallest constant making each envelope hold on its calibration grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub bin_tail_upper: f64,
    pub bin_tail_lower: f64,
    pub first_cond_lower: f64,
    pub psi_a_max_upper: f64,
}

/// Grid for the ball-tail envelopes: n ∈ {64, 128, …, 1024}, u ∈ [0.5, 3] in steps of 0.05.
pub fn ball_tail_grid() -> Vec<(u64, f64)> {
    let mut out = Vec::new();
    for n in (0..=4).map(|e| 64u64 << e) {
        for i in 0..=50 {
            out.push((n, 0.5 + 0.05 * f64::from(i)));
        }
    }
    out
}

/// One row of the conditional-ball grid: n, source correlation ρ, slack δ, key bits k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondBallPoint {
    pub n: usize,
    pub rho: f64,
    pub delta: f64,
    pub k: u32,
}

impl CondBallPoint {
    /// Radii ⌊n/2 − t√n/2⌋ and ⌊n/2 − φt√n/2⌋ with Q(t) = 2^{−k}/4.
    pub fn radii(&self) -> Result<(usize, usize)> {
        let t = q_inverse((-f64::from(self.k)).exp2() / 4.0)?;
        let phi = self.rho + self.delta * (1.0 - self.rho * self.rho).sqrt();
        let nf = self.n as f64;
        let r = nf / 2.0 - t * nf.sqrt() / 2.0;
        let r2 = nf / 2.0 - phi * t * nf.sqrt() / 2.0;
        if r < 0.0 {
            return Err(domain!("radius {r:.3} negative at n = {}, k = {}", self.n, self.k));
        }
        Ok((r.floor() as usize, r2.floor() as usize))
    }

    /// Exact Pr[Y ∈ Ball(0, r′) | X ∈ Ball(0, r)] by enumeration.
    pub fn exact(&self) -> Result<f64> {
        let (r, r2) = self.radii()?;
        Ok(correlated_weight_pmf(self.n, self.rho)?.conditional_ball(r, r2))
    }
}

pub fn cond_ball_grid() -> Vec<CondBallPoint> {
    let mut out = Vec::new();
    for n in (8..=WEIGHT_PMF_MAX_N).step_by(4) {
        for rho in [0.2, 0.5, 0.8] {
            for delta in [0.1, 0.2, 0.3] {
                for k in 1..=4 {
                    out.push(CondBallPoint { n, rho, delta, k });
                }
            }
        }
    }
    out
}

/// (n, θ, t, t₂) with n ∈ {64, …, 4096}, small θ and t, t₂ ≤ 2.
pub fn psi_grid() -> Vec<(u64, f64, f64, f64)> {
    let mut out = Vec::new();
    for n in (0..=6).map(|e| 64u64 << e) {
        for theta in [0.0, 0.02, 0.05] {
            for t in [0.0, 0.5, 1.0, 1.5, 2.0] {
                for t2 in [0.0, 0.5, 1.0, 2.0] {
                    out.push((n, theta, t, t2));
                }
            }
        }
    }
    out
}

/// Fit every envelope constant on its default grid.
pub fn calibrate_envelopes() -> Result<EnvelopeFit> {
    let mut upper: f64 = 0.0;
    let mut lower: f64 = 0.0;
    for (n, u) in ball_tail_grid() {
        let exact = hamming_ball_tail(n, u)?;
        upper = upper.max(exact / bin_tail_upper(n, u, 1.0)?);
        lower = lower.max(bin_tail_lower(n, u, 1.0)? / exact);
    }
    let mut cond: f64 = 0.0;
    for pt in cond_ball_grid() {
        let exact = pt.exact()?;
        cond = cond.max(first_cond_lower(pt.n as u64, pt.delta, f64::from(pt.k), 1.0) / exact);
    }
    let mut psi_c: f64 = 0.0;
    for (n, theta, t, t2) in psi_grid() {
        let params = PsiParams::new(n, theta, t, t2)?;
        psi_c = psi_c.max(psi(&params, params.a_max)? / psi_a_max_upper(n, t, 1.0));
    }
    Ok(EnvelopeFit { bin_tail_upper: upper, bin_tail_lower: lower, first_cond_lower: cond, psi_a_max_upper: psi_c })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        let y: f64 = 0.1;
        let approx = 1.0 - y * y / (2.0 * std::f64::consts::LN_2);
        assert!((binary_entropy(0.5 - y / 2.0).unwrap() - approx).abs() < 1e-4);
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn exact_cdf_small_cases() {
        assert_eq!(binomial_cdf_exact(4, 0.5, 4).unwrap(), 1.0);
        assert!((binomial_cdf_exact(4, 0.5, 2).unwrap() - 11.0 / 16.0).abs() < 1e-16);
        assert!(binomial_cdf_exact(4, 0.5, 5).is_err());
        assert!(binomial_cdf_exact(4, -0.1, 2).is_err());
        assert!(binomial_cdf_exact(65, 0.5, 2).is_err());
    }

    #[test]
    fn log_space_cdf_matches_exact() {
        for n in [1u32, 7, 20, 64] {
            for p in [0.1, 0.5, 0.77] {
                for r in 0..n {
                    let a = binomial_cdf_exact(n, p, r).unwrap();
                    let b = binomial_cdf(n as u64, p, r as u64).unwrap();
                    assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "n={n} p={p} r={r}");
                }
            }
        }
    }

    #[test]
    fn choose_exact_row() {
        assert_eq!(choose_exact(8, 4), 70);
        assert_eq!(choose_exact(64, 32), 1_832_624_140_942_590_534);
        assert_eq!(choose_exact(3, 5), 0);
    }

    #[test]
    fn weight_pmf_n2_table() {
        let t = correlated_weight_pmf(2, 0.5).unwrap();
        // Per-coordinate masses 3/8 on agreement and 1/8 on disagreement.
        let expect = [
            [9.0 / 64.0, 6.0 / 64.0, 1.0 / 64.0],
            [6.0 / 64.0, 20.0 / 64.0, 6.0 / 64.0],
            [1.0 / 64.0, 6.0 / 64.0, 9.0 / 64.0],
        ];
        for (a, row) in expect.iter().enumerate() {
            for (b, &e) in row.iter().enumerate() {
                assert!((t.get(a, b) - e).abs() < 1e-16, "({a},{b})");
            }
        }
    }

    #[test]
    fn weight_pmf_limits() {
        let t = correlated_weight_pmf(6, 1.0).unwrap();
        for a in 0..=6 {
            for b in 0..=6 {
                if a != b {
                    assert_eq!(t.get(a, b), 0.0);
                }
            }
        }
        let t = correlated_weight_pmf(6, 0.0).unwrap();
        let bin = |i: u32| choose_exact(6, i) as f64 / 64.0;
        assert!((t.get(2, 5) - bin(2) * bin(5)).abs() < 1e-16);
        assert!(matches!(correlated_weight_pmf(25, 0.5), Err(Error::ResourceLimit(_))));
        assert!(correlated_weight_pmf(4, 1.5).is_err());
    }

    #[test]
    fn psi_small_example() {
        let p = PsiParams::new(8, 0.0, 0.0, 0.0).unwrap();
        assert_eq!((p.n1, p.n2, p.w, p.a_max), (4, 4, 4, 2));
        assert!((psi(&p, 2).unwrap() - 36.0 / 70.0).abs() < 1e-14);
        assert!(psi(&p, 3).is_err());
        assert!(PsiParams::new(8, 0.0, 3.0, 3.0).is_err());
    }

    #[test]
    fn biased_point_mass_symmetry_and_exact() {
        let up = biased_point_mass_lb(100, 0.3, 0.05, 1.0).unwrap();
        let down = biased_point_mass_lb(100, 0.3, -0.05, 1.0).unwrap();
        assert_eq!(up.lower_bound, down.lower_bound);
        assert_eq!(up.ell, 35);
        let direct = choose_exact(100, 35) as f64 * 0.3_f64.powi(35) * 0.7_f64.powi(65);
        assert!((up.exact / direct - 1.0).abs() < 1e-11);
        let mode = biased_point_mass_lb(100, 0.3, 0.0, 1.0).unwrap();
        assert!((mode.lower_bound - 0.1).abs() < 1e-15);
        assert!(biased_point_mass_lb(10, 0.3, 0.9, 1.0).is_err());
    }

    #[test]
    fn ball_tail_edges() {
        assert_eq!(hamming_ball_tail(4, 10.0).unwrap(), 0.0);
        assert!((hamming_ball_tail(4, 0.0).unwrap() - 11.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn frozen_envelopes_cover_fit() {
        let fit = calibrate_envelopes().unwrap();
        let f = FROZEN_ENVELOPES;
        assert!(fit.bin_tail_upper <= f.bin_tail_upper);
        assert!(fit.bin_tail_lower <= f.bin_tail_lower);
        assert!(fit.first_cond_lower <= f.first_cond_lower);
        assert!(fit.psi_a_max_upper <= f.psi_a_max_upper);
    }
}
