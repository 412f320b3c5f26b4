//! Super-exponentially increasing sequences in exact arithmetic.
//!
//! A sequence `n_1 < n_2 < ...` of integers `≥ 2` qualifies when
//! `Σ_{l>k} 1/n_l ≤ 2/n_k^{k+1}` for every `k`. A finite list is checked over
//! its defined terms, plus an extension certificate: appending any
//! `n_{K+1} ≥ n_K^{K+2}` must keep every inequality true.

use num_bigint::BigUint;
use num_rational::{BigRational, Rational64};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admitted bit length of any integer produced here.
pub const DEFAULT_BIT_BUDGET: u64 = 1_000_000;

/// Why a list fails to be super-exponential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeqFailure {
    Empty,
    FirstTermBelowTwo,
    NotIncreasing { k: usize },
    TailSum { k: usize },
    Extension { k: usize },
}

/// Outcome of [`verify_superexp`]; indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub ok: bool,
    pub first_failure: Option<SeqFailure>,
}

impl Verification {
    fn fail(f: SeqFailure) -> Self {
        Self {
            ok: false,
            first_failure: Some(f),
        }
    }
}

fn recip(n: &BigUint) -> BigRational {
    BigRational::new(One::one(), n.clone().into())
}

/// Exact check of the monotonicity, lower bound and tail conditions.
pub fn verify_superexp(terms: &[BigUint]) -> Verification {
    let Some(first) = terms.first() else {
        return Verification::fail(SeqFailure::Empty);
    };
    if *first < BigUint::from(2u32) {
        return Verification::fail(SeqFailure::FirstTermBelowTwo);
    }
    if let Some(k) = terms.windows(2).position(|w| w[0] >= w[1]) {
        return Verification::fail(SeqFailure::NotIncreasing { k: k + 2 });
    }
    let big_k = terms.len();
    let last = &terms[big_k - 1];
    let extension = recip(&last.pow(big_k as u32 + 2));
    // suffix[k] = Σ_{l > k} 1/n_l over defined terms (0-based k)
    let mut tail = BigRational::zero();
    for k in (0..big_k).rev() {
        let rhs = BigRational::new(BigUint::from(2u32).into(), terms[k].pow(k as u32 + 2).into());
        if k + 1 < big_k && tail > rhs {
            return Verification::fail(SeqFailure::TailSum { k: k + 1 });
        }
        if &tail + &extension > rhs {
            return Verification::fail(SeqFailure::Extension { k: k + 1 });
        }
        tail += recip(&terms[k]);
    }
    Verification {
        ok: true,
        first_failure: None,
    }
}

/// A verified finite sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct SuperExpSeq {
    terms: Vec<BigUint>,
}

impl SuperExpSeq {
    pub fn new(terms: Vec<BigUint>) -> Result<Self> {
        let v = verify_superexp(&terms);
        match v.first_failure {
            None => Ok(Self { terms }),
            Some(f) => Err(Error::TailCondition {
                k: failure_index(&f),
                detail: format!("{f:?}"),
            }),
        }
    }

    pub fn from_u64(terms: &[u64]) -> Result<Self> {
        Self::new(terms.iter().map(|&t| BigUint::from(t)).collect())
    }

    pub fn from_decimal<S: AsRef<str>>(terms: &[S]) -> Result<Self> {
        let parsed = terms
            .iter()
            .map(|s| {
                s.as_ref()
                    .parse::<BigUint>()
                    .map_err(|e| Error::param("sequence", format!("{:?}: {e}", s.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(parsed)
    }

    /// The first `count` terms, re-verified on their own.
    pub fn prefix(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.terms.len() {
            return Err(Error::IndexOutOfRange {
                index: count,
                len: self.terms.len(),
            });
        }
        Self::new(self.terms[..count].to_vec())
    }

    pub fn terms(&self) -> &[BigUint] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `n_k`, 1-based.
    pub fn term(&self, k: usize) -> Result<&BigUint> {
        if k == 0 || k > self.terms.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.terms.len(),
            });
        }
        Ok(&self.terms[k - 1])
    }

    /// `Σ_k 1/n_k` over defined terms.
    pub fn reciprocal_sum(&self) -> BigRational {
        self.terms.iter().map(recip).sum()
    }

    pub fn to_decimal(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.to_str_radix(10)).collect()
    }
}

fn failure_index(f: &SeqFailure) -> usize {
    match f {
        SeqFailure::Empty | SeqFailure::FirstTermBelowTwo => 1,
        SeqFailure::NotIncreasing { k } | SeqFailure::TailSum { k } | SeqFailure::Extension { k } => *k,
    }
}

impl TryFrom<Vec<String>> for SuperExpSeq {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::from_decimal(&v)
    }
}

impl From<SuperExpSeq> for Vec<String> {
    fn from(s: SuperExpSeq) -> Self {
        s.to_decimal()
    }
}

fn exponent_kk(k: usize) -> Option<u64> {
    (k as u64).checked_pow(k as u32)
}

/// `n_k = 2^{k^k}` for `k = 1..=count`.
pub fn default_seq(count: usize) -> Result<SuperExpSeq> {
    default_seq_with_budget(count, DEFAULT_BIT_BUDGET)
}

/// [`default_seq`] with an explicit bit budget. The terms satisfy the tail
/// condition by construction; [`verify_superexp`] confirms it independently.
pub fn default_seq_with_budget(count: usize, budget: u64) -> Result<SuperExpSeq> {
    if count == 0 {
        return Err(Error::param("K", "need at least one term"));
    }
    let mut terms = Vec::with_capacity(count);
    for k in 1..=count {
        let e = exponent_kk(k).unwrap_or(u64::MAX);
        if e >= budget {
            return Err(Error::BitBudget {
                bits: e.saturating_add(1),
                budget,
            });
        }
        terms.push(BigUint::one() << e);
    }
    Ok(SuperExpSeq { terms })
}

/// `⌊√k⌋` in integers.
pub fn isqrt(k: usize) -> usize {
    let mut s = (k as f64).sqrt() as usize;
    while s * s > k {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= k {
        s += 1;
    }
    s
}

/// `m_k = n_k^{⌊√k⌋}`.
pub fn m_of(seq: &SuperExpSeq, k: usize) -> Result<BigUint> {
    m_of_with_budget(seq, k, DEFAULT_BIT_BUDGET)
}

pub fn m_of_with_budget(seq: &SuperExpSeq, k: usize, budget: u64) -> Result<BigUint> {
    let n = seq.term(k)?;
    let p = isqrt(k) as u64;
    let bits = n.bits().saturating_mul(p);
    if bits > budget {
        return Err(Error::BitBudget { bits, budget });
    }
    if n.count_ones() == 1 {
        return Ok(BigUint::one() << ((n.bits() - 1) * p));
    }
    Ok(n.pow(p as u32))
}

/// `log_2 m_k` exactly, when `n_k` is a power of two.
pub fn m_of_log2(seq: &SuperExpSeq, k: usize) -> Result<Option<u64>> {
    let n = seq.term(k)?;
    Ok((n.count_ones() == 1).then(|| (n.bits() - 1) * isqrt(k) as u64))
}

/// Natural logarithm of an arbitrarily large positive integer.
pub fn ln_big(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (n >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Hypothesis constants for the abstract slow-approximation argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub alpha: Rational64,
    pub beta: Rational64,
    pub c_y: f64,
    pub c_x: f64,
    pub c_z: f64,
}

impl RateConstants {
    pub fn new(alpha: Rational64, beta: Rational64, c_y: f64, c_x: f64, c_z: f64) -> Result<Self> {
        if !(beta > Rational64::zero() && beta < alpha) {
            return Err(Error::param("beta", "need 0 < beta < alpha"));
        }
        for (name, v) in [("c_Y", c_y), ("C_X", c_x), ("C_Z", c_z)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} must be positive")));
            }
        }
        Ok(Self {
            alpha,
            beta,
            c_y,
            c_x,
            c_z,
        })
    }

    pub fn alpha_f64(&self) -> f64 {
        ratio_f64(self.alpha)
    }

    pub fn beta_f64(&self) -> f64 {
        ratio_f64(self.beta)
    }
}

pub(crate) fn ratio_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// A positive time carried as its logarithm, since the sequences overflow `f64`
/// after a handful of terms.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TimeScale {
    pub ln: f64,
}

impl TimeScale {
    /// `e^{ln}`; `+∞` once out of range.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }

    /// Whether `t ≥ threshold²`.
    pub fn reaches_square_of(&self, threshold: f64) -> bool {
        self.ln >= 2.0 * threshold.ln()
    }
}

/// `t_k = c_Y m_k^{α−β} / (8 C_X n_k)`.
pub fn time_scales_global(seq: &SuperExpSeq, consts: &RateConstants, k: usize) -> Result<TimeScale> {
    let ln_n = ln_big(seq.term(k)?);
    let ln_m = isqrt(k) as f64 * ln_n;
    let gap = ratio_f64(consts.alpha - consts.beta);
    Ok(TimeScale {
        ln: consts.c_y.ln() + gap * ln_m - 8f64.ln() - consts.c_x.ln() - ln_n,
    })
}

/// Parameters of the local-Lipschitz time scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalScaleParams {
    pub width: usize,
    pub delta: f64,
    pub growth_const: f64,
    pub d: usize,
    pub r: usize,
    pub k_const: f64,
}

/// `t_k = (m_k^{1/2−r/d} K / (24 n_k C m^{1+δ/2} (d+1)^{1/2+δ/2}))^{1/(1+δ/2)}`.
pub fn time_scales_local(seq: &SuperExpSeq, k: usize, p: &LocalScaleParams) -> Result<TimeScale> {
    if 2 * p.r >= p.d {
        return Err(Error::param("r", "need r < d/2"));
    }
    if !(p.delta >= 0.0) || p.width == 0 {
        return Err(Error::param("delta", "need delta >= 0 and m >= 1"));
    }
    if !(p.growth_const > 0.0 && p.k_const > 0.0) {
        return Err(Error::param("C", "constants must be positive"));
    }
    let ln_n = ln_big(seq.term(k)?);
    let ln_m = isqrt(k) as f64 * ln_n;
    let half = p.delta / 2.0;
    let inner = (0.5 - p.r as f64 / p.d as f64) * ln_m + p.k_const.ln()
        - 24f64.ln()
        - ln_n
        - p.growth_const.ln()
        - (1.0 + half) * (p.width as f64).ln()
        - (0.5 + half) * ((p.d + 1) as f64).ln();
    Ok(TimeScale {
        ln: inner / (1.0 + half),
    })
}

/// First 1-based `k` whose time scale reaches `threshold²`.
pub fn first_k_reaching(scales: &[TimeScale], threshold: f64) -> Option<usize> {
    scales
        .iter()
        .position(|t| t.reaches_square_of(threshold))
        .map(|i| i + 1)
}
