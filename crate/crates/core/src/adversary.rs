//! Truncated slow-approximation targets `φ_K = Σ_{k≤K} (ε_k/n_k) y_{m_k}`.
//!
//! The witness `y_m = −ψ` is the negated fooling function on the points of the
//! `m`-point rule, so `(A_m − A) y_m = ∫ψ > 0` and the norming functional on
//! `W = ℝ` is the sign `+1`. Signs `ε_k` are chosen in order so that
//! `ε_k L_k(φ_{k−1}) ≥ 0` with `L_k = A_{m_k} − A`.

use num_bigint::BigUint;
use num_rational::{BigRational, Rational64};
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fooling::{self, FoolingDocument, FoolingFunction, FoolingSpec};
use crate::geometry;
use crate::integrand::{Estimate, Integrand};
use crate::meanfield::{Activation, Network};
use crate::quadrature::{self, barron_ball_sampler, QuadConfig, QuadratureRule};
use crate::seed;
use crate::sequences::{isqrt, ln_big, m_of, ratio_f64, RateConstants, SuperExpSeq};

/// Largest quadrature rule built for a single term.
pub const MAX_RULE_POINTS: usize = 1 << 20;

/// `y_m = −ψ` with its rule and measured gap.
#[derive(Debug, Clone)]
pub struct Witness {
    pub function: FoolingFunction,
    pub rule: QuadratureRule,
    /// `(A_m − A) y_m`.
    pub gap: Estimate,
    /// Sign of `gap`: the norming functional on `ℝ`.
    pub w_star: i8,
}

impl Witness {
    /// `|y_m|_∞ = scale ≤ 1`.
    pub fn sup_norm(&self) -> f64 {
        self.function.scale()
    }
}

impl Integrand for Witness {
    fn dim(&self) -> usize {
        self.function.dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        -self.function.eval(x)
    }
}

/// Builds the witness for an `n`-point rule on uniform random points.
pub fn build_witness(n: usize, d: usize, r: usize, theta: f64, mc_samples: usize, cfg: &QuadConfig) -> Result<Witness> {
    if n == 0 || n > MAX_RULE_POINTS {
        return Err(Error::param(
            "n",
            format!("rule size {n} outside 1..={MAX_RULE_POINTS}"),
        ));
    }
    fooling::k_theta(theta, d, r)?;
    let points = geometry::uniform_points(n, d, &mut seed::child(cfg.seed, 0));
    let rule = QuadratureRule::new(points, theta)?;
    let spec = FoolingSpec::new(rule.points().to_vec(), r, theta)?;
    let function = FoolingFunction::new(spec, mc_samples, seed::derive(cfg.seed, 3))?;
    let mut w = Witness {
        function,
        rule,
        gap: Estimate::exact(0.0),
        w_star: 1,
    };
    w.gap = functional(&w, &w.rule, cfg)?;
    w.w_star = if w.gap.value >= 0.0 { 1 } else { -1 };
    Ok(w)
}

/// `(A_n − A) f` for one rule, Monte Carlo.
pub fn functional(f: &(impl Integrand + ?Sized), rule: &QuadratureRule, cfg: &QuadConfig) -> Result<Estimate> {
    let an = quadrature::apply_an(f, rule, cfg.inner_samples, seed::derive(cfg.seed, 1))?;
    let a = quadrature::apply_a(f, cfg.outer_samples, &mut seed::child(cfg.seed, 2))?;
    Ok(Estimate {
        value: an.value - a.value,
        stderr: an.stderr.hypot(a.stderr),
        samples: an.samples + a.samples,
    })
}

/// `+1` for `k = 1`; otherwise the sign of `L_k(φ_{k−1})`, with `+1` at zero.
pub fn choose_sign(k: usize, l_partial: f64) -> i8 {
    if k <= 1 || l_partial >= 0.0 {
        1
    } else {
        -1
    }
}

/// One term `(ε_k / n_k) y_{m_k}`.
#[derive(Debug, Clone)]
pub struct Term {
    pub sign: i8,
    pub n: BigUint,
    pub m: usize,
    pub witness: Witness,
    /// `L_k(φ_{k−1})` as used for the sign; `None` for `k = 1`.
    pub l_partial: Option<Estimate>,
}

impl Term {
    pub fn coefficient(&self) -> f64 {
        self.sign as f64 / self.n.to_f64().unwrap_or(f64::INFINITY)
    }
}

/// A finite partial sum of the slow-approximation element.
#[derive(Debug, Clone)]
pub struct AdversarialTarget {
    d: usize,
    terms: Vec<Term>,
    consts: RateConstants,
    c_up: f64,
}

impl AdversarialTarget {
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }
    pub fn len(&self) -> usize {
        self.terms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn consts(&self) -> &RateConstants {
        &self.consts
    }
    /// Bound on `|L_k|` over the `C^r` unit ball.
    pub fn c_up(&self) -> f64 {
        self.c_up
    }

    /// The first `count` terms.
    pub fn truncated(&self, count: usize) -> Self {
        Self {
            terms: self.terms[..count.min(self.terms.len())].to_vec(),
            ..self.clone()
        }
    }

    /// `Σ 1/n_k`, which also bounds `|φ_K|_{C^r}`.
    pub fn norm_certificate(&self) -> BigRational {
        self.terms
            .iter()
            .map(|t| BigRational::new(1.into(), t.n.clone().into()))
            .sum()
    }

    /// `n_k`, as parsed decimal strings with signs, for serialization.
    pub fn document(&self) -> TargetDocument {
        TargetDocument {
            terms: self
                .terms
                .iter()
                .map(|t| TermDocument {
                    sign: t.sign,
                    n: t.n.to_str_radix(10),
                    witness: FoolingDocument::from_function(&t.witness.function),
                })
                .collect(),
        }
    }
}

impl Integrand for AdversarialTarget {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coefficient() * t.witness.eval(x)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDocument {
    pub sign: i8,
    pub n: String,
    pub witness: FoolingDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDocument {
    pub terms: Vec<TermDocument>,
}

/// Settings for [`partial_target`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub d: usize,
    pub r: usize,
    pub theta: f64,
    pub activation: Activation,
    pub mc_samples: usize,
    pub quad: QuadConfig,
    /// Bound on `|L_k|` over the `C^r` unit ball; defaults to 2.
    pub c_up: Option<f64>,
}

/// `6 L √(2 log(2d))`, the constant in `|A_n − A| ≤ C_X n^{−1/2}` on the Barron
/// unit ball.
pub fn barron_gap_constant(lipschitz: f64, d: usize) -> f64 {
    6.0 * lipschitz * (2.0 * (2.0 * d as f64).ln()).sqrt()
}

/// Builds `φ_K` for the first `count` terms of `seq`.
///
/// Uses `α = 1/2`, `β = r/d`, `c_Y = K_{θ,d,r}`, `C_X = 6L√(2 log 2d)` and
/// `C_Z` equal to the largest exact `L²` operator norm of `A_{m_k} − A` over
/// the rules built.
pub fn partial_target(seq: &SuperExpSeq, count: usize, cfg: &AdversaryConfig) -> Result<AdversarialTarget> {
    let c_up = cfg.c_up.unwrap_or(2.0);
    if !(c_up > 0.0) {
        return Err(Error::param("c_up", "must be positive"));
    }
    let l = cfg
        .activation
        .global_lipschitz()
        .ok_or_else(|| Error::NotGloballyLipschitz(cfg.activation.name()))?;
    let c_y = fooling::k_theta(cfg.theta, cfg.d, cfg.r)?;
    if cfg.r == 0 {
        return Err(Error::param("r", "the construction needs r >= 1"));
    }
    let alpha_beta = (Rational64::new(1, 2), Rational64::new(cfg.r as i64, cfg.d as i64));
    if count > seq.len() {
        return Err(Error::IndexOutOfRange {
            index: count,
            len: seq.len(),
        });
    }
    let witnesses: Vec<(BigUint, usize, Witness)> = (1..=count)
        .into_par_iter()
        .map(|k| {
            let n = seq.term(k)?.clone();
            let m_big = m_of(seq, k)?;
            let m = m_big
                .to_usize()
                .filter(|&m| m <= MAX_RULE_POINTS)
                .ok_or_else(|| Error::param("m_k", format!("rule size {m_big} too large")))?;
            let quad = QuadConfig {
                seed: seed::derive(cfg.quad.seed, k as u64),
                ..cfg.quad
            };
            Ok((n, m, build_witness(m, cfg.d, cfg.r, cfg.theta, cfg.mc_samples, &quad)?))
        })
        .collect::<Result<_>>()?;
    let c_z = witnesses
        .iter()
        .map(|(_, _, w)| quadrature::l2_operator_norm(&w.rule))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::MIN_POSITIVE, f64::max);
    let consts = RateConstants::new(alpha_beta.0, alpha_beta.1, c_y, barron_gap_constant(l, cfg.d), c_z)?;
    let mut target = AdversarialTarget {
        d: cfg.d,
        terms: Vec::with_capacity(count),
        consts,
        c_up,
    };
    for (k, (n, m, witness)) in witnesses.into_iter().enumerate().map(|(i, w)| (i + 1, w)) {
        let l_partial = if k == 1 {
            None
        } else {
            let quad = QuadConfig {
                seed: seed::derive(cfg.quad.seed, 1000 + k as u64),
                ..cfg.quad
            };
            let est = functional(&target, &witness.rule, &quad)?;
            Some(Estimate {
                value: witness.w_star as f64 * est.value,
                ..est
            })
        };
        let sign = choose_sign(k, l_partial.map_or(0.0, |e| e.value));
        target.terms.push(Term {
            sign,
            n,
            m,
            witness,
            l_partial,
        });
    }
    Ok(target)
}

/// `(c_Y / (8 C_Z)) n_k^{−1−β⌊√k⌋}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapLowerBound {
    pub k: usize,
    pub value: f64,
}

fn tail_sum(seq: &SuperExpSeq, k: usize, last: usize) -> BigRational {
    seq.terms()[k..last]
        .iter()
        .map(|n| BigRational::new(1.into(), n.clone().into()))
        .sum()
}

fn ln_rational(q: &BigRational) -> f64 {
    if q.is_zero() {
        return f64::NEG_INFINITY;
    }
    ln_big(&q.numer().to_biguint().unwrap_or_default()) - ln_big(&q.denom().to_biguint().unwrap_or_default())
}

/// Whether `c_up n_k Σ_{k<l≤K} 1/n_l ≤ (c_Y/8) m_k^{−β}` for the truncation at
/// `last = K`, compared in logarithms.
pub fn finite_tail_condition(
    seq: &SuperExpSeq,
    k: usize,
    last: usize,
    consts: &RateConstants,
    c_up: f64,
) -> Result<bool> {
    if last > seq.len() || k == 0 || k > last {
        return Err(Error::IndexOutOfRange { index: k, len: last });
    }
    let tail = tail_sum(seq, k, last);
    if tail.is_zero() {
        return Ok(true);
    }
    let ln_n = ln_big(seq.term(k)?);
    let lhs = c_up.ln() + ln_n + ln_rational(&tail);
    let rhs = (consts.c_y / 8.0).ln() - consts.beta_f64() * isqrt(k) as f64 * ln_n;
    Ok(lhs <= rhs)
}

/// The sufficient condition `2 c_up / n_k^k ≤ (c_Y/8) m_k^{−β}`, which covers any
/// continuation of the sequence.
pub fn infinite_tail_condition(seq: &SuperExpSeq, k: usize, consts: &RateConstants, c_up: f64) -> Result<bool> {
    let ln_n = ln_big(seq.term(k)?);
    let lhs = (2.0 * c_up).ln() - k as f64 * ln_n;
    let rhs = (consts.c_y / 8.0).ln() - consts.beta_f64() * isqrt(k) as f64 * ln_n;
    Ok(lhs <= rhs)
}

/// The formula value, without any precondition.
pub fn gap_lower_bound_value(seq: &SuperExpSeq, k: usize, consts: &RateConstants) -> Result<f64> {
    let ln_n = ln_big(seq.term(k)?);
    let beta = ratio_f64(consts.beta);
    Ok((consts.c_y / (8.0 * consts.c_z)).ln().exp() * (-(1.0 + beta * isqrt(k) as f64) * ln_n).exp())
}

/// The certified distance lower bound at index `k` of the truncation at `last`.
pub fn gap_lower_bound(
    k: usize,
    last: usize,
    seq: &SuperExpSeq,
    consts: &RateConstants,
    c_up: f64,
) -> Result<GapLowerBound> {
    if !finite_tail_condition(seq, k, last, consts, c_up)? {
        return Err(Error::TailCondition {
            k,
            detail: "c_up n_k sum_{k<l<=K} 1/n_l exceeds (c_Y/8) m_k^-beta".into(),
        });
    }
    Ok(GapLowerBound {
        k,
        value: gap_lower_bound_value(seq, k, consts)?,
    })
}

/// `(1/n_k)((c_Y/2) m_k^{−β} − c_up n_k Σ_{k<l≤K} 1/n_l)`, the guaranteed size of
/// `|L_k(φ_K)|`.
pub fn functional_lower_bound(target: &AdversarialTarget, seq: &SuperExpSeq, k: usize) -> Result<f64> {
    let last = target.len();
    let c = &target.consts;
    let n = seq.term(k)?.to_f64().unwrap_or(f64::INFINITY);
    let m = (isqrt(k) as f64 * ln_big(seq.term(k)?)).exp();
    let tail = tail_sum(seq, k, last).to_f64().unwrap_or(0.0);
    Ok((c.c_y / 2.0 * m.powf(-c.beta_f64()) - target.c_up * n * tail) / n)
}

/// Networks with Barron norm at most `cap`: sampled on the Barron unit sphere
/// and scaled by `cap · u`, `u ~ U(0, 1]`.
pub fn capped_candidates<R: Rng + ?Sized>(
    count: usize,
    width: usize,
    d: usize,
    act: Activation,
    cap: f64,
    rng: &mut R,
) -> Result<Vec<Network>> {
    let mut nets = barron_ball_sampler(act, d, width, count, rng)?;
    for n in &mut nets {
        let u: f64 = 1.0 - rng.random::<f64>();
        n.measure.scale_outer(cap * u);
    }
    Ok(nets)
}

/// Smallest `L²(Q)` distance from the target to a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub measured_inf_distance: f64,
    pub stderr: f64,
    pub argmin: usize,
    pub bound: f64,
    pub pass: bool,
}

/// Monte Carlo `min_j |φ_K − x_j|_{L²}` over shared uniform samples, against
/// `bound`. `pass` is `measured ≥ bound − 3·stderr`.
pub fn verify_gap<F: Integrand>(
    target: &AdversarialTarget,
    bound: f64,
    candidates: &[F],
    samples: usize,
    seed_value: u64,
) -> Result<GapReport> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidates".into()));
    }
    if samples < 2 {
        return Err(Error::param("samples", "need at least 2"));
    }
    let mut rng = seed::stream(seed_value);
    let pts: Vec<Vec<f64>> = (0..samples)
        .map(|_| geometry::sample_unit_cube(target.d, &mut rng))
        .collect();
    let phi: Vec<f64> = pts.par_iter().map(|x| target.eval(x)).collect();
    let (argmin, est) = candidates
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let sq: Vec<f64> = pts.par_iter().zip(&phi).map(|(x, p)| (p - c.eval(x)).powi(2)).collect();
            (j, Estimate::from_samples(&sq))
        })
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .expect("nonempty");
    let dist = est.value.sqrt();
    let stderr = if dist > 0.0 {
        est.stderr / (2.0 * dist)
    } else {
        est.stderr.sqrt()
    };
    Ok(GapReport {
        measured_inf_distance: dist,
        stderr,
        argmin,
        bound,
        pass: dist >= bound - 3.0 * stderr,
    })
}
