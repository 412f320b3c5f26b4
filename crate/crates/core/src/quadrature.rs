//! Ball-average quadrature `A_n`, the integral `A` and checks of their gap.
//!
//! `A_n f = (1/n) Σ_i ⨍_{B'_{ε_n}(X_i)} f` averages over projected balls around
//! the rule's points; `A f = ∫_Q f`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fooling::{self, FoolingFunction, FoolingSpec};
use crate::geometry::{self, sample_ball_offset, sample_projected_ball, ProjectedBall, TorusPoint};
use crate::integrand::{Estimate, Integrand};
use crate::meanfield::{barron_direct, Activation, Network, ParticleMeasure};
use crate::seed;

/// Points and radius of a ball-average rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    points: Vec<TorusPoint>,
    eps_n: f64,
    scale_const: f64,
}

impl QuadratureRule {
    /// `ε_n = scale_const · n^{-1/d}`.
    pub fn new(points: Vec<TorusPoint>, scale_const: f64) -> Result<Self> {
        let d = points
            .first()
            .map(TorusPoint::dim)
            .ok_or_else(|| Error::Empty("quadrature points".into()))?;
        if let Some(p) = points.iter().find(|p| p.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
        let eps_n = scale_const * (points.len() as f64).powf(-1.0 / d as f64);
        if !(eps_n > 0.0 && eps_n < 0.5) {
            return Err(Error::InvalidRadius(eps_n));
        }
        Ok(Self {
            points,
            eps_n,
            scale_const,
        })
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }
    pub fn n(&self) -> usize {
        self.points.len()
    }
    pub fn d(&self) -> usize {
        self.points[0].dim()
    }
    pub fn eps_n(&self) -> f64 {
        self.eps_n
    }
    pub fn scale_const(&self) -> f64 {
        self.scale_const
    }
}

/// Monte Carlo budgets shared by the quadrature checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Samples per projected ball.
    pub inner_samples: usize,
    /// Uniform samples for `∫_Q`.
    pub outer_samples: usize,
    pub seed: u64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            inner_samples: 256,
            outer_samples: 20_000,
            seed: 0,
        }
    }
}

/// Monte Carlo estimate of `∫_Q f`.
pub fn apply_a<R: Rng + ?Sized>(f: &(impl Integrand + ?Sized), mc_samples: usize, rng: &mut R) -> Result<Estimate> {
    if mc_samples == 0 {
        return Err(Error::param("mc_samples", "must be positive"));
    }
    Ok(fooling::integrate_uniform(f, mc_samples, rng))
}

/// Midpoint-rule value of `∫_Q f` on `per_axis^d` cells.
pub fn apply_a_grid(f: &(impl Integrand + ?Sized), per_axis: usize) -> Result<f64> {
    let d = f.dim();
    let nodes = crate::meanfield::midpoint_grid(d, per_axis)?;
    let total: f64 = nodes.par_chunks(d).map(|x| f.eval(x)).collect::<Vec<_>>().iter().sum();
    Ok(total / (nodes.len() / d) as f64)
}

/// Ball samples for every point of the rule, row-major per ball. Ball `i` uses
/// the stream derived from `(base_seed, i)`.
fn ball_samples(rule: &QuadratureRule, inner: usize, base_seed: u64) -> Result<Vec<Vec<TorusPoint>>> {
    rule.points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let ball = ProjectedBall::new(p.clone(), rule.eps_n)?;
            let mut rng = seed::child(base_seed, i as u64);
            Ok((0..inner).map(|_| sample_projected_ball(&ball, &mut rng)).collect())
        })
        .collect()
}

fn ball_average(f: &(impl Integrand + ?Sized), samples: &[Vec<TorusPoint>]) -> Estimate {
    let n = samples.len() as f64;
    let per_ball: Vec<Estimate> = samples
        .par_iter()
        .map(|ball| {
            let vals: Vec<f64> = ball.iter().map(|x| f.eval(x.coords())).collect();
            Estimate::from_samples(&vals)
        })
        .collect();
    let value = per_ball.iter().map(|e| e.value).sum::<f64>() / n;
    let var = per_ball.iter().map(|e| e.stderr * e.stderr).sum::<f64>() / (n * n);
    Estimate {
        value,
        stderr: var.sqrt(),
        samples: per_ball.iter().map(|e| e.samples).sum(),
    }
}

/// `(1/n) Σ_i` of the Monte Carlo mean of `f` over `B'_{ε_n}(X_i)`.
pub fn apply_an(
    f: &(impl Integrand + ?Sized),
    rule: &QuadratureRule,
    inner_samples: usize,
    base_seed: u64,
) -> Result<Estimate> {
    geometry::check_dim(rule.d(), f.dim())?;
    if inner_samples == 0 {
        return Err(Error::param("inner_samples", "must be positive"));
    }
    Ok(ball_average(f, &ball_samples(rule, inner_samples, base_seed)?))
}

/// Gap `A_n φ − A φ` of every family member, all members sharing one set of
/// ball samples and one set of uniform samples.
pub fn member_gaps<F: Integrand>(rule: &QuadratureRule, family: &[F], cfg: &QuadConfig) -> Result<Vec<Estimate>> {
    if family.is_empty() {
        return Err(Error::Empty("family".into()));
    }
    let d = rule.d();
    for f in family {
        geometry::check_dim(d, f.dim())?;
    }
    let balls = ball_samples(rule, cfg.inner_samples.max(1), seed::derive(cfg.seed, 1))?;
    let uniform = uniform_sample(d, cfg.outer_samples.max(2), seed::derive(cfg.seed, 2));
    Ok(family.iter().map(|f| gap_with(f, &balls, &uniform)).collect())
}

fn uniform_sample(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::stream(seed);
    (0..count).map(|_| geometry::sample_unit_cube(d, &mut rng)).collect()
}

fn gap_with(f: &(impl Integrand + ?Sized), balls: &[Vec<TorusPoint>], uniform: &[Vec<f64>]) -> Estimate {
    let an = ball_average(f, balls);
    let vals: Vec<f64> = uniform.par_iter().map(|x| f.eval(x)).collect();
    let a = Estimate::from_samples(&vals);
    Estimate {
        value: an.value - a.value,
        stderr: an.stderr.hypot(a.stderr),
        samples: an.samples + a.samples,
    }
}

/// Volume of the intersection of two radius-`radius` balls in `R^d` whose
/// centers are `dist` apart.
pub fn lens_volume(d: usize, radius: f64, dist: f64) -> f64 {
    if dist >= 2.0 * radius {
        return 0.0;
    }
    // 2 ω_{d-1} r^d ∫_h^1 (1 − t²)^{(d−1)/2} dt with t = cos φ, by Simpson's rule
    let top = (dist / (2.0 * radius)).acos();
    let steps = 2000;
    let width = top / steps as f64;
    let g = |phi: f64| phi.sin().powi(d as i32);
    let mut acc = g(0.0) + g(top);
    for k in 1..steps {
        let phi = k as f64 * width;
        acc += if k % 2 == 1 { 4.0 * g(phi) } else { 2.0 * g(phi) };
    }
    2.0 * geometry::unit_ball_volume(d - 1) * radius.powi(d as i32) * acc * width / 3.0
}

/// `sup_{|φ|_{L²} ≤ 1} |(A_n − A) φ| = |g − 1|_{L²}` where `g` is the average of
/// the normalized ball indicators. Needs `ε_n < 1/4`, so that two balls overlap
/// through at most one periodic image.
pub fn l2_operator_norm(rule: &QuadratureRule) -> Result<f64> {
    let eps = rule.eps_n;
    if eps >= 0.25 {
        return Err(Error::InvalidRadius(eps));
    }
    let d = rule.d();
    let n = rule.n() as f64;
    let vol = geometry::unit_ball_volume(d) * eps.powi(d as i32);
    let overlap: f64 = rule
        .points
        .par_iter()
        .map(|p| {
            rule.points
                .iter()
                .map(|q| lens_volume(d, eps, geometry::torus_distance_raw(p.coords(), q.coords())))
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let g_sq = overlap / (n * n * vol * vol);
    Ok((g_sq - 1.0).max(0.0).sqrt())
}

/// Largest `A_n φ − A φ` over a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Representativeness {
    pub value: f64,
    pub index: usize,
    pub stderr: f64,
}

impl Representativeness {
    fn of(gaps: &[Estimate], transform: impl Fn(f64) -> f64) -> Self {
        let (index, best) = gaps
            .iter()
            .enumerate()
            .map(|(i, e)| (i, transform(e.value)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        Self {
            value: best,
            index,
            stderr: gaps[index].stderr,
        }
    }
}

pub fn representativeness<F: Integrand>(
    rule: &QuadratureRule,
    family: &[F],
    cfg: &QuadConfig,
) -> Result<Representativeness> {
    Ok(Representativeness::of(&member_gaps(rule, family, cfg)?, |v| v))
}

/// Representativeness over the family closed under negation.
pub fn representativeness_symmetric<F: Integrand>(
    rule: &QuadratureRule,
    family: &[F],
    cfg: &QuadConfig,
) -> Result<Representativeness> {
    Ok(Representativeness::of(&member_gaps(rule, family, cfg)?, f64::abs))
}

/// `6 L √(2 log(2d) / n)`.
pub fn barron_representativeness_bound(lipschitz: f64, d: usize, n: usize) -> f64 {
    6.0 * lipschitz * (2.0 * (2.0 * d as f64).ln() / n as f64).sqrt()
}

/// Random width-`width` networks rescaled in `a` so that `barron_direct = 1`.
pub fn barron_ball_sampler<R: Rng + ?Sized>(
    act: Activation,
    d: usize,
    width: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Network>> {
    if count == 0 || width == 0 || d == 0 {
        return Err(Error::param("count", "need count, width and d positive"));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let params: Vec<f64> = (0..width * (d + 2))
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z
            })
            .collect();
        let mut measure = ParticleMeasure::from_flat(d, params)?;
        let norm = barron_direct(&measure, act);
        if !(norm > 0.0 && norm.is_finite()) {
            continue;
        }
        measure.scale_outer(1.0 / norm);
        out.push(Network {
            measure,
            activation: act,
        });
    }
    Ok(out)
}

/// `√2 cos(2π k·x + phase)`, of unit `L²(Q)` norm for integer `k ≠ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineMode {
    pub frequency: Vec<i32>,
    pub phase: f64,
}

impl Integrand for CosineMode {
    fn dim(&self) -> usize {
        self.frequency.len()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        let arg: f64 = self.frequency.iter().zip(x).map(|(k, xi)| *k as f64 * xi).sum();
        std::f64::consts::SQRT_2 * (std::f64::consts::TAU * arg + self.phase).cos()
    }
}

/// Random unit-`L²` cosine modes with frequencies in `[−3, 3]^d \ {0}`.
pub fn l2_surrogate_family<R: Rng + ?Sized>(d: usize, count: usize, rng: &mut R) -> Vec<CosineMode> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let frequency: Vec<i32> = (0..d).map(|_| rng.random_range(-3..=3)).collect();
        if frequency.iter().all(|&k| k == 0) {
            continue;
        }
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        out.push(CosineMode { frequency, phase });
    }
    out
}

/// Knobs of [`select_points`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub trials: usize,
    pub family_size: usize,
    pub width: usize,
    pub l2_family_size: usize,
    pub quad: QuadConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            trials: 64,
            family_size: 256,
            width: 4,
            l2_family_size: 64,
            quad: QuadConfig::default(),
        }
    }
}

/// Default `γ_d = 0.1 τ(d, 1)`.
pub fn default_gamma(d: usize) -> f64 {
    0.1 * fooling::tau(d, 1)
}

/// A rule accepted by [`select_points`] with its surrogate diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub rule: QuadratureRule,
    pub representativeness: Representativeness,
    pub bound: f64,
    /// Recorded, never thresholded.
    pub l2_representativeness: Representativeness,
    pub trials_used: usize,
}

/// Rejection sampling of uniform point sets: returns the first whose symmetric
/// representativeness over a random Barron unit-ball surrogate is at most
/// `6 L √(2 log(2d)/n)`.
pub fn select_points<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    act: Activation,
    gamma: f64,
    cfg: &SelectionConfig,
    rng: &mut R,
) -> Result<Selection> {
    if cfg.trials == 0 || n == 0 {
        return Err(Error::param("trials", "need trials >= 1 and n >= 1"));
    }
    let l = act
        .global_lipschitz()
        .ok_or_else(|| Error::NotGloballyLipschitz(act.name()))?;
    let family = barron_ball_sampler(act, d, cfg.width, cfg.family_size.max(1), rng)?;
    let l2 = l2_surrogate_family(d, cfg.l2_family_size.max(1), rng);
    let bound = barron_representativeness_bound(l, d, n);
    let mut best = f64::INFINITY;
    for trial in 0..cfg.trials {
        let rule = QuadratureRule::new(geometry::uniform_points(n, d, rng), gamma)?;
        let quad = QuadConfig {
            seed: seed::derive(cfg.quad.seed, trial as u64),
            ..cfg.quad
        };
        let rep = representativeness_symmetric(&rule, &family, &quad)?;
        best = best.min(rep.value);
        if rep.value <= bound {
            let l2_rep = representativeness(&rule, &l2, &quad)?;
            return Ok(Selection {
                rule,
                representativeness: rep,
                bound,
                l2_representativeness: l2_rep,
                trials_used: trial + 1,
            });
        }
    }
    Err(Error::SelectionFailed {
        trials: cfg.trials,
        best,
        bound,
    })
}

/// Certified lower bound on `sup_{|g|_{C^r} ≤ 1} (A_n − A) g` via the witness `−ψ`.
#[derive(Debug, Clone)]
pub struct GapCertificate {
    pub rule: QuadratureRule,
    pub witness: FoolingFunction,
    pub gap_estimate: f64,
    pub stderr: f64,
    pub gap_bound: f64,
    /// `A_n ψ`, exactly zero by construction.
    pub an_value: f64,
}

/// Flat record of a certificate; the CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub theta: f64,
    pub gap_estimate: f64,
    pub stderr: f64,
    pub gap_bound: f64,
    pub pass: bool,
}

impl GapCertificate {
    pub fn pass(&self) -> bool {
        self.gap_estimate + 3.0 * self.stderr >= self.gap_bound
    }

    pub fn record(&self) -> GapRecord {
        let s = self.witness.spec();
        GapRecord {
            n: s.n(),
            d: s.d(),
            r: s.r(),
            theta: s.theta(),
            gap_estimate: self.gap_estimate,
            stderr: self.stderr,
            gap_bound: self.gap_bound,
            pass: self.pass(),
        }
    }
}

/// Builds `ψ` on the rule's points and estimates `(A_n − A)(−ψ) = A ψ − A_n ψ`.
pub fn worst_case_gap_cr(
    rule: &QuadratureRule,
    r: usize,
    theta: f64,
    mc_samples: usize,
    cfg: &QuadConfig,
) -> Result<GapCertificate> {
    fooling::k_theta(theta, rule.d(), r)?;
    let expected = theta * (rule.n() as f64).powf(-1.0 / rule.d() as f64);
    if ((rule.eps_n - expected) / expected).abs() > 1e-12 {
        return Err(Error::param("theta", "rule radius must equal theta n^{-1/d}"));
    }
    let spec = FoolingSpec::new(rule.points.clone(), r, theta)?;
    let witness = FoolingFunction::new(spec, mc_samples, seed::derive(cfg.seed, 3))?;
    let an = apply_an(&witness, rule, cfg.inner_samples, seed::derive(cfg.seed, 1))?;
    let a = apply_a(&witness, cfg.outer_samples, &mut seed::child(cfg.seed, 2))?;
    Ok(GapCertificate {
        rule: rule.clone(),
        gap_bound: witness.integral_bound(),
        gap_estimate: a.value - an.value,
        stderr: a.stderr.hypot(an.stderr),
        an_value: an.value,
        witness,
    })
}

pub fn write_gap_csv(records: &[GapRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gap_csv(path: &Path) -> Result<Vec<GapRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    Ok(rd.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Comparison of ball-average and point-evaluation representativeness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    /// Mean over trials of `sup_f[ball] − sup_f[point]`.
    pub mean_violation: f64,
    pub stderr: f64,
    /// Largest single-trial difference; positive values are expected noise.
    pub max_trial_violation: f64,
    pub trials: usize,
    pub pass: bool,
}

/// Checks `E sup_f [(1/n) Σ ⨍_{B'_ε(X_i)} f − ∫f] ≤ E sup_f [(1/n) Σ f(X_i) − ∫f]`
/// over `trials` independent uniform point sets.
///
/// Each trial averages over `shifts` torus shifts `z_j` drawn uniformly from
/// `B_ε` and shared by all balls, so the left side is the mean over `j` of the
/// point-evaluation sum at the shifted set `X + z_j`. `∫f` uses the same uniform
/// sample on both sides.
pub fn shift_average_check<F: Integrand, R: Rng + ?Sized>(
    family: &[F],
    eps: f64,
    n: usize,
    trials: usize,
    shifts: usize,
    rng: &mut R,
) -> Result<ShiftReport> {
    if family.is_empty() {
        return Err(Error::Empty("family".into()));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidRadius(eps));
    }
    if trials < 2 || shifts == 0 || n == 0 {
        return Err(Error::param("trials", "need trials >= 2, shifts >= 1, n >= 1"));
    }
    let d = family[0].dim();
    for f in family {
        geometry::check_dim(d, f.dim())?;
    }
    let uniform = uniform_sample(d, 20_000, rng.random());
    let integrals: Vec<f64> = family
        .iter()
        .map(|f| {
            uniform
                .par_iter()
                .map(|x| f.eval(x))
                .collect::<Vec<f64>>()
                .iter()
                .sum::<f64>()
                / uniform.len() as f64
        })
        .collect();
    let mut diffs = Vec::with_capacity(trials);
    let mut z = vec![0.0; d];
    for _ in 0..trials {
        let pts = geometry::uniform_points(n, d, rng);
        let zs: Vec<Vec<f64>> = (0..shifts)
            .map(|_| {
                sample_ball_offset(eps, rng, &mut z);
                z.clone()
            })
            .collect();
        let (ball_sup, point_sup) = family
            .par_iter()
            .zip(integrals.par_iter())
            .map(|(f, i)| {
                let point = pts.iter().map(|p| f.eval(p.coords())).sum::<f64>() / n as f64 - i;
                let mut y = vec![0.0; d];
                let ball = zs
                    .iter()
                    .map(|zj| {
                        pts.iter()
                            .map(|p| {
                                for k in 0..d {
                                    y[k] = geometry::wrap_unit(p.coords()[k] + zj[k]);
                                }
                                f.eval(&y)
                            })
                            .sum::<f64>()
                            / n as f64
                    })
                    .sum::<f64>()
                    / shifts as f64
                    - i;
                (ball, point)
            })
            .reduce(
                || (f64::NEG_INFINITY, f64::NEG_INFINITY),
                |a, b| (a.0.max(b.0), a.1.max(b.1)),
            );
        diffs.push(ball_sup - point_sup);
    }
    let est = Estimate::from_samples(&diffs);
    Ok(ShiftReport {
        mean_violation: est.value,
        stderr: est.stderr,
        max_trial_violation: diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        trials,
        pass: est.value <= 3.0 * est.stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::{Combination, Constant, FnIntegrand};

    fn rule(n: usize, d: usize, c: f64, s: u64) -> QuadratureRule {
        QuadratureRule::new(geometry::uniform_points(n, d, &mut seed::stream(s)), c).unwrap()
    }

    #[test]
    fn rule_radius() {
        let r = rule(64, 3, 0.2, 1);
        assert!((r.eps_n() - 0.05).abs() < 1e-15);
        assert!(QuadratureRule::new(vec![], 0.1).is_err());
        assert!(matches!(
            QuadratureRule::new(geometry::uniform_points(1, 2, &mut seed::stream(0)), 0.7),
            Err(Error::InvalidRadius(_))
        ));
    }

    #[test]
    fn constants_are_reproduced() {
        let r = rule(10, 3, 0.1, 2);
        let one = Constant { dim: 3, value: 1.0 };
        assert_eq!(apply_an(&one, &r, 32, 0).unwrap().value, 1.0);
        assert_eq!(apply_a(&one, 100, &mut seed::stream(1)).unwrap().value, 1.0);
        let c = Constant { dim: 3, value: 0.375 };
        assert_eq!(apply_a(&c, 100, &mut seed::stream(1)).unwrap().value, 0.375);
        assert_eq!(apply_a_grid(&c, 4).unwrap(), 0.375);
    }

    #[test]
    fn grid_integral_of_polynomial() {
        let f = FnIntegrand::new(2, |x: &[f64]| x[0] * x[1]);
        assert!((apply_a_grid(&f, 100).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn an_is_linear_with_shared_seeds() {
        let r = rule(20, 2, 0.1, 3);
        let f = FnIntegrand::new(2, |x: &[f64]| (x[0] * 7.0).sin());
        let g = FnIntegrand::new(2, |x: &[f64]| x[1] * x[1]);
        let combo = Combination::new(2).with(2.5, &f).with(-0.75, &g);
        let lhs = apply_an(&combo, &r, 64, 9).unwrap().value;
        let rhs = 2.5 * apply_an(&f, &r, 64, 9).unwrap().value - 0.75 * apply_an(&g, &r, 64, 9).unwrap().value;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn operators_are_positive_and_bounded() {
        let r = rule(30, 3, 0.1, 4);
        let f = FnIntegrand::new(3, |x: &[f64]| (x[0] - x[2]).powi(2));
        let g = FnIntegrand::new(3, |x: &[f64]| (x[0] - x[2]).powi(2) + 0.01 * x[1]);
        let an_f = apply_an(&f, &r, 64, 5).unwrap().value;
        let an_g = apply_an(&g, &r, 64, 5).unwrap().value;
        assert!(an_f >= 0.0 && an_f <= an_g);
        let a_f = apply_a(&f, 2000, &mut seed::stream(6)).unwrap().value;
        let a_g = apply_a(&g, 2000, &mut seed::stream(6)).unwrap().value;
        assert!(a_f >= 0.0 && a_f <= a_g);
        let h = FnIntegrand::new(3, |x: &[f64]| (13.0 * x[0] * x[1]).cos());
        let gap = apply_an(&h, &r, 64, 7).unwrap().value - apply_a(&h, 2000, &mut seed::stream(8)).unwrap().value;
        assert!(gap.abs() <= 2.0);
    }

    #[test]
    fn an_vanishes_on_the_witness() {
        let theta = fooling::tau(3, 1);
        let r = rule(32, 3, theta, 10);
        let spec = FoolingSpec::new(r.points().to_vec(), 1, theta).unwrap();
        let psi = FoolingFunction::new(spec, 256, 1).unwrap();
        assert_eq!(apply_an(&psi, &r, 128, 3).unwrap().value, 0.0);
    }

    #[test]
    fn gap_certificate_for_small_rule() {
        let theta = fooling::tau(3, 1);
        let r = rule(64, 3, theta, 11);
        let cfg = QuadConfig {
            inner_samples: 16,
            outer_samples: 4000,
            seed: 5,
        };
        let cert = worst_case_gap_cr(&r, 1, theta, 256, &cfg).unwrap();
        assert_eq!(cert.an_value, 0.0);
        assert!(cert.pass());
        assert!((cert.gap_bound - 0.001_953_859_170_322_810_6).abs() < 1e-15);
        assert!(worst_case_gap_cr(&r, 1, 0.5, 256, &cfg).is_err());
        let mut pts = r.points().to_vec();
        pts.reverse();
        let rev = QuadratureRule::new(pts, theta).unwrap();
        let cert2 = worst_case_gap_cr(&rev, 1, theta, 256, &cfg).unwrap();
        assert_eq!(cert.gap_estimate, cert2.gap_estimate);
    }

    #[test]
    fn gap_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gaps.csv");
        let rec = GapRecord {
            n: 16,
            d: 3,
            r: 1,
            theta: 0.02,
            gap_estimate: 0.004,
            stderr: 1e-4,
            gap_bound: 0.003,
            pass: true,
        };
        write_gap_csv(&[rec], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("n,d,r,theta,gap_estimate,stderr,gap_bound,pass\n"));
        assert_eq!(read_gap_csv(&path).unwrap(), vec![rec]);
    }

    #[test]
    fn sampler_normalizes() {
        let nets = barron_ball_sampler(Activation::Tanh, 3, 4, 20, &mut seed::stream(1)).unwrap();
        for n in &nets {
            assert!((barron_direct(&n.measure, Activation::Tanh) - 1.0).abs() < 1e-12);
        }
        let again = barron_ball_sampler(Activation::Tanh, 3, 4, 20, &mut seed::stream(1)).unwrap();
        assert_eq!(nets, again);
        let relu = barron_ball_sampler(Activation::Relu, 2, 1, 5, &mut seed::stream(2)).unwrap();
        for n in &relu {
            assert!((barron_direct(&n.measure, Activation::Relu) - 1.0).abs() < 1e-12);
        }
        let mut single = ParticleMeasure::new(vec![crate::meanfield::Particle {
            a: 2.0,
            w: vec![1.0],
            b: 0.0,
        }])
        .unwrap();
        let norm = barron_direct(&single, Activation::Relu);
        single.scale_outer(1.0 / norm);
        assert_eq!(single.particle(0).a, 1.0);
    }

    #[test]
    fn representativeness_examples() {
        let r = rule(16, 3, 0.02, 12);
        let cfg = QuadConfig {
            inner_samples: 8,
            outer_samples: 500,
            seed: 1,
        };
        let one = [Constant { dim: 3, value: 1.0 }];
        assert_eq!(representativeness(&r, &one, &cfg).unwrap().value, 0.0);
        let theta = r.scale_const();
        let psi = FoolingFunction::new(FoolingSpec::new(r.points().to_vec(), 1, theta).unwrap(), 64, 0).unwrap();
        let rep = representativeness(&r, &[psi], &cfg).unwrap();
        assert!(rep.value <= 0.0);
    }

    #[test]
    fn representativeness_within_barron_bound() {
        assert!((barron_representativeness_bound(1.0, 3, 288) - 0.669_283_099_522_925_16).abs() < 1e-12);
        let r = rule(288, 3, default_gamma(3), 13);
        let fam = barron_ball_sampler(Activation::Tanh, 3, 4, 64, &mut seed::stream(3)).unwrap();
        let cfg = QuadConfig {
            inner_samples: 16,
            outer_samples: 4000,
            seed: 2,
        };
        let rep = representativeness_symmetric(&r, &fam, &cfg).unwrap();
        assert!(rep.value <= barron_representativeness_bound(1.0, 3, 288));
    }

    #[test]
    fn selection_examples() {
        let cfg = SelectionConfig {
            trials: 4,
            family_size: 32,
            width: 2,
            l2_family_size: 8,
            quad: QuadConfig {
                inner_samples: 8,
                outer_samples: 1000,
                seed: 0,
            },
        };
        let gamma = default_gamma(3);
        let s = select_points(1, 3, Activation::Relu, gamma, &cfg, &mut seed::stream(7)).unwrap();
        assert_eq!(s.trials_used, 1);
        assert_eq!(s.rule.n(), 1);
        assert!((s.rule.eps_n() - gamma).abs() < 1e-15);
        let s2 = select_points(1, 3, Activation::Relu, gamma, &cfg, &mut seed::stream(7)).unwrap();
        assert_eq!(s, s2);
        let big = select_points(50, 3, Activation::Tanh, gamma, &cfg, &mut seed::stream(8)).unwrap();
        assert!((big.rule.eps_n() - gamma * 50f64.powf(-1.0 / 3.0)).abs() < 1e-15);
        assert!(select_points(5, 3, Activation::Square, gamma, &cfg, &mut seed::stream(8)).is_err());
        let none = SelectionConfig { trials: 0, ..cfg };
        assert!(select_points(5, 3, Activation::Relu, gamma, &none, &mut seed::stream(8)).is_err());
    }

    #[test]
    fn cosine_modes_have_unit_norm() {
        let fam = l2_surrogate_family(2, 5, &mut seed::stream(1));
        for f in &fam {
            let sq = FnIntegrand::new(2, |x: &[f64]| f.eval(x).powi(2));
            assert!((apply_a_grid(&sq, 60).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_average_examples() {
        let one = [Constant { dim: 2, value: 1.0 }];
        let rep = shift_average_check(&one, 0.1, 10, 20, 4, &mut seed::stream(1)).unwrap();
        assert_eq!(rep.mean_violation, 0.0);
        assert!(rep.pass);
        let single = [FnIntegrand::new(2, |x: &[f64]| (6.0 * x[0]).sin() + x[1])];
        let rep = shift_average_check(&single, 0.1, 20, 1000, 4, &mut seed::stream(2)).unwrap();
        assert!(rep.pass, "{rep:?}");
        let nets = barron_ball_sampler(Activation::Tanh, 2, 1, 10, &mut seed::stream(3)).unwrap();
        let rep = shift_average_check(&nets, 0.1, 50, 300, 8, &mut seed::stream(4)).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn lens_volume_matches_closed_form() {
        let r = 0.1;
        for &dist in &[0.0, 0.03, 0.1, 0.19, 0.25] {
            let exact = if dist >= 2.0 * r {
                0.0
            } else {
                std::f64::consts::PI * (4.0 * r + dist) * (2.0 * r - dist).powi(2) / 12.0
            };
            assert!((lens_volume(3, r, dist) - exact).abs() < 1e-9, "{dist}");
        }
        assert!((lens_volume(2, 0.2, 0.0) - std::f64::consts::PI * 0.04).abs() < 1e-9);
    }

    #[test]
    fn l2_norm_is_attained() {
        let r = rule(1, 2, 0.2, 20);
        let vol = std::f64::consts::PI * 0.04;
        let norm = l2_operator_norm(&r).unwrap();
        assert!((norm - (1.0 / vol - 1.0).sqrt()).abs() < 1e-6);
        let r = rule(6, 2, 0.3, 21);
        let norm = l2_operator_norm(&r).unwrap();
        let eps = r.eps_n();
        let vol = std::f64::consts::PI * eps * eps;
        let pts: Vec<Vec<f64>> = r.points().iter().map(|p| p.coords().to_vec()).collect();
        let g = FnIntegrand::new(2, move |x: &[f64]| {
            let inside = pts.iter().filter(|p| geometry::torus_distance_raw(x, p) <= eps).count();
            inside as f64 / (6.0 * vol) - 1.0
        });
        let an = apply_an(&g, &r, 4000, 1).unwrap().value;
        let a = apply_a_grid(&g, 1000).unwrap();
        assert!(
            ((an - a) / norm - norm).abs() < 0.02 * norm,
            "{} vs {}",
            (an - a) / norm,
            norm
        );
    }
}
