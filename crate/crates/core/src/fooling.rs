//! The `C^r` fooling function.
//!
//! Given `n` points `x_i ∈ Q` and `ε_n = θ n^{-1/d}`, the witness is
//!
//! ```text
//! ψ = scale · (h_{ρ'} * g_ρ * ... * g_ρ)      (r-fold convolution)
//! ```
//!
//! with `ρ = ε_n`, `ρ' = 3ε_n`, `h_{ρ'}(x) = min{1, dist(x, P_{ρ'})/ρ'}` the
//! Lipschitz cutoff around the periodic images of the points, `g_ρ` the normalized
//! indicator of `B_{ρ/r}` and `scale = (ε_n / (k_d r))^r`.
//!
//! The convolution is evaluated as an expectation: `ψ(x) = scale · E[h(x − S)]`
//! where `S` is a sum of `r` independent uniform samples of `B_{ρ/r}`. Inside
//! `B'_ρ(x_i)` every sample of `h(x − S)` is exactly 0, and at torus distance at
//! least `7ρ` from all points every sample is exactly 1, so both regions evaluate
//! exactly.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    self, sample_ball_offset, sample_projected_ball, torus_distance_raw, unit_ball_volume, CenterIndex, ProjectedBall,
    TorusPoint,
};
use crate::integrand::{Estimate, Integrand};
use crate::seed;

/// Monte Carlo samples per evaluation unless overridden.
pub const DEFAULT_MC_SAMPLES: usize = 4096;

/// Relative slack admitted when comparing `θ` against `τ`, so that values
/// computed along different floating-point paths compare equal.
const THETA_SLACK: f64 = 1e-12;

/// `k_d = 2 ω_{d-1} / ω_d`.
pub fn k_const(d: usize) -> f64 {
    2.0 * unit_ball_volume(d.saturating_sub(1)) / unit_ball_volume(d)
}

/// `τ = min{ (1/21) (1/(2ω_d))^{1/d}, k_d }`. The value does not depend on `r`.
pub fn tau(d: usize, _r: usize) -> f64 {
    let first = (1.0 / 21.0) * (1.0 / (2.0 * unit_ball_volume(d))).powf(1.0 / d as f64);
    first.min(k_const(d))
}

fn check_theta(theta: f64, d: usize, r: usize) -> Result<()> {
    let t = tau(d, r);
    if !(theta > 0.0 && theta <= t * (1.0 + THETA_SLACK)) {
        return Err(Error::ThetaOutOfRange { theta, tau: t });
    }
    Ok(())
}

/// `K_{θ,d,r} = θ^r / (2 k_d^r r^r)`.
pub fn k_theta(theta: f64, d: usize, r: usize) -> Result<f64> {
    check_theta(theta, d, r)?;
    let denom = 2.0 * (k_const(d) * r as f64).powi(r as i32);
    Ok(theta.powi(r as i32) / denom)
}

/// The guaranteed integral `K_{θ,d,r} n^{-r/d}`.
pub fn integral_bound(theta: f64, d: usize, r: usize, n: usize) -> Result<f64> {
    Ok(k_theta(theta, d, r)? * (n as f64).powf(-(r as f64) / d as f64))
}

/// Point set, smoothness order and radii of a fooling function.
#[derive(Debug, Clone, PartialEq)]
pub struct FoolingSpec {
    points: Vec<TorusPoint>,
    d: usize,
    r: usize,
    theta: f64,
    eps_n: f64,
    rho: f64,
    rho_prime: f64,
}

impl FoolingSpec {
    /// Derives `ε_n = θ n^{-1/d}`, `ρ = ε_n` and `ρ' = 3ε_n` and checks every
    /// admissibility condition (`2r < d`, `θ ≤ τ`, `ρ ≤ k_d r`, `7ε_n < 1/2`).
    ///
    /// `r = 0` is accepted as the unsmoothed cutoff itself.
    pub fn new(points: Vec<TorusPoint>, r: usize, theta: f64) -> Result<Self> {
        let n = points.len();
        let d = points
            .first()
            .map(TorusPoint::dim)
            .ok_or_else(|| Error::param("points", "need at least one point"))?;
        if let Some(p) = points.iter().find(|p| p.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
        if 2 * r >= d {
            return Err(Error::param("r", format!("need r < d/2, got r = {r}, d = {d}")));
        }
        check_theta(theta, d, r)?;
        let eps_n = theta * (n as f64).powf(-1.0 / d as f64);
        let rho = eps_n;
        let rho_prime = 3.0 * eps_n;
        if r > 0 && rho > k_const(d) * r as f64 {
            return Err(Error::param("rho", "rho must not exceed k_d r"));
        }
        if 2.0 * rho_prime + rho >= 0.5 {
            return Err(Error::param("eps_n", "7 eps_n must stay below 1/2"));
        }
        Ok(Self {
            points,
            d,
            r,
            theta,
            eps_n,
            rho,
            rho_prime,
        })
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }
    pub fn n(&self) -> usize {
        self.points.len()
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn eps_n(&self) -> f64 {
        self.eps_n
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn rho_prime(&self) -> f64 {
        self.rho_prime
    }

    /// Minimum torus distance from `x` to the points (brute force).
    pub fn min_center_distance(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| torus_distance_raw(x, p.coords()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Clamp of the distance to `P_{ρ'}` in units of `ρ'`.
#[inline]
fn cutoff_from_distance(dist: f64, rho_prime: f64) -> f64 {
    ((dist - rho_prime).max(0.0) / rho_prime).min(1.0)
}

/// `h_{ρ'}(x) = min{1, max(0, min_i |x − x_i|_torus − ρ')/ρ'}`.
pub fn h_cut(x: &[f64], spec: &FoolingSpec) -> f64 {
    cutoff_from_distance(spec.min_center_distance(x), spec.rho_prime)
}

/// Kernel shifts `S_1..S_M` stored row-major (`M × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct Shifts {
    d: usize,
    data: Vec<f64>,
}

impl Shifts {
    pub fn len(&self) -> usize {
        self.data.len() / self.d.max(1)
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn get(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }
    pub fn max_norm(&self) -> f64 {
        self.data
            .chunks(self.d)
            .map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// The scaled witness `ψ`, evaluable by Monte Carlo.
#[derive(Debug, Clone)]
pub struct FoolingFunction {
    spec: FoolingSpec,
    scale: f64,
    mc_samples: usize,
    base_seed: u64,
    index: CenterIndex,
}

impl FoolingFunction {
    pub fn new(spec: FoolingSpec, mc_samples: usize, base_seed: u64) -> Result<Self> {
        if mc_samples == 0 {
            return Err(Error::param("mc_samples", "must be positive"));
        }
        let scale = if spec.r == 0 {
            1.0
        } else {
            (spec.eps_n / (k_const(spec.d) * spec.r as f64)).powi(spec.r as i32)
        };
        let index = CenterIndex::new(&spec.points, 2.0 * spec.rho_prime + spec.rho);
        Ok(Self {
            spec,
            scale,
            mc_samples,
            base_seed,
            index,
        })
    }

    pub fn with_defaults(spec: FoolingSpec, base_seed: u64) -> Result<Self> {
        Self::new(spec, DEFAULT_MC_SAMPLES, base_seed)
    }

    pub fn spec(&self) -> &FoolingSpec {
        &self.spec
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }
    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// `K_{θ,d,r} n^{-r/d}`.
    pub fn integral_bound(&self) -> f64 {
        integral_bound(self.spec.theta, self.spec.d, self.spec.r, self.spec.n()).expect("spec validated theta")
    }

    /// `scale · (1 − n ω_d (21 ε_n)^d)`, the volume argument's floor on `∫ψ`.
    pub fn analytic_floor(&self) -> f64 {
        let s = &self.spec;
        self.scale * (1.0 - s.n() as f64 * unit_ball_volume(s.d) * (21.0 * s.eps_n).powi(s.d as i32))
    }

    #[inline]
    fn h(&self, y: &[f64]) -> f64 {
        cutoff_from_distance(self.index.nearest(y), self.spec.rho_prime)
    }

    /// Draws `mc_samples` kernel shifts from the stream seeded by `seed`.
    pub fn kernel_shifts(&self, seed: u64) -> Shifts {
        let d = self.spec.d;
        let r = self.spec.r;
        let radius = if r == 0 { 0.0 } else { self.spec.rho / r as f64 };
        let mut rng = seed::stream(seed);
        let mut data = vec![0.0; self.mc_samples * d];
        let mut buf = vec![0.0; d];
        for row in data.chunks_mut(d) {
            for _ in 0..r {
                sample_ball_offset(radius, &mut rng, &mut buf);
                row.iter_mut().zip(&buf).for_each(|(s, b)| *s += b);
            }
        }
        Shifts { d, data }
    }

    fn point_seed(&self, x: &[f64]) -> u64 {
        seed::derive_for_point(self.base_seed, x)
    }

    /// `scale · mean_j h(x − S_j)` for caller-supplied shifts.
    pub fn eval_with_shifts(&self, x: &[f64], shifts: &Shifts) -> f64 {
        self.scale * self.mean_h(x, shifts, &vec![0.0; x.len()])
    }

    fn mean_h(&self, x: &[f64], shifts: &Shifts, offset: &[f64]) -> f64 {
        let d = x.len();
        let mut y = vec![0.0; d];
        let mut acc = 0.0;
        for j in 0..shifts.len() {
            let s = shifts.get(j);
            for k in 0..d {
                y[k] = x[k] + offset[k] - s[k];
            }
            acc += self.h(&y);
        }
        acc / shifts.len() as f64
    }

    /// Full Monte Carlo evaluation with the point-derived seed, without the
    /// exact-region shortcuts used by [`Integrand::eval`].
    pub fn eval_mc(&self, x: &[f64]) -> f64 {
        let shifts = self.kernel_shifts(self.point_seed(x));
        self.eval_with_shifts(x, &shifts)
    }

    /// Per-sample values `scale · h(x − S_j)` for the point-derived seed.
    pub fn eval_samples(&self, x: &[f64]) -> Vec<f64> {
        let shifts = self.kernel_shifts(self.point_seed(x));
        let mut y = vec![0.0; x.len()];
        (0..shifts.len())
            .map(|j| {
                let s = shifts.get(j);
                y.iter_mut()
                    .zip(x.iter().zip(s))
                    .for_each(|(yk, (xk, sk))| *yk = xk - sk);
                self.scale * self.h(&y)
            })
            .collect()
    }

    /// Central finite-difference estimates of `D^β ψ(x)` for every `|β|_1 ≤ r`,
    /// sharing one set of kernel shifts across all stencil points.
    pub fn fd_derivatives(&self, x: &[f64], fd_step: f64) -> Result<Vec<DerivativeEstimate>> {
        if !(fd_step > 0.0) {
            return Err(Error::param("fd_step", format!("{fd_step} must be positive")));
        }
        geometry::check_dim(self.spec.d, x.len())?;
        let shifts = self.kernel_shifts(self.point_seed(x));
        let d = self.spec.d;
        let mut out = Vec::new();
        for beta in multi_indices(d, self.spec.r) {
            let stencil = stencil(&beta, fd_step);
            let mut y = vec![0.0; d];
            let samples: Vec<f64> = (0..shifts.len())
                .map(|j| {
                    let s = shifts.get(j);
                    stencil
                        .iter()
                        .map(|(off, coef)| {
                            for k in 0..d {
                                y[k] = x[k] + off[k] - s[k];
                            }
                            coef * self.h(&y)
                        })
                        .sum::<f64>()
                        * self.scale
                })
                .collect();
            out.push(DerivativeEstimate {
                order: beta,
                estimate: Estimate::from_samples(&samples),
            });
        }
        Ok(out)
    }
}

impl Integrand for FoolingFunction {
    fn dim(&self) -> usize {
        self.spec.d
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let dist = self.index.nearest(x);
        if dist <= self.spec.rho {
            0.0
        } else if dist >= 2.0 * self.spec.rho_prime + self.spec.rho {
            self.scale
        } else {
            self.eval_mc(x)
        }
    }
}

/// `ψ(x)` for a point of `Q`.
pub fn eval_fooling(x: &TorusPoint, f: &FoolingFunction) -> Result<f64> {
    geometry::check_dim(f.spec.d, x.dim())?;
    Ok(f.eval(x.coords()))
}

/// One finite-difference derivative estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeEstimate {
    pub order: Vec<usize>,
    pub estimate: Estimate,
}

/// All multi-indices `β ∈ ℕ_0^d` with `|β|_1 ≤ r`, in graded order.
pub fn multi_indices(d: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for b in 0..=left {
            cur.push(b);
            rec(d, left - b, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, r, &mut Vec::with_capacity(d), &mut out);
    out.sort_by_key(|b| (b.iter().sum::<usize>(), std::cmp::Reverse(b.clone())));
    out
}

/// Tensor-product central difference stencil for `D^β` with half-width `h`:
/// per axis `Σ_k (−1)^k C(p,k) f(x + (p − 2k)h) / (2h)^p`.
fn stencil(beta: &[usize], h: f64) -> Vec<(Vec<f64>, f64)> {
    let mut pts = vec![(vec![0.0; beta.len()], 1.0)];
    for (axis, &p) in beta.iter().enumerate() {
        if p == 0 {
            continue;
        }
        let mut next = Vec::with_capacity(pts.len() * (p + 1));
        for (off, coef) in &pts {
            let mut binom = 1.0;
            for k in 0..=p {
                let mut o = off.clone();
                o[axis] += (p as f64 - 2.0 * k as f64) * h;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                next.push((o, coef * sign * binom / (2.0 * h).powi(p as i32)));
                binom = binom * (p - k) as f64 / (k + 1) as f64;
            }
        }
        pts = next;
    }
    pts
}

/// Count of nonzero evaluations inside the balls `B'_{ε_n}(x_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VanishingReport {
    pub violations: usize,
    pub probes: usize,
}

/// Probes every ball `B'_{ε_n}(x_i)` with `probes_per_ball` uniform samples and
/// counts full Monte Carlo evaluations that are not exactly zero.
pub fn verify_vanishing<R: Rng + ?Sized>(
    f: &FoolingFunction,
    probes_per_ball: usize,
    rng: &mut R,
) -> Result<VanishingReport> {
    if probes_per_ball == 0 {
        return Err(Error::param("probes_per_ball", "must be at least 1"));
    }
    let mut probes = Vec::with_capacity(f.spec.n() * probes_per_ball);
    for p in &f.spec.points {
        let ball = ProjectedBall::new(p.clone(), f.spec.eps_n)?;
        for _ in 0..probes_per_ball {
            probes.push(sample_projected_ball(&ball, rng));
        }
    }
    let violations = probes.par_iter().filter(|x| f.eval_mc(x.coords()) != 0.0).count();
    Ok(VanishingReport {
        violations,
        probes: probes.len(),
    })
}

/// Two-level Monte Carlo estimate of `∫_Q ψ` against the guaranteed bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralReport {
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub analytic_floor: f64,
    pub pass: bool,
}

pub fn verify_integral<R: Rng + ?Sized>(
    f: &FoolingFunction,
    outer_samples: usize,
    rng: &mut R,
) -> Result<IntegralReport> {
    if outer_samples < 1000 {
        return Err(Error::param("outer_samples", "need at least 1000 outer samples"));
    }
    let est = integrate_uniform(f, outer_samples, rng);
    let bound = f.integral_bound();
    Ok(IntegralReport {
        estimate: est.value,
        stderr: est.stderr,
        bound,
        analytic_floor: f.analytic_floor(),
        pass: est.value + 3.0 * est.stderr >= bound,
    })
}

/// Plain Monte Carlo mean of `f` over uniform points of `Q`.
pub(crate) fn integrate_uniform<R: Rng + ?Sized>(
    f: &(impl Integrand + ?Sized),
    samples: usize,
    rng: &mut R,
) -> Estimate {
    let d = f.dim();
    let pts: Vec<Vec<f64>> = (0..samples).map(|_| geometry::sample_unit_cube(d, rng)).collect();
    let vals: Vec<f64> = pts.par_iter().map(|x| f.eval(x)).collect();
    Estimate::from_samples(&vals)
}

/// Finite-difference bound check on `‖ψ‖_{C^r}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrNormReport {
    pub max_derivative_estimate: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub probes: usize,
    pub pass: bool,
}

/// Estimates `max_{|β|≤r} |D^β ψ|` at `probe_count` probes.
///
/// Outside the shells `ρ < dist < 7ρ` around the points `ψ` is locally constant,
/// so probes are drawn inside those shells: a random point, a random direction and
/// a uniform radius in `(ρ + r·fd_step, 7ρ − r·fd_step)`.
pub fn verify_cr_norm<R: Rng + ?Sized>(
    f: &FoolingFunction,
    fd_step: f64,
    probe_count: usize,
    rng: &mut R,
) -> Result<CrNormReport> {
    let s = &f.spec;
    if !(fd_step > 0.0) {
        return Err(Error::param("fd_step", format!("{fd_step} must be positive")));
    }
    if s.r > 0 && fd_step * s.r as f64 >= s.rho {
        return Err(Error::param("fd_step", "need r * fd_step < rho"));
    }
    if probe_count == 0 {
        return Err(Error::param("probe_count", "must be positive"));
    }
    let margin = s.r as f64 * fd_step;
    let (lo, hi) = (s.rho + margin, 2.0 * s.rho_prime + s.rho - margin);
    let mut probes = Vec::with_capacity(probe_count);
    let mut dir = vec![0.0; s.d];
    for _ in 0..probe_count {
        let c = &s.points[rng.random_range(0..s.n())];
        sample_ball_offset(1.0, rng, &mut dir);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let radius = rng.random_range(lo..hi);
        let x: Vec<f64> = c
            .coords()
            .iter()
            .zip(&dir)
            .map(|(ci, di)| geometry::wrap_unit(ci + radius * di / norm))
            .collect();
        probes.push(x);
    }
    let per_probe: Vec<Result<Vec<DerivativeEstimate>>> =
        probes.par_iter().map(|x| f.fd_derivatives(x, fd_step)).collect();
    let mut best = (0.0f64, 0.0f64);
    for est in per_probe {
        for e in est? {
            if e.estimate.value.abs() > best.0 {
                best = (e.estimate.value.abs(), e.estimate.stderr);
            }
        }
    }
    let tolerance = 10.0 * fd_step / s.rho + 3.0 * best.1;
    Ok(CrNormReport {
        max_derivative_estimate: best.0,
        stderr: best.1,
        tolerance,
        probes: probe_count,
        pass: best.0 <= 1.0 + tolerance,
    })
}

/// Serializable description of a fooling function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoolingDocument {
    pub points: Vec<Vec<f64>>,
    pub d: usize,
    pub r: usize,
    pub theta: f64,
    pub seed: u64,
    pub mc_samples: usize,
}

impl FoolingDocument {
    pub fn from_function(f: &FoolingFunction) -> Self {
        Self {
            points: f.spec.points.iter().map(|p| p.coords().to_vec()).collect(),
            d: f.spec.d,
            r: f.spec.r,
            theta: f.spec.theta,
            seed: f.base_seed,
            mc_samples: f.mc_samples,
        }
    }

    pub fn build(&self) -> Result<FoolingFunction> {
        let points = self
            .points
            .iter()
            .map(|c| TorusPoint::new(c.clone()))
            .collect::<Result<Vec<_>>>()?;
        if let Some(p) = points.iter().find(|p| p.dim() != self.d) {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: p.dim(),
            });
        }
        FoolingFunction::new(
            FoolingSpec::new(points, self.r, self.theta)?,
            self.mc_samples,
            self.seed,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
