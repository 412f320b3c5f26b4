//! Shallow networks in mean-field scaling and their training flow.
//!
//! A width-`m` network `f(x) = (1/m) Σ a_i σ(w_i·x + b_i)` is stored as the
//! empirical measure of its particles `(a_i, w_i, b_i)`. Training follows the
//! particle ODE `θ̇_i = −m ∇_{θ_i} R`, the form the 2-Wasserstein gradient flow
//! of the risk takes on such measures.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, sample_ball_offset, TorusPoint};
use crate::integrand::{Estimate, Integrand};

/// Activation functions with closed-form Lipschitz data.
///
/// Derivatives at kinks use `σ'(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Activation {
    Relu,
    Tanh,
    /// `σ(x) = x²`.
    Square,
    /// `σ(x) = max{0, x}^k` with `k ≥ 2`.
    ReluPower(u32),
}

/// Lipschitz behaviour of an activation: globally `L`, or `L_x ≤ C x^δ` for
/// `x ≥ threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LipschitzClass {
    Global { l: f64 },
    Local { delta: f64, c: f64, threshold: f64 },
}

impl Activation {
    #[inline]
    pub fn value(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Square => x * x,
            Activation::ReluPower(k) => x.max(0.0).powi(k as i32),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Square => 2.0 * x,
            Activation::ReluPower(k) => {
                if x > 0.0 {
                    k as f64 * x.powi(k as i32 - 1)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn lipschitz_class(self) -> LipschitzClass {
        match self {
            Activation::Relu | Activation::Tanh => LipschitzClass::Global { l: 1.0 },
            Activation::Square => LipschitzClass::Local {
                delta: 1.0,
                c: 2.0,
                threshold: 0.0,
            },
            Activation::ReluPower(k) => LipschitzClass::Local {
                delta: k as f64 - 1.0,
                c: k as f64,
                threshold: 0.0,
            },
        }
    }

    /// `L_x = sup |σ'|` on `[−x, x]`.
    pub fn local_lipschitz(self, x: f64) -> f64 {
        match self {
            Activation::Relu | Activation::Tanh => 1.0,
            Activation::Square => 2.0 * x,
            Activation::ReluPower(k) => k as f64 * x.powi(k as i32 - 1),
        }
    }

    pub fn global_lipschitz(self) -> Option<f64> {
        match self.lipschitz_class() {
            LipschitzClass::Global { l } => Some(l),
            LipschitzClass::Local { .. } => None,
        }
    }

    /// ReLU is positively homogeneous and its Barron norm drops the `+1` term.
    pub fn is_relu(self) -> bool {
        self == Activation::Relu
    }

    pub fn name(self) -> String {
        match self {
            Activation::Relu => "relu".into(),
            Activation::Tanh => "tanh".into(),
            Activation::Square => "square".into(),
            Activation::ReluPower(k) => format!("relu^{k}"),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "square" | "x^2" => Ok(Activation::Square),
            other => {
                let k = other
                    .strip_prefix("relu^")
                    .and_then(|k| k.parse::<u32>().ok())
                    .ok_or_else(|| Error::UnknownActivation(s.to_string()))?;
                match k {
                    0 => Err(Error::UnknownActivation(s.to_string())),
                    1 => Ok(Activation::Relu),
                    k => Ok(Activation::ReluPower(k)),
                }
            }
        }
    }
}

impl TryFrom<String> for Activation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Activation> for String {
    fn from(a: Activation) -> Self {
        a.name()
    }
}

/// One neuron `a σ(w·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub a: f64,
    pub w: Vec<f64>,
    pub b: f64,
}

/// Empirical measure `(1/m) Σ δ_{(a_i, w_i, b_i)}`, stored flat as
/// `[a, w_1..w_d, b]` per particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Particle>", into = "Vec<Particle>")]
pub struct ParticleMeasure {
    d: usize,
    params: Vec<f64>,
}

impl ParticleMeasure {
    pub fn new(particles: Vec<Particle>) -> Result<Self> {
        let d = particles
            .first()
            .map(|p| p.w.len())
            .ok_or_else(|| Error::Empty("particle measure".into()))?;
        let mut params = Vec::with_capacity(particles.len() * (d + 2));
        for p in &particles {
            geometry::check_dim(d, p.w.len())?;
            params.push(p.a);
            params.extend_from_slice(&p.w);
            params.push(p.b);
        }
        Self::from_flat(d, params)
    }

    pub fn from_flat(d: usize, params: Vec<f64>) -> Result<Self> {
        if d == 0 || params.is_empty() || !params.len().is_multiple_of(d + 2) {
            return Err(Error::param("params", "need m >= 1 particles of length d + 2"));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("params", "entries must be finite"));
        }
        Ok(Self { d, params })
    }

    pub fn zeros(m: usize, d: usize) -> Result<Self> {
        Self::from_flat(d, vec![0.0; m * (d + 2)])
    }

    /// `a = 0`, `w, b ~ N(0, 1/(d+1))`.
    pub fn initialize<R: Rng + ?Sized>(m: usize, d: usize, rng: &mut R) -> Result<Self> {
        let s = 1.0 / ((d + 1) as f64).sqrt();
        let mut params = vec![0.0; m * (d + 2)];
        for row in params.chunks_mut(d + 2) {
            for v in &mut row[1..] {
                let z: f64 = StandardNormal.sample(rng);
                *v = s * z;
            }
        }
        Self::from_flat(d, params)
    }

    /// A uniform sample of `{θ ∈ R^{m(d+2)} : |θ|² ≤ mD}`, so `N(π) ≤ D`.
    pub fn sample_bounded_moment<R: Rng + ?Sized>(m: usize, d: usize, moment: f64, rng: &mut R) -> Result<Self> {
        if !(moment > 0.0) || m == 0 {
            return Err(Error::param("D", "need D > 0 and m >= 1"));
        }
        let mut params = vec![0.0; m * (d + 2)];
        sample_ball_offset((m as f64 * moment).sqrt(), rng, &mut params);
        Self::from_flat(d, params)
    }

    pub fn m(&self) -> usize {
        self.params.len() / (self.d + 2)
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn stride(&self) -> usize {
        self.d + 2
    }

    pub fn particle(&self, i: usize) -> Particle {
        let row = &self.params[i * (self.d + 2)..(i + 1) * (self.d + 2)];
        Particle {
            a: row[0],
            w: row[1..=self.d].to_vec(),
            b: row[self.d + 1],
        }
    }

    pub fn particles(&self) -> Vec<Particle> {
        (0..self.m()).map(|i| self.particle(i)).collect()
    }

    /// Every particle twice; the measure is unchanged.
    pub fn duplicated(&self) -> Self {
        let mut params = self.params.clone();
        params.extend_from_slice(&self.params);
        Self { d: self.d, params }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            d: self.d,
            params: self.params.iter().map(|v| v * lambda).collect(),
        }
    }

    /// Multiplies every outer weight `a_i` by `lambda`.
    pub fn scale_outer(&mut self, lambda: f64) {
        let s = self.stride();
        self.params.iter_mut().step_by(s).for_each(|a| *a *= lambda);
    }
}

impl TryFrom<Vec<Particle>> for ParticleMeasure {
    type Error = Error;
    fn try_from(v: Vec<Particle>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParticleMeasure> for Vec<Particle> {
    fn from(p: ParticleMeasure) -> Self {
        p.particles()
    }
}

#[inline]
fn network_value(params: &[f64], d: usize, act: Activation, x: &[f64]) -> f64 {
    let stride = d + 2;
    let m = params.len() / stride;
    let mut acc = 0.0;
    for row in params.chunks_exact(stride) {
        let z: f64 = row[1..=d].iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + row[d + 1];
        acc += row[0] * act.value(z);
    }
    acc / m as f64
}

/// `(1/m) Σ a_i σ(w_i·x + b_i)`.
pub fn forward(pi: &ParticleMeasure, act: Activation, x: &TorusPoint) -> Result<f64> {
    geometry::check_dim(pi.d, x.dim())?;
    Ok(network_value(&pi.params, pi.d, act, x.coords()))
}

/// [`forward`] on raw coordinates, without the dimension check.
pub fn forward_raw(pi: &ParticleMeasure, act: Activation, x: &[f64]) -> f64 {
    network_value(&pi.params, pi.d, act, x)
}

/// A network as an evaluable function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub measure: ParticleMeasure,
    pub activation: Activation,
}

impl Integrand for Network {
    fn dim(&self) -> usize {
        self.measure.d
    }
    fn eval(&self, x: &[f64]) -> f64 {
        forward_raw(&self.measure, self.activation, x)
    }
}

/// Which data the risk integrates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskData {
    PopulationGrid,
    PopulationSamples,
    Empirical,
}

/// A fixed risk functional: nodes, weights summing to 1 and target values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    d: usize,
    kind: RiskData,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    targets: Vec<f64>,
}

impl RiskSpec {
    pub fn from_values(
        d: usize,
        kind: RiskData,
        nodes: Vec<f64>,
        weights: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if d == 0 || nodes.len() != weights.len() * d || weights.len() != targets.len() || weights.is_empty() {
            return Err(Error::param("nodes", "node, weight and target counts disagree"));
        }
        if let Some((i, v)) = nodes.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutsideCube { index: i, value: *v });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::param(
                "weights",
                format!("must be nonnegative and sum to 1, got {total}"),
            ));
        }
        Ok(Self {
            d,
            kind,
            nodes,
            weights,
            targets,
        })
    }

    fn tabulate(target: &(impl Integrand + ?Sized), d: usize, kind: RiskData, nodes: Vec<f64>) -> Result<Self> {
        geometry::check_dim(d, target.dim())?;
        let targets: Vec<f64> = nodes.par_chunks(d).map(|x| target.eval(x)).collect();
        let n = targets.len();
        Self::from_values(d, kind, nodes, vec![1.0 / n as f64; n], targets)
    }

    /// Midpoint tensor grid with `per_axis^d` nodes.
    pub fn population_grid(target: &(impl Integrand + ?Sized), per_axis: usize) -> Result<Self> {
        let d = target.dim();
        if per_axis == 0 {
            return Err(Error::param("per_axis", "must be positive"));
        }
        Self::tabulate(target, d, RiskData::PopulationGrid, midpoint_grid(d, per_axis)?)
    }

    /// Fixed uniform Monte Carlo nodes.
    pub fn population_samples<R: Rng + ?Sized>(
        target: &(impl Integrand + ?Sized),
        count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = target.dim();
        if count == 0 {
            return Err(Error::param("count", "must be positive"));
        }
        let nodes = (0..count).flat_map(|_| geometry::sample_unit_cube(d, rng)).collect();
        Self::tabulate(target, d, RiskData::PopulationSamples, nodes)
    }

    /// Grid for `d ≤ 3`, Monte Carlo nodes otherwise, with about `budget` nodes.
    pub fn population<R: Rng + ?Sized>(target: &(impl Integrand + ?Sized), budget: usize, rng: &mut R) -> Result<Self> {
        let d = target.dim();
        if d <= 3 {
            let per_axis = ((budget.max(1) as f64).powf(1.0 / d as f64).round() as usize).max(1);
            Self::population_grid(target, per_axis)
        } else {
            Self::population_samples(target, budget, rng)
        }
    }

    /// Equal weights on the given samples.
    pub fn empirical(target: &(impl Integrand + ?Sized), samples: &[TorusPoint]) -> Result<Self> {
        let d = target.dim();
        if samples.is_empty() {
            return Err(Error::Empty("samples".into()));
        }
        let mut nodes = Vec::with_capacity(samples.len() * d);
        for s in samples {
            geometry::check_dim(d, s.dim())?;
            nodes.extend_from_slice(s.coords());
        }
        Self::tabulate(target, d, RiskData::Empirical, nodes)
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn kind(&self) -> RiskData {
        self.kind
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.d..(j + 1) * self.d]
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// Cell midpoints of the uniform grid with `per_axis` cells per axis, row-major.
pub fn midpoint_grid(d: usize, per_axis: usize) -> Result<Vec<f64>> {
    let count = (per_axis as u64)
        .checked_pow(d as u32)
        .filter(|&c| c <= 1 << 26)
        .ok_or_else(|| Error::param("per_axis", "grid too large"))? as usize;
    let mut out = Vec::with_capacity(count * d);
    let mut idx = vec![0usize; d];
    for _ in 0..count {
        out.extend(idx.iter().map(|&i| (i as f64 + 0.5) / per_axis as f64));
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

fn residuals(params: &[f64], d: usize, act: Activation, spec: &RiskSpec) -> Vec<f64> {
    spec.nodes
        .par_chunks(d)
        .zip(spec.targets.par_iter())
        .map(|(x, t)| network_value(params, d, act, x) - t)
        .collect()
}

fn risk_from_residuals(res: &[f64], spec: &RiskSpec) -> f64 {
    0.5 * res.iter().zip(&spec.weights).map(|(e, w)| w * e * e).sum::<f64>()
}

fn check_spec(pi: &ParticleMeasure, spec: &RiskSpec) -> Result<()> {
    geometry::check_dim(spec.d, pi.d)
}

/// `½ Σ_j weight_j (f_π(x_j) − f*(x_j))²`.
pub fn risk(pi: &ParticleMeasure, act: Activation, spec: &RiskSpec) -> Result<f64> {
    check_spec(pi, spec)?;
    Ok(risk_from_residuals(&residuals(&pi.params, pi.d, act, spec), spec))
}

/// Risk and `m ∇_{θ_i} R` for every particle, in parameter layout.
fn risk_and_gradient(params: &[f64], d: usize, act: Activation, spec: &RiskSpec) -> (f64, Vec<f64>) {
    let res = residuals(params, d, act, spec);
    let r = risk_from_residuals(&res, spec);
    let stride = d + 2;
    let mut grad = vec![0.0; params.len()];
    grad.par_chunks_mut(stride)
        .zip(params.par_chunks(stride))
        .for_each(|(g, p)| {
            let a = p[0];
            let w = &p[1..=d];
            let b = p[d + 1];
            for j in 0..res.len() {
                let x = &spec.nodes[j * d..(j + 1) * d];
                let z: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
                let c = spec.weights[j] * res[j];
                if c == 0.0 {
                    continue;
                }
                g[0] += c * act.value(z);
                let s = c * a * act.derivative(z);
                for k in 0..d {
                    g[1 + k] += s * x[k];
                }
                g[d + 1] += s;
            }
        });
    (r, grad)
}

/// `m ∇_{θ_i} R` for every particle; the particle velocity is its negative.
pub fn flow_gradient(pi: &ParticleMeasure, act: Activation, spec: &RiskSpec) -> Result<Vec<f64>> {
    check_spec(pi, spec)?;
    Ok(risk_and_gradient(&pi.params, pi.d, act, spec).1)
}

/// Central differences of `m R` in every parameter.
pub fn finite_difference_gradient(
    pi: &ParticleMeasure,
    act: Activation,
    spec: &RiskSpec,
    step: f64,
) -> Result<Vec<f64>> {
    check_spec(pi, spec)?;
    let m = pi.m() as f64;
    let mut p = pi.params.clone();
    let mut out = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let orig = p[k];
        p[k] = orig + step;
        let up = risk_from_residuals(&residuals(&p, pi.d, act, spec), spec);
        p[k] = orig - step;
        let down = risk_from_residuals(&residuals(&p, pi.d, act, spec), spec);
        p[k] = orig;
        out.push(m * (up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Smallest `|w_i·x_j + b_i|` over particles and nodes.
pub fn min_preactivation(pi: &ParticleMeasure, spec: &RiskSpec) -> f64 {
    let d = pi.d;
    let mut best = f64::INFINITY;
    for p in pi.params.chunks_exact(d + 2) {
        for j in 0..spec.len() {
            let z: f64 = p[1..=d].iter().zip(spec.node(j)).map(|(w, x)| w * x).sum::<f64>() + p[d + 1];
            best = best.min(z.abs());
        }
    }
    best
}

/// `N(π) = (1/m) Σ (a_i² + |w_i|² + b_i²)`.
pub fn second_moment(pi: &ParticleMeasure) -> f64 {
    pi.params.iter().map(|v| v * v).sum::<f64>() / pi.m() as f64
}

/// `(1/m) Σ |a_i| (|w_i|_1 + |b_i|)` for ReLU, with an extra `+1` inside the
/// bracket otherwise. An upper bound on the Barron norm of the network.
pub fn barron_direct(pi: &ParticleMeasure, act: Activation) -> f64 {
    let d = pi.d;
    let extra = if act.is_relu() { 0.0 } else { 1.0 };
    pi.params
        .chunks_exact(d + 2)
        .map(|p| p[0].abs() * (p[1..=d].iter().map(|w| w.abs()).sum::<f64>() + p[d + 1].abs() + extra))
        .sum::<f64>()
        / pi.m() as f64
}

/// `(√d/2 + 1) N(π) + 1/2`.
pub fn barron_bound(pi: &ParticleMeasure) -> f64 {
    barron_bound_from_moment(second_moment(pi), pi.d)
}

pub fn barron_bound_from_moment(moment: f64, d: usize) -> f64 {
    ((d as f64).sqrt() / 2.0 + 1.0) * moment + 0.5
}

/// `L · barron_direct(π)` for a globally `L`-Lipschitz activation.
pub fn lipschitz_bound(pi: &ParticleMeasure, act: Activation) -> Result<f64> {
    let l = act
        .global_lipschitz()
        .ok_or_else(|| Error::NotGloballyLipschitz(act.name()))?;
    Ok(l * barron_direct(pi, act))
}

/// Largest `|f(x) − f(y)| / |x − y|_2` over random pairs in `Q`, half of them
/// at distance at most `1e-3`.
pub fn empirical_lipschitz_quotient<R: Rng + ?Sized>(
    pi: &ParticleMeasure,
    act: Activation,
    pairs: usize,
    rng: &mut R,
) -> f64 {
    let d = pi.d;
    let mut best: f64 = 0.0;
    let mut off = vec![0.0; d];
    for k in 0..pairs {
        let x = geometry::sample_unit_cube(d, rng);
        let y = if k % 2 == 0 {
            geometry::sample_unit_cube(d, rng)
        } else {
            sample_ball_offset(1e-3, rng, &mut off);
            x.iter().zip(&off).map(|(a, b)| (a + b).clamp(0.0, 1.0)).collect()
        };
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist > 0.0 {
            let q = (forward_raw(pi, act, &x) - forward_raw(pi, act, &y)).abs() / dist;
            best = best.max(q);
        }
    }
    best
}

/// Integrator settings for [`flow_integrate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub t_end: f64,
    /// Checkpoint times in `(0, t_end]`; `t = 0` is always recorded.
    pub checkpoints: Vec<f64>,
    pub max_step: f64,
    /// Initial step is `min(max_step, step_factor / |∇|_∞)`.
    pub step_factor: f64,
    /// Relative tolerance used by the trajectory checks.
    pub tolerance: f64,
    pub max_halvings: u32,
}

impl FlowConfig {
    /// `count` evenly spaced checkpoints ending at `t_end`.
    pub fn uniform(t_end: f64, count: usize) -> Self {
        let checkpoints = (1..=count).map(|k| t_end * k as f64 / count as f64).collect();
        Self {
            t_end,
            checkpoints,
            max_step: 1e-3,
            step_factor: 0.1,
            tolerance: 1e-8,
            max_halvings: 40,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", "must be positive"));
        }
        if !(self.max_step > 0.0 && self.step_factor > 0.0 && self.tolerance >= 0.0) {
            return Err(Error::param("max_step", "step controls must be positive"));
        }
        let ok = self.checkpoints.windows(2).all(|w| w[0] < w[1])
            && self.checkpoints.first().is_none_or(|&t| t > 0.0)
            && self.checkpoints.last().is_none_or(|&t| t <= self.t_end);
        if !ok {
            return Err(Error::param("checkpoints", "must increase strictly within (0, t_end]"));
        }
        Ok(())
    }
}

/// Diagnostics recorded at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub risk: f64,
    pub second_moment: f64,
    pub barron_bound: f64,
    pub barron_direct: f64,
}

impl Checkpoint {
    fn of(t: f64, risk: f64, pi: &ParticleMeasure, act: Activation) -> Self {
        Self {
            t,
            risk,
            second_moment: second_moment(pi),
            barron_bound: barron_bound(pi),
            barron_direct: barron_direct(pi, act),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub checkpoints: Vec<Checkpoint>,
    pub scheme: String,
    pub initial_step: f64,
    pub min_step: f64,
    pub steps: u64,
    pub halvings: u64,
    pub tolerance: f64,
    pub blow_up: bool,
    pub final_measure: ParticleMeasure,
}

impl Trajectory {
    pub fn initial(&self) -> &Checkpoint {
        &self.checkpoints[0]
    }
}

/// Integrates `θ̇_i = −m ∇_{θ_i} R` with classical RK4.
///
/// A step that would raise the risk is retried at half the size; after
/// `max_halvings` retries it is accepted. Ten consecutive accepted steps let the
/// size double again, up to the initial step. Steps are shortened to land on
/// every checkpoint exactly.
pub fn flow_integrate(pi0: &ParticleMeasure, act: Activation, spec: &RiskSpec, cfg: &FlowConfig) -> Result<Trajectory> {
    check_spec(pi0, spec)?;
    cfg.validate()?;
    let d = pi0.d;
    let mut theta = pi0.params.clone();
    let (mut r, mut g) = risk_and_gradient(&theta, d, act, spec);
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h0 = if gmax > 0.0 {
        cfg.max_step.min(cfg.step_factor / gmax)
    } else {
        cfg.max_step
    };
    let mut traj = Trajectory {
        checkpoints: vec![Checkpoint::of(0.0, r, pi0, act)],
        scheme: "rk4".into(),
        initial_step: h0,
        min_step: h0,
        steps: 0,
        halvings: 0,
        tolerance: cfg.tolerance,
        blow_up: false,
        final_measure: pi0.clone(),
    };
    let mut t = 0.0;
    let mut h = h0;
    let mut streak = 0u32;
    let n = theta.len();
    let mut stage = vec![0.0; n];
    let axpy = |out: &mut Vec<f64>, base: &[f64], s: f64, dir: &[f64]| {
        for k in 0..n {
            out[k] = base[k] - s * dir[k];
        }
    };
    'outer: for &target in &cfg.checkpoints {
        while t < target {
            let rem = target - t;
            let mut dt = if rem <= h * (1.0 + 1e-6) { rem } else { h };
            let mut tries = 0;
            let (new_theta, new_r, new_g) = loop {
                axpy(&mut stage, &theta, 0.5 * dt, &g);
                let (_, k2) = risk_and_gradient(&stage, d, act, spec);
                axpy(&mut stage, &theta, 0.5 * dt, &k2);
                let (_, k3) = risk_and_gradient(&stage, d, act, spec);
                axpy(&mut stage, &theta, dt, &k3);
                let (_, k4) = risk_and_gradient(&stage, d, act, spec);
                let cand: Vec<f64> = (0..n)
                    .map(|k| theta[k] - dt / 6.0 * (g[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]))
                    .collect();
                let (cr, cg) = risk_and_gradient(&cand, d, act, spec);
                if !cr.is_finite() || cand.iter().any(|v| !v.is_finite()) {
                    traj.blow_up = true;
                    break 'outer;
                }
                if cr <= r || tries >= cfg.max_halvings {
                    break (cand, cr, cg);
                }
                tries += 1;
                traj.halvings += 1;
                h = dt / 2.0;
                dt = h;
                streak = 0;
            };
            traj.min_step = traj.min_step.min(dt);
            t = if dt >= target - t { target } else { t + dt };
            theta = new_theta;
            r = new_r;
            g = new_g;
            traj.steps += 1;
            streak += 1;
            if streak >= 10 && h < h0 {
                h = (2.0 * h).min(h0);
                streak = 0;
            }
        }
        let pi = ParticleMeasure {
            d,
            params: theta.clone(),
        };
        traj.checkpoints.push(Checkpoint::of(target, r, &pi, act));
    }
    traj.final_measure = ParticleMeasure { d, params: theta };
    Ok(traj)
}

/// Outcome of a checkpoint-wise inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub pass: bool,
    /// Largest `lhs / rhs` over checkpoints.
    pub worst_ratio: f64,
    /// Indices of violating checkpoints.
    pub violations: Vec<usize>,
}

fn check_all(
    traj: &Trajectory,
    lhs: impl Fn(&Checkpoint) -> f64,
    rhs: impl Fn(&Checkpoint) -> f64,
) -> InequalityReport {
    let tol = traj.tolerance;
    let mut worst: f64 = 0.0;
    let mut violations = Vec::new();
    for (i, c) in traj.checkpoints.iter().enumerate() {
        let (l, r) = (lhs(c), rhs(c));
        if r > 0.0 {
            worst = worst.max(l / r);
        } else if l > 0.0 {
            worst = f64::INFINITY;
        }
        if l > r * (1.0 + tol) + tol {
            violations.push(i);
        }
    }
    InequalityReport {
        pass: violations.is_empty(),
        worst_ratio: worst,
        violations,
    }
}

/// `N(π^t) ≤ 2 (N(π^0) + R(π^0) t)` at every checkpoint.
pub fn check_second_moment_growth(traj: &Trajectory, n0: f64, r0: f64) -> InequalityReport {
    check_all(traj, |c| c.second_moment, |c| 2.0 * (n0 + r0 * c.t))
}

/// `barron_bound(π^t) ≤ (√d + 2)(N(π^0) + R(π^0) t) + 1/2` at every checkpoint.
pub fn check_barron_growth(traj: &Trajectory, d: usize, n0: f64, r0: f64) -> InequalityReport {
    let c = (d as f64).sqrt() + 2.0;
    check_all(traj, |k| k.barron_bound, |k| c * (n0 + r0 * k.t) + 0.5)
}

/// `barron_direct ≤ barron_bound` at every checkpoint.
pub fn check_barron_chain(traj: &Trajectory) -> InequalityReport {
    check_all(traj, |k| k.barron_direct, |k| k.barron_bound)
}

/// Risk never rises between consecutive checkpoints beyond `tolerance · R(π^0)`.
pub fn check_dissipation(traj: &Trajectory) -> InequalityReport {
    let r0 = traj.checkpoints[0].risk;
    let slack = traj.tolerance * r0.max(f64::MIN_POSITIVE);
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, w) in traj.checkpoints.windows(2).enumerate() {
        let rise = w[1].risk - w[0].risk;
        worst = worst.max(rise / r0.max(f64::MIN_POSITIVE));
        if rise > slack {
            violations.push(i + 1);
        }
    }
    InequalityReport {
        pass: violations.is_empty(),
        worst_ratio: worst,
        violations,
    }
}

/// Probe-pair estimates of `L_x` on `[−x, x]` from a uniform grid of 20001
/// points.
pub fn local_lipschitz_measure(act: Activation, x_values: &[f64]) -> Result<Vec<f64>> {
    const POINTS: usize = 20_001;
    x_values
        .iter()
        .map(|&x| {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::param("x", format!("{x} must be positive")));
            }
            let step = 2.0 * x / (POINTS - 1) as f64;
            let mut best: f64 = 0.0;
            let mut prev = act.value(-x);
            for k in 1..POINTS {
                let u = if k == POINTS - 1 { x } else { -x + k as f64 * step };
                let v = act.value(u);
                best = best.max((v - prev).abs() / step);
                prev = v;
            }
            Ok(best)
        })
        .collect()
}

/// `L_{√(mD(d+1))} · mD √(d+1) / (2√n)`.
pub fn rademacher_bound(m: usize, moment: f64, n: usize, d: usize, act: Activation) -> Result<f64> {
    if !(moment > 0.0) || m == 0 || n == 0 {
        return Err(Error::param("D", "need D > 0, m >= 1, n >= 1"));
    }
    let md = m as f64 * moment;
    let l = act.local_lipschitz((md * (d + 1) as f64).sqrt());
    Ok(l * md * ((d + 1) as f64).sqrt() / (2.0 * (n as f64).sqrt()))
}

/// Members of `F_{m,D}` drawn uniformly from the parameter ball.
pub fn sample_bounded_family<R: Rng + ?Sized>(
    count: usize,
    m: usize,
    moment: f64,
    d: usize,
    act: Activation,
    rng: &mut R,
) -> Result<Vec<Network>> {
    (0..count)
        .map(|_| {
            Ok(Network {
                measure: ParticleMeasure::sample_bounded_moment(m, d, moment, rng)?,
                activation: act,
            })
        })
        .collect()
}

/// Monte Carlo `E_ζ sup_f (1/n) Σ ζ_i f(X_i)` with Rademacher signs `ζ`.
pub fn empirical_rademacher<F: Integrand, R: Rng + ?Sized>(
    family: &[F],
    points: &[TorusPoint],
    sign_trials: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if family.is_empty() || points.is_empty() {
        return Err(Error::Empty("family and points must be nonempty".into()));
    }
    if sign_trials == 0 {
        return Err(Error::param("sign_trials", "must be positive"));
    }
    for f in family {
        geometry::check_dim(points[0].dim(), f.dim())?;
    }
    let values: Vec<Vec<f64>> = family
        .par_iter()
        .map(|f| points.iter().map(|p| f.eval(p.coords())).collect())
        .collect();
    let n = points.len() as f64;
    let sups: Vec<f64> = (0..sign_trials)
        .map(|_| {
            let signs: Vec<f64> = (0..points.len())
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            values
                .iter()
                .map(|row| row.iter().zip(&signs).map(|(v, s)| v * s).sum::<f64>() / n)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(Estimate::from_samples(&sups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::FnIntegrand;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn tp(c: &[f64]) -> TorusPoint {
        TorusPoint::new(c.to_vec()).unwrap()
    }

    fn one(a: f64, w: &[f64], b: f64) -> ParticleMeasure {
        ParticleMeasure::new(vec![Particle { a, w: w.to_vec(), b }]).unwrap()
    }

    fn random_measure(m: usize, d: usize, seed: u64) -> ParticleMeasure {
        let mut rng = seed::stream(seed);
        let params = (0..m * (d + 2))
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        ParticleMeasure::from_flat(d, params).unwrap()
    }

    fn smooth_target(d: usize) -> FnIntegrand<impl Fn(&[f64]) -> f64 + Sync> {
        FnIntegrand::new(d, |x: &[f64]| {
            (2.0 * std::f64::consts::PI * x[0]).sin() + x.iter().sum::<f64>() * 0.3
        })
    }

    #[test]
    fn activation_values_and_names() {
        assert_eq!(Activation::Relu.value(-1.0), 0.0);
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::ReluPower(3).derivative(2.0), 12.0);
        assert_eq!(Activation::Square.derivative(-1.5), -3.0);
        for a in [
            Activation::Relu,
            Activation::Tanh,
            Activation::Square,
            Activation::ReluPower(3),
        ] {
            assert_eq!(a.name().parse::<Activation>().unwrap(), a);
        }
        assert_eq!("relu^1".parse::<Activation>().unwrap(), Activation::Relu);
        assert!("sigmoidish".parse::<Activation>().is_err());
        let json = serde_json::to_string(&Activation::ReluPower(2)).unwrap();
        assert_eq!(json, "\"relu^2\"");
    }

    #[test]
    fn global_lipschitz_classes_hold_on_probes() {
        let mut rng = seed::stream(1);
        for act in [Activation::Relu, Activation::Tanh] {
            let l = act.global_lipschitz().unwrap();
            for _ in 0..10_000 {
                let a = rng.random_range(-10.0..10.0);
                let b = rng.random_range(-10.0..10.0);
                assert!((act.value(a) - act.value(b)).abs() <= l * (a - b).abs() + 1e-15);
            }
        }
        assert!(Activation::Square.global_lipschitz().is_none());
    }

    #[test]
    fn local_lipschitz_estimates() {
        let sq = local_lipschitz_measure(Activation::Square, &[2.0]).unwrap()[0];
        assert!((sq - 4.0).abs() < 1e-3);
        let k3 = local_lipschitz_measure(Activation::ReluPower(3), &[3.0]).unwrap()[0];
        assert!((k3 - 27.0).abs() < 0.02);
        for x in [0.5, 3.0, 40.0] {
            let r = local_lipschitz_measure(Activation::Relu, &[x]).unwrap()[0];
            assert!((r - 1.0).abs() < 1e-9);
            for act in [Activation::Square, Activation::ReluPower(2), Activation::ReluPower(4)] {
                let est = local_lipschitz_measure(act, &[x]).unwrap()[0];
                assert!(est <= act.local_lipschitz(x) * (1.0 + 1e-12));
                if let LipschitzClass::Local { delta, c, .. } = act.lipschitz_class() {
                    assert!(est <= c * x.powf(delta) * (1.0 + 1e-12));
                }
            }
        }
        assert!(local_lipschitz_measure(Activation::Relu, &[0.0]).is_err());
    }

    #[test]
    fn forward_examples() {
        let x = tp(&[0.3, 0.7, 0.1]);
        assert_eq!(
            forward(&one(1.0, &[0.0, 0.0, 0.0], 1.0), Activation::Relu, &x).unwrap(),
            1.0
        );
        let zero_a = random_measure(5, 3, 2).scaled(1.0);
        let mut z = zero_a.clone();
        z.scale_outer(0.0);
        assert_eq!(forward(&z, Activation::Tanh, &x).unwrap(), 0.0);
        let p = one(0.7, &[0.2, -0.4, 1.0], 0.1);
        let v1 = forward(&p, Activation::Tanh, &x).unwrap();
        let v2 = forward(&p.duplicated(), Activation::Tanh, &x).unwrap();
        assert_eq!(v1, v2);
        assert!(forward(&p, Activation::Tanh, &tp(&[0.1, 0.2])).is_err());
    }

    #[test]
    fn risk_examples() {
        let zero_target = FnIntegrand::new(1, |_: &[f64]| 0.0);
        let spec = RiskSpec::empirical(&zero_target, &[tp(&[0.5])]).unwrap();
        let p = one(2.0, &[0.0], 1.0);
        assert_eq!(risk(&p, Activation::Relu, &spec).unwrap(), 2.0);
        let mut q = p.clone();
        q.scale_outer(0.0);
        assert_eq!(risk(&q, Activation::Relu, &spec).unwrap(), 0.0);
        let pi = random_measure(4, 2, 3);
        let net = Network {
            measure: pi.clone(),
            activation: Activation::Tanh,
        };
        let spec = RiskSpec::population_grid(&net, 7).unwrap();
        assert_eq!(risk(&pi, Activation::Tanh, &spec).unwrap(), 0.0);
        assert!(RiskSpec::from_values(1, RiskData::Empirical, vec![0.5], vec![0.9], vec![0.0]).is_err());
        assert!(RiskSpec::from_values(1, RiskData::Empirical, vec![1.5], vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn grid_layout() {
        let g = midpoint_grid(2, 2).unwrap();
        assert_eq!(g, vec![0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75]);
        let spec = RiskSpec::population(&smooth_target(3), 512, &mut seed::stream(0)).unwrap();
        assert_eq!(spec.len(), 512);
        assert_eq!(spec.kind(), RiskData::PopulationGrid);
        let spec5 = RiskSpec::population(&smooth_target(5), 300, &mut seed::stream(0)).unwrap();
        assert_eq!(spec5.kind(), RiskData::PopulationSamples);
    }

    #[test]
    fn moment_and_barron_examples() {
        let p = one(1.0, &[1.0, 0.0, 0.0], -1.0);
        assert_eq!(second_moment(&p), 3.0);
        assert_eq!(second_moment(&ParticleMeasure::zeros(3, 2).unwrap()), 0.0);
        let q = random_measure(6, 3, 4);
        assert!((second_moment(&q.scaled(1.7)) - 1.7f64.powi(2) * second_moment(&q)).abs() < 1e-12);
        let r = one(2.0, &[1.0, 0.0, 0.0], 1.0);
        assert_eq!(barron_direct(&r, Activation::Relu), 4.0);
        assert_eq!(barron_direct(&r, Activation::Tanh), 6.0);
        assert_eq!(
            barron_direct(&ParticleMeasure::zeros(2, 3).unwrap(), Activation::Tanh),
            0.0
        );
        let four = one(1.0, &[1.0, 0.0, 0.0, 0.0], -1.0);
        assert_eq!(barron_bound(&four), 6.5);
        assert_eq!(barron_bound(&ParticleMeasure::zeros(1, 4).unwrap()), 0.5);
    }

    #[test]
    fn lipschitz_bound_examples() {
        let p = one(1.0, &[1.0, 0.0, 0.0], 0.0);
        assert_eq!(lipschitz_bound(&p, Activation::Relu).unwrap(), 1.0);
        let q = empirical_lipschitz_quotient(&p, Activation::Relu, 2000, &mut seed::stream(5));
        assert!(q <= 1.0 + 1e-12);
        assert_eq!(
            lipschitz_bound(&ParticleMeasure::zeros(2, 3).unwrap(), Activation::Tanh).unwrap(),
            0.0
        );
        let mut s = p.clone();
        s.scale_outer(3.0);
        assert_eq!(lipschitz_bound(&s, Activation::Relu).unwrap(), 3.0);
        assert!(matches!(
            lipschitz_bound(&p, Activation::Square),
            Err(Error::NotGloballyLipschitz(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let target = smooth_target(3);
        let spec = RiskSpec::population_grid(&target, 5).unwrap();
        for s in 0..5 {
            let pi = random_measure(3, 3, 10 + s);
            let g = flow_gradient(&pi, Activation::Tanh, &spec).unwrap();
            let fd = finite_difference_gradient(&pi, Activation::Tanh, &spec, 1e-6).unwrap();
            let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(num / den < 1e-5, "relative error {}", num / den);
        }
    }

    #[test]
    fn stationary_at_zero_risk() {
        let pi = random_measure(4, 3, 20);
        let net = Network {
            measure: pi.clone(),
            activation: Activation::Tanh,
        };
        let spec = RiskSpec::population_grid(&net, 4).unwrap();
        let traj = flow_integrate(&pi, Activation::Tanh, &spec, &FlowConfig::uniform(1.0, 5)).unwrap();
        assert_eq!(traj.checkpoints.len(), 6);
        for c in &traj.checkpoints {
            assert_eq!(c.risk, 0.0);
            assert_eq!(c.second_moment, traj.checkpoints[0].second_moment);
        }
        assert_eq!(traj.final_measure, pi);
    }

    #[test]
    fn flow_dissipates_and_obeys_growth_bounds() {
        let target = smooth_target(3);
        let spec = RiskSpec::population_grid(&target, 6).unwrap();
        let pi0 = ParticleMeasure::initialize(8, 3, &mut seed::stream(30)).unwrap();
        for act in [Activation::Tanh, Activation::Relu] {
            let traj = flow_integrate(&pi0, act, &spec, &FlowConfig::uniform(2.0, 10)).unwrap();
            assert!(!traj.blow_up);
            let c0 = *traj.initial();
            assert!(check_dissipation(&traj).pass);
            assert!(check_second_moment_growth(&traj, c0.second_moment, c0.risk).pass);
            assert!(check_barron_growth(&traj, 3, c0.second_moment, c0.risk).pass);
            assert!(check_barron_chain(&traj).pass);
            let last = traj.checkpoints.last().unwrap();
            assert_eq!(last.t, 2.0);
            assert!(last.risk < c0.risk);
        }
    }

    #[test]
    fn duplicated_particles_follow_the_same_flow() {
        let target = smooth_target(2);
        let spec = RiskSpec::population_grid(&target, 6).unwrap();
        let pi0 = ParticleMeasure::initialize(3, 2, &mut seed::stream(31)).unwrap();
        let cfg = FlowConfig::uniform(0.5, 4);
        let a = flow_integrate(&pi0, Activation::Tanh, &spec, &cfg).unwrap();
        let b = flow_integrate(&pi0.duplicated(), Activation::Tanh, &spec, &cfg).unwrap();
        for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
            assert!((x.risk - y.risk).abs() < 1e-12);
            assert!((x.second_moment - y.second_moment).abs() < 1e-12);
        }
    }

    #[test]
    fn violating_trajectory_is_flagged() {
        let pi = random_measure(2, 3, 40);
        let mut traj = Trajectory {
            checkpoints: vec![Checkpoint::of(0.0, 1.0, &pi, Activation::Tanh)],
            scheme: "rk4".into(),
            initial_step: 1e-3,
            min_step: 1e-3,
            steps: 0,
            halvings: 0,
            tolerance: 1e-8,
            blow_up: false,
            final_measure: pi.clone(),
        };
        let n0 = traj.checkpoints[0].second_moment;
        let mut bad = traj.checkpoints[0];
        bad.t = 1.0;
        bad.second_moment = 2.0 * (n0 + 1.0) + 0.1;
        bad.risk = 2.0;
        traj.checkpoints.push(bad);
        let rep = check_second_moment_growth(&traj, n0, 1.0);
        assert!(!rep.pass);
        assert_eq!(rep.violations, vec![1]);
        assert!(!check_dissipation(&traj).pass);
    }

    #[test]
    fn blow_up_truncates() {
        let target = FnIntegrand::new(1, |_: &[f64]| 1e200);
        let spec = RiskSpec::empirical(&target, &[tp(&[0.5])]).unwrap();
        let pi = one(1.0, &[1.0], 1.0);
        let traj = flow_integrate(&pi, Activation::Square, &spec, &FlowConfig::uniform(1.0, 4)).unwrap();
        assert!(traj.blow_up);
        assert!(traj.checkpoints.len() < 5);
    }

    #[test]
    fn rademacher_bound_examples() {
        assert!((rademacher_bound(1, 1.0, 100, 3, Activation::Relu).unwrap() - 0.1).abs() < 1e-15);
        assert!((rademacher_bound(1, 1.0, 100, 3, Activation::Square).unwrap() - 0.4).abs() < 1e-15);
        let a = rademacher_bound(2, 0.5, 25, 4, Activation::Tanh).unwrap();
        let b = rademacher_bound(2, 0.5, 100, 4, Activation::Tanh).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_rademacher_examples() {
        let pts = geometry::uniform_points(100, 3, &mut seed::stream(50));
        let zero = [FnIntegrand::new(3, |_: &[f64]| 0.0)];
        let e = empirical_rademacher(&zero, &pts, 50, &mut seed::stream(1)).unwrap();
        assert_eq!(e.value, 0.0);
        let fam = sample_bounded_family(64, 1, 1.0, 3, Activation::Relu, &mut seed::stream(2)).unwrap();
        for f in &fam {
            assert!(second_moment(&f.measure) <= 1.0);
        }
        let e = empirical_rademacher(&fam, &pts, 200, &mut seed::stream(3)).unwrap();
        assert!(e.value <= 0.1 + 3.0 * e.stderr);
        let single = [FnIntegrand::new(3, |x: &[f64]| x[0])];
        let s = empirical_rademacher(&single, &pts, 200, &mut seed::stream(4)).unwrap();
        assert!(s.value.abs() < 0.05);
    }

    #[test]
    fn measure_serializes_as_particles() {
        let p = random_measure(2, 2, 60);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"a\""));
        let back: ParticleMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn barron_direct_below_bound(seed in any::<u64>(), m in 1usize..6, d in 1usize..6, scale in 0.01f64..10.0) {
            let pi = random_measure(m, d, seed).scaled(scale);
            for act in [Activation::Tanh, Activation::Relu, Activation::Square] {
                prop_assert!(barron_direct(&pi, act) <= barron_bound(&pi));
            }
        }

        #[test]
        fn lipschitz_quotient_below_bound(seed in any::<u64>(), m in 1usize..5) {
            let pi = random_measure(m, 3, seed);
            for act in [Activation::Tanh, Activation::Relu] {
                let q = empirical_lipschitz_quotient(&pi, act, 200, &mut seed::stream(seed ^ 1));
                prop_assert!(q <= lipschitz_bound(&pi, act).unwrap() * (1.0 + 1e-9));
            }
        }
    }
}
