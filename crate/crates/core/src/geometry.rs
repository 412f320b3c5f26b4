//! Flat-torus geometry on `Q = [0,1]^d`.
//!
//! Points of `Q` double as points of `ℝ^d/ℤ^d`. Distances use the nearest-image
//! convention: every coordinate difference is wrapped into `[-1/2, 1/2]` before
//! taking the Euclidean length. This is exact for balls of radius below `1/2`,
//! which is the only regime the crate admits.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the unit cube, stored in `[0,1)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Accepts coordinates in the closed cube `[0,1]`; `1` is identified with `0`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::param("coords", "dimension must be at least 1"));
        }
        let mut coords = coords;
        for (index, c) in coords.iter_mut().enumerate() {
            if !(0.0..=1.0).contains(c) {
                return Err(Error::OutsideCube { index, value: *c });
            }
            if *c == 1.0 {
                *c = 0.0;
            }
        }
        Ok(Self { coords })
    }

    /// Reduces arbitrary finite coordinates modulo 1.
    pub fn wrap(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::param("coords", "dimension must be at least 1"));
        }
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, c)| !c.is_finite()) {
            return Err(Error::OutsideCube { index, value });
        }
        Ok(Self {
            coords: coords.iter().map(|&c| wrap_unit(c)).collect(),
        })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl TryFrom<Vec<f64>> for TorusPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TorusPoint> for Vec<f64> {
    fn from(p: TorusPoint) -> Self {
        p.coords
    }
}

/// The projection `B'_ε(x)` of a Euclidean ball onto `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedBall {
    center: TorusPoint,
    radius: f64,
}

impl ProjectedBall {
    pub fn new(center: TorusPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < 0.5) {
            return Err(Error::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &TorusPoint {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// `v mod 1` in `[0,1)`.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let w = v.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1 for tiny negative inputs
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// A coordinate difference wrapped into `[-1/2, 1/2]`.
#[inline]
pub fn wrap_diff(d: f64) -> f64 {
    d - d.round()
}

/// Nearest-image distance between raw coordinate slices (any real coordinates).
#[inline]
pub fn torus_distance_raw(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| wrap_diff(x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn torus_distance(x: &TorusPoint, y: &TorusPoint) -> Result<f64> {
    check_dim(x.dim(), y.dim())?;
    Ok(torus_distance_raw(&x.coords, &y.coords))
}

pub fn in_projected_ball(x: &TorusPoint, ball: &ProjectedBall) -> Result<bool> {
    Ok(torus_distance(x, &ball.center)? <= ball.radius)
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Volume `ω_d = π^{d/2} / Γ(d/2 + 1)` of the Euclidean unit ball.
///
/// Computed by the two-step recursion `ω_d = 2π/d · ω_{d-2}` from `ω_0 = 1`,
/// `ω_1 = 2`, which avoids evaluating the gamma function.
pub fn unit_ball_volume(d: usize) -> f64 {
    let (mut v, start) = if d.is_multiple_of(2) { (1.0, 2) } else { (2.0, 3) };
    let mut k = start;
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

/// Writes a uniform sample of the centered ball of radius `radius` into `out`.
pub fn sample_ball_offset<R: Rng + ?Sized>(radius: f64, rng: &mut R, out: &mut [f64]) {
    let d = out.len();
    loop {
        let mut norm2 = 0.0;
        for o in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *o = g;
            norm2 += g * g;
        }
        if norm2 > 0.0 {
            let u: f64 = rng.random();
            let scale = radius * u.powf(1.0 / d as f64) / norm2.sqrt();
            out.iter_mut().for_each(|o| *o *= scale);
            return;
        }
    }
}

/// A uniform point of the Euclidean ball `B_radius(center)`.
pub fn sample_uniform_ball<R: Rng + ?Sized>(center: &[f64], radius: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::param("radius", format!("{radius} must be positive")));
    }
    let mut out = vec![0.0; center.len()];
    sample_ball_offset(radius, rng, &mut out);
    out.iter_mut().zip(center).for_each(|(o, c)| *o += c);
    Ok(out)
}

/// A uniform point of `B'_ε(x)`: a Euclidean ball sample wrapped modulo 1.
///
/// Samples whose wrapped distance rounds above the radius are redrawn, so the
/// membership test holds for every output.
pub fn sample_projected_ball<R: Rng + ?Sized>(ball: &ProjectedBall, rng: &mut R) -> TorusPoint {
    let d = ball.center.dim();
    let mut buf = vec![0.0; d];
    loop {
        sample_ball_offset(ball.radius, rng, &mut buf);
        for (b, c) in buf.iter_mut().zip(&ball.center.coords) {
            *b = wrap_unit(*b + c);
        }
        if torus_distance_raw(&buf, &ball.center.coords) <= ball.radius {
            return TorusPoint { coords: buf };
        }
    }
}

/// A uniform point of `[0,1)^d`.
pub fn sample_unit_cube<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// `n` uniform points of `Q`.
pub fn uniform_points<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<TorusPoint> {
    (0..n)
        .map(|_| TorusPoint {
            coords: sample_unit_cube(d, rng),
        })
        .collect()
}

/// Cell list over torus points answering "distance to the nearest center" queries
/// that only need to be exact below a fixed cutoff.
#[derive(Debug, Clone)]
pub struct CenterIndex {
    d: usize,
    centers: Vec<f64>,
    cutoff: f64,
    grid: Option<Grid>,
}

#[derive(Debug, Clone)]
struct Grid {
    per_axis: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
}

const MAX_CELLS: usize = 1 << 22;

impl CenterIndex {
    pub fn new(points: &[TorusPoint], cutoff: f64) -> Self {
        let d = points.first().map_or(1, TorusPoint::dim);
        let centers: Vec<f64> = points.iter().flat_map(|p| p.coords.iter().copied()).collect();
        let n = points.len();
        let per_axis = if cutoff > 0.0 {
            (1.0 / cutoff).floor() as usize
        } else {
            0
        };
        let cells = per_axis.checked_pow(d as u32);
        let use_grid = per_axis >= 3 && cells.is_some_and(|c| c <= MAX_CELLS) && 3usize.saturating_pow(d as u32) < n;
        let grid = use_grid.then(|| {
            let cells = cells.unwrap_or(0);
            let cell_of: Vec<usize> = points.iter().map(|p| cell_index(&p.coords, per_axis)).collect();
            let mut counts = vec![0u32; cells + 1];
            for &c in &cell_of {
                counts[c + 1] += 1;
            }
            for i in 0..cells {
                counts[i + 1] += counts[i];
            }
            let starts = counts.clone();
            let mut fill = counts;
            let mut items = vec![0u32; n];
            for (i, &c) in cell_of.iter().enumerate() {
                items[fill[c] as usize] = i as u32;
                fill[c] += 1;
            }
            Grid {
                per_axis,
                starts,
                items,
            }
        });
        Self {
            d,
            centers,
            cutoff,
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.d..(i + 1) * self.d]
    }

    /// Minimum torus distance from `x` to the centers.
    ///
    /// Exact whenever the true minimum is below the cutoff; otherwise the returned
    /// value is at least the cutoff (possibly infinite).
    pub fn nearest(&self, x: &[f64]) -> f64 {
        match &self.grid {
            None => (0..self.len())
                .map(|i| torus_distance_raw(x, self.center(i)))
                .fold(f64::INFINITY, f64::min),
            Some(g) => {
                let g_axis = g.per_axis as i64;
                let base: Vec<i64> = x
                    .iter()
                    .map(|&c| ((wrap_unit(c) * g.per_axis as f64) as i64).min(g_axis - 1))
                    .collect();
                let mut offset = vec![-1i64; self.d];
                let mut best = f64::INFINITY;
                loop {
                    let mut cell = 0usize;
                    for (b, o) in base.iter().zip(&offset) {
                        cell = cell * g.per_axis + (b + o).rem_euclid(g_axis) as usize;
                    }
                    let (s, e) = (g.starts[cell] as usize, g.starts[cell + 1] as usize);
                    for &i in &g.items[s..e] {
                        best = best.min(torus_distance_raw(x, self.center(i as usize)));
                    }
                    // odometer over {-1,0,1}^d
                    let mut j = 0;
                    loop {
                        if j == self.d {
                            return best;
                        }
                        offset[j] += 1;
                        if offset[j] <= 1 {
                            break;
                        }
                        offset[j] = -1;
                        j += 1;
                    }
                }
            }
        }
    }
}

fn cell_index(coords: &[f64], per_axis: usize) -> usize {
    coords.iter().fold(0, |acc, &c| {
        acc * per_axis + ((c * per_axis as f64) as usize).min(per_axis - 1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn p(c: &[f64]) -> TorusPoint {
        TorusPoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn distance_wraps_across_the_boundary() {
        let dd = torus_distance(&p(&[0.05]), &p(&[0.95])).unwrap();
        assert!((dd - 0.10).abs() < 1e-12);
        assert_eq!(torus_distance(&p(&[0.3, 0.7]), &p(&[0.3, 0.7])).unwrap(), 0.0);
        let diag = torus_distance(&p(&[0.0, 0.0]), &p(&[0.5, 0.5])).unwrap();
        assert!((diag - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_rejects_mismatched_dimensions() {
        assert!(matches!(
            torus_distance(&p(&[0.1]), &p(&[0.1, 0.2])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projected_ball_example_on_the_circle() {
        let ball = ProjectedBall::new(p(&[1.0 / 16.0]), 1.0 / 8.0).unwrap();
        assert!(in_projected_ball(&p(&[0.95]), &ball).unwrap());
        assert!(in_projected_ball(&p(&[1.0 / 16.0]), &ball).unwrap());
        assert!(in_projected_ball(&p(&[0.1]), &ball).unwrap());
        assert!(!in_projected_ball(&p(&[0.5]), &ball).unwrap());
        assert!(!in_projected_ball(&p(&[15.0 / 16.0 - 1e-9]), &ball).unwrap());
    }

    #[test]
    fn radius_at_or_above_half_is_rejected() {
        assert!(matches!(
            ProjectedBall::new(p(&[0.2]), 0.5),
            Err(Error::InvalidRadius(_))
        ));
        assert!(ProjectedBall::new(p(&[0.2]), 0.0).is_err());
    }

    #[test]
    fn cube_constructor_identifies_one_with_zero() {
        assert_eq!(p(&[1.0, 0.5]).coords(), &[0.0, 0.5]);
        assert!(TorusPoint::new(vec![1.5]).is_err());
        assert!(TorusPoint::new(vec![]).is_err());
    }

    #[test]
    fn ball_volumes_match_closed_forms() {
        use std::f64::consts::PI;
        assert_eq!(unit_ball_volume(0), 1.0);
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ball_volume_gamma_recursion() {
        use statrs::function::gamma::gamma;
        for d in 1..=30usize {
            let df = d as f64;
            let rhs =
                unit_ball_volume(d - 1) * std::f64::consts::PI.sqrt() * gamma((df + 1.0) / 2.0) / gamma(df / 2.0 + 1.0);
            let lhs = unit_ball_volume(d);
            assert!(((lhs - rhs) / lhs).abs() < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn ball_sample_mean_is_the_center() {
        let mut rng = seed::stream(11);
        let n = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let s = sample_uniform_ball(&[0.3, -0.2], 1.0, &mut rng).unwrap();
            acc[0] += s[0];
            acc[1] += s[1];
        }
        assert!((acc[0] / n as f64 - 0.3).abs() < 0.01);
        assert!((acc[1] / n as f64 + 0.2).abs() < 0.01);
    }

    #[test]
    fn tiny_ball_collapses_to_center() {
        let mut rng = seed::stream(3);
        let s = sample_uniform_ball(&[0.4, 0.6], 1e-14, &mut rng).unwrap();
        assert!((s[0] - 0.4).abs() < 1e-13 && (s[1] - 0.6).abs() < 1e-13);
        assert!(sample_uniform_ball(&[0.4], 0.0, &mut rng).is_err());
        assert!(sample_uniform_ball(&[0.4], -1.0, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a = sample_uniform_ball(&[0.1, 0.2, 0.3], 0.5, &mut seed::stream(5)).unwrap();
        let b = sample_uniform_ball(&[0.1, 0.2, 0.3], 0.5, &mut seed::stream(5)).unwrap();
        assert_eq!(a, b);
        let ball = ProjectedBall::new(p(&[0.9, 0.05]), 0.2).unwrap();
        assert_eq!(
            sample_projected_ball(&ball, &mut seed::stream(9)),
            sample_projected_ball(&ball, &mut seed::stream(9))
        );
    }

    #[test]
    fn projected_samples_split_by_arc_length() {
        let ball = ProjectedBall::new(p(&[1.0 / 16.0]), 1.0 / 8.0).unwrap();
        let mut rng = seed::stream(21);
        let n = 100_000;
        let mut upper = 0;
        for _ in 0..n {
            let s = sample_projected_ball(&ball, &mut rng);
            assert!(in_projected_ball(&s, &ball).unwrap());
            if s.coords()[0] > 15.0 / 16.0 {
                upper += 1;
            }
        }
        let frac = upper as f64 / n as f64;
        assert!((frac - 0.25).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn projected_samples_are_members_in_higher_dimension() {
        let ball = ProjectedBall::new(p(&[0.99, 0.01, 0.5, 0.0]), 0.45).unwrap();
        let mut rng = seed::stream(2);
        for _ in 0..20_000 {
            let s = sample_projected_ball(&ball, &mut rng);
            assert!(in_projected_ball(&s, &ball).unwrap());
            assert!(s.coords().iter().all(|c| (0.0..1.0).contains(c)));
        }
    }

    #[test]
    fn center_index_agrees_with_brute_force() {
        let mut rng = seed::stream(8);
        for &(n, d, cutoff) in &[(300usize, 3usize, 0.05), (40, 2, 0.2), (5, 3, 0.1), (500, 2, 0.01)] {
            let pts = uniform_points(n, d, &mut rng);
            let idx = CenterIndex::new(&pts, cutoff);
            for _ in 0..2000 {
                let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 1.2 - 0.1).collect();
                let brute = pts
                    .iter()
                    .map(|c| torus_distance_raw(&x, c.coords()))
                    .fold(f64::INFINITY, f64::min);
                let fast = idx.nearest(&x);
                if brute < cutoff {
                    assert_eq!(fast, brute);
                } else {
                    assert!(fast >= cutoff);
                }
            }
        }
    }

    fn coord() -> impl Strategy<Value = f64> {
        0.0..1.0f64
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            x in prop::collection::vec(coord(), 3),
            y in prop::collection::vec(coord(), 3),
            z in prop::collection::vec(coord(), 3),
        ) {
            let dxy = torus_distance_raw(&x, &y);
            let dyx = torus_distance_raw(&y, &x);
            let dxz = torus_distance_raw(&x, &z);
            let dzy = torus_distance_raw(&z, &y);
            prop_assert!((dxy - dyx).abs() < 1e-15);
            prop_assert!(dxy <= dxz + dzy + 1e-12);
            prop_assert_eq!(torus_distance_raw(&x, &x), 0.0);
            if x != y {
                prop_assert!(dxy > 0.0);
            }
        }

        #[test]
        fn distance_is_dominated_by_representative_distance(
            x in prop::collection::vec(-2.0..2.0f64, 4),
            y in prop::collection::vec(-2.0..2.0f64, 4),
        ) {
            let euclid = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let torus = torus_distance_raw(&x, &y);
            prop_assert!(torus <= euclid + 1e-12);
            if x.iter().zip(&y).all(|(a, b)| (a - b).abs() <= 0.5) {
                prop_assert!((torus - euclid).abs() < 1e-12);
            }
        }
    }
}
