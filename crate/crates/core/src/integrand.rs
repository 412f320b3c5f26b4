//! Functions on the unit cube and Monte Carlo estimates of their functionals.

use serde::{Deserialize, Serialize};

/// A real function on `Q = [0,1]^d` that can be evaluated pointwise.
///
/// Implementations must be deterministic: the same `x` always yields the same value.
pub trait Integrand: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
}

impl<T: Integrand + ?Sized> Integrand for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}

impl<T: Integrand + ?Sized> Integrand for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}

/// A closure wrapped as an [`Integrand`].
pub struct FnIntegrand<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnIntegrand<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Integrand for FnIntegrand<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// The constant function.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

impl Integrand for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &[f64]) -> f64 {
        self.value
    }
}

/// `Σ c_j f_j`, evaluated term by term in the stored order.
pub struct Combination<'a> {
    dim: usize,
    terms: Vec<(f64, &'a dyn Integrand)>,
}

impl<'a> Combination<'a> {
    pub fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn with(mut self, coeff: f64, f: &'a dyn Integrand) -> Self {
        debug_assert_eq!(f.dim(), self.dim);
        self.terms.push((coeff, f));
        self
    }
}

impl Integrand for Combination<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.eval(x)).sum()
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            samples: 0,
        }
    }

    /// Sample mean and standard error of the mean (unbiased variance).
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                value: f64::NAN,
                stderr: f64::NAN,
                samples: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            value: mean,
            stderr,
            samples: n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_is_linear() {
        let f = FnIntegrand::new(2, |x: &[f64]| x[0]);
        let g = Constant { dim: 2, value: 3.0 };
        let h = Combination::new(2).with(2.0, &f).with(-1.0, &g);
        assert_eq!(h.eval(&[0.5, 0.1]), -2.0);
    }

    #[test]
    fn estimate_of_constant_samples_has_zero_stderr() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.stderr, 0.0);
    }
}
