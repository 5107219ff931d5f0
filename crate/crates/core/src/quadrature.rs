//! Gauss–Hermite quadrature for integrals of the form ∫ e^(−x²) f(x) dx.

use crate::error::{Error, Result};

/// π^(−1/4), the leading coefficient of the orthonormal Hermite recurrence.
const PI_M4: f64 = 0.751_125_544_464_942_5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes and weights of the `n`-point rule. Each node is bracketed by
    /// Sturm-sequence bisection on the Jacobi matrix of the Hermite
    /// recurrence, then polished by Newton steps on the orthonormal Hermite
    /// function; this stays reliable for several hundred nodes.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("quadrature needs at least one node".into()));
        }
        let nf = n as f64;
        let bound = (2.0 * nf + 1.0).sqrt() + 1.0;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for k in 0..n {
            // The k-th smallest eigenvalue: smallest x with more than k eigenvalues below.
            let (mut lo, mut hi) = (-bound, bound);
            while hi - lo > 1e-12 * hi.abs().max(1.0) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if eigenvalues_below(n, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut z = 0.5 * (lo + hi);
            for _ in 0..3 {
                let (p1, p2) = orthonormal_hermite(n, z);
                let next = z - p1 / ((2.0 * nf).sqrt() * p2);
                if !(next.is_finite() && (next - z).abs() <= 1e-9 * z.abs().max(1.0)) {
                    break;
                }
                z = next;
            }
            if n % 2 == 1 && k == n / 2 {
                z = 0.0;
            }
            let (_, p2) = orthonormal_hermite(n, z);
            let pp = (2.0 * nf).sqrt() * p2;
            let w = 2.0 / (pp * pp);
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Numeric(format!("Gauss-Hermite weight {k} of {n} is not finite")));
            }
            nodes.push(z);
            weights.push(w);
        }
        // Enforce exact symmetry.
        for k in 0..n / 2 {
            let j = n - 1 - k;
            let x = 0.5 * (nodes[j] - nodes[k]);
            let w = 0.5 * (weights[j] + weights[k]);
            nodes[k] = -x;
            nodes[j] = x;
            weights[k] = w;
            weights[j] = w;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ∫ e^(−x²) f(x) dx.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// E[f(Z)] for Z ~ N(0, σ²).
    pub fn gaussian_expectation(&self, sigma: f64, f: impl Fn(f64) -> f64) -> f64 {
        let s = std::f64::consts::SQRT_2 * sigma;
        self.integrate(|x| f(s * x)) / std::f64::consts::PI.sqrt()
    }
}

/// Number of eigenvalues below `x` of the n×n Jacobi matrix with zero
/// diagonal and off-diagonal √(j/2), whose eigenvalues are the Hermite roots.
fn eigenvalues_below(n: usize, x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for j in 0..n {
        let off2 = if j == 0 { 0.0 } else { j as f64 / 2.0 };
        d = -x - off2 / d;
        if d == 0.0 {
            d = -f64::EPSILON;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Returns (h_n(z), h_{n−1}(z)) for the orthonormal Hermite functions.
fn orthonormal_hermite(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI_M4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, p2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn known_moments() {
        for n in [1, 2, 5, 10, 20, 64, 128, 200] {
            let q = GaussHermite::new(n).unwrap();
            assert_relative_eq!(q.integrate(|_| 1.0), PI.sqrt(), max_relative = 1e-13);
            if n >= 2 {
                assert_relative_eq!(q.integrate(|x| x * x), PI.sqrt() / 2.0, max_relative = 1e-13);
            }
            if n >= 3 {
                assert_relative_eq!(q.integrate(|x| x.powi(4)), 0.75 * PI.sqrt(), max_relative = 1e-12);
            }
            assert!(q.integrate(|x| x.powi(3)).abs() < 1e-13);
        }
    }

    #[test]
    fn smooth_integrand() {
        let q = GaussHermite::new(30).unwrap();
        assert_relative_eq!(q.integrate(f64::cos), PI.sqrt() * (-0.25f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn two_point_rule() {
        let q = GaussHermite::new(2).unwrap();
        let r = 0.5f64.sqrt();
        assert_relative_eq!(q.nodes()[0], -r, max_relative = 1e-15);
        assert_relative_eq!(q.nodes()[1], r, max_relative = 1e-15);
        assert_relative_eq!(q.weights()[0], PI.sqrt() / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn nodes_sorted_and_symmetric() {
        let q = GaussHermite::new(64).unwrap();
        assert!(q.nodes().windows(2).all(|w| w[0] < w[1]));
        for i in 0..32 {
            assert_eq!(q.nodes()[i], -q.nodes()[63 - i]);
            assert!(q.weights()[i] > 0.0);
        }
    }

    #[test]
    fn gaussian_expectation_variance() {
        let q = GaussHermite::new(16).unwrap();
        assert_relative_eq!(q.gaussian_expectation(0.3, |z| z * z), 0.09, max_relative = 1e-13);
    }
}
