//! Unconstrained BFGS with central-difference gradients and an Armijo
//! backtracking line search.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    pub max_iterations: usize,
    /// Converged once ‖∇f‖∞ falls below this.
    pub grad_tol: f64,
    /// Central-difference step.
    pub fd_step: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            grad_tol: 1e-7,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Second-order central differences, ∂f/∂xᵢ ≈ (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h.
pub fn central_difference_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Minimizes `f` from `x0`. Every accepted step decreases `f`, so the result
/// is never worse than the start.
pub fn minimize(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], cfg: &BfgsConfig) -> Result<Minimum> {
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        f(x)
    };
    let mut x = x0.to_vec();
    let mut fx = eval(&x);
    if !fx.is_finite() {
        return Err(Error::InvalidStart(format!("objective is {fx} at the start point")));
    }
    let mut g = central_difference_gradient(&mut eval, &x, cfg.fd_step);
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < cfg.max_iterations && inf_norm(&g) >= cfg.grad_tol {
        iterations += 1;
        let mut d: Vec<f64> = h.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }

        let mut step = None;
        loop {
            let mut alpha = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
                let ft = eval(&trial);
                if ft.is_finite() && ft <= fx + ARMIJO_C1 * alpha * slope && ft <= fx {
                    step = Some((trial, ft));
                    break;
                }
                alpha *= 0.5;
            }
            if step.is_some() || fresh {
                break;
            }
            // A stale Hessian approximation can point uphill numerically; retry
            // once along steepest descent.
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let Some((x_new, f_new)) = step else {
            break;
        };

        let g_new = central_difference_gradient(&mut eval, &x_new, cfg.fd_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().enumerate().for_each(|(i, row)| {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[i] = scale;
                });
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    let grad_inf_norm = inf_norm(&g);
    Ok(Minimum {
        x,
        f: fx,
        grad_inf_norm,
        iterations,
        evaluations,
        converged: grad_inf_norm < cfg.grad_tol,
    })
}

/// H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, with ρ = 1/(yᵀs).
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = h.iter().map(|row| dot(row, y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
