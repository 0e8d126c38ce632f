//! Newton's method for `μ Σ (e^t − y t + ln y!) + ½ tᵀLt`.

use super::IterateTrace;
use crate::error::{check_len, Error, Result};
use crate::forest::DiagQ;
use crate::graph::{dot, norm, Graph, Signal};
use crate::smoother::{estimate_bar, solve_shifted_fast, Method};
use crate::tuning::candidate_seed;
use statrs::function::gamma::ln_gamma;

/// Iterates are kept in `[−T_BOX, T_BOX]` so that `e^t` stays finite.
const T_BOX: f64 = 30.0;

/// Backtracking with the Armijo sufficient-decrease test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub alpha0: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            alpha0: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonParams {
    pub mu: f64,
    /// `Exact` or `Bar`.
    pub method: Method,
    pub forests: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop when the loss decrease is below `tol·(1 + |loss|)`.
    pub tol: f64,
    /// Forest updates stop after this many consecutive small decreases.
    pub patience: usize,
    pub line_search: LineSearch,
    /// Starting point; `ln(mean y)` everywhere when absent.
    pub t0: Option<Signal>,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams {
            mu: 1.0,
            method: Method::Exact,
            forests: 20,
            seed: 0,
            max_iters: 100,
            tol: 1e-9,
            patience: 3,
            line_search: LineSearch::default(),
            t0: None,
        }
    }
}

pub fn poisson_loss(g: &Graph, y: &[f64], mu: f64, t: &[f64]) -> Result<f64> {
    check_len(g.n(), y.len())?;
    let data: f64 = t
        .iter()
        .zip(y)
        .map(|(&t, &y)| t.exp() - y * t + ln_gamma(y + 1.0))
        .sum();
    Ok(mu * data + 0.5 * g.quadratic_form(t)?)
}

/// `μ e^t − μ y + L t`.
pub fn poisson_gradient(g: &Graph, y: &[f64], mu: f64, t: &[f64]) -> Result<Vec<f64>> {
    check_len(g.n(), y.len())?;
    let lt = g.laplacian_apply(t)?;
    Ok((0..t.len()).map(|i| mu * t[i].exp() - mu * y[i] + lt[i]).collect())
}

/// Minimizes the Poisson loss. Each Newton direction
/// `(μ diag(e^t) + L)⁻¹ ∇` is `K y′` with `Q = μ diag(e^t)` and
/// `y′ = Q⁻¹ ∇`, computed exactly or by the `x̄` forest estimator.
pub fn newton_poisson(g: &Graph, y: &[f64], p: &NewtonParams) -> Result<(Signal, IterateTrace)> {
    let n = g.n();
    check_len(n, y.len())?;
    if !(p.mu > 0.0 && p.mu.is_finite()) {
        return Err(Error::Parameter(format!("mu must be positive (got {})", p.mu)));
    }
    if let Some(i) = y.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Parameter(format!("count y[{i}] = {} is not ≥ 0", y[i])));
    }
    if p.method == Method::Tilde {
        return Err(Error::Parameter("Newton updates support exact and bar only".into()));
    }
    let mut trace = IterateTrace::default();
    let mut t = match &p.t0 {
        Some(t0) => {
            check_len(n, t0.len())?;
            t0.clone()
        }
        None => {
            let mean = y.iter().sum::<f64>() / n as f64;
            vec![mean.max(f64::MIN_POSITIVE).ln(); n]
        }
    };
    trace.clamped |= clamp(&mut t);
    let mut loss = poisson_loss(g, y, p.mu, &t)?;
    trace.initial_loss = loss;
    let mut small = 0usize;
    let ls = p.line_search;

    for k in 0..p.max_iters {
        let grad = poisson_gradient(g, y, p.mu, &t)?;
        let qv: Vec<f64> = t.iter().map(|t| p.mu * t.exp()).collect();
        let q = DiagQ::PerNode(qv.clone());
        let dir = match p.method {
            Method::Exact => solve_shifted_fast(g, &q, &grad)?,
            _ => {
                let y_prime: Vec<f64> = grad.iter().zip(&qv).map(|(g, q)| g / q).collect();
                estimate_bar(g, &q, &y_prime, p.forests.max(1), candidate_seed(p.seed, k))?.values
            }
        };
        let slope = dot(&grad, &dir);
        let mut alpha = 0.0;
        let mut new_t = t.clone();
        let mut new_loss = loss;
        if slope > 0.0 {
            let mut a = ls.alpha0;
            for _ in 0..=ls.max_halvings {
                let mut cand: Vec<f64> = t.iter().zip(&dir).map(|(t, d)| t - a * d).collect();
                let hit = clamp(&mut cand);
                let l = poisson_loss(g, y, p.mu, &cand)?;
                if l.is_finite() && l <= loss - ls.armijo * a * slope {
                    trace.clamped |= hit;
                    alpha = a;
                    new_t = cand;
                    new_loss = l;
                    break;
                }
                a *= ls.shrink;
            }
        }
        let step: Vec<f64> = new_t.iter().zip(&t).map(|(a, b)| a - b).collect();
        let decrease = loss - new_loss;
        trace.push(new_loss, alpha, norm(&step));
        t = new_t;
        loss = new_loss;
        let tiny = decrease.abs() < p.tol * (1.0 + loss.abs());
        match p.method {
            Method::Exact => {
                if tiny {
                    trace.converged = true;
                    break;
                }
            }
            _ => {
                small = if tiny { small + 1 } else { 0 };
                if small >= p.patience.max(1) {
                    trace.converged = true;
                    break;
                }
            }
        }
    }
    Ok((t, trace))
}

fn clamp(t: &mut [f64]) -> bool {
    let mut hit = false;
    for v in t.iter_mut() {
        if *v > T_BOX || *v < -T_BOX {
            *v = v.clamp(-T_BOX, T_BOX);
            hit = true;
        }
    }
    hit
}
