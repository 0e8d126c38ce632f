//! Iteratively reweighted least squares for ℓ1 graph regularization.

use super::IterateTrace;
use crate::error::{check_len, Error, Result};
use crate::forest::{walk_cost_bound, DiagQ};
use crate::graph::{norm, Graph, Signal};
use crate::smoother::{estimate_bar, solve_shifted_fast, Method};
use crate::tuning::candidate_seed;
use std::str::FromStr;

/// Forest updates refuse reweighted graphs whose bound on total walk steps
/// exceeds this.
pub const IRLS_WALK_LIMIT: f64 = 1e9;

/// Right-hand side convention of the reweighted update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrlsNormalization {
    /// `z ← (2μI + L_k)⁻¹ μ y`. Constants converge to `y/2`; the update
    /// majorizes `μ‖y/2 − z‖² + ‖Bz‖₁`.
    Printed,
    /// `z ← (2μI + L_k)⁻¹ 2μ y`, which majorizes `μ‖y − z‖² + ‖Bz‖₁`.
    Majorized,
}

impl FromStr for IrlsNormalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(IrlsNormalization::Printed),
            "majorized" => Ok(IrlsNormalization::Majorized),
            _ => Err(Error::Parameter(format!(
                "unknown normalization '{s}' (expected printed or majorized)"
            ))),
        }
    }
}

impl IrlsNormalization {
    /// The data term target: `y/2` or `y`.
    fn target_scale(self) -> f64 {
        match self {
            IrlsNormalization::Printed => 0.5,
            IrlsNormalization::Majorized => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IrlsParams {
    pub mu: f64,
    /// `Exact` or `Bar`.
    pub method: Method,
    pub forests: usize,
    pub seed: u64,
    /// Floor on `|Bz|`; derived from `y` by [`irls_eps`] when absent.
    pub eps: Option<f64>,
    pub max_iters: usize,
    /// Stop when `‖z_{k+1} − z_k‖ ≤ tol·max(‖z_k‖, 1)`.
    pub tol: f64,
    pub normalization: IrlsNormalization,
    /// Starting point; `y` when absent.
    pub z0: Option<Signal>,
}

impl Default for IrlsParams {
    fn default() -> Self {
        IrlsParams {
            mu: 1.0,
            method: Method::Exact,
            forests: 20,
            seed: 0,
            eps: None,
            max_iters: 50,
            tol: 1e-8,
            normalization: IrlsNormalization::Printed,
            z0: None,
        }
    }
}

/// `1e-8 · median |By|`, at least `1e-12`.
pub fn irls_eps(g: &Graph, y: &[f64]) -> Result<f64> {
    let mut b: Vec<f64> = g.incidence_apply(y)?.iter().map(|v| v.abs()).collect();
    if b.is_empty() {
        return Ok(1e-12);
    }
    let mid = b.len() / 2;
    let (_, m, _) = b.select_nth_unstable_by(mid, |a, c| a.total_cmp(c));
    Ok((1e-8 * *m).max(1e-12))
}

/// `μ‖s·y − z‖² + Σ_e h(|Bz|_e)` with `s` set by the normalization and the
/// Huber smoothing `h(t) = t` for `t ≥ eps`, `t²/(2 eps) + eps/2` below.
/// Exact updates never increase it.
pub fn irls_objective(
    g: &Graph,
    y: &[f64],
    mu: f64,
    z: &[f64],
    eps: f64,
    normalization: IrlsNormalization,
) -> Result<f64> {
    check_len(g.n(), y.len())?;
    let s = normalization.target_scale();
    let fit: f64 = y.iter().zip(z).map(|(y, z)| (s * y - z).powi(2)).sum();
    let tv: f64 = g.incidence_apply(z)?.iter().map(|v| huber(v.abs(), eps)).sum();
    Ok(mu * fit + tv)
}

fn huber(t: f64, eps: f64) -> f64 {
    if t >= eps {
        t
    } else {
        t * t / (2.0 * eps) + eps / 2.0
    }
}

/// Runs the IRLS loop. Each update is Tikhonov smoothing on the graph with
/// edge weights `w_e / max(|Bz_k|_e, eps)`, `q = 2μ`, input `s·y`.
pub fn irls_l1(g: &Graph, y: &[f64], p: &IrlsParams) -> Result<(Signal, IterateTrace)> {
    check_len(g.n(), y.len())?;
    if !(p.mu > 0.0 && p.mu.is_finite()) {
        return Err(Error::Parameter(format!("mu must be positive (got {})", p.mu)));
    }
    if p.method == Method::Tilde {
        return Err(Error::Parameter("IRLS updates support exact and bar only".into()));
    }
    let eps = match p.eps {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(Error::Parameter(format!("eps must be positive (got {e})"))),
        None => irls_eps(g, y)?,
    };
    let mut z = match &p.z0 {
        Some(z0) => {
            check_len(g.n(), z0.len())?;
            z0.clone()
        }
        None => y.to_vec(),
    };
    let s = p.normalization.target_scale();
    let input: Vec<f64> = y.iter().map(|v| s * v).collect();
    let q = DiagQ::Uniform(2.0 * p.mu);
    let rhs: Vec<f64> = input.iter().map(|v| 2.0 * p.mu * v).collect();
    let mut trace = IterateTrace {
        initial_loss: irls_objective(g, y, p.mu, &z, eps, p.normalization)?,
        ..Default::default()
    };
    for k in 0..p.max_iters {
        let bz = g.incidence_apply(&z)?;
        let weights: Vec<f64> = g
            .edges()
            .zip(&bz)
            .map(|((_, _, w), b)| w / b.abs().max(eps))
            .collect();
        let gk = g.reweighted(&weights)?;
        let next = match p.method {
            Method::Exact => solve_shifted_fast(&gk, &q, &rhs)?,
            _ => {
                let cost = walk_cost_bound(&gk, 2.0 * p.mu) * p.forests.max(1) as f64;
                if cost > IRLS_WALK_LIMIT {
                    return Err(Error::Capability(format!(
                        "iteration {k}: up to {cost:.2e} walk steps for {} forests; raise eps (now {eps:.1e}) or mu",
                        p.forests.max(1)
                    )));
                }
                estimate_bar(&gk, &q, &input, p.forests.max(1), candidate_seed(p.seed, k))?.values
            }
        };
        let step: Vec<f64> = next.iter().zip(&z).map(|(a, b)| a - b).collect();
        let step_norm = norm(&step);
        let scale = norm(&z).max(1.0);
        z = next;
        trace.push(irls_objective(g, y, p.mu, &z, eps, p.normalization)?, 1.0, step_norm);
        if step_norm <= p.tol * scale {
            trace.converged = true;
            break;
        }
    }
    Ok((z, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate;

    #[test]
    fn constant_input_goes_to_half() {
        let (g, _) = generate(&"grid:3x3".parse().unwrap(), 0).unwrap();
        // Flat edges get weight w/eps, so the solve is accurate to ~eps⁻¹·1e-16.
        let p = IrlsParams {
            eps: Some(1e-6),
            ..Default::default()
        };
        let (z, tr) = irls_l1(&g, &[4.0; 9], &p).unwrap();
        assert!(z.iter().all(|v| (v - 2.0).abs() < 1e-8), "{z:?}");
        assert!(tr.converged);
        let p = IrlsParams {
            normalization: IrlsNormalization::Majorized,
            ..p
        };
        let (z, _) = irls_l1(&g, &[4.0; 9], &p).unwrap();
        assert!(z.iter().all(|v| (v - 4.0).abs() < 1e-8));
    }

    #[test]
    fn eps_floor() {
        let (g, _) = generate(&"grid:3x3".parse().unwrap(), 0).unwrap();
        assert_eq!(irls_eps(&g, &[1.0; 9]).unwrap(), 1e-12);
        let y: Vec<f64> = (0..9).map(|i| i as f64).collect();
        assert!(irls_eps(&g, &y).unwrap() > 1e-9);
    }

    #[test]
    fn eps_dominant_first_step_is_uniform_smoothing() {
        let g = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let y = vec![1.0, 0.0, 3.0];
        let eps = 0.5;
        let p = IrlsParams {
            mu: 0.8,
            eps: Some(eps),
            z0: Some(vec![0.0; 3]),
            max_iters: 1,
            ..Default::default()
        };
        let (z, _) = irls_l1(&g, &y, &p).unwrap();
        let scaled = Graph::from_edges(3, [(0, 1, 1.0 / eps), (1, 2, 2.0 / eps)]).unwrap();
        let half: Vec<f64> = y.iter().map(|v| v / 2.0).collect();
        let expect = crate::smoother::exact_smooth(&scaled, &DiagQ::Uniform(1.6), &half).unwrap();
        for i in 0..3 {
            assert!((z[i] - expect[i]).abs() < 1e-13);
        }
    }
}
