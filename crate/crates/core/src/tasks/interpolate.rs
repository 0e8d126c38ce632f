//! Interpolation from a labeled subset and label propagation.

use super::{ClassificationResult, LabeledProblem};
use crate::error::{check_len, Error, Result};
use crate::forest::{DiagQ, ForestEnsemble};
use crate::graph::{Graph, Signal};
use crate::smoother::{solve_shifted_fast, solve_shifted_many_fast, Estimator, Method};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpMethod {
    Exact,
    /// Walks absorbed exactly on the labeled set.
    Rsf,
}

impl FromStr for LpMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(LpMethod::Exact),
            "rsf" => Ok(LpMethod::Rsf),
            _ => Err(Error::Parameter(format!("unknown method '{s}' (expected exact or rsf)"))),
        }
    }
}

/// The graph on `u = V∖ℓ` with boundary data: per unlabeled node, the
/// weight `s_i = Σ_{j∈ℓ} w_ij` into the labeled set.
struct Reduction {
    graph: Graph,
    unlabeled: Vec<usize>,
    boundary: Vec<f64>,
}

impl Reduction {
    fn new(g: &Graph, labeled_mask: &[bool]) -> Result<Self> {
        let unlabeled: Vec<usize> = (0..g.n()).filter(|&i| !labeled_mask[i]).collect();
        let graph = g.induced_subgraph(&unlabeled)?;
        let boundary = unlabeled
            .iter()
            .map(|&i| g.neighbors(i).filter(|&(j, _)| labeled_mask[j]).map(|(_, w)| w).sum())
            .collect();
        Ok(Reduction {
            graph,
            unlabeled,
            boundary,
        })
    }

    /// `(W_uℓ x_ℓ)_i` for a signal given on all nodes.
    fn pull(&self, g: &Graph, labeled_mask: &[bool], x: &[f64]) -> Vec<f64> {
        self.unlabeled
            .iter()
            .map(|&i| {
                g.neighbors(i)
                    .filter(|&(j, _)| labeled_mask[j])
                    .map(|(j, w)| w * x[j])
                    .sum()
            })
            .collect()
    }

    fn q(&self, mu: f64) -> DiagQ {
        DiagQ::PerNode(self.boundary.iter().map(|s| mu + s).collect())
    }

    fn check(&self, q: &DiagQ) -> Result<()> {
        q.validate(&self.graph).map_err(|_| {
            Error::Parameter(
                "singular reduction: some unlabeled nodes have no path to a labeled node".into(),
            )
        })
    }
}

fn mask(n: usize, labeled: &[usize]) -> Result<Vec<bool>> {
    let mut m = vec![false; n];
    for &i in labeled {
        if i >= n {
            return Err(Error::Parameter(format!("labeled node {i} out of range")));
        }
        m[i] = true;
    }
    Ok(m)
}

/// Extends `x_ℓ` to all nodes by minimizing `zᵀ(L + μI)z` with `z_ℓ = x_ℓ`.
///
/// The unknown part solves `(L_{G∖ℓ} + Q) x_u = W_uℓ x_ℓ` with
/// `Q_ii = μ + Σ_{j∈ℓ} w_ij`; the forest methods sample on `G∖ℓ` with this
/// `Q` and input `y = Q⁻¹ W_uℓ x_ℓ` (zero where `Q_ii = 0`).
pub fn interpolate(
    g: &Graph,
    labeled: &[usize],
    x_l: &[f64],
    mu: f64,
    method: Method,
    forests: usize,
    seed: u64,
) -> Result<Signal> {
    check_len(labeled.len(), x_l.len())?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Parameter(format!("mu must be ≥ 0 (got {mu})")));
    }
    if labeled.is_empty() {
        return Err(Error::Parameter("no labeled nodes".into()));
    }
    let m = mask(g.n(), labeled)?;
    let mut full = vec![0.0; g.n()];
    for (&i, &v) in labeled.iter().zip(x_l) {
        full[i] = v;
    }
    let red = Reduction::new(g, &m)?;
    if red.unlabeled.is_empty() {
        return Ok(full);
    }
    let q = red.q(mu);
    red.check(&q)?;
    let rhs = red.pull(g, &m, &full);
    let xu = match method.estimator() {
        None => solve_shifted_fast(&red.graph, &q, &rhs)?,
        Some(w) => {
            let y: Vec<f64> = rhs
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let qi = q.get(i);
                    if qi > 0.0 {
                        b / qi
                    } else {
                        0.0
                    }
                })
                .collect();
            ForestEnsemble::sample(&red.graph, &q, vec![y], forests.max(1), seed)?
                .estimate(0, w)
                .values
        }
    };
    for (k, &i) in red.unlabeled.iter().enumerate() {
        full[i] = xu[k];
    }
    Ok(full)
}

/// Harmonic label propagation: `F_u = L_uu⁻¹ W_uℓ Y_ℓ`, `F_ℓ = Y_ℓ`.
///
/// The forest version makes labeled nodes absorbing and unlabeled nodes
/// never absorbing, so every unlabeled node inherits the label of the
/// labeled node its walk first hits.
pub fn label_propagate(
    g: &Graph,
    problem: &LabeledProblem,
    method: LpMethod,
    forests: usize,
    seed: u64,
) -> Result<ClassificationResult> {
    check_len(g.n(), problem.n())?;
    let y = problem.one_hot();
    let scores = match method {
        LpMethod::Exact => {
            let m = mask(g.n(), &problem.labeled())?;
            let red = Reduction::new(g, &m)?;
            let mut f = y.clone();
            if !red.unlabeled.is_empty() {
                let q = red.q(0.0);
                red.check(&q)?;
                let rhs: Vec<Vec<f64>> = y.iter().map(|col| red.pull(g, &m, col)).collect();
                let sol = solve_shifted_many_fast(&red.graph, &q, &rhs)?;
                for (c, xu) in sol.into_iter().enumerate() {
                    for (k, &i) in red.unlabeled.iter().enumerate() {
                        f[c][i] = xu[k];
                    }
                }
            }
            f
        }
        LpMethod::Rsf => {
            let q = DiagQ::PerNode(
                (0..g.n())
                    .map(|i| if problem.is_labeled(i) { f64::INFINITY } else { 0.0 })
                    .collect(),
            );
            q.validate(g)?;
            let ens = ForestEnsemble::sample(g, &q, y, forests.max(1), seed)?;
            (0..problem.classes())
                .map(|c| ens.estimate(c, Estimator::Tilde).values)
                .collect()
        }
    };
    Ok(ClassificationResult::from_scores(scores))
}

/// Iterates `F ← D⁻¹WF` with `F_ℓ` clamped to `Y_ℓ`, starting from zero on
/// `u`, until the largest change is below `tol`. Returns the score columns
/// and the number of sweeps.
pub fn label_propagate_power(
    g: &Graph,
    problem: &LabeledProblem,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<Vec<f64>>, usize)> {
    check_len(g.n(), problem.n())?;
    let mut f = problem.one_hot();
    let u = problem.unlabeled();
    if let Some(&i) = u.iter().find(|&&i| g.degree(i) == 0.0) {
        return Err(Error::Parameter(format!("node {i} is isolated")));
    }
    let mut next = f.clone();
    for it in 1..=max_iters {
        let mut change: f64 = 0.0;
        for (col, out) in f.iter().zip(next.iter_mut()) {
            for &i in &u {
                let v = g.neighbors(i).map(|(j, w)| w * col[j]).sum::<f64>() / g.degree(i);
                change = change.max((v - col[i]).abs());
                out[i] = v;
            }
        }
        std::mem::swap(&mut f, &mut next);
        if change < tol {
            return Ok((f, it));
        }
    }
    Err(Error::Numeric(format!(
        "power iteration did not reach {tol:e} in {max_iters} sweeps"
    )))
}
