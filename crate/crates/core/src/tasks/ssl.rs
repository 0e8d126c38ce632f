//! Generalized semi-supervised classification `f_c = D^{1−η} K D^{η−1} y_c`
//! with `Q = (μ/2) D`.

use super::{ClassificationResult, LabeledProblem};
use crate::error::{check_len, Error, Result};
use crate::forest::{DiagQ, ForestEnsemble};
use crate::graph::Graph;
use crate::smoother::{solve_shifted_many_fast, Method};

/// The `q` shape `d/2` and smoother inputs `D^{η−1} y_c`.
pub fn ssl_inputs(g: &Graph, problem: &LabeledProblem, eta: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_len(g.n(), problem.n())?;
    if let Some(i) = (0..g.n()).find(|&i| g.degree(i) == 0.0) {
        return Err(Error::Parameter(format!("node {i} has zero degree")));
    }
    let shape: Vec<f64> = g.degrees().iter().map(|d| d / 2.0).collect();
    let inputs = problem
        .one_hot()
        .into_iter()
        .map(|col| {
            col.iter()
                .zip(g.degrees())
                .map(|(y, d)| y * d.powf(eta - 1.0))
                .collect()
        })
        .collect();
    Ok((shape, inputs))
}

pub fn generalized_ssl(
    g: &Graph,
    problem: &LabeledProblem,
    mu: f64,
    eta: f64,
    method: Method,
    forests: usize,
    seed: u64,
) -> Result<ClassificationResult> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Parameter(format!("mu must be positive (got {mu})")));
    }
    let (shape, inputs) = ssl_inputs(g, problem, eta)?;
    let q = DiagQ::scaled(&shape, mu);
    let smoothed: Vec<Vec<f64>> = match method.estimator() {
        None => {
            let rhs: Vec<Vec<f64>> = inputs
                .iter()
                .map(|y| y.iter().enumerate().map(|(i, v)| v * q.get(i)).collect())
                .collect();
            solve_shifted_many_fast(g, &q, &rhs)?
        }
        Some(w) => {
            let ens = ForestEnsemble::sample(g, &q, inputs, forests.max(1), seed)?;
            (0..problem.classes()).map(|c| ens.estimate(c, w).values).collect()
        }
    };
    let scores = smoothed
        .into_iter()
        .map(|col| {
            col.iter()
                .zip(g.degrees())
                .map(|(x, d)| x * d.powf(1.0 - eta))
                .collect()
        })
        .collect();
    Ok(ClassificationResult::from_scores(scores))
}
