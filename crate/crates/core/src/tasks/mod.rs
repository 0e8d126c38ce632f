//! Downstream algorithms built on the smoother: interpolation, label
//! propagation, generalized semi-supervised learning, Newton's method for a
//! Poisson likelihood and IRLS for ℓ1 regularization.

mod interpolate;
mod irls;
mod newton;
mod ssl;

pub use interpolate::{interpolate, label_propagate, label_propagate_power, LpMethod};
pub use irls::{irls_eps, irls_l1, irls_objective, IrlsNormalization, IrlsParams};
pub use newton::{newton_poisson, poisson_gradient, poisson_loss, LineSearch, NewtonParams};
pub use ssl::{generalized_ssl, ssl_inputs};

use crate::error::{check_len, Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Known labels on a subset `ℓ` of the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledProblem {
    n: usize,
    classes: usize,
    labels: BTreeMap<usize, usize>,
}

impl LabeledProblem {
    /// `classes` defaults to one more than the largest label.
    pub fn new(n: usize, labels: BTreeMap<usize, usize>, classes: Option<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Parameter("no labeled nodes".into()));
        }
        let max_class = labels.values().copied().max().unwrap_or(0);
        let classes = classes.unwrap_or(max_class + 1);
        if max_class >= classes {
            return Err(Error::Parameter(format!(
                "label {max_class} exceeds class count {classes}"
            )));
        }
        if let Some((&u, _)) = labels.iter().find(|(&u, _)| u >= n) {
            return Err(Error::Parameter(format!("labeled node {u} out of range")));
        }
        Ok(LabeledProblem { n, classes, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &BTreeMap<usize, usize> {
        &self.labels
    }

    pub fn labeled(&self) -> Vec<usize> {
        self.labels.keys().copied().collect()
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.n).filter(|i| !self.labels.contains_key(i)).collect()
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.labels.contains_key(&i)
    }

    /// One-hot columns `y_c` (length n each); unlabeled rows are zero.
    pub fn one_hot(&self) -> Vec<Vec<f64>> {
        let mut y = vec![vec![0.0; self.n]; self.classes];
        for (&u, &c) in &self.labels {
            y[c][u] = 1.0;
        }
        y
    }
}

/// Per-class scores and the argmax assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    /// `scores[c][i]` = `F[i, c]`.
    pub scores: Vec<Vec<f64>>,
    /// Argmax class per node, ties to the smallest index.
    pub assigned: Vec<usize>,
    pub accuracy: Option<f64>,
}

impl ClassificationResult {
    pub fn from_scores(scores: Vec<Vec<f64>>) -> Self {
        let n = scores.first().map_or(0, |c| c.len());
        let assigned = (0..n)
            .map(|i| {
                let mut best = 0;
                for c in 1..scores.len() {
                    if scores[c][i] > scores[best][i] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        ClassificationResult {
            scores,
            assigned,
            accuracy: None,
        }
    }

    /// Sets [`Self::accuracy`] against full ground truth.
    pub fn with_truth(mut self, truth: &[usize], problem: &LabeledProblem) -> Result<Self> {
        self.accuracy = Some(accuracy(&self, truth, problem)?);
        Ok(self)
    }

    /// Writes `node,assigned,score_0,…`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let err = |e: csv::Error| Error::io(&name, std::io::Error::other(e));
        let mut w = crate::graph::io_csv_writer(path)?;
        let mut header = vec!["node".to_string(), "assigned".to_string()];
        header.extend((0..self.scores.len()).map(|c| format!("score_{c}")));
        w.write_record(&header).map_err(err)?;
        for i in 0..self.assigned.len() {
            let mut row = vec![i.to_string(), self.assigned[i].to_string()];
            row.extend(self.scores.iter().map(|col| col[i].to_string()));
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(&name, e))
    }
}

/// Per-iteration record of an iterative solver.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterateTrace {
    pub initial_loss: f64,
    pub loss: Vec<f64>,
    pub alpha: Vec<f64>,
    pub update_norm: Vec<f64>,
    pub converged: bool,
    /// Set when iterates hit the safeguard box.
    pub clamped: bool,
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn final_loss(&self) -> f64 {
        self.loss.last().copied().unwrap_or(self.initial_loss)
    }

    fn push(&mut self, loss: f64, alpha: f64, update_norm: f64) {
        self.loss.push(loss);
        self.alpha.push(alpha);
        self.update_norm.push(update_norm);
    }

    /// Writes `iter,loss,alpha,update_norm`; row 0 is the starting point.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let err = |e: csv::Error| Error::io(&name, std::io::Error::other(e));
        let mut w = crate::graph::io_csv_writer(path)?;
        w.write_record(["iter", "loss", "alpha", "update_norm"]).map_err(err)?;
        w.write_record(["0".to_string(), self.initial_loss.to_string(), "0".into(), "0".into()])
            .map_err(err)?;
        for k in 0..self.loss.len() {
            w.write_record([
                (k + 1).to_string(),
                self.loss[k].to_string(),
                self.alpha[k].to_string(),
                self.update_norm[k].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(&name, e))
    }
}

/// `10 log10(peak² n / ‖x − ref‖²)`; `+∞` when equal.
pub fn psnr(x: &[f64], reference: &[f64], peak: f64) -> Result<f64> {
    check_len(reference.len(), x.len())?;
    let err: f64 = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak * x.len() as f64 / err).log10())
}

/// Fraction of unlabeled nodes assigned their true class.
pub fn accuracy(result: &ClassificationResult, truth: &[usize], problem: &LabeledProblem) -> Result<f64> {
    check_len(problem.n(), truth.len())?;
    check_len(problem.n(), result.assigned.len())?;
    let u = problem.unlabeled();
    if u.is_empty() {
        return Ok(1.0);
    }
    let hits = u.iter().filter(|&&i| result.assigned[i] == truth[i]).count();
    Ok(hits as f64 / u.len() as f64)
}

/// Accuracy of predicting the majority class of the unlabeled nodes everywhere.
pub fn constant_baseline(truth: &[usize], problem: &LabeledProblem) -> Result<f64> {
    check_len(problem.n(), truth.len())?;
    let u = problem.unlabeled();
    if u.is_empty() {
        return Ok(1.0);
    }
    let classes = truth.iter().copied().max().unwrap_or(0) + 1;
    let mut counts = vec![0usize; classes];
    for &i in &u {
        counts[truth[i]] += 1;
    }
    Ok(*counts.iter().max().unwrap() as f64 / u.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_to_smallest() {
        let r = ClassificationResult::from_scores(vec![vec![0.5, 0.2], vec![0.5, 0.7]]);
        assert_eq!(r.assigned, vec![0, 1]);
    }

    #[test]
    fn metrics() {
        assert_eq!(psnr(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap(), f64::INFINITY);
        let p = psnr(&[0.0, 0.0], &[0.1, 0.1], 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-12);
        let labels: BTreeMap<usize, usize> = [(0, 0)].into_iter().collect();
        let prob = LabeledProblem::new(4, labels, Some(2)).unwrap();
        let truth = [0, 1, 1, 0];
        let all_right = ClassificationResult::from_scores(vec![
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0],
        ]);
        assert_eq!(accuracy(&all_right, &truth, &prob).unwrap(), 1.0);
        assert!((constant_baseline(&truth, &prob).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn problem_validation() {
        assert!(LabeledProblem::new(3, BTreeMap::new(), None).is_err());
        let l: BTreeMap<usize, usize> = [(5, 0)].into_iter().collect();
        assert!(LabeledProblem::new(3, l, None).is_err());
        let l: BTreeMap<usize, usize> = [(0, 2), (1, 0)].into_iter().collect();
        let p = LabeledProblem::new(3, l, None).unwrap();
        assert_eq!(p.classes(), 3);
        assert_eq!(p.one_hot()[2], vec![1.0, 0.0, 0.0]);
        assert_eq!(p.unlabeled(), vec![2]);
    }
}
