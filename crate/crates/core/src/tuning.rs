//! Selection of the regularization level by SURE and leave-one-out CV.

use crate::error::{check_len, Error, Result};
use crate::forest::{DiagQ, ForestEnsemble};
use crate::graph::{Graph, Spectrum, DENSE_LIMIT};
use crate::smoother::{solve_shifted_fast, DenseOracle, Estimator, SmoothEstimate};
use nalgebra::DVector;
use rayon::prelude::*;
use std::path::Path;
use std::str::FromStr;

/// Diagonal entries at or above this make leave-one-out undefined.
pub const DEGENERACY: f64 = 1.0 - 1e-9;

/// `−nσ² + ‖y − θ‖² + 2σ² t` where `t` is the (estimated) trace of the smoother.
pub fn sure_from(y: &[f64], theta: &[f64], trace: f64, sigma2: f64) -> f64 {
    let n = y.len() as f64;
    let resid: f64 = y.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
    -n * sigma2 + resid + 2.0 * sigma2 * trace
}

pub fn sure_exact(oracle: &DenseOracle, y: &[f64], sigma2: f64) -> Result<f64> {
    let theta = oracle.smooth(y)?;
    Ok(sure_from(y, &theta, oracle.trace(), sigma2))
}

/// SURE with the forest mean in place of `Ky` and the mean root count in
/// place of `tr K`. `column` selects the ensemble input.
pub fn sure_rsf(ens: &ForestEnsemble, column: usize, sigma2: f64, which: Estimator) -> f64 {
    let y = &ens.signals()[column];
    let est = ens.estimate(column, which);
    sure_from(y, &est.values, ens.mean_root_count(), sigma2)
}

/// `(1/|ℓ|) Σ_{i∈ℓ} ((θ_i − y_i)/(1 − diag_i))²`.
pub fn loocv_from(y: &[f64], theta: &[f64], diag: &[f64], labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Parameter("empty label set".into()));
    }
    let mut total = 0.0;
    for &i in labels {
        if i >= y.len() {
            return Err(Error::Parameter(format!("label node {i} out of range")));
        }
        if diag[i] >= DEGENERACY {
            return Err(Error::Degenerate {
                node: i,
                value: diag[i],
            });
        }
        let r = (theta[i] - y[i]) / (1.0 - diag[i]);
        total += r * r;
    }
    Ok(total / labels.len() as f64)
}

pub fn loocv_exact(oracle: &DenseOracle, y: &[f64], labels: &[usize]) -> Result<f64> {
    let theta = oracle.smooth(y)?;
    let diag: Vec<f64> = (0..oracle.n()).map(|i| oracle.kernel()[(i, i)]).collect();
    loocv_from(y, &theta, &diag, labels)
}

/// LOOCV with `K_ii` replaced by the ensemble's diagonal accumulator.
pub fn loocv_rsf(ens: &ForestEnsemble, column: usize, labels: &[usize], which: Estimator) -> Result<f64> {
    let y = &ens.signals()[column];
    let est = ens.estimate(column, which);
    loocv_from(y, &est.values, ens.diagonal(which), labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningMethod {
    SureExact,
    SureRsf(Estimator),
    LoocvExact,
    LoocvRsf(Estimator),
}

impl FromStr for TuningMethod {
    type Err = Error;

    /// `sure`, `sure-tilde`, `sure-bar`, `loocv`, `loocv-tilde`, `loocv-bar`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sure" | "sure-exact" => TuningMethod::SureExact,
            "sure-tilde" => TuningMethod::SureRsf(Estimator::Tilde),
            "sure-bar" => TuningMethod::SureRsf(Estimator::Bar),
            "loocv" | "loocv-exact" => TuningMethod::LoocvExact,
            "loocv-tilde" => TuningMethod::LoocvRsf(Estimator::Tilde),
            "loocv-bar" => TuningMethod::LoocvRsf(Estimator::Bar),
            _ => return Err(Error::Parameter(format!("unknown tuning method '{s}'"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TuningParams {
    /// Noise variance, required by SURE.
    pub sigma2: Option<f64>,
    /// LOOCV node set; all nodes when absent.
    pub labels: Option<Vec<usize>>,
    /// Candidate `μ` acts as `q_i = μ·shape_i`; uniform when absent.
    pub q_shape: Option<Vec<f64>>,
    pub forests: usize,
    pub seed: u64,
}

impl Default for TuningParams {
    fn default() -> Self {
        TuningParams {
            sigma2: None,
            labels: None,
            q_shape: None,
            forests: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuningResult {
    pub grid: Vec<f64>,
    /// `+∞` marks a degenerate candidate.
    pub scores: Vec<f64>,
    pub best: f64,
    pub best_index: usize,
    /// Per candidate, one estimate per input column.
    pub estimates: Vec<Vec<SmoothEstimate>>,
}

impl TuningResult {
    /// Writes `candidate,score`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let err = |e: csv::Error| Error::io(&name, std::io::Error::other(e));
        let mut w = crate::graph::io_csv_writer(path)?;
        w.write_record(["candidate", "score"]).map_err(err)?;
        for (c, s) in self.grid.iter().zip(&self.scores) {
            w.write_record([c.to_string(), s.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(&name, e))
    }
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parameter(format!("bad grid '{s}'"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let grid: Vec<f64> = if s.contains(':') {
        let p: Vec<&str> = s.split(':').collect();
        if p.len() != 3 {
            return Err(bad());
        }
        let (a, h, b) = (num(p[0])?, num(p[1])?, num(p[2])?);
        if !(h > 0.0) || b < a {
            return Err(bad());
        }
        let count = ((b - a) / h + 1e-9).floor() as usize + 1;
        (0..count).map(|k| a + k as f64 * h).collect()
    } else {
        s.split(',').map(num).collect::<Result<_>>()?
    };
    if grid.is_empty() || grid.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Parameter(format!("grid '{s}' must hold positive values")));
    }
    Ok(grid)
}

pub(crate) fn candidate_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Scores every candidate and returns the minimizer (ties toward the
/// smaller candidate). RSF methods draw fresh forests per candidate. Scores
/// of several input columns are averaged.
pub fn grid_search(
    g: &Graph,
    ys: &[Vec<f64>],
    grid: &[f64],
    method: TuningMethod,
    params: &TuningParams,
) -> Result<TuningResult> {
    let n = g.n();
    if grid.is_empty() || grid.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Parameter("grid must be nonempty and positive".into()));
    }
    if ys.is_empty() {
        return Err(Error::Parameter("no input signal".into()));
    }
    for y in ys {
        check_len(n, y.len())?;
    }
    if let Some(s) = &params.q_shape {
        check_len(n, s.len())?;
    }
    let all: Vec<usize> = (0..n).collect();
    let labels = params.labels.as_deref().unwrap_or(&all);
    let sigma2 = match method {
        TuningMethod::SureExact | TuningMethod::SureRsf(_) => Some(params.sigma2.ok_or_else(|| {
            Error::Parameter("SURE needs a known noise variance (sigma2)".into())
        })?),
        _ => None,
    };
    let q_of = |mu: f64| match &params.q_shape {
        Some(s) => DiagQ::scaled(s, mu),
        None => DiagQ::Uniform(mu),
    };
    let spectral = match method {
        TuningMethod::SureExact | TuningMethod::LoocvExact
            if params.q_shape.is_none() && n <= DENSE_LIMIT =>
        {
            Some(Spectrum::dense(g)?)
        }
        TuningMethod::SureExact if n > DENSE_LIMIT => {
            return Err(Error::Capability(format!(
                "exact SURE needs tr K, limited to {DENSE_LIMIT} nodes"
            )))
        }
        _ => None,
    };

    let evaluated: Vec<Result<(f64, Vec<SmoothEstimate>)>> = grid
        .par_iter()
        .enumerate()
        .map(|(c, &mu)| {
            let q = q_of(mu);
            let mut per_column = Vec::with_capacity(ys.len());
            let mut total = 0.0;
            match method {
                TuningMethod::SureRsf(w) | TuningMethod::LoocvRsf(w) => {
                    let ens = ForestEnsemble::sample(
                        g,
                        &q,
                        ys.to_vec(),
                        params.forests,
                        candidate_seed(params.seed, c),
                    )?;
                    for col in 0..ys.len() {
                        total += match method {
                            TuningMethod::SureRsf(_) => sure_rsf(&ens, col, sigma2.unwrap(), w),
                            _ => loocv_rsf(&ens, col, labels, w)?,
                        };
                        per_column.push(ens.estimate(col, w));
                    }
                }
                TuningMethod::SureExact | TuningMethod::LoocvExact => {
                    let (thetas, diag, trace) = exact_pieces(g, &q, ys, labels, spectral.as_ref(), method)?;
                    for (y, theta) in ys.iter().zip(thetas) {
                        total += match method {
                            TuningMethod::SureExact => sure_from(y, &theta, trace, sigma2.unwrap()),
                            _ => loocv_from(y, &theta, &diag, labels)?,
                        };
                        per_column.push(SmoothEstimate::exact(theta));
                    }
                }
            }
            Ok((total / ys.len() as f64, per_column))
        })
        .collect();

    let mut scores = Vec::with_capacity(grid.len());
    let mut estimates = Vec::with_capacity(grid.len());
    let mut last_err = None;
    for r in evaluated {
        match r {
            Ok((s, e)) => {
                scores.push(s);
                estimates.push(e);
            }
            Err(e @ Error::Degenerate { .. }) => {
                scores.push(f64::INFINITY);
                estimates.push(Vec::new());
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    let mut best_index = None;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        best_index = match best_index {
            None => Some(i),
            Some(b) => {
                let (sb, gb): (f64, f64) = (scores[b], grid[b]);
                if s < sb || (s == sb && grid[i] < gb) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    let best_index = best_index.ok_or_else(|| {
        Error::Tuning(match last_err {
            Some(e) => format!("every candidate is degenerate ({e})"),
            None => "no finite score".into(),
        })
    })?;
    Ok(TuningResult {
        grid: grid.to_vec(),
        scores,
        best: grid[best_index],
        best_index,
        estimates,
    })
}

/// Exact smoothed signals, `K_ii` on the label set, and `tr K`.
fn exact_pieces(
    g: &Graph,
    q: &DiagQ,
    ys: &[Vec<f64>],
    labels: &[usize],
    spectral: Option<&Spectrum>,
    method: TuningMethod,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let n = g.n();
    if let (Some(s), Some(mu)) = (spectral, q.as_scalar()) {
        let h: Vec<f64> = s.eigenvalues.iter().map(|&l| mu / (mu + l)).collect();
        let u = &s.eigenvectors;
        let hv = DVector::from_vec(h.clone());
        let thetas = ys
            .iter()
            .map(|y| {
                let c = u.tr_mul(&DVector::from_column_slice(y)).component_mul(&hv);
                (u * c).iter().copied().collect()
            })
            .collect();
        let mut diag = vec![0.0; n];
        if method == TuningMethod::LoocvExact {
            for &i in labels {
                diag[i] = (0..n).map(|k| u[(i, k)] * u[(i, k)] * h[k]).sum();
            }
        }
        return Ok((thetas, diag, h.iter().sum()));
    }
    if method == TuningMethod::SureExact {
        let o = DenseOracle::new(g, q)?;
        let thetas = ys.iter().map(|y| o.smooth(y)).collect::<Result<_>>()?;
        return Ok((thetas, Vec::new(), o.trace()));
    }
    let qv = q.to_vec(n);
    let rhs: Vec<Vec<f64>> = ys
        .iter()
        .map(|y| y.iter().zip(&qv).map(|(a, b)| a * b).collect())
        .collect();
    let thetas = rhs
        .iter()
        .map(|r| solve_shifted_fast(g, q, r))
        .collect::<Result<Vec<_>>>()?;
    let mut diag = vec![0.0; n];
    let units: Vec<(usize, f64)> = labels
        .par_iter()
        .map(|&i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let z = solve_shifted_fast(g, q, &e)?;
            Ok((i, z[i] * qv[i]))
        })
        .collect::<Result<_>>()?;
    for (i, d) in units {
        diag[i] = d;
    }
    Ok((thetas, diag, f64::NAN))
}
