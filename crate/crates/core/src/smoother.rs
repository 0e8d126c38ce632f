//! Forest estimators of `x̂ = (L+Q)⁻¹Q y` and exact references.

use crate::baselines::{cg_shifted, Preconditioner};
use crate::error::{check_len, Error, Result};
use crate::forest::{DiagQ, ForestEnsemble};
use crate::graph::{Graph, Signal, Spectrum, DENSE_LIMIT};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::str::FromStr;

/// Relative residual for iterative "exact" solves.
pub const EXACT_TOL: f64 = 1e-10;

/// Which forest estimator to read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Estimator {
    /// `x̃(i) = y(r(i))`.
    Tilde,
    /// `x̄(i)`: q-weighted mean of `y` over the tree of `i`.
    Bar,
}

/// Exact solve or one of the forest estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Tilde,
    Bar,
}

impl Method {
    pub fn estimator(self) -> Option<Estimator> {
        match self {
            Method::Exact => None,
            Method::Tilde => Some(Estimator::Tilde),
            Method::Bar => Some(Estimator::Bar),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tilde" => Ok(Estimator::Tilde),
            "bar" => Ok(Estimator::Bar),
            _ => Err(Error::Parameter(format!(
                "unknown estimator '{s}' (expected tilde or bar)"
            ))),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "tilde" => Ok(Method::Tilde),
            "bar" => Ok(Method::Bar),
            _ => Err(Error::Parameter(format!(
                "unknown method '{s}' (expected exact, tilde or bar)"
            ))),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Tilde => "tilde",
            Estimator::Bar => "bar",
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Tilde => "tilde",
            Method::Bar => "bar",
        })
    }
}

/// N-forest sample mean of an estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothEstimate {
    pub values: Signal,
    pub n_forests: usize,
    /// Unbiased per-node variance of the single-forest estimates.
    pub variance: Vec<f64>,
    pub mean_root_count: f64,
}

impl SmoothEstimate {
    /// Deterministic result, zero variance.
    pub fn exact(values: Signal) -> Self {
        let n = values.len();
        SmoothEstimate {
            values,
            n_forests: 0,
            variance: vec![0.0; n],
            mean_root_count: f64::NAN,
        }
    }

    /// `Σ q_i Var_i`, the quantity bounded by the closed forms.
    pub fn weighted_variance(&self, q: &[f64]) -> f64 {
        self.variance.iter().zip(q).map(|(v, q)| v * q).sum()
    }
}

/// Dense `K = (L+Q)⁻¹Q` and `(L+Q)⁻¹` for small graphs.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    q: Vec<f64>,
    inverse: DMatrix<f64>,
    kernel: DMatrix<f64>,
    spectrum: Option<Spectrum>,
}

impl DenseOracle {
    pub fn new(g: &Graph, q: &DiagQ) -> Result<Self> {
        let n = g.n();
        if n > DENSE_LIMIT {
            return Err(Error::Capability(format!(
                "dense oracle limited to {DENSE_LIMIT} nodes (graph has {n})"
            )));
        }
        q.validate(g)?;
        if q.has_infinite() {
            return Err(Error::Parameter("dense oracle needs finite q".into()));
        }
        let qv = q.to_vec(n);
        let mut a = g.dense_laplacian();
        for i in 0..n {
            a[(i, i)] += qv[i];
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Numeric("L+Q is not positive definite".into()))?;
        let inverse = chol.inverse();
        let mut kernel = inverse.clone();
        for (j, mut col) in kernel.column_iter_mut().enumerate() {
            col *= qv[j];
        }
        Ok(DenseOracle {
            q: qv,
            inverse,
            kernel,
            spectrum: None,
        })
    }

    /// Also computes the Laplacian spectrum.
    pub fn with_spectrum(mut self, g: &Graph) -> Result<Self> {
        self.spectrum = Some(Spectrum::dense(g)?);
        Ok(self)
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// `(L+Q)⁻¹`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn spectrum(&self) -> Option<&Spectrum> {
        self.spectrum.as_ref()
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn smooth(&self, y: &[f64]) -> Result<Signal> {
        check_len(self.n(), y.len())?;
        Ok((&self.kernel * DVector::from_column_slice(y))
            .iter()
            .copied()
            .collect())
    }

    pub fn trace(&self) -> f64 {
        self.kernel.trace()
    }
}

/// Solves `(L+Q) x = rhs`: dense Cholesky up to [`DENSE_LIMIT`] nodes,
/// Jacobi-preconditioned CG to [`EXACT_TOL`] beyond.
pub fn solve_shifted(g: &Graph, q: &DiagQ, rhs: &[f64]) -> Result<Signal> {
    let mut out = solve_shifted_many(g, q, &[rhs.to_vec()])?;
    Ok(out.pop().expect("one column"))
}

/// [`solve_shifted`] for several right-hand sides sharing one factorization.
pub fn solve_shifted_many(g: &Graph, q: &DiagQ, rhs: &[Vec<f64>]) -> Result<Vec<Signal>> {
    if g.n() <= DENSE_LIMIT {
        solve_shifted_dense(g, q, rhs)
    } else {
        solve_shifted_cg(g, q, rhs)
    }
}

/// Graphs up to this size are solved densely inside iterative algorithms.
pub(crate) const SMALL_DENSE: usize = 500;

/// Like [`solve_shifted`] but switches to CG above [`SMALL_DENSE`] nodes,
/// for callers that solve many systems on one graph.
pub(crate) fn solve_shifted_fast(g: &Graph, q: &DiagQ, rhs: &[f64]) -> Result<Signal> {
    let rhs = [rhs.to_vec()];
    let mut out = if g.n() <= SMALL_DENSE {
        solve_shifted_dense(g, q, &rhs)?
    } else {
        solve_shifted_cg(g, q, &rhs)?
    };
    Ok(out.pop().expect("one column"))
}

pub(crate) fn solve_shifted_many_fast(g: &Graph, q: &DiagQ, rhs: &[Vec<f64>]) -> Result<Vec<Signal>> {
    if g.n() <= SMALL_DENSE {
        solve_shifted_dense(g, q, rhs)
    } else {
        solve_shifted_cg(g, q, rhs)
    }
}

pub(crate) fn solve_shifted_dense(g: &Graph, q: &DiagQ, rhs: &[Vec<f64>]) -> Result<Vec<Signal>> {
    let n = g.n();
    q.validate(g)?;
    for r in rhs {
        check_len(n, r.len())?;
    }
    let qv = q.to_vec(n);
    if qv.iter().any(|v| v.is_infinite()) {
        return Err(Error::Parameter("exact solve needs finite q".into()));
    }
    let mut a = g.dense_laplacian();
    for i in 0..n {
        a[(i, i)] += qv[i];
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numeric("L+Q is not positive definite".into()))?;
    // Two rounds of iterative refinement against the sparse operator; this
    // recovers accuracy when edge weights dwarf q.
    rhs.iter()
        .map(|r| {
            let mut x = chol.solve(&DVector::from_column_slice(r));
            for _ in 0..2 {
                let lx = g.laplacian_apply(x.as_slice())?;
                let res = DVector::from_iterator(n, (0..n).map(|i| r[i] - lx[i] - qv[i] * x[i]));
                x += chol.solve(&res);
            }
            Ok(x.iter().copied().collect())
        })
        .collect()
}

pub(crate) fn solve_shifted_cg(g: &Graph, q: &DiagQ, rhs: &[Vec<f64>]) -> Result<Vec<Signal>> {
    q.validate(g)?;
    let qv = q.to_vec(g.n());
    if qv.iter().any(|v| v.is_infinite()) {
        return Err(Error::Parameter("exact solve needs finite q".into()));
    }
    rhs.iter()
        .map(|r| {
            check_len(g.n(), r.len())?;
            let rep = cg_shifted(g, &qv, r, EXACT_TOL, None, Preconditioner::Jacobi);
            if rep.converged {
                Ok(rep.x)
            } else {
                Err(Error::Numeric(format!(
                    "CG stalled at relative residual {:.3e} after {} iterations",
                    rep.residual, rep.iterations
                )))
            }
        })
        .collect()
}

/// `x̂ = (L+Q)⁻¹Q y`.
pub fn exact_smooth(g: &Graph, q: &DiagQ, y: &[f64]) -> Result<Signal> {
    check_len(g.n(), y.len())?;
    let rhs: Vec<f64> = y.iter().enumerate().map(|(i, v)| q.get(i) * v).collect();
    solve_shifted(g, q, &rhs)
}

/// Mean of `x̃` over `forests` forests.
pub fn estimate_tilde(g: &Graph, q: &DiagQ, y: &[f64], forests: usize, seed: u64) -> Result<SmoothEstimate> {
    estimate(g, q, y, forests, seed, Estimator::Tilde)
}

/// Mean of `x̄` over `forests` forests.
pub fn estimate_bar(g: &Graph, q: &DiagQ, y: &[f64], forests: usize, seed: u64) -> Result<SmoothEstimate> {
    estimate(g, q, y, forests, seed, Estimator::Bar)
}

pub fn estimate(
    g: &Graph,
    q: &DiagQ,
    y: &[f64],
    forests: usize,
    seed: u64,
    which: Estimator,
) -> Result<SmoothEstimate> {
    if forests == 0 {
        return Err(Error::Parameter("need at least one forest".into()));
    }
    let e = ForestEnsemble::sample(g, q, vec![y.to_vec()], forests, seed)?;
    Ok(e.estimate(0, which))
}

/// Runs the exact solver or an estimator.
pub fn smooth(g: &Graph, q: &DiagQ, y: &[f64], method: Method, forests: usize, seed: u64) -> Result<SmoothEstimate> {
    match method.estimator() {
        None => Ok(SmoothEstimate::exact(exact_smooth(g, q, y)?)),
        Some(w) => estimate(g, q, y, forests, seed, w),
    }
}

/// Closed-form `E Σ q_i (θ_i − x̂_i)²` for a single forest:
/// `yᵀ(Q − KᵀQK)y` for tilde, `yᵀ(QK − KᵀQK)y` for bar.
pub fn variance_oracle(oracle: &DenseOracle, y: &[f64], which: Estimator) -> Result<f64> {
    let ky = oracle.smooth(y)?;
    let q = oracle.q();
    let kqk: f64 = ky.iter().zip(q).map(|(v, q)| q * v * v).sum();
    let first: f64 = match which {
        Estimator::Tilde => y.iter().zip(q).map(|(v, q)| q * v * v).sum(),
        Estimator::Bar => y.iter().zip(q).zip(&ky).map(|((v, q), k)| q * v * k).sum(),
    };
    Ok(first - kqk)
}
