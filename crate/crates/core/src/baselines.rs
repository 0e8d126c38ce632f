//! Deterministic solvers for `(L+Q)x = Qy`: conjugate gradient and
//! Chebyshev polynomial filtering.

use crate::error::{check_len, Error, Result};
use crate::forest::DiagQ;
use crate::graph::{axpy, dot, lambda_max, norm, Graph, Signal};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    /// `diag(D + Q)`.
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CgStop {
    /// Run this many iterations (fewer only if the residual vanishes).
    Iterations(usize),
    /// Run until the relative residual falls below this value.
    Tolerance(f64),
}

#[derive(Debug, Clone)]
pub struct CgReport {
    pub x: Signal,
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub residual: f64,
    pub converged: bool,
}

/// CG on `(L+Q)x = Qy` from `x₀ = 0`.
pub fn cg_solve(g: &Graph, q: &DiagQ, y: &[f64], stop: CgStop, precond: Preconditioner) -> Result<CgReport> {
    check_len(g.n(), y.len())?;
    q.validate(g)?;
    let qv = q.to_vec(g.n());
    if qv.iter().any(|v| v.is_infinite()) {
        return Err(Error::Parameter("CG needs finite q".into()));
    }
    let b: Vec<f64> = y.iter().zip(&qv).map(|(y, q)| y * q).collect();
    Ok(match stop {
        CgStop::Iterations(k) => cg_shifted(g, &qv, &b, 0.0, Some(k), precond),
        CgStop::Tolerance(t) => cg_shifted(g, &qv, &b, t, None, precond),
    })
}

/// CG on `(L + diag(q)) x = b`. Without an iteration cap it runs at most
/// `20n + 1000` iterations.
pub fn cg_shifted(
    g: &Graph,
    q: &[f64],
    b: &[f64],
    tol: f64,
    max_iters: Option<usize>,
    precond: Preconditioner,
) -> CgReport {
    let n = g.n();
    let cap = max_iters.unwrap_or(20 * n + 1000);
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return CgReport {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let inv_diag: Vec<f64> = match precond {
        Preconditioner::None => vec![1.0; n],
        Preconditioner::Jacobi => (0..n).map(|i| 1.0 / (g.degree(i) + q[i])).collect(),
    };
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    let mut it = 0;
    while it < cap {
        if rel <= tol || rel <= 1e-15 {
            break;
        }
        g.laplacian_into(&p, &mut ap);
        ap.iter_mut().zip(&p).zip(q).for_each(|((a, p), q)| *a += q * p);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        it += 1;
        rel = norm(&r) / bnorm;
        z.iter_mut()
            .zip(&r)
            .zip(&inv_diag)
            .for_each(|((z, r), m)| *z = r * m);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    CgReport {
        x,
        iterations: it,
        residual: rel,
        converged: rel <= tol.max(1e-15),
    }
}

/// How the upper end of the approximation interval is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalBound {
    /// Iterative estimate of λ_max to relative accuracy 1e-6.
    LambdaMax,
    /// `2 max_i d_i`.
    Gershgorin,
}

impl FromStr for IntervalBound {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda-max" => Ok(IntervalBound::LambdaMax),
            "gershgorin" => Ok(IntervalBound::Gershgorin),
            _ => Err(Error::Parameter(format!(
                "unknown interval bound '{s}' (expected lambda-max or gershgorin)"
            ))),
        }
    }
}

/// Chebyshev interpolant of `h(λ) = q/(q+λ)` on `[0, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub q: f64,
    pub b: f64,
    pub degree: usize,
    /// `p(x) = c₀/2 + Σ_{k≥1} c_k T_k(x)` with `x = 2λ/b − 1`.
    pub coefficients: Vec<f64>,
}

impl FilterSpec {
    pub fn response(&self, lambda: f64) -> f64 {
        self.q / (self.q + lambda)
    }

    /// Chebyshev nodes mapped to `[0, b]`.
    pub fn nodes(&self) -> Vec<f64> {
        chebyshev_nodes(self.degree)
            .into_iter()
            .map(|x| self.b * (x + 1.0) / 2.0)
            .collect()
    }

    /// The polynomial at a scalar `λ`, by Clenshaw recurrence.
    pub fn eval(&self, lambda: f64) -> f64 {
        let x = 2.0 * lambda / self.b - 1.0;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coefficients[1..].iter().rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coefficients[0] / 2.0
    }
}

fn chebyshev_nodes(degree: usize) -> Vec<f64> {
    let m = degree + 1;
    (0..m)
        .map(|j| (std::f64::consts::PI * (j as f64 + 0.5) / m as f64).cos())
        .collect()
}

pub fn chebyshev_setup(g: &Graph, q: f64, degree: usize, bound: IntervalBound) -> Result<FilterSpec> {
    if degree < 1 {
        return Err(Error::Parameter("Chebyshev degree must be at least 1".into()));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Parameter(format!("q must be positive and finite (got {q})")));
    }
    let b = match bound {
        IntervalBound::LambdaMax => lambda_max(g, 1e-6),
        IntervalBound::Gershgorin => 2.0 * g.max_degree(),
    };
    if !(b > 0.0) {
        return Err(Error::Parameter("graph has no edges".into()));
    }
    Ok(chebyshev_on_interval(q, b, degree))
}

pub(crate) fn chebyshev_on_interval(q: f64, b: f64, degree: usize) -> FilterSpec {
    let m = degree + 1;
    let theta: Vec<f64> = (0..m)
        .map(|j| std::f64::consts::PI * (j as f64 + 0.5) / m as f64)
        .collect();
    let h: Vec<f64> = theta
        .iter()
        .map(|t| q / (q + b * (t.cos() + 1.0) / 2.0))
        .collect();
    let coefficients = (0..m)
        .map(|k| {
            2.0 / m as f64
                * theta
                    .iter()
                    .zip(&h)
                    .map(|(t, h)| h * (k as f64 * t).cos())
                    .sum::<f64>()
        })
        .collect();
    FilterSpec {
        q,
        b,
        degree,
        coefficients,
    }
}

/// `p(L) y` by the three-term recurrence; `degree` Laplacian products.
pub fn chebyshev_apply(g: &Graph, spec: &FilterSpec, y: &[f64]) -> Result<Signal> {
    check_len(g.n(), y.len())?;
    let n = g.n();
    let s = 2.0 / spec.b;
    let c = &spec.coefficients;
    let mut out: Vec<f64> = y.iter().map(|v| v * c[0] / 2.0).collect();
    let mut prev = y.to_vec();
    let mut cur = vec![0.0; n];
    g.laplacian_into(y, &mut cur);
    cur.iter_mut().zip(y).for_each(|(t, y)| *t = s * *t - y);
    axpy(c[1], &cur, &mut out);
    let mut lt = vec![0.0; n];
    for &ck in &c[2..] {
        g.laplacian_into(&cur, &mut lt);
        for i in 0..n {
            let next = 2.0 * (s * lt[i] - cur[i]) - prev[i];
            prev[i] = cur[i];
            cur[i] = next;
        }
        axpy(ck, &cur, &mut out);
    }
    Ok(out)
}
