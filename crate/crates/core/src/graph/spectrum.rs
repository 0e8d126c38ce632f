//! Laplacian spectra: dense decomposition for small graphs, extremal
//! eigenvalue and low-eigenspace iterations for large ones.

use super::Graph;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Largest graph for which dense decompositions are attempted.
pub const DENSE_LIMIT: usize = 3000;

/// Largest band for the iterative low-eigenspace path.
const MAX_ITERATIVE_K: usize = 64;

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Nondecreasing eigenvalues of L.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in eigenvalue order.
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn dense(g: &Graph) -> Result<Spectrum> {
        if g.n() > DENSE_LIMIT {
            return Err(Error::Capability(format!(
                "dense spectrum limited to {DENSE_LIMIT} nodes (graph has {})",
                g.n()
            )));
        }
        Ok(sorted_eigen(g.dense_laplacian()))
    }
}

fn sorted_eigen(m: DMatrix<f64>) -> Spectrum {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = eig.eigenvectors.select_columns(order.iter());
    Spectrum {
        eigenvalues,
        eigenvectors,
    }
}

/// Estimates λ_max(L) by Lanczos with full reorthogonalization. The returned
/// value is the top Ritz value plus its residual bound, so it sits at or just
/// above λ_max; relative accuracy is `tol`.
pub fn lambda_max(g: &Graph, tol: f64) -> f64 {
    let n = g.n();
    if n <= 1 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut v);
    let max_steps = n.min(400);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_steps);
    let mut alpha = Vec::with_capacity(max_steps);
    let mut beta: Vec<f64> = Vec::with_capacity(max_steps);
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    for step in 0..max_steps {
        g.laplacian_into(&v, &mut w);
        let a = dot(&w, &v);
        alpha.push(a);
        basis.push(v.clone());
        for b in &basis {
            let c = dot(&w, b);
            axpy(-c, b, &mut w);
        }
        for b in &basis {
            let c = dot(&w, b);
            axpy(-c, b, &mut w);
        }
        let bnorm = norm(&w);
        let m = alpha.len();
        let check = step % 5 == 4 || bnorm < 1e-12 || m == max_steps;
        if check {
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let (top, &theta) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty");
            let resid = (bnorm * eig.eigenvectors[(m - 1, top)]).abs();
            estimate = theta + resid;
            if resid <= tol * theta.abs() || bnorm < 1e-12 {
                break;
            }
        }
        beta.push(bnorm);
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / bnorm);
    }
    estimate
}

/// The `k` smallest eigenpairs of L by Chebyshev-filtered subspace iteration.
/// Handles clustered and repeated eigenvalues.
pub fn lowest_eigenpairs(g: &Graph, k: usize, seed: u64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = g.n();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("need 1 ≤ k ≤ n (k={k}, n={n})")));
    }
    if n <= DENSE_LIMIT {
        let s = Spectrum::dense(g)?;
        return Ok((s.eigenvalues[..k].to_vec(), s.eigenvectors.columns(0, k).into_owned()));
    }
    if k > MAX_ITERATIVE_K {
        return Err(Error::Capability(format!(
            "iterative eigenspace limited to k ≤ {MAX_ITERATIVE_K} on graphs above {DENSE_LIMIT} nodes"
        )));
    }
    let p = (2 * k).max(k + 12).min(n);
    let upper = 2.0 * g.max_degree();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    x = x.qr().q();
    let (mut theta, mut xr, mut lx) = rayleigh_ritz(g, &x);
    const DEGREE: usize = 30;
    const MAX_OUTER: usize = 2000;
    let tol = 1e-10 * upper;
    for _ in 0..MAX_OUTER {
        let worst = (0..k)
            .map(|j| {
                let r: f64 = (0..n)
                    .map(|i| (lx[(i, j)] - theta[j] * xr[(i, j)]).powi(2))
                    .sum();
                r.sqrt()
            })
            .fold(0.0, f64::max);
        if worst <= tol {
            return Ok((theta[..k].to_vec(), xr.columns(0, k).into_owned()));
        }
        let cut = theta[p - 1];
        let y = chebyshev_filter(g, &xr, DEGREE, cut, upper);
        let q = y.qr().q();
        (theta, xr, lx) = rayleigh_ritz(g, &q);
    }
    Err(Error::Numeric(format!(
        "low eigenspace iteration did not converge for k={k}"
    )))
}

fn apply_block(g: &Graph, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.n();
    let mut out = DMatrix::zeros(n, x.ncols());
    for (src, dst) in x
        .as_slice()
        .chunks(n)
        .zip(out.as_mut_slice().chunks_mut(n))
    {
        g.laplacian_into(src, dst);
    }
    out
}

fn rayleigh_ritz(g: &Graph, x: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let lx = apply_block(g, x);
    let mut h = x.transpose() * &lx;
    h = (&h + h.transpose()) * 0.5;
    let s = sorted_eigen(h);
    (
        s.eigenvalues,
        x * &s.eigenvectors,
        lx * &s.eigenvectors,
    )
}

/// Degree-`m` Chebyshev polynomial damping `[a, b]` applied to a block.
fn chebyshev_filter(g: &Graph, x: &DMatrix<f64>, m: usize, a: f64, b: f64) -> DMatrix<f64> {
    let e = (b - a) / 2.0;
    let c = (b + a) / 2.0;
    let mut prev = x.clone();
    let mut cur = (apply_block(g, x) - x * c) / e;
    for _ in 1..m {
        let next = (apply_block(g, &cur) - &cur * c) * (2.0 / e) - &prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// A k-bandlimited signal with additive Gaussian noise at the given SNR.
///
/// `x = Σ_{i≤k} α_i u_i` with standard normal `α`, scaled to unit norm;
/// `σ² = 1/(n·snr)`; `y = x + ε`. Returns `(x, y, σ²)`.
pub fn bandlimited_signal(
    g: &Graph,
    k: usize,
    snr: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::Parameter(format!("snr must be positive (got {snr})")));
    }
    let n = g.n();
    let (_, u) = lowest_eigenpairs(g, k, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    Ok(bandlimited_from_basis(&u, n, snr, seed))
}

pub(crate) fn bandlimited_from_basis(
    u: &DMatrix<f64>,
    n: usize,
    snr: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha: Vec<f64> = (0..u.ncols())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut x: Vec<f64> = (0..n)
        .map(|i| (0..u.ncols()).map(|j| u[(i, j)] * alpha[j]).sum())
        .collect();
    normalize(&mut x);
    let sigma2 = 1.0 / (n as f64 * snr);
    let sigma = sigma2.sqrt();
    let y = x
        .iter()
        .map(|&xi| xi + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (x, y, sigma2)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn normalize(v: &mut [f64]) {
    let s = norm(v);
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}
