//! Dense reference computations shared by the integration tests. Nothing here
//! calls the solvers under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsf::Graph;

pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let mut l = DMatrix::zeros(n, n);
    for (u, v, w) in g.edges() {
        l[(u, v)] -= w;
        l[(v, u)] -= w;
        l[(u, u)] += w;
        l[(v, v)] += w;
    }
    l
}

/// `(L + Q)⁻¹`.
pub fn green(g: &Graph, q: &[f64]) -> DMatrix<f64> {
    let m = laplacian(g) + DMatrix::from_diagonal(&DVector::from_column_slice(q));
    m.try_inverse().expect("L + Q invertible")
}

/// `K = (L + Q)⁻¹ Q`.
pub fn kernel(g: &Graph, q: &[f64]) -> DMatrix<f64> {
    green(g, q) * DMatrix::from_diagonal(&DVector::from_column_slice(q))
}

pub fn apply(m: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(y)).as_slice().to_vec()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Random spanning tree plus each remaining pair with probability `p`;
/// weights uniform in `[lo, hi]`.
pub fn random_connected(n: usize, p: f64, lo: f64, hi: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut present = vec![false; n * n];
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v, rng.random_range(lo..=hi)));
        present[u * n + v] = true;
    }
    for u in 0..n {
        for v in u + 1..n {
            if !present[u * n + v] && rng.random::<f64>() < p {
                edges.push((u, v, rng.random_range(lo..=hi)));
            }
        }
    }
    Graph::from_edges(n, edges).expect("valid edges")
}

pub fn random_vec(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}

pub fn path(n: usize) -> Graph {
    Graph::from_edges(n, (0..n - 1).map(|i| (i, i + 1, 1.0))).unwrap()
}

/// One line per criterion on the real stderr, so it shows whether or not the
/// harness captures output.
pub fn report(id: &str, ok: bool, detail: &str) {
    use std::io::Write;
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} criterion {id}: {detail}");
}
