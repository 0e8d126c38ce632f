//! Graph generators. All produce unit edge weights.

use super::Graph;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphKind {
    /// Row-major pixel grid with 4-neighborhood, optionally on a torus.
    Grid2d {
        rows: usize,
        cols: usize,
        periodic: bool,
    },
    ErdosRenyi { n: usize, avg_degree: f64 },
    /// Preferential attachment, `m` edges per new node, seeded by a star on `m+1` nodes.
    BarabasiAlbert { n: usize, m: usize },
    KRegular { n: usize, k: usize },
    /// Symmetrized k-nearest-neighbor graph of uniform points in `[0,1]^dim`.
    KnnEuclidean { n: usize, k: usize, dim: usize },
}

impl FromStr for GraphKind {
    type Err = Error;

    /// Parses `grid:RxC`, `torus:RxC`, `er:N:DEG`, `ba:N:M`, `kreg:N:K`, `knn:N:K:DIM`.
    fn from_str(s: &str) -> Result<GraphKind> {
        let bad = || Error::Parameter(format!("unrecognized graph spec '{s}'"));
        let (head, rest) = s.split_once(':').ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split(':').collect();
        let int = |t: &str| t.parse::<usize>().map_err(|_| bad());
        match head {
            "grid" | "torus" => {
                let (r, c) = rest.split_once('x').ok_or_else(bad)?;
                Ok(GraphKind::Grid2d {
                    rows: int(r)?,
                    cols: int(c)?,
                    periodic: head == "torus",
                })
            }
            "er" if parts.len() == 2 => Ok(GraphKind::ErdosRenyi {
                n: int(parts[0])?,
                avg_degree: parts[1].parse().map_err(|_| bad())?,
            }),
            "ba" if parts.len() == 2 => Ok(GraphKind::BarabasiAlbert {
                n: int(parts[0])?,
                m: int(parts[1])?,
            }),
            "kreg" if parts.len() == 2 => Ok(GraphKind::KRegular {
                n: int(parts[0])?,
                k: int(parts[1])?,
            }),
            "knn" if parts.len() == 3 => Ok(GraphKind::KnnEuclidean {
                n: int(parts[0])?,
                k: int(parts[1])?,
                dim: int(parts[2])?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Generates a connected graph. Random models that come out disconnected are
/// reduced to their largest component; the second value is the number of
/// nodes dropped.
pub fn generate(kind: &GraphKind, seed: u64) -> Result<(Graph, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = match *kind {
        GraphKind::Grid2d {
            rows,
            cols,
            periodic,
        } => grid(rows, cols, periodic)?,
        GraphKind::ErdosRenyi { n, avg_degree } => erdos_renyi(n, avg_degree, &mut rng)?,
        GraphKind::BarabasiAlbert { n, m } => barabasi_albert(n, m, &mut rng)?,
        GraphKind::KRegular { n, k } => k_regular(n, k, &mut rng)?,
        GraphKind::KnnEuclidean { n, k, dim } => knn_euclidean(n, k, dim, &mut rng)?,
    };
    if g.is_connected() {
        return Ok((g, 0));
    }
    let before = g.n();
    let (lcc, _) = g.largest_component();
    let dropped = before - lcc.n();
    Ok((lcc, dropped))
}

fn grid(rows: usize, cols: usize, periodic: bool) -> Result<Graph> {
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter("grid dimensions must be positive".into()));
    }
    if periodic && (rows < 3 || cols < 3) {
        return Err(Error::Parameter(
            "periodic grid needs at least 3 rows and columns".into(),
        ));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1), 1.0));
            } else if periodic {
                edges.push((id(r, c), id(r, 0), 1.0));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c), 1.0));
            } else if periodic {
                edges.push((id(r, c), id(0, c), 1.0));
            }
        }
    }
    Graph::from_edges(rows * cols, edges)
}

fn erdos_renyi(n: usize, avg_degree: f64, rng: &mut ChaCha8Rng) -> Result<Graph> {
    if n < 2 || !(avg_degree > 0.0 && avg_degree <= (n - 1) as f64) {
        return Err(Error::Parameter(format!(
            "erdos_renyi needs n ≥ 2 and 0 < degree ≤ n−1 (got n={n}, degree={avg_degree})"
        )));
    }
    let p = avg_degree / (n - 1) as f64;
    let mut edges = Vec::new();
    if p >= 1.0 {
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, 1.0));
            }
        }
        return Graph::from_edges(n, edges);
    }
    // Geometric skipping over the upper-triangular pair sequence.
    let lq = (1.0 - p).ln();
    let (mut v, mut w): (usize, i64) = (1, -1);
    while v < n {
        let r: f64 = rng.random();
        w += 1 + ((1.0 - r).ln() / lq).floor() as i64;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            edges.push((w as usize, v, 1.0));
        }
    }
    Graph::from_edges(n, edges)
}

fn barabasi_albert(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Graph> {
    if m == 0 || m >= n {
        return Err(Error::Parameter(format!(
            "barabasi_albert needs 1 ≤ m < n (got n={n}, m={m})"
        )));
    }
    let mut edges: Vec<(usize, usize, f64)> = (1..=m).map(|j| (0, j, 1.0)).collect();
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * n * m);
    for &(a, b, _) in &edges {
        repeated.push(a);
        repeated.push(b);
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for v in m + 1..n {
        chosen.clear();
        while chosen.len() < m {
            let t = repeated[rng.random_range(0..repeated.len())];
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        for &t in &chosen {
            edges.push((v, t, 1.0));
            repeated.push(v);
            repeated.push(t);
        }
    }
    Graph::from_edges(n, edges)
}

fn k_regular(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Graph> {
    if (n * k) % 2 == 1 {
        return Err(Error::Parameter(format!(
            "k_regular needs n·k even (got n={n}, k={k})"
        )));
    }
    if k >= n {
        return Err(Error::Parameter(format!(
            "k_regular needs k < n (got n={n}, k={k})"
        )));
    }
    const ATTEMPTS: usize = 100;
    let mut last = None;
    for _ in 0..ATTEMPTS {
        if let Some(edges) = pair_stubs(n, k, rng) {
            let g = Graph::from_edges(n, edges.into_iter().map(|(a, b)| (a, b, 1.0)))?;
            if g.is_connected() {
                return Ok(g);
            }
            last = Some(g);
        }
    }
    last.ok_or_else(|| Error::Numeric("k_regular pairing failed repeatedly".into()))
}

/// Random stub pairing that rejects loops and multi-edges pair by pair.
fn pair_stubs(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    stubs.shuffle(rng);
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(n * k / 2);
    let mut edges = Vec::with_capacity(n * k / 2);
    let mut failures = 0usize;
    while !stubs.is_empty() {
        let len = stubs.len();
        let i = rng.random_range(0..len);
        let j = rng.random_range(0..len);
        let (a, b) = (stubs[i], stubs[j]);
        let key = (a.min(b), a.max(b));
        if i == j || a == b || seen.contains(&key) {
            failures += 1;
            if failures > 50 * len + 1000 {
                return None;
            }
            continue;
        }
        failures = 0;
        seen.insert(key);
        edges.push(key);
        let (hi, lo) = (i.max(j), i.min(j));
        stubs.swap_remove(hi);
        stubs.swap_remove(lo);
    }
    Some(edges)
}

fn knn_euclidean(n: usize, k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Graph> {
    if k == 0 || k >= n || dim == 0 {
        return Err(Error::Parameter(format!(
            "knn_euclidean needs 1 ≤ k < n and dim ≥ 1 (got n={n}, k={k}, dim={dim})"
        )));
    }
    let pts: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    let p = |i: usize| &pts[i * dim..(i + 1) * dim];
    let mut pairs: HashSet<(usize, usize)> = HashSet::with_capacity(n * k);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dist.clear();
        for j in 0..n {
            if j != i {
                let d: f64 = p(i).iter().zip(p(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                dist.push((d, j));
            }
        }
        dist.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        for &(_, j) in &dist[..k] {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let mut edges: Vec<(usize, usize)> = pairs.into_iter().collect();
    edges.sort_unstable();
    Graph::from_edges(n, edges.into_iter().map(|(a, b)| (a, b, 1.0)))
}
