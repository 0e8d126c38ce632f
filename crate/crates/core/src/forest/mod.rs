//! Random rooted spanning forests drawn by absorbed loop-erased walks.

mod ensemble;

pub use ensemble::{root_marginal_empirical, ForestEnsemble, CHUNK};

use crate::error::{check_len, Error, Result};
use crate::graph::{Graph, Spectrum};
use crate::smoother::DenseOracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Marks a root in [`Forest::next`].
pub const NONE: usize = usize::MAX;

/// Walk steps allowed per forest before the sampler gives up.
pub const STEP_BUDGET: u64 = 1_000_000_000;

/// Per-node absorption weights `q_i ≥ 0`. `+∞` makes a node an
/// unconditional root.
#[derive(Debug, Clone, PartialEq)]
pub enum DiagQ {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl DiagQ {
    /// `q_i = μ·shape_i`.
    pub fn scaled(shape: &[f64], mu: f64) -> DiagQ {
        DiagQ::PerNode(shape.iter().map(|&s| mu * s).collect())
    }

    pub fn get(&self, i: usize) -> f64 {
        match self {
            DiagQ::Uniform(q) => *q,
            DiagQ::PerNode(v) => v[i],
        }
    }

    pub fn to_vec(&self, n: usize) -> Vec<f64> {
        match self {
            DiagQ::Uniform(q) => vec![*q; n],
            DiagQ::PerNode(v) => v.clone(),
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            DiagQ::Uniform(q) => Some(*q),
            DiagQ::PerNode(_) => None,
        }
    }

    pub fn has_infinite(&self) -> bool {
        match self {
            DiagQ::Uniform(q) => q.is_infinite(),
            DiagQ::PerNode(v) => v.iter().any(|q| q.is_infinite()),
        }
    }

    /// Checks nonnegativity and that every connected component holds a
    /// positive weight (the graph extended by the absorbing node is connected).
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let n = g.n();
        if let DiagQ::PerNode(v) = self {
            check_len(n, v.len())?;
        }
        let q = self.to_vec(n);
        if let Some(i) = q.iter().position(|x| x.is_nan() || *x < 0.0) {
            return Err(Error::Parameter(format!("q[{i}] = {} is not ≥ 0", q[i])));
        }
        let (label, count) = g.components();
        let mut ok = vec![false; count];
        for i in 0..n {
            if q[i] > 0.0 {
                ok[label[i]] = true;
            }
        }
        if let Some(c) = ok.iter().position(|&b| !b) {
            let node = label.iter().position(|&l| l == c).unwrap_or(0);
            return Err(Error::Parameter(format!(
                "all q are zero on the component containing node {node}"
            )));
        }
        Ok(())
    }
}

/// One rooted spanning forest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Forest {
    next: Vec<usize>,
    root_of: Vec<usize>,
    tree_id: Vec<usize>,
    roots: Vec<usize>,
    tree_qmass: Vec<f64>,
    walk_steps: u64,
}

impl Forest {
    /// Successor of each node, [`NONE`] for roots.
    pub fn next(&self) -> &[usize] {
        &self.next
    }

    pub fn root_of(&self) -> &[usize] {
        &self.root_of
    }

    pub fn tree_id(&self) -> &[usize] {
        &self.tree_id
    }

    /// Roots in order of creation; `roots()[t]` is the root of tree `t`.
    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn num_roots(&self) -> usize {
        self.roots.len()
    }

    /// `Σ q_k` over each tree.
    pub fn tree_qmass(&self) -> &[f64] {
        &self.tree_qmass
    }

    /// Uniform draws consumed, absorption draws included.
    pub fn walk_steps(&self) -> u64 {
        self.walk_steps
    }

    /// Acyclicity and root consistency.
    pub fn is_consistent(&self) -> bool {
        let n = self.next.len();
        if self.roots.is_empty() || self.root_of.len() != n || self.tree_id.len() != n {
            return false;
        }
        for (t, &r) in self.roots.iter().enumerate() {
            if self.next[r] != NONE || self.root_of[r] != r || self.tree_id[r] != t {
                return false;
            }
        }
        for i in 0..n {
            let mut u = i;
            let mut hops = 0;
            while self.next[u] != NONE {
                u = self.next[u];
                hops += 1;
                if hops > n {
                    return false;
                }
            }
            if self.root_of[i] != u || self.roots[self.tree_id[i]] != u {
                return false;
            }
        }
        true
    }

    /// Writes `node,next,root,tree_id`; roots have an empty `next`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let err = |e: csv::Error| Error::io(&name, std::io::Error::other(e));
        let mut w = crate::graph::io_csv_writer(path)?;
        w.write_record(["node", "next", "root", "tree_id"]).map_err(err)?;
        for i in 0..self.next.len() {
            let next = match self.next[i] {
                NONE => String::new(),
                j => j.to_string(),
            };
            w.write_record([
                i.to_string(),
                next,
                self.root_of[i].to_string(),
                self.tree_id[i].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(&name, e))
    }
}

/// Reusable sampler state for one `(graph, q)` pair.
pub struct ForestSampler<'a> {
    g: &'a Graph,
    q: Vec<f64>,
    in_forest: Vec<bool>,
}

impl<'a> ForestSampler<'a> {
    pub fn new(g: &'a Graph, q: &DiagQ) -> Result<Self> {
        q.validate(g)?;
        Ok(ForestSampler {
            g,
            q: q.to_vec(g.n()),
            in_forest: vec![false; g.n()],
        })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Draws a forest into `forest`, reusing its buffers.
    ///
    /// Each step makes one uniform draw on `[0, q_u + d_u)`: the first `q_u`
    /// of the range absorbs, the rest is split among neighbors by weight.
    pub fn sample_into<R: Rng + ?Sized>(&mut self, rng: &mut R, forest: &mut Forest) -> Result<()> {
        let n = self.g.n();
        let g = self.g;
        forest.next.clear();
        forest.next.resize(n, NONE);
        forest.root_of.clear();
        forest.root_of.resize(n, NONE);
        forest.tree_id.clear();
        forest.tree_id.resize(n, NONE);
        forest.roots.clear();
        forest.tree_qmass.clear();
        self.in_forest.iter_mut().for_each(|b| *b = false);
        let mut steps: u64 = 0;

        for i in 0..n {
            let mut u = i;
            while !self.in_forest[u] {
                steps += 1;
                if steps > STEP_BUDGET {
                    return Err(Error::Numeric(format!(
                        "forest walk exceeded {STEP_BUDGET} steps"
                    )));
                }
                let qu = self.q[u];
                let absorb = qu.is_infinite() || {
                    let r = rng.random::<f64>() * (qu + g.degree(u));
                    if r < qu {
                        true
                    } else {
                        let v = g.neighbor_at(u, r - qu);
                        forest.next[u] = v;
                        u = v;
                        false
                    }
                };
                if absorb {
                    self.in_forest[u] = true;
                    forest.next[u] = NONE;
                    forest.root_of[u] = u;
                    forest.tree_id[u] = forest.roots.len();
                    forest.roots.push(u);
                }
            }
            let (root, tid) = (forest.root_of[u], forest.tree_id[u]);
            let mut v = i;
            while !self.in_forest[v] {
                self.in_forest[v] = true;
                forest.root_of[v] = root;
                forest.tree_id[v] = tid;
                v = forest.next[v];
            }
        }
        forest.tree_qmass.resize(forest.roots.len(), 0.0);
        for i in 0..n {
            forest.tree_qmass[forest.tree_id[i]] += self.q[i];
        }
        forest.walk_steps = steps;
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Forest> {
        let mut f = Forest::default();
        self.sample_into(rng, &mut f)?;
        Ok(f)
    }
}

/// Draws one forest.
pub fn sample_forest<R: Rng + ?Sized>(g: &Graph, q: &DiagQ, rng: &mut R) -> Result<Forest> {
    ForestSampler::new(g, q)?.sample(rng)
}

/// Generator for forest `index` of an ensemble seeded with `seed`.
pub fn forest_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Mean and variance of the root count: `tr K` and `tr(K − K²)`.
pub fn expected_roots_oracle(oracle: &DenseOracle) -> (f64, f64) {
    let k = oracle.kernel();
    let mean = k.trace();
    let k2 = (k * k).trace();
    (mean, mean - k2)
}

/// Root-count moments for scalar `q` from the Laplacian spectrum.
pub fn expected_roots_spectral(spectrum: &Spectrum, q: f64) -> (f64, f64) {
    let mean = spectrum.eigenvalues.iter().map(|&l| q / (q + l)).sum();
    let var = spectrum
        .eigenvalues
        .iter()
        .map(|&l| l * q / ((q + l) * (q + l)))
        .sum();
    (mean, var)
}

/// Expected walk steps per forest, `tr((L+Q)⁻¹(D+Q))`.
pub fn walk_cost_oracle(g: &Graph, q: &DiagQ, oracle: &DenseOracle) -> f64 {
    let m = oracle.inverse();
    (0..g.n()).map(|i| m[(i, i)] * (g.degree(i) + q.get(i))).sum()
}

/// `n + Σd/q`, an upper bound on [`walk_cost_oracle`] for scalar `q`.
pub fn walk_cost_bound(g: &Graph, q: f64) -> f64 {
    g.n() as f64 + g.degrees().iter().sum::<f64>() / q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate;

    fn two_node() -> Graph {
        Graph::from_edges(2, [(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn validate_q() {
        let g = two_node();
        assert!(DiagQ::Uniform(0.0).validate(&g).is_err());
        assert!(DiagQ::PerNode(vec![0.0, 1.0]).validate(&g).is_ok());
        assert!(DiagQ::PerNode(vec![-1.0, 1.0]).validate(&g).is_err());
        assert!(DiagQ::PerNode(vec![1.0]).validate(&g).is_err());
        let h = Graph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(DiagQ::PerNode(vec![1.0, 0.0, 0.0, 0.0]).validate(&h).is_err());
        assert!(DiagQ::PerNode(vec![1.0, 0.0, 0.0, 2.0]).validate(&h).is_ok());
    }

    #[test]
    fn huge_q_gives_all_roots() {
        let (g, _) = generate(&"grid:4x4".parse().unwrap(), 0).unwrap();
        let mut rng = forest_rng(1, 0);
        let f = sample_forest(&g, &DiagQ::Uniform(1e12), &mut rng).unwrap();
        assert_eq!(f.num_roots(), 16);
        let inf = sample_forest(&g, &DiagQ::Uniform(f64::INFINITY), &mut rng).unwrap();
        assert_eq!(inf.num_roots(), 16);
    }

    #[test]
    fn zero_q_node_never_roots() {
        let g = two_node();
        let mut rng = forest_rng(3, 0);
        let q = DiagQ::PerNode(vec![0.0, 1.0]);
        for _ in 0..1000 {
            let f = sample_forest(&g, &q, &mut rng).unwrap();
            assert_eq!(f.roots(), &[1]);
            assert_eq!(f.next()[0], 1);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (g, _) = generate(&"er:80:4".parse().unwrap(), 2).unwrap();
        let q = DiagQ::Uniform(0.3);
        let a = sample_forest(&g, &q, &mut forest_rng(7, 5)).unwrap();
        let b = sample_forest(&g, &q, &mut forest_rng(7, 5)).unwrap();
        let c = sample_forest(&g, &q, &mut forest_rng(7, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn scalar_and_vector_q_agree() {
        let (g, _) = generate(&"er:50:4".parse().unwrap(), 2).unwrap();
        let a = sample_forest(&g, &DiagQ::Uniform(0.7), &mut forest_rng(1, 0)).unwrap();
        let b = sample_forest(&g, &DiagQ::PerNode(vec![0.7; g.n()]), &mut forest_rng(1, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tree_mass_and_consistency() {
        let (g, _) = generate(&"ba:60:2".parse().unwrap(), 4).unwrap();
        let qv: Vec<f64> = (0..g.n()).map(|i| 0.05 * (1 + i % 3) as f64).collect();
        let q = DiagQ::PerNode(qv.clone());
        let f = sample_forest(&g, &q, &mut forest_rng(0, 0)).unwrap();
        assert!(f.is_consistent());
        let total: f64 = f.tree_qmass().iter().sum();
        assert!((total - qv.iter().sum::<f64>()).abs() < 1e-12);
        assert!(f.walk_steps() >= g.n() as u64);
    }

    #[test]
    fn forest_csv_dump() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let g = two_node();
        let f = sample_forest(&g, &DiagQ::PerNode(vec![0.0, 1.0]), &mut forest_rng(0, 0)).unwrap();
        f.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "node,next,root,tree_id\n0,1,1,0\n1,,1,0\n");
    }

    #[test]
    fn walk_cost_two_node() {
        let g = two_node();
        let q = DiagQ::Uniform(1.0);
        let o = DenseOracle::new(&g, &q).unwrap();
        assert!((walk_cost_oracle(&g, &q, &o) - 8.0 / 3.0).abs() < 1e-12);
        assert!(walk_cost_oracle(&g, &q, &o) <= walk_cost_bound(&g, 1.0));
        let (m, v) = expected_roots_oracle(&o);
        assert!((m - 4.0 / 3.0).abs() < 1e-12);
        let s = Spectrum::dense(&g).unwrap();
        let (ms, vs) = expected_roots_spectral(&s, 1.0);
        assert!((m - ms).abs() < 1e-12 && (v - vs).abs() < 1e-12);
    }

    #[test]
    fn root_count_limits() {
        let (g, _) = generate(&"grid:3x4".parse().unwrap(), 0).unwrap();
        let s = Spectrum::dense(&g).unwrap();
        assert!((expected_roots_spectral(&s, 1e12).0 - 12.0).abs() < 1e-6);
        assert!((expected_roots_spectral(&s, 1e-12).0 - 1.0).abs() < 1e-6);
    }
}
