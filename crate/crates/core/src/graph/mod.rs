//! Weighted undirected graphs in compressed adjacency form.

mod generate;
mod io;
mod spectrum;

pub use generate::{generate, GraphKind};
pub use io::{
    load_edge_list, load_labels, load_pgm, load_signal_csv, save_edge_list, save_index_map,
    save_pgm, save_signal_csv,
};
pub use spectrum::{bandlimited_signal, lambda_max, lowest_eigenpairs, Spectrum, DENSE_LIMIT};

pub(crate) use io::csv_writer as io_csv_writer;
pub(crate) use spectrum::{axpy, bandlimited_from_basis, dot, norm};

use crate::error::{check_len, Error, Result};
use nalgebra::DMatrix;

pub type Signal = Vec<f64>;

/// Immutable weighted undirected graph.
///
/// Row `i` of the adjacency is `targets[offsets[i]..offsets[i+1]]`, sorted by
/// neighbor index. `cumulative` holds running weight sums within each row,
/// which the sampler bisects to draw a neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    degree: Vec<f64>,
    edges: usize,
}

impl Graph {
    /// Builds a graph from undirected edges. Orientation is dropped and
    /// duplicate pairs are summed.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut list: Vec<(usize, usize, f64)> = Vec::new();
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::Parameter(format!(
                    "edge ({u},{v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::Parameter(format!("self-loop at node {u}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Parameter(format!(
                    "edge ({u},{v}) has non-positive weight {w}"
                )));
            }
            list.push((u.min(v), u.max(v), w));
        }
        list.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(list.len());
        for (u, v, w) in list {
            match merged.last_mut() {
                Some(last) if last.0 == u && last.1 == v => last.2 += w,
                _ => merged.push((u, v, w)),
            }
        }

        let mut counts = vec![0usize; n + 1];
        for &(u, v, _) in &merged {
            counts[u + 1] += 1;
            counts[v + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let mut fill = offsets.clone();
        let m2 = offsets[n];
        let mut targets = vec![0usize; m2];
        let mut weights = vec![0.0; m2];
        // Lower neighbors first, then higher ones: rows come out sorted.
        for &(u, v, w) in &merged {
            targets[fill[v]] = u;
            weights[fill[v]] = w;
            fill[v] += 1;
        }
        for &(u, v, w) in &merged {
            targets[fill[u]] = v;
            weights[fill[u]] = w;
            fill[u] += 1;
        }
        let mut cumulative = vec![0.0; m2];
        let mut degree = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for k in offsets[i]..offsets[i + 1] {
                acc += weights[k];
                cumulative[k] = acc;
            }
            degree[i] = acc;
        }
        Ok(Graph {
            offsets,
            targets,
            weights,
            cumulative,
            degree,
            edges: merged.len(),
        })
    }

    pub fn n(&self) -> usize {
        self.degree.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degree[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    pub fn max_degree(&self) -> f64 {
        self.degree.iter().cloned().fold(0.0, f64::max)
    }

    /// Neighbors of `i` with edge weights, in increasing neighbor order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.targets[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    /// Neighbor whose cumulative-weight slot contains `r ∈ [0, d_i)`.
    #[inline]
    pub(crate) fn neighbor_at(&self, i: usize, r: f64) -> usize {
        let lo = self.offsets[i];
        let hi = self.offsets[i + 1];
        let row = &self.cumulative[lo..hi];
        let k = row.partition_point(|&c| c <= r);
        self.targets[lo + k.min(row.len() - 1)]
    }

    /// Undirected edges `(i, j, w)` with `i < j`, ordered by `(i, j)`.
    /// This enumeration fixes the incidence operator's row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    /// `L z = D z − W z`.
    pub fn laplacian_apply(&self, z: &[f64]) -> Result<Signal> {
        check_len(self.n(), z.len())?;
        let mut out = vec![0.0; z.len()];
        self.laplacian_into(z, &mut out);
        Ok(out)
    }

    pub(crate) fn laplacian_into(&self, z: &[f64], out: &mut [f64]) {
        for i in 0..self.n() {
            let mut acc = self.degree[i] * z[i];
            for k in self.offsets[i]..self.offsets[i + 1] {
                acc -= self.weights[k] * z[self.targets[k]];
            }
            out[i] = acc;
        }
    }

    /// `zᵀ L z`.
    pub fn quadratic_form(&self, z: &[f64]) -> Result<f64> {
        Ok(self.incidence_apply(z)?.iter().map(|v| v * v).sum())
    }

    /// Per-edge `√w (z_i − z_j)` with `i < j`, in [`Graph::edges`] order.
    pub fn incidence_apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), z.len())?;
        Ok(self
            .edges()
            .map(|(i, j, w)| w.sqrt() * (z[i] - z[j]))
            .collect())
    }

    /// Same edge set with new weights, given in [`Graph::edges`] order.
    pub fn reweighted(&self, weights: &[f64]) -> Result<Graph> {
        check_len(self.edges, weights.len())?;
        Graph::from_edges(
            self.n(),
            self.edges()
                .zip(weights.iter())
                .map(|((i, j, _), &w)| (i, j, w)),
        )
    }

    /// Component label per node and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for (v, _) in self.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.n() > 0 && self.components().1 == 1
    }

    /// Subgraph induced by `keep` (relabelled `0..keep.len()` in the given order).
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<Graph> {
        let mut new_index = vec![usize::MAX; self.n()];
        for (k, &old) in keep.iter().enumerate() {
            if old >= self.n() {
                return Err(Error::Parameter(format!("node {old} out of range")));
            }
            new_index[old] = k;
        }
        let edges = self.edges().filter_map(|(i, j, w)| {
            let (a, b) = (new_index[i], new_index[j]);
            (a != usize::MAX && b != usize::MAX).then_some((a, b, w))
        });
        Graph::from_edges(keep.len(), edges)
    }

    /// Largest connected component, relabelled contiguously, with the map from
    /// new index to original index. Ties go to the component holding the
    /// smallest node index.
    pub fn largest_component(&self) -> (Graph, Vec<usize>) {
        let (label, count) = self.components();
        let mut sizes = vec![0usize; count];
        for &c in &label {
            sizes[c] += 1;
        }
        let best = (0..count).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)));
        let keep: Vec<usize> = match best {
            Some(b) => (0..self.n()).filter(|&i| label[i] == b).collect(),
            None => Vec::new(),
        };
        let g = self
            .induced_subgraph(&keep)
            .expect("indices come from this graph");
        (g, keep)
    }

    /// Dense Laplacian. Only for small graphs.
    pub fn dense_laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            l[(i, i)] = self.degree[i];
            for (j, w) in self.neighbors(i) {
                l[(i, j)] -= w;
            }
        }
        l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        Graph::from_edges(n, (0..n - 1).map(|i| (i, i + 1, 1.0))).unwrap()
    }

    #[test]
    fn laplacian_examples() {
        let g = Graph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(g.laplacian_apply(&[0.0, 1.0]).unwrap(), vec![-1.0, 1.0]);
        let p = path(3);
        assert_eq!(p.laplacian_apply(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, -1.0, 0.0]);
        assert_eq!(p.laplacian_apply(&[3.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(matches!(
            p.laplacian_apply(&[1.0]),
            Err(Error::Dimension { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn incidence_sign_and_scale() {
        let g = Graph::from_edges(2, [(1, 0, 4.0)]).unwrap();
        assert_eq!(g.incidence_apply(&[0.0, 1.0]).unwrap(), vec![-2.0]);
        assert_eq!(g.incidence_apply(&[5.0, 5.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn duplicates_are_summed() {
        let g = Graph::from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![(1, 2.0)]);
        assert_eq!(g.degree(1), 2.0);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::from_edges(2, [(0, 0, 1.0)]).is_err());
        assert!(Graph::from_edges(2, [(0, 1, 0.0)]).is_err());
        assert!(Graph::from_edges(2, [(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn rows_sorted_and_symmetric() {
        let g = Graph::from_edges(4, [(3, 0, 1.0), (1, 3, 2.0), (0, 2, 0.5), (1, 0, 1.5)]).unwrap();
        for i in 0..4 {
            let row: Vec<usize> = g.neighbors(i).map(|(j, _)| j).collect();
            let mut sorted = row.clone();
            sorted.sort();
            assert_eq!(row, sorted);
            for (j, w) in g.neighbors(i) {
                assert!(g.neighbors(j).any(|(k, v)| k == i && v == w));
            }
            let d: f64 = g.neighbors(i).map(|(_, w)| w).sum();
            assert_eq!(d, g.degree(i));
        }
    }

    #[test]
    fn neighbor_draw_partitions_weights() {
        let g = Graph::from_edges(3, [(0, 1, 1.0), (0, 2, 3.0)]).unwrap();
        assert_eq!(g.neighbor_at(0, 0.0), 1);
        assert_eq!(g.neighbor_at(0, 0.999), 1);
        assert_eq!(g.neighbor_at(0, 1.0), 2);
        assert_eq!(g.neighbor_at(0, 3.999), 2);
        assert_eq!(g.neighbor_at(0, 4.0), 2);
    }

    #[test]
    fn components_and_lcc() {
        let g = Graph::from_edges(6, [(0, 1, 1.0), (2, 3, 1.0), (3, 4, 1.0)]).unwrap();
        let (_, c) = g.components();
        assert_eq!(c, 3);
        let (h, map) = g.largest_component();
        assert_eq!(map, vec![2, 3, 4]);
        assert_eq!(h.n(), 3);
        assert_eq!(h.num_edges(), 2);
        assert!(h.is_connected());
    }
}
