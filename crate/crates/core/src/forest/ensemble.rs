//! Streaming statistics over many forests.

use super::{forest_rng, DiagQ, Forest, ForestSampler};
use crate::error::{check_len, Error, Result};
use crate::graph::Graph;
use crate::smoother::{Estimator, SmoothEstimate};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::ops::Range;

/// Forests per work unit. Work units are merged in index order, so results
/// do not depend on the number of threads.
pub const CHUNK: usize = 32;

/// Per-node running mean and sum of squared deviations.
#[derive(Debug, Clone)]
struct Moments {
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments {
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn push(&mut self, count: usize, x: &[f64]) {
        let k = count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / k;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, na: usize, other: &Moments, nb: usize) {
        if nb == 0 {
            return;
        }
        let (a, b) = (na as f64, nb as f64);
        let t = a + b;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * b / t;
            self.m2[i] += other.m2[i] + d * d * a * b / t;
        }
    }
}

fn merge_mean(a: &mut [f64], na: usize, b: &[f64], nb: usize) {
    if nb == 0 {
        return;
    }
    let w = nb as f64 / (na + nb) as f64;
    a.iter_mut().zip(b).for_each(|(x, y)| *x += (y - *x) * w);
}

/// Accumulated estimator statistics over a sequence of forests.
///
/// All input signals share the same forests.
#[derive(Debug, Clone)]
pub struct ForestEnsemble {
    q: Vec<f64>,
    signals: Vec<Vec<f64>>,
    count: usize,
    tilde: Vec<Moments>,
    bar: Vec<Moments>,
    root_counts: Vec<usize>,
    walk_steps: Vec<u64>,
    diag_tilde: Vec<f64>,
    diag_bar: Vec<f64>,
    scratch: Scratch,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    weight: Vec<f64>,
    tree_weight: Vec<f64>,
    tree_sum: Vec<f64>,
    values: Vec<f64>,
}

impl ForestEnsemble {
    /// Empty ensemble for `(g, q)` and the given input signals.
    pub fn new(g: &Graph, q: &DiagQ, signals: Vec<Vec<f64>>) -> Result<Self> {
        q.validate(g)?;
        let n = g.n();
        for s in &signals {
            check_len(n, s.len())?;
        }
        let c = signals.len();
        Ok(ForestEnsemble {
            q: q.to_vec(n),
            signals,
            count: 0,
            tilde: vec![Moments::new(n); c],
            bar: vec![Moments::new(n); c],
            root_counts: Vec::new(),
            walk_steps: Vec::new(),
            diag_tilde: vec![0.0; n],
            diag_bar: vec![0.0; n],
            scratch: Scratch::default(),
        })
    }

    /// Samples `forests` forests with per-forest streams of `seed`, in parallel.
    pub fn sample(
        g: &Graph,
        q: &DiagQ,
        signals: Vec<Vec<f64>>,
        forests: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut total = ForestEnsemble::new(g, q, signals)?;
        let template = total.clone();
        for_each_chunk(
            forests,
            |range| {
                let mut part = template.clone();
                let mut sampler = ForestSampler::new(g, q)?;
                let mut forest = Forest::default();
                for k in range {
                    sampler.sample_into(&mut forest_rng(seed, k), &mut forest)?;
                    part.observe(&forest);
                }
                Ok(part)
            },
            |part| total.merge(&part),
        )?;
        Ok(total)
    }

    /// Adds one forest drawn for this ensemble's `(g, q)`.
    pub fn observe(&mut self, f: &Forest) {
        let n = self.q.len();
        self.count += 1;
        self.root_counts.push(f.num_roots());
        self.walk_steps.push(f.walk_steps());

        // Within-tree weights: q, or an indicator of infinite q for trees
        // that contain infinite-weight roots.
        let s = &mut self.scratch;
        let trees = f.num_roots();
        s.weight.clear();
        s.weight.extend((0..n).map(|i| {
            if f.tree_qmass()[f.tree_id()[i]].is_infinite() {
                if self.q[i].is_infinite() {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.q[i]
            }
        }));
        s.tree_weight.clear();
        s.tree_weight.resize(trees, 0.0);
        for i in 0..n {
            s.tree_weight[f.tree_id()[i]] += s.weight[i];
        }
        debug_assert!(s.tree_weight.iter().all(|&w| w > 0.0));

        let k = self.count as f64;
        for i in 0..n {
            let is_root = (f.root_of()[i] == i) as u8 as f64;
            self.diag_tilde[i] += (is_root - self.diag_tilde[i]) / k;
            let d = s.weight[i] / s.tree_weight[f.tree_id()[i]];
            self.diag_bar[i] += (d - self.diag_bar[i]) / k;
        }

        for (c, y) in self.signals.iter().enumerate() {
            s.values.clear();
            s.values.extend((0..n).map(|i| y[f.root_of()[i]]));
            self.tilde[c].push(self.count, &s.values);

            s.tree_sum.clear();
            s.tree_sum.resize(trees, 0.0);
            for i in 0..n {
                if s.weight[i] != 0.0 {
                    s.tree_sum[f.tree_id()[i]] += s.weight[i] * y[i];
                }
            }
            s.values.clear();
            s.values.extend((0..n).map(|i| {
                let t = f.tree_id()[i];
                s.tree_sum[t] / s.tree_weight[t]
            }));
            self.bar[c].push(self.count, &s.values);
        }
    }

    /// Appends the statistics of `other`, which must cover later forests of
    /// the same `(g, q, signals)`.
    pub fn merge(&mut self, other: &ForestEnsemble) {
        let (na, nb) = (self.count, other.count);
        for c in 0..self.signals.len() {
            self.tilde[c].merge(na, &other.tilde[c], nb);
            self.bar[c].merge(na, &other.bar[c], nb);
        }
        merge_mean(&mut self.diag_tilde, na, &other.diag_tilde, nb);
        merge_mean(&mut self.diag_bar, na, &other.diag_bar, nb);
        self.root_counts.extend_from_slice(&other.root_counts);
        self.walk_steps.extend_from_slice(&other.walk_steps);
        self.count = na + nb;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn signals(&self) -> &[Vec<f64>] {
        &self.signals
    }

    /// `|ρ(Φ)|` of every forest, in forest order.
    pub fn root_counts(&self) -> &[usize] {
        &self.root_counts
    }

    pub fn walk_steps(&self) -> &[u64] {
        &self.walk_steps
    }

    pub fn mean_root_count(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        self.root_counts.iter().map(|&r| r as f64).sum::<f64>() / self.count as f64
    }

    /// Unbiased sample variance of the root count.
    pub fn root_count_variance(&self) -> f64 {
        sample_variance(self.root_counts.iter().map(|&r| r as f64))
    }

    pub fn mean_walk_steps(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        self.walk_steps.iter().map(|&s| s as f64).sum::<f64>() / self.count as f64
    }

    /// Running mean of `𝕀(r(i)=i)` (tilde) or `q_i / q(tree(i))` (bar);
    /// both estimate `K_ii`.
    pub fn diagonal(&self, which: Estimator) -> &[f64] {
        match which {
            Estimator::Tilde => &self.diag_tilde,
            Estimator::Bar => &self.diag_bar,
        }
    }

    /// Sample mean and per-node variance of the chosen estimator for input `column`.
    pub fn estimate(&self, column: usize, which: Estimator) -> SmoothEstimate {
        let m = match which {
            Estimator::Tilde => &self.tilde[column],
            Estimator::Bar => &self.bar[column],
        };
        let variance = if self.count > 1 {
            m.m2.iter()
                .map(|s| (s / (self.count - 1) as f64).max(0.0))
                .collect()
        } else {
            vec![0.0; m.m2.len()]
        };
        SmoothEstimate {
            values: m.mean.clone(),
            n_forests: self.count,
            variance,
            mean_root_count: self.mean_root_count(),
        }
    }
}

fn sample_variance(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut k, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for x in xs {
        k += 1.0;
        let d = x - mean;
        mean += d / k;
        m2 += d * (x - mean);
    }
    if k > 1.0 {
        m2 / (k - 1.0)
    } else {
        0.0
    }
}

/// Runs `work` over consecutive forest ranges of [`CHUNK`] in parallel and
/// feeds results to `fold` in range order.
pub(crate) fn for_each_chunk<T, W, F>(forests: usize, work: W, mut fold: F) -> Result<()>
where
    T: Send,
    W: Fn(Range<usize>) -> Result<T> + Sync,
    F: FnMut(T),
{
    let chunks = forests.div_ceil(CHUNK);
    let wave = (rayon::current_num_threads() * 4).max(1);
    let mut start = 0;
    while start < chunks {
        let end = (start + wave).min(chunks);
        let parts: Vec<Result<T>> = (start..end)
            .into_par_iter()
            .map(|c| work(c * CHUNK..((c + 1) * CHUNK).min(forests)))
            .collect();
        for p in parts {
            fold(p?);
        }
        start = end;
    }
    Ok(())
}

/// Empirical `P(r(i) = j)` over `forests` samples, for graphs of at most 50 nodes.
pub fn root_marginal_empirical(
    g: &Graph,
    q: &DiagQ,
    forests: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let n = g.n();
    if n > 50 {
        return Err(Error::Capability(format!(
            "root marginal matrix limited to 50 nodes (graph has {n})"
        )));
    }
    ForestSampler::new(g, q)?;
    let mut counts = vec![0u64; n * n];
    for_each_chunk(
        forests,
        |range| {
            let mut sampler = ForestSampler::new(g, q)?;
            let mut forest = Forest::default();
            let mut local = vec![0u64; n * n];
            for k in range {
                sampler.sample_into(&mut forest_rng(seed, k), &mut forest)?;
                for i in 0..n {
                    local[i * n + forest.root_of()[i]] += 1;
                }
            }
            Ok(local)
        },
        |local| counts.iter_mut().zip(local).for_each(|(a, b)| *a += b),
    )?;
    let scale = 1.0 / forests.max(1) as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| counts[i * n + j] as f64 * scale))
}
