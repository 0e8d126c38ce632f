//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rsf::baselines::{cg_solve, chebyshev_apply, chebyshev_setup, CgStop, IntervalBound, Preconditioner};
use rsf::bench::{draw_labels, run_bench, run_ssl, smooth_image, BenchConfig, BenchMethod, SslConfig};
use rsf::forest::{root_marginal_empirical, ForestSampler, NONE};
use rsf::graph::{generate, load_edge_list, load_labels};
use rsf::smoother::Method;
use rsf::tasks::{
    interpolate, irls_l1, label_propagate, label_propagate_power, newton_poisson, poisson_gradient,
    poisson_loss, IrlsNormalization, IrlsParams, LabeledProblem, LpMethod, NewtonParams,
};
use rsf::tuning::{grid_search, loocv_rsf, sure_rsf, TuningMethod, TuningParams};
use rsf::{DiagQ, Estimator, Forest, ForestEnsemble, Graph};
use std::collections::BTreeMap;
use std::path::PathBuf;

fn finish(id: &str, failures: Vec<String>, summary: String) {
    let ok = failures.is_empty();
    let detail = if ok { summary } else { format!("{summary}; {}", failures.join("; ")) };
    report(id, ok, &detail);
    assert!(ok, "criterion {id}: {detail}");
}

/// Connected graphs on at most four nodes, one per isomorphism class.
fn tiny_graphs() -> Vec<(usize, Vec<(usize, usize)>)> {
    vec![
        (1, vec![]),
        (2, vec![(0, 1)]),
        (3, vec![(0, 1), (1, 2)]),
        (3, vec![(0, 1), (1, 2), (2, 0)]),
        (4, vec![(0, 1), (1, 2), (2, 3)]),
        (4, vec![(0, 1), (0, 2), (0, 3)]),
        (4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]),
        (4, vec![(0, 1), (1, 2), (2, 0), (2, 3)]),
        (4, vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]),
        (4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
    ]
}

/// Every rooted spanning forest as a successor vector, with weight
/// `Π_roots q · Π_edges w`.
fn enumerate_forests(g: &Graph, q: &[f64]) -> Vec<(Vec<usize>, f64)> {
    let n = g.n();
    let choices: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let mut c = vec![(NONE, q[i])];
            c.extend(g.neighbors(i));
            c
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let next: Vec<usize> = (0..n).map(|i| choices[i][idx[i]].0).collect();
        let acyclic = (0..n).all(|s| {
            let mut u = s;
            for _ in 0..=n {
                if next[u] == NONE {
                    return true;
                }
                u = next[u];
            }
            false
        });
        if acyclic {
            let w = (0..n).map(|i| choices[i][idx[i]].1).product();
            out.push((next, w));
        }
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn forest_key(next: &[usize]) -> usize {
    let n = next.len();
    next.iter()
        .rev()
        .fold(0, |acc, &v| acc * (n + 1) + if v == NONE { n } else { v })
}

#[test]
fn criterion_01_forest_distribution() {
    const SAMPLES: u64 = 1_000_000;
    let mut failures = Vec::new();
    let mut outcomes = 0;
    let mut worst: f64 = 0.0;
    for (gi, (n, pairs)) in tiny_graphs().into_iter().enumerate() {
        let w = random_vec(pairs.len().max(1), 0.3, 3.0, 100 + gi as u64);
        let g = Graph::from_edges(n, pairs.iter().zip(&w).map(|(&(u, v), &w)| (u, v, w))).unwrap();
        let q = random_vec(n, 0.2, 2.0, 200 + gi as u64);
        let forests = enumerate_forests(&g, &q);
        let total: f64 = forests.iter().map(|f| f.1).sum();
        let mut counts = vec![0u64; (n + 1).pow(n as u32)];
        let mut sampler = ForestSampler::new(&g, &DiagQ::PerNode(q.clone())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(gi as u64);
        let mut f = Forest::default();
        for _ in 0..SAMPLES {
            sampler.sample_into(&mut rng, &mut f).unwrap();
            counts[forest_key(f.next())] += 1;
        }
        let mut seen = 0;
        for (next, wt) in &forests {
            let p = wt / total;
            let c = counts[forest_key(next)];
            seen += c;
            let sd = (SAMPLES as f64 * p * (1.0 - p)).sqrt();
            let z = if sd > 0.0 { (c as f64 - SAMPLES as f64 * p).abs() / sd } else { 0.0 };
            worst = worst.max(z);
            if z > 4.0 {
                failures.push(format!("graph {gi} forest {next:?}: z = {z:.2}"));
            }
        }
        if seen != SAMPLES {
            failures.push(format!("graph {gi}: {} samples outside the enumeration", SAMPLES - seen));
        }
        outcomes += forests.len();
    }
    finish(
        "1 (forest distribution)",
        failures,
        format!("10 graphs, {outcomes} forests, 1e6 samples each, max |z| = {worst:.2}"),
    );
}

#[test]
fn criterion_02_root_count_moments() {
    const N: usize = 100_000;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for s in 0..10u64 {
        let n = 5 + (s as usize * 7) % 26;
        let g = random_connected(n, 0.15, 0.5, 2.0, 300 + s);
        let qv = if s % 2 == 0 {
            vec![0.3 + 0.2 * s as f64; n]
        } else {
            random_vec(n, 0.1, 2.0, 400 + s)
        };
        let k = kernel(&g, &qv);
        let mean = k.trace();
        let var = mean - (&k * &k).trace();
        let ens = ForestEnsemble::sample(&g, &DiagQ::PerNode(qv), vec![], N, s).unwrap();
        let counts: Vec<f64> = ens.root_counts().iter().map(|&c| c as f64).collect();
        let m = counts.iter().sum::<f64>() / N as f64;
        let v = counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (N - 1) as f64;
        let m4 = counts.iter().map(|c| (c - m).powi(4)).sum::<f64>() / N as f64;
        let zm = (m - mean).abs() / (var / N as f64).sqrt();
        let zv = (v - var).abs() / ((m4 - v * v).max(0.0) / N as f64).sqrt();
        worst = worst.max(zm).max(zv);
        if zm > 4.0 || zv > 4.0 {
            failures.push(format!("graph {s} (n={n}): mean z = {zm:.2}, variance z = {zv:.2}"));
        }
    }
    finish(
        "2 (root count moments)",
        failures,
        format!("10 graphs, N = 1e5, max |z| = {worst:.2}"),
    );
}

#[test]
fn criterion_03_root_marginals() {
    const N: usize = 200_000;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut cells = 0;
    for (gi, (n, p)) in [(8, 0.4), (12, 0.3), (20, 0.15)].into_iter().enumerate() {
        let g = random_connected(n, p, 0.5, 2.0, 500 + gi as u64);
        for (qi, qv) in [vec![0.7; n], random_vec(n, 0.2, 1.5, 600 + gi as u64)]
            .into_iter()
            .enumerate()
        {
            let k = kernel(&g, &qv);
            let q = if qi == 0 { DiagQ::Uniform(0.7) } else { DiagQ::PerNode(qv) };
            let emp = root_marginal_empirical(&g, &q, N, 7 + gi as u64).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let p = k[(i, j)];
                    let z = (emp[(i, j)] - p).abs() / (p * (1.0 - p) / N as f64).sqrt();
                    worst = worst.max(z);
                    cells += 1;
                    if z > 4.0 {
                        failures.push(format!("graph {gi} q{qi} ({i},{j}): z = {z:.2}"));
                    }
                }
            }
        }
    }
    finish(
        "3 (root marginals)",
        failures,
        format!("{cells} entries over uniform and per-node q, N = 2e5, max |z| = {worst:.2}"),
    );
}

/// `(yᵀQy − (Ky)ᵀQ(Ky), yᵀQKy − (Ky)ᵀQ(Ky))`.
fn variance_closed_forms(k: &DMatrix<f64>, q: &[f64], y: &[f64]) -> (f64, f64) {
    let ky = apply(k, y);
    let kqk: f64 = ky.iter().zip(q).map(|(v, q)| q * v * v).sum();
    let qy2: f64 = y.iter().zip(q).map(|(v, q)| q * v * v).sum();
    let qyk: f64 = y.iter().zip(q).zip(&ky).map(|((v, q), k)| q * v * k).sum();
    (qy2 - kqk, qyk - kqk)
}

#[test]
fn criterion_04_unbiasedness_and_variance() {
    const N: usize = 100_000;
    let mut failures = Vec::new();
    let mut worst_z: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    for s in 0..4u64 {
        let n = [10, 15, 20, 20][s as usize];
        let g = random_connected(n, 0.2, 0.5, 2.0, 700 + s);
        let qv = if s % 2 == 0 { vec![0.5 + s as f64; n] } else { random_vec(n, 0.2, 2.0, 800 + s) };
        let y = random_vec(n, -1.0, 2.0, 900 + s);
        let k = kernel(&g, &qv);
        let ky = apply(&k, &y);
        let (v_tilde, v_bar) = variance_closed_forms(&k, &qv, &y);
        let ens = ForestEnsemble::sample(&g, &DiagQ::PerNode(qv.clone()), vec![y.clone()], N, s).unwrap();
        let mut emp = [0.0; 2];
        for (slot, which, closed) in [(0, Estimator::Tilde, v_tilde), (1, Estimator::Bar, v_bar)] {
            let est = ens.estimate(0, which);
            for i in 0..n {
                let sd = (est.variance[i] / N as f64).sqrt();
                let z = if sd > 0.0 { (est.values[i] - ky[i]).abs() / sd } else { 0.0 };
                worst_z = worst_z.max(z);
                if z > 4.0 {
                    failures.push(format!("instance {s} {which} node {i}: z = {z:.2}"));
                }
            }
            emp[slot] = est.weighted_variance(&qv);
            let rel = (emp[slot] - closed).abs() / closed;
            worst_rel = worst_rel.max(rel);
            if rel > 0.05 {
                failures.push(format!(
                    "instance {s} {which}: Σq·Var = {:.5} vs {closed:.5}",
                    emp[slot]
                ));
            }
        }
        if v_bar > v_tilde || emp[1] > emp[0] {
            failures.push(format!("instance {s}: bar variance exceeds tilde"));
        }
    }
    finish(
        "4 (unbiasedness and variance)",
        failures,
        format!("4 instances, N = 1e5, max |z| = {worst_z:.2}, max variance error = {:.2}%", 100.0 * worst_rel),
    );
}

#[test]
fn criterion_05_walk_cost() {
    const N: usize = 10_000;
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let (grid, _) = generate(&"grid:10x10".parse().unwrap(), 0).unwrap();
    let (ba, _) = generate(&"ba:100:2".parse().unwrap(), 1).unwrap();
    let weighted = random_connected(60, 0.08, 0.5, 2.0, 1000);
    let cases = [
        ("grid 10x10", grid, vec![0.3; 100], true),
        ("ba 100", ba, vec![1.0; 100], true),
        ("weighted 60", weighted, random_vec(60, 0.1, 1.0, 1001), false),
    ];
    for (s, (name, g, qv, scalar)) in cases.into_iter().enumerate() {
        let inv = green(&g, &qv);
        let oracle: f64 = (0..g.n()).map(|i| inv[(i, i)] * (g.degree(i) + qv[i])).sum();
        let q = if scalar { DiagQ::Uniform(qv[0]) } else { DiagQ::PerNode(qv.clone()) };
        let ens = ForestEnsemble::sample(&g, &q, vec![], N, s as u64).unwrap();
        let mean = ens.mean_walk_steps();
        let rel = (mean - oracle).abs() / oracle;
        notes.push(format!("{name} {:.2}%", 100.0 * rel));
        if rel > 0.05 {
            failures.push(format!("{name}: mean steps {mean:.1} vs {oracle:.1}"));
        }
        if scalar {
            let bound = g.n() as f64 + 2.0 * g.num_edges() as f64 / qv[0];
            if mean > bound || oracle > bound {
                failures.push(format!("{name}: {mean:.1} exceeds n + 2|E|/q = {bound:.1}"));
            }
        }
    }
    finish("5 (walk cost)", failures, format!("N = 1e4, relative error {}", notes.join(", ")));
}

fn normal_vec(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Unit-norm combination of the `k` lowest Laplacian eigenvectors.
fn planted(g: &Graph, k: usize, seed: u64) -> Vec<f64> {
    let eig = SymmetricEigen::new(laplacian(g));
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let a = normal_vec(k, 1.0, seed);
    let mut x = vec![0.0; g.n()];
    for (c, &j) in order.iter().take(k).enumerate() {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += a[c] * eig.eigenvectors[(i, j)];
        }
    }
    let s = norm2(&x);
    x.iter().map(|v| v / s).collect()
}

fn sure_dense(k: &DMatrix<f64>, y: &[f64], sigma2: f64) -> f64 {
    let ky = apply(k, y);
    let r: f64 = y.iter().zip(&ky).map(|(a, b)| (a - b).powi(2)).sum();
    -(y.len() as f64) * sigma2 + r + 2.0 * sigma2 * k.trace()
}

#[test]
fn criterion_06_sure_identities() {
    let mut failures = Vec::new();
    let mut notes = Vec::new();

    // Mean root count as the trace surrogate.
    let (g, _) = generate(&"grid:4x5".parse().unwrap(), 0).unwrap();
    let k = kernel(&g, &[1.0; 20]);
    let ens = ForestEnsemble::sample(&g, &DiagQ::Uniform(1.0), vec![], 10_000, 3).unwrap();
    let var = k.trace() - (&k * &k).trace();
    let z = (ens.mean_root_count() - k.trace()).abs() / (var / 1e4).sqrt();
    notes.push(format!("root count z = {z:.2}"));
    if z > 4.0 {
        failures.push(format!("mean root count z = {z:.2}"));
    }

    // Gap between forest SURE and exact SURE over repeated N-forest draws.
    const N: usize = 1000;
    const REPS: usize = 60_000;
    let (g, _) = generate(&"grid:4x4".parse().unwrap(), 0).unwrap();
    let q = 5.0;
    let k = kernel(&g, &[q; 16]);
    let y: Vec<f64> = planted(&g, 3, 11)
        .iter()
        .zip(normal_vec(16, 0.1, 12))
        .map(|(x, e)| x + e)
        .collect();
    let sigma2 = 0.01;
    let exact = sure_dense(&k, &y, sigma2);
    let (v_tilde, v_bar) = variance_closed_forms(&k, &[q; 16], &y);
    let gaps: Vec<[f64; 2]> = (0..REPS)
        .map(|r| {
            let ens =
                ForestEnsemble::sample(&g, &DiagQ::Uniform(q), vec![y.clone()], N, 5000 + r as u64).unwrap();
            [Estimator::Tilde, Estimator::Bar].map(|which| sure_rsf(&ens, 0, sigma2, which) - exact)
        })
        .collect();
    for (c, (which, v)) in [(Estimator::Tilde, v_tilde), (Estimator::Bar, v_bar)].into_iter().enumerate() {
        let expect = v / q / N as f64;
        let mean = gaps.iter().map(|x| x[c]).sum::<f64>() / REPS as f64;
        let se = (gaps.iter().map(|x| (x[c] - mean).powi(2)).sum::<f64>() / ((REPS - 1) * REPS) as f64).sqrt();
        let rel = (mean - expect).abs() / expect;
        notes.push(format!(
            "{which} gap {mean:.3e} vs ΣVar {expect:.3e} ({:.1}%, se {:.1}%)",
            100.0 * rel,
            100.0 * se / expect
        ));
        if rel > 0.10 {
            failures.push(format!("{which} gap off by {:.1}%", 100.0 * rel));
        }
    }

    // SURE argmin against the risk argmin.
    let (g, _) = generate(&"grid:4x5".parse().unwrap(), 0).unwrap();
    let x = planted(&g, 3, 1000);
    let sigma2 = 0.05;
    let grid: Vec<f64> = (0..13).map(|i| 10f64.powf(-2.0 + 0.25 * i as f64)).collect();
    let risk: Vec<f64> = grid
        .iter()
        .map(|&mu| {
            let k = kernel(&g, &[mu; 20]);
            let bias = apply(&k, &x).iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            bias + sigma2 * (k.transpose() * &k).trace()
        })
        .collect();
    let best = (0..grid.len()).min_by(|&a, &b| risk[a].total_cmp(&risk[b])).unwrap();
    let params = TuningParams {
        sigma2: Some(sigma2),
        ..Default::default()
    };
    let mut agree = 0;
    for seed in 0..50 {
        let y: Vec<f64> = x.iter().zip(normal_vec(20, sigma2.sqrt(), seed)).map(|(a, e)| a + e).collect();
        let r = grid_search(&g, &[y], &grid, TuningMethod::SureExact, &params).unwrap();
        agree += usize::from(r.best_index == best);
    }
    notes.push(format!("SURE argmin agrees in {agree}/50"));
    if agree < 40 {
        failures.push(format!("SURE argmin agrees with the risk argmin in {agree}/50 seeds (need 40)"));
    }
    finish("6 (SURE identities)", failures, notes.join(", "));
}

#[test]
fn criterion_07_loocv_consistency() {
    const N: usize = 100_000;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for s in 0..3u64 {
        let n = [12, 16, 20][s as usize];
        let g = random_connected(n, 0.2, 0.5, 2.0, 1100 + s);
        let qv = random_vec(n, 0.3, 2.0, 1200 + s);
        let y = random_vec(n, -1.0, 1.0, 1300 + s);
        let k = kernel(&g, &qv);
        let ky = apply(&k, &y);
        let all: Vec<usize> = (0..n).collect();
        let half: Vec<usize> = (0..n).step_by(2).collect();
        let ens = ForestEnsemble::sample(&g, &DiagQ::PerNode(qv), vec![y.clone()], N, s).unwrap();
        for labels in [&all, &half] {
            let exact = labels
                .iter()
                .map(|&i| ((ky[i] - y[i]) / (1.0 - k[(i, i)])).powi(2))
                .sum::<f64>()
                / labels.len() as f64;
            for which in [Estimator::Tilde, Estimator::Bar] {
                let v = loocv_rsf(&ens, 0, labels, which).unwrap();
                let rel = (v - exact).abs() / exact;
                worst = worst.max(rel);
                if rel > 0.02 {
                    failures.push(format!("graph {s} {which} |ℓ|={}: {v:.5} vs {exact:.5}", labels.len()));
                }
            }
        }
    }
    finish(
        "7 (LOOCV consistency)",
        failures,
        format!("3 graphs, N = 1e5, max relative error {:.2}%", 100.0 * worst),
    );
}

#[test]
fn criterion_08_interpolation_and_propagation() {
    let mut failures = Vec::new();
    let g = random_connected(40, 0.08, 0.5, 2.0, 1400);
    let l = laplacian(&g);
    let labeled: Vec<usize> = (0..40).step_by(5).collect();
    let x_l = random_vec(labeled.len(), -1.0, 1.0, 1401);
    let f = interpolate(&g, &labeled, &x_l, 0.0, Method::Exact, 0, 0).unwrap();
    let lf = apply(&l, &f);
    let harm = (0..40)
        .filter(|i| !labeled.contains(i))
        .map(|i| lf[i].abs())
        .fold(0.0, f64::max);
    if harm > 1e-8 {
        failures.push(format!("harmonic residual {harm:.2e}"));
    }
    for (k, &i) in labeled.iter().enumerate() {
        if f[i] != x_l[k] {
            failures.push(format!("labeled node {i} changed"));
        }
    }

    let p4 = path(4);
    let x = interpolate(&p4, &[0, 3], &[1.0, 0.0], 0.0, Method::Exact, 0, 0).unwrap();
    if (x[1] - 2.0 / 3.0).abs() > 1e-12 || (x[2] - 1.0 / 3.0).abs() > 1e-12 {
        failures.push(format!("path values {:?}", &x[1..3]));
    }

    let labels: BTreeMap<usize, usize> = labeled.iter().enumerate().map(|(k, &i)| (i, k % 3)).collect();
    let problem = LabeledProblem::new(40, labels, None).unwrap();
    let exact = label_propagate(&g, &problem, LpMethod::Exact, 0, 0).unwrap();
    let lp_harm = exact
        .scores
        .iter()
        .flat_map(|col| {
            let lc = apply(&l, col);
            problem.unlabeled().into_iter().map(move |i| lc[i].abs())
        })
        .fold(0.0, f64::max);
    if lp_harm > 1e-8 {
        failures.push(format!("LP harmonic residual {lp_harm:.2e}"));
    }
    const N: usize = 100_000;
    let rsf = label_propagate(&g, &problem, LpMethod::Rsf, N, 9).unwrap();
    let mut worst: f64 = 0.0;
    for (ce, cr) in exact.scores.iter().zip(&rsf.scores) {
        for i in 0..40 {
            let p = ce[i].clamp(0.0, 1.0);
            let sd = (p * (1.0 - p) / N as f64).sqrt();
            let z = if sd > 1e-12 { (cr[i] - ce[i]).abs() / sd } else { (cr[i] - ce[i]).abs() * 1e12 };
            worst = worst.max(z);
        }
    }
    if worst > 4.0 {
        failures.push(format!("hitting frequencies max z = {worst:.2}"));
    }
    let (power, sweeps) = label_propagate_power(&g, &problem, 1e-13, 1_000_000).unwrap();
    let dev = power
        .iter()
        .zip(&exact.scores)
        .map(|(a, b)| max_abs_diff(a, b))
        .fold(0.0, f64::max);
    if dev > 1e-6 {
        failures.push(format!("power iteration differs by {dev:.2e}"));
    }
    finish(
        "8 (interpolation and propagation)",
        failures,
        format!(
            "harmonic residual {harm:.1e}, LP residual {lp_harm:.1e}, hitting max z {worst:.2}, power iteration {dev:.1e} after {sweeps} sweeps"
        ),
    );
}

fn poisson_counts(intensity: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    intensity
        .iter()
        .map(|&l| Poisson::new(l).unwrap().sample(&mut rng))
        .collect()
}

#[test]
fn criterion_09_newton() {
    let mut failures = Vec::new();
    let (g, _) = generate(&"grid:16x16".parse().unwrap(), 0).unwrap();
    let intensity: Vec<f64> = smooth_image(16, 16, 3, 4).iter().map(|v| 10.0 * v).collect();
    let y = poisson_counts(&intensity, 5);
    let mu = 1.0;

    let t: Vec<f64> = y.iter().zip(normal_vec(256, 0.3, 6)).map(|(y, e)| (y + 1.0).ln() + e).collect();
    let grad = poisson_gradient(&g, &y, mu, &t).unwrap();
    let h = 1e-5;
    let fd: Vec<f64> = (0..256)
        .map(|i| {
            let mut a = t.clone();
            let mut b = t.clone();
            a[i] += h;
            b[i] -= h;
            (poisson_loss(&g, &y, mu, &a).unwrap() - poisson_loss(&g, &y, mu, &b).unwrap()) / (2.0 * h)
        })
        .collect();
    let gmax = grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let grad_rel = max_abs_diff(&fd, &grad) / gmax;
    if grad_rel > 1e-5 {
        failures.push(format!("gradient relative error {grad_rel:.2e}"));
    }

    let (_, exact) = newton_poisson(&g, &y, &NewtonParams { mu, ..Default::default() }).unwrap();
    let mut prev = exact.initial_loss;
    for (k, &l) in exact.loss.iter().enumerate() {
        if l > prev {
            failures.push(format!("exact loss rose at iteration {}", k + 1));
        }
        prev = l;
    }
    let (_, bar) = newton_poisson(
        &g,
        &y,
        &NewtonParams {
            mu,
            method: Method::Bar,
            forests: 20,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let gap = (bar.final_loss() - exact.final_loss()).abs() / exact.final_loss().abs();
    if gap > 0.01 {
        failures.push(format!("final losses differ by {:.3}%", 100.0 * gap));
    }
    finish(
        "9 (Newton)",
        failures,
        format!(
            "gradient error {grad_rel:.1e}, {} exact iterations, exact {:.4} vs bar {:.4} ({:.4}%)",
            exact.len(),
            exact.final_loss(),
            bar.final_loss(),
            100.0 * gap
        ),
    );
}

/// The printed recursion `z ← (2μI + BᵀMB)⁻¹ μ y` with `B` the `√w`-scaled
/// incidence matrix and `M = diag(1/max(|Bz|, eps))`.
fn irls_dense(g: &Graph, y: &[f64], mu: f64, eps: f64, iters: usize) -> Vec<f64> {
    let n = g.n();
    let edges: Vec<(usize, usize, f64)> = g.edges().collect();
    let mut b = DMatrix::zeros(edges.len(), n);
    for (e, &(u, v, w)) in edges.iter().enumerate() {
        b[(e, u)] = w.sqrt();
        b[(e, v)] = -w.sqrt();
    }
    let yv = DVector::from_column_slice(y);
    let mut z = yv.clone();
    for _ in 0..iters {
        let bz = &b * &z;
        let m = DVector::from_iterator(edges.len(), bz.iter().map(|d| 1.0 / d.abs().max(eps)));
        let a = b.transpose() * DMatrix::from_diagonal(&m) * &b + DMatrix::identity(n, n) * (2.0 * mu);
        let rhs = &yv * mu;
        let lu = a.clone().lu();
        z = lu.solve(&rhs).unwrap();
        for _ in 0..3 {
            let r = &rhs - &a * &z;
            z += lu.solve(&r).unwrap();
        }
    }
    z.as_slice().to_vec()
}

#[test]
fn criterion_10_irls() {
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for s in 0..3u64 {
        let n = [8, 15, 20][s as usize];
        let g = random_connected(n, 0.2, 0.5, 2.0, 1500 + s);
        let y = random_vec(n, -1.0, 1.0, 1600 + s);
        let mu = 4.0;
        let mut by: Vec<f64> = g.edges().map(|(u, v, w)| w.sqrt() * (y[u] - y[v]).abs()).collect();
        by.sort_by(f64::total_cmp);
        let default_eps = (1e-8 * by[by.len() / 2]).max(1e-12);
        for (eps, given) in [(1e-3, true), (default_eps, false)] {
            let p = IrlsParams {
                mu,
                eps: given.then_some(eps),
                max_iters: 12,
                tol: 0.0,
                ..Default::default()
            };
            let (z, trace) = irls_l1(&g, &y, &p).unwrap();
            let reference = irls_dense(&g, &y, mu, eps, trace.len());
            let spread = z.iter().fold(f64::MIN, |a, &b| a.max(b)) - z.iter().fold(f64::MAX, |a, &b| a.min(b));
            if spread < 1e-2 {
                failures.push(format!("n={n}: solution is flat, comparison is vacuous"));
            }
            let dev = max_abs_diff(&z, &reference);
            notes.push(format!("n={n} eps={eps:.0e}: {dev:.1e}"));
            if dev > 1e-8 {
                failures.push(format!("n={n} eps={eps:.1e}: deviates by {dev:.2e}"));
            }
            for norm in [IrlsNormalization::Printed, IrlsNormalization::Majorized] {
                let (_, tr) = irls_l1(&g, &y, &IrlsParams { normalization: norm, ..p.clone() }).unwrap();
                let mut prev = tr.initial_loss;
                for (k, &l) in tr.loss.iter().enumerate() {
                    if l > prev + 1e-12 * prev.abs() {
                        failures.push(format!(
                            "n={n} eps={eps:.1e} {norm:?}: objective rose at iteration {} by {:.2e}",
                            k + 1,
                            l - prev
                        ));
                        break;
                    }
                    prev = l;
                }
            }
        }
    }
    finish("10 (IRLS)", failures, format!("max deviation from the dense recursion: {}", notes.join(", ")));
}

#[test]
fn criterion_11_baselines() {
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let (grid, _) = generate(&"grid:10x10".parse().unwrap(), 0).unwrap();
    let weighted = random_connected(100, 0.04, 0.5, 2.0, 1700);
    for (name, g, q) in [("grid 10x10", grid, 0.5), ("weighted 100", weighted, 0.2)] {
        let y = random_vec(100, -1.0, 1.0, 1800);
        let exact = apply(&kernel(&g, &[q; 100]), &y);
        let dq = DiagQ::Uniform(q);

        let spec = chebyshev_setup(&g, q, 200, IntervalBound::LambdaMax).unwrap();
        let cheb = max_abs_diff(&chebyshev_apply(&g, &spec, &y).unwrap(), &exact);
        let cg = cg_solve(&g, &dq, &y, CgStop::Tolerance(1e-10), Preconditioner::None).unwrap();
        let cg_err = max_abs_diff(&cg.x, &exact);
        if cheb > 1e-8 {
            failures.push(format!("{name}: Chebyshev degree 200 off by {cheb:.2e}"));
        }
        if cg_err > 1e-8 {
            failures.push(format!("{name}: CG off by {cg_err:.2e}"));
        }

        let err2 = |x: &[f64]| norm2(&x.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>());
        let floor = 1e-12 * norm2(&exact);
        let cg_curve: Vec<f64> = (1..=cg.iterations)
            .map(|k| err2(&cg_solve(&g, &dq, &y, CgStop::Iterations(k), Preconditioner::None).unwrap().x))
            .collect();
        if let Some(k) = (1..cg_curve.len()).find(|&k| cg_curve[k] > cg_curve[k - 1] + floor) {
            failures.push(format!("{name}: CG error rose at iteration {}", k + 1));
        }
        let b = spec.b;
        let cheb_curve: Vec<f64> = (1..=200)
            .map(|d| {
                let s = chebyshev_setup(&g, q, d, IntervalBound::LambdaMax).unwrap();
                assert_eq!(s.b, b);
                err2(&chebyshev_apply(&g, &s, &y).unwrap())
            })
            .collect();
        let rises: Vec<usize> = (4..cheb_curve.len())
            .filter(|&i| cheb_curve[i] > cheb_curve[i - 1] + floor)
            .map(|i| i + 1)
            .collect();
        if !rises.is_empty() {
            failures.push(format!("{name}: Chebyshev error rose at degrees {rises:?}"));
        }
        notes.push(format!("{name}: Chebyshev {cheb:.1e}, CG {cg_err:.1e} in {} iterations", cg.iterations));
    }
    finish("11 (baselines)", failures, notes.join(", "));
}

#[test]
fn criterion_12_benchmark_shape() {
    let (g, _) = generate(&"torus:100x100".parse().unwrap(), 0).unwrap();
    let cfg = BenchConfig {
        label: "torus:100x100".into(),
        methods: vec![BenchMethod::Cg, BenchMethod::Pcg, BenchMethod::Cheb, BenchMethod::Bar],
        timing_runs: 1,
        ..Default::default()
    };
    let report = run_bench(&g, &cfg).unwrap();
    let mut failures = Vec::new();
    let bar: Vec<_> = report.records.iter().filter(|r| r.method == BenchMethod::Bar).collect();
    let pts: Vec<(f64, f64)> = bar.iter().map(|r| ((r.param as f64).ln(), r.approx_err.ln())).collect();
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (mx / pts.len() as f64, my / pts.len() as f64);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    if (slope + 0.5).abs() > 0.05 {
        failures.push(format!("bar slope {slope:.3}"));
    }
    let floor = report.exact_recon_err;
    let mut plateau = Vec::new();
    for m in &cfg.methods {
        let last = report
            .records
            .iter()
            .filter(|r| r.method == *m)
            .max_by_key(|r| r.param)
            .unwrap();
        let rel = (last.recon_err - floor) / floor;
        plateau.push(format!("{m}@{} {:+.2}%", last.param, 100.0 * rel));
        if rel.abs() > 0.02 {
            failures.push(format!(
                "{m} reconstruction error {:.5} at {} vs {floor:.5} ({:+.2}%)",
                last.recon_err,
                last.param,
                100.0 * rel
            ));
        }
    }
    finish(
        "12 (benchmark shape)",
        failures,
        format!(
            "bar slope {slope:.3}, exact reconstruction error {floor:.5}, plateau {}",
            plateau.join(", ")
        ),
    );
}

fn cora_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cora")
}

#[test]
fn criterion_13_cora_ssl() {
    let full = load_edge_list(cora_dir().join("cora.edges")).unwrap();
    let (g, kept) = full.largest_component();
    let labels = load_labels(cora_dir().join("cora.labels")).unwrap();
    let truth: Vec<usize> = kept.iter().map(|i| labels[i]).collect();
    let classes = truth.iter().max().unwrap() + 1;
    let mut failures = Vec::new();
    if (g.n(), g.num_edges()) != (2485, 5069) {
        failures.push(format!("largest component has {} nodes, {} edges", g.n(), g.num_edges()));
    }
    let draws = draw_labels(&truth, classes, 5, 0);
    if draws.len() != 5 * classes {
        failures.push(format!("drew {} labels", draws.len()));
    }
    let mut notes = Vec::new();
    for m in [5, 10] {
        let cfg = SslConfig {
            per_class: m,
            repetitions: 10,
            seed: m as u64,
            ..Default::default()
        };
        let rep = run_ssl(&g, &truth, classes, &cfg).unwrap();
        let constant = rep.row("constant").unwrap().mean;
        let mut line = format!("m={m} constant {constant:.3}");
        for name in ["lp-exact", "lp-rsf", "gssl-exact", "gssl-bar"] {
            let acc = rep.row(name).unwrap().mean;
            line.push_str(&format!(", {name} {acc:.3}"));
            if acc <= constant {
                failures.push(format!("m={m}: {name} {acc:.3} ≤ constant {constant:.3}"));
            }
        }
        notes.push(line);
    }
    finish(
        "13 (Cora)",
        failures,
        format!("{} nodes, {} edges; {}", g.n(), g.num_edges(), notes.join("; ")),
    );
}
