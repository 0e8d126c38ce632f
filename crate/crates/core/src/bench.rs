//! Experiment drivers: error versus cost sweeps on bandlimited signals,
//! Gaussian and Poisson denoising, and semi-supervised accuracy tables.

use crate::baselines::{cg_solve, chebyshev_on_interval, chebyshev_apply, CgStop, IntervalBound, Preconditioner};
use crate::error::{check_len, Error, Result};
use crate::forest::{forest_rng, DiagQ, Forest, ForestEnsemble, ForestSampler};
use crate::graph::{bandlimited_from_basis, lambda_max, lowest_eigenpairs, Graph, Signal};
use crate::smoother::{estimate, solve_shifted, Estimator, Method};
use crate::tasks::{
    constant_baseline, generalized_ssl, label_propagate, newton_poisson, psnr, ssl_inputs,
    IterateTrace, LabeledProblem, LpMethod, NewtonParams,
};
use crate::tuning::{candidate_seed, grid_search, TuningMethod, TuningParams};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    Bar,
    Tilde,
    Cg,
    /// Jacobi-preconditioned CG.
    Pcg,
    /// Chebyshev filter on `[0, λ_max]`.
    Cheb,
    /// Chebyshev filter on `[0, 2 d_max]`.
    ChebGershgorin,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 6] = [
        BenchMethod::Bar,
        BenchMethod::Tilde,
        BenchMethod::Cg,
        BenchMethod::Pcg,
        BenchMethod::Cheb,
        BenchMethod::ChebGershgorin,
    ];

    fn estimator(self) -> Option<Estimator> {
        match self {
            BenchMethod::Bar => Some(Estimator::Bar),
            BenchMethod::Tilde => Some(Estimator::Tilde),
            _ => None,
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMethod::Bar => "bar",
            BenchMethod::Tilde => "tilde",
            BenchMethod::Cg => "cg",
            BenchMethod::Pcg => "pcg",
            BenchMethod::Cheb => "cheb",
            BenchMethod::ChebGershgorin => "cheb-gershgorin",
        })
    }
}

impl FromStr for BenchMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BenchMethod::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown bench method '{s}'")))
    }
}

/// Parses a comma list of methods, or `all`.
pub fn parse_methods(s: &str) -> Result<Vec<BenchMethod>> {
    if s == "all" {
        return Ok(BenchMethod::ALL.to_vec());
    }
    s.split(',').map(|t| t.trim().parse()).collect()
}

/// Parses `log:a:b:count` or a comma list of positive integers.
///
/// The log form takes `round(a·(b/a)^{i/(count−1)})` and bumps each value
/// to at least one more than its predecessor, so all `count` values are
/// distinct; `log:1:100:17` gives 1,2,3,4,5,6,7,8,10,13,18,24,32,42,56,75,100.
pub fn parse_sweep(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Parameter(format!("bad sweep '{s}'"));
    let values: Vec<usize> = if let Some(rest) = s.strip_prefix("log:") {
        let p: Vec<&str> = rest.split(':').collect();
        if p.len() != 3 {
            return Err(bad());
        }
        let a: usize = p[0].parse().map_err(|_| bad())?;
        let b: usize = p[1].parse().map_err(|_| bad())?;
        let count: usize = p[2].parse().map_err(|_| bad())?;
        if a == 0 || b < a || count < 2 || count > b - a + 1 {
            return Err(bad());
        }
        let ratio = (b as f64 / a as f64).ln();
        let mut out: Vec<usize> = Vec::with_capacity(count);
        for i in 0..count {
            let v = (a as f64 * (ratio * i as f64 / (count - 1) as f64).exp()).round() as usize;
            let v = match out.last() {
                Some(&prev) => v.max(prev + 1),
                None => v,
            };
            out.push(v);
        }
        if *out.last().unwrap() != b {
            return Err(Error::Parameter(format!(
                "sweep '{s}' cannot hold {count} distinct integers ending at {b}"
            )));
        }
        out
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(Error::Parameter(format!("sweep '{s}' must hold positive integers")));
    }
    Ok(values)
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Graph name written to the `graph` column.
    pub label: String,
    /// Bandwidth of the planted signal.
    pub k: usize,
    pub snr: f64,
    pub methods: Vec<BenchMethod>,
    pub sweep: Vec<usize>,
    /// Signal realizations averaged in the error columns.
    pub realizations: usize,
    /// Timed repetitions per cell, on the first realization.
    pub timing_runs: usize,
    pub seed: u64,
    /// Fixed `q`; tuned per realization against the clean signal when absent.
    pub q: Option<f64>,
    /// Worker threads for timing runs; `1` reproduces single-thread timing.
    pub timing_threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            label: "graph".into(),
            k: 5,
            snr: 2.0,
            methods: BenchMethod::ALL.to_vec(),
            sweep: parse_sweep("log:1:100:17").expect("valid"),
            realizations: 20,
            timing_runs: 100,
            seed: 0,
            q: None,
            timing_threads: 1,
        }
    }
}

/// One `method × param` cell. Errors are means over realizations, times are
/// means over timing runs. `time_s` includes `pre_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub graph: String,
    pub method: BenchMethod,
    pub param: usize,
    pub approx_err: f64,
    pub recon_err: f64,
    pub time_s: f64,
    pub pre_s: f64,
    pub n_runs: usize,
    /// Set when the cell failed; numeric fields are NaN.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// `q` used for each realization.
    pub q: Vec<f64>,
    /// Mean `‖x − x̂‖` over realizations, the floor every method approaches.
    pub exact_recon_err: f64,
    /// Mean wall time of one exact solve.
    pub exact_time_s: f64,
    pub timing_threads: usize,
}

impl BenchReport {
    /// Writes the fixed-schema CSV. Comment lines carry the exact-solve
    /// reference and failures.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(&name, e))?,
        );
        let io = |e| Error::io(&name, e);
        let mode = if self.timing_threads == 1 {
            "single-threaded".to_string()
        } else {
            format!("multi-threaded ({} threads)", self.timing_threads)
        };
        writeln!(out, "# timing: {mode}").map_err(io)?;
        writeln!(out, "# exact_time_s={:e}", self.exact_time_s).map_err(io)?;
        writeln!(out, "# exact_recon_err={:e}", self.exact_recon_err).map_err(io)?;
        let qs: Vec<String> = self.q.iter().map(|q| format!("{q:e}")).collect();
        writeln!(out, "# q={}", qs.join(",")).map_err(io)?;
        writeln!(out, "graph,method,param,approx_err,recon_err,time_s,pre_s,n_runs").map_err(io)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{:e},{:e},{:e},{:e},{}",
                r.graph, r.method, r.param, r.approx_err, r.recon_err, r.time_s, r.pre_s, r.n_runs
            )
            .map_err(io)?;
        }
        for r in self.records.iter().filter(|r| r.failure.is_some()) {
            writeln!(out, "# failed {} {}: {}", r.method, r.param, r.failure.as_ref().unwrap())
                .map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Log–log plot of approximation error against time, one line per method.
    pub fn write_svg(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let pts: Vec<&BenchRecord> = self
            .records
            .iter()
            .filter(|r| r.approx_err > 0.0 && r.time_s > 0.0 && r.approx_err.is_finite())
            .collect();
        let (w, h, pad) = (640.0, 480.0, 60.0);
        let lx = |r: &BenchRecord| r.time_s.log10();
        let ly = |r: &BenchRecord| r.approx_err.log10();
        let span = |v: Vec<f64>| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min).floor();
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
            if lo.is_finite() && hi > lo {
                (lo, hi)
            } else {
                (0.0, 1.0)
            }
        };
        let (x0, x1) = span(pts.iter().map(|r| lx(r)).collect());
        let (y0, y1) = span(pts.iter().map(|r| ly(r)).collect());
        let px = |v: f64| pad + (v - x0) / (x1 - x0) * (w - 2.0 * pad);
        let py = |v: f64| h - pad - (v - y0) / (y1 - y0) * (h - 2.0 * pad);
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">log10 time (s)  [{x0}, {x1}]</text>\n\
             <text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">log10 approximation error  [{y0}, {y1}]</text>\n",
            w - 2.0 * pad,
            h - 2.0 * pad,
            w / 2.0,
            h - 15.0,
            h / 2.0,
            h / 2.0
        );
        for (c, m) in BenchMethod::ALL.iter().enumerate() {
            let line: Vec<String> = pts
                .iter()
                .filter(|r| r.method == *m)
                .map(|r| format!("{:.1},{:.1}", px(lx(r)), py(ly(r))))
                .collect();
            if line.is_empty() {
                continue;
            }
            s += &format!(
                "<polyline fill=\"none\" stroke=\"{}\" points=\"{}\"/>\n\
                 <text x=\"{}\" y=\"{}\" fill=\"{}\">{m}</text>\n",
                colors[c],
                line.join(" "),
                w - pad + 5.0 - 120.0,
                pad + 18.0 * (c as f64 + 1.0),
                colors[c]
            );
        }
        s += "</svg>\n";
        std::fs::write(path, s).map_err(|e| Error::io(&name, e))
    }
}

/// The `q` minimizing `‖x − K y‖` over a log grid on `[1e-4, 1e2]`, refined
/// by golden-section search on `log q`.
pub fn tune_q_oracle(g: &Graph, x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(g.n(), x.len())?;
    check_len(g.n(), y.len())?;
    let err = |lq: f64| -> Result<f64> {
        let q = 10f64.powf(lq);
        let rhs: Vec<f64> = y.iter().map(|v| q * v).collect();
        let xh = solve_shifted(g, &DiagQ::Uniform(q), &rhs)?;
        Ok(distance(&xh, x))
    };
    let grid: Vec<f64> = (0..=24).map(|i| -4.0 + 0.25 * i as f64).collect();
    let scores = grid.iter().map(|&l| err(l)).collect::<Result<Vec<_>>>()?;
    let best = (0..grid.len())
        .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
        .expect("nonempty");
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (err(c)?, err(d)?);
    for _ in 0..20 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = err(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = err(d)?;
        }
    }
    let lq = if fc <= fd { c } else { d };
    Ok(10f64.powf(if scores[best] < fc.min(fd) { grid[best] } else { lq }))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// State shared by the error and timing passes for one realization.
struct Realization {
    x: Signal,
    y: Signal,
    xhat: Signal,
    q: f64,
}

/// Runs the error-versus-cost sweep.
///
/// Per realization, `q` is tuned against the clean signal, then each method
/// runs at every sweep value. Forest methods read the `N`-forest estimate
/// off a prefix of one forest sequence, which equals a fresh `N`-forest
/// run with the same seed. Timing runs repeat each cell on the first
/// realization inside a pool of `timing_threads` workers.
pub fn run_bench(g: &Graph, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.sweep.is_empty() || cfg.sweep.contains(&0) {
        return Err(Error::Parameter("sweep must hold positive integers".into()));
    }
    if cfg.realizations == 0 || cfg.methods.is_empty() {
        return Err(Error::Parameter("need at least one realization and one method".into()));
    }
    if let Some(q) = cfg.q {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::Parameter(format!("q must be positive (got {q})")));
        }
    }
    let n = g.n();
    let (_, basis) = lowest_eigenpairs(g, cfg.k, cfg.seed ^ 0x9e37_79b9_7f4a_7c15)?;

    let mut reals = Vec::with_capacity(cfg.realizations);
    let mut exact_time = 0.0;
    for r in 0..cfg.realizations {
        let (x, y, _) = bandlimited_from_basis(&basis, n, cfg.snr, candidate_seed(cfg.seed, r));
        let q = match cfg.q {
            Some(q) => q,
            None => tune_q_oracle(g, &x, &y)?,
        };
        let rhs: Vec<f64> = y.iter().map(|v| q * v).collect();
        let t = Instant::now();
        let xhat = solve_shifted(g, &DiagQ::Uniform(q), &rhs)?;
        exact_time += t.elapsed().as_secs_f64();
        reals.push(Realization { x, y, xhat, q });
    }
    let exact_time_s = exact_time / cfg.realizations as f64;
    let exact_recon_err =
        reals.iter().map(|r| distance(&r.x, &r.xhat)).sum::<f64>() / cfg.realizations as f64;

    // Error pass: sums over realizations, indexed [method][param].
    let m = cfg.methods.len();
    let p = cfg.sweep.len();
    let mut approx = vec![vec![0.0; p]; m];
    let mut recon = vec![vec![0.0; p]; m];
    let mut failures: BTreeMap<(usize, usize), String> = BTreeMap::new();
    let max_forests = *cfg.sweep.iter().max().unwrap();
    for (r, real) in reals.iter().enumerate() {
        let q = DiagQ::Uniform(real.q);
        let run_seed = candidate_seed(cfg.seed ^ 0x5851_f42d_4c95_7f2d, r);
        let mut forest_values: BTreeMap<usize, BTreeMap<Estimator, Signal>> = BTreeMap::new();
        if cfg.methods.iter().any(|m| m.estimator().is_some()) {
            match forest_prefixes(g, &q, &real.y, max_forests, &cfg.sweep, run_seed) {
                Ok(v) => forest_values = v,
                Err(e) => {
                    for (mi, method) in cfg.methods.iter().enumerate() {
                        if method.estimator().is_some() {
                            for pi in 0..p {
                                failures.entry((mi, pi)).or_insert_with(|| e.to_string());
                            }
                        }
                    }
                }
            }
        }
        let lmax = if cfg.methods.contains(&BenchMethod::Cheb) {
            Some(lambda_max(g, 1e-6))
        } else {
            None
        };
        for (mi, &method) in cfg.methods.iter().enumerate() {
            for (pi, &param) in cfg.sweep.iter().enumerate() {
                if failures.contains_key(&(mi, pi)) {
                    continue;
                }
                let out = match method.estimator() {
                    Some(w) => Ok(forest_values[&param][&w].clone()),
                    None => run_deterministic(g, &q, real.q, &real.y, method, param, lmax),
                };
                match out {
                    Ok(v) => {
                        approx[mi][pi] += distance(&v, &real.xhat);
                        recon[mi][pi] += distance(&v, &real.x);
                    }
                    Err(e) => {
                        failures.insert((mi, pi), e.to_string());
                    }
                }
            }
        }
    }

    // Timing pass.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.timing_threads.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let first = &reals[0];
    let q0 = DiagQ::Uniform(first.q);
    let mut records = Vec::with_capacity(m * p);
    for (mi, &method) in cfg.methods.iter().enumerate() {
        for (pi, &param) in cfg.sweep.iter().enumerate() {
            let failed = failures.get(&(mi, pi)).cloned();
            let (mut time_s, mut pre_s) = (0.0, 0.0);
            if failed.is_none() && cfg.timing_runs > 0 {
                for run in 0..cfg.timing_runs {
                    let seed = candidate_seed(cfg.seed ^ 0x2545_f491_4f6c_dd1d, run);
                    let (total, pre) = pool.install(|| time_once(g, &q0, first, method, param, seed));
                    time_s += total;
                    pre_s += pre;
                }
                time_s /= cfg.timing_runs as f64;
                pre_s /= cfg.timing_runs as f64;
            }
            let nr = cfg.realizations as f64;
            let nan = failed.is_some();
            records.push(BenchRecord {
                graph: cfg.label.clone(),
                method,
                param,
                approx_err: if nan { f64::NAN } else { approx[mi][pi] / nr },
                recon_err: if nan { f64::NAN } else { recon[mi][pi] / nr },
                time_s: if nan { f64::NAN } else { time_s },
                pre_s: if nan { f64::NAN } else { pre_s },
                n_runs: if nan { 0 } else { cfg.timing_runs },
                failure: failed,
            });
        }
    }
    Ok(BenchReport {
        records,
        q: reals.iter().map(|r| r.q).collect(),
        exact_recon_err,
        exact_time_s,
        timing_threads: cfg.timing_threads.max(1),
    })
}

/// Tilde and bar estimates after each sweep count of one forest sequence.
fn forest_prefixes(
    g: &Graph,
    q: &DiagQ,
    y: &[f64],
    max_forests: usize,
    sweep: &[usize],
    seed: u64,
) -> Result<BTreeMap<usize, BTreeMap<Estimator, Signal>>> {
    let mut ens = ForestEnsemble::new(g, q, vec![y.to_vec()])?;
    let mut sampler = ForestSampler::new(g, q)?;
    let mut forest = Forest::default();
    let mut out = BTreeMap::new();
    for k in 0..max_forests {
        sampler.sample_into(&mut forest_rng(seed, k), &mut forest)?;
        ens.observe(&forest);
        if sweep.contains(&(k + 1)) {
            let mut both = BTreeMap::new();
            for w in [Estimator::Tilde, Estimator::Bar] {
                both.insert(w, ens.estimate(0, w).values);
            }
            out.insert(k + 1, both);
        }
    }
    Ok(out)
}

fn run_deterministic(
    g: &Graph,
    q: &DiagQ,
    qs: f64,
    y: &[f64],
    method: BenchMethod,
    param: usize,
    lmax: Option<f64>,
) -> Result<Signal> {
    match method {
        BenchMethod::Cg => Ok(cg_solve(g, q, y, CgStop::Iterations(param), Preconditioner::None)?.x),
        BenchMethod::Pcg => Ok(cg_solve(g, q, y, CgStop::Iterations(param), Preconditioner::Jacobi)?.x),
        BenchMethod::Cheb => {
            let b = lmax.unwrap_or_else(|| lambda_max(g, 1e-6));
            chebyshev_apply(g, &chebyshev_on_interval(qs, b, param), y)
        }
        BenchMethod::ChebGershgorin => {
            chebyshev_apply(g, &chebyshev_on_interval(qs, 2.0 * g.max_degree(), param), y)
        }
        BenchMethod::Bar | BenchMethod::Tilde => unreachable!("forest methods use prefixes"),
    }
}

/// One timed run: `(total seconds, preprocessing seconds)`.
fn time_once(
    g: &Graph,
    q: &DiagQ,
    real: &Realization,
    method: BenchMethod,
    param: usize,
    seed: u64,
) -> (f64, f64) {
    let start = Instant::now();
    let mut pre = 0.0;
    let _ = match method {
        BenchMethod::Bar | BenchMethod::Tilde => {
            let w = method.estimator().unwrap();
            estimate(g, q, &real.y, param, seed, w).map(|e| e.values)
        }
        BenchMethod::Cheb | BenchMethod::ChebGershgorin => {
            let bound = if method == BenchMethod::Cheb {
                IntervalBound::LambdaMax
            } else {
                IntervalBound::Gershgorin
            };
            let spec = crate::baselines::chebyshev_setup(g, real.q, param, bound);
            pre = start.elapsed().as_secs_f64();
            spec.and_then(|s| chebyshev_apply(g, &s, &real.y))
        }
        _ => run_deterministic(g, q, real.q, &real.y, method, param, None),
    };
    (start.elapsed().as_secs_f64(), pre)
}

/// Result of [`run_denoise_gaussian`].
#[derive(Debug, Clone)]
pub struct DenoiseReport {
    pub noisy: Signal,
    pub noisy_psnr: f64,
    pub grid: Vec<f64>,
    /// One row per method: exact, tilde, bar.
    pub rows: Vec<DenoiseRow>,
}

#[derive(Debug, Clone)]
pub struct DenoiseRow {
    pub method: Method,
    /// SURE score per grid candidate.
    pub sure: Vec<f64>,
    pub mu: f64,
    pub psnr: f64,
    pub output: Signal,
}

impl DenoiseReport {
    /// `method,mu,sure,psnr`, with the noisy input as method `noisy`.
    pub fn write_table(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut lines = vec!["method,mu,sure,psnr".to_string()];
        lines.push(format!("noisy,,,{}", self.noisy_psnr));
        for r in &self.rows {
            let best = r.sure.iter().copied().fold(f64::INFINITY, f64::min);
            lines.push(format!("{},{},{},{}", r.method, r.mu, best, r.psnr));
        }
        write_lines(path.as_ref(), &lines)
    }

    /// `mu,<method>...` SURE curves.
    pub fn write_sure_curves(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut header = vec!["mu".to_string()];
        header.extend(self.rows.iter().map(|r| r.method.to_string()));
        let mut lines = vec![header.join(",")];
        for (i, mu) in self.grid.iter().enumerate() {
            let mut row = vec![mu.to_string()];
            row.extend(self.rows.iter().map(|r| r.sure[i].to_string()));
            lines.push(row.join(","));
        }
        write_lines(path.as_ref(), &lines)
    }
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut s = lines.join("\n");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Adds `N(0, σ²)` noise to a clean signal.
pub fn add_gaussian_noise(x: &[f64], sigma2: f64, seed: u64) -> Result<Signal> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Parameter(format!("sigma2 must be ≥ 0 (got {sigma2})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = sigma2.sqrt();
    Ok(x.iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Denoises `x + N(0, σ²)` with exact, tilde and bar smoothing, each tuned
/// separately by SURE over `grid` with `q = μ`. PSNR uses peak 1.
pub fn run_denoise_gaussian(
    g: &Graph,
    x: &[f64],
    sigma2: f64,
    grid: &[f64],
    forests: usize,
    seed: u64,
) -> Result<DenoiseReport> {
    check_len(g.n(), x.len())?;
    let noisy = add_gaussian_noise(x, sigma2, seed)?;
    let noisy_psnr = psnr(&noisy, x, 1.0)?;
    let mut rows = Vec::with_capacity(3);
    for method in [Method::Exact, Method::Tilde, Method::Bar] {
        let tm = match method.estimator() {
            None => TuningMethod::SureExact,
            Some(w) => TuningMethod::SureRsf(w),
        };
        let params = TuningParams {
            sigma2: Some(sigma2),
            forests,
            seed: candidate_seed(seed, 1),
            ..Default::default()
        };
        let res = grid_search(g, &[noisy.clone()], grid, tm, &params)?;
        let output = res.estimates[res.best_index][0].values.clone();
        rows.push(DenoiseRow {
            method,
            psnr: psnr(&output, x, 1.0)?,
            sure: res.scores,
            mu: res.best,
            output,
        });
    }
    Ok(DenoiseReport {
        noisy,
        noisy_psnr,
        grid: grid.to_vec(),
        rows,
    })
}

/// Result of [`run_denoise_poisson`].
#[derive(Debug, Clone)]
pub struct PoissonReport {
    pub counts: Signal,
    pub noisy_psnr: f64,
    /// `(method, intensity estimate e^t, trace, psnr)` for exact and bar.
    pub runs: Vec<(Method, Signal, IterateTrace, f64)>,
}

/// Draws `y ~ Poisson(x)` and fits it by Newton's method with exact and bar
/// updates. PSNR uses the peak of `x`.
pub fn run_denoise_poisson(
    g: &Graph,
    x: &[f64],
    mu: f64,
    forests: usize,
    seed: u64,
) -> Result<PoissonReport> {
    check_len(g.n(), x.len())?;
    if let Some(i) = x.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Parameter(format!("intensity x[{i}] must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts: Signal = x
        .iter()
        .map(|&l| Poisson::new(l).map(|d| d.sample(&mut rng)))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parameter(format!("Poisson intensity: {e}")))?;
    let peak = x.iter().copied().fold(0.0, f64::max);
    let noisy_psnr = psnr(&counts, x, peak)?;
    let mut runs = Vec::with_capacity(2);
    for method in [Method::Exact, Method::Bar] {
        let p = NewtonParams {
            mu,
            method,
            forests,
            seed: candidate_seed(seed, 1),
            ..Default::default()
        };
        let (t, trace) = newton_poisson(g, &counts, &p)?;
        let lambda: Signal = t.iter().map(|t| t.exp()).collect();
        let ps = psnr(&lambda, x, peak)?;
        runs.push((method, lambda, trace, ps));
    }
    Ok(PoissonReport {
        counts,
        noisy_psnr,
        runs,
    })
}

#[derive(Debug, Clone)]
pub struct SslConfig {
    /// Labels drawn per class; classes with fewer nodes give all of theirs.
    pub per_class: usize,
    pub repetitions: usize,
    pub forests: usize,
    /// `μ` candidates for LOOCV.
    pub grid: Vec<f64>,
    pub eta: f64,
    pub seed: u64,
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig {
            per_class: 5,
            repetitions: 10,
            forests: 100,
            grid: vec![0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0],
            eta: 0.0,
            seed: 0,
        }
    }
}

/// Mean accuracy on unlabeled nodes over label draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SslRow {
    pub method: String,
    pub mean: f64,
    pub std_err: f64,
    /// Mean selected `μ`, when tuned.
    pub mean_mu: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SslReport {
    pub per_class: usize,
    pub repetitions: usize,
    pub rows: Vec<SslRow>,
}

impl SslReport {
    pub fn row(&self, method: &str) -> Option<&SslRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// `method,m,mean_accuracy,std_err,reps,mean_mu`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut lines = vec!["method,m,mean_accuracy,std_err,reps,mean_mu".to_string()];
        for r in &self.rows {
            lines.push(format!(
                "{},{},{},{},{},{}",
                r.method,
                self.per_class,
                r.mean,
                r.std_err,
                self.repetitions,
                r.mean_mu.map_or(String::new(), |m| m.to_string())
            ));
        }
        write_lines(path.as_ref(), &lines)
    }
}

/// Draws `per_class` labeled nodes from each class.
pub fn draw_labels(truth: &[usize], classes: usize, per_class: usize, seed: u64) -> BTreeMap<usize, usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &c) in truth.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut labels = BTreeMap::new();
    for (c, nodes) in by_class.iter().enumerate() {
        for &i in nodes.choose_multiple(&mut rng, per_class.min(nodes.len())) {
            labels.insert(i, c);
        }
    }
    labels
}

/// Accuracy table for label propagation (exact, forests), generalized SSL
/// (exact, bar; `μ` tuned by LOOCV on the labeled set for each method) and
/// the constant and uniform-random classifiers.
pub fn run_ssl(g: &Graph, truth: &[usize], classes: usize, cfg: &SslConfig) -> Result<SslReport> {
    check_len(g.n(), truth.len())?;
    if cfg.repetitions == 0 || cfg.per_class == 0 {
        return Err(Error::Parameter("need repetitions ≥ 1 and per_class ≥ 1".into()));
    }
    if let Some(&c) = truth.iter().find(|&&c| c >= classes) {
        return Err(Error::Parameter(format!("class {c} ≥ class count {classes}")));
    }
    let names = ["lp-exact", "lp-rsf", "gssl-exact", "gssl-bar", "constant", "random"];
    let mut acc: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut mus: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for rep in 0..cfg.repetitions {
        let s = candidate_seed(cfg.seed, rep);
        let problem = LabeledProblem::new(g.n(), draw_labels(truth, classes, cfg.per_class, s), Some(classes))?;
        let score = |r: &crate::tasks::ClassificationResult| crate::tasks::accuracy(r, truth, &problem);

        acc[0].push(score(&label_propagate(g, &problem, LpMethod::Exact, 0, 0)?)?);
        acc[1].push(score(&label_propagate(g, &problem, LpMethod::Rsf, cfg.forests, s)?)?);

        let (shape, inputs) = ssl_inputs(g, &problem, cfg.eta)?;
        for (slot, method, tm) in [
            (2, Method::Exact, TuningMethod::LoocvExact),
            (3, Method::Bar, TuningMethod::LoocvRsf(Estimator::Bar)),
        ] {
            let params = TuningParams {
                labels: Some(problem.labeled()),
                q_shape: Some(shape.clone()),
                forests: cfg.forests,
                seed: s,
                ..Default::default()
            };
            let mu = grid_search(g, &inputs, &cfg.grid, tm, &params)?.best;
            let r = generalized_ssl(g, &problem, mu, cfg.eta, method, cfg.forests, candidate_seed(s, 1))?;
            acc[slot].push(score(&r)?);
            mus[slot].push(mu);
        }

        acc[4].push(constant_baseline(truth, &problem)?);
        let mut rng = ChaCha8Rng::seed_from_u64(candidate_seed(s, 2));
        let u = problem.unlabeled();
        let hits = u.iter().filter(|&&i| rng.random_range(0..classes) == truth[i]).count();
        acc[5].push(if u.is_empty() { 1.0 } else { hits as f64 / u.len() as f64 });
    }
    let rows = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let v = &acc[k];
            let r = v.len() as f64;
            let mean = v.iter().sum::<f64>() / r;
            let var = if v.len() > 1 {
                v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (r - 1.0)
            } else {
                0.0
            };
            SslRow {
                method: name.to_string(),
                mean,
                std_err: (var / r).sqrt(),
                mean_mu: (!mus[k].is_empty()).then(|| mus[k].iter().sum::<f64>() / mus[k].len() as f64),
            }
        })
        .collect();
    Ok(SslReport {
        per_class: cfg.per_class,
        repetitions: cfg.repetitions,
        rows,
    })
}

/// A smooth test image: a sum of Gaussian bumps on a `rows × cols` grid,
/// scaled to `[0.1, 0.9]`.
pub fn smooth_image(rows: usize, cols: usize, bumps: usize, seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(f64, f64, f64, f64)> = (0..bumps)
        .map(|_| {
            (
                rng.random::<f64>() * rows as f64,
                rng.random::<f64>() * cols as f64,
                (rows.min(cols) as f64) * (0.1 + 0.2 * rng.random::<f64>()),
                Normal::new(0.0, 1.0).expect("valid").sample(&mut rng),
            )
        })
        .collect();
    let mut v: Vec<f64> = (0..rows * cols)
        .map(|k| {
            let (r, c) = ((k / cols) as f64, (k % cols) as f64);
            centers
                .iter()
                .map(|&(cr, cc, s, a)| a * (-((r - cr).powi(2) + (c - cc).powi(2)) / (2.0 * s * s)).exp())
                .sum()
        })
        .collect();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    v.iter_mut().for_each(|x| *x = 0.1 + 0.8 * (*x - lo) / span);
    v
}
