//! Command-line front end.
//!
//! Every output file starts with `# key=value` lines holding the resolved
//! configuration. Passing that file back through `--config` reruns the same
//! computation; a config key that disagrees with an explicit flag is an
//! error.

use crate::bench::{
    add_gaussian_noise, draw_labels, parse_methods, parse_sweep, run_bench, run_denoise_gaussian,
    run_denoise_poisson, run_ssl, smooth_image, BenchConfig, SslConfig,
};
use crate::error::{Error, Result};
use crate::forest::{forest_rng, DiagQ, ForestSampler};
use crate::graph::{
    generate, load_edge_list, load_labels, load_pgm, load_signal_csv, lowest_eigenpairs,
    save_index_map, save_signal_csv, Graph, GraphKind, Signal,
};
use crate::smoother::{smooth, Method};
use crate::tasks::{
    generalized_ssl, interpolate, irls_l1, label_propagate, newton_poisson, ssl_inputs,
    IrlsParams, LabeledProblem, LpMethod, NewtonParams,
};
use crate::tuning::{grid_search, parse_grid, TuningMethod, TuningParams};
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "rsf",
    version,
    about = "Random spanning forest estimators for graph smoothing, interpolation and tuning"
)]
pub struct Cli {
    /// Graph: grid:RxC, torus:RxC, er:N:DEG, ba:N:M, kreg:N:K, knn:N:K:DIM,
    /// an edge-list file (`u v [w]` lines) or an 8-bit .pgm image
    #[arg(long, global = true, default_value = "grid:32x32")]
    pub graph: String,
    /// Keep only the largest connected component; node ids in input files
    /// are translated and the id map is written next to the output
    #[arg(long, global = true)]
    pub lcc: bool,
    /// Master seed for graph generation, synthetic data and forests
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads [default: 1 for bench, all cores otherwise]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file [default: <command>.csv]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// File of key=value lines (long flag names); `#` prefixes are allowed,
    /// so an earlier output file works as a config
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tikhonov smoothing (L+Q)^-1 Q y, exactly or by forest estimators
    Smooth(SmoothArgs),
    /// Extend known values to all nodes
    Interpolate(InterpolateArgs),
    /// Generalized semi-supervised classification
    Ssl(SslArgs),
    /// Harmonic label propagation
    Lp(LpArgs),
    /// Newton's method for the Poisson-regularized loss
    Newton(NewtonArgs),
    /// IRLS for l1 graph regularization
    Irls(IrlsArgs),
    /// Draw one rooted spanning forest
    SampleForest(SampleForestArgs),
    /// Grid search for q by SURE or LOOCV
    Tune(TuneArgs),
    /// Error-versus-cost sweeps and experiment drivers
    Bench(BenchArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Smooth(_) => "smooth",
            Command::Interpolate(_) => "interpolate",
            Command::Ssl(_) => "ssl",
            Command::Lp(_) => "lp",
            Command::Newton(_) => "newton",
            Command::Irls(_) => "irls",
            Command::SampleForest(_) => "sample-forest",
            Command::Tune(_) => "tune",
            Command::Bench(_) => "bench",
        }
    }
}

const COMMANDS: [&str; 9] = [
    "smooth",
    "interpolate",
    "ssl",
    "lp",
    "newton",
    "irls",
    "sample-forest",
    "tune",
    "bench",
];

#[derive(Debug, Args)]
pub struct SmoothArgs {
    /// Input signal CSV (node,value); synthetic noisy signal when absent
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Uniform q
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// exact, tilde or bar
    #[arg(long, default_value = "bar")]
    pub estimator: String,
    /// Number of forests
    #[arg(long, default_value_t = 20)]
    pub forests: usize,
    /// Noise variance of the synthetic input
    #[arg(long, default_value_t = 0.04)]
    pub noise: f64,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    /// Known values as node,value CSV
    #[arg(long)]
    pub known: PathBuf,
    /// Regularization on unknown nodes (0 gives harmonic interpolation)
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    /// exact, tilde or bar
    #[arg(long, default_value = "exact")]
    pub method: String,
    #[arg(long, default_value_t = 100)]
    pub forests: usize,
}

/// Label sources shared by `ssl` and `lp`.
#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Known labels (`u c` lines)
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Ground truth for every node (`u c` lines); scores accuracy and, with
    /// --per-class, supplies the labeled set
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Draw this many labeled nodes per class from --truth
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Number of classes [default: largest label + 1]
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SslArgs {
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Degree normalization exponent
    #[arg(long, default_value_t = 0.0)]
    pub eta: f64,
    /// exact, tilde or bar
    #[arg(long, default_value = "exact")]
    pub method: String,
    #[arg(long, default_value_t = 100)]
    pub forests: usize,
    /// Tune mu by LOOCV on the labeled nodes over this grid (a:h:b or a,b,c)
    #[arg(long)]
    pub tune_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct LpArgs {
    #[command(flatten)]
    pub labels: LabelArgs,
    /// exact or rsf
    #[arg(long, default_value = "exact")]
    pub method: String,
    #[arg(long, default_value_t = 100)]
    pub forests: usize,
}

#[derive(Debug, Args)]
pub struct NewtonArgs {
    /// Counts as node,value CSV
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// exact or bar
    #[arg(long, default_value = "exact")]
    pub method: String,
    #[arg(long, default_value_t = 20)]
    pub forests: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Write the per-iteration trace here
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IrlsArgs {
    /// Input signal as node,value CSV
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// exact or bar
    #[arg(long, default_value = "exact")]
    pub method: String,
    #[arg(long, default_value_t = 20)]
    pub forests: usize,
    /// Floor on |Bz| [default: 1e-8 times the median |By|]
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// printed (right-hand side mu*y) or majorized (2mu*y)
    #[arg(long, default_value = "printed")]
    pub normalization: String,
    /// Write the per-iteration trace here
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleForestArgs {
    /// Uniform q
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Per-node q as node,value CSV (inf makes a node a sure root)
    #[arg(long)]
    pub q_file: Option<PathBuf>,
    /// Forest index within the seeded stream
    #[arg(long, default_value_t = 0)]
    pub index: usize,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// sure, sure-tilde, sure-bar, loocv, loocv-tilde or loocv-bar
    #[arg(long, default_value = "sure")]
    pub method: String,
    /// Known noise variance (SURE); also the synthetic noise level
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Candidates as a:h:b or a,b,c
    #[arg(long, default_value = "0.5:0.5:5.0")]
    pub grid: String,
    /// Input signal CSV (node,value); synthetic noisy signal when absent
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub forests: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// sweep, denoise-gaussian, denoise-poisson or ssl
    #[arg(long, default_value = "sweep")]
    pub experiment: String,
    /// Comma list of bar, tilde, cg, pcg, cheb, cheb-gershgorin, or all
    #[arg(long, default_value = "all")]
    pub methods: String,
    /// Iteration parameters: log:a:b:count or a comma list
    #[arg(long, default_value = "log:1:100:17")]
    pub sweep: String,
    /// Bandwidth of the planted signal
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 2.0)]
    pub snr: f64,
    /// Signal realizations averaged in the error columns
    #[arg(long, default_value_t = 20)]
    pub realizations: usize,
    /// Timed repetitions per cell
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    /// Fixed q [default: tuned per realization]
    #[arg(long)]
    pub q: Option<f64>,
    /// Also write a log-log plot of error against time
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Noise variance for denoise-gaussian
    #[arg(long, default_value_t = 0.04)]
    pub sigma2: f64,
    /// mu candidates for denoise-gaussian and ssl [default: 0.5:0.5:5.0 and 0.01,0.03,0.1,0.3,1,3,10]
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub forests: usize,
    /// mu for denoise-poisson
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Peak intensity of the synthetic Poisson image
    #[arg(long, default_value_t = 20.0)]
    pub peak: f64,
    /// Ground-truth classes for ssl (`u c` lines)
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Labeled nodes per class for ssl
    #[arg(long, default_value_t = 5)]
    pub per_class: usize,
    /// Label draws for ssl
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.0)]
    pub eta: f64,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let matches = match Cli::command().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let echo = echo_lines(&matches);
    match execute(&cli, &echo) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("rsf: {} error: {e}", e.class());
    e.exit_code()
}

/// Splices `--config` entries into the argument list as flags.
fn expand_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let entries = read_config(Path::new(&path))?;
    let mut sub = strs.iter().skip(1).find(|a| COMMANDS.contains(&a.as_str())).cloned();
    if let Some(c) = entries.get("command") {
        match &sub {
            Some(s) if s != c => {
                return Err(Error::Parameter(format!(
                    "config command '{c}' conflicts with command '{s}'"
                )))
            }
            Some(_) => {}
            None => {
                args.push(c.into());
                sub = Some(c.clone());
            }
        }
    }
    let root = Cli::command();
    let sub_cmd = sub
        .as_deref()
        .and_then(|s| root.get_subcommands().find(|c| c.get_name() == s));
    let find_arg = |key: &str| {
        root.get_arguments()
            .chain(sub_cmd.into_iter().flat_map(|c| c.get_arguments()))
            .find(|a| a.get_long() == Some(key))
            .cloned()
    };
    for (key, value) in &entries {
        if key == "command" {
            continue;
        }
        let arg = find_arg(key)
            .ok_or_else(|| Error::Parameter(format!("unknown config key '{key}'")))?;
        let flag = format!("--{key}");
        let takes_value = arg.get_action().takes_values();
        let given = strs.iter().enumerate().find_map(|(i, a)| {
            if a == &flag {
                Some(if takes_value { strs.get(i + 1).cloned() } else { Some("true".into()) })
            } else {
                a.strip_prefix(&format!("{flag}=")).map(|v| Some(v.to_string()))
            }
        });
        match given {
            Some(v) => {
                if v.as_deref() != Some(value.as_str()) && !same_number(v.as_deref(), value) {
                    return Err(Error::Parameter(format!(
                        "config sets {key}={value} but the command line gives {}",
                        v.unwrap_or_default()
                    )));
                }
            }
            None if takes_value => {
                args.push(flag.into());
                args.push(value.into());
            }
            None => match value.as_str() {
                "true" => args.push(flag.into()),
                "false" => {}
                _ => return Err(Error::Parameter(format!("config flag {key} must be true or false"))),
            },
        }
    }
    Ok(args)
}

fn same_number(a: Option<&str>, b: &str) -> bool {
    match (a.and_then(|a| a.parse::<f64>().ok()), b.parse::<f64>().ok()) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

/// Reads `key=value` lines. A leading `#` is stripped; lines without `=`
/// are skipped; the first line that is neither a comment nor `key=value`
/// ends the header.
fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        let (comment, body) = match t.strip_prefix('#') {
            Some(rest) => (true, rest.trim()),
            None => (false, t),
        };
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            if comment {
                continue;
            }
            break;
        };
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            if comment {
                continue;
            }
            return Err(Error::parse(&name, k + 1, "expected key=value"));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::parse(&name, k + 1, format!("key '{key}' repeated")));
        }
    }
    Ok(out)
}

/// Resolved configuration as `key=value` lines, defaults included.
fn echo_lines(m: &ArgMatches) -> Vec<String> {
    const SKIP: [&str; 5] = ["out", "config", "threads", "help", "version"];
    let mut lines = vec![format!("rsf {}", env!("CARGO_PKG_VERSION"))];
    let root = Cli::command();
    let Some((sub, sm)) = m.subcommand() else {
        return lines;
    };
    lines.push(format!("command={sub}"));
    let sub_cmd = root.find_subcommand(sub).expect("known subcommand");
    for arg in root.get_arguments().chain(sub_cmd.get_arguments()) {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else { continue };
        if SKIP.contains(&id) || lines.iter().any(|l| l.starts_with(&format!("{long}="))) {
            continue;
        }
        let source = if sm.try_get_raw(id).ok().flatten().is_some() { sm } else { m };
        if let Ok(Some(raw)) = source.try_get_raw(id) {
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            lines.push(format!("{long}={}", vals.join(",")));
        }
    }
    lines
}

/// Graph plus what the source knows about its layout.
struct Loaded {
    graph: Graph,
    /// `(signal, rows, cols)` for images.
    image: Option<(Signal, usize, usize)>,
    grid: Option<(usize, usize)>,
    /// New → original ids after component extraction.
    kept: Option<Vec<usize>>,
    /// Original → new ids.
    index: Option<Vec<Option<usize>>>,
}

impl Loaded {
    /// The graph node for an id used in input files; `None` when dropped.
    fn node(&self, id: usize) -> Option<usize> {
        match &self.index {
            Some(ix) => ix.get(id).copied().flatten(),
            None => Some(id),
        }
    }

    fn restrict(mut self) -> Self {
        if self.graph.is_connected() {
            return self;
        }
        let original = self.graph.n();
        let (g, kept) = self.graph.largest_component();
        let mut index = vec![None; original];
        for (new, &old) in kept.iter().enumerate() {
            index[old] = Some(new);
        }
        self.image = self
            .image
            .map(|(s, r, c)| (kept.iter().map(|&o| s[o]).collect(), r, c));
        self.grid = None;
        self.graph = g;
        self.kept = Some(kept);
        self.index = Some(index);
        self
    }
}

fn load_graph(src: &str, seed: u64, lcc: bool) -> Result<Loaded> {
    let loaded = load_graph_full(src, seed)?;
    Ok(if lcc { loaded.restrict() } else { loaded })
}

fn load_graph_full(src: &str, seed: u64) -> Result<Loaded> {
    if src.to_ascii_lowercase().ends_with(".pgm") {
        let (graph, signal, rows, cols) = load_pgm(src)?;
        return Ok(Loaded {
            graph,
            image: Some((signal, rows, cols)),
            grid: Some((rows, cols)),
            kept: None,
            index: None,
        });
    }
    match src.parse::<GraphKind>() {
        Ok(kind) => {
            let grid = match kind {
                GraphKind::Grid2d { rows, cols, .. } => Some((rows, cols)),
                _ => None,
            };
            let (graph, _) = generate(&kind, seed)?;
            Ok(Loaded {
                graph,
                image: None,
                grid,
                kept: None,
                index: None,
            })
        }
        Err(parse_err) => {
            // Anything without a generator prefix is a path.
            if Path::new(src).exists() || !src.contains(':') {
                Ok(Loaded {
                    graph: load_edge_list(src)?,
                    image: None,
                    grid: None,
                    kept: None,
                    index: None,
                })
            } else {
                Err(parse_err)
            }
        }
    }
}

/// Reads node,value pairs in graph ids, dropping nodes outside the graph
/// after component extraction.
fn read_pairs(loaded: &Loaded, path: &Path) -> Result<Vec<(usize, f64)>> {
    let name = path.display().to_string();
    let n = loaded.graph.n();
    let mut out = Vec::new();
    for (id, v) in load_signal_csv(path)? {
        match loaded.node(id) {
            Some(node) if node < n => out.push((node, v)),
            Some(_) => {
                return Err(Error::parse(&name, 0, format!("node {id} out of range for {n} nodes")))
            }
            None => {}
        }
    }
    Ok(out)
}

/// Reads a node,value CSV that must cover every node exactly once.
fn read_signal(loaded: &Loaded, path: &Path) -> Result<Signal> {
    let name = path.display().to_string();
    let n = loaded.graph.n();
    let mut out = vec![f64::NAN; n];
    for (node, v) in read_pairs(loaded, path)? {
        if !out[node].is_nan() {
            return Err(Error::parse(&name, 0, format!("node {node} listed twice")));
        }
        out[node] = v;
    }
    if let Some(i) = out.iter().position(|v| v.is_nan()) {
        return Err(Error::parse(&name, 0, format!("no value for node {i}")));
    }
    Ok(out)
}

/// A smooth clean signal for graphs without data: a bump image on grids,
/// a random combination of the five lowest eigenvectors elsewhere, both
/// scaled to `[0.1, 0.9]`.
fn synthetic_clean(loaded: &Loaded, seed: u64) -> Result<Signal> {
    if let Some((rows, cols)) = loaded.grid {
        return Ok(smooth_image(rows, cols, 4, seed));
    }
    let g = &loaded.graph;
    let k = g.n().min(5);
    let (_, u) = lowest_eigenpairs(g, k, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut x: Vec<f64> = (0..g.n())
        .map(|i| (0..k).map(|j| u[(i, j)] * alpha[j]).sum())
        .collect();
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    x.iter_mut().for_each(|v| *v = 0.1 + 0.8 * (*v - lo) / span);
    Ok(x)
}

/// The input signal: a file, the loaded image, or a noisy synthetic signal.
fn input_signal(loaded: &Loaded, path: Option<&Path>, noise: f64, seed: u64) -> Result<Signal> {
    if let Some(p) = path {
        return read_signal(loaded, p);
    }
    if let Some((s, _, _)) = &loaded.image {
        return Ok(s.clone());
    }
    let x = synthetic_clean(loaded, seed)?;
    add_gaussian_noise(&x, noise, seed.wrapping_add(1))
}

/// Loads `u c` lines translated to graph ids.
fn read_labels(loaded: &Loaded, path: &Path) -> Result<BTreeMap<usize, usize>> {
    let n = loaded.graph.n();
    let mut out = BTreeMap::new();
    for (u, c) in load_labels(path)? {
        match loaded.node(u) {
            Some(node) if node < n => {
                out.insert(node, c);
            }
            Some(_) => {
                return Err(Error::parse(path.display().to_string(), 0, format!("node {u} out of range")))
            }
            None => {}
        }
    }
    Ok(out)
}

fn labeled_problem(args: &LabelArgs, loaded: &Loaded, seed: u64) -> Result<(LabeledProblem, Option<Vec<usize>>)> {
    let n = loaded.graph.n();
    let truth = match &args.truth {
        Some(p) => {
            let map = read_labels(loaded, p)?;
            let mut t = vec![usize::MAX; n];
            for (&u, &c) in &map {
                t[u] = c;
            }
            if let Some(i) = t.iter().position(|&c| c == usize::MAX) {
                return Err(Error::parse(p.display().to_string(), 0, format!("no class for node {i}")));
            }
            Some(t)
        }
        None => None,
    };
    let labels = match (&args.labels, args.per_class, &truth) {
        (Some(p), None, _) => read_labels(loaded, p)?,
        (None, Some(m), Some(t)) => {
            let classes = args.classes.unwrap_or(t.iter().max().unwrap() + 1);
            draw_labels(t, classes, m, seed)
        }
        _ => {
            return Err(Error::Parameter(
                "give either --labels, or --truth with --per-class".into(),
            ))
        }
    };
    let classes = match (args.classes, &truth) {
        (Some(c), _) => Some(c),
        (None, Some(t)) => Some(t.iter().max().unwrap() + 1),
        _ => None,
    };
    Ok((LabeledProblem::new(n, labels, classes)?, truth))
}

/// Prepends `# line` comments to a written file.
fn prepend_header(path: &Path, lines: &[String]) -> Result<()> {
    let name = path.display().to_string();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
    let mut s: String = lines.iter().map(|l| format!("# {l}\n")).collect();
    s.push_str(&body);
    std::fs::write(path, s).map_err(|e| Error::io(&name, e))
}

fn append_lines(path: &Path, lines: &[String]) -> Result<()> {
    use std::io::Write;
    let name = path.display().to_string();
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(&name, e))?;
    for l in lines {
        writeln!(f, "# {l}").map_err(|e| Error::io(&name, e))?;
    }
    Ok(())
}

/// `dir/stem_suffix.ext` next to `path`.
fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map_or("out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

fn execute(cli: &Cli, echo: &[String]) -> Result<()> {
    let is_bench = matches!(cli.command, Command::Bench(_));
    let threads = cli.threads.unwrap_or(if is_bench { 1 } else { 0 });
    if cli.threads == Some(0) {
        return Err(Error::Parameter("--threads must be at least 1".into()));
    }
    // A second global pool cannot be installed; keep going with the first.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();

    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cli.command.name())));
    let loaded = load_graph(&cli.graph, cli.seed, cli.lcc)?;
    let g = &loaded.graph;
    let seed = cli.seed;
    let mut trailer: Vec<String> = Vec::new();

    match &cli.command {
        Command::Smooth(a) => {
            let method: Method = a.estimator.parse()?;
            let y = input_signal(&loaded, a.input.as_deref(), a.noise, seed)?;
            let est = smooth(g, &DiagQ::Uniform(a.q), &y, method, a.forests, seed)?;
            save_signal_csv(&out, &est.values)?;
        }
        Command::Interpolate(a) => {
            let method: Method = a.method.parse()?;
            let known = read_pairs(&loaded, &a.known)?;
            let (nodes, vals): (Vec<usize>, Vec<f64>) = known.into_iter().unzip();
            let x = interpolate(g, &nodes, &vals, a.mu, method, a.forests, seed)?;
            save_signal_csv(&out, &x)?;
        }
        Command::Ssl(a) => {
            let method: Method = a.method.parse()?;
            let (problem, truth) = labeled_problem(&a.labels, &loaded, seed)?;
            let mu = match &a.tune_grid {
                Some(grid) => {
                    let tm = match method.estimator() {
                        None => TuningMethod::LoocvExact,
                        Some(w) => TuningMethod::LoocvRsf(w),
                    };
                    let (shape, inputs) = ssl_inputs(g, &problem, a.eta)?;
                    let params = TuningParams {
                        labels: Some(problem.labeled()),
                        q_shape: Some(shape),
                        forests: a.forests,
                        seed,
                        ..Default::default()
                    };
                    let best = grid_search(g, &inputs, &parse_grid(grid)?, tm, &params)?.best;
                    trailer.push(format!("tuned_mu={best}"));
                    best
                }
                None => a.mu,
            };
            let mut r = generalized_ssl(g, &problem, mu, a.eta, method, a.forests, seed)?;
            if let Some(t) = &truth {
                r = r.with_truth(t, &problem)?;
                trailer.push(format!("accuracy={}", r.accuracy.unwrap()));
            }
            r.write_csv(&out)?;
        }
        Command::Lp(a) => {
            let method: LpMethod = a.method.parse()?;
            let (problem, truth) = labeled_problem(&a.labels, &loaded, seed)?;
            let mut r = label_propagate(g, &problem, method, a.forests, seed)?;
            if let Some(t) = &truth {
                r = r.with_truth(t, &problem)?;
                trailer.push(format!("accuracy={}", r.accuracy.unwrap()));
            }
            r.write_csv(&out)?;
        }
        Command::Newton(a) => {
            let y = read_signal(&loaded, &a.input)?;
            let p = NewtonParams {
                mu: a.mu,
                method: a.method.parse()?,
                forests: a.forests,
                seed,
                max_iters: a.max_iters,
                tol: a.tol,
                ..Default::default()
            };
            let (t, trace) = newton_poisson(g, &y, &p)?;
            let lambda: Signal = t.iter().map(|t| t.exp()).collect();
            save_signal_csv(&out, &lambda)?;
            trailer.push(format!("final_loss={}", trace.final_loss()));
            trailer.push(format!("iterations={}", trace.len()));
            trailer.push(format!("converged={}", trace.converged));
            if let Some(tp) = &a.trace {
                trace.write_csv(tp)?;
                prepend_header(tp, echo)?;
            }
        }
        Command::Irls(a) => {
            let y = read_signal(&loaded, &a.input)?;
            let p = IrlsParams {
                mu: a.mu,
                method: a.method.parse()?,
                forests: a.forests,
                seed,
                eps: a.eps,
                max_iters: a.max_iters,
                tol: a.tol,
                normalization: a.normalization.parse()?,
                z0: None,
            };
            let (z, trace) = irls_l1(g, &y, &p)?;
            save_signal_csv(&out, &z)?;
            trailer.push(format!("final_objective={}", trace.final_loss()));
            trailer.push(format!("iterations={}", trace.len()));
            if let Some(tp) = &a.trace {
                trace.write_csv(tp)?;
                prepend_header(tp, echo)?;
            }
        }
        Command::SampleForest(a) => {
            let q = match &a.q_file {
                Some(p) => DiagQ::PerNode(read_signal(&loaded, p)?),
                None => DiagQ::Uniform(a.q),
            };
            let f = ForestSampler::new(g, &q)?.sample(&mut forest_rng(seed, a.index))?;
            f.write_csv(&out)?;
            trailer.push(format!("roots={}", f.num_roots()));
            trailer.push(format!("walk_steps={}", f.walk_steps()));
        }
        Command::Tune(a) => {
            let method: TuningMethod = a.method.parse()?;
            let noise = a.sigma2.unwrap_or(0.04);
            let y = input_signal(&loaded, a.input.as_deref(), noise, seed)?;
            let params = TuningParams {
                sigma2: a.sigma2,
                forests: a.forests,
                seed,
                ..Default::default()
            };
            let res = grid_search(g, &[y], &parse_grid(&a.grid)?, method, &params)?;
            res.write_csv(&out)?;
            trailer.push(format!("best={}", res.best));
        }
        Command::Bench(a) => bench(a, cli, &loaded, &out, threads, &mut trailer)?,
    }
    if let Some(kept) = &loaded.kept {
        let map = sibling(&out, "index", "csv");
        save_index_map(&map, kept)?;
        trailer.push(format!("index_map={}", map.display()));
    }
    prepend_header(&out, echo)?;
    append_lines(&out, &trailer)
}

fn bench(a: &BenchArgs, cli: &Cli, loaded: &Loaded, out: &Path, threads: usize, trailer: &mut Vec<String>) -> Result<()> {
    let g = &loaded.graph;
    let seed = cli.seed;
    match a.experiment.as_str() {
        "sweep" => {
            let cfg = BenchConfig {
                label: cli.graph.clone(),
                k: a.k,
                snr: a.snr,
                methods: parse_methods(&a.methods)?,
                sweep: parse_sweep(&a.sweep)?,
                realizations: a.realizations,
                timing_runs: a.runs,
                seed,
                q: a.q,
                timing_threads: threads.max(1),
            };
            let rep = run_bench(g, &cfg)?;
            rep.write_csv(out)?;
            if let Some(svg) = &a.svg {
                rep.write_svg(svg)?;
            }
        }
        "denoise-gaussian" => {
            let clean = match &loaded.image {
                Some((s, _, _)) => s.clone(),
                None => synthetic_clean(loaded, seed)?,
            };
            let grid = parse_grid(a.grid.as_deref().unwrap_or("0.5:0.5:5.0"))?;
            let rep = run_denoise_gaussian(g, &clean, a.sigma2, &grid, a.forests, seed)?;
            rep.write_table(out)?;
            let curves = sibling(out, "sure", "csv");
            rep.write_sure_curves(&curves)?;
            for r in &rep.rows {
                save_signal_csv(sibling(out, &r.method.to_string(), "csv"), &r.output)?;
            }
        }
        "denoise-poisson" => {
            let clean: Signal = match &loaded.image {
                Some((s, _, _)) => s.clone(),
                None => synthetic_clean(loaded, seed)?,
            };
            let intensity: Signal = clean.iter().map(|v| a.peak * v.max(1e-3)).collect();
            let rep = run_denoise_poisson(g, &intensity, a.mu, a.forests, seed)?;
            let mut lines = vec!["method,psnr,final_loss,iterations".to_string()];
            lines.push(format!("noisy,{},,", rep.noisy_psnr));
            for (m, lambda, trace, ps) in &rep.runs {
                lines.push(format!("{m},{ps},{},{}", trace.final_loss(), trace.len()));
                trace.write_csv(sibling(out, &format!("trace_{m}"), "csv"))?;
                save_signal_csv(sibling(out, &m.to_string(), "csv"), lambda)?;
            }
            std::fs::write(out, lines.join("\n") + "\n")
                .map_err(|e| Error::io(out.display().to_string(), e))?;
        }
        "ssl" => {
            let path = a
                .truth
                .as_ref()
                .ok_or_else(|| Error::Parameter("ssl experiment needs --truth".into()))?;
            let args = LabelArgs {
                labels: None,
                truth: Some(path.clone()),
                per_class: Some(a.per_class),
                classes: None,
            };
            let (_, truth) = labeled_problem(&args, loaded, seed)?;
            let truth = truth.expect("truth given");
            let classes = truth.iter().max().unwrap() + 1;
            let cfg = SslConfig {
                per_class: a.per_class,
                repetitions: a.reps,
                forests: a.forests,
                grid: parse_grid(a.grid.as_deref().unwrap_or("0.01,0.03,0.1,0.3,1,3,10"))?,
                eta: a.eta,
                seed,
            };
            run_ssl(g, &truth, classes, &cfg)?.write_csv(out)?;
        }
        other => {
            return Err(Error::Parameter(format!(
                "unknown experiment '{other}' (expected sweep, denoise-gaussian, denoise-poisson or ssl)"
            )))
        }
    }
    trailer.push(format!("threads={}", threads.max(1)));
    Ok(())
}
