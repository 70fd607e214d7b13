//! Parameter sweeps over `(N_omega, M, delta_H, method, seed)` with CSV
//! output, plus the pivot into a compact error table.
//!
//! `errors.csv` depends only on the configuration; wall-clock timings go to
//! a separate `timings.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{verify_bound, BoundInputs, ConvergenceReport};
use crate::clustering::{cluster, CentroidRule, ClusterSet, ClusteringConfig};
use crate::coarse::{errors, galerkin_coarse, solve_fine, solve_parabolic, solve_steady, TransientConfig};
use crate::error::{MsgrError, Result};
use crate::interpolation::{cf_ideal_global, cf_ideal_local, mc_global, mc_local, McLocalOptions, Prolongation, ProlongationKind};
use crate::partition::{oversample_with, partition_balanced, OversampleMode, Partition};
use crate::problems::{Problem, ProblemSpec};

pub const CSV_HEADER: &str = "test,method,scope,N_omega,M,delta_H,seed,e1,e2,n,n_c,status";
pub const TIMING_HEADER: &str = "test,method,scope,N_omega,M,delta_H,seed,partition_ms,cluster_ms,prolong_ms,solve_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OversampleStyle {
    /// Vertices within Euclidean distance `delta_H`.
    #[default]
    Vertex,
    /// Whole subdomains reached within `delta_H`.
    Closure,
    /// `delta_H` read as a breadth-first hop count.
    Hops,
}

impl OversampleStyle {
    pub fn mode(&self, delta: f64) -> OversampleMode {
        match self {
            OversampleStyle::Vertex => OversampleMode::Vertex { delta },
            OversampleStyle::Closure => OversampleMode::Closure { delta },
            OversampleStyle::Hops => OversampleMode::Hops { hops: delta.round().max(0.0) as usize },
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_n_init() -> usize {
    8
}
fn default_output() -> PathBuf {
    PathBuf::from("msgr-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label for the `test` column; defaults to the problem family.
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemSpec,
    pub n_omega: Vec<usize>,
    pub m: Vec<usize>,
    /// Needed when a local method is requested.
    #[serde(default)]
    pub delta_h: Vec<f64>,
    pub methods: Vec<ProlongationKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub oversample: OversampleStyle,
    #[serde(default)]
    pub constrain_partial: bool,
    #[serde(default)]
    pub centroid_rule: CentroidRule,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default)]
    pub transient: Option<TransientConfig>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    /// Write per-run convergence reports.
    #[serde(default)]
    pub reports: bool,
    /// Write the reference solution and every `u_ms` under `vectors/`.
    #[serde(default)]
    pub vectors: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| MsgrError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.problem.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MsgrError::Config(m.to_string()));
        if self.n_omega.is_empty() || self.m.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return bad("n_omega, m, methods and seeds must be nonempty");
        }
        if self.n_omega.contains(&0) || self.m.contains(&0) {
            return bad("n_omega and m entries must be positive");
        }
        if self.methods.iter().any(ProlongationKind::is_local) && self.delta_h.is_empty() {
            return bad("local methods need at least one delta_h");
        }
        if self.delta_h.iter().any(|d| !(*d >= 0.0)) {
            return bad("delta_h entries must be non-negative");
        }
        if let Some(t) = &self.transient {
            t.validate()?;
        }
        Ok(())
    }

    pub fn test_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.problem.label().to_string())
    }
}

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub test: String,
    pub kind: ProlongationKind,
    pub n_omega: usize,
    pub m: usize,
    pub delta_h: Option<f64>,
    pub seed: u64,
    pub e1: f64,
    pub e2: f64,
    pub n: usize,
    pub n_c: usize,
    pub status: std::result::Result<(), String>,
    pub timings_ms: [f64; 4],
    pub report: Option<ConvergenceReport>,
    pub u_ms: Option<Vec<f64>>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.status.is_ok()
    }

    fn delta_text(&self) -> String {
        self.delta_h.map(|d| d.to_string()).unwrap_or_default()
    }

    pub fn csv_row(&self) -> String {
        let status = match &self.status {
            Ok(()) => "ok".to_string(),
            Err(e) => format!("error: {}", e.replace([',', '\n'], ";")),
        };
        format!(
            "{},{},{},{},{},{},{},{:.6e},{:.6e},{},{},{}",
            self.test,
            self.kind.method,
            self.kind.scope,
            self.n_omega,
            self.m,
            self.delta_text(),
            self.seed,
            self.e1,
            self.e2,
            self.n,
            self.n_c,
            status
        )
    }

    /// `test_method_scope_N_M_d_s`, used for per-row files.
    pub fn file_stem(&self) -> String {
        format!(
            "{}_{}_{}_N{}_M{}_d{}_s{}",
            self.test,
            self.kind.method,
            self.kind.scope,
            self.n_omega,
            self.m,
            self.delta_h.map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
            self.seed
        )
    }

    pub fn timing_row(&self) -> String {
        let t = self.timings_ms;
        format!(
            "{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{:.3}",
            self.test,
            self.kind.method,
            self.kind.scope,
            self.n_omega,
            self.m,
            self.delta_text(),
            self.seed,
            t[0],
            t[1],
            t[2],
            t[3]
        )
    }
}

/// Reference solution the coarse results are compared against.
pub enum Reference {
    Steady(Vec<f64>),
    Transient { capacity: Vec<f64>, u0: Vec<f64>, cfg: TransientConfig, final_state: Vec<f64> },
}

impl Reference {
    pub fn compute(problem: &Problem, transient: Option<&TransientConfig>) -> Result<Self> {
        match transient {
            None => Ok(Reference::Steady(solve_fine(&problem.a, &problem.f)?)),
            Some(cfg) => {
                let capacity = problem.capacity();
                let u0 = vec![0.0; problem.n()];
                let traj = solve_parabolic(&capacity, &problem.a, &problem.f, &u0, cfg, None)?;
                Ok(Reference::Transient { capacity, u0, cfg: *cfg, final_state: traj.last().to_vec() })
            }
        }
    }
}

/// Builds one prolongation of `kind` on an already clustered problem.
pub fn prolongation(
    problem: &Problem,
    partition: &Partition,
    clusters: &ClusterSet,
    kind: ProlongationKind,
    opts: &McLocalOptions,
) -> Result<Prolongation> {
    match kind {
        ProlongationKind::CF_GLOBAL => cf_ideal_global(&problem.a, clusters),
        ProlongationKind::CF_LOCAL => cf_ideal_local(&problem.a, clusters, partition),
        ProlongationKind::MC_GLOBAL => mc_global(&problem.a, clusters),
        _ => mc_local(&problem.a, clusters, partition, opts),
    }
}

/// Coarse solution mapped to the fine space: steady `u_ms`, or the final
/// state of the reduced transient.
pub fn coarse_solution(problem: &Problem, p: &Prolongation, reference: &Reference) -> Result<Vec<f64>> {
    match reference {
        Reference::Steady(_) => {
            let model = galerkin_coarse(&problem.a, &problem.f, p.matrix())?;
            Ok(solve_steady(&model)?.1)
        }
        Reference::Transient { capacity, u0, cfg, .. } => {
            let traj = solve_parabolic(capacity, &problem.a, &problem.f, u0, cfg, Some(p.matrix()))?;
            Ok(traj.last().to_vec())
        }
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

struct Job {
    n_omega: usize,
    m: usize,
    seed: u64,
}

fn run_job(cfg: &ExperimentConfig, problem: &Problem, reference: &Reference, job: &Job) -> Vec<RunRecord> {
    let test = cfg.test_name();
    let mut variants: Vec<(ProlongationKind, Option<f64>)> = Vec::new();
    for &kind in &cfg.methods {
        if kind.is_local() {
            variants.extend(cfg.delta_h.iter().map(|&d| (kind, Some(d))));
        } else {
            variants.push((kind, None));
        }
    }
    let record = |kind, delta_h, status, timings_ms| RunRecord {
        test: test.clone(),
        kind,
        n_omega: job.n_omega,
        m: job.m,
        delta_h,
        seed: job.seed,
        e1: f64::NAN,
        e2: f64::NAN,
        n: problem.n(),
        n_c: 0,
        status,
        timings_ms,
        report: None,
        u_ms: None,
    };

    let t0 = Instant::now();
    let base = match partition_balanced(&problem.graph, job.n_omega, job.seed) {
        Ok(p) => p,
        Err(e) => return variants.iter().map(|&(k, d)| record(k, d, Err(e.to_string()), [0.0; 4])).collect(),
    };
    let t_part = ms(t0);
    let t0 = Instant::now();
    let ccfg = ClusteringConfig { m: job.m, seed: job.seed, n_init: cfg.n_init, centroid_rule: cfg.centroid_rule, ..Default::default() };
    let clusters = match cluster(&problem.graph, &base, &ccfg) {
        Ok(c) => c,
        Err(e) => return variants.iter().map(|&(k, d)| record(k, d, Err(e.to_string()), [t_part, 0.0, 0.0, 0.0])).collect(),
    };
    let t_clu = ms(t0);
    let opts = McLocalOptions { constrain_partial: cfg.constrain_partial };
    let reference_state = match reference {
        Reference::Steady(u) => u,
        Reference::Transient { final_state, .. } => final_state,
    };

    variants
        .into_iter()
        .map(|(kind, delta)| {
            let mut t = [t_part, t_clu, 0.0, 0.0];
            let result = (|| -> Result<(Prolongation, Vec<f64>, Partition)> {
                let t0 = Instant::now();
                let part = match delta {
                    Some(d) => oversample_with(&problem.graph, &base, cfg.oversample.mode(d))?,
                    None => base.clone(),
                };
                t[0] += ms(t0);
                let t0 = Instant::now();
                let p = prolongation(problem, &part, &clusters, kind, &opts)?;
                t[2] = ms(t0);
                let t0 = Instant::now();
                let u_ms = coarse_solution(problem, &p, reference)?;
                t[3] = ms(t0);
                Ok((p, u_ms, part))
            })();
            match result.and_then(|(p, u_ms, part)| {
                let (e1, e2) = errors(reference_state, &u_ms, &problem.a)?;
                let report = match (cfg.reports, reference, problem.graph.coords()) {
                    (true, Reference::Steady(u), Some(_)) => Some(verify_bound(&BoundInputs {
                        graph: &problem.graph,
                        a: &problem.a,
                        f: &problem.f,
                        clusters: &clusters,
                        p: p.matrix(),
                        u,
                        u_ms: &u_ms,
                        overlap: part.overlap_multiplicity(),
                    })?),
                    _ => None,
                };
                Ok((e1, e2, p.n_coarse(), report, cfg.vectors.then_some(u_ms)))
            }) {
                Ok((e1, e2, n_c, report, u_ms)) => RunRecord { e1, e2, n_c, report, u_ms, ..record(kind, delta, Ok(()), t) },
                Err(e) => RunRecord { n_c: clusters.n_coarse(), ..record(kind, delta, Err(e.to_string()), t) },
            }
        })
        .collect()
}

/// Runs the whole sweep in memory. Records come back in a fixed order:
/// `N_omega`, `M`, seed, then method and `delta_H` as listed.
pub fn run_records(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    Ok(sweep(cfg)?.0)
}

fn sweep(cfg: &ExperimentConfig) -> Result<(Vec<RunRecord>, Problem, Reference)> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let reference = Reference::compute(&problem, cfg.transient.as_ref())?;
    let mut jobs = Vec::new();
    for &n_omega in &cfg.n_omega {
        for &m in &cfg.m {
            for &seed in &cfg.seeds {
                jobs.push(Job { n_omega, m, seed });
            }
        }
    }
    let work = || jobs.par_iter().map(|j| run_job(cfg, &problem, &reference, j)).collect::<Vec<_>>();
    let nested = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(|e| MsgrError::Config(e.to_string()))?.install(work)
    } else {
        work()
    };
    Ok((nested.into_iter().flatten().collect(), problem, reference))
}

pub fn format_csv(records: &[RunRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub errors_csv: PathBuf,
    pub timings_csv: PathBuf,
}

impl RunOutcome {
    pub fn all_ok(&self) -> bool {
        self.records.iter().all(RunRecord::ok)
    }
}

/// Runs the sweep and writes `errors.csv`, `timings.csv` and, when
/// requested, per-run reports into the output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let (records, problem, reference) = sweep(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let errors_csv = cfg.output_dir.join("errors.csv");
    fs::write(&errors_csv, format_csv(&records))?;
    let mut timings = String::from(TIMING_HEADER);
    timings.push('\n');
    for r in &records {
        timings.push_str(&r.timing_row());
        timings.push('\n');
    }
    let timings_csv = cfg.output_dir.join("timings.csv");
    fs::write(&timings_csv, timings)?;
    if cfg.reports {
        let dir = cfg.output_dir.join("reports");
        fs::create_dir_all(&dir)?;
        for r in &records {
            if let Some(rep) = &r.report {
                fs::write(dir.join(format!("{}.csv", r.file_stem())), rep.to_csv())?;
            }
        }
    }
    if cfg.vectors {
        let dir = cfg.output_dir.join("vectors");
        fs::create_dir_all(&dir)?;
        let reference = match &reference {
            Reference::Steady(u) => u,
            Reference::Transient { final_state, .. } => final_state,
        };
        crate::io::write_vector(dir.join("u.txt"), reference)?;
        crate::io::write_matrix_market(dir.join("A.mtx"), &problem.a)?;
        for r in &records {
            if let Some(u_ms) = &r.u_ms {
                crate::io::write_vector(dir.join(format!("{}.txt", r.file_stem())), u_ms)?;
            }
        }
    }
    Ok(RunOutcome { records, errors_csv, timings_csv })
}

/// Pivots an errors CSV into tables with rows `M x scope` and columns
/// `method x {e1, e2}`, one table per `(test, N_omega, seed)`.
pub fn emit_summary(csv: &str) -> Result<String> {
    type TableKey = (String, usize, u64);
    type RowKey = (usize, String);
    let mut tables: BTreeMap<TableKey, BTreeMap<RowKey, BTreeMap<String, (String, String)>>> = BTreeMap::new();
    let mut methods: Vec<String> = Vec::new();
    for (ln, line) in csv.lines().enumerate() {
        if ln == 0 && line.starts_with("test,") || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.splitn(12, ',').collect();
        if f.len() < 12 {
            return Err(MsgrError::Parse { line: ln + 1, message: "expected 12 columns".into() });
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| MsgrError::Parse { line: ln + 1, message: format!("bad count `{s}`") });
        let n_omega = parse_usize(f[3])?;
        let m = parse_usize(f[4])?;
        let seed: u64 = f[6].parse().map_err(|_| MsgrError::Parse { line: ln + 1, message: format!("bad seed `{}`", f[6]) })?;
        let scope = if f[5].is_empty() { f[2].to_string() } else { format!("{} d={}", f[2], f[5]) };
        let (e1, e2) = if f[11] == "ok" { (f[7].to_string(), f[8].to_string()) } else { ("err".into(), "err".into()) };
        if !methods.iter().any(|x| x == f[1]) {
            methods.push(f[1].to_string());
        }
        let row = tables.entry((f[0].to_string(), n_omega, seed)).or_default().entry((m, scope.clone())).or_default();
        if row.insert(f[1].to_string(), (e1, e2)).is_some() {
            return Err(MsgrError::Parse { line: ln + 1, message: format!("duplicate row {} {} M={m} {scope}", f[0], f[1]) });
        }
    }
    methods.sort();

    let mut out = String::new();
    for ((test, n_omega, seed), rows) in &tables {
        writeln!(out, "{test}  N_omega={n_omega}  seed={seed}  (relative errors, %)").unwrap();
        let mut header = format!("{:>5}  {:<12}", "M", "scope");
        for m in &methods {
            write!(header, "  {:>12}  {:>12}", format!("{m} e1"), format!("{m} e2")).unwrap();
        }
        writeln!(out, "{header}").unwrap();
        for ((m, scope), cells) in rows {
            let mut line = format!("{m:>5}  {scope:<12}");
            for meth in &methods {
                let (a, b) = cells.get(meth).map(|(a, b)| (a.as_str(), b.as_str())).unwrap_or(("", ""));
                write!(line, "  {:>12}  {:>12}", short(a), short(b)).unwrap();
            }
            writeln!(out, "{}", line.trim_end()).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

fn short(cell: &str) -> String {
    match cell.parse::<f64>() {
        Ok(x) if x != 0.0 && (x.abs() < 1e-2 || x.abs() >= 1e4) => format!("{x:.2e}"),
        Ok(x) => format!("{x:.2}"),
        Err(_) => cell.to_string(),
    }
}
