use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use msgr::experiment::{self, coarse_solution, OversampleStyle, Reference};
use msgr::io;
use msgr::{
    cluster, oversample_with, partition_balanced, CentroidRule, ClusteringConfig, ExperimentConfig, McLocalOptions, ProblemSpec,
    ProlongationKind, TransientConfig,
};

/// Multiscale graph reduction: partition, cluster, build a prolongation and
/// solve the Galerkin coarse model.
///
/// Vertex ids in partition, cluster, prolongation and vector files refer to
/// the free (non-Dirichlet) vertices of the problem, in increasing order.
#[derive(Parser)]
#[command(name = "msgr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a test problem as graph, operator and load files.
    Generate {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Output directory (graph.txt, matrix.mtx, rhs.txt).
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Balanced partition, optionally oversampled.
    Partition {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        part: PartitionArgs,
        /// Output file with `vertex subdomain` lines; `<out>.oversampled`
        /// gets `subdomain vertex` lines when delta_h is given.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Spectral clustering inside each subdomain.
    Cluster {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        part: PartitionArgs,
        #[command(flatten)]
        clu: ClusterArgs,
        /// Output file with `vertex subdomain aggregate is_centroid` lines.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build a prolongation and write it in Matrix Market format.
    Prolong {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        part: PartitionArgs,
        #[command(flatten)]
        clu: ClusterArgs,
        #[command(flatten)]
        method: MethodArgs,
        /// Output .mtx; column metadata goes to `<out>.columns`.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Solve the fine and coarse systems and report relative errors (%).
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        part: PartitionArgs,
        #[command(flatten)]
        clu: ClusterArgs,
        #[command(flatten)]
        method: MethodArgs,
        /// Backward Euler step; enables the transient solve.
        #[arg(long, requires = "steps")]
        tau: Option<f64>,
        #[arg(long, requires = "tau")]
        steps: Option<usize>,
        /// Output directory for u.txt, u_ms.txt (and trajectory.csv).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment sweep from a TOML config.
    Run {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Overrides `workers` (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Print the pivoted error table after the run.
        #[arg(long)]
        summary: bool,
    },
    /// Pivot an errors.csv into a table.
    Report { csv: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Channels,
    Rotated,
    Isotropic,
    AnisoHeat,
    Pore,
}

#[derive(Clone, Copy, ValueEnum)]
enum Load {
    Uniform,
    /// 1 + x + sin(2 pi y)
    Smooth,
}

#[derive(Args)]
struct ProblemArgs {
    /// TOML file holding a problem spec (`family = ...`).
    #[arg(long, conflicts_with_all = ["family", "graph"])]
    problem: Option<PathBuf>,
    /// Built-in problem family.
    #[arg(long, value_enum, conflicts_with = "graph")]
    family: Option<Family>,
    /// Graph file; the operator defaults to its signed Laplacian.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Matrix Market operator matching --graph.
    #[arg(long, requires = "graph")]
    matrix: Option<PathBuf>,
    /// Load vector matching --graph.
    #[arg(long, requires = "graph")]
    rhs: Option<PathBuf>,
    /// Grid nodes (or pores) in x.
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Channel to background conductivity ratio.
    #[arg(long)]
    contrast: Option<f64>,
    #[arg(long)]
    source: Option<f64>,
    /// Load profile for grid problems.
    #[arg(long, value_enum)]
    load: Option<Load>,
    /// Tensor eigenvalues and angle for the rotated family.
    #[arg(long)]
    d1: Option<f64>,
    #[arg(long)]
    d2: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Conductivities along and across the field for aniso-heat.
    #[arg(long)]
    k_par: Option<f64>,
    #[arg(long)]
    k_perp: Option<f64>,
    /// Generator seed (pore networks).
    #[arg(long)]
    problem_seed: Option<u64>,
    /// Drop the circular perforations from the channel problem.
    #[arg(long)]
    no_holes: bool,
    /// Rotated anisotropic background for the channel problem.
    #[arg(long)]
    anisotropic: bool,
}

impl ProblemArgs {
    fn spec(&self) -> Result<ProblemSpec> {
        if let Some(path) = &self.problem {
            return ProblemSpec::load(path).with_context(|| format!("reading {}", path.display()));
        }
        if let Some(graph) = &self.graph {
            return Ok(ProblemSpec::File { graph: graph.clone(), matrix: self.matrix.clone(), rhs: self.rhs.clone() });
        }
        let Some(family) = self.family else { bail!("one of --problem, --family or --graph is required") };
        let mut t = toml::Table::new();
        let name = match family {
            Family::Channels => "channels",
            Family::Rotated => "rotated",
            Family::Isotropic => "isotropic",
            Family::AnisoHeat => "aniso_heat",
            Family::Pore => "pore",
        };
        t.insert("family".into(), name.into());
        let ints = [("nx", self.nx), ("ny", self.ny)];
        for (k, v) in ints {
            if let Some(v) = v {
                t.insert(k.into(), (v as i64).into());
            }
        }
        let floats = [
            ("contrast", self.contrast),
            ("source", self.source),
            ("d1", self.d1),
            ("d2", self.d2),
            ("theta", self.theta),
            ("k_par", self.k_par),
            ("k_perp", self.k_perp),
        ];
        for (k, v) in floats {
            if let Some(v) = v {
                t.insert(k.into(), v.into());
            }
        }
        if let Some(s) = self.problem_seed {
            t.insert("seed".into(), (s as i64).into());
        }
        if let Some(load) = self.load {
            t.insert(
                "load".into(),
                match load {
                    Load::Uniform => "uniform",
                    Load::Smooth => "smooth",
                }
                .into(),
            );
        }
        if self.no_holes {
            t.insert("holes".into(), false.into());
        }
        if self.anisotropic {
            t.insert("anisotropic".into(), true.into());
        }
        toml::Value::Table(t).try_into().context("problem parameters")
    }
}

#[derive(Args)]
struct PartitionArgs {
    /// Number of subdomains.
    #[arg(long, default_value_t = 4)]
    n_omega: usize,
    /// Seed for partitioning and clustering.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Oversampling width (hop count in `hops` mode).
    #[arg(long)]
    delta_h: Option<f64>,
    #[arg(long, value_enum, default_value_t = Mode::Vertex)]
    mode: Mode,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Vertex,
    Closure,
    Hops,
}

impl From<Mode> for OversampleStyle {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Vertex => OversampleStyle::Vertex,
            Mode::Closure => OversampleStyle::Closure,
            Mode::Hops => OversampleStyle::Hops,
        }
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// Aggregates per subdomain.
    #[arg(short = 'm', long, default_value_t = 4)]
    m: usize,
    /// Pick centroids as the member nearest the spectral-embedding mean.
    #[arg(long)]
    spectral_centroids: bool,
    /// k-means restarts.
    #[arg(long, default_value_t = 8)]
    n_init: usize,
}

#[derive(Args)]
struct MethodArgs {
    /// CF-glo, CF-loc, MC-glo or MC-loc.
    #[arg(long, default_value = "MC-glo")]
    method: ProlongationKind,
    /// Also constrain aggregates only partly inside a local region.
    #[arg(long)]
    constrain_partial: bool,
}

struct Pipeline {
    problem: msgr::Problem,
    partition: msgr::Partition,
}

fn load(problem: &ProblemArgs, part: &PartitionArgs) -> Result<Pipeline> {
    let problem = problem.spec()?.build()?;
    let mut partition = partition_balanced(&problem.graph, part.n_omega, part.seed)?;
    if let Some(d) = part.delta_h {
        partition = oversample_with(&problem.graph, &partition, OversampleStyle::from(part.mode).mode(d))?;
    }
    let b = partition.balance();
    eprintln!(
        "n = {}, N_omega = {}, sizes {}..{} (ratio {:.3}), overlap {}",
        problem.n(),
        partition.n_subdomains(),
        b.min,
        b.max,
        b.ratio(),
        partition.overlap_multiplicity()
    );
    if !partition.disconnected_subdomains().is_empty() {
        eprintln!("warning: disconnected subdomains {:?}", partition.disconnected_subdomains());
    }
    Ok(Pipeline { problem, partition })
}

fn clusters(pl: &Pipeline, part: &PartitionArgs, clu: &ClusterArgs) -> Result<msgr::ClusterSet> {
    let cfg = ClusteringConfig {
        centroid_rule: if clu.spectral_centroids { CentroidRule::Spectral } else { CentroidRule::Physical },
        n_init: clu.n_init,
        ..ClusteringConfig::new(clu.m, part.seed)
    };
    let cs = cluster(&pl.problem.graph, &pl.partition, &cfg)?;
    for (k, req, used) in &cs.report.clamped {
        eprintln!("subdomain {k}: M reduced from {req} to {used}");
    }
    eprintln!("n_c = {}", cs.n_coarse());
    Ok(cs)
}

fn prolong(pl: &Pipeline, cs: &msgr::ClusterSet, m: &MethodArgs) -> Result<msgr::Prolongation> {
    if m.method.is_local() && !pl.partition.has_oversampling() {
        eprintln!("note: no --delta-h given, local regions are the subdomains themselves");
    }
    let opts = McLocalOptions { constrain_partial: m.constrain_partial };
    Ok(experiment::prolongation(&pl.problem, &pl.partition, cs, m.method, &opts)?)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { problem, out } => {
            let sys = problem.spec()?.generate()?;
            fs::create_dir_all(&out)?;
            io::write_graph(out.join("graph.txt"), &sys.graph)?;
            io::write_matrix_market(out.join("matrix.mtx"), &sys.a)?;
            io::write_vector(out.join("rhs.txt"), &sys.f)?;
            eprintln!("{} vertices, {} edges", sys.graph.n_vertices(), sys.graph.edges().len());
        }
        Command::Partition { problem, part, out } => {
            let pl = load(&problem, &part)?;
            fs::write(&out, io::format_partition(pl.partition.assignment()))?;
            if pl.partition.has_oversampling() {
                let mut s = String::new();
                for k in 0..pl.partition.n_subdomains() {
                    for v in pl.partition.oversampled(k).sorted_ids() {
                        s.push_str(&format!("{k} {v}\n"));
                    }
                }
                fs::write(with_suffix(&out, ".oversampled"), s)?;
            }
        }
        Command::Cluster { problem, part, clu, out } => {
            let pl = load(&problem, &part)?;
            let cs = clusters(&pl, &part, &clu)?;
            fs::write(&out, cs.to_text())?;
        }
        Command::Prolong { problem, part, clu, method, out } => {
            let pl = load(&problem, &part)?;
            let cs = clusters(&pl, &part, &clu)?;
            let p = prolong(&pl, &cs, &method)?;
            io::write_matrix_market(&out, p.matrix())?;
            fs::write(with_suffix(&out, ".columns"), p.meta_text())?;
        }
        Command::Solve { problem, part, clu, method, tau, steps, out } => {
            let pl = load(&problem, &part)?;
            let cs = clusters(&pl, &part, &clu)?;
            let p = prolong(&pl, &cs, &method)?;
            let transient = tau.zip(steps).map(|(tau, steps)| TransientConfig { tau, steps });
            let reference = Reference::compute(&pl.problem, transient.as_ref())?;
            let u_ms = coarse_solution(&pl.problem, &p, &reference)?;
            let u = match &reference {
                Reference::Steady(u) => u,
                Reference::Transient { final_state, .. } => final_state,
            };
            let (e1, e2) = msgr::errors(u, &u_ms, &pl.problem.a)?;
            println!("method={} n={} n_c={} e1={e1:.6e} e2={e2:.6e}", method.method, pl.problem.n(), p.n_coarse());
            if let Some(out) = out {
                fs::create_dir_all(&out)?;
                io::write_vector(out.join("u.txt"), u)?;
                io::write_vector(out.join("u_ms.txt"), &u_ms)?;
                if let (Some(cfg), Reference::Transient { capacity, u0, .. }) = (&transient, &reference) {
                    let traj = msgr::solve_parabolic(capacity, &pl.problem.a, &pl.problem.f, u0, cfg, Some(p.matrix()))?;
                    fs::write(out.join("trajectory.csv"), io::format_trajectory(&traj.times, &traj.states))?;
                }
            }
        }
        Command::Run { config, out, workers, summary } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let outcome = experiment::run(&cfg)?;
            let failed: Vec<_> = outcome.records.iter().filter(|r| !r.ok()).collect();
            for r in &failed {
                eprintln!("failed: {}", r.csv_row());
            }
            eprintln!("{} rows, {} failed, written to {}", outcome.records.len(), failed.len(), outcome.errors_csv.display());
            if summary {
                print!("{}", experiment::emit_summary(&fs::read_to_string(&outcome.errors_csv)?)?);
            }
            return Ok(failed.is_empty());
        }
        Command::Report { csv } => {
            let text = fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
            print!("{}", experiment::emit_summary(&text)?);
        }
    }
    Ok(true)
}
