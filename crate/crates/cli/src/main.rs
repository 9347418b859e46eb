use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use branchsim::born::{self, BornError, DEFAULT_GRID};
use branchsim::evolution::{self, EvolutionError, EvolveOptions, DEFAULT_BRANCH_LIMIT};
use branchsim::oracle::{self, OracleError};
use branchsim::statistics::{self, ExcessParams, GwParams, StatsError};
use branchsim::{build_topology_seeded, ModelParams, OrbitTopology, TopologyError};

const NUMERIC_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "branchsim", version, about = "Branching-record model simulator")]
struct Cli {
    /// Seed; overrides the config seed where one exists.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an orbit topology from a TOML config.
    Topology {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evolve the initial state on a topology and dump the branches.
    Evolve {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long = "T")]
        steps: usize,
        /// Add per-record ages and rotation counters to the CSV.
        #[arg(long)]
        verbose: bool,
        #[arg(long, default_value_t = DEFAULT_BRANCH_LIMIT)]
        branch_limit: usize,
    },
    /// Compare the exact state vector with the symbolic branches.
    Verify {
        #[arg(long)]
        topology: PathBuf,
        /// Steps; defaults to the topology lifetime.
        #[arg(long = "T")]
        steps: Option<usize>,
        #[arg(long, default_value_t = 200)]
        gram_samples: usize,
        #[arg(long, default_value_t = oracle::DEFAULT_DIM_CAP)]
        dim_cap: u64,
    },
    /// Monte Carlo of the branching process and the recall-count extremes.
    Stats {
        #[arg(long)]
        sigma: f64,
        #[arg(long = "T")]
        lifetime: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long = "L0")]
        l0: f64,
        #[arg(long)]
        trials: usize,
    },
    /// Equal-modulus branch configuration for weight |a|^2 over n slots.
    Born {
        #[arg(long = "a-sq")]
        a_sq: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        brute_force: bool,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
    },
}

/// Failure carrying its exit code.
#[derive(Debug)]
enum Failure {
    /// Exit 1: an internal check did not pass.
    Check(Value),
    /// Exit 2.
    Invalid(String),
    /// Exit 3.
    Limit(String),
    /// Exit 1: I/O or other runtime error.
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) | Failure::Runtime(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Limit(_) => 3,
        }
    }

    fn detail(&self) -> Value {
        match self {
            Failure::Check(v) => json!({ "status": "check_failed", "exit_code": 1, "detail": v }),
            Failure::Invalid(m) => json!({ "status": "invalid_input", "exit_code": 2, "error": m }),
            Failure::Limit(m) => json!({ "status": "resource_limit", "exit_code": 3, "error": m }),
            Failure::Runtime(m) => json!({ "status": "error", "exit_code": 1, "error": m }),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<EvolutionError> for Failure {
    fn from(e: EvolutionError) -> Self {
        match e {
            EvolutionError::BranchLimit { .. } => Failure::Limit(e.to_string()),
            EvolutionError::LifetimeTooLong { .. } => Failure::Invalid(e.to_string()),
            EvolutionError::BlankRequirement { .. } => Failure::Check(json!({ "error": e.to_string() })),
        }
    }
}

impl From<TopologyError> for Failure {
    fn from(e: TopologyError) -> Self {
        match e {
            TopologyError::LoopFreedom { .. } => Failure::Limit(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::DimensionCap { .. } | OracleError::DimensionOverflow => {
                Failure::Limit(e.to_string())
            }
            OracleError::Evolution(inner) => inner.into(),
            _ => Failure::Check(json!({ "error": e.to_string() })),
        }
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Evolution(inner) => inner.into(),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<BornError> for Failure {
    fn from(e: BornError) -> Self {
        match &e {
            BornError::NonIntegral {
                a_sq,
                n,
                product,
                candidates,
            } => Failure::Check(json!({
                "error": e.to_string(),
                "a_sq": a_sq,
                "n": n,
                "a_sq_n": product,
                "candidates": candidates
                    .iter()
                    .map(|(m, f)| json!({ "m": m, "objective": f }))
                    .collect::<Vec<_>>(),
            })),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: &'static str,
    params: Value,
    seed: Option<u64>,
    threads: usize,
    inputs: Vec<String>,
    outputs: Vec<String>,
    version: &'static str,
    wall_clock_s: f64,
}

struct Ctx {
    seed: Option<u64>,
    threads: usize,
    out: PathBuf,
    started: Instant,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<String, Failure> {
        let p = self.path(name);
        fs::write(&p, text)?;
        Ok(p.display().to_string())
    }

    fn manifest(
        &self,
        stage: &'static str,
        params: Value,
        seed: Option<u64>,
        inputs: &[&Path],
        outputs: Vec<String>,
    ) -> Result<(), Failure> {
        let m = RunManifest {
            subcommand: stage,
            params,
            seed,
            threads: self.threads,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs,
            version: env!("CARGO_PKG_VERSION"),
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        self.write(&format!("{stage}.manifest.json"), &pretty(&m))?;
        Ok(())
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_topology(path: &Path) -> Result<OrbitTopology, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    Ok(OrbitTopology::from_json(&text)?)
}

fn cmd_topology(ctx: &Ctx, config: &Path) -> Result<Value, Failure> {
    let mut params =
        ModelParams::from_config_file(config).map_err(|e| Failure::Invalid(e.to_string()))?;
    if let Some(seed) = ctx.seed {
        params.seed = seed;
    }
    let topo = build_topology_seeded(&params)?;
    let written = ctx.write("topology.json", &topo.to_json())?;
    let summary = json!({
        "K": topo.k(),
        "Q": topo.branch_points().len(),
        "n_records": topo.n_records(),
        "triggers": topo.triggers().len(),
        "recall_clamps": topo.recall_clamps(),
        "topology": written,
    });
    let params_value = serde_json::to_value(&params).expect("serializable");
    ctx.manifest("topology", params_value, Some(params.seed), &[config], vec![written])?;
    Ok(summary)
}

fn cmd_evolve(
    ctx: &Ctx,
    path: &Path,
    steps: usize,
    verbose: bool,
    branch_limit: usize,
) -> Result<Value, Failure> {
    let topo = load_topology(path)?;
    let opts = EvolveOptions {
        branch_limit,
        ..Default::default()
    };
    let state = evolution::evolve_with(&topo, steps, opts)?;
    let csv_path = ctx.path("branches.csv");
    let mut w = BufWriter::new(fs::File::create(&csv_path)?);
    evolution::write_csv(&mut w, &state, &topo, verbose)?;
    w.flush()?;
    let norm_exact = state.norm_is_exact();
    let agrees = evolution::agrees_with_closed_form(&state, &topo)?;
    let summary = json!({
        "T": steps,
        "branches": state.len(),
        "norm": state.norm(),
        "norm_exact": norm_exact,
        "closed_form_agreement": agrees,
        "wraps": state.wraps,
        "trigger_writes": state.trigger_writes,
        "Z": state.history,
    });
    let summary_path = ctx.write("evolve_summary.json", &pretty(&summary))?;
    ctx.manifest(
        "evolve",
        json!({ "T": steps, "verbose": verbose, "branch_limit": branch_limit }),
        Some(topo.params().seed),
        &[path],
        vec![csv_path.display().to_string(), summary_path],
    )?;
    if !(norm_exact && agrees) {
        return Err(Failure::Check(summary));
    }
    Ok(summary)
}

fn cmd_verify(
    ctx: &Ctx,
    path: &Path,
    steps: Option<usize>,
    gram_samples: usize,
    dim_cap: u64,
) -> Result<Value, Failure> {
    let topo = load_topology(path)?;
    let steps = steps.unwrap_or(topo.params().lifetime);
    let seed = ctx.seed.unwrap_or(topo.params().seed);
    let mut rng = statistics::trial_rng(seed, 0);
    let report = oracle::compare_to_symbolic(&topo, steps, dim_cap, gram_samples, &mut rng)?;
    let value = serde_json::to_value(&report).expect("serializable");
    let written = ctx.write("oracle_report.json", &pretty(&value))?;
    ctx.manifest(
        "verify",
        json!({ "T": steps, "gram_samples": gram_samples, "dim_cap": dim_cap }),
        Some(seed),
        &[path],
        vec![written],
    )?;
    let pass = report.max_amp_err < NUMERIC_TOL
        && report.gram_err < NUMERIC_TOL
        && report.norm_err < NUMERIC_TOL
        && report.structure_match;
    if !pass {
        return Err(Failure::Check(value));
    }
    Ok(value)
}

fn cmd_stats(
    ctx: &Ctx,
    sigma: f64,
    lifetime: usize,
    alpha: f64,
    l0: f64,
    trials: usize,
) -> Result<Value, Failure> {
    let seed = ctx.seed.unwrap_or(0);
    let p = ExcessParams {
        gw: GwParams::new(sigma, lifetime, trials, seed),
        alpha,
        l0,
    };
    let summary = statistics::excess_distribution(&p)?;
    let csv_path = ctx.path("trials.csv");
    let mut w = BufWriter::new(fs::File::create(&csv_path)?);
    summary.write_trials_csv(&mut w)?;
    w.flush()?;
    let value = serde_json::to_value(&summary).expect("serializable");
    let summary_path = ctx.write("stats_summary.json", &pretty(&value))?;
    ctx.manifest(
        "stats",
        json!({ "sigma": sigma, "T": lifetime, "alpha": alpha, "L0": l0, "trials": trials }),
        Some(seed),
        &[],
        vec![csv_path.display().to_string(), summary_path],
    )?;
    Ok(value)
}

fn cmd_born(a_sq: f64, n: usize, brute_force: bool, grid: usize) -> Result<Value, Failure> {
    let spec = born::optimal_split(a_sq, n)?;
    let mut out = serde_json::to_value(&spec).expect("serializable");
    if brute_force {
        let bf = born::brute_force_split(a_sq, n, grid)?;
        let step = 1.0 / grid as f64;
        let agree = bf.m == spec.m
            && bf
                .moduli
                .iter()
                .zip(&spec.moduli)
                .all(|(a, b)| (a * a - b * b).abs() <= step);
        out["brute_force"] = serde_json::to_value(&bf).expect("serializable");
        out["agree"] = json!(agree);
        if !agree {
            return Err(Failure::Check(out));
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<Value, Failure> {
    let ctx = Ctx {
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out,
        started: Instant::now(),
    };
    if !matches!(cli.command, Command::Born { .. }) {
        fs::create_dir_all(&ctx.out)?;
    }
    match cli.command {
        Command::Topology { config } => cmd_topology(&ctx, &config),
        Command::Evolve {
            topology,
            steps,
            verbose,
            branch_limit,
        } => cmd_evolve(&ctx, &topology, steps, verbose, branch_limit),
        Command::Verify {
            topology,
            steps,
            gram_samples,
            dim_cap,
        } => cmd_verify(&ctx, &topology, steps, gram_samples, dim_cap),
        Command::Stats {
            sigma,
            lifetime,
            alpha,
            l0,
            trials,
        } => cmd_stats(&ctx, sigma, lifetime, alpha, l0, trials),
        Command::Born {
            a_sq,
            n,
            brute_force,
            grid,
        } => cmd_born(a_sq, n, brute_force, grid),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .expect("thread pool");
    match pool.install(|| run(cli)) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", serde_json::to_string_pretty(&f.detail()).expect("serializable"));
            ExitCode::from(f.code())
        }
    }
}
