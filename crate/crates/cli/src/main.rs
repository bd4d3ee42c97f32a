//! Command-line front end: calculators print JSON to stdout, solvers and
//! experiments additionally write a run directory.

mod config;
mod rundir;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rdlab::equilibrium::general_equilibrium;
use rdlab::estimates::{
    duality_prefactor, lemma33_exponents, lemma36_iteration, no_fallback, prop4_conditions,
    prop4_zk_sequence, prop5_pn_sequence, remark_rein_exponent, select_2d_exponent,
    standard_provider,
};
use rdlab::experiments::{
    polynomial_growth_probe, run_prop2, run_prop3, run_prop5, verify_duality_ensemble,
};
use rdlab::heat::{estimate_cmq_detailed, estimate_cmq_time_probe, interpolated_cmr, Provenance, RegularityConstant};
use rdlab::reaction::{simulate, write_snapshots, ReactionNetwork};

use config::{
    load, load_file, EquilibriumConfig, EstimateConfig, ExperimentConfig, Overrides, SimulateConfig,
    VerifyConfig,
};
use rundir::RunDir;

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::config(format!("{}: {e}", path.display()))
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        CliError {
            code: 4,
            message: e.to_string(),
        }
    }
}

impl From<rdlab::Error> for CliError {
    fn from(e: rdlab::Error) -> Self {
        let code = if e.is_hypothesis() {
            3
        } else if e.is_numerical() {
            4
        } else {
            2
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "rdlab", version, about = "Duality estimates and reaction-diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form constants and exponent recursions.
    #[command(subcommand)]
    Constants(Constants),
    /// Simulate a reaction-diffusion system.
    Simulate(Common),
    /// Detailed-balance equilibrium of a network.
    Equilibrium(EquilibriumArgs),
    /// Check the duality bound on an ensemble of initial data.
    Verify(VerifyArgs),
    /// Empirical lower estimate of the regularity constant C_{m,q}.
    EstimateC(EstimateArgs),
    /// Four-species experiment drivers.
    Experiment(ExperimentArgs),
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// Cells per axis, `N` or `NxM`.
    #[arg(long)]
    grid: Option<String>,
    /// Domain lengths, `LX` or `LX,LY`.
    #[arg(long)]
    extent: Option<String>,
    /// Final time.
    #[arg(long = "T")]
    t_final: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory for run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// TOML (or `.json`) configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> CliResult<Overrides> {
        Overrides::parse(self.grid.as_deref(), self.extent.as_deref(), self.t_final, self.dt, self.seed)
    }
}

#[derive(Subcommand)]
enum Constants {
    /// Smallness condition and prefactor of the duality estimate.
    Duality {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        /// Value of C_{(a+b)/2,q}; defaults to the analytic anchor at q = 2.
        #[arg(long)]
        c: Option<f64>,
        /// Provenance of `--c`: analytic, interpolated or empirical.
        #[arg(long, default_value = "empirical")]
        provenance: String,
        /// C_{m,3/2}, used to interpolate when `--c` is absent.
        #[arg(long)]
        c32: Option<f64>,
    },
    /// Interpolated upper bound on C_{m,r} for r in [3/2, 2].
    Interp {
        #[arg(long)]
        m: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        c32: f64,
    },
    /// Two-dimensional exponent selection.
    Select2d {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        c32: f64,
    },
    /// Heat-kernel bootstrap exponents p_n, s_n and their limit.
    Lemma33 {
        #[arg(long = "N")]
        n: u32,
        #[arg(long)]
        q: f64,
    },
    /// Iteration q_{n+1} = q_n (N+2) / (2 (N+2-q_n)).
    Lemma36 {
        #[arg(long = "N")]
        n: u32,
        #[arg(long)]
        q0: f64,
    },
    /// Smallness conditions for a superquadratic network.
    Prop4 {
        #[command(flatten)]
        net: NetworkArgs,
        #[arg(long = "N", default_value_t = 2)]
        n: u32,
        #[arg(long)]
        c32: Option<f64>,
        /// Empirical value used where no upper bound is available.
        #[arg(long)]
        c: Option<f64>,
    },
    /// Bootstrap sequence z_k.
    Zk {
        #[arg(long = "N")]
        n: u32,
        #[arg(long = "Q")]
        q: u32,
        #[arg(long)]
        z0: f64,
    },
    /// Sequence 1/p_{n+1} = 2/p_n - 1/2 for degenerate diffusion.
    Pn {
        #[arg(long)]
        p0: f64,
    },
    /// Largest reachable exponent r_max = pN/(N+2-2p).
    Rein {
        #[arg(long = "N")]
        n: u32,
        #[arg(long)]
        p: f64,
    },
}

#[derive(Args, Clone)]
struct NetworkArgs {
    /// Network as JSON `{n, alpha, beta, k, l, d}`.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<u32>>,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<f64>>,
}

impl NetworkArgs {
    fn build(&self) -> CliResult<Option<ReactionNetwork>> {
        if let Some(path) = &self.network {
            return Ok(Some(load_file(path)?));
        }
        match (&self.alpha, &self.beta) {
            (Some(a), Some(b)) => {
                let d = self.d.clone().unwrap_or_else(|| vec![1.0; a.len()]);
                Ok(Some(ReactionNetwork::new(a.clone(), b.clone(), self.k, self.l, d)?))
            }
            (None, None) => Ok(None),
            _ => Err(CliError::config("--alpha and --beta must be given together")),
        }
    }
}

#[derive(Args)]
struct EquilibriumArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    net: NetworkArgs,
    /// Initial species averages.
    #[arg(long, value_delimiter = ',')]
    averages: Option<Vec<f64>>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// One of prop2, prop3, prop5, growth.
    kind: String,
    #[command(flatten)]
    common: Common,
}

fn print_json(value: &impl Serialize) -> CliResult<()> {
    use std::io::Write;
    let s = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
    match writeln!(std::io::stdout().lock(), "{s}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::internal(e)),
        _ => Ok(()),
    }
}

fn constants(cmd: &Constants) -> CliResult<()> {
    match cmd {
        Constants::Duality {
            a,
            b,
            q,
            c,
            provenance,
            c32,
        } => {
            let m = 0.5 * (a + b);
            let constant = match (c, c32) {
                (Some(v), _) => {
                    let prov = match provenance.as_str() {
                        "analytic" => Provenance::Analytic,
                        "interpolated" => Provenance::Interpolated,
                        "empirical" => Provenance::Empirical,
                        other => return Err(CliError::config(format!("unknown provenance `{other}`"))),
                    };
                    RegularityConstant::given(m, *q, *v, prov)?
                }
                (None, Some(c32)) => interpolated_cmr(m, *q, *c32)?,
                (None, None) if *q == 2.0 => RegularityConstant::analytic(m)?,
                (None, None) => {
                    return Err(CliError::config(
                        "q != 2 needs a constant: pass --c or --c32",
                    ))
                }
            };
            print_json(&duality_prefactor(*a, *b, *q, &constant)?)
        }
        Constants::Interp { m, r, c32 } => print_json(&interpolated_cmr(*m, *r, *c32)?),
        Constants::Select2d { a, b, c32 } => print_json(&select_2d_exponent(*a, *b, *c32)?),
        Constants::Lemma33 { n, q } => print_json(&lemma33_exponents(*n, *q)?),
        Constants::Lemma36 { n, q0 } => print_json(&lemma36_iteration(*n, *q0)?),
        Constants::Prop4 { net, n, c32, c } => {
            let net = net
                .build()?
                .ok_or_else(|| CliError::config("prop4 needs --network or --alpha/--beta"))?;
            let value = *c;
            let fallback = move |m: f64, q: f64| match value {
                Some(v) => RegularityConstant::given(m, q, v, Provenance::Empirical),
                None => no_fallback(m, q),
            };
            let provider = standard_provider(*c32, &fallback);
            print_json(&prop4_conditions(&net, *n, &provider)?)
        }
        Constants::Zk { n, q, z0 } => print_json(&prop4_zk_sequence(*n, *q, *z0)?),
        Constants::Pn { p0 } => print_json(&prop5_pn_sequence(*p0)?),
        Constants::Rein { n, p } => print_json(&remark_rein_exponent(*n, *p)?),
    }
}

/// Runs `body` inside a run directory, marking it partial on failure.
fn with_run_dir(
    out: &Path,
    command: &str,
    config: &impl Serialize,
    body: impl FnOnce(&mut RunDir) -> CliResult<()>,
) -> CliResult<()> {
    let mut dir = RunDir::create(out, command, config)?;
    match body(&mut dir) {
        Ok(()) => {
            let path = dir.finish(None)?;
            eprintln!("run directory: {}", path.display());
            Ok(())
        }
        Err(e) => {
            let path = dir.finish(Some(&e))?;
            eprintln!("partial run directory: {}", path.display());
            Err(e)
        }
    }
}

fn cmd_simulate(args: &Common) -> CliResult<()> {
    let mut cfg: SimulateConfig = load(args.config.as_deref())?;
    cfg.apply(&args.overrides()?)?;
    let (net, init, sim_cfg) = cfg.resolve()?;
    with_run_dir(&args.out, "simulate", &cfg, |dir| {
        dir.anchor("prop2.conservation");
        let sim = simulate(&net, &init, &sim_cfg)?;
        let mut csv = Vec::new();
        sim.diagnostics.write_csv(&mut csv).map_err(CliError::internal)?;
        dir.write("series.csv", &csv)?;
        if sim_cfg.keep_snapshots {
            let mut bin = Vec::new();
            write_snapshots(&sim.trajectory, &mut bin).map_err(CliError::internal)?;
            dir.write("snapshots.bin", &bin)?;
        }
        let report = serde_json::json!({
            "anchor": "prop2.conservation",
            "final_time": sim.final_state.time,
            "equilibrium": sim.equilibrium,
            "mass_drift": sim.diagnostics.mass_drift(),
            "min_value": sim.diagnostics.running_min.last(),
            "sup_over_run": sim.diagnostics.running_sup.last(),
            "final_sup_distance": sim.diagnostics.sup_distance.last(),
            "rejected_steps": sim.rejected_steps,
        });
        dir.write_json("report.json", &report)?;
        print_json(&report)
    })
}

fn cmd_equilibrium(args: &EquilibriumArgs) -> CliResult<()> {
    let mut cfg: EquilibriumConfig = load(args.common.config.as_deref())?;
    if let Some(net) = args.net.build()? {
        cfg.network = net;
    }
    if let Some(avg) = &args.averages {
        cfg.averages = avg.clone();
    }
    with_run_dir(&args.common.out, "equilibrium", &cfg, |dir| {
        dir.anchor("prop2.equilibrium");
        let eq = general_equilibrium(&cfg.network, &cfg.averages)?;
        let report = serde_json::json!({
            "anchor": "prop2.equilibrium",
            "values": eq.values,
            "masses": eq.masses,
            "residual": eq.residual,
            "iterations": eq.iterations,
        });
        dir.write_json("report.json", &report)?;
        print_json(&report)
    })
}

fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let mut cfg: VerifyConfig = load(args.common.config.as_deref())?;
    cfg.apply(&args.common.overrides()?, args.p, args.q, args.a, args.b, args.samples)?;
    let (duality, constant) = cfg.resolve()?;
    with_run_dir(&args.common.out, "verify", &cfg, |dir| {
        dir.anchor("prop1.duality");
        let ens = verify_duality_ensemble(&duality, &constant)?;
        let mut csv = String::from("sample,measured,bound,ratio\n");
        for (k, c) in ens.checks.iter().enumerate() {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
            csv.push_str(&format!("{k},{:e},{},{}\n", c.measured, opt(c.bound), opt(c.ratio)));
        }
        dir.write("ratios.csv", csv.as_bytes())?;
        dir.write_json("report.json", &ens)?;
        print_json(&serde_json::json!({
            "anchor": ens.anchor,
            "constants": ens.constants,
            "max_ratio": ens.max_ratio,
            "all_within_bound": ens.all_within_bound,
            "guaranteed": ens.checks.first().map(|c| c.guaranteed),
            "note": ens.checks.first().and_then(|c| c.note.clone()),
        }))
    })
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let mut cfg: EstimateConfig = load(args.common.config.as_deref())?;
    cfg.apply(&args.common.overrides()?, args.m, args.q, args.samples)?;
    let est = cfg.estimator;
    with_run_dir(&args.common.out, "estimate-c", &cfg, |dir| {
        dir.anchor("lemma21.cmq");
        let detail = estimate_cmq_detailed(&cfg.grid, cfg.m, cfg.q, cfg.t_final, &est)?;
        let mut csv = String::from("sample,ratio\n");
        for (k, r) in detail.sample_ratios.iter().enumerate() {
            csv.push_str(&format!("{k},{r:e}\n"));
        }
        dir.write("ratios.csv", csv.as_bytes())?;
        let probe = match &cfg.horizons {
            Some(h) => Some(estimate_cmq_time_probe(&cfg.grid, cfg.m, cfg.q, h, &est)?),
            None => None,
        };
        let report = serde_json::json!({
            "anchor": "lemma21.cmq",
            "constant": detail.constant,
            "power_ratio": detail.power_ratio,
            "anchor_value": if cfg.q == 2.0 { Some(1.0 / cfg.m) } else { None },
            "time_probe": probe,
        });
        dir.write_json("report.json", &report)?;
        print_json(&report)
    })
}

fn cmd_experiment(args: &ExperimentArgs) -> CliResult<()> {
    let mut cfg: ExperimentConfig = load(args.common.config.as_deref())?;
    cfg.apply(&args.common.overrides()?)?;
    let kind = args.kind.as_str();
    if kind == "prop5" && args.common.config.is_none() {
        cfg.run.d[3] = 0.0;
    }
    let command = match kind {
        "prop2" | "prop3" | "prop5" | "growth" => format!("experiment-{kind}"),
        other => {
            return Err(CliError::config(format!(
                "unknown experiment `{other}` (expected prop2, prop3, prop5 or growth)"
            )))
        }
    };
    with_run_dir(&args.common.out, &command, &cfg, |dir| {
        let write_series = |dir: &mut RunDir, sim: &rdlab::reaction::Simulation| -> CliResult<()> {
            let mut csv = Vec::new();
            sim.diagnostics.write_csv(&mut csv).map_err(CliError::internal)?;
            dir.write("series.csv", &csv)
        };
        match kind {
            "prop2" => {
                dir.anchor("prop2.decay");
                dir.anchor("prop2.conservation");
                let (rep, sim) = run_prop2(&cfg.run)?;
                write_series(dir, &sim)?;
                dir.write_json("report.json", &rep)?;
                print_json(&rep)
            }
            "prop3" => {
                dir.anchor("prop3.decay");
                dir.anchor("prop3.smallness");
                let (rep, sim) = run_prop3(&cfg.run, cfg.c_three_halves)?;
                write_series(dir, &sim)?;
                dir.write_json("report.json", &rep)?;
                print_json(&rep)
            }
            "prop5" => {
                dir.anchor("prop5.bounded");
                let (rep, sim) = run_prop5(&cfg.run)?;
                write_series(dir, &sim)?;
                dir.write_json("report.json", &rep)?;
                print_json(&rep)
            }
            _ => {
                dir.anchor("lemma37.growth");
                let rep = polynomial_growth_probe(&cfg.run, &cfg.horizons)?;
                dir.write_json("report.json", &rep)?;
                print_json(&rep)
            }
        }
    })
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Constants(c) => constants(c),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Equilibrium(args) => cmd_equilibrium(args),
        Command::Verify(args) => cmd_verify(args),
        Command::EstimateC(args) => cmd_estimate(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
