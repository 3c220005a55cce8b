use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use secnet::engine::{self, EngineError, Scenario, ScenarioConfig};
use secnet::num::{self, Q};
use secnet::scheduler::oracle::minmax_oracle;
use secnet::scheduler::params::{select_parameters, ParamContext, ParamsError};

/// Simulator for Byzantine-resilient throughput in ad hoc wireless networks.
///
/// Log verbosity follows SECNET_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "secnet", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write metrics.json and trace.jsonl.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the per-disable-set optimum table and the min-max value.
    Oracle { config: PathBuf },
    /// Derive protocol parameters and print the four inequality residuals.
    Params {
        #[arg(long)]
        n: usize,
        #[arg(long = "a-max")]
        a_max: String,
        #[arg(long)]
        u0: String,
        #[arg(long)]
        kr: u64,
        #[arg(long)]
        eps: String,
        #[arg(long, default_value = "1")]
        quantum: String,
        #[arg(long = "k-delay", default_value = "1")]
        k_delay: String,
        #[arg(long = "w-unit", default_value = "1")]
        w_unit: String,
        /// Upper limit on the network lifetime.
        #[arg(long = "t-ceiling")]
        t_ceiling: Option<String>,
    },
}

enum Failure {
    Engine(EngineError),
    Other(anyhow::Error),
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::Engine(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScenarioConfig::from_toml(&text)?)
}

fn cmd_run(config: &PathBuf, seed: Option<u64>, out: &PathBuf) -> Result<(), Failure> {
    let cfg = load(config)?;
    let sc = Scenario::from_config(&cfg, seed)?;
    let res = engine::run(&sc)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("metrics.json"), res.metrics.to_json()).context("writing metrics")?;
    fs::write(out.join("trace.jsonl"), res.trace.to_jsonl()).context("writing trace")?;
    let m = &res.metrics;
    println!(
        "utility {} (~{:.6}), planned {}, {} prune events, {} iterations simulated",
        m.utility,
        m.utility_f64,
        m.planned_utility,
        m.prune_history.len(),
        m.iterations_simulated
    );
    println!("wrote {} and {}", out.join("metrics.json").display(), out.join("trace.jsonl").display());
    Ok(())
}

fn cmd_oracle(config: &PathBuf) -> Result<(), Failure> {
    let cfg = load(config)?;
    let sc = Scenario::from_config(&cfg, None)?;
    engine::check_assumption_c(&sc)?;
    let res = minmax_oracle(&sc.model, &sc.good, &sc.utility, sc.oracle_budget).map_err(EngineError::from)?;
    let name = |set: &std::collections::BTreeSet<secnet::model::CtvId>| {
        if set.is_empty() {
            "{}".to_string()
        } else {
            let d: Vec<String> = set.iter().map(|c| sc.model.entry(*c).ctv.descriptor()).collect();
            format!("{{{}}}", d.join(" | "))
        }
    };
    println!("disabled\tmax utility");
    for (set, v) in &res.per_set {
        println!("{}\t{} (~{:.6})", name(set), num::fmt(v), num::to_f64(v));
    }
    println!("min-max {} (~{:.6}) at {}", num::fmt(&res.value), num::to_f64(&res.value), name(&res.argmin));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_params(n: usize, a_max: &str, u0: &str, kr: u64, eps: &str, quantum: &str, k_delay: &str, w_unit: &str, t_ceiling: Option<&str>) -> Result<(), Failure> {
    let field = |name: &str, v: &str| -> Result<Q, Failure> {
        num::parse(v).ok_or_else(|| {
            Failure::Engine(EngineError::ConfigInvalid(vec![engine::FieldError { field: name.into(), message: format!("not a number: {v}") }]))
        })
    };
    let (a, u, e) = (field("a-max", a_max)?, field("u0", u0)?, field("eps", eps)?);
    let mut ctx = ParamContext { quantum: field("quantum", quantum)?, k_delay: field("k-delay", k_delay)?, w_unit: field("w-unit", w_unit)?, ..ParamContext::default() };
    if let Some(t) = t_ceiling {
        ctx.t_ceiling = field("t-ceiling", t)?;
    }
    let p = select_parameters(n, &a, &u, kr, &e, &ctx).map_err(|err| match err {
        ParamsError::BadEpsilon => EngineError::ConfigInvalid(vec![engine::FieldError { field: "eps".into(), message: err.to_string() }]),
        ParamsError::NoFeasibleParams(m) => EngineError::NoFeasibleParams(m),
    })?;
    println!("n_iter\t{}", p.n_iter);
    for (k, v) in [
        ("t_life", &p.t_life),
        ("data_time", &p.data_time),
        ("dead_time", &p.dead_time),
        ("discovery", &p.discovery),
        ("iteration_overhead", &p.iteration_overhead),
        ("eps_l", &p.eps_l),
        ("eps_d", &p.eps_d),
        ("eps_a", &p.eps_a),
        ("eps_b", &p.eps_b),
        ("w", &p.w),
    ] {
        println!("{k}\t{} (~{:.6e})", num::fmt(v), num::to_f64(v));
    }
    for (k, (lhs, rhs, ge)) in p.inequalities(n, &a, &u).iter().enumerate() {
        let residual = if *ge { lhs - rhs } else { rhs - lhs };
        println!("residual {}\t{} (~{:.6e})", k + 1, num::fmt(&residual), num::to_f64(&residual));
    }
    Ok(())
}

fn exit_code(e: &EngineError) -> u8 {
    match e {
        EngineError::ConfigInvalid(_) => 2,
        EngineError::AssumptionCViolated(_) => 3,
        EngineError::TooLarge(_) | EngineError::NoFeasibleParams(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SECNET_LOG", "warn")).init();
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run { config, seed, out } => cmd_run(config, *seed, out),
        Cmd::Oracle { config } => cmd_oracle(config),
        Cmd::Params { n, a_max, u0, kr, eps, quantum, k_delay, w_unit, t_ceiling } => {
            cmd_params(*n, a_max, u0, *kr, eps, quantum, k_delay, w_unit, t_ceiling.as_deref())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Engine(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
