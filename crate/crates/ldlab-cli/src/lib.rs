//! Command-line front end. Each subcommand wraps one library driver and
//! writes its documented CSV or JSON output; all experiment parameters come
//! from a flat key-value config file with a few global flag overrides.

use clap::{Parser, Subcommand};
use ldlab::config::Config;
use ldlab::error::{Error, Result};
use ldlab::lab::{model_from_config, schedule_from_config, sweep, sweep_config_from};
use ldlab::measures::DiscreteMeasure;
use ldlab::models::{check_multiscale, check_single, Builtin, GridSpec};
use ldlab::multiscale_control::{solve_xi_star, PiecewisePlan};
use ldlab::rate::{eval_i1, eval_i2, FEASIBILITY_TOL};
use ldlab::sde::{simulate_multiscale, simulate_single, write_csv_multiscale, TimeGrid};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "ldlab",
    version,
    about = "Numerical laboratory for small-noise diffusions over long horizons"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment configuration file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the config `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output path; defaults to the config `out` key, then stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides the config `replicas`.
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one uncontrolled path; CSV `t,y_1..` or `t,x_1..,y_1..`.
    Simulate,
    /// Steering sweep; CSV `eps,replica,cost,dbl_to_target`.
    Steer,
    /// Multiscale steering sweep from a plan file; CSV
    /// `eps,replica,u_cost,v_cost,sup_dist_xi,dbl_lambda`.
    Multiscale,
    /// Evaluate the rate of a measure (`measure.file`) or of a plan's
    /// measure path along its slow trajectory (`plan.file`); JSON output.
    Rate,
    /// Log-exponential estimator sweep; CSV `eps,estimate,std_error`.
    Laplace,
    /// Run the model assumption checker; one report line per clause.
    Check,
    /// Run the experiment named by the config `experiment` key.
    Sweep,
}

/// Exit code contract: 0 success, 2 config or usage errors, 3 numerical
/// failures during a run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) | Error::StiffnessGuard { .. } => 2,
        Error::Divergence { .. } | Error::Singular(_) => 3,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::new(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(replicas) = cli.replicas {
        cfg.set("replicas", &replicas.to_string())?;
    }
    if let Some(out) = &cli.out {
        let text = out
            .to_str()
            .ok_or_else(|| Error::invalid("--out path is not valid UTF-8"))?;
        cfg.set("out", text)?;
    }
    match cli.command {
        Command::Simulate => simulate_cmd(&cfg),
        Command::Steer => sweep_cmd(&cfg, Some("steer")),
        Command::Multiscale => sweep_cmd(&cfg, Some("multiscale")),
        Command::Rate => rate_cmd(&cfg),
        Command::Laplace => sweep_cmd(&cfg, Some("laplace")),
        Command::Check => check_cmd(&cfg),
        Command::Sweep => sweep_cmd(&cfg, None),
    }
}

/// Writes to the config `out` path when present, stdout otherwise.
fn emit(cfg: &Config, text: &str) -> Result<()> {
    match cfg.get("out") {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::invalid(format!("cannot write {path}: {e}"))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn first_eps(cfg: &Config) -> Result<f64> {
    let list = cfg
        .get_f64_list("eps.list")?
        .ok_or_else(|| Error::invalid("missing config key 'eps.list'"))?;
    list.first()
        .copied()
        .ok_or_else(|| Error::invalid("eps.list is empty"))
}

fn simulate_cmd(cfg: &Config) -> Result<()> {
    let model = model_from_config(cfg)?;
    let sched = schedule_from_config(cfg)?;
    let eps = first_eps(cfg)?;
    let horizon = cfg.get_f64("horizon")?.unwrap_or(1.0);
    let seed = cfg.get_u64("seed")?.unwrap_or(1);
    let grid = match cfg.get_usize("steps")? {
        Some(n) => TimeGrid::new(0.0, horizon, n)?,
        // The fast drift needs dt below eps/10; stay just under it so the
        // guard comparison cannot trip on rounding.
        None => TimeGrid::covering(0.0, horizon, eps / 10.0 * 0.999)?,
    };
    let mut buf = Vec::new();
    match &model {
        Builtin::Single(m) => {
            let run = simulate_single(m, &sched, eps, &grid, seed, None)?;
            run.path
                .write_csv(&mut buf)
                .map_err(|e| Error::invalid(format!("write: {e}")))?;
        }
        Builtin::Multiscale(m) => {
            let run = simulate_multiscale(m, &sched, eps, &grid, seed, None, None)?;
            write_csv_multiscale(&run.x_path, &run.y_path, &mut buf)
                .map_err(|e| Error::invalid(format!("write: {e}")))?;
        }
    }
    let text = String::from_utf8(buf).map_err(|e| Error::invalid(format!("write: {e}")))?;
    emit(cfg, &text)
}

fn sweep_cmd(cfg: &Config, experiment: Option<&str>) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(name) = experiment {
        cfg.set("experiment", name)?;
    }
    let table = sweep(&sweep_config_from(&cfg)?)?;
    emit(&cfg, &table.to_csv())
}

fn rate_cmd(cfg: &Config) -> Result<()> {
    let model = model_from_config(cfg)?;
    let result = match (cfg.get("plan.file"), cfg.get("measure.file")) {
        (Some(path), _) => {
            let m = match &model {
                Builtin::Multiscale(m) => m,
                Builtin::Single(_) => {
                    return Err(Error::invalid(
                        "plan.file rate evaluation needs a multiscale model",
                    ))
                }
            };
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::invalid(format!("plan file {path}: {e}")))?;
            let mut plan = PiecewisePlan::from_json_str(&text)?;
            let steps = cfg.get_usize("steps")?.unwrap_or(2000);
            let grid = TimeGrid::new(0.0, plan.horizon(), steps)?;
            let xi = solve_xi_star(m, &mut plan, &grid)?;
            eval_i2(m, &xi, &plan.space_time()?, FEASIBILITY_TOL)?
        }
        (None, Some(path)) => {
            let m = match &model {
                Builtin::Single(m) => m,
                Builtin::Multiscale(_) => {
                    return Err(Error::invalid(
                        "measure.file rate evaluation needs a single-scale model",
                    ))
                }
            };
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::invalid(format!("measure file {path}: {e}")))?;
            let measure: DiscreteMeasure = serde_json::from_str(&text)
                .map_err(|e| Error::invalid(format!("measure file {path}: {e}")))?;
            measure.validate()?;
            eval_i1(m, &measure)?
        }
        (None, None) => {
            return Err(Error::invalid(
                "rate needs either plan.file or measure.file",
            ))
        }
    };
    emit(cfg, &format!("{}\n", result.to_json()))
}

fn check_cmd(cfg: &Config) -> Result<()> {
    let model = model_from_config(cfg)?;
    let report = match &model {
        Builtin::Single(m) => check_single(m, &GridSpec::default_for(m.d))?,
        Builtin::Multiscale(m) => check_multiscale(m, &GridSpec::default_for(m.m + m.d))?,
    };
    emit(cfg, &format!("{report}"))
}
