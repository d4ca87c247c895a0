//! Experiment orchestration: bounded test functionals, the Monte Carlo
//! log-exponential estimator with its brute-force variational counterpart,
//! and seeded sweeps over noise levels that emit result tables.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::measures::{
    dbl_distance, dbl_space_time, dbl_to_dirac, from_path, DiscreteMeasure,
};
use crate::models::{builtin, Builtin, NoiseSchedule, SingleScaleModel};
use crate::multiscale_control::{
    build_partition, run_multiscale_steered, solve_xi_star, MsSteeredOptions, PiecewisePlan,
};
use crate::rate::i1_density;
use crate::rng::replica_seed;
use crate::sde::{map_replicas, simulate_single, TimeGrid};
use crate::steering::{build_schedule_with_travel, run_steered, SteeredOptions};

/// Coordinates are clamped to this box before taking means, so the mean
/// penalty is a genuinely bounded functional.
pub const MEAN_CLAMP: f64 = 1e6;

/// Exponent spreads beyond this are unrepresentable in one double-precision
/// exponential family; the estimator aborts instead of silently saturating.
pub const EXPONENT_SPREAD_LIMIT: f64 = 700.0;

/// Bounded functionals of a probability measure.
#[derive(Clone, Debug)]
pub enum FunctionalSpec {
    /// `min(cap, |clamped-mean(mu) - c|^2)`.
    MeanPenalty { c: Vec<f64>, cap: f64 },
    /// `min(cap, d_bl(mu, target))`.
    DblPenalty { target: DiscreteMeasure, cap: f64 },
    Zero,
    Constant(f64),
}

impl FunctionalSpec {
    /// The implied `sup |F|`.
    pub fn bound(&self) -> f64 {
        match self {
            FunctionalSpec::MeanPenalty { cap, .. } => *cap,
            FunctionalSpec::DblPenalty { cap, .. } => cap.min(2.0),
            FunctionalSpec::Zero => 0.0,
            FunctionalSpec::Constant(c) => c.abs(),
        }
    }

    pub fn eval(&self, mu: &DiscreteMeasure) -> Result<f64> {
        match self {
            FunctionalSpec::MeanPenalty { c, cap } => {
                if c.len() != mu.dim {
                    return Err(Error::invalid(format!(
                        "mean penalty center has dimension {}, measure {}",
                        c.len(),
                        mu.dim
                    )));
                }
                if !mu.is_probability() {
                    return Err(Error::invalid("mean penalty needs a probability measure"));
                }
                let mut mean = vec![0.0; mu.dim];
                for (loc, w) in &mu.atoms {
                    for (m, x) in mean.iter_mut().zip(loc) {
                        *m += w * x.clamp(-MEAN_CLAMP, MEAN_CLAMP);
                    }
                }
                let sq: f64 = mean.iter().zip(c).map(|(m, ci)| (m - ci) * (m - ci)).sum();
                Ok(sq.min(*cap))
            }
            FunctionalSpec::DblPenalty { target, cap } => {
                Ok(dbl_distance(mu, target)?.min(*cap))
            }
            FunctionalSpec::Zero => Ok(0.0),
            FunctionalSpec::Constant(c) => Ok(*c),
        }
    }
}

/// `scale * log((1/N) sum exp(v_i / scale))`, computed max-centered so the
/// largest term never overflows.
pub fn logmeanexp(values: &[f64], scale: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("logmeanexp of an empty list"));
    }
    if !(scale > 0.0) {
        return Err(Error::invalid("logmeanexp scale must be positive"));
    }
    let m = values
        .iter()
        .map(|v| v / scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let mean: f64 =
        values.iter().map(|v| (v / scale - m).exp()).sum::<f64>() / values.len() as f64;
    Ok(scale * (m + mean.ln()))
}

/// One noise level of the Laplace-functional estimator.
#[derive(Clone, Copy, Debug)]
pub struct LaplaceRow {
    pub eps: f64,
    pub estimate: f64,
    /// Delta-method standard error of the estimate.
    pub std_error: f64,
    pub replicas: usize,
}

/// Estimates `-eps s^2 log E exp(-F(mu^eps) / (eps s^2))` from `replicas`
/// independent uncontrolled runs on the unit horizon.
pub fn laplace_estimate(
    model: &SingleScaleModel,
    sched: &NoiseSchedule,
    functional: &FunctionalSpec,
    eps: f64,
    replicas: usize,
    seed: u64,
) -> Result<LaplaceRow> {
    if replicas == 0 {
        return Err(Error::invalid("need at least one replica"));
    }
    let s = sched.eval(eps)?;
    let scale = eps * s * s;
    if !(scale > 0.0) {
        return Err(Error::invalid(format!(
            "speed eps * s^2 = {scale} must be positive for the estimator"
        )));
    }
    let grid = TimeGrid::covering(0.0, 1.0, eps / 20.0)?;
    let f_values = map_replicas(seed, replicas, |rep_seed, _| {
        let run = simulate_single(model, sched, eps, &grid, rep_seed, None)?;
        functional.eval(&from_path(&run.path, true)?)
    })?;
    let exponents: Vec<f64> = f_values.iter().map(|f| -f / scale).collect();
    let hi = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = exponents.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi - lo > EXPONENT_SPREAD_LIMIT {
        return Err(Error::invalid(format!(
            "exponent spread {:.1} exceeds {EXPONENT_SPREAD_LIMIT} at eps = {eps} \
             (speed {scale:.3e}, F range [{:.3e}, {:.3e}]); the weight ratio is not \
             representable",
            hi - lo,
            -scale * hi,
            -scale * lo,
        )));
    }
    let weights: Vec<f64> = exponents.iter().map(|e| (e - hi).exp()).collect();
    let mean_w = weights.iter().sum::<f64>() / replicas as f64;
    let estimate = -scale * (hi + mean_w.ln());
    let std_error = if replicas > 1 {
        let var = weights
            .iter()
            .map(|w| (w - mean_w) * (w - mean_w))
            .sum::<f64>()
            / (replicas as f64 - 1.0);
        scale * var.sqrt() / ((replicas as f64).sqrt() * mean_w)
    } else {
        0.0
    };
    Ok(LaplaceRow {
        eps,
        estimate,
        std_error,
        replicas,
    })
}

/// Finite search family for the variational problem: one lattice per
/// coordinate, single atoms everywhere, plus (in one dimension) all
/// two-atom measures with lattice locations and gridded weights.
#[derive(Clone, Copy, Debug)]
pub struct SearchFamily {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub weight_step: f64,
    pub two_atom: bool,
}

impl Default for SearchFamily {
    fn default() -> Self {
        SearchFamily {
            lo: -3.0,
            hi: 3.0,
            step: 0.05,
            weight_step: 0.05,
            two_atom: true,
        }
    }
}

impl SearchFamily {
    fn lattice_1d(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || self.hi < self.lo {
            return Err(Error::invalid("search lattice must be nonempty"));
        }
        let n = ((self.hi - self.lo) / self.step).round() as usize;
        Ok((0..=n).map(|i| self.lo + i as f64 * self.step).collect())
    }
}

/// Result of the brute-force search: the minimal `F + I` and its argmin.
#[derive(Clone, Debug)]
pub struct VariationalResult {
    pub value: f64,
    pub argmin: DiscreteMeasure,
}

/// Brute-force minimum of `F(mu) + I(mu)` over the family, with `I` the
/// long-time rate function (linear over atoms).
pub fn variational_value(
    model: &SingleScaleModel,
    functional: &FunctionalSpec,
    family: &SearchFamily,
) -> Result<VariationalResult> {
    let axis = family.lattice_1d()?;
    let points: Vec<Vec<f64>> = if model.d == 1 {
        axis.iter().map(|&x| vec![x]).collect()
    } else {
        let total = (axis.len() as f64).powi(model.d as i32);
        if total > 1e7 {
            return Err(Error::invalid(format!(
                "lattice of {total:.0} points is beyond brute force; coarsen the step"
            )));
        }
        let mut pts = vec![vec![]];
        for _ in 0..model.d {
            let mut next = Vec::with_capacity(pts.len() * axis.len());
            for p in &pts {
                for &x in &axis {
                    let mut q = p.clone();
                    q.push(x);
                    next.push(q);
                }
            }
            pts = next;
        }
        pts
    };
    let densities: Vec<f64> = points.iter().map(|p| i1_density(model, p)).collect();

    let mut best: Option<VariationalResult> = None;
    let mut consider = |value: f64, mu: DiscreteMeasure| {
        if best.as_ref().map_or(true, |b| value < b.value) {
            best = Some(VariationalResult { value, argmin: mu });
        }
    };
    for (p, dens) in points.iter().zip(&densities) {
        let mu = DiscreteMeasure::delta(p.clone());
        consider(functional.eval(&mu)? + dens, mu);
    }
    if family.two_atom && model.d == 1 {
        if !(family.weight_step > 0.0 && family.weight_step < 1.0) {
            return Err(Error::invalid("weight step must lie in (0, 1)"));
        }
        let mut weights = Vec::new();
        let mut w = family.weight_step;
        while w < 1.0 - 1e-12 {
            weights.push(w);
            w += family.weight_step;
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                for &w in &weights {
                    let mu = DiscreteMeasure::new(
                        1,
                        vec![(points[i].clone(), w), (points[j].clone(), 1.0 - w)],
                    )?;
                    let rate = w * densities[i] + (1.0 - w) * densities[j];
                    consider(functional.eval(&mu)? + rate, mu);
                }
            }
        }
    }
    best.ok_or_else(|| Error::invalid("empty search family"))
}

/// Which sweep to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Lln,
    Steer,
    Multiscale,
    Laplace,
}

impl Experiment {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "lln" => Ok(Experiment::Lln),
            "steer" => Ok(Experiment::Steer),
            "multiscale" => Ok(Experiment::Multiscale),
            "laplace" => Ok(Experiment::Laplace),
            _ => Err(Error::invalid(format!(
                "unknown experiment '{name}' (expected lln, steer, multiscale, or laplace)"
            ))),
        }
    }
}

/// Fully resolved sweep description.
#[derive(Clone)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub model: Builtin,
    pub schedule: NoiseSchedule,
    pub eps_list: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub target: Option<DiscreteMeasure>,
    pub travel: Option<f64>,
    pub functional: Option<FunctionalSpec>,
    pub plan: Option<PiecewisePlan>,
    pub delta_exponent: f64,
}

/// Numeric result table with a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Mean of `column` over rows whose `key_column` equals `key`.
    pub fn mean_where(&self, key_column: usize, key: f64, column: usize) -> Option<f64> {
        let picked: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r[key_column] == key)
            .map(|r| r[column])
            .collect();
        if picked.is_empty() {
            None
        } else {
            Some(picked.iter().sum::<f64>() / picked.len() as f64)
        }
    }
}

fn single_model(cfg: &SweepConfig) -> Result<&SingleScaleModel> {
    match &cfg.model {
        Builtin::Single(m) => Ok(m),
        Builtin::Multiscale(_) => Err(Error::invalid(
            "this experiment needs a single-scale model",
        )),
    }
}

/// Runs the configured experiment across the noise levels; deterministic
/// given the seed. One row per (eps, replica), except `laplace`, which
/// emits one row per eps.
pub fn sweep(cfg: &SweepConfig) -> Result<Table> {
    if cfg.replicas == 0 {
        return Err(Error::invalid("replicas must be at least 1"));
    }
    if cfg.eps_list.is_empty() || cfg.eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("eps list must be strictly decreasing"));
    }
    match cfg.experiment {
        Experiment::Lln => sweep_lln(cfg),
        Experiment::Steer => sweep_steer(cfg),
        Experiment::Multiscale => sweep_multiscale(cfg),
        Experiment::Laplace => sweep_laplace(cfg),
    }
}

fn sweep_lln(cfg: &SweepConfig) -> Result<Table> {
    let model = single_model(cfg)?;
    let origin = vec![0.0; model.d];
    let mut table = Table::new(&["eps", "replica", "dbl_to_origin"]);
    for (i, &eps) in cfg.eps_list.iter().enumerate() {
        let grid = TimeGrid::covering(0.0, 1.0, eps / 10.0)?;
        let eps_seed = replica_seed(cfg.seed, i as u64);
        let rows = map_replicas(eps_seed, cfg.replicas, |seed, rep| {
            let run = simulate_single(model, &cfg.schedule, eps, &grid, seed, None)?;
            let mu = from_path(&run.path, true)?;
            Ok(vec![eps, rep as f64, dbl_to_dirac(&mu, &origin)?])
        })?;
        table.rows.extend(rows);
    }
    Ok(table)
}

fn sweep_steer(cfg: &SweepConfig) -> Result<Table> {
    let model = single_model(cfg)?;
    let target = cfg
        .target
        .as_ref()
        .ok_or_else(|| Error::invalid("steer sweep needs a target measure"))?;
    let mut table = Table::new(&["eps", "replica", "cost", "dbl_to_target"]);
    for (i, &eps) in cfg.eps_list.iter().enumerate() {
        let schedule = build_schedule_with_travel(target, eps, cfg.travel.unwrap_or(eps))?;
        let grid = TimeGrid::covering(0.0, 1.0, eps * schedule.travel_duration / 10.0)?;
        let eps_seed = replica_seed(cfg.seed, i as u64);
        let opts = SteeredOptions::default();
        let rows = map_replicas(eps_seed, cfg.replicas, |seed, rep| {
            let out = run_steered(model, &schedule, &cfg.schedule, eps, &grid, seed, &opts)?;
            Ok(vec![
                eps,
                rep as f64,
                out.cost,
                dbl_distance(&out.measure, target)?,
            ])
        })?;
        table.rows.extend(rows);
    }
    Ok(table)
}

fn sweep_multiscale(cfg: &SweepConfig) -> Result<Table> {
    let model = match &cfg.model {
        Builtin::Multiscale(m) => m,
        Builtin::Single(_) => {
            return Err(Error::invalid("multiscale sweep needs a slow/fast model"))
        }
    };
    let mut plan = cfg
        .plan
        .clone()
        .ok_or_else(|| Error::invalid("multiscale sweep needs a plan"))?;
    if plan.xi_star.is_none() {
        let grid = TimeGrid::covering(0.0, plan.horizon(), plan.horizon() / 4000.0)?;
        solve_xi_star(model, &mut plan, &grid)?;
    }
    let reference = plan.space_time()?;
    let mut table = Table::new(&[
        "eps",
        "replica",
        "u_cost",
        "v_cost",
        "sup_dist_xi",
        "dbl_lambda",
    ]);
    for (i, &eps) in cfg.eps_list.iter().enumerate() {
        let partition = build_partition(&plan, eps, cfg.delta_exponent)?;
        let grid = TimeGrid::covering(
            0.0,
            plan.horizon(),
            eps * eps * partition.delta / 10.0,
        )?;
        let opts = MsSteeredOptions {
            lambda_stride: (grid.n / 1_000_000).max(1),
            ..Default::default()
        };
        let eps_seed = replica_seed(cfg.seed, i as u64);
        let rows = map_replicas(eps_seed, cfg.replicas, |seed, rep| {
            let out = run_multiscale_steered(
                model, &plan, &partition, &cfg.schedule, eps, &grid, seed, &opts,
            )?;
            Ok(vec![
                eps,
                rep as f64,
                out.u_cost,
                out.v_cost,
                out.sup_dist_xi.expect("xi_star solved above"),
                dbl_space_time(&out.lambda, &reference)?,
            ])
        })?;
        table.rows.extend(rows);
    }
    Ok(table)
}

fn sweep_laplace(cfg: &SweepConfig) -> Result<Table> {
    let model = single_model(cfg)?;
    let functional = cfg
        .functional
        .as_ref()
        .ok_or_else(|| Error::invalid("laplace sweep needs a functional"))?;
    let mut table = Table::new(&["eps", "estimate", "std_error"]);
    for (i, &eps) in cfg.eps_list.iter().enumerate() {
        let row = laplace_estimate(
            model,
            &cfg.schedule,
            functional,
            eps,
            cfg.replicas,
            replica_seed(cfg.seed, i as u64),
        )?;
        table.rows.push(vec![row.eps, row.estimate, row.std_error]);
    }
    Ok(table)
}

/// Builds the builtin named by `model`, forwarding `model.*` parameters.
pub fn model_from_config(cfg: &Config) -> Result<Builtin> {
    let name = cfg.require("model")?;
    let mut params = Vec::new();
    for (key, short) in [("model.d", "d"), ("model.c1", "c1"), ("model.c2", "c2")] {
        if let Some(v) = cfg.get_f64(key)? {
            params.push((short.to_string(), v));
        }
    }
    builtin(name, &params)
}

pub fn schedule_from_config(cfg: &Config) -> Result<NoiseSchedule> {
    let exponent = cfg.get_f64("schedule.exponent")?.unwrap_or(0.25);
    match cfg.get("schedule").unwrap_or("power") {
        "power" => NoiseSchedule::power(exponent),
        "loginv" => Ok(NoiseSchedule::LogInv),
        other => Err(Error::invalid(format!(
            "unknown schedule '{other}' (expected power or loginv)"
        ))),
    }
}

/// Builds the steering / penalty target from `target.atoms` and
/// `target.weights` (equal weights when omitted).
pub fn target_from_config(cfg: &Config) -> Result<Option<DiscreteMeasure>> {
    let atoms = match cfg.get_vectors("target.atoms")? {
        Some(a) => a,
        None => return Ok(None),
    };
    let n = atoms.len();
    let weights = match cfg.get_f64_list("target.weights")? {
        Some(w) => {
            if w.len() != n {
                return Err(Error::invalid(format!(
                    "target has {n} atoms but {} weights",
                    w.len()
                )));
            }
            w
        }
        None => vec![1.0 / n as f64; n],
    };
    let dim = atoms[0].len();
    Ok(Some(DiscreteMeasure::new(
        dim,
        atoms.into_iter().zip(weights).collect(),
    )?))
}

pub fn functional_from_config(cfg: &Config) -> Result<Option<FunctionalSpec>> {
    let kind = match cfg.get("functional") {
        Some(k) => k,
        None => return Ok(None),
    };
    let cap = cfg.get_f64("functional.cap")?.unwrap_or(1.0);
    match kind {
        "mean_penalty" => {
            let c = cfg
                .get_vectors("functional.c")?
                .ok_or_else(|| Error::invalid("mean_penalty needs functional.c"))?;
            if c.len() != 1 {
                return Err(Error::invalid("functional.c must be a single vector"));
            }
            Ok(Some(FunctionalSpec::MeanPenalty {
                c: c.into_iter().next().unwrap(),
                cap,
            }))
        }
        "dbl_penalty" => {
            let target = target_from_config(cfg)?
                .ok_or_else(|| Error::invalid("dbl_penalty needs target.atoms"))?;
            Ok(Some(FunctionalSpec::DblPenalty { target, cap }))
        }
        "zero" => Ok(Some(FunctionalSpec::Zero)),
        "constant" => {
            let value = cfg
                .get_f64("functional.value")?
                .ok_or_else(|| Error::invalid("constant functional needs functional.value"))?;
            Ok(Some(FunctionalSpec::Constant(value)))
        }
        other => Err(Error::invalid(format!(
            "unknown functional '{other}' (expected mean_penalty, dbl_penalty, zero, or constant)"
        ))),
    }
}

/// Resolves a full sweep description from a parsed config, reading the
/// plan file when one is named.
pub fn sweep_config_from(cfg: &Config) -> Result<SweepConfig> {
    let experiment = Experiment::parse(cfg.require("experiment")?)?;
    let plan = match cfg.get("plan.file") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::invalid(format!("plan file {path}: {e}")))?;
            Some(PiecewisePlan::from_json_str(&text)?)
        }
        None => None,
    };
    Ok(SweepConfig {
        experiment,
        model: model_from_config(cfg)?,
        schedule: schedule_from_config(cfg)?,
        eps_list: cfg
            .get_f64_list("eps.list")?
            .ok_or_else(|| Error::invalid("missing config key 'eps.list'"))?,
        replicas: cfg.get_usize("replicas")?.unwrap_or(512),
        seed: cfg.get_u64("seed")?.unwrap_or(1),
        target: target_from_config(cfg)?,
        travel: cfg.get_f64("travel.duration")?,
        functional: functional_from_config(cfg)?,
        plan,
        delta_exponent: cfg.get_f64("delta.exponent")?.unwrap_or(1.0 / 3.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::quadratic;

    #[test]
    fn logmeanexp_identities() {
        assert!((logmeanexp(&[2.5, 2.5, 2.5], 0.3).unwrap() - 2.5).abs() < 1e-12);
        // One surviving term: scale * log(1/2) plus the dominant value.
        let two = logmeanexp(&[0.0, -1e300], 0.1).unwrap();
        assert!((two - 0.1 * (0.5f64).ln()).abs() < 1e-12);
        let base = logmeanexp(&[0.3, -0.2, 0.9], 0.05).unwrap();
        let shifted = logmeanexp(&[0.3 + 7.0, -0.2 + 7.0, 0.9 + 7.0], 0.05).unwrap();
        assert!((shifted - 7.0 - base).abs() < 1e-9);
        assert!(logmeanexp(&[], 1.0).is_err());
    }

    #[test]
    fn functionals_are_bounded_and_clamped() {
        let f = FunctionalSpec::MeanPenalty { c: vec![0.0], cap: 1.0 };
        let far = DiscreteMeasure::delta(vec![50.0]);
        assert_eq!(f.eval(&far).unwrap(), 1.0);
        assert_eq!(f.bound(), 1.0);
        // Clamping: an atom at 1e9 acts as 1e6, so a center at 1e6 is hit
        // exactly.
        let f = FunctionalSpec::MeanPenalty { c: vec![MEAN_CLAMP], cap: 1.0 };
        assert_eq!(f.eval(&DiscreteMeasure::delta(vec![1e9])).unwrap(), 0.0);
        let g = FunctionalSpec::DblPenalty {
            target: DiscreteMeasure::delta(vec![0.0]),
            cap: 5.0,
        };
        assert!(g.bound() <= 2.0);
        assert_eq!(g.eval(&DiscreteMeasure::delta(vec![0.0])).unwrap(), 0.0);
    }

    #[test]
    fn laplace_constants_are_exact() {
        let model = quadratic(1);
        let sched = NoiseSchedule::Power(0.25);
        let zero = laplace_estimate(&model, &sched, &FunctionalSpec::Zero, 0.1, 8, 1).unwrap();
        assert_eq!(zero.estimate, 0.0);
        assert_eq!(zero.std_error, 0.0);
        let c = laplace_estimate(
            &model,
            &sched,
            &FunctionalSpec::Constant(0.7),
            0.1,
            8,
            1,
        )
        .unwrap();
        assert!((c.estimate - 0.7).abs() < 1e-12);
    }

    #[test]
    fn laplace_respects_bounds_and_monotonicity() {
        let model = quadratic(1);
        let sched = NoiseSchedule::Power(0.25);
        let small = FunctionalSpec::MeanPenalty { c: vec![1.0], cap: 0.5 };
        let large = FunctionalSpec::MeanPenalty { c: vec![1.0], cap: 1.0 };
        let a = laplace_estimate(&model, &sched, &small, 0.05, 32, 3).unwrap();
        let b = laplace_estimate(&model, &sched, &large, 0.05, 32, 3).unwrap();
        assert!(a.estimate <= small.bound() + a.std_error);
        assert!(a.estimate >= -small.bound());
        // F <= G pointwise on the same samples: the estimates order exactly.
        assert!(a.estimate <= b.estimate + 1e-12);
    }

    #[test]
    fn variational_zero_functional_sits_at_the_origin() {
        let model = quadratic(1);
        let res =
            variational_value(&model, &FunctionalSpec::Zero, &SearchFamily::default())
                .unwrap();
        assert_eq!(res.value, 0.0);
        assert_eq!(res.argmin.atoms.len(), 1);
        assert_eq!(res.argmin.atoms[0].0[0], 0.0);
    }

    #[test]
    fn variational_quadratic_penalty_matches_calculus() {
        let model = quadratic(1);
        let f = FunctionalSpec::MeanPenalty { c: vec![1.0], cap: 1.0 };
        let res = variational_value(&model, &f, &SearchFamily::default()).unwrap();
        assert!((res.value - 1.0 / 3.0).abs() < 1e-3, "value {}", res.value);
        let best = &res.argmin;
        let mean = best.mean().unwrap()[0];
        assert!((mean - 2.0 / 3.0).abs() < 0.06, "argmin mean {mean}");
    }

    #[test]
    fn variational_dbl_penalty_to_origin_vanishes() {
        let model = quadratic(1);
        let f = FunctionalSpec::DblPenalty {
            target: DiscreteMeasure::delta(vec![0.0]),
            cap: 1.0,
        };
        let family = SearchFamily {
            two_atom: false,
            ..Default::default()
        };
        let res = variational_value(&model, &f, &family).unwrap();
        assert_eq!(res.value, 0.0);
        assert_eq!(res.argmin.atoms[0].0[0], 0.0);
    }

    #[test]
    fn variational_value_shrinks_with_a_finer_family() {
        let model = quadratic(1);
        let f = FunctionalSpec::MeanPenalty { c: vec![1.0], cap: 1.0 };
        let coarse = SearchFamily {
            step: 0.1,
            two_atom: false,
            ..Default::default()
        };
        let fine = SearchFamily {
            step: 0.05,
            two_atom: false,
            ..Default::default()
        };
        let vc = variational_value(&model, &f, &coarse).unwrap().value;
        let vf = variational_value(&model, &f, &fine).unwrap().value;
        assert!(vf <= vc + 1e-12);
    }

    #[test]
    fn lln_sweep_is_deterministic_and_decreasing() {
        let cfg = SweepConfig {
            experiment: Experiment::Lln,
            model: builtin("quadratic", &[]).unwrap(),
            schedule: NoiseSchedule::Power(0.25),
            eps_list: vec![0.2, 0.05],
            replicas: 8,
            seed: 11,
            target: None,
            travel: None,
            functional: None,
            plan: None,
            delta_exponent: 1.0 / 3.0,
        };
        let t1 = sweep(&cfg).unwrap();
        let t2 = sweep(&cfg).unwrap();
        assert_eq!(t1.to_csv(), t2.to_csv());
        assert_eq!(t1.header[2], "dbl_to_origin");
        assert_eq!(t1.rows.len(), 16);
        let coarse = t1.mean_where(0, 0.2, 2).unwrap();
        let fine = t1.mean_where(0, 0.05, 2).unwrap();
        assert!(fine < coarse, "means {coarse} -> {fine}");
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let mut cfg = SweepConfig {
            experiment: Experiment::Lln,
            model: builtin("quadratic", &[]).unwrap(),
            schedule: NoiseSchedule::Power(0.25),
            eps_list: vec![0.05, 0.2],
            replicas: 8,
            seed: 1,
            target: None,
            travel: None,
            functional: None,
            plan: None,
            delta_exponent: 1.0 / 3.0,
        };
        assert!(sweep(&cfg).is_err());
        cfg.eps_list = vec![0.2, 0.05];
        cfg.replicas = 0;
        assert!(sweep(&cfg).is_err());
    }

    #[test]
    fn config_bridge_builds_a_runnable_sweep() {
        let cfg = Config::parse_str(
            "experiment = laplace\nmodel = quadratic\neps.list = 0.2, 0.1\nreplicas = 8\n\
             seed = 5\nfunctional = mean_penalty\nfunctional.c = 1\nfunctional.cap = 1\n",
        )
        .unwrap();
        let sweep_cfg = sweep_config_from(&cfg).unwrap();
        assert_eq!(sweep_cfg.experiment, Experiment::Laplace);
        assert_eq!(sweep_cfg.replicas, 8);
        let table = sweep(&sweep_cfg).unwrap();
        assert_eq!(table.header, vec!["eps", "estimate", "std_error"]);
        assert_eq!(table.rows.len(), 2);
        for row in &table.rows {
            assert!(row[1].abs() <= 1.0 + row[2]);
        }
    }

    #[test]
    fn unknown_experiment_is_a_config_error() {
        let cfg = Config::parse_str("experiment = anneal\nmodel = quadratic\neps.list = 0.1\n")
            .unwrap();
        let err = match sweep_config_from(&cfg) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("expected a config error"),
        };
        assert!(err.contains("unknown experiment"), "{err}");
    }
}
