//! Plan pipeline and feedback synthesis for steering the slow/fast system:
//! simple near-optimal plans (piecewise-constant controls and measure
//! paths), the nested time partition that schedules atom visits for the
//! fast variable, the three-regime feedback law, and steered runs that
//! report cost ledgers and the fast space-time occupation measure.

use crate::error::{Error, Result};
use crate::measures::{
    dbl_distance, Cell, DiscreteMeasure, SpaceTimeAccumulator, SpaceTimeMeasure,
};
use crate::models::{MultiscaleModel, NoiseSchedule};
use crate::rng::{channel, replica_seed, CounterRng, UniformStream};
use crate::sde::{ensure_finite, stiffness_guard, Path, TimeGrid};
use serde::{Deserialize, Serialize};

const TIME_TOL: f64 = 1e-9;

/// Piecewise-constant plan on `[0, T]`: per interval `(t_i, t_{i+1}]` one
/// probability measure for the fast variable and one constant slow control.
/// `xi_star` is the solution of the plan ODE
/// `xi' = int b(xi, y) nu_t(dy) + alpha(xi) v(t)` once solved.
#[derive(Clone, Debug)]
pub struct PiecewisePlan {
    pub breakpoints: Vec<f64>,
    pub measures: Vec<DiscreteMeasure>,
    pub controls: Vec<Vec<f64>>,
    pub xi_star: Option<Path>,
}

/// JSON image of a plan: `{breakpoints, atoms, weights, controls}` with
/// `atoms[i][l]` the l-th location of interval i and `weights[i][l]` its
/// mass. `xi_star` is never serialized; re-solve after loading.
#[derive(Serialize, Deserialize)]
struct PlanJson {
    breakpoints: Vec<f64>,
    atoms: Vec<Vec<Vec<f64>>>,
    weights: Vec<Vec<f64>>,
    controls: Vec<Vec<f64>>,
}

impl PiecewisePlan {
    pub fn new(
        breakpoints: Vec<f64>,
        measures: Vec<DiscreteMeasure>,
        controls: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::invalid("plan needs at least one interval"));
        }
        if breakpoints[0].abs() > TIME_TOL {
            return Err(Error::invalid("plan breakpoints must start at 0"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("plan breakpoints must be strictly increasing"));
        }
        let n = breakpoints.len() - 1;
        if measures.len() != n || controls.len() != n {
            return Err(Error::invalid(format!(
                "plan with {n} intervals needs {n} measures and controls, got {} and {}",
                measures.len(),
                controls.len()
            )));
        }
        let dim = measures[0].dim;
        for m in &measures {
            m.validate()?;
            if m.dim != dim {
                return Err(Error::invalid("plan measures must share a dimension"));
            }
            if !m.is_probability() {
                return Err(Error::invalid("plan measures must be probability measures"));
            }
        }
        let k = controls[0].len();
        if controls.iter().any(|v| v.len() != k) {
            return Err(Error::invalid("plan controls must share a dimension"));
        }
        Ok(PiecewisePlan {
            breakpoints,
            measures,
            controls,
            xi_star: None,
        })
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn n_intervals(&self) -> usize {
        self.measures.len()
    }

    /// Index of the interval `(t_i, t_{i+1}]` containing `t`; `t = 0`
    /// belongs to the first (its single-point value has measure zero).
    pub fn interval_index(&self, t: f64) -> Result<usize> {
        if t < -TIME_TOL || t > self.horizon() + TIME_TOL {
            return Err(Error::invalid(format!(
                "time {t} outside the plan horizon [0, {}]",
                self.horizon()
            )));
        }
        let idx = self.breakpoints[1..].partition_point(|&b| b < t);
        Ok(idx.min(self.n_intervals() - 1))
    }

    pub fn measure_at(&self, t: f64) -> Result<&DiscreteMeasure> {
        Ok(&self.measures[self.interval_index(t)?])
    }

    pub fn control_at(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.controls[self.interval_index(t)?])
    }

    /// The plan's measure path as a space-time measure (cells = intervals).
    pub fn space_time(&self) -> Result<SpaceTimeMeasure> {
        let cells = self
            .breakpoints
            .windows(2)
            .zip(&self.measures)
            .map(|(w, m)| Cell {
                interval: (w[0], w[1]),
                slice: m.clone(),
            })
            .collect();
        SpaceTimeMeasure::new(self.measures[0].dim, self.horizon(), cells)
    }

    /// `1/2 sum_i |v_i|^2 (t_{i+1} - t_i)`, the slow control energy.
    pub fn control_cost(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(&self.controls)
            .map(|(w, v)| 0.5 * v.iter().map(|x| x * x).sum::<f64>() * (w[1] - w[0]))
            .sum()
    }

    pub fn to_json_string(&self) -> Result<String> {
        let img = PlanJson {
            breakpoints: self.breakpoints.clone(),
            atoms: self
                .measures
                .iter()
                .map(|m| m.atoms.iter().map(|(x, _)| x.clone()).collect())
                .collect(),
            weights: self
                .measures
                .iter()
                .map(|m| m.atoms.iter().map(|(_, w)| *w).collect())
                .collect(),
            controls: self.controls.clone(),
        };
        serde_json::to_string_pretty(&img)
            .map_err(|e| Error::invalid(format!("plan serialization failed: {e}")))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let img: PlanJson = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("plan JSON: {e}")))?;
        if img.atoms.len() != img.weights.len() {
            return Err(Error::invalid("plan JSON: atoms and weights disagree"));
        }
        let mut measures = Vec::with_capacity(img.atoms.len());
        for (locs, ws) in img.atoms.into_iter().zip(img.weights) {
            if locs.len() != ws.len() {
                return Err(Error::invalid("plan JSON: atoms and weights disagree"));
            }
            let dim = locs.first().map(|x| x.len()).unwrap_or(0);
            measures.push(DiscreteMeasure::new(
                dim,
                locs.into_iter().zip(ws).collect(),
            )?);
        }
        PiecewisePlan::new(img.breakpoints, measures, img.controls)
    }
}

/// Explicit Euler for `x' = rhs(t, x)` on `grid`.
fn euler_path(
    x0: &[f64],
    grid: &TimeGrid,
    mut rhs: impl FnMut(f64, &[f64]) -> Vec<f64>,
) -> Result<Path> {
    let dt = grid.dt();
    let mut x = x0.to_vec();
    let mut path = Path::new(*grid, x0.len(), &x)?;
    for j in 0..grid.n {
        let f = rhs(grid.node(j), &x);
        for (xi, fi) in x.iter_mut().zip(&f) {
            *xi += dt * fi;
        }
        ensure_finite(j + 1, grid.node(j + 1), &x)?;
        path.push(&x);
    }
    Ok(path)
}

/// Mean drift `int b(x, y) mu(dy)`.
fn averaged_drift(model: &MultiscaleModel, x: &[f64], mu: &DiscreteMeasure) -> Vec<f64> {
    let mut out = vec![0.0; model.m];
    for (y, w) in &mu.atoms {
        let b = (model.b)(x, y);
        for (o, bi) in out.iter_mut().zip(&b) {
            *o += w * bi;
        }
    }
    out
}

/// Solves the plan ODE on `grid`, stores the path in the plan, and returns
/// a copy. The grid must span `[0, horizon]`.
pub fn solve_xi_star(
    model: &MultiscaleModel,
    plan: &mut PiecewisePlan,
    grid: &TimeGrid,
) -> Result<Path> {
    if grid.start.abs() > TIME_TOL || (grid.horizon - plan.horizon()).abs() > TIME_TOL {
        return Err(Error::invalid("grid must span the plan horizon"));
    }
    let path = euler_path(&model.x0, grid, |t, x| {
        let i = plan.interval_index(t).expect("t within horizon");
        let mut f = averaged_drift(model, x, &plan.measures[i]);
        let al = (model.alpha)(x);
        for (r, fr) in f.iter_mut().enumerate() {
            for (l, vl) in plan.controls[i].iter().enumerate() {
                *fr += al[(r, l)] * vl;
            }
        }
        f
    })?;
    plan.xi_star = Some(path.clone());
    Ok(path)
}

/// Euler solve of the averaged dynamics `x' = b(x, theta(x))`.
pub fn averaged_ode(model: &MultiscaleModel, x0: &[f64], grid: &TimeGrid) -> Result<Path> {
    euler_path(x0, grid, |_, x| (model.b)(x, &(model.theta)(x)))
}

/// Step control on `[0, T]` with cells `(b_i, b_{i+1}]`; the value at
/// `t = 0` is the first cell's (measure-zero convention).
#[derive(Clone, Debug)]
pub struct StepControl {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl StepControl {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::invalid("step control needs one value per cell"));
        }
        if breakpoints[0].abs() > TIME_TOL || breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "step control breakpoints must increase from 0",
            ));
        }
        let k = values[0].len();
        if values.iter().any(|v| v.len() != k) {
            return Err(Error::invalid("step control values must share a dimension"));
        }
        Ok(StepControl {
            breakpoints,
            values,
        })
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        let idx = self.breakpoints[1..].partition_point(|&b| b < t);
        &self.values[idx.min(self.values.len() - 1)]
    }

    fn min_cell_width(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Control sampled at the nodes of a working grid.
#[derive(Clone, Debug)]
pub struct SampledControl {
    pub grid: TimeGrid,
    pub values: Vec<Vec<f64>>,
}

impl SampledControl {
    /// Left-endpoint quadrature of `1/2 int |v|^2`.
    pub fn l2_cost(&self) -> f64 {
        let dt = self.grid.dt();
        self.values[..self.grid.n]
            .iter()
            .map(|v| 0.5 * v.iter().map(|x| x * x).sum::<f64>() * dt)
            .sum()
    }
}

/// Measure path sampled at the nodes of a working grid.
#[derive(Clone, Debug)]
pub struct SampledMeasurePath {
    pub grid: TimeGrid,
    pub measures: Vec<DiscreteMeasure>,
}

/// Probability mixture `sum_i w_i mu_i` (weights summing to 1).
fn mixture(parts: &[(f64, &DiscreteMeasure)], dim: usize) -> Result<DiscreteMeasure> {
    let mut atoms = Vec::new();
    for (w, m) in parts {
        if *w <= 0.0 {
            continue;
        }
        for (loc, mass) in &m.atoms {
            atoms.push((loc.clone(), w * mass));
        }
    }
    Ok(DiscreteMeasure::new(dim, atoms)?.merged())
}

/// Running-average mollification: `v_eta(s) = (1/eta) int_{s-eta}^s v~`,
/// with `v~ = 0` and the measure path frozen at its first slice for
/// negative times. Both outputs are sampled at the nodes of `grid`.
pub fn mollify_plan(
    v: &StepControl,
    nu: &SpaceTimeMeasure,
    eta: f64,
    grid: &TimeGrid,
) -> Result<(SampledControl, SampledMeasurePath)> {
    let horizon = v.horizon();
    if (nu.horizon - horizon).abs() > TIME_TOL {
        return Err(Error::invalid("control and measure horizons disagree"));
    }
    if grid.start.abs() > TIME_TOL || (grid.horizon - horizon).abs() > TIME_TOL {
        return Err(Error::invalid("working grid must span the plan horizon"));
    }
    let min_width = v
        .min_cell_width()
        .min(nu.cells.iter().map(|c| c.interval.1 - c.interval.0).fold(f64::INFINITY, f64::min));
    if !(eta > 0.0 && eta < min_width) {
        return Err(Error::invalid(format!(
            "eta {eta} must lie in (0, {min_width}) (the minimum cell width)"
        )));
    }
    let k = v.dim();
    let dim = nu.dim;
    let mut values = Vec::with_capacity(grid.n + 1);
    let mut measures = Vec::with_capacity(grid.n + 1);
    for j in 0..=grid.n {
        let s = grid.node(j);
        let lo = s - eta;
        // Control: exact window integral of the step function, zero below 0.
        let mut acc = vec![0.0; k];
        for (cell, val) in v.breakpoints.windows(2).zip(&v.values) {
            let overlap = (s.min(cell[1]) - lo.max(cell[0])).max(0.0);
            if overlap > 0.0 {
                for (a, x) in acc.iter_mut().zip(val) {
                    *a += overlap * x;
                }
            }
        }
        for a in acc.iter_mut() {
            *a /= eta;
        }
        values.push(acc);
        // Measure: mixture of cell slices by window overlap; the portion of
        // the window below 0 contributes the first slice.
        let mut parts: Vec<(f64, &DiscreteMeasure)> = Vec::new();
        let below = (0.0 - lo).max(0.0).min(eta);
        if below > 0.0 {
            parts.push((below / eta, &nu.cells[0].slice));
        }
        for cell in &nu.cells {
            let overlap = (s.min(cell.interval.1) - lo.max(cell.interval.0)).max(0.0);
            if overlap > 0.0 {
                parts.push((overlap / eta, &cell.slice));
            }
        }
        measures.push(mixture(&parts, dim)?);
    }
    Ok((
        SampledControl { grid: *grid, values },
        SampledMeasurePath { grid: *grid, measures },
    ))
}

/// Time-discretizes sampled (continuous) data into a piecewise plan with
/// breakpoints `i * gamma` (plus the horizon): per-interval time-averaged
/// measures, controls sampled at the interval starts, and the plan ODE
/// re-solved on the working grid from `xi`'s initial state.
pub fn make_piecewise(
    model: &MultiscaleModel,
    xi: &Path,
    v: &SampledControl,
    mu: &SampledMeasurePath,
    gamma: f64,
) -> Result<PiecewisePlan> {
    let horizon = v.grid.horizon;
    if !(gamma > 0.0 && gamma < horizon) {
        return Err(Error::invalid(format!(
            "gamma {gamma} must lie in (0, horizon {horizon})"
        )));
    }
    if (mu.grid.horizon - horizon).abs() > TIME_TOL || mu.grid.n != v.grid.n {
        return Err(Error::invalid("control and measure share the working grid"));
    }
    let k = (horizon / gamma).floor() as usize;
    let mut breakpoints: Vec<f64> = (0..=k).map(|i| i as f64 * gamma).collect();
    if horizon - breakpoints[k] > TIME_TOL {
        breakpoints.push(horizon);
    } else {
        breakpoints[k] = horizon;
    }
    let dt = v.grid.dt();
    let dim = mu.measures[0].dim;
    let mut measures = Vec::with_capacity(breakpoints.len() - 1);
    let mut controls = Vec::with_capacity(breakpoints.len() - 1);
    for w in breakpoints.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let j_lo = (lo / dt).ceil() as usize;
        let j_hi = (((hi - TIME_TOL) / dt).ceil() as usize).min(v.grid.n + 1);
        if j_lo >= j_hi {
            return Err(Error::invalid(
                "gamma is below the working grid resolution",
            ));
        }
        let weight = 1.0 / (j_hi - j_lo) as f64;
        let parts: Vec<(f64, &DiscreteMeasure)> = (j_lo..j_hi)
            .map(|j| (weight, &mu.measures[j]))
            .collect();
        measures.push(mixture(&parts, dim)?);
        controls.push(v.values[j_lo].clone());
    }
    let mut plan = PiecewisePlan::new(breakpoints, measures, controls)?;
    let mut model_from_xi = model.clone();
    model_from_xi.x0 = xi.state(0).to_vec();
    solve_xi_star(&model_from_xi, &mut plan, &TimeGrid::new(0.0, horizon, v.grid.n)?)?;
    Ok(plan)
}

/// Stage report of [`discretize_plan`]: the worst-interval drift-integral
/// change along the previous `xi_star`, the change of the static gradient
/// cost, and the worst-interval bounded-Lipschitz change.
#[derive(Clone, Copy, Debug)]
pub struct DiscretizeReport {
    pub drift_gap: f64,
    pub cost_gap: f64,
    pub dbl_gap: f64,
}

/// Supports above this size are coarsened (bin width 2e-3, bound 1e-3)
/// before the exact bounded-Lipschitz program.
const DBL_COARSEN_SUPPORT: usize = 3000;
const DBL_COARSEN_H: f64 = 2e-3;

fn dbl_gap_bounded(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    let reduce = |m: &DiscreteMeasure| -> Result<DiscreteMeasure> {
        if m.support_size() > DBL_COARSEN_SUPPORT {
            Ok(m.coarsen(DBL_COARSEN_H)?.measure)
        } else {
            Ok(m.clone())
        }
    };
    dbl_distance(&reduce(a)?, &reduce(b)?)
}

/// Replaces every per-interval measure whose support exceeds `n_atoms` by
/// an `n_atoms`-point empirical resample of itself; small supports are
/// kept. Re-solves the plan ODE and reports the three stage gaps relative
/// to the input plan.
pub fn discretize_plan(
    model: &MultiscaleModel,
    plan: &PiecewisePlan,
    n_atoms: usize,
    seed: u64,
) -> Result<(PiecewisePlan, DiscretizeReport)> {
    if n_atoms == 0 {
        return Err(Error::invalid("need at least one atom"));
    }
    let xi_old = match &plan.xi_star {
        Some(p) => p.clone(),
        None => {
            let grid = TimeGrid::covering(0.0, plan.horizon(), plan.horizon() / 2000.0)?;
            let mut tmp = plan.clone();
            solve_xi_star(model, &mut tmp, &grid)?
        }
    };
    let mut new_measures = Vec::with_capacity(plan.n_intervals());
    let mut dbl_gap: f64 = 0.0;
    for (i, m) in plan.measures.iter().enumerate() {
        if m.support_size() <= n_atoms {
            new_measures.push(m.clone());
            continue;
        }
        let resampled = resample_measure(m, n_atoms, replica_seed(seed, i as u64))?;
        dbl_gap = dbl_gap.max(dbl_gap_bounded(m, &resampled)?);
        new_measures.push(resampled);
    }
    let mut new_plan = PiecewisePlan::new(
        plan.breakpoints.clone(),
        new_measures,
        plan.controls.clone(),
    )?;
    solve_xi_star(model, &mut new_plan, &xi_old.grid)?;

    // Drift gap: sup over grid nodes of the averaged-drift change along the
    // previous xi_star; cost gap: static gradient cost along the same path.
    let mut drift_gap: f64 = 0.0;
    for j in 0..=xi_old.grid.n {
        let t = xi_old.time(j);
        let x = xi_old.state(j);
        let i = plan.interval_index(t)?;
        let old = averaged_drift(model, x, &plan.measures[i]);
        let new = averaged_drift(model, x, &new_plan.measures[i]);
        let diff = old
            .iter()
            .zip(&new)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        drift_gap = drift_gap.max(diff);
    }
    let old_static = crate::rate::static_cost(model, &xi_old, &plan.space_time()?)?;
    let new_static = crate::rate::static_cost(model, &xi_old, &new_plan.space_time()?)?;
    let report = DiscretizeReport {
        drift_gap,
        cost_gap: (new_static - old_static).abs(),
        dbl_gap,
    };
    Ok((new_plan, report))
}

/// `n` iid draws from a discrete distribution (inverse CDF), merged.
fn resample_measure(m: &DiscreteMeasure, n: usize, seed: u64) -> Result<DiscreteMeasure> {
    let total = m.total_mass();
    let mut cum = Vec::with_capacity(m.atoms.len());
    let mut acc = 0.0;
    for (_, w) in &m.atoms {
        acc += w / total;
        cum.push(acc);
    }
    let mut stream = UniformStream::new(seed, channel::SAMPLING);
    let w = 1.0 / n as f64;
    let mut atoms = Vec::with_capacity(n);
    for _ in 0..n {
        let u = stream.next_uniform();
        let idx = cum.partition_point(|&c| c < u).min(m.atoms.len() - 1);
        atoms.push((m.atoms[idx].0.clone(), w));
    }
    Ok(DiscreteMeasure::new(m.dim, atoms)?.merged())
}

/// One scheduling cell `(start, start + len]` inside a plan interval:
/// `visit_times[l] = start + P_l * len` walks the cumulative target
/// weights, so window `l` (between visits `l` and `l+1`) serves atom `l`.
#[derive(Clone, Debug)]
pub struct SubCell {
    pub start: f64,
    pub len: f64,
    pub visit_times: Vec<f64>,
}

/// Partition of one plan interval: `n_cells` full cells of width `delta`
/// followed by the remainder tail `(tail_start, end]` (possibly empty),
/// which relaxes the fast variable instead of cycling atoms.
#[derive(Clone, Debug)]
pub struct IntervalPartition {
    pub start: f64,
    pub end: f64,
    pub n_cells: usize,
    pub cells: Vec<SubCell>,
    pub tail_start: f64,
}

/// Full scheduling hierarchy for a plan at one noise level.
#[derive(Clone, Debug)]
pub struct PartitionPlan {
    pub eps: f64,
    pub delta: f64,
    pub travel: f64,
    pub horizon: f64,
    pub cum_weights: Vec<Vec<f64>>,
    pub intervals: Vec<IntervalPartition>,
}

/// Control regime at a given time: travel and hold windows are keyed by
/// (interval, cell, atom); the tail covers the interval remainder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Travel { interval: usize, cell: usize, atom: usize },
    Hold { interval: usize, cell: usize, atom: usize },
    Tail { interval: usize },
}

/// Builds the visit schedule with cell width `delta = eps^a`. Every
/// violated precondition is named: `sqrt(eps) < delta`, `delta < 1`,
/// `delta^2/eps > 1`, and `min weight > eps` (so each hold window is
/// longer than its travel prefix).
pub fn build_partition(plan: &PiecewisePlan, eps: f64, a: f64) -> Result<PartitionPlan> {
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::invalid("delta exponent a must lie in (0, 1/2)"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps must lie in (0, 1)"));
    }
    let delta = eps.powf(a);
    if eps.sqrt() >= delta {
        return Err(Error::invalid(format!(
            "sqrt(eps) < delta violated: sqrt({eps}) >= {delta}"
        )));
    }
    if delta >= 1.0 {
        return Err(Error::invalid(format!("delta < 1 violated: delta = {delta}")));
    }
    if delta * delta / eps <= 1.0 {
        return Err(Error::invalid(format!(
            "delta^2/eps > 1 violated: {}",
            delta * delta / eps
        )));
    }
    let min_w = plan
        .measures
        .iter()
        .flat_map(|m| m.atoms.iter().map(|(_, w)| *w))
        .fold(f64::INFINITY, f64::min);
    if min_w <= eps {
        return Err(Error::invalid(format!(
            "min weight > eps violated: {min_w} <= {eps}"
        )));
    }
    let mut cum_weights = Vec::with_capacity(plan.n_intervals());
    for m in &plan.measures {
        let mut cum = vec![0.0];
        let mut acc = 0.0;
        for (_, w) in &m.atoms {
            acc += w;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        cum_weights.push(cum);
    }
    let mut intervals = Vec::with_capacity(plan.n_intervals());
    for (i, w) in plan.breakpoints.windows(2).enumerate() {
        let (start, end) = (w[0], w[1]);
        // The +1e-9 absorbs roundoff in delta = eps^a so an interval that
        // is a whole number of cells in exact arithmetic stays one here.
        let n_cells = ((end - start) / delta + 1e-9).floor() as usize;
        let mut cells = Vec::with_capacity(n_cells);
        for j in 0..n_cells {
            let s = start + j as f64 * delta;
            let visit_times = cum_weights[i].iter().map(|p| s + p * delta).collect();
            cells.push(SubCell {
                start: s,
                len: delta,
                visit_times,
            });
        }
        let tail_start = start + n_cells as f64 * delta;
        intervals.push(IntervalPartition {
            start,
            end,
            n_cells,
            cells,
            tail_start: tail_start.min(end),
        });
    }
    Ok(PartitionPlan {
        eps,
        delta,
        travel: eps * delta,
        horizon: plan.horizon(),
        cum_weights,
        intervals,
    })
}

impl PartitionPlan {
    /// Control regime at time `t`. Intervals, cells, and atom windows are
    /// all half-open `(lo, hi]`; `t = 0` starts the first travel window.
    pub fn locate(&self, t: f64) -> Result<Phase> {
        if t < -TIME_TOL || t > self.horizon + TIME_TOL {
            return Err(Error::invalid(format!(
                "time {t} outside the plan horizon [0, {}]",
                self.horizon
            )));
        }
        let i = self
            .intervals
            .partition_point(|iv| iv.end < t)
            .min(self.intervals.len() - 1);
        let iv = &self.intervals[i];
        if iv.cells.is_empty() || t > iv.tail_start {
            return Ok(Phase::Tail { interval: i });
        }
        let j = iv
            .cells
            .partition_point(|c| c.start + c.len < t)
            .min(iv.cells.len() - 1);
        let cell = &iv.cells[j];
        let n_atoms = cell.visit_times.len() - 1;
        let l = cell
            .visit_times
            .partition_point(|&v| v < t)
            .saturating_sub(1)
            .min(n_atoms - 1);
        if t - cell.visit_times[l] <= self.travel {
            Ok(Phase::Travel { interval: i, cell: j, atom: l })
        } else {
            Ok(Phase::Hold { interval: i, cell: j, atom: l })
        }
    }
}

/// Slow/fast states recorded at the first evaluation inside each
/// (interval, cell, atom) window; travel aims from the recorded fast
/// state, hold corrections freeze the recorded slow state.
#[derive(Clone, Debug, Default)]
pub struct MsAnchors {
    window: Option<(usize, usize, usize)>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl MsAnchors {
    pub fn new() -> Self {
        MsAnchors::default()
    }

    /// Pre-seeds the store, for direct evaluation of hold windows.
    pub fn seed(window: (usize, usize, usize), x: Vec<f64>, y: Vec<f64>) -> Self {
        MsAnchors {
            window: Some(window),
            x,
            y,
        }
    }
}

/// The fast-variable feedback law. Travel: cancel the potential gradient
/// and transport to the window's atom at speed `(atom - y_anchor)/delta`.
/// Hold: cancel only the drift mismatch caused by the slow state moving
/// since the window started, pinning the atom exactly. Tail: relax the
/// fast variable (closed-loop drift `-y/eps`).
pub fn feedback_u(
    model: &MultiscaleModel,
    plan: &PiecewisePlan,
    partition: &PartitionPlan,
    t: f64,
    x: &[f64],
    y: &[f64],
    anchors: &mut MsAnchors,
) -> Result<Vec<f64>> {
    match partition.locate(t)? {
        Phase::Travel { interval, cell, atom } => {
            let key = (interval, cell, atom);
            if anchors.window != Some(key) {
                anchors.window = Some(key);
                anchors.x = x.to_vec();
                anchors.y = y.to_vec();
            }
            let target = &plan.measures[interval].atoms[atom].0;
            let mut u = (model.grad_y_u)(x, y);
            for ((ui, yt), ya) in u.iter_mut().zip(target).zip(&anchors.y) {
                *ui += (yt - ya) / partition.delta;
            }
            Ok(u)
        }
        Phase::Hold { interval, cell, atom } => {
            let key = (interval, cell, atom);
            if anchors.window != Some(key) {
                return Err(Error::invalid(format!(
                    "hold window {key:?} entered without an anchor"
                )));
            }
            let target = &plan.measures[interval].atoms[atom].0;
            let mut u = (model.grad_y_u)(x, y);
            let at_anchor_y = (model.grad_y_u)(&anchors.x, y);
            let at_anchor_target = (model.grad_y_u)(&anchors.x, target);
            for ((ui, a), b) in u.iter_mut().zip(&at_anchor_y).zip(&at_anchor_target) {
                *ui += b - a;
            }
            Ok(u)
        }
        Phase::Tail { .. } => {
            let mut u = (model.grad_y_u)(x, y);
            for (ui, yi) in u.iter_mut().zip(y) {
                *ui -= yi;
            }
            Ok(u)
        }
    }
}

/// Knobs for a steered run: spatial bin width and cell count of the
/// streamed fast occupation measure, the stride between occupation
/// samples, and whether to keep full trajectories.
#[derive(Clone, Debug)]
pub struct MsSteeredOptions {
    pub bin_width: f64,
    pub lambda_cells: usize,
    pub lambda_stride: usize,
    pub store_paths: bool,
}

impl Default for MsSteeredOptions {
    fn default() -> Self {
        MsSteeredOptions {
            bin_width: 0.01,
            lambda_cells: 20,
            lambda_stride: 1,
            store_paths: false,
        }
    }
}

/// Completed steered multiscale run.
#[derive(Clone, Debug)]
pub struct MsSteeredOutcome {
    /// Space-time occupation measure of the fast variable.
    pub lambda: SpaceTimeMeasure,
    pub u_cost: f64,
    pub v_cost: f64,
    /// Portion of `u_cost` accrued in travel windows.
    pub travel_u_cost: f64,
    /// Fraction of hold time spent within 0.1 of the active atom.
    pub hold_occupation: f64,
    /// `sup_t |X(t) - xi_star(t)|` when the plan carries a solved path.
    pub sup_dist_xi: Option<f64>,
    pub x_final: Vec<f64>,
    pub x_path: Option<Path>,
    pub y_path: Option<Path>,
}

/// Linear interpolation of a stored path at an arbitrary time.
fn path_value(path: &Path, t: f64) -> Vec<f64> {
    let dt = path.grid.dt();
    let pos = ((t - path.grid.start) / dt).clamp(0.0, path.grid.n as f64);
    let j = (pos.floor() as usize).min(path.grid.n - 1);
    let frac = pos - j as f64;
    path.state(j)
        .iter()
        .zip(path.state(j + 1))
        .map(|(a, b)| a + frac * (b - a))
        .collect()
}

/// Simulates the slow/fast pair under the plan's slow control and
/// [`feedback_u`] on `[0, horizon]`. Guard: `dt <= eps^2 delta / 10`, so
/// every travel window (length `eps * delta`) is resolved by >= 10 steps.
#[allow(clippy::too_many_arguments)]
pub fn run_multiscale_steered(
    model: &MultiscaleModel,
    plan: &PiecewisePlan,
    partition: &PartitionPlan,
    sched: &NoiseSchedule,
    eps: f64,
    grid: &TimeGrid,
    seed: u64,
    opts: &MsSteeredOptions,
) -> Result<MsSteeredOutcome> {
    if (partition.eps - eps).abs() > 1e-15 {
        return Err(Error::invalid("partition was built for a different eps"));
    }
    if grid.start.abs() > TIME_TOL || (grid.horizon - plan.horizon()).abs() > TIME_TOL {
        return Err(Error::invalid("grid must span the plan horizon"));
    }
    let dt = grid.dt();
    stiffness_guard(dt, eps * eps * partition.delta / 10.0, plan.horizon())?;
    let s = sched.eval(eps)?;
    let slow_scale = s * eps.sqrt() * dt.sqrt();
    let fast_scale = s / eps.sqrt() * dt.sqrt();
    let slow_rng = CounterRng::new(seed, channel::SLOW);
    let fast_rng = CounterRng::new(seed, channel::FAST);

    let mut x = model.x0.clone();
    let mut y = model.y0.clone();
    let mut anchors = MsAnchors::new();
    let mut acc = SpaceTimeAccumulator::new(
        model.d,
        plan.horizon(),
        opts.lambda_cells,
        opts.bin_width,
    );
    let (mut x_path, mut y_path) = if opts.store_paths {
        (
            Some(Path::new(*grid, model.m, &x)?),
            Some(Path::new(*grid, model.d, &y)?),
        )
    } else {
        (None, None)
    };
    let (mut u_cost, mut v_cost, mut travel_u_cost) = (0.0, 0.0, 0.0);
    let (mut hold_time, mut hold_near) = (0.0, 0.0);
    let mut sup_dist: Option<f64> = plan.xi_star.as_ref().map(|_| 0.0);
    let mut dw = vec![0.0; model.k];
    let mut db = vec![0.0; model.d];

    for j in 0..grid.n {
        let t = grid.node(j);
        let phase = partition.locate(t)?;
        let u = feedback_u(model, plan, partition, t, &x, &y, &mut anchors)?;
        let i_plan = plan.interval_index(t)?;
        let v = &plan.controls[i_plan];

        let u_sq = 0.5 * u.iter().map(|a| a * a).sum::<f64>() * dt;
        u_cost += u_sq;
        v_cost += 0.5 * v.iter().map(|a| a * a).sum::<f64>() * dt;
        match phase {
            Phase::Travel { .. } => travel_u_cost += u_sq,
            Phase::Hold { interval, atom, .. } => {
                hold_time += dt;
                let target = &plan.measures[interval].atoms[atom].0;
                let dist_sq: f64 = y
                    .iter()
                    .zip(target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if dist_sq <= 0.01 {
                    hold_near += dt;
                }
            }
            Phase::Tail { .. } => {}
        }
        if j % opts.lambda_stride == 0 {
            acc.add(t, &y, dt * opts.lambda_stride as f64);
        }
        if let (Some(sup), Some(xi)) = (sup_dist.as_mut(), plan.xi_star.as_ref()) {
            let xi_t = path_value(xi, t);
            let d: f64 = x
                .iter()
                .zip(&xi_t)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d > *sup {
                *sup = d;
            }
        }

        let b = (model.b)(&x, &y);
        let al = (model.alpha)(&x);
        let g = (model.grad_y_u)(&x, &y);
        slow_rng.fill_normals(j as u64, &mut dw);
        fast_rng.fill_normals(j as u64, &mut db);
        for (r, xr) in x.iter_mut().enumerate() {
            let mut incr = dt * b[r];
            for l in 0..model.k {
                incr += al[(r, l)] * (dt * v[l] + slow_scale * dw[l]);
            }
            *xr += incr;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += -dt / eps * (g[i] - u[i]) + fast_scale * db[i];
        }
        ensure_finite(j + 1, grid.node(j + 1), &x)?;
        ensure_finite(j + 1, grid.node(j + 1), &y)?;
        if let Some(p) = x_path.as_mut() {
            p.push(&x);
        }
        if let Some(p) = y_path.as_mut() {
            p.push(&y);
        }
    }
    Ok(MsSteeredOutcome {
        lambda: acc.finish()?,
        u_cost,
        v_cost,
        travel_u_cost,
        hold_occupation: if hold_time > 0.0 { hold_near / hold_time } else { 0.0 },
        sup_dist_xi: sup_dist,
        x_final: x,
        x_path,
        y_path,
    })
}
