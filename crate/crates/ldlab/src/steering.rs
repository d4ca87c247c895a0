//! Feedback synthesis that drives the single-scale occupation measure onto
//! a prescribed discrete target at the asymptotic cost given by the rate
//! function.
//!
//! The unit horizon is split per target atom `x_i` (weight `p_i`) into a
//! short travel window that transports the state to the atom and a long
//! hold window that pins it there. Hold windows use the drift-shaping law
//! `v = sigma(y)^T a(y)^{-1} a(x_i) grad_phi(x_i)`, whose closed-loop drift
//! vanishes exactly at the atom; travel windows cancel the drift and add a
//! finite-energy transport profile along the straight line from the
//! recorded window-entry state to the atom.

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, OccupationAccumulator};
use crate::models::{NoiseSchedule, SingleScaleModel};
use crate::rng::{channel, CounterRng, UniformStream};
use crate::sde::{ensure_finite, stiffness_guard, Path, TimeGrid};
use nalgebra::DVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    Travel,
    Hold,
}

/// One control window `(start, end]`, aimed at target atom `atom`.
#[derive(Clone, Debug)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: f64,
    pub end: f64,
    pub atom: usize,
}

/// Deterministic visiting plan for the unit horizon: atoms in listed order,
/// cumulative switch times `P_i`, and the alternating travel/hold windows.
#[derive(Clone, Debug)]
pub struct SteeringSchedule {
    pub target: DiscreteMeasure,
    pub cum_times: Vec<f64>,
    pub travel_duration: f64,
    pub segments: Vec<Segment>,
}

/// Builds the schedule with the default travel duration `eps`.
pub fn build_schedule(target: &DiscreteMeasure, eps: f64) -> Result<SteeringSchedule> {
    build_schedule_with_travel(target, eps, eps)
}

/// Travel duration is exposed separately: any value below the minimum
/// target weight keeps every hold window nonempty.
pub fn build_schedule_with_travel(
    target: &DiscreteMeasure,
    eps: f64,
    travel: f64,
) -> Result<SteeringSchedule> {
    if !target.is_probability() {
        return Err(Error::invalid("steering target must be a probability measure"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps must lie in (0, 1)"));
    }
    let min_w = target
        .atoms
        .iter()
        .map(|(_, w)| *w)
        .fold(f64::INFINITY, f64::min);
    if !(travel > 0.0) || travel >= min_w {
        return Err(Error::invalid(format!(
            "travel duration {travel} must be positive and below the minimum target weight {min_w}"
        )));
    }
    let mut cum_times = vec![0.0];
    let mut segments = Vec::with_capacity(2 * target.atoms.len());
    let mut acc = 0.0;
    for (i, (_, w)) in target.atoms.iter().enumerate() {
        let start = acc;
        acc += w;
        let end = if i + 1 == target.atoms.len() { 1.0 } else { acc };
        cum_times.push(end);
        segments.push(Segment {
            kind: SegmentKind::Travel,
            start,
            end: start + travel,
            atom: i,
        });
        segments.push(Segment {
            kind: SegmentKind::Hold,
            start: start + travel,
            end,
            atom: i,
        });
    }
    Ok(SteeringSchedule {
        target: target.clone(),
        cum_times,
        travel_duration: travel,
        segments,
    })
}

impl SteeringSchedule {
    /// Index of the segment governing time `t`. Segments are `(start, end]`
    /// with `t = 0` assigned to the first.
    pub fn segment_index_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("time {t} outside [0, 1]")));
        }
        let idx = self.segments.partition_point(|s| s.end < t);
        Ok(idx.min(self.segments.len() - 1))
    }
}

/// Finite-energy transport profile along the straight line from `x_from`
/// to `x_to`, evaluated `local_t` into a travel window of length
/// `duration`: `sigma(z)^T a(z)^{-1} (x_to - x_from)` at the nominal point
/// `z = x_from + (local_t/duration)(x_to - x_from)`.
pub fn travel_control(
    model: &SingleScaleModel,
    x_from: &[f64],
    x_to: &[f64],
    duration: f64,
    local_t: f64,
) -> Result<Vec<f64>> {
    if !(duration > 0.0) {
        return Err(Error::invalid("travel duration must be positive"));
    }
    let tau = (local_t / duration).clamp(0.0, 1.0);
    let z: Vec<f64> = x_from
        .iter()
        .zip(x_to)
        .map(|(a, b)| a + tau * (b - a))
        .collect();
    let diff = DVector::from_iterator(model.d, x_to.iter().zip(x_from).map(|(b, a)| b - a));
    let sig = (model.sigma)(&z);
    let a_inv = model.a_inv(&z)?;
    Ok((sig.transpose() * a_inv * diff).iter().copied().collect())
}

/// Runtime anchor: the realized state recorded at the first evaluation
/// inside each segment. Travel windows aim from this state at their atom.
#[derive(Clone, Debug, Default)]
pub struct AnchorStore {
    segment: Option<usize>,
    state: Vec<f64>,
}

impl AnchorStore {
    pub fn new() -> Self {
        AnchorStore::default()
    }
}

/// The steering feedback law at time `t`, state `y`. The anchor store is
/// per-run mutable state; the schedule itself is immutable.
pub fn feedback_v(
    model: &SingleScaleModel,
    schedule: &SteeringSchedule,
    t: f64,
    y: &[f64],
    anchors: &mut AnchorStore,
) -> Result<Vec<f64>> {
    let idx = schedule.segment_index_at(t)?;
    if anchors.segment != Some(idx) {
        anchors.segment = Some(idx);
        anchors.state = y.to_vec();
    }
    let seg = &schedule.segments[idx];
    let atom = &schedule.target.atoms[seg.atom].0;
    match seg.kind {
        SegmentKind::Travel => {
            // Cancel the drift, then transport: v = sigma^T grad_phi (y)
            // plus the straight-line profile from the recorded entry state.
            let sig = (model.sigma)(y);
            let grad = DVector::from_column_slice(&(model.grad_phi)(y));
            let mut v: Vec<f64> = (sig.transpose() * grad).iter().copied().collect();
            let rho = travel_control(
                model,
                &anchors.state,
                atom,
                schedule.travel_duration,
                t - seg.start,
            )?;
            for (vi, ri) in v.iter_mut().zip(&rho) {
                *vi += ri;
            }
            Ok(v)
        }
        SegmentKind::Hold => {
            // v = sigma(y)^T a(y)^{-1} a(x) grad_phi(x) = sigma^T a^{-1}
            // psi(x); the closed-loop drift is then the stability field
            // -V_x(y - x)/eps, zero at the atom.
            let sig = (model.sigma)(y);
            let a_inv = model.a_inv(y)?;
            let psi_atom = DVector::from_column_slice(&(model.psi)(atom));
            Ok((sig.transpose() * a_inv * psi_atom).iter().copied().collect())
        }
    }
}

/// Knobs for a steered run. `bin_width` coarsens the streamed occupation
/// measure so long runs keep a desk-sized support; `store_path` keeps the
/// full trajectory (memory scales with the grid).
#[derive(Clone, Debug)]
pub struct SteeredOptions {
    pub bin_width: f64,
    pub store_path: bool,
}

impl Default for SteeredOptions {
    fn default() -> Self {
        SteeredOptions {
            bin_width: 0.01,
            store_path: false,
        }
    }
}

/// Completed steered run: binned occupation measure, cost ledger split by
/// window kind, and the trajectory when requested.
#[derive(Clone, Debug)]
pub struct SteeredOutcome {
    pub measure: DiscreteMeasure,
    pub cost: f64,
    pub travel_cost: f64,
    pub hold_cost: f64,
    pub final_state: Vec<f64>,
    pub path: Option<Path>,
}

/// Simulates the controlled process under [`feedback_v`] on `[0, 1]` and
/// returns the occupation measure and cost. Guard:
/// `dt <= eps * travel_duration / 10`, so every travel window is resolved
/// by at least 10 steps.
pub fn run_steered(
    model: &SingleScaleModel,
    schedule: &SteeringSchedule,
    sched: &NoiseSchedule,
    eps: f64,
    grid: &TimeGrid,
    seed: u64,
    opts: &SteeredOptions,
) -> Result<SteeredOutcome> {
    if grid.start.abs() > 1e-12 || (grid.horizon - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("steered runs live on the unit horizon"));
    }
    let dt = grid.dt();
    stiffness_guard(dt, eps * schedule.travel_duration / 10.0, 1.0)?;
    let s = sched.eval(eps)?;
    let noise_scale = s / eps.sqrt() * dt.sqrt();
    let rng = CounterRng::new(seed, channel::FAST);

    let mut y = model.y0.clone();
    let mut anchors = AnchorStore::new();
    let mut occ = OccupationAccumulator::new(model.d, opts.bin_width);
    let mut path = if opts.store_path {
        Some(Path::new(*grid, model.d, &y)?)
    } else {
        None
    };
    let (mut travel_cost, mut hold_cost) = (0.0, 0.0);
    let mut db = vec![0.0; model.r];

    for j in 0..grid.n {
        let t = grid.node(j);
        occ.add(&y, 1.0);
        let v = feedback_v(model, schedule, t, &y, &mut anchors)?;
        let idx = anchors.segment.expect("anchor set by feedback_v");
        let step_cost = 0.5 * v.iter().map(|x| x * x).sum::<f64>() * dt;
        match schedule.segments[idx].kind {
            SegmentKind::Travel => travel_cost += step_cost,
            SegmentKind::Hold => hold_cost += step_cost,
        }
        let psi = (model.psi)(&y);
        let sig = (model.sigma)(&y);
        rng.fill_normals(j as u64, &mut db);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut incr = -dt / eps * psi[i];
            for l in 0..model.r {
                incr += sig[(i, l)] * (dt / eps * v[l] + noise_scale * db[l]);
            }
            *yi += incr;
        }
        ensure_finite(j + 1, grid.node(j + 1), &y)?;
        if let Some(p) = path.as_mut() {
            p.push(&y);
        }
    }
    Ok(SteeredOutcome {
        measure: occ.finish(true)?,
        cost: travel_cost + hold_cost,
        travel_cost,
        hold_cost,
        final_state: y,
        path,
    })
}

/// Empirical measure `(1/n) sum delta_{sampler()}` from `n` independent
/// draws; duplicate locations are merged.
pub fn sample_target(
    mut sampler: impl FnMut(&mut UniformStream) -> Vec<f64>,
    n: usize,
    seed: u64,
) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let mut stream = UniformStream::new(seed, channel::SAMPLING);
    let mut atoms = Vec::with_capacity(n);
    let w = 1.0 / n as f64;
    let mut dim = None;
    for _ in 0..n {
        let loc = sampler(&mut stream);
        match dim {
            None => dim = Some(loc.len()),
            Some(d) if d != loc.len() => {
                return Err(Error::invalid("sampler changed dimension"))
            }
            _ => {}
        }
        atoms.push((loc, w));
    }
    Ok(DiscreteMeasure::new(dim.unwrap(), atoms)?.merged())
}
