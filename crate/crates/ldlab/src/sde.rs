//! Forward Euler-Maruyama engines for both SDE families, uncontrolled and
//! controlled, with deterministic counter-based noise, running cost ledgers,
//! an exact Ornstein-Uhlenbeck transition sampler for validation, and the
//! clock change between the unit horizon and the long horizon.
//!
//! Controls are sampled at the left endpoint of each step. Any coordinate
//! exceeding 1e8 in absolute value aborts the run with diagnostics. Step
//! sizes are guarded against the stiff `O(1/eps)` drifts.

use crate::error::{Error, Result};
use crate::models::{MultiscaleModel, NoiseSchedule, SingleScaleModel};
use crate::rng::{channel, replica_seed, CounterRng};
use nalgebra::DMatrix;
use std::io::Write;

/// Abort threshold for a single state coordinate.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Uniform grid of `n` steps on `[start, horizon]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub start: f64,
    pub horizon: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(start: f64, horizon: f64, n: usize) -> Result<Self> {
        if !(horizon > start) || !start.is_finite() || !horizon.is_finite() {
            return Err(Error::invalid("time grid needs horizon > start"));
        }
        if n == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(TimeGrid { start, horizon, n })
    }

    /// Coarsest uniform grid on `[start, horizon]` with step at most
    /// `dt_max`.
    pub fn covering(start: f64, horizon: f64, dt_max: f64) -> Result<Self> {
        if !(dt_max > 0.0) {
            return Err(Error::invalid("dt_max must be positive"));
        }
        let n = ((horizon - start) / dt_max).ceil().max(1.0) as usize;
        TimeGrid::new(start, horizon, n)
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.start) / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + (self.horizon - self.start) * i as f64 / self.n as f64
    }
}

/// Discrete trajectory: state at every grid node, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub grid: TimeGrid,
    pub dim: usize,
    states: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, dim: usize, initial: &[f64]) -> Result<Self> {
        if initial.len() != dim || dim == 0 {
            return Err(Error::invalid("initial state dimension mismatch"));
        }
        let mut states = Vec::with_capacity((grid.n + 1) * dim);
        states.extend_from_slice(initial);
        Ok(Path { grid, dim, states })
    }

    /// Number of stored nodes (`n + 1` when complete).
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn push(&mut self, state: &[f64]) {
        debug_assert_eq!(state.len(), self.dim);
        self.states.extend_from_slice(state);
    }

    pub fn time(&self, i: usize) -> f64 {
        self.grid.node(i)
    }

    /// CSV with header `t,y_1,...,y_dim`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "t")?;
        for j in 1..=self.dim {
            write!(w, ",y_{j}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(w, "{}", self.time(i))?;
            for v in self.state(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Joint CSV for a slow-fast pair sharing one grid: header
/// `t,x_1,...,x_m,y_1,...,y_d`.
pub fn write_csv_multiscale<W: Write>(x: &Path, y: &Path, w: &mut W) -> std::io::Result<()> {
    write!(w, "t")?;
    for j in 1..=x.dim {
        write!(w, ",x_{j}")?;
    }
    for j in 1..=y.dim {
        write!(w, ",y_{j}")?;
    }
    writeln!(w)?;
    for i in 0..x.len().min(y.len()) {
        write!(w, "{}", x.time(i))?;
        for v in x.state(i) {
            write!(w, ",{v}")?;
        }
        for v in y.state(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Completed single-scale run: trajectory, per-step control vectors, and
/// the accumulated cost `(1/2) sum |v_j|^2 dt`.
#[derive(Clone, Debug)]
pub struct ControlledRun {
    pub path: Path,
    pub control_dim: usize,
    pub control_trace: Vec<f64>,
    pub cost: f64,
}

/// Completed slow-fast run with separate ledgers for the fast control `u`
/// and the slow control `v`.
#[derive(Clone, Debug)]
pub struct MultiscaleRun {
    pub x_path: Path,
    pub y_path: Path,
    pub u_trace: Vec<f64>,
    pub v_trace: Vec<f64>,
    pub u_cost: f64,
    pub v_cost: f64,
}

/// Refuses a step size above the guard, suggesting a step count that fits.
pub fn stiffness_guard(dt: f64, guard: f64, span: f64) -> Result<()> {
    if dt > guard {
        return Err(Error::StiffnessGuard {
            dt,
            guard,
            suggested_steps: (span / guard).ceil() as usize,
        });
    }
    Ok(())
}

/// Aborts on the first non-finite or absurdly large coordinate.
pub fn ensure_finite(step: usize, t: f64, state: &[f64]) -> Result<()> {
    for (coord, &v) in state.iter().enumerate() {
        if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                step,
                t,
                coord,
                value: v,
            });
        }
    }
    Ok(())
}

fn validate_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

/// Single-scale Euler-Maruyama:
///
/// ```text
/// Y_{j+1} = Y_j - (dt/eps) psi(Y_j) + (dt/eps) sigma(Y_j) v_j
///               + (s(eps)/sqrt(eps)) sigma(Y_j) dB_j,
/// ```
///
/// with `dB_j ~ N(0, dt I_r)` from the seeded stream and the optional
/// feedback `v_j = control(t_j, Y_j)`. Guard: `dt <= eps/10`.
pub fn simulate_single(
    model: &SingleScaleModel,
    sched: &NoiseSchedule,
    eps: f64,
    grid: &TimeGrid,
    seed: u64,
    mut control: Option<&mut dyn FnMut(f64, &[f64]) -> Vec<f64>>,
) -> Result<ControlledRun> {
    validate_eps(eps)?;
    let dt = grid.dt();
    stiffness_guard(dt, eps / 10.0, grid.horizon - grid.start)?;
    let s = sched.eval(eps)?;
    let noise_scale = s / eps.sqrt() * dt.sqrt();
    let rng = CounterRng::new(seed, channel::FAST);

    let mut path = Path::new(*grid, model.d, &model.y0)?;
    let mut trace = Vec::with_capacity(grid.n * model.r);
    let mut cost = 0.0;
    let mut y = model.y0.clone();
    let mut db = vec![0.0; model.r];

    for j in 0..grid.n {
        let t = grid.node(j);
        let psi = (model.psi)(&y);
        let sig = (model.sigma)(&y);
        let v = match control.as_mut() {
            Some(c) => c(t, &y),
            None => vec![0.0; model.r],
        };
        if v.len() != model.r {
            return Err(Error::invalid("control dimension mismatch"));
        }
        cost += 0.5 * v.iter().map(|x| x * x).sum::<f64>() * dt;
        rng.fill_normals(j as u64, &mut db);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut incr = -dt / eps * psi[i];
            for l in 0..model.r {
                incr += sig[(i, l)] * (dt / eps * v[l] + noise_scale * db[l]);
            }
            *yi += incr;
        }
        ensure_finite(j + 1, grid.node(j + 1), &y)?;
        path.push(&y);
        trace.extend_from_slice(&v);
    }
    Ok(ControlledRun {
        path,
        control_dim: model.r,
        control_trace: trace,
        cost,
    })
}

/// Slow-fast Euler-Maruyama:
///
/// ```text
/// X_{j+1} = X_j + dt [b(X_j, Y_j) + alpha(X_j) v_j]
///               + s(eps) sqrt(eps) alpha(X_j) dW_j,
/// Y_{j+1} = Y_j - (dt/eps) [grad_y U(X_j, Y_j) - u_j]
///               + (s(eps)/sqrt(eps)) dB_j,
/// ```
///
/// with independent seeded streams for `W` and `B`, feedback
/// `u_j = u(t_j, X_j, Y_j)`, open-loop `v_j = v(t_j)`, and separate cost
/// ledgers. Guard: `dt <= eps/10`.
pub fn simulate_multiscale(
    model: &MultiscaleModel,
    sched: &NoiseSchedule,
    eps: f64,
    grid: &TimeGrid,
    seed: u64,
    mut u: Option<&mut dyn FnMut(f64, &[f64], &[f64]) -> Vec<f64>>,
    mut v: Option<&mut dyn FnMut(f64) -> Vec<f64>>,
) -> Result<MultiscaleRun> {
    validate_eps(eps)?;
    let dt = grid.dt();
    stiffness_guard(dt, eps / 10.0, grid.horizon - grid.start)?;
    let s = sched.eval(eps)?;
    let slow_scale = s * eps.sqrt() * dt.sqrt();
    let fast_scale = s / eps.sqrt() * dt.sqrt();
    let w_rng = CounterRng::new(seed, channel::SLOW);
    let b_rng = CounterRng::new(seed, channel::FAST);

    let mut x_path = Path::new(*grid, model.m, &model.x0)?;
    let mut y_path = Path::new(*grid, model.d, &model.y0)?;
    let mut u_trace = Vec::with_capacity(grid.n * model.d);
    let mut v_trace = Vec::with_capacity(grid.n * model.k);
    let (mut u_cost, mut v_cost) = (0.0, 0.0);
    let mut x = model.x0.clone();
    let mut y = model.y0.clone();
    let mut dw = vec![0.0; model.k];
    let mut db = vec![0.0; model.d];

    for j in 0..grid.n {
        let t = grid.node(j);
        let uj = match u.as_mut() {
            Some(f) => f(t, &x, &y),
            None => vec![0.0; model.d],
        };
        let vj = match v.as_mut() {
            Some(f) => f(t),
            None => vec![0.0; model.k],
        };
        if uj.len() != model.d || vj.len() != model.k {
            return Err(Error::invalid("control dimension mismatch"));
        }
        u_cost += 0.5 * uj.iter().map(|a| a * a).sum::<f64>() * dt;
        v_cost += 0.5 * vj.iter().map(|a| a * a).sum::<f64>() * dt;
        w_rng.fill_normals(j as u64, &mut dw);
        b_rng.fill_normals(j as u64, &mut db);

        let bx = (model.b)(&x, &y);
        let al = (model.alpha)(&x);
        let gy = (model.grad_y_u)(&x, &y);
        for (i, xi) in x.iter_mut().enumerate() {
            let mut incr = dt * bx[i];
            for l in 0..model.k {
                incr += al[(i, l)] * (dt * vj[l] + slow_scale * dw[l]);
            }
            *xi += incr;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += -dt / eps * (gy[i] - uj[i]) + fast_scale * db[i];
        }
        let t_next = grid.node(j + 1);
        ensure_finite(j + 1, t_next, &x)?;
        ensure_finite(j + 1, t_next, &y)?;
        x_path.push(&x);
        y_path.push(&y);
        u_trace.extend_from_slice(&uj);
        v_trace.extend_from_slice(&vj);
    }
    Ok(MultiscaleRun {
        x_path,
        y_path,
        u_trace,
        v_trace,
        u_cost,
        v_cost,
    })
}

/// Reinterprets a unit-horizon trajectory on the long clock: node times are
/// divided by `eps`, states are untouched.
pub fn time_rescale(path: &Path, eps: f64) -> Result<Path> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid("eps must be positive"));
    }
    Ok(Path {
        grid: TimeGrid {
            start: path.grid.start / eps,
            horizon: path.grid.horizon / eps,
            n: path.grid.n,
        },
        dim: path.dim,
        states: path.states.clone(),
    })
}

/// Exact transition sampling of the scalar Ornstein-Uhlenbeck process
/// `dY = -rate Y dt + noise_amp dB` from `y0`.
///
/// The stochastic integral over each step is split into its projection onto
/// the Euler increment `dB_j` (drawn from the same stream an Euler run with
/// this seed would use) plus an independent residual, so exact and Euler
/// paths are coupled pathwise and strong errors are measurable per replica.
pub fn ou_exact(rate: f64, noise_amp: f64, grid: &TimeGrid, seed: u64, y0: f64) -> Result<Path> {
    if !(rate > 0.0) {
        return Err(Error::invalid("rate must be positive"));
    }
    let dt = grid.dt();
    let decay = (-rate * dt).exp();
    // c dt = Cov(integral, dB); var_i = Var(integral).
    let c = (1.0 - decay) / (rate * dt);
    let var_i = (1.0 - (-2.0 * rate * dt).exp()) / (2.0 * rate);
    let resid_sd = (var_i - c * c * dt).max(0.0).sqrt();
    let b_rng = CounterRng::new(seed, channel::FAST);
    let r_rng = CounterRng::new(seed, channel::OU_RESIDUAL);

    let mut path = Path::new(*grid, 1, &[y0])?;
    let mut y = y0;
    for j in 0..grid.n {
        let db = dt.sqrt() * b_rng.normal(j as u64, 0);
        let eta = r_rng.normal(j as u64, 0);
        y = decay * y + noise_amp * (c * db + resid_sd * eta);
        ensure_finite(j + 1, grid.node(j + 1), &[y])?;
        path.push(&[y]);
    }
    Ok(path)
}

/// Runs `f(replica_seed, replica_index)` for every replica and collects the
/// results in replica order. Parallel when the `parallel` feature is on;
/// results are identical either way because every replica owns an
/// independent seeded stream.
pub fn map_replicas<T, F>(master_seed: u64, replicas: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, usize) -> Result<T> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..replicas)
            .into_par_iter()
            .map(|i| f(replica_seed(master_seed, i as u64), i))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..replicas)
            .map(|i| f(replica_seed(master_seed, i as u64), i))
            .collect()
    }
}

/// Identity matrix helper for models built in tests.
pub fn identity_field(d: usize) -> crate::models::MatrixField {
    std::sync::Arc::new(move |_: &[f64]| DMatrix::identity(d, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{quadratic, tracking, NoiseSchedule};
    use std::sync::Arc;

    fn no_noise(eps: f64) -> NoiseSchedule {
        NoiseSchedule::Table(vec![(eps, 0.0)])
    }

    #[test]
    fn grid_nodes_and_covering() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(4), 1.0);
        let c = TimeGrid::covering(0.0, 1.0, 0.3).unwrap();
        assert_eq!(c.n, 4);
        assert!(TimeGrid::new(0.0, 0.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn deterministic_decay_matches_exact_ode() {
        // Noise off, control off: the engine is explicit Euler for
        // y' = -y/eps; at eps = 1 the endpoint is e^{-1}.
        let mut m = quadratic(1);
        m.y0 = vec![1.0];
        let grid = TimeGrid::new(0.0, 1.0, 100_000).unwrap();
        let run = simulate_single(&m, &no_noise(1.0), 1.0, &grid, 7, None).unwrap();
        assert!((run.path.last_state()[0] - (-1.0f64).exp()).abs() < 1e-3);
        assert_eq!(run.path.len(), grid.n + 1);
        assert_eq!(run.cost, 0.0);
    }

    #[test]
    fn euler_endpoint_error_is_first_order_in_dt() {
        let mut m = quadratic(1);
        m.y0 = vec![1.0];
        let exact = (-1.0f64).exp();
        let mut errs = Vec::new();
        for n in [100, 200] {
            let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
            let run = simulate_single(&m, &no_noise(1.0), 1.0, &grid, 7, None).unwrap();
            errs.push((run.path.last_state()[0] - exact).abs());
        }
        let ratio = errs[0] / errs[1];
        assert!(errs[1] < errs[0]);
        assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn driftless_runs_accumulate_brownian_variance() {
        // psi = 0, sigma = 1: Y(1) - y0 is exactly a sum of Gaussian
        // increments with variance s^2 t / eps.
        let m = crate::models::SingleScaleModel::new(
            1,
            1,
            Arc::new(|_: &[f64]| vec![0.0]),
            identity_field(1),
            Arc::new(|_: &[f64]| 0.0),
            Some(Arc::new(|_: &[f64]| vec![0.0])),
            vec![0.0],
        )
        .unwrap();
        let eps = 0.5;
        let sched = NoiseSchedule::Table(vec![(eps, 1.0)]);
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let vals = map_replicas(99, 10_000, |seed, _| {
            Ok(simulate_single(&m, &sched, eps, &grid, seed, None)?
                .path
                .last_state()[0])
        })
        .unwrap();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (vals.len() - 1) as f64;
        let expect = 1.0 / eps;
        assert!(
            (var - expect).abs() < 0.05 * expect,
            "var {var} vs {expect}"
        );
    }

    #[test]
    fn same_seed_reproduces_paths_exactly() {
        let m = quadratic(1);
        let sched = NoiseSchedule::Power(0.25);
        let grid = TimeGrid::new(0.0, 1.0, 500).unwrap();
        let a = simulate_single(&m, &sched, 0.05, &grid, 42, None).unwrap();
        let b = simulate_single(&m, &sched, 0.05, &grid, 42, None).unwrap();
        assert_eq!(a.path, b.path);
        let c = simulate_single(&m, &sched, 0.05, &grid, 43, None).unwrap();
        assert_ne!(c.path, a.path);
    }

    #[test]
    fn stiffness_guard_names_a_sufficient_step_count() {
        let m = quadratic(1);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let err = simulate_single(&m, &no_noise(0.05), 0.05, &grid, 1, None).unwrap_err();
        match err {
            Error::StiffnessGuard {
                suggested_steps, ..
            } => assert!(suggested_steps >= 200),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn divergence_is_reported_with_step_index() {
        // Inverted potential: psi(y) = -64 y blows up from y0 = 1.
        let m = crate::models::SingleScaleModel::new(
            1,
            1,
            Arc::new(|y: &[f64]| vec![-64.0 * y[0]]),
            identity_field(1),
            Arc::new(|y: &[f64]| -32.0 * y[0] * y[0]),
            Some(Arc::new(|y: &[f64]| vec![-64.0 * y[0]])),
            vec![1.0],
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let err = simulate_single(&m, &no_noise(1.0), 1.0, &grid, 1, None).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn cost_ledger_is_exact_for_aligned_piecewise_controls() {
        let m = quadratic(1);
        let mut ctrl = |t: f64, _y: &[f64]| -> Vec<f64> {
            if t < 0.25 {
                vec![1.0]
            } else if t < 0.5 {
                vec![-2.0]
            } else {
                vec![0.5]
            }
        };
        // 1/2 (1 * 0.25 + 4 * 0.25 + 0.25 * 0.5) = 0.6875.
        let mut costs = Vec::new();
        for n in [100, 400] {
            let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
            let run =
                simulate_single(&m, &no_noise(0.5), 0.5, &grid, 3, Some(&mut ctrl)).unwrap();
            costs.push(run.cost);
        }
        assert!((costs[0] - 0.6875).abs() < 1e-12);
        assert!((costs[0] - costs[1]).abs() < 1e-12);
    }

    #[test]
    fn multiscale_tracks_the_averaged_flow() {
        let m = tracking();
        let eps = 1e-3;
        let grid = TimeGrid::covering(0.0, 1.0, eps / 10.0).unwrap();
        let run = simulate_multiscale(&m, &no_noise(eps), eps, &grid, 5, None, None).unwrap();
        let mut sup = 0.0f64;
        for i in 0..=grid.n {
            let t = grid.node(i);
            sup = sup.max((run.x_path.state(i)[0] - (-t / 2.0).exp()).abs());
        }
        assert!(sup < 0.02, "sup error {sup}");
    }

    #[test]
    fn fast_coordinate_relaxes_to_the_equilibrium_map() {
        let mut m = tracking();
        m.y0 = vec![1.5];
        let eps = 1e-3;
        let grid = TimeGrid::covering(0.0, 0.01, eps / 10.0).unwrap();
        let run = simulate_multiscale(&m, &no_noise(eps), eps, &grid, 5, None, None).unwrap();
        let x_end = run.x_path.last_state()[0];
        let y_end = run.y_path.last_state()[0];
        assert!((y_end - 0.5 * x_end).abs() < 0.05);
    }

    #[test]
    fn multiscale_cost_ledgers_are_separate() {
        let m = tracking();
        let mut u = |_t: f64, _x: &[f64], _y: &[f64]| vec![2.0];
        let mut v = |_t: f64| vec![1.0];
        let grid = TimeGrid::new(0.0, 1.0, 2000).unwrap();
        let run =
            simulate_multiscale(&m, &no_noise(0.1), 0.1, &grid, 5, Some(&mut u), Some(&mut v))
                .unwrap();
        assert!((run.u_cost - 2.0).abs() < 1e-12);
        assert!((run.v_cost - 0.5).abs() < 1e-12);
        assert_eq!(run.u_trace.len(), grid.n);
        assert_eq!(run.v_trace.len(), grid.n);
    }

    #[test]
    fn clock_change_divides_times_and_keeps_states() {
        let m = quadratic(1);
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let run = simulate_single(&m, &no_noise(0.5), 0.5, &grid, 11, None).unwrap();
        let long = time_rescale(&run.path, 0.01).unwrap();
        assert!((long.grid.horizon - 100.0).abs() < 1e-12);
        assert_eq!(long.state(7), run.path.state(7));
        let back = time_rescale(&long, 100.0).unwrap();
        assert!((back.grid.horizon - 1.0).abs() < 1e-12);
        assert_eq!(back.state(3), run.path.state(3));
    }

    #[test]
    fn exact_ou_decays_without_noise() {
        let grid = TimeGrid::new(0.0, 2.0, 40).unwrap();
        let p = ou_exact(1.5, 0.0, &grid, 9, 2.0).unwrap();
        for i in 0..=grid.n {
            let expect = 2.0 * (-1.5 * grid.node(i)).exp();
            assert!((p.state(i)[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_ou_matches_stationary_variance() {
        let grid = TimeGrid::new(0.0, 20.0, 200).unwrap();
        let vals = map_replicas(123, 10_000, |seed, _| {
            Ok(ou_exact(1.0, 1.0, &grid, seed, 0.0)?.last_state()[0])
        })
        .unwrap();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (vals.len() - 1) as f64;
        assert!((var - 0.5).abs() < 0.025, "var {var}");
    }

    #[test]
    fn euler_strong_error_against_exact_ou_is_first_order() {
        // Additive noise: Euler-Maruyama converges strongly at order 1, so
        // halving dt halves the RMS endpoint error. The coupled residual
        // construction makes the comparison pathwise.
        let mut m = quadratic(1);
        m.y0 = vec![1.0];
        let sched = NoiseSchedule::Table(vec![(1.0, 0.7)]);
        let mut rms = Vec::new();
        for n in [50, 100] {
            let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
            let errs = map_replicas(2024, 1000, |seed, _| {
                let euler = simulate_single(&m, &sched, 1.0, &grid, seed, None)?;
                let exact = ou_exact(1.0, 0.7, &grid, seed, 1.0)?;
                Ok((euler.path.last_state()[0] - exact.last_state()[0]).powi(2))
            })
            .unwrap();
            rms.push((errs.iter().sum::<f64>() / errs.len() as f64).sqrt());
        }
        let ratio = rms[0] / rms[1];
        assert!((1.7..=2.35).contains(&ratio), "strong error ratio {ratio}");
    }

    #[test]
    fn csv_headers_match_the_interface() {
        let m = quadratic(2);
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let run = simulate_single(&m, &no_noise(0.5), 0.5, &grid, 1, None).unwrap();
        let mut buf = Vec::new();
        run.path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,y_1,y_2\n"));
        assert_eq!(text.lines().count(), 22);

        let ms = tracking();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let run =
            simulate_multiscale(&ms, &no_noise(0.1), 0.1, &grid, 1, None, None).unwrap();
        let mut buf = Vec::new();
        write_csv_multiscale(&run.x_path, &run.y_path, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x_1,y_1\n"));
    }
}
