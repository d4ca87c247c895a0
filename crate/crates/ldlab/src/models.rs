//! Coefficient bundles for both SDE families, noise schedules, built-in
//! example models, and grid-certified checkers for the structural
//! assumptions the theory needs.
//!
//! The single-scale family is
//!
//! ```text
//! dY = -(1/eps) psi(Y) dt + (s(eps)/sqrt(eps)) sigma(Y) dB,
//! ```
//!
//! with `psi = a grad_phi`, `a = sigma sigma^T`. The slow-fast family is
//!
//! ```text
//! dX = b(X, Y) dt + s(eps) sqrt(eps) alpha(X) dW,
//! dY = -(1/eps) grad_y U(X, Y) dt + (s(eps)/sqrt(eps)) dB,
//! ```
//!
//! with fast equilibrium `theta(x)` solving `grad_y U(x, theta(x)) = 0`.
//!
//! Assumption checks are grid-certified, not proofs: each clause records the
//! tolerance and the worst witness found on a finite grid.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::fmt;
use std::sync::Arc;

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ScalarField2 = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type VectorField2 = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Step used by all finite-difference fallbacks.
pub const FD_STEP: f64 = 1e-5;

/// Ceiling accepted by the empirical Lipschitz clauses.
pub const LIPSCHITZ_CEILING: f64 = 10.0;

/// Horizon and tolerance of the trajectory stability probes.
pub const STABILITY_HORIZON: f64 = 50.0;
pub const STABILITY_TOL: f64 = 1e-3;

/// Vanishing noise amplitude multiplier `s(eps)`.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSchedule {
    /// `s(eps) = eps^a`, `a > 0`.
    Power(f64),
    /// `s(eps) = (log(1/eps))^(-1/2)`.
    LogInv,
    /// Explicit `(eps, s)` pairs, exact lookup. Mainly a testing device;
    /// `s = 0` disables noise.
    Table(Vec<(f64, f64)>),
}

impl NoiseSchedule {
    pub fn power(a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::invalid("power schedule needs exponent a > 0"));
        }
        Ok(NoiseSchedule::Power(a))
    }

    pub fn eval(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::invalid(format!("eps must be positive, got {eps}")));
        }
        match self {
            NoiseSchedule::Power(a) => Ok(eps.powf(*a)),
            NoiseSchedule::LogInv => {
                if eps >= 1.0 {
                    return Err(Error::invalid("log schedule needs eps < 1"));
                }
                Ok((1.0 / eps).ln().powf(-0.5))
            }
            NoiseSchedule::Table(pairs) => pairs
                .iter()
                .find(|(e, _)| (e - eps).abs() <= 1e-12)
                .map(|(_, s)| *s)
                .ok_or_else(|| Error::invalid(format!("eps = {eps} not in schedule table"))),
        }
    }
}

/// Single-scale coefficient bundle. Invariants certified by
/// [`check_single`]: `psi = a grad_phi`, `grad_phi(0) = 0`, `a` uniformly
/// nondegenerate on the grid.
#[derive(Clone)]
pub struct SingleScaleModel {
    pub d: usize,
    pub r: usize,
    pub psi: VectorField,
    pub sigma: MatrixField,
    pub phi: ScalarField,
    pub grad_phi: VectorField,
    pub hess_phi: Option<MatrixField>,
    /// Strongly convex potential generating the drift, when one is declared.
    /// The Lyapunov clause of the checker is skipped without it.
    pub phi_tilde: Option<ScalarField>,
    pub y0: Vec<f64>,
}

impl SingleScaleModel {
    /// Builds a bundle, deriving `grad_phi` by central differences of `phi`
    /// when no gradient is supplied.
    pub fn new(
        d: usize,
        r: usize,
        psi: VectorField,
        sigma: MatrixField,
        phi: ScalarField,
        grad_phi: Option<VectorField>,
        y0: Vec<f64>,
    ) -> Result<Self> {
        if d == 0 || r == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if y0.len() != d {
            return Err(Error::invalid("y0 dimension mismatch"));
        }
        let grad_phi = grad_phi.unwrap_or_else(|| {
            let phi = phi.clone();
            Arc::new(move |y: &[f64]| finite_diff_gradient(&*phi, y, FD_STEP)) as VectorField
        });
        Ok(SingleScaleModel {
            d,
            r,
            psi,
            sigma,
            phi,
            grad_phi,
            hess_phi: None,
            phi_tilde: None,
            y0,
        })
    }

    /// Diffusion matrix `a(y) = sigma(y) sigma(y)^T`.
    pub fn a(&self, y: &[f64]) -> DMatrix<f64> {
        let s = (self.sigma)(y);
        &s * s.transpose()
    }

    pub fn a_inv(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.a(y)
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("a(y) is singular at y = {y:?}")))
    }
}

/// Slow-fast coefficient bundle. `theta` is the fast equilibrium map;
/// `l_bounds = (L1, L2)` is an optional known coercivity pair with
/// `|grad_y U(x, y)|^2 >= L1 |y|^2 - L2` on the operating region.
#[derive(Clone)]
pub struct MultiscaleModel {
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub b: VectorField2,
    pub alpha: MatrixField,
    pub u_pot: ScalarField2,
    pub grad_y_u: VectorField2,
    pub theta: VectorField,
    pub l_bounds: Option<(f64, f64)>,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

impl MultiscaleModel {
    /// Builds a bundle, deriving `grad_y_u` by central differences of
    /// `u_pot` in its second argument when no gradient is supplied.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        d: usize,
        k: usize,
        b: VectorField2,
        alpha: MatrixField,
        u_pot: ScalarField2,
        grad_y_u: Option<VectorField2>,
        theta: VectorField,
        x0: Vec<f64>,
        y0: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 || d == 0 || k == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if x0.len() != m || y0.len() != d {
            return Err(Error::invalid("initial state dimension mismatch"));
        }
        let grad_y_u = grad_y_u.unwrap_or_else(|| {
            let u = u_pot.clone();
            Arc::new(move |x: &[f64], y: &[f64]| {
                let fx = |yy: &[f64]| u(x, yy);
                finite_diff_gradient(&fx, y, FD_STEP)
            }) as VectorField2
        });
        Ok(MultiscaleModel {
            m,
            d,
            k,
            b,
            alpha,
            u_pot,
            grad_y_u,
            theta,
            l_bounds: None,
            x0,
            y0,
        })
    }
}

/// `V_x(y) = a(x+y) grad_phi(x+y) - a(x) grad_phi(x)`; the closed-loop drift
/// field of the single-scale hold phase. Vanishes exactly at `y = 0`.
pub fn stability_field_single(model: &SingleScaleModel, x: &[f64], y: &[f64]) -> Vec<f64> {
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let lead = model.a(&xy) * DMatrix::from_column_slice(model.d, 1, &(model.grad_phi)(&xy));
    let base = model.a(x) * DMatrix::from_column_slice(model.d, 1, &(model.grad_phi)(x));
    (lead - base).column(0).iter().copied().collect()
}

/// `V_{x,z}(u) = grad_y U(x, u + z) - grad_y U(x, z)`; the fast stability
/// field of the slow-fast family. Vanishes exactly at `u = 0`.
pub fn stability_field_fast(
    model: &MultiscaleModel,
    x: &[f64],
    z: &[f64],
    u: &[f64],
) -> Vec<f64> {
    let uz: Vec<f64> = u.iter().zip(z).map(|(a, b)| a + b).collect();
    let lead = (model.grad_y_u)(x, &uz);
    let base = (model.grad_y_u)(x, z);
    lead.iter().zip(&base).map(|(a, b)| a - b).collect()
}

/// Central-difference gradient with step `h`.
pub fn finite_diff_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        out[i] = (up - down) / (2.0 * h);
    }
    out
}

/// Central-difference Jacobian (rows = outputs) with step `h`.
pub fn finite_diff_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let base_len = f(x).len();
    let mut rows = vec![vec![0.0; x.len()]; base_len];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        for i in 0..base_len {
            rows[i][j] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    rows
}

fn frobenius(rows: &[Vec<f64>]) -> f64 {
    rows.iter()
        .flat_map(|r| r.iter().map(|x| x * x))
        .sum::<f64>()
        .sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Rectangular evaluation grid for the checkers.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points_per_dim: usize,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points_per_dim: usize) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::invalid("grid bounds dimension mismatch"));
        }
        if points_per_dim < 2 {
            return Err(Error::invalid("grid needs at least 2 points per dimension"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::invalid("grid lower bound must be below upper bound"));
        }
        Ok(GridSpec {
            lo,
            hi,
            points_per_dim,
        })
    }

    /// `[-10, 10]^dim` with a per-dimension resolution that keeps the total
    /// point count desk-sized.
    pub fn default_for(dim: usize) -> Self {
        let ppd = match dim {
            1 => 401,
            2 => 41,
            _ => 11,
        };
        GridSpec {
            lo: vec![-10.0; dim],
            hi: vec![10.0; dim],
            points_per_dim: ppd,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Largest per-coordinate half-width of the box.
    pub fn radius(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (b - a))
            .fold(0.0, f64::max)
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let n = self.points_per_dim;
        let mut out = Vec::with_capacity(n.pow(dim as u32));
        let mut idx = vec![0usize; dim];
        loop {
            let p: Vec<f64> = (0..dim)
                .map(|i| self.lo[i] + (self.hi[i] - self.lo[i]) * idx[i] as f64 / (n - 1) as f64)
                .collect();
            out.push(p);
            let mut k = 0;
            loop {
                if k == dim {
                    return out;
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClauseStatus {
    Pass,
    Fail,
    NotChecked,
}

/// Verdict for one assumption clause: status, tolerance used, worst witness
/// found on the grid (location and offending value), and a detail line.
#[derive(Clone, Debug)]
pub struct ClauseReport {
    pub name: String,
    pub status: ClauseStatus,
    pub tolerance: f64,
    pub worst: Option<(Vec<f64>, f64)>,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct AssumptionReport {
    pub clauses: Vec<ClauseReport>,
}

impl AssumptionReport {
    /// True when no checked clause failed (unchecked clauses do not count).
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.status != ClauseStatus::Fail)
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseReport> {
        self.clauses.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            let status = match c.status {
                ClauseStatus::Pass => "PASS",
                ClauseStatus::Fail => "FAIL",
                ClauseStatus::NotChecked => "NOT CHECKED",
            };
            writeln!(f, "{:<24} {:<12} {}", c.name, status, c.detail)?;
        }
        Ok(())
    }
}

fn clause(
    name: &str,
    ok: bool,
    tol: f64,
    detail: String,
    worst: Option<(Vec<f64>, f64)>,
) -> ClauseReport {
    ClauseReport {
        name: name.into(),
        status: if ok {
            ClauseStatus::Pass
        } else {
            ClauseStatus::Fail
        },
        tolerance: tol,
        worst,
        detail,
    }
}

fn not_checked(name: &str, detail: &str) -> ClauseReport {
    ClauseReport {
        name: name.into(),
        status: ClauseStatus::NotChecked,
        tolerance: f64::NAN,
        worst: None,
        detail: detail.into(),
    }
}

/// Tracks the grid point with the extremal value of some scalar statistic.
/// A non-finite statistic always becomes the worst witness.
struct Extremum {
    minimize: bool,
    best: Option<(Vec<f64>, f64)>,
}

impl Extremum {
    fn min() -> Self {
        Extremum {
            minimize: true,
            best: None,
        }
    }

    fn max() -> Self {
        Extremum {
            minimize: false,
            best: None,
        }
    }

    fn offer(&mut self, loc: &[f64], value: f64) {
        let better = match &self.best {
            None => true,
            Some((_, cur)) if !cur.is_finite() => false,
            Some((_, cur)) => {
                !value.is_finite()
                    || if self.minimize {
                        value < *cur
                    } else {
                        value > *cur
                    }
            }
        };
        if better {
            self.best = Some((loc.to_vec(), value));
        }
    }

    fn value(&self) -> f64 {
        self.best.as_ref().map_or(f64::NAN, |(_, v)| *v)
    }

    fn take(self) -> Option<(Vec<f64>, f64)> {
        self.best
    }
}

/// Euler integration of `state' = -field(state)` used by the stability
/// probes. Returns the final state, or the blow-up location on divergence.
fn probe_trajectory(
    field: &dyn Fn(&[f64]) -> Vec<f64>,
    start: &[f64],
    horizon: f64,
    dt: f64,
) -> std::result::Result<Vec<f64>, Vec<f64>> {
    let steps = (horizon / dt).ceil() as usize;
    let mut state = start.to_vec();
    for _ in 0..steps {
        let v = field(&state);
        for (s, vi) in state.iter_mut().zip(&v) {
            *s -= dt * vi;
        }
        if state.iter().any(|s| !s.is_finite() || s.abs() > 1e8) {
            return Err(state);
        }
    }
    Ok(state)
}

/// Hessian-style growth gate: the supremum over the full box must not
/// exceed `ratio_cap` times the supremum over the concentric half box.
/// Flat fields (both sups tiny) pass with ratio 1.
fn growth_gate(
    name: &str,
    points: &[Vec<f64>],
    center_mask: &dyn Fn(&[f64]) -> bool,
    stat: &mut dyn FnMut(&[f64]) -> f64,
    ratio_cap: f64,
) -> ClauseReport {
    let mut sup_full = Extremum::max();
    let mut sup_half = Extremum::max();
    for p in points {
        let v = stat(p);
        sup_full.offer(p, v);
        if center_mask(p) {
            sup_half.offer(p, v);
        }
    }
    let full = sup_full.value();
    let half = sup_half.value();
    if !full.is_finite() {
        return clause(
            name,
            false,
            ratio_cap,
            "statistic is not finite on the grid".into(),
            sup_full.take(),
        );
    }
    let ratio = if full <= 1e-12 {
        1.0
    } else {
        full / half.max(1e-12)
    };
    clause(
        name,
        ratio <= ratio_cap,
        ratio_cap,
        format!("sup over box {full:.4e}, over half box {half:.4e}, ratio {ratio:.3}"),
        sup_full.take(),
    )
}

/// Stability probe shared by both checkers: integrates the given field from
/// axis starts at two magnitudes and gates on the terminal norm.
fn stability_probe(dim: usize, radius: f64, field: &dyn Fn(&[f64]) -> Vec<f64>) -> Extremum {
    let mut starts = Vec::new();
    for i in 0..dim {
        for mag in [radius * 0.5, radius * 0.125] {
            for sign in [1.0, -1.0] {
                let mut s = vec![0.0; dim];
                s[i] = sign * mag;
                starts.push(s);
            }
        }
    }
    let mut worst = Extremum::max();
    for start in &starts {
        match probe_trajectory(field, start, STABILITY_HORIZON, 0.01) {
            Ok(end) => worst.offer(start, norm(&end)),
            Err(_) => worst.offer(start, f64::INFINITY),
        }
    }
    worst
}

/// Collapses stability probes over several anchors into one clause.
fn stability_clause(name: &str, probes: Vec<Extremum>) -> ClauseReport {
    let mut worst = Extremum::max();
    for p in probes {
        if let Some((loc, v)) = p.take() {
            worst.offer(&loc, v);
        }
    }
    let w = worst.value();
    clause(
        name,
        w.is_finite() && w <= STABILITY_TOL,
        STABILITY_TOL,
        format!(
            "max terminal norm {w:.3e} after horizon {STABILITY_HORIZON} (tolerance {STABILITY_TOL:.0e})"
        ),
        worst.take(),
    )
}

/// Grid-certified check of the single-scale structural assumptions:
/// nondegenerate diffusion, gradient-form drift, Hessian growth cap,
/// gradient zero set, gradient growth, hold-phase trajectory stability, and
/// the Lyapunov template when a strongly convex potential is declared.
pub fn check_single(model: &SingleScaleModel, grid: &GridSpec) -> Result<AssumptionReport> {
    if grid.dim() != model.d {
        return Err(Error::invalid("grid dimension must match the model"));
    }
    let points = grid.points();
    let radius = grid.radius();
    let mut clauses = Vec::new();

    // Nondegeneracy: smallest eigenvalue of a(y) stays away from zero.
    {
        let mut worst = Extremum::min();
        for y in &points {
            let a = model.a(y);
            let lam = if a.iter().any(|v| !v.is_finite()) {
                f64::NAN
            } else {
                nalgebra::SymmetricEigen::new(a)
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |m, &v| m.min(v))
            };
            worst.offer(y, lam);
        }
        let c_a = worst.value();
        clauses.push(clause(
            "nondegeneracy",
            c_a.is_finite() && c_a > 1e-8,
            1e-8,
            format!("min eigenvalue of a on grid: {c_a:.4e}"),
            worst.take(),
        ));
    }

    // Gradient form of the drift: psi = a grad_phi pointwise.
    {
        let mut worst = Extremum::max();
        for y in &points {
            let lhs = (model.psi)(y);
            let rhs = model.a(y) * DMatrix::from_column_slice(model.d, 1, &(model.grad_phi)(y));
            let gap: f64 = lhs
                .iter()
                .zip(rhs.column(0).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            worst.offer(y, gap);
        }
        let g = worst.value();
        clauses.push(clause(
            "drift_consistency",
            g.is_finite() && g <= 1e-8,
            1e-8,
            format!("max |psi - a grad_phi| on grid: {g:.4e}"),
            worst.take(),
        ));
    }

    // Hessian growth: sup |Hess phi| over the box vs the concentric half
    // box. A bounded Hessian keeps the ratio near 1; quartic-type growth
    // trips the cap.
    {
        let mask = half_box_mask(grid);
        let hess = model.hess_phi.clone();
        let grad = model.grad_phi.clone();
        let mut stat = move |y: &[f64]| -> f64 {
            match &hess {
                Some(h) => h(y).iter().map(|v| v * v).sum::<f64>().sqrt(),
                None => frobenius(&finite_diff_jacobian(&*grad, y, FD_STEP)),
            }
        };
        clauses.push(growth_gate("hessian_bound", &points, &mask, &mut stat, 2.0));
    }

    // grad_phi vanishes at the origin and nowhere else on the grid.
    {
        let at_zero = norm(&(model.grad_phi)(&vec![0.0; model.d]));
        let mut spurious: Option<(Vec<f64>, f64)> = None;
        for y in &points {
            if norm(y) > 0.1 {
                let g = norm(&(model.grad_phi)(y));
                if g <= 1e-10 {
                    spurious = Some((y.clone(), g));
                    break;
                }
            }
        }
        let ok = at_zero <= 1e-10 && spurious.is_none();
        let detail = match &spurious {
            Some((y, _)) => format!("gradient vanishes away from the origin at y = {y:?}"),
            None => format!("|grad_phi(0)| = {at_zero:.3e}"),
        };
        clauses.push(clause("gradient_zero_set", ok, 1e-10, detail, spurious));
    }

    // Gradient growth: shell minima of |grad_phi|^2 nondecreasing in radius.
    {
        let n_shells = 5;
        let mut mins = vec![f64::INFINITY; n_shells];
        for y in &points {
            let r = sup_norm(y);
            if r <= 1e-12 {
                continue;
            }
            let j = (((r / radius) * n_shells as f64).ceil() as usize).clamp(1, n_shells) - 1;
            let g = (model.grad_phi)(y);
            mins[j] = mins[j].min(g.iter().map(|v| v * v).sum());
        }
        let filled: Vec<f64> = mins.into_iter().filter(|m| m.is_finite()).collect();
        let monotone = filled.windows(2).all(|w| w[1] >= w[0]);
        clauses.push(clause(
            "gradient_growth",
            monotone && filled.len() >= 2,
            0.0,
            format!("shell minima of |grad_phi|^2: {filled:?}"),
            None,
        ));
    }

    // Hold-phase stability: trajectories of u' = -V_x(u) return to zero for
    // anchor points x across the box.
    {
        let mut probes = Vec::new();
        for x in axis_samples(model.d, radius * 0.5) {
            let field = |u: &[f64]| stability_field_single(model, &x, u);
            probes.push(stability_probe(model.d, radius, &field));
        }
        clauses.push(stability_clause("stability_trajectories", probes));
    }

    // Lyapunov template from the declared strongly convex potential:
    // V(u) = phi_tilde(u + x) - phi_tilde(x) - u . grad phi_tilde(x) + 1
    // must be nonincreasing along every hold-phase probe trajectory.
    match &model.phi_tilde {
        None => clauses.push(not_checked(
            "lyapunov_template",
            "no strongly convex potential declared; not checked",
        )),
        Some(pt) => {
            let mut ok = true;
            let mut worst: Option<(Vec<f64>, f64)> = None;
            'outer: for x in axis_samples(model.d, radius * 0.5) {
                let gx = finite_diff_gradient(&**pt, &x, FD_STEP);
                let px = pt(&x);
                let lyap = |u: &[f64]| -> f64 {
                    let ux: Vec<f64> = u.iter().zip(&x).map(|(a, b)| a + b).collect();
                    pt(&ux) - px - u.iter().zip(&gx).map(|(a, b)| a * b).sum::<f64>() + 1.0
                };
                for start in axis_samples(model.d, radius * 0.5) {
                    let dt = 0.01;
                    let steps = (STABILITY_HORIZON / dt) as usize;
                    let mut u = start.clone();
                    let mut v_prev = lyap(&u);
                    for _ in 0..steps {
                        let f = stability_field_single(model, &x, &u);
                        for (ui, fi) in u.iter_mut().zip(&f) {
                            *ui -= dt * fi;
                        }
                        let v_now = lyap(&u);
                        if !(v_now <= v_prev + 1e-8 * (1.0 + v_prev.abs())) {
                            ok = false;
                            worst = Some((start.clone(), v_now - v_prev));
                            break 'outer;
                        }
                        v_prev = v_now;
                    }
                }
            }
            let detail = if ok {
                "template value nonincreasing along all probe trajectories".to_string()
            } else {
                "template value increased along a probe trajectory".to_string()
            };
            clauses.push(clause("lyapunov_template", ok, 1e-8, detail, worst));
        }
    }

    Ok(AssumptionReport { clauses })
}

/// Grid-certified check of the slow-fast structural assumptions. The grid
/// spans the joint `(x, y)` space: its first `m` coordinates are slow.
pub fn check_multiscale(model: &MultiscaleModel, grid: &GridSpec) -> Result<AssumptionReport> {
    if grid.dim() != model.m + model.d {
        return Err(Error::invalid("grid dimension must be m + d"));
    }
    let points = grid.points();
    let radius = grid.radius();
    let (m, d) = (model.m, model.d);
    let x_grid = GridSpec::new(
        grid.lo[..m].to_vec(),
        grid.hi[..m].to_vec(),
        grid.points_per_dim,
    )?;
    let mut clauses = Vec::new();

    // Empirical Lipschitz bound on the slow drift b over the joint grid.
    {
        let b = model.b.clone();
        let joint = move |p: &[f64]| -> Vec<f64> { b(&p[..m], &p[m..]) };
        let mut worst = Extremum::max();
        for p in &points {
            worst.offer(p, frobenius(&finite_diff_jacobian(&joint, p, FD_STEP)));
        }
        let l = worst.value();
        clauses.push(clause(
            "b_lipschitz",
            l.is_finite() && l <= LIPSCHITZ_CEILING,
            LIPSCHITZ_CEILING,
            format!("max |Jacobian of b| on grid: {l:.4}"),
            worst.take(),
        ));
    }

    // Slow diffusion alpha: bounded and Lipschitz on the slow grid.
    {
        let alpha = model.alpha.clone();
        let flat = move |x: &[f64]| -> Vec<f64> { alpha(x).iter().copied().collect() };
        let mut worst_bound = Extremum::max();
        let mut worst_lip = Extremum::max();
        for x in x_grid.points() {
            let a = (model.alpha)(&x);
            worst_bound.offer(&x, a.iter().map(|v| v * v).sum::<f64>().sqrt());
            worst_lip.offer(&x, frobenius(&finite_diff_jacobian(&flat, &x, FD_STEP)));
        }
        let (bnd, lip) = (worst_bound.value(), worst_lip.value());
        clauses.push(clause(
            "alpha_bounded_lipschitz",
            bnd.is_finite() && bnd <= 1e6 && lip <= LIPSCHITZ_CEILING,
            LIPSCHITZ_CEILING,
            format!("max |alpha| = {bnd:.4}, max |Jacobian of alpha| = {lip:.4}"),
            worst_lip.take(),
        ));
    }

    // Growth of the fast Hessian over the joint box vs its half box.
    {
        let mask = half_box_mask(grid);
        let g = model.grad_y_u.clone();
        let mut stat = move |p: &[f64]| -> f64 {
            let (x, y) = (p[..m].to_vec(), p[m..].to_vec());
            let gy = |yy: &[f64]| g(&x, yy);
            frobenius(&finite_diff_jacobian(&gy, &y, FD_STEP))
        };
        clauses.push(growth_gate(
            "hessian_y_bound",
            &points,
            &mask,
            &mut stat,
            2.0,
        ));
    }

    // Radial growth of |grad_y U(x, .)| along each fast axis for sampled x.
    {
        let mut ok = true;
        let mut worst: Option<(Vec<f64>, f64)> = None;
        for x in axis_samples(m, radius * 0.5) {
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut outer_y = vec![0.0; d];
                    outer_y[i] = sign * radius;
                    let mut inner_y = outer_y.clone();
                    inner_y[i] = sign * radius * 0.5;
                    let go = norm(&(model.grad_y_u)(&x, &outer_y));
                    let gi = norm(&(model.grad_y_u)(&x, &inner_y));
                    if !(go.is_finite() && go >= gi - 1e-9) {
                        ok = false;
                        worst = Some((outer_y.clone(), go - gi));
                    }
                }
            }
        }
        clauses.push(clause(
            "gradient_growth_y",
            ok,
            1e-9,
            if ok {
                "|grad_y U| nondecreasing along every sampled fast ray".into()
            } else {
                "|grad_y U| decreases along a fast ray".into()
            },
            worst,
        ));
    }

    // Coercivity fit: find L1, L2 with U + |grad_y U|^2 >= L1 |y|^2 - L2 on
    // the grid. L1 comes from the outermost fast shell, L2 mops up the rest.
    {
        let val = |x: &[f64], y: &[f64]| -> f64 {
            let g = (model.grad_y_u)(x, y);
            (model.u_pot)(x, y) + g.iter().map(|v| v * v).sum::<f64>()
        };
        let mut l1 = f64::INFINITY;
        let mut l2: f64 = 0.0;
        let mut finite = true;
        for p in &points {
            let (x, y) = (&p[..m], &p[m..]);
            let r = sup_norm(y);
            if r >= 0.9 * radius {
                l1 = l1.min(val(x, y) / y.iter().map(|v| v * v).sum::<f64>());
            }
        }
        let l1 = (0.5 * l1).min(1.0);
        for p in &points {
            let (x, y) = (&p[..m], &p[m..]);
            let v = val(x, y);
            if !v.is_finite() {
                finite = false;
                break;
            }
            l2 = l2.max(l1 * y.iter().map(|u| u * u).sum::<f64>() - v);
        }
        clauses.push(clause(
            "coercivity_fit",
            finite && l1 > 1e-6,
            1e-6,
            format!("fitted bounds: L1 = {l1:.4}, L2 = {l2:.4}"),
            None,
        ));
    }

    // Fast stability: trajectories of u' = -V_{x,z}(u) collapse for sampled
    // anchors (x, z).
    {
        let mut probes = Vec::new();
        for x in axis_samples(m, radius * 0.5) {
            for z in axis_samples(d, radius * 0.25) {
                let field = |u: &[f64]| stability_field_fast(model, &x, &z, u);
                probes.push(stability_probe(d, radius, &field));
            }
        }
        clauses.push(stability_clause("fast_stability", probes));
    }

    // Empirical joint Lipschitz bound of grad_y U.
    {
        let g = model.grad_y_u.clone();
        let joint = move |p: &[f64]| -> Vec<f64> { g(&p[..m], &p[m..]) };
        let mut worst = Extremum::max();
        for p in &points {
            worst.offer(p, frobenius(&finite_diff_jacobian(&joint, p, FD_STEP)));
        }
        let l = worst.value();
        clauses.push(clause(
            "grad_y_u_lipschitz",
            l.is_finite() && l <= LIPSCHITZ_CEILING,
            LIPSCHITZ_CEILING,
            format!("max |Jacobian of grad_y U| on grid: {l:.4}"),
            worst.take(),
        ));
    }

    // theta(x) is a fast equilibrium: grad_y U(x, theta(x)) = 0.
    {
        let mut worst = Extremum::max();
        for x in x_grid.points() {
            let th = (model.theta)(&x);
            worst.offer(&x, norm(&(model.grad_y_u)(&x, &th)));
        }
        let g = worst.value();
        clauses.push(clause(
            "fixed_point",
            g.is_finite() && g <= 1e-8,
            1e-8,
            format!("max |grad_y U(x, theta(x))| on slow grid: {g:.3e}"),
            worst.take(),
        ));
    }

    // Empirical Lipschitz bound of the equilibrium map theta.
    {
        let mut worst = Extremum::max();
        for x in x_grid.points() {
            worst.offer(
                &x,
                frobenius(&finite_diff_jacobian(&*model.theta, &x, FD_STEP)),
            );
        }
        let l = worst.value();
        clauses.push(clause(
            "theta_lipschitz",
            l.is_finite() && l <= LIPSCHITZ_CEILING,
            LIPSCHITZ_CEILING,
            format!("max |Jacobian of theta| on slow grid: {l:.4}"),
            worst.take(),
        ));
    }

    Ok(AssumptionReport { clauses })
}

/// Membership test for the concentric half box of a grid.
fn half_box_mask(grid: &GridSpec) -> impl Fn(&[f64]) -> bool {
    let center: Vec<f64> = grid
        .lo
        .iter()
        .zip(&grid.hi)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let half: Vec<f64> = grid
        .lo
        .iter()
        .zip(&grid.hi)
        .map(|(a, b)| 0.25 * (b - a))
        .collect();
    move |p: &[f64]| {
        p.iter()
            .zip(&center)
            .zip(&half)
            .all(|((pi, ci), hi)| (pi - ci).abs() <= hi + 1e-12)
    }
}

/// Signed multiples of the coordinate axes at the given magnitude, plus the
/// origin. Anchor sample set for the stability probes.
fn axis_samples(dim: usize, mag: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dim]];
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[i] = sign * mag;
            out.push(v);
        }
    }
    out
}

/// Built-in model, either family.
#[derive(Clone)]
pub enum Builtin {
    Single(SingleScaleModel),
    Multiscale(MultiscaleModel),
}

/// Constructs a named built-in model. Recognized names: `quadratic`
/// (dimension parameter `d`, default 1), `multiplicative1d` (`c1`, `c2`,
/// defaults 1 and 2), `tracking` (no parameters).
pub fn builtin(name: &str, params: &[(String, f64)]) -> Result<Builtin> {
    let get = |key: &str, default: f64| -> f64 {
        params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .unwrap_or(default)
    };
    let known: &[&str] = match name {
        "quadratic" => &["d"],
        "multiplicative1d" => &["c1", "c2"],
        "tracking" => &[],
        _ => {
            return Err(Error::invalid(format!(
                "unknown builtin model '{name}' (expected quadratic, multiplicative1d, or tracking)"
            )))
        }
    };
    if let Some((k, _)) = params.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        return Err(Error::invalid(format!(
            "builtin '{name}' does not take parameter '{k}'"
        )));
    }
    match name {
        "quadratic" => {
            let d = get("d", 1.0);
            if d < 1.0 || d.fract() != 0.0 {
                return Err(Error::invalid("quadratic needs integer d >= 1"));
            }
            Ok(Builtin::Single(quadratic(d as usize)))
        }
        "multiplicative1d" => Ok(Builtin::Single(multiplicative1d(
            get("c1", 1.0),
            get("c2", 2.0),
        )?)),
        "tracking" => Ok(Builtin::Multiscale(tracking())),
        _ => unreachable!(),
    }
}

/// Isotropic quadratic single-scale model in dimension `d`:
/// `phi(y) = |y|^2 / 2`, `sigma = I`, so `psi(y) = y` and the uncontrolled
/// process is an Ornstein-Uhlenbeck relaxation.
pub fn quadratic(d: usize) -> SingleScaleModel {
    let phi: ScalarField = Arc::new(|y: &[f64]| 0.5 * y.iter().map(|v| v * v).sum::<f64>());
    let grad: VectorField = Arc::new(|y: &[f64]| y.to_vec());
    let psi: VectorField = Arc::new(|y: &[f64]| y.to_vec());
    let sigma: MatrixField = Arc::new(move |_y: &[f64]| DMatrix::identity(d, d));
    let hess: MatrixField = Arc::new(move |_y: &[f64]| DMatrix::identity(d, d));
    SingleScaleModel {
        d,
        r: d,
        psi,
        sigma,
        phi: phi.clone(),
        grad_phi: grad,
        hess_phi: Some(hess),
        phi_tilde: Some(phi),
        y0: vec![0.0; d],
    }
}

/// One-dimensional single-scale model with state-dependent diffusion
/// `a(y) = p + q y^2 / (1 + y^2)`, `p = c1^2`, `q = c2^2 - c1^2`, and the
/// potential chosen so that `psi(y) = a(y) grad_phi(y) = y` exactly:
///
/// ```text
/// phi(y) = (1/2) [ y^2/(p+q) + q/(p+q)^2 log((p + (p+q) y^2)/p) ].
/// ```
///
/// `sigma = sqrt(a)` stays in `[c1, c2]`, so the model exercises every
/// state-dependent-noise code path while keeping closed forms for oracles.
pub fn multiplicative1d(c1: f64, c2: f64) -> Result<SingleScaleModel> {
    if !(c1 > 0.0 && c2 > c1) {
        return Err(Error::invalid("multiplicative1d needs 0 < c1 < c2"));
    }
    let p = c1 * c1;
    let q = c2 * c2 - p;
    let a = move |y: f64| p + q * y * y / (1.0 + y * y);
    let phi: ScalarField = Arc::new(move |y: &[f64]| {
        let y = y[0];
        let pq = p + q;
        0.5 * (y * y / pq + q / (pq * pq) * ((p + pq * y * y) / p).ln())
    });
    let grad: VectorField = Arc::new(move |y: &[f64]| vec![y[0] / a(y[0])]);
    let psi: VectorField = Arc::new(|y: &[f64]| vec![y[0]]);
    let sigma: MatrixField = Arc::new(move |y: &[f64]| DMatrix::from_element(1, 1, a(y[0]).sqrt()));
    Ok(SingleScaleModel {
        d: 1,
        r: 1,
        psi,
        sigma,
        phi,
        grad_phi: grad,
        hess_phi: None,
        phi_tilde: None,
        y0: vec![0.0],
    })
}

/// Slow-fast tracking model: `b(x, y) = y - x`, `alpha = I`,
/// `U(x, y) = y^2/2 - x y / 2`, so `theta(x) = x/2` and the averaged flow is
/// `x' = -x/2`. Coercivity pair `(1/3, 1/2)` holds where `|theta(x)| <= 1`.
pub fn tracking() -> MultiscaleModel {
    let b: VectorField2 = Arc::new(|x: &[f64], y: &[f64]| vec![y[0] - x[0]]);
    let alpha: MatrixField = Arc::new(|_x: &[f64]| DMatrix::identity(1, 1));
    let u_pot: ScalarField2 =
        Arc::new(|x: &[f64], y: &[f64]| 0.5 * y[0] * y[0] - 0.5 * x[0] * y[0]);
    let grad: VectorField2 = Arc::new(|x: &[f64], y: &[f64]| vec![y[0] - 0.5 * x[0]]);
    let theta: VectorField = Arc::new(|x: &[f64]| vec![0.5 * x[0]]);
    MultiscaleModel {
        m: 1,
        d: 1,
        k: 1,
        b,
        alpha,
        u_pot,
        grad_y_u: grad,
        theta,
        l_bounds: Some((1.0 / 3.0, 0.5)),
        x0: vec![1.0],
        y0: vec![0.5],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_schedules_evaluate() {
        let p = NoiseSchedule::power(0.5).unwrap();
        assert!((p.eval(0.04).unwrap() - 0.2).abs() < 1e-15);
        let l = NoiseSchedule::LogInv;
        let e = (-4.0f64).exp();
        assert!((l.eval(e).unwrap() - 0.5).abs() < 1e-12);
        let t = NoiseSchedule::Table(vec![(0.1, 0.3)]);
        assert_eq!(t.eval(0.1).unwrap(), 0.3);
        assert!(t.eval(0.2).is_err());
        assert!(p.eval(0.0).is_err());
        assert!(NoiseSchedule::power(0.0).is_err());
    }

    #[test]
    fn finite_differences_match_closed_forms() {
        let f = |x: &[f64]| x[0] * x[0] * x[1] + x[1].sin();
        let g = finite_diff_gradient(&f, &[1.5, 0.7], 1e-5);
        assert!((g[0] - 2.0 * 1.5 * 0.7).abs() < 1e-8);
        assert!((g[1] - (1.5f64 * 1.5 + 0.7f64.cos())).abs() < 1e-8);

        let vf = |x: &[f64]| vec![x[0] * x[1], x[0] - x[1]];
        let j = finite_diff_jacobian(&vf, &[2.0, 3.0], 1e-5);
        assert!((j[0][0] - 3.0).abs() < 1e-8);
        assert!((j[0][1] - 2.0).abs() < 1e-8);
        assert!((j[1][0] - 1.0).abs() < 1e-8);
        assert!((j[1][1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn grid_points_cover_the_box() {
        let g = GridSpec::new(vec![-1.0, 0.0], vec![1.0, 2.0], 3).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 9);
        assert!(pts.contains(&vec![-1.0, 0.0]));
        assert!(pts.contains(&vec![1.0, 2.0]));
        assert!(pts.contains(&vec![0.0, 1.0]));
        assert_eq!(g.radius(), 1.0);
        assert!(GridSpec::new(vec![0.0], vec![0.0], 3).is_err());
        assert!(GridSpec::new(vec![0.0], vec![1.0], 1).is_err());
    }

    #[test]
    fn builtin_dispatch_and_unknown_params() {
        assert!(matches!(
            builtin("quadratic", &[("d".into(), 2.0)]),
            Ok(Builtin::Single(_))
        ));
        assert!(matches!(
            builtin("tracking", &[]),
            Ok(Builtin::Multiscale(_))
        ));
        assert!(builtin("nope", &[]).is_err());
        assert!(builtin("tracking", &[("d".into(), 1.0)]).is_err());
        assert!(builtin("quadratic", &[("d".into(), 1.5)]).is_err());
    }

    #[test]
    fn multiplicative_model_identities() {
        let m = multiplicative1d(1.0, 2.0).unwrap();
        for y in [-2.0, -0.5, 0.0, 0.3, 1.7] {
            let a = m.a(&[y])[(0, 0)];
            assert!((1.0..=4.0).contains(&a));
            // psi = a grad_phi = y exactly by construction.
            let drift = a * (m.grad_phi)(&[y])[0];
            assert!((drift - y).abs() < 1e-12, "drift {drift} at y {y}");
            // grad_phi matches finite differences of phi.
            let fd = finite_diff_gradient(&*m.phi, &[y], 1e-6)[0];
            assert!(((m.grad_phi)(&[y])[0] - fd).abs() < 1e-6);
        }
        // V_x(u) = (x + u) - x = u for this model.
        let v = stability_field_single(&m, &[0.7], &[0.4]);
        assert!((v[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn tracking_model_identities() {
        let m = tracking();
        for x in [-1.0, 0.0, 2.0] {
            let th = (m.theta)(&[x]);
            let g = (m.grad_y_u)(&[x], &th);
            assert!(g[0].abs() < 1e-14);
            let fd = {
                let u = m.u_pot.clone();
                let fy = move |y: &[f64]| u(&[x], y);
                finite_diff_gradient(&fy, &[1.3], 1e-6)[0]
            };
            assert!(((m.grad_y_u)(&[x], &[1.3])[0] - fd).abs() < 1e-6);
        }
    }
}
