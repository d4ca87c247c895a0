//! The two explicit rate functions of the theory.
//!
//! `I1` scores a spatial occupation measure for the single-scale family:
//! `I1(gamma) = (1/2) integral |sigma^T grad_phi|^2 dgamma`. `I2` scores a
//! slow path together with a fast space-time measure: the minimal control
//! energy needed to realize the path against the averaged drift, plus the
//! static price `(1/2) integral |grad_y U|^2` of holding the fast component
//! away from its equilibrium.

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, SpaceTimeMeasure};
use crate::models::{MultiscaleModel, SingleScaleModel};
use crate::sde::Path;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Default relative feasibility tolerance for the control recovery.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Ridge added to the normal equations of the minimal-norm solve.
pub const RIDGE: f64 = 1e-12;

/// Outcome of a rate-function evaluation. `value` is `+inf` exactly when
/// `feasible` is false; the witness control is present only when feasible
/// and the evaluation had a control component to recover.
#[derive(Clone, Debug)]
pub struct RateResult {
    pub value: f64,
    pub feasible: bool,
    /// Worst per-cell residual `|alpha v - r|` of the control recovery
    /// (0 for `I1`).
    pub residual_norm: f64,
    /// Minimal-norm control per quadrature cell, flat `cells x control_dim`.
    pub witness_control: Option<Vec<f64>>,
    pub control_dim: usize,
    /// Quadrature step used, so callers can test refinement convergence.
    pub quadrature_dt: Option<f64>,
    /// Time of the worst cell when infeasible.
    pub worst_cell_time: Option<f64>,
}

#[derive(Serialize)]
struct RateResultJson {
    value: f64,
    feasible: bool,
    residual_norm: f64,
}

impl RateResult {
    /// Serializes the public triple; an infinite value becomes JSON null.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&RateResultJson {
            value: self.value,
            feasible: self.feasible,
            residual_norm: self.residual_norm,
        })
        .expect("rate result serializes")
    }

    fn simple(value: f64) -> Self {
        RateResult {
            value,
            feasible: true,
            residual_norm: 0.0,
            witness_control: None,
            control_dim: 0,
            quadrature_dt: None,
            worst_cell_time: None,
        }
    }
}

/// `I1(gamma) = (1/2) sum_i w_i |sigma(z_i)^T grad_phi(z_i)|^2`. Always
/// feasible; errors on dimension mismatch or non-probability input.
pub fn eval_i1(model: &SingleScaleModel, gamma: &DiscreteMeasure) -> Result<RateResult> {
    if gamma.dim != model.d {
        return Err(Error::invalid(format!(
            "measure dimension {} does not match model dimension {}",
            gamma.dim, model.d
        )));
    }
    if !gamma.is_probability() {
        return Err(Error::invalid("rate functions take probability measures"));
    }
    let mut value = 0.0;
    for (loc, w) in &gamma.atoms {
        let sig = (model.sigma)(loc);
        let grad = DVector::from_column_slice(&(model.grad_phi)(loc));
        let stress = sig.transpose() * grad;
        value += 0.5 * w * stress.norm_squared();
    }
    Ok(RateResult::simple(value))
}

/// The integrand of `I1` at a single point: `|sigma(y)^T grad_phi(y)|^2 / 2`.
/// The marginal cost of holding the process at `y`.
pub fn i1_density(model: &SingleScaleModel, y: &[f64]) -> f64 {
    let sig = (model.sigma)(y);
    let grad = DVector::from_column_slice(&(model.grad_phi)(y));
    0.5 * (sig.transpose() * grad).norm_squared()
}

fn check_alignment(model: &MultiscaleModel, xi: &Path, nu: &SpaceTimeMeasure) -> Result<()> {
    if xi.dim != model.m {
        return Err(Error::invalid("path dimension must match the slow state"));
    }
    if nu.dim != model.d {
        return Err(Error::invalid(
            "measure dimension must match the fast state",
        ));
    }
    nu.validate()?;
    if xi.grid.start.abs() > 1e-9 || (xi.grid.horizon - nu.horizon).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "path horizon [{}, {}] does not match measure horizon [0, {}]",
            xi.grid.start, xi.grid.horizon, nu.horizon
        )));
    }
    Ok(())
}

/// Derivative of the path at node `j` by central differences in the
/// interior, one-sided at the ends.
pub fn path_derivative(xi: &Path, j: usize) -> Vec<f64> {
    let n = xi.grid.n;
    let dt = xi.grid.dt();
    let (a, b, span) = if j == 0 {
        (0, 1, dt)
    } else if j == n {
        (n - 1, n, dt)
    } else {
        (j - 1, j + 1, 2.0 * dt)
    };
    xi.state(b)
        .iter()
        .zip(xi.state(a))
        .map(|(hi, lo)| (hi - lo) / span)
        .collect()
}

/// `I2(xi, nu)`: per quadrature cell (left endpoints of the path grid),
/// recover the minimal-norm `v` with `alpha(xi) v = xi' - integral b dnu_t`
/// by ridge least squares; feasible when every cell residual passes
/// `|alpha v - r| <= tol (1 + |r|)`. Value is the control energy plus the
/// static `grad_y U` cost on the same quadrature.
pub fn eval_i2(
    model: &MultiscaleModel,
    xi: &Path,
    nu: &SpaceTimeMeasure,
    tol: f64,
) -> Result<RateResult> {
    check_alignment(model, xi, nu)?;
    let n = xi.grid.n;
    let dt = xi.grid.dt();
    let mut value = 0.0;
    let mut witness = Vec::with_capacity(n * model.k);
    let mut worst = (0.0f64, 0.0f64);
    let mut feasible = true;

    for j in 0..n {
        let t = xi.grid.node(j);
        let x = xi.state(j);
        let slice = nu.slice_at(t);

        let mut drift = vec![0.0; model.m];
        let mut static_term = 0.0;
        for (y, w) in &slice.atoms {
            let b = (model.b)(x, y);
            for (di, bi) in drift.iter_mut().zip(&b) {
                *di += w * bi;
            }
            let g = (model.grad_y_u)(x, y);
            static_term += w * g.iter().map(|v| v * v).sum::<f64>();
        }
        let xdot = path_derivative(xi, j);
        let r = DVector::from_iterator(model.m, xdot.iter().zip(&drift).map(|(a, b)| a - b));

        let alpha = (model.alpha)(x);
        let gram = &alpha * alpha.transpose() + DMatrix::identity(model.m, model.m) * RIDGE;
        let z = gram
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::Singular("control normal equations".into()))?;
        let v = alpha.transpose() * &z;
        let resid = (&alpha * &v - &r).norm();
        if resid > worst.0 {
            worst = (resid, t);
        }
        if resid > tol * (1.0 + r.norm()) {
            feasible = false;
        }
        value += 0.5 * dt * (v.norm_squared() + static_term);
        witness.extend(v.iter().copied());
    }

    if !feasible {
        return Ok(RateResult {
            value: f64::INFINITY,
            feasible: false,
            residual_norm: worst.0,
            witness_control: None,
            control_dim: model.k,
            quadrature_dt: Some(dt),
            worst_cell_time: Some(worst.1),
        });
    }
    Ok(RateResult {
        value,
        feasible: true,
        residual_norm: worst.0,
        witness_control: Some(witness),
        control_dim: model.k,
        quadrature_dt: Some(dt),
        worst_cell_time: None,
    })
}

/// The `grad_y U` half of `I2` alone:
/// `(1/2) sum_j dt sum_l w_l |grad_y U(xi(t_j), y_l)|^2` on the same
/// left-endpoint quadrature as [`eval_i2`].
pub fn static_cost(model: &MultiscaleModel, xi: &Path, nu: &SpaceTimeMeasure) -> Result<f64> {
    check_alignment(model, xi, nu)?;
    let dt = xi.grid.dt();
    let mut total = 0.0;
    for j in 0..xi.grid.n {
        let x = xi.state(j);
        let slice = nu.slice_at(xi.grid.node(j));
        for (y, w) in &slice.atoms {
            let g = (model.grad_y_u)(x, y);
            total += 0.5 * dt * w * g.iter().map(|v| v * v).sum::<f64>();
        }
    }
    Ok(total)
}
