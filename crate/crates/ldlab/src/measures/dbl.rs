//! Exact bounded-Lipschitz distance between finite discrete measures.
//!
//! The distance is the dual value
//!
//! ```text
//! d_bl(mu, nu) = sup { int f d(mu - nu) : |f| <= 1, Lip(f) <= 1 }
//! ```
//!
//! computed as a linear program over the values of `f` on the union support.
//! Restricting `f` to the support atoms loses nothing: a feasible assignment
//! extends to all of R^d with the same Lipschitz constant (McShane
//! extension), and clamping the extension to [-1, 1] preserves feasibility.
//! The same argument justifies adding extra support points with zero mass,
//! which the structured construction modes below rely on.
//!
//! Modes:
//! - `Pairwise`: one constraint pair per atom pair; exact for any dimension
//!   and ground metric. Pairs further apart than 2 are skipped because the
//!   box constraints already imply them.
//! - `Chain1d`: atoms sorted on the line, constraints only between
//!   neighbors. Exact in one dimension: the pairwise constraint for distant
//!   atoms telescopes along the chain.
//! - The space-time solver uses the product-chain analogue on the grid
//!   (distinct state values) x (distinct time values) under the sum metric
//!   `|dy| + |ds|`: axis-aligned neighbor constraints imply all pairwise
//!   constraints because an axis-aligned staircase path realizes the sum
//!   metric. Grid nodes carrying no mass enter with zero objective weight.

use super::{Cell, DiscreteMeasure, SpaceTimeMeasure};
use crate::error::{Error, Result};
use minilp::{ComparisonOp, OptimizationDirection, Problem};

/// Construction mode for the bounded-Lipschitz linear program.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DblMode {
    /// Chain mode in one dimension, pairwise otherwise.
    Auto,
    /// All-pairs constraints (any dimension).
    Pairwise,
    /// Sorted-neighbor constraints; requires dimension one.
    Chain1d,
}

/// Exact bounded-Lipschitz distance between probability measures.
pub fn dbl_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    dbl_distance_with_mode(mu, nu, DblMode::Auto)
}

/// As [`dbl_distance`], with the LP construction mode pinned. All modes
/// produce the same value; the structured ones are faster on large supports.
pub fn dbl_distance_with_mode(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    mode: DblMode,
) -> Result<f64> {
    check_prob_pair(mu, nu)?;
    let union = signed_union(mu, nu);
    let mode = match mode {
        DblMode::Auto => {
            if mu.dim == 1 {
                DblMode::Chain1d
            } else {
                DblMode::Pairwise
            }
        }
        m => m,
    };
    match mode {
        DblMode::Chain1d => {
            if mu.dim != 1 {
                return Err(Error::invalid("chain mode requires dimension one"));
            }
            let atoms: Vec<(f64, f64)> = union.into_iter().map(|(loc, c)| (loc[0], c)).collect();
            solve_chain(&atoms)
        }
        DblMode::Pairwise => {
            let (points, coefs): (Vec<Vec<f64>>, Vec<f64>) =
                union.into_iter().filter(|(_, c)| *c != 0.0).unzip();
            solve_pairwise(&points, &coefs, l2, true)
        }
        DblMode::Auto => unreachable!(),
    }
}

/// Closed form for two point masses: `min(|x - y|, 2)`. Used as a test
/// oracle and as a fast path by callers that know their inputs are Diracs.
pub fn dbl_two_diracs(x: &[f64], y: &[f64]) -> f64 {
    l2(x, y).min(2.0)
}

/// Closed form against a single point mass:
/// `d_bl(mu, delta_y) = sum_i w_i min(|z_i - y|, 2)`.
///
/// The function `f(z) = min(|z - y|, 2) - 1` is feasible and attains the
/// value; any feasible `f` is dominated termwise by it once `f(y) = -1` is
/// subtracted, so the value is exact.
pub fn dbl_to_dirac(mu: &DiscreteMeasure, y: &[f64]) -> Result<f64> {
    if y.len() != mu.dim {
        return Err(Error::invalid("dimension mismatch"));
    }
    if !mu.is_probability() {
        return Err(Error::invalid("dbl_to_dirac requires a probability measure"));
    }
    Ok(mu
        .atoms
        .iter()
        .map(|(z, w)| w * l2(z, y).min(2.0))
        .sum())
}

/// Kantorovich-Rubinstein distance (the same LP without the |f| <= 1 box).
/// Requires equal total masses; used to check `d_bl <= W1`.
pub fn wasserstein1(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_prob_pair(mu, nu)?;
    let (points, coefs): (Vec<Vec<f64>>, Vec<f64>) = signed_union(mu, nu)
        .into_iter()
        .filter(|(_, c)| *c != 0.0)
        .unzip();
    solve_pairwise(&points, &coefs, l2, false)
}

/// Exact bounded-Lipschitz distance between space-time measures under the
/// sum metric `|y - y'| + |s - s'|`.
///
/// Both measures are refined to a common time partition; each refined cell
/// contributes atoms `(y, s_mid)` with weight `w * cell_length`. The LP runs
/// on that atom set, so the value is exact for the refined representation.
/// Total masses equal the horizon, hence the value is at most `2 T`.
pub fn dbl_space_time(mu: &SpaceTimeMeasure, nu: &SpaceTimeMeasure) -> Result<f64> {
    if mu.dim != nu.dim {
        return Err(Error::invalid("dimension mismatch"));
    }
    let tol = 1e-9 * mu.horizon.max(1.0);
    if (mu.horizon - nu.horizon).abs() > tol {
        return Err(Error::invalid(format!(
            "horizon mismatch: {} vs {}",
            mu.horizon, nu.horizon
        )));
    }
    let edges = common_edges(&mu.cells, &nu.cells, mu.horizon);
    let mut signed: Vec<(Vec<f64>, f64, f64)> = Vec::new(); // (y, s_mid, coef)
    for win in edges.windows(2) {
        let (a, b) = (win[0], win[1]);
        let mid = 0.5 * (a + b);
        let len = b - a;
        for (loc, w) in &mu.slice_at(mid).atoms {
            signed.push((loc.clone(), mid, w * len));
        }
        for (loc, w) in &nu.slice_at(mid).atoms {
            signed.push((loc.clone(), mid, -(w * len)));
        }
    }
    if mu.dim == 1 {
        let atoms: Vec<(f64, f64, f64)> =
            signed.into_iter().map(|(y, s, c)| (y[0], s, c)).collect();
        solve_product_grid(&atoms)
    } else {
        // General dimension: all-pairs LP under the sum metric, with the
        // time coordinate appended to the point.
        let mut points = Vec::with_capacity(signed.len());
        let mut coefs = Vec::with_capacity(signed.len());
        for (mut y, s, c) in signed {
            if c == 0.0 {
                continue;
            }
            y.push(s);
            points.push(y);
            coefs.push(c);
        }
        let metric = |p: &[f64], q: &[f64]| {
            let d = p.len() - 1;
            l2(&p[..d], &q[..d]) + (p[d] - q[d]).abs()
        };
        solve_pairwise(&points, &coefs, metric, true)
    }
}

fn check_prob_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.dim != nu.dim {
        return Err(Error::invalid("dimension mismatch"));
    }
    if !mu.is_probability() || !nu.is_probability() {
        return Err(Error::invalid(format!(
            "bounded-Lipschitz distance requires probability measures (masses {} and {})",
            mu.total_mass(),
            nu.total_mass()
        )));
    }
    Ok(())
}

/// Union support with signed coefficients mu - nu, coincident atoms combined.
fn signed_union(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<(Vec<f64>, f64)> {
    let mut entries: Vec<(Vec<f64>, f64)> = Vec::with_capacity(mu.atoms.len() + nu.atoms.len());
    for (loc, w) in &mu.atoms {
        entries.push((loc.clone(), *w));
    }
    for (loc, w) in &nu.atoms {
        entries.push((loc.clone(), -*w));
    }
    entries.sort_by(|a, b| super::cmp_loc(&a.0, &b.0));
    let mut out: Vec<(Vec<f64>, f64)> = Vec::with_capacity(entries.len());
    for (loc, c) in entries {
        match out.last_mut() {
            Some((last, lc)) if *last == loc => *lc += c,
            _ => out.push((loc, c)),
        }
    }
    out
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Solves `max sum c_i f_i` subject to `|f_i| <= 1` (when boxed) and
/// `|f_i - f_j| <= d_ij` for the given pairs.
fn solve_lp(coefs: &[f64], pairs: &[(usize, usize, f64)], boxed: bool) -> Result<f64> {
    if coefs.iter().all(|&c| c == 0.0) {
        return Ok(0.0);
    }
    // Without the box the objective is shift-invariant (coefficients sum to
    // zero), so f_0 is pinned at 0 and the rest live within the diameter.
    let diameter = pairs.iter().fold(0.0f64, |a, p| a.max(p.2)) + 1.0;
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = coefs
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let bounds = match (boxed, i) {
                (true, _) => (-1.0, 1.0),
                (false, 0) => (0.0, 0.0),
                (false, _) => (-diameter, diameter),
            };
            problem.add_var(c, bounds)
        })
        .collect();
    for &(i, j, d) in pairs {
        problem.add_constraint(&[(vars[i], 1.0), (vars[j], -1.0)], ComparisonOp::Le, d);
        problem.add_constraint(&[(vars[j], 1.0), (vars[i], -1.0)], ComparisonOp::Le, d);
    }
    match problem.solve() {
        Ok(sol) => Ok(sol.objective().max(0.0)),
        Err(e) => Err(Error::invalid(format!("bounded-Lipschitz LP failed: {e}"))),
    }
}

fn solve_pairwise<M: Fn(&[f64], &[f64]) -> f64>(
    points: &[Vec<f64>],
    coefs: &[f64],
    metric: M,
    boxed: bool,
) -> Result<f64> {
    let mut pairs = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = metric(&points[i], &points[j]);
            // |f_i - f_j| <= 2 is already forced by the box.
            if boxed && d >= 2.0 {
                continue;
            }
            pairs.push((i, j, d));
        }
    }
    solve_lp(coefs, &pairs, boxed)
}

/// Chain LP on the line: atoms sorted, constraints between neighbors only.
fn solve_chain(atoms: &[(f64, f64)]) -> Result<f64> {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let coefs: Vec<f64> = sorted.iter().map(|&(_, c)| c).collect();
    let pairs: Vec<(usize, usize, f64)> = sorted
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i, i + 1, w[1].0 - w[0].0))
        .collect();
    solve_lp(&coefs, &pairs, true)
}

/// Product-chain LP for one-dimensional space-time atoms `(y, s, coef)`
/// under the sum metric. Builds the full grid (distinct y) x (distinct s);
/// neighbor constraints along each axis are exact for the sum metric.
fn solve_product_grid(atoms: &[(f64, f64, f64)]) -> Result<f64> {
    let mut ys: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    let mut ss: Vec<f64> = atoms.iter().map(|a| a.1).collect();
    for v in [&mut ys, &mut ss] {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
    }
    let (p, q) = (ys.len(), ss.len());
    if p * q > 100_000 {
        return Err(Error::invalid(format!(
            "space-time LP grid has {} nodes; coarsen the measures first",
            p * q
        )));
    }
    let mut coefs = vec![0.0; p * q];
    for &(y, s, c) in atoms {
        let i = ys.partition_point(|&v| v < y).min(p - 1);
        let j = ss.partition_point(|&v| v < s).min(q - 1);
        debug_assert!(ys[i] == y && ss[j] == s);
        coefs[i * q + j] += c;
    }
    let mut pairs = Vec::with_capacity(2 * p * q);
    for i in 0..p {
        for j in 0..q {
            let node = i * q + j;
            if i + 1 < p {
                pairs.push((node, (i + 1) * q + j, ys[i + 1] - ys[i]));
            }
            if j + 1 < q {
                pairs.push((node, node + 1, ss[j + 1] - ss[j]));
            }
        }
    }
    solve_lp(&coefs, &pairs, true)
}

/// Union of cell boundaries of both measures, sorted and deduplicated.
fn common_edges(a: &[Cell], b: &[Cell], horizon: f64) -> Vec<f64> {
    let mut edges: Vec<f64> = Vec::with_capacity(a.len() + b.len() + 2);
    for c in a.iter().chain(b) {
        edges.push(c.interval.0);
        edges.push(c.interval.1);
    }
    edges.push(0.0);
    edges.push(horizon);
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let tol = 1e-12 * horizon.max(1.0);
    let mut out: Vec<f64> = Vec::with_capacity(edges.len());
    for e in edges {
        if out.last().map_or(true, |&last| e - last > tol) {
            out.push(e);
        }
    }
    out
}
