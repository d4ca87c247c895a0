//! Frozen oracles and property tests for the measure layer.
//!
//! The oracle values below are closed forms computed by hand from the
//! definition `d_bl(mu, nu) = sup { integral f d(mu - nu) : |f| <= 1,
//! Lip(f) <= 1 }`; they pin the LP solver to the analytic metric.

use ldlab::measures::{
    dbl_distance, dbl_distance_with_mode, dbl_space_time, dbl_to_dirac, dbl_two_diracs,
    from_path, second_moment, space_time_from_path, wasserstein1, Cell, DblMode,
    DiscreteMeasure, SpaceTimeMeasure,
};
use ldlab::sde::{Path, TimeGrid};
use proptest::prelude::*;

fn delta1(x: f64) -> DiscreteMeasure {
    DiscreteMeasure::delta(vec![x])
}

const ORACLE_TOL: f64 = 1e-9;

#[test]
fn frozen_two_dirac_values() {
    // Lipschitz bound active: d(delta_0, delta_1) = 1.
    assert!((dbl_distance(&delta1(0.0), &delta1(1.0)).unwrap() - 1.0).abs() < ORACLE_TOL);
    // Sup bound active: d(delta_0, delta_5) = 2.
    assert!((dbl_distance(&delta1(0.0), &delta1(5.0)).unwrap() - 2.0).abs() < ORACLE_TOL);
    // 2d, distance 5 capped at 2.
    let a = DiscreteMeasure::delta(vec![0.0, 0.0]);
    let b = DiscreteMeasure::delta(vec![3.0, 4.0]);
    assert!((dbl_distance(&a, &b).unwrap() - 2.0).abs() < ORACLE_TOL);
    assert!((dbl_two_diracs(&[0.0, 0.0], &[3.0, 4.0]) - 2.0).abs() < ORACLE_TOL);
}

#[test]
fn frozen_mixture_values() {
    // sup 0.5 (f(1) - f(0)) = 0.5.
    let half = DiscreteMeasure::from_1d(&[(0.0, 0.5), (1.0, 0.5)]);
    assert!((dbl_distance(&half, &delta1(0.0)).unwrap() - 0.5).abs() < ORACLE_TOL);
    // sup 0.3 (f(-1) - f(1)) with |f(-1) - f(1)| <= min(2, 2) = 2: 0.6.
    let skew = DiscreteMeasure::from_1d(&[(-1.0, 0.3), (1.0, 0.7)]);
    assert!((dbl_distance(&skew, &delta1(1.0)).unwrap() - 0.6).abs() < ORACLE_TOL);
    // Both atoms at distance 1 from the origin: 0.3 + 0.7 = 1.
    assert!((dbl_to_dirac(&skew, &[0.0]).unwrap() - 1.0).abs() < ORACLE_TOL);
    // Short displacement stays in the Lipschitz regime: 0.75 * 0.1.
    let near = DiscreteMeasure::from_1d(&[(0.0, 0.25), (0.1, 0.75)]);
    assert!((dbl_distance(&near, &delta1(0.0)).unwrap() - 0.075).abs() < ORACLE_TOL);
}

#[test]
fn frozen_wasserstein_comparison() {
    let half = DiscreteMeasure::from_1d(&[(0.0, 0.5), (1.0, 0.5)]);
    let w = wasserstein1(&half, &delta1(0.0)).unwrap();
    assert!((w - 0.5).abs() < ORACLE_TOL);
    // At distance 1 the box constraint is inactive, so the two agree.
    assert!((dbl_distance(&half, &delta1(0.0)).unwrap() - w).abs() < ORACLE_TOL);
    // At distance 10 they split: W1 = 10, d_bl = 2.
    let far = delta1(10.0);
    assert!((wasserstein1(&delta1(0.0), &far).unwrap() - 10.0).abs() < 1e-7);
    assert!((dbl_distance(&delta1(0.0), &far).unwrap() - 2.0).abs() < ORACLE_TOL);
}

#[test]
fn occupation_measure_of_a_ramp_path() {
    let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
    let mut p = Path::new(grid, 1, &[0.0]).unwrap();
    for j in 1..=4 {
        p.push(&[j as f64]);
    }
    let occ = from_path(&p, true).unwrap();
    // Left endpoints 0, 1, 2, 3 with weight 1/4 each; the final state is
    // not occupied.
    assert_eq!(occ.support_size(), 4);
    assert!(occ.is_probability());
    for (loc, w) in &occ.atoms {
        assert!(loc[0] <= 3.0);
        assert!((w - 0.25).abs() < 1e-12);
    }
    let unnorm = from_path(&p, false).unwrap();
    assert!((unnorm.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn second_moment_closed_forms() {
    let sym = DiscreteMeasure::from_1d(&[(-2.0, 0.5), (2.0, 0.5)]);
    assert!((second_moment(&sym).unwrap() - 4.0).abs() < 1e-12);
    let pt = DiscreteMeasure::delta(vec![3.0, 4.0]);
    assert!((second_moment(&pt).unwrap() - 25.0).abs() < 1e-12);
}

#[test]
fn space_time_slices_and_marginals() {
    let cells = vec![
        Cell {
            interval: (0.0, 0.5),
            slice: delta1(0.0),
        },
        Cell {
            interval: (0.5, 1.0),
            slice: delta1(1.0),
        },
    ];
    let nu = SpaceTimeMeasure::new(1, 1.0, cells).unwrap();
    assert_eq!(nu.slice_at(0.0).atoms[0].0[0], 0.0);
    assert_eq!(nu.slice_at(0.25).atoms[0].0[0], 0.0);
    // Cells are left-closed: the breakpoint belongs to the later cell.
    assert_eq!(nu.slice_at(0.5).atoms[0].0[0], 1.0);
    assert_eq!(nu.slice_at(1.0).atoms[0].0[0], 1.0);
    let marg = nu.space_marginal();
    assert!((marg.mass_within(&[0.0], 0.01) - 0.5).abs() < 1e-12);
    assert!((marg.mass_within(&[1.0], 0.01) - 0.5).abs() < 1e-12);
    assert!((nu.mass_up_to(0.5) - 0.5).abs() < 1e-12);
    assert!((nu.mass_up_to(1.0) - 1.0).abs() < 1e-12);
}

#[test]
fn space_time_measure_of_a_two_phase_path() {
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let mut p = Path::new(grid, 1, &[-1.0]).unwrap();
    for j in 1..=10 {
        let t = j as f64 / 10.0;
        p.push(&[if t <= 0.5 { -1.0 } else { 1.0 }]);
    }
    let nu = space_time_from_path(&p).unwrap();
    nu.validate().unwrap();
    assert_eq!(nu.slice_at(0.3).atoms[0].0[0], -1.0);
    assert_eq!(nu.slice_at(0.8).atoms[0].0[0], 1.0);
}

#[test]
fn frozen_space_time_distances() {
    let mu = SpaceTimeMeasure::constant(1.0, delta1(0.0)).unwrap();
    let nu = SpaceTimeMeasure::constant(1.0, delta1(1.0)).unwrap();
    assert!(dbl_space_time(&mu, &mu).unwrap() < ORACLE_TOL);
    // Slices at constant spatial distance 1 for all time, horizon 1.
    assert!((dbl_space_time(&mu, &nu).unwrap() - 1.0).abs() < 1e-7);
    // mu switches to nu's slice halfway: only [0, 1/2) differs.
    let switch = SpaceTimeMeasure::new(
        1,
        1.0,
        vec![
            Cell {
                interval: (0.0, 0.5),
                slice: delta1(0.0),
            },
            Cell {
                interval: (0.5, 1.0),
                slice: delta1(1.0),
            },
        ],
    )
    .unwrap();
    assert!((dbl_space_time(&switch, &nu).unwrap() - 0.5).abs() < 1e-7);
    let short = SpaceTimeMeasure::constant(0.5, delta1(0.0)).unwrap();
    assert!(dbl_space_time(&mu, &short).is_err());
}

#[test]
fn json_shapes_round_trip() {
    let mu = DiscreteMeasure::from_1d(&[(0.5, 0.3), (1.5, 0.7)]);
    let text = serde_json::to_string(&mu).unwrap();
    assert_eq!(text, r#"{"dim":1,"atoms":[[[0.5],0.3],[[1.5],0.7]]}"#);
    let back: DiscreteMeasure = serde_json::from_str(&text).unwrap();
    assert_eq!(back, mu);

    let nu = SpaceTimeMeasure::constant(1.0, mu).unwrap();
    let text = serde_json::to_string(&nu).unwrap();
    let back: SpaceTimeMeasure = serde_json::from_str(&text).unwrap();
    assert_eq!(back, nu);
    back.validate().unwrap();
}

fn measure_1d() -> impl Strategy<Value = DiscreteMeasure> {
    proptest::collection::vec((-3.0..3.0f64, 0.05..1.0f64), 1..=6).prop_map(|pairs| {
        DiscreteMeasure::from_1d(&pairs).normalize().unwrap()
    })
}

fn measure_nd(dim: usize) -> impl Strategy<Value = DiscreteMeasure> {
    proptest::collection::vec(
        (proptest::collection::vec(-3.0..3.0f64, dim), 0.05..1.0f64),
        1..=6,
    )
    .prop_map(move |atoms| DiscreteMeasure::new(dim, atoms).unwrap().normalize().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn axiom_identity(mu in measure_1d()) {
        prop_assert!(dbl_distance(&mu, &mu).unwrap().abs() < 1e-9);
    }

    #[test]
    fn axiom_symmetry(mu in measure_nd(2), nu in measure_nd(2)) {
        let ab = dbl_distance(&mu, &nu).unwrap();
        let ba = dbl_distance(&nu, &mu).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn axiom_triangle(mu in measure_1d(), nu in measure_1d(), rho in measure_1d()) {
        let ac = dbl_distance(&mu, &rho).unwrap();
        let ab = dbl_distance(&mu, &nu).unwrap();
        let bc = dbl_distance(&nu, &rho).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn dirac_closed_form(
        dim in 1usize..=3,
        raw in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 3),
    ) {
        let x: Vec<f64> = raw.iter().take(dim).map(|p| p.0).collect();
        let y: Vec<f64> = raw.iter().take(dim).map(|p| p.1).collect();
        let lp = dbl_distance(
            &DiscreteMeasure::delta(x.clone()),
            &DiscreteMeasure::delta(y.clone()),
        ).unwrap();
        prop_assert!((lp - dbl_two_diracs(&x, &y)).abs() < 1e-9);
    }

    #[test]
    fn dirac_formula_matches_the_lp(mu in measure_1d(), y in -4.0..4.0f64) {
        let lp = dbl_distance(&mu, &delta1(y)).unwrap();
        let formula = dbl_to_dirac(&mu, &[y]).unwrap();
        prop_assert!((lp - formula).abs() < 1e-9);
    }

    #[test]
    fn invariant_under_atom_order_and_splitting(mu in measure_1d(), nu in measure_1d()) {
        let base = dbl_distance(&mu, &nu).unwrap();
        let mut reversed = mu.atoms.clone();
        reversed.reverse();
        let rev = DiscreteMeasure::new(1, reversed).unwrap();
        prop_assert!((dbl_distance(&rev, &nu).unwrap() - base).abs() < 1e-9);
        // Split the first atom's weight in two.
        let mut split = mu.atoms.clone();
        let (loc, w) = split[0].clone();
        split[0].1 = w / 2.0;
        split.push((loc, w / 2.0));
        let sp = DiscreteMeasure::new(1, split).unwrap();
        prop_assert!((dbl_distance(&sp, &nu).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn chain_mode_agrees_with_pairwise(mu in measure_1d(), nu in measure_1d()) {
        let chain = dbl_distance_with_mode(&mu, &nu, DblMode::Chain1d).unwrap();
        let pair = dbl_distance_with_mode(&mu, &nu, DblMode::Pairwise).unwrap();
        prop_assert!((chain - pair).abs() < 1e-9);
    }

    #[test]
    fn dominated_by_wasserstein_and_capped(mu in measure_1d(), nu in measure_1d()) {
        let d = dbl_distance(&mu, &nu).unwrap();
        prop_assert!(d <= wasserstein1(&mu, &nu).unwrap() + 1e-9);
        prop_assert!(d <= 2.0 + 1e-9);
        prop_assert!(d >= -1e-12);
    }

    #[test]
    fn coarsening_stays_within_its_reported_bound(mu in measure_nd(2), h in 0.01..0.5f64) {
        let c = mu.coarsen(h).unwrap();
        let d = dbl_distance(&mu, &c.measure).unwrap();
        prop_assert!(d <= c.dbl_error_bound + 1e-9);
        prop_assert!(c.measure.support_size() <= mu.support_size());
    }
}
