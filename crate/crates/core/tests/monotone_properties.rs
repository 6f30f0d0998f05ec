mod common;

use std::sync::Arc;

use common::{dense_dirichlet_solve, p, random_config};
use lattice_vortex::exhaustion::{solve_maximal, solve_maximal_with, StopRule};
use lattice_vortex::green::green_combination;
use lattice_vortex::monotone::{
    check_subsupersolution, flux_defects, iterate_once, nonlinear_residual, solve_on_box,
    SchemeParams,
};
use lattice_vortex::newton::{newton_solve, NewtonParams};
use lattice_vortex::{
    Error, FieldPair, LatticeBox, LatticeFunction, LatticePoint, Side, VortexConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

fn cube(dim: usize, r: i32) -> Arc<LatticeBox> {
    Arc::new(LatticeBox::cube(dim, r).unwrap())
}

fn max_of(f: &LatticeFunction) -> f64 {
    f.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn first_iterate_matches_dense_solve() {
    let d = cube(2, 4);
    let cfg = VortexConfig::single(2, Side::U);
    let params = SchemeParams::new(1.0);
    assert_eq!(params.shift, 2.5);
    let one = iterate_once(&FieldPair::zeros(d.clone()), &cfg, &params, &d).unwrap();
    let oracle = dense_dirichlet_solve(&d, |_| 2.5, |x| cfg.source_g(x), |_| 0.0);
    let o = p(&[0, 0]);
    assert!((one.u.get(&o).unwrap() - oracle.get(&o).unwrap()).abs() < 1e-11);
    assert!(one.u.sup_distance(&oracle).unwrap() < 1e-11);
    assert_eq!(one.v.sup_norm(), 0.0);
    // the value sits well below zero but above −4π/L
    let u0 = oracle.get(&o).unwrap();
    assert!(u0 < 0.0 && u0 > -FOUR_PI / 2.5, "{u0}");
}

#[test]
fn second_iterate_lies_below_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..120 {
        let dim = if k % 3 == 0 { 3 } else { 2 };
        let r = rng.gen_range(2..=if dim == 3 { 3 } else { 5 });
        let d = cube(dim, r);
        let cfg = random_config(&mut rng, &d, 3);
        let params = SchemeParams::new(rng.gen_range(0.25..4.0));
        let one = iterate_once(&FieldPair::zeros(d.clone()), &cfg, &params, &d).unwrap();
        let two = iterate_once(&one, &cfg, &params, &d).unwrap();
        for side in [Side::U, Side::V] {
            assert!(max_of(one.get(side)) <= 1e-12, "config {k}");
            for (a, b) in two.get(side).values().iter().zip(one.get(side).values()) {
                assert!(a <= &(b + 1e-12), "config {k}: {a} > {b}");
            }
        }
    }
}

#[test]
fn zero_sources_give_zero_solution_in_one_step() {
    let d = cube(3, 3);
    let (pair, report) =
        solve_on_box(&d, &VortexConfig::empty(3), &SchemeParams::new(2.0)).unwrap();
    assert_eq!(report.outer_iters, 1);
    assert_eq!(pair.u.sup_norm() + pair.v.sup_norm(), 0.0);
}

#[test]
fn single_vortex_agrees_with_newton() {
    let d = cube(2, 6);
    let cfg = VortexConfig::single(2, Side::U);
    let mut params = SchemeParams::new(1.0);
    params.stop_tol = 1e-13;
    let (mono, report) = solve_on_box(&d, &cfg, &params).unwrap();
    assert!(report.monotone_ok);
    assert_eq!(mono.v.sup_norm(), 0.0);
    let (newt, nrep) = newton_solve(
        &d,
        &cfg,
        1.0,
        &FieldPair::zeros(d.clone()),
        &NewtonParams::default(),
    )
    .unwrap();
    assert!(nrep.dense);
    assert!(nrep.residual < 1e-12, "{}", nrep.residual);
    let o = p(&[0, 0]);
    assert!((mono.u.get(&o).unwrap() - newt.u.get(&o).unwrap()).abs() < 1e-10);
    assert!(mono.u.sup_distance(&newt.u).unwrap() < 1e-10);
    assert!(newt.v.sup_norm() < 1e-12);
}

#[test]
fn symmetric_config_gives_symmetric_solution() {
    let d = cube(3, 4);
    let cfg = VortexConfig::new(3, vec![(p(&[0, 0, 0]), 2)], vec![(p(&[0, 0, 0]), 1)]).unwrap();
    let (pair, _) = solve_on_box(&d, &cfg, &SchemeParams::new(1.5)).unwrap();
    let images = |x: &LatticePoint| -> Vec<LatticePoint> {
        let c = x.coords();
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut out = Vec::new();
        for perm in perms {
            for signs in 0..8 {
                let y: Vec<i32> = (0..3)
                    .map(|i| {
                        if signs >> i & 1 == 1 {
                            -c[perm[i]]
                        } else {
                            c[perm[i]]
                        }
                    })
                    .collect();
                out.push(LatticePoint(y));
            }
        }
        out
    };
    for side in [Side::U, Side::V] {
        let f = pair.get(side);
        for x in d.interior_points() {
            let fx = f.get(&x).unwrap();
            for y in images(&x) {
                assert!((f.get(&y).unwrap() - fx).abs() <= 1e-12, "{x:?} vs {y:?}");
            }
        }
    }
}

#[test]
fn translation_shifts_the_maximal_solution() {
    let cfg = VortexConfig::new(2, vec![(p(&[0, 0]), 1)], vec![(p(&[1, 0]), 1)]).unwrap();
    let shift = p(&[3, -2]);
    let moved = cfg.translated(&shift);
    let params = SchemeParams::new(1.0);
    let window = LatticeBox::cube(2, 3).unwrap();
    let window_moved = LatticeBox::centered(&shift, 3).unwrap();
    let radii = [6, 9, 13, 19, 28];
    let a = solve_maximal(&cfg, &params, &radii, &window, 1e-8).unwrap();
    let b = solve_maximal(&moved, &params, &radii, &window_moved, 1e-8).unwrap();
    for side in [Side::U, Side::V] {
        for x in a.window.interior_points() {
            let fa = a.field(side).get(&x).unwrap();
            let fb = b.field(side).get(&x.add(&shift)).unwrap();
            assert!((fa - fb).abs() <= 1e-10, "{x:?}");
        }
    }
}

#[test]
fn solutions_decrease_as_the_box_grows() {
    let cfg = VortexConfig::new(
        2,
        vec![(p(&[0, 0]), 1), (p(&[1, 1]), 1)],
        vec![(p(&[-1, 0]), 2)],
    )
    .unwrap();
    let window = LatticeBox::cube(2, 3).unwrap();
    let sol = solve_maximal_with(
        &cfg,
        &SchemeParams::new(0.5),
        &[4, 6, 8],
        &window,
        1e-8,
        StopRule::Report,
    )
    .unwrap();
    assert_eq!(sol.box_radii, vec![4, 6, 8]);
    assert!(sol.domain_monotone(), "{:?}", sol.monotone_excess);
    assert!(sol.sup_diffs.iter().all(|&d| d >= 0.0));
}

#[test]
fn green_combination_is_a_subsolution_below_the_box_solution() {
    let d = cube(3, 4);
    let cfg = VortexConfig::new(3, vec![(p(&[0, 0, 0]), 1)], vec![(p(&[1, 0, 0]), 1)]).unwrap();
    let params = SchemeParams::new(1.0);
    let (sol, _) = solve_on_box(&d, &cfg, &params).unwrap();
    let psi = FieldPair::new(
        green_combination(&cfg, Side::U, &d, 1e-12).unwrap(),
        green_combination(&cfg, Side::V, &d, 1e-12).unwrap(),
    )
    .unwrap();
    let cert = check_subsupersolution(&psi, &sol, &cfg, &params, &d).unwrap();
    assert!(cert.ordered, "{cert:?}");
    for side in [Side::U, Side::V] {
        for (a, b) in psi.get(side).values().iter().zip(sol.get(side).values()) {
            assert!(a <= b);
        }
    }
    // the box solution itself passes with equality
    let same = check_subsupersolution(&sol, &sol, &cfg, &params, &d).unwrap();
    assert!(same.ordered);
    assert!(same.max_excess_u.abs() < 1e-15);
}

#[test]
fn constant_candidate_is_rejected_at_a_vortex() {
    let d = cube(2, 3);
    let cfg = VortexConfig::single(2, Side::U);
    let params = SchemeParams::new(1.0);
    let (sol, _) = solve_on_box(&d, &cfg, &params).unwrap();
    let c = LatticeFunction::from_fn(d.clone(), |_| -20.0);
    let cand = FieldPair::new(c.clone(), c).unwrap();
    match check_subsupersolution(&cand, &sol, &cfg, &params, &d) {
        Err(Error::NotSubsolution {
            equation, vertex, ..
        }) => {
            assert_eq!(equation, "u");
            assert_eq!(vertex, p(&[0, 0]));
        }
        other => panic!("expected rejection, got {other:?}"),
    }
}

#[test]
fn collar_sum_stays_below_total_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let d = cube(2, rng.gen_range(2..=6));
        let cfg = random_config(&mut rng, &d, 3);
        let (_, rep) =
            solve_on_box(&d, &cfg, &SchemeParams::new(rng.gen_range(0.25..4.0))).unwrap();
        let b = cfg.total_mass();
        assert!(
            rep.collar_sum_u < b && rep.collar_sum_v < b,
            "{rep:?} B={b}"
        );
    }
}

#[test]
fn shift_at_or_below_twice_lambda_is_rejected() {
    let d = cube(2, 2);
    let mut params = SchemeParams::new(1.0);
    params.shift = 2.0;
    let err = solve_on_box(&d, &VortexConfig::single(2, Side::U), &params).unwrap_err();
    assert!(matches!(err, Error::ShiftTooSmall { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn box_solutions_satisfy_invariants(
        seed in any::<u64>(),
        dim in 2usize..=3,
        lambda in 0.25f64..4.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rng.gen_range(2..=if dim == 3 { 3 } else { 6 });
        let d = cube(dim, r);
        let cfg = random_config(&mut rng, &d, 3);
        let (pair, rep) = solve_on_box(&d, &cfg, &SchemeParams::new(lambda)).unwrap();
        prop_assert!(rep.monotone_ok);
        prop_assert!(rep.max_increase <= 1e-12);
        prop_assert!(max_of(&pair.u) <= 0.0 && max_of(&pair.v) <= 0.0);
        let (ru, rv) = nonlinear_residual(&pair, &cfg, lambda);
        prop_assert!(ru.max(rv) <= 1e-8);
        let (fu, fv) = flux_defects(&pair, &cfg, lambda);
        let scale = lambda * d.interior_len() as f64 + cfg.total_mass();
        prop_assert!(fu.max(fv) <= 1e-8 * scale);
    }
}
