use std::f64::consts::PI;
use std::time::Instant;

use std::sync::Arc;

use lattice_vortex::green::{
    green_box_estimates, green_combination, green_sup_norm_sweep, green_value,
    green_value_monte_carlo, symmetry_class, GreenTable,
};
use lattice_vortex::lattice::neighbors;
use lattice_vortex::operators::laplacian;
use lattice_vortex::{LatticeBox, LatticePoint, Side, VortexConfig};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn p(c: &[i32]) -> LatticePoint {
    LatticePoint::new(c.to_vec())
}

/// Simple-cubic return-probability constant in closed form; `G_3(0) = −u/6`.
fn watson_simple_cubic() -> f64 {
    6f64.sqrt() / (32.0 * PI.powi(3))
        * gamma(1.0 / 24.0)
        * gamma(5.0 / 24.0)
        * gamma(7.0 / 24.0)
        * gamma(11.0 / 24.0)
}

#[test]
fn origin_value_in_three_dimensions_matches_closed_form() {
    let g = green_value(3, &LatticePoint::origin(3), 1e-12).unwrap();
    let exact = -watson_simple_cubic() / 6.0;
    assert!((g.value - exact).abs() < 1e-11, "{} vs {exact}", g.value);
    assert!(g.err_est <= 1e-12);
}

#[test]
fn stencil_identity_holds() {
    for n in [3usize, 4, 5] {
        for x in [LatticePoint::origin(n), LatticePoint::on_axis(n, 0, 1), {
            let mut c = vec![0; n];
            c[0] = 2;
            c[1] = -1;
            c[n - 1] += 3;
            LatticePoint(c)
        }] {
            let gx = green_value(n, &x, 1e-12).unwrap().value;
            let lap: f64 = neighbors(&x)
                .iter()
                .map(|y| green_value(n, y, 1e-12).unwrap().value - gx)
                .sum();
            let delta = if x.norm1() == 0 { 1.0 } else { 0.0 };
            assert!((lap - delta).abs() < 1e-10, "n={n} x={x}: {lap}");
        }
    }
}

#[test]
fn far_field_approaches_continuum_kernel() {
    // G_3(x) ≈ −1/(4π|x|) with relative correction O(|x|^{-2})
    let x = p(&[12, 0, 0]);
    let g = green_value(3, &x, 1e-12).unwrap().value;
    let cont = -1.0 / (4.0 * PI * 12.0);
    assert!(((g - cont) / cont).abs() < 5e-3);
}

#[test]
fn box_extrapolation_agrees_with_quadrature() {
    let pts = [p(&[0, 0, 0]), p(&[1, 0, 0]), p(&[1, 1, 1]), p(&[2, 1, 0])];
    let boxed = green_box_estimates(3, &pts, &[10, 15, 20]).unwrap();
    for (x, b) in pts.iter().zip(&boxed) {
        let q = green_value(3, x, 1e-12).unwrap();
        let diff = (b.value - q.value).abs();
        assert!(diff < 1e-4, "x={x}: {} vs {}", b.value, q.value);
        assert!(
            diff <= b.err_est + q.err_est + 1e-6,
            "x={x}: diff {diff} err {}",
            b.err_est
        );
    }
}

#[test]
fn monte_carlo_agrees_in_high_dimension() {
    for n in [5usize, 6] {
        let x = LatticePoint::on_axis(n, 1, 1);
        let mc = green_value_monte_carlo(n, &x, 400_000, 11).unwrap();
        let q = green_value(n, &x, 1e-12).unwrap();
        assert!((mc.value - q.value).abs() <= mc.err_est * 1.5, "n={n}");
    }
}

#[test]
fn sup_norm_decreases_and_respects_bounds() {
    let sweep = green_sup_norm_sweep(&[3, 4, 5, 6, 7, 8], 1e-10).unwrap();
    assert!(sweep.passed(), "{sweep:?}");
    for e in &sweep.entries {
        assert!(e.sup_norm > 1.0 / (2.0 * e.n as f64));
    }
}

#[test]
fn table_covers_radius_five_quickly() {
    let t0 = Instant::now();
    let t = GreenTable::build(3, 5, 1e-10).unwrap();
    assert!(t0.elapsed().as_secs_f64() < 30.0);
    assert!(t.max_err_est() <= 1e-10);
    let g0 = t.get(&LatticePoint::origin(3)).unwrap().value;
    for (_, v) in t.iter() {
        assert!(v.value < 0.0);
        assert!(v.value >= g0);
    }
}

#[test]
fn tabulated_values_satisfy_the_stencil_on_a_window() {
    let t = GreenTable::build(3, 4, 1e-10).unwrap();
    let window = LatticeBox::cube(3, 3).unwrap();
    for x in window.interior_points() {
        let gx = t.get(&x).unwrap().value;
        let lap: f64 = neighbors(&x)
            .iter()
            .map(|y| t.get(y).unwrap().value - gx)
            .sum();
        let delta = if x.norm1() == 0 { 1.0 } else { 0.0 };
        assert!((lap - delta).abs() < 5e-6, "{x}: {lap}");
    }
}

#[test]
fn origin_value_exceeds_one_vertex_dirichlet_solve() {
    // Δu = δ₀ on the single vertex {0} with zero boundary gives u(0) = −1/(2n)
    for n in 3..=6 {
        let g0 = green_value(n, &LatticePoint::origin(n), 1e-10)
            .unwrap()
            .value;
        assert!(g0 <= -1.0 / (2 * n) as f64, "n={n}: {g0}");
    }
}

#[test]
fn combination_is_linear_in_the_vortices() {
    let four_pi = 4.0 * PI;
    let w = Arc::new(LatticeBox::cube(3, 3).unwrap());
    let a = p(&[0, 0, 0]);
    let b = p(&[1, -1, 0]);
    let single = VortexConfig::single(3, Side::U);
    let pair = VortexConfig::new(3, vec![(a.clone(), 1), (b.clone(), 1)], vec![]).unwrap();
    let psi1 = green_combination(&single, Side::U, &w, 1e-11).unwrap();
    let psi2 = green_combination(&pair, Side::U, &w, 1e-11).unwrap();
    let eta = green_combination(&pair, Side::V, &w, 1e-11).unwrap();
    assert_eq!(eta.sup_norm(), 0.0);
    let t = GreenTable::build(3, 5, 1e-11).unwrap();
    for x in w.interior_points().chain(w.boundary_points()) {
        let g = |q: &LatticePoint| t.get(&x.sub(q)).unwrap().value;
        assert!((psi1.get(&x).unwrap() - four_pi * g(&a)).abs() < 1e-12);
        assert!((psi2.get(&x).unwrap() - four_pi * (g(&a) + g(&b))).abs() < 1e-12);
    }
    for x in w.interior_points() {
        let want = pair.source_g(&x);
        assert!((laplacian(&psi2, &x).unwrap() - want).abs() < 1e-8, "{x}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn value_depends_only_on_symmetry_class(
        a in -4i32..=4, b in -4i32..=4, c in -4i32..=4, perm in 0usize..6,
    ) {
        let x = p(&[a, b, c]);
        let coords = [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]][perm];
        let y = p(&[-coords[0], coords[1], -coords[2]]);
        prop_assert_eq!(symmetry_class(&x), symmetry_class(&y));
        let gx = green_value(3, &x, 1e-11).unwrap().value;
        let gy = green_value(3, &y, 1e-11).unwrap().value;
        prop_assert_eq!(gx, gy);
        prop_assert!(gx < 0.0);
    }
}
