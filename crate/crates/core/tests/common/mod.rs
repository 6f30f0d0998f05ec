//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use lattice_vortex::lattice::neighbors;
use lattice_vortex::{LatticeBox, LatticeFunction, LatticePoint, VortexConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn p(c: &[i32]) -> LatticePoint {
    LatticePoint::new(c.to_vec())
}

/// Box with random corners in `[-r, r]ⁿ`, at least one vertex wide.
pub fn random_box(rng: &mut ChaCha8Rng, dim: usize, r: i32) -> Arc<LatticeBox> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for _ in 0..dim {
        let a = rng.gen_range(-r..=r);
        let b = rng.gen_range(-r..=r);
        lo.push(a.min(b));
        hi.push(a.max(b));
    }
    Arc::new(LatticeBox::from_corners(lo, hi).unwrap())
}

pub fn random_function(rng: &mut ChaCha8Rng, d: &Arc<LatticeBox>) -> LatticeFunction {
    LatticeFunction::from_fn(d.clone(), |_| rng.gen_range(-1.0..1.0))
}

/// Up to `max_vortices` vortices of multiplicity 1–2 spread over both sides,
/// all strictly inside `domain`.
pub fn random_config(
    rng: &mut ChaCha8Rng,
    domain: &LatticeBox,
    max_vortices: usize,
) -> VortexConfig {
    let interior: Vec<LatticePoint> = domain.interior_points().collect();
    let count = rng.gen_range(1..=max_vortices);
    let mut u = Vec::new();
    let mut v = Vec::new();
    for _ in 0..count {
        let pt = interior[rng.gen_range(0..interior.len())].clone();
        let m = rng.gen_range(1..=2);
        if rng.gen_bool(0.5) {
            u.push((pt, m));
        } else {
            v.push((pt, m));
        }
    }
    VortexConfig::new(domain.dim(), u, v).unwrap()
}

/// Dense solve of `(Δ − c(x)) w = f` in Ω with `w = b` on δΩ, assembled
/// from the neighbour lists rather than the library's stencil.
pub fn dense_dirichlet_solve(
    domain: &Arc<LatticeBox>,
    c: impl Fn(&LatticePoint) -> f64,
    f: impl Fn(&LatticePoint) -> f64,
    b: impl Fn(&LatticePoint) -> f64,
) -> LatticeFunction {
    let pts: Vec<LatticePoint> = domain.interior_points().collect();
    let m = pts.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (k, x) in pts.iter().enumerate() {
        let nb = neighbors(x);
        a[(k, k)] = -(nb.len() as f64) - c(x);
        rhs[k] = f(x);
        for y in nb {
            match domain.interior_ordinal(&y) {
                Some(j) => a[(k, j)] += 1.0,
                None => rhs[k] -= b(&y),
            }
        }
    }
    let sol = a.lu().solve(&rhs).expect("nonsingular");
    LatticeFunction::from_fn(domain.clone(), |x| match domain.interior_ordinal(x) {
        Some(k) => sol[k],
        None => b(x),
    })
}

/// Edges of Ω̄ with at least one endpoint in Ω, enumerated from neighbour lists.
pub fn edges(d: &LatticeBox) -> Vec<(LatticePoint, LatticePoint)> {
    let mut seen = BTreeSet::new();
    for x in d.interior_points() {
        for y in neighbors(&x) {
            let e = if x < y {
                (x.clone(), y)
            } else {
                (y, x.clone())
            };
            seen.insert(e);
        }
    }
    seen.into_iter().collect()
}

/// `(D_Ω(f, g), Σ |terms|)`.
pub fn form_by_edges(f: &LatticeFunction, g: &LatticeFunction) -> (f64, f64) {
    let mut total = 0.0;
    let mut scale = 0.0;
    for (x, y) in edges(f.domain()) {
        let t =
            (f.get(&x).unwrap() - f.get(&y).unwrap()) * (g.get(&x).unwrap() - g.get(&y).unwrap());
        total += t;
        scale += t.abs();
    }
    (total, scale)
}
