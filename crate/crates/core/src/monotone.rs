//! Monotone iteration for the coupled system on a finite box.
//!
//! Starting from `u₀ = v₀ = 0`, each step solves
//!
//! ```text
//! (Δ − L) u_k = λ e^{v_{k−1}} (e^{u_{k−1}} − 1) + g − L u_{k−1}
//! (Δ − L) v_k = λ e^{u_{k−1}} (e^{v_{k−1}} − 1) + h − L v_{k−1}
//! ```
//!
//! in Ω with `u_k = v_k = 0` on δΩ, producing pointwise non-increasing
//! sequences when `L > 2λ`. The two solves only read the previous iterate,
//! so they run concurrently. Each solve is carried out for the increment
//! `u_k − u_{k−1}`, whose right-hand side is the nonlinear defect of the
//! previous iterate; the iterates are the same, but the relative linear
//! tolerance then applies to a quantity that shrinks to zero.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, LatticePoint, VertexKind};
use crate::linear_solver::{cg_solve, SolverParams};
use crate::operators::{normal_derivative_at, stencil_at, FieldPair, LatticeFunction};
use crate::vortex::{Side, VortexConfig};

/// Pointwise increase tolerated between consecutive iterates.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Slack on the sub-solution inequalities and on the ordering certificate.
pub const SUBSOLUTION_SLACK: f64 = 1e-9;

/// Ratio `L / λ` used when no shift is given.
pub const DEFAULT_SHIFT_FACTOR: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    /// The shift L; must satisfy `L > 2λ`.
    pub shift: f64,
    pub lambda: f64,
    /// Stop once `‖u_k − u_{k−1}‖∞ + ‖v_k − v_{k−1}‖∞ ≤ stop_tol`.
    pub stop_tol: f64,
    pub max_outer: usize,
    /// Keep iterating at least this many steps even after `stop_tol` is met.
    /// Iterates from zero on nested boxes are ordered step by step, so
    /// matching step counts keeps the computed box solutions ordered.
    pub min_outer: usize,
    pub linear: SolverParams,
}

impl SchemeParams {
    pub fn new(lambda: f64) -> Self {
        Self {
            shift: DEFAULT_SHIFT_FACTOR * lambda,
            lambda,
            stop_tol: 1e-10,
            max_outer: 100_000,
            min_outer: 1,
            linear: SolverParams::with_tol(1e-12),
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        let factor = self.shift / self.lambda;
        Self {
            lambda,
            shift: factor * lambda,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("{} must be positive", self.lambda),
            });
        }
        if !(self.shift > 2.0 * self.lambda) || !self.shift.is_finite() {
            return Err(Error::ShiftTooSmall {
                shift: self.shift,
                lambda: self.lambda,
            });
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "stop_tol",
                reason: format!("{} must be positive", self.stop_tol),
            });
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidParameter {
                name: "max_outer",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub outer_iters: usize,
    pub final_diff_u: f64,
    pub final_diff_v: f64,
    pub monotone_ok: bool,
    /// Largest pointwise increase seen between iterates (≤ 0 when exact).
    pub max_increase: f64,
    pub flux_defect_u: f64,
    pub flux_defect_v: f64,
    pub residual_u: f64,
    pub residual_v: f64,
    /// `max_k Σ_{collar} |u_k|`, which stays below B.
    pub collar_sum_u: f64,
    pub collar_sum_v: f64,
    pub linear_iters: usize,
}

/// `λ e^{v}(e^{u} − 1) + g − Δu` at interior indices of the padded arrays.
fn defect_into(
    domain: &LatticeBox,
    u: &[f64],
    v: &[f64],
    source: &[f64],
    lambda: f64,
    out: &mut [f64],
) {
    for &i in domain.interior_indices() {
        out[i] = lambda * v[i].exp() * u[i].exp_m1() + source[i] - stencil_at(domain, u, i);
    }
}

/// Sup norms of `Δu − λe^v(e^u − 1) − g` and its `v` analogue over Ω.
pub fn nonlinear_residual(pair: &FieldPair, cfg: &VortexConfig, lambda: f64) -> (f64, f64) {
    let d = pair.domain().clone();
    let g = LatticeFunction::source(d.clone(), cfg, Side::U);
    let h = LatticeFunction::source(d.clone(), cfg, Side::V);
    let mut ru = vec![0.0; d.padded_len()];
    let mut rv = vec![0.0; d.padded_len()];
    defect_into(
        &d,
        pair.u.values(),
        pair.v.values(),
        g.values(),
        lambda,
        &mut ru,
    );
    defect_into(
        &d,
        pair.v.values(),
        pair.u.values(),
        h.values(),
        lambda,
        &mut rv,
    );
    let sup = |r: &[f64]| {
        d.interior_indices()
            .iter()
            .fold(0.0f64, |m, &i| m.max(r[i].abs()))
    };
    (sup(&ru), sup(&rv))
}

/// Defect of `Σ_{δΩ} ∂u/∂n̄ + λ Σ_Ω e^{v}(1 − e^{u}) = Σ_Ω g` (u side) and
/// the analogous identity for v.
pub fn flux_defects(pair: &FieldPair, cfg: &VortexConfig, lambda: f64) -> (f64, f64) {
    let d = pair.domain();
    let one = |a: &LatticeFunction, b: &LatticeFunction, side: Side| {
        let (a, b) = (a.values(), b.values());
        let flux: f64 = d
            .boundary_indices()
            .iter()
            .map(|&i| normal_derivative_at(d, a, i))
            .sum();
        let mass: f64 = d
            .interior_indices()
            .iter()
            .map(|&i| -b[i].exp() * a[i].exp_m1())
            .sum();
        let src: f64 = cfg
            .vortices(side)
            .iter()
            .filter(|v| d.contains_interior(&v.point))
            .map(|v| crate::vortex::FOUR_PI * v.multiplicity)
            .sum();
        flux + lambda * mass - src
    };
    (
        one(&pair.u, &pair.v, Side::U),
        one(&pair.v, &pair.u, Side::V),
    )
}

fn check_sources_inside(domain: &LatticeBox, cfg: &VortexConfig) -> Result<()> {
    if cfg.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: cfg.dim(),
        });
    }
    match cfg.all_points().find(|p| !domain.contains_interior(p)) {
        Some(p) => Err(Error::SourceOutsideDomain(p.clone())),
        None => Ok(()),
    }
}

struct Step {
    du: Vec<f64>,
    dv: Vec<f64>,
    linear_iters: usize,
}

fn step(
    domain: &LatticeBox,
    u: &[f64],
    v: &[f64],
    g: &[f64],
    h: &[f64],
    params: &SchemeParams,
) -> Result<Step> {
    let n = domain.padded_len();
    let solve_side = |a: &[f64], b: &[f64], src: &[f64]| -> Result<(Vec<f64>, usize)> {
        let mut rhs = vec![0.0; n];
        defect_into(domain, a, b, src, params.lambda, &mut rhs);
        let mut x = vec![0.0; n];
        let stats = cg_solve(domain, params.shift, &rhs, &mut x, &params.linear)?;
        Ok((x, stats.iterations))
    };
    let (ru, rv) = rayon::join(|| solve_side(u, v, g), || solve_side(v, u, h));
    let (du, iu) = ru?;
    let (dv, iv) = rv?;
    Ok(Step {
        du,
        dv,
        linear_iters: iu + iv,
    })
}

fn largest_increase(domain: &LatticeBox, d: &[f64]) -> (f64, usize) {
    domain
        .interior_indices()
        .iter()
        .map(|&i| (d[i], i))
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
}

fn validate_state(state: &FieldPair, domain: &LatticeBox) -> Result<()> {
    if **state.domain() != *domain {
        return Err(Error::DomainMismatch);
    }
    for f in [&state.u, &state.v] {
        if let Some(&i) = domain
            .boundary_indices()
            .iter()
            .find(|&&i| f.values()[i] != 0.0)
        {
            return Err(Error::InvalidParameter {
                name: "state",
                reason: format!("nonzero boundary value at {}", domain.point_at(i)),
            });
        }
    }
    Ok(())
}

/// One step `(u_{k−1}, v_{k−1}) ↦ (u_k, v_k)`.
pub fn iterate_once(
    state: &FieldPair,
    cfg: &VortexConfig,
    params: &SchemeParams,
    domain: &Arc<LatticeBox>,
) -> Result<FieldPair> {
    params.validate()?;
    check_sources_inside(domain, cfg)?;
    validate_state(state, domain)?;
    let g = LatticeFunction::source(domain.clone(), cfg, Side::U);
    let h = LatticeFunction::source(domain.clone(), cfg, Side::V);
    let s = step(
        domain,
        state.u.values(),
        state.v.values(),
        g.values(),
        h.values(),
        params,
    )?;
    for d in [&s.du, &s.dv] {
        let (inc, at) = largest_increase(domain, d);
        if inc > MONOTONE_SLACK {
            return Err(Error::MonotonicityViolated {
                amount: inc,
                vertex: domain.point_at(at),
                iteration: 1,
            });
        }
    }
    let add = |a: &LatticeFunction, d: &[f64]| {
        let vals = a.values().iter().zip(d).map(|(x, y)| x + y).collect();
        LatticeFunction::from_padded(domain.clone(), vals)
    };
    FieldPair::new(add(&state.u, &s.du)?, add(&state.v, &s.dv)?)
}

/// Iterate from zero until the successive difference drops below
/// `stop_tol`, returning the box solution `(u_Ω, v_Ω)`.
pub fn solve_on_box(
    domain: &Arc<LatticeBox>,
    cfg: &VortexConfig,
    params: &SchemeParams,
) -> Result<(FieldPair, SolveReport)> {
    params.validate()?;
    check_sources_inside(domain, cfg)?;
    let n = domain.padded_len();
    let g = LatticeFunction::source(domain.clone(), cfg, Side::U);
    let h = LatticeFunction::source(domain.clone(), cfg, Side::V);
    let collar = domain.collar_indices();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut report = SolveReport {
        max_increase: f64::NEG_INFINITY,
        ..Default::default()
    };

    let mut converged = false;
    for k in 1..=params.max_outer {
        let s = step(domain, &u, &v, g.values(), h.values(), params)?;
        report.linear_iters += s.linear_iters;
        for d in [&s.du, &s.dv] {
            let (inc, at) = largest_increase(domain, d);
            report.max_increase = report.max_increase.max(inc);
            if inc > MONOTONE_SLACK {
                return Err(Error::MonotonicityViolated {
                    amount: inc,
                    vertex: domain.point_at(at),
                    iteration: k,
                });
            }
        }
        let mut diff_u = 0.0f64;
        let mut diff_v = 0.0f64;
        for &i in domain.interior_indices() {
            u[i] += s.du[i];
            v[i] += s.dv[i];
            diff_u = diff_u.max(s.du[i].abs());
            diff_v = diff_v.max(s.dv[i].abs());
        }
        report.collar_sum_u = report
            .collar_sum_u
            .max(collar.iter().map(|&i| u[i].abs()).sum());
        report.collar_sum_v = report
            .collar_sum_v
            .max(collar.iter().map(|&i| v[i].abs()).sum());
        report.outer_iters = k;
        report.final_diff_u = diff_u;
        report.final_diff_v = diff_v;
        log::trace!("outer {k}: diff_u {diff_u:e} diff_v {diff_v:e}");
        if k >= params.min_outer && diff_u + diff_v <= params.stop_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::OuterIterationCap {
            iterations: params.max_outer,
            last_diff: report.final_diff_u + report.final_diff_v,
        });
    }

    let pair = FieldPair::new(
        LatticeFunction::from_padded(domain.clone(), u)?,
        LatticeFunction::from_padded(domain.clone(), v)?,
    )?;
    report.monotone_ok = true;
    (report.residual_u, report.residual_v) = nonlinear_residual(&pair, cfg, params.lambda);
    (report.flux_defect_u, report.flux_defect_v) = flux_defects(&pair, cfg, params.lambda);
    Ok((pair, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingCertificate {
    /// `W ≤ u_Ω` and `V ≤ v_Ω` everywhere on Ω̄ (within slack).
    pub ordered: bool,
    /// `max (W − u_Ω)` over Ω̄.
    pub max_excess_u: f64,
    pub max_excess_v: f64,
    /// First vertex where the ordering fails, if any.
    pub witness: Option<(Side, LatticePoint)>,
}

/// Verify that `(W, V)` is a sub-solution on the domain and compare it with
/// the box solution `(u_Ω, v_Ω)`.
pub fn check_subsupersolution(
    candidate: &FieldPair,
    reference: &FieldPair,
    cfg: &VortexConfig,
    params: &SchemeParams,
    domain: &Arc<LatticeBox>,
) -> Result<OrderingCertificate> {
    if **candidate.domain() != **domain || **reference.domain() != **domain {
        return Err(Error::DomainMismatch);
    }
    check_sources_inside(domain, cfg)?;
    let lambda = params.lambda;
    let (w, vv) = (candidate.u.values(), candidate.v.values());
    for (side, a, b) in [(Side::U, w, vv), (Side::V, vv, w)] {
        let name = match side {
            Side::U => "u",
            Side::V => "v",
        };
        for &i in domain.interior_indices() {
            let x = domain.point_at(i);
            let lhs = stencil_at(domain, a, i);
            let rhs = lambda * b[i].exp() * a[i].exp_m1() + cfg.source(side, &x);
            if lhs < rhs - SUBSOLUTION_SLACK {
                return Err(Error::NotSubsolution {
                    equation: name,
                    vertex: x,
                    defect: rhs - lhs,
                });
            }
        }
        for &i in domain.boundary_indices() {
            if a[i] > SUBSOLUTION_SLACK {
                return Err(Error::NotSubsolution {
                    equation: name,
                    vertex: domain.point_at(i),
                    defect: a[i],
                });
            }
        }
    }

    let mut cert = OrderingCertificate {
        ordered: true,
        max_excess_u: f64::NEG_INFINITY,
        max_excess_v: f64::NEG_INFINITY,
        witness: None,
    };
    for side in [Side::U, Side::V] {
        let (c, r) = (candidate.get(side).values(), reference.get(side).values());
        for (i, kind) in (0..domain.padded_len()).map(|i| (i, domain.kind_at(i))) {
            if kind == VertexKind::Outside {
                continue;
            }
            let excess = c[i] - r[i];
            match side {
                Side::U => cert.max_excess_u = cert.max_excess_u.max(excess),
                Side::V => cert.max_excess_v = cert.max_excess_v.max(excess),
            }
            if excess > SUBSOLUTION_SLACK && cert.witness.is_none() {
                cert.ordered = false;
                cert.witness = Some((side, domain.point_at(i)));
            }
        }
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(dim: usize, r: i32) -> Arc<LatticeBox> {
        Arc::new(LatticeBox::cube(dim, r).unwrap())
    }

    #[test]
    fn trivial_sources_give_zero_in_one_iteration() {
        let d = cube(2, 4);
        let cfg = VortexConfig::empty(2);
        let (pair, report) = solve_on_box(&d, &cfg, &SchemeParams::new(1.0)).unwrap();
        assert_eq!(pair.u.sup_norm(), 0.0);
        assert_eq!(pair.v.sup_norm(), 0.0);
        assert_eq!(report.outer_iters, 1);
        assert!(report.monotone_ok);
    }

    #[test]
    fn iterate_from_zero_with_no_sources_stays_zero() {
        let d = cube(2, 3);
        let next = iterate_once(
            &FieldPair::zeros(d.clone()),
            &VortexConfig::empty(2),
            &SchemeParams::new(1.0),
            &d,
        )
        .unwrap();
        assert_eq!(next.u.sup_norm() + next.v.sup_norm(), 0.0);
    }

    #[test]
    fn shift_must_exceed_twice_lambda() {
        let d = cube(2, 3);
        let mut params = SchemeParams::new(1.0);
        params.shift = 2.0;
        assert!(matches!(
            solve_on_box(&d, &VortexConfig::single(2, Side::U), &params),
            Err(Error::ShiftTooSmall { .. })
        ));
    }

    #[test]
    fn source_outside_domain_is_rejected() {
        let d = cube(2, 2);
        let cfg = VortexConfig::new(2, vec![(LatticePoint::new(vec![3, 0]), 1)], vec![]).unwrap();
        assert!(matches!(
            solve_on_box(&d, &cfg, &SchemeParams::new(1.0)),
            Err(Error::SourceOutsideDomain(_))
        ));
    }

    #[test]
    fn single_side_source_leaves_other_side_zero() {
        let d = cube(2, 6);
        let cfg = VortexConfig::single(2, Side::U);
        let params = SchemeParams::new(1.0);
        let (pair, report) = solve_on_box(&d, &cfg, &params).unwrap();
        assert_eq!(pair.v.sup_norm(), 0.0);
        assert!(pair.u.min_value() < -1.0);
        assert!(report.residual_u <= 10.0 * params.stop_tol * (1.0 + cfg.total_mass()));
        assert!(report.collar_sum_u < cfg.total_mass());
    }

    #[test]
    fn constant_candidate_is_not_a_subsolution() {
        let d = cube(2, 3);
        let cfg = VortexConfig::single(2, Side::U);
        let params = SchemeParams::new(1.0);
        let (sol, _) = solve_on_box(&d, &cfg, &params).unwrap();
        let c = LatticeFunction::from_fn(d.clone(), |_| -30.0);
        let cand = FieldPair::new(c.clone(), c).unwrap();
        match check_subsupersolution(&cand, &sol, &cfg, &params, &d) {
            Err(Error::NotSubsolution {
                equation, vertex, ..
            }) => {
                assert_eq!(equation, "u");
                assert_eq!(vertex, LatticePoint::origin(2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn solution_is_its_own_subsolution() {
        let d = cube(2, 4);
        let cfg = VortexConfig::new(
            2,
            vec![(LatticePoint::new(vec![1, 0]), 1)],
            vec![(LatticePoint::new(vec![-1, 1]), 2)],
        )
        .unwrap();
        let params = SchemeParams::new(2.0);
        let (sol, _) = solve_on_box(&d, &cfg, &params).unwrap();
        let cert = check_subsupersolution(&sol, &sol, &cfg, &params, &d).unwrap();
        assert!(cert.ordered);
        assert_eq!(cert.max_excess_u, 0.0);
    }

    #[test]
    fn ordering_violation_reports_witness() {
        let d = cube(2, 3);
        let cfg = VortexConfig::single(2, Side::U);
        let params = SchemeParams::new(1.0);
        let (sol, _) = solve_on_box(&d, &cfg, &params).unwrap();
        // a valid subsolution compared against a reference it exceeds
        let reference = FieldPair::new(
            LatticeFunction::from_fn(d.clone(), |_| -100.0),
            sol.v.clone(),
        )
        .unwrap();
        let cert = check_subsupersolution(&sol, &reference, &cfg, &params, &d).unwrap();
        assert!(!cert.ordered);
        assert_eq!(cert.witness.as_ref().unwrap().0, Side::U);
    }
}
