//! Damped Newton for the coupled box problem
//!
//! ```text
//! F_u = Δu − λ e^{v}(e^{u} − 1) − g,   F_v = Δv − λ e^{u}(e^{v} − 1) − h
//! ```
//!
//! in Ω with zero data on δΩ. Independent of the monotone iteration: it may
//! start anywhere and does not need `u, v ≤ 0`. Small boxes use a dense LU
//! factorisation of the Jacobian; larger ones use Jacobi-preconditioned
//! BiCGSTAB with matrix-free products.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::LatticeBox;
use crate::operators::{stencil_at, FieldPair, LatticeFunction};
use crate::vortex::{Side, VortexConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonParams {
    /// Stop once `max(‖F_u‖∞, ‖F_v‖∞) ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Use the dense Jacobian when `|Ω|` is at most this.
    pub dense_limit: usize,
    /// Relative residual target of the inner Krylov solves.
    pub krylov_tol: f64,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
            dense_limit: 300,
            krylov_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
    pub dense: bool,
    /// Smallest step length accepted by the line search.
    pub min_step: f64,
}

struct Problem<'a> {
    domain: &'a LatticeBox,
    g: Vec<f64>,
    h: Vec<f64>,
    lambda: f64,
}

impl Problem<'_> {
    fn residual(&self, u: &[f64], v: &[f64], fu: &mut [f64], fv: &mut [f64]) -> f64 {
        let mut worst = 0.0f64;
        for &i in self.domain.interior_indices() {
            fu[i] = stencil_at(self.domain, u, i)
                - self.lambda * v[i].exp() * u[i].exp_m1()
                - self.g[i];
            fv[i] = stencil_at(self.domain, v, i)
                - self.lambda * u[i].exp() * v[i].exp_m1()
                - self.h[i];
            let m = fu[i].abs().max(fv[i].abs());
            worst = if m.is_nan() {
                f64::INFINITY
            } else {
                worst.max(m)
            };
        }
        worst
    }

    /// Jacobian coefficients at each interior index: `(a_uu, a_uv, a_vu, a_vv)`
    /// excluding the Laplacian.
    fn local_blocks(&self, u: &[f64], v: &[f64], i: usize) -> [f64; 4] {
        let l = self.lambda;
        let euv = (u[i] + v[i]).exp();
        [
            -l * euv,
            -l * v[i].exp() * u[i].exp_m1(),
            -l * u[i].exp() * v[i].exp_m1(),
            -l * euv,
        ]
    }

    fn dense_step(
        &self,
        u: &[f64],
        v: &[f64],
        fu: &[f64],
        fv: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.domain;
        let idx = d.interior_indices();
        let m = idx.len();
        let mut ordinal = vec![usize::MAX; d.padded_len()];
        for (k, &i) in idx.iter().enumerate() {
            ordinal[i] = k;
        }
        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * m);
        let mut rhs = DVector::<f64>::zeros(2 * m);
        for (k, &i) in idx.iter().enumerate() {
            let [auu, auv, avu, avv] = self.local_blocks(u, v, i);
            let deg = (2 * d.dim()) as f64;
            jac[(k, k)] = -deg + auu;
            jac[(k, m + k)] = auv;
            jac[(m + k, k)] = avu;
            jac[(m + k, m + k)] = -deg + avv;
            for j in d.neighbor_indices(i) {
                if ordinal[j] != usize::MAX {
                    jac[(k, ordinal[j])] += 1.0;
                    jac[(m + k, m + ordinal[j])] += 1.0;
                }
            }
            rhs[k] = -fu[i];
            rhs[m + k] = -fv[i];
        }
        let sol = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NewtonFailed("singular Jacobian".into()))?;
        let mut du = vec![0.0; d.padded_len()];
        let mut dv = vec![0.0; d.padded_len()];
        for (k, &i) in idx.iter().enumerate() {
            du[i] = sol[k];
            dv[i] = sol[m + k];
        }
        Ok((du, dv))
    }

    fn apply_jacobian(&self, blocks: &[[f64; 4]], x: &[f64], y: &mut [f64]) {
        let d = self.domain;
        let n = d.padded_len();
        let (xu, xv) = x.split_at(n);
        let (yu, yv) = y.split_at_mut(n);
        for &i in d.interior_indices() {
            let [auu, auv, avu, avv] = blocks[i];
            yu[i] = stencil_at(d, xu, i) + auu * xu[i] + auv * xv[i];
            yv[i] = stencil_at(d, xv, i) + avu * xu[i] + avv * xv[i];
        }
    }

    /// Right-preconditioned BiCGSTAB for `J δ = −F` on the stacked padded
    /// arrays `[u; v]`.
    fn krylov_step(
        &self,
        u: &[f64],
        v: &[f64],
        fu: &[f64],
        fv: &[f64],
        tol: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.domain;
        let n = d.padded_len();
        let mut blocks = vec![[0.0; 4]; n];
        for &i in d.interior_indices() {
            blocks[i] = self.local_blocks(u, v, i);
        }
        let deg = (2 * d.dim()) as f64;
        let mut inv_diag = vec![0.0; 2 * n];
        for &i in d.interior_indices() {
            inv_diag[i] = 1.0 / (-deg + blocks[i][0]);
            inv_diag[n + i] = 1.0 / (-deg + blocks[i][3]);
        }
        let active: Vec<usize> = d
            .interior_indices()
            .iter()
            .flat_map(|&i| [i, n + i])
            .collect();
        let dot = |a: &[f64], b: &[f64]| active.iter().map(|&i| a[i] * b[i]).sum::<f64>();

        let mut x = vec![0.0; 2 * n];
        let mut r = vec![0.0; 2 * n];
        for &i in d.interior_indices() {
            r[i] = -fu[i];
            r[n + i] = -fv[i];
        }
        let bnorm = dot(&r, &r).sqrt();
        if bnorm == 0.0 {
            return Ok((vec![0.0; n], vec![0.0; n]));
        }
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut p = vec![0.0; 2 * n];
        let mut vv = vec![0.0; 2 * n];
        let mut ph = vec![0.0; 2 * n];
        let mut sh = vec![0.0; 2 * n];
        let mut s = vec![0.0; 2 * n];
        let mut t = vec![0.0; 2 * n];
        let max_iter = 20 * active.len().max(50);
        for _ in 0..max_iter {
            let rho_new = dot(&r0, &r);
            if rho_new == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for &i in &active {
                p[i] = r[i] + beta * (p[i] - omega * vv[i]);
                ph[i] = inv_diag[i] * p[i];
            }
            self.apply_jacobian(&blocks, &ph, &mut vv);
            alpha = rho / dot(&r0, &vv);
            for &i in &active {
                s[i] = r[i] - alpha * vv[i];
            }
            if dot(&s, &s).sqrt() <= tol * bnorm {
                for &i in &active {
                    x[i] += alpha * ph[i];
                }
                return Ok(split(x, n));
            }
            for &i in &active {
                sh[i] = inv_diag[i] * s[i];
            }
            self.apply_jacobian(&blocks, &sh, &mut t);
            omega = dot(&t, &s) / dot(&t, &t);
            for &i in &active {
                x[i] += alpha * ph[i] + omega * sh[i];
                r[i] = s[i] - omega * t[i];
            }
            let rn = dot(&r, &r).sqrt();
            if rn <= tol * bnorm {
                return Ok(split(x, n));
            }
            if !rn.is_finite() || omega == 0.0 {
                break;
            }
        }
        Err(Error::NewtonFailed(
            "inner BiCGSTAB did not converge".into(),
        ))
    }
}

fn split(mut x: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let dv = x.split_off(n);
    (x, dv)
}

/// Solve the coupled box problem by damped Newton from `start`. The start's
/// boundary values are ignored (the boundary data is zero).
pub fn newton_solve(
    domain: &Arc<LatticeBox>,
    cfg: &VortexConfig,
    lambda: f64,
    start: &FieldPair,
    params: &NewtonParams,
) -> Result<(FieldPair, NewtonReport)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("{lambda} must be positive"),
        });
    }
    if **start.domain() != **domain {
        return Err(Error::DomainMismatch);
    }
    if let Some(p) = cfg.all_points().find(|p| !domain.contains_interior(p)) {
        return Err(Error::SourceOutsideDomain(p.clone()));
    }
    let prob = Problem {
        domain,
        g: LatticeFunction::source(domain.clone(), cfg, Side::U).into_values(),
        h: LatticeFunction::source(domain.clone(), cfg, Side::V).into_values(),
        lambda,
    };
    let n = domain.padded_len();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    for &i in domain.interior_indices() {
        u[i] = start.u.values()[i];
        v[i] = start.v.values()[i];
    }
    let mut fu = vec![0.0; n];
    let mut fv = vec![0.0; n];
    let dense = domain.interior_len() <= params.dense_limit;
    let mut res = prob.residual(&u, &v, &mut fu, &mut fv);
    let mut report = NewtonReport {
        iterations: 0,
        residual: res,
        dense,
        min_step: 1.0,
    };
    let (mut tu, mut tv) = (vec![0.0; n], vec![0.0; n]);
    let (mut tfu, mut tfv) = (vec![0.0; n], vec![0.0; n]);

    while res > params.tol {
        if report.iterations == params.max_iter {
            return Err(Error::NewtonFailed(format!(
                "no convergence after {} iterations, residual {res:e}",
                params.max_iter
            )));
        }
        report.iterations += 1;
        let (du, dv) = if dense {
            prob.dense_step(&u, &v, &fu, &fv)?
        } else {
            prob.krylov_step(&u, &v, &fu, &fv, params.krylov_tol)?
        };
        let mut step = 1.0;
        loop {
            for &i in domain.interior_indices() {
                tu[i] = u[i] + step * du[i];
                tv[i] = v[i] + step * dv[i];
            }
            let trial = prob.residual(&tu, &tv, &mut tfu, &mut tfv);
            if trial <= (1.0 - 1e-4 * step) * res {
                res = trial;
                break;
            }
            step *= 0.5;
            if step < 1e-10 {
                if res <= 100.0 * params.tol {
                    // rounding floor reached just above the target
                    report.residual = res;
                    return Ok((assemble(domain, u, v)?, report));
                }
                return Err(Error::NewtonFailed(format!(
                    "line search stalled at residual {res:e}"
                )));
            }
        }
        report.min_step = report.min_step.min(step);
        std::mem::swap(&mut u, &mut tu);
        std::mem::swap(&mut v, &mut tv);
        std::mem::swap(&mut fu, &mut tfu);
        std::mem::swap(&mut fv, &mut tfv);
        log::trace!("newton {}: residual {res:e} step {step}", report.iterations);
    }
    report.residual = res;
    Ok((assemble(domain, u, v)?, report))
}

fn assemble(domain: &Arc<LatticeBox>, u: Vec<f64>, v: Vec<f64>) -> Result<FieldPair> {
    FieldPair::new(
        LatticeFunction::from_padded(domain.clone(), u)?,
        LatticeFunction::from_padded(domain.clone(), v)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticePoint;

    #[test]
    fn zero_sources_stay_at_zero() {
        let d = Arc::new(LatticeBox::cube(2, 3).unwrap());
        let (pair, rep) = newton_solve(
            &d,
            &VortexConfig::empty(2),
            1.0,
            &FieldPair::zeros(d.clone()),
            &NewtonParams::default(),
        )
        .unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(pair.u.sup_norm(), 0.0);
    }

    #[test]
    fn dense_and_krylov_agree() {
        let d = Arc::new(LatticeBox::cube(2, 4).unwrap());
        let cfg = VortexConfig::new(
            2,
            vec![(LatticePoint::origin(2), 1)],
            vec![(LatticePoint::new(vec![1, 1]), 2)],
        )
        .unwrap();
        let start = FieldPair::zeros(d.clone());
        let dense = NewtonParams::default();
        let krylov = NewtonParams {
            dense_limit: 0,
            ..dense
        };
        let (a, ra) = newton_solve(&d, &cfg, 2.0, &start, &dense).unwrap();
        let (b, rb) = newton_solve(&d, &cfg, 2.0, &start, &krylov).unwrap();
        assert!(ra.dense && !rb.dense);
        assert!(a.u.sup_distance(&b.u).unwrap() < 1e-11);
        assert!(a.v.sup_distance(&b.v).unwrap() < 1e-11);
        assert!(ra.residual <= 1e-12);
    }
}
