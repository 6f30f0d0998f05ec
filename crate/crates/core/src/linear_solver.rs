//! Matrix-free conjugate gradients for `(Δ − L) w = f` in Ω with `w = 0` on δΩ.
//!
//! The negated operator `L − Δ` is symmetric positive definite with spectrum
//! inside `[L, L + 4n]`, so plain CG converges without preconditioning.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::LatticeBox;
use crate::operators::{apply_shifted_raw, LatticeFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearMethod {
    #[default]
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Relative residual target `‖(Δ−L)w − f‖₂ ≤ tol ‖f‖₂`.
    pub tol: f64,
    /// Iteration cap; `None` means `10 |Ω|`.
    pub max_iter: Option<usize>,
    pub method: LinearMethod,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            method: LinearMethod::ConjugateGradient,
        }
    }
}

impl SolverParams {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: format!("{} must be positive", self.tol),
            });
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidParameter {
                name: "max_iter",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinearStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solve `(Δ − L) w = f` with zero boundary data, `L > 0`.
pub fn solve_shifted(
    domain: &Arc<LatticeBox>,
    shift: f64,
    f: &LatticeFunction,
    params: &SolverParams,
) -> Result<LatticeFunction> {
    if !(shift > 0.0 && shift.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "L",
            reason: format!("shift {shift} must be positive"),
        });
    }
    solve_dirichlet(domain, shift, f, params).map(|(w, _)| w)
}

/// Like [`solve_shifted`] but also accepts `L = 0` (the Dirichlet Laplacian
/// is still positive definite on a finite box) and reports statistics.
pub fn solve_dirichlet(
    domain: &Arc<LatticeBox>,
    shift: f64,
    f: &LatticeFunction,
    params: &SolverParams,
) -> Result<(LatticeFunction, LinearStats)> {
    params.validate()?;
    if **f.domain() != **domain {
        return Err(Error::DomainMismatch);
    }
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "L",
            reason: format!("shift {shift} must be nonnegative"),
        });
    }
    let mut w = vec![0.0; domain.padded_len()];
    let stats = cg_solve(domain, shift, f.values(), &mut w, params)?;
    Ok((LatticeFunction::from_padded(domain.clone(), w)?, stats))
}

/// CG on `(L − Δ) x = −rhs` over the interior indices. `x` is overwritten,
/// starting from zero; its non-interior entries stay zero.
pub(crate) fn cg_solve(
    domain: &LatticeBox,
    shift: f64,
    rhs: &[f64],
    x: &mut [f64],
    params: &SolverParams,
) -> Result<LinearStats> {
    let idx = domain.interior_indices();
    let max_iter = params.max_iter.unwrap_or(10 * idx.len()).max(1);
    let n = domain.padded_len();
    x.iter_mut().for_each(|v| *v = 0.0);

    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut rr = 0.0;
    for &i in idx {
        r[i] = -rhs[i];
        p[i] = r[i];
        rr += r[i] * r[i];
    }
    let bnorm = rr.sqrt();
    if bnorm == 0.0 {
        return Ok(LinearStats::default());
    }
    let target = params.tol * bnorm;

    for it in 1..=max_iter {
        // ap = (L − Δ) p
        apply_shifted_raw(domain, &p, shift, &mut ap);
        let mut pap = 0.0;
        for &i in idx {
            ap[i] = -ap[i];
            pap += p[i] * ap[i];
        }
        if !(pap > 0.0) {
            return Err(Error::LinearSolveFailed {
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        let alpha = rr / pap;
        let mut rr_new = 0.0;
        for &i in idx {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            rr_new += r[i] * r[i];
        }
        if rr_new.sqrt() <= target {
            return Ok(LinearStats {
                iterations: it,
                relative_residual: rr_new.sqrt() / bnorm,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for &i in idx {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolveFailed {
        iterations: max_iter,
        residual: rr.sqrt() / bnorm,
    })
}
