//! Box solutions on a growing family of concentric cubes, monitored on a
//! fixed window, converge downward to the maximal topological solution.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, LatticePoint};
use crate::monotone::{solve_on_box, SchemeParams, SolveReport};
use crate::operators::{FieldPair, LatticeFunction};
use crate::vortex::{Side, VortexConfig};

pub const DEFAULT_RADII: [i32; 6] = [4, 6, 9, 13, 19, 28];
pub const DEFAULT_WINDOW_RADIUS: i32 = 5;
pub const DEFAULT_EXT_TOL: f64 = 1e-8;

/// Slack on `u^{Ω_{i+1}} ≤ u^{Ω_i}`.
pub const DOMAIN_MONOTONE_SLACK: f64 = 1e-12;

/// Points within this ℓ∞ distance of δΩ are left out of decay fits.
const FIT_BOUNDARY_GAP: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopRule {
    /// Stop at the first radius whose window difference is below `ext_tol`.
    #[default]
    FirstConverged,
    /// Solve every radius; `ext_tol` is still checked on the last pair.
    AllRadii,
    /// Solve every radius and report the differences without judging them.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub axis: usize,
    /// Positive fitted rate `−slope` of `ln|u*|` along the axis.
    pub rate: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
    /// `ln(1 + λ/2n)`.
    pub theoretical: f64,
}

#[derive(Debug, Clone)]
pub struct MaximalSolution {
    pub window: Arc<LatticeBox>,
    pub center: LatticePoint,
    pub lambda: f64,
    pub u_star: LatticeFunction,
    pub v_star: LatticeFunction,
    pub box_radii: Vec<i32>,
    /// `sup_window |Δu| + sup_window |Δv|` between consecutive radii.
    pub sup_diffs: Vec<f64>,
    /// Largest `u^{Ω_{i+1}} − u^{Ω_i}` (either field) over Ω̄_i per step.
    pub monotone_excess: Vec<f64>,
    pub reports: Vec<SolveReport>,
    /// Solution on the largest box that was solved.
    pub last_box: FieldPair,
    pub decay_fit: Option<DecayFit>,
}

impl MaximalSolution {
    pub fn field(&self, side: Side) -> &LatticeFunction {
        match side {
            Side::U => &self.u_star,
            Side::V => &self.v_star,
        }
    }

    pub fn domain_monotone(&self) -> bool {
        self.monotone_excess
            .iter()
            .all(|&e| e <= DOMAIN_MONOTONE_SLACK)
    }

    pub fn final_diff(&self) -> Option<f64> {
        self.sup_diffs.last().copied()
    }
}

/// Default observation window around the vortex centroid.
pub fn default_window(cfg: &VortexConfig) -> Result<LatticeBox> {
    LatticeBox::centered(&cfg.centroid(), DEFAULT_WINDOW_RADIUS)
}

/// The default schedule with radii too small to hold `window` dropped.
pub fn default_radii_for(window: &LatticeBox) -> Vec<i32> {
    let need = (0..window.dim())
        .map(|i| (window.hi()[i] - window.lo()[i]) / 2)
        .max()
        .unwrap_or(0);
    DEFAULT_RADII
        .iter()
        .copied()
        .filter(|&r| r >= need)
        .collect()
}

/// Centre of a cube-shaped window.
fn window_center(window: &LatticeBox) -> Result<LatticePoint> {
    let c: Vec<i32> = window
        .lo()
        .iter()
        .zip(window.hi())
        .map(|(a, b)| {
            if (a + b) % 2 == 0 {
                Ok((a + b) / 2)
            } else {
                Err(Error::InvalidBox("window has no centre vertex".into()))
            }
        })
        .collect::<Result<_>>()?;
    Ok(LatticePoint(c))
}

pub fn solve_maximal(
    cfg: &VortexConfig,
    params: &SchemeParams,
    radii: &[i32],
    window: &LatticeBox,
    ext_tol: f64,
) -> Result<MaximalSolution> {
    solve_maximal_with(
        cfg,
        params,
        radii,
        window,
        ext_tol,
        StopRule::FirstConverged,
    )
}

pub fn solve_maximal_with(
    cfg: &VortexConfig,
    params: &SchemeParams,
    radii: &[i32],
    window: &LatticeBox,
    ext_tol: f64,
    rule: StopRule,
) -> Result<MaximalSolution> {
    params.validate()?;
    if !(ext_tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "ext_tol",
            reason: format!("{ext_tol} must be positive"),
        });
    }
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidExhaustion(
            "radii must be nonempty and strictly increasing".into(),
        ));
    }
    let center = window_center(window)?;
    let exhaustion = crate::lattice::Exhaustion::concentric(window.clone(), &center, radii)?;
    if let Some(p) = cfg.all_points().find(|p| !window.contains_interior(p)) {
        return Err(Error::SourceOutsideDomain(p.clone()));
    }
    let window = Arc::new(window.clone());

    let mut prev: Option<(FieldPair, FieldPair)> = None;
    let mut out = MaximalSolution {
        window: window.clone(),
        center,
        lambda: params.lambda,
        u_star: LatticeFunction::zeros(window.clone()),
        v_star: LatticeFunction::zeros(window.clone()),
        box_radii: Vec::new(),
        sup_diffs: Vec::new(),
        monotone_excess: Vec::new(),
        reports: Vec::new(),
        last_box: FieldPair::zeros(window.clone()),
        decay_fit: None,
    };
    let mut local = *params;
    let mut converged = false;

    for (bx, &r) in exhaustion.boxes().iter().zip(radii) {
        let domain = Arc::new(bx.clone());
        let (pair, report) = solve_on_box(&domain, cfg, &local)?;
        local.min_outer = local.min_outer.max(report.outer_iters);
        let on_window = FieldPair::new(
            pair.u.restrict_to(window.clone())?,
            pair.v.restrict_to(window.clone())?,
        )?;
        log::debug!(
            "radius {r}: {} outer iterations, residual {:e}",
            report.outer_iters,
            report.residual_u.max(report.residual_v)
        );
        out.box_radii.push(r);
        out.reports.push(report);

        if let Some((prev_box, prev_window)) = &prev {
            let sub = prev_box.domain().clone();
            let mut excess = f64::NEG_INFINITY;
            let mut worst = None;
            for (new, old) in [(&pair.u, &prev_box.u), (&pair.v, &prev_box.v)] {
                let restricted = new.restrict_to(sub.clone())?;
                for (i, (a, b)) in restricted.values().iter().zip(old.values()).enumerate() {
                    if a - b > excess {
                        excess = a - b;
                        worst = Some(i);
                    }
                }
            }
            if excess > DOMAIN_MONOTONE_SLACK {
                return Err(Error::DomainMonotonicityViolated {
                    amount: excess,
                    vertex: sub.point_at(worst.unwrap()),
                    inner: *out.box_radii.iter().rev().nth(1).unwrap(),
                    outer: r,
                });
            }
            out.monotone_excess.push(excess);
            let diff = on_window.u.sup_distance(&prev_window.u)?
                + on_window.v.sup_distance(&prev_window.v)?;
            out.sup_diffs.push(diff);
            if diff <= ext_tol {
                converged = true;
                if rule == StopRule::FirstConverged {
                    prev = Some((pair, on_window));
                    break;
                }
            } else {
                converged = false;
            }
        } else if cfg.is_trivial() {
            // zero sources: the zero pair is exact on every box
            converged = true;
            if rule == StopRule::FirstConverged {
                prev = Some((pair, on_window));
                break;
            }
        }
        prev = Some((pair, on_window));
    }

    if !converged && rule != StopRule::Report {
        return Err(Error::ExhaustionNotConverged {
            ext_tol,
            diffs: out.sup_diffs,
        });
    }
    let (last_box, on_window) = prev.unwrap();
    out.u_star = on_window.u;
    out.v_star = on_window.v;
    out.last_box = last_box;
    out.decay_fit = estimate_decay_rate(&out, 0).ok();
    Ok(out)
}

/// Least-squares fit of `ln|u*(c + t e_axis)| = a − rate·t` over the usable
/// points `t ≥ 1` of the largest box, using the field with the larger sup norm.
pub fn estimate_decay_rate(sol: &MaximalSolution, axis: usize) -> Result<DecayFit> {
    let domain = sol.last_box.domain();
    let n = domain.dim();
    if axis >= n {
        return Err(Error::InvalidParameter {
            name: "axis",
            reason: format!("{axis} out of range for dimension {n}"),
        });
    }
    let field = if sol.last_box.u.sup_norm() >= sol.last_box.v.sup_norm() {
        &sol.last_box.u
    } else {
        &sol.last_box.v
    };
    let floor = 100.0 * f64::EPSILON;
    let reach = domain.hi()[axis] - sol.center.0[axis] - FIT_BOUNDARY_GAP;
    let mut pts = Vec::new();
    for t in 1..=reach.max(0) {
        let x = sol.center.offset(axis, t);
        let val = field.get(&x).unwrap_or(0.0).abs();
        if val >= floor {
            pts.push((t as f64, val.ln()));
        }
    }
    if field.sup_norm() <= 0.0 || pts.len() < 5 {
        return Err(Error::DecayFit(format!(
            "{} usable points along axis {axis}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    let syy: f64 = pts.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok(DecayFit {
        axis,
        rate: -slope,
        intercept: my - slope * mt,
        r2,
        points: pts.len(),
        theoretical: (1.0 + sol.lambda / (2.0 * n as f64)).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_sources_converge_at_first_radius() {
        let cfg = VortexConfig::empty(2);
        let w = default_window(&cfg).unwrap();
        let radii = default_radii_for(&w);
        assert_eq!(radii, vec![6, 9, 13, 19, 28]);
        let sol = solve_maximal(&cfg, &SchemeParams::new(1.0), &radii, &w, 1e-8).unwrap();
        assert_eq!(sol.box_radii, vec![6]);
        assert_eq!(sol.u_star.sup_norm(), 0.0);
        assert!(matches!(
            estimate_decay_rate(&sol, 0),
            Err(Error::DecayFit(_))
        ));
    }

    #[test]
    fn window_must_fit_inside_smallest_box() {
        let cfg = VortexConfig::single(2, Side::U);
        let w = LatticeBox::cube(2, 5).unwrap();
        assert!(solve_maximal(&cfg, &SchemeParams::new(1.0), &[4, 8], &w, 1e-8).is_err());
    }

    #[test]
    fn unconverged_radii_report_differences() {
        let cfg = VortexConfig::single(2, Side::U);
        let w = LatticeBox::cube(2, 2).unwrap();
        match solve_maximal(&cfg, &SchemeParams::new(0.5), &[3, 4], &w, 1e-14) {
            Err(Error::ExhaustionNotConverged { diffs, .. }) => {
                assert_eq!(diffs.len(), 1);
                assert!(diffs[0] > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn solutions_decrease_with_radius() {
        let cfg = VortexConfig::single(2, Side::U);
        let w = LatticeBox::cube(2, 3).unwrap();
        let sol = solve_maximal_with(
            &cfg,
            &SchemeParams::new(1.0),
            &[4, 6, 8],
            &w,
            1e-6,
            StopRule::Report,
        )
        .unwrap();
        assert_eq!(sol.box_radii, vec![4, 6, 8]);
        assert!(sol.domain_monotone());
        assert!(sol.sup_diffs[1] < sol.sup_diffs[0]);
    }
}
