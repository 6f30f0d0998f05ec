//! Drivers for the λ-dependence of maximal solutions: sweeps in λ, the
//! large-λ lower bound, the small-λ limits, and a multi-start uniqueness
//! probe.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exhaustion::{solve_maximal_with, MaximalSolution, StopRule};
use crate::green::green_combination;
use crate::lattice::{LatticeBox, LatticePoint};
use crate::linear_solver::{solve_dirichlet, SolverParams};
use crate::monotone::{solve_on_box, SchemeParams};
use crate::newton::{newton_solve, NewtonParams, NewtonReport};
use crate::operators::{FieldPair, LatticeFunction};
use crate::vortex::{LogThreshold, Side, VortexConfig};

/// Slack on `u*_{λ₁} ≤ u*_{λ₂}` for `λ₁ < λ₂`.
pub const LAMBDA_MONOTONE_SLACK: f64 = 1e-9;

/// Slack on `Σ (e^u + e^v − 2e^{u+v}) ≤ B/λ`.
pub const ENERGY_SLACK: f64 = 1e-8;

/// Tolerance for pairwise agreement of Newton solutions.
pub const UNIQUENESS_TOL: f64 = 1e-7;

/// Quadrature tolerance for the Green's-function limits.
const GREEN_TOL: f64 = 1e-10;

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `Σ_Ω (e^u + e^v − 2e^{u+v})`, bounded by `B/λ` for box solutions.
pub fn energy_sum(pair: &FieldPair) -> f64 {
    let d = pair.domain();
    d.interior_indices()
        .iter()
        .map(|&i| {
            let (u, v) = (pair.u.values()[i], pair.v.values()[i]);
            u.exp() + v.exp() - 2.0 * (u + v).exp()
        })
        .sum()
}

/// `λ Σ_Ω e^v (1 − e^u)` and its `v` analogue.
pub fn mass_totals(pair: &FieldPair, lambda: f64) -> (f64, f64) {
    let d = pair.domain();
    let (mut mu, mut mv) = (0.0, 0.0);
    for &i in d.interior_indices() {
        let (u, v) = (pair.u.values()[i], pair.v.values()[i]);
        mu -= lambda * v.exp() * u.exp_m1();
        mv -= lambda * u.exp() * v.exp_m1();
    }
    (mu, mv)
}

/// Largest `|u|`, `|v|` on δΩ's interior neighbours (the collar).
fn collar_max(pair: &FieldPair) -> f64 {
    let d = pair.domain();
    d.collar_indices()
        .iter()
        .map(|&i| pair.u.values()[i].abs().max(pair.v.values()[i].abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaSnapshot {
    pub lambda: f64,
    #[serde(skip)]
    pub solution: MaximalSolution,
    /// `min_window (u + v)`.
    pub min_sum: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    pub final_diff: Option<f64>,
    pub energy: f64,
    pub energy_bound: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub collar_max: f64,
}

impl LambdaSnapshot {
    fn new(solution: MaximalSolution, cfg: &VortexConfig) -> Self {
        let lambda = solution.lambda;
        let sum_min = solution
            .u_star
            .values()
            .iter()
            .zip(solution.v_star.values())
            .enumerate()
            .filter(|(i, _)| solution.window.kind_at(*i) != crate::lattice::VertexKind::Outside)
            .map(|(_, (a, b))| a + b)
            .fold(f64::INFINITY, f64::min);
        let (mass_u, mass_v) = mass_totals(&solution.last_box, lambda);
        Self {
            lambda,
            min_sum: sum_min,
            sup_u: solution.u_star.sup_norm(),
            sup_v: solution.v_star.sup_norm(),
            final_diff: solution.final_diff(),
            energy: energy_sum(&solution.last_box),
            energy_bound: cfg.total_mass() / lambda,
            mass_u,
            mass_v,
            collar_max: collar_max(&solution.last_box),
            solution,
        }
    }

    pub fn energy_ok(&self) -> bool {
        self.energy <= self.energy_bound + ENERGY_SLACK
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaSweep {
    pub lambdas: Vec<f64>,
    pub snapshots: Vec<LambdaSnapshot>,
    /// `(λ, error message)` for failed points.
    pub failures: Vec<(f64, String)>,
    /// Largest `u*_{λ_i} − u*_{λ_{i+1}}` (either field) over Ω̄ of the
    /// largest box, across consecutive λ.
    pub max_lambda_excess: f64,
    pub lambda_monotone: bool,
    pub energy_ok: bool,
}

impl LambdaSweep {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.lambda_monotone && self.energy_ok
    }
}

fn check_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::Sweep("empty λ schedule".into()));
    }
    if lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Sweep("λ values must be positive".into()));
    }
    Ok(())
}

/// Maximal solutions for each λ (sorted ascending) on common boxes, so
/// that λ-monotonicity can be checked on the whole largest box.
pub fn sweep_lambda(
    cfg: &VortexConfig,
    lambdas: &[f64],
    window: &LatticeBox,
    params: &SchemeParams,
    radii: &[i32],
    ext_tol: f64,
) -> Result<LambdaSweep> {
    check_lambdas(lambdas)?;
    let mut lambdas = lambdas.to_vec();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let results: Vec<_> = lambdas
        .par_iter()
        .map(|&l| {
            solve_maximal_with(
                cfg,
                &params.with_lambda(l),
                radii,
                window,
                ext_tol,
                StopRule::AllRadii,
            )
        })
        .collect();
    let mut snapshots = Vec::new();
    let mut failures = Vec::new();
    for (l, r) in lambdas.iter().zip(results) {
        match r {
            Ok(sol) => snapshots.push(LambdaSnapshot::new(sol, cfg)),
            Err(e) => failures.push((*l, e.to_string())),
        }
    }
    let mut excess = f64::NEG_INFINITY;
    for w in snapshots.windows(2) {
        let (a, b) = (&w[0].solution.last_box, &w[1].solution.last_box);
        for (fa, fb) in [(&a.u, &b.u), (&a.v, &b.v)] {
            for (x, y) in fa.values().iter().zip(fb.values()) {
                excess = excess.max(x - y);
            }
        }
    }
    let energy_ok = snapshots.iter().all(|s| s.energy_ok());
    Ok(LambdaSweep {
        lambdas,
        max_lambda_excess: excess,
        lambda_monotone: excess <= LAMBDA_MONOTONE_SLACK,
        snapshots,
        failures,
        energy_ok,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub total_mass: f64,
    /// `ln(1 − 2B/λ)`.
    pub bound: f64,
    pub min_sum: f64,
    pub margin: f64,
    pub threshold: LogThreshold,
    /// Whether λ exceeds `2B(2n + e^{4B})`, where the bound is guaranteed.
    pub applicable: bool,
    /// `Some(margin ≥ −1e−9)` when applicable, `None` otherwise.
    pub holds: Option<bool>,
}

pub fn check_large_lambda_bound(
    snapshot: &LambdaSnapshot,
    cfg: &VortexConfig,
) -> Result<BoundReport> {
    let b = cfg.total_mass();
    let lambda = snapshot.lambda;
    if lambda <= 2.0 * b {
        return Err(Error::BoundUndefined { lambda, mass: b });
    }
    let bound = (-2.0 * b / lambda).ln_1p();
    let margin = snapshot.min_sum - bound;
    let threshold = cfg.lambda_threshold();
    let applicable = threshold.exceeded_by(lambda);
    Ok(BoundReport {
        lambda,
        total_mass: b,
        bound,
        min_sum: snapshot.min_sum,
        margin,
        threshold,
        applicable,
        holds: applicable.then_some(margin >= -1e-9),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SideLimit {
    pub side: Side,
    pub has_source: bool,
    /// n = 2: `min_window` of the field per λ. n ≥ 3: `‖field − limit‖∞`.
    pub values: Vec<f64>,
    /// Successive decreases `values[i] − values[i+1]`.
    pub decrements: Vec<f64>,
    /// `‖ψ_n‖∞` (or `‖η_n‖∞`) for n ≥ 3.
    pub limit_sup: Option<f64>,
    pub passed: bool,
    /// First λ pair where the expected monotone trend fails.
    pub offending: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallLambdaReport {
    pub dim: usize,
    pub lambdas: Vec<f64>,
    pub radii: Vec<i32>,
    pub sides: Vec<SideLimit>,
    /// Window differences between the two largest boxes, per λ (n ≥ 3).
    pub truncation: Vec<Option<f64>>,
}

impl SmallLambdaReport {
    pub fn passed(&self) -> bool {
        self.sides.iter().all(|s| s.passed)
    }
}

/// Relative tolerance on the final n ≥ 3 distance to the Green's limit.
pub const SMALL_LAMBDA_REL_TOL: f64 = 0.02;

fn decreasing_trend(values: &[f64], lambdas: &[f64]) -> (Vec<f64>, Option<(f64, f64)>) {
    let dec: Vec<f64> = values.windows(2).map(|w| w[0] - w[1]).collect();
    let off = dec
        .iter()
        .position(|d| !(*d > 0.0))
        .map(|i| (lambdas[i], lambdas[i + 1]));
    (dec, off)
}

/// Behaviour as λ decreases along `lambdas`. For n = 2 every λ is solved on
/// the single box of radius `radii.last()` (centred on the window); for
/// n ≥ 3 each λ runs the exhaustion over `radii` and is compared with the
/// Green's-function combinations on the window.
pub fn check_small_lambda_limit(
    cfg: &VortexConfig,
    window: &LatticeBox,
    params: &SchemeParams,
    lambdas: &[f64],
    radii: &[i32],
) -> Result<SmallLambdaReport> {
    check_lambdas(lambdas)?;
    if lambdas.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Sweep(
            "λ schedule must be strictly decreasing".into(),
        ));
    }
    let Some(&r_max) = radii.last() else {
        return Err(Error::InvalidExhaustion("no radii".into()));
    };
    let n = cfg.dim();
    let window_arc = Arc::new(window.clone());
    let mut sides = Vec::new();
    let truncation;

    if n == 2 {
        let center = LatticePoint(
            window
                .lo()
                .iter()
                .zip(window.hi())
                .map(|(a, b)| (a + b).div_euclid(2))
                .collect(),
        );
        let domain = Arc::new(LatticeBox::centered(&center, r_max)?);
        if !domain.contains_box(window) {
            return Err(Error::InvalidExhaustion(
                "window does not fit in the box".into(),
            ));
        }
        let sols = lambdas
            .par_iter()
            .map(|&l| solve_on_box(&domain, cfg, &params.with_lambda(l)).map(|(p, _)| p))
            .collect::<Result<Vec<_>>>()?;
        for side in [Side::U, Side::V] {
            let fields: Vec<LatticeFunction> = sols
                .iter()
                .map(|p| p.get(side).restrict_to(window_arc.clone()))
                .collect::<Result<_>>()?;
            let has_source = cfg.has_source(side);
            if has_source {
                let values: Vec<f64> = fields.iter().map(|f| f.min_value()).collect();
                let (decrements, offending) = decreasing_trend(&values, lambdas);
                sides.push(SideLimit {
                    side,
                    has_source,
                    values,
                    decrements,
                    limit_sup: None,
                    passed: offending.is_none(),
                    offending,
                });
            } else {
                // checked on the whole box, not just the window
                let values: Vec<f64> = sols.iter().map(|p| p.get(side).sup_norm()).collect();
                let offending = values
                    .iter()
                    .position(|v| *v != 0.0)
                    .map(|i| (lambdas[i], lambdas[i]));
                sides.push(SideLimit {
                    side,
                    has_source,
                    decrements: vec![0.0; values.len() - 1],
                    values,
                    limit_sup: None,
                    passed: offending.is_none(),
                    offending,
                });
            }
        }
        truncation = vec![None; lambdas.len()];
    } else {
        let limits = [
            green_combination(cfg, Side::U, &window_arc, GREEN_TOL)?,
            green_combination(cfg, Side::V, &window_arc, GREEN_TOL)?,
        ];
        let sols = lambdas
            .par_iter()
            .map(|&l| {
                solve_maximal_with(
                    cfg,
                    &params.with_lambda(l),
                    radii,
                    window,
                    1.0,
                    StopRule::Report,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        truncation = sols.iter().map(|s| s.final_diff()).collect();
        for (side, limit) in [Side::U, Side::V].into_iter().zip(&limits) {
            let values: Vec<f64> = sols
                .iter()
                .map(|s| s.field(side).sup_distance(limit))
                .collect::<Result<_>>()?;
            let has_source = cfg.has_source(side);
            let limit_sup = limit.sup_norm();
            let (decrements, offending, passed) = if has_source {
                let (dec, off) = decreasing_trend(&values, lambdas);
                let last_ok = *values.last().unwrap() <= SMALL_LAMBDA_REL_TOL * limit_sup;
                let passed = off.is_none() && last_ok;
                (dec, off, passed)
            } else {
                let off = values
                    .iter()
                    .position(|v| *v != 0.0)
                    .map(|i| (lambdas[i], lambdas[i]));
                (vec![0.0; values.len() - 1], off, off.is_none())
            };
            sides.push(SideLimit {
                side,
                has_source,
                values,
                decrements,
                limit_sup: Some(limit_sup),
                passed,
                offending,
            });
        }
    }
    Ok(SmallLambdaReport {
        dim: n,
        lambdas: lambdas.to_vec(),
        radii: radii.to_vec(),
        sides,
        truncation,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StartOutcome {
    pub start: String,
    pub report: Option<NewtonReport>,
    pub error: Option<String>,
    #[serde(skip)]
    pub solution: Option<FieldPair>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub lambda: f64,
    pub radius: i32,
    /// `min(u*, v*)` on the window, from the monotone solution.
    pub min_field: f64,
    /// Whether `u*, v* ≥ ln ½` on the window.
    pub flagged: bool,
    pub starts: Vec<StartOutcome>,
    /// `(start a, start b, sup distance)` for converged pairs.
    pub pairwise: Vec<(String, String, f64)>,
    /// Distance from each converged Newton solution to the monotone one.
    pub to_monotone: Vec<(String, f64)>,
    pub max_pairwise: f64,
    pub passed: bool,
}

/// Start for the third Newton run: `(ψ_n, η_n)` for n ≥ 3. In ℤ², where no
/// decaying Green's function exists, the system linearised about the vacuum,
/// `(Δ − λ)ψ = g` in Ω with zero boundary data.
fn green_start(cfg: &VortexConfig, domain: &Arc<LatticeBox>, lambda: f64) -> Result<FieldPair> {
    if cfg.dim() >= 3 {
        return FieldPair::new(
            green_combination(cfg, Side::U, domain, GREEN_TOL)?,
            green_combination(cfg, Side::V, domain, GREEN_TOL)?,
        );
    }
    let solve = |side| -> Result<LatticeFunction> {
        let src = LatticeFunction::source(domain.clone(), cfg, side);
        Ok(solve_dirichlet(domain, lambda, &src, &SolverParams::with_tol(1e-13))?.0)
    };
    FieldPair::new(solve(Side::U)?, solve(Side::V)?)
}

/// Newton from three starts on the box of `radius` around the window
/// centre, compared with each other and with the monotone solution.
pub fn uniqueness_probe(
    cfg: &VortexConfig,
    lambda: f64,
    window: &LatticeBox,
    radius: i32,
    params: &SchemeParams,
    newton: &NewtonParams,
) -> Result<UniquenessReport> {
    let center = LatticePoint(
        window
            .lo()
            .iter()
            .zip(window.hi())
            .map(|(a, b)| (a + b).div_euclid(2))
            .collect(),
    );
    let domain = Arc::new(LatticeBox::centered(&center, radius)?);
    if !domain.contains_box(window) {
        return Err(Error::InvalidExhaustion(
            "window does not fit in the box".into(),
        ));
    }
    let (mono, _) = solve_on_box(&domain, cfg, &params.with_lambda(lambda))?;
    let win = Arc::new(window.clone());
    let min_field = mono
        .u
        .restrict_to(win.clone())?
        .min_value()
        .min(mono.v.restrict_to(win)?.min_value());
    let flagged = min_field >= 0.5f64.ln();

    let half = LatticeFunction::from_fn(domain.clone(), |x| {
        if domain.contains_interior(x) {
            0.5f64.ln()
        } else {
            0.0
        }
    });
    let starts = vec![
        ("zero".to_string(), FieldPair::zeros(domain.clone())),
        ("green".to_string(), green_start(cfg, &domain, lambda)?),
        ("half".to_string(), FieldPair::new(half.clone(), half)?),
    ];
    let outcomes: Vec<StartOutcome> = starts
        .into_par_iter()
        .map(
            |(name, s)| match newton_solve(&domain, cfg, lambda, &s, newton) {
                Ok((sol, rep)) => StartOutcome {
                    start: name,
                    report: Some(rep),
                    error: None,
                    solution: Some(sol),
                },
                Err(e) => StartOutcome {
                    start: name,
                    report: None,
                    error: Some(e.to_string()),
                    solution: None,
                },
            },
        )
        .collect();

    let dist = |a: &FieldPair, b: &FieldPair| -> Result<f64> {
        Ok(a.u.sup_distance(&b.u)?.max(a.v.sup_distance(&b.v)?))
    };
    let mut pairwise = Vec::new();
    let mut to_monotone = Vec::new();
    for (i, a) in outcomes.iter().enumerate() {
        let Some(sa) = &a.solution else { continue };
        to_monotone.push((a.start.clone(), dist(sa, &mono)?));
        for b in &outcomes[i + 1..] {
            if let Some(sb) = &b.solution {
                pairwise.push((a.start.clone(), b.start.clone(), dist(sa, sb)?));
            }
        }
    }
    let max_pairwise = pairwise.iter().map(|p| p.2).fold(0.0, f64::max);
    let all_converged = outcomes.iter().all(|o| o.solution.is_some());
    let passed = !flagged || (all_converged && max_pairwise <= UNIQUENESS_TOL);
    Ok(UniquenessReport {
        lambda,
        radius,
        min_field,
        flagged,
        starts: outcomes,
        pairwise,
        to_monotone,
        max_pairwise,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_spacing_hits_endpoints() {
        let l = log_spaced(0.5, 16.0, 6);
        assert_eq!(l.len(), 6);
        assert!((l[0] - 0.5).abs() < 1e-15);
        assert!((l[5] - 16.0).abs() < 1e-12);
        assert!((l[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_undefined_below_twice_mass() {
        let cfg = VortexConfig::single(2, Side::U);
        let w = LatticeBox::cube(2, 2).unwrap();
        let sweep = sweep_lambda(&cfg, &[1.0], &w, &SchemeParams::new(1.0), &[3, 5], 1.0).unwrap();
        assert!(matches!(
            check_large_lambda_bound(&sweep.snapshots[0], &cfg),
            Err(Error::BoundUndefined { .. })
        ));
    }

    #[test]
    fn trivial_sweep_is_zero() {
        let cfg = VortexConfig::empty(2);
        let w = LatticeBox::cube(2, 2).unwrap();
        let sweep = sweep_lambda(
            &cfg,
            &[2.0, 0.5, 1.0],
            &w,
            &SchemeParams::new(1.0),
            &[3, 5],
            1e-8,
        )
        .unwrap();
        assert_eq!(sweep.lambdas, vec![0.5, 1.0, 2.0]);
        assert!(sweep.passed());
        assert!(sweep
            .snapshots
            .iter()
            .all(|s| s.sup_u == 0.0 && s.sup_v == 0.0));
    }

    #[test]
    fn trivial_probe_converges_to_zero() {
        let cfg = VortexConfig::empty(2);
        let w = LatticeBox::cube(2, 2).unwrap();
        let rep = uniqueness_probe(
            &cfg,
            1.0,
            &w,
            3,
            &SchemeParams::new(1.0),
            &NewtonParams::default(),
        )
        .unwrap();
        assert!(rep.flagged && rep.passed);
        assert_eq!(rep.pairwise.len(), 3);
        assert!(rep.max_pairwise < 1e-12);
    }
}
