//! The lattice Green's function `G_n` of Δ on ℤⁿ (n ≥ 3),
//!
//! ```text
//! G_n(x) = −(2π)^{−n} ∫_{[−π,π]ⁿ} e^{iz·x} / (2n − 2 Σ cos z_j) dz .
//! ```
//!
//! Writing `1/a = ∫₀^∞ e^{−at} dt` turns the n-dimensional Brillouin-zone
//! integral into a one-dimensional one whose integrand factorises over the
//! coordinates:
//!
//! ```text
//! G_n(x) = −∫₀^∞ Π_j e^{−2t} I_{|x_j|}(2t) dt ,
//! e^{−z} I_k(z) = π^{−1} ∫₀^π e^{z(cos θ − 1)} cos kθ dθ .
//! ```
//!
//! The inner periodic integral is evaluated with the trapezoidal rule (which
//! converges geometrically for periodic analytic integrands). The outer
//! integral is split at `T`: composite Gauss–Legendre on geometrically
//! growing panels over `[0, T]`, and the large-`t` asymptotic series of the
//! Bessel factors integrated in closed form over `[T, ∞)`. The error
//! estimate compares two Gauss–Legendre orders and adds the size of the
//! first omitted tail term.
//!
//! A finite-box Poisson solve with extrapolation in the box size gives an
//! independent estimate, and a Monte Carlo estimator of the original
//! integral is available for n ≥ 5, where its variance is finite.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, LatticePoint};
use crate::linear_solver::{solve_dirichlet, SolverParams};
use crate::operators::LatticeFunction;
use crate::vortex::{Side, VortexConfig, FOUR_PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMethod {
    HeatKernel,
    MonteCarlo,
    BoxSolve,
}

impl GreenMethod {
    pub fn tag(self) -> &'static str {
        match self {
            GreenMethod::HeatKernel => "heat_kernel",
            GreenMethod::MonteCarlo => "monte_carlo",
            GreenMethod::BoxSolve => "box_solve",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenValue {
    pub value: f64,
    pub err_est: f64,
    pub method: GreenMethod,
}

/// Sorted absolute coordinates: `G_n` depends on nothing else.
pub fn symmetry_class(x: &LatticePoint) -> Vec<u32> {
    let mut k: Vec<u32> = x.0.iter().map(|c| c.unsigned_abs()).collect();
    k.sort_unstable();
    k
}

fn check_dim(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::GreenDimension(n));
    }
    Ok(())
}

/// Gauss–Legendre nodes and weights on [−1, 1].
fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(order);
    let n = order as f64;
    for i in 0..order {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // P_n(x) by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `e^{−z} I_k(z)` for each `k` in `ks`, by the trapezoidal rule in θ.
fn scaled_bessel_i(z: f64, ks: &[u32], out: &mut [f64]) {
    let kmax = ks.iter().copied().max().unwrap_or(0) as f64;
    // aliasing error ~ exp(−(2M − k)² / (2z)); ask for exp(−45)
    let m = (0.5 * (kmax + (90.0 * z).sqrt()) + 16.0).ceil() as usize;
    let h = PI / m as f64;
    out.iter_mut().for_each(|o| *o = 0.0);
    for j in 0..=m {
        let theta = j as f64 * h;
        let w = if j == 0 || j == m { 0.5 } else { 1.0 };
        let e = w * (z * (theta.cos() - 1.0)).exp();
        if e == 0.0 {
            continue;
        }
        for (o, &k) in out.iter_mut().zip(ks) {
            *o += e * (k as f64 * theta).cos();
        }
    }
    out.iter_mut().for_each(|o| *o *= h / PI);
}

/// Coefficients of `e^{−z} I_k(z) ≈ (2πz)^{−1/2} Σ_m c_m z^{−m}`.
fn bessel_asymptotic_coeffs(k: u32, terms: usize) -> Vec<f64> {
    let mu = 4.0 * (k as f64).powi(2);
    let mut c = vec![1.0; terms];
    for m in 1..terms {
        let odd = (2 * m - 1) as f64;
        c[m] = -c[m - 1] * (mu - odd * odd) / (m as f64 * 8.0);
    }
    c
}

const TAIL_TERMS: usize = 10;

/// Heat-kernel quadrature at a given panel refinement.
struct HeatKernelRule {
    ks: Vec<u32>,
    split: f64,
    refine: usize,
}

impl HeatKernelRule {
    fn integrand(&self, t: f64, buf: &mut [f64]) -> f64 {
        scaled_bessel_i(2.0 * t, &self.ks, buf);
        buf.iter().product()
    }

    fn panels(&self) -> Vec<(f64, f64)> {
        let mut edges = vec![0.0, 0.125];
        while *edges.last().unwrap() < self.split {
            let next = (edges.last().unwrap() * 2.0).min(self.split);
            edges.push(next);
        }
        let mut out = Vec::new();
        for w in edges.windows(2) {
            let pieces = 1usize << self.refine;
            let step = (w[1] - w[0]) / pieces as f64;
            for i in 0..pieces {
                out.push((w[0] + i as f64 * step, w[0] + (i + 1) as f64 * step));
            }
        }
        out
    }

    /// Returns `(low-order, high-order)` estimates of `∫₀^T`.
    fn body(&self) -> (f64, f64) {
        let lo = gauss_legendre(12);
        let hi = gauss_legendre(24);
        let mut buf = vec![0.0; self.ks.len()];
        let (mut q_lo, mut q_hi) = (0.0, 0.0);
        for (a, b) in self.panels() {
            let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
            for &(x, w) in &lo {
                q_lo += r * w * self.integrand(c + r * x, &mut buf);
            }
            for &(x, w) in &hi {
                q_hi += r * w * self.integrand(c + r * x, &mut buf);
            }
        }
        (q_lo, q_hi)
    }

    /// `∫_T^∞` of the product of asymptotic series, and the size of the
    /// last retained term.
    fn tail(&self) -> (f64, f64) {
        let n = self.ks.len();
        let mut poly = vec![0.0; TAIL_TERMS];
        poly[0] = 1.0;
        for &k in &self.ks {
            let c = bessel_asymptotic_coeffs(k, TAIL_TERMS);
            let mut next = vec![0.0; TAIL_TERMS];
            for (i, a) in poly.iter().enumerate() {
                for (j, b) in c.iter().enumerate() {
                    if i + j < TAIL_TERMS {
                        next[i + j] += a * b;
                    }
                }
            }
            poly = next;
        }
        // (4πt)^{−n/2} Σ_m P_m (2t)^{−m}, integrated over [T, ∞)
        let t = self.split;
        let half_n = n as f64 / 2.0;
        let pref = (4.0 * PI).powf(-half_n);
        let mut total = 0.0;
        let mut last = 0.0;
        for (m, pm) in poly.iter().enumerate() {
            let expo = half_n + m as f64 - 1.0;
            let term = pref * pm * 2f64.powi(-(m as i32)) * t.powf(-expo) / expo;
            total += term;
            last = term.abs();
        }
        (total, last)
    }
}

/// `G_n(x)` with an error estimate no larger than `tol`.
pub fn green_value(n: usize, x: &LatticePoint, tol: f64) -> Result<GreenValue> {
    check_dim(n)?;
    if x.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.dim(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("{tol} must be positive"),
        });
    }
    let ks = symmetry_class(x);
    let kmax = *ks.last().unwrap() as f64;
    let split = (50.0 * kmax * kmax).max(500.0);
    let mut best = f64::INFINITY;
    for refine in 0..5 {
        let rule = HeatKernelRule {
            ks: ks.clone(),
            split,
            refine,
        };
        let (q_lo, q_hi) = rule.body();
        let (tail, tail_err) = rule.tail();
        let value = -(q_hi + tail);
        let err_est = (q_hi - q_lo).abs() + tail_err + 4.0 * f64::EPSILON * value.abs();
        if err_est <= tol {
            return Ok(GreenValue {
                value,
                err_est,
                method: GreenMethod::HeatKernel,
            });
        }
        best = best.min(err_est);
    }
    Err(Error::QuadratureTolerance {
        achieved: best,
        requested: tol,
    })
}

/// Plain Monte Carlo over the Brillouin zone; needs n ≥ 5 for finite
/// variance. `err_est` is three standard errors.
pub fn green_value_monte_carlo(
    n: usize,
    x: &LatticePoint,
    samples: usize,
    seed: u64,
) -> Result<GreenValue> {
    check_dim(n)?;
    if n < 5 {
        return Err(Error::InvalidParameter {
            name: "method",
            reason: format!("Monte Carlo estimator has infinite variance for n = {n} < 5"),
        });
    }
    if x.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.dim(),
        });
    }
    if samples < 2 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "need at least 2 samples".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    let mut z = vec![0.0; n];
    for s in 1..=samples {
        for zi in z.iter_mut() {
            *zi = rng.gen_range(-PI..PI);
        }
        let denom: f64 = z.iter().map(|zi| 2.0 - 2.0 * zi.cos()).sum();
        let phase: f64 = z.iter().zip(&x.0).map(|(zi, xi)| zi * *xi as f64).sum();
        let sample = if denom > 0.0 {
            -phase.cos() / denom
        } else {
            0.0
        };
        let delta = sample - mean;
        mean += delta / s as f64;
        m2 += delta * (sample - mean);
    }
    let var = m2 / (samples - 1) as f64;
    Ok(GreenValue {
        value: mean,
        err_est: 3.0 * (var / samples as f64).sqrt(),
        method: GreenMethod::MonteCarlo,
    })
}

/// Finite-box estimate: solve `Δw = δ₀` with zero boundary data on cubes of
/// the given radii and extrapolate `w_R(x) = G + a ρ^{2−n} + b ρ^{1−n}`,
/// `ρ = R + 1`. The error estimate is the spread between the three-radius
/// fit and the two-radius fit on the largest radii.
pub fn green_box_estimates(
    n: usize,
    points: &[LatticePoint],
    radii: &[i32],
) -> Result<Vec<GreenValue>> {
    check_dim(n)?;
    if radii.len() < 3 || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name: "radii",
            reason: "need at least three increasing radii".into(),
        });
    }
    let radii = &radii[radii.len() - 3..];
    let params = SolverParams::with_tol(1e-13);
    let mut samples = vec![Vec::with_capacity(3); points.len()];
    for &r in radii {
        let domain = Arc::new(LatticeBox::cube(n, r)?);
        let mut rhs = LatticeFunction::zeros(domain.clone());
        rhs.set(&LatticePoint::origin(n), 1.0)?;
        let (w, _) = solve_dirichlet(&domain, 0.0, &rhs, &params)?;
        for (s, p) in samples.iter_mut().zip(points) {
            if !domain.contains_interior(p) {
                return Err(Error::StencilOutsideDomain(p.clone()));
            }
            s.push(w.get(p).unwrap());
        }
    }
    let rho: Vec<f64> = radii.iter().map(|&r| r as f64 + 1.0).collect();
    let e1 = 2.0 - n as f64;
    let e2 = 1.0 - n as f64;
    Ok(samples
        .into_iter()
        .map(|w| {
            let three = solve3(
                [
                    [1.0, rho[0].powf(e1), rho[0].powf(e2)],
                    [1.0, rho[1].powf(e1), rho[1].powf(e2)],
                    [1.0, rho[2].powf(e1), rho[2].powf(e2)],
                ],
                [w[0], w[1], w[2]],
            );
            let (a1, a2) = (rho[1].powf(e1), rho[2].powf(e1));
            let two = (w[1] * a2 - w[2] * a1) / (a2 - a1);
            GreenValue {
                value: three,
                err_est: (three - two).abs(),
                method: GreenMethod::BoxSolve,
            }
        })
        .collect())
}

/// First component of the solution of a 3×3 system (Cramer's rule).
fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> f64 {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let mut m0 = m;
    for i in 0..3 {
        m0[i][0] = b[i];
    }
    det(m0) / det(m)
}

/// Tabulated `G_n` on all symmetry classes with `max |x_i| ≤ radius`.
#[derive(Debug, Clone)]
pub struct GreenTable {
    dim: usize,
    radius: u32,
    entries: BTreeMap<Vec<u32>, GreenValue>,
}

fn classes(n: usize, radius: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, start: u32, radius: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for k in start..=radius {
            cur.push(k);
            rec(n, k, radius, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, 0, radius, &mut Vec::new(), &mut out);
    out
}

impl GreenTable {
    pub fn build(n: usize, radius: u32, tol: f64) -> Result<Self> {
        check_dim(n)?;
        let entries = classes(n, radius)
            .into_par_iter()
            .map(|key| {
                let x = LatticePoint(key.iter().map(|&k| k as i32).collect());
                green_value(n, &x, tol).map(|v| (key, v))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect();
        Ok(Self {
            dim: n,
            radius,
            entries,
        })
    }

    /// Monte Carlo entries (n ≥ 5); class `k` in sorted order uses seed
    /// `seed + k`, so the table does not depend on scheduling.
    pub fn build_monte_carlo(n: usize, radius: u32, samples: usize, seed: u64) -> Result<Self> {
        check_dim(n)?;
        let entries = classes(n, radius)
            .into_par_iter()
            .enumerate()
            .map(|(k, key)| {
                let x = LatticePoint(key.iter().map(|&c| c as i32).collect());
                green_value_monte_carlo(n, &x, samples, seed.wrapping_add(k as u64))
                    .map(|v| (key, v))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect();
        Ok(Self {
            dim: n,
            radius,
            entries,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `G_n(x)`, if `x` is covered by the table.
    pub fn get(&self, x: &LatticePoint) -> Option<GreenValue> {
        if x.dim() != self.dim {
            return None;
        }
        self.entries.get(&symmetry_class(x)).copied()
    }

    /// Entries keyed by symmetry class representative, in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u32>, &GreenValue)> {
        self.entries.iter()
    }

    pub fn max_err_est(&self) -> f64 {
        self.entries.values().fold(0.0, |m, v| m.max(v.err_est))
    }

    /// CSV with columns `n,x,value,err_est`; coordinates joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,x,value,err_est\n");
        for (key, v) in &self.entries {
            let coords: Vec<String> = key.iter().map(|k| k.to_string()).collect();
            s.push_str(&format!(
                "{},{},{:.16e},{:.16e}\n",
                self.dim,
                coords.join(";"),
                v.value,
                v.err_est
            ));
        }
        s
    }
}

/// `ψ_n = 4π Σ m_j G_n(· − p_j)` (side U) or `η_n` (side V) on Ω̄ of `window`.
pub fn green_combination(
    cfg: &VortexConfig,
    side: Side,
    window: &Arc<LatticeBox>,
    tol: f64,
) -> Result<LatticeFunction> {
    let n = cfg.dim();
    check_dim(n)?;
    if window.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: window.dim(),
        });
    }
    let vortices = cfg.vortices(side);
    if vortices.is_empty() {
        return Ok(LatticeFunction::zeros(window.clone()));
    }
    // largest coordinate offset between Ω̄ and any vortex
    let mut reach = 0u32;
    for v in vortices {
        for i in 0..n {
            let lo = (window.lo()[i] - 1 - v.point.0[i]).unsigned_abs();
            let hi = (window.hi()[i] + 1 - v.point.0[i]).unsigned_abs();
            reach = reach.max(lo).max(hi);
        }
    }
    let table = GreenTable::build(n, reach, tol)?;
    Ok(LatticeFunction::from_fn(window.clone(), |x| {
        vortices
            .iter()
            .map(|v| FOUR_PI * v.multiplicity * table.get(&x.sub(&v.point)).unwrap().value)
            .sum()
    }))
}

/// `Γ(n/2)` for a positive integer n.
pub fn gamma_half(n: usize) -> f64 {
    if n % 2 == 0 {
        (1..n / 2).map(|k| k as f64).product()
    } else {
        // Γ(k + 1/2) = (2k)! √π / (4^k k!)
        let k = (n - 1) / 2;
        (1..=k).map(|j| (2 * j - 1) as f64 / 2.0).product::<f64>() * PI.sqrt()
    }
}

/// Upper bound on `|G_n(0)|` obtained by splitting the zone integral at
/// radius `l`: `l^{n−2}/((n−2) 2^{n+1} π^{n/2−2} Γ(n/2)) + π²/(4l²)`.
pub fn sup_norm_bound(n: usize, l: f64) -> f64 {
    let nf = n as f64;
    l.powf(nf - 2.0) / ((nf - 2.0) * 2f64.powf(nf + 1.0) * PI.powf(nf / 2.0 - 2.0) * gamma_half(n))
        + PI * PI / (4.0 * l * l)
}

/// The bound minimised over `l > 0`, with the minimiser.
pub fn min_sup_norm_bound(n: usize) -> (f64, f64) {
    let nf = n as f64;
    let a = 1.0 / ((nf - 2.0) * 2f64.powf(nf + 1.0) * PI.powf(nf / 2.0 - 2.0) * gamma_half(n));
    let c = PI * PI / 4.0;
    let l = (2.0 * c / ((nf - 2.0) * a)).powf(1.0 / nf);
    (sup_norm_bound(n, l), l)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupNormEntry {
    pub n: usize,
    /// `‖G_n‖∞ = |G_n(0)|`.
    pub sup_norm: f64,
    pub err_est: f64,
    pub bound: f64,
    pub bound_l: f64,
    /// Value of the one-vertex Dirichlet problem, `1/(2n)`.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupNormSweep {
    pub entries: Vec<SupNormEntry>,
    pub strictly_decreasing: bool,
    pub within_bound: bool,
    pub above_floor: bool,
}

impl SupNormSweep {
    pub fn passed(&self) -> bool {
        self.strictly_decreasing && self.within_bound && self.above_floor
    }
}

/// `|G_n(0)|` across dimensions together with the decay checks.
pub fn green_sup_norm_sweep(dims: &[usize], tol: f64) -> Result<SupNormSweep> {
    let entries = dims
        .iter()
        .map(|&n| {
            let g = green_value(n, &LatticePoint::origin(n), tol)?;
            let (bound, bound_l) = min_sup_norm_bound(n);
            Ok(SupNormEntry {
                n,
                sup_norm: g.value.abs(),
                err_est: g.err_est,
                bound,
                bound_l,
                floor: 1.0 / (2.0 * n as f64),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let strictly_decreasing = entries
        .windows(2)
        .all(|w| w[1].sup_norm + w[1].err_est < w[0].sup_norm - w[0].err_est);
    let within_bound = entries.iter().all(|e| e.sup_norm + e.err_est <= e.bound);
    let above_floor = entries.iter().all(|e| e.sup_norm - e.err_est >= e.floor);
    Ok(SupNormSweep {
        entries,
        strictly_decreasing,
        within_bound,
        above_floor,
    })
}
