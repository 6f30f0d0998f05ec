//! Discrete Laplacian, the shifted operator Δ − L, the Dirichlet form and
//! the outward normal derivative on a [`LatticeBox`].
//!
//! Everything is evaluated matrix-free from the stencil
//! `Δf(x) = Σ_{y∼x} (f(y) − f(x))`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, LatticePoint, VertexKind};
use crate::vortex::{Side, VortexConfig};

/// Real values on Ω̄ of a box, boundary values included.
#[derive(Debug, Clone)]
pub struct LatticeFunction {
    domain: Arc<LatticeBox>,
    values: Vec<f64>,
}

impl LatticeFunction {
    pub fn zeros(domain: Arc<LatticeBox>) -> Self {
        let values = vec![0.0; domain.padded_len()];
        Self { domain, values }
    }

    /// Evaluate `f` at every vertex of Ω̄.
    pub fn from_fn(domain: Arc<LatticeBox>, mut f: impl FnMut(&LatticePoint) -> f64) -> Self {
        let mut out = Self::zeros(domain);
        let dom = out.domain.clone();
        for &i in dom.interior_indices().iter().chain(dom.boundary_indices()) {
            out.values[i] = f(&dom.point_at(i));
        }
        out
    }

    /// Wrap raw padded values. Entries outside Ω̄ are zeroed.
    pub fn from_padded(domain: Arc<LatticeBox>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.padded_len() {
            return Err(Error::DomainMismatch);
        }
        for (i, v) in values.iter_mut().enumerate() {
            if domain.kind_at(i) == VertexKind::Outside {
                *v = 0.0;
            }
        }
        Ok(Self { domain, values })
    }

    /// The source g (or h) of a vortex configuration as a lattice function.
    pub fn source(domain: Arc<LatticeBox>, cfg: &VortexConfig, side: Side) -> Self {
        let mut out = Self::zeros(domain);
        for v in cfg.vortices(side) {
            if let Some(i) = out.domain.index_of(&v.point) {
                if out.domain.kind_at(i) != VertexKind::Outside {
                    out.values[i] += crate::vortex::FOUR_PI * v.multiplicity;
                }
            }
        }
        out
    }

    pub fn domain(&self) -> &Arc<LatticeBox> {
        &self.domain
    }

    /// Padded storage; see [`LatticeBox`] for the layout.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at `p`, or `None` outside Ω̄.
    pub fn get(&self, p: &LatticePoint) -> Option<f64> {
        let i = self.domain.index_of(p)?;
        (self.domain.kind_at(i) != VertexKind::Outside).then(|| self.values[i])
    }

    pub fn set(&mut self, p: &LatticePoint, value: f64) -> Result<()> {
        match self.domain.index_of(p) {
            Some(i) if self.domain.kind_at(i) != VertexKind::Outside => {
                self.values[i] = value;
                Ok(())
            }
            _ => Err(Error::StencilOutsideDomain(p.clone())),
        }
    }

    pub fn same_domain(&self, other: &LatticeFunction) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain
    }

    /// `sup_{Ω̄} |f|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        let d = &self.domain;
        d.interior_indices()
            .iter()
            .chain(d.boundary_indices())
            .map(|&i| self.values[i])
            .fold(f64::INFINITY, f64::min)
    }

    /// `sup_{Ω̄} |f − g|`.
    pub fn sup_distance(&self, other: &LatticeFunction) -> Result<f64> {
        if !self.same_domain(other) {
            return Err(Error::DomainMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Values of `self` (defined on a larger box) sampled on Ω̄ of `window`.
    pub fn restrict_to(&self, window: Arc<LatticeBox>) -> Result<Self> {
        let mut missing = None;
        let out = Self::from_fn(window, |p| match self.get(p) {
            Some(v) => v,
            None => {
                missing.get_or_insert_with(|| p.clone());
                0.0
            }
        });
        match missing {
            Some(p) => Err(Error::StencilOutsideDomain(p)),
            None => Ok(out),
        }
    }
}

/// The solution pair (u, v) on a shared domain.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub u: LatticeFunction,
    pub v: LatticeFunction,
}

impl FieldPair {
    pub fn new(u: LatticeFunction, v: LatticeFunction) -> Result<Self> {
        if !u.same_domain(&v) {
            return Err(Error::DomainMismatch);
        }
        Ok(Self { u, v })
    }

    pub fn zeros(domain: Arc<LatticeBox>) -> Self {
        Self {
            u: LatticeFunction::zeros(domain.clone()),
            v: LatticeFunction::zeros(domain),
        }
    }

    pub fn domain(&self) -> &Arc<LatticeBox> {
        self.u.domain()
    }

    pub fn get(&self, side: Side) -> &LatticeFunction {
        match side {
            Side::U => &self.u,
            Side::V => &self.v,
        }
    }
}

#[inline]
pub(crate) fn stencil_at(domain: &LatticeBox, values: &[f64], idx: usize) -> f64 {
    let center = values[idx];
    let mut acc = 0.0;
    for &s in domain.strides() {
        acc += values[idx - s] + values[idx + s];
    }
    acc - 2.0 * domain.dim() as f64 * center
}

/// `Δf(x)` at an interior vertex.
pub fn laplacian(f: &LatticeFunction, x: &LatticePoint) -> Result<f64> {
    let d = f.domain();
    match d.index_of(x) {
        Some(i) if d.kind_at(i) == VertexKind::Interior => Ok(stencil_at(d, &f.values, i)),
        _ => Err(Error::StencilOutsideDomain(x.clone())),
    }
}

/// Δf at every interior vertex; zero elsewhere.
pub fn laplacian_interior(f: &LatticeFunction) -> LatticeFunction {
    let d = f.domain().clone();
    let mut out = LatticeFunction::zeros(d.clone());
    for &i in d.interior_indices() {
        out.values[i] = stencil_at(&d, &f.values, i);
    }
    out
}

/// `(Δ − L) f` at interior vertices (zero elsewhere), using the boundary
/// values stored in `f`.
pub fn apply_shifted(f: &LatticeFunction, shift: f64) -> Result<LatticeFunction> {
    if !(shift.is_finite() && shift >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "shift",
            reason: format!("{shift} is not a nonnegative number"),
        });
    }
    let d = f.domain().clone();
    let mut out = LatticeFunction::zeros(d.clone());
    apply_shifted_raw(&d, &f.values, shift, &mut out.values);
    Ok(out)
}

/// Raw kernel: `out[i] = (Δ − L) x` at interior indices; other entries untouched.
pub(crate) fn apply_shifted_raw(domain: &LatticeBox, x: &[f64], shift: f64, out: &mut [f64]) {
    let diag = 2.0 * domain.dim() as f64 + shift;
    let strides = domain.strides();
    for &i in domain.interior_indices() {
        let mut acc = 0.0;
        for &s in strides {
            acc += x[i - s] + x[i + s];
        }
        out[i] = acc - diag * x[i];
    }
}

/// `∂f/∂n̄(x) = Σ_{y ∈ Ω, y ∼ x} (f(x) − f(y))` at a boundary vertex.
pub fn normal_derivative(f: &LatticeFunction, x: &LatticePoint) -> Result<f64> {
    let d = f.domain();
    match d.index_of(x) {
        Some(i) if d.kind_at(i) == VertexKind::Boundary => {
            Ok(normal_derivative_at(d, &f.values, i))
        }
        _ => Err(Error::NotBoundaryVertex(x.clone())),
    }
}

pub(crate) fn normal_derivative_at(d: &LatticeBox, values: &[f64], i: usize) -> f64 {
    let len = values.len();
    let mut acc = 0.0;
    for &s in d.strides() {
        for j in [i.wrapping_sub(s), i + s] {
            if j < len && d.kind_at(j) == VertexKind::Interior {
                acc += values[i] - values[j];
            }
        }
    }
    acc
}

/// `D_Ω(f, g) = ½ Σ_{x,y∈Ω, x∼y} ∇f∇g + Σ_{x∈Ω, y∈δΩ, x∼y} ∇f∇g`.
///
/// The first sum visits each interior edge twice, so it equals the plain sum
/// over unordered interior edges.
pub fn dirichlet_form(f: &LatticeFunction, g: &LatticeFunction) -> Result<f64> {
    if !f.same_domain(g) {
        return Err(Error::DomainMismatch);
    }
    let d = f.domain();
    let mut total = 0.0;
    for &i in d.interior_indices() {
        for &s in d.strides() {
            // edge to the + neighbour: counted once for interior pairs
            let j = i + s;
            total += (f.values[j] - f.values[i]) * (g.values[j] - g.values[i]);
            // edge to the − neighbour only when it leaves Ω
            let k = i - s;
            if d.kind_at(k) == VertexKind::Boundary {
                total += (f.values[k] - f.values[i]) * (g.values[k] - g.values[i]);
            }
        }
    }
    Ok(total)
}
