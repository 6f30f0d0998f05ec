//! Vortex source data: the Dirac sums g, h and the total mass B.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticePoint;

pub const FOUR_PI: f64 = 4.0 * PI;

/// Which equation of the system a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    U,
    V,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::U => Side::V,
            Side::V => Side::U,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vortex {
    pub point: LatticePoint,
    /// Multiplicity m_j (or n_j). Integral except for configs built with
    /// [`VortexConfig::with_fractional_masses`].
    pub multiplicity: f64,
}

/// Point sources `g = 4π Σ m_j δ_{p_j}` and `h = 4π Σ n_j δ_{q_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexConfig {
    dim: usize,
    u_vortices: Vec<Vortex>,
    v_vortices: Vec<Vortex>,
}

fn merge(dim: usize, list: Vec<(LatticePoint, f64)>) -> Result<Vec<Vortex>> {
    let mut merged: BTreeMap<LatticePoint, f64> = BTreeMap::new();
    for (p, m) in list {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "multiplicity",
                reason: format!("{m} at {p} is not a finite nonnegative number"),
            });
        }
        *merged.entry(p).or_default() += m;
    }
    Ok(merged
        .into_iter()
        .filter(|(_, m)| *m > 0.0)
        .map(|(point, multiplicity)| Vortex {
            point,
            multiplicity,
        })
        .collect())
}

impl VortexConfig {
    /// Duplicate points are merged and zero multiplicities dropped.
    pub fn new(
        dim: usize,
        u_vortices: Vec<(LatticePoint, u32)>,
        v_vortices: Vec<(LatticePoint, u32)>,
    ) -> Result<Self> {
        let cast =
            |l: Vec<(LatticePoint, u32)>| l.into_iter().map(|(p, m)| (p, m as f64)).collect();
        Self::with_fractional_masses(dim, cast(u_vortices), cast(v_vortices))
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            u_vortices: Vec::new(),
            v_vortices: Vec::new(),
        }
    }

    /// A unit vortex at the origin on the chosen side.
    pub fn single(dim: usize, side: Side) -> Self {
        let v = vec![(LatticePoint::origin(dim), 1)];
        match side {
            Side::U => Self::new(dim, v, vec![]).unwrap(),
            Side::V => Self::new(dim, vec![], v).unwrap(),
        }
    }

    /// Non-integer multiplicities, outside the physical model. Exists so the
    /// large-λ bound can be exercised at masses where its threshold
    /// `2B(2n + e^{4B})` fits in a double.
    #[doc(hidden)]
    pub fn with_fractional_masses(
        dim: usize,
        u_vortices: Vec<(LatticePoint, f64)>,
        v_vortices: Vec<(LatticePoint, f64)>,
    ) -> Result<Self> {
        Ok(Self {
            dim,
            u_vortices: merge(dim, u_vortices)?,
            v_vortices: merge(dim, v_vortices)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vortices(&self, side: Side) -> &[Vortex] {
        match side {
            Side::U => &self.u_vortices,
            Side::V => &self.v_vortices,
        }
    }

    pub fn all_points(&self) -> impl Iterator<Item = &LatticePoint> {
        self.u_vortices
            .iter()
            .chain(&self.v_vortices)
            .map(|v| &v.point)
    }

    pub fn is_trivial(&self) -> bool {
        self.u_vortices.is_empty() && self.v_vortices.is_empty()
    }

    pub fn has_source(&self, side: Side) -> bool {
        !self.vortices(side).is_empty()
    }

    /// Value of g (side U) or h (side V) at `x`.
    pub fn source(&self, side: Side, x: &LatticePoint) -> f64 {
        self.vortices(side)
            .iter()
            .filter(|v| &v.point == x)
            .map(|v| FOUR_PI * v.multiplicity)
            .sum()
    }

    pub fn source_g(&self, x: &LatticePoint) -> f64 {
        self.source(Side::U, x)
    }

    pub fn source_h(&self, x: &LatticePoint) -> f64 {
        self.source(Side::V, x)
    }

    /// `4π Σ m_j` for one side.
    pub fn side_mass(&self, side: Side) -> f64 {
        FOUR_PI
            * self
                .vortices(side)
                .iter()
                .map(|v| v.multiplicity)
                .sum::<f64>()
    }

    /// `B = 4π Σ m_j + 4π Σ n_j`.
    pub fn total_mass(&self) -> f64 {
        self.side_mass(Side::U) + self.side_mass(Side::V)
    }

    /// Rounded centroid of all vortex points (origin when there are none).
    pub fn centroid(&self) -> LatticePoint {
        let pts: Vec<_> = self.all_points().collect();
        if pts.is_empty() {
            return LatticePoint::origin(self.dim);
        }
        let coords = (0..self.dim)
            .map(|i| {
                let s: f64 = pts.iter().map(|p| p.0[i] as f64).sum();
                (s / pts.len() as f64).round() as i32
            })
            .collect();
        LatticePoint(coords)
    }

    /// Translate every vortex by `shift`.
    pub fn translated(&self, shift: &LatticePoint) -> Self {
        let tr = |l: &[Vortex]| {
            l.iter()
                .map(|v| Vortex {
                    point: v.point.add(shift),
                    multiplicity: v.multiplicity,
                })
                .collect()
        };
        Self {
            dim: self.dim,
            u_vortices: tr(&self.u_vortices),
            v_vortices: tr(&self.v_vortices),
        }
    }

    /// The large-λ threshold `2B(2n + e^{4B})`, carried in log scale.
    pub fn lambda_threshold(&self) -> LogThreshold {
        LogThreshold::for_mass(self.total_mass(), self.dim)
    }
}

/// `ln(2B) + ln(2n + e^{4B})`; `ln_value = -∞` when B = 0 (vacuous threshold).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogThreshold {
    pub ln_value: f64,
    /// Whether `exp(ln_value)` is a finite double.
    pub representable: bool,
}

impl LogThreshold {
    pub fn for_mass(mass: f64, dim: usize) -> Self {
        if mass <= 0.0 {
            return Self {
                ln_value: f64::NEG_INFINITY,
                representable: true,
            };
        }
        let a = (2.0 * dim as f64).ln();
        let b = 4.0 * mass;
        let lse = a.max(b) + (-(a - b).abs()).exp().ln_1p();
        let ln_value = (2.0 * mass).ln() + lse;
        Self {
            ln_value,
            representable: ln_value < f64::MAX.ln(),
        }
    }

    pub fn is_vacuous(&self) -> bool {
        self.ln_value == f64::NEG_INFINITY
    }

    pub fn linear(&self) -> Option<f64> {
        self.representable.then(|| self.ln_value.exp())
    }

    /// Whether `lambda` strictly exceeds the threshold.
    pub fn exceeded_by(&self, lambda: f64) -> bool {
        lambda > 0.0 && lambda.ln() > self.ln_value
    }
}
