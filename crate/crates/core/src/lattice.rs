//! Finite pieces of the integer lattice ℤⁿ.
//!
//! A [`LatticeBox`] is an axis-aligned box of interior vertices Ω together
//! with its vertex boundary δΩ (the vertices outside Ω adjacent to Ω).
//! Values on Ω̄ = Ω ∪ δΩ are stored in a padded row-major array covering
//! `[lo - 1, hi + 1]`; the padding corners that belong to neither Ω nor δΩ
//! are never read by the operators. Row-major order with the first
//! coordinate slowest is lexicographic order on coordinates.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the lattice dimension.
pub const DEFAULT_MAX_DIM: usize = 8;

/// Largest padded array a box may allocate.
pub const MAX_PADDED_LEN: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(pub Vec<i32>);

impl LatticePoint {
    pub fn new(coords: impl Into<Vec<i32>>) -> Self {
        Self(coords.into())
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// `t` times the unit vector along `axis`.
    pub fn on_axis(dim: usize, axis: usize, t: i32) -> Self {
        let mut c = vec![0; dim];
        c[axis] = t;
        Self(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i32] {
        &self.0
    }

    pub fn offset(&self, axis: usize, delta: i32) -> Self {
        let mut c = self.0.clone();
        c[axis] += delta;
        Self(c)
    }

    pub fn add(&self, other: &LatticePoint) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &LatticePoint) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `d(x) = d(x, 0)`.
    pub fn norm1(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs() as u64).sum()
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// The 2n lattice neighbours `p ± e_i`, ordered by axis with `-` before `+`.
pub fn neighbors(p: &LatticePoint) -> Vec<LatticePoint> {
    let mut out = Vec::with_capacity(2 * p.dim());
    for axis in 0..p.dim() {
        out.push(p.offset(axis, -1));
        out.push(p.offset(axis, 1));
    }
    out
}

pub fn l1_distance(x: &LatticePoint, y: &LatticePoint) -> Result<u64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(x.0
        .iter()
        .zip(&y.0)
        .map(|(a, b)| (*a as i64 - *b as i64).unsigned_abs())
        .sum())
}

/// A general finite vertex set. Only used for fixtures and for the
/// boundary definition on non-box domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexSet {
    dim: usize,
    points: BTreeSet<LatticePoint>,
}

impl VertexSet {
    pub fn new(dim: usize, points: impl IntoIterator<Item = LatticePoint>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for p in points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            set.insert(p);
        }
        Ok(Self { dim, points: set })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        self.points.contains(p)
    }

    /// Points in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = &LatticePoint> {
        self.points.iter()
    }

    /// Connectivity under the `d(x, y) = 1` adjacency, by breadth-first search.
    pub fn is_connected(&self) -> bool {
        let Some(start) = self.points.iter().next() else {
            return true;
        };
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([start.clone()]);
        seen.insert(start.clone());
        while let Some(p) = queue.pop_front() {
            for q in neighbors(&p) {
                if self.points.contains(&q) && seen.insert(q.clone()) {
                    queue.push_back(q);
                }
            }
        }
        seen.len() == self.points.len()
    }
}

/// `δΩ = { y ∉ Ω : ∃ x ∈ Ω, y ∼ x }`, lexicographically ordered.
pub fn boundary(interior: &VertexSet) -> Result<VertexSet> {
    if interior.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let mut out = BTreeSet::new();
    for p in interior.iter() {
        for q in neighbors(p) {
            if !interior.contains(&q) {
                out.insert(q);
            }
        }
    }
    Ok(VertexSet {
        dim: interior.dim,
        points: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Interior,
    Boundary,
    Outside,
}

/// Axis-aligned box Ω = Π [lo_i, hi_i] in ℤⁿ with its boundary δΩ.
#[derive(Debug, Clone)]
pub struct LatticeBox {
    lo: Vec<i32>,
    hi: Vec<i32>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    kinds: Vec<VertexKind>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

impl PartialEq for LatticeBox {
    fn eq(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi
    }
}

impl LatticeBox {
    /// The box `{x : |x_i| ≤ radius}`.
    pub fn cube(dim: usize, radius: i32) -> Result<Self> {
        Self::centered(&LatticePoint::origin(dim), radius)
    }

    /// The box `{x : |x_i - c_i| ≤ radius}`.
    pub fn centered(center: &LatticePoint, radius: i32) -> Result<Self> {
        if radius < 0 {
            return Err(Error::InvalidBox(format!("negative radius {radius}")));
        }
        let lo = center.0.iter().map(|c| c - radius).collect();
        let hi = center.0.iter().map(|c| c + radius).collect();
        Self::from_corners(lo, hi)
    }

    pub fn from_corners(lo: Vec<i32>, hi: Vec<i32>) -> Result<Self> {
        Self::from_corners_capped(lo, hi, DEFAULT_MAX_DIM)
    }

    pub fn from_corners_capped(lo: Vec<i32>, hi: Vec<i32>, max_dim: usize) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        let dim = lo.len();
        if dim < 2 || dim > max_dim {
            return Err(Error::DimensionOutOfRange { dim, max: max_dim });
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::EmptyDomain);
        }
        let shape: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| (b - a) as usize + 3)
            .collect();
        let padded = shape
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .filter(|&len| len <= MAX_PADDED_LEN)
            .ok_or_else(|| Error::InvalidBox(format!("box {lo:?}..{hi:?} too large")))?;
        let mut strides = vec![1usize; dim];
        for i in (0..dim - 1).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }

        let mut kinds = Vec::with_capacity(padded);
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let mut local = vec![0usize; dim];
        for idx in 0..padded {
            // number of coordinates on the padding layer
            let outside = local
                .iter()
                .zip(&shape)
                .filter(|(c, s)| **c == 0 || **c == *s - 1)
                .count();
            let kind = match outside {
                0 => VertexKind::Interior,
                1 => VertexKind::Boundary,
                _ => VertexKind::Outside,
            };
            match kind {
                VertexKind::Interior => interior.push(idx),
                VertexKind::Boundary => boundary.push(idx),
                VertexKind::Outside => {}
            }
            kinds.push(kind);
            for axis in (0..dim).rev() {
                local[axis] += 1;
                if local[axis] < shape[axis] {
                    break;
                }
                local[axis] = 0;
            }
        }

        Ok(Self {
            lo,
            hi,
            shape,
            strides,
            kinds,
            interior,
            boundary,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i32] {
        &self.lo
    }

    pub fn hi(&self) -> &[i32] {
        &self.hi
    }

    /// The radius when the box is a cube `[c - R, c + R]ⁿ`.
    pub fn radius(&self) -> Option<i32> {
        let r2 = self.hi[0] - self.lo[0];
        let uniform = self.lo.iter().zip(&self.hi).all(|(a, b)| b - a == r2);
        (uniform && r2 % 2 == 0).then_some(r2 / 2)
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn padded_len(&self) -> usize {
        self.kinds.len()
    }

    /// Padded indices of Ω in lexicographic order.
    pub fn interior_indices(&self) -> &[usize] {
        &self.interior
    }

    /// Padded indices of δΩ in lexicographic order.
    pub fn boundary_indices(&self) -> &[usize] {
        &self.boundary
    }

    pub fn interior_len(&self) -> usize {
        self.interior.len()
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    pub fn kind_at(&self, idx: usize) -> VertexKind {
        self.kinds[idx]
    }

    pub fn kind(&self, p: &LatticePoint) -> VertexKind {
        self.index_of(p)
            .map(|i| self.kinds[i])
            .unwrap_or(VertexKind::Outside)
    }

    pub fn contains_interior(&self, p: &LatticePoint) -> bool {
        self.kind(p) == VertexKind::Interior
    }

    /// Padded index of `p` if it lies in the padded array.
    pub fn index_of(&self, p: &LatticePoint) -> Option<usize> {
        if p.dim() != self.dim() {
            return None;
        }
        let mut idx = 0usize;
        for axis in 0..self.dim() {
            let local = p.0[axis] as i64 - self.lo[axis] as i64 + 1;
            if local < 0 || local >= self.shape[axis] as i64 {
                return None;
            }
            idx += local as usize * self.strides[axis];
        }
        Some(idx)
    }

    pub fn point_at(&self, idx: usize) -> LatticePoint {
        let mut rem = idx;
        let coords = (0..self.dim())
            .map(|axis| {
                let local = rem / self.strides[axis];
                rem %= self.strides[axis];
                local as i32 + self.lo[axis] - 1
            })
            .collect();
        LatticePoint(coords)
    }

    /// The `i`-th interior vertex in lexicographic order.
    pub fn interior_point(&self, i: usize) -> LatticePoint {
        self.point_at(self.interior[i])
    }

    /// Inverse of [`interior_point`](Self::interior_point).
    pub fn interior_ordinal(&self, p: &LatticePoint) -> Option<usize> {
        let idx = self.index_of(p)?;
        self.interior.binary_search(&idx).ok()
    }

    pub fn interior_points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        self.interior.iter().map(|&i| self.point_at(i))
    }

    pub fn boundary_points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        self.boundary.iter().map(|&i| self.point_at(i))
    }

    /// Padded indices of the 2n neighbours of an interior vertex.
    pub fn neighbor_indices(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        self.strides
            .iter()
            .flat_map(move |&s| [idx - s, idx + s].into_iter())
    }

    /// The interior collar `{x ∈ Ω : ∃ y ∈ δΩ, y ∼ x}`.
    pub fn collar_indices(&self) -> Vec<usize> {
        self.interior
            .iter()
            .copied()
            .filter(|&i| {
                self.neighbor_indices(i)
                    .any(|j| self.kinds[j] == VertexKind::Boundary)
            })
            .collect()
    }

    /// Whether `Ω_other ⊂ Ω_self` as interior vertex sets.
    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    pub fn interior_set(&self) -> VertexSet {
        VertexSet {
            dim: self.dim(),
            points: self.interior_points().collect(),
        }
    }
}

/// A nested family Ω₀ ⊂ Ω₁ ⊂ Ω₂ ⊂ … of boxes.
#[derive(Debug, Clone)]
pub struct Exhaustion {
    base: LatticeBox,
    boxes: Vec<LatticeBox>,
}

impl Exhaustion {
    pub fn new(base: LatticeBox, boxes: Vec<LatticeBox>) -> Result<Self> {
        let Some(first) = boxes.first() else {
            return Err(Error::InvalidExhaustion("no boxes".into()));
        };
        if !first.contains_box(&base) {
            return Err(Error::InvalidExhaustion(
                "base box not contained in the first box".into(),
            ));
        }
        for pair in boxes.windows(2) {
            if !pair[1].contains_box(&pair[0]) || pair[1] == pair[0] {
                return Err(Error::InvalidExhaustion(
                    "boxes are not strictly nested".into(),
                ));
            }
        }
        Ok(Self { base, boxes })
    }

    /// Concentric cubes of the given strictly increasing radii.
    pub fn concentric(base: LatticeBox, center: &LatticePoint, radii: &[i32]) -> Result<Self> {
        let boxes = radii
            .iter()
            .map(|&r| LatticeBox::centered(center, r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(base, boxes)
    }

    pub fn base(&self) -> &LatticeBox {
        &self.base
    }

    pub fn boxes(&self) -> &[LatticeBox] {
        &self.boxes
    }
}
