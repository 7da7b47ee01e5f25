//! Flat torus geometry: points of `T^d = R^d / Z^d`, the quotient metric and
//! set distances.

use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};

/// Default absolute tolerance for geometric comparisons.
pub const TAU_GEOM: f64 = 1e-9;

/// A point of the flat torus, stored by its representative in `[0,1)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

#[inline]
pub(crate) fn wrap_scalar(c: f64) -> f64 {
    let r = c - c.floor();
    // c slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Nearest-image representative of `c` in `[-1/2, 1/2)`.
#[inline]
pub(crate) fn centered(c: f64) -> f64 {
    let r = wrap_scalar(c + 0.5) - 0.5;
    if r < -0.5 {
        r + 1.0
    } else {
        r
    }
}

impl TorusPoint {
    /// Reduce an arbitrary real vector mod 1.
    pub fn wrap(v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(FsError::InvalidInput("zero-dimensional point".into()));
        }
        if let Some(bad) = v.iter().find(|c| !c.is_finite()) {
            return Err(FsError::InvalidInput(format!("non-finite coordinate {bad}")));
        }
        Ok(Self::wrap_unchecked(v))
    }

    pub(crate) fn wrap_unchecked(v: &[f64]) -> Self {
        TorusPoint {
            coords: v.iter().map(|&c| wrap_scalar(c)).collect(),
        }
    }

    pub fn origin(dim: usize) -> Self {
        TorusPoint {
            coords: vec![0.0; dim],
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Nearest-image displacement `y - self`, each coordinate in `[-1/2, 1/2)`.
    pub fn displacement_to(&self, y: &TorusPoint) -> Vec<f64> {
        self.coords
            .iter()
            .zip(&y.coords)
            .map(|(a, b)| centered(b - a))
            .collect()
    }

    /// `wrap(self + v)`.
    pub fn translate(&self, v: &[f64]) -> TorusPoint {
        let raw: Vec<f64> = self.coords.iter().zip(v).map(|(a, b)| a + b).collect();
        TorusPoint::wrap_unchecked(&raw)
    }
}

/// `wrap` as a free function.
pub fn wrap(v: &[f64]) -> Result<TorusPoint> {
    TorusPoint::wrap(v)
}

fn check_dims(x: &TorusPoint, y: &TorusPoint) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(FsError::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

/// Quotient-Euclidean distance. The flat metric is a product, so the
/// minimum over integer shifts is taken coordinatewise.
pub fn torus_dist(x: &TorusPoint, y: &TorusPoint) -> Result<f64> {
    check_dims(x, y)?;
    Ok(torus_dist_unchecked(x, y))
}

#[inline]
pub(crate) fn torus_dist_unchecked(x: &TorusPoint, y: &TorusPoint) -> f64 {
    x.coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| {
            let d = (a - b).abs();
            let d = d.min(1.0 - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// A finite set of torus points sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointSet {
    elems: Vec<TorusPoint>,
}

impl PointSet {
    pub fn new(elems: Vec<TorusPoint>) -> Result<Self> {
        if let Some(first) = elems.first() {
            if elems.iter().any(|p| p.dim() != first.dim()) {
                return Err(FsError::InvalidInput("mixed dimensions in point set".into()));
            }
        }
        Ok(PointSet { elems })
    }

    pub fn elems(&self) -> &[TorusPoint] {
        &self.elems
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.elems.first().map(TorusPoint::dim)
    }
}

pub fn dist_point_to_set(a: &TorusPoint, set: &PointSet) -> Result<f64> {
    if set.is_empty() {
        return Err(FsError::EmptySet);
    }
    let mut best = f64::INFINITY;
    for b in set.elems() {
        best = best.min(torus_dist(a, b)?);
    }
    Ok(best)
}

fn directed_hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in a.elems() {
        worst = worst.max(dist_point_to_set(p, b)?);
    }
    Ok(worst)
}

/// `max(sup_a dist(a,B), sup_b dist(b,A))`.
pub fn hausdorff_dist(a: &PointSet, b: &PointSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(FsError::EmptySet);
    }
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}
