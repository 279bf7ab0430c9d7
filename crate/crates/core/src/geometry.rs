//! Latent-space primitives: vectors, cosine similarity and its gradient,
//! softmax, rays and anti-rays.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Norms below this are treated as the zero vector.
pub const ZERO_NORM: f64 = 1e-12;

/// Default slack for ray membership (`cosine >= 1 - tol`).
pub const DEFAULT_RAY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("cosine similarity is undefined for the zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector has a non-finite component at index {0}")]
    NonFinite(usize),
    #[error("vector must have at least one component")]
    EmptyVector,
    #[error("points do not lie on a common ray (min pairwise cosine {min_cosine})")]
    NotColinear { min_cosine: f64 },
    #[error("no points given")]
    NoPoints,
}

/// A point of the latent space `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(components: Vec<f64>) -> Result<Self, GeometryError> {
        if components.is_empty() {
            return Err(GeometryError::EmptyVector);
        }
        if let Some(k) = components.iter().position(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite(k));
        }
        Ok(LatentVector(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scaled(&self, factor: f64) -> LatentVector {
        LatentVector(self.0.iter().map(|c| c * factor).collect())
    }
}

impl Serialize for LatentVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LatentVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(deserializer)?;
        LatentVector::new(v).map_err(serde::de::Error::custom)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<(f64, f64), GeometryError> {
    if a.len() != b.len() {
        return Err(GeometryError::DimensionMismatch { left: a.len(), right: b.len() });
    }
    let (na, nb) = (norm(a), norm(b));
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Err(GeometryError::ZeroVector);
    }
    Ok((na, nb))
}

/// Cosine similarity on raw slices, clamped to `[-1, 1]`.
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
    let (na, nb) = check_pair(a, b)?;
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity `a.b / (|a| |b|)`.
pub fn cosine(a: &LatentVector, b: &LatentVector) -> Result<f64, GeometryError> {
    cosine_slices(&a.0, &b.0)
}

/// Gradient of `cosine(a, b)` with respect to `a`, written into `out`.
pub fn cosine_grad_into(a: &[f64], b: &[f64], out: &mut [f64]) -> Result<(), GeometryError> {
    let (na, nb) = check_pair(a, b)?;
    let ab = dot(a, b);
    let inv = 1.0 / (na * nb);
    let along = ab / (na * na * na * nb);
    for ((o, ai), bi) in out.iter_mut().zip(a).zip(b) {
        *o = bi * inv - along * ai;
    }
    Ok(())
}

/// Gradient of `cosine(a, b)` with respect to `a`:
/// `b / (|a| |b|) - (a.b) a / (|a|^3 |b|)`.
pub fn cosine_grad(a: &LatentVector, b: &LatentVector) -> Result<LatentVector, GeometryError> {
    let mut out = vec![0.0; a.dim()];
    cosine_grad_into(&a.0, &b.0, &mut out)?;
    Ok(LatentVector(out))
}

/// Softmax with max-subtraction. `xs` must be nonempty and finite.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    assert!(!xs.is_empty(), "softmax of an empty sequence");
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// True iff every pairwise cosine is at least `1 - tol`.
pub fn same_ray(points: &[LatentVector], tol: f64) -> Result<bool, GeometryError> {
    Ok(min_pairwise_cosine(points)? >= 1.0 - tol)
}

/// Smallest pairwise cosine; 1 for fewer than two points.
pub fn min_pairwise_cosine(points: &[LatentVector]) -> Result<f64, GeometryError> {
    let mut min = 1.0_f64;
    for p in points {
        check_pair(&p.0, &p.0)?;
    }
    for (k, p) in points.iter().enumerate() {
        for q in &points[k + 1..] {
            min = min.min(cosine(p, q)?);
        }
    }
    Ok(min)
}

/// The set `{ t * direction : t > 0 }` for a unit `direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    direction: LatentVector,
}

impl Ray {
    /// Ray through a nonzero point.
    pub fn through(point: &LatentVector) -> Result<Ray, GeometryError> {
        let n = point.norm();
        if n < ZERO_NORM {
            return Err(GeometryError::ZeroVector);
        }
        Ok(Ray { direction: point.scaled(1.0 / n) })
    }

    pub fn direction(&self) -> &LatentVector {
        &self.direction
    }

    /// Reflection through the origin.
    pub fn anti(&self) -> Ray {
        Ray { direction: self.direction.scaled(-1.0) }
    }

    pub fn contains(&self, point: &LatentVector, tol: f64) -> Result<bool, GeometryError> {
        Ok(cosine(&self.direction, point)? >= 1.0 - tol)
    }
}

/// Anti-ray of `r`.
pub fn anti(r: &Ray) -> Ray {
    r.anti()
}

/// Fits the ray through colinear points: the normalized mean of the unit
/// directions.
pub fn ray_of(points: &[LatentVector], tol: f64) -> Result<Ray, GeometryError> {
    let first = points.first().ok_or(GeometryError::NoPoints)?;
    let min_cosine = min_pairwise_cosine(points)?;
    if min_cosine < 1.0 - tol {
        return Err(GeometryError::NotColinear { min_cosine });
    }
    let mut mean = vec![0.0; first.dim()];
    for p in points {
        let n = p.norm();
        for (m, c) in mean.iter_mut().zip(p.as_slice()) {
            *m += c / n;
        }
    }
    Ray::through(&LatentVector::new(mean)?)
}
