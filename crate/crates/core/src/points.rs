//! Point collections and the zero-mean / unit-RMS normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Data needed to undo [`normalize`]: `original = scale * normalized + centroid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormMeta {
    pub centroid: Vec<f64>,
    pub scale: f64,
}

/// `len` points of dimension `dim`, stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    norm_meta: Option<NormMeta>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("point dimension must be at least 1".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::Argument(format!(
                "{} coordinates do not split into {dim}-dimensional points",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite coordinate in point {}",
                i / dim
            )));
        }
        Ok(Self {
            dim,
            coords,
            norm_meta: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(1);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn norm_meta(&self) -> Option<&NormMeta> {
        self.norm_meta.as_ref()
    }

    pub(crate) fn with_meta(mut self, meta: Option<NormMeta>) -> Self {
        self.norm_meta = meta;
        self
    }

    pub fn without_meta(&self) -> Self {
        Self {
            dim: self.dim,
            coords: self.coords.clone(),
            norm_meta: None,
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.iter() {
            for (a, b) in c.iter_mut().zip(p) {
                *a += b;
            }
        }
        let n = self.len().max(1) as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    /// Applies `meta` forward: `(p - centroid) / scale`.
    pub fn normalized_with(&self, meta: &NormMeta) -> Result<Self> {
        if meta.centroid.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: meta.centroid.len(),
            });
        }
        let coords = self
            .iter()
            .flat_map(|p| p.iter().zip(&meta.centroid).map(|(v, c)| (v - c) / meta.scale))
            .collect();
        Ok(Self::new(self.dim, coords)?.with_meta(Some(meta.clone())))
    }

    /// Inverse of normalization; requires recorded metadata.
    pub fn denormalize(&self) -> Result<Self> {
        let meta = self
            .norm_meta
            .as_ref()
            .ok_or_else(|| Error::Argument("point set carries no normalization metadata".into()))?;
        Ok(denormalize_with(self, meta))
    }
}

pub fn denormalize_with(points: &PointSet, meta: &NormMeta) -> PointSet {
    let coords = points
        .iter()
        .flat_map(|p| p.iter().zip(&meta.centroid).map(|(v, c)| v * meta.scale + c))
        .collect();
    PointSet {
        dim: points.dim,
        coords,
        norm_meta: None,
    }
}

/// Zero centroid, unit RMS radius. The returned set records how to undo it.
pub fn normalize(points: &PointSet) -> Result<PointSet> {
    if points.is_empty() {
        return Err(Error::Degenerate("cannot normalize an empty point set".into()));
    }
    let centroid = points.centroid();
    let mut ss = 0.0;
    for p in points.iter() {
        ss += p
            .iter()
            .zip(&centroid)
            .map(|(v, c)| (v - c) * (v - c))
            .sum::<f64>();
    }
    let scale = (ss / points.len() as f64).sqrt();
    let extent = centroid.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if !(scale > 1e-14 * extent) {
        return Err(Error::Degenerate("all points coincide (zero radius)".into()));
    }
    points.normalized_with(&NormMeta { centroid, scale })
}

/// RMS distance of the points from their centroid.
pub fn rms_radius(points: &PointSet) -> f64 {
    let c = points.centroid();
    let ss: f64 = points
        .iter()
        .map(|p| p.iter().zip(&c).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum();
    (ss / points.len().max(1) as f64).sqrt()
}
