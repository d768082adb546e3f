//! Axis-aligned boxes used as search domains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed box `[lo_i, hi_i]` per dimension with `lo_i < hi_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds", into = "RawBounds")]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<RawBounds> for Bounds {
    type Error = Error;
    fn try_from(raw: RawBounds) -> Result<Self> {
        Bounds::new(raw.lo, raw.hi)
    }
}

impl From<Bounds> for RawBounds {
    fn from(b: Bounds) -> Self {
        RawBounds { lo: b.lo, hi: b.hi }
    }
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidArgument("bounds need at least one dimension".into()));
        }
        Error::check_dim(lo.len(), hi.len())?;
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::InvalidArgument(format!(
                    "bounds for coordinate {i} must satisfy lo < hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(Bounds { lo, hi })
    }

    /// The same interval `[lo, hi]` in every one of `dim` coordinates.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Bounds::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    /// Euclidean length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// Errors unless `x` has the right dimension and lies inside the box.
    pub fn check(&self, x: &[f64]) -> Result<()> {
        Error::check_dim(self.dim(), x.len())?;
        for (index, (&value, (&lo, &hi))) in x.iter().zip(self.lo.iter().zip(&self.hi)).enumerate() {
            if !(lo <= value && value <= hi) {
                return Err(Error::OutOfBounds { index, value, lo, hi });
            }
        }
        Ok(())
    }

    pub fn clip_in_place(&self, x: &mut [f64]) {
        for ((v, l), h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn clip(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.clip_in_place(&mut out);
        out
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }
}
