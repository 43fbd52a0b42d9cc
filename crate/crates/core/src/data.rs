//! Feature vectors, labelled samples, and columnar datasets.

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Real};
use serde::{Deserialize, Serialize};

/// Source domain of a feature vector. The discriminant is the on-disk tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Features of the RGB eating-scene image (`x_f`).
    Rgb = 0,
    /// Features of the energy-distribution map (`x_m`).
    EnergyDistribution = 1,
}

impl Domain {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Domain::Rgb),
            1 => Some(Domain::EnergyDistribution),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub domain: Domain,
    pub values: Vec<f64>,
}

/// One labelled example. `target` is the groundtruth energy in kCal and is
/// always strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub x_m: FeatureVector,
    pub x_f: FeatureVector,
    pub target: f64,
    pub category: Option<String>,
}

/// Samples stacked into batch matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Real = f64> {
    pub ids: Vec<String>,
    pub x_m: Matrix<T>,
    pub x_f: Matrix<T>,
    pub targets: Vec<f64>,
    pub categories: Vec<Option<String>>,
}

impl<T: Real> Dataset<T> {
    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Domain("dataset has no samples".into()))?;
        let (cm, cf) = (first.x_m.values.len(), first.x_f.values.len());
        let mut xm = Vec::with_capacity(samples.len() * cm);
        let mut xf = Vec::with_capacity(samples.len() * cf);
        for s in samples {
            if s.x_m.values.len() != cm || s.x_f.values.len() != cf {
                return Err(Error::Shape(format!(
                    "sample {} has widths ({}, {}), expected ({cm}, {cf})",
                    s.id,
                    s.x_m.values.len(),
                    s.x_f.values.len()
                )));
            }
            if !(s.target > 0.0) || !s.target.is_finite() {
                return Err(Error::Domain(format!(
                    "sample {} has non-positive target {}",
                    s.id, s.target
                )));
            }
            xm.extend(s.x_m.values.iter().map(|&v| T::of(v)));
            xf.extend(s.x_f.values.iter().map(|&v| T::of(v)));
        }
        let n = samples.len();
        Ok(Self {
            ids: samples.iter().map(|s| s.id.clone()).collect(),
            x_m: Matrix::new(n, cm, xm)?,
            x_f: Matrix::new(n, cf, xf)?,
            targets: samples.iter().map(|s| s.target).collect(),
            categories: samples.iter().map(|s| s.category.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn widths(&self) -> (usize, usize) {
        (self.x_m.cols(), self.x_f.cols())
    }
}
