use serde::{Deserialize, Serialize};

use super::descriptor::FeatureVector;
use crate::error::{Error, Result};

/// Per-dimension z-scoring fitted on a training split.
///
/// Uses the sample standard deviation (denominator n − 1). Dimensions that
/// are constant over the training rows are flagged and only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
    pub fitted_on: String,
}

impl Standardizer {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R], fitted_on: impl Into<String>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "standardizer needs at least 2 training rows, got {}",
                rows.len()
            )));
        }
        let dim = rows[0].as_ref().len();
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::Shape("training rows differ in length".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);

        let first = rows[0].as_ref();
        let mut constant = vec![true; dim];
        let mut ss = vec![0.0; dim];
        for r in rows {
            for (j, v) in r.as_ref().iter().enumerate() {
                let d = v - mean[j];
                ss[j] += d * d;
                constant[j] &= *v == first[j];
            }
        }
        let std = ss
            .iter()
            .zip(&constant)
            .map(|(s, &c)| if c { 0.0 } else { (s / (n - 1.0)).sqrt() })
            .collect();
        for (j, &c) in constant.iter().enumerate() {
            if c {
                mean[j] = first[j];
            }
        }
        Ok(Standardizer {
            mean,
            std,
            constant,
            fitted_on: fitted_on.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn constant_dims(&self) -> usize {
        self.constant.iter().filter(|&&c| c).count()
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.dim() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} dims, got {}",
                self.dim(),
                values.len()
            )));
        }
        Ok(values
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let centred = v - self.mean[j];
                if self.constant[j] {
                    centred
                } else {
                    centred / self.std[j]
                }
            })
            .collect())
    }

    pub fn apply_vector(&self, v: &FeatureVector) -> Result<FeatureVector> {
        FeatureVector::new(v.image_id.clone(), v.segments.clone(), self.apply(&v.values)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_hand_computation() {
        let rows = vec![vec![0.0; 4], vec![2.0; 4]];
        let s = Standardizer::fit(&rows, "train").unwrap();
        assert_eq!(s.mean, vec![1.0; 4]);
        // sqrt(((0-1)^2 + (2-1)^2) / (2-1)) = sqrt(2)
        assert!(s.std.iter().all(|v| (v - 2f64.sqrt()).abs() < 1e-15));
        let lo = s.apply(&rows[0]).unwrap();
        let hi = s.apply(&rows[1]).unwrap();
        let expected = 1.0 / 2f64.sqrt();
        assert!(lo.iter().all(|v| (v + expected).abs() < 1e-15));
        assert!(hi.iter().all(|v| (v - expected).abs() < 1e-15));
    }

    #[test]
    fn mean_maps_to_zero() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, -1.0], vec![8.0, 0.5]];
        let s = Standardizer::fit(&rows, "train").unwrap();
        assert!(s.apply(&s.mean).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn constant_dimension_only_centred() {
        let rows = vec![vec![0.1, 1.0], vec![0.1, 2.0], vec![0.1, 4.0]];
        let s = Standardizer::fit(&rows, "train").unwrap();
        assert_eq!(s.constant, vec![true, false]);
        assert_eq!(s.constant_dims(), 1);
        assert_eq!(s.std[0], 0.0);
        assert_eq!(s.apply(&[0.1, 1.0]).unwrap()[0], 0.0);
        assert!((s.apply(&[0.6, 1.0]).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn needs_two_rows() {
        assert!(Standardizer::fit(&[vec![1.0]], "t").is_err());
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(Standardizer::fit(&empty, "t").is_err());
    }
}
