use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Hyperparams, TrainedModel};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, Standardizer};

pub const MODEL_FILE_VERSION: u32 = 1;

/// Everything needed to score a new descriptor: the optional layer
/// restriction, the standardizer and the regressor. Stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityModel {
    pub version: u32,
    /// Name of the graph the descriptors came from, when known.
    pub model_name: Option<String>,
    /// Restrict descriptors to this layer before scoring.
    pub layer: Option<String>,
    pub feature_dim: usize,
    pub standardizer: Option<Standardizer>,
    pub hyperparams: Hyperparams,
    pub regressor: TrainedModel,
}

impl QualityModel {
    /// Slices, standardizes and scores one descriptor.
    pub fn score(&self, v: &FeatureVector) -> Result<f64> {
        let values = match &self.layer {
            Some(name) => crate::features::slice_layer(v, name)?,
            None => &v.values[..],
        };
        self.score_values(values)
    }

    pub fn score_values(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.feature_dim {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.feature_dim,
                values.len()
            )));
        }
        match &self.standardizer {
            Some(s) => self.regressor.predict(&s.apply(values)?),
            None => self.regressor.predict(values),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: QualityModel = serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        if m.version != MODEL_FILE_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model file version {} (expected {MODEL_FILE_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::{train, GprParams, SvrParams};

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..15)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos(), i as f64 / 15.0])
            .collect();
        let y = x.iter().map(|r| 1.0 + r[0] + 0.5 * r[1] * r[2]).collect();
        (x, y)
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let (x, y) = data();
        let std = Standardizer::fit(&x, "train").unwrap();
        let xs: Vec<Vec<f64>> = x.iter().map(|r| std.apply(r).unwrap()).collect();
        for hp in [
            Hyperparams::Svr(SvrParams { c: 10.0, epsilon: 0.05, gamma: 0.3 }),
            Hyperparams::Gpr(GprParams {
                signal_variance: 0.4,
                length_scale: 1.7,
                alpha: 0.5,
                noise_variance: 0.01,
            }),
        ] {
            let m = QualityModel {
                version: MODEL_FILE_VERSION,
                model_name: Some("tiny".into()),
                layer: None,
                feature_dim: 3,
                standardizer: Some(std.clone()),
                hyperparams: hp,
                regressor: train(hp, &xs, &y).unwrap(),
            };
            let back = QualityModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
            for r in &x {
                let (a, b) = (m.score_values(r).unwrap(), back.score_values(r).unwrap());
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn version_and_dim_checks() {
        let (x, y) = data();
        let hp = Hyperparams::Svr(SvrParams { c: 1.0, epsilon: 0.1, gamma: 1.0 });
        let mut m = QualityModel {
            version: MODEL_FILE_VERSION,
            model_name: None,
            layer: None,
            feature_dim: 3,
            standardizer: None,
            hyperparams: hp,
            regressor: train(hp, &x, &y).unwrap(),
        };
        assert!(m.score_values(&[0.0, 1.0]).is_err());
        m.version = 99;
        assert!(QualityModel::from_json(&m.to_json().unwrap()).is_err());
        assert!(QualityModel::from_json("{").is_err());
    }
}
