//! Kernel regressors mapping descriptors to quality scores, and their
//! hyperparameter search.

mod gpr;
mod grid;
mod kernel;
mod model_file;
mod svr;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gpr::{predict_gpr, train_gpr, GprParams, RqGprModel};
pub use grid::{
    grid_search, sample_variance, search_candidates, GprGrid, GridSearchResult, HyperparamGrid, SelectionMetric, SvrGrid,
};
pub use kernel::{rbf_kernel, rq_kernel, Kernel};
pub use model_file::{QualityModel, MODEL_FILE_VERSION};
pub use svr::{predict_svr, svr_objectives, train_svr, train_svr_with, RbfSvrModel, SmoOptions, SvrParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Svr,
    Gpr,
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegressorKind::Svr => "svr",
            RegressorKind::Gpr => "gpr",
        })
    }
}

impl FromStr for RegressorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svr" => Ok(RegressorKind::Svr),
            "gpr" => Ok(RegressorKind::Gpr),
            other => Err(Error::Config(format!("unknown regressor `{other}` (expected svr or gpr)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparams {
    Svr(SvrParams),
    Gpr(GprParams),
}

impl Hyperparams {
    pub fn kind(&self) -> RegressorKind {
        match self {
            Hyperparams::Svr(_) => RegressorKind::Svr,
            Hyperparams::Gpr(_) => RegressorKind::Gpr,
        }
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyperparams::Svr(p) => write!(f, "C={} epsilon={} gamma={:.6e}", p.c, p.epsilon, p.gamma),
            Hyperparams::Gpr(p) => write!(
                f,
                "length_scale={:.6e} alpha={} signal_variance={:.6e} noise_variance={:.6e}",
                p.length_scale, p.alpha, p.signal_variance, p.noise_variance
            ),
        }
    }
}

/// A trained regressor of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Svr(RbfSvrModel),
    Gpr(RqGprModel),
}

impl TrainedModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            TrainedModel::Svr(m) => predict_svr(m, x),
            TrainedModel::Gpr(m) => predict_gpr(m, x),
        }
    }

    pub fn kind(&self) -> RegressorKind {
        match self {
            TrainedModel::Svr(_) => RegressorKind::Svr,
            TrainedModel::Gpr(_) => RegressorKind::Gpr,
        }
    }
}

pub fn train<R: AsRef<[f64]> + Sync>(params: Hyperparams, x: &[R], y: &[f64]) -> Result<TrainedModel> {
    match params {
        Hyperparams::Svr(p) => train_svr(x, y, p).map(TrainedModel::Svr),
        Hyperparams::Gpr(p) => train_gpr(x, y, p).map(TrainedModel::Gpr),
    }
}

pub(crate) fn check_training_set<R: AsRef<[f64]>>(x: &[R], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} inputs but {} targets", x.len(), y.len())));
    }
    if y.len() < min {
        return Err(Error::InvalidInput(format!(
            "need at least {min} training examples, got {}",
            y.len()
        )));
    }
    let d = x[0].as_ref().len();
    if d == 0 {
        return Err(Error::Shape("empty feature vectors".into()));
    }
    if x.iter().any(|r| r.as_ref().len() != d) {
        return Err(Error::Shape("training inputs differ in length".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|r| r.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("non-finite training data".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parsing() {
        assert_eq!("SVR".parse::<RegressorKind>().unwrap(), RegressorKind::Svr);
        assert_eq!("gpr".parse::<RegressorKind>().unwrap().to_string(), "gpr");
        assert!("knn".parse::<RegressorKind>().is_err());
    }

    #[test]
    fn training_set_checks() {
        let x = vec![vec![1.0], vec![2.0, 3.0]];
        assert!(check_training_set(&x, &[0.0, 1.0], 1).is_err());
        let x = vec![vec![1.0], vec![2.0]];
        assert!(check_training_set(&x, &[0.0], 1).is_err());
        assert!(check_training_set(&x, &[0.0, 1.0], 3).is_err());
        check_training_set(&x, &[0.0, 1.0], 2).unwrap();
    }
}
