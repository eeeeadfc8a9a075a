use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "kernel arguments differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// `exp(-gamma * |x - y|^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    check_len(x, y)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    Ok((-gamma * sq_dist(x, y)).exp())
}

/// `sigma2 * (1 + |x - y|^2 / (2 alpha l^2))^(-alpha)`.
pub fn rq_kernel(x: &[f64], y: &[f64], sigma2: f64, length_scale: f64, alpha: f64) -> Result<f64> {
    check_len(x, y)?;
    let k = Kernel::RationalQuadratic {
        signal_variance: sigma2,
        length_scale,
        alpha,
    };
    k.validate()?;
    Ok(k.eval(x, y))
}

/// The two covariance functions used by the regressors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Rbf {
        gamma: f64,
    },
    RationalQuadratic {
        signal_variance: f64,
        length_scale: f64,
        alpha: f64,
    },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        let valid = match *self {
            Kernel::Rbf { gamma } => ok(gamma),
            Kernel::RationalQuadratic {
                signal_variance,
                length_scale,
                alpha,
            } => ok(signal_variance) && ok(length_scale) && ok(alpha),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "kernel hyperparameters must be positive and finite: {self:?}"
            )))
        }
    }

    /// Caller guarantees equal lengths.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2 = sq_dist(x, y);
        match *self {
            Kernel::Rbf { gamma } => (-gamma * d2).exp(),
            Kernel::RationalQuadratic {
                signal_variance,
                length_scale,
                alpha,
            } => {
                signal_variance
                    * (1.0 + d2 / (2.0 * alpha * length_scale * length_scale)).powf(-alpha)
            }
        }
    }

    /// Dense `n × n` Gram matrix, row-major. Rows are filled in parallel;
    /// each entry is computed independently, so the result does not depend
    /// on the thread count.
    pub fn gram<R: AsRef<[f64]> + Sync>(&self, x: &[R]) -> Vec<f64> {
        let n = x.len();
        let mut k = vec![0.0; n * n];
        k.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                // symmetric by construction: both triangles use (min, max)
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                *v = self.eval(x[a].as_ref(), x[b].as_ref());
            }
        });
        k
    }
}
