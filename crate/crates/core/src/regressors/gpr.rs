use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::check_training_set;
use super::kernel::Kernel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprParams {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub alpha: f64,
    pub noise_variance: f64,
}

impl GprParams {
    pub fn kernel(&self) -> Kernel {
        Kernel::RationalQuadratic {
            signal_variance: self.signal_variance,
            length_scale: self.length_scale,
            alpha: self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel().validate()?;
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise variance must be positive, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

/// Exact GP regression with a rational-quadratic covariance; predictive mean only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqGprModel {
    pub training_inputs: Vec<Vec<f64>>,
    /// `(K + σₙ²I)⁻¹ y`.
    pub solve_weights: Vec<f64>,
    pub params: GprParams,
    /// Diagonal jitter that was needed on top of `σₙ²` (0 when none).
    pub jitter: f64,
}

impl RqGprModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        predict_gpr(self, x)
    }
}

const JITTER_START: f64 = 1e-8;
const JITTER_END: f64 = 1e-2;

/// Cholesky factor of `m`, adding diagonal jitter `1e-8·trace/n`, escalated
/// ×10 up to `1e-2·trace/n`, when the plain factorization fails.
fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = m.nrows();
    let scale = m.trace() / n as f64;
    let mut jitter = 0.0;
    loop {
        let attempt = if jitter == 0.0 {
            m.clone()
        } else {
            m + DMatrix::identity(n, n) * jitter
        };
        // nalgebra accepts a zero pivot; require strictly positive ones
        if let Some(c) = attempt.cholesky() {
            let d = c.l_dirty().diagonal();
            if d.iter().all(|v| *v > 0.0 && v.is_finite()) && d.min() > f64::EPSILON * scale.sqrt() {
                return Ok((c, jitter));
            }
        }
        jitter = if jitter == 0.0 { JITTER_START * scale } else { jitter * 10.0 };
        if !(jitter <= JITTER_END * scale * (1.0 + 1e-9)) {
            return Err(Error::Factorization(format!(
                "K + σₙ²I is not positive definite even with jitter {:.1e}",
                JITTER_END * scale
            )));
        }
        log::warn!("Cholesky failed, retrying with diagonal jitter {jitter:.3e}");
    }
}

pub fn train_gpr<R: AsRef<[f64]> + Sync>(x: &[R], y: &[f64], params: GprParams) -> Result<RqGprModel> {
    params.validate()?;
    check_training_set(x, y, 1)?;
    let n = y.len();
    let gram = params.kernel().gram(x);
    let base = DMatrix::from_row_slice(n, n, &gram) + DMatrix::identity(n, n) * params.noise_variance;
    let (chol, jitter) = cholesky_with_jitter(&base)?;
    let w = chol.solve(&DVector::from_column_slice(y));
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("solve produced non-finite weights".into()));
    }
    Ok(RqGprModel {
        training_inputs: x.iter().map(|r| r.as_ref().to_vec()).collect(),
        solve_weights: w.as_slice().to_vec(),
        params,
        jitter,
    })
}

/// `k(x, X)·w`.
pub fn predict_gpr(model: &RqGprModel, x: &[f64]) -> Result<f64> {
    let d = model.training_inputs[0].len();
    if d != x.len() {
        return Err(Error::Shape(format!("model expects {d} features, got {}", x.len())));
    }
    let k = model.params.kernel();
    Ok(model
        .training_inputs
        .iter()
        .zip(&model.solve_weights)
        .map(|(xi, w)| w * k.eval(xi, x))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(noise: f64) -> GprParams {
        GprParams {
            signal_variance: 1.0,
            length_scale: 1.0,
            alpha: 1.0,
            noise_variance: noise,
        }
    }

    #[test]
    fn zero_targets_zero_weights() {
        let x = vec![vec![0.0], vec![1.0], vec![2.5]];
        let m = train_gpr(&x, &[0.0; 3], params(0.1)).unwrap();
        assert!(m.solve_weights.iter().all(|&w| w == 0.0));
        assert_eq!(m.predict(&[0.7]).unwrap(), 0.0);
    }

    #[test]
    fn three_point_hand_solve() {
        // d² = 1, 4, 1 between (0,1), (0,2), (1,2): k = 1/(1 + d²/2)
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let (a, b) = (2.0 / 3.0, 1.0 / 3.0);
        let s = 1.5;
        // [[s a b][a s a][b a s]] w = y, solved by Cramer's rule
        let m3 = |c: [[f64; 3]; 3]| {
            c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
                + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0])
        };
        let k = [[s, a, b], [a, s, a], [b, a, s]];
        let y = [1.0, -2.0, 0.5];
        let det = m3(k);
        let expected: Vec<f64> = (0..3)
            .map(|col| {
                let mut c = k;
                for r in 0..3 {
                    c[r][col] = y[r];
                }
                m3(c) / det
            })
            .collect();
        let m = train_gpr(&x, &y, params(0.5)).unwrap();
        for (w, e) in m.solve_weights.iter().zip(&expected) {
            assert!((w - e).abs() < 1e-12, "{w} vs {e}");
        }
    }

    #[test]
    fn near_noise_free_interpolates() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.9, (i as f64).cos()]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0].sin() + r[1]).collect();
        let m = train_gpr(&x, &y, params(1e-10)).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((m.predict(xi).unwrap() - yi).abs() < 1e-4);
        }
    }

    #[test]
    fn duplicate_inputs_need_jitter_or_noise() {
        // two identical rows make K singular; the noise term alone fixes it
        let x = vec![vec![1.0], vec![1.0], vec![2.0]];
        let m = train_gpr(&x, &[1.0, 1.0, 0.0], params(1e-3)).unwrap();
        assert_eq!(m.jitter, 0.0);
        assert!(m.solve_weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn jitter_escalation() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, j) = cholesky_with_jitter(&singular).unwrap();
        assert!(j > 0.0 && j <= 1e-2);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky_with_jitter(&indefinite), Err(Error::Factorization(_))));
    }

    #[test]
    fn rejects_bad_input() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(train_gpr(&x, &[0.0, 1.0], params(0.0)).is_err());
        assert!(train_gpr(&x, &[0.0, f64::INFINITY], params(0.1)).is_err());
        assert!(train_gpr(&x, &[0.0], params(0.1)).is_err());
        let m = train_gpr(&x, &[0.0, 1.0], params(0.1)).unwrap();
        assert!(m.predict(&[0.0, 0.0]).is_err());
    }
}
