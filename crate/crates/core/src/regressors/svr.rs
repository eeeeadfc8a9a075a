use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use super::check_training_set;
use crate::error::{Error, Result};

/// Hyperparameters of an ε-SVR with RBF kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidInput(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        Kernel::Rbf { gamma: self.gamma }.validate()
    }
}

/// Solver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    /// Stop once the maximal KKT violation drops below this value.
    pub tolerance: f64,
    pub max_iterations: u64,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions {
            tolerance: 1e-3,
            max_iterations: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfSvrModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// Training-set position of each support vector.
    pub support_indices: Vec<usize>,
    /// `αᵢ − αᵢ*` per support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub epsilon: f64,
    /// Maximal KKT violation at termination.
    pub kkt_gap: f64,
    pub iterations: u64,
    pub converged: bool,
}

impl RbfSvrModel {
    pub fn dim(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        predict_svr(self, x)
    }
}

pub fn train_svr<R: AsRef<[f64]> + Sync>(x: &[R], y: &[f64], params: SvrParams) -> Result<RbfSvrModel> {
    train_svr_with(x, y, params, SmoOptions::default())
}

/// ε-SVR dual solved by sequential minimal optimisation.
///
/// The dual is written over `2l` variables `(α, α*)` with labels `+1/−1`;
/// each step updates the maximal violating pair. Ties in the pair selection
/// go to the lowest index.
pub fn train_svr_with<R: AsRef<[f64]> + Sync>(
    x: &[R],
    y: &[f64],
    params: SvrParams,
    opts: SmoOptions,
) -> Result<RbfSvrModel> {
    params.validate()?;
    check_training_set(x, y, 2)?;
    if !(opts.tolerance > 0.0) {
        return Err(Error::InvalidInput("SMO tolerance must be positive".into()));
    }
    let l = y.len();
    let kernel = Kernel::Rbf { gamma: params.gamma };
    let k = kernel.gram(x);
    let c = params.c;

    let n = 2 * l;
    let sign = |t: usize| if t < l { 1.0 } else { -1.0 };
    let kq = |s: usize, t: usize| k[(s % l) * l + t % l];
    let mut alpha = vec![0.0f64; n];
    let p: Vec<f64> = (0..n)
        .map(|t| if t < l { params.epsilon - y[t] } else { params.epsilon + y[t - l] })
        .collect();
    let mut grad = p.clone();

    let mut iterations = 0u64;
    let mut gap;
    loop {
        // i maximises −y∇f over I_up, j minimises it over I_low
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let yt = sign(t);
            let v = -yt * grad[t];
            let up = if yt > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            let low = if yt > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if up && v > g_max {
                g_max = v;
                i = t;
            }
            if low && v < g_min {
                g_min = v;
                j = t;
            }
        }
        gap = if i == usize::MAX || j == usize::MAX { 0.0 } else { g_max - g_min };
        if gap < opts.tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let (yi, yj) = (sign(i), sign(j));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = yi * yj * kq(i, j);
        let (qii, qjj) = (kq(i, i), kq(j, j));
        if yi != yj {
            let quad = (qii + qjj + 2.0 * qij).max(1e-12);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(1e-12);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            let yt = sign(t);
            grad[t] += yi * yt * kq(i, t) * di + yj * yt * kq(j, t) * dj;
        }
    }
    let converged = gap < opts.tolerance;
    if !converged {
        log::warn!(
            "SMO stopped after {iterations} iterations with KKT gap {gap:.3e} (tolerance {:.1e})",
            opts.tolerance
        );
    }

    // threshold: average over free variables, midpoint of the feasible
    // interval otherwise
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yt = sign(t);
        let yg = yt * grad[t];
        if alpha[t] >= c {
            if yt < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if yt > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { (ub + lb) / 2.0 };

    let mut model = RbfSvrModel {
        support_vectors: Vec::new(),
        support_indices: Vec::new(),
        dual_coefficients: Vec::new(),
        bias: -rho,
        gamma: params.gamma,
        c,
        epsilon: params.epsilon,
        kkt_gap: gap,
        iterations,
        converged,
    };
    for s in 0..l {
        let beta = alpha[s] - alpha[s + l];
        if beta != 0.0 {
            model.support_vectors.push(x[s].as_ref().to_vec());
            model.support_indices.push(s);
            model.dual_coefficients.push(beta);
        }
    }
    Ok(model)
}

/// `Σ coefᵢ·k(svᵢ, x) + bias`.
pub fn predict_svr(model: &RbfSvrModel, x: &[f64]) -> Result<f64> {
    if let Some(d) = model.dim() {
        if d != x.len() {
            return Err(Error::Shape(format!("model expects {d} features, got {}", x.len())));
        }
    }
    let kernel = Kernel::Rbf { gamma: model.gamma };
    Ok(model
        .support_vectors
        .iter()
        .zip(&model.dual_coefficients)
        .map(|(sv, b)| b * kernel.eval(sv, x))
        .sum::<f64>()
        + model.bias)
}

/// Primal and dual objective values of a trained model on its training set.
///
/// Primal: `½‖w‖² + C Σ max(0, |f(xᵢ) − yᵢ| − ε)`.
/// Dual: `−½ βᵀKβ − ε Σ|βᵢ| + Σ yᵢβᵢ`.
pub fn svr_objectives<R: AsRef<[f64]>>(model: &RbfSvrModel, x: &[R], y: &[f64]) -> Result<(f64, f64)> {
    let kernel = Kernel::Rbf { gamma: model.gamma };
    let sv = &model.support_vectors;
    let beta = &model.dual_coefficients;
    let mut quad = 0.0;
    for (a, ba) in sv.iter().zip(beta) {
        for (b, bb) in sv.iter().zip(beta) {
            quad += ba * bb * kernel.eval(a, b);
        }
    }
    let mut loss = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let r = (predict_svr(model, xi.as_ref())? - yi).abs();
        loss += (r - model.epsilon).max(0.0);
    }
    let primal = 0.5 * quad + model.c * loss;
    let mut dual = -0.5 * quad;
    for (&s, b) in model.support_indices.iter().zip(beta) {
        dual += y[s] * b - model.epsilon * b.abs();
    }
    Ok((primal, dual))
}
