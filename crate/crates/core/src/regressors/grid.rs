use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{train, Hyperparams, RegressorKind};
use super::gpr::GprParams;
use super::svr::SvrParams;
use crate::error::{Error, Result};
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Plcc,
    #[default]
    Srocc,
}

impl SelectionMetric {
    pub fn score(&self, truth: &[f64], predicted: &[f64]) -> Result<f64> {
        match self {
            SelectionMetric::Plcc => metrics::plcc(truth, predicted),
            SelectionMetric::Srocc => metrics::srocc(truth, predicted),
        }
    }
}

/// SVR candidates. `gamma_times_d` values are divided by the feature
/// dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrGrid {
    pub c: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub gamma_times_d: Vec<f64>,
}

/// GPR candidates. Length scales are multiples of `√d`; variances are
/// multiples of the training-target variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GprGrid {
    pub length_scale_times_sqrt_d: Vec<f64>,
    pub alpha: Vec<f64>,
    pub signal_variance_times_var_y: Vec<f64>,
    pub noise_variance_times_var_y: Vec<f64>,
}

/// Scale-relative candidate lists for both regressors.
///
/// TOML form (every key optional, defaults shown):
///
/// ```toml
/// metric = "srocc"
/// [svr]
/// c = [1.0, 10.0, 100.0]
/// epsilon = [0.05, 0.1, 0.2]
/// gamma_times_d = [1.0, 10.0, 0.1]
/// [gpr]
/// length_scale_times_sqrt_d = [0.5, 1.0, 2.0]
/// alpha = [0.5, 1.0, 2.0]
/// signal_variance_times_var_y = [1.0]
/// noise_variance_times_var_y = [0.01, 0.1, 1.0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperparamGrid {
    pub metric: SelectionMetric,
    pub svr: SvrGrid,
    pub gpr: GprGrid,
}

impl Default for SvrGrid {
    fn default() -> Self {
        SvrGrid {
            c: vec![1.0, 10.0, 100.0],
            epsilon: vec![0.05, 0.1, 0.2],
            gamma_times_d: vec![1.0, 10.0, 0.1],
        }
    }
}

impl Default for GprGrid {
    fn default() -> Self {
        GprGrid {
            length_scale_times_sqrt_d: vec![0.5, 1.0, 2.0],
            alpha: vec![0.5, 1.0, 2.0],
            signal_variance_times_var_y: vec![1.0],
            noise_variance_times_var_y: vec![1e-2, 1e-1, 1.0],
        }
    }
}

impl Default for HyperparamGrid {
    fn default() -> Self {
        HyperparamGrid {
            metric: SelectionMetric::default(),
            svr: SvrGrid::default(),
            gpr: GprGrid::default(),
        }
    }
}

fn check_list(name: &str, v: &[f64], allow_zero: bool) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("grid list `{name}` is empty")));
    }
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && (**x > 0.0 || (allow_zero && **x == 0.0)))) {
        return Err(Error::Config(format!("grid list `{name}` has invalid value {bad}")));
    }
    Ok(())
}

fn ascending(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn descending(v: &[f64]) -> Vec<f64> {
    let mut v = ascending(v);
    v.reverse();
    v
}

impl HyperparamGrid {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let g: HyperparamGrid = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn validate(&self) -> Result<()> {
        check_list("svr.c", &self.svr.c, false)?;
        check_list("svr.epsilon", &self.svr.epsilon, true)?;
        check_list("svr.gamma_times_d", &self.svr.gamma_times_d, false)?;
        check_list("gpr.length_scale_times_sqrt_d", &self.gpr.length_scale_times_sqrt_d, false)?;
        check_list("gpr.alpha", &self.gpr.alpha, false)?;
        check_list("gpr.signal_variance_times_var_y", &self.gpr.signal_variance_times_var_y, false)?;
        check_list("gpr.noise_variance_times_var_y", &self.gpr.noise_variance_times_var_y, false)
    }

    /// Concrete candidates for feature dimension `d` and target variance
    /// `var_y`, most regularized first.
    ///
    /// SVR: C ascending, then γ ascending, then ε descending.
    /// GPR: ℓ descending, then σₙ² descending, then α ascending, then σ²
    /// ascending.
    pub fn candidates(&self, kind: RegressorKind, d: usize, var_y: f64) -> Vec<Hyperparams> {
        let d = d.max(1) as f64;
        // degenerate targets still need a positive variance scale
        let var_y = if var_y > 0.0 && var_y.is_finite() { var_y } else { 1.0 };
        let mut out = Vec::new();
        match kind {
            RegressorKind::Svr => {
                for &c in &ascending(&self.svr.c) {
                    for &g in &ascending(&self.svr.gamma_times_d) {
                        for &epsilon in &descending(&self.svr.epsilon) {
                            out.push(Hyperparams::Svr(SvrParams { c, epsilon, gamma: g / d }));
                        }
                    }
                }
            }
            RegressorKind::Gpr => {
                for &l in &descending(&self.gpr.length_scale_times_sqrt_d) {
                    for &noise in &descending(&self.gpr.noise_variance_times_var_y) {
                        for &alpha in &ascending(&self.gpr.alpha) {
                            for &s in &ascending(&self.gpr.signal_variance_times_var_y) {
                                out.push(Hyperparams::Gpr(GprParams {
                                    signal_variance: s * var_y,
                                    length_scale: l * d.sqrt(),
                                    alpha,
                                    noise_variance: noise * var_y,
                                }));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Result of a validation-set search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: Hyperparams,
    pub validation_score: f64,
    pub evaluated: usize,
    /// Candidates whose validation metric was undefined (e.g. constant
    /// predictions).
    pub skipped: usize,
}

/// Sample variance (n − 1); 0 for fewer than two values.
pub fn sample_variance(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (y.len() - 1) as f64
}

/// Exhaustive search: trains on `train`, scores on `val` and keeps the first
/// candidate (in [`HyperparamGrid::candidates`] order) with the strictly
/// highest score.
pub fn grid_search<R: AsRef<[f64]> + Sync>(
    train_x: &[R],
    train_y: &[f64],
    val_x: &[R],
    val_y: &[f64],
    grid: &HyperparamGrid,
    kind: RegressorKind,
) -> Result<GridSearchResult> {
    grid.validate()?;
    let d = train_x.first().map(|r| r.as_ref().len()).unwrap_or(0);
    let candidates = grid.candidates(kind, d, sample_variance(train_y));
    search_candidates(train_x, train_y, val_x, val_y, &candidates, grid.metric)
}

/// Scores explicit candidates in the given order; the first strictly best wins.
pub fn search_candidates<R: AsRef<[f64]> + Sync>(
    train_x: &[R],
    train_y: &[f64],
    val_x: &[R],
    val_y: &[f64],
    candidates: &[Hyperparams],
    metric: SelectionMetric,
) -> Result<GridSearchResult> {
    if candidates.is_empty() {
        return Err(Error::Config("no hyperparameter candidates".into()));
    }
    let mut best: Option<(Hyperparams, f64)> = None;
    let mut skipped = 0;
    for cand in candidates {
        let model = train(*cand, train_x, train_y)?;
        let pred = val_x
            .iter()
            .map(|x| model.predict(x.as_ref()))
            .collect::<Result<Vec<f64>>>()?;
        match metric.score(val_y, &pred) {
            Ok(score) => {
                if best.as_ref().is_none_or(|(_, s)| score > *s) {
                    best = Some((*cand, score));
                }
            }
            Err(Error::UndefinedCorrelation(msg)) => {
                log::debug!("candidate {cand:?} skipped: {msg}");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let (best, validation_score) = best.ok_or_else(|| {
        Error::UndefinedCorrelation("validation metric undefined for every grid candidate".into())
    })?;
    Ok(GridSearchResult {
        best,
        validation_score,
        evaluated: candidates.len(),
        skipped,
    })
}
