//! PLCC, SROCC and their aggregation over repeated splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RANGE_SLACK: f64 = 1e-12;

/// Ground truth and predictions for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePair<'a> {
    pub ground_truth: &'a [f64],
    pub predicted: &'a [f64],
}

impl<'a> ScorePair<'a> {
    pub fn new(ground_truth: &'a [f64], predicted: &'a [f64]) -> Result<Self> {
        check_pair(ground_truth, predicted)?;
        Ok(ScorePair {
            ground_truth,
            predicted,
        })
    }

    pub fn plcc(&self) -> Result<f64> {
        plcc(self.ground_truth, self.predicted)
    }

    pub fn srocc(&self) -> Result<f64> {
        srocc(self.ground_truth, self.predicted)
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "score vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 scores, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    Ok(())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson linear correlation coefficient.
///
/// Fails with [`Error::UndefinedCorrelation`] when either vector has zero
/// variance.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    if is_constant(a) || is_constant(b) {
        return Err(Error::UndefinedCorrelation(
            "one of the score vectors is constant".into(),
        ));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the score vectors is constant".into(),
        ));
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    debug_assert!(r.abs() <= 1.0 + RANGE_SLACK, "correlation {r} out of range");
    Ok(r.clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank-order correlation: PLCC of the mid-rank vectors.
pub fn srocc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    plcc(&mid_ranks(a), &mid_ranks(b))
}

/// Mean, median and sample standard deviation of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    /// Sample (n − 1) deviation; reported as 0 when undefined.
    pub std: f64,
    /// False when fewer than two values were aggregated.
    pub std_defined: bool,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("nothing to aggregate".into()));
        }
        let n = values.len();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let all_equal = sorted[0] == sorted[n - 1];
        let m = if all_equal { sorted[0] } else { mean(values) };
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let (std, std_defined) = if n < 2 {
            (0.0, false)
        } else if all_equal {
            (0.0, true)
        } else {
            let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
            ((ss / (n - 1) as f64).sqrt(), true)
        };
        Ok(Stats {
            mean: m,
            median,
            std,
            std_defined,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResultSummary {
    pub plcc: Vec<f64>,
    pub srocc: Vec<f64>,
    pub plcc_stats: Stats,
    pub srocc_stats: Stats,
}

impl SplitResultSummary {
    pub fn n_effective(&self) -> usize {
        self.plcc.len()
    }
}

/// Aggregates per-split `(PLCC, SROCC)` pairs.
pub fn aggregate(results: &[(f64, f64)]) -> Result<SplitResultSummary> {
    let plcc: Vec<f64> = results.iter().map(|r| r.0).collect();
    let srocc: Vec<f64> = results.iter().map(|r| r.1).collect();
    Ok(SplitResultSummary {
        plcc_stats: Stats::of(&plcc)?,
        srocc_stats: Stats::of(&srocc)?,
        plcc,
        srocc,
    })
}
