use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{aggregate, Stats};

pub const ALL_CONCATENATED: &str = "All concatenated";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// Layer name or [`ALL_CONCATENATED`].
    pub label: String,
    pub dim: usize,
    pub n_splits: usize,
    /// Splits with defined PLCC and SROCC.
    pub n_effective: usize,
    pub plcc: Option<Stats>,
    pub srocc: Option<Stats>,
}

impl ReportRow {
    /// Aggregates per-split `(PLCC, SROCC)`; `None` marks a failed split.
    pub fn from_splits(label: impl Into<String>, dim: usize, results: &[Option<(f64, f64)>]) -> Result<Self> {
        let ok: Vec<(f64, f64)> = results.iter().flatten().copied().collect();
        let (plcc, srocc) = if ok.is_empty() {
            (None, None)
        } else {
            let s = aggregate(&ok)?;
            (Some(s.plcc_stats), Some(s.srocc_stats))
        };
        Ok(ReportRow {
            label: label.into(),
            dim,
            n_splits: results.len(),
            n_effective: ok.len(),
            plcc,
            srocc,
        })
    }
}

/// Per-layer results in the layout of the published ablation tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ReportTable {
    pub fn new(rows: Vec<ReportRow>) -> Result<Self> {
        let n = rows.iter().filter(|r| r.label == ALL_CONCATENATED).count();
        if n != 1 {
            return Err(Error::InvalidInput(format!(
                "report needs exactly one `{ALL_CONCATENATED}` row, found {n}"
            )));
        }
        Ok(ReportTable { rows })
    }

    /// One-row table for a single evaluation; exempt from the ablation layout.
    pub fn single(row: ReportRow) -> Self {
        ReportTable { rows: vec![row] }
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Serialization(e.to_string());
        w.write_record([
            "layer",
            "dim",
            "n_splits",
            "n_effective",
            "plcc_mean",
            "plcc_median",
            "plcc_std",
            "srocc_mean",
            "srocc_median",
            "srocc_std",
        ])
        .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.dim.to_string(),
                r.n_splits.to_string(),
                r.n_effective.to_string(),
                num(r.plcc.map(|s| s.mean)),
                num(r.plcc.map(|s| s.median)),
                num(r.plcc.map(|s| s.std)),
                num(r.srocc.map(|s| s.mean)),
                num(r.srocc.map(|s| s.median)),
                num(r.srocc.map(|s| s.std)),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Aligned markdown with cells `mean/median (±std)` at three decimals.
    pub fn to_markdown(&self) -> String {
        let cell = |s: Option<Stats>| match s {
            Some(s) => format!("{:.3}/{:.3} (±{:.3})", s.mean, s.median, s.std),
            None => "undefined".to_string(),
        };
        let header = ["Layer", "Length", "PLCC", "SROCC", "Splits"];
        let body: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    r.dim.to_string(),
                    cell(r.plcc),
                    cell(r.srocc),
                    format!("{}/{}", r.n_effective, r.n_splits),
                ]
            })
            .collect();
        let mut width = header.map(|h| h.chars().count());
        for row in &body {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::from("|");
            for (c, w) in cells.iter().zip(&width) {
                let pad = w - c.chars().count();
                let _ = write!(s, " {c}{} |", " ".repeat(pad));
            }
            s.push('\n');
            s
        };
        let mut out = line(&header.map(String::from));
        out.push('|');
        for w in &width {
            let _ = write!(out, "{}|", "-".repeat(w + 2));
        }
        out.push('\n');
        for row in &body {
            out.push_str(&line(row));
        }
        out
    }

    pub fn write(&self, csv_path: &Path, md_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()?).map_err(|e| Error::io(csv_path, e))?;
        std::fs::write(md_path, self.to_markdown()).map_err(|e| Error::io(md_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_one_concatenated_row() {
        let r = ReportRow::from_splits("mixed0", 256, &[Some((0.8, 0.7))]).unwrap();
        assert!(ReportTable::new(vec![r.clone()]).is_err());
        let all = ReportRow::from_splits(ALL_CONCATENATED, 256, &[Some((0.8, 0.7))]).unwrap();
        assert!(ReportTable::new(vec![r, all.clone(), all]).is_err());
    }

    #[test]
    fn failed_splits_excluded_from_statistics() {
        let r = ReportRow::from_splits("x", 4, &[Some((0.8, 0.6)), None, Some((0.9, 0.8))]).unwrap();
        assert_eq!((r.n_splits, r.n_effective), (3, 2));
        assert!((r.plcc.unwrap().mean - 0.85).abs() < 1e-15);
        let none = ReportRow::from_splits("y", 4, &[None]).unwrap();
        assert!(none.plcc.is_none());
    }

    #[test]
    fn rendering() {
        let t = ReportTable::new(vec![
            ReportRow::from_splits("mixed0", 256, &[Some((0.5, 0.25)), Some((0.7, 0.75))]).unwrap(),
            ReportRow::from_splits(ALL_CONCATENATED, 10048, &[Some((0.9, 0.9)), None]).unwrap(),
        ])
        .unwrap();
        let csv = t.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("mixed0,256,2,2,0.6,0.6,"));
        let md = t.to_markdown();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.chars().count() == lines[0].chars().count()));
        assert!(md.contains("0.600/0.600 (±0.141)"));
        assert!(md.contains("| 1/2 "));
    }
}
