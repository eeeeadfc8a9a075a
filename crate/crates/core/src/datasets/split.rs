use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, DistortionKind};
use super::rng::SplitRng;
use crate::error::{Error, Result};

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.6, 0.2, 0.2];
/// Share of the training database kept for hyperparameter search in
/// cross-database mode.
pub const CROSS_VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        })
    }
}

/// One train/validation/test assignment. Each set lists ids in manifest
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub fractions: [f64; 3],
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitPlan {
    pub fn set(&self, role: Role) -> &[String] {
        match role {
            Role::Train => &self.train,
            Role::Val => &self.val,
            Role::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn roles(&self) -> HashMap<&str, Role> {
        let mut m = HashMap::with_capacity(self.len());
        for role in [Role::Train, Role::Val, Role::Test] {
            for id in self.set(role) {
                m.insert(id.as_str(), role);
            }
        }
        m
    }

    /// Training ids with the validation ids appended, for runs without a
    /// hyperparameter search.
    pub fn train_and_val(&self) -> Vec<String> {
        self.train.iter().chain(&self.val).cloned().collect()
    }

    /// CSV `image_id,role,seed`: train rows, then val, then test.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Serialization(e.to_string());
        out.write_record(["image_id", "role", "seed"]).map_err(err)?;
        let seed = self.seed.to_string();
        for role in [Role::Train, Role::Val, Role::Test] {
            let r = role.to_string();
            for id in self.set(role) {
                out.write_record([id.as_str(), r.as_str(), seed.as_str()]).map_err(err)?;
            }
        }
        out.flush().map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Set sizes for `n` units: validation and test get `floor(n·f)`, training
/// the remainder.
pub fn split_counts(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    // the small offset keeps exact products such as 10·0.2 from flooring down
    let take = |f: f64| ((n as f64 * f) + 1e-9).floor() as usize;
    let val = take(fractions[1]);
    let test = take(fractions[2]);
    [n - val - test, val, test]
}

fn check_fractions(f: [f64; 3]) -> Result<()> {
    if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "fractions must be non-negative and sum to 1, got {f:?}"
        )));
    }
    Ok(())
}

/// Units that move together: single images for authentic data, `ref_id`
/// groups for artificial data. In manifest order.
fn units(manifest: &DatasetManifest) -> Vec<Vec<&str>> {
    match manifest.kind {
        DistortionKind::Authentic => manifest.ids().map(|id| vec![id]).collect(),
        DistortionKind::Artificial => {
            let mut pos: HashMap<&str, usize> = HashMap::new();
            let mut groups: Vec<Vec<&str>> = Vec::new();
            for r in &manifest.records {
                let key = r.ref_id.as_deref().expect("validated artificial manifest");
                let i = *pos.entry(key).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[i].push(&r.image_id);
            }
            groups
        }
    }
}

/// Seeded three-way split. Artificial manifests are split by `ref_id`
/// group so that no reference image spans two sets.
pub fn make_split(manifest: &DatasetManifest, seed: u64, fractions: [f64; 3]) -> Result<SplitPlan> {
    check_fractions(fractions)?;
    let units = units(manifest);
    let counts = split_counts(units.len(), fractions);
    for (role, (&c, &f)) in [Role::Train, Role::Val, Role::Test].iter().zip(counts.iter().zip(&fractions)) {
        if f > 0.0 && c == 0 {
            return Err(Error::Split(format!(
                "{role} set would be empty ({} {} available)",
                units.len(),
                if manifest.kind == DistortionKind::Artificial { "reference groups" } else { "images" }
            )));
        }
    }
    let mut order: Vec<usize> = (0..units.len()).collect();
    SplitRng::new(seed).shuffle(&mut order);
    let mut unit_role = vec![Role::Train; units.len()];
    for (k, &u) in order.iter().enumerate() {
        unit_role[u] = if k < counts[0] {
            Role::Train
        } else if k < counts[0] + counts[1] {
            Role::Val
        } else {
            Role::Test
        };
    }
    let mut role_of: HashMap<&str, Role> = HashMap::with_capacity(manifest.len());
    for (u, ids) in units.iter().enumerate() {
        for id in ids {
            role_of.insert(id, unit_role[u]);
        }
    }
    let mut plan = SplitPlan {
        seed,
        fractions,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for id in manifest.ids() {
        let set = match role_of[id] {
            Role::Train => &mut plan.train,
            Role::Val => &mut plan.val,
            Role::Test => &mut plan.test,
        };
        set.push(id.to_string());
    }
    Ok(plan)
}

/// `count` plans; plan `i` uses seed `base_seed + i`.
pub fn make_split_series(
    manifest: &DatasetManifest,
    base_seed: u64,
    count: usize,
    fractions: [f64; 3],
) -> Result<Vec<SplitPlan>> {
    (0..count as u64)
        .map(|i| make_split(manifest, base_seed.wrapping_add(i), fractions))
        .collect()
}

/// Train on all of one database, test on all of another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPlan {
    pub seed: u64,
    pub train_name: String,
    pub test_name: String,
    /// Part of the training database used to fit during the search.
    pub fit: Vec<String>,
    /// Part of the training database used to score search candidates.
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl CrossPlan {
    /// The whole training database, for the final fit.
    pub fn train(&self) -> Vec<String> {
        self.fit.iter().chain(&self.val).cloned().collect()
    }
}

pub fn cross_pair(train: &DatasetManifest, test: &DatasetManifest, seed: u64) -> Result<CrossPlan> {
    if train.name == test.name || train.records == test.records {
        return Err(Error::Split(format!(
            "cross-database test needs two different databases, got `{}` twice",
            train.name
        )));
    }
    let carve = make_split(
        train,
        seed,
        [1.0 - CROSS_VALIDATION_FRACTION, CROSS_VALIDATION_FRACTION, 0.0],
    )?;
    Ok(CrossPlan {
        seed,
        train_name: train.name.clone(),
        test_name: test.name.clone(),
        fit: carve.train,
        val: carve.val,
        test: test.ids().map(str::to_string).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::ImageRecord;
    use std::path::PathBuf;

    fn authentic(n: usize) -> DatasetManifest {
        let records = (0..n)
            .map(|i| ImageRecord {
                image_id: format!("img{i:04}"),
                path: PathBuf::from(format!("img{i:04}.png")),
                mos: 1.0 + (i % 5) as f64,
                ref_id: None,
            })
            .collect();
        DatasetManifest::new("auth", DistortionKind::Authentic, records).unwrap()
    }

    fn artificial(groups: usize, per: usize) -> DatasetManifest {
        let mut records = Vec::new();
        for g in 0..groups {
            for k in 0..per {
                records.push(ImageRecord {
                    image_id: format!("r{g:02}_d{k}"),
                    path: PathBuf::from("x.png"),
                    mos: 3.0,
                    ref_id: Some(format!("r{g:02}")),
                });
            }
        }
        DatasetManifest::new("art", DistortionKind::Artificial, records).unwrap()
    }

    #[test]
    fn count_examples() {
        assert_eq!(split_counts(10, DEFAULT_FRACTIONS), [6, 2, 2]);
        assert_eq!(split_counts(10_073, DEFAULT_FRACTIONS), [6_045, 2_014, 2_014]);
        assert_eq!(split_counts(81, DEFAULT_FRACTIONS), [49, 16, 16]);
    }

    #[test]
    fn authentic_partition() {
        let m = authentic(10);
        let p = make_split(&m, 3, DEFAULT_FRACTIONS).unwrap();
        assert_eq!((p.train.len(), p.val.len(), p.test.len()), (6, 2, 2));
        let mut all: Vec<&String> = p.train.iter().chain(&p.val).chain(&p.test).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 10);
        assert_eq!(make_split(&m, 3, DEFAULT_FRACTIONS).unwrap(), p);
        assert_ne!(make_split(&m, 4, DEFAULT_FRACTIONS).unwrap(), p);
    }

    #[test]
    fn artificial_groups_stay_together() {
        let m = artificial(81, 3);
        let p = make_split(&m, 11, DEFAULT_FRACTIONS).unwrap();
        let group_sets = |ids: &[String]| {
            let mut g: Vec<String> = ids.iter().map(|id| id[..3].to_string()).collect();
            g.sort();
            g.dedup();
            g
        };
        let (tr, va, te) = (group_sets(&p.train), group_sets(&p.val), group_sets(&p.test));
        assert_eq!((tr.len(), va.len(), te.len()), (49, 16, 16));
        assert_eq!(p.len(), 243);
        assert!(tr.iter().all(|g| !va.contains(g) && !te.contains(g)));
        assert!(va.iter().all(|g| !te.contains(g)));
    }

    #[test]
    fn too_few_units() {
        assert!(matches!(make_split(&authentic(3), 0, DEFAULT_FRACTIONS), Err(Error::Split(_))));
        assert!(make_split(&authentic(10), 0, [0.5, 0.2, 0.2]).is_err());
    }

    #[test]
    fn series_seeds() {
        let m = authentic(20);
        let s = make_split_series(&m, 100, 3, DEFAULT_FRACTIONS).unwrap();
        assert_eq!(s[0], make_split(&m, 100, DEFAULT_FRACTIONS).unwrap());
        assert_eq!(s[2].seed, 102);
        assert_eq!(make_split_series(&m, 100, 3, DEFAULT_FRACTIONS).unwrap(), s);
    }

    #[test]
    fn csv_export() {
        let p = make_split(&authentic(5), 1, DEFAULT_FRACTIONS).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "image_id,role,seed");
        assert_eq!(lines.len(), 6);
        assert!(lines[1..].iter().all(|l| l.ends_with(",1")));
    }

    #[test]
    fn cross_plan() {
        let a = authentic(20);
        let mut b = authentic(7);
        b.name = "other".into();
        let c = cross_pair(&a, &b, 5).unwrap();
        assert_eq!((c.fit.len(), c.val.len(), c.test.len()), (16, 4, 7));
        assert_eq!(c.train().len(), 20);
        assert!(cross_pair(&a, &a, 5).is_err());
    }
}
