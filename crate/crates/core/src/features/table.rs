use std::collections::{HashMap, HashSet};

use super::descriptor::{check_layout, layout_dim, FeatureVector, Segment};
use crate::error::{Error, Result};

/// Descriptors of a whole database, one row per image, sharing one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    /// Not stored in the binary cache; `None` after loading one.
    pub model_name: Option<String>,
    layout: Vec<Segment>,
    rows: Vec<FeatureVector>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(model_name: Option<String>, layout: Vec<Segment>) -> Result<Self> {
        check_layout(&layout)?;
        if layout.is_empty() {
            return Err(Error::Shape("feature table needs at least one layer".into()));
        }
        let mut names = HashSet::new();
        if let Some(dup) = layout.iter().find(|s| !names.insert(s.layer_name.as_str())) {
            return Err(Error::Shape(format!("layer `{}` listed twice", dup.layer_name)));
        }
        Ok(FeatureTable {
            model_name,
            layout,
            rows: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        layout_dim(&self.layout)
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.index.contains_key(image_id)
    }

    pub fn get(&self, image_id: &str) -> Option<&FeatureVector> {
        self.index.get(image_id).map(|&i| &self.rows[i])
    }

    pub fn push(&mut self, row: FeatureVector) -> Result<()> {
        if row.segments != self.layout {
            return Err(Error::Shape(format!(
                "row `{}` has a different segment layout than the table",
                row.image_id
            )));
        }
        if self.index.contains_key(&row.image_id) {
            return Err(Error::DuplicateId(row.image_id));
        }
        self.index.insert(row.image_id.clone(), self.rows.len());
        self.rows.push(row);
        Ok(())
    }

    /// Reorders rows: ids in `order` first (in that order), the rest after in
    /// their current order.
    pub fn reorder<'a>(&mut self, order: impl IntoIterator<Item = &'a str>) {
        let mut taken = vec![false; self.rows.len()];
        let mut perm = Vec::with_capacity(self.rows.len());
        for id in order {
            if let Some(&i) = self.index.get(id) {
                if !taken[i] {
                    taken[i] = true;
                    perm.push(i);
                }
            }
        }
        perm.extend((0..self.rows.len()).filter(|&i| !taken[i]));
        let mut old: Vec<Option<FeatureVector>> = std::mem::take(&mut self.rows).into_iter().map(Some).collect();
        self.rows = perm.into_iter().map(|i| old[i].take().expect("each row once")).collect();
        self.index = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.clone(), i))
            .collect();
    }

    /// Values of the named layer, or all values for `None`, for each id.
    pub fn matrix(&self, ids: &[&str], layer: Option<&str>) -> Result<Vec<Vec<f64>>> {
        let range = match layer {
            None => 0..self.dim(),
            Some(name) => {
                let seg = self
                    .layout
                    .iter()
                    .find(|s| s.layer_name == name)
                    .ok_or_else(|| Error::UnknownLayer(name.to_string()))?;
                seg.offset..seg.offset + seg.length
            }
        };
        ids.iter()
            .map(|id| {
                self.get(id)
                    .map(|r| r.values[range.clone()].to_vec())
                    .ok_or_else(|| Error::InvalidInput(format!("image `{id}` is not in the feature table")))
            })
            .collect()
    }
}
