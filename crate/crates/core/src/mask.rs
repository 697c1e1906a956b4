//! Sets of flat parameter ids with per-layer bookkeeping.
//!
//! One type serves every index set of the algorithm: the full index set, the
//! pre-pruned set, the per-step dropped set, and the selected/non-selected
//! partition.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::autodiff::ParamLayout;
use crate::error::{DpError, Result};

/// `floor(rate · n)`, robust to products like `0.29 · 100 = 28.999…`.
pub fn count_at_rate(rate: f64, n: usize) -> usize {
    ((rate * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Sorted, duplicate-free set of flat parameter ids.
#[derive(Debug, Clone)]
pub struct IndexMask {
    layout: Arc<ParamLayout>,
    indices: Vec<usize>,
    per_layer_counts: BTreeMap<usize, usize>,
}

impl PartialEq for IndexMask {
    fn eq(&self, other: &Self) -> bool {
        self.indices == other.indices && self.layout.total() == other.layout.total()
    }
}

impl Eq for IndexMask {}

impl IndexMask {
    /// Builds a mask from arbitrary ids; sorts and deduplicates.
    pub fn new(layout: &Arc<ParamLayout>, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= layout.total()) {
            return Err(DpError::config(format!(
                "index {bad} outside model with {} parameters",
                layout.total()
            )));
        }
        Ok(Self::from_sorted(layout, indices))
    }

    fn from_sorted(layout: &Arc<ParamLayout>, indices: Vec<usize>) -> Self {
        let mut per_layer_counts = BTreeMap::new();
        for &i in &indices {
            let layer = layout.block_of(i).expect("validated index").layer;
            *per_layer_counts.entry(layer).or_insert(0) += 1;
        }
        Self {
            layout: Arc::clone(layout),
            indices,
            per_layer_counts,
        }
    }

    pub fn empty(layout: &Arc<ParamLayout>) -> Self {
        Self::from_sorted(layout, Vec::new())
    }

    pub fn full(layout: &Arc<ParamLayout>) -> Self {
        Self::from_sorted(layout, layout.all_ids())
    }

    /// All prunable (weight) ids.
    pub fn prunable(layout: &Arc<ParamLayout>) -> Self {
        Self::from_sorted(layout, layout.prunable_ids())
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    /// Number of parameters in the model this mask indexes.
    pub fn universe(&self) -> usize {
        self.layout.total()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.indices.binary_search(&id).is_ok()
    }

    pub fn per_layer_counts(&self) -> &BTreeMap<usize, usize> {
        &self.per_layer_counts
    }

    pub fn count_in_layer(&self, layer: usize) -> usize {
        self.per_layer_counts.get(&layer).copied().unwrap_or(0)
    }

    /// Ids of this mask that fall in `layer`, ascending.
    pub fn layer_indices(&self, layer: usize) -> Vec<usize> {
        self.indices
            .iter()
            .copied()
            .filter(|&i| self.layout.block_of(i).map(|b| b.layer) == Some(layer))
            .collect()
    }

    /// Ids grouped by layer, layers ascending.
    pub fn by_layer(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &self.indices {
            out.entry(self.layout.block_of(i).unwrap().layer)
                .or_default()
                .push(i);
        }
        out
    }

    fn check_same_model(&self, other: &Self) -> Result<()> {
        if self.universe() != other.universe() {
            return Err(DpError::config(format!(
                "masks belong to different models ({} vs {} parameters)",
                self.universe(),
                other.universe()
            )));
        }
        Ok(())
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.check_same_model(other)?;
        let (a, b) = (&self.indices, &other.indices);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Ok(Self::from_sorted(&self.layout, out))
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.check_same_model(other)?;
        let out = self
            .indices
            .iter()
            .copied()
            .filter(|&i| other.contains(i))
            .collect();
        Ok(Self::from_sorted(&self.layout, out))
    }

    /// `self \ other`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_same_model(other)?;
        let out = self
            .indices
            .iter()
            .copied()
            .filter(|&i| !other.contains(i))
            .collect();
        Ok(Self::from_sorted(&self.layout, out))
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.indices.iter().all(|&i| !other.contains(i))
    }
}
