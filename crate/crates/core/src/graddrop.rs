//! Per-step choice of which surviving weights receive an update.
//!
//! Selection returns `(I_ns, I_s)`: the dropped ids and the selected ids of
//! the candidate set. Neither criterion takes a dataset: random selection
//! reads only the rng and magnitude selection reads only the current
//! (already private) parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::mask::{count_at_rate, IndexMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropCriterion {
    #[default]
    Random,
    Magnitude,
}

/// Whether the drop fraction applies within each layer or across all candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropScope {
    #[default]
    PerLayer,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropPolicy {
    pub criterion: DropCriterion,
    pub rate: f64,
    #[serde(default)]
    pub scope: DropScope,
}

impl DropPolicy {
    pub fn new(criterion: DropCriterion, rate: f64) -> Result<Self> {
        let p = Self {
            criterion,
            rate,
            scope: DropScope::PerLayer,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(DpError::config(format!(
                "gradient drop rate must be in [0, 1), got {}",
                self.rate
            )));
        }
        Ok(())
    }

    /// Applies the policy to `candidates`; `params` is only read by the
    /// magnitude criterion.
    pub fn select<R: Rng>(
        &self,
        candidates: &IndexMask,
        params: &[f64],
        rng: &mut R,
    ) -> Result<(IndexMask, IndexMask)> {
        self.validate()?;
        match (self.criterion, self.scope) {
            (DropCriterion::Random, DropScope::PerLayer) => {
                select_random(candidates, self.rate, rng)
            }
            (DropCriterion::Magnitude, DropScope::PerLayer) => {
                select_magnitude(candidates, params, self.rate)
            }
            (criterion, DropScope::Global) => {
                let ids = candidates.indices();
                let k = count_at_rate(self.rate, ids.len());
                let dropped: Vec<usize> = match criterion {
                    DropCriterion::Random => rand::seq::index::sample(rng, ids.len(), k)
                        .into_iter()
                        .map(|j| ids[j])
                        .collect(),
                    DropCriterion::Magnitude => smallest_magnitudes(ids, params, k),
                };
                partition(candidates, dropped)
            }
        }
    }
}

fn partition(candidates: &IndexMask, dropped: Vec<usize>) -> Result<(IndexMask, IndexMask)> {
    let ns = IndexMask::new(candidates.layout(), dropped)?;
    let s = candidates.difference(&ns)?;
    Ok((ns, s))
}

fn smallest_magnitudes(ids: &[usize], params: &[f64], k: usize) -> Vec<usize> {
    let mut order = ids.to_vec();
    order.sort_by(|&a, &b| params[a].abs().total_cmp(&params[b].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order
}

fn check_candidates(candidates: &IndexMask) -> Result<()> {
    if candidates.is_empty() {
        return Err(DpError::config(
            "gradient dropping needs a nonempty candidate set",
        ));
    }
    Ok(())
}

/// Drops `floor(rate · n_l)` candidates of each layer, uniformly without
/// replacement.
pub fn select_random<R: Rng>(
    candidates: &IndexMask,
    rate: f64,
    rng: &mut R,
) -> Result<(IndexMask, IndexMask)> {
    check_candidates(candidates)?;
    let mut dropped = Vec::new();
    for ids in candidates.by_layer().values() {
        let k = count_at_rate(rate, ids.len());
        dropped.extend(
            rand::seq::index::sample(rng, ids.len(), k)
                .into_iter()
                .map(|j| ids[j]),
        );
    }
    partition(candidates, dropped)
}

/// Drops, per layer, the `floor(rate · n_l)` candidates with the smallest
/// `|w|`; ties go to the lower flat id.
pub fn select_magnitude(
    candidates: &IndexMask,
    params: &[f64],
    rate: f64,
) -> Result<(IndexMask, IndexMask)> {
    check_candidates(candidates)?;
    if params.len() != candidates.universe() {
        return Err(DpError::config("parameter vector does not match mask"));
    }
    let mut dropped = Vec::new();
    for ids in candidates.by_layer().values() {
        dropped.extend(smallest_magnitudes(
            ids,
            params,
            count_at_rate(rate, ids.len()),
        ));
    }
    partition(candidates, dropped)
}

/// `I_rm = I_pp ∪ I_gd`.
pub fn combine_removed(pre_pruned: &IndexMask, dropped: &IndexMask) -> Result<IndexMask> {
    pre_pruned.union(dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{LayerSpec, ModelSpec, ParamLayout};
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn layout() -> Arc<ParamLayout> {
        Arc::new(ParamLayout::new(&ModelSpec {
            input_shape: vec![5],
            layers: vec![
                LayerSpec::FullyConnected {
                    out_features: 2,
                    in_features: 5,
                    bias: false,
                },
                LayerSpec::Relu,
                LayerSpec::FullyConnected {
                    out_features: 3,
                    in_features: 2,
                    bias: false,
                },
            ],
        }))
    }

    #[test]
    fn zero_rate_selects_everything() {
        let l = layout();
        let c = IndexMask::prunable(&l);
        let (ns, s) = select_random(&c, 0.0, &mut stream(0, Purpose::GradDrop, 0)).unwrap();
        assert!(ns.is_empty());
        assert_eq!(s, c);
    }

    #[test]
    fn ten_candidates_drop_eight() {
        let l = layout();
        let c = IndexMask::new(&l, (0..10).collect()).unwrap();
        let (ns, s) = select_random(&c, 0.8, &mut stream(0, Purpose::GradDrop, 0)).unwrap();
        assert_eq!(ns.len(), 8);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn magnitude_drops_smallest() {
        let l = layout();
        let c = IndexMask::new(&l, vec![0, 1, 2]).unwrap();
        let mut params = vec![9.0; l.total()];
        params[..3].copy_from_slice(&[0.5, -2.0, 0.1]);
        let (ns, _) = select_magnitude(&c, &params, 1.0 / 3.0).unwrap();
        assert_eq!(ns.indices(), &[2]);
    }

    #[test]
    fn magnitude_ties_go_to_lower_ids() {
        let l = layout();
        let c = IndexMask::new(&l, (0..10).collect()).unwrap();
        let params = vec![0.3; l.total()];
        let (ns, _) = select_magnitude(&c, &params, 0.4).unwrap();
        assert_eq!(ns.indices(), &[0, 1, 2, 3]);
    }

    #[test]
    fn empty_candidates_rejected() {
        let l = layout();
        let c = IndexMask::empty(&l);
        assert!(select_random(&c, 0.5, &mut stream(0, Purpose::GradDrop, 0)).is_err());
    }

    #[test]
    fn consecutive_random_steps_differ() {
        let l = layout();
        let c = IndexMask::prunable(&l);
        let (a, _) = select_random(&c, 0.5, &mut stream(0, Purpose::GradDrop, 0)).unwrap();
        let (b, _) = select_random(&c, 0.5, &mut stream(0, Purpose::GradDrop, 1)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn global_scope_counts_whole_set() {
        let l = layout();
        let c = IndexMask::prunable(&l);
        let policy = DropPolicy {
            criterion: DropCriterion::Random,
            rate: 0.5,
            scope: DropScope::Global,
        };
        let (ns, s) = policy
            .select(
                &c,
                &vec![0.0; l.total()],
                &mut stream(0, Purpose::GradDrop, 0),
            )
            .unwrap();
        assert_eq!(ns.len(), 8);
        assert_eq!(s.len(), 8);
    }

    proptest! {
        #[test]
        fn random_selection_partitions(seed in 0u64..1000, rate in 0.0f64..0.99) {
            let l = layout();
            let c = IndexMask::new(&l, (0..l.total()).filter(|i| i % 3 != 0).collect()).unwrap();
            let (ns, s) = select_random(&c, rate, &mut stream(seed, Purpose::GradDrop, 0)).unwrap();
            prop_assert!(ns.is_disjoint(&s));
            prop_assert_eq!(ns.union(&s).unwrap(), c.clone());
            for (layer, n) in c.per_layer_counts() {
                prop_assert_eq!(ns.count_in_layer(*layer), count_at_rate(rate, *n));
            }
        }

        #[test]
        fn magnitude_split_is_sorted(params in proptest::collection::vec(-5.0f64..5.0, 16), rate in 0.0f64..0.99) {
            let l = layout();
            let c = IndexMask::prunable(&l);
            let (ns, s) = select_magnitude(&c, &params, rate).unwrap();
            for layer in [0usize, 2] {
                let max_dropped = ns.layer_indices(layer).iter().map(|&i| params[i].abs()).fold(f64::NEG_INFINITY, f64::max);
                let min_kept = s.layer_indices(layer).iter().map(|&i| params[i].abs()).fold(f64::INFINITY, f64::min);
                prop_assert!(max_dropped <= min_kept);
            }
        }

        #[test]
        fn removed_set_inclusion_exclusion(a in proptest::collection::vec(0usize..16, 0..16),
                                           b in proptest::collection::vec(0usize..16, 0..16)) {
            let l = layout();
            let pp = IndexMask::new(&l, a).unwrap();
            let gd = IndexMask::new(&l, b).unwrap();
            let rm = combine_removed(&pp, &gd).unwrap();
            prop_assert_eq!(rm.len(), pp.len() + gd.len() - pp.intersection(&gd).unwrap().len());
            prop_assert!(pp.is_subset_of(&rm) && gd.is_subset_of(&rm));
        }
    }
}
