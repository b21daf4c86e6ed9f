//! Minibatches drawn from a selection with per-group counts proportional
//! to `λ_(y,z)|S_y|`.
//!
//! Drawing group `(y,z)` with probability `λ_(y,z)|S_y| / |S|` and then a
//! member uniformly realizes the per-sample weight
//! `λ_(y,z)|S_y| / |S_(y,z)|`, so gradients are taken with unit weights.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{GroupKey, PerGroup};
use crate::fairness::LambdaState;
use crate::selection::SelectionResult;
use crate::{Error, Result};

pub const MIN_BATCH: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub counts: PerGroup<usize>,
    /// Expected share of each group per draw, after redistribution.
    pub shares: PerGroup<f64>,
}

/// Splits `b` draws across groups.
///
/// Raw targets are `b·λ_(y,z)|S_y|/|S|`; groups with no selected samples get
/// zero and their mass is spread over the rest in proportion to their
/// targets. Counts are integerized by largest remainder (ties to the lower
/// group index) so they sum to `b`.
pub fn plan_batch(selection: &SelectionResult, lambdas: &LambdaState, b: usize) -> Result<BatchPlan> {
    if b < MIN_BATCH {
        return Err(Error::BatchTooSmall(b));
    }
    if selection.is_empty() {
        return Err(Error::EmptySelection);
    }
    let total = selection.len() as f64;
    let sizes = &selection.group_counts;
    let raw = PerGroup::from_fn(|k| {
        if sizes[k] == 0 {
            0.0
        } else {
            lambdas.values[k] * selection.class_counts[usize::from(k.y)] as f64 / total
        }
    });
    let mass: f64 = raw.0.iter().sum();
    let shares = if mass > 0.0 {
        raw.map(|_, r| r / mass)
    } else {
        // Every λ on the occupied groups is zero; fall back to group sizes.
        sizes.map(|_, &s| s as f64 / total)
    };

    let exact = shares.map(|_, s| s * b as f64);
    let mut counts = exact.map(|_, t| t.floor() as usize);
    let assigned: usize = counts.0.iter().sum();
    let mut order: Vec<GroupKey> = GroupKey::ALL.into_iter().filter(|&k| sizes[k] > 0).collect();
    order.sort_by(|&a, &c| {
        let ra = exact[a] - exact[a].floor();
        let rc = exact[c] - exact[c].floor();
        rc.total_cmp(&ra).then(a.index().cmp(&c.index()))
    });
    for k in order.iter().cycle().take(b.saturating_sub(assigned)) {
        counts[*k] += 1;
    }
    Ok(BatchPlan {
        batch_size: b,
        counts,
        shares,
    })
}

/// Draws one batch: each group's count uniformly with replacement from its
/// selected members, concatenated and shuffled.
pub fn draw_batch(plan: &BatchPlan, members: &PerGroup<Vec<usize>>, rng: &mut impl rand::Rng) -> Result<Vec<usize>> {
    let mut batch = Vec::with_capacity(plan.batch_size);
    for k in GroupKey::ALL {
        let count = plan.counts[k];
        let pool = &members[k];
        if count > 0 && pool.is_empty() {
            return Err(Error::EmptyGroupDraw { group: k, count });
        }
        batch.extend((0..count).map(|_| pool[rng.random_range(0..pool.len())]));
    }
    batch.shuffle(rng);
    Ok(batch)
}

/// `⌈|S| / b⌉`.
pub fn batches_per_epoch(selection_len: usize, b: usize) -> usize {
    selection_len.div_ceil(b.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::Metric;
    use crate::seeded_rng;
    use proptest::prelude::*;

    fn g(y: u8, z: u8) -> GroupKey {
        GroupKey::new(y, z)
    }

    /// Selection with the given group sizes, ids laid out group by group.
    fn selection(sizes: [usize; 4]) -> (SelectionResult, Vec<GroupKey>) {
        let mut groups = Vec::new();
        for k in GroupKey::ALL {
            groups.extend(std::iter::repeat_n(k, sizes[k.index()]));
        }
        let sel = SelectionResult::from_indices((0..groups.len()).collect(), &groups);
        (sel, groups)
    }

    fn lambdas(l01: f64, l11: f64) -> LambdaState {
        LambdaState::from_shares(l01, l11, 0.001, Metric::Eo).unwrap()
    }

    #[test]
    fn proportional_lambdas_give_stratified_counts() {
        let (sel, _) = selection([30, 10, 15, 45]);
        let l = lambdas(0.25, 0.75);
        let p = plan_batch(&sel, &l, 20).unwrap();
        assert_eq!(p.counts, PerGroup([6, 2, 3, 9]));
    }

    #[test]
    fn formula_arithmetic() {
        // |S_1| = |S_0| = 50, λ_(1,1) = 0.8, λ_(0,1) = 0.3, b = 10.
        let (sel, _) = selection([25, 25, 25, 25]);
        let p = plan_batch(&sel, &lambdas(0.3, 0.8), 10).unwrap();
        // raw: (0,0) 3.5, (0,1) 1.5, (1,0) 1.0, (1,1) 4.0
        assert_eq!(p.counts[g(1, 1)], 4);
        assert_eq!(p.counts[g(1, 0)], 1);
        assert_eq!(p.counts[g(0, 0)] + p.counts[g(0, 1)], 5);
        assert_eq!(p.counts.0.iter().sum::<usize>(), 10);
        // Equal remainders: the lower index (0,0) takes the spare draw.
        assert_eq!(p.counts[g(0, 0)], 4);
    }

    #[test]
    fn empty_group_mass_is_redistributed() {
        let (sel, groups) = selection([10, 10, 0, 20]);
        let p = plan_batch(&sel, &lambdas(0.5, 0.5), 8).unwrap();
        assert_eq!(p.counts[g(1, 0)], 0);
        assert_eq!(p.counts.0.iter().sum::<usize>(), 8);
        // Remaining raw shares 0.25 each rescale to 1/3; 8/3 per group,
        // floors sum to 6 and the lower indices take the two spare draws.
        assert_eq!(p.counts, PerGroup([3, 3, 0, 2]));
        let members = sel.by_group(&groups);
        let batch = draw_batch(&p, &members, &mut seeded_rng(0, 0)).unwrap();
        assert!(batch.iter().all(|&i| groups[i] != g(1, 0)));
    }

    #[test]
    fn rejects_small_batch_and_empty_selection() {
        let (sel, _) = selection([1, 1, 1, 1]);
        assert!(matches!(plan_batch(&sel, &lambdas(0.5, 0.5), 3), Err(Error::BatchTooSmall(3))));
        let (empty, _) = selection([0; 4]);
        assert!(matches!(plan_batch(&empty, &lambdas(0.5, 0.5), 8), Err(Error::EmptySelection)));
    }

    #[test]
    fn singleton_group_repeats() {
        let members = PerGroup([vec![], vec![], vec![], vec![7]]);
        let plan = BatchPlan {
            batch_size: 3,
            counts: PerGroup([0, 0, 0, 3]),
            shares: PerGroup([0.0, 0.0, 0.0, 1.0]),
        };
        assert_eq!(draw_batch(&plan, &members, &mut seeded_rng(1, 0)).unwrap(), vec![7, 7, 7]);
    }

    #[test]
    fn draw_from_empty_group_is_an_error() {
        let members = PerGroup([vec![1], vec![], vec![2], vec![3]]);
        let plan = BatchPlan {
            batch_size: 4,
            counts: PerGroup([1, 1, 1, 1]),
            shares: PerGroup([0.25; 4]),
        };
        assert!(matches!(
            draw_batch(&plan, &members, &mut seeded_rng(1, 0)),
            Err(Error::EmptyGroupDraw { group, count: 1 }) if group == g(0, 1)
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let (sel, groups) = selection([5, 7, 9, 11]);
        let plan = plan_batch(&sel, &lambdas(0.4, 0.6), 16).unwrap();
        let members = sel.by_group(&groups);
        let run = |seed| {
            let mut rng = seeded_rng(seed, 3);
            (0..5).map(|_| draw_batch(&plan, &members, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn epoch_lengths() {
        assert_eq!(batches_per_epoch(2000, 100), 20);
        assert_eq!(batches_per_epoch(5, 100), 1);
        assert_eq!(batches_per_epoch(200, 200), 1);
    }

    proptest! {
        #[test]
        fn plans_are_exact_and_contained(
            sizes in prop::array::uniform4(0usize..30),
            l01 in 0.0f64..=1.0,
            l11 in 0.0f64..=1.0,
            b in 4usize..300,
            seed in any::<u64>(),
        ) {
            prop_assume!(sizes.iter().sum::<usize>() > 0);
            let (sel, groups) = selection(sizes);
            let plan = plan_batch(&sel, &lambdas(l01, l11), b).unwrap();
            prop_assert_eq!(plan.counts.0.iter().sum::<usize>(), b);
            for k in GroupKey::ALL {
                if sizes[k.index()] == 0 {
                    prop_assert_eq!(plan.counts[k], 0);
                }
                // Largest remainder never moves a count by a full draw.
                prop_assert!((plan.counts[k] as f64 - plan.shares[k] * b as f64).abs() < 1.0);
            }
            let members = sel.by_group(&groups);
            let batch = draw_batch(&plan, &members, &mut seeded_rng(seed, 0)).unwrap();
            prop_assert_eq!(batch.len(), b);
            prop_assert!(batch.iter().all(|i| sel.selected.binary_search(i).is_ok()));
        }
    }
}
