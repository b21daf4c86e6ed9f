//! Clean-and-fair sample selection.
//!
//! The selection problem picks at most `⌊τn⌋` low-loss samples while every
//! group `(y, z)` may contribute at most a share `λ_(y,z)` of the selected
//! samples of its class `y`:
//!
//! ```text
//! min Σ ℓ_i p_i   s.t.  Σ p_i ≤ τn,   Σ_{i ∈ (y,z)} p_i ≤ λ_(y,z) |S_y|
//! ```
//!
//! Moving `λ_(y,z)|S_y|` to the left and adding `Σ p_i` to both sides turns
//! every fairness row into a knapsack row with constant capacity `τn` and
//! item weights in `{1, 1 − λ, 2 − λ}`; the objective becomes the profit
//! `max ℓ − ℓ_i`. [`greedy_select`] walks samples by decreasing profit and
//! keeps every sample that fits all knapsack rows. [`exact_select`] is the
//! exhaustive reference used by the tests.
//!
//! The knapsack rows agree with the ratio rows exactly when the budget is
//! used up (`|S| = τn`); below that they leave a slack of `τn − |S|`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroupKey, PerGroup};
use crate::fairness::LambdaState;
use crate::{Error, Result};

/// Absolute tolerance for comparing real-valued constraint sides.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionProblem {
    pub losses: Vec<f64>,
    pub groups: Vec<GroupKey>,
    pub tau: f64,
    pub lambdas: PerGroup<f64>,
}

impl SelectionProblem {
    pub fn new(losses: Vec<f64>, groups: Vec<GroupKey>, tau: f64, lambdas: PerGroup<f64>) -> Result<Self> {
        let p = SelectionProblem {
            losses,
            groups,
            tau,
            lambdas,
        };
        p.validate()?;
        Ok(p)
    }

    /// Problem over every sample of `d` with the given losses and caps.
    pub fn for_dataset(d: &Dataset, losses: Vec<f64>, tau: f64, lambdas: &LambdaState) -> Result<Self> {
        let groups = (0..d.len()).map(|i| d.group(i)).collect();
        SelectionProblem::new(losses, groups, tau, lambdas.values)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProblem(m.to_string()));
        if self.losses.len() != self.groups.len() {
            return bad("losses and groups differ in length");
        }
        if self.losses.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return bad("losses must be finite and nonnegative");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.budget() < 1 {
            return bad("tau * n must be at least 1");
        }
        if self.lambdas.0.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return bad("lambda values must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// `τn` as a real number.
    pub fn capacity(&self) -> f64 {
        self.tau * self.len() as f64
    }

    /// `⌊τn⌋`, robust to `τn` landing a hair below an integer.
    pub fn budget(&self) -> usize {
        (self.capacity() + FEASIBILITY_TOL).floor() as usize
    }

    /// Sample ids by ascending loss, ties by ascending id.
    pub fn loss_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.losses[a]
                .total_cmp(&self.losses[b])
                .then(a.cmp(&b))
        });
        order
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub group_counts: PerGroup<usize>,
    pub class_counts: [usize; 2],
    pub budget_used: usize,
}

impl SelectionResult {
    /// Tallies counts for an arbitrary index set (sorted and deduplicated).
    pub fn from_indices(mut selected: Vec<usize>, groups: &[GroupKey]) -> Self {
        selected.sort_unstable();
        selected.dedup();
        let mut group_counts = PerGroup([0usize; 4]);
        for &i in &selected {
            group_counts[groups[i]] += 1;
        }
        let class_counts = [
            group_counts[GroupKey::new(0, 0)] + group_counts[GroupKey::new(0, 1)],
            group_counts[GroupKey::new(1, 0)] + group_counts[GroupKey::new(1, 1)],
        ];
        SelectionResult {
            budget_used: selected.len(),
            selected,
            group_counts,
            class_counts,
        }
    }

    /// Every sample of `d`.
    pub fn everything(d: &Dataset) -> Self {
        let groups: Vec<GroupKey> = (0..d.len()).map(|i| d.group(i)).collect();
        SelectionResult::from_indices((0..d.len()).collect(), &groups)
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Sum of losses over the selection.
    pub fn total_loss(&self, losses: &[f64]) -> f64 {
        self.selected.iter().map(|&i| losses[i]).sum()
    }

    /// Selected positions of each group, ascending.
    pub fn by_group(&self, groups: &[GroupKey]) -> PerGroup<Vec<usize>> {
        let mut out: PerGroup<Vec<usize>> = PerGroup::default();
        for &i in &self.selected {
            out[groups[i]].push(i);
        }
        out
    }
}

/// Multidimensional knapsack form of a [`SelectionProblem`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnapsackInstance {
    pub profits: Vec<f64>,
    /// One weight row per fairness constraint `(y, z)`.
    pub constraint_weights: PerGroup<Vec<f64>>,
    pub capacities: PerGroup<f64>,
    /// Capacity of the plain cardinality row `Σ p_i ≤ τn`.
    pub cardinality_capacity: f64,
}

impl KnapsackInstance {
    /// Loads of each fairness row for an index set.
    pub fn loads(&self, selected: &[usize]) -> PerGroup<f64> {
        PerGroup::from_fn(|k| selected.iter().map(|&i| self.constraint_weights[k][i]).sum())
    }

    pub fn profit(&self, selected: &[usize]) -> f64 {
        selected.iter().map(|&i| self.profits[i]).sum()
    }
}

/// Weight of sample group `g` in the fairness row of `row`.
fn row_weight(row: GroupKey, lambda: f64, g: GroupKey) -> f64 {
    if g.y != row.y {
        1.0
    } else if g.z != row.z {
        1.0 - lambda
    } else {
        2.0 - lambda
    }
}

pub fn to_knapsack(problem: &SelectionProblem) -> KnapsackInstance {
    let max_loss = problem.losses.iter().copied().fold(0.0, f64::max);
    let profits = problem.losses.iter().map(|l| max_loss - l).collect();
    let constraint_weights = PerGroup::from_fn(|row| {
        problem
            .groups
            .iter()
            .map(|&g| row_weight(row, problem.lambdas[row], g))
            .collect()
    });
    let cap = problem.capacity();
    KnapsackInstance {
        profits,
        constraint_weights,
        capacities: PerGroup([cap; 4]),
        cardinality_capacity: cap,
    }
}

/// Greedy clean-and-fair selection.
///
/// Samples are visited once by ascending loss (ties by id). A sample is kept
/// iff, counting it, the selection stays within `⌊τn⌋` and within every
/// knapsack row. Runs in `O(n log n)`.
pub fn greedy_select(problem: &SelectionProblem) -> SelectionResult {
    let ks = to_knapsack(problem);
    let budget = problem.budget();
    let mut loads = PerGroup([0.0f64; 4]);
    let mut selected = Vec::with_capacity(budget);
    for i in problem.loss_order() {
        if selected.len() == budget {
            break;
        }
        let fits = GroupKey::ALL
            .iter()
            .all(|&k| loads[k] + ks.constraint_weights[k][i] <= ks.capacities[k] + FEASIBILITY_TOL);
        if fits {
            for k in GroupKey::ALL {
                loads[k] += ks.constraint_weights[k][i];
            }
            selected.push(i);
        }
    }
    SelectionResult::from_indices(selected, &problem.groups)
}

/// ITLM selection: the `⌊τn⌋` lowest-loss samples, ties by id.
pub fn trimmed_select(problem: &SelectionProblem) -> SelectionResult {
    let mut order = problem.loss_order();
    order.truncate(problem.budget());
    SelectionResult::from_indices(order, &problem.groups)
}

/// Minimization objective shared by [`greedy_select`] and [`exact_select`]:
/// the selected losses plus `max ℓ` for every unused budget slot. It equals
/// `Σ ℓ` whenever the budget is used up and `⌊τn⌋·max ℓ − profit` always.
pub fn selection_objective(problem: &SelectionProblem, result: &SelectionResult) -> f64 {
    let max_loss = problem.losses.iter().copied().fold(0.0, f64::max);
    let unused = problem.budget().saturating_sub(result.len());
    result.total_loss(&problem.losses) + unused as f64 * max_loss
}

/// Whether an index set satisfies the cardinality row and all knapsack rows.
pub fn satisfies_knapsack(problem: &SelectionProblem, ks: &KnapsackInstance, selected: &[usize]) -> bool {
    if selected.len() > problem.budget() {
        return false;
    }
    let loads = ks.loads(selected);
    GroupKey::ALL
        .iter()
        .all(|&k| loads[k] <= ks.capacities[k] + FEASIBILITY_TOL)
}

/// Whether an index set satisfies the original ratio rows
/// `|S_(y,z)| ≤ λ_(y,z)|S_y|` and the budget `⌊τn⌋`.
pub fn satisfies_ratio(problem: &SelectionProblem, selected: &[usize]) -> bool {
    if selected.len() > problem.budget() {
        return false;
    }
    let r = SelectionResult::from_indices(selected.to_vec(), &problem.groups);
    GroupKey::ALL.iter().all(|&k| {
        r.group_counts[k] as f64 <= problem.lambdas[k] * r.class_counts[k.y as usize] as f64 + FEASIBILITY_TOL
    })
}

/// Exhaustive search over all `2^n` subsets for the minimum of
/// [`selection_objective`] under the knapsack rows. Ties prefer the larger
/// selection, then the lexicographically smaller id list.
pub fn exact_select(problem: &SelectionProblem, n_cap: usize) -> Result<SelectionResult> {
    let n = problem.len();
    if n > n_cap || n >= usize::BITS as usize {
        return Err(Error::TooLarge { n, cap: n_cap });
    }
    problem.validate()?;
    let ks = to_knapsack(problem);
    let mut best: Option<(f64, SelectionResult)> = None;
    let mut ids = Vec::with_capacity(n);
    for mask in 0usize..(1 << n) {
        ids.clear();
        ids.extend((0..n).filter(|&i| mask >> i & 1 == 1));
        if !satisfies_knapsack(problem, &ks, &ids) {
            continue;
        }
        let cand = SelectionResult::from_indices(ids.clone(), &problem.groups);
        let obj = selection_objective(problem, &cand);
        let better = match &best {
            None => true,
            Some((b_obj, b)) => match obj.total_cmp(b_obj) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => match cand.len().cmp(&b.len()) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => cand.selected < b.selected,
                },
            },
        };
        if better {
            best = Some((obj, cand));
        }
    }
    Ok(best.map(|(_, r)| r).expect("the empty set is always feasible"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    Budget,
    Fairness(GroupKey),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    /// Capacity minus load; negative when violated.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
    /// `|S_(y,z)| − λ_(y,z)|S_y|` per group, for diagnostics.
    pub ratio_excess: PerGroup<f64>,
}

/// Checks a selection against the budget and the four knapsack rows.
pub fn check_feasible(result: &SelectionResult, problem: &SelectionProblem) -> FeasibilityReport {
    let ks = to_knapsack(problem);
    let mut violations = Vec::new();
    let budget_slack = problem.budget() as f64 - result.len() as f64;
    if budget_slack < 0.0 {
        violations.push(Violation {
            constraint: Constraint::Budget,
            slack: budget_slack,
        });
    }
    let loads = ks.loads(&result.selected);
    for k in GroupKey::ALL {
        let slack = ks.capacities[k] - loads[k];
        if slack < -FEASIBILITY_TOL {
            violations.push(Violation {
                constraint: Constraint::Fairness(k),
                slack,
            });
        }
    }
    let ratio_excess = PerGroup::from_fn(|k| {
        result.group_counts[k] as f64 - problem.lambdas[k] * result.class_counts[k.y as usize] as f64
    });
    FeasibilityReport {
        feasible: violations.is_empty(),
        violations,
        ratio_excess,
    }
}

/// JSON dump of a problem and its selection, for triage.
pub fn debug_dump(problem: &SelectionProblem, result: &SelectionResult) -> String {
    serde_json::to_string_pretty(&serde_json::json!({
        "problem": problem,
        "result": result,
        "feasibility": check_feasible(result, problem),
    }))
    .expect("serializable")
}
