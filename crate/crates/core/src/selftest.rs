//! Oracle suites run by `fairsel selftest`.

use std::fmt;

use rand::Rng as _;
use serde::Serialize;

use crate::batching::{draw_batch, plan_batch};
use crate::dataset::{Dataset, GroupKey, PerGroup};
use crate::fairness::{update, GroupLossReport, LambdaState, Metric};
use crate::model::LinearModel;
use crate::selection::{
    check_feasible, exact_select, greedy_select, satisfies_knapsack, satisfies_ratio, selection_objective,
    to_knapsack, SelectionProblem, SelectionResult,
};
use crate::{seeded_rng, Result, Rng};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<24} {}", self.name, self.detail)
    }
}

fn random_groups(rng: &mut Rng, n: usize) -> Vec<GroupKey> {
    (0..n).map(|_| GroupKey::ALL[rng.random_range(0..4)]).collect()
}

/// Random problem with `n` samples, losses in `[0, 3)` and random caps.
pub fn random_problem(rng: &mut Rng, n: usize) -> SelectionProblem {
    let losses = (0..n).map(|_| rng.random::<f64>() * 3.0).collect();
    let groups = random_groups(rng, n);
    let tau = rng.random_range(1.0 / n as f64..=1.0);
    let (a, b): (f64, f64) = (rng.random(), rng.random());
    SelectionProblem::new(losses, groups, tau, PerGroup([1.0 - a, a, 1.0 - b, b])).expect("valid random problem")
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..1 << n).map(move |mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect())
}

/// Ratio-form feasibility implies knapsack-form feasibility, and the two
/// agree on every subset that uses the whole budget `τn`.
pub fn knapsack_equivalence(seed: u64, instances: usize) -> SuiteReport {
    let mut rng = seeded_rng(seed, 1);
    let mut failures = 0;
    let mut full_budget_checked = 0;
    for _ in 0..instances {
        let n = rng.random_range(1..=10);
        let mut p = random_problem(&mut rng, n);
        // An integer τn makes the full-budget case reachable.
        let k = rng.random_range(1..=n);
        p.tau = k as f64 / n as f64;
        let ks = to_knapsack(&p);
        for s in subsets(n) {
            let within_budget = s.len() <= p.budget();
            let ratio = within_budget && satisfies_ratio(&p, &s);
            let knap = within_budget && satisfies_knapsack(&p, &ks, &s);
            if ratio && !knap {
                failures += 1;
            }
            if s.len() == k {
                full_budget_checked += 1;
                if ratio != knap {
                    failures += 1;
                }
            }
        }
    }
    SuiteReport {
        name: "knapsack_equivalence",
        passed: failures == 0,
        detail: format!("{instances} instances, {full_budget_checked} full-budget subsets, {failures} mismatches"),
    }
}

pub fn greedy_feasibility(seed: u64, instances: usize) -> SuiteReport {
    let mut rng = seeded_rng(seed, 2);
    let mut bad = 0;
    for _ in 0..instances {
        let n = rng.random_range(1..=200);
        let p = random_problem(&mut rng, n);
        if !check_feasible(&greedy_select(&p), &p).feasible {
            bad += 1;
        }
    }
    SuiteReport {
        name: "greedy_feasibility",
        passed: bad == 0,
        detail: format!("{} / {instances} feasible", instances - bad),
    }
}

pub fn oracle_bound(seed: u64, instances: usize) -> SuiteReport {
    let mut rng = seeded_rng(seed, 3);
    let mut below = 0;
    let mut matched = 0;
    for _ in 0..instances {
        let n = rng.random_range(1..=10);
        let p = random_problem(&mut rng, n);
        let g = selection_objective(&p, &greedy_select(&p));
        let e = selection_objective(&p, &exact_select(&p, 10).expect("n within cap"));
        if g < e - 1e-9 {
            below += 1;
        }
        if (g - e).abs() <= 1e-9 {
            matched += 1;
        }
    }
    SuiteReport {
        name: "oracle_bound",
        passed: below == 0,
        detail: format!(
            "greedy below optimum in {below} cases; matched optimum in {matched}/{instances} ({:.1}%)",
            100.0 * matched as f64 / instances as f64
        ),
    }
}

fn random_dataset(rng: &mut Rng, n: usize, m: usize) -> Dataset {
    let features = (0..n * m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..2)).collect();
    let sens = (0..n).map(|_| rng.random_range(0..2)).collect();
    Dataset::new(features, m, labels, sens).expect("valid random dataset")
}

/// Largest `‖analytic − numeric‖∞ / max(‖analytic‖∞, ‖numeric‖∞)` over
/// random weighted instances, with central differences.
pub fn gradient_check(seed: u64, instances: usize) -> Result<(f64, SuiteReport)> {
    let mut rng = seeded_rng(seed, 4);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let m = rng.random_range(1..=6);
        let n = rng.random_range(1..=30);
        let d = random_dataset(&mut rng, n, m);
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
        let model = LinearModel::new(w, rng.random_range(-1.0..1.0), 0.1)?;
        let batch: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let g = model.gradient(&d, &batch, Some(&weights))?;
        let loss_at = |mm: &LinearModel| mm.batch_loss(&d, &batch, Some(&weights));
        let mut numeric = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let mut plus = model.clone();
            let mut minus = model.clone();
            if j < m {
                plus.weights[j] += h;
                minus.weights[j] -= h;
            } else {
                plus.bias += h;
                minus.bias -= h;
            }
            numeric.push((loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h));
        }
        let analytic: Vec<f64> = g.weights.iter().copied().chain([g.bias]).collect();
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = analytic
            .iter()
            .chain(&numeric)
            .map(|v| v.abs())
            .fold(1e-8, f64::max);
        worst = worst.max(diff / scale);
    }
    Ok((
        worst,
        SuiteReport {
            name: "gradient_check",
            passed: worst < 1e-5,
            detail: format!("max relative error {worst:.2e} over {instances} instances"),
        },
    ))
}

/// Group frequencies over many batches and the mean batch gradient against
/// the closed-form weighted gradient, on a fixed 40-sample instance.
///
/// Group sizes 8/12/10/10 with shares 0.3 and 0.7 make every planned count
/// exact, so the suite measures the sampling and not the count rounding.
pub fn sampler_unbiasedness(seed: u64, batches: usize, gradient_batches: usize) -> Result<SuiteReport> {
    let mut rng = seeded_rng(seed, 5);
    let layout = [(0, 0, 8), (0, 1, 12), (1, 0, 10), (1, 1, 10)];
    let (labels, sens): (Vec<u8>, Vec<u8>) =
        layout.iter().flat_map(|&(y, z, c)| std::iter::repeat_n((y, z), c)).unzip();
    let features = (0..40 * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
    let d = Dataset::new(features, 3, labels, sens)?;
    let groups: Vec<GroupKey> = (0..40).map(|i| d.group(i)).collect();
    let sel = SelectionResult::from_indices((0..40).collect(), &groups);
    let lambdas = LambdaState::from_shares(0.3, 0.7, 0.001, Metric::Eo)?;
    let b = 100;
    let plan = plan_batch(&sel, &lambdas, b)?;
    let members = sel.by_group(&groups);

    let mut freq = PerGroup([0usize; 4]);
    for _ in 0..batches {
        for i in draw_batch(&plan, &members, &mut rng)? {
            freq[groups[i]] += 1;
        }
    }
    let total = sel.len() as f64;
    let mut worst_freq = 0.0f64;
    for k in GroupKey::ALL {
        let target = if sel.group_counts[k] == 0 {
            0.0
        } else {
            lambdas.values[k] * sel.class_counts[k.y as usize] as f64 / total
        };
        let got = freq[k] as f64 / (batches * b) as f64;
        worst_freq = worst_freq.max((got - target).abs());
    }

    // Closed form: each sample weighted λ_(y,z)|S_y| / |S_(y,z)|.
    let model = LinearModel::new(vec![0.4, -0.3, 0.8], 0.1, 0.1)?;
    let weights: Vec<f64> = (0..40)
        .map(|i| {
            let k = groups[i];
            lambdas.values[k] * sel.class_counts[k.y as usize] as f64 / sel.group_counts[k] as f64
        })
        .collect();
    let all: Vec<usize> = (0..40).collect();
    let exact = model.gradient(&d, &all, Some(&weights))?;
    let mut mean = [0.0; 4];
    for _ in 0..gradient_batches {
        let batch = draw_batch(&plan, &members, &mut rng)?;
        let g = model.gradient(&d, &batch, None)?;
        for (acc, v) in mean.iter_mut().zip(g.weights.iter().chain([&g.bias])) {
            *acc += v / gradient_batches as f64;
        }
    }
    let exact_v: Vec<f64> = exact.weights.iter().copied().chain([exact.bias]).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = mean.iter().zip(&exact_v).map(|(a, b)| a - b).collect();
    let rel = norm(&diff) / norm(&exact_v);
    Ok(SuiteReport {
        name: "sampler_unbiasedness",
        passed: worst_freq <= 0.01 && rel <= 0.01,
        detail: format!("max frequency gap {worst_freq:.4}, mean-gradient relative error {rel:.4}"),
    })
}

pub fn lambda_invariants(seed: u64, sequences: usize, steps: usize) -> SuiteReport {
    let mut rng = seeded_rng(seed, 6);
    let mut bad = 0;
    for _ in 0..sequences {
        let alpha = rng.random_range(1e-4..0.1);
        let metric = if rng.random() { Metric::Eo } else { Metric::Dp };
        let mut s = LambdaState::from_shares(rng.random(), rng.random(), alpha, metric).expect("valid shares");
        for _ in 0..steps {
            let sizes = PerGroup::from_fn(|_| rng.random_range(0..5usize));
            let report = GroupLossReport {
                losses: PerGroup::from_fn(|k| (sizes[k] > 0).then(|| rng.random::<f64>())),
                positive_rates: PerGroup([None; 4]),
                sizes,
            };
            let next = update(&s, &report);
            let drift = GroupKey::ALL.iter().map(|&k| (next.values[k] - s.values[k]).abs()).fold(0.0, f64::max);
            let bounded = next.values.0.iter().all(|v| (0.0..=1.0).contains(v));
            if next.simplex_error() > 1e-9 || !bounded || drift > alpha + 1e-12 {
                bad += 1;
            }
            s = next;
        }
    }
    SuiteReport {
        name: "lambda_invariants",
        passed: bad == 0,
        detail: format!("{} updates, {bad} violations", sequences * steps),
    }
}

/// Every suite at its default size.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        knapsack_equivalence(seed, 200),
        greedy_feasibility(seed, 1000),
        oracle_bound(seed, 500),
        gradient_check(seed, 100)?.1,
        sampler_unbiasedness(seed, 10_000, 50_000)?,
        lambda_invariants(seed, 200, 200),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for r in run_all(11).unwrap() {
            assert!(r.passed, "{r}");
        }
    }
}
