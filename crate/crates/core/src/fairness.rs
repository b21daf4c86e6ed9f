//! Adaptive group caps `λ` and their signed-step updates.
//!
//! For each class `y` the pair `(λ_(y,0), λ_(y,1))` lives on the simplex.
//! Only `λ_(y,1)` is stepped; `λ_(y,0)` is always its complement.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{group_sizes, Dataset, GroupKey, PerGroup};
use crate::model::{cross_entropy, LinearModel};
use crate::selection::SelectionResult;
use crate::{seeded_rng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Equalized odds.
    Eo,
    /// Demographic parity.
    Dp,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Eo => "eo",
            Metric::Dp => "dp",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eo" => Ok(Metric::Eo),
            "dp" => Ok(Metric::Dp),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// How the caps start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaInit {
    /// Empirical group shares `|D_(y,z)| / |D_y|`.
    #[default]
    Proportional,
    /// Uniform on each class simplex, seeded.
    Random { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaState {
    pub values: PerGroup<f64>,
    pub step_size: f64,
    pub metric: Metric,
}

impl LambdaState {
    /// Builds a state from the two `z = 1` shares, complementing the rest.
    pub fn from_shares(l01: f64, l11: f64, step_size: f64, metric: Metric) -> Result<Self> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size {step_size} must be positive")));
        }
        for v in [l01, l11] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("lambda {v} outside [0,1]")));
            }
        }
        Ok(LambdaState {
            values: PerGroup([1.0 - l01, l01, 1.0 - l11, l11]),
            step_size,
            metric,
        })
    }

    pub fn get(&self, k: GroupKey) -> f64 {
        self.values[k]
    }

    /// Largest deviation of `Σ_z λ_(y,z)` from 1 across classes.
    pub fn simplex_error(&self) -> f64 {
        (0..2u8)
            .map(|y| (self.values[GroupKey::new(y, 0)] + self.values[GroupKey::new(y, 1)] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn set_share(&mut self, y: u8, share: f64) {
        let share = share.clamp(0.0, 1.0);
        self.values[GroupKey::new(y, 1)] = share;
        self.values[GroupKey::new(y, 0)] = 1.0 - share;
    }
}

pub fn init_lambda(d: &Dataset, metric: Metric, step_size: f64, init: LambdaInit) -> Result<LambdaState> {
    let sizes = group_sizes(d);
    if let Some(k) = GroupKey::ALL.into_iter().find(|&k| sizes[k] == 0) {
        return Err(Error::EmptyGroup(k));
    }
    let (l01, l11) = match init {
        LambdaInit::Proportional => {
            let share = |y: u8| {
                let one = sizes[GroupKey::new(y, 1)] as f64;
                one / (one + sizes[GroupKey::new(y, 0)] as f64)
            };
            (share(0), share(1))
        }
        LambdaInit::Random { seed } => {
            let mut rng = seeded_rng(seed, 0x1a_bda);
            (rng.random::<f64>(), rng.random::<f64>())
        }
    };
    LambdaState::from_shares(l01, l11, step_size, metric)
}

/// Per-group statistics of the current model on the selected samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupLossReport {
    /// Mean loss `L_(y,z)`; `None` when the group has no selected samples.
    pub losses: PerGroup<Option<f64>>,
    /// Share of selected samples predicted positive, per group.
    pub positive_rates: PerGroup<Option<f64>>,
    pub sizes: PerGroup<usize>,
}

impl GroupLossReport {
    /// Builds the report from precomputed per-sample losses and probabilities.
    pub fn from_parts(losses: &[f64], probs: &[f64], selection: &SelectionResult, d: &Dataset) -> Self {
        let mut sums = PerGroup([0.0f64; 4]);
        let mut positives = PerGroup([0usize; 4]);
        let mut sizes = PerGroup([0usize; 4]);
        for &i in &selection.selected {
            let k = d.group(i);
            sums[k] += losses[i];
            positives[k] += usize::from(probs[i] >= 0.5);
            sizes[k] += 1;
        }
        let mean = |k: GroupKey, v: f64| (sizes[k] > 0).then(|| v / sizes[k] as f64);
        GroupLossReport {
            losses: PerGroup::from_fn(|k| mean(k, sums[k])),
            positive_rates: PerGroup::from_fn(|k| mean(k, positives[k] as f64)),
            sizes,
        }
    }

    /// Groups with no selected samples.
    pub fn empty_groups(&self) -> Vec<GroupKey> {
        GroupKey::ALL.into_iter().filter(|&k| self.sizes[k] == 0).collect()
    }
}

/// Mean loss and positive-prediction rate of `model` per group over `selection`.
pub fn group_report(model: &LinearModel, selection: &SelectionResult, d: &Dataset) -> Result<GroupLossReport> {
    if d.n_features() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: d.n_features(),
        });
    }
    let mut losses = vec![0.0; d.len()];
    let mut probs = vec![0.0; d.len()];
    for &i in &selection.selected {
        let p = model.proba_row(d.row(i));
        probs[i] = p;
        losses[i] = cross_entropy(p, d.label(i));
    }
    Ok(GroupLossReport::from_parts(&losses, &probs, selection, d))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Equalized-odds step: for each class, moves `λ_(y,1)` by `α` toward the
/// group with the larger mean loss. Classes with an empty group are skipped.
pub fn update_eo(state: &LambdaState, report: &GroupLossReport) -> LambdaState {
    let mut next = state.clone();
    for y in 0..2u8 {
        let (Some(l0), Some(l1)) = (
            report.losses[GroupKey::new(y, 0)],
            report.losses[GroupKey::new(y, 1)],
        ) else {
            continue;
        };
        let share = state.values[GroupKey::new(y, 1)];
        next.set_share(y, share - state.step_size * sign(l0 - l1));
    }
    next
}

/// Demographic-parity step. Compares `T_z = |S_(1,z)|/|S_(z)| · L_(1,z)`
/// for both `z`; the positive class moves toward the larger term and the
/// negative class moves the opposite way.
pub fn update_dp(state: &LambdaState, report: &GroupLossReport) -> LambdaState {
    let term = |z: u8| -> Option<f64> {
        let pos = GroupKey::new(1, z);
        let stratum = report.sizes[pos] + report.sizes[GroupKey::new(0, z)];
        let loss = report.losses[pos]?;
        (stratum > 0).then(|| report.sizes[pos] as f64 / stratum as f64 * loss)
    };
    let (Some(t0), Some(t1)) = (term(0), term(1)) else {
        return state.clone();
    };
    let step = state.step_size * sign(t0 - t1);
    let mut next = state.clone();
    next.set_share(1, state.values[GroupKey::new(1, 1)] - step);
    next.set_share(0, state.values[GroupKey::new(0, 1)] + step);
    next
}

/// Dispatches on `state.metric`.
pub fn update(state: &LambdaState, report: &GroupLossReport) -> LambdaState {
    match state.metric {
        Metric::Eo => update_eo(state, report),
        Metric::Dp => update_dp(state, report),
    }
}
