//! Label-flipping noise: uniform, margin-based adversarial, and
//! group-targeted.
//!
//! The adversarial flipper negates the labels of the samples a clean probe
//! classifies most confidently, a greedy stand-in for accuracy-minimizing
//! poisoning.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroupKey};
use crate::metrics::accuracy;
use crate::model::LinearModel;
use crate::trainer::fit_plain;
use crate::{seeded_rng, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Random,
    Adversarial,
    GroupTargeted,
}

impl FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(NoiseMode::Random),
            "adversarial" => Ok(NoiseMode::Adversarial),
            "group_targeted" | "group-targeted" => Ok(NoiseMode::GroupTargeted),
            other => Err(Error::Config(format!("unknown noise mode `{other}`"))),
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseMode::Random => "random",
            NoiseMode::Adversarial => "adversarial",
            NoiseMode::GroupTargeted => "group_targeted",
        })
    }
}

/// Target of group-targeted flipping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TargetGroup {
    #[default]
    Auto,
    Fixed(GroupKey),
}

impl FromStr for TargetGroup {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(TargetGroup::Auto);
        }
        GroupKey::parse(s)
            .map(TargetGroup::Fixed)
            .ok_or_else(|| Error::Config(format!("target group `{s}` is not auto or y?z?")))
    }
}

impl TryFrom<String> for TargetGroup {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TargetGroup> for String {
    fn from(t: TargetGroup) -> String {
        match t {
            TargetGroup::Auto => "auto".into(),
            TargetGroup::Fixed(k) => format!("y{}z{}", k.y, k.z),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub rate: f64,
    pub mode: NoiseMode,
    pub target_group: TargetGroup,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            rate: 0.0,
            mode: NoiseMode::Random,
            target_group: TargetGroup::Auto,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.rate) {
            return Err(Error::InvalidNoiseRate(self.rate));
        }
        Ok(())
    }

    /// `⌊rate·n⌋`, robust to `rate·n` landing a hair below an integer.
    pub fn flip_count(&self, n: usize) -> usize {
        ((self.rate * n as f64) + 1e-9).floor() as usize
    }
}

/// Settings for the logistic-regression fits used by the probe and by
/// automatic target selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 100,
            batch_size: 100,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn fit(&self, d: &Dataset) -> Result<LinearModel> {
        fit_plain(d, self.epochs, self.batch_size, self.learning_rate, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseOutcome {
    pub data: Dataset,
    /// Sample ids whose labels were negated, ascending.
    pub flipped_ids: Vec<usize>,
    pub chosen_group: Option<GroupKey>,
    /// Requested flips that did not fit in the target group.
    pub shortfall: usize,
}

/// Negates the labels at `positions`. Applying it twice restores `d`.
pub fn apply_flips(d: &Dataset, positions: &[usize]) -> Result<Dataset> {
    let mut labels = d.labels().to_vec();
    for &p in positions {
        labels[p] = 1 - labels[p];
    }
    d.with_labels(labels)
}

fn outcome(d: &Dataset, positions: &[usize], chosen_group: Option<GroupKey>, shortfall: usize) -> Result<NoiseOutcome> {
    let mut flipped_ids: Vec<usize> = positions.iter().map(|&p| d.ids()[p]).collect();
    flipped_ids.sort_unstable();
    Ok(NoiseOutcome {
        data: apply_flips(d, positions)?,
        flipped_ids,
        chosen_group,
        shortfall,
    })
}

/// Flips `⌊rate·n⌋` distinct samples chosen uniformly.
pub fn flip_random(d: &Dataset, spec: &NoiseSpec) -> Result<NoiseOutcome> {
    spec.validate()?;
    let k = spec.flip_count(d.len());
    let mut rng = seeded_rng(spec.seed, 0xf1_1b);
    let positions = rand::seq::index::sample(&mut rng, d.len(), k).into_vec();
    outcome(d, &positions, None, 0)
}

/// `(2y − 1)·logit`: positive when the probe is right, larger when it is surer.
pub fn margins(d: &Dataset, probe: &LinearModel) -> Result<Vec<f64>> {
    if probe.dim() != d.n_features() {
        return Err(Error::DimensionMismatch {
            expected: d.n_features(),
            got: probe.dim(),
        });
    }
    Ok((0..d.len())
        .map(|i| {
            let s = if d.label(i) == 1 { 1.0 } else { -1.0 };
            // `+ 0.0` folds -0.0 into 0.0 so exact ties sort by id.
            s * probe.logit_row(d.row(i)) + 0.0
        })
        .collect())
}

/// Positions among `candidates` ordered by descending margin, ties by id.
fn by_margin(d: &Dataset, margins: &[f64], mut candidates: Vec<usize>) -> Vec<usize> {
    candidates.sort_by(|&a, &b| margins[b].total_cmp(&margins[a]).then(d.ids()[a].cmp(&d.ids()[b])));
    candidates
}

/// Flips the `⌊rate·n⌋` samples with the largest margin under `probe`.
pub fn flip_adversarial(d: &Dataset, spec: &NoiseSpec, probe: &LinearModel) -> Result<NoiseOutcome> {
    spec.validate()?;
    let m = margins(d, probe)?;
    let mut order = by_margin(d, &m, (0..d.len()).collect());
    order.truncate(spec.flip_count(d.len()));
    outcome(d, &order, None, 0)
}

fn flip_within(d: &Dataset, margins: &[f64], group: GroupKey, k: usize) -> Result<NoiseOutcome> {
    let members: Vec<usize> = (0..d.len()).filter(|&i| d.group(i) == group).collect();
    if members.is_empty() {
        return Err(Error::EmptyGroup(group));
    }
    let shortfall = k.saturating_sub(members.len());
    if shortfall > 0 {
        warn!("group {group} holds {} samples; {shortfall} of {k} flips dropped", members.len());
    }
    let mut order = by_margin(d, margins, members);
    order.truncate(k);
    outcome(d, &order, Some(group), shortfall)
}

/// Flips `⌊rate·n⌋` labels inside one group, largest margin first.
///
/// With [`TargetGroup::Auto`] every nonempty group is tried: a fresh model is
/// fitted on each corrupted copy with `refit` and scored on `eval`, and the
/// group giving the lowest accuracy wins (ties to the lower group index).
pub fn flip_group_targeted(
    d: &Dataset,
    spec: &NoiseSpec,
    probe: &LinearModel,
    eval: &Dataset,
    refit: &ProbeConfig,
) -> Result<NoiseOutcome> {
    spec.validate()?;
    let m = margins(d, probe)?;
    let k = spec.flip_count(d.len());
    match spec.target_group {
        TargetGroup::Fixed(g) => flip_within(d, &m, g, k),
        TargetGroup::Auto => {
            let scored: Vec<(GroupKey, f64, NoiseOutcome)> = GroupKey::ALL
                .par_iter()
                .filter(|&&g| (0..d.len()).any(|i| d.group(i) == g))
                .map(|&g| {
                    let out = flip_within(d, &m, g, k)?;
                    let acc = accuracy(&refit.fit(&out.data)?, eval)?;
                    Ok((g, acc, out))
                })
                .collect::<Result<_>>()?;
            let best = scored
                .into_iter()
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.index().cmp(&b.0.index())))
                .ok_or(Error::EmptyDataset)?;
            Ok(best.2)
        }
    }
}

/// Dispatches on `spec.mode`. `probe` and `eval` are only consulted by the
/// modes that need them.
pub fn corrupt(
    d: &Dataset,
    spec: &NoiseSpec,
    probe: Option<&LinearModel>,
    eval: Option<&Dataset>,
    refit: &ProbeConfig,
) -> Result<NoiseOutcome> {
    let need_probe = || Error::Config(format!("noise mode {} needs a probe model", spec.mode));
    match spec.mode {
        NoiseMode::Random => flip_random(d, spec),
        NoiseMode::Adversarial => flip_adversarial(d, spec, probe.ok_or_else(need_probe)?),
        NoiseMode::GroupTargeted => {
            let probe = probe.ok_or_else(need_probe)?;
            let eval = eval.ok_or_else(|| Error::Config("auto group targeting needs an evaluation set".into()))?;
            flip_group_targeted(d, spec, probe, eval, refit)
        }
    }
}
