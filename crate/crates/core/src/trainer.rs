//! Training loop for the fair-and-robust method, its ablations and the
//! baselines.
//!
//! Every method starts from a zero model and spends its first
//! `warm_start_epochs` on plain shuffled SGD over all samples. After that:
//!
//! | method                | selection       | batches                  | `λ` updates |
//! |-----------------------|-----------------|--------------------------|-------------|
//! | `LR`                  | none            | shuffled                 | no          |
//! | `ITLM`                | lowest loss     | shuffled                 | no          |
//! | `FB`                  | none            | `λ`-proportional         | yes         |
//! | `Ours`                | greedy, capped  | `λ`-proportional         | yes         |
//! | `Ours_no_constraints` | lowest loss     | `λ`-proportional         | yes         |
//! | `Ours_no_weights`     | greedy, capped  | stratified               | yes         |
//!
//! The two-phase baselines run `ITLM` to completion, freeze its last
//! selection and train a fresh model on it with `FB` or with the covariance
//! penalty.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batching::{batches_per_epoch, draw_batch, plan_batch, MIN_BATCH};
use crate::dataset::{Dataset, GroupKey, PerGroup};
use crate::fairness::{group_report, init_lambda, update, LambdaInit, LambdaState, Metric};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{LinearModel, PenaltyConfig};
use crate::selection::{check_feasible, debug_dump, greedy_select, trimmed_select, SelectionProblem, SelectionResult};
use crate::{seeded_rng, Error, Result, Rng};

/// RNG stream for minibatch order and draws.
pub const TRAIN_STREAM: u64 = 0x7_4a1;

const LAMBDA_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "ITLM")]
    Itlm,
    #[serde(rename = "FB")]
    Fb,
    #[serde(rename = "ITLM_then_FB")]
    ItlmThenFb,
    #[serde(rename = "ITLM_then_Penalty")]
    ItlmThenPenalty,
    Ours,
    #[serde(rename = "Ours_no_constraints")]
    OursNoConstraints,
    #[serde(rename = "Ours_no_weights")]
    OursNoWeights,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Lr,
        Method::Itlm,
        Method::Fb,
        Method::ItlmThenFb,
        Method::ItlmThenPenalty,
        Method::Ours,
        Method::OursNoConstraints,
        Method::OursNoWeights,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lr => "LR",
            Method::Itlm => "ITLM",
            Method::Fb => "FB",
            Method::ItlmThenFb => "ITLM_then_FB",
            Method::ItlmThenPenalty => "ITLM_then_Penalty",
            Method::Ours => "Ours",
            Method::OursNoConstraints => "Ours_no_constraints",
            Method::OursNoWeights => "Ours_no_weights",
        }
    }

    /// Row label for result tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::ItlmThenFb => "ITLM->FB",
            Method::ItlmThenPenalty => "ITLM->Penalty",
            Method::OursNoConstraints => "Ours w/o fairness const.",
            Method::OursNoWeights => "Ours w/o ERM weights",
            m => m.name(),
        }
    }

    fn uses_fair_sampler(self) -> bool {
        matches!(
            self,
            Method::Fb | Method::ItlmThenFb | Method::Ours | Method::OursNoConstraints | Method::OursNoWeights
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub tau: f64,
    pub alpha: f64,
    pub mu: f64,
    pub epochs: usize,
    pub warm_start_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub metric: Metric,
    pub seed: u64,
    pub lambda_init: LambdaInit,
    /// Keep `λ` at its initial value.
    pub freeze_lambda: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Ours,
            tau: 0.9,
            alpha: 0.0005,
            mu: 1.0,
            epochs: 400,
            warm_start_epochs: 100,
            batch_size: 100,
            learning_rate: 0.05,
            metric: Metric::Eo,
            seed: 0,
            lambda_init: LambdaInit::Proportional,
            freeze_lambda: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0,1]", self.tau));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha {} must be positive", self.alpha));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu {} must be nonnegative", self.mu));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.warm_start_epochs > self.epochs {
            return bad(format!(
                "warm_start_epochs {} exceeds epochs {}",
                self.warm_start_epochs, self.epochs
            ));
        }
        if self.batch_size == 0 || (self.method.uses_fair_sampler() && self.batch_size < MIN_BATCH) {
            return Err(Error::BatchTooSmall(self.batch_size));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over all training samples at the start of the epoch.
    pub train_loss: f64,
    pub selection_size: usize,
    /// `λ` used during the epoch, for methods that keep one.
    pub lambdas: Option<PerGroup<f64>>,
    /// Mean group losses on the selection after the epoch's steps.
    pub group_losses: PerGroup<Option<f64>>,
    pub validation: Option<EvalReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub method: Method,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
    pub test: EvalReport,
}

/// One pass of shuffled minibatch SGD over `positions`.
fn plain_epoch(
    model: &mut LinearModel,
    d: &Dataset,
    positions: &[usize],
    batch_size: usize,
    penalty: Option<PenaltyConfig>,
    rng: &mut Rng,
) -> Result<()> {
    let mut order = positions.to_vec();
    order.shuffle(rng);
    for batch in order.chunks(batch_size) {
        let g = match penalty {
            Some(cfg) => model.penalty_gradient(d, batch, cfg)?,
            None => model.gradient(d, batch, None)?,
        };
        model.sgd_step(&g)?;
    }
    Ok(())
}

/// Plain shuffled-minibatch logistic regression from a zero model.
pub fn fit_plain(d: &Dataset, epochs: usize, batch_size: usize, learning_rate: f64, seed: u64) -> Result<LinearModel> {
    let mut model = LinearModel::zeros(d.n_features(), learning_rate)?;
    let mut rng = seeded_rng(seed, TRAIN_STREAM);
    let all: Vec<usize> = (0..d.len()).collect();
    for _ in 0..epochs {
        plain_epoch(&mut model, d, &all, batch_size.max(1), None, &mut rng)?;
    }
    Ok(model)
}

struct Loop<'a> {
    cfg: &'a TrainConfig,
    d: &'a Dataset,
    val: Option<&'a Dataset>,
    groups: Vec<GroupKey>,
    all: Vec<usize>,
    model: LinearModel,
    rng: Rng,
    lambda: Option<LambdaState>,
    records: Vec<EpochRecord>,
    epoch_offset: usize,
}

enum Select {
    Everything,
    Trimmed,
    Greedy,
}

impl<'a> Loop<'a> {
    fn new(cfg: &'a TrainConfig, d: &'a Dataset, val: Option<&'a Dataset>, epoch_offset: usize) -> Result<Self> {
        let lambda = if cfg.method.uses_fair_sampler() {
            Some(init_lambda(d, cfg.metric, cfg.alpha, cfg.lambda_init)?)
        } else {
            None
        };
        Ok(Loop {
            cfg,
            d,
            val,
            groups: (0..d.len()).map(|i| d.group(i)).collect(),
            all: (0..d.len()).collect(),
            model: LinearModel::zeros(d.n_features(), cfg.learning_rate)?,
            rng: seeded_rng(cfg.seed, TRAIN_STREAM),
            lambda,
            records: Vec::with_capacity(cfg.epochs),
            epoch_offset,
        })
    }

    fn abort(&self, epoch: usize, reason: impl Into<String>) -> Error {
        Error::Aborted {
            epoch: self.epoch_offset + epoch,
            reason: reason.into(),
        }
    }

    fn losses(&self, epoch: usize) -> Result<Vec<f64>> {
        let losses = self.model.per_sample_loss(self.d)?;
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(self.abort(epoch, "non-finite training loss"));
        }
        Ok(losses)
    }

    fn select(&self, epoch: usize, how: &Select, losses: &[f64]) -> Result<SelectionResult> {
        let lambdas = match &self.lambda {
            Some(l) => l.values,
            None => PerGroup([0.5; 4]),
        };
        let problem = SelectionProblem::new(losses.to_vec(), self.groups.clone(), self.cfg.tau, lambdas)?;
        let sel = match how {
            Select::Everything => return Ok(SelectionResult::everything(self.d)),
            Select::Trimmed => trimmed_select(&problem),
            Select::Greedy => {
                let sel = greedy_select(&problem);
                let report = check_feasible(&sel, &problem);
                if !report.feasible {
                    return Err(self.abort(epoch, format!("infeasible selection: {}", debug_dump(&problem, &sel))));
                }
                sel
            }
        };
        if sel.is_empty() {
            return Err(self.abort(epoch, format!("empty selection: {}", debug_dump(&problem, &sel))));
        }
        Ok(sel)
    }

    fn fair_epoch(&mut self, sel: &SelectionResult, stratified: bool) -> Result<()> {
        let state = self.lambda.as_ref().expect("fair sampler has a lambda state");
        let plan_lambda = if stratified {
            let c = &sel.group_counts;
            let share = |y: u8| {
                let total = c[GroupKey::new(y, 0)] + c[GroupKey::new(y, 1)];
                if total == 0 {
                    0.5
                } else {
                    c[GroupKey::new(y, 1)] as f64 / total as f64
                }
            };
            LambdaState::from_shares(share(0), share(1), state.step_size, state.metric)?
        } else {
            state.clone()
        };
        let plan = plan_batch(sel, &plan_lambda, self.cfg.batch_size)?;
        let members = sel.by_group(&self.groups);
        for _ in 0..batches_per_epoch(sel.len(), self.cfg.batch_size) {
            let batch = draw_batch(&plan, &members, &mut self.rng)?;
            let g = self.model.gradient(self.d, &batch, None)?;
            self.model.sgd_step(&g)?;
        }
        Ok(())
    }

    fn check_lambda(&self, epoch: usize) -> Result<()> {
        if let Some(l) = &self.lambda {
            let in_bounds = l.values.0.iter().all(|v| (0.0..=1.0).contains(v));
            if l.simplex_error() > LAMBDA_TOL || !in_bounds {
                return Err(self.abort(epoch, format!("lambda invariant broken: {:?}", l.values)));
            }
        }
        Ok(())
    }

    /// Runs all epochs of a single-phase method over `self.d`. Returns the
    /// last selection used, if any.
    fn run(&mut self, method: Method, penalty: Option<PenaltyConfig>) -> Result<Option<SelectionResult>> {
        let mut last = None;
        for epoch in 0..self.cfg.epochs {
            let losses = self.losses(epoch)?;
            let train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
            let lambdas = self.lambda.as_ref().map(|l| l.values);
            let warm = epoch < self.cfg.warm_start_epochs;
            let mut group_losses = PerGroup([None; 4]);
            let selection_size;
            if warm || method == Method::Lr {
                let penalty = if warm { None } else { penalty };
                plain_epoch(&mut self.model, self.d, &self.all, self.cfg.batch_size, penalty, &mut self.rng)
                    .map_err(|e| self.abort(epoch, e.to_string()))?;
                selection_size = self.d.len();
            } else {
                let how = match method {
                    Method::Itlm | Method::OursNoConstraints => Select::Trimmed,
                    Method::Ours | Method::OursNoWeights => Select::Greedy,
                    _ => Select::Everything,
                };
                let sel = self.select(epoch, &how, &losses)?;
                selection_size = sel.len();
                let step = if method.uses_fair_sampler() {
                    self.fair_epoch(&sel, method == Method::OursNoWeights)
                } else {
                    plain_epoch(&mut self.model, self.d, &sel.selected, self.cfg.batch_size, penalty, &mut self.rng)
                };
                step.map_err(|e| self.abort(epoch, e.to_string()))?;
                if let Some(state) = &self.lambda {
                    let report = group_report(&self.model, &sel, self.d)?;
                    group_losses = report.losses;
                    if !self.cfg.freeze_lambda {
                        self.lambda = Some(update(state, &report));
                    }
                    self.check_lambda(epoch)?;
                }
                last = Some(sel);
            }
            let validation = self.val.map(|v| evaluate(&self.model, v)).transpose()?;
            self.records.push(EpochRecord {
                epoch: self.epoch_offset + epoch,
                train_loss,
                selection_size,
                lambdas,
                group_losses,
                validation,
            });
        }
        Ok(last)
    }
}

/// Trains `cfg.method` on `train` and evaluates the final model on `test`.
/// `val`, when given, is scored after every epoch.
pub fn train(cfg: &TrainConfig, train: &Dataset, val: Option<&Dataset>, test: &Dataset) -> Result<(LinearModel, RunLog)> {
    cfg.validate()?;
    let (model, records) = match cfg.method {
        Method::ItlmThenFb | Method::ItlmThenPenalty => {
            let phase1 = TrainConfig {
                method: Method::Itlm,
                ..cfg.clone()
            };
            let mut first = Loop::new(&phase1, train, val, 0)?;
            let last = first.run(Method::Itlm, None)?;
            let frozen = match last {
                Some(sel) => sel,
                None => {
                    let losses = first.losses(cfg.epochs)?;
                    first.select(cfg.epochs, &Select::Trimmed, &losses)?
                }
            };
            debug!("{}: frozen selection of {} samples", cfg.method, frozen.len());
            let subset = train.subset(&frozen.selected)?;
            let (second_method, penalty) = if cfg.method == Method::ItlmThenFb {
                (Method::Fb, None)
            } else {
                (Method::Itlm, Some(PenaltyConfig::new(cfg.mu)?))
            };
            let phase2 = TrainConfig {
                method: second_method,
                tau: 1.0,
                ..cfg.clone()
            };
            let mut second = Loop::new(&phase2, &subset, val, cfg.epochs)?;
            // Penalty training sees the whole frozen set every epoch.
            let method = if penalty.is_some() { Method::Lr } else { Method::Fb };
            second.run(method, penalty)?;
            let mut records = first.records;
            records.extend(second.records);
            (second.model, records)
        }
        method => {
            let mut run = Loop::new(cfg, train, val, 0)?;
            run.run(method, None)?;
            (run.model, run.records)
        }
    };
    let test = evaluate(&model, test)?;
    Ok((
        model,
        RunLog {
            method: cfg.method,
            seed: cfg.seed,
            records,
            test,
        },
    ))
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std, n }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}±{:.3}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub accuracy: MeanStd,
    pub eo_disparity: MeanStd,
    pub dp_disparity: MeanStd,
    /// Seeds whose run aborted, with the reason.
    pub failed: Vec<(u64, String)>,
}

impl Aggregate {
    pub fn from_runs(method: Method, runs: &[(u64, Result<EvalReport, String>)]) -> Self {
        let ok: Vec<&EvalReport> = runs.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
        let failed: Vec<(u64, String)> = runs
            .iter()
            .filter_map(|(s, r)| r.as_ref().err().map(|e| (*s, e.clone())))
            .collect();
        for (seed, reason) in &failed {
            warn!("{method} seed {seed} excluded from aggregate: {reason}");
        }
        let col = |f: fn(&EvalReport) -> f64| MeanStd::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        Aggregate {
            method,
            accuracy: col(|r| r.accuracy),
            eo_disparity: col(|r| r.eo_disparity),
            dp_disparity: col(|r| r.dp_disparity),
            failed,
        }
    }
}

/// Per-seed run logs, or the error message of a failed run.
pub type SeedRuns = Vec<(u64, Result<RunLog, String>)>;

/// Datasets for one seed.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Dataset,
}

/// Runs `cfg` once per seed (in parallel) on the data `prepare` builds for
/// that seed. Returns per-seed logs (or abort messages) and the aggregate.
pub fn multi_seed<F>(cfg: &TrainConfig, seeds: &[u64], prepare: F) -> (SeedRuns, Aggregate)
where
    F: Fn(u64) -> Result<Prepared> + Sync,
{
    let runs: Vec<(u64, Result<RunLog, String>)> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..cfg.clone() };
            let out = prepare(seed)
                .and_then(|p| train(&cfg, &p.train, p.val.as_ref(), &p.test))
                .map(|(_, log)| log)
                .map_err(|e| e.to_string());
            (seed, out)
        })
        .collect();
    let reports: Vec<(u64, Result<EvalReport, String>)> = runs
        .iter()
        .map(|(s, r)| (*s, r.as_ref().map(|l| l.test.clone()).map_err(Clone::clone)))
        .collect();
    let agg = Aggregate::from_runs(cfg.method, &reports);
    (runs, agg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, standardize, SplitSpec};
    use crate::synth::{generate, SynthSpec};

    fn data() -> Prepared {
        let raw = generate(&SynthSpec {
            n_total: 800,
            seed: 4,
            ..SynthSpec::default()
        })
        .unwrap();
        let (tr, va, te) = split(&raw, &SplitSpec::new(0.6, 0.1, 0.3, 1)).unwrap();
        let (train, stats) = standardize(&tr, None).unwrap();
        let val = standardize(&va.unwrap(), Some(&stats)).unwrap().0;
        let test = standardize(&te.unwrap(), Some(&stats)).unwrap().0;
        Prepared {
            train,
            val: Some(val),
            test,
        }
    }

    fn cfg(method: Method) -> TrainConfig {
        TrainConfig {
            method,
            epochs: 12,
            warm_start_epochs: 4,
            batch_size: 50,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn every_method_runs_and_logs_each_epoch() {
        let p = data();
        for m in Method::ALL {
            let (_, log) = train(&cfg(m), &p.train, p.val.as_ref(), &p.test).unwrap();
            let expect = if matches!(m, Method::ItlmThenFb | Method::ItlmThenPenalty) { 24 } else { 12 };
            assert_eq!(log.records.len(), expect, "{m}");
            assert!(log.records.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
            assert!(log.records.iter().all(|r| r.validation.is_some()));
            assert_eq!(log.test.confusion.0.iter().map(|c| c.total).sum::<usize>(), p.test.len());
        }
    }

    #[test]
    fn full_warm_start_equals_lr() {
        let p = data();
        let lr = TrainConfig {
            warm_start_epochs: 12,
            ..cfg(Method::Lr)
        };
        let (a, _) = train(&lr, &p.train, None, &p.test).unwrap();
        for m in [Method::Ours, Method::Itlm, Method::Fb, Method::OursNoWeights] {
            let (b, _) = train(&TrainConfig { method: m, ..lr.clone() }, &p.train, None, &p.test).unwrap();
            assert_eq!(a, b, "{m}");
        }
        assert_eq!(a, fit_plain(&p.train, 12, 50, lr.learning_rate, 3).unwrap());
    }

    #[test]
    fn deterministic_under_seed() {
        let p = data();
        let c = cfg(Method::Ours);
        let (a, la) = train(&c, &p.train, None, &p.test).unwrap();
        let (b, lb) = train(&c, &p.train, None, &p.test).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn selection_sizes_respect_budget() {
        let p = data();
        let (_, log) = train(&cfg(Method::Ours), &p.train, None, &p.test).unwrap();
        let budget = (0.9 * p.train.len() as f64 + 1e-9).floor() as usize;
        for r in &log.records[4..] {
            assert!(r.selection_size <= budget && r.selection_size > 0);
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig { tau: 0.0, ..TrainConfig::default() },
            TrainConfig { tau: 1.5, ..TrainConfig::default() },
            TrainConfig { warm_start_epochs: 500, ..TrainConfig::default() },
            TrainConfig { batch_size: 2, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { alpha: -1.0, ..TrainConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        assert!(TrainConfig { method: Method::Lr, batch_size: 1, ..TrainConfig::default() }.validate().is_ok());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
    }

    #[test]
    fn mean_std() {
        assert_eq!(MeanStd::of(&[0.3]).std, 0.0);
        let m = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 1.0).abs() < 1e-15);
    }

    #[test]
    fn multi_seed_repeats_and_excludes_failures() {
        let p = data();
        let c = cfg(Method::Ours);
        let (runs, agg) = multi_seed(&c, &[5, 5, 6], |s| {
            if s == 6 {
                Err(Error::Config("boom".into()))
            } else {
                Ok(p.clone())
            }
        });
        assert_eq!(runs[0].1, runs[1].1);
        assert_eq!(agg.accuracy.n, 2);
        assert_eq!(agg.accuracy.std, 0.0);
        assert_eq!(agg.failed.len(), 1);
    }
}
