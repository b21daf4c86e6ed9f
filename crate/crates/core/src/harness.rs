//! Config-driven experiments: data preparation, corruption, per-cell runs,
//! result files and tables.
//!
//! One experiment crosses noise rates × methods × seeds. Data generation and
//! the train/validation/test split depend only on the data seed, so every
//! cell sees the same clean test set; the run seed drives training and
//! random flipping.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corruption::{corrupt, NoiseMode, NoiseSpec, ProbeConfig, TargetGroup};
use crate::dataset::{load_csv, split, standardize, Dataset, GroupKey, Schema, SplitSpec};
use crate::fairness::Metric;
use crate::metrics::EvalReport;
use crate::synth::{generate, SynthSpec};
use crate::trainer::{train, Aggregate, EpochRecord, Method, RunLog, TrainConfig};
use crate::{Error, Result};

/// Configs shipped with the binary, addressable by name.
pub const SHIPPED_CONFIGS: &[(&str, &str)] = &[
    ("table1_eo", include_str!("../../../configs/table1_eo.toml")),
    ("table1_dp", include_str!("../../../configs/table1_dp.toml")),
    ("table6_ablation", include_str!("../../../configs/table6_ablation.toml")),
    ("rate_sweep", include_str!("../../../configs/rate_sweep.toml")),
    ("compas_eo", include_str!("../../../configs/compas_eo.toml")),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synth(SynthSpec),
    Csv { path: PathBuf, schema: Schema },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    /// 2000 / 200 / 1000 of 3200 samples.
    fn default() -> Self {
        SplitFractions {
            train: 0.625,
            validation: 0.0625,
            test: 0.3125,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub rates: Vec<f64>,
    pub mode: NoiseMode,
    pub target_group: TargetGroup,
    pub probe: ProbeConfig,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            rates: vec![0.1],
            mode: NoiseMode::Adversarial,
            target_group: TargetGroup::Auto,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Shared training settings; `method` and `seed` are filled per cell.
    #[serde(default)]
    pub train: TrainConfig,
    /// Per-method overrides of `train` keys, keyed by method name.
    #[serde(default)]
    pub overrides: BTreeMap<String, toml::Table>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads a file, or a shipped config when `name_or_path` names one and
    /// no such file exists.
    pub fn load(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            return ExperimentSpec::from_toml(&text);
        }
        let stem = name_or_path.trim_end_matches(".toml");
        match SHIPPED_CONFIGS.iter().find(|(n, _)| *n == stem) {
            Some((_, text)) => ExperimentSpec::from_toml(text),
            None => Err(Error::Config(format!("no config file or shipped config named `{name_or_path}`"))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.noise.rates.is_empty() {
            return Err(Error::Config("noise rate list is empty".into()));
        }
        for &rate in &self.noise.rates {
            if !(0.0..=0.5).contains(&rate) {
                return Err(Error::InvalidNoiseRate(rate));
            }
        }
        for key in self.overrides.keys() {
            key.parse::<Method>()?;
        }
        for &m in &self.methods {
            self.train_config(m, 0)?.validate()?;
        }
        if let DataSource::Synth(s) = &self.data {
            s.validate()?;
        }
        Ok(())
    }

    /// Resolved training config for one cell.
    pub fn train_config(&self, method: Method, seed: u64) -> Result<TrainConfig> {
        let mut cfg = self.train.clone();
        if let Some(over) = self.overrides.get(method.name()) {
            let mut table = toml::Table::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
            for (k, v) in over {
                if !table.contains_key(k) {
                    return Err(Error::Config(format!("override for {method}: unknown key `{k}`")));
                }
                table.insert(k.clone(), v.clone());
            }
            cfg = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        }
        cfg.method = method;
        cfg.seed = seed;
        Ok(cfg)
    }

    /// Sets one `train` key for every method (overrides still win).
    pub fn set_train_key(&mut self, key: &str, value: toml::Value) -> Result<()> {
        let mut table = toml::Table::try_from(&self.train).map_err(|e| Error::Config(e.to_string()))?;
        if !table.contains_key(key) {
            return Err(Error::Config(format!("unknown training key `{key}`")));
        }
        table.insert(key.into(), value);
        self.train = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Clean, standardized splits.
#[derive(Clone, Debug)]
pub struct CleanData {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Dataset,
}

pub fn prepare_clean(spec: &ExperimentSpec) -> Result<CleanData> {
    let raw = match &spec.data {
        DataSource::Synth(s) => generate(s)?,
        DataSource::Csv { path, schema } => load_csv(path, schema)?,
    };
    let f = &spec.split;
    let (tr, va, te) = split(&raw, &SplitSpec::new(f.train, f.validation, f.test, spec.data_seed))?;
    let te = te.ok_or_else(|| Error::InvalidSplit("a test split is required".into()))?;
    let (train, stats) = standardize(&tr, None)?;
    let val = va.map(|v| standardize(&v, Some(&stats)).map(|p| p.0)).transpose()?;
    let test = standardize(&te, Some(&stats))?.0;
    Ok(CleanData { train, val, test })
}

/// Corrupted training set for one (rate, seed).
#[derive(Clone, Debug)]
pub struct NoisyTrain {
    pub rate: f64,
    pub seed: u64,
    pub train: Dataset,
    pub flipped: usize,
    pub chosen_group: Option<GroupKey>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub seed: u64,
    pub rate: f64,
    pub flipped: usize,
    pub chosen_group: Option<String>,
    pub test: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateAggregate {
    pub rate: f64,
    pub aggregates: Vec<Aggregate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub metric: Metric,
    pub cells: Vec<CellResult>,
    pub by_rate: Vec<RateAggregate>,
}

impl ExperimentResult {
    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.error.is_none())
    }

    pub fn aggregate(&self, rate: f64, method: Method) -> Option<&Aggregate> {
        self.by_rate
            .iter()
            .find(|r| r.rate == rate)?
            .aggregates
            .iter()
            .find(|a| a.method == method)
    }
}

fn rate_tag(rate: f64) -> String {
    format!("{rate:.4}")
}

fn run_file(out: &Path, rate: f64, method: Method, seed: u64) -> PathBuf {
    out.join("runs").join(format!("rate{}_{}_seed{}.csv", rate_tag(rate), method.name(), seed))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Per-epoch log as CSV, preceded by `#` lines carrying the resolved config.
pub fn run_log_csv(header: &serde_json::Value, log: &RunLog) -> String {
    let mut s = String::new();
    for line in serde_json::to_string_pretty(header).expect("json").lines() {
        let _ = writeln!(s, "# {line}");
    }
    s.push_str("epoch,train_loss,selection_size,lambda_00,lambda_01,lambda_10,lambda_11,L_00,L_01,L_10,L_11,val_acc,val_eo,val_dp\n");
    for r in &log.records {
        let EpochRecord {
            epoch,
            train_loss,
            selection_size,
            lambdas,
            group_losses,
            validation,
        } = r;
        let _ = write!(s, "{epoch},{train_loss:?},{selection_size}");
        for k in GroupKey::ALL {
            let _ = write!(s, ",{}", opt(lambdas.as_ref().map(|l| l[k])));
        }
        for k in GroupKey::ALL {
            let _ = write!(s, ",{}", opt(group_losses[k]));
        }
        let v = validation.as_ref();
        let _ = writeln!(
            s,
            ",{},{},{}",
            opt(v.map(|e| e.accuracy)),
            opt(v.map(|e| e.eo_disparity)),
            opt(v.map(|e| e.dp_disparity))
        );
    }
    let t = &log.test;
    let _ = writeln!(
        s,
        "# test accuracy={:?} eo_disparity={:?} dp_disparity={:?}",
        t.accuracy, t.eo_disparity, t.dp_disparity
    );
    s
}

fn build_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j.max(1));
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs every (rate, method, seed) cell, writing results under `out` when
/// given. Cell failures are recorded, not raised.
pub fn run_experiment(spec: &ExperimentSpec, out: Option<&Path>, jobs: Option<usize>) -> Result<ExperimentResult> {
    spec.validate()?;
    let clean = prepare_clean(spec)?;
    let needs_probe = spec.noise.mode != NoiseMode::Random && spec.noise.rates.iter().any(|&r| r > 0.0);
    let probe = needs_probe.then(|| spec.noise.probe.fit(&clean.train)).transpose()?;
    let eval_set = clean.val.as_ref().unwrap_or(&clean.test);
    let pool = build_pool(jobs)?;

    let pairs: Vec<(f64, u64)> = spec
        .noise
        .rates
        .iter()
        .flat_map(|&r| spec.seeds.iter().map(move |&s| (r, s)))
        .collect();
    let noisy: Vec<NoisyTrain> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(rate, seed)| {
                let ns = NoiseSpec {
                    rate,
                    mode: spec.noise.mode,
                    target_group: spec.noise.target_group,
                    seed,
                };
                let o = corrupt(&clean.train, &ns, probe.as_ref(), Some(eval_set), &spec.noise.probe)?;
                Ok(NoisyTrain {
                    rate,
                    seed,
                    train: o.data,
                    flipped: o.flipped_ids.len(),
                    chosen_group: o.chosen_group,
                })
            })
            .collect::<Result<_>>()
    })?;

    let mut cells_in: Vec<(&NoisyTrain, Method)> = Vec::new();
    for n in &noisy {
        for &m in &spec.methods {
            cells_in.push((n, m));
        }
    }
    let spec_json = serde_json::to_value(spec)?;
    let outputs: Vec<(CellResult, Option<String>)> = pool.install(|| {
        cells_in
            .par_iter()
            .map(|&(n, method)| {
                let cfg = spec.train_config(method, n.seed)?;
                let outcome = train(&cfg, &n.train, clean.val.as_ref(), &clean.test);
                let chosen_group = n.chosen_group.map(|g| String::from(TargetGroup::Fixed(g)));
                let mut cell = CellResult {
                    method,
                    seed: n.seed,
                    rate: n.rate,
                    flipped: n.flipped,
                    chosen_group,
                    test: None,
                    error: None,
                };
                let csv = match outcome {
                    Ok((_, log)) => {
                        cell.test = Some(log.test.clone());
                        let header = serde_json::json!({
                            "experiment": spec_json,
                            "cell": { "rate": n.rate, "seed": n.seed, "flipped": n.flipped,
                                      "chosen_group": cell.chosen_group },
                            "train": cfg,
                        });
                        Some(run_log_csv(&header, &log))
                    }
                    Err(e) => {
                        log::error!("{method} rate {} seed {}: {e}", n.rate, n.seed);
                        cell.error = Some(e.to_string());
                        None
                    }
                };
                info!("finished {method} rate {} seed {}", n.rate, n.seed);
                Ok((cell, csv))
            })
            .collect::<Result<_>>()
    })?;

    let cells: Vec<CellResult> = outputs.iter().map(|(c, _)| c.clone()).collect();
    let by_rate = spec
        .noise
        .rates
        .iter()
        .map(|&rate| RateAggregate {
            rate,
            aggregates: spec
                .methods
                .iter()
                .map(|&m| {
                    let runs: Vec<(u64, std::result::Result<EvalReport, String>)> = cells
                        .iter()
                        .filter(|c| c.rate == rate && c.method == m)
                        .map(|c| (c.seed, c.test.clone().ok_or_else(|| c.error.clone().unwrap_or_default())))
                        .collect();
                    Aggregate::from_runs(m, &runs)
                })
                .collect(),
        })
        .collect();
    let result = ExperimentResult {
        name: spec.name.clone(),
        metric: spec.train.metric,
        cells,
        by_rate,
    };

    if let Some(out) = out {
        fs::create_dir_all(out.join("runs")).map_err(|e| Error::io(out, e))?;
        let write = |p: PathBuf, text: &str| fs::write(&p, text).map_err(|e| Error::io(p, e));
        write(out.join("resolved.toml"), &spec.to_toml())?;
        for (cell, csv) in &outputs {
            if let Some(csv) = csv {
                write(run_file(out, cell.rate, cell.method, cell.seed), csv)?;
            }
        }
        write(out.join("summary.json"), &serde_json::to_string_pretty(&result)?)?;
        write(out.join("table.csv"), &table_csv(&result))?;
        write(out.join("table.txt"), &table_text(&result))?;
        if spec.noise.rates.len() > 1 {
            write(out.join("sweep.csv"), &sweep_csv(&result))?;
        }
    }
    Ok(result)
}

fn fairness_column(metric: Metric, a: &Aggregate) -> crate::trainer::MeanStd {
    match metric {
        Metric::Eo => a.eo_disparity,
        Metric::Dp => a.dp_disparity,
    }
}

/// Rows = methods; mean and sample std per column.
pub fn table_csv(r: &ExperimentResult) -> String {
    let m = r.metric.to_string();
    let mut s = format!("rate,method,acc_mean,acc_std,{m}_mean,{m}_std,runs,failed\n");
    for ra in &r.by_rate {
        for a in &ra.aggregates {
            let f = fairness_column(r.metric, a);
            let _ = writeln!(
                s,
                "{},{},{:?},{:?},{:?},{:?},{},{}",
                ra.rate,
                a.method.name(),
                a.accuracy.mean,
                a.accuracy.std,
                f.mean,
                f.std,
                a.accuracy.n,
                a.failed.len()
            );
        }
    }
    s
}

/// Aligned text table, one block per noise rate.
pub fn table_text(r: &ExperimentResult) -> String {
    let disp = match r.metric {
        Metric::Eo => "EO Disp.",
        Metric::Dp => "DP Disp.",
    };
    let mut s = String::new();
    for ra in &r.by_rate {
        let _ = writeln!(s, "{} (noise rate {})", r.name, ra.rate);
        let width = ra.aggregates.iter().map(|a| a.method.label().len()).max().unwrap_or(6).max(6);
        let _ = writeln!(s, "{:<width$}  {:>11}  {:>11}", "Method", "Acc.", disp);
        for a in &ra.aggregates {
            let _ = write!(
                s,
                "{:<width$}  {:>11}  {:>11}",
                a.method.label(),
                a.accuracy.to_string(),
                fairness_column(r.metric, a).to_string()
            );
            if !a.failed.is_empty() {
                let _ = write!(s, "  ({} failed)", a.failed.len());
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

/// One row per (rate, method) with all three metrics, for rate plots.
pub fn sweep_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("rate,method,acc_mean,acc_std,eo_mean,eo_std,dp_mean,dp_std\n");
    for ra in &r.by_rate {
        for a in &ra.aggregates {
            let _ = writeln!(
                s,
                "{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
                ra.rate,
                a.method.name(),
                a.accuracy.mean,
                a.accuracy.std,
                a.eo_disparity.mean,
                a.eo_disparity.std,
                a.dp_disparity.mean,
                a.dp_disparity.std
            );
        }
    }
    s
}

/// Reads a sweep value the way TOML would, falling back to a bare string.
pub fn parse_axis_value(s: &str) -> toml::Value {
    let s = s.trim();
    format!("v = {s}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

/// Runs `spec` once per value of one axis. `axis` is `noise_rate` or a
/// `train` key such as `alpha`. Each run writes to `out/<axis>=<value>/` and
/// a combined `sweep_<axis>.csv` lands in `out`.
pub fn run_sweep(
    spec: &ExperimentSpec,
    axis: &str,
    values: &[toml::Value],
    out: Option<&Path>,
    jobs: Option<usize>,
) -> Result<Vec<(String, ExperimentResult)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut results = Vec::new();
    for v in values {
        let mut s = spec.clone();
        if axis == "noise_rate" {
            let rate = v
                .as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .ok_or_else(|| Error::Config(format!("noise_rate value `{v}` is not a number")))?;
            s.noise.rates = vec![rate];
        } else {
            s.set_train_key(axis, v.clone())?;
        }
        let tag = format!("{axis}={v}");
        let sub = out.map(|o| o.join(&tag));
        results.push((tag, run_experiment(&s, sub.as_deref(), jobs)?));
    }
    if let Some(out) = out {
        let mut s = format!("{axis},rate,method,acc_mean,acc_std,eo_mean,eo_std,dp_mean,dp_std\n");
        for (tag, r) in &results {
            let value = tag.split_once('=').map(|p| p.1).unwrap_or_default();
            for line in sweep_csv(r).lines().skip(1) {
                let _ = writeln!(s, "{value},{line}");
            }
        }
        let p = out.join(format!("sweep_{axis}.csv"));
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        fs::write(&p, s).map_err(|e| Error::io(p, e))?;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentSpec {
        ExperimentSpec::from_toml(
            r#"
name = "tiny"
methods = ["LR", "Ours"]
seeds = [1, 2]

[data.synth]
n_total = 400
seed = 3

[noise]
rates = [0.1, 0.2]
mode = "random"

[train]
epochs = 6
warm_start_epochs = 2
batch_size = 20

[overrides.Ours]
alpha = 0.001
"#,
        )
        .unwrap()
    }

    #[test]
    fn shipped_configs_parse() {
        for (name, _) in SHIPPED_CONFIGS {
            ExperimentSpec::load(name).unwrap();
        }
    }

    #[test]
    fn empty_method_list_is_rejected() {
        let mut s = tiny();
        s.methods.clear();
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        assert!(ExperimentSpec::from_toml(&s.to_toml()).is_err());
    }

    #[test]
    fn overrides_apply_per_method() {
        let s = tiny();
        assert_eq!(s.train_config(Method::Ours, 9).unwrap().alpha, 0.001);
        assert_eq!(s.train_config(Method::Lr, 9).unwrap().alpha, TrainConfig::default().alpha);
        let mut bad = s.clone();
        bad.overrides.insert("Ours".into(), toml::toml! { nonsense = 1 });
        assert!(bad.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = tiny();
        assert_eq!(ExperimentSpec::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn writes_tables_and_reproduces_from_record() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let r = run_experiment(&tiny(), Some(&a), Some(2)).unwrap();
        assert!(r.all_ok());
        assert_eq!(r.cells.len(), 8);
        let sweep = fs::read_to_string(a.join("sweep.csv")).unwrap();
        assert_eq!(sweep.lines().count(), 1 + 2 * 2);
        let text = fs::read_to_string(a.join("table.txt")).unwrap();
        assert!(text.contains("EO Disp.") && text.contains("Ours"));

        let b = dir.path().join("b");
        let again = ExperimentSpec::load(a.join("resolved.toml").to_str().unwrap()).unwrap();
        run_experiment(&again, Some(&b), Some(1)).unwrap();
        for rate in [0.1, 0.2] {
            for m in [Method::Lr, Method::Ours] {
                for seed in [1, 2] {
                    let x = fs::read(run_file(&a, rate, m, seed)).unwrap();
                    let y = fs::read(run_file(&b, rate, m, seed)).unwrap();
                    assert_eq!(x, y);
                }
            }
        }
    }

    #[test]
    fn sweep_over_train_key() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = tiny();
        s.noise.rates = vec![0.1];
        s.seeds = vec![1];
        let vals = [toml::Value::Float(0.0001), toml::Value::Float(0.001)];
        let res = run_sweep(&s, "alpha", &vals, Some(dir.path()), None).unwrap();
        assert_eq!(res.len(), 2);
        let csv = fs::read_to_string(dir.path().join("sweep_alpha.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
        assert!(run_sweep(&s, "bogus", &vals, None, None).is_err());
    }
}
