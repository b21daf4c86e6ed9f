use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fairsel::corruption::{NoiseMode, TargetGroup};
use fairsel::fairness::Metric;
use fairsel::harness::{parse_axis_value, run_experiment, run_sweep, ExperimentSpec, ExperimentResult};
use fairsel::synth::{generate, SynthSpec};
use fairsel::trainer::Method;

#[derive(Parser)]
#[command(name = "fairsel", version, about = "Fair and robust training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Synth {
        #[arg(long, default_value_t = 3200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 7.0)]
        bias_factor: f64,
        #[arg(long, default_value_t = 0.5)]
        class_balance: f64,
        /// Output file; `-` for stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Run one experiment config.
    Run(RunArgs),
    /// Run an experiment once per value of one config axis.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `noise_rate` or a training key such as `alpha` or `learning_rate`.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Run the built-in oracle suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Config file, or the name of a shipped config (e.g. `table1_eo`).
    #[arg(long)]
    config: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    noise_rate: Option<Vec<f64>>,
    #[arg(long)]
    noise_mode: Option<String>,
    /// `auto`, `y0z0`, `y0z1`, `y1z0` or `y1z1`.
    #[arg(long)]
    target_group: Option<String>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::load(&self.config)?;
        if let Some(s) = &self.seeds {
            spec.seeds = s.clone();
        }
        if let Some(r) = &self.noise_rate {
            spec.noise.rates = r.clone();
        }
        if let Some(m) = &self.noise_mode {
            spec.noise.mode = m.parse::<NoiseMode>()?;
        }
        if let Some(t) = &self.target_group {
            spec.noise.target_group = t.parse::<TargetGroup>()?;
        }
        if let Some(m) = &self.metric {
            spec.train.metric = m.parse::<Metric>()?;
        }
        if let Some(ms) = &self.method {
            spec.methods = ms.iter().map(|m| m.parse::<Method>()).collect::<Result<_, _>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn report(result: &ExperimentResult) -> bool {
    print!("{}", fairsel::harness::table_text(result));
    let failed: Vec<_> = result.cells.iter().filter(|c| c.error.is_some()).collect();
    for c in &failed {
        eprintln!(
            "run failed: {} rate {} seed {}: {}",
            c.method,
            c.rate,
            c.seed,
            c.error.as_deref().unwrap_or_default()
        );
    }
    failed.is_empty()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth {
            n,
            seed,
            bias_factor,
            class_balance,
            out,
        } => {
            let spec = SynthSpec {
                n_total: n,
                seed,
                bias_factor,
                class_balance,
                ..SynthSpec::default()
            };
            let d = generate(&spec)?;
            if out == "-" {
                d.write_csv_to(std::io::stdout().lock())?;
            } else {
                d.write_csv(out.as_ref()).with_context(|| format!("writing {out}"))?;
            }
            Ok(true)
        }
        Command::Run(args) => {
            let spec = args.spec()?;
            let result = run_experiment(&spec, args.out.as_deref(), args.jobs)
                .with_context(|| format!("experiment `{}`", spec.name))?;
            Ok(report(&result))
        }
        Command::Sweep { run, axis, values } => {
            let spec = run.spec()?;
            let values: Vec<_> = values.iter().map(|v| parse_axis_value(v)).collect();
            let results = run_sweep(&spec, &axis, &values, run.out.as_deref(), run.jobs)?;
            let mut ok = true;
            for (tag, r) in &results {
                println!("== {tag}");
                ok &= report(r);
            }
            Ok(ok)
        }
        Command::Selftest { seed } => {
            let suites = fairsel::selftest::run_all(seed)?;
            for s in &suites {
                println!("{s}");
            }
            let ok = suites.iter().all(|s| s.passed);
            if !ok {
                bail!("selftest failed");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
