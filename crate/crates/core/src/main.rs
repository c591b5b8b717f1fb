use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use slate_ope::estimators::estimate_cdf_with;
use slate_ope::harness::{
    emit_outputs, generate_log, run_experiment, Experiment, ExperimentConfig, PRESETS,
};
use slate_ope::metrics::{cdf_report, ks_statistic_resampled, monotone_repair};
use slate_ope::sim::{ingest_movielens_csv, IngestOptions};
use slate_ope::{CdfEstimate, Execution, LogDataset, WeightKind};

#[derive(Parser)]
#[command(name = "slate-ope", version, about = "Off-policy reward-distribution estimation for slates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Preset name or path to a JSON config.
    config: String,
    /// Override a config field, e.g. `--set trials=10 --set environment.seed=3`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let base = ExperimentConfig::load(&self.config).with_context(|| format!("loading '{}'", self.config))?;
        Ok(base.with_overrides(&self.overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv, results.json and plot data.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (default: config `output_dir`, else `results/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run cells one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Write a logged dataset drawn under the config's logging policy.
    GenerateLog {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the target CDF from a log; writes `<out>` and `<out>.json`.
    Estimate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        log: PathBuf,
        /// uno, suno, gm:<m> or ie:<m>
        #[arg(long, default_value = "suno")]
        estimator: WeightKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repair a CDF estimate and print its metrics as CSV.
    Metrics {
        /// CDF written by `estimate` (its `.json` sidecar must sit next to it).
        cdf: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        alpha: f64,
        /// Config whose ground truth is used for the KS statistic.
        #[arg(long)]
        truth: Option<String>,
    },
    /// Binarize a MovieLens ratings CSV and report counts.
    IngestMovielens {
        path: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        threshold: f64,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
        /// Write the binarized matrix as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List presets, or print one as JSON.
    Preset { name: Option<String> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn sidecar_path(cdf: &Path) -> PathBuf {
    let mut s = cdf.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, sequential } => {
            let config = config.load()?;
            let exec = if sequential { Execution::Sequential } else { Execution::default() };
            let table = run_experiment(&config, exec)?;
            let dir = out
                .or_else(|| config.output_dir.clone())
                .unwrap_or_else(|| Path::new("results").join(&config.name));
            let files = emit_outputs(&table, &config, &dir)?;
            eprintln!(
                "wrote {} rows to {} ({} plot files)",
                table.rows.len(),
                files.csv.display(),
                files.plots.len()
            );
            for e in &table.errors {
                eprintln!("cell error: trial {} n {}: {}", e.trial, e.n, e.message);
            }
            Ok(if table.has_errors() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::GenerateLog { config, n, seed, out } => {
            let config = config.load()?;
            let env = slate_ope::harness::build_environment(&config.environment)?;
            let logging = slate_ope::harness::build_policy(&config.logging, env.as_ref())?;
            let log = generate_log(env.as_ref(), logging.as_ref(), n, seed)?;
            let mut w = BufWriter::new(fs::File::create(&out)?);
            log.write_csv(&mut w)?;
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate {
            config,
            log,
            estimator,
            out,
        } => {
            let config = config.load()?;
            let env = slate_ope::harness::build_environment(&config.environment)?;
            let logging = slate_ope::harness::build_policy(&config.logging, env.as_ref())?;
            let target = slate_ope::harness::build_policy(&config.target, env.as_ref())?;
            let data = LogDataset::read_csv(BufReader::new(fs::File::open(&log)?))
                .with_context(|| format!("reading {}", log.display()))?;
            if data.config() != env.config() {
                bail!("log is for {:?}, config describes {:?}", data.config(), env.config());
            }
            let grid = slate_ope::RewardGrid::uniform(data.reward_range(), config.grid_size)?;
            let cdf = estimate_cdf_with(
                estimator,
                target.as_ref(),
                &data,
                logging.as_ref(),
                &grid,
                Execution::default(),
            )?;
            let mut w = BufWriter::new(fs::File::create(&out)?);
            cdf.write_csv(&mut w)?;
            w.flush()?;
            fs::write(sidecar_path(&out), cdf.sidecar_json()?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics { cdf, alpha, truth } => {
            let raw = CdfEstimate::read(&fs::read_to_string(&cdf)?, &fs::read_to_string(sidecar_path(&cdf))?)?;
            let repaired = monotone_repair(&raw);
            let truth = match truth {
                Some(t) => Some(Experiment::prepare(&ExperimentConfig::load(&t)?)?.truth),
                None => None,
            };
            let mut records = cdf_report(&raw.weight_kind.to_string(), raw.n_used, &repaired, None, alpha)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "metric,value")?;
            if let Some(t) = &truth {
                writeln!(out, "ks,{}", ks_statistic_resampled(&repaired, t))?;
            }
            for r in records.drain(..) {
                writeln!(out, "{},{}", r.metric, r.value)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::IngestMovielens {
            path,
            threshold,
            delimiter,
            out,
        } => {
            let delimiter = u8::try_from(delimiter).context("delimiter must be a single byte")?;
            let (matrix, report) = ingest_movielens_csv(
                &path,
                IngestOptions {
                    rating_threshold: threshold,
                    delimiter,
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(out) = out {
                fs::write(out, serde_json::to_string(&matrix)?)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name } => {
            match name {
                Some(n) => println!("{}", ExperimentConfig::preset(&n)?.to_json()?),
                None => {
                    for (n, _) in PRESETS {
                        println!("{n}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
