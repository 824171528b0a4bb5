//! `nlcps`: generate synthetic datasets, train the placement agent, and
//! evaluate or apply it to node inventories.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::builder::TypedValueParser as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nlcps_core::agent::Strategy;
use nlcps_core::eval::{evaluate_profile, nlcps_decision, render_table};
use nlcps_core::io::{self, Checkpoint, CheckpointMetadata, ExperimentConfig, SummaryFile};
use nlcps_core::synth::{generate_dataset, DEFAULT_CLUSTER_SIZES, DEFAULT_PER_SIZE};
use nlcps_core::training::{self, windowed_stats, TrainingMode};
use nlcps_core::{CounterStrategy, Error};

const OUTPUT_DIR_ENV: &str = "NLCPS_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "nlcps", version, about = "Learned Kubernetes control-plane placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic training dataset.
    GenDataset(GenDatasetArgs),
    /// Train the agent on a dataset; writes checkpoints, traces and summaries.
    Train(TrainArgs),
    /// Compare NL-CPS against the baselines on an inventory.
    Eval(EvalArgs),
    /// Print the recommended control-plane node for an inventory as JSON.
    Recommend(RecommendArgs),
    /// Turn training traces into convergence series for plotting.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDatasetArgs {
    /// Cluster sizes to generate.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CLUSTER_SIZES.to_vec(),
          value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    sizes: Vec<usize>,
    /// Configurations per cluster size.
    #[arg(long, default_value_t = DEFAULT_PER_SIZE,
          value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    per_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (default: <output dir>/dataset.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Independent,
    Continual,
}

#[derive(Clone, Copy, ValueEnum)]
enum CounterArg {
    FeatureBucket,
    ActionIndex,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset written by `gen-dataset`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Experiment config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Steps per cluster size [default: 10000].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    timesteps: Option<usize>,
    /// Cluster sizes to train on [default: every size in the dataset].
    #[arg(long, value_delimiter = ',',
          value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    sizes: Option<Vec<usize>>,
    /// Seed for initialization, context sampling and reward noise [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Fresh agent per size, or one agent carried across sizes [default: independent].
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Key for the exploration counts [default: feature-bucket].
    #[arg(long, value_enum)]
    counter: Option<CounterArg>,
    /// Where checkpoints, traces and summaries go (else $NLCPS_OUTPUT_DIR, the config, or `.`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Inventory JSON.
    #[arg(long)]
    profile: PathBuf,
    /// Expected selection, e.g. `NL-CPS=node10`; overrides the inventory's.
    #[arg(long = "expect", value_parser = parse_expectation)]
    expectations: Vec<(Strategy, String)>,
    /// Config supplying the synthetic model used to score choices.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the RANDOM baseline.
    #[arg(long, default_value_t = 0)]
    random_seed: u64,
    /// Report file (default: <output dir>/report-<profile>.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Inventory JSON.
    #[arg(long)]
    inventory: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Trace CSV written by `train`.
    trace: PathBuf,
    /// Further traces to merge into the same long-format series.
    #[arg(long)]
    compare: Vec<PathBuf>,
    #[arg(long, default_value_t = training::DEFAULT_WINDOW,
          value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    window: usize,
    /// Output CSV (default: <output dir>/convergence.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_expectation(s: &str) -> std::result::Result<(Strategy, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected STRATEGY=NODE_ID, got {s:?}"))?;
    let strategy = k.parse::<Strategy>().map_err(|e| e.to_string())?;
    if v.is_empty() {
        return Err("node id must not be empty".into());
    }
    Ok((strategy, v.to_string()))
}

fn output_dir(flag: Option<&Path>, config: Option<&ExperimentConfig>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn gen_dataset(args: GenDatasetArgs) -> Result<()> {
    let out = args
        .out
        .unwrap_or_else(|| output_dir(None, None).join("dataset.json"));
    let dataset = generate_dataset(&args.sizes, args.per_size, args.seed)?;
    io::save_dataset(&out, &dataset)?;
    println!(
        "wrote {} configurations to {}",
        dataset.len(),
        out.display()
    );
    for (size, count) in &dataset.per_size_counts {
        println!("  {size:>3} nodes: {count}");
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => io::load_config(p)?,
        None => ExperimentConfig::default(),
    };
    let t = &mut config.training;
    if let Some(v) = args.timesteps {
        t.timesteps = v;
    }
    if let Some(v) = args.sizes.clone() {
        t.cluster_sizes = v;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    if let Some(m) = args.mode {
        t.mode = match m {
            ModeArg::Independent => TrainingMode::Independent,
            ModeArg::Continual => TrainingMode::Continual,
        };
    }
    if let Some(c) = args.counter {
        t.counter_strategy = match c {
            CounterArg::FeatureBucket => CounterStrategy::FeatureBucket,
            CounterArg::ActionIndex => CounterStrategy::ActionIndex,
        };
    }
    if let Some(d) = &args.dataset {
        t.dataset = Some(d.clone());
    }
    config.validate()?;

    let Some(dataset_path) = config.training.dataset.clone() else {
        return Err(Error::InvalidArgument("no dataset given (use --dataset or training.dataset)".into()).into());
    };
    let dataset = io::load_dataset(&dataset_path)?;
    if args.sizes.is_none() && args.config.is_none() {
        config.training.cluster_sizes = dataset.per_size_counts.keys().copied().collect();
    }
    let out_dir = output_dir(args.out_dir.as_deref(), Some(&config));
    let t = &config.training;

    let runs = training::train(t, &dataset, &config.synth, &config.reward)?;
    let mut trained_sizes = Vec::new();
    for run in &runs {
        let size = run.cluster_size;
        trained_sizes.push(size);
        let sizes_so_far = match t.mode {
            TrainingMode::Independent => vec![size],
            TrainingMode::Continual => trained_sizes.clone(),
        };
        let checkpoint_file = format!("checkpoint-n{size}.json");
        let trace_file = format!("trace-n{size}.csv");
        let checkpoint = Checkpoint::new(
            CheckpointMetadata {
                cluster_sizes: sizes_so_far,
                mode: t.mode,
                timesteps_per_size: t.timesteps,
                seed: t.seed,
                counter_strategy: t.counter_strategy,
                dataset_seed: dataset.seed,
                generator_version: dataset.generator_version.clone(),
            },
            run.agent.clone(),
        );
        let summary = run.trace.summary()?;
        io::save_checkpoint(&out_dir.join(&checkpoint_file), &checkpoint)?;
        io::save_trace(&out_dir.join(&trace_file), &run.trace)?;
        io::write_json(
            &out_dir.join(format!("summary-n{size}.json")),
            &SummaryFile {
                format_version: io::SUMMARY_VERSION.to_string(),
                seed: t.seed,
                mode: t.mode,
                counter_strategy: t.counter_strategy,
                alpha: t.alpha,
                learning_rate: t.learning_rate,
                trace_file,
                checkpoint_file,
                summary: summary.clone(),
            },
        )?;
        let final_ma = summary
            .final_moving_average
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
        println!(
            "n={size:<3} steps={} final moving average={final_ma} mean regret (last {})={:.3} oracle agreement={:.3}",
            summary.timesteps, summary.summary_window, summary.last_window_mean_regret, summary.last_window_oracle_agreement
        );
    }
    println!("artifacts written to {}", out_dir.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let config = match &args.config {
        Some(p) => io::load_config(p)?,
        None => ExperimentConfig::default(),
    };
    let checkpoint = io::load_checkpoint(&args.checkpoint)?;
    let inventory = io::load_inventory(&args.profile)?;
    let mut expected = inventory.expected.clone();
    expected.extend(args.expectations);
    let name = inventory.name.clone().unwrap_or_else(|| stem(&args.profile));

    let report = evaluate_profile(
        &checkpoint.agent,
        &name,
        &inventory.context,
        &expected,
        &config.synth,
        &config.reward,
        args.random_seed,
    )?;
    let table = render_table(&report, &inventory.context);
    let out = args.out.unwrap_or_else(|| {
        output_dir(None, Some(&config)).join(format!("report-{}.json", stem(&args.profile)))
    });
    io::save_report(&out, &report)?;
    io::write_atomic(&out.with_extension("txt"), table.as_bytes())?;
    print!("{table}");
    println!("report written to {}", out.display());
    Ok(())
}

fn recommend(args: RecommendArgs) -> Result<()> {
    let checkpoint = io::load_checkpoint(&args.checkpoint)?;
    let inventory = io::load_inventory(&args.inventory)?;
    let context = &inventory.context;
    let (decision, warning) = nlcps_decision(&checkpoint.agent, context)?;
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    let scores: Vec<_> = decision
        .all_scores
        .iter()
        .map(|s| {
            json!({
                "node_id": context.node_ids()[s.node_index],
                "predicted_reward": s.exploitation,
            })
        })
        .collect();
    let out = json!({
        "chosen": decision.chosen_node_id,
        "chosen_index": decision.chosen_index,
        "strategy": decision.strategy.name(),
        "scores": scores,
        "warning": warning,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let mut paths = vec![args.trace.clone()];
    paths.extend(args.compare.iter().cloned());
    let mut out = String::from("run_id,step,moving_avg,variance,band_lower,band_upper\n");
    let mut seen = BTreeMap::new();
    for path in &paths {
        let trace = io::load_trace(path, 0, args.window)?;
        if trace.is_empty() {
            return Err(Error::Parse {
                path: path.clone(),
                message: "trace has no rows".into(),
            }.into());
        }
        let mut run_id = stem(path);
        let n = seen.entry(run_id.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            run_id = format!("{run_id}-{n}");
        }
        let stats = windowed_stats(&trace.rewards(), args.window);
        for (r, (m, v)) in trace.records.iter().zip(stats) {
            let (lo, hi) = match (m, v) {
                (Some(m), Some(v)) => (Some(m - v.sqrt()), Some(m + v.sqrt())),
                _ => (None, None),
            };
            let f = |x: Option<f64>| x.map_or_else(|| "NaN".to_string(), |x| x.to_string());
            out.push_str(&format!("{run_id},{},{},{},{},{}\n", r.step, f(m), f(v), f(lo), f(hi)));
        }
    }
    let dest = args
        .out
        .unwrap_or_else(|| output_dir(None, None).join("convergence.csv"));
    io::write_atomic(&dest, out.as_bytes())?;
    println!("series for {} run(s) written to {}", paths.len(), dest.display());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Io { .. }) | None => 1,
        Some(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenDataset(a) => gen_dataset(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Recommend(a) => recommend(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Core errors already embed their cause in the message.
            if e.downcast_ref::<Error>().is_some() {
                eprintln!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
