//! `tkge`: prepare datasets, train and evaluate temporal KG embeddings, and
//! forecast skill demand from a checkpoint.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tkge_core::checkpoint::Checkpoint;
use tkge_core::dataset::{save_tsv, split, split_chronological, stats, DataSource, DatasetManifest, SplitRatios};
use tkge_core::dataset::load_tsv;
use tkge_core::evaluation::{evaluate, EvalOptions, TiePolicy};
use tkge_core::forecasting::{
    candidate_facts, forecast, heatmap_from_series, write_heatmap_csv, write_series_csv, TimeGrid, TimeStep,
};
use tkge_core::kg::{EntityId, FilterScope, RelationId, Split, TemporalKg, Timestamp, Vocabulary};
use tkge_core::models::{ModelKind, RotationNorm};
use tkge_core::training::grid::write_grid_csv;
use tkge_core::training::{grid_search, train, GridSpec, LossReduction, TrainConfig};

const OUTPUT_ENV: &str = "TKGE_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "tkge", version, about = "Temporal knowledge graph embeddings and skill-demand forecasting")]
struct Cli {
    /// Worker threads for evaluation and grid search (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split one quadruple file into train/valid/test TSV files.
    Prepare(PrepareArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
    /// Train one model and write a checkpoint.
    Train(TrainArgs),
    /// Grid search over hyperparameters, ranked by validation MRR.
    Grid(GridArgs),
    /// Evaluate a checkpoint with filtered ranking metrics.
    Eval(EvalArgs),
    /// Forecast job-skill plausibility over a date grid.
    Infer(InferArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Directory with train.tsv/valid.tsv/test.tsv, or a single quadruple file
    /// split at load time.
    #[arg(long)]
    data: PathBuf,
    /// Splits whose facts are filtered out when ranking.
    #[arg(long, value_enum, default_value_t = FilterArg::TrainValid)]
    filter_splits: FilterArg,
    /// Train/valid/test ratios for a single-file dataset.
    #[arg(long, value_parser = parse_ratios, default_value = "0.9,0.05,0.05")]
    ratios: SplitRatios,
    /// Seed of the single-file split.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Split a single-file dataset chronologically: facts before this date train.
    #[arg(long, value_parser = parse_date)]
    split_by_time: Option<Timestamp>,
    /// strftime pattern of the date column.
    #[arg(long, default_value = "%Y-%m-%d")]
    date_format: String,
}

impl DataArgs {
    fn manifest(&self) -> DatasetManifest {
        let mut manifest = if self.data.is_dir() {
            DatasetManifest::directory(&self.data)
        } else {
            DatasetManifest::with_source(DataSource::Single {
                path: self.data.clone(),
                ratios: self.ratios,
                seed: self.split_seed,
                split_by_time: self.split_by_time,
            })
        };
        manifest.date_format = self.date_format.clone();
        manifest
    }

    fn load(&self) -> Result<TemporalKg> {
        let scope = match self.filter_splits {
            FilterArg::TrainValid => FilterScope::TrainValid,
            FilterArg::All => FilterScope::AllSplits,
        };
        self.manifest().load(scope).with_context(|| format!("loading dataset {}", self.data.display()))
    }
}

#[derive(Args)]
struct PrepareArgs {
    /// Quadruple file (head, relation, tail, date).
    #[arg(long)]
    input: PathBuf,
    /// Directory receiving train.tsv, valid.tsv and test.tsv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_ratios, default_value = "0.9,0.05,0.05")]
    ratios: SplitRatios,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_date)]
    split_by_time: Option<Timestamp>,
    #[arg(long, default_value = "%Y-%m-%d")]
    date_format: String,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

/// Every field of the training configuration; unset flags fall back to the
/// config file, then to the defaults.
#[derive(Args)]
struct TrainFlags {
    /// JSON file with any subset of the training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, visible_alias = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    n_neg: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, visible_alias = "epochs")]
    n_epochs: Option<usize>,
    /// Temporal share of DE embeddings.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long, value_enum)]
    loss_reduction: Option<ReductionArg>,
    /// Distance used by TeRo.
    #[arg(long, value_enum)]
    tero_norm: Option<NormArg>,
}

impl TrainFlags {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => TrainConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { c.$field = v; } )* };
        }
        apply!(learning_rate, dim, margin, n_neg, batch_size, n_epochs, gamma, seed, patience, eval_every);
        if let Some(r) = self.loss_reduction {
            c.loss_reduction = match r {
                ReductionArg::Sum => LossReduction::Sum,
                ReductionArg::Mean => LossReduction::Mean,
            };
        }
        if let Some(n) = self.tero_norm {
            c.norm = match n {
                NormArg::L1 => RotationNorm::L1,
                NormArg::L2 => RotationNorm::L2,
            };
        }
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: TrainFlags,
    /// Checkpoint directory [default: $TKGE_OUTPUT_DIR/<model> or runs/<model>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,
    #[command(flatten)]
    data: DataArgs,
    /// Base configuration shared by every grid point.
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, value_delimiter = ',')]
    learning_rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n_negs: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    margins: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Ranked results CSV [default: $TKGE_OUTPUT_DIR/grid-<model>.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    #[arg(long, value_enum, default_value_t = TieArg::Pessimistic)]
    ties: TieArg,
    /// JSON report [default: <checkpoint>/eval-<split>.json].
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset the checkpoint was trained on; needed for --exclude-seen.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    job: String,
    #[arg(long)]
    relation: String,
    /// One skill name per line.
    #[arg(long)]
    skills_file: Option<PathBuf>,
    #[arg(long = "skill")]
    skills: Vec<String>,
    #[arg(long, value_parser = parse_date, required_unless_present = "dates")]
    from: Option<Timestamp>,
    #[arg(long, value_parser = parse_date, required_unless_present = "dates")]
    to: Option<Timestamp>,
    #[arg(long, value_enum, default_value_t = StepArg::Quarterly)]
    step: StepArg,
    /// Explicit comma-separated dates instead of --from/--to/--step.
    #[arg(long, value_parser = parse_date, value_delimiter = ',', conflicts_with_all = ["from", "to"])]
    dates: Option<Vec<Timestamp>>,
    /// Write the top-k heatmap instead of the series.
    #[arg(long)]
    heatmap: bool,
    #[arg(long)]
    top_k: Option<usize>,
    /// Drop skills already linked to the job in the training split.
    #[arg(long, requires = "data")]
    exclude_seen: bool,
    /// Output CSV [default: $TKGE_OUTPUT_DIR/forecast.csv or heatmap.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    TrainValid,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReductionArg {
    Sum,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Valid,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    Pessimistic,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepArg {
    Monthly,
    Quarterly,
    Yearly,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|_| format!("unknown model {s:?}; valid models: {}", ModelKind::names().join(", ")))
}

fn parse_date(s: &str) -> Result<Timestamp, String> {
    Timestamp::parse(s).map_err(|e| e.to_string())
}

fn parse_ratios(s: &str) -> Result<SplitRatios, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [train, valid, test] => SplitRatios::new(train, valid, test).map_err(|e| e.to_string()),
        _ => Err(format!("expected three comma-separated ratios, got {}", parts.len())),
    }
}

fn output_base() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn cmd_prepare(args: &PrepareArgs) -> Result<()> {
    let mut manifest = DatasetManifest::single(&args.input, args.ratios, args.seed);
    manifest.date_format = args.date_format.clone();
    let quads = load_tsv(&args.input, &manifest)?;
    let outcome = match args.split_by_time {
        Some(cut) => split_chronological(&quads, cut, args.ratios)?,
        None => split(&quads, args.ratios, args.seed)?,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for (name, part) in [("train", &outcome.train), ("valid", &outcome.valid), ("test", &outcome.test)] {
        save_tsv(args.out.join(format!("{name}.tsv")), part)?;
    }
    println!(
        "wrote {} train, {} valid, {} test quadruples to {} ({} moved to train for vocabulary closure)",
        outcome.train.len(),
        outcome.valid.len(),
        outcome.test.len(),
        args.out.display(),
        outcome.moved_to_train
    );
    Ok(())
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let s = stats(&args.data.load()?);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(());
    }
    let date = |d: Option<Timestamp>| d.map(|d| d.to_string()).unwrap_or_else(|| "-".into());
    println!("entities    {}", s.entities);
    println!("relations   {}", s.relations);
    println!("quadruples  {} (train {}, valid {}, test {})", s.quadruples, s.train, s.valid, s.test);
    println!("timestamps  {}", s.timestamps);
    println!("dates       {} to {} ({} days)", date(s.first_date), date(s.last_date), s.span_days);
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let kg = args.data.load()?;
    let config = args.flags.resolve()?;
    let out = args.out.clone().unwrap_or_else(|| output_base().join(args.model.name()));
    let outcome = train(&kg, args.model, &config)?;

    let checkpoint = Checkpoint::new(outcome.params, &kg, outcome.best_epoch, config.seed);
    checkpoint.save(&out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&config)?)?;
    let mut log = create_file(&out.join("train_log.jsonl"))?;
    outcome.log.write_jsonl(&mut log)?;
    log.flush()?;

    println!("{} trained for {} epoch(s); best epoch {}", args.model, outcome.log.epochs.len(), outcome.best_epoch);
    if let Some(valid) = &outcome.best_valid {
        print!("validation\n{}", valid.to_table(args.model.name()));
    }
    if !kg.test().is_empty() {
        let test = evaluate(kg.test(), &checkpoint.params, &kg, &EvalOptions::default())?;
        print!("test\n{}", test.to_table(args.model.name()));
    }
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn cmd_grid(args: &GridArgs) -> Result<()> {
    let kg = args.data.load()?;
    let defaults = GridSpec::default();
    let mut base = args.flags.resolve()?;
    if args.flags.config.is_none() && args.flags.batch_size.is_none() {
        base.batch_size = defaults.base.batch_size;
    }
    let spec = GridSpec {
        learning_rates: args.learning_rates.clone().unwrap_or(defaults.learning_rates),
        n_negs: args.n_negs.clone().unwrap_or(defaults.n_negs),
        margins: args.margins.clone().unwrap_or(defaults.margins),
        dims: args.dims.clone().unwrap_or(defaults.dims),
        gammas: args.gammas.clone().unwrap_or(defaults.gammas),
        base,
    };
    let n_points = spec.points(args.model).len();
    eprintln!("training {n_points} configuration(s) of {}", args.model);
    let entries = grid_search(&kg, args.model, &spec)?;

    let out = args.out.clone().unwrap_or_else(|| output_base().join(format!("grid-{}.csv", args.model)));
    let mut w = create_file(&out)?;
    write_grid_csv(&mut w, &entries)?;
    w.flush()?;
    if let Some(best) = entries.first() {
        let c = &best.config;
        match best.valid_mrr {
            Some(mrr) => println!(
                "best: lr {} n_neg {} margin {} dim {} gamma {} (valid MRR {:.4})",
                c.learning_rate, c.n_neg, c.margin, c.dim, c.gamma, mrr
            ),
            None => println!("no configuration finished: {}", best.error.as_deref().unwrap_or("unknown error")),
        }
    }
    println!("ranked results written to {}", out.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let kg = args.data.load()?;
    checkpoint.check_compatible(&kg)?;
    let (split, split_name) = match args.split {
        SplitArg::Valid => (Split::Valid, "valid"),
        SplitArg::Test => (Split::Test, "test"),
    };
    let options = EvalOptions {
        tie_policy: match args.ties {
            TieArg::Pessimistic => TiePolicy::Pessimistic,
            TieArg::Mean => TiePolicy::MeanOverTies,
        },
        ..EvalOptions::default()
    };
    let report = evaluate(kg.split(split), &checkpoint.params, &kg, &options)?;
    let label = checkpoint.params.kind.name();
    print!("{split_name}\n{}", report.to_table(label));

    let path = args.report.clone().unwrap_or_else(|| args.checkpoint.join(format!("eval-{split_name}.json")));
    let doc = json!({
        "model": label,
        "checkpoint": args.checkpoint,
        "split": split_name,
        "filter": kg.filter_scope(),
        "ties": options.tie_policy,
        "report": report,
    });
    let mut w = create_file(&path)?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    println!("report written to {}", path.display());
    Ok(())
}

/// Exact vocabulary lookup; on a miss the error lists names within edit
/// distance 2.
fn resolve(vocab: &Vocabulary, what: &str, name: &str) -> Result<usize> {
    if let Some(id) = vocab.id_of(name) {
        return Ok(id);
    }
    let mut near: Vec<(usize, &str)> = vocab
        .names()
        .iter()
        .map(|n| (strsim::levenshtein(name, n), n.as_str()))
        .filter(|(d, _)| *d <= 2)
        .collect();
    near.sort();
    if near.is_empty() {
        bail!("unknown {what} {name:?}; no vocabulary entry within edit distance 2");
    }
    let list: Vec<String> = near.iter().map(|(_, n)| format!("{n:?}")).collect();
    bail!("unknown {what} {name:?}; did you mean {}?", list.join(", "))
}

fn read_skills(args: &InferArgs) -> Result<Vec<String>> {
    let mut names = Vec::new();
    if let Some(path) = &args.skills_file {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        names.extend(
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from),
        );
    }
    names.extend(args.skills.iter().cloned());
    if names.is_empty() {
        bail!("no skills given; use --skills-file or --skill");
    }
    Ok(names)
}

fn cmd_infer(args: &InferArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let job = EntityId(resolve(&checkpoint.entities, "entity", &args.job)?);
    let relation = RelationId(resolve(&checkpoint.relations, "relation", &args.relation)?);
    let mut skills = Vec::new();
    for name in read_skills(args)? {
        skills.push(EntityId(resolve(&checkpoint.entities, "entity", &name)?));
    }
    if args.exclude_seen {
        let data = args.data.as_ref().expect("clap enforces --data");
        let kg = DatasetManifest::directory(data).load(FilterScope::TrainValid)?;
        checkpoint.check_compatible(&kg)?;
        skills = candidate_facts(job, relation, &skills, &kg, true)?.into_iter().map(|(_, _, s)| s).collect();
        if skills.is_empty() {
            bail!("every skill is already linked to {:?} in the training data", args.job);
        }
    }

    let grid = match (&args.dates, args.from, args.to) {
        (Some(dates), _, _) => TimeGrid::explicit(dates.clone())?,
        (None, Some(from), Some(to)) => {
            let step = match args.step {
                StepArg::Monthly => TimeStep::Monthly,
                StepArg::Quarterly => TimeStep::Quarterly,
                StepArg::Yearly => TimeStep::Yearly,
            };
            TimeGrid::new(from, to, step)?
        }
        _ => unreachable!("clap requires --from and --to without --dates"),
    };
    let points = grid.points();
    let fc = forecast(job, relation, &skills, &points, &checkpoint.params)?;
    let name = |e: EntityId| checkpoint.entities.name_of(e.0).unwrap_or("?").to_string();

    let default_name = if args.heatmap { "heatmap.csv" } else { "forecast.csv" };
    let out = args.out.clone().unwrap_or_else(|| output_base().join(default_name));
    let mut w = create_file(&out)?;
    if args.heatmap {
        let top_k = args.top_k.unwrap_or(skills.len());
        if top_k > skills.len() {
            log::warn!("--top-k {top_k} exceeds the {} skills; keeping all of them", skills.len());
        }
        let hm = heatmap_from_series(&fc.skills, top_k, &points)?;
        write_heatmap_csv(&mut w, &hm, name)?;
        println!("heatmap of {} skill(s) × {} date(s) written to {}", hm.skills.len(), points.len(), out.display());
    } else {
        write_series_csv(&mut w, &fc, name)?;
        println!("{} series × {} date(s) written to {}", skills.len() + 1, points.len(), out.display());
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Train(a) => cmd_train(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Infer(a) => cmd_infer(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
