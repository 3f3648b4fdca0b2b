//! `ozsl`: synthesize a benchmark, split it, train the feature generator,
//! evaluate with a rejector and render reports.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use ozsl::metrics::EvalReport;
use ozsl::nn::Checkpoint;
use ozsl::pipeline::{prepare_classifier, Rejector, SWEEP_TAILS};
use ozsl::protocol::{apply_manifest, generate_synthetic, make_split, BaseSplit, Dataset, Regime, SplitManifest};
use ozsl::report::{parse_reports_jsonl, pr_series, render_table, reports_jsonl};
use ozsl::sampling::{provenance_jsonl, unknown_matrix, UnknownEmbedding};
use ozsl::vacwgan::{history_jsonl, train, TrainedModels};

use crate::config::RunConfig;

const BASE_SPLIT_FILE: &str = "base_split.txt";
const CLASS_MEANS_FILE: &str = "class_means.bin";
const MANIFEST_FILE: &str = "manifest.txt";
const MODEL_FILE: &str = "models.ckpt";
const TRAIN_LOG_FILE: &str = "train_log.jsonl";
const UNKNOWNS_FILE: &str = "unknowns.jsonl";
const UNKNOWN_MATRIX_FILE: &str = "unknowns.bin";
const REPORTS_FILE: &str = "reports.jsonl";
const TABLE_FILE: &str = "table.txt";
const SERIES_FILE: &str = "pr_series.tsv";

#[derive(Parser)]
#[command(name = "ozsl", version, about = "Open zero-shot learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark with known class means.
    Synth(SynthArgs),
    /// Write a split manifest for a dataset.
    Split(SplitArgs),
    /// Train the feature generator on the seen classes of a split.
    Train(TrainArgs),
    /// Fit the final classifier, predict the test view and score it.
    Eval(EvalArgs),
    /// Render report files as a table and per-class precision/recall series.
    Report(ReportArgs),
}

#[derive(Args)]
struct Shared {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with `seed` and `[synthetic]`, `[train]`, `[eval]`, `[holdout]` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Per-coordinate standard deviation of each class blob.
    #[arg(long)]
    spread: Option<f64>,
}

#[derive(Args)]
struct SplitSource {
    /// Split manifest file.
    #[arg(long, conflicts_with = "regime")]
    manifest: Option<PathBuf>,
    /// Draw a split from the base split: 20-80, 50-50 or 80-20.
    #[arg(long)]
    regime: Option<Regime>,
    /// Base split file; defaults to `base_split.txt` in the data directory.
    #[arg(long, requires = "regime")]
    base: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    shared: Shared,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, required_unless_present = "canonical")]
    regime: Option<Regime>,
    #[arg(long, requires = "regime")]
    base: Option<PathBuf>,
    /// Use this manifest instead of drawing one; it is checked against the dataset.
    #[arg(long, conflicts_with = "regime")]
    canonical: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    split: SplitSource,
    #[arg(long)]
    iterations: Option<usize>,
    /// Also draw complementary unknown embeddings; later evaluations of this model use them.
    #[arg(long)]
    unknown_gen: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long)]
    data: PathBuf,
    /// Directory written by `train`. Its recorded config and manifest are the defaults here.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    split: SplitSource,
    #[arg(long)]
    rejector: Option<Rejector>,
    #[arg(long)]
    tail_size: Option<usize>,
    /// Add Openmax reports for every tail size from 2 to 10.
    #[arg(long)]
    sweep: bool,
    #[arg(long)]
    unknown_gen: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files (JSON lines) written by `eval`.
    reports: Vec<PathBuf>,
    /// Write the table and series here instead of printing the table.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ozsl::Error::Invalid(msg.into()).into()
}

/// An output directory whose files are checked for collisions up front.
struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    fn claim(dir: &Path, names: &[&str], force: bool) -> anyhow::Result<Self> {
        if !force {
            if let Some(name) = names.iter().find(|n| dir.join(n).exists()) {
                return Err(invalid(format!("{} already exists; pass --force to overwrite", dir.join(name).display())));
            }
        }
        fs::create_dir_all(dir).map_err(ozsl::Error::from).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs { dir: dir.to_path_buf() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> anyhow::Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(ozsl::Error::from).with_context(|| format!("writing {}", path.display()))
    }

    /// The effective configuration, as a file `--config` accepts.
    fn write_config(&self, command: &str, inputs: &[(&str, &Path)], config: &RunConfig) -> anyhow::Result<()> {
        let mut text = format!("# effective configuration of `ozsl {command}`\n");
        for (what, path) in inputs {
            text.push_str(&format!("# {what}: {}\n", path.display()));
        }
        text.push_str(&toml::to_string(config)?);
        self.write(&format!("{command}_config.toml"), &text)
    }
}

fn load_config(shared: &Shared, fallback: Option<&Path>) -> anyhow::Result<RunConfig> {
    let mut config = match (&shared.config, fallback) {
        (Some(path), _) => RunConfig::load(Some(path))?,
        (None, Some(path)) if path.exists() => RunConfig::load(Some(path))?,
        _ => RunConfig::default(),
    };
    if shared.seed.is_some() {
        config.seed = shared.seed;
    }
    Ok(config)
}

fn load_dataset(dir: &Path) -> anyhow::Result<Dataset> {
    Dataset::load_dir(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

fn draw_split(data: &Path, regime: Regime, base: Option<&Path>, seed: u64) -> anyhow::Result<SplitManifest> {
    let path = base.map_or_else(|| data.join(BASE_SPLIT_FILE), Path::to_path_buf);
    let base = BaseSplit::load(&path).with_context(|| format!("loading base split {}", path.display()))?;
    Ok(make_split(&base, regime, seed)?)
}

fn resolve_split(args: &SplitSource, data: &Path, recorded: Option<&Path>, seed: u64) -> anyhow::Result<SplitManifest> {
    if let Some(path) = &args.manifest {
        return SplitManifest::load(path).with_context(|| format!("loading manifest {}", path.display()));
    }
    if let Some(regime) = args.regime {
        return draw_split(data, regime, args.base.as_deref(), seed);
    }
    match recorded {
        Some(path) => SplitManifest::load(path).with_context(|| format!("loading manifest {}", path.display())),
        None => Err(invalid("pass --manifest or --regime")),
    }
}

/// Embeddings as a matrix, provenance as JSON lines in the same row order.
fn write_unknowns(out: &Outputs, unknowns: &[UnknownEmbedding]) -> anyhow::Result<()> {
    unknown_matrix(unknowns)?.save(out.path(UNKNOWN_MATRIX_FILE))?;
    out.write(UNKNOWNS_FILE, &provenance_jsonl(unknowns))
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let mut config = load_config(&args.shared, None)?;
    let spec = &mut config.synthetic;
    spec.classes = args.classes.unwrap_or(spec.classes);
    spec.per_class = args.per_class.unwrap_or(spec.per_class);
    spec.embedding_dim = args.embedding_dim.unwrap_or(spec.embedding_dim);
    spec.feature_dim = args.feature_dim.unwrap_or(spec.feature_dim);
    spec.spread = args.spread.unwrap_or(spec.spread);
    spec.seed = config.seed.unwrap_or(spec.seed);
    config.seed = Some(spec.seed);

    let names = [
        ozsl::protocol::FEATURES_FILE,
        ozsl::protocol::LABELS_FILE,
        ozsl::protocol::EMBEDDINGS_FILE,
        ozsl::protocol::NAMES_FILE,
        BASE_SPLIT_FILE,
        CLASS_MEANS_FILE,
        "synth_config.toml",
    ];
    let out = Outputs::claim(&args.shared.out, &names, args.shared.force)?;
    let data = generate_synthetic(&config.synthetic)?;
    data.dataset.save(&out.dir)?;
    data.class_means.save(out.path(CLASS_MEANS_FILE))?;
    out.write(BASE_SPLIT_FILE, &data.base.to_text())?;
    out.write_config("synth", &[], &config)?;
    println!(
        "{} instances of {} classes in {}",
        data.dataset.len(),
        data.dataset.class_names().len(),
        out.dir.display()
    );
    Ok(())
}

fn cmd_split(args: SplitArgs) -> anyhow::Result<()> {
    let mut config = load_config(&args.shared, None)?;
    let seed = config.seed.unwrap_or(0);
    config.seed = Some(seed);
    let out = Outputs::claim(&args.shared.out, &[MANIFEST_FILE, "split_config.toml"], args.shared.force)?;
    let dataset = load_dataset(&args.data)?;
    let manifest = match (&args.canonical, args.regime) {
        (Some(path), _) => SplitManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))?,
        (None, Some(regime)) => draw_split(&args.data, regime, args.base.as_deref(), seed)?,
        (None, None) => return Err(invalid("pass --regime or --canonical")),
    };
    manifest.validate()?;
    for name in manifest.seen.iter().chain(&manifest.unseen).chain(&manifest.unknown) {
        if dataset.class_index(name).is_none() {
            return Err(ozsl::Error::UnknownClass(name.clone()).into());
        }
    }
    manifest.save(out.path(MANIFEST_FILE))?;
    out.write_config("split", &[("data", &args.data)], &config)?;
    println!(
        "{}: {} seen, {} unseen, {} unknown",
        manifest.regime,
        manifest.seen.len(),
        manifest.unseen.len(),
        manifest.unknown.len()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let mut config = load_config(&args.shared, None)?;
    if let Some(seed) = config.seed {
        config.train.seed = seed;
        config.eval.seed = seed;
    }
    config.seed = Some(config.train.seed);
    config.train.iterations = args.iterations.unwrap_or(config.train.iterations);
    config.eval.unknown_gen |= args.unknown_gen;

    let mut names = vec![MODEL_FILE, TRAIN_LOG_FILE, MANIFEST_FILE, "train_config.toml"];
    if config.eval.unknown_gen {
        names.extend([UNKNOWNS_FILE, UNKNOWN_MATRIX_FILE]);
    }
    let out = Outputs::claim(&args.shared.out, &names, args.shared.force)?;
    let dataset = load_dataset(&args.data)?;
    let manifest = resolve_split(&args.split, &args.data, None, config.train.seed)?;
    let (train_view, _) = apply_manifest(&dataset, &manifest, config.holdout)?;

    info!("training on {} instances of {} seen classes", train_view.dataset.len(), train_view.seen.len());
    let (models, history) = train(&train_view.dataset, &config.train)?;
    models.to_checkpoint().save(out.path(MODEL_FILE))?;
    out.write(TRAIN_LOG_FILE, &history_jsonl(&history))?;
    manifest.save(out.path(MANIFEST_FILE))?;
    if config.eval.unknown_gen {
        let prepared = prepare_classifier(&models, &train_view, &config.eval)?;
        write_unknowns(&out, &prepared.unknowns)?;
    }
    out.write_config("train", &[("data", &args.data)], &config)?;
    if let Some(last) = history.last() {
        println!("{} iterations: W={:.4} gp={:.4} cls={:.4}", history.len(), last.wasserstein, last.gp, last.cls);
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let recorded = args.model.join("train_config.toml");
    let mut config = load_config(&args.shared, Some(&recorded))?;
    if let Some(seed) = config.seed {
        config.eval.seed = seed;
    }
    config.seed = Some(config.eval.seed);
    if let Some(r) = args.rejector {
        config.eval.rejector = r;
    }
    config.eval.tail_size = args.tail_size.unwrap_or(config.eval.tail_size);
    config.eval.unknown_gen |= args.unknown_gen;

    let mut names = vec![REPORTS_FILE, TABLE_FILE, SERIES_FILE, "eval_config.toml"];
    if config.eval.unknown_gen {
        names.extend([UNKNOWNS_FILE, UNKNOWN_MATRIX_FILE]);
    }
    let out = Outputs::claim(&args.shared.out, &names, args.shared.force)?;
    let dataset = load_dataset(&args.data)?;
    let checkpoint_path = args.model.join(MODEL_FILE);
    let checkpoint =
        Checkpoint::load(&checkpoint_path).with_context(|| format!("loading {}", checkpoint_path.display()))?;
    let models = TrainedModels::from_checkpoint(&checkpoint)?;
    let recorded_manifest = args.model.join(MANIFEST_FILE);
    let manifest = resolve_split(&args.split, &args.data, Some(&recorded_manifest), config.eval.seed)?;
    let (train_view, test_view) = apply_manifest(&dataset, &manifest, config.holdout)?;

    let eval = &config.eval;
    let prepared = prepare_classifier(&models, &train_view, eval)?;
    let rejector = match eval.rejector {
        Rejector::Softmax => "softmax",
        Rejector::Openmax => "openmax",
    };
    let label = format!("{rejector}{}", if eval.unknown_gen { "+unknown" } else { "" });
    let mut reports: Vec<EvalReport> = vec![prepared.evaluate(&test_view, &manifest, eval, &label)?];
    if args.sweep {
        reports.extend(prepared.tail_sweep(&test_view, &manifest, eval, SWEEP_TAILS)?);
    }

    out.write(REPORTS_FILE, &reports_jsonl(&reports))?;
    let table = render_table(&reports);
    out.write(TABLE_FILE, &table)?;
    out.write(SERIES_FILE, &pr_series(&reports))?;
    if eval.unknown_gen {
        write_unknowns(&out, &prepared.unknowns)?;
    }
    out.write_config("eval", &[("data", &args.data), ("model", &args.model)], &config)?;
    print!("{table}");
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let mut reports = Vec::new();
    for path in &args.reports {
        let text = fs::read_to_string(path)
            .map_err(ozsl::Error::from)
            .with_context(|| format!("reading {}", path.display()))?;
        reports.extend(parse_reports_jsonl(&text).with_context(|| format!("in {}", path.display()))?);
    }
    if reports.is_empty() {
        return Err(invalid("no reports to render"));
    }
    let table = render_table(&reports);
    match &args.out {
        Some(dir) => {
            let out = Outputs::claim(dir, &[TABLE_FILE, SERIES_FILE], args.force)?;
            out.write(TABLE_FILE, &table)?;
            out.write(SERIES_FILE, &pr_series(&reports))?;
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ozsl::Error>() {
        Some(e) if !e.is_validation() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
