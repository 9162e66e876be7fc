//! Command-line harness over the visdict library.
//!
//! Every artifact the pipeline produces (lexicons, datasets, model
//! parameters, reports) lives in its own file, so the subcommands compose:
//! `gen-data` feeds `train`, `train` feeds `eval` and the two ablations,
//! `correct` and `inspect` answer one-off questions about a trained model.
//!
//! Relative paths resolve under `$VISDICT_DATA_DIR` when that variable is
//! set. Exit codes group failures by kind: 2 for invalid input or
//! configuration, 3 for I/O, 4 for malformed or mismatched files, 5 for
//! numeric failures inside the model.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use visdict::error::Error;
use visdict::eval::{
    ablate_candidates, ablate_resemblants, emit_report, evaluate, EvalConfig, ReportFormat,
};
use visdict::glyph::{
    generate_dataset, perturb, render, ConfusionTable, Dataset, DatasetSpec, GlyphImage,
};
use visdict::index::MetricIndex;
use visdict::lexicon::{Lexicon, Word};
use visdict::manifest::{RunManifest, MANIFEST_SCHEMA_VERSION};
use visdict::nn::encoder::recognize;
use visdict::nn::{ModelDims, ModelParams};
use visdict::pipeline::{build_candidate_set, select, CandidateSet, Mode, TextEmbeddingCache};
use visdict::train::{train_stage1, train_stage2, train_two_stage, EpochStats, TrainConfig};
use visdict::Result;

const DATA_DIR_VAR: &str = "VISDICT_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "visdict",
    version,
    about = "Dictionary-guided text correction over a synthetic glyph world",
    long_about = None,
    after_help = "Relative paths resolve under $VISDICT_DATA_DIR when it is set."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labeled glyph-image dataset from a lexicon.
    GenData(GenDataArgs),
    /// Build and cache the edit-distance index for a lexicon.
    BuildIndex(BuildIndexArgs),
    /// Train model parameters (both stages by default).
    Train(TrainArgs),
    /// Evaluate all three correction modes and write a report.
    Eval(EvalArgs),
    /// Sweep the retrieval width n over a fixed trained model.
    AblateCandidates(AblateCandidatesArgs),
    /// Re-train stage 2 per resemblant count from a stage-1 checkpoint.
    AblateResemblants(AblateResemblantsArgs),
    /// Correct one word image (from a file, or rendered from a label).
    Correct(CorrectArgs),
    /// Dump the candidate set and score vectors for one test sample.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Word list to draw labels from, one word per line.
    #[arg(long, required_unless_present = "lexicon_size", conflicts_with = "lexicon_size")]
    lexicon: Option<PathBuf>,
    /// Generate a synthetic lexicon of this size instead of loading one.
    #[arg(long)]
    lexicon_size: Option<usize>,
    /// Seed for the synthetic lexicon.
    #[arg(long, default_value_t = 1)]
    lexicon_seed: u64,
    /// Write the (possibly synthetic) lexicon here for later stages.
    #[arg(long)]
    lexicon_out: Option<PathBuf>,
    /// Confusion table file; defaults to the built-in v1 table.
    #[arg(long)]
    confusion: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    size: usize,
    #[arg(long, default_value_t = 0.06)]
    noise_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    smear: f64,
    #[arg(long, default_value_t = 0.0)]
    out_of_lexicon_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildIndexArgs {
    /// Word list, one word per line.
    #[arg(long)]
    lexicon: PathBuf,
    /// Output index cache file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageSelect {
    Both,
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset produced by gen-data.
    #[arg(long)]
    train_data: PathBuf,
    /// Confusion table file; defaults to the built-in v1 table.
    #[arg(long)]
    confusion: Option<PathBuf>,
    /// Which stage(s) to run.
    #[arg(long, value_enum, default_value = "both")]
    stage: StageSelect,
    /// Starting parameters; required for --stage 2, optional otherwise.
    #[arg(long)]
    params_in: Option<PathBuf>,
    /// Feature channel width C.
    #[arg(long, default_value_t = ModelDims::default().channels)]
    channels: usize,
    /// Joint matching-space width D.
    #[arg(long, default_value_t = ModelDims::default().proj_dim)]
    proj_dim: usize,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().stage1_epochs)]
    stage1_epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().stage2_epochs)]
    stage2_epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().stage1_lr)]
    stage1_lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().stage2_lr)]
    stage2_lr: f64,
    /// Recognition-loss weight in stage 1.
    #[arg(long, default_value_t = TrainConfig::default().stage1_lambda.0)]
    stage1_lambda: f64,
    /// Matching-loss weight in stage 2.
    #[arg(long, default_value_t = TrainConfig::default().stage2_lambda.1)]
    stage2_lambda: f64,
    #[arg(long, default_value_t = TrainConfig::default().resemblant_count)]
    resemblant_count: usize,
    #[arg(long, default_value_t = TrainConfig::default().fixed_resemblants)]
    fixed_resemblants: bool,
    #[arg(long, default_value_t = TrainConfig::default().stage2_train_backbone)]
    stage2_train_backbone: bool,
    #[arg(long, default_value_t = TrainConfig::default().tau)]
    tau: f64,
    /// Output parameter file.
    #[arg(long)]
    params_out: PathBuf,
    /// Write per-epoch losses as JSON.
    #[arg(long)]
    log_out: Option<PathBuf>,
    /// Write a run manifest; needs --lexicon (and --test-data if available).
    #[arg(long, requires = "lexicon")]
    manifest_out: Option<PathBuf>,
    /// Lexicon the manifest should pin (manifest emission only).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Test dataset the manifest should pin.
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Inference retrieval width recorded in the manifest.
    #[arg(long, default_value_t = EvalConfig::default().n_candidates)]
    n_candidates: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained parameter file.
    #[arg(long)]
    params: PathBuf,
    /// Word list, one word per line.
    #[arg(long)]
    lexicon: PathBuf,
    /// Optional index cache (built on the fly when absent or stale).
    #[arg(long)]
    index_cache: Option<PathBuf>,
    /// Test dataset produced by gen-data.
    #[arg(long)]
    test_data: PathBuf,
    #[arg(long, default_value_t = EvalConfig::default().n_candidates)]
    n_candidates: usize,
    #[arg(long, default_value_t = EvalConfig::default().tau)]
    tau: f64,
    #[arg(long, default_value_t = EvalConfig::default().keep_errors)]
    keep_errors: usize,
    /// Manifest whose digest the report should embed.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output report file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Table,
}

#[derive(Args)]
struct AblateCandidatesArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    index_cache: Option<PathBuf>,
    #[arg(long)]
    test_data: PathBuf,
    /// Retrieval widths to sweep, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10, 20, 30, 80, 150, 300])]
    values: Vec<usize>,
    #[arg(long, default_value_t = EvalConfig::default().tau)]
    tau: f64,
    /// Output grid JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateResemblantsArgs {
    /// Stage-1 checkpoint shared by every sweep point.
    #[arg(long)]
    stage1_params: PathBuf,
    #[arg(long)]
    train_data: PathBuf,
    #[arg(long)]
    confusion: Option<PathBuf>,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    index_cache: Option<PathBuf>,
    #[arg(long)]
    test_data: PathBuf,
    /// Resemblant counts to sweep, strictly increasing (0 allowed).
    #[arg(long, value_delimiter = ',', default_values_t = [0, 3, 7, 15, 31])]
    values: Vec<usize>,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().stage2_epochs)]
    stage2_epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().stage2_lr)]
    stage2_lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().fixed_resemblants)]
    fixed_resemblants: bool,
    #[arg(long, default_value_t = TrainConfig::default().stage2_train_backbone)]
    stage2_train_backbone: bool,
    #[arg(long, default_value_t = TrainConfig::default().tau)]
    tau: f64,
    #[arg(long, default_value_t = EvalConfig::default().n_candidates)]
    n_candidates: usize,
    /// Output grid JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    index_cache: Option<PathBuf>,
    /// Word image file written by `inspect --dump-image` or your own tool.
    #[arg(long, required_unless_present = "label", conflicts_with = "label")]
    image: Option<PathBuf>,
    /// Render this label instead of reading an image file.
    #[arg(long)]
    label: Option<String>,
    /// Reading noise applied to a rendered label.
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    smear: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    confusion: Option<PathBuf>,
    #[arg(long, default_value_t = EvalConfig::default().n_candidates)]
    n_candidates: usize,
    #[arg(long, default_value_t = EvalConfig::default().tau)]
    tau: f64,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    index_cache: Option<PathBuf>,
    /// Dataset to inspect.
    #[arg(long)]
    test_data: PathBuf,
    /// Sample index within the dataset.
    #[arg(long, default_value_t = 0)]
    sample: usize,
    #[arg(long, default_value_t = EvalConfig::default().n_candidates)]
    n_candidates: usize,
    #[arg(long, default_value_t = EvalConfig::default().tau)]
    tau: f64,
    /// Also write the sample's image as a standalone file.
    #[arg(long)]
    dump_image: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(inner) = source {
            eprintln!("  caused by: {inner}");
            source = inner.source();
        }
        std::process::exit(exit_code(&err));
    }
}

/// Group every library error into one of four stable exit codes.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidCharacter { .. }
        | Error::EmptyWord
        | Error::TooLong { .. }
        | Error::EmptyLexicon
        | Error::InfeasibleCount { .. }
        | Error::TextTooLong { .. }
        | Error::InvalidConfig(_) => 2,
        Error::Io { .. } => 3,
        Error::BadMagic { .. }
        | Error::VersionMismatch(_)
        | Error::CorruptFile(_)
        | Error::DigestMismatch
        | Error::InvalidReport(_) => 4,
        Error::NonFiniteParams | Error::NonFiniteLoss { .. } | Error::DegenerateEmbedding { .. } => 5,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData(args) => gen_data(args),
        Cmd::BuildIndex(args) => build_index(args),
        Cmd::Train(args) => train(args),
        Cmd::Eval(args) => eval(args),
        Cmd::AblateCandidates(args) => ablate_candidates_cmd(args),
        Cmd::AblateResemblants(args) => ablate_resemblants_cmd(args),
        Cmd::Correct(args) => correct(args),
        Cmd::Inspect(args) => inspect(args),
    }
}

/// Relative paths land under `$VISDICT_DATA_DIR` when it is set.
fn resolve(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_VAR) {
        Some(dir) => PathBuf::from(dir).join(path),
        None => path.to_path_buf(),
    }
}

fn load_table(path: &Option<PathBuf>) -> Result<std::borrow::Cow<'static, ConfusionTable>> {
    Ok(match path {
        Some(p) => std::borrow::Cow::Owned(ConfusionTable::load(resolve(p))?),
        None => std::borrow::Cow::Borrowed(ConfusionTable::default_v1()),
    })
}

fn load_index(lexicon: &Path, cache: &Option<PathBuf>) -> Result<MetricIndex> {
    let lex = Lexicon::load(resolve(lexicon))?;
    match cache {
        Some(p) => MetricIndex::load_or_build(resolve(p), lex),
        None => Ok(MetricIndex::build(lex)),
    }
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let lexicon = match (&args.lexicon, args.lexicon_size) {
        (Some(path), _) => Lexicon::load(resolve(path))?,
        (None, Some(size)) => Lexicon::synthetic(size, args.lexicon_seed)?,
        (None, None) => unreachable!("clap enforces one lexicon source"),
    };
    if let Some(path) = &args.lexicon_out {
        lexicon.save(resolve(path))?;
    }
    let table = load_table(&args.confusion)?;
    let spec = DatasetSpec {
        size: args.size,
        noise_rate: args.noise_rate,
        smear: args.smear,
        out_of_lexicon_fraction: args.out_of_lexicon_fraction,
        seed: args.seed,
    };
    let data = generate_dataset(&lexicon, &table, &spec)?;
    data.save(resolve(&args.out))?;
    log::info!(
        "wrote {} samples ({} out-of-lexicon target share) to {}",
        data.len(),
        spec.out_of_lexicon_fraction,
        args.out.display()
    );
    println!("dataset {} samples, digest {}", data.len(), data.digest_hex());
    Ok(())
}

fn build_index(args: BuildIndexArgs) -> Result<()> {
    let lexicon = Lexicon::load(resolve(&args.lexicon))?;
    let index = MetricIndex::build(lexicon);
    index.save(resolve(&args.out))?;
    println!(
        "index over {} words, lexicon digest {}",
        index.lexicon().len(),
        index.lexicon().digest_hex()
    );
    Ok(())
}

fn print_epochs(stage: &str, stats: &[EpochStats]) {
    for e in stats {
        println!("{stage} epoch {:>3}  mean loss {:.6}", e.epoch, e.mean_loss);
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let data = Dataset::load(resolve(&args.train_data))?;
    let table = load_table(&args.confusion)?;
    let dims = ModelDims {
        channels: args.channels,
        proj_dim: args.proj_dim,
        ..ModelDims::default()
    };
    let cfg = TrainConfig {
        seed: args.seed,
        batch_size: args.batch_size,
        stage1_epochs: args.stage1_epochs,
        stage2_epochs: args.stage2_epochs,
        stage1_lr: args.stage1_lr,
        stage2_lr: args.stage2_lr,
        stage1_lambda: (args.stage1_lambda, 0.0),
        stage2_lambda: (0.0, args.stage2_lambda),
        resemblant_count: args.resemblant_count,
        fixed_resemblants: args.fixed_resemblants,
        stage2_train_backbone: args.stage2_train_backbone,
        tau: args.tau,
    };

    let mut log = visdict::train::TrainingLog::default();
    let params = match (args.stage, &args.params_in) {
        (StageSelect::Both, None) => {
            let (params, full_log) = train_two_stage(dims, &data, &table, &cfg)?;
            log = full_log;
            params
        }
        (StageSelect::Both, Some(path)) => {
            let mut params = ModelParams::load(resolve(path))?;
            log.stage1 = train_stage1(&mut params, &data, &cfg)?;
            log.stage2 = train_stage2(&mut params, &data, &table, &cfg)?;
            params
        }
        (StageSelect::One, start) => {
            let mut params = match start {
                Some(path) => ModelParams::load(resolve(path))?,
                None => ModelParams::init(
                    dims,
                    visdict::manifest::derive_seed(cfg.seed, "init", &[]),
                )?,
            };
            log.stage1 = train_stage1(&mut params, &data, &cfg)?;
            params
        }
        (StageSelect::Two, Some(path)) => {
            let mut params = ModelParams::load(resolve(path))?;
            log.stage2 = train_stage2(&mut params, &data, &table, &cfg)?;
            params
        }
        (StageSelect::Two, None) => {
            return Err(Error::InvalidConfig(
                "--stage 2 needs --params-in (a stage-1 checkpoint)".into(),
            ));
        }
    };

    print_epochs("stage 1", &log.stage1);
    print_epochs("stage 2", &log.stage2);
    params.save(resolve(&args.params_out))?;
    println!("params digest {}", params.digest_hex());

    if let Some(path) = &args.log_out {
        let text = serde_json::to_string_pretty(&log).expect("log serialization cannot fail");
        let path = resolve(path);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    }
    if let Some(path) = &args.manifest_out {
        let lexicon_path = args.lexicon.as_ref().expect("clap enforces --lexicon");
        let lexicon = Lexicon::load(resolve(lexicon_path))?;
        let test = args
            .test_data
            .as_ref()
            .map(|p| Dataset::load(resolve(p)))
            .transpose()?;
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            master_seed: cfg.seed,
            dims,
            lexicon_digest: lexicon.digest_hex(),
            confusion_digest: table.digest_hex(),
            train_spec: Some(data.spec),
            test_spec: test.as_ref().map(|d| d.spec),
            train_data_digest: Some(data.digest_hex()),
            test_data_digest: test.as_ref().map(|d| d.digest_hex()),
            train: Some(cfg),
            n_candidates: args.n_candidates,
            tau: args.tau,
        };
        manifest.save(resolve(path))?;
        println!("manifest digest {}", manifest.digest_hex());
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let params = ModelParams::load(resolve(&args.params))?;
    let index = load_index(&args.lexicon, &args.index_cache)?;
    let data = Dataset::load(resolve(&args.test_data))?;
    let cfg = EvalConfig {
        n_candidates: args.n_candidates,
        tau: args.tau,
        keep_errors: args.keep_errors,
    };
    let manifest_digest = match &args.manifest {
        Some(path) => RunManifest::load(resolve(path))?.digest_hex(),
        None => "unpinned".to_string(),
    };
    let report = evaluate(&params, &index, &data, &cfg, &manifest_digest)?;
    let format = match args.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Table => ReportFormat::Table,
    };
    emit_report(&report, resolve(&args.out), format)?;
    print!("{}", report.render_table());
    Ok(())
}

fn write_grid(grid: &visdict::eval::AblationGrid, out: &Path) -> Result<()> {
    let path = resolve(out);
    std::fs::write(&path, grid.to_json()).map_err(|e| Error::io(path, e))?;
    for p in &grid.points {
        println!("{} {:>4}  proposed accuracy {:.4}", grid.axis, p.value, p.accuracy);
    }
    Ok(())
}

fn ablate_candidates_cmd(args: AblateCandidatesArgs) -> Result<()> {
    let params = ModelParams::load(resolve(&args.params))?;
    let index = load_index(&args.lexicon, &args.index_cache)?;
    let data = Dataset::load(resolve(&args.test_data))?;
    let grid = ablate_candidates(&params, &index, &data, &args.values, args.tau)?;
    write_grid(&grid, &args.out)
}

fn ablate_resemblants_cmd(args: AblateResemblantsArgs) -> Result<()> {
    let stage1 = ModelParams::load(resolve(&args.stage1_params))?;
    let train_data = Dataset::load(resolve(&args.train_data))?;
    let table = load_table(&args.confusion)?;
    let index = load_index(&args.lexicon, &args.index_cache)?;
    let test_data = Dataset::load(resolve(&args.test_data))?;
    let train_cfg = TrainConfig {
        seed: args.seed,
        batch_size: args.batch_size,
        stage2_epochs: args.stage2_epochs,
        stage2_lr: args.stage2_lr,
        fixed_resemblants: args.fixed_resemblants,
        stage2_train_backbone: args.stage2_train_backbone,
        tau: args.tau,
        ..TrainConfig::default()
    };
    let eval_cfg = EvalConfig {
        n_candidates: args.n_candidates,
        tau: args.tau,
        ..EvalConfig::default()
    };
    let grid = ablate_resemblants(
        &stage1,
        &train_data,
        &table,
        &index,
        &test_data,
        &args.values,
        &train_cfg,
        &eval_cfg,
    )?;
    write_grid(&grid, &args.out)
}

/// Shared tail of `correct` and `inspect`: run all three decision rules over
/// one recognition and print the candidate table.
fn print_decisions(
    params: &ModelParams,
    index: &MetricIndex,
    image: &GlyphImage,
    n: usize,
    tau: f64,
    label: Option<&str>,
) -> Result<()> {
    let rec = recognize(params, image)?;
    let set = build_candidate_set(index, &rec.prediction, n)?;
    let mut cache = TextEmbeddingCache::new();
    let mut picked: Vec<(Mode, Vec<f64>, String)> = Vec::new();
    for &mode in &Mode::ALL {
        let (scores, selected) = select(params, &rec, &set, mode, tau, &mut cache)?;
        picked.push((mode, scores, selected));
    }

    if let Some(label) = label {
        let in_lex = index.lexicon().contains(label);
        println!(
            "label      {label:?}  ({})",
            if in_lex { "in lexicon" } else { "out of lexicon" }
        );
    }
    println!("prediction {:?}", rec.prediction);
    print_candidates(&set, &picked);
    for (mode, _, selected) in &picked {
        let verdict = label
            .map(|l| if selected == l { "  correct" } else { "  wrong" })
            .unwrap_or("");
        println!("{:<10} -> {selected:?}{verdict}", mode.name());
    }
    Ok(())
}

fn print_candidates(set: &CandidateSet, picked: &[(Mode, Vec<f64>, String)]) {
    println!("candidates (word, edit distance, per-mode score):");
    println!("  {:<12} {:>4}  {:>9} {:>9} {:>9}", "word", "dist", "baseline", "ordinary", "proposed");
    for (i, c) in set.entries.iter().enumerate() {
        let row: Vec<String> = picked
            .iter()
            .map(|(_, scores, _)| format!("{:>9.4}", scores[i]))
            .collect();
        println!("  {:<12} {:>4}  {}", c.word, c.distance, row.join(" "));
    }
}

fn correct(args: CorrectArgs) -> Result<()> {
    let params = ModelParams::load(resolve(&args.params))?;
    let index = load_index(&args.lexicon, &args.index_cache)?;
    let (image, label) = match (&args.image, &args.label) {
        (Some(path), _) => (GlyphImage::load(resolve(path))?, None),
        (None, Some(text)) => {
            let word = Word::new(text)?;
            let table = load_table(&args.confusion)?;
            let image = perturb(&render(&word), &table, args.noise_rate, args.smear, args.seed);
            (image, Some(word.as_str().to_string()))
        }
        (None, None) => unreachable!("clap enforces one image source"),
    };
    print_decisions(&params, &index, &image, args.n_candidates, args.tau, label.as_deref())
}

fn inspect(args: InspectArgs) -> Result<()> {
    let params = ModelParams::load(resolve(&args.params))?;
    let index = load_index(&args.lexicon, &args.index_cache)?;
    let data = Dataset::load(resolve(&args.test_data))?;
    let sample = data.samples.get(args.sample).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "sample {} out of range: dataset has {} samples",
            args.sample,
            data.len()
        ))
    })?;
    println!("sample {} of {}", args.sample, data.len());
    if let Some(path) = &args.dump_image {
        sample.image.save(resolve(path))?;
    }
    print_decisions(
        &params,
        &index,
        &sample.image,
        args.n_candidates,
        args.tau,
        Some(sample.label.as_str()),
    )
}
