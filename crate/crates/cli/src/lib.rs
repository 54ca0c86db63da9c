//! Batch command-line front end for the engram memory engine.
//!
//! Every subcommand wires one library entry point: `ingest` validates fact
//! files, `train` fits a model and writes a checkpoint, `query`/`recall`/
//! `profile`/`associate` read checkpoints and print distributions, `perceive`
//! pushes sensory vectors through an encoder into an episodic model,
//! `consolidate` turns episodic models into semantic ones, and `distill`/
//! `export-kg` move facts between models and explicit triple stores.
//!
//! All randomness flows from `--seed` (falling back to the `ENGRAM_SEED`
//! environment variable, then 0), so equal invocations on equal inputs are
//! byte-reproducible. Exit codes: 0 success, 1 usage error, 2 data error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use engram_core::query;
use engram_core::{
    distill_explicit, fit_episodic, fit_semantic, load_checkpoint, load_episodic, load_semantic,
    marginalize_time, perceive, read_sensory_vectors, replay_teach, save_episodic, save_semantic,
    Beta, Checkpoint, DistillSource, Encoder, EntityId, EpisodicModel, Error, FactStore,
    KnowledgeGraphStore, Mode, ModelConfig, PredicateId, Result, ScoredTriple, SemanticModel,
    Slot, SlotPattern, SymbolId, TimeId, TrainConfig, DEFAULT_DISTILL_THRESHOLD,
    DEFAULT_INIT_SCALE,
};

/// Entry point shared by the binary and the integration tests. Parses
/// `argv`, runs the selected subcommand, and maps failures to the exit-code
/// contract: 1 for bad invocations, 2 for bad data, 3 for numeric failures.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

/// Sorts library errors into the documented exit-code classes.
fn exit_code(err: &Error) -> i32 {
    match err {
        // The request itself was malformed or impossible as stated.
        Error::InvalidArgument { .. }
        | Error::InvalidPattern { .. }
        | Error::InvalidBeta { .. }
        | Error::InvalidThreshold { .. }
        | Error::InvalidConfidence { .. }
        | Error::InvalidRank { .. }
        | Error::InvalidOrder { .. }
        | Error::MarginalizationNeedsNonnegative
        | Error::LinearScoringNeedsNonnegative
        | Error::ProjectionRequired
        | Error::VocabularyTooLarge { .. }
        | Error::EngramBound { .. } => 1,
        // The inputs on disk (or the symbols they name) are unusable.
        Error::Io(_)
        | Error::Parse { .. }
        | Error::Corrupt { .. }
        | Error::VersionMismatch { .. }
        | Error::KindMismatch { .. }
        | Error::UnknownSymbol { .. }
        | Error::DuplicateSymbol { .. }
        | Error::EmptyInput { .. }
        | Error::EmptyVocabulary { .. }
        | Error::WrongValueCount { .. }
        | Error::DimensionMismatch { .. }
        | Error::RankMismatch { .. }
        | Error::NegativeInNonnegative { .. } => 2,
        // The computation itself failed numerically.
        Error::NonFinite { .. } | Error::Diverged { .. } | Error::AllZeroScores => 3,
    }
}

#[derive(Parser)]
#[command(
    name = "engram",
    version,
    about = "Tensor-factorized episodic and semantic memory engine"
)]
struct Cli {
    /// Seed for all randomness; falls back to $ENGRAM_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output format for printed results.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Tsv)]
    format: OutputFormat,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    /// Tab-separated values, one row per line.
    Tsv,
    /// One JSON object per result line.
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a fact file and report what it contains.
    Ingest(IngestArgs),
    /// Fit a model on a fact file and write a checkpoint.
    Train(TrainArgs),
    /// Rank one free slot of a triple or quadruple pattern.
    Query(QueryArgs),
    /// Rank whole triples at a stored time point.
    Recall(RecallArgs),
    /// Rank (predicate, object) completions for one subject entity.
    Profile(ProfileArgs),
    /// List nearest neighbors of a symbol in embedding space.
    Associate(AssociateArgs),
    /// Encode sensory vectors, optionally bind them as engrams, and decode.
    Perceive(PerceiveArgs),
    /// Build a semantic model from an episodic one.
    Consolidate(ConsolidateArgs),
    /// Materialize high-probability triples into an explicit fact store.
    Distill(DistillArgs),
    /// Re-emit an explicit fact store in the selected output format.
    ExportKg(ExportKgArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Fact file: 3 or 4 tab-separated columns per line, '#' comments.
    #[arg(long)]
    facts: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Fact file to train on.
    #[arg(long)]
    facts: PathBuf,

    /// Where to write the trained checkpoint.
    #[arg(long)]
    model_out: PathBuf,

    /// Which model to fit; `auto` picks episodic when the file has
    /// four-column facts and semantic otherwise.
    #[arg(long, value_enum, default_value_t = KindChoice::Auto)]
    kind: KindChoice,

    /// Embedding rank shared by every slot.
    #[arg(long, default_value_t = 8)]
    rank: usize,

    /// Constrain all parameters to be nonnegative (enables exact
    /// marginalization and sampling-based replay).
    #[arg(long)]
    nonnegative: bool,

    /// Half-width of the uniform parameter init. Scores multiply one
    /// factor per slot, so the small default can leave training stalled
    /// near zero; raise toward 0.5 to warm-start a model that will not
    /// fit its facts.
    #[arg(long, default_value_t = DEFAULT_INIT_SCALE)]
    init_scale: f64,

    #[command(flatten)]
    trainer: TrainerArgs,

    /// Optional JSONL file recording per-epoch losses.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Optimizer knobs shared by `train` and `consolidate --mode replay`.
#[derive(Args)]
struct TrainerArgs {
    /// Number of passes over the positive facts.
    #[arg(long, default_value_t = 100)]
    epochs: usize,

    /// Gradient step size.
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,

    /// Per-epoch multiplicative learning-rate decay.
    #[arg(long, default_value_t = 1.0)]
    decay: f64,

    /// Corrupted negatives drawn per positive fact each epoch.
    #[arg(long, default_value_t = 5)]
    negatives: usize,

    /// L2 regularization strength.
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,

    /// Freeze one negative sample set up front so the objective is fixed.
    #[arg(long)]
    full_batch: bool,
}

impl TrainerArgs {
    fn to_config(&self, seed: u64, project_nonnegative: bool) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            decay: self.decay,
            negatives_per_positive: self.negatives,
            l2: self.l2,
            seed,
            project_nonnegative,
            full_batch: self.full_batch,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindChoice {
    Auto,
    Episodic,
    Semantic,
}

#[derive(Args)]
struct QueryArgs {
    /// Checkpoint to query (episodic or semantic).
    #[arg(long)]
    model: PathBuf,

    /// Bind a slot to a symbol, e.g. `--fix s=jack`. Repeatable.
    #[arg(long, value_name = "SLOT=NAME")]
    fix: Vec<String>,

    /// The slot to rank: s, p, o, or t.
    #[arg(long, value_name = "SLOT")]
    free: String,

    /// Sum a slot out over its whole vocabulary (nonnegative models only).
    /// Slots that are neither fixed nor free are marginalized implicitly.
    #[arg(long, value_name = "SLOT")]
    marginal: Vec<String>,

    /// Inverse temperature, or `linear` for probability-proportional
    /// scores. Defaults to the model's stored beta.
    #[arg(long)]
    beta: Option<String>,

    /// How many candidates to print.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct RecallArgs {
    /// Episodic checkpoint to read.
    #[arg(long)]
    model: PathBuf,

    /// Time label whose triples to rank.
    #[arg(long)]
    time: String,

    /// Inverse temperature, or `linear`. Defaults to the model's beta.
    #[arg(long)]
    beta: Option<String>,

    /// How many triples to print.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct ProfileArgs {
    /// Semantic checkpoint to read.
    #[arg(long)]
    model: PathBuf,

    /// Subject entity to profile.
    #[arg(long)]
    entity: String,

    /// Inverse temperature, or `linear`. Defaults to the model's beta.
    #[arg(long)]
    beta: Option<String>,

    /// How many completions to print.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct AssociateArgs {
    /// Checkpoint to read (episodic or semantic).
    #[arg(long)]
    model: PathBuf,

    /// Which vocabulary the symbol lives in.
    #[arg(long, value_enum)]
    kind: SymbolKind,

    /// The symbol whose neighbors to list.
    #[arg(long)]
    name: String,

    /// How many neighbors to print (clamped to the vocabulary size).
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SymbolKind {
    Entity,
    Predicate,
    Time,
}

#[derive(Args)]
struct PerceiveArgs {
    /// Episodic checkpoint to perceive into.
    #[arg(long)]
    model: PathBuf,

    /// Sensory vectors: one comma-separated float list per line.
    #[arg(long)]
    input: PathBuf,

    /// Encoder mapping sensory vectors to rank-sized latent traces.
    #[arg(long, value_enum, default_value_t = EncoderChoice::Identity)]
    encoder: EncoderChoice,

    /// Sensory dimensionality. Defaults to the model rank.
    #[arg(long)]
    input_dim: Option<usize>,

    /// Hidden width for the one-hidden encoder. Defaults to 2x rank.
    #[arg(long)]
    hidden_dim: Option<usize>,

    /// Seed for encoder weights. Defaults to the global seed.
    #[arg(long)]
    encoder_seed: Option<u64>,

    /// Clamp encoder outputs at zero even for unconstrained models.
    /// (Nonnegative models always clamp.)
    #[arg(long)]
    nonneg_output: bool,

    /// Bind each perceived trace as a new engram (requires --model-out).
    #[arg(long)]
    memorable: bool,

    /// Where to write the updated checkpoint after memorable perception.
    #[arg(long)]
    model_out: Option<PathBuf>,

    /// Inverse temperature, or `linear`. Defaults to the model's beta.
    #[arg(long)]
    beta: Option<String>,

    /// How many decoded triples to print per input vector.
    #[arg(long, default_value_t = 3)]
    top: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncoderChoice {
    /// Pass the input through unchanged (input dim must equal rank).
    Identity,
    /// Seeded random linear map.
    Affine,
    /// Seeded random one-hidden-layer tanh network.
    OneHidden,
}

#[derive(Args)]
struct ConsolidateArgs {
    /// Episodic checkpoint to consolidate.
    #[arg(long)]
    model: PathBuf,

    /// Where to write the resulting semantic checkpoint.
    #[arg(long)]
    out: PathBuf,

    /// How to consolidate: exact time marginalization, or sampling-based
    /// replay teaching.
    #[arg(long, value_enum)]
    mode: ConsolidateMode,

    /// Comma-separated time labels to include. Defaults to all of them.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<String>>,

    /// Divide the marginalized core by the number of time steps.
    #[arg(long)]
    normalize: bool,

    /// Triples sampled per time step in replay mode.
    #[arg(long, default_value_t = 20)]
    samples: usize,

    /// Inverse temperature for replay sampling, or `linear`. Defaults to
    /// the model's beta.
    #[arg(long)]
    beta: Option<String>,

    #[command(flatten)]
    trainer: TrainerArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConsolidateMode {
    Marginalize,
    Replay,
}

#[derive(Args)]
struct DistillArgs {
    /// Checkpoint to distill from (episodic needs --at).
    #[arg(long)]
    model: PathBuf,

    /// Time label to distill at (episodic models only).
    #[arg(long)]
    at: Option<String>,

    /// Minimum probability for a triple to be materialized.
    #[arg(long, default_value_t = DEFAULT_DISTILL_THRESHOLD)]
    threshold: f64,

    /// Existing knowledge-graph TSV to extend.
    #[arg(long)]
    kg_in: Option<PathBuf>,

    /// Where to write the resulting knowledge-graph TSV.
    #[arg(long)]
    kg_out: PathBuf,
}

#[derive(Args)]
struct ExportKgArgs {
    /// Checkpoint whose vocabularies name the stored symbols.
    #[arg(long)]
    model: PathBuf,

    /// Knowledge-graph TSV to read.
    #[arg(long)]
    kg: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    let seed = resolve_seed(cli.seed)?;
    let format = cli.format;
    match cli.command {
        Command::Ingest(args) => run_ingest(args, format),
        Command::Train(args) => run_train(args, seed, format),
        Command::Query(args) => run_query(args, format),
        Command::Recall(args) => run_recall(args, format),
        Command::Profile(args) => run_profile(args, format),
        Command::Associate(args) => run_associate(args, format),
        Command::Perceive(args) => run_perceive(args, seed, format),
        Command::Consolidate(args) => run_consolidate(args, seed, format),
        Command::Distill(args) => run_distill(args, format),
        Command::ExportKg(args) => run_export_kg(args, format),
    }
}

/// --seed beats $ENGRAM_SEED beats 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("ENGRAM_SEED") {
        Ok(text) => text.trim().parse().map_err(|_| Error::InvalidArgument {
            reason: format!("ENGRAM_SEED must be an unsigned integer, got {text:?}"),
        }),
        Err(_) => Ok(0),
    }
}

// ---------------------------------------------------------------------------
// Output plumbing. Rows keep their column order in both formats; floats are
// printed with Rust's shortest-round-trip formatting so output is stable.

enum Cell {
    Text(String),
    Uint(u64),
    Float(f64),
}

impl Cell {
    fn tsv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Uint(n) => n.to_string(),
            Cell::Float(x) => x.to_string(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Text(s) => serde_json::Value::from(s.as_str()),
            Cell::Uint(n) => serde_json::Value::from(*n),
            Cell::Float(x) => serde_json::Value::from(*x),
        }
    }
}

type Row = Vec<(&'static str, Cell)>;

fn print_rows(format: OutputFormat, rows: &[Row]) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for row in rows {
        let line = match format {
            OutputFormat::Tsv => row
                .iter()
                .map(|(_, cell)| cell.tsv())
                .collect::<Vec<_>>()
                .join("\t"),
            OutputFormat::Json => {
                let mut object = serde_json::Map::new();
                for (key, cell) in row {
                    object.insert((*key).to_string(), cell.json());
                }
                serde_json::Value::Object(object).to_string()
            }
        };
        let _ = writeln!(out, "{line}");
    }
}

fn text(value: impl Into<String>) -> Cell {
    Cell::Text(value.into())
}

/// Single-record summaries print as `key<TAB>value` lines in TSV mode and
/// as one JSON object in JSON mode, so they stay self-describing.
fn print_report(format: OutputFormat, row: Row) {
    match format {
        OutputFormat::Tsv => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for (key, cell) in &row {
                let _ = writeln!(out, "{key}\t{}", cell.tsv());
            }
        }
        OutputFormat::Json => print_rows(format, &[row]),
    }
}

// ---------------------------------------------------------------------------
// Subcommands.

fn run_ingest(args: IngestArgs, format: OutputFormat) -> Result<()> {
    let mut store = FactStore::new();
    let report = store.ingest_path(&args.facts)?;
    print_report(
        format,
        vec![
            ("triples_read", Cell::Uint(report.triples_read as u64)),
            ("triples_new", Cell::Uint(report.triples_new as u64)),
            ("quads_read", Cell::Uint(report.quads_read as u64)),
            ("quads_new", Cell::Uint(report.quads_new as u64)),
            ("entities", Cell::Uint(store.entities().len() as u64)),
            ("predicates", Cell::Uint(store.predicates().len() as u64)),
            ("times", Cell::Uint(store.times().len() as u64)),
        ],
    );
    Ok(())
}

/// Nonnegative parameters clamp at zero, where every gradient through them
/// vanishes; a stored fact left at score ~0 is one the fitted model calls a
/// coin flip and cannot recover. Warn instead of silently writing a
/// checkpoint that will rank its own training facts at chance.
fn warn_if_collapsed<I>(nonnegative: bool, scores: I) -> Result<()>
where
    I: IntoIterator<Item = Result<f64>>,
{
    if !nonnegative {
        return Ok(());
    }
    let mut dead = 0usize;
    let mut total = 0usize;
    for score in scores {
        total += 1;
        if score? < 0.01 {
            dead += 1;
        }
    }
    if dead > 0 {
        eprintln!(
            "warning: {dead} of {total} training facts score near zero after fitting, \
             the clamped state nonnegative gradient descent cannot leave. Fewer \
             --negatives, another --seed, or timeless three-column facts usually \
             train better; see the training notes in the README."
        );
    }
    Ok(())
}

fn run_train(args: TrainArgs, seed: u64, format: OutputFormat) -> Result<()> {
    let store = FactStore::from_path(&args.facts)?;
    let kind = match args.kind {
        KindChoice::Auto => {
            if store.quads().is_empty() {
                KindChoice::Semantic
            } else {
                KindChoice::Episodic
            }
        }
        explicit => explicit,
    };
    if !(args.init_scale.is_finite() && args.init_scale > 0.0) {
        return Err(Error::InvalidArgument {
            reason: format!("--init-scale must be positive and finite, got {}", args.init_scale),
        });
    }
    let model_config = ModelConfig::new(args.rank)
        .nonnegative(args.nonnegative)
        .seed(seed)
        .init_scale(args.init_scale);
    let train_config = args.trainer.to_config(seed, args.nonnegative);
    let (kind_label, report) = match kind {
        KindChoice::Episodic => {
            let mut model = EpisodicModel::from_store(&store, model_config);
            let report = fit_episodic(&mut model, &store, &train_config)?;
            warn_if_collapsed(
                args.nonnegative,
                store
                    .quads()
                    .iter()
                    .map(|q| model.score(q.subject, q.predicate, q.object, q.time)),
            )?;
            save_episodic(&model, &args.model_out)?;
            ("episodic", report)
        }
        KindChoice::Semantic => {
            let mut model = SemanticModel::from_store(&store, model_config);
            let report = fit_semantic(&mut model, &store, &train_config)?;
            warn_if_collapsed(
                args.nonnegative,
                store
                    .triples()
                    .iter()
                    .map(|t| model.score(t.subject, t.predicate, t.object)),
            )?;
            save_semantic(&model, &args.model_out)?;
            ("semantic", report)
        }
        KindChoice::Auto => unreachable!("auto resolved above"),
    };
    if let Some(path) = &args.report {
        let file = File::create(path).map_err(Error::Io)?;
        report.write_jsonl(BufWriter::new(file))?;
    }
    print_report(
        format,
        vec![
            ("kind", text(kind_label)),
            ("epochs", Cell::Uint(report.epochs.len() as u64)),
            (
                "final_loss",
                Cell::Float(report.final_loss().unwrap_or(f64::NAN)),
            ),
            ("model", text(args.model_out.display().to_string())),
        ],
    );
    Ok(())
}

/// Which tuple position a slot key names; `t` is only legal on episodic
/// patterns.
fn slot_position(key: &str, has_time: bool) -> Result<usize> {
    match key {
        "s" | "subject" => Ok(0),
        "p" | "predicate" => Ok(1),
        "o" | "object" => Ok(2),
        "t" | "time" if has_time => Ok(3),
        "t" | "time" => Err(Error::InvalidArgument {
            reason: "semantic models have no time slot".to_string(),
        }),
        other => Err(Error::InvalidArgument {
            reason: format!("unknown slot {other:?}; use s, p, o, or t"),
        }),
    }
}

/// Turns `--fix`/`--free`/`--marginal` into a slot pattern. Slots that are
/// never mentioned default to marginalized, so `--fix s=jack --free p` on
/// an episodic model asks about predicates over all objects and times.
fn build_pattern<F>(args: &QueryArgs, has_time: bool, mut fixed_id: F) -> Result<SlotPattern>
where
    F: FnMut(usize, &str) -> Result<Slot>,
{
    let width = if has_time { 4 } else { 3 };
    let mut slots: Vec<Option<Slot>> = vec![None; width];

    let free = slot_position(&args.free, has_time)?;
    slots[free] = Some(Slot::Free);

    for binding in &args.fix {
        let (key, name) = binding.split_once('=').ok_or_else(|| Error::InvalidArgument {
            reason: format!("--fix expects SLOT=NAME, got {binding:?}"),
        })?;
        let position = slot_position(key, has_time)?;
        if slots[position].is_some() {
            return Err(Error::InvalidArgument {
                reason: format!("slot {key:?} is bound more than once"),
            });
        }
        slots[position] = Some(fixed_id(position, name)?);
    }

    for key in &args.marginal {
        let position = slot_position(key, has_time)?;
        if slots[position].is_some() {
            return Err(Error::InvalidArgument {
                reason: format!("slot {key:?} is bound more than once"),
            });
        }
        slots[position] = Some(Slot::Marginalized);
    }

    let slots: Vec<Slot> = slots
        .into_iter()
        .map(|slot| slot.unwrap_or(Slot::Marginalized))
        .collect();
    Ok(if has_time {
        SlotPattern::quad(
            slots[0].clone(),
            slots[1].clone(),
            slots[2].clone(),
            slots[3].clone(),
        )
    } else {
        SlotPattern::triple(slots[0].clone(), slots[1].clone(), slots[2].clone())
    })
}

fn parse_beta(flag: &Option<String>, default_beta: f64) -> Result<Beta> {
    match flag {
        Some(text) => text.parse(),
        None => Ok(Beta::Softmax(default_beta)),
    }
}

fn run_query(args: QueryArgs, format: OutputFormat) -> Result<()> {
    let (result, names): (query::QueryResult, Vec<String>) = match load_checkpoint(&args.model)? {
        Checkpoint::Episodic(model) => {
            let pattern = build_pattern(&args, true, |position, name| {
                Ok(match position {
                    0 | 2 => Slot::from(model.entities().require(name)?),
                    1 => Slot::from(model.predicates().require(name)?),
                    _ => Slot::from(model.times().require(name)?),
                })
            })?;
            let beta = parse_beta(&args.beta, model.config().beta_default)?;
            let result = query::conditional_distribution(&model, &pattern, beta)?;
            let names = candidate_names(result.mode, &result.candidates, |mode, index| {
                match mode {
                    Mode::Subject | Mode::Object => model.entities().name(EntityId::from_index(index)),
                    Mode::Predicate => model.predicates().name(PredicateId::from_index(index)),
                    Mode::Time => model.times().name(TimeId::from_index(index)),
                }
                .map(str::to_string)
            })?;
            (result, names)
        }
        Checkpoint::Semantic(model) => {
            let pattern = build_pattern(&args, false, |position, name| {
                Ok(match position {
                    0 | 2 => Slot::from(model.entities().require(name)?),
                    _ => Slot::from(model.predicates().require(name)?),
                })
            })?;
            let beta = parse_beta(&args.beta, model.config().beta_default)?;
            let result = query::conditional_distribution(&model, &pattern, beta)?;
            let names = candidate_names(result.mode, &result.candidates, |mode, index| {
                match mode {
                    Mode::Subject | Mode::Object => model.entities().name(EntityId::from_index(index)),
                    Mode::Predicate => model.predicates().name(PredicateId::from_index(index)),
                    Mode::Time => None,
                }
                .map(str::to_string)
            })?;
            (result, names)
        }
    };

    let mut rows = Vec::new();
    for candidate in result.ranked().into_iter().take(args.top) {
        rows.push(vec![
            ("name", text(names[candidate].clone())),
            ("score", Cell::Float(result.scores[candidate])),
            ("probability", Cell::Float(result.probabilities[candidate])),
        ]);
    }
    print_rows(format, &rows);
    Ok(())
}

fn candidate_names<F>(mode: Mode, candidates: &[usize], lookup: F) -> Result<Vec<String>>
where
    F: Fn(Mode, usize) -> Option<String>,
{
    candidates
        .iter()
        .map(|&index| {
            lookup(mode, index).ok_or_else(|| Error::UnknownSymbol {
                kind: mode.label(),
                what: format!("#{index}"),
            })
        })
        .collect()
}

fn scored_triple_row(model: &EpisodicModel, item: &ScoredTriple) -> Result<Row> {
    Ok(vec![
        ("subject", text(entity_name(model.entities(), item.subject)?)),
        (
            "predicate",
            text(predicate_name(model.predicates(), item.predicate)?),
        ),
        ("object", text(entity_name(model.entities(), item.object)?)),
        ("score", Cell::Float(item.score)),
        ("probability", Cell::Float(item.probability)),
    ])
}

fn entity_name(
    registry: &engram_core::model::Registry<EntityId>,
    id: EntityId,
) -> Result<String> {
    registry
        .name(id)
        .map(str::to_string)
        .ok_or_else(|| Error::UnknownSymbol {
            kind: "entity",
            what: format!("#{}", id.index()),
        })
}

fn predicate_name(
    registry: &engram_core::model::Registry<PredicateId>,
    id: PredicateId,
) -> Result<String> {
    registry
        .name(id)
        .map(str::to_string)
        .ok_or_else(|| Error::UnknownSymbol {
            kind: "predicate",
            what: format!("#{}", id.index()),
        })
}

fn run_recall(args: RecallArgs, format: OutputFormat) -> Result<()> {
    let model = load_episodic(&args.model)?;
    let time = model.times().require(&args.time)?;
    let beta = parse_beta(&args.beta, model.config().beta_default)?;
    let recalled = query::recall(&model, time, beta, args.top)?;
    let rows = recalled
        .iter()
        .map(|item| scored_triple_row(&model, item))
        .collect::<Result<Vec<_>>>()?;
    print_rows(format, &rows);
    Ok(())
}

fn run_profile(args: ProfileArgs, format: OutputFormat) -> Result<()> {
    let model = load_semantic(&args.model)?;
    let entity = model.entities().require(&args.entity)?;
    let beta = parse_beta(&args.beta, model.config().beta_default)?;
    let pairs = query::entity_profile(&model, entity, beta, args.top)?;
    let mut rows = Vec::new();
    for pair in &pairs {
        rows.push(vec![
            (
                "predicate",
                text(predicate_name(model.predicates(), pair.predicate)?),
            ),
            ("object", text(entity_name(model.entities(), pair.object)?)),
            ("score", Cell::Float(pair.score)),
            ("probability", Cell::Float(pair.probability)),
        ]);
    }
    print_rows(format, &rows);
    Ok(())
}

fn run_associate(args: AssociateArgs, format: OutputFormat) -> Result<()> {
    let rows = match load_checkpoint(&args.model)? {
        Checkpoint::Episodic(model) => match args.kind {
            SymbolKind::Entity => neighbor_rows(
                model.entity_vectors(),
                model.entities(),
                &args.name,
                args.top,
            )?,
            SymbolKind::Predicate => neighbor_rows(
                model.predicate_vectors(),
                model.predicates(),
                &args.name,
                args.top,
            )?,
            SymbolKind::Time => {
                neighbor_rows(model.time_vectors(), model.times(), &args.name, args.top)?
            }
        },
        Checkpoint::Semantic(model) => match args.kind {
            SymbolKind::Entity => neighbor_rows(
                model.entity_vectors(),
                model.entities(),
                &args.name,
                args.top,
            )?,
            SymbolKind::Predicate => neighbor_rows(
                model.predicate_vectors(),
                model.predicates(),
                &args.name,
                args.top,
            )?,
            SymbolKind::Time => {
                return Err(Error::InvalidArgument {
                    reason: "semantic models have no time vocabulary".to_string(),
                })
            }
        },
    };
    print_rows(format, &rows);
    Ok(())
}

fn neighbor_rows<I: SymbolId>(
    table: &engram_core::model::EmbeddingTable<I>,
    registry: &engram_core::model::Registry<I>,
    name: &str,
    top: usize,
) -> Result<Vec<Row>> {
    let id = registry.require(name)?;
    let neighbors = query::associate(table, id, top.min(table.len()))?;
    neighbors
        .iter()
        .map(|neighbor| {
            let neighbor_name =
                registry
                    .name(neighbor.id)
                    .map(str::to_string)
                    .ok_or_else(|| Error::UnknownSymbol {
                        kind: I::KIND,
                        what: format!("#{}", neighbor.id.index()),
                    })?;
            Ok(vec![
                ("name", text(neighbor_name)),
                ("similarity", Cell::Float(neighbor.similarity)),
            ])
        })
        .collect()
}

fn run_perceive(args: PerceiveArgs, seed: u64, format: OutputFormat) -> Result<()> {
    if args.memorable && args.model_out.is_none() {
        return Err(Error::InvalidArgument {
            reason: "--memorable changes the model; pass --model-out to keep the result"
                .to_string(),
        });
    }
    let mut model = load_episodic(&args.model)?;
    let rank = model.config().rank;
    let input_dim = args.input_dim.unwrap_or(rank);
    let encoder_seed = args.encoder_seed.unwrap_or(seed);
    let mut encoder = match args.encoder {
        EncoderChoice::Identity => Encoder::identity(input_dim),
        EncoderChoice::Affine => Encoder::seeded_affine(input_dim, rank, encoder_seed),
        EncoderChoice::OneHidden => Encoder::seeded_one_hidden(
            input_dim,
            args.hidden_dim.unwrap_or(2 * rank),
            rank,
            encoder_seed,
        ),
    };
    if args.nonneg_output || model.config().nonnegative {
        encoder = encoder.with_nonnegative_output();
    }
    let beta = parse_beta(&args.beta, model.config().beta_default)?;

    let file = File::open(&args.input).map_err(Error::Io)?;
    let vectors = read_sensory_vectors(BufReader::new(file), input_dim)?;
    let mut rows = Vec::new();
    for (index, vector) in vectors.iter().enumerate() {
        let perception = perceive(&encoder, &mut model, vector, args.memorable, beta, args.top)?;
        let bound = match &perception.engram {
            Some(engram) => model
                .times()
                .name(engram.time)
                .unwrap_or("?")
                .to_string(),
            None => "-".to_string(),
        };
        for item in &perception.decoded {
            let mut row = vec![
                ("input", Cell::Uint(index as u64)),
                ("bound_time", text(bound.clone())),
            ];
            row.extend(scored_triple_row(&model, item)?);
            rows.push(row);
        }
    }
    if let Some(path) = &args.model_out {
        save_episodic(&model, path)?;
    }
    print_rows(format, &rows);
    Ok(())
}

fn run_consolidate(args: ConsolidateArgs, seed: u64, format: OutputFormat) -> Result<()> {
    let episodic = load_episodic(&args.model)?;
    let schedule: Vec<TimeId> = match &args.times {
        Some(labels) => labels
            .iter()
            .map(|label| episodic.times().require(label))
            .collect::<Result<Vec<_>>>()?,
        None => episodic.times().ids().collect(),
    };
    match args.mode {
        ConsolidateMode::Marginalize => {
            let semantic = marginalize_time(&episodic, &schedule, args.normalize)?;
            save_semantic(&semantic, &args.out)?;
            print_report(
                format,
                vec![
                    ("mode", text("marginalize")),
                    ("times", Cell::Uint(schedule.len() as u64)),
                    ("normalized", text(if args.normalize { "yes" } else { "no" })),
                    ("model", text(args.out.display().to_string())),
                ],
            );
        }
        ConsolidateMode::Replay => {
            let beta = parse_beta(&args.beta, episodic.config().beta_default)?;
            let config = args
                .trainer
                .to_config(seed, episodic.config().nonnegative);
            let mut student = SemanticModel::with_vocabulary_of(&episodic);
            let report = replay_teach(&episodic, &mut student, &schedule, args.samples, beta, &config)?;
            save_semantic(&student, &args.out)?;
            print_report(
                format,
                vec![
                    ("mode", text("replay")),
                    ("times", Cell::Uint(schedule.len() as u64)),
                    ("epochs", Cell::Uint(report.epochs.len() as u64)),
                    (
                        "final_loss",
                        Cell::Float(report.final_loss().unwrap_or(f64::NAN)),
                    ),
                    ("model", text(args.out.display().to_string())),
                ],
            );
        }
    }
    Ok(())
}

fn run_distill(args: DistillArgs, format: OutputFormat) -> Result<()> {
    let checkpoint = load_checkpoint(&args.model)?;
    let mut store = KnowledgeGraphStore::new();

    let (entities, predicates) = match &checkpoint {
        Checkpoint::Episodic(model) => (model.entities(), model.predicates()),
        Checkpoint::Semantic(model) => (model.entities(), model.predicates()),
    };
    if let Some(path) = &args.kg_in {
        let file = File::open(path).map_err(Error::Io)?;
        store = KnowledgeGraphStore::load_tsv(entities, predicates, BufReader::new(file))?;
    }

    let added = match &checkpoint {
        Checkpoint::Episodic(model) => {
            let label = args.at.as_deref().ok_or_else(|| Error::InvalidArgument {
                reason: "episodic models distill one time point; pass --at TIME".to_string(),
            })?;
            let time = model.times().require(label)?;
            distill_explicit(
                DistillSource::EpisodicAt(model, time),
                args.threshold,
                &mut store,
            )?
        }
        Checkpoint::Semantic(model) => {
            if args.at.is_some() {
                return Err(Error::InvalidArgument {
                    reason: "--at only applies to episodic models".to_string(),
                });
            }
            distill_explicit(DistillSource::Semantic(model), args.threshold, &mut store)?
        }
    };

    let file = File::create(&args.kg_out).map_err(Error::Io)?;
    let mut writer = BufWriter::new(file);
    store.export_tsv(entities, predicates, &mut writer)?;
    writer.flush().map_err(Error::Io)?;

    print_report(
        format,
        vec![
            ("added", Cell::Uint(added as u64)),
            ("total", Cell::Uint(store.len() as u64)),
            ("kg", text(args.kg_out.display().to_string())),
        ],
    );
    Ok(())
}

fn run_export_kg(args: ExportKgArgs, format: OutputFormat) -> Result<()> {
    let checkpoint = load_checkpoint(&args.model)?;
    let (entities, predicates) = match &checkpoint {
        Checkpoint::Episodic(model) => (model.entities(), model.predicates()),
        Checkpoint::Semantic(model) => (model.entities(), model.predicates()),
    };
    let file = File::open(&args.kg).map_err(Error::Io)?;
    let store = KnowledgeGraphStore::load_tsv(entities, predicates, BufReader::new(file))?;
    let mut rows = Vec::new();
    for (fact, confidence) in store.iter() {
        rows.push(vec![
            ("subject", text(entity_name(entities, fact.subject)?)),
            (
                "predicate",
                text(predicate_name(predicates, fact.predicate)?),
            ),
            ("object", text(entity_name(entities, fact.object)?)),
            ("confidence", Cell::Float(confidence)),
        ]);
    }
    print_rows(format, &rows);
    Ok(())
}
