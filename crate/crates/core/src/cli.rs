//! Command-line front end.
//!
//! Every subcommand accepts `--config FILE`, a flat JSON object whose keys are
//! the subcommand's tunable flags with underscores (`window_w`, `epochs`, ...).
//! Flags given on the command line override values from the file, which
//! override built-in defaults. Keys a subcommand does not use are rejected.
//!
//! Subcommands that write files also write `<output>.report.json` next to the
//! primary output. Subcommands that print JSON embed the same information
//! under a `run` key.
//!
//! Exit status is 0 on success, 1 for data errors and 2 for usage errors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Display;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::classifier::{self, ModelStore, PredictionSource, TrainConfig};
use crate::corpus::{self, Instance, SenseInventory, Stoplist};
use crate::crosslingual::{self, AnnotationSet, BilingualDictionary, FilterMode, ParallelCorpus};
use crate::embeddings::{EmbeddingTable, TextFormat};
use crate::evaluation::{self, CoarseMap, GoldStandard};
use crate::features::{Composition, FeatureConfig, FeatureExtractor};
use crate::VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data(e: impl Display) -> CliError {
    CliError::Data(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("Io: {}: {e}", path.display()))
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "wsdkit",
    version,
    about = "Supervised word sense disambiguation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rescale every embedding dimension to a target standard deviation.
    ScaleEmbeddings(ScaleArgs),
    /// Train one classifier per lemma.
    Train(TrainArgs),
    /// Predict senses for test instances.
    Predict(PredictArgs),
    /// Score predictions against gold instances.
    Score(ScoreArgs),
    /// Paired significance test between two prediction files.
    Mcnemar(McNemarArgs),
    /// Word-align a parallel corpus with IBM Model 1.
    Align(AlignArgs),
    /// Project dictionary translations through alignments into training instances.
    BuildXling(BuildXlingArgs),
    /// Keep annotated instances under a filter mode; gold becomes the union of annotations.
    FilterGold(FilterGoldArgs),
    /// Inter-annotator agreement over a multi-label annotation file.
    Kappa(KappaArgs),
    /// Summary counts for an instance file and/or an embedding table.
    Stats(StatsArgs),
}

#[derive(Args)]
struct ScaleArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    /// plain or header
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct FeatureFlags {
    #[arg(long)]
    sigma: Option<f64>,
    /// sum, average, concat or off
    #[arg(long)]
    composition: Option<String>,
    #[arg(long = "window-w")]
    window_w: Option<usize>,
    #[arg(long = "concat-window")]
    concat_window: Option<usize>,
    #[arg(long = "use-surrounding")]
    use_surrounding: Option<bool>,
    #[arg(long = "use-collocations")]
    use_collocations: Option<bool>,
    #[arg(long = "use-pos")]
    use_pos: Option<bool>,
    /// One stopword per line; replaces the bundled English list.
    #[arg(long)]
    stoplist: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// `lemma<TAB>sense...`; senses seen only in training are appended.
    #[arg(long)]
    inventory: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[command(flatten)]
    features: FeatureFlags,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "seed-base")]
    seed_base: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    inventory: Option<PathBuf>,
    /// `mfs` predicts the first-listed sense for every instance.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// `sense<TAB>cluster` map for coarse-grained scoring.
    #[arg(long)]
    coarse: Option<PathBuf>,
    #[arg(long = "exclude-proper-nouns")]
    exclude_proper_nouns: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct McNemarArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long = "exclude-proper-nouns")]
    exclude_proper_nouns: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the translation table as `source<TAB>target<TAB>prob`.
    #[arg(long = "table-out")]
    table_out: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BuildXlingArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    alignment: PathBuf,
    #[arg(long)]
    dictionary: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Label counts as `lemma<TAB>translation<TAB>count`.
    #[arg(long = "counts-out")]
    counts_out: Option<PathBuf>,
    /// The count-sorted dictionary as a sense inventory.
    #[arg(long = "inventory-out")]
    inventory_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FilterGoldArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// include_all, exclude_oov, partial_agreement or complete_agreement
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct KappaArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    /// Training label counts as `lemma<TAB>translation<TAB>count`.
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Tunable values shared between config files and flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Settings {
    sigma: Option<f64>,
    format: Option<String>,
    composition: Option<String>,
    window_w: Option<usize>,
    concat_window: Option<usize>,
    collocation_offsets: Option<Vec<(i32, i32)>>,
    pos_offsets: Option<Vec<i32>>,
    use_surrounding: Option<bool>,
    use_collocations: Option<bool>,
    use_pos: Option<bool>,
    stoplist: Option<PathBuf>,
    lambda: Option<f64>,
    epochs: Option<usize>,
    seed_base: Option<u64>,
    workers: Option<usize>,
    baseline: Option<String>,
    exclude_proper_nouns: Option<bool>,
    iterations: Option<usize>,
    mode: Option<String>,
}

macro_rules! overlay {
    ($base:expr, $top:expr; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl Settings {
    fn overlay(mut self, top: &Settings) -> Settings {
        overlay!(self, top; sigma, format, composition, window_w, concat_window,
            collocation_offsets, pos_offsets, use_surrounding, use_collocations, use_pos,
            stoplist, lambda, epochs, seed_base, workers, baseline, exclude_proper_nouns,
            iterations, mode);
        self
    }
}

const FEATURE_KEYS: &[&str] = &[
    "sigma",
    "format",
    "composition",
    "window_w",
    "concat_window",
    "collocation_offsets",
    "pos_offsets",
    "use_surrounding",
    "use_collocations",
    "use_pos",
    "stoplist",
    "lambda",
    "epochs",
    "seed_base",
    "workers",
];

/// Inputs read by a run, with content hashes for the report.
struct Run {
    subcommand: &'static str,
    inputs: Vec<(String, String)>,
    outputs: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Run {
    fn new(subcommand: &'static str) -> Self {
        Run {
            subcommand,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        self.inputs
            .push((path.display().to_string(), sha256_hex(&bytes)));
        Ok(bytes)
    }

    fn write(
        &mut self,
        path: &Path,
        f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> CliResult<()> {
        let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(path, e))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    fn value(&self, config: &Value, counts: Value) -> Value {
        let config_text = serde_json::to_string(config).unwrap_or_default();
        json!({
            "tool": "wsdkit",
            "version": VERSION,
            "subcommand": self.subcommand,
            "inputs": self.inputs.iter().map(|(p, h)| json!({"path": p, "sha256": h})).collect::<Vec<_>>(),
            "outputs": self.outputs,
            "config": config,
            "config_sha256": sha256_hex(config_text.as_bytes()),
            "counts": counts,
        })
    }

    /// Writes `<primary>.report.json`.
    fn finish(mut self, primary: &Path, config: &Value, counts: Value) -> CliResult<()> {
        let mut name = primary.as_os_str().to_owned();
        name.push(".report.json");
        let path = PathBuf::from(name);
        let text = pretty(&self.value(config, counts));
        let run_path = path.clone();
        let file = fs::write(&path, text).map_err(|e| io_err(&run_path, e));
        self.outputs.push(path.display().to_string());
        file
    }

    /// Prints `body` with the run section embedded under `run`.
    fn print(self, mut body: Value, config: &Value, counts: Value) {
        let run = self.value(config, counts);
        if let Value::Object(map) = &mut body {
            map.insert("run".into(), run);
        }
        print!("{}", pretty(&body));
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}

fn require_exist(paths: &[Option<&PathBuf>]) -> CliResult<()> {
    for p in paths.iter().flatten() {
        if !p.is_file() {
            return Err(usage(format!("input file not found: {}", p.display())));
        }
    }
    Ok(())
}

/// Reads the config file and checks its keys against the subcommand's.
fn load_settings(run: &mut Run, path: Option<&PathBuf>, allowed: &[&str]) -> CliResult<Settings> {
    let Some(path) = path else {
        return Ok(Settings::default());
    };
    let bytes = run.read(path)?;
    let value: Value = serde_json::from_slice(&bytes)
        .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let Value::Object(map) = &value else {
        return Err(usage(format!(
            "config {}: expected a JSON object",
            path.display()
        )));
    };
    if let Some(key) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(usage(format!(
            "config {}: key {key:?} is not used by {}",
            path.display(),
            run.subcommand
        )));
    }
    serde_json::from_value(value).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn parse_with<T: std::str::FromStr<Err = String>>(v: Option<&str>, default: T) -> CliResult<T> {
    v.map_or(Ok(default), |s| s.parse().map_err(usage))
}

fn text_format(s: &Settings) -> CliResult<TextFormat> {
    parse_with(s.format.as_deref(), TextFormat::Plain)
}

fn format_name(f: TextFormat) -> &'static str {
    match f {
        TextFormat::Plain => "plain",
        TextFormat::Header => "header",
    }
}

fn load_table(run: &mut Run, path: &Path, format: TextFormat) -> CliResult<EmbeddingTable> {
    let bytes = run.read(path)?;
    let provenance = format!("sha256:{}", sha256_hex(&bytes));
    EmbeddingTable::load(&bytes[..], format, &provenance).map_err(data)
}

fn load_instances(run: &mut Run, path: &Path) -> CliResult<Vec<Instance>> {
    let bytes = run.read(path)?;
    corpus::parse_instances(&bytes[..]).map_err(data)
}

fn load_inventory(run: &mut Run, path: &Path) -> CliResult<SenseInventory> {
    let bytes = run.read(path)?;
    SenseInventory::from_tsv(&bytes[..]).map_err(data)
}

fn load_predictions(run: &mut Run, path: &Path) -> CliResult<evaluation::Predictions> {
    let bytes = run.read(path)?;
    evaluation::read_predictions(&bytes[..]).map_err(data)
}

fn load_corpus(run: &mut Run, source: &Path, target: &Path) -> CliResult<ParallelCorpus> {
    let s = run.read(source)?;
    let t = run.read(target)?;
    ParallelCorpus::read(&s[..], &t[..]).map_err(data)
}

fn load_annotations(run: &mut Run, path: &Path) -> CliResult<AnnotationSet> {
    let bytes = run.read(path)?;
    let records = crosslingual::read_annotations(&bytes[..]).map_err(data)?;
    Ok(AnnotationSet::from_records(records))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Returns the process exit status.
pub fn dispatch(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::ScaleEmbeddings(a) => scale_embeddings(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Score(a) => score(a),
        Command::Mcnemar(a) => mcnemar(a),
        Command::Align(a) => align(a),
        Command::BuildXling(a) => build_xling(a),
        Command::FilterGold(a) => filter_gold(a),
        Command::Kappa(a) => kappa(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            EXIT_DATA
        }
    }
}

fn scale_embeddings(a: ScaleArgs) -> CliResult<()> {
    let mut run = Run::new("scale-embeddings");
    require_exist(&[Some(&a.input), a.config.as_ref()])?;
    let file = load_settings(&mut run, a.config.as_ref(), &["sigma", "format"])?;
    let s = file.overlay(&Settings {
        sigma: a.sigma,
        format: a.format,
        ..Settings::default()
    });
    let sigma = s.sigma.unwrap_or(0.1);
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(usage(format!("--sigma must be positive, got {sigma}")));
    }
    let format = text_format(&s)?;
    let config = json!({"sigma": sigma, "format": format_name(format)});

    let table = load_table(&mut run, &a.input, format)?;
    let scaled = table.scale(sigma).map_err(data)?;
    run.write(&a.output, |w| scaled.write_plain(w))?;
    eprintln!(
        "scaled {} vectors of dimension {}",
        scaled.len(),
        scaled.dim()
    );
    let counts = json!({"words": scaled.len(), "dim": scaled.dim()});
    run.finish(&a.output, &config, counts)
}

fn feature_config(run: &mut Run, s: &Settings) -> CliResult<FeatureConfig> {
    let defaults = FeatureConfig::default();
    let stoplist = match &s.stoplist {
        Some(path) => {
            let bytes = run.read(path)?;
            let list = Stoplist::from_reader(&bytes[..]).map_err(|e| io_err(path, e))?;
            Some(list.sorted_words())
        }
        None => None,
    };
    let config = FeatureConfig {
        window_w: s.window_w.unwrap_or(defaults.window_w),
        collocation_offsets: s
            .collocation_offsets
            .clone()
            .unwrap_or(defaults.collocation_offsets),
        pos_offsets: s.pos_offsets.clone().unwrap_or(defaults.pos_offsets),
        composition: parse_with(s.composition.as_deref(), defaults.composition)?,
        concat_window: s.concat_window,
        sigma: s.sigma.unwrap_or(defaults.sigma),
        use_surrounding: s.use_surrounding.unwrap_or(defaults.use_surrounding),
        use_collocations: s.use_collocations.unwrap_or(defaults.use_collocations),
        use_pos: s.use_pos.unwrap_or(defaults.use_pos),
        stoplist,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

/// Loads the table for `config` and scales it to the configured sigma.
///
/// Scaling is idempotent, so an already-scaled file is accepted as is.
fn scaled_table(
    run: &mut Run,
    path: Option<&PathBuf>,
    format: TextFormat,
    composition: Composition,
    sigma: f64,
) -> CliResult<Option<EmbeddingTable>> {
    match (composition, path) {
        (Composition::Off, None) => Ok(None),
        (Composition::Off, Some(_)) => Err(usage("--embeddings given but composition is off")),
        (c, None) => Err(usage(format!(
            "composition {} needs --embeddings",
            to_value(&c).as_str().unwrap_or("?")
        ))),
        (_, Some(p)) => {
            let table = load_table(run, p, format)?;
            Ok(Some(table.scale(sigma).map_err(data)?))
        }
    }
}

fn train(a: TrainArgs) -> CliResult<()> {
    let mut run = Run::new("train");
    require_exist(&[
        Some(&a.train),
        a.embeddings.as_ref(),
        a.inventory.as_ref(),
        a.config.as_ref(),
        a.features.stoplist.as_ref(),
    ])?;
    let file = load_settings(&mut run, a.config.as_ref(), FEATURE_KEYS)?;
    let f = &a.features;
    let s = file.overlay(&Settings {
        sigma: f.sigma,
        format: a.format.clone(),
        composition: f.composition.clone(),
        window_w: f.window_w,
        concat_window: f.concat_window,
        use_surrounding: f.use_surrounding,
        use_collocations: f.use_collocations,
        use_pos: f.use_pos,
        stoplist: f.stoplist.clone(),
        lambda: a.lambda,
        epochs: a.epochs,
        seed_base: a.seed_base,
        workers: a.workers,
        ..Settings::default()
    });
    let format = text_format(&s)?;
    let defaults = TrainConfig::default();
    let train_config = TrainConfig {
        lambda: s.lambda.unwrap_or(defaults.lambda),
        epochs: s.epochs.unwrap_or(defaults.epochs),
        seed_base: s.seed_base.unwrap_or(defaults.seed_base),
    };
    train_config.validate().map_err(|e| usage(e.to_string()))?;
    let workers = s.workers.unwrap_or(1);
    if workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let fc = feature_config(&mut run, &s)?;
    if fc.composition != Composition::Off && a.embeddings.is_none() {
        return Err(usage("composition other than off needs --embeddings"));
    }
    let config = json!({
        "feature_config": to_value(&fc),
        "train_config": to_value(&train_config),
        "workers": workers,
        "format": format_name(format),
    });

    let instances = load_instances(&mut run, &a.train)?;
    let mut inventory = match &a.inventory {
        Some(p) => load_inventory(&mut run, p)?,
        None => SenseInventory::new(),
    };
    inventory.merge_missing(&SenseInventory::from_training(&instances));
    let table = scaled_table(
        &mut run,
        a.embeddings.as_ref(),
        format,
        fc.composition,
        fc.sigma,
    )?;
    let extractor = FeatureExtractor::new(fc, table.as_ref()).map_err(data)?;
    let n_instances = instances.len();
    let groups = corpus::group_by_lemma(instances);
    let (store, errors) =
        classifier::train_all(&groups, &extractor, &train_config, &inventory, workers)
            .map_err(data)?;
    if let Some(first) = errors.first() {
        for e in &errors[1..] {
            eprintln!("error: {e}");
        }
        return Err(data(first));
    }
    run.write(&a.out, |w| store.write(w))?;
    eprintln!(
        "trained {} lemma models from {n_instances} instances",
        store.len()
    );
    let counts = json!({
        "instances": n_instances,
        "lemmas": store.len(),
        "senses": store.lemmas.values().map(|m| m.senses.len()).sum::<usize>(),
        "binary_features": store.lemmas.values().map(|m| m.features.len()).sum::<usize>(),
        "dense_features": extractor.dense_len(),
    });
    run.finish(&a.out, &config, counts)
}

fn store_inventory(store: &ModelStore) -> SenseInventory {
    let mut inv = SenseInventory::new();
    for (lemma, model) in &store.lemmas {
        inv.insert(lemma, model.senses.clone());
    }
    inv
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let mut run = Run::new("predict");
    require_exist(&[
        Some(&a.test),
        a.model.as_ref(),
        a.embeddings.as_ref(),
        a.inventory.as_ref(),
        a.config.as_ref(),
    ])?;
    let file = load_settings(&mut run, a.config.as_ref(), &["format", "baseline"])?;
    let s = file.overlay(&Settings {
        format: a.format.clone(),
        baseline: a.baseline.clone(),
        ..Settings::default()
    });
    let format = text_format(&s)?;
    let mfs = match s.baseline.as_deref() {
        None => false,
        Some("mfs") => true,
        Some(other) => return Err(usage(format!("unknown baseline {other:?} (expected mfs)"))),
    };
    if a.model.is_none() && !(mfs && a.inventory.is_some()) {
        return Err(usage(
            "--model is required unless --baseline mfs is given with --inventory",
        ));
    }
    if mfs && a.embeddings.is_some() {
        return Err(usage("--embeddings is not used by --baseline mfs"));
    }
    let config = json!({
        "format": format_name(format),
        "baseline": s.baseline,
    });

    let instances = load_instances(&mut run, &a.test)?;
    let store = match &a.model {
        Some(p) => {
            let bytes = run.read(p)?;
            Some(ModelStore::read(&bytes[..]).map_err(data)?)
        }
        None => None,
    };
    let mut inventory = match &a.inventory {
        Some(p) => load_inventory(&mut run, p)?,
        None => SenseInventory::new(),
    };
    if let Some(store) = &store {
        inventory.merge_missing(&store_inventory(store));
    }

    let mut predictions: Vec<(String, String)> = Vec::with_capacity(instances.len());
    let mut by_model = 0usize;
    if mfs {
        predictions = classifier::mfs_predict(&inventory, &instances).map_err(data)?;
    } else {
        let store = store.as_ref().ok_or_else(|| usage("--model is required"))?;
        let fc = &store.feature_config;
        let table = scaled_table(
            &mut run,
            a.embeddings.as_ref(),
            format,
            fc.composition,
            store.sigma,
        )?;
        if let Some(t) = &table {
            if t.provenance() != store.embedding_provenance {
                eprintln!("warning: embeddings differ from the ones the model was trained with");
            }
        }
        let extractor = store.extractor(table.as_ref()).map_err(data)?;
        for inst in &instances {
            let p = classifier::predict(store, inst, &extractor, &inventory).map_err(data)?;
            if p.source == PredictionSource::Model {
                by_model += 1;
            }
            predictions.push((inst.id.clone(), p.sense));
        }
    }
    run.write(&a.out, |w| {
        evaluation::write_predictions(w, predictions.iter().map(|(i, s)| (i.as_str(), s.as_str())))
    })?;
    let counts = json!({
        "instances": predictions.len(),
        "by_model": by_model,
        "by_first_sense": predictions.len() - by_model,
    });
    run.finish(&a.out, &config, counts)
}

fn exclude_proper_nouns(run: &mut Run, config: Option<&PathBuf>, flag: bool) -> CliResult<bool> {
    let file = load_settings(run, config, &["exclude_proper_nouns"])?;
    let s = file.overlay(&Settings {
        exclude_proper_nouns: flag.then_some(true),
        ..Settings::default()
    });
    Ok(s.exclude_proper_nouns.unwrap_or(false))
}

fn load_gold(run: &mut Run, path: &Path, exclude: bool) -> CliResult<GoldStandard> {
    let instances = load_instances(run, path)?;
    Ok(GoldStandard::from_instances(&instances, exclude))
}

fn score(a: ScoreArgs) -> CliResult<()> {
    let mut run = Run::new("score");
    require_exist(&[
        Some(&a.pred),
        Some(&a.gold),
        a.coarse.as_ref(),
        a.config.as_ref(),
    ])?;
    let exclude = exclude_proper_nouns(&mut run, a.config.as_ref(), a.exclude_proper_nouns)?;
    let config = json!({"exclude_proper_nouns": exclude});

    let predictions = load_predictions(&mut run, &a.pred)?;
    let gold = load_gold(&mut run, &a.gold, exclude)?;
    let fine = evaluation::score_fine(&predictions, &gold).map_err(data)?;
    let mut body = json!({ "fine": to_value(&fine) });
    if let Some(p) = &a.coarse {
        let bytes = run.read(p)?;
        let map = CoarseMap::from_tsv(&bytes[..]).map_err(data)?;
        let coarse = evaluation::score_coarse(&predictions, &gold, &map).map_err(data)?;
        body["coarse"] = to_value(&coarse);
    }
    let counts = json!({"predictions": predictions.len(), "gold": gold.len()});
    run.print(body, &config, counts);
    Ok(())
}

fn mcnemar(a: McNemarArgs) -> CliResult<()> {
    let mut run = Run::new("mcnemar");
    require_exist(&[Some(&a.a), Some(&a.b), Some(&a.gold), a.config.as_ref()])?;
    let exclude = exclude_proper_nouns(&mut run, a.config.as_ref(), a.exclude_proper_nouns)?;
    let config = json!({"exclude_proper_nouns": exclude});

    let pa = load_predictions(&mut run, &a.a)?;
    let pb = load_predictions(&mut run, &a.b)?;
    let gold = load_gold(&mut run, &a.gold, exclude)?;
    let result = evaluation::mcnemar_test(&pa, &pb, &gold).map_err(data)?;
    let acc_a = evaluation::score_fine(&pa, &gold).map_err(data)?;
    let acc_b = evaluation::score_fine(&pb, &gold).map_err(data)?;
    let body = json!({
        "mcnemar": to_value(&result),
        "accuracy_a": acc_a.accuracy,
        "accuracy_b": acc_b.accuracy,
    });
    let counts = json!({"predictions": pa.len(), "scored": acc_a.n_scored});
    run.print(body, &config, counts);
    Ok(())
}

fn align(a: AlignArgs) -> CliResult<()> {
    let mut run = Run::new("align");
    require_exist(&[Some(&a.source), Some(&a.target), a.config.as_ref()])?;
    let file = load_settings(&mut run, a.config.as_ref(), &["iterations"])?;
    let s = file.overlay(&Settings {
        iterations: a.iterations,
        ..Settings::default()
    });
    let iterations = s.iterations.unwrap_or(5);
    if iterations == 0 {
        return Err(usage("--iterations must be at least 1"));
    }
    let config = json!({"iterations": iterations});

    let corpus = load_corpus(&mut run, &a.source, &a.target)?;
    let model = crosslingual::ibm1_train(&corpus, iterations).map_err(data)?;
    let alignment = crosslingual::viterbi_align(&corpus, &model.table);
    run.write(&a.out, |w| {
        crosslingual::write_alignment_file(w, &alignment)
    })?;
    if let Some(p) = &a.table_out {
        run.write(p, |w| model.table.write_tsv(w))?;
    }
    let counts = json!({
        "pairs": corpus.len(),
        "links": alignment.links.iter().map(|l| l.len()).sum::<usize>(),
        "log_likelihoods": model.log_likelihoods,
    });
    run.finish(&a.out, &config, counts)
}

fn build_xling(a: BuildXlingArgs) -> CliResult<()> {
    let mut run = Run::new("build-xling");
    require_exist(&[
        Some(&a.source),
        Some(&a.target),
        Some(&a.alignment),
        Some(&a.dictionary),
        a.config.as_ref(),
    ])?;
    load_settings(&mut run, a.config.as_ref(), &[])?;
    let config = json!({});

    let corpus = load_corpus(&mut run, &a.source, &a.target)?;
    let bytes = run.read(&a.alignment)?;
    let alignment = crosslingual::read_alignment_file(&bytes[..]).map_err(data)?;
    let bytes = run.read(&a.dictionary)?;
    let dictionary = BilingualDictionary::from_tsv(&bytes[..]).map_err(data)?;
    let (instances, enriched, report) =
        crosslingual::build_xling_training(&corpus, &alignment, &dictionary).map_err(data)?;
    run.write(&a.out, |w| corpus::write_instances(w, &instances))?;
    if let Some(p) = &a.counts_out {
        run.write(p, |w| enriched.write_counts(w))?;
    }
    if let Some(p) = &a.inventory_out {
        run.write(p, |w| enriched.to_inventory().write_tsv(w))?;
    }
    run.finish(&a.out, &config, to_value(&report))
}

fn filter_mode(
    run: &mut Run,
    config: Option<&PathBuf>,
    flag: Option<String>,
) -> CliResult<FilterMode> {
    let file = load_settings(run, config, &["mode"])?;
    let s = file.overlay(&Settings {
        mode: flag,
        ..Settings::default()
    });
    parse_with(s.mode.as_deref(), FilterMode::IncludeAll)
}

fn filter_gold(a: FilterGoldArgs) -> CliResult<()> {
    let mut run = Run::new("filter-gold");
    require_exist(&[Some(&a.annotations), Some(&a.instances), a.config.as_ref()])?;
    let mode = filter_mode(&mut run, a.config.as_ref(), a.mode)?;
    let config = json!({"mode": mode.name()});

    let set = load_annotations(&mut run, &a.annotations)?;
    let instances = load_instances(&mut run, &a.instances)?;
    let lemma_of: HashMap<&str, &str> = instances
        .iter()
        .map(|i| (i.id.as_str(), i.target_lemma.as_str()))
        .collect();
    if let Some(id) = set
        .instances
        .keys()
        .find(|id| !lemma_of.contains_key(id.as_str()))
    {
        return Err(data(crosslingual::XlingError::UnknownInstance(id.clone())));
    }

    let mut modes = BTreeMap::new();
    for m in FilterMode::ALL {
        let kept = crosslingual::filter_annotations(&set, m);
        let words: BTreeSet<&str> = kept.iter().map(|id| lemma_of[id.as_str()]).collect();
        modes.insert(
            m.name(),
            json!({"instances": kept.len(), "target_words": words.len()}),
        );
    }
    let kept = crosslingual::filter_annotations(&set, mode);
    let out: Vec<Instance> = instances
        .iter()
        .filter(|i| kept.contains(&i.id))
        .map(|i| Instance {
            gold: set
                .union_labels(&i.id)
                .into_iter()
                .map(str::to_string)
                .collect(),
            ..i.clone()
        })
        .collect();
    run.write(&a.out, |w| corpus::write_instances(w, &out))?;
    let counts = json!({"annotated": set.instances.len(), "written": out.len(), "modes": modes});
    run.finish(&a.out, &config, counts)
}

fn kappa(a: KappaArgs) -> CliResult<()> {
    let mut run = Run::new("kappa");
    require_exist(&[
        Some(&a.annotations),
        Some(&a.instances),
        Some(&a.counts),
        a.dictionary.as_ref(),
        a.config.as_ref(),
    ])?;
    let mode = filter_mode(&mut run, a.config.as_ref(), a.mode)?;
    let config = json!({"mode": mode.name()});

    let set = load_annotations(&mut run, &a.annotations)?;
    let instances = load_instances(&mut run, &a.instances)?;
    let lemma_of: HashMap<String, String> = instances
        .into_iter()
        .map(|i| (i.id, i.target_lemma))
        .collect();
    let mut dictionary = match &a.dictionary {
        Some(p) => {
            let bytes = run.read(p)?;
            BilingualDictionary::from_tsv(&bytes[..]).map_err(data)?
        }
        None => BilingualDictionary::new(),
    };
    let bytes = run.read(&a.counts)?;
    dictionary.read_counts(&bytes[..]).map_err(data)?;

    let kept = crosslingual::filter_annotations(&set, mode);
    let result =
        crosslingual::compute_kappa(&set.restrict(&kept), &lemma_of, &dictionary).map_err(data)?;
    let counts = json!({"annotated": set.instances.len(), "kept": kept.len()});
    run.print(to_value(&result), &config, counts);
    Ok(())
}

fn stats(a: StatsArgs) -> CliResult<()> {
    let mut run = Run::new("stats");
    if a.instances.is_none() && a.embeddings.is_none() {
        return Err(usage("stats needs --instances and/or --embeddings"));
    }
    require_exist(&[
        a.instances.as_ref(),
        a.embeddings.as_ref(),
        a.config.as_ref(),
    ])?;
    let file = load_settings(&mut run, a.config.as_ref(), &["format"])?;
    let s = file.overlay(&Settings {
        format: a.format.clone(),
        ..Settings::default()
    });
    let format = text_format(&s)?;
    let config = json!({"format": format_name(format)});

    let mut body = json!({});
    if let Some(p) = &a.instances {
        let instances = load_instances(&mut run, p)?;
        let n_tokens: usize = instances.iter().map(|i| i.tokens.len()).sum();
        let inventory = SenseInventory::from_training(&instances);
        let mut per_lemma = BTreeMap::new();
        for (lemma, group) in corpus::group_by_lemma(instances.clone()) {
            per_lemma.insert(
                lemma.clone(),
                json!({
                    "instances": group.len(),
                    "senses": inventory.senses(&lemma).map_or(0, <[String]>::len),
                    "unlabeled": group.iter().filter(|i| i.gold.is_empty()).count(),
                }),
            );
        }
        body["instances"] = json!({
            "instances": instances.len(),
            "tokens": n_tokens,
            "lemmas": per_lemma.len(),
            "per_lemma": per_lemma,
        });
    }
    if let Some(p) = &a.embeddings {
        let table = load_table(&mut run, p, format)?;
        let stdevs = table.column_stdevs().map_err(data)?;
        let min = stdevs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = stdevs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        body["embeddings"] = json!({
            "words": table.len(),
            "dim": table.dim(),
            "min_column_stdev": min,
            "max_column_stdev": max,
        });
    }
    run.print(body, &config, json!({}));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        std::iter::once("wsdkit")
            .chain(s.split_whitespace())
            .map(str::to_string)
            .collect()
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(dispatch(&argv("frobnicate")), EXIT_USAGE);
        assert_eq!(dispatch(&argv("")), EXIT_USAGE);
        assert_eq!(
            dispatch(&argv("score --pred missing.jsonl --gold missing.jsonl")),
            EXIT_USAGE
        );
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(dispatch(&argv("--help")), EXIT_OK);
    }

    #[test]
    fn settings_overlay_prefers_flags() {
        let file = Settings {
            sigma: Some(0.2),
            epochs: Some(3),
            ..Settings::default()
        };
        let flags = Settings {
            sigma: Some(0.05),
            ..Settings::default()
        };
        let s = file.overlay(&flags);
        assert_eq!(s.sigma, Some(0.05));
        assert_eq!(s.epochs, Some(3));
    }

    #[test]
    fn config_rejects_unused_keys() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"epochs": 3}"#).unwrap();
        let mut run = Run::new("scale-embeddings");
        let err = load_settings(&mut run, Some(&cfg), &["sigma"]).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
        fs::write(&cfg, r#"{"sigma": 0.3}"#).unwrap();
        let s = load_settings(&mut run, Some(&cfg), &["sigma"]).unwrap();
        assert_eq!(s.sigma, Some(0.3));
    }
}
