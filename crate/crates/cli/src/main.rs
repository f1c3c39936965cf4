use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use topicvec::classify::{compare_reports, group_kfold, z_test, EvalReport};
use topicvec::corpus::{load_documents, Corpus, PreprocessConfig};
use topicvec::embedding::{EmbeddingModel, DEFAULT_IMPORT_CAP};
use topicvec::features::{featurize, Scheme, TfIdf};
use topicvec::fingerprint::derive_seed;
use topicvec::hybrid::induce_topics;
use topicvec::lda::LdaModel;
use topicvec::pipeline::{evaluate_with_models, train_scheme_models, RunConfig, SchemeModels, LDA_FILE};
use topicvec::{Error, Result};

const CONFIG_SNAPSHOT: &str = "run.cfg";

/// A failed command and whether it was a usage or I/O problem (exit 2)
/// rather than a domain error (exit 1).
struct Failure {
    error: Error,
    usage: bool,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let usage = error.is_io();
        Failure { error, usage }
    }
}

fn usage(error: Error) -> Failure {
    Failure { error, usage: true }
}

type Outcome = std::result::Result<(), Failure>;

#[derive(Parser)]
#[command(name = "topicvec", version, about = "Topic models, word embeddings and their hybrids for transcript classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize and filter raw transcripts into a corpus archive.
    Preprocess(PreprocessArgs),
    /// Train the models a feature scheme needs.
    Train(TrainArgs),
    /// Write a topic-induced corpus archive.
    Induce(InduceArgs),
    /// Compute document features as TSV.
    Featurize(FeaturizeArgs),
    /// Group k-fold cross-validation of one scheme.
    Evaluate(EvaluateArgs),
    /// Two-proportion Z-test.
    Significance(SignificanceArgs),
    /// Nearest neighbors of a word or topic symbol.
    Neighbors(NeighborsArgs),
    /// Top words per topic of a topic model.
    ExportTopics(ExportTopicsArgs),
    /// Two-dimensional PCA projection of selected symbols.
    #[command(name = "project-2d")]
    Project2d(ProjectArgs),
}

/// Options shared by every command that reads a run configuration.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs single-threaded and bit-reproducible.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    pca_drop_first: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> std::result::Result<RunConfig, Failure> {
        self.try_resolve().map_err(usage)
    }

    fn try_resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::parse(&read(p)?, &p.display().to_string())?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("expected KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("threads", self.threads.map(|v| v.to_string())),
            ("scheme", self.scheme.clone()),
            ("topics", self.topics.map(|v| v.to_string())),
            ("dim", self.dim.map(|v| v.to_string())),
            ("iterations", self.iterations.map(|v| v.to_string())),
            ("folds", self.folds.map(|v| v.to_string())),
            ("classifier", self.classifier.clone()),
            ("min_count", self.min_count.map(|v| v.to_string())),
            ("pca_drop_first", self.pca_drop_first.then(|| "true".to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        cfg.resolve()
    }
}

#[derive(Args)]
struct PreprocessArgs {
    /// A `.jsonl` file, a transcript file or a directory of `.cha` / `.txt` files.
    #[arg(long)]
    input: PathBuf,
    /// Archive directory to create.
    #[arg(long)]
    output: PathBuf,
    /// Replacement stop-word list, one word per line.
    #[arg(long)]
    stop_list: Option<PathBuf>,
    #[arg(long, default_value = "custom")]
    stop_list_version: String,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus archive the models are trained on.
    #[arg(long)]
    corpus: PathBuf,
    /// Model directory to create.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct InduceArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Topic model file or a model directory containing one.
    #[arg(long)]
    lda: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Model directory written by `train`; not needed for tf-idf.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Output TSV; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Labeled corpus archive.
    #[arg(long)]
    corpus: PathBuf,
    /// Model directory written by `train`. Without it, models are trained first.
    #[arg(long, conflicts_with = "unlabeled")]
    models: Option<PathBuf>,
    /// Separate corpus archive for model training.
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    /// Report directory to create.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SignificanceArgs {
    #[arg(long, requires_all = ["p2", "n"], conflicts_with_all = ["report_a", "report_b"])]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    n: Option<i64>,
    /// Two evaluation reports over the same documents.
    #[arg(long, requires = "report_b")]
    report_a: Option<PathBuf>,
    #[arg(long)]
    report_b: Option<PathBuf>,
}

#[derive(Args)]
struct NeighborsArgs {
    /// Embedding model file or a model directory.
    #[arg(long)]
    model: PathBuf,
    /// Read the model as word2vec text format.
    #[arg(long)]
    text: bool,
    #[arg(long)]
    symbol: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ExportTopicsArgs {
    /// Topic model file or a model directory.
    #[arg(long)]
    lda: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    text: bool,
    /// Comma-separated symbols.
    #[arg(long, value_delimiter = ',', required = true)]
    symbols: Vec<String>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn snapshot(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write(&dir.join(CONFIG_SNAPSHOT), &cfg.to_text())
}

fn stdout(body: &str) -> Result<()> {
    io::stdout()
        .lock()
        .write_all(body.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn model_path(path: &Path, file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file)
    } else {
        path.to_path_buf()
    }
}

fn load_embedding(path: &Path, text: bool) -> Result<EmbeddingModel> {
    let p = model_path(path, topicvec::pipeline::EMBEDDING_FILE);
    if text {
        EmbeddingModel::import_text(&p, DEFAULT_IMPORT_CAP)
    } else {
        EmbeddingModel::load(&p)
    }
}

fn preprocess(a: &PreprocessArgs) -> Outcome {
    let cfg = a.config.resolve()?;
    let pre = match &a.stop_list {
        Some(p) => PreprocessConfig::load_stop_list(p, &a.stop_list_version)?,
        None => PreprocessConfig::default(),
    };
    let docs = load_documents(&a.input, &pre)?;
    info!("{} documents from {}", docs.len(), a.input.display());
    let corpus = Corpus::build(docs, cfg.min_count, &pre.stop_list_version)?;
    corpus.write_archive(&a.output)?;
    Ok(snapshot(&a.output, &cfg)?)
}

fn train(a: &TrainArgs) -> Outcome {
    let mut cfg = a.config.resolve()?;
    cfg.corpus = a.corpus.display().to_string();
    cfg.output = a.output.display().to_string();
    let scheme = cfg.scheme()?;
    if scheme == Scheme::TfIdf {
        return Err(Failure::from(Error::InvalidArgument(
            "tf-idf is fitted per fold during evaluation; there is no model to train".into(),
        )));
    }
    let corpus = Corpus::read_archive(&a.corpus)?;
    let models = train_scheme_models(&cfg, scheme, &corpus.documents)?;
    create_dir(&a.output)?;
    for p in models.save(&a.output)? {
        info!("wrote {}", p.display());
    }
    Ok(snapshot(&a.output, &cfg)?)
}

fn induce(a: &InduceArgs) -> Outcome {
    let mut cfg = a.config.resolve()?;
    cfg.corpus = a.corpus.display().to_string();
    cfg.output = a.output.display().to_string();
    let corpus = Corpus::read_archive(&a.corpus)?;
    let lda = LdaModel::load(&model_path(&a.lda, LDA_FILE))?;
    let aug = induce_topics(&corpus.documents, &lda, &cfg.induction_config())?;
    info!(
        "{} of {} tokens replaced over {} passes",
        aug.replaced,
        aug.token_count(),
        aug.repetitions
    );
    aug.into_corpus(cfg.min_count, &corpus.stop_list_version)?
        .write_archive(&a.output)?;
    Ok(snapshot(&a.output, &cfg)?)
}

fn featurize_cmd(a: &FeaturizeArgs) -> Outcome {
    let cfg = a.config.resolve()?;
    let scheme = cfg.scheme()?;
    let corpus = Corpus::read_archive(&a.corpus)?;
    let features = if scheme == Scheme::TfIdf {
        TfIdf::fit(&corpus.documents, cfg.tfidf_top_n)?.transform(&corpus.documents, cfg.parallelism())?
    } else {
        let dir = a
            .models
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("scheme {scheme} needs --models")))?;
        let models = SchemeModels::load(dir, scheme, &cfg)?;
        featurize(scheme, &corpus.documents, &models.sources(), cfg.parallelism())?
    };
    let mut body = Vec::new();
    features.write_tsv(&mut body)?;
    let body = String::from_utf8(body).expect("features are written as UTF-8");
    match &a.output {
        Some(p) => write(p, &body)?,
        None => stdout(&body)?,
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Outcome {
    let mut cfg = a.config.resolve()?;
    cfg.corpus = a.corpus.display().to_string();
    cfg.output = a.output.display().to_string();
    let labeled = Corpus::read_archive(&a.corpus)?.documents;
    if labeled.iter().any(|d| d.label.is_none()) {
        return Err(Failure::from(Error::InvalidArgument(format!(
            "{} contains unlabeled documents",
            a.corpus.display()
        ))));
    }
    let scheme = cfg.scheme()?;
    let models = match (&a.models, &a.unlabeled) {
        (Some(dir), _) => SchemeModels::load(dir, scheme, &cfg)?,
        (None, Some(u)) => {
            cfg.unlabeled = u.display().to_string();
            train_scheme_models(&cfg, scheme, &Corpus::read_archive(u)?.documents)?
        }
        (None, None) => train_scheme_models(&cfg, scheme, &labeled)?,
    };
    let report = evaluate_with_models(&cfg, &labeled, &models)?;
    let plan = group_kfold(&labeled, cfg.folds, derive_seed(cfg.seed, "folds"))?;

    create_dir(&a.output)?;
    write(&a.output.join("report.json"), &report.to_json()?)?;
    write(&a.output.join("summary.tsv"), &report.summary_tsv())?;
    write(&a.output.join("folds.tsv"), &report.folds_tsv())?;
    write(&a.output.join("classes.tsv"), &plan.class_table(&labeled))?;
    snapshot(&a.output, &cfg)?;
    Ok(stdout(&report.summary_tsv())?)
}

fn significance(a: &SignificanceArgs) -> Outcome {
    let (z, p) = match (&a.report_a, &a.report_b, a.p1, a.p2, a.n) {
        (Some(ra), Some(rb), ..) => {
            let ea = EvalReport::from_json(&read(ra)?)?;
            let eb = EvalReport::from_json(&read(rb)?)?;
            compare_reports(&ea, &eb)?
        }
        (None, None, Some(p1), Some(p2), Some(n)) => {
            if n <= 0 {
                return Err(Failure::from(Error::InvalidArgument(format!("n must be positive, got {n}"))));
            }
            z_test(p1, p2, n as usize)?
        }
        _ => {
            return Err(usage(Error::InvalidArgument(
                "give --p1 --p2 --n or --report-a --report-b".into(),
            )))
        }
    };
    Ok(stdout(&format!("z\tp_value\n{z}\t{p}\n"))?)
}

fn neighbors(a: &NeighborsArgs) -> Outcome {
    let model = load_embedding(&a.model, a.text)?;
    let hits = model.nearest_neighbors(&a.symbol, a.k, topicvec::par::Parallelism::from_threads(a.threads))?;
    let mut out = String::from("rank\tsymbol\tcosine\n");
    for (i, (s, c)) in hits.iter().enumerate() {
        out.push_str(&format!("{}\t{s}\t{c}\n", i + 1));
    }
    Ok(stdout(&out)?)
}

fn export_topics(a: &ExportTopicsArgs) -> Outcome {
    let lda = LdaModel::load(&model_path(&a.lda, LDA_FILE))?;
    let phi = lda.topic_word_distribution();
    let vocab = lda.vocabulary();
    let mut out = String::from("topic\trank\tword\tprobability\n");
    for t in 0..phi.rows() {
        let row = phi.row(t);
        let mut ids: Vec<usize> = (0..row.len()).filter(|&i| i as u32 != vocab.unk_id()).collect();
        ids.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
        for (r, &i) in ids.iter().take(a.top).enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                topicvec::hybrid::topic_symbol(t + 1),
                r + 1,
                vocab.word(i as u32),
                row[i]
            ));
        }
    }
    Ok(stdout(&out)?)
}

fn project_2d(a: &ProjectArgs) -> Outcome {
    let model = load_embedding(&a.model, a.text)?;
    let points = model.project_2d(&a.symbols)?;
    let mut out = String::from("symbol\tx\ty\n");
    for (s, x, y) in points {
        out.push_str(&format!("{s}\t{x}\t{y}\n"));
    }
    Ok(stdout(&out)?)
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Induce(a) => induce(a),
        Command::Featurize(a) => featurize_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Significance(a) => significance(a),
        Command::Neighbors(a) => neighbors(a),
        Command::ExportTopics(a) => export_topics(a),
        Command::Project2d(a) => project_2d(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            if f.usage {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
