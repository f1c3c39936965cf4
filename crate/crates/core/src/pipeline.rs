//! Run configuration and the end-to-end classification experiment.
//!
//! A [`RunConfig`] is a flat `key = value` record. Every random component
//! draws its seed from the root seed via [`derive_seed`] with a fixed name:
//! `lda`, `skipgram`, `induce`, `folds`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classify::{cross_validate, CvOptions, EvalReport, FoldFeatures, LinearKind, TrainOptions};
use crate::corpus::{Corpus, Document, FROZEN_STOP_LIST_VERSION};
use crate::embedding::{train_skipgram, EmbeddingModel, SkipGramConfig, DEFAULT_IMPORT_CAP};
use crate::error::{Error, Result};
use crate::features::{featurize, Scheme, Sources};
use crate::fingerprint::derive_seed;
use crate::hybrid::{induce_topics, train_topic_induced, train_topical_embedding, InductionConfig, TopicVectorSet};
use crate::lda::{train_lda, LdaConfig, LdaModel};
use crate::par::Parallelism;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub scheme: String,
    pub corpus: String,
    /// Optional unlabeled corpus for the unsupervised models.
    pub unlabeled: String,
    pub output: String,
    /// word2vec text file used instead of training skip-gram; empty to train.
    pub pretrained: String,

    pub topics: usize,
    pub lda_batch: usize,
    pub lda_passes: usize,
    pub lda_kappa: f64,
    pub lda_tau0: f64,

    /// 0 picks 400 for topic-induced schemes and 300 otherwise.
    pub dim: usize,
    pub window: usize,
    pub iterations: usize,
    pub negative: usize,
    pub min_count: u64,
    pub lr_start: f64,
    pub lr_end: f64,

    pub induce_p: f64,
    pub induce_threshold: f64,
    pub induce_repetitions: usize,
    pub normalized_divisor: bool,

    pub folds: usize,
    pub classifier: String,
    pub c: f64,
    pub tolerance: f64,
    pub pca_drop_first: bool,
    pub tfidf_top_n: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 1,
            scheme: "concat".into(),
            corpus: String::new(),
            unlabeled: String::new(),
            output: String::new(),
            pretrained: String::new(),
            topics: 5,
            lda_batch: 256,
            lda_passes: 10,
            lda_kappa: 0.7,
            lda_tau0: 1.0,
            dim: 0,
            window: 2,
            iterations: 100,
            negative: 5,
            min_count: 2,
            lr_start: 0.025,
            lr_end: 0.0001,
            induce_p: 0.5,
            induce_threshold: 0.2,
            induce_repetitions: 10,
            normalized_divisor: false,
            folds: 5,
            classifier: "svm".into(),
            c: 1.0,
            tolerance: 1e-5,
            pca_drop_first: false,
            tfidf_top_n: 1000,
        }
    }
}

impl RunConfig {
    pub fn keys() -> Vec<String> {
        match serde_json::to_value(RunConfig::default()) {
            Ok(Value::Object(m)) => m.keys().cloned().collect(),
            _ => unreachable!("config serializes to an object"),
        }
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(name, i + 1, "expected key = value"))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::format(name, i + 1, e.to_string()))?;
        }
        cfg.resolve()
    }

    /// Overrides one key; the value is parsed according to the key's type.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut map = match serde_json::to_value(&*self)? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        let slot = map
            .get_mut(key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown config key {key:?}")))?;
        let bad = || Error::InvalidArgument(format!("bad value {value:?} for {key}"));
        *slot = match slot {
            Value::String(_) => Value::String(value.to_string()),
            Value::Bool(_) => Value::Bool(value.parse().map_err(|_| bad())?),
            Value::Number(n) if n.is_f64() => {
                let x: f64 = value.parse().map_err(|_| bad())?;
                serde_json::Number::from_f64(x).map(Value::Number).ok_or_else(bad)?
            }
            Value::Number(_) => Value::Number(value.parse::<u64>().map_err(|_| bad())?.into()),
            _ => return Err(bad()),
        };
        *self = serde_json::from_value(Value::Object(map))?;
        Ok(())
    }

    /// Fills automatic values and validates selectors.
    pub fn resolve(mut self) -> Result<Self> {
        let scheme = self.scheme()?;
        self.classifier()?;
        if self.dim == 0 {
            self.dim = if matches!(scheme, Scheme::TopicInduced | Scheme::TopicInducedPlusTopic) {
                400
            } else {
                300
            };
        }
        Ok(self)
    }

    pub fn scheme(&self) -> Result<Scheme> {
        self.scheme.parse()
    }

    pub fn classifier(&self) -> Result<LinearKind> {
        self.classifier.parse()
    }

    pub fn parallelism(&self) -> Parallelism {
        Parallelism::from_threads(self.threads)
    }

    /// Sorted `key = value` lines; parsing this text reproduces the config.
    pub fn to_text(&self) -> String {
        let map: BTreeMap<String, Value> = match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m.into_iter().collect(),
            _ => unreachable!("config serializes to an object"),
        };
        let mut out = String::new();
        for (k, v) in map {
            let v = match v {
                Value::String(s) => s,
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn lda_config(&self) -> LdaConfig {
        LdaConfig {
            topics: self.topics,
            batch_size: self.lda_batch,
            kappa: self.lda_kappa,
            tau0: self.lda_tau0,
            passes: self.lda_passes,
            seed: derive_seed(self.seed, "lda"),
            parallelism: self.parallelism(),
            ..Default::default()
        }
    }

    pub fn skipgram_config(&self) -> SkipGramConfig {
        SkipGramConfig {
            dim: if self.dim == 0 { 300 } else { self.dim },
            window: self.window,
            iterations: self.iterations,
            negative_samples: self.negative,
            min_count: self.min_count,
            learning_rate: (self.lr_start, self.lr_end),
            seed: derive_seed(self.seed, "skipgram"),
            threads: self.threads,
        }
    }

    pub fn induction_config(&self) -> InductionConfig {
        InductionConfig {
            p_replace: self.induce_p,
            threshold: self.induce_threshold,
            repetitions: self.induce_repetitions,
            seed: derive_seed(self.seed, "induce"),
            parallelism: self.parallelism(),
        }
    }

    pub fn cv_options(&self) -> Result<CvOptions> {
        Ok(CvOptions {
            folds: self.folds,
            seed: self.seed,
            pca_drop_first: self.pca_drop_first,
            train: TrainOptions {
                kind: self.classifier()?,
                c: self.c,
                tolerance: self.tolerance,
                ..Default::default()
            },
            parallelism: self.parallelism(),
        })
    }
}

/// Models trained for one scheme.
#[derive(Default)]
pub struct SchemeModels {
    pub lda: Option<LdaModel>,
    pub embedding: Option<EmbeddingModel>,
    pub topic_vectors: Option<TopicVectorSet>,
}

pub const LDA_FILE: &str = "lda.model";
pub const EMBEDDING_FILE: &str = "embedding.model";

impl SchemeModels {
    pub fn sources(&self) -> Sources<'_> {
        Sources {
            lda: self.lda.as_ref(),
            embedding: self.embedding.as_ref(),
            topic_vectors: self.topic_vectors.as_ref(),
        }
    }

    /// Writes whichever models are present; topic vectors are rebuilt on load.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        if let Some(m) = &self.lda {
            let p = dir.join(LDA_FILE);
            m.save(&p)?;
            written.push(p);
        }
        if let Some(m) = &self.embedding {
            let p = dir.join(EMBEDDING_FILE);
            m.save(&p)?;
            written.push(p);
        }
        Ok(written)
    }

    /// Loads the models `scheme` needs from `dir`.
    pub fn load(dir: &Path, scheme: Scheme, cfg: &RunConfig) -> Result<Self> {
        let mut out = SchemeModels::default();
        if scheme.needs_lda() {
            out.lda = Some(LdaModel::load(&dir.join(LDA_FILE))?);
        }
        if scheme.needs_embedding() {
            out.embedding = Some(EmbeddingModel::load(&dir.join(EMBEDDING_FILE))?);
        }
        if scheme == Scheme::TopicVectors {
            out.topic_vectors = Some(TopicVectorSet::build(
                out.lda.as_ref().expect("loaded above"),
                out.embedding.as_ref().expect("loaded above"),
                cfg.normalized_divisor,
                cfg.parallelism(),
            )?);
        }
        Ok(out)
    }
}

/// Trains whatever `scheme` needs on `docs`; labels are never read.
pub fn train_scheme_models(cfg: &RunConfig, scheme: Scheme, docs: &[Document]) -> Result<SchemeModels> {
    let mut out = SchemeModels::default();
    if scheme == Scheme::TfIdf {
        return Ok(out);
    }
    if !cfg.pretrained.is_empty() && !matches!(scheme, Scheme::Word2Vec | Scheme::Concat | Scheme::TopicVectors) {
        return Err(Error::InvalidArgument(format!("scheme {scheme} trains its own embedding; pretrained vectors do not apply")));
    }
    let corpus = Corpus::build(docs.to_vec(), cfg.min_count, FROZEN_STOP_LIST_VERSION)?;
    if scheme.needs_lda() || matches!(scheme, Scheme::Topical | Scheme::TopicInduced) {
        info!("training topic model with {} topics", cfg.topics);
        out.lda = Some(train_lda(&corpus, &cfg.lda_config())?.0);
    }
    let sg = cfg.skipgram_config();
    out.embedding = match scheme {
        Scheme::Lda | Scheme::TfIdf => None,
        Scheme::Word2Vec | Scheme::Concat | Scheme::TopicVectors if !cfg.pretrained.is_empty() => {
            Some(EmbeddingModel::import_text(Path::new(&cfg.pretrained), DEFAULT_IMPORT_CAP)?)
        }
        Scheme::Word2Vec | Scheme::Concat | Scheme::TopicVectors => {
            let tokens: Vec<&[String]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
            Some(train_skipgram(&tokens, &sg)?.0)
        }
        Scheme::Topical | Scheme::TopicalPlusTopic => {
            Some(train_topical_embedding(&corpus, out.lda.as_ref().expect("trained above"), &sg)?.0)
        }
        Scheme::TopicInduced | Scheme::TopicInducedPlusTopic => {
            let lda = out.lda.as_ref().expect("trained above");
            let aug = induce_topics(docs, lda, &cfg.induction_config())?;
            Some(train_topic_induced(&aug, &sg)?.0)
        }
    };
    if scheme == Scheme::TopicVectors {
        out.topic_vectors = Some(TopicVectorSet::build(
            out.lda.as_ref().expect("trained above"),
            out.embedding.as_ref().expect("trained above"),
            cfg.normalized_divisor,
            cfg.parallelism(),
        )?);
    }
    // Scheme::Topical and TopicInduced use the model only for training
    Ok(out)
}

/// Trains the scheme's models on `unlabeled` (or on `labeled` when empty) and
/// cross-validates on `labeled`.
pub fn run_experiment(cfg: &RunConfig, labeled: &[Document], unlabeled: &[Document]) -> Result<EvalReport> {
    let scheme = cfg.scheme()?;
    if labeled.iter().any(|d| d.label.is_none()) {
        return Err(Error::InvalidArgument("evaluation needs a fully labeled corpus".into()));
    }
    let model_docs = if unlabeled.is_empty() { labeled } else { unlabeled };
    let models = train_scheme_models(cfg, scheme, model_docs)?;
    evaluate_with_models(cfg, labeled, &models)
}

/// Cross-validates the configured scheme using already trained models.
pub fn evaluate_with_models(cfg: &RunConfig, labeled: &[Document], models: &SchemeModels) -> Result<EvalReport> {
    let scheme = cfg.scheme()?;
    if labeled.iter().any(|d| d.label.is_none()) {
        return Err(Error::InvalidArgument("evaluation needs a fully labeled corpus".into()));
    }
    let opts = cfg.cv_options()?;
    if scheme == Scheme::TfIdf {
        return cross_validate(labeled, FoldFeatures::TfIdf { top_n: cfg.tfidf_top_n }, scheme.name(), &opts);
    }
    let features = featurize(scheme, labeled, &models.sources(), cfg.parallelism())?;
    info!("{} features: {} x {}", scheme, features.len(), features.dim());
    cross_validate(labeled, FoldFeatures::Fixed(&features), scheme.name(), &opts)
}
