//! Latent Dirichlet allocation trained with online variational Bayes.
//!
//! Mini-batches are processed in corpus order. Each update runs a per-document
//! E-step (optionally in parallel), sums the sufficient statistics in document
//! order, and blends the batch estimate into `lambda` with step size
//! `rho_t = (tau0 + t)^-kappa`. Results are bitwise identical across
//! parallelism modes.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::corpus::{Corpus, Vocabulary, UNK_ID};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::linalg::Matrix;
use crate::par::{self, Parallelism};
use crate::special::{digamma, dirichlet_expectation, ln_gamma};

const MAGIC: &[u8; 4] = b"TVLD";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub topics: usize,
    pub batch_size: usize,
    /// Learning-rate decay exponent, in (0.5, 1].
    pub kappa: f64,
    /// Learning-rate offset; down-weights early updates.
    pub tau0: f64,
    pub passes: usize,
    /// Symmetric document-topic prior; `None` means 1/K.
    pub alpha: Option<f64>,
    /// Topic-word prior; `None` means 1/K.
    pub eta: Option<f64>,
    pub seed: u64,
    pub e_step_max_iter: usize,
    pub e_step_tol: f64,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            topics: 5,
            batch_size: 256,
            kappa: 0.7,
            tau0: 1.0,
            passes: 10,
            alpha: None,
            eta: None,
            seed: 0,
            e_step_max_iter: 100,
            e_step_tol: 1e-3,
            parallelism: Parallelism::Sequential,
        }
    }
}

impl LdaConfig {
    pub fn with_topics(topics: usize) -> Self {
        LdaConfig {
            topics,
            ..Default::default()
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_str(&serde_json::to_string(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicDistribution {
    pub theta: Vec<f64>,
    /// Set when the document had no in-vocabulary tokens and `theta` is the prior mean.
    pub low_confidence: bool,
}

impl TopicDistribution {
    /// Most probable topic (0-based), ties going to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.theta.iter().enumerate() {
            if p > self.theta[best] {
                best = i;
            }
        }
        best
    }
}

/// Per-batch training record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    /// Approximate ELBO of each mini-batch, scaled to the full corpus.
    pub batch_bounds: Vec<f64>,
    pub skipped_empty: usize,
}

#[derive(Debug, Clone)]
pub struct LdaModel {
    lambda: Matrix,
    alpha: Vec<f64>,
    eta: f64,
    config_hash: Fingerprint,
    vocabulary: Vocabulary,
    exp_elog_beta: Matrix,
}

impl PartialEq for LdaModel {
    fn eq(&self, other: &Self) -> bool {
        self.lambda == other.lambda
            && self.alpha == other.alpha
            && self.eta == other.eta
            && self.config_hash == other.config_hash
            && self.vocabulary == other.vocabulary
    }
}

struct EStep {
    gamma: Vec<f64>,
    /// K × ids.len(), not yet multiplied by exp(E[log beta]).
    sstats: Vec<f64>,
}

/// Sparse bag of words: distinct ids with counts.
fn bag_of_words(doc: &[u32], vocab_size: usize) -> (Vec<usize>, Vec<f64>) {
    let mut ids: Vec<usize> = doc
        .iter()
        .map(|&w| w as usize)
        .filter(|&w| w != UNK_ID as usize && w < vocab_size)
        .collect();
    ids.sort_unstable();
    let mut uniq = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for w in ids {
        if uniq.last() == Some(&w) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            uniq.push(w);
            counts.push(1.0);
        }
    }
    (uniq, counts)
}

impl LdaModel {
    fn new(lambda: Matrix, alpha: Vec<f64>, eta: f64, config_hash: Fingerprint, vocabulary: Vocabulary) -> Self {
        let exp_elog_beta = exp_dirichlet_rows(&lambda);
        LdaModel {
            lambda,
            alpha,
            eta,
            config_hash,
            vocabulary,
            exp_elog_beta,
        }
    }

    /// Builds a model whose topic-word parameters are `scale · phi + eta`.
    ///
    /// Useful for fixtures where the generating distribution is known.
    pub fn from_topic_word(phi: &Matrix, scale: f64, alpha: f64, eta: f64, vocabulary: Vocabulary) -> Result<Self> {
        if phi.cols() != vocabulary.len() {
            return Err(Error::DimensionMismatch {
                expected: vocabulary.len(),
                actual: phi.cols(),
            });
        }
        if phi.rows() < 1 {
            return Err(Error::InvalidArgument("need at least one topic".into()));
        }
        if eta.is_nan() || alpha.is_nan() || eta <= 0.0 || alpha <= 0.0 {
            return Err(Error::InvalidArgument("alpha and eta must be positive".into()));
        }
        let data = phi.as_slice().iter().map(|p| scale * p + eta).collect();
        let lambda = Matrix::from_vec(phi.rows(), phi.cols(), data);
        Ok(Self::new(
            lambda,
            vec![alpha; phi.rows()],
            eta,
            Fingerprint::of_str("fixture"),
            vocabulary,
        ))
    }

    pub fn num_topics(&self) -> usize {
        self.lambda.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.lambda.cols()
    }

    pub fn lambda(&self) -> &Matrix {
        &self.lambda
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn config_hash(&self) -> Fingerprint {
        self.config_hash
    }

    /// Content hash over the serialized parameters.
    pub fn fingerprint(&self) -> Fingerprint {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        Fingerprint::of_bytes(&buf)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        self.vocabulary.encode(tokens)
    }

    fn e_step(&self, ids: &[usize], counts: &[f64], max_iter: usize, tol: f64) -> EStep {
        let k = self.num_topics();
        let total: f64 = counts.iter().sum();
        let mut gamma: Vec<f64> = self.alpha.iter().map(|a| a + total / k as f64).collect();
        let mut elog = vec![0.0; k];
        let mut exp_elog_theta = vec![0.0; k];
        let mut phinorm = vec![0.0; ids.len()];

        let refresh = |gamma: &[f64], elog: &mut [f64], ex: &mut [f64], phinorm: &mut [f64]| {
            dirichlet_expectation(gamma, elog);
            for (e, l) in ex.iter_mut().zip(elog.iter()) {
                *e = l.exp();
            }
            for (j, &w) in ids.iter().enumerate() {
                let mut s = 0.0;
                for t in 0..k {
                    s += ex[t] * self.exp_elog_beta.get(t, w);
                }
                phinorm[j] = s + 1e-100;
            }
        };
        refresh(&gamma, &mut elog, &mut exp_elog_theta, &mut phinorm);

        for _ in 0..max_iter {
            let mut change = 0.0;
            for t in 0..k {
                let mut acc = 0.0;
                for (j, &w) in ids.iter().enumerate() {
                    acc += counts[j] / phinorm[j] * self.exp_elog_beta.get(t, w);
                }
                let g = self.alpha[t] + exp_elog_theta[t] * acc;
                change += (g - gamma[t]).abs();
                gamma[t] = g;
            }
            refresh(&gamma, &mut elog, &mut exp_elog_theta, &mut phinorm);
            if change / (k as f64) < tol {
                break;
            }
        }

        let mut sstats = vec![0.0; k * ids.len()];
        for t in 0..k {
            for j in 0..ids.len() {
                sstats[t * ids.len() + j] = exp_elog_theta[t] * counts[j] / phinorm[j];
            }
        }
        EStep { gamma, sstats }
    }

    /// Posterior mean of the document's topic proportions.
    ///
    /// `UNK` tokens are ignored. A document with no usable tokens gets the
    /// normalized prior and `low_confidence = true`.
    pub fn infer_theta(&self, doc: &[u32]) -> TopicDistribution {
        self.infer_with(doc, 100, 1e-3)
    }

    fn infer_with(&self, doc: &[u32], max_iter: usize, tol: f64) -> TopicDistribution {
        let (ids, counts) = bag_of_words(doc, self.vocab_size());
        if ids.is_empty() {
            let s: f64 = self.alpha.iter().sum();
            return TopicDistribution {
                theta: self.alpha.iter().map(|a| a / s).collect(),
                low_confidence: true,
            };
        }
        let e = self.e_step(&ids, &counts, max_iter, tol);
        let s: f64 = e.gamma.iter().sum();
        TopicDistribution {
            theta: e.gamma.iter().map(|g| g / s).collect(),
            low_confidence: false,
        }
    }

    /// Row-normalized `lambda`: P(word | topic), K × V.
    pub fn topic_word_distribution(&self) -> Matrix {
        let mut phi = self.lambda.clone();
        for t in 0..phi.rows() {
            let row = phi.row_mut(t);
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        phi
    }

    /// P(topic | word), V × K: each column of P(word | topic) renormalized per word.
    pub fn topic_given_word(&self) -> TopicGivenWord {
        TopicGivenWord::from_topic_word(&self.topic_word_distribution())
    }

    /// Per-word variational bound on held-out documents, excluding the
    /// corpus-level topic term.
    pub fn held_out_bound(&self, docs: &[Vec<u32>]) -> f64 {
        let mut score = 0.0;
        let mut words = 0.0;
        for doc in docs {
            let (ids, counts) = bag_of_words(doc, self.vocab_size());
            if ids.is_empty() {
                continue;
            }
            let e = self.e_step(&ids, &counts, 100, 1e-3);
            score += self.document_bound(&ids, &counts, &e.gamma);
            words += counts.iter().sum::<f64>();
        }
        if words == 0.0 {
            0.0
        } else {
            score / words
        }
    }

    fn elog_beta(&self) -> Matrix {
        let mut out = Matrix::zeros(self.lambda.rows(), self.lambda.cols());
        for t in 0..self.lambda.rows() {
            dirichlet_expectation(self.lambda.row(t), out.row_mut(t));
        }
        out
    }

    /// E[log p(doc | theta, beta)] + E[log p(theta | alpha)] - E[log q(theta | gamma)].
    fn document_bound(&self, ids: &[usize], counts: &[f64], gamma: &[f64]) -> f64 {
        let k = self.num_topics();
        let mut elog_theta = vec![0.0; k];
        dirichlet_expectation(gamma, &mut elog_theta);
        let mut score = 0.0;
        for (j, &w) in ids.iter().enumerate() {
            let mut terms = Vec::with_capacity(k);
            for t in 0..k {
                terms.push(elog_theta[t] + self.exp_elog_beta.get(t, w).ln());
            }
            let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            score += counts[j] * lse;
        }
        let alpha_sum: f64 = self.alpha.iter().sum();
        let gamma_sum: f64 = gamma.iter().sum();
        for t in 0..k {
            score += (self.alpha[t] - gamma[t]) * elog_theta[t] + ln_gamma(gamma[t]) - ln_gamma(self.alpha[t]);
        }
        score += ln_gamma(alpha_sum) - ln_gamma(gamma_sum);
        score
    }

    /// E[log p(beta | eta) - log q(beta | lambda)].
    fn topic_bound(&self) -> f64 {
        let elog_beta = self.elog_beta();
        let v = self.vocab_size() as f64;
        let mut score = 0.0;
        for t in 0..self.num_topics() {
            let row = self.lambda.row(t);
            for (l, e) in row.iter().zip(elog_beta.row(t)) {
                score += (self.eta - l) * e + ln_gamma(*l) - ln_gamma(self.eta);
            }
            score += ln_gamma(self.eta * v) - ln_gamma(row.iter().sum());
        }
        score
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Header (magic, version, K, V, alpha, eta, config hash), row-major lambda,
    /// then the vocabulary block (min_count, then word and count per id).
    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = BinWriter::new(out);
        w.bytes(MAGIC)?;
        w.u32(FORMAT_VERSION)?;
        w.u32(self.num_topics() as u32)?;
        w.u32(self.vocab_size() as u32)?;
        w.f64s(&self.alpha)?;
        w.f64(self.eta)?;
        w.u64(self.config_hash.0)?;
        w.f64s(self.lambda.as_slice())?;
        w.u64(self.vocabulary.min_count())?;
        for (word, &c) in self.vocabulary.words().iter().zip(self.vocabulary.counts()) {
            w.str(word)?;
            w.u64(c)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: std::io::Read>(input: R) -> std::io::Result<Self> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut r = BinReader::new(input);
        r.expect_magic(MAGIC)?;
        if r.u32()? != FORMAT_VERSION {
            return Err(bad("unsupported LDA model version"));
        }
        let k = r.u32()? as usize;
        let v = r.u32()? as usize;
        if k == 0 || v == 0 || k.saturating_mul(v) > (1 << 31) {
            return Err(bad("implausible model shape"));
        }
        let alpha = r.f64s(k)?;
        let eta = r.f64()?;
        let config_hash = Fingerprint(r.u64()?);
        let lambda = Matrix::from_vec(k, v, r.f64s(k * v)?);
        let min_count = r.u64()?;
        let mut words = Vec::with_capacity(v);
        let mut counts = Vec::with_capacity(v);
        for _ in 0..v {
            words.push(r.str()?);
            counts.push(r.u64()?);
        }
        if words.first().map(String::as_str) != Some(crate::corpus::UNK) {
            return Err(bad("vocabulary block must start with UNK"));
        }
        Ok(Self::new(
            lambda,
            alpha,
            eta,
            config_hash,
            Vocabulary::from_parts(words, counts, min_count),
        ))
    }
}

fn exp_dirichlet_rows(lambda: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(lambda.rows(), lambda.cols());
    for t in 0..lambda.rows() {
        let row = lambda.row(t);
        let total = digamma(row.iter().sum());
        for (o, &l) in out.row_mut(t).iter_mut().zip(row) {
            *o = (digamma(l) - total).exp();
        }
    }
    out
}

/// P(topic | word) rows, V × K.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicGivenWord {
    pub probs: Matrix,
    /// Words with zero mass in every topic; their rows are uniform.
    pub flagged: Vec<u32>,
}

impl TopicGivenWord {
    pub fn from_topic_word(phi: &Matrix) -> Self {
        let (k, v) = (phi.rows(), phi.cols());
        let mut probs = Matrix::zeros(v, k);
        let mut flagged = Vec::new();
        for w in 0..v {
            let total: f64 = (0..k).map(|t| phi.get(t, w)).sum();
            let row = probs.row_mut(w);
            if total > 0.0 {
                for (t, r) in row.iter_mut().enumerate() {
                    *r = phi.get(t, w) / total;
                }
            } else {
                row.iter_mut().for_each(|r| *r = 1.0 / k as f64);
                flagged.push(w as u32);
            }
        }
        TopicGivenWord { probs, flagged }
    }

    pub fn row(&self, word: u32) -> &[f64] {
        self.probs.row(word as usize)
    }

    pub fn num_topics(&self) -> usize {
        self.probs.cols()
    }
}

/// Trains a topic model on a corpus; `UNK` occurrences never reach the model.
pub fn train_lda(corpus: &Corpus, config: &LdaConfig) -> Result<(LdaModel, TrainingTrace)> {
    train_on_ids(&corpus.topic_model_documents(), corpus.vocabulary.clone(), config)
}

/// Trains on pre-encoded documents against `vocabulary`.
pub fn train_on_ids(docs: &[Vec<u32>], vocabulary: Vocabulary, config: &LdaConfig) -> Result<(LdaModel, TrainingTrace)> {
    let k = config.topics;
    let v = vocabulary.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 topics, got {k}")));
    }
    if k > v {
        return Err(Error::InvalidArgument(format!(
            "{k} topics exceed the vocabulary size {v}"
        )));
    }
    if config.batch_size == 0 || config.passes == 0 {
        return Err(Error::InvalidArgument("batch_size and passes must be positive".into()));
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let bags: Vec<(Vec<usize>, Vec<f64>)> = docs
        .iter()
        .map(|d| bag_of_words(d, v))
        .filter(|(ids, _)| !ids.is_empty())
        .collect();
    let skipped = docs.len() - bags.len();
    if skipped > 0 {
        warn!("skipping {skipped} empty document(s) in topic-model training");
    }
    if bags.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let alpha = config.alpha.unwrap_or(1.0 / k as f64);
    let eta = config.eta.unwrap_or(1.0 / k as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Gamma::new(100.0, 0.01).expect("valid gamma");
    let lambda = Matrix::from_vec(k, v, (0..k * v).map(|_| init.sample(&mut rng)).collect());
    let mut model = LdaModel::new(lambda, vec![alpha; k], eta, config.fingerprint(), vocabulary);

    let total_docs = bags.len() as f64;
    let mut trace = TrainingTrace {
        skipped_empty: skipped,
        ..Default::default()
    };
    let mut updates = 0usize;
    for _pass in 0..config.passes {
        for batch in bags.chunks(config.batch_size) {
            let rho = (config.tau0 + updates as f64).powf(-config.kappa);
            let steps = par::map(config.parallelism, batch, |(ids, counts)| {
                model.e_step(ids, counts, config.e_step_max_iter, config.e_step_tol)
            });

            let mut doc_score = 0.0;
            for ((ids, counts), e) in batch.iter().zip(&steps) {
                doc_score += model.document_bound(ids, counts, &e.gamma);
            }
            let bound = doc_score * total_docs / batch.len() as f64 + model.topic_bound();
            trace.batch_bounds.push(bound);

            let mut sstats = Matrix::zeros(k, v);
            for ((ids, _), e) in batch.iter().zip(&steps) {
                for t in 0..k {
                    let row = sstats.row_mut(t);
                    for (j, &w) in ids.iter().enumerate() {
                        row[w] += e.sstats[t * ids.len() + j];
                    }
                }
            }
            let scale = total_docs / batch.len() as f64;
            let mut lambda = model.lambda.clone();
            for t in 0..k {
                let beta = model.exp_elog_beta.row(t);
                let ss = sstats.row(t);
                for (w, l) in lambda.row_mut(t).iter_mut().enumerate() {
                    let target = eta + scale * ss[w] * beta[w];
                    *l = (1.0 - rho) * *l + rho * target;
                }
            }
            debug_assert!(lambda.is_finite());
            model.exp_elog_beta = exp_dirichlet_rows(&lambda);
            model.lambda = lambda;
            updates += 1;
        }
    }
    Ok((model, trace))
}

/// Minimal-total-variation greedy matching of learned topics to reference topics.
///
/// Returns `(reference index, learned index, TV distance)` per reference topic.
pub fn align_topics(reference: &Matrix, learned: &Matrix) -> Vec<(usize, usize, f64)> {
    let tv = |a: &[f64], b: &[f64]| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..reference.rows() {
        for j in 0..learned.rows() {
            pairs.push((tv(reference.row(i), learned.row(j)), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_ref = vec![false; reference.rows()];
    let mut used_learned = vec![false; learned.rows()];
    let mut out = Vec::new();
    for (d, i, j) in pairs {
        if !used_ref[i] && !used_learned[j] {
            used_ref[i] = true;
            used_learned[j] = true;
            out.push((i, j, d));
        }
    }
    out.sort_by_key(|p| p.0);
    out
}
