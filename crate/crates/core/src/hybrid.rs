//! Combinations of a topic model with word embeddings.
//!
//! * Topic vectors: each topic as a probability-weighted sum of word vectors,
//!   and documents as a theta-weighted sum of topic vectors.
//! * Topical embedding: skip-gram where a word's vector is its own row plus
//!   its `P(topic | word)`-weighted topic rows.
//! * Topic induction: tokens are randomly swapped for `topic_i` pseudo-words
//!   before ordinary skip-gram training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Vocabulary, UNK};
use crate::embedding::{train_rows, EmbeddingModel, SkipGramConfig, SkipGramReport, TrainingInput};
use crate::error::{Error, Result};
use crate::fingerprint::{derive_seed, Fingerprint};
use crate::lda::{LdaModel, TopicDistribution};
use crate::linalg::{axpy, Matrix};
use crate::par::{self, Parallelism};

/// `topic_i` for the 1-based topic index `i`.
pub fn topic_symbol(index: usize) -> String {
    format!("topic_{index}")
}

/// Parses `topic_i` back to its 1-based index.
pub fn parse_topic_symbol(symbol: &str) -> Option<usize> {
    let digits = symbol.strip_prefix("topic_")?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

// ---------------------------------------------------------------------------
// Topic vectors

/// Weighted sum `Σ p_i · W_i` divided by the number of weights, or by `Σ p_i`
/// when `normalized_divisor` is set.
pub fn topic_vector<S: AsRef<str>>(
    phi_row: &[f64],
    words: &[S],
    embeddings: &EmbeddingModel,
    normalized_divisor: bool,
) -> Result<Vec<f64>> {
    if phi_row.is_empty() {
        return Err(Error::InvalidArgument("empty vocabulary".into()));
    }
    if phi_row.len() != words.len() {
        return Err(Error::DimensionMismatch {
            expected: words.len(),
            actual: phi_row.len(),
        });
    }
    let mut out = vec![0.0; embeddings.dim()];
    for (p, w) in phi_row.iter().zip(words) {
        if *p != 0.0 {
            axpy(*p, embeddings.lookup(w.as_ref()), &mut out);
        }
    }
    let divisor = if normalized_divisor {
        phi_row.iter().sum()
    } else {
        phi_row.len() as f64
    };
    out.iter_mut().for_each(|x| *x /= divisor);
    Ok(out)
}

/// One embedding-space vector per topic.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicVectorSet {
    pub vectors: Matrix,
    pub source_lda: Fingerprint,
    pub source_embedding: Fingerprint,
    pub normalized_divisor: bool,
}

impl TopicVectorSet {
    pub fn build(lda: &LdaModel, embeddings: &EmbeddingModel, normalized_divisor: bool, mode: Parallelism) -> Result<Self> {
        let phi = lda.topic_word_distribution();
        let words = lda.vocabulary().words();
        let rows = par::map_range(mode, lda.num_topics(), |t| {
            topic_vector(phi.row(t), words, embeddings, normalized_divisor)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let vectors = Matrix::from_rows(&rows);
        if !vectors.is_finite() {
            return Err(Error::Degenerate("non-finite topic vector".into()));
        }
        Ok(TopicVectorSet {
            vectors,
            source_lda: lda.fingerprint(),
            source_embedding: embeddings.fingerprint(),
            normalized_divisor,
        })
    }

    pub fn num_topics(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }
}

/// `Σ θ_i · T_i` divided by K, or by `Σ θ_i` under the set's `normalized_divisor`.
pub fn avg_topic_vector(theta: &[f64], topics: &TopicVectorSet) -> Result<Vec<f64>> {
    if theta.len() != topics.num_topics() {
        return Err(Error::DimensionMismatch {
            expected: topics.num_topics(),
            actual: theta.len(),
        });
    }
    let mut out = vec![0.0; topics.dim()];
    for (t, p) in theta.iter().enumerate() {
        axpy(*p, topics.vectors.row(t), &mut out);
    }
    let divisor = if topics.normalized_divisor {
        theta.iter().sum()
    } else {
        theta.len() as f64
    };
    out.iter_mut().for_each(|x| *x /= divisor);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Topical embedding

/// Skip-gram over `docs` with `topics` extra rows `topic_1 … topic_K`.
///
/// `p_topic(word)` gives the word's topic mixture (length K); `None` leaves
/// the word without topic rows. With `topics == 0` this is plain skip-gram.
pub fn topical_skipgram<S, F>(docs: &[S], topics: usize, p_topic: F, config: &SkipGramConfig) -> Result<(EmbeddingModel, SkipGramReport)>
where
    S: AsRef<[String]>,
    F: Fn(&str) -> Option<Vec<f64>>,
{
    let vocab = Vocabulary::build(docs.iter().map(|d| d.as_ref()), config.min_count)?;
    let v = vocab.len();
    let mut mixtures = Vec::with_capacity(v);
    for w in vocab.words() {
        let mix = match p_topic(w) {
            Some(p) if p.len() == topics => p
                .into_iter()
                .enumerate()
                .filter(|(_, x)| *x != 0.0)
                .map(|(t, x)| ((v + t) as u32, x))
                .collect(),
            Some(p) => {
                return Err(Error::DimensionMismatch {
                    expected: topics,
                    actual: p.len(),
                })
            }
            None => Vec::new(),
        };
        mixtures.push(mix);
    }
    let mut symbols = vocab.words().to_vec();
    symbols.extend((1..=topics).map(topic_symbol));
    let encoded: Vec<Vec<u32>> = docs.iter().map(|d| vocab.encode(d.as_ref())).collect();
    train_rows(
        TrainingInput {
            docs: &encoded,
            symbols,
            counts: vocab.counts().to_vec(),
            mixtures,
        },
        config,
    )
}

/// Word and topic embeddings trained jointly; the table has V + K rows.
///
/// Every vocabulary word (other than `UNK`) must be known to the topic model.
pub fn train_topical_embedding(corpus: &Corpus, lda: &LdaModel, config: &SkipGramConfig) -> Result<(EmbeddingModel, SkipGramReport)> {
    let vocab = Vocabulary::from_documents(&corpus.documents, config.min_count)?;
    let missing: Vec<String> = vocab
        .words()
        .iter()
        .filter(|w| w.as_str() != UNK && lda.vocabulary().id(w).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::VocabularyMismatch(missing));
    }
    let given = lda.topic_given_word();
    let docs: Vec<&[String]> = corpus.documents.iter().map(|d| d.tokens.as_slice()).collect();
    topical_skipgram(
        &docs,
        lda.num_topics(),
        |w| {
            if w == UNK {
                return None;
            }
            lda.vocabulary().id(w).map(|id| given.row(id).to_vec())
        },
        config,
    )
}

// ---------------------------------------------------------------------------
// Topic induction

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductionConfig {
    pub p_replace: f64,
    pub threshold: f64,
    pub repetitions: usize,
    pub seed: u64,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for InductionConfig {
    fn default() -> Self {
        InductionConfig {
            p_replace: 0.5,
            threshold: 0.2,
            repetitions: 10,
            seed: 0,
            parallelism: Parallelism::Sequential,
        }
    }
}

impl InductionConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.p_replace) || !unit.contains(&self.threshold) {
            return Err(Error::InvalidArgument(
                "p_replace and threshold must lie in [0, 1]".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedCorpus {
    /// All passes, concatenated; pass `r` of document `id` has id `id@r`.
    pub documents: Vec<Document>,
    pub repetitions: usize,
    pub rng_seed: u64,
    /// Topic count of the source model; symbols run from `topic_1` to `topic_{K+1}`.
    pub topics: usize,
    pub replaced: usize,
}

impl AugmentedCorpus {
    pub fn token_count(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }

    /// One space-separated line per document.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&d.tokens.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn into_corpus(self, min_count: u64, stop_list_version: &str) -> Result<Corpus> {
        Corpus::build(self.documents, min_count, stop_list_version)
    }
}

/// The replacement symbol for `word`: its best topic if that topic's
/// `P(topic | word)` reaches `threshold`, the sunk topic `topic_{K+1}` otherwise.
pub fn replacement_symbol(p_topic: Option<&[f64]>, topics: usize, threshold: f64) -> String {
    match p_topic {
        Some(p) => {
            let mut best = 0;
            for (t, &x) in p.iter().enumerate() {
                if x > p[best] {
                    best = t;
                }
            }
            if p.get(best).is_some_and(|&x| x >= threshold) {
                topic_symbol(best + 1)
            } else {
                topic_symbol(topics + 1)
            }
        }
        None => topic_symbol(topics + 1),
    }
}

/// Generic form of [`induce_topics`] over any `P(topic | word)` lookup.
pub fn induce_with<F>(documents: &[Document], topics: usize, p_topic: F, config: &InductionConfig) -> Result<AugmentedCorpus>
where
    F: Fn(&str) -> Option<Vec<f64>> + Sync,
{
    config.validate()?;
    let passes = par::map_range(config.parallelism, config.repetitions, |pass| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("induce/{pass}")));
        let mut replaced = 0usize;
        let docs: Vec<Document> = documents
            .iter()
            .map(|d| {
                let tokens = d
                    .tokens
                    .iter()
                    .map(|w| {
                        if rng.random::<f64>() < config.p_replace {
                            replaced += 1;
                            replacement_symbol(p_topic(w).as_deref(), topics, config.threshold)
                        } else {
                            w.clone()
                        }
                    })
                    .collect();
                Document {
                    id: format!("{}@{pass}", d.id),
                    tokens,
                    group_id: d.group_id.clone(),
                    label: d.label,
                }
            })
            .collect();
        (docs, replaced)
    });
    let mut out = AugmentedCorpus {
        documents: Vec::with_capacity(documents.len() * config.repetitions),
        repetitions: config.repetitions,
        rng_seed: config.seed,
        topics,
        replaced: 0,
    };
    for (docs, replaced) in passes {
        out.documents.extend(docs);
        out.replaced += replaced;
    }
    Ok(out)
}

/// Repeats the corpus `repetitions` times, replacing each token with
/// probability `p_replace` by its topic symbol.
///
/// Words outside the model's vocabulary always map to the sunk topic.
pub fn induce_topics(documents: &[Document], lda: &LdaModel, config: &InductionConfig) -> Result<AugmentedCorpus> {
    let given = lda.topic_given_word();
    induce_with(
        documents,
        lda.num_topics(),
        |w| {
            if w == UNK {
                return None;
            }
            lda.vocabulary().id(w).map(|id| given.row(id).to_vec())
        },
        config,
    )
}

/// Skip-gram defaults for the topic-induced model (400 dimensions).
pub fn topic_induced_config() -> SkipGramConfig {
    SkipGramConfig {
        dim: 400,
        ..Default::default()
    }
}

/// Plain skip-gram over the augmented token stream.
pub fn train_topic_induced(augmented: &AugmentedCorpus, config: &SkipGramConfig) -> Result<(EmbeddingModel, SkipGramReport)> {
    if augmented.documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let docs: Vec<&[String]> = augmented.documents.iter().map(|d| d.tokens.as_slice()).collect();
    crate::embedding::train_skipgram(&docs, config)
}

// ---------------------------------------------------------------------------

/// Row of `topic_j` for the most probable topic `j` (lowest index on ties).
pub fn topic_row_for<'m>(theta: &TopicDistribution, model: &'m EmbeddingModel) -> Result<&'m [f64]> {
    let symbol = topic_symbol(theta.argmax() + 1);
    match model.row_of(&symbol) {
        Some(r) => Ok(model.input_vectors().row(r)),
        None => Err(Error::MissingSymbol(symbol)),
    }
}

/// Embedding of the document's most prevalent topic under `lda`.
pub fn most_prevalent_topic_vector<S: AsRef<str>>(tokens: &[S], lda: &LdaModel, model: &EmbeddingModel) -> Result<Vec<f64>> {
    let theta = lda.infer_theta(&lda.encode(tokens));
    topic_row_for(&theta, model).map(<[f64]>::to_vec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::train_skipgram;
    use crate::linalg::norm;
    use crate::synthetic::{self, DisjointTopics};
    use proptest::prelude::*;
    use rand::Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn model_from(symbols: &[&str], rows: &[Vec<f64>]) -> EmbeddingModel {
        let dim = rows[0].len();
        EmbeddingModel::from_parts(
            symbols.iter().map(|s| s.to_string()).collect(),
            Matrix::from_rows(rows),
            Matrix::zeros(rows.len(), dim),
            SkipGramConfig {
                dim,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn topic_symbols_round_trip() {
        assert_eq!(parse_topic_symbol(&topic_symbol(7)), Some(7));
        for bad in ["topic_0", "topic_", "topic_01", "topic_x", "topics_1", "kitchen"] {
            assert_eq!(parse_topic_symbol(bad), None, "{bad}");
        }
    }

    #[test]
    fn topic_vector_examples() {
        let m = model_from(&["w"], &[vec![1.5, -2.0]]);
        assert_eq!(topic_vector(&[1.0], &["w"], &m, false).unwrap(), vec![1.5, -2.0]);

        let shared = model_from(&["a", "b", "c", "d"], &vec![vec![4.0, 8.0]; 4]);
        let tv = topic_vector(&[0.25; 4], &["a", "b", "c", "d"], &shared, false).unwrap();
        assert!((tv[0] - 1.0).abs() < 1e-15 && (tv[1] - 2.0).abs() < 1e-15);
        let normed = topic_vector(&[0.25; 4], &["a", "b", "c", "d"], &shared, true).unwrap();
        assert_eq!(normed, vec![4.0, 8.0]);

        let empty: [&str; 0] = [];
        assert!(topic_vector(&[], &empty, &m, false).is_err());
    }

    #[test]
    fn avg_topic_vector_examples() {
        let set = TopicVectorSet {
            vectors: Matrix::from_rows(&[[2.0, 6.0]]),
            source_lda: Fingerprint(0),
            source_embedding: Fingerprint(0),
            normalized_divisor: false,
        };
        assert_eq!(avg_topic_vector(&[1.0], &set).unwrap(), vec![2.0, 6.0]);
        let set = TopicVectorSet {
            vectors: Matrix::from_rows(&[[3.0, 3.0], [3.0, 3.0], [3.0, 3.0]]),
            ..set
        };
        let v = avg_topic_vector(&[1.0 / 3.0; 3], &set).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!(avg_topic_vector(&[0.5, 0.5], &set).is_err());
    }

    #[test]
    fn replacement_rules() {
        assert_eq!(replacement_symbol(Some(&[0.1, 0.9]), 2, 0.2), "topic_2");
        assert_eq!(replacement_symbol(Some(&[0.15, 0.15, 0.15, 0.15, 0.4]), 5, 0.5), "topic_6");
        assert_eq!(replacement_symbol(Some(&[0.15, 0.14, 0.14, 0.14, 0.43]), 5, 0.2), "topic_5");
        assert_eq!(replacement_symbol(Some(&[0.5, 0.5]), 2, 0.2), "topic_1");
        assert_eq!(replacement_symbol(None, 5, 0.2), "topic_6");
    }

    fn fixture_lda() -> LdaModel {
        let truth = DisjointTopics::new(12, 3);
        LdaModel::from_topic_word(&truth.phi_with_unk(), 1000.0, 1.0 / 3.0, 1e-6, truth.vocabulary()).unwrap()
    }

    fn fixture_docs(n: usize, seed: u64) -> Vec<Document> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = DisjointTopics::new(12, 3);
        (0..n)
            .map(|i| {
                let theta = synthetic::dirichlet(&mut rng, &[0.5; 3]);
                Document::new(format!("d{i}"), truth.sample_tokens(&mut rng, &theta, 20), format!("g{}", i % 4))
            })
            .collect()
    }

    #[test]
    fn induction_invariants() {
        let lda = fixture_lda();
        let mut docs = fixture_docs(30, 1);
        docs[0].tokens.push("outsider".into());
        let cfg = InductionConfig {
            seed: 5,
            ..Default::default()
        };
        let aug = induce_topics(&docs, &lda, &cfg).unwrap();
        let original: usize = docs.iter().map(|d| d.tokens.len()).sum();
        assert_eq!(aug.token_count(), 10 * original);
        assert_eq!(aug.documents.len(), 10 * docs.len());
        for d in &aug.documents {
            for t in &d.tokens {
                if t.starts_with("topic_") {
                    let i = parse_topic_symbol(t).unwrap();
                    assert!((1..=4).contains(&i));
                }
            }
        }
        let again = induce_topics(
            &docs,
            &lda,
            &InductionConfig {
                parallelism: Parallelism::Parallel(3),
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(serde_json::to_vec(&aug).unwrap(), serde_json::to_vec(&again).unwrap());
        // words the model does not know are sunk
        let outsider_replacements = aug
            .documents
            .iter()
            .filter(|d| d.id.starts_with("d0@"))
            .map(|d| d.tokens.last().unwrap().as_str())
            .filter(|t| *t != "outsider")
            .collect::<Vec<_>>();
        assert!(!outsider_replacements.is_empty());
        assert!(outsider_replacements.iter().all(|t| *t == "topic_4"));
    }

    #[test]
    fn replacement_rate_concentrates() {
        let docs = vec![Document::new("d", vec!["w".to_string(); 10_000], "g")];
        let aug = induce_with(&docs, 2, |_| Some(vec![0.5, 0.5]), &InductionConfig::default()).unwrap();
        let rate = aug.replaced as f64 / aug.token_count() as f64;
        assert!((0.49..=0.51).contains(&rate), "{rate}");
    }

    #[test]
    fn topical_embedding_shape_and_mismatch() {
        let lda = fixture_lda();
        let corpus = Corpus::build(fixture_docs(40, 2), 1, "en-v1").unwrap();
        let cfg = SkipGramConfig {
            dim: 8,
            iterations: 2,
            min_count: 1,
            ..Default::default()
        };
        let (m, _) = train_topical_embedding(&corpus, &lda, &cfg).unwrap();
        let v = Vocabulary::from_documents(&corpus.documents, 1).unwrap().len();
        assert_eq!(m.rows(), v + 3);
        assert_eq!(m.dim(), 8);
        assert!(m.row_of("topic_3").is_some());

        let mut docs = fixture_docs(5, 3);
        docs[0].tokens.push("stranger".into());
        let bad = Corpus::build(docs, 1, "en-v1").unwrap();
        match train_topical_embedding(&bad, &lda, &cfg) {
            Err(Error::VocabularyMismatch(words)) => assert_eq!(words, vec!["stranger".to_string()]),
            other => panic!("expected mismatch, got {other:?}"),
        }
    }

    #[test]
    fn zero_topics_is_plain_skipgram() {
        let docs: Vec<Vec<String>> = fixture_docs(20, 4).into_iter().map(|d| d.tokens).collect();
        let cfg = SkipGramConfig {
            dim: 6,
            iterations: 3,
            min_count: 1,
            ..Default::default()
        };
        let (a, _) = topical_skipgram(&docs, 0, |_| Some(Vec::new()), &cfg).unwrap();
        let (b, _) = train_skipgram(&docs, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_hot_topic_receives_all_updates() {
        let docs: Vec<Vec<String>> = fixture_docs(40, 6).into_iter().map(|d| d.tokens).collect();
        let cfg = SkipGramConfig {
            dim: 8,
            iterations: 3,
            min_count: 1,
            ..Default::default()
        };
        let (m, _) = topical_skipgram(&docs, 4, |_| Some(vec![1.0, 0.0, 0.0, 0.0]), &cfg).unwrap();
        let n = |s: &str| norm(m.input_vectors().row(m.row_of(s).unwrap()));
        for other in ["topic_2", "topic_3", "topic_4"] {
            assert!(n("topic_1") > n(other));
        }
    }

    #[test]
    fn topic_induced_defaults_and_neighbors() {
        assert_eq!(topic_induced_config().dim, 400);
        // topic_1 only ever replaces words next to "kitchen"
        let mut docs = Vec::new();
        for i in 0..200 {
            let t = if i % 2 == 0 { "kitchen topic_1 kitchen sink" } else { "garden rake lawn topic_2 hose" };
            docs.push(Document::new(format!("d{i}"), toks(t), "g"));
        }
        let aug = AugmentedCorpus {
            documents: docs,
            repetitions: 1,
            rng_seed: 0,
            topics: 1,
            replaced: 0,
        };
        let cfg = SkipGramConfig {
            dim: 12,
            iterations: 10,
            min_count: 2,
            ..Default::default()
        };
        let (m, _) = train_topic_induced(&aug, &cfg).unwrap();
        let nn = m.nearest_neighbors("topic_1", 1, Parallelism::Sequential).unwrap();
        assert!(["kitchen", "sink"].contains(&nn[0].0.as_str()), "{nn:?}");
    }

    #[test]
    fn prevalent_topic_rows() {
        let m = model_from(&["topic_1", "topic_2", "topic_3"], &[vec![1.0], vec![2.0], vec![3.0]]);
        let td = |theta: Vec<f64>| TopicDistribution {
            theta,
            low_confidence: false,
        };
        assert_eq!(topic_row_for(&td(vec![0.1, 0.7, 0.2]), &m).unwrap(), &[2.0]);
        assert_eq!(topic_row_for(&td(vec![0.5, 0.5]), &m).unwrap(), &[1.0]);
        let lda = fixture_lda();
        let empty: [&str; 0] = [];
        assert_eq!(most_prevalent_topic_vector(&empty, &lda, &m).unwrap(), vec![1.0]);
        let missing = model_from(&["topic_2"], &[vec![0.0]]);
        assert!(matches!(
            most_prevalent_topic_vector(&empty, &lda, &missing),
            Err(Error::MissingSymbol(_))
        ));
    }

    proptest! {
        #[test]
        fn topic_vector_is_linear(
            raw_p in prop::collection::vec(0.01f64..1.0, 6),
            raw_q in prop::collection::vec(0.01f64..1.0, 6),
            a in 0.0f64..1.0,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let words = ["a", "b", "c", "d", "e", "f"];
            let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let m = model_from(&words, &rows);
            let norm1 = |v: Vec<f64>| { let s: f64 = v.iter().sum(); v.into_iter().map(|x| x / s).collect::<Vec<_>>() };
            let (p, q) = (norm1(raw_p), norm1(raw_q));
            let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + (1.0 - a) * y).collect();
            let lhs = topic_vector(&mix, &words, &m, false).unwrap();
            let tp = topic_vector(&p, &words, &m, false).unwrap();
            let tq = topic_vector(&q, &words, &m, false).unwrap();
            for i in 0..4 {
                let rhs = a * tp[i] + (1.0 - a) * tq[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * lhs[i].abs().max(rhs.abs()).max(1e-3));
            }
        }
    }
}
