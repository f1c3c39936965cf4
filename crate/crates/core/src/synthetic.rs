//! Synthetic corpora drawn from known topic models.
//!
//! Used by tests, the acceptance suite and the benchmarks; the generating
//! parameters double as ground truth.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Vocabulary, UNK};
use crate::linalg::Matrix;

/// Alphabetic surface form for synthetic word `i` (survives preprocessing).
pub fn word(i: usize) -> String {
    let mut s = String::from("zq");
    let mut digits = Vec::new();
    let mut n = i;
    loop {
        digits.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    digits.reverse();
    s.push_str(std::str::from_utf8(&digits).unwrap());
    s
}

/// Draws from a symmetric or asymmetric Dirichlet via normalized gammas.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, params: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = params
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let s: f64 = draws.iter().sum();
    if s > 0.0 {
        draws.iter_mut().for_each(|x| *x /= s);
    } else {
        let n = draws.len() as f64;
        draws.iter_mut().for_each(|x| *x = 1.0 / n);
    }
    draws
}

pub fn categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// K topics over V words where topic t owns a contiguous block of V/K words.
#[derive(Debug, Clone)]
pub struct DisjointTopics {
    pub vocab_size: usize,
    pub topics: usize,
    phi: Matrix,
}

impl DisjointTopics {
    /// Uniform weights within each topic's block.
    pub fn new(vocab_size: usize, topics: usize) -> Self {
        Self::with_weights(vocab_size, topics, |_| 1.0)
    }

    /// Zipf-like weights (1 / rank) within each block.
    pub fn zipf(vocab_size: usize, topics: usize) -> Self {
        Self::with_weights(vocab_size, topics, |r| 1.0 / (r as f64 + 1.0))
    }

    fn with_weights(vocab_size: usize, topics: usize, weight: impl Fn(usize) -> f64) -> Self {
        assert!(topics >= 1 && vocab_size >= topics);
        let block = vocab_size / topics;
        let mut phi = Matrix::zeros(topics, vocab_size);
        for t in 0..topics {
            let end = if t + 1 == topics { vocab_size } else { (t + 1) * block };
            let start = t * block;
            let total: f64 = (0..end - start).map(&weight).sum();
            for w in start..end {
                phi.set(t, w, weight(w - start) / total);
            }
        }
        DisjointTopics {
            vocab_size,
            topics,
            phi,
        }
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    /// `phi` with a leading zero column for `UNK`, aligned with [`Self::vocabulary`].
    pub fn phi_with_unk(&self) -> Matrix {
        let mut out = Matrix::zeros(self.topics, self.vocab_size + 1);
        for t in 0..self.topics {
            out.row_mut(t)[1..].copy_from_slice(self.phi.row(t));
        }
        out
    }

    /// `UNK` at id 0, then word `i` at id `i + 1`.
    pub fn vocabulary(&self) -> Vocabulary {
        let mut words = vec![UNK.to_string()];
        words.extend((0..self.vocab_size).map(word));
        let counts = vec![1; words.len()];
        Vocabulary::from_parts(words, counts, 1)
    }

    pub fn topic_of_word(&self, w: usize) -> usize {
        (0..self.topics).find(|&t| self.phi.get(t, w) > 0.0).unwrap_or(0)
    }

    /// Documents as vocabulary ids (word `i` ↦ id `i + 1`), θ ~ Dirichlet(alpha).
    pub fn sample_documents<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, len: usize, alpha: f64) -> Vec<Vec<u32>> {
        let prior = vec![alpha; self.topics];
        (0..n)
            .map(|_| {
                let theta = dirichlet(rng, &prior);
                self.sample_ids(rng, &theta, len)
            })
            .collect()
    }

    pub fn sample_ids<R: Rng + ?Sized>(&self, rng: &mut R, theta: &[f64], len: usize) -> Vec<u32> {
        (0..len)
            .map(|_| {
                let t = categorical(rng, theta);
                (categorical(rng, self.phi.row(t)) + 1) as u32
            })
            .collect()
    }

    pub fn sample_tokens<R: Rng + ?Sized>(&self, rng: &mut R, theta: &[f64], len: usize) -> Vec<String> {
        self.sample_ids(rng, theta, len)
            .into_iter()
            .map(|id| word(id as usize - 1))
            .collect()
    }
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Two-class corpus whose classes differ in their topic mixtures, plus an
/// unlabeled corpus from the same topics for unsupervised model training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationBench {
    pub vocab_size: usize,
    pub topics: usize,
    pub docs_per_class: usize,
    pub groups_per_class: usize,
    pub doc_len: usize,
    pub class_mixtures: [Vec<f64>; 2],
    /// Dirichlet concentration of a group's mixture around its class mixture.
    pub group_concentration: f64,
    /// Dirichlet concentration of a document's mixture around its group mixture.
    pub doc_concentration: f64,
    pub unlabeled_docs: usize,
    pub unlabeled_alpha: f64,
}

impl Default for ClassificationBench {
    fn default() -> Self {
        ClassificationBench {
            vocab_size: 120,
            topics: 6,
            docs_per_class: 300,
            groups_per_class: 10,
            doc_len: 50,
            class_mixtures: [
                vec![0.4, 0.3, 0.1, 0.1, 0.05, 0.05],
                vec![0.05, 0.05, 0.1, 0.1, 0.3, 0.4],
            ],
            group_concentration: 60.0,
            doc_concentration: 30.0,
            unlabeled_docs: 400,
            unlabeled_alpha: 0.5,
        }
    }
}

impl ClassificationBench {
    pub fn mixture_distance(&self) -> f64 {
        total_variation(&self.class_mixtures[0], &self.class_mixtures[1])
    }

    pub fn topic_model(&self) -> DisjointTopics {
        DisjointTopics::zipf(self.vocab_size, self.topics)
    }

    /// Returns `(labeled, unlabeled)` documents.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<Document>, Vec<Document>) {
        let topics = self.topic_model();
        let per_group = self.docs_per_class.div_ceil(self.groups_per_class);
        let mut labeled = Vec::with_capacity(2 * self.docs_per_class);
        for (class, mixture) in self.class_mixtures.iter().enumerate() {
            let mut made = 0;
            for g in 0..self.groups_per_class {
                let group_prior: Vec<f64> = mixture.iter().map(|p| p * self.group_concentration).collect();
                let group_mix = dirichlet(rng, &group_prior);
                let doc_prior: Vec<f64> = group_mix
                    .iter()
                    .map(|p| (p * self.doc_concentration).max(1e-3))
                    .collect();
                let group_id = format!("c{class}g{g:02}");
                for d in 0..per_group {
                    if made == self.docs_per_class {
                        break;
                    }
                    let theta = dirichlet(rng, &doc_prior);
                    labeled.push(
                        Document::new(
                            format!("{group_id}d{d:03}"),
                            topics.sample_tokens(rng, &theta, self.doc_len),
                            group_id.clone(),
                        )
                        .with_label(Some(class as u8)),
                    );
                    made += 1;
                }
            }
        }
        let prior = vec![self.unlabeled_alpha; self.topics];
        let unlabeled = (0..self.unlabeled_docs)
            .map(|i| {
                let theta = dirichlet(rng, &prior);
                Document::new(
                    format!("u{i:05}"),
                    topics.sample_tokens(rng, &theta, self.doc_len),
                    format!("u{i:05}"),
                )
            })
            .collect();
        (labeled, unlabeled)
    }
}
