use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use topicvec::classify::{cross_validate, CvOptions, FoldFeatures};
use topicvec::corpus::{Corpus, Document};
use topicvec::embedding::{train_skipgram, SkipGramConfig};
use topicvec::features::{featurize, Scheme, Sources};
use topicvec::lda::{train_lda, LdaConfig};
use topicvec::par::Parallelism;
use topicvec::synthetic::ClassificationBench;

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel(4))];

fn data() -> (Vec<Document>, Vec<Document>) {
    ClassificationBench::default().generate(&mut ChaCha8Rng::seed_from_u64(1))
}

fn lda(c: &mut Criterion) {
    let (_, unlabeled) = data();
    let corpus = Corpus::build(unlabeled, 1, "bench").unwrap();
    let mut g = c.benchmark_group("lda_train");
    g.sample_size(10);
    for (name, mode) in MODES {
        let cfg = LdaConfig {
            topics: 6,
            passes: 2,
            parallelism: mode,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| train_lda(&corpus, &cfg).unwrap()));
    }
    g.finish();
}

fn features_and_cv(c: &mut Criterion) {
    let (labeled, unlabeled) = data();
    let corpus = Corpus::build(unlabeled.clone(), 1, "bench").unwrap();
    let (model, _) = train_lda(&corpus, &LdaConfig { topics: 6, passes: 2, ..Default::default() }).unwrap();
    let tokens: Vec<&[String]> = unlabeled.iter().map(|d| d.tokens.as_slice()).collect();
    let sg = SkipGramConfig { dim: 50, iterations: 1, ..Default::default() };
    let (emb, _) = train_skipgram(&tokens, &sg).unwrap();
    let src = Sources { lda: Some(&model), embedding: Some(&emb), topic_vectors: None };

    let mut g = c.benchmark_group("featurize_concat");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| featurize(Scheme::Concat, &labeled, &src, mode).unwrap()));
    }
    g.finish();

    let features = featurize(Scheme::Concat, &labeled, &src, Parallelism::Sequential).unwrap();
    let mut g = c.benchmark_group("cross_validate");
    g.sample_size(10);
    for (name, mode) in MODES {
        let opts = CvOptions { parallelism: mode, pca_drop_first: true, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| cross_validate(&labeled, FoldFeatures::Fixed(&features), "concat", &opts).unwrap())
        });
    }
    g.finish();

    let query = labeled[0].tokens[0].clone();
    let mut g = c.benchmark_group("neighbors");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| emb.nearest_neighbors(&query, 10, mode).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, lda, features_and_cv);
criterion_main!(benches);
