//! Skip-gram word embeddings with negative sampling.
//!
//! One trainer serves both plain skip-gram and the topical variant. Each
//! vocabulary row may carry a *mixture*: a list of `(extra row, weight)` pairs.
//! The vector used for a word is its own row plus the weighted sum of its
//! mixture rows, on the input side and the output side alike. Plain skip-gram
//! is the case where every mixture is empty.
//!
//! For a center word `c`, context `o` and negatives `k`, the per-pair loss is
//!
//! ```text
//! -log σ(u_o · v_c) - Σ_k log σ(-u_k · v_c)
//! ```
//!
//! with negatives drawn from the unigram distribution raised to 3/4.
//! The gradient is evaluated at the current parameters and then applied, so
//! the update is exactly `-lr · ∇loss`.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::corpus::{Vocabulary, UNK};
use crate::error::{Error, Result};
use crate::fingerprint::{derive_seed, Fingerprint};
use crate::linalg::{axpy, cosine, dot, norm, Matrix};
use crate::par::{self, Parallelism};
use crate::pca::PrincipalAxes;

const MAGIC: &[u8; 4] = b"TVEM";
const FORMAT_VERSION: u32 = 1;

/// Rows kept by [`EmbeddingModel::import_text`] unless told otherwise.
pub const DEFAULT_IMPORT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    /// Full passes over the corpus.
    pub iterations: usize,
    pub negative_samples: usize,
    pub min_count: u64,
    /// Learning rate decays linearly from `.0` to `.1` over all pairs.
    pub learning_rate: (f64, f64),
    pub seed: u64,
    /// 1 = deterministic single thread; more = lock-free shared updates.
    pub threads: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 300,
            window: 2,
            iterations: 100,
            negative_samples: 5,
            min_count: 2,
            learning_rate: (0.025, 0.0001),
            seed: 0,
            threads: 1,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negative_samples == 0 {
            return Err(Error::InvalidArgument(
                "dim, window and negative_samples must be at least 1".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if self.min_count == 0 {
            return Err(Error::InvalidArgument("min_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_str(&serde_json::to_string(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
    input: Matrix,
    output: Matrix,
    unk: Option<usize>,
    config: SkipGramConfig,
    zero: Vec<f64>,
}

/// Average loss per pair for each training pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkipGramReport {
    pub epoch_losses: Vec<f64>,
    pub pairs_per_epoch: usize,
}

impl EmbeddingModel {
    pub fn from_parts(symbols: Vec<String>, input: Matrix, output: Matrix, config: SkipGramConfig) -> Result<Self> {
        if input.rows() != symbols.len() || output.rows() != symbols.len() {
            return Err(Error::DimensionMismatch {
                expected: symbols.len(),
                actual: input.rows(),
            });
        }
        if input.cols() != output.cols() {
            return Err(Error::DimensionMismatch {
                expected: input.cols(),
                actual: output.cols(),
            });
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate symbol {s}")));
            }
        }
        let unk = index.get(UNK).copied();
        let zero = vec![0.0; input.cols()];
        Ok(EmbeddingModel {
            symbols,
            index,
            input,
            output,
            unk,
            config,
            zero,
        })
    }

    pub fn dim(&self) -> usize {
        self.input.cols()
    }

    pub fn rows(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn config(&self) -> &SkipGramConfig {
        &self.config
    }

    pub fn input_vectors(&self) -> &Matrix {
        &self.input
    }

    pub fn output_vectors(&self) -> &Matrix {
        &self.output
    }

    pub fn row_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// Input vector of `symbol`, falling back to the `UNK` row (or zeros when
    /// the model has no `UNK` row).
    pub fn lookup(&self, symbol: &str) -> &[f64] {
        match self.row_of(symbol).or(self.unk) {
            Some(r) => self.input.row(r),
            None => &self.zero,
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        Fingerprint::of_bytes(&buf)
    }

    /// The `k` rows most cosine-similar to `symbol`, excluding the query row.
    /// Ties are broken by symbol order.
    pub fn nearest_neighbors(&self, symbol: &str, k: usize, mode: Parallelism) -> Result<Vec<(String, f64)>> {
        let q = self
            .row_of(symbol)
            .ok_or_else(|| Error::MissingSymbol(symbol.to_string()))?;
        if k >= self.rows() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} must be smaller than the {} model rows",
                self.rows()
            )));
        }
        let query = self.input.row(q);
        if norm(query) == 0.0 {
            return Err(Error::Degenerate(format!("{symbol} has a zero-norm vector")));
        }
        let scores = par::map_range(mode, self.rows(), |r| cosine(query, self.input.row(r)));
        let mut ranked: Vec<usize> = (0..self.rows()).filter(|&r| r != q).collect();
        ranked.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| self.symbols[a].cmp(&self.symbols[b]))
        });
        Ok(ranked
            .into_iter()
            .take(k)
            .map(|r| (self.symbols[r].clone(), scores[r]))
            .collect())
    }

    /// 2-D coordinates of the selected rows on their top two principal components.
    pub fn project_2d<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Vec<(String, f64, f64)>> {
        if symbols.len() < 3 {
            return Err(Error::InvalidArgument("need at least 3 symbols to project".into()));
        }
        let rows: Vec<&[f64]> = symbols.iter().map(|s| self.lookup(s.as_ref())).collect();
        let distinct = rows.iter().skip(1).any(|r| *r != rows[0]);
        if !distinct {
            return Err(Error::Degenerate("fewer than 2 distinct vectors selected".into()));
        }
        let axes = PrincipalAxes::fit(&Matrix::from_rows(&rows))?;
        let mut coords = Vec::with_capacity(2);
        Ok(symbols
            .iter()
            .zip(&rows)
            .map(|(s, r)| {
                axes.project(r, 0, 2.min(self.dim()), &mut coords);
                (s.as_ref().to_string(), coords[0], coords.get(1).copied().unwrap_or(0.0))
            })
            .collect())
    }

    // -- text format ------------------------------------------------------

    /// Reads `R N` then one `symbol v1 … vN` line per row; values are parsed
    /// as `f32`. At most `cap` rows are kept, in file order.
    pub fn import_text(path: &Path, cap: usize) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_text(BufReader::new(f), &path.display().to_string(), cap)
    }

    pub fn read_text<R: BufRead>(input: R, name: &str, cap: usize) -> Result<Self> {
        let mut lines = input.lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| Error::io(name, e))?,
            None => return Err(Error::format(name, 1, "missing header")),
        };
        let mut it = header.split_whitespace();
        let parse_usize = |s: Option<&str>| s.and_then(|v| v.parse::<usize>().ok());
        let (declared_rows, dim) = match (parse_usize(it.next()), parse_usize(it.next()), it.next()) {
            (Some(r), Some(n), None) if n > 0 => (r, n),
            _ => return Err(Error::format(name, 1, "header must be `rows dim`")),
        };
        let keep = declared_rows.min(cap);
        let mut symbols = Vec::with_capacity(keep);
        let mut data = Vec::with_capacity(keep * dim);
        for (i, line) in lines.enumerate() {
            if symbols.len() == keep {
                break;
            }
            let lineno = i + 2;
            let line = line.map_err(|e| Error::io(name, e))?;
            let mut fields = line.split_whitespace();
            let Some(sym) = fields.next() else {
                return Err(Error::format(name, lineno, "empty row"));
            };
            let start = data.len();
            for f in fields {
                let v: f32 = f
                    .parse()
                    .map_err(|_| Error::format(name, lineno, format!("bad number {f:?}")))?;
                data.push(v as f64);
            }
            let got = data.len() - start;
            if got != dim {
                return Err(Error::format(
                    name,
                    lineno,
                    format!("expected {dim} values, found {got}"),
                ));
            }
            symbols.push(sym.to_string());
        }
        if symbols.len() < keep {
            return Err(Error::format(
                name,
                symbols.len() + 2,
                format!("header declares {declared_rows} rows, file has {}", symbols.len()),
            ));
        }
        let n = symbols.len();
        let input = Matrix::from_vec(n, dim, data);
        let config = SkipGramConfig {
            dim,
            ..Default::default()
        };
        Self::from_parts(symbols, input, Matrix::zeros(n, dim), config)
    }

    /// Writes input vectors in the text format at `f32` precision.
    pub fn write_text<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{} {}", self.rows(), self.dim())?;
        for (s, row) in self.symbols.iter().zip(self.input.iter_rows()) {
            write!(out, "{s}")?;
            for v in row {
                write!(out, " {}", *v as f32)?;
            }
            writeln!(out)?;
        }
        out.flush()
    }

    // -- binary container -------------------------------------------------

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Magic, version, R, N, config hash, config JSON, symbols, input rows, output rows.
    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = BinWriter::new(out);
        w.bytes(MAGIC)?;
        w.u32(FORMAT_VERSION)?;
        w.u32(self.rows() as u32)?;
        w.u32(self.dim() as u32)?;
        w.u64(self.config.fingerprint().0)?;
        w.str(&serde_json::to_string(&self.config).expect("config serializes"))?;
        for s in &self.symbols {
            w.str(s)?;
        }
        w.f64s(self.input.as_slice())?;
        w.f64s(self.output.as_slice())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f)).map_err(|e| match e {
            ReadError::Io(e) => Error::io(path, e),
            ReadError::Model(e) => e,
        })
    }

    fn read_from<R: std::io::Read>(input: R) -> std::result::Result<Self, ReadError> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut r = BinReader::new(input);
        r.expect_magic(MAGIC)?;
        if r.u32()? != FORMAT_VERSION {
            return Err(bad("unsupported embedding model version").into());
        }
        let rows = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if rows.saturating_mul(dim) > (1 << 31) {
            return Err(bad("implausible model shape").into());
        }
        let hash = r.u64()?;
        let config: SkipGramConfig =
            serde_json::from_str(&r.str()?).map_err(|_| bad("bad embedded config"))?;
        if config.fingerprint().0 != hash {
            return Err(bad("config hash mismatch").into());
        }
        let symbols = (0..rows).map(|_| r.str()).collect::<std::io::Result<Vec<_>>>()?;
        let input = Matrix::from_vec(rows, dim, r.f64s(rows * dim)?);
        let output = Matrix::from_vec(rows, dim, r.f64s(rows * dim)?);
        Ok(Self::from_parts(symbols, input, output, config)?)
    }
}

enum ReadError {
    Io(std::io::Error),
    Model(Error),
}

impl From<std::io::Error> for ReadError {
    fn from(e: std::io::Error) -> Self {
        ReadError::Io(e)
    }
}

impl From<Error> for ReadError {
    fn from(e: Error) -> Self {
        ReadError::Model(e)
    }
}

// ---------------------------------------------------------------------------
// Negative sampling

/// Draws vocabulary rows with probability ∝ count^0.75.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    alias: WeightedAliasIndex<f64>,
    probs: Vec<f64>,
}

impl NoiseSampler {
    pub fn new(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyCorpus);
        }
        let probs = weights.iter().map(|w| w / total).collect();
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
        Ok(NoiseSampler { alias, probs })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.alias.sample(rng) as u32
    }

    /// Target probabilities, for diagnostics.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

// ---------------------------------------------------------------------------
// Parameter access shared by the sequential and lock-free trainers

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    Input,
    Output,
}

pub trait ParamStore {
    fn dim(&self) -> usize;
    fn read(&self, side: Side, row: usize, out: &mut [f64]);
    /// `row += scale · delta`
    fn add(&mut self, side: Side, row: usize, scale: f64, delta: &[f64]);
}

/// Plain matrices, used single-threaded.
pub struct DenseStore<'a> {
    pub input: &'a mut Matrix,
    pub output: &'a mut Matrix,
}

impl ParamStore for DenseStore<'_> {
    fn dim(&self) -> usize {
        self.input.cols()
    }

    fn read(&self, side: Side, row: usize, out: &mut [f64]) {
        let m = match side {
            Side::Input => &*self.input,
            Side::Output => &*self.output,
        };
        out.copy_from_slice(m.row(row));
    }

    fn add(&mut self, side: Side, row: usize, scale: f64, delta: &[f64]) {
        let m = match side {
            Side::Input => &mut *self.input,
            Side::Output => &mut *self.output,
        };
        axpy(scale, delta, m.row_mut(row));
    }
}

/// Relaxed atomics shared between worker threads; updates may interleave.
#[derive(Clone, Copy)]
struct SharedStore<'a> {
    input: &'a [AtomicU64],
    output: &'a [AtomicU64],
    dim: usize,
}

impl ParamStore for SharedStore<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn read(&self, side: Side, row: usize, out: &mut [f64]) {
        let m = match side {
            Side::Input => self.input,
            Side::Output => self.output,
        };
        for (o, a) in out.iter_mut().zip(&m[row * self.dim..(row + 1) * self.dim]) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn add(&mut self, side: Side, row: usize, scale: f64, delta: &[f64]) {
        let m = match side {
            Side::Input => self.input,
            Side::Output => self.output,
        };
        for (a, d) in m[row * self.dim..(row + 1) * self.dim].iter().zip(delta) {
            let v = f64::from_bits(a.load(Ordering::Relaxed)) + scale * d;
            a.store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

/// Composite mixture per vocabulary row: `(extra row, weight)` pairs.
pub type Mixtures = [Vec<(u32, f64)>];

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Scratch buffers for [`sgd_pair`].
pub struct PairScratch {
    h: Vec<f64>,
    grad_h: Vec<f64>,
    tmp: Vec<f64>,
    us: Vec<Vec<f64>>,
    gs: Vec<f64>,
}

impl PairScratch {
    pub fn new(dim: usize) -> Self {
        PairScratch {
            h: vec![0.0; dim],
            grad_h: vec![0.0; dim],
            tmp: vec![0.0; dim],
            us: Vec::new(),
            gs: Vec::new(),
        }
    }
}

fn composite<S: ParamStore>(store: &S, side: Side, row: u32, mixtures: &Mixtures, out: &mut [f64], tmp: &mut [f64]) {
    store.read(side, row as usize, out);
    if let Some(mix) = mixtures.get(row as usize) {
        for &(extra, w) in mix {
            store.read(side, extra as usize, tmp);
            axpy(w, tmp, out);
        }
    }
}

fn scatter<S: ParamStore>(store: &mut S, side: Side, row: u32, mixtures: &Mixtures, scale: f64, grad: &[f64]) {
    store.add(side, row as usize, scale, grad);
    if let Some(mix) = mixtures.get(row as usize) {
        for &(extra, w) in mix {
            store.add(side, extra as usize, scale * w, grad);
        }
    }
}

/// One negative-sampling step for `center` against `targets` (row, label).
///
/// Evaluates the loss and its gradient at the current parameters, then
/// applies `params -= lr · grad`. Returns the loss before the update.
pub fn sgd_pair<S: ParamStore>(
    store: &mut S,
    mixtures: &Mixtures,
    center: u32,
    targets: &[(u32, bool)],
    lr: f64,
    scratch: &mut PairScratch,
) -> f64 {
    let dim = store.dim();
    composite(store, Side::Input, center, mixtures, &mut scratch.h, &mut scratch.tmp);
    scratch.us.resize_with(targets.len(), || vec![0.0; dim]);
    scratch.gs.clear();
    scratch.grad_h.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (i, &(row, positive)) in targets.iter().enumerate() {
        let u = &mut scratch.us[i];
        composite(store, Side::Output, row, mixtures, u, &mut scratch.tmp);
        let f = dot(&scratch.h, u);
        let (l, g) = if positive {
            (-log_sigmoid(f), sigmoid(f) - 1.0)
        } else {
            (-log_sigmoid(-f), sigmoid(f))
        };
        loss += l;
        scratch.gs.push(g);
        axpy(g, u, &mut scratch.grad_h);
    }
    for (i, &(row, _)) in targets.iter().enumerate() {
        scatter(store, Side::Output, row, mixtures, -lr * scratch.gs[i], &scratch.h);
    }
    scatter(store, Side::Input, center, mixtures, -lr, &scratch.grad_h);
    loss
}

/// Loss of one step without touching the parameters.
pub fn pair_loss<S: ParamStore>(store: &S, mixtures: &Mixtures, center: u32, targets: &[(u32, bool)]) -> f64 {
    let dim = store.dim();
    let (mut h, mut u, mut tmp) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    composite(store, Side::Input, center, mixtures, &mut h, &mut tmp);
    targets
        .iter()
        .map(|&(row, positive)| {
            composite(store, Side::Output, row, mixtures, &mut u, &mut tmp);
            let f = dot(&h, &u);
            if positive {
                -log_sigmoid(f)
            } else {
                -log_sigmoid(-f)
            }
        })
        .sum()
}

/// Records every `add` instead of applying it; with `lr = 1` the recorded
/// deltas are the negated gradient.
pub struct GradientRecorder<'a> {
    pub base: DenseStore<'a>,
    pub input_grad: Matrix,
    pub output_grad: Matrix,
}

impl<'a> GradientRecorder<'a> {
    pub fn new(base: DenseStore<'a>) -> Self {
        let (r, d) = (base.input.rows(), base.input.cols());
        GradientRecorder {
            base,
            input_grad: Matrix::zeros(r, d),
            output_grad: Matrix::zeros(r, d),
        }
    }
}

impl ParamStore for GradientRecorder<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn read(&self, side: Side, row: usize, out: &mut [f64]) {
        self.base.read(side, row, out)
    }

    fn add(&mut self, side: Side, row: usize, scale: f64, delta: &[f64]) {
        let m = match side {
            Side::Input => &mut self.input_grad,
            Side::Output => &mut self.output_grad,
        };
        // store +gradient: the trainer adds -lr·grad with lr = 1
        axpy(-scale, delta, m.row_mut(row));
    }
}

// ---------------------------------------------------------------------------
// Training

/// Encoded training input for the shared trainer.
pub(crate) struct TrainingInput<'a> {
    pub docs: &'a [Vec<u32>],
    /// Symbols for every row: vocabulary rows first, then any extra rows.
    pub symbols: Vec<String>,
    /// Counts for the vocabulary rows (defines the noise distribution).
    pub counts: Vec<u64>,
    pub mixtures: Vec<Vec<(u32, f64)>>,
}

fn pairs_in(docs: &[Vec<u32>], window: usize) -> usize {
    docs.iter()
        .map(|d| {
            let n = d.len();
            (0..n)
                .map(|i| i.min(window) + (n - 1 - i).min(window))
                .sum::<usize>()
        })
        .sum()
}

pub(crate) fn train_rows(input: TrainingInput<'_>, config: &SkipGramConfig) -> Result<(EmbeddingModel, SkipGramReport)> {
    config.validate()?;
    let tokens: usize = input.docs.iter().map(Vec::len).sum();
    if tokens < config.window + 1 {
        return Err(Error::Degenerate(format!(
            "corpus has {tokens} tokens, fewer than one full window of {}",
            config.window + 1
        )));
    }
    let pairs_per_epoch = pairs_in(input.docs, config.window);
    if pairs_per_epoch == 0 {
        return Err(Error::Degenerate("no training pairs: every document is a single token".into()));
    }
    let rows = input.symbols.len();
    let dim = config.dim;
    let noise = NoiseSampler::new(&input.counts)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half = 0.5 / dim as f64;
    let mut in_m = Matrix::from_vec(
        rows,
        dim,
        (0..rows * dim).map(|_| init_rng.random_range(-half..half)).collect(),
    );
    let mut out_m = Matrix::zeros(rows, dim);

    let total_pairs = pairs_per_epoch * config.iterations;
    let threads = Parallelism::from_threads(config.threads).threads();
    let report = if threads <= 1 {
        let mut store = DenseStore {
            input: &mut in_m,
            output: &mut out_m,
        };
        let progress = AtomicUsize::new(0);
        let losses = run_shard(&mut store, &input, config, &noise, input.docs, 0, total_pairs, &progress);
        SkipGramReport {
            epoch_losses: losses.iter().map(|(l, n)| l / *n as f64).collect(),
            pairs_per_epoch,
        }
    } else {
        let to_atomic = |m: &Matrix| -> Vec<AtomicU64> { m.as_slice().iter().map(|v| AtomicU64::new(v.to_bits())).collect() };
        let (ai, ao) = (to_atomic(&in_m), to_atomic(&out_m));
        let shared = SharedStore {
            input: &ai,
            output: &ao,
            dim,
        };
        let progress = AtomicUsize::new(0);
        let shard_len = input.docs.len().div_ceil(threads).max(1);
        let shards: Vec<&[Vec<u32>]> = input.docs.chunks(shard_len).collect();
        let per_shard: Vec<Vec<(f64, usize)>> = std::thread::scope(|s| {
            let handles: Vec<_> = shards
                .iter()
                .enumerate()
                .map(|(i, docs)| {
                    let mut store = shared;
                    let (input, noise, progress) = (&input, &noise, &progress);
                    s.spawn(move || run_shard(&mut store, input, config, noise, docs, i, total_pairs, progress))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let from_atomic = |a: &[AtomicU64]| -> Vec<f64> { a.iter().map(|x| f64::from_bits(x.load(Ordering::Relaxed))).collect() };
        in_m = Matrix::from_vec(rows, dim, from_atomic(&ai));
        out_m = Matrix::from_vec(rows, dim, from_atomic(&ao));
        let mut epoch_losses = vec![(0.0, 0usize); config.iterations];
        for shard in per_shard {
            for (e, (l, n)) in shard.into_iter().enumerate() {
                epoch_losses[e].0 += l;
                epoch_losses[e].1 += n;
            }
        }
        SkipGramReport {
            epoch_losses: epoch_losses.iter().map(|(l, n)| l / (*n).max(1) as f64).collect(),
            pairs_per_epoch,
        }
    };
    let model = EmbeddingModel::from_parts(input.symbols, in_m, out_m, config.clone())?;
    Ok((model, report))
}

#[allow(clippy::too_many_arguments)]
fn run_shard<S: ParamStore>(
    store: &mut S,
    input: &TrainingInput<'_>,
    config: &SkipGramConfig,
    noise: &NoiseSampler,
    docs: &[Vec<u32>],
    shard: usize,
    total_pairs: usize,
    progress: &AtomicUsize,
) -> Vec<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("negatives/{shard}")));
    let mut scratch = PairScratch::new(config.dim);
    let mut targets = Vec::with_capacity(config.negative_samples + 1);
    let (lr0, lr1) = config.learning_rate;
    let mut out = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let (mut loss, mut pairs) = (0.0, 0usize);
        for doc in docs {
            for (i, &center) in doc.iter().enumerate() {
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window).min(doc.len() - 1);
                for (j, &context) in doc.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let done = progress.fetch_add(1, Ordering::Relaxed);
                    let lr = lr0 - (lr0 - lr1) * (done as f64 / total_pairs as f64).min(1.0);
                    targets.clear();
                    targets.push((context, true));
                    for _ in 0..config.negative_samples {
                        let neg = noise.sample(&mut rng);
                        if neg != context {
                            targets.push((neg, false));
                        }
                    }
                    loss += sgd_pair(store, &input.mixtures, center, &targets, lr, &mut scratch);
                    pairs += 1;
                }
            }
        }
        out.push((loss, pairs));
    }
    out
}

/// Trains skip-gram embeddings over token streams.
///
/// Words seen fewer than `config.min_count` times are replaced by `UNK`,
/// which is trained like any other token.
pub fn train_skipgram<S: AsRef<[String]>>(docs: &[S], config: &SkipGramConfig) -> Result<(EmbeddingModel, SkipGramReport)> {
    let vocab = Vocabulary::build(docs.iter().map(|d| d.as_ref()), config.min_count)?;
    let encoded: Vec<Vec<u32>> = docs.iter().map(|d| vocab.encode(d.as_ref())).collect();
    let mixtures = vec![Vec::new(); vocab.len()];
    train_rows(
        TrainingInput {
            docs: &encoded,
            symbols: vocab.words().to_vec(),
            counts: vocab.counts().to_vec(),
            mixtures,
        },
        config,
    )
}
