//! Document feature vectors for every scheme, plus the drop-first PCA update.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::corpus::{Document, Label};
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::hybrid::{avg_topic_vector, most_prevalent_topic_vector, TopicVectorSet};
use crate::lda::LdaModel;
use crate::linalg::{axpy, dot, norm, Matrix};
use crate::par::{self, Parallelism};
use crate::pca::PrincipalAxes;

const MAGIC: &[u8; 4] = b"TVFM";
const FORMAT_VERSION: u32 = 1;

/// A fitted artifact and the documents it was fitted on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub fitted_on: Fingerprint,
    pub documents: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Matrix,
    pub featurizer_id: String,
    pub doc_ids: Vec<String>,
    pub groups: Vec<String>,
    pub labels: Vec<Option<Label>>,
    /// Rows produced from documents with no usable tokens.
    pub empty: Vec<bool>,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    featurizer_id: String,
    dim: usize,
    provenance: Vec<Provenance>,
}

impl FeatureMatrix {
    pub fn new(featurizer_id: impl Into<String>, docs: &[Document], rows: Vec<Vec<f64>>, empty: Vec<bool>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        let rows = Matrix::from_rows(&rows);
        if !rows.is_finite() {
            return Err(Error::Degenerate("non-finite feature value".into()));
        }
        Ok(FeatureMatrix {
            rows,
            featurizer_id: featurizer_id.into(),
            doc_ids: docs.iter().map(|d| d.id.clone()).collect(),
            groups: docs.iter().map(|d| d.group_id.clone()).collect(),
            labels: docs.iter().map(|d| d.label).collect(),
            empty,
            provenance: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn doc_index(&self) -> HashMap<&str, usize> {
        self.doc_ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect()
    }

    pub fn id_fingerprint(&self) -> Fingerprint {
        Fingerprint::of_id_set(self.doc_ids.iter().map(String::as_str))
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let rows: Vec<&[f64]> = indices.iter().map(|&i| self.rows.row(i)).collect();
        let mut rows = Matrix::from_rows(&rows);
        if indices.is_empty() {
            rows = Matrix::zeros(0, self.dim());
        }
        FeatureMatrix {
            rows,
            featurizer_id: self.featurizer_id.clone(),
            doc_ids: indices.iter().map(|&i| self.doc_ids[i].clone()).collect(),
            groups: indices.iter().map(|&i| self.groups[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            empty: indices.iter().map(|&i| self.empty[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Labels of every row; errors if any row is unlabeled.
    pub fn require_labels(&self) -> Result<Vec<Label>> {
        self.labels
            .iter()
            .zip(&self.doc_ids)
            .map(|(l, id)| l.ok_or_else(|| Error::InvalidArgument(format!("document {id} has no label"))))
            .collect()
    }

    fn meta(&self) -> Meta {
        Meta {
            format_version: FORMAT_VERSION,
            featurizer_id: self.featurizer_id.clone(),
            dim: self.dim(),
            provenance: self.provenance.clone(),
        }
    }

    /// `# {meta}` line, column header, then `doc_id label group v1 … vd` rows.
    pub fn write_tsv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        let io = |e| Error::io("<features>", e);
        writeln!(out, "# {}", serde_json::to_string(&self.meta())?).map_err(io)?;
        write!(out, "doc_id\tlabel\tgroup").map_err(io)?;
        for j in 1..=self.dim() {
            write!(out, "\tv{j}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
        for i in 0..self.len() {
            let label = self.labels[i].map(|l| l.to_string()).unwrap_or_default();
            write!(out, "{}\t{}\t{}", self.doc_ids[i], label, self.groups[i]).map_err(io)?;
            for v in self.rows.row(i) {
                write!(out, "\t{v}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn read_tsv(body: &str, name: &str) -> Result<Self> {
        let mut lines = body.lines();
        let meta: Meta = match lines.next().and_then(|l| l.strip_prefix("# ")) {
            Some(json) => serde_json::from_str(json).map_err(|e| Error::format(name, 1, e.to_string()))?,
            None => return Err(Error::format(name, 1, "missing metadata line")),
        };
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::format(name, 1, format!("unsupported version {}", meta.format_version)));
        }
        lines.next().ok_or_else(|| Error::format(name, 2, "missing column header"))?;
        let mut m = FeatureMatrix {
            rows: Matrix::zeros(0, meta.dim),
            featurizer_id: meta.featurizer_id,
            doc_ids: Vec::new(),
            groups: Vec::new(),
            labels: Vec::new(),
            empty: Vec::new(),
            provenance: meta.provenance,
        };
        let mut data = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 3;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != meta.dim + 3 {
                return Err(Error::format(
                    name,
                    lineno,
                    format!("expected {} fields, found {}", meta.dim + 3, fields.len()),
                ));
            }
            let label = match fields[1] {
                "" => None,
                s => Some(s.parse().map_err(|_| Error::format(name, lineno, format!("bad label {s:?}")))?),
            };
            let start = data.len();
            for f in &fields[3..] {
                data.push(f.parse::<f64>().map_err(|_| Error::format(name, lineno, format!("bad number {f:?}")))?);
            }
            m.doc_ids.push(fields[0].to_string());
            m.labels.push(label);
            m.groups.push(fields[2].to_string());
            m.empty.push(data[start..].iter().all(|v| *v == 0.0));
        }
        m.rows = Matrix::from_vec(m.doc_ids.len(), meta.dim, data);
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_bin(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_bin<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = BinWriter::new(out);
        w.bytes(MAGIC)?;
        w.u32(FORMAT_VERSION)?;
        w.str(&serde_json::to_string(&self.meta()).expect("meta serializes"))?;
        w.u64(self.len() as u64)?;
        for i in 0..self.len() {
            w.str(&self.doc_ids[i])?;
            w.str(&self.groups[i])?;
            w.u32(self.labels[i].map_or(u32::MAX, u32::from))?;
            w.u32(self.empty[i] as u32)?;
        }
        w.f64s(self.rows.as_slice())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::format(path.display().to_string(), 0, m);
        let mut r = BinReader::new(BufReader::new(f));
        let io = |e| Error::io(path, e);
        r.expect_magic(MAGIC).map_err(io)?;
        if r.u32().map_err(io)? != FORMAT_VERSION {
            return Err(bad("unsupported feature file version"));
        }
        let meta: Meta = serde_json::from_str(&r.str().map_err(io)?).map_err(|_| bad("bad metadata"))?;
        let n = r.u64().map_err(io)? as usize;
        if n.saturating_mul(meta.dim) > (1 << 31) {
            return Err(bad("implausible shape"));
        }
        let mut m = FeatureMatrix {
            rows: Matrix::zeros(0, meta.dim),
            featurizer_id: meta.featurizer_id,
            doc_ids: Vec::with_capacity(n),
            groups: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
            empty: Vec::with_capacity(n),
            provenance: meta.provenance,
        };
        for _ in 0..n {
            m.doc_ids.push(r.str().map_err(io)?);
            m.groups.push(r.str().map_err(io)?);
            let l = r.u32().map_err(io)?;
            m.labels.push(if l == u32::MAX { None } else { Some(l as Label) });
            m.empty.push(r.u32().map_err(io)? != 0);
        }
        m.rows = Matrix::from_vec(n, meta.dim, r.f64s(n * meta.dim).map_err(io)?);
        Ok(m)
    }
}

// ---------------------------------------------------------------------------
// Per-document featurizers

/// Mean of the tokens' embedding rows; zero vector and `true` for an empty document.
pub fn avg_word2vec<S: AsRef<str>>(tokens: &[S], model: &EmbeddingModel) -> (Vec<f64>, bool) {
    let mut out = vec![0.0; model.dim()];
    if tokens.is_empty() {
        return (out, true);
    }
    for t in tokens {
        axpy(1.0, model.lookup(t.as_ref()), &mut out);
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    (out, false)
}

/// Inferred topic proportions.
pub fn lda_features<S: AsRef<str>>(tokens: &[S], lda: &LdaModel) -> (Vec<f64>, bool) {
    let theta = lda.infer_theta(&lda.encode(tokens));
    (theta.theta, theta.low_confidence)
}

/// `[avg_word2vec ; lda_features]`, N + K values.
pub fn concat_lda_word2vec<S: AsRef<str>>(tokens: &[S], lda: &LdaModel, model: &EmbeddingModel) -> (Vec<f64>, bool) {
    let (mut v, e1) = avg_word2vec(tokens, model);
    let (theta, e2) = lda_features(tokens, lda);
    v.extend(theta);
    (v, e1 || e2)
}

/// `[avg_word2vec ; embedding of the most prevalent topic]`, 2N values.
pub fn concat_topic_embedding<S: AsRef<str>>(tokens: &[S], lda: &LdaModel, model: &EmbeddingModel) -> Result<(Vec<f64>, bool)> {
    let (mut v, empty) = avg_word2vec(tokens, model);
    v.extend(most_prevalent_topic_vector(tokens, lda, model)?);
    Ok((v, empty))
}

// ---------------------------------------------------------------------------
// TF-IDF

/// TF-IDF over the `top_n` most frequent training words.
///
/// `idf(w) = ln((1 + D) / (1 + df(w))) + 1`; rows are raw counts times idf,
/// L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdf {
    pub words: Vec<String>,
    pub idf: Vec<f64>,
    pub provenance: Provenance,
}

impl TfIdf {
    pub fn fit(train: &[Document], top_n: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut freq: HashMap<&str, (u64, u64)> = HashMap::new();
        for d in train {
            let mut seen = std::collections::HashSet::new();
            for t in &d.tokens {
                let e = freq.entry(t.as_str()).or_default();
                e.0 += 1;
                if seen.insert(t.as_str()) {
                    e.1 += 1;
                }
            }
        }
        if freq.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, (u64, u64))> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then_with(|| a.0.cmp(b.0)));
        if top_n > ranked.len() {
            warn!("requested {top_n} tf-idf terms, training data has {}; using all", ranked.len());
        }
        ranked.truncate(top_n);
        let d = train.len() as f64;
        Ok(TfIdf {
            words: ranked.iter().map(|(w, _)| w.to_string()).collect(),
            idf: ranked
                .iter()
                .map(|(_, (_, df))| ((1.0 + d) / (1.0 + *df as f64)).ln() + 1.0)
                .collect(),
            provenance: Provenance {
                artifact: "tfidf".into(),
                fitted_on: Fingerprint::of_id_set(train.iter().map(|d| d.id.as_str())),
                documents: train.len(),
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.words.len()
    }

    pub fn transform_one<S: AsRef<str>>(&self, tokens: &[S], index: &HashMap<&str, usize>) -> (Vec<f64>, bool) {
        let mut out = vec![0.0; self.dim()];
        for t in tokens {
            if let Some(&j) = index.get(t.as_ref()) {
                out[j] += 1.0;
            }
        }
        for (o, idf) in out.iter_mut().zip(&self.idf) {
            *o *= idf;
        }
        let n = norm(&out);
        if n == 0.0 {
            return (out, true);
        }
        out.iter_mut().for_each(|x| *x /= n);
        (out, false)
    }

    pub fn transform(&self, docs: &[Document], mode: Parallelism) -> Result<FeatureMatrix> {
        let index: HashMap<&str, usize> = self.words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let rows = par::map(mode, docs, |d| self.transform_one(&d.tokens, &index));
        let (rows, empty) = rows.into_iter().unzip();
        let id = format!("tfidf[{}]@{}", self.dim(), self.provenance.fitted_on);
        let mut m = FeatureMatrix::new(id, docs, rows, empty)?;
        m.provenance.push(self.provenance.clone());
        Ok(m)
    }
}

/// Fits on `train` and transforms both sets with the train vocabulary and idf.
pub fn tfidf_features(train: &[Document], test: &[Document], top_n: usize, mode: Parallelism) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let t = TfIdf::fit(train, top_n)?;
    Ok((t.transform(train, mode)?, t.transform(test, mode)?))
}

// ---------------------------------------------------------------------------
// PCA drop-first

#[derive(Debug, Clone, PartialEq)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    /// Principal components 2…d, one per row.
    pub components: Matrix,
    /// The removed first component.
    pub dropped: Vec<f64>,
    pub provenance: Provenance,
}

impl PcaTransform {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn apply_row(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        out.extend(self.components.iter_rows().map(|c| dot(c, &centered)));
    }
}

/// Centers by the training mean and keeps every principal component but the first.
pub fn fit_pca_drop_first(train: &FeatureMatrix) -> Result<PcaTransform> {
    if train.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 3 training rows, got {}",
            train.len()
        )));
    }
    if train.dim() < 2 {
        return Err(Error::InvalidArgument("PCA drop-first needs at least 2 features".into()));
    }
    let axes = PrincipalAxes::fit(&train.rows)?;
    if axes.eigenvalues.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Degenerate("training features have zero variance".into()));
    }
    let d = train.dim();
    let kept: Vec<&[f64]> = (1..d).map(|r| axes.components.row(r)).collect();
    Ok(PcaTransform {
        mean: axes.mean.clone(),
        components: Matrix::from_rows(&kept),
        dropped: axes.components.row(0).to_vec(),
        provenance: Provenance {
            artifact: "pca-drop-first".into(),
            fitted_on: train.id_fingerprint(),
            documents: train.len(),
        },
    })
}

pub fn apply_pca(t: &PcaTransform, m: &FeatureMatrix) -> Result<FeatureMatrix> {
    if m.dim() != t.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: t.input_dim(),
            actual: m.dim(),
        });
    }
    let mut data = Vec::with_capacity(m.len() * t.output_dim());
    let mut buf = Vec::with_capacity(t.output_dim());
    for row in m.rows.iter_rows() {
        t.apply_row(row, &mut buf);
        data.extend_from_slice(&buf);
    }
    let mut out = m.clone();
    out.rows = Matrix::from_vec(m.len(), t.output_dim(), data);
    out.featurizer_id = format!("{}+pca@{}", m.featurizer_id, t.provenance.fitted_on);
    out.provenance.push(t.provenance.clone());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Schemes

/// Document representations compared in the classification experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    Lda,
    Word2Vec,
    TfIdf,
    Concat,
    TopicVectors,
    Topical,
    TopicalPlusTopic,
    TopicInduced,
    TopicInducedPlusTopic,
}

impl Scheme {
    pub const ALL: [Scheme; 9] = [
        Scheme::Lda,
        Scheme::Word2Vec,
        Scheme::TfIdf,
        Scheme::Concat,
        Scheme::TopicVectors,
        Scheme::Topical,
        Scheme::TopicalPlusTopic,
        Scheme::TopicInduced,
        Scheme::TopicInducedPlusTopic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Lda => "lda",
            Scheme::Word2Vec => "word2vec",
            Scheme::TfIdf => "tfidf",
            Scheme::Concat => "concat",
            Scheme::TopicVectors => "topic-vectors",
            Scheme::Topical => "topical",
            Scheme::TopicalPlusTopic => "topical+topic",
            Scheme::TopicInduced => "topic-induced",
            Scheme::TopicInducedPlusTopic => "topic-induced+topic",
        }
    }

    pub fn needs_lda(self) -> bool {
        !matches!(self, Scheme::Word2Vec | Scheme::TfIdf | Scheme::Topical | Scheme::TopicInduced)
    }

    pub fn needs_embedding(self) -> bool {
        !matches!(self, Scheme::Lda | Scheme::TfIdf)
    }

    /// Feature dimension given K topics, N embedding dims and the tf-idf size.
    pub fn dim(self, k: usize, n: usize, tfidf: usize) -> usize {
        match self {
            Scheme::Lda => k,
            Scheme::Word2Vec | Scheme::Topical | Scheme::TopicInduced | Scheme::TopicVectors => n,
            Scheme::TfIdf => tfidf,
            Scheme::Concat => n + k,
            Scheme::TopicalPlusTopic | Scheme::TopicInducedPlusTopic => 2 * n,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Scheme::ALL.iter().map(|x| x.name()).collect();
                Error::InvalidArgument(format!("unknown scheme {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Models a scheme may draw on.
#[derive(Default, Clone, Copy)]
pub struct Sources<'a> {
    pub lda: Option<&'a LdaModel>,
    pub embedding: Option<&'a EmbeddingModel>,
    pub topic_vectors: Option<&'a TopicVectorSet>,
}

impl Sources<'_> {
    fn id(&self, scheme: Scheme) -> String {
        let mut parts = BTreeMap::new();
        if let Some(l) = self.lda {
            parts.insert("lda", l.fingerprint());
        }
        if let Some(e) = self.embedding {
            parts.insert("emb", e.fingerprint());
        }
        let mut id = scheme.name().to_string();
        for (k, v) in parts {
            id.push_str(&format!("|{k}={v}"));
        }
        id
    }
}

fn need<'a, T>(x: Option<&'a T>, what: &str, scheme: Scheme) -> Result<&'a T> {
    x.ok_or_else(|| Error::InvalidArgument(format!("scheme {scheme} needs a {what}")))
}

/// Features for every document under a train-independent scheme.
///
/// TF-IDF is fitted per training split; use [`TfIdf`] for it.
pub fn featurize(scheme: Scheme, docs: &[Document], src: &Sources<'_>, mode: Parallelism) -> Result<FeatureMatrix> {
    let one = |d: &Document| -> Result<(Vec<f64>, bool)> {
        let t = &d.tokens;
        Ok(match scheme {
            Scheme::Lda => lda_features(t, need(src.lda, "topic model", scheme)?),
            Scheme::Word2Vec | Scheme::Topical | Scheme::TopicInduced => {
                avg_word2vec(t, need(src.embedding, "embedding model", scheme)?)
            }
            Scheme::Concat => concat_lda_word2vec(
                t,
                need(src.lda, "topic model", scheme)?,
                need(src.embedding, "embedding model", scheme)?,
            ),
            Scheme::TopicVectors => {
                let (theta, empty) = lda_features(t, need(src.lda, "topic model", scheme)?);
                (avg_topic_vector(&theta, need(src.topic_vectors, "topic vector set", scheme)?)?, empty)
            }
            Scheme::TopicalPlusTopic | Scheme::TopicInducedPlusTopic => concat_topic_embedding(
                t,
                need(src.lda, "topic model", scheme)?,
                need(src.embedding, "embedding model", scheme)?,
            )?,
            Scheme::TfIdf => {
                return Err(Error::InvalidArgument(
                    "tf-idf is fitted on training documents; use TfIdf::fit".into(),
                ))
            }
        })
    };
    let rows = par::map(mode, docs, one).into_iter().collect::<Result<Vec<_>>>()?;
    let (rows, empty): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    if rows.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    FeatureMatrix::new(src.id(scheme), docs, rows, empty)
}
