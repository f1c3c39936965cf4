//! Linear classifiers, speaker-grouped cross-validation and significance tests.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label};
use crate::error::{Error, Result};
use crate::features::{apply_pca, fit_pca_drop_first, FeatureMatrix, TfIdf};
use crate::fingerprint::{derive_seed, Fingerprint};
use crate::linalg::{axpy, dot, Matrix};
use crate::par::{self, Parallelism};
use crate::special::normal_sf;

// ---------------------------------------------------------------------------
// Folds

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: usize,
    /// Fold of each document, in input order.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    /// Per-fold test counts by class with a totals row, as TSV.
    pub fn class_table(&self, docs: &[Document]) -> String {
        let mut counts = vec![[0usize; 3]; self.folds];
        for (d, &f) in docs.iter().zip(&self.assignments) {
            let col = match d.label {
                Some(0) => 0,
                Some(_) => 1,
                None => 2,
            };
            counts[f][col] += 1;
        }
        let mut out = String::from("fold\tcontrol\tpositive\tunlabeled\ttotal\n");
        let mut total = [0usize; 3];
        for (f, c) in counts.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", f + 1, c[0], c[1], c[2], c.iter().sum::<usize>());
            for j in 0..3 {
                total[j] += c[j];
            }
        }
        let _ = writeln!(
            out,
            "total\t{}\t{}\t{}\t{}",
            total[0],
            total[1],
            total[2],
            total.iter().sum::<usize>()
        );
        out
    }
}

/// Assigns whole groups to folds, largest group first into the fold with
/// the fewest documents (lowest index on ties). `seed` orders equal-sized groups.
pub fn group_kfold(docs: &[Document], folds: usize, seed: u64) -> Result<FoldPlan> {
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        groups.entry(d.group_id.as_str()).or_default().push(i);
    }
    if groups.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} groups cannot fill {folds} folds",
            groups.len()
        )));
    }
    let mut order: Vec<Vec<usize>> = groups.into_values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|g| std::cmp::Reverse(g.len()));
    let mut sizes = vec![0usize; folds];
    let mut assignments = vec![0; docs.len()];
    for g in order {
        let f = (0..folds).min_by_key(|&f| (sizes[f], f)).expect("folds >= 2");
        sizes[f] += g.len();
        for i in g {
            assignments[i] = f;
        }
    }
    Ok(FoldPlan { folds, assignments })
}

// ---------------------------------------------------------------------------
// Linear models

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearKind {
    SvmHinge,
    Logistic,
}

impl std::str::FromStr for LinearKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" | "svm-hinge" => Ok(LinearKind::SvmHinge),
            "logistic" | "logreg" => Ok(LinearKind::Logistic),
            _ => Err(Error::InvalidArgument(format!("unknown classifier {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub kind: LinearKind,
    /// Inverse regularization strength.
    pub c: f64,
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            kind: LinearKind::SvmHinge,
            c: 1.0,
            tolerance: 1e-5,
            max_epochs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub kind: LinearKind,
    pub tolerance: f64,
    /// Objective after each epoch (the dual for the SVM, the primal for logistic).
    pub objective_trace: Vec<f64>,
    pub trained_on: Fingerprint,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

fn signs(labels: &[Label]) -> Vec<f64> {
    labels.iter().map(|&l| if l > 0 { 1.0 } else { -1.0 }).collect()
}

/// Trains on every row of `features`; the model records which documents it saw.
pub fn train_linear(features: &FeatureMatrix, labels: &[Label], opts: &TrainOptions) -> Result<LinearModel> {
    let mut m = fit_linear(&features.rows, labels, opts)?;
    m.trained_on = features.id_fingerprint();
    Ok(m)
}

pub fn fit_linear(x: &Matrix, labels: &[Label], opts: &TrainOptions) -> Result<LinearModel> {
    if x.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            actual: labels.len(),
        });
    }
    let classes: BTreeSet<bool> = labels.iter().map(|&l| l > 0).collect();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument("training data holds a single class".into()));
    }
    if !(opts.tolerance > 0.0 && opts.c > 0.0) {
        return Err(Error::InvalidArgument("tolerance and C must be positive".into()));
    }
    let y = signs(labels);
    let (weights, bias, trace) = match opts.kind {
        LinearKind::SvmHinge => svm_dual_cd(x, &y, opts),
        LinearKind::Logistic => logistic_newton(x, &y, opts),
    };
    let m = LinearModel {
        weights,
        bias,
        kind: opts.kind,
        tolerance: opts.tolerance,
        objective_trace: trace,
        trained_on: Fingerprint(0),
    };
    if !m.bias.is_finite() || m.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Degenerate("classifier diverged".into()));
    }
    Ok(m)
}

/// Dual coordinate descent for the L2-regularized hinge loss with the bias
/// as an extra constant feature. Coordinates are visited in index order.
fn svm_dual_cd(x: &Matrix, y: &[f64], opts: &TrainOptions) -> (Vec<f64>, f64, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let c = opts.c;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    let qii: Vec<f64> = x.iter_rows().map(|r| dot(r, r) + 1.0).collect();
    let mut trace = Vec::new();
    let mut prev = 0.0f64;
    for _ in 0..opts.max_epochs {
        for i in 0..n {
            let xi = x.row(i);
            let g = y[i] * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                axpy(step, xi, &mut w);
                b += step;
            }
        }
        let obj = 0.5 * (dot(&w, &w) + b * b) - alpha.iter().sum::<f64>();
        trace.push(obj);
        if trace.len() > 1 && prev - obj <= opts.tolerance * prev.abs() {
            break;
        }
        prev = obj;
    }
    (w, b, trace)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `0.5·|w|² + C·Σ log(1 + exp(-y(w·x + b)))`; the bias is not regularized.
pub fn logistic_objective(x: &Matrix, y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let loss: f64 = x
        .iter_rows()
        .zip(y)
        .map(|(r, yi)| softplus(-yi * (dot(w, r) + b)))
        .sum();
    0.5 * dot(w, w) + c * loss
}

/// Truncated Newton: conjugate-gradient steps on the Hessian, then a
/// backtracking line search.
fn logistic_newton(x: &Matrix, y: &[f64], opts: &TrainOptions) -> (Vec<f64>, f64, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let c = opts.c;
    let mut w = vec![0.0; d + 1];
    let split = |v: &[f64]| -> (Vec<f64>, f64) { (v[..d].to_vec(), v[d]) };
    let objective = |v: &[f64]| logistic_objective(x, y, &v[..d], v[d], c);
    let mut f = objective(&w);
    let mut trace = vec![f];
    let mut curv = vec![0.0; n];
    for _ in 0..opts.max_epochs {
        // gradient and curvature at the current point
        let mut g = w.clone();
        g[d] = 0.0;
        for i in 0..n {
            let r = x.row(i);
            let z = dot(&w[..d], r) + w[d];
            let s = sigmoid(y[i] * z);
            let coef = c * (s - 1.0) * y[i];
            axpy(coef, r, &mut g[..d]);
            g[d] += coef;
            curv[i] = c * s * (1.0 - s);
        }
        let gnorm = dot(&g, &g).sqrt();
        if gnorm == 0.0 {
            break;
        }
        let hess = |v: &[f64]| -> Vec<f64> {
            let mut out = v.to_vec();
            out[d] = 0.0;
            for i in 0..n {
                let r = x.row(i);
                let t = curv[i] * (dot(r, &v[..d]) + v[d]);
                axpy(t, r, &mut out[..d]);
                out[d] += t;
            }
            out
        };
        // CG on H s = -g
        let mut s = vec![0.0; d + 1];
        let mut res: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut p = res.clone();
        let mut rr = dot(&res, &res);
        let forcing = (0.1 * gnorm).min(gnorm.sqrt() * gnorm).max(1e-14);
        for _ in 0..(2 * (d + 1)).max(10) {
            if rr.sqrt() <= forcing {
                break;
            }
            let hp = hess(&p);
            let php = dot(&p, &hp);
            if php <= 0.0 {
                break;
            }
            let a = rr / php;
            axpy(a, &p, &mut s);
            axpy(-a, &hp, &mut res);
            let rr_new = dot(&res, &res);
            let beta = rr_new / rr;
            rr = rr_new;
            for (pj, rj) in p.iter_mut().zip(&res) {
                *pj = rj + beta * *pj;
            }
        }
        let slope = dot(&g, &s);
        if slope >= 0.0 {
            break;
        }
        let mut eta = 1.0;
        let mut next = w.clone();
        let mut f_next = f;
        for _ in 0..60 {
            next.copy_from_slice(&w);
            axpy(eta, &s, &mut next);
            f_next = objective(&next);
            if f_next <= f + 1e-4 * eta * slope {
                break;
            }
            eta *= 0.5;
        }
        if f_next > f {
            break;
        }
        w = next;
        let improvement = f - f_next;
        f = f_next;
        trace.push(f);
        if improvement <= opts.tolerance * f.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let (weights, bias) = split(&w);
    (weights, bias, trace)
}

/// Label 1 when `w·x + b ≥ 0`, else 0.
pub fn predict(model: &LinearModel, features: &Matrix) -> Result<Vec<Label>> {
    if features.cols() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            actual: features.cols(),
        });
    }
    Ok(features
        .iter_rows()
        .map(|r| if model.decision(r) >= 0.0 { 1 } else { 0 })
        .collect())
}

// ---------------------------------------------------------------------------
// Metrics

/// `(micro, macro)` F1 over the classes present in either sequence.
pub fn f1_scores(truth: &[Label], predicted: &[Label]) -> Result<(f64, f64)> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let classes: BTreeSet<Label> = truth.iter().chain(predicted).copied().collect();
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    let mut per_class = Vec::new();
    for &c in &classes {
        let tp = truth.iter().zip(predicted).filter(|(t, p)| **t == c && **p == c).count();
        let fp = truth.iter().zip(predicted).filter(|(t, p)| **t != c && **p == c).count();
        let fn_ = truth.iter().zip(predicted).filter(|(t, p)| **t == c && **p != c).count();
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let denom = 2 * tp + fp + fn_;
        per_class.push(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 });
    }
    let micro = 2.0 * tp_all as f64 / (2 * tp_all + fp_all + fn_all) as f64;
    let macro_ = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok((micro, macro_))
}

/// Two-proportion Z statistic `(p1 - p2) / sqrt(2·p̄(1 - p̄)/n)` and its two-sided p-value.
pub fn z_test(p1: f64, p2: f64, n: usize) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
        return Err(Error::InvalidArgument("proportions must lie in [0, 1]".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let pbar = 0.5 * (p1 + p2);
    if pbar <= 0.0 || pbar >= 1.0 {
        return Err(Error::Degenerate(format!("pooled proportion {pbar} gives zero variance")));
    }
    let z = (p1 - p2) / (2.0 * pbar * (1.0 - pbar) / n as f64).sqrt();
    Ok((z, (2.0 * normal_sf(z.abs())).min(1.0)))
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Fingerprints proving which documents every fitted artifact saw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub train_ids: Fingerprint,
    pub test_ids: Fingerprint,
    /// `(artifact, fitted_on)` for every train-fitted step, classifier last.
    pub fitted: Vec<(String, Fingerprint)>,
    pub shared_groups: usize,
}

impl LeakageAudit {
    pub fn is_clean(&self) -> bool {
        self.shared_groups == 0 && self.fitted.iter().all(|(_, fp)| *fp == self.train_ids)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub n_test: usize,
    pub feature_dim: usize,
    pub audit: LeakageAudit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub group_id: String,
    pub fold: usize,
    pub truth: Label,
    pub predicted: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: String,
    pub pca_drop_first: bool,
    pub classifier: LinearKind,
    pub per_fold: Vec<FoldResult>,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        let correct = self.predictions.iter().filter(|p| p.truth == p.predicted).count();
        correct as f64 / self.predictions.len().max(1) as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(body: &str) -> Result<Self> {
        Ok(serde_json::from_str(body)?)
    }

    /// One `scheme f1_micro f1_macro` row with a header.
    pub fn summary_tsv(&self) -> String {
        let name = if self.pca_drop_first {
            format!("{}+pca", self.scheme)
        } else {
            self.scheme.clone()
        };
        format!("scheme\tf1_micro\tf1_macro\n{name}\t{}\t{}\n", self.f1_micro, self.f1_macro)
    }

    pub fn folds_tsv(&self) -> String {
        let mut out = String::from("fold\tf1_micro\tf1_macro\tn_test\n");
        for f in &self.per_fold {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", f.fold + 1, f.f1_micro, f.f1_macro, f.n_test);
        }
        let _ = writeln!(out, "average\t{}\t{}\t{}", self.f1_micro, self.f1_macro, self.predictions.len());
        out
    }

    pub fn audits_clean(&self) -> bool {
        self.per_fold.iter().all(|f| f.audit.is_clean())
    }
}

/// Where fold features come from.
#[derive(Clone, Copy)]
pub enum FoldFeatures<'a> {
    /// Precomputed rows aligned with the documents.
    Fixed(&'a FeatureMatrix),
    /// TF-IDF refitted on each training split.
    TfIdf { top_n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub pca_drop_first: bool,
    pub train: TrainOptions,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 5,
            seed: 0,
            pca_drop_first: false,
            train: TrainOptions::default(),
            parallelism: Parallelism::Sequential,
        }
    }
}

/// Grouped k-fold evaluation. Every train-fitted artifact is fingerprinted
/// and checked against the fold's training documents; a mismatch is an error.
pub fn cross_validate(docs: &[Document], features: FoldFeatures<'_>, scheme: &str, opts: &CvOptions) -> Result<EvalReport> {
    let labels: Vec<Label> = docs
        .iter()
        .map(|d| d.label.ok_or_else(|| Error::InvalidArgument(format!("document {} has no label", d.id))))
        .collect::<Result<_>>()?;
    if let FoldFeatures::Fixed(m) = features {
        if m.doc_ids.len() != docs.len() || m.doc_ids.iter().zip(docs).any(|(a, d)| *a != d.id) {
            return Err(Error::InvalidArgument("feature rows are not aligned with documents".into()));
        }
    }
    let plan = group_kfold(docs, opts.folds, derive_seed(opts.seed, "folds"))?;
    let results = par::map_range(opts.parallelism, opts.folds, |fold| {
        run_fold(docs, &labels, features, &plan, fold, opts)
    });
    let mut per_fold = Vec::with_capacity(opts.folds);
    let mut predictions = Vec::with_capacity(docs.len());
    for r in results {
        let (fr, preds) = r?;
        per_fold.push(fr);
        predictions.extend(preds);
    }
    let k = per_fold.len() as f64;
    Ok(EvalReport {
        scheme: scheme.to_string(),
        pca_drop_first: opts.pca_drop_first,
        classifier: opts.train.kind,
        f1_micro: per_fold.iter().map(|f| f.f1_micro).sum::<f64>() / k,
        f1_macro: per_fold.iter().map(|f| f.f1_macro).sum::<f64>() / k,
        per_fold,
        predictions,
    })
}

fn run_fold(
    docs: &[Document],
    labels: &[Label],
    features: FoldFeatures<'_>,
    plan: &FoldPlan,
    fold: usize,
    opts: &CvOptions,
) -> Result<(FoldResult, Vec<Prediction>)> {
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let (mut train, mut test) = match features {
        FoldFeatures::Fixed(m) => (m.select(&train_idx), m.select(&test_idx)),
        FoldFeatures::TfIdf { top_n } => {
            let train_docs: Vec<Document> = train_idx.iter().map(|&i| docs[i].clone()).collect();
            let test_docs: Vec<Document> = test_idx.iter().map(|&i| docs[i].clone()).collect();
            let t = TfIdf::fit(&train_docs, top_n)?;
            (
                t.transform(&train_docs, Parallelism::Sequential)?,
                t.transform(&test_docs, Parallelism::Sequential)?,
            )
        }
    };
    if opts.pca_drop_first {
        let t = fit_pca_drop_first(&train)?;
        train = apply_pca(&t, &train)?;
        test = apply_pca(&t, &test)?;
    }
    let train_labels: Vec<Label> = train_idx.iter().map(|&i| labels[i]).collect();
    let model = train_linear(&train, &train_labels, &opts.train)?;
    let predicted = predict(&model, &test.rows)?;
    let truth: Vec<Label> = test_idx.iter().map(|&i| labels[i]).collect();
    let (f1_micro, f1_macro) = f1_scores(&truth, &predicted)?;

    let train_groups: HashSet<&str> = train_idx.iter().map(|&i| docs[i].group_id.as_str()).collect();
    let shared_groups = test_idx
        .iter()
        .map(|&i| docs[i].group_id.as_str())
        .filter(|g| train_groups.contains(g))
        .collect::<BTreeSet<_>>()
        .len();
    let mut fitted: Vec<(String, Fingerprint)> = Vec::new();
    for p in train.provenance.iter().chain(&test.provenance) {
        if !fitted.iter().any(|(a, fp)| *a == p.artifact && *fp == p.fitted_on) {
            fitted.push((p.artifact.clone(), p.fitted_on));
        }
    }
    fitted.push(("classifier".into(), model.trained_on));
    let audit = LeakageAudit {
        train_ids: Fingerprint::of_id_set(train_idx.iter().map(|&i| docs[i].id.as_str())),
        test_ids: Fingerprint::of_id_set(test_idx.iter().map(|&i| docs[i].id.as_str())),
        fitted,
        shared_groups,
    };
    if !audit.is_clean() {
        return Err(Error::Leakage(format!("fold {} audit failed: {audit:?}", fold + 1)));
    }
    let preds = test_idx
        .iter()
        .zip(&predicted)
        .map(|(&i, &p)| Prediction {
            doc_id: docs[i].id.clone(),
            group_id: docs[i].group_id.clone(),
            fold,
            truth: labels[i],
            predicted: p,
        })
        .collect();
    Ok((
        FoldResult {
            fold,
            f1_micro,
            f1_macro,
            n_test: test_idx.len(),
            feature_dim: train.dim(),
            audit,
        },
        preds,
    ))
}

/// Z-test on the pooled accuracies of two reports over the same documents.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<(f64, f64)> {
    if a.predictions.len() != b.predictions.len() {
        return Err(Error::DimensionMismatch {
            expected: a.predictions.len(),
            actual: b.predictions.len(),
        });
    }
    fn ids(r: &EvalReport) -> Vec<&str> {
        let mut v: Vec<&str> = r.predictions.iter().map(|p| p.doc_id.as_str()).collect();
        v.sort_unstable();
        v
    }
    if ids(a) != ids(b) {
        return Err(Error::InvalidArgument("reports cover different documents".into()));
    }
    z_test(a.accuracy(), b.accuracy(), a.predictions.len())
}
