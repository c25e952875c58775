//! Train-from-scratch classifiers and the trigram language model that
//! attacks target and constraints consult.
//!
//! All models are immutable after training and safe to score from many
//! threads. Save/load uses versioned JSON with weights as decimal strings
//! (Rust's shortest round-trip formatting), so reloaded models predict
//! bit-identically.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{LabeledDataset, TokenSequence, Vocabulary};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("class {0} has zero documents")]
    EmptyClass(usize),
    #[error("class {0} has no tokens and alpha = 0")]
    ClassWithoutTokens(usize),
    #[error("feature dimension {got} does not match expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("sequence of length {len} is shorter than k = {k}")]
    SequenceTooShort { len: usize, k: usize },
    #[error("token id {0} is not a nucleotide id (expected 0..4)")]
    NotNucleotide(u32),
    #[error("training loss became non-finite")]
    NonFiniteLoss,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("model file: {0}")]
    BadModelFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Per-class scores (log-posterior up to an additive constant).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub scores: Vec<f64>,
}

impl ClassScores {
    /// Argmax label with deterministic tie-break: lowest class id wins.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate().skip(1) {
            if s > self.scores[best] {
                best = i;
            }
        }
        best
    }

    pub fn num_classes(&self) -> usize {
        self.scores.len()
    }
}

fn fmt_f64(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else {
        // Shortest decimal that parses back to the same bits.
        format!("{x}")
    }
}

fn parse_f64(s: &str) -> Result<f64, ModelError> {
    match s {
        "-inf" => Ok(f64::NEG_INFINITY),
        "inf" => Ok(f64::INFINITY),
        _ => s
            .parse()
            .map_err(|_| ModelError::BadModelFile(format!("bad number {s:?}"))),
    }
}

/// Options for Naive Bayes training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbOptions {
    /// Count each token at most once per document.
    pub binarize: bool,
    /// Additive smoothing pseudo-count.
    pub alpha: f64,
}

impl Default for NbOptions {
    fn default() -> Self {
        Self {
            binarize: false,
            alpha: 1.0,
        }
    }
}

/// Multinomial Naive Bayes with per-class token log-probabilities.
///
/// The decision rule is linear: `log p(y|x) ∝ prior_log[y] + <w[y], x>`,
/// so adding one occurrence of token `l` moves the class-`y` score by
/// exactly `w[y][l]`.
#[derive(Debug, Clone)]
pub struct NaiveBayesModel {
    num_classes: usize,
    vocab_size: usize,
    /// Flattened `[num_classes * vocab_size]`, `w[y * V + l] = log p̂_{ly}`.
    w: Vec<f64>,
    prior_log: Vec<f64>,
    /// Raw token counts `D_{ly}`, same layout as `w`.
    counts: Vec<f64>,
    /// Total token count per class, `D_y`.
    class_token_totals: Vec<f64>,
    options: NbOptions,
}

/// Estimate `p̂_{ly} = (D_{ly} + α) / (D_y + αV)` from count vectors over a
/// feature space of size `num_features` (vocabulary tokens, k-mers, ...).
pub fn train_naive_bayes_on_counts(
    xs: &[Vec<f64>],
    ys: &[usize],
    num_classes: usize,
    num_features: usize,
    options: NbOptions,
) -> Result<NaiveBayesModel, ModelError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(ModelError::EmptyDataset);
    }
    if options.alpha < 0.0 || !options.alpha.is_finite() {
        return Err(ModelError::InvalidParam("alpha must be finite and >= 0".into()));
    }
    let k = num_classes;
    let v = num_features;
    let mut doc_counts = vec![0usize; k];
    let mut counts = vec![0.0f64; k * v];
    for (x, &y) in xs.iter().zip(ys) {
        if x.len() != v {
            return Err(ModelError::DimensionMismatch {
                got: x.len(),
                expected: v,
            });
        }
        doc_counts[y] += 1;
        for (l, &c) in x.iter().enumerate() {
            let c = if options.binarize && c > 0.0 { 1.0 } else { c };
            counts[y * v + l] += c;
        }
    }
    for (y, &n) in doc_counts.iter().enumerate() {
        if n == 0 {
            return Err(ModelError::EmptyClass(y));
        }
    }
    let mut class_token_totals = vec![0.0f64; k];
    for y in 0..k {
        class_token_totals[y] = counts[y * v..(y + 1) * v].iter().sum();
        if class_token_totals[y] == 0.0 && options.alpha == 0.0 {
            return Err(ModelError::ClassWithoutTokens(y));
        }
    }
    let mut w = vec![0.0f64; k * v];
    for y in 0..k {
        let denom = class_token_totals[y] + options.alpha * v as f64;
        for l in 0..v {
            // alpha = 0 with a zero count yields ln 0 = -inf; scoring skips
            // zero-count features so -inf never meets a 0 coefficient.
            w[y * v + l] = ((counts[y * v + l] + options.alpha) / denom).ln();
        }
    }
    let total_docs: usize = doc_counts.iter().sum();
    let prior_log = doc_counts
        .iter()
        .map(|&n| (n as f64 / total_docs as f64).ln())
        .collect();
    Ok(NaiveBayesModel {
        num_classes: k,
        vocab_size: v,
        w,
        prior_log,
        counts,
        class_token_totals,
        options,
    })
}

/// Train Naive Bayes on bag-of-tokens counts over the dataset vocabulary.
pub fn train_naive_bayes(
    ds: &LabeledDataset,
    options: NbOptions,
) -> Result<NaiveBayesModel, ModelError> {
    if ds.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let v = ds.vocabulary.size();
    let xs: Vec<Vec<f64>> = ds
        .examples
        .iter()
        .map(|(s, _)| token_counts(s, v, false))
        .collect();
    let ys: Vec<usize> = ds.examples.iter().map(|(_, y)| *y).collect();
    train_naive_bayes_on_counts(&xs, &ys, ds.num_classes, v, options)
}

/// Train Naive Bayes on an arbitrary count featurization of a dataset.
pub fn train_naive_bayes_featurized(
    ds: &LabeledDataset,
    featurizer: &Featurizer,
    options: NbOptions,
) -> Result<NaiveBayesModel, ModelError> {
    if ds.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let xs: Result<Vec<Vec<f64>>, ModelError> = ds
        .examples
        .iter()
        .map(|(s, _)| featurizer.apply(s, &ds.vocabulary))
        .collect();
    let ys: Vec<usize> = ds.examples.iter().map(|(_, y)| *y).collect();
    train_naive_bayes_on_counts(
        &xs?,
        &ys,
        ds.num_classes,
        featurizer.num_features(&ds.vocabulary),
        options,
    )
}

impl NaiveBayesModel {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn options(&self) -> NbOptions {
        self.options
    }

    pub fn weight(&self, class: usize, token: usize) -> f64 {
        self.w[class * self.vocab_size + token]
    }

    pub fn prior_log(&self, class: usize) -> f64 {
        self.prior_log[class]
    }

    /// Raw training count `D_{ly}`.
    pub fn token_count(&self, class: usize, token: usize) -> f64 {
        self.counts[class * self.vocab_size + token]
    }

    /// Total training token count `D_y`.
    pub fn class_token_total(&self, class: usize) -> f64 {
        self.class_token_totals[class]
    }

    /// Log-ratio `w[to][l] - w[from][l]`; the score shift from one extra
    /// occurrence of `l`, in favor of `to`.
    pub fn delta(&self, token: usize, to: usize, from: usize) -> f64 {
        self.weight(to, token) - self.weight(from, token)
    }

    /// Unnormalized log-posterior `prior_log[y] + <w[y], x>` per class.
    pub fn log_posterior(&self, x: &[f64]) -> Result<ClassScores, ModelError> {
        if x.len() != self.vocab_size {
            return Err(ModelError::DimensionMismatch {
                got: x.len(),
                expected: self.vocab_size,
            });
        }
        let mut scores = self.prior_log.clone();
        for (l, &cnt) in x.iter().enumerate() {
            if cnt == 0.0 {
                continue;
            }
            for (y, score) in scores.iter_mut().enumerate() {
                *score += cnt * self.w[y * self.vocab_size + l];
            }
        }
        Ok(ClassScores { scores })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ModelError> {
        Ok(self.log_posterior(x)?.argmax())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let file = NbFile {
            format: NB_FORMAT.into(),
            num_classes: self.num_classes,
            vocab_size: self.vocab_size,
            binarize: self.options.binarize,
            alpha: fmt_f64(self.options.alpha),
            prior_log: self.prior_log.iter().map(|&x| fmt_f64(x)).collect(),
            weights: self.w.iter().map(|&x| fmt_f64(x)).collect(),
            counts: self.counts.iter().map(|&x| fmt_f64(x)).collect(),
            class_token_totals: self
                .class_token_totals
                .iter()
                .map(|&x| fmt_f64(x))
                .collect(),
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| ModelError::BadModelFile(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let file: NbFile =
            serde_json::from_str(&text).map_err(|e| ModelError::BadModelFile(e.to_string()))?;
        if file.format != NB_FORMAT {
            return Err(ModelError::BadModelFile(format!(
                "unsupported format {:?}",
                file.format
            )));
        }
        let parse_all = |v: &[String]| -> Result<Vec<f64>, ModelError> {
            v.iter().map(|s| parse_f64(s)).collect()
        };
        let model = NaiveBayesModel {
            num_classes: file.num_classes,
            vocab_size: file.vocab_size,
            w: parse_all(&file.weights)?,
            prior_log: parse_all(&file.prior_log)?,
            counts: parse_all(&file.counts)?,
            class_token_totals: parse_all(&file.class_token_totals)?,
            options: NbOptions {
                binarize: file.binarize,
                alpha: parse_f64(&file.alpha)?,
            },
        };
        if model.w.len() != model.num_classes * model.vocab_size {
            return Err(ModelError::BadModelFile("weight shape mismatch".into()));
        }
        Ok(model)
    }
}

const NB_FORMAT: &str = "synadv-naive-bayes-v1";

#[derive(Serialize, Deserialize)]
struct NbFile {
    format: String,
    num_classes: usize,
    vocab_size: usize,
    binarize: bool,
    alpha: String,
    prior_log: Vec<String>,
    weights: Vec<String>,
    counts: Vec<String>,
    class_token_totals: Vec<String>,
}

/// Bag-of-tokens count vector for a sequence.
pub fn token_counts(seq: &TokenSequence, vocab_size: usize, binarize: bool) -> Vec<f64> {
    let mut x = vec![0.0; vocab_size];
    for &id in seq.ids() {
        if binarize {
            x[id as usize] = 1.0;
        } else {
            x[id as usize] += 1.0;
        }
    }
    x
}

/// Contiguous k-mer counts over a nucleotide sequence (ids 0..4).
///
/// Returns a vector of length `4^k` whose entries sum to `len - k + 1`.
pub fn kmer_features(seq: &TokenSequence, k: usize) -> Result<Vec<f64>, ModelError> {
    if k < 1 {
        return Err(ModelError::InvalidParam("k must be >= 1".into()));
    }
    if seq.len() < k {
        return Err(ModelError::SequenceTooShort { len: seq.len(), k });
    }
    let size = 4usize.pow(k as u32);
    let mut x = vec![0.0; size];
    let mut code = 0usize;
    for (i, &id) in seq.ids().iter().enumerate() {
        if id >= 4 {
            return Err(ModelError::NotNucleotide(id));
        }
        code = (code * 4 + id as usize) % size;
        if i + 1 >= k {
            x[code] += 1.0;
        }
    }
    Ok(x)
}

/// How raw inputs become feature vectors for a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Featurizer {
    /// Bag-of-tokens counts over the vocabulary.
    TokenCounts { binarize: bool },
    /// Raw k-mer counts (DNA only).
    KmerCounts { k: usize },
    /// k-mer counts normalized to frequencies (DNA only).
    KmerFreq { k: usize },
}

impl Featurizer {
    pub fn id(&self) -> String {
        match self {
            Featurizer::TokenCounts { binarize: false } => "token-counts".into(),
            Featurizer::TokenCounts { binarize: true } => "token-counts-binarized".into(),
            Featurizer::KmerCounts { k } => format!("kmer{k}-counts"),
            Featurizer::KmerFreq { k } => format!("kmer{k}-freq"),
        }
    }

    pub fn num_features(&self, vocab: &Vocabulary) -> usize {
        match self {
            Featurizer::TokenCounts { .. } => vocab.size(),
            Featurizer::KmerCounts { k } | Featurizer::KmerFreq { k } => 4usize.pow(*k as u32),
        }
    }

    pub fn apply(&self, seq: &TokenSequence, vocab: &Vocabulary) -> Result<Vec<f64>, ModelError> {
        match self {
            Featurizer::TokenCounts { binarize } => {
                Ok(token_counts(seq, vocab.size(), *binarize))
            }
            Featurizer::KmerCounts { k } => kmer_features(seq, *k),
            Featurizer::KmerFreq { k } => {
                let mut x = kmer_features(seq, *k)?;
                let total: f64 = x.iter().sum();
                if total > 0.0 {
                    x.iter_mut().for_each(|v| *v /= total);
                }
                Ok(x)
            }
        }
    }
}

/// Hyperparameters for full-batch gradient-descent logistic regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticHyper {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        Self {
            lr: 0.5,
            epochs: 200,
            l2: 1e-4,
        }
    }
}

/// Softmax regression over a fixed feature space.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    num_classes: usize,
    num_features: usize,
    /// Flattened `[num_classes * num_features]`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    featurizer_id: String,
}

/// Mean cross-entropy loss with L2 penalty, and its gradient.
///
/// Exposed so the analytic gradient can be checked against central finite
/// differences.
pub fn logistic_loss_and_grad(
    weights: &[f64],
    bias: &[f64],
    xs: &[Vec<f64>],
    ys: &[usize],
    num_classes: usize,
    l2: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let f = xs[0].len();
    let mut loss = 0.0;
    let mut gw = vec![0.0; num_classes * f];
    let mut gb = vec![0.0; num_classes];
    let mut z = vec![0.0; num_classes];
    for (x, &y) in xs.iter().zip(ys) {
        for c in 0..num_classes {
            let mut s = bias[c];
            for (j, &xj) in x.iter().enumerate() {
                s += weights[c * f + j] * xj;
            }
            z[c] = s;
        }
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = m + z.iter().map(|&s| (s - m).exp()).sum::<f64>().ln();
        loss += log_norm - z[y];
        for c in 0..num_classes {
            let p = (z[c] - log_norm).exp();
            let g = p - if c == y { 1.0 } else { 0.0 };
            gb[c] += g;
            for (j, &xj) in x.iter().enumerate() {
                if xj != 0.0 {
                    gw[c * f + j] += g * xj;
                }
            }
        }
    }
    loss /= n as f64;
    for g in gw.iter_mut() {
        *g /= n as f64;
    }
    for g in gb.iter_mut() {
        *g /= n as f64;
    }
    let mut penalty = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        penalty += w * w;
        gw[i] += l2 * w;
    }
    loss += 0.5 * l2 * penalty;
    (loss, gw, gb)
}

/// Full-batch gradient descent from zero initialization. The step is halved
/// whenever it would increase the loss, so the loss trace is monotone
/// non-increasing.
pub fn train_logistic_on_vectors(
    xs: &[Vec<f64>],
    ys: &[usize],
    num_classes: usize,
    hyper: LogisticHyper,
    featurizer_id: &str,
) -> Result<LogisticModel, ModelError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(ModelError::EmptyDataset);
    }
    let f = xs[0].len();
    if xs.iter().any(|x| x.len() != f) {
        return Err(ModelError::DimensionMismatch {
            got: 0,
            expected: f,
        });
    }
    let mut weights = vec![0.0; num_classes * f];
    let mut bias = vec![0.0; num_classes];
    let mut lr = hyper.lr;
    let (mut loss, mut gw, mut gb) =
        logistic_loss_and_grad(&weights, &bias, xs, ys, num_classes, hyper.l2);
    for _ in 0..hyper.epochs {
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        let mut halvings = 0;
        loop {
            let cand_w: Vec<f64> = weights
                .iter()
                .zip(&gw)
                .map(|(w, g)| w - lr * g)
                .collect();
            let cand_b: Vec<f64> = bias.iter().zip(&gb).map(|(b, g)| b - lr * g).collect();
            let (cand_loss, cand_gw, cand_gb) =
                logistic_loss_and_grad(&cand_w, &cand_b, xs, ys, num_classes, hyper.l2);
            if cand_loss <= loss || halvings >= 30 {
                weights = cand_w;
                bias = cand_b;
                loss = cand_loss.min(loss);
                gw = cand_gw;
                gb = cand_gb;
                break;
            }
            lr *= 0.5;
            halvings += 1;
        }
    }
    if !loss.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(ModelError::NonFiniteLoss);
    }
    Ok(LogisticModel {
        num_classes,
        num_features: f,
        weights,
        bias,
        featurizer_id: featurizer_id.into(),
    })
}

/// Featurize a dataset and fit softmax regression on it.
pub fn train_logistic(
    ds: &LabeledDataset,
    featurizer: &Featurizer,
    hyper: LogisticHyper,
) -> Result<LogisticModel, ModelError> {
    if ds.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let xs: Result<Vec<Vec<f64>>, ModelError> = ds
        .examples
        .iter()
        .map(|(s, _)| featurizer.apply(s, &ds.vocabulary))
        .collect();
    let ys: Vec<usize> = ds.examples.iter().map(|(_, y)| *y).collect();
    train_logistic_on_vectors(&xs?, &ys, ds.num_classes, hyper, &featurizer.id())
}

impl LogisticModel {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn featurizer_id(&self) -> &str {
        &self.featurizer_id
    }

    pub fn weight(&self, class: usize, feature: usize) -> f64 {
        self.weights[class * self.num_features + feature]
    }

    pub fn scores(&self, x: &[f64]) -> Result<ClassScores, ModelError> {
        if x.len() != self.num_features {
            return Err(ModelError::DimensionMismatch {
                got: x.len(),
                expected: self.num_features,
            });
        }
        let mut scores = self.bias.clone();
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (c, s) in scores.iter_mut().enumerate() {
                *s += self.weights[c * self.num_features + j] * xj;
            }
        }
        Ok(ClassScores { scores })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ModelError> {
        Ok(self.scores(x)?.argmax())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let file = LogisticFile {
            format: LOGISTIC_FORMAT.into(),
            num_classes: self.num_classes,
            num_features: self.num_features,
            featurizer_id: self.featurizer_id.clone(),
            weights: self.weights.iter().map(|&x| fmt_f64(x)).collect(),
            bias: self.bias.iter().map(|&x| fmt_f64(x)).collect(),
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| ModelError::BadModelFile(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let file: LogisticFile =
            serde_json::from_str(&text).map_err(|e| ModelError::BadModelFile(e.to_string()))?;
        if file.format != LOGISTIC_FORMAT {
            return Err(ModelError::BadModelFile(format!(
                "unsupported format {:?}",
                file.format
            )));
        }
        let weights: Result<Vec<f64>, _> = file.weights.iter().map(|s| parse_f64(s)).collect();
        let bias: Result<Vec<f64>, _> = file.bias.iter().map(|s| parse_f64(s)).collect();
        Ok(LogisticModel {
            num_classes: file.num_classes,
            num_features: file.num_features,
            weights: weights?,
            bias: bias?,
            featurizer_id: file.featurizer_id,
        })
    }
}

const LOGISTIC_FORMAT: &str = "synadv-logistic-v1";

#[derive(Serialize, Deserialize)]
struct LogisticFile {
    format: String,
    num_classes: usize,
    num_features: usize,
    featurizer_id: String,
    weights: Vec<String>,
    bias: Vec<String>,
}

/// Sentinel context id for the two padded start positions.
fn start_id(vocab_size: usize) -> u32 {
    vocab_size as u32
}

/// Interpolated trigram language model over token ids.
///
/// `P(w | u, v) = λ3 P̂3 + λ2 P̂2 + λ1 P̂1` with maximum-likelihood component
/// estimates; a component whose context was never seen falls back to the
/// uniform distribution `1/V`. Tokens rarer than `min_count` in the training
/// corpus are remapped to the vocabulary's OOV id.
#[derive(Debug, Clone)]
pub struct TrigramLM {
    lambda: [f64; 3],
    vocab_size: usize,
    remap: Vec<u32>,
    trigram: HashMap<(u32, u32, u32), u64>,
    tri_ctx: HashMap<(u32, u32), u64>,
    bigram: HashMap<(u32, u32), u64>,
    bi_ctx: HashMap<u32, u64>,
    unigram: Vec<u64>,
    total: u64,
}

/// Count n-grams over the corpus with two padded start symbols per sequence.
pub fn train_trigram_lm(
    corpus: &[TokenSequence],
    vocab: &Vocabulary,
    lambda: [f64; 3],
    min_count: usize,
) -> Result<TrigramLM, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if lambda.iter().any(|&l| l <= 0.0) || (lambda.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(ModelError::InvalidParam(
            "lambda components must be positive and sum to 1".into(),
        ));
    }
    let v = vocab.size();
    let mut freq = vec![0u64; v];
    for seq in corpus {
        for &id in seq.ids() {
            freq[id as usize] += 1;
        }
    }
    let oov = vocab.oov_id();
    let remap: Vec<u32> = (0..v as u32)
        .map(|id| {
            if id == oov || freq[id as usize] >= min_count as u64 {
                id
            } else {
                oov
            }
        })
        .collect();

    let start = start_id(v);
    let mut lm = TrigramLM {
        lambda,
        vocab_size: v,
        remap,
        trigram: HashMap::new(),
        tri_ctx: HashMap::new(),
        bigram: HashMap::new(),
        bi_ctx: HashMap::new(),
        unigram: vec![0; v],
        total: 0,
    };
    for seq in corpus {
        let mut c1 = start;
        let mut c2 = start;
        for &raw in seq.ids() {
            let w = lm.remap[raw as usize];
            *lm.trigram.entry((c1, c2, w)).or_insert(0) += 1;
            *lm.tri_ctx.entry((c1, c2)).or_insert(0) += 1;
            *lm.bigram.entry((c2, w)).or_insert(0) += 1;
            *lm.bi_ctx.entry(c2).or_insert(0) += 1;
            lm.unigram[w as usize] += 1;
            lm.total += 1;
            c1 = c2;
            c2 = w;
        }
    }
    Ok(lm)
}

impl TrigramLM {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Token ids that form the effective prediction support after rare-token
    /// remapping. Conditional distributions sum to 1 over exactly these ids.
    pub fn effective_ids(&self) -> Vec<u32> {
        (0..self.vocab_size as u32)
            .filter(|&id| self.remap[id as usize] == id)
            .collect()
    }

    /// Interpolated conditional probability of raw token `w` after context
    /// `(c1, c2)` (raw ids, or the start sentinel).
    pub fn cond_prob(&self, c1: u32, c2: u32, w: u32) -> f64 {
        let v = self.vocab_size as f64;
        let start = start_id(self.vocab_size);
        let map = |id: u32| if id == start { start } else { self.remap[id as usize] };
        let (c1, c2, w) = (map(c1), map(c2), self.remap[w as usize]);
        let uniform = 1.0 / v;
        let t3 = match self.tri_ctx.get(&(c1, c2)) {
            Some(&ctx) => {
                *self.trigram.get(&(c1, c2, w)).unwrap_or(&0) as f64 / ctx as f64
            }
            None => uniform,
        };
        let t2 = match self.bi_ctx.get(&c2) {
            Some(&ctx) => *self.bigram.get(&(c2, w)).unwrap_or(&0) as f64 / ctx as f64,
            None => uniform,
        };
        let t1 = self.unigram[w as usize] as f64 / self.total as f64;
        self.lambda[0] * t3 + self.lambda[1] * t2 + self.lambda[2] * t1
    }

    /// Natural-log probability of a sequence under padded-start scoring.
    /// Empty sequences score 0; appending a token strictly decreases it.
    pub fn log_prob(&self, seq: &TokenSequence) -> f64 {
        let start = start_id(self.vocab_size);
        let mut c1 = start;
        let mut c2 = start;
        let mut lp = 0.0;
        for &w in seq.ids() {
            lp += self.cond_prob(c1, c2, w).ln();
            c1 = c2;
            c2 = self.remap[w as usize];
        }
        lp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocabulary, encode};

    fn toy_dataset() -> LabeledDataset {
        // class 0: "a a b", class 1: "a b b"
        let corpus = vec![
            vec!["a".to_string(), "a".into(), "b".into()],
            vec!["a".to_string(), "b".into(), "b".into()],
        ];
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let examples = vec![
            (encode(&vocab, &corpus[0]), 0usize),
            (encode(&vocab, &corpus[1]), 1usize),
        ];
        LabeledDataset::new(examples, 2, vocab).unwrap()
    }

    #[test]
    fn nb_toy_delta_is_log_two() {
        let ds = toy_dataset();
        let nb = train_naive_bayes(
            &ds,
            NbOptions {
                binarize: false,
                alpha: 0.0,
            },
        )
        .unwrap();
        let b = ds.vocabulary.id("b").unwrap() as usize;
        // p̂_{b,0} = 1/3, p̂_{b,1} = 2/3 so delta_b = ln 2.
        let delta = nb.delta(b, 1, 0);
        assert!((delta - 2.0f64.ln()).abs() < 1e-12, "delta = {delta}");
    }

    #[test]
    fn nb_alpha_zero_gives_neg_infinity_and_alpha_one_is_finite() {
        let ds = toy_dataset();
        let oov = ds.vocabulary.oov_id() as usize;
        let nb0 = train_naive_bayes(
            &ds,
            NbOptions {
                binarize: false,
                alpha: 0.0,
            },
        )
        .unwrap();
        assert_eq!(nb0.weight(0, oov), f64::NEG_INFINITY);
        let nb1 = train_naive_bayes(&ds, NbOptions::default()).unwrap();
        for y in 0..2 {
            for l in 0..ds.vocabulary.size() {
                assert!(nb1.weight(y, l).is_finite());
            }
        }
    }

    #[test]
    fn nb_binarize_counts_once_per_document() {
        let ds = toy_dataset();
        let nb = train_naive_bayes(
            &ds,
            NbOptions {
                binarize: true,
                alpha: 0.0,
            },
        )
        .unwrap();
        let a = ds.vocabulary.id("a").unwrap() as usize;
        assert_eq!(nb.token_count(0, a), 1.0);
    }

    #[test]
    fn nb_per_class_probabilities_normalize() {
        let ds = toy_dataset();
        let nb = train_naive_bayes(&ds, NbOptions::default()).unwrap();
        for y in 0..2 {
            let total: f64 = (0..ds.vocabulary.size()).map(|l| nb.weight(y, l).exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nb_zero_vector_scores_equal_priors() {
        let ds = toy_dataset();
        let nb = train_naive_bayes(&ds, NbOptions::default()).unwrap();
        let x = vec![0.0; ds.vocabulary.size()];
        let scores = nb.log_posterior(&x).unwrap();
        assert_eq!(scores.scores, vec![nb.prior_log(0), nb.prior_log(1)]);
    }

    #[test]
    fn nb_one_hot_adds_single_weight() {
        let ds = toy_dataset();
        let nb = train_naive_bayes(&ds, NbOptions::default()).unwrap();
        let mut x = vec![0.0; ds.vocabulary.size()];
        x[0] = 1.0;
        let scores = nb.log_posterior(&x).unwrap();
        for y in 0..2 {
            assert!((scores.scores[y] - (nb.prior_log(y) + nb.weight(y, 0))).abs() < 1e-12);
        }
    }

    #[test]
    fn nb_dimension_mismatch_errors() {
        let ds = toy_dataset();
        let nb = train_naive_bayes(&ds, NbOptions::default()).unwrap();
        assert!(matches!(
            nb.log_posterior(&[0.0]),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nb_empty_class_errors() {
        let corpus = vec![vec!["a".to_string()]];
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let ds =
            LabeledDataset::new(vec![(encode(&vocab, &corpus[0]), 0)], 2, vocab).unwrap();
        assert!(matches!(
            train_naive_bayes(&ds, NbOptions::default()),
            Err(ModelError::EmptyClass(1))
        ));
    }

    #[test]
    fn nb_save_load_preserves_predictions() {
        let ds = toy_dataset();
        let nb = train_naive_bayes(&ds, NbOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nb.json");
        nb.save(&path).unwrap();
        let nb2 = NaiveBayesModel::load(&path).unwrap();
        let x = vec![1.0, 2.0, 0.0];
        assert_eq!(
            nb.log_posterior(&x).unwrap().scores,
            nb2.log_posterior(&x).unwrap().scores
        );
    }

    #[test]
    fn kmer_features_single_window() {
        let seq = TokenSequence::new(vec![0, 3, 2, 1]); // ATGC
        let x = kmer_features(&seq, 4).unwrap();
        assert_eq!(x.iter().sum::<f64>(), 1.0);
        let idx = ((0 * 4 + 3) * 4 + 2) * 4 + 1;
        assert_eq!(x[idx], 1.0);
    }

    #[test]
    fn kmer_features_counts_overlaps() {
        let seq = TokenSequence::new(vec![0, 0, 0, 0]); // AAAA
        let x = kmer_features(&seq, 2).unwrap();
        assert_eq!(x[0], 3.0); // AA occurs three times
    }

    #[test]
    fn kmer_features_total_is_length_identity() {
        let seq = TokenSequence::new((0..100).map(|i| (i % 4) as u32).collect());
        let x = kmer_features(&seq, 4).unwrap();
        assert_eq!(x.iter().sum::<f64>(), 97.0);
    }

    #[test]
    fn kmer_features_too_short_errors() {
        let seq = TokenSequence::new(vec![0, 1]);
        assert!(matches!(
            kmer_features(&seq, 4),
            Err(ModelError::SequenceTooShort { .. })
        ));
    }

    #[test]
    fn class_scores_tie_breaks_low() {
        let s = ClassScores {
            scores: vec![0.5, 0.5],
        };
        assert_eq!(s.argmax(), 0);
        let s = ClassScores {
            scores: vec![0.1, 0.9],
        };
        assert_eq!(s.argmax(), 1);
    }

    #[test]
    fn logistic_separates_two_points() {
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let ys = vec![0, 1];
        let model =
            train_logistic_on_vectors(&xs, &ys, 2, LogisticHyper::default(), "test").unwrap();
        assert_eq!(model.predict(&xs[0]).unwrap(), 0);
        assert_eq!(model.predict(&xs[1]).unwrap(), 1);
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let xs = vec![
            vec![0.3, -1.2, 0.7],
            vec![1.1, 0.4, -0.2],
            vec![-0.5, 0.9, 0.1],
            vec![0.0, -0.3, 1.4],
        ];
        let ys = vec![0, 1, 2, 1];
        let weights: Vec<f64> = (0..9).map(|i| 0.1 * (i as f64) - 0.4).collect();
        let bias = vec![0.05, -0.1, 0.2];
        let l2 = 0.01;
        let (_, gw, gb) = logistic_loss_and_grad(&weights, &bias, &xs, &ys, 3, l2);
        let eps = 1e-6;
        for i in 0..weights.len() {
            let mut wp = weights.clone();
            let mut wm = weights.clone();
            wp[i] += eps;
            wm[i] -= eps;
            let (lp, _, _) = logistic_loss_and_grad(&wp, &bias, &xs, &ys, 3, l2);
            let (lm, _, _) = logistic_loss_and_grad(&wm, &bias, &xs, &ys, 3, l2);
            let fd = (lp - lm) / (2.0 * eps);
            let rel = (gw[i] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel < 1e-5, "weight {i}: analytic {} vs fd {fd}", gw[i]);
        }
        for i in 0..bias.len() {
            let mut bp = bias.clone();
            let mut bm = bias.clone();
            bp[i] += eps;
            bm[i] -= eps;
            let (lp, _, _) = logistic_loss_and_grad(&weights, &bp, &xs, &ys, 3, l2);
            let (lm, _, _) = logistic_loss_and_grad(&weights, &bm, &xs, &ys, 3, l2);
            let fd = (lp - lm) / (2.0 * eps);
            assert!((gb[i] - fd).abs() / fd.abs().max(1e-8) < 1e-5);
        }
    }

    #[test]
    fn logistic_strong_l2_shrinks_weights() {
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let ys = vec![0, 1];
        let strong = train_logistic_on_vectors(
            &xs,
            &ys,
            2,
            LogisticHyper {
                l2: 1000.0,
                ..Default::default()
            },
            "test",
        )
        .unwrap();
        for c in 0..2 {
            for j in 0..2 {
                assert!(strong.weight(c, j).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn logistic_save_load_round_trip() {
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let model =
            train_logistic_on_vectors(&xs, &[0, 1], 2, LogisticHyper::default(), "f").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lg.json");
        model.save(&path).unwrap();
        let model2 = LogisticModel::load(&path).unwrap();
        let x = vec![0.3, 0.7];
        assert_eq!(
            model.scores(&x).unwrap().scores,
            model2.scores(&x).unwrap().scores
        );
    }

    fn lm_corpus() -> (Vec<TokenSequence>, Vocabulary) {
        let corpus = vec![vec!["a".to_string(), "b".into(), "c".into()]];
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let seqs = vec![encode(&vocab, &corpus[0])];
        (seqs, vocab)
    }

    #[test]
    fn trigram_hand_value() {
        let (seqs, vocab) = lm_corpus();
        let lm = train_trigram_lm(&seqs, &vocab, [0.7, 0.2, 0.1], 1).unwrap();
        let (a, b, c) = (
            vocab.id("a").unwrap(),
            vocab.id("b").unwrap(),
            vocab.id("c").unwrap(),
        );
        // P̂3(c|a,b) = 1, P̂2(c|b) = 1, P̂1(c) = 1/3.
        let expected = 0.7 + 0.2 + 0.1 * (1.0 / 3.0);
        assert!((lm.cond_prob(a, b, c) - expected).abs() < 1e-12);
    }

    #[test]
    fn trigram_conditionals_normalize() {
        let corpus = vec![
            vec!["a".to_string(), "b".into(), "c".into(), "a".into(), "b".into()],
            vec!["c".to_string(), "c".into(), "a".into()],
        ];
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let seqs: Vec<TokenSequence> = corpus.iter().map(|c| encode(&vocab, c)).collect();
        let lm = train_trigram_lm(&seqs, &vocab, [0.7, 0.2, 0.1], 1).unwrap();
        let ids = lm.effective_ids();
        let start = vocab.size() as u32;
        for &(c1, c2) in &[(start, start), (0u32, 1u32), (2, 2), (3, 0), (start, 0)] {
            let total: f64 = ids.iter().map(|&w| lm.cond_prob(c1, c2, w)).sum();
            assert!((total - 1.0).abs() < 1e-9, "context ({c1},{c2}): {total}");
        }
    }

    #[test]
    fn trigram_unseen_context_uses_lower_orders() {
        let (seqs, vocab) = lm_corpus();
        let lm = train_trigram_lm(&seqs, &vocab, [0.7, 0.2, 0.1], 1).unwrap();
        let (a, c) = (vocab.id("a").unwrap(), vocab.id("c").unwrap());
        // Context (c, c) never occurs: trigram and bigram-after-c... bigram
        // context c was never followed by anything, so both back off.
        let v = vocab.size() as f64;
        let p = lm.cond_prob(c, c, a);
        let expected = 0.7 * (1.0 / v) + 0.2 * (1.0 / v) + 0.1 * (1.0 / 3.0);
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn lm_log_prob_empty_is_zero_and_appending_decreases() {
        let (seqs, vocab) = lm_corpus();
        let lm = train_trigram_lm(&seqs, &vocab, [0.7, 0.2, 0.1], 1).unwrap();
        assert_eq!(lm.log_prob(&TokenSequence::new(vec![])), 0.0);
        let one = lm.log_prob(&TokenSequence::new(vec![0]));
        let two = lm.log_prob(&TokenSequence::new(vec![0, 1]));
        assert!(one < 0.0);
        assert!(two < one);
    }

    #[test]
    fn lm_single_token_matches_start_conditional() {
        let (seqs, vocab) = lm_corpus();
        let lm = train_trigram_lm(&seqs, &vocab, [0.7, 0.2, 0.1], 1).unwrap();
        let a = vocab.id("a").unwrap();
        let start = vocab.size() as u32;
        let expected = lm.cond_prob(start, start, a).ln();
        assert!((lm.log_prob(&TokenSequence::new(vec![a])) - expected).abs() < 1e-12);
    }

    #[test]
    fn lm_log_prob_matches_bruteforce_product() {
        let corpus = vec![
            vec!["a".to_string(), "b".into(), "a".into(), "c".into()],
            vec!["b".to_string(), "b".into(), "c".into()],
        ];
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let seqs: Vec<TokenSequence> = corpus.iter().map(|c| encode(&vocab, c)).collect();
        let lm = train_trigram_lm(&seqs, &vocab, [0.5, 0.3, 0.2], 1).unwrap();
        let seq = &seqs[0];
        let start = vocab.size() as u32;
        let mut product = 1.0f64;
        let mut ctx = (start, start);
        for &w in seq.ids() {
            product *= lm.cond_prob(ctx.0, ctx.1, w);
            ctx = (ctx.1, w);
        }
        assert!((lm.log_prob(seq) - product.ln()).abs() < 1e-10);
    }

    #[test]
    fn lm_min_count_remaps_rare_tokens() {
        let corpus = vec![vec![
            "a".to_string(),
            "a".into(),
            "rare".into(),
        ]];
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let seqs: Vec<TokenSequence> = corpus.iter().map(|c| encode(&vocab, c)).collect();
        let lm = train_trigram_lm(&seqs, &vocab, [0.7, 0.2, 0.1], 2).unwrap();
        let rare = vocab.id("rare").unwrap();
        assert!(!lm.effective_ids().contains(&rare));
        assert!(lm.effective_ids().contains(&vocab.oov_id()));
    }
}
