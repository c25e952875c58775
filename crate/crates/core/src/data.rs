//! Vocabularies, token sequences, labeled datasets, and their file formats.
//!
//! Every model and attack in this crate operates on dense integer token ids;
//! strings exist only at the file boundary. DNA is stored as nucleotide
//! tokens (alphabet A, C, G, T) and edited at codon granularity by the
//! proposers, so "fraction of symbols replaced" is always counted in
//! nucleotides.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved out-of-vocabulary token present in every vocabulary.
pub const OOV_TOKEN: &str = "<oov>";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: not a codon multiple")]
    NotCodonMultiple { line: usize },
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("graph is not symmetric with zero diagonal")]
    MalformedGraph,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// An ordered set of distinct token strings with dense 0-based ids and a
/// reserved out-of-vocabulary id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    oov_id: u32,
}

impl Vocabulary {
    /// Build from an explicit token list. `<oov>` is appended if absent.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, DataError> {
        let mut all = tokens;
        if !all.iter().any(|t| t == OOV_TOKEN) {
            all.push(OOV_TOKEN.to_string());
        }
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(DataError::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        let oov_id = index[OOV_TOKEN];
        Ok(Self {
            tokens: all,
            index,
            oov_id,
        })
    }

    /// The fixed nucleotide vocabulary: A=0, C=1, G=2, T=3, `<oov>`=4.
    pub fn dna() -> Self {
        Self::from_tokens(vec!["A".into(), "C".into(), "G".into(), "T".into()]).unwrap()
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn oov_id(&self) -> u32 {
        self.oov_id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_oov(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(self.oov_id)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }
}

/// Build a vocabulary from a corpus. Tokens with frequency below `min_count`
/// are excluded and will map to the OOV id. Ordering is deterministic:
/// descending frequency, ties broken by lexicographic token; `<oov>` is
/// always the last id.
pub fn build_vocabulary(
    corpus: &[Vec<String>],
    min_count: usize,
) -> Result<Vocabulary, DataError> {
    if corpus.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    if min_count < 1 {
        return Err(DataError::Vocabulary("min_count must be >= 1".into()));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for seq in corpus {
        for tok in seq {
            *freq.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    // The reserved token never competes for a ranked slot.
    freq.remove(OOV_TOKEN);
    let mut kept: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()).collect())
}

/// A datapoint as token ids. Substitution-only edits preserve length.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSequence {
    ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Replace the slice starting at `start` with `replacement`, returning a
    /// new sequence of identical length.
    pub fn substitute(&self, start: usize, replacement: &[u32]) -> Self {
        debug_assert!(start + replacement.len() <= self.ids.len());
        let mut ids = self.ids.clone();
        ids[start..start + replacement.len()].copy_from_slice(replacement);
        Self { ids }
    }

    /// Number of positions where the two sequences differ.
    pub fn hamming(&self, other: &Self) -> usize {
        debug_assert_eq!(self.len(), other.len());
        self.ids
            .iter()
            .zip(&other.ids)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), DataError> {
        for &id in &self.ids {
            if id as usize >= vocab.size() {
                return Err(DataError::IdOutOfRange {
                    id,
                    size: vocab.size(),
                });
            }
        }
        Ok(())
    }
}

/// Map token strings to ids; unknown tokens become the OOV id.
pub fn encode(vocab: &Vocabulary, tokens: &[String]) -> TokenSequence {
    TokenSequence::new(tokens.iter().map(|t| vocab.id_or_oov(t)).collect())
}

/// Map ids back to token strings. Unknown tokens round-trip as `<oov>`.
pub fn decode(vocab: &Vocabulary, seq: &TokenSequence) -> Vec<String> {
    seq.ids().iter().map(|&id| vocab.token(id).to_string()).collect()
}

/// Labeled examples over a shared vocabulary with class ids `0..num_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub examples: Vec<(TokenSequence, usize)>,
    pub num_classes: usize,
    pub vocabulary: Vocabulary,
}

impl LabeledDataset {
    pub fn new(
        examples: Vec<(TokenSequence, usize)>,
        num_classes: usize,
        vocabulary: Vocabulary,
    ) -> Result<Self, DataError> {
        let ds = Self {
            examples,
            num_classes,
            vocabulary,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for (seq, label) in &self.examples {
            if *label >= self.num_classes {
                return Err(DataError::LabelOutOfRange {
                    label: *label,
                    num_classes: self.num_classes,
                });
            }
            seq.validate(&self.vocabulary)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Total token count across all examples.
    pub fn total_tokens(&self) -> usize {
        self.examples.iter().map(|(s, _)| s.len()).sum()
    }
}

/// On-disk dataset formats. Both are UTF-8 with LF line endings; the writer
/// mirrors the reader bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// One example per line: `label<TAB>tok tok ...`.
    TsvTokens,
    /// FASTA records `>label=<int> id=<string>` followed by sequence lines
    /// over `{A,C,G,T}` whose total length is divisible by 3.
    FastaDna,
}

/// Parse a dataset file. Errors carry 1-based line numbers.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LabeledDataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_dataset(&text, format)
}

/// Parse dataset text in the given format.
pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<LabeledDataset, DataError> {
    match format {
        DatasetFormat::TsvTokens => parse_tsv(text),
        DatasetFormat::FastaDna => parse_fasta(text),
    }
}

fn parse_tsv(text: &str) -> Result<LabeledDataset, DataError> {
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let (label_str, rest) = line.split_once('\t').ok_or_else(|| DataError::Parse {
            line: lineno,
            msg: "missing TAB between label and tokens".into(),
        })?;
        let label: usize = label_str.parse().map_err(|_| DataError::Parse {
            line: lineno,
            msg: format!("invalid label {label_str:?}"),
        })?;
        let tokens: Vec<String> = rest.split_whitespace().map(|s| s.to_string()).collect();
        rows.push((label, tokens));
    }
    if rows.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    let corpus: Vec<Vec<String>> = rows.iter().map(|(_, t)| t.clone()).collect();
    let vocab = build_vocabulary(&corpus, 1)?;
    let num_classes = rows.iter().map(|(l, _)| l + 1).max().unwrap_or(1);
    let examples = rows
        .into_iter()
        .map(|(label, tokens)| (encode(&vocab, &tokens), label))
        .collect();
    LabeledDataset::new(examples, num_classes, vocab)
}

fn parse_fasta(text: &str) -> Result<LabeledDataset, DataError> {
    let vocab = Vocabulary::dna();
    let mut examples: Vec<(TokenSequence, usize)> = Vec::new();
    let mut current: Option<(usize, usize, Vec<u32>)> = None; // (header line, label, ids)

    let finish = |cur: Option<(usize, usize, Vec<u32>)>,
                  examples: &mut Vec<(TokenSequence, usize)>|
     -> Result<(), DataError> {
        if let Some((header_line, label, ids)) = cur {
            if ids.is_empty() {
                return Err(DataError::Parse {
                    line: header_line,
                    msg: "record has no sequence".into(),
                });
            }
            if ids.len() % 3 != 0 {
                return Err(DataError::NotCodonMultiple { line: header_line });
            }
            examples.push((TokenSequence::new(ids), label));
        }
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            finish(current.take(), &mut examples)?;
            let mut label: Option<usize> = None;
            for field in header.split_whitespace() {
                if let Some(v) = field.strip_prefix("label=") {
                    label = Some(v.parse().map_err(|_| DataError::Parse {
                        line: lineno,
                        msg: format!("invalid label {v:?}"),
                    })?);
                }
            }
            let label = label.ok_or_else(|| DataError::Parse {
                line: lineno,
                msg: "header missing label= field".into(),
            })?;
            current = Some((lineno, label, Vec::new()));
        } else {
            let (_, _, ids) = current.as_mut().ok_or_else(|| DataError::Parse {
                line: lineno,
                msg: "sequence data before first header".into(),
            })?;
            for ch in line.chars() {
                let id = match ch {
                    'A' => 0,
                    'C' => 1,
                    'G' => 2,
                    'T' => 3,
                    _ => {
                        return Err(DataError::Parse {
                            line: lineno,
                            msg: format!("invalid nucleotide {ch:?}"),
                        })
                    }
                };
                ids.push(id);
            }
        }
    }
    finish(current.take(), &mut examples)?;
    if examples.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    let num_classes = examples.iter().map(|(_, l)| l + 1).max().unwrap_or(1);
    LabeledDataset::new(examples, num_classes, vocab)
}

/// Serialize a dataset to canonical text in the given format.
pub fn format_dataset(ds: &LabeledDataset, format: DatasetFormat) -> Result<String, DataError> {
    let mut out = String::new();
    match format {
        DatasetFormat::TsvTokens => {
            for (seq, label) in &ds.examples {
                let toks = decode(&ds.vocabulary, seq);
                let _ = writeln!(out, "{label}\t{}", toks.join(" "));
            }
        }
        DatasetFormat::FastaDna => {
            for (idx, (seq, label)) in ds.examples.iter().enumerate() {
                let _ = writeln!(out, ">label={label} id={idx:06}");
                let mut s = String::with_capacity(seq.len());
                for &id in seq.ids() {
                    let ch = match id {
                        0 => 'A',
                        1 => 'C',
                        2 => 'G',
                        3 => 'T',
                        _ => {
                            return Err(DataError::Vocabulary(format!(
                                "token id {id} is not a nucleotide"
                            )))
                        }
                    };
                    s.push(ch);
                }
                let _ = writeln!(out, "{s}");
            }
        }
    }
    Ok(out)
}

/// Write a dataset; `load_dataset` on the result reproduces it exactly.
pub fn save_dataset(
    ds: &LabeledDataset,
    path: &Path,
    format: DatasetFormat,
) -> Result<(), DataError> {
    let text = format_dataset(ds, format)?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// An undirected simple graph stored as a dense symmetric adjacency matrix
/// with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdjacencyGraph {
    n: usize,
    adj: Vec<bool>,
}

impl AdjacencyGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adj: vec![false; n * n],
        }
    }

    /// Build from a row-major matrix, rejecting asymmetry or nonzero diagonal.
    pub fn from_matrix(n: usize, adj: Vec<bool>) -> Result<Self, DataError> {
        if adj.len() != n * n {
            return Err(DataError::MalformedGraph);
        }
        let g = Self { n, adj };
        for i in 0..n {
            if g.edge(i, i) {
                return Err(DataError::MalformedGraph);
            }
            for j in 0..i {
                if g.edge(i, j) != g.edge(j, i) {
                    return Err(DataError::MalformedGraph);
                }
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        assert!(i != j, "no self loops");
        self.adj[i * self.n + j] = present;
        self.adj[j * self.n + i] = present;
    }

    pub fn matrix(&self) -> &[bool] {
        &self.adj
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.edge(i, j)).count()
    }

    /// Sorted degree sequence; invariant under vertex relabeling.
    pub fn degree_multiset(&self) -> Vec<usize> {
        let mut d: Vec<usize> = (0..self.n).map(|i| self.degree(i)).collect();
        d.sort_unstable();
        d
    }

    /// Number of triangles; also invariant under vertex relabeling.
    pub fn triangle_count(&self) -> usize {
        let mut t = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                if !self.edge(i, j) {
                    continue;
                }
                for k in j + 1..self.n {
                    if self.edge(i, k) && self.edge(j, k) {
                        t += 1;
                    }
                }
            }
        }
        t
    }
}

// serde skips the index map, so rebuild it after deserializing.
impl Vocabulary {
    pub fn finish_deserialize(mut self) -> Result<Self, DataError> {
        self.rebuild_index();
        if (self.oov_id as usize) >= self.tokens.len()
            || self.tokens[self.oov_id as usize] != OOV_TOKEN
        {
            return Err(DataError::Vocabulary("bad oov id".into()));
        }
        Ok(self)
    }
}
