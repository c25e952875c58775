//! Distance components with bounds and per-position candidate proposers.
//!
//! A constraint set is an ordered list of (distance, bound) pairs; a
//! perturbation is admissible iff every component distance stays within its
//! bound (inclusive). Proposers generate the per-position replacement
//! candidates that define the attack neighborhood: synonymous codons for
//! DNA, embedding nearest neighbors for text.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

use crate::data::{AdjacencyGraph, TokenSequence, Vocabulary};
use crate::models::TrigramLM;

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("invalid codon {0:?}")]
    InvalidCodon(String),
    #[error("sequence length {0} is not divisible by 3")]
    FrameViolation(usize),
    #[error("token id {0} is not a nucleotide id")]
    NotNucleotide(u32),
    #[error("sequences have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("vertex index out of range")]
    VertexOutOfRange,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The standard genetic code in lexicographic codon order (A < C < G < T).
/// Stop codons are marked `*`.
pub const GENETIC_CODE: [(&str, char); 64] = [
    ("AAA", 'K'), ("AAC", 'N'), ("AAG", 'K'), ("AAT", 'N'),
    ("ACA", 'T'), ("ACC", 'T'), ("ACG", 'T'), ("ACT", 'T'),
    ("AGA", 'R'), ("AGC", 'S'), ("AGG", 'R'), ("AGT", 'S'),
    ("ATA", 'I'), ("ATC", 'I'), ("ATG", 'M'), ("ATT", 'I'),
    ("CAA", 'Q'), ("CAC", 'H'), ("CAG", 'Q'), ("CAT", 'H'),
    ("CCA", 'P'), ("CCC", 'P'), ("CCG", 'P'), ("CCT", 'P'),
    ("CGA", 'R'), ("CGC", 'R'), ("CGG", 'R'), ("CGT", 'R'),
    ("CTA", 'L'), ("CTC", 'L'), ("CTG", 'L'), ("CTT", 'L'),
    ("GAA", 'E'), ("GAC", 'D'), ("GAG", 'E'), ("GAT", 'D'),
    ("GCA", 'A'), ("GCC", 'A'), ("GCG", 'A'), ("GCT", 'A'),
    ("GGA", 'G'), ("GGC", 'G'), ("GGG", 'G'), ("GGT", 'G'),
    ("GTA", 'V'), ("GTC", 'V'), ("GTG", 'V'), ("GTT", 'V'),
    ("TAA", '*'), ("TAC", 'Y'), ("TAG", '*'), ("TAT", 'Y'),
    ("TCA", 'S'), ("TCC", 'S'), ("TCG", 'S'), ("TCT", 'S'),
    ("TGA", '*'), ("TGC", 'C'), ("TGG", 'W'), ("TGT", 'C'),
    ("TTA", 'L'), ("TTC", 'F'), ("TTG", 'L'), ("TTT", 'F'),
];

fn nucleotide_id(ch: char) -> Result<u32, ConstraintError> {
    match ch {
        'A' => Ok(0),
        'C' => Ok(1),
        'G' => Ok(2),
        'T' => Ok(3),
        _ => Err(ConstraintError::InvalidCodon(ch.to_string())),
    }
}

/// Dense codon index in `0..64` from three nucleotide ids.
pub fn codon_index(ids: [u32; 3]) -> Result<usize, ConstraintError> {
    for &id in &ids {
        if id >= 4 {
            return Err(ConstraintError::NotNucleotide(id));
        }
    }
    Ok((ids[0] * 16 + ids[1] * 4 + ids[2]) as usize)
}

/// Parse a 3-letter codon string into its dense index.
pub fn codon_index_of_str(codon: &str) -> Result<usize, ConstraintError> {
    let chars: Vec<char> = codon.chars().collect();
    if chars.len() != 3 {
        return Err(ConstraintError::InvalidCodon(codon.to_string()));
    }
    codon_index([
        nucleotide_id(chars[0])?,
        nucleotide_id(chars[1])?,
        nucleotide_id(chars[2])?,
    ])
}

/// Amino acid (or `*` for stop) encoded by a codon.
pub fn translate_codon(codon: &str) -> Result<char, ConstraintError> {
    Ok(GENETIC_CODE[codon_index_of_str(codon)?].1)
}

/// Translate a nucleotide id sequence (frame 0). Length must be divisible
/// by 3.
pub fn translate(seq: &TokenSequence) -> Result<String, ConstraintError> {
    if seq.len() % 3 != 0 {
        return Err(ConstraintError::FrameViolation(seq.len()));
    }
    let ids = seq.ids();
    let mut protein = String::with_capacity(seq.len() / 3);
    for chunk in ids.chunks(3) {
        let idx = codon_index([chunk[0], chunk[1], chunk[2]])?;
        protein.push(GENETIC_CODE[idx].1);
    }
    Ok(protein)
}

fn synonym_table() -> &'static [Vec<usize>; 64] {
    static TABLE: OnceLock<[Vec<usize>; 64]> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|i| {
            let amino = GENETIC_CODE[i].1;
            (0..64)
                .filter(|&j| j != i && GENETIC_CODE[j].1 == amino)
                .collect()
        })
    })
}

/// All codons encoding the same amino acid, excluding the input. Stop codons
/// map only among stop codons. Output in lexicographic codon order.
pub fn codon_synonyms(codon: &str) -> Result<Vec<String>, ConstraintError> {
    let idx = codon_index_of_str(codon)?;
    Ok(synonym_table()[idx]
        .iter()
        .map(|&j| GENETIC_CODE[j].0.to_string())
        .collect())
}

fn codon_ids_from_index(idx: usize) -> [u32; 3] {
    [(idx / 16) as u32, ((idx / 4) % 4) as u32, (idx % 4) as u32]
}

/// One proposed edit: `replacement` overwrites the slice starting at `start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    pub start: usize,
    pub replacement: Vec<u32>,
}

/// Per-position candidate generator defining the attack neighborhood.
/// Candidates never include the current content at the position.
pub trait Proposer {
    /// Editable position indices for this sequence.
    fn positions(&self, x: &TokenSequence) -> Vec<usize>;
    /// Replacement candidates at a position of `x`, computed against the
    /// current (possibly already edited) content.
    fn candidates(&self, x: &TokenSequence, pos: usize) -> Vec<Substitution>;
    /// Sequence slots covered by one position (1 for tokens, 3 for codons).
    fn span(&self) -> usize {
        1
    }
}

/// Proposes synonymous codon replacements at codon granularity. Since
/// synonymy classes are closed under composition, any sequence of accepted
/// edits preserves the translation exactly (distance 0).
#[derive(Debug, Clone, Copy)]
pub struct CodonProposer;

impl CodonProposer {
    /// Validates the reading frame (frame 0, length divisible by 3, ids < 4).
    pub fn for_sequence(seq: &TokenSequence) -> Result<Self, ConstraintError> {
        if seq.len() % 3 != 0 {
            return Err(ConstraintError::FrameViolation(seq.len()));
        }
        for &id in seq.ids() {
            if id >= 4 {
                return Err(ConstraintError::NotNucleotide(id));
            }
        }
        Ok(CodonProposer)
    }
}

impl Proposer for CodonProposer {
    fn positions(&self, x: &TokenSequence) -> Vec<usize> {
        (0..x.len() / 3).collect()
    }

    fn candidates(&self, x: &TokenSequence, pos: usize) -> Vec<Substitution> {
        let start = pos * 3;
        let ids = x.ids();
        let idx = match codon_index([ids[start], ids[start + 1], ids[start + 2]]) {
            Ok(i) => i,
            Err(_) => return Vec::new(),
        };
        synonym_table()[idx]
            .iter()
            .map(|&j| Substitution {
                start,
                replacement: codon_ids_from_index(j).to_vec(),
            })
            .collect()
    }

    fn span(&self) -> usize {
        3
    }
}

/// Proposes every other vocabulary token at every position, in id order,
/// capped at `cap` candidates. Excluded ids (typically OOV) never appear.
/// Useful for small exhaustive instances and tests.
#[derive(Debug, Clone)]
pub struct VocabProposer {
    vocab_size: usize,
    exclude: Vec<u32>,
    cap: usize,
}

impl VocabProposer {
    pub fn new(vocab_size: usize, exclude: Vec<u32>, cap: usize) -> Self {
        Self {
            vocab_size,
            exclude,
            cap,
        }
    }
}

impl Proposer for VocabProposer {
    fn positions(&self, x: &TokenSequence) -> Vec<usize> {
        (0..x.len()).collect()
    }

    fn candidates(&self, x: &TokenSequence, pos: usize) -> Vec<Substitution> {
        let current = x.ids()[pos];
        (0..self.vocab_size as u32)
            .filter(|id| *id != current && !self.exclude.contains(id))
            .take(self.cap)
            .map(|id| Substitution {
                start: pos,
                replacement: vec![id],
            })
            .collect()
    }
}

/// Token id to vector table. Tokens without a vector get no proposals and
/// contribute the zero vector to sentence embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Vec<Option<Vec<f64>>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vocab_size: usize) -> Self {
        Self {
            dim,
            vectors: vec![None; vocab_size],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn set(&mut self, id: u32, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim);
        self.vectors[id as usize] = Some(vector);
    }

    pub fn get(&self, id: u32) -> Option<&[f64]> {
        self.vectors
            .get(id as usize)
            .and_then(|v| v.as_deref())
    }

    /// Parse "token v1 v2 ... vd" lines. Tokens absent from `vocab` are
    /// skipped; ragged rows are errors.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self, ConstraintError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConstraintError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().ok_or_else(|| ConstraintError::Parse {
                line: lineno,
                msg: "empty row".into(),
            })?;
            let values: Result<Vec<f64>, _> = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|_| ConstraintError::Parse {
                        line: lineno,
                        msg: format!("bad number {f:?}"),
                    })
                })
                .collect();
            let values = values?;
            if values.is_empty() {
                return Err(ConstraintError::Parse {
                    line: lineno,
                    msg: "row has no vector components".into(),
                });
            }
            let table = table.get_or_insert_with(|| EmbeddingTable::new(values.len(), vocab.size()));
            if values.len() != table.dim {
                return Err(ConstraintError::Parse {
                    line: lineno,
                    msg: format!("expected {} components, got {}", table.dim, values.len()),
                });
            }
            if let Some(id) = vocab.id(token) {
                table.vectors[id as usize] = Some(values);
            }
        }
        table.ok_or(ConstraintError::Parse {
            line: 1,
            msg: "no embedding rows".into(),
        })
    }

    /// Write rows in token-id order for tokens that have vectors.
    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<(), ConstraintError> {
        let mut out = String::new();
        for (id, vec) in self.vectors.iter().enumerate() {
            if let Some(v) = vec {
                out.push_str(vocab.token(id as u32));
                for x in v {
                    out.push(' ');
                    out.push_str(&format!("{x}"));
                }
                out.push('\n');
            }
        }
        std::fs::write(path, out).map_err(|e| ConstraintError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn squared_distance(&self, a: u32, b: u32) -> Option<f64> {
        let va = self.get(a)?;
        let vb = self.get(b)?;
        Some(
            va.iter()
                .zip(vb)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>(),
        )
    }
}

/// Optional token -> part-of-speech tag map ("token TAB tag" lines).
#[derive(Debug, Clone, Default)]
pub struct PosLexicon {
    tags: HashMap<u32, String>,
}

impl PosLexicon {
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self, ConstraintError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConstraintError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut tags = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (token, tag) = line.split_once('\t').ok_or_else(|| ConstraintError::Parse {
                line: i + 1,
                msg: "missing TAB between token and tag".into(),
            })?;
            if let Some(id) = vocab.id(token) {
                tags.insert(id, tag.to_string());
            }
        }
        Ok(Self { tags })
    }

    pub fn tag(&self, id: u32) -> Option<&str> {
        self.tags.get(&id).map(|s| s.as_str())
    }
}

/// Proposes up to `n` embedding nearest neighbors of the token currently at
/// a position, excluding the token itself and OOV, ordered by ascending
/// Euclidean distance with ties broken by token id. An optional lexicon
/// restricts candidates to the same part-of-speech tag.
pub struct EmbeddingProposer<'a> {
    vocab: &'a Vocabulary,
    table: &'a EmbeddingTable,
    n: usize,
    lexicon: Option<&'a PosLexicon>,
}

impl<'a> EmbeddingProposer<'a> {
    pub fn new(
        vocab: &'a Vocabulary,
        table: &'a EmbeddingTable,
        n: usize,
        lexicon: Option<&'a PosLexicon>,
    ) -> Self {
        Self {
            vocab,
            table,
            n,
            lexicon,
        }
    }
}

impl Proposer for EmbeddingProposer<'_> {
    fn positions(&self, x: &TokenSequence) -> Vec<usize> {
        (0..x.len()).collect()
    }

    fn candidates(&self, x: &TokenSequence, pos: usize) -> Vec<Substitution> {
        if self.n == 0 {
            return Vec::new();
        }
        let current = x.ids()[pos];
        if current == self.vocab.oov_id() || self.table.get(current).is_none() {
            return Vec::new();
        }
        let tag = self.lexicon.map(|lex| lex.tag(current));
        let mut scored: Vec<(f64, u32)> = Vec::new();
        for id in 0..self.vocab.size() as u32 {
            if id == current || id == self.vocab.oov_id() {
                continue;
            }
            if let Some(required) = tag {
                if self.lexicon.unwrap().tag(id) != required {
                    continue;
                }
            }
            if let Some(d2) = self.table.squared_distance(current, id) {
                scored.push((d2, id));
            }
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        scored
            .into_iter()
            .take(self.n)
            .map(|(_, id)| Substitution {
                start: pos,
                replacement: vec![id],
            })
            .collect()
    }
}

/// Euclidean distance between mean token vectors of equal-length sequences.
/// OOV and vectorless tokens contribute the zero vector.
pub fn semantic_distance(
    x: &TokenSequence,
    x_prime: &TokenSequence,
    table: &EmbeddingTable,
) -> Result<f64, ConstraintError> {
    if x.len() != x_prime.len() {
        return Err(ConstraintError::LengthMismatch(x.len(), x_prime.len()));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let dim = table.dim();
    let mean = |seq: &TokenSequence| -> Vec<f64> {
        let mut m = vec![0.0; dim];
        for &id in seq.ids() {
            if let Some(v) = table.get(id) {
                for (mi, vi) in m.iter_mut().zip(v) {
                    *mi += vi;
                }
            }
        }
        let n = seq.len() as f64;
        m.iter_mut().for_each(|mi| *mi /= n);
        m
    };
    let (ma, mb) = (mean(x), mean(x_prime));
    Ok(ma
        .iter()
        .zip(&mb)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Absolute difference of sequence log-probabilities under the language
/// model, in nats.
pub fn syntactic_distance(x: &TokenSequence, x_prime: &TokenSequence, lm: &TrigramLM) -> f64 {
    (lm.log_prob(x_prime) - lm.log_prob(x)).abs()
}

/// One distance component of a constraint set.
pub enum DistanceComponent<'a> {
    /// 0 if the two sequences translate to the same protein, else infinity.
    CodonSynonymy,
    /// Euclidean distance between mean embeddings.
    SemanticEmbedding(&'a EmbeddingTable),
    /// |log P(x') - log P(x)| under the language model.
    SyntacticLm(&'a TrigramLM),
}

impl DistanceComponent<'_> {
    pub fn id(&self) -> &'static str {
        match self {
            DistanceComponent::CodonSynonymy => "codon-synonymy",
            DistanceComponent::SemanticEmbedding(_) => "semantic-embedding",
            DistanceComponent::SyntacticLm(_) => "syntactic-lm",
        }
    }

    pub fn distance(
        &self,
        x: &TokenSequence,
        x_prime: &TokenSequence,
    ) -> Result<f64, ConstraintError> {
        match self {
            DistanceComponent::CodonSynonymy => {
                if translate(x)? == translate(x_prime)? {
                    Ok(0.0)
                } else {
                    Ok(f64::INFINITY)
                }
            }
            DistanceComponent::SemanticEmbedding(table) => {
                semantic_distance(x, x_prime, table)
            }
            DistanceComponent::SyntacticLm(lm) => Ok(syntactic_distance(x, x_prime, lm)),
        }
    }
}

/// Result of checking all components of a constraint set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCheck {
    pub satisfied: bool,
    /// Per-component distances, in declaration order.
    pub values: Vec<f64>,
    /// Index of the first violated component, if any.
    pub violated: Option<usize>,
}

/// Ordered distance components with inclusive bounds.
pub struct ConstraintSet<'a> {
    components: Vec<(DistanceComponent<'a>, f64)>,
}

impl<'a> ConstraintSet<'a> {
    pub fn new(components: Vec<(DistanceComponent<'a>, f64)>) -> Self {
        Self { components }
    }

    /// The always-satisfied empty set.
    pub fn unconstrained() -> Self {
        Self {
            components: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component_ids(&self) -> Vec<&'static str> {
        self.components.iter().map(|(c, _)| c.id()).collect()
    }

    /// Evaluate every component; satisfied iff each distance <= its bound.
    pub fn check(
        &self,
        x: &TokenSequence,
        x_prime: &TokenSequence,
    ) -> Result<ConstraintCheck, ConstraintError> {
        let mut values = Vec::with_capacity(self.components.len());
        let mut violated = None;
        for (i, (component, bound)) in self.components.iter().enumerate() {
            let d = component.distance(x, x_prime)?;
            if d > *bound && violated.is_none() {
                violated = Some(i);
            }
            values.push(d);
        }
        Ok(ConstraintCheck {
            satisfied: violated.is_none(),
            values,
            violated,
        })
    }
}

/// Swap vertex labels `i` and `j`: conjugate the adjacency matrix by a
/// transposition, giving a graph isomorphic to the input.
pub fn apply_transposition(
    g: &AdjacencyGraph,
    i: usize,
    j: usize,
) -> Result<AdjacencyGraph, ConstraintError> {
    let n = g.n();
    if i >= n || j >= n || i == j {
        return Err(ConstraintError::VertexOutOfRange);
    }
    let mut out = g.clone();
    let map = |v: usize| {
        if v == i {
            j
        } else if v == j {
            i
        } else {
            v
        }
    };
    for a in 0..n {
        for b in 0..n {
            if a < b {
                let present = g.edge(map(a), map(b));
                out.set_edge(a, b, present);
            }
        }
    }
    Ok(out)
}
