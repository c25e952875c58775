//! Deterministic, seeded generators for the synthetic benchmark tasks.
//!
//! All randomness flows from explicit seeds through ChaCha8, a fixed,
//! versioned, counter-based generator, so every dataset is a pure function
//! of (params, seed) and byte-identical across platforms. Independent
//! sub-streams (documents, groups, trials) use ChaCha's stream counter.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{EmbeddingTable, GENETIC_CODE};
use crate::data::{AdjacencyGraph, LabeledDataset, TokenSequence, Vocabulary};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("infeasible mass: {0}")]
    InfeasibleMass(String),
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
}

/// Seeded generator on an independent sub-stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw an index from a cumulative distribution by binary search.
fn sample_cdf(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    match cdf.binary_search_by(|probe| probe.partial_cmp(&u).unwrap()) {
        Ok(i) => (i + 1).min(cdf.len() - 1),
        Err(i) => i.min(cdf.len() - 1),
    }
}

fn cdf_of(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// Parameters of the two-class multinomial generative process used by the
/// statistical verifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Number of datapoints (documents).
    pub d_docs: usize,
    /// Tokens per datapoint.
    pub len_tokens: usize,
    /// Uninformative vocabulary size V.
    pub v_uninformative: usize,
    /// Informative vocabulary size.
    pub v_informative: usize,
    /// Max occurrence probability of an uninformative token; the generator
    /// draws uninformative tokens uniformly, so this must be >= 1/V.
    pub p_max: f64,
    /// Fraction of informative tokens per datapoint (exactly
    /// `round(r * L)` informative slots per document).
    pub r: f64,
    /// Signal strength: informative tokens have class log-ratio exactly
    /// `eta` toward their class.
    pub eta: f64,
    /// Synonyms per non-informative token (groups of size s + 1).
    pub s_synonyms: usize,
    /// Failure probability budget.
    pub rho: f64,
    /// Spurious-token threshold.
    pub gamma: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.d_docs == 0 || self.len_tokens == 0 {
            return Err(SynthError::InvalidParam("d_docs and len_tokens must be positive".into()));
        }
        if self.v_uninformative == 0 {
            return Err(SynthError::InvalidParam("v_uninformative must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.r) {
            return Err(SynthError::InvalidParam("r must be in [0, 1)".into()));
        }
        if self.eta < 0.0 || !self.eta.is_finite() {
            return Err(SynthError::InvalidParam("eta must be finite and >= 0".into()));
        }
        if !(0.0 < self.rho && self.rho < 1.0) {
            return Err(SynthError::InvalidParam("rho must be in (0, 1)".into()));
        }
        if self.gamma <= 0.0 {
            return Err(SynthError::InvalidParam("gamma must be positive".into()));
        }
        if !(0.0 < self.p_max && self.p_max < 1.0) {
            return Err(SynthError::InvalidParam("p_max must be in (0, 1)".into()));
        }
        let uniform = 1.0 / self.v_uninformative as f64;
        if self.p_max < uniform - 1e-12 {
            return Err(SynthError::InfeasibleMass(format!(
                "uninformative budget violated: V * p = {} < 1, so {} tokens cannot each stay below p = {}",
                self.v_uninformative as f64 * self.p_max,
                self.v_uninformative,
                self.p_max
            )));
        }
        if self.informative_per_doc() > 0 && self.v_informative < 2 {
            return Err(SynthError::InfeasibleMass(
                "informative budget violated: r > 0 requires at least 2 informative tokens \
                 (one leaning toward each class)"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Informative slots per document: `round(r * L)`, fixed rather than
    /// random so the "at most r*L informative tokens" hypothesis holds
    /// surely.
    pub fn informative_per_doc(&self) -> usize {
        (self.r * self.len_tokens as f64).round() as usize
    }

    /// Total token count `D = d_docs * len_tokens`.
    pub fn d_tokens(&self) -> u64 {
        self.d_docs as u64 * self.len_tokens as u64
    }

    /// Actual per-slot probability of each uninformative token (uniform).
    pub fn p_actual(&self) -> f64 {
        1.0 / self.v_uninformative as f64
    }
}

/// Sidecar metadata describing which token ids are informative and how the
/// uninformative ids are grouped into synonym sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryMetadata {
    /// Ids `0..v_uninformative` are uninformative.
    pub uninformative_ids: Vec<u32>,
    /// Informative ids whose log-ratio leans toward class 0.
    pub class0_leaning: Vec<u32>,
    /// Informative ids whose log-ratio leans toward class 1.
    pub class1_leaning: Vec<u32>,
    /// Disjoint synonym groups of size `s_synonyms + 1` over uninformative ids.
    pub synonym_groups: Vec<Vec<u32>>,
    /// Informative slots per document.
    pub informative_per_doc: usize,
}

impl TheoryMetadata {
    /// Group lookup: `group_of[id] = Some(group index)` for grouped ids.
    pub fn group_of(&self, vocab_size: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; vocab_size];
        for (g, members) in self.synonym_groups.iter().enumerate() {
            for &id in members {
                map[id as usize] = Some(g);
            }
        }
        map
    }
}

struct TheoryDists {
    informative_cdf_class0: Vec<f64>,
    informative_cdf_class1: Vec<f64>,
}

fn theory_dists(params: &TheoryParams) -> TheoryDists {
    let vi = params.v_informative;
    let half = vi / 2;
    // Class-0-leaning ids get probability a = e^eta * b in class 0 and b in
    // class 1; mirrored for the other half. The log-ratio is exactly eta.
    let mut p0 = vec![0.0; vi];
    let mut p1 = vec![0.0; vi];
    if vi > 0 {
        let ratio = params.eta.exp();
        // Solve half*a + (vi-half)*b = 1 with a = ratio * b.
        let b0 = 1.0 / (half as f64 * ratio + (vi - half) as f64);
        let a0 = ratio * b0;
        let b1 = 1.0 / ((vi - half) as f64 * ratio + half as f64);
        let a1 = ratio * b1;
        for l in 0..vi {
            if l < half {
                p0[l] = a0;
                p1[l] = b1;
            } else {
                p0[l] = b0;
                p1[l] = a1;
            }
        }
    }
    TheoryDists {
        informative_cdf_class0: cdf_of(&p0),
        informative_cdf_class1: cdf_of(&p1),
    }
}

/// Sample one document of the given class. Exactly `round(r*L)` informative
/// tokens, the rest uniform over the uninformative vocabulary, positions
/// shuffled.
fn sample_theory_doc(
    params: &TheoryParams,
    dists: &TheoryDists,
    class: usize,
    rng: &mut ChaCha8Rng,
) -> TokenSequence {
    let v = params.v_uninformative as u32;
    let k_inf = params.informative_per_doc();
    let mut ids: Vec<u32> = Vec::with_capacity(params.len_tokens);
    let cdf = if class == 0 {
        &dists.informative_cdf_class0
    } else {
        &dists.informative_cdf_class1
    };
    for _ in 0..k_inf {
        ids.push(v + sample_cdf(cdf, rng) as u32);
    }
    for _ in k_inf..params.len_tokens {
        ids.push(rng.random_range(0..v));
    }
    // Fisher-Yates so informative slots land at random positions.
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    TokenSequence::new(ids)
}

/// Opaque handle so callers can sample extra held-out documents from the
/// identical process.
pub struct TheorySampler {
    params: TheoryParams,
    dists: TheoryDists,
}

impl TheorySampler {
    pub fn new(params: TheoryParams) -> Result<Self, SynthError> {
        params.validate()?;
        let dists = theory_dists(&params);
        Ok(Self { params, dists })
    }

    pub fn params(&self) -> &TheoryParams {
        &self.params
    }

    pub fn sample_doc(&self, class: usize, rng: &mut ChaCha8Rng) -> TokenSequence {
        sample_theory_doc(&self.params, &self.dists, class, rng)
    }
}

fn theory_vocabulary(params: &TheoryParams) -> Result<Vocabulary, SynthError> {
    let mut tokens: Vec<String> = (0..params.v_uninformative)
        .map(|i| format!("u{i}"))
        .collect();
    tokens.extend((0..params.v_informative).map(|i| format!("i{i}")));
    Vocabulary::from_tokens(tokens).map_err(|e| SynthError::Vocabulary(e.to_string()))
}

/// Generate the two-class multinomial dataset plus token metadata.
///
/// Documents draw a class uniformly at random; uninformative tokens are
/// uniform over ids `0..V`; informative tokens have class log-ratio exactly
/// `eta`. Synonym groups of size `s+1` partition a shuffled prefix of the
/// uninformative ids; leftover ids stay groupless.
pub fn gen_theory_dataset(
    params: &TheoryParams,
    seed: u64,
) -> Result<(LabeledDataset, TheoryMetadata), SynthError> {
    params.validate()?;
    let vocab = theory_vocabulary(params)?;
    let dists = theory_dists(params);

    let mut doc_rng = stream_rng(seed, 0);
    let mut examples = Vec::with_capacity(params.d_docs);
    for _ in 0..params.d_docs {
        let class = usize::from(doc_rng.random::<bool>());
        let doc = sample_theory_doc(params, &dists, class, &mut doc_rng);
        examples.push((doc, class));
    }

    let mut group_rng = stream_rng(seed, 1);
    let mut ids: Vec<u32> = (0..params.v_uninformative as u32).collect();
    for i in (1..ids.len()).rev() {
        let j = group_rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let group_size = params.s_synonyms + 1;
    let synonym_groups: Vec<Vec<u32>> = if params.s_synonyms == 0 {
        Vec::new()
    } else {
        ids.chunks_exact(group_size).map(|c| c.to_vec()).collect()
    };

    let v = params.v_uninformative as u32;
    let half = params.v_informative / 2;
    let metadata = TheoryMetadata {
        uninformative_ids: (0..v).collect(),
        class0_leaning: (0..half as u32).map(|i| v + i).collect(),
        class1_leaning: (half as u32..params.v_informative as u32)
            .map(|i| v + i)
            .collect(),
        synonym_groups,
        informative_per_doc: params.informative_per_doc(),
    };
    let dataset = LabeledDataset::new(examples, 2, vocab)
        .map_err(|e| SynthError::Vocabulary(e.to_string()))?;
    Ok((dataset, metadata))
}

/// Non-stop codon indices in lexicographic order (61 of them).
pub fn nonstop_codon_indices() -> Vec<usize> {
    (0..64).filter(|&i| GENETIC_CODE[i].1 != '*').collect()
}

/// Zipf-weighted usage over the 61 non-stop codons in lexicographic order:
/// weight of the i-th codon is 1/(i+1), normalized. A fixed constant so
/// the gene task is learnable and reproducible.
pub fn default_codon_usage() -> Vec<f64> {
    let weights: Vec<f64> = (0..61).map(|i| 1.0 / (i as f64 + 1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Parameters of the synthetic coding-sequence task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneParams {
    pub n_pos: usize,
    pub n_neg: usize,
    /// Codons per sequence (3x nucleotides).
    pub len_codons: usize,
    /// Fraction of nucleotides re-drawn in negatives; exactly
    /// `round(rate * 3 * len_codons)` positions change.
    pub corruption_rate: f64,
    /// Probability table over the 61 non-stop codons.
    pub codon_usage: Vec<f64>,
}

impl Default for GeneParams {
    fn default() -> Self {
        Self {
            n_pos: 5000,
            n_neg: 5000,
            len_codons: 100,
            corruption_rate: 0.5,
            codon_usage: default_codon_usage(),
        }
    }
}

impl GeneParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.len_codons == 0 {
            return Err(SynthError::InvalidParam("len_codons must be positive".into()));
        }
        // corruption_rate = 0 is the degenerate control where negatives are
        // drawn from the positive distribution.
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(SynthError::InvalidParam("corruption_rate must be in [0, 1]".into()));
        }
        if self.codon_usage.len() != 61 {
            return Err(SynthError::InvalidParam("codon_usage must have 61 entries".into()));
        }
        let total: f64 = self.codon_usage.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.codon_usage.iter().any(|&p| p < 0.0) {
            return Err(SynthError::InfeasibleMass("codon_usage must sum to 1".into()));
        }
        Ok(())
    }

    pub fn corrupted_positions(&self) -> usize {
        (self.corruption_rate * 3.0 * self.len_codons as f64).round() as usize
    }
}

fn sample_positive(
    cdf: &[f64],
    nonstop: &[usize],
    len_codons: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<u32> {
    let mut ids = Vec::with_capacity(len_codons * 3);
    for _ in 0..len_codons {
        let codon = nonstop[sample_cdf(cdf, rng)];
        ids.push((codon / 16) as u32);
        ids.push(((codon / 4) % 4) as u32);
        ids.push((codon % 4) as u32);
    }
    ids
}

/// Generate the synthetic gene dataset: positives are i.i.d. draws from the
/// codon usage table (label 1); negatives are independently drawn positives
/// with exactly `round(rate*3*len)` nucleotides re-drawn uniformly from the
/// other three bases (label 0).
pub fn gen_gene_dataset(params: &GeneParams, seed: u64) -> Result<LabeledDataset, SynthError> {
    params.validate()?;
    let cdf = cdf_of(&params.codon_usage);
    let nonstop = nonstop_codon_indices();
    let mut rng = stream_rng(seed, 0);
    let mut examples = Vec::with_capacity(params.n_pos + params.n_neg);
    for _ in 0..params.n_pos {
        let ids = sample_positive(&cdf, &nonstop, params.len_codons, &mut rng);
        examples.push((TokenSequence::new(ids), 1usize));
    }
    let m = params.corrupted_positions();
    let len_nt = params.len_codons * 3;
    for _ in 0..params.n_neg {
        let mut ids = sample_positive(&cdf, &nonstop, params.len_codons, &mut rng);
        // Partial Fisher-Yates picks m distinct positions.
        let mut positions: Vec<usize> = (0..len_nt).collect();
        for i in 0..m {
            let j = rng.random_range(i..len_nt);
            positions.swap(i, j);
        }
        for &pos in &positions[..m] {
            let offset = rng.random_range(1..4u32);
            ids[pos] = (ids[pos] + offset) % 4;
        }
        examples.push((TokenSequence::new(ids), 0usize));
    }
    LabeledDataset::new(examples, 2, Vocabulary::dna())
        .map_err(|e| SynthError::Vocabulary(e.to_string()))
}

/// A dense block planted on the first `size` vertex labels of class-1 graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedBlock {
    pub size: usize,
    pub prob: f64,
}

/// Parameters of the synthetic graph classification task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub n_per_class: usize,
    pub n_vertices: usize,
    pub edge_prob_class0: f64,
    pub edge_prob_class1: f64,
    pub planted: Option<PlantedBlock>,
}

impl GraphParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        for p in [self.edge_prob_class0, self.edge_prob_class1] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::InvalidParam("edge probabilities must be in [0, 1]".into()));
            }
        }
        if let Some(block) = &self.planted {
            if block.size > self.n_vertices {
                return Err(SynthError::InvalidParam(
                    "planted block does not fit the vertex count".into(),
                ));
            }
            if !(0.0..=1.0).contains(&block.prob) {
                return Err(SynthError::InvalidParam("planted prob must be in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Class-0 graphs are Erdős–Rényi(p0); class-1 graphs are Erdős–Rényi(p1)
/// with the planted block overriding edges among the first `size` labels,
/// so a label-position-sensitive classifier is learnable but not
/// permutation-invariant.
pub fn gen_graph_dataset(
    params: &GraphParams,
    seed: u64,
) -> Result<Vec<(AdjacencyGraph, usize)>, SynthError> {
    params.validate()?;
    let mut rng = stream_rng(seed, 0);
    let n = params.n_vertices;
    let mut out = Vec::with_capacity(params.n_per_class * 2);
    for class in 0..2usize {
        let base = if class == 0 {
            params.edge_prob_class0
        } else {
            params.edge_prob_class1
        };
        for _ in 0..params.n_per_class {
            let mut g = AdjacencyGraph::empty(n);
            for i in 0..n {
                for j in 0..i {
                    let p = match (&params.planted, class) {
                        (Some(block), 1) if i < block.size && j < block.size => block.prob,
                        _ => base,
                    };
                    if rng.random::<f64>() < p {
                        g.set_edge(i, j, true);
                    }
                }
            }
            out.push((g, class));
        }
    }
    Ok(out)
}

/// Build synthetic embeddings in which each synonym group shares a cluster
/// center and clusters are far apart: centers sit on an integer grid with
/// spacing 4.0, members get +-0.01 per-coordinate jitter, so within-group
/// distances are orders of magnitude below between-group distances (checked
/// before returning). Tokens outside any group get their own singleton
/// centers; the OOV token gets no vector.
pub fn gen_synthetic_embeddings(
    vocab: &Vocabulary,
    dim: usize,
    synonym_groups: &[Vec<u32>],
    seed: u64,
) -> Result<EmbeddingTable, SynthError> {
    if dim < 2 {
        return Err(SynthError::InvalidParam("dim must be >= 2".into()));
    }
    let oov = vocab.oov_id();
    let mut center_of = vec![usize::MAX; vocab.size()];
    let mut next_center = 0usize;
    for group in synonym_groups {
        for &id in group {
            center_of[id as usize] = next_center;
        }
        next_center += 1;
    }
    for id in 0..vocab.size() {
        if id as u32 != oov && center_of[id] == usize::MAX {
            center_of[id] = next_center;
            next_center += 1;
        }
    }
    let n_centers = next_center.max(1);
    let base = (n_centers as f64).powf(1.0 / dim as f64).ceil() as usize + 1;
    const SPACING: f64 = 4.0;
    const JITTER: f64 = 0.01;
    let center_coords = |c: usize| -> Vec<f64> {
        let mut coords = Vec::with_capacity(dim);
        let mut rem = c;
        for _ in 0..dim {
            coords.push((rem % base) as f64 * SPACING);
            rem /= base;
        }
        coords
    };
    let mut rng = stream_rng(seed, 2);
    let mut table = EmbeddingTable::new(dim, vocab.size());
    for id in 0..vocab.size() {
        if id as u32 == oov {
            continue;
        }
        let mut v = center_coords(center_of[id]);
        for x in v.iter_mut() {
            *x += rng.random_range(-JITTER..JITTER);
        }
        table.set(id as u32, v);
    }
    // Within-group spread is at most 2*JITTER per coordinate; distinct
    // centers are at least SPACING apart in some coordinate.
    let max_within = 2.0 * JITTER * (dim as f64).sqrt();
    let min_between = SPACING - 2.0 * JITTER * (dim as f64).sqrt();
    if max_within >= min_between {
        return Err(SynthError::InvalidParam(
            "embedding construction cannot separate groups at this dimension".into(),
        ));
    }
    for group in synonym_groups {
        for i in 0..group.len() {
            for j in 0..i {
                let d = table
                    .squared_distance(group[i], group[j])
                    .expect("group members have vectors")
                    .sqrt();
                if d >= min_between {
                    return Err(SynthError::InvalidParam(
                        "within-group distance exceeded separation bound".into(),
                    ));
                }
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{format_dataset, DatasetFormat};
    use crate::models::{train_naive_bayes, token_counts, NbOptions};
    use crate::theory::std_normal_quantile;

    fn small_theory_params() -> TheoryParams {
        TheoryParams {
            d_docs: 200,
            len_tokens: 50,
            v_uninformative: 200,
            v_informative: 10,
            p_max: 1.0 / 200.0,
            r: 0.1,
            eta: 1.0,
            s_synonyms: 4,
            rho: 0.05,
            gamma: 0.5,
        }
    }

    #[test]
    fn theory_dataset_is_deterministic() {
        let params = small_theory_params();
        let (a, ma) = gen_theory_dataset(&params, 99).unwrap();
        let (b, mb) = gen_theory_dataset(&params, 99).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(
            format_dataset(&a, DatasetFormat::TsvTokens).unwrap(),
            format_dataset(&b, DatasetFormat::TsvTokens).unwrap()
        );
        let (c, _) = gen_theory_dataset(&params, 100).unwrap();
        assert_ne!(
            format_dataset(&a, DatasetFormat::TsvTokens).unwrap(),
            format_dataset(&c, DatasetFormat::TsvTokens).unwrap()
        );
    }

    #[test]
    fn theory_docs_have_exact_informative_count() {
        let params = small_theory_params();
        let (ds, meta) = gen_theory_dataset(&params, 5).unwrap();
        let v = params.v_uninformative as u32;
        assert_eq!(meta.informative_per_doc, 5);
        for (doc, _) in &ds.examples {
            let n_inf = doc.ids().iter().filter(|&&id| id >= v).count();
            assert_eq!(n_inf, 5);
            assert_eq!(doc.len(), params.len_tokens);
        }
    }

    #[test]
    fn theory_synonym_groups_are_disjoint_and_uninformative() {
        let params = small_theory_params();
        let (_, meta) = gen_theory_dataset(&params, 5).unwrap();
        let mut seen = std::collections::HashSet::new();
        for group in &meta.synonym_groups {
            assert_eq!(group.len(), params.s_synonyms + 1);
            for &id in group {
                assert!(id < params.v_uninformative as u32);
                assert!(seen.insert(id), "id {id} appears in two groups");
            }
        }
        assert_eq!(meta.synonym_groups.len(), 200 / 5);
    }

    #[test]
    fn theory_no_signal_limit_gives_chance_accuracy() {
        let params = TheoryParams {
            r: 0.0,
            v_informative: 0,
            d_docs: 400,
            ..small_theory_params()
        };
        let (ds, _) = gen_theory_dataset(&params, 7).unwrap();
        let nb = train_naive_bayes(&ds, NbOptions::default()).unwrap();
        // Evaluate on a fresh sample from the same process.
        let sampler = TheorySampler::new(params.clone()).unwrap();
        let mut rng = stream_rng(123, 9);
        let mut correct = 0;
        let n_eval = 400;
        for i in 0..n_eval {
            let class = i % 2;
            let doc = sampler.sample_doc(class, &mut rng);
            let x = token_counts(&doc, ds.vocabulary.size(), false);
            if nb.predict(&x).unwrap() == class {
                correct += 1;
            }
        }
        let acc = correct as f64 / n_eval as f64;
        assert!((acc - 0.5).abs() < 0.1, "no-signal accuracy {acc}");
    }

    #[test]
    fn theory_signal_params_give_high_accuracy() {
        let params = TheoryParams {
            d_docs: 2000,
            len_tokens: 50,
            v_uninformative: 2000,
            v_informative: 50,
            p_max: 1.0 / 2000.0,
            r: 0.1,
            eta: 2.0,
            s_synonyms: 0,
            rho: 0.05,
            gamma: 0.5,
        };
        let (ds, _) = gen_theory_dataset(&params, 11).unwrap();
        let nb = train_naive_bayes(&ds, NbOptions::default()).unwrap();
        let sampler = TheorySampler::new(params).unwrap();
        let mut rng = stream_rng(321, 4);
        let mut correct = 0;
        let n_eval = 500;
        for i in 0..n_eval {
            let class = i % 2;
            let doc = sampler.sample_doc(class, &mut rng);
            let x = token_counts(&doc, ds.vocabulary.size(), false);
            if nb.predict(&x).unwrap() == class {
                correct += 1;
            }
        }
        let acc = correct as f64 / n_eval as f64;
        assert!(acc > 0.9, "signal accuracy {acc}");
    }

    #[test]
    fn theory_infeasible_mass_is_reported() {
        let params = TheoryParams {
            p_max: 1.0 / 500.0,
            v_uninformative: 200,
            ..small_theory_params()
        };
        match gen_theory_dataset(&params, 1) {
            Err(SynthError::InfeasibleMass(msg)) => {
                assert!(msg.contains("uninformative budget"), "{msg}")
            }
            other => panic!("expected infeasible mass, got {other:?}"),
        }
    }

    #[test]
    fn theory_token_frequencies_match_model_chi_squared() {
        // ~1e6 tokens; chi-squared against the design distribution should
        // not reject at alpha = 0.001 (critical value via Wilson-Hilferty).
        let params = TheoryParams {
            d_docs: 20_000,
            len_tokens: 50,
            v_uninformative: 500,
            v_informative: 10,
            p_max: 1.0 / 500.0,
            r: 0.1,
            eta: 1.0,
            s_synonyms: 0,
            rho: 0.05,
            gamma: 0.5,
        };
        let (ds, _) = gen_theory_dataset(&params, 2024).unwrap();
        let v = params.v_uninformative;
        let vi = params.v_informative;
        let k_inf = params.informative_per_doc();
        let dists = theory_dists(&params);
        let mut chi2 = 0.0;
        let mut df = 0usize;
        for class in 0..2usize {
            let docs: Vec<_> = ds.examples.iter().filter(|(_, y)| *y == class).collect();
            let n_docs = docs.len();
            let mut counts = vec![0u64; v + vi];
            for (doc, _) in &docs {
                for &id in doc.ids() {
                    counts[id as usize] += 1;
                }
            }
            let n_uninf_tokens = (n_docs * (params.len_tokens - k_inf)) as f64;
            let n_inf_tokens = (n_docs * k_inf) as f64;
            let probs = if class == 0 {
                &dists.informative_cdf_class0
            } else {
                &dists.informative_cdf_class1
            };
            for id in 0..v + vi {
                let expected = if id < v {
                    n_uninf_tokens / v as f64
                } else {
                    let i = id - v;
                    let p = probs[i] - if i == 0 { 0.0 } else { probs[i - 1] };
                    n_inf_tokens * p
                };
                if expected >= 5.0 {
                    let o = counts[id] as f64;
                    chi2 += (o - expected) * (o - expected) / expected;
                    df += 1;
                }
            }
            df -= 1;
        }
        let z = std_normal_quantile(0.999).unwrap();
        let dff = df as f64;
        let critical = dff * (1.0 - 2.0 / (9.0 * dff) + z * (2.0 / (9.0 * dff)).sqrt()).powi(3);
        assert!(
            chi2 < critical,
            "chi2 {chi2} with df {df} exceeds critical {critical}"
        );
    }

    #[test]
    fn gene_positives_contain_no_stop_codons() {
        let params = GeneParams {
            n_pos: 50,
            n_neg: 0,
            len_codons: 40,
            ..Default::default()
        };
        let ds = gen_gene_dataset(&params, 3).unwrap();
        for (seq, label) in &ds.examples {
            assert_eq!(*label, 1);
            let protein = crate::constraints::translate(seq).unwrap();
            assert!(!protein.contains('*'), "stop codon in positive");
        }
    }

    #[test]
    fn gene_negatives_change_exactly_the_rounded_count() {
        // Corruption never maps a base to itself, so the hamming distance
        // from the pre-corruption draw equals the rounding formula. With a
        // single negative per dataset the clean and corrupted runs consume
        // identical RNG values up to the corruption step.
        let params = GeneParams {
            n_pos: 0,
            n_neg: 1,
            len_codons: 10,
            corruption_rate: 0.37,
            ..Default::default()
        };
        assert_eq!(params.corrupted_positions(), 11);
        for seed in 0..10 {
            let clean = gen_gene_dataset(
                &GeneParams {
                    corruption_rate: 0.0,
                    ..params.clone()
                },
                seed,
            )
            .unwrap();
            let corrupted = gen_gene_dataset(&params, seed).unwrap();
            assert_eq!(clean.examples[0].0.hamming(&corrupted.examples[0].0), 11);
        }
    }

    #[test]
    fn gene_dataset_deterministic() {
        let params = GeneParams {
            n_pos: 20,
            n_neg: 20,
            len_codons: 15,
            ..Default::default()
        };
        let a = gen_gene_dataset(&params, 5).unwrap();
        let b = gen_gene_dataset(&params, 5).unwrap();
        assert_eq!(
            format_dataset(&a, DatasetFormat::FastaDna).unwrap(),
            format_dataset(&b, DatasetFormat::FastaDna).unwrap()
        );
    }

    #[test]
    fn graph_outputs_are_symmetric_zero_diagonal() {
        let params = GraphParams {
            n_per_class: 5,
            n_vertices: 12,
            edge_prob_class0: 0.3,
            edge_prob_class1: 0.3,
            planted: Some(PlantedBlock { size: 5, prob: 0.9 }),
        };
        for (g, _) in gen_graph_dataset(&params, 8).unwrap() {
            for i in 0..g.n() {
                assert!(!g.edge(i, i));
                for j in 0..g.n() {
                    assert_eq!(g.edge(i, j), g.edge(j, i));
                }
            }
        }
    }

    #[test]
    fn graph_planted_block_is_denser() {
        let params = GraphParams {
            n_per_class: 40,
            n_vertices: 20,
            edge_prob_class0: 0.2,
            edge_prob_class1: 0.2,
            planted: Some(PlantedBlock { size: 8, prob: 0.95 }),
        };
        let graphs = gen_graph_dataset(&params, 8).unwrap();
        let block_density = |g: &AdjacencyGraph| {
            let mut edges = 0;
            for i in 0..8 {
                for j in 0..i {
                    edges += g.edge(i, j) as usize;
                }
            }
            edges as f64 / 28.0
        };
        let d0: f64 = graphs
            .iter()
            .filter(|(_, y)| *y == 0)
            .map(|(g, _)| block_density(g))
            .sum::<f64>()
            / 40.0;
        let d1: f64 = graphs
            .iter()
            .filter(|(_, y)| *y == 1)
            .map(|(g, _)| block_density(g))
            .sum::<f64>()
            / 40.0;
        assert!(d1 > d0 + 0.5, "planted density {d1} vs base {d0}");
    }

    #[test]
    fn synthetic_embeddings_cluster_groups() {
        let vocab = Vocabulary::from_tokens((0..20).map(|i| format!("w{i}")).collect()).unwrap();
        let groups = vec![vec![0u32, 1, 2], vec![3, 4, 5]];
        let table = gen_synthetic_embeddings(&vocab, 4, &groups, 13).unwrap();
        // group member closer than any non-member
        let d01 = table.squared_distance(0, 1).unwrap();
        for other in 3..20u32 {
            if let Some(d) = table.squared_distance(0, other) {
                assert!(d01 < d, "group spread {d01} vs outside {d}");
            }
        }
        assert!(table.get(vocab.oov_id()).is_none());
        // deterministic
        let again = gen_synthetic_embeddings(&vocab, 4, &groups, 13).unwrap();
        assert_eq!(table.get(0), again.get(0));
    }
}
