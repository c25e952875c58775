//! Constrained search for synonymous adversarial examples.
//!
//! The main engine is a beam search over one-substitution expansions: each
//! round expands every beam member at every editable position with every
//! proposed candidate, keeps the expansions that satisfy the constraint set
//! and the replaced-fraction budget, deduplicates identical states, and
//! retains the top `b` by objective value. Ties break deterministically:
//! higher objective, then fewer edits, then lexicographically smaller
//! state, so runs are exactly reproducible and a wider beam never ranks
//! below a narrower one on the benchmark instances.
//!
//! Objective values are tracked as log-probabilities. Linear models on long
//! sequences produce score margins of hundreds of nats, where the softmax
//! probability saturates to 0 or 1 in f64; the log form stays strictly
//! monotone in the class scores at any confidence level.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{apply_transposition, ConstraintSet, Proposer};
use crate::data::{AdjacencyGraph, TokenSequence, Vocabulary};
use crate::models::{ClassScores, Featurizer, LogisticModel, NaiveBayesModel};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack configuration: {0}")]
    InvalidConfig(String),
    #[error("search space exceeds {bound} states")]
    SearchSpaceTooLarge { bound: usize },
    #[error("constraint evaluation failed: {0}")]
    Constraint(#[from] crate::constraints::ConstraintError),
    #[error("model error: {0}")]
    Model(#[from] crate::models::ModelError),
}

/// What the attack optimizes: raise a target class, or suppress the true
/// class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Objective {
    Targeted { target: usize, true_label: usize },
    Untargeted { true_label: usize },
}

impl Objective {
    pub fn targeted(target: usize, true_label: usize) -> Result<Self, AttackError> {
        if target == true_label {
            return Err(AttackError::InvalidConfig(
                "targeted attack requires target != true label".into(),
            ));
        }
        Ok(Objective::Targeted { target, true_label })
    }

    pub fn untargeted(true_label: usize) -> Self {
        Objective::Untargeted { true_label }
    }

    pub fn true_label(&self) -> usize {
        match *self {
            Objective::Targeted { true_label, .. } | Objective::Untargeted { true_label } => {
                true_label
            }
        }
    }

    /// Did this prediction reach the attack-target outcome?
    pub fn achieved(&self, predicted: usize) -> bool {
        match *self {
            Objective::Targeted { target, .. } => predicted == target,
            Objective::Untargeted { true_label } => predicted != true_label,
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 36.0 {
        x
    } else if x < -36.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + vals.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Log of the objective: `log p(target)` for targeted attacks,
/// `log(1 - p(true))` for untargeted, under the softmax of the class
/// scores. Strictly monotone in the favored-minus-opponent score margin,
/// with no loss of resolution at extreme confidence.
pub fn objective_log_score(objective: &Objective, scores: &ClassScores) -> f64 {
    let s = &scores.scores;
    let (favored, opponent) = match *objective {
        Objective::Targeted { target, .. } => (
            s[target],
            log_sum_exp(
                s.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != target)
                    .map(|(_, &v)| v),
            ),
        ),
        Objective::Untargeted { true_label } => (
            log_sum_exp(
                s.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != true_label)
                    .map(|(_, &v)| v),
            ),
            s[true_label],
        ),
    };
    -softplus(opponent - favored)
}

/// The objective on the probability scale: softmax probability of the
/// target class, or one minus the probability of the true class.
pub fn objective_score(objective: &Objective, scores: &ClassScores) -> f64 {
    objective_log_score(objective, scores).exp()
}

/// A model that scores inputs of type `S`.
pub trait Classifier<S: ?Sized> {
    fn num_classes(&self) -> usize;
    fn class_scores(&self, x: &S) -> ClassScores;

    fn predict(&self, x: &S) -> usize {
        self.class_scores(x).argmax()
    }
}

/// Naive Bayes over featurized token sequences.
pub struct NbSequenceClassifier<'a> {
    pub model: &'a NaiveBayesModel,
    pub featurizer: Featurizer,
    pub vocab: &'a Vocabulary,
}

impl Classifier<TokenSequence> for NbSequenceClassifier<'_> {
    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn class_scores(&self, x: &TokenSequence) -> ClassScores {
        let features = self
            .featurizer
            .apply(x, self.vocab)
            .expect("featurizer must accept attack sequences");
        self.model
            .log_posterior(&features)
            .expect("featurizer output matches model dimension")
    }
}

/// Softmax regression over featurized token sequences.
pub struct LogisticSequenceClassifier<'a> {
    pub model: &'a LogisticModel,
    pub featurizer: Featurizer,
    pub vocab: &'a Vocabulary,
}

impl Classifier<TokenSequence> for LogisticSequenceClassifier<'_> {
    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn class_scores(&self, x: &TokenSequence) -> ClassScores {
        let features = self
            .featurizer
            .apply(x, self.vocab)
            .expect("featurizer must accept attack sequences");
        self.model
            .scores(&features)
            .expect("featurizer output matches model dimension")
    }
}

/// Flatten the adjacency matrix row-major into 0/1 features.
pub fn graph_features(g: &AdjacencyGraph) -> Vec<f64> {
    g.matrix().iter().map(|&b| b as u8 as f64).collect()
}

/// Softmax regression over flattened adjacency matrices; sensitive to
/// vertex labels by construction.
pub struct LogisticGraphClassifier<'a> {
    pub model: &'a LogisticModel,
}

impl Classifier<AdjacencyGraph> for LogisticGraphClassifier<'_> {
    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn class_scores(&self, x: &AdjacencyGraph) -> ClassScores {
        self.model
            .scores(&graph_features(x))
            .expect("graph size matches model dimension")
    }
}

/// Attack hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Stop as soon as the objective reaches this probability.
    pub tau: f64,
    /// Beam width.
    pub beam: usize,
    /// Cap on the fraction of symbols replaced (nucleotides/tokens for
    /// sequences, transposition moves relative to vertex count for graphs).
    pub delta_max: f64,
    /// Seed for randomized attack variants; exact search ignores it.
    pub seed: u64,
    /// Safety cap on beam rounds; defaults to three times the budget length.
    pub max_rounds: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            tau: 0.9,
            beam: 1,
            delta_max: 0.5,
            seed: 0,
            max_rounds: None,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if !(0.0 < self.tau && self.tau <= 1.0) {
            return Err(AttackError::InvalidConfig("tau must be in (0, 1]".into()));
        }
        if !(0.0 < self.delta_max && self.delta_max <= 1.0) {
            return Err(AttackError::InvalidConfig("delta_max must be in (0, 1]".into()));
        }
        if self.beam < 1 {
            return Err(AttackError::InvalidConfig("beam must be >= 1".into()));
        }
        Ok(())
    }
}

/// One applied edit, rendered as strings for reporting. For sequences this
/// is the position (proposer granularity) with old/new content; for graphs
/// it is one transposition of vertex labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub position: usize,
    pub old: String,
    pub new: String,
}

/// Why the search loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitReason {
    TauReached,
    WorkingSetEmpty,
    Stalled,
    RoundCap,
    PositionsExhausted,
    BudgetReached,
}

/// Outcome of one attack on one datapoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackResult<S> {
    pub x_adv: S,
    /// Reached the attack-target outcome (flip for untargeted, target class
    /// for targeted).
    pub succeeded: bool,
    /// Objective reached the tau threshold.
    pub tau_reached: bool,
    /// Same as `succeeded`; reported separately from `tau_reached` because
    /// the budget can stop the search below tau with the label already
    /// flipped.
    pub prediction_flipped: bool,
    pub predicted_label: usize,
    pub j_final: f64,
    pub log_j_final: f64,
    pub edits: Vec<EditRecord>,
    pub fraction_replaced: f64,
    pub expansions_evaluated: usize,
    /// Running best log-objective per iteration (index 0 = unperturbed).
    pub trace_log_j: Vec<f64>,
    pub exit: ExitReason,
}

/// A search space the beam engine can explore: expansion, scoring, edit
/// accounting, and a total-order key for deduplication and tie-breaks.
pub trait SearchDomain {
    type State: Clone;

    fn original(&self) -> &Self::State;
    /// One-edit expansions (unfiltered) paired with their edit records.
    fn expand(&self, s: &Self::State) -> Vec<(EditRecord, Self::State)>;
    /// Edits of `s` relative to the original; `path_len` is the number of
    /// moves taken to reach it.
    fn edit_count(&self, s: &Self::State, path_len: usize) -> usize;
    /// Denominator of the replaced-fraction budget.
    fn budget_len(&self) -> usize;
    fn constraints_ok(&self, s: &Self::State) -> Result<bool, AttackError>;
    fn class_scores(&self, s: &Self::State) -> ClassScores;
    /// Total-order key: equal keys mean equal states.
    fn state_key(&self, s: &Self::State) -> Vec<u8>;
    /// Net edit list for reporting.
    fn edits(&self, s: &Self::State, path: &[EditRecord]) -> Vec<EditRecord>;
}

struct Node<S> {
    state: S,
    path: Vec<EditRecord>,
    log_j: f64,
    edits: usize,
    key: Vec<u8>,
}

fn rank<S>(a: &Node<S>, b: &Node<S>) -> std::cmp::Ordering {
    b.log_j
        .total_cmp(&a.log_j)
        .then(a.edits.cmp(&b.edits))
        .then(a.key.cmp(&b.key))
}

/// Beam search over a domain. See the module docs for the loop structure;
/// exits on reaching tau, on an empty working set (no admissible expansion
/// within the budget), when a round fails to improve the best objective, or
/// at the round cap.
pub fn beam_search_domain<D: SearchDomain>(
    domain: &D,
    objective: &Objective,
    config: &AttackConfig,
) -> Result<AttackResult<D::State>, AttackError> {
    config.validate()?;
    let budget = domain.budget_len();
    let max_edits = (config.delta_max * budget as f64 + 1e-9).floor() as usize;
    let max_rounds = config.max_rounds.unwrap_or(budget.saturating_mul(3).max(8));
    let log_tau = config.tau.ln();

    if !domain.constraints_ok(domain.original())? {
        return Err(AttackError::InvalidConfig(
            "original input violates its own constraint set".into(),
        ));
    }

    let mut expansions_evaluated = 0usize;
    let root_scores = domain.class_scores(domain.original());
    let root = Node {
        state: domain.original().clone(),
        path: Vec::new(),
        log_j: objective_log_score(objective, &root_scores),
        edits: 0,
        key: domain.state_key(domain.original()),
    };
    let mut trace = vec![root.log_j];
    let mut best = Node {
        state: root.state.clone(),
        path: root.path.clone(),
        log_j: root.log_j,
        edits: root.edits,
        key: root.key.clone(),
    };
    let mut beam: Vec<Node<D::State>> = vec![root];
    let mut exit = ExitReason::RoundCap;

    if best.log_j >= log_tau {
        exit = ExitReason::TauReached;
    } else {
        for _round in 0..max_rounds {
            let mut working: Vec<Node<D::State>> = Vec::new();
            for node in &beam {
                for (edit, state) in domain.expand(&node.state) {
                    let edits = domain.edit_count(&state, node.path.len() + 1);
                    if edits > max_edits {
                        continue;
                    }
                    if !domain.constraints_ok(&state)? {
                        continue;
                    }
                    let scores = domain.class_scores(&state);
                    expansions_evaluated += 1;
                    let log_j = objective_log_score(objective, &scores);
                    let mut path = node.path.clone();
                    path.push(edit);
                    let key = domain.state_key(&state);
                    working.push(Node {
                        state,
                        path,
                        log_j,
                        edits,
                        key,
                    });
                }
            }
            if working.is_empty() {
                exit = ExitReason::WorkingSetEmpty;
                break;
            }
            working.sort_by(rank);
            let mut seen: HashSet<Vec<u8>> = HashSet::new();
            let mut next: Vec<Node<D::State>> = Vec::new();
            for node in working {
                if seen.insert(node.key.clone()) {
                    next.push(node);
                    if next.len() == config.beam {
                        break;
                    }
                }
            }
            let round_best_log_j = next[0].log_j;
            if round_best_log_j <= best.log_j {
                trace.push(best.log_j);
                exit = ExitReason::Stalled;
                break;
            }
            {
                let n = &next[0];
                best = Node {
                    state: n.state.clone(),
                    path: n.path.clone(),
                    log_j: n.log_j,
                    edits: n.edits,
                    key: n.key.clone(),
                };
            }
            trace.push(best.log_j);
            if best.log_j >= log_tau {
                exit = ExitReason::TauReached;
                break;
            }
            beam = next;
        }
    }

    let final_scores = domain.class_scores(&best.state);
    let predicted = final_scores.argmax();
    let log_j_final = objective_log_score(objective, &final_scores);
    let flipped = objective.achieved(predicted);
    Ok(AttackResult {
        edits: domain.edits(&best.state, &best.path),
        fraction_replaced: best.edits as f64 / budget as f64,
        x_adv: best.state,
        succeeded: flipped,
        tau_reached: log_j_final >= log_tau,
        prediction_flipped: flipped,
        predicted_label: predicted,
        j_final: log_j_final.exp(),
        log_j_final,
        expansions_evaluated,
        trace_log_j: trace,
        exit,
    })
}

/// Sequence search space: substitutions from a proposer, constraint checks
/// against the original, scores from a classifier.
pub struct SequenceDomain<'a> {
    original: &'a TokenSequence,
    proposer: &'a dyn Proposer,
    constraints: &'a ConstraintSet<'a>,
    classifier: &'a dyn Classifier<TokenSequence>,
    vocab: &'a Vocabulary,
}

impl<'a> SequenceDomain<'a> {
    pub fn new(
        original: &'a TokenSequence,
        proposer: &'a dyn Proposer,
        constraints: &'a ConstraintSet<'a>,
        classifier: &'a dyn Classifier<TokenSequence>,
        vocab: &'a Vocabulary,
    ) -> Self {
        Self {
            original,
            proposer,
            constraints,
            classifier,
            vocab,
        }
    }

    fn render(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&id| self.vocab.token(id))
            .collect::<Vec<_>>()
            .join(if self.proposer.span() == 3 { "" } else { " " })
    }
}

impl SearchDomain for SequenceDomain<'_> {
    type State = TokenSequence;

    fn original(&self) -> &TokenSequence {
        self.original
    }

    fn expand(&self, s: &TokenSequence) -> Vec<(EditRecord, TokenSequence)> {
        let mut out = Vec::new();
        for pos in self.proposer.positions(s) {
            for cand in self.proposer.candidates(s, pos) {
                let old = &s.ids()[cand.start..cand.start + cand.replacement.len()];
                let record = EditRecord {
                    position: pos,
                    old: self.render(old),
                    new: self.render(&cand.replacement),
                };
                out.push((record, s.substitute(cand.start, &cand.replacement)));
            }
        }
        out
    }

    fn edit_count(&self, s: &TokenSequence, _path_len: usize) -> usize {
        s.hamming(self.original)
    }

    fn budget_len(&self) -> usize {
        self.original.len()
    }

    fn constraints_ok(&self, s: &TokenSequence) -> Result<bool, AttackError> {
        Ok(self.constraints.check(self.original, s)?.satisfied)
    }

    fn class_scores(&self, s: &TokenSequence) -> ClassScores {
        self.classifier.class_scores(s)
    }

    fn state_key(&self, s: &TokenSequence) -> Vec<u8> {
        s.ids().iter().flat_map(|id| id.to_be_bytes()).collect()
    }

    fn edits(&self, s: &TokenSequence, _path: &[EditRecord]) -> Vec<EditRecord> {
        // Net diff at proposer granularity.
        let span = self.proposer.span();
        let mut out = Vec::new();
        for pos in 0..self.original.len() / span {
            let range = pos * span..(pos + 1) * span;
            let old = &self.original.ids()[range.clone()];
            let new = &s.ids()[range];
            if old != new {
                out.push(EditRecord {
                    position: pos,
                    old: self.render(old),
                    new: self.render(new),
                });
            }
        }
        out
    }
}

/// Graph search space: one transposition of vertex labels per move. Every
/// reachable state is isomorphic to the original by construction, so the
/// constraint always holds; the budget counts moves relative to the vertex
/// count.
pub struct GraphDomain<'a> {
    original: &'a AdjacencyGraph,
    classifier: &'a dyn Classifier<AdjacencyGraph>,
}

impl<'a> GraphDomain<'a> {
    pub fn new(
        original: &'a AdjacencyGraph,
        classifier: &'a dyn Classifier<AdjacencyGraph>,
    ) -> Self {
        Self {
            original,
            classifier,
        }
    }
}

impl SearchDomain for GraphDomain<'_> {
    type State = AdjacencyGraph;

    fn original(&self) -> &AdjacencyGraph {
        self.original
    }

    fn expand(&self, s: &AdjacencyGraph) -> Vec<(EditRecord, AdjacencyGraph)> {
        let n = s.n();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let g = apply_transposition(s, i, j).expect("indices in range");
                out.push((
                    EditRecord {
                        position: i,
                        old: format!("{i}"),
                        new: format!("{j}"),
                    },
                    g,
                ));
            }
        }
        out
    }

    fn edit_count(&self, _s: &AdjacencyGraph, path_len: usize) -> usize {
        path_len
    }

    fn budget_len(&self) -> usize {
        self.original.n()
    }

    fn constraints_ok(&self, _s: &AdjacencyGraph) -> Result<bool, AttackError> {
        Ok(true)
    }

    fn class_scores(&self, s: &AdjacencyGraph) -> ClassScores {
        self.classifier.class_scores(s)
    }

    fn state_key(&self, s: &AdjacencyGraph) -> Vec<u8> {
        s.matrix().iter().map(|&b| b as u8).collect()
    }

    fn edits(&self, _s: &AdjacencyGraph, path: &[EditRecord]) -> Vec<EditRecord> {
        path.to_vec()
    }
}

/// Beam search attack on a token sequence.
pub fn beam_search_attack(
    original: &TokenSequence,
    classifier: &dyn Classifier<TokenSequence>,
    proposer: &dyn Proposer,
    constraints: &ConstraintSet,
    objective: &Objective,
    config: &AttackConfig,
    vocab: &Vocabulary,
) -> Result<AttackResult<TokenSequence>, AttackError> {
    let domain = SequenceDomain::new(original, proposer, constraints, classifier, vocab);
    beam_search_domain(&domain, objective, config)
}

/// Beam search attack on a graph via vertex-label transpositions.
pub fn beam_search_graph_attack(
    original: &AdjacencyGraph,
    classifier: &dyn Classifier<AdjacencyGraph>,
    objective: &Objective,
    config: &AttackConfig,
) -> Result<AttackResult<AdjacencyGraph>, AttackError> {
    let domain = GraphDomain::new(original, classifier);
    beam_search_domain(&domain, objective, config)
}

/// Greedy search prioritized by position importance: the importance of a
/// position is the best single-substitution objective gain on the original
/// input; positions are then visited in descending importance and the best
/// admissible candidate is committed when it improves the objective.
pub fn greedy_p_attack(
    original: &TokenSequence,
    classifier: &dyn Classifier<TokenSequence>,
    proposer: &dyn Proposer,
    constraints: &ConstraintSet,
    objective: &Objective,
    config: &AttackConfig,
    vocab: &Vocabulary,
) -> Result<AttackResult<TokenSequence>, AttackError> {
    config.validate()?;
    let domain = SequenceDomain::new(original, proposer, constraints, classifier, vocab);
    let log_tau = config.tau.ln();
    let budget = original.len();
    let max_edits = (config.delta_max * budget as f64 + 1e-9).floor() as usize;

    let mut expansions = 0usize;
    let base_log_j = objective_log_score(objective, &classifier.class_scores(original));

    // Importance pass on the unperturbed input.
    let positions = proposer.positions(original);
    let mut importance: Vec<(f64, usize)> = Vec::with_capacity(positions.len());
    for &pos in &positions {
        let mut best = f64::NEG_INFINITY;
        for cand in proposer.candidates(original, pos) {
            let state = original.substitute(cand.start, &cand.replacement);
            if !constraints.check(original, &state)?.satisfied {
                continue;
            }
            expansions += 1;
            let log_j = objective_log_score(objective, &classifier.class_scores(&state));
            best = best.max(log_j - base_log_j);
        }
        importance.push((best, pos));
    }
    importance.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut current = original.clone();
    let mut log_j = base_log_j;
    let mut trace = vec![log_j];
    let mut exit = ExitReason::PositionsExhausted;
    if log_j >= log_tau {
        exit = ExitReason::TauReached;
    } else {
        'outer: for &(imp, pos) in &importance {
            if imp == f64::NEG_INFINITY {
                continue; // no admissible candidate at this position
            }
            let mut best: Option<(f64, TokenSequence)> = None;
            for cand in proposer.candidates(&current, pos) {
                let state = current.substitute(cand.start, &cand.replacement);
                if !constraints.check(original, &state)?.satisfied {
                    continue;
                }
                expansions += 1;
                let cand_log_j = objective_log_score(objective, &classifier.class_scores(&state));
                let better = match &best {
                    None => true,
                    Some((b, _)) => cand_log_j > *b,
                };
                if better {
                    best = Some((cand_log_j, state));
                }
            }
            if let Some((cand_log_j, state)) = best {
                if cand_log_j > log_j {
                    if state.hamming(original) > max_edits {
                        exit = ExitReason::BudgetReached;
                        break 'outer;
                    }
                    current = state;
                    log_j = cand_log_j;
                    trace.push(log_j);
                    if log_j >= log_tau {
                        exit = ExitReason::TauReached;
                        break 'outer;
                    }
                }
            }
        }
    }

    let final_scores = classifier.class_scores(&current);
    let predicted = final_scores.argmax();
    let flipped = objective.achieved(predicted);
    let log_j_final = objective_log_score(objective, &final_scores);
    Ok(AttackResult {
        edits: domain.edits(&current, &[]),
        fraction_replaced: current.hamming(original) as f64 / budget as f64,
        x_adv: current,
        succeeded: flipped,
        tau_reached: log_j_final >= log_tau,
        prediction_flipped: flipped,
        predicted_label: predicted,
        j_final: log_j_final.exp(),
        log_j_final,
        expansions_evaluated: expansions,
        trace_log_j: trace,
        exit,
    })
}

/// Random constraint-satisfying perturbation: `round(fraction * positions)`
/// distinct editable positions, a uniform admissible candidate at each;
/// positions without admissible candidates are skipped.
pub fn random_perturb(
    original: &TokenSequence,
    proposer: &dyn Proposer,
    constraints: &ConstraintSet,
    fraction: f64,
    seed: u64,
) -> Result<TokenSequence, AttackError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(AttackError::InvalidConfig("fraction must be in [0, 1]".into()));
    }
    use rand::Rng;
    let mut rng = crate::synth::stream_rng(seed, 7);
    let mut positions = proposer.positions(original);
    let n_edit = (fraction * positions.len() as f64).round() as usize;
    // Partial Fisher-Yates to pick distinct positions.
    for i in 0..n_edit.min(positions.len()) {
        let j = rng.random_range(i..positions.len());
        positions.swap(i, j);
    }
    let mut current = original.clone();
    for &pos in positions.iter().take(n_edit) {
        let cands = proposer.candidates(&current, pos);
        let admissible: Vec<_> = cands
            .into_iter()
            .filter_map(|c| {
                let state = current.substitute(c.start, &c.replacement);
                match constraints.check(original, &state) {
                    Ok(check) if check.satisfied => Some(state),
                    _ => None,
                }
            })
            .collect();
        if admissible.is_empty() {
            continue;
        }
        current = admissible[rng.random_range(0..admissible.len())].clone();
    }
    Ok(current)
}

/// Apply `moves` uniformly random vertex transpositions.
pub fn random_transpositions(
    g: &AdjacencyGraph,
    moves: usize,
    seed: u64,
) -> Result<AdjacencyGraph, AttackError> {
    use rand::Rng;
    let n = g.n();
    if n < 2 {
        return Ok(g.clone());
    }
    let mut rng = crate::synth::stream_rng(seed, 8);
    let mut out = g.clone();
    for _ in 0..moves {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        out = apply_transposition(&out, i, j)?;
    }
    Ok(out)
}

/// Tokens whose class log-ratio toward `target_class` exceeds `gamma`,
/// sorted by descending log-ratio with ties broken by token id. Tokens with
/// non-finite weights (zero counts under alpha = 0) are excluded.
pub fn spurious_token_list(
    model: &NaiveBayesModel,
    gamma: f64,
    target_class: usize,
) -> Result<Vec<(u32, f64)>, AttackError> {
    if model.num_classes() != 2 {
        return Err(AttackError::InvalidConfig(
            "spurious token list requires a two-class model".into(),
        ));
    }
    let from = 1 - target_class;
    let mut out: Vec<(u32, f64)> = (0..model.vocab_size() as u32)
        .filter_map(|l| {
            let delta = model.delta(l as usize, target_class, from);
            (delta.is_finite() && delta > gamma).then_some((l, delta))
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Result of the append-only attack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcatResult {
    pub x_adv: TokenSequence,
    pub appended: Vec<u32>,
    /// How many of the requested appends had no qualifying token.
    pub shortfall: usize,
}

/// Append the `t` tokens with the largest class log-ratio toward
/// `target_class` (each at most once). If fewer than `t` tokens qualify,
/// all are appended and the shortfall reported.
pub fn concatenative_attack(
    x: &TokenSequence,
    model: &NaiveBayesModel,
    gamma: f64,
    t: usize,
    target_class: usize,
) -> Result<ConcatResult, AttackError> {
    let ranked = spurious_token_list(model, gamma, target_class)?;
    let appended: Vec<u32> = ranked.iter().take(t).map(|&(id, _)| id).collect();
    let mut ids = x.ids().to_vec();
    ids.extend(&appended);
    Ok(ConcatResult {
        x_adv: TokenSequence::new(ids),
        shortfall: t - appended.len(),
        appended,
    })
}

/// Result of exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub best: TokenSequence,
    pub log_j: f64,
    pub j: f64,
    pub states_enumerated: usize,
}

const ORACLE_STATE_BOUND: usize = 1_000_000;

/// Enumerate every perturbation with at most `max_edits` edited positions
/// (candidates computed against the original) and return the
/// constraint-satisfying global objective maximum. Errors if the space
/// exceeds one million states.
pub fn exhaustive_oracle(
    original: &TokenSequence,
    classifier: &dyn Classifier<TokenSequence>,
    proposer: &dyn Proposer,
    constraints: &ConstraintSet,
    objective: &Objective,
    max_edits: usize,
) -> Result<OracleResult, AttackError> {
    let positions = proposer.positions(original);
    let cands: Vec<Vec<crate::constraints::Substitution>> = positions
        .iter()
        .map(|&p| proposer.candidates(original, p))
        .collect();

    struct Ctx<'c> {
        original: &'c TokenSequence,
        classifier: &'c dyn Classifier<TokenSequence>,
        constraints: &'c ConstraintSet<'c>,
        objective: &'c Objective,
        cands: &'c [Vec<crate::constraints::Substitution>],
        max_edits: usize,
        count: usize,
        best: Option<(f64, usize, TokenSequence)>,
    }

    fn consider(ctx: &mut Ctx, state: &TokenSequence, edits: usize) -> Result<(), AttackError> {
        ctx.count += 1;
        if ctx.count > ORACLE_STATE_BOUND {
            return Err(AttackError::SearchSpaceTooLarge {
                bound: ORACLE_STATE_BOUND,
            });
        }
        if !ctx.constraints.check(ctx.original, state)?.satisfied {
            return Ok(());
        }
        let log_j = objective_log_score(ctx.objective, &ctx.classifier.class_scores(state));
        let better = match &ctx.best {
            None => true,
            Some((b_j, b_edits, b_state)) => {
                log_j > *b_j
                    || (log_j == *b_j
                        && (edits < *b_edits || (edits == *b_edits && state.ids() < b_state.ids())))
            }
        };
        if better {
            ctx.best = Some((log_j, edits, state.clone()));
        }
        Ok(())
    }

    fn recurse(
        ctx: &mut Ctx,
        idx: usize,
        state: &TokenSequence,
        edits: usize,
    ) -> Result<(), AttackError> {
        if idx == ctx.cands.len() {
            return consider(ctx, state, edits);
        }
        recurse(ctx, idx + 1, state, edits)?;
        if edits < ctx.max_edits {
            let subs: Vec<_> = ctx.cands[idx].clone();
            for cand in subs {
                let next = state.substitute(cand.start, &cand.replacement);
                recurse(ctx, idx + 1, &next, edits + 1)?;
            }
        }
        Ok(())
    }

    let mut ctx = Ctx {
        original,
        classifier,
        constraints,
        objective,
        cands: &cands,
        max_edits,
        count: 0,
        best: None,
    };
    recurse(&mut ctx, 0, original, 0)?;
    let (log_j, _, best) = ctx.best.expect("the unperturbed state is always considered");
    Ok(OracleResult {
        best,
        log_j,
        j: log_j.exp(),
        states_enumerated: ctx.count,
    })
}
