//! Synonymous adversarial examples for discrete-input classifiers.
//!
//! A classifier over discrete sequences (DNA, text tokens, graphs) can be
//! attacked by substituting symbols inside a domain-specific equivalence
//! class: synonymous codons, near-synonym words, or vertex relabelings.
//! This crate provides the pieces end to end:
//!
//! - [`data`]: vocabularies, token sequences, labeled datasets, adjacency
//!   graphs, and their file formats.
//! - [`synth`]: seeded generators for the synthetic gene, graph, and
//!   two-class multinomial benchmark tasks, plus synthetic embeddings.
//! - [`models`]: multinomial Naive Bayes, softmax regression, and an
//!   interpolated trigram language model, all trained from scratch.
//! - [`constraints`]: distance components with bounds and per-position
//!   candidate proposers that define the attack neighborhood.
//! - [`attack`]: constrained beam search plus greedy, random, concatenative
//!   baselines and an exhaustive oracle for testing.
//! - [`theory`]: closed-form predictions about spurious token correlations
//!   and Monte Carlo verifiers that test them against the generators.

pub mod attack;
pub mod constraints;
pub mod data;
pub mod models;
pub mod synth;
pub mod theory;
