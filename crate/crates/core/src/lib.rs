//! Core library for `ash`: a desk-scale self-improvement loop in which
//! parallel agents share one policy, discover recurring key moments in an
//! observation-only video corpus, and bootstrap themselves whenever they get
//! stuck — by retrieving matching corpus videos, refreshing an inverse
//! dynamics model on their own trajectories, pseudo-labeling the retrieved
//! videos, and retraining the policy.
//!
//! Module map:
//! - [`env`]: the GridQuest environment (multi-room grid, 12 gated
//!   milestones, modal battle sub-interface).
//! - [`embedder`]: deterministic observation embedding into a shared
//!   unit-norm vector space.
//! - [`corpus`]: synthetic observation-only video corpus with ground-truth
//!   relevance metadata, plus the on-disk embedding index.
//! - [`retrieval`]: best-window greedy one-to-one matching of agent
//!   trajectories against indexed videos, and the baseline scorers.
//! - [`keymoments`]: hierarchical density clustering over retrieved-video
//!   embeddings, approximate prediction, and per-agent memory banks.
//! - [`seqkernel`]: dense sequence model (causal or bidirectional attention)
//!   with exact reverse-mode gradients and AdamW.
//! - [`idm`]: inverse dynamics model training and pseudo-labeling.
//! - [`policy`]: dual-memory policy (short window + key-moment memory).
//! - [`orchestrator`]: the outer inference/bootstrap loop with stuck timers.
//! - [`evalharness`]: experiment runners (milestone curves, ablations,
//!   retrieval quality, offline replay, cluster audits) with CSV/SVG output.

pub mod binfmt;
pub mod config;
pub mod corpus;
pub mod embedder;
pub mod env;
pub mod error;
pub mod evalharness;
pub mod idm;
pub mod keymoments;
pub mod orchestrator;
pub mod policy;
pub mod retrieval;
pub mod seqkernel;

pub use error::{AshError, Result};
