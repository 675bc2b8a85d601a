//! Orchestration engine for automated algorithm discovery.
//!
//! A run is a sequence of research rounds. Each round samples parents from the
//! shared [`soldb::SolutionDb`], grows a [`flowgraph::ResearchTree`] by asking a
//! language model for coordinated child ideas, implements and experiments on
//! each child in a subprocess sandbox ([`explab`]), and distills what was
//! learned into layered reflections ([`reflect`]).
//!
//! Module map:
//!
//! - [`canvas`]: problem specification and run configuration files.
//! - [`soldb`]: append-only solution database with feature-cell elites and
//!   rank-softmax parent sampling.
//! - [`flowgraph`]: the per-round research tree, traversal and rendering.
//! - [`modelgate`]: chat-completion backends and the global budget ledger.
//! - [`explab`]: evaluation sandbox, result protocol, patching, and the
//!   experiment loop with hard reversion.
//! - [`reflect`]: progressive summaries, long-term reflection, compression.
//! - [`agents`]: idea/code agents, research rounds and multi-lead orchestration.
//! - [`scorelab`]: driving scores, behavioral signatures, normalized benchmark
//!   scores and best-so-far curves.
//! - [`prompts`]: editable prompt templates.
//! - [`par`]: data-parallel helpers with a sequential fallback.

pub mod agents;
pub mod canvas;
pub mod explab;
pub mod flowgraph;
pub mod modelgate;
pub mod par;
pub mod prompts;
pub mod reflect;
pub mod scorelab;
pub mod soldb;

pub use canvas::{ProblemSpec, RunConfig};
pub use soldb::{FeatureSignature, MetricsRecord, SolutionDb, SolutionId, SolutionRecord};
