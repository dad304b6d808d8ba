//! Decompose-and-recompose demonstration retrieval for cross-task robot
//! manipulation.
//!
//! Seen-task demonstrations are split into atomic skill–action pairs
//! ([`collect`], [`demo`]). For a new task the pipeline ([`pipeline`])
//! predicts a skill plan, retrieves visually and structurally similar
//! demonstrations ([`retrieval`]), fills missing skill tokens from a
//! coverage-aware static library ([`coverage`]), renders a skill-annotated
//! prompt ([`prompt`]) and decodes the model's discrete actions ([`codec`]).

pub mod codec;
pub mod collect;
pub mod coverage;
pub mod demo;
pub mod pipeline;
pub mod prompt;
pub mod providers;
pub mod retrieval;
pub mod skill;
pub mod synthetic;

pub use codec::{
    decode_action, encode_action, CodecConfig, ContinuousControl, DiscreteAction, Quaternion, WorkspaceBounds,
};
pub use coverage::{
    build_static_library, coverage_gap, fill_gaps, idf_weight, selection_score, tokens_of, CoverageToken,
    IdfTable, StaticLibrary, TokenSet,
};
pub use demo::{load_library, save_library, DemoLibrary, Demonstration, ValidationReport};
pub use pipeline::{eval_batch, run_query, PipelineConfig, QueryResult, QuerySpec};
pub use prompt::{assemble_prompt, parse_action_response, PromptBundle};
pub use providers::{Embedder, Planner, ProviderConfig, ProviderError};
pub use retrieval::{rank_and_select, EmbeddingVector, RankedCandidate, RetrievalParams};
pub use skill::{parse_skill, plan_similarity, SkillLabel, SkillSequence};
