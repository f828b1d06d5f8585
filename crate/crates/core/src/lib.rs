//! Agent environment for multi-hop question answering over schema-free
//! knowledge graphs: graph storage, entity lookup tools, the multi-turn
//! reasoning loop, rewards, RL numerics, the weighted SFT loss, QA synthesis,
//! ShareGPT conversion and evaluation.

pub mod config;
pub mod embedding;
pub mod episode;
pub mod eval;
pub mod gateway;
pub mod graph;
pub mod loss_mask;
pub mod reward;
pub mod rl;
pub mod sft;
pub mod synth;

pub use config::AppConfig;
pub use embedding::{Embedder, EntityIndex, HashingEmbedder, MatchResult, RemoteEmbedder};
pub use episode::{
    run_episode, Episode, EpisodeLimits, LlmClient, ScriptedClient, Termination, ToolCall, ToolExecutor,
};
pub use eval::{evaluate, EvalOptions, EvalReport};
pub use gateway::{ToolResponse, ToolService};
pub use graph::{GraphId, KnowledgeGraph, PathSpec, SeedCriteria, Subgraph};
pub use loss_mask::{weighted_sft_loss, LossReport, TokenBatch};
pub use reward::{score_episode, stage1_reward, stage3_reward, RewardRecord};
pub use rl::{discounted_returns, gae_advantages, ppo_clip_objective, value_loss};
pub use sft::{episode_to_sharegpt, validate_sharegpt, ShareGptSample};
pub use synth::{dedupe, domain_stats, synthesize, HopCategory, QaRecord, QuestionSpec, SynthConfig};
