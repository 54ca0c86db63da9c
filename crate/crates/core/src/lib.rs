//! A declarative memory engine built on low-rank tensor factorization.
//!
//! Facts are tuples of registered symbols. An episodic model scores
//! (subject, predicate, object, time) and can file one-shot latent traces
//! (engrams); a semantic model scores plain triples. Both factorize their
//! score tensor into per-symbol latent vectors and a small dense core, which
//! is what makes querying, sampling, marginalizing, and consolidating cheap
//! enough to run exhaustively at desk scale.

pub mod checkpoint;
pub mod consolidate;
pub mod error;
pub mod model;
pub mod perceive;
pub mod query;
pub mod store;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, load_episodic, load_semantic, save_episodic, save_semantic, Checkpoint};
pub use consolidate::{
    accumulate_time, copy_engrams, distill_explicit, marginalize_time, replay_teach,
    DistillSource, KnowledgeGraphStore, DEFAULT_DISTILL_THRESHOLD,
};
pub use error::{Error, Result};
pub use model::{
    sigmoid, Engram, EntityId, EpisodicModel, Mode, ModelConfig, PredicateId, SemanticModel,
    SymbolId, TensorMemory, TimeId, DEFAULT_BETA, DEFAULT_INIT_SCALE,
};
pub use perceive::{perceive, read_sensory_vectors, Encoder, Perception, SensoryVector};
pub use query::{
    associate, conditional_distribution, entity_profile, marginal_distribution,
    rank_triples_with_time_vector, recall, recall_sample, sample, Association, Beta, QueryResult,
    ScoredPair, ScoredTriple, Slot, SlotPattern, JOINT_ENUMERATION_CAP,
};
pub use store::{FactStore, IngestReport, Quad, Triple};
pub use tensor::{CoreTensor, LatentVector};
pub use train::{
    evaluate_materialization, fit_episodic, fit_semantic, MarginReport, TrainConfig, TrainReport,
};
