//! Relation discovery between art historians and between their archival
//! collections: a small named-graph store, candidate-pair expansion,
//! exploratory statistics, from-scratch classifiers and a hybrid
//! rule/model recommender.

pub mod config;
pub mod eda;
pub mod engine;
pub mod error;
pub mod expansion;
pub mod ingest;
pub mod learn;
pub mod mentions;
pub mod model;
pub mod recommend;
pub mod synth;

pub use config::{RecommendConfig, RunConfig};
pub use engine::{DecisionRequest, Engine, EntityView, ModelChoice};
pub use error::{ApiError, Error, ErrorCode, Result};
pub use learn::{FeatureSpec, LearnConfig, ModelKind, TrainedModel, Unit};
pub use model::{canonical_pair, Entity, EntityId, EntityKind, EntityPair, Predicate, Statement, StatementSource, Store, TextField, TextRecord};
pub use recommend::{Decision, DecisionLog, RecRef, Recommendation, Verdict};
