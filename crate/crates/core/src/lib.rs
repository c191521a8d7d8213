//! Deterministic, seed-reproducible simulator for merging-onion routing
//! protocols in a synchronous network: an ideal onion functionality, the
//! tree and butterfly forming algorithms, a round-based execution engine
//! with active-adversary strategies, and Monte-Carlo oracles for the
//! combinatorial facts the designs rest on.

pub mod adversary;
pub mod analytics;
pub mod butterfly;
pub mod engine;
pub mod error;
pub mod input;
pub mod keys;
pub mod onion;
pub mod rng;
pub mod transcript;
pub mod tree;
pub mod types;

pub use adversary::{Adversary, AdversaryConfig, AdversarySpec, Mode, StrategySummary};
pub use butterfly::{ButterflyConfig, PibflyParams};
pub use engine::{run, run_with_options, EngineOptions, Protocol};
pub use error::{Result, SimError};
pub use input::SimpleInput;
pub use keys::{KeyMaterial, PrfMode, SharedKey};
pub use onion::{EvolutionId, OnionHandle, OnionRegistry, PeelResult, RoutingPlan};
pub use transcript::{Event, EvolutionRecord, OnionKind, RunTranscript, Terminal};
pub use tree::{CheckpointDatum, MergeTree, PitreeParams};
pub use types::{Message, Nonce, PartyId};
