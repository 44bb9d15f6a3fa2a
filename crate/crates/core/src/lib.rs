//! Sample-path drift-plus-penalty scheduling: queue dynamics, the per-slot
//! decision rule, lookahead oracles and every constant in the performance
//! guarantees.

pub mod accounting;
pub mod algorithm;
pub mod bounds;
pub mod cost;
pub mod error;
pub mod instances;
pub mod internet;
pub mod model;
pub mod multihop;
pub mod oracle;
pub mod rng;

pub use algorithm::{choose_action, choose_aux, drift_penalty_score, lyapunov, run, step, ApproximationPolicy};
pub use error::{Error, Result};
pub use model::{AttributeEvaluation, CatalogEntry, CostConfig, EventSample, QueueState, SlotRecord, SystemModel, Trace};
