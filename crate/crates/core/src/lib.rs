//! Template-based explanations for fused cyber-threat warnings.
//!
//! Data items feed sensors (counters, scorers, event detectors and
//! repositories); sensor signals become warnings; related warnings are fused.
//! Every entity carries an [`IdTag`](id::IdTag), and [`explain`] walks those
//! tags from a fused warning down to the raw data, rendering each level
//! through [`template`]s into an expandable tree.

pub mod explain;
pub mod fixtures;
pub mod fusion;
pub mod id;
pub mod model;
pub mod outrage;
pub mod pipeline;
pub mod sensor;
pub mod store;
pub mod template;

pub use explain::{build_explanation, expand_node, flatten, ExplanationNode, ExplanationTree};
pub use id::{mint_id, EntityKind, IdTag};
pub use store::{validate_store, EntityStore};
