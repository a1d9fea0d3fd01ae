//! Self-adjusting demand-aware network simulation.
//!
//! The crate replays request traces on a network that reshapes itself with
//! splay-based ego-trees, and compares its cost against fixed baselines and
//! entropy lower bounds.

pub mod ego_tree;
pub mod experiment;
pub mod baselines;
pub mod entropy;
pub mod metrics;
pub mod renet;
pub mod trace;
