//! Discrete-world simulator for information flow in synthetic-data training
//! loops: exact entropy/MI computation over finite joints, task worlds with
//! acceptance partitions, external-signal families, softmax trainers, closed-
//! and open-loop runners, and the named experiment scenarios.

pub mod config;
pub mod exact;
pub mod experiments;
pub mod learner;
pub mod loops;
pub mod par;
pub mod prob;
pub mod seed;
pub mod signals;
pub mod world;
