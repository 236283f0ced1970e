//! Meta-reinforcement-learning laboratory.
//!
//! Implements MAML, E-MAML, RL² and E-RL² on top of a small reverse-mode
//! autodiff engine, together with the Krazy World, maze and pointmass task
//! families and the experiment harness used to train and evaluate them.

pub mod autodiff;
pub mod envs;
pub mod rng;
pub mod policy;
pub mod rlcore;
pub mod metaalgos;
pub mod oracle;
pub mod harness;
