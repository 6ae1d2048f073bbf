//! Reward shaping for Büchi objectives on Markov decision processes.
//!
//! The pipeline: parse a labelled MDP ([`mdp`]) and a Büchi automaton
//! ([`automata`]), build their product ([`product`]), derive the shaped
//! models ([`shaping`]), then solve them exactly ([`solvers`]), check them
//! against the end-component ground truth ([`oracle`]) or learn them
//! model-free ([`learn`]). The [`cli`] module wires everything into the
//! `omega-shaping` command.

pub mod automata;
pub mod cli;
pub mod graph;
pub mod learn;
pub mod linalg;
pub mod mdp;
pub mod oracle;
pub mod product;
pub mod shaping;
pub mod solvers;

#[cfg(test)]
mod fixtures;

pub use automata::{parse_hoa, serialize_hoa, LassoWord, Nba};
pub use mdp::{Mdp, RunRecord};
pub use product::{build_product, project_strategy, ProductMdp, Strategy};
pub use shaping::{augment, AugmentedModel, Mode};
pub use solvers::{evaluate_policy, greedy_policy, solve_optimal, ValueVector};
