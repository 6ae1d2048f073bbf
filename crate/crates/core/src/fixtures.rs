//! Shared instances for unit tests, read from the shipped corpus.

use crate::automata::{parse_hoa, Nba};
use crate::mdp::Mdp;
use crate::product::{build_product, ProductMdp};

pub const I2: &str = include_str!("../corpus/i2.json");
pub const SELF_LOOP: &str = include_str!("../corpus/self_loop.json");
pub const NEVER: &str = include_str!("../corpus/never.json");
pub const SPLIT_LABELS: &str = include_str!("../corpus/split_labels.json");
pub const ACCEPT_G: &str = include_str!("../corpus/accept_g.hoa");
pub const FG_G: &str = include_str!("../corpus/fg_g_complete.hoa");

pub fn mdp(text: &str) -> Mdp {
    Mdp::from_json(text).unwrap()
}

pub fn accept_g() -> Nba {
    parse_hoa(ACCEPT_G).unwrap()
}

pub fn i2_product() -> ProductMdp {
    build_product(&mdp(I2), &accept_g()).unwrap()
}

pub fn self_loop_product() -> ProductMdp {
    build_product(&mdp(SELF_LOOP), &accept_g()).unwrap()
}

pub fn never_product() -> ProductMdp {
    build_product(&mdp(NEVER), &accept_g()).unwrap()
}

/// Index of the product choice at the initial state whose MDP action is `name`.
pub fn initial_choice(p: &ProductMdp, name: &str) -> usize {
    p.choices(p.initial())
        .iter()
        .position(|c| p.action_name(c.pair.action) == name)
        .unwrap()
}
