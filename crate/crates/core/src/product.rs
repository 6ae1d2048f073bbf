//! Product of a labelled MDP with a Büchi automaton.
//!
//! A product action is an MDP action together with the automaton move taken
//! on the label the transition produces. When every successor of `(s, a)`
//! carries the same label `σ`, the product actions are exactly the pairs
//! `(a, q')` with `(q, σ, q') ∈ Δ`. When successors carry different labels,
//! an action fixes one automaton successor per label, so each product action
//! still has a full distribution.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::automata::Nba;
use crate::mdp::{Diagnostic, Mdp};

#[derive(Debug, Error)]
pub enum ProductError {
    #[error("alphabets differ: MDP has {mdp:?}, automaton has {automaton:?}")]
    AlphabetMismatch {
        mdp: Vec<String>,
        automaton: Vec<String>,
    },
    #[error("automaton is not complete: state {state} has no {symbol:?}-successor (use trap completion)")]
    IncompleteAutomaton { state: String, symbol: String },
    #[error("MDP is invalid: {0:?}")]
    InvalidMdp(Vec<Diagnostic>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StrategyError {
    #[error("strategy has {got} entries for {expected} states")]
    WrongLength { got: usize, expected: usize },
    #[error("choice {choice} is not available at product state {state}")]
    Unavailable { state: usize, choice: usize },
}

/// MDP action plus the automaton successor chosen for each label it can emit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionPair {
    pub action: usize,
    /// `(mdp symbol, automaton successor)`, ascending by symbol.
    pub resolution: Vec<(usize, usize)>,
}

impl ActionPair {
    pub fn successor_on(&self, symbol: usize) -> Option<usize> {
        self.resolution
            .iter()
            .find(|(s, _)| *s == symbol)
            .map(|&(_, q)| q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductOutcome {
    pub target: usize,
    pub prob: f64,
    /// MDP symbol index.
    pub label: usize,
    /// In Γ×.
    pub accepting: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductChoice {
    pub pair: ActionPair,
    pub outcomes: Vec<ProductOutcome>,
}

impl ProductChoice {
    pub fn accepting_mass(&self) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| o.accepting)
            .map(|o| o.prob)
            .sum()
    }
}

/// `M × A` with initial state `(s0, q0)` and accepting transitions Γ×.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMdp {
    states: Vec<(usize, usize)>,
    initial: usize,
    choices: Vec<Vec<ProductChoice>>,
    mdp_states: Vec<String>,
    actions: Vec<String>,
    automaton_states: Vec<String>,
    alphabet: Vec<String>,
    gfm_asserted: bool,
}

/// Which part of `S × Q` to materialize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    Reachable,
    Full,
}

pub fn build_product(m: &Mdp, a: &Nba) -> Result<ProductMdp, ProductError> {
    build_product_with(m, a, Restriction::Reachable)
}

pub fn build_product_with(
    m: &Mdp,
    a: &Nba,
    restriction: Restriction,
) -> Result<ProductMdp, ProductError> {
    let diagnostics = m.validate();
    if !diagnostics.is_empty() {
        return Err(ProductError::InvalidMdp(diagnostics));
    }
    // mdp symbol -> automaton symbol
    let mismatch = || ProductError::AlphabetMismatch {
        mdp: m.alphabet().to_vec(),
        automaton: a.alphabet().to_vec(),
    };
    if m.alphabet().len() != a.alphabet().len() {
        return Err(mismatch());
    }
    let symbol_map: Vec<usize> = m
        .alphabet()
        .iter()
        .map(|s| a.symbol_index(s).ok_or_else(mismatch))
        .collect::<Result<_, _>>()?;
    for q in 0..a.num_states() {
        for (sym, name) in a.alphabet().iter().enumerate() {
            if a.successors(q, sym).next().is_none() {
                return Err(ProductError::IncompleteAutomaton {
                    state: a.state_label(q),
                    symbol: name.clone(),
                });
            }
        }
    }

    let nq = a.num_states();
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut states = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern =
        |pair: (usize, usize), states: &mut Vec<(usize, usize)>, queue: &mut VecDeque<usize>| {
            *index.entry(pair).or_insert_with(|| {
                states.push(pair);
                queue.push_back(states.len() - 1);
                states.len() - 1
            })
        };
    let initial = match restriction {
        Restriction::Reachable => intern((m.initial(), a.initial()), &mut states, &mut queue),
        Restriction::Full => {
            for s in 0..m.num_states() {
                for q in 0..nq {
                    intern((s, q), &mut states, &mut queue);
                }
            }
            m.initial() * nq + a.initial()
        }
    };

    let mut choices: Vec<Vec<ProductChoice>> = Vec::new();
    while let Some(p) = queue.pop_front() {
        let (s, q) = states[p];
        let mut here = Vec::new();
        for choice in m.choices(s) {
            let positive: Vec<_> = choice.outcomes.iter().filter(|o| o.prob > 0.0).collect();
            let mut labels: Vec<usize> = positive.iter().map(|o| o.label.unwrap()).collect();
            labels.sort_unstable();
            labels.dedup();
            let options: Vec<Vec<usize>> = labels
                .iter()
                .map(|&l| a.successors(q, symbol_map[l]).map(|t| t.target).collect())
                .collect();
            for picks in cartesian(&options) {
                let resolution: Vec<(usize, usize)> =
                    labels.iter().copied().zip(picks.iter().copied()).collect();
                let mut outcomes = Vec::with_capacity(positive.len());
                for o in &positive {
                    let label = o.label.unwrap();
                    let next_q = resolution.iter().find(|(l, _)| *l == label).unwrap().1;
                    let t = a
                        .transition(q, symbol_map[label], next_q)
                        .expect("resolution picks Δ-successors");
                    let target = intern((o.target, next_q), &mut states, &mut queue);
                    outcomes.push(ProductOutcome {
                        target,
                        prob: o.prob,
                        label,
                        accepting: t.accepting,
                    });
                }
                here.push(ProductChoice {
                    pair: ActionPair {
                        action: choice.action,
                        resolution,
                    },
                    outcomes,
                });
            }
        }
        if choices.len() <= p {
            choices.resize_with(p + 1, Vec::new);
        }
        choices[p] = here;
    }
    choices.resize_with(states.len(), Vec::new);

    Ok(ProductMdp {
        states,
        initial,
        choices,
        mdp_states: (0..m.num_states())
            .map(|s| m.state_name(s).to_string())
            .collect(),
        actions: m.action_names().to_vec(),
        automaton_states: (0..nq).map(|q| a.state_label(q)).collect(),
        alphabet: m.alphabet().to_vec(),
        gfm_asserted: a.gfm_asserted(),
    })
}

/// All tuples picking one entry per option list, lexicographic.
fn cartesian(options: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for opts in options {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |&o| {
                    let mut v = prefix.clone();
                    v.push(o);
                    v
                })
            })
            .collect();
    }
    out
}

impl ProductMdp {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    /// `(mdp state, automaton state)` of a product state.
    pub fn state(&self, p: usize) -> (usize, usize) {
        self.states[p]
    }

    pub fn index_of(&self, s: usize, q: usize) -> Option<usize> {
        self.states.iter().position(|&x| x == (s, q))
    }

    pub fn choices(&self, p: usize) -> &[ProductChoice] {
        &self.choices[p]
    }

    pub fn num_choices(&self, p: usize) -> usize {
        self.choices[p].len()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    /// False when the automaton was nondeterministic without a good-for-MDPs
    /// assertion; satisfaction values are then lower bounds only.
    pub fn gfm_asserted(&self) -> bool {
        self.gfm_asserted
    }

    pub fn mdp_state_name(&self, s: usize) -> &str {
        &self.mdp_states[s]
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.actions[a]
    }

    pub fn automaton_state_name(&self, q: usize) -> &str {
        &self.automaton_states[q]
    }

    pub fn state_name(&self, p: usize) -> String {
        let (s, q) = self.states[p];
        format!("({},{})", self.mdp_states[s], self.automaton_states[q])
    }

    pub fn pair_name(&self, pair: &ActionPair) -> String {
        let action = &self.actions[pair.action];
        match pair.resolution.as_slice() {
            [(_, q)] => format!("{action}/{}", self.automaton_states[*q]),
            many => {
                let parts: Vec<String> = many
                    .iter()
                    .map(|(l, q)| format!("{}:{}", self.alphabet[*l], self.automaton_states[*q]))
                    .collect();
                format!("{action}/{}", parts.join(","))
            }
        }
    }

    /// Name of the MDP action taken by choice `c` at `p`.
    pub fn choice_action_name(&self, p: usize, c: usize) -> &str {
        &self.actions[self.choices[p][c].pair.action]
    }

    /// Successor adjacency under every available choice.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        self.choices
            .iter()
            .map(|cs| {
                let mut v: Vec<usize> = cs
                    .iter()
                    .flat_map(|c| c.outcomes.iter().map(|o| o.target))
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect()
    }

    /// JSON export in the MDP file layout plus the accepting transition indices.
    pub fn to_file(&self) -> ProductFile {
        let states: Vec<String> = (0..self.num_states()).map(|p| self.state_name(p)).collect();
        let mut actions: Vec<String> = Vec::new();
        let mut transitions = Vec::new();
        let mut accepting = Vec::new();
        for (p, cs) in self.choices.iter().enumerate() {
            for c in cs {
                let name = self.pair_name(&c.pair);
                if !actions.contains(&name) {
                    actions.push(name.clone());
                }
                for o in &c.outcomes {
                    if o.accepting {
                        accepting.push(transitions.len());
                    }
                    transitions.push(ProductTransition {
                        from: states[p].clone(),
                        action: name.clone(),
                        to: states[o.target].clone(),
                        prob: o.prob,
                        label: self.alphabet[o.label].clone(),
                    });
                }
            }
        }
        ProductFile {
            initial: states[self.initial].clone(),
            states,
            actions,
            alphabet: self.alphabet.clone(),
            transitions,
            accepting,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductTransition {
    pub from: String,
    pub action: String,
    pub to: String,
    pub prob: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductFile {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub alphabet: Vec<String>,
    pub initial: String,
    pub transitions: Vec<ProductTransition>,
    /// Indices into `transitions`.
    pub accepting: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

/// Positional pure strategy on a product: one choice index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Strategy {
    choice: Vec<usize>,
}

impl Strategy {
    pub fn new(p: &ProductMdp, choice: Vec<usize>) -> Result<Self, StrategyError> {
        if choice.len() != p.num_states() {
            return Err(StrategyError::WrongLength {
                got: choice.len(),
                expected: p.num_states(),
            });
        }
        for (state, &c) in choice.iter().enumerate() {
            if c >= p.num_choices(state) {
                return Err(StrategyError::Unavailable { state, choice: c });
            }
        }
        Ok(Strategy { choice })
    }

    /// Picks choice 0 everywhere.
    pub fn first(p: &ProductMdp) -> Self {
        Strategy {
            choice: vec![0; p.num_states()],
        }
    }

    pub fn choice(&self, p: usize) -> usize {
        self.choice[p]
    }

    pub fn choices(&self) -> &[usize] {
        &self.choice
    }

    /// Stable textual id, e.g. `(s0,0)=a/0;(sA,0)=a/0`.
    pub fn describe(&self, p: &ProductMdp) -> String {
        (0..p.num_states())
            .map(|s| {
                format!(
                    "{}={}",
                    p.state_name(s),
                    p.pair_name(&p.choices(s)[self.choice[s]].pair)
                )
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Finite-memory controller on the MDP whose memory is the automaton state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Controller {
    pub initial_memory: usize,
    /// `(mdp state, memory) -> rule`.
    pub rules: BTreeMap<(usize, usize), ControllerRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerRule {
    pub action: usize,
    /// Next memory per emitted symbol.
    pub update: Vec<(usize, usize)>,
}

impl Controller {
    pub fn act(&self, s: usize, memory: usize) -> Option<usize> {
        self.rules.get(&(s, memory)).map(|r| r.action)
    }

    pub fn next_memory(&self, s: usize, memory: usize, symbol: usize) -> Option<usize> {
        let rule = self.rules.get(&(s, memory))?;
        rule.update
            .iter()
            .find(|(l, _)| *l == symbol)
            .map(|&(_, q)| q)
    }

    /// Distinct memory values used by some rule.
    pub fn memory_states(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.rules.keys().map(|&(_, q)| q).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Product strategy obtained by composing the controller with the
    /// automaton again; `None` if some product state has no matching choice.
    pub fn recompose(&self, p: &ProductMdp) -> Option<Strategy> {
        let mut choice = Vec::with_capacity(p.num_states());
        for state in 0..p.num_states() {
            let rule = self.rules.get(&p.state(state))?;
            let c = p
                .choices(state)
                .iter()
                .position(|c| c.pair.action == rule.action && c.pair.resolution == rule.update)?;
            choice.push(c);
        }
        Some(Strategy { choice })
    }
}

/// Turns a product strategy into the equivalent controller over the MDP.
pub fn project_strategy(p: &ProductMdp, f: &Strategy) -> Controller {
    let mut rules = BTreeMap::new();
    for state in 0..p.num_states() {
        let pair = &p.choices(state)[f.choice(state)].pair;
        rules.insert(
            p.state(state),
            ControllerRule {
                action: pair.action,
                update: pair.resolution.clone(),
            },
        );
    }
    Controller {
        initial_memory: p.state(p.initial()).1,
        rules,
    }
}

impl fmt::Display for ProductMdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in 0..self.num_states() {
            writeln!(f, "{}", self.state_name(p))?;
            for c in &self.choices[p] {
                write!(f, "  {}:", self.pair_name(&c.pair))?;
                for o in &c.outcomes {
                    let mark = if o.accepting { "*" } else { "" };
                    write!(f, " {}{}@{}", self.state_name(o.target), mark, o.prob)?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}
