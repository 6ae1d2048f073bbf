//! Nondeterministic Büchi automata with transition-based acceptance.

mod hoa;

pub use hoa::{parse_hoa, serialize_hoa, HoaError, SemanticError};

use std::collections::HashSet;

use thiserror::Error;

use crate::graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub source: usize,
    pub symbol: usize,
    pub target: usize,
    /// Member of the acceptance set.
    pub accepting: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NbaError {
    #[error("alphabet is empty")]
    EmptyAlphabet,
    #[error("symbol {0:?} appears twice in the alphabet")]
    DuplicateSymbol(String),
    #[error("automaton has no states")]
    NoStates,
    #[error("initial state {0} out of range")]
    InitialOutOfRange(usize),
    #[error("transition {index} references state {state}, but only {count} states exist")]
    StateOutOfRange {
        index: usize,
        state: usize,
        count: usize,
    },
    #[error("transition {index} uses symbol index {symbol} outside the alphabet")]
    SymbolOutOfRange { index: usize, symbol: usize },
    #[error("transition ({origin}, {symbol}, {target}) listed twice")]
    DuplicateTransition {
        origin: usize,
        symbol: String,
        target: usize,
    },
    #[error("lasso cycle must be nonempty")]
    EmptyCycle,
    #[error("symbol {0:?} is not in the alphabet")]
    UnknownSymbol(String),
}

/// Büchi automaton `(Σ, Q, q0, Δ, Γ)`; Γ is the set of transitions flagged `accepting`.
///
/// Immutable once built. `gfm_asserted` is true for deterministic automata and
/// for nondeterministic ones explicitly declared good-for-MDPs; when false,
/// satisfaction values computed on a product are only lower bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nba {
    alphabet: Vec<String>,
    state_names: Vec<Option<String>>,
    initial: usize,
    transitions: Vec<Transition>,
    gfm_asserted: bool,
    // successors[q][symbol] = indices into `transitions`
    successors: Vec<Vec<Vec<usize>>>,
}

impl Nba {
    /// Builds and validates an automaton. Transitions are stably grouped by
    /// source state; `assert_gfm` only matters for nondeterministic automata.
    pub fn new(
        alphabet: Vec<String>,
        num_states: usize,
        initial: usize,
        transitions: Vec<Transition>,
        assert_gfm: bool,
    ) -> Result<Self, NbaError> {
        Self::with_state_names(
            alphabet,
            vec![None; num_states],
            initial,
            transitions,
            assert_gfm,
        )
    }

    pub fn with_state_names(
        alphabet: Vec<String>,
        state_names: Vec<Option<String>>,
        initial: usize,
        mut transitions: Vec<Transition>,
        assert_gfm: bool,
    ) -> Result<Self, NbaError> {
        if alphabet.is_empty() {
            return Err(NbaError::EmptyAlphabet);
        }
        let mut seen = HashSet::new();
        for sym in &alphabet {
            if !seen.insert(sym.as_str()) {
                return Err(NbaError::DuplicateSymbol(sym.clone()));
            }
        }
        let n = state_names.len();
        if n == 0 {
            return Err(NbaError::NoStates);
        }
        if initial >= n {
            return Err(NbaError::InitialOutOfRange(initial));
        }
        let mut triples = HashSet::new();
        for (index, t) in transitions.iter().enumerate() {
            for state in [t.source, t.target] {
                if state >= n {
                    return Err(NbaError::StateOutOfRange {
                        index,
                        state,
                        count: n,
                    });
                }
            }
            if t.symbol >= alphabet.len() {
                return Err(NbaError::SymbolOutOfRange {
                    index,
                    symbol: t.symbol,
                });
            }
            if !triples.insert((t.source, t.symbol, t.target)) {
                return Err(NbaError::DuplicateTransition {
                    origin: t.source,
                    symbol: alphabet[t.symbol].clone(),
                    target: t.target,
                });
            }
        }
        transitions.sort_by_key(|t| t.source);
        let mut successors = vec![vec![Vec::new(); alphabet.len()]; n];
        for (i, t) in transitions.iter().enumerate() {
            successors[t.source][t.symbol].push(i);
        }
        let mut nba = Nba {
            alphabet,
            state_names,
            initial,
            transitions,
            gfm_asserted: false,
            successors,
        };
        nba.gfm_asserted = assert_gfm || nba.is_deterministic();
        Ok(nba)
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn symbol_index(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|s| s == name)
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn state_name(&self, q: usize) -> Option<&str> {
        self.state_names[q].as_deref()
    }

    /// Display name: the declared name if any, else the index.
    pub fn state_label(&self, q: usize) -> String {
        match &self.state_names[q] {
            Some(name) => name.clone(),
            None => q.to_string(),
        }
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn accepting_transitions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| t.accepting)
    }

    pub fn gfm_asserted(&self) -> bool {
        self.gfm_asserted
    }

    /// Transitions leaving `q` on `symbol`, in file order.
    pub fn successors(&self, q: usize, symbol: usize) -> impl Iterator<Item = &Transition> + '_ {
        self.successors[q][symbol]
            .iter()
            .map(move |&i| &self.transitions[i])
    }

    /// Looks up the transition `(q, symbol, target)` if it is in Δ.
    pub fn transition(&self, q: usize, symbol: usize, target: usize) -> Option<&Transition> {
        self.successors(q, symbol).find(|t| t.target == target)
    }

    pub fn is_deterministic(&self) -> bool {
        self.successors
            .iter()
            .all(|per_symbol| per_symbol.iter().all(|ts| ts.len() <= 1))
    }

    pub fn is_complete(&self) -> bool {
        self.successors
            .iter()
            .all(|per_symbol| per_symbol.iter().all(|ts| !ts.is_empty()))
    }

    /// Same automaton marked good-for-MDPs.
    pub fn assert_gfm(mut self) -> Self {
        self.gfm_asserted = true;
        self
    }

    /// Adds a non-accepting trap state receiving every missing `(q, symbol)`.
    /// Returns the automaton unchanged if it is already complete.
    pub fn completed(&self) -> Nba {
        if self.is_complete() {
            return self.clone();
        }
        let trap = self.num_states();
        let mut transitions = self.transitions.clone();
        for q in 0..=trap {
            for symbol in 0..self.alphabet.len() {
                if q == trap || self.successors[q][symbol].is_empty() {
                    transitions.push(Transition {
                        source: q,
                        symbol,
                        target: trap,
                        accepting: false,
                    });
                }
            }
        }
        let mut names = self.state_names.clone();
        names.push(Some("trap".to_string()));
        Nba::with_state_names(
            self.alphabet.clone(),
            names,
            self.initial,
            transitions,
            self.gfm_asserted,
        )
        .expect("completion preserves validity")
    }

    /// Decides whether `prefix · cycle^ω` is accepted.
    pub fn accepts_lasso(&self, word: &LassoWord) -> Result<bool, NbaError> {
        self.lasso_search(word).map(|outcome| outcome.accepted)
    }

    /// Searches the graph of (automaton state, word position) pairs reachable
    /// from `(q0, 0)` for a cycle through an accepting transition.
    pub fn lasso_search(&self, word: &LassoWord) -> Result<LassoOutcome, NbaError> {
        for &sym in word.prefix.iter().chain(&word.cycle) {
            if sym >= self.alphabet.len() {
                return Err(NbaError::UnknownSymbol(format!("#{sym}")));
            }
        }
        let len = word.len();
        let letter = |pos: usize| {
            if pos < word.prefix.len() {
                word.prefix[pos]
            } else {
                word.cycle[pos - word.prefix.len()]
            }
        };
        let next_pos = |pos: usize| {
            if pos + 1 < len {
                pos + 1
            } else {
                word.prefix.len()
            }
        };
        let node = |q: usize, pos: usize| q * len + pos;

        // Explore reachable nodes, numbering them densely.
        let mut dense = vec![usize::MAX; self.num_states() * len];
        let mut adj: Vec<Vec<usize>> = Vec::new();
        let mut accepting_edges = Vec::new();
        let mut frontier = vec![(self.initial, 0usize)];
        dense[node(self.initial, 0)] = 0;
        adj.push(Vec::new());
        while let Some((q, pos)) = frontier.pop() {
            let from = dense[node(q, pos)];
            let np = next_pos(pos);
            for t in self.successors(q, letter(pos)) {
                let id = node(t.target, np);
                if dense[id] == usize::MAX {
                    dense[id] = adj.len();
                    adj.push(Vec::new());
                    frontier.push((t.target, np));
                }
                adj[from].push(dense[id]);
                if t.accepting {
                    accepting_edges.push((from, dense[id]));
                }
            }
        }
        let components = graph::tarjan_scc(&adj);
        let comp = graph::component_index(adj.len(), &components);
        let accepted = accepting_edges.iter().any(|&(u, v)| comp[u] == comp[v]);
        Ok(LassoOutcome {
            accepted,
            explored: adj.len(),
        })
    }
}

/// Ultimately periodic word `prefix · cycle^ω` over symbol indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LassoWord {
    prefix: Vec<usize>,
    cycle: Vec<usize>,
}

impl LassoWord {
    pub fn new(prefix: Vec<usize>, cycle: Vec<usize>) -> Result<Self, NbaError> {
        if cycle.is_empty() {
            return Err(NbaError::EmptyCycle);
        }
        Ok(LassoWord { prefix, cycle })
    }

    /// Resolves symbol names against the automaton's alphabet.
    pub fn from_names(nba: &Nba, prefix: &[&str], cycle: &[&str]) -> Result<Self, NbaError> {
        let resolve = |names: &[&str]| -> Result<Vec<usize>, NbaError> {
            names
                .iter()
                .map(|n| {
                    nba.symbol_index(n)
                        .ok_or_else(|| NbaError::UnknownSymbol(n.to_string()))
                })
                .collect()
        };
        LassoWord::new(resolve(prefix)?, resolve(cycle)?)
    }

    pub fn prefix(&self) -> &[usize] {
        &self.prefix
    }

    pub fn cycle(&self) -> &[usize] {
        &self.cycle
    }

    fn len(&self) -> usize {
        self.prefix.len() + self.cycle.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LassoOutcome {
    pub accepted: bool,
    /// Number of (state, position) nodes visited by the search.
    pub explored: usize,
}
