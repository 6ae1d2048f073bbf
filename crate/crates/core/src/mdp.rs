//! Labelled Markov decision processes: file format, validation and simulation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the probability mass of each distribution.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("malformed MDP file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown {kind} {name:?}")]
    UnknownName { kind: &'static str, name: String },
    #[error("{kind} {name:?} declared twice")]
    DuplicateName { kind: &'static str, name: String },
    #[error("MDP is invalid: {}", join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("action {action} is not available in state {state}")]
    UnavailableAction { state: String, action: String },
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// On-disk representation. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub alphabet: Vec<String>,
    pub initial: String,
    pub transitions: Vec<TransitionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: String,
    pub action: String,
    pub to: String,
    pub prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub target: usize,
    pub prob: f64,
    pub label: Option<usize>,
}

/// One available action of a state with its successor distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub action: usize,
    pub outcomes: Vec<Outcome>,
}

/// Finite labelled MDP `(S, A, T, Σ, L, s0)`.
///
/// Labels live on transitions. An `Mdp` can hold an invalid model so that
/// [`Mdp::validate`] can report every problem; consumers call
/// [`Mdp::ensure_valid`] first.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    alphabet: Vec<String>,
    initial: usize,
    // choices[s] sorted by action index
    choices: Vec<Vec<Choice>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    NoActions {
        state: String,
    },
    MassNotOne {
        state: String,
        action: String,
        mass: f64,
    },
    NegativeProbability {
        state: String,
        action: String,
        target: String,
        prob: f64,
    },
    UnlabelledEdge {
        state: String,
        action: String,
        target: String,
    },
    LabelledZeroProbabilityEdge {
        state: String,
        action: String,
        target: String,
    },
    DuplicateEdge {
        state: String,
        action: String,
        target: String,
    },
    IndexOutOfRange {
        what: String,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NoActions { state } => write!(f, "state {state} has no available action"),
            Diagnostic::MassNotOne {
                state,
                action,
                mass,
            } => write!(f, "mass != 1 at ({state}, {action}): {mass}"),
            Diagnostic::NegativeProbability {
                state,
                action,
                target,
                prob,
            } => write!(
                f,
                "invalid probability {prob} on ({state}, {action}, {target})"
            ),
            Diagnostic::UnlabelledEdge {
                state,
                action,
                target,
            } => write!(f, "unlabelled edge ({state}, {action}, {target})"),
            Diagnostic::LabelledZeroProbabilityEdge {
                state,
                action,
                target,
            } => write!(
                f,
                "label on zero-probability edge ({state}, {action}, {target})"
            ),
            Diagnostic::DuplicateEdge {
                state,
                action,
                target,
            } => write!(f, "edge ({state}, {action}, {target}) listed twice"),
            Diagnostic::IndexOutOfRange { what } => write!(f, "index out of range: {what}"),
        }
    }
}

fn index_names(kind: &'static str, names: &[String]) -> Result<HashMap<String, usize>, MdpError> {
    let mut map = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if map.insert(n.clone(), i).is_some() {
            return Err(MdpError::DuplicateName {
                kind,
                name: n.clone(),
            });
        }
    }
    Ok(map)
}

fn lookup(kind: &'static str, map: &HashMap<String, usize>, name: &str) -> Result<usize, MdpError> {
    map.get(name).copied().ok_or_else(|| MdpError::UnknownName {
        kind,
        name: name.to_string(),
    })
}

impl Mdp {
    /// Assembles an MDP from indexed parts without validating it.
    pub fn from_parts(
        state_names: Vec<String>,
        action_names: Vec<String>,
        alphabet: Vec<String>,
        initial: usize,
        mut choices: Vec<Vec<Choice>>,
    ) -> Self {
        for per_state in &mut choices {
            per_state.sort_by_key(|c| c.action);
        }
        Mdp {
            state_names,
            action_names,
            alphabet,
            initial,
            choices,
        }
    }

    /// Resolves names; does not check probabilities or labels.
    pub fn from_file(file: &MdpFile) -> Result<Self, MdpError> {
        let states = index_names("state", &file.states)?;
        let actions = index_names("action", &file.actions)?;
        let symbols = index_names("symbol", &file.alphabet)?;
        let initial = lookup("state", &states, &file.initial)?;
        let mut grouped: Vec<BTreeMap<usize, Vec<Outcome>>> =
            vec![BTreeMap::new(); file.states.len()];
        for t in &file.transitions {
            let from = lookup("state", &states, &t.from)?;
            let action = lookup("action", &actions, &t.action)?;
            let target = lookup("state", &states, &t.to)?;
            let label = match &t.label {
                Some(l) => Some(lookup("symbol", &symbols, l)?),
                None => None,
            };
            grouped[from].entry(action).or_default().push(Outcome {
                target,
                prob: t.prob,
                label,
            });
        }
        let choices = grouped
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .map(|(action, outcomes)| Choice { action, outcomes })
                    .collect()
            })
            .collect();
        Ok(Mdp::from_parts(
            file.states.clone(),
            file.actions.clone(),
            file.alphabet.clone(),
            initial,
            choices,
        ))
    }

    pub fn from_json(text: &str) -> Result<Self, MdpError> {
        let file: MdpFile = serde_json::from_str(text)?;
        Mdp::from_file(&file)
    }

    pub fn to_file(&self) -> MdpFile {
        let mut transitions = Vec::new();
        for (s, per_state) in self.choices.iter().enumerate() {
            for c in per_state {
                for o in &c.outcomes {
                    transitions.push(TransitionEntry {
                        from: self.state_names[s].clone(),
                        action: self.action_names[c.action].clone(),
                        to: self.state_names[o.target].clone(),
                        prob: o.prob,
                        label: o.label.map(|l| self.alphabet[l].clone()),
                    });
                }
            }
        }
        MdpFile {
            states: self.state_names.clone(),
            actions: self.action_names.clone(),
            alphabet: self.alphabet.clone(),
            initial: self.state_names[self.initial].clone(),
            transitions,
        }
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.state_names[s]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.action_names[a]
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.action_names.iter().position(|n| n == name)
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn choices(&self, s: usize) -> &[Choice] {
        &self.choices[s]
    }

    pub fn choice(&self, s: usize, action: usize) -> Option<&Choice> {
        self.choices[s].iter().find(|c| c.action == action)
    }

    /// Actions available in `s`, ascending.
    pub fn available(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.choices[s].iter().map(|c| c.action)
    }

    /// Lists every violated invariant; empty iff the MDP is well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let n = self.num_states();
        let name =
            |names: &[String], i: usize| names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
        if self.initial >= n {
            out.push(Diagnostic::IndexOutOfRange {
                what: format!("initial state #{}", self.initial),
            });
        }
        if self.choices.len() != n {
            out.push(Diagnostic::IndexOutOfRange {
                what: format!("{} choice lists for {} states", self.choices.len(), n),
            });
            return out;
        }
        for (s, per_state) in self.choices.iter().enumerate() {
            let state = name(&self.state_names, s);
            if per_state.is_empty() {
                out.push(Diagnostic::NoActions {
                    state: state.clone(),
                });
            }
            for c in per_state {
                let action = name(&self.action_names, c.action);
                if c.action >= self.action_names.len() {
                    out.push(Diagnostic::IndexOutOfRange {
                        what: format!("action {action} at state {state}"),
                    });
                }
                let mut mass = 0.0;
                let mut seen = Vec::new();
                for o in &c.outcomes {
                    let target = name(&self.state_names, o.target);
                    if o.target >= n {
                        out.push(Diagnostic::IndexOutOfRange {
                            what: format!("successor {target} of ({state}, {action})"),
                        });
                    }
                    if seen.contains(&o.target) {
                        out.push(Diagnostic::DuplicateEdge {
                            state: state.clone(),
                            action: action.clone(),
                            target: target.clone(),
                        });
                    }
                    seen.push(o.target);
                    if !(o.prob >= 0.0 && o.prob <= 1.0) {
                        out.push(Diagnostic::NegativeProbability {
                            state: state.clone(),
                            action: action.clone(),
                            target: target.clone(),
                            prob: o.prob,
                        });
                    } else {
                        mass += o.prob;
                    }
                    match o.label {
                        None if o.prob > 0.0 => out.push(Diagnostic::UnlabelledEdge {
                            state: state.clone(),
                            action: action.clone(),
                            target: target.clone(),
                        }),
                        Some(_) if o.prob == 0.0 => {
                            out.push(Diagnostic::LabelledZeroProbabilityEdge {
                                state: state.clone(),
                                action: action.clone(),
                                target: target.clone(),
                            })
                        }
                        Some(l) if l >= self.alphabet.len() => {
                            out.push(Diagnostic::IndexOutOfRange {
                                what: format!("label #{l} on ({state}, {action}, {target})"),
                            })
                        }
                        _ => {}
                    }
                }
                if (mass - 1.0).abs() > MASS_TOLERANCE {
                    out.push(Diagnostic::MassNotOne {
                        state: state.clone(),
                        action: action.clone(),
                        mass,
                    });
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<(), MdpError> {
        let diagnostics = self.validate();
        if diagnostics.is_empty() {
            Ok(())
        } else {
            Err(MdpError::Invalid(diagnostics))
        }
    }

    /// Draws a successor of `(s, action)`; returns it with the edge label.
    pub fn sample_step<R: Rng + ?Sized>(
        &self,
        s: usize,
        action: usize,
        rng: &mut R,
    ) -> Result<(usize, usize), MdpError> {
        let choice = self
            .choice(s, action)
            .ok_or_else(|| MdpError::UnavailableAction {
                state: self.state_names[s].clone(),
                action: self
                    .action_names
                    .get(action)
                    .cloned()
                    .unwrap_or_else(|| format!("#{action}")),
            })?;
        let k = sample_weighted(choice.outcomes.iter().map(|o| o.prob), rng);
        let o = &choice.outcomes[k];
        let label = o.label.expect("validated MDP labels every positive edge");
        Ok((o.target, label))
    }
}

/// Index drawn proportionally to `weights`, never one with zero weight.
pub(crate) fn sample_weighted<R: Rng + ?Sized>(
    weights: impl Iterator<Item = f64> + Clone,
    rng: &mut R,
) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = i;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the accumulated mass
    last_positive
}

/// How many accepting transitions a run took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptingCount {
    Finite(u64),
    Infinite,
}

/// A finite run: `(state, action)` steps followed by the final state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub path: Vec<(usize, usize)>,
    pub last: usize,
    pub labels: Vec<usize>,
    /// Per step: was the transition accepting.
    pub accepting: Vec<bool>,
}

impl RunRecord {
    pub fn new(start: usize) -> Self {
        RunRecord {
            last: start,
            ..Default::default()
        }
    }

    pub fn push(&mut self, action: usize, next: usize, label: usize, accepting: bool) {
        self.path.push((self.last, action));
        self.labels.push(label);
        self.accepting.push(accepting);
        self.last = next;
    }

    pub fn steps(&self) -> usize {
        self.path.len()
    }

    pub fn accepting_count(&self) -> AcceptingCount {
        AcceptingCount::Finite(self.accepting.iter().filter(|&&a| a).count() as u64)
    }

    /// Sequence of visited states including the final one.
    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.path
            .iter()
            .map(|&(s, _)| s)
            .chain(std::iter::once(self.last))
    }
}
