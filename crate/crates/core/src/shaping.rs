//! Shaped payoff models built from a product and a parameter `ζ ∈ (0, 1)`.
//!
//! Reachability and total-reward models share one transition structure: every
//! accepting product transition keeps its successor with probability `ζ` and
//! stops in the target `t` with probability `1 − ζ`. The biased-discount view
//! keeps the product structure unchanged and pays `ζ^i` for the `(i+1)`-th
//! accepting transition.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::mdp::{sample_weighted, RunRecord};
use crate::product::{ProductFile, ProductMdp, ProductTransition};

#[derive(Debug, Error, PartialEq)]
pub enum ShapingError {
    #[error("zeta must lie strictly between 0 and 1, got {0}")]
    ZetaOutOfRange(f64),
    #[error("run is not consistent with the model at step {step}: {reason}")]
    InconsistentRun { step: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Mode {
    /// Probability of reaching `t`.
    #[serde(rename = "reach")]
    ReachTarget,
    /// Number of accepting transitions taken before stopping.
    #[serde(rename = "total")]
    TotalReward,
    /// `Σ_{i<n} ζ^i` over the unstopped product.
    #[serde(rename = "biased")]
    BiasedDiscount,
}

impl Mode {
    pub fn has_target(self) -> bool {
        !matches!(self, Mode::BiasedDiscount)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::ReachTarget => "reach",
            Mode::TotalReward => "total",
            Mode::BiasedDiscount => "biased",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reach" => Ok(Mode::ReachTarget),
            "total" => Ok(Mode::TotalReward),
            "biased" => Ok(Mode::BiasedDiscount),
            other => Err(format!(
                "unknown mode {other:?} (expected reach, total or biased)"
            )),
        }
    }
}

pub fn check_zeta(zeta: f64) -> Result<f64, ShapingError> {
    if zeta > 0.0 && zeta < 1.0 {
        Ok(zeta)
    } else {
        Err(ShapingError::ZetaOutOfRange(zeta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedOutcome {
    /// Product state, or the target index `base.num_states()`.
    pub target: usize,
    pub prob: f64,
    pub label: usize,
    /// Produced by an accepting product transition.
    pub accepting: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    base: ProductMdp,
    zeta: f64,
    mode: Mode,
    // per state, per product choice (same indices as `base`)
    outcomes: Vec<Vec<Vec<AugmentedOutcome>>>,
}

pub fn augment(p: &ProductMdp, zeta: f64, mode: Mode) -> Result<AugmentedModel, ShapingError> {
    let zeta = check_zeta(zeta)?;
    let t = p.num_states();
    let outcomes = (0..p.num_states())
        .map(|s| {
            p.choices(s)
                .iter()
                .map(|c| {
                    let mut out = Vec::with_capacity(c.outcomes.len() + 1);
                    for o in &c.outcomes {
                        if o.accepting && mode.has_target() {
                            out.push(AugmentedOutcome {
                                target: o.target,
                                prob: zeta * o.prob,
                                label: o.label,
                                accepting: true,
                            });
                            out.push(AugmentedOutcome {
                                target: t,
                                prob: (1.0 - zeta) * o.prob,
                                label: o.label,
                                accepting: true,
                            });
                        } else {
                            out.push(AugmentedOutcome {
                                target: o.target,
                                prob: o.prob,
                                label: o.label,
                                accepting: o.accepting,
                            });
                        }
                    }
                    out
                })
                .collect()
        })
        .collect();
    Ok(AugmentedModel {
        base: p.clone(),
        zeta,
        mode,
        outcomes,
    })
}

impl AugmentedModel {
    pub fn base(&self) -> &ProductMdp {
        &self.base
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Index of the stop state `t`, if this mode has one.
    pub fn target(&self) -> Option<usize> {
        self.mode.has_target().then(|| self.base.num_states())
    }

    /// Number of states including `t`.
    pub fn num_nodes(&self) -> usize {
        self.base.num_states() + usize::from(self.mode.has_target())
    }

    pub fn outcomes(&self, p: usize, choice: usize) -> &[AugmentedOutcome] {
        &self.outcomes[p][choice]
    }

    pub fn num_choices(&self, p: usize) -> usize {
        self.outcomes[p].len()
    }

    /// Largest possible payoff: 1 for reachability, `1/(1−ζ)` otherwise.
    pub fn payoff_bound(&self) -> f64 {
        match self.mode {
            Mode::ReachTarget => 1.0,
            _ => 1.0 / (1.0 - self.zeta),
        }
    }

    /// Same base and ζ, different payoff semantics.
    pub fn with_mode(&self, mode: Mode) -> AugmentedModel {
        augment(&self.base, self.zeta, mode).expect("zeta already validated")
    }

    /// Draws a successor of `(p, choice)`; returns the outcome index.
    pub fn sample<R: Rng + ?Sized>(&self, p: usize, choice: usize, rng: &mut R) -> usize {
        let outs = &self.outcomes[p][choice];
        sample_weighted(outs.iter().map(|o| o.prob), rng)
    }

    /// Simulates one episode, choosing actions with `policy`, until `t` or `max_steps`.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        mut policy: impl FnMut(usize, &mut R) -> usize,
        max_steps: usize,
        rng: &mut R,
    ) -> RunRecord {
        let mut run = RunRecord::new(self.base.initial());
        let t = self.target();
        for _ in 0..max_steps {
            let p = run.last;
            if Some(p) == t {
                break;
            }
            let c = policy(p, rng);
            let o = &self.outcomes[p][c][self.sample(p, c, rng)];
            run.push(c, o.target, o.label, o.accepting);
        }
        run
    }

    pub fn reached_target(&self, run: &RunRecord) -> bool {
        Some(run.last) == self.target()
    }

    /// Accepting transitions that did not move to `t`.
    pub fn accepting_before_stop(&self, run: &RunRecord) -> u64 {
        let n = run.accepting.iter().filter(|&&a| a).count() as u64;
        n - u64::from(self.reached_target(run))
    }

    /// Payoff of a finite run under this model's mode.
    pub fn run_payoff(&self, run: &RunRecord) -> Result<f64, ShapingError> {
        self.check_run(run)?;
        Ok(match self.mode {
            Mode::ReachTarget => {
                if self.reached_target(run) {
                    1.0
                } else {
                    0.0
                }
            }
            Mode::TotalReward => run.accepting.iter().filter(|&&a| a).count() as f64,
            Mode::BiasedDiscount => {
                let (mut total, mut weight) = (0.0, 1.0);
                for &acc in &run.accepting {
                    if acc {
                        total += weight;
                        weight *= self.zeta;
                    }
                }
                total
            }
        })
    }

    fn check_run(&self, run: &RunRecord) -> Result<(), ShapingError> {
        let bad = |step, reason: String| Err(ShapingError::InconsistentRun { step, reason });
        if run.labels.len() != run.path.len() || run.accepting.len() != run.path.len() {
            return bad(0, "labels, flags and steps differ in length".into());
        }
        if run.path.first().map_or(run.last, |&(p, _)| p) != self.base.initial() {
            return bad(0, "run does not start in the initial state".into());
        }
        let t = self.target();
        let n = run.path.len();
        for (i, &(p, c)) in run.path.iter().enumerate() {
            if Some(p) == t {
                return bad(i, "run continues after the target".into());
            }
            if p >= self.base.num_states() || c >= self.num_choices(p) {
                return bad(i, format!("choice {c} unavailable at state {p}"));
            }
            let next = if i + 1 < n {
                run.path[i + 1].0
            } else {
                run.last
            };
            let matches = self.outcomes[p][c].iter().any(|o| {
                o.target == next
                    && o.prob > 0.0
                    && o.label == run.labels[i]
                    && o.accepting == run.accepting[i]
            });
            if !matches {
                return bad(
                    i,
                    format!("no positive transition {p} -> {next} with the recorded label"),
                );
            }
        }
        Ok(())
    }

    /// JSON export; includes the stop state and its name in `target`.
    pub fn to_file(&self) -> ProductFile {
        let base = self.base.to_file();
        if self.target().is_none() {
            return base;
        }
        let t_name = "t".to_string();
        let mut states = base.states.clone();
        states.push(t_name.clone());
        let mut transitions = Vec::new();
        let mut accepting = Vec::new();
        for p in 0..self.base.num_states() {
            for (c, choice) in self.base.choices(p).iter().enumerate() {
                let action = self.base.pair_name(&choice.pair);
                for o in &self.outcomes[p][c] {
                    if o.accepting {
                        accepting.push(transitions.len());
                    }
                    transitions.push(ProductTransition {
                        from: states[p].clone(),
                        action: action.clone(),
                        to: states[o.target].clone(),
                        prob: o.prob,
                        label: self.base.alphabet()[o.label].clone(),
                    });
                }
            }
        }
        ProductFile {
            states,
            actions: base.actions,
            alphabet: base.alphabet,
            initial: base.initial,
            transitions,
            accepting,
            target: Some(t_name),
        }
    }
}
