//! Exact dynamic programming on shaped models.
//!
//! Reachability uses the augmented transitions with the stop state worth 1.
//! Total reward and biased discount run one and the same operator on the
//! product transitions: an accepting step pays 1 and scales the continuation
//! by `ζ`, any other step passes the continuation through unchanged. Value
//! iteration starts from zero so it converges to the least fixpoint.

use serde::Serialize;
use thiserror::Error;

use crate::graph;
use crate::linalg;
use crate::product::Strategy;
use crate::shaping::{AugmentedModel, Mode};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;
/// Above this many relevant states, policy evaluation iterates instead of factoring.
pub const DEFAULT_DENSE_LIMIT: usize = 10_000;
/// Relative slack under which two action values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("policy evaluation hit a singular system")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueVector {
    /// One entry per product state, plus the stop state (value 0) when the
    /// model has one.
    pub values: Vec<f64>,
    pub mode: Option<Mode>,
    pub zeta: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl ValueVector {
    pub fn at(&self, p: usize) -> f64 {
        self.values[p]
    }
}

/// One Bellman backup of `choice` at `p` against `v`.
pub fn q_value(model: &AugmentedModel, v: &[f64], p: usize, choice: usize) -> f64 {
    match model.mode() {
        Mode::ReachTarget => {
            let t = model.target().unwrap();
            model
                .outcomes(p, choice)
                .iter()
                .map(|o| o.prob * if o.target == t { 1.0 } else { v[o.target] })
                .sum()
        }
        Mode::TotalReward | Mode::BiasedDiscount => {
            let zeta = model.zeta();
            model.base().choices(p)[choice]
                .outcomes
                .iter()
                .map(|o| {
                    if o.accepting {
                        o.prob * (1.0 + zeta * v[o.target])
                    } else {
                        o.prob * v[o.target]
                    }
                })
                .sum()
        }
    }
}

/// Optimal values by value iteration from zero, with the greedy strategy.
pub fn solve_optimal(
    model: &AugmentedModel,
    tol: f64,
    max_iter: usize,
) -> Result<(ValueVector, Strategy), SolveError> {
    let values = value_iteration(model, tol, max_iter, |_, _| {})?;
    let strategy = greedy_policy(model, &values);
    Ok((values, strategy))
}

/// Value iteration exposing every iterate to `observe`.
pub fn value_iteration(
    model: &AugmentedModel,
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<ValueVector, SolveError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(SolveError::BadTolerance(tol));
    }
    let n = model.base().num_states();
    let mut v = vec![0.0; model.num_nodes()];
    let mut next = v.clone();
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        residual = 0.0;
        for p in 0..n {
            let best = (0..model.num_choices(p))
                .map(|c| q_value(model, &v, p, c))
                .fold(f64::NEG_INFINITY, f64::max);
            residual = f64::max(residual, (best - v[p]).abs());
            next[p] = best;
        }
        std::mem::swap(&mut v, &mut next);
        observe(iteration, &v);
        if residual <= tol {
            return Ok(ValueVector {
                values: v,
                mode: Some(model.mode()),
                zeta: Some(model.zeta()),
                residual,
                iterations: iteration,
            });
        }
    }
    Err(SolveError::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Greedy strategy for `v`.
///
/// Among the actions whose value is within [`TIE_TOLERANCE`] of the best, a
/// state picks one that makes progress towards an accepting transition:
/// first the states where such an action takes an accepting transition with
/// positive probability, then, layer by layer, states with such an action
/// reaching an already settled state. Remaining ties go to the lowest index.
/// States of value zero take action 0.
pub fn greedy_policy(model: &AugmentedModel, v: &ValueVector) -> Strategy {
    let p = model.base();
    let n = p.num_states();
    let optimal: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            let qs: Vec<f64> = (0..p.num_choices(s))
                .map(|c| q_value(model, &v.values, s, c))
                .collect();
            let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let slack = TIE_TOLERANCE * best.abs().max(1.0);
            (0..qs.len()).filter(|&c| qs[c] >= best - slack).collect()
        })
        .collect();
    let positive: Vec<bool> = (0..n)
        .map(|s| v.values[s] > TIE_TOLERANCE * v.values[s].abs().max(1.0))
        .collect();
    let choice = progress_choices(model.base(), &optimal, &positive);
    Strategy::new(p, choice).expect("greedy picks available choices")
}

/// Picks, for states with positive value, an allowed choice that takes an
/// accepting transition or, failing that, one leading towards such a state.
fn progress_choices(
    p: &crate::product::ProductMdp,
    allowed: &[Vec<usize>],
    positive: &[bool],
) -> Vec<usize> {
    let n = p.num_states();
    let mut choice: Vec<Option<usize>> = vec![None; n];
    let mut settled = vec![false; n];
    for s in 0..n {
        if !positive[s] {
            choice[s] = Some(0);
            continue;
        }
        choice[s] = allowed[s].iter().copied().find(|&c| {
            p.choices(s)[c]
                .outcomes
                .iter()
                .any(|o| o.accepting && o.prob > 0.0)
        });
        settled[s] = choice[s].is_some();
    }
    attract(p, allowed, &mut choice, &mut settled);
    choice
        .into_iter()
        .enumerate()
        .map(|(s, c)| c.unwrap_or_else(|| allowed[s].first().copied().unwrap_or(0)))
        .collect()
}

/// Layered attractor: repeatedly gives every undecided state the lowest
/// allowed choice with a positive-probability successor in `settled`, and
/// settles it. States that are already decided are left alone.
pub(crate) fn attract(
    p: &crate::product::ProductMdp,
    allowed: &[Vec<usize>],
    choice: &mut [Option<usize>],
    settled: &mut [bool],
) {
    loop {
        let mut layer = Vec::new();
        for s in 0..p.num_states() {
            if choice[s].is_some() {
                continue;
            }
            if let Some(c) = allowed[s].iter().copied().find(|&c| {
                p.choices(s)[c]
                    .outcomes
                    .iter()
                    .any(|o| o.prob > 0.0 && settled[o.target])
            }) {
                layer.push((s, c));
            }
        }
        if layer.is_empty() {
            return;
        }
        for (s, c) in layer {
            choice[s] = Some(c);
            settled[s] = true;
        }
    }
}

/// Value of a fixed strategy, by a direct linear solve.
pub fn evaluate_policy(
    model: &AugmentedModel,
    f: &Strategy,
    tol: f64,
) -> Result<ValueVector, SolveError> {
    evaluate_policy_with(model, f, tol, DEFAULT_DENSE_LIMIT)
}

/// [`evaluate_policy`] with an explicit dense-solve size limit; larger
/// systems are evaluated iteratively to `tol`.
pub fn evaluate_policy_with(
    model: &AugmentedModel,
    f: &Strategy,
    tol: f64,
    dense_limit: usize,
) -> Result<ValueVector, SolveError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(SolveError::BadTolerance(tol));
    }
    let p = model.base();
    let n = p.num_states();
    // States that can reach an accepting transition under f have positive value;
    // all others are fixed at zero, which keeps the remaining system nonsingular.
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            p.choices(s)[f.choice(s)]
                .outcomes
                .iter()
                .filter(|o| o.prob > 0.0)
                .map(|o| o.target)
                .collect()
        })
        .collect();
    let seeds: Vec<bool> = (0..n)
        .map(|s| {
            p.choices(s)[f.choice(s)]
                .outcomes
                .iter()
                .any(|o| o.accepting && o.prob > 0.0)
        })
        .collect();
    let relevant = graph::can_reach(&adj, &seeds);
    let index: Vec<usize> = {
        let mut k = 0;
        (0..n)
            .map(|s| {
                if relevant[s] {
                    k += 1;
                    k - 1
                } else {
                    usize::MAX
                }
            })
            .collect()
    };
    let m = relevant.iter().filter(|&&r| r).count();

    // V(s) = rhs(s) + Σ coef(s, s') V(s')
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut rhs = vec![0.0; m];
    for s in (0..n).filter(|&s| relevant[s]) {
        let i = index[s];
        let c = f.choice(s);
        match model.mode() {
            Mode::ReachTarget => {
                let t = model.target().unwrap();
                for o in model.outcomes(s, c) {
                    if o.target == t {
                        rhs[i] += o.prob;
                    } else if relevant[o.target] {
                        rows[i].push((index[o.target], o.prob));
                    }
                }
            }
            Mode::TotalReward | Mode::BiasedDiscount => {
                for o in &p.choices(s)[c].outcomes {
                    let weight = if o.accepting {
                        rhs[i] += o.prob;
                        o.prob * model.zeta()
                    } else {
                        o.prob
                    };
                    if relevant[o.target] {
                        rows[i].push((index[o.target], weight));
                    }
                }
            }
        }
    }

    let (solution, iterations) = if m <= dense_limit {
        let mut a = vec![vec![0.0; m]; m];
        for (i, row) in rows.iter().enumerate() {
            a[i][i] += 1.0;
            for &(j, w) in row {
                a[i][j] -= w;
            }
        }
        (
            linalg::solve_dense(a, rhs.clone()).ok_or(SolveError::Singular)?,
            1,
        )
    } else {
        iterate_linear(&rows, &rhs, tol)?
    };

    let residual = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let lhs = rhs[i] + row.iter().map(|&(j, w)| w * solution[j]).sum::<f64>();
            (lhs - solution[i]).abs()
        })
        .fold(0.0, f64::max);

    let mut values = vec![0.0; model.num_nodes()];
    for s in (0..n).filter(|&s| relevant[s]) {
        values[s] = solution[index[s]];
    }
    Ok(ValueVector {
        values,
        mode: Some(model.mode()),
        zeta: Some(model.zeta()),
        residual,
        iterations,
    })
}

fn iterate_linear(
    rows: &[Vec<(usize, f64)>],
    rhs: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, usize), SolveError> {
    let mut x = vec![0.0; rhs.len()];
    let mut residual = f64::INFINITY;
    for iteration in 1..=DEFAULT_MAX_ITERATIONS {
        residual = 0.0;
        // Gauss-Seidel sweep
        for i in 0..rhs.len() {
            let value = rhs[i] + rows[i].iter().map(|&(j, w)| w * x[j]).sum::<f64>();
            residual = f64::max(residual, (value - x[i]).abs());
            x[i] = value;
        }
        if residual <= tol {
            return Ok((x, iteration));
        }
    }
    Err(SolveError::NotConverged {
        iterations: DEFAULT_MAX_ITERATIONS,
        residual,
    })
}
