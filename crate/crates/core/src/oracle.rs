//! Ground truth for the Büchi objective on a product.
//!
//! Maximal end components come from iterated SCC pruning. The optimal
//! satisfaction probability is the maximal probability of reaching an
//! accepting MEC, and the value of a fixed strategy is the absorption
//! probability into bottom components of its chain that use an accepting
//! transition.

use serde::Serialize;

use crate::graph;
use crate::linalg;
use crate::product::{ProductMdp, Strategy};
use crate::solvers::{self, ValueVector};

/// Closed, strongly connected set of states under the retained choices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EndComponent {
    /// Ascending product state indices.
    pub states: Vec<usize>,
    /// Retained choice indices, aligned with `states`.
    pub action_pairs: Vec<Vec<usize>>,
}

impl EndComponent {
    pub fn contains(&self, p: usize) -> bool {
        self.states.binary_search(&p).is_ok()
    }

    pub fn retained(&self, p: usize) -> &[usize] {
        match self.states.binary_search(&p) {
            Ok(i) => &self.action_pairs[i],
            Err(_) => &[],
        }
    }

    /// Some retained choice can take an accepting transition.
    pub fn is_accepting(&self, p: &ProductMdp) -> bool {
        self.states.iter().zip(&self.action_pairs).any(|(&s, cs)| {
            cs.iter().any(|&c| {
                p.choices(s)[c]
                    .outcomes
                    .iter()
                    .any(|o| o.accepting && o.prob > 0.0)
            })
        })
    }
}

fn support(p: &ProductMdp, s: usize, c: usize) -> impl Iterator<Item = usize> + '_ {
    p.choices(s)[c]
        .outcomes
        .iter()
        .filter(|o| o.prob > 0.0)
        .map(|o| o.target)
}

/// Maximal end components, ordered by their smallest state.
pub fn mec_decomposition(p: &ProductMdp) -> Vec<EndComponent> {
    let n = p.num_states();
    let mut allowed: Vec<Vec<usize>> = (0..n).map(|s| (0..p.num_choices(s)).collect()).collect();
    let mut alive = vec![true; n];
    loop {
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                if !alive[s] {
                    return Vec::new();
                }
                allowed[s]
                    .iter()
                    .flat_map(|&c| support(p, s, c))
                    .filter(|&t| alive[t])
                    .collect()
            })
            .collect();
        let comps = graph::tarjan_scc(&adj);
        let id = graph::component_index(n, &comps);
        let mut changed = false;
        for s in (0..n).filter(|&s| alive[s]) {
            let before = allowed[s].len();
            allowed[s].retain(|&c| support(p, s, c).all(|t| alive[t] && id[t] == id[s]));
            changed |= allowed[s].len() != before;
        }
        for s in 0..n {
            if alive[s] && allowed[s].is_empty() {
                alive[s] = false;
                changed = true;
            }
        }
        if !changed {
            let mut mecs: Vec<EndComponent> = comps
                .into_iter()
                .filter(|comp| alive[comp[0]])
                .map(|states| EndComponent {
                    action_pairs: states.iter().map(|&s| allowed[s].clone()).collect(),
                    states,
                })
                .collect();
            mecs.sort_by_key(|m| m.states[0]);
            return mecs;
        }
    }
}

/// Optimal Büchi satisfaction probabilities with an optimal positional strategy.
pub fn buchi_value(p: &ProductMdp) -> (ValueVector, Strategy) {
    let mecs = mec_decomposition(p);
    buchi_value_with(p, &mecs)
}

/// [`buchi_value`] reusing an already computed decomposition.
pub fn buchi_value_with(p: &ProductMdp, mecs: &[EndComponent]) -> (ValueVector, Strategy) {
    const VI_TOLERANCE: f64 = 1e-14;
    const VI_MAX_ITERATIONS: usize = 1_000_000;
    const IMPROVEMENT_SLACK: f64 = 1e-12;

    let n = p.num_states();
    let mut choice: Vec<Option<usize>> = vec![None; n];
    let mut in_goal = vec![false; n];

    // Inside an accepting MEC: head for an accepting transition using only
    // retained choices, so the chain never leaves and keeps accepting.
    for mec in mecs.iter().filter(|m| m.is_accepting(p)) {
        let allowed: Vec<Vec<usize>> = (0..n).map(|s| mec.retained(s).to_vec()).collect();
        let mut local: Vec<Option<usize>> = vec![None; n];
        let mut settled = vec![false; n];
        for (&s, cs) in mec.states.iter().zip(&mec.action_pairs) {
            local[s] = cs.iter().copied().find(|&c| {
                p.choices(s)[c]
                    .outcomes
                    .iter()
                    .any(|o| o.accepting && o.prob > 0.0)
            });
            settled[s] = local[s].is_some();
        }
        for s in (0..n).filter(|&s| !mec.contains(s)) {
            local[s] = Some(0);
        }
        solvers::attract(p, &allowed, &mut local, &mut settled);
        for &s in &mec.states {
            choice[s] = local[s];
            in_goal[s] = true;
        }
    }

    // Elsewhere: maximal reachability of the accepting MECs.
    let adj = p.adjacency();
    let hopeful = graph::can_reach(&adj, &in_goal);
    let mut x: Vec<f64> = in_goal.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
    let mut iterations = 0;
    while iterations < VI_MAX_ITERATIONS {
        iterations += 1;
        let mut residual: f64 = 0.0;
        for s in (0..n).filter(|&s| hopeful[s] && !in_goal[s]) {
            let best = (0..p.num_choices(s))
                .map(|c| reach_q(p, &x, s, c))
                .fold(0.0, f64::max);
            residual = residual.max(best - x[s]);
            x[s] = best;
        }
        if residual <= VI_TOLERANCE {
            break;
        }
    }

    // Attractor over near-optimal choices, then exact evaluation; repeat
    // while the exact values still admit a strict improvement.
    let mut strategy;
    let mut values;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let allowed: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                let qs: Vec<f64> = (0..p.num_choices(s))
                    .map(|c| reach_q(p, &x, s, c))
                    .collect();
                let best = qs.iter().copied().fold(0.0, f64::max);
                let slack = solvers::TIE_TOLERANCE * best.max(1.0);
                (0..qs.len()).filter(|&c| qs[c] >= best - slack).collect()
            })
            .collect();
        let mut picked = choice.clone();
        let mut settled = in_goal.clone();
        for s in (0..n).filter(|&s| !hopeful[s]) {
            picked[s] = Some(0);
        }
        solvers::attract(p, &allowed, &mut picked, &mut settled);
        let picked: Vec<usize> = picked.into_iter().map(|c| c.unwrap_or(0)).collect();
        strategy = Strategy::new(p, picked).expect("oracle picks available choices");
        values = policy_buchi_values(p, &strategy);
        let improvable = (0..n).filter(|&s| hopeful[s] && !in_goal[s]).any(|s| {
            (0..p.num_choices(s)).any(|c| reach_q(p, &values, s, c) > values[s] + IMPROVEMENT_SLACK)
        });
        if !improvable || rounds > n {
            break;
        }
        x = values.clone();
    }

    let residual = (0..n)
        .filter(|&s| !in_goal[s])
        .map(|s| {
            let best = (0..p.num_choices(s))
                .map(|c| reach_q(p, &values, s, c))
                .fold(0.0, f64::max);
            (best - values[s]).max(0.0)
        })
        .fold(0.0, f64::max);
    (
        ValueVector {
            values,
            mode: None,
            zeta: None,
            residual,
            iterations,
        },
        strategy,
    )
}

fn reach_q(p: &ProductMdp, x: &[f64], s: usize, c: usize) -> f64 {
    p.choices(s)[c]
        .outcomes
        .iter()
        .map(|o| o.prob * x[o.target])
        .sum()
}

/// Büchi satisfaction probability of `f` from the initial state.
pub fn policy_buchi_probability(p: &ProductMdp, f: &Strategy) -> f64 {
    policy_buchi_values(p, f)[p.initial()]
}

/// Büchi satisfaction probability of `f` from every product state.
pub fn policy_buchi_values(p: &ProductMdp, f: &Strategy) -> Vec<f64> {
    let n = p.num_states();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|s| support(p, s, f.choice(s)).collect())
        .collect();
    let comps = graph::tarjan_scc(&adj);
    let id = graph::component_index(n, &comps);
    let mut good = vec![false; n];
    for (k, comp) in comps.iter().enumerate() {
        let bottom = comp.iter().all(|&s| adj[s].iter().all(|&t| id[t] == k));
        let accepting = comp.iter().any(|&s| {
            p.choices(s)[f.choice(s)]
                .outcomes
                .iter()
                .any(|o| o.accepting && o.prob > 0.0)
        });
        if bottom && accepting {
            for &s in comp {
                good[s] = true;
            }
        }
    }
    let hopeful = graph::can_reach(&adj, &good);
    let transient: Vec<usize> = (0..n).filter(|&s| hopeful[s] && !good[s]).collect();
    let mut index = vec![usize::MAX; n];
    for (i, &s) in transient.iter().enumerate() {
        index[s] = i;
    }
    let m = transient.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (i, &s) in transient.iter().enumerate() {
        a[i][i] += 1.0;
        for o in &p.choices(s)[f.choice(s)].outcomes {
            if good[o.target] {
                b[i] += o.prob;
            } else if index[o.target] != usize::MAX {
                a[i][index[o.target]] -= o.prob;
            }
        }
    }
    let solution = linalg::solve_dense(a, b).expect("transient states have a nonsingular system");
    (0..n)
        .map(|s| {
            if good[s] {
                1.0
            } else if index[s] != usize::MAX {
                solution[index[s]]
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn self_loop_is_one_accepting_mec() {
        let p = fixtures::self_loop_product();
        let mecs = mec_decomposition(&p);
        assert_eq!(mecs.len(), 1);
        assert_eq!(mecs[0].states, vec![0]);
        assert!(mecs[0].is_accepting(&p));
        let (v, f) = buchi_value(&p);
        assert_eq!(v.at(0), 1.0);
        assert_eq!(policy_buchi_probability(&p, &f), 1.0);
    }

    #[test]
    fn i2_components_and_values() {
        let p = fixtures::i2_product();
        let mecs = mec_decomposition(&p);
        let names: Vec<Vec<String>> = mecs
            .iter()
            .map(|m| m.states.iter().map(|&s| p.state_name(s)).collect())
            .collect();
        let s0 = p.initial();
        assert_eq!(mecs.len(), 2);
        assert!(mecs.iter().all(|m| !m.contains(s0)));
        assert!(names.iter().any(|n| n[0].starts_with("(sA")));
        assert!(names.iter().any(|n| n[0].starts_with("(sR")));
        let accepting: Vec<bool> = mecs.iter().map(|m| m.is_accepting(&p)).collect();
        assert_eq!(accepting.iter().filter(|&&a| a).count(), 1);

        let (v, f) = buchi_value(&p);
        assert!((v.at(s0) - 0.5).abs() < 1e-12);
        assert_eq!(f.choice(s0), fixtures::initial_choice(&p, "a"));
    }

    #[test]
    fn i2_policy_probabilities() {
        let p = fixtures::i2_product();
        let s0 = p.initial();
        for (name, expected) in [("a", 0.5), ("b", 0.0)] {
            let mut choice = vec![0; p.num_states()];
            choice[s0] = fixtures::initial_choice(&p, name);
            let f = Strategy::new(&p, choice).unwrap();
            assert!((policy_buchi_probability(&p, &f) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn never_accepting_has_value_zero() {
        let p = fixtures::never_product();
        let (v, _) = buchi_value(&p);
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert!(mec_decomposition(&p).iter().all(|m| !m.is_accepting(&p)));
    }

    #[test]
    fn stalling_choice_is_not_chosen_inside_a_component() {
        // s0 can wait forever on n; the optimal strategy must still take go.
        let p = crate::build_product(
            &fixtures::mdp(fixtures::SPLIT_LABELS),
            &fixtures::accept_g(),
        )
        .unwrap();
        let (v, f) = buchi_value(&p);
        assert_eq!(v.at(p.initial()), 1.0);
        assert_eq!(policy_buchi_probability(&p, &f), 1.0);
        let mut choice = f.choices().to_vec();
        choice[p.initial()] = fixtures::initial_choice(&p, "wait");
        let stall = Strategy::new(&p, choice).unwrap();
        assert_eq!(policy_buchi_probability(&p, &stall), 0.0);
    }
}
