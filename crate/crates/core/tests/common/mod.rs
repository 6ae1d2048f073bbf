//! Random instances and brute-force reference implementations for the
//! integration tests. Everything here is deliberately naive: dense boolean
//! closures and plain iteration instead of the library's graph algorithms.

#![allow(dead_code)]

use omega_shaping::automata::{LassoWord, Nba, Transition};
use omega_shaping::mdp::{Mdp, MdpFile, TransitionEntry};
use omega_shaping::product::{build_product, ProductMdp, Strategy};
use rand::seq::SliceRandom;
use rand::Rng;

pub const ALPHABET: [&str; 2] = ["g", "n"];

/// Probabilities are multiples of 1/20.
const GRAIN: u32 = 20;

pub fn alphabet() -> Vec<String> {
    ALPHABET.iter().map(|s| s.to_string()).collect()
}

/// Random valid MDP with `1..=max_states` states and `1..=max_actions`
/// actions; every state has at least one action and every distribution has
/// one to three successors.
pub fn random_mdp<R: Rng>(rng: &mut R, max_states: usize, max_actions: usize) -> Mdp {
    let n = rng.gen_range(1..=max_states);
    let k = rng.gen_range(1..=max_actions);
    let states: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let actions: Vec<String> = (0..k).map(|i| format!("a{i}")).collect();
    let mut transitions = Vec::new();
    for s in &states {
        let mut available: Vec<usize> = (0..k).filter(|_| rng.gen_bool(0.7)).collect();
        if available.is_empty() {
            available.push(rng.gen_range(0..k));
        }
        for a in available {
            let mut targets: Vec<usize> = (0..n).collect();
            targets.shuffle(rng);
            targets.truncate(rng.gen_range(1..=n.min(3)));
            for (t, w) in targets.iter().zip(random_composition(rng, targets.len())) {
                transitions.push(TransitionEntry {
                    from: s.clone(),
                    action: actions[a].clone(),
                    to: states[*t].clone(),
                    prob: f64::from(w) / f64::from(GRAIN),
                    label: Some(ALPHABET[rng.gen_range(0..ALPHABET.len())].to_string()),
                });
            }
        }
    }
    let file = MdpFile {
        initial: states[0].clone(),
        states,
        actions,
        alphabet: alphabet(),
        transitions,
    };
    let m = Mdp::from_file(&file).expect("generated MDP is well-formed");
    assert!(m.validate().is_empty(), "{:?}", m.validate());
    m
}

/// `parts` positive integers summing to GRAIN.
fn random_composition<R: Rng>(rng: &mut R, parts: usize) -> Vec<u32> {
    let mut cuts: Vec<u32> = (1..GRAIN).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<u32> = cuts[..parts - 1].to_vec();
    cuts.sort_unstable();
    let mut prev = 0;
    let mut out = Vec::with_capacity(parts);
    for c in cuts.into_iter().chain([GRAIN]) {
        out.push(c - prev);
        prev = c;
    }
    out
}

/// Deterministic complete automaton with `1..=max_states` states.
pub fn random_dba<R: Rng>(rng: &mut R, max_states: usize) -> Nba {
    let n = rng.gen_range(1..=max_states);
    let mut transitions = Vec::new();
    for q in 0..n {
        for symbol in 0..ALPHABET.len() {
            transitions.push(Transition {
                source: q,
                symbol,
                target: rng.gen_range(0..n),
                accepting: rng.gen_bool(0.4),
            });
        }
    }
    Nba::new(alphabet(), n, 0, transitions, false).expect("generated automaton is valid")
}

/// Arbitrary (possibly nondeterministic, possibly incomplete) automaton.
pub fn random_nba<R: Rng>(rng: &mut R, max_states: usize) -> Nba {
    let n = rng.gen_range(1..=max_states);
    let mut transitions = Vec::new();
    for source in 0..n {
        for symbol in 0..ALPHABET.len() {
            for target in 0..n {
                if rng.gen_bool(0.4) {
                    transitions.push(Transition {
                        source,
                        symbol,
                        target,
                        accepting: rng.gen_bool(0.3),
                    });
                }
            }
        }
    }
    Nba::new(
        alphabet(),
        n,
        rng.gen_range(0..n),
        transitions,
        rng.gen_bool(0.5),
    )
    .expect("generated automaton is valid")
}

pub struct Instance {
    pub mdp: Mdp,
    pub nba: Nba,
    pub product: ProductMdp,
}

/// MDP with at most 6 states and 3 actions times a deterministic complete
/// automaton with at most 3 states.
pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let mdp = random_mdp(rng, 6, 3);
    let nba = random_dba(rng, 3);
    let product = build_product(&mdp, &nba).expect("complete automaton over the same alphabet");
    Instance { mdp, nba, product }
}

/// Every positional strategy of `p`, in lexicographic order.
pub fn all_strategies(p: &ProductMdp) -> Vec<Strategy> {
    let n = p.num_states();
    let mut out = Vec::new();
    let mut choice = vec![0usize; n];
    loop {
        out.push(Strategy::new(p, choice.clone()).unwrap());
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            choice[i] += 1;
            if choice[i] < p.num_choices(i) {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Reflexive-transitive closure by Floyd–Warshall.
pub fn closure(adj: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut r = adj.to_vec();
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                let via = r[k].clone();
                for (cell, &reach) in r[i].iter_mut().zip(&via) {
                    *cell |= reach;
                }
            }
        }
    }
    r
}

/// Büchi probability of `f` from every state: bottom components found by
/// mutual reachability, absorption by fixed-point iteration.
pub fn buchi_probabilities(p: &ProductMdp, f: &Strategy) -> Vec<f64> {
    let n = p.num_states();
    let step: Vec<&omega_shaping::product::ProductChoice> =
        (0..n).map(|s| &p.choices(s)[f.choice(s)]).collect();
    let mut adj = vec![vec![false; n]; n];
    for s in 0..n {
        for o in step[s].outcomes.iter().filter(|o| o.prob > 0.0) {
            adj[s][o.target] = true;
        }
    }
    let r = closure(&adj);
    let bottom = |s: usize| (0..n).all(|t| !r[s][t] || r[t][s]);
    let mut good = vec![false; n];
    for s in (0..n).filter(|&s| bottom(s)) {
        let class: Vec<usize> = (0..n).filter(|&t| r[s][t]).collect();
        let accepting = class
            .iter()
            .any(|&t| step[t].outcomes.iter().any(|o| o.accepting && o.prob > 0.0));
        good[s] = accepting;
    }
    let mut x: Vec<f64> = good.iter().map(|&g| f64::from(u8::from(g))).collect();
    for _ in 0..1_000_000 {
        let mut delta: f64 = 0.0;
        for s in (0..n).filter(|&s| !good[s]) {
            let v: f64 = step[s].outcomes.iter().map(|o| o.prob * x[o.target]).sum();
            delta = delta.max((v - x[s]).abs());
            x[s] = v;
        }
        if delta < 1e-15 {
            break;
        }
    }
    x
}

/// Is `set` an end component under every choice that stays inside it?
pub fn is_end_component(p: &ProductMdp, set: &[bool]) -> bool {
    let n = p.num_states();
    let members: Vec<usize> = (0..n).filter(|&s| set[s]).collect();
    if members.is_empty() {
        return false;
    }
    let mut adj = vec![vec![false; n]; n];
    for &s in &members {
        let mut any = false;
        for c in p.choices(s) {
            if c.outcomes
                .iter()
                .filter(|o| o.prob > 0.0)
                .all(|o| set[o.target])
            {
                any = true;
                for o in c.outcomes.iter().filter(|o| o.prob > 0.0) {
                    adj[s][o.target] = true;
                }
            }
        }
        if !any {
            return false;
        }
    }
    let r = closure(&adj);
    members.iter().all(|&s| members.iter().all(|&t| r[s][t]))
}

/// Lasso acceptance by explicit closure over (state, position) nodes.
pub fn lasso_oracle(a: &Nba, w: &LassoWord) -> bool {
    let (prefix, cycle) = (w.prefix(), w.cycle());
    let len = prefix.len() + cycle.len();
    let letter = |i: usize| {
        if i < prefix.len() {
            prefix[i]
        } else {
            cycle[i - prefix.len()]
        }
    };
    let next = |i: usize| if i + 1 < len { i + 1 } else { prefix.len() };
    let node = |q: usize, i: usize| q * len + i;
    let size = a.num_states() * len;
    let mut adj = vec![vec![false; size]; size];
    let mut accepting_edges = Vec::new();
    for t in a.transitions() {
        for i in 0..len {
            if letter(i) == t.symbol {
                let (u, v) = (node(t.source, i), node(t.target, next(i)));
                adj[u][v] = true;
                if t.accepting {
                    accepting_edges.push((u, v));
                }
            }
        }
    }
    let r = closure(&adj);
    let start = node(a.initial(), 0);
    accepting_edges.iter().any(|&(u, v)| r[start][u] && r[v][u])
}
