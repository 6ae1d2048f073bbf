//! Tabular Q-learning on the shaped model.
//!
//! Episodes are simulated on the augmented model, so every accepting
//! transition ends the episode with probability `1 − ζ`. Updates are
//! undiscounted; the random stop plays the role of the discount.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::automata::Nba;
use crate::mdp::{Mdp, RunRecord};
use crate::product::{build_product, ProductError, ProductMdp, Strategy};
use crate::shaping::{augment, AugmentedModel, Mode, ShapingError};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid learning configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error(transparent)]
    Shaping(#[from] ShapingError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnConfig {
    pub zeta: f64,
    pub episodes: usize,
    pub max_steps: usize,
    /// Initial learning rate.
    pub alpha0: f64,
    /// Rate at visit `k` is `alpha0 / (1 + k / alpha_scale)`.
    pub alpha_scale: f64,
    pub epsilon0: f64,
    pub epsilon_final: f64,
    /// Fraction of the episodes over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub seed: u64,
    /// Start every entry at the payoff bound instead of 0.
    pub optimistic: bool,
    /// `TotalReward` pays each accepting transition; `ReachTarget` pays only
    /// the arrival at the stop state.
    pub mode: Mode,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            zeta: 0.9,
            episodes: 50_000,
            max_steps: 1000,
            alpha0: 0.1,
            alpha_scale: 1000.0,
            epsilon0: 0.3,
            epsilon_final: 0.01,
            epsilon_decay_fraction: 0.5,
            seed: 0,
            optimistic: false,
            mode: Mode::TotalReward,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |msg: String| Err(LearnError::Config(msg));
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad(format!("zeta must lie in (0,1), got {}", self.zeta));
        }
        if self.episodes == 0 {
            return bad("episodes must be positive".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return bad(format!("alpha0 must lie in (0,1], got {}", self.alpha0));
        }
        if self.alpha_scale.is_nan() || self.alpha_scale <= 0.0 {
            return bad(format!(
                "alpha_scale must be positive, got {}",
                self.alpha_scale
            ));
        }
        for (name, v) in [
            ("epsilon0", self.epsilon0),
            ("epsilon_final", self.epsilon_final),
            ("epsilon_decay_fraction", self.epsilon_decay_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0,1], got {v}"));
            }
        }
        if self.epsilon_final > self.epsilon0 {
            return bad("epsilon_final exceeds epsilon0".into());
        }
        if self.mode == Mode::BiasedDiscount {
            return bad("learning runs on the total or reach model".into());
        }
        Ok(())
    }

    /// Exploration rate for episode `k` (0-based).
    pub fn epsilon(&self, k: usize) -> f64 {
        let span = self.epsilon_decay_fraction * self.episodes as f64;
        let frac = if span > 0.0 {
            (k as f64 / span).min(1.0)
        } else {
            1.0
        };
        self.epsilon0 + (self.epsilon_final - self.epsilon0) * frac
    }

    pub fn alpha(&self, visits: u64) -> f64 {
        self.alpha0 / (1.0 + visits as f64 / self.alpha_scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QTable {
    /// Indexed by product state, then product choice.
    pub q: Vec<Vec<f64>>,
    pub visits: Vec<Vec<u64>>,
}

impl QTable {
    pub fn new(p: &ProductMdp, init: f64) -> Self {
        QTable {
            q: (0..p.num_states())
                .map(|s| vec![init; p.num_choices(s)])
                .collect(),
            visits: (0..p.num_states())
                .map(|s| vec![0; p.num_choices(s)])
                .collect(),
        }
    }

    pub fn get(&self, s: usize, c: usize) -> f64 {
        self.q[s][c]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Highest-valued choice, lowest index on ties.
    pub fn best(&self, s: usize) -> usize {
        let mut best = 0;
        for (c, &v) in self.q[s].iter().enumerate() {
            if v > self.q[s][best] {
                best = c;
            }
        }
        best
    }

    pub fn greedy(&self, p: &ProductMdp) -> Strategy {
        Strategy::new(p, (0..p.num_states()).map(|s| self.best(s)).collect())
            .expect("table shaped like the product")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub total_reward: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub q_table: QTable,
    pub policy: Strategy,
    pub curve: Vec<CurvePoint>,
}

fn reward(model: &AugmentedModel, accepting: bool, next: usize) -> f64 {
    match model.mode() {
        Mode::ReachTarget => f64::from(u8::from(Some(next) == model.target())),
        _ => f64::from(u8::from(accepting)),
    }
}

/// One ε-greedy episode with in-place updates; returns the visited run.
///
/// `model` must have a stop state.
pub fn run_episode<R: Rng + ?Sized>(
    model: &AugmentedModel,
    qt: &mut QTable,
    cfg: &LearnConfig,
    epsilon: f64,
    rng: &mut R,
) -> RunRecord {
    let t = model.target().expect("learning needs the stop state");
    let bound = model.payoff_bound();
    let p = model.base();
    let mut run = RunRecord::new(p.initial());
    while run.steps() < cfg.max_steps && run.last != t {
        let s = run.last;
        let c = if rng.gen::<f64>() < epsilon {
            rng.gen_range(0..p.num_choices(s))
        } else {
            qt.best(s)
        };
        let o = &model.outcomes(s, c)[model.sample(s, c, rng)];
        let r = reward(model, o.accepting, o.target);
        let target = if o.target == t {
            r
        } else {
            r + qt.max(o.target)
        };
        let alpha = cfg.alpha(qt.visits[s][c]);
        qt.visits[s][c] += 1;
        let q = &mut qt.q[s][c];
        *q = (*q + alpha * (target - *q)).clamp(0.0, bound);
        run.push(c, o.target, o.label, o.accepting);
    }
    run
}

/// Builds the product and shaped model, then trains on it.
pub fn train(m: &Mdp, a: &Nba, cfg: &LearnConfig) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    let p = build_product(m, a)?;
    let model = augment(&p, cfg.zeta, cfg.mode)?;
    train_on(&model, cfg)
}

/// Trains on an existing model; `cfg.zeta` and `cfg.mode` are taken from it.
pub fn train_on(model: &AugmentedModel, cfg: &LearnConfig) -> Result<TrainOutcome, LearnError> {
    let cfg = LearnConfig {
        zeta: model.zeta(),
        mode: model.mode(),
        ..cfg.clone()
    };
    cfg.validate()?;
    let init = if cfg.optimistic {
        model.payoff_bound()
    } else {
        0.0
    };
    let qt = QTable::new(model.base(), init);
    Ok(train_from(model, qt, &cfg))
}

/// Continues training from `qt`.
pub fn train_from(model: &AugmentedModel, mut qt: QTable, cfg: &LearnConfig) -> TrainOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon(episode);
        let run = run_episode(model, &mut qt, cfg, epsilon, &mut rng);
        let total_reward = run
            .path
            .iter()
            .zip(&run.accepting)
            .enumerate()
            .map(|(i, (_, &acc))| {
                let next = run.path.get(i + 1).map_or(run.last, |&(s, _)| s);
                reward(model, acc, next)
            })
            .sum();
        curve.push(CurvePoint {
            episode,
            total_reward,
            epsilon,
        });
    }
    TrainOutcome {
        policy: qt.greedy(model.base()),
        q_table: qt,
        curve,
    }
}

/// Independent runs, one per seed, in parallel; results follow `seeds`.
pub fn train_seeds(
    model: &AugmentedModel,
    cfg: &LearnConfig,
    seeds: &[u64],
) -> Result<Vec<TrainOutcome>, LearnError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let cfg = LearnConfig {
                    seed,
                    ..cfg.clone()
                };
                scope.spawn(move || train_on(model, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}

/// Mean reward per episode across runs.
pub fn mean_curve(runs: &[TrainOutcome]) -> Vec<f64> {
    let len = runs.iter().map(|r| r.curve.len()).min().unwrap_or(0);
    (0..len)
        .map(|k| runs.iter().map(|r| r.curve[k].total_reward).sum::<f64>() / runs.len() as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::solvers::{solve_optimal, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};

    fn total(p: &ProductMdp, zeta: f64) -> AugmentedModel {
        augment(p, zeta, Mode::TotalReward).unwrap()
    }

    #[test]
    fn episode_length_on_self_loop_is_geometric() {
        let model = total(&fixtures::self_loop_product(), 0.9);
        let cfg = LearnConfig::default();
        let mut qt = QTable::new(model.base(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 10_000;
        let lengths: Vec<f64> = (0..n)
            .map(|_| run_episode(&model, &mut qt, &cfg, 0.3, &mut rng).steps() as f64)
            .collect();
        let mean = lengths.iter().sum::<f64>() / n as f64;
        // geometric with success 0.1: variance (1-p)/p^2 = 90
        let se = (90.0 / n as f64).sqrt();
        assert!((mean - 10.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn never_accepting_episodes_hit_the_cap() {
        let model = total(&fixtures::never_product(), 0.9);
        let cfg = LearnConfig {
            episodes: 20,
            max_steps: 50,
            ..LearnConfig::default()
        };
        let out = train_on(&model, &cfg).unwrap();
        assert!(out.curve.iter().all(|c| c.total_reward == 0.0));
        assert!(out.q_table.q.iter().flatten().all(|&q| q == 0.0));
        let mut qt = QTable::new(model.base(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            run_episode(&model, &mut qt, &cfg, 0.3, &mut rng).steps(),
            50
        );
    }

    #[test]
    fn exact_values_are_a_greedy_fixpoint() {
        let p = fixtures::i2_product();
        let model = total(&p, 0.9);
        let (v, _) = solve_optimal(&model, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        let mut qt = QTable::new(&p, 0.0);
        for s in 0..p.num_states() {
            for c in 0..p.num_choices(s) {
                qt.q[s][c] = crate::solvers::q_value(&model, &v.values, s, c);
            }
        }
        let a = fixtures::initial_choice(&p, "a");
        // Sample updates move q around its fixpoint; a small step keeps the
        // noise far below the gap between the two actions at s0.
        let cfg = LearnConfig {
            alpha0: 0.01,
            epsilon0: 0.0,
            epsilon_final: 0.0,
            ..LearnConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let run = run_episode(&model, &mut qt, &cfg, 0.0, &mut rng);
            assert_eq!(run.path[0], (p.initial(), a));
        }
        assert_eq!(qt.best(p.initial()), a);
    }

    #[test]
    fn single_episode_touches_one_trajectory() {
        let p = fixtures::i2_product();
        let model = total(&p, 0.9);
        let cfg = LearnConfig {
            episodes: 1,
            ..LearnConfig::default()
        };
        let out = train_on(&model, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut replay = QTable::new(&p, 0.0);
        let run = run_episode(&model, &mut replay, &cfg, cfg.epsilon(0), &mut rng);
        assert_eq!(replay, out.q_table);
        for s in 0..p.num_states() {
            for c in 0..p.num_choices(s) {
                if out.q_table.visits[s][c] == 0 {
                    assert_eq!(out.q_table.q[s][c], 0.0);
                } else {
                    assert!(run.path.contains(&(s, c)));
                }
            }
        }
    }

    #[test]
    fn self_loop_learns_the_geometric_value() {
        let model = total(&fixtures::self_loop_product(), 0.9);
        let cfg = LearnConfig {
            episodes: 5_000,
            ..LearnConfig::default()
        };
        let out = train_on(&model, &cfg).unwrap();
        assert!((out.q_table.get(0, 0) - 10.0).abs() <= 1.0);
    }

    #[test]
    fn training_is_reproducible_and_seed_ordered() {
        let model = total(&fixtures::i2_product(), 0.9);
        let cfg = LearnConfig {
            episodes: 500,
            ..LearnConfig::default()
        };
        let runs = train_seeds(&model, &cfg, &[4, 7, 4]).unwrap();
        assert_eq!(runs[0], runs[2]);
        assert_ne!(runs[0].q_table, runs[1].q_table);
        let seq = train_on(
            &model,
            &LearnConfig {
                seed: 7,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(seq, runs[1]);
        assert_eq!(mean_curve(&runs).len(), 500);
    }

    #[test]
    fn q_values_stay_within_bounds() {
        let model = total(&fixtures::i2_product(), 0.5);
        let cfg = LearnConfig {
            alpha0: 1.0,
            episodes: 2_000,
            ..LearnConfig::default()
        };
        let out = train_on(&model, &cfg).unwrap();
        assert!(out
            .q_table
            .q
            .iter()
            .flatten()
            .all(|&q| (0.0..=2.0).contains(&q)));
    }

    #[test]
    fn reach_mode_rewards_only_the_stop() {
        let model = augment(&fixtures::self_loop_product(), 0.9, Mode::ReachTarget).unwrap();
        let cfg = LearnConfig {
            episodes: 100,
            ..LearnConfig::default()
        };
        let out = train_on(&model, &cfg).unwrap();
        assert!(out.curve.iter().all(|c| c.total_reward == 1.0));
        assert!(out.q_table.get(0, 0) <= 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(LearnConfig::default().validate().is_ok());
        for cfg in [
            LearnConfig {
                episodes: 0,
                ..LearnConfig::default()
            },
            LearnConfig {
                alpha0: 0.0,
                ..LearnConfig::default()
            },
            LearnConfig {
                epsilon0: 1.5,
                ..LearnConfig::default()
            },
            LearnConfig {
                zeta: 1.0,
                ..LearnConfig::default()
            },
            LearnConfig {
                epsilon_final: 0.5,
                ..LearnConfig::default()
            },
            LearnConfig {
                mode: Mode::BiasedDiscount,
                ..LearnConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        let cfg = LearnConfig {
            episodes: 100,
            ..LearnConfig::default()
        };
        assert_eq!(cfg.epsilon(0), 0.3);
        assert!((cfg.epsilon(50) - 0.01).abs() < 1e-15);
        assert!((cfg.epsilon(99) - 0.01).abs() < 1e-15);
    }
}
