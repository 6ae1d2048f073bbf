//! The `omega-shaping` command line: subcommands, reports and exit codes.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::automata::{parse_hoa, HoaError, Nba};
use crate::learn::{self, LearnConfig, LearnError};
use crate::mdp::{Diagnostic, Mdp, MdpError};
use crate::oracle::{self, EndComponent};
use crate::product::{build_product, ProductError, ProductMdp, Strategy};
use crate::shaping::{augment, check_zeta, AugmentedModel, Mode, ShapingError};
use crate::solvers::{self, SolveError, ValueVector};

pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const VALIDATION: i32 = 4;
    pub const CONVERGENCE: i32 = 5;
    pub const VERIFICATION: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Convergence(#[from] SolveError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => exit::IO,
            CliError::Usage(_) => exit::USAGE,
            CliError::Parse { .. } => exit::PARSE,
            CliError::Validation(_) => exit::VALIDATION,
            CliError::Convergence(_) => exit::CONVERGENCE,
        }
    }
}

impl From<ProductError> for CliError {
    fn from(e: ProductError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ShapingError> for CliError {
    fn from(e: ShapingError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "omega-shaping",
    version,
    about = "Reward shaping for Büchi objectives on MDPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an MDP file and/or an automaton file and list diagnostics.
    Validate(ValidateArgs),
    /// Build the product (optionally shaped with --zeta/--mode) and export it.
    Product(ProductArgs),
    /// Solve the shaped model exactly.
    Solve(SolveArgs),
    /// End components and optimal Büchi satisfaction probabilities.
    Oracle(InputArgs),
    /// Tabular Q-learning on the shaped model.
    Learn(LearnArgs),
    /// Check the shaping identities over optimal and random policies.
    Verify(VerifyArgs),
    /// Compare the greedy total-reward policy with the optimum over a ζ grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Include wall-clock timing in the report.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub mdp: PathBuf,
    #[arg(long)]
    pub hoa: PathBuf,
    /// Add a rejecting trap state to make the automaton complete.
    #[arg(long)]
    pub complete: bool,
    /// Assert that a nondeterministic automaton is good for MDPs.
    #[arg(long)]
    pub gfm: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, required_unless_present = "hoa")]
    pub mdp: Option<PathBuf>,
    #[arg(long)]
    pub hoa: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ProductArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Shape the product with this ζ.
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long, default_value_t = Mode::TotalReward, requires = "zeta")]
    pub mode: Mode,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 0.9)]
    pub zeta: f64,
    #[arg(long, default_value_t = Mode::TotalReward)]
    pub mode: Mode,
    #[arg(long, default_value_t = solvers::DEFAULT_TOLERANCE)]
    pub tol: f64,
    #[arg(long, default_value_t = solvers::DEFAULT_MAX_ITERATIONS)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 0.9)]
    pub zeta: f64,
    /// `total` pays every accepting step, `reach` only the final stop.
    #[arg(long, default_value_t = Mode::TotalReward)]
    pub mode: Mode,
    #[arg(long, default_value_t = 50_000)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 0.3)]
    pub epsilon0: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_steps: usize,
    /// Initialize Q at the payoff bound.
    #[arg(long)]
    pub optimistic: bool,
    /// Also write the learning curve as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Leave the per-episode curve out of the JSON report.
    #[arg(long)]
    pub no_curve: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated ζ values.
    #[arg(long = "zeta", value_delimiter = ',', default_values_t = [0.5, 0.9, 0.99])]
    pub zetas: Vec<f64>,
    /// Number of uniformly random positional policies per ζ.
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance of the reachability/total-reward identity.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub bound_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub prob1_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub operator_tol: f64,
    /// Episodes simulated for the tail check.
    #[arg(long, default_value_t = 2000)]
    pub tail_samples: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Explicit ascending ζ values; overrides --steps.
    #[arg(long = "zeta", value_delimiter = ',')]
    pub zetas: Vec<f64>,
    /// Grid k/steps for k = 1..steps-1.
    #[arg(long, default_value_t = 10)]
    pub steps: u32,
    #[arg(long, default_value_t = solvers::DEFAULT_TOLERANCE)]
    pub tol: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    command: &'a str,
    inputs: Value,
    config: Value,
    result: Value,
    timing: Option<Value>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Reports go to `stdout` unless `--out` is given.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
        }
    };
    match dispatch(&cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let start = Instant::now();
    let (name, output, inputs, config, result, code) = match command {
        Command::Validate(args) => {
            let (result, ok) = cmd_validate(args)?;
            let inputs = json!({"mdp": args.mdp, "hoa": args.hoa});
            let code = if ok { exit::OK } else { exit::VALIDATION };
            ("validate", &args.output, inputs, json!({}), result, code)
        }
        Command::Product(args) => {
            let result = cmd_product(args)?;
            let config = json!({"zeta": args.zeta, "mode": args.zeta.map(|_| args.mode)});
            (
                "product",
                &args.input.output,
                inputs_of(&args.input),
                config,
                result,
                exit::OK,
            )
        }
        Command::Solve(args) => {
            let result = cmd_solve(args)?;
            let config = json!({
                "zeta": args.zeta, "mode": args.mode, "tol": args.tol, "max_iter": args.max_iter,
            });
            (
                "solve",
                &args.input.output,
                inputs_of(&args.input),
                config,
                result,
                exit::OK,
            )
        }
        Command::Oracle(args) => {
            let result = cmd_oracle(args)?;
            (
                "oracle",
                &args.output,
                inputs_of(args),
                json!({}),
                result,
                exit::OK,
            )
        }
        Command::Learn(args) => {
            let cfg = learn_config(args);
            let result = cmd_learn(args, &cfg)?;
            (
                "learn",
                &args.input.output,
                inputs_of(&args.input),
                to_value(&cfg),
                result,
                exit::OK,
            )
        }
        Command::Verify(args) => {
            let cfg = verify_config(args);
            let p = load_product(&args.input)?;
            let report = verify(&p, &cfg)?;
            let code = if report.passed.all() {
                exit::OK
            } else {
                exit::VERIFICATION
            };
            (
                "verify",
                &args.input.output,
                inputs_of(&args.input),
                to_value(&cfg),
                to_value(&report),
                code,
            )
        }
        Command::Sweep(args) => {
            let grid = sweep_grid(args)?;
            let p = load_product(&args.input)?;
            let report = sweep(&p, &grid, args.tol)?;
            if let Some(path) = &args.csv {
                write_sweep_csv(path, &report)?;
            }
            let config = json!({"grid": grid, "tol": args.tol});
            (
                "sweep",
                &args.input.output,
                inputs_of(&args.input),
                config,
                to_value(&report),
                exit::OK,
            )
        }
    };
    let envelope = Envelope {
        command: name,
        inputs,
        config,
        result,
        timing: output
            .timing
            .then(|| json!({"elapsed_ms": start.elapsed().as_secs_f64() * 1e3})),
    };
    let mut text = serde_json::to_string_pretty(&envelope).expect("reports serialize");
    text.push('\n');
    match &output.out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?,
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?,
    }
    Ok(code)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn inputs_of(args: &InputArgs) -> Value {
    json!({"mdp": args.mdp, "hoa": args.hoa, "complete": args.complete, "gfm": args.gfm})
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads an MDP without rejecting invalid distributions.
fn read_mdp(path: &Path) -> Result<Mdp, CliError> {
    Mdp::from_json(&read(path)?).map_err(|e| match e {
        MdpError::Json(_) => CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })
}

fn read_nba(path: &Path) -> Result<Nba, CliError> {
    parse_hoa(&read(path)?).map_err(|e: HoaError| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_inputs(args: &InputArgs) -> Result<(Mdp, Nba), CliError> {
    let m = read_mdp(&args.mdp)?;
    m.ensure_valid()
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.mdp.display())))?;
    let mut a = read_nba(&args.hoa)?;
    if args.complete && !a.is_complete() {
        a = a.completed();
    }
    if args.gfm {
        a = a.assert_gfm();
    }
    Ok((m, a))
}

pub fn load_product(args: &InputArgs) -> Result<ProductMdp, CliError> {
    let (m, a) = load_inputs(args)?;
    Ok(build_product(&m, &a)?)
}

fn cmd_validate(args: &ValidateArgs) -> Result<(Value, bool), CliError> {
    let mut result = Map::new();
    let mut ok = true;
    if let Some(path) = &args.mdp {
        let m = read_mdp(path)?;
        let diagnostics: Vec<Diagnostic> = m.validate();
        ok &= diagnostics.is_empty();
        result.insert(
            "mdp".into(),
            json!({
                "states": m.num_states(),
                "actions": m.action_names().len(),
                "diagnostics": diagnostics,
            }),
        );
    }
    if let Some(path) = &args.hoa {
        let a = read_nba(path)?;
        result.insert(
            "automaton".into(),
            json!({
                "states": a.num_states(),
                "alphabet": a.alphabet(),
                "deterministic": a.is_deterministic(),
                "complete": a.is_complete(),
                "gfm_asserted": a.gfm_asserted(),
            }),
        );
    }
    Ok((Value::Object(result), ok))
}

fn cmd_product(args: &ProductArgs) -> Result<Value, CliError> {
    let p = load_product(&args.input)?;
    Ok(match args.zeta {
        Some(zeta) => to_value(&augment(&p, zeta, args.mode)?.to_file()),
        None => to_value(&p.to_file()),
    })
}

fn value_map(p: &ProductMdp, v: &ValueVector) -> Map<String, Value> {
    let mut map = Map::new();
    for (i, &x) in v.values.iter().enumerate() {
        let name = if i < p.num_states() {
            p.state_name(i)
        } else {
            "t".to_string()
        };
        map.insert(name, json!(x));
    }
    map
}

fn policy_map(p: &ProductMdp, f: &Strategy) -> Map<String, Value> {
    (0..p.num_states())
        .map(|s| {
            (
                p.state_name(s),
                json!(p.pair_name(&p.choices(s)[f.choice(s)].pair)),
            )
        })
        .collect()
}

fn cmd_solve(args: &SolveArgs) -> Result<Value, CliError> {
    let p = load_product(&args.input)?;
    let model = augment(&p, args.zeta, args.mode)?;
    if args.tol.is_nan() || args.tol <= 0.0 {
        return Err(CliError::Usage(format!(
            "--tol must be positive, got {}",
            args.tol
        )));
    }
    let (v, f) = solvers::solve_optimal(&model, args.tol, args.max_iter)?;
    Ok(json!({
        "mode": args.mode,
        "zeta": args.zeta,
        "residual": v.residual,
        "iterations": v.iterations,
        "values": value_map(&p, &v),
        "policy": policy_map(&p, &f),
        "initial_action": p.choice_action_name(p.initial(), f.choice(p.initial())),
    }))
}

fn describe_mec(p: &ProductMdp, mec: &EndComponent) -> Value {
    let pairs: Map<String, Value> = mec
        .states
        .iter()
        .zip(&mec.action_pairs)
        .map(|(&s, cs)| {
            let names: Vec<String> = cs
                .iter()
                .map(|&c| p.pair_name(&p.choices(s)[c].pair))
                .collect();
            (p.state_name(s), json!(names))
        })
        .collect();
    json!({
        "states": mec.states.iter().map(|&s| p.state_name(s)).collect::<Vec<_>>(),
        "action_pairs": pairs,
    })
}

fn cmd_oracle(args: &InputArgs) -> Result<Value, CliError> {
    let (m, a) = load_inputs(args)?;
    let p = build_product(&m, &a)?;
    let mecs = oracle::mec_decomposition(&p);
    let (v, f) = oracle::buchi_value_with(&p, &mecs);
    let accepting: Vec<usize> = (0..mecs.len())
        .filter(|&i| mecs[i].is_accepting(&p))
        .collect();
    Ok(json!({
        "mecs": mecs.iter().map(|mec| describe_mec(&p, mec)).collect::<Vec<_>>(),
        "accepting_mecs": accepting,
        "psat_values": value_map(&p, &v),
        "optimal_policy": policy_map(&p, &f),
        "initial_value": v.at(p.initial()),
        // values of a nondeterministic automaton rely on its asserted GFM property
        "gfm_caveat": !a.is_deterministic(),
    }))
}

fn learn_config(args: &LearnArgs) -> LearnConfig {
    LearnConfig {
        zeta: args.zeta,
        episodes: args.episodes,
        max_steps: args.max_steps,
        alpha0: args.alpha0,
        epsilon0: args.epsilon0,
        epsilon_final: LearnConfig::default().epsilon_final.min(args.epsilon0),
        seed: args.seed,
        optimistic: args.optimistic,
        mode: args.mode,
        ..LearnConfig::default()
    }
}

fn cmd_learn(args: &LearnArgs, cfg: &LearnConfig) -> Result<Value, CliError> {
    cfg.validate()?;
    let p = load_product(&args.input)?;
    let out = learn::train_on(&augment(&p, cfg.zeta, cfg.mode)?, cfg)?;
    if let Some(path) = &args.csv {
        let io = |e: csv::Error| CliError::Io {
            path: path.clone(),
            source: e.into(),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        for point in &out.curve {
            w.serialize(point).map_err(io)?;
        }
        w.flush().map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    let q_table: Map<String, Value> = (0..p.num_states())
        .map(|s| {
            let row: Map<String, Value> = (0..p.num_choices(s))
                .map(|c| {
                    (
                        p.pair_name(&p.choices(s)[c].pair),
                        json!(out.q_table.get(s, c)),
                    )
                })
                .collect();
            (p.state_name(s), Value::Object(row))
        })
        .collect();
    let window = out.curve.len().min(1000);
    let tail = &out.curve[out.curve.len() - window..];
    Ok(json!({
        "policy": policy_map(&p, &out.policy),
        "initial_action": p.choice_action_name(p.initial(), out.policy.choice(p.initial())),
        "q_table": q_table,
        "final_mean_reward": tail.iter().map(|c| c.total_reward).sum::<f64>() / window as f64,
        "curve": if args.no_curve { Value::Null } else { to_value(&out.curve) },
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub zetas: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub identity_tol: f64,
    pub bound_tol: f64,
    pub prob1_tol: f64,
    pub operator_tol: f64,
    pub solve_tol: f64,
    pub tail_samples: usize,
    pub tail_lengths: Vec<u64>,
    pub max_steps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            zetas: vec![0.5, 0.9, 0.99],
            samples: 50,
            seed: 0,
            identity_tol: 1e-8,
            bound_tol: 1e-9,
            prob1_tol: 1e-6,
            operator_tol: 1e-12,
            solve_tol: solvers::DEFAULT_TOLERANCE,
            tail_samples: 2000,
            tail_lengths: vec![1, 2, 5, 10],
            max_steps: 100_000,
        }
    }
}

fn verify_config(args: &VerifyArgs) -> VerifyConfig {
    VerifyConfig {
        zetas: args.zetas.clone(),
        samples: args.samples,
        seed: args.seed,
        identity_tol: args.tol,
        bound_tol: args.bound_tol,
        prob1_tol: args.prob1_tol,
        operator_tol: args.operator_tol,
        tail_samples: args.tail_samples,
        ..VerifyConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailPoint {
    pub n: u64,
    pub frequency: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    pub episodes: usize,
    pub points: Vec<TailPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRecord {
    pub zeta: f64,
    pub policies: usize,
    /// max |PReach(f) − (1−ζ)·ETotal(f)| over states and policies.
    pub theorem2_identity_max_error: f64,
    /// ETotal outside [0, 1/(1−ζ)] or PReach outside [0, 1].
    pub bound_violations: usize,
    /// Disagreements between Büchi probability 1, ETotal = 1/(1−ζ) and PReach = 1.
    pub prob1_equivalence_failures: usize,
    /// max |ETotal − EDisct| over optimal and policy values.
    pub theorem3_max_error: f64,
    pub tail_bound_check: TailCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VerifyFlags {
    pub identity: bool,
    pub bounds: bool,
    pub prob1_equivalence: bool,
    pub operator_identity: bool,
    pub tail_bound: bool,
}

impl VerifyFlags {
    pub fn all(&self) -> bool {
        self.identity
            && self.bounds
            && self.prob1_equivalence
            && self.operator_identity
            && self.tail_bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub records: Vec<VerifyRecord>,
    pub passed: VerifyFlags,
}

/// Uniformly random positional strategy.
pub fn random_strategy<R: Rng + ?Sized>(p: &ProductMdp, rng: &mut R) -> Strategy {
    let choice = (0..p.num_states())
        .map(|s| rng.gen_range(0..p.num_choices(s)))
        .collect();
    Strategy::new(p, choice).expect("sampled choices are available")
}

/// Checks the shaping identities on `p` for every ζ in `cfg.zetas`.
pub fn verify(p: &ProductMdp, cfg: &VerifyConfig) -> Result<VerifyReport, CliError> {
    for &zeta in &cfg.zetas {
        check_zeta(zeta)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (_, buchi_optimal) = oracle::buchi_value(p);
    let mut records = Vec::new();
    for &zeta in &cfg.zetas {
        let reach = augment(p, zeta, Mode::ReachTarget)?;
        let total = reach.with_mode(Mode::TotalReward);
        let biased = reach.with_mode(Mode::BiasedDiscount);
        let bound = 1.0 / (1.0 - zeta);
        let n = p.num_states();

        let (_, reach_optimal) =
            solvers::solve_optimal(&reach, cfg.solve_tol, solvers::DEFAULT_MAX_ITERATIONS)?;
        let (opt_total, total_optimal) =
            solvers::solve_optimal(&total, cfg.solve_tol, solvers::DEFAULT_MAX_ITERATIONS)?;
        let (opt_biased, _) =
            solvers::solve_optimal(&biased, cfg.solve_tol, solvers::DEFAULT_MAX_ITERATIONS)?;

        let mut identity: f64 = 0.0;
        let mut operator: f64 = (0..n)
            .map(|s| (opt_total.at(s) - opt_biased.at(s)).abs())
            .fold(0.0, f64::max);
        let mut violations = (0..n)
            .filter(|&s| !within_bounds(opt_total.at(s), bound, cfg.bound_tol))
            .count();
        let mut failures = 0;

        let mut policies = vec![reach_optimal, total_optimal.clone(), buchi_optimal.clone()];
        policies.extend((0..cfg.samples).map(|_| random_strategy(p, &mut rng)));
        for f in &policies {
            let r = solvers::evaluate_policy(&reach, f, cfg.solve_tol)?;
            let t = solvers::evaluate_policy(&total, f, cfg.solve_tol)?;
            let b = solvers::evaluate_policy(&biased, f, cfg.solve_tol)?;
            let psat = oracle::policy_buchi_values(p, f);
            for (s, &psat_s) in psat.iter().enumerate().take(n) {
                identity = identity.max((r.at(s) - (1.0 - zeta) * t.at(s)).abs());
                operator = operator.max((t.at(s) - b.at(s)).abs());
                if !within_bounds(t.at(s), bound, cfg.bound_tol)
                    || !within_bounds(r.at(s), 1.0, cfg.bound_tol)
                {
                    violations += 1;
                }
                let sure = (psat_s - 1.0).abs() <= cfg.prob1_tol;
                let full_total = (t.at(s) - bound).abs() <= cfg.prob1_tol;
                let full_reach = (r.at(s) - 1.0).abs() <= cfg.prob1_tol;
                if sure != full_total || sure != full_reach {
                    failures += 1;
                }
            }
        }

        let tail_bound_check = tail_check(&total, &total_optimal, cfg, &mut rng);
        records.push(VerifyRecord {
            zeta,
            policies: policies.len(),
            theorem2_identity_max_error: identity,
            bound_violations: violations,
            prob1_equivalence_failures: failures,
            theorem3_max_error: operator,
            tail_bound_check,
        });
    }
    let passed = VerifyFlags {
        identity: records
            .iter()
            .all(|r| r.theorem2_identity_max_error <= cfg.identity_tol),
        bounds: records.iter().all(|r| r.bound_violations == 0),
        prob1_equivalence: records.iter().all(|r| r.prob1_equivalence_failures == 0),
        operator_identity: records
            .iter()
            .all(|r| r.theorem3_max_error <= cfg.operator_tol),
        tail_bound: records
            .iter()
            .all(|r| r.tail_bound_check.points.iter().all(|t| t.ok)),
    };
    Ok(VerifyReport { records, passed })
}

fn within_bounds(x: f64, upper: f64, tol: f64) -> bool {
    x >= -tol && x <= upper + tol
}

/// Frequency of episodes with at least `n` accepting steps before the stop,
/// against `ζ^n` plus three standard errors.
pub fn tail_check<R: Rng + ?Sized>(
    model: &AugmentedModel,
    f: &Strategy,
    cfg: &VerifyConfig,
    rng: &mut R,
) -> TailCheck {
    // Once no accepting transition is reachable the count is final.
    let p = model.base();
    let adj: Vec<Vec<usize>> = (0..p.num_states())
        .map(|s| {
            p.choices(s)[f.choice(s)]
                .outcomes
                .iter()
                .filter(|o| o.prob > 0.0)
                .map(|o| o.target)
                .collect()
        })
        .collect();
    let accepting: Vec<bool> = (0..p.num_states())
        .map(|s| p.choices(s)[f.choice(s)].accepting_mass() > 0.0)
        .collect();
    let live = crate::graph::can_reach(&adj, &accepting);
    let t = model
        .target()
        .expect("tail check runs on the total-reward model");
    let counts: Vec<u64> = (0..cfg.tail_samples)
        .map(|_| {
            let (mut s, mut count) = (p.initial(), 0);
            for _ in 0..cfg.max_steps {
                if !live[s] {
                    break;
                }
                let c = f.choice(s);
                let o = &model.outcomes(s, c)[model.sample(s, c, rng)];
                if o.target == t {
                    break;
                }
                count += u64::from(o.accepting);
                s = o.target;
            }
            count
        })
        .collect();
    let episodes = counts.len().max(1) as f64;
    let points = cfg
        .tail_lengths
        .iter()
        .map(|&n| {
            let frequency = counts.iter().filter(|&&c| c >= n).count() as f64 / episodes;
            let p = model.zeta().powi(n as i32);
            let bound = p + 3.0 * (p / episodes).sqrt();
            TailPoint {
                n,
                frequency,
                bound,
                ok: frequency <= bound,
            }
        })
        .collect();
    TailCheck {
        episodes: counts.len(),
        points,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub zeta: f64,
    pub policy: String,
    pub initial_action: String,
    pub psat_policy: f64,
    pub psat_opt: f64,
    pub is_optimal: bool,
}

/// Smallest grid ζ from which the greedy policy stays Büchi-optimal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Zeta0 {
    Found(f64),
    NotFound,
}

impl Serialize for Zeta0 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Zeta0::Found(z) => s.serialize_f64(*z),
            Zeta0::NotFound => s.serialize_str("not found in grid"),
        }
    }
}

impl fmt::Display for Zeta0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Zeta0::Found(z) => write!(f, "{z}"),
            Zeta0::NotFound => f.write_str("not found in grid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub grid: Vec<f64>,
    pub points: Vec<SweepPoint>,
    pub empirical_zeta0: Zeta0,
}

/// Agreement required between a policy's and the optimal Büchi probability.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-9;

/// `k/steps` for `k = 1..steps`, computed by division so 0.3 prints as 0.3.
pub fn uniform_grid(steps: u32) -> Vec<f64> {
    (1..steps)
        .map(|k| f64::from(k) / f64::from(steps))
        .collect()
}

fn sweep_grid(args: &SweepArgs) -> Result<Vec<f64>, CliError> {
    if args.zetas.is_empty() {
        if args.steps < 2 {
            return Err(CliError::Usage("--steps must be at least 2".into()));
        }
        Ok(uniform_grid(args.steps))
    } else {
        Ok(args.zetas.clone())
    }
}

/// Greedy total-reward policy per grid point, compared with the optimum.
pub fn sweep(p: &ProductMdp, grid: &[f64], tol: f64) -> Result<ThresholdReport, CliError> {
    for &zeta in grid {
        check_zeta(zeta)?;
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Validation(
            "ζ grid must be strictly ascending".into(),
        ));
    }
    let (opt, _) = oracle::buchi_value(p);
    let psat_opt = opt.at(p.initial());
    let points: Vec<Result<SweepPoint, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = grid
            .iter()
            .map(|&zeta| {
                scope.spawn(move || {
                    let model = augment(p, zeta, Mode::TotalReward)?;
                    let (_, f) =
                        solvers::solve_optimal(&model, tol, solvers::DEFAULT_MAX_ITERATIONS)?;
                    let psat_policy = oracle::policy_buchi_probability(p, &f);
                    Ok(SweepPoint {
                        zeta,
                        policy: f.describe(p),
                        initial_action: p
                            .choice_action_name(p.initial(), f.choice(p.initial()))
                            .to_string(),
                        psat_policy,
                        psat_opt,
                        is_optimal: (psat_policy - psat_opt).abs() <= OPTIMALITY_TOLERANCE,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep thread panicked"))
            .collect()
    });
    let points = points.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut empirical_zeta0 = Zeta0::NotFound;
    for point in points.iter().rev() {
        if !point.is_optimal {
            break;
        }
        empirical_zeta0 = Zeta0::Found(point.zeta);
    }
    Ok(ThresholdReport {
        grid: grid.to_vec(),
        points,
        empirical_zeta0,
    })
}

pub const SWEEP_CSV_HEADER: [&str; 5] = ["zeta", "policy", "psat_policy", "psat_opt", "is_optimal"];

fn write_sweep_csv(path: &Path, report: &ThresholdReport) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(SWEEP_CSV_HEADER).map_err(io)?;
    for point in &report.points {
        w.write_record([
            point.zeta.to_string(),
            point.policy.clone(),
            point.psat_policy.to_string(),
            point.psat_opt.to_string(),
            point.is_optimal.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
