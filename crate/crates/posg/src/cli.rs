//! Command-line entry point: model validation, classifier pre-image
//! extraction, bound computation, strategy simulation and bound evaluation,
//! with machine-readable artifacts and a run manifest next to every output.

use crate::belief::ParticleBelief;
use crate::geometry::Halfspace;
use crate::hsvi::{self, HsviConfig, SolveStatus};
use crate::lower::{AlphaFunction, GammaSet};
use crate::model::{load_model, GameModel};
use crate::relu::{self, ReluNetwork};
use crate::strategy;
use crate::upper::{InitMode, UpsilonSet};
use crate::{fixtures, geometry, lp};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_VALIDATION: i32 = 2;
const EXIT_LIMIT: i32 = 3;
const EXIT_NUMERICAL: i32 = 4;

#[derive(Parser)]
#[command(
    name = "posg",
    version,
    about = "Certified bounds and strategies for one-sided stochastic games \
             with ReLU-classifier perception"
)]
struct Cli {
    /// Worker threads for region backups (1 = fully sequential).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Dump every solved LP in text form into this directory.
    #[arg(long, global = true)]
    lp_dump: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a model file against every structural invariant.
    Validate { model: PathBuf },
    /// Decompose a ReLU classifier into labeled decision regions.
    Preimage(PreimageArgs),
    /// Compute certified value bounds at an initial belief.
    Solve(SolveArgs),
    /// Roll out the synthesized strategy profile.
    Simulate(SimulateArgs),
    /// Print the bound pair at a belief.
    Eval(EvalArgs),
    /// Write the bundled example models and beliefs.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PreimageArgs {
    /// Weights file: {"layers": [{"w": [[..]], "b": [..]}, ...]}.
    #[arg(long)]
    model: PathBuf,
    /// Domain box, e.g. "0:1,0:1".
    #[arg(long, value_name = "LO:HI,...")]
    r#box: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = relu::DEFAULT_PIECE_BUDGET)]
    budget: usize,
}

#[derive(Args)]
struct SolveArgs {
    model: PathBuf,
    #[arg(long)]
    belief: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long)]
    epsilon_bar: Option<f64>,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 7200.0)]
    timeout: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 500)]
    max_depth: usize,
    /// Belief support cap (see --exact).
    #[arg(long, default_value_t = crate::belief::DEFAULT_PARTICLE_CAP)]
    particle_cap: usize,
    /// Exact mode: never truncate belief supports.
    #[arg(long, default_value_t = false)]
    exact: bool,
    /// Upper-bound initialisation: max-reward or max-abs-reward.
    #[arg(long, default_value = "max-abs-reward")]
    init_mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-iteration CSV: iter, lb, ub, gamma_size, upsilon_size, seconds.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    model: PathBuf,
    #[arg(long)]
    bounds: PathBuf,
    #[arg(long)]
    belief: PathBuf,
    #[arg(long, default_value_t = 20)]
    horizon: usize,
    /// Inclusive seed range "a..b" or a single seed.
    #[arg(long, default_value = "0..199")]
    seeds: String,
    #[arg(long, default_value_t = false)]
    exact: bool,
    #[arg(long, default_value_t = crate::belief::DEFAULT_PARTICLE_CAP)]
    particle_cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    model: PathBuf,
    #[arg(long)]
    bounds: PathBuf,
    #[arg(long)]
    belief: PathBuf,
}

#[derive(Debug)]
pub struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code,
            kind,
            message: message.into(),
        }
    }
}

impl From<crate::lower::SolverError> for Failure {
    fn from(e: crate::lower::SolverError) -> Self {
        Failure::new(EXIT_NUMERICAL, "numerical", e.to_string())
    }
}

impl From<crate::model::ModelError> for Failure {
    fn from(e: crate::model::ModelError) -> Self {
        Failure::new(EXIT_VALIDATION, "model", e.to_string())
    }
}

impl From<crate::belief::BeliefError> for Failure {
    fn from(e: crate::belief::BeliefError) -> Self {
        Failure::new(EXIT_VALIDATION, "belief", e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_USAGE, "io", e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new(EXIT_USAGE, "parse", e.to_string())
    }
}

/// Runs the CLI; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(dir) = &cli.lp_dump {
        lp::enable_dump(dir.clone());
    }
    if cli.threads > 1 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": f.kind, "message": f.message}})
            );
            f.code
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    match cli.cmd {
        Cmd::Validate { model } => cmd_validate(&model),
        Cmd::Preimage(args) => cmd_preimage(&args),
        Cmd::Solve(args) => cmd_solve(&args),
        Cmd::Simulate(args) => cmd_simulate(&args),
        Cmd::Eval(args) => cmd_eval(&args),
        Cmd::Fixtures { out } => {
            fixtures::write_bundled(&out)?;
            println!("wrote bundled fixtures into {}", out.display());
            Ok(EXIT_OK)
        }
    }
}

// ---------------------------------------------------------------------------
// artifact schemas
// ---------------------------------------------------------------------------

/// Belief literal: agent state as a (local, percept) name pair and particles
/// as flat `[x..., kappa]` rows.
#[derive(Debug, Serialize, Deserialize)]
pub struct BeliefFile {
    pub s1: (String, String),
    pub particles: Vec<Vec<f64>>,
}

pub fn belief_to_file(model: &GameModel, b: &ParticleBelief) -> BeliefFile {
    let (loc, per) = model.split_agent_state(b.s1);
    BeliefFile {
        s1: (model.locals[loc].clone(), model.percepts[per].clone()),
        particles: b
            .particles
            .iter()
            .map(|(x, w)| {
                let mut row = x.clone();
                row.push(*w);
                row
            })
            .collect(),
    }
}

pub fn belief_from_file(model: &GameModel, f: &BeliefFile) -> Result<ParticleBelief, Failure> {
    let loc = model.locals.iter().position(|n| *n == f.s1.0).ok_or_else(|| {
        Failure::new(
            EXIT_VALIDATION,
            "belief",
            format!("unknown local `{}`", f.s1.0),
        )
    })?;
    let per = model
        .percepts
        .iter()
        .position(|n| *n == f.s1.1)
        .ok_or_else(|| {
            Failure::new(
                EXIT_VALIDATION,
                "belief",
                format!("unknown percept `{}`", f.s1.1),
            )
        })?;
    let e = model.env_dim();
    let mut particles = Vec::with_capacity(f.particles.len());
    for row in &f.particles {
        if row.len() != e + 1 {
            return Err(Failure::new(
                EXIT_VALIDATION,
                "belief",
                format!("particle row has {} entries, expected {}", row.len(), e + 1),
            ));
        }
        particles.push((row[..e].to_vec(), row[e]));
    }
    let b = ParticleBelief::new(model.agent_state(loc, per), particles)?;
    b.check(model)?;
    Ok(b)
}

/// Region of a partition dump: agent state, half-spaces, optional value.
#[derive(Debug, Serialize, Deserialize)]
pub struct RegionDump {
    pub agent_state: (String, String),
    pub halfspaces: Vec<Halfspace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UpsilonPointFile {
    pub belief: BeliefFile,
    pub y: f64,
}

/// The `solve` output: final bounds plus the full certificate sets.
#[derive(Debug, Serialize, Deserialize)]
pub struct BoundsFile {
    pub model: String,
    pub status: String,
    pub epsilon: f64,
    pub lb: f64,
    pub ub: f64,
    pub iterations: usize,
    pub gamma: Vec<Vec<RegionDump>>,
    pub upsilon: Vec<UpsilonPointFile>,
}

fn alpha_to_dump(model: &GameModel, alpha: &AlphaFunction) -> Vec<RegionDump> {
    alpha
        .fcp
        .regions
        .iter()
        .zip(&alpha.values)
        .map(|(r, v)| {
            let (loc, per) = model.split_agent_state(r.agent_state);
            RegionDump {
                agent_state: (model.locals[loc].clone(), model.percepts[per].clone()),
                halfspaces: r.cell.halfspaces.clone(),
                value: Some(*v),
            }
        })
        .collect()
}

fn alpha_from_dump(model: &GameModel, dump: &[RegionDump]) -> Result<AlphaFunction, Failure> {
    let e = model.env_dim();
    let mut regions = Vec::with_capacity(dump.len());
    let mut values = Vec::with_capacity(dump.len());
    for r in dump {
        let loc = model
            .locals
            .iter()
            .position(|n| *n == r.agent_state.0)
            .ok_or_else(|| Failure::new(EXIT_VALIDATION, "bounds", "unknown local in dump"))?;
        let per = model
            .percepts
            .iter()
            .position(|n| *n == r.agent_state.1)
            .ok_or_else(|| Failure::new(EXIT_VALIDATION, "bounds", "unknown percept in dump"))?;
        regions.push(geometry::FcpRegion {
            agent_state: model.agent_state(loc, per),
            cell: geometry::Polytope::new(e, r.halfspaces.clone()),
        });
        values.push(r.value.unwrap_or(0.0));
    }
    Ok(AlphaFunction {
        fcp: geometry::Fcp { regions },
        values,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn bounds_to_file(
    model: &GameModel,
    res_status: &str,
    epsilon: f64,
    lb: f64,
    ub: f64,
    iterations: usize,
    gamma: &GammaSet,
    upsilon: &UpsilonSet,
) -> BoundsFile {
    BoundsFile {
        model: model.name.clone(),
        status: res_status.to_string(),
        epsilon,
        lb,
        ub,
        iterations,
        gamma: gamma
            .alphas
            .iter()
            .map(|a| alpha_to_dump(model, a))
            .collect(),
        upsilon: upsilon
            .points
            .iter()
            .map(|(b, y)| UpsilonPointFile {
                belief: belief_to_file(model, b),
                y: *y,
            })
            .collect(),
    }
}

pub fn bounds_from_file(
    model: &GameModel,
    file: &BoundsFile,
) -> Result<(GammaSet, UpsilonSet), Failure> {
    let mut gamma = GammaSet::default();
    for dump in &file.gamma {
        gamma.alphas.push(alpha_from_dump(model, dump)?);
    }
    let mut upsilon = UpsilonSet::default();
    for p in &file.upsilon {
        upsilon
            .points
            .push((belief_from_file(model, &p.belief)?, p.y));
    }
    Ok((gamma, upsilon))
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: String,
    inputs: Vec<String>,
    config: serde_json::Value,
    tool_version: &'a str,
    seed: u64,
    wall_time_s: f64,
}

fn write_manifest(
    out: &Path,
    command: &str,
    inputs: &[&Path],
    config: serde_json::Value,
    seed: u64,
    started: Instant,
) -> Result<(), Failure> {
    let manifest = RunManifest {
        command: command.to_string(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config,
        tool_version: env!("CARGO_PKG_VERSION"),
        seed,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    let path = out.with_file_name(name);
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

fn cmd_validate(path: &Path) -> Result<i32, Failure> {
    let model = load_model(path)?;
    let report = model.validate()?;
    if report.is_empty() {
        println!("ok: {} is valid", path.display());
        Ok(EXIT_OK)
    } else {
        for v in &report {
            eprintln!("violation: {v}");
        }
        Err(Failure::new(
            EXIT_VALIDATION,
            "validation",
            format!("{} violations", report.len()),
        ))
    }
}

fn parse_box(spec: &str) -> Result<Vec<[f64; 2]>, Failure> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let (lo, hi) = part.split_once(':').ok_or_else(|| {
            Failure::new(EXIT_USAGE, "parse", format!("bad box component `{part}`"))
        })?;
        let lo: f64 = lo
            .trim()
            .parse()
            .map_err(|_| Failure::new(EXIT_USAGE, "parse", format!("bad bound `{lo}`")))?;
        let hi: f64 = hi
            .trim()
            .parse()
            .map_err(|_| Failure::new(EXIT_USAGE, "parse", format!("bad bound `{hi}`")))?;
        out.push([lo, hi]);
    }
    Ok(out)
}

fn cmd_preimage(args: &PreimageArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&args.model)?;
    let net: ReluNetwork = serde_json::from_str(&text)?;
    let bounds = parse_box(&args.r#box)?;
    let domain = geometry::Polytope::from_box(&bounds);
    let regions = relu::decision_regions(&net, &domain, args.budget)
        .map_err(|e| Failure::new(EXIT_NUMERICAL, "preimage", e.to_string()))?;
    #[derive(Serialize)]
    struct LabeledRegion {
        agent_state: usize,
        halfspaces: Vec<Halfspace>,
    }
    let dump: Vec<LabeledRegion> = regions
        .iter()
        .map(|(cell, per)| LabeledRegion {
            agent_state: *per,
            halfspaces: cell.halfspaces.clone(),
        })
        .collect();
    std::fs::write(&args.out, serde_json::to_string_pretty(&dump)?)?;
    write_manifest(
        &args.out,
        "preimage",
        &[&args.model],
        serde_json::json!({"box": args.r#box, "budget": args.budget}),
        0,
        started,
    )?;
    println!(
        "wrote {} labeled regions to {}",
        dump.len(),
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn parse_init_mode(text: &str) -> Result<InitMode, Failure> {
    match text {
        "max-reward" => Ok(InitMode::MaxReward),
        "max-abs-reward" => Ok(InitMode::MaxAbsReward),
        other => Err(Failure::new(
            EXIT_USAGE,
            "parse",
            format!("unknown init mode `{other}`"),
        )),
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let model = load_model(&args.model)?;
    let report = model.validate()?;
    if !report.is_empty() {
        return Err(Failure::new(
            EXIT_VALIDATION,
            "validation",
            format!("model invalid: {}", report.join("; ")),
        ));
    }
    let belief_file: BeliefFile = serde_json::from_str(&std::fs::read_to_string(&args.belief)?)?;
    let belief = belief_from_file(&model, &belief_file)?;
    let mut cfg = HsviConfig::new(args.epsilon);
    cfg.epsilon_bar = args.epsilon_bar;
    cfg.max_seconds = args.timeout;
    cfg.max_iterations = args.max_iterations;
    cfg.max_depth = args.max_depth;
    cfg.particle_cap = (!args.exact).then_some(args.particle_cap);
    cfg.init_mode = parse_init_mode(&args.init_mode)?;
    cfg.seed = args.seed;
    let res = hsvi::solve(&model, &belief, &cfg)?;
    let status = match res.status {
        SolveStatus::Converged => "converged",
        SolveStatus::IterationLimit => "iteration-limit",
        SolveStatus::TimeLimit => "time-limit",
    };
    let bounds = bounds_to_file(
        &model,
        status,
        args.epsilon,
        res.lb,
        res.ub,
        res.iterations,
        &res.gamma,
        &res.upsilon,
    );
    std::fs::write(&args.out, serde_json::to_string_pretty(&bounds)?)?;
    if let Some(trace_path) = &args.trace {
        let mut csv = String::from("iter,lb,ub,gamma_size,upsilon_size,seconds\n");
        for row in &res.trace {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.iter, row.lb, row.ub, row.gamma_size, row.upsilon_size, row.seconds
            ));
        }
        std::fs::write(trace_path, csv)?;
    }
    write_manifest(
        &args.out,
        "solve",
        &[&args.model, &args.belief],
        serde_json::to_value(&cfg)?,
        args.seed,
        started,
    )?;
    println!(
        "{status}: lb {} ub {} after {} iterations (|gamma| {}, |upsilon| {})",
        res.lb,
        res.ub,
        res.iterations,
        res.gamma.len(),
        res.upsilon.len()
    );
    Ok(if res.status == SolveStatus::Converged {
        EXIT_OK
    } else {
        EXIT_LIMIT
    })
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, Failure> {
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|_| Failure::new(EXIT_USAGE, "parse", format!("bad seed `{a}`")))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|_| Failure::new(EXIT_USAGE, "parse", format!("bad seed `{b}`")))?;
        Ok((a..=b).collect())
    } else {
        let s: u64 = spec
            .trim()
            .parse()
            .map_err(|_| Failure::new(EXIT_USAGE, "parse", format!("bad seeds `{spec}`")))?;
        Ok(vec![s])
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let model = load_model(&args.model)?;
    let bounds: BoundsFile = serde_json::from_str(&std::fs::read_to_string(&args.bounds)?)?;
    let (gamma, upsilon) = bounds_from_file(&model, &bounds)?;
    let belief_file: BeliefFile = serde_json::from_str(&std::fs::read_to_string(&args.belief)?)?;
    let belief = belief_from_file(&model, &belief_file)?;
    let cap = (!args.exact).then_some(args.particle_cap);
    let seeds = parse_seeds(&args.seeds)?;

    #[derive(Serialize)]
    struct StepFile {
        state: (Vec<String>, Vec<f64>),
        a1: String,
        a2: String,
        reward: f64,
        belief: BeliefFile,
    }
    #[derive(Serialize)]
    struct TraceFile {
        seed: u64,
        discounted_return: f64,
        warnings: strategy::TraceWarnings,
        steps: Vec<StepFile>,
    }
    let mut traces = Vec::with_capacity(seeds.len());
    let mut returns = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let t = strategy::simulate(
            &model,
            &gamma,
            &upsilon,
            &belief,
            None,
            args.horizon,
            seed,
            cap,
        )?;
        returns.push(t.discounted_return);
        traces.push(TraceFile {
            seed,
            discounted_return: t.discounted_return,
            warnings: t.warnings,
            steps: t
                .steps
                .iter()
                .map(|s| {
                    let (loc, per) = model.split_agent_state(s.state.s1);
                    StepFile {
                        state: (
                            vec![model.locals[loc].clone(), model.percepts[per].clone()],
                            s.state.s_e.clone(),
                        ),
                        a1: model.actions1[s.a1].clone(),
                        a2: model.actions2[s.a2].clone(),
                        reward: s.reward,
                        belief: belief_to_file(&model, &s.belief),
                    }
                })
                .collect(),
        });
    }
    std::fs::write(&args.out, serde_json::to_string_pretty(&traces)?)?;
    write_manifest(
        &args.out,
        "simulate",
        &[&args.model, &args.bounds, &args.belief],
        serde_json::json!({"horizon": args.horizon, "seeds": args.seeds}),
        seeds[0],
        started,
    )?;
    let mean: f64 = returns.iter().sum::<f64>() / returns.len() as f64;
    println!(
        "{} rollouts, horizon {}: mean discounted return {mean}",
        returns.len(),
        args.horizon
    );
    Ok(EXIT_OK)
}

fn cmd_eval(args: &EvalArgs) -> Result<i32, Failure> {
    let model = load_model(&args.model)?;
    let bounds: BoundsFile = serde_json::from_str(&std::fs::read_to_string(&args.bounds)?)?;
    let (gamma, upsilon) = bounds_from_file(&model, &bounds)?;
    let belief_file: BeliefFile = serde_json::from_str(&std::fs::read_to_string(&args.belief)?)?;
    let belief = belief_from_file(&model, &belief_file)?;
    let (lb, _) = crate::lower::evaluate(&gamma, &belief)?;
    let ub = crate::upper::evaluate_ub(&model, &upsilon, &belief)?;
    println!("{}", serde_json::json!({"lb": lb, "ub": ub}));
    Ok(EXIT_OK)
}
