//! Heuristic search value iteration driver: excess-gap schedule, forward
//! exploration over action-observation pairs, recursive explore, and the
//! termination loop that tightens the bound pair at the initial belief.

use crate::belief::{self, ParticleBelief, StageStrategy1, StageStrategy2};
use crate::lower::{self, GammaSet, SolverError};
use crate::model::{A1Id, AgentStateId, GameModel};
use crate::upper::{self, InitMode, UpsilonSet};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HsviConfig {
    /// Target gap at the initial belief.
    pub epsilon: f64,
    /// Excess-gap slack; must lie strictly inside
    /// `(0, (1 - beta) * epsilon / (2 (U - L)))`. `None` picks the midpoint-
    /// safe default `(1 - beta) * epsilon / (4 (U - L))`.
    pub epsilon_bar: Option<f64>,
    pub max_iterations: usize,
    pub max_depth: usize,
    pub max_seconds: f64,
    /// Belief support cap; `None` is exact mode.
    pub particle_cap: Option<usize>,
    pub init_mode: InitMode,
    /// Echoed into outputs; the solver itself is deterministic.
    pub seed: u64,
}

impl HsviConfig {
    pub fn new(epsilon: f64) -> Self {
        HsviConfig {
            epsilon,
            epsilon_bar: None,
            max_iterations: 100_000,
            max_depth: 500,
            max_seconds: 7200.0,
            particle_cap: Some(belief::DEFAULT_PARTICLE_CAP),
            init_mode: InitMode::MaxAbsReward,
            seed: 0,
        }
    }

    pub fn validate(&self, model: &GameModel) -> Result<(), SolverError> {
        if !(self.epsilon > 0.0) {
            return Err(SolverError::NumericalFailure(
                "epsilon must be positive".into(),
            ));
        }
        let (l, u) = model.value_bounds();
        if let Some(eb) = self.epsilon_bar {
            let hi = (1.0 - model.beta) * self.epsilon / (2.0 * (u - l));
            if u > l && !(eb > 0.0 && eb < hi) {
                return Err(SolverError::NumericalFailure(format!(
                    "epsilon_bar {eb} outside (0, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// Midpoint-safe default for the excess-gap slack.
pub fn default_epsilon_bar(epsilon: f64, beta: f64, u_minus_l: f64) -> f64 {
    if u_minus_l <= 0.0 {
        0.0
    } else {
        (1.0 - beta) * epsilon / (4.0 * u_minus_l)
    }
}

/// The excess-gap schedule: `rho(0) = epsilon`,
/// `rho(t+1) = (rho(t) - 2 (U - L) eps_bar) / beta`.
pub fn rho(t: usize, epsilon: f64, epsilon_bar: f64, beta: f64, u_minus_l: f64) -> f64 {
    let mut r = epsilon;
    for _ in 0..t {
        r = (r - 2.0 * u_minus_l * epsilon_bar) / beta;
    }
    r
}

/// Smallest depth at which the schedule exceeds the value diameter; no
/// exploration can recurse past it.
pub fn t_max(epsilon: f64, epsilon_bar: f64, beta: f64, u_minus_l: f64) -> usize {
    let mut r = epsilon;
    for t in 0..100_000 {
        if r >= u_minus_l {
            return t;
        }
        r = (r - 2.0 * u_minus_l * epsilon_bar) / beta;
    }
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub lb: f64,
    pub ub: f64,
    pub gamma_size: usize,
    pub upsilon_size: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    TimeLimit,
}

pub struct SolveResult {
    pub gamma: GammaSet,
    pub upsilon: UpsilonSet,
    pub trace: Vec<TraceRow>,
    pub status: SolveStatus,
    pub lb: f64,
    pub ub: f64,
    pub iterations: usize,
    pub depth_limit_hits: usize,
}

/// A scored action-observation candidate for forward exploration.
#[derive(Debug)]
pub struct PairChoice {
    pub a1: A1Id,
    pub s1_next: AgentStateId,
    pub score: f64,
    pub next_belief: Option<ParticleBelief>,
}

/// Scores every `(a1, s1')` pair by transition probability times the excess
/// gap of the updated belief at depth `t + 1`, and returns the argmax (ties
/// to the lexicographically first pair).
#[allow(clippy::too_many_arguments)]
pub fn select_pair(
    model: &GameModel,
    gamma: &GammaSet,
    upsilon: &UpsilonSet,
    b: &ParticleBelief,
    t: usize,
    u1_ub: &StageStrategy1,
    u2_lb: &StageStrategy2,
    cfg: &HsviConfig,
) -> Result<PairChoice, SolverError> {
    let (l, u) = model.value_bounds();
    let eps_bar = cfg
        .epsilon_bar
        .unwrap_or_else(|| default_epsilon_bar(cfg.epsilon, model.beta, u - l));
    let rho_next = rho(t + 1, cfg.epsilon, eps_bar, model.beta, u - l);
    let mut best = PairChoice {
        a1: 0,
        s1_next: 0,
        score: f64::NEG_INFINITY,
        next_belief: None,
    };
    for a1 in 0..model.actions1.len() {
        for s1p in 0..model.n_agent_states() {
            let p = belief::joint_prob(model, b, u1_ub, u2_lb, a1, s1p)?;
            let (score, nb) = if p <= 1e-15 {
                (0.0, None)
            } else {
                let nb = belief::update(model, b, a1, u2_lb, s1p, cfg.particle_cap)?;
                let ub_v = upper::evaluate_ub(model, upsilon, &nb)?;
                let (lb_v, _) = lower::evaluate(gamma, &nb)?;
                (p * (ub_v - lb_v - rho_next), Some(nb))
            };
            if score > best.score {
                best = PairChoice {
                    a1,
                    s1_next: s1p,
                    score,
                    next_belief: nb,
                };
            }
        }
    }
    Ok(best)
}

struct Ctx<'a> {
    model: &'a GameModel,
    cfg: &'a HsviConfig,
    gamma: GammaSet,
    upsilon: UpsilonSet,
    started: Instant,
    depth_limit_hits: usize,
}

impl Ctx<'_> {
    /// Point-based update of both bounds at `b`, reusing already-solved
    /// stage games when the caller has them.
    fn update(
        &mut self,
        b: &ParticleBelief,
        stage_lb: Option<lower::StageGameLb>,
        y_star: Option<f64>,
    ) -> Result<(), SolverError> {
        let stage = match stage_lb {
            Some(s) => s,
            None => lower::stage_game_lb(self.model, &self.gamma, b)?,
        };
        lower::point_update_lb_with(self.model, &mut self.gamma, b, stage)?;
        let y = match y_star {
            Some(y) => y,
            None => upper::stage_game_ub_primal(self.model, &self.upsilon, b)?.value,
        };
        upper::point_update_ub(&mut self.upsilon, b, y);
        Ok(())
    }

    fn explore(&mut self, b: &ParticleBelief, t: usize) -> Result<(), SolverError> {
        let stage_lb = lower::stage_game_lb(self.model, &self.gamma, b)?;
        let stage_ub = upper::stage_game_ub(self.model, &self.upsilon, b)?;
        let u2_lb = stage_lb.u2.clone();
        let u1_ub = stage_ub.u1.clone();
        self.update(b, Some(stage_lb), Some(stage_ub.value))?;
        if t >= self.cfg.max_depth {
            self.depth_limit_hits += 1;
            return Ok(());
        }
        if self.started.elapsed().as_secs_f64() > self.cfg.max_seconds {
            return Ok(());
        }
        let choice = select_pair(
            self.model,
            &self.gamma,
            &self.upsilon,
            b,
            t,
            &u1_ub,
            &u2_lb,
            self.cfg,
        )?;
        if choice.score > 0.0 {
            let nb = choice.next_belief.expect("positive score implies a belief");
            self.explore(&nb, t + 1)?;
            self.update(b, None, None)?;
        }
        Ok(())
    }
}

/// Runs the solver from an initial belief until the gap at that belief is at
/// most `epsilon` or a limit is reached (reported via the result status).
pub fn solve(
    model: &GameModel,
    init: &ParticleBelief,
    cfg: &HsviConfig,
) -> Result<SolveResult, SolverError> {
    cfg.validate(model)?;
    init.check(model)?;
    let started = Instant::now();
    let mut ctx = Ctx {
        model,
        cfg,
        gamma: lower::init_gamma(model),
        upsilon: upper::init_upsilon(model, cfg.init_mode)?,
        started,
        depth_limit_hits: 0,
    };
    let mut trace = Vec::new();
    let mut status = SolveStatus::IterationLimit;
    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut iterations = 0;
    for iter in 0..=cfg.max_iterations {
        lb = lower::evaluate(&ctx.gamma, init)?.0;
        ub = upper::evaluate_ub(model, &ctx.upsilon, init)?;
        trace.push(TraceRow {
            iter,
            lb,
            ub,
            gamma_size: ctx.gamma.len(),
            upsilon_size: ctx.upsilon.len(),
            seconds: started.elapsed().as_secs_f64(),
        });
        if ub - lb <= cfg.epsilon {
            status = SolveStatus::Converged;
            break;
        }
        if iter == cfg.max_iterations {
            status = SolveStatus::IterationLimit;
            break;
        }
        if started.elapsed().as_secs_f64() > cfg.max_seconds {
            status = SolveStatus::TimeLimit;
            break;
        }
        iterations = iter + 1;
        ctx.explore(init, 0)?;
    }
    Ok(SolveResult {
        gamma: ctx.gamma,
        upsilon: ctx.upsilon,
        trace,
        status,
        lb,
        ub,
        iterations,
        depth_limit_hits: ctx.depth_limit_hits,
    })
}

#[cfg(test)]
pub mod oracle {
    //! Independent finite-game oracle used by tests: Shapley iteration over
    //! an explicit two-state zero-sum stochastic game.

    /// Exact value of a 2x2 zero-sum matrix game (row player maximizes).
    pub fn matrix_game_value_2x2(m: [[f64; 2]; 2]) -> f64 {
        // candidate row mixtures: pure rows and the indifference point
        let mut best = f64::NEG_INFINITY;
        let mut cands = vec![0.0, 1.0];
        let denom = m[0][0] - m[0][1] - m[1][0] + m[1][1];
        if denom.abs() > 1e-12 {
            let p = (m[1][1] - m[1][0]) / denom;
            if (0.0..=1.0).contains(&p) {
                cands.push(p);
            }
        }
        for p in cands {
            let c0 = p * m[0][0] + (1.0 - p) * m[1][0];
            let c1 = p * m[0][1] + (1.0 - p) * m[1][1];
            best = best.max(c0.min(c1));
        }
        best
    }

    /// Value iteration on the induced finite game to within `tol`.
    pub fn shapley_values(
        payoff: [[[f64; 2]; 2]; 2],
        next: [[[usize; 2]; 2]; 2],
        beta: f64,
        tol: f64,
    ) -> [f64; 2] {
        let mut v = [0.0f64; 2];
        for _ in 0..1_000_000 {
            let mut nv = [0.0f64; 2];
            for s in 0..2 {
                let mut q = [[0.0f64; 2]; 2];
                for (a1, row) in q.iter_mut().enumerate() {
                    for (a2, cell) in row.iter_mut().enumerate() {
                        *cell = payoff[s][a1][a2] + beta * v[next[s][a1][a2]];
                    }
                }
                nv[s] = matrix_game_value_2x2(q);
            }
            let diff = (nv[0] - v[0]).abs().max((nv[1] - v[1]).abs());
            v = nv;
            if diff < tol * (1.0 - beta) / (2.0 * beta) {
                break;
            }
        }
        v
    }
}
