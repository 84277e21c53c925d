//! Upper bound on the game value: belief-value points, the total-variation
//! belief metric that interpolates between them, the envelope LP, and the
//! minimax stage-game LP pair.

use crate::belief::{BeliefError, ParticleBelief, StageStrategy1, StageStrategy2, MERGE_TOL};
use crate::geometry;
use crate::lower::SolverError;
use crate::lp::{self, LpInstance, LpStatus, Rel, Sense};
use crate::model::{AgentStateId, GameModel, HybridState, Successor};
use serde::{Deserialize, Serialize};

/// Upper-bound initialisation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    /// `U = max r / (1 - beta)`.
    MaxReward,
    /// `U = max |r| / (1 - beta)`; the default, sound for mixed-sign rewards.
    MaxAbsReward,
}

/// Finite set of belief-value points backing the upper bound.
#[derive(Debug, Clone, Default)]
pub struct UpsilonSet {
    pub points: Vec<(ParticleBelief, f64)>,
}

impl UpsilonSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn indices_for(&self, s1: AgentStateId) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, (b, _))| b.s1 == s1)
            .map(|(i, _)| i)
            .collect()
    }

    /// Appends a belief-value point. A point whose belief already exists
    /// keeps the smaller value instead of adding a duplicate column: the
    /// envelope is unchanged because any weight on the dominated copy can be
    /// moved to the kept one without raising the objective.
    pub fn push(&mut self, b: ParticleBelief, y: f64) {
        for (eb, ey) in self.points.iter_mut() {
            if same_belief(eb, &b) {
                if y < *ey {
                    *ey = y;
                }
                return;
            }
        }
        self.points.push((b, y));
    }
}

fn same_belief(a: &ParticleBelief, b: &ParticleBelief) -> bool {
    if a.s1 != b.s1 || a.len() != b.len() {
        return false;
    }
    a.particles.iter().all(|(x, w)| {
        b.particles
            .iter()
            .any(|(y, v)| geometry::linf(x, y) <= MERGE_TOL && (w - v).abs() <= 1e-12)
    })
}

/// Probability mass `b` puts within the merge tolerance of `x`.
fn mass_at(b: &ParticleBelief, x: &[f64]) -> f64 {
    b.particles
        .iter()
        .filter(|(y, _)| geometry::linf(x, y) <= MERGE_TOL)
        .map(|(_, w)| w)
        .sum()
}

/// Clustered union of particle positions from several beliefs.
fn union_support<'a>(beliefs: impl Iterator<Item = &'a ParticleBelief>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for b in beliefs {
        for (x, _) in &b.particles {
            if !out.iter().any(|y| geometry::linf(x, y) <= MERGE_TOL) {
                out.push(x.clone());
            }
        }
    }
    out
}

/// Total-variation belief distance scaled by `(U - L) / 2`; the Lipschitz
/// envelope of the value function and the interpolation penalty of the
/// upper bound.
pub fn k_ub(model: &GameModel, a: &ParticleBelief, b: &ParticleBelief) -> Result<f64, BeliefError> {
    if a.s1 != b.s1 {
        return Err(BeliefError::AgentStateMismatch);
    }
    let (l, u) = model.value_bounds();
    let mut tv = 0.0;
    for x in union_support([a, b].into_iter()) {
        tv += (mass_at(a, &x) - mass_at(b, &x)).abs();
    }
    Ok(0.5 * (u - l) * tv)
}

/// One belief-value point per agent state with a non-empty compatible
/// region: a single particle at the Chebyshev center of the first
/// compatible cell, valued at the chosen horizon bound.
pub fn init_upsilon(model: &GameModel, mode: InitMode) -> Result<UpsilonSet, SolverError> {
    let (_, u) = model.value_bounds();
    let u_init = match mode {
        InitMode::MaxReward => u,
        InitMode::MaxAbsReward => model.max_abs_bound(),
    };
    let mut points = Vec::new();
    for s1 in 0..model.n_agent_states() {
        let cells = model.compatible_cells(s1);
        let Some(first) = cells.first() else {
            continue;
        };
        let center = first.interior_point()?;
        points.push((ParticleBelief::dirac(s1, center), u_init));
    }
    Ok(UpsilonSet { points })
}

/// Envelope evaluation: the optimal value of the interpolation LP over the
/// stored points sharing the belief's agent state.
pub fn evaluate_ub(
    model: &GameModel,
    upsilon: &UpsilonSet,
    b: &ParticleBelief,
) -> Result<f64, SolverError> {
    let idx = upsilon.indices_for(b.s1);
    if idx.is_empty() {
        return Err(SolverError::NoPointsForAgentState(b.s1));
    }
    let (l, u) = model.value_bounds();
    let support = union_support(
        std::iter::once(b).chain(idx.iter().map(|&k| &upsilon.points[k].0)),
    );
    let mut prob = LpInstance::new(Sense::Min);
    let lam: Vec<usize> = idx
        .iter()
        .map(|&k| prob.add_var(upsilon.points[k].1, false))
        .collect();
    let cs: Vec<usize> = support
        .iter()
        .map(|_| prob.add_var(0.5 * (u - l), false))
        .collect();
    for (s, &c) in support.iter().zip(&cs) {
        let pb = mass_at(b, s);
        // c >= P(s;b) - sum_k lambda_k P(s;b_k), and the mirror image
        let r1 = prob.add_row(Rel::Ge, pb);
        prob.set_coef(r1, c, 1.0);
        for (j, &k) in idx.iter().enumerate() {
            prob.set_coef(r1, lam[j], mass_at(&upsilon.points[k].0, s));
        }
        let r2 = prob.add_row(Rel::Ge, -pb);
        prob.set_coef(r2, c, 1.0);
        for (j, &k) in idx.iter().enumerate() {
            prob.set_coef(r2, lam[j], -mass_at(&upsilon.points[k].0, s));
        }
    }
    let norm = prob.add_row(Rel::Eq, 1.0);
    for &v in &lam {
        prob.set_coef(norm, v, 1.0);
    }
    let sol = lp::solve(&prob)?;
    if sol.status != LpStatus::Optimal {
        return Err(SolverError::NumericalFailure(format!(
            "upper envelope LP status {:?}",
            sol.status
        )));
    }
    Ok(sol.objective)
}

/// Solution of the stage game over the upper bound.
#[derive(Debug)]
pub struct StageGameUb {
    pub value: f64,
    pub u1: StageStrategy1,
    pub u2: StageStrategy2,
}

/// Successor data grouped per (a1, s1'): transition mass and the clustered
/// target support.
struct Reachability {
    /// `succ[i][a1][a2]`
    succ: Vec<Vec<Vec<Vec<Successor>>>>,
    /// reachable (a1, s1') pairs in lexicographic order
    pairs: Vec<(usize, AgentStateId)>,
}

fn reachability(model: &GameModel, b: &ParticleBelief) -> Result<Reachability, SolverError> {
    let n_a1 = model.actions1.len();
    let n_a2 = model.actions2.len();
    let mut succ = Vec::with_capacity(b.len());
    for (x, _) in &b.particles {
        let s = HybridState {
            s1: b.s1,
            s_e: x.clone(),
        };
        let mut per_a1 = Vec::with_capacity(n_a1);
        for a1 in 0..n_a1 {
            let mut per_a2 = Vec::with_capacity(n_a2);
            for a2 in 0..n_a2 {
                per_a2.push(model.successors(&s, a1, a2)?);
            }
            per_a1.push(per_a2);
        }
        succ.push(per_a1);
    }
    let mut pairs = Vec::new();
    for a1 in 0..n_a1 {
        for s1p in 0..model.n_agent_states() {
            let reach = succ.iter().any(|per_a1| {
                per_a1[a1]
                    .iter()
                    .any(|list| list.iter().any(|e| e.s1 == s1p && e.prob > 0.0))
            });
            if reach {
                pairs.push((a1, s1p));
            }
        }
    }
    Ok(Reachability { succ, pairs })
}

/// Mass particle `i` sends to `(s1p, target)` under `(a1, a2)`.
fn delta_mass(succ: &[Successor], s1p: AgentStateId, target: &[f64]) -> f64 {
    succ.iter()
        .filter(|e| e.s1 == s1p && geometry::linf(&e.s_e, target) <= MERGE_TOL)
        .map(|e| e.prob)
        .sum()
}

/// The primal minimax LP over `(v, c, lambda, p)`: the minimizer's stage
/// strategy appears directly as the `p` block.
pub fn stage_game_ub_primal(
    model: &GameModel,
    upsilon: &UpsilonSet,
    b: &ParticleBelief,
) -> Result<StageGameUb, SolverError> {
    let n_a1 = model.actions1.len();
    let n_a2 = model.actions2.len();
    let n_b = b.len();
    let (l, u) = model.value_bounds();
    let reach = reachability(model, b)?;

    // support set and point indices per reachable (a1, s1')
    let mut supports: Vec<Vec<Vec<f64>>> = Vec::with_capacity(reach.pairs.len());
    let mut point_idx: Vec<Vec<usize>> = Vec::with_capacity(reach.pairs.len());
    for &(a1, s1p) in &reach.pairs {
        let idx = upsilon.indices_for(s1p);
        if idx.is_empty() {
            return Err(SolverError::NoPointsForAgentState(s1p));
        }
        let mut sup: Vec<Vec<f64>> = Vec::new();
        for per_a1 in &reach.succ {
            for list in &per_a1[a1] {
                for e in list {
                    if e.s1 == s1p && !sup.iter().any(|y| geometry::linf(y, &e.s_e) <= MERGE_TOL)
                    {
                        sup.push(e.s_e.clone());
                    }
                }
            }
        }
        for &k in &idx {
            for (x, _) in &upsilon.points[k].0.particles {
                if !sup.iter().any(|y| geometry::linf(y, x) <= MERGE_TOL) {
                    sup.push(x.clone());
                }
            }
        }
        supports.push(sup);
        point_idx.push(idx);
    }

    let mut prob = LpInstance::new(Sense::Min);
    let v = prob.add_var(1.0, true);
    let mut c_vars: Vec<Vec<usize>> = Vec::new();
    let mut l_vars: Vec<Vec<usize>> = Vec::new();
    for (pi, _) in reach.pairs.iter().enumerate() {
        c_vars.push(supports[pi].iter().map(|_| prob.add_var(0.0, false)).collect());
        l_vars.push(point_idx[pi].iter().map(|_| prob.add_var(0.0, false)).collect());
    }
    let mut p_vars = vec![vec![0usize; n_a2]; n_b];
    for per_a2 in p_vars.iter_mut() {
        for slot in per_a2.iter_mut() {
            *slot = prob.add_var(0.0, false);
        }
    }

    // per a1: v >= reward term + beta * (lambda y + (U-L)/2 * c)
    for a1 in 0..n_a1 {
        let row = prob.add_row(Rel::Ge, 0.0);
        prob.set_coef(row, v, 1.0);
        for i in 0..n_b {
            let kappa = b.particles[i].1;
            let s = HybridState {
                s1: b.s1,
                s_e: b.particles[i].0.clone(),
            };
            for a2 in 0..n_a2 {
                let r = model.reward(&s, a1, a2)?;
                prob.set_coef(row, p_vars[i][a2], -kappa * r);
            }
        }
        for (pi, &(pa1, _)) in reach.pairs.iter().enumerate() {
            if pa1 != a1 {
                continue;
            }
            for (j, &k) in point_idx[pi].iter().enumerate() {
                prob.set_coef(row, l_vars[pi][j], -model.beta * upsilon.points[k].1);
            }
            for &cv in &c_vars[pi] {
                prob.set_coef(row, cv, -0.5 * model.beta * (u - l));
            }
        }
    }
    // abs rows and mass balance per reachable (a1, s1')
    for (pi, &(a1, s1p)) in reach.pairs.iter().enumerate() {
        for (si, target) in supports[pi].iter().enumerate() {
            // c >= +-(pushed mass - interpolated mass)
            for sign in [1.0f64, -1.0] {
                let row = prob.add_row(Rel::Ge, 0.0);
                prob.set_coef(row, c_vars[pi][si], 1.0);
                for i in 0..n_b {
                    let kappa = b.particles[i].1;
                    for a2 in 0..n_a2 {
                        let m = delta_mass(&reach.succ[i][a1][a2], s1p, target);
                        if m > 0.0 {
                            prob.set_coef(row, p_vars[i][a2], -sign * kappa * m);
                        }
                    }
                }
                for (j, &k) in point_idx[pi].iter().enumerate() {
                    let pm = mass_at(&upsilon.points[k].0, target);
                    if pm > 0.0 {
                        prob.set_coef(row, l_vars[pi][j], sign * pm);
                    }
                }
            }
        }
        let row = prob.add_row(Rel::Eq, 0.0);
        for &lv in &l_vars[pi] {
            prob.set_coef(row, lv, 1.0);
        }
        for i in 0..n_b {
            let kappa = b.particles[i].1;
            for a2 in 0..n_a2 {
                let m: f64 = reach.succ[i][a1][a2]
                    .iter()
                    .filter(|e| e.s1 == s1p)
                    .map(|e| e.prob)
                    .sum();
                if m > 0.0 {
                    prob.set_coef(row, p_vars[i][a2], -kappa * m);
                }
            }
        }
    }
    // stage-strategy rows
    for per_a2 in &p_vars {
        let row = prob.add_row(Rel::Eq, 1.0);
        for &pv in per_a2 {
            prob.set_coef(row, pv, 1.0);
        }
    }

    let sol = lp::solve(&prob)?;
    if sol.status != LpStatus::Optimal {
        return Err(SolverError::NumericalFailure(format!(
            "upper stage LP status {:?}",
            sol.status
        )));
    }
    let mut rows = Vec::with_capacity(n_b);
    for per_a2 in &p_vars {
        let mut row: Vec<f64> = per_a2.iter().map(|&pv| sol.primal[pv].max(0.0)).collect();
        let total: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= total;
        }
        rows.push(row);
    }
    Ok(StageGameUb {
        value: sol.objective,
        u1: StageStrategy1(vec![0.0; n_a1]), // filled by the caller via the dual
        u2: StageStrategy2 { rows },
    })
}

/// The dual minimax LP over `(v_i, v_{a1,s1'}, p, d, e)`: the maximizer's
/// stage strategy appears as the `p` block.
pub fn stage_game_ub_dual(
    model: &GameModel,
    upsilon: &UpsilonSet,
    b: &ParticleBelief,
) -> Result<(f64, StageStrategy1), SolverError> {
    let n_a1 = model.actions1.len();
    let n_a2 = model.actions2.len();
    let n_b = b.len();
    let (l, u) = model.value_bounds();
    let reach = reachability(model, b)?;

    let mut supports: Vec<Vec<Vec<f64>>> = Vec::with_capacity(reach.pairs.len());
    let mut point_idx: Vec<Vec<usize>> = Vec::with_capacity(reach.pairs.len());
    for &(a1, s1p) in &reach.pairs {
        let idx = upsilon.indices_for(s1p);
        if idx.is_empty() {
            return Err(SolverError::NoPointsForAgentState(s1p));
        }
        let mut sup: Vec<Vec<f64>> = Vec::new();
        for per_a1 in &reach.succ {
            for list in &per_a1[a1] {
                for e in list {
                    if e.s1 == s1p && !sup.iter().any(|y| geometry::linf(y, &e.s_e) <= MERGE_TOL)
                    {
                        sup.push(e.s_e.clone());
                    }
                }
            }
        }
        for &k in &idx {
            for (x, _) in &upsilon.points[k].0.particles {
                if !sup.iter().any(|y| geometry::linf(y, x) <= MERGE_TOL) {
                    sup.push(x.clone());
                }
            }
        }
        supports.push(sup);
        point_idx.push(idx);
    }

    let mut prob = LpInstance::new(Sense::Max);
    let v_i: Vec<usize> = b
        .particles
        .iter()
        .map(|(_, kappa)| prob.add_var(*kappa, true))
        .collect();
    let v_pair: Vec<usize> = reach.pairs.iter().map(|_| prob.add_var(0.0, true)).collect();
    let p_a1: Vec<usize> = (0..n_a1).map(|_| prob.add_var(0.0, false)).collect();
    let mut d_vars: Vec<Vec<usize>> = Vec::new();
    let mut e_vars: Vec<Vec<usize>> = Vec::new();
    for (pi, _) in reach.pairs.iter().enumerate() {
        d_vars.push(supports[pi].iter().map(|_| prob.add_var(0.0, false)).collect());
        e_vars.push(supports[pi].iter().map(|_| prob.add_var(0.0, false)).collect());
    }

    // per (i, a2): v_i <= sum_a1 p r + beta sum delta (v_pair + d - e)
    for i in 0..n_b {
        let s = HybridState {
            s1: b.s1,
            s_e: b.particles[i].0.clone(),
        };
        for a2 in 0..n_a2 {
            let row = prob.add_row(Rel::Le, 0.0);
            prob.set_coef(row, v_i[i], 1.0);
            for a1 in 0..n_a1 {
                let r = model.reward(&s, a1, a2)?;
                prob.set_coef(row, p_a1[a1], -r);
            }
            for (pi, &(a1, s1p)) in reach.pairs.iter().enumerate() {
                for (si, target) in supports[pi].iter().enumerate() {
                    let m = delta_mass(&reach.succ[i][a1][a2], s1p, target);
                    if m > 0.0 {
                        prob.set_coef(row, v_pair[pi], -model.beta * m);
                        prob.set_coef(row, d_vars[pi][si], -model.beta * m);
                        prob.set_coef(row, e_vars[pi][si], model.beta * m);
                    }
                }
            }
        }
    }
    // per reachable (a1, s1'), per stored point k: v_pair <= y_k p^{a1} - sum (d-e) P
    for (pi, &(a1, _)) in reach.pairs.iter().enumerate() {
        for &k in &point_idx[pi] {
            let row = prob.add_row(Rel::Le, 0.0);
            prob.set_coef(row, v_pair[pi], 1.0);
            prob.set_coef(row, p_a1[a1], -upsilon.points[k].1);
            for (si, target) in supports[pi].iter().enumerate() {
                let pm = mass_at(&upsilon.points[k].0, target);
                if pm > 0.0 {
                    prob.set_coef(row, d_vars[pi][si], pm);
                    prob.set_coef(row, e_vars[pi][si], -pm);
                }
            }
        }
        // d + e <= (U - L) / 2 * p^{a1}: the exact dual of the primal's
        // c-column (the difference form leaves e uncapped and the LP
        // unbounded whenever a support point receives no pushed mass)
        for si in 0..supports[pi].len() {
            let row = prob.add_row(Rel::Le, 0.0);
            prob.set_coef(row, d_vars[pi][si], 1.0);
            prob.set_coef(row, e_vars[pi][si], 1.0);
            prob.set_coef(row, p_a1[a1], -0.5 * (u - l));
        }
    }
    let norm = prob.add_row(Rel::Eq, 1.0);
    for &pv in &p_a1 {
        prob.set_coef(norm, pv, 1.0);
    }

    let sol = lp::solve(&prob)?;
    if sol.status != LpStatus::Optimal {
        return Err(SolverError::NumericalFailure(format!(
            "upper stage dual LP status {:?}",
            sol.status
        )));
    }
    let mut u1: Vec<f64> = p_a1.iter().map(|&pv| sol.primal[pv].max(0.0)).collect();
    let total: f64 = u1.iter().sum();
    for p in u1.iter_mut() {
        *p /= total;
    }
    Ok((sol.objective, StageStrategy1(u1)))
}

/// Solves the primal for the value and the minimizer's strategy, then the
/// dual for the maximizer's strategy.
pub fn stage_game_ub(
    model: &GameModel,
    upsilon: &UpsilonSet,
    b: &ParticleBelief,
) -> Result<StageGameUb, SolverError> {
    let mut game = stage_game_ub_primal(model, upsilon, b)?;
    let (dual_value, u1) = stage_game_ub_dual(model, upsilon, b)?;
    debug_assert!(
        (game.value - dual_value).abs() <= 1e-6 * (1.0 + game.value.abs()),
        "upper stage duality gap: {} vs {}",
        game.value,
        dual_value
    );
    game.u1 = u1;
    Ok(game)
}

/// Appends `((s1, b1), y*)` to the point set.
pub fn point_update_ub(upsilon: &mut UpsilonSet, b: &ParticleBelief, y_star: f64) {
    upsilon.push(b.clone(), y_star);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn model_with_rewards(beta: f64, lo: f64, hi: f64) -> crate::model::GameModel {
        let mut file = fixtures::matching_pennies_file();
        file.beta = beta;
        for e in file.rewards.iter_mut() {
            for r in e.regions.iter_mut() {
                r.value = if e.a1 == "h" { hi } else { lo };
            }
        }
        file.into_model().unwrap()
    }

    #[test]
    fn k_ub_examples() {
        // rewards {0, 50} at beta 0.5 give U - L = 100
        let model = model_with_rewards(0.5, 0.0, 50.0);
        let (l, u) = model.value_bounds();
        assert!((u - l - 100.0).abs() < 1e-9);
        let bx = ParticleBelief::dirac(0, vec![0.2]);
        let by = ParticleBelief::dirac(0, vec![0.8]);
        assert_eq!(k_ub(&model, &bx, &bx).unwrap(), 0.0);
        assert!((k_ub(&model, &bx, &by).unwrap() - 100.0).abs() < 1e-9);
        let bmix = ParticleBelief::new(0, vec![(vec![0.2], 0.5), (vec![0.8], 0.5)]).unwrap();
        assert!((k_ub(&model, &bmix, &bx).unwrap() - 50.0).abs() < 1e-9);
        // mismatched agent states error out
        let m2 = fixtures::fully_observable_2cell();
        let b0 = ParticleBelief::dirac(0, vec![0.2]);
        let b1 = ParticleBelief::dirac(1, vec![0.8]);
        assert!(matches!(
            k_ub(&m2, &b0, &b1),
            Err(BeliefError::AgentStateMismatch)
        ));
    }

    #[test]
    fn init_upsilon_reproduces_horizon_bounds() {
        for (beta, want) in [(0.7, 333.3333333333333), (0.8, 500.0), (0.9, 1000.0), (0.99, 10000.0)]
        {
            let model = model_with_rewards(beta, 0.0, 100.0);
            for mode in [InitMode::MaxReward, InitMode::MaxAbsReward] {
                let ups = init_upsilon(&model, mode).unwrap();
                assert_eq!(ups.len(), 1);
                assert!(
                    (ups.points[0].1 - want).abs() < 1e-2,
                    "beta {beta}: {}",
                    ups.points[0].1
                );
            }
        }
        // mixed-sign rewards: the max-abs mode matches |r| / (1 - beta)
        let model = model_with_rewards(0.7, -200.0, 0.0);
        let ups = init_upsilon(&model, InitMode::MaxAbsReward).unwrap();
        assert!((ups.points[0].1 - 666.6666666666666).abs() < 1e-2);
        let ups = init_upsilon(&model, InitMode::MaxReward).unwrap();
        assert!(ups.points[0].1.abs() < 1e-9);
    }

    #[test]
    fn evaluate_ub_at_stored_point_returns_y() {
        let model = model_with_rewards(0.5, 0.0, 50.0);
        let b = ParticleBelief::dirac(0, vec![0.3]);
        let mut ups = UpsilonSet::default();
        ups.push(b.clone(), 7.5);
        let v = evaluate_ub(&model, &ups, &b).unwrap();
        assert!((v - 7.5).abs() < 1e-9);
    }

    #[test]
    fn evaluate_ub_interpolation_matches_grid_search() {
        let model = model_with_rewards(0.5, 0.0, 50.0); // U - L = 100
        let bx = ParticleBelief::dirac(0, vec![0.2]);
        let by = ParticleBelief::dirac(0, vec![0.8]);
        let mut ups = UpsilonSet::default();
        ups.push(bx.clone(), 0.0);
        ups.push(by.clone(), 10.0);
        let query =
            ParticleBelief::new(0, vec![(vec![0.2], 0.5), (vec![0.8], 0.5)]).unwrap();
        let got = evaluate_ub(&model, &ups, &query).unwrap();
        // grid search over lambda
        let mut best = f64::INFINITY;
        for step in 0..=1000 {
            let lam = step as f64 / 1000.0;
            let cost = lam * 0.0
                + (1.0 - lam) * 10.0
                + 50.0 * ((0.5 - lam).abs() + (0.5 - (1.0 - lam)).abs());
            best = best.min(cost);
        }
        assert!((got - best).abs() < 1e-6, "lp {got} vs grid {best}");
        assert!((got - 5.0).abs() < 1e-6);
        // query disjoint from the single stored point: y + (U - L)
        let mut single = UpsilonSet::default();
        single.push(bx, 3.0);
        let far = ParticleBelief::dirac(0, vec![0.6]);
        let v = evaluate_ub(&model, &single, &far).unwrap();
        assert!((v - 103.0).abs() < 1e-6);
    }

    #[test]
    fn stage_game_single_action_bellman() {
        // single joint action, constant reward c, one stored point at the
        // pushed belief with value y: stage value = c + beta * y
        let mut file = fixtures::matching_pennies_file();
        file.actions1 = vec!["a".into()];
        file.actions2 = vec!["x".into()];
        file.local_delta = vec![crate::model::LocalDeltaEntry {
            loc: "*".into(),
            per: "*".into(),
            a1: "*".into(),
            a2: "*".into(),
            next: std::collections::BTreeMap::from([("m".to_string(), 1.0)]),
        }];
        file.env_delta.truncate(1);
        file.env_delta[0].pieces = vec![crate::model::DynPieceEntry {
            loc: "*".into(),
            a1: "*".into(),
            a2: "*".into(),
            cells: file.env_delta[0].pieces[0].cells.clone(),
        }];
        file.rewards = vec![crate::model::RewardEntry {
            a1: "*".into(),
            a2: "*".into(),
            regions: vec![crate::model::RewardRegionFile {
                loc: "*".into(),
                per: "*".into(),
                halfspaces: crate::geometry::Polytope::from_box(&[[0.0, 1.0]]).halfspaces,
                value: 3.0,
            }],
        }];
        file.beta = 0.5;
        let model = file.into_model().unwrap();
        let b = ParticleBelief::dirac(0, vec![0.4]);
        let mut ups = UpsilonSet::default();
        // identity dynamics: the pushed belief equals b
        ups.push(b.clone(), 8.0);
        let game = stage_game_ub(&model, &ups, &b).unwrap();
        assert!((game.value - (3.0 + 0.5 * 8.0)).abs() < 1e-6, "{}", game.value);
        assert_eq!(game.u1.0, vec![1.0]);
    }

    #[test]
    fn stage_game_matching_pennies_zero_continuation() {
        let model = fixtures::matching_pennies();
        let b = ParticleBelief::dirac(0, vec![0.5]);
        let mut ups = UpsilonSet::default();
        ups.push(b.clone(), 0.0);
        let game = stage_game_ub(&model, &ups, &b).unwrap();
        assert!(game.value.abs() < 1e-6, "{}", game.value);
        assert!((game.u1.0[0] - 0.5).abs() < 1e-6);
        assert!((game.u2.rows[0][0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn stage_game_primal_dual_agree_on_random_fixtures() {
        for seed in 0..20 {
            let model = fixtures::random_small_file(seed).into_model().unwrap();
            let ups = init_upsilon(&model, InitMode::MaxAbsReward).unwrap();
            let s1 = model.agent_state(0, 0);
            let b = ParticleBelief::new(
                s1,
                vec![(vec![0.15], 0.5), (vec![0.42], 0.5)],
            )
            .unwrap();
            let primal = stage_game_ub_primal(&model, &ups, &b).unwrap();
            let (dual_v, u1) = stage_game_ub_dual(&model, &ups, &b).unwrap();
            assert!(
                (primal.value - dual_v).abs() <= 1e-6 * (1.0 + primal.value.abs()),
                "seed {seed}: {} vs {}",
                primal.value,
                dual_v
            );
            u1.check().unwrap();
            primal.u2.check().unwrap();
        }
    }

    #[test]
    fn point_update_never_raises_envelope() {
        let model = model_with_rewards(0.6, 0.0, 10.0);
        let b = ParticleBelief::dirac(0, vec![0.5]);
        let mut ups = init_upsilon(&model, InitMode::MaxAbsReward).unwrap();
        let before = evaluate_ub(&model, &ups, &b).unwrap();
        point_update_ub(&mut ups, &b, before * 0.5);
        let mid = evaluate_ub(&model, &ups, &b).unwrap();
        assert!(mid <= before + 1e-9);
        assert!((mid - before * 0.5).abs() < 1e-6);
        // a worse duplicate leaves the envelope unchanged
        point_update_ub(&mut ups, &b, before);
        let after = evaluate_ub(&model, &ups, &b).unwrap();
        assert!((after - mid).abs() < 1e-9);
    }
}
