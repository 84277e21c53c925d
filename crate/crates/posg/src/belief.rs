//! Particle-based beliefs of the partially informed agent and the
//! probability/expectation closed forms over them.
//!
//! A belief pairs an agent state with a weighted Dirac particle set over the
//! environment. Updates push every particle through every opponent action
//! weighted by the assumed stage strategy, keep the successors compatible
//! with the observed agent state, renormalize and merge near-duplicates.

use crate::geometry;
use crate::model::{A1Id, AgentStateId, GameModel, HybridState, ModelError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// L-infinity distance under which two particles are considered the same.
pub const MERGE_TOL: f64 = 1e-9;

/// Default cap on particle-set growth; `None` (exact mode) disables it.
pub const DEFAULT_PARTICLE_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("observation has probability zero under the assumed strategy")]
    ZeroProbabilityObservation,
    #[error("no region covers a particle")]
    NoRegion,
    #[error("beliefs have different agent states")]
    AgentStateMismatch,
    #[error("invalid distribution: {0}")]
    BadDistribution(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Weighted Dirac particle set over the environment, tied to an agent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleBelief {
    pub s1: AgentStateId,
    /// `(position, weight)` with positive weights summing to one.
    pub particles: Vec<(Vec<f64>, f64)>,
}

impl ParticleBelief {
    /// Builds a belief: merges particles within the merge tolerance and
    /// normalizes weights.
    pub fn new(
        s1: AgentStateId,
        particles: Vec<(Vec<f64>, f64)>,
    ) -> Result<ParticleBelief, BeliefError> {
        if particles.is_empty() {
            return Err(BeliefError::BadDistribution("no particles".into()));
        }
        let mut merged: Vec<(Vec<f64>, f64)> = Vec::with_capacity(particles.len());
        for (x, w) in particles {
            if !(w > 0.0) {
                return Err(BeliefError::BadDistribution(format!(
                    "particle weight {w} must be positive"
                )));
            }
            if let Some(e) = merged
                .iter_mut()
                .find(|(y, _)| geometry::linf(y, &x) <= MERGE_TOL)
            {
                e.1 += w;
            } else {
                merged.push((x, w));
            }
        }
        let total: f64 = merged.iter().map(|(_, w)| w).sum();
        for (_, w) in merged.iter_mut() {
            *w /= total;
        }
        Ok(ParticleBelief {
            s1,
            particles: merged,
        })
    }

    pub fn dirac(s1: AgentStateId, x: Vec<f64>) -> ParticleBelief {
        ParticleBelief {
            s1,
            particles: vec![(x, 1.0)],
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Verifies the belief invariants against a model: weights normalized
    /// and every particle percept compatible with `s1`.
    pub fn check(&self, model: &GameModel) -> Result<(), BeliefError> {
        let total: f64 = self.particles.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(BeliefError::BadDistribution(format!(
                "weights sum to {total}"
            )));
        }
        for (x, _) in &self.particles {
            if !model.percept_compatible(self.s1, x) {
                return Err(BeliefError::BadDistribution(format!(
                    "particle {x:?} is not percept compatible with agent state {}",
                    self.s1
                )));
            }
        }
        Ok(())
    }
}

/// Stage strategy of the maximizer: one distribution over its actions.
#[derive(Debug, Clone, PartialEq)]
pub struct StageStrategy1(pub Vec<f64>);

impl StageStrategy1 {
    pub fn uniform(n: usize) -> Self {
        StageStrategy1(vec![1.0 / n as f64; n])
    }

    pub fn check(&self) -> Result<(), BeliefError> {
        check_row(&self.0)
    }
}

/// Stage strategy of the fully informed minimizer, restricted to the support
/// of a belief: one distribution over its actions per particle index.
#[derive(Debug, Clone, PartialEq)]
pub struct StageStrategy2 {
    pub rows: Vec<Vec<f64>>,
}

impl StageStrategy2 {
    pub fn uniform(n_particles: usize, n_a2: usize) -> Self {
        StageStrategy2 {
            rows: vec![vec![1.0 / n_a2 as f64; n_a2]; n_particles],
        }
    }

    pub fn check(&self) -> Result<(), BeliefError> {
        for row in &self.rows {
            check_row(row)?;
        }
        Ok(())
    }
}

fn check_row(row: &[f64]) -> Result<(), BeliefError> {
    if row.iter().any(|p| *p < -1e-12) {
        return Err(BeliefError::BadDistribution("negative probability".into()));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(BeliefError::BadDistribution(format!(
            "row sums to {total}"
        )));
    }
    Ok(())
}

/// Piecewise-constant function over the hybrid state space.
pub trait PwcFunction {
    /// Value at a state, or `None` where no region applies.
    fn value_at(&self, s1: AgentStateId, s_e: &[f64]) -> Option<f64>;
}

/// `<f, (s1, b1)> = sum_i kappa_i f(s1, s_E^i)`.
pub fn expect(f: &dyn PwcFunction, b: &ParticleBelief) -> Result<f64, BeliefError> {
    let mut acc = 0.0;
    for (x, w) in &b.particles {
        let v = f.value_at(b.s1, x).ok_or(BeliefError::NoRegion)?;
        acc += w * v;
    }
    Ok(acc)
}

/// Unnormalized pushforward of `b` under (a1, u2) onto agent state `s1_next`:
/// the particle list with total mass `P(s1_next | (s1,b), a1, u2)`.
fn push_forward(
    model: &GameModel,
    b: &ParticleBelief,
    a1: A1Id,
    u2: &StageStrategy2,
    s1_next: AgentStateId,
) -> Result<Vec<(Vec<f64>, f64)>, BeliefError> {
    let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, (x, kappa)) in b.particles.iter().enumerate() {
        let state = HybridState {
            s1: b.s1,
            s_e: x.clone(),
        };
        for (a2, &p_a2) in u2.rows[i].iter().enumerate() {
            if p_a2 <= 0.0 {
                continue;
            }
            for succ in model.successors(&state, a1, a2)? {
                if succ.s1 != s1_next {
                    continue;
                }
                let w = kappa * p_a2 * succ.prob;
                if w <= 0.0 {
                    continue;
                }
                if let Some(e) = out
                    .iter_mut()
                    .find(|(y, _)| geometry::linf(y, &succ.s_e) <= MERGE_TOL)
                {
                    e.1 += w;
                } else {
                    out.push((succ.s_e.clone(), w));
                }
            }
        }
    }
    Ok(out)
}

/// Bayesian belief update after playing `a1`, assuming stage strategy `u2`
/// for the opponent, and observing agent state `s1_next`. `cap` truncates
/// the support by dropping the lightest particles (None = exact).
pub fn update(
    model: &GameModel,
    b: &ParticleBelief,
    a1: A1Id,
    u2: &StageStrategy2,
    s1_next: AgentStateId,
    cap: Option<usize>,
) -> Result<ParticleBelief, BeliefError> {
    let mut pushed = push_forward(model, b, a1, u2, s1_next)?;
    let total: f64 = pushed.iter().map(|(_, w)| w).sum();
    if total <= 1e-300 {
        return Err(BeliefError::ZeroProbabilityObservation);
    }
    for (_, w) in pushed.iter_mut() {
        *w /= total;
    }
    if let Some(cap) = cap {
        if pushed.len() > cap {
            eprintln!(
                "warning: belief support {} exceeds cap {cap}; dropping lightest particles",
                pushed.len()
            );
            // stable selection: sort indices by weight descending, keep the
            // heaviest, preserve original order among the kept
            let mut order: Vec<usize> = (0..pushed.len()).collect();
            order.sort_by(|&i, &j| {
                pushed[j].1
                    .partial_cmp(&pushed[i].1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(i.cmp(&j))
            });
            let keep: std::collections::BTreeSet<usize> =
                order.into_iter().take(cap).collect();
            pushed = pushed
                .into_iter()
                .enumerate()
                .filter_map(|(i, p)| keep.contains(&i).then_some(p))
                .collect();
            let total: f64 = pushed.iter().map(|(_, w)| w).sum();
            for (_, w) in pushed.iter_mut() {
                *w /= total;
            }
        }
    }
    Ok(ParticleBelief {
        s1: s1_next,
        particles: pushed,
    })
}

/// `P(a1, s1_next | (s1, b1), u1, u2)`.
pub fn joint_prob(
    model: &GameModel,
    b: &ParticleBelief,
    u1: &StageStrategy1,
    u2: &StageStrategy2,
    a1: A1Id,
    s1_next: AgentStateId,
) -> Result<f64, BeliefError> {
    let pushed = push_forward(model, b, a1, u2, s1_next)?;
    let mass: f64 = pushed.iter().map(|(_, w)| w).sum();
    Ok(u1.0[a1] * mass)
}
