//! One-sided game definition: a partially-informed agent with per-local-state
//! ReLU classifiers, a fully-informed opponent, piecewise-affine environment
//! dynamics given as weighted branches, and piecewise-constant rewards.
//!
//! The model file is a single JSON document (see `ModelFile`); wildcards
//! (`"*"` or omitted fields) expand over percepts and actions at load time.
//! The perception partition is computed once from the classifiers and cached
//! on the loaded model.

use crate::geometry::{self, Fcp, FcpRegion, GeomError, Polytope};
use crate::relu::{self, ReluError, ReluNetwork};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub type LocId = usize;
pub type PerId = usize;
pub type AgentStateId = usize;
pub type A1Id = usize;
pub type A2Id = usize;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to parse model: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown name `{0}` in model file")]
    UnknownName(String),
    #[error("model is structurally broken: {0}")]
    Structure(String),
    #[error("state is not percept compatible")]
    IncompatibleState,
    #[error("no reward region covers the queried state")]
    NoRegion,
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Relu(#[from] ReluError),
}

/// A percept-compatible global state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub s1: AgentStateId,
    pub s_e: Vec<f64>,
}

/// One affine piece of a dynamics branch.
#[derive(Debug, Clone)]
pub struct DynCell {
    pub cell: Polytope,
    pub m: DMatrix<f64>,
    pub c: Vec<f64>,
}

/// One branch of the environment transition: applied with probability
/// `weight`, piecewise-affine per (local state, joint action).
#[derive(Debug, Clone)]
pub struct Branch {
    pub weight: f64,
    /// Indexed `[loc][a1][a2]` -> affine pieces covering the environment box.
    pub pieces: Vec<Vec<Vec<Vec<DynCell>>>>,
}

/// One constant-reward region; `agent_state = None` applies to every agent
/// state.
#[derive(Debug, Clone)]
pub struct RewardRegion {
    pub agent_state: Option<AgentStateId>,
    pub cell: Polytope,
    pub value: f64,
}

/// A successor state with its transition probability.
#[derive(Debug, Clone)]
pub struct Successor {
    pub s1: AgentStateId,
    pub s_e: Vec<f64>,
    pub prob: f64,
}

#[derive(Debug, Clone)]
pub struct GameModel {
    pub name: String,
    pub locals: Vec<String>,
    pub percepts: Vec<String>,
    pub env_bounds: Vec<[f64; 2]>,
    pub actions1: Vec<String>,
    pub actions2: Vec<String>,
    pub classifiers: Vec<ReluNetwork>,
    /// `[s1][a1][a2]` -> distribution over next locals.
    pub local_delta: Vec<Vec<Vec<Vec<(LocId, f64)>>>>,
    pub branches: Vec<Branch>,
    /// `[a1][a2]` -> ordered constant-reward regions covering the state space.
    pub rewards: Vec<Vec<Vec<RewardRegion>>>,
    pub beta: f64,
    perception: Fcp,
}

impl GameModel {
    pub fn n_locals(&self) -> usize {
        self.locals.len()
    }

    pub fn n_percepts(&self) -> usize {
        self.percepts.len()
    }

    pub fn n_agent_states(&self) -> usize {
        self.locals.len() * self.percepts.len()
    }

    pub fn agent_state(&self, loc: LocId, per: PerId) -> AgentStateId {
        loc * self.percepts.len() + per
    }

    pub fn split_agent_state(&self, s1: AgentStateId) -> (LocId, PerId) {
        (s1 / self.percepts.len(), s1 % self.percepts.len())
    }

    pub fn env_dim(&self) -> usize {
        self.env_bounds.len()
    }

    pub fn env_polytope(&self) -> Polytope {
        Polytope::from_box(&self.env_bounds)
    }

    /// Percept produced by the classifier of `loc` at `s_e`.
    pub fn obs(&self, loc: LocId, s_e: &[f64]) -> PerId {
        self.classifiers[loc].argmax(s_e)
    }

    pub fn percept_compatible(&self, s1: AgentStateId, s_e: &[f64]) -> bool {
        let (loc, per) = self.split_agent_state(s1);
        self.obs(loc, s_e) == per
    }

    /// The cached perception partition of the state space: one region per
    /// constant-observation cell, carrying the agent state it induces.
    pub fn perception_fcp(&self) -> &Fcp {
        &self.perception
    }

    /// Environment cells compatible with an agent state (its slice of the
    /// perception partition).
    pub fn compatible_cells(&self, s1: AgentStateId) -> Vec<&Polytope> {
        self.perception
            .regions
            .iter()
            .filter(|r| r.agent_state == s1)
            .map(|r| &r.cell)
            .collect()
    }

    /// First dynamics piece containing `s_e` for (loc, a1, a2) in the given
    /// branch; boundary ties go to the earlier piece.
    pub fn dynamics_piece(
        &self,
        branch: usize,
        loc: LocId,
        a1: A1Id,
        a2: A2Id,
        s_e: &[f64],
    ) -> Option<&DynCell> {
        self.branches[branch].pieces[loc][a1][a2]
            .iter()
            .find(|d| d.cell.contains(s_e, geometry::GEOM_TOL))
    }

    /// Finitely-branching successor distribution of a percept-compatible
    /// state under a joint action. Equal successors are merged.
    pub fn successors(
        &self,
        s: &HybridState,
        a1: A1Id,
        a2: A2Id,
    ) -> Result<Vec<Successor>, ModelError> {
        if !self.percept_compatible(s.s1, &s.s_e) {
            return Err(ModelError::IncompatibleState);
        }
        let (loc, _) = self.split_agent_state(s.s1);
        let mut out: Vec<Successor> = Vec::new();
        for (bi, branch) in self.branches.iter().enumerate() {
            if branch.weight <= 0.0 {
                continue;
            }
            let piece = self
                .dynamics_piece(bi, loc, a1, a2, &s.s_e)
                .ok_or(ModelError::NoRegion)?;
            let img = &piece.m * nalgebra::DVector::from_column_slice(&s.s_e)
                + nalgebra::DVector::from_column_slice(&piece.c);
            let s_e2 = img.as_slice().to_vec();
            for &(loc2, p_loc) in &self.local_delta[s.s1][a1][a2] {
                if p_loc <= 0.0 {
                    continue;
                }
                let per2 = self.obs(loc2, &s_e2);
                let s1_2 = self.agent_state(loc2, per2);
                let prob = branch.weight * p_loc;
                if let Some(e) = out
                    .iter_mut()
                    .find(|e| e.s1 == s1_2 && geometry::linf(&e.s_e, &s_e2) <= 1e-9)
                {
                    e.prob += prob;
                } else {
                    out.push(Successor {
                        s1: s1_2,
                        s_e: s_e2.clone(),
                        prob,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Constant-region reward lookup.
    pub fn reward(&self, s: &HybridState, a1: A1Id, a2: A2Id) -> Result<f64, ModelError> {
        self.rewards[a1][a2]
            .iter()
            .find(|r| {
                r.agent_state.map(|g| g == s.s1).unwrap_or(true)
                    && r.cell.contains(&s.s_e, geometry::GEOM_TOL)
            })
            .map(|r| r.value)
            .ok_or(ModelError::NoRegion)
    }

    /// Reward cells applying to one agent state under a joint action, in
    /// file order (which is the region precedence order).
    pub fn reward_cells(&self, a1: A1Id, a2: A2Id, s1: AgentStateId) -> Vec<(&Polytope, f64)> {
        self.rewards[a1][a2]
            .iter()
            .filter(|r| r.agent_state.map(|g| g == s1).unwrap_or(true))
            .map(|r| (&r.cell, r.value))
            .collect()
    }

    /// `(L, U)` with `L = min r / (1 - beta)` and `U = max r / (1 - beta)`
    /// over all reward-region constants and actions.
    pub fn value_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for per_a1 in &self.rewards {
            for regions in per_a1 {
                for r in regions {
                    lo = lo.min(r.value);
                    hi = hi.max(r.value);
                }
            }
        }
        if !lo.is_finite() {
            return (0.0, 0.0);
        }
        (lo / (1.0 - self.beta), hi / (1.0 - self.beta))
    }

    /// Largest reward magnitude scaled by the horizon, the alternative
    /// upper-bound initialisation.
    pub fn max_abs_bound(&self) -> f64 {
        let (lo, hi) = self.value_bounds();
        lo.abs().max(hi.abs())
    }

    /// Checks every model invariant and returns the list of violations
    /// (empty = valid). Sampled checks use a fixed seed.
    pub fn validate(&self) -> Result<Vec<String>, ModelError> {
        let mut v = Vec::new();
        if !(self.beta > 0.0 && self.beta < 1.0) {
            v.push(format!("discount beta {} outside (0,1)", self.beta));
        }
        for (i, b) in self.env_bounds.iter().enumerate() {
            if b[0] >= b[1] {
                v.push(format!("env box dimension {i} empty: [{}, {}]", b[0], b[1]));
            }
        }
        let wsum: f64 = self.branches.iter().map(|b| b.weight).sum();
        if (wsum - 1.0).abs() > 1e-9 {
            v.push(format!("branch weights sum to {wsum}, expected 1"));
        }
        for (s1, per_a1) in self.local_delta.iter().enumerate() {
            for (a1, per_a2) in per_a1.iter().enumerate() {
                for (a2, dist) in per_a2.iter().enumerate() {
                    if dist.is_empty() {
                        v.push(format!(
                            "local dynamics missing for (s1={s1}, a1={a1}, a2={a2})"
                        ));
                        continue;
                    }
                    let p: f64 = dist.iter().map(|(_, p)| p).sum();
                    if (p - 1.0).abs() > 1e-9 {
                        v.push(format!(
                            "local dynamics row (s1={s1}, a1={a1}, a2={a2}) sums to {p}"
                        ));
                    }
                }
            }
        }
        // dynamics pieces must cover the box (by volume) per (loc, a, branch)
        let env = self.env_polytope();
        let env_vol = env.volume()?;
        for (bi, branch) in self.branches.iter().enumerate() {
            for loc in 0..self.n_locals() {
                for a1 in 0..self.actions1.len() {
                    for a2 in 0..self.actions2.len() {
                        let cells = &branch.pieces[loc][a1][a2];
                        let mut vol = 0.0;
                        for d in cells {
                            vol += d.cell.intersect(&env)?.map_or(Ok(0.0), |p| p.volume())?;
                        }
                        if ((vol - env_vol) / env_vol).abs() > 1e-6 {
                            v.push(format!(
                                "coverage: dynamics branch {bi} (loc={loc}, a1={a1}, a2={a2}) \
                                 covers volume {vol:.9} of {env_vol:.9}"
                            ));
                        }
                    }
                }
            }
        }
        // sampled checks: images stay in the box, rewards cover sampled states
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        for _ in 0..1000 {
            let x: Vec<f64> = self
                .env_bounds
                .iter()
                .map(|b| rng.random_range(b[0]..b[1]))
                .collect();
            let loc = rng.random_range(0..self.n_locals());
            let a1 = rng.random_range(0..self.actions1.len());
            let a2 = rng.random_range(0..self.actions2.len());
            for (bi, _) in self.branches.iter().enumerate() {
                if let Some(piece) = self.dynamics_piece(bi, loc, a1, a2, &x) {
                    let img = &piece.m * nalgebra::DVector::from_column_slice(&x)
                        + nalgebra::DVector::from_column_slice(&piece.c);
                    if !env.contains(img.as_slice(), 1e-7) {
                        v.push(format!(
                            "closed dynamics: branch {bi} (loc={loc}, a1={a1}, a2={a2}) maps \
                             {x:?} outside the environment box"
                        ));
                    }
                }
            }
            let per = self.obs(loc, &x);
            let s = HybridState {
                s1: self.agent_state(loc, per),
                s_e: x,
            };
            if self.reward(&s, a1, a2).is_err() {
                v.push(format!(
                    "reward coverage: no region for s1={} at {:?} under (a1={a1}, a2={a2})",
                    s.s1, s.s_e
                ));
            }
        }
        v.dedup();
        Ok(v)
    }

    /// Uniform sample of the environment box.
    pub fn sample_env<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.env_bounds
            .iter()
            .map(|b| rng.random_range(b[0]..b[1]))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// JSON model file
// ---------------------------------------------------------------------------

fn default_star() -> String {
    "*".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalDeltaEntry {
    #[serde(default = "default_star")]
    pub loc: String,
    #[serde(default = "default_star")]
    pub per: String,
    #[serde(default = "default_star")]
    pub a1: String,
    #[serde(default = "default_star")]
    pub a2: String,
    pub next: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynCellFile {
    pub halfspaces: Vec<crate::geometry::Halfspace>,
    pub m: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynPieceEntry {
    #[serde(default = "default_star")]
    pub loc: String,
    #[serde(default = "default_star")]
    pub a1: String,
    #[serde(default = "default_star")]
    pub a2: String,
    pub cells: Vec<DynCellFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchFile {
    pub weight: f64,
    pub pieces: Vec<DynPieceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardRegionFile {
    #[serde(default = "default_star")]
    pub loc: String,
    #[serde(default = "default_star")]
    pub per: String,
    pub halfspaces: Vec<crate::geometry::Halfspace>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardEntry {
    #[serde(default = "default_star")]
    pub a1: String,
    #[serde(default = "default_star")]
    pub a2: String,
    pub regions: Vec<RewardRegionFile>,
}

/// On-disk model schema; see the bundled fixtures for examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default)]
    pub name: String,
    pub locals: Vec<String>,
    pub percepts: Vec<String>,
    pub env_box: Vec<[f64; 2]>,
    pub actions1: Vec<String>,
    pub actions2: Vec<String>,
    pub classifiers: BTreeMap<String, ReluNetwork>,
    pub local_delta: Vec<LocalDeltaEntry>,
    pub env_delta: Vec<BranchFile>,
    pub rewards: Vec<RewardEntry>,
    pub beta: f64,
    #[serde(default)]
    pub piece_budget: Option<usize>,
}

struct Names<'a> {
    items: &'a [String],
    what: &'a str,
}

impl<'a> Names<'a> {
    fn resolve(&self, name: &str) -> Result<Vec<usize>, ModelError> {
        if name == "*" {
            return Ok((0..self.items.len()).collect());
        }
        self.items
            .iter()
            .position(|n| n == name)
            .map(|i| vec![i])
            .ok_or_else(|| ModelError::UnknownName(format!("{} `{name}`", self.what)))
    }
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Resolves names, expands wildcards and computes the perception
    /// partition.
    pub fn into_model(self) -> Result<GameModel, ModelError> {
        let e = self.env_box.len();
        let n_loc = self.locals.len();
        let n_per = self.percepts.len();
        let n_a1 = self.actions1.len();
        let n_a2 = self.actions2.len();
        if n_loc == 0 || n_per == 0 || n_a1 == 0 || n_a2 == 0 || e == 0 {
            return Err(ModelError::Structure(
                "locals, percepts, actions and env_box must be non-empty".into(),
            ));
        }
        let locs = Names {
            items: &self.locals,
            what: "local state",
        };
        let pers = Names {
            items: &self.percepts,
            what: "percept",
        };
        let a1s = Names {
            items: &self.actions1,
            what: "action1",
        };
        let a2s = Names {
            items: &self.actions2,
            what: "action2",
        };

        let mut classifiers = Vec::with_capacity(n_loc);
        for lname in &self.locals {
            let net = self
                .classifiers
                .get(lname)
                .ok_or_else(|| ModelError::Structure(format!("no classifier for `{lname}`")))?;
            net.validate()?;
            if net.input_dim() != e {
                return Err(ModelError::Structure(format!(
                    "classifier `{lname}` input dim {} != env dim {e}",
                    net.input_dim()
                )));
            }
            if net.output_dim() != n_per {
                return Err(ModelError::Structure(format!(
                    "classifier `{lname}` outputs {} logits for {n_per} percepts",
                    net.output_dim()
                )));
            }
            classifiers.push(net.clone());
        }

        // local dynamics, first matching entry wins
        let mut local_delta = vec![vec![vec![Vec::new(); n_a2]; n_a1]; n_loc * n_per];
        for entry in &self.local_delta {
            let mut dist: Vec<(LocId, f64)> = Vec::new();
            for (k, p) in &entry.next {
                let id = locs.resolve(k)?;
                dist.push((id[0], *p));
            }
            for loc in locs.resolve(&entry.loc)? {
                for per in pers.resolve(&entry.per)? {
                    let s1 = loc * n_per + per;
                    for a1 in a1s.resolve(&entry.a1)? {
                        for a2 in a2s.resolve(&entry.a2)? {
                            if local_delta[s1][a1][a2].is_empty() {
                                local_delta[s1][a1][a2] = dist.clone();
                            }
                        }
                    }
                }
            }
        }

        let mut branches = Vec::new();
        for bf in &self.env_delta {
            let mut pieces = vec![vec![vec![Vec::new(); n_a2]; n_a1]; n_loc];
            for pe in &bf.pieces {
                let mut cells = Vec::new();
                for cf in &pe.cells {
                    if cf.m.len() != e || cf.m.iter().any(|r| r.len() != e) || cf.c.len() != e {
                        return Err(ModelError::Structure(format!(
                            "dynamics cell map must be {e}x{e} plus offset {e}"
                        )));
                    }
                    let m = DMatrix::from_fn(e, e, |i, j| cf.m[i][j]);
                    cells.push(DynCell {
                        cell: Polytope::new(e, cf.halfspaces.clone()),
                        m,
                        c: cf.c.clone(),
                    });
                }
                for loc in locs.resolve(&pe.loc)? {
                    for a1 in a1s.resolve(&pe.a1)? {
                        for a2 in a2s.resolve(&pe.a2)? {
                            let slot: &mut Vec<DynCell> = &mut pieces[loc][a1][a2];
                            if slot.is_empty() {
                                *slot = cells.clone();
                            }
                        }
                    }
                }
            }
            branches.push(Branch {
                weight: bf.weight,
                pieces,
            });
        }

        let mut rewards = vec![vec![Vec::new(); n_a2]; n_a1];
        for re in &self.rewards {
            let mut regions = Vec::new();
            for rf in &re.regions {
                let cell = Polytope::new(e, rf.halfspaces.clone());
                if rf.loc == "*" && rf.per == "*" {
                    regions.push(RewardRegion {
                        agent_state: None,
                        cell,
                        value: rf.value,
                    });
                } else {
                    for loc in locs.resolve(&rf.loc)? {
                        for per in pers.resolve(&rf.per)? {
                            regions.push(RewardRegion {
                                agent_state: Some(loc * n_per + per),
                                cell: cell.clone(),
                                value: rf.value,
                            });
                        }
                    }
                }
            }
            for a1 in a1s.resolve(&re.a1)? {
                for a2 in a2s.resolve(&re.a2)? {
                    let slot: &mut Vec<RewardRegion> = &mut rewards[a1][a2];
                    if slot.is_empty() {
                        *slot = regions.clone();
                    }
                }
            }
        }

        // perception partition from the classifiers
        let domain = Polytope::from_box(&self.env_box);
        let budget = self.piece_budget.unwrap_or(relu::DEFAULT_PIECE_BUDGET);
        let mut regions = Vec::new();
        for (loc, net) in classifiers.iter().enumerate() {
            for (cell, per) in relu::decision_regions(net, &domain, budget)? {
                regions.push(FcpRegion {
                    agent_state: loc * n_per + per,
                    cell,
                });
            }
        }
        let perception = Fcp::new(regions);

        Ok(GameModel {
            name: self.name,
            locals: self.locals,
            percepts: self.percepts,
            env_bounds: self.env_box,
            actions1: self.actions1,
            actions2: self.actions2,
            classifiers,
            local_delta,
            branches,
            rewards,
            beta: self.beta,
            perception,
        })
    }
}

pub fn load_model(path: &std::path::Path) -> Result<GameModel, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Structure(format!("cannot read {}: {e}", path.display())))?;
    ModelFile::from_json(&text)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn toy_model_validates_clean() {
        let model = fixtures::matching_pennies();
        assert_eq!(model.validate().unwrap(), Vec::<String>::new());
    }

    #[test]
    fn branch_weight_violation_reported() {
        let mut file = fixtures::matching_pennies_file();
        file.env_delta[0].weight = 0.9;
        let model = file.into_model().unwrap();
        let report = model.validate().unwrap();
        assert!(report.iter().any(|v| v.contains("branch weights")));
    }

    #[test]
    fn missing_dynamics_cell_reported() {
        let mut file = fixtures::matching_pennies_file();
        // shrink the only dynamics cell to half the box
        file.env_delta[0].pieces[0].cells[0].halfspaces =
            Polytope::from_box(&[[0.0, 0.5]]).halfspaces;
        let model = file.into_model().unwrap();
        let report = model.validate().unwrap();
        assert!(report.iter().any(|v| v.contains("coverage")));
    }

    #[test]
    fn successors_identity_dynamics() {
        let model = fixtures::matching_pennies();
        let s = HybridState {
            s1: 0,
            s_e: vec![0.4],
        };
        let succ = model.successors(&s, 0, 0).unwrap();
        assert_eq!(succ.len(), 1);
        assert!((succ[0].prob - 1.0).abs() < 1e-12);
        assert_eq!(succ[0].s_e, vec![0.4]);
        assert_eq!(succ[0].s1, 0);
    }

    #[test]
    fn successors_split_local() {
        let model = fixtures::two_loc_split();
        let s = HybridState {
            s1: 0,
            s_e: vec![0.25],
        };
        let succ = model.successors(&s, 0, 0).unwrap();
        assert_eq!(succ.len(), 2);
        for e in &succ {
            assert!((e.prob - 0.5).abs() < 1e-12);
        }
        // distribution sums to one
        let total: f64 = succ.iter().map(|e| e.prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn successors_merge_equal_targets() {
        let model = fixtures::two_branch_same_target();
        let s = HybridState {
            s1: 0,
            s_e: vec![0.3],
        };
        let succ = model.successors(&s, 0, 0).unwrap();
        assert_eq!(succ.len(), 1, "{succ:?}");
        assert!((succ[0].prob - 1.0).abs() < 1e-12);
    }

    #[test]
    fn successors_are_percept_compatible() {
        let model = fixtures::fully_observable_2cell();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = model.sample_env(&mut rng);
            let per = model.obs(0, &x);
            let s = HybridState {
                s1: model.agent_state(0, per),
                s_e: x,
            };
            for a1 in 0..model.actions1.len() {
                for a2 in 0..model.actions2.len() {
                    let succ = model.successors(&s, a1, a2).unwrap();
                    let total: f64 = succ.iter().map(|e| e.prob).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                    for e in &succ {
                        assert!(model.percept_compatible(e.s1, &e.s_e));
                    }
                }
            }
        }
    }

    #[test]
    fn reward_constant_within_region() {
        let model = fixtures::fully_observable_2cell();
        let s_a = HybridState {
            s1: model.agent_state(0, 0),
            s_e: vec![0.1],
        };
        let s_b = HybridState {
            s1: model.agent_state(0, 0),
            s_e: vec![0.35],
        };
        for a1 in 0..2 {
            for a2 in 0..2 {
                assert_eq!(
                    model.reward(&s_a, a1, a2).unwrap(),
                    model.reward(&s_b, a1, a2).unwrap()
                );
            }
        }
    }

    #[test]
    fn value_bounds_formula() {
        let mut file = fixtures::matching_pennies_file();
        file.beta = 0.7;
        for re in file.rewards.iter_mut() {
            for r in re.regions.iter_mut() {
                r.value = if re.a1 == "h" { 100.0 } else { 0.0 };
            }
        }
        let model = file.into_model().unwrap();
        let (l, u) = model.value_bounds();
        assert!((l - 0.0).abs() < 1e-9);
        assert!((u - 100.0 / 0.3).abs() < 1e-6);
        // pedestrian-style rewards
        let mut file = fixtures::matching_pennies_file();
        file.beta = 0.7;
        for re in file.rewards.iter_mut() {
            for r in re.regions.iter_mut() {
                r.value = if re.a1 == "h" { -200.0 } else { 0.0 };
            }
        }
        let model = file.into_model().unwrap();
        let (l, u) = model.value_bounds();
        assert!((l + 200.0 / 0.3).abs() < 1e-6);
        assert!((u - 0.0).abs() < 1e-9);
        assert!((model.max_abs_bound() - 200.0 / 0.3).abs() < 1e-6);
    }

    #[test]
    fn model_file_roundtrip() {
        let file = fixtures::matching_pennies_file();
        let js = serde_json::to_string_pretty(&file).unwrap();
        let back = ModelFile::from_json(&js).unwrap();
        let m1 = file.into_model().unwrap();
        let m2 = back.into_model().unwrap();
        assert_eq!(m1.perception_fcp().len(), m2.perception_fcp().len());
        assert_eq!(m1.value_bounds(), m2.value_bounds());
        let s = HybridState {
            s1: 0,
            s_e: vec![0.5],
        };
        assert_eq!(m1.reward(&s, 0, 1).unwrap(), m2.reward(&s, 0, 1).unwrap());
    }
}
