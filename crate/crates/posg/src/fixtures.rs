//! Bundled example models and builders used by tests, the acceptance suite
//! and the `fixtures` CLI subcommand.

use crate::geometry::Polytope;
use crate::model::{
    BranchFile, DynCellFile, DynPieceEntry, GameModel, LocalDeltaEntry, ModelFile, RewardEntry,
    RewardRegionFile,
};
use crate::relu::{Layer, ReluNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn box_hs(bounds: &[[f64; 2]]) -> Vec<crate::geometry::Halfspace> {
    Polytope::from_box(bounds).halfspaces
}

fn identity_m(e: usize) -> Vec<Vec<f64>> {
    (0..e)
        .map(|i| (0..e).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn const_map(e: usize, target: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (vec![vec![0.0; e]; e], target.to_vec())
}

/// Classifier with a single constant winner (one percept).
fn constant_classifier(e: usize) -> ReluNetwork {
    ReluNetwork {
        layers: vec![Layer {
            w: vec![vec![0.0; e]],
            b: vec![0.0],
        }],
    }
}

/// Two percepts split at `x_0 = t`: logits `(t - x_0, x_0 - t)`.
fn split_classifier(e: usize, t: f64) -> ReluNetwork {
    let mut w_lo = vec![0.0; e];
    w_lo[0] = -1.0;
    let mut w_hi = vec![0.0; e];
    w_hi[0] = 1.0;
    ReluNetwork {
        layers: vec![Layer {
            w: vec![w_lo, w_hi],
            b: vec![t, -t],
        }],
    }
}

/// Matching pennies over a continuous dummy environment: one local state,
/// one percept, identity dynamics, payoff +1 on matching actions.
pub fn matching_pennies_file() -> ModelFile {
    let e = 1;
    let bounds = [[0.0, 1.0]];
    let mut classifiers = BTreeMap::new();
    classifiers.insert("m".to_string(), constant_classifier(e));
    let mut rewards = Vec::new();
    for a1 in ["h", "t"] {
        for a2 in ["h", "t"] {
            rewards.push(RewardEntry {
                a1: a1.into(),
                a2: a2.into(),
                regions: vec![RewardRegionFile {
                    loc: "*".into(),
                    per: "*".into(),
                    halfspaces: box_hs(&bounds),
                    value: if a1 == a2 { 1.0 } else { -1.0 },
                }],
            });
        }
    }
    ModelFile {
        name: "matching-pennies".into(),
        locals: vec!["m".into()],
        percepts: vec!["p".into()],
        env_box: bounds.to_vec(),
        actions1: vec!["h".into(), "t".into()],
        actions2: vec!["h".into(), "t".into()],
        classifiers,
        local_delta: vec![LocalDeltaEntry {
            loc: "*".into(),
            per: "*".into(),
            a1: "*".into(),
            a2: "*".into(),
            next: BTreeMap::from([("m".to_string(), 1.0)]),
        }],
        env_delta: vec![BranchFile {
            weight: 1.0,
            pieces: vec![DynPieceEntry {
                loc: "*".into(),
                a1: "*".into(),
                a2: "*".into(),
                cells: vec![DynCellFile {
                    halfspaces: box_hs(&bounds),
                    m: identity_m(e),
                    c: vec![0.0],
                }],
            }],
        }],
        rewards,
        beta: 0.5,
        piece_budget: None,
    }
}

pub fn matching_pennies() -> GameModel {
    matching_pennies_file().into_model().unwrap()
}

/// Same rewards everywhere: the zero-reward sanity model.
pub fn zero_reward_file() -> ModelFile {
    let mut f = matching_pennies_file();
    f.name = "zero-reward".into();
    for e in f.rewards.iter_mut() {
        for r in e.regions.iter_mut() {
            r.value = 0.0;
        }
    }
    f
}

/// Two local states reached with probability 1/2 each; single percept.
pub fn two_loc_split() -> GameModel {
    let e = 1;
    let bounds = [[0.0, 1.0]];
    let mut classifiers = BTreeMap::new();
    classifiers.insert("l0".to_string(), constant_classifier(e));
    classifiers.insert("l1".to_string(), constant_classifier(e));
    ModelFile {
        name: "two-loc-split".into(),
        locals: vec!["l0".into(), "l1".into()],
        percepts: vec!["p".into()],
        env_box: bounds.to_vec(),
        actions1: vec!["a".into()],
        actions2: vec!["x".into()],
        classifiers,
        local_delta: vec![LocalDeltaEntry {
            loc: "*".into(),
            per: "*".into(),
            a1: "*".into(),
            a2: "*".into(),
            next: BTreeMap::from([("l0".to_string(), 0.5), ("l1".to_string(), 0.5)]),
        }],
        env_delta: vec![BranchFile {
            weight: 1.0,
            pieces: vec![DynPieceEntry {
                loc: "*".into(),
                a1: "*".into(),
                a2: "*".into(),
                cells: vec![DynCellFile {
                    halfspaces: box_hs(&bounds),
                    m: identity_m(e),
                    c: vec![0.0],
                }],
            }],
        }],
        rewards: vec![RewardEntry {
            a1: "*".into(),
            a2: "*".into(),
            regions: vec![RewardRegionFile {
                loc: "*".into(),
                per: "*".into(),
                halfspaces: box_hs(&bounds),
                value: 0.0,
            }],
        }],
        beta: 0.5,
        piece_budget: None,
    }
    .into_model()
    .unwrap()
}

/// Two branches (0.3 / 0.7) with identical identity dynamics: successors
/// must merge back to probability one.
pub fn two_branch_same_target() -> GameModel {
    let mut f = matching_pennies_file();
    f.name = "two-branch-merge".into();
    let piece = f.env_delta[0].pieces.clone();
    f.env_delta = vec![
        BranchFile {
            weight: 0.3,
            pieces: piece.clone(),
        },
        BranchFile {
            weight: 0.7,
            pieces: piece,
        },
    ];
    f.into_model().unwrap()
}

/// Payoff matrices of the fully observable two-cell fixture, `[cell][a1][a2]`.
pub const TWO_CELL_PAYOFF: [[[f64; 2]; 2]; 2] = [
    [[3.0, -1.0], [0.0, 2.0]],
    [[-2.0, 4.0], [1.0, 0.0]],
];

/// Deterministic cell targets of the two-cell fixture, `[cell][a1][a2]`.
pub const TWO_CELL_NEXT: [[[usize; 2]; 2]; 2] = [[[0, 1], [1, 0]], [[1, 0], [0, 1]]];

/// A fully observable fixture: perception reveals which of the two cells the
/// state is in, all dynamics jump to cell centres, so beliefs stay Dirac and
/// the model induces a finite two-state zero-sum stochastic game.
pub fn fully_observable_2cell_file() -> ModelFile {
    let e = 1;
    let bounds = [[0.0, 1.0]];
    let cells = [box_hs(&[[0.0, 0.5]]), box_hs(&[[0.5, 1.0]])];
    let centers = [0.25, 0.75];
    let mut classifiers = BTreeMap::new();
    classifiers.insert("m".to_string(), split_classifier(e, 0.5));
    let names = ["a", "b"];
    let mut env_pieces = Vec::new();
    let mut rewards = Vec::new();
    for (i1, a1) in names.iter().enumerate() {
        for (i2, a2) in names.iter().enumerate() {
            let mut dyn_cells = Vec::new();
            let mut regions = Vec::new();
            for cell in 0..2 {
                let target = centers[TWO_CELL_NEXT[cell][i1][i2]];
                let (m, c) = const_map(e, &[target]);
                dyn_cells.push(DynCellFile {
                    halfspaces: cells[cell].clone(),
                    m,
                    c,
                });
                regions.push(RewardRegionFile {
                    loc: "*".into(),
                    per: "*".into(),
                    halfspaces: cells[cell].clone(),
                    value: TWO_CELL_PAYOFF[cell][i1][i2],
                });
            }
            env_pieces.push(DynPieceEntry {
                loc: "*".into(),
                a1: (*a1).into(),
                a2: (*a2).into(),
                cells: dyn_cells,
            });
            rewards.push(RewardEntry {
                a1: (*a1).into(),
                a2: (*a2).into(),
                regions,
            });
        }
    }
    ModelFile {
        name: "fully-observable-2cell".into(),
        locals: vec!["m".into()],
        percepts: vec!["left".into(), "right".into()],
        env_box: bounds.to_vec(),
        actions1: names.iter().map(|s| s.to_string()).collect(),
        actions2: names.iter().map(|s| s.to_string()).collect(),
        classifiers,
        local_delta: vec![LocalDeltaEntry {
            loc: "*".into(),
            per: "*".into(),
            a1: "*".into(),
            a2: "*".into(),
            next: BTreeMap::from([("m".to_string(), 1.0)]),
        }],
        env_delta: vec![BranchFile {
            weight: 1.0,
            pieces: env_pieces,
        }],
        rewards,
        beta: 0.8,
        piece_budget: None,
    }
}

pub fn fully_observable_2cell() -> GameModel {
    fully_observable_2cell_file().into_model().unwrap()
}

/// Every action from everywhere jumps to the centre of the left cell; values
/// contract geometrically, so the solver terminates quickly. Used by the
/// termination acceptance run (beta = 0.9).
pub fn absorbing_chain_file() -> ModelFile {
    let mut f = fully_observable_2cell_file();
    f.name = "absorbing-chain".into();
    f.beta = 0.9;
    for e in f.env_delta[0].pieces.iter_mut() {
        for c in e.cells.iter_mut() {
            let (m, cc) = const_map(1, &[0.25]);
            c.m = m;
            c.c = cc;
        }
    }
    // left cell plays a diagonal game worth 1; right cell is worthless
    for entry in f.rewards.iter_mut() {
        for (ci, r) in entry.regions.iter_mut().enumerate() {
            let diag = entry.a1 == entry.a2;
            r.value = if ci == 0 && diag { 2.0 } else { 0.0 };
        }
    }
    f
}

/// Pursuit on a line: state (x_p, x_e) in [0,2]^2, the pursuer only senses
/// which half it is in, both players step by 0.5 with saturation at the
/// walls, capture pays 100 while the two share a half. The short horizon
/// (beta = 0.5) keeps the exploration tree shallow enough to converge.
pub fn pursuit_two_region_file() -> ModelFile {
    let e = 2;
    let bounds = [[0.0, 2.0], [0.0, 2.0]];
    let mut classifiers = BTreeMap::new();
    classifiers.insert("m".to_string(), split_classifier(e, 1.0));
    let actions = ["left", "right"];
    let step = |a: usize| if a == 0 { -0.5 } else { 0.5 };
    // per coordinate: the band that can move, and the wall band that cannot
    let coord_pieces = |a: usize, coord: usize| -> Vec<(Vec<[f64; 2]>, f64)> {
        let d = step(a);
        let mut free = bounds.to_vec();
        let mut stuck = bounds.to_vec();
        if d < 0.0 {
            free[coord] = [0.5, 2.0];
            stuck[coord] = [0.0, 0.5];
        } else {
            free[coord] = [0.0, 1.5];
            stuck[coord] = [1.5, 2.0];
        }
        vec![(free, d), (stuck, 0.0)]
    };
    let mut env_pieces = Vec::new();
    for (i1, a1) in actions.iter().enumerate() {
        for (i2, a2) in actions.iter().enumerate() {
            let mut cells = Vec::new();
            for (bp, dp) in coord_pieces(i1, 0) {
                for (be, de) in coord_pieces(i2, 1) {
                    let mut b = bp.clone();
                    b[1] = be[1];
                    cells.push(DynCellFile {
                        halfspaces: box_hs(&b),
                        m: identity_m(e),
                        c: vec![dp, de],
                    });
                }
            }
            env_pieces.push(DynPieceEntry {
                loc: "*".into(),
                a1: (*a1).into(),
                a2: (*a2).into(),
                cells,
            });
        }
    }
    let halves = [[0.0, 1.0], [1.0, 2.0]];
    let mut regions = Vec::new();
    for hp in halves {
        for he in halves {
            regions.push(RewardRegionFile {
                loc: "*".into(),
                per: "*".into(),
                halfspaces: box_hs(&[hp, he]),
                value: if hp == he { 100.0 } else { 0.0 },
            });
        }
    }
    ModelFile {
        name: "pursuit-two-region".into(),
        locals: vec!["m".into()],
        percepts: vec!["L".into(), "R".into()],
        env_box: bounds.to_vec(),
        actions1: actions.iter().map(|s| s.to_string()).collect(),
        actions2: actions.iter().map(|s| s.to_string()).collect(),
        classifiers,
        local_delta: vec![LocalDeltaEntry {
            loc: "*".into(),
            per: "*".into(),
            a1: "*".into(),
            a2: "*".into(),
            next: BTreeMap::from([("m".to_string(), 1.0)]),
        }],
        env_delta: vec![BranchFile {
            weight: 1.0,
            pieces: env_pieces,
        }],
        rewards: vec![RewardEntry {
            a1: "*".into(),
            a2: "*".into(),
            regions,
        }],
        beta: 0.5,
        piece_budget: None,
    }
}

/// Single-action model whose dynamics translate by +0.25 and saturate at the
/// right wall; the perception split at 0.5 makes the translation cross an
/// observation boundary.
pub fn translate_clamp() -> GameModel {
    let e = 1;
    let bounds = [[0.0, 1.0]];
    let mut classifiers = BTreeMap::new();
    classifiers.insert("m".to_string(), split_classifier(e, 0.5));
    ModelFile {
        name: "translate-clamp".into(),
        locals: vec!["m".into()],
        percepts: vec!["L".into(), "R".into()],
        env_box: bounds.to_vec(),
        actions1: vec!["go".into()],
        actions2: vec!["x".into()],
        classifiers,
        local_delta: vec![LocalDeltaEntry {
            loc: "*".into(),
            per: "*".into(),
            a1: "*".into(),
            a2: "*".into(),
            next: BTreeMap::from([("m".to_string(), 1.0)]),
        }],
        env_delta: vec![BranchFile {
            weight: 1.0,
            pieces: vec![DynPieceEntry {
                loc: "*".into(),
                a1: "*".into(),
                a2: "*".into(),
                cells: vec![
                    DynCellFile {
                        halfspaces: box_hs(&[[0.0, 0.75]]),
                        m: identity_m(e),
                        c: vec![0.25],
                    },
                    DynCellFile {
                        halfspaces: box_hs(&[[0.75, 1.0]]),
                        m: vec![vec![0.0]],
                        c: vec![1.0],
                    },
                ],
            }],
        }],
        rewards: vec![RewardEntry {
            a1: "*".into(),
            a2: "*".into(),
            regions: vec![RewardRegionFile {
                loc: "*".into(),
                per: "*".into(),
                halfspaces: box_hs(&bounds),
                value: 0.0,
            }],
        }],
        beta: 0.5,
        piece_budget: None,
    }
    .into_model()
    .unwrap()
}

/// Grid-world pursuit in the plane: the pursuer perceives its own position as
/// one of nine cells through a 12-neuron distance classifier, the evader is
/// fully informed, capture (sharing a cell) pays 100.
pub fn pursuit_evasion_file() -> ModelFile {
    let e = 4; // (x_p, y_p, x_e, y_e) in [0,3]^4
    let bounds = [[0.0, 3.0]; 4];
    // hidden units relu(+-(x_p - c)) and relu(+-(y_p - c)) for c in 1.5 +- 1
    let centers = [0.5, 1.5, 2.5];
    let mut w_hidden = Vec::new();
    let mut b_hidden = Vec::new();
    for (coord, _) in [(0usize, "x"), (1usize, "y")] {
        for c in centers {
            let mut up = vec![0.0; e];
            up[coord] = 1.0;
            w_hidden.push(up);
            b_hidden.push(-c);
            let mut down = vec![0.0; e];
            down[coord] = -1.0;
            w_hidden.push(down);
            b_hidden.push(c);
        }
    }
    // logit of grid cell (i, j) = -(|x - cx_i| + |y - cy_j|)
    let mut w_out = Vec::new();
    let mut b_out = Vec::new();
    for j in 0..3 {
        for i in 0..3 {
            let mut row = vec![0.0; 12];
            row[2 * i] = -1.0; // relu(x - cx_i)
            row[2 * i + 1] = -1.0; // relu(cx_i - x)
            row[6 + 2 * j] = -1.0;
            row[6 + 2 * j + 1] = -1.0;
            w_out.push(row);
            b_out.push(0.0);
        }
    }
    let net = ReluNetwork {
        layers: vec![
            Layer {
                w: w_hidden,
                b: b_hidden,
            },
            Layer { w: w_out, b: b_out },
        ],
    };
    let mut classifiers = BTreeMap::new();
    classifiers.insert("m".to_string(), net);
    let percepts: Vec<String> = (0..9)
        .map(|k| format!("c{}{}", k % 3, k / 3))
        .collect();

    let a1_names = [
        "up", "down", "left", "right", "upleft", "upright", "downleft", "downright",
    ];
    let a2_names = ["up", "down", "left", "right"];
    let dir = |name: &str| -> (f64, f64) {
        match name {
            "up" => (0.0, 1.0),
            "down" => (0.0, -1.0),
            "left" => (-1.0, 0.0),
            "right" => (1.0, 0.0),
            "upleft" => (-1.0, 1.0),
            "upright" => (1.0, 1.0),
            "downleft" => (-1.0, -1.0),
            "downright" => (1.0, -1.0),
            _ => unreachable!(),
        }
    };
    // a planar agent moves iff the whole step stays in [0,3]^2; otherwise it
    // stays put. The "can move" set is a box; its complement splits into at
    // most two boxes.
    let agent_pieces = |d: (f64, f64)| -> Vec<(Vec<[f64; 2]>, (f64, f64))> {
        let (dx, dy) = d;
        let xr = if dx < 0.0 {
            [0.0 - dx, 3.0]
        } else {
            [0.0, 3.0 - dx]
        };
        let yr = if dy < 0.0 { [0.0 - dy, 3.0] } else { [0.0, 3.0 - dy] };
        let mut v = vec![(vec![xr, yr], (dx, dy))];
        if dx != 0.0 {
            let xout = if dx < 0.0 { [0.0, -dx] } else { [3.0 - dx, 3.0] };
            v.push((vec![xout, [0.0, 3.0]], (0.0, 0.0)));
        }
        if dy != 0.0 {
            let yout = if dy < 0.0 { [0.0, -dy] } else { [3.0 - dy, 3.0] };
            v.push((vec![xr, yout], (0.0, 0.0)));
        }
        v
    };
    let mut env_pieces = Vec::new();
    for a1 in a1_names {
        for a2 in a2_names {
            let mut cells = Vec::new();
            for (pb, (pdx, pdy)) in agent_pieces(dir(a1)) {
                for (eb, (edx, edy)) in agent_pieces(dir(a2)) {
                    let b4 = vec![pb[0], pb[1], eb[0], eb[1]];
                    cells.push(DynCellFile {
                        halfspaces: box_hs(&b4),
                        m: identity_m(e),
                        c: vec![pdx, pdy, edx, edy],
                    });
                }
            }
            env_pieces.push(DynPieceEntry {
                loc: "*".into(),
                a1: a1.into(),
                a2: a2.into(),
                cells,
            });
        }
    }
    // reward partition: pursuer cell x evader cell, capture on the diagonal
    let cell_range = |i: usize| [i as f64, i as f64 + 1.0];
    let mut regions = Vec::new();
    for pi in 0..3 {
        for pj in 0..3 {
            for ei in 0..3 {
                for ej in 0..3 {
                    regions.push(RewardRegionFile {
                        loc: "*".into(),
                        per: "*".into(),
                        halfspaces: box_hs(&[
                            cell_range(pi),
                            cell_range(pj),
                            cell_range(ei),
                            cell_range(ej),
                        ]),
                        value: if pi == ei && pj == ej { 100.0 } else { 0.0 },
                    });
                }
            }
        }
    }
    ModelFile {
        name: "pursuit-evasion".into(),
        locals: vec!["m".into()],
        percepts,
        env_box: bounds.to_vec(),
        actions1: a1_names.iter().map(|s| s.to_string()).collect(),
        actions2: a2_names.iter().map(|s| s.to_string()).collect(),
        classifiers,
        local_delta: vec![LocalDeltaEntry {
            loc: "*".into(),
            per: "*".into(),
            a1: "*".into(),
            a2: "*".into(),
            next: BTreeMap::from([("m".to_string(), 1.0)]),
        }],
        env_delta: vec![BranchFile {
            weight: 1.0,
            pieces: env_pieces,
        }],
        rewards: vec![RewardEntry {
            a1: "*".into(),
            a2: "*".into(),
            regions,
        }],
        beta: 0.7,
        piece_budget: None,
    }
}

/// Vehicle speeds as local states, pedestrian intention percepts, kinematic
/// updates of the relative bounding-box coordinates, crash penalty -200.
pub fn pedestrian_vehicle_file() -> ModelFile {
    // (x1, y1, x2, y2): previous and current top-left corners
    let bounds = [[0.0, 20.0], [0.0, 10.0], [0.0, 20.0], [0.0, 10.0]];
    let speeds: Vec<i32> = (0..=10).map(|k| k * 3).collect();
    let locals: Vec<String> = speeds.iter().map(|v| format!("v{v}")).collect();
    let percepts = vec![
        "unlikely".to_string(),
        "likely".to_string(),
        "very_likely".to_string(),
    ];
    // stand-in intention classifier: crossing pressure grows with leftward
    // motion (x1 - x2) and proximity (small y2)
    let net = ReluNetwork {
        layers: vec![
            Layer {
                w: vec![
                    vec![1.0, 0.0, -1.0, 0.0], // x1 - x2
                    vec![0.0, 0.0, 0.0, -1.0], // 5 - y2
                ],
                b: vec![0.0, 5.0],
            },
            Layer {
                w: vec![
                    vec![-0.8, -0.2],
                    vec![0.5, 0.3],
                    vec![1.0, 0.5],
                ],
                b: vec![1.5, -1.0, -3.5],
            },
        ],
    };
    let mut classifiers = BTreeMap::new();
    for l in &locals {
        classifiers.insert(l.clone(), net.clone());
    }
    let accels = [-3i32, 0, 3];
    let a1_names: Vec<String> = accels.iter().map(|a| format!("{a:+}")).collect();
    let a2_names = ["cross".to_string(), "back".to_string()];
    let g_next = |v: i32, a: i32| -> i32 { (v + a).clamp(0, 30) };

    let mut local_delta = Vec::new();
    let mut env_pieces = Vec::new();
    for (vi, &v) in speeds.iter().enumerate() {
        for (ai, &a) in accels.iter().enumerate() {
            let v2 = g_next(v, a);
            local_delta.push(LocalDeltaEntry {
                loc: locals[vi].clone(),
                per: "*".into(),
                a1: a1_names[ai].clone(),
                a2: "*".into(),
                next: BTreeMap::from([(format!("v{v2}"), 1.0)]),
            });
            let dt = if a != 0 && v2 != v {
                ((v2 - v).abs() as f64) / (a.abs() as f64)
            } else if a != 0 {
                0.0
            } else {
                0.3
            };
            let dy = v as f64 * dt + 0.5 * (a as f64) * dt * dt;
            for (a2i, a2) in a2_names.iter().enumerate() {
                let mv = if a2i == 0 { -1.0 } else { 1.0 };
                let dx = mv * 4.5 * dt;
                // rows: x1' = x2, y1' = y2, x2' = clamp(x2 + dx), y2' = clamp(y2 - dy)
                let base_m = vec![
                    vec![0.0, 0.0, 1.0, 0.0],
                    vec![0.0, 0.0, 0.0, 1.0],
                    vec![0.0, 0.0, 1.0, 0.0],
                    vec![0.0, 0.0, 0.0, 1.0],
                ];
                // x2 band where the step saturates at a wall
                let (x_free, x_stuck, x_wall) = if dx < 0.0 {
                    ([-dx, 20.0], [0.0, -dx], 0.0)
                } else {
                    ([0.0, 20.0 - dx], [20.0 - dx, 20.0], 20.0)
                };
                let (y_free, y_stuck) = ([dy, 10.0], [0.0, dy]);
                let mut cells = Vec::new();
                let mut add = |xr: [f64; 2], yr: [f64; 2], x_sat: Option<f64>, y_sat: bool| {
                    if xr[0] >= xr[1] || yr[0] >= yr[1] {
                        return;
                    }
                    let mut m = base_m.clone();
                    let mut c = vec![0.0, 0.0, 0.0, 0.0];
                    match x_sat {
                        None => c[2] = dx,
                        Some(w) => {
                            m[2] = vec![0.0; 4];
                            c[2] = w;
                        }
                    }
                    if y_sat {
                        m[3] = vec![0.0; 4];
                        c[3] = 0.0;
                    } else {
                        c[3] = -dy;
                    }
                    cells.push(DynCellFile {
                        halfspaces: box_hs(&[bounds[0], bounds[1], xr, yr]),
                        m,
                        c,
                    });
                };
                add(x_free, y_free, None, false);
                add(x_stuck, y_free, Some(x_wall), false);
                add(x_free, y_stuck, None, true);
                add(x_stuck, y_stuck, Some(x_wall), true);
                if dx == 0.0 && dy == 0.0 {
                    // no saturation bands at all: single identity-like piece
                    cells = vec![DynCellFile {
                        halfspaces: box_hs(&bounds),
                        m: base_m.clone(),
                        c: vec![0.0; 4],
                    }];
                }
                env_pieces.push(DynPieceEntry {
                    loc: locals[vi].clone(),
                    a1: a1_names[ai].clone(),
                    a2: a2.clone(),
                    cells,
                });
            }
        }
    }
    // crash box on (x2, y2): x2 in [0, 0.5] and y2 in [0, 2.5]
    let regions = vec![
        RewardRegionFile {
            loc: "*".into(),
            per: "*".into(),
            halfspaces: box_hs(&[bounds[0], bounds[1], [0.0, 0.5], [0.0, 2.5]]),
            value: -200.0,
        },
        RewardRegionFile {
            loc: "*".into(),
            per: "*".into(),
            halfspaces: box_hs(&[bounds[0], bounds[1], [0.5, 20.0], [0.0, 10.0]]),
            value: 0.0,
        },
        RewardRegionFile {
            loc: "*".into(),
            per: "*".into(),
            halfspaces: box_hs(&[bounds[0], bounds[1], [0.0, 0.5], [2.5, 10.0]]),
            value: 0.0,
        },
    ];
    ModelFile {
        name: "pedestrian-vehicle".into(),
        locals,
        percepts,
        env_box: bounds.to_vec(),
        actions1: a1_names,
        actions2: a2_names.to_vec(),
        classifiers,
        local_delta,
        env_delta: vec![BranchFile {
            weight: 1.0,
            pieces: env_pieces,
        }],
        rewards: vec![RewardEntry {
            a1: "*".into(),
            a2: "*".into(),
            regions,
        }],
        beta: 0.7,
        piece_budget: None,
    }
}

/// Seeded family of small random models over [0,1] with a two-cell
/// perception, used by the randomized acceptance checks.
pub fn random_small_file(seed: u64) -> ModelFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = 1;
    let bounds = [[0.0, 1.0]];
    let cells = [box_hs(&[[0.0, 0.5]]), box_hs(&[[0.5, 1.0]])];
    let mut classifiers = BTreeMap::new();
    classifiers.insert("m".to_string(), split_classifier(e, 0.5));
    let names = ["a", "b"];
    let n_branches = if rng.random_range(0.0..1.0) < 0.3 { 2 } else { 1 };
    let weights = if n_branches == 1 {
        vec![1.0]
    } else {
        vec![0.4, 0.6]
    };
    let mut env_delta = Vec::new();
    for _ in 0..n_branches {
        let mut pieces = Vec::new();
        for a1 in names {
            for a2 in names {
                let mut dyn_cells = Vec::new();
                for cell in cells.iter() {
                    // constant jump to an interior point away from the split
                    let mut t: f64 = rng.random_range(0.1..0.9);
                    if (t - 0.5).abs() < 0.05 {
                        t = if t < 0.5 { 0.4 } else { 0.6 };
                    }
                    let (m, c) = const_map(e, &[t]);
                    dyn_cells.push(DynCellFile {
                        halfspaces: cell.clone(),
                        m,
                        c,
                    });
                }
                pieces.push(DynPieceEntry {
                    loc: "*".into(),
                    a1: a1.into(),
                    a2: a2.into(),
                    cells: dyn_cells,
                });
            }
        }
        env_delta.push(BranchFile { weight: 0.0, pieces });
    }
    for (b, w) in env_delta.iter_mut().zip(weights) {
        b.weight = w;
    }
    let mut rewards = Vec::new();
    for a1 in names {
        for a2 in names {
            let mut regions = Vec::new();
            for cell in cells.iter() {
                regions.push(RewardRegionFile {
                    loc: "*".into(),
                    per: "*".into(),
                    halfspaces: cell.clone(),
                    value: (rng.random_range(-1.0..1.0f64) * 100.0).round() / 100.0,
                });
            }
            rewards.push(RewardEntry {
                a1: a1.into(),
                a2: a2.into(),
                regions,
            });
        }
    }
    ModelFile {
        name: format!("random-small-{seed}"),
        locals: vec!["m".into()],
        percepts: vec!["L".into(), "R".into()],
        env_box: bounds.to_vec(),
        actions1: names.iter().map(|s| s.to_string()).collect(),
        actions2: names.iter().map(|s| s.to_string()).collect(),
        classifiers,
        local_delta: vec![LocalDeltaEntry {
            loc: "*".into(),
            per: "*".into(),
            a1: "*".into(),
            a2: "*".into(),
            next: BTreeMap::from([("m".to_string(), 1.0)]),
        }],
        env_delta,
        rewards,
        beta: (rng.random_range(0.5..0.9f64) * 100.0).round() / 100.0,
        piece_budget: None,
    }
}

/// Canonical initial belief of a bundled model (percept-compatible by
/// construction: percepts are recomputed through the model's classifiers).
pub fn initial_belief(model: &GameModel) -> crate::belief::ParticleBelief {
    use crate::belief::ParticleBelief;
    let mk = |pts: Vec<(Vec<f64>, f64)>| {
        let (loc, first) = (0usize, &pts[0].0);
        let per = model.obs(loc, first);
        let s1 = model.agent_state(loc, per);
        for (x, _) in &pts {
            debug_assert_eq!(model.obs(loc, x), per, "belief particles must share a percept");
        }
        ParticleBelief::new(s1, pts).unwrap()
    };
    match model.name.as_str() {
        "fully-observable-2cell" | "absorbing-chain" => mk(vec![(vec![0.25], 1.0)]),
        "pursuit-two-region" => mk(vec![
            (vec![0.5, 0.5], 0.5),
            (vec![0.5, 1.5], 0.5),
        ]),
        "pursuit-evasion" => mk(vec![
            (vec![0.5, 2.5, 2.5, 0.5], 0.5),
            (vec![0.5, 2.5, 1.5, 0.5], 0.5),
        ]),
        "pedestrian-vehicle" => {
            // vehicle at full speed, pedestrian ahead on the roadside
            let loc = model.locals.len() - 1;
            let pts = vec![
                (vec![10.0, 8.0, 9.5, 8.0], 0.5),
                (vec![10.0, 8.0, 10.5, 8.0], 0.5),
            ];
            let per = model.obs(loc, &pts[0].0);
            let s1 = model.agent_state(loc, per);
            ParticleBelief::new(s1, pts).unwrap()
        }
        _ => mk(vec![(vec![0.5], 1.0)]),
    }
}

/// Writes the bundled fixture files (model plus canonical initial belief)
/// into `dir`.
pub fn write_bundled(dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, file) in [
        ("matching_pennies", matching_pennies_file()),
        ("zero_reward", zero_reward_file()),
        ("fully_observable_2cell", fully_observable_2cell_file()),
        ("absorbing_chain", absorbing_chain_file()),
        ("pursuit_two_region", pursuit_two_region_file()),
        ("pursuit_evasion", pursuit_evasion_file()),
        ("pedestrian_vehicle", pedestrian_vehicle_file()),
    ] {
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(dir.join(format!("{name}.json")), text)?;
        let model = file
            .into_model()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let belief = initial_belief(&model);
        std::fs::write(
            dir.join(format!("{name}.belief.json")),
            serde_json::to_string_pretty(&crate::cli::belief_to_file(&model, &belief))?,
        )?;
    }
    Ok(())
}
