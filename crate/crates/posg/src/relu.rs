//! Exact decision-region decomposition of feed-forward ReLU classifiers.
//!
//! Enumeration is depth-first over neuron activation patterns with LP
//! feasibility pruning, so only patterns whose cells are full-dimensional in
//! the domain survive. Each surviving pattern carries the affine map the
//! network computes on its cell; argmax labelling then subdivides cells by
//! pairwise logit-difference half-spaces.

use crate::geometry::{GeomError, Halfspace, Polytope, GEOM_TOL};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on enumerated activation cells.
pub const DEFAULT_PIECE_BUDGET: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum ReluError {
    #[error("network is malformed: {0}")]
    BadNetwork(String),
    #[error("domain for piece enumeration must be bounded")]
    DomainUnbounded,
    #[error("piece budget of {0} exceeded")]
    PieceBudgetExceeded(usize),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major weights: `w[out][in]`.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Feed-forward network with ReLU hidden activations and a linear final
/// layer; one logit per percept.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReluNetwork {
    pub layers: Vec<Layer>,
}

impl ReluNetwork {
    pub fn input_dim(&self) -> usize {
        self.layers
            .first()
            .map(|l| l.w.first().map(|r| r.len()).unwrap_or(0))
            .unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.b.len()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ReluError> {
        if self.layers.is_empty() {
            return Err(ReluError::BadNetwork("no layers".into()));
        }
        let mut dim = self.input_dim();
        for (i, l) in self.layers.iter().enumerate() {
            if l.w.len() != l.b.len() {
                return Err(ReluError::BadNetwork(format!(
                    "layer {i}: {} weight rows vs {} biases",
                    l.w.len(),
                    l.b.len()
                )));
            }
            for row in &l.w {
                if row.len() != dim {
                    return Err(ReluError::BadNetwork(format!(
                        "layer {i}: row width {} != {}",
                        row.len(),
                        dim
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(ReluError::BadNetwork(format!(
                        "layer {i}: non-finite weight"
                    )));
                }
            }
            if l.b.iter().any(|v| !v.is_finite()) {
                return Err(ReluError::BadNetwork(format!("layer {i}: non-finite bias")));
            }
            dim = l.b.len();
        }
        Ok(())
    }

    /// Logits at `x`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur: Vec<f64> = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; l.b.len()];
            for (o, row) in l.w.iter().enumerate() {
                let mut v = l.b[o];
                for (wj, xj) in row.iter().zip(&cur) {
                    v += wj * xj;
                }
                next[o] = if i < last { v.max(0.0) } else { v };
            }
            cur = next;
        }
        cur
    }

    /// Index of the largest logit; exact ties go to the lowest index.
    pub fn argmax(&self, x: &[f64]) -> usize {
        let logits = self.forward(x);
        let mut best = 0;
        for (i, v) in logits.iter().enumerate().skip(1) {
            if *v > logits[best] {
                best = i;
            }
        }
        best
    }
}

/// Affine function `x -> Wx + b` as dense rows.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl AffineMap {
    fn identity(dim: usize) -> Self {
        let w = (0..dim)
            .map(|i| {
                let mut row = vec![0.0; dim];
                row[i] = 1.0;
                row
            })
            .collect();
        AffineMap {
            w,
            b: vec![0.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// One linear region of the network: the cell, the affine function the
/// network computes there, and the activation pattern that produced it.
#[derive(Debug, Clone)]
pub struct LinearPiece {
    pub cell: Polytope,
    pub map: AffineMap,
    pub pattern: Vec<bool>,
}

/// Exhaustively enumerates the full-dimensional linear regions of `net` over
/// `domain`. Cells form an FCP of the domain, in canonical activation-pattern
/// order.
pub fn enumerate_pieces(
    net: &ReluNetwork,
    domain: &Polytope,
    budget: usize,
) -> Result<Vec<LinearPiece>, ReluError> {
    net.validate()?;
    if domain.dim != net.input_dim() {
        return Err(ReluError::BadNetwork(format!(
            "domain dim {} != network input dim {}",
            domain.dim,
            net.input_dim()
        )));
    }
    match domain.chebyshev() {
        Ok(_) => {}
        Err(GeomError::Unbounded) => return Err(ReluError::DomainUnbounded),
        Err(e) => return Err(e.into()),
    }
    let mut out: Vec<LinearPiece> = Vec::new();
    let hidden = net.layers.len() - 1;
    type Node = (
        usize,           // layer
        usize,           // neuron
        AffineMap,       // input -> current layer input
        Vec<Vec<f64>>,   // decided rows of this layer (as input coefs)
        Vec<f64>,        // decided consts of this layer
        Vec<Halfspace>,  // accumulated activation constraints
        Vec<bool>,       // pattern so far
    );
    let mut stack: Vec<Node> = vec![(
        0,
        0,
        AffineMap::identity(domain.dim),
        Vec::new(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
    )];
    while let Some((l, j, cur, rows, consts, cons, pattern)) = stack.pop() {
        if l == hidden {
            let last = &net.layers[hidden];
            let mut w = Vec::with_capacity(last.b.len());
            let mut b = Vec::with_capacity(last.b.len());
            for (o, wrow) in last.w.iter().enumerate() {
                let (coef, cst) = compose_row(wrow, last.b[o], &cur);
                w.push(coef);
                b.push(cst);
            }
            let mut hs = domain.halfspaces.clone();
            hs.extend(cons.iter().cloned());
            let cell = Polytope::new(domain.dim, hs).canonicalize()?;
            out.push(LinearPiece {
                cell,
                map: AffineMap { w, b },
                pattern,
            });
            if out.len() > budget {
                return Err(ReluError::PieceBudgetExceeded(budget));
            }
            continue;
        }
        let layer = &net.layers[l];
        if j == layer.b.len() {
            let next = AffineMap { w: rows, b: consts };
            stack.push((l + 1, 0, next, Vec::new(), Vec::new(), cons, pattern));
            continue;
        }
        let (coef, cst) = compose_row(&layer.w[j], layer.b[j], &cur);
        // Push the active branch first so the stack explores inactive (0)
        // before active (1); output then follows pattern order.
        for active in [true, false] {
            let mut cons2 = cons.clone();
            let nrm: f64 = coef.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm < 1e-12 {
                // constant preactivation: only one branch exists
                if (cst >= 0.0) != active {
                    continue;
                }
            } else if active {
                cons2.push(Halfspace::new(coef.iter().map(|v| -v).collect(), cst));
            } else {
                cons2.push(Halfspace::new(coef.clone(), -cst));
            }
            if !feasible(domain, &cons2)? {
                continue;
            }
            let mut rows2 = rows.clone();
            let mut consts2 = consts.clone();
            if active {
                rows2.push(coef.clone());
                consts2.push(cst);
            } else {
                rows2.push(vec![0.0; domain.dim]);
                consts2.push(0.0);
            }
            let mut pat2 = pattern.clone();
            pat2.push(active);
            stack.push((l, j + 1, cur.clone(), rows2, consts2, cons2, pat2));
        }
    }
    out.sort_by(|a, b| a.pattern.cmp(&b.pattern));
    Ok(out)
}

/// Row of `w . (Ax + b) + c` as coefficients over the input.
fn compose_row(wrow: &[f64], bias: f64, inner: &AffineMap) -> (Vec<f64>, f64) {
    let dim = inner.w.first().map(|r| r.len()).unwrap_or(0);
    let mut coef = vec![0.0; dim];
    let mut cst = bias;
    for (wi, (arow, ab)) in wrow.iter().zip(inner.w.iter().zip(&inner.b)) {
        if *wi != 0.0 {
            for (cj, aj) in coef.iter_mut().zip(arow) {
                *cj += wi * aj;
            }
            cst += wi * ab;
        }
    }
    (coef, cst)
}

fn feasible(domain: &Polytope, cons: &[Halfspace]) -> Result<bool, GeomError> {
    let mut hs = domain.halfspaces.clone();
    hs.extend(cons.iter().cloned());
    let p = Polytope::new(domain.dim, hs);
    Ok(p.chebyshev().map(|(_, r)| r > GEOM_TOL).unwrap_or(false))
}

/// Splits a linear piece into maximal sub-cells of constant argmax. Exact
/// logit ties go to the lowest percept index; output is ordered by percept.
pub fn label_argmax(piece: &LinearPiece) -> Result<Vec<(Polytope, usize)>, ReluError> {
    let k = piece.map.b.len();
    let mut out = Vec::new();
    'cand: for i in 0..k {
        let mut hs = piece.cell.halfspaces.clone();
        for j in 0..k {
            if j == i {
                continue;
            }
            // require z_i >= z_j, i.e. (w_j - w_i) . x <= b_i - b_j
            let diff: Vec<f64> = piece.map.w[j]
                .iter()
                .zip(&piece.map.w[i])
                .map(|(a, b)| a - b)
                .collect();
            let off = piece.map.b[i] - piece.map.b[j];
            let mag = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            if mag < 1e-12 {
                if off.abs() <= 1e-12 {
                    // identical logits on the whole cell: lowest index wins
                    if j < i {
                        continue 'cand;
                    }
                } else if off < 0.0 {
                    continue 'cand; // z_i strictly below z_j everywhere
                }
                continue;
            }
            hs.push(Halfspace::new(diff, off));
        }
        let cell = Polytope::new(piece.cell.dim, hs);
        if cell.chebyshev().map(|(_, r)| r > GEOM_TOL).unwrap_or(false) {
            out.push((cell.canonicalize()?, i));
        }
    }
    Ok(out)
}

/// Constant-observation decomposition of the domain for one classifier:
/// enumeration plus argmax labelling, in canonical (pattern, percept) order.
pub fn decision_regions(
    net: &ReluNetwork,
    domain: &Polytope,
    budget: usize,
) -> Result<Vec<(Polytope, usize)>, ReluError> {
    let pieces = enumerate_pieces(net, domain, budget)?;
    let mut out = Vec::new();
    for p in &pieces {
        out.extend(label_argmax(p)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval() -> Polytope {
        Polytope::from_box(&[[0.0, 1.0]])
    }

    /// relu(x - 0.5) into logits (h, 0.25): percept 1 below x=0.75.
    fn one_neuron_net() -> ReluNetwork {
        ReluNetwork {
            layers: vec![
                Layer {
                    w: vec![vec![1.0]],
                    b: vec![-0.5],
                },
                Layer {
                    w: vec![vec![1.0], vec![0.0]],
                    b: vec![0.0, 0.25],
                },
            ],
        }
    }

    #[test]
    fn pure_linear_single_piece() {
        let net = ReluNetwork {
            layers: vec![Layer {
                w: vec![vec![1.0], vec![-1.0]],
                b: vec![0.0, 1.0],
            }],
        };
        let pieces = enumerate_pieces(&net, &interval(), 100).unwrap();
        assert_eq!(pieces.len(), 1);
        assert!(pieces[0].pattern.is_empty());
    }

    #[test]
    fn one_neuron_two_pieces() {
        let pieces = enumerate_pieces(&one_neuron_net(), &interval(), 100).unwrap();
        assert_eq!(pieces.len(), 2);
        assert!(!pieces[0].pattern[0] && pieces[1].pattern[0]);
        // split at x = 0.5
        assert!(pieces[0].cell.contains(&[0.25], 1e-9));
        assert!(!pieces[0].cell.contains(&[0.75], 1e-7));
        assert!(pieces[1].cell.contains(&[0.75], 1e-9));
        // map consistency at interior points
        for (piece, xs) in [(&pieces[0], [0.1, 0.4]), (&pieces[1], [0.6, 0.9])] {
            for x in xs {
                let net_out = one_neuron_net().forward(&[x]);
                let map_out = piece.map.apply(&[x]);
                for (a, b) in net_out.iter().zip(&map_out) {
                    assert!((a - b).abs() <= 1e-7);
                }
            }
        }
    }

    #[test]
    fn argmax_split_at_three_quarters() {
        let pieces = enumerate_pieces(&one_neuron_net(), &interval(), 100).unwrap();
        let labels = label_argmax(&pieces[1]).unwrap();
        assert_eq!(labels.len(), 2);
        // ordered by percept id: percept 0 right of 0.75, percept 1 left
        assert_eq!(labels[0].1, 0);
        assert!(labels[0].0.contains(&[0.9], 1e-9));
        assert_eq!(labels[1].1, 1);
        assert!(labels[1].0.contains(&[0.6], 1e-9));
        // dense 1-D argmax sampling oracle
        let net = one_neuron_net();
        for step in 0..10_000 {
            let x = step as f64 / 10_000.0 * 0.5 + 0.5;
            let want = net.argmax(&[x]);
            let got = labels
                .iter()
                .find(|(c, _)| c.contains(&[x], 1e-9))
                .map(|(_, p)| *p);
            if labels
                .iter()
                .any(|(c, _)| c.halfspaces.iter().any(|h| h.eval(&[x]).abs() <= 1e-7))
            {
                continue; // boundary band
            }
            assert_eq!(got, Some(want), "x={x}");
        }
    }

    #[test]
    fn constant_winner_whole_cell() {
        let net = ReluNetwork {
            layers: vec![Layer {
                w: vec![vec![0.0], vec![0.0]],
                b: vec![1.0, 0.0],
            }],
        };
        let regions = decision_regions(&net, &interval(), 100).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].1, 0);
    }

    #[test]
    fn identical_logits_tie_break() {
        let net = ReluNetwork {
            layers: vec![Layer {
                w: vec![vec![2.0], vec![2.0]],
                b: vec![0.5, 0.5],
            }],
        };
        let regions = decision_regions(&net, &interval(), 100).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].1, 0);
        assert_eq!(net.argmax(&[0.3]), 0);
    }

    #[test]
    fn soundness_and_coverage_2d() {
        // two hidden neurons over 2-D, three logits
        let net = ReluNetwork {
            layers: vec![
                Layer {
                    w: vec![vec![1.0, -0.3], vec![-0.5, 1.0]],
                    b: vec![-0.2, -0.1],
                },
                Layer {
                    w: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.6]],
                    b: vec![0.0, 0.05, -0.05],
                },
            ],
        };
        let domain = Polytope::from_box(&[[0.0, 1.0], [0.0, 1.0]]);
        let regions = decision_regions(&net, &domain, 1000).unwrap();
        // coverage: region volumes sum to the domain volume
        let mut vol = 0.0;
        for (cell, _) in &regions {
            vol += cell.volume().unwrap();
        }
        assert!((vol - 1.0).abs() < 1e-6, "volume {vol}");
        // soundness at random samples, excluding boundary bands
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        for _ in 0..10_000 {
            let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let near_boundary = regions
                .iter()
                .any(|(c, _)| c.halfspaces.iter().any(|h| h.eval(&x).abs() <= 1e-7));
            if near_boundary {
                continue;
            }
            let want = net.argmax(&x);
            let got = regions
                .iter()
                .find(|(c, _)| c.contains(&x, GEOM_TOL))
                .map(|(_, p)| *p);
            assert_eq!(got, Some(want), "at {x:?}");
            checked += 1;
        }
        assert!(checked > 9000);
    }

    #[test]
    fn budget_exceeded() {
        let net = ReluNetwork {
            layers: vec![
                Layer {
                    w: vec![vec![1.0], vec![1.0], vec![1.0]],
                    b: vec![-0.25, -0.5, -0.75],
                },
                Layer {
                    w: vec![vec![1.0, 1.0, 1.0]],
                    b: vec![0.0],
                },
            ],
        };
        match enumerate_pieces(&net, &interval(), 2) {
            Err(ReluError::PieceBudgetExceeded(2)) => {}
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_domain_rejected() {
        let net = one_neuron_net();
        let dom = Polytope::whole(1);
        assert!(matches!(
            enumerate_pieces(&net, &dom, 10),
            Err(ReluError::DomainUnbounded)
        ));
    }
}
