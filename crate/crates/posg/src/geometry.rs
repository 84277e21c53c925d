//! Convex polytope algebra in H-representation and finite connected
//! partitions (FCPs) of the environment space.
//!
//! All predicates are tolerance-based (1e-9 with unit normals); emptiness and
//! interior points are decided by LP, which keeps results deterministic for a
//! fixed H-representation. Vertex enumeration is used only internally, for
//! images under singular maps and for exact volumes.

use crate::lp::{self, LpInstance, LpStatus, Rel, Sense};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Geometric tolerance used by membership and degeneracy predicates.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("polytope is degenerate (zero-radius inscribed ball)")]
    DegeneratePolytope,
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("affine image of intrinsic dimension {0} > 2 under a singular map is unsupported")]
    UnsupportedImageRank(usize),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
}

/// Closed half-space `normal . x <= offset`. Nonzero normals are stored with
/// unit length so tolerances are scale-free.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(mut normal: Vec<f64>, mut offset: f64) -> Self {
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for v in normal.iter_mut() {
                *v /= norm;
            }
            offset /= norm;
        }
        Halfspace { normal, offset }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>() - self.offset
    }

    fn is_zero_normal(&self) -> bool {
        self.normal.iter().all(|v| v.abs() < 1e-12)
    }
}

impl Serialize for Halfspace {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let mut row = self.normal.clone();
        row.push(self.offset);
        row.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Halfspace {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let row = Vec::<f64>::deserialize(de)?;
        if row.len() < 2 {
            return Err(serde::de::Error::custom(
                "halfspace row needs at least [n..., offset]",
            ));
        }
        let offset = *row.last().unwrap();
        Ok(Halfspace::new(row[..row.len() - 1].to_vec(), offset))
    }
}

/// Convex polytope `{ x : n_i . x <= d_i }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub dim: usize,
    pub halfspaces: Vec<Halfspace>,
}

impl Polytope {
    pub fn new(dim: usize, halfspaces: Vec<Halfspace>) -> Self {
        Polytope { dim, halfspaces }
    }

    /// The whole space (no constraints).
    pub fn whole(dim: usize) -> Self {
        Polytope {
            dim,
            halfspaces: Vec::new(),
        }
    }

    /// Axis-aligned box from per-dimension `[lo, hi]` bounds.
    pub fn from_box(bounds: &[[f64; 2]]) -> Self {
        let dim = bounds.len();
        let mut hs = Vec::with_capacity(2 * dim);
        for (i, b) in bounds.iter().enumerate() {
            let mut n = vec![0.0; dim];
            n[i] = 1.0;
            hs.push(Halfspace::new(n.clone(), b[1]));
            n[i] = -1.0;
            hs.push(Halfspace::new(n, -b[0]));
        }
        Polytope { dim, halfspaces: hs }
    }

    pub fn push(&mut self, normal: Vec<f64>, offset: f64) {
        self.halfspaces.push(Halfspace::new(normal, offset));
    }

    /// Membership within `tol` of every half-space.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        debug_assert_eq!(x.len(), self.dim);
        self.halfspaces.iter().all(|h| h.eval(x) <= tol)
    }

    /// LP feasibility: true iff no point satisfies all half-spaces.
    pub fn is_empty(&self) -> Result<bool, GeomError> {
        if self.halfspaces.is_empty() {
            return Ok(false);
        }
        let mut prob = LpInstance::new(Sense::Min);
        let xs: Vec<usize> = (0..self.dim).map(|_| prob.add_var(0.0, true)).collect();
        for h in &self.halfspaces {
            let r = prob.add_row(Rel::Le, h.offset);
            for (j, &n) in h.normal.iter().enumerate() {
                prob.set_coef(r, xs[j], n);
            }
        }
        let sol = lp::solve(&prob)?;
        Ok(sol.status == LpStatus::Infeasible)
    }

    /// Chebyshev center and radius of the largest inscribed ball, by one LP.
    /// Deterministic for a fixed H-representation.
    pub fn chebyshev(&self) -> Result<(Vec<f64>, f64), GeomError> {
        let mut prob = LpInstance::new(Sense::Max);
        let r = prob.add_var(1.0, false);
        let xs: Vec<usize> = (0..self.dim).map(|_| prob.add_var(0.0, true)).collect();
        for h in &self.halfspaces {
            let norm = h.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            let row = prob.add_row(Rel::Le, h.offset);
            prob.set_coef(row, r, norm);
            for (j, &n) in h.normal.iter().enumerate() {
                prob.set_coef(row, xs[j], n);
            }
        }
        let sol = lp::solve(&prob)?;
        match sol.status {
            LpStatus::Infeasible => Err(GeomError::EmptyPolytope),
            LpStatus::Unbounded => Err(GeomError::Unbounded),
            LpStatus::Optimal => {
                let center = xs.iter().map(|&v| sol.primal[v]).collect();
                Ok((center, sol.objective))
            }
        }
    }

    /// Max-inscribed-ball center; errors on empty or zero-radius input.
    pub fn interior_point(&self) -> Result<Vec<f64>, GeomError> {
        let (c, r) = self.chebyshev()?;
        if r <= GEOM_TOL {
            return Err(GeomError::DegeneratePolytope);
        }
        Ok(c)
    }

    /// True when the largest inscribed ball has (numerically) zero radius.
    pub fn is_degenerate(&self) -> Result<bool, GeomError> {
        Ok(self.chebyshev()?.1 <= GEOM_TOL)
    }

    /// Removes redundant half-spaces, keeping the survivors in insertion
    /// order; the result is the canonical form used everywhere downstream.
    /// The polytope must be non-empty.
    pub fn canonicalize(&self) -> Result<Polytope, GeomError> {
        let mut rows: Vec<Halfspace> = Vec::new();
        // near-duplicate pre-pass: keep the tighter of two parallel rows
        'outer: for h in &self.halfspaces {
            if h.is_zero_normal() {
                continue; // 0.x <= d with d >= 0 is vacuous on non-empty input
            }
            for kept in rows.iter_mut() {
                let dot: f64 = kept.normal.iter().zip(&h.normal).map(|(a, b)| a * b).sum();
                if dot > 1.0 - 1e-12 {
                    kept.offset = kept.offset.min(h.offset);
                    continue 'outer;
                }
            }
            rows.push(h.clone());
        }
        let mut keep = vec![true; rows.len()];
        for i in 0..rows.len() {
            let mut prob = LpInstance::new(Sense::Max);
            let xs: Vec<usize> = (0..self.dim)
                .map(|j| prob.add_var(rows[i].normal[j], true))
                .collect();
            let mut any = false;
            for (k, h) in rows.iter().enumerate() {
                if k == i || !keep[k] {
                    continue;
                }
                any = true;
                let r = prob.add_row(Rel::Le, h.offset);
                for (j, &n) in h.normal.iter().enumerate() {
                    prob.set_coef(r, xs[j], n);
                }
            }
            if !any {
                continue; // last surviving row is never redundant
            }
            let sol = lp::solve(&prob)?;
            if sol.status == LpStatus::Optimal && sol.objective <= rows[i].offset + GEOM_TOL {
                keep[i] = false;
            }
        }
        let hs = rows
            .into_iter()
            .zip(keep)
            .filter_map(|(h, k)| k.then_some(h))
            .collect();
        Ok(Polytope {
            dim: self.dim,
            halfspaces: hs,
        })
    }

    /// H-representation intersection with redundancy removed; `None` iff the
    /// intersection has no point.
    pub fn intersect(&self, other: &Polytope) -> Result<Option<Polytope>, GeomError> {
        if self.dim != other.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut hs = self.halfspaces.clone();
        hs.extend(other.halfspaces.iter().cloned());
        let raw = Polytope {
            dim: self.dim,
            halfspaces: hs,
        };
        if raw.is_empty()? {
            return Ok(None);
        }
        Ok(Some(raw.canonicalize()?))
    }

    /// Substitutes `x -> Mx + c` into every half-space: the exact preimage
    /// `{ x : Mx + c in self }`. Rows whose normal vanishes under the
    /// substitution become vacuous (dropped) or contradictory (kept, making
    /// the set empty).
    pub fn affine_preimage(&self, m: &DMatrix<f64>, c: &[f64]) -> Result<Polytope, GeomError> {
        self.check_map(m, c)?;
        let mut hs = Vec::new();
        for h in &self.halfspaces {
            let n = DVector::from_column_slice(&h.normal);
            let new_n = m.transpose() * &n;
            let shift: f64 = h.normal.iter().zip(c).map(|(a, b)| a * b).sum();
            let new_d = h.offset - shift;
            if new_n.amax() < 1e-12 {
                if new_d < -GEOM_TOL {
                    // unsatisfiable row: preserve the contradiction
                    hs.push(Halfspace {
                        normal: vec![0.0; self.dim],
                        offset: new_d,
                    });
                }
                continue;
            }
            hs.push(Halfspace::new(new_n.as_slice().to_vec(), new_d));
        }
        Ok(Polytope {
            dim: self.dim,
            halfspaces: hs,
        })
    }

    /// Exact image `{ Mx + c : x in self }`. Invertible maps go by
    /// substitution; singular maps fall back to vertex enumeration and a
    /// hull in the image's affine subspace (supported up to intrinsic
    /// dimension 2).
    pub fn affine_image(&self, m: &DMatrix<f64>, c: &[f64]) -> Result<Polytope, GeomError> {
        self.check_map(m, c)?;
        let lu = m.clone().full_piv_lu();
        if lu.determinant().abs() > 1e-10 {
            let minv = lu.try_inverse().expect("nonsingular by determinant check");
            let cv = DVector::from_column_slice(c);
            let mut hs = Vec::with_capacity(self.halfspaces.len());
            for h in &self.halfspaces {
                if h.is_zero_normal() {
                    hs.push(h.clone());
                    continue;
                }
                let n = DVector::from_column_slice(&h.normal);
                let new_n = minv.transpose() * &n;
                let shift = new_n.dot(&cv);
                hs.push(Halfspace::new(new_n.as_slice().to_vec(), h.offset + shift));
            }
            return Ok(Polytope {
                dim: self.dim,
                halfspaces: hs,
            });
        }
        // Singular map: hull of mapped vertices.
        let verts = self.vertices()?;
        if verts.is_empty() {
            return Err(GeomError::EmptyPolytope);
        }
        let mapped: Vec<Vec<f64>> = verts
            .iter()
            .map(|v| {
                let y = m * DVector::from_column_slice(v) + DVector::from_column_slice(c);
                y.as_slice().to_vec()
            })
            .collect();
        hull_of_points(self.dim, &mapped)
    }

    fn check_map(&self, m: &DMatrix<f64>, c: &[f64]) -> Result<(), GeomError> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                got: m.nrows(),
            });
        }
        if c.len() != self.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                got: c.len(),
            });
        }
        Ok(())
    }

    /// Enumerates vertices by solving each `dim`-subset of tight constraints,
    /// in lexicographic subset order with 1e-8 dedup. Only meaningful on
    /// bounded polytopes.
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>, GeomError> {
        let e = self.dim;
        let rows: Vec<&Halfspace> = self
            .halfspaces
            .iter()
            .filter(|h| !h.is_zero_normal())
            .collect();
        let m = rows.len();
        if m < e {
            return Ok(Vec::new());
        }
        let mut verts: Vec<Vec<f64>> = Vec::new();
        let mut idx: Vec<usize> = (0..e).collect();
        loop {
            let mut a = DMatrix::zeros(e, e);
            let mut b = DVector::zeros(e);
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..e {
                    a[(r, j)] = rows[i].normal[j];
                }
                b[r] = rows[i].offset;
            }
            let lu = a.full_piv_lu();
            if lu.determinant().abs() > 1e-10 {
                if let Some(x) = lu.solve(&b) {
                    let xv = x.as_slice().to_vec();
                    if self.contains(&xv, 1e-7)
                        && !verts.iter().any(|v| linf(v, &xv) <= 1e-8)
                    {
                        verts.push(xv);
                    }
                }
            }
            // next combination
            let mut k = e;
            let mut done = false;
            loop {
                if k == 0 {
                    done = true;
                    break;
                }
                k -= 1;
                if idx[k] != k + m - e {
                    idx[k] += 1;
                    for j in k + 1..e {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
            if done {
                return Ok(sort_points(verts));
            }
        }
    }

    /// Exact Lebesgue volume by recursive facet decomposition. Intended for
    /// the small dimensions this crate works in; degenerate polytopes report
    /// zero volume.
    pub fn volume(&self) -> Result<f64, GeomError> {
        if self.is_empty()? {
            return Ok(0.0);
        }
        let canon = self.canonicalize()?;
        volume_rec(&canon)
    }
}

pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn sort_points(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b) {
            match x.partial_cmp(y).unwrap() {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        std::cmp::Ordering::Equal
    });
    pts
}

/// Orthonormal basis of the hyperplane with unit normal `n`, completed by
/// Gram-Schmidt over the standard basis. Deterministic.
fn hyperplane_basis(n: &[f64]) -> Vec<Vec<f64>> {
    let e = n.len();
    let mut basis: Vec<Vec<f64>> = vec![n.to_vec()];
    for i in 0..e {
        if basis.len() == e {
            break;
        }
        let mut v = vec![0.0; e];
        v[i] = 1.0;
        for b in &basis {
            let d: f64 = b.iter().zip(&v).map(|(a, c)| a * c).sum();
            for (vj, bj) in v.iter_mut().zip(b) {
                *vj -= d * bj;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            basis.push(v);
        }
    }
    basis.remove(0);
    basis
}

fn volume_rec(p: &Polytope) -> Result<f64, GeomError> {
    let e = p.dim;
    if e == 1 {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for h in &p.halfspaces {
            let n = h.normal[0];
            if n > 1e-12 {
                hi = hi.min(h.offset / n);
            } else if n < -1e-12 {
                lo = lo.max(h.offset / n);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(GeomError::Unbounded);
        }
        return Ok((hi - lo).max(0.0));
    }
    let verts = p.vertices()?;
    if verts.len() <= e {
        return Ok(0.0);
    }
    let mut x0 = vec![0.0; e];
    for v in &verts {
        for (a, b) in x0.iter_mut().zip(v) {
            *a += b / verts.len() as f64;
        }
    }
    let mut total = 0.0;
    for (hi_idx, h) in p.halfspaces.iter().enumerate() {
        if h.is_zero_normal() {
            continue;
        }
        // facet polytope in hyperplane coordinates
        let basis = hyperplane_basis(&h.normal);
        let m0: Vec<f64> = h.normal.iter().map(|n| n * h.offset).collect();
        let mut sub = Polytope::whole(e - 1);
        for (gi, g) in p.halfspaces.iter().enumerate() {
            if gi == hi_idx || g.is_zero_normal() {
                continue;
            }
            let an: Vec<f64> = basis
                .iter()
                .map(|b| b.iter().zip(&g.normal).map(|(x, y)| x * y).sum())
                .collect();
            let shift: f64 = g.normal.iter().zip(&m0).map(|(x, y)| x * y).sum();
            let mag = an.iter().map(|x| x * x).sum::<f64>().sqrt();
            if mag < 1e-10 {
                continue;
            }
            sub.push(an, g.offset - shift);
        }
        if sub.is_empty()? {
            continue;
        }
        let base = volume_rec(&sub.canonicalize()?)?;
        let height = h.offset - h.normal.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>();
        total += base * height / e as f64;
    }
    Ok(total.max(0.0))
}

/// H-representation of the convex hull of a point set, via its affine hull.
/// Supports intrinsic dimension 0, 1 and 2; full-rank hulls never reach this
/// path (invertible maps use substitution).
fn hull_of_points(dim: usize, pts: &[Vec<f64>]) -> Result<Polytope, GeomError> {
    let n = pts.len();
    let mut m0 = vec![0.0; dim];
    for p in pts {
        for (a, b) in m0.iter_mut().zip(p) {
            *a += b / n as f64;
        }
    }
    // orthonormal basis of the affine hull (Gram-Schmidt over the points)
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for p in pts {
        let mut v: Vec<f64> = p.iter().zip(&m0).map(|(a, b)| a - b).collect();
        for b in &basis {
            let d: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
            for (vj, bj) in v.iter_mut().zip(b) {
                *vj -= d * bj;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            basis.push(v);
        }
    }
    let k = basis.len();
    if k > 2 {
        return Err(GeomError::UnsupportedImageRank(k));
    }
    let mut hs: Vec<Halfspace> = Vec::new();
    // pin the orthogonal complement with equality pairs
    let mut full = basis.clone();
    for i in 0..dim {
        if full.len() == dim {
            break;
        }
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        for b in &full {
            let d: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
            for (vj, bj) in v.iter_mut().zip(b) {
                *vj -= d * bj;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            let off: f64 = v.iter().zip(&m0).map(|(x, y)| x * y).sum();
            hs.push(Halfspace::new(v.clone(), off));
            hs.push(Halfspace::new(v.iter().map(|x| -x).collect(), -off));
            full.push(v);
        }
    }
    match k {
        0 => {}
        1 => {
            let u = &basis[0];
            let ts: Vec<f64> = pts
                .iter()
                .map(|p| {
                    u.iter()
                        .zip(p.iter().zip(&m0))
                        .map(|(b, (x, y))| b * (x - y))
                        .sum()
                })
                .collect();
            let tmin = ts.iter().cloned().fold(f64::INFINITY, f64::min);
            let tmax = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let base: f64 = u.iter().zip(&m0).map(|(x, y)| x * y).sum();
            hs.push(Halfspace::new(u.clone(), base + tmax));
            hs.push(Halfspace::new(u.iter().map(|x| -x).collect(), -(base + tmin)));
        }
        2 => {
            let coords: Vec<[f64; 2]> = pts
                .iter()
                .map(|p| {
                    let d: Vec<f64> = p.iter().zip(&m0).map(|(x, y)| x - y).collect();
                    [
                        basis[0].iter().zip(&d).map(|(x, y)| x * y).sum(),
                        basis[1].iter().zip(&d).map(|(x, y)| x * y).sum(),
                    ]
                })
                .collect();
            for (a, b) in hull_edges_2d(&coords) {
                // counter-clockwise edge (a -> b): outward normal (dy, -dx)
                let nx = coords[b][1] - coords[a][1];
                let ny = coords[a][0] - coords[b][0];
                let norm = (nx * nx + ny * ny).sqrt();
                if norm < 1e-12 {
                    continue;
                }
                let (nx, ny) = (nx / norm, ny / norm);
                let off2 = nx * coords[a][0] + ny * coords[a][1];
                let normal: Vec<f64> = (0..dim)
                    .map(|j| nx * basis[0][j] + ny * basis[1][j])
                    .collect();
                let shift: f64 = normal.iter().zip(&m0).map(|(x, y)| x * y).sum();
                hs.push(Halfspace::new(normal, off2 + shift));
            }
        }
        _ => unreachable!(),
    }
    Ok(Polytope {
        dim,
        halfspaces: hs,
    })
}

/// Convex hull edges of a 2-D point set (monotone chain), as index pairs in
/// counter-clockwise order.
fn hull_edges_2d(pts: &[[f64; 2]]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| {
        pts[a]
            .partial_cmp(&pts[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order.dedup_by(|&mut a, &mut b| {
        (pts[a][0] - pts[b][0]).abs() < 1e-12 && (pts[a][1] - pts[b][1]).abs() < 1e-12
    });
    let cross = |o: usize, a: usize, b: usize| -> f64 {
        (pts[a][0] - pts[o][0]) * (pts[b][1] - pts[o][1])
            - (pts[a][1] - pts[o][1]) * (pts[b][0] - pts[o][0])
    };
    if order.len() < 3 {
        if order.len() == 2 {
            return vec![(order[0], order[1]), (order[1], order[0])];
        }
        return Vec::new();
    }
    let mut lower: Vec<usize> = Vec::new();
    for &i in &order {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], i) <= 1e-12
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in order.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], i) <= 1e-12
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    let mut edges = Vec::with_capacity(lower.len());
    for w in 0..lower.len() {
        edges.push((lower[w], lower[(w + 1) % lower.len()]));
    }
    edges
}

/// One region of a finite connected partition: an agent state paired with a
/// full-dimensional cell of the environment space.
#[derive(Debug, Clone)]
pub struct FcpRegion {
    pub agent_state: usize,
    pub cell: Polytope,
}

/// Finite connected partition: per agent state, disjoint cells covering the
/// compatible part of the environment box. Region order is canonical
/// (sorted by agent state, creation order within).
#[derive(Debug, Clone, Default)]
pub struct Fcp {
    pub regions: Vec<FcpRegion>,
}

impl Fcp {
    pub fn new(mut regions: Vec<FcpRegion>) -> Self {
        regions.sort_by_key(|r| r.agent_state);
        Fcp { regions }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// First region (in canonical order) whose cell contains `x` under the
    /// given agent state; boundary ties go to the earlier region.
    pub fn find(&self, agent_state: usize, x: &[f64], tol: f64) -> Option<usize> {
        self.regions
            .iter()
            .position(|r| r.agent_state == agent_state && r.cell.contains(x, tol))
    }

    /// Common refinement: every output region is a non-empty full-dimensional
    /// intersection of one region of `self` and one of `other` with matching
    /// agent state.
    pub fn refine(&self, other: &Fcp) -> Result<Fcp, GeomError> {
        let mut out = Vec::new();
        for ra in &self.regions {
            for rb in &other.regions {
                if ra.agent_state != rb.agent_state {
                    continue;
                }
                if let Some(cell) = ra.cell.intersect(&rb.cell)? {
                    if cell.chebyshev()?.1 > GEOM_TOL {
                        out.push(FcpRegion {
                            agent_state: ra.agent_state,
                            cell,
                        });
                    }
                }
            }
        }
        Ok(Fcp::new(out))
    }

    pub fn agent_states(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.regions.iter().map(|r| r.agent_state).collect();
        s.dedup();
        s
    }
}

/// Partition sanity: cells pairwise interior-disjoint within each group and
/// group volumes summing to the group domain volume. Returns human-readable
/// violations (empty = valid). `groups` maps a label to region indices and
/// the polytope those cells must cover.
pub fn check_partition(
    fcp: &Fcp,
    groups: &[(String, Vec<usize>, Polytope)],
    vol_rel_tol: f64,
) -> Result<Vec<String>, GeomError> {
    let mut violations = Vec::new();
    for (label, idxs, domain) in groups {
        for (a, &i) in idxs.iter().enumerate() {
            for &j in idxs.iter().skip(a + 1) {
                if let Some(inter) = fcp.regions[i].cell.intersect(&fcp.regions[j].cell)? {
                    if inter.chebyshev()?.1 > 1e-7 {
                        violations.push(format!(
                            "group {label}: regions {i} and {j} overlap with interior"
                        ));
                    }
                }
            }
        }
        let dom_vol = domain.volume()?;
        let mut cover = 0.0;
        for &i in idxs {
            cover += fcp.regions[i].cell.volume()?;
        }
        if dom_vol > 0.0 && ((cover - dom_vol) / dom_vol).abs() > vol_rel_tol {
            violations.push(format!(
                "group {label}: cells cover volume {cover:.12} of domain {dom_vol:.12}"
            ));
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(d: usize) -> Polytope {
        Polytope::from_box(&vec![[0.0, 1.0]; d])
    }

    #[test]
    fn box_intersection() {
        let a = unit_box(2);
        let b = Polytope::from_box(&[[0.5, 1.5], [0.5, 1.5]]);
        let c = a.intersect(&b).unwrap().unwrap();
        assert!(c.contains(&[0.75, 0.75], 0.0));
        assert!(!c.contains(&[0.25, 0.75], 1e-9));
        let (center, r) = c.chebyshev().unwrap();
        assert!((center[0] - 0.75).abs() < 1e-9 && (center[1] - 0.75).abs() < 1e-9);
        assert!((r - 0.25).abs() < 1e-9);
    }

    #[test]
    fn disjoint_boxes_empty() {
        let a = unit_box(2);
        let b = Polytope::from_box(&[[2.0, 3.0], [2.0, 3.0]]);
        assert!(a.intersect(&b).unwrap().is_none());
    }

    #[test]
    fn self_intersection_same_point_set() {
        let a = unit_box(2);
        let c = a.intersect(&a).unwrap().unwrap();
        for p in [[0.0, 0.0], [1.0, 1.0], [0.3, 0.9]] {
            assert_eq!(a.contains(&p, 1e-9), c.contains(&p, 1e-9));
        }
        assert!(!c.contains(&[1.0 + 1e-6, 0.5], 1e-9));
    }

    #[test]
    fn contains_with_tolerance() {
        let b = unit_box(2);
        assert!(b.contains(&[0.5, 0.5], 0.0));
        assert!(b.contains(&[1.0 + 1e-12, 0.5], 1e-9));
        assert!(!b.contains(&[2.0, 0.0], 1e-9));
    }

    #[test]
    fn chebyshev_unit_box() {
        let c = unit_box(2).interior_point().unwrap();
        assert!((c[0] - 0.5).abs() < 1e-9 && (c[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn chebyshev_triangle_incenter() {
        // x>=0, y>=0, x+y<=1: inscribed radius r = (2 - sqrt 2) / 2, center (r, r)
        let mut t = Polytope::whole(2);
        t.push(vec![-1.0, 0.0], 0.0);
        t.push(vec![0.0, -1.0], 0.0);
        t.push(vec![1.0, 1.0], 1.0);
        let (c, r) = t.chebyshev().unwrap();
        let expect = (2.0 - 2.0f64.sqrt()) / 2.0;
        assert!((r - expect).abs() < 1e-9, "r={r} expect={expect}");
        assert!((c[0] - expect).abs() < 1e-9 && (c[1] - expect).abs() < 1e-9);
    }

    #[test]
    fn empty_interior_point_errors() {
        let mut p = unit_box(1);
        p.push(vec![1.0], -1.0); // x <= -1 contradicts x >= 0
        assert!(matches!(p.interior_point(), Err(GeomError::EmptyPolytope)));
    }

    #[test]
    fn preimage_translation() {
        // preimage of {y <= 1} under y -> y + 2 is {y <= -1}
        let mut p = Polytope::whole(1);
        p.push(vec![1.0], 1.0);
        let m = DMatrix::identity(1, 1);
        let pre = p.affine_preimage(&m, &[2.0]).unwrap();
        assert!(pre.contains(&[-1.0], 1e-9));
        assert!(!pre.contains(&[-0.5], 1e-9));
    }

    #[test]
    fn preimage_zero_map_inside() {
        let b = unit_box(2);
        let m = DMatrix::zeros(2, 2);
        let pre = b.affine_preimage(&m, &[0.5, 0.5]).unwrap();
        assert!(pre.halfspaces.is_empty());
        assert!(pre.contains(&[123.0, -55.0], 0.0));
    }

    #[test]
    fn image_identity_and_translation() {
        let b = unit_box(2);
        let id = DMatrix::identity(2, 2);
        let img = b.affine_image(&id, &[0.0, 0.0]).unwrap();
        assert!(img.contains(&[0.5, 0.5], 0.0) && !img.contains(&[1.5, 0.5], 1e-9));
        let tr = b.affine_image(&id, &[1.0, 0.0]).unwrap();
        assert!(tr.contains(&[1.5, 0.5], 0.0));
        assert!(!tr.contains(&[0.5, 0.5], 1e-9));
        assert!((tr.volume().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn image_singular_projection_is_segment() {
        // M = [[1,0],[0,0]] maps the unit box to the segment y=0, x in [0,1]
        let b = unit_box(2);
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 1.0;
        let img = b.affine_image(&m, &[0.0, 0.0]).unwrap();
        assert!(img.contains(&[0.5, 0.0], 1e-9));
        assert!(img.contains(&[0.0, 0.0], 1e-7));
        assert!(img.contains(&[1.0, 0.0], 1e-7));
        assert!(!img.contains(&[0.5, 0.1], 1e-9));
        assert!(!img.contains(&[1.2, 0.0], 1e-9));
        assert!(img.is_degenerate().unwrap());
    }

    #[test]
    fn image_preimage_roundtrip_contains_source() {
        let b = unit_box(2);
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 0.5;
        m[(0, 1)] = 0.25;
        m[(1, 1)] = 2.0;
        let c = [0.3, -0.7];
        let img = b.affine_image(&m, &c).unwrap();
        let pre = img.affine_preimage(&m, &c).unwrap();
        let mut x = 0.05;
        while x < 1.0 {
            let mut y = 0.05;
            while y < 1.0 {
                assert!(pre.contains(&[x, y], 1e-7), "lost ({x},{y})");
                y += 0.1;
            }
            x += 0.1;
        }
    }

    #[test]
    fn volume_box_triangle_4d() {
        assert!((unit_box(2).volume().unwrap() - 1.0).abs() < 1e-9);
        assert!((unit_box(4).volume().unwrap() - 1.0).abs() < 1e-9);
        let scaled = Polytope::from_box(&[[0.0, 2.0], [0.0, 3.0], [1.0, 1.5]]);
        assert!((scaled.volume().unwrap() - 3.0).abs() < 1e-9);
        let mut t = Polytope::whole(2);
        t.push(vec![-1.0, 0.0], 0.0);
        t.push(vec![0.0, -1.0], 0.0);
        t.push(vec![1.0, 1.0], 1.0);
        assert!((t.volume().unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn canonicalize_drops_redundant() {
        let mut p = unit_box(2);
        p.push(vec![1.0, 0.0], 5.0); // dominated by x <= 1
        p.push(vec![1.0, 1.0], 10.0);
        let c = p.canonicalize().unwrap();
        assert_eq!(c.halfspaces.len(), 4);
    }

    #[test]
    fn vertices_unit_box() {
        let v = unit_box(2).vertices().unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v[0], vec![0.0, 0.0]);
        assert_eq!(v[3], vec![1.0, 1.0]);
    }

    fn split_fcp_vertical() -> Fcp {
        let left = Polytope::from_box(&[[0.0, 0.5], [0.0, 1.0]]);
        let right = Polytope::from_box(&[[0.5, 1.0], [0.0, 1.0]]);
        Fcp::new(vec![
            FcpRegion {
                agent_state: 0,
                cell: left,
            },
            FcpRegion {
                agent_state: 0,
                cell: right,
            },
        ])
    }

    fn split_fcp_horizontal() -> Fcp {
        let bot = Polytope::from_box(&[[0.0, 1.0], [0.0, 0.5]]);
        let top = Polytope::from_box(&[[0.0, 1.0], [0.5, 1.0]]);
        Fcp::new(vec![
            FcpRegion {
                agent_state: 0,
                cell: bot,
            },
            FcpRegion {
                agent_state: 0,
                cell: top,
            },
        ])
    }

    #[test]
    fn refine_grid_product() {
        let r = split_fcp_vertical()
            .refine(&split_fcp_horizontal())
            .unwrap();
        assert_eq!(r.len(), 4);
        let groups = vec![("s0".to_string(), vec![0, 1, 2, 3], unit_box(2))];
        assert!(check_partition(&r, &groups, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn refine_idempotent_and_identity() {
        let a = split_fcp_vertical();
        let aa = a.refine(&a).unwrap();
        assert_eq!(aa.len(), 2);
        let whole = Fcp::new(vec![FcpRegion {
            agent_state: 0,
            cell: unit_box(2),
        }]);
        let aw = a.refine(&whole).unwrap();
        assert_eq!(aw.len(), 2);
        for (ra, rb) in a.regions.iter().zip(&aw.regions) {
            let (ca, _) = ra.cell.chebyshev().unwrap();
            let (cb, _) = rb.cell.chebyshev().unwrap();
            assert!(linf(&ca, &cb) < 1e-9);
        }
    }

    #[test]
    fn fcp_find_first_match_on_boundary() {
        let f = split_fcp_vertical();
        // 0.5 lies on both closed cells; the first in canonical order wins
        assert_eq!(f.find(0, &[0.5, 0.3], 1e-9), Some(0));
    }

    #[test]
    fn halfspace_serde_roundtrip() {
        let h = Halfspace::new(vec![3.0, 4.0], 10.0);
        let js = serde_json::to_string(&h).unwrap();
        let back: Halfspace = serde_json::from_str(&js).unwrap();
        assert!((back.normal[0] - 0.6).abs() < 1e-12);
        assert!((back.offset - 2.0).abs() < 1e-12);
    }
}
