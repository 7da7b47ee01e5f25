//! Linear foliations of `T^d` with rational leaf direction, together with
//! the two degenerate foliations (by points, and by the single leaf `T^d`).
//!
//! A linear foliation is spanned by `c` primitive integer vectors. Its leaves
//! are compact subtori, and the integer covectors annihilating the leaf
//! direction give transverse coordinates `x -> W x mod 1` whose fibres are
//! exactly the leaves.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::lattice::{self, canonical_sign, column_reduce, is_primitive, unimodular_inverse};
use crate::torus::{centered, TorusPoint};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoliationKind {
    Points,
    Linear,
    WholeManifold,
}

/// Foliation block of a scenario config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoliationSpec {
    pub kind: FoliationKind,
    #[serde(default)]
    pub directions: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuotientPoint(pub Vec<f64>);

#[derive(Debug, Clone)]
pub struct LinearFoliation {
    kind: FoliationKind,
    dim: usize,
    directions: Vec<Vec<i64>>,
    /// Integer covectors `w` with `w . v = 0` for every leaf direction `v`.
    transverse: Vec<Vec<i64>>,
    /// Integer vectors `r_i` with `w_j . r_i = delta_ij`.
    right_inverse: Vec<Vec<i64>>,
    /// Orthonormal basis of the leaf direction.
    ortho: Vec<[f64; MAX_DIM]>,
    /// Reduced basis of the leaf lattice `V ∩ Z^d`.
    leaf_lattice: Vec<[f64; MAX_DIM]>,
    leaf_gram_inv: Vec<Vec<f64>>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn idot(w: &[i64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(&a, b)| a as f64 * b).sum()
}

fn to_arr(v: &[f64]) -> [f64; MAX_DIM] {
    let mut a = [0.0; MAX_DIM];
    a[..v.len()].copy_from_slice(v);
    a
}

fn gram_schmidt(vectors: &[Vec<f64>], d: usize) -> Vec<[f64; MAX_DIM]> {
    let mut out: Vec<[f64; MAX_DIM]> = Vec::new();
    for v in vectors {
        let mut u = to_arr(v);
        for e in &out {
            let c = dot(&u[..d], &e[..d]);
            for i in 0..d {
                u[i] -= c * e[i];
            }
        }
        let n = dot(&u[..d], &u[..d]).sqrt();
        for x in u.iter_mut() {
            *x /= n;
        }
        out.push(u);
    }
    out
}

/// Lagrange-Gauss reduction for a rank-2 lattice; other ranks unchanged.
fn reduce_lattice(mut basis: Vec<[f64; MAX_DIM]>, d: usize) -> Vec<[f64; MAX_DIM]> {
    if basis.len() != 2 {
        return basis;
    }
    loop {
        let n0 = dot(&basis[0][..d], &basis[0][..d]);
        let n1 = dot(&basis[1][..d], &basis[1][..d]);
        if n1 < n0 {
            basis.swap(0, 1);
            continue;
        }
        let mu = (dot(&basis[0][..d], &basis[1][..d]) / n0).round();
        if mu == 0.0 {
            return basis;
        }
        let b0 = basis[0];
        for i in 0..d {
            basis[1][i] -= mu * b0[i];
        }
        if dot(&basis[1][..d], &basis[1][..d]) >= n0 {
            return basis;
        }
    }
}

impl LinearFoliation {
    /// Foliation by points of `T^d`.
    pub fn points(dim: usize) -> Result<Self> {
        Self::build(FoliationKind::Points, dim, Vec::new())
    }

    /// Foliation whose only leaf is `T^d`.
    pub fn whole_manifold(dim: usize) -> Result<Self> {
        Self::build(FoliationKind::WholeManifold, dim, lattice::identity(dim))
    }

    /// Linear foliation spanned by primitive integer directions.
    pub fn linear(dim: usize, directions: Vec<Vec<i64>>) -> Result<Self> {
        if directions.is_empty() {
            return Err(FsError::InvalidInput(
                "linear foliation needs at least one direction".into(),
            ));
        }
        for v in &directions {
            if v.len() != dim {
                return Err(FsError::InvalidInput(format!(
                    "direction {v:?} does not have length {dim}"
                )));
            }
            if !is_primitive(v) {
                return Err(FsError::InvalidInput(format!(
                    "direction {v:?} is not a primitive integer vector"
                )));
            }
        }
        Self::build(FoliationKind::Linear, dim, directions)
    }

    pub fn from_spec(spec: &FoliationSpec, dim: usize) -> Result<Self> {
        match spec.kind {
            FoliationKind::Points => Self::points(dim),
            FoliationKind::WholeManifold => Self::whole_manifold(dim),
            FoliationKind::Linear => Self::linear(dim, spec.directions.clone()),
        }
    }

    pub fn spec(&self) -> FoliationSpec {
        FoliationSpec {
            kind: self.kind,
            directions: match self.kind {
                FoliationKind::Linear => self.directions.clone(),
                _ => Vec::new(),
            },
        }
    }

    fn build(kind: FoliationKind, dim: usize, directions: Vec<Vec<i64>>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(FsError::InvalidInput(format!(
                "dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        let c = directions.len();
        let (rank, u_cols) = column_reduce(&directions, dim);
        if rank != c {
            return Err(FsError::InvalidInput(
                "foliation directions are linearly dependent".into(),
            ));
        }
        // U as a row-major matrix, U[i][j] = u_cols[j][i]
        let u_mat = lattice::transpose(&u_cols, dim);
        let u_inv = unimodular_inverse(&u_mat).expect("column reduction is unimodular");
        let mut transverse = Vec::with_capacity(dim - c);
        let mut right_inverse = Vec::with_capacity(dim - c);
        for i in c..dim {
            let mut w = u_cols[i].clone();
            let mut r = u_inv[i].clone();
            if canonical_sign(&mut w) {
                r.iter_mut().for_each(|x| *x = -*x);
            }
            transverse.push(w);
            right_inverse.push(r);
        }
        if !transverse.is_empty() {
            // canonical basis W' = T W of the same lattice, R' = R T^-1
            let hnf = lattice::row_hnf(&transverse, dim);
            let t = lattice::mat_mul(&hnf, &lattice::transpose(&right_inverse, dim));
            let t_inv = unimodular_inverse(&t).expect("change of lattice basis is unimodular");
            let r_new = lattice::mat_mul(&lattice::transpose(&right_inverse, dim), &t_inv);
            right_inverse = lattice::transpose(&r_new, transverse.len());
            transverse = hnf;
        }
        let (lrank, l_cols) = column_reduce(&transverse, dim);
        let lat: Vec<[f64; MAX_DIM]> = l_cols[lrank..]
            .iter()
            .map(|v| to_arr(&v.iter().map(|&x| x as f64).collect::<Vec<_>>()))
            .collect();
        let leaf_lattice = reduce_lattice(lat, dim);
        let ortho = gram_schmidt(
            &directions
                .iter()
                .map(|v| v.iter().map(|&x| x as f64).collect())
                .collect::<Vec<_>>(),
            dim,
        );
        let leaf_gram_inv = if leaf_lattice.is_empty() {
            Vec::new()
        } else {
            let k = leaf_lattice.len();
            let g = DMatrix::from_fn(k, k, |i, j| dot(&leaf_lattice[i][..dim], &leaf_lattice[j][..dim]));
            let gi = g.try_inverse().expect("lattice basis is independent");
            (0..k).map(|i| (0..k).map(|j| gi[(i, j)]).collect()).collect()
        };
        Ok(LinearFoliation {
            kind,
            dim,
            directions,
            transverse,
            right_inverse,
            ortho,
            leaf_lattice,
            leaf_gram_inv,
        })
    }

    pub fn kind(&self) -> FoliationKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Leaf dimension `c`.
    pub fn leaf_dim(&self) -> usize {
        self.ortho.len()
    }

    pub fn directions(&self) -> &[Vec<i64>] {
        &self.directions
    }

    pub fn transverse_basis(&self) -> &[Vec<i64>] {
        &self.transverse
    }

    pub fn right_inverse(&self) -> &[Vec<i64>] {
        &self.right_inverse
    }

    /// Orthonormal basis vectors of the leaf direction.
    pub fn tangent_basis(&self) -> Vec<Vec<f64>> {
        self.ortho.iter().map(|e| e[..self.dim].to_vec()).collect()
    }

    /// Operator norm of the transverse projection `W`.
    pub fn transverse_distortion(&self) -> f64 {
        if self.transverse.is_empty() {
            return 0.0;
        }
        let m = DMatrix::from_fn(self.transverse.len(), self.dim, |i, j| {
            self.transverse[i][j] as f64
        });
        m.singular_values().max()
    }

    /// Whether the leaves are compact subtori with a torus leaf space.
    pub fn is_quotientable(&self) -> bool {
        self.kind != FoliationKind::WholeManifold
    }

    /// Transverse and tangent coordinates of `x`.
    pub fn leaf_coords(&self, x: &TorusPoint) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_point(x)?;
        if self.kind == FoliationKind::WholeManifold {
            return Err(FsError::Unsupported(
                "leaf coordinates of the single-leaf foliation".into(),
            ));
        }
        let transverse = self
            .transverse
            .iter()
            .map(|w| crate::torus::wrap_scalar(idot(w, x.coords())))
            .collect();
        let tangent = self
            .ortho
            .iter()
            .map(|e| dot(&e[..self.dim], x.coords()))
            .collect();
        Ok((transverse, tangent))
    }

    pub fn quotient_project(&self, x: &TorusPoint) -> Result<QuotientPoint> {
        self.leaf_coords(x).map(|(t, _)| QuotientPoint(t))
    }

    fn check_point(&self, x: &TorusPoint) -> Result<()> {
        if x.dim() != self.dim {
            return Err(FsError::InvalidInput(format!(
                "point of dimension {} for a foliation of T^{}",
                x.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Squared transverse separation of two points (torus metric on the
    /// leaf space). Zero for the single-leaf foliation.
    #[inline]
    pub(crate) fn transverse_sep_sq(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut delta = [0.0; MAX_DIM];
        for i in 0..self.dim {
            delta[i] = centered(y[i] - x[i]);
        }
        self.transverse
            .iter()
            .map(|w| {
                let t = centered(idot(w, &delta[..self.dim]));
                t * t
            })
            .sum()
    }

    /// Transverse separation of `x` and `y`.
    pub fn transverse_separation(&self, x: &TorusPoint, y: &TorusPoint) -> f64 {
        self.transverse_sep_sq(x.coords(), y.coords()).sqrt()
    }

    pub fn same_leaf(&self, x: &TorusPoint, y: &TorusPoint, tol: f64) -> bool {
        self.same_leaf_raw(x.coords(), y.coords(), tol)
    }

    #[inline]
    pub(crate) fn same_leaf_raw(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        self.kind == FoliationKind::WholeManifold || self.transverse_sep_sq(x, y) <= tol * tol
    }

    #[inline]
    fn project_tangent(&self, a: &[f64; MAX_DIM]) -> [f64; MAX_DIM] {
        let mut p = [0.0; MAX_DIM];
        for e in &self.ortho {
            let c = dot(&e[..self.dim], &a[..self.dim]);
            for i in 0..self.dim {
                p[i] += c * e[i];
            }
        }
        p
    }

    /// Shortest in-leaf displacement `u` with `x + u = y` on the torus, if
    /// the points share a leaf within `tol`.
    pub(crate) fn in_leaf_displacement(&self, x: &[f64], y: &[f64], tol: f64) -> Option<[f64; MAX_DIM]> {
        if !self.same_leaf_raw(x, y, tol) {
            return None;
        }
        let d = self.dim;
        let mut delta = [0.0; MAX_DIM];
        for i in 0..d {
            delta[i] = centered(y[i] - x[i]);
        }
        // remove the integer transverse winding
        for (w, r) in self.transverse.iter().zip(&self.right_inverse) {
            let m = idot(w, &delta[..d]).round();
            for i in 0..d {
                delta[i] -= m * r[i] as f64;
            }
        }
        let mut u = self.project_tangent(&delta);
        let k = self.leaf_lattice.len();
        if k == 0 {
            return Some(u);
        }
        // centre u in the fundamental domain of the leaf lattice
        let rhs: Vec<f64> = self.leaf_lattice.iter().map(|b| dot(&b[..d], &u[..d])).collect();
        for i in 0..k {
            let coef: f64 = (0..k).map(|j| self.leaf_gram_inv[i][j] * rhs[j]).sum();
            let n = coef.round();
            for t in 0..d {
                u[t] -= n * self.leaf_lattice[i][t];
            }
        }
        let mut best = u;
        let mut best_norm = dot(&u[..d], &u[..d]);
        for code in 0..3usize.pow(k as u32) {
            let mut c = code;
            let mut cand = u;
            for b in &self.leaf_lattice {
                let n = (c % 3) as f64 - 1.0;
                c /= 3;
                for t in 0..d {
                    cand[t] += n * b[t];
                }
            }
            let nn = dot(&cand[..d], &cand[..d]);
            if nn < best_norm {
                best_norm = nn;
                best = cand;
            }
        }
        Some(best)
    }

    /// Intrinsic leaf distance; infinite when the points lie on different
    /// leaves (at tolerance `tol`).
    pub fn intrinsic_leaf_dist_tol(&self, x: &TorusPoint, y: &TorusPoint, tol: f64) -> f64 {
        match self.in_leaf_displacement(x.coords(), y.coords(), tol) {
            Some(u) => dot(&u[..self.dim], &u[..self.dim]).sqrt(),
            None => f64::INFINITY,
        }
    }

    pub fn intrinsic_leaf_dist(&self, x: &TorusPoint, y: &TorusPoint) -> f64 {
        self.intrinsic_leaf_dist_tol(x, y, crate::torus::TAU_GEOM)
    }

    /// Ambient distance from `y` to the plaque of radius `eps` at `center`
    /// together with the in-leaf offset `t` of the nearest plaque point
    /// `center + t`. Shifts are pruned against `cap` (pass infinity for the
    /// exact value; with a finite cap, results above the cap are only
    /// guaranteed to exceed it).
    #[inline]
    pub(crate) fn plaque_nearest_raw(
        &self,
        center: &[f64],
        eps: f64,
        y: &[f64],
        cap: f64,
    ) -> (f64, [f64; MAX_DIM]) {
        let d = self.dim;
        let reach = if self.ortho.is_empty() { 0.0 } else { eps };
        let mut a0 = [0.0; MAX_DIM];
        for i in 0..d {
            a0[i] = centered(y[i] - center[i]);
        }
        let eval = |a: &[f64; MAX_DIM]| -> (f64, [f64; MAX_DIM]) {
            let p = self.project_tangent(a);
            let pn = dot(&p[..d], &p[..d]).sqrt();
            let t = if pn <= eps {
                p
            } else {
                let s = eps / pn;
                let mut t = [0.0; MAX_DIM];
                for i in 0..d {
                    t[i] = p[i] * s;
                }
                t
            };
            let mut dist2 = 0.0;
            for i in 0..d {
                let r = a[i] - t[i];
                dist2 += r * r;
            }
            (dist2.sqrt(), t)
        };
        let mut best = eval(&a0);
        let bound = best.0.min(cap);
        let kmax = (reach + bound + 0.5).ceil() as i64;
        let mut ranges = [(0i64, 0i64); MAX_DIM];
        let mut trivial = true;
        for i in 0..d {
            let mut lo = 0;
            let mut hi = 0;
            for k in -kmax..=kmax {
                if (a0[i] + k as f64).abs() - reach <= bound {
                    lo = lo.min(k);
                    hi = hi.max(k);
                }
            }
            if lo != 0 || hi != 0 {
                trivial = false;
            }
            ranges[i] = (lo, hi);
        }
        if trivial {
            return best;
        }
        let mut k = [0i64; MAX_DIM];
        for i in 0..d {
            k[i] = ranges[i].0;
        }
        loop {
            if k[..d].iter().any(|&x| x != 0) {
                let mut a = a0;
                for i in 0..d {
                    a[i] += k[i] as f64;
                }
                let cand = eval(&a);
                if cand.0 < best.0 {
                    best = cand;
                }
            }
            // odometer increment
            let mut i = 0;
            loop {
                if i == d {
                    return best;
                }
                if k[i] < ranges[i].1 {
                    k[i] += 1;
                    break;
                }
                k[i] = ranges[i].0;
                i += 1;
            }
        }
    }

    #[inline]
    pub(crate) fn dist_to_plaque_raw(&self, center: &[f64], eps: f64, y: &[f64]) -> f64 {
        self.plaque_nearest_raw(center, eps, y, f64::INFINITY).0
    }

    /// Membership `y ∈ F_eps(center)` at tolerance `tol`.
    #[inline]
    pub(crate) fn in_plaque_raw(&self, center: &[f64], eps: f64, y: &[f64], tol: f64) -> bool {
        match self.in_leaf_displacement(center, y, tol) {
            Some(u) => dot(&u[..self.dim], &u[..self.dim]) <= (eps + tol) * (eps + tol),
            None => false,
        }
    }

    /// Per-axis extent of a unit plaque: `sqrt(sum_j e_j[i]^2)` over the
    /// orthonormal tangent basis.
    pub(crate) fn tangent_reach(&self) -> [f64; MAX_DIM] {
        let mut r = [0.0; MAX_DIM];
        for (i, ri) in r.iter_mut().enumerate().take(self.dim) {
            *ri = self.ortho.iter().map(|e| e[i] * e[i]).sum::<f64>().sqrt();
        }
        r
    }

    /// Defect of `y ∈ F_eps(center)`: the larger of the distance to the
    /// plaque and the in-leaf excess over `eps` (zero for members).
    pub(crate) fn membership_defect_raw(&self, center: &[f64], eps: f64, y: &[f64], tol: f64) -> f64 {
        let dist = self.dist_to_plaque_raw(center, eps, y);
        match self.in_leaf_displacement(center, y, tol) {
            Some(u) => dist.max(dot(&u[..self.dim], &u[..self.dim]).sqrt() - eps),
            None => dist,
        }
    }

    pub fn plaque(&self, center: TorusPoint, radius: f64) -> Result<Plaque<'_>> {
        self.check_point(&center)?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(FsError::InvalidInput(format!("plaque radius {radius}")));
        }
        Ok(Plaque {
            foliation: self,
            center,
            radius,
        })
    }

    /// The point of the leaf through `x` whose transverse coordinates are
    /// `q`; moves `x` by an integer combination of right-inverse vectors.
    pub fn move_to_leaf(&self, x: &TorusPoint, q: &[f64]) -> TorusPoint {
        let mut v = x.coords().to_vec();
        for ((w, r), &target) in self.transverse.iter().zip(&self.right_inverse).zip(q) {
            let shift = centered(target - idot(w, x.coords()));
            for i in 0..self.dim {
                v[i] += shift * r[i] as f64;
            }
        }
        TorusPoint::wrap_unchecked(&v)
    }
}

/// The closed `radius`-ball of `center` inside its leaf.
#[derive(Debug, Clone)]
pub struct Plaque<'a> {
    pub foliation: &'a LinearFoliation,
    pub center: TorusPoint,
    pub radius: f64,
}

impl Plaque<'_> {
    pub fn dist_to(&self, y: &TorusPoint) -> f64 {
        self.foliation
            .dist_to_plaque_raw(self.center.coords(), self.radius, y.coords())
    }

    pub fn contains(&self, y: &TorusPoint, tol: f64) -> bool {
        self.foliation
            .in_plaque_raw(self.center.coords(), self.radius, y.coords(), tol)
    }

    pub fn membership_defect(&self, y: &TorusPoint, tol: f64) -> f64 {
        self.foliation
            .membership_defect_raw(self.center.coords(), self.radius, y.coords(), tol)
    }

    /// Nearest point of the plaque to `y`.
    pub fn nearest_point(&self, y: &TorusPoint) -> TorusPoint {
        let (_, t) =
            self.foliation
                .plaque_nearest_raw(self.center.coords(), self.radius, y.coords(), f64::INFINITY);
        self.center.translate(&t[..self.foliation.dim])
    }
}
