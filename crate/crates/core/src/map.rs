//! Toral homeomorphisms `g(x) = h(M x + p(x)) mod 1`: an integer matrix `M`
//! with `|det M| = 1`, a trigonometric perturbation `p`, and an optional
//! post-composed bump map `h` used to move finitely many points.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::foliation::{FoliationKind, LinearFoliation, MAX_DIM};
use crate::grid::Grid;
use crate::lattice::{self, IMat};
use crate::torus::{centered, torus_dist_unchecked, wrap_scalar, TorusPoint};

pub const DEFAULT_TAU_INV: f64 = 1e-12;
pub const MAX_INVERSE_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Sin,
    Cos,
}

/// `coeff * trig(2π freq·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub freq: Vec<i64>,
    pub coeff: Vec<f64>,
    pub phase: Phase,
}

impl TrigTerm {
    fn lipschitz(&self) -> f64 {
        let fnorm = self.freq.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt();
        let cnorm = self.coeff.iter().map(|c| c * c).sum::<f64>().sqrt();
        TAU * fnorm * cnorm
    }

    #[inline]
    fn phase_arg(&self, x: &[f64]) -> f64 {
        TAU * self.freq.iter().zip(x).map(|(&k, c)| k as f64 * c).sum::<f64>()
    }
}

/// Map block of a scenario config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub matrix: Vec<Vec<i64>>,
    #[serde(default)]
    pub perturbation: Vec<TrigTerm>,
}

/// A smooth bump translating `site` by `displacement`, supported in the
/// open `radius`-ball around `site`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub site: Vec<f64>,
    pub displacement: Vec<f64>,
    pub radius: f64,
}

#[inline]
fn bump_profile(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

#[inline]
fn bump_profile_deriv(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        bump_profile(s) * (-2.0 * s / (q * q))
    }
}

/// `sup |φ'|` of the radial profile, sampled finely.
pub fn bump_gradient_bound() -> f64 {
    let m = 20_000;
    (0..m)
        .map(|i| bump_profile_deriv(i as f64 / m as f64).abs())
        .fold(0.0, f64::max)
        * 1.001
}

impl Bump {
    fn lipschitz(&self, grad: f64) -> f64 {
        let dn = self.displacement.iter().map(|c| c * c).sum::<f64>().sqrt();
        dn * grad / self.radius
    }

    #[inline]
    fn offset_and_weight(&self, z: &[f64], d: usize) -> Option<([f64; MAX_DIM], f64)> {
        let mut r = [0.0; MAX_DIM];
        let mut n2 = 0.0;
        for i in 0..d {
            r[i] = centered(z[i] - self.site[i]);
            n2 += r[i] * r[i];
        }
        if n2 >= self.radius * self.radius {
            return None;
        }
        Some((r, n2.sqrt() / self.radius))
    }
}

/// Pairs `(site, target)` of a finite point-moving request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementRequest {
    pub pairs: Vec<(TorusPoint, TorusPoint)>,
    pub separation: f64,
}

impl DisplacementRequest {
    pub fn new(pairs: Vec<(TorusPoint, TorusPoint)>) -> Result<Self> {
        let mut separation = f64::INFINITY;
        for i in 0..pairs.len() {
            for j in i + 1..pairs.len() {
                let s = torus_dist_unchecked(&pairs[i].0, &pairs[j].0);
                if s == 0.0 {
                    return Err(FsError::InvalidInput(format!("sites {i} and {j} coincide")));
                }
                separation = separation.min(s);
            }
        }
        for (i, (s, t)) in pairs.iter().enumerate() {
            if torus_dist_unchecked(s, t) >= separation / 2.0 {
                return Err(FsError::InvalidInput(format!(
                    "displacement of pair {i} is not below half the site separation"
                )));
            }
        }
        Ok(DisplacementRequest { pairs, separation })
    }
}

#[derive(Debug, Clone)]
pub struct ToralMap {
    dim: usize,
    matrix: IMat,
    inverse: IMat,
    perturbation: Vec<TrigTerm>,
    bumps: Vec<Bump>,
    lipschitz_bound: f64,
    bump_lipschitz: f64,
    matrix_norm: f64,
    tau_inv: f64,
}

fn op_norm(m: &IMat) -> f64 {
    let d = m.len();
    DMatrix::from_fn(d, d, |i, j| m[i][j] as f64)
        .singular_values()
        .max()
}

impl ToralMap {
    pub fn new(matrix: Vec<Vec<i64>>, perturbation: Vec<TrigTerm>) -> Result<Self> {
        let dim = matrix.len();
        if !(1..=MAX_DIM).contains(&dim) || matrix.iter().any(|r| r.len() != dim) {
            return Err(FsError::InvalidInput(format!(
                "matrix must be square with dimension in 1..={MAX_DIM}"
            )));
        }
        let inverse = lattice::unimodular_inverse(&matrix).ok_or_else(|| {
            FsError::InvalidInput(format!("matrix determinant {} is not ±1", lattice::det(&matrix)))
        })?;
        for t in &perturbation {
            if t.freq.len() != dim || t.coeff.len() != dim {
                return Err(FsError::InvalidInput(
                    "perturbation term of the wrong dimension".into(),
                ));
            }
            if t.coeff.iter().any(|c| !c.is_finite()) {
                return Err(FsError::InvalidInput(
                    "non-finite perturbation coefficient".into(),
                ));
            }
        }
        let lipschitz_bound: f64 = perturbation.iter().map(TrigTerm::lipschitz).sum();
        let inverse_norm = op_norm(&inverse);
        if lipschitz_bound * inverse_norm >= 1.0 {
            return Err(FsError::InvalidInput(format!(
                "perturbation Lipschitz bound {lipschitz_bound:.4} is not below 1/|M^-1| = {:.4}",
                1.0 / inverse_norm
            )));
        }
        Ok(ToralMap {
            dim,
            matrix_norm: op_norm(&matrix),
            matrix,
            inverse,
            perturbation,
            bumps: Vec::new(),
            lipschitz_bound,
            bump_lipschitz: 0.0,
            tau_inv: DEFAULT_TAU_INV,
        })
    }

    pub fn linear(matrix: Vec<Vec<i64>>) -> Result<Self> {
        Self::new(matrix, Vec::new())
    }

    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        Self::new(spec.matrix.clone(), spec.perturbation.clone())
    }

    pub fn spec(&self) -> MapSpec {
        MapSpec {
            matrix: self.matrix.clone(),
            perturbation: self.perturbation.clone(),
        }
    }

    pub fn with_tau_inv(mut self, tau: f64) -> Self {
        self.tau_inv = tau;
        self
    }

    /// Same map plus `extra` trigonometric terms.
    pub fn perturbed(&self, extra: Vec<TrigTerm>) -> Result<Self> {
        let mut terms = self.perturbation.clone();
        terms.extend(extra);
        let mut g = Self::new(self.matrix.clone(), terms)?;
        g.tau_inv = self.tau_inv;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &IMat {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &IMat {
        &self.inverse
    }

    pub fn perturbation(&self) -> &[TrigTerm] {
        &self.perturbation
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    pub fn is_linear(&self) -> bool {
        self.perturbation.is_empty() && self.bumps.is_empty()
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn tau_inv(&self) -> f64 {
        self.tau_inv
    }

    /// Lipschitz constant of the whole map on the universal cover.
    pub fn lipschitz(&self) -> f64 {
        (self.matrix_norm + self.lipschitz_bound) * (1.0 + self.bump_lipschitz)
    }

    /// Lipschitz constant of `x -> g(x) - M x` on the universal cover.
    fn nonlinear_lipschitz(&self) -> f64 {
        self.lipschitz_bound + self.bump_lipschitz * (self.matrix_norm + self.lipschitz_bound)
    }

    #[inline]
    fn trig_at(&self, x: &[f64], out: &mut [f64; MAX_DIM]) {
        for t in &self.perturbation {
            let arg = t.phase_arg(x);
            let s = match t.phase {
                Phase::Sin => arg.sin(),
                Phase::Cos => arg.cos(),
            };
            for i in 0..self.dim {
                out[i] += t.coeff[i] * s;
            }
        }
    }

    #[inline]
    fn bump_at(&self, z: &[f64], out: &mut [f64; MAX_DIM]) {
        for b in &self.bumps {
            if let Some((_, s)) = b.offset_and_weight(z, self.dim) {
                let w = bump_profile(s);
                for i in 0..self.dim {
                    out[i] += w * b.displacement[i];
                }
            }
        }
    }

    /// Unwrapped `M x + p(x)`.
    #[inline]
    fn base_lift(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let mut y = [0.0; MAX_DIM];
        for i in 0..self.dim {
            y[i] = self.matrix[i].iter().zip(x).map(|(&m, c)| m as f64 * c).sum();
        }
        self.trig_at(x, &mut y);
        y
    }

    #[inline]
    pub(crate) fn apply_raw(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let mut y = self.base_lift(x);
        for c in y.iter_mut().take(self.dim) {
            *c = wrap_scalar(*c);
        }
        if !self.bumps.is_empty() {
            let z = y;
            self.bump_at(&z, &mut y);
            for c in y.iter_mut().take(self.dim) {
                *c = wrap_scalar(*c);
            }
        }
        y
    }

    pub fn apply(&self, x: &TorusPoint) -> TorusPoint {
        debug_assert_eq!(x.dim(), self.dim);
        TorusPoint::wrap_unchecked(&self.apply_raw(x.coords())[..self.dim])
    }

    /// `g^n(x)` for `n >= 0`, or inverse iterates for `n < 0`.
    pub fn iterate(&self, x: &TorusPoint, n: i64) -> Result<TorusPoint> {
        let mut y = x.clone();
        if n >= 0 {
            for _ in 0..n {
                y = self.apply(&y);
            }
        } else {
            for _ in 0..(-n) {
                y = self.apply_inverse(&y)?;
            }
        }
        Ok(y)
    }

    fn max_change(a: &[f64; MAX_DIM], b: &[f64; MAX_DIM], d: usize) -> f64 {
        (0..d).map(|i| centered(a[i] - b[i]).abs()).fold(0.0, f64::max)
    }

    fn invert_bumps(&self, y: &[f64]) -> Result<[f64; MAX_DIM]> {
        let d = self.dim;
        let mut z = [0.0; MAX_DIM];
        z[..d].copy_from_slice(&y[..d]);
        if self.bumps.is_empty() {
            return Ok(z);
        }
        for _ in 0..MAX_INVERSE_ITERATIONS {
            let mut shift = [0.0; MAX_DIM];
            self.bump_at(&z, &mut shift);
            let mut next = [0.0; MAX_DIM];
            for i in 0..d {
                next[i] = wrap_scalar(y[i] - shift[i]);
            }
            let change = Self::max_change(&next, &z, d);
            z = next;
            if change <= 0.1 * self.tau_inv {
                return Ok(z);
            }
        }
        Err(FsError::InversionFailure {
            residual: f64::NAN,
            iterations: MAX_INVERSE_ITERATIONS,
        })
    }

    #[inline]
    fn inv_matrix_apply(&self, v: &[f64]) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.dim {
            x[i] = wrap_scalar(self.inverse[i].iter().zip(v).map(|(&m, c)| m as f64 * c).sum());
        }
        x
    }

    pub(crate) fn apply_inverse_raw(&self, y: &[f64]) -> Result<[f64; MAX_DIM]> {
        let d = self.dim;
        let z = self.invert_bumps(y)?;
        let mut x = self.inv_matrix_apply(&z[..d]);
        if !self.perturbation.is_empty() {
            let mut converged = false;
            for _ in 0..MAX_INVERSE_ITERATIONS {
                let mut p = [0.0; MAX_DIM];
                self.trig_at(&x[..d], &mut p);
                let mut v = [0.0; MAX_DIM];
                for i in 0..d {
                    v[i] = z[i] - p[i];
                }
                let next = self.inv_matrix_apply(&v[..d]);
                let change = Self::max_change(&next, &x, d);
                x = next;
                if change <= 0.1 * self.tau_inv {
                    converged = true;
                    break;
                }
            }
            if !converged {
                let back = self.apply_raw(&x[..d]);
                let residual = (0..d)
                    .map(|i| centered(back[i] - y[i]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                return Err(FsError::InversionFailure {
                    residual,
                    iterations: MAX_INVERSE_ITERATIONS,
                });
            }
        }
        Ok(x)
    }

    pub fn apply_inverse(&self, y: &TorusPoint) -> Result<TorusPoint> {
        debug_assert_eq!(y.dim(), self.dim);
        self.apply_inverse_raw(y.coords())
            .map(|x| TorusPoint::wrap_unchecked(&x[..self.dim]))
    }

    /// Derivative of the lifted map at `x`.
    pub fn jacobian(&self, x: &TorusPoint) -> DMatrix<f64> {
        let d = self.dim;
        let xs = x.coords();
        let mut j = DMatrix::from_fn(d, d, |r, c| self.matrix[r][c] as f64);
        for t in &self.perturbation {
            let arg = t.phase_arg(xs);
            let ds = match t.phase {
                Phase::Sin => arg.cos(),
                Phase::Cos => -arg.sin(),
            };
            for r in 0..d {
                for c in 0..d {
                    j[(r, c)] += t.coeff[r] * ds * TAU * t.freq[c] as f64;
                }
            }
        }
        if self.bumps.is_empty() {
            return j;
        }
        let raw = self.base_lift(xs);
        let z: Vec<f64> = raw[..d].iter().map(|&c| wrap_scalar(c)).collect();
        let mut dh = DMatrix::<f64>::identity(d, d);
        for b in &self.bumps {
            if let Some((off, s)) = b.offset_and_weight(&z, d) {
                let rn = s * b.radius;
                if rn > 0.0 {
                    let dphi = bump_profile_deriv(s) / b.radius;
                    for r in 0..d {
                        for c in 0..d {
                            dh[(r, c)] += b.displacement[r] * dphi * off[c] / rn;
                        }
                    }
                }
            }
        }
        dh * j
    }
}

/// Bounds on `sup_x d(f(x), g(x))` from a grid scan: the maximum over cell
/// centers, and that value plus the Lipschitz constant of the difference
/// times the half cell diameter.
pub fn c0_distance(f: &ToralMap, g: &ToralMap, grid: &Grid) -> Result<(f64, f64)> {
    if f.dim != g.dim || grid.dim() != f.dim {
        return Err(FsError::InvalidInput("dimension mismatch".into()));
    }
    if f.matrix != g.matrix {
        return Err(FsError::Unsupported(
            "C0 distance between maps with different linear parts".into(),
        ));
    }
    let d = f.dim;
    let mut lower: f64 = 0.0;
    for idx in 0..grid.num_cells() {
        let c = grid.center_raw(idx);
        let a = f.apply_raw(&c[..d]);
        let b = g.apply_raw(&c[..d]);
        let dist = (0..d).map(|i| centered(a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
        lower = lower.max(dist);
    }
    let lip = f.nonlinear_lipschitz() + g.nonlinear_lipschitz();
    Ok((lower, lower + lip * grid.cell_diameter() / 2.0))
}

/// Result of [`build_perturbation`].
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub map: ToralMap,
    /// Analytic bound on `d_C0(f, g)`: bumps have disjoint supports and
    /// profile at most one, so the sup is the largest displacement.
    pub c0_bound: f64,
    pub bump_lipschitz: f64,
}

/// `g = h ∘ f` where `h` moves each requested site onto its target by a
/// smooth bump of the given radius and is the identity elsewhere.
pub fn build_perturbation(f: &ToralMap, req: &DisplacementRequest, radius: f64) -> Result<Perturbation> {
    if !(radius > 0.0 && radius < 0.5) {
        return Err(FsError::InvalidInput(format!(
            "bump radius {radius} outside (0, 1/2)"
        )));
    }
    let grad = bump_gradient_bound();
    let mut bumps = Vec::with_capacity(req.pairs.len());
    for (i, (s, t)) in req.pairs.iter().enumerate() {
        if s.dim() != f.dim || t.dim() != f.dim {
            return Err(FsError::InvalidInput("request dimension mismatch".into()));
        }
        for (j, (s2, _)) in req.pairs.iter().enumerate().skip(i + 1) {
            if torus_dist_unchecked(s, s2) < 2.0 * radius {
                return Err(FsError::SupportOverlap(i, j));
            }
        }
        let disp = s.displacement_to(t);
        let norm = disp.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm >= radius / 2.0 {
            return Err(FsError::InvalidInput(format!(
                "displacement {norm} of pair {i} is not below radius/2"
            )));
        }
        bumps.push(Bump {
            site: s.coords().to_vec(),
            displacement: disp,
            radius,
        });
    }
    let bump_lipschitz = bumps.iter().map(|b| b.lipschitz(grad)).fold(0.0, f64::max);
    if bump_lipschitz >= 1.0 {
        return Err(FsError::NotInvertible(bump_lipschitz));
    }
    let c0_bound = bumps
        .iter()
        .map(|b| b.displacement.iter().map(|c| c * c).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut map = f.clone();
    map.bumps.extend(bumps);
    map.bump_lipschitz = map.bump_lipschitz.max(bump_lipschitz);
    Ok(Perturbation {
        map,
        c0_bound,
        bump_lipschitz,
    })
}

/// The map induced on the leaf space `T^{d-c}` of a linear foliation.
pub fn induced_quotient_map(f: &ToralMap, fol: &LinearFoliation) -> Result<ToralMap> {
    if fol.dim() != f.dim {
        return Err(FsError::InvalidInput("dimension mismatch".into()));
    }
    match fol.kind() {
        FoliationKind::WholeManifold => {
            return Err(FsError::Unsupported(
                "the leaf space of the single-leaf foliation is a point".into(),
            ))
        }
        FoliationKind::Points => return Ok(f.clone()),
        FoliationKind::Linear => {}
    }
    let d = f.dim;
    let w = fol.transverse_basis();
    let r = fol.right_inverse();
    let k = w.len();
    if k == 0 {
        return Err(FsError::Unsupported("leaf space is a point".into()));
    }
    for v in fol.directions() {
        let mv = lattice::mat_vec(&f.matrix, v);
        if w.iter()
            .any(|wi| wi.iter().zip(&mv).map(|(a, b)| a * b).sum::<i64>() != 0)
        {
            let witness: Vec<f64> = v.iter().map(|&c| wrap_scalar(0.1 * c as f64)).collect();
            return Err(FsError::NotInvariant {
                reason: format!("matrix does not map leaf direction {v:?} into the leaf"),
                witness,
            });
        }
    }
    if !f.bumps.is_empty() {
        return Err(FsError::NotInvariant {
            reason: "bump perturbations do not preserve the foliation".into(),
            witness: f.bumps[0].site.clone(),
        });
    }
    // Q = W M R, checked against Q W = W M
    let r_cols = lattice::transpose(r, d);
    let wm = lattice::mat_mul(&w.to_vec(), &f.matrix);
    let q = lattice::mat_mul(&wm, &r_cols);
    if lattice::mat_mul(&q, &w.to_vec()) != wm {
        return Err(FsError::NotInvariant {
            reason: "linear part does not descend to the leaf space".into(),
            witness: vec![0.0; d],
        });
    }
    let mut terms = Vec::new();
    for t in &f.perturbation {
        let wc: Vec<f64> = w
            .iter()
            .map(|wi| wi.iter().zip(&t.coeff).map(|(&a, b)| a as f64 * b).sum())
            .collect();
        if wc.iter().all(|c| c.abs() < 1e-15) {
            continue;
        }
        let leaf_constant = fol
            .directions()
            .iter()
            .all(|v| v.iter().zip(&t.freq).map(|(a, b)| a * b).sum::<i64>() == 0);
        if !leaf_constant {
            let witness = perturbation_witness(f, fol).unwrap_or_else(|| vec![0.0; d]);
            return Err(FsError::NotInvariant {
                reason: format!(
                    "transverse part of perturbation term {:?} varies along leaves",
                    t.freq
                ),
                witness,
            });
        }
        // freq = W^T q_freq, with q_freq = R^T freq
        let qf: Vec<i64> = r
            .iter()
            .map(|ri| ri.iter().zip(&t.freq).map(|(a, b)| a * b).sum())
            .collect();
        terms.push(TrigTerm {
            freq: qf,
            coeff: wc,
            phase: t.phase,
        });
    }
    let mut qmap = ToralMap::new(q, terms)?;
    qmap.tau_inv = f.tau_inv;
    Ok(qmap)
}

/// A point whose leaf is not mapped into a single leaf.
fn perturbation_witness(f: &ToralMap, fol: &LinearFoliation) -> Option<Vec<f64>> {
    let dirs = fol.tangent_basis();
    let steps: usize = 16;
    for i in 0..steps.pow(f.dim as u32) {
        let mut rem = i;
        let x: Vec<f64> = (0..f.dim)
            .map(|_| {
                let c = (rem % steps) as f64 / steps as f64;
                rem /= steps;
                c
            })
            .collect();
        let xp = TorusPoint::wrap_unchecked(&x);
        let y: Vec<f64> = x.iter().zip(&dirs[0]).map(|(a, b)| a + 0.05 * b).collect();
        let yp = TorusPoint::wrap_unchecked(&y);
        if fol.transverse_separation(&f.apply(&xp), &f.apply(&yp)) > 1e-9 {
            return Some(x);
        }
    }
    None
}
