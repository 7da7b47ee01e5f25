//! Foliated shadowing by layered search over grid cells, periodized
//! shadowing of chain loops, and the exact shadow of a hyperbolic
//! automorphism.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::foliation::{LinearFoliation, MAX_DIM};
use crate::grid::Grid;
use crate::map::ToralMap;
use crate::orbit::Trajectory;
use crate::spectral::spectral_splitting;
use crate::torus::{centered, TorusPoint};

#[derive(Debug, Clone)]
pub struct ShadowProblem<'a> {
    pub map: &'a ToralMap,
    pub foliation: &'a LinearFoliation,
    pub target: &'a Trajectory,
    /// Offset bound `d(x_k, y_k) <= eps`.
    pub eps: f64,
    pub grid: Grid,
    /// Radius of the plaque around `y_{k+1}` in the step condition.
    pub plaque_radius: f64,
    /// Step condition `dist(f(y_k), plaque) <= step_bound`.
    pub step_bound: f64,
    /// Use the target points as candidates alongside the cell centers.
    pub include_target: bool,
}

impl<'a> ShadowProblem<'a> {
    /// Chain-form problem: plaque radius `eps`, step bound `eps + η`.
    pub fn new(
        map: &'a ToralMap,
        foliation: &'a LinearFoliation,
        target: &'a Trajectory,
        eps: f64,
        grid: Grid,
    ) -> Self {
        ShadowProblem {
            map,
            foliation,
            target,
            eps,
            grid,
            plaque_radius: eps,
            step_bound: eps + grid.cell_diameter(),
            include_target: true,
        }
    }

    pub fn with_step(mut self, plaque_radius: f64, step_bound: f64) -> Self {
        self.plaque_radius = plaque_radius;
        self.step_bound = step_bound;
        self
    }

    pub fn grid_only(mut self) -> Self {
        self.include_target = false;
        self
    }

    pub fn resolution_limited(&self) -> bool {
        self.eps <= self.grid.cell_diameter()
    }

    fn validate(&self) -> Result<()> {
        let d = self.target.dim();
        if self.map.dim() != d || self.foliation.dim() != d || self.grid.dim() != d {
            return Err(FsError::InvalidInput(
                "map, foliation, grid and target dimensions differ".into(),
            ));
        }
        for (name, v) in [
            ("eps", self.eps),
            ("plaque radius", self.plaque_radius),
            ("step bound", self.step_bound),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(FsError::InvalidInput(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowSolution {
    pub trajectory: Trajectory,
    /// `dist(f(y_k), F_r(y_{k+1}))` for each step.
    pub step_defects: Vec<f64>,
    pub max_offset: f64,
    pub resolution_limited: bool,
}

struct Layers {
    d: usize,
    points: Vec<Vec<[f64; MAX_DIM]>>,
    /// Best remaining cost from each node, infinite if no path to the end.
    cost: Vec<Vec<f64>>,
    next: Vec<Vec<usize>>,
    step: Vec<Vec<f64>>,
}

fn dist_raw(a: &[f64], b: &[f64], d: usize) -> f64 {
    (0..d).map(|i| centered(a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

fn candidates(p: &ShadowProblem, x: &TorusPoint) -> Vec<[f64; MAX_DIM]> {
    let d = x.dim();
    let mut out = Vec::new();
    if p.include_target {
        let mut a = [0.0; MAX_DIM];
        a[..d].copy_from_slice(x.coords());
        out.push(a);
    }
    out.extend(
        p.grid
            .cells_within(x, p.eps)
            .into_iter()
            .map(|c| p.grid.center_raw(c)),
    );
    out
}

fn solve_layers(p: &ShadowProblem) -> Layers {
    let d = p.target.dim();
    let points: Vec<Vec<[f64; MAX_DIM]>> = p.target.points().iter().map(|x| candidates(p, x)).collect();
    let offsets: Vec<Vec<f64>> = points
        .iter()
        .zip(p.target.points())
        .map(|(layer, x)| layer.iter().map(|y| dist_raw(y, x.coords(), d)).collect())
        .collect();
    let n = points.len();
    let mut cost = vec![Vec::new(); n];
    let mut next = vec![Vec::new(); n];
    let mut step = vec![Vec::new(); n];
    cost[n - 1] = offsets[n - 1].clone();
    next[n - 1] = vec![usize::MAX; points[n - 1].len()];
    step[n - 1] = vec![0.0; points[n - 1].len()];
    let reach = step_reach(p, d);
    for k in (0..n - 1).rev() {
        let later = &points[k + 1];
        let later_cost = &cost[k + 1];
        let rows: Vec<(f64, usize, f64)> = points[k]
            .par_iter()
            .zip(&offsets[k])
            .map(|(u, &off)| {
                let fu = p.map.apply_raw(&u[..d]);
                let mut best = (f64::INFINITY, usize::MAX, 0.0);
                for (j, v) in later.iter().enumerate() {
                    if !later_cost[j].is_finite() || (0..d).any(|i| centered(v[i] - fu[i]).abs() > reach[i]) {
                        continue;
                    }
                    let s = p.foliation.dist_to_plaque_raw(&v[..d], p.plaque_radius, &fu[..d]);
                    if s > p.step_bound {
                        continue;
                    }
                    let c = off + s + later_cost[j];
                    if c < best.0 {
                        best = (c, j, s);
                    }
                }
                best
            })
            .collect();
        cost[k] = rows.iter().map(|r| r.0).collect();
        next[k] = rows.iter().map(|r| r.1).collect();
        step[k] = rows.iter().map(|r| r.2).collect();
    }
    Layers {
        d,
        points,
        cost,
        next,
        step,
    }
}

fn not_found(l: &Layers) -> FsError {
    let layer = (0..l.cost.len())
        .rev()
        .find(|&k| l.cost[k].iter().all(|c| !c.is_finite()))
        .unwrap_or(0);
    FsError::ShadowNotFound { layer }
}

/// Cheapest layered path (sum of offsets and step defects), ties broken by
/// the smallest candidate index, rendered as points.
pub fn finite_shadow(p: &ShadowProblem) -> Result<ShadowSolution> {
    p.validate()?;
    let l = solve_layers(p);
    let mut start = usize::MAX;
    let mut best = f64::INFINITY;
    for (i, &c) in l.cost[0].iter().enumerate() {
        if c < best {
            best = c;
            start = i;
        }
    }
    if start == usize::MAX {
        return Err(not_found(&l));
    }
    let n = l.points.len();
    let mut pts = Vec::with_capacity(n);
    let mut defects = Vec::with_capacity(n.saturating_sub(1));
    let mut max_offset: f64 = 0.0;
    let mut i = start;
    for k in 0..n {
        let y = &l.points[k][i];
        max_offset = max_offset.max(dist_raw(y, p.target.points()[k].coords(), l.d));
        pts.push(TorusPoint::wrap_unchecked(&y[..l.d]));
        if k + 1 < n {
            defects.push(l.step[k][i]);
            i = l.next[k][i];
        }
    }
    Ok(ShadowSolution {
        trajectory: Trajectory::new(pts, p.target.index_offset())?,
        step_defects: defects,
        max_offset,
        resolution_limited: p.resolution_limited(),
    })
}

fn step_reach(p: &ShadowProblem, d: usize) -> [f64; MAX_DIM] {
    let unit = p.foliation.tangent_reach();
    let mut reach = [0.0; MAX_DIM];
    for i in 0..d {
        reach[i] = p.step_bound + p.plaque_radius * unit[i];
    }
    reach
}

/// A point of the anchor layer with the cheapest complete path through it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessedPoint {
    pub point: TorusPoint,
    pub witness: Trajectory,
    pub cost: f64,
}

/// Candidates of the layer at `index_offset` lying on some complete
/// layered path, each with its cheapest witness; sorted by cost, then by
/// candidate index.
pub fn shadow_witnesses(p: &ShadowProblem) -> Result<Vec<WitnessedPoint>> {
    p.validate()?;
    let l = solve_layers(p);
    let m = p.target.index_offset();
    let d = l.d;
    let reach = step_reach(p, d);
    // forward pass: cheapest feasible prefix ending at each node
    let offset0: Vec<f64> = l.points[0]
        .iter()
        .map(|y| dist_raw(y, p.target.points()[0].coords(), d))
        .collect();
    let mut fcost: Vec<Vec<f64>> = vec![l.cost[0]
        .iter()
        .zip(&offset0)
        .map(|(c, &o)| if c.is_finite() { o } else { f64::INFINITY })
        .collect()];
    let mut fparent: Vec<Vec<usize>> = vec![vec![usize::MAX; l.points[0].len()]];
    for k in 0..m {
        let x_next = p.target.points()[k + 1].coords();
        let prev = &fcost[k];
        let images: Vec<Option<[f64; MAX_DIM]>> = l.points[k]
            .iter()
            .zip(prev)
            .map(|(u, c)| c.is_finite().then(|| p.map.apply_raw(&u[..d])))
            .collect();
        let rows: Vec<(f64, usize)> = l.points[k + 1]
            .par_iter()
            .enumerate()
            .map(|(j, v)| {
                if !l.cost[k + 1][j].is_finite() {
                    return (f64::INFINITY, usize::MAX);
                }
                let off = dist_raw(v, x_next, d);
                let mut best = (f64::INFINITY, usize::MAX);
                for (i, fu) in images.iter().enumerate() {
                    let Some(fu) = fu else { continue };
                    if (0..d).any(|a| centered(v[a] - fu[a]).abs() > reach[a]) {
                        continue;
                    }
                    let s = p.foliation.dist_to_plaque_raw(&v[..d], p.plaque_radius, &fu[..d]);
                    if s <= p.step_bound && prev[i] + s + off < best.0 {
                        best = (prev[i] + s + off, i);
                    }
                }
                best
            })
            .collect();
        fcost.push(rows.iter().map(|r| r.0).collect());
        fparent.push(rows.iter().map(|r| r.1).collect());
    }
    let n = l.points.len();
    let mut out = Vec::new();
    for (j, y) in l.points[m].iter().enumerate() {
        if !fcost[m][j].is_finite() || !l.cost[m][j].is_finite() {
            continue;
        }
        let own = dist_raw(y, p.target.points()[m].coords(), d);
        let mut idx = vec![0usize; n];
        idx[m] = j;
        for k in (0..m).rev() {
            idx[k] = fparent[k + 1][idx[k + 1]];
        }
        for k in m..n - 1 {
            idx[k + 1] = l.next[k][idx[k]];
        }
        let pts = (0..n)
            .map(|k| TorusPoint::wrap_unchecked(&l.points[k][idx[k]][..d]))
            .collect();
        out.push(WitnessedPoint {
            point: TorusPoint::wrap_unchecked(&y[..d]),
            witness: Trajectory::new(pts, m)?,
            cost: fcost[m][j] + l.cost[m][j] - own,
        });
    }
    out.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    Ok(out)
}

/// Candidates of the layer at `index_offset` lying on some complete
/// layered path; empty when no path exists.
pub fn shadow_set(p: &ShadowProblem) -> Result<Vec<TorusPoint>> {
    Ok(shadow_witnesses(p)?.into_iter().map(|w| w.point).collect())
}

/// Repeat a loop `x_0, ..., x_r = x_0` over indices `-n..=n`.
pub fn periodize(lp: &Trajectory, n: usize) -> Result<Trajectory> {
    let r = lp.len().saturating_sub(1);
    if r == 0 {
        return Err(FsError::InvalidInput("loop needs at least one step".into()));
    }
    if !n.is_multiple_of(r) {
        return Err(FsError::InvalidInput(format!(
            "horizon {n} is not a multiple of the loop length {r}"
        )));
    }
    let pts = (0..=2 * n)
        .map(|k| lp.points()[(k % r + r - n % r) % r].clone())
        .collect();
    Trajectory::new(pts, n)
}

/// `finite_shadow` of the periodized loop over `-n..=n`.
pub fn shadow_periodized(
    f: &ToralMap,
    fol: &LinearFoliation,
    lp: &Trajectory,
    eps: f64,
    n: usize,
    grid: Grid,
) -> Result<ShadowSolution> {
    let target = periodize(lp, n)?;
    finite_shadow(&ShadowProblem::new(f, fol, &target, eps, grid))
}

/// `1/(1-λ) + 1/(1-1/μ)` for a hyperbolic automorphism.
pub fn hyperbolic_shadow_constant(a: &ToralMap) -> Result<f64> {
    let s = spectral_splitting(a)?;
    match (s.lambda, s.mu, s.center.is_empty()) {
        (Some(l), Some(m), true) => Ok(1.0 / (1.0 - l) + 1.0 / (1.0 - 1.0 / m)),
        _ => Err(FsError::Unsupported("automorphism is not hyperbolic".into())),
    }
}

/// The exact orbit shadowing a pseudo-orbit of a hyperbolic automorphism:
/// stable errors are propagated forward from zero, unstable errors backward
/// from zero at the end.
pub fn exact_shadow_hyperbolic(a: &ToralMap, pseudo: &Trajectory) -> Result<Trajectory> {
    let s = spectral_splitting(a)?;
    if !s.center.is_empty() || s.stable.is_empty() || s.unstable.is_empty() {
        return Err(FsError::Unsupported("automorphism is not hyperbolic".into()));
    }
    let d = a.dim();
    if pseudo.dim() != d {
        return Err(FsError::InvalidInput("dimension mismatch".into()));
    }
    let ks = s.stable.len();
    let basis: Vec<&Vec<f64>> = s.stable.iter().chain(&s.unstable).collect();
    let t = DMatrix::from_fn(d, d, |i, j| basis[j][i]);
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| FsError::Unsupported("degenerate eigenbasis".into()))?;
    let m = DMatrix::from_fn(d, d, |i, j| a.matrix()[i][j] as f64);
    let b = &t_inv * &m * &t;
    let b_s = b.view((0, 0), (ks, ks)).into_owned();
    let b_u = b.view((ks, ks), (d - ks, d - ks)).into_owned();
    let b_u_inv = b_u
        .clone()
        .try_inverse()
        .ok_or_else(|| FsError::Unsupported("singular unstable block".into()))?;

    let pts = pseudo.points();
    let n = pts.len();
    // errors in eigen-coordinates: e_k = x_{k+1} - A x_k
    let errs: Vec<DVector<f64>> = pts
        .windows(2)
        .map(|w| {
            let ax = a.apply_raw(w[0].coords());
            let e = DVector::from_iterator(d, (0..d).map(|i| centered(w[1].coords()[i] - ax[i])));
            &t_inv * e
        })
        .collect();
    let mut cs = vec![DVector::zeros(ks); n];
    for k in 0..n - 1 {
        cs[k + 1] = &b_s * &cs[k] - errs[k].rows(0, ks);
    }
    let mut cu = vec![DVector::zeros(d - ks); n];
    for k in (0..n - 1).rev() {
        cu[k] = &b_u_inv * (&cu[k + 1] + errs[k].rows(ks, d - ks));
    }
    let out = (0..n)
        .map(|k| {
            let mut c = DVector::zeros(d);
            c.rows_mut(0, ks).copy_from(&cs[k]);
            c.rows_mut(ks, d - ks).copy_from(&cu[k]);
            let shift = &t * c;
            pts[k].translate(shift.as_slice())
        })
        .collect();
    Trajectory::new(out, pseudo.index_offset())
}
