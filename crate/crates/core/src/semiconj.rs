//! The set-valued semiconjugation `H` between a map and a C0-close
//! perturbation, built on finite forward-closed samples, and the verifiers
//! for its contract.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::foliation::{FoliationKind, LinearFoliation};
use crate::grid::Grid;
use crate::map::{induced_quotient_map, ToralMap};
use crate::orbit::{is_foliated_orbit, orbit_segment, Trajectory};
use crate::shadow::{shadow_witnesses, ShadowProblem};
use crate::spectral::spectral_splitting;
use crate::torus::{centered, torus_dist_unchecked, TorusPoint, TAU_GEOM};

/// Sample points; `terminal[i]` marks points whose image need not be sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<TorusPoint>,
    pub terminal: Vec<bool>,
}

impl SampleSet {
    /// Arbitrary points; every image must be sampled for the step check.
    pub fn from_points(points: Vec<TorusPoint>) -> Self {
        let terminal = vec![false; points.len()];
        SampleSet { points, terminal }
    }

    /// `x, g(x), ..., g^{len-1}(x)` for each seed, the last one terminal.
    pub fn forward_orbits(g: &ToralMap, seeds: &[TorusPoint], len: usize) -> Self {
        let mut points = Vec::with_capacity(seeds.len() * len);
        let mut terminal = Vec::with_capacity(seeds.len() * len);
        for s in seeds {
            let mut x = s.clone();
            for k in 0..len {
                points.push(x.clone());
                terminal.push(k + 1 == len);
                x = g.apply(&x);
            }
        }
        SampleSet { points, terminal }
    }

    /// Uniform random seeds from `rng`, expanded by [`Self::forward_orbits`].
    pub fn random_orbits<R: Rng>(g: &ToralMap, count: usize, len: usize, rng: &mut R) -> Self {
        let d = g.dim();
        let seeds: Vec<TorusPoint> = (0..count.div_ceil(len.max(1)))
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
                TorusPoint::wrap_unchecked(&v)
            })
            .collect();
        let mut s = Self::forward_orbits(g, &seeds, len.max(1));
        s.points.truncate(count);
        s.terminal.truncate(count);
        if let Some(t) = s.terminal.last_mut() {
            *t = true;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiconjParams {
    pub eps_prime: f64,
    pub horizon: usize,
    pub grid: Grid,
    /// Step condition `dist(f(y_k), F_{ε'}(y_{k+1})) <= step_bound`.
    pub step_bound: f64,
    /// Image points closer than this are merged.
    pub dedup_radius: f64,
    /// Project witnesses onto exact orbits of the leaf-space map.
    pub refine: bool,
}

impl SemiconjParams {
    pub fn new(eps_prime: f64, horizon: usize, grid: Grid) -> Self {
        SemiconjParams {
            eps_prime,
            horizon,
            grid,
            step_bound: grid.cell_diameter(),
            dedup_radius: grid.cell_diameter(),
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub y: TorusPoint,
    /// `(F, ε')`-orbit segment with `y` at index 0 shadowing `g^k(x)`.
    pub witness: Trajectory,
    /// Witness is an exact orbit transversally (after refinement).
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetValuedMap {
    pub samples: Vec<TorusPoint>,
    pub terminal: Vec<bool>,
    pub images: Vec<Vec<ImagePoint>>,
    pub params: SemiconjParams,
}

impl SetValuedMap {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn image(&self, i: usize) -> impl Iterator<Item = &TorusPoint> {
        self.images[i].iter().map(|p| &p.y)
    }
}

/// Minimum-norm Gauss-Newton projection of a lifted sequence onto an exact
/// orbit of `q`.
pub(crate) fn project_to_orbit(q: &ToralMap, seq: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = seq.len();
    let m = q.dim();
    if n < 2 {
        return Some(seq.to_vec());
    }
    let mut z = seq.to_vec();
    for _ in 0..12 {
        let rows = (n - 1) * m;
        let mut r = DVector::zeros(rows);
        let mut j = DMatrix::zeros(rows, n * m);
        let mut worst: f64 = 0.0;
        for k in 0..n - 1 {
            let img = q.apply_raw(&z[k]);
            let dq = q.jacobian(&TorusPoint::wrap_unchecked(&z[k]));
            for a in 0..m {
                let e = centered(img[a] - z[k + 1][a]);
                r[k * m + a] = e;
                worst = worst.max(e.abs());
                for b in 0..m {
                    j[(k * m + a, k * m + b)] = dq[(a, b)];
                }
                j[(k * m + a, (k + 1) * m + a)] = -1.0;
            }
        }
        if worst < 1e-13 {
            return Some(z);
        }
        let jjt = &j * j.transpose();
        let w = jjt.lu().solve(&r)?;
        let step = j.transpose() * w;
        for k in 0..n {
            for a in 0..m {
                z[k][a] -= step[k * m + a];
            }
        }
    }
    None
}

/// Witness moved leafwise onto the leaf-space orbit `z`, if that keeps
/// every point within `eps` of the target.
fn slide_witness(
    fol: &LinearFoliation,
    z: &[Vec<f64>],
    witness: &Trajectory,
    target: &Trajectory,
    eps: f64,
) -> Option<Trajectory> {
    let pts: Vec<TorusPoint> = witness
        .points()
        .iter()
        .zip(z)
        .map(|(y, zk)| fol.move_to_leaf(y, zk))
        .collect();
    let close = pts
        .iter()
        .zip(target.points())
        .all(|(y, x)| torus_dist_unchecked(y, x) <= eps + 1e-12);
    close.then(|| Trajectory::new(pts, witness.index_offset()).ok())?
}

/// Exact leaf-space orbit nearest (to first order) the projected target.
fn target_orbit(fol: &LinearFoliation, q: &ToralMap, target: &Trajectory) -> Option<Vec<Vec<f64>>> {
    let seq: Vec<Vec<f64>> = target
        .points()
        .iter()
        .map(|y| fol.quotient_project(y).map(|p| p.0))
        .collect::<Result<_>>()
        .ok()?;
    project_to_orbit(q, &seq)
}

fn dedup(points: impl IntoIterator<Item = ImagePoint>, radius: f64) -> Vec<ImagePoint> {
    let mut kept: Vec<ImagePoint> = Vec::new();
    for p in points {
        if kept.iter().all(|k| torus_dist_unchecked(&k.y, &p.y) > radius) {
            kept.push(p);
        }
    }
    kept
}

/// `H(x)`: starting points of the layered shadows of `g^k(x)`, `|k| <= N`,
/// merged at the dedup radius (cheapest first), then optionally slid along
/// leaves onto the exact leaf-space orbit nearest the projected `g`-orbit.
pub fn construct_semiconjugation(
    f: &ToralMap,
    fol: &LinearFoliation,
    g: &ToralMap,
    params: &SemiconjParams,
    samples: &SampleSet,
) -> Result<SetValuedMap> {
    if f.dim() != g.dim() || fol.dim() != f.dim() || params.grid.dim() != f.dim() {
        return Err(FsError::InvalidInput("dimension mismatch".into()));
    }
    if samples.points.len() != samples.terminal.len() {
        return Err(FsError::InvalidInput(
            "sample flags do not match the points".into(),
        ));
    }
    let quotient = match fol.kind() {
        FoliationKind::WholeManifold => None,
        _ if params.refine => induced_quotient_map(f, fol).ok(),
        _ => None,
    };
    let images: Vec<Vec<ImagePoint>> = samples
        .points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let target = orbit_segment(g, x, params.horizon)?;
            let prob = ShadowProblem::new(f, fol, &target, params.eps_prime, params.grid)
                .with_step(params.eps_prime, params.step_bound);
            let raw: Vec<ImagePoint> = shadow_witnesses(&prob)?
                .into_iter()
                .map(|w| ImagePoint {
                    y: w.point,
                    witness: w.witness,
                    refined: false,
                })
                .collect();
            if raw.is_empty() {
                return Err(FsError::EmptyImage(i));
            }
            let Some(z) = quotient.as_ref().and_then(|q| target_orbit(fol, q, &target)) else {
                return Ok(dedup(raw, params.dedup_radius));
            };
            let refined: Vec<ImagePoint> = raw
                .iter()
                .filter_map(|p| {
                    let w = slide_witness(fol, &z, &p.witness, &target, params.eps_prime)?;
                    Some(ImagePoint {
                        y: w.at(0)?.clone(),
                        witness: w,
                        refined: true,
                    })
                })
                .collect();
            if refined.is_empty() {
                Ok(dedup(raw, params.dedup_radius))
            } else {
                Ok(dedup(refined, params.dedup_radius))
            }
        })
        .collect::<Result<_>>()?;
    Ok(SetValuedMap {
        samples: samples.points.clone(),
        terminal: samples.terminal.clone(),
        images,
        params: *params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eps: f64,
    pub eps_prime: f64,
    /// `sup_x sup_{y ∈ H(x)} d(y, x)`.
    pub c0_bound: f64,
    /// `sup_x sup_{y ∈ H(x)} dist(f(y), ∪_{y1 ∈ H(g(x))} F_ε(y1))`.
    pub step_inclusion_defect: f64,
    /// Same with `y1` restricted to the point of `H(g(x))` nearest the
    /// shifted witness.
    pub shift_witness_defect: f64,
    /// Worst `is_foliated_orbit` defect of the stored witnesses at radius ε'.
    pub witness_defect: f64,
    pub valuation_defect: f64,
    pub checked_steps: usize,
    pub tol: f64,
    pub pass: bool,
}

fn find_sample(h: &SetValuedMap, x: &TorusPoint) -> Option<usize> {
    h.samples.iter().position(|s| torus_dist_unchecked(s, x) <= 1e-12)
}

/// Worst membership defect of `y'` in `F_{ε0}(y)` over pairs in one image.
pub fn verify_valuation(h: &SetValuedMap, fol: &LinearFoliation, eps0: f64) -> f64 {
    (0..h.len())
        .map(|i| {
            let img: Vec<&TorusPoint> = h.image(i).collect();
            let mut worst: f64 = 0.0;
            for a in &img {
                for b in &img {
                    worst = worst.max(fol.membership_defect_raw(a.coords(), eps0, b.coords(), 1e-9));
                }
            }
            worst
        })
        .fold(0.0, f64::max)
}

/// Checks `d(H(x), x) <= ε`, the step inclusion `f(H(x)) ⊂ ∪ F_ε(H(g(x)))`
/// and the valuation clause at `ε0 = ε`, against tolerance `tol`.
pub fn verify_stability_contract(
    h: &SetValuedMap,
    f: &ToralMap,
    g: &ToralMap,
    fol: &LinearFoliation,
    eps: f64,
    tol: f64,
) -> Result<StabilityReport> {
    if h.params.eps_prime > eps / 8.0 + 1e-15 {
        return Err(FsError::InvalidInput(format!(
            "H was built with ε' = {} > ε/8 = {}",
            h.params.eps_prime,
            eps / 8.0
        )));
    }
    let mut c0_bound: f64 = 0.0;
    let mut step: f64 = 0.0;
    let mut shift: f64 = 0.0;
    let mut witness_defect: f64 = 0.0;
    let mut checked = 0;
    for i in 0..h.len() {
        let x = &h.samples[i];
        for ip in &h.images[i] {
            c0_bound = c0_bound.max(torus_dist_unchecked(&ip.y, x));
            let r = is_foliated_orbit(f, fol, &ip.witness, h.params.eps_prime, 1e-9)?;
            witness_defect = witness_defect.max(r.worst_defect);
        }
        let gx = g.apply(x);
        let Some(j) = find_sample(h, &gx) else {
            if h.terminal[i] {
                continue;
            }
            return Err(FsError::MissingSample(i));
        };
        checked += 1;
        for ip in &h.images[i] {
            let fy = f.apply(&ip.y);
            let to_union = h.images[j]
                .iter()
                .map(|q| fol.dist_to_plaque_raw(q.y.coords(), eps, fy.coords()))
                .fold(f64::INFINITY, f64::min);
            step = step.max(to_union);
            if let Some(y1) = ip.witness.at(1) {
                let nearest = h.images[j]
                    .iter()
                    .min_by(|a, b| torus_dist_unchecked(&a.y, y1).total_cmp(&torus_dist_unchecked(&b.y, y1)))
                    .expect("images are nonempty");
                shift = shift.max(fol.dist_to_plaque_raw(nearest.y.coords(), eps, fy.coords()));
            }
        }
    }
    let valuation_defect = verify_valuation(h, fol, eps);
    let pass = c0_bound <= eps + tol && step <= tol && valuation_defect <= tol;
    Ok(StabilityReport {
        eps,
        eps_prime: h.params.eps_prime,
        c0_bound,
        step_inclusion_defect: step,
        shift_witness_defect: shift,
        witness_defect,
        valuation_defect,
        checked_steps: checked,
        tol,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub delta: f64,
    pub horizon: usize,
    pub observed_rho: f64,
    pub pairs: usize,
    /// Pairs at distances comparable to the torus carry no bound.
    pub in_contract: bool,
    pub pass: Option<bool>,
}

/// Worst `dist(y, F_{ε0}(y'))` over `y ∈ H(x)`, `y' ∈ H(x')` for the given
/// sample pairs.
pub fn verify_foliated_continuity(
    h: &SetValuedMap,
    fol: &LinearFoliation,
    eps0: f64,
    rho: Option<f64>,
    delta: f64,
    pairs: &[(usize, usize)],
) -> Result<ContinuityRow> {
    let mut worst: f64 = 0.0;
    for &(a, b) in pairs {
        if a >= h.len() || b >= h.len() {
            return Err(FsError::InvalidInput(format!("pair ({a}, {b}) out of range")));
        }
        if torus_dist_unchecked(&h.samples[a], &h.samples[b]) > delta + 1e-12 {
            return Err(FsError::InvalidInput(format!(
                "pair ({a}, {b}) is farther apart than Δ = {delta}"
            )));
        }
        for y in h.image(a) {
            for y2 in h.image(b) {
                worst = worst.max(fol.dist_to_plaque_raw(y2.coords(), eps0, y.coords()));
            }
        }
    }
    let in_contract = delta < 0.25;
    Ok(ContinuityRow {
        delta,
        horizon: h.params.horizon,
        observed_rho: worst,
        pairs: pairs.len(),
        in_contract,
        pass: rho.filter(|_| in_contract).map(|r| worst <= r + 1e-12),
    })
}

/// Uncertainty of a horizon-`n` witness against the bi-infinite one:
/// `2ε'·θ^{-n}` with `θ = min(1/λ, μ)` for a hyperbolic map, `TAU_GEOM`
/// otherwise.
pub fn horizon_truncation_bound(f: &ToralMap, eps_prime: f64, n: usize) -> f64 {
    match spectral_splitting(f) {
        Ok(s) if s.center.is_empty() => match (s.lambda, s.mu) {
            (Some(l), Some(m)) if l > 0.0 => {
                let theta = (1.0 / l).min(m);
                (2.0 * eps_prime * theta.powi(-(n as i32))).max(TAU_GEOM)
            }
            _ => TAU_GEOM,
        },
        _ => TAU_GEOM,
    }
}

/// Samples `x_i` and `x_i + Δ u_i` (random unit `u_i`), as index pairs.
pub fn paired_samples<R: Rng>(
    base: &[TorusPoint],
    delta: f64,
    rng: &mut R,
) -> (SampleSet, Vec<(usize, usize)>) {
    let mut points = Vec::with_capacity(2 * base.len());
    let mut pairs = Vec::with_capacity(base.len());
    for x in base {
        let d = x.dim();
        let u = loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if n > 1e-3 && n <= 1.0 {
                break v.into_iter().map(|c| c / n * delta).collect::<Vec<_>>();
            }
        };
        pairs.push((points.len(), points.len() + 1));
        points.push(x.clone());
        points.push(x.translate(&u));
    }
    let mut s = SampleSet::from_points(points);
    s.terminal.iter_mut().for_each(|t| *t = true);
    (s, pairs)
}
