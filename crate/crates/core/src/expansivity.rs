//! Finite-horizon expansivity with respect to a foliation: violation search
//! over pairs of grid (F,e)-orbits and a scan for usable constants (e, N).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::foliation::{LinearFoliation, MAX_DIM};
use crate::grid::Grid;
use crate::map::ToralMap;
use crate::orbit::{is_foliated_orbit, Trajectory};
use crate::recurrence::build_plaque_graph;
use crate::torus::{torus_dist_unchecked, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansivityParams {
    /// Pair closeness bound and plaque radius of the (F,e)-orbits.
    pub e: f64,
    pub eps0: f64,
    pub rho: f64,
    pub horizon: usize,
    pub grid: Grid,
    /// Largest product state space the search will allocate.
    pub max_states: usize,
    /// Number of grid candidates refined into exact orbit pairs.
    pub max_refinements: usize,
    pub tol: f64,
}

impl ExpansivityParams {
    pub fn new(e: f64, eps0: f64, rho: f64, horizon: usize, grid: Grid) -> Self {
        ExpansivityParams {
            e,
            eps0,
            rho,
            horizon,
            grid,
            max_states: 40_000_000,
            max_refinements: 64,
            tol: 1e-9,
        }
    }
}

/// Two (F,e)-orbits over `[-N, N]` that stay `e`-close while `y_0` is not
/// within `rho` of `F_{eps0}(x_0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansivityWitness {
    pub x: Trajectory,
    pub y: Trajectory,
    pub max_pair_distance: f64,
    /// `dist(y_0, F_{eps0}(x_0))`.
    pub defect: f64,
    pub transverse_separation: f64,
}

impl ExpansivityWitness {
    /// Re-checks every clause from the stored trajectories alone.
    pub fn validate(
        &self,
        f: &ToralMap,
        fol: &LinearFoliation,
        e: f64,
        eps0: f64,
        rho: f64,
        tol: f64,
    ) -> Result<bool> {
        if self.x.len() != self.y.len() || self.x.index_offset() != self.y.index_offset() {
            return Ok(false);
        }
        let ox = is_foliated_orbit(f, fol, &self.x, e, tol)?;
        let oy = is_foliated_orbit(f, fol, &self.y, e, tol)?;
        let close = pair_distance(&self.x, &self.y) <= e + tol;
        let (x0, y0) = (self.x.at(0).unwrap(), self.y.at(0).unwrap());
        let defect = fol.plaque(x0.clone(), eps0)?.dist_to(y0);
        Ok(ox.valid && oy.valid && close && defect > rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub grid_resolution: usize,
    pub horizon: usize,
    pub states: usize,
    /// Viability counts; `None` when no pair passed the defect filter.
    pub forward_viable: Option<usize>,
    pub backward_viable: Option<usize>,
    pub candidates: usize,
    pub refinements_tried: usize,
    /// Depth at which the forward (backward) viability sets stopped shrinking.
    pub forward_stable_at: Option<usize>,
    pub backward_stable_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchOutcome {
    Witness(Box<ExpansivityWitness>),
    /// No refined witness at this grid resolution and horizon.
    NoneFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub outcome: SearchOutcome,
    pub stats: SearchStats,
}

impl SearchReport {
    pub fn witness(&self) -> Option<&ExpansivityWitness> {
        match &self.outcome {
            SearchOutcome::Witness(w) => Some(w),
            SearchOutcome::NoneFound => None,
        }
    }
}

fn pair_distance(x: &Trajectory, y: &Trajectory) -> f64 {
    x.points()
        .iter()
        .zip(y.points())
        .map(|(a, b)| torus_dist_unchecked(a, b))
        .fold(0.0, f64::max)
}

struct Bits(Vec<u64>);

impl Bits {
    fn full(len: usize) -> Self {
        let mut v = vec![u64::MAX; len.div_ceil(64)];
        if !len.is_multiple_of(64) {
            *v.last_mut().unwrap() = (1u64 << (len % 64)) - 1;
        }
        Bits(v)
    }

    #[inline]
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

struct Adj {
    off: Vec<usize>,
    tgt: Vec<u32>,
}

impl Adj {
    #[inline]
    fn slice(&self, c: usize) -> &[u32] {
        &self.tgt[self.off[c]..self.off[c + 1]]
    }

    #[inline]
    fn row(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.slice(c).iter().map(|&t| t as usize)
    }
}

/// Ordered cell pairs `(a, a + v)` with `|v| <= radius`, indexed `a * m + j`.
struct PairSpace {
    n: usize,
    d: usize,
    cells: usize,
    r: i64,
    offsets: Vec<[i64; MAX_DIM]>,
    table: Vec<u32>,
}

impl PairSpace {
    fn new(grid: Grid, radius: f64) -> Result<Self> {
        let (n, d) = (grid.resolution(), grid.dim());
        let r = (radius * n as f64).floor() as i64;
        if 2 * r + 1 > n as i64 {
            return Err(FsError::InvalidInput(format!(
                "pair radius {radius} is too large for a grid of resolution {n}"
            )));
        }
        let side = (2 * r + 1) as usize;
        let mut table = vec![u32::MAX; side.pow(d as u32)];
        let mut offsets = Vec::new();
        for t in 0..table.len() {
            let mut v = [0i64; MAX_DIM];
            let mut rem = t;
            for c in v.iter_mut().take(d) {
                *c = (rem % side) as i64 - r;
                rem /= side;
            }
            let norm = v[..d].iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt() / n as f64;
            if norm <= radius {
                table[t] = offsets.len() as u32;
                offsets.push(v);
            }
        }
        Ok(PairSpace {
            n,
            d,
            cells: grid.num_cells(),
            r,
            offsets,
            table,
        })
    }

    fn m(&self) -> usize {
        self.offsets.len()
    }

    fn len(&self) -> usize {
        self.cells * self.m()
    }

    #[inline]
    fn multi(&self, c: usize) -> [i64; MAX_DIM] {
        let mut v = [0i64; MAX_DIM];
        let mut rem = c;
        for x in v.iter_mut().take(self.d) {
            *x = (rem % self.n) as i64;
            rem /= self.n;
        }
        v
    }

    #[inline]
    fn partner(&self, a: usize, j: usize) -> usize {
        let ma = self.multi(a);
        let v = &self.offsets[j];
        let n = self.n as i64;
        (0..self.d)
            .rev()
            .fold(0i64, |acc, i| acc * n + (ma[i] + v[i]).rem_euclid(n)) as usize
    }

    #[inline]
    fn state(&self, a: usize, b: usize) -> Option<usize> {
        let (ma, mb) = (self.multi(a), self.multi(b));
        let n = self.n as i64;
        let side = 2 * self.r + 1;
        let mut t = 0i64;
        for i in (0..self.d).rev() {
            let mut c = (mb[i] - ma[i]).rem_euclid(n);
            if c > n / 2 {
                c -= n;
            }
            if c.abs() > self.r {
                return None;
            }
            t = t * side + c + self.r;
        }
        match self.table[t as usize] {
            u32::MAX => None,
            j => Some(a * self.m() + j as usize),
        }
    }

    fn split(&self, s: usize) -> (usize, usize) {
        let a = s / self.m();
        (a, self.partner(a, s % self.m()))
    }
}

/// Nested viability sets: `layers[k]` holds states with a product path of
/// length `k`; the last entry is repeated once the sets stop shrinking.
struct Viability {
    layers: Vec<Bits>,
    stable_at: Option<usize>,
}

impl Viability {
    fn compute(space: &PairSpace, adj: &Adj, horizon: usize) -> Self {
        let total = space.len();
        let mut layers = vec![Bits::full(total)];
        let mut stable_at = None;
        for k in 1..=horizon {
            let prev = layers.last().unwrap();
            let next = Bits(
                (0..prev.0.len())
                    .into_par_iter()
                    .map(|w| {
                        let mut word = 0u64;
                        for bit in 0..64 {
                            let s = w * 64 + bit;
                            if s >= total {
                                break;
                            }
                            if !prev.get(s) {
                                continue;
                            }
                            let (a, b) = space.split(s);
                            let j = s % space.m();
                            let row_b = adj.slice(b);
                            // same offset first, then every successor pair
                            let alive = adj.row(a).any(|a2| {
                                let b2 = space.partner(a2, j) as u32;
                                prev.get(a2 * space.m() + j) && row_b.binary_search(&b2).is_ok()
                            }) || adj.row(a).any(|a2| {
                                row_b
                                    .iter()
                                    .any(|&b2| space.state(a2, b2 as usize).is_some_and(|s2| prev.get(s2)))
                            });
                            if alive {
                                word |= 1 << bit;
                            }
                        }
                        word
                    })
                    .collect(),
            );
            if next.0 == prev.0 {
                stable_at = Some(k - 1);
                break;
            }
            layers.push(next);
        }
        Viability { layers, stable_at }
    }

    fn layer(&self, k: usize) -> &Bits {
        &self.layers[k.min(self.layers.len() - 1)]
    }
}

struct Search {
    space: PairSpace,
    forward: Adj,
    backward: Adj,
}

impl Search {
    fn viability(&self, horizon: usize) -> (Viability, Viability) {
        (
            Viability::compute(&self.space, &self.forward, horizon),
            Viability::compute(&self.space, &self.backward, horizon),
        )
    }
}

fn prepare(f: &ToralMap, fol: &LinearFoliation, p: &ExpansivityParams) -> Result<Search> {
    let d = p.grid.dim();
    if f.dim() != d || fol.dim() != d {
        return Err(FsError::InvalidInput(
            "map, foliation and grid dimensions differ".into(),
        ));
    }
    for (name, v) in [("e", p.e), ("eps0", p.eps0), ("rho", p.rho)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(FsError::InvalidInput(format!("{name} = {v}")));
        }
    }
    if p.horizon == 0 {
        return Err(FsError::InvalidInput("horizon must be at least 1".into()));
    }
    let eta = p.grid.cell_diameter();
    let space = PairSpace::new(p.grid, p.e + eta)?;
    if space.len() > p.max_states {
        return Err(FsError::Timeout {
            explored: p.max_states as f64 / space.len() as f64,
        });
    }
    let g = build_plaque_graph(f, fol, p.grid, p.e, eta, p.e)?;
    let mut forward = Adj {
        off: Vec::with_capacity(g.num_cells() + 1),
        tgt: Vec::with_capacity(g.num_edges()),
    };
    forward.off.push(0);
    for c in 0..g.num_cells() {
        forward.tgt.extend(g.successors(c).map(|t| t as u32));
        forward.off.push(forward.tgt.len());
    }
    let (off, tgt, _) = g.reversed();
    let backward = Adj { off, tgt };
    Ok(Search {
        space,
        forward,
        backward,
    })
}

/// Cell pairs `(a, b)` that start product paths of length `N` both forward
/// and backward.
pub fn viable_pairs(
    f: &ToralMap,
    fol: &LinearFoliation,
    p: &ExpansivityParams,
) -> Result<Vec<(usize, usize)>> {
    let s = prepare(f, fol, p)?;
    let (fwd, bwd) = s.viability(p.horizon);
    let (fl, bl) = (fwd.layer(p.horizon), bwd.layer(p.horizon));
    Ok((0..s.space.len())
        .filter(|&i| fl.get(i) && bl.get(i))
        .map(|i| s.space.split(i))
        .collect())
}

pub fn expansivity_violation_search(
    f: &ToralMap,
    fol: &LinearFoliation,
    p: &ExpansivityParams,
) -> Result<SearchReport> {
    let s = prepare(f, fol, p)?;
    let n = p.horizon;
    // the defect filter is cheap and often empties the candidate set
    let mut candidates: Vec<(f64, usize)> = (0..s.space.len())
        .into_par_iter()
        .filter_map(|i| {
            let (a, b) = s.space.split(i);
            let (x0, y0) = start_pair(fol, p, a, b);
            let defect = fol.plaque(x0.clone(), p.eps0).ok()?.dist_to(&y0);
            (torus_dist_unchecked(&x0, &y0) <= p.e && defect > p.rho).then_some((defect, i))
        })
        .collect();
    let mut stats = SearchStats {
        grid_resolution: p.grid.resolution(),
        horizon: n,
        states: s.space.len(),
        forward_viable: None,
        backward_viable: None,
        candidates: 0,
        refinements_tried: 0,
        forward_stable_at: None,
        backward_stable_at: None,
    };
    if !candidates.is_empty() {
        let (fwd, bwd) = s.viability(n);
        let (fl, bl) = (fwd.layer(n), bwd.layer(n));
        candidates.retain(|&(_, i)| fl.get(i) && bl.get(i));
        stats.forward_viable = Some(fl.count());
        stats.backward_viable = Some(bl.count());
        stats.forward_stable_at = fwd.stable_at;
        stats.backward_stable_at = bwd.stable_at;
    }
    candidates.sort_by(|u, v| v.0.total_cmp(&u.0).then(u.1.cmp(&v.1)));
    stats.candidates = candidates.len();
    for &(_, i) in candidates.iter().take(p.max_refinements) {
        stats.refinements_tried += 1;
        if let Some(w) = refine(f, fol, p, s.space.split(i))? {
            return Ok(SearchReport {
                outcome: SearchOutcome::Witness(Box::new(w)),
                stats,
            });
        }
    }
    Ok(SearchReport {
        outcome: SearchOutcome::NoneFound,
        stats,
    })
}

/// `x_0` at the center of `a`; `y_0` slid along its leaf towards `x_0`.
fn start_pair(fol: &LinearFoliation, p: &ExpansivityParams, a: usize, b: usize) -> (TorusPoint, TorusPoint) {
    let x0 = p.grid.cell_center(a);
    let y0 = fol
        .plaque(p.grid.cell_center(b), p.e)
        .expect("valid radius")
        .nearest_point(&x0);
    (x0, y0)
}

/// Preimage step: the point of the leaf of `f^{-1}(next)` nearest `target`
/// whose image stays in `F_e(next)`, shrinking the slide radius until it does.
fn slide_back(
    f: &ToralMap,
    fol: &LinearFoliation,
    p: &ExpansivityParams,
    next: &TorusPoint,
    target: &TorusPoint,
) -> Result<TorusPoint> {
    let base = f.apply_inverse(next)?;
    let image_plaque = fol.plaque(next.clone(), p.e)?;
    let mut radius = p.e;
    for _ in 0..8 {
        let cand = fol.plaque(base.clone(), radius)?.nearest_point(target);
        if image_plaque.contains(&f.apply(&cand), 0.5 * p.tol) {
            return Ok(cand);
        }
        radius *= 0.5;
    }
    Ok(base)
}

/// `x` is the exact orbit of the grid start; `y` follows its own orbit but
/// slides leafwise towards `x` at every step.
fn refine(
    f: &ToralMap,
    fol: &LinearFoliation,
    p: &ExpansivityParams,
    start: (usize, usize),
) -> Result<Option<ExpansivityWitness>> {
    let n = p.horizon;
    let (x0, y0) = start_pair(fol, p, start.0, start.1);
    let mut xs = vec![x0.clone(); 2 * n + 1];
    let mut ys = vec![y0.clone(); 2 * n + 1];
    for i in n + 1..=2 * n {
        xs[i] = f.apply(&xs[i - 1]);
        ys[i] = fol.plaque(f.apply(&ys[i - 1]), p.e)?.nearest_point(&xs[i]);
    }
    for i in (0..n).rev() {
        xs[i] = f.apply_inverse(&xs[i + 1])?;
        ys[i] = slide_back(f, fol, p, &ys[i + 1], &xs[i])?;
    }
    let x = Trajectory::new(xs, n)?;
    let y = Trajectory::new(ys, n)?;
    let w = ExpansivityWitness {
        max_pair_distance: pair_distance(&x, &y),
        defect: fol.plaque(x0.clone(), p.eps0)?.dist_to(&y0),
        transverse_separation: fol.transverse_separation(&x0, &y0),
        x,
        y,
    };
    Ok(w.validate(f, fol, p.e, p.eps0, p.rho, p.tol)?.then_some(w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub e: f64,
    pub horizon: usize,
    pub witness_found: bool,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansivityScan {
    pub eps0: f64,
    pub rho: f64,
    pub rows: Vec<ScanRow>,
    /// First `(e, N)` with no witness at this resolution.
    pub certified: Option<(f64, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    pub eps0: f64,
    pub rho: f64,
    pub e_start: f64,
    pub horizon_max: usize,
    pub max_halvings: usize,
    pub grid: Grid,
}

impl ScanParams {
    pub fn new(eps0: f64, rho: f64, horizon_max: usize, grid: Grid) -> Self {
        ScanParams {
            eps0,
            rho,
            e_start: 2.0 * eps0,
            horizon_max,
            max_halvings: 4,
            grid,
        }
    }
}

/// Halves `e` from `e_start` and doubles `N` up to `horizon_max` until a
/// search returns no witness.
pub fn expansivity_scan(f: &ToralMap, fol: &LinearFoliation, sp: &ScanParams) -> Result<ExpansivityScan> {
    if sp.horizon_max == 0 {
        return Err(FsError::InvalidInput("horizon_max must be at least 1".into()));
    }
    let mut horizons = Vec::new();
    let mut h = 1;
    while h < sp.horizon_max {
        horizons.push(h);
        h *= 2;
    }
    horizons.push(sp.horizon_max);
    let mut scan = ExpansivityScan {
        eps0: sp.eps0,
        rho: sp.rho,
        rows: Vec::new(),
        certified: None,
    };
    let eta = sp.grid.cell_diameter();
    let mut e = sp.e_start;
    for _ in 0..=sp.max_halvings {
        if e <= eta {
            break;
        }
        for &n in &horizons {
            let p = ExpansivityParams::new(e, sp.eps0, sp.rho, n, sp.grid);
            let report = expansivity_violation_search(f, fol, &p)?;
            let found = report.witness().is_some();
            scan.rows.push(ScanRow {
                e,
                horizon: n,
                witness_found: found,
                stats: report.stats,
            });
            if !found {
                scan.certified = Some((e, n));
                return Ok(scan);
            }
        }
        e /= 2.0;
    }
    Ok(scan)
}

pub fn uniform_expansivity_estimate(
    f: &ToralMap,
    fol: &LinearFoliation,
    sp: &ScanParams,
) -> Result<(f64, usize)> {
    expansivity_scan(f, fol, sp)?
        .certified
        .ok_or(FsError::NotCertified)
}
