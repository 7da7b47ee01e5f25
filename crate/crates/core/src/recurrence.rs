//! Grid approximation of the foliated chain relation, its strongly connected
//! components, and periodic leaves built from chain loops.

use std::collections::VecDeque;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::foliation::{FoliationKind, LinearFoliation, MAX_DIM};
use crate::grid::Grid;
use crate::map::{induced_quotient_map, ToralMap};
use crate::orbit::Trajectory;
use crate::shadow::{finite_shadow, periodize, ShadowProblem, ShadowSolution};
use crate::torus::{centered, torus_dist_unchecked, TorusPoint};

/// Directed graph on grid cells: `c -> c'` iff
/// `dist(f(center_c), F_{δ+η}(center_c')) <= δ + η`, `η` the cell diameter.
#[derive(Debug)]
pub struct ChainGraph {
    grid: Grid,
    delta: f64,
    eta: f64,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    defects: Vec<f32>,
    scc: OnceLock<Scc>,
}

#[derive(Debug, Clone)]
struct Scc {
    component: Vec<u32>,
    count: usize,
}

impl ChainGraph {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn slack(&self) -> f64 {
        self.eta
    }

    pub fn num_cells(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn successors(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.targets[self.offsets[c]..self.offsets[c + 1]]
            .iter()
            .map(|&t| t as usize)
    }

    /// Successors together with the edge defect `dist(f(center_c), plaque)`.
    pub fn edges(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[c]..self.offsets[c + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.defects[r])
            .map(|(&t, &w)| (t as usize, w as f64))
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.targets[self.offsets[a]..self.offsets[a + 1]]
            .binary_search(&(b as u32))
            .is_ok()
    }

    fn scc(&self) -> &Scc {
        self.scc.get_or_init(|| tarjan(self))
    }

    pub(crate) fn reversed(&self) -> (Vec<usize>, Vec<u32>, Vec<f32>) {
        let n = self.num_cells();
        let mut count = vec![0usize; n + 1];
        for &t in &self.targets {
            count[t as usize + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut src = vec![0u32; self.targets.len()];
        let mut w = vec![0f32; self.targets.len()];
        for c in 0..n {
            for e in self.offsets[c]..self.offsets[c + 1] {
                let t = self.targets[e] as usize;
                src[fill[t]] = c as u32;
                w[fill[t]] = self.defects[e];
                fill[t] += 1;
            }
        }
        (count, src, w)
    }
}

pub fn build_chain_graph(f: &ToralMap, fol: &LinearFoliation, delta: f64, grid: Grid) -> Result<ChainGraph> {
    let d = grid.dim();
    if f.dim() != d || fol.dim() != d {
        return Err(FsError::InvalidInput(
            "map, foliation and grid dimensions differ".into(),
        ));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(FsError::InvalidInput(format!("delta = {delta}")));
    }
    let eta = grid.cell_diameter();
    let thr = delta + eta;
    build_plaque_graph(f, fol, grid, thr, thr, delta)
}

/// Cell graph with `c -> c'` iff `dist(f(center_c), F_radius(center_c')) <= tol`.
pub(crate) fn build_plaque_graph(
    f: &ToralMap,
    fol: &LinearFoliation,
    grid: Grid,
    radius: f64,
    tol: f64,
    delta: f64,
) -> Result<ChainGraph> {
    let d = grid.dim();
    if grid.num_cells() > u32::MAX as usize {
        return Err(FsError::InvalidInput("grid too large".into()));
    }
    let eta = grid.cell_diameter();
    let unit = fol.tangent_reach();
    let mut reach = [0.0; MAX_DIM];
    for i in 0..d {
        reach[i] = tol + radius * unit[i];
    }
    let rows: Vec<Vec<(u32, f32)>> = (0..grid.num_cells())
        .into_par_iter()
        .map(|c| {
            let fc = f.apply_raw(&grid.center_raw(c)[..d]);
            let mut out: Vec<(u32, f32)> = grid
                .cells_in_box(&fc, &reach[..d])
                .into_iter()
                .filter_map(|t| {
                    let ct = grid.center_raw(t);
                    let w = fol.dist_to_plaque_raw(&ct[..d], radius, &fc[..d]);
                    (w <= tol).then_some((t as u32, w as f32))
                })
                .collect();
            out.sort_unstable_by_key(|e| e.0);
            out
        })
        .collect();
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    offsets.push(0);
    let total = rows.iter().map(Vec::len).sum();
    let mut targets = Vec::with_capacity(total);
    let mut defects = Vec::with_capacity(total);
    for row in rows {
        for (t, w) in row {
            targets.push(t);
            defects.push(w);
        }
        offsets.push(targets.len());
    }
    Ok(ChainGraph {
        grid,
        delta,
        eta,
        offsets,
        targets,
        defects,
        scc: OnceLock::new(),
    })
}

/// Iterative Tarjan; component ids in order of completion.
fn tarjan(g: &ChainGraph) -> Scc {
    const UNSEEN: u32 = u32::MAX;
    let n = g.num_cells();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut component = vec![UNSEEN; n];
    let mut stack: Vec<u32> = Vec::new();
    // (vertex, next edge position)
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut count = 0usize;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, g.offsets[root]));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root as u32);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < g.offsets[v + 1] {
                let w = g.targets[*pos] as usize;
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w as u32);
                    on_stack[w] = true;
                    call.push((w, g.offsets[w]));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack") as usize;
                        on_stack[w] = false;
                        component[w] = count as u32;
                        if w == v {
                            break;
                        }
                    }
                    count += 1;
                }
            }
        }
    }
    Scc { component, count }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceResult {
    pub recurrent_cells: Vec<usize>,
    pub scc_count: usize,
    pub delta: f64,
    pub resolution: usize,
    /// `δ <= η`: the slack dominates the chain size.
    pub resolution_limited: bool,
}

fn is_recurrent(g: &ChainGraph, scc: &Scc, sizes: &[u32], c: usize) -> bool {
    sizes[scc.component[c] as usize] >= 2 || g.has_edge(c, c)
}

fn component_sizes(scc: &Scc) -> Vec<u32> {
    let mut sizes = vec![0u32; scc.count];
    for &c in &scc.component {
        sizes[c as usize] += 1;
    }
    sizes
}

/// Cells on a directed cycle: nontrivial component or self-loop.
pub fn chain_recurrent_cells(g: &ChainGraph) -> RecurrenceResult {
    let scc = g.scc();
    let sizes = component_sizes(scc);
    let recurrent_cells = (0..g.num_cells())
        .filter(|&c| is_recurrent(g, scc, &sizes, c))
        .collect();
    RecurrenceResult {
        recurrent_cells,
        scc_count: scc.count,
        delta: g.delta,
        resolution: g.grid.resolution(),
        resolution_limited: g.delta <= g.eta,
    }
}

/// Mutual reachability of the cells of `x` and `y` by paths of length >= 1.
pub fn chain_related(g: &ChainGraph, x: &TorusPoint, y: &TorusPoint) -> bool {
    let (cx, cy) = (g.grid.cell_of(x), g.grid.cell_of(y));
    let scc = g.scc();
    if scc.component[cx] != scc.component[cy] {
        return false;
    }
    cx != cy || is_recurrent(g, scc, &component_sizes(scc), cx)
}

/// Smallest `k <= kmax` with `f^k(x)` on the leaf of `x`.
pub fn detect_leaf_periodic(
    f: &ToralMap,
    fol: &LinearFoliation,
    x: &TorusPoint,
    kmax: usize,
    tol: f64,
) -> Result<Option<usize>> {
    if kmax == 0 {
        return Err(FsError::InvalidInput("kmax must be at least 1".into()));
    }
    if x.dim() != f.dim() || x.dim() != fol.dim() {
        return Err(FsError::InvalidInput("dimension mismatch".into()));
    }
    let mut y = x.clone();
    for k in 1..=kmax {
        y = f.apply(&y);
        if fol.same_leaf(&y, x, tol) {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Breadth-first tree inside one component, preferring the smallest total
/// defect among shortest paths.
#[allow(clippy::too_many_arguments)]
fn bfs_tree(
    root: usize,
    offsets: &[usize],
    targets: &[u32],
    weights: &[f32],
    comp: &[u32],
    depth: &mut [u32],
    cost: &mut [f64],
    parent: &mut [u32],
) {
    let id = comp[root];
    depth[root] = 0;
    cost[root] = 0.0;
    parent[root] = root as u32;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for e in offsets[v]..offsets[v + 1] {
            let w = targets[e] as usize;
            if comp[w] != id {
                continue;
            }
            let c = cost[v] + weights[e] as f64;
            if depth[w] == u32::MAX {
                depth[w] = depth[v] + 1;
                cost[w] = c;
                parent[w] = v as u32;
                queue.push_back(w);
            } else if depth[w] == depth[v] + 1 && c < cost[w] {
                cost[w] = c;
                parent[w] = v as u32;
            }
        }
    }
}

/// A closed cell path `c, ..., c` for every recurrent cell (`None` for the
/// others), routed through one root per component.
pub fn chain_loops(g: &ChainGraph) -> Vec<Option<Vec<usize>>> {
    let n = g.num_cells();
    let scc = g.scc();
    let sizes = component_sizes(scc);
    let (r_off, r_src, r_w) = g.reversed();
    let mut fwd_depth = vec![u32::MAX; n];
    let mut fwd_cost = vec![0.0; n];
    let mut fwd_parent = vec![0u32; n];
    let mut bwd_depth = vec![u32::MAX; n];
    let mut bwd_cost = vec![0.0; n];
    let mut bwd_parent = vec![0u32; n];
    let mut roots = vec![usize::MAX; scc.count];
    for c in 0..n {
        let id = scc.component[c] as usize;
        if roots[id] == usize::MAX && is_recurrent(g, scc, &sizes, c) {
            roots[id] = c;
            bfs_tree(
                c,
                &g.offsets,
                &g.targets,
                &g.defects,
                &scc.component,
                &mut fwd_depth,
                &mut fwd_cost,
                &mut fwd_parent,
            );
            bfs_tree(
                c,
                &r_off,
                &r_src,
                &r_w,
                &scc.component,
                &mut bwd_depth,
                &mut bwd_cost,
                &mut bwd_parent,
            );
        }
    }
    (0..n)
        .map(|c| {
            if !is_recurrent(g, scc, &sizes, c) {
                return None;
            }
            if g.has_edge(c, c) {
                return Some(vec![c, c]);
            }
            let root = roots[scc.component[c] as usize];
            // c -> root along the backward tree
            let mut path = vec![c];
            let mut v = c;
            while v != root {
                v = bwd_parent[v] as usize;
                path.push(v);
            }
            if c == root {
                // close through the cheapest in-neighbour of the root
                let p = (r_off[root]..r_off[root + 1])
                    .map(|e| r_src[e] as usize)
                    .filter(|&p| scc.component[p] == scc.component[root])
                    .min_by_key(|&p| (fwd_depth[p], p))
                    .expect("recurrent root has an in-neighbour in its component");
                let mut tail = vec![p];
                let mut v = p;
                while v != root {
                    v = fwd_parent[v] as usize;
                    tail.push(v);
                }
                tail.reverse();
                tail.push(root);
                return Some(tail);
            }
            // root -> c along the forward tree
            let mut tail = Vec::new();
            let mut v = c;
            while v != root {
                tail.push(v);
                v = fwd_parent[v] as usize;
            }
            tail.reverse();
            path.extend(tail);
            Some(path)
        })
        .collect()
}

/// Cell path rendered as a trajectory of cell centers.
pub fn loop_trajectory(g: &ChainGraph, cells: &[usize]) -> Result<Trajectory> {
    Trajectory::from_points(cells.iter().map(|&c| g.grid.cell_center(c)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopShadowParams {
    /// Required bound on `d(x, y_0)`.
    pub eps: f64,
    /// Candidate radius of the layered search.
    pub shadow_eps: f64,
    pub grid: Grid,
    /// Bound on the transverse separation of `f^r(y_0)` and `y_0`.
    pub tol: f64,
    pub newton_iterations: usize,
}

impl LoopShadowParams {
    pub fn new(eps: f64, grid: Grid) -> Self {
        LoopShadowParams {
            eps,
            shadow_eps: grid.cell_diameter(),
            grid,
            tol: 1e-6,
            newton_iterations: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicLeafCertificate {
    pub y0: TorusPoint,
    pub period: usize,
    pub leaf_return_defect: f64,
    /// `d(x_0, y_0)`.
    pub distance: f64,
    pub shadow: ShadowSolution,
    /// `y_0, f(y_0), ..., f^r(y_0)`.
    pub orbit: Trajectory,
}

/// Periodic orbit of the leaf-space map near a lifted periodic sequence by
/// multiple-shooting Newton. Returns `None` without convergence.
fn newton_periodic(q: &ToralMap, start: &[Vec<f64>], iterations: usize) -> Option<Vec<Vec<f64>>> {
    let r = start.len();
    let m = q.dim();
    let mut z: Vec<Vec<f64>> = start.to_vec();
    for _ in 0..iterations {
        let mut res = DVector::zeros(r * m);
        let mut jac = DMatrix::zeros(r * m, r * m);
        let mut worst: f64 = 0.0;
        for k in 0..r {
            let zk = TorusPoint::wrap_unchecked(&z[k]);
            let img = q.apply_raw(&z[k]);
            let next = (k + 1) % r;
            for i in 0..m {
                let e = centered(img[i] - z[next][i]);
                res[k * m + i] = e;
                worst = worst.max(e.abs());
            }
            let dq = q.jacobian(&zk);
            for i in 0..m {
                for j in 0..m {
                    jac[(k * m + i, k * m + j)] += dq[(i, j)];
                }
                jac[(k * m + i, next * m + i)] -= 1.0;
            }
        }
        if worst < 1e-14 {
            return Some(z);
        }
        let step = jac.lu().solve(&res)?;
        for k in 0..r {
            for i in 0..m {
                z[k][i] -= step[k * m + i];
            }
        }
    }
    let ok = (0..r).all(|k| {
        let img = q.apply_raw(&z[k]);
        (0..m).all(|i| centered(img[i] - z[(k + 1) % r][i]).abs() < 1e-12)
    });
    ok.then_some(z)
}

/// Shadow the periodized loop, then move its initial point within its leaf
/// onto a leaf returning to itself after one period.
pub fn periodic_leaf_from_chain(
    f: &ToralMap,
    fol: &LinearFoliation,
    lp: &Trajectory,
    params: &LoopShadowParams,
) -> Result<PeriodicLeafCertificate> {
    let r = lp.len().saturating_sub(1);
    if r == 0 {
        return Err(FsError::InvalidInput("loop needs at least one step".into()));
    }
    let target = periodize(lp, r)?;
    let prob = ShadowProblem::new(f, fol, &target, params.shadow_eps, params.grid);
    let shadow = finite_shadow(&prob)?;
    let pts = shadow.trajectory.points();
    let start = &pts[r];
    let y0 = match fol.kind() {
        FoliationKind::WholeManifold => start.clone(),
        _ => {
            let q = induced_quotient_map(f, fol)?;
            let seed: Vec<Vec<f64>> = pts[r..2 * r]
                .iter()
                .map(|y| fol.quotient_project(y).map(|p| p.0))
                .collect::<Result<_>>()?;
            let Some(z) = newton_periodic(&q, &seed, params.newton_iterations) else {
                let mut y = f.apply(start);
                for _ in 1..r {
                    y = f.apply(&y);
                }
                return Err(FsError::LeafReturnFailed {
                    defect: fol.transverse_separation(&y, start),
                });
            };
            fol.move_to_leaf(start, &z[0])
        }
    };
    let mut orbit = vec![y0.clone()];
    for _ in 0..r {
        orbit.push(f.apply(orbit.last().unwrap()));
    }
    let defect = fol.transverse_separation(&orbit[r], &y0);
    if !(defect <= params.tol) {
        return Err(FsError::LeafReturnFailed { defect });
    }
    Ok(PeriodicLeafCertificate {
        distance: torus_dist_unchecked(&lp.points()[0], &y0),
        y0,
        period: r,
        leaf_return_defect: defect,
        shadow,
        orbit: Trajectory::from_points(orbit)?,
    })
}

/// Certificate summary for one recurrent cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCertificate {
    pub cell: usize,
    pub period: usize,
    pub y0: Option<TorusPoint>,
    pub distance: f64,
    pub leaf_return_defect: f64,
    pub error: Option<String>,
}

/// Runs `periodic_leaf_from_chain` on the loop of every recurrent cell.
pub fn certify_recurrent_cells(
    f: &ToralMap,
    fol: &LinearFoliation,
    g: &ChainGraph,
    params: &LoopShadowParams,
) -> Vec<CellCertificate> {
    let loops = chain_loops(g);
    let cells: Vec<(usize, Vec<usize>)> = loops
        .into_iter()
        .enumerate()
        .filter_map(|(c, l)| l.map(|l| (c, l)))
        .collect();
    cells
        .into_par_iter()
        .map(|(cell, path)| {
            let period = path.len() - 1;
            let res = loop_trajectory(g, &path).and_then(|lp| periodic_leaf_from_chain(f, fol, &lp, params));
            match res {
                Ok(c) => CellCertificate {
                    cell,
                    period,
                    y0: Some(c.y0),
                    distance: c.distance,
                    leaf_return_defect: c.leaf_return_defect,
                    error: None,
                },
                Err(e) => CellCertificate {
                    cell,
                    period,
                    y0: None,
                    distance: f64::INFINITY,
                    leaf_return_defect: f64::INFINITY,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Phase, TrigTerm};
    use crate::torus::torus_dist;

    fn p(v: &[f64]) -> TorusPoint {
        TorusPoint::wrap(v).unwrap()
    }

    fn cat() -> ToralMap {
        ToralMap::linear(vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    fn a_times_id() -> ToralMap {
        ToralMap::linear(vec![vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]).unwrap()
    }

    /// Degree-one circle map `x + 0.05 sin(2πx)` with fixed points 0 and 1/2.
    fn north_south() -> ToralMap {
        ToralMap::new(
            vec![vec![1]],
            vec![TrigTerm {
                freq: vec![1],
                coeff: vec![0.05],
                phase: Phase::Sin,
            }],
        )
        .unwrap()
    }

    fn closure(g: &ChainGraph) -> Vec<Vec<bool>> {
        let n = g.num_cells();
        let mut reach = vec![vec![false; n]; n];
        for (c, row) in reach.iter_mut().enumerate() {
            let mut stack: Vec<usize> = g.successors(c).collect();
            while let Some(v) = stack.pop() {
                if !row[v] {
                    row[v] = true;
                    stack.extend(g.successors(v));
                }
            }
        }
        reach
    }

    #[test]
    fn identity_has_self_loops() {
        let f = ToralMap::linear(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let fol = LinearFoliation::points(2).unwrap();
        let grid = Grid::new(2, 8).unwrap();
        let g = build_chain_graph(&f, &fol, grid.cell_diameter(), grid).unwrap();
        assert!((0..g.num_cells()).all(|c| g.has_edge(c, c)));
        assert_eq!(chain_recurrent_cells(&g).recurrent_cells.len(), 64);
    }

    #[test]
    fn whole_manifold_is_complete() {
        let f = ToralMap::linear(vec![vec![1]]).unwrap();
        let fol = LinearFoliation::whole_manifold(1).unwrap();
        let g = build_chain_graph(&f, &fol, 0.6, Grid::new(1, 10).unwrap()).unwrap();
        assert_eq!(g.num_edges(), 100);
    }

    #[test]
    fn edges_match_direct_enumeration() {
        let f = cat();
        let fol = LinearFoliation::points(2).unwrap();
        let grid = Grid::new(2, 64).unwrap();
        let g = build_chain_graph(&f, &fol, 0.01, grid).unwrap();
        let thr = 0.01 + grid.cell_diameter();
        for i in 0..8 {
            for j in 0..8 {
                let c = grid.flat_index(&[i * 8, j * 8]);
                let fc = f.apply(&grid.cell_center(c));
                let want: Vec<usize> = (0..grid.num_cells())
                    .filter(|&t| torus_dist(&fc, &grid.cell_center(t)).unwrap() <= thr)
                    .collect();
                assert_eq!(g.successors(c).collect::<Vec<_>>(), want);
            }
        }
    }

    #[test]
    fn scc_matches_transitive_closure() {
        for (f, fol, n, delta) in [
            (cat(), LinearFoliation::points(2).unwrap(), 16, 0.01),
            (north_south(), LinearFoliation::points(1).unwrap(), 200, 0.002),
            (
                a_times_id(),
                LinearFoliation::linear(3, vec![vec![0, 0, 1]]).unwrap(),
                6,
                0.01,
            ),
        ] {
            let grid = Grid::new(f.dim(), n).unwrap();
            let g = build_chain_graph(&f, &fol, delta, grid).unwrap();
            let reach = closure(&g);
            let scc = g.scc();
            for a in 0..g.num_cells() {
                assert!(g.successors(a).count() >= 1);
                for b in 0..g.num_cells() {
                    let same = scc.component[a] == scc.component[b];
                    assert_eq!(same, a == b || (reach[a][b] && reach[b][a]));
                }
            }
            let rec = chain_recurrent_cells(&g);
            let want: Vec<usize> = (0..g.num_cells()).filter(|&c| reach[c][c]).collect();
            assert_eq!(rec.recurrent_cells, want);
        }
    }

    #[test]
    fn cat_map_is_chain_transitive() {
        let f = cat();
        let fol = LinearFoliation::points(2).unwrap();
        let grid = Grid::new(2, 64).unwrap();
        let g = build_chain_graph(&f, &fol, 0.02, grid).unwrap();
        let rec = chain_recurrent_cells(&g);
        assert!(rec.recurrent_cells.len() as f64 >= 0.99 * grid.num_cells() as f64);
        assert!(chain_related(&g, &p(&[0.1, 0.9]), &p(&[0.7, 0.3])));
    }

    #[test]
    fn north_south_recurrence_sits_at_fixed_points() {
        let f = north_south();
        let fol = LinearFoliation::points(1).unwrap();
        let grid = Grid::new(1, 400).unwrap();
        let g = build_chain_graph(&f, &fol, 0.001, grid).unwrap();
        let rec = chain_recurrent_cells(&g);
        assert!(!rec.recurrent_cells.is_empty());
        for &c in &rec.recurrent_cells {
            let x = grid.cell_center(c).coords()[0];
            let to_fixed = x.min((x - 0.5).abs()).min(1.0 - x);
            assert!(to_fixed < 0.05, "recurrent cell at {x}");
        }
        // 1/2 repels, 0 attracts
        assert!(!chain_related(&g, &p(&[0.02]), &p(&[0.5])));
        assert!(chain_related(&g, &p(&[0.5]), &p(&[0.5])));
    }

    #[test]
    fn recurrence_is_monotone_in_delta() {
        let f = north_south();
        let fol = LinearFoliation::points(1).unwrap();
        let grid = Grid::new(1, 300).unwrap();
        let mut prev: Vec<usize> = Vec::new();
        for delta in [0.0005, 0.002, 0.005, 0.01, 0.05] {
            let g = build_chain_graph(&f, &fol, delta, grid).unwrap();
            let rec = chain_recurrent_cells(&g).recurrent_cells;
            assert!(prev.iter().all(|c| rec.binary_search(c).is_ok()));
            prev = rec;
        }
    }

    #[test]
    fn leaf_periodic_detection() {
        let fol0 = LinearFoliation::points(2).unwrap();
        assert_eq!(
            detect_leaf_periodic(&cat(), &fol0, &p(&[0.0, 0.0]), 5, 1e-9).unwrap(),
            Some(1)
        );
        // (1/2, 0) -> (0, 1/2) -> (1/2, 1/2) -> (1/2, 0) under A
        let f = a_times_id();
        let fol = LinearFoliation::linear(3, vec![vec![0, 0, 1]]).unwrap();
        for z in [0.0, 0.3, 0.77] {
            let x = p(&[0.5, 0.0, z]);
            assert_eq!(detect_leaf_periodic(&f, &fol, &x, 10, 1e-9).unwrap(), Some(3));
        }
        let skew = ToralMap::new(
            vec![vec![1, 0], vec![0, 1]],
            vec![
                TrigTerm {
                    freq: vec![0, 0],
                    coeff: vec![0.377, 0.0],
                    phase: Phase::Cos,
                },
                TrigTerm {
                    freq: vec![1, 0],
                    coeff: vec![0.0, 0.1],
                    phase: Phase::Sin,
                },
            ],
        )
        .unwrap();
        let vert = LinearFoliation::linear(2, vec![vec![0, 1]]).unwrap();
        assert_eq!(
            detect_leaf_periodic(&skew, &vert, &p(&[0.1, 0.2]), 50, 1e-9).unwrap(),
            None
        );
    }

    #[test]
    fn exact_periodic_loop_is_its_own_leaf() {
        let f = cat();
        let fol = LinearFoliation::points(2).unwrap();
        let a = p(&[0.8, 0.6]);
        let lp = Trajectory::from_points(vec![a.clone(), f.apply(&a), a.clone()]).unwrap();
        let params = LoopShadowParams::new(0.05, Grid::new(2, 32).unwrap());
        let cert = periodic_leaf_from_chain(&f, &fol, &lp, &params).unwrap();
        assert!(cert.distance < 1e-12);
        assert!(cert.leaf_return_defect < 1e-12);
        assert_eq!(cert.period, 2);
    }

    /// All points with `(A^k - I) v ≡ 0 mod 1`.
    fn periodic_points(k: u32) -> Vec<[f64; 2]> {
        let mut m = [[1i64, 0], [0, 1]];
        for _ in 0..k {
            m = [
                [2 * m[0][0] + m[1][0], 2 * m[0][1] + m[1][1]],
                [m[0][0] + m[1][0], m[0][1] + m[1][1]],
            ];
        }
        let b = [[m[0][0] - 1, m[0][1]], [m[1][0], m[1][1] - 1]];
        let det = (b[0][0] * b[1][1] - b[0][1] * b[1][0]) as f64;
        let n = det.abs() as i64;
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = [
                    (b[1][1] * i - b[0][1] * j) as f64 / det,
                    (-b[1][0] * i + b[0][0] * j) as f64 / det,
                ];
                let w = [v[0].rem_euclid(1.0), v[1].rem_euclid(1.0)];
                if !out.iter().any(|u: &[f64; 2]| {
                    (centered(u[0] - w[0]).abs() < 1e-9) && (centered(u[1] - w[1]).abs() < 1e-9)
                }) {
                    out.push(w);
                }
            }
        }
        out
    }

    #[test]
    fn noisy_five_loop_lands_on_period_five_point() {
        let f = cat();
        let fol = LinearFoliation::points(2).unwrap();
        let per5 = periodic_points(5);
        assert_eq!(per5.len(), 121);
        let x = per5.iter().find(|v| v[0] > 0.1 && v[1] > 0.1).unwrap();
        let mut pts = vec![p(x)];
        for _ in 0..5 {
            pts.push(f.apply(pts.last().unwrap()));
        }
        pts[5] = pts[0].clone();
        for (k, q) in pts.iter_mut().enumerate().take(5).skip(1) {
            *q = q.translate(&[0.003 * (k as f64 - 2.0), -0.002]);
        }
        let lp = Trajectory::from_points(pts).unwrap();
        let params = LoopShadowParams::new(0.05, Grid::new(2, 64).unwrap());
        let cert = periodic_leaf_from_chain(&f, &fol, &lp, &params).unwrap();
        assert!(cert.leaf_return_defect < 1e-9);
        let near = per5
            .iter()
            .map(|v| torus_dist(&p(v), &cert.y0).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(near < 1e-9);
        assert!(cert.distance <= 0.05);
    }

    #[test]
    fn loops_through_recurrent_cells_are_chains() {
        let f = a_times_id();
        let fol = LinearFoliation::linear(3, vec![vec![0, 0, 1]]).unwrap();
        let grid = Grid::new(3, 8).unwrap();
        let g = build_chain_graph(&f, &fol, 0.02, grid).unwrap();
        let loops = chain_loops(&g);
        let rec = chain_recurrent_cells(&g);
        for &c in &rec.recurrent_cells {
            let l = loops[c].as_ref().unwrap();
            assert_eq!((l[0], *l.last().unwrap()), (c, c));
            assert!(l.windows(2).all(|w| g.has_edge(w[0], w[1])));
        }
        let params = LoopShadowParams::new(0.5, grid);
        for &c in rec.recurrent_cells.iter().take(20) {
            let lp = loop_trajectory(&g, loops[c].as_ref().unwrap()).unwrap();
            let cert = periodic_leaf_from_chain(&f, &fol, &lp, &params).unwrap();
            assert!(cert.leaf_return_defect <= 1e-6);
        }
    }
}
