//! Finite sequences on the torus and the four chain verifiers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::foliation::LinearFoliation;
use crate::map::ToralMap;
use crate::torus::{torus_dist_unchecked, TorusPoint, TAU_GEOM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<TorusPoint>,
    /// Position of index 0 inside `points` for two-sided segments.
    index_offset: usize,
}

impl Trajectory {
    pub fn new(points: Vec<TorusPoint>, index_offset: usize) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(FsError::InvalidInput("empty trajectory".into()));
        };
        let d = first.dim();
        if points.iter().any(|p| p.dim() != d) {
            return Err(FsError::InvalidInput(
                "trajectory points differ in dimension".into(),
            ));
        }
        if index_offset >= points.len() {
            return Err(FsError::InvalidInput(format!(
                "index offset {index_offset} outside trajectory of length {}",
                points.len()
            )));
        }
        Ok(Trajectory { points, index_offset })
    }

    /// One-sided trajectory starting at index 0.
    pub fn from_points(points: Vec<TorusPoint>) -> Result<Self> {
        Self::new(points, 0)
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn index_offset(&self) -> usize {
        self.index_offset
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    /// Point with signed index `k` (relative to `index_offset`).
    pub fn at(&self, k: i64) -> Option<&TorusPoint> {
        let i = k + self.index_offset as i64;
        usize::try_from(i).ok().and_then(|i| self.points.get(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub valid: bool,
    /// Step `i` (the pair `x_i, x_{i+1}`) with the largest defect.
    pub worst_index: usize,
    pub worst_defect: f64,
}

fn check_dims(f: &ToralMap, fol: Option<&LinearFoliation>, t: &Trajectory) -> Result<()> {
    if f.dim() != t.dim() || fol.is_some_and(|fol| fol.dim() != t.dim()) {
        return Err(FsError::InvalidInput(format!(
            "trajectory of dimension {} does not match the map or foliation",
            t.dim()
        )));
    }
    Ok(())
}

/// Worst step defect; `valid` when every step passes `ok`.
fn scan(
    t: &Trajectory,
    f: &ToralMap,
    mut step: impl FnMut(&TorusPoint, &TorusPoint) -> (f64, bool),
) -> ChainReport {
    let mut report = ChainReport {
        valid: true,
        worst_index: 0,
        worst_defect: 0.0,
    };
    for (i, pair) in t.points.windows(2).enumerate() {
        let fx = f.apply(&pair[0]);
        let (defect, ok) = step(&fx, &pair[1]);
        report.valid &= ok;
        if defect > report.worst_defect {
            report.worst_defect = defect;
            report.worst_index = i;
        }
    }
    report
}

/// `d(f(x_i), x_{i+1}) <= delta` for every step.
pub fn is_pseudo_orbit(f: &ToralMap, t: &Trajectory, delta: f64) -> Result<ChainReport> {
    check_dims(f, None, t)?;
    let mut r = scan(t, f, |fx, y| (torus_dist_unchecked(fx, y), true));
    r.valid = r.worst_defect <= delta + TAU_GEOM;
    Ok(r)
}

/// `f(x_k) ∈ F_eps(x_{k+1})` for every step, leaf membership at `tol`.
pub fn is_foliated_orbit(
    f: &ToralMap,
    fol: &LinearFoliation,
    t: &Trajectory,
    eps: f64,
    tol: f64,
) -> Result<ChainReport> {
    check_dims(f, Some(fol), t)?;
    Ok(scan(t, f, |fx, y| {
        let ok = fol.in_plaque_raw(y.coords(), eps, fx.coords(), tol);
        let defect = fol.membership_defect_raw(y.coords(), eps, fx.coords(), tol);
        (defect.max(0.0), ok)
    }))
}

/// `dist(f(x_i), F_delta(x_{i+1})) <= delta` for every step.
pub fn is_foliated_chain(
    f: &ToralMap,
    fol: &LinearFoliation,
    t: &Trajectory,
    delta: f64,
    tol: f64,
) -> Result<ChainReport> {
    check_dims(f, Some(fol), t)?;
    let mut r = scan(t, f, |fx, y| {
        (fol.dist_to_plaque_raw(y.coords(), delta, fx.coords()), true)
    });
    r.valid = r.worst_defect <= delta + tol;
    Ok(r)
}

/// Random `delta`-pseudo-orbit of length `len` from a uniform start; each
/// step adds a uniformly oriented kick of length uniform in `[0, delta)`.
pub fn random_pseudo_orbit<R: Rng>(f: &ToralMap, len: usize, delta: f64, rng: &mut R) -> Result<Trajectory> {
    let d = f.dim();
    let start: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
    let mut pts = vec![TorusPoint::wrap(&start)?];
    while pts.len() < len {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let r = delta * rng.gen::<f64>();
        let v: Vec<f64> = v.iter().map(|c| c / n * r).collect();
        pts.push(f.apply(pts.last().unwrap()).translate(&v));
    }
    Trajectory::from_points(pts)
}

/// Two-sided segment `g^k(x)`, `k = -n..=n`, with index offset `n`.
pub fn orbit_segment(g: &ToralMap, x: &TorusPoint, n: usize) -> Result<Trajectory> {
    if g.dim() != x.dim() {
        return Err(FsError::InvalidInput(
            "point dimension does not match the map".into(),
        ));
    }
    let mut back = Vec::with_capacity(n);
    let mut y = x.clone();
    for _ in 0..n {
        y = g.apply_inverse(&y)?;
        back.push(y.clone());
    }
    back.reverse();
    back.push(x.clone());
    let mut y = x.clone();
    for _ in 0..n {
        y = g.apply(&y);
        back.push(y.clone());
    }
    Trajectory::new(back, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::torus_dist;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> TorusPoint {
        TorusPoint::wrap(v).unwrap()
    }

    fn cat() -> ToralMap {
        ToralMap::linear(vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    fn a_times_id() -> ToralMap {
        ToralMap::linear(vec![vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]).unwrap()
    }

    fn vertical3() -> LinearFoliation {
        LinearFoliation::linear(3, vec![vec![0, 0, 1]]).unwrap()
    }

    #[test]
    fn true_orbit_is_zero_pseudo_orbit() {
        let f = cat();
        let x = p(&[0.1234, 0.567]);
        let t = Trajectory::from_points(vec![x.clone(), f.apply(&x), f.apply(&f.apply(&x))]).unwrap();
        let r = is_pseudo_orbit(&f, &t, 0.0).unwrap();
        assert!(r.valid);
        assert!(r.worst_defect < 1e-12);
    }

    #[test]
    fn displaced_point_breaks_following_step() {
        let f = cat();
        let x0 = p(&[0.1, 0.2]);
        let x1 = f.apply(&x0);
        let x2 = f.apply(&x1);
        let x1d = x1.translate(&[0.02, 0.0]);
        let x2b = f.apply(&x2);
        let t = Trajectory::from_points(vec![x0, x1d.clone(), x2, x2b]).unwrap();
        let r = is_pseudo_orbit(&f, &t, 0.001).unwrap();
        assert!(!r.valid);
        // f(x1 + 0.02 e1) - x2 = 0.02 (2, 1)
        assert_eq!(r.worst_index, 1);
        assert!((r.worst_defect - 0.02 * 5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn single_step_offset() {
        let f = cat();
        let x = p(&[0.3, 0.7]);
        let y = f.apply(&x).translate(&[0.05, 0.0]);
        let t = Trajectory::from_points(vec![x, y]).unwrap();
        let r = is_pseudo_orbit(&f, &t, 0.05).unwrap();
        assert!(r.valid);
        assert!((r.worst_defect - 0.05).abs() < 1e-12);
        assert!(!is_pseudo_orbit(&f, &t, 0.049).unwrap().valid);
    }

    #[test]
    fn points_foliation_requires_exact_orbit() {
        let f = cat();
        let fol = LinearFoliation::points(2).unwrap();
        let x = p(&[0.3, 0.7]);
        let exact = Trajectory::from_points(vec![x.clone(), f.apply(&x)]).unwrap();
        assert!(is_foliated_orbit(&f, &fol, &exact, 0.3, 1e-9).unwrap().valid);
        let off = Trajectory::from_points(vec![x.clone(), f.apply(&x).translate(&[1e-4, 0.0])]).unwrap();
        assert!(!is_foliated_orbit(&f, &fol, &off, 0.3, 1e-9).unwrap().valid);
    }

    #[test]
    fn vertical_drift_needs_matching_plaque_radius() {
        let f = a_times_id();
        let fol = vertical3();
        let mut pts = vec![p(&[0.2, 0.3, 0.1])];
        for _ in 0..5 {
            let y = f.apply(pts.last().unwrap()).translate(&[0.0, 0.0, 0.1]);
            pts.push(y);
        }
        let t = Trajectory::from_points(pts).unwrap();
        assert!(is_foliated_orbit(&f, &fol, &t, 0.1, 1e-9).unwrap().valid);
        let r = is_foliated_orbit(&f, &fol, &t, 0.05, 1e-9).unwrap();
        assert!(!r.valid);
        assert!((r.worst_defect - 0.05).abs() < 1e-9);
    }

    #[test]
    fn orbit_segment_examples() {
        let f = cat();
        let x = p(&[0.5, 0.5]);
        let t0 = orbit_segment(&f, &x, 0).unwrap();
        assert_eq!(t0.len(), 1);
        let t1 = orbit_segment(&f, &x, 1).unwrap();
        assert_eq!(t1.index_offset(), 1);
        // M^-1 (0.5, 0.5) = (0, 0.5)
        assert!(torus_dist(t1.at(-1).unwrap(), &p(&[0.0, 0.5])).unwrap() < 1e-9);
        assert!(torus_dist(t1.at(1).unwrap(), &p(&[0.5, 0.0])).unwrap() < 1e-12);
        let id = ToralMap::linear(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let t = orbit_segment(&id, &x, 3).unwrap();
        assert!(t.points().iter().all(|y| y == &x));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let t = Trajectory::from_points(vec![p(&[0.1, 0.2, 0.3])]).unwrap();
        assert!(is_pseudo_orbit(&cat(), &t, 0.1).is_err());
        assert!(Trajectory::from_points(vec![p(&[0.1]), p(&[0.1, 0.2])]).is_err());
        assert!(Trajectory::from_points(vec![]).is_err());
    }

    fn random_traj(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.0..1.0f64, d), 2..6)
    }

    fn perturbed_orbit(f: &ToralMap, start: &[f64], kicks: &[Vec<f64>], scale: f64) -> Trajectory {
        let mut pts = vec![p(start)];
        for k in kicks {
            let v: Vec<f64> = k.iter().map(|c| (c - 0.5) * scale).collect();
            pts.push(f.apply(pts.last().unwrap()).translate(&v));
        }
        Trajectory::from_points(pts).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn implication_lattice(start in prop::collection::vec(0.0..1.0f64, 3),
                               kicks in random_traj(3),
                               scale in 0.0..0.3f64,
                               eps in 0.0..0.3f64) {
            let f = a_times_id();
            let fol = vertical3();
            let exact = perturbed_orbit(&f, &start, &kicks, 0.0);
            prop_assert!(is_foliated_orbit(&f, &fol, &exact, eps, 1e-9).unwrap().valid);
            prop_assert!(is_foliated_chain(&f, &fol, &exact, eps, 1e-9).unwrap().valid);

            let t = perturbed_orbit(&f, &start, &kicks, scale);
            if is_foliated_orbit(&f, &fol, &t, eps, 1e-9).unwrap().valid {
                prop_assert!(is_foliated_chain(&f, &fol, &t, eps, 1e-9).unwrap().valid);
            }
            let pseudo = is_pseudo_orbit(&f, &t, eps).unwrap();
            if pseudo.valid {
                prop_assert!(is_foliated_chain(&f, &fol, &t, eps, TAU_GEOM).unwrap().valid);
            }
            let chain = is_foliated_chain(&f, &fol, &t, eps, 0.0).unwrap();
            prop_assert!(chain.worst_defect <= pseudo.worst_defect + 1e-12);
        }

        #[test]
        fn points_foliation_equivalences(start in prop::collection::vec(0.0..1.0f64, 2),
                                         kicks in random_traj(2),
                                         scale in 0.0..0.2f64,
                                         delta in 0.0..0.2f64) {
            let f = cat();
            let fol = LinearFoliation::points(2).unwrap();
            let t = perturbed_orbit(&f, &start, &kicks, scale);
            let pseudo = is_pseudo_orbit(&f, &t, delta).unwrap();
            let chain = is_foliated_chain(&f, &fol, &t, delta, TAU_GEOM).unwrap();
            prop_assert_eq!(pseudo.valid, chain.valid);
            prop_assert!((pseudo.worst_defect - chain.worst_defect).abs() < 1e-12);
            let orbit = is_foliated_orbit(&f, &fol, &t, delta, 1e-9).unwrap();
            let exact = is_pseudo_orbit(&f, &t, 0.0).unwrap();
            prop_assert_eq!(orbit.valid, exact.worst_defect <= 1e-9);
        }

        #[test]
        fn whole_manifold_matches_pseudo_orbit(start in prop::collection::vec(0.0..1.0f64, 2),
                                               kicks in random_traj(2),
                                               scale in 0.0..0.3f64,
                                               eps in 0.0..0.3f64) {
            let f = cat();
            let fol = LinearFoliation::whole_manifold(2).unwrap();
            let t = perturbed_orbit(&f, &start, &kicks, scale);
            let pseudo = is_pseudo_orbit(&f, &t, eps).unwrap();
            let orbit = is_foliated_orbit(&f, &fol, &t, eps, 1e-12).unwrap();
            // away from the boundary of the ball the two checks agree
            prop_assume!((pseudo.worst_defect - eps).abs() > 1e-9);
            prop_assert_eq!(pseudo.valid, orbit.valid);
        }
    }
}
