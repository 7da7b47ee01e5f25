//! Leaf-space dynamics of compact linear foliations.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::foliation::{FoliationKind, LinearFoliation};
use crate::grid::Grid;
use crate::map::{induced_quotient_map, ToralMap};
use crate::orbit::{random_pseudo_orbit, Trajectory};
use crate::semiconj::project_to_orbit;
use crate::shadow::{finite_shadow, ShadowProblem};
use crate::torus::{hausdorff_dist, torus_dist_unchecked, PointSet, TorusPoint, TAU_GEOM};

/// `f/F` on the leaf torus together with its commuting-diagram check.
#[derive(Debug, Clone)]
pub struct QuotientSystem {
    pub foliation: LinearFoliation,
    pub quotient: ToralMap,
    /// `max |Q(pi(x)) - pi(f(x))|` over the check samples.
    pub commutation_defect: f64,
    pub check_samples: usize,
}

impl QuotientSystem {
    pub fn dim(&self) -> usize {
        self.quotient.dim()
    }

    pub fn project(&self, x: &TorusPoint) -> Result<TorusPoint> {
        TorusPoint::wrap(&self.foliation.quotient_project(x)?.0)
    }

    pub fn project_trajectory(&self, t: &Trajectory) -> Result<Trajectory> {
        let pts = t
            .points()
            .iter()
            .map(|x| self.project(x))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(pts, t.index_offset())
    }
}

pub fn build_quotient_system(f: &ToralMap, fol: &LinearFoliation) -> Result<QuotientSystem> {
    let q = induced_quotient_map(f, fol)?;
    let grid = Grid::new(f.dim(), 6)?;
    let mut worst: f64 = 0.0;
    for c in 0..grid.num_cells() {
        let x = grid.cell_center(c);
        let lhs = q.apply(&TorusPoint::wrap(&fol.quotient_project(&x)?.0)?);
        let rhs = TorusPoint::wrap(&fol.quotient_project(&f.apply(&x))?.0)?;
        worst = worst.max(torus_dist_unchecked(&lhs, &rhs));
    }
    if worst > TAU_GEOM {
        return Err(FsError::NotInvariant {
            reason: format!("quotient diagram fails to commute by {worst:e}"),
            witness: vec![0.0; f.dim()],
        });
    }
    Ok(QuotientSystem {
        foliation: fol.clone(),
        quotient: q,
        commutation_defect: worst,
        check_samples: grid.num_cells(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferParams {
    pub delta: f64,
    pub eps: f64,
    pub grid: Grid,
    pub trials: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTrial {
    pub shadow_found: bool,
    /// Largest step defect of the projected pseudo-orbit under `Q`.
    pub projected_pseudo_defect: f64,
    /// Distance of the exact downstairs orbit to the projected pseudo-orbit.
    pub downstairs_distance: f64,
    /// Shift from the projected shadow to that exact orbit.
    pub refinement_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub delta: f64,
    pub eps: f64,
    pub kappa: f64,
    pub trials: Vec<TransferTrial>,
    pub shadow_failures: usize,
    pub worst_projected_pseudo_defect: f64,
    pub worst_downstairs_distance: f64,
    pub pass: bool,
}

/// Shadows random `delta`-pseudo-orbits upstairs, projects both sequences
/// and checks the projected shadow, made exact for `Q`, `eps`-shadows the
/// projected pseudo-orbit.
pub fn transfer_shadowing_check<R: Rng>(
    qs: &QuotientSystem,
    f: &ToralMap,
    p: &TransferParams,
    rng: &mut R,
) -> Result<TransferReport> {
    if qs.foliation.kind() == FoliationKind::WholeManifold {
        return Err(FsError::Unsupported("the leaf space is a point".into()));
    }
    if p.length < 2 {
        return Err(FsError::InvalidInput("pseudo-orbit length below 2".into()));
    }
    let kappa = qs.foliation.transverse_distortion();
    let pseudo: Vec<Trajectory> = (0..p.trials)
        .map(|_| random_pseudo_orbit(f, p.length, p.delta, rng))
        .collect::<Result<_>>()?;
    let trials: Vec<TransferTrial> = pseudo
        .par_iter()
        .map(|t| transfer_trial(qs, f, p, t))
        .collect::<Result<_>>()?;
    let shadow_failures = trials.iter().filter(|t| !t.shadow_found).count();
    let worst_pd = trials
        .iter()
        .map(|t| t.projected_pseudo_defect)
        .fold(0.0, f64::max);
    let worst_dd = trials
        .iter()
        .filter(|t| t.shadow_found)
        .map(|t| t.downstairs_distance)
        .fold(0.0, f64::max);
    Ok(TransferReport {
        delta: p.delta,
        eps: p.eps,
        kappa,
        pass: shadow_failures == 0 && worst_pd <= kappa * p.delta + TAU_GEOM && worst_dd <= p.eps + TAU_GEOM,
        shadow_failures,
        worst_projected_pseudo_defect: worst_pd,
        worst_downstairs_distance: worst_dd,
        trials,
    })
}

fn transfer_trial(
    qs: &QuotientSystem,
    f: &ToralMap,
    p: &TransferParams,
    pseudo: &Trajectory,
) -> Result<TransferTrial> {
    let down = qs.project_trajectory(pseudo)?;
    let projected_pseudo_defect = down
        .points()
        .windows(2)
        .map(|w| torus_dist_unchecked(&qs.quotient.apply(&w[0]), &w[1]))
        .fold(0.0, f64::max);
    let failed = TransferTrial {
        shadow_found: false,
        projected_pseudo_defect,
        downstairs_distance: f64::INFINITY,
        refinement_shift: f64::INFINITY,
    };
    let prob = ShadowProblem::new(f, &qs.foliation, pseudo, p.eps, p.grid);
    let sol = match finite_shadow(&prob) {
        Ok(s) => s,
        Err(FsError::ShadowNotFound { .. }) => return Ok(failed),
        Err(e) => return Err(e),
    };
    let shadow_down = qs.project_trajectory(&sol.trajectory)?;
    let seq: Vec<Vec<f64>> = shadow_down.points().iter().map(|y| y.coords().to_vec()).collect();
    let Some(z) = project_to_orbit(&qs.quotient, &seq) else {
        return Ok(failed);
    };
    let mut downstairs_distance: f64 = 0.0;
    let mut refinement_shift: f64 = 0.0;
    for ((zk, yk), xk) in z.iter().zip(shadow_down.points()).zip(down.points()) {
        let zk = TorusPoint::wrap(zk)?;
        downstairs_distance = downstairs_distance.max(torus_dist_unchecked(&zk, xk));
        refinement_shift = refinement_shift.max(torus_dist_unchecked(&zk, yk));
    }
    Ok(TransferTrial {
        shadow_found: true,
        projected_pseudo_defect,
        downstairs_distance,
        refinement_shift,
    })
}

/// `m^c` points of the compact leaf through `x`, `c` the leaf dimension,
/// starting from the leaf's base point over the origin.
pub fn leaf_samples(fol: &LinearFoliation, x: &TorusPoint, m: usize) -> Result<PointSet> {
    if fol.kind() != FoliationKind::Linear {
        return Err(FsError::Unsupported(
            "leaf sampling needs a linear foliation".into(),
        ));
    }
    let base = fol.move_to_leaf(&TorusPoint::origin(fol.dim()), &fol.quotient_project(x)?.0);
    let dirs = fol.directions();
    let c = dirs.len();
    let mut out = Vec::with_capacity(m.pow(c as u32));
    for code in 0..m.pow(c as u32) {
        let mut rem = code;
        let mut v = vec![0.0; fol.dim()];
        for dir in dirs {
            let t = (rem % m) as f64 / m as f64;
            rem /= m;
            for (vi, &di) in v.iter_mut().zip(dir) {
                *vi += t * di as f64;
            }
        }
        out.push(base.translate(&v));
    }
    PointSet::new(out)
}

/// Hausdorff distance between sampled leaves through `x` and `y`.
pub fn leaf_hausdorff(fol: &LinearFoliation, x: &TorusPoint, y: &TorusPoint, m: usize) -> Result<f64> {
    hausdorff_dist(&leaf_samples(fol, x, m)?, &leaf_samples(fol, y, m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Phase, TrigTerm};
    use crate::orbit::is_pseudo_orbit;
    use crate::shadow::exact_shadow_hyperbolic;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn a_id() -> ToralMap {
        ToralMap::linear(vec![vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]).unwrap()
    }

    fn center() -> LinearFoliation {
        LinearFoliation::linear(3, vec![vec![0, 0, 1]]).unwrap()
    }

    fn vertical() -> LinearFoliation {
        LinearFoliation::linear(2, vec![vec![0, 1]]).unwrap()
    }

    fn skew() -> ToralMap {
        ToralMap::new(
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
        .unwrap()
    }

    #[test]
    fn center_quotient_is_cat_map() {
        let qs = build_quotient_system(&a_id(), &center()).unwrap();
        assert_eq!(qs.quotient.matrix(), &vec![vec![2, 1], vec![1, 1]]);
        assert!(qs.quotient.is_linear());
        assert!(qs.commutation_defect <= 1e-12);
    }

    #[test]
    fn skew_quotient_is_rotation() {
        let qs = build_quotient_system(&skew(), &vertical()).unwrap();
        assert_eq!(qs.dim(), 1);
        for x in [0.0, 0.3, 0.9] {
            let y = qs.quotient.apply(&TorusPoint::wrap(&[x]).unwrap());
            let want = (x + 0.377).rem_euclid(1.0);
            assert!((y.coords()[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn points_quotient_is_f() {
        let f = ToralMap::linear(vec![vec![2, 1], vec![1, 1]]).unwrap();
        let qs = build_quotient_system(&f, &LinearFoliation::points(2).unwrap()).unwrap();
        assert_eq!(qs.quotient.matrix(), f.matrix());
    }

    #[test]
    fn whole_manifold_excluded() {
        let f = ToralMap::linear(vec![vec![2, 1], vec![1, 1]]).unwrap();
        assert!(matches!(
            build_quotient_system(&f, &LinearFoliation::whole_manifold(2).unwrap()),
            Err(FsError::Unsupported(_))
        ));
    }

    #[test]
    fn transfer_on_center_circles() {
        let f = a_id();
        let qs = build_quotient_system(&f, &center()).unwrap();
        let p = TransferParams {
            delta: 0.005,
            eps: 0.05,
            grid: Grid::new(3, 64).unwrap(),
            trials: 50,
            length: 20,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r = transfer_shadowing_check(&qs, &f, &p, &mut rng).unwrap();
        assert!(r.pass, "{r:?}");
        // exact cat-map oracle downstairs
        let cat = qs.quotient.clone();
        let k = crate::shadow::hyperbolic_shadow_constant(&cat).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let t = random_pseudo_orbit(&f, 20, 0.005, &mut rng).unwrap();
            let down = qs.project_trajectory(&t).unwrap();
            assert!(is_pseudo_orbit(&cat, &down, 0.005).unwrap().valid);
            let exact = exact_shadow_hyperbolic(&cat, &down).unwrap();
            for (a, b) in exact.points().iter().zip(down.points()) {
                assert!(torus_dist_unchecked(a, b) <= k * 0.005 + 1e-9);
            }
        }
    }

    #[test]
    fn transfer_points_is_identity_statement() {
        let f = ToralMap::linear(vec![vec![2, 1], vec![1, 1]]).unwrap();
        let qs = build_quotient_system(&f, &LinearFoliation::points(2).unwrap()).unwrap();
        let p = TransferParams {
            delta: 0.005,
            eps: 0.05,
            grid: Grid::new(2, 128).unwrap(),
            trials: 10,
            length: 20,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = transfer_shadowing_check(&qs, &f, &p, &mut rng).unwrap();
        assert!(r.pass);
        assert!(r.worst_projected_pseudo_defect <= 0.005 + 1e-12);
    }

    #[test]
    fn vertical_leaf_hausdorff_matches_quotient_distance() {
        let fol = vertical();
        let qs = build_quotient_system(&skew(), &fol).unwrap();
        for (x, y) in [
            ([0.1, 0.2], [0.35, 0.9]),
            ([0.95, 0.5], [0.05, 0.1]),
            ([0.5, 0.0], [0.5, 0.7]),
        ] {
            let (x, y) = (TorusPoint::wrap(&x).unwrap(), TorusPoint::wrap(&y).unwrap());
            let h = leaf_hausdorff(&fol, &x, &y, 64).unwrap();
            let q = torus_dist_unchecked(&qs.project(&x).unwrap(), &qs.project(&y).unwrap());
            assert!((h - q).abs() <= 1e-12, "{h} {q}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn foliated_orbits_project_to_pseudo_orbits(
            seed in any::<u64>(),
            eps in 0.001f64..0.1,
        ) {
            let f = a_id();
            let fol = center();
            let qs = build_quotient_system(&f, &fol).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            let mut pts = vec![TorusPoint::wrap(&start).unwrap()];
            for _ in 0..15 {
                let dz = eps * rng.gen_range(-1.0..1.0);
                pts.push(f.apply(pts.last().unwrap()).translate(&[0.0, 0.0, dz]));
            }
            let t = Trajectory::from_points(pts).unwrap();
            prop_assert!(crate::orbit::is_foliated_orbit(&f, &fol, &t, eps, 1e-9).unwrap().valid);
            let down = qs.project_trajectory(&t).unwrap();
            let bound = eps * fol.transverse_distortion();
            prop_assert!(is_pseudo_orbit(&qs.quotient, &down, bound).unwrap().valid);
        }
    }
}
