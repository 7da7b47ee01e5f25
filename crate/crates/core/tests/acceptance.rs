//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use foliashadow::expansivity::{expansivity_violation_search, ExpansivityParams};
use foliashadow::foliation::LinearFoliation;
use foliashadow::grid::Grid;
use foliashadow::map::{Phase, ToralMap, TrigTerm};
use foliashadow::orbit::{
    is_foliated_chain, is_foliated_orbit, is_pseudo_orbit, random_pseudo_orbit, Trajectory,
};
use foliashadow::recurrence::{
    build_chain_graph, certify_recurrent_cells, chain_recurrent_cells, ChainGraph, LoopShadowParams,
};
use foliashadow::scenario::{auto_resolution, builtin_scenario, run_scenario, Step};
use foliashadow::semiconj::{
    construct_semiconjugation, horizon_truncation_bound, paired_samples, verify_foliated_continuity,
    verify_stability_contract, SampleSet, SemiconjParams,
};
use foliashadow::shadow::{
    exact_shadow_hyperbolic, finite_shadow, hyperbolic_shadow_constant, ShadowProblem,
};
use foliashadow::torus::{torus_dist, TorusPoint, TAU_GEOM};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn centered(c: f64) -> f64 {
    c - c.round()
}

fn p(v: &[f64]) -> TorusPoint {
    TorusPoint::wrap(v).unwrap()
}

fn cat() -> ToralMap {
    ToralMap::linear(vec![vec![2, 1], vec![1, 1]]).unwrap()
}

fn a_times_id() -> ToralMap {
    ToralMap::linear(vec![vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]).unwrap()
}

fn skew_rotation() -> ToralMap {
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

fn stability_pair() -> (ToralMap, ToralMap) {
    let f = cat();
    let g = f
        .perturbed(vec![TrigTerm {
            freq: vec![0, 1],
            coeff: vec![0.002, 0.0],
            phase: Phase::Sin,
        }])
        .unwrap();
    (f, g)
}

fn max_dist(a: &Trajectory, b: &Trajectory) -> f64 {
    a.points()
        .iter()
        .zip(b.points())
        .map(|(x, y)| torus_dist(x, y).unwrap())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let f = cat();
    let fol = LinearFoliation::points(2).unwrap();
    let grid = Grid::new(2, 128).unwrap();
    let (delta, eps) = (0.002, 0.02);
    let k = hyperbolic_shadow_constant(&f).unwrap();
    // eigenvalues (3 ± √5)/2 give K = 2/(1 - (3 - √5)/2)
    let k_oracle = 2.0 / (1.0 - (3.0 - 5f64.sqrt()) / 2.0);
    let bound = grid.cell_diameter() + delta * k;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut found = 0;
    for _ in 0..100 {
        let t = random_pseudo_orbit(&f, 50, delta, &mut rng).unwrap();
        let prob = ShadowProblem::new(&f, &fol, &t, eps, grid).grid_only();
        if let Ok(sol) = finite_shadow(&prob) {
            found += 1;
            let exact = exact_shadow_hyperbolic(&f, &t).unwrap();
            worst = worst.max(max_dist(&exact, &sol.trajectory));
        }
    }
    let pass = (k - k_oracle).abs() < 1e-9 && found == 100 && worst <= bound + TAU_GEOM;
    (
        pass,
        format!("K_A = {k:.6}, shadows {found}/100, worst oracle distance {worst:.6} <= bound {bound:.6}"),
    )
}

/// `A^k - I` for the cat map, as integers.
fn cat_power_minus_identity(k: u32) -> [[i64; 2]; 2] {
    let mut m = [[1i64, 0], [0, 1]];
    for _ in 0..k {
        m = [
            [2 * m[0][0] + m[1][0], 2 * m[0][1] + m[1][1]],
            [m[0][0] + m[1][0], m[0][1] + m[1][1]],
        ];
    }
    m[0][0] -= 1;
    m[1][1] -= 1;
    m
}

/// Points `v` of `[0,1)^2` with `(A^k - I) v ≡ 0 mod 1`, `k <= kmax`.
fn cat_periodic_points(kmax: u32) -> Vec<[f64; 2]> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for k in 1..=kmax {
        let m = cat_power_minus_identity(k);
        let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs();
        for a in 0..det {
            for b in 0..det {
                let r0 = (m[0][0] * a + m[0][1] * b).rem_euclid(det);
                let r1 = (m[1][0] * a + m[1][1] * b).rem_euclid(det);
                if r0 == 0 && r1 == 0 {
                    let g = gcd(gcd(a, b), det);
                    if seen.insert((a / g, b / g, det / g)) {
                        out.push([a as f64 / det as f64, b as f64 / det as f64]);
                    }
                }
            }
        }
    }
    out
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn criterion_2() -> Outcome {
    let f = a_times_id();
    let fol = LinearFoliation::linear(3, vec![vec![0, 0, 1]]).unwrap();
    let grid = Grid::new(3, 32).unwrap();
    let eps = 0.1;
    let g = build_chain_graph(&f, &fol, 0.02, grid).unwrap();
    let rr = chain_recurrent_cells(&g);
    let mut params = LoopShadowParams::new(eps, grid);
    params.tol = 1e-6;
    let certs = certify_recurrent_cells(&f, &fol, &g, &params);
    let certified = certs
        .iter()
        .filter(|c| c.error.is_none() && c.distance <= eps + TAU_GEOM && c.leaf_return_defect <= 1e-6)
        .count();
    // base coordinate of y0 must be A-periodic with the certificate's period
    let a = cat();
    let mut base_defect: f64 = 0.0;
    for c in &certs {
        if let Some(y) = &c.y0 {
            let b = p(&y.coords()[..2]);
            let back = a.iterate(&b, c.period as i64).unwrap();
            base_defect = base_defect.max(torus_dist(&back, &b).unwrap());
        }
    }
    let per = cat_periodic_points(8);
    let mut density: f64 = 0.0;
    for &cell in &rr.recurrent_cells {
        let c = grid.cell_center(cell);
        let x = c.coords();
        let near = per
            .iter()
            .map(|v| {
                let (d0, d1) = (centered(x[0] - v[0]), centered(x[1] - v[1]));
                (d0 * d0 + d1 * d1).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        density = density.max(near);
    }
    let n = rr.recurrent_cells.len();
    let pass = n > 0 && certified == n && certs.len() == n && base_defect <= 1e-6 && density <= eps;
    (
        pass,
        format!(
            "{certified}/{n} recurrent cells certified, base period defect {base_defect:.2e}, \
             {} periodic points (period <= 8) within {density:.4} of every recurrent cell",
            per.len()
        ),
    )
}

fn criterion_3() -> Outcome {
    let (f, g) = stability_pair();
    let fol = LinearFoliation::points(2).unwrap();
    let grid = Grid::new(2, 256).unwrap();
    let eps = 0.05;
    let eps_prime = eps / 8.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples = SampleSet::random_orbits(&g, 500, 10, &mut rng);
    let h =
        construct_semiconjugation(&f, &fol, &g, &SemiconjParams::new(eps_prime, 20, grid), &samples).unwrap();
    let r = verify_stability_contract(&h, &f, &g, &fol, eps, grid.cell_diameter()).unwrap();
    let mut spread: f64 = 0.0;
    for i in 0..h.len() {
        let img: Vec<&TorusPoint> = h.image(i).collect();
        for a in &img {
            for b in &img {
                spread = spread.max(torus_dist(a, b).unwrap());
            }
        }
    }
    let pass = h.len() == 500
        && r.c0_bound <= eps_prime + TAU_GEOM
        && r.step_inclusion_defect <= grid.cell_diameter()
        && r.valuation_defect <= 1e-6
        && spread <= grid.cell_diameter()
        && r.pass;
    (
        pass,
        format!(
            "sup d(H(x),x) = {:.3e} <= {eps_prime}, step defect {:.3e} <= {:.3e}, valuation {:.1e}, image spread {spread:.1e}",
            r.c0_bound,
            r.step_inclusion_defect,
            grid.cell_diameter(),
            r.valuation_defect
        ),
    )
}

fn criterion_4() -> Outcome {
    let (f, g) = stability_pair();
    let fol = LinearFoliation::points(2).unwrap();
    let grid = Grid::new(2, 256).unwrap();
    let (eps, eps_prime) = (0.05, 0.05 / 8.0);
    let deltas = [0.1, 0.01, 0.001];
    let horizons = [10usize, 20, 40];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base: Vec<TorusPoint> = (0..20).map(|_| p(&[rng.gen(), rng.gen()])).collect();
    let pairs: Vec<_> = deltas
        .iter()
        .map(|&d| paired_samples(&base, d, &mut rng))
        .collect();
    let mut rho = vec![vec![0.0; deltas.len()]; horizons.len()];
    for (hi, &n) in horizons.iter().enumerate() {
        let params = SemiconjParams::new(eps_prime, n, grid);
        for (di, (&delta, (s, pr))) in deltas.iter().zip(&pairs).enumerate() {
            let h = construct_semiconjugation(&f, &fol, &g, &params, s).unwrap();
            rho[hi][di] = verify_foliated_continuity(&h, &fol, eps, None, delta, pr)
                .unwrap()
                .observed_rho;
        }
    }
    let mono_delta = rho.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let mut mono_n = true;
    let mut strict = false;
    for di in 0..deltas.len() {
        for (hi, &n) in horizons.iter().enumerate() {
            let tol = horizon_truncation_bound(&f, eps_prime, n);
            for hj in hi + 1..horizons.len() {
                mono_n &= rho[hj][di] <= rho[hi][di] + tol;
                strict |= rho[hj][di] < rho[hi][di];
            }
        }
    }
    let table: Vec<String> = horizons
        .iter()
        .zip(&rho)
        .map(|(n, row)| {
            let vals: Vec<String> = row.iter().map(|r| format!("{r:.10}")).collect();
            format!("N={n}: [{}]", vals.join(", "))
        })
        .collect();
    (
        mono_delta && mono_n,
        format!(
            "rho nonincreasing in delta: {mono_delta}; nonincreasing in N within truncation bound: {mono_n} \
             (strict decrease observed: {strict}); {}",
            table.join("; ")
        ),
    )
}

fn criterion_5() -> Outcome {
    let f = skew_rotation();
    let fol = LinearFoliation::linear(2, vec![vec![0, 1]]).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for e in [0.1, 0.05, 0.02] {
        let eps0 = e / 5.0;
        let grid = Grid::new(2, auto_resolution(2, e)).unwrap();
        let t0 = Instant::now();
        let report =
            expansivity_violation_search(&f, &fol, &ExpansivityParams::new(e, eps0, eps0, 100, grid));
        let secs = t0.elapsed().as_secs_f64();
        let Ok(report) = report else {
            ok = false;
            parts.push(format!("e={e}: error {report:?}"));
            continue;
        };
        let Some(w) = report.witness() else {
            ok = false;
            parts.push(format!("e={e}: no witness"));
            continue;
        };
        let valid = w.validate(&f, &fol, e, eps0, eps0, 1e-9).unwrap_or(false);
        let qx: Vec<f64> =
            w.x.points()
                .iter()
                .map(|x| fol.quotient_project(x).unwrap().0[0])
                .collect();
        let qy: Vec<f64> =
            w.y.points()
                .iter()
                .map(|y| fol.quotient_project(y).unwrap().0[0])
                .collect();
        let gaps: Vec<f64> = qx.iter().zip(&qy).map(|(a, b)| centered(a - b).abs()).collect();
        let gap_spread =
            gaps.iter().cloned().fold(f64::MIN, f64::max) - gaps.iter().cloned().fold(f64::MAX, f64::min);
        let rot_defect = qx
            .windows(2)
            .chain(qy.windows(2))
            .map(|s| (centered(s[1] - s[0]).abs() - 0.377).abs())
            .fold(0.0, f64::max);
        let sep_match = (w.defect - w.transverse_separation).abs();
        let good = valid && gap_spread <= 1e-9 && rot_defect <= 1e-9 && sep_match <= 1e-9 && secs < 60.0;
        ok &= good;
        parts.push(format!(
            "e={e}: witness defect {:.4e}, |defect - separation| {sep_match:.1e}, quotient gap spread {gap_spread:.1e}, \
             rotation defect {rot_defect:.1e}, {secs:.1}s",
            w.defect
        ));
    }
    (ok, parts.join("; "))
}

fn random_trajectories(f: &ToralMap, count: usize, seed: u64) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = f.dim();
    (0..count)
        .map(|i| match i % 3 {
            0 => random_pseudo_orbit(f, 12, 0.0, &mut rng).unwrap(),
            1 => {
                let delta = rng.gen_range(0.0..0.2);
                random_pseudo_orbit(f, 12, delta, &mut rng).unwrap()
            }
            _ => {
                let pts = (0..12)
                    .map(|_| p(&(0..d).map(|_| rng.gen()).collect::<Vec<_>>()))
                    .collect();
                Trajectory::from_points(pts).unwrap()
            }
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let f = cat();
    let whole = LinearFoliation::whole_manifold(2).unwrap();
    let points = LinearFoliation::points(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let mut compared = 0;
    for t in random_trajectories(&f, 100, 60) {
        let eps = rng.gen_range(0.01..0.3);
        let pseudo = is_pseudo_orbit(&f, &t, eps).unwrap();
        if (pseudo.worst_defect - eps).abs() > 1e-9 {
            compared += 1;
            if is_foliated_orbit(&f, &whole, &t, eps, 1e-12).unwrap().valid != pseudo.valid {
                mismatches += 1;
            }
        }
        let chain = is_foliated_chain(&f, &points, &t, eps, TAU_GEOM).unwrap();
        if chain.valid != pseudo.valid || (chain.worst_defect - pseudo.worst_defect).abs() > 1e-12 {
            mismatches += 1;
        }
        let orbit = is_foliated_orbit(&f, &points, &t, eps, 1e-9).unwrap();
        if orbit.valid != (is_pseudo_orbit(&f, &t, 0.0).unwrap().worst_defect <= 1e-9) {
            mismatches += 1;
        }
        let (c, y) = (&t.points()[0], &t.points()[1]);
        if (points.plaque(c.clone(), eps).unwrap().dist_to(y) - torus_dist(c, y).unwrap()).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    let grid = Grid::new(2, 16).unwrap();
    let mut shadow_ok = 0;
    for _ in 0..100 {
        let delta = rng.gen_range(0.0..0.1);
        let t = random_pseudo_orbit(&f, 15, delta, &mut rng).unwrap();
        if let Ok(sol) = finite_shadow(&ShadowProblem::new(&f, &whole, &t, 0.1, grid)) {
            if sol.trajectory == t {
                shadow_ok += 1;
            }
        }
    }
    (
        mismatches == 0 && shadow_ok == 100,
        format!(
            "{mismatches} mismatches over 100 trajectories ({compared} whole-manifold comparisons), \
             whole-manifold shadow = target in {shadow_ok}/100"
        ),
    )
}

fn runner() -> TestRunner {
    let config = Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn unit_pt(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, d)
}

fn reachable_from(g: &ChainGraph, c: usize) -> Vec<bool> {
    let mut seen = vec![false; g.num_cells()];
    let mut stack: Vec<usize> = g.successors(c).collect();
    while let Some(v) = stack.pop() {
        if !seen[v] {
            seen[v] = true;
            stack.extend(g.successors(v));
        }
    }
    seen
}

fn criterion_7() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut record = |name: &str, r: Result<(), String>| {
        ok &= r.is_ok();
        lines.push(match r {
            Ok(()) => format!("{name} ok"),
            Err(e) => format!("{name} violated: {e}"),
        });
    };

    let lattice = runner().run(
        &(
            unit_pt(3),
            prop::collection::vec(unit_pt(3), 1..6),
            0.0..0.3f64,
            0.0..0.3f64,
        ),
        |(start, kicks, scale, eps)| {
            let f = a_times_id();
            let fol = LinearFoliation::linear(3, vec![vec![0, 0, 1]]).unwrap();
            let build = |s: f64| {
                let mut pts = vec![p(&start)];
                for k in &kicks {
                    let v: Vec<f64> = k.iter().map(|c| (c - 0.5) * s).collect();
                    pts.push(f.apply(pts.last().unwrap()).translate(&v));
                }
                Trajectory::from_points(pts).unwrap()
            };
            let exact = build(0.0);
            prop_assert!(is_foliated_orbit(&f, &fol, &exact, eps, 1e-9).unwrap().valid);
            prop_assert!(is_foliated_chain(&f, &fol, &exact, eps, 1e-9).unwrap().valid);
            let t = build(scale);
            if is_foliated_orbit(&f, &fol, &t, eps, 1e-9).unwrap().valid {
                prop_assert!(is_foliated_chain(&f, &fol, &t, eps, 1e-9).unwrap().valid);
            }
            if is_pseudo_orbit(&f, &t, eps).unwrap().valid {
                prop_assert!(is_foliated_chain(&f, &fol, &t, eps, TAU_GEOM).unwrap().valid);
            }
            Ok(())
        },
    );
    record("orbit implication lattice", lattice.map_err(|e| e.to_string()));

    let recurrence = runner().run(
        &(0usize..3, 0usize..3, 4usize..10, 0.005..0.15f64, 0.0..0.15f64),
        |(mi, fi, n, d1, extra)| {
            let f = [
                cat(),
                ToralMap::linear(vec![vec![1, 1], vec![0, 1]]).unwrap(),
                skew_rotation(),
            ][mi]
                .clone();
            let fol = [
                LinearFoliation::points(2).unwrap(),
                LinearFoliation::linear(2, vec![vec![0, 1]]).unwrap(),
                LinearFoliation::whole_manifold(2).unwrap(),
            ][fi]
                .clone();
            let grid = Grid::new(2, n).unwrap();
            let g1 = build_chain_graph(&f, &fol, d1, grid).unwrap();
            let g2 = build_chain_graph(&f, &fol, d1 + extra, grid).unwrap();
            let r1 = chain_recurrent_cells(&g1).recurrent_cells;
            let r2 = chain_recurrent_cells(&g2).recurrent_cells;
            for c in &r1 {
                prop_assert!(r2.binary_search(c).is_ok(), "cell {} lost when delta grew", c);
            }
            for c in 0..g1.num_cells() {
                prop_assert!(g1.successors(c).next().is_some(), "cell {} has no successor", c);
                let on_cycle = reachable_from(&g1, c)[c];
                prop_assert_eq!(on_cycle, r1.binary_search(&c).is_ok());
            }
            Ok(())
        },
    );
    record(
        "chain recurrence monotonicity and SCC oracle",
        recurrence.map_err(|e| e.to_string()),
    );

    let plaques = runner().run(
        &(
            unit_pt(2),
            unit_pt(2),
            unit_pt(2),
            0.0..0.4f64,
            0.0..0.2f64,
            0usize..5,
        ),
        |(c, y, z, e1, de, which)| {
            let fol = [
                LinearFoliation::points(2).unwrap(),
                LinearFoliation::linear(2, vec![vec![0, 1]]).unwrap(),
                LinearFoliation::linear(2, vec![vec![1, 1]]).unwrap(),
                LinearFoliation::linear(2, vec![vec![1, 2]]).unwrap(),
                LinearFoliation::whole_manifold(2).unwrap(),
            ][which]
                .clone();
            let (c, y, z) = (p(&c), p(&y), p(&z));
            let a = fol.plaque(c.clone(), e1).unwrap();
            let b = fol.plaque(c.clone(), e1 + de).unwrap();
            prop_assert!(b.dist_to(&y) <= a.dist_to(&y) + 1e-12);
            prop_assert!((a.dist_to(&y) - a.dist_to(&z)).abs() <= torus_dist(&y, &z).unwrap() + 1e-12);
            if a.contains(&y, 0.0) {
                prop_assert!(a.dist_to(&y) <= TAU_GEOM);
            }
            prop_assert!(a.dist_to(&c) <= TAU_GEOM);
            prop_assert!(fol.same_leaf(&c, &c, 0.0));
            prop_assert_eq!(fol.same_leaf(&c, &y, 0.0), fol.same_leaf(&y, &c, 0.0));
            Ok(())
        },
    );
    record("plaque geometry", plaques.map_err(|e| e.to_string()));
    (ok, format!("1000 cases each: {}", lines.join(", ")))
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["catmap-shadow", "single-leaf-trivial", "catmap-expansive"] {
        let cfg = builtin_scenario(name).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = run_scenario(&cfg, Step::All, a.path()).unwrap();
        let mb = run_scenario(&cfg, Step::All, b.path()).unwrap();
        let (fa, fb) = (read_dir_bytes(a.path()), read_dir_bytes(b.path()));
        let same = ma == mb && fa == fb && fa.contains_key("manifest.json");
        ok &= same;
        parts.push(format!(
            "{name}: {} files {}",
            fa.len(),
            if same { "identical" } else { "DIFFER" }
        ));
    }
    (ok, parts.join(", "))
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 8] = [
        ("criterion 1 (hyperbolic shadowing oracle)", criterion_1),
        (
            "criterion 2 (chain recurrence and periodic leaves on A x id)",
            criterion_2,
        ),
        ("criterion 3 (stability contract)", criterion_3),
        ("criterion 4 (continuity along the foliation)", criterion_4),
        ("criterion 5 (vertical circles are not expansive)", criterion_5),
        ("criterion 6 (degenerate foliations)", criterion_6),
        ("criterion 7 (randomized invariants)", criterion_7),
        ("criterion 8 (determinism)", criterion_8),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let (pass, detail) = run();
        let status = if pass { "PASS" } else { "FAIL" };
        println!("{status} {name} [{:.1}s]: {detail}", t0.elapsed().as_secs_f64());
        if !pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
