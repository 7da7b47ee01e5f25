//! Stable / center / unstable splitting of integer-matrix automorphisms.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::map::ToralMap;

const MODULUS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplittingClass {
    /// Empty center bundle, nonempty stable and unstable bundles.
    Anosov,
    /// All three bundles nonempty.
    PartiallyHyperbolic,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSplitting {
    /// Eigenvalues as `(re, im)` pairs.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Orthonormal bases of the invariant subspaces.
    pub stable: Vec<Vec<f64>>,
    pub center: Vec<Vec<f64>>,
    pub unstable: Vec<Vec<f64>>,
    /// Largest stable modulus.
    pub lambda: Option<f64>,
    /// Smallest and largest center moduli.
    pub gamma_hat: Option<f64>,
    pub gamma: Option<f64>,
    /// Smallest unstable modulus.
    pub mu: Option<f64>,
    /// Constant in the growth inequalities: exactly 1 for real
    /// diagonalizable matrices, otherwise the value observed over `n <= 20`.
    pub c_constant: f64,
    pub real_diagonalizable: bool,
    pub class: SplittingClass,
}

fn real_matrix(f: &ToralMap) -> DMatrix<f64> {
    let m = f.matrix();
    let d = m.len();
    DMatrix::from_fn(d, d, |i, j| m[i][j] as f64)
}

/// Basis of `ker prod (M - λ I)` over the given eigenvalues, taken as the
/// right singular vectors of the `k` smallest singular values.
fn invariant_subspace(m: &DMatrix<f64>, group: &[Complex<f64>]) -> Vec<Vec<f64>> {
    let d = m.nrows();
    let k = group.len();
    if k == 0 {
        return Vec::new();
    }
    let mc: DMatrix<Complex<f64>> = m.map(|x| Complex::new(x, 0.0));
    let mut prod = DMatrix::<Complex<f64>>::identity(d, d);
    for &lam in group {
        let shifted = &mc - DMatrix::<Complex<f64>>::identity(d, d) * lam;
        prod = shifted * prod;
    }
    let real = prod.map(|z| z.re);
    let svd = real.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[a]
            .partial_cmp(&svd.singular_values[b])
            .unwrap()
    });
    order[..k]
        .iter()
        .map(|&r| (0..d).map(|c| vt[(r, c)]).collect())
        .collect()
}

/// `|M^n v| / |v|` for `v` in the span of the orthonormal `basis`, computed
/// through the restriction of `M` to that invariant subspace.
fn growth_ratio(m: &DMatrix<f64>, basis: &[Vec<f64>], v: &[f64], n: usize) -> f64 {
    let k = basis.len();
    let d = m.nrows();
    let b = DMatrix::from_fn(k, d, |i, j| basis[i][j]);
    let restricted = &b * m * b.transpose();
    let mut x = &b * nalgebra::DVector::from_column_slice(v);
    let n0 = x.norm();
    for _ in 0..n {
        x = &restricted * x;
    }
    x.norm() / n0
}

fn test_vectors(basis: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = basis.to_vec();
    if basis.len() > 1 {
        let d = basis[0].len();
        for signs in [[1.0, 1.0], [1.0, -1.0]] {
            let mut v = vec![0.0; d];
            for (b, s) in basis.iter().zip(signs.iter().cycle()) {
                for i in 0..d {
                    v[i] += s * b[i];
                }
            }
            out.push(v);
        }
    }
    out
}

/// Observed constant `C` for the three growth inequalities over `n <= nmax`.
fn empirical_constant(m: &DMatrix<f64>, s: &SpectralSplitting, nmax: usize) -> f64 {
    let mut c: f64 = 1.0;
    for n in 1..=nmax {
        let nf = n as i32;
        if let Some(lam) = s.lambda {
            let basis = &s.stable;
            for v in test_vectors(basis) {
                c = c.max(growth_ratio(m, basis, &v, n) / lam.powi(nf));
            }
        }
        if let Some(mu) = s.mu {
            let basis = &s.unstable;
            for v in test_vectors(basis) {
                c = c.max(mu.powi(nf) / growth_ratio(m, basis, &v, n));
            }
        }
        if let (Some(gh), Some(g)) = (s.gamma_hat, s.gamma) {
            let basis = &s.center;
            for v in test_vectors(basis) {
                let r = growth_ratio(m, basis, &v, n);
                c = c.max(r / g.powi(nf)).max(gh.powi(nf) / r);
            }
        }
    }
    c
}

pub fn spectral_splitting(f: &ToralMap) -> Result<SpectralSplitting> {
    if !f.is_linear() {
        return Err(FsError::Unsupported(
            "spectral splitting of a perturbed map".into(),
        ));
    }
    let m = real_matrix(f);
    let d = m.nrows();
    let eig: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    let mut stable = Vec::new();
    let mut center = Vec::new();
    let mut unstable = Vec::new();
    for &z in &eig {
        let r = z.norm();
        if r < 1.0 - MODULUS_TOL {
            stable.push(z);
        } else if r > 1.0 + MODULUS_TOL {
            unstable.push(z);
        } else {
            center.push(z);
        }
    }
    let moduli = |g: &[Complex<f64>]| g.iter().map(|z| z.norm()).collect::<Vec<_>>();
    let max = |v: Vec<f64>| v.into_iter().reduce(f64::max);
    let min = |v: Vec<f64>| v.into_iter().reduce(f64::min);

    let all_real = eig.iter().all(|z| z.im.abs() < 1e-12);
    let mut real_diagonalizable = all_real;
    if all_real {
        let mut distinct: Vec<f64> = Vec::new();
        for z in &eig {
            if !distinct.iter().any(|&x| (x - z.re).abs() < 1e-9) {
                distinct.push(z.re);
            }
        }
        for lam in distinct {
            let alg = eig.iter().filter(|z| (z.re - lam).abs() < 1e-9).count();
            let shifted = &m - DMatrix::<f64>::identity(d, d) * lam;
            let rank = shifted.rank(1e-9);
            if d - rank != alg {
                real_diagonalizable = false;
            }
        }
    }

    let class = if center.is_empty() && !stable.is_empty() && !unstable.is_empty() {
        SplittingClass::Anosov
    } else if !center.is_empty() && !stable.is_empty() && !unstable.is_empty() {
        SplittingClass::PartiallyHyperbolic
    } else {
        SplittingClass::Neither
    };

    let mut s = SpectralSplitting {
        eigenvalues: eig.iter().map(|z| (z.re, z.im)).collect(),
        stable: invariant_subspace(&m, &stable),
        center: invariant_subspace(&m, &center),
        unstable: invariant_subspace(&m, &unstable),
        lambda: max(moduli(&stable)),
        gamma_hat: min(moduli(&center)),
        gamma: max(moduli(&center)),
        mu: min(moduli(&unstable)),
        c_constant: 1.0,
        real_diagonalizable,
        class,
    };
    if !real_diagonalizable {
        s.c_constant = empirical_constant(&m, &s, 20);
    }
    Ok(s)
}
