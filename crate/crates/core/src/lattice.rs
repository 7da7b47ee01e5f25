//! Small exact integer linear algebra used for rational foliations and
//! integer-matrix maps. Sizes are at most a few rows and columns.

pub type IMat = Vec<Vec<i64>>;

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn is_primitive(v: &[i64]) -> bool {
    v.iter().fold(0, |g, &x| gcd(g, x)) == 1
}

pub fn identity(d: usize) -> IMat {
    (0..d)
        .map(|i| (0..d).map(|j| i64::from(i == j)).collect())
        .collect()
}

pub fn det(m: &IMat) -> i64 {
    let n = m.len();
    match n {
        0 => 1,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1 } else { -1 };
                sign * m[0][j] * det(&minor(m, 0, j))
            })
            .sum(),
    }
}

fn minor(m: &IMat, row: usize, col: usize) -> IMat {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| {
            r.iter()
                .enumerate()
                .filter(|(j, _)| *j != col)
                .map(|(_, &x)| x)
                .collect()
        })
        .collect()
}

/// Inverse of a unimodular matrix via the adjugate; `None` if `|det| != 1`.
pub fn unimodular_inverse(m: &IMat) -> Option<IMat> {
    let n = m.len();
    let d = det(m);
    if d.abs() != 1 {
        return None;
    }
    if n == 1 {
        return Some(vec![vec![d]]);
    }
    let mut inv = vec![vec![0; n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            // adj(m)[i][j] = cofactor(j, i)
            *entry = sign * det(&minor(m, j, i)) * d;
        }
    }
    Some(inv)
}

pub fn mat_mul(a: &IMat, b: &IMat) -> IMat {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn mat_vec(a: &IMat, v: &[i64]) -> Vec<i64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn transpose(a: &[Vec<i64>], cols: usize) -> IMat {
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Column reduction of a `rows x d` integer matrix by unimodular column
/// operations. Returns the rank and the accumulated unimodular `U` (as a
/// list of columns) such that `rows * U = [L | 0]`; the last `d - rank`
/// columns of `U` form a basis of the integer kernel lattice.
pub fn column_reduce(rows: &[Vec<i64>], d: usize) -> (usize, Vec<Vec<i64>>) {
    let mut a: Vec<Vec<i64>> = rows.to_vec();
    // u_cols[j] is column j of U
    let mut u_cols: Vec<Vec<i64>> = identity(d);
    let mut pivot = 0;
    for i in 0..a.len() {
        if pivot >= d {
            break;
        }
        loop {
            // smallest nonzero |a[i][j]| among j >= pivot
            let best = (pivot..d)
                .filter(|&j| a[i][j] != 0)
                .min_by_key(|&j| (a[i][j].abs(), j));
            let Some(b) = best else { break };
            let mut done = true;
            for j in pivot..d {
                if j != b && a[i][j] != 0 {
                    let q = a[i][j].div_euclid(a[i][b]);
                    for r in a.iter_mut() {
                        r[j] -= q * r[b];
                    }
                    let ub = u_cols[b].clone();
                    for (x, y) in u_cols[j].iter_mut().zip(&ub) {
                        *x -= q * y;
                    }
                    if a[i][j] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                for r in a.iter_mut() {
                    r.swap(pivot, b);
                }
                u_cols.swap(pivot, b);
                pivot += 1;
                break;
            }
        }
    }
    (pivot, u_cols)
}

/// Row-style Hermite normal form of a full-rank set of integer row vectors
/// (same lattice, canonical basis).
pub fn row_hnf(rows: &[Vec<i64>], d: usize) -> IMat {
    let mut a: IMat = rows.to_vec();
    let k = a.len();
    let mut prow = 0;
    for col in 0..d {
        if prow == k {
            break;
        }
        loop {
            let best = (prow..k)
                .filter(|&r| a[r][col] != 0)
                .min_by_key(|&r| (a[r][col].abs(), r));
            let Some(b) = best else { break };
            a.swap(prow, b);
            let mut done = true;
            for r in prow + 1..k {
                if a[r][col] != 0 {
                    let q = a[r][col].div_euclid(a[prow][col]);
                    let pivot_row = a[prow].clone();
                    for (x, y) in a[r].iter_mut().zip(&pivot_row) {
                        *x -= q * y;
                    }
                    if a[r][col] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if prow < k && a[prow][col] != 0 {
            if a[prow][col] < 0 {
                a[prow].iter_mut().for_each(|x| *x = -*x);
            }
            let pivot_row = a[prow].clone();
            for r in 0..prow {
                let q = a[r][col].div_euclid(pivot_row[col]);
                for (x, y) in a[r].iter_mut().zip(&pivot_row) {
                    *x -= q * y;
                }
            }
            prow += 1;
        }
    }
    a
}

/// Make the first nonzero entry positive.
pub fn canonical_sign(v: &mut [i64]) -> bool {
    if let Some(&first) = v.iter().find(|&&x| x != 0) {
        if first < 0 {
            v.iter_mut().for_each(|x| *x = -*x);
            return true;
        }
    }
    false
}
