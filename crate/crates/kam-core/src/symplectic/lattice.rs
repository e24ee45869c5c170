use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;

use crate::error::{KamError, Result};

/// A unimodular `K` whose last `l` rows are the given resonances, and the
/// blocks of `K·A·Kᵀ` once a Hessian is supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeReduction {
    pub k: Vec<Vec<i64>>,
    pub d: usize,
    pub l: usize,
}

impl LatticeReduction {
    pub fn m(&self) -> usize {
        self.k.len()
    }

    pub fn k_f64(&self) -> DMatrix<f64> {
        let m = self.m();
        DMatrix::from_fn(m, m, |i, j| self.k[i][j] as f64)
    }

    /// Blocks `(A, B, C)` of `K·H·Kᵀ` with `A: d×d`, `B: d×l`, `C: l×l`.
    pub fn blocks(&self, hessian: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let k = self.k_f64();
        let full = &k * hessian * k.transpose();
        let (d, l) = (self.d, self.l);
        (
            full.view((0, 0), (d, d)).into_owned(),
            full.view((0, d), (d, l)).into_owned(),
            full.view((d, d), (l, l)).into_owned(),
        )
    }

    /// `K^{-T}·n`, exact in integers.
    pub fn transform_mode(&self, n: &[i64]) -> Result<Vec<i64>> {
        let m = self.m();
        let kt = self.k_f64().transpose();
        let rhs = nalgebra::DVector::from_iterator(m, n.iter().map(|&v| v as f64));
        let sol = kt.lu().solve(&rhs).ok_or_else(|| KamError::Lattice("singular K".into()))?;
        let u: Vec<i64> = sol.iter().map(|v| v.round() as i64).collect();
        for i in 0..m {
            let back: i64 = (0..m).map(|j| self.k[j][i] * u[j]).sum();
            if back != n[i] {
                return Err(KamError::Lattice(format!("mode {:?} has no integer image", n)));
            }
        }
        Ok(u)
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Exact determinant by fraction-free (Bareiss) elimination.
pub fn integer_det(rows: &[Vec<i64>]) -> i128 {
    let n = rows.len();
    if n == 0 {
        return 1;
    }
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// Rank of an integer matrix (rows), by exact elimination.
fn integer_rank(rows: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let cols = a.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let piv = match (rank..a.len()).find(|&i| a[i][c] != 0) {
            Some(p) => p,
            None => continue,
        };
        a.swap(rank, piv);
        for i in rank + 1..a.len() {
            if a[i][c] != 0 {
                let (p, q) = (a[rank][c], a[i][c]);
                for j in 0..cols {
                    a[i][j] = a[i][j] * p - a[rank][j] * q;
                }
                let g = a[i].iter().fold(0, |g, &v| gcd(g, v));
                if g > 1 {
                    for v in a[i].iter_mut() {
                        *v /= g;
                    }
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Completes `l` independent primitive resonances in `ℤ^m` to `K ∈ GL(m, ℤ)`.
///
/// Completions by standard basis vectors are tried first (in lexicographic
/// order of index sets); otherwise the complement comes from a column Hermite
/// reduction of the resonance block.
pub fn unimodular_completion(resonances: &[Vec<i64>], m: usize) -> Result<LatticeReduction> {
    let l = resonances.len();
    if l == 0 || l >= m {
        return Err(KamError::Lattice(format!("need 1 <= l < m resonances, got {} for m = {}", l, m)));
    }
    for r in resonances {
        if r.len() != m {
            return Err(KamError::Lattice(format!("resonance {:?} does not have length {}", r, m)));
        }
        let g = r.iter().fold(0i128, |g, &v| gcd(g, v as i128));
        if g != 1 {
            return Err(KamError::Lattice(format!("resonance {:?} is not primitive", r)));
        }
    }
    if integer_rank(resonances) < l {
        return Err(KamError::Lattice("resonances are linearly dependent".into()));
    }
    let d = m - l;
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let mut rows: Vec<Vec<i64>> = idx
            .iter()
            .map(|&i| {
                let mut e = vec![0i64; m];
                e[i] = 1;
                e
            })
            .collect();
        rows.extend(resonances.iter().cloned());
        if integer_det(&rows).abs() == 1 {
            return Ok(LatticeReduction { k: rows, d, l });
        }
        // next combination
        let mut t = d;
        loop {
            if t == 0 {
                return hermite_completion(resonances, m);
            }
            t -= 1;
            if idx[t] < m - d + t {
                idx[t] += 1;
                for u in t + 1..d {
                    idx[u] = idx[u - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Column operations `R·U = [H | 0]`; `K = [rows l.. of U⁻¹; R]`.
fn hermite_completion(resonances: &[Vec<i64>], m: usize) -> Result<LatticeReduction> {
    let l = resonances.len();
    let mut r: Vec<Vec<i128>> = resonances.iter().map(|v| v.iter().map(|&x| x as i128).collect()).collect();
    // v tracks U⁻¹ through the inverse row operations.
    let mut v: Vec<Vec<i128>> = (0..m).map(|i| (0..m).map(|j| (i == j) as i128).collect()).collect();
    for row in 0..l {
        loop {
            let nz: Vec<usize> = (row..m).filter(|&c| r[row][c] != 0).collect();
            if nz.len() <= 1 {
                if let Some(&c) = nz.first() {
                    if c != row {
                        for rr in r.iter_mut() {
                            rr.swap(c, row);
                        }
                        v.swap(c, row);
                    }
                }
                break;
            }
            let piv = *nz.iter().min_by_key(|&&c| r[row][c].abs()).expect("nonempty");
            for &c in &nz {
                if c == piv {
                    continue;
                }
                let q = r[row][c] / r[row][piv];
                // column c -= q·column piv  ⇔  row piv of U⁻¹ += q·row c
                for rr in r.iter_mut() {
                    rr[c] -= q * rr[piv];
                }
                for j in 0..m {
                    let add = q * v[c][j];
                    v[piv][j] += add;
                }
            }
        }
        if r[row][row] == 0 {
            return Err(KamError::Lattice("resonances are linearly dependent".into()));
        }
    }
    let det_h: i128 = (0..l).map(|i| r[i][i]).product();
    if det_h.abs() != 1 {
        return Err(KamError::Lattice("resonance lattice is not saturated; no unimodular completion".into()));
    }
    let mut k: Vec<Vec<i64>> = v[l..].iter().map(|row| row.iter().map(|&x| x as i64).collect()).collect();
    k.extend(resonances.iter().cloned());
    if integer_det(&k).abs() != 1 {
        return Err(KamError::Lattice("completion failed".into()));
    }
    Ok(LatticeReduction { k, d: m - l, l })
}

/// `K·ω₀`, checking that the last `l` entries vanish to `1e-12·|ω₀|`.
pub fn check_frequency(lr: &LatticeReduction, omega0: &[f64]) -> Result<Vec<f64>> {
    let m = lr.m();
    if omega0.len() != m {
        return Err(KamError::InvalidArgument(format!("omega0 has length {}, expected {}", omega0.len(), m)));
    }
    let norm = omega0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let kw: Vec<f64> = lr.k.iter().map(|row| row.iter().zip(omega0).map(|(&a, &b)| a as f64 * b).sum()).collect();
    for i in lr.d..m {
        if kw[i].abs() > 1e-12 * norm {
            return Err(KamError::Lattice(format!(
                "resonance {:?} is not a resonance of omega0: k·omega0 = {:e}",
                lr.k[i], kw[i]
            )));
        }
    }
    Ok(kw)
}
