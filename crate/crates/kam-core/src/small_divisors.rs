//! Per-mode solvers for the cohomological problems `L¹`, `L²`, `L³` and
//! finite Diophantine diagnostics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::{Float, Zero};

use crate::error::{KamError, Result};
use crate::fourier_taylor::{ball, FTSeries, SeriesMatrix};
use crate::linalg;

/// Finite verification of `|⟨ω,k⟩| ≥ γ/|k|₁^{d+τ}` for `0 < |k|₁ ≤ K_checked`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiophantineWitness {
    pub omega: Vec<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub k_checked: u32,
    /// Mode attaining `γ` (first in lexicographic order among ties).
    pub minimizer: Vec<i32>,
    /// Set when some `⟨ω,k⟩` vanishes within the relative threshold.
    pub resonance: Option<Vec<i32>>,
}

impl DiophantineWitness {
    pub fn is_resonant(&self) -> bool {
        self.resonance.is_some()
    }

    pub fn d(&self) -> usize {
        self.omega.len()
    }
}

pub(crate) fn dot(omega: &[f64], k: &[i32]) -> f64 {
    omega.iter().zip(k).map(|(&w, &c)| w * c as f64).sum()
}

fn norm1(k: &[i32]) -> u32 {
    k.iter().map(|v| v.unsigned_abs()).sum()
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Threshold below which a divisor counts as exactly zero.
pub fn zero_divisor_threshold(omega: &[f64], k: &[i32]) -> f64 {
    1e-14 * euclid(omega) * norm1(k) as f64
}

/// `γ = min_{0<|k|₁≤K} |⟨ω,k⟩|·|k|₁^{d+τ}`, with resonances flagged.
pub fn effective_diophantine_constant(omega: &[f64], tau: f64, k: u32) -> Result<DiophantineWitness> {
    if k < 1 {
        return Err(KamError::InvalidArgument("K must be >= 1".into()));
    }
    if omega.is_empty() {
        return Err(KamError::InvalidArgument("empty frequency vector".into()));
    }
    let d = omega.len();
    let mut gamma = f64::INFINITY;
    let mut minimizer = Vec::new();
    let mut resonance = None;
    for mode in ball(d, k as i32) {
        let n = norm1(&mode);
        if n == 0 {
            continue;
        }
        let w = dot(omega, &mode).abs();
        if w <= zero_divisor_threshold(omega, &mode) {
            if resonance.is_none() {
                resonance = Some(mode.clone());
            }
            continue;
        }
        let g = w * (n as f64).powf(d as f64 + tau);
        if g < gamma {
            gamma = g;
            minimizer = mode;
        }
    }
    if let Some(r) = &resonance {
        gamma = 0.0;
        minimizer = r.clone();
    }
    Ok(DiophantineWitness { omega: omega.to_vec(), gamma, tau, k_checked: k, minimizer, resonance })
}

/// `min_{0<|k|₁≤K} ⟨ω,k⟩²` and a minimizing mode.
pub fn min_divisor_sq(omega: &[f64], k: u32) -> (f64, Vec<i32>) {
    let mut best = f64::INFINITY;
    let mut arg = Vec::new();
    for mode in ball(omega.len(), k as i32) {
        if norm1(&mode) == 0 {
            continue;
        }
        let w = dot(omega, &mode);
        if w * w < best {
            best = w * w;
            arg = mode;
        }
    }
    (best, arg)
}

pub(crate) fn divisor(witness: &DiophantineWitness, k: &[i32]) -> Result<f64> {
    if norm1(k) > witness.k_checked {
        return Err(KamError::InvalidArgument(format!(
            "q-mode {:?} beyond the verified order {}",
            k, witness.k_checked
        )));
    }
    let w = dot(&witness.omega, k);
    if w.abs() <= zero_divisor_threshold(&witness.omega, k) {
        return Err(KamError::ResonantDivisor { mode: k.to_vec() });
    }
    Ok(w)
}

/// Zero-mean solution of `∂_ω u = v − M_q v`: `û(k) = v̂(k)/(i⟨ω,k⟩)`.
pub fn solve_l1(v: &FTSeries, witness: &DiophantineWitness) -> Result<FTSeries> {
    let sp = v.space();
    if sp.grading().d != witness.d() {
        return Err(KamError::InvalidArgument("frequency dimension mismatch".into()));
    }
    let mut terms = Vec::with_capacity(v.nnz());
    let mut cache: BTreeMap<u32, Complex64> = BTreeMap::new();
    for &(idx, c) in v.raw_terms() {
        let (_, k, _) = sp.unpack(idx);
        if k == sp.ks.zero_index() {
            continue;
        }
        let inv = match cache.get(&k) {
            Some(x) => *x,
            None => {
                let w = divisor(witness, sp.mode_q(k))?;
                let x = Complex64::new(0.0, -1.0 / w);
                cache.insert(k, x);
                x
            }
        };
        terms.push((idx, c * inv));
    }
    Ok(FTSeries::from_terms(sp, v.radii(), terms).with_loss(0.0))
}

fn check_beta(beta: &DMatrix<f64>, l: usize, witness: &DiophantineWitness, k: u32, factor: f64) -> Result<()> {
    if beta.nrows() != l || beta.ncols() != l {
        return Err(KamError::InvalidArgument(format!("beta must be {}x{}", l, l)));
    }
    let asym = linalg::asymmetry(beta);
    if asym > 1e-12 * (1.0 + linalg::max_abs(beta)) {
        return Err(KamError::InvalidArgument(format!("beta not symmetric (defect {:e})", asym)));
    }
    let norm = linalg::spectral_norm(beta);
    if norm > 1.0 {
        return Err(KamError::Precondition { mode: Vec::new(), detail: format!("‖beta‖ = {} exceeds 1", norm) });
    }
    let (m, arg) = min_divisor_sq(&witness.omega, k);
    let nu = linalg::nu_max(beta);
    if nu > factor * m {
        return Err(KamError::Precondition {
            mode: arg,
            detail: format!("nu_max(beta) = {:e} exceeds {} * <omega,k>^2 = {:e}", nu, factor, factor * m),
        });
    }
    Ok(())
}

type Block = BTreeMap<(u32, u32), BTreeMap<u32, Vec<Complex64>>>;

/// Collects the coefficients of several series by `(j, α)` and then `k`, as
/// stacked vectors of length `parts.len()`.
fn gather(parts: &[&FTSeries]) -> Block {
    let n = parts.len();
    let mut out: Block = BTreeMap::new();
    for (slot, s) in parts.iter().enumerate() {
        let sp = s.space();
        for &(idx, c) in s.raw_terms() {
            let (j, k, m) = sp.unpack(idx);
            out.entry((j, m)).or_default().entry(k).or_insert_with(|| vec![Complex64::zero(); n])[slot] = c;
        }
    }
    out
}

fn check_space(parts: &[&FTSeries]) -> Result<()> {
    let g = parts[0].grading();
    for p in parts {
        if p.grading() != g {
            return Err(KamError::GradingMismatch);
        }
    }
    Ok(())
}

/// Solution of `∂_ω B_x − β B_y = b_x − M_q b_x`, `∂_ω B_y + B_x = b_y` with
/// `(B̂_x(0), B̂_y(0)) = (M_q b_y, 0)`.
pub fn solve_l2(
    b_x: &[FTSeries],
    b_y: &[FTSeries],
    beta: &DMatrix<f64>,
    witness: &DiophantineWitness,
    k: u32,
) -> Result<(Vec<FTSeries>, Vec<FTSeries>)> {
    let l = b_x.len();
    if l == 0 || b_y.len() != l {
        return Err(KamError::InvalidArgument("b_x and b_y must have equal nonzero length".into()));
    }
    check_beta(beta, l, witness, k, 0.5)?;
    let parts: Vec<&FTSeries> = b_x.iter().chain(b_y.iter()).collect();
    check_space(&parts)?;
    let sp = parts[0].space().clone();
    let radii = parts[0].radii();
    let k0 = sp.ks.zero_index();
    let mut lus: BTreeMap<u32, nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> = BTreeMap::new();
    let mut out: Vec<Vec<(u32, Complex64)>> = vec![Vec::new(); 2 * l];
    for ((j, m), modes) in gather(&parts) {
        for (kk, rhs) in modes {
            if kk == k0 {
                for i in 0..l {
                    if rhs[l + i] != Complex64::zero() {
                        out[i].push((sp.pack(j, kk, m), rhs[l + i]));
                    }
                }
                continue;
            }
            let mode = sp.mode_q(kk);
            if norm1(mode) > k {
                return Err(KamError::InvalidArgument(format!("q-mode {:?} beyond K = {}", mode, k)));
            }
            if !lus.contains_key(&kk) {
                let w = divisor(witness, mode)?;
                let lam = Complex64::new(0.0, w);
                let mut a = DMatrix::<Complex64>::zeros(2 * l, 2 * l);
                for i in 0..l {
                    a[(i, i)] = lam;
                    a[(l + i, l + i)] = lam;
                    a[(l + i, i)] = Complex64::new(1.0, 0.0);
                    for c in 0..l {
                        a[(i, l + c)] = Complex64::new(-beta[(i, c)], 0.0);
                    }
                }
                let lu = a.lu();
                let det = lu.determinant().norm();
                let bound = 2f64.powi(-(l as i32)) * (w * w).powi(l as i32);
                if det < bound * (1.0 - 1e-9) {
                    return Err(KamError::Precondition {
                        mode: mode.to_vec(),
                        detail: format!("|det M_k| = {:e} below 2^-l <omega,k>^2l = {:e}", det, bound),
                    });
                }
                lus.insert(kk, lu);
            }
            let sol = lus[&kk]
                .solve(&DVector::from_vec(rhs))
                .ok_or_else(|| KamError::Singular(format!("L2 block at {:?}", mode)))?;
            for (i, v) in sol.iter().enumerate() {
                if *v != Complex64::zero() {
                    out[i].push((sp.pack(j, kk, m), *v));
                }
            }
        }
    }
    let mut series: Vec<FTSeries> = out.into_iter().map(|t| FTSeries::from_terms(&sp, radii, t)).collect();
    let by = series.split_off(l);
    Ok((series, by))
}

/// Solution of the three-block system
/// `∂_ω D_xx − β D_xy = d_xx − M_q d_xx`, `∂_ω D_yy + D_xy = d_yy`,
/// `∂_ω D_xy − β D_yy + D_xx = d_xy`, with zero modes
/// `(D_xx, D_yy, D_xy)(0) = (M_q d_xy, 0, M_q d_yy)`.
pub fn solve_l3(
    d_xx: &SeriesMatrix,
    d_yy: &SeriesMatrix,
    d_xy: &SeriesMatrix,
    beta: &DMatrix<f64>,
    witness: &DiophantineWitness,
    k: u32,
) -> Result<(SeriesMatrix, SeriesMatrix, SeriesMatrix)> {
    let l = beta.nrows();
    for m in [d_xx, d_yy, d_xy] {
        if m.rows != l || m.cols != l {
            return Err(KamError::InvalidArgument(format!("L3 blocks must be {}x{}", l, l)));
        }
    }
    check_beta(beta, l, witness, k, 0.25)?;
    let sp = d_xx.data[0].space().clone();
    let radii = d_xx.data[0].radii();
    let k0 = sp.ks.zero_index();
    let mut out_xx = SeriesMatrix::zeros(&sp, radii, l, l);
    let mut out_yy = SeriesMatrix::zeros(&sp, radii, l, l);
    let mut out_xy = SeriesMatrix::zeros(&sp, radii, l, l);
    let mut lus: BTreeMap<u32, nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> = BTreeMap::new();
    // Columns decouple: β acts from the left.
    for c in 0..l {
        let parts: Vec<&FTSeries> = (0..l)
            .map(|i| d_xx.get(i, c))
            .chain((0..l).map(|i| d_yy.get(i, c)))
            .chain((0..l).map(|i| d_xy.get(i, c)))
            .collect();
        check_space(&parts)?;
        let mut out: Vec<Vec<(u32, Complex64)>> = vec![Vec::new(); 3 * l];
        for ((j, m), modes) in gather(&parts) {
            for (kk, rhs) in modes {
                if kk == k0 {
                    for i in 0..l {
                        out[i].push((sp.pack(j, kk, m), rhs[2 * l + i]));
                        out[2 * l + i].push((sp.pack(j, kk, m), rhs[l + i]));
                    }
                    continue;
                }
                let mode = sp.mode_q(kk);
                if norm1(mode) > k {
                    return Err(KamError::InvalidArgument(format!("q-mode {:?} beyond K = {}", mode, k)));
                }
                if !lus.contains_key(&kk) {
                    let w = divisor(witness, mode)?;
                    let lam = Complex64::new(0.0, w);
                    let one = Complex64::new(1.0, 0.0);
                    let mut a = DMatrix::<Complex64>::zeros(3 * l, 3 * l);
                    for i in 0..l {
                        a[(i, i)] = lam;
                        a[(l + i, l + i)] = lam;
                        a[(l + i, 2 * l + i)] = one;
                        a[(2 * l + i, i)] = one;
                        a[(2 * l + i, 2 * l + i)] = lam;
                        for t in 0..l {
                            a[(i, 2 * l + t)] = Complex64::new(-beta[(i, t)], 0.0);
                            a[(2 * l + i, l + t)] = Complex64::new(-beta[(i, t)], 0.0);
                        }
                    }
                    let lu = a.lu();
                    let det = lu.determinant().norm();
                    let bound = 4f64.powi(-(l as i32)) * w.abs().powi(3 * l as i32);
                    if det < bound * (1.0 - 1e-9) {
                        return Err(KamError::Precondition {
                            mode: mode.to_vec(),
                            detail: format!("|det M_k| = {:e} below 4^-l |<omega,k>|^3l = {:e}", det, bound),
                        });
                    }
                    lus.insert(kk, lu);
                }
                let sol = lus[&kk]
                    .solve(&DVector::from_vec(rhs))
                    .ok_or_else(|| KamError::Singular(format!("L3 block at {:?}", mode)))?;
                for (i, v) in sol.iter().enumerate() {
                    out[i].push((sp.pack(j, kk, m), *v));
                }
            }
        }
        for i in 0..l {
            out_xx.set(i, c, FTSeries::from_terms(&sp, radii, core::mem::take(&mut out[i])));
            out_yy.set(i, c, FTSeries::from_terms(&sp, radii, core::mem::take(&mut out[l + i])));
            out_xy.set(i, c, FTSeries::from_terms(&sp, radii, core::mem::take(&mut out[2 * l + i])));
        }
    }
    Ok((out_xx, out_yy, out_xy))
}
