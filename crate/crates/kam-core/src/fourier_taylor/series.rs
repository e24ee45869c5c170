use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use num_traits::{Float, Zero};

use super::space::{Grading, SeriesSpace, Var, NONE};
use crate::error::{KamError, Result};

pub type C64 = Complex64;

/// Default modulus below which coefficients are pruned.
pub const PRUNE_FLOOR: f64 = 1e-30;

/// Radii `(r, s)` of the complex strip `|Im q| < r`, `|Im φ| < r` and the
/// Taylor ball `|x|, |p|, |y| < s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radii {
    pub r: f64,
    pub s: f64,
}

impl Radii {
    pub fn new(r: f64, s: f64) -> Self {
        Radii { r, s }
    }

    pub fn min(self, o: Radii) -> Radii {
        Radii { r: self.r.min(o.r), s: self.s.min(o.s) }
    }
}

/// Truncated Fourier–Taylor series in `(φ, q; x, p, y)`.
///
/// Coefficients are stored sparsely as `(packed index, value)` pairs sorted by
/// index. `loss` bounds, in majorant norm at the stored radii, the mass dropped
/// by truncations that produced this value.
#[derive(Debug, Clone)]
pub struct FTSeries {
    pub(crate) space: Arc<SeriesSpace>,
    pub(crate) radii: Radii,
    pub(crate) terms: Vec<(u32, C64)>,
    pub(crate) loss: f64,
}

/// One coefficient of a series with its decoded multi-indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Term<'a> {
    pub j: &'a [i32],
    pub k: &'a [i32],
    pub alpha: &'a [u8],
    pub c: C64,
}

impl PartialEq for FTSeries {
    fn eq(&self, other: &Self) -> bool {
        self.space.grading == other.space.grading && self.terms == other.terms
    }
}

fn merge<F: Fn(C64, C64) -> C64>(a: &[(u32, C64)], b: &[(u32, C64)], f: F) -> Vec<(u32, C64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let z = C64::zero();
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push((a[i].0, f(a[i].1, z)));
            i += 1;
        } else if i >= a.len() || b[j].0 < a[i].0 {
            out.push((b[j].0, f(z, b[j].1)));
            j += 1;
        } else {
            out.push((a[i].0, f(a[i].1, b[j].1)));
            i += 1;
            j += 1;
        }
    }
    out.retain(|t| t.1 != z);
    out
}

impl FTSeries {
    pub fn zero(space: &Arc<SeriesSpace>, radii: Radii) -> Self {
        FTSeries { space: space.clone(), radii, terms: Vec::new(), loss: 0.0 }
    }

    pub fn constant(space: &Arc<SeriesSpace>, radii: Radii, c: f64) -> Self {
        let mut s = Self::zero(space, radii);
        if c != 0.0 {
            let m0 = 0u32;
            let idx = space.pack(space.js.zero_index(), space.ks.zero_index(), m0);
            s.terms.push((idx, C64::new(c, 0.0)));
        }
        s
    }

    /// The coordinate function `x_i`, `p_i` or `y_i`.
    pub fn coordinate(space: &Arc<SeriesSpace>, radii: Radii, v: Var) -> Result<Self> {
        let slot = space
            .taylor_slot(v)
            .ok_or_else(|| KamError::IndexOutOfRange(format!("{:?} is not a Taylor variable of this grading", v)))?;
        let mut e = vec![0u8; space.grading.n_taylor()];
        e[slot] = 1;
        let mut s = Self::zero(space, radii);
        s.set(&vec![0; space.grading.l], &vec![0; space.grading.d], &e, C64::new(1.0, 0.0))?;
        Ok(s)
    }

    /// Real term `amp·cos(j·φ + k·q + phase)·z^α`.
    pub fn cos_term(
        space: &Arc<SeriesSpace>,
        radii: Radii,
        j: &[i32],
        k: &[i32],
        alpha: &[u8],
        amp: f64,
        phase: f64,
    ) -> Result<Self> {
        let mut s = Self::zero(space, radii);
        let half = C64::from_polar(0.5 * amp, phase);
        let nj: Vec<i32> = j.iter().map(|v| -v).collect();
        let nk: Vec<i32> = k.iter().map(|v| -v).collect();
        if j.iter().all(|&v| v == 0) && k.iter().all(|&v| v == 0) {
            s.set(j, k, alpha, C64::new(amp * phase.cos(), 0.0))?;
        } else {
            s.set(j, k, alpha, half)?;
            s.set(&nj, &nk, alpha, half.conj())?;
        }
        Ok(s)
    }

    pub fn from_terms(space: &Arc<SeriesSpace>, radii: Radii, mut terms: Vec<(u32, C64)>) -> Self {
        terms.sort_by_key(|t| t.0);
        let mut out: Vec<(u32, C64)> = Vec::with_capacity(terms.len());
        for (i, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != C64::zero());
        FTSeries { space: space.clone(), radii, terms: out, loss: 0.0 }
    }

    pub fn space(&self) -> &Arc<SeriesSpace> {
        &self.space
    }

    pub fn grading(&self) -> Grading {
        self.space.grading
    }

    pub fn radii(&self) -> Radii {
        self.radii
    }

    pub fn with_radii(mut self, radii: Radii) -> Self {
        self.radii = radii;
        self
    }

    /// Accumulated truncation loss carried by this value.
    pub fn trunc_loss(&self) -> f64 {
        self.loss
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.loss = loss;
        self
    }

    pub fn nnz(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn raw_terms(&self) -> &[(u32, C64)] {
        &self.terms
    }

    pub fn terms(&self) -> impl Iterator<Item = Term<'_>> {
        self.terms.iter().map(move |&(idx, c)| {
            let (j, k, m) = self.space.unpack(idx);
            Term { j: self.space.mode_phi(j), k: self.space.mode_q(k), alpha: self.space.monomial(m), c }
        })
    }

    pub fn coeff(&self, j: &[i32], k: &[i32], alpha: &[u8]) -> C64 {
        match self.space.key(j, k, alpha) {
            Some(idx) => self.coeff_at(idx),
            None => C64::zero(),
        }
    }

    pub(crate) fn coeff_at(&self, idx: u32) -> C64 {
        match self.terms.binary_search_by_key(&idx, |t| t.0) {
            Ok(p) => self.terms[p].1,
            Err(_) => C64::zero(),
        }
    }

    pub fn set(&mut self, j: &[i32], k: &[i32], alpha: &[u8], c: C64) -> Result<()> {
        let idx = self.space.key(j, k, alpha).ok_or_else(|| {
            KamError::IndexOutOfRange(format!("(j={:?}, k={:?}, alpha={:?}) outside grading", j, k, alpha))
        })?;
        match self.terms.binary_search_by_key(&idx, |t| t.0) {
            Ok(p) => {
                if c == C64::zero() {
                    self.terms.remove(p);
                } else {
                    self.terms[p].1 = c;
                }
            }
            Err(p) => {
                if c != C64::zero() {
                    self.terms.insert(p, (idx, c));
                }
            }
        }
        Ok(())
    }

    fn check(&self, o: &FTSeries) -> Result<()> {
        if Arc::ptr_eq(&self.space, &o.space) || self.space.grading == o.space.grading {
            Ok(())
        } else {
            Err(KamError::GradingMismatch)
        }
    }

    fn expect_same(&self, o: &FTSeries) {
        if let Err(e) = self.check(o) {
            panic!("{}", e);
        }
    }

    pub fn checked_add(&self, o: &FTSeries) -> Result<FTSeries> {
        self.check(o)?;
        Ok(FTSeries {
            space: self.space.clone(),
            radii: self.radii.min(o.radii),
            terms: merge(&self.terms, &o.terms, |a, b| a + b),
            loss: self.loss + o.loss,
        })
    }

    pub fn checked_sub(&self, o: &FTSeries) -> Result<FTSeries> {
        self.check(o)?;
        Ok(FTSeries {
            space: self.space.clone(),
            radii: self.radii.min(o.radii),
            terms: merge(&self.terms, &o.terms, |a, b| a - b),
            loss: self.loss + o.loss,
        })
    }

    pub fn scale(&self, c: C64) -> FTSeries {
        if c == C64::zero() {
            return FTSeries::zero(&self.space, self.radii);
        }
        FTSeries {
            space: self.space.clone(),
            radii: self.radii,
            terms: self.terms.iter().map(|&(i, v)| (i, v * c)).collect(),
            loss: self.loss * c.norm(),
        }
    }

    pub fn scale_re(&self, c: f64) -> FTSeries {
        self.scale(C64::new(c, 0.0))
    }

    /// `self + c·o`.
    pub fn axpy(&self, c: f64, o: &FTSeries) -> FTSeries {
        self.expect_same(o);
        if c == 0.0 {
            return self.clone();
        }
        FTSeries {
            space: self.space.clone(),
            radii: self.radii.min(o.radii),
            terms: merge(&self.terms, &o.terms, |a, b| a + b * c),
            loss: self.loss + c.abs() * o.loss,
        }
    }

    /// Product with truncation to the grading; dropped majorant mass is added
    /// to the loss of the result.
    pub fn checked_mul(&self, o: &FTSeries) -> Result<FTSeries> {
        self.check(o)?;
        let sp = &self.space;
        let radii = self.radii.min(o.radii);
        if let Some(c) = o.as_scalar() {
            let s = self.scale(c);
            return Ok(s.with_radii(radii).with_loss(self.loss * c.norm() + o.loss * self.majorant() + self.loss * o.loss));
        }
        if let Some(c) = self.as_scalar() {
            let s = o.scale(c);
            return Ok(s.with_radii(radii).with_loss(o.loss * c.norm() + self.loss * o.majorant() + self.loss * o.loss));
        }
        if self.terms.is_empty() || o.terms.is_empty() {
            let loss = self.loss * o.majorant() + o.loss * self.majorant() + self.loss * o.loss;
            return Ok(FTSeries::zero(sp, radii).with_loss(loss));
        }
        let dec = |t: &[(u32, C64)]| -> Vec<(u32, u32, u32, C64)> {
            t.iter()
                .map(|&(i, c)| {
                    let (j, k, m) = sp.unpack(i);
                    (j, k, m, c)
                })
                .collect()
        };
        let a = dec(&self.terms);
        let b = dec(&o.terms);
        let nm = sp.ms.len();
        let size = sp.size();
        let mut dropped = 0.0;
        let mut acc: Vec<C64>;
        let mut touched: Vec<u32> = Vec::new();
        let dense = size <= (1 << 22);
        let mut list: Vec<(u32, C64)> = Vec::new();
        if dense {
            acc = vec![C64::zero(); size];
        } else {
            acc = Vec::new();
        }
        for &(ja, ka, ma, ca) in a.iter() {
            let row = ma as usize * nm;
            for &(jb, kb, mb, cb) in b.iter() {
                let m = sp.ms.mul[row + mb as usize];
                let j = sp.js.add(ja, jb);
                let k = sp.ks.add(ka, kb);
                let c = ca * cb;
                if m == NONE || j == NONE || k == NONE {
                    let n = sp.js.sum_norm(ja, jb) + sp.ks.sum_norm(ka, kb);
                    let deg = sp.ms.degs[ma as usize] + sp.ms.degs[mb as usize];
                    dropped += c.norm() * (n as f64 * radii.r).exp() * radii.s.powi(deg as i32);
                    continue;
                }
                let idx = sp.pack(j, k, m);
                if dense {
                    let slot = &mut acc[idx as usize];
                    if *slot == C64::zero() {
                        touched.push(idx);
                    }
                    *slot += c;
                    if *slot == C64::zero() {
                        *slot = C64::new(0.0, -0.0);
                    }
                } else {
                    list.push((idx, c));
                }
            }
        }
        let mut terms: Vec<(u32, C64)>;
        if dense {
            touched.sort_unstable();
            terms = touched
                .iter()
                .map(|&i| (i, acc[i as usize]))
                .filter(|t| t.1.re != 0.0 || t.1.im != 0.0)
                .collect();
        } else {
            list.sort_by_key(|t| t.0);
            terms = Vec::with_capacity(list.len());
            for (i, c) in list {
                match terms.last_mut() {
                    Some(last) if last.0 == i => last.1 += c,
                    _ => terms.push((i, c)),
                }
            }
        }
        let mut out = FTSeries { space: sp.clone(), radii, terms: Vec::new(), loss: 0.0 };
        terms.retain(|t| {
            if t.1.norm() < PRUNE_FLOOR {
                dropped += t.1.norm() * sp.weight(t.0, radii.r, radii.s);
                false
            } else {
                true
            }
        });
        out.terms = terms;
        out.loss = dropped + self.loss * o.majorant() + o.loss * self.majorant() + self.loss * o.loss;
        Ok(out)
    }

    /// The value if the series is a single constant term.
    pub fn as_scalar(&self) -> Option<C64> {
        if self.terms.len() == 1 {
            let (idx, c) = self.terms[0];
            let sp = &self.space;
            if idx == sp.pack(sp.js.zero_index(), sp.ks.zero_index(), 0) {
                return Some(c);
            }
        }
        None
    }

    /// Constant term (coefficient at `j = 0`, `k = 0`, `α = 0`).
    pub fn constant_term(&self) -> C64 {
        let sp = &self.space;
        self.coeff_at(sp.pack(sp.js.zero_index(), sp.ks.zero_index(), 0))
    }

    /// Reality partner: `c(j,k,α) ↦ conj c` placed at `(−j,−k,α)`.
    pub fn conj_reflect(&self) -> FTSeries {
        let sp = &self.space;
        let terms = self.terms.iter().map(|&(i, c)| (sp.conj_key(i), c.conj())).collect();
        FTSeries::from_terms(sp, self.radii, terms).with_loss(self.loss)
    }

    /// Drops coefficients below `floor`, adding their mass to the loss.
    pub fn prune(&self, floor: f64) -> FTSeries {
        let mut loss = self.loss;
        let sp = &self.space;
        let r = self.radii;
        let terms = self
            .terms
            .iter()
            .filter(|t| {
                if t.1.norm() < floor {
                    loss += t.1.norm() * sp.weight(t.0, r.r, r.s);
                    false
                } else {
                    true
                }
            })
            .cloned()
            .collect();
        FTSeries { space: sp.clone(), radii: r, terms, loss }
    }

    /// Exact derivative in one variable.
    pub fn derivative(&self, v: Var) -> FTSeries {
        let sp = &self.space;
        let g = sp.grading;
        let mut terms = Vec::with_capacity(self.terms.len());
        match v {
            Var::Phi(i) => {
                assert!(i < g.l, "φ index out of range");
                for &(idx, c) in &self.terms {
                    let (j, _, _) = sp.unpack(idx);
                    let ji = sp.mode_phi(j)[i];
                    if ji != 0 {
                        terms.push((idx, c * C64::new(0.0, ji as f64)));
                    }
                }
            }
            Var::Q(i) => {
                assert!(i < g.d, "q index out of range");
                for &(idx, c) in &self.terms {
                    let (_, k, _) = sp.unpack(idx);
                    let ki = sp.mode_q(k)[i];
                    if ki != 0 {
                        terms.push((idx, c * C64::new(0.0, ki as f64)));
                    }
                }
            }
            _ => {
                let slot = sp.taylor_slot(v).expect("Taylor variable out of range");
                let nm = sp.ms.len();
                for &(idx, c) in &self.terms {
                    let (j, k, m) = sp.unpack(idx);
                    let (m2, e) = sp.ms.deriv[slot * nm + m as usize];
                    if m2 != NONE {
                        terms.push((sp.pack(j, k, m2), c * e as f64));
                    }
                }
                terms.sort_by_key(|t| t.0);
            }
        }
        FTSeries { space: sp.clone(), radii: self.radii, terms, loss: self.loss }
    }

    /// Multiplies each coefficient by `i⟨ω, k⟩`.
    pub fn partial_omega(&self, omega: &[f64]) -> FTSeries {
        let sp = &self.space;
        assert_eq!(omega.len(), sp.grading.d, "frequency dimension mismatch");
        let mut terms = Vec::with_capacity(self.terms.len());
        for &(idx, c) in &self.terms {
            let (_, k, _) = sp.unpack(idx);
            let w: f64 = sp.mode_q(k).iter().zip(omega).map(|(&a, &b)| a as f64 * b).sum();
            if w != 0.0 {
                terms.push((idx, c * C64::new(0.0, w)));
            }
        }
        FTSeries { space: sp.clone(), radii: self.radii, terms, loss: self.loss }
    }

    fn filter<P: Fn(u32, u32, u32) -> bool>(&self, keep: P) -> FTSeries {
        let sp = &self.space;
        let terms = self
            .terms
            .iter()
            .filter(|t| {
                let (j, k, m) = sp.unpack(t.0);
                keep(j, k, m)
            })
            .cloned()
            .collect();
        FTSeries { space: sp.clone(), radii: self.radii, terms, loss: self.loss }
    }

    /// `M_q`: keeps the `k = 0` modes.
    pub fn average_q(&self) -> FTSeries {
        let k0 = self.space.ks.zero_index();
        self.filter(|_, k, _| k == k0)
    }

    /// Average over the parameter torus: keeps the `j = 0` modes.
    pub fn average_phi(&self) -> FTSeries {
        let j0 = self.space.js.zero_index();
        self.filter(|j, _, _| j == j0)
    }

    /// Terms of total Taylor degree exactly `n`.
    pub fn degree_part(&self, n: u32) -> FTSeries {
        let sp = self.space.clone();
        self.filter(|_, _, m| sp.ms.degs[m as usize] == n)
    }

    /// Terms of total Taylor degree at most `n`.
    pub fn truncate_degree(&self, n: u32) -> FTSeries {
        let sp = self.space.clone();
        self.filter(|_, _, m| sp.ms.degs[m as usize] <= n)
    }

    /// Terms of total Taylor degree at least `n`.
    pub fn degree_at_least(&self, n: u32) -> FTSeries {
        let sp = self.space.clone();
        self.filter(|_, _, m| sp.ms.degs[m as usize] >= n)
    }

    /// The (φ, q)-coefficient function of the monomial `z^α`.
    pub fn taylor_coeff(&self, alpha: &[u8]) -> FTSeries {
        let sp = &self.space;
        let m = match sp.ms.index_of(alpha) {
            Some(m) => m,
            None => return FTSeries::zero(sp, self.radii),
        };
        let terms = self
            .terms
            .iter()
            .filter_map(|&(idx, c)| {
                let (j, k, mm) = sp.unpack(idx);
                if mm == m {
                    Some((sp.pack(j, k, 0), c))
                } else {
                    None
                }
            })
            .collect();
        FTSeries { space: sp.clone(), radii: self.radii, terms, loss: 0.0 }
    }

    /// Multiplies a series by the monomial `z^α` (terms exceeding the degree are dropped).
    pub fn times_monomial(&self, alpha: &[u8]) -> FTSeries {
        let sp = &self.space;
        let nm = sp.ms.len();
        let m = sp.ms.index_of(alpha).expect("monomial outside grading");
        let mut terms: Vec<(u32, C64)> = self
            .terms
            .iter()
            .filter_map(|&(idx, c)| {
                let (j, k, mm) = sp.unpack(idx);
                let p = sp.ms.mul[mm as usize * nm + m as usize];
                if p == NONE {
                    None
                } else {
                    Some((sp.pack(j, k, p), c))
                }
            })
            .collect();
        terms.sort_by_key(|t| t.0);
        FTSeries { space: sp.clone(), radii: self.radii, terms, loss: self.loss }
    }

    /// Keeps only q-modes with `|k|₁ ≤ kmax`; returns the dropped series as well.
    pub fn split_q_order(&self, kmax: u32) -> (FTSeries, FTSeries) {
        let sp = self.space.clone();
        let low = self.filter(|_, k, _| sp.ks.norms[k as usize] <= kmax);
        let high = self.filter(|_, k, _| sp.ks.norms[k as usize] > kmax).with_loss(0.0);
        (low, high)
    }

    /// Fourier truncation: keeps `|k|₁ ≤ K` and returns the majorant of the
    /// dropped part at radius `r − σ`.
    pub fn truncate_fourier(&self, kmax: u32, sigma: f64) -> Result<(FTSeries, f64)> {
        if !(sigma > 0.0) || sigma >= self.radii.r {
            return Err(KamError::InvalidArgument(format!(
                "sigma = {} must satisfy 0 < sigma < r = {}",
                sigma, self.radii.r
            )));
        }
        let (low, high) = self.split_q_order(kmax);
        let bound = high.majorant_at(self.radii.r - sigma, self.radii.s);
        Ok((low, bound))
    }

    /// Majorant norm `Σ |c| e^{(|j|₁+|k|₁) r} s^{|α|}`.
    pub fn majorant_at(&self, r: f64, s: f64) -> f64 {
        let sp = &self.space;
        let mut acc = 0.0;
        for &(idx, c) in &self.terms {
            acc += c.norm() * sp.weight(idx, r, s);
        }
        acc
    }

    /// Majorant norm at the stored radii.
    pub fn majorant(&self) -> f64 {
        self.majorant_at(self.radii.r, self.radii.s)
    }

    /// Sum of the moduli of the coefficients (majorant at zero width).
    pub fn l1_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.1.norm()).sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().map(|t| t.1.norm()).fold(0.0, f64::max)
    }

    /// Upper bound on the `C^{k1,k2}` norm (`k1` derivatives in φ, `k2` in
    /// `(q, x, p, y)`), summing majorants of all partial derivatives.
    pub fn ck_norm_estimate(&self, k1: u32, k2: u32, r: f64, s: f64) -> f64 {
        let g = self.space.grading;
        let nq = g.d + g.n_taylor();
        let phi_multi = multi_indices(g.l, k1);
        let z_multi = multi_indices(nq, k2);
        let sp = &self.space;
        let mut total = 0.0;
        for &(idx, c) in &self.terms {
            let (j, k, m) = sp.unpack(idx);
            let jv = sp.mode_phi(j);
            let kv = sp.mode_q(k);
            let ev = sp.monomial(m);
            let base_w = ((sp.js.norms[j as usize] + sp.ks.norms[k as usize]) as f64 * r).exp();
            let mut sum_phi = 0.0;
            for a in phi_multi.iter() {
                let mut f = 1.0;
                for (i, &ai) in a.iter().enumerate() {
                    f *= (jv[i].unsigned_abs() as f64).powi(ai as i32);
                }
                sum_phi += f;
            }
            let mut sum_z = 0.0;
            for b in z_multi.iter() {
                let mut f = 1.0;
                for i in 0..g.d {
                    f *= (kv[i].unsigned_abs() as f64).powi(b[i] as i32);
                }
                let mut deg = 0i32;
                let mut ok = true;
                for t in 0..g.n_taylor() {
                    let e = ev[t] as u32;
                    let bb = b[g.d + t];
                    if bb > e {
                        ok = false;
                        break;
                    }
                    for u in 0..bb {
                        f *= (e - u) as f64;
                    }
                    deg += (e - bb) as i32;
                }
                if ok {
                    sum_z += f * s.powi(deg);
                }
            }
            total += c.norm() * base_w * sum_phi * sum_z;
        }
        total
    }

    /// C² estimate used throughout the scheme (`k1 = k2 = 2` at stored radii).
    pub fn c2_norm(&self) -> f64 {
        self.ck_norm_estimate(2, 2, self.radii.r, self.radii.s)
    }

    /// Complex value of the finite sum at a real point.
    pub fn evaluate_complex(&self, phi: &[f64], q: &[f64], x: &[f64], p: &[f64], y: &[f64]) -> C64 {
        let sp = &self.space;
        let g = sp.grading;
        assert!(phi.len() == g.l && q.len() == g.d && x.len() == g.l && p.len() == g.d && y.len() == g.l);
        let mut z = Vec::with_capacity(g.n_taylor());
        z.extend_from_slice(x);
        z.extend_from_slice(p);
        z.extend_from_slice(y);
        let ej: Vec<C64> = (0..sp.js.len())
            .map(|j| {
                let a: f64 = sp.mode_phi(j as u32).iter().zip(phi).map(|(&m, &t)| m as f64 * t).sum();
                C64::new(a.cos(), a.sin())
            })
            .collect();
        let ek: Vec<C64> = (0..sp.ks.len())
            .map(|k| {
                let a: f64 = sp.mode_q(k as u32).iter().zip(q).map(|(&m, &t)| m as f64 * t).sum();
                C64::new(a.cos(), a.sin())
            })
            .collect();
        let mono = monomial_values(sp, &z);
        let mut acc = C64::zero();
        for &(idx, c) in &self.terms {
            let (j, k, m) = sp.unpack(idx);
            acc += c * ej[j as usize] * ek[k as usize] * mono[m as usize];
        }
        acc
    }

    /// Real value at a real point; errors if the imaginary residue exceeds
    /// `1e-12` times the majorant.
    pub fn evaluate(&self, phi: &[f64], q: &[f64], x: &[f64], p: &[f64], y: &[f64]) -> Result<f64> {
        let v = self.evaluate_complex(phi, q, x, p, y);
        let allowed = 1e-12 * self.l1_norm_at_point_scale(x, p, y).max(f64::MIN_POSITIVE);
        if v.im.abs() > allowed {
            return Err(KamError::RealityViolated { residue: v.im.abs(), allowed });
        }
        Ok(v.re)
    }

    fn l1_norm_at_point_scale(&self, x: &[f64], p: &[f64], y: &[f64]) -> f64 {
        let s = x.iter().chain(p).chain(y).fold(0.0f64, |a, &b| a.max(b.abs())).max(self.radii.s);
        self.majorant_at(0.0, s)
    }

    /// Largest violation of the reality symmetry `c(−j,−k,α) = conj c(j,k,α)`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for &(idx, c) in &self.terms {
            let partner = self.coeff_at(self.space.conj_key(idx));
            worst = worst.max((c - partner.conj()).norm());
        }
        worst
    }

    /// Projects onto reality-symmetric series: `c ← (c + conj c̃)/2`.
    pub fn realify(&self) -> FTSeries {
        let sp = &self.space;
        let mut terms = Vec::with_capacity(self.terms.len());
        for &(idx, c) in &self.terms {
            let partner = self.coeff_at(sp.conj_key(idx));
            let v = (c + partner.conj()) * 0.5;
            if v != C64::zero() {
                terms.push((idx, v));
            }
        }
        for &(idx, c) in &self.terms {
            let pk = sp.conj_key(idx);
            if self.terms.binary_search_by_key(&pk, |t| t.0).is_err() {
                let v = c.conj() * 0.5;
                if v != C64::zero() {
                    terms.push((pk, v));
                }
            }
        }
        FTSeries::from_terms(sp, self.radii, terms).with_loss(self.loss)
    }

    /// Value of the series at the parameter `φ`, as a series in the slice space
    /// (which must have the same grading apart from `K_phi = 0`).
    pub fn at_phi(&self, phi: &[f64], slice: &Arc<SeriesSpace>) -> FTSeries {
        let sp = &self.space;
        assert_eq!(slice.grading, sp.grading.slice(), "slice space mismatch");
        assert_eq!(phi.len(), sp.grading.l);
        let ej: Vec<C64> = (0..sp.js.len())
            .map(|j| {
                let a: f64 = sp.mode_phi(j as u32).iter().zip(phi).map(|(&m, &t)| m as f64 * t).sum();
                C64::new(a.cos(), a.sin())
            })
            .collect();
        let nk = sp.ks.len();
        let nm = sp.ms.len();
        let mut acc = vec![C64::zero(); nk * nm];
        let mut hit = vec![false; nk * nm];
        for &(idx, c) in &self.terms {
            let (j, k, m) = sp.unpack(idx);
            let slot = k as usize * nm + m as usize;
            acc[slot] += c * ej[j as usize];
            hit[slot] = true;
        }
        let j0 = slice.js.zero_index();
        let terms = (0..nk * nm)
            .filter(|&i| hit[i] && acc[i] != C64::zero())
            .map(|i| (slice.pack(j0, (i / nm) as u32, (i % nm) as u32), acc[i]))
            .collect();
        FTSeries { space: slice.clone(), radii: self.radii, terms, loss: self.loss }
    }

    /// Re-embeds a slice-space series (no φ-dependence) into a space with φ-modes.
    pub fn lift_phi(&self, target: &Arc<SeriesSpace>) -> FTSeries {
        let sp = &self.space;
        assert_eq!(sp.grading.slice(), target.grading.slice(), "lift target mismatch");
        let j0 = target.js.zero_index();
        let mut terms: Vec<(u32, C64)> = Vec::new();
        for &(idx, c) in &self.terms {
            let (j, k, m) = sp.unpack(idx);
            if sp.mode_phi(j).iter().all(|&v| v == 0) {
                terms.push((target.pack(j0, k, m), c));
            }
        }
        FTSeries::from_terms(target, self.radii, terms).with_loss(self.loss)
    }

    /// Map `(k, α) ↦ value` over the q-modes and monomials of a slice.
    pub(crate) fn slice_terms(&self) -> impl Iterator<Item = (u32, u32, C64)> + '_ {
        let sp = &self.space;
        self.terms.iter().map(move |&(idx, c)| {
            let (_, k, m) = sp.unpack(idx);
            (k, m, c)
        })
    }
}

pub(crate) fn monomial_values(sp: &SeriesSpace, z: &[f64]) -> Vec<C64> {
    let nm = sp.ms.len();
    let mut out = Vec::with_capacity(nm);
    for m in 0..nm {
        let e = sp.ms.exps(m);
        let mut v = 1.0;
        for (t, &ei) in e.iter().enumerate() {
            if ei > 0 {
                v *= z[t].powi(ei as i32);
            }
        }
        out.push(C64::new(v, 0.0));
    }
    out
}

/// All multi-indices in `n` variables with total order at most `k`.
pub(crate) fn multi_indices(n: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for v in 0..=left {
            prefix.push(v);
            rec(n, left - v, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::new(), &mut out);
    out
}

impl<'a> Add<&'a FTSeries> for &'a FTSeries {
    type Output = FTSeries;
    fn add(self, o: &FTSeries) -> FTSeries {
        self.checked_add(o).unwrap_or_else(|e| panic!("{}", e))
    }
}

impl<'a> Sub<&'a FTSeries> for &'a FTSeries {
    type Output = FTSeries;
    fn sub(self, o: &FTSeries) -> FTSeries {
        self.checked_sub(o).unwrap_or_else(|e| panic!("{}", e))
    }
}

impl<'a> Mul<&'a FTSeries> for &'a FTSeries {
    type Output = FTSeries;
    fn mul(self, o: &FTSeries) -> FTSeries {
        self.checked_mul(o).unwrap_or_else(|e| panic!("{}", e))
    }
}

impl<'a> Neg for &'a FTSeries {
    type Output = FTSeries;
    fn neg(self) -> FTSeries {
        self.scale_re(-1.0)
    }
}
