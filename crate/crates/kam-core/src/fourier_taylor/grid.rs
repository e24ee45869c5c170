use alloc::collections::BTreeMap;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::{Float, Zero};

use super::series::{FTSeries, Radii};
use super::space::SeriesSpace;
use crate::error::{KamError, Result};

/// Uniform grid on `T^l`, points ordered lexicographically in `(φ₁, …, φ_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiGrid {
    pub l: usize,
    pub n: usize,
    points: Vec<f64>,
}

impl PhiGrid {
    pub fn new(l: usize, n: usize) -> Self {
        assert!(l >= 1 && n >= 1);
        let total = n.pow(l as u32);
        let mut points = Vec::with_capacity(total * l);
        for i in 0..total {
            let mut rest = i;
            let mut coords = vec![0usize; l];
            for t in (0..l).rev() {
                coords[t] = rest % n;
                rest /= n;
            }
            for c in coords {
                points.push(2.0 * PI * c as f64 / n as f64);
            }
        }
        PhiGrid { l, n, points }
    }

    /// Default grid for sublevel-set logic: `max(64, 4K_phi + 1)` points per dimension.
    pub fn for_order(l: usize, k_phi: u32) -> Self {
        Self::new(l, core::cmp::max(64, 4 * k_phi as usize + 1))
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.l
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.l..(i + 1) * self.l]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.l)
    }

    /// Spacing between neighbouring points.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Integer coordinates of point `i`.
    pub fn coords(&self, i: usize) -> Vec<usize> {
        let mut rest = i;
        let mut c = vec![0usize; self.l];
        for t in (0..self.l).rev() {
            c[t] = rest % self.n;
            rest /= self.n;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.n + (c % self.n))
    }
}

fn freq_of(slot: usize, n: usize) -> i64 {
    let half = n / 2;
    if slot <= half {
        slot as i64
    } else {
        slot as i64 - n as i64
    }
}

/// In-place separable DFT `ĉ(j) = N⁻¹ Σ v(φ) e^{−i j·φ}` on an `n^l` array.
fn dft(values: &mut [Complex64], l: usize, n: usize, tw: &[Complex64], scratch: &mut Vec<Complex64>) {
    let total = values.len();
    scratch.resize(n, Complex64::zero());
    let mut stride = 1;
    for _axis in 0..l {
        let block = stride * n;
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                for (f, s) in scratch.iter_mut().enumerate() {
                    let mut acc = Complex64::zero();
                    for c in 0..n {
                        acc += values[base + off + c * stride] * tw[(f * c) % n];
                    }
                    *s = acc / n as f64;
                }
                for f in 0..n {
                    values[base + off + f * stride] = scratch[f];
                }
            }
        }
        stride *= n;
    }
}

/// Rebuilds a φ-moded series from its values at the grid points.
///
/// Each slice lives in the slice space of `target`. Coefficients with
/// `|j|₁ ≤ K_phi` are kept; the majorant of all other discrete modes is
/// returned as the projection loss.
pub fn project_phi(
    grid: &PhiGrid,
    slices: &[FTSeries],
    target: &Arc<SeriesSpace>,
    radii: Radii,
) -> Result<(FTSeries, f64)> {
    let g = target.grading();
    if grid.l != g.l {
        return Err(KamError::Projection(format!("grid dimension {} vs l = {}", grid.l, g.l)));
    }
    if slices.len() != grid.len() {
        return Err(KamError::Projection(format!("{} slices for {} grid points", slices.len(), grid.len())));
    }
    if grid.n < 2 * g.k_phi as usize + 1 {
        return Err(KamError::Projection(format!(
            "grid of {} points per dimension cannot resolve K_phi = {}",
            grid.n, g.k_phi
        )));
    }
    for s in slices {
        if s.grading() != g.slice() {
            return Err(KamError::GradingMismatch);
        }
    }
    let n = grid.n;
    let l = grid.l;
    let total = grid.len();
    let mut by_key: BTreeMap<(u32, u32), Vec<Complex64>> = BTreeMap::new();
    let mut carried = 0.0f64;
    for (pi, s) in slices.iter().enumerate() {
        carried = carried.max(s.trunc_loss());
        for (k, m, c) in s.slice_terms() {
            by_key.entry((k, m)).or_insert_with(|| vec![Complex64::zero(); total])[pi] = c;
        }
    }
    let tw: Vec<Complex64> = (0..n)
        .map(|t| {
            let a = -2.0 * PI * t as f64 / n as f64;
            Complex64::new(a.cos(), a.sin())
        })
        .collect();
    let mut scratch = Vec::new();
    let mut terms = Vec::new();
    let mut loss = 0.0;
    let mut jv = vec![0i32; l];
    for ((k, m), mut vals) in by_key {
        dft(&mut vals, l, n, &tw, &mut scratch);
        for (slot, c) in vals.iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let mut rest = slot;
            for t in (0..l).rev() {
                jv[t] = freq_of(rest % n, n) as i32;
                rest /= n;
            }
            let norm1: u32 = jv.iter().map(|v| v.unsigned_abs()).sum();
            let deg = target.monomial_degree(m);
            let kn: u32 = target.mode_q(k).iter().map(|v| v.unsigned_abs()).sum();
            let w = ((norm1 + kn) as f64 * radii.r).exp() * radii.s.powi(deg as i32);
            match target.js.index_of(&jv) {
                Some(j) if norm1 <= g.k_phi => terms.push((target.pack(j, k, m), *c)),
                _ => loss += c.norm() * w,
            }
        }
    }
    let out = FTSeries::from_terms(target, radii, terms).realify().with_loss(carried + loss);
    Ok((out, loss))
}
