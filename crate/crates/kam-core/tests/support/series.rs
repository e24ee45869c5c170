//! Random real series and a coefficient-level evaluator independent of the
//! library's own.

use std::sync::Arc;

use kam_core::fourier_taylor::{FTSeries, Radii, SeriesSpace, C64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_mode(rng: &mut ChaCha8Rng, dim: usize, bound: i32) -> Vec<i32> {
    let mut m = vec![0i32; dim];
    let mut left = rng.gen_range(0..=bound);
    while left > 0 {
        let t = rng.gen_range(0..dim);
        let step = if rng.gen_bool(0.5) { 1 } else { -1 };
        m[t] += step;
        left -= 1;
    }
    m
}

fn random_monomial(rng: &mut ChaCha8Rng, n: usize, deg: u32) -> Vec<u8> {
    let mut a = vec![0u8; n];
    for _ in 0..rng.gen_range(0..=deg) {
        a[rng.gen_range(0..n)] += 1;
    }
    a
}

/// Sum of `terms` random real terms `amp·c·cos(j·φ + k·q + θ)·z^α` with
/// `|j|₁ ≤ kj`, `|k|₁ ≤ kq`, `|α| ≤ deg` and `|c| ≤ 1`.
pub fn random_real(
    rng: &mut ChaCha8Rng,
    space: &Arc<SeriesSpace>,
    radii: Radii,
    terms: usize,
    kj: i32,
    kq: i32,
    deg: u32,
    amp: f64,
) -> FTSeries {
    let g = space.grading();
    let mut s = FTSeries::zero(space, radii);
    for _ in 0..terms {
        let j = random_mode(rng, g.l, kj);
        let k = random_mode(rng, g.d, kq);
        let alpha = random_monomial(rng, g.n_taylor(), deg);
        let t = FTSeries::cos_term(space, radii, &j, &k, &alpha, amp * rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.3))
            .unwrap();
        s = s.checked_add(&t).unwrap();
    }
    s
}

/// `Σ c e^{i(j·φ + k·q)} z^α` at complex `φ`, `q` and complex Taylor variables
/// `z = (x, p, y)`.
pub fn eval_complex(s: &FTSeries, phi: &[C64], q: &[C64], z: &[C64]) -> C64 {
    let i = C64::new(0.0, 1.0);
    let mut acc = C64::new(0.0, 0.0);
    for t in s.terms() {
        let mut arg = C64::new(0.0, 0.0);
        for (a, &b) in phi.iter().zip(t.j) {
            arg += a * b as f64;
        }
        for (a, &b) in q.iter().zip(t.k) {
            arg += a * b as f64;
        }
        let mut v = t.c * (i * arg).exp();
        for (zz, &e) in z.iter().zip(t.alpha) {
            v *= zz.powu(e as u32);
        }
        acc += v;
    }
    acc
}

/// Real evaluation through [`eval_complex`].
pub fn eval_real(s: &FTSeries, phi: &[f64], q: &[f64], z: &[f64]) -> f64 {
    let c = |v: &[f64]| v.iter().map(|&a| C64::new(a, 0.0)).collect::<Vec<_>>();
    eval_complex(s, &c(phi), &c(q), &c(z)).re
}

/// Partial derivative in `q_v` (for `v < d`) or in Taylor slot `v − d`,
/// summed term by term at a real point.
pub fn eval_partial(s: &FTSeries, phi: &[f64], q: &[f64], z: &[f64], v: usize) -> f64 {
    let d = q.len();
    let mut acc = C64::new(0.0, 0.0);
    for t in s.terms() {
        let arg: f64 = phi.iter().zip(t.j).map(|(a, &b)| a * b as f64).sum::<f64>()
            + q.iter().zip(t.k).map(|(a, &b)| a * b as f64).sum::<f64>();
        let mut c = t.c * C64::new(0.0, arg).exp();
        if v < d {
            c *= C64::new(0.0, t.k[v] as f64);
        }
        for (slot, (&zz, &e)) in z.iter().zip(t.alpha).enumerate() {
            if slot + d == v {
                if e == 0 {
                    c = C64::new(0.0, 0.0);
                } else {
                    c *= e as f64 * zz.powi(e as i32 - 1);
                }
            } else {
                c *= zz.powi(e as i32);
            }
        }
        acc += c;
    }
    acc.re
}
