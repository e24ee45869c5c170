//! Truncation tails against a sampled strip sup, and bump plateaus.

use kam_core::fourier_taylor::{FTSeries, Grading, PhiGrid, Radii, SeriesSpace, C64};
use kam_core::normal_form::bump_psi;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::series::eval_complex;

/// One truncated series: `(measured tail, returned bound)`.
#[derive(Debug, Clone, Copy)]
pub struct Tail {
    pub measured: f64,
    pub bound: f64,
}

fn modes(d: usize, k: i32) -> Vec<Vec<i32>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|m: Vec<i32>| {
                (-k..=k).map(move |c| {
                    let mut v = m.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    out.retain(|m| m.iter().map(|c| c.abs()).sum::<i32>() <= k);
    out
}

/// Series `Σ u_k e^{−ρ|k|₁} e^{ik·q}` with `u_k ∈ [½, 1]`, cut at a random order.
///
/// The measured tail is the largest modulus of the dropped part over real
/// parts on a grid and imaginary parts in `{0, ±(r − σ)}^d`.
pub fn truncation_tails(seed: u64, count: usize) -> Vec<Tail> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let d = rng.gen_range(1..=2);
        let kq = 12;
        let space = SeriesSpace::new(Grading::new(d, 1, kq, 1, 3).unwrap()).unwrap();
        let radii = Radii::new(0.5, 0.5);
        let rho = rng.gen_range(0.8..1.5);
        let mut s = FTSeries::zero(&space, radii);
        for m in modes(d, kq as i32) {
            let n1: i32 = m.iter().map(|c| c.abs()).sum();
            let c = rng.gen_range(0.5..1.0) * (-rho * n1 as f64).exp();
            s.set(&[0], &m, &vec![0u8; 2 + d], C64::new(c, 0.0)).unwrap();
        }
        let kmax = rng.gen_range(2..=6);
        let sigma = rng.gen_range(0.05..0.3);
        let (low, bound) = s.truncate_fourier(kmax, sigma).unwrap();
        let tail = s.checked_sub(&low).unwrap();
        let b = radii.r - sigma;
        let npts: usize = 24;
        let mut measured = 0.0f64;
        let shifts: Vec<Vec<f64>> = modes(d, d as i32)
            .into_iter()
            .filter(|m| m.iter().all(|c| c.abs() <= 1))
            .map(|m| m.iter().map(|&c| c as f64 * b).collect())
            .collect();
        for t in 0..npts.pow(d as u32) {
            let re: Vec<f64> = (0..d).map(|i| 2.0 * std::f64::consts::PI * ((t / npts.pow(i as u32)) % npts) as f64 / npts as f64).collect();
            for im in &shifts {
                let q: Vec<C64> = re.iter().zip(im).map(|(&a, &c)| C64::new(a, c)).collect();
                let z = vec![C64::new(0.0, 0.0); 2 + d];
                measured = measured.max(eval_complex(&tail, &[C64::new(0.0, 0.0)], &q, &z).norm());
            }
        }
        out.push(Tail { measured, bound });
    }
    out
}

/// `ν(φ) = ½(1 − cos φ)` on a fine grid: plateau deviation and `C²` estimate
/// for the gap `t₂ − t₁` and for half of it.
pub struct BumpCheck {
    pub plateau_deviation: f64,
    pub c2_wide: f64,
    pub c2_narrow: f64,
}

pub fn bump_check(t1: f64, gap: f64) -> BumpCheck {
    let grid = PhiGrid::new(1, 4096);
    let profile: Vec<(Vec<f64>, f64)> = grid.iter().map(|p| (p.to_vec(), 0.5 * (1.0 - p[0].cos()))).collect();
    let wide = bump_psi(&profile, &grid, t1, t1 + gap).unwrap();
    let narrow = bump_psi(&profile, &grid, t1, t1 + gap / 2.0).unwrap();
    BumpCheck {
        plateau_deviation: wide.plateau_deviation.max(narrow.plateau_deviation),
        c2_wide: wide.c2_estimate(&grid),
        c2_narrow: narrow.c2_estimate(&grid),
    }
}
