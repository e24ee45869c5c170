//! Dense oracles for the per-mode solvers: one solve over the whole
//! truncated q-basis, with the operator written out from its definition.

use std::sync::Arc;

use kam_core::fourier_taylor::{FTSeries, Grading, Radii, SeriesMatrix, SeriesSpace, C64};
use kam_core::small_divisors::{effective_diophantine_constant, min_divisor_sq, solve_l1, solve_l2, solve_l3, DiophantineWitness};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    space: Arc<SeriesSpace>,
    witness: DiophantineWitness,
    k: u32,
    modes: Vec<Vec<i32>>,
    j: Vec<i32>,
    alpha: Vec<u8>,
}

fn q_modes(d: usize, k: i32) -> Vec<Vec<i32>> {
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

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    loop {
        let d = rng.gen_range(1..=2);
        let l = rng.gen_range(1..=2);
        let k = rng.gen_range(1..=8u32);
        let omega: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..2.0)).collect();
        let witness = effective_diophantine_constant(&omega, 1.0, k).unwrap();
        if witness.is_resonant() || min_divisor_sq(&omega, k).0 < 1e-6 {
            continue;
        }
        let space = SeriesSpace::new(Grading::new(d, l, k, 1, 3).unwrap()).unwrap();
        let mut j = vec![0i32; l];
        j[rng.gen_range(0..l)] = rng.gen_range(-1..=1);
        let mut alpha = vec![0u8; 2 * l + d];
        for _ in 0..rng.gen_range(0..=3) {
            let t = rng.gen_range(0..alpha.len());
            alpha[t] += 1;
        }
        return Instance { space, witness, k, modes: q_modes(d, k as i32), j, alpha };
    }
}

/// Symmetric `β` with `‖β‖ ≤ 1` and `ν_max(β) ≤ factor·min⟨ω,k⟩²`.
fn admissible_beta(rng: &mut ChaCha8Rng, l: usize, inst: &Instance, factor: f64) -> DMatrix<f64> {
    let top = (0.9 * factor * min_divisor_sq(&inst.witness.omega, inst.k).0).min(0.9);
    let a = DMatrix::from_fn(l, l, |_, _| rng.gen_range(-1.0..1.0));
    let q = a.qr().q();
    let lam = DVector::from_fn(l, |_, _| rng.gen_range(-0.9..top));
    &q * DMatrix::from_diagonal(&lam) * q.transpose()
}

fn random_series(rng: &mut ChaCha8Rng, inst: &Instance) -> FTSeries {
    let mut s = FTSeries::zero(&inst.space, Radii::new(0.5, 0.5));
    for m in &inst.modes {
        let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        s.set(&inst.j, m, &inst.alpha, c).unwrap();
    }
    s
}

fn divisor(inst: &Instance, m: &[i32]) -> C64 {
    C64::new(0.0, inst.witness.omega.iter().zip(m).map(|(w, &c)| w * c as f64).sum())
}

/// Dense solve of `A U = B` where, block by block over the q-basis, `rows`
/// writes the equations of mode `m` (or its zero-mode conditions) for all
/// right-hand sides at once.
fn dense_solve(
    inst: &Instance,
    nb: usize,
    nrhs: usize,
    mut rows: impl FnMut(&[i32], usize, &mut DMatrix<C64>, &mut DMatrix<C64>),
) -> DMatrix<C64> {
    let n = inst.modes.len() * nb;
    let mut a = DMatrix::<C64>::zeros(n, n);
    let mut b = DMatrix::<C64>::zeros(n, nrhs);
    for (r, m) in inst.modes.iter().enumerate() {
        rows(m, r * nb, &mut a, &mut b);
    }
    a.lu().solve(&b).expect("dense operator is singular")
}

fn rel_gap(inst: &Instance, nb: usize, dense: &DMatrix<C64>, col: usize, got: &[&FTSeries]) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (r, m) in inst.modes.iter().enumerate() {
        for (s, ser) in got.iter().enumerate() {
            let want = dense[(r * nb + s, col)];
            num = num.max((ser.coeff(&inst.j, m, &inst.alpha) - want).norm());
            den = den.max(want.norm());
        }
    }
    num / den.max(f64::MIN_POSITIVE)
}

fn is_zero_mode(m: &[i32]) -> bool {
    m.iter().all(|&c| c == 0)
}

/// Worst relative coefficient gap of `solve_l1` against the dense solve.
pub fn l1_worst_gap(seed: u64, instances: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = instance(&mut rng);
        let v = random_series(&mut rng, &inst);
        let u = solve_l1(&v, &inst.witness).unwrap();
        let dense = dense_solve(&inst, 1, 1, |m, r, a, b| {
            if is_zero_mode(m) {
                a[(r, r)] = C64::new(1.0, 0.0);
            } else {
                a[(r, r)] = divisor(&inst, m);
                b[(r, 0)] = v.coeff(&inst.j, m, &inst.alpha);
            }
        });
        worst = worst.max(rel_gap(&inst, 1, &dense, 0, &[&u]));
        let resid = u.partial_omega(&inst.witness.omega).checked_sub(&v.checked_sub(&v.average_q()).unwrap()).unwrap();
        worst = worst.max(resid.max_abs_coeff() / v.max_abs_coeff());
    }
    worst
}

pub fn l2_worst_gap(seed: u64, instances: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = instance(&mut rng);
        let l = inst.space.grading().l;
        let beta = admissible_beta(&mut rng, l, &inst, 0.5);
        let bx: Vec<FTSeries> = (0..l).map(|_| random_series(&mut rng, &inst)).collect();
        let by: Vec<FTSeries> = (0..l).map(|_| random_series(&mut rng, &inst)).collect();
        let (ux, uy) = solve_l2(&bx, &by, &beta, &inst.witness, inst.k).unwrap();
        let one = C64::new(1.0, 0.0);
        let dense = dense_solve(&inst, 2 * l, 1, |m, r, a, b| {
            let at = |s: &FTSeries| s.coeff(&inst.j, m, &inst.alpha);
            for i in 0..l {
                if is_zero_mode(m) {
                    a[(r + i, r + i)] = one;
                    b[(r + i, 0)] = at(&by[i]);
                    a[(r + l + i, r + l + i)] = one;
                    continue;
                }
                let lam = divisor(&inst, m);
                a[(r + i, r + i)] = lam;
                for c in 0..l {
                    a[(r + i, r + l + c)] = C64::new(-beta[(i, c)], 0.0);
                }
                b[(r + i, 0)] = at(&bx[i]);
                a[(r + l + i, r + l + i)] = lam;
                a[(r + l + i, r + i)] = one;
                b[(r + l + i, 0)] = at(&by[i]);
            }
        });
        let got: Vec<&FTSeries> = ux.iter().chain(&uy).collect();
        worst = worst.max(rel_gap(&inst, 2 * l, &dense, 0, &got));
    }
    worst
}

pub fn l3_worst_gap(seed: u64, instances: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = instance(&mut rng);
        let l = inst.space.grading().l;
        let radii = Radii::new(0.5, 0.5);
        let beta = admissible_beta(&mut rng, l, &inst, 0.25);
        let mut blocks = Vec::new();
        for _ in 0..3 {
            let mut m = SeriesMatrix::zeros(&inst.space, radii, l, l);
            for i in 0..l {
                for c in 0..l {
                    m.set(i, c, random_series(&mut rng, &inst));
                }
            }
            blocks.push(m);
        }
        let (dxx, dyy, dxy) = (&blocks[0], &blocks[1], &blocks[2]);
        let (sxx, syy, sxy) = solve_l3(dxx, dyy, dxy, &beta, &inst.witness, inst.k).unwrap();
        let one = C64::new(1.0, 0.0);
        let dense = dense_solve(&inst, 3 * l, l, |m, r, a, b| {
            let at = |s: &SeriesMatrix, i: usize, col: usize| s.get(i, col).coeff(&inst.j, m, &inst.alpha);
            let (xx, yy, xy) = (r, r + l, r + 2 * l);
            for i in 0..l {
                if is_zero_mode(m) {
                    a[(xx + i, xx + i)] = one;
                    a[(yy + i, yy + i)] = one;
                    a[(xy + i, xy + i)] = one;
                    for col in 0..l {
                        b[(xx + i, col)] = at(dxy, i, col);
                        b[(xy + i, col)] = at(dyy, i, col);
                    }
                    continue;
                }
                let lam = divisor(&inst, m);
                a[(xx + i, xx + i)] = lam;
                a[(yy + i, yy + i)] = lam;
                a[(yy + i, xy + i)] = one;
                a[(xy + i, xy + i)] = lam;
                a[(xy + i, xx + i)] = one;
                for c in 0..l {
                    a[(xx + i, xy + c)] = C64::new(-beta[(i, c)], 0.0);
                    a[(xy + i, yy + c)] = C64::new(-beta[(i, c)], 0.0);
                }
                for col in 0..l {
                    b[(xx + i, col)] = at(dxx, i, col);
                    b[(yy + i, col)] = at(dyy, i, col);
                    b[(xy + i, col)] = at(dxy, i, col);
                }
            }
        });
        for col in 0..l {
            let got: Vec<&FTSeries> =
                (0..l).map(|i| sxx.get(i, col)).chain((0..l).map(|i| syy.get(i, col))).chain((0..l).map(|i| sxy.get(i, col))).collect();
            worst = worst.max(rel_gap(&inst, 3 * l, &dense, col, &got));
        }
    }
    worst
}
