//! Random small generators and the worst canonical bracket residual of their maps.

use std::sync::Arc;

use kam_core::fourier_taylor::{FTSeries, Grading, Radii, SeriesSpace};
use kam_core::symplectic::{map_from_generator, symplecticity_residual, GeneratingFunction, ORDER_CAP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::series::{eval_partial, eval_real, random_real};

/// `F` of Taylor degree at most 2, like the generators of a KAM step, plus a
/// φ-dependent `v`.
pub fn random_generator_in(rng: &mut ChaCha8Rng, space: &Arc<SeriesSpace>, amp: f64) -> GeneratingFunction {
    let g = space.grading();
    let (d, l) = (g.d, g.l);
    let radii = Radii::new(0.4, 0.4);
    let f = random_real(rng, space, radii, 6, 1, 2, 2, amp);
    let v: Vec<FTSeries> = (0..d)
        .map(|_| {
            let j: Vec<i32> = (0..l).map(|_| rng.gen_range(-1..=1)).collect();
            FTSeries::cos_term(space, radii, &j, &vec![0; d], &vec![0; 2 * l + d], amp * rng.gen_range(-1.0..1.0), 0.3)
                .unwrap()
        })
        .collect();
    GeneratingFunction::new(f, v).unwrap()
}

pub fn random_generator(rng: &mut ChaCha8Rng, amp: f64) -> GeneratingFunction {
    let d = rng.gen_range(1..=2);
    let l = rng.gen_range(1..=2);
    let space = SeriesSpace::new(Grading::new(d, l, 8, 3, 4).unwrap()).unwrap();
    random_generator_in(rng, &space, amp)
}

/// Largest residual over `count` maps built from random generators of size `amp`.
pub fn worst_bracket_residual(seed: u64, count: usize, amp: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let gen = random_generator(&mut rng, amp);
        let map = map_from_generator(&gen, ORDER_CAP, None).unwrap();
        worst = worst.max(symplecticity_residual(&map).unwrap());
    }
    worst
}

/// Time-one flow of `F + v·q` by RK4, with the vector field differentiated term by term.
pub fn rk4_flow(gen: &GeneratingFunction, phi: &[f64], state: &[f64], steps: usize) -> Vec<f64> {
    let g = gen.f.grading();
    let (d, l) = (g.d, g.l);
    let v: Vec<f64> = gen.v.iter().map(|s| eval_real(s, phi, &vec![0.0; d], &vec![0.0; 2 * l + d])).collect();
    // state = (q, x, p, y); Taylor slots are ordered (x, p, y).
    let field = |s: &[f64]| -> Vec<f64> {
        let q = &s[..d];
        let z = &s[d..];
        let dz = |slot: usize| eval_partial(&gen.f, phi, q, z, d + slot);
        let dq = |i: usize| eval_partial(&gen.f, phi, q, z, i);
        let mut out = vec![0.0; s.len()];
        for i in 0..d {
            out[i] = dz(l + i);
            out[d + l + i] = -dq(i) - v[i];
        }
        for i in 0..l {
            out[d + i] = dz(l + d + i);
            out[2 * d + l + i] = -dz(i);
        }
        out
    };
    let mut s = state.to_vec();
    let h = 1.0 / steps as f64;
    let add = |a: &[f64], b: &[f64], c: f64| a.iter().zip(b).map(|(x, y)| x + c * y).collect::<Vec<_>>();
    for _ in 0..steps {
        let k1 = field(&s);
        let k2 = field(&add(&s, &k1, h / 2.0));
        let k3 = field(&add(&s, &k2, h / 2.0));
        let k4 = field(&add(&s, &k3, h));
        for i in 0..s.len() {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    s
}
