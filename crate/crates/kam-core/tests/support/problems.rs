//! Model problems used by the engine tests.

use std::sync::Arc;

use kam_core::fourier_taylor::{Grading, Radii, SeriesSpace};
use kam_core::kam_engine::KamProblem;
use kam_core::symplectic::{
    reduce_coordinates, unimodular_completion, AngleActionTerm, OriginalSystem, ReducedProblem, ReducedTerm,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn golden() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

pub fn term(q: i32, x: i32, powers: [u32; 2], coefficient: f64, phase: f64) -> ReducedTerm {
    ReducedTerm { q_modes: vec![q], x_modes: vec![x], powers: powers.to_vec(), coefficient, phase }
}

/// `d = l = 1`, `N = ωp − ½p² + ½y²` with `ω` the golden mean, and `f` built from `terms`.
pub fn planar(k: u32, degree: u32, terms: &[ReducedTerm]) -> KamProblem {
    let space = SeriesSpace::new(Grading::new(1, 1, k, k, degree).unwrap()).unwrap();
    let rp = ReducedProblem::from_reduced(
        &space,
        Radii::new(0.5, 0.5),
        &[golden()],
        &DMatrix::from_element(1, 1, -1.0),
        &DMatrix::identity(1, 1),
        &[],
        terms,
    )
    .unwrap();
    KamProblem::from_reduced(&rp).unwrap()
}

/// `f = ε cos x` on the planar model with `K_q = K_phi = 16`, `D = 4`.
pub fn flagship(eps: f64) -> KamProblem {
    planar(16, 4, &[term(0, 1, [0, 0], eps, 0.0)])
}

/// A planar perturbation depending on `q` as well as on `x`, `p`, `y`.
pub fn mixed_planar(eps: f64) -> KamProblem {
    planar(
        12,
        4,
        &[
            term(0, 1, [0, 0], eps, 0.0),
            term(1, 0, [0, 0], 0.5 * eps, 0.0),
            term(1, 1, [1, 0], 0.3 * eps, 0.2),
            term(2, -1, [0, 1], 0.2 * eps, 0.0),
        ],
    )
}

/// `S > 0` and `C < 0` in lattice coordinates, pulled back to the original actions.
pub fn admissible_hessian(resonance: &[i64], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = resonance.len();
    let lat = unimodular_completion(&[resonance.to_vec()], m).unwrap();
    let (d, l) = (lat.d, lat.l);
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let s = &a * a.transpose() + DMatrix::identity(d, d);
    let c = DMatrix::from_element(l, l, -rng.gen_range(0.5..2.0));
    let b = DMatrix::from_fn(d, l, |_, _| rng.gen_range(-0.5..0.5));
    let ablock = &s + &b * c.clone().try_inverse().unwrap() * b.transpose();
    let mut hn = DMatrix::zeros(m, m);
    hn.view_mut((0, 0), (d, d)).copy_from(&ablock);
    hn.view_mut((0, d), (d, l)).copy_from(&b);
    hn.view_mut((d, 0), (l, d)).copy_from(&b.transpose());
    hn.view_mut((d, d), (l, l)).copy_from(&c);
    let kinv = lat.k_f64().try_inverse().unwrap();
    let h = &kinv * hn * kinv.transpose();
    (&h + h.transpose()) * 0.5
}

pub const TRIPLE_RESONANCE: [i64; 3] = [1, 1, -1];

/// `m = 3`, `ω₀ = (1, g, 1 + g)` resonant along `(1, 1, −1)`, with a random
/// admissible Hessian and `f = ε(cos(θ₁ + θ₂ − θ₃) + ½ cos θ₁)`.
pub fn triple_system(seed: u64, eps: f64) -> OriginalSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = golden();
    OriginalSystem {
        omega0: vec![1.0, g, 1.0 + g],
        hessian: admissible_hessian(&TRIPLE_RESONANCE, &mut rng),
        h_terms: vec![],
        f_terms: vec![
            AngleActionTerm { angle_modes: vec![1, 1, -1], powers: vec![0, 0, 0], coefficient: eps, phase: 0.0 },
            AngleActionTerm { angle_modes: vec![1, 0, 0], powers: vec![0, 0, 0], coefficient: 0.5 * eps, phase: 0.0 },
        ],
    }
}

pub fn triple_space() -> Arc<SeriesSpace> {
    SeriesSpace::new(Grading::new(2, 1, 6, 8, 3).unwrap()).unwrap()
}

pub fn triple_reduced(seed: u64, eps: f64) -> ReducedProblem {
    reduce_coordinates(&triple_system(seed, eps), &[TRIPLE_RESONANCE.to_vec()], &triple_space(), Radii::new(0.5, 0.5), 1.5)
        .unwrap()
}
