use std::f64::consts::PI;
use std::sync::Arc;

use kam_core::fourier_taylor::{FTSeries, Grading, PhiGrid, Radii, SeriesSpace, Var};
use kam_core::kam_engine::{
    embedding_distance, extract_torus, find_vanishing_point, verify_invariance, IterationState,
};

mod support;
use support::problems::{flagship, golden};

fn space(l: usize) -> Arc<SeriesSpace> {
    SeriesSpace::new(Grading::new(1, l, 4, 4, 3).unwrap()).unwrap()
}

fn radii() -> Radii {
    Radii::new(0.5, 0.5)
}

fn dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[test]
fn vanishing_point_of_a_shifted_cosine() {
    let s = space(1);
    let zeta = FTSeries::cos_term(&s, radii(), &[1], &[0], &[0, 0, 0], 1e-4, -1.0).unwrap();
    let phi0 = find_vanishing_point(&zeta, &PhiGrid::for_order(1, 4)).unwrap();
    assert!(dist(phi0[0], 1.0) <= 1e-10, "{:?}", phi0);
}

#[test]
fn vanishing_point_in_two_parameters() {
    let s = space(2);
    let a = FTSeries::cos_term(&s, radii(), &[1, 0], &[0], &[0; 5], 1.0, -1.0).unwrap();
    let b = FTSeries::cos_term(&s, radii(), &[0, 1], &[0], &[0; 5], 0.5, -2.0).unwrap();
    let c = FTSeries::cos_term(&s, radii(), &[1, 1], &[0], &[0; 5], 0.1, -3.0).unwrap();
    let zeta = a.checked_add(&b).unwrap().checked_add(&c).unwrap();
    let phi0 = find_vanishing_point(&zeta, &PhiGrid::for_order(2, 4)).unwrap();
    assert!(dist(phi0[0], 1.0) <= 1e-10 && dist(phi0[1], 2.0) <= 1e-10, "{:?}", phi0);
}

#[test]
fn constant_zeta_returns_the_first_grid_point() {
    let s = space(1);
    let zeta = FTSeries::constant(&s, radii(), 3.0);
    let phi0 = find_vanishing_point(&zeta, &PhiGrid::for_order(1, 4)).unwrap();
    assert_eq!(phi0, vec![0.0]);
}

/// `ωp − ½p² + ½y²` on the slice.
fn unperturbed(slice: &Arc<SeriesSpace>) -> FTSeries {
    let p = FTSeries::coordinate(slice, radii(), Var::P(0)).unwrap();
    let y = FTSeries::coordinate(slice, radii(), Var::Y(0)).unwrap();
    p.scale_re(golden())
        .axpy(-0.5, &p.checked_mul(&p).unwrap())
        .axpy(0.5, &y.checked_mul(&y).unwrap())
}

#[test]
fn trivial_torus_of_the_unperturbed_problem_is_exact() {
    let slice = SeriesSpace::new(Grading::new(1, 1, 4, 0, 3).unwrap()).unwrap();
    let h = unperturbed(&slice);
    let e = vec![FTSeries::zero(&slice, radii()); 4];
    assert_eq!(verify_invariance(&h, &e, &[golden()], 16).unwrap(), 0.0);
    assert_eq!(embedding_distance(&e, 16).unwrap(), 0.0);
}

#[test]
fn displaced_embedding_residual_by_hand() {
    // x(q) = a cos q is not invariant: X_H = (ω, 0, 0, 0) there while
    // De·ω = (ω, −aω sin q, 0, 0), so the residual is aω at q = π/2.
    let slice = SeriesSpace::new(Grading::new(1, 1, 4, 0, 3).unwrap()).unwrap();
    let h = unperturbed(&slice);
    let a = 1e-3;
    let mut e = vec![FTSeries::zero(&slice, radii()); 4];
    e[1] = FTSeries::cos_term(&slice, radii(), &[0], &[1], &[0, 0, 0], a, 0.0).unwrap();
    let res = verify_invariance(&h, &e, &[golden()], 4).unwrap();
    assert!((res - a * golden()).abs() <= 1e-15, "{:e}", res);
    let dist = embedding_distance(&e, 4).unwrap();
    assert!((dist - a).abs() <= 1e-18);
}

#[test]
fn initial_state_gives_the_trivial_torus() {
    let p = flagship(1e-4);
    let state = IterationState::initial(&p);
    let e = extract_torus(&state, &[0.3]).unwrap();
    assert_eq!(e.len(), 4);
    assert_eq!(embedding_distance(&e, 8).unwrap(), 0.0);
    let slice = SeriesSpace::new(p.hamiltonian().unwrap().grading().slice()).unwrap();
    let h = p.hamiltonian().unwrap().at_phi(&[0.0], &slice);
    // At φ = 0, ∂ₓ(ε cos(x + φ)) vanishes on x = 0: the trivial torus is invariant.
    assert!(verify_invariance(&h, &e, p.omega(), 16).unwrap() <= 1e-20);
    // At φ = π/2 it is not, the residual is ε.
    let h = p.hamiltonian().unwrap().at_phi(&[PI / 2.0], &slice);
    let r = verify_invariance(&h, &e, p.omega(), 16).unwrap();
    assert!((r - 1e-4).abs() <= 1e-15, "{:e}", r);
}

#[test]
fn mismatched_shapes_are_rejected() {
    let slice = SeriesSpace::new(Grading::new(1, 1, 4, 0, 3).unwrap()).unwrap();
    let h = unperturbed(&slice);
    let e = vec![FTSeries::zero(&slice, radii()); 3];
    assert!(verify_invariance(&h, &e, &[golden()], 4).is_err());
    let e = vec![FTSeries::zero(&slice, radii()); 4];
    assert!(verify_invariance(&h, &e, &[golden(), 1.0], 4).is_err());
    assert!(verify_invariance(&h, &e, &[golden()], 0).is_err());
}
