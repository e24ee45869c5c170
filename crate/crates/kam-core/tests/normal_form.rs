use kam_core::fourier_taylor::{FTSeries, Grading, PhiGrid, Radii, SeriesMatrix, SeriesSpace};
use kam_core::normal_form::{
    assemble_hamiltonian, bump_psi, eval_phi_matrix, is_normal_form, nu_max_profile, NormalFormTuple,
};
use nalgebra::DMatrix;

mod support;
use support::certificates::bump_check;

#[test]
fn bump_plateaus_and_curvature_growth() {
    let c = bump_check(0.3, 0.2);
    eprintln!("plateau {:e} c2 {:e} -> {:e}", c.plateau_deviation, c.c2_wide, c.c2_narrow);
    assert!(c.plateau_deviation <= 1e-6);
    assert!(c.c2_narrow / c.c2_wide >= 2.0);
}

#[test]
fn bump_on_two_parameters_keeps_plateaus() {
    let grid = PhiGrid::new(2, 96);
    let profile: Vec<(Vec<f64>, f64)> = grid.iter().map(|p| (p.to_vec(), 0.25 * (2.0 - p[0].cos() - p[1].cos()))).collect();
    let b = bump_psi(&profile, &grid, 0.2, 0.6).unwrap();
    assert!(b.plateau_deviation <= 1e-6);
    assert!(b.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(!b.is_identically_one());
    assert!(bump_psi(&profile, &grid, 0.6, 0.2).is_err());
}

#[test]
fn bump_below_every_threshold_is_one() {
    let grid = PhiGrid::new(1, 64);
    let profile: Vec<(Vec<f64>, f64)> = grid.iter().map(|p| (p.to_vec(), -1.0)).collect();
    let b = bump_psi(&profile, &grid, 0.1, 0.2).unwrap();
    assert!(b.is_identically_one());
}

fn space() -> std::sync::Arc<SeriesSpace> {
    SeriesSpace::new(Grading::new(1, 2, 4, 3, 4).unwrap()).unwrap()
}

#[test]
fn unperturbed_hamiltonian_by_hand() {
    let sp = space();
    let r = Radii::new(0.5, 0.5);
    let m0 = DMatrix::from_element(1, 1, -1.0);
    let q0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let n = NormalFormTuple::unperturbed(&sp, r, &[1.5], &m0, &q0, FTSeries::zero(&sp, r)).unwrap();
    let h = assemble_hamiltonian(&n);
    let (p, y) = (0.3, [0.2, -0.1]);
    let want = 1.5 * p - 0.5 * p * p + 0.5 * (2.0 * y[0] * y[0] + 2.0 * 0.5 * y[0] * y[1] + y[1] * y[1]);
    let got = h.evaluate(&[0.1, 0.2], &[0.7], &[0.05, 0.02], &[p], &y).unwrap();
    assert!((got - want).abs() < 1e-15, "{} vs {}", got, want);
    let grid = PhiGrid::new(2, 16);
    let rep = is_normal_form(&n, &[1.5], 0.1, 1e-14, &grid).unwrap();
    assert!(rep.holds && rep.w_matches && rep.violations.is_empty());
    assert!(!is_normal_form(&n, &[1.4], 0.1, 1e-14, &grid).unwrap().holds);
    let bad = FTSeries::cos_term(&sp, r, &[0, 0], &[0], &[0, 0, 0, 0, 0], 1e-3, 0.0).unwrap();
    assert!(NormalFormTuple::unperturbed(&sp, r, &[1.5], &m0, &q0, bad).is_err());
}

#[test]
fn beta_and_gamma_terms_enter_as_written() {
    let sp = space();
    let r = Radii::new(0.5, 0.5);
    let mut n = NormalFormTuple::zero(&sp, r);
    let b = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.3, 0.5]);
    n.beta = SeriesMatrix::constant(&sp, r, &b);
    n.gamma = SeriesMatrix::constant(&sp, r, &DMatrix::from_row_slice(2, 1, &[0.7, -0.2]));
    let h = assemble_hamiltonian(&n);
    let (x, p) = ([0.1, -0.2], 0.4);
    let bx = [b[(0, 0)] * x[0] + b[(0, 1)] * x[1], b[(1, 0)] * x[0] + b[(1, 1)] * x[1]];
    let want = 0.5 * (bx[0] * x[0] + bx[1] * x[1]) + (0.7 * x[0] - 0.2 * x[1]) * p;
    let got = h.evaluate(&[0.0, 0.0], &[0.0], &x, &[p], &[0.0, 0.0]).unwrap();
    assert!((got - want).abs() < 1e-15);
    let grid = PhiGrid::new(2, 8);
    let prof = nu_max_profile(&n.beta, &grid).unwrap();
    let eig = b.symmetric_eigenvalues();
    let top = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(prof.iter().all(|(_, v)| (v - top).abs() < 1e-14));
    assert_eq!(eval_phi_matrix(&n.beta, &[1.0, 2.0]).unwrap(), b);
}

#[test]
fn tuple_arithmetic_round_trips() {
    let sp = space();
    let r = Radii::new(0.5, 0.5);
    let m0 = DMatrix::from_element(1, 1, -1.0);
    let a = NormalFormTuple::unperturbed(&sp, r, &[1.5], &m0, &DMatrix::identity(2, 2), FTSeries::zero(&sp, r)).unwrap();
    let mut b = NormalFormTuple::zero(&sp, r);
    b.c = FTSeries::cos_term(&sp, r, &[1, 0], &[0], &[0; 5], 0.2, 0.0).unwrap();
    b.w = vec![0.1];
    let s = a.add(&b).unwrap().sub(&b).unwrap();
    assert_eq!(s.w, a.w);
    assert!(s.c.max_abs_coeff() == 0.0);
    assert!(a.norm() > 0.0);
}
