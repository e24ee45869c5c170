use std::time::Instant;

use kam_core::fourier_taylor::PhiGrid;
use kam_core::kam_engine::{build_schedule, iterate, solve_torus, EngineConfig, IterationOutcome, KamProblem};

mod support;
use support::problems::{flagship, mixed_planar, triple_reduced};

fn run(p: &KamProblem) -> IterationOutcome {
    let out = iterate(p, &EngineConfig::default()).unwrap();
    for h in &out.history {
        eprintln!(
            "n {} f {:e} target {:e} conj {:?} coh {:e} alpha gap {:?} beta gap {:?}",
            h.n, h.f_norm, h.eps_target, h.conjugacy_residual, h.cohomological_residual, h.alpha_gradient_gap, h.beta_relation_gap
        );
    }
    out
}

#[test]
fn flagship_torus_sits_at_the_maximum_of_cos() {
    let t0 = Instant::now();
    let p = flagship(1e-4);
    let out = run(&p);
    assert!(out.converged, "{:?}", out.failure);
    let grid = PhiGrid::for_order(1, 16);
    let t = solve_torus(&p.hamiltonian().unwrap(), &out.state, p.omega(), &grid, 32).unwrap();
    eprintln!("phi0 {:?} residual {:e} in {:?}", t.phi0, t.residual, t0.elapsed());
    assert!(t.phi0[0].abs() <= 1e-6);
    assert!(t.residual <= 1e-8);
    // ζ = ε cos φ: value ε at the maximum, with α vanishing there.
    assert!((t.zeta_at_phi0 - 1e-4).abs() <= 1e-10);
    assert!(t.alpha_at_phi0.iter().all(|a| a.abs() <= 1e-10));
}

#[test]
fn angle_dependent_planar_perturbation() {
    let p = mixed_planar(1e-4);
    let out = run(&p);
    assert!(out.converged, "{:?}", out.failure);
    let h = &out.history;
    assert!(h.len() >= 2);
    let ratio = h[1].f_norm.ln() / h[0].f_norm.ln();
    assert!(ratio >= 1.4, "contraction exponent {}", ratio);
    for r in h {
        assert!(r.alpha_gradient_gap.unwrap() <= 1e-10);
        assert!(r.beta_relation_gap.unwrap() <= 1e-8);
    }
    let grid = PhiGrid::for_order(1, 12);
    let t = solve_torus(&p.hamiltonian().unwrap(), &out.state, p.omega(), &grid, 32).unwrap();
    assert!(t.residual <= 1e-8, "residual {:e}", t.residual);
    assert!(t.distance_to_trivial > 0.0);
}

#[test]
fn reduced_three_degree_system() {
    let rp = triple_reduced(7, 1e-5);
    let report = rp.report.as_ref().unwrap();
    assert!(report.table().iter().all(|row| row.1), "{:?}", report.table());
    assert!(report.frequency_residual <= 1e-14);
    let p = KamProblem::from_reduced(&rp).unwrap();
    let out = run(&p);
    assert!(out.converged, "{:?}", out.failure);
    let grid = PhiGrid::for_order(1, 8);
    let t = solve_torus(&p.hamiltonian().unwrap(), &out.state, p.omega(), &grid, 12).unwrap();
    assert!(t.residual <= 1e-6, "residual {:e}", t.residual);
}

#[test]
fn schedule_first_rungs_by_hand() {
    let s = build_schedule(1.0, 1.0, 1e-6, 1, 0.01, 0.1, 0.0, 3).unwrap();
    let r0 = s.rungs[0];
    assert!((r0.sigma - 1.0 / 40.0).abs() < 1e-16);
    let r1 = s.rungs[1];
    assert!((r1.r - 0.75).abs() < 1e-15);
    assert!((r1.s - (1.0 - 1.0 / 40.0)).abs() < 1e-15);
    assert!((r1.sigma - 1.0 / 80.0).abs() < 1e-16);
    assert!((r1.eps - 1e-9).abs() < 1e-21);
    let lg = 1e-6f64.ln().abs();
    assert!((r0.delta - (r0.sigma / lg).powf(0.04)).abs() < 1e-15);
    assert!((r0.delta_plus - 0.125 * (r0.sigma / (4.0 * lg)).powf(0.02)).abs() < 1e-15);
    assert!(s.rungs.iter().all(|r| r.delta_plus < r.delta));
}

#[test]
fn schedule_stops_when_eps_is_too_large() {
    let s = build_schedule(1.0, 1.0, 0.5, 1, 0.01, 0.1, 0.0, 3).unwrap();
    assert!(s.rungs.is_empty());
    assert!(s.stop.is_some());
    assert!(build_schedule(-1.0, 1.0, 1e-6, 1, 0.01, 0.1, 0.0, 3).is_err());
}

#[test]
fn large_amplitude_is_reported_as_a_failure() {
    let out = iterate(&flagship(0.5), &EngineConfig::default()).unwrap();
    assert!(!out.converged);
    assert!(out.history.is_empty());
    assert!(out.failure.unwrap().contains("no admissible step"));
}

#[test]
fn zero_amplitude_is_converged_at_once() {
    let p = flagship(0.0);
    let out = iterate(&p, &EngineConfig::default()).unwrap();
    assert!(out.converged && out.history.is_empty());
    let t = solve_torus(&p.hamiltonian().unwrap(), &out.state, p.omega(), &PhiGrid::for_order(1, 16), 16).unwrap();
    assert_eq!(t.residual, 0.0);
    assert_eq!(t.distance_to_trivial, 0.0);
}
