use std::time::Instant;

use kam_core::small_divisors::{effective_diophantine_constant, min_divisor_sq};

mod support;
use support::divisors::{l1_worst_gap, l2_worst_gap, l3_worst_gap};

const INSTANCES: usize = 100;
const TOL: f64 = 1e-10;

#[test]
fn l1_matches_dense_solve() {
    let t0 = Instant::now();
    let gap = l1_worst_gap(11, INSTANCES);
    eprintln!("L1 worst relative gap {:e} in {:?}", gap, t0.elapsed());
    assert!(gap <= TOL, "L1 gap {:e}", gap);
}

#[test]
fn l2_matches_dense_solve() {
    let t0 = Instant::now();
    let gap = l2_worst_gap(12, INSTANCES);
    eprintln!("L2 worst relative gap {:e} in {:?}", gap, t0.elapsed());
    assert!(gap <= TOL, "L2 gap {:e}", gap);
}

#[test]
fn l3_matches_dense_solve() {
    let t0 = Instant::now();
    let gap = l3_worst_gap(13, INSTANCES);
    eprintln!("L3 worst relative gap {:e} in {:?}", gap, t0.elapsed());
    assert!(gap <= TOL, "L3 gap {:e}", gap);
}

#[test]
fn resonant_frequency_is_flagged() {
    let w = effective_diophantine_constant(&[1.0, 2.0], 1.0, 4).unwrap();
    assert!(w.is_resonant());
    assert_eq!(w.gamma, 0.0);
    let r = w.resonance.unwrap();
    assert_eq!(r[0] + 2 * r[1], 0);
}

#[test]
fn golden_mean_constant_by_hand() {
    // d = 1, τ = 1: γ = min_{1≤k≤K} |ω k|·k², attained at k = 1.
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let w = effective_diophantine_constant(&[g], 1.0, 10).unwrap();
    assert!((w.gamma - g).abs() < 1e-15);
    assert_eq!(w.minimizer[0].abs(), 1);
    let (m, arg) = min_divisor_sq(&[g, -1.0], 5);
    // Within |k|₁ ≤ 5 the smallest |a g + b| is at (2, −3).
    let best = [(1, -2), (2, -3), (1, -1), (1, -3), (2, -2)]
        .iter()
        .map(|&(a, b)| (a as f64 * g + b as f64).powi(2))
        .fold(f64::INFINITY, f64::min);
    assert!((m - best).abs() < 1e-15, "{} vs {} at {:?}", m, best, arg);
}
