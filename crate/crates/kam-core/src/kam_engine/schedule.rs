use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{KamError, Result};

/// Parameters of one step of the iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rung {
    pub n: usize,
    pub sigma: f64,
    pub eps: f64,
    pub delta: f64,
    pub delta_plus: f64,
    pub r: f64,
    pub s: f64,
}

/// The sequences `σ_n`, `ε_n`, `δ_n`, `δ₊_n`, `r_n`, `s_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub rungs: Vec<Rung>,
    pub tau: f64,
    pub lambda_cfg: f64,
    pub kappa: f64,
    /// Why the schedule is shorter than requested, if it is.
    pub stop: Option<String>,
}

/// `σ_n = min(r₀,s₀)/(40·2ⁿ)`, `ε_{n+1} = ε_n^{3/2}`,
/// `δ_n = (σ_n/|log ε_n|)^{4τ}`, `δ₊_n = ⅛(σ_n/(4|log ε_n|))^{2τ}`,
/// `r_{n+1} = r_n − 10σ_n`, `s_{n+1} = s_n − σ_n`.
///
/// A rung is kept while `ε_n^{1/2}|log ε_n|^{4(l+2)τ} < λσ_n^κ`,
/// `δ₊_n < δ_n` and `δ_n ≤ 8δ_{n−1}`; the first failure ends the schedule.
#[allow(clippy::too_many_arguments)]
pub fn build_schedule(
    r0: f64,
    s0: f64,
    eps0: f64,
    l: usize,
    tau: f64,
    lambda_cfg: f64,
    kappa: f64,
    n_max: usize,
) -> Result<Schedule> {
    if !(r0 > 0.0 && s0 > 0.0) {
        return Err(KamError::InvalidArgument(format!("radii must be positive (r0 = {}, s0 = {})", r0, s0)));
    }
    if !(eps0 > 0.0) || !eps0.is_finite() {
        return Err(KamError::InvalidArgument(format!("eps0 must be positive and finite, got {}", eps0)));
    }
    if !(tau > 0.0) || !(lambda_cfg > 0.0) || kappa < 0.0 {
        return Err(KamError::InvalidArgument("tau, lambda must be positive and kappa nonnegative".into()));
    }
    let mut rungs: Vec<Rung> = Vec::new();
    let mut stop = None;
    let (mut eps, mut r, mut s) = (eps0, r0, s0);
    let base = r0.min(s0) / 40.0;
    for n in 0..=n_max {
        let sigma = base / 2f64.powi(n as i32);
        if !(eps < 1.0) {
            stop = Some(format!("eps_{} = {:e} is not below 1", n, eps));
            break;
        }
        let lg = -eps.ln();
        let lhs = eps.sqrt() * lg.powf(4.0 * (l as f64 + 2.0) * tau);
        let rhs = lambda_cfg * sigma.powf(kappa);
        if !(lhs < rhs) {
            stop = Some(format!("eps_{}: eps^1/2 |log eps|^(4(l+2)tau) = {:e} is not below lambda sigma^kappa = {:e}", n, lhs, rhs));
            break;
        }
        let delta = (sigma / lg).powf(4.0 * tau);
        let delta_plus = 0.125 * (sigma / (4.0 * lg)).powf(2.0 * tau);
        if !(delta_plus < delta) {
            stop = Some(format!("delta_plus_{} = {:e} is not below delta_{} = {:e}", n, delta_plus, n, delta));
            break;
        }
        if let Some(prev) = rungs.last() {
            if delta > 8.0 * prev.delta {
                stop = Some(format!("delta_{} = {:e} exceeds 8 delta_{}", n, delta, n - 1));
                break;
            }
        }
        rungs.push(Rung { n, sigma, eps, delta, delta_plus, r, s });
        r -= 10.0 * sigma;
        s -= sigma;
        eps = eps.powf(1.5);
    }
    Ok(Schedule { rungs, tau, lambda_cfg, kappa, stop })
}

impl Schedule {
    /// Radii after the last rung.
    pub fn final_radii(&self) -> Option<(f64, f64)> {
        self.rungs.last().map(|g| (g.r - 10.0 * g.sigma, g.s - g.sigma))
    }
}
