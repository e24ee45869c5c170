//! The counter-term iteration: cohomological equation, KAM step, driver,
//! and the diagnostics that locate the invariant torus.

mod cohomology;
mod diagnostics;
mod schedule;
mod step;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;

use crate::error::{KamError, Result};
use crate::fourier_taylor::{FTSeries, PhiGrid, Radii, SeriesSpace};
use crate::linalg;
use crate::normal_form::{assemble_hamiltonian, nu_max_profile, NormalFormTuple};
use crate::small_divisors::{effective_diophantine_constant, DiophantineWitness};
use crate::symplectic::{equal_derivatives_gap, ReducedProblem, SymplecticMapSeries};

pub use cohomology::{normal_part, solve_slice, NormalPart, SliceData, SliceSolution, MAX_CONDITION};
pub use diagnostics::{
    check_alpha_gradient, check_beta_relation, compute_zeta, conjugacy_residual, embedding_distance, extract_torus,
    find_vanishing_point, lr_matrices, solve_torus, verify_invariance, zeta_derivatives, TorusResult,
};
pub use schedule::{build_schedule, Rung, Schedule};
pub use step::{kam_step, StepOutput};

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}

/// Tunables of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub tau: f64,
    pub lambda_cfg: f64,
    pub kappa: f64,
    pub n_max: usize,
    /// Stop once `‖f_n‖₂ ≤ target_tol`.
    pub target_tol: f64,
    pub order_cap: usize,
    /// Number of slices on which the conjugacy identity is re-checked.
    pub conjugacy_points: usize,
    /// Record the gradient and `β` relations at every step.
    pub diagnostics: bool,
    /// Accepted `M_q ∂_x f₀ − T M_q ∂_φ f₀` gap.
    pub equal_derivatives_tol: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            tau: 0.01,
            lambda_cfg: 0.1,
            kappa: 0.0,
            n_max: 8,
            target_tol: 1e-12,
            order_cap: crate::symplectic::ORDER_CAP,
            conjugacy_points: 3,
            diagnostics: true,
            equal_derivatives_tol: 1e-10,
        }
    }
}

/// `N₀ + f₀` in the model coordinates together with the matrix `T`.
#[derive(Debug, Clone)]
pub struct KamProblem {
    pub n0: NormalFormTuple,
    pub f0: FTSeries,
    pub t: DMatrix<f64>,
}

impl KamProblem {
    pub fn new(n0: NormalFormTuple, f0: FTSeries, t: DMatrix<f64>) -> Result<Self> {
        if n0.space().grading() != f0.grading() {
            return Err(KamError::GradingMismatch);
        }
        let l = f0.grading().l;
        if t.shape() != (l, l) {
            return Err(KamError::InvalidArgument(format!("T must be {}x{}", l, l)));
        }
        Ok(KamProblem { n0, f0, t })
    }

    pub fn from_reduced(rp: &ReducedProblem) -> Result<Self> {
        let n0 = NormalFormTuple::unperturbed(rp.f0.space(), rp.radii, &rp.omega, &rp.m0, &rp.q0, rp.h0.clone())?;
        Self::new(n0, rp.f0.clone(), rp.t.clone())
    }

    pub fn omega(&self) -> &[f64] {
        &self.n0.w
    }

    pub fn radii(&self) -> Radii {
        self.n0.radii()
    }

    /// `H₀ = T(N₀) + f₀`.
    pub fn hamiltonian(&self) -> Result<FTSeries> {
        assemble_hamiltonian(&self.n0).checked_add(&self.f0)
    }
}

/// `(N_n, α_n, f_n, Φⁿ)` on the radii `(r_n, s_n)`.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub n: usize,
    pub nf: NormalFormTuple,
    pub alpha: Vec<FTSeries>,
    pub f: FTSeries,
    pub phi: SymplecticMapSeries,
    pub radii: Radii,
}

impl IterationState {
    pub fn initial(problem: &KamProblem) -> Self {
        let sp = problem.f0.space().clone();
        let radii = problem.radii();
        let l = sp.grading().l;
        IterationState {
            n: 0,
            nf: problem.n0.clone(),
            alpha: (0..l).map(|_| FTSeries::zero(&sp, radii)).collect(),
            f: problem.f0.clone(),
            phi: SymplecticMapSeries::identity(&sp, radii),
            radii,
        }
    }

    /// The tracker `φ_x = Φⁿ_x`.
    pub fn phi_x(&self) -> &[FTSeries] {
        &self.phi.x
    }

    /// `‖f_n‖₂` on the current radii.
    pub fn f_norm(&self) -> f64 {
        c2(&self.f, self.radii)
    }
}

fn c2(s: &FTSeries, r: Radii) -> f64 {
    s.ck_norm_estimate(2, 0, r.r, r.s)
}

/// Measured quantities of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Index of the state the step starts from.
    pub n: usize,
    pub r: f64,
    pub s: f64,
    pub sigma: f64,
    pub delta: f64,
    pub delta_plus: f64,
    /// `ε_n` of the schedule.
    pub eps_target: f64,
    /// `‖f_n‖₂` before the step.
    pub eps_measured: f64,
    /// `‖f_{n+1}‖₂` after the step.
    pub f_norm: f64,
    /// `‖α_{n+1}‖₂`.
    pub alpha_norm: f64,
    /// `‖α_{n+1} − α_n‖₂`.
    pub alpha_step: f64,
    /// `N`-norm of the normal-form increment.
    pub nf_step: f64,
    pub generator_size: f64,
    pub conjugacy_residual: f64,
    /// Reported truncation, projection and Lie remainders up to this step.
    pub loss_budget: f64,
    pub cohomological_residual: f64,
    pub psi_identically_one: bool,
    pub max_condition: f64,
    /// `‖f_{n+1}‖₂ ≤ max(ε_{n+1}, target_tol)`.
    pub target_met: bool,
    pub alpha_gradient_gap: Option<f64>,
    pub beta_relation_gap: Option<f64>,
    /// `max_φ |M_q φ_x(φ, 0)|` after the step.
    pub mean_phi_x: f64,
}

/// Result of `iterate`: the last state, the per-step records, and why the
/// iteration stopped.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub state: IterationState,
    /// The state before the last step (`Φ^{n−1}` enters the diagnostics).
    pub previous: Option<IterationState>,
    pub history: Vec<StepRecord>,
    pub schedule: Schedule,
    pub initial_f_norm: f64,
    pub converged: bool,
    pub failure: Option<String>,
}

/// Shared per-run data.
pub struct Context {
    pub space: Arc<SeriesSpace>,
    pub slice: Arc<SeriesSpace>,
    pub grid: PhiGrid,
    pub witness: DiophantineWitness,
    pub k_q: u32,
    pub cfg: EngineConfig,
}

impl Context {
    pub fn new(problem: &KamProblem, cfg: &EngineConfig) -> Result<Self> {
        let space = problem.f0.space().clone();
        let gr = space.grading();
        let witness = effective_diophantine_constant(problem.omega(), cfg.tau, gr.k_q)?;
        if let Some(r) = &witness.resonance {
            return Err(KamError::IterationPrecondition(format!("omega is resonant at q-mode {:?}", r)));
        }
        Ok(Context {
            slice: SeriesSpace::new(gr.slice())?,
            grid: PhiGrid::for_order(gr.l, gr.k_phi),
            k_q: gr.k_q,
            space,
            witness,
            cfg: cfg.clone(),
        })
    }
}

fn mean_phi_x(state: &IterationState, grid: &PhiGrid, slice: &Arc<SeriesSpace>) -> f64 {
    let mut worst = 0.0f64;
    for phi in grid.iter() {
        for x in &state.phi.x {
            worst = worst.max(x.at_phi(phi, slice).degree_part(0).constant_term().norm());
        }
    }
    worst
}

/// Checks the standing assumptions on `(N₀, f₀)`: `Q₀ = I`, `β₀ = 0`,
/// `Γ₀ = 0`, `M₀` invertible, and the equal-derivatives property of `f₀`.
pub fn check_problem(problem: &KamProblem, cfg: &EngineConfig) -> Result<()> {
    let n0 = &problem.n0;
    let gr = problem.f0.grading();
    let phi0 = alloc::vec![0.0; gr.l];
    let q = crate::normal_form::eval_phi_matrix(&n0.q, &phi0)?;
    if linalg::max_abs(&(q - DMatrix::identity(gr.l, gr.l))) > 1e-12 || n0.q.data.iter().any(|s| s.nnz() > 1) {
        return Err(KamError::IterationPrecondition("Q0 must be the identity".into()));
    }
    if n0.beta.max_majorant() > 0.0 || n0.gamma.max_majorant() > 0.0 || !n0.g.is_zero() {
        return Err(KamError::IterationPrecondition("N0 must have beta = 0, Gamma = 0 and g = 0".into()));
    }
    let m = crate::normal_form::eval_phi_matrix(&n0.m, &phi0)?;
    if linalg::inverse(&m).is_err() {
        return Err(KamError::IterationPrecondition("M0 is singular".into()));
    }
    let gap = equal_derivatives_gap(&problem.f0, &problem.t);
    if gap > cfg.equal_derivatives_tol {
        return Err(KamError::IterationPrecondition(format!(
            "f0 violates M_q d_x f0 = T M_q d_phi f0 by {:e}",
            gap
        )));
    }
    Ok(())
}

fn admissible(psi: &[f64]) -> Vec<bool> {
    psi.iter().map(|&v| v >= 1.0 - 1e-12).collect()
}

/// Runs `kam_step` until `‖f_n‖₂ ≤ target_tol`, the schedule runs out, or
/// `n_max` steps were taken.
///
/// Precondition failures are errors. A failing step, or a schedule without a
/// single admissible rung, ends the iteration and is reported in `failure`
/// with the history so far.
pub fn iterate(problem: &KamProblem, cfg: &EngineConfig) -> Result<IterationOutcome> {
    check_problem(problem, cfg)?;
    let ctx = Context::new(problem, cfg)?;
    let radii = problem.radii();
    let mut state = IterationState::initial(problem);
    let eps0 = state.f_norm();
    let l = ctx.space.grading().l;
    let schedule = if eps0 > 0.0 {
        build_schedule(radii.r, radii.s, eps0, l, cfg.tau, cfg.lambda_cfg, cfg.kappa, cfg.n_max)?
    } else {
        Schedule { rungs: Vec::new(), tau: cfg.tau, lambda_cfg: cfg.lambda_cfg, kappa: cfg.kappa, stop: None }
    };
    let mut outcome = IterationOutcome {
        state: state.clone(),
        previous: None,
        history: Vec::new(),
        schedule: schedule.clone(),
        initial_f_norm: eps0,
        converged: eps0 <= cfg.target_tol,
        failure: None,
    };
    if outcome.converged {
        return Ok(outcome);
    }
    if schedule.rungs.is_empty() {
        outcome.failure = Some(format!(
            "no admissible step for ||f0|| = {:e}: {}",
            eps0,
            schedule.stop.clone().unwrap_or_default()
        ));
        return Ok(outcome);
    }
    let h0 = problem.hamiltonian()?;
    let points: Vec<usize> = (0..cfg.conjugacy_points.min(ctx.grid.len()))
        .map(|k| k * ctx.grid.len() / cfg.conjugacy_points.max(1))
        .collect();
    let mut budget = 0.0;
    for (idx, rung) in schedule.rungs.iter().enumerate() {
        if idx >= cfg.n_max {
            break;
        }
        let eps_measured = state.f_norm();
        if eps_measured > rung.eps * (1.0 + 1e-9) {
            outcome.failure = Some(format!(
                "step {}: ||f|| = {:e} exceeds eps_{} = {:e}",
                rung.n, eps_measured, rung.n, rung.eps
            ));
            break;
        }
        let out = match kam_step(&state, rung, &ctx) {
            Ok(o) => o,
            Err(e) => {
                outcome.failure = Some(format!("step {}: {}", rung.n, e));
                break;
            }
        };
        let next = out.state;
        let f_norm = next.f_norm();
        budget += out.lie_remainder + out.projection_loss + next.f.trunc_loss();
        let conj = if points.is_empty() { 0.0 } else { conjugacy_residual(&h0, &next, &ctx.grid, &points).unwrap_or(f64::INFINITY) };
        let adm = admissible(&out.psi);
        let (grad_gap, beta_gap) = if cfg.diagnostics {
            let zeta = compute_zeta(&h0, &state.phi, problem.omega(), &ctx.grid);
            let grad = zeta.as_ref().ok().and_then(|z| check_alpha_gradient(&next.alpha, z, &problem.t, &ctx.grid, &adm).ok());
            let beta = check_beta_relation(&next.nf, &next.alpha, &state.phi, &problem.t, &ctx.grid, &adm).ok();
            (grad, beta)
        } else {
            (None, None)
        };
        let eps_next = rung.eps.powf(1.5);
        let target_met = f_norm <= eps_next.max(cfg.target_tol);
        let nr = next.radii;
        outcome.history.push(StepRecord {
            n: rung.n,
            r: rung.r,
            s: rung.s,
            sigma: rung.sigma,
            delta: rung.delta,
            delta_plus: rung.delta_plus,
            eps_target: rung.eps,
            eps_measured,
            f_norm,
            alpha_norm: next.alpha.iter().map(|a| c2(a, nr)).fold(0.0, f64::max),
            alpha_step: out.alpha_step.iter().map(|a| c2(a, nr)).fold(0.0, f64::max),
            nf_step: out.nbar.norm(),
            generator_size: c2(&out.generator, nr) + out.v.iter().map(|v| c2(v, nr)).fold(0.0, f64::max),
            conjugacy_residual: conj,
            loss_budget: budget,
            cohomological_residual: out.cohomological_residual,
            psi_identically_one: out.psi.iter().all(|&v| v == 1.0),
            max_condition: out.max_condition,
            target_met,
            alpha_gradient_gap: grad_gap,
            beta_relation_gap: beta_gap,
            mean_phi_x: mean_phi_x(&next, &ctx.grid, &ctx.slice),
        });
        outcome.previous = Some(core::mem::replace(&mut state, next));
        outcome.state = state.clone();
        if !target_met {
            outcome.failure = Some(format!(
                "step {}: ||f_(n+1)|| = {:e} above eps_(n+1) = {:e}",
                rung.n, f_norm, eps_next
            ));
            break;
        }
        if f_norm <= cfg.target_tol {
            outcome.converged = true;
            break;
        }
    }
    if !outcome.converged && outcome.failure.is_none() {
        outcome.failure = Some(match &schedule.stop {
            Some(s) if schedule.rungs.len() <= cfg.n_max => format!("schedule ended: {}", s),
            _ => "n_max reached before target_tol".to_string(),
        });
    }
    Ok(outcome)
}

/// The ν_max profile of `β_n` on the engine grid.
pub fn beta_profile(state: &IterationState) -> Result<Vec<(Vec<f64>, f64)>> {
    let gr = state.f.grading();
    nu_max_profile(&state.nf.beta, &PhiGrid::for_order(gr.l, gr.k_phi))
}

