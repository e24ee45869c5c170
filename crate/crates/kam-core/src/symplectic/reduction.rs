use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;

use super::lattice::{check_frequency, unimodular_completion, LatticeReduction};
use crate::error::{KamError, Result};
use crate::fourier_taylor::{FTSeries, Radii, SeriesSpace, Var, C64};
use crate::linalg;
use crate::small_divisors::{effective_diophantine_constant, DiophantineWitness};

/// `coefficient · I^powers` in the original actions (degree ≥ 3).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionTerm {
    pub powers: Vec<u32>,
    pub coefficient: f64,
}

/// `coefficient · cos(n·θ + phase) · I^powers` in the original angle-action variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleActionTerm {
    pub angle_modes: Vec<i64>,
    pub powers: Vec<u32>,
    pub coefficient: f64,
    pub phase: f64,
}

/// `coefficient · cos(k·q + j·x + phase) · (p, y)^powers` with `x` still an angle.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTerm {
    pub q_modes: Vec<i32>,
    pub x_modes: Vec<i32>,
    pub powers: Vec<u32>,
    pub coefficient: f64,
    pub phase: f64,
}

/// `H(θ, I) = ⟨ω₀, I⟩ + ½⟨A I, I⟩ + h(I) + f(θ, I)` on `T^m × B^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginalSystem {
    pub omega0: Vec<f64>,
    pub hessian: DMatrix<f64>,
    pub h_terms: Vec<ActionTerm>,
    pub f_terms: Vec<AngleActionTerm>,
}

/// Evidence that the reduced problem is admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Eigenvalues of `A − B C⁻¹ Bᵀ`.
    pub schur_eigenvalues: Vec<f64>,
    pub c_eigenvalues: Vec<f64>,
    pub hessian_det: f64,
    /// `K·ω₀`.
    pub k_omega: Vec<f64>,
    pub frequency_residual: f64,
    pub time_reversed: bool,
    pub gamma: f64,
    pub radius_factor: f64,
}

impl ReductionReport {
    /// Rows `(condition, passed, evidence)`.
    pub fn table(&self) -> Vec<(String, bool, String)> {
        let smin = self.schur_eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let cmax = self.c_eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        vec![
            ("Diophantine frequency".into(), self.gamma > 0.0, format!("gamma = {:.6e}", self.gamma)),
            (
                "Hessian and C non singular".into(),
                self.hessian_det != 0.0 && self.c_eigenvalues.iter().all(|&e| e != 0.0),
                format!("det = {:.6e}, eig(C) = {:?}", self.hessian_det, self.c_eigenvalues),
            ),
            (
                "Schur complement positive, C negative".into(),
                smin > 0.0 && cmax < 0.0,
                format!("eig(A - B C^-1 B^T) = {:?}, eig(C) = {:?}", self.schur_eigenvalues, self.c_eigenvalues),
            ),
        ]
    }
}

/// A problem in the parametrized model `⟨ω,p⟩ + ½pM₀p + ½|y|² + h₀ + f₀`.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub omega: Vec<f64>,
    pub m0: DMatrix<f64>,
    /// The normalized `Q₀` (always the identity).
    pub q0: DMatrix<f64>,
    /// `T` with `M_q ∂_x f₀ = T·M_q ∂_φ f₀`, the transpose of the Cholesky
    /// factor used to normalize `Q₀`.
    pub t: DMatrix<f64>,
    pub h0: FTSeries,
    pub f0: FTSeries,
    pub radii: Radii,
    /// Majorant mass dropped by the Taylor re-expansion.
    pub taylor_loss: f64,
    pub lattice: Option<LatticeReduction>,
    pub report: Option<ReductionReport>,
}

/// Linear change of variables from the model coordinates into the
/// coordinates the terms are written in.
struct Substitution {
    /// Columns: model `(p, y)`; rows: the action variables of the terms.
    actions: DMatrix<f64>,
    /// `θ_q = q + cq·x` (`d × l`).
    cq: DMatrix<f64>,
    /// `θ_x = φ + lx·x` (`l × l`).
    lx: DMatrix<f64>,
    sign: f64,
}

fn linear_series(space: &Arc<SeriesSpace>, radii: Radii, coef: &[f64]) -> FTSeries {
    let g = space.grading();
    let zeros_l = vec![0i32; g.l];
    let zeros_d = vec![0i32; g.d];
    let mut s = FTSeries::zero(space, radii);
    for (t, &c) in coef.iter().enumerate() {
        if c != 0.0 {
            let mut e = vec![0u8; g.n_taylor()];
            e[t] = 1;
            s.set(&zeros_l, &zeros_d, &e, C64::new(c, 0.0)).expect("degree one is inside the grading");
        }
    }
    s
}

/// `Π_i (row_i · (p, y))^{powers_i}`.
fn action_monomial(space: &Arc<SeriesSpace>, radii: Radii, actions: &DMatrix<f64>, powers: &[u32]) -> Result<FTSeries> {
    let g = space.grading();
    if powers.len() != actions.nrows() {
        return Err(KamError::InvalidArgument(format!(
            "{} action powers given, expected {}",
            powers.len(),
            actions.nrows()
        )));
    }
    let mut out = FTSeries::constant(space, radii, 1.0);
    for (i, &pw) in powers.iter().enumerate() {
        if pw == 0 {
            continue;
        }
        let mut coef = vec![0.0; g.n_taylor()];
        for c in 0..g.d + g.l {
            coef[g.l + c] = actions[(i, c)];
        }
        let lin = linear_series(space, radii, &coef);
        for _ in 0..pw {
            out = out.checked_mul(&lin)?;
        }
    }
    Ok(out)
}

/// `Σ_{n ≤ D} (i c·x)ⁿ/n!` and the majorant of the dropped tail.
fn exp_ix(space: &Arc<SeriesSpace>, radii: Radii, c: &[f64]) -> Result<(FTSeries, f64)> {
    let g = space.grading();
    let mut coef = vec![0.0; g.n_taylor()];
    coef[..g.l].copy_from_slice(c);
    let u = linear_series(space, radii, &coef).scale(C64::new(0.0, 1.0));
    let mut sum = FTSeries::constant(space, radii, 1.0);
    let mut term = sum.clone();
    for n in 1..=g.degree {
        term = term.checked_mul(&u)?.scale_re(1.0 / n as f64);
        sum = sum.checked_add(&term)?;
    }
    let a = c.iter().map(|v| v.abs()).sum::<f64>() * radii.s;
    let mut tail = 0.0;
    let mut t = 1.0;
    for n in 1..200u32 {
        t *= a / n as f64;
        if n > g.degree {
            tail += t;
            if t < 1e-300 {
                break;
            }
        }
    }
    Ok((sum.with_loss(0.0), tail))
}

/// `amp·cos(k·q + j·φ + c·x + phase)·poly`.
#[allow(clippy::too_many_arguments)]
fn cos_series(
    space: &Arc<SeriesSpace>,
    radii: Radii,
    kq: &[i32],
    jx: &[i32],
    cx: &[f64],
    amp: f64,
    phase: f64,
    poly: &FTSeries,
) -> Result<(FTSeries, f64)> {
    let g = space.grading();
    let zero = vec![0u8; g.n_taylor()];
    if space.key(jx, kq, &zero).is_none() {
        return Err(KamError::InvalidArgument(format!(
            "term with q-mode {:?} and φ-mode {:?} lies outside K_q = {}, K_phi = {}",
            kq, jx, g.k_q, g.k_phi
        )));
    }
    let mut base = FTSeries::zero(space, radii);
    base.set(jx, kq, &zero, C64::from_polar(0.5 * amp, phase))?;
    let (e, tail) = exp_ix(space, radii, cx)?;
    let half = base.checked_mul(&e)?.checked_mul(poly)?;
    let full = half.checked_add(&half.conj_reflect())?;
    let loss = full.trunc_loss() + amp.abs() * tail * poly.majorant();
    Ok((full.with_loss(0.0), loss))
}

fn model_space_check(space: &Arc<SeriesSpace>, d: usize, l: usize) -> Result<()> {
    let g = space.grading();
    if g.d != d || g.l != l {
        return Err(KamError::InvalidArgument(format!(
            "grading has (d, l) = ({}, {}), problem has ({}, {})",
            g.d, g.l, d, l
        )));
    }
    Ok(())
}

fn expand_terms(
    space: &Arc<SeriesSpace>,
    radii: Radii,
    sub: &Substitution,
    terms: &[(Vec<i32>, Vec<i32>, Vec<u32>, f64, f64)],
) -> Result<(FTSeries, f64)> {
    let mut acc = FTSeries::zero(space, radii);
    let mut loss = 0.0;
    for (kq, jx, powers, amp, phase) in terms {
        let poly = action_monomial(space, radii, &sub.actions, powers)?;
        loss += poly.trunc_loss() * amp.abs();
        let kqf = DMatrix::from_iterator(1, kq.len(), kq.iter().map(|&v| v as f64));
        let jxf = DMatrix::from_iterator(1, jx.len(), jx.iter().map(|&v| v as f64));
        let cx = &kqf * &sub.cq + &jxf * &sub.lx;
        let cx: Vec<f64> = cx.iter().cloned().collect();
        let (s, l) = cos_series(space, radii, kq, jx, &cx, sub.sign * amp, *phase, &poly.clone().with_loss(0.0))?;
        loss += l;
        acc = acc.checked_add(&s)?;
    }
    let dropped = acc.trunc_loss();
    Ok((acc.realify().with_loss(0.0), loss + dropped))
}

fn expand_actions(
    space: &Arc<SeriesSpace>,
    radii: Radii,
    sub: &Substitution,
    terms: &[(Vec<u32>, f64)],
) -> Result<(FTSeries, f64)> {
    let mut acc = FTSeries::zero(space, radii);
    for (powers, amp) in terms {
        let deg: u32 = powers.iter().sum();
        if deg < 3 {
            return Err(KamError::InvalidArgument(format!(
                "h term with powers {:?} has degree {} < 3",
                powers, deg
            )));
        }
        let poly = action_monomial(space, radii, &sub.actions, powers)?;
        acc = acc.axpy(sub.sign * amp, &poly);
    }
    let loss = acc.trunc_loss();
    Ok((acc.with_loss(0.0), loss))
}

/// Re-expands `f(q, x + φ, p, y)` with `x` a Taylor variable: every `e^{ij·x}`
/// becomes `e^{ij·φ}·Σ_{n≤D} (ij·x)ⁿ/n!`. Returns the series and the
/// majorant of the dropped Taylor tail.
pub fn shifted_parametrization(terms: &[ReducedTerm], space: &Arc<SeriesSpace>, radii: Radii) -> Result<(FTSeries, f64)> {
    let g = space.grading();
    let n = g.d + g.l;
    let sub = Substitution {
        actions: DMatrix::identity(n, n),
        cq: DMatrix::zeros(g.l, g.d),
        lx: DMatrix::identity(g.l, g.l),
        sign: 1.0,
    };
    expand_terms(space, radii, &sub, &reduced_tuples(terms, g.d, g.l)?)
}

fn reduced_tuples(terms: &[ReducedTerm], d: usize, l: usize) -> Result<Vec<(Vec<i32>, Vec<i32>, Vec<u32>, f64, f64)>> {
    terms
        .iter()
        .map(|t| {
            if t.q_modes.len() != d || t.x_modes.len() != l || t.powers.len() != d + l {
                return Err(KamError::InvalidArgument(format!(
                    "term {:?} does not match d = {}, l = {}",
                    t, d, l
                )));
            }
            Ok((t.q_modes.clone(), t.x_modes.clone(), t.powers.clone(), t.coefficient, t.phase))
        })
        .collect()
}

impl ReducedProblem {
    /// Builds the model from data already in reduced form, normalizing `Q₀`
    /// to the identity by a Cholesky scaling of `(x, y)`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_reduced(
        space: &Arc<SeriesSpace>,
        radii: Radii,
        omega: &[f64],
        m0: &DMatrix<f64>,
        q0: &DMatrix<f64>,
        h_terms: &[ActionTerm],
        f_terms: &[ReducedTerm],
    ) -> Result<Self> {
        let g = space.grading();
        let (d, l) = (g.d, g.l);
        model_space_check(space, omega.len(), q0.nrows())?;
        if m0.nrows() != d || m0.ncols() != d || q0.ncols() != l {
            return Err(KamError::InvalidArgument("M0 must be d×d and Q0 l×l".into()));
        }
        if linalg::asymmetry(m0) > 1e-12 * linalg::max_abs(m0).max(1.0) {
            return Err(KamError::InvalidArgument("M0 is not symmetric".into()));
        }
        let lchol = linalg::cholesky_lower(q0)
            .ok_or_else(|| KamError::ConditionIII(format!("Q0 is not positive definite: eig = {:?}", eig(q0))))?;
        let linv = linalg::inverse(&lchol)?;
        let mut actions = DMatrix::zeros(d + l, d + l);
        for i in 0..d {
            actions[(i, i)] = 1.0;
        }
        let lit = linv.transpose();
        for i in 0..l {
            for j in 0..l {
                actions[(d + i, d + j)] = lit[(i, j)];
            }
        }
        let sub = Substitution { actions, cq: DMatrix::zeros(d, l), lx: lchol.clone(), sign: 1.0 };
        let (f0, lf) = expand_terms(space, radii, &sub, &reduced_tuples(f_terms, d, l)?)?;
        let ht: Vec<(Vec<u32>, f64)> = h_terms
            .iter()
            .map(|t| {
                if t.powers.len() != d + l {
                    Err(KamError::InvalidArgument(format!("h term {:?} needs d + l powers", t)))
                } else {
                    Ok((t.powers.clone(), t.coefficient))
                }
            })
            .collect::<Result<_>>()?;
        let (h0, lh) = expand_actions(space, radii, &sub, &ht)?;
        Ok(ReducedProblem {
            omega: omega.to_vec(),
            m0: linalg::symmetrize(m0),
            q0: DMatrix::identity(l, l),
            t: lchol.transpose(),
            h0,
            f0,
            radii,
            taylor_loss: lf + lh,
            lattice: None,
            report: None,
        })
    }
}

fn eig(m: &DMatrix<f64>) -> Vec<f64> {
    linalg::sym_eigenvalues(m).iter().cloned().collect()
}

/// Lattice reduction, symplectic shear, time orientation and `Q₀`
/// normalization of an `m`-dimensional system with `l` resonances.
///
/// Accepts `A − BC⁻¹Bᵀ > 0`, `C < 0`; the Hamiltonian is then negated so that
/// `M₀ = −(A − BC⁻¹Bᵀ)` and `Q₀ = −C` before normalizing `Q₀` to `I`.
pub fn reduce_coordinates(
    sys: &OriginalSystem,
    resonances: &[Vec<i64>],
    space: &Arc<SeriesSpace>,
    radii: Radii,
    tau: f64,
) -> Result<ReducedProblem> {
    let m = sys.omega0.len();
    if sys.hessian.nrows() != m || sys.hessian.ncols() != m {
        return Err(KamError::InvalidArgument(format!("hessian must be {}×{}", m, m)));
    }
    if linalg::asymmetry(&sys.hessian) > 1e-12 * linalg::max_abs(&sys.hessian).max(1.0) {
        return Err(KamError::InvalidArgument("hessian is not symmetric".into()));
    }
    let lattice = unimodular_completion(resonances, m)?;
    let (d, l) = (lattice.d, lattice.l);
    model_space_check(space, d, l)?;
    let k_omega = check_frequency(&lattice, &sys.omega0)?;
    let frequency_residual = k_omega[d..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let hess = linalg::symmetrize(&sys.hessian);
    let hessian_det = hess.clone().lu().determinant();
    let scale = linalg::spectral_norm(&hess).max(f64::MIN_POSITIVE);
    if !(hessian_det.abs() > 1e-12 * scale.powi(m as i32)) {
        return Err(KamError::ConditionII(format!("hessian is singular: det = {:e}, eig = {:?}", hessian_det, eig(&hess))));
    }
    let (a, b, c) = lattice.blocks(&hess);
    let c_eig = eig(&c);
    let cinv = linalg::inverse(&c).map_err(|_| KamError::ConditionII(format!("C is singular: eig = {:?}", c_eig)))?;
    let schur = linalg::symmetrize(&(&a - &b * &cinv * b.transpose()));
    let s_eig = eig(&schur);
    let smin = s_eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let cmax = c_eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(smin > 0.0 && cmax < 0.0) {
        return Err(KamError::ConditionIII(format!(
            "need A - B C^-1 B^T positive and C negative definite; eig(A - B C^-1 B^T) = {:?}, eig(C) = {:?}",
            s_eig, c_eig
        )));
    }
    let omega: Vec<f64> = k_omega[..d].iter().map(|v| -v).collect();
    let witness: DiophantineWitness = effective_diophantine_constant(&omega, tau, space.grading().k_q)?;
    if let Some(k) = &witness.resonance {
        return Err(KamError::ConditionI(format!("reduced frequency {:?} is resonant at k = {:?}", omega, k)));
    }
    let q0raw = -&c;
    let lchol = linalg::cholesky_lower(&q0raw)
        .ok_or_else(|| KamError::ConditionIII(format!("-C is not positive definite: eig(C) = {:?}", c_eig)))?;
    let linv = linalg::inverse(&lchol)?;
    // (p', y') = P·(p, y), P = [[I, 0], [−C⁻¹Bᵀ, L^{-T}]]; I = Kᵀ(p', y').
    let mut pmat = DMatrix::zeros(m, m);
    for i in 0..d {
        pmat[(i, i)] = 1.0;
    }
    let cb = &cinv * b.transpose();
    let lit = linv.transpose();
    for i in 0..l {
        for j in 0..d {
            pmat[(d + i, j)] = -cb[(i, j)];
        }
        for j in 0..l {
            pmat[(d + i, d + j)] = lit[(i, j)];
        }
    }
    let actions = lattice.k_f64().transpose() * pmat;
    // θ_q = q + B C⁻¹ L x, θ_x = φ + L x.
    let sub = Substitution { actions, cq: &b * &cinv * &lchol, lx: lchol.clone(), sign: -1.0 };
    let mut f_tuples = Vec::with_capacity(sys.f_terms.len());
    for t in &sys.f_terms {
        if t.angle_modes.len() != m || t.powers.len() != m {
            return Err(KamError::InvalidArgument(format!("f term {:?} does not match m = {}", t, m)));
        }
        let u = lattice.transform_mode(&t.angle_modes)?;
        let to32 = |v: &[i64]| -> Result<Vec<i32>> {
            v.iter()
                .map(|&x| i32::try_from(x).map_err(|_| KamError::Lattice(format!("mode entry {} too large", x))))
                .collect()
        };
        f_tuples.push((to32(&u[..d])?, to32(&u[d..])?, t.powers.clone(), t.coefficient, t.phase));
    }
    let knorm = linalg::spectral_norm(&lattice.k_f64());
    let kappa = (1.0 / knorm).min(knorm);
    let kappa2 = 0.5f64.min(1.0 / (1.0 + linalg::spectral_norm(&cb)));
    let lscale = linalg::spectral_norm(&lchol).max(linalg::spectral_norm(&linv)).max(1.0);
    let factor = kappa * kappa2;
    let new_radii = Radii::new(radii.r * factor, radii.s * factor / lscale);
    let (f0, lf) = expand_terms(space, new_radii, &sub, &f_tuples)?;
    let h_tuples: Vec<(Vec<u32>, f64)> = sys
        .h_terms
        .iter()
        .map(|t| {
            if t.powers.len() != m {
                Err(KamError::InvalidArgument(format!("h term {:?} does not match m = {}", t, m)))
            } else {
                Ok((t.powers.clone(), t.coefficient))
            }
        })
        .collect::<Result<_>>()?;
    let (h0, lh) = expand_actions(space, new_radii, &sub, &h_tuples)?;
    let report = ReductionReport {
        a,
        b,
        c,
        schur_eigenvalues: s_eig,
        c_eigenvalues: c_eig,
        hessian_det,
        k_omega,
        frequency_residual,
        time_reversed: true,
        gamma: witness.gamma,
        radius_factor: factor,
    };
    Ok(ReducedProblem {
        omega,
        m0: -schur,
        q0: DMatrix::identity(l, l),
        t: lchol.transpose(),
        h0,
        f0,
        radii: new_radii,
        taylor_loss: lf + lh,
        lattice: Some(lattice),
        report: Some(report),
    })
}

/// Majorant of `M_q ∂_x f − T·M_q ∂_φ f` below the top Taylor degree
/// (`∂_x` of a degree-`D` truncation is only complete up to degree `D − 1`).
pub fn equal_derivatives_gap(f: &FTSeries, t: &DMatrix<f64>) -> f64 {
    let g = f.grading();
    let mut worst = 0.0f64;
    for i in 0..g.l {
        let mut gap = f.derivative(Var::X(i)).average_q();
        for j in 0..g.l {
            let c = t[(i, j)];
            if c != 0.0 {
                gap = gap.axpy(-c, &f.derivative(Var::Phi(j)).average_q());
            }
        }
        worst = worst.max(gap.truncate_degree(g.degree - 1).majorant());
    }
    worst
}
