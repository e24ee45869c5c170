use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{par_map, IterationState};
use num_traits::Float;

use crate::error::{KamError, Result};
use crate::fourier_taylor::{project_phi, FTSeries, PhiGrid, Radii, SeriesSpace, Var};
use crate::linalg;
use crate::normal_form::{eval_phi, eval_phi_matrix, NormalFormTuple};
use crate::symplectic::{compose_series, SymplecticMapSeries};

fn mean(s: &FTSeries) -> f64 {
    s.constant_term().re
}

/// The map restricted to one slice, components in the order `q, x, p, y`.
fn slice_map(map: &SymplecticMapSeries, phi: &[f64], slice: &Arc<SeriesSpace>) -> SymplecticMapSeries {
    let at = |v: &Vec<FTSeries>| v.iter().map(|s| s.at_phi(phi, slice)).collect::<Vec<_>>();
    SymplecticMapSeries { q: at(&map.q), x: at(&map.x), p: at(&map.p), y: at(&map.y), remainder: map.remainder }
}

fn degree_zero(map: &SymplecticMapSeries) -> SymplecticMapSeries {
    let z = |v: &Vec<FTSeries>| v.iter().map(|s| s.degree_part(0)).collect::<Vec<_>>();
    SymplecticMapSeries { q: z(&map.q), x: z(&map.x), p: z(&map.p), y: z(&map.y), remainder: map.remainder }
}

fn zeta_slice(h0: &FTSeries, map: &SymplecticMapSeries, omega: &[f64]) -> Result<f64> {
    let m0 = degree_zero(map);
    let comp = compose_series(h0, &m0)?;
    let mut z = mean(&comp.degree_part(0));
    for (i, p) in m0.p.iter().enumerate() {
        z -= omega[i] * mean(p);
        z -= mean(&p.checked_mul(&m0.q[i].partial_omega(omega))?);
    }
    for (y, x) in m0.y.iter().zip(&m0.x) {
        z -= mean(&y.checked_mul(&x.partial_omega(omega))?);
    }
    Ok(z)
}

/// `ζ(φ) = M_q[(H₀ − ⟨ω,p⟩)∘Φ − ⟨Φ_p, ∂_ωΔ_q⟩ − ⟨Φ_y, ∂_ωΦ_x⟩](φ, 0)`
/// where `Φ_q = q + Δ_q`, sampled on `grid` and returned as a φ-series.
pub fn compute_zeta(h0: &FTSeries, map: &SymplecticMapSeries, omega: &[f64], grid: &PhiGrid) -> Result<FTSeries> {
    let space = h0.space().clone();
    let slice = SeriesSpace::new(space.grading().slice())?;
    let radii = h0.radii().min(map.radii());
    let vals = par_map(grid.len(), |i| {
        let phi = grid.point(i);
        zeta_slice(&h0.at_phi(phi, &slice), &slice_map(map, phi, &slice), omega)
    })?;
    let slices: Vec<FTSeries> = vals.iter().map(|&v| FTSeries::constant(&slice, radii, v)).collect();
    let (z, _) = project_phi(grid, &slices, &space, radii)?;
    Ok(z.prune((1e-14 * z.max_abs_coeff()).max(crate::fourier_taylor::PRUNE_FLOOR)))
}

fn phi_zeros(s: &FTSeries) -> (Vec<f64>, Vec<f64>) {
    let g = s.grading();
    (vec![0.0; g.d], vec![0.0; g.l])
}

/// `∇ζ(φ)` and `∇²ζ(φ)`.
pub fn zeta_derivatives(zeta: &FTSeries, phi: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let l = phi.len();
    let (zd, zl) = phi_zeros(zeta);
    let mut grad = DVector::zeros(l);
    let mut hess = DMatrix::zeros(l, l);
    for a in 0..l {
        let da = zeta.derivative(Var::Phi(a));
        grad[a] = da.evaluate(phi, &zd, &zl, &zd, &zl)?;
        for b in 0..l {
            hess[(a, b)] = da.derivative(Var::Phi(b)).evaluate(phi, &zd, &zl, &zd, &zl)?;
        }
    }
    Ok((grad, hess))
}

/// `max(|α − T∇ζ|, |Dα − T∇²ζ|)` over the grid points flagged admissible.
pub fn check_alpha_gradient(
    alpha: &[FTSeries],
    zeta: &FTSeries,
    t: &DMatrix<f64>,
    grid: &PhiGrid,
    admissible: &[bool],
) -> Result<f64> {
    let l = alpha.len();
    let mut worst = 0.0f64;
    for (i, phi) in grid.iter().enumerate() {
        if !admissible.get(i).copied().unwrap_or(false) {
            continue;
        }
        let (g, h) = zeta_derivatives(zeta, phi)?;
        let tg = t * g;
        let th = t * h;
        for a in 0..l {
            worst = worst.max((eval_phi(&alpha[a], phi)? - tg[a]).abs());
            for b in 0..l {
                let d = eval_phi(&alpha[a].derivative(Var::Phi(b)), phi)?;
                worst = worst.max((d - th[(a, b)]).abs());
            }
        }
    }
    Ok(worst)
}

/// `(L, R)` at `φ` for the map `Φ`:
/// `L = M_q(∂_xΦ_x)ᵀ − ΓM⁻¹ M_q ∂_pΦ_x` and `R = −(M_q[(∂_yΦ)ᵀ J W])⁻¹`
/// with `W = (D_φΦ_q, I + D_φΦ_x, D_φΦ_p, D_φΦ_y)`, all at `z = 0`.
pub fn lr_matrices(
    map: &SymplecticMapSeries,
    gamma: &DMatrix<f64>,
    m: &DMatrix<f64>,
    phi: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let space = map.space().clone();
    let g = space.grading();
    let (d, l) = (g.d, g.l);
    let slice = SeriesSpace::new(g.slice())?;
    let comps: Vec<&FTSeries> = map.q.iter().chain(&map.x).chain(&map.p).chain(&map.y).collect();
    let at0 = |s: &FTSeries| s.at_phi(phi, &slice).degree_part(0);
    // ∂_{y_t} of each component, and W columns
    let dy: Vec<Vec<FTSeries>> = comps
        .iter()
        .map(|c| (0..l).map(|t| at0(&c.derivative(Var::Y(t)))).collect())
        .collect();
    let mut w: Vec<Vec<FTSeries>> = comps
        .iter()
        .map(|c| (0..l).map(|a| at0(&c.derivative(Var::Phi(a)))).collect())
        .collect();
    for t in 0..l {
        let one = FTSeries::constant(&slice, map.radii(), 1.0);
        w[d + t][t] = w[d + t][t].checked_add(&one)?;
    }
    let m2 = d + l;
    let mut prod = DMatrix::zeros(l, l);
    for t in 0..l {
        for a in 0..l {
            let mut acc = 0.0;
            for c in 0..2 * m2 {
                let (partner, sign) = if c < m2 { (c + m2, 1.0) } else { (c - m2, -1.0) };
                acc += sign * mean(&dy[c][t].checked_mul(&w[partner][a])?);
            }
            prod[(t, a)] = acc;
        }
    }
    let r = -linalg::inverse(&prod)?;
    let mut lmat = DMatrix::zeros(l, l);
    for s in 0..l {
        for t in 0..l {
            lmat[(s, t)] = mean(&at0(&map.x[t].derivative(Var::X(s))));
        }
    }
    let mut dp = DMatrix::zeros(d, l);
    for i in 0..d {
        for t in 0..l {
            dp[(i, t)] = mean(&at0(&map.x[t].derivative(Var::P(i))));
        }
    }
    let minv = linalg::inverse(m)?;
    lmat -= gamma * minv * dp;
    Ok((lmat, r))
}

/// `max |β − ΓM⁻¹Γᵀ − L·Dα·R·Tᵀ|` over the admissible grid points.
pub fn check_beta_relation(
    nf: &NormalFormTuple,
    alpha: &[FTSeries],
    map: &SymplecticMapSeries,
    t: &DMatrix<f64>,
    grid: &PhiGrid,
    admissible: &[bool],
) -> Result<f64> {
    let l = alpha.len();
    let mut worst = 0.0f64;
    for (i, phi) in grid.iter().enumerate() {
        if !admissible.get(i).copied().unwrap_or(false) {
            continue;
        }
        let beta = eval_phi_matrix(&nf.beta, phi)?;
        let gamma = eval_phi_matrix(&nf.gamma, phi)?;
        let m = eval_phi_matrix(&nf.m, phi)?;
        let (lm, rm) = lr_matrices(map, &gamma, &m, phi)?;
        let mut dalpha = DMatrix::zeros(l, l);
        for a in 0..l {
            for b in 0..l {
                dalpha[(a, b)] = eval_phi(&alpha[a].derivative(Var::Phi(b)), phi)?;
            }
        }
        let res = beta - &gamma * linalg::inverse(&m)? * gamma.transpose() - lm * dalpha * rm * t.transpose();
        worst = worst.max(linalg::max_abs(&res));
    }
    Ok(worst)
}

/// Majorant of `(H₀ − ⟨α, x⟩)∘Φ − (T(N) + f)` on the slices `points`.
pub fn conjugacy_residual(h0: &FTSeries, state: &IterationState, grid: &PhiGrid, points: &[usize]) -> Result<f64> {
    let space = state.f.space().clone();
    let slice = SeriesSpace::new(space.grading().slice())?;
    let th = crate::normal_form::assemble_hamiltonian(&state.nf).checked_add(&state.f)?;
    let vals = par_map(points.len(), |k| {
        let phi = grid.point(points[k]);
        let map = slice_map(&state.phi, phi, &slice);
        let mut lhs = compose_series(&h0.at_phi(phi, &slice), &map)?;
        for (a, x) in state.alpha.iter().zip(&map.x) {
            lhs = lhs.axpy(-eval_phi(a, phi)?, x);
        }
        Ok(lhs.checked_sub(&th.at_phi(phi, &slice))?.majorant_at(state.radii.r, state.radii.s))
    })?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

fn wrap(phi: &mut [f64]) {
    for v in phi.iter_mut() {
        let t = 2.0 * PI;
        *v -= t * (*v / t).floor();
    }
}

/// Maximizer of `ζ`: the best grid point (ties within `10⁻¹²` of the range
/// go to the lexicographically smallest point), then Newton ascent with
/// backtracking until the gradient is below `10⁻¹²` of the range.
pub fn find_vanishing_point(zeta: &FTSeries, grid: &PhiGrid) -> Result<Vec<f64>> {
    let l = zeta.grading().l;
    if grid.l != l {
        return Err(KamError::InvalidArgument("grid dimension does not match zeta".into()));
    }
    let vals = grid.iter().map(|p| eval_phi(zeta, p)).collect::<Result<Vec<f64>>>()?;
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = hi - lo;
    let tie = 1e-12 * range;
    let best = vals.iter().position(|&v| v >= hi - tie).unwrap_or(0);
    let mut phi = grid.point(best).to_vec();
    if range == 0.0 {
        return Ok(phi);
    }
    let gtol = 1e-12 * range;
    let h = grid.spacing();
    let mut val = vals[best];
    for _ in 0..200 {
        let (g, hess) = zeta_derivatives(zeta, &phi)?;
        if g.norm() <= gtol {
            break;
        }
        let neg_def = linalg::sym_eigenvalues(&linalg::symmetrize(&hess)).iter().all(|&e| e < 0.0);
        let mut step = if neg_def {
            match linalg::solve_real(-hess.clone(), &g) {
                Ok(s) => s,
                Err(_) => &g * (h / g.norm()),
            }
        } else {
            &g * (h / g.norm())
        };
        if step.norm() > h {
            step *= h / step.norm();
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial: Vec<f64> = phi.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            wrap(&mut trial);
            let tv = eval_phi(zeta, &trial)?;
            if tv >= val - 1e-15 * range {
                phi = trial;
                val = tv;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.norm() < 1e-15 {
            break;
        }
    }
    wrap(&mut phi);
    Ok(phi)
}

/// `q ↦ Φ(φ₀, q, 0)` as `2m` q-series: `Δ_q, Φ_x, Φ_p, Φ_y`.
pub fn extract_torus(state: &IterationState, phi0: &[f64]) -> Result<Vec<FTSeries>> {
    let slice = SeriesSpace::new(state.f.grading().slice())?;
    let m = degree_zero(&slice_map(&state.phi, phi0, &slice));
    Ok(m.q.into_iter().chain(m.x).chain(m.p).chain(m.y).collect())
}

/// `max_q |X_H(e(q)) − De(q)·ω|` on an `n^d` grid, for `H` on a slice and an
/// embedding `e(q) = (q + Δ(q), x(q), p(q), y(q))`.
pub fn verify_invariance(h: &FTSeries, embedding: &[FTSeries], omega: &[f64], n: usize) -> Result<f64> {
    let g = h.grading();
    let (d, l) = (g.d, g.l);
    if embedding.len() != 2 * (d + l) || omega.len() != d || n == 0 {
        return Err(KamError::InvalidArgument("embedding, omega or grid size do not match".into()));
    }
    let phi = vec![0.0; l];
    let vars: Vec<Var> = (0..d)
        .map(Var::Q)
        .chain((0..l).map(Var::X))
        .chain((0..d).map(Var::P))
        .chain((0..l).map(Var::Y))
        .collect();
    let dh: Vec<FTSeries> = vars.iter().map(|&v| h.derivative(v)).collect();
    let de: Vec<FTSeries> = embedding.iter().map(|e| e.partial_omega(omega)).collect();
    let zd = vec![0.0; d];
    let zl = vec![0.0; l];
    let total = n.pow(d as u32);
    let mut worst = 0.0f64;
    for idx in 0..total {
        let mut q = vec![0.0; d];
        let mut rem = idx;
        for a in (0..d).rev() {
            q[a] = 2.0 * PI * (rem % n) as f64 / n as f64;
            rem /= n;
        }
        let ev = |s: &FTSeries| s.evaluate(&phi, &q, &zl, &zd, &zl);
        let mut pt = Vec::with_capacity(2 * (d + l));
        for (c, e) in embedding.iter().enumerate() {
            let base = if c < d { q[c] } else { 0.0 };
            pt.push(base + ev(e)?);
        }
        let (qq, rest) = pt.split_at(d);
        let (xx, rest) = rest.split_at(l);
        let (pp, yy) = rest.split_at(d);
        let at = |s: &FTSeries| s.evaluate(&phi, qq, xx, pp, yy);
        // X_H = (∂_p H, ∂_y H, −∂_q H, −∂_x H)
        let mut err = 0.0;
        for c in 0..2 * (d + l) {
            let xh = if c < d + l { at(&dh[c + d + l])? } else { -at(&dh[c - d - l])? };
            let flow = if c < d { omega[c] + ev(&de[c])? } else { ev(&de[c])? };
            err += (xh - flow).powi(2);
        }
        worst = worst.max(err.sqrt());
    }
    Ok(worst)
}

/// `max_q |e(q) − (q, 0)|` on an `n^d` grid.
pub fn embedding_distance(embedding: &[FTSeries], n: usize) -> Result<f64> {
    let g = embedding[0].grading();
    let (d, l) = (g.d, g.l);
    let phi = vec![0.0; l];
    let zd = vec![0.0; d];
    let zl = vec![0.0; l];
    let total = n.pow(d as u32);
    let mut worst = 0.0f64;
    for idx in 0..total {
        let mut q = vec![0.0; d];
        let mut rem = idx;
        for a in (0..d).rev() {
            q[a] = 2.0 * PI * (rem % n) as f64 / n as f64;
            rem /= n;
        }
        let mut s = 0.0;
        for e in embedding {
            s += e.evaluate(&phi, &q, &zl, &zd, &zl)?.powi(2);
        }
        worst = worst.max(s.sqrt());
    }
    Ok(worst)
}

/// The invariant torus found at the maximizer of `ζ`.
#[derive(Debug, Clone)]
pub struct TorusResult {
    pub phi0: Vec<f64>,
    pub zeta: FTSeries,
    pub zeta_at_phi0: f64,
    pub alpha_at_phi0: Vec<f64>,
    pub nu_max_at_phi0: f64,
    pub embedding: Vec<FTSeries>,
    pub residual: f64,
    pub distance_to_trivial: f64,
}

/// Samples `ζ` on `grid`, finds its maximizer `φ₀`, extracts the torus there
/// and checks its invariance under `H₀(φ₀, ·)` on an `n_check^d` grid.
pub fn solve_torus(
    h0: &FTSeries,
    state: &IterationState,
    omega: &[f64],
    grid: &PhiGrid,
    n_check: usize,
) -> Result<TorusResult> {
    let zeta = compute_zeta(h0, &state.phi, omega, grid)?;
    let phi0 = find_vanishing_point(&zeta, grid)?;
    let embedding = extract_torus(state, &phi0)?;
    let slice = SeriesSpace::new(h0.grading().slice())?;
    let h = h0.at_phi(&phi0, &slice).with_radii(Radii::new(state.radii.r, state.radii.s));
    let residual = verify_invariance(&h, &embedding, omega, n_check)?;
    let distance_to_trivial = embedding_distance(&embedding, n_check)?;
    let alpha_at_phi0 = state.alpha.iter().map(|a| eval_phi(a, &phi0)).collect::<Result<Vec<_>>>()?;
    let beta = eval_phi_matrix(&state.nf.beta, &phi0)?;
    if linalg::asymmetry(&beta) > 1e-8 {
        return Err(KamError::InvalidArgument(format!("beta is not symmetric at {:?}", phi0)));
    }
    Ok(TorusResult {
        zeta_at_phi0: eval_phi(&zeta, &phi0)?,
        phi0,
        zeta,
        alpha_at_phi0,
        nu_max_at_phi0: linalg::nu_max(&beta),
        embedding,
        residual,
        distance_to_trivial,
    })
}
