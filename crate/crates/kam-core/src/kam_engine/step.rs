use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::cohomology::{normal_part, solve_slice, SliceData, SliceSolution};
use super::{par_map, Context, IterationState, Rung};
use crate::error::{KamError, Result};
use crate::fourier_taylor::{project_phi, FTSeries, Radii, SeriesMatrix, PRUNE_FLOOR};
use crate::normal_form::{assemble_hamiltonian, bump_psi, eval_phi_matrix, nu_max_profile, NormalFormTuple};
use crate::symplectic::{angle_increment, bracket_affine, lie_increment, SymplecticMapSeries};

/// What one slice contributes to the step.
struct SliceOut {
    alpha: DVector<f64>,
    v: DVector<f64>,
    c: f64,
    beta: DMatrix<f64>,
    gamma: DMatrix<f64>,
    m: DMatrix<f64>,
    h: FTSeries,
    gbar: FTSeries,
    ginc: FTSeries,
    fplus: FTSeries,
    gen: FTSeries,
    /// Components of the new map, in the order `q, x, p, y`.
    map: Vec<FTSeries>,
    resid: f64,
    lie_rem: f64,
    cond: f64,
}

/// Everything a step produces besides the new state.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: IterationState,
    pub alpha_step: Vec<FTSeries>,
    pub v: Vec<FTSeries>,
    pub generator: FTSeries,
    pub nbar: NormalFormTuple,
    pub psi: Vec<f64>,
    /// Largest majorant of the non-normal-form remainder where `ψ = 1`.
    pub cohomological_residual: f64,
    pub lie_remainder: f64,
    pub projection_loss: f64,
    pub max_condition: f64,
}

fn zero_solution(data: &SliceData) -> SliceSolution {
    let g = data.f.grading();
    SliceSolution {
        alpha: DVector::zeros(g.l),
        v: DVector::zeros(g.d),
        mu: DVector::zeros(g.l),
        f: FTSeries::zero(data.f.space(), data.f.radii()),
        condition: 0.0,
    }
}

fn slice_step(ctx: &Context, state: &IterationState, tn: &FTSeries, i: usize, psi: f64) -> Result<SliceOut> {
    let phi = ctx.grid.point(i);
    let sl = &ctx.slice;
    let at = |s: &FTSeries| s.at_phi(phi, sl);
    let nf = &state.nf;
    let tn_s = at(tn);
    let g_s = at(&nf.g);
    let data = SliceData {
        beta: eval_phi_matrix(&nf.beta, phi)?,
        gamma: eval_phi_matrix(&nf.gamma, phi)?,
        m: eval_phi_matrix(&nf.m, phi)?,
        n0: tn_s.checked_sub(&g_s)?,
        f: at(&state.f),
        phi_x: state.phi.x.iter().map(at).collect(),
    };
    let sol = if psi > 0.0 {
        solve_slice(&data, &ctx.witness, ctx.k_q)
            .map_err(|e| KamError::CohomologicalFailure { point: i, detail: format!("at phi = {:?}: {}", phi, e) })?
            .scaled(psi)
    } else {
        zero_solution(&data)
    };
    let gen = sol.generator()?;
    let mut fa = data.f.clone();
    for t in 0..data.phi_x.len() {
        fa = fa.axpy(-sol.alpha[t], &data.phi_x[t]);
    }
    let lser = fa.checked_add(&bracket_affine(&data.n0, &gen)?)?;
    let np = normal_part(&lser);
    let left = lser.checked_sub(&np.series)?;
    let zero = FTSeries::zero(sl, data.f.radii());
    let (gbar, resid) = if psi < 1.0 - 1e-12 { (left, 0.0) } else { (zero.clone(), left.majorant()) };
    let cap = ctx.cfg.order_cap;
    let e = tn_s.checked_add(&fa)?;
    let einc = lie_increment(&e, &gen, cap, None)?;
    let ginc = if g_s.is_zero() { zero.clone() } else { lie_increment(&g_s, &gen, cap, None)?.value };
    let fplus = fa
        .checked_add(&einc.value)?
        .checked_sub(&np.series)?
        .checked_sub(&gbar)?
        .checked_sub(&ginc)?;
    let mut lie_rem = einc.remainder;
    let mut map = Vec::new();
    for (a, dq) in state.phi.q.iter().enumerate() {
        let dq = at(dq);
        let inc = angle_increment(a, &dq, &gen, cap, None)?;
        lie_rem += inc.remainder;
        map.push(dq.checked_add(&inc.value)?);
    }
    for c in state.phi.x.iter().chain(&state.phi.p).chain(&state.phi.y) {
        let c = at(c);
        let inc = lie_increment(&c, &gen, cap, None)?;
        lie_rem += inc.remainder;
        map.push(c.checked_add(&inc.value)?);
    }
    Ok(SliceOut {
        alpha: sol.alpha,
        v: sol.v,
        c: np.c,
        beta: np.beta,
        gamma: np.gamma,
        m: np.m,
        h: np.h,
        gbar,
        ginc,
        fplus,
        gen: sol.f,
        map,
        resid,
        lie_rem,
        cond: sol.condition,
    })
}

/// Projects per-slice values onto the φ-moded space and drops rounding
/// debris below `1e-14` of the largest coefficient.
fn project(ctx: &Context, slices: Vec<FTSeries>, radii: Radii, loss: &mut f64) -> Result<FTSeries> {
    let (s, pl) = project_phi(&ctx.grid, &slices, &ctx.space, radii)?;
    *loss += pl;
    let floor = (1e-14 * s.max_abs_coeff()).max(PRUNE_FLOOR);
    Ok(s.prune(floor))
}

fn project_scalars(ctx: &Context, vals: &[f64], radii: Radii, loss: &mut f64) -> Result<FTSeries> {
    let slices = vals.iter().map(|&v| FTSeries::constant(&ctx.slice, radii, v)).collect();
    project(ctx, slices, radii, loss)
}

fn project_matrix(
    ctx: &Context,
    outs: &[SliceOut],
    pick: impl Fn(&SliceOut) -> &DMatrix<f64>,
    rows: usize,
    cols: usize,
    radii: Radii,
    loss: &mut f64,
) -> Result<SeriesMatrix> {
    let mut m = SeriesMatrix::zeros(&ctx.space, radii, rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let vals: Vec<f64> = outs.iter().map(|o| pick(o)[(i, j)]).collect();
            m.set(i, j, project_scalars(ctx, &vals, radii, loss)?);
        }
    }
    Ok(m)
}

/// One step `(N_n, α_n, f_n, Φⁿ) ↦ (N_{n+1}, α_{n+1}, f_{n+1}, Φⁿ⁺¹)`.
///
/// The generator is solved slice by slice where the bump `ψ` (built from
/// `ν_max(β)` with thresholds `2δ₊`, `3δ₊`) is positive and multiplied by
/// `ψ`; where `ψ < 1` the unsolved part of the equation is moved into `g`.
pub fn kam_step(state: &IterationState, rung: &Rung, ctx: &Context) -> Result<StepOutput> {
    let gr = ctx.space.grading();
    let (d, l) = (gr.d, gr.l);
    let profile = nu_max_profile(&state.nf.beta, &ctx.grid)?;
    let bump = bump_psi(&profile, &ctx.grid, 2.0 * rung.delta_plus, 3.0 * rung.delta_plus)?;
    let tn = assemble_hamiltonian(&state.nf);
    let outs: Vec<SliceOut> = par_map(ctx.grid.len(), |i| slice_step(ctx, state, &tn, i, bump.values[i]))?;

    let radii = Radii::new(rung.r - 10.0 * rung.sigma, rung.s - rung.sigma);
    if !(radii.r > 0.0 && radii.s > 0.0) {
        return Err(KamError::IterationPrecondition(format!("radii exhausted: r = {}, s = {}", radii.r, radii.s)));
    }
    let mut loss = 0.0;
    let alpha_step = (0..l)
        .map(|t| project_scalars(ctx, &outs.iter().map(|o| o.alpha[t]).collect::<Vec<_>>(), radii, &mut loss))
        .collect::<Result<Vec<_>>>()?;
    let v = (0..d)
        .map(|t| project_scalars(ctx, &outs.iter().map(|o| o.v[t]).collect::<Vec<_>>(), radii, &mut loss))
        .collect::<Result<Vec<_>>>()?;
    let mut nbar = NormalFormTuple::zero(&ctx.space, radii);
    nbar.c = project_scalars(ctx, &outs.iter().map(|o| o.c).collect::<Vec<_>>(), radii, &mut loss)?;
    nbar.beta = project_matrix(ctx, &outs, |o| &o.beta, l, l, radii, &mut loss)?;
    nbar.gamma = project_matrix(ctx, &outs, |o| &o.gamma, l, d, radii, &mut loss)?;
    nbar.m = project_matrix(ctx, &outs, |o| &o.m, d, d, radii, &mut loss)?;
    nbar.h = project(ctx, outs.iter().map(|o| o.h.clone()).collect(), radii, &mut loss)?;
    let gbar = project(ctx, outs.iter().map(|o| o.gbar.clone()).collect(), radii, &mut loss)?;
    let ginc = project(ctx, outs.iter().map(|o| o.ginc.clone()).collect(), radii, &mut loss)?;
    nbar.g = gbar.checked_add(&ginc)?;
    let fplus = project(ctx, outs.iter().map(|o| o.fplus.clone()).collect(), radii, &mut loss)?;
    let generator = project(ctx, outs.iter().map(|o| o.gen.clone()).collect(), radii, &mut loss)?;
    let ncomp = 2 * (d + l);
    let mut comps = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        comps.push(project(ctx, outs.iter().map(|o| o.map[c].clone()).collect(), radii, &mut loss)?);
    }
    let mut it = comps.into_iter();
    let q: Vec<FTSeries> = it.by_ref().take(d).collect();
    let x: Vec<FTSeries> = it.by_ref().take(l).collect();
    let p: Vec<FTSeries> = it.by_ref().take(d).collect();
    let y: Vec<FTSeries> = it.collect();
    let lie_remainder: f64 = outs.iter().map(|o| o.lie_rem).fold(0.0, f64::max);
    let phi = SymplecticMapSeries { q, x, p, y, remainder: state.phi.remainder + lie_remainder };

    let nf = state.nf.with_radii(radii).add(&nbar)?;
    let alpha = state
        .alpha
        .iter()
        .zip(&alpha_step)
        .map(|(a, b)| a.clone().with_radii(radii).checked_add(b))
        .collect::<Result<Vec<_>>>()?;
    let new_state = IterationState { n: state.n + 1, nf, alpha, f: fplus, phi, radii };
    Ok(StepOutput {
        state: new_state,
        alpha_step,
        v,
        generator,
        nbar,
        psi: bump.values.clone(),
        cohomological_residual: outs.iter().map(|o| o.resid).fold(0.0, f64::max),
        lie_remainder,
        projection_loss: loss,
        max_condition: outs.iter().map(|o| o.cond).fold(0.0, f64::max),
    })
}
