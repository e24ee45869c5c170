//! Poisson brackets, Lie transforms, near-identity symplectic maps, and the
//! lattice/coordinate reduction that brings a resonant system into the
//! parametrized model.

mod lattice;
mod reduction;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;


use crate::error::{KamError, Result};
use crate::fourier_taylor::{FTSeries, Radii, SeriesSpace, Var, C64};

pub use lattice::{check_frequency, integer_det, unimodular_completion, LatticeReduction};
pub use reduction::{
    equal_derivatives_gap, reduce_coordinates, shifted_parametrization, ActionTerm, AngleActionTerm, OriginalSystem, ReducedProblem,
    ReducedTerm, ReductionReport,
};

/// Default tolerance on canonical bracket residuals.
pub const TOL_SYMP: f64 = 1e-8;
/// Default cap on Lie-series orders.
pub const ORDER_CAP: usize = 12;

/// `{g, h} = ∂_q g·∂_p h − ∂_p g·∂_q h + ∂_x g·∂_y h − ∂_y g·∂_x h`.
pub fn poisson_bracket(g: &FTSeries, h: &FTSeries) -> Result<FTSeries> {
    if g.grading() != h.grading() {
        return Err(KamError::GradingMismatch);
    }
    let gr = g.grading();
    let mut acc = FTSeries::zero(g.space(), g.radii().min(h.radii()));
    if g.is_zero() || h.is_zero() {
        return Ok(acc.with_loss(g.trunc_loss() * h.majorant() + h.trunc_loss() * g.majorant()));
    }
    let mut pair = |a: Var, b: Var| -> Result<()> {
        let ga = g.derivative(a);
        let hb = h.derivative(b);
        if !ga.is_zero() && !hb.is_zero() {
            acc = acc.checked_add(&ga.checked_mul(&hb)?)?;
        }
        let gb = g.derivative(b);
        let ha = h.derivative(a);
        if !gb.is_zero() && !ha.is_zero() {
            acc = acc.checked_sub(&gb.checked_mul(&ha)?)?;
        }
        Ok(())
    };
    for i in 0..gr.d {
        pair(Var::Q(i), Var::P(i))?;
    }
    for i in 0..gr.l {
        pair(Var::X(i), Var::Y(i))?;
    }
    Ok(acc)
}

/// Generator `F + v·q` of a near-identity map; `v` depends on φ only.
#[derive(Debug, Clone)]
pub struct GeneratingFunction {
    pub f: FTSeries,
    pub v: Vec<FTSeries>,
}

impl GeneratingFunction {
    pub fn new(f: FTSeries, v: Vec<FTSeries>) -> Result<Self> {
        let g = f.grading();
        if v.len() != g.d {
            return Err(KamError::InvalidArgument(format!("v has {} components, expected d = {}", v.len(), g.d)));
        }
        for vi in &v {
            if vi.grading() != g {
                return Err(KamError::GradingMismatch);
            }
            if vi.terms().any(|t| t.k.iter().any(|&c| c != 0) || t.alpha.iter().any(|&a| a != 0)) {
                return Err(KamError::InvalidArgument("v must depend on φ only".into()));
            }
        }
        Ok(GeneratingFunction { f, v })
    }

    /// Generator with `v = 0`.
    pub fn from_f(f: FTSeries) -> Self {
        let d = f.grading().d;
        let v = (0..d).map(|_| FTSeries::zero(f.space(), f.radii())).collect();
        GeneratingFunction { f, v }
    }

    pub fn zero(space: &Arc<SeriesSpace>, radii: Radii) -> Self {
        Self::from_f(FTSeries::zero(space, radii))
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_zero() && self.v.iter().all(|v| v.is_zero())
    }

    pub fn space(&self) -> &Arc<SeriesSpace> {
        self.f.space()
    }

    /// Majorant of `F` plus the sup of `|v|` (sum of coefficient moduli, weighted).
    pub fn size(&self) -> f64 {
        self.f.majorant() + self.v.iter().map(|v| v.majorant()).sum::<f64>()
    }
}

/// `{g, F + v·q} = {g, F} − ∂_p g·v`.
pub fn bracket_affine(g: &FTSeries, gen: &GeneratingFunction) -> Result<FTSeries> {
    let mut out = poisson_bracket(g, &gen.f)?;
    for (i, vi) in gen.v.iter().enumerate() {
        if vi.is_zero() {
            continue;
        }
        let gp = g.derivative(Var::P(i));
        if !gp.is_zero() {
            out = out.checked_sub(&gp.checked_mul(vi)?)?;
        }
    }
    Ok(out)
}

/// Hamiltonian vector field in the order `(q̇, ẋ, ṗ, ẏ)`.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub q_dot: Vec<FTSeries>,
    pub x_dot: Vec<FTSeries>,
    pub p_dot: Vec<FTSeries>,
    pub y_dot: Vec<FTSeries>,
}

/// `X_{H+v·q} = (∂_p H, ∂_y H, −∂_q H − v, −∂_x H)`.
pub fn vector_field(h: &FTSeries, v: Option<&[FTSeries]>) -> Result<VectorField> {
    let g = h.grading();
    let mut p_dot: Vec<FTSeries> = (0..g.d).map(|i| -&h.derivative(Var::Q(i))).collect();
    if let Some(v) = v {
        if v.len() != g.d {
            return Err(KamError::InvalidArgument("v must have d components".into()));
        }
        for i in 0..g.d {
            p_dot[i] = p_dot[i].checked_sub(&v[i])?;
        }
    }
    Ok(VectorField {
        q_dot: (0..g.d).map(|i| h.derivative(Var::P(i))).collect(),
        x_dot: (0..g.l).map(|i| h.derivative(Var::Y(i))).collect(),
        p_dot,
        y_dot: (0..g.l).map(|i| -&h.derivative(Var::X(i))).collect(),
    })
}

/// Result of a Lie transform.
#[derive(Debug, Clone)]
pub struct LieSeries {
    pub value: FTSeries,
    /// `2 ×` majorant of the last term kept.
    pub remainder: f64,
    pub orders: usize,
}

/// Runs the recursion `g_n = {g_{n−1}, F + v·q}/n` from `first = g_{start}`,
/// summing `Σ_{n ≥ start} g_n`.
fn lie_sum(
    first: FTSeries,
    start: usize,
    gen: &GeneratingFunction,
    order_cap: usize,
    tol: f64,
) -> Result<LieSeries> {
    let mut sum = first.clone();
    let mut term = first;
    let mut prev = term.majorant();
    if prev <= tol || gen.is_zero() {
        return Ok(LieSeries { value: sum, remainder: if gen.is_zero() { 0.0 } else { 2.0 * prev }, orders: start });
    }
    let mut n = start;
    let mut last = prev;
    while n < order_cap {
        n += 1;
        term = bracket_affine(&term, gen)?.scale_re(1.0 / n as f64);
        let m = term.majorant();
        if m > tol && n >= 3 && m >= 0.5 * prev {
            return Err(KamError::NonConvergentLie { order: n, term: m, previous: prev });
        }
        sum = sum.checked_add(&term)?;
        last = m;
        if m <= tol {
            break;
        }
        prev = m;
    }
    Ok(LieSeries { value: sum, remainder: 2.0 * last, orders: n })
}

/// `g ∘ Ψ¹_{F+v·q} = Σ_n g_n`, `g₀ = g`, `g_n = {g_{n−1}, F + v·q}/n`.
///
/// Stops at the first order whose term has majorant at most `tol`
/// (default `1e-14 ×` majorant of `g`).
pub fn lie_transform(g: &FTSeries, gen: &GeneratingFunction, order_cap: usize, tol: Option<f64>) -> Result<LieSeries> {
    if g.grading() != gen.f.grading() {
        return Err(KamError::GradingMismatch);
    }
    let tol = tol.unwrap_or(1e-14 * g.majorant());
    lie_sum(g.clone(), 0, gen, order_cap, tol)
}

/// `g ∘ Ψ¹ − g = Σ_{n≥1} g_n`, summed without adding `g` back in.
///
/// Default `tol` is `1e-14 ×` majorant of `g`.
pub fn lie_increment(g: &FTSeries, gen: &GeneratingFunction, order_cap: usize, tol: Option<f64>) -> Result<LieSeries> {
    if g.grading() != gen.f.grading() {
        return Err(KamError::GradingMismatch);
    }
    let tol = tol.unwrap_or(1e-14 * g.majorant());
    let first = bracket_affine(g, gen)?;
    lie_sum(first, 1, gen, order_cap, tol)
}

/// `(q_i + Δ) ∘ Ψ¹ − (q_i + Δ)` for a periodic displacement `Δ`.
pub fn angle_increment(
    i: usize,
    delta: &FTSeries,
    gen: &GeneratingFunction,
    order_cap: usize,
    tol: Option<f64>,
) -> Result<LieSeries> {
    if delta.grading() != gen.f.grading() {
        return Err(KamError::GradingMismatch);
    }
    let first = gen.f.derivative(Var::P(i)).checked_add(&bracket_affine(delta, gen)?)?;
    let tol = tol.unwrap_or(1e-14 * first.majorant().max(delta.majorant()));
    lie_sum(first, 1, gen, order_cap, tol)
}

/// A near-identity symplectic map in series form.
///
/// `q` holds the angle displacement `Φ_q − q` (the identity in `q` is not a
/// periodic function); `x`, `p`, `y` hold the full images.
#[derive(Debug, Clone)]
pub struct SymplecticMapSeries {
    pub q: Vec<FTSeries>,
    pub x: Vec<FTSeries>,
    pub p: Vec<FTSeries>,
    pub y: Vec<FTSeries>,
    /// Sum of the remainders reported by the construction.
    pub remainder: f64,
}

impl SymplecticMapSeries {
    pub fn identity(space: &Arc<SeriesSpace>, radii: Radii) -> Self {
        let g = space.grading();
        let c = |v: Var| FTSeries::coordinate(space, radii, v).expect("coordinate inside grading");
        SymplecticMapSeries {
            q: (0..g.d).map(|_| FTSeries::zero(space, radii)).collect(),
            x: (0..g.l).map(|i| c(Var::X(i))).collect(),
            p: (0..g.d).map(|i| c(Var::P(i))).collect(),
            y: (0..g.l).map(|i| c(Var::Y(i))).collect(),
            remainder: 0.0,
        }
    }

    pub fn space(&self) -> &Arc<SeriesSpace> {
        self.x[0].space()
    }

    pub fn radii(&self) -> Radii {
        self.x[0].radii()
    }

    /// Components minus the identity, in the order `q, x, p, y`.
    pub fn displacement(&self) -> Vec<FTSeries> {
        let id = Self::identity(self.space(), self.radii());
        let mut out = self.q.clone();
        for (a, b) in self.x.iter().chain(&self.p).chain(&self.y).zip(id.x.iter().chain(&id.p).chain(&id.y)) {
            out.push(a - b);
        }
        out
    }

    /// `max_c ‖Φ_c − id_c‖_{C²}` by majorant estimate.
    pub fn c2_distance(&self) -> f64 {
        self.displacement().iter().map(|s| s.c2_norm()).fold(0.0, f64::max)
    }

    /// Image of a point; `phi` fixes the parameter.
    pub fn apply(&self, phi: &[f64], q: &[f64], x: &[f64], p: &[f64], y: &[f64]) -> Result<[Vec<f64>; 4]> {
        let ev = |s: &FTSeries| s.evaluate(phi, q, x, p, y);
        let mut qq = Vec::with_capacity(q.len());
        for (i, s) in self.q.iter().enumerate() {
            qq.push(q[i] + ev(s)?);
        }
        let mut xx = Vec::new();
        for s in &self.x {
            xx.push(ev(s)?);
        }
        let mut pp = Vec::new();
        for s in &self.p {
            pp.push(ev(s)?);
        }
        let mut yy = Vec::new();
        for s in &self.y {
            yy.push(ev(s)?);
        }
        Ok([qq, xx, pp, yy])
    }
}

/// `{q_i + Δ, h} = ∂_{p_i} h + {Δ, h}`.
fn bracket_angle(i: usize, delta: &FTSeries, h: &FTSeries) -> Result<FTSeries> {
    h.derivative(Var::P(i)).checked_add(&poisson_bracket(delta, h)?)
}

/// Largest majorant among the deviations of the canonical bracket relations.
pub fn symplecticity_residual(map: &SymplecticMapSeries) -> Result<f64> {
    let sp = map.space().clone();
    let radii = map.radii();
    let g = sp.grading();
    let one = FTSeries::constant(&sp, radii, 1.0);
    let mut worst = 0.0f64;
    let mut check = |s: FTSeries, target: bool| {
        let dev = if target { s.checked_sub(&one).expect("same space") } else { s };
        worst = worst.max(dev.majorant());
    };
    let (d, l) = (g.d, g.l);
    for i in 0..d {
        for j in 0..d {
            // {Φ_qi, Φ_qj} = ∂_{p_i}Δ_j − ∂_{p_j}Δ_i + {Δ_i, Δ_j}
            if j > i {
                let s = map.q[j]
                    .derivative(Var::P(i))
                    .checked_sub(&map.q[i].derivative(Var::P(j)))?
                    .checked_add(&poisson_bracket(&map.q[i], &map.q[j])?)?;
                check(s, false);
            }
            check(bracket_angle(i, &map.q[i], &map.p[j])?, i == j);
            if j > i {
                check(poisson_bracket(&map.p[i], &map.p[j])?, false);
            }
        }
        for j in 0..l {
            check(bracket_angle(i, &map.q[i], &map.x[j])?, false);
            check(bracket_angle(i, &map.q[i], &map.y[j])?, false);
            check(poisson_bracket(&map.p[i], &map.x[j])?, false);
            check(poisson_bracket(&map.p[i], &map.y[j])?, false);
        }
    }
    for i in 0..l {
        for j in 0..l {
            check(poisson_bracket(&map.x[i], &map.y[j])?, i == j);
            if j > i {
                check(poisson_bracket(&map.x[i], &map.x[j])?, false);
                check(poisson_bracket(&map.y[i], &map.y[j])?, false);
            }
        }
    }
    Ok(worst)
}

/// `Ψ = Ψ¹_{F+v·q}` applied to every coordinate function.
pub fn map_from_generator(gen: &GeneratingFunction, order_cap: usize, tol: Option<f64>) -> Result<SymplecticMapSeries> {
    map_from_generator_checked(gen, order_cap, tol, TOL_SYMP)
}

/// As [`map_from_generator`] with an explicit symplecticity tolerance.
pub fn map_from_generator_checked(
    gen: &GeneratingFunction,
    order_cap: usize,
    tol: Option<f64>,
    tol_symp: f64,
) -> Result<SymplecticMapSeries> {
    let map = lie_map(gen, order_cap, tol)?;
    let res = symplecticity_residual(&map)?;
    if !(res <= tol_symp) {
        return Err(KamError::NotSymplectic(res));
    }
    Ok(map)
}

/// Lie transforms of the coordinate functions without the bracket check.
pub(crate) fn lie_map(gen: &GeneratingFunction, order_cap: usize, tol: Option<f64>) -> Result<SymplecticMapSeries> {
    let sp = gen.space().clone();
    let radii = gen.f.radii();
    let id = SymplecticMapSeries::identity(&sp, radii);
    let g = sp.grading();
    let tol_of = |s: &FTSeries| tol.unwrap_or(1e-14 * s.majorant().max(radii.s));
    let mut remainder = 0.0;
    let mut run = |s: &FTSeries| -> Result<FTSeries> {
        let out = lie_sum(s.clone(), 0, gen, order_cap, tol_of(s))?;
        remainder += out.remainder;
        Ok(out.value)
    };
    let x = id.x.iter().map(&mut run).collect::<Result<Vec<_>>>()?;
    let p = id.p.iter().map(&mut run).collect::<Result<Vec<_>>>()?;
    let y = id.y.iter().map(&mut run).collect::<Result<Vec<_>>>()?;
    let mut q = Vec::with_capacity(g.d);
    for i in 0..g.d {
        // {q_i, F + v·q} = ∂_{p_i} F
        let first = gen.f.derivative(Var::P(i));
        let t = tol.unwrap_or(1e-14 * radii.r.max(first.majorant()));
        let out = lie_sum(first, 1, gen, order_cap, t)?;
        remainder += out.remainder;
        q.push(out.value);
    }
    Ok(SymplecticMapSeries { q, x, p, y, remainder })
}

/// `exp(i·c·u)` for a real series `u`, summed until terms fall below `tol`.
fn exp_i(u: &FTSeries, c: f64, tol: f64) -> Result<FTSeries> {
    let sp = u.space();
    let mut sum = FTSeries::constant(sp, u.radii(), 1.0);
    let mut term = sum.clone();
    let iu = u.scale(C64::new(0.0, c));
    let mut n = 0usize;
    loop {
        n += 1;
        term = term.checked_mul(&iu)?.scale_re(1.0 / n as f64);
        let m = term.majorant();
        sum = sum.checked_add(&term)?;
        if m <= tol || term.is_zero() {
            let loss = sum.trunc_loss() + 2.0 * m;
            return Ok(sum.with_loss(loss));
        }
        if n > 200 {
            return Err(KamError::DisplacementTooLarge(u.majorant()));
        }
    }
}

/// Substitutes the map `psi` into the series `f`: `f ∘ Ψ`.
pub fn compose_series(f: &FTSeries, psi: &SymplecticMapSeries) -> Result<FTSeries> {
    let sp = f.space().clone();
    let g = sp.grading();
    let radii = f.radii().min(psi.radii());
    if psi.space().grading() != g {
        return Err(KamError::GradingMismatch);
    }
    let disp = psi.q.iter().map(|s| s.majorant()).fold(0.0, f64::max);
    if !(disp < radii.r) {
        return Err(KamError::DisplacementTooLarge(disp));
    }
    let tol = 1e-17;
    // Powers of e^{±iΔ_i}.
    let mut pows: Vec<[Vec<FTSeries>; 2]> = Vec::with_capacity(g.d);
    let kmax = g.k_q as usize;
    for i in 0..g.d {
        let mut both: [Vec<FTSeries>; 2] = [Vec::new(), Vec::new()];
        for (s, sign) in [1.0, -1.0].iter().enumerate() {
            let e = exp_i(&psi.q[i], *sign, tol)?;
            let mut list = vec![FTSeries::constant(&sp, radii, 1.0)];
            for n in 1..=kmax {
                let next = list[n - 1].checked_mul(&e)?;
                list.push(next);
            }
            both[s] = list;
        }
        pows.push(both);
    }
    let mut taylor = Vec::with_capacity(g.n_taylor());
    taylor.extend(psi.x.iter().cloned());
    taylor.extend(psi.p.iter().cloned());
    taylor.extend(psi.y.iter().cloned());
    // Group coefficients by (k, α).
    let mut groups: BTreeMap<(Vec<i32>, Vec<u8>), Vec<(u32, C64)>> = BTreeMap::new();
    for t in f.terms() {
        let key = sp.key(t.j, t.k, &vec![0u8; g.n_taylor()]).expect("mode inside grading");
        groups.entry((t.k.to_vec(), t.alpha.to_vec())).or_default().push((key, t.c));
    }
    let mut monos: BTreeMap<Vec<u8>, FTSeries> = BTreeMap::new();
    monos.insert(vec![0u8; g.n_taylor()], FTSeries::constant(&sp, radii, 1.0));
    fn mono(
        alpha: &[u8],
        monos: &mut BTreeMap<Vec<u8>, FTSeries>,
        taylor: &[FTSeries],
    ) -> Result<FTSeries> {
        if let Some(m) = monos.get(alpha) {
            return Ok(m.clone());
        }
        let v = alpha.iter().position(|&a| a > 0).expect("nonzero monomial");
        let mut lower = alpha.to_vec();
        lower[v] -= 1;
        let base = mono(&lower, monos, taylor)?;
        let out = base.checked_mul(&taylor[v])?;
        monos.insert(alpha.to_vec(), out.clone());
        Ok(out)
    }
    let mut ek_cache: BTreeMap<Vec<i32>, FTSeries> = BTreeMap::new();
    let mut acc = FTSeries::zero(&sp, radii);
    for ((k, alpha), coeffs) in groups {
        let ek = match ek_cache.get(&k) {
            Some(e) => e.clone(),
            None => {
                let mut e = FTSeries::constant(&sp, radii, 1.0);
                for (i, &ki) in k.iter().enumerate() {
                    if ki != 0 {
                        let s = if ki > 0 { 0 } else { 1 };
                        e = e.checked_mul(&pows[i][s][ki.unsigned_abs() as usize])?;
                    }
                }
                ek_cache.insert(k.clone(), e.clone());
                e
            }
        };
        let c = FTSeries::from_terms(&sp, radii, coeffs);
        let m = mono(&alpha, &mut monos, &taylor)?;
        acc = acc.checked_add(&c.checked_mul(&ek)?.checked_mul(&m)?)?;
    }
    let loss = acc.trunc_loss() + f.trunc_loss();
    Ok(acc.realify().with_loss(loss))
}

/// `Φ ∘ Ψ` by substitution of `Ψ` into `Φ`.
pub fn compose_maps(phi: &SymplecticMapSeries, psi: &SymplecticMapSeries) -> Result<SymplecticMapSeries> {
    let mut q = Vec::with_capacity(phi.q.len());
    for (a, b) in phi.q.iter().zip(&psi.q) {
        q.push(b.checked_add(&compose_series(a, psi)?)?);
    }
    let sub = |v: &[FTSeries]| v.iter().map(|s| compose_series(s, psi)).collect::<Result<Vec<_>>>();
    Ok(SymplecticMapSeries {
        q,
        x: sub(&phi.x)?,
        p: sub(&phi.p)?,
        y: sub(&phi.y)?,
        remainder: phi.remainder + psi.remainder,
    })
}

/// The composition bound `‖Φ∘Ψ‖ ≤ (1 + ε₀)(1 + ε)` for near-identity maps,
/// written for the distances to the identity: returns `(measured, bound)`
/// where `bound = (1 + ε₀)(1 + ε) − 1`.
pub fn composition_bound(
    phi: &SymplecticMapSeries,
    psi: &SymplecticMapSeries,
    composed: &SymplecticMapSeries,
) -> (f64, f64) {
    let e0 = phi.c2_distance();
    let e1 = psi.c2_distance();
    (composed.c2_distance(), (1.0 + e0) * (1.0 + e1) - 1.0)
}
