//! Normal-form tuples `𝐍 = (w, c, β, Γ, M, Q, g, h)`, their Hamiltonians,
//! `ν_max` profiles and the bump function used for gluing.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;

use crate::error::{KamError, Result};
use crate::fourier_taylor::{project_phi, DBlocks, FTSeries, PhiGrid, Radii, SeriesMatrix, SeriesSpace, TaylorSplit, Var};
use crate::linalg;

/// The tuple `(w, c, β, Γ, M, Q, g, h)`.
///
/// `c`, `β`, `Γ`, `M`, `Q` depend on φ only; `Γ` is `l × d` and enters the
/// Hamiltonian as `⟨Γp, x⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormTuple {
    pub w: Vec<f64>,
    pub c: FTSeries,
    pub beta: SeriesMatrix,
    pub gamma: SeriesMatrix,
    pub m: SeriesMatrix,
    pub q: SeriesMatrix,
    pub g: FTSeries,
    pub h: FTSeries,
}

impl NormalFormTuple {
    pub fn zero(space: &Arc<SeriesSpace>, radii: Radii) -> Self {
        let gr = space.grading();
        let (d, l) = (gr.d, gr.l);
        NormalFormTuple {
            w: vec![0.0; d],
            c: FTSeries::zero(space, radii),
            beta: SeriesMatrix::zeros(space, radii, l, l),
            gamma: SeriesMatrix::zeros(space, radii, l, d),
            m: SeriesMatrix::zeros(space, radii, d, d),
            q: SeriesMatrix::zeros(space, radii, l, l),
            g: FTSeries::zero(space, radii),
            h: FTSeries::zero(space, radii),
        }
    }

    /// `(ω, 0, 0, 0, M₀, Q₀, 0, h₀)`.
    pub fn unperturbed(
        space: &Arc<SeriesSpace>,
        radii: Radii,
        omega: &[f64],
        m0: &DMatrix<f64>,
        q0: &DMatrix<f64>,
        h0: FTSeries,
    ) -> Result<Self> {
        let gr = space.grading();
        if omega.len() != gr.d || m0.nrows() != gr.d || m0.ncols() != gr.d || q0.nrows() != gr.l || q0.ncols() != gr.l
        {
            return Err(KamError::InvalidArgument("dimensions of omega, M0, Q0 do not match the grading".into()));
        }
        if h0.degree_part(0).nnz() + h0.degree_part(1).nnz() + h0.degree_part(2).nnz() > 0 {
            return Err(KamError::InvalidArgument("h0 must have Taylor degree >= 3".into()));
        }
        let mut n = Self::zero(space, radii);
        n.w = omega.to_vec();
        n.m = SeriesMatrix::constant(space, radii, m0);
        n.q = SeriesMatrix::constant(space, radii, q0);
        n.h = h0;
        Ok(n)
    }

    pub fn space(&self) -> &Arc<SeriesSpace> {
        self.c.space()
    }

    pub fn radii(&self) -> Radii {
        self.c.radii()
    }

    fn combine(&self, o: &Self, sign: f64) -> Result<Self> {
        if self.w.len() != o.w.len() {
            return Err(KamError::InvalidArgument("tuple dimension mismatch".into()));
        }
        let m = |a: &SeriesMatrix, b: &SeriesMatrix| -> Result<SeriesMatrix> { a.add(&b.scale(sign)) };
        Ok(NormalFormTuple {
            w: self.w.iter().zip(&o.w).map(|(a, b)| a + sign * b).collect(),
            c: self.c.checked_add(&o.c.scale_re(sign))?,
            beta: m(&self.beta, &o.beta)?,
            gamma: m(&self.gamma, &o.gamma)?,
            m: m(&self.m, &o.m)?,
            q: m(&self.q, &o.q)?,
            g: self.g.checked_add(&o.g.scale_re(sign))?,
            h: self.h.checked_add(&o.h.scale_re(sign))?,
        })
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.combine(o, 1.0)
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.combine(o, -1.0)
    }

    pub fn with_radii(&self, radii: Radii) -> Self {
        let mr = |m: &SeriesMatrix| m.map(|s| s.clone().with_radii(radii));
        NormalFormTuple {
            w: self.w.clone(),
            c: self.c.clone().with_radii(radii),
            beta: mr(&self.beta),
            gamma: mr(&self.gamma),
            m: mr(&self.m),
            q: mr(&self.q),
            g: self.g.clone().with_radii(radii),
            h: self.h.clone().with_radii(radii),
        }
    }

    /// The `N_{r,s}` norm: max of the component norms.
    pub fn norm(&self) -> f64 {
        component_norms(self).iter().cloned().fold(0.0, f64::max)
    }
}

fn sym_entry(m: &SeriesMatrix, i: usize, j: usize) -> FTSeries {
    if i == j {
        m.get(i, i).clone()
    } else {
        m.get(i, j).checked_add(m.get(j, i)).expect("matrix entries share a space").scale_re(0.5)
    }
}

fn symmetrized(m: &SeriesMatrix) -> SeriesMatrix {
    let mut out = m.clone();
    for i in 0..m.rows {
        for j in 0..m.cols {
            out.set(i, j, sym_entry(m, i, j));
        }
    }
    out
}

/// `T(𝐍) = c + ⟨w,p⟩ + ½⟨Mp,p⟩ + ½⟨Qy,y⟩ + ⟨Γp,x⟩ + ½⟨βx,x⟩ + g + h`.
pub fn assemble_hamiltonian(n: &NormalFormTuple) -> FTSeries {
    let sp = n.space().clone();
    let radii = n.radii();
    let gr = sp.grading();
    let zero = FTSeries::zero(&sp, radii);
    let split = TaylorSplit {
        a: n.c.clone(),
        b_x: vec![zero.clone(); gr.l],
        b_p: n.w.iter().map(|&w| FTSeries::constant(&sp, radii, w)).collect(),
        b_y: vec![zero.clone(); gr.l],
        d: DBlocks {
            xx: symmetrized(&n.beta),
            pp: symmetrized(&n.m),
            yy: symmetrized(&n.q),
            xy: SeriesMatrix::zeros(&sp, radii, gr.l, gr.l),
            px: n.gamma.transpose(),
            py: SeriesMatrix::zeros(&sp, radii, gr.d, gr.l),
        },
        remainder: zero,
    };
    let quad = split.reassemble();
    let loss = n.c.trunc_loss() + n.g.trunc_loss() + n.h.trunc_loss();
    (&(&quad + &n.g) + &n.h).with_loss(loss)
}

/// Value of a φ-only series at `φ` (other variables at zero).
pub fn eval_phi(s: &FTSeries, phi: &[f64]) -> Result<f64> {
    let gr = s.grading();
    let zd = vec![0.0; gr.d];
    let zl = vec![0.0; gr.l];
    s.evaluate(phi, &zd, &zl, &zd, &zl)
}

/// Value of a φ-only matrix series at `φ`.
pub fn eval_phi_matrix(m: &SeriesMatrix, phi: &[f64]) -> Result<DMatrix<f64>> {
    let gr = m.data.first().map(|s| s.grading());
    match gr {
        None => Ok(DMatrix::zeros(m.rows, m.cols)),
        Some(gr) => {
            let zd = vec![0.0; gr.d];
            let zl = vec![0.0; gr.l];
            m.evaluate(phi, &zd, &zl, &zd, &zl)
        }
    }
}

/// `ν_max(β(φ))` at each grid point, errors if `β(φ)` is not symmetric to `10⁻⁸`.
pub fn nu_max_profile(beta: &SeriesMatrix, grid: &PhiGrid) -> Result<Vec<(Vec<f64>, f64)>> {
    if let Some(s) = beta.data.first() {
        let k_phi = s.grading().k_phi as usize;
        if grid.n < 2 * k_phi + 1 {
            return Err(KamError::InvalidArgument(format!(
                "grid of {} points per dimension is below 2K_phi+1 = {}",
                grid.n,
                2 * k_phi + 1
            )));
        }
    }
    let mut out = Vec::with_capacity(grid.len());
    for phi in grid.iter() {
        let b = eval_phi_matrix(beta, phi)?;
        let asym = linalg::asymmetry(&b);
        if asym > 1e-8 {
            return Err(KamError::InvalidArgument(format!("beta(phi) not symmetric at {:?}: defect {:e}", phi, asym)));
        }
        out.push((phi.to_vec(), linalg::nu_max(&b)));
    }
    Ok(out)
}

/// Outcome of the `(v, δ)`-normal-form test.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormReport {
    pub holds: bool,
    pub w_matches: bool,
    /// Grid indices in the sublevel set where `g` or `∂_φ g` exceeds the tolerance.
    pub violations: Vec<usize>,
    pub max_g: f64,
}

/// `w = v` exactly and `g(φ,·)`, `∂_φ g(φ,·)` vanish (to `tol`) wherever `ν_max(β(φ)) ≤ δ`.
pub fn is_normal_form(n: &NormalFormTuple, v: &[f64], delta: f64, tol: f64, grid: &PhiGrid) -> Result<NormalFormReport> {
    let w_matches = n.w.len() == v.len() && n.w.iter().zip(v).all(|(a, b)| a == b);
    let profile = nu_max_profile(&n.beta, grid)?;
    let slice = SeriesSpace::new(n.space().grading().slice())?;
    let gr = n.space().grading();
    let dg: Vec<FTSeries> = (0..gr.l).map(|i| n.g.derivative(Var::Phi(i))).collect();
    let mut violations = Vec::new();
    let mut max_g = 0.0f64;
    for (i, (phi, nu)) in profile.iter().enumerate() {
        if *nu > delta {
            continue;
        }
        let mut worst = n.g.at_phi(phi, &slice).majorant();
        for d in &dg {
            worst = worst.max(d.at_phi(phi, &slice).majorant());
        }
        max_g = max_g.max(worst);
        if worst > tol {
            violations.push(i);
        }
    }
    Ok(NormalFormReport { holds: w_matches && violations.is_empty(), w_matches, violations, max_g })
}

/// Grid values of the bump function used to glue the local normal forms.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpPsi {
    pub t1: f64,
    pub t2: f64,
    /// Mollifier radius `a = (t₂ − t₁)/4`.
    pub a: f64,
    pub values: Vec<f64>,
    /// Worst deviation from 1 on `{ν < t₁}` and from 0 on `{ν > t₂}`.
    pub plateau_deviation: f64,
    pub nu: Vec<f64>,
}

fn offsets_within(grid: &PhiGrid, radius: f64) -> Vec<(Vec<i64>, f64)> {
    let h = grid.spacing();
    let reach = (radius / h).floor() as i64;
    let l = grid.l;
    let mut out = Vec::new();
    let side = (2 * reach + 1) as usize;
    let total = side.pow(l as u32);
    for t in 0..total {
        let mut rest = t;
        let mut c = vec![0i64; l];
        for s in (0..l).rev() {
            c[s] = (rest % side) as i64 - reach;
            rest /= side;
        }
        let dist = c.iter().map(|&v| (v as f64 * h).powi(2)).sum::<f64>().sqrt();
        if dist < radius || (reach == 0 && dist == 0.0) {
            out.push((c, dist));
        }
    }
    out
}

fn shifted(grid: &PhiGrid, base: &[usize], off: &[i64]) -> usize {
    let n = grid.n as i64;
    let c: Vec<usize> = base.iter().zip(off).map(|(&b, &o)| (((b as i64 + o) % n + n) % n) as usize).collect();
    grid.index(&c)
}

/// Bump `ψ` with `ψ = 1` where `ν < t₁` and `ψ = 0` where `ν > t₂`: the
/// indicator of `{ν < t₁ + a}` is turned into the tent `max(1 − dist/a, 0)` and
/// mollified with the compact-support kernel `exp(−1/(1 − |x/a|²))`.
pub fn bump_psi(profile: &[(Vec<f64>, f64)], grid: &PhiGrid, t1: f64, t2: f64) -> Result<BumpPsi> {
    if !(t2 > t1) {
        return Err(KamError::InvalidArgument(format!("bump thresholds need t2 > t1 (got {}, {})", t1, t2)));
    }
    if profile.len() != grid.len() {
        return Err(KamError::InvalidArgument("profile does not match the grid".into()));
    }
    let a = (t2 - t1) / 4.0;
    let nu: Vec<f64> = profile.iter().map(|p| p.1).collect();
    let in_u: Vec<bool> = nu.iter().map(|&v| v < t1 + a).collect();
    let offs = offsets_within(grid, a);
    let npts = grid.len();
    let coords: Vec<Vec<usize>> = (0..npts).map(|i| grid.coords(i)).collect();
    let mut tent = vec![0.0; npts];
    for i in 0..npts {
        if in_u[i] {
            tent[i] = 1.0;
            continue;
        }
        let mut best = f64::INFINITY;
        for (o, dist) in &offs {
            if *dist < best && in_u[shifted(grid, &coords[i], o)] {
                best = *dist;
            }
        }
        if best.is_finite() {
            tent[i] = (1.0 - best / a).max(0.0);
        }
    }
    let kernel: Vec<f64> = offs
        .iter()
        .map(|(_, dist)| {
            let x = dist / a;
            if x < 1.0 {
                (-1.0 / (1.0 - x * x)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let mut values = vec![0.0; npts];
    for i in 0..npts {
        let mut acc = 0.0;
        for ((o, _), w) in offs.iter().zip(&kernel) {
            acc += w * tent[shifted(grid, &coords[i], o)];
        }
        values[i] = if ksum > 0.0 { acc / ksum } else { tent[i] };
    }
    let mut dev = 0.0f64;
    for i in 0..npts {
        if nu[i] < t1 {
            dev = dev.max((values[i] - 1.0).abs());
        } else if nu[i] > t2 {
            dev = dev.max(values[i].abs());
        }
    }
    Ok(BumpPsi { t1, t2, a, values, plateau_deviation: dev, nu })
}

impl BumpPsi {
    pub fn is_identically_one(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0)
    }

    /// Band-limited series for ψ; errors if the projection leaves
    /// `[−tol, 1+tol]` or breaks a plateau by more than `tol` on the grid.
    pub fn to_series(&self, grid: &PhiGrid, space: &Arc<SeriesSpace>, radii: Radii, tol: f64) -> Result<(FTSeries, f64)> {
        let slice = SeriesSpace::new(space.grading().slice())?;
        let slices: Vec<FTSeries> = self.values.iter().map(|&v| FTSeries::constant(&slice, radii, v)).collect();
        let (s, _) = project_phi(grid, &slices, space, radii)?;
        let mut worst = 0.0f64;
        for (i, phi) in grid.iter().enumerate() {
            let v = eval_phi(&s, phi)?;
            let mut err = (v - self.values[i]).abs();
            if v < -tol || v > 1.0 + tol {
                err = err.max(tol * 2.0);
            }
            if self.nu[i] < self.t1 {
                err = err.max((v - 1.0).abs());
            } else if self.nu[i] > self.t2 {
                err = err.max(v.abs());
            }
            worst = worst.max(err);
        }
        if worst > tol {
            return Err(KamError::Projection(format!(
                "bump projection error {:e} above {:e}; increase K_phi",
                worst, tol
            )));
        }
        Ok((s, worst))
    }

    /// Finite-difference `C²` estimate `max|ψ| + Σ max|∂ψ| + Σ max|∂²ψ|` on the grid.
    pub fn c2_estimate(&self, grid: &PhiGrid) -> f64 {
        let h = grid.spacing();
        let l = grid.l;
        let n = self.values.len();
        let coords: Vec<Vec<usize>> = (0..n).map(|i| grid.coords(i)).collect();
        let at = |i: usize, o: &[i64]| self.values[shifted(grid, &coords[i], o)];
        let mut total = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..l {
            let mut e = vec![0i64; l];
            e[a] = 1;
            let ne: Vec<i64> = e.iter().map(|v| -v).collect();
            let mut m1 = 0.0f64;
            for i in 0..n {
                m1 = m1.max(((at(i, &e) - at(i, &ne)) / (2.0 * h)).abs());
            }
            total += m1;
            for b in 0..l {
                let mut m2 = 0.0f64;
                for i in 0..n {
                    let v = if a == b {
                        (at(i, &e) - 2.0 * self.values[i] + at(i, &ne)) / (h * h)
                    } else {
                        let mut pp = vec![0i64; l];
                        pp[a] = 1;
                        pp[b] = 1;
                        let mut pm = pp.clone();
                        pm[b] = -1;
                        let mut mp = pp.clone();
                        mp[a] = -1;
                        let mut mm = pm.clone();
                        mm[a] = -1;
                        (at(i, &pp) - at(i, &pm) - at(i, &mp) + at(i, &mm)) / (4.0 * h * h)
                    };
                    m2 = m2.max(v.abs());
                }
                total += m2;
            }
        }
        total
    }
}

fn matrix_norm(m: &SeriesMatrix, k2: u32) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.rows {
        let mut row = 0.0;
        for j in 0..m.cols {
            let s = m.get(i, j);
            let r = s.radii();
            row += s.ck_norm_estimate(2, k2, r.r, r.s);
        }
        worst = worst.max(row);
    }
    worst
}

/// Component norms `[|w|, ‖c‖, ‖β‖, ‖Γ‖, ‖M‖, ‖Q‖, ‖g‖, ‖h‖]`.
pub fn component_norms(n: &NormalFormTuple) -> [f64; 8] {
    let ck = |s: &FTSeries, k2: u32| {
        let r = s.radii();
        s.ck_norm_estimate(2, k2, r.r, r.s)
    };
    [
        n.w.iter().map(|v| v * v).sum::<f64>().sqrt(),
        ck(&n.c, 0),
        matrix_norm(&n.beta, 0),
        matrix_norm(&n.gamma, 0),
        matrix_norm(&n.m, 0),
        matrix_norm(&n.q, 0),
        ck(&n.g, 2),
        ck(&n.h, 2),
    ]
}

/// `‖𝐍₁ − 𝐍₂‖_{N_{r,s}}`.
pub fn normal_form_distance(n1: &NormalFormTuple, n2: &NormalFormTuple) -> Result<f64> {
    if n1.space().grading() != n2.space().grading() {
        return Err(KamError::GradingMismatch);
    }
    Ok(n1.sub(n2)?.norm())
}
