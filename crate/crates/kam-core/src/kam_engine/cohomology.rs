//! Solution of the cohomological equation on one parameter slice.
//!
//! With `N − g = c + ⟨ω,p⟩ + ½pMp + ½|y|² + xᵀΓp + ½xᵀβx + h` frozen at a
//! value of φ, the generator `F = A + B·z + ½zᵀDz` together with the
//! counter-term `α` and the drift `v` makes
//! `f − ⟨α, φ_x⟩ + {N − g, F + v·q}` a normal form up to degree two.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{KamError, Result};
use crate::fourier_taylor::{taylor_split, DBlocks, FTSeries, SeriesMatrix, TaylorSplit, Var};
use crate::linalg;
use crate::small_divisors::{divisor, solve_l1, solve_l2, DiophantineWitness};
use crate::symplectic::{bracket_affine, GeneratingFunction};

/// Largest condition number accepted for the `(α, v, μ)` system.
pub const MAX_CONDITION: f64 = 1e8;

/// Data of one slice `φ = const`.
#[derive(Debug, Clone)]
pub struct SliceData {
    pub beta: DMatrix<f64>,
    /// `l × d`.
    pub gamma: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// `T(N) − g` on the slice.
    pub n0: FTSeries,
    pub f: FTSeries,
    /// The `x`-components of the accumulated map.
    pub phi_x: Vec<FTSeries>,
}

/// Generator and counter-terms on one slice.
#[derive(Debug, Clone)]
pub struct SliceSolution {
    pub alpha: DVector<f64>,
    pub v: DVector<f64>,
    /// `M_q B_y`.
    pub mu: DVector<f64>,
    /// `F` without the `v·q` part.
    pub f: FTSeries,
    pub condition: f64,
}

impl SliceSolution {
    pub fn scaled(&self, c: f64) -> SliceSolution {
        SliceSolution {
            alpha: &self.alpha * c,
            v: &self.v * c,
            mu: &self.mu * c,
            f: self.f.scale_re(c),
            condition: self.condition,
        }
    }

    pub fn generator(&self) -> Result<GeneratingFunction> {
        let sp = self.f.space();
        let r = self.f.radii();
        GeneratingFunction::new(self.f.clone(), self.v.iter().map(|&v| FTSeries::constant(sp, r, v)).collect())
    }
}

struct Linear {
    a: FTSeries,
    bx: Vec<FTSeries>,
    bp: Vec<FTSeries>,
    by: Vec<FTSeries>,
}

fn unit(n: usize, i: usize) -> Vec<u8> {
    let mut e = vec![0u8; n];
    e[i] = 1;
    e
}

fn linear_parts(s: &FTSeries) -> Linear {
    let sp = s.space();
    let g = sp.grading();
    let nt = g.n_taylor();
    let c = |v: Var| s.taylor_coeff(&unit(nt, sp.taylor_slot(v).expect("variable inside grading")));
    Linear {
        a: s.taylor_coeff(&vec![0u8; nt]),
        bx: (0..g.l).map(|i| c(Var::X(i))).collect(),
        bp: (0..g.d).map(|i| c(Var::P(i))).collect(),
        by: (0..g.l).map(|i| c(Var::Y(i))).collect(),
    }
}

fn mean(s: &FTSeries) -> f64 {
    s.constant_term().re
}

struct FirstOrder {
    gen: GeneratingFunction,
    resid: DVector<f64>,
}

struct Affine<'a> {
    data: &'a SliceData,
    witness: &'a DiophantineWitness,
    k: u32,
    f: Linear,
    phx: Vec<Linear>,
    phx_low: Vec<FTSeries>,
}

impl<'a> Affine<'a> {
    fn new(data: &'a SliceData, witness: &'a DiophantineWitness, k: u32) -> Self {
        Affine {
            data,
            witness,
            k,
            f: linear_parts(&data.f),
            phx: data.phi_x.iter().map(linear_parts).collect(),
            phx_low: data.phi_x.iter().map(|s| s.truncate_degree(1)).collect(),
        }
    }

    /// Degree ≤ 1 generator and the residuals of the three mean conditions
    /// for a trial `u = (α, v, μ)`.
    fn eval(&self, u: &DVector<f64>) -> Result<FirstOrder> {
        let sp = self.data.f.space();
        let radii = self.data.f.radii();
        let g = sp.grading();
        let (d, l) = (g.d, g.l);
        let nt = g.n_taylor();
        let alpha = u.rows(0, l);
        let v = u.rows(l, d);
        let mu = u.rows(l + d, l);
        let (beta, gamma, m) = (&self.data.beta, &self.data.gamma, &self.data.m);

        let mut a = self.f.a.clone();
        let mut bx = self.f.bx.clone();
        let mut bp = self.f.bp.clone();
        let mut by = self.f.by.clone();
        for i in 0..l {
            if alpha[i] == 0.0 {
                continue;
            }
            let ph = &self.phx[i];
            a = a.axpy(-alpha[i], &ph.a);
            for t in 0..l {
                bx[t] = bx[t].axpy(-alpha[i], &ph.bx[t]);
                by[t] = by[t].axpy(-alpha[i], &ph.by[t]);
            }
            for t in 0..d {
                bp[t] = bp[t].axpy(-alpha[i], &ph.bp[t]);
            }
        }
        let big_a = solve_l1(&a, self.witness)?;
        let da: Vec<FTSeries> = (0..d).map(|j| big_a.derivative(Var::Q(j))).collect();
        let rx: Vec<FTSeries> = (0..l)
            .map(|t| {
                let mut s = bx[t].clone();
                for j in 0..d {
                    if gamma[(t, j)] != 0.0 {
                        s = s.axpy(-gamma[(t, j)], &da[j]);
                    }
                }
                s
            })
            .collect();
        let (big_bx, big_by_t) = solve_l2(&rx, &by, beta, self.witness, self.k)?;
        let mut big_bp = Vec::with_capacity(d);
        for i in 0..d {
            let mut s = bp[i].clone();
            for j in 0..d {
                if m[(i, j)] != 0.0 {
                    s = s.axpy(-m[(i, j)], &da[j]);
                }
            }
            for t in 0..l {
                if gamma[(t, i)] != 0.0 {
                    s = s.axpy(gamma[(t, i)], &big_by_t[t]);
                }
            }
            big_bp.push(solve_l1(&s, self.witness)?);
        }
        let slot = |v: Var| sp.taylor_slot(v).expect("variable inside grading");
        let mut gen_f = big_a;
        for t in 0..l {
            gen_f = gen_f.checked_add(&big_bx[t].times_monomial(&unit(nt, slot(Var::X(t)))))?;
            let byt = big_by_t[t].checked_add(&FTSeries::constant(sp, radii, mu[t]))?;
            gen_f = gen_f.checked_add(&byt.times_monomial(&unit(nt, slot(Var::Y(t)))))?;
        }
        for i in 0..d {
            gen_f = gen_f.checked_add(&big_bp[i].times_monomial(&unit(nt, slot(Var::P(i)))))?;
        }
        let gen = GeneratingFunction::new(gen_f, v.iter().map(|&c| FTSeries::constant(sp, radii, c)).collect())?;

        let mut resid = DVector::zeros(2 * l + d);
        for t in 0..l {
            let mut r = mean(&bx[t]);
            for j in 0..d {
                r -= gamma[(t, j)] * v[j];
            }
            for s in 0..l {
                r += beta[(t, s)] * mu[s];
            }
            resid[t] = r;
        }
        for i in 0..d {
            let mut r = mean(&bp[i]);
            for j in 0..d {
                r -= m[(i, j)] * v[j];
            }
            for t in 0..l {
                r += gamma[(t, i)] * mu[t];
            }
            resid[l + i] = r;
        }
        for i in 0..l {
            let low = &self.phx_low[i];
            let moved = low.checked_add(&bracket_affine(low, &gen)?)?;
            resid[l + d + i] = mean(&moved.degree_part(0));
        }
        Ok(FirstOrder { gen, resid })
    }
}

fn sym_index(l: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * l - a * (a + 1) / 2 + b
}

/// Coefficients `(k ↦ value)` of the entries of a degree-0 matrix series.
fn by_mode(ms: &[&SeriesMatrix]) -> BTreeMap<u32, Vec<Vec<Complex64>>> {
    let mut out: BTreeMap<u32, Vec<Vec<Complex64>>> = BTreeMap::new();
    for (b, mat) in ms.iter().enumerate() {
        for (e, s) in mat.data.iter().enumerate() {
            for (k, _, c) in s.slice_terms() {
                let entry = out.entry(k).or_insert_with(|| ms.iter().map(|m| vec![Complex64::zero(); m.data.len()]).collect());
                entry[b][e] += c;
            }
        }
    }
    out
}

fn matrix_from_modes(
    template: &FTSeries,
    rows: usize,
    cols: usize,
    modes: &BTreeMap<u32, Vec<Complex64>>,
) -> SeriesMatrix {
    let sp = template.space();
    let j0 = sp.js.zero_index();
    let mut out = SeriesMatrix::zeros(sp, template.radii(), rows, cols);
    for e in 0..rows * cols {
        let terms: Vec<(u32, Complex64)> = modes
            .iter()
            .filter(|(_, v)| v[e] != Complex64::zero())
            .map(|(&k, v)| (sp.pack(j0, k, 0), v[e]))
            .collect();
        out.data[e] = FTSeries::from_terms(sp, template.radii(), terms);
    }
    out
}

/// Solves `∂D_yy + Z + Zᵀ = R_yy`, `∂Z − βD_yy + D_xx = R_xy`,
/// `∂D_xx − βZᵀ − Zβ = R_xx − M_q(·)` with `D_xx, D_yy` symmetric and
/// zero modes `Z = ½R_yy`, `D_yy = 0`, `D_xx = sym R_xy`.
fn solve_xy_block(
    r: &DBlocks,
    beta: &DMatrix<f64>,
    witness: &DiophantineWitness,
) -> Result<(SeriesMatrix, SeriesMatrix, SeriesMatrix)> {
    let l = beta.nrows();
    let ns = l * (l + 1) / 2;
    let n = 2 * ns + l * l;
    let template = r.xx.data[0].clone();
    let sp = template.space().clone();
    let k0 = sp.ks.zero_index();
    let modes = by_mode(&[&r.yy, &r.xy, &r.xx]);
    let mut dyy: BTreeMap<u32, Vec<Complex64>> = BTreeMap::new();
    let mut dxx: BTreeMap<u32, Vec<Complex64>> = BTreeMap::new();
    let mut zz: BTreeMap<u32, Vec<Complex64>> = BTreeMap::new();
    let cz = |i: usize, j: usize| 2 * ns + i * l + j;
    let cy = |i: usize, j: usize| sym_index(l, i, j);
    let cx = |i: usize, j: usize| ns + sym_index(l, i, j);
    for (k, rhs) in modes {
        let (ryy, rxy, rxx) = (&rhs[0], &rhs[1], &rhs[2]);
        if k == k0 {
            let mut z = vec![Complex64::zero(); l * l];
            let mut x = vec![Complex64::zero(); l * l];
            for i in 0..l {
                for j in 0..l {
                    z[i * l + j] = ryy[i * l + j] * 0.5;
                    x[i * l + j] = (rxy[i * l + j] + rxy[j * l + i]) * 0.5;
                }
            }
            zz.insert(k, z);
            dxx.insert(k, x);
            continue;
        }
        let mode = sp.mode_q(k).to_vec();
        let w = divisor(witness, &mode)?;
        let lam = Complex64::new(0.0, w);
        let one = Complex64::new(1.0, 0.0);
        let mut a = DMatrix::<Complex64>::zeros(n, n);
        let mut b = DVector::<Complex64>::zeros(n);
        for i in 0..l {
            for j in i..l {
                // yy
                let row = cy(i, j);
                a[(row, cy(i, j))] += lam;
                a[(row, cz(i, j))] += one;
                a[(row, cz(j, i))] += one;
                b[row] = ryy[i * l + j];
                // xx
                let row = cx(i, j);
                a[(row, cx(i, j))] += lam;
                for s in 0..l {
                    a[(row, cz(j, s))] -= Complex64::new(beta[(i, s)], 0.0);
                    a[(row, cz(i, s))] -= Complex64::new(beta[(s, j)], 0.0);
                }
                b[row] = rxx[i * l + j];
            }
        }
        for i in 0..l {
            for j in 0..l {
                let row = cz(i, j);
                a[(row, cz(i, j))] += lam;
                for s in 0..l {
                    a[(row, cy(s, j))] -= Complex64::new(beta[(i, s)], 0.0);
                }
                a[(row, cx(i, j))] += one;
                b[row] = rxy[i * l + j];
            }
        }
        let sol = linalg::solve_complex(a, &b)
            .map_err(|_| KamError::Precondition { mode: mode.clone(), detail: "singular quadratic block".into() })?;
        let mut y = vec![Complex64::zero(); l * l];
        let mut x = vec![Complex64::zero(); l * l];
        let mut z = vec![Complex64::zero(); l * l];
        for i in 0..l {
            for j in 0..l {
                y[i * l + j] = sol[cy(i, j)];
                x[i * l + j] = sol[cx(i, j)];
                z[i * l + j] = sol[cz(i, j)];
            }
        }
        dyy.insert(k, y);
        dxx.insert(k, x);
        zz.insert(k, z);
    }
    Ok((
        matrix_from_modes(&template, l, l, &dxx),
        matrix_from_modes(&template, l, l, &dyy),
        matrix_from_modes(&template, l, l, &zz),
    ))
}

/// Quadratic part `½zᵀDz` of the generator, given the degree-two part `R`
/// of `f − ⟨α, φ_x⟩ + {N − g, F_{≤1} + v·q}`.
fn solve_quadratic(
    r: &DBlocks,
    data: &SliceData,
    witness: &DiophantineWitness,
    k: u32,
) -> Result<FTSeries> {
    let (beta, gamma) = (&data.beta, &data.gamma);
    let l = beta.nrows();
    let d = gamma.ncols();
    let (dxx, dyy, z) = solve_xy_block(r, beta, witness)?;
    let sp = data.f.space().clone();
    let radii = data.f.radii();
    let mut dpx = SeriesMatrix::zeros(&sp, radii, d, l);
    let mut dpy = SeriesMatrix::zeros(&sp, radii, d, l);
    for i in 0..d {
        let mut rx = Vec::with_capacity(l);
        let mut ry = Vec::with_capacity(l);
        for t in 0..l {
            let mut sx = r.px.get(i, t).clone();
            let mut sy = r.py.get(i, t).clone();
            for s in 0..l {
                if gamma[(s, i)] != 0.0 {
                    sx = sx.axpy(gamma[(s, i)], z.get(t, s));
                    sy = sy.axpy(gamma[(s, i)], dyy.get(s, t));
                }
            }
            rx.push(sx);
            ry.push(sy);
        }
        let (u, w) = solve_l2(&rx, &ry, beta, witness, k)?;
        for t in 0..l {
            dpx.set(i, t, u[t].clone());
            dpy.set(i, t, w[t].clone());
        }
    }
    let mut dpp = SeriesMatrix::zeros(&sp, radii, d, d);
    for i in 0..d {
        for j in i..d {
            let mut s = r.pp.get(i, j).clone();
            for t in 0..l {
                if gamma[(t, i)] != 0.0 {
                    s = s.axpy(gamma[(t, i)], dpy.get(j, t));
                }
                if gamma[(t, j)] != 0.0 {
                    s = s.axpy(gamma[(t, j)], dpy.get(i, t));
                }
            }
            let sol = solve_l1(&s, witness)?;
            dpp.set(i, j, sol.clone());
            dpp.set(j, i, sol);
        }
    }
    let zero = FTSeries::zero(&sp, radii);
    let split = TaylorSplit {
        a: zero.clone(),
        b_x: vec![zero.clone(); l],
        b_p: vec![zero.clone(); d],
        b_y: vec![zero.clone(); l],
        d: DBlocks { xx: dxx, pp: dpp, yy: dyy, xy: z, px: dpx, py: dpy },
        remainder: zero,
    };
    Ok(split.reassemble())
}

/// Solves the cohomological equation on one slice.
///
/// The three mean conditions
/// `M_q b_x − Γv + βμ = 0`, `M_q b_p − Mv + Γᵀμ = 0` and
/// `M_q(φ_x + {φ_x, F_{≤1} + v·q})(z = 0) = 0` are affine in `(α, v, μ)`;
/// the system is assembled from unit trials and solved directly.
pub fn solve_slice(data: &SliceData, witness: &DiophantineWitness, k: u32) -> Result<SliceSolution> {
    let g = data.f.grading();
    let (d, l) = (g.d, g.l);
    if data.beta.shape() != (l, l) || data.gamma.shape() != (l, d) || data.m.shape() != (d, d) || data.phi_x.len() != l {
        return Err(KamError::InvalidArgument("slice data has inconsistent shapes".into()));
    }
    let aff = Affine::new(data, witness, k);
    let nu = 2 * l + d;
    let base = aff.eval(&DVector::zeros(nu))?;
    let mut jac = DMatrix::zeros(nu, nu);
    for c in 0..nu {
        let mut e = DVector::zeros(nu);
        e[c] = 1.0;
        let r = aff.eval(&e)?.resid - &base.resid;
        jac.set_column(c, &r);
    }
    let cond = linalg::condition_number(&jac);
    if !(cond <= MAX_CONDITION) {
        return Err(KamError::IllConditioned(cond));
    }
    let u = linalg::solve_real(jac, &(-&base.resid))?;
    let first = aff.eval(&u)?;
    let alpha = u.rows(0, l).into_owned();
    let v = u.rows(l, d).into_owned();
    let mu = u.rows(l + d, l).into_owned();

    let mut l1 = data.f.clone();
    for i in 0..l {
        l1 = l1.axpy(-alpha[i], &data.phi_x[i]);
    }
    l1 = l1.checked_add(&bracket_affine(&data.n0, &first.gen)?)?;
    let r = taylor_split(&l1.degree_part(2)).d;
    let quad = solve_quadratic(&r, data, witness, k)?;
    let f = first.gen.f.checked_add(&quad)?;
    if f.reality_defect() > 1e-9 * (1.0 + f.max_abs_coeff()) {
        return Err(KamError::InvalidArgument(format!("generator lost reality: {:e}", f.reality_defect())));
    }
    Ok(SliceSolution { alpha, v, mu, f: f.realify(), condition: cond })
}

/// Normal-form part of `L` on a slice: `(c̄, β̄, Γ̄, M̄)` from the q-means of
/// the degree-0, `xx`, `px` and `pp` parts, and the degree ≥ 3 part.
#[derive(Debug, Clone)]
pub struct NormalPart {
    pub c: f64,
    pub beta: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub h: FTSeries,
    /// `c̄ + ½xβ̄x + xΓ̄p + ½pM̄p + h̄` as a series.
    pub series: FTSeries,
}

pub fn normal_part(lser: &FTSeries) -> NormalPart {
    let sp = lser.space().clone();
    let g = sp.grading();
    let (d, l) = (g.d, g.l);
    let radii = lser.radii();
    let split = taylor_split(lser);
    let c = mean(&split.a);
    let mean_m = |m: &SeriesMatrix| DMatrix::from_fn(m.rows, m.cols, |i, j| mean(m.get(i, j)));
    let beta = linalg::symmetrize(&mean_m(&split.d.xx));
    let m = linalg::symmetrize(&mean_m(&split.d.pp));
    let px = mean_m(&split.d.px);
    let gamma = px.transpose();
    let h = lser.degree_at_least(3);
    let zero = FTSeries::zero(&sp, radii);
    let ts = TaylorSplit {
        a: FTSeries::constant(&sp, radii, c),
        b_x: vec![zero.clone(); l],
        b_p: vec![zero.clone(); d],
        b_y: vec![zero.clone(); l],
        d: DBlocks {
            xx: SeriesMatrix::constant(&sp, radii, &beta),
            pp: SeriesMatrix::constant(&sp, radii, &m),
            yy: SeriesMatrix::zeros(&sp, radii, l, l),
            xy: SeriesMatrix::zeros(&sp, radii, l, l),
            px: SeriesMatrix::constant(&sp, radii, &px),
            py: SeriesMatrix::zeros(&sp, radii, d, l),
        },
        remainder: h.clone(),
    };
    NormalPart { c, beta, gamma, m, h, series: ts.reassemble() }
}
