use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::series::{FTSeries, Radii};
use super::space::{SeriesSpace, Var};
use crate::error::{KamError, Result};

/// Dense matrix of series, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<FTSeries>,
}

impl SeriesMatrix {
    pub fn zeros(space: &Arc<SeriesSpace>, radii: Radii, rows: usize, cols: usize) -> Self {
        SeriesMatrix { rows, cols, data: vec![FTSeries::zero(space, radii); rows * cols] }
    }

    /// Constant matrix with the given real entries.
    pub fn constant(space: &Arc<SeriesSpace>, radii: Radii, m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(space, radii, m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = FTSeries::constant(space, radii, m[(i, j)]);
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> &FTSeries {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: FTSeries) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> SeriesMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j).clone());
            }
        }
        SeriesMatrix { rows: self.cols, cols: self.rows, data }
    }

    pub fn add(&self, o: &SeriesMatrix) -> Result<SeriesMatrix> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(KamError::InvalidArgument("matrix shape mismatch".into()));
        }
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a.checked_add(b)).collect::<Result<Vec<_>>>()?;
        Ok(SeriesMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, o: &SeriesMatrix) -> Result<SeriesMatrix> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(KamError::InvalidArgument("matrix shape mismatch".into()));
        }
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a.checked_sub(b)).collect::<Result<Vec<_>>>()?;
        Ok(SeriesMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, c: f64) -> SeriesMatrix {
        SeriesMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.scale_re(c)).collect() }
    }

    pub fn map<F: Fn(&FTSeries) -> FTSeries>(&self, f: F) -> SeriesMatrix {
        SeriesMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    /// Real matrix of values at a point (errors on reality violation).
    pub fn evaluate(&self, phi: &[f64], q: &[f64], x: &[f64], p: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.get(i, j).evaluate(phi, q, x, p, y)?;
            }
        }
        Ok(m)
    }

    /// Largest majorant among the entries.
    pub fn max_majorant(&self) -> f64 {
        self.data.iter().map(|s| s.majorant()).fold(0.0, f64::max)
    }
}

/// Quadratic coefficient blocks under the convention `½⟨d z, z⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct DBlocks {
    pub xx: SeriesMatrix,
    pub pp: SeriesMatrix,
    pub yy: SeriesMatrix,
    /// Rows `x`, columns `y`.
    pub xy: SeriesMatrix,
    /// Rows `p`, columns `x`.
    pub px: SeriesMatrix,
    /// Rows `p`, columns `y`.
    pub py: SeriesMatrix,
}

/// Partition of a series by Taylor degree: `a + bᵀz + ½⟨d z, z⟩ + O³`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorSplit {
    pub a: FTSeries,
    pub b_x: Vec<FTSeries>,
    pub b_p: Vec<FTSeries>,
    pub b_y: Vec<FTSeries>,
    pub d: DBlocks,
    pub remainder: FTSeries,
}

fn unit(n: usize, slot: usize) -> Vec<u8> {
    let mut e = vec![0u8; n];
    e[slot] = 1;
    e
}

fn pair(n: usize, a: usize, b: usize) -> Vec<u8> {
    let mut e = vec![0u8; n];
    e[a] += 1;
    e[b] += 1;
    e
}

/// Splits `f` by Taylor degree; the quadratic coefficients are symmetrized
/// so that the monomial `x₁²` contributes `d_xx[0][0] = 2`.
pub fn taylor_split(f: &FTSeries) -> TaylorSplit {
    let sp = f.space().clone();
    let g = sp.grading();
    let (l, d) = (g.l, g.d);
    let nt = g.n_taylor();
    let r = f.radii();
    let slot = |v: Var| sp.taylor_slot(v).unwrap();
    let coef1 = |v: Var| f.taylor_coeff(&unit(nt, slot(v)));
    let coef2 = |a: Var, b: Var| {
        let (sa, sb) = (slot(a), slot(b));
        let c = f.taylor_coeff(&pair(nt, sa, sb));
        if sa == sb {
            c.scale_re(2.0)
        } else {
            c
        }
    };
    let square = |n: usize, mk: &dyn Fn(usize) -> Var| {
        let mut m = SeriesMatrix::zeros(&sp, r, n, n);
        for i in 0..n {
            for j in i..n {
                let c = coef2(mk(i), mk(j));
                m.set(i, j, c.clone());
                m.set(j, i, c);
            }
        }
        m
    };
    let rect = |rows: usize, cols: usize, mr: &dyn Fn(usize) -> Var, mc: &dyn Fn(usize) -> Var| {
        let mut m = SeriesMatrix::zeros(&sp, r, rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, coef2(mr(i), mc(j)));
            }
        }
        m
    };
    let dblocks = DBlocks {
        xx: square(l, &Var::X),
        pp: square(d, &Var::P),
        yy: square(l, &Var::Y),
        xy: rect(l, l, &Var::X, &Var::Y),
        px: rect(d, l, &Var::P, &Var::X),
        py: rect(d, l, &Var::P, &Var::Y),
    };
    TaylorSplit {
        a: f.taylor_coeff(&vec![0u8; nt]),
        b_x: (0..l).map(|i| coef1(Var::X(i))).collect(),
        b_p: (0..d).map(|i| coef1(Var::P(i))).collect(),
        b_y: (0..l).map(|i| coef1(Var::Y(i))).collect(),
        d: dblocks,
        remainder: f.degree_at_least(3).with_loss(0.0),
    }
}

impl TaylorSplit {
    /// Rebuilds the series from its parts.
    pub fn reassemble(&self) -> FTSeries {
        let sp = self.a.space().clone();
        let g = sp.grading();
        let (l, d) = (g.l, g.d);
        let nt = g.n_taylor();
        let slot = |v: Var| sp.taylor_slot(v).unwrap();
        let mut terms: Vec<(u32, crate::fourier_taylor::C64)> = Vec::new();
        let mut push = |s: &FTSeries, alpha: &[u8], c: f64| {
            let m = s.times_monomial(alpha).scale_re(c);
            terms.extend_from_slice(m.raw_terms());
        };
        push(&self.a, &vec![0u8; nt], 1.0);
        for i in 0..l {
            push(&self.b_x[i], &unit(nt, slot(Var::X(i))), 1.0);
            push(&self.b_y[i], &unit(nt, slot(Var::Y(i))), 1.0);
        }
        for i in 0..d {
            push(&self.b_p[i], &unit(nt, slot(Var::P(i))), 1.0);
        }
        let mut sq = |m: &SeriesMatrix, mk: &dyn Fn(usize) -> Var| {
            for i in 0..m.rows {
                push(m.get(i, i), &pair(nt, slot(mk(i)), slot(mk(i))), 0.5);
                for j in i + 1..m.cols {
                    push(m.get(i, j), &pair(nt, slot(mk(i)), slot(mk(j))), 1.0);
                }
            }
        };
        sq(&self.d.xx, &Var::X);
        sq(&self.d.pp, &Var::P);
        sq(&self.d.yy, &Var::Y);
        let mut re = |m: &SeriesMatrix, mr: &dyn Fn(usize) -> Var, mc: &dyn Fn(usize) -> Var| {
            for i in 0..m.rows {
                for j in 0..m.cols {
                    push(m.get(i, j), &pair(nt, slot(mr(i)), slot(mc(j))), 1.0);
                }
            }
        };
        re(&self.d.xy, &Var::X, &Var::Y);
        re(&self.d.px, &Var::P, &Var::X);
        re(&self.d.py, &Var::P, &Var::Y);
        terms.extend_from_slice(self.remainder.raw_terms());
        FTSeries::from_terms(&sp, self.a.radii(), terms)
    }
}
