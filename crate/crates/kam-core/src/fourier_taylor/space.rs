use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{KamError, Result};

pub(crate) const NONE: u32 = u32::MAX;
const MAX_CUBE: usize = 1 << 23;
const MAX_MONO_TABLE: usize = 1 << 22;

/// Truncation orders of a Fourier–Taylor series.
///
/// `d` angles `q`, `l` parameters `φ` and normal pairs `(x, y)`, `d` actions `p`.
/// Fourier orders are ℓ¹ bounds on the mode vectors; `degree` bounds the total
/// Taylor degree in `(x, p, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grading {
    pub d: usize,
    pub l: usize,
    pub k_q: u32,
    pub k_phi: u32,
    pub degree: u32,
}

impl Grading {
    pub fn new(d: usize, l: usize, k_q: u32, k_phi: u32, degree: u32) -> Result<Self> {
        let g = Grading { d, l, k_q, k_phi, degree };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 || self.l < 1 {
            return Err(KamError::InvalidGrading(format!("d = {}, l = {} must be >= 1", self.d, self.l)));
        }
        if self.k_q < 1 {
            return Err(KamError::InvalidGrading("K_q must be >= 1".into()));
        }
        if self.degree < 3 {
            return Err(KamError::InvalidGrading(format!("D = {} must be >= 3", self.degree)));
        }
        Ok(())
    }

    /// Number of Taylor variables `(x, p, y)`.
    pub fn n_taylor(&self) -> usize {
        2 * self.l + self.d
    }

    /// Same grading without φ-modes, used for values at a fixed parameter.
    pub fn slice(&self) -> Grading {
        Grading { k_phi: 0, ..*self }
    }
}

/// A coordinate of the extended phase space `T^l × T^d × B^l × B^d × B^l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Phi(usize),
    Q(usize),
    X(usize),
    P(usize),
    Y(usize),
}

/// Integer lattice points of an ℓ¹ ball, lexicographically sorted, with an
/// offset cube for O(dim) lookup of sums.
#[derive(Debug)]
pub(crate) struct ModeSet {
    pub dim: usize,
    pub bound: u32,
    pub modes: Vec<i32>,
    pub norms: Vec<u32>,
    pub codes: Vec<u32>,
    pub neg: Vec<u32>,
    base: u32,
    code_zero: u32,
    cube: Vec<u32>,
}

pub(crate) fn ball(dim: usize, bound: i32) -> Vec<Vec<i32>> {
    fn rec(dim: usize, left: i32, prefix: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for v in -left..=left {
            prefix.push(v);
            rec(dim, left - v.abs(), prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, bound, &mut Vec::new(), &mut out);
    out
}

impl ModeSet {
    fn new(dim: usize, bound: u32) -> Result<Self> {
        let base = 4 * bound + 1;
        let mut cube_len: usize = 1;
        for _ in 0..dim {
            cube_len = cube_len.saturating_mul(base as usize);
        }
        if cube_len > MAX_CUBE {
            return Err(KamError::InvalidGrading(format!(
                "mode lattice of dimension {} and order {} is too large",
                dim, bound
            )));
        }
        let pts = ball(dim, bound as i32);
        let off = 2 * bound as i32;
        let code_of = |v: &[i32]| -> u32 {
            let mut c: u32 = 0;
            for i in (0..dim).rev() {
                c = c * base + (v[i] + off) as u32;
            }
            c
        };
        let zero = vec![0i32; dim];
        let code_zero = code_of(&zero);
        let mut cube = vec![NONE; cube_len];
        let mut modes = Vec::with_capacity(pts.len() * dim);
        let mut norms = Vec::with_capacity(pts.len());
        let mut codes = Vec::with_capacity(pts.len());
        for (i, p) in pts.iter().enumerate() {
            let c = code_of(p);
            cube[c as usize] = i as u32;
            modes.extend_from_slice(p);
            norms.push(p.iter().map(|v| v.unsigned_abs()).sum());
            codes.push(c);
        }
        let mut neg = Vec::with_capacity(pts.len());
        for p in pts.iter() {
            let q: Vec<i32> = p.iter().map(|v| -v).collect();
            neg.push(cube[code_of(&q) as usize]);
        }
        Ok(ModeSet { dim, bound, modes, norms, codes, neg, base, code_zero, cube })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn mode(&self, i: usize) -> &[i32] {
        &self.modes[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the sum of modes `a` and `b`, or `NONE` when outside the ball.
    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        let c = self.codes[a as usize] + self.codes[b as usize] - self.code_zero;
        self.cube[c as usize]
    }

    pub fn index_of(&self, v: &[i32]) -> Option<u32> {
        if v.len() != self.dim {
            return None;
        }
        let n: u32 = v.iter().map(|x| x.unsigned_abs()).sum();
        if n > self.bound {
            return None;
        }
        let off = 2 * self.bound as i32;
        let mut c: u32 = 0;
        for i in (0..self.dim).rev() {
            c = c * self.base + (v[i] + off) as u32;
        }
        let idx = self.cube[c as usize];
        if idx == NONE {
            None
        } else {
            Some(idx)
        }
    }

    pub fn zero_index(&self) -> u32 {
        self.cube[self.code_zero as usize]
    }

    /// ℓ¹ norm of the sum of two modes (used for dropped-mass accounting).
    pub fn sum_norm(&self, a: u32, b: u32) -> u32 {
        let ma = self.mode(a as usize);
        let mb = self.mode(b as usize);
        ma.iter().zip(mb).map(|(x, y)| (x + y).unsigned_abs()).sum()
    }
}

/// Monomials in the Taylor variables with total degree bounded by `D`,
/// graded-lexicographically sorted.
#[derive(Debug)]
pub(crate) struct MonoSet {
    pub nv: usize,
    pub exps: Vec<u8>,
    pub degs: Vec<u32>,
    pub mul: Vec<u32>,
    /// For each variable, `(index of α − e_v, α_v)` or `NONE`.
    pub deriv: Vec<(u32, u32)>,
}

fn monomials(nv: usize, deg: u32) -> Vec<Vec<u8>> {
    fn rec(nv: usize, left: u32, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == nv {
            out.push(prefix.clone());
            return;
        }
        for v in (0..=left).rev() {
            prefix.push(v as u8);
            rec(nv, left - v, prefix, out);
            prefix.pop();
        }
    }
    let mut all = Vec::new();
    for total in 0..=deg {
        let mut layer = Vec::new();
        rec(nv, total, &mut Vec::new(), &mut layer);
        layer.retain(|m| m.iter().map(|&e| e as u32).sum::<u32>() == total);
        all.extend(layer);
    }
    all
}

impl MonoSet {
    fn new(nv: usize, deg: u32) -> Result<Self> {
        let list = monomials(nv, deg);
        let nm = list.len();
        if nm * nm > MAX_MONO_TABLE {
            return Err(KamError::InvalidGrading(format!(
                "{} Taylor variables at degree {} is too large",
                nv, deg
            )));
        }
        let find = |e: &[u8]| -> u32 {
            match list.binary_search_by(|m| {
                let dm: u32 = m.iter().map(|&x| x as u32).sum();
                let de: u32 = e.iter().map(|&x| x as u32).sum();
                dm.cmp(&de).then_with(|| e.cmp(m))
            }) {
                Ok(i) => i as u32,
                Err(_) => NONE,
            }
        };
        let mut exps = Vec::with_capacity(nm * nv);
        let mut degs = Vec::with_capacity(nm);
        for m in list.iter() {
            exps.extend_from_slice(m);
            degs.push(m.iter().map(|&x| x as u32).sum());
        }
        let mut mul = vec![NONE; nm * nm];
        let mut buf = vec![0u8; nv];
        for a in 0..nm {
            for b in 0..nm {
                if degs[a] + degs[b] > deg {
                    continue;
                }
                for v in 0..nv {
                    buf[v] = list[a][v] + list[b][v];
                }
                mul[a * nm + b] = find(&buf);
            }
        }
        let mut deriv = vec![(NONE, 0u32); nv * nm];
        for v in 0..nv {
            for a in 0..nm {
                if list[a][v] > 0 {
                    buf.copy_from_slice(&list[a]);
                    buf[v] -= 1;
                    deriv[v * nm + a] = (find(&buf), list[a][v] as u32);
                }
            }
        }
        Ok(MonoSet { nv, exps, degs, mul, deriv })
    }

    pub fn len(&self) -> usize {
        self.degs.len()
    }

    pub fn exps(&self, i: usize) -> &[u8] {
        &self.exps[i * self.nv..(i + 1) * self.nv]
    }

    pub fn index_of(&self, e: &[u8]) -> Option<u32> {
        if e.len() != self.nv {
            return None;
        }
        let de: u32 = e.iter().map(|&x| x as u32).sum();
        let start = self.degs.partition_point(|&d| d < de);
        let end = self.degs.partition_point(|&d| d <= de);
        for i in start..end {
            if self.exps(i) == e {
                return Some(i as u32);
            }
        }
        None
    }
}

/// Index tables shared by all series of one grading.
#[derive(Debug)]
pub struct SeriesSpace {
    pub(crate) grading: Grading,
    pub(crate) js: ModeSet,
    pub(crate) ks: ModeSet,
    pub(crate) ms: MonoSet,
}

impl SeriesSpace {
    pub fn new(grading: Grading) -> Result<alloc::sync::Arc<Self>> {
        grading.validate()?;
        let js = ModeSet::new(grading.l, grading.k_phi)?;
        let ks = ModeSet::new(grading.d, grading.k_q)?;
        let ms = MonoSet::new(grading.n_taylor(), grading.degree)?;
        let total = js.len() as u64 * ks.len() as u64 * ms.len() as u64;
        if total >= u32::MAX as u64 {
            return Err(KamError::InvalidGrading("index space exceeds 32-bit keys".into()));
        }
        Ok(alloc::sync::Arc::new(SeriesSpace { grading, js, ks, ms }))
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    pub fn size(&self) -> usize {
        self.js.len() * self.ks.len() * self.ms.len()
    }

    pub fn n_monomials(&self) -> usize {
        self.ms.len()
    }

    pub fn n_q_modes(&self) -> usize {
        self.ks.len()
    }

    pub fn n_phi_modes(&self) -> usize {
        self.js.len()
    }

    #[inline]
    pub(crate) fn pack(&self, j: u32, k: u32, m: u32) -> u32 {
        (j * self.ks.len() as u32 + k) * self.ms.len() as u32 + m
    }

    #[inline]
    pub(crate) fn unpack(&self, idx: u32) -> (u32, u32, u32) {
        let nm = self.ms.len() as u32;
        let nk = self.ks.len() as u32;
        let m = idx % nm;
        let rest = idx / nm;
        (rest / nk, rest % nk, m)
    }

    /// Packed index of `(j, k, α)`, if within the grading bounds.
    pub fn key(&self, j: &[i32], k: &[i32], alpha: &[u8]) -> Option<u32> {
        let ji = self.js.index_of(j)?;
        let ki = self.ks.index_of(k)?;
        let mi = self.ms.index_of(alpha)?;
        Some(self.pack(ji, ki, mi))
    }

    /// Packed index of the conjugate partner `(−j, −k, α)`.
    #[inline]
    pub(crate) fn conj_key(&self, idx: u32) -> u32 {
        let (j, k, m) = self.unpack(idx);
        self.pack(self.js.neg[j as usize], self.ks.neg[k as usize], m)
    }

    /// Taylor variable slot for `x_i`, `p_i`, `y_i`.
    pub(crate) fn taylor_slot(&self, v: Var) -> Option<usize> {
        let g = &self.grading;
        match v {
            Var::X(i) if i < g.l => Some(i),
            Var::P(i) if i < g.d => Some(g.l + i),
            Var::Y(i) if i < g.l => Some(g.l + g.d + i),
            _ => None,
        }
    }

    pub fn mode_phi(&self, j: u32) -> &[i32] {
        self.js.mode(j as usize)
    }

    pub fn mode_q(&self, k: u32) -> &[i32] {
        self.ks.mode(k as usize)
    }

    pub fn monomial(&self, m: u32) -> &[u8] {
        self.ms.exps(m as usize)
    }

    pub fn monomial_degree(&self, m: u32) -> u32 {
        self.ms.degs[m as usize]
    }

    /// Weight `e^{(|j|₁+|k|₁) r} s^{|α|}` of a packed index.
    #[inline]
    pub(crate) fn weight(&self, idx: u32, r: f64, s: f64) -> f64 {
        use num_traits::Float;
        let (j, k, m) = self.unpack(idx);
        let n = (self.js.norms[j as usize] + self.ks.norms[k as usize]) as f64;
        (n * r).exp() * s.powi(self.ms.degs[m as usize] as i32)
    }
}
