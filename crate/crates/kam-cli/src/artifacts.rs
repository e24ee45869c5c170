//! JSON and CSV artifacts.
//!
//! JSON floats use the shortest representation that round-trips exactly;
//! CSV floats are printed with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use kam_core::fourier_taylor::{FTSeries, Grading, Radii, SeriesSpace, C64};
use kam_core::kam_engine::{IterationOutcome, StepRecord, TorusResult};
use kam_core::symplectic::{ReducedProblem, ReductionReport};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const REDUCED_FORMAT: &str = "kam-reduced-problem";
pub const TORUS_FORMAT: &str = "kam-torus";

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GradingFile {
    pub d: usize,
    pub l: usize,
    pub k_q: u32,
    pub k_phi: u32,
    #[serde(rename = "D")]
    pub degree: u32,
}

impl From<Grading> for GradingFile {
    fn from(g: Grading) -> Self {
        GradingFile { d: g.d, l: g.l, k_q: g.k_q, k_phi: g.k_phi, degree: g.degree }
    }
}

impl GradingFile {
    pub fn space(&self) -> CliResult<Arc<SeriesSpace>> {
        let g = Grading::new(self.d, self.l, self.k_q, self.k_phi, self.degree)
            .map_err(|e| CliError::Io(format!("bad grading in file: {}", e)))?;
        SeriesSpace::new(g).map_err(|e| CliError::Io(format!("bad grading in file: {}", e)))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RadiiFile {
    pub r: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermFile {
    pub j: Vec<i32>,
    pub k: Vec<i32>,
    pub alpha: Vec<u8>,
    pub re: f64,
    pub im: f64,
}

/// Nonzero coefficients `c_{j,k,α}` of `Σ c e^{i(j·φ + k·q)} (x, p, y)^α`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesFile {
    pub radii: RadiiFile,
    pub loss: f64,
    pub terms: Vec<TermFile>,
}

impl SeriesFile {
    pub fn from_series(s: &FTSeries) -> Self {
        let r = s.radii();
        SeriesFile {
            radii: RadiiFile { r: r.r, s: r.s },
            loss: s.trunc_loss(),
            terms: s
                .terms()
                .map(|t| TermFile { j: t.j.to_vec(), k: t.k.to_vec(), alpha: t.alpha.to_vec(), re: t.c.re, im: t.c.im })
                .collect(),
        }
    }

    pub fn to_series(&self, space: &Arc<SeriesSpace>) -> CliResult<FTSeries> {
        let bad = |m: String| CliError::Io(format!("malformed series: {}", m));
        if !(self.radii.r > 0.0 && self.radii.s > 0.0) {
            return Err(bad("radii must be positive".into()));
        }
        let mut s = FTSeries::zero(space, Radii::new(self.radii.r, self.radii.s));
        for t in &self.terms {
            if !t.re.is_finite() || !t.im.is_finite() {
                return Err(bad(format!("non-finite coefficient at {:?} {:?} {:?}", t.j, t.k, t.alpha)));
            }
            let g = space.grading();
            if t.j.len() != g.l || t.k.len() != g.d || t.alpha.len() != g.n_taylor() {
                return Err(bad(format!("term {:?} {:?} {:?} has the wrong shape", t.j, t.k, t.alpha)));
            }
            s.set(&t.j, &t.k, &t.alpha, C64::new(t.re, t.im)).map_err(|e| bad(e.to_string()))?;
        }
        Ok(s.with_loss(self.loss))
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn from_rows(r: &[Vec<f64>], n: usize, name: &str) -> CliResult<DMatrix<f64>> {
    if r.len() != n || r.iter().any(|row| row.len() != n) {
        return Err(CliError::Io(format!("{} must be {}x{}", name, n, n)));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| r[i][j]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: String,
    pub passed: bool,
    pub evidence: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub lattice: Vec<Vec<i64>>,
    pub k_omega0: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub schur_eigenvalues: Vec<f64>,
    pub c_eigenvalues: Vec<f64>,
    pub hessian_det: f64,
    pub gamma: f64,
    pub radius_factor: f64,
    pub time_reversed: bool,
}

impl ReportFile {
    fn new(r: &ReductionReport, lattice: Vec<Vec<i64>>) -> Self {
        ReportFile {
            lattice,
            k_omega0: r.k_omega.clone(),
            a: rows(&r.a),
            b: rows(&r.b),
            c: rows(&r.c),
            schur_eigenvalues: r.schur_eigenvalues.clone(),
            c_eigenvalues: r.c_eigenvalues.clone(),
            hessian_det: r.hessian_det,
            gamma: r.gamma,
            radius_factor: r.radius_factor,
            time_reversed: r.time_reversed,
        }
    }
}

/// The model problem `⟨ω,p⟩ + ½pM₀p + ½|y|² + h₀ + f₀` on `D_{r,s}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedFile {
    pub format: String,
    pub grading: GradingFile,
    pub radii: RadiiFile,
    pub omega: Vec<f64>,
    pub m0: Vec<Vec<f64>>,
    pub q0: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub taylor_loss: f64,
    pub conditions: Vec<ConditionRow>,
    pub reduction: Option<ReportFile>,
    pub h0: SeriesFile,
    pub f0: SeriesFile,
}

impl ReducedFile {
    pub fn new(rp: &ReducedProblem, conditions: Vec<ConditionRow>) -> Self {
        let reduction = match (&rp.report, &rp.lattice) {
            (Some(r), Some(l)) => Some(ReportFile::new(r, l.k.clone())),
            _ => None,
        };
        ReducedFile {
            format: REDUCED_FORMAT.into(),
            grading: rp.f0.grading().into(),
            radii: RadiiFile { r: rp.radii.r, s: rp.radii.s },
            omega: rp.omega.clone(),
            m0: rows(&rp.m0),
            q0: rows(&rp.q0),
            t: rows(&rp.t),
            taylor_loss: rp.taylor_loss,
            conditions,
            reduction,
            h0: SeriesFile::from_series(&rp.h0),
            f0: SeriesFile::from_series(&rp.f0),
        }
    }

    pub fn to_problem(&self) -> CliResult<ReducedProblem> {
        if self.format != REDUCED_FORMAT {
            return Err(CliError::Io(format!("expected format {:?}, found {:?}", REDUCED_FORMAT, self.format)));
        }
        let space = self.grading.space()?;
        let (d, l) = (self.grading.d, self.grading.l);
        if self.omega.len() != d {
            return Err(CliError::Io(format!("omega has {} entries, d = {}", self.omega.len(), d)));
        }
        Ok(ReducedProblem {
            omega: self.omega.clone(),
            m0: from_rows(&self.m0, d, "m0")?,
            q0: from_rows(&self.q0, l, "q0")?,
            t: from_rows(&self.t, l, "t")?,
            h0: self.h0.to_series(&space)?,
            f0: self.f0.to_series(&space)?,
            radii: Radii::new(self.radii.r, self.radii.s),
            taylor_loss: self.taylor_loss,
            lattice: None,
            report: None,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryEntry {
    pub n: usize,
    pub r: f64,
    pub s: f64,
    pub sigma: f64,
    pub eps_target: f64,
    pub eps_measured: f64,
    pub f_norm: f64,
    pub alpha_norm: f64,
    pub alpha_step: f64,
    pub generator_size: f64,
    pub conjugacy_residual: f64,
    pub cohomological_residual: f64,
    pub loss_budget: f64,
    pub alpha_gradient_gap: Option<f64>,
    pub beta_relation_gap: Option<f64>,
    pub target_met: bool,
}

impl From<&StepRecord> for HistoryEntry {
    fn from(h: &StepRecord) -> Self {
        HistoryEntry {
            n: h.n,
            r: h.r,
            s: h.s,
            sigma: h.sigma,
            eps_target: h.eps_target,
            eps_measured: h.eps_measured,
            f_norm: h.f_norm,
            alpha_norm: h.alpha_norm,
            alpha_step: h.alpha_step,
            generator_size: h.generator_size,
            conjugacy_residual: h.conjugacy_residual,
            cohomological_residual: h.cohomological_residual,
            loss_budget: h.loss_budget,
            alpha_gradient_gap: h.alpha_gradient_gap,
            beta_relation_gap: h.beta_relation_gap,
            target_met: h.target_met,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryFile {
    pub converged: bool,
    pub failure: Option<String>,
    pub initial_f_norm: f64,
    pub schedule_rungs: usize,
    pub schedule_stop: Option<String>,
    pub steps: Vec<HistoryEntry>,
}

impl HistoryFile {
    pub fn new(out: &IterationOutcome) -> Self {
        HistoryFile {
            converged: out.converged,
            failure: out.failure.clone(),
            initial_f_norm: out.initial_f_norm,
            schedule_rungs: out.schedule.rungs.len(),
            schedule_stop: out.schedule.stop.clone(),
            steps: out.history.iter().map(HistoryEntry::from).collect(),
        }
    }
}

/// The embedding `q ↦ (q + Δ(q), x(q), p(q), y(q))` at `φ₀`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusFile {
    pub format: String,
    pub grading: GradingFile,
    pub omega: Vec<f64>,
    pub phi0: Vec<f64>,
    pub zeta_at_phi0: f64,
    pub alpha_at_phi0: Vec<f64>,
    pub nu_max_at_phi0: f64,
    pub residual: f64,
    pub distance_to_trivial: f64,
    pub check_grid: usize,
    pub delta_q: Vec<SeriesFile>,
    pub x: Vec<SeriesFile>,
    pub p: Vec<SeriesFile>,
    pub y: Vec<SeriesFile>,
}

impl TorusFile {
    pub fn new(grading: Grading, omega: &[f64], t: &TorusResult, check_grid: usize) -> Self {
        let (d, l) = (grading.d, grading.l);
        let e: Vec<SeriesFile> = t.embedding.iter().map(SeriesFile::from_series).collect();
        TorusFile {
            format: TORUS_FORMAT.into(),
            grading: grading.into(),
            omega: omega.to_vec(),
            phi0: t.phi0.clone(),
            zeta_at_phi0: t.zeta_at_phi0,
            alpha_at_phi0: t.alpha_at_phi0.clone(),
            nu_max_at_phi0: t.nu_max_at_phi0,
            residual: t.residual,
            distance_to_trivial: t.distance_to_trivial,
            check_grid,
            delta_q: e[..d].to_vec(),
            x: e[d..d + l].to_vec(),
            p: e[d + l..2 * d + l].to_vec(),
            y: e[2 * d + l..].to_vec(),
        }
    }

    /// The embedding as `2(d + l)` series on the slice space.
    pub fn embedding(&self) -> CliResult<Vec<FTSeries>> {
        if self.format != TORUS_FORMAT {
            return Err(CliError::Io(format!("expected format {:?}, found {:?}", TORUS_FORMAT, self.format)));
        }
        let (d, l) = (self.grading.d, self.grading.l);
        if self.delta_q.len() != d || self.x.len() != l || self.p.len() != d || self.y.len() != l {
            return Err(CliError::Io("embedding components do not match (d, l)".into()));
        }
        if self.phi0.len() != l || self.omega.len() != d {
            return Err(CliError::Io("phi0 or omega do not match (d, l)".into()));
        }
        let slice = GradingFile { k_phi: 0, ..self.grading }.space()?;
        self.delta_q.iter().chain(&self.x).chain(&self.p).chain(&self.y).map(|s| s.to_series(&slice)).collect()
    }
}

/// Formats with 17 significant digits.
pub fn g17(v: f64) -> String {
    if !v.is_finite() {
        return format!("{}", v);
    }
    format!("{:.16e}", v)
}

/// Rows `(φ, ζ(φ), |α(φ)|, ν_max(β(φ)))`.
pub fn zeta_csv(l: usize, rows: &[(Vec<f64>, f64, f64, f64)]) -> String {
    let mut out = String::new();
    let head: Vec<String> = (1..=l).map(|i| format!("phi_{}", i)).collect();
    let _ = writeln!(out, "{},zeta,alpha_norm,nu_max_beta", head.join(","));
    for (phi, z, a, nu) in rows {
        let mut cols: Vec<String> = phi.iter().map(|&v| g17(v)).collect();
        cols.extend([g17(*z), g17(*a), g17(*nu)]);
        let _ = writeln!(out, "{}", cols.join(","));
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}
