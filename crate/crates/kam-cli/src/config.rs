//! Experiment configuration files (JSON).

use std::path::{Path, PathBuf};

use kam_core::fourier_taylor::{Grading, Radii, SeriesSpace};
use kam_core::kam_engine::EngineConfig;
use kam_core::symplectic::{
    reduce_coordinates, ActionTerm, AngleActionTerm, OriginalSystem, ReducedProblem, ReducedTerm,
};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub truncation: Truncation,
    #[serde(default)]
    pub radii: RadiiConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub outputs: Outputs,
    /// Points per `q` dimension of the invariance check.
    #[serde(default = "default_check_grid")]
    pub check_grid: usize,
}

fn default_check_grid() -> usize {
    32
}

/// Either data already in the model coordinates or an `m`-dimensional
/// system with resonances to be reduced.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Reduced {
        d: usize,
        l: usize,
        omega: Vec<f64>,
        m0: Vec<Vec<f64>>,
        q0: Vec<Vec<f64>>,
        #[serde(default)]
        h_terms: Vec<HTermConfig>,
        f_terms: Vec<FTermConfig>,
        amplitude: f64,
    },
    Original {
        m: usize,
        resonances: Vec<Vec<i64>>,
        omega0: Vec<f64>,
        hessian: Vec<Vec<f64>>,
        #[serde(default)]
        h_terms: Vec<HTermConfig>,
        f_terms: Vec<AngleTermConfig>,
        amplitude: f64,
        /// Exponent of the Diophantine check on the reduced frequency.
        #[serde(default = "default_tau")]
        diophantine_tau: f64,
    },
}

fn default_tau() -> f64 {
    1.0
}

/// `coefficient·cos(q_modes·q + x_modes·x + phase)·(p, y)^taylor_powers`,
/// with `x` the angle before the shift `x → x + φ`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FTermConfig {
    pub q_modes: Vec<i32>,
    pub x_modes: Vec<i32>,
    pub taylor_powers: Vec<u32>,
    pub coefficient: f64,
    #[serde(default)]
    pub phase: f64,
}

/// `coefficient·cos(angle_modes·θ + phase)·I^action_powers`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleTermConfig {
    pub angle_modes: Vec<i64>,
    #[serde(default)]
    pub action_powers: Vec<u32>,
    pub coefficient: f64,
    #[serde(default)]
    pub phase: f64,
}

/// `coefficient·(actions)^taylor_powers`, total degree at least 3.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HTermConfig {
    pub taylor_powers: Vec<u32>,
    pub coefficient: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub k_q: u32,
    pub k_phi: u32,
    #[serde(rename = "D")]
    pub degree: u32,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiiConfig {
    pub r: f64,
    pub s: f64,
}

impl Default for RadiiConfig {
    fn default() -> Self {
        RadiiConfig { r: 0.5, s: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub lambda_cfg: f64,
    pub n_max: usize,
    pub target_tol: f64,
    pub tau: f64,
    pub kappa: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let e = EngineConfig::default();
        ScheduleConfig { lambda_cfg: e.lambda_cfg, n_max: e.n_max, target_tol: e.target_tol, tau: e.tau, kappa: e.kappa }
    }
}

/// Artifact paths; relative paths are taken from the config file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub history_path: PathBuf,
    pub zeta_csv_path: PathBuf,
    pub torus_path: PathBuf,
    pub reduced_path: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            history_path: "history.json".into(),
            zeta_csv_path: "zeta.csv".into(),
            torus_path: "torus.json".into(),
            reduced_path: "reduced.json".into(),
        }
    }
}

fn matrix(rows: &[Vec<f64>], n: usize, name: &str) -> CliResult<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Precondition(format!("{} must be {}x{}", name, n, n)));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::io(path, e))?;
        cfg.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> CliResult<()> {
        let amplitude = match &self.problem {
            ProblemConfig::Reduced { amplitude, .. } | ProblemConfig::Original { amplitude, .. } => *amplitude,
        };
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(CliError::Precondition(format!("amplitude must be finite and nonnegative, got {}", amplitude)));
        }
        if !(self.radii.r > 0.0 && self.radii.s > 0.0) {
            return Err(CliError::Precondition("radii must be positive".into()));
        }
        if self.check_grid == 0 {
            return Err(CliError::Precondition("check_grid must be positive".into()));
        }
        let s = &self.schedule;
        if !(s.target_tol > 0.0) || !(s.lambda_cfg > 0.0) || !(s.tau > 0.0) || s.kappa < 0.0 {
            return Err(CliError::Precondition(
                "schedule needs target_tol, lambda_cfg, tau positive and kappa nonnegative".into(),
            ));
        }
        match &self.problem {
            ProblemConfig::Reduced { d, l, omega, f_terms, h_terms, .. } => {
                if omega.len() != *d {
                    return Err(CliError::Precondition(format!("omega has {} entries, d = {}", omega.len(), d)));
                }
                for t in f_terms {
                    if t.q_modes.len() != *d || t.x_modes.len() != *l || t.taylor_powers.len() != d + l {
                        return Err(CliError::Precondition(format!(
                            "f term {:?} does not match d = {}, l = {}",
                            t, d, l
                        )));
                    }
                }
                for t in h_terms {
                    if t.taylor_powers.len() != d + l {
                        return Err(CliError::Precondition(format!("h term {:?} needs d + l powers", t)));
                    }
                }
            }
            ProblemConfig::Original { m, resonances, omega0, f_terms, h_terms, .. } => {
                if omega0.len() != *m || resonances.iter().any(|r| r.len() != *m) {
                    return Err(CliError::Precondition(format!("omega0 and resonances must have {} entries", m)));
                }
                if resonances.is_empty() || resonances.len() >= *m {
                    return Err(CliError::Precondition(format!(
                        "need between 1 and {} resonances, got {}",
                        m - 1,
                        resonances.len()
                    )));
                }
                for t in f_terms {
                    if t.angle_modes.len() != *m || (!t.action_powers.is_empty() && t.action_powers.len() != *m) {
                        return Err(CliError::Precondition(format!("f term {:?} does not match m = {}", t, m)));
                    }
                }
                for t in h_terms {
                    if t.taylor_powers.len() != *m {
                        return Err(CliError::Precondition(format!("h term {:?} needs m powers", t)));
                    }
                }
            }
        }
        Ok(())
    }

    /// `(d, l)` of the model problem.
    pub fn dims(&self) -> (usize, usize) {
        match &self.problem {
            ProblemConfig::Reduced { d, l, .. } => (*d, *l),
            ProblemConfig::Original { m, resonances, .. } => (m - resonances.len(), resonances.len()),
        }
    }

    pub fn space(&self) -> CliResult<std::sync::Arc<SeriesSpace>> {
        let (d, l) = self.dims();
        let t = self.truncation;
        Ok(SeriesSpace::new(Grading::new(d, l, t.k_q, t.k_phi, t.degree)?)?)
    }

    pub fn engine(&self) -> EngineConfig {
        let s = self.schedule;
        EngineConfig {
            tau: s.tau,
            lambda_cfg: s.lambda_cfg,
            kappa: s.kappa,
            n_max: s.n_max,
            target_tol: s.target_tol,
            ..EngineConfig::default()
        }
    }

    /// Runs the reduction (or the pass-through normalization) and returns the
    /// model problem.
    pub fn reduce(&self) -> CliResult<ReducedProblem> {
        let space = self.space()?;
        let radii = Radii::new(self.radii.r, self.radii.s);
        let h = |terms: &[HTermConfig]| -> Vec<ActionTerm> {
            terms.iter().map(|t| ActionTerm { powers: t.taylor_powers.clone(), coefficient: t.coefficient }).collect()
        };
        match &self.problem {
            ProblemConfig::Reduced { d, l, omega, m0, q0, h_terms, f_terms, amplitude } => {
                let f: Vec<ReducedTerm> = f_terms
                    .iter()
                    .map(|t| ReducedTerm {
                        q_modes: t.q_modes.clone(),
                        x_modes: t.x_modes.clone(),
                        powers: t.taylor_powers.clone(),
                        coefficient: amplitude * t.coefficient,
                        phase: t.phase,
                    })
                    .collect();
                let m0 = matrix(m0, *d, "m0")?;
                let q0 = matrix(q0, *l, "q0")?;
                if m0.clone().lu().determinant() == 0.0 {
                    return Err(CliError::Precondition(format!("nondegeneracy condition violated: M0 is singular: {}", m0)));
                }
                Ok(ReducedProblem::from_reduced(&space, radii, omega, &m0, &q0, &h(h_terms), &f)?)
            }
            ProblemConfig::Original { m, resonances, omega0, hessian, h_terms, f_terms, amplitude, diophantine_tau } => {
                let sys = OriginalSystem {
                    omega0: omega0.clone(),
                    hessian: matrix(hessian, *m, "hessian")?,
                    h_terms: h(h_terms),
                    f_terms: f_terms
                        .iter()
                        .map(|t| AngleActionTerm {
                            angle_modes: t.angle_modes.clone(),
                            powers: if t.action_powers.is_empty() { vec![0; *m] } else { t.action_powers.clone() },
                            coefficient: amplitude * t.coefficient,
                            phase: t.phase,
                        })
                        .collect(),
                };
                Ok(reduce_coordinates(&sys, resonances, &space, radii, *diophantine_tau)?)
            }
        }
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
