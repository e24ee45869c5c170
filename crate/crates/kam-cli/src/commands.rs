use std::path::Path;

use kam_core::fourier_taylor::{FTSeries, PhiGrid, SeriesSpace, Var};
use kam_core::kam_engine::{compute_zeta, iterate, solve_torus, verify_invariance, IterationOutcome, KamProblem};
use kam_core::linalg;
use kam_core::normal_form::{eval_phi, nu_max_profile};
use kam_core::small_divisors::effective_diophantine_constant;
use kam_core::symplectic::ReducedProblem;

use crate::artifacts::{
    g17, read_json, write_json, write_text, zeta_csv, ConditionRow, GradingFile, HistoryFile, ReducedFile, TorusFile,
};
use crate::config::{resolve, ExperimentConfig, ProblemConfig};
use crate::error::{CliError, CliResult};

/// Rows of the admissibility table. For data given in reduced form the rows
/// check the frequency, `M₀` and the input `Q₀ = TᵀT`.
fn conditions(cfg: &ExperimentConfig, rp: &ReducedProblem) -> CliResult<Vec<ConditionRow>> {
    let rows = match &rp.report {
        Some(r) => r.table(),
        None => {
            let w = effective_diophantine_constant(&rp.omega, 1.0, cfg.truncation.k_q)?;
            let det = rp.m0.clone().lu().determinant();
            let q0 = rp.t.transpose() * &rp.t;
            let eig: Vec<f64> = linalg::sym_eigenvalues(&q0).iter().cloned().collect();
            vec![
                ("Diophantine frequency".into(), w.gamma > 0.0, format!("gamma = {:.6e}", w.gamma)),
                ("M0 non singular".into(), det != 0.0, format!("det(M0) = {:.6e}", det)),
                ("Q0 positive".into(), eig.iter().all(|&e| e > 0.0), format!("eig(Q0) = {:?}", eig)),
            ]
        }
    };
    Ok(rows.into_iter().map(|(condition, passed, evidence)| ConditionRow { condition, passed, evidence }).collect())
}

fn print_conditions(rows: &[ConditionRow]) {
    println!("{:<40} {:<6} evidence", "condition", "status");
    for r in rows {
        println!("{:<40} {:<6} {}", r.condition, if r.passed { "pass" } else { "FAIL" }, r.evidence);
    }
}

fn reduced_with_table(cfg: &ExperimentConfig, base: &Path) -> CliResult<ReducedProblem> {
    let rp = cfg.reduce()?;
    let rows = conditions(cfg, &rp)?;
    print_conditions(&rows);
    let path = resolve(base, &cfg.outputs.reduced_path);
    write_json(&path, &ReducedFile::new(&rp, rows.clone()))?;
    println!("reduced problem written to {}", path.display());
    if let Some(r) = rows.iter().find(|r| !r.passed) {
        return Err(CliError::Precondition(format!("{} fails: {}", r.condition, r.evidence)));
    }
    Ok(rp)
}

pub fn cmd_reduce(config: &Path) -> CliResult<()> {
    let (cfg, base) = ExperimentConfig::load(config)?;
    let rp = reduced_with_table(&cfg, &base)?;
    if let ProblemConfig::Original { .. } = cfg.problem {
        if let Some(r) = &rp.report {
            println!("K omega0 = {:?}", r.k_omega);
        }
    }
    println!("omega = {:?}", rp.omega);
    println!("M0 = {:?}", rp.m0.as_slice());
    println!("Taylor tail dropped by the re-expansion: {:.3e}", rp.taylor_loss);
    Ok(())
}

fn print_history(out: &IterationOutcome) {
    println!("initial ||f|| = {:.6e}, {} admissible rung(s)", out.initial_f_norm, out.schedule.rungs.len());
    println!("{:>3} {:>12} {:>12} {:>12} {:>12} {:>12}", "n", "eps_n", "||f_n||", "||f_n+1||", "|alpha|", "conjugacy");
    for h in &out.history {
        println!(
            "{:>3} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            h.n, h.eps_target, h.eps_measured, h.f_norm, h.alpha_norm, h.conjugacy_residual
        );
    }
}

fn run_engine(cfg: &ExperimentConfig, base: &Path) -> CliResult<(ReducedProblem, KamProblem, IterationOutcome)> {
    let rp = reduced_with_table(cfg, base)?;
    let problem = KamProblem::from_reduced(&rp)?;
    let out = iterate(&problem, &cfg.engine())?;
    print_history(&out);
    let path = resolve(base, &cfg.outputs.history_path);
    write_json(&path, &HistoryFile::new(&out))?;
    println!("history written to {}", path.display());
    Ok((rp, problem, out))
}

fn zeta_rows(zeta: &FTSeries, out: &IterationOutcome, grid: &PhiGrid) -> CliResult<Vec<(Vec<f64>, f64, f64, f64)>> {
    let nu = nu_max_profile(&out.state.nf.beta, grid)?;
    grid.iter()
        .zip(nu)
        .map(|(phi, (_, nu))| {
            let z = eval_phi(zeta, phi)?;
            let a = out.state.alpha.iter().map(|a| eval_phi(a, phi).map(|v| v * v)).sum::<Result<f64, _>>()?.sqrt();
            Ok((phi.to_vec(), z, a, nu))
        })
        .collect()
}

fn write_zeta(path: &Path, l: usize, rows: &[(Vec<f64>, f64, f64, f64)]) -> CliResult<()> {
    write_text(path, &zeta_csv(l, rows))?;
    println!("zeta profile written to {}", path.display());
    Ok(())
}

fn engine_grid(problem: &KamProblem) -> PhiGrid {
    let g = problem.f0.grading();
    PhiGrid::for_order(g.l, g.k_phi)
}

pub fn cmd_run(config: &Path) -> CliResult<()> {
    let (cfg, base) = ExperimentConfig::load(config)?;
    let (_, problem, out) = run_engine(&cfg, &base)?;
    if !out.converged {
        return Err(CliError::Convergence(out.failure.unwrap_or_else(|| "iteration did not converge".into())));
    }
    let grid = engine_grid(&problem);
    let h0 = problem.hamiltonian()?;
    let torus = solve_torus(&h0, &out.state, problem.omega(), &grid, cfg.check_grid)?;
    let rows = zeta_rows(&torus.zeta, &out, &grid)?;
    write_zeta(&resolve(&base, &cfg.outputs.zeta_csv_path), problem.f0.grading().l, &rows)?;
    let path = resolve(&base, &cfg.outputs.torus_path);
    write_json(&path, &TorusFile::new(problem.f0.grading(), problem.omega(), &torus, cfg.check_grid))?;
    println!("torus written to {}", path.display());
    println!("phi0 = {:?}", torus.phi0);
    println!("zeta(phi0) = {}", g17(torus.zeta_at_phi0));
    println!("alpha(phi0) = {:?}", torus.alpha_at_phi0);
    println!("distance to the trivial torus = {}", g17(torus.distance_to_trivial));
    println!("invariance residual = {}", g17(torus.residual));
    let tol = cfg.schedule.target_tol;
    if torus.residual <= tol {
        Ok(())
    } else {
        Err(CliError::Convergence(format!("invariance residual {:e} above target_tol {:e}", torus.residual, tol)))
    }
}

pub fn cmd_zeta(config: &Path, csv: &Path) -> CliResult<()> {
    let (cfg, base) = ExperimentConfig::load(config)?;
    let (_, problem, out) = run_engine(&cfg, &base)?;
    let grid = engine_grid(&problem);
    let zeta = compute_zeta(&problem.hamiltonian()?, &out.state.phi, problem.omega(), &grid)?;
    let rows = zeta_rows(&zeta, &out, &grid)?;
    write_zeta(csv, problem.f0.grading().l, &rows)?;
    if out.converged {
        Ok(())
    } else {
        Err(CliError::Convergence(out.failure.unwrap_or_else(|| "iteration did not converge".into())))
    }
}

/// A problem file is either an experiment config or a reduced-problem file.
fn load_problem(path: &Path) -> CliResult<KamProblem> {
    let value: serde_json::Value = read_json(path)?;
    let rp = if value.get("problem").is_some() {
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| CliError::io(path, e))?;
        cfg.validate()?;
        cfg.reduce()?
    } else {
        let file: ReducedFile = serde_json::from_value(value).map_err(|e| CliError::io(path, e))?;
        file.to_problem()?
    };
    Ok(KamProblem::from_reduced(&rp)?)
}

/// `M_q[∂_p H(e(q))]` on an `n^d` grid; equals `ω` on an invariant torus.
fn mean_q_velocity(h: &FTSeries, embedding: &[FTSeries], n: usize) -> CliResult<Vec<f64>> {
    let g = h.grading();
    let (d, l) = (g.d, g.l);
    let phi = vec![0.0; l];
    let (zd, zl) = (vec![0.0; d], vec![0.0; l]);
    let dp: Vec<FTSeries> = (0..d).map(|i| h.derivative(Var::P(i))).collect();
    let total = n.pow(d as u32);
    let mut mean = vec![0.0; d];
    for idx in 0..total {
        let mut q = vec![0.0; d];
        let mut rem = idx;
        for a in (0..d).rev() {
            q[a] = 2.0 * std::f64::consts::PI * (rem % n) as f64 / n as f64;
            rem /= n;
        }
        let mut pt = Vec::with_capacity(embedding.len());
        for (c, e) in embedding.iter().enumerate() {
            let base = if c < d { q[c] } else { 0.0 };
            pt.push(base + e.evaluate(&phi, &q, &zl, &zd, &zl)?);
        }
        let (qq, rest) = pt.split_at(d);
        let (xx, rest) = rest.split_at(l);
        let (pp, yy) = rest.split_at(d);
        for (m, s) in mean.iter_mut().zip(&dp) {
            *m += s.evaluate(&phi, qq, xx, pp, yy)? / total as f64;
        }
    }
    Ok(mean)
}

pub fn cmd_verify(torus_path: &Path, problem_path: &Path, grid: usize) -> CliResult<()> {
    if grid == 0 {
        return Err(CliError::Precondition("grid must be positive".into()));
    }
    let torus: TorusFile = read_json(torus_path)?;
    let embedding = torus.embedding().map_err(|e| match e {
        CliError::Io(m) => CliError::io(torus_path, m),
        e => e,
    })?;
    let problem = load_problem(problem_path)?;
    let gp: GradingFile = problem.f0.grading().into();
    if gp != torus.grading {
        return Err(CliError::Precondition(format!(
            "torus grading {:?} does not match problem grading {:?}",
            torus.grading, gp
        )));
    }
    let slice = SeriesSpace::new(problem.f0.grading().slice())?;
    let h = problem.hamiltonian()?.at_phi(&torus.phi0, &slice);
    let omega = problem.omega();
    let residual = verify_invariance(&h, &embedding, omega, grid)?;
    let omega_gap = omega.iter().zip(&torus.omega).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mean = mean_q_velocity(&h, &embedding, grid)?;
    let velocity_gap = mean.iter().zip(omega).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("phi0 = {:?}", torus.phi0);
    println!("invariance residual = {}", g17(residual));
    println!("rotation vector: file {:?}, problem {:?}, max difference {}", torus.omega, omega, g17(omega_gap));
    println!("mean q velocity on the torus = {:?}, max difference to omega {}", mean, g17(velocity_gap));
    let scale = omega.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if omega_gap > 1e-12 * scale {
        return Err(CliError::Precondition(format!("rotation vector of the torus differs from omega by {:e}", omega_gap)));
    }
    Ok(())
}
