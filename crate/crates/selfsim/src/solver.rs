//! Picard iteration f ← R(f) with residual tracking and membership logging.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, GridFunction, Mesh, MeshParams, Parity, Tail};
use crate::maps::{apply_r, residual, MapBundle, MapError};
use crate::specfun::constants;
use crate::transform::{Functionals, KernelOperator};
use crate::verify::{check_membership, m0_on, m1_on, MEMBERSHIP_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialFunction {
    /// (1 + x²)⁻¹
    RationalOne,
    /// (1 + x²/2)⁻²
    M0,
    M1,
    File(PathBuf),
}

/// How membership failures of R(f) are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Enforcement {
    LogOnly,
    Enforce,
    /// Log until an image passes every clause, then enforce.
    AfterEntry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    pub tol_residual: f64,
    pub max_iters: usize,
    pub initial: InitialFunction,
    pub mesh: MeshParams,
    pub enforcement: Enforcement,
    /// f ← (1 − ω) f + ω R(f). Plain iteration is ω = 1.
    pub damping: f64,
    pub membership_tol: f64,
    /// Keep every iterate in the returned solution.
    pub keep_history: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_iters: 2000,
            initial: InitialFunction::RationalOne,
            mesh: MeshParams::default(),
            enforcement: Enforcement::AfterEntry,
            damping: 1.0,
            membership_tol: MEMBERSHIP_TOL,
            keep_history: false,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol_residual > 0.0) {
            return Err(SolveError::Config("tol_residual must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(SolveError::Config("max_iters must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolveError::Config("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub weighted_residual: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub member: bool,
    pub failed_clauses: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub weighted_residual_history: Vec<f64>,
    pub functionals: Functionals,
    pub converged: bool,
    pub membership_log: Vec<IterationRecord>,
    /// First iteration whose image passed every clause.
    pub entered_admissible_set: Option<usize>,
    /// Iterations after the 20th where the residual failed to decrease.
    pub nonmonotone_steps: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("no convergence after {} iterations (residual {:.3e})", .0.iterations, .0.residual_history.last().copied().unwrap_or(f64::NAN))]
    NotConverged(Box<SolveReport>),
    #[error("R(f) left the admissible set at iteration {iteration}: {clauses:?}")]
    InvariantViolation { iteration: usize, clauses: Vec<String>, report: Box<SolveReport> },
}

/// Result of a converged solve.
#[derive(Debug, Clone)]
pub struct Solution {
    /// The last iterate f_n, with ‖f_n − R(f_n)‖ ≤ tol.
    pub f: GridFunction,
    /// Intermediates of the last map application.
    pub bundle: MapBundle,
    pub report: SolveReport,
    /// All iterates when `keep_history` is set.
    pub history: Vec<GridFunction>,
}

/// Weight (1 + x)^{1+δ_ρ} of the L∞_ρ norm.
pub fn rho(x: f64) -> f64 {
    (1.0 + x).powf(1.0 + constants().delta_rho)
}

pub fn weighted_residual(f: &GridFunction, r: &GridFunction) -> f64 {
    crate::grid::weighted_sup(f, r, rho)
}

/// Initial iterate on `mesh`.
pub fn initial_function(init: &InitialFunction, mesh: &Arc<Mesh>) -> Result<GridFunction, SolveError> {
    Ok(match init {
        InitialFunction::RationalOne => {
            GridFunction::from_fn(mesh, Parity::Even, Some(Tail::power(1.0, 2.0)), |x| 1.0 / (1.0 + x * x))
        }
        InitialFunction::M0 => m0_on(mesh),
        InitialFunction::M1 => m1_on(mesh),
        InitialFunction::File(p) => {
            let s = std::fs::read_to_string(p).map_err(GridError::from)?;
            resample(&GridFunction::from_json(&s)?, mesh)
        }
    })
}

/// Values of `f` at the nodes of `mesh` (identity when the meshes agree).
pub fn resample(f: &GridFunction, mesh: &Arc<Mesh>) -> GridFunction {
    if *f.mesh == **mesh {
        return GridFunction::new(mesh.clone(), f.values.clone(), f.parity, f.tail);
    }
    GridFunction::from_fn(mesh, f.parity, f.tail, |x| f.lagrange_at(x))
}

/// Build the operator and iterate from the configured initial function.
pub fn solve(cfg: &SolveConfig) -> Result<Solution, SolveError> {
    cfg.validate()?;
    let mesh = Mesh::shared(cfg.mesh)?;
    let op = KernelOperator::new(mesh.clone());
    let f0 = initial_function(&cfg.initial, &mesh)?;
    solve_from(&op, cfg, f0, |_, _| {})
}

/// Iterate from `f0` on the mesh of `op`, calling `progress` once per step
/// with the step record and the bundle of R(f_n).
pub fn solve_from(
    op: &KernelOperator,
    cfg: &SolveConfig,
    f0: GridFunction,
    mut progress: impl FnMut(&IterationRecord, &MapBundle),
) -> Result<Solution, SolveError> {
    cfg.validate()?;
    let mut f = resample(&f0, &op.mesh);
    let mut report = SolveReport {
        iterations: 0,
        residual_history: Vec::new(),
        weighted_residual_history: Vec::new(),
        functionals: Functionals { b: 0.0, c: 0.0, d: 0.0, q: 0.0, b_err: 0.0, c_err: 0.0, q_err: 0.0 },
        converged: false,
        membership_log: Vec::new(),
        entered_admissible_set: None,
        nonmonotone_steps: Vec::new(),
    };
    let mut history = Vec::new();
    let mut enforcing = cfg.enforcement == Enforcement::Enforce;
    for n in 0..cfg.max_iters {
        let bundle = apply_r(op, &f)?;
        let res = residual(&f, &bundle.r);
        let wres = weighted_residual(&f, &bundle.r);
        let mem = check_membership(&bundle.r, cfg.membership_tol);
        let rec = IterationRecord {
            iteration: n,
            residual: res,
            weighted_residual: wres,
            b: bundle.fx.b,
            c: bundle.fx.c,
            d: bundle.fx.d,
            member: mem.member,
            failed_clauses: mem.failed().into_iter().map(String::from).collect(),
        };
        progress(&rec, &bundle);
        if n > 20 && res >= report.residual_history[n - 1] {
            report.nonmonotone_steps.push(n);
        }
        report.iterations = n + 1;
        report.residual_history.push(res);
        report.weighted_residual_history.push(wres);
        report.functionals = bundle.fx;
        if mem.member && report.entered_admissible_set.is_none() {
            report.entered_admissible_set = Some(n);
            if cfg.enforcement == Enforcement::AfterEntry {
                enforcing = true;
            }
        }
        let failed = rec.failed_clauses.clone();
        report.membership_log.push(rec);
        if enforcing && !mem.member {
            return Err(SolveError::InvariantViolation { iteration: n, clauses: failed, report: Box::new(report) });
        }
        if cfg.keep_history {
            history.push(f.clone());
        }
        if res <= cfg.tol_residual && wres <= cfg.tol_residual {
            report.converged = true;
            return Ok(Solution { f, bundle, report, history });
        }
        f = if cfg.damping == 1.0 {
            bundle.r
        } else {
            let w = cfg.damping;
            let vals = f.values.iter().zip(&bundle.r.values).map(|(a, b)| (1.0 - w) * a + w * b).collect();
            GridFunction::new(f.mesh.clone(), vals, Parity::Even, bundle.r.tail)
        };
    }
    Err(SolveError::NotConverged(Box::new(report)))
}
