//! The maps G, ψ, M, R and the fixed-point residual.
//!
//! With g = G(f), ψ = exp ∫₀ˣ (1 − g)/(y g) dy, m = ψ²/g and
//! B = x^d ψ^{d−1}, A = ∫₀ˣ d (m/g) B dy/y, the image is r = A/B.
//! A and B are never accumulated directly: r is advanced cell by cell as
//! r_{k+1} = r_k B_k/B_{k+1} + ∫ d (m/g)(y) B(y)/B_{k+1} dy/y,
//! with every ratio formed in log space.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{GridFunction, Mesh, Parity, Tail, STENCIL};
use crate::quad::{lagrange_weights, GaussRule};
use crate::transform::{functionals, Functionals, KernelOperator, TransformError};

/// Below this abscissa r is taken from its Taylor expansion at 0.
pub const R_SERIES_CUTOFF: f64 = 1e-4;
/// Tolerance on g ≥ 1 before ψ refuses to run.
pub const G_FLOOR_TOL: f64 = 1e-10;
/// r is given a power tail only when δ_d exceeds this; below it the tail
/// would be nearly non-integrable and r is truncated at X instead.
pub const MIN_TAIL_DELTA: f64 = 0.05;
/// d may dip this far below 1 (roundoff at d(m₀) = 1) before R is refused.
pub const D_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MapError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("g(x) = {value} < 1 at node {index}")]
    Positivity { index: usize, value: f64 },
    #[error("d(f) = {0} <= 1: R is undefined")]
    DegenerateD(f64),
    #[error("non-finite value in {0} at node {1}")]
    NonFinite(&'static str, usize),
}

/// Everything produced by one application of R.
#[derive(Debug, Clone)]
pub struct MapBundle {
    pub f: GridFunction,
    pub tf: GridFunction,
    pub g: GridFunction,
    pub psi: GridFunction,
    pub m: GridFunction,
    pub r: GridFunction,
    /// Numerator A = r·B of R.
    pub a: GridFunction,
    /// Denominator B = x^d ψ^{d−1} of R.
    pub b: GridFunction,
    pub fx: Functionals,
}

/// g = 1 − T(f)/c.
pub fn compute_g(fx: &Functionals, tf: &GridFunction) -> GridFunction {
    let c = fx.c;
    let mut values: Vec<f64> = tf.values.iter().map(|t| 1.0 - t / c).collect();
    values[0] = 1.0;
    let tail = tf.tail.map(|t| Tail {
        limit: 1.0 - t.limit / c,
        amplitude: -t.amplitude / c,
        exponent: t.exponent,
    });
    GridFunction::new(tf.mesh.clone(), values, Parity::Even, tail)
}

/// ψ = exp ∫₀ˣ (1 − g)/(y g) dy.
pub fn compute_psi(g: &GridFunction) -> Result<GridFunction, MapError> {
    if let Some(i) = g.values.iter().position(|&v| v < 1.0 - G_FLOOR_TOL) {
        return Err(MapError::Positivity { index: i, value: g.values[i] });
    }
    let mesh = &g.mesh;
    let q: Vec<f64> = mesh
        .x
        .iter()
        .zip(&g.values)
        .map(|(&y, &gv)| if y == 0.0 { 0.0 } else { (1.0 - gv) / (y * gv) })
        .collect();
    let q = GridFunction::new(mesh.clone(), q, Parity::Odd, None);
    let values: Vec<f64> = q.cumulative().into_iter().map(f64::exp).collect();
    let tail = g.tail.map(|t| {
        let rate = (t.limit - 1.0) / t.limit;
        Tail::matching(values[values.len() - 1], mesh.x_max(), rate)
    });
    Ok(GridFunction::new(mesh.clone(), values, Parity::Even, tail))
}

/// m = ψ²/g.
pub fn compute_m(g: &GridFunction, psi: &GridFunction) -> GridFunction {
    let values: Vec<f64> = psi.values.iter().zip(&g.values).map(|(p, gv)| p * p / gv).collect();
    let tail = psi
        .tail
        .map(|t| Tail::matching(values[values.len() - 1], g.mesh.x_max(), 2.0 * t.exponent));
    GridFunction::new(g.mesh.clone(), values, Parity::Even, tail)
}

/// r = R(f) from g, ψ, m and d. Returns (r, A, B).
pub fn compute_r(
    g: &GridFunction,
    psi: &GridFunction,
    m: &GridFunction,
    d: f64,
) -> Result<(GridFunction, GridFunction, GridFunction), MapError> {
    if d < 1.0 - D_SLACK || !d.is_finite() {
        return Err(MapError::DegenerateD(d));
    }
    let mesh: &Arc<Mesh> = &g.mesh;
    let n = mesh.len();
    let h = mesh.h;
    let ln_psi: Vec<f64> = psi.values.iter().map(|p| p.ln()).collect();
    let ln_mg: Vec<f64> = m.values.iter().zip(&g.values).map(|(mv, gv)| (mv / gv).ln()).collect();
    let lambda = |k: usize| d * mesh.x[k].ln() + (d - 1.0) * ln_psi[k];

    let xc = R_SERIES_CUTOFF * mesh.params.scale;
    let kc = mesh.x.iter().rposition(|&x| x <= xc).unwrap_or(0).max(1);
    let xk = mesh.x[kc];
    let g2 = (g.values[kc] - 1.0) / (xk * xk);
    let r2 = -g2 * (2.0 * d + 1.0) / (d + 2.0);

    let gauss = GaussRule::new(8);
    let ell: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|sh| {
            let offs: Vec<f64> = (0..STENCIL).map(|j| j as f64 - 2.0 - sh as f64).collect();
            gauss.nodes.iter().map(|&s| lagrange_weights(&offs, s)).collect()
        })
        .collect();
    let even = |v: &[f64], j: isize| v[j.unsigned_abs()];

    let mut r = vec![0.0; n];
    for (k, rv) in r.iter_mut().enumerate().take(kc + 1) {
        let x = mesh.x[k];
        *rv = 1.0 + r2 * x * x;
    }
    for k in kc..n - 1 {
        let start = mesh.stencil_start(k);
        let shift = (k as isize - 2 - start) as usize;
        let lam1 = lambda(k + 1);
        let mut acc = r[k] * (lambda(k) - lam1).exp();
        for (q, (&s, &w)) in gauss.nodes.iter().zip(&gauss.weights).enumerate() {
            let l = &ell[shift][q];
            let (mut lp, mut lmg) = (0.0, 0.0);
            for (j, lj) in l.iter().enumerate() {
                let idx = start + j as isize;
                lp += lj * even(&ln_psi, idx);
                lmg += lj * even(&ln_mg, idx);
            }
            let xi = (k as f64 + s) * h;
            let y = mesh.x_of(xi);
            let lam = d * y.ln() + (d - 1.0) * lp;
            acc += w * h * d * (lmg + lam - lam1).exp() / xi.tanh();
        }
        r[k + 1] = acc;
    }
    if let Some(i) = r.iter().position(|v| !v.is_finite()) {
        return Err(MapError::NonFinite("r", i));
    }
    let bvals: Vec<f64> = (0..n).map(|k| if k == 0 { 0.0 } else { lambda(k).exp() }).collect();
    let avals: Vec<f64> = r.iter().zip(&bvals).map(|(rv, bv)| rv * bv).collect();
    let delta_d = (d - 1.0) / (2.0 * d);
    let tail = (delta_d >= MIN_TAIL_DELTA).then(|| Tail::matching(r[n - 1], mesh.x_max(), 1.0 + delta_d));
    Ok((
        GridFunction::new(mesh.clone(), r, Parity::Even, tail),
        GridFunction::new(mesh.clone(), avals, Parity::Even, None),
        GridFunction::new(mesh.clone(), bvals, Parity::Even, None),
    ))
}

/// One full application f ↦ R(f) with all intermediates.
pub fn apply_r(op: &KernelOperator, f: &GridFunction) -> Result<MapBundle, MapError> {
    let (fx, tf) = functionals(op, f)?;
    let g = compute_g(&fx, &tf);
    let psi = compute_psi(&g)?;
    let m = compute_m(&g, &psi);
    let (r, a, b) = compute_r(&g, &psi, &m, fx.d)?;
    Ok(MapBundle { f: f.clone(), tf, g, psi, m, r, a, b, fx })
}

/// max |f − r| over nodes.
pub fn residual(f: &GridFunction, r: &GridFunction) -> f64 {
    f.values.iter().zip(&r.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Nodewise |x g r' − (d m − (d + g − 1) r)|, the ODE satisfied by r.
pub fn ode_residual(bundle: &MapBundle) -> Vec<f64> {
    let d = bundle.fx.d;
    let dr = bundle.r.derivative();
    (0..bundle.r.values.len())
        .map(|i| {
            let x = bundle.r.mesh.x[i];
            let (g, m, r) = (bundle.g.values[i], bundle.m.values[i], bundle.r.values[i]);
            (x * g * dr.values[i] - (d * m - (d + g - 1.0) * r)).abs()
        })
        .collect()
}

/// Summary of a bundle for JSON dumps.
#[derive(Debug, Clone, Serialize)]
pub struct BundleSummary {
    pub functionals: Functionals,
    pub residual: f64,
    pub g_at_infinity: Option<f64>,
    pub ode_residual_max: f64,
}

impl MapBundle {
    pub fn summary(&self) -> BundleSummary {
        let ode = ode_residual(self);
        let ode_max = ode
            .iter()
            .zip(&self.r.mesh.x)
            .map(|(e, x)| e / (1.0 + x))
            .fold(0.0, f64::max);
        BundleSummary {
            functionals: self.fx,
            residual: residual(&self.f, &self.r),
            g_at_infinity: self.g.tail.map(|t| t.limit),
            ode_residual_max: ode_max,
        }
    }
}
