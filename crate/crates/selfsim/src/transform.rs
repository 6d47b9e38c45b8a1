//! The singular-kernel transform T and the functionals b, c, d, Q.
//!
//! T(f)(x) = (1/π)∫₀^∞ f(y)((y/x)ln|(x+y)/(x−y)| − 2) dy = −(1/π)∫₀^∞ f(y) φ(y/x) dy.
//!
//! Rows with x ≤ 1 act on f − 1 and add the analytic integral of the constant
//! part, which keeps T(f)(x) = O(x²) accurate to relative precision near 0.
//! Rows with x > 1 act on f directly. Both use the same weights.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridFunction, Mesh, Parity, Tail, STENCIL};
use crate::quad::{adaptive, lagrange_weights, GaussRule, LogRule};
use crate::specfun::{eval_f1, phi};

/// Gauss points per regular cell.
const CELL_GAUSS: usize = 8;
/// Nodes of the log-weighted rule on the two cells adjacent to y = x.
const LOG_NODES: usize = 10;
/// Abscissa below which (1 − f)/y² is replaced by a fitted series in c(f).
pub const C_SERIES_CUTOFF: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("tail exponent {0} <= 1: b(f) diverges")]
    TailTooHeavy(f64),
    #[error("grid function lives on a different mesh")]
    MeshMismatch,
    #[error("c(f) = {0} is not positive")]
    NonPositiveC(f64),
}

/// Dense quadrature weights for T on a mesh.
#[derive(Debug)]
pub struct KernelOperator {
    pub mesh: Arc<Mesh>,
    weights: Vec<f64>,
    /// Rows that act on f − 1.
    centered_rows: usize,
    /// |Σ_j W_ij − exact| for the constant function on [0, X].
    pub row_error: Vec<f64>,
}

struct CellTables {
    /// ℓ_s at Gauss nodes, per stencil shift.
    gauss: Vec<Vec<Vec<f64>>>,
    /// ℓ_s at log-rule nodes, cell to the right of the row node.
    log_right: Vec<Vec<f64>>,
    /// ℓ_s at log-rule nodes, cell to the left of the row node.
    log_left: Vec<Vec<f64>>,
}

impl KernelOperator {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let n = mesh.len();
        let gauss = GaussRule::new(CELL_GAUSS);
        let logr = LogRule::new(LOG_NODES);
        let offsets = |shift: usize| -> Vec<f64> { (0..STENCIL).map(|j| j as f64 - 2.0 - shift as f64).collect() };
        let tables = CellTables {
            gauss: (0..3)
                .map(|sh| gauss.nodes.iter().map(|&s| lagrange_weights(&offsets(sh), s)).collect())
                .collect(),
            log_right: logr.nodes.iter().map(|&s| lagrange_weights(&offsets(2), s)).collect(),
            log_left: logr.nodes.iter().map(|&s| lagrange_weights(&offsets(2), 1.0 - s)).collect(),
        };
        let centered_rows = mesh.x.iter().take_while(|&&x| x <= 1.0).count();
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| Self::build_row(&mesh, i, &gauss, &logr, &tables))
            .collect();
        let mut weights = Vec::with_capacity(n * n);
        let mut row_error = Vec::with_capacity(n);
        for (r, e) in rows {
            weights.extend_from_slice(&r);
            row_error.push(e);
        }
        Self { mesh, weights, centered_rows, row_error }
    }

    fn build_row(mesh: &Mesh, i: usize, gauss: &GaussRule, logr: &LogRule, t: &CellTables) -> (Vec<f64>, f64) {
        let n = mesh.len();
        let mut row = vec![0.0; n];
        if i == 0 {
            return (row, 0.0);
        }
        let x = mesh.x[i];
        let h = mesh.h;
        let xi_i = i as f64 * h;
        let y0 = mesh.y0;
        let mut acc = |start: isize, ell: &[f64], w: f64| {
            for (j, l) in ell.iter().enumerate() {
                let col = (start + j as isize).unsigned_abs();
                row[col] += w * l;
            }
        };
        for k in 0..mesh.last() {
            let start = mesh.stencil_start(k);
            let shift = (k as isize - 2 - start) as usize;
            let xi_k = k as f64 * h;
            if k + 1 == i || k == i {
                // Log singularity at the row node: split off ln|ξ − ξ_i|.
                let right = k == i;
                for (&sg, &wg) in gauss.nodes.iter().zip(&gauss.weights) {
                    let xi = xi_k + sg * h;
                    let y = y0 * xi.sinh();
                    let dy = y0 * xi.cosh();
                    let dist = (xi - xi_i).abs();
                    let ld = (2.0 * y0 * (0.5 * (xi + xi_i)).cosh() * (0.5 * dist).sinh() / dist).ln();
                    let reg = ((y / x) * ((x + y).ln() - ld - h.ln()) - 2.0) / PI;
                    let ell = lagrange_weights(&stencil_offsets(shift), sg);
                    acc(start, &ell, wg * reg * dy * h);
                }
                for (q, (&s, &lw)) in logr.nodes.iter().zip(&logr.log_weights).enumerate() {
                    let xi = if right { xi_i + s * h } else { xi_i - s * h };
                    let y = y0 * xi.sinh();
                    let dy = y0 * xi.cosh();
                    let ell = if right { &t.log_right[q] } else { &t.log_left[q] };
                    let ell_owned;
                    let ell = if shift == 2 {
                        ell.as_slice()
                    } else {
                        let sl = if right { s } else { 1.0 - s };
                        ell_owned = lagrange_weights(&stencil_offsets(shift), sl);
                        ell_owned.as_slice()
                    };
                    acc(start, ell, -lw * (y / x) * dy * h / PI);
                }
            } else {
                for (q, (&sg, &wg)) in gauss.nodes.iter().zip(&gauss.weights).enumerate() {
                    let xi = xi_k + sg * h;
                    let y = y0 * xi.sinh();
                    let dy = y0 * xi.cosh();
                    let kern = -phi(y / x) / PI;
                    acc(start, &t.gauss[shift][q], wg * kern * dy * h);
                }
            }
        }
        let sum: f64 = row.iter().sum();
        let xmax = mesh.x_max();
        let exact = -xmax * eval_f1(x / xmax) / PI;
        (row, (sum - exact).abs())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.mesh.len();
        &self.weights[i * n..(i + 1) * n]
    }

    /// Σ_j W_ij, the quadrature of T(1) over the truncated domain.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn centered_rows(&self) -> usize {
        self.centered_rows
    }
}

fn stencil_offsets(shift: usize) -> Vec<f64> {
    (0..STENCIL).map(|j| j as f64 - 2.0 - shift as f64).collect()
}

/// Power-tail parameters (amplitude, exponent) of an integrable grid function.
fn decaying_tail(f: &GridFunction) -> Result<Option<(f64, f64)>, TransformError> {
    match f.tail {
        None => Ok(None),
        Some(t) if t.amplitude == 0.0 && t.limit == 0.0 => Ok(None),
        Some(t) => {
            if t.limit != 0.0 || t.exponent <= 1.0 {
                Err(TransformError::TailTooHeavy(if t.limit != 0.0 { 0.0 } else { t.exponent }))
            } else {
                Ok(Some((t.amplitude, t.exponent)))
            }
        }
    }
}

/// τ(x) = ∫_X^∞ (y/X)^{−p} φ(y/x) dy for x ≤ X.
pub fn tail_kernel(x: f64, xmax: f64, p: f64) -> f64 {
    let z = x / xmax;
    if z == 0.0 {
        return 0.0;
    }
    if z < 0.5 {
        let z2 = z * z;
        let mut zp = z2;
        let mut s = 0.0;
        for n in 1..200 {
            let nf = n as f64;
            let term = zp / ((2.0 * nf + 1.0) * (2.0 * nf + p - 1.0));
            s += term;
            if term < 1e-17 * s {
                break;
            }
            zp *= z2;
        }
        -2.0 * xmax * s
    } else {
        // y = X/u
        let r = adaptive(|u: f64| u.powf(p - 2.0) * phi(1.0 / (u * z)), 0.0, 1.0, 1e-15, 2000);
        xmax * r.value
    }
}

/// b(f) = (2/π)∫₀^∞ f.
pub fn compute_b(f: &GridFunction) -> Result<f64, TransformError> {
    Ok(b_with_error(f)?.0)
}

fn b_with_error(f: &GridFunction) -> Result<(f64, f64), TransformError> {
    let xmax = f.mesh.x_max();
    let tail = match decaying_tail(f)? {
        Some((a, p)) => a * xmax.powf(1.0 - p) / (p - 1.0),
        None => 0.0,
    };
    Ok((2.0 / PI * (f.integral() + tail), 2.0 / PI * f.integral_error()))
}

/// Integrand (1 − f)/y² of c(f), with the y → 0 limit taken from a
/// least-squares fit in s = y² on [y_c, 10·y_c].
pub fn c_integrand(f: &GridFunction) -> GridFunction {
    let m = &f.mesh;
    let yc = C_SERIES_CUTOFF * m.params.scale;
    let mut vals: Vec<f64> = m
        .x
        .iter()
        .zip(&f.values)
        .map(|(&y, &v)| if y > 0.0 { (1.0 - v) / (y * y) } else { 0.0 })
        .collect();
    let idx = m.indices_in(yc, 10.0 * yc);
    // normal equations for a0 + a1 s + a2 s²
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    let s_scale = (10.0 * yc).powi(2);
    for &i in &idx {
        let s = m.x[i] * m.x[i] / s_scale;
        let row = [1.0, s, s * s];
        for a in 0..3 {
            atb[a] += row[a] * vals[i];
            for b in 0..3 {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let coef = solve3(ata, atb);
    for (i, &y) in m.x.iter().enumerate() {
        if y < yc {
            let s = y * y / s_scale;
            vals[i] = coef[0] + coef[1] * s + coef[2] * s * s;
        }
    }
    GridFunction::new(m.clone(), vals, Parity::Even, None)
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let fct = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= fct * a[col][c];
            }
            b[r] -= fct * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// c(f) = (4/(3π))∫₀^∞ (1 − f(y))/y² dy.
pub fn compute_c(f: &GridFunction) -> Result<f64, TransformError> {
    Ok(c_with_error(f)?.0)
}

fn c_with_error(f: &GridFunction) -> Result<(f64, f64), TransformError> {
    let xmax = f.mesh.x_max();
    let g = c_integrand(f);
    let tail_f = match decaying_tail(f)? {
        Some((a, p)) => a * xmax.powf(-1.0 - p) / (p + 1.0),
        None => 0.0,
    };
    let k = 4.0 / (3.0 * PI);
    Ok((k * (g.integral() + 1.0 / xmax - tail_f), k * g.integral_error()))
}

/// d(f) = (b + c)/(2c).
pub fn compute_d(f: &GridFunction) -> Result<f64, TransformError> {
    let b = compute_b(f)?;
    let c = compute_c(f)?;
    if c <= 0.0 {
        return Err(TransformError::NonPositiveC(c));
    }
    Ok((b + c) / (2.0 * c))
}

/// T(f) on the mesh of `op`.
pub fn apply_t(op: &KernelOperator, f: &GridFunction) -> Result<GridFunction, TransformError> {
    if !Arc::ptr_eq(&f.mesh, &op.mesh) && *f.mesh != *op.mesh {
        return Err(TransformError::MeshMismatch);
    }
    let tail = decaying_tail(f)?;
    let b = compute_b(f)?;
    let m = &*op.mesh;
    let n = m.len();
    let xmax = m.x_max();
    let fl = f.last();
    let tail_p = tail.map(|(_, p)| p);
    let shifted: Vec<f64> = f.values.iter().map(|v| v - 1.0).collect();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                return 0.0;
            }
            let x = m.x[i];
            let row = op.row(i);
            let tail_part = match tail_p {
                Some(p) => -fl * tail_kernel(x, xmax, p) / PI,
                None => 0.0,
            };
            if i < op.centered_rows {
                let s: f64 = row.iter().zip(&shifted).map(|(w, v)| w * v).sum();
                s + tail_part - xmax * eval_f1(x / xmax) / PI
            } else {
                let s: f64 = row.iter().zip(&f.values).map(|(w, v)| w * v).sum();
                s + tail_part
            }
        })
        .collect();
    let last = values[n - 1];
    let rate = tail_p.map_or(2.0, |p| p - 1.0);
    let t_tail = Tail { limit: -b, amplitude: (last + b) * xmax.powf(rate), exponent: rate };
    Ok(GridFunction::new(op.mesh.clone(), values, Parity::Even, Some(t_tail)))
}

/// Scalar functionals of f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub q: f64,
    pub b_err: f64,
    pub c_err: f64,
    pub q_err: f64,
}

impl Functionals {
    pub fn c_l(&self) -> f64 {
        self.b + self.c
    }

    pub fn c_omega(&self) -> f64 {
        0.5 * (self.c - self.b)
    }

    pub fn delta_d(&self) -> f64 {
        (self.d - 1.0) / (2.0 * self.d)
    }
}

/// ∫₀^∞ f·T(f) dx, including the tail.
fn integral_f_tf(f: &GridFunction, tf: &GridFunction, b: f64) -> Result<f64, TransformError> {
    let prod = GridFunction::new(
        f.mesh.clone(),
        f.values.iter().zip(&tf.values).map(|(a, c)| a * c).collect(),
        Parity::Even,
        None,
    );
    let xmax = f.mesh.x_max();
    let tail = match decaying_tail(f)? {
        Some((a, p)) => {
            let k = (tf.last() + b) * xmax.powf(p - 1.0);
            -b * a * xmax.powf(1.0 - p) / (p - 1.0) + a * k * xmax.powf(2.0 - 2.0 * p) / (2.0 * p - 2.0)
        }
        None => 0.0,
    };
    Ok(prod.integral() + tail)
}

/// Q(f) = (2/π)∫ f T(f) + b²/2, the symmetric double integral
/// (1/π²)∬ f(x)f(y)[(x/y + y/x)ln|(x+y)/(x−y)| − 2] reduced through T.
pub fn compute_q(op: &KernelOperator, f: &GridFunction) -> Result<f64, TransformError> {
    let tf = apply_t(op, f)?;
    let b = compute_b(f)?;
    Ok(2.0 / PI * integral_f_tf(f, &tf, b)? + 0.5 * b * b)
}

/// Q in the form −(2/π)∫ x f T(f)' dx.
pub fn compute_q_derivative_form(f: &GridFunction, tf: &GridFunction) -> Result<f64, TransformError> {
    let dt = tf.derivative();
    let prod = GridFunction::new(
        f.mesh.clone(),
        f.mesh.x.iter().zip(f.values.iter().zip(&dt.values)).map(|(x, (a, c))| x * a * c).collect(),
        Parity::Even,
        None,
    );
    let xmax = f.mesh.x_max();
    let tail = match (decaying_tail(f)?, tf.tail) {
        (Some((a, p)), Some(t)) => -t.amplitude * a * xmax.powf(2.0 - 2.0 * p) / 2.0,
        _ => 0.0,
    };
    Ok(-2.0 / PI * (prod.integral() + tail))
}

/// All functionals, with Q from the symmetric form.
pub fn functionals(op: &KernelOperator, f: &GridFunction) -> Result<(Functionals, GridFunction), TransformError> {
    let (b, b_err) = b_with_error(f)?;
    let (c, c_err) = c_with_error(f)?;
    if c <= 0.0 {
        return Err(TransformError::NonPositiveC(c));
    }
    let tf = apply_t(op, f)?;
    let q = 2.0 / PI * integral_f_tf(f, &tf, b)? + 0.5 * b * b;
    let q_alt = compute_q_derivative_form(f, &tf)?;
    let fx = Functionals { b, c, d: (b + c) / (2.0 * c), q, b_err, c_err, q_err: (q - q_alt).abs() };
    Ok((fx, tf))
}

/// |(1/π)∫_R H(ω)ω/x dx + H(ω)(0)²/2| for ω = x f, with H(ω) = −b − (xT(f))'.
pub fn hilbert_identity_check(op: &KernelOperator, f: &GridFunction) -> Result<f64, TransformError> {
    if f.values.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let tf = apply_t(op, f)?;
    let b = compute_b(f)?;
    let q_sym = 2.0 / PI * integral_f_tf(f, &tf, b)? + 0.5 * b * b;
    let q_der = compute_q_derivative_form(f, &tf)?;
    // LHS = −b² − (2/π)∫Tf − (2/π)∫xT'f, RHS = −b²/2
    let lhs = -b * b - (q_sym - 0.5 * b * b) + q_der;
    Ok((lhs + 0.5 * b * b).abs())
}

/// Validation path T(f)(x) = (1/π)∫ f'(y)·y·F1(x/y) dy by adaptive quadrature
/// of an analytic f with derivative `fp`.
pub fn apply_t_f1_form(fp: impl Fn(f64) -> f64, x: f64, upper: f64) -> f64 {
    let g = |y: f64| if y == 0.0 { 0.0 } else { fp(y) * y * eval_f1(x / y) };
    let mut pieces = vec![0.0, 0.5 * x, x, 2.0 * x];
    let mut b = 10.0 * x;
    while b < upper {
        pieces.push(b);
        b *= 100.0;
    }
    pieces.push(upper);
    pieces.windows(2).map(|w| adaptive(g, w[0], w[1], 1e-14, 4000).value).sum::<f64>() / PI
}
