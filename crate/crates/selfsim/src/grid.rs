//! Half-line mesh, grid functions, interpolation, differentiation and the
//! algebraic tail model beyond the truncation radius.
//!
//! Nodes are x_k = y0·sinh(k·h): linear near 0, log-uniform beyond y0.
//! All local operations (interpolation, quadrature, differentiation) work on
//! the uniform coordinate ξ = asinh(x/y0); values at ξ < 0 come from the
//! parity of the function.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{fd_weights_first, lagrange_weights, GaussRule};
use crate::specfun::format_sci;

/// Points in the local interpolation stencil.
pub const STENCIL: usize = 6;
/// Points in the finite-difference stencil for derivatives.
pub const FD_STENCIL: usize = 9;
/// Hard cap on the number of nodes.
pub const MAX_NODES: usize = 8192;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),
    #[error("degenerate fit window: {0} usable nodes (need at least 8)")]
    DegenerateWindow(usize),
    #[error("mesh mismatch between grid functions")]
    MeshMismatch,
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    /// Nodes per decade in the log-uniform region.
    pub per_decade: usize,
    /// Scale of the linear patch near 0.
    pub x_min: f64,
    /// Truncation radius.
    pub x_max: f64,
    /// Multiplies every node; 1 for standard meshes.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for MeshParams {
    fn default() -> Self {
        Self { per_decade: 64, x_min: 1e-12, x_max: 1e16, scale: 1.0 }
    }
}

impl MeshParams {
    pub fn with_density(per_decade: usize) -> Self {
        Self { per_decade, ..Self::default() }
    }

    pub fn doubled(&self) -> Self {
        Self { per_decade: 2 * self.per_decade, ..*self }
    }
}

#[derive(Debug)]
pub struct Mesh {
    pub params: MeshParams,
    /// Uniform spacing in ξ.
    pub h: f64,
    /// x = y0·sinh(ξ).
    pub y0: f64,
    pub x: Vec<f64>,
    /// dx/dξ at the nodes.
    pub dxdxi: Vec<f64>,
    /// Index of the node x = 1 (before scaling).
    pub one_index: usize,
    cell_weights: Vec<Vec<f64>>,
    fd_weights: Vec<Vec<f64>>,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl Mesh {
    pub fn new(params: MeshParams) -> Result<Self, GridError> {
        let p = params;
        if p.per_decade < 8 {
            return Err(GridError::InvalidMesh("per_decade must be at least 8".into()));
        }
        if !(p.x_min > 0.0 && p.x_min < 1e-2 && p.x_max > 1e2 && p.x_max.is_finite()) {
            return Err(GridError::InvalidMesh("need 0 < x_min < 1e-2 and 1e2 < x_max < inf".into()));
        }
        if !(p.scale > 0.0 && p.scale.is_finite()) {
            return Err(GridError::InvalidMesh("scale must be positive".into()));
        }
        let h = std::f64::consts::LN_10 / p.per_decade as f64;
        let k1 = ((1.0 / p.x_min).asinh() / h).round() as usize;
        let y0 = 1.0 / (k1 as f64 * h).sinh();
        let n = ((p.x_max / y0).asinh() / h).round() as usize;
        if n + 1 > MAX_NODES {
            return Err(GridError::InvalidMesh(format!("{} nodes exceed the cap {}", n + 1, MAX_NODES)));
        }
        let mut x: Vec<f64> = (0..=n).map(|k| y0 * (k as f64 * h).sinh()).collect();
        x[k1] = 1.0;
        x[n] = x[n].max(p.x_max);
        if ((x[n] - p.x_max) / p.x_max).abs() < 1e-10 {
            x[n] = p.x_max;
        }
        let mut dxdxi: Vec<f64> = (0..=n).map(|k| y0 * (k as f64 * h).cosh()).collect();
        for v in x.iter_mut().chain(dxdxi.iter_mut()) {
            *v *= p.scale;
        }
        let y0 = y0 * p.scale;

        let g = GaussRule::new(8);
        let cell_weights = (0..3)
            .map(|shift| {
                let offs: Vec<f64> = (0..STENCIL).map(|j| j as f64 - 2.0 - shift as f64).collect();
                let mut w = vec![0.0; STENCIL];
                for (&s, &gw) in g.nodes.iter().zip(&g.weights) {
                    for (wj, lj) in w.iter_mut().zip(lagrange_weights(&offs, s)) {
                        *wj += gw * lj;
                    }
                }
                w
            })
            .collect();
        let half = (FD_STENCIL / 2) as isize;
        let fd_weights = (0..=half)
            .map(|shift| {
                let offs: Vec<f64> = (0..FD_STENCIL as isize).map(|j| (j - half - shift) as f64).collect();
                fd_weights_first(&offs, 0.0)
            })
            .collect();
        Ok(Self { params: p, h, y0, x, dxdxi, one_index: k1, cell_weights, fd_weights })
    }

    pub fn shared(params: MeshParams) -> Result<Arc<Self>, GridError> {
        Self::new(params).map(Arc::new)
    }

    /// Index of the last node.
    pub fn last(&self) -> usize {
        self.x.len() - 1
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.last()]
    }

    /// ξ coordinate of an abscissa.
    pub fn xi_of(&self, x: f64) -> f64 {
        (x / self.y0).asinh()
    }

    /// Abscissa at ξ.
    pub fn x_of(&self, xi: f64) -> f64 {
        self.y0 * xi.sinh()
    }

    pub fn dxdxi_of(&self, xi: f64) -> f64 {
        self.y0 * xi.cosh()
    }

    /// First node of the interpolation stencil for cell [k, k+1].
    pub fn stencil_start(&self, k: usize) -> isize {
        let s = k as isize - 2;
        s.min(self.last() as isize + 1 - STENCIL as isize)
    }

    /// Offset of cell k within its stencil, as a shift from the centred layout.
    fn cell_shift(&self, k: usize) -> usize {
        (k as isize - 2 - self.stencil_start(k)) as usize
    }

    /// Node abscissas whose values are within [lo, hi].
    pub fn indices_in(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.x[i] >= lo && self.x[i] <= hi).collect()
    }

    /// Nearest node index to x.
    pub fn nearest(&self, x: f64) -> usize {
        let k = (self.xi_of(x) / self.h).round();
        (k.max(0.0) as usize).min(self.last())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    pub fn times(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Model `limit + amplitude·x^(−exponent)` for x beyond the truncation radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tail {
    pub limit: f64,
    pub amplitude: f64,
    pub exponent: f64,
}

impl Tail {
    pub fn power(amplitude: f64, exponent: f64) -> Self {
        Self { limit: 0.0, amplitude, exponent }
    }

    /// Power tail that matches `value` at `x`.
    pub fn matching(value: f64, x: f64, exponent: f64) -> Self {
        Self::power(value * x.powf(exponent), exponent)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.limit + self.amplitude * x.powf(-self.exponent)
    }
}

#[derive(Debug, Clone)]
pub struct GridFunction {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
    pub parity: Parity,
    /// None: truncated to zero beyond the last node.
    pub tail: Option<Tail>,
}

#[derive(Serialize, Deserialize)]
struct GridFunctionDoc {
    mesh: MeshParams,
    parity: Parity,
    tail: Option<Tail>,
    x: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>, parity: Parity, tail: Option<Tail>) -> Self {
        assert_eq!(mesh.len(), values.len(), "values must match mesh nodes");
        Self { mesh, values, parity, tail }
    }

    pub fn from_fn(mesh: &Arc<Mesh>, parity: Parity, tail: Option<Tail>, f: impl Fn(f64) -> f64) -> Self {
        let values = mesh.x.iter().map(|&x| f(x)).collect();
        Self::new(mesh.clone(), values, parity, tail)
    }

    pub fn constant(mesh: &Arc<Mesh>, c: f64) -> Self {
        let tail = Tail { limit: c, amplitude: 0.0, exponent: 1.0 };
        Self::new(mesh.clone(), vec![c; mesh.len()], Parity::Even, Some(tail))
    }

    pub fn x(&self) -> &[f64] {
        &self.mesh.x
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Value at stencil index `j`, using parity for j < 0.
    #[inline]
    pub fn at(&self, j: isize) -> f64 {
        if j >= 0 {
            self.values[j as usize]
        } else {
            self.parity.sign() * self.values[(-j) as usize]
        }
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(GridError::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn same_mesh(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh
    }

    pub fn map(&self, parity: Parity, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        let values = self.mesh.x.iter().zip(&self.values).map(|(&x, &v)| f(x, v)).collect();
        GridFunction::new(self.mesh.clone(), values, parity, None)
    }

    /// Value beyond the truncation radius.
    pub fn beyond(&self, x: f64) -> f64 {
        self.tail.map_or(0.0, |t| t.eval(x))
    }

    /// Interpolant in ξ from the local Lagrange stencil (linear in the data).
    pub fn lagrange_at(&self, x: f64) -> f64 {
        let m = &*self.mesh;
        if x >= m.x_max() {
            return if x == m.x_max() { self.last() } else { self.beyond(x) };
        }
        let xi = m.xi_of(x.abs()) / m.h;
        let k = (xi.floor() as usize).min(m.last() - 1);
        let start = m.stencil_start(k);
        let offs: Vec<f64> = (0..STENCIL).map(|j| (start + j as isize) as f64).collect();
        let w = lagrange_weights(&offs, xi);
        let v: f64 = w.iter().enumerate().map(|(j, wj)| wj * self.at(start + j as isize)).sum();
        if x < 0.0 {
            self.parity.sign() * v
        } else {
            v
        }
    }

    /// Derivative with respect to ξ at node i, by finite differences.
    fn dxi_at(&self, i: usize) -> f64 {
        let m = &*self.mesh;
        let half = (FD_STENCIL / 2) as isize;
        let start = (i as isize - half).min(m.last() as isize + 1 - FD_STENCIL as isize);
        let shift = (i as isize - half - start) as usize;
        let w = &m.fd_weights[shift];
        // The weights sum to zero; differencing against the centre keeps
        // their rounding from being amplified by small dx/dξ near 0.
        let fi = self.values[i];
        w.iter().enumerate().map(|(j, wj)| wj * (self.at(start + j as isize) - fi)).sum::<f64>() / m.h
    }

    /// Nodal derivative dF/dx.
    pub fn derivative(&self) -> GridFunction {
        let m = &self.mesh;
        let values = (0..m.len()).map(|i| self.dxi_at(i) / m.dxdxi[i]).collect();
        let tail = self.tail.and_then(|t| {
            (t.amplitude != 0.0).then(|| Tail::power(-t.exponent * t.amplitude, t.exponent + 1.0))
        });
        GridFunction::new(m.clone(), values, self.parity.flip(), tail.or(Some(Tail::power(0.0, 1.0))))
    }

    /// Shape-preserving cubic Hermite interpolation in ξ.
    pub fn interpolate(&self, x: f64) -> f64 {
        let m = &*self.mesh;
        if x < 0.0 {
            return self.parity.sign() * self.interpolate(-x);
        }
        if x > m.x_max() {
            return self.beyond(x);
        }
        let xi = m.xi_of(x) / m.h;
        let k = (xi.floor() as usize).min(m.last() - 1);
        if m.x[k] == x {
            return self.values[k];
        }
        if m.x[k + 1] == x {
            return self.values[k + 1];
        }
        let t = xi - k as f64;
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        let delta = v1 - v0;
        let mut d0 = self.dxi_at(k) * m.h;
        let mut d1 = self.dxi_at(k + 1) * m.h;
        if delta == 0.0 {
            d0 = 0.0;
            d1 = 0.0;
        } else {
            if d0 * delta < 0.0 {
                d0 = 0.0;
            }
            if d1 * delta < 0.0 {
                d1 = 0.0;
            }
            let a = d0 / delta;
            let b = d1 / delta;
            let r = a * a + b * b;
            if r > 9.0 {
                let s = 3.0 / r.sqrt();
                d0 *= s;
                d1 *= s;
            }
        }
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * v0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * v1 + (t3 - t2) * d1
    }

    /// ∫₀^{x_N} F dx by the composite Lagrange rule in ξ.
    pub fn integral(&self) -> f64 {
        self.cumulative().pop().unwrap_or(0.0)
    }

    /// Running integrals ∫₀^{x_i} F dx at every node.
    pub fn cumulative(&self) -> Vec<f64> {
        let m = &*self.mesh;
        let g = |j: isize| {
            let i = j.unsigned_abs();
            self.at(j) * m.dxdxi[i]
        };
        let mut out = vec![0.0; m.len()];
        for k in 0..m.last() {
            let start = m.stencil_start(k);
            let w = &m.cell_weights[m.cell_shift(k)];
            let cell: f64 = w.iter().enumerate().map(|(j, wj)| wj * g(start + j as isize)).sum();
            out[k + 1] = out[k] + cell * m.h;
        }
        out
    }

    /// Error estimate for `integral`: compares with the same rule on every
    /// other node and scales by the sixth-order convergence factor.
    pub fn integral_error(&self) -> f64 {
        let m = &*self.mesh;
        let nc = m.last() / 2;
        if nc < STENCIL {
            return f64::NAN;
        }
        let g = |j: isize| {
            let jj = 2 * j;
            self.at(jj) * m.dxdxi[jj.unsigned_abs()]
        };
        let mut coarse = 0.0;
        for k in 0..nc {
            let start = (k as isize - 2).min(nc as isize + 1 - STENCIL as isize);
            let shift = (k as isize - 2 - start) as usize;
            let w = &m.cell_weights[shift];
            coarse += w.iter().enumerate().map(|(j, wj)| wj * g(start + j as isize)).sum::<f64>() * 2.0 * m.h;
        }
        let fine = self.cumulative()[2 * nc];
        (fine - coarse).abs() / 63.0
    }

    /// Least-squares fit of ln|F| = ln C − p ln x over nodes in [lo, hi].
    pub fn fit_tail(&self, lo: f64, hi: f64) -> Result<(f64, f64), GridError> {
        let pts: Vec<(f64, f64)> = self
            .mesh
            .indices_in(lo, hi)
            .into_iter()
            .filter(|&i| self.values[i] > 0.0)
            .map(|i| (self.mesh.x[i].ln(), self.values[i].ln()))
            .collect();
        if pts.len() < 8 {
            return Err(GridError::DegenerateWindow(pts.len()));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = sxy / sxx;
        Ok(((my - slope * mx).exp(), -slope))
    }

    /// CSV with columns x, value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,value\n");
        for (x, v) in self.mesh.x.iter().zip(&self.values) {
            s.push_str(&format_sci(*x));
            s.push(',');
            s.push_str(&format_sci(*v));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> Result<String, GridError> {
        let doc = GridFunctionDoc {
            mesh: self.mesh.params,
            parity: self.parity,
            tail: self.tail,
            x: self.mesh.x.clone(),
            values: self.values.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self, GridError> {
        let doc: GridFunctionDoc = serde_json::from_str(s)?;
        let mesh = Mesh::shared(doc.mesh)?;
        if doc.values.len() != mesh.len() {
            return Err(GridError::MeshMismatch);
        }
        let gf = GridFunction::new(mesh, doc.values, doc.parity, doc.tail);
        gf.check_finite()?;
        Ok(gf)
    }

    /// Copy of the data on another mesh with identical parameters.
    pub fn rebind(&self, mesh: &Arc<Mesh>) -> Result<Self, GridError> {
        if **mesh != *self.mesh {
            return Err(GridError::MeshMismatch);
        }
        Ok(GridFunction::new(mesh.clone(), self.values.clone(), self.parity, self.tail))
    }
}

/// Sup of |a − b|·w(x) over nodes.
pub fn weighted_sup(a: &GridFunction, b: &GridFunction, w: impl Fn(f64) -> f64) -> f64 {
    a.mesh
        .x
        .iter()
        .zip(a.values.iter().zip(&b.values))
        .map(|(&x, (u, v))| (u - v).abs() * w(x))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::m0;

    fn mesh() -> Arc<Mesh> {
        Mesh::shared(MeshParams::default()).unwrap()
    }

    #[test]
    fn mesh_has_exact_special_nodes() {
        let m = mesh();
        assert_eq!(m.x[0], 0.0);
        assert_eq!(m.x[m.one_index], 1.0);
        assert_eq!(m.x_max(), 1e16);
        assert!(m.x.windows(2).all(|w| w[0] < w[1]));
        let per_decade = m.indices_in(1.0, 10.0).len() - 1;
        assert!(per_decade >= 32);
    }

    #[test]
    fn integral_of_m0() {
        let m = mesh();
        let f = GridFunction::from_fn(&m, Parity::Even, None, m0);
        let exact = std::f64::consts::PI / (2.0 * std::f64::consts::SQRT_2);
        assert!((f.integral() - exact).abs() < 1e-10, "{}", f.integral() - exact);
    }

    #[test]
    fn derivative_odd_at_zero() {
        let m = mesh();
        let f = GridFunction::from_fn(&m, Parity::Odd, None, |x| x * (-x).exp());
        assert!((f.derivative().values[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = mesh();
        let f = GridFunction::from_fn(&m, Parity::Even, Some(Tail::power(4.0, 4.0)), m0);
        let g = GridFunction::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f.values, g.values);
        assert_eq!(f.tail, g.tail);
    }
}
