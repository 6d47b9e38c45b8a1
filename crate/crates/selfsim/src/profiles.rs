//! Physical profiles, scaling exponents and far-field asymptotics of a fixed point.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{GridError, GridFunction, Mesh, MeshParams, Parity};
use crate::maps::{residual, MapBundle};
use crate::specfun::{format_sci, m0};
use crate::transform::{compute_b, TransformError};
use crate::verify::shape_margins;

/// Lower decade of the default fit window, relative to X.
pub const FIT_LO: f64 = 1e-3;
/// Upper decade of the default fit window, relative to X.
pub const FIT_HI: f64 = 1e-1;
/// Largest relative drift accepted as a plateau.
pub const MAX_DRIFT: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("not a fixed point: residual {0:.3e}")]
    NotConverged(f64),
    #[error("c_omega = 0: cannot renormalize")]
    Degenerate,
    #[error("{which} does not plateau: relative drift {drift:.3e}")]
    FitDegenerate { which: &'static str, drift: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Ω = x f, V = c_l x m/2, U with c_l + U/x = c g, and the exponents.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    pub omega: GridFunction,
    pub v: GridFunction,
    pub u: GridFunction,
    pub c_l: f64,
    pub c_omega: f64,
    pub c_theta: f64,
    /// Accumulated amplitude factor of the scaling symmetry.
    pub alpha: f64,
    /// Accumulated dilation factor of the scaling symmetry.
    pub beta: f64,
}

impl ProfileSet {
    pub fn delta_d(&self) -> f64 {
        -self.c_omega / self.c_l
    }

    /// CSV with columns x, omega, v, u.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,omega,v,u\n");
        for i in 0..self.omega.values.len() {
            let row = [self.omega.mesh.x[i], self.omega.values[i], self.v.values[i], self.u.values[i]];
            s.push_str(&row.map(format_sci).join(","));
            s.push('\n');
        }
        s
    }

    pub fn summary(&self) -> ProfileSummary {
        ProfileSummary {
            c_l: self.c_l,
            c_omega: self.c_omega,
            c_theta: self.c_theta,
            delta_d: self.delta_d(),
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSummary {
    pub c_l: f64,
    pub c_omega: f64,
    pub c_theta: f64,
    pub delta_d: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Profiles of the fixed point carried by `bundle`, which must satisfy
/// ‖f − R(f)‖ ≤ tol.
pub fn recover(bundle: &MapBundle, tol: f64) -> Result<ProfileSet, ProfileError> {
    let res = residual(&bundle.f, &bundle.r);
    if !(res <= tol) {
        return Err(ProfileError::NotConverged(res));
    }
    let (b, c) = (bundle.fx.b, bundle.fx.c);
    let c_l = b + c;
    let c_omega = 0.5 * (c - b);
    let omega = bundle.f.map(Parity::Odd, |x, f| x * f);
    let v = bundle.m.map(Parity::Odd, |x, m| 0.5 * c_l * x * m);
    let u = bundle.g.map(Parity::Odd, |x, g| (c * g - c_l) * x);
    Ok(ProfileSet { omega, v, u, c_l, c_omega, c_theta: c_l + 2.0 * c_omega, alpha: 1.0, beta: 1.0 })
}

/// Apply (αω(βx), α²v(βx), αc_l, αc_ω) with α = −1/c_ω and β = 1/(αΩ'(0)),
/// so that c_ω = −1 and Ω'(0) = 1 afterwards.
pub fn renormalize(ps: &ProfileSet) -> Result<ProfileSet, ProfileError> {
    if ps.c_omega == 0.0 || !ps.c_omega.is_finite() {
        return Err(ProfileError::Degenerate);
    }
    let alpha = -1.0 / ps.c_omega;
    let slope0 = ps.omega.derivative().values[0];
    let beta = 1.0 / (alpha * slope0);
    let old = ps.omega.mesh.params;
    let mesh = Mesh::shared(MeshParams { scale: old.scale / beta, ..old })?;
    let scaled = |g: &GridFunction, k: f64| GridFunction::new(mesh.clone(), g.values.iter().map(|v| k * v).collect(), Parity::Odd, None);
    let c_l = alpha * ps.c_l;
    Ok(ProfileSet {
        omega: scaled(&ps.omega, alpha),
        v: scaled(&ps.v, alpha * alpha),
        u: scaled(&ps.u, alpha / beta),
        c_l,
        c_omega: -1.0,
        c_theta: c_l - 2.0,
        alpha: ps.alpha * alpha,
        beta: ps.beta * beta,
    })
}

/// Plateau of x^k·F over a window, extrapolated with C + K x^{−δ}.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Plateau {
    /// Extrapolated limit.
    pub limit: f64,
    /// Mean of the sampled plateau values.
    pub mean: f64,
    /// (max − min)/|mean| over the window.
    pub drift: f64,
    /// RMS of the fit residual relative to the limit.
    pub fit_rms: f64,
}

fn plateau(gf: &GridFunction, power: f64, delta: f64, lo: f64, hi: f64) -> Result<Plateau, ProfileError> {
    let idx = gf.mesh.indices_in(lo, hi);
    if idx.len() < 8 {
        return Err(GridError::DegenerateWindow(idx.len()).into());
    }
    let pts: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| {
            let x = gf.mesh.x[i];
            (x.powf(-delta), x.powf(power) * gf.values[i])
        })
        .collect();
    let n = pts.len() as f64;
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mn, mx) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let mz = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let szz: f64 = pts.iter().map(|p| (p.0 - mz).powi(2)).sum();
    let szy: f64 = pts.iter().map(|p| (p.0 - mz) * (p.1 - mean)).sum();
    let k = if szz > 0.0 { szy / szz } else { 0.0 };
    let limit = mean - k * mz;
    let rms = (pts.iter().map(|p| (p.1 - limit - k * p.0).powi(2)).sum::<f64>() / n).sqrt() / limit.abs();
    Ok(Plateau { limit, mean, drift: (mx - mn) / mean.abs(), fit_rms: rms })
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticReport {
    pub delta_d: f64,
    pub window: (f64, f64),
    /// x^{1+δ_d} f
    pub f_plateau: Plateau,
    /// x^{1+2δ_d} m
    pub m_plateau: Plateau,
    /// x^{1/2+δ_d} ψ
    pub psi_plateau: Plateau,
    pub c_r: f64,
    pub c_m: f64,
    pub c0: f64,
    /// |C_m − C₀²/(2d)| / C_m
    pub cm_consistency: f64,
}

/// Far-field constants over [X·FIT_LO, X·FIT_HI].
pub fn asymptotics(bundle: &MapBundle) -> Result<AsymptoticReport, ProfileError> {
    let xm = bundle.f.mesh.x_max();
    asymptotics_on(bundle, xm * FIT_LO, xm * FIT_HI)
}

pub fn asymptotics_on(bundle: &MapBundle, lo: f64, hi: f64) -> Result<AsymptoticReport, ProfileError> {
    let d = bundle.fx.d;
    let dd = bundle.fx.delta_d();
    let fp = plateau(&bundle.f, 1.0 + dd, dd, lo, hi)?;
    let mp = plateau(&bundle.m, 1.0 + 2.0 * dd, dd, lo, hi)?;
    let pp = plateau(&bundle.psi, 0.5 + dd, dd, lo, hi)?;
    for (which, p) in [("x^(1+delta) f", fp), ("x^(1+2 delta) m", mp), ("x^(1/2+delta) psi", pp)] {
        if !(p.drift < MAX_DRIFT) {
            return Err(ProfileError::FitDegenerate { which, drift: p.drift });
        }
    }
    let cm_pred = pp.limit * pp.limit / (2.0 * d);
    Ok(AsymptoticReport {
        delta_d: dd,
        window: (lo, hi),
        f_plateau: fp,
        m_plateau: mp,
        psi_plateau: pp,
        c_r: fp.limit,
        c_m: mp.limit,
        c0: pp.limit,
        cm_consistency: ((mp.limit - cm_pred) / mp.limit).abs(),
    })
}

/// The b–c identity and the lower bounds on b/c and d that follow from it.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub b: f64,
    pub c: f64,
    pub b_of_m: f64,
    pub q: f64,
    /// (b − c)b − (b + c)b(m)
    pub lhs: f64,
    /// |lhs − 2Q|
    pub residual: f64,
    /// k = b/c
    pub k: f64,
    /// k(k−1) − (k+1)b(m)/c, bounded below by 1/2.
    pub k_quadratic: f64,
    /// k − (1 + √10/2)
    pub k_margin: f64,
    /// d − (1 + √10/4)
    pub d_margin: f64,
    /// δ_d − √10/(8 + 2√10)
    pub delta_margin: f64,
}

/// |(b − c)b − (b + c)b(m) − 2Q|, which vanishes only at a fixed point.
pub fn identity_check_bc(bundle: &MapBundle) -> Result<IdentityReport, ProfileError> {
    let fx = bundle.fx;
    let (b, c, q) = (fx.b, fx.c, fx.q);
    let bm = compute_b(&bundle.m)?;
    let lhs = (b - c) * b - (b + c) * bm;
    let k = b / c;
    let s10 = 10f64.sqrt();
    Ok(IdentityReport {
        b,
        c,
        b_of_m: bm,
        q,
        lhs,
        residual: (lhs - 2.0 * q).abs(),
        k,
        k_quadratic: k * (k - 1.0) - (k + 1.0) * bm / c,
        k_margin: k - (1.0 + 0.5 * s10),
        d_margin: fx.d - (1.0 + 0.25 * s10),
        delta_margin: fx.delta_d() - s10 / (8.0 + 2.0 * s10),
    })
}

/// Nodewise checks of the recovered profiles.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileChecks {
    /// max (1+x)^{δ_d}|(c_l x + u)Ω' − c_ω Ω − V|
    pub eq_omega: f64,
    /// max (1+x)^{2δ_d}|(c_l x + u)V' − (2c_ω − u')V|
    pub eq_v: f64,
    /// min of c_l + U/x
    pub out_pushing_min: f64,
    /// |c_l − 2V'(0)/Ω'(0)|
    pub cl_relation: f64,
    /// |c_ω − (c_l/2 + U'(0))|
    pub comega_relation: f64,
    pub omega_slope0: f64,
    pub u_slope0: f64,
    /// Worst relative margins for f = Ω/x and m: (nonincreasing, convex in s).
    pub f_shape: (f64, f64),
    pub m_shape: (f64, f64),
}

pub fn check_profiles(ps: &ProfileSet) -> ProfileChecks {
    let x = &ps.omega.mesh.x;
    let dd = ps.delta_d();
    let (dom, dv, du) = (ps.omega.derivative(), ps.v.derivative(), ps.u.derivative());
    let mut eq_omega: f64 = 0.0;
    let mut eq_v: f64 = 0.0;
    let mut push_min = f64::INFINITY;
    for i in 0..x.len() {
        let xi = x[i];
        let vel = ps.c_l * xi + ps.u.values[i];
        let e1 = vel * dom.values[i] - ps.c_omega * ps.omega.values[i] - ps.v.values[i];
        let e2 = vel * dv.values[i] - (2.0 * ps.c_omega - du.values[i]) * ps.v.values[i];
        eq_omega = eq_omega.max(e1.abs() * (1.0 + xi).powf(dd));
        eq_v = eq_v.max(e2.abs() * (1.0 + xi).powf(2.0 * dd));
        let op = if xi == 0.0 { ps.c_l + du.values[0] } else { ps.c_l + ps.u.values[i] / xi };
        push_min = push_min.min(op);
    }
    let (w0, v0, u0) = (dom.values[0], dv.values[0], du.values[0]);
    // Ω/x and V/x, with the slope at 0 as the value there.
    let over_x = |g: &GridFunction, slope: f64| {
        let vals = g.values.iter().zip(x).map(|(v, &xi)| if xi == 0.0 { slope } else { v / xi }).collect();
        GridFunction::new(g.mesh.clone(), vals, Parity::Even, None)
    };
    let f = over_x(&ps.omega, w0);
    let m = over_x(&ps.v, v0);
    let (fm, fc) = shape_margins(&f);
    let (mm, mc) = shape_margins(&m);
    ProfileChecks {
        eq_omega,
        eq_v,
        out_pushing_min: push_min,
        cl_relation: (ps.c_l - 2.0 * v0 / w0).abs(),
        comega_relation: (ps.c_omega - (0.5 * ps.c_l + u0)).abs(),
        omega_slope0: w0,
        u_slope0: u0,
        f_shape: (fm.0, fc.0),
        m_shape: (mm.0, mc.0),
    }
}

/// CSV tables of the three figure panels: f and m, g, and the plateaus.
pub fn plot_data(bundle: &MapBundle) -> Vec<(&'static str, String)> {
    let x = &bundle.f.mesh.x;
    let dd = bundle.fx.delta_d();
    let mut fig1 = String::from("x,s,f,m,m0\n");
    let mut fig2 = String::from("x,s,g,upper\n");
    let mut fig3 = String::from("x,x^(1+delta)f,x^(1+2delta)m\n");
    for i in 0..x.len() {
        let xi = x[i];
        let (f, m, g) = (bundle.f.values[i], bundle.m.values[i], bundle.g.values[i]);
        let row = |v: &[f64]| v.iter().map(|&z| format_sci(z)).collect::<Vec<_>>().join(",") + "\n";
        fig1.push_str(&row(&[xi, xi * xi, f, m, m0(xi)]));
        fig2.push_str(&row(&[xi, xi * xi, g, 1.0 + 0.5 * xi * xi]));
        if xi >= 1.0 {
            fig3.push_str(&row(&[xi, xi.powf(1.0 + dd) * f, xi.powf(1.0 + 2.0 * dd) * m]));
        }
    }
    vec![("fig1_f_m.csv", fig1), ("fig2_g.csv", fig2), ("fig3_asymptotics.csv", fig3)]
}

/// Mesh shared by the profiles (scaled after renormalization).
pub fn profile_mesh(ps: &ProfileSet) -> Arc<Mesh> {
    ps.omega.mesh.clone()
}
