//! Special functions F1, F2, φ and the universal constants that define the
//! admissible set of profiles.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;

/// Number of Taylor terms used in the series regimes.
pub const N_TAYLOR: usize = 64;
/// Below this argument the series is used.
pub const T_LO: f64 = 0.5;
/// Above this argument the reflected series is used.
pub const T_HI: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("argument {0} outside the domain t >= 0")]
    Domain(f64),
    #[error("pole at t = 1")]
    Pole,
    #[error("quadrature did not converge: error estimate {0:e}")]
    Quadrature(f64),
}

fn log_ratio(t: f64) -> f64 {
    // ln|(t+1)/(t-1)|
    (t + 1.0).ln() - (t - 1.0).abs().ln()
}

fn f1_series(t: f64) -> f64 {
    let t2 = t * t;
    let mut p = 1.0;
    let mut s = 0.0;
    for n in 1..=N_TAYLOR {
        p *= t2;
        let nf = n as f64;
        s += 2.0 * p / (4.0 * nf * nf - 1.0);
    }
    s
}

fn f1p_series(t: f64) -> f64 {
    let t2 = t * t;
    let mut p = t;
    let mut s = 0.0;
    for n in 1..=N_TAYLOR {
        let nf = n as f64;
        s += 4.0 * nf * p / (4.0 * nf * nf - 1.0);
        p *= t2;
    }
    s
}

fn f2_den(n: f64) -> f64 {
    (2.0 * n - 1.0) * (2.0 * n + 1.0) * (2.0 * n + 3.0)
}

/// Σ a_n t^{2n+shift}, with coefficients a_n supplied by `coef`.
fn even_series(t: f64, shift: i32, coef: impl Fn(f64) -> f64) -> f64 {
    let t2 = t * t;
    let mut p = t.powi(shift) * t2;
    let mut s = 0.0;
    for n in 1..=N_TAYLOR {
        s += coef(n as f64) * p;
        p *= t2;
    }
    s
}

/// Geometric bound on the series remainder after `N_TAYLOR` terms for the
/// F1 series at argument `t < 1`.
pub fn f1_series_remainder(t: f64) -> f64 {
    let n = (N_TAYLOR + 1) as f64;
    2.0 * t.powi(2 * (N_TAYLOR as i32 + 1)) / (4.0 * n * n - 1.0) / (1.0 - t * t)
}

/// F1(t) = (t²−1)/(2t)·ln|(t+1)/(t−1)| + 1. Even in t.
pub fn eval_f1(t: f64) -> f64 {
    let t = t.abs();
    if t == 0.0 {
        0.0
    } else if t < T_LO {
        f1_series(t)
    } else if t > T_HI {
        if t.is_infinite() {
            return 2.0;
        }
        2.0 - f1_series(1.0 / t)
    } else if t == 1.0 {
        1.0
    } else {
        (t * t - 1.0) / (2.0 * t) * log_ratio(t) + 1.0
    }
}

/// F1'(t) for t >= 0, t != 1.
pub fn eval_f1_prime(t: f64) -> Result<f64, SpecError> {
    if !(t >= 0.0) {
        return Err(SpecError::Domain(t));
    }
    if t == 1.0 {
        return Err(SpecError::Pole);
    }
    Ok(if t < T_LO {
        f1p_series(t)
    } else if t > T_HI {
        if t.is_infinite() {
            return Ok(0.0);
        }
        let s = 1.0 / t;
        s * s * f1p_series(s)
    } else {
        (t * t + 1.0) / (2.0 * t * t) * log_ratio(t) - 1.0 / t
    })
}

/// F2(t) = (3t⁴−2t²−1)/(8t³)·ln|(t+1)/(t−1)| + 1/(4t²) + 7/12. Even in t.
pub fn eval_f2(t: f64) -> f64 {
    let t = t.abs();
    if t == 0.0 {
        0.0
    } else if t < T_LO {
        even_series(t, 0, |n| 4.0 * (n + 1.0) / f2_den(n))
    } else if t > T_HI {
        if t.is_infinite() {
            return 4.0 / 3.0;
        }
        4.0 / 3.0 - even_series(1.0 / t, 2, |n| 4.0 * n / f2_den(n))
    } else if t == 1.0 {
        5.0 / 6.0
    } else {
        let t2 = t * t;
        (3.0 * t2 * t2 - 2.0 * t2 - 1.0) / (8.0 * t2 * t) * log_ratio(t) + 0.25 / t2 + 7.0 / 12.0
    }
}

/// F2'(t) for t >= 0, t != 1.
pub fn eval_f2_prime(t: f64) -> Result<f64, SpecError> {
    if !(t >= 0.0) {
        return Err(SpecError::Domain(t));
    }
    if t == 1.0 {
        return Err(SpecError::Pole);
    }
    Ok(if t < T_LO {
        even_series(t, -1, |n| 8.0 * n * (n + 1.0) / f2_den(n))
    } else if t > T_HI {
        if t.is_infinite() {
            return Ok(0.0);
        }
        even_series(1.0 / t, 3, |n| 8.0 * n * (n + 1.0) / f2_den(n))
    } else {
        let t2 = t * t;
        (3.0 * t2 * t2 + 2.0 * t2 + 3.0) / (8.0 * t2 * t2) * log_ratio(t) - (3.0 * t2 + 3.0) / (4.0 * t2 * t)
    })
}

/// φ(t) = 2 − t·ln|(1+t)/(1−t)|, the kernel profile of T. Equals −∞ at t = 1.
pub fn phi(t: f64) -> f64 {
    let t = t.abs();
    if t < T_LO {
        // 2 − 2t·atanh(t)
        2.0 - t * (2.0 * t / (1.0 - t)).ln_1p()
    } else if t > T_HI {
        if t.is_infinite() {
            return 0.0;
        }
        let s2 = 1.0 / (t * t);
        let mut p = s2;
        let mut sum = 0.0;
        for n in 1..=N_TAYLOR {
            let term = p / (2 * n + 1) as f64;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
            p *= s2;
        }
        -2.0 * sum
    } else if t == 1.0 {
        f64::NEG_INFINITY
    } else {
        2.0 - t * log_ratio(t)
    }
}

/// ∫₀^T φ(t) dt = T·F1(1/T).
pub fn phi_integral(upper: f64) -> f64 {
    if upper == 0.0 || upper.is_infinite() {
        0.0
    } else {
        upper * eval_f1(1.0 / upper)
    }
}

/// The root of φ on (0, 1), by bisection.
pub fn phi_root() -> f64 {
    let (mut lo, mut hi) = (0.5, 0.99);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// m0(x) = (1 + x²/2)⁻².
pub fn m0(x: f64) -> f64 {
    let q = 1.0 + 0.5 * x * x;
    1.0 / (q * q)
}

/// ∫_X^∞ m0, by its asymptotic series (valid for X >= 10).
fn m0_tail_integral(x: f64, extra_power: i32) -> f64 {
    // ∫_X^∞ y^{-extra} (y²+2)^{-2} dy = Σ_k (k+1)(−2)^k X^{-(2k+3+extra)}/(2k+3+extra)
    let inv2 = 1.0 / (x * x);
    let mut p = x.powi(-(3 + extra_power));
    let mut s = 0.0;
    for k in 0..40 {
        let e = (2 * k + 3 + extra_power) as f64;
        let term = (k + 1) as f64 * p / e;
        s += if k % 2 == 0 { term } else { -term };
        p *= 2.0 * inv2;
        if term.abs() < 1e-20 * s.abs() {
            break;
        }
    }
    4.0 * s
}

/// Universal constants of the admissible set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniversalConstants {
    pub eta: f64,
    pub delta0: f64,
    /// Root of φ in (0, 1).
    pub t0: f64,
    pub l0: f64,
    pub l0_error: f64,
    /// 2·t0·F1(1/t0), the antiderivative form of L0.
    pub l0_closed_form: f64,
    /// Quadrature value of ∫₀^∞ φ.
    pub phi_integral: f64,
    /// Slope of the linear branch of g1.
    pub g1_slope: f64,
    /// Abscissa where the two branches of g1 meet.
    pub g1_kink: f64,
    pub b_m1: f64,
    pub c_m1: f64,
    /// b(m1) − √2/2, resolved below double precision of b(m1).
    pub b_m1_excess: f64,
    /// d(m1) rounded to f64 (indistinguishable from 1).
    pub d_m1: f64,
    /// d(m1) − 1.
    pub d_m1_minus_one: f64,
    pub delta1: f64,
    pub delta_rho: f64,
    /// ln L1. L1 itself overflows f64.
    pub ln_l1: f64,
    /// ln L1 from direct inversion of the level equation.
    pub ln_l1_inverted: f64,
}

impl UniversalConstants {
    /// g1(x) = min{1 + x²/2, 1 + (3L0/(4η))|x|}.
    pub fn g1(&self, x: f64) -> f64 {
        let x = x.abs();
        (1.0 + 0.5 * x * x).min(1.0 + self.g1_slope * x)
    }

    fn m1_amplitude(&self) -> f64 {
        let a = self.g1_slope;
        let xs = self.g1_kink;
        // 2(1+a x*)²/(2+x*²) with 1 + a x* = 1 + x*²/2
        let q = 1.0 + a * xs;
        2.0 * q * q / (2.0 + xs * xs)
    }

    /// m1(x) in closed form.
    pub fn m1(&self, x: f64) -> f64 {
        let x = x.abs();
        if x <= self.g1_kink {
            m0(x)
        } else {
            let q = 1.0 + self.g1_slope * x;
            self.m1_amplitude() / (q * q * q)
        }
    }

    /// ∫_y^∞ m1 for y >= g1_kink.
    fn m1_tail(&self, y: f64) -> f64 {
        let a = self.g1_slope;
        let q = 1.0 + a * y;
        self.m1_amplitude() / (2.0 * a * q * q)
    }

    /// Decay cap (1+3/δ1)(x/L1)^{−1−δ1} in logarithmic form.
    pub fn ln_cap_delta1(&self, x: f64) -> f64 {
        (1.0 + 3.0 / self.delta1).ln() + (1.0 + self.delta1) * (self.ln_l1 - x.ln())
    }

    /// Decay cap 5x^{−δ0} in logarithmic form.
    pub fn ln_cap_delta0(&self, x: f64) -> f64 {
        5f64.ln() - self.delta0 * x.ln()
    }

    /// Bound (x/L1)^{−(1+δ1)/2} on ψ, logarithmic form.
    pub fn ln_psi_cap(&self, x: f64) -> f64 {
        0.5 * (1.0 + self.delta1) * (self.ln_l1 - x.ln())
    }

    /// Key → 17-significant-digit decimal strings.
    pub fn to_decimal_map(&self) -> BTreeMap<String, String> {
        let v = serde_json::to_value(self).expect("serializable");
        let mut out = BTreeMap::new();
        if let serde_json::Value::Object(map) = v {
            for (k, val) in map {
                if let Some(x) = val.as_f64() {
                    out.insert(k, format_sci(x));
                }
            }
        }
        out.insert("log10_l1".into(), format_sci(self.ln_l1 / std::f64::consts::LN_10));
        out
    }
}

/// 17 significant digits, lowercase scientific notation.
pub fn format_sci(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Deficit (2/π)∫₀^∞ min(m1, ℓ) dy.
fn level_deficit(k: &UniversalConstants, level: f64) -> f64 {
    let xs = k.g1_kink;
    let m_kink = k.m1(xs);
    let (y, tail) = if level <= m_kink {
        let a = k.g1_slope;
        let y = ((k.m1_amplitude() / level).cbrt() - 1.0) / a;
        (y, k.m1_tail(y))
    } else if level >= 1.0 {
        return f64::INFINITY;
    } else {
        let y = (2.0 / level.sqrt() - 2.0).sqrt();
        let th = |x: f64| (x / SQRT_2).atan();
        let prim = |x: f64| {
            let t = th(x);
            SQRT_2 * (0.5 * t + 0.25 * (2.0 * t).sin())
        };
        (y, prim(xs) - prim(y) + k.m1_tail(xs))
    };
    2.0 / PI * (level * y + tail)
}

/// Φ(x) of the threshold lemma, for ln x given.
pub fn threshold_phi(k: &UniversalConstants, ln_x: f64) -> f64 {
    let level = 5.0 * (-k.delta0 * (k.t0.ln() + ln_x)).exp();
    if level >= 1.0 {
        return 0.0;
    }
    if ln_x > 700.0 {
        // y/x vanishes on the support, so φ(y/x) = 2 there.
        return k.b_m1 - level_deficit(k, level);
    }
    let x = ln_x.exp();
    let upper = k.t0 * x;
    let f = |y: f64| (k.m1(y) - level).max(0.0) * phi(y / x);
    quad::adaptive(f, 0.0, upper, 1e-13, 4000).value / PI
}

fn threshold_satisfied(k: &UniversalConstants, ln_x: f64) -> bool {
    let level = 5.0 * (-k.delta0 * (k.t0.ln() + ln_x)).exp();
    if level >= 1.0 {
        return false;
    }
    let eps = k.d_m1_minus_one;
    if ln_x > 700.0 {
        // Φ ≥ d/(2d−1)·b  ⇔  b − Φ ≤ b·ε/(1+2ε)
        level_deficit(k, level) <= k.b_m1 * eps / (1.0 + 2.0 * eps)
    } else {
        threshold_phi(k, ln_x) >= (1.0 + eps) / (1.0 + 2.0 * eps) * k.b_m1
    }
}

/// Constants computed once per process.
pub fn constants() -> &'static UniversalConstants {
    static CELL: OnceLock<UniversalConstants> = OnceLock::new();
    CELL.get_or_init(|| compute_constants().expect("universal constants must be computable"))
}

/// Compute all universal constants.
pub fn compute_constants() -> Result<UniversalConstants, SpecError> {
    let eta = 1.0 / (3f64.powi(11) * 2f64.powi(14) * SQRT_2);
    let delta0 = 54.0 * eta / (8.0 + 27.0 * eta);
    let t0 = phi_root();

    let tol = 1e-12;
    let q1 = quad::adaptive(phi, 0.0, t0, tol, 4000);
    let q2 = quad::adaptive(|t| -phi(t), t0, 1.0, tol, 4000);
    // t = 1/u maps [1, ∞) to (0, 1]
    let q3 = quad::adaptive(|u: f64| -phi(1.0 / u) / (u * u), 0.0, 1.0, tol, 4000);
    let l0 = q1.value + q2.value + q3.value;
    let l0_error = q1.error + q2.error + q3.error;
    if l0_error > 1e-10 {
        return Err(SpecError::Quadrature(l0_error));
    }
    let phi_int = q1.value - q2.value - q3.value;

    let a = 3.0 * l0 / (4.0 * eta);
    let xs = 2.0 * a;

    // b(m1), c(m1) by quadrature with x = √2·tan θ on [0, x*], closed-form tails.
    let th_s = (xs / SQRT_2).atan();
    let qb = quad::adaptive(|th: f64| SQRT_2 * th.cos().powi(2), 0.0, th_s, 1e-14, 2000);
    // (1 − m0)/x² = (x² + 4)/(2 + x²)² → in θ: (2tan²θ+4)/(4sec⁴θ)·√2 sec²θ
    let qc = quad::adaptive(
        |th: f64| {
            let c2 = th.cos().powi(2);
            SQRT_2 * (2.0 * th.tan().powi(2) + 4.0) * c2 / 4.0
        },
        0.0,
        th_s,
        1e-14,
        2000,
    );
    if qb.error + qc.error > 1e-10 {
        return Err(SpecError::Quadrature(qb.error + qc.error));
    }
    let mut k = UniversalConstants {
        eta,
        delta0,
        t0,
        l0,
        l0_error,
        l0_closed_form: 2.0 * t0 * eval_f1(1.0 / t0),
        phi_integral: phi_int,
        g1_slope: a,
        g1_kink: xs,
        b_m1: 0.0,
        c_m1: 0.0,
        b_m1_excess: 0.0,
        d_m1: 0.0,
        d_m1_minus_one: 0.0,
        delta1: 0.0,
        delta_rho: 0.0,
        ln_l1: 0.0,
        ln_l1_inverted: 0.0,
    };
    let m1_tail = k.m1_tail(xs);
    // ∫_{x*}^∞ m1/y² via the expansion in 1/(a y)
    let amp = k.m1_amplitude();
    let mut m1_tail_y2 = 0.0;
    for j in 0..12 {
        let jf = j as f64;
        let term = (jf + 1.0) * (jf + 2.0) / 2.0 * (a * xs).powf(-jf) / (4.0 + jf);
        m1_tail_y2 += if j % 2 == 0 { term } else { -term };
    }
    m1_tail_y2 *= amp / a.powi(3) * xs.powi(-4);
    let m0_tail = m0_tail_integral(xs, 0);
    let m0_tail_y2 = m0_tail_integral(xs, 2);

    let db = 2.0 / PI * (m1_tail - m0_tail);
    let dc = 4.0 / (3.0 * PI) * (m0_tail_y2 - m1_tail_y2);
    k.b_m1 = 2.0 / PI * (qb.value + m1_tail);
    k.c_m1 = 4.0 / (3.0 * PI) * (qc.value + 1.0 / xs - m1_tail_y2);
    k.b_m1_excess = db;
    k.d_m1_minus_one = (db - dc) / (2.0 * (FRAC_1_SQRT_2 + dc));
    k.d_m1 = 1.0 + k.d_m1_minus_one;
    k.delta1 = k.d_m1_minus_one / (4.0 * (1.0 + k.d_m1_minus_one));
    k.delta_rho = k.delta1 / 2.0;

    // Smallest ln x satisfying the threshold inequality: doubling scan, then bisection.
    let mut hi = 1.0;
    while !threshold_satisfied(&k, hi) {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(SpecError::Quadrature(f64::INFINITY));
        }
    }
    let mut lo = hi / 2.0;
    while hi - lo > 4.0 * f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        if threshold_satisfied(&k, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    k.ln_l1 = hi;

    // Direct inversion: solve D(ℓ) = b ε/(1+2ε) for the level, then ℓ = 5(t0 L1)^{−δ0}.
    let eps = k.d_m1_minus_one;
    let target = k.b_m1 * eps / (1.0 + 2.0 * eps);
    let (mut llo, mut lhi) = (-700.0_f64, 0.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (llo + lhi);
        if level_deficit(&k, mid.exp()) <= target {
            llo = mid;
        } else {
            lhi = mid;
        }
    }
    k.ln_l1_inverted = (5f64.ln() - llo) / delta0 - t0.ln();
    Ok(k)
}
