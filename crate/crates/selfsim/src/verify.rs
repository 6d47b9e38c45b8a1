//! Membership in the admissible set and the analytic oracle battery.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use serde::Serialize;

use crate::grid::{GridFunction, Mesh, Parity, Tail};
use crate::quad::adaptive;
use crate::specfun::{
    constants, eval_f1, eval_f1_prime, eval_f2, eval_f2_prime, m0, UniversalConstants,
};
use crate::transform::{apply_t_f1_form, functionals, hilbert_identity_check, KernelOperator};

/// Default relative tolerance of the membership clauses.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// One clause with its signed margin (nonnegative when satisfied).
#[derive(Debug, Clone, Serialize)]
pub struct Clause {
    pub name: &'static str,
    pub pass: bool,
    pub margin: f64,
    /// Abscissa where the margin is attained, when meaningful.
    pub worst_x: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    pub clauses: Vec<Clause>,
    pub member: bool,
}

impl MembershipReport {
    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.clauses.iter().filter(|c| !c.pass).map(|c| c.name).collect()
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for c in &self.clauses {
            let at = c.worst_x.map_or(String::new(), |x| format!(" at x={x:.3e}"));
            s.push_str(&format!("{:<18} {:<4} margin {:+.3e}{}\n", c.name, if c.pass { "ok" } else { "FAIL" }, c.margin, at));
        }
        s.push_str(&format!("member: {}\n", self.member));
        s
    }
}

/// Running minimum over nodes of a margin function.
fn worst(f: &GridFunction, range: std::ops::Range<usize>, margin: impl Fn(usize) -> f64) -> (f64, Option<f64>) {
    let mut best = (f64::INFINITY, None);
    for i in range {
        let v = margin(i);
        if v < best.0 || v.is_nan() {
            best = (v, Some(f.mesh.x[i]));
        }
    }
    best
}

/// Evaluate every clause of the admissible set nodewise.
///
/// Relative clauses (lower bound, monotonicity, convexity) compare against
/// `tol` after scaling by the local magnitude; absolute ones use `tol` as is.
pub fn check_membership(f: &GridFunction, tol: f64) -> MembershipReport {
    check_membership_with(f, tol, constants())
}

pub fn check_membership_with(f: &GridFunction, tol: f64, k: &UniversalConstants) -> MembershipReport {
    let v = &f.values;
    let x = &f.mesh.x;
    let n = v.len();
    let mut clauses = Vec::new();
    let mut push = |name, (margin, worst_x): (f64, Option<f64>), threshold: f64| {
        clauses.push(Clause { name, pass: margin >= -threshold, margin, worst_x });
    };

    push("nonnegative", worst(f, 0..n, |i| v[i]), 0.0);
    push("normalized", (-(v[0] - 1.0).abs(), Some(0.0)), tol);
    push("upper_one", worst(f, 0..n, |i| 1.0 - v[i]), tol);
    push("lower_m1", worst(f, 0..n, |i| (v[i] - k.m1(x[i])) / k.m1(x[i])), tol);
    let (mono, convex) = shape_margins(f);
    push("nonincreasing", mono, tol);
    push("convex_in_s", convex, tol);

    let dleft = left_derivative_at_one(f);
    // η is below any sensible tolerance, so this clause is strict.
    push("slope_at_one", (-k.eta - dleft, Some(x[f.mesh.one_index])), 0.0);

    let ln_v = |i: usize| if v[i] > 0.0 { v[i].ln() } else { f64::NEG_INFINITY };
    push("cap_delta1", worst(f, 1..n, |i| k.ln_cap_delta1(x[i]) - ln_v(i)), tol);
    push("cap_delta0", worst(f, 1..n, |i| k.ln_cap_delta0(x[i]) - ln_v(i)), tol);

    let member = clauses.iter().all(|c| c.pass);
    MembershipReport { clauses, member }
}

/// Worst relative margins of "nonincreasing" and "convex in s = x²".
///
/// Convexity compares consecutive secant slopes in s, scaled by the larger
/// of the slopes and |f|/Δs so that roundoff near x = 0 is not flagged.
pub fn shape_margins(f: &GridFunction) -> ((f64, Option<f64>), (f64, Option<f64>)) {
    let v = &f.values;
    let x = &f.mesh.x;
    let n = v.len();
    let mono = worst(f, 0..n - 1, |i| (v[i] - v[i + 1]) / v[i].abs().max(f64::MIN_POSITIVE));
    let slope = |i: usize| (v[i + 1] - v[i]) / (x[i + 1] * x[i + 1] - x[i] * x[i]);
    let convex = worst(f, 0..n.saturating_sub(2), |i| {
        let (s0, s1) = (slope(i), slope(i + 1));
        let ds = x[i + 2] * x[i + 2] - x[i] * x[i];
        let scale = s0.abs().max(s1.abs()).max(v[i].abs() / ds).max(f64::MIN_POSITIVE);
        (s1 - s0) / scale
    });
    (mono, convex)
}

/// One-sided derivative from the left at x = 1, from a backward finite
/// difference stencil on nodes at and below x = 1.
pub fn left_derivative_at_one(f: &GridFunction) -> f64 {
    let m = &*f.mesh;
    let i1 = m.one_index;
    let pts = 7usize.min(i1 + 1);
    let xs: Vec<f64> = (0..pts).map(|j| m.x[i1 - j]).collect();
    let w = crate::quad::fd_weights_first(&xs, m.x[i1]);
    w.iter().enumerate().map(|(j, wj)| wj * f.values[i1 - j]).sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleItem {
    pub name: String,
    pub achieved: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub items: Vec<OracleItem>,
    pub all_pass: bool,
}

impl OracleReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        for it in &self.items {
            s.push_str(&format!(
                "{:<40} {:<4} err {:.3e} (tol {:.0e})\n",
                it.name,
                if it.pass { "ok" } else { "FAIL" },
                it.achieved,
                it.tolerance
            ));
        }
        s
    }
}

struct Battery(Vec<OracleItem>);

impl Battery {
    fn add(&mut self, name: impl Into<String>, achieved: f64, tolerance: f64) {
        let pass = achieved.abs() <= tolerance;
        self.0.push(OracleItem { name: name.into(), achieved: achieved.abs(), tolerance, pass });
    }

    /// A check whose achieved value must be nonnegative.
    fn nonneg(&mut self, name: impl Into<String>, value: f64) {
        self.0.push(OracleItem { name: name.into(), achieved: value, tolerance: 0.0, pass: value >= 0.0 });
    }
}

/// m₀ with its exact far-field tail.
pub fn m0_on(mesh: &Arc<Mesh>) -> GridFunction {
    GridFunction::from_fn(mesh, Parity::Even, Some(Tail::power(4.0, 4.0)), m0)
}

/// m₁ with a tail matched to its x⁻³ decay.
pub fn m1_on(mesh: &Arc<Mesh>) -> GridFunction {
    let k = constants();
    let xm = mesh.x_max();
    let tail = Tail::matching(k.m1(xm), xm, 3.0);
    GridFunction::from_fn(mesh, Parity::Even, Some(tail), |x| k.m1(x))
}

/// 20 log-spaced abscissas in [1e-4, 1e6].
pub fn oracle_abscissas() -> Vec<f64> {
    (0..20).map(|j| 10f64.powf(-4.0 + 10.0 * j as f64 / 19.0)).collect()
}

/// Closed-form battery on `mesh`.
pub fn run_oracles(op: &KernelOperator) -> OracleReport {
    let mesh = &op.mesh;
    let mut b = Battery(Vec::new());
    let k = constants();

    let f0 = m0_on(mesh);
    match functionals(op, &f0) {
        Ok((fx, tf)) => {
            b.add("b(m0) = sqrt2/2", fx.b - FRAC_1_SQRT_2, 1e-8);
            b.add("c(m0) = sqrt2/2", fx.c - FRAC_1_SQRT_2, 1e-8);
            b.add("d(m0) = 1", fx.d - 1.0, 1e-8);
            b.add("Q(m0) = 1/8", fx.q - 0.125, 1e-6);
            let exact_t = |x: f64| -FRAC_1_SQRT_2 * x * x / (2.0 + x * x);
            let worst = oracle_abscissas()
                .into_iter()
                .map(|x| (tf.lagrange_at(x) - exact_t(x)).abs())
                .fold(0.0, f64::max);
            b.add("T(m0) at 20 log-spaced points", worst, 1e-8);
            b.add("T(m0)(1) = -sqrt2/6", tf.values[mesh.one_index] - exact_t(1.0), 1e-8);
            b.add("T(m0)(2)", tf.lagrange_at(2.0) - exact_t(2.0), 1e-8);
            b.add("T(m0)(1e6) -> -b(m0)", tf.lagrange_at(1e6) + FRAC_1_SQRT_2, 1e-5);
            b.add("T(m0)(0) = 0", tf.values[0], 0.0);
            let dm0 = |y: f64| -2.0 * y / (1.0 + 0.5 * y * y).powi(3);
            b.add("T(m0)(1) by the F1 form", apply_t_f1_form(dm0, 1.0, 1e8) - exact_t(1.0), 1e-8);
        }
        Err(e) => b.add(format!("functionals(m0): {e}"), f64::INFINITY, 0.0),
    }
    match hilbert_identity_check(op, &f0) {
        Ok(r) => b.add("Hilbert identity on m0", r, 1e-6),
        Err(e) => b.add(format!("Hilbert identity on m0: {e}"), f64::INFINITY, 0.0),
    }
    let f1 = m1_on(mesh);
    match hilbert_identity_check(op, &f1) {
        Ok(r) => b.add("Hilbert identity on m1", r, 1e-6),
        Err(e) => b.add(format!("Hilbert identity on m1: {e}"), f64::INFINITY, 0.0),
    }
    if let Ok((fx, _)) = functionals(op, &f1) {
        b.nonneg("Q(m1) >= 0", fx.q);
    }
    let lower = mesh
        .x
        .iter()
        .map(|&x| k.m1(x) - 4.0 / (2.0 + x * x).powi(2))
        .fold(f64::INFINITY, f64::min);
    b.nonneg("m1 >= 4/(2+x^2)^2 at all nodes", lower);
    b.add("integral of phi = 0", k.phi_integral, 1e-8);
    for (name, err, tol) in special_function_checks() {
        b.add(name, err, tol);
    }
    let all_pass = b.0.iter().all(|i| i.pass);
    OracleReport { items: b.0, all_pass }
}

/// Appendix identities of F1 and F2, as (name, error, tolerance).
pub fn special_function_checks() -> Vec<(String, f64, f64)> {
    let mut out = Vec::new();
    let mut add = |n: &str, e: f64, t: f64| out.push((n.to_string(), e, t));
    add("F1(0) = 0", eval_f1(0.0), 1e-15);
    add("F1(1) = 1", eval_f1(1.0) - 1.0, 1e-15);
    add("F1(1e6) = 2 - F1(1e-6)", eval_f1(1e6) - (2.0 - eval_f1(1e-6)), 1e-12);
    add("F1'(0) = 0", eval_f1_prime(0.0).unwrap_or(f64::NAN), 1e-15);
    let (a, b) = (eval_f1_prime(1.0 / 3.0), eval_f1_prime(3.0));
    add("F1'(1/3) = 9 F1'(3)", a.unwrap_or(f64::NAN) - 9.0 * b.unwrap_or(f64::NAN), 1e-12);
    add("F2(0) = 0", eval_f2(0.0), 1e-15);
    add("F2(1) = 5/6", eval_f2(1.0) - 5.0 / 6.0, 1e-15);
    add("F2(1e8) -> 4/3", eval_f2(1e8) - 4.0 / 3.0, 1e-10);
    let mut worst_refl: f64 = 0.0;
    let mut worst_f2: f64 = 0.0;
    for j in 1..50 {
        let t = j as f64 / 50.0;
        worst_refl = worst_refl.max((eval_f1(1.0 / t) - (2.0 - eval_f1(t))).abs());
        let l = eval_f2_prime(1.0 / t).unwrap_or(f64::NAN);
        let r = t.powi(4) * eval_f2_prime(t).unwrap_or(f64::NAN);
        worst_f2 = worst_f2.max((l - r).abs() / r.abs().max(1e-300));
    }
    add("F1(1/t) = 2 - F1(t) on (0,1)", worst_refl, 1e-12);
    add("F2'(1/t) = t^4 F2'(t) on (0,1), relative", worst_f2, 1e-12);
    let half = adaptive(|t: f64| t * eval_f1_prime(1.0 / t).unwrap_or(0.0), 0.0, 1.0, 1e-13, 4000).value;
    add("int_0^1 t F1'(1/t) dt = 1/2", half - 0.5, 1e-8);
    add("int_0^inf phi = 0", constants().phi_integral, 1e-8);
    let lhs_rhs = {
        let t: f64 = 0.37;
        let h = 1e-5;
        let q = |t: f64| 4.0 * t / 3.0 - t * eval_f2(1.0 / t);
        (q(t + h) - q(t - h)) / (2.0 * h) - t * eval_f1_prime(1.0 / t).unwrap_or(f64::NAN)
    };
    add("d/dt[4t/3 - t F2(1/t)] = t F1'(1/t)", lhs_rhs, 1e-6);
    out
}
