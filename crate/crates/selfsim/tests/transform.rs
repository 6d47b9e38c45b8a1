mod common;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use selfsim::grid::{GridFunction, Mesh, MeshParams, Parity, Tail};
use selfsim::solver::resample;
use selfsim::specfun::constants;
use selfsim::transform::*;
use selfsim::verify::{m0_on, m1_on, oracle_abscissas};

use common::{operator, with_history};

fn t_m0_exact(x: f64) -> f64 {
    -FRAC_1_SQRT_2 * x * x / (2.0 + x * x)
}

fn m0_prime(y: f64) -> f64 {
    -2.0 * y / (1.0 + 0.5 * y * y).powi(3)
}

#[test]
fn t_of_m0_matches_closed_form() {
    let op = operator(64);
    let tf = apply_t(op, &m0_on(&op.mesh)).unwrap();
    let i1 = op.mesh.one_index;
    assert!((tf.values[i1] + 0.235_702_260_395_516).abs() < 1e-8);
    assert!((tf.lagrange_at(2.0) + 0.471_404_520_791_031_7).abs() < 1e-8);
    assert!((tf.lagrange_at(1e6) + FRAC_1_SQRT_2).abs() < 1e-5);
    assert_eq!(tf.values[0], 0.0);
    for x in oracle_abscissas() {
        assert!((tf.lagrange_at(x) - t_m0_exact(x)).abs() < 1e-8, "x = {x}");
    }
    // The far-field limit of T(f) is −b(f).
    assert!((tf.tail.unwrap().limit + FRAC_1_SQRT_2).abs() < 1e-12);
}

#[test]
fn f1_form_agrees_with_closed_form() {
    for x in [0.01, 0.3, 1.0, 2.0, 17.0, 1e3] {
        let v = apply_t_f1_form(m0_prime, x, 1e8);
        assert!((v - t_m0_exact(x)).abs() < 1e-8, "x = {x}: {v}");
    }
}

#[test]
fn functionals_of_m0() {
    let op = operator(64);
    let (fx, _) = functionals(op, &m0_on(&op.mesh)).unwrap();
    assert!((fx.b - FRAC_1_SQRT_2).abs() < 1e-8);
    assert!((fx.c - FRAC_1_SQRT_2).abs() < 1e-8);
    assert!((fx.d - 1.0).abs() < 1e-8);
    assert!((fx.q - 0.125).abs() < 1e-6);
    assert!(fx.q_err < 1e-6);
}

#[test]
fn quadratic_form_and_hilbert_identity() {
    let op = operator(64);
    let zero = GridFunction::new(op.mesh.clone(), vec![0.0; op.mesh.len()], Parity::Even, None);
    assert_eq!(compute_q(op, &zero).unwrap(), 0.0);
    assert_eq!(hilbert_identity_check(op, &zero).unwrap(), 0.0);
    let m1 = m1_on(&op.mesh);
    assert!(compute_q(op, &m1).unwrap() >= 0.0);
    assert!(hilbert_identity_check(op, &m0_on(&op.mesh)).unwrap() < 1e-6);
    assert!(hilbert_identity_check(op, &m1).unwrap() < 1e-6);
}

#[test]
fn first_row_vanishes() {
    let op = operator(64);
    assert!(op.row(0).iter().all(|&w| w == 0.0));
}

#[test]
fn rejects_foreign_mesh() {
    let op = operator(64);
    let other = Mesh::shared(MeshParams::with_density(32)).unwrap();
    assert!(matches!(apply_t(op, &m0_on(&other)), Err(TransformError::MeshMismatch)));
}

/// Properties that hold for every f in the admissible set, checked along
/// the iterates of the solver.
#[test]
fn iterates_respect_kernel_bounds() {
    let op = operator(64);
    let k = constants();
    let x = &op.mesh.x;
    let hist = &with_history().history;
    assert!(hist.len() > 100);
    for (n, f) in hist.iter().enumerate().step_by(15) {
        let (fx, tf) = functionals(op, f).unwrap();
        // b ≥ b(m1) > √2/2, 4η/(3π) ≤ c ≤ c(m1) < √2/2 (the gaps to √2/2 are below an ulp)
        assert!(fx.b > FRAC_1_SQRT_2 - 1e-12, "iterate {n}: b = {}", fx.b);
        assert!(fx.c >= 4.0 * k.eta / (3.0 * PI) && fx.c < FRAC_1_SQRT_2 + 1e-12, "iterate {n}: c = {}", fx.c);
        for i in 1..x.len() {
            // |T(f)(x)| ≤ L0 x/π
            assert!(tf.values[i].abs() <= k.l0 * x[i] / PI * (1.0 + 1e-10), "iterate {n}, x = {}", x[i]);
            // nonincreasing
            assert!(tf.values[i] <= tf.values[i - 1] + 1e-13, "iterate {n}: T increases at x = {}", x[i]);
        }
        // convex in s = x², as nondecreasing chord slopes
        let slope = |i: usize| (tf.values[i + 1] - tf.values[i]) / (x[i + 1] * x[i + 1] - x[i] * x[i]);
        let range = op.mesh.indices_in(1e-3, 1e12);
        for w in range.windows(2) {
            let (a, b) = (slope(w[0]), slope(w[1]));
            assert!(b >= a - 1e-7 * a.abs(), "iterate {n}: not convex in s at x = {}", x[w[0]]);
        }
        // c(f) ≤ 8(x+1)/(3πx)·(1 − f(x))^{1/2}
        for &i in &op.mesh.indices_in(1e-2, 1e10) {
            let bound = 8.0 * (x[i] + 1.0) / (3.0 * PI * x[i]) * (1.0 - f.values[i]).sqrt();
            assert!(fx.c <= bound * (1.0 + 1e-9), "iterate {n}: c bound fails at x = {}", x[i]);
        }
    }
}

#[test]
fn lipschitz_constants_of_b_and_c_are_mesh_stable() {
    // f_λ = λ m1 + (1 − λ) f*, so Δb/‖Δf‖_ρ measures the modulus along one direction.
    let fstar = &common::fixed_point().f;
    let k_on = |op: &KernelOperator| {
        let fs = resample(fstar, &op.mesh);
        let m1 = m1_on(&op.mesh);
        let p = fs.tail.unwrap().exponent;
        let mix = |lam: f64| {
            let v: Vec<f64> = m1.values.iter().zip(&fs.values).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
            let last = *v.last().unwrap();
            GridFunction::new(op.mesh.clone(), v, Parity::Even, Some(Tail::matching(last, op.mesh.x_max(), p)))
        };
        let (f1, f2) = (mix(0.3), mix(0.6));
        let dist = selfsim::solver::weighted_residual(&f1, &f2);
        let db = (compute_b(&f1).unwrap() - compute_b(&f2).unwrap()).abs();
        let dc = (compute_c(&f1).unwrap() - compute_c(&f2).unwrap()).abs();
        (db / dist, dc / dist.sqrt())
    };
    let (kb1, kc1) = k_on(operator(64));
    let (kb2, kc2) = k_on(operator(128));
    assert!(((kb1 - kb2) / kb2).abs() < 1e-3, "{kb1} vs {kb2}");
    assert!(((kc1 - kc2) / kc2).abs() < 1e-3, "{kc1} vs {kc2}");
}

#[test]
fn oracle_errors_shrink_under_refinement() {
    let errs = |op: &KernelOperator| {
        let f = m0_on(&op.mesh);
        let (fx, tf) = functionals(op, &f).unwrap();
        let t = oracle_abscissas().into_iter().map(|x| (tf.lagrange_at(x) - t_m0_exact(x)).abs()).fold(0.0, f64::max);
        [(fx.b - FRAC_1_SQRT_2).abs(), (fx.c - FRAC_1_SQRT_2).abs(), (fx.q - 0.125).abs(), t]
    };
    let coarse = KernelOperator::new(Mesh::shared(MeshParams::with_density(32)).unwrap());
    let (e1, e2) = (errs(&coarse), errs(operator(64)));
    for (a, b) in e1.iter().zip(&e2) {
        // Errors already at roundoff cannot halve further.
        assert!(*b <= (a / 2.0).max(1e-11), "{e1:?} -> {e2:?}");
    }
}

#[test]
fn tail_correction_matters() {
    // A slowly decaying f: truncating at X without the tail would shift b visibly.
    let op = operator(64);
    let f = GridFunction::from_fn(&op.mesh, Parity::Even, Some(Tail::power(1.0, 1.25)), |x| (1.0 + x * x).powf(-0.625));
    let b = compute_b(&f).unwrap();
    let truncated = 2.0 / PI * f.integral();
    assert!((b - truncated) > 1e-5);
    // ∫₀^∞ (1+x²)^{-5/8} dx = √π Γ(1/8)/(2Γ(5/8))
    let exact = 2.0 / PI * 0.5 * PI.sqrt() * 7.533_941_598_797_612 / 1.434_518_848_090_556_9;
    assert!((b - exact).abs() < 1e-8, "{b} vs {exact}");
}
