//! Fixtures shared by the integration tests: operators and converged solutions,
//! each computed once per test binary.
#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use selfsim::grid::{Mesh, MeshParams};
use selfsim::solver::{initial_function, solve_from, InitialFunction, Solution, SolveConfig};
use selfsim::transform::KernelOperator;

pub fn operator(per_decade: usize) -> &'static KernelOperator {
    static P64: OnceLock<KernelOperator> = OnceLock::new();
    static P128: OnceLock<KernelOperator> = OnceLock::new();
    let cell = match per_decade {
        64 => &P64,
        128 => &P128,
        _ => panic!("no cached operator for {per_decade} nodes per decade"),
    };
    cell.get_or_init(|| KernelOperator::new(Mesh::shared(MeshParams::with_density(per_decade)).unwrap()))
}

pub fn mesh() -> &'static Arc<Mesh> {
    &operator(64).mesh
}

pub fn solve_on(op: &KernelOperator, initial: InitialFunction) -> Solution {
    let cfg = SolveConfig { initial, mesh: op.mesh.params, ..SolveConfig::default() };
    let f0 = initial_function(&cfg.initial, &op.mesh).unwrap();
    solve_from(op, &cfg, f0, |_, _| {}).unwrap()
}

/// Fixed point from (1 + x²)⁻¹ on the default mesh.
pub fn fixed_point() -> &'static Solution {
    static S: OnceLock<Solution> = OnceLock::new();
    S.get_or_init(|| solve_on(operator(64), InitialFunction::RationalOne))
}

/// Fixed point from (1 + x²)⁻¹ with every iterate retained.
pub fn with_history() -> &'static Solution {
    static S: OnceLock<Solution> = OnceLock::new();
    S.get_or_init(|| {
        let op = operator(64);
        let cfg = SolveConfig { keep_history: true, mesh: op.mesh.params, ..SolveConfig::default() };
        let f0 = initial_function(&cfg.initial, &op.mesh).unwrap();
        solve_from(op, &cfg, f0, |_, _| {}).unwrap()
    })
}
