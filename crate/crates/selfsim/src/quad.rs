//! Quadrature rules: Gauss-Legendre nodes, a log-weighted product rule,
//! and adaptive Gauss-Kronrod integration.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights mapped to [0, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f(a + h * s))
            .sum::<f64>()
            * h
    }
}

/// Legendre polynomial P_n and its derivative at z.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Shifted Legendre polynomials P̃_0..P̃_{n-1} on [0, 1] at `s`.
fn shifted_legendre_all(n: usize, s: f64) -> Vec<f64> {
    let z = 2.0 * s - 1.0;
    let mut out = vec![0.0; n];
    if n > 0 {
        out[0] = 1.0;
    }
    if n > 1 {
        out[1] = z;
    }
    for k in 2..n {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * z * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
    out
}

/// Product rule for ∫₀¹ G(σ) ln σ dσ on Gauss-Legendre nodes, exact for
/// polynomials of degree below the node count.
#[derive(Debug, Clone)]
pub struct LogRule {
    pub nodes: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LogRule {
    pub fn new(n: usize) -> Self {
        let g = GaussRule::new(n);
        // ∫₀¹ P̃_k ln σ dσ = −1 for k = 0 and (−1)^{k+1}/(k(k+1)) otherwise.
        let mu: Vec<f64> = (0..n)
            .map(|k| {
                if k == 0 {
                    -1.0
                } else {
                    let kf = k as f64;
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    sign / (kf * (kf + 1.0))
                }
            })
            .collect();
        let log_weights = g
            .nodes
            .iter()
            .zip(&g.weights)
            .map(|(&s, &w)| {
                let p = shifted_legendre_all(n, s);
                w * (0..n).map(|k| (2 * k + 1) as f64 * p[k] * mu[k]).sum::<f64>()
            })
            .collect();
        Self { nodes: g.nodes, log_weights, weights: g.weights }
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = WGK[7] * fc;
    let mut rg = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Adaptive 7/15-point Gauss-Kronrod integration over the finite interval
/// [a, b]. Interior evaluation points only, so integrable endpoint
/// singularities are tolerated.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_intervals: usize) -> QuadResult {
    let (v, e) = gk15(&f, a, b);
    let mut parts: Vec<(f64, f64, f64, f64)> = vec![(a, b, v, e)];
    loop {
        let total_err: f64 = parts.iter().map(|p| p.3).sum();
        if total_err <= tol || parts.len() >= max_intervals {
            let value = parts.iter().map(|p| p.2).sum();
            return QuadResult { value, error: total_err };
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            let value = parts.iter().map(|p| p.2).sum::<f64>();
            return QuadResult { value, error: f64::INFINITY };
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Lagrange basis weights on equispaced offsets `offsets` evaluated at `s`.
pub fn lagrange_weights(offsets: &[f64], s: f64) -> Vec<f64> {
    offsets
        .iter()
        .enumerate()
        .map(|(j, &oj)| {
            offsets
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &ok)| (s - ok) / (oj - ok))
                .product()
        })
        .collect()
}

/// Finite-difference weights (Fornberg) for the first derivative at `z`
/// from abscissas `xs`.
pub fn fd_weights_first(xs: &[f64], z: f64) -> Vec<f64> {
    let n = xs.len();
    let m = 1;
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|r| r[1]).collect()
}
