//! Gauss-Legendre and Gauss-Hermite nodes and weights.
//!
//! Nodes are found by Newton iteration on the three-term recurrences; both
//! generators are deterministic and the rules are returned in ascending node
//! order so that index-ordered summation gives bitwise-reproducible results
//! regardless of how callers partition the work.

use std::f64::consts::PI;

const NEWTON_EPS: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be at least 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess for the i-th root counted from +1.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, p_deriv) = legendre_with_derivative(n, z);
            dp = p_deriv;
            let step = p / p_deriv;
            z -= step;
            if step.abs() <= NEWTON_EPS {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped onto the interval [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let x = nodes.iter().map(|&t| mid + half * t).collect();
    let w = weights.iter().map(|&wi| half * wi).collect();
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = z;
    for j in 2..=n {
        let jf = j as f64;
        let p_next = ((2.0 * jf - 1.0) * z * p - (jf - 1.0) * p_prev) / jf;
        p_prev = p;
        p = p_next;
    }
    let deriv = n as f64 * (z * p - p_prev) / (z * z - 1.0);
    (p, deriv)
}

/// Nodes and weights of the n-point Gauss-Hermite rule with weight
/// function exp(-x^2) on the whole real line (physicists' convention).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be at least 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        // Initial guesses for the roots in descending order.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[n - 1],
            3 => 1.91 * z - 0.91 * nodes[n - 2],
            _ => 2.0 * z - nodes[n - i + 1],
        };
        let mut p_lower = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            // Orthonormal Hermite recurrence keeps intermediate values bounded.
            let mut h = PI.powf(-0.25);
            let mut h_prev = 0.0;
            for j in 0..n {
                let jf = j as f64;
                let h_next = z * (2.0 / (jf + 1.0)).sqrt() * h - (jf / (jf + 1.0)).sqrt() * h_prev;
                h_prev = h;
                h = h_next;
            }
            p_lower = h_prev;
            let deriv = (2.0 * nf).sqrt() * h_prev;
            let step = h / deriv;
            z -= step;
            if step.abs() <= NEWTON_EPS {
                break;
            }
        }
        let deriv = (2.0 * nf).sqrt() * p_lower;
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        let w = 2.0 / (deriv * deriv);
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}
