//! Fixed-order Gauss–Legendre rule on [-1, 1].

use std::f64::consts::PI;
use std::sync::OnceLock;

pub const ORDER: usize = 16;

/// Nodes and weights of the order-16 rule, computed once by Newton iteration
/// on the Legendre polynomial.
pub fn gauss_legendre_16() -> &'static ([f64; ORDER], [f64; ORDER]) {
    static RULE: OnceLock<([f64; ORDER], [f64; ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let (nodes, weights) = gauss_legendre(ORDER);
        let mut n = [0.0; ORDER];
        let mut w = [0.0; ORDER];
        n.copy_from_slice(&nodes);
        w.copy_from_slice(&weights);
        (n, w)
    })
}

/// Legendre P_n and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Visit the quadrature nodes mapped onto [a, b].
#[inline]
pub fn for_each_node(a: f64, b: f64, mut f: impl FnMut(f64, f64)) {
    let (nodes, weights) = gauss_legendre_16();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (x, w) in nodes.iter().zip(weights) {
        f(mid + half * x, half * w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let (_, w) = gauss_legendre_16();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exact_for_degree_31() {
        // ∫_{-1}^{1} x^30 = 2/31
        let mut s = 0.0;
        for_each_node(-1.0, 1.0, |x, w| s += w * x.powi(30));
        assert!((s - 2.0 / 31.0).abs() < 1e-14);
        let mut odd = 0.0;
        for_each_node(-1.0, 1.0, |x, w| odd += w * x.powi(31));
        assert!(odd.abs() < 1e-14);
    }

    #[test]
    fn exponential_on_panel() {
        let mut s = 0.0;
        for_each_node(0.0, 1.0, |x, w| s += w * x.exp());
        assert!((s - (1f64.exp() - 1.0)).abs() < 1e-14);
    }
}
