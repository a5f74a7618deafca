//! Gauss-Legendre rules on [0, 1] and collapsed (Duffy) rules on the
//! reference triangle {(0,0), (1,0), (0,1)}.

use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// n-point Gauss-Legendre rule mapped to [0, 1]; exact to degree 2n - 1.
pub fn gauss_legendre(n: usize) -> LineRule {
    assert!(n >= 1);
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = 0.5 * (1.0 - x);
        points[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    LineRule { points, weights }
}

/// Collapsed tensor rule with n^2 points; exact to degree 2n - 2 on the
/// reference triangle (area 1/2).
pub fn triangle_rule(n: usize) -> QuadratureRule {
    let gl = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&eta, &w_eta) in gl.points.iter().zip(&gl.weights) {
        for (&xi, &w_xi) in gl.points.iter().zip(&gl.weights) {
            points.push([xi * (1.0 - eta), eta]);
            weights.push(w_xi * w_eta * (1.0 - eta));
        }
    }
    QuadratureRule { points, weights }
}

/// Smallest collapsed rule exact to the requested total degree.
pub fn triangle_rule_for_degree(degree: usize) -> QuadratureRule {
    triangle_rule(degree / 2 + 1)
}
