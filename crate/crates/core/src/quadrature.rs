//! Gauss-Hermite rules.

use std::f64::consts::PI;

/// Physicists' Gauss-Hermite rule for weight `exp(-x^2)`: nodes ascending.
///
/// Roots are refined by Newton's method on the orthonormal Hermite
/// recurrence, starting from the classic asymptotic guesses.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule order must be positive");
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let half = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / (pp * pp);
        x[n - 1 - i] = -z;
        w[n - 1 - i] = w[i];
    }
    x.reverse();
    w.reverse();
    (x, w)
}

/// Rule for `E[f(Z)]` with `Z ~ N(0, 1)`: nodes `sqrt(2) x`, weights `w / sqrt(pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    pub fn new(order: usize) -> Self {
        let (x, w) = gauss_hermite(order);
        let s = PI.sqrt();
        Self {
            nodes: x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v / s).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(*z)).sum()
    }
}

/// Relative weight below which tensor-product nodes are discarded.
pub const PRUNE_RELATIVE: f64 = 1e-18;

/// Tensor-product normal rule in `dim` dimensions with negligible nodes
/// pruned and the remaining weights renormalised to sum to one.
/// Returns `(points, weights)` with points stored row-major (`dim` per node).
pub fn tensor_normal_rule(order: usize, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = NormalRule::new(order);
    if dim == 0 {
        return (Vec::new(), vec![1.0]);
    }
    let wmax = rule.weights.iter().cloned().fold(0.0, f64::max);
    let cutoff = PRUNE_RELATIVE * wmax.powi(dim as i32);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut idx = vec![0usize; dim];
    let n = rule.len();
    'outer: loop {
        let w: f64 = idx.iter().map(|&k| rule.weights[k]).product();
        if w >= cutoff {
            points.extend(idx.iter().map(|&k| rule.nodes[k]));
            weights.push(w);
        }
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < n {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (points, weights)
}
