//! Small numerical helpers shared by several modules.

use nalgebra::{DMatrix, DVector};

/// Finite-difference weights for the `deriv`-th derivative at 0 from samples at `offsets`
/// (in units of the grid step), exact on polynomials of degree `< offsets.len()`.
pub fn fd_weights(offsets: &[f64], deriv: usize) -> Vec<f64> {
    let k = offsets.len();
    assert!(deriv < k, "need more points than the derivative order");
    // Σ_j w_j o_j^p = p! δ_{p,deriv}, p = 0..k-1
    let mut v = DMatrix::zeros(k, k);
    for p in 0..k {
        for (j, &o) in offsets.iter().enumerate() {
            v[(p, j)] = o.powi(p as i32);
        }
    }
    let mut rhs = DVector::zeros(k);
    rhs[deriv] = (1..=deriv).map(|q| q as f64).product::<f64>();
    let sol = v.lu().solve(&rhs).expect("distinct stencil offsets");
    sol.iter().copied().collect()
}

/// A one-dimensional stencil on node indices: `Σ weights[j] · f[start + j] / h^deriv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub start: usize,
    pub weights: Vec<f64>,
}

/// Stencil of accuracy `order` for the `deriv`-th derivative at node `i` of `n` nodes.
/// Central in the interior, shifted towards the inside near the ends.
pub fn stencil(i: usize, n: usize, deriv: usize, order: usize) -> Stencil {
    let central = 2 * ((deriv + 1) / 2) - 1 + order;
    let (len, want_start) = if i >= central / 2 && i + central / 2 < n {
        (central, i - central / 2)
    } else {
        let len = deriv + order;
        let start = i.saturating_sub(len / 2).min(n - len);
        (len, start)
    };
    let start = want_start.min(n - len);
    let offsets: Vec<f64> = (0..len).map(|j| (start + j) as f64 - i as f64).collect();
    Stencil {
        start,
        weights: fd_weights(&offsets, deriv),
    }
}

/// Cumulative trapezoid integral of equispaced samples starting from index `from`,
/// signed so that entries before `from` hold `-∫_{x_j}^{x_from}`.
pub fn cumtrapz_from(f: &[f64], h: f64, from: usize) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for j in from + 1..f.len() {
        out[j] = out[j - 1] + 0.5 * h * (f[j - 1] + f[j]);
    }
    for j in (0..from).rev() {
        out[j] = out[j + 1] - 0.5 * h * (f[j] + f[j + 1]);
    }
    out
}

/// Trapezoid integral of equispaced samples `f[a..=b]` oriented from `a` to `b`.
pub fn trapz_between(f: &[f64], h: f64, a: usize, b: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi) = (a.min(b), a.max(b));
    let mut s = 0.5 * (f[lo] + f[hi]);
    for v in &f[lo + 1..hi] {
        s += v;
    }
    let v = s * h;
    if b > a {
        v
    } else {
        -v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_weights() {
        let w = fd_weights(&[-1.0, 0.0, 1.0], 2);
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] + 2.0).abs() < 1e-14 && (w[2] - 1.0).abs() < 1e-14);
        let w = fd_weights(&[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn stencils_are_exact_on_polynomials() {
        let n = 9;
        for order in [2, 4] {
            for deriv in [1, 2] {
                for i in 0..n {
                    let st = stencil(i, n, deriv, order);
                    assert!(st.start + st.weights.len() <= n);
                    let deg = deriv + order - 1;
                    let p = |x: f64| x.powi(deg as i32);
                    let dp = |x: f64| match deriv {
                        1 => deg as f64 * x.powi(deg as i32 - 1),
                        _ => (deg * (deg - 1)) as f64 * x.powi(deg as i32 - 2),
                    };
                    let approx: f64 = st
                        .weights
                        .iter()
                        .enumerate()
                        .map(|(j, w)| w * p((st.start + j) as f64))
                        .sum();
                    let exact = dp(i as f64);
                    assert!((approx - exact).abs() <= 1e-8 * exact.abs().max(1.0), "{order} {deriv} {i}");
                }
            }
        }
    }

    #[test]
    fn trapezoid_helpers() {
        let f: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let c = cumtrapz_from(&f, 0.5, 2);
        assert_eq!(c[2], 0.0);
        assert_eq!(trapz_between(&f, 1.0, 0, 4), 8.0);
        assert_eq!(trapz_between(&f, 1.0, 4, 0), -8.0);
        assert_eq!(c[4], trapz_between(&f, 0.5, 2, 4));
        assert_eq!(c[0], trapz_between(&f, 0.5, 2, 0));
    }
}
