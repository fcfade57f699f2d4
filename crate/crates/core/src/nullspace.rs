//! Dimension of the discrete solution space of the `u2` pair on a rectangle.
//!
//! Both equations are discretised with finite differences on an `n×n` grid (boundary
//! nodes included, one-sided stencils near the edges) and stacked into one sparse
//! operator `A` acting on the grid values of `u2`. The smallest singular values of `A`
//! are found by inverse subspace iteration on `AᵀA + δ²I`, using a banded Givens QR
//! factorisation of `[A; δI]`, followed by a Rayleigh–Ritz step on `A` itself.
//!
//! Singular values are compared against `σ_ref = σ_max · hx · hy`. Since `σ_max` grows
//! like `h⁻²`, `σ_ref` is the natural size of the operator on smooth functions, and a
//! threshold relative to it does not drift under refinement.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{linspace, Rect};
use crate::linalg::stencil;
use crate::reduction::U2System;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NullspaceOptions {
    /// Nodes per axis.
    pub n: usize,
    /// Null modes satisfy `σ ≤ threshold · σ_ref`.
    pub threshold: f64,
    /// Minimum accepted ratio between the first non-null and the last null singular value.
    pub min_gap: f64,
    /// Accuracy order of the difference stencils (2 or 4).
    pub fd_order: usize,
    /// Width of the iterated block.
    pub block: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for NullspaceOptions {
    fn default() -> Self {
        NullspaceOptions {
            n: 65,
            threshold: 1e-7,
            min_gap: 1e3,
            fd_order: 4,
            block: 12,
            max_iter: 200,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NullspaceResult {
    pub n: usize,
    pub dimension: usize,
    /// `true` when the spectral gap is below `min_gap` or the block is too narrow.
    pub ambiguous: bool,
    /// `σ_(d+1) / max(σ_d, ε_mach σ_max)`.
    pub gap: f64,
    pub sigma_max: f64,
    pub sigma_ref: f64,
    /// Smallest singular values in units of `σ_ref`, ascending.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub iterations: usize,
    /// Orthonormal null-space basis as grid functions (x fastest).
    #[serde(skip)]
    pub basis: Vec<Vec<f64>>,
    #[serde(skip)]
    pub nodes: Vec<(f64, f64)>,
}

impl NullspaceResult {
    /// Relative distance `‖f − P f‖ / ‖f‖` of the sampled field from the null space.
    pub fn projection_residual(&self, f: &ScalarField) -> Result<f64> {
        let v: Vec<f64> = self
            .nodes
            .iter()
            .map(|&(x, y)| f.eval(x, y))
            .collect::<Result<_, _>>()?;
        Ok(projection_residual(&self.basis, &v))
    }
}

pub fn projection_residual(basis: &[Vec<f64>], v: &[f64]) -> f64 {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let mut r = v.to_vec();
    for _ in 0..2 {
        for b in basis {
            let c: f64 = b.iter().zip(&r).map(|(p, q)| p * q).sum();
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= c * bi;
            }
        }
    }
    r.iter().map(|a| a * a).sum::<f64>().sqrt() / norm
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
pub struct SparseRows {
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .par_iter()
            .map(|r| r.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    pub fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (r, &yi) in self.rows.iter().zip(y) {
            for &(j, a) in r {
                out[j] += a * yi;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, a) in r {
                m[(i, j)] += a;
            }
        }
        m
    }
}

/// Assemble the stacked operator; rows alternate (hyperbolic, elliptic) node by node.
pub fn assemble(sys: &U2System, region: &Rect, n: usize, fd_order: usize) -> Result<SparseRows> {
    if n < 7 {
        return Err(Error::input("n", format!("need at least 7 nodes per axis, got {n}")));
    }
    if fd_order != 2 && fd_order != 4 {
        return Err(Error::input("fd_order", format!("must be 2 or 4, got {fd_order}")));
    }
    let xs = linspace(region.x_range(), n);
    let ys = linspace(region.y_range(), n);
    let hx = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    let hy = (ys[n - 1] - ys[0]) / (n - 1) as f64;
    let d1: Vec<_> = (0..n).map(|i| stencil(i, n, 1, fd_order)).collect();
    let d2: Vec<_> = (0..n).map(|i| stencil(i, n, 2, fd_order)).collect();
    let rows: Vec<Result<[Vec<(usize, f64)>; 2]>> = (0..n * n)
        .into_par_iter()
        .map(|p| {
            let (i, j) = (p % n, p / n);
            let v = sys.values_at(xs[i], ys[j])?;
            let build = |c: &[f64; 6]| {
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(64);
                let [c20, c11, c02, c10, c01, c00] = *c;
                for (k, w) in d2[i].weights.iter().enumerate() {
                    row.push((j * n + d2[i].start + k, c20 * w / (hx * hx)));
                }
                for (k, w) in d2[j].weights.iter().enumerate() {
                    row.push(((d2[j].start + k) * n + i, c02 * w / (hy * hy)));
                }
                for (a, wa) in d1[i].weights.iter().enumerate() {
                    for (b, wb) in d1[j].weights.iter().enumerate() {
                        row.push(((d1[j].start + b) * n + d1[i].start + a, c11 * wa * wb / (hx * hy)));
                    }
                }
                for (k, w) in d1[i].weights.iter().enumerate() {
                    row.push((j * n + d1[i].start + k, c10 * w / hx));
                }
                for (k, w) in d1[j].weights.iter().enumerate() {
                    row.push(((d1[j].start + k) * n + i, c01 * w / hy));
                }
                row.push((p, c00));
                row.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                for (col, a) in row {
                    match merged.last_mut() {
                        Some(last) if last.0 == col => last.1 += a,
                        _ => merged.push((col, a)),
                    }
                }
                merged.retain(|e| e.1 != 0.0);
                merged
            };
            Ok([build(&v.hyper), build(&v.ell)])
        })
        .collect();
    let mut out = Vec::with_capacity(2 * n * n);
    for r in rows {
        let [a, b] = r?;
        out.push(a);
        out.push(b);
    }
    Ok(SparseRows {
        ncols: n * n,
        rows: out,
    })
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn sigma_max(a: &SparseRows, iters: usize) -> f64 {
    let mut x: Vec<f64> = (0..a.ncols)
        .map(|k| 1.0 + 0.5 * ((k * 7919) % 13) as f64 / 13.0 * if k % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        let y = a.mul(&x);
        let z = a.mul_t(&y);
        let new = z.iter().map(|v| v * v).sum::<f64>().sqrt().sqrt();
        x = z;
        if (new - est).abs() <= 1e-10 * new {
            est = new;
            break;
        }
        est = new;
    }
    est
}

/// Upper-triangular banded factor: `r[k][j] = R(k, k + j)`.
struct BandedR {
    n: usize,
    w: usize,
    r: Vec<Vec<f64>>,
}

impl BandedR {
    /// Givens QR of `[A; δI]`, rows fed in order of their leading column.
    fn factor(a: &SparseRows, delta: f64) -> Result<BandedR> {
        let n = a.ncols;
        let mut feed: Vec<(usize, usize)> = Vec::with_capacity(a.rows.len() + n);
        let mut w = 1;
        for (i, r) in a.rows.iter().enumerate() {
            if let (Some(f), Some(l)) = (r.first(), r.last()) {
                w = w.max(l.0 - f.0 + 1);
                feed.push((f.0, i));
            }
        }
        for p in 0..n {
            feed.push((p, a.rows.len() + p));
        }
        feed.sort();
        let mut r: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut buf = vec![0.0; n + w];
        for &(lead, idx) in &feed {
            let mut hi = lead;
            if idx < a.rows.len() {
                for &(j, v) in &a.rows[idx] {
                    buf[j] = v;
                    hi = hi.max(j);
                }
            } else {
                buf[lead] = delta;
            }
            let mut k = lead;
            while k <= hi && k < n {
                let x = buf[k];
                if x == 0.0 {
                    k += 1;
                    continue;
                }
                if r[k].is_empty() {
                    r[k] = buf[k..k + w].to_vec();
                    buf[k..=hi.min(k + w - 1)].iter_mut().for_each(|v| *v = 0.0);
                    break;
                }
                let rk = &mut r[k];
                let d = rk[0].hypot(x);
                let (c, s) = (rk[0] / d, x / d);
                for jj in 0..w {
                    let p = rk[jj];
                    let q = buf[k + jj];
                    rk[jj] = c * p + s * q;
                    buf[k + jj] = -s * p + c * q;
                }
                buf[k] = 0.0;
                hi = hi.max(k + w - 1).min(n - 1);
                k += 1;
            }
            if k > hi || k >= n {
                buf[lead..(hi + 1).min(n + w)].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        if let Some(k) = r.iter().position(|row| row.is_empty() || row[0] == 0.0) {
            return Err(Error::Singular(format!("banded factor has a zero pivot at column {k}")));
        }
        Ok(BandedR { n, w, r })
    }

    /// Solve `RᵀR x = b`.
    fn solve_normal(&self, b: &[f64]) -> Vec<f64> {
        let (n, w) = (self.n, self.w);
        // Rᵀ y = b, forward.
        let mut y = b.to_vec();
        for k in 0..n {
            y[k] /= self.r[k][0];
            let yk = y[k];
            let row = &self.r[k];
            let end = w.min(n - k);
            for jj in 1..end {
                y[k + jj] -= row[jj] * yk;
            }
        }
        // R x = y, backward.
        for k in (0..n).rev() {
            let row = &self.r[k];
            let end = w.min(n - k);
            let mut s = y[k];
            for jj in 1..end {
                s -= row[jj] * y[k + jj];
            }
            y[k] = s / row[0];
        }
        y
    }
}

fn orthonormalize(v: &mut DMatrix<f64>) {
    let qr = v.clone().qr();
    *v = qr.q();
}

/// Estimate the solution-space dimension of the pair on the region.
pub fn null_space_dimension(sys: &U2System, region: &Rect, opts: &NullspaceOptions) -> Result<NullspaceResult> {
    region.validate()?;
    let n = opts.n;
    let a = assemble(sys, region, n, opts.fd_order)?;
    let smax = sigma_max(&a, 500);
    if !(smax > 0.0) {
        return Err(Error::Precondition {
            condition: "nonzero operator",
            message: "both equations vanish identically on the grid".into(),
        });
    }
    let hx = 2.0 * region.halfwidths[0] / (n - 1) as f64;
    let hy = 2.0 * region.halfwidths[1] / (n - 1) as f64;
    let sigma_ref = smax * hx * hy;
    let r = BandedR::factor(&a, 1e-13 * smax)?;
    let nn = n * n;
    let k = opts.block.clamp(2, nn);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = DMatrix::from_fn(nn, k, |_, _| rng.random::<f64>() - 0.5);
    orthonormalize(&mut v);
    let watch = (k - 2).max(1);
    let mut prev: Vec<f64> = vec![f64::INFINITY; k];
    let mut sv: Vec<f64> = Vec::new();
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let cols: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|c| r.solve_normal(v.column(c).as_slice()))
            .collect();
        for (c, col) in cols.iter().enumerate() {
            v.set_column(c, &DVector::from_column_slice(col));
        }
        orthonormalize(&mut v);
        // Rayleigh–Ritz on A.
        let av: Vec<Vec<f64>> = (0..k).map(|c| a.mul(v.column(c).as_slice())).collect();
        let b = DMatrix::from_fn(a.rows.len(), k, |i, j| av[j][i]);
        let svd = b.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&p, &q| svd.singular_values[p].total_cmp(&svd.singular_values[q]));
        let y = DMatrix::from_fn(k, k, |i, j| vt[(order[j], i)]);
        v = &v * y;
        sv = order.iter().map(|&p| svd.singular_values[p]).collect();
        let converged = (0..watch).all(|i| (sv[i] - prev[i]).abs() <= 1e-8 * sv[i] + 1e-4 * opts.threshold * sigma_ref);
        prev = sv.clone();
        if converged && it >= 2 {
            break;
        }
    }
    let threshold_abs = opts.threshold * sigma_ref;
    let dimension = sv.iter().take_while(|&&s| s <= threshold_abs).count();
    let floor = f64::EPSILON * smax;
    let (gap, narrow) = if dimension < k {
        let below = if dimension == 0 { floor } else { sv[dimension - 1].max(floor) };
        (sv[dimension] / below, dimension + 2 > k)
    } else {
        (f64::NAN, true)
    };
    let ambiguous = narrow || !(gap >= opts.min_gap);
    let basis = (0..dimension).map(|c| v.column(c).iter().copied().collect()).collect();
    let xs = linspace(region.x_range(), n);
    let ys = linspace(region.y_range(), n);
    let nodes = (0..nn).map(|p| (xs[p % n], ys[p / n])).collect();
    Ok(NullspaceResult {
        n,
        dimension,
        ambiguous,
        gap,
        sigma_max: smax,
        sigma_ref,
        singular_values: sv.iter().map(|s| s / sigma_ref).collect(),
        threshold: opts.threshold,
        iterations,
        basis,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::reduce;
    use crate::tensor::ElasticityCoefficients;

    #[test]
    fn banded_solve_matches_dense() {
        let sys = reduce(&ElasticityCoefficients::isotropic(1.0, 0.5));
        let a = assemble(&sys, &Rect::square(0.0, 0.0, 0.3), 9, 4).unwrap();
        let delta = 0.1;
        let r = BandedR::factor(&a, delta).unwrap();
        let d = a.to_dense();
        let ata = d.transpose() * &d + DMatrix::identity(81, 81) * (delta * delta);
        let b: Vec<f64> = (0..81).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = DVector::from_vec(r.solve_normal(&b));
        let res = &ata * &x - DVector::from_vec(b);
        let scale = ata.norm() * x.norm();
        assert!(res.norm() <= 1e-13 * scale, "{} vs {}", res.norm(), scale);
    }

    #[test]
    fn small_lame_grid_has_four_modes() {
        let sys = reduce(&ElasticityCoefficients::isotropic(1.0, 1.0));
        let opts = NullspaceOptions {
            n: 17,
            ..Default::default()
        };
        let res = null_space_dimension(&sys, &Rect::square(0.0, 0.0, 0.3), &opts).unwrap();
        assert_eq!(res.dimension, 4, "{:?}", res.singular_values);
        assert!(!res.ambiguous);
        for f in ["1", "x", "y", "x^2 - y^2/3"] {
            let r = res.projection_residual(&ScalarField::parse(f).unwrap()).unwrap();
            assert!(r <= 1e-8, "{f}: {r}");
        }
    }

    #[test]
    fn sigma_max_matches_dense_svd() {
        let sys = reduce(&ElasticityCoefficients::lame(
            &ScalarField::parse("exp(x)").unwrap(),
            &ScalarField::parse("exp(y)").unwrap(),
        ));
        let a = assemble(&sys, &Rect::square(0.0, 0.0, 0.3), 9, 4).unwrap();
        let s = a.to_dense().singular_values().max();
        assert!((sigma_max(&a, 2000) - s).abs() <= 1e-6 * s);
    }
}
