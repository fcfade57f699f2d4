//! Fully symmetric 2D elasticity tensors and the structural conditions imposed on them.
//!
//! With full symmetry `a_ijkl = a_jikl = a_klij` only six components remain, and the
//! system can be written as `Λ11 ∂x² u + Λ12 ∂x∂y u + Λ22 ∂y² u + (lower order) = 0`.

use nalgebra::{Complex, Matrix2, Matrix3, Matrix4, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Rect;

/// Second-order components of a fully symmetric tensor plus lower-order terms.
///
/// `b[i][j][k]` multiplies `∂_k u_j` in row `i`, `c[i][j]` multiplies `u_j` in row `i`
/// (zero-based indices).
#[derive(Debug, Clone)]
pub struct ElasticityCoefficients {
    pub a1111: ScalarField,
    pub a1112: ScalarField,
    pub a1122: ScalarField,
    pub a1212: ScalarField,
    pub a1222: ScalarField,
    pub a2222: ScalarField,
    pub b: [[[ScalarField; 2]; 2]; 2],
    pub c: [[ScalarField; 2]; 2],
}

pub const TENSOR_KEYS: [&str; 6] = ["a1111", "a1112", "a1122", "a1212", "a1222", "a2222"];

/// Point values of the six independent components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TensorValues {
    pub a1111: f64,
    pub a1112: f64,
    pub a1122: f64,
    pub a1212: f64,
    pub a1222: f64,
    pub a2222: f64,
}

fn zero3() -> [[[ScalarField; 2]; 2]; 2] {
    std::array::from_fn(|_| std::array::from_fn(|_| std::array::from_fn(|_| ScalarField::zero())))
}

fn zero2() -> [[ScalarField; 2]; 2] {
    std::array::from_fn(|_| std::array::from_fn(|_| ScalarField::zero()))
}

impl ElasticityCoefficients {
    pub fn new(a: [ScalarField; 6]) -> ElasticityCoefficients {
        let [a1111, a1112, a1122, a1212, a1222, a2222] = a;
        ElasticityCoefficients {
            a1111,
            a1112,
            a1122,
            a1212,
            a1222,
            a2222,
            b: zero3(),
            c: zero2(),
        }
    }

    pub fn constant(a: [f64; 6]) -> ElasticityCoefficients {
        ElasticityCoefficients::new(a.map(ScalarField::constant))
    }

    pub fn from_values(v: TensorValues) -> ElasticityCoefficients {
        ElasticityCoefficients::constant([v.a1111, v.a1112, v.a1122, v.a1212, v.a1222, v.a2222])
    }

    pub fn zero() -> ElasticityCoefficients {
        ElasticityCoefficients::constant([0.0; 6])
    }

    /// Constant isotropic (Lamé) tensor without lower-order terms.
    pub fn isotropic(mu: f64, lambda: f64) -> ElasticityCoefficients {
        ElasticityCoefficients::constant([2.0 * mu + lambda, 0.0, lambda, mu, 0.0, 2.0 * mu + lambda])
    }

    /// Lamé system in divergence form, `div(μ(∇u + ∇uᵀ) + λ div(u) I) = 0`, with variable
    /// coefficients. Expanding the divergence gives `b_ijk = δ_ij ∂_k μ + δ_ik ∂_j μ + δ_jk ∂_i λ`.
    pub fn lame(mu: &ScalarField, lambda: &ScalarField) -> ElasticityCoefficients {
        let two_mu_lambda = mu.scale(2.0).add(lambda);
        let mut c = ElasticityCoefficients::new([
            two_mu_lambda.clone(),
            ScalarField::zero(),
            lambda.clone(),
            mu.clone(),
            ScalarField::zero(),
            two_mu_lambda,
        ]);
        let dmu = [mu.dx(), mu.dy()];
        let dla = [lambda.dx(), lambda.dy()];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let mut term = ScalarField::zero();
                    if j == i {
                        term = term.add(&dmu[k]);
                    }
                    if k == i {
                        term = term.add(&dmu[j]);
                    }
                    if j == k {
                        term = term.add(&dla[i]);
                    }
                    c.b[i][j][k] = term;
                }
            }
        }
        c
    }

    pub fn components(&self) -> [&ScalarField; 6] {
        [
            &self.a1111,
            &self.a1112,
            &self.a1122,
            &self.a1212,
            &self.a1222,
            &self.a2222,
        ]
    }

    pub fn values_at(&self, x: f64, y: f64) -> Result<TensorValues> {
        Ok(TensorValues {
            a1111: self.a1111.eval(x, y)?,
            a1112: self.a1112.eval(x, y)?,
            a1122: self.a1122.eval(x, y)?,
            a1212: self.a1212.eval(x, y)?,
            a1222: self.a1222.eval(x, y)?,
            a2222: self.a2222.eval(x, y)?,
        })
    }

    /// Full tensor entry `a_ijkl` with one-based indices, recovered through the symmetries.
    pub fn entry(v: &TensorValues, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let voigt = |p: usize, q: usize| match (p.min(q), p.max(q)) {
            (1, 1) => 0,
            (2, 2) => 1,
            _ => 2,
        };
        let (p, q) = (voigt(i, j), voigt(k, l));
        match (p.min(q), p.max(q)) {
            (0, 0) => v.a1111,
            (1, 1) => v.a2222,
            (2, 2) => v.a1212,
            (0, 1) => v.a1122,
            (0, 2) => v.a1112,
            (1, 2) => v.a1222,
            _ => unreachable!(),
        }
    }
}

impl TensorValues {
    pub fn scaled(&self, c: f64) -> TensorValues {
        TensorValues {
            a1111: c * self.a1111,
            a1112: c * self.a1112,
            a1122: c * self.a1122,
            a1212: c * self.a1212,
            a1222: c * self.a1222,
            a2222: c * self.a2222,
        }
    }

    pub fn lambda(&self) -> LambdaMatrices {
        let v = self;
        LambdaMatrices {
            l11: Matrix2::new(v.a1111, v.a1112, v.a1112, v.a1212),
            l12: Matrix2::new(
                2.0 * v.a1112,
                v.a1212 + v.a1122,
                v.a1212 + v.a1122,
                2.0 * v.a1222,
            ),
            l22: Matrix2::new(v.a1212, v.a1222, v.a1222, v.a2222),
        }
    }

    /// `Δ = (a1212 + a1122)² − 4 a1112 a1222`.
    pub fn delta(&self) -> f64 {
        let s = self.a1212 + self.a1122;
        s * s - 4.0 * self.a1112 * self.a1222
    }

    /// `Σ a_ijkl ξ_i η_j ξ_k η_l`.
    pub fn rank_one_form(&self, xi: [f64; 2], eta: [f64; 2]) -> f64 {
        let g = self.lambda().acoustic(eta);
        let v = nalgebra::Vector2::new(xi[0], xi[1]);
        v.dot(&(g * v))
    }

    /// Smallest eigenvalue of the acoustic tensor `Γ(η)` over unit `η = (cos β, sin β)`,
    /// i.e. the minimum of the rank-one form over unit `ξ` for that `η`.
    pub fn acoustic_min(&self, beta: f64) -> f64 {
        let g = self.lambda().acoustic([beta.cos(), beta.sin()]);
        sym2_min_eig(&g)
    }

    pub fn voigt(&self) -> Matrix3<f64> {
        let r = std::f64::consts::SQRT_2;
        let v = self;
        Matrix3::new(
            v.a1111,
            v.a1122,
            r * v.a1112,
            v.a1122,
            v.a2222,
            r * v.a1222,
            r * v.a1112,
            r * v.a1222,
            2.0 * v.a1212,
        )
    }

    /// Smallest eigenvalue of the Voigt matrix, the best constant in `Σ a e e ≥ κ |e|²`.
    pub fn voigt_min_eig(&self) -> f64 {
        SymmetricEigen::new(self.voigt()).eigenvalues.min()
    }

    /// `Σ a_ijkl e_ij e_kl` for a symmetric 2×2 `e = [[e11, e12], [e12, e22]]`.
    pub fn energy(&self, e11: f64, e12: f64, e22: f64) -> f64 {
        let v = self;
        v.a1111 * e11 * e11
            + v.a2222 * e22 * e22
            + 2.0 * v.a1122 * e11 * e22
            + 4.0 * v.a1212 * e12 * e12
            + 4.0 * v.a1112 * e11 * e12
            + 4.0 * v.a1222 * e22 * e12
    }

    /// Minimum of the rank-one form over unit directions: 360 samples of the `η` angle
    /// on `[0, π)` followed by Newton refinement of the best sample. The inner
    /// minimum over `ξ` is the exact smallest eigenvalue of `Γ(η)`.
    pub fn ellipticity_at(&self) -> f64 {
        const SAMPLES: usize = 360;
        let step = std::f64::consts::PI / SAMPLES as f64;
        let mut best = (0.0, f64::INFINITY);
        for k in 0..SAMPLES {
            let b = k as f64 * step;
            let v = self.acoustic_min(b);
            if v < best.1 {
                best = (b, v);
            }
        }
        let (mut b, mut v) = best;
        let d = 1e-4;
        for _ in 0..20 {
            let fp = self.acoustic_min(b + d);
            let fm = self.acoustic_min(b - d);
            let g = (fp - fm) / (2.0 * d);
            let hss = (fp - 2.0 * v + fm) / (d * d);
            if hss <= 0.0 {
                break;
            }
            let nb = b - (g / hss).clamp(-step, step);
            let nv = self.acoustic_min(nb);
            if nv >= v {
                break;
            }
            b = nb;
            v = nv;
        }
        v
    }
}

/// Smallest eigenvalue of a symmetric 2×2 matrix.
pub fn sym2_min_eig(m: &Matrix2<f64>) -> f64 {
    let p = m[(0, 0)];
    let r = m[(1, 1)];
    let q = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (p + r);
    let half = 0.5 * (p - r);
    mean - half.hypot(q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaMatrices {
    pub l11: Matrix2<f64>,
    pub l12: Matrix2<f64>,
    pub l22: Matrix2<f64>,
}

impl LambdaMatrices {
    /// `Γ(η) = Λ11 η1² + Λ12 η1 η2 + Λ22 η2²`.
    pub fn acoustic(&self, eta: [f64; 2]) -> Matrix2<f64> {
        self.l11 * (eta[0] * eta[0]) + self.l12 * (eta[0] * eta[1]) + self.l22 * (eta[1] * eta[1])
    }

    pub fn pencil(&self, theta: Complex<f64>) -> Matrix2<Complex<f64>> {
        let c = |m: &Matrix2<f64>| m.map(|v| Complex::new(v, 0.0));
        c(&self.l11) * (theta * theta) + c(&self.l12) * theta + c(&self.l22)
    }

    /// Roots of `det(Λ11 θ² + Λ12 θ + Λ22) = 0` as eigenvalues of the companion matrix.
    pub fn pencil_roots(&self) -> Result<[Complex<f64>; 4]> {
        let inv = self.l11.try_inverse().ok_or_else(|| {
            Error::Singular(format!("Λ11 = {:?} is not invertible", self.l11.as_slice()))
        })?;
        let a = -(inv * self.l22);
        let b = -(inv * self.l12);
        let mut m = Matrix4::zeros();
        m[(0, 2)] = 1.0;
        m[(1, 3)] = 1.0;
        for i in 0..2 {
            for j in 0..2 {
                m[(2 + i, j)] = a[(i, j)];
                m[(2 + i, 2 + j)] = b[(i, j)];
            }
        }
        let ev = m.complex_eigenvalues();
        let mut roots = [ev[0], ev[1], ev[2], ev[3]];
        roots.sort_by(|p, q| {
            p.im.partial_cmp(&q.im)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(p.re.partial_cmp(&q.re).unwrap_or(std::cmp::Ordering::Equal))
        });
        Ok(roots)
    }

    /// Roots together with null vectors of the pencil and their conditioning.
    pub fn pencil_eigenpairs(&self) -> Result<PencilEigenpairs> {
        let roots = self.pencil_roots()?;
        let scale = self
            .l11
            .abs()
            .max()
            .max(self.l12.abs().max())
            .max(self.l22.abs().max());
        let mut vectors = [[Complex::new(0.0, 0.0); 2]; 4];
        let mut conditioning = [0.0; 4];
        let mut residuals = [0.0; 4];
        for (k, &theta) in roots.iter().enumerate() {
            let m = self.pencil(theta);
            let row_norm = |i: usize| (m[(i, 0)].norm_sqr() + m[(i, 1)].norm_sqr()).sqrt();
            let (r0, r1) = (row_norm(0), row_norm(1));
            let size = scale * (1.0 + theta.norm()).powi(2);
            let i = if r0 >= r1 { 0 } else { 1 };
            if r0.max(r1) <= 1e-8 * size {
                return Err(Error::Defective(format!(
                    "the pencil vanishes identically at θ = {theta}, null space has dimension 2"
                )));
            }
            let mut z = [m[(i, 1)], -m[(i, 0)]];
            let nz = (z[0].norm_sqr() + z[1].norm_sqr()).sqrt();
            z = [z[0] / nz, z[1] / nz];
            let mz0 = m[(0, 0)] * z[0] + m[(0, 1)] * z[1];
            let mz1 = m[(1, 0)] * z[0] + m[(1, 1)] * z[1];
            residuals[k] = (mz0.norm_sqr() + mz1.norm_sqr()).sqrt();
            conditioning[k] = (z[0] * z[1].conj() - z[1] * z[0].conj()).norm();
            vectors[k] = z;
        }
        Ok(PencilEigenpairs {
            roots,
            vectors,
            conditioning,
            residuals,
        })
    }
}

/// Eigenpairs `(θ, z)` of the quadratic pencil with unit-norm `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilEigenpairs {
    pub roots: [Complex<f64>; 4],
    pub vectors: [[Complex<f64>; 2]; 4],
    /// `|det(z, z̄)|` per root.
    pub conditioning: [f64; 4],
    /// `‖(Λ11 θ² + Λ12 θ + Λ22) z‖` per root.
    pub residuals: [f64; 4],
}

impl PencilEigenpairs {
    pub fn all_nonreal(&self, tol: f64) -> bool {
        self.roots.iter().all(|r| r.im.abs() > tol)
    }

    pub fn min_conditioning(&self) -> f64 {
        self.conditioning.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn lambda_matrices(coeffs: &ElasticityCoefficients, x: f64, y: f64) -> Result<LambdaMatrices> {
    Ok(coeffs.values_at(x, y)?.lambda())
}

pub fn hyperbolicity_delta(coeffs: &ElasticityCoefficients, x: f64, y: f64) -> Result<f64> {
    Ok(coeffs.values_at(x, y)?.delta())
}

pub fn pencil_eigenpairs(coeffs: &ElasticityCoefficients, x: f64, y: f64) -> Result<PencilEigenpairs> {
    coeffs.values_at(x, y)?.lambda().pencil_eigenpairs()
}

/// Minimum over an `n×n` grid of `f(tensor values)`, reduced deterministically.
fn grid_min<F>(coeffs: &ElasticityCoefficients, region: &Rect, n: usize, f: F) -> Result<f64>
where
    F: Fn(&TensorValues) -> f64 + Sync,
{
    if n < 2 {
        return Err(Error::input("n", format!("grid resolution must be at least 2, got {n}")));
    }
    let vals: Vec<Result<f64>> = region
        .nodes(n)
        .par_iter()
        .map(|&(x, y)| Ok(f(&coeffs.values_at(x, y)?)))
        .collect();
    let mut m = f64::INFINITY;
    for v in vals {
        m = m.min(v?);
    }
    Ok(m)
}

/// Lower bound estimate of the strong-ellipticity constant on the region.
pub fn ellipticity_margin(coeffs: &ElasticityCoefficients, region: &Rect, n: usize) -> Result<f64> {
    grid_min(coeffs, region, n, TensorValues::ellipticity_at)
}

/// Smallest Voigt eigenvalue on the region.
pub fn convexity_margin(coeffs: &ElasticityCoefficients, region: &Rect, n: usize) -> Result<f64> {
    grid_min(coeffs, region, n, TensorValues::voigt_min_eig)
}

/// `(min Δ, max Δ)` on the region.
pub fn delta_range(coeffs: &ElasticityCoefficients, region: &Rect, n: usize) -> Result<(f64, f64)> {
    let lo = grid_min(coeffs, region, n, TensorValues::delta)?;
    let hi = -grid_min(coeffs, region, n, |v| -v.delta())?;
    Ok((lo, hi))
}
