//! The pair of scalar equations left for `u2` once `u1 ≡ 0`.
//!
//! Row 1 of the system loses every `u1` term and becomes
//! `a1112 ∂x²u2 + (a1212 + a1122) ∂x∂y u2 + a1222 ∂y²u2 + b121 ∂x u2 + b122 ∂y u2 + c12 u2 = 0`,
//! which is hyperbolic when `Δ > 0`. Row 2 becomes
//! `a1212 ∂x²u2 + 2 a1222 ∂x∂y u2 + a2222 ∂y²u2 + b221 ∂x u2 + b222 ∂y u2 + c22 u2 = 0`,
//! elliptic under strong ellipticity.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Rect;
use crate::tensor::ElasticityCoefficients;

/// Coefficients of `∂x², ∂x∂y, ∂y², ∂x, ∂y, 1` in one equation.
pub type Operator = [ScalarField; 6];

#[derive(Debug, Clone)]
pub struct U2System {
    pub hyper: Operator,
    pub ell: Operator,
}

/// Point values of an operator, same order as [`Operator`].
pub type OperatorValues = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairValues {
    pub hyper: OperatorValues,
    pub ell: OperatorValues,
}

/// Second-order unknowns of the point-data problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SecondDerivative {
    Xx,
    Xy,
    Yy,
}

impl SecondDerivative {
    pub fn column(self) -> usize {
        match self {
            SecondDerivative::Xx => 0,
            SecondDerivative::Xy => 1,
            SecondDerivative::Yy => 2,
        }
    }
}

pub fn reduce(c: &ElasticityCoefficients) -> U2System {
    U2System {
        hyper: [
            c.a1112.clone(),
            c.a1212.add(&c.a1122),
            c.a1222.clone(),
            c.b[0][1][0].clone(),
            c.b[0][1][1].clone(),
            c.c[0][1].clone(),
        ],
        ell: [
            c.a1212.clone(),
            c.a1222.scale(2.0),
            c.a2222.clone(),
            c.b[1][1][0].clone(),
            c.b[1][1][1].clone(),
            c.c[1][1].clone(),
        ],
    }
}

fn eval_op(op: &Operator, x: f64, y: f64) -> Result<OperatorValues> {
    let mut out = [0.0; 6];
    for (o, f) in out.iter_mut().zip(op) {
        *o = f.eval(x, y)?;
    }
    Ok(out)
}

/// `[u, ux, uy, uxx, uxy, uyy]` applied to operator values.
pub fn apply(op: &OperatorValues, jet: &[f64; 6]) -> f64 {
    let [u, ux, uy, uxx, uxy, uyy] = *jet;
    op[0] * uxx + op[1] * uxy + op[2] * uyy + op[3] * ux + op[4] * uy + op[5] * u
}

impl U2System {
    pub fn values_at(&self, x: f64, y: f64) -> Result<PairValues> {
        Ok(PairValues {
            hyper: eval_op(&self.hyper, x, y)?,
            ell: eval_op(&self.ell, x, y)?,
        })
    }

    /// The same pair with every coefficient multiplied by `f`.
    pub fn scaled_by(&self, f: &ScalarField) -> U2System {
        U2System {
            hyper: self.hyper.clone().map(|g| f.mul(&g)),
            ell: self.ell.clone().map(|g| f.mul(&g)),
        }
    }
}

impl PairValues {
    /// `h11² − 4 h20 h02`, equal to `Δ` of the source tensor.
    pub fn hyper_discriminant(&self) -> f64 {
        let [a, b, c, ..] = self.hyper;
        b * b - 4.0 * a * c
    }

    pub fn ell_discriminant(&self) -> f64 {
        let [a, b, c, ..] = self.ell;
        b * b - 4.0 * a * c
    }

    /// Rows are the two equations, columns the selected second derivatives.
    pub fn second_order_matrix(&self, cols: &[SecondDerivative]) -> DMatrix<f64> {
        DMatrix::from_fn(2, cols.len(), |i, j| {
            let row = if i == 0 { &self.hyper } else { &self.ell };
            row[cols[j].column()]
        })
    }
}

pub const ALL_SECOND: [SecondDerivative; 3] =
    [SecondDerivative::Xx, SecondDerivative::Xy, SecondDerivative::Yy];

/// Numerical rank with singular values compared against `tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Rank of `[[h20, h11, h02], [e20, e11, e02]]` at a point.
pub fn second_order_rank(sys: &U2System, x: f64, y: f64, tol: f64) -> Result<usize> {
    second_order_rank_columns(sys, x, y, &ALL_SECOND, tol)
}

/// Rank of the second-order matrix restricted to the given columns. When a second
/// derivative is prescribed by point data, only the remaining columns act as unknowns.
pub fn second_order_rank_columns(
    sys: &U2System,
    x: f64,
    y: f64,
    cols: &[SecondDerivative],
    tol: f64,
) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::input("rank_tol", format!("must be positive, got {tol}")));
    }
    Ok(numerical_rank(&sys.values_at(x, y)?.second_order_matrix(cols), tol))
}

/// Symbolic jet `[u, ux, uy, uxx, uxy, uyy]` of an expression.
pub fn jet_fields(u: &ScalarField) -> [ScalarField; 6] {
    let ux = u.dx();
    let uy = u.dy();
    [u.clone(), ux.clone(), uy.clone(), ux.dx(), ux.dy(), uy.dy()]
}

pub fn jet_at(jet: &[ScalarField; 6], x: f64, y: f64) -> Result<[f64; 6]> {
    let mut out = [0.0; 6];
    for (o, f) in out.iter_mut().zip(jet) {
        *o = f.eval(x, y)?;
    }
    Ok(out)
}

/// Sup-norms of both residuals of `u2` on an `n×n` grid of the region.
pub fn residual(sys: &U2System, u2: &ScalarField, region: &Rect, n: usize) -> Result<(f64, f64)> {
    let jet = jet_fields(u2);
    let per_node: Vec<Result<(f64, f64)>> = region
        .nodes(n)
        .par_iter()
        .map(|&(x, y)| {
            let v = sys.values_at(x, y)?;
            let j = jet_at(&jet, x, y)?;
            Ok((apply(&v.hyper, &j).abs(), apply(&v.ell, &j).abs()))
        })
        .collect();
    let mut out = (0.0f64, 0.0f64);
    for r in per_node {
        let (a, b) = r?;
        out = (out.0.max(a), out.1.max(b));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> ScalarField {
        ScalarField::parse(s).unwrap()
    }

    #[test]
    fn lame_reduction() {
        let sys = reduce(&ElasticityCoefficients::isotropic(1.0, 2.0));
        let v = sys.values_at(0.1, 0.2).unwrap();
        assert_eq!(v.hyper, [0.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(v.ell, [1.0, 0.0, 4.0, 0.0, 0.0, 0.0]);
        assert_eq!(second_order_rank(&sys, 0.0, 0.0, 1e-9).unwrap(), 2);
    }

    #[test]
    fn example_a_reduction_and_rank() {
        let sys = reduce(&ElasticityCoefficients::constant([100.0, 0.0, 0.0, 2.0, 1.0, 1.0]));
        let v = sys.values_at(0.0, 0.0).unwrap();
        assert_eq!(&v.hyper[..3], &[0.0, 2.0, 1.0]);
        assert_eq!(&v.ell[..3], &[2.0, 2.0, 1.0]);
        assert_eq!(second_order_rank(&sys, 0.0, 0.0, 1e-9).unwrap(), 2);
        let cols = [SecondDerivative::Xy, SecondDerivative::Yy];
        assert_eq!(second_order_rank_columns(&sys, 0.0, 0.0, &cols, 1e-9).unwrap(), 1);
    }

    #[test]
    fn zero_system_has_rank_zero() {
        let sys = reduce(&ElasticityCoefficients::zero());
        assert_eq!(second_order_rank(&sys, 0.0, 0.0, 1e-9).unwrap(), 0);
        assert!(second_order_rank(&sys, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn manufactured_residuals() {
        let r = Rect::square(0.0, 0.0, 0.3);
        let lame = reduce(&ElasticityCoefficients::isotropic(1.0, 1.0));
        let (a, b) = residual(&lame, &f("x^2 - y^2/3"), &r, 9).unwrap();
        assert!(a <= 1e-12 && b <= 1e-12, "{a} {b}");
        let exp = reduce(&ElasticityCoefficients::lame(&f("exp(x)"), &f("exp(y)")));
        let (a, b) = residual(&exp, &f("exp(-x)"), &r, 9).unwrap();
        assert!(a <= 1e-12 && b <= 1e-12, "{a} {b}");
        let (a, b) = residual(&exp, &f("1"), &r, 9).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
        let (a, b) = residual(&exp, &f("y"), &r, 9).unwrap();
        assert!(a.max(b) > 0.5);
    }

    #[test]
    fn jet_order() {
        let j = jet_at(&jet_fields(&f("x^3*y^2")), 1.0, 2.0).unwrap();
        assert_eq!(j, [4.0, 12.0, 4.0, 24.0, 12.0, 2.0]);
    }
}
