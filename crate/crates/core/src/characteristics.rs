//! Characteristic coordinates `(s, t)` for the hyperbolic equation of the pair.
//!
//! A level set of `s` is a characteristic curve when the slope ratio `m = ∂x s / ∂y s`
//! solves `h20 m² + h11 m + h02 = 0`. The two roots give `s` and `t`; in these
//! coordinates the hyperbolic equation takes the normal form
//! `∂s∂t w + B11 ∂s w + B12 ∂t w + C1 w = 0`.
//!
//! Scale is fixed by measuring `s` and `t` as intercepts on the reference line
//! `x = x0` (or `y = y0` when the roles of the axes are swapped), so `∂y s = ∂y t = 1`
//! there.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Rect;
use crate::reduction::{PairValues, SecondDerivative, U2System};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapCase {
    OrthotropicIdentity,
    A1112Nonzero,
    A1222Nonzero,
}

/// Roots of the characteristic quadratic at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slopes {
    pub case: MapCase,
    /// `(minus, plus)` roots; unused (zero) in the identity case.
    pub roots: (f64, f64),
    pub delta: f64,
}

const ZERO_REL: f64 = 1e-12;

fn leading_scale(h: &[f64; 6]) -> f64 {
    h[0].abs().max(h[1].abs()).max(h[2].abs())
}

/// Case selection and roots of the characteristic quadratic at a point.
pub fn characteristic_slopes(sys: &U2System, x: f64, y: f64) -> Result<Slopes> {
    let v = sys.values_at(x, y)?;
    slopes_from_values(&v)
}

fn slopes_from_values(v: &PairValues) -> Result<Slopes> {
    let [h20, h11, h02, ..] = v.hyper;
    let delta = v.hyper_discriminant();
    if !(delta > 0.0) {
        return Err(Error::Precondition {
            condition: "hyperbolicity",
            message: format!("Δ = {delta} ≤ 0"),
        });
    }
    let scale = leading_scale(&v.hyper);
    let sq = delta.sqrt();
    if h20.abs() > ZERO_REL * scale {
        Ok(Slopes {
            case: MapCase::A1112Nonzero,
            roots: (-(h11 - sq) / (2.0 * h20), -(h11 + sq) / (2.0 * h20)),
            delta,
        })
    } else if h02.abs() > ZERO_REL * scale {
        Ok(Slopes {
            case: MapCase::A1222Nonzero,
            roots: (-(h11 - sq) / (2.0 * h02), -(h11 + sq) / (2.0 * h02)),
            delta,
        })
    } else {
        Ok(Slopes {
            case: MapCase::OrthotropicIdentity,
            roots: (0.0, 0.0),
            delta,
        })
    }
}

/// Values and derivatives of one coordinate function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CoordJet {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MapJet {
    pub s: CoordJet,
    pub t: CoordJet,
}

impl MapJet {
    /// `G = [[∂x s, ∂x t], [∂y s, ∂y t]]`, so that `(ux, uy) = G (ws, wt)`.
    pub fn g(&self) -> Matrix2<f64> {
        Matrix2::new(self.s.dx, self.t.dx, self.s.dy, self.t.dy)
    }

    pub fn det(&self) -> f64 {
        self.g().determinant()
    }
}

#[derive(Debug, Clone)]
struct Closed {
    s: [ScalarField; 6],
    t: [ScalarField; 6],
}

fn closed_jet(f: &ScalarField) -> [ScalarField; 6] {
    let fx = f.dx();
    let fy = f.dy();
    [f.clone(), fx.clone(), fy.clone(), fx.dx(), fx.dy(), fy.dy()]
}

fn eval_closed(j: &[ScalarField; 6], x: f64, y: f64) -> Result<CoordJet> {
    Ok(CoordJet {
        value: j[0].eval(x, y)?,
        dx: j[1].eval(x, y)?,
        dy: j[2].eval(x, y)?,
        dxx: j[3].eval(x, y)?,
        dxy: j[4].eval(x, y)?,
        dyy: j[5].eval(x, y)?,
    })
}

/// Slope field for one family in the traced case, expressed in swapped coordinates
/// `(p, q)`: the curve solves `dq/dp = -slope(p, q)` and the coordinate is the
/// intercept `q(p0) - q0`.
#[derive(Debug, Clone)]
struct TracedFamily {
    slope: ScalarField,
    slope_q: ScalarField,
}

#[derive(Debug, Clone)]
struct Traced {
    s: TracedFamily,
    t: TracedFamily,
    /// `true` when `p = y, q = x` (the a1222 case).
    swapped: bool,
    steps: usize,
    fd_step: f64,
}

#[derive(Debug, Clone)]
enum Kind {
    Closed(Closed),
    Traced(Traced),
}

#[derive(Debug, Clone)]
pub struct CharacteristicMap {
    pub case: MapCase,
    pub x0: f64,
    pub y0: f64,
    pub region: Rect,
    kind: Kind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapOptions {
    /// Trace characteristics even when the coefficients are constant.
    pub force_traced: bool,
    pub rk4_steps: usize,
    /// Sample count per axis for the region checks.
    pub check_n: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            force_traced: false,
            rk4_steps: 64,
            check_n: 17,
        }
    }
}

pub fn build_map(sys: &U2System, region: &Rect, x0: f64, y0: f64) -> Result<CharacteristicMap> {
    build_map_with(sys, region, x0, y0, MapOptions::default())
}

pub fn build_map_with(
    sys: &U2System,
    region: &Rect,
    x0: f64,
    y0: f64,
    opts: MapOptions,
) -> Result<CharacteristicMap> {
    region.validate()?;
    if !region.contains(x0, y0) {
        return Err(Error::input("point", format!("({x0}, {y0}) lies outside omega")));
    }
    let samples = region.nodes(opts.check_n.max(2));
    let mut values = Vec::with_capacity(samples.len());
    for &(x, y) in &samples {
        let v = sys.values_at(x, y)?;
        let d = v.hyper_discriminant();
        if !(d > 0.0) {
            return Err(Error::Precondition {
                condition: "hyperbolicity",
                message: format!("Δ = {d} ≤ 0 at ({x}, {y})"),
            });
        }
        values.push(v);
    }
    let centre = slopes_from_values(&sys.values_at(x0, y0)?)?;
    let identically_zero = |k: usize| {
        sys.hyper[k].is_zero()
            || values.iter().all(|v| v.hyper[k].abs() <= ZERO_REL * leading_scale(&v.hyper))
    };
    let case = match centre.case {
        MapCase::OrthotropicIdentity if identically_zero(0) && identically_zero(2) => {
            MapCase::OrthotropicIdentity
        }
        MapCase::OrthotropicIdentity => {
            return Err(Error::Precondition {
                condition: "leading coefficient",
                message: "a1112 and a1222 vanish at the point but not on omega".into(),
            })
        }
        c => c,
    };
    let lead = match case {
        MapCase::A1112Nonzero => Some(0),
        MapCase::A1222Nonzero => Some(2),
        MapCase::OrthotropicIdentity => None,
    };
    if let Some(k) = lead {
        let sign = values[0].hyper[k].signum();
        for (v, &(x, y)) in values.iter().zip(&samples) {
            if v.hyper[k] * sign <= 1e-8 * leading_scale(&v.hyper) {
                return Err(Error::Precondition {
                    condition: "leading coefficient",
                    message: format!(
                        "{} changes sign or vanishes at ({x}, {y})",
                        if k == 0 { "a1112" } else { "a1222" }
                    ),
                });
            }
        }
    }
    let x = ScalarField::x().sub(&ScalarField::constant(x0));
    let y = ScalarField::y().sub(&ScalarField::constant(y0));
    let constant = sys.hyper[..3].iter().all(|f| f.as_constant().is_some());
    let kind = match case {
        MapCase::OrthotropicIdentity => Kind::Closed(Closed {
            s: closed_jet(&x),
            t: closed_jet(&y),
        }),
        _ if constant && !opts.force_traced => {
            let (mm, mp) = centre.roots;
            let (s, t) = if case == MapCase::A1112Nonzero {
                (y.add(&x.scale(mm)), y.add(&x.scale(mp)))
            } else {
                (x.add(&y.scale(mm)), x.add(&y.scale(mp)))
            };
            Kind::Closed(Closed {
                s: closed_jet(&s),
                t: closed_jet(&t),
            })
        }
        _ => {
            let [h20, h11, h02, ..] = &sys.hyper;
            let disc = h11.powi(2).sub(&h20.mul(h02).scale(4.0));
            let root = disc.sqrt();
            let (lead, q_of) = if case == MapCase::A1112Nonzero {
                (h20, SecondDerivative::Xy)
            } else {
                (h02, SecondDerivative::Yy)
            };
            let denom = lead.scale(2.0);
            let minus = h11.sub(&root).neg().div(&denom);
            let plus = h11.add(&root).neg().div(&denom);
            let swapped = q_of == SecondDerivative::Yy;
            let family = |f: ScalarField| TracedFamily {
                slope_q: if swapped { f.dx() } else { f.dy() },
                slope: f,
            };
            let hw = region.halfwidths[0].min(region.halfwidths[1]);
            Kind::Traced(Traced {
                s: family(minus),
                t: family(plus),
                swapped,
                steps: opts.rk4_steps.max(1),
                fd_step: 1e-4 * hw,
            })
        }
    };
    Ok(CharacteristicMap {
        case,
        x0,
        y0,
        region: *region,
        kind,
    })
}

impl Traced {
    fn to_pq(&self, x: f64, y: f64) -> (f64, f64) {
        if self.swapped {
            (y, x)
        } else {
            (x, y)
        }
    }

    fn slope_at(&self, f: &ScalarField, p: f64, q: f64) -> Result<f64> {
        let (x, y) = if self.swapped { (q, p) } else { (p, q) };
        Ok(f.eval(x, y)?)
    }

    /// Trace one family from `(x, y)` to the reference line; returns the intercept
    /// coordinate and its gradient in `(x, y)`.
    fn trace(&self, fam: &TracedFamily, map: &CharacteristicMap, x: f64, y: f64) -> Result<(f64, f64, f64)> {
        let (p_start, q_start) = self.to_pq(x, y);
        let (p_end, q_ref) = self.to_pq(map.x0, map.y0);
        let h = (p_end - p_start) / self.steps as f64;
        let rhs = |p: f64, q: f64, v: f64| -> Result<(f64, f64)> {
            let m = self.slope_at(&fam.slope, p, q)?;
            let mq = self.slope_at(&fam.slope_q, p, q)?;
            Ok((-m, -mq * v))
        };
        let (mut q, mut v) = (q_start, 1.0);
        let mut p = p_start;
        for _ in 0..self.steps {
            let (k1q, k1v) = rhs(p, q, v)?;
            let (k2q, k2v) = rhs(p + 0.5 * h, q + 0.5 * h * k1q, v + 0.5 * h * k1v)?;
            let (k3q, k3v) = rhs(p + 0.5 * h, q + 0.5 * h * k2q, v + 0.5 * h * k2v)?;
            let (k4q, k4v) = rhs(p + h, q + h * k3q, v + h * k3v)?;
            q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            p += h;
            let (xx, yy) = if self.swapped { (q, p) } else { (p, q) };
            if !map.region.contains(xx, yy) || !q.is_finite() {
                return Err(Error::Escape { x, y });
            }
        }
        let m0 = self.slope_at(&fam.slope, p_start, q_start)?;
        // Level sets satisfy dq/dp = -m, so ∂p c = m ∂q c.
        let (cq, cp) = (v, m0 * v);
        let (dx, dy) = if self.swapped { (cq, cp) } else { (cp, cq) };
        Ok((q - q_ref, dx, dy))
    }

    fn gradients(&self, map: &CharacteristicMap, x: f64, y: f64) -> Result<[(f64, f64, f64); 2]> {
        Ok([self.trace(&self.s, map, x, y)?, self.trace(&self.t, map, x, y)?])
    }

    fn jet(&self, map: &CharacteristicMap, x: f64, y: f64) -> Result<MapJet> {
        let base = self.gradients(map, x, y)?;
        let d = self.fd_step;
        let xp = self.gradients(map, x + d, y)?;
        let xm = self.gradients(map, x - d, y)?;
        let yp = self.gradients(map, x, y + d)?;
        let ym = self.gradients(map, x, y - d)?;
        let build = |k: usize| CoordJet {
            value: base[k].0,
            dx: base[k].1,
            dy: base[k].2,
            dxx: (xp[k].1 - xm[k].1) / (2.0 * d),
            // Average the two available estimates of the mixed derivative.
            dxy: 0.5 * ((xp[k].2 - xm[k].2) + (yp[k].1 - ym[k].1)) / (2.0 * d),
            dyy: (yp[k].2 - ym[k].2) / (2.0 * d),
        };
        Ok(MapJet {
            s: build(0),
            t: build(1),
        })
    }
}

impl CharacteristicMap {
    pub fn is_traced(&self) -> bool {
        matches!(self.kind, Kind::Traced(_))
    }

    /// Values, gradients and second derivatives of `s` and `t` at `(x, y)`.
    pub fn jet(&self, x: f64, y: f64) -> Result<MapJet> {
        match &self.kind {
            Kind::Closed(c) => Ok(MapJet {
                s: eval_closed(&c.s, x, y)?,
                t: eval_closed(&c.t, x, y)?,
            }),
            Kind::Traced(tr) => tr.jet(self, x, y),
        }
    }

    /// `(s, t)` and the gradients only.
    pub fn first_order(&self, x: f64, y: f64) -> Result<MapJet> {
        match &self.kind {
            Kind::Closed(_) => self.jet(x, y),
            Kind::Traced(tr) => {
                let g = tr.gradients(self, x, y)?;
                let mk = |k: usize| CoordJet {
                    value: g[k].0,
                    dx: g[k].1,
                    dy: g[k].2,
                    ..Default::default()
                };
                Ok(MapJet { s: mk(0), t: mk(1) })
            }
        }
    }

    pub fn forward(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let j = self.first_order(x, y)?;
        Ok((j.s.value, j.t.value))
    }

    /// Newton solve of `(s(x, y), t(x, y)) = (s, t)` started from the linearisation at the point.
    pub fn inverse(&self, s: f64, t: f64) -> Result<(f64, f64)> {
        let j0 = self.first_order(self.x0, self.y0)?;
        let jt0 = j0.g().transpose();
        let lin = jt0
            .try_inverse()
            .ok_or_else(|| Error::Singular("Jacobian at the base point".into()))?;
        let d0 = lin * Vector2::new(s - j0.s.value, t - j0.t.value);
        let (mut x, mut y) = (self.x0 + d0[0], self.y0 + d0[1]);
        let scale = self.region.halfwidths[0].max(self.region.halfwidths[1]);
        for _ in 0..50 {
            let j = self.first_order(x, y)?;
            let r = Vector2::new(j.s.value - s, j.t.value - t);
            let jt = j.g().transpose();
            let step = jt
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("Jacobian at ({x}, {y})")))?
                * r;
            x -= step[0];
            y -= step[1];
            if step.norm() <= 1e-14 * scale {
                return Ok((x, y));
            }
        }
        let j = self.first_order(x, y)?;
        let r = (j.s.value - s).hypot(j.t.value - t);
        if r <= 1e-12 * scale {
            Ok((x, y))
        } else {
            Err(Error::NoConvergence {
                what: format!("inverse map at (s, t) = ({s}, {t})"),
                iterations: 50,
            })
        }
    }

    /// Largest dyadic `ε ≤ 0.5` such that the preimage of `[-ε, ε]²` stays inside the
    /// region and keeps `Δ ≥ Δ(x0, y0) / 2`.
    pub fn choose_eps(&self, sys: &U2System, check_n: usize) -> Result<f64> {
        let delta0 = sys.values_at(self.x0, self.y0)?.hyper_discriminant();
        let mut eps = 0.5;
        for _ in 0..40 {
            if self.eps_ok(sys, eps, delta0, check_n) {
                return Ok(eps);
            }
            eps *= 0.5;
        }
        Err(Error::Precondition {
            condition: "characteristic neighbourhood",
            message: "no admissible square found around the point".into(),
        })
    }

    fn eps_ok(&self, sys: &U2System, eps: f64, delta0: f64, n: usize) -> bool {
        let n = n.max(3);
        for k in 0..n * n {
            let s = -eps + 2.0 * eps * (k % n) as f64 / (n - 1) as f64;
            let t = -eps + 2.0 * eps * (k / n) as f64 / (n - 1) as f64;
            let Ok((x, y)) = self.inverse(s, t) else {
                return false;
            };
            if !self.region.contains(x, y) {
                return false;
            }
            match sys.values_at(x, y) {
                Ok(v) if v.hyper_discriminant() >= 0.5 * delta0 => {}
                _ => return false,
            }
        }
        true
    }
}

/// Coefficients of the transformed pair at one `(s, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TransformedValues {
    pub b11: f64,
    pub b12: f64,
    pub c1: f64,
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub b21: f64,
    pub b22: f64,
    pub c2: f64,
}

impl TransformedValues {
    /// `A12² − A11 A22`, negative for an elliptic second equation.
    pub fn ellipticity(&self) -> f64 {
        self.a12 * self.a12 - self.a11 * self.a22
    }
}

/// Coefficient fields given directly in characteristic variables (`x` plays `s`, `y` plays `t`).
#[derive(Debug, Clone)]
pub struct DirectCoefficients {
    pub b11: ScalarField,
    pub b12: ScalarField,
    pub c1: ScalarField,
    pub a11: ScalarField,
    pub a12: ScalarField,
    pub a22: ScalarField,
    pub b21: ScalarField,
    pub b22: ScalarField,
    pub c2: ScalarField,
}

impl DirectCoefficients {
    /// All coefficients zero except `A11 = A22 = 1`.
    pub fn laplacian() -> DirectCoefficients {
        let z = ScalarField::zero;
        DirectCoefficients {
            b11: z(),
            b12: z(),
            c1: z(),
            a11: ScalarField::constant(1.0),
            a12: z(),
            a22: ScalarField::constant(1.0),
            b21: z(),
            b22: z(),
            c2: z(),
        }
    }
}

#[derive(Debug, Clone)]
enum Source {
    Mapped {
        sys: U2System,
        map: CharacteristicMap,
        tol: f64,
    },
    Direct(DirectCoefficients),
}

/// The pair in characteristic coordinates on `[-ε, ε]²`.
#[derive(Debug, Clone)]
pub struct TransformedSystem {
    pub eps: f64,
    source: Source,
}

/// Relative tolerance for the vanishing of the `∂s²`, `∂t²` terms of the hyperbolic equation.
pub const FLATNESS_TOL: f64 = 1e-8;

pub fn transform_system(sys: &U2System, map: &CharacteristicMap) -> Result<TransformedSystem> {
    let eps = map.choose_eps(sys, 9)?;
    let ts = TransformedSystem {
        eps,
        source: Source::Mapped {
            sys: sys.clone(),
            map: map.clone(),
            tol: FLATNESS_TOL,
        },
    };
    ts.coeffs_at(0.0, 0.0)?;
    Ok(ts)
}

/// Apply the chain rule at `(x, y)` and collect the transformed coefficients.
pub fn transform_at(v: &PairValues, j: &MapJet, tol: f64) -> Result<TransformedValues> {
    let [h20, h11, h02, h10, h01, h00] = v.hyper;
    let [e20, e11, e02, e10, e01, e00] = v.ell;
    let (s, t) = (&j.s, &j.t);
    let quad = |a: f64, b: f64, c: f64, p: &CoordJet| a * p.dx * p.dx + b * p.dx * p.dy + c * p.dy * p.dy;
    let mixed = |a: f64, b: f64, c: f64| 2.0 * a * s.dx * t.dx + b * (s.dx * t.dy + s.dy * t.dx) + 2.0 * c * s.dy * t.dy;
    let first = |a: f64, b: f64, c: f64, d: f64, e: f64, p: &CoordJet| {
        a * p.dxx + b * p.dxy + c * p.dyy + d * p.dx + e * p.dy
    };
    let grad2 = |p: &CoordJet| p.dx * p.dx + p.dy * p.dy;
    let scale = leading_scale(&v.hyper) * grad2(s).max(grad2(t));
    let css = quad(h20, h11, h02, s);
    let ctt = quad(h20, h11, h02, t);
    if css.abs() > tol * scale || ctt.abs() > tol * scale {
        return Err(Error::BadMap(format!(
            "∂s² and ∂t² coefficients ({css:e}, {ctt:e}) exceed {tol:e} relative"
        )));
    }
    let k = mixed(h20, h11, h02);
    if k.abs() <= 1e-12 * scale {
        return Err(Error::BadMap("the ∂s∂t coefficient vanishes".into()));
    }
    Ok(TransformedValues {
        b11: first(h20, h11, h02, h10, h01, s) / k,
        b12: first(h20, h11, h02, h10, h01, t) / k,
        c1: h00 / k,
        a11: quad(e20, e11, e02, s),
        a12: 0.5 * mixed(e20, e11, e02),
        a22: quad(e20, e11, e02, t),
        b21: first(e20, e11, e02, e10, e01, s),
        b22: first(e20, e11, e02, e10, e01, t),
        c2: e00,
    })
}

impl TransformedSystem {
    pub fn direct(coeffs: DirectCoefficients, eps: f64) -> TransformedSystem {
        TransformedSystem {
            eps,
            source: Source::Direct(coeffs),
        }
    }

    pub fn map(&self) -> Option<&CharacteristicMap> {
        match &self.source {
            Source::Mapped { map, .. } => Some(map),
            Source::Direct(_) => None,
        }
    }

    pub fn coeffs_at(&self, s: f64, t: f64) -> Result<TransformedValues> {
        match &self.source {
            Source::Direct(d) => Ok(TransformedValues {
                b11: d.b11.eval(s, t)?,
                b12: d.b12.eval(s, t)?,
                c1: d.c1.eval(s, t)?,
                a11: d.a11.eval(s, t)?,
                a12: d.a12.eval(s, t)?,
                a22: d.a22.eval(s, t)?,
                b21: d.b21.eval(s, t)?,
                b22: d.b22.eval(s, t)?,
                c2: d.c2.eval(s, t)?,
            }),
            Source::Mapped { sys, map, tol } => {
                let (x, y) = map.inverse(s, t)?;
                let v = sys.values_at(x, y)?;
                let j = map.jet(x, y)?;
                transform_at(&v, &j, *tol)
            }
        }
    }
}

/// Point data of `w` at the origin of the characteristic coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WPointData {
    pub w: f64,
    pub ws: f64,
    pub wt: f64,
    pub wss: f64,
    pub wst: f64,
    pub wtt: f64,
    /// `∂x∂y u2` deduced from the pair.
    pub uxy: f64,
    /// The second derivative that was not prescribed, when only four values were given.
    pub deduced: Option<f64>,
}

/// Point data of `u2`: `u, ux, uy` and the prescribed second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct U2PointData {
    pub u: f64,
    pub ux: f64,
    pub uy: f64,
    pub uxx: Option<f64>,
    pub uyy: Option<f64>,
}

impl U2PointData {
    pub fn five(v: [f64; 5]) -> U2PointData {
        U2PointData {
            u: v[0],
            ux: v[1],
            uy: v[2],
            uxx: Some(v[3]),
            uyy: Some(v[4]),
        }
    }
}

/// The 3×3 matrix taking `(wss, wst, wtt)` to the second-order part of `(uxx, uxy, uyy)`.
pub fn second_derivative_matrix(g: &Matrix2<f64>) -> Matrix3<f64> {
    let (sx, tx, sy, ty) = (g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]);
    Matrix3::new(
        sx * sx,
        2.0 * sx * tx,
        tx * tx,
        sx * sy,
        sx * ty + sy * tx,
        tx * ty,
        sy * sy,
        2.0 * sy * ty,
        ty * ty,
    )
}

/// Transfer point data of `u2` at `(x0, y0)` to `w` at `(0, 0)`.
pub fn transfer_point_data(
    sys: &U2System,
    map: &CharacteristicMap,
    data: &U2PointData,
) -> Result<WPointData> {
    let v = sys.values_at(map.x0, map.y0)?;
    let [_, h11, h02, ..] = v.hyper;
    let sc = leading_scale(&v.hyper).max(leading_scale(&v.ell));
    if h11.abs() <= 1e-12 * sc && h02.abs() <= 1e-12 * sc {
        return Err(Error::Precondition {
            condition: "h11 and h02 not both zero",
            message: format!("at ({}, {})", map.x0, map.y0),
        });
    }
    let lower = |op: &[f64; 6]| op[3] * data.ux + op[4] * data.uy + op[5] * data.u;
    let rh = -lower(&v.hyper);
    let re = -lower(&v.ell);
    let (uxx, uxy, uyy, deduced) = match (data.uxx, data.uyy) {
        (Some(uxx), Some(uyy)) => {
            let bh = rh - v.hyper[0] * uxx - v.hyper[2] * uyy;
            let be = re - v.ell[0] * uxx - v.ell[2] * uyy;
            let nn = v.hyper[1] * v.hyper[1] + v.ell[1] * v.ell[1];
            if nn <= (1e-12 * sc).powi(2) {
                return Err(Error::Singular("∂x∂y does not appear in either equation".into()));
            }
            (uxx, (v.hyper[1] * bh + v.ell[1] * be) / nn, uyy, None)
        }
        (known_xx, known_yy) => {
            let (known, known_col, other_col) = match (known_xx, known_yy) {
                (Some(a), None) => (a, 0, 2),
                (None, Some(b)) => (b, 2, 0),
                _ => return Err(Error::input("point_data", "at least one of uxx, uyy is required")),
            };
            let m = Matrix2::new(v.hyper[other_col], v.hyper[1], v.ell[other_col], v.ell[1]);
            let rhs = Vector2::new(rh - v.hyper[known_col] * known, re - v.ell[known_col] * known);
            let sv = m.svd(false, false).singular_values;
            if sv.min() <= 1e-9 * sv.max() {
                return Err(Error::Singular(
                    "the pair is linearly dependent in the unknown second derivatives".into(),
                ));
            }
            let sol = m.lu().solve(&rhs).ok_or_else(|| Error::Singular("2×2 point system".into()))?;
            if known_col == 0 {
                (known, sol[1], sol[0], Some(sol[0]))
            } else {
                (sol[0], sol[1], known, Some(sol[0]))
            }
        }
    };
    let j = map.jet(map.x0, map.y0)?;
    let g = j.g();
    let det = g.determinant();
    if det.abs() <= 1e-12 {
        return Err(Error::Singular(format!("Jacobian determinant {det:e}")));
    }
    let wfirst = g.lu().solve(&Vector2::new(data.ux, data.uy)).expect("checked determinant");
    let (ws, wt) = (wfirst[0], wfirst[1]);
    let m = second_derivative_matrix(&g);
    let rhs = Vector3::new(
        uxx - ws * j.s.dxx - wt * j.t.dxx,
        uxy - ws * j.s.dxy - wt * j.t.dxy,
        uyy - ws * j.s.dyy - wt * j.t.dyy,
    );
    let w2 = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("second-derivative system".into()))?;
    Ok(WPointData {
        w: data.u,
        ws,
        wt,
        wss: w2[0],
        wst: w2[1],
        wtt: w2[2],
        uxy,
        deduced,
    })
}
