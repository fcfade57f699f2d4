//! Riemann functions of `∂s∂t w + B11 ∂s w + B12 ∂t w + C1 w = 0`, the representation of
//! `w` from its Cauchy traces, and the Volterra problems satisfied by those traces.
//!
//! For a parameter point `(ξ, η)` the Riemann function is the fixed point of
//!
//! ```text
//! R(s,t) = 1 + ∫_ξ^s B12(σ,t) R(σ,t) dσ + ∫_η^t B11(s,τ) R(s,τ) dτ − ∫_ξ^s ∫_η^t C1 R dτ dσ
//! ```
//!
//! computed by Picard iteration with cumulative trapezoid sums on a uniform grid of
//! `[-ε, ε]²`. Everything below works on grid nodes; parameter points are grid nodes too.
//! Derivatives of `R` with respect to its parameters are central differences over
//! neighbouring tables (step `2h`, shrinking to `h` and then one-sided near the edge).

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::characteristics::{TransformedSystem, TransformedValues, WPointData};
use crate::error::{Error, Result};
use crate::grid::Axis;
use crate::linalg::{cumtrapz_from, fd_weights, trapz_between};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Transformed coefficients sampled on the `n×n` grid of `[-ε, ε]²` (s fastest).
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub axis: Axis,
    values: Vec<TransformedValues>,
}

impl CoefficientTable {
    pub fn build(tsys: &TransformedSystem, n: usize) -> Result<CoefficientTable> {
        let axis = Axis::new(tsys.eps, n)?;
        let values: Vec<Result<TransformedValues>> = (0..n * n)
            .into_par_iter()
            .map(|p| tsys.coeffs_at(axis.coord(p % n), axis.coord(p / n)))
            .collect();
        Ok(CoefficientTable {
            axis,
            values: values.into_iter().collect::<Result<_>>()?,
        })
    }

    pub fn from_fn(axis: Axis, f: impl Fn(f64, f64) -> TransformedValues) -> CoefficientTable {
        let n = axis.n;
        let values = (0..n * n).map(|p| f(axis.coord(p % n), axis.coord(p / n))).collect();
        CoefficientTable { axis, values }
    }

    pub fn at(&self, i: usize, j: usize) -> &TransformedValues {
        &self.values[j * self.axis.n + i]
    }

    pub fn n(&self) -> usize {
        self.axis.n
    }

    /// Largest value of `A12² − A11 A22` over the table.
    pub fn max_ellipticity(&self) -> f64 {
        self.values.iter().map(|v| v.ellipticity()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest `min(|A11|, |A22|)` over the table.
    pub fn min_leading(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.a11.abs().min(v.a22.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    fn derivative(&self, i: usize, j: usize, axis: usize, f: impl Fn(&TransformedValues) -> f64) -> f64 {
        let n = self.n();
        let k = if axis == 0 { i } else { j };
        let offs: &[i64] = if k >= 1 && k + 1 < n {
            &[-1, 0, 1]
        } else if k == 0 {
            &[0, 1, 2]
        } else {
            &[-2, -1, 0]
        };
        let w = fd_weights(&offs.iter().map(|&o| o as f64).collect::<Vec<_>>(), 1);
        let mut acc = 0.0;
        for (o, wt) in offs.iter().zip(w) {
            let kk = (k as i64 + o) as usize;
            let v = if axis == 0 { self.at(kk, j) } else { self.at(i, kk) };
            acc += wt * f(v);
        }
        acc / self.axis.h()
    }
}

/// Inclusive index rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Window {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl Window {
    pub fn full(n: usize) -> Window {
        Window {
            i0: 0,
            i1: n - 1,
            j0: 0,
            j1: n - 1,
        }
    }

    /// Bounding box of two nodes widened by `slack`, clamped to the grid.
    pub fn spanning(a: (usize, usize), b: (usize, usize), slack: usize, n: usize) -> Window {
        Window {
            i0: a.0.min(b.0).saturating_sub(slack),
            i1: (a.0.max(b.0) + slack).min(n - 1),
            j0: a.1.min(b.1).saturating_sub(slack),
            j1: (a.1.max(b.1) + slack).min(n - 1),
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.i0..=self.i1).contains(&i) && (self.j0..=self.j1).contains(&j)
    }

    fn width(&self) -> usize {
        self.i1 - self.i0 + 1
    }

    fn height(&self) -> usize {
        self.j1 - self.j0 + 1
    }
}

/// Values of `R(·, ·, ξ, η)` for one parameter node on a window of the grid.
#[derive(Debug, Clone, Serialize)]
pub struct RiemannTable {
    pub axis_eps: f64,
    pub n: usize,
    /// Parameter node `(i, j)`.
    pub param: (usize, usize),
    pub window: Window,
    pub iterations: usize,
    /// Sup-norm change in the final Picard sweep.
    pub residual: f64,
    /// Sup-norm change per sweep.
    pub history: Vec<f64>,
    #[serde(skip)]
    values: Vec<f64>,
}

impl RiemannTable {
    fn axis(&self) -> Axis {
        Axis {
            eps: self.axis_eps,
            n: self.n,
        }
    }

    pub fn parameter(&self) -> (f64, f64) {
        let a = self.axis();
        (a.coord(self.param.0), a.coord(self.param.1))
    }

    /// `R` at global node `(i, j)`; the node must lie in the window.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(self.window.contains(i, j));
        self.values[(j - self.window.j0) * self.window.width() + (i - self.window.i0)]
    }

    pub fn try_get(&self, i: usize, j: usize) -> Option<f64> {
        self.window.contains(i, j).then(|| self.get(i, j))
    }

    /// First derivative in the evaluation variable `s` (`axis = 0`) or `t` (`axis = 1`).
    pub fn d_eval(&self, i: usize, j: usize, axis: usize) -> f64 {
        let (k, lo, hi) = if axis == 0 {
            (i, self.window.i0, self.window.i1)
        } else {
            (j, self.window.j0, self.window.j1)
        };
        let offs: &[i64] = if k > lo && k < hi {
            &[-1, 0, 1]
        } else if k == lo {
            &[0, 1, 2]
        } else {
            &[-2, -1, 0]
        };
        let w = fd_weights(&offs.iter().map(|&o| o as f64).collect::<Vec<_>>(), 1);
        let mut acc = 0.0;
        for (o, wt) in offs.iter().zip(w) {
            let kk = (k as i64 + o) as usize;
            acc += wt * if axis == 0 { self.get(kk, j) } else { self.get(i, kk) };
        }
        acc / self.axis().h()
    }

    /// Sup over the window of `|T(R) − R|`, with `T` the integral operator.
    pub fn integral_residual(&self, ct: &CoefficientTable) -> f64 {
        let next = picard_sweep(ct, self.param, &self.window, &self.values);
        next.iter()
            .zip(&self.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `x,y,value` rows (here `x = s`, `y = t`) for every node of the window.
    pub fn to_csv(&self) -> String {
        let a = self.axis();
        let mut out = String::from("x,y,value\n");
        for j in self.window.j0..=self.window.j1 {
            for i in self.window.i0..=self.window.i1 {
                out.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e}\n",
                    a.coord(i),
                    a.coord(j),
                    self.get(i, j)
                ));
            }
        }
        out
    }
}

fn picard_sweep(ct: &CoefficientTable, param: (usize, usize), win: &Window, r: &[f64]) -> Vec<f64> {
    let (w, hgt) = (win.width(), win.height());
    let h = ct.axis.h();
    let (pi, pj) = (param.0 - win.i0, param.1 - win.j0);
    let idx = |a: usize, b: usize| b * w + a;
    let mut out = vec![1.0; w * hgt];
    let mut row = vec![0.0; w];
    let mut col = vec![0.0; hgt];
    // ∫_ξ^s B12 R dσ along rows
    for b in 0..hgt {
        for a in 0..w {
            row[a] = ct.at(win.i0 + a, win.j0 + b).b12 * r[idx(a, b)];
        }
        let c = cumtrapz_from(&row, h, pi);
        for a in 0..w {
            out[idx(a, b)] += c[a];
        }
    }
    // ∫_η^t B11 R dτ along columns, and the inner C1 integral
    let mut g = vec![0.0; w * hgt];
    for a in 0..w {
        for b in 0..hgt {
            col[b] = ct.at(win.i0 + a, win.j0 + b).b11 * r[idx(a, b)];
        }
        let c = cumtrapz_from(&col, h, pj);
        for b in 0..hgt {
            out[idx(a, b)] += c[b];
        }
        for b in 0..hgt {
            col[b] = ct.at(win.i0 + a, win.j0 + b).c1 * r[idx(a, b)];
        }
        let c = cumtrapz_from(&col, h, pj);
        for b in 0..hgt {
            g[idx(a, b)] = c[b];
        }
    }
    for b in 0..hgt {
        row.copy_from_slice(&g[b * w..(b + 1) * w]);
        let c = cumtrapz_from(&row, h, pi);
        for a in 0..w {
            out[idx(a, b)] -= c[a];
        }
    }
    out
}

/// Picard iteration for one parameter node on a window containing it.
pub fn solve_window(
    ct: &CoefficientTable,
    param: (usize, usize),
    window: Window,
    tol: f64,
    max_iter: usize,
) -> Result<RiemannTable> {
    if !window.contains(param.0, param.1) || window.i1 >= ct.n() || window.j1 >= ct.n() {
        return Err(Error::input("window", "must lie in the grid and contain the parameter node"));
    }
    if !(tol > 0.0) {
        return Err(Error::input("picard_tol", format!("must be positive, got {tol}")));
    }
    let mut r = vec![1.0; window.width() * window.height()];
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let next = picard_sweep(ct, param, &window, &r);
        let diff = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        history.push(diff);
        r = next;
        if !diff.is_finite() {
            break;
        }
        if diff <= tol {
            return Ok(RiemannTable {
                axis_eps: ct.axis.eps,
                n: ct.n(),
                param,
                window,
                iterations: it,
                residual: diff,
                history,
                values: r,
            });
        }
    }
    Err(Error::NoConvergence {
        what: format!("Picard iteration for parameter node {param:?}"),
        iterations: max_iter,
    })
}

/// Riemann table on the full grid for the parameter point nearest to `(ξ, η)`.
pub fn solve_riemann(tsys: &TransformedSystem, param: (f64, f64), n: usize, tol: f64) -> Result<RiemannTable> {
    let ct = CoefficientTable::build(tsys, n)?;
    solve_riemann_on(&ct, param, tol)
}

pub fn solve_riemann_on(ct: &CoefficientTable, param: (f64, f64), tol: f64) -> Result<RiemannTable> {
    let a = ct.axis;
    if param.0.abs() > a.eps * (1.0 + 1e-12) || param.1.abs() > a.eps * (1.0 + 1e-12) {
        return Err(Error::input("parameter", format!("{param:?} lies outside [-ε, ε]²")));
    }
    let p = (a.nearest(param.0), a.nearest(param.1));
    solve_window(ct, p, Window::full(a.n), tol, DEFAULT_MAX_ITER)
}

const SLACK: usize = 4;

/// Memoised Riemann tables over one coefficient table, safe to share between workers.
pub struct RiemannProvider {
    pub ct: Arc<CoefficientTable>,
    pub tol: f64,
    pub max_iter: usize,
    memo: Mutex<HashMap<(usize, usize), Arc<RiemannTable>>>,
}

impl RiemannProvider {
    pub fn new(ct: CoefficientTable, tol: f64) -> RiemannProvider {
        RiemannProvider {
            ct: Arc::new(ct),
            tol,
            max_iter: DEFAULT_MAX_ITER,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn axis(&self) -> Axis {
        self.ct.axis
    }

    pub fn mid(&self) -> usize {
        self.ct.axis.mid()
    }

    /// Table for a parameter node, covering the box between the origin and the node.
    pub fn table(&self, param: (usize, usize)) -> Result<Arc<RiemannTable>> {
        if let Some(t) = self.memo.lock().expect("memo lock").get(&param) {
            return Ok(t.clone());
        }
        let m = self.mid();
        let win = Window::spanning((m, m), param, SLACK, self.ct.n());
        let t = Arc::new(solve_window(&self.ct, param, win, self.tol, self.max_iter)?);
        let mut memo = self.memo.lock().expect("memo lock");
        Ok(memo.entry(param).or_insert(t).clone())
    }

    pub fn cached_tables(&self) -> usize {
        self.memo.lock().expect("memo lock").len()
    }

    /// Worst Picard diagnostics over the cached tables: `(max iterations, max residual)`.
    pub fn diagnostics(&self) -> (usize, f64) {
        let memo = self.memo.lock().expect("memo lock");
        memo.values()
            .fold((0, 0.0), |(it, r), t| (it.max(t.iterations), f64::max(r, t.residual)))
    }

    /// `R(eval, param)`.
    pub fn value(&self, eval: (usize, usize), param: (usize, usize)) -> Result<f64> {
        let t = self.table(param)?;
        t.try_get(eval.0, eval.1).ok_or_else(|| {
            Error::input("riemann", format!("node {eval:?} outside the table for {param:?}"))
        })
    }

    pub fn d_eval(&self, eval: (usize, usize), param: (usize, usize), axis: usize) -> Result<f64> {
        Ok(self.table(param)?.d_eval(eval.0, eval.1, axis))
    }

    /// Derivative of `R(eval, ·)` in the parameter variables, `orders = [∂ξ order, ∂η order]`
    /// with total order at most 2.
    pub fn d_param(&self, eval: (usize, usize), param: (usize, usize), orders: [usize; 2]) -> Result<f64> {
        let n = self.ct.n();
        let h = self.axis().h();
        let stencil_for = |k: usize, order: usize| -> (Vec<i64>, Vec<f64>) {
            let offs: Vec<i64> = if order == 0 {
                vec![0]
            } else if k >= 2 && k + 2 < n {
                vec![-2, 0, 2]
            } else if k >= 1 && k + 1 < n {
                vec![-1, 0, 1]
            } else if k == 0 {
                (0..=order as i64 + 1).collect()
            } else {
                (-(order as i64 + 1)..=0).collect()
            };
            let w = if order == 0 {
                vec![1.0]
            } else {
                fd_weights(&offs.iter().map(|&o| o as f64).collect::<Vec<_>>(), order)
            };
            (offs, w)
        };
        if orders[0] + orders[1] > 2 {
            return Err(Error::input("orders", "total parameter order must be at most 2"));
        }
        let (oi, wi) = stencil_for(param.0, orders[0]);
        let (oj, wj) = stencil_for(param.1, orders[1]);
        let mut acc = 0.0;
        for (a, wa) in oi.iter().zip(&wi) {
            for (b, wb) in oj.iter().zip(&wj) {
                if wa * wb == 0.0 {
                    continue;
                }
                let p = ((param.0 as i64 + a) as usize, (param.1 as i64 + b) as usize);
                acc += wa * wb * self.value(eval, p)?;
            }
        }
        Ok(acc / h.powi((orders[0] + orders[1]) as i32))
    }

    /// `L` of the elliptic equation applied to `R(eval, ·)` in its parameter variables at `param`.
    pub fn apply_l(&self, eval: (usize, usize), param: (usize, usize)) -> Result<f64> {
        let c = *self.ct.at(param.0, param.1);
        let mut acc = c.c2 * self.value(eval, param)?;
        let terms = [
            (c.a11, [2, 0]),
            (2.0 * c.a12, [1, 1]),
            (c.a22, [0, 2]),
            (c.b21, [1, 0]),
            (c.b22, [0, 1]),
        ];
        for (coef, ord) in terms {
            if coef != 0.0 {
                acc += coef * self.d_param(eval, param, ord)?;
            }
        }
        Ok(acc)
    }

    /// `P(s, 0)` at every node of the `s` axis (`axis = 0`) or `Q(0, t)` along `t` (`axis = 1`).
    pub fn kernel_pq(&self, axis: usize) -> Result<Vec<f64>> {
        let m = self.mid();
        (0..self.ct.n())
            .into_par_iter()
            .map(|k| {
                let node = if axis == 0 { (k, m) } else { (m, k) };
                self.pq_at(axis, node, node)
            })
            .collect()
    }

    /// The `P`/`Q` combination with evaluation point `eval` and parameter `param`:
    /// for `axis = 0`, `A11 (∂s + 2∂ξ) R + 2 A12 ∂η R + B21 R`, coefficients taken at `param`.
    fn pq_at(&self, axis: usize, eval: (usize, usize), param: (usize, usize)) -> Result<f64> {
        let c = self.ct.at(param.0, param.1);
        let (lead, cross, lower) = if axis == 0 { (c.a11, c.a12, c.b21) } else { (c.a22, c.a12, c.b22) };
        let other = 1 - axis;
        let mut ord = [0, 0];
        ord[axis] = 1;
        let mut ord_other = [0, 0];
        ord_other[other] = 1;
        let along = self.d_eval(eval, param, axis)? + 2.0 * self.d_param(eval, param, ord)?;
        Ok(lead * along + 2.0 * cross * self.d_param(eval, param, ord_other)? + lower * self.value(eval, param)?)
    }

    /// Kernel matrix `K[k][l] = L R(node_l, ·)` at `node_k` along one axis, filled for
    /// `l` between the middle node and `k`.
    pub fn kernel_l(&self, axis: usize) -> Result<DMatrix<f64>> {
        let n = self.ct.n();
        let m = self.mid();
        let node = |k: usize| if axis == 0 { (k, m) } else { (m, k) };
        let rows: Vec<Result<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let mut row = vec![0.0; n];
                let (lo, hi) = (k.min(m), k.max(m));
                for (l, slot) in row.iter_mut().enumerate().take(hi + 1).skip(lo) {
                    *slot = self.apply_l(node(l), node(k))?;
                }
                Ok(row)
            })
            .collect();
        let mut out = DMatrix::zeros(n, n);
        for (k, r) in rows.into_iter().enumerate() {
            for (l, v) in r?.into_iter().enumerate() {
                out[(k, l)] = v;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceProvenance {
    FromWTraces,
    FromVolterraSolve,
}

/// `φ(s) = ∂s w(s,0) + B12(s,0) w(s,0)` and `ψ(t) = ∂t w(0,t) + B11(0,t) w(0,t)` at the nodes.
#[derive(Debug, Clone, Serialize)]
pub struct CauchyTraces {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub provenance: TraceProvenance,
}

impl CauchyTraces {
    pub fn zero(n: usize) -> CauchyTraces {
        CauchyTraces {
            phi: vec![0.0; n],
            psi: vec![0.0; n],
            provenance: TraceProvenance::FromVolterraSolve,
        }
    }

    /// Traces of a known `w`, given as `(w, ∂s w, ∂t w)` at `(s, t)`.
    pub fn from_w(ct: &CoefficientTable, w: impl Fn(f64, f64) -> (f64, f64, f64)) -> CauchyTraces {
        let a = ct.axis;
        let m = a.mid();
        let phi = (0..a.n)
            .map(|i| {
                let (v, ws, _) = w(a.coord(i), 0.0);
                ws + ct.at(i, m).b12 * v
            })
            .collect();
        let psi = (0..a.n)
            .map(|j| {
                let (v, _, wt) = w(0.0, a.coord(j));
                wt + ct.at(m, j).b11 * v
            })
            .collect();
        CauchyTraces {
            phi,
            psi,
            provenance: TraceProvenance::FromWTraces,
        }
    }

    pub fn sup_norms(&self) -> (f64, f64) {
        let sup = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        (sup(&self.phi), sup(&self.psi))
    }
}

/// `w(s,t) = w00 R(0,0,s,t) + ∫_0^s R(σ,0,s,t) φ dσ + ∫_0^t R(0,τ,s,t) ψ dτ` at target nodes.
pub fn represent_solution(
    provider: &RiemannProvider,
    w00: f64,
    traces: &CauchyTraces,
    targets: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let n = provider.ct.n();
    if traces.phi.len() != n || traces.psi.len() != n {
        return Err(Error::input("traces", format!("need {n} nodes per trace")));
    }
    let m = provider.mid();
    let h = provider.axis().h();
    targets
        .par_iter()
        .map(|&(i, j)| {
            if i >= n || j >= n {
                return Err(Error::input("targets", format!("node ({i}, {j}) outside the grid")));
            }
            let t = provider.table((i, j))?;
            let along_s: Vec<f64> = (0..n)
                .map(|k| if t.window.contains(k, m) { t.get(k, m) * traces.phi[k] } else { 0.0 })
                .collect();
            let along_t: Vec<f64> = (0..n)
                .map(|k| if t.window.contains(m, k) { t.get(m, k) * traces.psi[k] } else { 0.0 })
                .collect();
            Ok(w00 * t.get(m, m) + trapz_between(&along_s, h, m, i) + trapz_between(&along_t, h, m, j))
        })
        .collect()
}

/// Coordinates of the targets as node indices; every target must lie on a node.
pub fn target_nodes(axis: &Axis, targets: &[(f64, f64)]) -> Result<Vec<(usize, usize)>> {
    targets
        .iter()
        .map(|&(s, t)| match (axis.node_of(s), axis.node_of(t)) {
            (Some(i), Some(j)) => Ok((i, j)),
            _ => Err(Error::input("targets", format!("({s}, {t}) is not a grid node"))),
        })
        .collect()
}

/// March `A u' + P u + ∫_0^s K(s,σ) u(σ) dσ = g` outward from the middle node in both
/// directions with the implicit trapezoid rule; `kernel(k, l)` is `K(s_k, s_l)`.
pub fn volterra_ivp(
    axis: &Axis,
    leading: &[f64],
    damping: &[f64],
    kernel: &(dyn Fn(usize, usize) -> f64 + Sync),
    forcing: &[f64],
    u0: f64,
    min_leading: f64,
) -> Result<Vec<f64>> {
    let n = axis.n;
    if leading.len() != n || damping.len() != n || forcing.len() != n {
        return Err(Error::input("volterra", format!("coefficient arrays must have {n} nodes")));
    }
    if let Some(k) = leading.iter().position(|a| !(a.abs() >= min_leading)) {
        return Err(Error::Precondition {
            condition: "leading coefficient bounded away from zero",
            message: format!("|A| = {} < {min_leading} at node {k}", leading[k].abs()),
        });
    }
    let m = axis.mid();
    let mut u = vec![0.0; n];
    u[m] = u0;
    for dir in [1i64, -1] {
        let h = dir as f64 * axis.h();
        // u'_k from the equation, given the integral over [0, s_k].
        let slope = |k: usize, uk: f64, integral: f64| (forcing[k] - damping[k] * uk - integral) / leading[k];
        let mut prev_slope = slope(m, u0, 0.0);
        let mut k = m;
        loop {
            let next = k as i64 + dir;
            if next < 0 || next >= n as i64 {
                break;
            }
            let kn = next as usize;
            // Trapezoid integral over nodes m..kn, split into known part and the u[kn] weight.
            let mut known = 0.0;
            let mut l = m;
            while l != kn {
                let ln = (l as i64 + dir) as usize;
                let wl = if l == m { 0.5 } else { 1.0 };
                known += wl * kernel(kn, l) * u[l];
                l = ln;
            }
            known *= h;
            let self_w = 0.5 * h * kernel(kn, kn);
            // u_n = u_k + h/2 (f_k + (g_n − P_n u_n − known − self_w u_n)/A_n)
            let a = leading[kn];
            let rhs = u[k] + 0.5 * h * (prev_slope + (forcing[kn] - known) / a);
            let coef = 1.0 + 0.5 * h * (damping[kn] + self_w) / a;
            u[kn] = rhs / coef;
            prev_slope = slope(kn, u[kn], known + self_w * u[kn]);
            k = kn;
        }
    }
    Ok(u)
}

/// Diagnostics of the two trace problems.
#[derive(Debug, Clone, Serialize)]
pub struct TraceSolve {
    pub traces: CauchyTraces,
    pub phi0: f64,
    pub psi0: f64,
}

/// Solve the Volterra problems for `φ` and `ψ` given point data of `w` at the origin.
///
/// With the data written as `w00 = w(0,0)`, `φ(0)`, `φ'(0)`, `ψ(0)`, `ψ'(0)`, substituting
/// the representation formula into the elliptic equation on `t = 0` gives
///
/// ```text
/// A11 φ' + P φ + ∫_0^s L R(σ,0,·) φ dσ = −(A22 R(0,0,s,0) ψ'(0) + Q̃(s) ψ(0) + w00 L R(0,0,·)(s,0))
/// ```
///
/// and symmetrically on `s = 0`. For vanishing point data both right-hand
/// sides are zero.
pub fn solve_traces(provider: &RiemannProvider, data: &WPointData, min_leading: f64) -> Result<TraceSolve> {
    let ct = &provider.ct;
    let axis = provider.axis();
    let n = axis.n;
    let m = axis.mid();
    let c0 = ct.at(m, m);
    let db12 = ct.derivative(m, m, 0, |v| v.b12);
    let db11 = ct.derivative(m, m, 1, |v| v.b11);
    let phi0 = data.ws + c0.b12 * data.w;
    let dphi0 = data.wss + db12 * data.w + c0.b12 * data.ws;
    let psi0 = data.wt + c0.b11 * data.w;
    let dpsi0 = data.wtt + db11 * data.w + c0.b11 * data.wt;
    let origin = (m, m);
    let mut solved = Vec::with_capacity(2);
    for ax in 0..2 {
        let other = 1 - ax;
        let node = |k: usize| if ax == 0 { (k, m) } else { (m, k) };
        let (d0_other, d1_other, u0) = if ax == 0 { (psi0, dpsi0, phi0) } else { (phi0, dphi0, psi0) };
        let lead: Vec<f64> = (0..n).map(|k| {
            let c = ct.at(node(k).0, node(k).1);
            if ax == 0 { c.a11 } else { c.a22 }
        }).collect();
        let damping = provider.kernel_pq(ax)?;
        let kmat = provider.kernel_l(ax)?;
        let forcing: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let p = node(k);
                let c = ct.at(p.0, p.1);
                let other_lead = if ax == 0 { c.a22 } else { c.a11 };
                let mut g = 0.0;
                if d1_other != 0.0 {
                    g += other_lead * provider.value(origin, p)? * d1_other;
                }
                if d0_other != 0.0 {
                    g += provider.pq_at(other, origin, p)? * d0_other;
                }
                if data.w != 0.0 {
                    g += data.w * provider.apply_l(origin, p)?;
                }
                Ok(-g)
            })
            .collect::<Result<_>>()?;
        let k = |a: usize, b: usize| kmat[(a, b)];
        solved.push(volterra_ivp(&axis, &lead, &damping, &k, &forcing, u0, min_leading)?);
    }
    let psi = solved.pop().expect("two solves");
    let phi = solved.pop().expect("two solves");
    Ok(TraceSolve {
        traces: CauchyTraces {
            phi,
            psi,
            provenance: TraceProvenance::FromVolterraSolve,
        },
        phi0,
        psi0,
    })
}

/// Bessel-type series `Σ (−z)^k / (k!)²`, equal to `J0(2√z)` for `z ≥ 0`.
pub fn bessel_series(z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= -z / (k as f64 * k as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}
