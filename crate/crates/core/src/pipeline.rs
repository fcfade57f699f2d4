//! Scenario orchestration: conditions → reduce → characteristics → riemann → ucp, plus the
//! null-space estimate of the reduced pair.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::characteristics::{
    build_map, characteristic_slopes, transfer_point_data, transform_system, MapCase, TransformedSystem,
    U2PointData, WPointData,
};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Axis, Rect};
use crate::nullspace::{null_space_dimension, NullspaceOptions, NullspaceResult};
use crate::reduction::{
    apply, jet_at, jet_fields, numerical_rank, reduce, residual, second_order_rank, U2System,
};
use crate::riemann::{represent_solution, solve_traces, CoefficientTable, RiemannProvider};
use crate::tensor::{
    convexity_margin, delta_range, ellipticity_margin, pencil_eigenpairs, ElasticityCoefficients,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Conditions,
    Reduce,
    Characteristics,
    Riemann,
    Ucp,
    Nullspace,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Conditions,
        Task::Reduce,
        Task::Characteristics,
        Task::Riemann,
        Task::Ucp,
        Task::Nullspace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Conditions => "conditions",
            Task::Reduce => "reduce",
            Task::Characteristics => "characteristics",
            Task::Riemann => "riemann",
            Task::Ucp => "ucp",
            Task::Nullspace => "nullspace",
        }
    }

    pub fn from_name(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }

    fn requires(self) -> &'static [Task] {
        match self {
            Task::Conditions | Task::Reduce => &[],
            Task::Characteristics | Task::Nullspace => &[Task::Reduce],
            Task::Riemann => &[Task::Reduce, Task::Characteristics],
            Task::Ucp => &[Task::Reduce, Task::Characteristics, Task::Riemann],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative singular-value threshold for numerical ranks.
    pub rank: f64,
    pub picard: f64,
    /// Bound on the sup-norms of the traces for zero data.
    pub ivp: f64,
    /// Bound on the reconstructed `sup |w|` for zero data.
    pub reconstruct: f64,
    /// Bound on the transferred point data of `w` for zero data.
    pub transfer: f64,
    pub nullspace_threshold: f64,
    pub nullspace_gap: f64,
    /// Bound on the projection residual of a family member onto the null space.
    pub basis_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: 1e-9,
            picard: 1e-10,
            ivp: 1e-10,
            reconstruct: 1e-8,
            transfer: 1e-12,
            nullspace_threshold: 1e-7,
            nullspace_gap: 1e3,
            basis_residual: 1e-6,
        }
    }
}

/// Expected outcomes checked after a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strongly_elliptic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strongly_convex: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperbolic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma_hypothesis: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_order_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_data_rank_deficient: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_case: Option<MapCaseName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weakened_data_accepted: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ucp_zero: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nullspace_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapCaseName {
    OrthotropicIdentity,
    A1112Nonzero,
    A1222Nonzero,
}

impl From<MapCase> for MapCaseName {
    fn from(c: MapCase) -> Self {
        match c {
            MapCase::OrthotropicIdentity => MapCaseName::OrthotropicIdentity,
            MapCase::A1112Nonzero => MapCaseName::A1112Nonzero,
            MapCase::A1222Nonzero => MapCaseName::A1222Nonzero,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub coefficients: ElasticityCoefficients,
    pub point: (f64, f64),
    pub omega: Rect,
    /// Nodes per axis for condition sweeps and the null-space grid.
    pub n: usize,
    /// Nodes per axis of the characteristic square.
    pub riemann_n: usize,
    pub tolerances: Tolerances,
    pub tasks: Vec<Task>,
    pub point_data: Option<U2PointData>,
    pub family: Vec<ScalarField>,
    pub expect: Expectations,
    pub seed: u64,
}

impl Scenario {
    pub fn new(name: &str, coefficients: ElasticityCoefficients, omega: Rect) -> Scenario {
        Scenario {
            name: name.to_string(),
            coefficients,
            point: (omega.center[0], omega.center[1]),
            omega,
            n: 65,
            riemann_n: 33,
            tolerances: Tolerances::default(),
            tasks: Task::ALL.to_vec(),
            point_data: None,
            family: Vec::new(),
            expect: Expectations::default(),
            seed: NullspaceOptions::default().seed,
        }
    }

    /// Requested tasks with their prerequisites, in execution order.
    pub fn task_closure(&self) -> Vec<Task> {
        let mut out: Vec<Task> = Vec::new();
        for &t in &self.tasks {
            for &d in t.requires().iter().chain(std::iter::once(&t)) {
                if !out.contains(&d) {
                    out.push(d);
                }
            }
        }
        out.sort();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">")]
    Above,
}

/// A reported number together with the bound it was tested against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Measure {
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    pub pass: bool,
}

impl Measure {
    pub fn new(value: f64, relation: Relation, limit: f64) -> Measure {
        let pass = match relation {
            Relation::AtMost => value <= limit,
            Relation::Below => value < limit,
            Relation::Above => value > limit,
        };
        Measure {
            value,
            relation,
            limit,
            pass,
        }
    }

    pub fn at_most(value: f64, limit: f64) -> Measure {
        Measure::new(value, Relation::AtMost, limit)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PencilReport {
    /// `[re, im]` per root.
    pub roots: Vec<[f64; 2]>,
    pub conditioning: Vec<f64>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub samples: usize,
    pub min_abs_imag: Measure,
    pub min_conditioning: Measure,
    pub defective_samples: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionsReport {
    pub sample_n: usize,
    pub ellipticity_margin: Measure,
    pub convexity_margin: Measure,
    pub delta_min: Measure,
    pub delta_max: f64,
    /// Largest `a1222² − a1212 a2222` on the grid.
    pub derived_ellipticity_max: Measure,
    pub strongly_elliptic: bool,
    pub strongly_convex: bool,
    pub hyperbolic: bool,
    pub pencil_at_point: Option<PencilReport>,
    pub lemma_hypothesis: LemmaReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointDataSolve {
    pub basis: Vec<String>,
    pub rows: Vec<String>,
    pub rank: usize,
    pub columns: usize,
    pub rank_tol: f64,
    pub singular_values: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub residual: f64,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReduceReport {
    pub hyper_at_point: [f64; 6],
    pub ell_at_point: [f64; 6],
    pub second_order_rank: usize,
    pub rank_tol: f64,
    /// Second-order jet of `u2` pinned by the point data and both equations at the point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_data: Option<PointDataSolve>,
    /// The scenario's closed-form family pinned by the point data alone.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<PointDataSolve>,
    /// Sup-norm residuals `[hyper, ell]` of each family member on a 17×17 grid of omega.
    pub family_residuals: BTreeMap<String, [f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CharacteristicsReport {
    pub case: MapCase,
    pub traced: bool,
    pub eps: f64,
    pub delta_at_point: Measure,
    pub slopes: [f64; 2],
    pub jacobian_det: f64,
    pub origin_offset: Measure,
    /// `[min, max]` of each transformed coefficient on a 9×9 sample of the square.
    pub transformed: BTreeMap<String, [f64; 2]>,
    pub ellipticity_max: Measure,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiemannReport {
    pub n: usize,
    pub eps: f64,
    pub h: f64,
    pub tables: usize,
    pub max_iterations: usize,
    pub max_picard_change: Measure,
    pub max_integral_residual: f64,
    /// Largest ratio of successive Picard changes after the first sweep.
    pub max_contraction_ratio: Measure,
    pub p_sup: f64,
    pub q_sup: f64,
    pub kernel_phi_sup: f64,
    pub kernel_psi_sup: f64,
    pub min_leading: f64,
    pub ellipticity_max: Measure,
}

#[derive(Debug, Clone, Serialize)]
pub struct HandOff {
    /// Pencil hypothesis of the propagation lemma on omega, when the conditions task ran.
    pub lemma_hypothesis: Option<bool>,
    /// Continuation from the characteristic square to all of omega is not computed.
    pub propagated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UcpReport {
    pub data: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transferred: Option<WPointData>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transferred_sup: Option<Measure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_sup: Option<Measure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_sup: Option<Measure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_sup: Option<Measure>,
    pub targets: usize,
    pub vanishes: bool,
    pub handoff: HandOff,
}

#[derive(Debug, Clone, Serialize)]
pub struct NullspaceReport {
    #[serde(flatten)]
    pub result: NullspaceResult,
    pub basis_residuals: BTreeMap<String, Measure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpectationResult {
    pub key: String,
    pub expected: Value,
    pub observed: Value,
    pub status: Status,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub point: [f64; 2],
    pub omega: Rect,
    pub tasks: Vec<Task>,
    pub tolerances: Tolerances,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduce: Option<ReduceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub characteristics: Option<CharacteristicsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub riemann: Option<RiemannReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ucp: Option<UcpReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nullspace: Option<NullspaceReport>,
    pub expectations: Vec<ExpectationResult>,
    pub verdict: Status,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.verdict == Status::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// State carried between stages.
#[derive(Default)]
struct Work {
    sys: Option<U2System>,
    tsys: Option<TransformedSystem>,
    provider: Option<RiemannProvider>,
    nullspace: Option<NullspaceResult>,
}

pub fn run(sc: &Scenario) -> Result<ScenarioReport> {
    sc.omega.validate().map_err(|e| e.in_stage("scenario"))?;
    if !sc.omega.contains(sc.point.0, sc.point.1) {
        return Err(Error::input("point", "lies outside omega").in_stage("scenario"));
    }
    let tasks = sc.task_closure();
    let mut report = ScenarioReport {
        name: sc.name.clone(),
        point: [sc.point.0, sc.point.1],
        omega: sc.omega,
        tasks: tasks.clone(),
        tolerances: sc.tolerances,
        seed: sc.seed,
        conditions: None,
        reduce: None,
        characteristics: None,
        riemann: None,
        ucp: None,
        nullspace: None,
        expectations: Vec::new(),
        verdict: Status::Pass,
    };
    let mut work = Work::default();
    for task in tasks {
        let stage = task.name();
        match task {
            Task::Conditions => report.conditions = Some(conditions(sc).map_err(|e| e.in_stage(stage))?),
            Task::Reduce => {
                let sys = reduce(&sc.coefficients);
                report.reduce = Some(reduce_stage(sc, &sys).map_err(|e| e.in_stage(stage))?);
                work.sys = Some(sys);
            }
            Task::Characteristics => {
                let sys = work.sys.as_ref().expect("reduce ran");
                let (rep, tsys) = characteristics_stage(sc, sys).map_err(|e| e.in_stage(stage))?;
                report.characteristics = Some(rep);
                work.tsys = Some(tsys);
            }
            Task::Riemann => {
                let tsys = work.tsys.as_ref().expect("characteristics ran");
                let (rep, provider) = riemann_stage(sc, tsys).map_err(|e| e.in_stage(stage))?;
                report.riemann = Some(rep);
                work.provider = Some(provider);
            }
            Task::Ucp => {
                let lemma = report.conditions.as_ref().map(|c| c.lemma_hypothesis.holds);
                report.ucp = Some(ucp_stage(sc, &work, lemma).map_err(|e| e.in_stage(stage))?);
            }
            Task::Nullspace => {
                let sys = work.sys.as_ref().expect("reduce ran");
                let rep = nullspace_stage(sc, sys).map_err(|e| e.in_stage(stage))?;
                work.nullspace = Some(rep.result.clone());
                report.nullspace = Some(rep);
            }
        }
    }
    report.expectations = evaluate(&sc.expect, &report);
    report.verdict = if report.expectations.iter().any(|e| e.status == Status::Fail) {
        Status::Fail
    } else {
        Status::Pass
    };
    Ok(report)
}

fn conditions(sc: &Scenario) -> Result<ConditionsReport> {
    let c = &sc.coefficients;
    let n = sc.n;
    let ell = ellipticity_margin(c, &sc.omega, n)?;
    let cvx = convexity_margin(c, &sc.omega, n)?;
    let (dmin, dmax) = delta_range(c, &sc.omega, n)?;
    let derived: Vec<Result<f64>> = sc
        .omega
        .nodes(n)
        .par_iter()
        .map(|&(x, y)| {
            let v = c.values_at(x, y)?;
            Ok(v.a1222 * v.a1222 - v.a1212 * v.a2222)
        })
        .collect();
    let mut derived_max = f64::NEG_INFINITY;
    for d in derived {
        derived_max = derived_max.max(d?);
    }
    let pencil_at_point = match pencil_eigenpairs(c, sc.point.0, sc.point.1) {
        Ok(p) => Some(PencilReport {
            roots: p.roots.iter().map(|r| [r.re, r.im]).collect(),
            conditioning: p.conditioning.to_vec(),
            max_residual: p.residuals.iter().copied().fold(0.0, f64::max),
        }),
        Err(Error::Defective(_)) | Err(Error::Singular(_)) => None,
        Err(e) => return Err(e),
    };
    let lemma_n = 9;
    let samples = sc.omega.nodes(lemma_n);
    let pencils: Vec<Result<Option<(f64, f64)>>> = samples
        .par_iter()
        .map(|&(x, y)| match pencil_eigenpairs(c, x, y) {
            Ok(p) => Ok(Some((
                p.roots.iter().map(|r| r.im.abs()).fold(f64::INFINITY, f64::min),
                p.min_conditioning(),
            ))),
            Err(Error::Defective(_)) | Err(Error::Singular(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let (mut min_im, mut min_cond, mut defective) = (f64::INFINITY, f64::INFINITY, 0);
    for p in pencils {
        match p? {
            Some((im, cond)) => {
                min_im = min_im.min(im);
                min_cond = min_cond.min(cond);
            }
            None => defective += 1,
        }
    }
    let min_abs_imag = Measure::new(min_im, Relation::Above, 1e-8);
    let min_conditioning = Measure::new(min_cond, Relation::Above, 1e-8);
    let ellipticity_margin = Measure::new(ell, Relation::Above, 0.0);
    let convexity_margin = Measure::new(cvx, Relation::Above, 0.0);
    let delta_min = Measure::new(dmin, Relation::Above, 0.0);
    Ok(ConditionsReport {
        sample_n: n,
        strongly_elliptic: ellipticity_margin.pass,
        strongly_convex: convexity_margin.pass,
        hyperbolic: delta_min.pass,
        ellipticity_margin,
        convexity_margin,
        delta_min,
        delta_max: dmax,
        derived_ellipticity_max: Measure::new(derived_max, Relation::Below, 0.0),
        pencil_at_point,
        lemma_hypothesis: LemmaReport {
            samples: samples.len(),
            holds: defective == 0 && min_abs_imag.pass && min_conditioning.pass,
            min_abs_imag,
            min_conditioning,
            defective_samples: defective,
        },
    })
}

/// Quadratic Taylor monomials centred at the point.
pub fn taylor_basis(x0: f64, y0: f64) -> (Vec<ScalarField>, Vec<String>) {
    let dx = ScalarField::x().sub(&ScalarField::constant(x0));
    let dy = ScalarField::y().sub(&ScalarField::constant(y0));
    let basis = vec![
        ScalarField::constant(1.0),
        dx.clone(),
        dy.clone(),
        dx.mul(&dx),
        dx.mul(&dy),
        dy.mul(&dy),
    ];
    let names = ["1", "dx", "dy", "dx^2", "dx*dy", "dy^2"].map(String::from).to_vec();
    (basis, names)
}

/// Least-squares fit of family coefficients to point data of `u2` at `point`.
///
/// Each given datum contributes a row; with `constraints`, both equations of the pair at the
/// point contribute homogeneous rows too. A rank below the number of basis functions means
/// the data cannot pin the family.
pub fn point_data_solve(
    basis: &[ScalarField],
    names: &[String],
    point: (f64, f64),
    data: &U2PointData,
    constraints: Option<&U2System>,
    rank_tol: f64,
) -> Result<PointDataSolve> {
    if basis.is_empty() {
        return Err(Error::input("family", "basis must not be empty"));
    }
    let jets = basis
        .iter()
        .map(|f| jet_at(&jet_fields(f), point.0, point.1))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<(String, Vec<f64>, f64)> = Vec::new();
    let picks: [(&str, usize, Option<f64>); 5] = [
        ("u", 0, Some(data.u)),
        ("ux", 1, Some(data.ux)),
        ("uy", 2, Some(data.uy)),
        ("uxx", 3, data.uxx),
        ("uyy", 5, data.uyy),
    ];
    for (name, k, v) in picks {
        if let Some(v) = v {
            rows.push((name.to_string(), jets.iter().map(|j| j[k]).collect(), v));
        }
    }
    if let Some(sys) = constraints {
        let v = sys.values_at(point.0, point.1)?;
        rows.push(("hyperbolic".into(), jets.iter().map(|j| apply(&v.hyper, j)).collect(), 0.0));
        rows.push(("elliptic".into(), jets.iter().map(|j| apply(&v.ell, j)).collect(), 0.0));
    }
    let m = DMatrix::from_fn(rows.len(), basis.len(), |i, j| rows[i].1[j]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.2));
    let rank = numerical_rank(&m, rank_tol);
    let svd = m.clone().svd(true, true);
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let coeffs = svd
        .solve(&b, rank_tol * smax)
        .map_err(|e| Error::Singular(format!("point-data system: {e}")))?;
    let residual = (&m * &coeffs - &b).norm();
    Ok(PointDataSolve {
        basis: names.to_vec(),
        rows: rows.into_iter().map(|r| r.0).collect(),
        rank,
        columns: basis.len(),
        rank_tol,
        singular_values,
        coefficients: coeffs.iter().copied().collect(),
        residual,
        rank_deficient: rank < basis.len(),
    })
}

fn reduce_stage(sc: &Scenario, sys: &U2System) -> Result<ReduceReport> {
    let v = sys.values_at(sc.point.0, sc.point.1)?;
    let rank_tol = sc.tolerances.rank;
    let point_data = match &sc.point_data {
        Some(d) => {
            let (basis, names) = taylor_basis(sc.point.0, sc.point.1);
            Some(point_data_solve(&basis, &names, sc.point, d, Some(sys), rank_tol)?)
        }
        None => None,
    };
    let names: Vec<String> = sc.family.iter().map(|f| f.to_string()).collect();
    let family = match (&sc.point_data, sc.family.is_empty()) {
        (Some(d), false) => Some(point_data_solve(&sc.family, &names, sc.point, d, None, rank_tol)?),
        _ => None,
    };
    let mut family_residuals = BTreeMap::new();
    for (f, name) in sc.family.iter().zip(&names) {
        let (a, b) = residual(sys, f, &sc.omega, 17)?;
        family_residuals.insert(name.clone(), [a, b]);
    }
    Ok(ReduceReport {
        hyper_at_point: v.hyper,
        ell_at_point: v.ell,
        second_order_rank: second_order_rank(sys, sc.point.0, sc.point.1, rank_tol)?,
        rank_tol,
        point_data,
        family,
        family_residuals,
    })
}

fn characteristics_stage(sc: &Scenario, sys: &U2System) -> Result<(CharacteristicsReport, TransformedSystem)> {
    let (dmin, _) = delta_range(&sc.coefficients, &sc.omega, sc.n.min(33))?;
    if !(dmin > 0.0) {
        return Err(Error::Precondition {
            condition: "hyperbolicity",
            message: format!("Δ attains {dmin} ≤ 0 on omega"),
        });
    }
    let map = build_map(sys, &sc.omega, sc.point.0, sc.point.1)?;
    let tsys = transform_system(sys, &map)?;
    let slopes = characteristic_slopes(sys, sc.point.0, sc.point.1)?;
    let jet = map.jet(sc.point.0, sc.point.1)?;
    let axis = Axis::new(tsys.eps, 9)?;
    let samples: Vec<Result<[f64; 9]>> = (0..81)
        .into_par_iter()
        .map(|k| {
            let v = tsys.coeffs_at(axis.coord(k % 9), axis.coord(k / 9))?;
            Ok([v.b11, v.b12, v.c1, v.a11, v.a12, v.a22, v.b21, v.b22, v.c2])
        })
        .collect();
    let keys = ["B11", "B12", "C1", "A11", "A12", "A22", "B21", "B22", "C2"];
    let mut ranges = [[f64::INFINITY, f64::NEG_INFINITY]; 9];
    let mut ell_max = f64::NEG_INFINITY;
    for s in samples {
        let s = s?;
        for (r, v) in ranges.iter_mut().zip(s) {
            r[0] = r[0].min(v);
            r[1] = r[1].max(v);
        }
        ell_max = ell_max.max(s[4] * s[4] - s[3] * s[5]);
    }
    let transformed = keys.iter().map(|k| k.to_string()).zip(ranges).collect();
    let rep = CharacteristicsReport {
        case: map.case,
        traced: map.is_traced(),
        eps: tsys.eps,
        delta_at_point: Measure::new(slopes.delta, Relation::Above, 0.0),
        slopes: [slopes.roots.0, slopes.roots.1],
        jacobian_det: jet.det(),
        origin_offset: Measure::at_most(jet.s.value.abs() + jet.t.value.abs(), 1e-12),
        transformed,
        ellipticity_max: Measure::new(ell_max, Relation::Below, 0.0),
    };
    Ok((rep, tsys))
}

fn riemann_stage(sc: &Scenario, tsys: &TransformedSystem) -> Result<(RiemannReport, RiemannProvider)> {
    let ct = CoefficientTable::build(tsys, sc.riemann_n)?;
    let ellipticity = ct.max_ellipticity();
    let min_leading = ct.min_leading();
    let provider = RiemannProvider::new(ct, sc.tolerances.picard);
    let axis = provider.axis();
    let last = axis.n - 1;
    let m = axis.mid();
    let p = provider.kernel_pq(0)?;
    let q = provider.kernel_pq(1)?;
    let kphi = provider.kernel_l(0)?;
    let kpsi = provider.kernel_l(1)?;
    let mut integral_residual: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for param in [(m, m), (0, 0), (last, 0), (0, last), (last, last)] {
        let t = provider.table(param)?;
        integral_residual = integral_residual.max(t.integral_residual(&provider.ct));
        for w in t.history.windows(2).skip(1) {
            if w[0] > 0.0 && w[1] > 0.0 {
                ratio = ratio.max(w[1] / w[0]);
            }
        }
    }
    let (max_iterations, max_change) = provider.diagnostics();
    let sup = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let rep = RiemannReport {
        n: axis.n,
        eps: axis.eps,
        h: axis.h(),
        tables: provider.cached_tables(),
        max_iterations,
        max_picard_change: Measure::at_most(max_change, sc.tolerances.picard),
        max_integral_residual: integral_residual,
        max_contraction_ratio: Measure::new(ratio, Relation::Below, 1.0),
        p_sup: sup(&p),
        q_sup: sup(&q),
        kernel_phi_sup: kphi.amax(),
        kernel_psi_sup: kpsi.amax(),
        min_leading,
        ellipticity_max: Measure::new(ellipticity, Relation::Below, 0.0),
    };
    Ok((rep, provider))
}

fn describe_data(d: &U2PointData) -> String {
    match (d.uxx, d.uyy) {
        (Some(_), Some(_)) => "five-value".into(),
        (Some(_), None) => "four-value (uyy omitted)".into(),
        (None, Some(_)) => "four-value (uxx omitted)".into(),
        (None, None) => "incomplete".into(),
    }
}

fn ucp_stage(sc: &Scenario, work: &Work, lemma: Option<bool>) -> Result<UcpReport> {
    let sys = work.sys.as_ref().expect("reduce ran");
    let tsys = work.tsys.as_ref().expect("characteristics ran");
    let provider = work.provider.as_ref().expect("riemann ran");
    let map = tsys.map().expect("mapped system");
    let data = sc.point_data.unwrap_or(U2PointData::five([0.0; 5]));
    let handoff = HandOff {
        lemma_hypothesis: lemma,
        propagated: false,
    };
    let label = describe_data(&data);
    let transferred = match transfer_point_data(sys, map, &data) {
        Ok(t) => t,
        Err(Error::Singular(reason)) => {
            return Ok(UcpReport {
                data: label,
                status: "declined".into(),
                reason: Some(reason),
                transferred: None,
                transferred_sup: None,
                phi_sup: None,
                psi_sup: None,
                w_sup: None,
                targets: 0,
                vanishes: false,
                handoff,
            })
        }
        Err(e) => return Err(e),
    };
    let t = &transferred;
    let tsup = [t.w, t.ws, t.wt, t.wss, t.wst, t.wtt].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let solved = solve_traces(provider, t, 1e-12)?;
    let (phi_sup, psi_sup) = solved.traces.sup_norms();
    let n = provider.ct.n();
    let stride = ((n - 1) / 16).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let targets: Vec<(usize, usize)> = idx.iter().flat_map(|&j| idx.iter().map(move |&i| (i, j))).collect();
    let w = represent_solution(provider, t.w, &solved.traces, &targets)?;
    let w_sup = w.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let transferred_sup = Measure::at_most(tsup, sc.tolerances.transfer);
    let phi_sup = Measure::at_most(phi_sup, sc.tolerances.ivp);
    let psi_sup = Measure::at_most(psi_sup, sc.tolerances.ivp);
    let w_sup = Measure::at_most(w_sup, sc.tolerances.reconstruct);
    Ok(UcpReport {
        data: label,
        status: "completed".into(),
        reason: None,
        transferred: Some(transferred),
        vanishes: transferred_sup.pass && phi_sup.pass && psi_sup.pass && w_sup.pass,
        transferred_sup: Some(transferred_sup),
        phi_sup: Some(phi_sup),
        psi_sup: Some(psi_sup),
        w_sup: Some(w_sup),
        targets: targets.len(),
        handoff,
    })
}

fn nullspace_stage(sc: &Scenario, sys: &U2System) -> Result<NullspaceReport> {
    let opts = NullspaceOptions {
        n: sc.n,
        threshold: sc.tolerances.nullspace_threshold,
        min_gap: sc.tolerances.nullspace_gap,
        seed: sc.seed,
        ..NullspaceOptions::default()
    };
    let result = null_space_dimension(sys, &sc.omega, &opts)?;
    let mut basis_residuals = BTreeMap::new();
    for f in &sc.family {
        let r = result.projection_residual(f)?;
        basis_residuals.insert(f.to_string(), Measure::at_most(r, sc.tolerances.basis_residual));
    }
    Ok(NullspaceReport { result, basis_residuals })
}

fn evaluate(exp: &Expectations, rep: &ScenarioReport) -> Vec<ExpectationResult> {
    let mut out = Vec::new();
    let mut check = |key: &str, expected: Option<Value>, observed: Option<Value>| {
        let Some(expected) = expected else { return };
        let status = match &observed {
            None => Status::Skipped,
            Some(o) if *o == expected => Status::Pass,
            Some(_) => Status::Fail,
        };
        out.push(ExpectationResult {
            key: key.to_string(),
            expected,
            observed: observed.unwrap_or(Value::Null),
            status,
        });
    };
    let cond = rep.conditions.as_ref();
    let red = rep.reduce.as_ref();
    check(
        "strongly_elliptic",
        exp.strongly_elliptic.map(|v| json!(v)),
        cond.map(|c| json!(c.strongly_elliptic)),
    );
    check(
        "strongly_convex",
        exp.strongly_convex.map(|v| json!(v)),
        cond.map(|c| json!(c.strongly_convex)),
    );
    check("hyperbolic", exp.hyperbolic.map(|v| json!(v)), cond.map(|c| json!(c.hyperbolic)));
    check(
        "lemma_hypothesis",
        exp.lemma_hypothesis.map(|v| json!(v)),
        cond.map(|c| json!(c.lemma_hypothesis.holds)),
    );
    check(
        "second_order_rank",
        exp.second_order_rank.map(|v| json!(v)),
        red.map(|r| json!(r.second_order_rank)),
    );
    check(
        "point_data_rank_deficient",
        exp.point_data_rank_deficient.map(|v| json!(v)),
        red.and_then(|r| r.point_data.as_ref()).map(|p| json!(p.rank_deficient)),
    );
    check(
        "family_rank",
        exp.family_rank.map(|v| json!(v)),
        red.and_then(|r| r.family.as_ref()).map(|p| json!(p.rank)),
    );
    check(
        "map_case",
        exp.map_case.map(|v| json!(v)),
        rep.characteristics.as_ref().map(|c| json!(MapCaseName::from(c.case))),
    );
    check(
        "weakened_data_accepted",
        exp.weakened_data_accepted.map(|v| json!(v)),
        rep.ucp.as_ref().map(|u| json!(u.status == "completed")),
    );
    check("ucp_zero", exp.ucp_zero.map(|v| json!(v)), rep.ucp.as_ref().map(|u| json!(u.vanishes)));
    check(
        "nullspace_dim",
        exp.nullspace_dim.map(|v| json!(v)),
        rep.nullspace.as_ref().map(|r| {
            if r.result.ambiguous {
                json!("ambiguous")
            } else {
                json!(r.result.dimension)
            }
        }),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> ScalarField {
        ScalarField::parse(s).unwrap()
    }

    #[test]
    fn lame_family_point_data() {
        let fam = ["1", "x", "y", "x^2 - y^2/3"].map(f).to_vec();
        let names: Vec<String> = fam.iter().map(|g| g.to_string()).collect();
        let five = U2PointData::five([0.0; 5]);
        let r = point_data_solve(&fam, &names, (0.0, 0.0), &five, None, 1e-9).unwrap();
        assert_eq!(r.rank, 4);
        assert!(r.coefficients.iter().all(|c| c.abs() < 1e-14));
        let four = U2PointData { uyy: None, ..five };
        assert_eq!(point_data_solve(&fam, &names, (0.0, 0.0), &four, None, 1e-9).unwrap().rank, 4);
        let one = [f("1")];
        let r = point_data_solve(&one, &names[..1], (0.0, 0.0), &five, None, 1e-9).unwrap();
        assert_eq!(r.coefficients, vec![0.0]);
    }

    #[test]
    fn example_a_jet_is_underdetermined() {
        let sys = reduce(&ElasticityCoefficients::constant([100.0, 0.0, 0.0, 2.0, 1.0, 1.0]));
        let (basis, names) = taylor_basis(0.0, 0.0);
        let four = U2PointData {
            u: 0.0,
            ux: 0.0,
            uy: 0.0,
            uxx: Some(0.0),
            uyy: None,
        };
        let r = point_data_solve(&basis, &names, (0.0, 0.0), &four, Some(&sys), 1e-9).unwrap();
        assert_eq!((r.rank, r.rank_deficient), (5, true));
        let five = U2PointData::five([0.0; 5]);
        let r = point_data_solve(&basis, &names, (0.0, 0.0), &five, Some(&sys), 1e-9).unwrap();
        assert_eq!((r.rank, r.rank_deficient), (6, false));
    }

    #[test]
    fn task_closure_adds_prerequisites() {
        let mut sc = Scenario::new("t", ElasticityCoefficients::isotropic(1.0, 1.0), Rect::square(0.0, 0.0, 0.3));
        sc.tasks = vec![Task::Ucp];
        assert_eq!(
            sc.task_closure(),
            vec![Task::Reduce, Task::Characteristics, Task::Riemann, Task::Ucp]
        );
    }
}
