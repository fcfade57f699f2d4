//! Acceptance criteria 1 to 10. Run with `--nocapture` to see one verdict line per criterion.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ucp_core::characteristics::{
    build_map, second_derivative_matrix, transform_system, DirectCoefficients, TransformedSystem, U2PointData,
};
use ucp_core::grid::{Axis, Rect};
use ucp_core::nullspace::{null_space_dimension, NullspaceOptions};
use ucp_core::pipeline::{run, Scenario, Task};
use ucp_core::reduction::reduce;
use ucp_core::riemann::{bessel_series, represent_solution, solve_riemann_on, volterra_ivp, CauchyTraces, CoefficientTable, RiemannProvider};
use ucp_core::scenario_file::load_scenario;
use ucp_core::tensor::{ElasticityCoefficients, TensorValues};
use ucp_core::ScalarField;

fn verdict(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn f(s: &str) -> ScalarField {
    ScalarField::parse(s).unwrap()
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn golden(name: &str) -> Scenario {
    load_scenario(&fs::read_to_string(scenarios().join(name)).unwrap()).unwrap()
}

fn direct(eps: f64, edit: impl FnOnce(&mut DirectCoefficients)) -> TransformedSystem {
    let mut d = DirectCoefficients::laplacian();
    edit(&mut d);
    TransformedSystem::direct(d, eps)
}

fn sci(e: &[f64]) -> String {
    e.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join("/")
}

fn order(e: &[f64]) -> f64 {
    e.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_01_isotropic_discriminant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (mu, lambda) = (rng.random_range(0.1..10.0), rng.random_range(-5.0..10.0));
        let v = ElasticityCoefficients::isotropic(mu, lambda).values_at(0.0, 0.0).unwrap();
        let exact: f64 = (mu + lambda) * (mu + lambda);
        worst = worst.max((v.delta() - exact).abs() / exact.max(1.0));
    }
    verdict(1, worst <= 1e-12, format!("50 pairs, max relative error {worst:.2e} (limit 1e-12)"));
}

#[test]
fn criterion_02_null_space_dimensions() {
    let lame = ElasticityCoefficients::isotropic(1.0, 1.0);
    let mut b221 = lame.clone();
    b221.b[1][1][0] = f("exp(y)");
    let mut xy = lame.clone();
    xy.b[1][1][0] = f("x*y");
    xy.b[1][1][1] = f("x*y^2");
    let mut c22 = lame.clone();
    c22.c[1][1] = f("x*y");
    let cases = [
        ("constant Lame", lame, 4, vec!["1", "x", "y", "x^2 - y^2/3"]),
        ("mu = e^x, lambda = e^y", ElasticityCoefficients::lame(&f("exp(x)"), &f("exp(y)")), 2, vec!["1", "exp(-x)"]),
        ("b221 = e^y", b221, 3, vec!["1", "x - exp(y)/3", "y"]),
        ("b221 = xy, b222 = xy^2", xy, 1, vec![]),
        ("c22 = xy", c22, 0, vec![]),
    ];
    let omega = Rect::square(0.0, 0.0, 0.3);
    let mut pass = true;
    let mut parts = Vec::new();
    let mut worst_proj: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    for (name, c, dim, basis) in cases {
        let r = null_space_dimension(&reduce(&c), &omega, &NullspaceOptions { n: 65, ..Default::default() }).unwrap();
        let ok = r.dimension == dim && !r.ambiguous && r.gap >= 1e3;
        for g in basis {
            worst_proj = worst_proj.max(r.projection_residual(&f(g)).unwrap());
        }
        min_gap = min_gap.min(r.gap);
        pass &= ok;
        parts.push(format!("{name}: {} (want {dim})", r.dimension));
    }
    pass &= worst_proj <= 1e-6;
    verdict(
        2,
        pass,
        format!("{}; min gap {min_gap:.2e}; max basis projection residual {worst_proj:.2e}", parts.join(", ")),
    );
}

#[test]
fn criterion_03_counterexamples_are_degenerate() {
    let mut pass = true;
    let mut parts = Vec::new();
    for file in ["counterexample_a.json", "counterexample_b.json"] {
        let mut sc = golden(file);
        sc.tasks = vec![Task::Conditions, Task::Reduce];
        let r = run(&sc).unwrap();
        let cond = r.conditions.unwrap();
        let pd = r.reduce.unwrap().point_data.unwrap();
        let ok = cond.strongly_elliptic && cond.delta_min.value > 0.0 && pd.rank_deficient;
        pass &= ok;
        parts.push(format!(
            "{}: elliptic {}, delta_min {:.3}, rank {}/{} (deficient {})",
            sc.name, cond.strongly_elliptic, cond.delta_min.value, pd.rank, pd.columns, pd.rank_deficient
        ));
    }
    verdict(3, pass, parts.join("; "));
}

#[test]
fn criterion_04_riemann_solver() {
    let zero = CoefficientTable::build(&direct(0.5, |_| {}), 65).unwrap();
    let t = solve_riemann_on(&zero, (0.125, -0.25), 1e-12).unwrap();
    let mut dev: f64 = 0.0;
    for j in 0..65 {
        for i in 0..65 {
            dev = dev.max((t.get(i, j) - 1.0).abs());
        }
    }
    let bessel = direct(0.5, |d| d.c1 = ScalarField::constant(1.0));
    let errs: Vec<f64> = [65, 129, 257]
        .iter()
        .map(|&n| {
            let ct = CoefficientTable::build(&bessel, n).unwrap();
            let t = solve_riemann_on(&ct, (0.0, 0.0), 1e-13).unwrap();
            let mut e: f64 = 0.0;
            for j in 0..n {
                for i in 0..n {
                    e = e.max((t.get(i, j) - bessel_series(ct.axis.coord(i) * ct.axis.coord(j))).abs());
                }
            }
            e
        })
        .collect();
    let p = order(&errs);
    verdict(
        4,
        dev == 0.0 && errs[2] <= 1e-4 && p >= 1.8,
        format!("|R - 1| = {dev:.1e}; Bessel sup errors {} at n = 65/129/257, order {p:.2}", sci(&errs)),
    );
}

#[test]
fn criterion_05_representation_of_bessel_solution() {
    let n = 257;
    let ct = CoefficientTable::build(&direct(0.5, |d| d.c1 = ScalarField::constant(1.0)), n).unwrap();
    let traces = CauchyTraces::from_w(&ct, |s, t| {
        // ∂s J0(2√(st)) = t · Σ_{k≥1} (−1)^k k (st)^(k−1) / (k!)², likewise for ∂t.
        let z = s * t;
        let mut dz = 0.0;
        let (mut term, mut k) = (1.0f64, 1.0f64);
        loop {
            term *= -z / (k * k);
            let add = if z == 0.0 { if k == 1.0 { -1.0 } else { 0.0 } } else { k * term / z };
            dz += add;
            if add.abs() < 1e-18 || k > 60.0 {
                break;
            }
            k += 1.0;
        }
        (bessel_series(z), t * dz, s * dz)
    });
    let provider = RiemannProvider::new(ct, 1e-12);
    let a = provider.axis();
    // Every 8th node in each direction (33 × 33 targets, one Riemann table each).
    let targets: Vec<(usize, usize)> = (0..n).step_by(8).flat_map(|i| (0..n).step_by(8).map(move |j| (i, j))).collect();
    let w = represent_solution(&provider, 1.0, &traces, &targets).unwrap();
    let err = targets
        .iter()
        .zip(&w)
        .map(|(&(i, j), v)| (v - bessel_series(a.coord(i) * a.coord(j))).abs())
        .fold(0.0, f64::max);
    verdict(5, err <= 1e-4, format!("n = 257, {} targets, sup error {err:.2e} (limit 1e-4)", targets.len()));
}

#[test]
fn criterion_06_volterra_ivp() {
    let solve = |n: usize, kernel: f64, g: &dyn Fn(f64) -> f64| {
        let axis = Axis::new(0.5, n).unwrap();
        let forcing: Vec<f64> = axis.coords().iter().map(|&s| g(s)).collect();
        let u = volterra_ivp(&axis, &vec![1.0; n], &vec![0.0; n], &|_, _| kernel, &forcing, 0.0, 1e-12).unwrap();
        (axis, u)
    };
    let sup_err = |axis: &Axis, u: &[f64], exact: &dyn Fn(f64) -> f64| {
        axis.coords().iter().zip(u).map(|(&s, v)| (v - exact(s)).abs()).fold(0.0, f64::max)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut homog: f64 = 0.0;
    for _ in 0..10 {
        let n = 65;
        let axis = Axis::new(0.5, n).unwrap();
        let lead: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let damp: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let k0 = rng.random_range(-3.0..3.0);
        let u = volterra_ivp(&axis, &lead, &damp, &|a, b| k0 * (1.0 + 0.1 * (a + b) as f64), &vec![0.0; n], 0.0, 1e-12).unwrap();
        homog = homog.max(u.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
    }
    let ns = [65, 129, 257];
    // A = 1, P = 0, K = 0, g = cos s: u = sin s.
    let e_cos: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let (axis, u) = solve(n, 0.0, &|s| s.cos());
            sup_err(&axis, &u, &|s| s.sin())
        })
        .collect();
    // A = 1, P = 0, K = 1, g = 1 + s²/2: u = s. The trapezoid rule integrates this exactly.
    let e_lin: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let (axis, u) = solve(n, 1.0, &|s| 1.0 + s * s / 2.0);
            sup_err(&axis, &u, &|s| s)
        })
        .collect();
    // A = 1, P = 0, K = 1, g = 1: u = sin s, with a nonzero discretisation error.
    let e_mem: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let (axis, u) = solve(n, 1.0, &|_| 1.0);
            sup_err(&axis, &u, &|s| s.sin())
        })
        .collect();
    let (p_cos, p_mem) = (order(&e_cos), order(&e_mem));
    let lin_exact = e_lin.iter().all(|&e| e <= 1e-13);
    let lin_order = if lin_exact { "exact at every n".to_string() } else { format!("order {:.2}", order(&e_lin)) };
    let pass = homog <= 1e-12 && p_cos >= 1.8 && (lin_exact || order(&e_lin) >= 1.8) && p_mem >= 1.8;
    verdict(
        6,
        pass,
        format!(
            "homogeneous sup {homog:.1e}; cos case errors {} order {p_cos:.2}; u = s case errors {} ({lin_order}); memory case order {p_mem:.2}",
            sci(&e_cos),
            sci(&e_lin)
        ),
    );
}

#[test]
fn criterion_07_determinant_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 100 {
        let g = Matrix2::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let d: f64 = g.determinant();
        // Invertible with condition number at most about 20.
        if d.abs() <= 0.1 * g.norm_squared() {
            continue;
        }
        let m = second_derivative_matrix(&g);
        worst = worst.max((m.determinant() - d.powi(3)).abs() / d.abs().powi(3));
        count += 1;
    }
    verdict(7, worst <= 1e-10, format!("100 Jacobians, max relative error {worst:.2e} (limit 1e-10)"));
}

fn random_admissible(rng: &mut ChaCha8Rng) -> TensorValues {
    loop {
        let v = TensorValues {
            a1111: rng.random_range(5.0..20.0),
            a1112: rng.random_range(-2.0..2.0),
            a1122: rng.random_range(-2.0..4.0),
            a1212: rng.random_range(0.5..4.0),
            a1222: rng.random_range(-2.0..2.0),
            a2222: rng.random_range(5.0..20.0),
        };
        if v.ellipticity_at() > 1e-3 && v.delta() > 1e-2 {
            return v;
        }
    }
}

#[test]
fn criterion_08_ellipticity_propagation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let region = Rect::square(0.0, 0.0, 0.3);
    let (mut derived_max, mut transformed_max) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut samples = 0;
    for _ in 0..100 {
        let v = random_admissible(&mut rng);
        derived_max = derived_max.max(v.a1222 * v.a1222 - v.a1212 * v.a2222);
        let sys = reduce(&ElasticityCoefficients::from_values(v));
        let map = build_map(&sys, &region, 0.0, 0.0).unwrap();
        let ts = transform_system(&sys, &map).unwrap();
        for k in 0..25 {
            let (s, t) = (ts.eps * ((k % 5) as f64 / 2.0 - 1.0), ts.eps * ((k / 5) as f64 / 2.0 - 1.0));
            transformed_max = transformed_max.max(ts.coeffs_at(s, t).unwrap().ellipticity());
            samples += 1;
        }
    }
    verdict(
        8,
        derived_max < 0.0 && transformed_max < 0.0,
        format!(
            "100 tensors: max a1222^2 - a1212 a2222 = {derived_max:.3}; max A12^2 - A11 A22 over {samples} samples = {transformed_max:.3}"
        ),
    );
}

#[test]
fn criterion_09_lame_end_to_end() {
    let mut sc = golden("lame_constant.json");
    sc.tasks = vec![Task::Conditions, Task::Reduce, Task::Characteristics, Task::Riemann, Task::Ucp];
    let r = run(&sc).unwrap();
    let u = r.ucp.unwrap();
    let (tr, phi, psi, w) = (
        u.transferred_sup.unwrap().value,
        u.phi_sup.unwrap().value,
        u.psi_sup.unwrap().value,
        u.w_sup.unwrap().value,
    );
    let full = u.status == "completed" && tr <= 1e-12 && phi <= 1e-10 && psi <= 1e-10 && w <= 1e-8;
    let a1222 = sc.coefficients.values_at(sc.point.0, sc.point.1).unwrap().a1222;
    let mut weakened = Vec::new();
    for (uxx, uyy) in [(Some(0.0), None), (None, Some(0.0))] {
        sc.point_data = Some(U2PointData { u: 0.0, ux: 0.0, uy: 0.0, uxx, uyy });
        let r = run(&sc).unwrap();
        let ok = !r.reduce.unwrap().point_data.unwrap().rank_deficient && r.ucp.as_ref().is_some_and(|u| u.status == "completed" && u.vanishes);
        weakened.push(ok);
    }
    verdict(
        9,
        full && a1222 == 0.0 && weakened.iter().all(|&b| b),
        format!(
            "transferred {tr:.1e}, phi {phi:.1e}, psi {psi:.1e}, w {w:.1e} on {} targets; a1222 = {a1222} at the point, four-value variants accepted {weakened:?}",
            u.targets
        ),
    );
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for jobs in ["1", "8"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        let status = Command::new(env!("CARGO_BIN_EXE_ucp"))
            .args(["run", "--scenario"])
            .arg(scenarios())
            .args(["--jobs", jobs, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0), "golden suite with --jobs {jobs}");
        outputs.push(fs::read(out.join("report.json")).unwrap());
    }
    verdict(
        10,
        outputs[0] == outputs[1],
        format!("report.json sizes {} and {} bytes, identical: {}", outputs[0].len(), outputs[1].len(), outputs[0] == outputs[1]),
    );
}
