use ucp_core::characteristics::{build_map, transfer_point_data, transform_system, U2PointData};
use ucp_core::grid::Rect;
use ucp_core::pipeline::{run, Scenario, Status, Task};
use ucp_core::reduction::{jet_at, jet_fields, reduce, residual};
use ucp_core::riemann::{represent_solution, solve_traces, CoefficientTable, RiemannProvider};
use ucp_core::tensor::ElasticityCoefficients;
use ucp_core::ScalarField;

fn f(s: &str) -> ScalarField {
    ScalarField::parse(s).unwrap()
}

/// Constant tensor with distinct characteristic families and zeroth-order terms chosen so
/// that `exp(x + y/2)` solves both reduced equations.
fn mapped_exponential() -> (ElasticityCoefficients, ScalarField) {
    let mut c = ElasticityCoefficients::constant([100.0, 2.0, 4.0, 2.0, 3.0, 100.0]);
    c.c[0][1] = ScalarField::constant(-5.75);
    c.c[1][1] = ScalarField::constant(-30.0);
    (c, f("exp(x + y/2)"))
}

#[test]
fn manufactured_solution_is_recovered_through_the_map() {
    let (coeffs, u) = mapped_exponential();
    let sys = reduce(&coeffs);
    let region = Rect::square(0.0, 0.0, 0.3);
    let (rh, re) = residual(&sys, &u, &region, 9).unwrap();
    assert!(rh.max(re) < 1e-12);
    let map = build_map(&sys, &region, 0.0, 0.0).unwrap();
    let tsys = transform_system(&sys, &map).unwrap();
    let j = jet_at(&jet_fields(&u), 0.0, 0.0).unwrap();
    let data = U2PointData::five([j[0], j[1], j[2], j[3], j[5]]);
    let wdata = transfer_point_data(&sys, &map, &data).unwrap();
    assert!((wdata.uxy - j[4]).abs() < 1e-12);
    let n = 65;
    let provider = RiemannProvider::new(CoefficientTable::build(&tsys, n).unwrap(), 1e-12);
    assert!(provider.ct.at(3, 7).c1 != 0.0);
    let solved = solve_traces(&provider, &wdata, 1e-12).unwrap();
    let a = provider.axis();
    let targets: Vec<(usize, usize)> =
        (0..n).step_by(8).flat_map(|i| (0..n).step_by(8).map(move |k| (i, k))).collect();
    let w = represent_solution(&provider, wdata.w, &solved.traces, &targets).unwrap();
    let mut err: f64 = 0.0;
    for (&(i, k), v) in targets.iter().zip(&w) {
        let (x, y) = map.inverse(a.coord(i), a.coord(k)).unwrap();
        err = err.max((v - u.eval(x, y).unwrap()).abs());
    }
    assert!(err < 1e-4, "{err}");
}

#[test]
fn zero_data_through_the_map_vanishes() {
    let (coeffs, _) = mapped_exponential();
    let mut sc = Scenario::new("mapped", coeffs, Rect::square(0.0, 0.0, 0.3));
    sc.tasks = vec![Task::Ucp];
    sc.point_data = Some(U2PointData::five([0.0; 5]));
    let r = run(&sc).unwrap();
    let ucp = r.ucp.unwrap();
    assert!(ucp.vanishes);
    assert!(r.riemann.unwrap().max_iterations > 1);
}

#[test]
fn weakened_data_for_constant_lame() {
    let mut sc = Scenario::new("lame", ElasticityCoefficients::isotropic(1.0, 1.0), Rect::square(0.0, 0.0, 0.3));
    sc.tasks = vec![Task::Reduce, Task::Ucp];
    for (uxx, uyy) in [(Some(0.0), None), (None, Some(0.0))] {
        sc.point_data = Some(U2PointData { u: 0.0, ux: 0.0, uy: 0.0, uxx, uyy });
        let r = run(&sc).unwrap();
        let ucp = r.ucp.as_ref().unwrap();
        assert_eq!(ucp.status, "completed");
        assert!(ucp.vanishes);
        assert!(!r.reduce.unwrap().point_data.unwrap().rank_deficient);
    }
}

#[test]
fn negative_discriminant_is_a_precondition_failure() {
    let c = ElasticityCoefficients::constant([10.0, 1.0, 0.0, 1.0, 1.0, 10.0]);
    let mut sc = Scenario::new("bad", c, Rect::square(0.0, 0.0, 0.3));
    sc.tasks = vec![Task::Characteristics];
    let e = run(&sc).unwrap_err();
    assert!(e.is_precondition());
    assert!(e.to_string().contains("hyperbolicity"), "{e}");
    assert!(e.to_string().contains("characteristics"), "{e}");
}

#[test]
fn expectation_mismatch_fails_verdict() {
    let mut sc = Scenario::new("lame", ElasticityCoefficients::isotropic(1.0, 1.0), Rect::square(0.0, 0.0, 0.3));
    sc.tasks = vec![Task::Conditions];
    sc.expect.hyperbolic = Some(false);
    sc.expect.nullspace_dim = Some(4);
    let r = run(&sc).unwrap();
    assert_eq!(r.verdict, Status::Fail);
    assert_eq!(r.expectations[0].status, Status::Fail);
    assert_eq!(r.expectations[1].status, Status::Skipped);
}
