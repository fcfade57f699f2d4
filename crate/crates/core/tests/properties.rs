use nalgebra::{Matrix2, Matrix3, Vector3};
use proptest::prelude::*;

use ucp_core::characteristics::{build_map, second_derivative_matrix, transform_system};
use ucp_core::grid::Rect;
use ucp_core::reduction::{apply, reduce};
use ucp_core::tensor::{ElasticityCoefficients, TensorValues};
use ucp_core::ScalarField;

fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        (-3.0f64..3.0).prop_map(|c| format!("({c:.3})")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(0.3 * {a})")),
            inner.prop_map(|a| format!("({a})^2")),
        ]
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn tensor_values(a: [f64; 6]) -> TensorValues {
    TensorValues {
        a1111: a[0],
        a1112: a[1],
        a1122: a[2],
        a1212: a[3],
        a1222: a[4],
        a2222: a[5],
    }
}

fn tensor() -> impl Strategy<Value = TensorValues> {
    proptest::array::uniform6(-3.0f64..3.0).prop_map(tensor_values)
}

/// Constant tensors that are strongly elliptic with `Δ > 0` by a clear margin.
fn admissible_tensor() -> impl Strategy<Value = TensorValues> {
    (
        5.0f64..20.0,
        -2.0f64..2.0,
        -2.0f64..4.0,
        0.5f64..4.0,
        -2.0f64..2.0,
        5.0f64..20.0,
    )
        .prop_map(|(a, b, c, d, e, f)| tensor_values([a, b, c, d, e, f]))
        .prop_filter("strongly elliptic and hyperbolic", |v| {
            v.ellipticity_at() > 1e-3 && v.delta() > 1e-2 && (v.a1112.abs() > 1e-2 || v.a1222.abs() > 1e-2)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_expressions_parse_back(text in expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let f = ScalarField::parse(&text).unwrap();
        for g in [f.clone(), f.dx(), f.dy().dx()] {
            let back = ScalarField::parse(&g.to_string()).unwrap();
            prop_assert!(close(back.eval(x, y).unwrap(), g.eval(x, y).unwrap(), 1e-12));
        }
    }

    #[test]
    fn derivative_matches_central_difference(text in expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let f = ScalarField::parse(&text).unwrap();
        let h = 1e-5;
        let fdx = (f.eval(x + h, y).unwrap() - f.eval(x - h, y).unwrap()) / (2.0 * h);
        let fdy = (f.eval(x, y + h).unwrap() - f.eval(x, y - h).unwrap()) / (2.0 * h);
        let scale = 1.0 + f.eval(x, y).unwrap().abs();
        prop_assert!((f.dx().eval(x, y).unwrap() - fdx).abs() <= 1e-5 * scale.max(fdx.abs()));
        prop_assert!((f.dy().eval(x, y).unwrap() - fdy).abs() <= 1e-5 * scale.max(fdy.abs()));
    }

    #[test]
    fn derivative_is_linear(a in expr(), b in expr(), p in -2.0f64..2.0, q in -2.0f64..2.0,
                            x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let (f, g) = (ScalarField::parse(&a).unwrap(), ScalarField::parse(&b).unwrap());
        let comb = f.scale(p).add(&g.scale(q));
        let lhs = comb.dx().eval(x, y).unwrap();
        let rhs = p * f.dx().eval(x, y).unwrap() + q * g.dx().eval(x, y).unwrap();
        prop_assert!(close(lhs, rhs, 1e-10));
    }

    #[test]
    fn mixed_partials_commute(text in expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let f = ScalarField::parse(&text).unwrap();
        prop_assert!(close(f.dx().dy().eval(x, y).unwrap(), f.dy().dx().eval(x, y).unwrap(), 1e-10));
    }

    #[test]
    fn convexity_implies_ellipticity(v in tensor()) {
        if v.voigt_min_eig() > 1e-9 {
            prop_assert!(v.ellipticity_at() > 0.0);
        }
    }

    #[test]
    fn ellipticity_implies_derived_sign(v in tensor()) {
        if v.ellipticity_at() > 1e-9 {
            prop_assert!(v.a1222 * v.a1222 - v.a1212 * v.a2222 < 0.0);
        }
    }

    #[test]
    fn delta_is_invariant_under_relabelling(v in tensor()) {
        let w = TensorValues { a1111: v.a2222, a2222: v.a1111, a1112: v.a1222, a1222: v.a1112, ..v };
        prop_assert_eq!(v.delta(), w.delta());
    }

    #[test]
    fn voigt_minimum_bounds_sampled_energy(v in tensor(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let lmin = v.voigt_min_eig();
        let mut best = f64::INFINITY;
        for _ in 0..10_000 {
            let (e11, e12, e22) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let norm = e11 * e11 + 2.0 * e12 * e12 + e22 * e22;
            best = best.min(v.energy(e11, e12, e22) / norm);
        }
        prop_assert!(best >= lmin - 1e-8 * (1.0 + lmin.abs()));
        // The minimiser itself attains the eigenvalue.
        let eig = v.voigt().symmetric_eigen();
        let k = eig.eigenvalues.imin();
        let z = eig.eigenvectors.column(k);
        let e = (z[0], z[2] / 2f64.sqrt(), z[1]);
        let q = v.energy(e.0, e.1, e.2) / (e.0 * e.0 + 2.0 * e.1 * e.1 + e.2 * e.2);
        prop_assert!((q - lmin).abs() <= 1e-8 * (1.0 + lmin.abs()));
    }

    #[test]
    fn operator_application_is_linear(op in proptest::array::uniform6(-5.0f64..5.0),
                                      j1 in proptest::array::uniform6(-5.0f64..5.0),
                                      j2 in proptest::array::uniform6(-5.0f64..5.0),
                                      a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let j: [f64; 6] = std::array::from_fn(|k| a * j1[k] + b * j2[k]);
        prop_assert!(close(apply(&op, &j), a * apply(&op, &j1) + b * apply(&op, &j2), 1e-12));
    }

    #[test]
    fn second_derivative_determinant(g in proptest::array::uniform4(-2.0f64..2.0)) {
        let g = Matrix2::new(g[0], g[1], g[2], g[3]);
        let d = g.determinant();
        prop_assume!(d.abs() > 0.1 * g.norm_squared());
        let m: Matrix3<f64> = second_derivative_matrix(&g);
        prop_assert!((m.determinant() - d.powi(3)).abs() <= 1e-10 * d.abs().powi(3));
    }

    #[test]
    fn second_derivative_round_trip(g in proptest::array::uniform4(-2.0f64..2.0),
                                    w in proptest::array::uniform3(-2.0f64..2.0)) {
        let g = Matrix2::new(g[0], g[1], g[2], g[3]);
        prop_assume!(g.determinant().abs() > 1e-2);
        let m = second_derivative_matrix(&g);
        let w = Vector3::new(w[0], w[1], w[2]);
        let back = m.lu().solve(&(m * w)).unwrap();
        prop_assert!((back - w).amax() <= 1e-10 * (1.0 + w.amax()) / g.determinant().abs().powi(3).min(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_keeps_ellipticity(v in admissible_tensor()) {
        let c = ElasticityCoefficients::from_values(v);
        let sys = reduce(&c);
        let region = Rect::square(0.0, 0.0, 0.3);
        let map = build_map(&sys, &region, 0.0, 0.0).unwrap();
        let ts = transform_system(&sys, &map).unwrap();
        for k in 0..25 {
            let (s, t) = (ts.eps * ((k % 5) as f64 / 2.0 - 1.0), ts.eps * ((k / 5) as f64 / 2.0 - 1.0));
            let tv = ts.coeffs_at(s, t).unwrap();
            prop_assert!(tv.ellipticity() < 0.0);
        }
    }
}
