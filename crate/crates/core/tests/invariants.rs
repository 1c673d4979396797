use proptest::prelude::*;
use weakkam::*;

fn data(g: TorusGrid, coeffs: &[f64]) -> GridFunction64 {
    GridFunction::from_fn(g, |x: &[f64]| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * (std::f64::consts::TAU * (k as f64 + 1.0) * x[0]).sin())
            .sum()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn formula_is_order_preserving(
        a in prop::collection::vec(-0.3f64..0.3, 3),
        bump in prop::collection::vec(0.0f64..0.2, 64),
    ) {
        let m = HamiltonianModel::cosine(2, 1.0, 1.0);
        let g = TorusGrid::line(64).unwrap();
        let bank = DistanceBank::new(&m, g, &[], &SchemeOptions::default()).unwrap();
        let u = data(g, &a);
        let v = GridFunction::from_fn(g, |x: &[f64]| u[g.nearest_node(x)] + bump[g.nearest_node(x)]);
        let fu = profile_formula(&u, &[0, 32], &bank).unwrap();
        let fv = profile_formula(&v, &[0, 32], &bank).unwrap();
        for i in 0..64 {
            prop_assert!(fu[i] <= fv[i]);
        }
    }

    #[test]
    fn direct_profile_commutes_with_constants(
        a in prop::collection::vec(-0.2f64..0.2, 3),
        k in -5.0f64..5.0,
    ) {
        let m = HamiltonianModel::cosine(1, 1.0, 1.0);
        let g = TorusGrid::line(40).unwrap();
        let u = data(g, &a);
        let opts = SchemeOptions::default().with_horizon(6.0);
        let p = profile_direct(&m, &u, &opts).unwrap().field;
        let q = profile_direct(&m, &u.shifted(k), &opts).unwrap().field;
        prop_assert!(p.shifted(k).sup_distance(&q) < 1e-10);
    }

    #[test]
    fn scheme_is_monotone(
        a in prop::collection::vec(-0.3f64..0.3, 3),
        bump in prop::collection::vec(0.0f64..0.1, 32),
    ) {
        let m = HamiltonianModel::cosine(1, 1.0, 1.0);
        let g = TorusGrid::line(32).unwrap();
        let u = data(g, &a);
        let v = GridFunction::from_fn(g, |x: &[f64]| u[g.nearest_node(x)] + bump[g.nearest_node(x)]);
        let opts = SchemeOptions { theta: Some(20.0), ..SchemeOptions::default() };
        let s = Scheme::for_data(&m, &opts, &v).unwrap();
        let (su, sv) = (s.step(&u).unwrap(), s.step(&v).unwrap());
        for i in 0..32 {
            prop_assert!(su[i] <= sv[i] + 1e-14);
        }
    }
}

#[test]
fn single_precision_matches_double() {
    let m32 = HamiltonianModel::<f32>::cosine(1, 1.0, 0.0);
    let m64 = HamiltonianModel::<f64>::cosine(1, 1.0, 0.0);
    let g = TorusGrid::line(50).unwrap();
    let opts = SchemeOptions::default().with_horizon(5.0);
    let z32 = GridFunction::<f32>::zeros(g);
    let z64 = GridFunction::<f64>::zeros(g);
    let c32 = Scheme::for_data(&m32, &opts, &z32).unwrap().ergodic_solve(&z32).unwrap();
    let c64 = Scheme::for_data(&m64, &opts, &z64).unwrap().ergodic_solve(&z64).unwrap();
    assert!((f64::from(c32.c_estimate) - c64.c_estimate).abs() < 1e-3);
    for i in 0..50 {
        assert!((f64::from(c32.w[i]) - c64.w[i]).abs() < 1e-3);
    }
}

#[test]
fn model_spec_round_trip() {
    let spec: ModelSpec = serde_json::from_str(
        r#"{"family":"mechanical","dim":1,"V":[{"k":[1],"cos":1.0,"sin":0.0}],"shift":1.0,
            "diffusion":{"a":[{"k":[0],"cos":0.5,"sin":0.0},{"k":[2],"cos":-0.5,"sin":0.0}]}}"#,
    )
    .unwrap();
    let m = HamiltonianModel::<f64>::from_spec(&spec).unwrap();
    assert!(m.diffusion().is_some());
    let again = HamiltonianModel::<f64>::from_spec(&m.to_spec()).unwrap();
    assert_eq!(m, again);
    assert!(serde_json::from_str::<ModelSpec>(r#"{"family":"mechanical","V":[],"shift":0,"extra":1}"#).is_err());
}
