use nalgebra::DMatrix;
use proptest::prelude::*;

use sdemath::coeffs::{cbar, CoeffKey, CoeffStore};
use sdemath::expr::{compile, differentiate, parse, simplify, SymbolTable};
use sdemath::integrals::{ito_general, strat_general, GaussianDraws};
use sdemath::linear::{covariance_df, mat_exp, noise_factor};
use sdemath::operators::SdeModel;
use sdemath::schemes::{simulate_path, Calculus, Order, SchemeConfig};

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("x1".to_string()),
        Just("x2".to_string()),
        Just("t".to_string()),
        (-3.0f64..3.0).prop_map(|c| format!("({c:.4})")),
    ]
}

fn expression() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) + ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) - ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) * ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) / (2 + ({b})^2)")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(0.2*({a}))")),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
            inner.clone().prop_map(|a| format!("-({a})^2")),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.5f64..1.5, 3)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplify_preserves_values(text in expression(), x in point()) {
        let symbols = SymbolTable::new(2);
        let e = parse(&text, &symbols).unwrap();
        prop_assert!(close(e.eval(&x), simplify(&e).eval(&x), 1e-12));
    }

    #[test]
    fn compiled_matches_tree(text in expression(), x in point()) {
        let symbols = SymbolTable::new(2);
        let e = parse(&text, &symbols).unwrap();
        let c = compile(&e, &symbols.order()).unwrap();
        prop_assert!(close(e.eval(&x), c.eval(&x), 1e-12));
    }

    #[test]
    fn printed_form_parses_back(text in expression(), x in point()) {
        let symbols = SymbolTable::new(2);
        let e = parse(&text, &symbols).unwrap();
        let again = parse(&e.display(&symbols).to_string(), &symbols).unwrap();
        prop_assert!(close(e.eval(&x), again.eval(&x), 1e-12));
    }

    #[test]
    fn derivative_is_linear(a in expression(), b in expression(), x in point()) {
        let symbols = SymbolTable::new(2);
        let (ea, eb) = (parse(&a, &symbols).unwrap(), parse(&b, &symbols).unwrap());
        let sum = parse(&format!("({a}) + 2*({b})"), &symbols).unwrap();
        for v in 0..3 {
            let lhs = differentiate(&sum, v).eval(&x);
            let rhs = differentiate(&ea, v).eval(&x) + 2.0 * differentiate(&eb, v).eval(&x);
            prop_assert!(close(lhs, rhs, 1e-10));
        }
    }

    #[test]
    fn derivative_matches_finite_differences(text in expression(), x in point()) {
        let symbols = SymbolTable::new(2);
        let e = parse(&text, &symbols).unwrap();
        let h = 1e-6;
        for v in 0..3 {
            let mut up = x.clone();
            let mut down = x.clone();
            up[v] += h;
            down[v] -= h;
            let fd = (e.eval(&up) - e.eval(&down)) / (2.0 * h);
            let d = differentiate(&e, v).eval(&x);
            let scale = d.abs().max(e.eval(&x).abs()).max(1.0);
            prop_assert!((d - fd).abs() <= 1e-5 * scale, "{text}: {d} vs {fd}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pair_coefficients_are_banded(j1 in 0u16..12, j2 in 0u16..12) {
        let c = cbar(&CoeffKey::new(&[0, 0], &[j1, j2]).unwrap()).unwrap();
        let nonzero = (j1, j2) == (0, 0) || j1.abs_diff(j2) == 1;
        prop_assert_eq!(c != num_rational::BigRational::from_integer(0.into()), nonzero);
    }

    #[test]
    fn distinct_noise_needs_no_correction(seed in any::<u64>(), q in 0usize..4) {
        let store = CoeffStore::in_memory();
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let draws = GaussianDraws::from_values(4, q, (0..4 * (q + 1)).map(|_| next()).collect());
        for w in [&[0u8, 1][..], &[1, 0], &[0, 0, 0], &[0, 0, 0, 0]] {
            let noise: Vec<usize> = (0..w.len()).collect();
            let a = ito_general(w, &noise, &draws, q, 0.3, &store).unwrap();
            let b = strat_general(w, &noise, &draws, q, 0.3, &store).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn exponential_composes(entries in proptest::collection::vec(-2.0f64..2.0, 9), s in 0.05f64..1.0) {
        let a = DMatrix::from_row_slice(3, 3, &entries);
        let half = mat_exp(&a, s / 2.0).unwrap();
        let full = mat_exp(&a, s).unwrap();
        let gap = (&half * &half - &full).amax() / full.amax().max(1.0);
        prop_assert!(gap <= 1e-12, "gap {gap}");
        let back = mat_exp(&a, -s).unwrap();
        let id = DMatrix::<f64>::identity(3, 3);
        prop_assert!((&full * back - id).amax() <= 1e-10 * full.amax().max(1.0));
    }

    #[test]
    fn step_covariance_factors(entries in proptest::collection::vec(-1.0f64..1.0, 9),
                               f in proptest::collection::vec(-1.0f64..1.0, 6),
                               delta in 0.01f64..2.0) {
        let a = DMatrix::from_row_slice(3, 3, &entries) - DMatrix::<f64>::identity(3, 3) * 2.0;
        let f = DMatrix::from_row_slice(3, 2, &f);
        let d = covariance_df(&a, &f, delta).unwrap();
        prop_assert!((&d - d.transpose()).amax() == 0.0);
        let m = noise_factor(&d).unwrap();
        prop_assert!((&m * m.transpose() - &d).amax() <= 1e-10 * d.amax().max(1e-300));
    }
}

#[test]
fn additive_noise_gives_equal_ito_and_stratonovich_paths() {
    let store = CoeffStore::in_memory();
    let model = SdeModel::parse(
        &["-x1 + 0.5*x2", "-2*x2 + sin(t)"],
        &[vec!["0.3", "0.1"], vec!["0", "0.4"]],
        vec![1.0, -1.0],
    )
    .unwrap();
    for order in [Order::One, Order::OneHalf, Order::Two] {
        let run = |calculus| {
            let config = SchemeConfig {
                seed: 5,
                ..SchemeConfig::new(order, calculus, 0.05, 1.0)
            };
            simulate_path(&model, &config, &store).unwrap()
        };
        let (ito, strat) = (run(Calculus::Ito), run(Calculus::Stratonovich));
        for (a, b) in ito.states.iter().zip(&strat.states) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12, "order {order}: {x} vs {y}");
            }
        }
    }
}
