use physimage::encoders::{
    from_image, gadf, gadf_raw, gasf, gasf_raw, mtf, quantile_states, quantized, rp_binary, rp_continuous, to_image,
    transition_matrix, SquareMatrix,
};
use proptest::prelude::*;

fn window() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 2..64)
}

fn in_unit(m: &SquareMatrix<f64>) -> bool {
    m.as_slice().iter().all(|v| (0.0..=1.0).contains(v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rp_symmetric_with_fixed_diagonal(x in window(), th in 0.01f64..1.0) {
        let c = rp_continuous(&x);
        let b = rp_binary(&x, th);
        let n = x.len();
        for i in 0..n {
            prop_assert_eq!(c.get(i, i), 0.0);
            prop_assert_eq!(b.get(i, i), 1.0);
            for j in 0..n {
                prop_assert_eq!(c.get(i, j), c.get(j, i));
                prop_assert_eq!(b.get(i, j), b.get(j, i));
            }
        }
        prop_assert!(in_unit(&c) && in_unit(&b));
    }

    #[test]
    fn gaf_symmetry_and_diagonals(x in window()) {
        let s = gasf_raw(&x).unwrap();
        let d = gadf_raw(&x).unwrap();
        let n = x.len();
        for i in 0..n {
            let phi = x[i].acos();
            prop_assert!((s.get(i, i) - (2.0 * phi).cos()).abs() < 1e-12);
            prop_assert!(d.get(i, i).abs() < 1e-12);
            for j in 0..n {
                prop_assert!((s.get(i, j) - s.get(j, i)).abs() < 1e-12);
                prop_assert!((d.get(i, j) + d.get(j, i)).abs() < 1e-12);
                // direct trigonometric definition
                let (pi, pj) = (x[i].acos(), x[j].acos());
                prop_assert!((s.get(i, j) - (pi + pj).cos()).abs() < 1e-9);
                prop_assert!((d.get(i, j) - (pi - pj).sin()).abs() < 1e-9);
            }
        }
        prop_assert!(in_unit(&gasf(&x).unwrap()) && in_unit(&gadf(&x).unwrap()));
    }

    #[test]
    fn mtf_rows_are_stochastic(x in window(), q in 1usize..130) {
        let states = quantile_states(&x, q);
        prop_assert!(states.n_states >= 1 && states.n_states <= q.max(1));
        prop_assert!(states.states.iter().all(|&s| s < states.n_states));
        let w = transition_matrix::<f64>(&states);
        for row in w.chunks(states.n_states) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(in_unit(&mtf(&x, q).unwrap()));
    }

    #[test]
    fn quantile_states_are_monotone(x in window(), q in 1usize..20) {
        let s = quantile_states(&x, q).states;
        for i in 0..x.len() {
            for j in 0..x.len() {
                if x[i] < x[j] {
                    prop_assert!(s[i] <= s[j]);
                }
            }
        }
    }

    #[test]
    fn image_round_trip_within_half_step(x in window()) {
        let m = gasf(&x).unwrap();
        let back: SquareMatrix<f64> = from_image(&to_image(&m)).unwrap();
        prop_assert!(m.max_abs_diff(&back) <= 1.0 / 510.0 + 1e-12);
        prop_assert_eq!(back, quantized(&m));
    }
}
