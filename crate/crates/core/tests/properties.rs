use proptest::prelude::*;

use tailconc::cli::{format_real, parse_model_spec};
use tailconc::monte_carlo::empirical_quantile;
use tailconc::second_order::{c2, h_kernel, AForm};
use tailconc::LossModel;

fn model() -> impl Strategy<Value = LossModel> {
    prop_oneof![
        (0.1..3.0f64).prop_map(|xi| LossModel::pareto(xi).unwrap()),
        (0.3..4.0f64, 0.3..8.0f64).prop_map(|(tau, kappa)| LossModel::burr(tau, kappa).unwrap()),
        (-1.0..1.0f64, 0.5..2.0f64, 0.1..3.0f64, 0.05..0.9f64)
            .prop_map(|(a, b, g, h)| LossModel::gandh(a, b, g, h).unwrap()),
    ]
}

proptest! {
    #[test]
    fn quantile_inverts_tail(m in model(), lp in -12.0..-0.5f64) {
        let p = 10f64.powf(lp);
        let x = m.tail_quantile(p).unwrap();
        let back = m.tail(x).unwrap();
        prop_assert!((back / p - 1.0).abs() < 1e-8, "p={p} back={back}");
    }

    #[test]
    fn quantile_is_increasing(m in model(), a in 0.01..0.98f64, d in 1e-4..0.01f64) {
        prop_assert!(m.quantile(a).unwrap() < m.quantile(a + d).unwrap());
    }

    #[test]
    fn c2_splits_into_c1_and_correction(m in model(), lp in -6.0..-1.0f64, n in 2u32..6) {
        let alpha = 1.0 - 10f64.powf(lp);
        let r = c2(&m, alpha, n, None, AForm::default_for(&m)).unwrap();
        prop_assert!((r.c2 - (r.c1 + r.correction)).abs() <= 1e-12 * r.c2.abs().max(1.0));
    }

    #[test]
    fn h_kernel_nonnegative_above_one(xi in 0.1..3.0f64, rho in -5.0..0.0f64, s in 1.0..1e6f64) {
        prop_assert!(h_kernel(xi, rho, s).unwrap() >= 0.0);
    }

    #[test]
    fn empirical_quantile_matches_sorting(
        mut v in prop::collection::vec(-1e6..1e6f64, 1..400),
        a in 0.001..0.999f64,
    ) {
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = ((a * v.len() as f64).ceil() as usize).clamp(1, v.len());
        prop_assert_eq!(empirical_quantile(&mut v, a).unwrap(), sorted[rank - 1]);
    }

    #[test]
    fn real_formatting_round_trips(v in prop::num::f64::NORMAL) {
        let text = format_real(v);
        prop_assert!(!text.contains('e'));
        prop_assert_eq!(text.parse::<f64>().unwrap(), v);
    }

    #[test]
    fn model_json_round_trips(m in model()) {
        prop_assert_eq!(parse_model_spec(&m.to_json()).unwrap(), m);
    }
}
