use std::f64::consts::PI;

use pinn_ntk::config::{ExperimentConfig, PRESETS};
use pinn_ntk::network::{
    forward_jet, forward_value, init_normal, Jet2, MlpArchitecture, ParameterSet,
};
use pinn_ntk::optim::{format_schedule, parse_schedule};
use pinn_ntk::pde::{apply_operator, BvpSpec, CoefficientField};
use pinn_ntk::spectral::{dft_half, dft_magnitude};
use pinn_ntk::Activation;
use proptest::prelude::*;

fn arch_strategy() -> impl Strategy<Value = MlpArchitecture> {
    (prop::collection::vec(1usize..12, 1..4), any::<bool>()).prop_map(|(w, tanh)| {
        MlpArchitecture::new(
            w,
            if tanh {
                Activation::Tanh
            } else {
                Activation::Logistic
            },
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flatten_round_trips(arch in arch_strategy(), seed in any::<u64>(), scale in 0.1f64..3.0) {
        let p = init_normal(&arch, seed);
        prop_assert_eq!(ParameterSet::unflatten(&arch, &p.flatten()).unwrap(), p.clone());
        let v: Vec<f64> = p.flatten().iter().map(|x| x * scale).collect();
        prop_assert_eq!(ParameterSet::unflatten(&arch, &v).unwrap().flatten(), v);
        prop_assert_eq!(p.flatten().len(), arch.num_params());
    }

    #[test]
    fn jet_value_matches_plain_forward(arch in arch_strategy(), seed in any::<u64>(), x in -PI..PI) {
        let p = init_normal(&arch, seed);
        let v = forward_value(&p, &arch, x).unwrap();
        let j = forward_jet(&p, &arch, x).unwrap();
        prop_assert!((j.v - v).abs() <= 1e-12 * (1.0 + v.abs()));
    }

    #[test]
    fn operator_is_linear_in_the_jet(
        a in prop::array::uniform3(-5.0f64..5.0),
        b in prop::array::uniform3(-5.0f64..5.0),
        (alpha, beta) in (-3.0f64..3.0, -3.0f64..3.0),
        x in -PI..PI,
        k in 2u32..60,
    ) {
        let eps = 1.0 / k as f64;
        let spec = BvpSpec::darcy((-PI, PI), eps, CoefficientField::one_periodic(), pinn_ntk::pde::Forcing::Zero, (0.0, 0.0)).unwrap();
        let (j1, j2) = (Jet2::new(a[0], a[1], a[2]), Jet2::new(b[0], b[1], b[2]));
        let lhs = apply_operator(&spec, j1.scale(alpha) + j2.scale(beta), x).unwrap();
        let rhs = alpha * apply_operator(&spec, j1, x).unwrap() + beta * apply_operator(&spec, j2, x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        prop_assert_eq!(apply_operator(&spec, Jet2::constant(a[0]), x).unwrap(), 0.0);
    }

    #[test]
    fn parseval_holds(samples in prop::collection::vec(-10.0f64..10.0, 2..200)) {
        let s = dft_magnitude(&samples, 0).unwrap();
        let ms = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
        prop_assert!((s.mean_square() - ms).abs() <= 1e-10 * ms.max(1e-300));
        prop_assert_eq!(s.magnitudes.len(), samples.len() / 2 + 1);
    }

    #[test]
    fn dft_is_linear(
        pair in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..64),
    ) {
        let a: Vec<f64> = pair.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pair.iter().map(|p| p.1).collect();
        let sum: Vec<f64> = pair.iter().map(|p| p.0 + p.1).collect();
        let (fa, fb, fs) = (dft_half(&a), dft_half(&b), dft_half(&sum));
        for k in 0..fs.len() {
            prop_assert!((fs[k].0 - fa[k].0 - fb[k].0).abs() < 1e-9);
            prop_assert!((fs[k].1 - fa[k].1 - fb[k].1).abs() < 1e-9);
        }
    }

    #[test]
    fn coefficient_is_periodic_and_bounded(y in -50.0f64..50.0) {
        let c = CoefficientField::one_periodic();
        prop_assert!((c.a(y + 1.0) - c.a(y)).abs() <= 1e-12 * c.a(y));
        prop_assert!(c.a(y) >= c.a_min() * (1.0 - 1e-12) && c.a(y) <= c.a_max() * (1.0 + 1e-12));
    }

    #[test]
    fn schedule_text_round_trips(
        stages in prop::collection::vec((0usize..3, 0usize..100_000, -8i32..0), 0..6),
    ) {
        let text = stages
            .iter()
            .map(|(k, n, e)| match k {
                0 => format!("adam:{n}:1e{e}"),
                1 => format!("gd:{n}:2.5e{e}"),
                _ => format!("lbfgs:{n}"),
            })
            .collect::<Vec<_>>()
            .join(",");
        let parsed = parse_schedule(&text).unwrap();
        prop_assert_eq!(parse_schedule(&format_schedule(&parsed)).unwrap(), parsed);
    }
}

#[test]
fn config_text_round_trips_with_overrides() {
    for name in PRESETS {
        let mut c = ExperimentConfig::preset(name).unwrap();
        c.seed = 1234567;
        c.epsilons = vec![1.0 / 3.0, 1.0 / 7.0];
        c.lambda_b = 0.1 + 0.2;
        let text = c.to_text();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(back, c, "{name}");
        assert_eq!(back.to_text(), text);
    }
}
