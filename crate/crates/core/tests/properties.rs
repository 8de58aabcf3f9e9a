use ebm_core::estimators::alpha_from_log_w;
use ebm_core::mcmc::step_log_w;
use ebm_core::train::learning_rate;
use ebm_core::{Activation, EnergyModel, KernelConfig, ModelSpec, ParamVector};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = ModelSpec> {
    (1usize..5, 1usize..9, 1usize..5, 0usize..4, prop::bool::ANY).prop_map(
        |(d, w, depth, raw, tanh)| {
            let period = 1 + raw % depth;
            let act = if tanh {
                Activation::Tanh
            } else {
                Activation::Softplus
            };
            ModelSpec::new(d, w, depth, period, act).unwrap()
        },
    )
}

proptest! {
    #[test]
    fn layout_pack_unpack_round_trips(spec in spec_strategy(), seed in 0u64..1000) {
        let m = EnergyModel::init(spec.clone(), seed).unwrap();
        let layout = spec.layout();
        prop_assert_eq!(layout.pack(&layout.unpack(m.params())), m.params().clone());
    }

    #[test]
    fn weights_of_a_pair_and_its_reverse_sum_to_one(lw in -700.0f64..700.0) {
        prop_assert!((alpha_from_log_w(lw) + alpha_from_log_w(-lw) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn step_log_w_is_antisymmetric(
        seed in 0u64..200,
        a in prop::collection::vec(-2.0f64..2.0, 2),
        b in prop::collection::vec(-2.0f64..2.0, 2),
        step in 0.01f64..1.0,
    ) {
        let m = EnergyModel::init(ModelSpec::new(2, 6, 2, 2, Activation::Softplus).unwrap(), seed).unwrap();
        for kernel in [KernelConfig::langevin(step).unwrap(), KernelConfig::gaussian_rw(step).unwrap()] {
            let fwd = step_log_w(&kernel, &m, &a, &b).unwrap();
            let rev = step_log_w(&kernel, &m, &b, &a).unwrap();
            prop_assert!((fwd + rev).abs() <= 1e-9 * fwd.abs().max(1.0));
        }
    }

    #[test]
    fn schedule_stays_between_endpoints(t in 0usize..=1000, lo_exp in -6i32..-1) {
        let end = 10f64.powi(lo_exp);
        let lr = learning_rate(t, 1000, 1e-1, end);
        prop_assert!(lr <= 1e-1 && lr >= end);
    }

    #[test]
    fn params_survive_a_vector_round_trip(v in prop::collection::vec(-1e3f64..1e3, 0..40)) {
        let p = ParamVector::from(v.clone());
        prop_assert_eq!(p.into_inner(), v);
    }
}
