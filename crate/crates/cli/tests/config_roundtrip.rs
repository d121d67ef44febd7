use ocp_cli::config::RunConfig;
use ocp_core::environments::{ExponentParams, IidParams, ShiftParams};
use ocp_core::{EnvSpec, Variant};
use proptest::prelude::*;

fn env_spec() -> impl Strategy<Value = EnvSpec> {
    prop_oneof![
        (2usize..500, 0.1f64..5.0).prop_map(|(labels, a)| EnvSpec::Iid(IidParams { labels, beta_a: a, ..IidParams::default() })),
        (2usize..500, 1usize..5000)
            .prop_map(|(labels, phase_length)| EnvSpec::Exponent(ExponentParams { labels, phase_length, ..ExponentParams::default() })),
        (2usize..500).prop_map(|labels| EnvSpec::Shift(ShiftParams { labels, ..ShiftParams::default() })),
    ]
}

proptest! {
    #[test]
    fn parse_serialize_parse_is_identity(
        alg in 0usize..4,
        k in 2usize..400,
        horizon in 1usize..100_000,
        alpha in 0.001f64..0.499,
        c in 0.01f64..500.0,
        rho in 0.0f64..2.0,
        delta in 0.001f64..0.999,
        seed in any::<u32>(),
        seeds in 1usize..100,
        gamma in proptest::option::of(0.0f64..0.999),
        env in env_spec(),
    ) {
        let config = RunConfig {
            algorithm: Variant::ALL[alg],
            k,
            horizon,
            alpha,
            c,
            rho,
            delta,
            seed: seed as u64,
            seeds,
            gamma_override: gamma,
            out: "runs/x".into(),
            env,
        };
        let once = RunConfig::parse(&config.to_canonical()).unwrap();
        prop_assert_eq!(&once, &config);
        let twice = RunConfig::parse(&once.to_canonical()).unwrap();
        prop_assert_eq!(&twice, &once);
        prop_assert_eq!(twice.digest(), config.digest());
    }
}
