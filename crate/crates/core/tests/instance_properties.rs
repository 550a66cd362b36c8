use num_rational::Ratio;
use proptest::prelude::*;
use stochmatch::hard::{
    gen_random_matching, gen_random_star, gen_simplegreedy_family, gen_single_offline, gen_stochasticity_gap,
    gen_unknown_patience, poisson_mode_mass, simplegreedy_exact_value, unknown_patience_masses, ArrivalKind,
    PatienceKind, RandomSpec,
};
use stochmatch::instance::{hazard_to_survival, HazardRates, Instance, PatienceModel, StarInstance};

fn patience_kind() -> impl Strategy<Value = PatienceKind> {
    prop_oneof![
        Just(PatienceKind::Deterministic),
        Just(PatienceKind::Survival),
        Just(PatienceKind::Hazard),
    ]
}

fn arrival_kind() -> impl Strategy<Value = ArrivalKind> {
    prop_oneof![
        Just(ArrivalKind::Adversarial),
        Just(ArrivalKind::Prophet),
        Just(ArrivalKind::Iid),
    ]
}

fn spec() -> impl Strategy<Value = RandomSpec> {
    (1usize..6, 1usize..6, patience_kind(), 1u32..4, arrival_kind(), 1usize..8, any::<bool>()).prop_map(
        |(offline, online, patience, max_theta, arrivals, horizon, vertex_weighted)| RandomSpec {
            offline,
            online,
            patience,
            max_theta,
            arrivals,
            horizon,
            vertex_weighted,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn star_json_round_trip(n in 0usize..8, kind in patience_kind(), theta in 1u32..5, seed in any::<u64>()) {
        let inst: Instance = gen_random_star(n, kind, theta, seed).into();
        prop_assert!(inst.validate().is_valid());
        let back = Instance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn matching_json_round_trip(spec in spec(), seed in any::<u64>()) {
        let inst: Instance = gen_random_matching(&spec, seed).unwrap().into();
        prop_assert!(inst.validate().is_valid());
        let back = Instance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn global_hazard_is_geometric_survival(n in 1usize..8, r in 0.0f64..1.0) {
        let star = StarInstance::from_pairs(
            &vec![(1.0, 0.5); n],
            PatienceModel::ConstantHazard { r: HazardRates::Global(r) },
        );
        let order: Vec<usize> = (0..n).collect();
        let q = hazard_to_survival(&star, &order).unwrap();
        for (theta, &qt) in q.iter().enumerate() {
            prop_assert!((qt - (1.0 - r).powi(theta as i32)).abs() <= 1e-12);
        }
    }
}

#[test]
fn hard_generators_validate() {
    let mut all: Vec<Instance> = vec![
        gen_stochasticity_gap(20).unwrap().into(),
        gen_single_offline(30).unwrap().into(),
        gen_simplegreedy_family(2, 4, None).unwrap().instance.into(),
        gen_simplegreedy_family(3, 10, Some(40)).unwrap().instance.into(),
    ];
    for k in 2..=4 {
        all.push(gen_unknown_patience(2, k).unwrap().into());
    }
    for inst in &all {
        let report = inst.validate();
        assert!(report.is_valid(), "{report:?}");
    }
}

#[test]
fn unknown_patience_masses_sum_to_one() {
    for m in 2..=10u64 {
        for k in 2..=6u32 {
            let total: Ratio<i128> = unknown_patience_masses(m, k).unwrap().iter().map(|(_, r)| *r).sum();
            assert_eq!(total, Ratio::from_integer(1), "m = {m}, k = {k}");
        }
    }
}

#[test]
fn simplegreedy_value_approaches_its_limit() {
    for k in 1..=8usize {
        let limit = k as f64 * (1.0 + poisson_mode_mass(k));
        let gaps: Vec<f64> = [100usize, 1_000, 10_000]
            .iter()
            .map(|&n| (limit - simplegreedy_exact_value(k, n).unwrap()).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "k = {k}: {gaps:?}");
        assert!(gaps[2] < 1e-2, "k = {k}: {gaps:?}");
    }
}
