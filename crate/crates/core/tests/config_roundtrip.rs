use covdetect::experiment::{Detector, ExperimentConfig, SweepConfig};
use covdetect::sysmodel::DelayLaw;
use covdetect::SystemConfig;
use proptest::prelude::*;

fn arb_system() -> impl Strategy<Value = SystemConfig> {
    (
        (1usize..300, 0usize..6, 1usize..200, 1usize..512),
        (-10.0f64..50.0, 1e-3f64..10.0, 0.0f64..1.0, 0u64..=i64::MAX as u64),
        (prop_oneof![Just(DelayLaw::Uniform), (0usize..6).prop_map(DelayLaw::Fixed)], any::<bool>(), 1usize..50),
    )
        .prop_map(|((n, tau, l, m), (tx, dist, t, seed), (law, shuffle, refresh))| SystemConfig {
            num_devices: n,
            num_active: n / 2,
            preamble_len: l,
            max_delay: tau,
            num_antennas: m,
            tx_power_dbm: tx,
            cell_distance_km: dist,
            threshold_cd: t,
            rng_seed: seed,
            delay_law: law,
            shuffle_coordinates: shuffle,
            refresh_interval: refresh,
            ..SystemConfig::desk_scale()
        })
}

proptest! {
    #[test]
    fn system_config_survives_toml(cfg in arb_system()) {
        let text = cfg.to_toml_string();
        prop_assert_eq!(SystemConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn experiment_config_survives_toml(
        system in arb_system(),
        detectors in prop::sample::subsequence(Detector::ALL.to_vec(), 1..=3),
        antennas in prop::collection::vec(1usize..256, 1..8),
        trials in 1usize..5000,
    ) {
        let exp = ExperimentConfig { system, sweep: SweepConfig { detectors, antennas, trials } };
        prop_assert_eq!(ExperimentConfig::from_toml_str(&exp.to_toml_string()).unwrap(), exp);
    }
}

#[test]
fn optional_keys_take_defaults() {
    let mut text = SystemConfig::desk_scale().to_toml_string();
    text = text
        .lines()
        .filter(|l| !["delay_law", "max_sweeps", "refresh_interval", "shuffle", "allow_no"].iter().any(|k| l.starts_with(k)))
        .collect::<Vec<_>>()
        .join("\n");
    assert_eq!(SystemConfig::from_toml_str(&text).unwrap(), SystemConfig::desk_scale());
}

#[test]
fn unknown_and_missing_keys_are_errors() {
    let text = SystemConfig::desk_scale().to_toml_string();
    assert!(SystemConfig::from_toml_str(&format!("{text}\nnum_antenas = 4\n")).is_err());
    let without_seed: String = text.lines().filter(|l| !l.starts_with("rng_seed")).map(|l| format!("{l}\n")).collect();
    assert!(SystemConfig::from_toml_str(&without_seed).is_err());
    let exp = ExperimentConfig::desk_scale().to_toml_string();
    assert!(ExperimentConfig::from_toml_str(&exp.replace("[sweep]", "[sweeps]")).is_err());
}

#[test]
fn sweep_table_may_be_omitted() {
    let text = format!("[system]\n{}", SystemConfig::desk_scale().to_toml_string());
    let exp = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(exp, ExperimentConfig::desk_scale());
}
