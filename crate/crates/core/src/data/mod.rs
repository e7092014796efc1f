//! Seeded synthetic run-to-failure data: flight classes, fault onset,
//! exponential degradation with heteroscedastic sensor noise, OOD test
//! units, piece-wise linear RUL labels, windowing, standardization, splits,
//! and a bit-exact CSV/JSON dataset format that also ingests externally
//! produced files.

mod bundle;
mod io;
mod scenario;
mod simulate;
mod windows;

pub use bundle::{
    generate_scenario, DatasetBundle, GroundTruth, Manifest, UnitGroundTruth, UnitManifest,
};
pub use io::{load_dataset, manifest_file, q9, save_dataset, DATASET_FORMAT_VERSION};
pub use scenario::{allocate_flight_classes, ScenarioConfig, Split, UnitSpec};
pub use simulate::{
    end_of_life_cycle, rul_labels, simulate_unit, unit_split, SensorModel, UnitTrajectory,
};
pub use windows::{compute_stats, make_windows, split_dev, standardize, StandardizationStats, WindowSet};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, stream_id};

    #[test]
    fn generation_is_a_pure_function_of_config_and_seed() {
        let cfg = ScenarioConfig::tiny();
        let a = generate_scenario(&cfg, 11).unwrap();
        let b = generate_scenario(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(&cfg, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ood_units_exceed_the_training_b_envelope() {
        let cfg = ScenarioConfig::tiny();
        let bundle = generate_scenario(&cfg, 7).unwrap();
        let b_max = cfg.envelope_b_max();
        let ood: Vec<_> = bundle.manifest.units.iter().filter(|u| u.ood_flag).collect();
        assert_eq!(ood.len(), cfg.ood_test_units);
        for u in &ood {
            assert_eq!(u.split, Split::Test);
            assert!(u.b > b_max, "ood unit {} has b {} <= {b_max}", u.unit_id, u.b);
        }
        for u in bundle.manifest.units.iter().filter(|u| !u.ood_flag) {
            assert!(u.b <= b_max * (1.0 + 1e-12));
            assert!(u.a >= cfg.a_range[0] && u.a <= cfg.a_range[1]);
        }
    }

    #[test]
    fn zero_ood_count_keeps_all_test_units_in_envelope() {
        let mut cfg = ScenarioConfig::tiny();
        cfg.ood_test_units = 0;
        let bundle = generate_scenario(&cfg, 7).unwrap();
        assert!(bundle.manifest.units.iter().all(|u| !u.ood_flag));
    }

    #[test]
    fn ground_truth_noise_is_non_decreasing_after_onset() {
        let cfg = ScenarioConfig::tiny();
        let bundle = generate_scenario(&cfg, 19).unwrap();
        let gt = bundle.ground_truth.as_ref().unwrap();
        for unit in &gt.units {
            let m = bundle.manifest.unit(unit.unit_id).unwrap();
            for t in 1..unit.sigma_noise.len() {
                if t as u32 > m.h_s {
                    assert!(
                        unit.sigma_noise[t] >= unit.sigma_noise[t - 1] - 1e-12,
                        "unit {} cycle {t}",
                        unit.unit_id
                    );
                }
            }
            assert!(unit.sigma_noise.iter().all(|s| *s > 0.0));
        }
    }

    #[test]
    fn noiseless_sensors_are_deterministic_in_conditions_and_health() {
        let cfg = ScenarioConfig::tiny();
        let sm = SensorModel::from_seed(3, &cfg);
        let w = vec![0.1, -0.2, 0.4, 0.9];
        let a = sm.mix(&w, -0.5);
        let b = sm.mix(&w, -0.5);
        assert_eq!(a, b);
        let c = sm.mix(&w, -0.6);
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_degradation_is_a_generation_error() {
        let cfg = ScenarioConfig::tiny();
        let spec = UnitSpec {
            unit_id: 9,
            dataset_id: "d1".into(),
            flight_class: 1,
            a: 0.0,
            b: 0.01,
            h_s: 50,
            total_cycles: 400,
            ood_flag: true, // skip the envelope check; a = 0 is the point
            split: Split::Test,
        };
        let sm = SensorModel::from_seed(3, &cfg);
        let err = simulate_unit(&spec, &sm, &cfg, &mut stream(3, stream_id::DATA_UNIT_BASE))
            .unwrap_err()
            .to_string();
        assert!(err.contains("threshold unreachable"), "{err}");
    }

    #[test]
    fn stats_provenance_is_recorded_and_train_only() {
        let cfg = ScenarioConfig::tiny();
        let bundle = generate_scenario(&cfg, 23).unwrap();
        assert_eq!(bundle.stats.provenance, "train-split");
        assert_eq!(bundle.manifest.stats_provenance, "train-split");
        // Recomputing on train+test changes the stats.
        let mut pooled = bundle.split_unchecked(Split::Train).clone();
        pooled.append(bundle.split_unchecked(Split::Test)).unwrap();
        let pooled_stats = compute_stats(&pooled, "pooled").unwrap();
        assert_ne!(pooled_stats.mean, bundle.stats.mean);
    }

    #[test]
    fn split_access_is_counted() {
        let cfg = ScenarioConfig::tiny();
        let bundle = generate_scenario(&cfg, 29).unwrap();
        assert_eq!(bundle.access_count(Split::Test), 0);
        let _ = bundle.split(Split::Train);
        let _ = bundle.split(Split::Train);
        let _ = bundle.split(Split::Valid);
        assert_eq!(bundle.access_count(Split::Train), 2);
        assert_eq!(bundle.access_count(Split::Valid), 1);
        assert_eq!(bundle.access_count(Split::Test), 0);
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::tiny();
        let bundle = generate_scenario(&cfg, 31).unwrap();
        save_dataset(&bundle, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(bundle, loaded);
        assert_eq!(bundle.fingerprint(), loaded.fingerprint());
        // Saving twice is byte-identical.
        let bytes = std::fs::read(dir.path().join("train.csv")).unwrap();
        save_dataset(&loaded, dir.path()).unwrap();
        assert_eq!(bytes, std::fs::read(dir.path().join("train.csv")).unwrap());
    }

    #[test]
    fn manifest_missing_unit_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::tiny();
        let bundle = generate_scenario(&cfg, 37).unwrap();
        save_dataset(&bundle, dir.path()).unwrap();
        let path = manifest_file(dir.path());
        let mut manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        manifest.units.remove(0);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("manifest missing unit"), "{err}");
    }

    #[test]
    fn truncated_window_row_is_a_load_error_with_row_index() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::tiny();
        let bundle = generate_scenario(&cfg, 41).unwrap();
        save_dataset(&bundle, dir.path()).unwrap();
        let path = dir.path().join("valid.csv");
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let truncated = lines[3].rsplit_once(',').unwrap().0;
        lines[3] = truncated;
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("row 4"), "{err}");
    }

    #[test]
    fn window_counts_match_trajectory_lengths() {
        let cfg = ScenarioConfig::tiny();
        let bundle = generate_scenario(&cfg, 43).unwrap();
        let expected_dev: usize = bundle
            .manifest
            .units
            .iter()
            .filter(|u| u.split != Split::Test)
            .map(|u| u.t_end as usize + 1 - cfg.window_length + 1)
            .sum();
        let [train, valid, test] = bundle.window_counts();
        assert_eq!(train + valid, expected_dev);
        assert!(test > 0);
        assert_eq!(bundle.feature_dim(), cfg.feature_dim());
        // Lifetime fraction within [0, 1] and RUL non-negative everywhere.
        for split in [Split::Train, Split::Valid, Split::Test] {
            let ws = bundle.split_unchecked(split);
            assert!(ws
                .lifetime_fraction
                .iter()
                .all(|v| (0.0..=1.0).contains(v)));
            assert!(ws.rul.iter().all(|v| *v >= 0.0));
        }
    }
}
