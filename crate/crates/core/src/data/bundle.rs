use crate::data::io::{q9, DATASET_FORMAT_VERSION};
use crate::data::scenario::{allocate_flight_classes, ScenarioConfig, Split, UnitSpec};
use crate::data::simulate::{simulate_unit, SensorModel};
use crate::data::windows::{compute_stats, make_windows, split_dev, standardize, StandardizationStats, WindowSet};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_id};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitManifest {
    pub unit_id: u32,
    pub dataset_id: String,
    pub flight_class: u8,
    pub h_s: u32,
    pub total_cycles: u32,
    pub t_end: u32,
    pub a: f64,
    pub b: f64,
    pub ood_flag: bool,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    /// Which split produced the standardization stats.
    pub stats_provenance: String,
    pub scenario: ScenarioConfig,
    pub units: Vec<UnitManifest>,
}

impl Manifest {
    pub fn unit(&self, unit_id: u32) -> Option<&UnitManifest> {
        self.units.iter().find(|u| u.unit_id == unit_id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitGroundTruth {
    pub unit_id: u32,
    /// Noise scale per cycle (index = cycle).
    pub sigma_noise: Vec<f64>,
}

/// Generator-side truth retained for oracle tests; absent when ingesting
/// external data.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GroundTruth {
    pub units: Vec<UnitGroundTruth>,
}

impl GroundTruth {
    pub fn sigma_noise(&self, unit_id: u32, cycle: u32) -> Option<f64> {
        self.units
            .iter()
            .find(|u| u.unit_id == unit_id)
            .and_then(|u| u.sigma_noise.get(cycle as usize))
            .copied()
    }
}

/// Standardized train/valid/test windows plus manifest, stats and ground
/// truth. Split access is counted, so tests can assert that training never
/// touched the test split.
#[derive(Debug)]
pub struct DatasetBundle {
    pub manifest: Manifest,
    pub stats: StandardizationStats,
    pub ground_truth: Option<GroundTruth>,
    splits: [WindowSet; 3],
    access: [AtomicU64; 3],
}

impl PartialEq for DatasetBundle {
    fn eq(&self, other: &Self) -> bool {
        self.manifest == other.manifest
            && self.stats == other.stats
            && self.ground_truth == other.ground_truth
            && self.splits == other.splits
    }
}

impl DatasetBundle {
    pub fn from_parts(
        manifest: Manifest,
        stats: StandardizationStats,
        train: WindowSet,
        valid: WindowSet,
        test: WindowSet,
        ground_truth: Option<GroundTruth>,
    ) -> Result<Self> {
        for ws in [&train, &valid, &test] {
            if ws.dim != stats.mean.len() {
                return Err(Error::data(format!(
                    "window dim {} does not match stats dim {}",
                    ws.dim,
                    stats.mean.len()
                )));
            }
        }
        if train.is_empty() {
            return Err(Error::data("train split is empty"));
        }
        Ok(DatasetBundle {
            manifest,
            stats,
            ground_truth,
            splits: [train, valid, test],
            access: [AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0)],
        })
    }

    /// Split view; every call is counted (see [`DatasetBundle::access_count`]).
    pub fn split(&self, split: Split) -> &WindowSet {
        self.access[split.index()].fetch_add(1, Ordering::Relaxed);
        &self.splits[split.index()]
    }

    /// Uncounted view for serialization paths.
    pub(crate) fn split_unchecked(&self, split: Split) -> &WindowSet {
        &self.splits[split.index()]
    }

    pub fn access_count(&self, split: Split) -> u64 {
        self.access[split.index()].load(Ordering::Relaxed)
    }

    pub fn window_counts(&self) -> [usize; 3] {
        [
            self.splits[0].len(),
            self.splits[1].len(),
            self.splits[2].len(),
        ]
    }

    pub fn feature_dim(&self) -> usize {
        self.splits[0].dim
    }

    /// Canonical dataset identity: hash of the manifest serialization.
    /// Checkpoints and reports embed it so cross-dataset comparisons are
    /// refused.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(&self.manifest).expect("manifest serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn build_unit_specs(cfg: &ScenarioConfig, seed: u64) -> Vec<UnitSpec> {
    let n_dev = cfg.train_units;
    let n_test = cfg.test_units;
    let dev_classes = allocate_flight_classes(n_dev, cfg.flight_class_ratios);
    let test_classes = allocate_flight_classes(n_test, cfg.flight_class_ratios);
    let mut specs = Vec::with_capacity(n_dev + n_test);
    for i in 0..n_dev + n_test {
        let unit_id = (i + 1) as u32;
        let mut rng = stream(seed, stream_id::UNIT_SPEC_BASE + unit_id as u64);
        let is_test = i >= n_dev;
        let ood_flag = is_test && i >= n_dev + n_test - cfg.ood_test_units;
        let flight_class = if is_test {
            test_classes[i - n_dev]
        } else {
            dev_classes[i]
        };
        let u: f64 = rng.gen();
        let a = if ood_flag {
            // Extrapolated degradation: a below the envelope, which pushes
            // the rate b above the envelope maximum.
            let base = cfg.a_range[0] / cfg.ood_a_divisor;
            base * (1.0 + 0.1 * u)
        } else {
            cfg.a_range[0] + u * (cfg.a_range[1] - cfg.a_range[0])
        };
        let u: f64 = rng.gen();
        let deg_len = cfg.deg_len_range[0] + u * (cfg.deg_len_range[1] - cfg.deg_len_range[0]);
        let b = (1.0 + cfg.health_threshold / a).ln() / deg_len;
        let u: f64 = rng.gen();
        let hs_frac = cfg.hs_frac_range[0] + u * (cfg.hs_frac_range[1] - cfg.hs_frac_range[0]);
        let h_s = ((cfg.horizon as f64 * hs_frac).round() as u32).max(1);
        specs.push(UnitSpec {
            unit_id,
            dataset_id: format!("d{}", 1 + (i % cfg.n_datasets)),
            flight_class,
            a,
            b,
            h_s,
            total_cycles: cfg.horizon,
            ood_flag,
            split: if is_test { Split::Test } else { Split::Train },
        });
    }
    specs
}

fn quantize_windows(ws: &mut WindowSet) -> Result<()> {
    for v in ws.features.iter_mut() {
        *v = q9(*v)?;
    }
    for v in ws.rul.iter_mut() {
        *v = q9(*v)?;
    }
    for v in ws.lifetime_fraction.iter_mut() {
        *v = q9(*v)?;
    }
    Ok(())
}

/// Builds the full dataset: simulate every unit, window and label, split the
/// development windows, standardize with train-split stats, and quantize
/// everything to the file format's 9 significant digits so save/load
/// round-trips are bit-exact. A pure function of (config, seed).
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<DatasetBundle> {
    cfg.validate()?;
    let sm = SensorModel::from_seed(seed, cfg);
    let specs = build_unit_specs(cfg, seed);

    let dim = cfg.feature_dim();
    let mut dev = WindowSet::empty(dim);
    let mut test = WindowSet::empty(dim);
    let mut units = Vec::with_capacity(specs.len());
    let mut gt = GroundTruth::default();
    for spec in &specs {
        let mut rng = stream(seed, stream_id::DATA_UNIT_BASE + spec.unit_id as u64);
        let traj = simulate_unit(spec, &sm, cfg, &mut rng)?;
        let ws = make_windows(&traj, cfg.window_length, cfg.window_stride, cfg.decimation)?;
        match spec.split {
            Split::Test => test.append(&ws)?,
            _ => dev.append(&ws)?,
        }
        units.push(UnitManifest {
            unit_id: spec.unit_id,
            dataset_id: spec.dataset_id.clone(),
            flight_class: spec.flight_class,
            h_s: spec.h_s,
            total_cycles: spec.total_cycles,
            t_end: traj.t_end,
            a: spec.a,
            b: spec.b,
            ood_flag: spec.ood_flag,
            split: spec.split,
        });
        gt.units.push(UnitGroundTruth {
            unit_id: spec.unit_id,
            sigma_noise: traj
                .sigma_noise
                .iter()
                .map(|v| q9(*v))
                .collect::<Result<_>>()?,
        });
    }

    let mut split_rng = stream(seed, stream_id::DATA_SPLIT);
    let (mut train, mut valid) = split_dev(&dev, cfg.dev_split_ratio, &mut split_rng)?;
    let stats = compute_stats(&train, "train-split")?;
    standardize(&mut train, &stats)?;
    standardize(&mut valid, &stats)?;
    standardize(&mut test, &stats)?;

    let stats = StandardizationStats {
        mean: stats.mean.iter().map(|v| q9(*v)).collect::<Result<_>>()?,
        std: stats.std.iter().map(|v| q9(*v)).collect::<Result<_>>()?,
        provenance: stats.provenance,
    };
    quantize_windows(&mut train)?;
    quantize_windows(&mut valid)?;
    quantize_windows(&mut test)?;

    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        seed,
        stats_provenance: "train-split".to_string(),
        scenario: cfg.clone(),
        units,
    };
    DatasetBundle::from_parts(manifest, stats, train, valid, test, Some(gt))
}
