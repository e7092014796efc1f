use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn index(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!(
                "unknown split `{other}` (expected train, valid or test)"
            ))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One simulated engine unit and its degradation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSpec {
    pub unit_id: u32,
    pub dataset_id: String,
    /// 1 = short, 2 = medium, 3 = long haul.
    pub flight_class: u8,
    /// Degradation magnitude and rate of `-a (e^{b t'} - 1)`.
    pub a: f64,
    pub b: f64,
    /// Fault-onset cycle.
    pub h_s: u32,
    /// Simulation horizon (end of life must arrive before this).
    pub total_cycles: u32,
    pub ood_flag: bool,
    pub split: Split,
}

impl UnitSpec {
    pub fn validate(&self, cfg: &ScenarioConfig) -> Result<()> {
        if self.h_s == 0 || self.h_s >= self.total_cycles {
            return Err(Error::config(format!(
                "unit {}: h_s {} outside (0, {})",
                self.unit_id, self.h_s, self.total_cycles
            )));
        }
        if !(1..=3).contains(&self.flight_class) {
            return Err(Error::config(format!(
                "unit {}: flight class {} outside 1..=3",
                self.unit_id, self.flight_class
            )));
        }
        if !self.ood_flag {
            let (a_lo, a_hi) = (cfg.a_range[0], cfg.a_range[1]);
            if self.a < a_lo - 1e-12 || self.a > a_hi + 1e-12 {
                return Err(Error::config(format!(
                    "unit {}: a = {} outside the training envelope [{a_lo}, {a_hi}]",
                    self.unit_id, self.a
                )));
            }
        }
        Ok(())
    }
}

/// Everything the generator needs to build one dataset. The defaults are the
/// desk-scale preset: ~12 development units at ≈20k dev windows, 6 test
/// units of which 2 extrapolate outside the degradation envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Development units (window-split into train/valid).
    pub train_units: usize,
    pub test_units: usize,
    /// Test-only units drawn outside the degradation envelope.
    pub ood_test_units: usize,
    /// Flight-class proportions (short, medium, long haul).
    pub flight_class_ratios: [f64; 3],
    /// Synthetic sub-dataset labels (round-robin assignment).
    pub n_datasets: usize,
    /// Per-unit simulation horizon in cycles.
    pub horizon: u32,
    /// Fault onset as a fraction of the horizon.
    pub hs_frac_range: [f64; 2],
    /// Degradation magnitude envelope.
    pub a_range: [f64; 2],
    /// Post-onset degradation length in cycles (sets b = ln(1 + H/a) / len).
    pub deg_len_range: [f64; 2],
    /// In-distribution `a` is divided by this to build OOD units, pushing
    /// their rate `b` above the training envelope.
    pub ood_a_divisor: f64,
    /// End of life when |health trend| crosses this.
    pub health_threshold: f64,
    /// Scale of the healthy-state health jitter.
    pub theta_jitter: f64,
    /// Sensor noise scale at and before fault onset.
    pub noise_sigma0: f64,
    /// Relative noise growth by end of life.
    pub noise_growth: f64,
    pub window_length: usize,
    pub window_stride: usize,
    /// Keep every k-th cycle before windowing.
    pub decimation: usize,
    /// Train share of the development windows.
    pub dev_split_ratio: f64,
    /// Condition descriptors per cycle.
    pub d_w: usize,
    /// Sensor channels per cycle.
    pub d_s: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            train_units: 12,
            test_units: 6,
            ood_test_units: 2,
            flight_class_ratios: [0.10, 0.27, 0.62],
            n_datasets: 3,
            horizon: 2600,
            hs_frac_range: [0.15, 0.30],
            a_range: [0.7, 1.3],
            deg_len_range: [1196.0, 1204.0],
            ood_a_divisor: 3.0,
            health_threshold: 1.0,
            theta_jitter: 0.004,
            noise_sigma0: 0.02,
            noise_growth: 4.0,
            window_length: 30,
            window_stride: 1,
            decimation: 1,
            dev_split_ratio: 0.9,
            d_w: 4,
            d_s: 14,
        }
    }
}

impl ScenarioConfig {
    /// A fast variant for tests: 3 dev units, 2 test units (1 OOD), short
    /// lives.
    pub fn tiny() -> Self {
        ScenarioConfig {
            train_units: 3,
            test_units: 2,
            ood_test_units: 1,
            horizon: 400,
            hs_frac_range: [0.15, 0.30],
            deg_len_range: [178.0, 182.0],
            ..ScenarioConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_units == 0 || self.test_units == 0 {
            return Err(Error::config("scenario needs train and test units"));
        }
        if self.ood_test_units > self.test_units {
            return Err(Error::config(
                "ood_test_units cannot exceed test_units",
            ));
        }
        // Published ratios are often rounded (e.g. 0.10/0.27/0.62 sums to
        // 0.99); accept anything close to 1 and normalize at allocation.
        let ratio_sum: f64 = self.flight_class_ratios.iter().sum();
        if !(0.9..=1.1).contains(&ratio_sum) || self.flight_class_ratios.iter().any(|r| *r < 0.0) {
            return Err(Error::config(
                "flight_class_ratios must be >= 0 and sum to approximately 1",
            ));
        }
        if self.n_datasets == 0 {
            return Err(Error::config("n_datasets must be >= 1"));
        }
        for (name, range) in [
            ("hs_frac_range", self.hs_frac_range),
            ("a_range", self.a_range),
            ("deg_len_range", self.deg_len_range),
        ] {
            if range[0] > range[1] || range[0] <= 0.0 {
                return Err(Error::config(format!("{name} must be positive and ordered")));
            }
        }
        if self.hs_frac_range[1] >= 1.0 {
            return Err(Error::config("hs_frac_range must stay below 1"));
        }
        if self.ood_a_divisor <= 1.0 {
            return Err(Error::config("ood_a_divisor must exceed 1"));
        }
        if self.health_threshold <= 0.0 || self.noise_sigma0 <= 0.0 || self.noise_growth < 0.0 {
            return Err(Error::config("noise/threshold parameters must be positive"));
        }
        if self.window_length == 0 || self.window_stride == 0 || self.decimation == 0 {
            return Err(Error::config("window parameters must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dev_split_ratio) || self.dev_split_ratio == 0.0 {
            return Err(Error::config("dev_split_ratio must be in (0, 1)"));
        }
        if self.d_w == 0 || self.d_s == 0 {
            return Err(Error::config("d_w and d_s must be >= 1"));
        }
        Ok(())
    }

    /// Largest b inside the training envelope; OOD units exceed it.
    pub fn envelope_b_max(&self) -> f64 {
        (1.0 + self.health_threshold / self.a_range[0]).ln() / self.deg_len_range[0]
    }

    pub fn feature_dim(&self) -> usize {
        (self.d_w + self.d_s) * self.window_length
    }
}

/// Class labels for `n` units honoring the (normalized) ratios by largest
/// remainder.
pub fn allocate_flight_classes(n: usize, ratios: [f64; 3]) -> Vec<u8> {
    let total: f64 = ratios.iter().sum();
    let mut counts = [0usize; 3];
    let mut fracs: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0;
    for (i, r) in ratios.iter().enumerate() {
        let exact = r / total * n as f64;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        fracs.push((i, exact - exact.floor()));
    }
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in fracs.into_iter().take(n - assigned) {
        counts[i] += 1;
    }
    let mut out = Vec::with_capacity(n);
    for (class, count) in counts.iter().enumerate() {
        out.extend(std::iter::repeat((class + 1) as u8).take(*count));
    }
    out
}
