use crate::data::scenario::{ScenarioConfig, Split, UnitSpec};
use crate::error::{Error, Result};
use crate::rng::{normal_vec, stream, stream_id, Stream};
use crate::scalar::Real;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fixed seeded nonlinear mixing map from (flight conditions, health) to
/// sensor channels, plus the heteroscedastic noise law and per-class
/// condition distributions. One instance per scenario; deterministic given
/// the seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SensorModel {
    d_w: usize,
    d_s: usize,
    hidden: usize,
    /// hidden×(d_w+1) mixing weights on [conditions, health].
    c1: Vec<f64>,
    c1_bias: Vec<f64>,
    /// d_s×hidden output weights of the smooth nonlinearity.
    c2: Vec<f64>,
    /// d_s×(d_w+1) linear bypass.
    c3: Vec<f64>,
    /// Per-class mean of the condition descriptors (3×d_w).
    w_mean: Vec<f64>,
    /// Per-descriptor condition spread.
    w_spread: Vec<f64>,
    noise_sigma0: f64,
    noise_growth: f64,
}

impl SensorModel {
    pub fn from_seed(seed: u64, cfg: &ScenarioConfig) -> Self {
        let mut rng = stream(seed, stream_id::SENSOR_MODEL);
        let (d_w, d_s) = (cfg.d_w, cfg.d_s);
        let hidden = 8;
        let z_dim = d_w + 1;
        let theta_gain = 2.0;
        let mut c1: Vec<f64> = normal_vec::<f64, _>(&mut rng, hidden * z_dim)
            .iter()
            .map(|v| v / (z_dim as f64).sqrt())
            .collect();
        let c1_bias: Vec<f64> = normal_vec::<f64, _>(&mut rng, hidden)
            .iter()
            .map(|v| v * 0.3)
            .collect();
        let c2: Vec<f64> = normal_vec::<f64, _>(&mut rng, d_s * hidden)
            .iter()
            .map(|v| v / (hidden as f64).sqrt())
            .collect();
        let mut c3: Vec<f64> = normal_vec::<f64, _>(&mut rng, d_s * z_dim)
            .iter()
            .map(|v| v * 0.5 / (z_dim as f64).sqrt())
            .collect();
        // The health coordinate drives sensors harder than any one condition.
        for row in 0..hidden {
            c1[row * z_dim + d_w] *= theta_gain;
        }
        for row in 0..d_s {
            c3[row * z_dim + d_w] *= theta_gain;
        }
        let w_mean: Vec<f64> = normal_vec::<f64, _>(&mut rng, 3 * d_w);
        let w_spread: Vec<f64> = normal_vec::<f64, _>(&mut rng, d_w)
            .iter()
            .map(|v| 0.1 + 0.15 * v.abs())
            .collect();
        SensorModel {
            d_w,
            d_s,
            hidden,
            c1,
            c1_bias,
            c2,
            c3,
            w_mean,
            w_spread,
            noise_sigma0: cfg.noise_sigma0,
            noise_growth: cfg.noise_growth,
        }
    }

    pub fn channels(&self) -> usize {
        self.d_w + self.d_s
    }

    pub fn descriptor_count(&self) -> usize {
        self.d_w
    }

    pub fn sensor_count(&self) -> usize {
        self.d_s
    }

    /// Noise-free sensor response `g(w, theta)`.
    pub fn mix(&self, w: &[f64], theta: f64) -> Vec<f64> {
        let z_dim = self.d_w + 1;
        let mut z = Vec::with_capacity(z_dim);
        z.extend_from_slice(w);
        z.push(theta);
        let mut hidden = vec![0.0; self.hidden];
        for (h, out) in hidden.iter_mut().enumerate() {
            let row = &self.c1[h * z_dim..(h + 1) * z_dim];
            let pre: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + self.c1_bias[h];
            *out = pre.tanh();
        }
        let mut sensors = vec![0.0; self.d_s];
        for (s, out) in sensors.iter_mut().enumerate() {
            let c2_row = &self.c2[s * self.hidden..(s + 1) * self.hidden];
            let c3_row = &self.c3[s * z_dim..(s + 1) * z_dim];
            *out = c2_row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>()
                + c3_row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        }
        sensors
    }

    /// Ground-truth noise scale: flat before fault onset, then growing
    /// linearly to `sigma0·(1 + growth)` at end of life. Non-decreasing
    /// after h_s by construction.
    pub fn noise_sigma(&self, t: u32, h_s: u32, t_end: u32) -> f64 {
        if t <= h_s || t_end <= h_s {
            self.noise_sigma0
        } else {
            let frac = (t - h_s) as f64 / (t_end - h_s) as f64;
            self.noise_sigma0 * (1.0 + self.noise_growth * frac)
        }
    }

    /// One per-cycle draw of the flight-condition descriptors for a class.
    pub fn draw_conditions<R: Rng + ?Sized>(&self, flight_class: u8, rng: &mut R) -> Vec<f64> {
        let base = &self.w_mean[(flight_class as usize - 1) * self.d_w..][..self.d_w];
        base.iter()
            .zip(&self.w_spread)
            .map(|(m, s)| m + s * f64::standard_normal(rng))
            .collect()
    }
}

/// Per-cycle series of one simulated run-to-failure unit, including the
/// ground truth needed by oracle tests (health and noise scale).
#[derive(Clone, Debug)]
pub struct UnitTrajectory {
    pub spec: UnitSpec,
    /// End-of-life cycle; the series covers cycles 0..=t_end.
    pub t_end: u32,
    /// (t_end+1)×d_w condition descriptors, row-major.
    pub conditions: Vec<f64>,
    /// (t_end+1)×d_s noisy sensor readings, row-major.
    pub sensors: Vec<f64>,
    /// Observed health (deterministic trend plus jitter) per cycle.
    pub theta: Vec<f64>,
    /// Ground-truth noise scale per cycle.
    pub sigma_noise: Vec<f64>,
    /// Piece-wise linear RUL label per cycle.
    pub rul: Vec<f64>,
}

impl UnitTrajectory {
    pub fn cycles(&self) -> usize {
        self.t_end as usize + 1
    }
}

/// Deterministic end-of-life cycle: the first cycle where the degradation
/// trend `-a (e^{b (t - h_s)} - 1)` crosses the health threshold.
pub fn end_of_life_cycle(spec: &UnitSpec, threshold: f64) -> Result<u32> {
    if spec.a <= 0.0 || spec.b <= 0.0 {
        return Err(Error::data(format!(
            "unit {}: health threshold unreachable (a = {}, b = {})",
            spec.unit_id, spec.a, spec.b
        )));
    }
    let post = ((1.0 + threshold / spec.a).ln() / spec.b).ceil() as u32;
    let t_end = spec.h_s + post.max(1);
    if t_end >= spec.total_cycles {
        return Err(Error::data(format!(
            "unit {}: threshold not crossed within {} cycles (needs {})",
            spec.unit_id, spec.total_cycles, t_end
        )));
    }
    Ok(t_end)
}

/// Two-stage RUL labels for cycles 0..=t_end: constant `t_end - h_s` on the
/// healthy plateau, then linearly decreasing to zero.
pub fn rul_labels(t_end: u32, h_s: u32) -> Vec<f64> {
    (0..=t_end)
        .map(|t| {
            if t < h_s {
                (t_end - h_s) as f64
            } else {
                (t_end - t) as f64
            }
        })
        .collect()
}

/// Simulates one unit: flat-with-jitter health before onset, exponential
/// degradation after, heteroscedastic sensor noise, per-cycle conditions
/// from the unit's flight class.
pub fn simulate_unit(
    spec: &UnitSpec,
    sm: &SensorModel,
    cfg: &ScenarioConfig,
    rng: &mut Stream,
) -> Result<UnitTrajectory> {
    spec.validate(cfg)?;
    let t_end = end_of_life_cycle(spec, cfg.health_threshold)?;
    let n = t_end as usize + 1;
    let mut conditions = Vec::with_capacity(n * sm.descriptor_count());
    let mut sensors = Vec::with_capacity(n * sm.sensor_count());
    let mut theta_series = Vec::with_capacity(n);
    let mut sigma_series = Vec::with_capacity(n);
    for t in 0..=t_end {
        let trend = if t < spec.h_s {
            0.0
        } else {
            -spec.a * ((spec.b * (t - spec.h_s) as f64).exp() - 1.0)
        };
        let theta = trend + cfg.theta_jitter * f64::standard_normal(rng);
        let sigma = sm.noise_sigma(t, spec.h_s, t_end);
        let w = sm.draw_conditions(spec.flight_class, rng);
        let clean = sm.mix(&w, theta);
        for c in clean {
            sensors.push(c + sigma * f64::standard_normal(rng));
        }
        conditions.extend_from_slice(&w);
        theta_series.push(theta);
        sigma_series.push(sigma);
    }
    Ok(UnitTrajectory {
        spec: spec.clone(),
        t_end,
        conditions,
        sensors,
        theta: theta_series,
        sigma_noise: sigma_series,
        rul: rul_labels(t_end, spec.h_s),
    })
}

/// Convenience: the trajectory's unit split tag.
pub fn unit_split(traj: &UnitTrajectory) -> Split {
    traj.spec.split
}
