use crate::data::simulate::UnitTrajectory;
use crate::error::{Error, Result};
use crate::rng::Stream;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Sliding-window samples: one row per window, features flattened
/// channel-major (`f[d·L + l]` is channel d at in-window step l, oldest
/// first), labeled with the RUL at the window's final cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub dim: usize,
    pub features: Vec<f64>,
    pub rul: Vec<f64>,
    pub unit_id: Vec<u32>,
    pub cycle: Vec<u32>,
    pub lifetime_fraction: Vec<f64>,
    pub standardized: bool,
}

impl WindowSet {
    pub fn empty(dim: usize) -> Self {
        WindowSet {
            dim,
            features: Vec::new(),
            rul: Vec::new(),
            unit_id: Vec::new(),
            cycle: Vec::new(),
            lifetime_fraction: Vec::new(),
            standardized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.rul.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rul.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn append(&mut self, other: &WindowSet) -> Result<()> {
        if other.dim != self.dim || other.standardized != self.standardized {
            return Err(Error::data("window sets are not schema-compatible"));
        }
        self.features.extend_from_slice(&other.features);
        self.rul.extend_from_slice(&other.rul);
        self.unit_id.extend_from_slice(&other.unit_id);
        self.cycle.extend_from_slice(&other.cycle);
        self.lifetime_fraction.extend_from_slice(&other.lifetime_fraction);
        Ok(())
    }

    fn take_rows(&self, rows: &[usize]) -> WindowSet {
        let mut out = WindowSet::empty(self.dim);
        out.standardized = self.standardized;
        for &r in rows {
            out.features.extend_from_slice(self.row(r));
            out.rul.push(self.rul[r]);
            out.unit_id.push(self.unit_id[r]);
            out.cycle.push(self.cycle[r]);
            out.lifetime_fraction.push(self.lifetime_fraction[r]);
        }
        out
    }
}

/// Decimates a unit's per-cycle series (keep every k-th cycle) and emits
/// sliding windows at the given stride. Each window is labeled with the RUL
/// at its final retained cycle; lifetime_fraction is that cycle over t_end.
pub fn make_windows(
    traj: &UnitTrajectory,
    length: usize,
    stride: usize,
    decimation: usize,
) -> Result<WindowSet> {
    if length == 0 || stride == 0 || decimation == 0 {
        return Err(Error::config("window length/stride/decimation must be >= 1"));
    }
    let d_w = traj.conditions.len() / traj.cycles();
    let d_s = traj.sensors.len() / traj.cycles();
    let channels = d_w + d_s;
    let kept: Vec<usize> = (0..traj.cycles()).step_by(decimation).collect();
    if kept.len() < length {
        return Err(Error::data(format!(
            "unit {}: series too short after decimation ({} steps < window {})",
            traj.spec.unit_id,
            kept.len(),
            length
        )));
    }
    let dim = channels * length;
    let mut out = WindowSet::empty(dim);
    let mut start = 0;
    while start + length <= kept.len() {
        for d in 0..channels {
            for l in 0..length {
                let t = kept[start + l];
                let v = if d < d_w {
                    traj.conditions[t * d_w + d]
                } else {
                    traj.sensors[t * d_s + (d - d_w)]
                };
                out.features.push(v);
            }
        }
        let final_cycle = kept[start + length - 1] as u32;
        out.rul.push(traj.rul[final_cycle as usize]);
        out.unit_id.push(traj.spec.unit_id);
        out.cycle.push(final_cycle);
        out.lifetime_fraction.push(final_cycle as f64 / traj.t_end as f64);
        start += stride;
    }
    Ok(out)
}

/// Per-feature mean and standard deviation, computed on the training split
/// only; `provenance` records which split produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub provenance: String,
}

const DEGENERATE_STD: f64 = 1e-9;

pub fn compute_stats(windows: &WindowSet, provenance: &str) -> Result<StandardizationStats> {
    if windows.is_empty() {
        return Err(Error::data("cannot compute stats on an empty window set"));
    }
    let n = windows.len() as f64;
    let dim = windows.dim;
    let mut mean = vec![0.0; dim];
    for i in 0..windows.len() {
        for (m, v) in mean.iter_mut().zip(windows.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for i in 0..windows.len() {
        for (j, v) in windows.row(i).iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    let mut std = vec![0.0; dim];
    for (j, (s, v)) in std.iter_mut().zip(&var).enumerate() {
        *s = (v / n).sqrt();
        if *s <= DEGENERATE_STD {
            return Err(Error::data(format!(
                "degenerate feature channel {j}: std {s} below {DEGENERATE_STD}"
            )));
        }
    }
    Ok(StandardizationStats {
        mean,
        std,
        provenance: provenance.to_string(),
    })
}

/// `(x - mean) / std` per feature; labels untouched.
pub fn standardize(windows: &mut WindowSet, stats: &StandardizationStats) -> Result<()> {
    if stats.mean.len() != windows.dim || stats.std.len() != windows.dim {
        return Err(Error::Shape {
            op: "standardize",
            lhs: vec![windows.dim],
            rhs: vec![stats.mean.len()],
        });
    }
    if let Some(j) = stats.std.iter().position(|s| *s <= DEGENERATE_STD) {
        return Err(Error::data(format!("degenerate std at feature {j}")));
    }
    let dim = windows.dim;
    for (i, v) in windows.features.iter_mut().enumerate() {
        let j = i % dim;
        *v = (*v - stats.mean[j]) / stats.std[j];
    }
    windows.standardized = true;
    Ok(())
}

/// Seeded uniform window-level split of the development windows.
pub fn split_dev(windows: &WindowSet, ratio: f64, rng: &mut Stream) -> Result<(WindowSet, WindowSet)> {
    if !(0.0..1.0).contains(&ratio) || ratio == 0.0 {
        return Err(Error::config("split ratio must be in (0, 1)"));
    }
    let n = windows.len();
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::data(format!(
            "split ratio {ratio} leaves an empty side for {n} windows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut train_rows = order[..n_train].to_vec();
    let mut valid_rows = order[n_train..].to_vec();
    train_rows.sort_unstable();
    valid_rows.sort_unstable();
    Ok((windows.take_rows(&train_rows), windows.take_rows(&valid_rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::scenario::{ScenarioConfig, Split, UnitSpec};
    use crate::data::simulate::{simulate_unit, SensorModel};
    use crate::rng::{stream, stream_id};

    fn tiny_traj() -> UnitTrajectory {
        let cfg = ScenarioConfig::tiny();
        let sm = SensorModel::from_seed(5, &cfg);
        let spec = UnitSpec {
            unit_id: 1,
            dataset_id: "d1".into(),
            flight_class: 2,
            a: 1.0,
            b: (1.0 + 1.0f64).ln() / 180.0,
            h_s: 80,
            total_cycles: 400,
            ood_flag: false,
            split: Split::Train,
        };
        simulate_unit(&spec, &sm, &cfg, &mut stream(5, stream_id::DATA_UNIT_BASE + 1)).unwrap()
    }

    #[test]
    fn window_count_formula() {
        let traj = tiny_traj();
        let n = traj.cycles();
        let ws = make_windows(&traj, 30, 1, 1).unwrap();
        assert_eq!(ws.len(), n - 30 + 1);
        // L = 1, stride 1, no decimation: one window per step.
        let ws = make_windows(&traj, 1, 1, 1).unwrap();
        assert_eq!(ws.len(), n);
        // Decimation by 10 keeps ceil(n/10) steps.
        let ws = make_windows(&traj, 3, 1, 10).unwrap();
        assert_eq!(ws.len(), n.div_ceil(10) - 3 + 1);
    }

    #[test]
    fn too_short_series_errors_with_unit_id() {
        let traj = tiny_traj();
        let err = make_windows(&traj, traj.cycles() + 1, 1, 1)
            .unwrap_err()
            .to_string();
        assert!(err.contains("unit 1"), "{err}");
    }

    #[test]
    fn rul_labels_have_plateau_continuity() {
        let traj = tiny_traj();
        let h_s = traj.spec.h_s as usize;
        assert_eq!(traj.rul[traj.t_end as usize], 0.0);
        assert_eq!(traj.rul[0], traj.rul[h_s]);
        assert_eq!(traj.rul[0], (traj.t_end - traj.spec.h_s) as f64);
        // Non-increasing with exactly one breakpoint.
        for t in 1..traj.cycles() {
            assert!(traj.rul[t] <= traj.rul[t - 1]);
            if t > h_s {
                assert_eq!(traj.rul[t - 1] - traj.rul[t], 1.0);
            }
        }
    }

    #[test]
    fn standardize_gives_zero_mean_unit_std_on_fit_split() {
        let traj = tiny_traj();
        let mut ws = make_windows(&traj, 10, 3, 1).unwrap();
        let stats = compute_stats(&ws, "train-split").unwrap();
        standardize(&mut ws, &stats).unwrap();
        let check = compute_stats(&ws, "check").unwrap();
        for (j, (m, s)) in check.mean.iter().zip(&check.std).enumerate() {
            assert!(m.abs() < 1e-10, "mean[{j}] = {m}");
            assert!((s - 1.0).abs() < 1e-10, "std[{j}] = {s}");
        }
        assert!(ws.standardized);
    }

    #[test]
    fn standardizing_is_affine_with_recorded_stats() {
        let traj = tiny_traj();
        let ws = make_windows(&traj, 10, 3, 1).unwrap();
        let stats = compute_stats(&ws, "train-split").unwrap();
        let mut once = ws.clone();
        standardize(&mut once, &stats).unwrap();
        // Invert the recorded affine transform and recover the originals.
        for i in 0..ws.len() {
            for (j, (raw, std)) in ws.row(i).iter().zip(once.row(i)).enumerate() {
                let back = std * stats.std[j] + stats.mean[j];
                assert!((back - raw).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_channel_is_rejected() {
        let traj = tiny_traj();
        let mut ws = make_windows(&traj, 5, 2, 1).unwrap();
        for i in 0..ws.len() {
            ws.features[i * ws.dim] = 42.0;
        }
        assert!(compute_stats(&ws, "train-split").is_err());
    }

    #[test]
    fn dev_split_is_seeded_and_disjoint() {
        let traj = tiny_traj();
        let ws = make_windows(&traj, 10, 1, 1).unwrap();
        let n = ws.len();
        let (tr1, va1) = split_dev(&ws, 0.9, &mut stream(3, 77)).unwrap();
        let (tr2, va2) = split_dev(&ws, 0.9, &mut stream(3, 77)).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(va1, va2);
        assert_eq!(tr1.len(), (0.9 * n as f64).round() as usize);
        assert_eq!(tr1.len() + va1.len(), n);
        // Disjoint by construction: the cycles partition the unit's series.
        let mut seen: Vec<u32> = tr1.cycle.clone();
        seen.extend(&va1.cycle);
        seen.sort_unstable();
        let mut all = ws.cycle.clone();
        all.sort_unstable();
        assert_eq!(seen, all);
    }

    #[test]
    fn split_of_1000_windows_is_900_100() {
        // Synthetic 1000-row window set.
        let mut ws = WindowSet::empty(2);
        for i in 0..1000 {
            ws.features.extend_from_slice(&[i as f64, -(i as f64)]);
            ws.rul.push(i as f64);
            ws.unit_id.push(1);
            ws.cycle.push(i as u32);
            ws.lifetime_fraction.push(i as f64 / 999.0);
        }
        let (tr, va) = split_dev(&ws, 0.9, &mut stream(9, 78)).unwrap();
        assert_eq!(tr.len(), 900);
        assert_eq!(va.len(), 100);
    }
}
