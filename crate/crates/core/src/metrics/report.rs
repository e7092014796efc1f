use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::metrics::core::{
    calibration_curve, gaussian_cdf, mean_entropy, miscalibration_area, nll_mixture, nll_moment,
    point_metrics, rmsce, rmse_vs_confidence, CalibrationCurve, ConfidencePoint,
};
use crate::method::Method;
use crate::predictors::{DecompositionTag, Prediction};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Default confidence-level grid (endpoints included).
pub const CALIBRATION_LEVELS: usize = 101;

/// One scored test window.
#[derive(Clone, Debug)]
pub struct PredictionRow {
    pub unit_id: u32,
    pub cycle: u32,
    pub lifetime_fraction: f64,
    pub y_true: f64,
    pub prediction: Prediction<f64>,
}

/// Retained per-pass outputs aligned with the rows, for the exact mixture
/// NLL (N×T, row per pass).
#[derive(Clone, Debug, Default)]
pub struct SampleMatrix {
    pub mu: Vec<Vec<f64>>,
    pub sigma_sq: Vec<Vec<f64>>,
}

impl SampleMatrix {
    pub fn columns(&self, cols: &[usize]) -> SampleMatrix {
        let slice = |rows: &Vec<Vec<f64>>| {
            rows.iter()
                .map(|row| cols.iter().map(|&c| row[c]).collect())
                .collect()
        };
        SampleMatrix {
            mu: slice(&self.mu),
            sigma_sq: slice(&self.sigma_sq),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub count: usize,
    pub mae: f64,
    pub rmse: f64,
    pub nll_moment: f64,
    pub nll_mixture: Option<f64>,
    pub rmsce: f64,
    pub sharpness: f64,
    pub mean_entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub key: String,
    pub metrics: MetricsBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKey {
    Unit,
    Dataset,
    FlightClass,
    Ood,
}

impl GroupKey {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(GroupKey::Unit),
            "dataset" => Ok(GroupKey::Dataset),
            "flight_class" => Ok(GroupKey::FlightClass),
            "ood" => Ok(GroupKey::Ood),
            other => Err(Error::config(format!(
                "unknown group key `{other}` (expected unit, dataset, flight_class or ood)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifetimeBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub rmse: Option<f64>,
    pub sharpness: Option<f64>,
    pub rmsce: Option<f64>,
    pub nll: Option<f64>,
    pub mean_var_aleatoric: Option<f64>,
    pub mean_var_epistemic: Option<f64>,
}

/// The full evaluation artifact for one (method, seed, split).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub format_version: u32,
    pub method: Method,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub split: String,
    pub mc_samples: usize,
    pub decomposition: DecompositionTag,
    pub overall: MetricsBlock,
    pub per_unit: Vec<GroupRow>,
    pub per_dataset: Vec<GroupRow>,
    pub per_flight_class: Vec<GroupRow>,
    pub per_ood: Vec<GroupRow>,
    pub calibration: CalibrationCurve,
    pub miscalibration_area: f64,
    pub rmse_vs_confidence: Vec<ConfidencePoint>,
    pub lifetime: Vec<LifetimeBin>,
}

impl MetricsReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("report encode: {e}")))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
        let report: MetricsReport = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("report parse ({}): {e}", path.display())))?;
        if report.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::data(format!(
                "report format version {} unsupported (expected {REPORT_FORMAT_VERSION})",
                report.format_version
            )));
        }
        Ok(report)
    }
}

/// Probability integral transform of every row under its moment-matched
/// predictive Gaussian.
pub fn pit_values(rows: &[PredictionRow]) -> Result<Vec<f64>> {
    rows.iter()
        .map(|r| gaussian_cdf(r.y_true, r.prediction.mean, r.prediction.var_total))
        .collect()
}

/// Pooled metrics over a row subset (not an average of sub-metrics).
pub fn metrics_block(
    rows: &[PredictionRow],
    samples: Option<&SampleMatrix>,
    calibration_levels: usize,
) -> Result<MetricsBlock> {
    if rows.is_empty() {
        return Err(Error::config("metrics need at least one row"));
    }
    let y: Vec<f64> = rows.iter().map(|r| r.y_true).collect();
    let mu: Vec<f64> = rows.iter().map(|r| r.prediction.mean).collect();
    let var: Vec<f64> = rows.iter().map(|r| r.prediction.var_total).collect();
    let (mae, rmse_v) = point_metrics(&y, &mu)?;
    let nll_m = nll_moment(&y, &mu, &var)?;
    let nll_mix = samples
        .map(|s| nll_mixture(&y, &s.mu, &s.sigma_sq))
        .transpose()?;
    let pit = pit_values(rows)?;
    let curve = calibration_curve(&pit, calibration_levels)?;
    Ok(MetricsBlock {
        count: rows.len(),
        mae,
        rmse: rmse_v,
        nll_moment: nll_m,
        nll_mixture: nll_mix,
        rmsce: rmsce(&curve),
        sharpness: crate::metrics::core::sharpness(&var)?,
        mean_entropy: mean_entropy(&var)?,
    })
}

/// Pooled per-group metrics; groups partition the rows via the manifest
/// join.
pub fn group_aggregate(
    rows: &[PredictionRow],
    samples: Option<&SampleMatrix>,
    key: GroupKey,
    manifest: &Manifest,
    calibration_levels: usize,
) -> Result<Vec<GroupRow>> {
    let mut labeled: Vec<(String, usize)> = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let unit = manifest.unit(row.unit_id).ok_or_else(|| {
            Error::data(format!("manifest missing unit {}", row.unit_id))
        })?;
        let label = match key {
            GroupKey::Unit => format!("u{:02}", unit.unit_id),
            GroupKey::Dataset => unit.dataset_id.clone(),
            GroupKey::FlightClass => format!("FC{}", unit.flight_class),
            GroupKey::Ood => if unit.ood_flag { "ood" } else { "id" }.to_string(),
        };
        labeled.push((label, i));
    }
    let mut keys: Vec<String> = labeled.iter().map(|(k, _)| k.clone()).collect();
    keys.sort();
    keys.dedup();
    let mut out = Vec::with_capacity(keys.len());
    for k in keys {
        let cols: Vec<usize> = labeled
            .iter()
            .filter(|(label, _)| *label == k)
            .map(|(_, i)| *i)
            .collect();
        let subset: Vec<PredictionRow> = cols.iter().map(|&i| rows[i].clone()).collect();
        let sub_samples = samples.map(|s| s.columns(&cols));
        out.push(GroupRow {
            key: k,
            metrics: metrics_block(&subset, sub_samples.as_ref(), calibration_levels)?,
        });
    }
    Ok(out)
}

/// Equal-width bins over lifetime_fraction in [0, 1]; empty bins emit nulls.
pub fn lifetime_binned(
    rows: &[PredictionRow],
    samples: Option<&SampleMatrix>,
    bins: usize,
    calibration_levels: usize,
) -> Result<Vec<LifetimeBin>> {
    if bins < 1 {
        return Err(Error::config("lifetime binning needs bins >= 1"));
    }
    let mut out = Vec::with_capacity(bins);
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let cols: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                let f = r.lifetime_fraction;
                (f >= lo && f < hi) || (b == bins - 1 && f == 1.0)
            })
            .map(|(i, _)| i)
            .collect();
        if cols.is_empty() {
            out.push(LifetimeBin {
                lo,
                hi,
                count: 0,
                rmse: None,
                sharpness: None,
                rmsce: None,
                nll: None,
                mean_var_aleatoric: None,
                mean_var_epistemic: None,
            });
            continue;
        }
        let subset: Vec<PredictionRow> = cols.iter().map(|&i| rows[i].clone()).collect();
        let sub_samples = samples.map(|s| s.columns(&cols));
        let block = metrics_block(&subset, sub_samples.as_ref(), calibration_levels)?;
        let n = subset.len() as f64;
        let mean_al = subset.iter().map(|r| r.prediction.var_aleatoric).sum::<f64>() / n;
        let mean_ep = subset.iter().map(|r| r.prediction.var_epistemic).sum::<f64>() / n;
        out.push(LifetimeBin {
            lo,
            hi,
            count: subset.len(),
            rmse: Some(block.rmse),
            sharpness: Some(block.sharpness),
            rmsce: Some(block.rmsce),
            nll: Some(block.nll_moment),
            mean_var_aleatoric: Some(mean_al),
            mean_var_epistemic: Some(mean_ep),
        });
    }
    Ok(out)
}

pub struct ReportInputs<'a> {
    pub method: Method,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub split: String,
    pub mc_samples: usize,
    pub decomposition: DecompositionTag,
    pub rows: &'a [PredictionRow],
    pub samples: Option<&'a SampleMatrix>,
    pub manifest: &'a Manifest,
    pub lifetime_bins: usize,
    pub confidence_levels: usize,
}

/// Assembles the full report: overall block, group tables, calibration and
/// confidence curves, lifetime evolution.
pub fn build_report(inputs: &ReportInputs<'_>) -> Result<MetricsReport> {
    let rows = inputs.rows;
    let overall = metrics_block(rows, inputs.samples, CALIBRATION_LEVELS)?;
    let pit = pit_values(rows)?;
    let calibration = calibration_curve(&pit, CALIBRATION_LEVELS)?;
    let area = miscalibration_area(&calibration);
    let y: Vec<f64> = rows.iter().map(|r| r.y_true).collect();
    let mu: Vec<f64> = rows.iter().map(|r| r.prediction.mean).collect();
    let var: Vec<f64> = rows.iter().map(|r| r.prediction.var_total).collect();
    let confidence = rmse_vs_confidence(&y, &mu, &var, inputs.confidence_levels)?;
    Ok(MetricsReport {
        format_version: REPORT_FORMAT_VERSION,
        method: inputs.method,
        seed: inputs.seed,
        dataset_fingerprint: inputs.dataset_fingerprint.clone(),
        split: inputs.split.clone(),
        mc_samples: inputs.mc_samples,
        decomposition: inputs.decomposition,
        overall,
        per_unit: group_aggregate(rows, inputs.samples, GroupKey::Unit, inputs.manifest, CALIBRATION_LEVELS)?,
        per_dataset: group_aggregate(rows, inputs.samples, GroupKey::Dataset, inputs.manifest, CALIBRATION_LEVELS)?,
        per_flight_class: group_aggregate(
            rows,
            inputs.samples,
            GroupKey::FlightClass,
            inputs.manifest,
            CALIBRATION_LEVELS,
        )?,
        per_ood: group_aggregate(rows, inputs.samples, GroupKey::Ood, inputs.manifest, CALIBRATION_LEVELS)?,
        calibration,
        miscalibration_area: area,
        rmse_vs_confidence: confidence,
        lifetime: lifetime_binned(rows, inputs.samples, inputs.lifetime_bins, CALIBRATION_LEVELS)?,
    })
}
