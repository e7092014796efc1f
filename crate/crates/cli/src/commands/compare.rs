use rulkit_core::error::{Error, Result};
use rulkit_core::metrics::{GroupRow, MetricsBlock, MetricsReport};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation across seeds; zero for a single run.
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub method: String,
    pub runs: usize,
    pub mae: MeanStd,
    pub rmse: MeanStd,
    pub nll: MeanStd,
    pub nll_mixture: Option<MeanStd>,
    pub rmsce: MeanStd,
    pub sharpness: MeanStd,
    pub mean_entropy: MeanStd,
}

fn aggregate_blocks(method: &str, blocks: &[&MetricsBlock]) -> CompareRow {
    let pick = |f: fn(&MetricsBlock) -> f64| -> MeanStd {
        mean_std(&blocks.iter().map(|b| f(b)).collect::<Vec<_>>())
    };
    let mixtures: Vec<f64> = blocks.iter().filter_map(|b| b.nll_mixture).collect();
    CompareRow {
        method: method.to_string(),
        runs: blocks.len(),
        mae: pick(|b| b.mae),
        rmse: pick(|b| b.rmse),
        nll: pick(|b| b.nll_moment),
        nll_mixture: if mixtures.len() == blocks.len() {
            Some(mean_std(&mixtures))
        } else {
            None
        },
        rmsce: pick(|b| b.rmsce),
        sharpness: pick(|b| b.sharpness),
        mean_entropy: pick(|b| b.mean_entropy),
    }
}

#[derive(Serialize)]
struct CompareFile {
    format_version: u32,
    dataset_fingerprint: String,
    split: String,
    /// Sorted by ascending mean NLL.
    methods: Vec<CompareRow>,
    per_flight_class: BTreeMap<String, Vec<CompareRow>>,
    per_unit: BTreeMap<String, Vec<CompareRow>>,
}

fn fmt_ms(v: &MeanStd) -> String {
    format!("{:.6},{:.6}", v.mean, v.std)
}

fn write_rows_csv(path: &Path, rows: &[CompareRow], key_header: Option<&str>, key: &str) -> Result<()> {
    let exists = path.exists();
    let mut out = BufWriter::new(if exists {
        File::options().append(true).open(path)?
    } else {
        File::create(path)?
    });
    if !exists {
        let prefix = key_header.map(|k| format!("{k},")).unwrap_or_default();
        writeln!(
            out,
            "{prefix}method,runs,mae_mean,mae_std,rmse_mean,rmse_std,nll_mean,nll_std,\
             rmsce_mean,rmsce_std,sharpness_mean,sharpness_std,entropy_mean,entropy_std"
        )?;
    }
    for r in rows {
        let prefix = if key_header.is_some() {
            format!("{key},")
        } else {
            String::new()
        };
        let cells = [
            fmt_ms(&r.mae),
            fmt_ms(&r.rmse),
            fmt_ms(&r.nll),
            fmt_ms(&r.rmsce),
            fmt_ms(&r.sharpness),
            fmt_ms(&r.mean_entropy),
        ];
        writeln!(out, "{prefix}{},{},{}", r.method, r.runs, cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn group_table(
    reports: &[MetricsReport],
    select: fn(&MetricsReport) -> &Vec<GroupRow>,
) -> BTreeMap<String, Vec<CompareRow>> {
    let mut methods: Vec<String> = reports.iter().map(|r| r.method.to_string()).collect();
    methods.sort();
    methods.dedup();
    let mut keys: Vec<String> = reports
        .iter()
        .flat_map(|r| select(r).iter().map(|g| g.key.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    let mut out = BTreeMap::new();
    for key in keys {
        let mut rows = Vec::new();
        for method in &methods {
            let blocks: Vec<&MetricsBlock> = reports
                .iter()
                .filter(|r| r.method.to_string() == *method)
                .flat_map(|r| {
                    select(r)
                        .iter()
                        .filter(|g| g.key == key)
                        .map(|g| &g.metrics)
                })
                .collect();
            if !blocks.is_empty() {
                rows.push(aggregate_blocks(method, &blocks));
            }
        }
        rows.sort_by(|a, b| a.nll.mean.partial_cmp(&b.nll.mean).unwrap());
        out.insert(key, rows);
    }
    out
}

pub fn run(report_paths: &[PathBuf], out: &Path) -> Result<()> {
    if report_paths.is_empty() {
        return Err(Error::config("compare needs at least one report"));
    }
    let reports: Vec<MetricsReport> = report_paths
        .iter()
        .map(|p| MetricsReport::load(p))
        .collect::<Result<_>>()?;
    let fingerprint = reports[0].dataset_fingerprint.clone();
    let split = reports[0].split.clone();
    for r in &reports {
        if r.dataset_fingerprint != fingerprint {
            return Err(Error::data(format!(
                "report {} was produced on a different dataset (fingerprint mismatch); \
                 comparisons must share one dataset",
                r.method
            )));
        }
        if r.split != split {
            return Err(Error::data(
                "reports mix evaluation splits; compare them separately",
            ));
        }
    }

    let mut methods: Vec<String> = reports.iter().map(|r| r.method.to_string()).collect();
    methods.sort();
    methods.dedup();
    let mut rows: Vec<CompareRow> = methods
        .iter()
        .map(|m| {
            let blocks: Vec<&MetricsBlock> = reports
                .iter()
                .filter(|r| r.method.to_string() == *m)
                .map(|r| &r.overall)
                .collect();
            aggregate_blocks(m, &blocks)
        })
        .collect();
    rows.sort_by(|a, b| a.nll.mean.partial_cmp(&b.nll.mean).unwrap());

    fs::create_dir_all(out)?;
    let file = CompareFile {
        format_version: 1,
        dataset_fingerprint: fingerprint,
        split,
        methods: rows.clone(),
        per_flight_class: group_table(&reports, |r| &r.per_flight_class),
        per_unit: group_table(&reports, |r| &r.per_unit),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::data(format!("comparison encode: {e}")))?;
    fs::write(out.join("comparison.json"), json)?;

    let csv_path = out.join("comparison.csv");
    if csv_path.exists() {
        fs::remove_file(&csv_path)?;
    }
    write_rows_csv(&csv_path, &rows, None, "")?;
    let fc_path = out.join("comparison_per_flight_class.csv");
    if fc_path.exists() {
        fs::remove_file(&fc_path)?;
    }
    for (key, rows) in &file.per_flight_class {
        write_rows_csv(&fc_path, rows, Some("flight_class"), key)?;
    }
    let unit_path = out.join("comparison_per_unit.csv");
    if unit_path.exists() {
        fs::remove_file(&unit_path)?;
    }
    for (key, rows) in &file.per_unit {
        write_rows_csv(&unit_path, rows, Some("unit"), key)?;
    }

    println!("method          runs   rmse            nll             rmsce           sharpness");
    for r in &rows {
        println!(
            "{:<15} {:<6} {:<15} {:<15} {:<15} {:<15}",
            r.method,
            r.runs,
            format!("{:.3}±{:.3}", r.rmse.mean, r.rmse.std),
            format!("{:.3}±{:.3}", r.nll.mean, r.nll.std),
            format!("{:.4}±{:.4}", r.rmsce.mean, r.rmsce.std),
            format!("{:.3}±{:.3}", r.sharpness.mean, r.sharpness.std),
        );
    }
    println!("comparison tables -> {}", out.display());
    Ok(())
}
