use crate::data::bundle::{DatasetBundle, GroundTruth, Manifest, UnitGroundTruth};
use crate::data::scenario::Split;
use crate::data::windows::{StandardizationStats, WindowSet};
use crate::error::{Error, Result};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Quantizes to 9 significant digits by round-tripping through the decimal
/// text the files store, so in-memory values equal re-loaded values
/// bit-exactly.
pub fn q9(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::numeric("cannot quantize non-finite value"));
    }
    let s = format!("{x:.8e}");
    s.parse::<f64>()
        .map_err(|e| Error::numeric(format!("quantize round-trip failed for {x}: {e}")))
}

fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

fn window_header(dim: usize) -> String {
    let mut cols = vec![
        "unit_id".to_string(),
        "cycle".to_string(),
        "lifetime_fraction".to_string(),
    ];
    for i in 0..dim {
        cols.push(format!("f_{i:03}"));
    }
    cols.push("rul".to_string());
    cols.join(",")
}

fn write_windows(path: &Path, ws: &WindowSet) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", window_header(ws.dim))?;
    for i in 0..ws.len() {
        let mut line = String::with_capacity(ws.dim * 16 + 32);
        line.push_str(&ws.unit_id[i].to_string());
        line.push(',');
        line.push_str(&ws.cycle[i].to_string());
        line.push(',');
        line.push_str(&fmt9(ws.lifetime_fraction[i]));
        for v in ws.row(i) {
            line.push(',');
            line.push_str(&fmt9(*v));
        }
        line.push(',');
        line.push_str(&fmt9(ws.rul[i]));
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn read_windows(path: &Path, standardized: bool) -> Result<WindowSet> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data(format!("{}: empty file", path.display())))?
        .map_err(Error::Io)?;
    let cols = header.split(',').count();
    if cols < 5 {
        return Err(Error::data(format!(
            "{}: malformed header ({cols} columns)",
            path.display()
        )));
    }
    let dim = cols - 4;
    if header != window_header(dim) {
        return Err(Error::data(format!(
            "{}: header does not match the window schema for {dim} features",
            path.display()
        )));
    }
    let mut ws = WindowSet::empty(dim);
    ws.standardized = standardized;
    for (idx, line) in lines.enumerate() {
        let row_no = idx + 2; // 1-based, after header
        let line = line.map_err(Error::Io)?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::data(format!(
                "{} row {row_no}: expected {cols} fields, got {}",
                path.display(),
                fields.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| {
                Error::data(format!("{} row {row_no}: bad {what} `{s}`: {e}", path.display()))
            })
        };
        ws.unit_id.push(fields[0].parse::<u32>().map_err(|e| {
            Error::data(format!("{} row {row_no}: bad unit_id: {e}", path.display()))
        })?);
        ws.cycle.push(fields[1].parse::<u32>().map_err(|e| {
            Error::data(format!("{} row {row_no}: bad cycle: {e}", path.display()))
        })?);
        ws.lifetime_fraction
            .push(parse_f(fields[2], "lifetime_fraction")?);
        for f in &fields[3..3 + dim] {
            ws.features.push(parse_f(f, "feature")?);
        }
        ws.rul.push(parse_f(fields[cols - 1], "rul")?);
    }
    Ok(ws)
}

fn write_stats(path: &Path, stats: &StandardizationStats) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "feature_index,mean,std")?;
    for (i, (m, s)) in stats.mean.iter().zip(&stats.std).enumerate() {
        writeln!(out, "{i},{},{}", fmt9(*m), fmt9(*s))?;
    }
    out.flush()?;
    Ok(())
}

fn read_stats(path: &Path, provenance: &str) -> Result<StandardizationStats> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data("stats file is empty"))?
        .map_err(Error::Io)?;
    if header != "feature_index,mean,std" {
        return Err(Error::data(format!("stats header mismatch: `{header}`")));
    }
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::data(format!("stats row {}: malformed", idx + 2)));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|e| Error::data(format!("stats row {}: {e}", idx + 2)))?;
        if i != mean.len() {
            return Err(Error::data(format!(
                "stats row {}: feature_index {} out of order",
                idx + 2,
                i
            )));
        }
        mean.push(fields[1].parse::<f64>().map_err(|e| {
            Error::data(format!("stats row {}: bad mean: {e}", idx + 2))
        })?);
        std.push(fields[2].parse::<f64>().map_err(|e| {
            Error::data(format!("stats row {}: bad std: {e}", idx + 2))
        })?);
    }
    Ok(StandardizationStats {
        mean,
        std,
        provenance: provenance.to_string(),
    })
}

fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "unit_id,cycle,sigma_noise")?;
    for unit in &gt.units {
        for (cycle, s) in unit.sigma_noise.iter().enumerate() {
            writeln!(out, "{},{cycle},{}", unit.unit_id, fmt9(*s))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data("ground-truth file is empty"))?
        .map_err(Error::Io)?;
    if header != "unit_id,cycle,sigma_noise" {
        return Err(Error::data(format!("ground-truth header mismatch: `{header}`")));
    }
    let mut units: Vec<UnitGroundTruth> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::data(format!("ground-truth row {}: malformed", idx + 2)));
        }
        let unit_id: u32 = fields[0]
            .parse()
            .map_err(|e| Error::data(format!("ground-truth row {}: {e}", idx + 2)))?;
        let sigma: f64 = fields[2]
            .parse()
            .map_err(|e| Error::data(format!("ground-truth row {}: {e}", idx + 2)))?;
        match units.last_mut() {
            Some(u) if u.unit_id == unit_id => u.sigma_noise.push(sigma),
            _ => units.push(UnitGroundTruth {
                unit_id,
                sigma_noise: vec![sigma],
            }),
        }
    }
    Ok(GroundTruth { units })
}

pub fn manifest_file(dir: &Path) -> std::path::PathBuf {
    dir.join("manifest.json")
}

/// Writes manifest + per-split window CSVs + stats (+ ground truth when
/// present) into `dir`. Values were quantized at bundle assembly, so the
/// round-trip through these files is bit-exact and byte-stable.
pub fn save_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest_json = serde_json::to_string_pretty(&bundle.manifest)
        .map_err(|e| Error::data(format!("manifest encode: {e}")))?;
    fs::write(manifest_file(dir), manifest_json)?;
    write_stats(&dir.join("stats.csv"), &bundle.stats)?;
    for split in [Split::Train, Split::Valid, Split::Test] {
        write_windows(
            &dir.join(format!("{split}.csv")),
            bundle.split_unchecked(split),
        )?;
    }
    if let Some(gt) = &bundle.ground_truth {
        write_ground_truth(&dir.join("ground_truth.csv"), gt)?;
    }
    Ok(())
}

/// Loads a dataset directory (ours, or externally produced files matching
/// the same schema — ground truth optional for real data).
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let manifest_text = fs::read_to_string(manifest_file(dir))
        .map_err(|e| Error::data(format!("cannot read {}: {e}", manifest_file(dir).display())))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| Error::data(format!("manifest parse: {e}")))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::data(format!(
            "dataset format version {} unsupported (expected {DATASET_FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let stats = read_stats(&dir.join("stats.csv"), &manifest.stats_provenance)?;
    let mut sets = Vec::with_capacity(3);
    for split in [Split::Train, Split::Valid, Split::Test] {
        let ws = read_windows(&dir.join(format!("{split}.csv")), true)?;
        if ws.dim != stats.mean.len() {
            return Err(Error::data(format!(
                "{split}.csv feature count {} does not match stats ({})",
                ws.dim,
                stats.mean.len()
            )));
        }
        for (i, uid) in ws.unit_id.iter().enumerate() {
            if !manifest.units.iter().any(|u| u.unit_id == *uid) {
                return Err(Error::data(format!(
                    "{split}.csv row {}: manifest missing unit {uid}",
                    i + 2
                )));
            }
        }
        sets.push(ws);
    }
    let gt_path = dir.join("ground_truth.csv");
    let ground_truth = if gt_path.exists() {
        Some(read_ground_truth(&gt_path)?)
    } else {
        None
    };
    let test = sets.pop().expect("three splits");
    let valid = sets.pop().expect("three splits");
    let train = sets.pop().expect("three splits");
    DatasetBundle::from_parts(manifest, stats, train, valid, test, ground_truth)
}
