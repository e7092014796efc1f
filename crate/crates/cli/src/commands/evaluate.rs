use crate::config::EvaluateSection;
use rulkit_core::autodiff::Tensor;
use rulkit_core::data::{load_dataset, DatasetBundle, Split};
use rulkit_core::error::{Error, Result};
use rulkit_core::layers::{Checkpoint, FunctionalModel};
use rulkit_core::method::Method;
use rulkit_core::metrics::{
    build_report, write_line_chart, MetricsReport, PredictionRow, ReportInputs, SampleMatrix,
    Series,
};
use rulkit_core::predictors::{decompose, sample_predictive, DecompositionTag, PredictiveSampleSet};
use rulkit_core::rng::{stream, stream_id};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

const PREDICT_BATCH: usize = 512;

pub struct EvalOutput {
    pub rows: Vec<PredictionRow>,
    pub samples: SampleMatrix,
    pub tag: DecompositionTag,
    pub passes: usize,
}

/// Runs the predictive passes for one checkpoint over one split.
pub fn run_prediction(
    ckpt: &Checkpoint,
    bundle: &DatasetBundle,
    split: Split,
    mc_samples: usize,
    seed: u64,
) -> Result<EvalOutput> {
    let models: Vec<FunctionalModel<f64>> = ckpt.into_models()?;
    let input_dim = models[0].input_dim();
    if input_dim != bundle.feature_dim() {
        return Err(Error::data(format!(
            "schema mismatch: checkpoint expects {input_dim} features, dataset provides {}",
            bundle.feature_dim()
        )));
    }
    if ckpt.dataset_fingerprint != bundle.fingerprint() {
        return Err(Error::data(
            "checkpoint was trained on a different dataset (fingerprint mismatch)",
        ));
    }
    let ws = bundle.split(split);
    if ws.is_empty() {
        return Err(Error::data(format!("{split} split is empty")));
    }
    let (passes, tag) = match ckpt.method {
        Method::Hnn => (1, DecompositionTag::None),
        Method::De => (models.len(), DecompositionTag::Nominal),
        _ => (mc_samples.max(1), DecompositionTag::Sampled),
    };
    let mut rng = stream(seed, stream_id::PREDICT);
    let mut rows = Vec::with_capacity(ws.len());
    let mut samples = SampleMatrix {
        mu: vec![Vec::with_capacity(ws.len()); passes],
        sigma_sq: vec![Vec::with_capacity(ws.len()); passes],
    };
    let indices: Vec<usize> = (0..ws.len()).collect();
    for chunk in indices.chunks(PREDICT_BATCH) {
        let mut x = Vec::with_capacity(chunk.len() * ws.dim);
        for &i in chunk {
            x.extend_from_slice(ws.row(i));
        }
        let x = Tensor::new(vec![chunk.len(), ws.dim], x)?;
        let set = match ckpt.method {
            Method::De => {
                let mut mu = Vec::with_capacity(models.len());
                let mut var = Vec::with_capacity(models.len());
                for m in &models {
                    let (pm, pv) = m.predict_batch(&x, &m.empty_noise())?;
                    mu.push(pm);
                    var.push(pv);
                }
                PredictiveSampleSet::new(mu, var)?
            }
            _ => sample_predictive(&models[0], &x, passes, &mut rng)?,
        };
        let preds = decompose(&set);
        for (k, &i) in chunk.iter().enumerate() {
            let mut p = preds[k];
            if ckpt.method == Method::Hnn {
                p.var_epistemic = 0.0;
                p.var_aleatoric = p.var_total;
            }
            rows.push(PredictionRow {
                unit_id: ws.unit_id[i],
                cycle: ws.cycle[i],
                lifetime_fraction: ws.lifetime_fraction[i],
                y_true: ws.rul[i],
                prediction: p,
            });
        }
        for pass in 0..passes {
            samples.mu[pass].extend_from_slice(&set.mu[pass]);
            samples.sigma_sq[pass].extend_from_slice(&set.sigma_sq[pass]);
        }
    }
    Ok(EvalOutput {
        rows,
        samples,
        tag,
        passes,
    })
}

pub fn write_prediction_dump(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "unit_id,cycle,lifetime_fraction,y_true,mu,sigma_total,sigma_epistemic,sigma_aleatoric"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.unit_id,
            r.cycle,
            r.lifetime_fraction,
            r.y_true,
            r.prediction.mean,
            r.prediction.var_total.sqrt(),
            r.prediction.var_epistemic.sqrt(),
            r.prediction.var_aleatoric.sqrt()
        )?;
    }
    out.flush()?;
    Ok(())
}

fn write_curve_csv(path: &Path, header: &str, points: &[(f64, Option<f64>)]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    for (x, y) in points {
        match y {
            Some(v) => writeln!(out, "{x},{v}")?,
            None => writeln!(out, "{x},")?,
        }
    }
    out.flush()?;
    Ok(())
}

pub struct EvaluateArgs<'a> {
    pub checkpoint: &'a Path,
    pub data: &'a Path,
    pub out: &'a Path,
    pub split: Split,
    pub mc_samples: usize,
    pub seed: Option<u64>,
    pub section: EvaluateSection,
    pub svg: bool,
    /// Skip the report (predict-only mode).
    pub dump_only: bool,
}

pub fn run(args: &EvaluateArgs<'_>) -> Result<Option<MetricsReport>> {
    let ckpt = Checkpoint::load(args.checkpoint)?;
    let bundle = load_dataset(args.data)?;
    fs::create_dir_all(args.out)?;
    if ckpt.method.is_deterministic() && args.mc_samples != 1 {
        eprintln!(
            "note: {} is deterministic per pass; the MC sample count only applies to stochastic methods",
            ckpt.method
        );
    }
    let seed = args.seed.unwrap_or(ckpt.seed);
    let eval = run_prediction(&ckpt, &bundle, args.split, args.mc_samples, seed)?;
    let stem = format!("{}_seed{}_{}", ckpt.method, ckpt.seed, args.split);
    write_prediction_dump(&args.out.join(format!("predictions_{stem}.csv")), &eval.rows)?;
    if args.dump_only {
        println!(
            "predicted {} windows with {} pass(es) -> {}",
            eval.rows.len(),
            eval.passes,
            args.out.display()
        );
        return Ok(None);
    }
    let report = build_report(&ReportInputs {
        method: ckpt.method,
        seed: ckpt.seed,
        dataset_fingerprint: ckpt.dataset_fingerprint.clone(),
        split: args.split.to_string(),
        mc_samples: eval.passes,
        decomposition: eval.tag,
        rows: &eval.rows,
        samples: Some(&eval.samples),
        manifest: &bundle.manifest,
        lifetime_bins: args.section.lifetime_bins,
        confidence_levels: args.section.confidence_levels,
    })?;
    report.save(&args.out.join(format!("report_{stem}.json")))?;
    write_curve_csv(
        &args.out.join(format!("calibration_{stem}.csv")),
        "level,empirical",
        &report
            .calibration
            .levels
            .iter()
            .zip(&report.calibration.empirical)
            .map(|(l, e)| (*l, Some(*e)))
            .collect::<Vec<_>>(),
    )?;
    write_curve_csv(
        &args.out.join(format!("rmse_confidence_{stem}.csv")),
        "retained_fraction,rmse",
        &report
            .rmse_vs_confidence
            .iter()
            .map(|p| (p.retained_fraction, p.rmse))
            .collect::<Vec<_>>(),
    )?;
    if args.svg {
        write_line_chart(
            &args.out.join(format!("calibration_{stem}.svg")),
            "calibration curve",
            "confidence level",
            "empirical frequency",
            &[
                Series {
                    name: "ideal",
                    points: vec![(0.0, 0.0), (1.0, 1.0)],
                },
                Series {
                    name: ckpt.method.as_str(),
                    points: report
                        .calibration
                        .levels
                        .iter()
                        .zip(&report.calibration.empirical)
                        .map(|(l, e)| (*l, *e))
                        .collect(),
                },
            ],
        )?;
        write_line_chart(
            &args.out.join(format!("rmse_confidence_{stem}.svg")),
            "rmse vs confidence",
            "retained fraction",
            "rmse (cycles)",
            &[Series {
                name: ckpt.method.as_str(),
                points: report
                    .rmse_vs_confidence
                    .iter()
                    .filter_map(|p| p.rmse.map(|r| (p.retained_fraction, r)))
                    .collect(),
            }],
        )?;
    }
    println!(
        "evaluated {} {} windows ({} passes): rmse {:.3}, nll {:.4}, rmsce {:.4}, sharpness {:.3} -> {}",
        eval.rows.len(),
        args.split,
        eval.passes,
        report.overall.rmse,
        report.overall.nll_moment,
        report.overall.rmsce,
        report.overall.sharpness,
        args.out.display()
    );
    Ok(Some(report))
}
