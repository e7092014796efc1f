use rulkit_core::data::{load_dataset, DatasetBundle};
use rulkit_core::error::{Error, Result};
use rulkit_core::layers::Checkpoint;
use rulkit_core::method::Method;
use rulkit_core::trainer::{train_ensemble, train_method, TrainConfig, TrainHistory};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

pub fn checkpoint_name(method: Method, seed: u64) -> String {
    format!("checkpoint_{method}_seed{seed}.json")
}

pub fn report_name(method: Method, seed: u64, split: &str) -> String {
    format!("report_{method}_seed{seed}_{split}.json")
}

fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "epoch,train_loss,valid_loss")?;
    for (i, (t, v)) in history
        .train_loss
        .iter()
        .zip(&history.valid_loss)
        .enumerate()
    {
        writeln!(out, "{i},{t},{v}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn run(cfg: &TrainConfig, data: &Path, out: &Path) -> Result<()> {
    let bundle = load_dataset(data)?;
    fs::create_dir_all(out)?;
    let fingerprint = bundle.fingerprint();
    match cfg.method {
        Method::De => {
            let (ensemble, histories) = train_ensemble(&bundle, cfg)?;
            let ckpt = Checkpoint::ensemble(
                cfg.seed,
                fingerprint,
                &ensemble.members,
                ensemble.member_seeds.clone(),
            )?;
            ckpt.save(&out.join(checkpoint_name(cfg.method, cfg.seed)))?;
            for (i, h) in histories.iter().enumerate() {
                write_history(
                    &out.join(format!("history_{}_seed{}_member{i}.csv", cfg.method, cfg.seed)),
                    h,
                )?;
            }
            let epochs: Vec<usize> = histories.iter().map(|h| h.epochs_run()).collect();
            println!(
                "trained {} pool models (epochs {epochs:?}), kept {} members -> {}",
                cfg.k_pool,
                ensemble.members.len(),
                out.display()
            );
            summarize(&bundle, cfg)
        }
        _ => {
            let (model, history) = train_method(&bundle, cfg)?;
            let ckpt = Checkpoint::single(cfg.method, cfg.seed, fingerprint, &model);
            ckpt.save(&out.join(checkpoint_name(cfg.method, cfg.seed)))?;
            write_history(
                &out.join(format!("history_{}_seed{}.csv", cfg.method, cfg.seed)),
                &history,
            )?;
            println!(
                "trained {} (seed {}): {} epochs, best validation loss {:.6} at epoch {} ({:.1}s) -> {}",
                cfg.method,
                cfg.seed,
                history.epochs_run(),
                history.best_valid_loss(),
                history.best_epoch,
                history.wall_time_secs,
                out.display()
            );
            summarize(&bundle, cfg)
        }
    }
}

fn summarize(bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<()> {
    if bundle.access_count(rulkit_core::data::Split::Test) != 0 {
        return Err(Error::numeric(
            "internal invariant violated: training touched the test split",
        ));
    }
    let _ = cfg;
    Ok(())
}
