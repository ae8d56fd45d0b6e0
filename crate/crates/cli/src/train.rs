use std::path::Path;

use rganet::{TrainConfig, Trainer};

use crate::{io_failure, Outcome};

pub fn run(config: &Path, out: &Path) -> Outcome {
    let cfg = TrainConfig::load(config)?;
    let samples = cfg.load_samples::<f32>()?;
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let log_path = out.join("train_log.csv");
    let mut log = csv::Writer::from_path(&log_path)?;
    log.write_record(["epoch", "loss", "jaccard", "precision", "recall"])?;
    log.flush().map_err(|e| io_failure(&log_path, e))?;

    let mut trainer = Trainer::<f32>::new(&cfg)?;
    for _ in 0..cfg.epochs {
        let e = trainer.train_epoch(&samples)?;
        eprintln!(
            "epoch {:>4}  loss {:.5}  jaccard {:.4}  precision {:.4}  recall {:.4}",
            e.epoch, e.loss, e.jaccard, e.precision, e.recall
        );
        log.write_record([
            e.epoch.to_string(),
            e.loss.to_string(),
            e.jaccard.to_string(),
            e.precision.to_string(),
            e.recall.to_string(),
        ])?;
        log.flush().map_err(|err| io_failure(&log_path, err))?;
        if cfg.checkpoint_every > 0 && e.epoch % cfg.checkpoint_every == 0 {
            trainer.model.save(&out.join(format!("epoch_{:04}.rgan", e.epoch)))?;
        }
    }
    let final_path = out.join("model.rgan");
    trainer.model.save(&final_path)?;
    eprintln!("wrote {}", final_path.display());
    Ok(())
}
