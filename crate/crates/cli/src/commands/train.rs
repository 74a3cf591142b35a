use std::path::{Path, PathBuf};

use pinn_influence::model::init_params;
use pinn_influence::training::train;

use super::ensure_dir;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

pub fn run(config_path: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let (config, raw) = RunConfig::load(config_path)?;
    let out = out.unwrap_or_else(|| config.output_dir.clone());
    let ck_dir = out.join("checkpoints");
    ensure_dir(&ck_dir)?;
    let problem = config.problem();
    let colloc = config.collocation()?;
    let mut manifest = Manifest::new("train", &config);
    manifest.input("config", &raw);

    let mut written = Vec::new();
    let mut sink = |ck: &pinn_influence::model::Checkpoint| {
        let name = format!("checkpoints/ckpt_{}_{:06}.json", ck.phase.name(), ck.step);
        let text = ck.to_json()?;
        std::fs::write(out.join(&name), &text)?;
        written.push((name, text));
        Ok(())
    };
    let (trail, outcome) = train(&config.train, &problem, &colloc, init_params(&config.model), &config.tag, &mut sink);
    for (name, text) in &written {
        manifest.record(name, text.as_bytes());
    }
    manifest.write(&out, "loss_history.csv", trail.history_csv()?.as_bytes())?;
    manifest.detail("n_params", config.model.num_params());
    manifest.detail("n_train", colloc.len());
    if let Err(e) = outcome {
        manifest.detail("status", "aborted");
        manifest.detail("error", e.to_string());
        manifest.save(&out, "manifest.json")?;
        return Err(CliError::from(e));
    }
    let last = trail.history.last();
    manifest.detail("status", "complete");
    manifest.detail("final_total", last.map(|r| r.total));
    manifest.detail("final_l_pde", last.map(|r| r.l_pde));
    manifest.detail("final_l_bc", last.map(|r| r.l_bc));
    let final_ck = trail
        .final_checkpoint()
        .ok_or_else(|| CliError::validation("training produced no final checkpoint"))?;
    manifest.write(&out, "checkpoint_final.json", final_ck.to_json()?.as_bytes())?;
    manifest.save(&out, "manifest.json")?;
    eprintln!(
        "trained {} ({} params, {} points): final loss {:e}",
        config.tag,
        config.model.num_params(),
        colloc.len(),
        last.map_or(f64::NAN, |r| r.total)
    );
    Ok(())
}
