use std::path::{Path, PathBuf};

use pinn_influence::geometry::Point2;
use pinn_influence::model::predict;
use pinn_influence::Error;
use serde::Deserialize;

use super::{ensure_dir, load_checkpoint};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

#[derive(Debug, Deserialize)]
struct Reference {
    x: f64,
    y: f64,
    u1: f64,
    u2: f64,
    p: f64,
}

/// Absolute errors of the network against a reference solution sampled at
/// arbitrary points (`x,y,u1,u2,p`).
pub fn run(config_path: &Path, checkpoint: &Path, reference: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let (config, raw) = RunConfig::load(config_path)?;
    let (params, ck_raw) = load_checkpoint(checkpoint, &config)?;
    let ref_raw = std::fs::read(reference).map_err(|e| CliError::validation(format!("{}: {e}", reference.display())))?;
    let mut r = csv::Reader::from_reader(ref_raw.as_slice());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "abs_err_u1", "abs_err_u2", "abs_err_p"])?;
    for rec in r.deserialize() {
        let row: Reference = rec.map_err(|e| Error::Schema(format!("{}: {e}", reference.display())))?;
        let [u1, u2, p] = predict(&params, Point2::new(row.x, row.y), &config.model)?;
        w.write_record([
            format!("{:?}", row.x),
            format!("{:?}", row.y),
            format!("{:?}", (u1 - row.u1).abs()),
            format!("{:?}", (u2 - row.u2).abs()),
            format!("{:?}", (p - row.p).abs()),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::from(e.into_error()))?;
    let out = out.unwrap_or_else(|| config.output_dir.join("compare"));
    ensure_dir(&out)?;
    let mut manifest = Manifest::new("compare", &config);
    manifest.input("config", &raw);
    manifest.input("checkpoint", &ck_raw);
    manifest.input("reference", &ref_raw);
    manifest.write(&out, "errors.csv", &bytes)?;
    manifest.save(&out, "compare_manifest.json")?;
    Ok(())
}
