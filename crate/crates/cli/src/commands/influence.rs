use std::path::{Path, PathBuf};

use pinn_influence::geometry::{PointKind, TrainingPoint};
use pinn_influence::influence::{
    HessianOperator, HessianOptions, InfluenceEngine, Objective, PinnObjective, PinnTarget, TargetFunction, TargetKind,
};
use rayon::prelude::*;

use super::{ensure_dir, load_checkpoint};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::manifest::Manifest;

pub struct Options {
    pub config: PathBuf,
    pub checkpoint: PathBuf,
    pub out: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub targets: Option<Vec<TargetKind>>,
}

pub fn file_name(kind: TargetKind) -> String {
    format!("influence_{}.csv", kind.name())
}

pub const TEST_POINTS_FILE: &str = "test_points.csv";
pub const MANIFEST_FILE: &str = "influence_manifest.json";

/// Test sites a target is evaluated at, with their test-set indices.
fn sites_for(kind: TargetKind, tests: &[TrainingPoint]) -> Vec<(usize, TrainingPoint)> {
    tests
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, t)| kind.applies_to(t.kind))
        .collect()
}

fn csv_string(
    target_ids: &[String],
    rows: &[Vec<f64>],
    train: &[TrainingPoint],
) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["target_id", "train_index", "train_x", "train_y", "train_tag", "value"])?;
    for (id, row) in target_ids.iter().zip(rows) {
        for (i, (v, tp)) in row.iter().zip(train).enumerate() {
            w.write_record([
                id.as_str(),
                &i.to_string(),
                &format!("{:?}", tp.point.x),
                &format!("{:?}", tp.point.y),
                tp.kind.tag(),
                &format!("{v:?}"),
            ])?;
        }
    }
    w.into_inner().map_err(|e| std::io::Error::from(e.into_error()).into())
}

fn test_points_csv(tests: &[TrainingPoint]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["test_index", "x", "y", "tag"])?;
    for (i, t) in tests.iter().enumerate() {
        w.write_record([i.to_string(), format!("{:?}", t.point.x), format!("{:?}", t.point.y), t.kind.tag().into()])?;
    }
    w.into_inner().map_err(|e| std::io::Error::from(e.into_error()).into())
}

pub fn run(opts: Options) -> CliResult<()> {
    let (mut config, raw) = RunConfig::load(&opts.config)?;
    if let Some(l) = opts.lambda {
        config.influence.lambda = Some(l);
    }
    if let Some(t) = opts.targets {
        config.influence.targets = t;
    }
    config.validate()?;
    let (params, ck_raw) = load_checkpoint(&opts.checkpoint, &config)?;
    let out = opts.out.unwrap_or_else(|| config.output_dir.join("influence"));
    ensure_dir(&out)?;

    let objective = PinnObjective::new(config.problem(), config.collocation()?)?;
    let hessian = HessianOperator::assemble(
        &objective,
        params.as_slice(),
        &HessianOptions {
            lambda: config.influence.lambda,
            ..HessianOptions::default()
        },
    )?;
    let engine = InfluenceEngine::new(&objective, params.as_slice(), &hessian)?;
    let tests = config.test_points()?;
    let train = objective.points();

    let mut manifest = Manifest::new("influence", &config);
    manifest.input("config", &raw);
    manifest.input("checkpoint", &ck_raw);
    manifest.write(&out, TEST_POINTS_FILE, &test_points_csv(&tests)?)?;

    for &kind in &config.influence.targets {
        let (ids, rows): (Vec<String>, Vec<Vec<f64>>) = if kind == TargetKind::SumSpeed {
            let points = tests.iter().filter(|t| t.kind == PointKind::Interior).map(|t| t.point).collect();
            let target = PinnTarget {
                function: TargetFunction::SumSpeed { points },
                problem: &objective.problem,
            };
            (vec!["sum_speed:set".into()], vec![engine.row(&target)?])
        } else {
            let sites = sites_for(kind, &tests);
            let rows = sites
                .par_iter()
                .map(|(_, site)| {
                    let target = PinnTarget {
                        function: TargetFunction::at(kind, *site)?,
                        problem: &objective.problem,
                    };
                    engine.row(&target)
                })
                .collect::<pinn_influence::Result<Vec<_>>>()?;
            (sites.iter().map(|(i, _)| format!("{kind}:{i}")).collect(), rows)
        };
        manifest.write(&out, &file_name(kind), &csv_string(&ids, &rows, train)?)?;
    }

    let (eig_min, eig_max) = hessian.eigen_extremes();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "value"])?;
    for (k, v) in [
        ("lambda", hessian.lambda()),
        ("escalations", hessian.escalations() as f64),
        ("eigenvalue_min", eig_min),
        ("eigenvalue_max", eig_max),
        ("trace", hessian.matrix().trace()),
        ("raw_asymmetry", hessian.raw_asymmetry()),
        ("n_params", objective.num_params() as f64),
    ] {
        w.write_record([k.to_string(), format!("{v:?}")])?;
    }
    let diag = w.into_inner().map_err(|e| std::io::Error::from(e.into_error()))?;
    manifest.write(&out, "hessian_diag.csv", &diag)?;
    manifest.detail("lambda_override", opts.lambda);
    manifest.detail("lambda_used", hessian.lambda());
    manifest.detail("params_fingerprint", hessian.fingerprint());
    manifest.detail("n_train", train.len());
    manifest.detail("n_test", tests.len());
    manifest.save(&out, MANIFEST_FILE)?;
    eprintln!(
        "influence for {} targets at {} test points written to {} (lambda {:e})",
        config.influence.targets.len(),
        tests.len(),
        out.display(),
        hessian.lambda()
    );
    Ok(())
}

pub fn read_manifest_config(dir: &Path) -> CliResult<(RunConfig, serde_json::Value)> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read(&path)
        .map_err(|e| crate::error::CliError::validation(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_slice(&text)?;
    let config = RunConfig::parse(serde_json::to_string(&value["config"])?.as_bytes())?;
    Ok((config, value))
}
