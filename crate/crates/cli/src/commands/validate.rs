use std::path::PathBuf;

use pinn_influence::geometry::PointKind;
use pinn_influence::influence::{
    HessianOperator, HessianOptions, InfluenceEngine, Objective, PinnObjective, PinnTarget, RetrainOracle,
    TargetFunction, TargetKind,
};
use pinn_influence::stats::spearman;
use pinn_influence::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ensure_dir, load_checkpoint};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

/// Largest model and training set the oracle runs on without `--force`.
pub const MAX_ORACLE_PARAMS: usize = 400;
pub const MAX_ORACLE_POINTS: usize = 64;

pub struct Options {
    pub config: PathBuf,
    pub checkpoint: PathBuf,
    pub out: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub targets: Option<Vec<TargetKind>>,
    pub force: bool,
}

#[derive(Debug, Serialize)]
struct Correlation {
    target_id: String,
    x: f64,
    y: f64,
    /// `None` when either side is constant.
    spearman: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    epsilon: f64,
    lambda: f64,
    guard_overridden: bool,
    n_train: usize,
    n_oracle_unavailable: usize,
    min_spearman: Option<f64>,
    correlations: Vec<Correlation>,
}

pub fn run(opts: Options) -> CliResult<()> {
    let (mut config, raw) = RunConfig::load(&opts.config)?;
    if let Some(t) = opts.targets {
        config.validation.targets = t;
    }
    if let Some(l) = opts.lambda {
        config.influence.lambda = Some(l);
    }
    if let Some(e) = opts.epsilon {
        config.validation.epsilon = Some(e);
    }
    config.validate()?;
    let (params, ck_raw) = load_checkpoint(&opts.checkpoint, &config)?;
    let n_params = config.model.num_params();
    let n_train = config.sampling.n_pde + config.sampling.n_bc;
    let over = n_params > MAX_ORACLE_PARAMS || n_train > MAX_ORACLE_POINTS;
    if over && !opts.force {
        return Err(CliError::guard(format!(
            "oracle guard: {n_params} params / {n_train} points exceeds {MAX_ORACLE_PARAMS} / {MAX_ORACLE_POINTS}; \
             shrink the model or pass --force"
        )));
    }
    let out = opts.out.unwrap_or_else(|| config.output_dir.join("validate"));
    ensure_dir(&out)?;

    let objective = PinnObjective::new(config.problem(), config.collocation()?)?;
    let theta = params.as_slice();
    let hessian = HessianOperator::assemble(
        &objective,
        theta,
        &HessianOptions {
            lambda: config.influence.lambda,
            ..HessianOptions::default()
        },
    )?;
    let engine = InfluenceEngine::new(&objective, theta, &hessian)?;
    let oracle = RetrainOracle::new(&objective, theta, hessian.lambda())?;
    let epsilon = config.validation.epsilon.unwrap_or(1.0 / objective.len() as f64);

    let interior: Vec<_> = config
        .test_points()?
        .into_iter()
        .filter(|t| t.kind == PointKind::Interior)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.validation.seed);
    let k = config.validation.n_test_points.min(interior.len());
    let mut picks = rand::seq::index::sample(&mut rng, interior.len(), k).into_vec();
    picks.sort_unstable();

    let mut targets = Vec::new();
    for &kind in &config.validation.targets {
        for &i in &picks {
            let site = interior[i];
            if !kind.applies_to(site.kind) {
                continue;
            }
            let target = PinnTarget {
                function: TargetFunction::at(kind, site)?,
                problem: &objective.problem,
            };
            let solve = engine.solve_target(&target)?;
            targets.push((format!("{kind}:{i}"), site, target, solve));
        }
    }

    let train = objective.points().to_vec();
    let mut predicted = vec![vec![0.0; train.len()]; targets.len()];
    let mut actual = vec![vec![None; train.len()]; targets.len()];
    let mut unavailable = 0;
    for (j, x) in train.iter().enumerate() {
        let retrained = match oracle.retrain(&[], std::slice::from_ref(x), epsilon) {
            Ok(r) => Some(r),
            Err(Error::OracleUnavailable(msg)) => {
                eprintln!("oracle unavailable for training point {j}: {msg}");
                unavailable += 1;
                None
            }
            Err(e) => return Err(e.into()),
        };
        for (t, (_, _, target, solve)) in targets.iter().enumerate() {
            predicted[t][j] = -epsilon * engine.influence_of(solve, j)?;
            if let Some(r) = &retrained {
                actual[t][j] = Some(oracle.delta_for(target, r)?.delta);
            }
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["target_id", "train_index", "predicted", "actual"])?;
    let mut correlations = Vec::new();
    for (t, (id, site, _, _)) in targets.iter().enumerate() {
        let mut pa = Vec::new();
        let mut aa = Vec::new();
        for j in 0..train.len() {
            let a = actual[t][j];
            w.write_record([
                id.clone(),
                j.to_string(),
                format!("{:?}", predicted[t][j]),
                a.map(|v| format!("{v:?}")).unwrap_or_default(),
            ])?;
            if let Some(a) = a {
                pa.push(predicted[t][j]);
                aa.push(a);
            }
        }
        correlations.push(Correlation {
            target_id: id.clone(),
            x: site.point.x,
            y: site.point.y,
            spearman: spearman(&pa, &aa),
        });
    }
    let csv_bytes = w.into_inner().map_err(|e| std::io::Error::from(e.into_error()))?;
    let min_spearman = correlations
        .iter()
        .map(|c| c.spearman)
        .try_fold(f64::INFINITY, |m, s| s.map(|s| m.min(s)))
        .filter(|m| m.is_finite());
    let summary = Summary {
        epsilon,
        lambda: hessian.lambda(),
        guard_overridden: over,
        n_train: train.len(),
        n_oracle_unavailable: unavailable,
        min_spearman,
        correlations,
    };

    let mut manifest = Manifest::new("validate", &config);
    manifest.input("config", &raw);
    manifest.input("checkpoint", &ck_raw);
    manifest.write(&out, "oracle.csv", &csv_bytes)?;
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    manifest.write(&out, "oracle_summary.json", json.as_bytes())?;
    if over {
        manifest.detail("status", "guard overridden");
    }
    manifest.save(&out, "validate_manifest.json")?;
    match summary.min_spearman {
        Some(m) => eprintln!("oracle comparison: minimum Spearman {m:.4} over {} targets", summary.correlations.len()),
        None => eprintln!("oracle comparison: correlation undefined"),
    }
    Ok(())
}
