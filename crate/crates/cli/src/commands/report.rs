use std::path::{Path, PathBuf};

use pinn_influence::geometry::{Point2, PointKind, TrainingPoint};
use pinn_influence::indicators::{aggregate_report, heatmap_grid, mean_abs_influence, TargetRows, TestRow};
use pinn_influence::influence::{read_influence_csv, InfluenceRow, TargetKind};
use pinn_influence::Error;

use super::ensure_dir;
use super::influence::{file_name, read_manifest_config, MANIFEST_FILE, TEST_POINTS_FILE};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

const OUTLINE_SEGMENTS: usize = 64;

fn read_test_points(path: &Path) -> CliResult<Vec<TrainingPoint>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || CliError::from(Error::Schema(format!("{}: malformed line {}", path.display(), k + 2)));
        let idx: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let x: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let y: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let kind = PointKind::parse_tag(rec.get(3).ok_or_else(bad)?)?;
        if idx != k {
            return Err(bad());
        }
        out.push(TrainingPoint {
            point: Point2::new(x, y),
            kind,
        });
    }
    Ok(out)
}

/// Splits a long-format influence file into per-target rows, checking that
/// every target carries the same complete list of training points.
fn split_rows(path: &Path, rows: Vec<InfluenceRow>, train: &mut Option<Vec<Point2>>) -> CliResult<Vec<(String, Vec<f64>)>> {
    let schema = |msg: String| CliError::from(Error::Schema(format!("{}: {msg}", path.display())));
    let mut groups: Vec<(String, Vec<f64>, Vec<Point2>)> = Vec::new();
    for row in rows {
        match groups.last_mut() {
            Some((id, values, pts)) if *id == row.target_id => {
                if row.train_index != values.len() {
                    return Err(schema(format!("train_index {} out of sequence", row.train_index)));
                }
                values.push(row.value);
                pts.push(Point2::new(row.train_x, row.train_y));
            }
            _ => {
                if row.train_index != 0 {
                    return Err(schema(format!("target {} does not start at train_index 0", row.target_id)));
                }
                groups.push((row.target_id, vec![row.value], vec![Point2::new(row.train_x, row.train_y)]));
            }
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (id, values, pts) in groups {
        match train {
            Some(t) if *t != pts => return Err(schema(format!("target {id} lists different training points"))),
            Some(_) => {}
            None => *train = Some(pts),
        }
        out.push((id, values));
    }
    Ok(out)
}

pub fn run(dir: &Path, out: Option<PathBuf>) -> CliResult<()> {
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(CliError::validation(format!("{}: no influence results found", dir.display())));
    }
    let (config, manifest_value) = read_manifest_config(dir)?;
    let lambda = manifest_value["details"]["lambda_used"]
        .as_f64()
        .ok_or_else(|| CliError::from(Error::Schema("influence manifest lacks lambda_used".into())))?;
    let missing: Vec<String> = config
        .influence
        .targets
        .iter()
        .filter(|k| !dir.join(file_name(**k)).exists())
        .map(|k| k.name().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::validation(format!("missing influence files for targets: {}", missing.join(", "))));
    }
    let out = out.unwrap_or_else(|| dir.to_path_buf());
    ensure_dir(&out)?;
    let tests = read_test_points(&dir.join(TEST_POINTS_FILE))?;
    let region = config.region();
    let mut manifest = Manifest::new("report", &config);
    manifest.input(MANIFEST_FILE, &std::fs::read(dir.join(MANIFEST_FILE))?);
    manifest.input(TEST_POINTS_FILE, &std::fs::read(dir.join(TEST_POINTS_FILE))?);

    let mut train: Option<Vec<Point2>> = None;
    let mut all_rows = Vec::new();
    for &kind in &config.influence.targets {
        let path = dir.join(file_name(kind));
        manifest.input(&file_name(kind), &std::fs::read(&path)?);
        let groups = split_rows(&path, read_influence_csv(&path)?, &mut train)?;
        let mut rows = Vec::with_capacity(groups.len());
        for (id, values) in groups {
            let site = if kind == TargetKind::SumSpeed {
                None
            } else {
                let idx = id
                    .strip_prefix(&format!("{kind}:"))
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|i| *i < tests.len())
                    .ok_or_else(|| CliError::from(Error::Schema(format!("bad target_id `{id}`"))))?;
                Some(tests[idx])
            };
            rows.push((site, values));
        }
        all_rows.push((kind, rows));
    }
    let train = train.unwrap_or_default();

    let table: Vec<TargetRows> = all_rows
        .iter()
        .filter(|(k, _)| *k != TargetKind::SumSpeed)
        .map(|(kind, rows)| TargetRows {
            kind: *kind,
            rows: rows
                .iter()
                .filter_map(|(site, values)| site.map(|site| TestRow { site, values: values.clone() }))
                .collect(),
        })
        .collect();
    let report = aggregate_report(&table, &train, &region, &config.tag, lambda)?;
    manifest.write(&out, "report.csv", report.to_csv()?.as_bytes())?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    manifest.write(&out, "report.json", json.as_bytes())?;

    let hm = &config.influence.heatmap;
    for (kind, rows) in &all_rows {
        let agg = mean_abs_influence(rows.iter().map(|(_, v)| v.as_slice()), train.len())?;
        let grid = heatmap_grid(&config.domain, &train, &agg, hm.nx, hm.ny)?;
        manifest.write(&out, &format!("heatmap_{}.csv", kind.name()), grid.to_csv()?.as_bytes())?;
        if manifest.outputs.contains_key("heatmap_grid.json") {
            continue;
        }
        let mut side = serde_json::to_string_pretty(&grid.sidecar(&region, OUTLINE_SEGMENTS))?;
        side.push('\n');
        manifest.write(&out, "heatmap_grid.json", side.as_bytes())?;
    }
    manifest.detail("lambda", lambda);
    manifest.save(&out, "report_manifest.json")?;
    if let Some(r) = report.get(TargetKind::U1, pinn_influence::indicators::TestSubset::All) {
        eprintln!("{}: DI(u1) {:?} OI(u1) {:?}", config.tag, r.mean_di, r.mean_oi);
    }
    Ok(())
}
