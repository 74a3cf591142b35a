//! Directional and region indicators over influence rows, their test-set
//! aggregates and the influence heatmap.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::geometry::{DomainSpec, Point2, PointKind, TrainingPoint};
use crate::influence::TargetKind;

/// Closed disc in the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegionSpec {
    Disc { center: Point2, radius: f64 },
}

impl RegionSpec {
    pub fn disc(center: Point2, radius: f64) -> Result<Self> {
        let r = RegionSpec::Disc { center, radius };
        r.validate()?;
        Ok(r)
    }

    /// Disc around the cylinder with `factor` times its radius.
    pub fn around_cylinder(domain: &DomainSpec, factor: f64) -> Result<Self> {
        Self::disc(domain.cylinder_center, factor * domain.cylinder_radius)
    }

    pub fn validate(&self) -> Result<()> {
        let RegionSpec::Disc { center, radius } = self;
        if !(radius.is_finite() && *radius > 0.0 && center.x.is_finite() && center.y.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "influence.region.radius".into(),
                reason: format!("must be positive and finite, got {radius}"),
            });
        }
        Ok(())
    }

    pub fn contains(&self, p: Point2) -> bool {
        let RegionSpec::Disc { center, radius } = self;
        center.distance(&p) <= *radius
    }

    /// Closed polyline of `segments + 1` points tracing the boundary.
    pub fn outline(&self, segments: usize) -> Vec<Point2> {
        let RegionSpec::Disc { center, radius } = self;
        (0..=segments)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / segments as f64;
                Point2::new(center.x + radius * t.cos(), center.y + radius * t.sin())
            })
            .collect()
    }
}

fn share(row: &[f64], train: &[Point2], select: impl Fn(Point2) -> bool) -> Result<f64> {
    if row.len() != train.len() {
        return Err(contract("influence row must cover every training point"));
    }
    let mut selected = 0.0;
    let mut total = 0.0;
    for (v, p) in row.iter().zip(train) {
        let a = v.abs();
        total += a;
        if select(*p) {
            selected += a;
        }
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::UndefinedIndicator);
    }
    Ok(selected / total)
}

/// Share of absolute influence carried by training points strictly
/// downstream (larger x) of the test point.
pub fn directional_indicator(test: Point2, row: &[f64], train: &[Point2]) -> Result<f64> {
    share(row, train, |p| p.x > test.x)
}

/// Share of absolute influence carried by training points inside `region`.
pub fn region_indicator(region: &RegionSpec, row: &[f64], train: &[Point2]) -> Result<f64> {
    share(row, train, |p| region.contains(p))
}

/// Which test points enter an aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestSubset {
    All,
    Interior,
    Boundary,
}

impl TestSubset {
    pub const ALL: [TestSubset; 3] = [TestSubset::All, TestSubset::Interior, TestSubset::Boundary];

    pub fn name(self) -> &'static str {
        match self {
            TestSubset::All => "all",
            TestSubset::Interior => "interior",
            TestSubset::Boundary => "boundary",
        }
    }

    pub fn admits(self, kind: PointKind) -> bool {
        match self {
            TestSubset::All => true,
            TestSubset::Interior => kind == PointKind::Interior,
            TestSubset::Boundary => kind != PointKind::Interior,
        }
    }
}

impl fmt::Display for TestSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Influence of every training point on one target at one test site.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRow {
    pub site: TrainingPoint,
    pub values: Vec<f64>,
}

/// All test rows computed for one target kind.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRows {
    pub kind: TargetKind,
    pub rows: Vec<TestRow>,
}

/// Mean indicators for one target kind over one test subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub target: TargetKind,
    pub subset: TestSubset,
    /// `None` when no test row had a defined indicator.
    pub mean_di: Option<f64>,
    pub mean_oi: Option<f64>,
    pub n_used: usize,
    /// Rows with zero total influence.
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub model_tag: String,
    pub lambda: f64,
    pub region: RegionSpec,
    pub rows: Vec<IndicatorRow>,
}

impl IndicatorReport {
    pub fn get(&self, target: TargetKind, subset: TestSubset) -> Option<&IndicatorRow> {
        self.rows.iter().find(|r| r.target == target && r.subset == subset)
    }

    /// Table layout: one line per (subset, target), targets in table order.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["subset", "target", "mean_di", "mean_oi", "n_used", "n_excluded"])?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.subset.name().to_string(),
                r.target.name().to_string(),
                fmt(r.mean_di),
                fmt(r.mean_oi),
                r.n_used.to_string(),
                r.n_excluded.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Mean DI and OI per target kind and test subset. Rows come out ordered by
/// subset (all, interior, boundary) and then by target in table order.
pub fn aggregate_report(
    targets: &[TargetRows],
    train: &[Point2],
    region: &RegionSpec,
    model_tag: &str,
    lambda: f64,
) -> Result<IndicatorReport> {
    region.validate()?;
    let mut per_target = Vec::new();
    for t in targets {
        let mut scored = Vec::with_capacity(t.rows.len());
        for row in &t.rows {
            let di = directional_indicator(row.site.point, &row.values, train);
            let oi = region_indicator(region, &row.values, train);
            match (di, oi) {
                (Ok(d), Ok(o)) => scored.push((row.site.kind, Some((d, o)))),
                (Err(Error::UndefinedIndicator), _) | (_, Err(Error::UndefinedIndicator)) => {
                    scored.push((row.site.kind, None))
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
        per_target.push((t.kind, scored));
    }
    let mut rows = Vec::new();
    for subset in TestSubset::ALL {
        for kind in TargetKind::TABLE {
            let Some((_, scored)) = per_target.iter().find(|(k, _)| *k == kind) else {
                continue;
            };
            let mut used = 0;
            let mut excluded = 0;
            let (mut sd, mut so) = (0.0, 0.0);
            for (_, s) in scored.iter().filter(|(site, _)| subset.admits(*site)) {
                match s {
                    Some((d, o)) => {
                        used += 1;
                        sd += d;
                        so += o;
                    }
                    None => excluded += 1,
                }
            }
            let mean = |s: f64| (used > 0).then(|| s / used as f64);
            rows.push(IndicatorRow {
                target: kind,
                subset,
                mean_di: mean(sd),
                mean_oi: mean(so),
                n_used: used,
                n_excluded: excluded,
            });
        }
    }
    Ok(IndicatorReport {
        model_tag: model_tag.to_string(),
        lambda,
        region: *region,
        rows,
    })
}

/// Values below this are clamped before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// Regular raster over the domain rectangle holding the mean `log10 |Inf|`
/// of the training points in each cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Row-major with `y` increasing down the rows; `None` marks empty cells.
    pub cells: Vec<Option<f64>>,
}

impl HeatmapGrid {
    pub fn cell_width(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn cell_height(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn get(&self, ix: usize, iy: usize) -> Option<f64> {
        self.cells[iy * self.nx + ix]
    }

    /// `ny` lines of `nx` values; empty cells are left blank.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for row in self.cells.chunks(self.nx) {
            w.write_record(row.iter().map(|c| c.map(|v| format!("{v:?}")).unwrap_or_default()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Grid geometry plus the region outline, for plotting.
    pub fn sidecar(&self, region: &RegionSpec, outline_segments: usize) -> HeatmapSidecar {
        HeatmapSidecar {
            nx: self.nx,
            ny: self.ny,
            x_min: self.x_min,
            x_max: self.x_max,
            y_min: self.y_min,
            y_max: self.y_max,
            cell_width: self.cell_width(),
            cell_height: self.cell_height(),
            region: *region,
            outline: region.outline(outline_segments).iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell_width: f64,
    pub cell_height: f64,
    pub region: RegionSpec,
    pub outline: Vec<[f64; 2]>,
}

/// Bins training points into an `nx` by `ny` grid over the domain rectangle
/// and averages `log10 |value|` per cell.
pub fn heatmap_grid(domain: &DomainSpec, train: &[Point2], values: &[f64], nx: usize, ny: usize) -> Result<HeatmapGrid> {
    if nx == 0 || ny == 0 {
        return Err(contract("heatmap grid needs at least one cell per axis"));
    }
    if train.len() != values.len() {
        return Err(contract("one value per training point required"));
    }
    let mut sums = vec![0.0; nx * ny];
    let mut counts = vec![0usize; nx * ny];
    let (w, h) = (domain.width() / nx as f64, domain.height() / ny as f64);
    for (p, v) in train.iter().zip(values) {
        let ix = (((p.x - domain.x_min) / w).floor().max(0.0) as usize).min(nx - 1);
        let iy = (((p.y - domain.y_min) / h).floor().max(0.0) as usize).min(ny - 1);
        sums[iy * nx + ix] += v.abs().max(LOG_FLOOR).log10();
        counts[iy * nx + ix] += 1;
    }
    Ok(HeatmapGrid {
        nx,
        ny,
        x_min: domain.x_min,
        x_max: domain.x_max,
        y_min: domain.y_min,
        y_max: domain.y_max,
        cells: sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect(),
    })
}

/// Mean absolute influence of each training point over a set of rows.
pub fn mean_abs_influence<'a>(rows: impl IntoIterator<Item = &'a [f64]>, n_train: usize) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; n_train];
    let mut count = 0usize;
    for r in rows {
        if r.len() != n_train {
            return Err(contract("influence row must cover every training point"));
        }
        acc.iter_mut().zip(r).for_each(|(a, v)| *a += v.abs());
        count += 1;
    }
    if count > 0 {
        acc.iter_mut().for_each(|a| *a /= count as f64);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<Point2> {
        (0..n).map(|i| Point2::new(i as f64 * 0.1, 0.2)).collect()
    }

    #[test]
    fn uniform_row_counts_downstream_points() {
        let train = line(10);
        let row = vec![2.5; 10];
        let di = directional_indicator(Point2::new(0.55, 0.1), &row, &train).unwrap();
        assert_eq!(di, 0.4);
    }

    #[test]
    fn downstream_mass_and_outlet_extremes() {
        let train = line(4);
        let di = directional_indicator(Point2::new(0.05, 0.1), &[0.0, 1.0, -3.0, 2.0], &train).unwrap();
        assert_eq!(di, 1.0);
        assert_eq!(directional_indicator(Point2::new(2.2, 0.1), &[1.0; 4], &train).unwrap(), 0.0);
    }

    #[test]
    fn zero_row_is_undefined() {
        let train = line(3);
        assert!(matches!(
            directional_indicator(Point2::new(0.0, 0.0), &[0.0; 3], &train),
            Err(Error::UndefinedIndicator)
        ));
    }

    #[test]
    fn region_extremes() {
        let train = line(10);
        let row = vec![1.0; 10];
        let empty = RegionSpec::disc(Point2::new(5.0, 5.0), 0.1).unwrap();
        assert_eq!(region_indicator(&empty, &row, &train).unwrap(), 0.0);
        let full = RegionSpec::disc(Point2::new(1.0, 0.2), 10.0).unwrap();
        assert_eq!(region_indicator(&full, &row, &train).unwrap(), 1.0);
        let three = RegionSpec::disc(Point2::new(0.1, 0.2), 0.1).unwrap();
        assert_eq!(region_indicator(&three, &row, &train).unwrap(), 0.3);
    }

    #[test]
    fn region_rejects_nonpositive_radius() {
        assert!(RegionSpec::disc(Point2::new(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn default_grid_has_square_cells() {
        let d = DomainSpec::default();
        let g = heatmap_grid(&d, &[], &[], 44, 8).unwrap();
        assert!((g.cell_width() - 0.05).abs() < 1e-12);
        assert!((g.cell_height() - 0.05125).abs() < 1e-12);
        assert!(g.cells.iter().all(Option::is_none));
    }

    #[test]
    fn heatmap_cells_average_logs() {
        let d = DomainSpec::default();
        let pts = [Point2::new(0.01, 0.01), Point2::new(0.02, 0.02), Point2::new(2.2, 0.41)];
        let g = heatmap_grid(&d, &pts, &[10.0, 1000.0, 0.0], 44, 8).unwrap();
        assert_eq!(g.get(0, 0), Some(2.0));
        assert_eq!(g.get(43, 7), Some(-300.0));
        assert_eq!(g.get(1, 0), None);
    }

    #[test]
    fn report_of_single_point_equals_its_indicators() {
        let train = line(10);
        let site = TrainingPoint {
            point: Point2::new(0.35, 0.2),
            kind: PointKind::Interior,
        };
        let values: Vec<f64> = (0..10).map(|i| (i as f64 - 4.0) * 0.3).collect();
        let region = RegionSpec::disc(Point2::new(0.2, 0.2), 0.15).unwrap();
        let rows = [TargetRows {
            kind: TargetKind::U1,
            rows: vec![TestRow { site, values: values.clone() }],
        }];
        let rep = aggregate_report(&rows, &train, &region, "m", 1e-6).unwrap();
        let all = rep.get(TargetKind::U1, TestSubset::All).unwrap();
        assert_eq!(all.mean_di, Some(directional_indicator(site.point, &values, &train).unwrap()));
        assert_eq!(all.mean_oi, Some(region_indicator(&region, &values, &train).unwrap()));
        let b = rep.get(TargetKind::U1, TestSubset::Boundary).unwrap();
        assert_eq!((b.mean_di, b.n_used), (None, 0));
    }
}
