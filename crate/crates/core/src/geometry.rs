//! Cavity-with-cylinder domain, low-discrepancy collocation sampling and
//! spatial predicates.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Tolerance for "lies on the boundary".
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Rectangle `[x_min, x_max] x [y_min, y_max]` minus an open cylinder disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cylinder_center: Point2,
    pub cylinder_radius: f64,
}

impl Default for DomainSpec {
    /// The 2.2 m x 0.41 m channel with a 0.05 m cylinder at (0.2, 0.2).
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 2.2,
            y_min: 0.0,
            y_max: 0.41,
            cylinder_center: Point2::new(0.2, 0.2),
            cylinder_radius: 0.05,
        }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::InvalidConfig {
                field: format!("domain.{field}"),
                reason: reason.into(),
            })
        };
        let all = [
            self.x_min,
            self.x_max,
            self.y_min,
            self.y_max,
            self.cylinder_center.x,
            self.cylinder_center.y,
            self.cylinder_radius,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("*", "non-finite geometry value");
        }
        if self.x_min >= self.x_max {
            return bad("x_max", "must exceed x_min");
        }
        if self.y_min >= self.y_max {
            return bad("y_max", "must exceed y_min");
        }
        if self.cylinder_radius <= 0.0 {
            return bad("cylinder_radius", "must be positive");
        }
        let c = self.cylinder_center;
        let r = self.cylinder_radius;
        if c.x - r <= self.x_min || c.x + r >= self.x_max || c.y - r <= self.y_min || c.y + r >= self.y_max
        {
            return bad("cylinder_center", "cylinder disc must lie strictly inside the rectangle");
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Strictly inside the rectangle and strictly outside the cylinder.
    pub fn contains_strict(&self, p: Point2) -> bool {
        p.x > self.x_min
            && p.x < self.x_max
            && p.y > self.y_min
            && p.y < self.y_max
            && p.distance(&self.cylinder_center) > self.cylinder_radius
    }

    /// Segment a point lies on (within [`BOUNDARY_TOL`]), using the corner
    /// convention that corners belong to the bottom/top walls.
    pub fn segment_of(&self, p: Point2) -> Option<BoundarySegment> {
        let tol = BOUNDARY_TOL;
        let in_x = p.x >= self.x_min - tol && p.x <= self.x_max + tol;
        let in_y = p.y >= self.y_min - tol && p.y <= self.y_max + tol;
        if in_x && (p.y - self.y_min).abs() <= tol {
            Some(BoundarySegment::Bottom)
        } else if in_x && (p.y - self.y_max).abs() <= tol {
            Some(BoundarySegment::Top)
        } else if in_y && (p.x - self.x_min).abs() <= tol {
            Some(BoundarySegment::Inlet)
        } else if in_y && (p.x - self.x_max).abs() <= tol {
            Some(BoundarySegment::Outlet)
        } else if (p.distance(&self.cylinder_center) - self.cylinder_radius).abs() <= tol {
            Some(BoundarySegment::Cylinder)
        } else {
            None
        }
    }

    pub fn segment_length(&self, seg: BoundarySegment) -> f64 {
        match seg {
            BoundarySegment::Bottom | BoundarySegment::Top => self.width(),
            BoundarySegment::Inlet | BoundarySegment::Outlet => self.height(),
            BoundarySegment::Cylinder => 2.0 * PI * self.cylinder_radius,
        }
    }

    /// Rectangle perimeter plus cylinder circumference.
    pub fn boundary_length(&self) -> f64 {
        2.0 * (self.width() + self.height()) + 2.0 * PI * self.cylinder_radius
    }

    /// Point at arclength `s` along the closed boundary.
    ///
    /// The walk starts at `(x_min, y_min)`, runs counter-clockwise around the
    /// rectangle (bottom, outlet, top, inlet) and then around the cylinder
    /// from angle 0. Rectangle corners are assigned to the bottom/top walls.
    pub fn boundary_point(&self, s: f64) -> (Point2, BoundarySegment) {
        let (w, h) = (self.width(), self.height());
        let rect = 2.0 * (w + h);
        let s = s.rem_euclid(self.boundary_length());
        if s <= w {
            (Point2::new(self.x_min + s, self.y_min), BoundarySegment::Bottom)
        } else if s < w + h {
            (Point2::new(self.x_max, self.y_min + (s - w)), BoundarySegment::Outlet)
        } else if s <= 2.0 * w + h {
            (Point2::new(self.x_max - (s - w - h), self.y_max), BoundarySegment::Top)
        } else if s < rect {
            (Point2::new(self.x_min, self.y_max - (s - 2.0 * w - h)), BoundarySegment::Inlet)
        } else {
            let angle = (s - rect) / self.cylinder_radius;
            let c = self.cylinder_center;
            (
                Point2::new(
                    c.x + self.cylinder_radius * angle.cos(),
                    c.y + self.cylinder_radius * angle.sin(),
                ),
                BoundarySegment::Cylinder,
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundarySegment {
    Inlet,
    Outlet,
    Top,
    Bottom,
    Cylinder,
}

impl BoundarySegment {
    pub const ALL: [BoundarySegment; 5] = [
        BoundarySegment::Inlet,
        BoundarySegment::Outlet,
        BoundarySegment::Top,
        BoundarySegment::Bottom,
        BoundarySegment::Cylinder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundarySegment::Inlet => "inlet",
            BoundarySegment::Outlet => "outlet",
            BoundarySegment::Top => "top",
            BoundarySegment::Bottom => "bottom",
            BoundarySegment::Cylinder => "cylinder",
        }
    }
}

impl fmt::Display for BoundarySegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundarySegment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundarySegment::ALL
            .into_iter()
            .find(|seg| seg.name() == s)
            .ok_or_else(|| contract(format!("unknown boundary segment tag `{s}`")))
    }
}

/// Where a collocation point sits, which decides the residual it carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointKind {
    Interior,
    Boundary(BoundarySegment),
}

impl PointKind {
    pub fn tag(&self) -> &'static str {
        match self {
            PointKind::Interior => "interior",
            PointKind::Boundary(seg) => seg.name(),
        }
    }

    pub fn parse_tag(s: &str) -> Result<Self> {
        if s == "interior" {
            Ok(PointKind::Interior)
        } else {
            s.parse().map(PointKind::Boundary)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub point: Point2,
    pub kind: PointKind,
}

/// Training points, interior first, then boundary.
///
/// Per-point loss weights follow the composite-loss normalization:
/// `N / N_pde` for interior points and `N / N_bc` for boundary points, so
/// `(1/N) * sum(w_i * l_i)` equals the sum of the two group means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationSet {
    pub interior: Vec<Point2>,
    pub boundary: Vec<(Point2, BoundarySegment)>,
}

impl CollocationSet {
    pub fn new(interior: Vec<Point2>, boundary: Vec<(Point2, BoundarySegment)>) -> Self {
        Self { interior, boundary }
    }

    /// Samples `n_pde` interior and `n_bc` boundary points.
    pub fn sample(spec: &DomainSpec, n_pde: usize, n_bc: usize) -> Result<Self> {
        Ok(Self::new(sample_interior(spec, n_pde)?, sample_boundary(spec, n_bc)?))
    }

    pub fn n_pde(&self) -> usize {
        self.interior.len()
    }

    pub fn n_bc(&self) -> usize {
        self.boundary.len()
    }

    pub fn len(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Option<TrainingPoint> {
        if i < self.interior.len() {
            Some(TrainingPoint {
                point: self.interior[i],
                kind: PointKind::Interior,
            })
        } else {
            self.boundary
                .get(i - self.interior.len())
                .map(|&(point, seg)| TrainingPoint {
                    point,
                    kind: PointKind::Boundary(seg),
                })
        }
    }

    pub fn points(&self) -> Vec<TrainingPoint> {
        (0..self.len()).filter_map(|i| self.get(i)).collect()
    }

    pub fn locations(&self) -> Vec<Point2> {
        self.interior
            .iter()
            .copied()
            .chain(self.boundary.iter().map(|(p, _)| *p))
            .collect()
    }

    /// Loss weight for a point of the given kind under this set's group sizes.
    pub fn weight_for(&self, kind: PointKind) -> f64 {
        let n = self.len() as f64;
        match kind {
            PointKind::Interior => n / self.n_pde() as f64,
            PointKind::Boundary(_) => n / self.n_bc() as f64,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.points().iter().map(|p| self.weight_for(p.kind)).collect()
    }

    pub fn index_of(&self, tp: &TrainingPoint) -> Option<usize> {
        (0..self.len()).find(|&i| self.get(i).as_ref() == Some(tp))
    }

    /// Checks the set invariants against a domain.
    pub fn validate(&self, spec: &DomainSpec) -> Result<()> {
        if self.interior.is_empty() || self.boundary.is_empty() {
            return Err(contract("collocation set needs interior and boundary points"));
        }
        if let Some(p) = self.interior.iter().find(|p| !spec.contains_strict(**p)) {
            return Err(contract(format!("interior point ({}, {}) not strictly inside", p.x, p.y)));
        }
        for (p, seg) in &self.boundary {
            let on = match seg {
                BoundarySegment::Cylinder => {
                    (p.distance(&spec.cylinder_center) - spec.cylinder_radius).abs() <= BOUNDARY_TOL
                }
                _ => spec.segment_of(*p) == Some(*seg),
            };
            if !on {
                return Err(contract(format!(
                    "boundary point ({}, {}) is not on segment {seg}",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

/// Van der Corput radical inverse in base 2 (bit reversal).
pub fn radical_inverse_base2(i: u64) -> f64 {
    (i.reverse_bits() as f64) * (1.0 / 18_446_744_073_709_551_616.0)
}

/// Hammersley points `(i/n, radical_inverse_base2(i))` for
/// `i in [index_offset, index_offset + n)`.
pub fn hammersley(n: usize, index_offset: usize) -> Result<Vec<[f64; 2]>> {
    if n == 0 {
        return Err(Error::EmptySet("hammersley requires n >= 1".into()));
    }
    Ok((index_offset..index_offset + n)
        .map(|i| [i as f64 / n as f64, radical_inverse_base2(i as u64)])
        .collect())
}

fn accepted_interior(spec: &DomainSpec, m: usize) -> Vec<Point2> {
    hammersley(m, 1)
        .expect("m >= 1")
        .into_iter()
        .map(|[u, v]| Point2::new(spec.x_min + u * spec.width(), spec.y_min + v * spec.height()))
        .filter(|p| spec.contains_strict(*p))
        .collect()
}

/// `n` interior points from a Hammersley set mapped onto the rectangle.
///
/// Points that fall in the cylinder (or on the rectangle edge) are rejected.
/// The Hammersley set size grows by the running deficit until at least `n`
/// points survive; any surplus is dropped from the end of the index order.
pub fn sample_interior(spec: &DomainSpec, n: usize) -> Result<Vec<Point2>> {
    if n == 0 {
        return Err(Error::EmptySet("interior sample size must be >= 1".into()));
    }
    spec.validate()?;
    let mut m = n;
    loop {
        let mut pts = accepted_interior(spec, m);
        if pts.len() >= n {
            pts.truncate(n);
            return Ok(pts);
        }
        m += n - pts.len();
    }
}

/// `n` boundary points equally spaced in arclength, `s_i = L * i / n`
/// (the first Hammersley coordinate scaled to the boundary length).
pub fn sample_boundary(spec: &DomainSpec, n: usize) -> Result<Vec<(Point2, BoundarySegment)>> {
    sample_boundary_shifted(spec, n, 0.0)
}

/// As [`sample_boundary`], with every arclength shifted by `shift` spacings.
pub fn sample_boundary_shifted(
    spec: &DomainSpec,
    n: usize,
    shift: f64,
) -> Result<Vec<(Point2, BoundarySegment)>> {
    if n < 5 {
        return Err(Error::InsufficientCoverage { required: 5, got: n });
    }
    spec.validate()?;
    let total = spec.boundary_length();
    Ok((0..n)
        .map(|i| spec.boundary_point(total * (i as f64 + shift) / n as f64))
        .collect())
}

/// Cell-centred regular grid over the rectangle, keeping points strictly
/// inside the fluid domain. The spacing is chosen so that roughly `n`
/// points survive; the exact count depends on the clipping.
pub fn grid_interior(spec: &DomainSpec, n: usize) -> Result<Vec<Point2>> {
    if n == 0 {
        return Err(Error::EmptySet("test grid size must be >= 1".into()));
    }
    spec.validate()?;
    let area = spec.width() * spec.height() - std::f64::consts::PI * spec.cylinder_radius.powi(2);
    let step = (area / n as f64).sqrt();
    let nx = ((spec.width() / step).round() as usize).max(1);
    let ny = ((spec.height() / step).round() as usize).max(1);
    let (dx, dy) = (spec.width() / nx as f64, spec.height() / ny as f64);
    Ok((0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| Point2::new(spec.x_min + (i as f64 + 0.5) * dx, spec.y_min + (j as f64 + 0.5) * dy))
        .filter(|p| spec.contains_strict(*p))
        .collect())
}

/// Entry `i` is true iff `train_points[i]` lies strictly downstream (larger x).
pub fn downstream_mask(test: Point2, train_points: &[Point2]) -> Vec<bool> {
    train_points.iter().map(|p| p.x > test.x).collect()
}
