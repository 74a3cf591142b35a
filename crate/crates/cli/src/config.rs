use std::path::{Path, PathBuf};

use pinn_influence::geometry::{grid_interior, sample_boundary_shifted, CollocationSet, DomainSpec, PointKind, TrainingPoint};
use pinn_influence::indicators::RegionSpec;
use pinn_influence::influence::TargetKind;
use pinn_influence::model::MlpConfig;
use pinn_influence::physics::{FluidParams, PdeVariant};
use pinn_influence::training::{PinnProblem, TrainConfig};
use pinn_influence::Error;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    Error::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
    .into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub n_pde: usize,
    pub n_bc: usize,
    /// Accepted for schema compatibility; both samplers are deterministic.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSetSpec {
    pub n_interior: usize,
    pub n_boundary: usize,
}

impl Default for TestSetSpec {
    fn default() -> Self {
        Self {
            n_interior: 2000,
            n_boundary: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapSpec {
    pub nx: usize,
    pub ny: usize,
}

impl Default for HeatmapSpec {
    fn default() -> Self {
        Self { nx: 44, ny: 8 }
    }
}

fn default_targets() -> Vec<TargetKind> {
    TargetKind::TABLE.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfluenceSettings {
    /// Hessian damping; `null` picks the trace-scaled default.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_targets")]
    pub targets: Vec<TargetKind>,
    #[serde(default)]
    pub test_set: TestSetSpec,
    /// `null` means a disc of 1.5 cylinder radii around the cylinder.
    #[serde(default)]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub heatmap: HeatmapSpec,
}

impl Default for InfluenceSettings {
    fn default() -> Self {
        Self {
            lambda: None,
            targets: default_targets(),
            test_set: TestSetSpec::default(),
            region: None,
            heatmap: HeatmapSpec::default(),
        }
    }
}

fn default_validation_targets() -> Vec<TargetKind> {
    vec![TargetKind::U1]
}

fn default_test_points() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSettings {
    /// Number of test points drawn from the interior test grid.
    #[serde(default = "default_test_points")]
    pub n_test_points: usize,
    #[serde(default)]
    pub seed: u64,
    /// `null` means `1/N`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_validation_targets")]
    pub targets: Vec<TargetKind>,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            n_test_points: default_test_points(),
            seed: 0,
            epsilon: None,
            targets: default_validation_targets(),
        }
    }
}

fn default_tag() -> String {
    "model".into()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_tag")]
    pub tag: String,
    #[serde(default)]
    pub domain: DomainSpec,
    #[serde(default)]
    pub fluid: FluidParams,
    #[serde(default)]
    pub variant: PdeVariant,
    #[serde(default)]
    pub model: MlpConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub sampling: Sampling,
    #[serde(default)]
    pub influence: InfluenceSettings,
    #[serde(default)]
    pub validation: ValidationSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Parses and validates a config file. Errors name the offending field.
    pub fn load(path: &Path) -> CliResult<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(&bytes)?;
        Ok((cfg, bytes))
    }

    pub fn parse(bytes: &[u8]) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.domain.validate()?;
        self.fluid.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.sampling.n_pde == 0 {
            return Err(invalid("sampling.n_pde", "must be >= 1"));
        }
        if self.sampling.n_bc < 5 {
            return Err(invalid(
                "sampling.n_bc",
                format!("must be >= 5 to cover every boundary segment, got {}", self.sampling.n_bc),
            ));
        }
        if let Some(l) = self.influence.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(invalid("influence.lambda", "must be finite and non-negative"));
            }
        }
        if self.influence.targets.is_empty() {
            return Err(invalid("influence.targets", "must name at least one target"));
        }
        if self.influence.test_set.n_interior == 0 {
            return Err(invalid("influence.test_set.n_interior", "must be >= 1"));
        }
        let nb = self.influence.test_set.n_boundary;
        if nb != 0 && nb < 5 {
            return Err(invalid("influence.test_set.n_boundary", "must be 0 or >= 5"));
        }
        self.region().validate()?;
        if self.influence.heatmap.nx == 0 || self.influence.heatmap.ny == 0 {
            return Err(invalid("influence.heatmap", "grid needs at least one cell per axis"));
        }
        if self.validation.n_test_points == 0 {
            return Err(invalid("validation.n_test_points", "must be >= 1"));
        }
        if let Some(e) = self.validation.epsilon {
            if !e.is_finite() {
                return Err(invalid("validation.epsilon", "must be finite"));
            }
        }
        if self.validation.targets.contains(&TargetKind::SumSpeed) {
            return Err(invalid("validation.targets", "sum_speed is not a per-point target"));
        }
        Ok(())
    }

    pub fn problem(&self) -> PinnProblem {
        PinnProblem {
            domain: self.domain,
            fluid: self.fluid,
            variant: self.variant,
            model: self.model,
        }
    }

    pub fn collocation(&self) -> CliResult<CollocationSet> {
        Ok(CollocationSet::sample(&self.domain, self.sampling.n_pde, self.sampling.n_bc)?)
    }

    pub fn region(&self) -> RegionSpec {
        self.influence.region.unwrap_or(RegionSpec::Disc {
            center: self.domain.cylinder_center,
            radius: 1.5 * self.domain.cylinder_radius,
        })
    }

    /// Regular interior grid followed by boundary points offset by half a
    /// spacing from the training boundary points.
    pub fn test_points(&self) -> CliResult<Vec<TrainingPoint>> {
        let spec = &self.influence.test_set;
        let mut pts: Vec<TrainingPoint> = grid_interior(&self.domain, spec.n_interior)?
            .into_iter()
            .map(|point| TrainingPoint {
                point,
                kind: PointKind::Interior,
            })
            .collect();
        if spec.n_boundary > 0 {
            pts.extend(
                sample_boundary_shifted(&self.domain, spec.n_boundary, 0.5)?
                    .into_iter()
                    .map(|(point, seg)| TrainingPoint {
                        point,
                        kind: PointKind::Boundary(seg),
                    }),
            );
        }
        Ok(pts)
    }
}
