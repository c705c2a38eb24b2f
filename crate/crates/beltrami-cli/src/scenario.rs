//! Scenario files: the single JSON input every subcommand consumes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use beltrami::fields::{load_field, AveragingTransform, BeltramiField, BumpProfile, GridSpec};
use beltrami::uniformize::SolverSettings;
use beltrami::{cx, Complex};

/// A batch run: one field, one grid, solver options, requested outputs, and
/// the seed for any randomized probe selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub field: FieldSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Cell-averaging transform used by discretization.
    #[serde(default = "default_averaging")]
    pub averaging: AveragingTransform,
    #[serde(default)]
    pub outputs: Vec<OutputKind>,
    #[serde(default)]
    pub seed: u64,
}

fn default_averaging() -> AveragingTransform {
    AveragingTransform::Cayley
}

/// Field selection. `triangle-fixture` is the glued two-triangle surface; it
/// has no grid discretization and is handled specially by the commands that
/// support it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    Constant {
        value: [f64; 2],
    },
    VerticalStrips {
        kappa: f64,
    },
    SmoothBump {
        amplitude: [f64; 2],
        center: [f64; 2],
        radius: f64,
        profile: BumpProfile,
    },
    /// Grid-sampled field loaded from an interchange file (path resolved
    /// relative to the scenario file).
    GridSampled {
        path: PathBuf,
    },
    TriangleFixture,
}

impl FieldSpec {
    pub fn is_triangle(&self) -> bool {
        matches!(self, FieldSpec::TriangleFixture)
    }

    /// Builds the Beltrami field; errors for the triangle fixture, which is
    /// not a planar field.
    pub fn build(&self, scenario_dir: &Path) -> anyhow::Result<BeltramiField> {
        let field = match self {
            FieldSpec::Zero => BeltramiField::Zero,
            FieldSpec::Constant { value } => BeltramiField::Constant {
                value: cx(value[0], value[1]),
            },
            FieldSpec::VerticalStrips { kappa } => BeltramiField::VerticalStrips { kappa: *kappa },
            FieldSpec::SmoothBump {
                amplitude,
                center,
                radius,
                profile,
            } => BeltramiField::SmoothBump {
                amplitude: cx(amplitude[0], amplitude[1]),
                center: cx(center[0], center[1]),
                radius: *radius,
                profile: *profile,
            },
            FieldSpec::GridSampled { path } => {
                let resolved = scenario_dir.join(path);
                load_field(&resolved)
                    .with_context(|| format!("loading field file {}", resolved.display()))?
            }
            FieldSpec::TriangleFixture => {
                bail!("the triangle fixture is a glued surface, not a planar field")
            }
        };
        field.check().context("field validation")?;
        Ok(field)
    }

    /// Center used for jet-local diagnostics (the bump center when there is
    /// one, the origin otherwise).
    pub fn center(&self) -> Complex {
        match self {
            FieldSpec::SmoothBump { center, .. } => cx(center[0], center[1]),
            _ => cx(0.0, 0.0),
        }
    }

    /// Whether the field exposes the smooth 2-jet the limit tables need.
    pub fn is_smooth(&self) -> bool {
        matches!(
            self,
            FieldSpec::Zero | FieldSpec::Constant { .. } | FieldSpec::SmoothBump { .. }
        )
    }
}

/// Solver options, mirrored onto [`SolverSettings`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub continuation_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let s = SolverSettings::default();
        SolverOptions {
            tol: s.tol,
            max_iter: s.max_iter,
            continuation_steps: s.continuation_steps,
        }
    }
}

impl SolverOptions {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            tol: self.tol,
            max_iter: self.max_iter,
            continuation_steps: self.continuation_steps,
            ..SolverSettings::default()
        }
    }
}

/// Requested artifacts beyond what a subcommand always writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    Poles,
    Skeleton,
    Probes,
    Geodesics,
    LimitTables,
    ImageGrid,
}

impl Scenario {
    /// Reads and validates a scenario file.
    pub fn load(path: &Path) -> anyhow::Result<(Scenario, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading scenario {}", path.display()))?;
        let scenario: Scenario = serde_json::from_str(&text)
            .with_context(|| format!("parsing scenario {}", path.display()))?;
        scenario.validate()?;
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((scenario, dir))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.grid.half_side > 0.0) {
            bail!("grid.L must be positive, got {}", self.grid.half_side);
        }
        if self.grid.subdivisions == 0 {
            bail!("grid.m must be at least 1");
        }
        if !(self.solver.tol > 0.0) {
            bail!("solver.tol must be positive, got {}", self.solver.tol);
        }
        if self.solver.max_iter == 0 {
            bail!("solver.maxIter must be at least 1");
        }
        if self.solver.continuation_steps == 0 {
            bail!("solver.continuationSteps must be at least 1");
        }
        Ok(())
    }

    pub fn requests(&self, kind: OutputKind) -> bool {
        self.outputs.contains(&kind)
    }
}
