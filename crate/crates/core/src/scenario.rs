//! Scenario files.
//!
//! A scenario is a TOML document with the sections `bounds`, `grid`,
//! `materials`, `buildings`, `candidates`, `exclusions`, `priority`,
//! `objective`, `optimizer` and `radio`. Lengths are in meters and
//! attenuations in dB/m. See `scenarios/toy_city.toml` for a complete example
//! and the guide for every field.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Rect, Region};
use crate::metrics::Aggregation;
use crate::objective::{Objective, PriorityDensity, WeightSpec};
use crate::optimizer::{OptimizerConfig, PlacementProblem, Termination};
use crate::propagation::{field_matrix, read_raster_text, FieldCache, PowerField, RadioConfig};
use crate::scene::{
    build_candidates, make_grid, Building, CandidateSet, CandidateSpec, MaterialTable,
    ReceiverGrid, Scene,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    min: Point2,
    max: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub spacing: f64,
    pub receiver_height: f64,
    /// Receiver heights averaged by multi-height evaluation.
    #[serde(default)]
    pub heights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidatesSection {
    #[serde(default)]
    sites: Vec<Point2>,
    #[serde(default)]
    pitch: Option<f64>,
    mount_height: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    /// Uniform over outdoor cells.
    #[default]
    Uniform,
    /// Raster file in the field exchange format.
    Raster,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrioritySection {
    #[serde(default)]
    pub density: DensityKind,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub weight: WeightSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub coverage_target: Option<f64>,
    #[serde(default)]
    pub fixed_sites: Vec<Point2>,
    #[serde(default)]
    pub lazy: bool,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            epsilon: 0.0,
            seed: 0,
            budget: None,
            coverage_target: None,
            fixed_sites: Vec::new(),
            lazy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    bounds: BoundsSection,
    grid: GridSection,
    #[serde(default)]
    materials: BTreeMap<String, f64>,
    #[serde(default)]
    buildings: Vec<Building>,
    candidates: CandidatesSection,
    #[serde(default)]
    exclusions: Vec<Region>,
    #[serde(default)]
    priority: PrioritySection,
    #[serde(default)]
    objective: ObjectiveSection,
    #[serde(default)]
    optimizer: OptimizerSection,
    #[serde(default)]
    radio: RadioConfig,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scene: Scene,
    pub candidates: CandidateSpec,
    pub grid: GridSection,
    pub priority: PrioritySection,
    pub objective: ObjectiveSection,
    pub optimizer: OptimizerSection,
    pub radio: RadioConfig,
    /// The document after overrides, echoed into outputs.
    pub document: toml::Table,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

fn parse_error(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Applies a `dotted.key=value` override. The value is read as a TOML value
/// when possible and as a bare string otherwise.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let origin = Path::new("<override>");
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| parse_error(origin, format!("`{assignment}` is not key=value")))?;
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| parse_error(origin, format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    pub fn load_with_overrides(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, path, base, overrides)
    }

    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        Self::parse(text, Path::new("<string>"), base_dir.into(), &[])
    }

    fn parse(text: &str, path: &Path, base_dir: PathBuf, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e| parse_error(path, e))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let file: ScenarioFile = toml::Value::Table(doc.clone())
            .try_into()
            .map_err(|e: toml::de::Error| parse_error(path, e))?;

        let scene = Scene::new(
            Rect {
                min: file.bounds.min,
                max: file.bounds.max,
            },
            file.buildings,
            MaterialTable {
                entries: file.materials,
            },
            file.grid.spacing,
            file.grid.receiver_height,
        )?;
        file.radio.validate()?;
        file.objective.weight.validate()?;
        if file.optimizer.budget.is_some() && file.optimizer.coverage_target.is_some() {
            return Err(Error::validation(
                "optimizer takes `budget` or `coverage_target`, not both",
            ));
        }
        if file.priority.density == DensityKind::Raster && file.priority.path.is_none() {
            return Err(Error::validation("raster density needs `priority.path`"));
        }
        Ok(Scenario {
            scene,
            candidates: CandidateSpec {
                sites: file.candidates.sites,
                pitch: file.candidates.pitch,
                mount_height: file.candidates.mount_height,
                exclusions: file.exclusions,
            },
            grid: file.grid,
            priority: file.priority,
            objective: file.objective,
            optimizer: file.optimizer,
            radio: file.radio,
            document: doc,
            base_dir,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn density(&self, grid: &ReceiverGrid) -> Result<PriorityDensity> {
        match self.priority.density {
            DensityKind::Uniform => PriorityDensity::uniform_outdoor(&self.scene, grid),
            DensityKind::Raster => {
                let path = self.resolve(self.priority.path.as_deref().expect("validated"));
                let (found, values) = read_raster_text(&path)?;
                if !grid.same_layout(&found) {
                    return Err(Error::GridMismatch {
                        expected: format!("{}x{}", grid.rows, grid.cols),
                        found: format!("{}x{}", found.rows, found.cols),
                    });
                }
                PriorityDensity::from_weights(values)
            }
        }
    }

    pub fn termination(&self) -> Termination {
        match (self.optimizer.budget, self.optimizer.coverage_target) {
            (Some(k), _) => Termination::Budget(k),
            (None, Some(beta)) => Termination::Coverage(beta),
            (None, None) => Termination::Budget(1),
        }
    }

    /// Builds grid, candidates, fields and the objective.
    pub fn prepare(&self, cache: Option<&FieldCache>) -> Result<Prepared> {
        let grid = make_grid(&self.scene)?;
        let candidates = build_candidates(&self.scene, &self.candidates)?;
        let fields = field_matrix(&candidates, &self.scene, &grid, &self.radio, cache)?;
        self.prepare_with_fields(grid, candidates, fields)
    }

    /// Like [`Scenario::prepare`] with fields supplied by the caller, for
    /// example imported from an external propagation tool.
    pub fn prepare_with_fields(
        &self,
        grid: ReceiverGrid,
        candidates: CandidateSet,
        fields: Vec<PowerField>,
    ) -> Result<Prepared> {
        if fields.len() != candidates.len() {
            return Err(Error::validation("one field per candidate is required"));
        }
        let density = self.density(&grid)?;
        let objective = Objective::new(
            self.objective.aggregation,
            self.objective.weight.clone(),
            density,
            &fields,
        )?;
        let fixed = self
            .optimizer
            .fixed_sites
            .iter()
            .map(|p| {
                candidates
                    .find(*p, 0.5 * self.scene.grid_spacing)
                    .ok_or_else(|| {
                        Error::validation(format!(
                            "fixed site ({}, {}) is not a candidate",
                            p.x, p.y
                        ))
                    })
            })
            .collect::<Result<Vec<usize>>>()?;
        let config = OptimizerConfig {
            epsilon: self.optimizer.epsilon,
            termination: self.termination(),
            seed: self.optimizer.seed,
            fixed,
            lazy: self.optimizer.lazy,
        };
        Ok(Prepared {
            grid,
            candidates,
            problem: PlacementProblem::new(fields, objective)?,
            config,
        })
    }
}

/// A scenario turned into a ready-to-solve problem.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: ReceiverGrid,
    pub candidates: CandidateSet,
    pub problem: PlacementProblem,
    pub config: OptimizerConfig,
}
