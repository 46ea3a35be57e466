//! Run configuration, loaded from TOML.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annealer::AnnealSchedule;
use crate::error::{Error, Result};
use crate::fixed_count::{DEFAULT_EXHAUSTIVE_BUDGET, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2};
use crate::geometry::{default_orientations, FovModel, PlacementGrid, Side, Vec3, VehicleModel};
use crate::roi::SyntheticRoiSpec;
use crate::setcover::DEFAULT_QUBO_MAX_VARS;
use crate::vqe::{EncodingMap, VqeConfig, DEFAULT_RUNS, MAX_QUBITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    /// Exactly `n_s` sensors per side, swept over a range.
    #[default]
    FixedCount,
    /// Quadratic approximate set coverage, no sensor count.
    Setcover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exhaustive,
    Greedy,
    Anneal,
    Vqe,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exhaustive => "exhaustive",
            Self::Greedy => "greedy",
            Self::Anneal => "anneal",
            Self::Vqe => "vqe",
        }
    }

    pub fn supports(self, approach: Approach) -> bool {
        matches!(
            (approach, self),
            (Approach::FixedCount, Self::Exhaustive | Self::Greedy | Self::Vqe)
                | (Approach::Setcover, Self::Exhaustive | Self::Anneal | Self::Vqe)
        )
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "greedy" => Ok(Self::Greedy),
            "anneal" => Ok(Self::Anneal),
            "vqe" => Ok(Self::Vqe),
            _ => Err(Error::Config(format!("unknown solver `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleDims {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for VehicleDims {
    fn default() -> Self {
        let v = VehicleModel::default();
        Self {
            length: v.length,
            width: v.width,
            height: v.height,
        }
    }
}

impl VehicleDims {
    pub fn model(&self) -> VehicleModel {
        VehicleModel {
            length: self.length,
            width: self.width,
            height: self.height,
            origin: Vec3::default(),
        }
    }
}

/// Orientation sets used when a side has no explicit list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationMode {
    /// Perpendicular to the surface only.
    #[default]
    Fixed,
    /// The four per-side angle sets.
    Free,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SideGrid {
    pub g1: Option<usize>,
    pub g2: Option<usize>,
    /// Yaw angles in degrees relative to the face normal.
    pub orientations: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub g1: usize,
    pub g2: usize,
    pub orientations: OrientationMode,
    pub front: SideGrid,
    pub back: SideGrid,
    pub left: SideGrid,
    pub right: SideGrid,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            g1: 4,
            g2: 4,
            orientations: OrientationMode::Fixed,
            front: SideGrid::default(),
            back: SideGrid::default(),
            left: SideGrid::default(),
            right: SideGrid::default(),
        }
    }
}

impl GridSettings {
    fn side(&self, side: Side) -> &SideGrid {
        match side {
            Side::Front => &self.front,
            Side::Back => &self.back,
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn grid(&self, side: Side) -> Result<PlacementGrid> {
        let s = self.side(side);
        let orientations = match (&s.orientations, self.orientations) {
            (Some(o), _) => o.clone(),
            (None, OrientationMode::Fixed) => vec![0.0],
            (None, OrientationMode::Free) => default_orientations(side),
        };
        PlacementGrid::new(side, s.g1.unwrap_or(self.g1), s.g2.unwrap_or(self.g2), orientations)
            .map_err(|e| Error::Config(format!("{side} grid: {e}")))
    }

    pub fn grids(&self) -> Result<Vec<PlacementGrid>> {
        Side::ALL.iter().map(|&s| self.grid(s)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NsRange {
    pub min: usize,
    pub max: usize,
}

impl Default for NsRange {
    fn default() -> Self {
        Self { min: 1, max: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// TOML sensor catalog; the built-in catalog when absent.
    pub catalog: Option<PathBuf>,
    /// RoI CSV; the synthetic generator is used when absent.
    pub roi: Option<PathBuf>,
    pub synthetic: SyntheticRoiSpec,
    pub vehicle: VehicleDims,
    pub grid: GridSettings,
    pub fov: FovModel,
    pub lambda1: f64,
    pub lambda2: f64,
    pub approach: Approach,
    pub solvers: Vec<SolverKind>,
    pub n_s: NsRange,
    /// Root of all derived seeds.
    pub seed: u64,
    pub anneal: AnnealSchedule,
    pub vqe: VqeConfig,
    pub vqe_runs: usize,
    pub exhaustive_budget: u64,
    pub qubo_max_vars: usize,
    /// Adds the position-uniqueness penalty with this weight to set-coverage models.
    pub position_penalty: Option<f64>,
    pub output_dir: PathBuf,
    /// Coverage caches are read from and written to this directory.
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            catalog: None,
            roi: None,
            synthetic: SyntheticRoiSpec::default(),
            vehicle: VehicleDims::default(),
            grid: GridSettings::default(),
            fov: FovModel::default(),
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            approach: Approach::FixedCount,
            solvers: vec![SolverKind::Exhaustive],
            n_s: NsRange::default(),
            seed: 0,
            anneal: AnnealSchedule::default(),
            vqe: VqeConfig::default(),
            vqe_runs: DEFAULT_RUNS,
            exhaustive_budget: DEFAULT_EXHAUSTIVE_BUDGET as u64,
            qubo_max_vars: DEFAULT_QUBO_MAX_VARS,
            position_penalty: None,
            output_dir: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Checks everything that can be known before touching data: solver and
    /// approach pairing, ranges, and simulator limits that follow from grid
    /// sizes alone. `n_types` is the catalog size.
    pub fn validate_with(&self, n_types: usize) -> Result<()> {
        self.validate()?;
        if n_types == 0 {
            return Err(Error::Config("sensor catalog is empty".into()));
        }
        for grid in self.grid.grids()? {
            let n_configs = n_types * grid.num_cells() * grid.orientations.len();
            for &solver in &self.solvers {
                let limit = match (self.approach, solver) {
                    (Approach::FixedCount, SolverKind::Vqe) => {
                        let q = EncodingMap::new(grid.g1, grid.g2, n_types, grid.orientations.len())?.num_qubits();
                        (q > MAX_QUBITS).then_some((q, MAX_QUBITS))
                    }
                    (Approach::Setcover, SolverKind::Vqe) => {
                        (n_configs > MAX_QUBITS).then_some((n_configs, MAX_QUBITS))
                    }
                    (Approach::Setcover, SolverKind::Exhaustive) => {
                        (n_configs > self.qubo_max_vars).then_some((n_configs, self.qubo_max_vars))
                    }
                    _ => None,
                };
                if let Some((need, max)) = limit {
                    return Err(Error::Config(format!(
                        "{} side: solver {solver} needs {need} variables, limit is {max}",
                        grid.side
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.solvers.is_empty() {
            return bad("at least one solver is required".into());
        }
        let unique: BTreeSet<_> = self.solvers.iter().collect();
        if unique.len() != self.solvers.len() {
            return bad("solver listed twice".into());
        }
        for s in &self.solvers {
            if !s.supports(self.approach) {
                let approach = match self.approach {
                    Approach::FixedCount => "fixed_count",
                    Approach::Setcover => "setcover",
                };
                return bad(format!("solver {s} is not available for approach {approach}"));
            }
        }
        if !(self.lambda1.is_finite() && self.lambda2.is_finite() && self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("lambda1 and lambda2 must be finite and non-negative".into());
        }
        if self.approach == Approach::FixedCount && (self.n_s.min == 0 || self.n_s.min > self.n_s.max) {
            return bad(format!("invalid n_s range {}..={}", self.n_s.min, self.n_s.max));
        }
        if self.vqe_runs == 0 {
            return bad("vqe_runs must be at least 1".into());
        }
        if let Some(p) = self.position_penalty {
            if !(p.is_finite() && p >= 0.0) {
                return bad("position_penalty must be finite and non-negative".into());
            }
        }
        self.vehicle
            .model()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.anneal
            .validate()
            .map_err(|e| Error::Config(format!("anneal: {e}")))?;
        self.vqe.validate().map_err(|e| Error::Config(format!("vqe: {e}")))?;
        if self.roi.is_none() {
            self.synthetic
                .validate()
                .map_err(|e| Error::Config(format!("synthetic: {e}")))?;
        }
        self.grid.grids()?;
        Ok(())
    }
}

/// Seed for one (side, solver) pair, independent of which other pairs run.
pub fn derive_seed(root: u64, side: Side, solver: SolverKind) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(side.as_str());
    h.update(solver.as_str());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}
