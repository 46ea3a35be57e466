//! Vehicle box, placement grids, sensor fields of view and RoI partitioning.
//!
//! Frame conventions: `+x` is the vehicle front, `+y` its left and `+z` up.
//! The vehicle origin is the centre of the box footprint on the ground plane.
//! Sensor orientations are yaw angles in degrees about `+z`, measured from the
//! outward face normal; counter-clockwise seen from the top is positive.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied to the range and cone conditions so that points
/// sitting on the boundary count as covered despite rounding in `tan`.
pub const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// A sensor type: angular sweeps in degrees, range in metres and unit cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub name: String,
    pub alpha_h: f64,
    pub alpha_v: f64,
    pub range: f64,
    pub cost: f64,
}

impl SensorSpec {
    pub fn new(name: &str, alpha_h: f64, alpha_v: f64, range: f64, cost: f64) -> Result<Self> {
        let spec = Self {
            name: name.to_string(),
            alpha_h,
            alpha_v,
            range,
            cost,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidSensor {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.alpha_h > 0.0 && self.alpha_h <= 180.0) {
            return fail("alpha_h must lie in (0, 180]");
        }
        if !(self.alpha_v > 0.0 && self.alpha_v <= 180.0) {
            return fail("alpha_v must lie in (0, 180]");
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return fail("range must be positive");
        }
        if !(self.cost >= 0.0 && self.cost.is_finite()) {
            return fail("cost must be non-negative");
        }
        Ok(())
    }
}

/// LiDAR, Radar, Camera and Ultrasonic with their reference sweeps, ranges and costs.
pub fn default_catalog() -> Vec<SensorSpec> {
    vec![
        SensorSpec::new("LiDAR", 80.0, 40.0, 120.0, 200.0).unwrap(),
        SensorSpec::new("Radar", 60.0, 5.0, 120.0, 100.0).unwrap(),
        SensorSpec::new("Camera", 90.0, 60.0, 20.0, 120.0).unwrap(),
        SensorSpec::new("Ultrasonic", 90.0, 5.0, 10.0, 20.0).unwrap(),
    ]
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    sensor: Vec<SensorSpec>,
}

/// Parses a TOML catalog made of `[[sensor]]` tables.
pub fn parse_catalog(text: &str) -> Result<Vec<SensorSpec>> {
    let file: CatalogFile = toml::from_str(text)?;
    if file.sensor.is_empty() {
        return Err(Error::Config("sensor catalog is empty".into()));
    }
    for s in &file.sensor {
        s.validate()?;
    }
    Ok(file.sensor)
}

pub fn load_catalog(path: &Path) -> Result<Vec<SensorSpec>> {
    parse_catalog(&std::fs::read_to_string(path)?)
}

pub fn catalog_to_toml(catalog: &[SensorSpec]) -> Result<String> {
    Ok(toml::to_string(&CatalogFile {
        sensor: catalog.to_vec(),
    })?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Front,
    Back,
    Left,
    Right,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Front, Side::Back, Side::Left, Side::Right];

    /// Outward face normal.
    pub fn normal(self) -> Vec3 {
        match self {
            Side::Front => Vec3::new(1.0, 0.0, 0.0),
            Side::Back => Vec3::new(-1.0, 0.0, 0.0),
            Side::Left => Vec3::new(0.0, 1.0, 0.0),
            Side::Right => Vec3::new(0.0, -1.0, 0.0),
        }
    }

    /// Heading of the outward normal in radians, counter-clockwise from `+x`.
    pub fn normal_heading(self) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Side::Front => 0.0,
            Side::Left => FRAC_PI_2,
            Side::Back => PI,
            Side::Right => -FRAC_PI_2,
        }
    }

    /// Horizontal in-face axis: the normal turned 90° counter-clockwise.
    pub fn face_axis(self) -> Vec3 {
        let n = self.normal();
        Vec3::new(-n.y, n.x, 0.0)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Front => "front",
            Side::Back => "back",
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "front" => Ok(Side::Front),
            "back" => Ok(Side::Back),
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(Error::Config(format!("unknown side `{other}`"))),
        }
    }
}

/// Axis-aligned box standing on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleModel {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub origin: Vec3,
}

impl Default for VehicleModel {
    fn default() -> Self {
        Self {
            length: 4.5,
            width: 1.8,
            height: 1.5,
            origin: Vec3::default(),
        }
    }
}

impl VehicleModel {
    pub fn new(length: f64, width: f64, height: f64) -> Result<Self> {
        let v = Self {
            length,
            width,
            height,
            origin: Vec3::default(),
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length > 0.0 && self.width > 0.0 && self.height > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput("vehicle dimensions must be positive".into()))
        }
    }

    /// Closed-box membership.
    pub fn contains(&self, p: Vec3) -> bool {
        let d = p - self.origin;
        d.x.abs() <= self.length / 2.0 && d.y.abs() <= self.width / 2.0 && d.z >= 0.0 && d.z <= self.height
    }

    /// Centre of a face at mid-height.
    pub fn face_centre(&self, side: Side) -> Vec3 {
        let half_depth = match side {
            Side::Front | Side::Back => self.length / 2.0,
            Side::Left | Side::Right => self.width / 2.0,
        };
        self.origin + side.normal() * half_depth + Vec3::new(0.0, 0.0, self.height / 2.0)
    }

    /// Face extent as (horizontal, vertical).
    pub fn face_extent(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Front | Side::Back => (self.width, self.height),
            Side::Left | Side::Right => (self.length, self.height),
        }
    }
}

/// Candidate positions and yaw angles on one face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementGrid {
    pub side: Side,
    /// Cells along the horizontal face axis.
    pub g1: usize,
    /// Cells along the vertical face axis.
    pub g2: usize,
    /// Yaw angles in degrees.
    pub orientations: Vec<f64>,
}

impl PlacementGrid {
    pub fn new(side: Side, g1: usize, g2: usize, orientations: Vec<f64>) -> Result<Self> {
        let grid = Self {
            side,
            g1,
            g2,
            orientations,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid with sensors facing straight out of the surface.
    pub fn perpendicular(side: Side, g1: usize, g2: usize) -> Self {
        Self {
            side,
            g1,
            g2,
            orientations: vec![0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.g1 == 0 || self.g2 == 0 {
            return Err(Error::InvalidInput("grid dimensions must be positive".into()));
        }
        if self.orientations.is_empty() {
            return Err(Error::InvalidInput("orientation set is empty".into()));
        }
        if self.orientations.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidInput("orientation angles must be finite".into()));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.g1 * self.g2
    }
}

/// Orientation sets used for the free-orientation experiments, per side.
pub fn default_orientations(side: Side) -> Vec<f64> {
    match side {
        Side::Front => vec![-30.0, 0.0, 30.0, 45.0],
        Side::Back => vec![30.0, 0.0, -30.0, -45.0],
        Side::Left => vec![-60.0, -40.0, -20.0, 0.0],
        Side::Right => vec![0.0, 20.0, 40.0, 60.0],
    }
}

/// Cell centres in face coordinates `(u, v)` relative to the face centre,
/// ordered row-major with `u` as the row index.
pub fn face_coordinates(extent_u: f64, extent_v: f64, g1: usize, g2: usize) -> Vec<(f64, f64)> {
    let pitch_u = extent_u / g1 as f64;
    let pitch_v = extent_v / g2 as f64;
    let mut out = Vec::with_capacity(g1 * g2);
    for i in 0..g1 {
        for j in 0..g2 {
            out.push((
                -extent_u / 2.0 + (i as f64 + 0.5) * pitch_u,
                -extent_v / 2.0 + (j as f64 + 0.5) * pitch_v,
            ));
        }
    }
    out
}

/// World-space cell centres on the grid's face, row-major.
pub fn grid_positions(vehicle: &VehicleModel, grid: &PlacementGrid) -> Vec<Vec3> {
    let (eu, ev) = vehicle.face_extent(grid.side);
    let centre = vehicle.face_centre(grid.side);
    let axis_u = grid.side.face_axis();
    face_coordinates(eu, ev, grid.g1, grid.g2)
        .into_iter()
        .map(|(u, v)| centre + axis_u * u + Vec3::new(0.0, 0.0, v))
        .collect()
}

/// One candidate placement: sensor type, grid cell and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub side: Side,
    pub type_index: usize,
    /// Row-major cell index on the side's grid.
    pub cell: usize,
    pub orientation_index: usize,
    /// Yaw in degrees relative to the face normal.
    pub orientation: f64,
    pub position: Vec3,
}

impl SensorConfig {
    /// Boresight heading in radians, counter-clockwise from `+x`.
    pub fn heading(&self) -> f64 {
        self.side.normal_heading() + self.orientation.to_radians()
    }

    pub fn boresight(&self) -> Vec3 {
        let h = self.heading();
        Vec3::new(h.cos(), h.sin(), 0.0)
    }

    pub fn label(&self) -> String {
        format!(
            "{}_t{}_p{}_o{}",
            self.side, self.type_index, self.cell, self.orientation_index
        )
    }
}

/// Shape used for field-of-view membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FovModel {
    #[default]
    EllipticalCone,
    /// Horizontal and vertical half-angles checked separately (pyramidal FoV).
    IndependentAngles,
}

pub fn fov_contains(cfg: &SensorConfig, spec: &SensorSpec, point: Vec3) -> bool {
    fov_contains_with(FovModel::EllipticalCone, cfg, spec, point)
}

pub fn fov_contains_with(model: FovModel, cfg: &SensorConfig, spec: &SensorSpec, point: Vec3) -> bool {
    let d = point - cfg.position;
    let dist_sq = d.norm_sq();
    if dist_sq > spec.range * spec.range * (1.0 + BOUNDARY_EPS) {
        return false;
    }
    if dist_sq == 0.0 {
        // apex
        return true;
    }
    let h = cfg.heading();
    let (sin_h, cos_h) = h.sin_cos();
    let forward = d.x * cos_h + d.y * sin_h;
    if forward <= 0.0 {
        return false;
    }
    let lateral = -d.x * sin_h + d.y * cos_h;
    let vertical = d.z;
    let tan_h = (spec.alpha_h.to_radians() / 2.0).tan();
    let tan_v = (spec.alpha_v.to_radians() / 2.0).tan();
    match model {
        FovModel::EllipticalCone => {
            let eh = lateral / tan_h;
            let ev = vertical / tan_v;
            eh * eh + ev * ev <= forward * forward * (1.0 + BOUNDARY_EPS)
        }
        FovModel::IndependentAngles => {
            let lim = forward * (1.0 + BOUNDARY_EPS);
            lateral.abs() <= tan_h * lim && vertical.abs() <= tan_v * lim
        }
    }
}

/// Every configuration of one side: type-major, then row-major cell, then orientation.
pub fn enumerate_side_configs(
    catalog: &[SensorSpec],
    vehicle: &VehicleModel,
    grid: &PlacementGrid,
) -> Vec<SensorConfig> {
    let positions = grid_positions(vehicle, grid);
    let mut out = Vec::with_capacity(catalog.len() * positions.len() * grid.orientations.len());
    for type_index in 0..catalog.len() {
        for (cell, &position) in positions.iter().enumerate() {
            for (orientation_index, &orientation) in grid.orientations.iter().enumerate() {
                out.push(SensorConfig {
                    side: grid.side,
                    type_index,
                    cell,
                    orientation_index,
                    orientation,
                    position,
                });
            }
        }
    }
    out
}

/// Concatenation of [`enumerate_side_configs`] over the given grids, in order.
pub fn enumerate_configs(
    catalog: &[SensorSpec],
    vehicle: &VehicleModel,
    grids: &[PlacementGrid],
) -> Result<Vec<SensorConfig>> {
    if catalog.is_empty() {
        return Err(Error::InvalidInput("sensor catalog is empty".into()));
    }
    let mut out = Vec::new();
    for grid in grids {
        grid.validate()?;
        out.extend(enumerate_side_configs(catalog, vehicle, grid));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiPoint {
    pub xyz: Vec3,
    pub criticality: f64,
}

impl RoiPoint {
    pub fn new(x: f64, y: f64, z: f64, criticality: f64) -> Self {
        Self {
            xyz: Vec3::new(x, y, z),
            criticality,
        }
    }
}

/// Criticality-weighted point set, optionally labelled by side.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiCloud {
    points: Vec<RoiPoint>,
    side_labels: Option<Vec<Side>>,
    total_criticality: f64,
}

impl RoiCloud {
    pub fn new(points: Vec<RoiPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.criticality) {
                return Err(Error::InvalidInput(format!(
                    "point {i} has criticality {} outside [0, 1]",
                    p.criticality
                )));
            }
            if !(p.xyz.x.is_finite() && p.xyz.y.is_finite() && p.xyz.z.is_finite()) {
                return Err(Error::InvalidInput(format!("point {i} has non-finite coordinates")));
            }
        }
        let total_criticality = points.iter().map(|p| p.criticality).sum();
        Ok(Self {
            points,
            side_labels: None,
            total_criticality,
        })
    }

    pub fn points(&self) -> &[RoiPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_criticality(&self) -> f64 {
        self.total_criticality
    }

    pub fn side_labels(&self) -> Option<&[Side]> {
        self.side_labels.as_deref()
    }

    pub fn is_partitioned(&self) -> bool {
        self.side_labels.is_some()
    }

    /// Indices of the points labelled `side`; empty if unpartitioned.
    pub fn side_indices(&self, side: Side) -> Vec<usize> {
        match &self.side_labels {
            Some(labels) => labels
                .iter()
                .enumerate()
                .filter(|(_, &s)| s == side)
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub cloud: RoiCloud,
    /// Points dropped because they lie inside the vehicle box.
    pub excluded: usize,
}

/// Side whose diagonal-bounded sector contains `p`. Points on a diagonal go
/// to the front or back.
pub fn sector_of(vehicle: &VehicleModel, p: Vec3) -> Side {
    let dx = p.x - vehicle.origin.x;
    let dy = p.y - vehicle.origin.y;
    if dy.abs() * vehicle.length <= dx.abs() * vehicle.width {
        if dx >= 0.0 {
            Side::Front
        } else {
            Side::Back
        }
    } else if dy > 0.0 {
        Side::Left
    } else {
        Side::Right
    }
}

/// Labels each point with its side sector and drops points inside the vehicle.
pub fn partition_roi(cloud: &RoiCloud, vehicle: &VehicleModel) -> Result<Partition> {
    let mut points = Vec::with_capacity(cloud.len());
    let mut labels = Vec::with_capacity(cloud.len());
    let mut excluded = 0;
    for p in cloud.points() {
        if vehicle.contains(p.xyz) {
            excluded += 1;
            continue;
        }
        points.push(*p);
        labels.push(sector_of(vehicle, p.xyz));
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut out = RoiCloud::new(points)?;
    out.side_labels = Some(labels);
    Ok(Partition { cloud: out, excluded })
}
