//! RoI point-cloud files and synthetic clouds.
//!
//! Files are CSV with header `x,y,z,criticality`; the header is line 1.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RoiCloud, RoiPoint, Side, Vec3, VehicleModel};

const HEADER: [&str; 4] = ["x", "y", "z", "criticality"];

pub fn load_roi(path: &Path) -> Result<RoiCloud> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::EmptyFile(path.to_path_buf())),
        Some(h) => h?,
    };
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", HEADER.join(",")),
        });
    }
    let mut points = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(points.len() + 2, |p| p.line() as usize);
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let mut v = [0.0; 4];
        for (k, field) in rec.iter().enumerate() {
            v[k] = field.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("{}: {e}", HEADER[k]),
            })?;
            if !v[k].is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("{} is not finite", HEADER[k]),
                });
            }
        }
        if !(0.0..=1.0).contains(&v[3]) {
            return Err(Error::Parse {
                line,
                message: format!("criticality {} outside [0, 1]", v[3]),
            });
        }
        points.push(RoiPoint::new(v[0], v[1], v[2], v[3]));
    }
    if points.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    RoiCloud::new(points)
}

/// Writes shortest round-trip decimal forms, so reloading is bit-exact.
pub fn save_roi(cloud: &RoiCloud, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_roi(cloud, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_roi<W: Write>(cloud: &RoiCloud, w: W) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(HEADER)?;
    for p in cloud.points() {
        c.write_record([
            p.xyz.x.to_string(),
            p.xyz.y.to_string(),
            p.xyz.z.to_string(),
            p.criticality.to_string(),
        ])?;
    }
    c.flush()?;
    Ok(())
}

/// Criticality as a function of horizontal distance `d` to the vehicle box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CriticalityProfile {
    /// Constant value.
    Uniform { value: f64 },
    /// `1 / (1 + d / scale)`.
    InverseDistance { scale: f64 },
}

impl CriticalityProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Uniform { value } if (0.0..=1.0).contains(&value) => Ok(()),
            Self::InverseDistance { scale } if scale > 0.0 && scale.is_finite() => Ok(()),
            _ => Err(Error::InvalidInput(format!("invalid criticality profile {self}"))),
        }
    }

    pub fn eval(&self, distance: f64) -> f64 {
        match *self {
            Self::Uniform { value } => value,
            Self::InverseDistance { scale } => 1.0 / (1.0 + distance / scale),
        }
    }
}

impl fmt::Display for CriticalityProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform { value } => write!(f, "uniform({value})"),
            Self::InverseDistance { scale } => write!(f, "inverse-distance({scale})"),
        }
    }
}

/// Parses `uniform(v)` or `inverse-distance(scale)`.
impl FromStr for CriticalityProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unknown criticality profile `{s}`"));
        let (name, rest) = s.trim().split_once('(').ok_or_else(bad)?;
        let arg: f64 = rest
            .strip_suffix(')')
            .ok_or_else(bad)?
            .trim()
            .parse()
            .map_err(|_| bad())?;
        let p = match name.trim() {
            "uniform" => Self::Uniform { value: arg },
            "inverse-distance" => Self::InverseDistance { scale: arg },
            _ => return Err(bad()),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Square lattice sectors centred on the chosen vehicle faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticRoiSpec {
    /// Edge of each sector square, metres.
    pub extent: f64,
    /// Lattice spacing, metres.
    pub spacing: f64,
    /// Heights of the horizontal point layers, metres.
    pub z_levels: Vec<f64>,
    pub sides: Vec<Side>,
    pub profile: CriticalityProfile,
    /// Criticalities receive uniform noise in `[-jitter, jitter]`, then clamp.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticRoiSpec {
    fn default() -> Self {
        Self {
            extent: 10.0,
            spacing: 0.5,
            z_levels: vec![0.5, 1.0],
            sides: Side::ALL.to_vec(),
            profile: CriticalityProfile::InverseDistance { scale: 3.0 },
            jitter: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticRoiSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidInput("spacing must be positive".into()));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidInput("extent must be positive".into()));
        }
        if self.z_levels.is_empty() || self.sides.is_empty() {
            return Err(Error::InvalidInput("need at least one z level and one side".into()));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::InvalidInput("jitter must lie in [0, 1]".into()));
        }
        self.profile.validate()
    }
}

fn box_distance(vehicle: &VehicleModel, p: Vec3) -> f64 {
    let dx = ((p.x - vehicle.origin.x).abs() - vehicle.length / 2.0).max(0.0);
    let dy = ((p.y - vehicle.origin.y).abs() - vehicle.width / 2.0).max(0.0);
    dx.hypot(dy)
}

/// Lattice points `spacing * (i, j)` inside each sector square
/// `[c - extent/2, c + extent/2)` around the face centre `c`, at every z
/// level, minus points inside the vehicle. Overlapping sectors share points.
/// Ordered by lattice index.
pub fn generate_synthetic_roi(spec: &SyntheticRoiSpec, vehicle: &VehicleModel) -> Result<RoiCloud> {
    spec.validate()?;
    vehicle.validate()?;
    let s = spec.spacing;
    let mut lattice: BTreeMap<(i64, i64, usize), Vec3> = BTreeMap::new();
    for &side in &spec.sides {
        let c = vehicle.face_centre(side);
        let lo = |v: f64| ((v - spec.extent / 2.0) / s).ceil() as i64;
        let hi = |v: f64| ((v + spec.extent / 2.0) / s).ceil() as i64;
        for i in lo(c.x)..hi(c.x) {
            for j in lo(c.y)..hi(c.y) {
                for (k, &z) in spec.z_levels.iter().enumerate() {
                    let p = Vec3::new(i as f64 * s, j as f64 * s, z);
                    if !vehicle.contains(p) {
                        lattice.insert((i, j, k), p);
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points = lattice
        .into_values()
        .map(|p| {
            let mut c = spec.profile.eval(box_distance(vehicle, p));
            if spec.jitter > 0.0 {
                c += rng.gen_range(-spec.jitter..=spec.jitter);
            }
            RoiPoint {
                xyz: p,
                criticality: c.clamp(0.0, 1.0),
            }
        })
        .collect();
    RoiCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_valid_file() {
        let f = write_tmp("x,y,z,criticality\n1,2,0.5,0.3\n-1.5,0,1,1\n3,3,3,0\n");
        let c = load_roi(f.path()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.points()[1], RoiPoint::new(-1.5, 0.0, 1.0, 1.0));
    }

    #[test]
    fn criticality_error_reports_line() {
        let mut text = String::from("x,y,z,criticality\n");
        for _ in 0..5 {
            text.push_str("1,1,1,0.5\n");
        }
        text.push_str("1,1,1,1.5\n");
        let f = write_tmp(&text);
        assert!(matches!(load_roi(f.path()), Err(Error::Parse { line: 7, .. })));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(load_roi(write_tmp("").path()), Err(Error::EmptyFile(_))));
        assert!(matches!(
            load_roi(write_tmp("x,y,z,criticality\n").path()),
            Err(Error::EmptyFile(_))
        ));
        assert!(matches!(
            load_roi(write_tmp("a,b,c,d\n1,1,1,1\n").path()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load_roi(write_tmp("x,y,z,criticality\n1,1,1,0.5\n1,oops,1,0.5\n").path()),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            load_roi(write_tmp("x,y,z,criticality\n1,1,NaN,0.5\n").path()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(pts in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -10f64..10.0, 0f64..=1.0), 1..40)) {
            let cloud = RoiCloud::new(pts.iter().map(|&(x, y, z, c)| RoiPoint::new(x, y, z, c)).collect()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("roi.csv");
            save_roi(&cloud, &path).unwrap();
            let back = load_roi(&path).unwrap();
            for (a, b) in cloud.points().iter().zip(back.points()) {
                prop_assert_eq!(a.xyz.x.to_bits(), b.xyz.x.to_bits());
                prop_assert_eq!(a.xyz.y.to_bits(), b.xyz.y.to_bits());
                prop_assert_eq!(a.xyz.z.to_bits(), b.xyz.z.to_bits());
                prop_assert_eq!(a.criticality.to_bits(), b.criticality.to_bits());
            }
            prop_assert_eq!(back.len(), cloud.len());
        }
    }

    #[test]
    fn front_sector_count_by_construction() {
        let vehicle = VehicleModel::default();
        let spec = SyntheticRoiSpec {
            sides: vec![Side::Front],
            z_levels: vec![0.75],
            ..Default::default()
        };
        let cloud = generate_synthetic_roi(&spec, &vehicle).unwrap();
        // front face centre x = 2.25: x in [-2.75, 7.25) gives 20 columns, y in [-5, 5) gives 20 rows
        let mut inside = 0;
        for i in -5..15 {
            for j in -10..10 {
                if vehicle.contains(Vec3::new(i as f64 * 0.5, j as f64 * 0.5, 0.75)) {
                    inside += 1;
                }
            }
        }
        assert!(inside > 0);
        assert_eq!(cloud.len(), 400 - inside);
        assert!(cloud.points().iter().all(|p| !vehicle.contains(p.xyz)));
    }

    #[test]
    fn profiles_and_determinism() {
        let vehicle = VehicleModel::default();
        let uni = SyntheticRoiSpec {
            profile: "uniform(1.0)".parse().unwrap(),
            ..Default::default()
        };
        let c = generate_synthetic_roi(&uni, &vehicle).unwrap();
        assert!(c.points().iter().all(|p| p.criticality == 1.0));

        let jit = SyntheticRoiSpec {
            jitter: 0.2,
            seed: 5,
            ..Default::default()
        };
        let a = generate_synthetic_roi(&jit, &vehicle).unwrap();
        assert_eq!(a, generate_synthetic_roi(&jit, &vehicle).unwrap());
        assert_ne!(
            a,
            generate_synthetic_roi(&SyntheticRoiSpec { seed: 6, ..jit.clone() }, &vehicle).unwrap()
        );
        assert!(a.points().iter().all(|p| (0.0..=1.0).contains(&p.criticality)));

        let all = generate_synthetic_roi(&SyntheticRoiSpec::default(), &vehicle).unwrap();
        let front_only = generate_synthetic_roi(
            &SyntheticRoiSpec {
                sides: vec![Side::Front],
                ..Default::default()
            },
            &vehicle,
        )
        .unwrap();
        assert!(all.len() < 4 * front_only.len());
    }

    #[test]
    fn profile_parsing() {
        assert_eq!(
            "inverse-distance(2)".parse::<CriticalityProfile>().unwrap(),
            CriticalityProfile::InverseDistance { scale: 2.0 }
        );
        assert!("uniform(1.5)".parse::<CriticalityProfile>().is_err());
        assert!("gaussian(1)".parse::<CriticalityProfile>().is_err());
        let p = CriticalityProfile::InverseDistance { scale: 2.0 };
        assert_eq!(p.to_string().parse::<CriticalityProfile>().unwrap(), p);
        assert!(SyntheticRoiSpec {
            spacing: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
