//! Instance generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensor_placement::geometry::{
    grid_positions, PlacementGrid, RoiCloud, RoiPoint, SensorConfig, SensorSpec, Side, VehicleModel,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two camera-like types and a LiDAR-like type, so that both same-type and
/// mixed-type overlaps occur.
pub fn mixed_catalog() -> Vec<SensorSpec> {
    vec![
        SensorSpec::new("Camera", 90.0, 60.0, 9.0, 120.0).unwrap(),
        SensorSpec::new("LiDAR", 80.0, 40.0, 14.0, 200.0).unwrap(),
        SensorSpec::new("Camera", 60.0, 45.0, 11.0, 150.0).unwrap(),
    ]
}

pub fn random_config(rng: &mut ChaCha8Rng, vehicle: &VehicleModel, n_types: usize) -> SensorConfig {
    let side = Side::ALL[rng.gen_range(0..4)];
    let grid = PlacementGrid::perpendicular(side, 3, 3);
    let positions = grid_positions(vehicle, &grid);
    let cell = rng.gen_range(0..positions.len());
    SensorConfig {
        side,
        type_index: rng.gen_range(0..n_types),
        cell,
        orientation_index: 0,
        orientation: rng.gen_range(-60.0..60.0),
        position: positions[cell],
    }
}

pub fn random_point(rng: &mut ChaCha8Rng) -> RoiPoint {
    RoiPoint::new(
        rng.gen_range(-14.0..14.0),
        rng.gen_range(-12.0..12.0),
        rng.gen_range(-1.0..3.0),
        rng.gen_range(0.0..1.0),
    )
}

/// Random cloud and configurations around the default vehicle.
pub fn random_instance(seed: u64, n_points: usize, n_configs: usize) -> (RoiCloud, Vec<SensorConfig>, Vec<SensorSpec>) {
    let mut r = rng(seed);
    let vehicle = VehicleModel::default();
    let catalog = mixed_catalog();
    let points: Vec<RoiPoint> = (0..n_points).map(|_| random_point(&mut r)).collect();
    let configs = (0..n_configs)
        .map(|_| random_config(&mut r, &vehicle, catalog.len()))
        .collect();
    (RoiCloud::new(points).unwrap(), configs, catalog)
}

/// Elliptical-cone membership worked out in polar form: bearing of the
/// point relative to the boresight, then the tangent ratios.
pub fn oracle_fov(cfg: &SensorConfig, spec: &SensorSpec, p: [f64; 3]) -> bool {
    let (dx, dy, dz) = (p[0] - cfg.position.x, p[1] - cfg.position.y, p[2] - cfg.position.z);
    let dist = (dx * dx + dy * dy + dz * dz).sqrt();
    if dist == 0.0 {
        return true;
    }
    if dist > spec.range {
        return false;
    }
    let normal = match cfg.side {
        Side::Front => 0.0,
        Side::Left => 90.0,
        Side::Back => 180.0,
        Side::Right => -90.0,
    };
    let heading = (normal + cfg.orientation).to_radians();
    let rho = dx.hypot(dy);
    let rel = dy.atan2(dx) - heading;
    let forward = rho * rel.cos();
    if forward <= 0.0 {
        return false;
    }
    let a = (rho * rel.sin() / forward) / (spec.alpha_h / 2.0).to_radians().tan();
    let b = (dz / forward) / (spec.alpha_v / 2.0).to_radians().tan();
    a * a + b * b <= 1.0
}

pub fn xyz(p: &RoiPoint) -> [f64; 3] {
    [p.xyz.x, p.xyz.y, p.xyz.z]
}

/// Coverage indicator matrix `[config][point]` by direct evaluation.
pub fn oracle_indicator(cloud: &RoiCloud, configs: &[SensorConfig], catalog: &[SensorSpec]) -> Vec<Vec<bool>> {
    configs
        .iter()
        .map(|c| {
            cloud
                .points()
                .iter()
                .map(|p| oracle_fov(c, &catalog[c.type_index], xyz(p)))
                .collect()
        })
        .collect()
}

/// Ascending-order criticality sum of the points where `keep` holds, over the total.
pub fn oracle_weighted(cloud: &RoiCloud, keep: impl Fn(usize) -> bool) -> f64 {
    let mut total = 0.0;
    let mut acc = 0.0;
    for (r, p) in cloud.points().iter().enumerate() {
        total += p.criticality;
        if keep(r) {
            acc += p.criticality;
        }
    }
    acc / total
}
