//! Per-configuration coverage rows, the weighted singles `mu` and pairwise
//! intersections `sigma`, and exact union coverage.
//!
//! Weighted cardinalities are always accumulated point by point in ascending
//! point order and divided by the normalizer once at the end, so every route
//! to the same set (mu, sigma, unions) yields bit-identical values.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{fov_contains_with, FovModel, RoiCloud, SensorConfig, SensorSpec};

/// Packed boolean row over the points of a coverage universe.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitRow {
    words: Vec<u64>,
    len: usize,
}

impl BitRow {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn or_assign(&mut self, other: &BitRow) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn and(&self, other: &BitRow) -> BitRow {
        BitRow {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
            len: self.len,
        }
    }

    /// Set bit positions in ascending order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

/// Coverage data for one universe of RoI points (a side sub-cloud or the
/// full cloud) and an ordered list of configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageData {
    configs: Vec<SensorConfig>,
    costs: Vec<f64>,
    /// Indices of the universe points in the source cloud.
    point_indices: Vec<usize>,
    weights: Vec<f64>,
    normalizer: f64,
    rows: Vec<BitRow>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl CoverageData {
    pub fn n_configs(&self) -> usize {
        self.configs.len()
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn configs(&self) -> &[SensorConfig] {
        &self.configs
    }

    pub fn config(&self, i: usize) -> &SensorConfig {
        &self.configs[i]
    }

    /// Unit cost of each configuration's sensor type.
    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn point_indices(&self) -> &[usize] {
        &self.point_indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn row(&self, i: usize) -> &BitRow {
        &self.rows[i]
    }

    /// `y`: whether configuration `i` covers universe point `r`.
    pub fn covers(&self, i: usize, r: usize) -> bool {
        self.rows[i].get(r)
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.n_configs() + j]
    }

    /// Row-major dense `sigma`.
    pub fn sigma_matrix(&self) -> &[f64] {
        &self.sigma
    }

    /// Weighted cardinality of the points set in `bits`.
    pub fn weighted_sum(&self, bits: &BitRow) -> f64 {
        let mut acc = 0.0;
        for r in bits.iter_ones() {
            acc += self.weights[r];
        }
        acc / self.normalizer
    }

    pub fn union_row(&self, selection: &[usize]) -> BitRow {
        let mut acc = BitRow::zeros(self.n_points());
        for &i in selection {
            acc.or_assign(&self.rows[i]);
        }
        acc
    }

    pub fn cost_of(&self, selection: &[usize]) -> f64 {
        selection.iter().map(|&i| self.costs[i]).sum()
    }

    /// Position key (side, cell) of configuration `i`.
    pub fn position_of(&self, i: usize) -> (crate::geometry::Side, usize) {
        let c = &self.configs[i];
        (c.side, c.cell)
    }
}

/// Builds coverage for `configs` over `cloud`.
///
/// When the cloud is partitioned and every configuration sits on the same
/// side, the universe is that side's sub-cloud and the normalizer its
/// criticality sum. Otherwise the full cloud is used.
pub fn build_coverage(
    cloud: &RoiCloud,
    configs: &[SensorConfig],
    catalog: &[SensorSpec],
    fov: FovModel,
) -> Result<CoverageData> {
    let single_side = configs
        .first()
        .map(|c| c.side)
        .filter(|s| configs.iter().all(|c| c.side == *s));
    let indices: Vec<usize> = match single_side {
        Some(side) if cloud.is_partitioned() => cloud.side_indices(side),
        _ => (0..cloud.len()).collect(),
    };
    build_coverage_over(cloud, &indices, configs, catalog, fov)
}

/// Coverage over the whole cloud regardless of side labels.
pub fn build_global_coverage(
    cloud: &RoiCloud,
    configs: &[SensorConfig],
    catalog: &[SensorSpec],
    fov: FovModel,
) -> Result<CoverageData> {
    let indices: Vec<usize> = (0..cloud.len()).collect();
    build_coverage_over(cloud, &indices, configs, catalog, fov)
}

pub fn build_coverage_over(
    cloud: &RoiCloud,
    indices: &[usize],
    configs: &[SensorConfig],
    catalog: &[SensorSpec],
    fov: FovModel,
) -> Result<CoverageData> {
    if indices.is_empty() {
        return Err(Error::EmptyCloud);
    }
    for c in configs {
        if c.type_index >= catalog.len() {
            return Err(Error::InvalidInput(format!(
                "configuration {} references sensor type {} outside the catalog",
                c.label(),
                c.type_index
            )));
        }
    }
    let points = cloud.points();
    let weights: Vec<f64> = indices.iter().map(|&i| points[i].criticality).collect();
    let mut normalizer = 0.0;
    for w in &weights {
        normalizer += w;
    }
    if normalizer <= 0.0 {
        return Err(Error::ZeroCriticality);
    }

    let rows: Vec<BitRow> = configs
        .par_iter()
        .map(|cfg| {
            let spec = &catalog[cfg.type_index];
            let mut row = BitRow::zeros(indices.len());
            for (r, &pi) in indices.iter().enumerate() {
                if fov_contains_with(fov, cfg, spec, points[pi].xyz) {
                    row.set(r);
                }
            }
            row
        })
        .collect();

    let mut data = CoverageData {
        configs: configs.to_vec(),
        costs: configs.iter().map(|c| catalog[c.type_index].cost).collect(),
        point_indices: indices.to_vec(),
        weights,
        normalizer,
        rows,
        mu: Vec::new(),
        sigma: Vec::new(),
    };
    data.fill_moments();
    Ok(data)
}

impl CoverageData {
    fn fill_moments(&mut self) {
        let n = self.n_configs();
        let sigma = self.pairwise_sigma();
        self.mu = (0..n).map(|i| sigma[i * n + i]).collect();
        self.sigma = sigma;
    }

    fn pairwise_sigma(&self) -> Vec<f64> {
        let n = self.n_configs();
        let upper: Vec<(usize, usize, f64)> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (i..n).map(move |j| (i, j, self.weighted_sum(&self.rows[i].and(&self.rows[j])))))
            .collect();
        let mut sigma = vec![0.0; n * n];
        for (i, j, v) in upper {
            sigma[i * n + j] = v;
            sigma[j * n + i] = v;
        }
        sigma
    }
}

impl CoverageData {
    /// Assembles coverage data from explicit indicator rows (`rows[i]` lists
    /// the universe points configuration `i` covers).
    pub fn from_parts(
        configs: Vec<SensorConfig>,
        costs: Vec<f64>,
        weights: Vec<f64>,
        rows: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if configs.len() != costs.len() || configs.len() != rows.len() {
            return Err(Error::InvalidInput("configs, costs and rows differ in length".into()));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidInput("weights must lie in [0, 1]".into()));
        }
        let mut normalizer = 0.0;
        for w in &weights {
            normalizer += w;
        }
        if normalizer <= 0.0 {
            return Err(Error::ZeroCriticality);
        }
        let mut bit_rows = Vec::with_capacity(rows.len());
        for r in &rows {
            let mut b = BitRow::zeros(weights.len());
            for &p in r {
                if p >= weights.len() {
                    return Err(Error::InvalidInput(format!("point index {p} out of range")));
                }
                b.set(p);
            }
            bit_rows.push(b);
        }
        let mut data = CoverageData {
            configs,
            costs,
            point_indices: (0..weights.len()).collect(),
            weights,
            normalizer,
            rows: bit_rows,
            mu: Vec::new(),
            sigma: Vec::new(),
        };
        data.fill_moments();
        Ok(data)
    }
}

/// `V_cov`: weighted cardinality of the union of the selected FoVs.
pub fn exact_union_coverage(selection: &[usize], data: &CoverageData) -> f64 {
    data.weighted_sum(&data.union_row(selection))
}

/// A subset of cloud points with its criticality-weighted cardinality.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSet {
    pub members: Vec<usize>,
    pub weighted_cardinality: f64,
}

impl WeightedSet {
    pub fn new(members: Vec<usize>, cloud: &RoiCloud) -> Self {
        let weighted_cardinality = weighted_cardinality(&members, cloud);
        Self {
            members,
            weighted_cardinality,
        }
    }
}

/// Sum of member criticalities over the cloud's total criticality.
pub fn weighted_cardinality(members: &[usize], cloud: &RoiCloud) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let pts = cloud.points();
    let sum: f64 = members.iter().map(|&i| pts[i].criticality).sum();
    sum / cloud.total_criticality()
}

/// Content hash of everything coverage depends on, used as a cache key.
pub fn cache_key(cloud: &RoiCloud, configs: &[SensorConfig], catalog: &[SensorSpec], fov: FovModel) -> String {
    let mut h = Sha256::new();
    for p in cloud.points() {
        for v in [p.xyz.x, p.xyz.y, p.xyz.z, p.criticality] {
            h.update(v.to_le_bytes());
        }
    }
    if let Some(labels) = cloud.side_labels() {
        h.update(labels.iter().map(|s| *s as u8).collect::<Vec<_>>());
    }
    h.update(serde_json::to_vec(configs).expect("configs serialize"));
    h.update(serde_json::to_vec(catalog).expect("catalog serializes"));
    h.update(serde_json::to_vec(&fov).expect("fov serializes"));
    hex::encode(h.finalize())
}

const CACHE_MAGIC: &[u8; 8] = b"SPCOVv01";

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    key: String,
    configs: Vec<SensorConfig>,
    costs: Vec<f64>,
    point_indices: Vec<usize>,
    weights: Vec<f64>,
    normalizer: f64,
}

impl CoverageData {
    /// Writes a binary cache: magic, JSON header length and header, then the
    /// packed rows, `mu` and `sigma` as little-endian words.
    pub fn save_cache(&self, path: &Path, key: &str) -> Result<()> {
        let header = serde_json::to_vec(&CacheHeader {
            key: key.to_string(),
            configs: self.configs.clone(),
            costs: self.costs.clone(),
            point_indices: self.point_indices.clone(),
            weights: self.weights.clone(),
            normalizer: self.normalizer,
        })?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for row in &self.rows {
            for w in &row.words {
                buf.extend_from_slice(&w.to_le_bytes());
            }
        }
        for v in self.mu.iter().chain(&self.sigma) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    /// Loads a cache file, returning `None` when its key differs from `key`.
    pub fn load_cache(path: &Path, key: &str) -> Result<Option<Self>> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let bad = || Error::InvalidInput(format!("corrupt coverage cache {}", path.display()));
        if buf.len() < 16 || &buf[..8] != CACHE_MAGIC {
            return Err(bad());
        }
        let hlen = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let header: CacheHeader = serde_json::from_slice(buf.get(16..16 + hlen).ok_or_else(bad)?)?;
        if header.key != key {
            return Ok(None);
        }
        let mut words = buf[16 + hlen..].chunks_exact(8).map(|c| c.try_into().unwrap());
        let n = header.configs.len();
        let npts = header.weights.len();
        let wpr = npts.div_ceil(64);
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row = BitRow::zeros(npts);
            for w in row.words.iter_mut() {
                *w = u64::from_le_bytes(words.next().ok_or_else(bad)?);
            }
            rows.push(row);
        }
        let mut floats = Vec::with_capacity(n + n * n);
        for _ in 0..n + n * n {
            floats.push(f64::from_le_bytes(words.next().ok_or_else(bad)?));
        }
        debug_assert!(rows.iter().all(|r| r.words.len() == wpr));
        let sigma = floats.split_off(n);
        Ok(Some(Self {
            configs: header.configs,
            costs: header.costs,
            point_indices: header.point_indices,
            weights: header.weights,
            normalizer: header.normalizer,
            rows,
            mu: floats,
            sigma,
        }))
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::geometry::*;

    /// Random cloud around a small vehicle with `configs` random front-side
    /// sensors of two types.
    pub fn random_instance(
        seed: u64,
        n_points: usize,
        n_configs: usize,
    ) -> (RoiCloud, Vec<SensorConfig>, Vec<SensorSpec>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n_points)
            .map(|_| {
                RoiPoint::new(
                    rng.gen_range(-2.0..15.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-2.0..4.0),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        let catalog = vec![
            SensorSpec::new("wide", 90.0, 60.0, 8.0, 120.0).unwrap(),
            SensorSpec::new("long", 50.0, 30.0, 14.0, 200.0).unwrap(),
        ];
        let configs = (0..n_configs)
            .map(|k| SensorConfig {
                side: Side::Front,
                type_index: rng.gen_range(0..2),
                cell: k % 4,
                orientation_index: 0,
                orientation: rng.gen_range(-60.0..60.0),
                position: Vec3::new(0.0, rng.gen_range(-1.0..1.0), rng.gen_range(0.2..1.4)),
            })
            .collect();
        (RoiCloud::new(pts).unwrap(), configs, catalog)
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::random_instance;
    use super::*;
    use crate::geometry::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bitrow_ops() {
        let mut a = BitRow::zeros(130);
        a.set(0);
        a.set(64);
        a.set(129);
        assert_eq!(a.iter_ones().collect::<Vec<_>>(), vec![0, 64, 129]);
        let mut b = BitRow::zeros(130);
        b.set(64);
        b.set(3);
        assert_eq!(a.and(&b).iter_ones().collect::<Vec<_>>(), vec![64]);
        b.or_assign(&a);
        assert_eq!(b.count_ones(), 4);
        assert!(b.get(3) && !b.get(4));
    }

    #[test]
    fn missing_config_and_duplicates() {
        let (cloud, mut configs, catalog) = random_instance(3, 200, 4);
        // a sensor pointing away from every point
        configs.push(SensorConfig {
            orientation: 180.0,
            position: Vec3::new(-50.0, 0.0, 0.0),
            ..configs[0]
        });
        configs.push(configs[1]);
        let d = build_coverage(&cloud, &configs, &catalog, FovModel::EllipticalCone).unwrap();
        let miss = 4;
        assert_eq!(d.mu()[miss], 0.0);
        for j in 0..d.n_configs() {
            assert_eq!(d.sigma(miss, j), 0.0);
            assert_eq!(d.sigma(j, miss), 0.0);
        }
        let dup = 5;
        assert_eq!(d.sigma(1, dup), d.mu()[1]);
        assert_eq!(d.mu()[1], d.mu()[dup]);
    }

    #[test]
    fn sigma_matches_nested_loop() {
        let (cloud, configs, catalog) = random_instance(11, 200, 8);
        let d = build_coverage(&cloud, &configs, &catalog, FovModel::EllipticalCone).unwrap();
        let pts = cloud.points();
        let total: f64 = pts.iter().map(|p| p.criticality).fold(0.0, |a, b| a + b);
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = 0.0;
                for p in pts {
                    if fov_contains(&configs[i], &catalog[configs[i].type_index], p.xyz)
                        && fov_contains(&configs[j], &catalog[configs[j].type_index], p.xyz)
                    {
                        acc += p.criticality;
                    }
                }
                assert_eq!(d.sigma(i, j), acc / total);
            }
        }
    }

    #[test]
    fn sigma_invariants() {
        let (cloud, configs, catalog) = random_instance(5, 300, 10);
        let d = build_coverage(&cloud, &configs, &catalog, FovModel::EllipticalCone).unwrap();
        let n = d.n_configs();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..n {
            assert_eq!(d.sigma(i, i), d.mu()[i]);
            for j in 0..n {
                let s = d.sigma(i, j);
                assert_eq!(s, d.sigma(j, i));
                assert!(s >= 0.0 && s <= d.mu()[i].min(d.mu()[j]) && s <= 1.0);
            }
        }
        for _ in 0..100 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut q = 0.0;
            for i in 0..n {
                for j in 0..n {
                    q += v[i] * d.sigma(i, j) * v[j];
                }
            }
            assert!(q >= -1e-9);
        }
    }

    #[test]
    fn union_basics_and_monotonicity() {
        let (cloud, configs, catalog) = random_instance(8, 250, 8);
        let d = build_coverage(&cloud, &configs, &catalog, FovModel::EllipticalCone).unwrap();
        assert_eq!(exact_union_coverage(&[], &d), 0.0);
        for i in 0..8 {
            assert_eq!(exact_union_coverage(&[i], &d), d.mu()[i]);
        }
        let mut prev = 0.0;
        for k in 1..=8 {
            let sel: Vec<usize> = (0..k).collect();
            let v = exact_union_coverage(&sel, &d);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn point_order_independence() {
        let (cloud, configs, catalog) = random_instance(21, 150, 6);
        let mut pts = cloud.points().to_vec();
        pts.reverse();
        let rev = RoiCloud::new(pts).unwrap();
        let a = build_coverage(&cloud, &configs, &catalog, FovModel::EllipticalCone).unwrap();
        let b = build_coverage(&rev, &configs, &catalog, FovModel::EllipticalCone).unwrap();
        for (x, y) in a.sigma_matrix().iter().zip(b.sigma_matrix()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn side_universe_uses_side_normalizer() {
        let v = VehicleModel::default();
        let cloud = RoiCloud::new(vec![
            RoiPoint::new(10.0, 0.0, 0.5, 0.5),
            RoiPoint::new(12.0, 0.0, 0.5, 0.5),
            RoiPoint::new(0.0, 10.0, 0.5, 1.0),
        ])
        .unwrap();
        let part = partition_roi(&cloud, &v).unwrap().cloud;
        let catalog = default_catalog();
        let cfgs = enumerate_side_configs(&catalog, &v, &PlacementGrid::perpendicular(Side::Front, 1, 1));
        let d = build_coverage(&part, &cfgs, &catalog, FovModel::EllipticalCone).unwrap();
        assert_eq!(d.n_points(), 2);
        assert_eq!(d.normalizer(), 1.0);
        assert_eq!(d.mu()[0], 1.0); // LiDAR covers both front points
        let g = build_global_coverage(&part, &cfgs, &catalog, FovModel::EllipticalCone).unwrap();
        assert_eq!(g.normalizer(), 2.0);
        assert_eq!(g.mu()[0], 0.5);
    }

    #[test]
    fn zero_criticality_and_empty() {
        let cloud = RoiCloud::new(vec![RoiPoint::new(1.0, 0.0, 0.0, 0.0)]).unwrap();
        let (_, cfgs, cat) = random_instance(1, 1, 2);
        assert!(matches!(
            build_coverage(&cloud, &cfgs, &cat, FovModel::EllipticalCone),
            Err(Error::ZeroCriticality)
        ));
        assert!(matches!(
            build_coverage_over(&cloud, &[], &cfgs, &cat, FovModel::EllipticalCone),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn weighted_cardinality_examples() {
        let cloud = RoiCloud::new(vec![
            RoiPoint::new(0.0, 0.0, 0.0, 0.5),
            RoiPoint::new(1.0, 0.0, 0.0, 0.7),
            RoiPoint::new(2.0, 0.0, 0.0, 0.8),
        ])
        .unwrap();
        assert!((weighted_cardinality(&[0, 1], &cloud) - 0.6).abs() < 1e-15);
        assert_eq!(weighted_cardinality(&[], &cloud), 0.0);
        assert_eq!(WeightedSet::new(vec![0, 1, 2], &cloud).weighted_cardinality, 1.0);
    }

    #[test]
    fn cache_round_trip() {
        let (cloud, configs, catalog) = random_instance(4, 100, 5);
        let d = build_coverage(&cloud, &configs, &catalog, FovModel::EllipticalCone).unwrap();
        let key = cache_key(&cloud, &configs, &catalog, FovModel::EllipticalCone);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cov.bin");
        d.save_cache(&path, &key).unwrap();
        assert_eq!(CoverageData::load_cache(&path, &key).unwrap(), Some(d));
        assert_eq!(CoverageData::load_cache(&path, "other").unwrap(), None);
        assert_ne!(
            key,
            cache_key(&cloud, &configs[1..], &catalog, FovModel::EllipticalCone)
        );
    }
}
