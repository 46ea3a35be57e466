//! Whole-vehicle aggregation, redundancy (adherence) metrics and CSV output.
//!
//! Aggregate coverage is recomputed over the full RoI with the global
//! criticality normalizer, so cross-side overlap counts once.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_count::SelectionResult;
use crate::geometry::{fov_contains_with, FovModel, RoiCloud, SensorConfig, SensorSpec, Side};

pub const ADHERENCE_THRESHOLD: f64 = 0.7;

pub const SWEEP_SCHEMA: &str = "# sensor-placement sweep v1";
pub const AGGREGATE_SCHEMA: &str = "# sensor-placement aggregate v1";
pub const ADHERENCE_SCHEMA: &str = "# sensor-placement adherence v1";

/// Fractions of critical points seen by at least two sensors, and by at
/// least two sensors of different types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Adherence {
    Fractions {
        critical_points: usize,
        two_sensors: f64,
        two_types: f64,
    },
    /// No point reaches the threshold.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub per_side: BTreeMap<Side, SelectionResult>,
    pub total_cost: f64,
    pub aggregate_coverage: f64,
    pub adherence: Adherence,
}

impl AggregateReport {
    pub fn selected_configs(&self) -> Vec<SensorConfig> {
        self.per_side.values().flat_map(|r| r.configs.iter().copied()).collect()
    }
}

/// Per point: number of selected FoVs containing it and number of distinct
/// sensor types among them.
fn point_hits(
    configs: &[SensorConfig],
    cloud: &RoiCloud,
    catalog: &[SensorSpec],
    fov: FovModel,
) -> Result<Vec<(usize, usize)>> {
    for c in configs {
        if c.type_index >= catalog.len() {
            return Err(Error::InvalidInput(format!(
                "{} references a type outside the catalog",
                c.label()
            )));
        }
    }
    Ok(cloud
        .points()
        .par_iter()
        .map(|p| {
            let mut n = 0;
            let mut types = BTreeSet::new();
            for c in configs {
                if fov_contains_with(fov, c, &catalog[c.type_index], p.xyz) {
                    n += 1;
                    types.insert(c.type_index);
                }
            }
            (n, types.len())
        })
        .collect())
}

pub fn adherence(
    configs: &[SensorConfig],
    cloud: &RoiCloud,
    catalog: &[SensorSpec],
    threshold: f64,
    fov: FovModel,
) -> Result<Adherence> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!(
            "adherence threshold {threshold} outside [0, 1]"
        )));
    }
    let hits = point_hits(configs, cloud, catalog, fov)?;
    Ok(adherence_from_hits(&hits, cloud, threshold))
}

fn adherence_from_hits(hits: &[(usize, usize)], cloud: &RoiCloud, threshold: f64) -> Adherence {
    let mut critical = 0;
    let mut two = 0;
    let mut two_types = 0;
    for (p, &(n, t)) in cloud.points().iter().zip(hits) {
        if p.criticality >= threshold {
            critical += 1;
            two += usize::from(n >= 2);
            two_types += usize::from(t >= 2);
        }
    }
    if critical == 0 {
        return Adherence::NotApplicable;
    }
    Adherence::Fractions {
        critical_points: critical,
        two_sensors: two as f64 / critical as f64,
        two_types: two_types as f64 / critical as f64,
    }
}

/// Joins the four side results over the full cloud.
pub fn aggregate(
    per_side: &BTreeMap<Side, SelectionResult>,
    cloud: &RoiCloud,
    catalog: &[SensorSpec],
    fov: FovModel,
) -> Result<AggregateReport> {
    for side in Side::ALL {
        if !per_side.contains_key(&side) {
            return Err(Error::MissingSide(side));
        }
    }
    if cloud.total_criticality() <= 0.0 {
        return Err(Error::ZeroCriticality);
    }
    let configs: Vec<SensorConfig> = per_side.values().flat_map(|r| r.configs.iter().copied()).collect();
    let hits = point_hits(&configs, cloud, catalog, fov)?;
    let mut covered = 0.0;
    for (p, &(n, _)) in cloud.points().iter().zip(&hits) {
        if n > 0 {
            covered += p.criticality;
        }
    }
    let mut total_cost = 0.0;
    for r in per_side.values() {
        total_cost += r.cost;
    }
    Ok(AggregateReport {
        per_side: per_side.clone(),
        total_cost,
        aggregate_coverage: covered / cloud.total_criticality(),
        adherence: adherence_from_hits(&hits, cloud, ADHERENCE_THRESHOLD),
    })
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub side: Side,
    pub n_s: Option<usize>,
    pub solver: String,
    pub runs: usize,
    pub coverage: Option<f64>,
    pub cost: Option<f64>,
    pub objective: Option<f64>,
    pub objective_mean: Option<f64>,
    pub objective_min: Option<f64>,
    pub objective_max: Option<f64>,
    pub feasible: Option<bool>,
    pub best: bool,
    pub status: String,
}

impl SweepRow {
    pub fn from_result(side: Side, n_s: Option<usize>, r: &SelectionResult) -> Self {
        Self {
            side,
            n_s,
            solver: r.solver.clone(),
            runs: 1,
            coverage: Some(r.coverage),
            cost: Some(r.cost),
            objective: Some(r.objective),
            objective_mean: Some(r.objective),
            objective_min: Some(r.objective),
            objective_max: Some(r.objective),
            feasible: Some(r.feasible),
            best: false,
            status: "ok".into(),
        }
    }

    pub fn from_error(side: Side, n_s: Option<usize>, solver: &str, err: &Error) -> Self {
        Self {
            side,
            n_s,
            solver: solver.into(),
            runs: 0,
            coverage: None,
            cost: None,
            objective: None,
            objective_mean: None,
            objective_min: None,
            objective_max: None,
            feasible: None,
            best: false,
            status: err.to_string(),
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_SCHEMA}")?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record([
        "side",
        "n_s",
        "solver",
        "runs",
        "coverage",
        "cost",
        "objective",
        "objective_mean",
        "objective_min",
        "objective_max",
        "feasible",
        "best",
        "status",
    ])?;
    for r in rows {
        c.write_record([
            r.side.to_string(),
            opt(r.n_s),
            r.solver.clone(),
            r.runs.to_string(),
            opt(r.coverage),
            opt(r.cost),
            opt(r.objective),
            opt(r.objective_mean),
            opt(r.objective_min),
            opt(r.objective_max),
            opt(r.feasible),
            r.best.to_string(),
            r.status.clone(),
        ])?;
    }
    c.flush()?;
    Ok(())
}

fn selection_labels(r: &SelectionResult) -> String {
    r.configs.iter().map(|c| c.label()).collect::<Vec<_>>().join(";")
}

/// Per-side rows followed by an `all` row per solver.
pub fn write_aggregate_csv<W: Write>(reports: &[(String, AggregateReport)], mut w: W) -> Result<()> {
    writeln!(w, "{AGGREGATE_SCHEMA}")?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["solver", "scope", "sensors", "coverage", "cost", "selection"])?;
    for (solver, rep) in reports {
        for (side, r) in &rep.per_side {
            c.write_record([
                solver.clone(),
                side.to_string(),
                r.selected.len().to_string(),
                r.coverage.to_string(),
                r.cost.to_string(),
                selection_labels(r),
            ])?;
        }
        let all: Vec<String> = rep
            .per_side
            .values()
            .map(selection_labels)
            .filter(|s| !s.is_empty())
            .collect();
        c.write_record([
            solver.clone(),
            "all".into(),
            rep.per_side
                .values()
                .map(|r| r.selected.len())
                .sum::<usize>()
                .to_string(),
            rep.aggregate_coverage.to_string(),
            rep.total_cost.to_string(),
            all.join(";"),
        ])?;
    }
    c.flush()?;
    Ok(())
}

pub fn write_adherence_csv<W: Write>(reports: &[(String, AggregateReport)], mut w: W) -> Result<()> {
    writeln!(w, "{ADHERENCE_SCHEMA}")?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["solver", "threshold", "critical_points", "two_sensors", "two_types"])?;
    for (solver, rep) in reports {
        let (n, a, b) = match rep.adherence {
            Adherence::Fractions {
                critical_points,
                two_sensors,
                two_types,
            } => (
                critical_points.to_string(),
                two_sensors.to_string(),
                two_types.to_string(),
            ),
            Adherence::NotApplicable => ("0".into(), "n/a".into(), "n/a".into()),
        };
        c.write_record([solver.clone(), ADHERENCE_THRESHOLD.to_string(), n, a, b])?;
    }
    c.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::build_coverage;
    use crate::geometry::{RoiPoint, Vec3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(name: &str, range: f64) -> SensorSpec {
        SensorSpec::new(name, 60.0, 60.0, range, 10.0).unwrap()
    }

    fn sensor(side: Side, t: usize, pos: Vec3, yaw: f64) -> SensorConfig {
        SensorConfig {
            side,
            type_index: t,
            cell: 0,
            orientation_index: 0,
            orientation: yaw,
            position: pos,
        }
    }

    fn result_for(configs: Vec<SensorConfig>, coverage: f64, catalog: &[SensorSpec]) -> SelectionResult {
        let cost = configs.iter().map(|c| catalog[c.type_index].cost).sum();
        SelectionResult {
            selected: (0..configs.len()).collect(),
            configs,
            coverage,
            cost,
            objective: -coverage,
            solver: "test".into(),
            feasible: true,
            seed: None,
            run_index: None,
        }
    }

    #[test]
    fn definitional_adherence_cases() {
        let cat = vec![spec("lidar", 10.0), spec("camera", 10.0)];
        let cloud = RoiCloud::new(vec![RoiPoint::new(5.0, 0.0, 0.0, 0.9)]).unwrap();
        let mixed = [
            sensor(Side::Front, 0, Vec3::default(), 0.0),
            sensor(Side::Front, 1, Vec3::new(0.0, 0.1, 0.0), 0.0),
        ];
        let a = adherence(&mixed, &cloud, &cat, 0.7, FovModel::EllipticalCone).unwrap();
        assert_eq!(
            a,
            Adherence::Fractions {
                critical_points: 1,
                two_sensors: 1.0,
                two_types: 1.0
            }
        );
        let same = [
            sensor(Side::Front, 0, Vec3::default(), 0.0),
            sensor(Side::Front, 0, Vec3::new(0.0, 0.1, 0.0), 0.0),
        ];
        let a = adherence(&same, &cloud, &cat, 0.7, FovModel::EllipticalCone).unwrap();
        assert_eq!(
            a,
            Adherence::Fractions {
                critical_points: 1,
                two_sensors: 1.0,
                two_types: 0.0
            }
        );
        let low = RoiCloud::new(vec![RoiPoint::new(5.0, 0.0, 0.0, 0.5)]).unwrap();
        assert_eq!(
            adherence(&same, &low, &cat, 0.7, FovModel::EllipticalCone).unwrap(),
            Adherence::NotApplicable
        );
        assert!(adherence(&same, &low, &cat, 1.5, FovModel::EllipticalCone).is_err());
    }

    /// One point per side, 8 m out along each face normal, with one sensor
    /// per side aimed at it.
    fn four_sides(range: f64, offset_y: f64) -> (RoiCloud, Vec<SensorSpec>, BTreeMap<Side, SelectionResult>) {
        let cat = vec![spec("s", range)];
        let mut points = Vec::new();
        let mut per_side = BTreeMap::new();
        let crit = [1.0, 0.5, 0.25, 0.75];
        for (k, side) in Side::ALL.into_iter().enumerate() {
            let p = side.normal() * 8.0;
            points.push(RoiPoint::new(p.x, p.y, p.z, crit[k]));
            let cfg = sensor(side, 0, side.normal() * 1.0 + Vec3::new(0.0, offset_y, 0.0), 0.0);
            per_side.insert(side, result_for(vec![cfg], 1.0, &cat));
        }
        (RoiCloud::new(points).unwrap(), cat, per_side)
    }

    #[test]
    fn disjoint_sides_give_weighted_mean() {
        let (cloud, cat, per_side) = four_sides(10.0, 0.0);
        let rep = aggregate(&per_side, &cloud, &cat, FovModel::EllipticalCone).unwrap();
        assert!((rep.aggregate_coverage - 1.0).abs() < 1e-15);
        assert_eq!(rep.total_cost, 40.0);
        // weighted mean of side coverages (each 1.0) with criticality shares
        let mean: f64 = cloud.points().iter().map(|p| p.criticality).sum::<f64>() / cloud.total_criticality();
        assert!((rep.aggregate_coverage - mean).abs() < 1e-15);
    }

    #[test]
    fn missing_side_and_empty_selection() {
        let (cloud, cat, mut per_side) = four_sides(10.0, 0.0);
        let empties: BTreeMap<Side, SelectionResult> = Side::ALL
            .into_iter()
            .map(|s| (s, result_for(vec![], 0.0, &cat)))
            .collect();
        let rep = aggregate(&empties, &cloud, &cat, FovModel::EllipticalCone).unwrap();
        assert_eq!((rep.aggregate_coverage, rep.total_cost), (0.0, 0.0));
        per_side.remove(&Side::Left);
        assert!(matches!(
            aggregate(&per_side, &cloud, &cat, FovModel::EllipticalCone),
            Err(Error::MissingSide(Side::Left))
        ));
    }

    #[test]
    fn cross_side_overlap_exceeds_weighted_mean() {
        // front sub-cloud: one point ahead; left sub-cloud: one point ahead-left
        // that only the front sensor reaches
        let cat = vec![
            SensorSpec::new("wide", 170.0, 60.0, 20.0, 1.0).unwrap(),
            SensorSpec::new("narrow", 20.0, 20.0, 20.0, 1.0).unwrap(),
        ];
        let vehicle = crate::geometry::VehicleModel::default();
        let cloud = RoiCloud::new(vec![
            RoiPoint::new(8.0, 0.0, 0.75, 1.0),
            RoiPoint::new(3.0, 6.0, 0.75, 1.0),
        ])
        .unwrap();
        let part = crate::geometry::partition_roi(&cloud, &vehicle).unwrap();
        assert_eq!(part.cloud.side_labels().unwrap(), &[Side::Front, Side::Left]);
        let front = sensor(Side::Front, 0, Vec3::new(2.25, 0.0, 0.75), 0.0);
        let left = sensor(Side::Left, 1, Vec3::new(-2.0, 0.9, 0.75), 0.0);
        let mut per_side = BTreeMap::new();
        let mut shares = 0.0;
        for (side, cfg) in [(Side::Front, front), (Side::Left, left)] {
            let d = build_coverage(&part.cloud, &[cfg], &cat, FovModel::EllipticalCone).unwrap();
            let share = part.cloud.side_indices(side).len() as f64 / 2.0;
            shares += share * d.mu()[0];
            per_side.insert(side, result_for(vec![cfg], d.mu()[0], &cat));
        }
        for side in [Side::Back, Side::Right] {
            per_side.insert(side, result_for(vec![], 0.0, &cat));
        }
        let rep = aggregate(&per_side, &part.cloud, &cat, FovModel::EllipticalCone).unwrap();
        assert!(per_side[&Side::Left].coverage == 0.0);
        assert!(
            rep.aggregate_coverage > shares + 1e-9,
            "{} vs {}",
            rep.aggregate_coverage,
            shares
        );
    }

    fn random_case(seed: u64) -> (RoiCloud, Vec<SensorSpec>, Vec<SensorConfig>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cat = vec![spec("a", 8.0), spec("b", 12.0), spec("c", 5.0)];
        let pts = (0..150)
            .map(|_| {
                RoiPoint::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(0.0..2.0),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        let cfgs = (0..6)
            .map(|_| {
                sensor(
                    Side::ALL[rng.gen_range(0..4)],
                    rng.gen_range(0..3),
                    Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), 0.75),
                    rng.gen_range(-90.0..90.0),
                )
            })
            .collect();
        (RoiCloud::new(pts).unwrap(), cat, cfgs)
    }

    #[test]
    fn matches_nested_loop_oracle() {
        for seed in 0..10 {
            let (cloud, cat, cfgs) = random_case(seed);
            let (mut crit, mut two, mut types) = (0usize, 0usize, 0usize);
            for p in cloud.points() {
                if p.criticality < 0.7 {
                    continue;
                }
                crit += 1;
                let inside: Vec<&SensorConfig> = cfgs
                    .iter()
                    .filter(|c| crate::geometry::fov_contains(c, &cat[c.type_index], p.xyz))
                    .collect();
                if inside.len() >= 2 {
                    two += 1;
                }
                if inside
                    .iter()
                    .any(|a| inside.iter().any(|b| a.type_index != b.type_index))
                {
                    types += 1;
                }
            }
            let got = adherence(&cfgs, &cloud, &cat, 0.7, FovModel::EllipticalCone).unwrap();
            assert_eq!(
                got,
                Adherence::Fractions {
                    critical_points: crit,
                    two_sensors: two as f64 / crit as f64,
                    two_types: types as f64 / crit as f64
                }
            );
        }
    }

    proptest! {
        #[test]
        fn order_invariant_and_bounded(seed in 0u64..1000, rot in 0usize..6) {
            let (cloud, cat, mut cfgs) = random_case(seed);
            let a = adherence(&cfgs, &cloud, &cat, 0.7, FovModel::EllipticalCone).unwrap();
            cfgs.rotate_left(rot);
            cfgs.reverse();
            prop_assert_eq!(a, adherence(&cfgs, &cloud, &cat, 0.7, FovModel::EllipticalCone).unwrap());
            if let Adherence::Fractions { two_sensors, two_types, .. } = a {
                prop_assert!(two_types <= two_sensors && (0.0..=1.0).contains(&two_sensors));
            }
        }
    }

    #[test]
    fn csv_layouts() {
        let (cloud, cat, per_side) = four_sides(10.0, 0.0);
        let rep = aggregate(&per_side, &cloud, &cat, FovModel::EllipticalCone).unwrap();
        let reports = vec![("exhaustive".to_string(), rep)];
        let mut out = Vec::new();
        write_aggregate_csv(&reports, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], AGGREGATE_SCHEMA);
        assert_eq!(lines[1], "solver,scope,sensors,coverage,cost,selection");
        assert_eq!(lines[2], "exhaustive,front,1,1,10,front_t0_p0_o0");
        assert_eq!(lines.len(), 7);
        assert!(lines[6].starts_with("exhaustive,all,4,1,40,"));

        let mut out = Vec::new();
        write_adherence_csv(&reports, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "solver,threshold,critical_points,two_sensors,two_types"
        );

        let rows = vec![
            SweepRow {
                best: true,
                ..SweepRow::from_result(Side::Front, Some(1), &per_side[&Side::Front])
            },
            SweepRow::from_error(
                Side::Front,
                Some(2),
                "exhaustive",
                &Error::Infeasible("n_s = 2, only 1 position".into()),
            ),
        ];
        let mut out = Vec::new();
        write_sweep_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SWEEP_SCHEMA);
        assert_eq!(lines[2], "front,1,test,1,1,10,-1,-1,-1,-1,true,true,ok");
        assert_eq!(
            lines[3],
            "front,2,exhaustive,0,,,,,,,,false,\"infeasible: n_s = 2, only 1 position\""
        );
    }
}
