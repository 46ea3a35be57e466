//! Whole-vehicle runs: RoI, per-side coverage, solvers, aggregation, outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annealer::{anneal, best_selection, SampleSet};
use crate::config::{derive_seed, Approach, RunConfig, SolverKind};
use crate::coverage::{build_coverage, cache_key, CoverageData};
use crate::error::{Error, Result};
use crate::fixed_count::{solve_classical, sweep_ns, write_lp, ClassicalSolver, FixedCountProblem, SelectionResult};
use crate::geometry::{
    default_catalog, enumerate_side_configs, load_catalog, partition_roi, PlacementGrid, RoiCloud, SensorSpec, Side,
    VehicleModel,
};
use crate::reporting::{
    aggregate, write_adherence_csv, write_aggregate_csv, write_sweep_csv, AggregateReport, SweepRow,
};
use crate::roi::{generate_synthetic_roi, load_roi};
use crate::setcover::{
    build_iqp, build_iqp_with_position_penalty, selection_from_bits, solve_exhaustive_qubo, to_ising, write_iqp_lp,
    write_qubo, QuadraticModel,
};
use crate::vqe::{run_protocol, vqe_fixed_count, vqe_ising, write_trace_csv, EncodingMap, ProtocolSummary, TracePoint};

/// Catalog, vehicle, grids and the side-labelled cloud for one config.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub catalog: Vec<SensorSpec>,
    pub vehicle: VehicleModel,
    pub grids: BTreeMap<Side, PlacementGrid>,
    pub cloud: RoiCloud,
    /// Points dropped for lying inside the vehicle.
    pub excluded: usize,
}

pub fn prepare(cfg: &RunConfig) -> Result<Inputs> {
    cfg.validate()?;
    let catalog = match &cfg.catalog {
        Some(p) => load_catalog(p)?,
        None => default_catalog(),
    };
    cfg.validate_with(catalog.len())?;
    let vehicle = cfg.vehicle.model();
    let raw = match &cfg.roi {
        Some(p) => load_roi(p)?,
        None => generate_synthetic_roi(&cfg.synthetic, &vehicle)?,
    };
    let partition = partition_roi(&raw, &vehicle)?;
    let grids = cfg.grid.grids()?.into_iter().map(|g| (g.side, g)).collect();
    Ok(Inputs {
        catalog,
        vehicle,
        grids,
        cloud: partition.cloud,
        excluded: partition.excluded,
    })
}

fn with_context(side: Side, solver: &str, e: Error) -> Error {
    Error::Context {
        side,
        solver: solver.into(),
        source: Box::new(e),
    }
}

fn cache_path(dir: &Path, side: Side) -> PathBuf {
    dir.join(format!("coverage_{side}.bin"))
}

/// Coverage of one side's configurations over its sector, read from or
/// written to the cache directory when one is configured.
pub fn side_coverage(cfg: &RunConfig, inputs: &Inputs, side: Side) -> Result<(CoverageData, String)> {
    let configs = enumerate_side_configs(&inputs.catalog, &inputs.vehicle, &inputs.grids[&side]);
    let key = cache_key(&inputs.cloud, &configs, &inputs.catalog, cfg.fov);
    if let Some(dir) = &cfg.cache_dir {
        let path = cache_path(dir, side);
        if path.exists() {
            if let Some(data) = CoverageData::load_cache(&path, &key)? {
                return Ok((data, key));
            }
        }
    }
    let data = build_coverage(&inputs.cloud, &configs, &inputs.catalog, cfg.fov)?;
    if let Some(dir) = &cfg.cache_dir {
        fs::create_dir_all(dir)?;
        data.save_cache(&cache_path(dir, side), &key)?;
    }
    Ok((data, key))
}

pub fn all_coverage(cfg: &RunConfig, inputs: &Inputs) -> Result<BTreeMap<Side, (CoverageData, String)>> {
    Side::ALL
        .par_iter()
        .map(|&side| {
            side_coverage(cfg, inputs, side)
                .map(|c| (side, c))
                .map_err(|e| with_context(side, "coverage", e))
        })
        .collect()
}

/// One solver's outcome on one side.
#[derive(Debug, Clone)]
pub struct SideOutcome {
    /// Representative selection: the lowest objective over the sweep.
    pub best: SelectionResult,
    pub rows: Vec<SweepRow>,
    /// Optimizer traces keyed by output file stem.
    pub traces: BTreeMap<String, Vec<TracePoint>>,
    pub samples: Option<SampleSet>,
    pub seed: Option<u64>,
}

fn protocol_row(side: Side, n_s: Option<usize>, summary: &ProtocolSummary) -> SweepRow {
    let mut row = SweepRow::from_result(side, n_s, &summary.best().result);
    row.runs = summary.retained.len();
    row.objective_mean = Some(summary.mean);
    row.objective_min = Some(summary.min);
    row.objective_max = Some(summary.max);
    row
}

fn vqe_seed(base: u64, n_s: usize) -> u64 {
    base.wrapping_add((n_s as u64) << 32)
}

fn solve_fixed_count(
    cfg: &RunConfig,
    inputs: &Inputs,
    side: Side,
    data: &CoverageData,
    solver: SolverKind,
) -> Result<SideOutcome> {
    let range = cfg.n_s.min..=cfg.n_s.max;
    let mut summaries: BTreeMap<usize, ProtocolSummary> = BTreeMap::new();
    let seed = derive_seed(cfg.seed, side, solver);
    let outcome = match solver {
        SolverKind::Exhaustive | SolverKind::Greedy => {
            let kind = if solver == SolverKind::Exhaustive {
                ClassicalSolver::Exhaustive
            } else {
                ClassicalSolver::Greedy
            };
            sweep_ns(data, cfg.lambda1, cfg.lambda2, range, |p| {
                solve_classical(p, kind, cfg.exhaustive_budget as u128)
            })?
        }
        SolverKind::Vqe => {
            let grid = &inputs.grids[&side];
            let enc = EncodingMap::new(grid.g1, grid.g2, inputs.catalog.len(), grid.orientations.len())?;
            sweep_ns(data, cfg.lambda1, cfg.lambda2, range, |p| {
                let summary = run_protocol(cfg.vqe_runs, vqe_seed(seed, p.n_s), |s, _| {
                    vqe_fixed_count(p, &enc, &cfg.vqe, s)
                })?;
                let best = summary.best().result.clone();
                summaries.insert(p.n_s, summary);
                Ok(best)
            })?
        }
        SolverKind::Anneal => unreachable!("rejected by validation"),
    };
    let mut rows = Vec::new();
    let mut traces = BTreeMap::new();
    for (k, e) in outcome.entries.iter().enumerate() {
        let mut row = match (&e.result, summaries.get(&e.n_s)) {
            (Ok(_), Some(s)) => {
                traces.insert(format!("{solver}_{side}_ns{}", e.n_s), s.best().trace.clone());
                protocol_row(side, Some(e.n_s), s)
            }
            (Ok(r), None) => SweepRow::from_result(side, Some(e.n_s), r),
            (Err(err), _) => SweepRow::from_error(side, Some(e.n_s), solver.as_str(), err),
        };
        row.best = outcome.best == Some(k);
        rows.push(row);
    }
    let best = outcome.best_result().cloned().ok_or_else(|| {
        Error::Infeasible(format!(
            "no n_s in {}..={} produced a selection",
            cfg.n_s.min, cfg.n_s.max
        ))
    })?;
    Ok(SideOutcome {
        best,
        rows,
        traces,
        samples: None,
        seed: (solver == SolverKind::Vqe).then_some(seed),
    })
}

/// Set-coverage QUBO for one side, with the position penalty when configured.
pub fn side_qubo(cfg: &RunConfig, data: &CoverageData) -> QuadraticModel {
    match cfg.position_penalty {
        Some(p) => build_iqp_with_position_penalty(data, cfg.lambda1, cfg.lambda2, p),
        None => build_iqp(data, cfg.lambda1, cfg.lambda2),
    }
}

fn solve_setcover(cfg: &RunConfig, side: Side, data: &CoverageData, solver: SolverKind) -> Result<SideOutcome> {
    let model = side_qubo(cfg, data);
    let seed = derive_seed(cfg.seed, side, solver);
    let (l1, l2) = (cfg.lambda1, cfg.lambda2);
    let mut traces = BTreeMap::new();
    let mut samples = None;
    let (best, row, seed) = match solver {
        SolverKind::Exhaustive => {
            let (bits, _) = solve_exhaustive_qubo(&model, cfg.qubo_max_vars)?;
            let r = SelectionResult::evaluate(data, &selection_from_bits(&bits), l1, l2, None, "exhaustive");
            (r.clone(), SweepRow::from_result(side, None, &r), None)
        }
        SolverKind::Anneal => {
            let schedule = crate::annealer::AnnealSchedule { seed, ..cfg.anneal };
            let set = anneal(&to_ising(&model), &schedule)?;
            let r = best_selection(&set, data, l1, l2, "anneal")?.with_provenance(Some(seed), None);
            samples = Some(set);
            (r.clone(), SweepRow::from_result(side, None, &r), Some(seed))
        }
        SolverKind::Vqe => {
            let ising = to_ising(&model);
            let summary = run_protocol(cfg.vqe_runs, seed, |s, _| vqe_ising(&ising, data, l1, l2, &cfg.vqe, s))?;
            traces.insert(format!("vqe_{side}"), summary.best().trace.clone());
            (
                summary.best().result.clone(),
                protocol_row(side, None, &summary),
                Some(seed),
            )
        }
        SolverKind::Greedy => unreachable!("rejected by validation"),
    };
    let mut row = row;
    row.best = true;
    Ok(SideOutcome {
        best,
        rows: vec![row],
        traces,
        samples,
        seed,
    })
}

pub fn solve_side(
    cfg: &RunConfig,
    inputs: &Inputs,
    side: Side,
    data: &CoverageData,
    solver: SolverKind,
) -> Result<SideOutcome> {
    match cfg.approach {
        Approach::FixedCount => solve_fixed_count(cfg, inputs, side, data, solver),
        Approach::Setcover => solve_setcover(cfg, side, data, solver),
    }
    .map_err(|e| with_context(side, solver.as_str(), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiInfo {
    pub source: String,
    pub points: usize,
    pub excluded: usize,
    pub sha256: String,
}

/// Everything needed to reproduce a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub catalog: Vec<SensorSpec>,
    pub roi: RoiInfo,
    pub coverage_keys: BTreeMap<Side, String>,
    /// `side/solver` to the seed it used.
    pub seeds: BTreeMap<String, u64>,
    /// Output path relative to the output directory, to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// One report per solver, in configured order.
    pub reports: Vec<(String, AggregateReport)>,
    pub sweep: Vec<SweepRow>,
    pub manifest: Manifest,
}

fn cloud_hash(cloud: &RoiCloud) -> String {
    let mut h = Sha256::new();
    for p in cloud.points() {
        for v in [p.xyz.x, p.xyz.y, p.xyz.z, p.criticality] {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

struct Writer {
    root: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Writer {
    fn put(&mut self, rel: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, &bytes)?;
        self.hashes.insert(rel.to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }
}

/// Runs every configured solver on every side, aggregates, and writes
/// `sweep.csv`, `aggregate.csv`, `adherence.csv`, `results.json`, traces,
/// annealer samples and `manifest.json` into the output directory.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let inputs = prepare(cfg)?;
    let coverage = all_coverage(cfg, &inputs)?;

    let per_side: Vec<(Side, Vec<SideOutcome>)> = Side::ALL
        .par_iter()
        .map(|&side| {
            let data = &coverage[&side].0;
            cfg.solvers
                .iter()
                .map(|&s| solve_side(cfg, &inputs, side, data, s))
                .collect::<Result<Vec<_>>>()
                .map(|v| (side, v))
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    let mut sweep = Vec::new();
    let mut seeds = BTreeMap::new();
    let mut extra: Vec<(String, Vec<u8>)> = Vec::new();
    for (k, &solver) in cfg.solvers.iter().enumerate() {
        let mut chosen = BTreeMap::new();
        for (side, outcomes) in &per_side {
            let o = &outcomes[k];
            chosen.insert(*side, o.best.clone());
            sweep.extend(o.rows.iter().cloned());
            if let Some(seed) = o.seed {
                seeds.insert(format!("{side}/{solver}"), seed);
            }
            for (stem, trace) in &o.traces {
                let mut buf = Vec::new();
                write_trace_csv(trace, &mut buf)?;
                extra.push((format!("traces/{stem}.csv"), buf));
            }
            if let Some(set) = &o.samples {
                let mut buf = Vec::new();
                set.write_csv(&mut buf)?;
                extra.push((format!("samples/{solver}_{side}.csv"), buf));
            }
        }
        let report = aggregate(&chosen, &inputs.cloud, &inputs.catalog, cfg.fov)?;
        reports.push((solver.as_str().to_string(), report));
    }

    let mut w = Writer {
        root: cfg.output_dir.clone(),
        hashes: BTreeMap::new(),
    };
    let mut buf = Vec::new();
    write_sweep_csv(&sweep, &mut buf)?;
    w.put("sweep.csv", buf)?;
    let mut buf = Vec::new();
    write_aggregate_csv(&reports, &mut buf)?;
    w.put("aggregate.csv", buf)?;
    let mut buf = Vec::new();
    write_adherence_csv(&reports, &mut buf)?;
    w.put("adherence.csv", buf)?;
    w.put("results.json", serde_json::to_vec_pretty(&reports)?)?;
    for (rel, bytes) in extra {
        w.put(&rel, bytes)?;
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        catalog: inputs.catalog.clone(),
        roi: RoiInfo {
            source: cfg.roi.as_ref().map_or("synthetic".into(), |p| p.display().to_string()),
            points: inputs.cloud.len(),
            excluded: inputs.excluded,
            sha256: cloud_hash(&inputs.cloud),
        },
        coverage_keys: coverage.iter().map(|(s, (_, key))| (*s, key.clone())).collect(),
        seeds,
        outputs: w.hashes.clone(),
    };
    let bytes = serde_json::to_vec_pretty(&manifest)?;
    w.put("manifest.json", bytes)?;
    Ok(RunOutcome {
        reports,
        sweep,
        manifest,
    })
}

/// Builds and caches coverage for every side. Returns the cache paths.
pub fn precompute(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg
        .cache_dir
        .clone()
        .ok_or_else(|| Error::Config("precompute needs a cache directory".into()))?;
    let inputs = prepare(cfg)?;
    all_coverage(cfg, &inputs)?;
    Ok(Side::ALL.iter().map(|&s| cache_path(&dir, s)).collect())
}

/// Writes LP models into `dir`: one per side and `n_s` for the fixed-count
/// approach, one per side for set coverage.
pub fn export_lp(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let inputs = prepare(cfg)?;
    let coverage = all_coverage(cfg, &inputs)?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (side, (data, _)) in &coverage {
        match cfg.approach {
            Approach::FixedCount => {
                for n_s in cfg.n_s.min..=cfg.n_s.max {
                    let p = FixedCountProblem::new(data, cfg.lambda1, cfg.lambda2, n_s)
                        .map_err(|e| with_context(*side, "export-lp", e))?;
                    let path = dir.join(format!("{side}_ns{n_s}.lp"));
                    write_lp(&p, fs::File::create(&path)?)?;
                    written.push(path);
                }
            }
            Approach::Setcover => {
                let path = dir.join(format!("{side}_setcover.lp"));
                let model = build_iqp(data, cfg.lambda1, cfg.lambda2);
                write_iqp_lp(&model, data, cfg.position_penalty.is_some(), fs::File::create(&path)?)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Writes one set-coverage QUBO per side into `dir`.
pub fn export_qubo(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let inputs = prepare(cfg)?;
    let coverage = all_coverage(cfg, &inputs)?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (side, (data, _)) in &coverage {
        let path = dir.join(format!("{side}.qubo"));
        write_qubo(&side_qubo(cfg, data), fs::File::create(&path)?)?;
        written.push(path);
    }
    Ok(written)
}
