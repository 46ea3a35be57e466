use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sensor_placement::config::{Approach, OrientationMode, RunConfig, SolverKind};
use sensor_placement::geometry::FovModel;
use sensor_placement::pipeline;
use sensor_placement::reporting::{Adherence, AggregateReport};
use sensor_placement::roi::{generate_synthetic_roi, save_roi, CriticalityProfile};
use sensor_placement::{Error, Result};
use toml::{Table, Value};

#[derive(Parser)]
#[command(name = "sensor-placement", version, about = "Sensor placement on vehicle surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic RoI CSV.
    GenRoi {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and cache per-side coverage.
    Precompute {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the configured solvers and write all reports.
    Solve {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Summarize the results of a previous `solve`.
    Report {
        /// Output directory of the run.
        dir: PathBuf,
    },
    /// Write LP models per side.
    ExportLp {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write set-coverage QUBOs per side.
    ExportQubo {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Settings that mirror the config file. Values in `--config` win.
#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    roi: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_approach)]
    approach: Option<Approach>,
    /// Repeatable or comma separated.
    #[arg(long = "solver", value_delimiter = ',', value_parser = parse_solver)]
    solvers: Vec<SolverKind>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    ns_min: Option<usize>,
    #[arg(long)]
    ns_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    g1: Option<usize>,
    #[arg(long)]
    g2: Option<usize>,
    /// `fixed` or `free`.
    #[arg(long, value_parser = parse_orientations)]
    orientations: Option<OrientationMode>,
    /// `elliptical_cone` or `independent_angles`.
    #[arg(long, value_parser = parse_fov)]
    fov: Option<FovModel>,
    #[arg(long)]
    vqe_runs: Option<usize>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    extent: Option<f64>,
    /// e.g. `uniform(1.0)` or `inverse-distance(3)`.
    #[arg(long, value_parser = parse_profile)]
    profile: Option<CriticalityProfile>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    roi_seed: Option<u64>,
}

fn from_str_value<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).map_err(|e| e.to_string())
}

fn parse_approach(s: &str) -> std::result::Result<Approach, String> {
    from_str_value(s)
}

fn parse_solver(s: &str) -> std::result::Result<SolverKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_orientations(s: &str) -> std::result::Result<OrientationMode, String> {
    from_str_value(s)
}

fn parse_fov(s: &str) -> std::result::Result<FovModel, String> {
    from_str_value(s)
}

fn parse_profile(s: &str) -> std::result::Result<CriticalityProfile, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    Value::try_from(v).map_err(Error::from)
}

fn set(table: &mut Table, path: &[&str], value: Value) {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut t = table;
    for key in parents {
        t = t
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("table");
    }
    t.insert(last.to_string(), value);
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn path_value(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

impl RunArgs {
    fn flag_table(&self) -> Result<Table> {
        let mut t = Table::new();
        let mut put = |path: &[&str], v: Option<Value>| {
            if let Some(v) = v {
                set(&mut t, path, v);
            }
        };
        put(&["catalog"], self.catalog.as_deref().map(path_value));
        put(&["roi"], self.roi.as_deref().map(path_value));
        put(&["output_dir"], self.output_dir.as_deref().map(path_value));
        put(&["cache_dir"], self.cache_dir.as_deref().map(path_value));
        put(&["approach"], self.approach.as_ref().map(to_value).transpose()?);
        put(
            &["solvers"],
            (!self.solvers.is_empty())
                .then(|| to_value(&self.solvers))
                .transpose()?,
        );
        put(&["lambda1"], self.lambda1.map(Value::Float));
        put(&["lambda2"], self.lambda2.map(Value::Float));
        put(&["n_s", "min"], self.ns_min.map(|v| Value::Integer(v as i64)));
        put(&["n_s", "max"], self.ns_max.map(|v| Value::Integer(v as i64)));
        put(&["seed"], self.seed.map(|v| Value::Integer(v as i64)));
        put(&["grid", "g1"], self.g1.map(|v| Value::Integer(v as i64)));
        put(&["grid", "g2"], self.g2.map(|v| Value::Integer(v as i64)));
        put(
            &["grid", "orientations"],
            self.orientations.as_ref().map(to_value).transpose()?,
        );
        put(&["fov"], self.fov.as_ref().map(to_value).transpose()?);
        put(&["vqe_runs"], self.vqe_runs.map(|v| Value::Integer(v as i64)));
        put(&["synthetic", "spacing"], self.spacing.map(Value::Float));
        put(&["synthetic", "extent"], self.extent.map(Value::Float));
        put(
            &["synthetic", "profile"],
            self.profile.as_ref().map(to_value).transpose()?,
        );
        put(&["synthetic", "jitter"], self.jitter.map(Value::Float));
        put(&["synthetic", "seed"], self.roi_seed.map(|v| Value::Integer(v as i64)));
        Ok(t)
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut table = self.flag_table()?;
        if let Some(path) = &self.config {
            let file: Table = std::fs::read_to_string(path)?
                .parse()
                .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut table, file);
        }
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn adherence_text(a: &Adherence) -> String {
    match a {
        Adherence::Fractions {
            critical_points,
            two_sensors,
            two_types,
        } => format!(
            "{critical_points} critical points, {:.1}% seen twice, {:.1}% by two types",
            100.0 * two_sensors,
            100.0 * two_types
        ),
        Adherence::NotApplicable => "no critical points".into(),
    }
}

fn print_reports(reports: &[(String, AggregateReport)]) {
    for (solver, rep) in reports {
        println!("{solver}");
        for (side, r) in &rep.per_side {
            println!(
                "  {side:<6} sensors {:>2}  coverage {:>7.3}%  cost {:>8.0}",
                r.selected.len(),
                100.0 * r.coverage,
                r.cost
            );
        }
        println!(
            "  {:<6} sensors {:>2}  coverage {:>7.3}%  cost {:>8.0}",
            "all",
            rep.per_side.values().map(|r| r.selected.len()).sum::<usize>(),
            100.0 * rep.aggregate_coverage,
            rep.total_cost
        );
        println!("  adherence: {}", adherence_text(&rep.adherence));
    }
}

fn list(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenRoi { run, out } => {
            let cfg = run.resolve()?;
            let cloud = generate_synthetic_roi(&cfg.synthetic, &cfg.vehicle.model())?;
            save_roi(&cloud, &out)?;
            println!("{} points written to {}", cloud.len(), out.display());
        }
        Command::Precompute { run } => {
            let mut cfg = run.resolve()?;
            if cfg.cache_dir.is_none() {
                cfg.cache_dir = Some(cfg.output_dir.join("cache"));
            }
            list(&pipeline::precompute(&cfg)?);
        }
        Command::Solve { run } => {
            let cfg = run.resolve()?;
            let outcome = pipeline::run(&cfg)?;
            print_reports(&outcome.reports);
            println!("outputs in {}", cfg.output_dir.display());
        }
        Command::Report { dir } => {
            let text = std::fs::read_to_string(dir.join("results.json"))?;
            let reports: Vec<(String, AggregateReport)> = serde_json::from_str(&text)?;
            print_reports(&reports);
        }
        Command::ExportLp { run, out } => list(&pipeline::export_lp(&run.resolve()?, &out)?),
        Command::ExportQubo { run, out } => list(&pipeline::export_qubo(&run.resolve()?, &out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
