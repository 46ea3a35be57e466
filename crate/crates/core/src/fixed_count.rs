//! Fixed sensor-count formulation: minimize `-lambda1 * V_cov + lambda2 * cost`
//! subject to at most one sensor per position and exactly `n_s` sensors.
//!
//! The per-point indicators `z_r` are never materialized; coverage of a
//! selection is the weighted OR of its coverage rows, which is what `z_r`
//! takes at any optimum. The LP export writes them out explicitly.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{exact_union_coverage, BitRow, CoverageData};
use crate::error::{Error, Result};
use crate::geometry::{SensorConfig, Side};

pub const DEFAULT_LAMBDA1: f64 = 1.0;
pub const DEFAULT_LAMBDA2: f64 = 1e-4;
pub const DEFAULT_EXHAUSTIVE_BUDGET: u128 = 10_000_000;

/// Chosen configurations with exact coverage, cost and objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Sorted indices into the coverage data's configuration list.
    pub selected: Vec<usize>,
    pub configs: Vec<SensorConfig>,
    pub coverage: f64,
    pub cost: f64,
    pub objective: f64,
    pub solver: String,
    pub feasible: bool,
    pub seed: Option<u64>,
    pub run_index: Option<usize>,
}

impl SelectionResult {
    /// Scores `selection` with exact coverage. `feasible` reflects position
    /// uniqueness and, when `n_s` is given, the sensor count.
    pub fn evaluate(
        data: &CoverageData,
        selection: &[usize],
        lambda1: f64,
        lambda2: f64,
        n_s: Option<usize>,
        solver: &str,
    ) -> Self {
        let mut selected = selection.to_vec();
        selected.sort_unstable();
        selected.dedup();
        let coverage = exact_union_coverage(&selected, data);
        let cost = data.cost_of(&selected);
        let feasible = positions_unique(data, &selected) && n_s.is_none_or(|n| selected.len() == n);
        Self {
            configs: selected.iter().map(|&i| *data.config(i)).collect(),
            selected,
            coverage,
            cost,
            objective: -lambda1 * coverage + lambda2 * cost,
            solver: solver.to_string(),
            feasible,
            seed: None,
            run_index: None,
        }
    }

    pub fn with_provenance(mut self, seed: Option<u64>, run_index: Option<usize>) -> Self {
        self.seed = seed;
        self.run_index = run_index;
        self
    }
}

pub fn positions_unique(data: &CoverageData, selection: &[usize]) -> bool {
    let mut seen = BTreeSet::new();
    selection.iter().all(|&i| seen.insert(data.position_of(i)))
}

/// Configurations grouped by mounting position.
pub fn position_groups(data: &CoverageData) -> BTreeMap<(Side, usize), Vec<usize>> {
    let mut groups: BTreeMap<(Side, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..data.n_configs() {
        groups.entry(data.position_of(i)).or_default().push(i);
    }
    groups
}

#[derive(Debug, Clone)]
pub struct FixedCountProblem<'a> {
    pub data: &'a CoverageData,
    pub lambda1: f64,
    pub lambda2: f64,
    pub n_s: usize,
    pub position_groups: BTreeMap<(Side, usize), Vec<usize>>,
}

impl<'a> FixedCountProblem<'a> {
    pub fn new(data: &'a CoverageData, lambda1: f64, lambda2: f64, n_s: usize) -> Result<Self> {
        if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
            return Err(Error::InvalidInput("objective weights must be non-negative".into()));
        }
        let position_groups = position_groups(data);
        if n_s == 0 || n_s > position_groups.len() {
            return Err(Error::Infeasible(format!(
                "n_s = {n_s} with {} available positions",
                position_groups.len()
            )));
        }
        Ok(Self {
            data,
            lambda1,
            lambda2,
            n_s,
            position_groups,
        })
    }

    pub fn n_positions(&self) -> usize {
        self.position_groups.len()
    }

    pub fn result(&self, selection: &[usize], solver: &str) -> SelectionResult {
        SelectionResult::evaluate(self.data, selection, self.lambda1, self.lambda2, Some(self.n_s), solver)
    }
}

/// `J = -lambda1 * V_cov + lambda2 * cost` with exact coverage.
pub fn objective(selection: &[usize], problem: &FixedCountProblem) -> f64 {
    -problem.lambda1 * exact_union_coverage(selection, problem.data) + problem.lambda2 * problem.data.cost_of(selection)
}

pub fn check_feasible(selection: &[usize], problem: &FixedCountProblem) -> bool {
    selection.len() == problem.n_s && positions_unique(problem.data, selection)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

struct Search<'p, 'a> {
    problem: &'p FixedCountProblem<'a>,
    pos_id: Vec<usize>,
    used: Vec<bool>,
    stack: Vec<usize>,
    unions: Vec<BitRow>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_, '_> {
    fn descend(&mut self, next: usize, cost: f64) {
        let p = self.problem;
        let depth = self.stack.len();
        if depth == p.n_s {
            let cov = p.data.weighted_sum(&self.unions[depth]);
            let obj = -p.lambda1 * cov + p.lambda2 * cost;
            // lexicographic order of the walk makes the first strict minimum the tie-break winner
            if self.best.as_ref().is_none_or(|(b, _)| obj < *b) {
                self.best = Some((obj, self.stack.clone()));
            }
            return;
        }
        let n = p.data.n_configs();
        let remaining = p.n_s - depth;
        for i in next..n {
            if n - i < remaining {
                break;
            }
            let pos = self.pos_id[i];
            if self.used[pos] {
                continue;
            }
            self.used[pos] = true;
            self.stack.push(i);
            let mut u = self.unions[depth].clone();
            u.or_assign(p.data.row(i));
            self.unions[depth + 1] = u;
            self.descend(i + 1, cost + p.data.costs()[i]);
            self.stack.pop();
            self.used[pos] = false;
        }
    }
}

/// Exact optimum by enumerating every feasible `n_s`-subset, split across
/// workers by first element. Ties go to the lexicographically smallest set.
pub fn solve_exhaustive(problem: &FixedCountProblem, budget: u128) -> Result<SelectionResult> {
    let n = problem.data.n_configs();
    let count = binomial(n, problem.n_s);
    if count > budget {
        return Err(Error::BudgetExceeded { count, budget });
    }
    let keys: Vec<(Side, usize)> = problem.position_groups.keys().copied().collect();
    let pos_id: Vec<usize> = (0..n)
        .map(|i| keys.binary_search(&problem.data.position_of(i)).unwrap())
        .collect();
    let npts = problem.data.n_points();

    let best = (0..n)
        .into_par_iter()
        .filter_map(|first| {
            let mut s = Search {
                problem,
                pos_id: pos_id.clone(),
                used: vec![false; keys.len()],
                stack: vec![first],
                unions: vec![BitRow::zeros(npts); problem.n_s + 1],
                best: None,
            };
            s.used[pos_id[first]] = true;
            s.unions[1] = problem.data.row(first).clone();
            s.descend(first + 1, problem.data.costs()[first]);
            s.best
        })
        .reduce_with(|a, b| match a.0.total_cmp(&b.0) {
            std::cmp::Ordering::Less => a,
            std::cmp::Ordering::Greater => b,
            std::cmp::Ordering::Equal => {
                if a.1 <= b.1 {
                    a
                } else {
                    b
                }
            }
        });
    match best {
        Some((_, sel)) => Ok(problem.result(&sel, "exhaustive")),
        None => Err(Error::Infeasible(format!(
            "no {} configurations on distinct positions",
            problem.n_s
        ))),
    }
}

/// Adds, `n_s` times, the feasible configuration with the lowest resulting
/// objective; ties go to the lowest index.
pub fn solve_greedy(problem: &FixedCountProblem) -> Result<SelectionResult> {
    if problem.n_positions() < problem.n_s {
        return Err(Error::Infeasible(format!(
            "n_s = {} with {} available positions",
            problem.n_s,
            problem.n_positions()
        )));
    }
    let data = problem.data;
    let mut selected: Vec<usize> = Vec::with_capacity(problem.n_s);
    let mut used = BTreeSet::new();
    let mut union = BitRow::zeros(data.n_points());
    let mut cost = 0.0;
    for _ in 0..problem.n_s {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..data.n_configs() {
            if selected.contains(&i) || used.contains(&data.position_of(i)) {
                continue;
            }
            let mut u = union.clone();
            u.or_assign(data.row(i));
            let obj = -problem.lambda1 * data.weighted_sum(&u) + problem.lambda2 * (cost + data.costs()[i]);
            if best.is_none_or(|(b, _)| obj < b) {
                best = Some((obj, i));
            }
        }
        let (_, i) = best.ok_or_else(|| Error::Infeasible("ran out of free positions".into()))?;
        selected.push(i);
        used.insert(data.position_of(i));
        union.or_assign(data.row(i));
        cost += data.costs()[i];
    }
    Ok(problem.result(&selected, "greedy"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalSolver {
    Exhaustive,
    Greedy,
}

pub fn solve_classical(problem: &FixedCountProblem, solver: ClassicalSolver, budget: u128) -> Result<SelectionResult> {
    match solver {
        ClassicalSolver::Exhaustive => solve_exhaustive(problem, budget),
        ClassicalSolver::Greedy => solve_greedy(problem),
    }
}

#[derive(Debug)]
pub struct SweepEntry {
    pub n_s: usize,
    pub result: Result<SelectionResult>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub entries: Vec<SweepEntry>,
    /// Index into `entries` of the lowest objective; earliest `n_s` wins ties.
    pub best: Option<usize>,
}

impl SweepOutcome {
    pub fn best_result(&self) -> Option<&SelectionResult> {
        self.best.and_then(|i| self.entries[i].result.as_ref().ok())
    }
}

/// Solves once per `n_s` in `range`; a failing `n_s` is recorded, not fatal.
pub fn sweep_ns<F>(
    data: &CoverageData,
    lambda1: f64,
    lambda2: f64,
    range: RangeInclusive<usize>,
    mut solve: F,
) -> Result<SweepOutcome>
where
    F: FnMut(&FixedCountProblem) -> Result<SelectionResult>,
{
    if range.is_empty() {
        return Err(Error::InvalidInput("n_s range is empty".into()));
    }
    let mut entries = Vec::new();
    for n_s in range {
        let result = FixedCountProblem::new(data, lambda1, lambda2, n_s).and_then(|p| solve(&p));
        entries.push(SweepEntry { n_s, result });
    }
    let mut best: Option<usize> = None;
    for (k, e) in entries.iter().enumerate() {
        if let Ok(r) = &e.result {
            let better = match best {
                None => true,
                Some(b) => r.objective < entries[b].result.as_ref().unwrap().objective,
            };
            if better {
                best = Some(k);
            }
        }
    }
    Ok(SweepOutcome { entries, best })
}

pub fn variable_name(cfg: &SensorConfig) -> String {
    format!("x_{}", cfg.label())
}

/// Writes the full ILP (explicit `z_r`, coverage rows, position and count
/// constraints) in CPLEX LP format.
pub fn write_lp<W: Write>(problem: &FixedCountProblem, mut w: W) -> std::io::Result<()> {
    let data = problem.data;
    let n = data.n_configs();
    let names: Vec<String> = data.configs().iter().map(variable_name).collect();
    writeln!(w, "\\ fixed sensor-count placement model")?;
    writeln!(
        w,
        "\\ configurations: {n}, points: {}, n_s: {}",
        data.n_points(),
        problem.n_s
    )?;
    writeln!(w, "Minimize")?;
    write!(w, " obj:")?;
    for (r, &c) in data.weights().iter().enumerate() {
        let coef = -problem.lambda1 * c / data.normalizer();
        if coef != 0.0 {
            write!(w, " {} z_{r}", signed(coef))?;
        }
    }
    for (i, name) in names.iter().enumerate() {
        let coef = problem.lambda2 * data.costs()[i];
        if coef != 0.0 {
            write!(w, " {} {name}", signed(coef))?;
        }
    }
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for ((side, cell), members) in &problem.position_groups {
        let terms: Vec<&str> = members.iter().map(|&i| names[i].as_str()).collect();
        writeln!(w, " pos_{side}_{cell}: {} <= 1", terms.join(" + "))?;
    }
    for r in 0..data.n_points() {
        write!(w, " cov_{r}: z_{r}")?;
        for (i, name) in names.iter().enumerate() {
            if data.covers(i, r) {
                write!(w, " - {name}")?;
            }
        }
        writeln!(w, " <= 0")?;
    }
    writeln!(w, " count: {} = {}", names.join(" + "), problem.n_s)?;
    writeln!(w, "Binary")?;
    for name in &names {
        writeln!(w, " {name}")?;
    }
    for r in 0..data.n_points() {
        writeln!(w, " z_{r}")?;
    }
    writeln!(w, "End")
}

pub(crate) fn signed(v: f64) -> String {
    if v < 0.0 {
        format!("- {}", -v)
    } else {
        format!("+ {v}")
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::coverage::CoverageData;
    use crate::geometry::*;

    /// Coverage data from hand-written rows: `rows[i]` lists the points
    /// config `i` covers; it sits on cell `cells[i]` with type `types[i]`.
    pub fn handmade(
        weights: &[f64],
        rows: &[&[usize]],
        cells: &[usize],
        types: &[usize],
        catalog: &[SensorSpec],
    ) -> CoverageData {
        let configs: Vec<SensorConfig> = (0..rows.len())
            .map(|i| SensorConfig {
                side: Side::Front,
                type_index: types[i],
                cell: cells[i],
                orientation_index: 0,
                orientation: 0.0,
                position: Vec3::default(),
            })
            .collect();
        let costs = types.iter().map(|&t| catalog[t].cost).collect();
        let rows = rows.iter().map(|r| r.to_vec()).collect();
        CoverageData::from_parts(configs, costs, weights.to_vec(), rows).unwrap()
    }
}
