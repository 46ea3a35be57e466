//! Bonferroni-approximated quadratic coverage and its binary quadratic models.
//!
//! The pairwise approximation `v_cov(x) = 3/2 mu.x - 1/2 x.sigma.x` equals
//! `sum mu_i - sum_{i<j} sigma_ij` over the selected set and lower-bounds the
//! exact union coverage. Spins follow `x = (1 + z) / 2`, so `z = +1` means
//! "selected".

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::CoverageData;
use crate::error::{Error, Result};
use crate::fixed_count::{position_groups, signed, variable_name};

pub const DEFAULT_QUBO_MAX_VARS: usize = 24;

/// Pairwise-approximate coverage of the selection `x`.
pub fn approx_coverage(x: &[bool], data: &CoverageData) -> f64 {
    assert_eq!(x.len(), data.n_configs(), "assignment length mismatch");
    let n = x.len();
    let mut linear = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        if !x[i] {
            continue;
        }
        linear += data.mu()[i];
        for (j, &xj) in x.iter().enumerate() {
            if xj {
                quad += data.sigma(i, j);
            }
        }
    }
    1.5 * linear - 0.5 * quad
}

/// `E(x) = linear.x + x.Q.x + offset` over binary `x`, with `Q` symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub linear: Vec<f64>,
    /// Row-major `N x N`, symmetric.
    pub quadratic: Vec<f64>,
    pub offset: f64,
    pub variable_names: Vec<String>,
}

impl QuadraticModel {
    pub fn zeros(n: usize) -> Self {
        Self {
            linear: vec![0.0; n],
            quadratic: vec![0.0; n * n],
            offset: 0.0,
            variable_names: (0..n).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.quadratic[i * self.len() + j]
    }

    /// Adds `value * x_i * x_j` (i != j) keeping `Q` symmetric.
    pub fn add_interaction(&mut self, i: usize, j: usize, value: f64) {
        let n = self.len();
        if i == j {
            self.linear[i] += value;
        } else {
            self.quadratic[i * n + j] += value / 2.0;
            self.quadratic[j * n + i] += value / 2.0;
        }
    }

    pub fn energy(&self, x: &[bool]) -> f64 {
        let n = self.len();
        let mut e = self.offset;
        for i in 0..n {
            if !x[i] {
                continue;
            }
            e += self.linear[i];
            for (j, &xj) in x.iter().enumerate() {
                if xj {
                    e += self.quadratic[i * n + j];
                }
            }
        }
        e
    }

    /// Coefficient of `x_i x_j` for `i < j` (twice the symmetric entry).
    pub fn pair_coefficient(&self, i: usize, j: usize) -> f64 {
        self.q(i, j) + self.q(j, i)
    }
}

/// `E(z) = h.z + sum_{i<j} J_ij z_i z_j + offset` over spins in {-1, +1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    pub h: Vec<f64>,
    /// Couplings keyed by `(i, j)` with `i < j`.
    pub j: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

impl IsingModel {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn energy(&self, spins: &[i8]) -> f64 {
        let mut e = self.offset;
        for (i, &h) in self.h.iter().enumerate() {
            e += h * spins[i] as f64;
        }
        for (&(i, j), &c) in &self.j {
            e += c * (spins[i] * spins[j]) as f64;
        }
        e
    }

    /// Neighbour lists `(j, J_ij)` per spin.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.len()];
        for (&(i, j), &c) in &self.j {
            adj[i].push((j, c));
            adj[j].push((i, c));
        }
        adj
    }
}

pub fn spins_to_bits(spins: &[i8]) -> Vec<bool> {
    spins.iter().map(|&s| s > 0).collect()
}

pub fn bits_to_spins(bits: &[bool]) -> Vec<i8> {
    bits.iter().map(|&b| if b { 1 } else { -1 }).collect()
}

pub fn selection_from_bits(bits: &[bool]) -> Vec<usize> {
    bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

pub fn bits_from_selection(n: usize, selection: &[usize]) -> Vec<bool> {
    let mut x = vec![false; n];
    for &i in selection {
        x[i] = true;
    }
    x
}

/// `-lambda1 * v_cov(x) + lambda2 * cost(x)` as a QUBO. The diagonal of
/// `sigma` is folded into the linear term, leaving `Q` with a zero diagonal:
/// `linear_i = -lambda1 mu_i + lambda2 cost_i`, `Q_ij = lambda1 sigma_ij / 2`.
pub fn build_iqp(data: &CoverageData, lambda1: f64, lambda2: f64) -> QuadraticModel {
    let n = data.n_configs();
    let mut model = QuadraticModel::zeros(n);
    for i in 0..n {
        // -3/2 l1 mu_i from the linear part, +1/2 l1 sigma_ii from the diagonal
        model.linear[i] = -1.5 * lambda1 * data.mu()[i] + 0.5 * lambda1 * data.sigma(i, i) + lambda2 * data.costs()[i];
        for j in 0..n {
            if i != j {
                model.quadratic[i * n + j] = 0.5 * lambda1 * data.sigma(i, j);
            }
        }
    }
    model.variable_names = data.configs().iter().map(variable_name).collect();
    model
}

/// [`build_iqp`] plus `penalty * x_i * x_j` for every pair sharing a position.
pub fn build_iqp_with_position_penalty(
    data: &CoverageData,
    lambda1: f64,
    lambda2: f64,
    penalty: f64,
) -> QuadraticModel {
    let mut model = build_iqp(data, lambda1, lambda2);
    for members in position_groups(data).values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                model.add_interaction(i, j, penalty);
            }
        }
    }
    model
}

pub fn to_ising(model: &QuadraticModel) -> IsingModel {
    let n = model.len();
    let mut h: Vec<f64> = model.linear.iter().map(|a| a / 2.0).collect();
    let mut j = BTreeMap::new();
    let mut offset = model.offset + model.linear.iter().sum::<f64>() / 2.0;
    for i in 0..n {
        for k in i + 1..n {
            let b = model.pair_coefficient(i, k);
            if b != 0.0 {
                j.insert((i, k), b / 4.0);
                h[i] += b / 4.0;
                h[k] += b / 4.0;
                offset += b / 4.0;
            }
        }
    }
    IsingModel { h, j, offset }
}

pub fn from_ising(model: &IsingModel) -> QuadraticModel {
    let n = model.len();
    let mut q = QuadraticModel::zeros(n);
    q.offset = model.offset - model.h.iter().sum::<f64>();
    for i in 0..n {
        q.linear[i] = 2.0 * model.h[i];
    }
    for (&(i, k), &c) in &model.j {
        q.linear[i] -= 2.0 * c;
        q.linear[k] -= 2.0 * c;
        q.offset += c;
        q.add_interaction(i, k, 4.0 * c);
    }
    q
}

fn lex_less(a: &[bool], b: &[bool]) -> bool {
    a < b
}

/// Global minimizer over `{0,1}^N` by Gray-code enumeration. Candidates
/// within a small band of the running minimum are re-scored exactly; exact
/// ties go to the lexicographically smallest assignment.
pub fn solve_exhaustive_qubo(model: &QuadraticModel, max_vars: usize) -> Result<(Vec<bool>, f64)> {
    let n = model.len();
    if n > max_vars {
        return Err(Error::BudgetExceeded {
            count: 1u128 << n.min(127),
            budget: 1u128 << max_vars.min(127),
        });
    }
    if n == 0 {
        return Ok((Vec::new(), model.offset));
    }
    let split = n.min(6);
    let low = n - split;
    let scale: f64 = model.linear.iter().map(|v| v.abs()).sum::<f64>()
        + model.quadratic.iter().map(|v| v.abs()).sum::<f64>()
        + model.offset.abs();
    let band = 1e-9 * scale.max(1.0);

    let candidates: Vec<Vec<bool>> = (0u64..1 << split)
        .into_par_iter()
        .flat_map_iter(|hi| {
            let mut x = vec![false; n];
            for b in 0..split {
                x[low + b] = hi >> b & 1 == 1;
            }
            let mut e = model.energy(&x);
            let mut best = e;
            let mut keep = vec![x.clone()];
            for step in 1u64..1 << low {
                let i = step.trailing_zeros() as usize;
                let mut field = model.linear[i];
                for (k, &xk) in x.iter().enumerate() {
                    if xk && k != i {
                        field += model.pair_coefficient(i, k);
                    }
                }
                if x[i] {
                    e -= field;
                } else {
                    e += field;
                }
                x[i] = !x[i];
                if e < best - band {
                    best = e;
                    keep.clear();
                    keep.push(x.clone());
                } else if e <= best + band {
                    if e < best {
                        best = e;
                    }
                    keep.push(x.clone());
                }
            }
            keep
        })
        .collect();

    let mut best: Option<(Vec<bool>, f64)> = None;
    for x in candidates {
        let e = model.energy(&x);
        let better = match &best {
            None => true,
            Some((bx, be)) => e < *be || (e == *be && lex_less(&x, bx)),
        };
        if better {
            best = Some((x, e));
        }
    }
    Ok(best.expect("at least one assignment"))
}

/// Coordinate text form: comment lines, `offset <v>`, then `i j value`
/// triples with `i <= j`; `i i` is the linear coefficient of `x_i` and
/// `i j` the coefficient of `x_i x_j`.
pub fn write_qubo<W: Write>(model: &QuadraticModel, mut w: W) -> std::io::Result<()> {
    let n = model.len();
    writeln!(w, "# qubo v1: E(x) = sum_(i<=j) value * x_i * x_j + offset")?;
    writeln!(w, "# variables {n}")?;
    for (i, name) in model.variable_names.iter().enumerate() {
        writeln!(w, "# var {i} {name}")?;
    }
    writeln!(w, "offset {}", model.offset)?;
    for i in 0..n {
        if model.linear[i] != 0.0 {
            writeln!(w, "{i} {i} {}", model.linear[i])?;
        }
        for j in i + 1..n {
            let b = model.pair_coefficient(i, j);
            if b != 0.0 {
                writeln!(w, "{i} {j} {b}")?;
            }
        }
    }
    Ok(())
}

pub fn read_qubo<R: BufRead>(r: R) -> Result<QuadraticModel> {
    let mut n: Option<usize> = None;
    let mut names = Vec::new();
    let mut offset = 0.0;
    let mut triples = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let perr = |m: &str| Error::Parse {
            line: lineno,
            message: m.to_string(),
        };
        let t = line.trim();
        if let Some(c) = t.strip_prefix('#') {
            let parts: Vec<&str> = c.split_whitespace().collect();
            match parts.as_slice() {
                ["variables", v] => n = Some(v.parse().map_err(|_| perr("bad variable count"))?),
                ["var", _, name] => names.push(name.to_string()),
                _ => {}
            }
            continue;
        }
        if t.is_empty() {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        match parts.as_slice() {
            ["offset", v] => offset = v.parse().map_err(|_| perr("bad offset"))?,
            [i, j, v] => triples.push((
                i.parse::<usize>().map_err(|_| perr("bad index"))?,
                j.parse::<usize>().map_err(|_| perr("bad index"))?,
                v.parse::<f64>().map_err(|_| perr("bad value"))?,
                lineno,
            )),
            _ => return Err(perr("expected `i j value` or `offset value`")),
        }
    }
    let n = n.unwrap_or_else(|| triples.iter().map(|t| t.0.max(t.1) + 1).max().unwrap_or(0));
    let mut model = QuadraticModel::zeros(n);
    if names.len() == n {
        model.variable_names = names;
    }
    model.offset = offset;
    for (i, j, v, line) in triples {
        if i >= n || j >= n || i > j {
            return Err(Error::Parse {
                line,
                message: format!("index pair ({i}, {j}) invalid for {n} variables"),
            });
        }
        model.add_interaction(i, j, v);
    }
    Ok(model)
}

/// CPLEX LP form of the quadratic program, optionally with the
/// one-sensor-per-position rows.
pub fn write_iqp_lp<W: Write>(
    model: &QuadraticModel,
    data: &CoverageData,
    position_constraints: bool,
    mut w: W,
) -> std::io::Result<()> {
    let n = model.len();
    writeln!(w, "\\ approximate set-coverage placement model")?;
    writeln!(w, "\\ constant offset {} omitted", model.offset)?;
    writeln!(w, "Minimize")?;
    write!(w, " obj:")?;
    for i in 0..n {
        if model.linear[i] != 0.0 {
            write!(w, " {} {}", signed(model.linear[i]), model.variable_names[i])?;
        }
    }
    let mut quad = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let b = model.pair_coefficient(i, j);
            if b != 0.0 {
                quad.push(format!(
                    "{} {} * {}",
                    signed(2.0 * b),
                    model.variable_names[i],
                    model.variable_names[j]
                ));
            }
        }
    }
    if !quad.is_empty() {
        let body = quad.join(" ");
        let body = body.strip_prefix("+ ").unwrap_or(&body);
        write!(w, " + [ {body} ] / 2")?;
    }
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    if position_constraints {
        for ((side, cell), members) in position_groups(data) {
            let terms: Vec<&str> = members.iter().map(|&i| model.variable_names[i].as_str()).collect();
            writeln!(w, " pos_{side}_{cell}: {} <= 1", terms.join(" + "))?;
        }
    }
    writeln!(w, "Binary")?;
    for name in &model.variable_names {
        writeln!(w, " {name}")?;
    }
    writeln!(w, "End")
}
