//! Simulated-annealing sampler for Ising models.
//!
//! Each read runs single-spin Metropolis sweeps (spins visited in index
//! order) while the inverse temperature moves geometrically from
//! `beta_start` to `beta_end`. Read `k` draws from a ChaCha stream selected
//! by `(seed, k)`, so serial and parallel execution produce the same samples.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::CoverageData;
use crate::error::{Error, Result};
use crate::fixed_count::SelectionResult;
use crate::setcover::{selection_from_bits, spins_to_bits, IsingModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    pub num_reads: usize,
    pub sweeps_per_read: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub seed: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            num_reads: 1000,
            sweeps_per_read: 1000,
            beta_start: 0.1,
            beta_end: 10.0,
            seed: 0,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.num_reads == 0 || self.sweeps_per_read == 0 {
            return Err(Error::InvalidInput("reads and sweeps must be at least 1".into()));
        }
        if !(self.beta_start > 0.0 && self.beta_end > self.beta_start && self.beta_end.is_finite()) {
            return Err(Error::InvalidInput("need 0 < beta_start < beta_end".into()));
        }
        Ok(())
    }

    /// Inverse temperature for each sweep.
    pub fn betas(&self) -> Vec<f64> {
        let n = self.sweeps_per_read;
        if n == 1 {
            return vec![self.beta_end];
        }
        let ratio = (self.beta_end / self.beta_start).ln();
        (0..n)
            .map(|k| self.beta_start * (ratio * k as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub spins: Vec<i8>,
    pub energy: f64,
    pub multiplicity: usize,
}

impl Sample {
    pub fn bits(&self) -> Vec<bool> {
        spins_to_bits(&self.spins)
    }
}

/// Distinct samples in ascending energy (ties by spin vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn lowest(&self) -> Option<&Sample> {
        self.samples.first()
    }

    pub fn total_reads(&self) -> usize {
        self.samples.iter().map(|s| s.multiplicity).sum()
    }

    /// CSV with header `energy,multiplicity,bits`; bits as a 0/1 string in
    /// variable order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "energy,multiplicity,bits")?;
        for s in &self.samples {
            let bits: String = s.spins.iter().map(|&z| if z > 0 { '1' } else { '0' }).collect();
            writeln!(w, "{},{},{}", s.energy, s.multiplicity, bits)?;
        }
        Ok(())
    }
}

fn read_rng(seed: u64, read: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(read as u64);
    rng
}

/// One annealing chain. `observe` sees the energy after every accepted flip.
fn run_read<F: FnMut(f64)>(
    model: &IsingModel,
    adj: &[Vec<(usize, f64)>],
    betas: &[f64],
    rng: &mut ChaCha8Rng,
    mut observe: F,
) -> Vec<i8> {
    let n = model.len();
    let mut spins: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
    // local field: h_i + sum_j J_ij z_j
    let mut field: Vec<f64> = (0..n)
        .map(|i| model.h[i] + adj[i].iter().map(|&(j, c)| c * spins[j] as f64).sum::<f64>())
        .collect();
    let mut energy = model.energy(&spins);
    for &beta in betas {
        for i in 0..n {
            let delta = -2.0 * spins[i] as f64 * field[i];
            let accept = delta <= 0.0 || rng.gen::<f64>() < (-beta * delta).exp();
            if accept {
                spins[i] = -spins[i];
                let s = 2.0 * spins[i] as f64;
                for &(j, c) in &adj[i] {
                    field[j] += c * s;
                }
                energy += delta;
                observe(energy);
            }
        }
    }
    spins
}

pub fn anneal(model: &IsingModel, schedule: &AnnealSchedule) -> Result<SampleSet> {
    if model.is_empty() {
        return Err(Error::InvalidInput("Ising model has no variables".into()));
    }
    schedule.validate()?;
    let adj = model.adjacency();
    let betas = schedule.betas();
    let reads: Vec<Vec<i8>> = (0..schedule.num_reads)
        .into_par_iter()
        .map(|k| {
            let mut rng = read_rng(schedule.seed, k);
            run_read(model, &adj, &betas, &mut rng, |_| {})
        })
        .collect();
    let mut counts: BTreeMap<Vec<i8>, usize> = BTreeMap::new();
    for s in reads {
        *counts.entry(s).or_default() += 1;
    }
    let mut samples: Vec<Sample> = counts
        .into_iter()
        .map(|(spins, multiplicity)| Sample {
            energy: model.energy(&spins),
            spins,
            multiplicity,
        })
        .collect();
    samples.sort_by(|a, b| a.energy.total_cmp(&b.energy).then_with(|| a.spins.cmp(&b.spins)));
    Ok(SampleSet { samples })
}

/// Decodes the lowest-energy sample and scores it with exact coverage.
pub fn best_selection(
    samples: &SampleSet,
    data: &CoverageData,
    lambda1: f64,
    lambda2: f64,
    solver: &str,
) -> Result<SelectionResult> {
    let best = samples
        .lowest()
        .ok_or_else(|| Error::InvalidInput("empty sample set".into()))?;
    if best.spins.len() != data.n_configs() {
        return Err(Error::InvalidInput(
            "sample length differs from configuration count".into(),
        ));
    }
    let sel = selection_from_bits(&best.bits());
    Ok(SelectionResult::evaluate(data, &sel, lambda1, lambda2, None, solver))
}
