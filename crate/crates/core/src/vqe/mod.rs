//! Variational quantum eigensolver on a dense statevector simulator.
//!
//! Two modes share the basic-entangling-layers ansatz and the Nelder–Mead
//! outer loop:
//! - fixed-count: a compact register encodes one configuration per basis
//!   state; each evaluation samples a histogram, keeps the most frequent
//!   feasible configurations and scores them with the exact objective.
//! - Ising: one qubit per configuration; the optimizer minimizes the exact
//!   energy expectation and the answer is the lowest-energy basis state seen
//!   when sampling the optimized circuits.
//!
//! Initial angles are uniform in `[-pi, pi]`. Within one run every histogram
//! reuses a single sampling seed, which keeps the objective a deterministic
//! function of the angles.

pub mod ansatz;
pub mod encoding;
pub mod optimizer;
pub mod statevector;

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::CoverageData;
use crate::error::{Error, Result};
use crate::fixed_count::{objective, FixedCountProblem, SelectionResult};
use crate::setcover::{bits_to_spins, selection_from_bits, IsingModel};

pub use ansatz::{apply_ansatz, cnot_pairs, AnsatzSpec, DEFAULT_LAYERS};
pub use encoding::{select_feasible_topk, EncodingMap};
pub use optimizer::{nelder_mead, nelder_mead_restarting, NelderMeadConfig, TracePoint};
pub use statevector::{basis_bits, sample_histogram, ShotSampler, StateVector, MAX_QUBITS};

pub const DEFAULT_SHOTS: usize = 1000;
pub const DEFAULT_RUNS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VqeConfig {
    pub layers: usize,
    /// Shots per histogram.
    pub shots: usize,
    pub optimizer: NelderMeadConfig,
    /// Independent optimizer starts per run; the best is kept.
    pub restarts: usize,
    /// Ising mode only: estimate the energy from this many shots instead of
    /// computing the expectation exactly.
    pub expectation_shots: Option<usize>,
}

impl Default for VqeConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_LAYERS,
            shots: DEFAULT_SHOTS,
            optimizer: NelderMeadConfig {
                initial_step: FRAC_PI_2,
                ..Default::default()
            },
            restarts: 16,
            expectation_shots: None,
        }
    }
}

impl VqeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.shots == 0 || self.restarts == 0 {
            return Err(Error::InvalidInput(
                "layers, shots and restarts must be at least 1".into(),
            ));
        }
        if self.expectation_shots == Some(0) {
            return Err(Error::InvalidInput("expectation shots must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one seeded VQE run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeRun {
    pub result: SelectionResult,
    /// Angles of the best evaluation.
    pub theta: Vec<f64>,
    /// Best value the optimizer saw.
    pub best_value: f64,
    /// Ising energy of the chosen basis state.
    pub energy: Option<f64>,
    /// Evaluations of all restarts, numbered consecutively.
    pub trace: Vec<TracePoint>,
}

fn random_angles(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-PI..PI)).collect()
}

fn append_trace(all: &mut Vec<TracePoint>, part: Vec<TracePoint>) {
    let base = all.len();
    all.extend(part.into_iter().map(|mut t| {
        t.iteration += base;
        t
    }));
}

/// Value assigned when a histogram lacks `n_s` feasible configurations:
/// strictly above the objective of any feasible selection.
pub fn support_penalty(problem: &FixedCountProblem) -> f64 {
    let mut costs = problem.data.costs().to_vec();
    costs.sort_by(|a, b| b.total_cmp(a));
    problem.lambda1 + problem.lambda2 * costs.iter().take(problem.n_s).sum::<f64>() + 1.0
}

/// Fixed-count VQE on a compact register. Returns the best selection seen
/// over all evaluations.
pub fn vqe_fixed_count(
    problem: &FixedCountProblem,
    encoding: &EncodingMap,
    cfg: &VqeConfig,
    seed: u64,
) -> Result<VqeRun> {
    cfg.validate()?;
    encoding.check_consistent(problem.data)?;
    let n = encoding.num_qubits();
    let init = StateVector::uniform(n)?;
    let penalty = support_penalty(problem);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_seed: u64 = rng.gen();
    let dims = AnsatzSpec::parameter_count(n, cfg.layers);

    let sampler = ShotSampler::new(cfg.shots, sample_seed)?;
    let mut memo: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let mut trace = Vec::new();
    {
        let mut f = |theta: &[f64]| -> f64 {
            let spec = AnsatzSpec {
                num_qubits: n,
                num_layers: cfg.layers,
                theta: theta.to_vec(),
            };
            let state = apply_ansatz(&init, &spec).expect("ansatz matches register");
            match select_feasible_topk(&sampler.histogram(&state), encoding, problem.n_s) {
                Ok(sel) => {
                    let j = *memo.entry(sel.clone()).or_insert_with(|| objective(&sel, problem));
                    if best.as_ref().is_none_or(|(b, _, _)| j < *b) {
                        best = Some((j, sel, theta.to_vec()));
                    }
                    j
                }
                Err(_) => penalty,
            }
        };
        for _ in 0..cfg.restarts {
            let x0 = random_angles(&mut rng, dims);
            let r = nelder_mead_restarting(&mut f, &x0, &cfg.optimizer, &mut || random_angles(&mut rng, dims));
            append_trace(&mut trace, r.best.trace);
        }
    }
    let (result, theta, best_value) = match best {
        Some((j, sel, theta)) => (problem.result(&sel, "vqe"), theta, j),
        None => {
            let mut r = problem.result(&[], "vqe");
            r.objective = penalty;
            let first = trace.first().map(|t: &TracePoint| t.theta.clone()).unwrap_or_default();
            (r, first, penalty)
        }
    };
    Ok(VqeRun {
        result: result.with_provenance(Some(seed), None),
        theta,
        best_value,
        energy: None,
        trace,
    })
}

/// Energy of every basis state, indexed like the statevector.
pub fn diagonal_energies(model: &IsingModel) -> Result<Vec<f64>> {
    let n = model.len();
    if n == 0 {
        return Err(Error::InvalidInput("Ising model has no variables".into()));
    }
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits {
            requested: n,
            max: MAX_QUBITS,
        });
    }
    Ok((0..1usize << n)
        .into_par_iter()
        .map(|x| model.energy(&bits_to_spins(&basis_bits(x, n))))
        .collect())
}

/// Lowest-energy basis state found by Ising-mode VQE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingVqeRun {
    pub bits: Vec<bool>,
    pub energy: f64,
    /// Best energy expectation reached by the optimizer.
    pub expectation: f64,
    pub theta: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

/// One qubit per variable; minimizes `<psi(theta)| H |psi(theta)>` for the
/// diagonal Hamiltonian of `model`.
pub fn minimize_ising(model: &IsingModel, cfg: &VqeConfig, seed: u64) -> Result<IsingVqeRun> {
    cfg.validate()?;
    let diag = diagonal_energies(model)?;
    let n = model.len();
    let init = StateVector::uniform(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_seed: u64 = rng.gen();
    let dims = AnsatzSpec::parameter_count(n, cfg.layers);
    let prepare = |theta: &[f64]| {
        let spec = AnsatzSpec {
            num_qubits: n,
            num_layers: cfg.layers,
            theta: theta.to_vec(),
        };
        apply_ansatz(&init, &spec).expect("ansatz matches register")
    };

    let mut calls: u64 = 0;
    let mut f = |theta: &[f64]| -> f64 {
        let state = prepare(theta);
        match cfg.expectation_shots {
            None => state.expectation_diagonal(&diag),
            Some(shots) => {
                calls += 1;
                let hist = sample_histogram(&state, shots, sample_seed.wrapping_add(calls)).expect("normalized state");
                hist.iter().map(|(&x, &c)| diag[x] * c as f64).sum::<f64>() / shots as f64
            }
        }
    };

    let mut trace = Vec::new();
    let mut best_expect: Option<(f64, Vec<f64>)> = None;
    let mut best_state: Option<(f64, usize)> = None;
    let mut sampled: u64 = 0;
    for _ in 0..cfg.restarts {
        let x0 = random_angles(&mut rng, dims);
        let res = nelder_mead_restarting(&mut f, &x0, &cfg.optimizer, &mut || random_angles(&mut rng, dims));
        append_trace(&mut trace, res.best.trace);
        // measure the circuit at every local optimum reached
        for seg in &res.segments {
            sampled += 1;
            let hist = sample_histogram(&prepare(&seg.x), cfg.shots, sample_seed ^ sampled.rotate_left(32))?;
            for &x in hist.keys() {
                if best_state.is_none_or(|(e, b)| diag[x] < e || (diag[x] == e && x < b)) {
                    best_state = Some((diag[x], x));
                }
            }
        }
        if best_expect.as_ref().is_none_or(|(v, _)| res.best.fx < *v) {
            best_expect = Some((res.best.fx, res.best.x));
        }
    }
    let (energy, x) = best_state.expect("at least one restart");
    let (expectation, theta) = best_expect.expect("at least one restart");
    Ok(IsingVqeRun {
        bits: basis_bits(x, n),
        energy,
        expectation,
        theta,
        trace,
    })
}

/// Ising-mode VQE decoded against `data` and scored with exact coverage.
pub fn vqe_ising(
    model: &IsingModel,
    data: &CoverageData,
    lambda1: f64,
    lambda2: f64,
    cfg: &VqeConfig,
    seed: u64,
) -> Result<VqeRun> {
    if model.len() != data.n_configs() {
        return Err(Error::InvalidInput(format!(
            "model has {} variables, coverage has {} configurations",
            model.len(),
            data.n_configs()
        )));
    }
    let run = minimize_ising(model, cfg, seed)?;
    let result = SelectionResult::evaluate(data, &selection_from_bits(&run.bits), lambda1, lambda2, None, "vqe")
        .with_provenance(Some(seed), None);
    Ok(VqeRun {
        result,
        theta: run.theta,
        best_value: run.expectation,
        energy: Some(run.energy),
        trace: run.trace,
    })
}

/// Repeated seeded runs with the worst one removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub runs: Vec<VqeRun>,
    /// Index of the removed run (highest objective, latest on ties).
    pub dropped: Option<usize>,
    pub retained: Vec<usize>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl ProtocolSummary {
    pub fn retained_runs(&self) -> impl Iterator<Item = &VqeRun> {
        self.retained.iter().map(|&i| &self.runs[i])
    }

    pub fn best(&self) -> &VqeRun {
        self.retained_runs()
            .min_by(|a, b| a.result.objective.total_cmp(&b.result.objective))
            .expect("at least one retained run")
    }
}

/// Runs `run(seed, index)` for seeds `base_seed + index`, in parallel.
pub fn run_protocol<F>(runs: usize, base_seed: u64, run: F) -> Result<ProtocolSummary>
where
    F: Fn(u64, usize) -> Result<VqeRun> + Sync,
{
    if runs == 0 {
        return Err(Error::InvalidInput("at least one run is required".into()));
    }
    let results: Vec<VqeRun> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let seed = base_seed.wrapping_add(k as u64);
            run(seed, k).map(|mut r| {
                r.result = r.result.with_provenance(Some(seed), Some(k));
                r
            })
        })
        .collect::<Result<_>>()?;
    let dropped = (runs > 1).then(|| {
        (0..runs)
            .max_by(|&a, &b| {
                results[a]
                    .result
                    .objective
                    .total_cmp(&results[b].result.objective)
                    .then(a.cmp(&b))
            })
            .expect("nonempty")
    });
    let retained: Vec<usize> = (0..runs).filter(|&k| Some(k) != dropped).collect();
    let objs: Vec<f64> = retained.iter().map(|&k| results[k].result.objective).collect();
    Ok(ProtocolSummary {
        mean: objs.iter().sum::<f64>() / objs.len() as f64,
        min: objs.iter().copied().fold(f64::INFINITY, f64::min),
        max: objs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        runs: results,
        dropped,
        retained,
    })
}

/// Optimizer trace as `iteration,objective,theta_0,...`.
pub fn write_trace_csv<W: Write>(trace: &[TracePoint], mut w: W) -> std::io::Result<()> {
    let dims = trace.first().map_or(0, |t| t.theta.len());
    write!(w, "iteration,objective")?;
    for k in 0..dims {
        write!(w, ",theta_{k}")?;
    }
    writeln!(w)?;
    for t in trace {
        write!(w, "{},{}", t.iteration, t.objective)?;
        for v in &t.theta {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
