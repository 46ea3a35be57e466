//! Derivative-free Nelder–Mead simplex minimizer.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadConfig {
    /// Objective evaluations allowed, including the starting point.
    pub max_evals: usize,
    /// Stop once best and worst simplex values differ by less than this.
    pub tolerance: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_evals: 500,
            tolerance: 1e-6,
            initial_step: 0.5,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Every evaluation in call order.
    pub trace: Vec<TracePoint>,
}

struct Counted<'f> {
    f: &'f mut dyn FnMut(&[f64]) -> f64,
    max: usize,
    trace: Vec<TracePoint>,
}

impl Counted<'_> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.trace.len() >= self.max {
            return None;
        }
        let v = (self.f)(x);
        self.trace.push(TracePoint {
            iteration: self.trace.len(),
            objective: v,
            theta: x.to_vec(),
        });
        Some(v)
    }
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Minimizes `f` from `x0`. The starting point is always evaluated, even
/// with a zero budget; the returned point is the best one evaluated.
pub fn nelder_mead(f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], cfg: &NelderMeadConfig) -> OptimResult {
    let mut c = Counted {
        f,
        max: cfg.max_evals.max(1),
        trace: Vec::new(),
    };
    let converged = run(&mut c, x0, cfg).is_some();
    let best = c
        .trace
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.iteration.cmp(&b.iteration)))
        .expect("at least one evaluation");
    OptimResult {
        x: best.theta.clone(),
        fx: best.objective,
        evaluations: c.trace.len(),
        converged,
        trace: c.trace,
    }
}

/// Local optimum of one simplex run inside [`nelder_mead_restarting`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub best: OptimResult,
    pub segments: Vec<Segment>,
}

/// Spends the whole `max_evals` budget: whenever the simplex converges early,
/// minimization restarts from `restart()`. `best.trace` numbers evaluations
/// consecutively across segments.
pub fn nelder_mead_restarting(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    cfg: &NelderMeadConfig,
    restart: &mut dyn FnMut() -> Vec<f64>,
) -> RestartResult {
    let budget = cfg.max_evals.max(1);
    let mut trace: Vec<TracePoint> = Vec::new();
    let mut segments = Vec::new();
    let mut x = x0.to_vec();
    let mut converged;
    loop {
        let sub = NelderMeadConfig {
            max_evals: budget - trace.len(),
            ..*cfg
        };
        let r = nelder_mead(f, &x, &sub);
        let base = trace.len();
        trace.extend(r.trace.into_iter().map(|mut t| {
            t.iteration += base;
            t
        }));
        segments.push(Segment {
            x: r.x,
            fx: r.fx,
            evaluations: r.evaluations,
        });
        converged = r.converged;
        if !converged || trace.len() >= budget {
            break;
        }
        x = restart();
    }
    let best = segments
        .iter()
        .min_by(|a, b| a.fx.total_cmp(&b.fx))
        .expect("at least one segment");
    RestartResult {
        best: OptimResult {
            x: best.x.clone(),
            fx: best.fx,
            evaluations: trace.len(),
            converged,
            trace,
        },
        segments,
    }
}

/// `Some` on convergence, `None` when the budget ran out.
fn run(c: &mut Counted, x0: &[f64], cfg: &NelderMeadConfig) -> Option<()> {
    let n = x0.len();
    let f0 = c.eval(x0)?;
    if n == 0 {
        return Some(());
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += cfg.initial_step;
        let fx = c.eval(&x)?;
        simplex.push((x, fx));
    }
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() < cfg.tolerance {
            return Some(());
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let xr = lerp(&centroid, &worst.0, -cfg.reflection);
        let fr = c.eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &xr, cfg.expansion);
            let fe = c.eval(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst.1 {
            let xc = lerp(&centroid, &xr, cfg.contraction);
            let fc = c.eval(&xc)?;
            (xc, fc, fc <= fr)
        } else {
            let xc = lerp(&centroid, &worst.0, cfg.contraction);
            let fc = c.eval(&xc)?;
            (xc, fc, fc < worst.1)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x = lerp(&best, &v.0, cfg.shrink);
            let fx = c.eval(&x)?;
            *v = (x, fx);
        }
    }
}
