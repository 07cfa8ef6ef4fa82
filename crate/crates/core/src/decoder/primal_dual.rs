//! Chambolle-Pock iteration on the substituted problem
//! `min_x ||A x + c||_1 + indicator(|x_i| <= b_i)`, with `K = I` so the dual
//! step is a weighted shrinkage and the primal step is the ADMM prox.
//!
//! Optionally the iteration restarts from the running average of its state
//! when that average has a clearly smaller fixed-point residual, which turns
//! the slow sublinear tail typical of these piecewise-linear problems into
//! a much faster one.

use crate::decoder::admm::{soft_threshold, AdmmProx};
use crate::decoder::SolverConfig;
use crate::error::{Result, SdqError};

#[derive(Debug, Clone)]
pub struct PrimalDualOutput {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub restarts: usize,
    /// Metric step length per iteration.
    pub history: Vec<f64>,
}

/// Iterations between restart checks.
const RESTART_CHECK: usize = 64;
/// Restart when the residual fell below this fraction of the last restart point's.
const RESTART_SUFFICIENT: f64 = 0.2;
const RESTART_NECESSARY: f64 = 0.8;

#[derive(Debug, Clone)]
struct State {
    x: Vec<f64>,
    xbar: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    mu: Vec<f64>,
}

impl State {
    fn zeros_like(&self) -> Self {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        State {
            x: z(&self.x),
            xbar: z(&self.xbar),
            y: z(&self.y),
            w: z(&self.w),
            mu: z(&self.mu),
        }
    }

    fn parts_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [&mut self.x, &mut self.xbar, &mut self.y, &mut self.w, &mut self.mu]
    }

    fn parts(&self) -> [&Vec<f64>; 5] {
        [&self.x, &self.xbar, &self.y, &self.w, &self.mu]
    }
}

struct Stepper<'a> {
    prox: &'a mut AdmmProx,
    bounds: &'a [f64],
    cfg: &'a SolverConfig,
    tau: f64,
    sigma: f64,
    x_prev: Vec<f64>,
    y_prev: Vec<f64>,
    v: Vec<f64>,
}

struct Residuals {
    primal: f64,
    dual: f64,
    /// Step length in the metric `||dx||^2 / tau + ||dy||^2 / sigma - 2 <dx, dy>`,
    /// non-increasing for the exact iteration.
    metric: f64,
}

impl Stepper<'_> {
    /// One outer iteration on `(x, xbar, y)` plus the prox's internal state.
    fn step(&mut self, x: &mut [f64], xbar: &mut [f64], y: &mut [f64]) -> Residuals {
        let (tau, sigma, theta) = (self.tau, self.sigma, self.cfg.theta);
        let n = x.len();
        self.y_prev.copy_from_slice(y);
        for i in 0..n {
            y[i] = soft_threshold(y[i] + sigma * xbar[i], sigma * self.bounds[i]);
            self.v[i] = x[i] - tau * y[i];
        }
        self.x_prev.copy_from_slice(x);
        self.prox.prox(&self.v, tau, self.cfg.admm_iters, x);
        let (mut p_sq, mut d_sq, mut m_sq) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let dx = x[i] - self.x_prev[i];
            let dy = y[i] - self.y_prev[i];
            let dd = -dy / sigma + (xbar[i] - x[i]);
            p_sq += dx * dx;
            d_sq += dd * dd;
            m_sq += dx * dx / tau + dy * dy / sigma - 2.0 * dx * dy;
            xbar[i] = x[i] + theta * dx;
        }
        Residuals {
            primal: p_sq.sqrt() / tau,
            dual: d_sq.sqrt(),
            metric: m_sq.max(0.0).sqrt(),
        }
    }

    fn load(&mut self, s: &State) {
        self.prox.set_state(&s.w, &s.mu);
    }

    fn save_prox(&self, s: &mut State) {
        let (w, mu) = self.prox.state();
        s.w.copy_from_slice(w);
        s.mu.copy_from_slice(mu);
    }
}

pub fn run(prox: &mut AdmmProx, bounds: &[f64], cfg: &SolverConfig) -> Result<PrimalDualOutput> {
    let n = bounds.len();
    let (tau, sigma) = cfg.steps_for(prox.operator());
    let (w0, mu0) = prox.state();
    let mut cur = State {
        x: vec![0.0; n],
        xbar: vec![0.0; n],
        y: vec![0.0; n],
        w: w0.to_vec(),
        mu: mu0.to_vec(),
    };
    let mut sum = cur.zeros_like();
    let mut trial = cur.clone();
    let mut sum_count = 0usize;
    let mut stepper = Stepper {
        prox,
        bounds,
        cfg,
        tau,
        sigma,
        x_prev: vec![0.0; n],
        y_prev: vec![0.0; n],
        v: vec![0.0; n],
    };

    let mut history = Vec::new();
    let (mut p, mut d) = (f64::INFINITY, f64::INFINITY);
    let mut best = f64::INFINITY;
    let mut prev = f64::INFINITY;
    let mut rising = 0usize;
    let mut iterations = 0;
    let mut converged = false;
    let mut restarts = 0;
    let mut restart_residual = f64::INFINITY;
    let mut last_candidate = f64::INFINITY;
    let mut since_restart = 0usize;

    while iterations < cfg.outer_max_iters {
        iterations += 1;
        since_restart += 1;
        let res = stepper.step(&mut cur.x, &mut cur.xbar, &mut cur.y);
        (p, d) = (res.primal, res.dual);
        let residual = p + d + stepper.prox.split_residual();
        history.push(res.metric);

        if !residual.is_finite() {
            return Err(SdqError::SolverDivergence {
                iteration: iterations,
                residual,
            });
        }
        // The ADMM splitting residual is part of the test, otherwise a stalled
        // inner state can look like a fixed point.
        if residual < cfg.outer_tol {
            converged = true;
            break;
        }
        rising = if residual > prev { rising + 1 } else { 0 };
        prev = residual;
        best = best.min(residual);
        if rising >= cfg.divergence_window && residual > 1e4 * best.max(cfg.outer_tol) {
            return Err(SdqError::SolverDivergence {
                iteration: iterations,
                residual,
            });
        }

        if !cfg.restarts {
            continue;
        }
        stepper.save_prox(&mut cur);
        for (acc, val) in sum.parts_mut().into_iter().zip(cur.parts()) {
            for (a, v) in acc.iter_mut().zip(val) {
                *a += v;
            }
        }
        sum_count += 1;
        if since_restart % RESTART_CHECK != 0 {
            continue;
        }

        // Residual of one step taken from the average.
        let inv = 1.0 / sum_count as f64;
        for (t, s) in trial.parts_mut().into_iter().zip(sum.parts()) {
            for (a, v) in t.iter_mut().zip(s) {
                *a = v * inv;
            }
        }
        trial.xbar.copy_from_slice(&trial.x);
        stepper.load(&trial);
        let tr = stepper.step(&mut trial.x, &mut trial.xbar, &mut trial.y);
        let (tp, td) = (tr.primal, tr.dual);
        let avg_residual = tp + td + stepper.prox.split_residual();
        stepper.save_prox(&mut trial);
        stepper.load(&cur);

        let use_avg = avg_residual < residual;
        let candidate = avg_residual.min(residual);
        let restart = candidate <= RESTART_SUFFICIENT * restart_residual
            || (candidate <= RESTART_NECESSARY * restart_residual && candidate > last_candidate)
            || restart_residual.is_infinite();
        last_candidate = candidate;
        if restart {
            if use_avg {
                std::mem::swap(&mut cur, &mut trial);
                stepper.load(&cur);
                (p, d) = (tp, td);
            }
            cur.xbar.copy_from_slice(&cur.x);
            for part in sum.parts_mut() {
                part.iter_mut().for_each(|v| *v = 0.0);
            }
            sum_count = 0;
            since_restart = 0;
            restart_residual = candidate;
            last_candidate = f64::INFINITY;
            restarts += 1;
        }
    }

    Ok(PrimalDualOutput {
        x: cur.x,
        iterations,
        converged,
        primal_residual: p,
        dual_residual: d,
        restarts,
        history,
    })
}
