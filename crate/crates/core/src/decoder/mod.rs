//! TV-regularized decoders. Each one minimizes a TV objective over all
//! signals consistent with the quantizer's defining relation, solved after the
//! substitution `x = D^{-r}(z - q)` by a primal-dual loop with an ADMM prox.

pub mod admm;
pub mod banded;
pub mod operator;
pub mod primal_dual;

use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::alphabet::FineBoundaryAlphabet;
use crate::error::{Result, SdqError};
pub use admm::{soft_threshold, AdmmProx};
pub use operator::TvOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeClass {
    /// `min ||(D^beta)^T z||_1` s.t. `||D^{-r}(z - q)||_inf <= delta/2`, per column.
    Class1Column,
    /// `min ||(D^beta)^T Z||_1 + ||Z D^beta||_1` s.t. `||D^{-r}(Z - Q)D^{-rT}||_max <= delta/2`.
    Class2Image,
    /// `min ||D_1^beta z||_1` with the extra boundary box on the last `r` entries.
    Class3Column,
}

#[derive(Debug, Clone)]
pub struct DecodeProblem {
    /// Dequantized levels. Columns are `(N, 1)` arrays.
    pub q: Array2<f64>,
    pub beta: usize,
    pub r: usize,
    pub delta: f64,
    pub class: DecodeClass,
    /// Box on the last `r` entries of `x`, class 3 only.
    pub boundary_bound: Option<f64>,
    /// Allows class 2 with orders other than `beta = r = 1`.
    pub experimental: bool,
}

impl DecodeProblem {
    pub fn column(q: &[f64], beta: usize, r: usize, delta: f64, class: DecodeClass) -> Self {
        Self {
            q: Array2::from_shape_vec((q.len(), 1), q.to_vec()).expect("column shape"),
            beta,
            r,
            delta,
            class,
            boundary_bound: None,
            experimental: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SdqError::InvalidArgument(m));
        if self.q.is_empty() {
            return bad("empty quantized data".into());
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return bad(format!("step must be positive, got {}", self.delta));
        }
        if self.beta == 0 || self.r == 0 {
            return bad("orders must be at least 1".into());
        }
        match self.class {
            DecodeClass::Class1Column | DecodeClass::Class3Column => {
                if self.q.ncols() != 1 {
                    return bad("column decoders take an (N, 1) array".into());
                }
                if self.r < self.beta {
                    return bad(format!("need r >= beta, got r = {} and beta = {}", self.r, self.beta));
                }
                if self.class == DecodeClass::Class3Column {
                    match self.boundary_bound {
                        Some(b) if b > 0.0 => {}
                        _ => return bad("class 3 needs a positive boundary bound".into()),
                    }
                    if self.q.nrows() < self.r {
                        return bad("column shorter than the order".into());
                    }
                }
            }
            DecodeClass::Class2Image => {
                if (self.beta != 1 || self.r != 1) && !self.experimental {
                    return bad(format!(
                        "class 2 supports beta = r = 1; got beta = {}, r = {} (enable the experimental flag)",
                        self.beta, self.r
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn operator(&self) -> TvOperator {
        let (rows, cols) = self.q.dim();
        match self.class {
            DecodeClass::Class1Column => TvOperator::Column {
                n: rows,
                r: self.r,
                beta: self.beta,
            },
            DecodeClass::Class3Column => TvOperator::Cyclic {
                n: rows,
                r: self.r,
                beta: self.beta,
            },
            DecodeClass::Class2Image => TvOperator::Image {
                rows,
                cols,
                r: self.r,
                beta: self.beta,
            },
        }
    }

    /// Per-entry box radii on `x`.
    pub fn bounds(&self) -> Vec<f64> {
        let n = self.q.len();
        let mut b = vec![self.delta / 2.0; n];
        if let (DecodeClass::Class3Column, Some(bb)) = (self.class, self.boundary_bound) {
            for v in &mut b[n - self.r..] {
                *v = bb;
            }
        }
        b
    }

    /// The TV objective of a candidate `z` (same shape as `q`).
    pub fn objective(&self, z: &Array2<f64>) -> Result<f64> {
        if z.dim() != self.q.dim() {
            return Err(SdqError::SizeMismatch {
                expected: self.q.len(),
                got: z.len(),
            });
        }
        let flat: Vec<f64> = z.iter().copied().collect();
        Ok(self.operator().tv_objective(&flat))
    }

    /// Largest `|x_i| - b_i` over `x = D^{-r}(z - q)`; non-positive means feasible.
    pub fn constraint_slack(&self, z: &Array2<f64>) -> Result<f64> {
        if z.dim() != self.q.dim() {
            return Err(SdqError::SizeMismatch {
                expected: self.q.len(),
                got: z.len(),
            });
        }
        let mut x: Vec<f64> = z.iter().zip(self.q.iter()).map(|(a, b)| a - b).collect();
        self.operator().constraint_inverse(&mut x);
        Ok(x
            .iter()
            .zip(self.bounds())
            .map(|(v, b)| v.abs() - b)
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Default primal step multiplier for image problems.
pub const IMAGE_STEP_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tau: f64,
    pub sigma: f64,
    pub theta: f64,
    /// Multiplies `tau` and divides `sigma`. `None` uses 1 for columns and
    /// [`IMAGE_STEP_SCALE`] for images, where smaller primal steps avoid long
    /// stalls on near-flat patches.
    pub step_scale: Option<f64>,
    pub outer_tol: f64,
    pub outer_max_iters: usize,
    /// ADMM penalty; `None` picks one from the problem size.
    pub admm_rho: Option<f64>,
    pub admm_iters: usize,
    pub feasibility_tol: f64,
    /// Consecutive residual increases that count as divergence.
    pub divergence_window: usize,
    /// Restart from the running average when it has a smaller residual.
    pub restarts: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 0.99,
            sigma: 0.99,
            theta: 1.0,
            step_scale: None,
            outer_tol: 1e-7,
            outer_max_iters: 100_000,
            admm_rho: None,
            admm_iters: 10,
            feasibility_tol: 1e-6,
            divergence_window: 50,
            restarts: true,
        }
    }
}

fn parse_field<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| SdqError::Format(format!("bad value {value:?} for {key}")))
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SdqError::InvalidArgument(m));
        if !(self.tau > 0.0 && self.sigma > 0.0) {
            return bad("tau and sigma must be positive".into());
        }
        if self.tau * self.sigma >= 1.0 {
            return bad(format!("need tau * sigma < 1, got {}", self.tau * self.sigma));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        if matches!(self.step_scale, Some(s) if !(s > 0.0 && s.is_finite())) {
            return bad("step_scale must be positive".into());
        }
        if matches!(self.admm_rho, Some(r) if !(r > 0.0 && r.is_finite())) {
            return bad("admm_rho must be positive".into());
        }
        if self.outer_max_iters == 0 || self.admm_iters == 0 {
            return bad("iteration counts must be positive".into());
        }
        if !(self.outer_tol >= 0.0) || !(self.feasibility_tol >= 0.0) {
            return bad("tolerances must be non-negative".into());
        }
        Ok(())
    }

    /// The configured penalty, or `clamp(L^2 / 20, 1, 2e4)` where `L` is the
    /// column length or the sum of the image sides.
    pub fn penalty_for(&self, op: &TvOperator) -> f64 {
        self.admm_rho.unwrap_or_else(|| {
            let len = match *op {
                TvOperator::Column { n, .. } | TvOperator::Cyclic { n, .. } => n,
                TvOperator::Image { rows, cols, .. } => rows + cols,
            } as f64;
            (len * len / 20.0).clamp(1.0, 2e4)
        })
    }

    /// `(tau, sigma)` actually used on `op`.
    pub fn steps_for(&self, op: &TvOperator) -> (f64, f64) {
        let s = self.step_scale.unwrap_or(match op {
            TvOperator::Image { .. } => IMAGE_STEP_SCALE,
            _ => 1.0,
        });
        (self.tau * s, self.sigma / s)
    }

    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "tau" => self.tau = parse_field(key, value)?,
            "sigma" => self.sigma = parse_field(key, value)?,
            "theta" => self.theta = parse_field(key, value)?,
            "outer_tol" | "tol" => self.outer_tol = parse_field(key, value)?,
            "outer_max_iters" | "max_iters" => self.outer_max_iters = parse_field(key, value)?,
            "admm_rho" | "rho" => {
                self.admm_rho = if value == "auto" {
                    None
                } else {
                    Some(parse_field(key, value)?)
                }
            }
            "step_scale" => {
                self.step_scale = if value == "auto" {
                    None
                } else {
                    Some(parse_field(key, value)?)
                }
            }
            "admm_iters" => self.admm_iters = parse_field(key, value)?,
            "feasibility_tol" => self.feasibility_tol = parse_field(key, value)?,
            "divergence_window" => self.divergence_window = parse_field(key, value)?,
            "restarts" => self.restarts = parse_field(key, value)?,
            _ => return Err(SdqError::Format(format!("unknown solver key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SdqError::Format(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub x_hat: Array2<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub feasible: bool,
    pub constraint_slack: f64,
    /// Length of each outer step in the primal-dual metric.
    pub residual_history: Vec<f64>,
}

/// Returns `q` unchanged: the trivially feasible reconstruction.
pub fn decode_naive(q: &Array2<f64>) -> Array2<f64> {
    q.clone()
}

/// Solves any decode problem with the primal-dual loop.
pub fn solve_primal_dual(problem: &DecodeProblem, cfg: &SolverConfig) -> Result<DecodeResult> {
    problem.validate()?;
    cfg.validate()?;
    let op = problem.operator();
    let q: Vec<f64> = problem.q.iter().copied().collect();
    let mut c = vec![0.0; op.range_dim()];
    op.tv_map(&q, &mut c);
    let bounds = problem.bounds();
    let mut prox = AdmmProx::new(op, c, cfg.penalty_for(&op))?;
    let out = primal_dual::run(&mut prox, &bounds, cfg)?;

    let mut z = out.x;
    for (v, b) in z.iter_mut().zip(&bounds) {
        *v = v.clamp(-b, *b);
    }
    op.constraint_forward(&mut z);
    for (v, qi) in z.iter_mut().zip(&q) {
        *v += qi;
    }
    let x_hat = Array2::from_shape_vec(problem.q.dim(), z).expect("shape preserved");
    let slack = problem.constraint_slack(&x_hat)?;
    Ok(DecodeResult {
        objective: problem.objective(&x_hat)?,
        feasible: slack <= cfg.feasibility_tol,
        constraint_slack: slack,
        x_hat,
        primal_residual: out.primal_residual,
        dual_residual: out.dual_residual,
        iterations: out.iterations,
        converged: out.converged,
        residual_history: out.history,
    })
}

pub fn decode_class1_column(q: &[f64], beta: usize, r: usize, delta: f64, cfg: &SolverConfig) -> Result<DecodeResult> {
    solve_primal_dual(&DecodeProblem::column(q, beta, r, delta, DecodeClass::Class1Column), cfg)
}

/// Class 2 with `beta = r = 1`.
pub fn decode_class2(q: &Array2<f64>, delta: f64, cfg: &SolverConfig) -> Result<DecodeResult> {
    decode_class2_orders(q, 1, 1, delta, cfg, false)
}

pub fn decode_class2_orders(
    q: &Array2<f64>,
    beta: usize,
    r: usize,
    delta: f64,
    cfg: &SolverConfig,
    experimental: bool,
) -> Result<DecodeResult> {
    let problem = DecodeProblem {
        q: q.clone(),
        beta,
        r,
        delta,
        class: DecodeClass::Class2Image,
        boundary_bound: None,
        experimental,
    };
    solve_primal_dual(&problem, cfg)
}

/// Class 3; `q` must already carry the fine-alphabet values on its last `r` entries.
pub fn decode_class3_column(
    q: &[f64],
    fine: &FineBoundaryAlphabet,
    beta: usize,
    r: usize,
    delta: f64,
    cfg: &SolverConfig,
) -> Result<DecodeResult> {
    if fine.signal_len() != q.len() || fine.order() != r {
        return Err(SdqError::InvalidArgument(format!(
            "fine alphabet built for N = {}, r = {} but decoding N = {}, r = {}",
            fine.signal_len(),
            fine.order(),
            q.len(),
            r
        )));
    }
    let mut problem = DecodeProblem::column(q, beta, r, delta, DecodeClass::Class3Column);
    problem.boundary_bound = Some(fine.boundary_bound());
    solve_primal_dual(&problem, cfg)
}

/// One prox of `tau ||(D^beta)^T D^r x + (D^beta)^T q||_1` at `v`, from a cold
/// start with `cfg.admm_iters` sweeps.
pub fn solve_admm_subproblem(
    v: &[f64],
    q: &[f64],
    beta: usize,
    r: usize,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    if v.len() != q.len() {
        return Err(SdqError::SizeMismatch {
            expected: q.len(),
            got: v.len(),
        });
    }
    let op = TvOperator::Column { n: q.len(), r, beta };
    let mut c = vec![0.0; q.len()];
    op.tv_map(q, &mut c);
    let mut prox = AdmmProx::new(op, c, cfg.penalty_for(&op))?;
    let mut x = vec![0.0; v.len()];
    prox.prox(v, tau, cfg.admm_iters, &mut x);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg = SolverConfig::from_kv_str("# solver\ntau = 0.5\nsigma=1.5 # tight\n\nmax_iters = 300\n").unwrap();
        assert_eq!(cfg.tau, 0.5);
        assert_eq!(cfg.sigma, 1.5);
        assert_eq!(cfg.outer_max_iters, 300);
        assert_eq!(cfg.admm_iters, 10);
        assert!(SolverConfig::from_kv_str("tau = 1\nsigma = 1").is_err());
        assert!(SolverConfig::from_kv_str("speed = 3").is_err());
        assert!(SolverConfig::from_kv_str("tau 3").is_err());
    }

    #[test]
    fn zero_data_gives_zero() {
        let cfg = SolverConfig::default();
        let res = decode_class1_column(&[0.0; 16], 1, 1, 1.0 / 7.0, &cfg).unwrap();
        assert!(res.x_hat.iter().all(|v| v.abs() < 1e-9));
        assert!(res.feasible);
        assert!(res.objective < 1e-8);
    }

    #[test]
    fn constant_column_stays_close() {
        let cfg = SolverConfig::default();
        let n = 32;
        let delta = 1.0 / 7.0;
        let res = decode_class1_column(&vec![0.4; n], 1, 1, delta, &cfg).unwrap();
        assert!(res.feasible);
        for v in res.x_hat.iter() {
            assert!((v - 0.4).abs() <= delta / (2.0 * n as f64) + 1e-6, "{v}");
        }
    }

    #[test]
    fn class2_rejects_higher_orders_without_flag() {
        let q = Array2::zeros((4, 4));
        let cfg = SolverConfig::default();
        assert!(decode_class2_orders(&q, 1, 2, 0.1, &cfg, false).is_err());
        assert!(decode_class2_orders(&q, 1, 2, 0.1, &cfg, true).is_ok());
    }

    #[test]
    fn admm_zero_inputs() {
        let cfg = SolverConfig::default();
        let x = solve_admm_subproblem(&[0.0; 8], &[0.0; 8], 1, 1, 0.5, &cfg).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-12));
        let v = [0.3, -0.1, 0.2, 0.9];
        let x = solve_admm_subproblem(&v, &[1.0; 4], 1, 2, 0.0, &cfg).unwrap();
        assert_eq!(x, v);
    }
}
