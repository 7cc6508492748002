//! Receding-horizon algebraic differentiation of sampled signals.
//!
//! Derivative estimates are fixed-weight convolutions over a sliding window
//! of M+1 samples. The weights combine a family of polynomial kernels
//! (1-s)^(nu+a) (-s)^(N-a) whose coefficients are moment-matched so that
//! every polynomial of degree <= N is differentiated exactly at the
//! evaluation point t_k - eval_offset. With eval_offset = 0 the estimate
//! refers to the newest sample; a mid-window offset trades delay for a much
//! smaller noise gain.

use thiserror::Error;

/// Window and kernel parameters of the algebraic differentiator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DifferentiatorConfig {
    /// Window length T [s].
    pub window_t: f64,
    /// Sample period Ts [s]; T must be an integer multiple of it.
    pub sample_ts: f64,
    /// Taylor order N: polynomials up to this degree are exact.
    pub taylor_order: usize,
    /// Extra smoothing exponent nu on the kernel's (1-s) factor.
    pub extra_nu: usize,
    /// Highest derivative order this configuration serves.
    pub max_derivative: usize,
    /// Evaluation delay delta [s] behind the newest sample, in [0, T].
    pub eval_offset: f64,
}

impl Default for DifferentiatorConfig {
    fn default() -> Self {
        Self {
            window_t: 20.0,
            sample_ts: 1.0,
            taylor_order: 2,
            extra_nu: 2,
            max_derivative: 2,
            eval_offset: 0.0,
        }
    }
}

impl DifferentiatorConfig {
    /// Number of sample intervals M in the window; the window holds M+1 samples.
    pub fn window_samples(&self) -> usize {
        (self.window_t / self.sample_ts).round() as usize
    }

    /// Evaluation delay expressed in whole samples.
    pub fn delay_samples(&self) -> usize {
        (self.eval_offset / self.sample_ts).round() as usize
    }

    pub fn validate(&self) -> Result<(), DifferentiatorError> {
        if !(self.sample_ts > 0.0) || !(self.window_t > 0.0) {
            return Err(DifferentiatorError::InvalidConfig {
                reason: "window_T and sample_Ts must be positive".into(),
            });
        }
        let m = self.window_samples();
        if (m as f64 * self.sample_ts - self.window_t).abs() > 1e-9 * self.window_t.max(1.0) {
            return Err(DifferentiatorError::InvalidConfig {
                reason: "window_T must be an integer multiple of sample_Ts".into(),
            });
        }
        if m < self.taylor_order + 2 {
            return Err(DifferentiatorError::InvalidConfig {
                reason: format!(
                    "window holds M = {m} intervals but needs at least N + 2 = {}",
                    self.taylor_order + 2
                ),
            });
        }
        if self.taylor_order < self.max_derivative {
            return Err(DifferentiatorError::InvalidConfig {
                reason: "taylor_order_N must be at least max_derivative".into(),
            });
        }
        if !(0.0..=self.window_t).contains(&self.eval_offset) {
            return Err(DifferentiatorError::InvalidConfig {
                reason: "eval_offset must lie in [0, window_T]".into(),
            });
        }
        Ok(())
    }
}

/// Errors raised by the differentiator layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DifferentiatorError {
    #[error("invalid differentiator configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("derivative order {j} exceeds taylor_order_N = {n}")]
    OrderTooHigh { j: usize, n: usize },
    #[error("history holds {have} samples but the window needs {need}")]
    NotReady { have: usize, need: usize },
    #[error("weight system is singular; use a smaller taylor_order_N or extra_integrals_nu")]
    SingularWeights,
}

fn factorial(m: usize) -> f64 {
    (1..=m).fold(1.0, |acc, k| acc * k as f64)
}

/// Solves the square system a*x = b in place by Gaussian elimination with
/// partial pivoting.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>, DifferentiatorError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(DifferentiatorError::SingularWeights);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Convolution weights for the j-th derivative, length M+1; weights[0]
/// multiplies the newest sample and weights[M] the oldest.
pub fn precompute_weights(
    cfg: &DifferentiatorConfig,
    j: usize,
) -> Result<Vec<f64>, DifferentiatorError> {
    cfg.validate()?;
    let n = cfg.taylor_order;
    if j > n {
        return Err(DifferentiatorError::OrderTooHigh { j, n });
    }
    let m = cfg.window_samples();
    let d = cfg.eval_offset / cfg.window_t;
    let kernel = |a: usize, s: f64| (1.0 - s).powi((cfg.extra_nu + a) as i32) * (-s).powi((n - a) as i32);
    let trap = |i: usize| if i == 0 || i == m { 0.5 } else { 1.0 };

    let mut a_mat: Vec<Vec<f64>> = vec![vec![0.0; n + 1]; n + 1];
    let mut b_vec = vec![0.0; n + 1];
    for row in 0..=n {
        for col in 0..=n {
            let mut acc = 0.0;
            for i in 0..=m {
                let s = i as f64 / m as f64;
                acc += trap(i) * kernel(col, s) * (d - s).powi(row as i32);
            }
            a_mat[row][col] = acc;
        }
        b_vec[row] = if row == j { factorial(j) } else { 0.0 };
    }
    let coeffs = solve_dense(&mut a_mat, &mut b_vec)?;

    let scale = cfg.window_t.powi(j as i32);
    let weights = (0..=m)
        .map(|i| {
            let s = i as f64 / m as f64;
            let k: f64 = (0..=n).map(|a| coeffs[a] * kernel(a, s)).sum();
            trap(i) * k / scale
        })
        .collect();
    Ok(weights)
}

/// Dot product of the precomputed weights with the newest M+1 samples of a
/// chronological history (oldest first).
pub fn apply_weights(history: &[f64], weights: &[f64]) -> Result<f64, DifferentiatorError> {
    let need = weights.len();
    if history.len() < need {
        return Err(DifferentiatorError::NotReady {
            have: history.len(),
            need,
        });
    }
    let newest = history.len() - 1;
    Ok(weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * history[newest - i])
        .sum())
}

/// Estimates the j-th derivative at t_k - eval_offset from the newest M+1
/// samples of a chronological history.
pub fn estimate(
    history: &[f64],
    cfg: &DifferentiatorConfig,
    j: usize,
) -> Result<f64, DifferentiatorError> {
    let weights = precompute_weights(cfg, j)?;
    apply_weights(history, &weights)
}

/// Central-difference reference over the newest three samples, evaluated at
/// the middle one; supports j in {0, 1, 2}.
pub fn fd_reference(
    history: &[f64],
    sample_ts: f64,
    j: usize,
) -> Result<f64, DifferentiatorError> {
    if history.len() < 3 {
        return Err(DifferentiatorError::NotReady {
            have: history.len(),
            need: 3,
        });
    }
    if j > 2 {
        return Err(DifferentiatorError::OrderTooHigh { j, n: 2 });
    }
    let c = history[history.len() - 1];
    let b = history[history.len() - 2];
    let a = history[history.len() - 3];
    Ok(match j {
        0 => b,
        1 => (c - a) / (2.0 * sample_ts),
        _ => (a - 2.0 * b + c) / (sample_ts * sample_ts),
    })
}
