//! Limited-memory BFGS with backtracking line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub memory: usize,
    /// Stop when `‖Δx‖ ≤ step_tol · (1 + ‖x‖)`.
    pub step_tol: f64,
    /// Stop when `‖∇f‖_∞ ≤ grad_tol`.
    pub grad_tol: f64,
    pub max_evals: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            step_tol: 1e-6,
            grad_tol: 1e-8,
            max_evals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StepTolerance,
    GradientTolerance,
    MaxEvaluations,
    LineSearch,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub iterations: usize,
    pub reason: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimise `f`, which returns the value and gradient. Non-finite values are
/// treated as infeasible and rejected by the line search.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    if opts.max_evals == 0 {
        return Ok(LbfgsResult {
            x,
            value: f64::NAN,
            evals: 0,
            iterations: 0,
            reason: StopReason::MaxEvaluations,
        });
    }
    let (mut fx, mut g) = f(&x);
    let mut evals = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimizer {
            reason: "objective not finite at the starting point".into(),
            trace: vec![fx],
        });
    }
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;

    let reason = loop {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.grad_tol {
            break StopReason::GradientTolerance;
        }
        if evals >= opts.max_evals {
            break StopReason::MaxEvaluations;
        }

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / norm(&g).max(1e-300),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = g.iter().map(|v| -v / norm(&g)).collect();
            slope = dot(&g, &dir);
        }

        let mut t = 1.0;
        let mut accepted = None;
        while evals < opts.max_evals {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let (fn_, gn) = f(&xn);
            evals += 1;
            if fn_.is_finite() && fn_ <= fx + 1e-4 * t * slope && gn.iter().all(|v| v.is_finite()) {
                accepted = Some((xn, fn_, gn));
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                break;
            }
        }
        let Some((xn, fn_, gn)) = accepted else {
            break if evals >= opts.max_evals {
                StopReason::MaxEvaluations
            } else {
                StopReason::LineSearch
            };
        };
        iterations += 1;

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s.clone(), y, 1.0 / sy));
        }
        let step = norm(&s);
        x = xn;
        fx = fn_;
        g = gn;
        if step <= opts.step_tol * (1.0 + norm(&x)) {
            break StopReason::StepTolerance;
        }
    };

    Ok(LbfgsResult {
        x,
        value: fx,
        evals,
        iterations,
        reason,
    })
}
