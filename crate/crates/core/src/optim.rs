//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Converged once the Euclidean gradient norm is at or below this.
    pub grad_tol: f64,
    /// Number of curvature pairs kept.
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iters: 500,
            grad_tol: 1e-6,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimizeStatus {
    Converged,
    MaxIters,
    /// No descent step could be found before the gradient tolerance was met,
    /// typically because the objective is flat to rounding.
    Stalled,
    /// The objective was not finite at the starting point.
    Failed,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub status: MinimizeStatus,
    /// Objective value after each accepted step, starting point first.
    pub trace: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Minimize `fg`, which returns the objective and writes the gradient into
/// its second argument. Non-finite values are treated as +∞ and make the
/// line search shrink the step.
///
/// Accepted steps never increase the objective by more than a few ulps:
/// a step that ties `f` to rounding is taken only if it also shrinks the
/// gradient, which lets the iteration finish on objectives whose value has
/// stopped resolving before the gradient has.
pub fn minimize<F>(mut fg: F, x0: &[f64], opts: &MinimizeOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut f = fg(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum {
            x,
            f,
            grad_norm: f64::NAN,
            iters: 0,
            status: MinimizeStatus::Failed,
            trace: vec![f],
        };
    }

    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut trace = vec![f];

    for iter in 0..opts.max_iters {
        let gnorm = norm(&g);
        if gnorm <= opts.grad_tol {
            return Minimum {
                x,
                f,
                grad_norm: gnorm,
                iters: iter,
                status: MinimizeStatus::Converged,
                trace,
            };
        }

        // two-loop recursion
        dir.copy_from_slice(&g);
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[k] = a;
            for (di, yi) in dir.iter_mut().zip(y) {
                *di -= a * yi;
            }
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|v| *v *= gamma);
        }
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &dir);
            for (di, si) in dir.iter_mut().zip(s) {
                *di += (alpha_buf[k] - b) * si;
            }
        }
        dir.iter_mut().for_each(|v| *v = -*v);

        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            for (di, gi) in dir.iter_mut().zip(&g) {
                *di = -gi;
            }
            slope = -gnorm * gnorm;
        }

        let mut step = if hist.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..d {
                x_new[i] = x[i] + step * dir[i];
            }
            let f_try = fg(&x_new, &mut g_new);
            let finite = f_try.is_finite() && g_new.iter().all(|v| v.is_finite());
            if finite {
                if f_try <= f + ARMIJO_C1 * step * slope {
                    accepted = Some(f_try);
                    break;
                }
                let ulps = 8.0 * f64::EPSILON * f.abs().max(1.0);
                if f_try <= f + ulps && norm(&g_new) < gnorm {
                    accepted = Some(f_try);
                    break;
                }
                step *= 0.5;
            } else {
                step *= 0.1;
            }
        }

        let Some(f_next) = accepted else {
            if !hist.is_empty() {
                hist.clear();
                continue;
            }
            return Minimum {
                x,
                f,
                grad_norm: gnorm,
                iters: iter,
                status: MinimizeStatus::Stalled,
                trace,
            };
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_next;
        trace.push(f);
    }

    let gnorm = norm(&g);
    Minimum {
        x,
        f,
        grad_norm: gnorm,
        iters: opts.max_iters,
        status: if gnorm <= opts.grad_tol {
            MinimizeStatus::Converged
        } else {
            MinimizeStatus::MaxIters
        },
        trace,
    }
}
