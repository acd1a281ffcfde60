//! Small limited-memory quasi-Newton minimizer with backtracking line
//! search. Descent-only: every accepted step strictly decreases the
//! objective, which is the property downstream training relies on.

use std::collections::VecDeque;

pub struct MinimizeOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub history: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iters: 200,
            grad_tol: 1e-9,
            history: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn minimize<F, G>(f: F, grad: G, x0: &[f64], opts: &MinimizeOptions) -> MinimizeOutcome
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut rho_hist: VecDeque<f64> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        if !fx.is_finite() {
            break;
        }
        if norm_inf(&g) < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for k in (0..s_hist.len()).rev() {
            let alpha = rho_hist[k] * dot(&s_hist[k], &q);
            for i in 0..n {
                q[i] -= alpha * y_hist[k][i];
            }
            alphas.push(alpha);
        }
        alphas.reverse();
        let gamma = match s_hist.back() {
            Some(s) => {
                let y = y_hist.back().unwrap();
                let yy = dot(y, y);
                if yy > 0.0 {
                    dot(s, y) / yy
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let mut dir: Vec<f64> = q.iter().map(|v| v * gamma).collect();
        for k in 0..s_hist.len() {
            let beta = rho_hist[k] * dot(&y_hist[k], &dir);
            for i in 0..n {
                dir[i] += (alphas[k] - beta) * s_hist[k][i];
            }
        }
        for d in dir.iter_mut() {
            *d = -*d;
        }
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // Curvature information went bad; fall back to steepest descent.
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // Weak-Wolfe line search by bisection: sufficient decrease plus a
        // curvature condition, so accepted steps always carry positive
        // curvature and the history stays usable. Falls back to the best
        // plain-Armijo point when the curvature side cannot be satisfied.
        let c1 = 1e-4;
        let c2 = 0.9;
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        let mut t = 1.0f64;
        let mut wolfe: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        let mut armijo: Option<(Vec<f64>, f64)> = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
            let ft = f(&xt);
            if !ft.is_finite() || ft > fx + c1 * t * slope {
                hi = t;
                t = 0.5 * (lo + hi);
                continue;
            }
            if armijo.as_ref().map_or(true, |(_, bf)| ft < *bf) {
                armijo = Some((xt.clone(), ft));
            }
            let gt = grad(&xt);
            if dot(&gt, &dir) < c2 * slope {
                lo = t;
                t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * t };
                continue;
            }
            wolfe = Some((xt, ft, gt));
            break;
        }
        let (x_new, f_new, g_new) = match wolfe {
            Some(found) => found,
            None => match armijo {
                Some((xt, ft)) => {
                    let gt = grad(&xt);
                    (xt, ft, gt)
                }
                None => break, // no descent step found at machine scale
            },
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if s_hist.len() == opts.history {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            rho_hist.push_back(1.0 / sy);
            s_hist.push_back(s);
            y_hist.push_back(y);
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    MinimizeOutcome {
        x,
        value: fx,
        iterations,
        converged,
    }
}
