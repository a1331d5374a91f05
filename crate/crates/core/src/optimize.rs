//! Derivative-free minimisation with a Newton finish, and finite-difference
//! derivatives.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::math::{abs, sqrt};
use crate::matrix::Matrix;
use crate::rng::{domain, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct OptimizerConfig {
    /// Relative objective tolerance for the simplex.
    pub tol: f64,
    pub max_iters: usize,
    /// Simplex runs: one from the initial point, the rest from jittered copies
    /// of the best point so far.
    pub restarts: usize,
    /// Standard deviation of the restart jitter, in transformed coordinates.
    pub jitter: f64,
    /// Initial simplex edge, in transformed coordinates.
    pub initial_step: f64,
    /// Finish with Newton steps on finite-difference derivatives.
    pub polish: bool,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            tol: 1e-8,
            max_iters: 2000,
            restarts: 3,
            jitter: 0.1,
            initial_step: 0.2,
            polish: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimises `f` from `x0`.
pub fn minimize<F>(f: F, x0: &[f64], cfg: &OptimizerConfig) -> Optimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut obj = Counted { f, evals: 0 };
    let mut best_x = x0.to_vec();
    let mut best_v = obj.call(x0);
    let mut iterations = 0;
    let mut converged = false;
    let mut rng = stream_rng(cfg.seed, domain::OPTIMIZER, 0);
    let normal = Normal::new(0.0, cfg.jitter.max(0.0)).expect("finite jitter");
    for attempt in 0..cfg.restarts.max(1) {
        let start: Vec<f64> = if attempt == 0 {
            x0.to_vec()
        } else {
            best_x.iter().map(|v| v + normal.sample(&mut rng)).collect()
        };
        let (x, v, it, ok) = nelder_mead(&mut obj, &start, cfg);
        iterations += it;
        if v < best_v || (v == best_v && ok) {
            best_x = x;
            best_v = v;
        }
        converged |= ok;
    }
    if cfg.polish && best_v.is_finite() {
        let (x, v) = newton_polish(&mut obj, &best_x, best_v);
        best_x = x;
        best_v = v;
    }
    Optimum { x: best_x, value: best_v, evals: obj.evals, iterations, converged }
}

fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<F>,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> (Vec<f64>, f64, usize, bool) {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += cfg.initial_step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| obj.call(p)).collect();
    let mut order: Vec<usize> = (0..=n).collect();
    for it in 0..cfg.max_iters {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);
        let fb = values[best];
        let fw = values[worst];
        let spread = abs(fw - fb);
        let size = simplex
            .iter()
            .map(|p| p.iter().zip(&simplex[best]).map(|(a, b)| abs(a - b)).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if fb.is_finite() && spread <= cfg.tol * (abs(fb) + cfg.tol) && size <= 1e3 * cfg.tol {
            return (simplex[best].clone(), fb, it, true);
        }
        let mut centroid = vec![0.0; n];
        for &i in order.iter().take(n) {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[worst]).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(alpha);
        let fr = obj.call(&xr);
        if fr < fb {
            let xe = along(gamma);
            let fe = obj.call(&xe);
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < fw {
            let xc = along(rho);
            let fc = obj.call(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = obj.call(&xc);
            (xc, fc)
        };
        if fc < fr.min(fw) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        let anchor = simplex[best].clone();
        for &i in order.iter().skip(1) {
            for (v, a) in simplex[i].iter_mut().zip(&anchor) {
                *v = a + sigma * (*v - a);
            }
            values[i] = obj.call(&simplex[i]);
        }
    }
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    (simplex[order[0]].clone(), values[order[0]], cfg.max_iters, false)
}

fn newton_polish<F: FnMut(&[f64]) -> f64>(obj: &mut Counted<F>, x0: &[f64], f0: f64) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut fx = f0;
    for _ in 0..20 {
        let steps = default_steps(&x, 1e-4);
        let g = gradient(&mut |p: &[f64]| obj.call(p), &x, &steps);
        let h = hessian(&mut |p: &[f64]| obj.call(p), &x, &steps);
        if !g.iter().all(|v| v.is_finite()) || !h.is_finite() || !h.is_positive_definite() {
            break;
        }
        let Some(d) = h.solve(&g) else { break };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi - t * di).collect();
            let fc = obj.call(&cand);
            if fc <= fx {
                let step = x.iter().zip(&cand).map(|(a, b)| abs(a - b)).fold(0.0, f64::max);
                moved = step > 0.0;
                x = cand;
                fx = fc;
                break;
            }
            t *= 0.5;
        }
        let dmax = d.iter().map(|v| abs(*v)).fold(0.0, f64::max);
        if !moved || dmax <= 1e-13 * (1.0 + x.iter().map(|v| abs(*v)).fold(0.0, f64::max)) {
            break;
        }
    }
    (x, fx)
}

/// Per-coordinate steps `rel·max(|xᵢ|, 1)`.
pub fn default_steps(x: &[f64], rel: f64) -> Vec<f64> {
    x.iter().map(|v| rel * abs(*v).max(1.0)).collect()
}

/// Central-difference gradient with one Richardson extrapolation.
pub fn gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], steps: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut central = |h: f64| {
                p[i] = x[i] + h;
                let fp = f(&p);
                p[i] = x[i] - h;
                let fm = f(&p);
                p[i] = x[i];
                (fp - fm) / (2.0 * h)
            };
            let d1 = central(steps[i]);
            let d2 = central(2.0 * steps[i]);
            (4.0 * d1 - d2) / 3.0
        })
        .collect()
}

/// Central-difference Hessian at a single step size.
pub fn hessian_at<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], steps: &[f64]) -> Matrix {
    let n = x.len();
    let mut h = Matrix::zeros(n);
    let f0 = f(x);
    let mut p = x.to_vec();
    for i in 0..n {
        let hi = steps[i];
        p[i] = x[i] + hi;
        let fp = f(&p);
        p[i] = x[i] - hi;
        let fm = f(&p);
        p[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * hi;
                p[j] = x[j] + sj * hj;
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Richardson-extrapolated central-difference Hessian.
pub fn hessian<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], steps: &[f64]) -> Matrix {
    let h1 = hessian_at(f, x, steps);
    let doubled: Vec<f64> = steps.iter().map(|s| 2.0 * s).collect();
    let h2 = hessian_at(f, x, &doubled);
    let n = x.len();
    let mut out = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = (4.0 * h1[(i, j)] - h2[(i, j)]) / 3.0;
        }
    }
    out
}

/// Standard errors `sqrt(diag(H⁻¹))` from an observed-information matrix.
pub fn standard_errors(information: &Matrix) -> Option<Vec<f64>> {
    let inv = information.symmetrized().inverse()?;
    let d = inv.diag();
    if d.iter().all(|v| *v > 0.0 && v.is_finite()) {
        Some(d.into_iter().map(sqrt).collect())
    } else {
        None
    }
}
