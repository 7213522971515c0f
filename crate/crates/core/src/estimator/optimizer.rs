//! BFGS minimization with a strong-Wolfe line search.
//!
//! The objective may fail at infeasible points (for instance a singular
//! pattern covariance); the line search treats those as `+inf` and shrinks.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Relative change of the objective below which the value is considered settled.
    pub loglik_tol: f64,
    /// Max-norm of the gradient required for convergence.
    pub grad_tol: f64,
    /// Step for central finite differences.
    pub fd_step: f64,
    /// Use finite-difference gradients instead of the analytic ones.
    pub finite_difference_gradient: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            loglik_tol: 1e-9,
            grad_tol: 1e-5,
            fd_step: 1e-5,
            finite_difference_gradient: false,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the start and after every accepted step.
    pub trace: Vec<f64>,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Clone)]
struct Point {
    alpha: f64,
    value: f64,
    grad: Vec<f64>,
    slope: f64,
}

/// Minimizes `f`, which returns the objective and its gradient or `None`
/// where the objective is undefined.
pub(crate) fn minimize<F>(mut f: F, x0: Vec<f64>, settings: &OptimizerSettings) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let (mut value, mut grad) = f(&x0)?;
    if !value.is_finite() {
        return None;
    }
    let mut x = x0;
    let mut trace = vec![value];
    // Dense inverse-Hessian approximation, row-major.
    let mut h = identity(n);
    let mut scaled = false;
    let mut converged = max_norm(&grad) < settings.grad_tol;
    let mut iterations = 0;
    let mut restarted = false;

    while !converged && iterations < settings.max_iterations {
        let mut dir = mat_vec(&h, &grad);
        dir.iter_mut().for_each(|d| *d = -*d);
        let mut slope0 = dot(&dir, &grad);
        if !(slope0 < 0.0) {
            h = identity(n);
            scaled = false;
            dir = grad.iter().map(|g| -g).collect();
            slope0 = dot(&dir, &grad);
        }
        let alpha0 = if scaled {
            1.0
        } else {
            (1.0 / max_norm(&dir)).min(1.0)
        };

        let eval = |alpha: f64, f: &mut F| -> Option<Point> {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let (v, g) = f(&xt)?;
            if !v.is_finite() || g.iter().any(|gi| !gi.is_finite()) {
                return None;
            }
            Some(Point {
                alpha,
                slope: dot(&g, &dir),
                value: v,
                grad: g,
            })
        };

        let accepted = line_search(&mut f, eval, value, slope0, alpha0);
        let Some(point) = accepted else {
            if restarted || !scaled {
                break;
            }
            // Discard curvature information once before giving up.
            h = identity(n);
            scaled = false;
            restarted = true;
            continue;
        };
        restarted = false;

        let s: Vec<f64> = dir.iter().map(|d| point.alpha * d).collect();
        let y: Vec<f64> = point.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let rel_change = (value - point.value).abs() / value.abs().max(1.0);
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        value = point.value;
        grad = point.grad;
        trace.push(value);
        iterations += 1;

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..n {
                    h[i * n + i] = gamma;
                }
                scaled = true;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }

        converged = rel_change < settings.loglik_tol && max_norm(&grad) < settings.grad_tol;
    }

    if !converged && max_norm(&grad) < settings.grad_tol {
        // The line search can no longer improve the value: it has settled.
        converged = iterations < settings.max_iterations;
    }

    Some(Minimum {
        x,
        value,
        grad,
        iterations,
        converged,
        trace,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| dot(&h[i * n..(i + 1) * n], v)).collect()
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`, `ρ = 1 / yᵀs`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Objective differences below this fraction of |f| are treated as rounding
/// noise; inside that band decrease is judged from directional derivatives.
const NOISE_REL: f64 = 1e-13;

struct Criteria {
    value0: f64,
    slope0: f64,
    noise: f64,
}

impl Criteria {
    /// Armijo decrease, or its trapezoid-rule counterpart when the change in
    /// value is below the noise level.
    fn sufficient(&self, p: &Point) -> bool {
        let dv = p.value - self.value0;
        if dv.abs() > self.noise {
            p.value <= self.value0 + C1 * p.alpha * self.slope0
        } else {
            p.slope.is_finite() && p.slope <= (2.0 * C1 - 1.0) * self.slope0
        }
    }

    fn curvature(&self, p: &Point) -> bool {
        p.slope.abs() <= -C2 * self.slope0
    }

    /// Whether `a` has a lower objective than `b`.
    fn lower(&self, a: &Point, b: &Point) -> bool {
        let dv = a.value - b.value;
        if dv.abs() > self.noise || !(a.slope.is_finite() && b.slope.is_finite()) {
            dv < 0.0
        } else {
            (a.alpha - b.alpha) * (a.slope + b.slope) < 0.0
        }
    }
}

/// Strong-Wolfe line search (bracketing then zoom).
fn line_search<F, E>(f: &mut F, eval: E, value0: f64, slope0: f64, alpha0: f64) -> Option<Point>
where
    E: Fn(f64, &mut F) -> Option<Point>,
{
    let crit = Criteria {
        value0,
        slope0,
        noise: NOISE_REL * value0.abs(),
    };
    let mut evals = 0;
    let mut prev = Point {
        alpha: 0.0,
        value: value0,
        grad: Vec::new(),
        slope: slope0,
    };
    let mut alpha = alpha0;
    let mut best: Option<Point> = None;

    loop {
        if evals >= MAX_LINE_EVALS {
            return best;
        }
        evals += 1;
        let Some(cur) = eval(alpha, f) else {
            // Undefined objective: retreat toward the last good point.
            alpha = prev.alpha + 0.1 * (alpha - prev.alpha);
            if alpha - prev.alpha < 1e-16 {
                return best;
            }
            continue;
        };
        if crit.sufficient(&cur) && best.as_ref().is_none_or(|b| crit.lower(&cur, b)) {
            best = Some(cur.clone());
        }
        if !crit.sufficient(&cur) || (evals > 1 && !crit.lower(&cur, &prev)) {
            return zoom(f, &eval, &crit, prev, cur, evals, best);
        }
        if crit.curvature(&cur) {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            return zoom(f, &eval, &crit, cur, prev, evals, best);
        }
        alpha = cur.alpha * 2.0;
        prev = cur;
    }
}

fn zoom<F, E>(
    f: &mut F,
    eval: &E,
    crit: &Criteria,
    mut lo: Point,
    mut hi: Point,
    mut evals: usize,
    mut best: Option<Point>,
) -> Option<Point>
where
    E: Fn(f64, &mut F) -> Option<Point>,
{
    while evals < MAX_LINE_EVALS {
        evals += 1;
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        if b - a < 1e-16 * b.max(1.0) {
            break;
        }
        let mut alpha = cubic_min(&lo, &hi).unwrap_or(0.5 * (lo.alpha + hi.alpha));
        let margin = 0.1 * (b - a);
        if !(alpha > a + margin && alpha < b - margin) {
            alpha = 0.5 * (lo.alpha + hi.alpha);
        }
        let Some(cur) = eval(alpha, f) else {
            hi = Point {
                alpha,
                value: f64::INFINITY,
                grad: Vec::new(),
                slope: f64::NAN,
            };
            continue;
        };
        if crit.sufficient(&cur) && best.as_ref().is_none_or(|p| crit.lower(&cur, p)) {
            best = Some(cur.clone());
        }
        if !crit.sufficient(&cur) || !crit.lower(&cur, &lo) {
            hi = cur;
        } else {
            if crit.curvature(&cur) {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    best
}

/// Minimizer of the cubic interpolating values and slopes at two points.
fn cubic_min(p: &Point, q: &Point) -> Option<f64> {
    if !(p.slope.is_finite() && q.slope.is_finite() && q.value.is_finite()) {
        return None;
    }
    let d1 = p.slope + q.slope - 3.0 * (p.value - q.value) / (p.alpha - q.alpha);
    let disc = d1 * d1 - p.slope * q.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (q.alpha - p.alpha).signum() * disc.sqrt();
    let alpha = q.alpha - (q.alpha - p.alpha) * (q.slope + d2 - d1) / (q.slope - p.slope + 2.0 * d2);
    alpha.is_finite().then_some(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        Some((v, g))
    }

    #[test]
    fn minimizes_rosenbrock() {
        let m = minimize(rosenbrock, vec![-1.2, 1.0], &OptimizerSettings::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn minimizes_quadratic_exactly() {
        let f = |x: &[f64]| {
            let v = 0.5 * (x[0] * x[0] + 10.0 * x[1] * x[1] + 100.0 * x[2] * x[2]);
            Some((v, vec![x[0], 10.0 * x[1], 100.0 * x[2]]))
        };
        let m = minimize(f, vec![3.0, -2.0, 1.0], &OptimizerSettings::default()).unwrap();
        assert!(m.converged);
        assert!(m.grad.iter().all(|g| g.abs() < 1e-5));
    }

    #[test]
    fn respects_undefined_regions() {
        // -log(x) + x has its minimum at 1 and is undefined for x <= 0.
        let f = |x: &[f64]| (x[0] > 0.0).then(|| (x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]]));
        let m = minimize(f, vec![0.05], &OptimizerSettings::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn iteration_cap_stops_without_convergence() {
        let settings = OptimizerSettings {
            max_iterations: 2,
            ..OptimizerSettings::default()
        };
        let m = minimize(rosenbrock, vec![-1.2, 1.0], &settings).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 2);
    }

    #[test]
    fn undefined_start_returns_none() {
        assert!(minimize(|_: &[f64]| None, vec![0.0], &OptimizerSettings::default()).is_none());
    }
}
