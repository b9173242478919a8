//! Small dense quasi-Newton minimizer.
//!
//! BFGS on the inverse Hessian with a strong-Wolfe line search. Objectives
//! return `f(x)` and write the gradient into the supplied buffer; a non-finite
//! value marks a point outside the domain and makes the line search back off.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged when the Euclidean gradient norm drops below this.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Probe {
    x: Vec<f64>,
    g: Vec<f64>,
    f: f64,
}

struct Point {
    alpha: f64,
    f: f64,
    slope: f64,
}

/// Strong-Wolfe line search along `dir` from `x` (value `f0`, slope `d0 < 0`).
fn line_search<F>(obj: &mut F, x: &[f64], f0: f64, d0: f64, dir: &[f64], step0: f64) -> Option<(Probe, f64)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let n = x.len();
    let mut eval = |alpha: f64| -> (Probe, f64) {
        let xn: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        let mut g = vec![0.0; n];
        let f = obj(&xn, &mut g);
        let slope = dot(&g, dir);
        (Probe { x: xn, g, f }, slope)
    };
    let armijo = |alpha: f64, f: f64| f.is_finite() && f <= f0 + C1 * alpha * d0;

    let mut prev = Point { alpha: 0.0, f: f0, slope: d0 };
    let mut best: Option<(Probe, f64)> = None;
    let mut alpha = step0;
    let (mut lo, mut hi);
    let mut first = true;
    loop {
        let (p, slope) = eval(alpha);
        if !armijo(alpha, p.f) || (!first && p.f >= prev.f) {
            lo = prev;
            hi = Point { alpha, f: p.f, slope };
            break;
        }
        if slope.abs() <= -C2 * d0 {
            return Some((p, alpha));
        }
        let here = Point { alpha, f: p.f, slope };
        best = Some((p, alpha));
        if slope >= 0.0 {
            hi = prev;
            lo = here;
            break;
        }
        prev = here;
        first = false;
        alpha *= 2.0;
        if alpha > 1e10 {
            return best;
        }
    }

    for _ in 0..60 {
        let (a, b) = if lo.alpha < hi.alpha { (lo.alpha, hi.alpha) } else { (hi.alpha, lo.alpha) };
        let width = b - a;
        if width <= 1e-16 * b.abs().max(1e-300) {
            break;
        }
        let mut trial = f64::NAN;
        if hi.f.is_finite() {
            let d = hi.alpha - lo.alpha;
            let c = (hi.f - lo.f - lo.slope * d) / (d * d);
            if c > 0.0 {
                trial = lo.alpha - lo.slope / (2.0 * c);
            }
        }
        if !trial.is_finite() || trial < a + 0.1 * width || trial > b - 0.1 * width {
            trial = 0.5 * (a + b);
        }
        let (p, slope) = eval(trial);
        if !armijo(trial, p.f) || p.f >= lo.f {
            hi = Point { alpha: trial, f: p.f, slope };
        } else {
            if slope.abs() <= -C2 * d0 {
                return Some((p, trial));
            }
            if slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = Point { alpha: trial, f: p.f, slope };
            best = Some((p, trial));
        }
    }
    best
}

/// Minimise `obj` from `x0`.
pub fn bfgs<F>(mut obj: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj(&x, &mut g);
    if !f.is_finite() {
        return BfgsResult { x, f, grad_norm: f64::INFINITY, iterations: 0, converged: false };
    }
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let gn = norm(&g);
        if gn < opts.grad_tol {
            return BfgsResult { x, f, grad_norm: gn, iterations, converged: true };
        }
        iterations += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut d0 = dot(&dir, &g);
        if d0 >= 0.0 {
            h = identity(n);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
            d0 = -gn * gn;
        }
        let step0 = if fresh { (1.0 / gn).min(1.0) } else { 1.0 };
        let Some((p, alpha)) = line_search(&mut obj, &x, f, d0, &dir, step0) else {
            if fresh {
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        let s: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) {
            if fresh {
                let scale = sy / dot(&y, &y);
                for v in h.iter_mut() {
                    *v *= scale;
                }
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        }
        let df = f - p.f;
        x = p.x;
        g = p.g;
        f = p.f;
        if df <= 1e-16 * f.abs().max(1e-300) && norm(&g) >= opts.grad_tol {
            // Stalled at machine precision: no further progress is possible.
            if fresh {
                break;
            }
            h = identity(n);
            fresh = true;
        }
    }
    let gn = norm(&g);
    BfgsResult { x, f, grad_norm: gn, iterations, converged: gn < opts.grad_tol }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_rosenbrock() {
        let rosen = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let r = bfgs(rosen, &[-1.2, 1.0], &BfgsOptions { max_iter: 1000, grad_tol: 1e-10 });
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn quadratic_in_few_steps() {
        let q = |x: &[f64], g: &mut [f64]| {
            let w = [1.0, 10.0, 100.0];
            let mut f = 0.0;
            for i in 0..3 {
                g[i] = w[i] * (x[i] - 1.0);
                f += 0.5 * w[i] * (x[i] - 1.0).powi(2);
            }
            f
        };
        let r = bfgs(q, &[0.0, 0.0, 0.0], &BfgsOptions::default());
        assert!(r.converged);
        assert!(r.iterations < 30, "{}", r.iterations);
    }

    #[test]
    fn respects_barrier() {
        // f = x - ln x has its minimum at 1; non-positive x is outside the domain.
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] <= 0.0 {
                return f64::INFINITY;
            }
            g[0] = 1.0 - 1.0 / x[0];
            x[0] - x[0].ln()
        };
        let r = bfgs(f, &[5.0], &BfgsOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-7);
    }
}
