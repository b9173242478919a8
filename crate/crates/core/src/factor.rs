//! One-factor analysis: covariance `Δ + γγᵗ`, its polynomial invariants,
//! maximum likelihood fits, and likelihood ratio statistics.

use std::io::Read;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::laws::chisq_draw;
use crate::optim::{bfgs, BfgsOptions};
use crate::rng::{self, domain};
use crate::symkit::CovMatrix;
use crate::{Error, Result};

/// Lower bound on fitted uniquenesses, in correlation units.
pub const HEYWOOD_FLOOR: f64 = 1e-8;
/// A fitted uniqueness below this (correlation units) is reported as a boundary fit.
const HEYWOOD_FLAG: f64 = 1e-6;

/// Uniquenesses `delta > 0` and loadings `gamma` of a single factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorParams {
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl FactorParams {
    pub fn new(delta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let p = Self { delta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta.len() != self.gamma.len() {
            return Err(Error::DimensionMismatch { expected: self.delta.len(), got: self.gamma.len() });
        }
        if self.delta.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidParameter("uniquenesses must be finite and positive".into()));
        }
        if self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidParameter("loadings must be finite".into()));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.delta.len()
    }
}

/// `diag(δ) + γγᵗ`.
pub fn cov_from_params(p: &FactorParams) -> Result<CovMatrix> {
    p.validate()?;
    let m = p.m();
    let a = DMatrix::from_fn(m, m, |i, j| p.gamma[i] * p.gamma[j] + if i == j { p.delta[i] } else { 0.0 });
    CovMatrix::new(a)
}

/// The two tetrads of every quadruple `i < j < g < h`, in lexicographic
/// quadruple order: `σij σgh − σig σjh`, then `σih σjg − σig σjh`.
pub fn tetrads(sigma: &CovMatrix) -> Result<Vec<f64>> {
    let m = sigma.m();
    if m < 4 {
        return Err(Error::Precondition(format!("tetrads need m >= 4, got {m}")));
    }
    let t = |a: usize, b: usize| sigma.get(a, b);
    let mut out = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            for g in j + 1..m {
                for h in g + 1..m {
                    out.push(t(i, j) * t(g, h) - t(i, g) * t(j, h));
                    out.push(t(i, h) * t(j, g) - t(i, g) * t(j, h));
                }
            }
        }
    }
    Ok(out)
}

/// The quintic vanishing on the two-factor model with five variables.
pub fn pentad(sigma: &CovMatrix) -> Result<f64> {
    if sigma.m() != 5 {
        return Err(Error::Precondition(format!("pentad needs m = 5, got {}", sigma.m())));
    }
    // One-based labels keep the monomials readable.
    let t = |a: usize, b: usize| sigma.get(a - 1, b - 1);
    Ok(t(1, 2) * t(1, 3) * t(2, 4) * t(3, 5) * t(4, 5) - t(1, 2) * t(1, 3) * t(2, 5) * t(3, 4) * t(4, 5)
        - t(1, 2) * t(1, 4) * t(2, 3) * t(3, 5) * t(4, 5)
        + t(1, 2) * t(1, 4) * t(2, 5) * t(3, 4) * t(3, 5)
        + t(1, 2) * t(1, 5) * t(2, 3) * t(3, 4) * t(4, 5)
        - t(1, 2) * t(1, 5) * t(2, 4) * t(3, 4) * t(3, 5)
        + t(1, 3) * t(1, 4) * t(2, 3) * t(2, 5) * t(4, 5)
        - t(1, 3) * t(1, 4) * t(2, 4) * t(2, 5) * t(3, 5)
        - t(1, 3) * t(1, 5) * t(2, 3) * t(2, 4) * t(4, 5)
        + t(1, 3) * t(1, 5) * t(2, 4) * t(2, 5) * t(3, 4)
        - t(1, 4) * t(1, 5) * t(2, 3) * t(2, 5) * t(3, 4)
        + t(1, 4) * t(1, 5) * t(2, 3) * t(2, 4) * t(3, 5))
}

/// Position of a point of the one-factor model relative to its singular locus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum SingularityClass {
    Smooth,
    /// Exactly one nonzero off-diagonal entry, at zero-based `(i, j)`, `i < j`.
    OneNonzero { i: usize, j: usize },
    Diagonal,
}

pub const CLASSIFY_TOL: f64 = 1e-9;

/// Classifies by the number of correlations exceeding `tol` in absolute value.
pub fn classify_point(sigma: &CovMatrix, tol: f64) -> SingularityClass {
    let r = sigma.correlation();
    let m = sigma.m();
    let mut nonzero = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if r[(i, j)].abs() > tol {
                nonzero.push((i, j));
            }
        }
    }
    match nonzero.as_slice() {
        [] => SingularityClass::Diagonal,
        [(i, j)] => SingularityClass::OneNonzero { i: *i, j: *j },
        _ => SingularityClass::Smooth,
    }
}

/// Sample size and second-moment matrix `S = (1/n) Σ x xᵗ` of zero-mean data.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStat {
    n: usize,
    s: CovMatrix,
}

#[derive(Serialize, Deserialize)]
struct SuffStatJson {
    n: usize,
    cov: Vec<Vec<f64>>,
}

impl SuffStat {
    /// `s` must be positive semidefinite.
    pub fn new(s: CovMatrix, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be >= 1".into()));
        }
        let lmin = s.min_eigenvalue();
        if lmin < -1e-10 * s.values().amax().max(1.0) {
            return Err(Error::NotPositiveDefinite(lmin));
        }
        Ok(Self { n, s })
    }

    pub fn from_data(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let Some(first) = rows.first() else {
            return Err(Error::EmptySample);
        };
        let m = first.len();
        let mut a = DMatrix::zeros(m, m);
        for row in rows {
            if row.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: row.len() });
            }
            for i in 0..m {
                for j in 0..m {
                    a[(i, j)] += row[i] * row[j];
                }
            }
        }
        Self::new(CovMatrix::new(a / n as f64)?, n)
    }

    /// Raw observations, one row per observation; a non-numeric first row is
    /// treated as a header.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if k == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("row {}: {e}", k + 1))),
            }
        }
        Self::from_data(&rows)
    }

    /// `{"n": <size>, "cov": [[...], ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SuffStatJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let rows: Vec<&[f64]> = raw.cov.iter().map(Vec::as_slice).collect();
        Self::new(CovMatrix::from_rows(&rows)?, raw.n)
    }

    pub fn to_json(&self) -> String {
        let m = self.m();
        let cov = (0..m).map(|i| (0..m).map(|j| self.s.get(i, j)).collect()).collect();
        serde_json::to_string(&SuffStatJson { n: self.n, cov }).expect("plain data")
    }

    /// `S` for `n` draws from `N(0, Σ)`, generated directly as a Wishart
    /// matrix through the Bartlett decomposition.
    pub fn simulate<R: Rng + ?Sized>(sigma: &CovMatrix, n: usize, rng: &mut R) -> Result<Self> {
        let m = sigma.m();
        if n < m {
            return Err(Error::InvalidParameter(format!("need n >= m for a nonsingular sample, got n={n}, m={m}")));
        }
        let l = sigma
            .values()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(sigma.min_eigenvalue()))?
            .unpack();
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            a[(i, i)] = chisq_draw((n - i) as u32, rng).sqrt();
            for j in 0..i {
                a[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let la = l * a;
        let s = (&la * la.transpose()) / n as f64;
        Self::new(CovMatrix::new(s)?, n)
    }

    pub fn m(&self) -> usize {
        self.s.m()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cov(&self) -> &CovMatrix {
        &self.s
    }

    /// `S` restricted to the leading `k` variables.
    fn leading(&self, k: usize) -> Result<SuffStat> {
        Self::new(CovMatrix::new(self.s.values().view((0, 0), (k, k)).into_owned())?, self.n)
    }
}

/// Controls the multi-start search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleOptions {
    /// Random EM screening runs; one start per variable is always added.
    pub starts: usize,
    pub em_iter: usize,
    /// Relative objective change that ends an EM run early.
    pub em_tol: f64,
    /// Screening runs polished by quasi-Newton.
    pub polish: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Seeds the random start perturbations.
    pub seed: u64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { starts: 20, em_iter: 50, em_tol: 1e-12, polish: 2, max_iter: 1000, grad_tol: 1e-9, seed: 0 }
    }
}

/// Maximum likelihood fit of the one-factor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneFactorFit {
    pub params: FactorParams,
    /// `log det Σ̂ + tr(S Σ̂⁻¹)`.
    pub objective: f64,
    pub loglik: f64,
    /// Gradient norm in the unconstrained coordinates of the polish step.
    pub grad_norm: f64,
    pub converged: bool,
    /// Some uniqueness sits at the lower bound.
    pub heywood: bool,
}

fn loglik(objective: f64, n: usize, m: usize) -> f64 {
    -0.5 * n as f64 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + objective)
}

/// The one-factor likelihood on a correlation matrix `r` (row-major).
struct Problem {
    m: usize,
    r: Vec<f64>,
}

struct Moments {
    /// `1 / (1 + γᵗΔ⁻¹γ)`.
    a: f64,
    /// `Δ⁻¹γ`.
    #[cfg_attr(not(test), allow(dead_code))]
    w: Vec<f64>,
    /// `R w`.
    rw: Vec<f64>,
    wrw: f64,
}

impl Problem {
    fn moments(&self, delta: &[f64], gamma: &[f64]) -> Moments {
        let m = self.m;
        let w: Vec<f64> = gamma.iter().zip(delta).map(|(g, d)| g / d).collect();
        let c: f64 = w.iter().zip(gamma).map(|(w, g)| w * g).sum();
        let rw: Vec<f64> = (0..m).map(|i| (0..m).map(|j| self.r[i * m + j] * w[j]).sum()).collect();
        let wrw = w.iter().zip(&rw).map(|(a, b)| a * b).sum();
        Moments { a: 1.0 / (1.0 + c), w, rw, wrw }
    }

    fn objective_with(&self, delta: &[f64], mo: &Moments) -> f64 {
        let m = self.m;
        let mut f = -mo.a.ln();
        for i in 0..m {
            f += delta[i].ln() + self.r[i * m + i] / delta[i];
        }
        f - mo.a * mo.wrw
    }

    fn objective(&self, delta: &[f64], gamma: &[f64]) -> f64 {
        self.objective_with(delta, &self.moments(delta, gamma))
    }

    /// Objective and its gradient in `(δ, γ)`, from `G = Σ⁻¹ − Σ⁻¹RΣ⁻¹`;
    /// cross-checks the dense evaluation.
    #[cfg(test)]
    fn gradient(&self, delta: &[f64], gamma: &[f64], gd: &mut [f64], gg: &mut [f64]) -> f64 {
        let m = self.m;
        let mo = self.moments(delta, gamma);
        let a = mo.a;
        // Σ⁻¹ v = v/δ − a w (wᵗv).
        let beta: Vec<f64> = mo.w.iter().map(|w| a * w).collect();
        let rbeta: Vec<f64> = mo.rw.iter().map(|v| a * v).collect();
        let wv: f64 = mo.w.iter().zip(&rbeta).map(|(x, y)| x * y).sum();
        for i in 0..m {
            let p_ii = 1.0 / delta[i] - a * mo.w[i] * mo.w[i];
            let prp_ii = self.r[i * m + i] / (delta[i] * delta[i]) - 2.0 * a * mo.w[i] * mo.rw[i] / delta[i]
                + a * a * mo.w[i] * mo.w[i] * mo.wrw;
            gd[i] = p_ii - prp_ii;
            let p_rbeta = rbeta[i] / delta[i] - a * mo.w[i] * wv;
            gg[i] = 2.0 * (beta[i] - p_rbeta);
        }
        self.objective_with(delta, &mo)
    }

    fn em_step(&self, delta: &mut [f64], gamma: &mut [f64]) {
        let m = self.m;
        let mo = self.moments(delta, gamma);
        let a = mo.a;
        let c = 1.0 / a - 1.0;
        // β = Σ⁻¹γ = a w; E[z²|x] averaged: 1 − βᵗγ + βᵗRβ.
        let ezz = 1.0 - a * c + a * a * mo.wrw;
        for i in 0..m {
            let rbeta = a * mo.rw[i];
            gamma[i] = rbeta / ezz;
            delta[i] = (self.r[i * m + i] - gamma[i] * rbeta).max(HEYWOOD_FLOOR);
        }
    }

    fn em(&self, delta: &mut [f64], gamma: &mut [f64], iters: usize, tol: f64) -> f64 {
        let mut f = self.objective(delta, gamma);
        for _ in 0..iters {
            self.em_step(delta, gamma);
            let next = self.objective(delta, gamma);
            let done = (f - next).abs() <= tol * next.abs().max(1.0);
            f = next;
            if done {
                break;
            }
        }
        f
    }

    /// Loadings maximising the likelihood for fixed uniquenesses: the top
    /// eigenpair `(θ, v)` of `Ψ^{-1/2} R Ψ^{-1/2}` gives `γ = Ψ^{1/2} v √(θ − 1)⁺`.
    fn profile_gamma(&self, psi: &[f64]) -> Vec<f64> {
        let m = self.m;
        let sq: Vec<f64> = psi.iter().map(|p| p.sqrt()).collect();
        let star = DMatrix::from_fn(m, m, |i, j| self.r[i * m + j] / (sq[i] * sq[j]));
        let eig = SymmetricEigen::new(star);
        let (top, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, l)| (k, *l))
            .expect("m >= 1");
        let len = (theta - 1.0).max(0.0).sqrt();
        let v = eig.eigenvectors.column(top);
        (0..m).map(|i| sq[i] * v[i] * len).collect()
    }

    /// Objective and `δ`-gradient through a dense factorisation of `Σ`, which
    /// stays accurate when some uniqueness is tiny.
    fn dense_gradient(&self, delta: &[f64], gamma: &[f64], gd: &mut [f64]) -> f64 {
        let m = self.m;
        let sigma = DMatrix::from_fn(m, m, |i, j| gamma[i] * gamma[j] + if i == j { delta[i] } else { 0.0 });
        let Some(chol) = sigma.cholesky() else {
            return f64::INFINITY;
        };
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let p = chol.inverse();
        let r = DMatrix::from_row_slice(m, m, &self.r);
        let pr = &p * &r;
        let f = logdet + pr.trace();
        let prp = &pr * &p;
        for i in 0..m {
            gd[i] = p[(i, i)] - prp[(i, i)];
        }
        f
    }

    /// Quasi-Newton over `u` with uniquenesses `floor + eᵘ` and profiled loadings.
    fn polish(&self, delta: &[f64], opts: &MleOptions) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let m = self.m;
        let x: Vec<f64> = delta.iter().map(|d| (d - HEYWOOD_FLOOR).max(1e-300).ln().max(-40.0)).collect();
        let mut gd = vec![0.0; m];
        let obj = |x: &[f64], g: &mut [f64]| {
            let d: Vec<f64> = x.iter().map(|u| HEYWOOD_FLOOR + u.exp()).collect();
            if d.iter().any(|v| !v.is_finite()) {
                return f64::INFINITY;
            }
            let gamma = self.profile_gamma(&d);
            let f = self.dense_gradient(&d, &gamma, &mut gd);
            for i in 0..m {
                g[i] = gd[i] * (d[i] - HEYWOOD_FLOOR);
            }
            f
        };
        let res = bfgs(obj, &x, &BfgsOptions { max_iter: opts.max_iter, grad_tol: opts.grad_tol });
        let d: Vec<f64> = res.x.iter().map(|u| HEYWOOD_FLOOR + u.exp()).collect();
        let gamma = self.profile_gamma(&d);
        (d, gamma, res.f, res.grad_norm)
    }
}

struct RawFit {
    delta: Vec<f64>,
    gamma: Vec<f64>,
    f: f64,
    grad_norm: f64,
}

/// Multi-start fit on a correlation matrix; `extra` are additional starts in
/// correlation units.
fn fit_correlation(problem: &Problem, opts: &MleOptions, extra: &[(Vec<f64>, Vec<f64>)]) -> RawFit {
    let m = problem.m;
    let rm = DMatrix::from_row_slice(m, m, &problem.r);
    let eig = SymmetricEigen::new(rm);
    let (top, lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, l)| (k, *l))
        .expect("m >= 1");
    let scale = (lam - 1.0).max(0.05).sqrt();
    let base: Vec<f64> = eig.eigenvectors.column(top).iter().map(|v| v * scale).collect();
    let start_from = |gamma: Vec<f64>| -> (Vec<f64>, Vec<f64>) {
        let gamma: Vec<f64> = gamma.into_iter().map(|g| g.clamp(-0.99, 0.99)).collect();
        let delta = gamma.iter().map(|g| (1.0 - g * g).max(0.05)).collect();
        (delta, gamma)
    };

    let mut rng = rng::substream(opts.seed, domain::OPTIMIZER_STARTS, 0);
    let mut starts = vec![start_from(base.clone())];
    for _ in 1..opts.starts.max(1) {
        let g = base
            .iter()
            .map(|b| {
                let e1: f64 = rng.sample(StandardNormal);
                let e2: f64 = rng.sample(StandardNormal);
                b * (1.0 + 0.5 * e1) + 0.3 * e2
            })
            .collect();
        starts.push(start_from(g));
    }
    // One start near the boundary fit that explains variable k by the factor.
    for k in 0..m {
        let g: Vec<f64> = (0..m).map(|i| if i == k { 0.995 } else { problem.r[i * m + k] }).collect();
        starts.push(start_from(g));
    }
    starts.extend(extra.iter().cloned());

    let mut screened: Vec<(f64, Vec<f64>, Vec<f64>)> = starts
        .into_iter()
        .map(|(mut d, mut g)| {
            let f = problem.em(&mut d, &mut g, opts.em_iter, opts.em_tol);
            (f, d, g)
        })
        .filter(|(f, _, _)| f.is_finite())
        .collect();
    screened.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut chosen: Vec<&(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for cand in &screened {
        if chosen.len() >= opts.polish.max(1) {
            break;
        }
        if chosen.iter().all(|c| (c.0 - cand.0).abs() > 1e-7) {
            chosen.push(cand);
        }
    }
    let mut best: Option<RawFit> = None;
    for (_, d, g) in chosen {
        let _ = g;
        let (delta, gamma, f, grad_norm) = problem.polish(d, opts);
        if best.as_ref().is_none_or(|b| f < b.f) {
            best = Some(RawFit { delta, gamma, f, grad_norm });
        }
    }
    best.unwrap_or_else(|| {
        let (delta, gamma) = start_from(base);
        let f = problem.objective(&delta, &gamma);
        RawFit { delta, gamma, f, grad_norm: f64::INFINITY }
    })
}

fn fit_any(d: &SuffStat, opts: &MleOptions, extra: &[FactorParams]) -> Result<OneFactorFit> {
    let m = d.m();
    d.cov().check_pd()?;
    let s = d.cov().values();
    let sd: Vec<f64> = (0..m).map(|i| s[(i, i)].sqrt()).collect();
    let mut r = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            r[i * m + j] = if i == j { 1.0 } else { s[(i, j)] / (sd[i] * sd[j]) };
        }
    }
    let problem = Problem { m, r };
    let extra: Vec<(Vec<f64>, Vec<f64>)> = extra
        .iter()
        .map(|p| {
            let delta = p.delta.iter().zip(&sd).map(|(v, s)| (v / (s * s)).max(HEYWOOD_FLOOR)).collect();
            let gamma = p.gamma.iter().zip(&sd).map(|(v, s)| v / s).collect();
            (delta, gamma)
        })
        .collect();
    let raw = fit_correlation(&problem, opts, &extra);
    let log_scale: f64 = sd.iter().map(|s| 2.0 * s.ln()).sum();
    let objective = raw.f + log_scale;
    let heywood = raw.delta.iter().any(|v| *v < HEYWOOD_FLAG);
    let params = FactorParams {
        delta: raw.delta.iter().zip(&sd).map(|(v, s)| v * s * s).collect(),
        gamma: raw.gamma.iter().zip(&sd).map(|(v, s)| v * s).collect(),
    };
    Ok(OneFactorFit {
        params,
        objective,
        loglik: loglik(objective, d.n(), m),
        grad_norm: raw.grad_norm,
        converged: raw.grad_norm < 1e-7,
        heywood,
    })
}

/// Maximum likelihood estimate of `Δ + γγᵗ` from `S`.
pub fn mle_one_factor(d: &SuffStat, opts: &MleOptions) -> Result<OneFactorFit> {
    if d.m() < 4 {
        return Err(Error::Precondition(format!("one-factor fit needs m >= 4, got {}", d.m())));
    }
    fit_any(d, opts, &[])
}

/// `n (log det Σ̂ + tr(S Σ̂⁻¹) − log det S − m)`, clamped at zero.
pub fn lrt_saturated(d: &SuffStat, opts: &MleOptions) -> Result<f64> {
    let fit = mle_one_factor(d, opts)?;
    saturated_gap(d, fit.objective)
}

fn saturated_gap(d: &SuffStat, objective: f64) -> Result<f64> {
    let sat = d.cov().log_det()? + d.m() as f64;
    Ok((d.n() as f64 * (objective - sat)).max(0.0))
}

/// Fit of the submodel with loadings `γ_k = … = γ_m = 0` (one-based `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodelFit {
    pub k: usize,
    pub params: FactorParams,
    pub objective: f64,
    pub loglik: f64,
    pub converged: bool,
}

/// The likelihood factorises into the leading `k − 1` block, fitted by a
/// one-factor model, and independent variances for the rest.
pub fn mle_submodel_0k(d: &SuffStat, k: usize, opts: &MleOptions) -> Result<SubmodelFit> {
    let m = d.m();
    if k < 1 || k > m {
        return Err(Error::InvalidParameter(format!("need 1 <= k <= m, got k={k}, m={m}")));
    }
    d.cov().check_pd()?;
    let s = d.cov().values();
    let b = k - 1;
    let (mut delta, mut gamma, mut objective, mut converged) = (Vec::new(), Vec::new(), 0.0, true);
    match b {
        0 => {}
        1 => {
            delta.push(s[(0, 0)]);
            gamma.push(0.0);
            objective = s[(0, 0)].ln() + 1.0;
        }
        2 => {
            // Every positive definite 2 × 2 matrix is in the one-factor model.
            let (s11, s12, s22) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
            let rho = s12 / (s11 * s22).sqrt();
            delta = vec![s11 * (1.0 - rho.abs()), s22 * (1.0 - rho.abs())];
            gamma = vec![(s11 * rho.abs()).sqrt(), rho.signum() * (s22 * rho.abs()).sqrt()];
            objective = (s11 * s22 - s12 * s12).ln() + 2.0;
        }
        _ => {
            let fit = fit_any(&d.leading(b)?, opts, &[])?;
            delta = fit.params.delta;
            gamma = fit.params.gamma;
            objective = fit.objective;
            converged = fit.converged;
        }
    }
    for i in b..m {
        delta.push(s[(i, i)]);
        gamma.push(0.0);
        objective += s[(i, i)].ln() + 1.0;
    }
    Ok(SubmodelFit { k, params: FactorParams { delta, gamma }, objective, loglik: loglik(objective, d.n(), m), converged })
}

/// `2 (sup over the one-factor model − sup over the submodel)`, clamped at zero.
pub fn lrt_submodel(d: &SuffStat, k: usize, opts: &MleOptions) -> Result<f64> {
    Ok(lrt_submodel_fits(d, k, opts)?.0)
}

/// The statistic with both fits; the full fit is also started from the submodel fit.
pub fn lrt_submodel_fits(d: &SuffStat, k: usize, opts: &MleOptions) -> Result<(f64, SubmodelFit, OneFactorFit)> {
    if d.m() < 4 {
        return Err(Error::Precondition(format!("one-factor fit needs m >= 4, got {}", d.m())));
    }
    let sub = mle_submodel_0k(d, k, opts)?;
    let mut seed_params = sub.params.clone();
    seed_params.delta.iter_mut().for_each(|v| *v = v.max(HEYWOOD_FLOOR));
    let full = fit_any(d, opts, &[seed_params])?;
    let lambda = (d.n() as f64 * (sub.objective - full.objective)).max(0.0);
    Ok((lambda, sub, full))
}

/// Scales `lambda` by `(n − 1 − (2m + 5)/6 − 2ℓ/3) / n`.
pub fn bartlett_correct(lambda: f64, n: usize, m: usize, factors: usize) -> Result<f64> {
    let mult = bartlett_multiplier(n, m, factors);
    if !(mult > 0.0) {
        return Err(Error::InvalidParameter(format!("Bartlett multiplier {mult} is not positive")));
    }
    Ok(lambda * mult)
}

pub fn bartlett_multiplier(n: usize, m: usize, factors: usize) -> f64 {
    let n = n as f64;
    (n - 1.0 - (2.0 * m as f64 + 5.0) / 6.0 - 2.0 * factors as f64 / 3.0) / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn random_params(m: usize, seed: u64) -> FactorParams {
        let mut r = rng::stream(seed, 7);
        let delta = (0..m).map(|_| 0.2 + r.random::<f64>()).collect();
        let gamma = (0..m).map(|_| r.sample(StandardNormal)).collect();
        FactorParams::new(delta, gamma).unwrap()
    }

    fn random_pd(m: usize, seed: u64) -> CovMatrix {
        let mut r = rng::stream(seed, 8);
        let g = DMatrix::from_fn(m, m + 2, |_, _| r.sample::<f64, _>(StandardNormal));
        CovMatrix::new(&g * g.transpose() / (m + 2) as f64 + DMatrix::identity(m, m) * 0.1).unwrap()
    }

    fn fig3(gamma: [f64; 4]) -> CovMatrix {
        cov_from_params(&FactorParams::new(vec![1.0 / 3.0; 4], gamma.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn covariance_examples() {
        let s = fig3([1.0; 4]);
        assert!((s.get(0, 0) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.get(0, 1), 1.0);
        assert!((s.correlation()[(2, 3)] - 0.75).abs() < 1e-15);
        let p = FactorParams::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]).unwrap();
        assert_eq!(cov_from_params(&p).unwrap(), CovMatrix::diagonal(&[1.0, 2.0, 3.0, 4.0]));
        assert!(FactorParams::new(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn tetrads_vanish_on_model() {
        for s in 0..100 {
            let sigma = cov_from_params(&random_params(6, s)).unwrap();
            let t = tetrads(&sigma).unwrap();
            assert_eq!(t.len(), 2 * 15);
            assert!(t.iter().all(|v| v.abs() < 1e-10), "{t:?}");
        }
        assert!(tetrads(&CovMatrix::identity(4)).unwrap().iter().all(|v| *v == 0.0));
        let mut a = DMatrix::identity(4, 4);
        a[(0, 1)] = 0.5;
        a[(1, 0)] = 0.5;
        assert!(tetrads(&CovMatrix::new(a).unwrap()).unwrap().iter().all(|v| *v == 0.0));
        assert!(tetrads(&CovMatrix::identity(3)).is_err());
    }

    #[test]
    fn tetrads_detect_non_model_points() {
        for s in 0..100 {
            let t = tetrads(&random_pd(4, 1000 + s)).unwrap();
            assert!(t.iter().map(|v| v.abs()).fold(0.0, f64::max) > 1e-4);
        }
    }

    /// The twelve monomials as data: sign and five index pairs.
    const PENTAD_TERMS: [(f64, [(usize, usize); 5]); 12] = [
        (1.0, [(1, 2), (1, 3), (2, 4), (3, 5), (4, 5)]),
        (-1.0, [(1, 2), (1, 3), (2, 5), (3, 4), (4, 5)]),
        (-1.0, [(1, 2), (1, 4), (2, 3), (3, 5), (4, 5)]),
        (1.0, [(1, 2), (1, 4), (2, 5), (3, 4), (3, 5)]),
        (1.0, [(1, 2), (1, 5), (2, 3), (3, 4), (4, 5)]),
        (-1.0, [(1, 2), (1, 5), (2, 4), (3, 4), (3, 5)]),
        (1.0, [(1, 3), (1, 4), (2, 3), (2, 5), (4, 5)]),
        (-1.0, [(1, 3), (1, 4), (2, 4), (2, 5), (3, 5)]),
        (-1.0, [(1, 3), (1, 5), (2, 3), (2, 4), (4, 5)]),
        (1.0, [(1, 3), (1, 5), (2, 4), (2, 5), (3, 4)]),
        (-1.0, [(1, 4), (1, 5), (2, 3), (2, 5), (3, 4)]),
        (1.0, [(1, 4), (1, 5), (2, 3), (2, 4), (3, 5)]),
    ];

    fn pentad_by_table(s: &CovMatrix) -> f64 {
        PENTAD_TERMS
            .iter()
            .map(|(sign, pairs)| sign * pairs.iter().map(|&(a, b)| s.get(a - 1, b - 1)).product::<f64>())
            .sum()
    }

    #[test]
    fn pentad_examples() {
        assert_eq!(pentad(&CovMatrix::identity(5)).unwrap(), 0.0);
        assert!(pentad(&CovMatrix::identity(4)).is_err());
        for s in 0..100 {
            let mut r = rng::stream(s, 9);
            let g = DMatrix::from_fn(5, 2, |_, _| r.sample::<f64, _>(StandardNormal));
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(5, |_, _| 0.5 + r.random::<f64>()));
            let sigma = CovMatrix::new(d + &g * g.transpose()).unwrap();
            let scale = sigma.values().amax().powi(5);
            assert!(pentad(&sigma).unwrap().abs() < 1e-8 * scale);
        }
        for s in 0..20 {
            let sigma = random_pd(5, 300 + s);
            let a = pentad(&sigma).unwrap();
            assert!(a.abs() > 1e-8);
            assert!((a - pentad_by_table(&sigma)).abs() < 1e-13 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_point(&CovMatrix::identity(4), CLASSIFY_TOL), SingularityClass::Diagonal);
        assert_eq!(classify_point(&fig3([1.0, 1.0, 0.0, 0.0]), CLASSIFY_TOL), SingularityClass::OneNonzero { i: 0, j: 1 });
        assert_eq!(classify_point(&fig3([1.0; 4]), CLASSIFY_TOL), SingularityClass::Smooth);
    }

    #[test]
    fn bartlett_examples() {
        assert_eq!(bartlett_correct(0.0, 1000, 4, 1).unwrap(), 0.0);
        let want = (1000.0 - 1.0 - 13.0 / 6.0 - 2.0 / 3.0) / 1000.0;
        assert!((bartlett_multiplier(1000, 4, 1) - want).abs() < 1e-15);
        assert!((bartlett_multiplier(100_000_000, 4, 1) - 1.0).abs() < 1e-7);
        assert!(bartlett_correct(1.0, 3, 4, 1).is_err());
    }

    #[test]
    fn suffstat_io() {
        let d = SuffStat::from_csv("a,b\n1,2\n-1,0\n".as_bytes()).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.cov().get(0, 1), 1.0);
        assert_eq!(d.cov().get(1, 1), 2.0);
        let back = SuffStat::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
        assert!(SuffStat::from_csv("1,2\nx,3\n".as_bytes()).is_err());
        assert!(SuffStat::from_json(r#"{"n": 0, "cov": [[1.0]]}"#).is_err());
    }

    #[test]
    fn wishart_mean_is_sigma() {
        let sigma = fig3([1.0, 1.0, 0.0, 0.0]);
        let reps = 4000;
        let mut acc = DMatrix::zeros(4, 4);
        for r in 0..reps {
            acc += SuffStat::simulate(&sigma, 10, &mut rng::stream(11, r)).unwrap().cov().values();
        }
        acc /= reps as f64;
        // Var(S_ij) = (σ_ij² + σ_ii σ_jj) / n.
        for i in 0..4 {
            for j in 0..4 {
                let sd = ((sigma.get(i, j).powi(2) + sigma.get(i, i) * sigma.get(j, j)) / 10.0 / reps as f64).sqrt();
                assert!((acc[(i, j)] - sigma.get(i, j)).abs() < 5.0 * sd, "({i},{j})");
            }
        }
    }

    #[test]
    fn exact_model_is_recovered() {
        for s in 0..10 {
            let p = random_params(5, 40 + s);
            let sigma = cov_from_params(&p).unwrap();
            let d = SuffStat::new(sigma.clone(), 100).unwrap();
            let fit = mle_one_factor(&d, &MleOptions::default()).unwrap();
            assert!(fit.converged, "{fit:?}");
            assert!(lrt_saturated(&d, &MleOptions::default()).unwrap() < 1e-6);
            let sign = fit.params.gamma[0].signum() * p.gamma[0].signum();
            for i in 0..5 {
                assert!((fit.params.gamma[i] - sign * p.gamma[i]).abs() < 1e-4, "{fit:?} {p:?}");
            }
        }
    }

    #[test]
    fn diagonal_sample_fits_exactly() {
        let d = SuffStat::new(CovMatrix::diagonal(&[1.0, 2.0, 0.5, 3.0]), 50).unwrap();
        let fit = mle_one_factor(&d, &MleOptions::default()).unwrap();
        let sat = d.cov().log_det().unwrap() + 4.0;
        assert!((fit.objective - sat).abs() < 1e-9);
        assert!(lrt_saturated(&d, &MleOptions::default()).unwrap() < 1e-6);
    }

    #[test]
    fn more_starts_same_optimum() {
        for s in 0..10 {
            let d = SuffStat::new(random_pd(4, 70 + s), 100).unwrap();
            let a = mle_one_factor(&d, &MleOptions { starts: 50, ..Default::default() }).unwrap();
            let b = mle_one_factor(&d, &MleOptions { starts: 500, polish: 10, seed: 1, ..Default::default() }).unwrap();
            assert!((a.objective - b.objective).abs() < 1e-6, "{} vs {}", a.objective, b.objective);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = Problem { m: 4, r: random_pd(4, 5).correlation().as_slice().to_vec() };
        let delta = [0.5, 0.7, 0.3, 0.9];
        let gamma = [0.4, -0.2, 0.6, 0.1];
        let (mut gd, mut gg) = ([0.0; 4], [0.0; 4]);
        p.gradient(&delta, &gamma, &mut gd, &mut gg);
        let h = 1e-6;
        for i in 0..4 {
            let (mut dp, mut dm) = (delta, delta);
            dp[i] += h;
            dm[i] -= h;
            let fd = (p.objective(&dp, &gamma) - p.objective(&dm, &gamma)) / (2.0 * h);
            assert!((fd - gd[i]).abs() < 1e-6, "delta {i}");
            let (mut gp, mut gm) = (gamma, gamma);
            gp[i] += h;
            gm[i] -= h;
            let fd = (p.objective(&delta, &gp) - p.objective(&delta, &gm)) / (2.0 * h);
            assert!((fd - gg[i]).abs() < 1e-6, "gamma {i}");
        }
    }

    #[test]
    fn objective_matches_dense_formula() {
        let sigma = cov_from_params(&random_params(5, 3)).unwrap();
        let s = random_pd(5, 4);
        let p = Problem { m: 5, r: s.values().transpose().as_slice().to_vec() };
        let fp = random_params(5, 3);
        let dense = sigma.log_det().unwrap() + (s.values() * sigma.inverse().unwrap()).trace();
        assert!((p.objective(&fp.delta, &fp.gamma) - dense).abs() < 1e-10);
    }

    #[test]
    fn submodel_closed_forms() {
        let d = SuffStat::new(random_pd(5, 12), 80).unwrap();
        let s = d.cov().values();
        let k1 = mle_submodel_0k(&d, 1, &MleOptions::default()).unwrap();
        let diag: f64 = (0..5).map(|i| s[(i, i)].ln() + 1.0).sum();
        assert!((k1.objective - diag).abs() < 1e-12);
        let k2 = mle_submodel_0k(&d, 2, &MleOptions::default()).unwrap();
        assert!((k2.objective - diag).abs() < 1e-12);
        let k3 = mle_submodel_0k(&d, 3, &MleOptions::default()).unwrap();
        let sigma = cov_from_params(&k3.params).unwrap();
        let dense = sigma.log_det().unwrap() + (s * sigma.inverse().unwrap()).trace();
        assert!((k3.objective - dense).abs() < 1e-10);
        assert!(mle_submodel_0k(&d, 0, &MleOptions::default()).is_err());
    }

    #[test]
    fn block_diagonal_sample_isolates_the_block_gap() {
        // S = one-factor 4-block ⊕ diagonal: the submodel with k = 5 fits the
        // rest exactly, so the statistic is the block's own one-factor gap.
        let block = random_pd(4, 21);
        let mut a = DMatrix::zeros(6, 6);
        a.view_mut((0, 0), (4, 4)).copy_from(block.values());
        a[(4, 4)] = 1.5;
        a[(5, 5)] = 0.7;
        let d = SuffStat::new(CovMatrix::new(a).unwrap(), 100).unwrap();
        let lam = lrt_submodel(&d, 5, &MleOptions::default()).unwrap();
        assert!(lam < 1e-6, "{lam}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn statistics_are_nonnegative_and_scale_free(seed in 0u64..100_000) {
            let sigma = fig3([1.0, 1.0, 0.0, 0.0]);
            let d = SuffStat::simulate(&sigma, 60, &mut rng::stream(seed, 0)).unwrap();
            let opts = MleOptions::default();
            let lam = lrt_saturated(&d, &opts).unwrap();
            prop_assert!(lam >= 0.0);
            let lk = lrt_submodel(&d, 3, &opts).unwrap();
            prop_assert!(lk >= 0.0);
            let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 3.0, 1.0, 7.0]));
            let scaled = SuffStat::new(CovMatrix::new(&scale * d.cov().values() * &scale).unwrap(), 60).unwrap();
            let lam2 = lrt_saturated(&scaled, &opts).unwrap();
            prop_assert!((lam - lam2).abs() < 1e-6, "{} {}", lam, lam2);
        }

        #[test]
        fn classification_counts_loadings(seed in 0u64..100_000, zeros in 0usize..5) {
            let mut p = random_params(5, seed);
            for g in p.gamma.iter_mut().take(zeros) {
                *g = 0.0;
            }
            let nonzero = 5 - zeros;
            let class = classify_point(&cov_from_params(&p).unwrap(), CLASSIFY_TOL);
            prop_assert!((class == SingularityClass::Smooth) == (nonzero >= 3));
        }
    }
}
