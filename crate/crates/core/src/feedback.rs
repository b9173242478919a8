//! Four-variable linear structural equation model with a feedback loop
//! `Y2 → Y3 → Y4 → Y2` and inputs from `Y1`:
//!
//! ```text
//! Y1 = ε1,  Y2 = β21 Y1 + β24 Y4 + ε2,  Y3 = β31 Y1 + β32 Y2 + ε3,  Y4 = β43 Y3 + ε4
//! ```
//!
//! with independent `εi ~ N(0, ωi)`. Indices in field names are one-based to
//! match the equations; matrix indices are zero-based.

use nalgebra::{DMatrix, Matrix4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::factor::SuffStat;
use crate::optim::{bfgs, BfgsOptions};
use crate::rng::{self, domain};
use crate::symkit::{CovMatrix, VechVector};
use crate::{Error, Result};

/// Tolerance for the exact polynomial conditions that define the classes.
pub const IDENT_TOL: f64 = 1e-12;

/// Regression coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Beta {
    pub b21: f64,
    pub b24: f64,
    pub b31: f64,
    pub b32: f64,
    pub b43: f64,
}

impl Beta {
    fn to_array(self) -> [f64; 5] {
        [self.b21, self.b24, self.b31, self.b32, self.b43]
    }

    fn from_slice(x: &[f64]) -> Self {
        Self { b21: x[0], b24: x[1], b31: x[2], b32: x[3], b43: x[4] }
    }

    /// `det B = 1 − β32 β24 β43`.
    pub fn det(&self) -> f64 {
        1.0 - self.b32 * self.b24 * self.b43
    }

    /// `β31 + β32 β21`, zero exactly on the singular locus.
    pub fn singular_form(&self) -> f64 {
        self.b31 + self.b32 * self.b21
    }

    /// The coefficient matrix with `B Y = ε`.
    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::new(
            1.0, 0.0, 0.0, 0.0, //
            -self.b21, 1.0, 0.0, -self.b24, //
            -self.b31, -self.b32, 1.0, 0.0, //
            0.0, 0.0, -self.b43, 1.0,
        )
    }
}

/// Coefficients and error variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    pub beta: Beta,
    pub omega: [f64; 4],
}

impl FeedbackParams {
    pub fn new(beta: Beta, omega: [f64; 4]) -> Result<Self> {
        let p = Self { beta, omega };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("error variances must be finite and positive".into()));
        }
        if self.beta.to_array().iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("coefficients must be finite".into()));
        }
        if self.beta.det().abs() <= IDENT_TOL {
            return Err(Error::InvalidParameter(format!("det B = {} is zero", self.beta.det())));
        }
        Ok(())
    }

    pub fn kappa(&self) -> [f64; 4] {
        self.omega.map(|w| 1.0 / w)
    }
}

/// `B⁻¹ diag(ω) B⁻ᵗ`.
pub fn f_cov(p: &FeedbackParams) -> Result<CovMatrix> {
    p.validate()?;
    let binv = p.beta.matrix().try_inverse().ok_or_else(|| Error::InvalidParameter("singular B".into()))?;
    let om = Matrix4::from_diagonal(&nalgebra::Vector4::from(p.omega));
    let s = binv * om * binv.transpose();
    CovMatrix::new(DMatrix::from_iterator(4, 4, s.iter().copied()))
}

/// The precision matrix `Bᵗ diag(κ) B`, entry by entry.
pub fn g_precision(b: &Beta, kappa: &[f64; 4]) -> DMatrix<f64> {
    let [k1, k2, k3, k4] = *kappa;
    let Beta { b21, b24, b31, b32, b43 } = *b;
    let upper = [
        [k1 + b21 * b21 * k2 + b31 * b31 * k3, b32 * b31 * k3 - b21 * k2, -b31 * k3, b24 * b21 * k2],
        [0.0, k2 + b32 * b32 * k3, -b32 * k3, -b24 * k2],
        [0.0, 0.0, k3 + b43 * b43 * k4, -b43 * k4],
        [0.0, 0.0, 0.0, k4 + b24 * b24 * k2],
    ];
    DMatrix::from_fn(4, 4, |i, j| if i <= j { upper[i][j] } else { upper[j][i] })
}

/// Identifiability of the parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentClass {
    /// `β31 + β32 β21 ≠ 0`.
    Global,
    /// On the singular locus with two preimages.
    LocalTwo,
    /// On the singular locus with one of `β32, β43, β24` zero.
    GlobalZeroBranch,
    /// On the singular locus with `β32 β43 β24 = −1`.
    GlobalDetBranch,
}

pub fn ident_class(b: &Beta, tol: f64) -> IdentClass {
    if b.singular_form().abs() > tol {
        IdentClass::Global
    } else if [b.b32, b.b43, b.b24].iter().any(|v| v.abs() <= tol) {
        IdentClass::GlobalZeroBranch
    } else if (b.b32 * b.b43 * b.b24 + 1.0).abs() <= tol {
        IdentClass::GlobalDetBranch
    } else {
        IdentClass::LocalTwo
    }
}

/// The second parameter point with the same precision matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partner {
    pub beta: Beta,
    pub kappa: [f64; 4],
    /// The partner coincides with the input.
    pub fixed_point: bool,
}

/// Loop coefficient leaving node `i` backwards around the cycle 2 → 3 → 4 → 2,
/// i.e. `β_{i,i−1}` with `2 − 1 ≡ 4`.
fn loop_coef(b: &Beta, node: usize) -> f64 {
    match node {
        2 => b.b24,
        3 => b.b32,
        4 => b.b43,
        _ => unreachable!("loop nodes are 2, 3, 4"),
    }
}

/// Second preimage of `g(β, κ)` when `(β, κ)` is only locally identifiable.
pub fn preimage_partner(b: &Beta, kappa: &[f64; 4]) -> Result<Partner> {
    let class = ident_class(b, IDENT_TOL);
    if class != IdentClass::LocalTwo {
        return Err(Error::Precondition(format!("partner needs a locally identifiable point, got {class:?}")));
    }
    if kappa.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::InvalidParameter("precisions must be positive".into()));
    }
    let k = |node: usize| kappa[node - 1];
    let prev = |i: usize| if i == 2 { 4 } else { i - 1 };
    let next = |i: usize| if i == 4 { 2 } else { i + 1 };
    let mut bar = [0.0; 5];
    let mut kbar = *kappa;
    for i in 2..=4 {
        let (p, q) = (prev(i), next(i));
        let bip = loop_coef(b, i);
        let bpq = loop_coef(b, p);
        let bqi = loop_coef(b, q);
        let num = k(p) * k(q) + k(i) * k(q) * bip * bip + k(i) * k(p) * bip * bip * bpq * bpq;
        let den = bip * (k(i) * k(q) + k(i) * k(p) * bpq * bpq + k(p) * k(q) * bpq * bpq * bqi * bqi);
        if den == 0.0 || num == 0.0 {
            return Err(Error::Precondition("degenerate partner denominator".into()));
        }
        let v = num / den;
        bar[i] = v;
        kbar[i - 1] = k(i) * bip / v;
    }
    let b32 = bar[3];
    let beta = Beta { b21: b.b21, b24: bar[2], b31: -b32 * b.b21, b32, b43: bar[4] };
    let scale = b.to_array().iter().chain(kappa).fold(1.0f64, |a, v| a.max(v.abs()));
    let diff = beta
        .to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y).abs())
        .chain(kbar.iter().zip(kappa).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    Ok(Partner { beta, kappa: kbar, fixed_point: diff <= 1e-12 * scale })
}

/// Normals `(η, η̄)` of the two hyperplanes forming the tangent cone at a
/// singular point; both are supported on the (1,3) and (1,4) coordinates.
pub fn singular_normals(p: &FeedbackParams) -> Result<(VechVector, VechVector)> {
    p.validate()?;
    if p.beta.singular_form().abs() > IDENT_TOL {
        return Err(Error::Precondition("point is not on the singular locus".into()));
    }
    let Beta { b24, b32, b43, .. } = p.beta;
    let [_, w2, w3, w4] = p.omega;
    let x = w3 + b32 * b32 * w2 + b32 * b32 * b24 * b24 * w4;
    let y = w4 + b43 * b43 * w3 + b32 * b32 * b43 * b43 * w2;
    let mut eta = VechVector::zeros(4);
    eta.set(0, 2, b43);
    eta.set(0, 3, -1.0);
    let mut bar = VechVector::zeros(4);
    bar.set(0, 2, 1.0);
    bar.set(0, 3, -b43 * x / y);
    Ok((eta, bar))
}

/// Cosine between the two hyperplane normals in the Fisher metric.
pub fn cone_angle_rho(p: &FeedbackParams) -> Result<f64> {
    p.validate()?;
    if p.beta.singular_form().abs() > IDENT_TOL {
        return Err(Error::Precondition("point is not on the singular locus".into()));
    }
    let Beta { b24, b32, b43, .. } = p.beta;
    let [_, w2, w3, w4] = p.omega;
    let num = b43 * w3 + b43 * b32 * b32 * w2 - b24 * b32 * w4;
    let x = w3 + b32 * b32 * w2 + b24 * b24 * b32 * b32 * w4;
    let y = w4 + b43 * b43 * w3 + b32 * b32 * b43 * b43 * w2;
    Ok((num / (x * y).sqrt()).clamp(-1.0, 1.0))
}

/// The irreducible polynomial cutting out the closure of the model; zero on
/// every model covariance.
pub fn hypersurface_residual(sigma: &CovMatrix) -> Result<f64> {
    if sigma.m() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: sigma.m() });
    }
    let s = |a: usize, b: usize| sigma.get(a - 1, b - 1);
    let (s11, s12, s13, s14) = (s(1, 1), s(1, 2), s(1, 3), s(1, 4));
    let (s22, s23, s24) = (s(2, 2), s(2, 3), s(2, 4));
    let (s33, s34, s44) = (s(3, 3), s(3, 4), s(4, 4));
    Ok(s13 * s14.powi(3) * s23 * s23 - 2.0 * s13 * s13 * s14 * s14 * s23 * s24 + s13.powi(3) * s14 * s24 * s24
        - s12 * s14.powi(3) * s23 * s33
        + s12 * s13 * s14 * s14 * s24 * s33
        + s11 * s14 * s14 * s23 * s24 * s33
        - s11 * s13 * s14 * s24 * s24 * s33
        + s12 * s12 * s14 * s14 * s33 * s34
        - s11 * s14 * s14 * s22 * s33 * s34
        - s12 * s12 * s13 * s14 * s34 * s34
        + s11 * s13 * s14 * s22 * s34 * s34
        + s12 * s13 * s13 * s14 * s23 * s44
        - s11 * s13 * s14 * s23 * s23 * s44
        - s12 * s13.powi(3) * s24 * s44
        + s11 * s13 * s13 * s23 * s24 * s44
        - s12 * s12 * s13 * s14 * s33 * s44
        + s11 * s13 * s14 * s22 * s33 * s44
        + s12 * s12 * s13 * s13 * s34 * s44
        - s11 * s13 * s13 * s22 * s34 * s44)
}

/// Search settings for [`mle_feedback`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackOptions {
    pub starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for FeedbackOptions {
    fn default() -> Self {
        Self { starts: 30, max_iter: 500, grad_tol: 1e-9, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackFit {
    pub params: FeedbackParams,
    /// `log det Σ̂ + tr(S Σ̂⁻¹)`.
    pub objective: f64,
    pub lambda: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

/// `Σ_i log (B S Bᵗ)_ii − 2 log |det B|`: the objective with the error
/// variances at their optimum `ω_i = (B S Bᵗ)_ii`, minus the constant 4.
fn profiled(s: &Matrix4<f64>, x: &[f64], g: &mut [f64]) -> f64 {
    let beta = Beta::from_slice(x);
    let det = beta.det();
    if det == 0.0 || !det.is_finite() {
        return f64::INFINITY;
    }
    let b = beta.matrix();
    let bs = b * s;
    let d: [f64; 4] = std::array::from_fn(|i| bs.row(i).dot(&b.row(i)));
    if d.iter().any(|v| !(*v > 0.0)) {
        return f64::INFINITY;
    }
    let Beta { b24, b32, b43, .. } = beta;
    g[0] = -2.0 * bs[(1, 0)] / d[1];
    g[1] = -2.0 * bs[(1, 3)] / d[1] + 2.0 * b32 * b43 / det;
    g[2] = -2.0 * bs[(2, 0)] / d[2];
    g[3] = -2.0 * bs[(2, 1)] / d[2] + 2.0 * b24 * b43 / det;
    g[4] = -2.0 * bs[(3, 2)] / d[3] + 2.0 * b32 * b24 / det;
    d.iter().map(|v| v.ln()).sum::<f64>() - 2.0 * det.abs().ln()
}

/// Least-squares fit that ignores the `Y4 → Y2` edge.
fn moment_start(s: &Matrix4<f64>) -> [f64; 5] {
    let b21 = s[(1, 0)] / s[(0, 0)];
    let det12 = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(0, 1)];
    let b31 = (s[(1, 1)] * s[(2, 0)] - s[(0, 1)] * s[(2, 1)]) / det12;
    let b32 = (s[(0, 0)] * s[(2, 1)] - s[(0, 1)] * s[(2, 0)]) / det12;
    let b43 = s[(3, 2)] / s[(2, 2)];
    [b21, 0.0, b31, b32, b43]
}

/// Maximum likelihood fit and likelihood ratio statistic against the
/// unrestricted covariance model.
pub fn mle_feedback(d: &SuffStat, opts: &FeedbackOptions) -> Result<FeedbackFit> {
    if d.m() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: d.m() });
    }
    d.cov().check_pd()?;
    let s = Matrix4::from_fn(|i, j| d.cov().get(i, j));
    let bopts = BfgsOptions { max_iter: opts.max_iter, grad_tol: opts.grad_tol };
    let run = |x0: &[f64]| bfgs(|x: &[f64], g: &mut [f64]| profiled(&s, x, g), x0, &bopts);

    let mut rng = rng::substream(opts.seed, domain::OPTIMIZER_STARTS, 0);
    let mut starts = vec![moment_start(&s).to_vec()];
    for _ in 0..opts.starts {
        starts.push((0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }
    let mut best = starts
        .iter()
        .map(|x0| run(x0))
        .filter(|r| r.f.is_finite())
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or(Error::NoConvergence { iterations: 0, grad_norm: f64::INFINITY })?;

    // The other branch of the best fit, projected onto the singular locus.
    let mut proj = Beta::from_slice(&best.x);
    proj.b31 = -proj.b32 * proj.b21;
    let kappa = omega_hat(&s, &proj).map(|w| 1.0 / w);
    if let Ok(partner) = preimage_partner(&proj, &kappa) {
        let alt = run(&partner.beta.to_array());
        if alt.f < best.f {
            best = alt;
        }
    }

    let beta = Beta::from_slice(&best.x);
    let omega = omega_hat(&s, &beta);
    let objective = best.f + 4.0;
    let lambda = (d.n() as f64 * (objective - d.cov().log_det()? - 4.0)).max(0.0);
    Ok(FeedbackFit {
        params: FeedbackParams { beta, omega },
        objective,
        lambda,
        grad_norm: best.grad_norm,
        converged: best.grad_norm < 1e-7,
    })
}

fn omega_hat(s: &Matrix4<f64>, beta: &Beta) -> [f64; 4] {
    let b = beta.matrix();
    let bs = b * s;
    std::array::from_fn(|i| bs.row(i).dot(&b.row(i)))
}
