//! Cones in coordinate space and squared Euclidean distances to them.
//!
//! Matrix cones act on half-vectorised symmetric matrices (see
//! [`crate::symkit::vech_index`]); row and column indices are zero-based.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::laws::{sym2_eigs, EmpiricalDist};
use crate::optim::{bfgs, BfgsOptions};
use crate::rng::{self, domain};
use crate::symkit::{vech_index_unchecked, vech_len, VechVector};
use crate::{Error, Result};

fn default_starts() -> usize {
    20
}

/// A closed cone through the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeDescriptor {
    /// Span of `columns`, each a vector of length `ambient`. No columns gives `{0}`.
    LinearSpan { ambient: usize, columns: Vec<Vec<f64>> },
    /// Union of cones sharing one ambient space.
    UnionOf { members: Vec<ConeDescriptor> },
    /// The half-line `{t d : t ≥ 0}`.
    Ray { direction: Vec<f64> },
    /// Closure of `{S : s_ij = γ_i γ_j for i < j}` with a free diagonal.
    FactorDiagCone {
        m: usize,
        /// Random restarts for the inner optimisation.
        #[serde(default = "default_starts")]
        starts: usize,
    },
    /// Matrices whose principal submatrix off `{i, j}` is diagonal and whose
    /// `{i, j}` × rest block has rank at most one.
    FactorAlgCone { m: usize, i: usize, j: usize },
    /// The subset of [`ConeDescriptor::FactorAlgCone`] with block rows related by
    /// `row_j = η row_i` for some `η ≥ eta_low`, closed by `row_i = 0`.
    /// With `negative`, the multiplier range is `η ≤ -eta_low` instead.
    FactorTanCone {
        m: usize,
        i: usize,
        j: usize,
        eta_low: f64,
        #[serde(default)]
        negative: bool,
    },
    /// Two lines in the plane whose unit normals `(1, 0)` and
    /// `(rho, sqrt(1 - rho²))` have cosine `rho`.
    TwoLines { rho: f64 },
}

/// Distance and nearest point.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub dist2: f64,
    pub minimizer: Vec<f64>,
}

impl ConeDescriptor {
    pub fn ambient_dim(&self) -> usize {
        match self {
            ConeDescriptor::LinearSpan { ambient, .. } => *ambient,
            ConeDescriptor::UnionOf { members } => members.first().map_or(0, |c| c.ambient_dim()),
            ConeDescriptor::Ray { direction } => direction.len(),
            ConeDescriptor::FactorDiagCone { m, .. }
            | ConeDescriptor::FactorAlgCone { m, .. }
            | ConeDescriptor::FactorTanCone { m, .. } => vech_len(*m),
            ConeDescriptor::TwoLines { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCone(msg));
        match self {
            ConeDescriptor::LinearSpan { ambient, columns } => {
                if let Some(c) = columns.iter().find(|c| c.len() != *ambient) {
                    return bad(format!("column of length {} in ambient dimension {ambient}", c.len()));
                }
                if columns.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("non-finite basis entry".into());
                }
                Ok(())
            }
            ConeDescriptor::UnionOf { members } => {
                let Some(first) = members.first() else {
                    return bad("empty union".into());
                };
                for c in members {
                    c.validate()?;
                    if c.ambient_dim() != first.ambient_dim() {
                        return bad("union members differ in ambient dimension".into());
                    }
                }
                Ok(())
            }
            ConeDescriptor::Ray { direction } => {
                let n = norm2(direction);
                if !(n > 0.0) || !n.is_finite() {
                    return bad("ray direction must be finite and nonzero".into());
                }
                Ok(())
            }
            ConeDescriptor::FactorDiagCone { m, starts } => {
                if *m < 2 {
                    return bad(format!("diagonal cone needs m >= 2, got {m}"));
                }
                let _ = starts;
                Ok(())
            }
            ConeDescriptor::FactorAlgCone { m, i, j } => {
                if *m < 4 || i >= j || *j >= *m {
                    return bad(format!("need m >= 4 and i < j < m, got m={m}, i={i}, j={j}"));
                }
                Ok(())
            }
            ConeDescriptor::FactorTanCone { m, i, j, eta_low, .. } => {
                if *m < 3 || i >= j || *j >= *m {
                    return bad(format!("need m >= 3 and i < j < m, got m={m}, i={i}, j={j}"));
                }
                if !(*eta_low >= 0.0) || !eta_low.is_finite() {
                    return bad(format!("lower multiplier {eta_low} must be finite and >= 0"));
                }
                Ok(())
            }
            ConeDescriptor::TwoLines { rho } => {
                if !(-1.0..=1.0).contains(rho) {
                    return bad(format!("cosine {rho} outside [-1, 1]"));
                }
                Ok(())
            }
        }
    }

    /// Image of the cone under the linear map `a` (square, ambient-sized).
    /// Only spans, rays, and unions of them can be mapped.
    pub fn transform(&self, a: &DMatrix<f64>) -> Result<ConeDescriptor> {
        let d = self.ambient_dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: a.nrows() });
        }
        let map = |v: &[f64]| -> Vec<f64> { (a * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec() };
        Ok(match self {
            ConeDescriptor::LinearSpan { ambient, columns } => {
                ConeDescriptor::LinearSpan { ambient: *ambient, columns: columns.iter().map(|c| map(c)).collect() }
            }
            ConeDescriptor::Ray { direction } => ConeDescriptor::Ray { direction: map(direction) },
            ConeDescriptor::UnionOf { members } => {
                ConeDescriptor::UnionOf { members: members.iter().map(|c| c.transform(a)).collect::<Result<_>>()? }
            }
            other => return Err(Error::InvalidCone(format!("cannot map {other:?} linearly"))),
        })
    }

    /// Span of coordinate axes `axes` in dimension `ambient`.
    pub fn coordinate_span(ambient: usize, axes: &[usize]) -> ConeDescriptor {
        let columns = axes
            .iter()
            .map(|&k| {
                let mut c = vec![0.0; ambient];
                c[k] = 1.0;
                c
            })
            .collect();
        ConeDescriptor::LinearSpan { ambient, columns }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Squared distance from `z` to `cone` with a nearest point.
pub fn dist2_cone(z: &[f64], cone: &ConeDescriptor) -> Result<Projection> {
    cone.validate()?;
    if z.len() != cone.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: cone.ambient_dim(), got: z.len() });
    }
    Ok(project(z, cone))
}

/// [`dist2_cone`] for a half-vectorised matrix.
pub fn dist2_vech(z: &VechVector, cone: &ConeDescriptor) -> Result<(f64, VechVector)> {
    let p = dist2_cone(z.entries(), cone)?;
    Ok((p.dist2, VechVector::new(z.m(), p.minimizer)?))
}

fn project(z: &[f64], cone: &ConeDescriptor) -> Projection {
    match cone {
        ConeDescriptor::LinearSpan { columns, .. } => project_span(z, columns),
        ConeDescriptor::UnionOf { members } => members
            .iter()
            .map(|c| project(z, c))
            .min_by(|a, b| a.dist2.total_cmp(&b.dist2))
            .expect("validated nonempty"),
        ConeDescriptor::Ray { direction } => {
            let n = norm2(direction).sqrt();
            let t = (dot(z, direction) / n).max(0.0);
            let minimizer: Vec<f64> = direction.iter().map(|d| t * d / n).collect();
            Projection { dist2: (norm2(z) - t * t).max(0.0), minimizer }
        }
        ConeDescriptor::TwoLines { rho } => {
            let normals = [[1.0, 0.0], [*rho, (1.0 - rho * rho).max(0.0).sqrt()]];
            normals
                .iter()
                .map(|u| {
                    let c = u[0] * z[0] + u[1] * z[1];
                    Projection { dist2: c * c, minimizer: vec![z[0] - c * u[0], z[1] - c * u[1]] }
                })
                .min_by(|a, b| a.dist2.total_cmp(&b.dist2))
                .expect("two lines")
        }
        ConeDescriptor::FactorAlgCone { m, i, j } => project_block_cone(z, *m, *i, *j, None),
        ConeDescriptor::FactorTanCone { m, i, j, eta_low, negative } => {
            project_block_cone(z, *m, *i, *j, Some((*eta_low, *negative)))
        }
        ConeDescriptor::FactorDiagCone { m, starts } => project_diag_cone(z, *m, *starts),
    }
}

fn project_span(z: &[f64], columns: &[Vec<f64>]) -> Projection {
    // Modified Gram–Schmidt, applied twice for stability; dependent columns drop out.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for c in columns {
        let scale = norm2(c).sqrt();
        if scale == 0.0 {
            continue;
        }
        let mut v = c.clone();
        for _ in 0..2 {
            for q in &basis {
                let p = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
            }
        }
        let n = norm2(&v).sqrt();
        if n > 1e-10 * scale {
            v.iter_mut().for_each(|a| *a /= n);
            basis.push(v);
        }
    }
    let mut minimizer = vec![0.0; z.len()];
    for q in &basis {
        let p = dot(z, q);
        minimizer.iter_mut().zip(q).for_each(|(a, b)| *a += p * b);
    }
    let dist2 = z.iter().zip(&minimizer).map(|(a, b)| (a - b) * (a - b)).sum();
    Projection { dist2, minimizer }
}

/// Unit top eigenvector of `[[a, b], [b, c]]` for eigenvalue `large`.
fn top_eigvec2(a: f64, b: f64, c: f64, large: f64) -> [f64; 2] {
    let v1 = [large - c, b];
    let v2 = [b, large - a];
    let (n1, n2) = (v1[0].hypot(v1[1]), v2[0].hypot(v2[1]));
    let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
    if n == 0.0 {
        [1.0, 0.0]
    } else {
        [v[0] / n, v[1] / n]
    }
}

/// Best direction `u` in the arc `{(cos θ, sin θ) : atan(eta_low) ≤ θ ≤ π/2}`
/// maximising `uᵗ A u` for `A = [[a, b], [b, c]]`.
fn best_arc_direction(a: f64, b: f64, c: f64, eta_low: f64) -> ([f64; 2], f64) {
    let q = |u: [f64; 2]| a * u[0] * u[0] + 2.0 * b * u[0] * u[1] + c * u[1] * u[1];
    let (_, large) = sym2_eigs(a, b, c);
    let mut v = top_eigvec2(a, b, c, large);
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = [-v[0], -v[1]];
    }
    // v now has angle in (-π/2, π/2]; the arc sits in [0, π/2].
    let lo = 1.0 / (1.0 + eta_low * eta_low).sqrt();
    let start = [lo, eta_low * lo];
    if v[1] >= 0.0 && v[1] * start[0] >= start[1] * v[0] {
        return (v, large);
    }
    let end = [0.0, 1.0];
    let (qs, qe) = (q(start), q(end));
    if qs >= qe {
        (start, qs)
    } else {
        (end, qe)
    }
}

/// Squared distance from a 2 × k block (rows given separately) to the rank-one
/// blocks `u wᵗ` with `u` on the arc from `(1, eta_low)` to `(0, 1)`.
pub fn dist2_tan_cone_block(row_i: &[f64], row_j: &[f64], eta_low: f64) -> Result<f64> {
    if row_i.len() != row_j.len() {
        return Err(Error::DimensionMismatch { expected: row_i.len(), got: row_j.len() });
    }
    if !(eta_low >= 0.0) || !eta_low.is_finite() {
        return Err(Error::InvalidCone(format!("lower multiplier {eta_low} must be finite and >= 0")));
    }
    let (a, b, c) = (norm2(row_i), dot(row_i, row_j), norm2(row_j));
    let (_, best) = best_arc_direction(a, b, c, eta_low);
    Ok((a + c - best).max(0.0))
}

fn project_block_cone(z: &[f64], m: usize, i: usize, j: usize, arc: Option<(f64, bool)>) -> Projection {
    let idx = |g: usize, h: usize| vech_index_unchecked(g.min(h), g.max(h), m);
    let rest: Vec<usize> = (0..m).filter(|&g| g != i && g != j).collect();
    let mut minimizer = z.to_vec();
    let mut dist2 = 0.0;
    for (p, &g) in rest.iter().enumerate() {
        for &h in &rest[p + 1..] {
            let k = idx(g, h);
            dist2 += z[k] * z[k];
            minimizer[k] = 0.0;
        }
    }
    let sign = if matches!(arc, Some((_, true))) { -1.0 } else { 1.0 };
    let ri: Vec<f64> = rest.iter().map(|&g| z[idx(i, g)]).collect();
    let rj: Vec<f64> = rest.iter().map(|&g| sign * z[idx(j, g)]).collect();
    let (a, b, c) = (norm2(&ri), dot(&ri, &rj), norm2(&rj));
    let (u, captured) = match arc {
        None => {
            let (_, large) = sym2_eigs(a, b, c);
            (top_eigvec2(a, b, c, large), large)
        }
        Some((eta_low, _)) => best_arc_direction(a, b, c, eta_low),
    };
    dist2 += (a + c - captured).max(0.0);
    for (p, &g) in rest.iter().enumerate() {
        let w = u[0] * ri[p] + u[1] * rj[p];
        minimizer[idx(i, g)] = u[0] * w;
        minimizer[idx(j, g)] = sign * u[1] * w;
    }
    Projection { dist2, minimizer }
}

fn diag_objective(off: &DMatrix<f64>, gamma: &[f64]) -> f64 {
    let m = gamma.len();
    let mut f = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let r = off[(i, j)] - gamma[i] * gamma[j];
            f += r * r;
        }
    }
    f
}

/// Sweeps per descent run; the best end points are finished by quasi-Newton.
const DIAG_SWEEPS: usize = 100;

/// Coordinate descent on `Σ_{i<j} (z_ij − γ_i γ_j)²`; each update is the exact
/// minimiser in one coordinate.
fn diag_descent(off: &DMatrix<f64>, gamma: &mut [f64]) -> f64 {
    let m = gamma.len();
    let mut f = diag_objective(off, gamma);
    for _ in 0..DIAG_SWEEPS {
        for k in 0..m {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..m {
                if j != k {
                    num += off[(k, j)] * gamma[j];
                    den += gamma[j] * gamma[j];
                }
            }
            gamma[k] = if den > 0.0 { num / den } else { 0.0 };
        }
        let next = diag_objective(off, gamma);
        let gain = f - next;
        f = next;
        if gain <= 1e-9 * (f + 1e-300) || f == 0.0 {
            break;
        }
    }
    f
}

fn project_diag_cone(z: &[f64], m: usize, starts: usize) -> Projection {
    let mut off = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let v = z[vech_index_unchecked(i, j, m)];
            off[(i, j)] = v;
            off[(j, i)] = v;
        }
    }
    let total = diag_objective(&off, &vec![0.0; m]);

    // Points of the closure that no finite Γ reaches: row k arbitrary, all
    // other off-diagonal entries zero.
    let mut best_star: Option<(usize, f64)> = None;
    for k in 0..m {
        let mut row = 0.0;
        for j in 0..m {
            if j != k {
                row += off[(k, j)] * off[(k, j)];
            }
        }
        let v = (total - row).max(0.0);
        if best_star.is_none_or(|(_, b)| v < b) {
            best_star = Some((k, v));
        }
    }

    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut consider = |mut gamma: Vec<f64>| {
        let f = diag_descent(&off, &mut gamma);
        candidates.push((f, gamma));
    };
    let eig = SymmetricEigen::new(off.clone());
    let (top, lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, l)| (k, *l))
        .expect("m >= 2");
    let scale = lam.max(0.0).sqrt();
    consider(eig.eigenvectors.column(top).iter().map(|v| v * scale).collect());
    let spread = (total / (m * (m - 1) / 2) as f64).sqrt().sqrt().max(1e-300);
    // Near the star points one loading is large and the rest are small; the
    // descent crawls along that valley, so start inside it.
    for k in 0..m {
        for t in [3.0, 30.0] {
            let big = t * spread;
            consider((0..m).map(|i| if i == k { big } else { off[(i, k)] / big }).collect());
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_d1a6);
    for _ in 0..starts {
        consider((0..m).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect());
    }

    // Quasi-Newton polish of the most promising descent end points.
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let grad_obj = |g: &[f64], grad: &mut [f64]| {
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut f = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                let r = off[(i, j)] - g[i] * g[j];
                f += r * r;
                grad[i] -= 2.0 * r * g[j];
                grad[j] -= 2.0 * r * g[i];
            }
        }
        f
    };
    let opts = BfgsOptions { max_iter: 500, grad_tol: 1e-12 * (1.0 + total.sqrt()) };
    let mut best_f = total;
    let mut best_gamma = vec![0.0; m];
    for (f, g) in candidates.iter().take(4) {
        let polished = bfgs(grad_obj, g, &opts);
        let (f, g) = if polished.f < *f { (polished.f, polished.x) } else { (*f, g.clone()) };
        if f < best_f {
            best_f = f;
            best_gamma = g;
        }
    }

    let mut minimizer = z.to_vec();
    let (k_star, star_f) = best_star.expect("m >= 2");
    if star_f < best_f {
        for i in 0..m {
            for j in i + 1..m {
                if i != k_star && j != k_star {
                    minimizer[vech_index_unchecked(i, j, m)] = 0.0;
                }
            }
        }
        return Projection { dist2: star_f, minimizer };
    }
    for i in 0..m {
        for j in i + 1..m {
            minimizer[vech_index_unchecked(i, j, m)] = best_gamma[i] * best_gamma[j];
        }
    }
    Projection { dist2: best_f, minimizer }
}

/// `reps` draws of the squared distance from a standard normal vector to `cone`.
pub fn sample_cone_distance(cone: &ConeDescriptor, reps: usize, seed: u64) -> Result<EmpiricalDist> {
    cone.validate()?;
    let d = cone.ambient_dim();
    let draws: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(seed, domain::CONE, r);
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            project(&z, cone).dist2
        })
        .collect();
    EmpiricalDist::new(draws)
}

/// Draws of `dist²(Z, cone0) − dist²(Z, cone1)` for nested cones `cone0 ⊆ cone1`.
pub fn sample_nested_limit(
    cone0: &ConeDescriptor,
    cone1: &ConeDescriptor,
    reps: usize,
    seed: u64,
) -> Result<EmpiricalDist> {
    cone0.validate()?;
    cone1.validate()?;
    let d = cone0.ambient_dim();
    if cone1.ambient_dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: cone1.ambient_dim() });
    }
    let draws: Vec<(f64, f64)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(seed, domain::CONE, r);
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            (project(&z, cone0).dist2 - project(&z, cone1).dist2, norm2(&z))
        })
        .collect();
    if let Some((diff, _)) = draws.iter().find(|(diff, scale)| *diff < -1e-9 * scale.max(1.0)) {
        return Err(Error::NotNested(*diff));
    }
    EmpiricalDist::new(draws.into_iter().map(|(diff, _)| diff).collect())
}

/// The two plane curves with a singular point at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneCurve {
    /// `t ↦ (t² − 1, t(t² − 1))`, crossing itself at the origin (`t = ±1`).
    Nodal,
    /// `t ↦ (t², t³)`, with a cusp at the origin (`t = 0`).
    Cuspidal,
}

impl PlaneCurve {
    pub fn point(self, t: f64) -> [f64; 2] {
        match self {
            PlaneCurve::Nodal => [t * t - 1.0, t * (t * t - 1.0)],
            PlaneCurve::Cuspidal => [t * t, t * t * t],
        }
    }

    pub fn derivative(self, t: f64) -> [f64; 2] {
        match self {
            PlaneCurve::Nodal => [2.0 * t, 3.0 * t * t - 1.0],
            PlaneCurve::Cuspidal => [2.0 * t, 3.0 * t * t],
        }
    }

    fn second_derivative(self, t: f64) -> [f64; 2] {
        [2.0, 6.0 * t]
    }
}

/// Global minimiser `(t*, dist²)` of `‖x − f(t)‖²` over the real line.
pub fn project_curve(x: [f64; 2], curve: PlaneCurve) -> (f64, f64) {
    let d2 = |t: f64| {
        let p = curve.point(t);
        (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)
    };
    const POINTS: usize = 4001;
    let half = 10.0 + 2.0 * x[0].hypot(x[1]);
    let h = 2.0 * half / (POINTS - 1) as f64;
    let ts: Vec<f64> = (0..POINTS).map(|k| -half + k as f64 * h).collect();
    let fs: Vec<f64> = ts.iter().map(|&t| d2(t)).collect();
    let mut best = (0.0, f64::INFINITY);
    for k in 0..POINTS {
        let left = if k == 0 { f64::INFINITY } else { fs[k - 1] };
        let right = if k + 1 == POINTS { f64::INFINITY } else { fs[k + 1] };
        if fs[k] > left || fs[k] > right {
            continue;
        }
        let lo = ts[k.saturating_sub(1)];
        let hi = ts[(k + 1).min(POINTS - 1)];
        let (t, f) = golden_min(&d2, lo, hi, 60);
        let (t, f) = if fs[k] < f { (ts[k], fs[k]) } else { (t, f) };
        let (t, f) = newton_polish(x, curve, t, f);
        if f < best.1 {
            best = (t, f);
        }
    }
    (best.0, best.1.max(0.0))
}

/// A few Newton steps on the stationarity condition, kept only while they help.
fn newton_polish(x: [f64; 2], curve: PlaneCurve, mut t: f64, mut f: f64) -> (f64, f64) {
    for _ in 0..4 {
        let p = curve.point(t);
        let d1 = curve.derivative(t);
        let d2 = curve.second_derivative(t);
        let r = [x[0] - p[0], x[1] - p[1]];
        let slope = -(r[0] * d1[0] + r[1] * d1[1]);
        let curv = d1[0] * d1[0] + d1[1] * d1[1] - (r[0] * d2[0] + r[1] * d2[1]);
        if !(curv > 0.0) {
            break;
        }
        let tn = t - slope / curv;
        let q = curve.point(tn);
        let fn_ = (x[0] - q[0]).powi(2) + (x[1] - q[1]).powi(2);
        if !(fn_ <= f) {
            break;
        }
        t = tn;
        f = fn_;
    }
    (t, f)
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
