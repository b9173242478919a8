//! Limit laws of likelihood ratio statistics, their exact samplers, and the
//! empirical distribution tools used to compare them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared as ChiSquaredDist, ContinuousCDF};

use crate::cones::{self, ConeDescriptor};
use crate::rng::{self, domain};
use crate::{Error, Result};

/// A limiting distribution with an exact sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LimitLaw {
    /// χ² with `df` degrees of freedom; `df = 0` is a point mass at zero.
    ChiSq { df: u32 },
    /// Mixture `Σ w_k χ²_{d_k}`.
    ChiBarMix { weights: Vec<f64>, dfs: Vec<u32> },
    /// Minimum of `count` independent χ²_df variables.
    MinIndepChiSq { count: u32, df: u32 },
    /// Squared distance of a standard bivariate normal to two lines whose
    /// normals have cosine `rho`.
    TwoLineMin { rho: f64 },
    /// `W12 + min(W13, W23)` for independent χ²₁ variables.
    ChiSqPlusMinPair,
    /// `V + W`: `V ~ χ²` with `C(m-2, 2)` df plus the smaller eigenvalue of a
    /// 2×2 Wishart matrix with `m - 2` df, independent.
    VPlusW { m: usize },
    /// Larger eigenvalue of a 2×2 Wishart matrix with `m - 2` df.
    MaxEig { m: usize },
    /// Squared distance of a standard normal vector to a cone.
    ConeDistance { cone: ConeDescriptor },
}

impl LimitLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            LimitLaw::ChiSq { .. } | LimitLaw::ChiSqPlusMinPair => Ok(()),
            LimitLaw::ChiBarMix { weights, dfs } => {
                if weights.is_empty() || weights.len() != dfs.len() {
                    return Err(Error::InvalidLaw("mixture weights and dfs must have equal nonzero length".into()));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::InvalidLaw("mixture weights must be nonnegative".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidLaw(format!("mixture weights sum to {total}")));
                }
                Ok(())
            }
            LimitLaw::MinIndepChiSq { count, .. } => {
                if *count == 0 {
                    return Err(Error::InvalidLaw("minimum over zero variables".into()));
                }
                Ok(())
            }
            LimitLaw::TwoLineMin { rho } => {
                if !(-1.0..=1.0).contains(rho) {
                    return Err(Error::InvalidLaw(format!("cosine {rho} outside [-1, 1]")));
                }
                Ok(())
            }
            LimitLaw::VPlusW { m } | LimitLaw::MaxEig { m } => {
                if *m < 4 {
                    return Err(Error::InvalidLaw(format!("Wishart laws need m >= 4, got {m}")));
                }
                Ok(())
            }
            LimitLaw::ConeDistance { cone } => cone.validate(),
        }
    }

    /// Closed-form upper-tail probability where one exists.
    pub fn survival(&self, t: f64) -> Option<f64> {
        match self {
            LimitLaw::ChiSq { df } => Some(chisq_sf(*df, t)),
            LimitLaw::ChiBarMix { weights, dfs } => {
                Some(weights.iter().zip(dfs).map(|(w, d)| w * chisq_sf(*d, t)).sum())
            }
            LimitLaw::MinIndepChiSq { count, df } => Some(chisq_sf(*df, t).powi(*count as i32)),
            _ => None,
        }
    }
}

/// `P(χ²_df > t)`; `df = 0` is a point mass at zero.
pub fn chisq_sf(df: u32, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if df == 0 {
        return 0.0;
    }
    1.0 - ChiSquaredDist::new(df as f64).expect("df > 0").cdf(t)
}

/// `P(χ²_df ≤ t)`.
pub fn chisq_cdf(df: u32, t: f64) -> f64 {
    if df == 0 {
        return if t >= 0.0 { 1.0 } else { 0.0 };
    }
    if t <= 0.0 {
        return 0.0;
    }
    ChiSquaredDist::new(df as f64).expect("df > 0").cdf(t)
}

impl fmt::Display for LimitLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LimitLaw::ChiSq { df } => write!(f, "chisq:{df}"),
            LimitLaw::ChiBarMix { weights, dfs } => {
                let parts: Vec<String> = weights.iter().zip(dfs).map(|(w, d)| format!("{w}/{d}")).collect();
                write!(f, "chibar:{}", parts.join(","))
            }
            LimitLaw::MinIndepChiSq { count, df } => write!(f, "minchisq:{count}:{df}"),
            LimitLaw::TwoLineMin { rho } => write!(f, "twoline:{rho}"),
            LimitLaw::ChiSqPlusMinPair => write!(f, "w12min"),
            LimitLaw::VPlusW { m } => write!(f, "vplusw:{m}"),
            LimitLaw::MaxEig { m } => write!(f, "maxeig:{m}"),
            LimitLaw::ConeDistance { cone } => write!(f, "cone:{}", serde_json::to_string(cone).unwrap_or_default()),
        }
    }
}

impl FromStr for LimitLaw {
    type Err = Error;

    /// Parses the compact forms `chisq:2`, `chibar:0.5/1,0.5/2`,
    /// `minchisq:2:1`, `twoline:0.3`, `w12min`, `vplusw:4`, `maxeig:4`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unrecognised law '{s}'"));
        let int = |v: &str| -> Result<i64> { v.trim().parse::<i64>().map_err(|_| bad()) };
        let df = |v: &str| -> Result<u32> {
            let d = int(v)?;
            u32::try_from(d).map_err(|_| Error::InvalidLaw(format!("negative degrees of freedom {d}")))
        };
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let law = match head.trim().to_ascii_lowercase().as_str() {
            "chisq" => LimitLaw::ChiSq { df: df(rest)? },
            "chibar" => {
                let mut weights = Vec::new();
                let mut dfs = Vec::new();
                for part in rest.split(',') {
                    let (w, d) = part.split_once('/').ok_or_else(bad)?;
                    weights.push(w.trim().parse::<f64>().map_err(|_| bad())?);
                    dfs.push(df(d)?);
                }
                LimitLaw::ChiBarMix { weights, dfs }
            }
            "minchisq" => {
                let (c, d) = rest.split_once(':').ok_or_else(bad)?;
                LimitLaw::MinIndepChiSq { count: df(c)?, df: df(d)? }
            }
            "twoline" => LimitLaw::TwoLineMin { rho: rest.trim().parse().map_err(|_| bad())? },
            "w12min" => LimitLaw::ChiSqPlusMinPair,
            "vplusw" => LimitLaw::VPlusW { m: int(rest)?.try_into().map_err(|_| bad())? },
            "maxeig" => LimitLaw::MaxEig { m: int(rest)?.try_into().map_err(|_| bad())? },
            "cone" => LimitLaw::ConeDistance { cone: serde_json::from_str(rest).map_err(|e| Error::Parse(e.to_string()))? },
            _ => return Err(bad()),
        };
        law.validate()?;
        Ok(law)
    }
}

pub(crate) fn chisq_draw<R: Rng + ?Sized>(df: u32, rng: &mut R) -> f64 {
    match df {
        0 => 0.0,
        1..=6 => (0..df).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum(),
        _ => ChiSquared::new(df as f64).expect("df > 0").sample(rng),
    }
}

/// Eigenvalues `(small, large)` of `G Gᵗ` for a 2 × `cols` standard normal `G`.
pub(crate) fn wishart2_eigs<R: Rng + ?Sized>(cols: usize, rng: &mut R) -> (f64, f64) {
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for _ in 0..cols {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        a += x * x;
        b += x * y;
        c += y * y;
    }
    sym2_eigs(a, b, c)
}

/// Eigenvalues `(small, large)` of `[[a, b], [b, c]]` from trace and determinant.
pub(crate) fn sym2_eigs(a: f64, b: f64, c: f64) -> (f64, f64) {
    let half_tr = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let large = half_tr + disc;
    let det = a * c - b * b;
    let small = if large > 0.0 { (det / large).max(0.0).min(half_tr) } else { 0.0 };
    (small, large)
}

fn draw_unchecked<R: Rng + ?Sized>(law: &LimitLaw, rng: &mut R) -> f64 {
    match law {
        LimitLaw::ChiSq { df } => chisq_draw(*df, rng),
        LimitLaw::ChiBarMix { weights, dfs } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = dfs.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            chisq_draw(dfs[pick], rng)
        }
        LimitLaw::MinIndepChiSq { count, df } => {
            (0..*count).map(|_| chisq_draw(*df, rng)).fold(f64::INFINITY, f64::min)
        }
        LimitLaw::TwoLineMin { rho } => {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let second = rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * z2;
            (z1 * z1).min(second * second)
        }
        LimitLaw::ChiSqPlusMinPair => {
            let w12 = chisq_draw(1, rng);
            let w13 = chisq_draw(1, rng);
            let w23 = chisq_draw(1, rng);
            w12 + w13.min(w23)
        }
        LimitLaw::VPlusW { m } => {
            let v = chisq_draw(((m - 2) * (m - 3) / 2) as u32, rng);
            let (w, _) = wishart2_eigs(m - 2, rng);
            v + w
        }
        LimitLaw::MaxEig { m } => wishart2_eigs(m - 2, rng).1,
        LimitLaw::ConeDistance { cone } => {
            let z: Vec<f64> = (0..cone.ambient_dim()).map(|_| rng.sample(StandardNormal)).collect();
            cones::dist2_cone(&z, cone).expect("dimension matches by construction").dist2
        }
    }
}

/// One draw from `law`.
pub fn sample_law<R: Rng + ?Sized>(law: &LimitLaw, rng: &mut R) -> Result<f64> {
    law.validate()?;
    Ok(draw_unchecked(law, rng))
}

/// `reps` draws; draw `r` uses stream `(seed, r)` so the result does not
/// depend on the number of workers.
pub fn sample_many(law: &LimitLaw, reps: usize, seed: u64) -> Result<EmpiricalDist> {
    law.validate()?;
    let draws: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| draw_unchecked(law, &mut rng::substream(seed, domain::LAW, r)))
        .collect();
    EmpiricalDist::new(draws)
}

/// Sorted sample with ECDF and quantile queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDist {
    sorted: Vec<f64>,
}

impl EmpiricalDist {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("sample contains NaN".into()));
        }
        values.sort_by(|a, b| a.total_cmp(b));
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Right-continuous ECDF, `#{x ≤ t} / n`.
    pub fn ecdf(&self, t: f64) -> f64 {
        self.sorted.partition_point(|x| *x <= t) as f64 / self.len() as f64
    }

    /// Fraction of the sample strictly above `t`.
    pub fn survival(&self, t: f64) -> f64 {
        1.0 - self.ecdf(t)
    }

    /// Inverse ECDF: the smallest order statistic `x` with `ecdf(x) ≥ p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
        }
        let n = self.len();
        let k = ((p * n as f64).ceil() as usize).clamp(1, n);
        Ok(self.sorted[k - 1])
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.len() as f64
    }

    /// Unbiased sample variance (zero for a single value).
    pub fn variance(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mu = self.mean();
        self.sorted.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    /// Monte Carlo standard error of the mean.
    pub fn mean_stderr(&self) -> f64 {
        (self.variance() / self.len() as f64).sqrt()
    }
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &EmpiricalDist, b: &EmpiricalDist) -> f64 {
    let (x, y) = (a.values(), b.values());
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample(sample: &EmpiricalDist, cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sample.len() as f64;
    sample.values().iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// KS statistic of p-values against the uniform law on `[0, 1]`.
pub fn ks_uniform(pvals: &[f64]) -> Result<f64> {
    if pvals.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter("p-values must lie in [0, 1]".into()));
    }
    let d = EmpiricalDist::new(pvals.to_vec())?;
    Ok(ks_one_sample(&d, |x| x.clamp(0.0, 1.0)))
}

/// Asymptotic Kolmogorov critical constant `c(α) = sqrt(-ln(α/2) / 2)`.
pub fn ks_constant(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Asymptotic one-sample KS critical value at level `alpha`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    ks_constant(alpha) / (n as f64).sqrt()
}

/// Asymptotic two-sample KS critical value at level `alpha`.
pub fn ks_critical_two_sample(alpha: f64, n: usize, m: usize) -> f64 {
    ks_constant(alpha) * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
