//! Reproducible Monte Carlo experiments over the three model families.
//!
//! Replicate `r` draws its data from `rng::stream(seed, r)` and seeds its
//! optimizer from `derive_seed(seed, OPTIMIZER_STARTS, r)`, so results are
//! bit-identical for any number of worker threads.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::PlaneCurve;
use crate::curves::{lrt_mean_curve, CurveModel};
use crate::factor::{
    bartlett_correct, cov_from_params, lrt_saturated, lrt_submodel, FactorParams, MleOptions, SuffStat,
};
use crate::feedback::{f_cov, mle_feedback, Beta, FeedbackOptions, FeedbackParams};
use crate::laws::{ks_one_sample, ks_two_sample, ks_uniform, sample_many, EmpiricalDist, LimitLaw};
use crate::rng::{self, derive_seed, domain};
use crate::symkit::CovMatrix;
use crate::{Error, Result};

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Which likelihood ratio test to run in the one-factor model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FactorTest {
    /// One-factor model against the unrestricted covariance.
    Saturated,
    /// Submodel with loadings zero beyond the first `k − 1` against the
    /// one-factor model.
    Submodel { k: usize },
}

/// Data-generating model and the statistic computed on each replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Factor { params: FactorParams, test: FactorTest },
    Feedback { truth: FeedbackParams },
    Curve { curve: PlaneCurve, mu0: [f64; 2] },
}

fn default_reference_reps() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Law used for p-values and the KS comparison.
    pub reference: LimitLaw,
    /// Draws used when the reference has no closed-form tail.
    #[serde(default = "default_reference_reps")]
    pub reference_reps: usize,
    /// Multiply the saturated one-factor statistic by the Bartlett factor.
    #[serde(default)]
    pub bartlett: bool,
    /// Report the rejection rate at this critical value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical: Option<f64>,
    /// Worker count; `None` uses rayon's default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub mle: MleOptions,
    #[serde(default)]
    pub feedback: FeedbackOptions,
    /// Free-form note carried into the summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, n: usize, reps: usize, seed: u64, reference: LimitLaw) -> Self {
        Self {
            model,
            n,
            reps,
            seed,
            reference,
            reference_reps: default_reference_reps(),
            bartlett: false,
            critical: None,
            threads: None,
            mle: MleOptions::default(),
            feedback: FeedbackOptions::default(),
            label: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.n == 0 {
            return Err(Error::InvalidParameter("reps and n must be >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParameter("threads must be >= 1".into()));
        }
        self.reference.validate()?;
        if self.reference.survival(0.0).is_none() && self.reference_reps == 0 {
            return Err(Error::InvalidParameter("reference_reps must be >= 1".into()));
        }
        match &self.model {
            ModelSpec::Factor { params, test } => {
                params.validate()?;
                let m = params.m();
                if m < 4 {
                    return Err(Error::InvalidParameter(format!("one-factor tests need m >= 4, got {m}")));
                }
                if let FactorTest::Submodel { k } = test {
                    if *k == 0 || *k > m + 1 {
                        return Err(Error::InvalidParameter(format!("submodel index {k} outside 1..={}", m + 1)));
                    }
                    if self.bartlett {
                        return Err(Error::InvalidParameter("Bartlett correction applies to the saturated test".into()));
                    }
                }
                if self.n <= m {
                    return Err(Error::InvalidParameter(format!("n = {} must exceed m = {m}", self.n)));
                }
            }
            ModelSpec::Feedback { truth } => {
                truth.validate()?;
                if self.n <= 4 {
                    return Err(Error::InvalidParameter("n must exceed 4".into()));
                }
            }
            ModelSpec::Curve { curve, mu0 } => {
                CurveModel::new(*curve, *mu0)?;
            }
        }
        if self.bartlett && !matches!(self.model, ModelSpec::Factor { .. }) {
            return Err(Error::InvalidParameter("Bartlett correction applies to the factor model".into()));
        }
        Ok(())
    }
}

/// Rejection rate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub critical: f64,
    pub rate: f64,
    pub stderr: f64,
}

/// A Monte Carlo quantile with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Critical {
    pub p: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reps: usize,
    pub failures: usize,
    /// Replicates whose optimizer stopped above the gradient tolerance.
    pub nonconverged: usize,
    pub mean: f64,
    pub mean_stderr: f64,
    pub q50: f64,
    pub q95: f64,
    pub q99: f64,
    /// KS distance between the statistics and the reference law.
    pub ks_reference: f64,
    /// KS distance between the p-values and the uniform law.
    pub ks_uniform: f64,
    pub pvalue_mean: f64,
    pub pvalue_mean_stderr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Indices of the successful replicates, increasing.
    pub replicates: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub pvalues: Vec<f64>,
    /// Indices of replicates whose fit returned an error.
    pub failed: Vec<usize>,
    pub summary: Summary,
}

impl ExperimentResult {
    pub fn lambda_dist(&self) -> Result<EmpiricalDist> {
        EmpiricalDist::new(self.lambdas.clone())
    }
}

/// Runs `f` on a pool with `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

enum Prepared {
    Factor { sigma: CovMatrix, m: usize, test: FactorTest },
    Feedback { sigma: CovMatrix },
    Curve { model: CurveModel },
}

fn prepare(model: &ModelSpec) -> Result<Prepared> {
    Ok(match model {
        ModelSpec::Factor { params, test } => {
            Prepared::Factor { sigma: cov_from_params(params)?, m: params.m(), test: *test }
        }
        ModelSpec::Feedback { truth } => Prepared::Feedback { sigma: f_cov(truth)? },
        ModelSpec::Curve { curve, mu0 } => Prepared::Curve { model: CurveModel::new(*curve, *mu0)? },
    })
}

/// Statistic and convergence flag for replicate `r`.
fn replicate(cfg: &ExperimentConfig, prep: &Prepared, r: u64) -> Result<(f64, bool)> {
    let mut data = rng::stream(cfg.seed, r);
    let opt_seed = derive_seed(cfg.seed, domain::OPTIMIZER_STARTS, r);
    match prep {
        Prepared::Factor { sigma, m, test } => {
            let d = SuffStat::simulate(sigma, cfg.n, &mut data)?;
            let opts = MleOptions { seed: opt_seed, ..cfg.mle };
            let lambda = match test {
                FactorTest::Saturated => lrt_saturated(&d, &opts)?,
                FactorTest::Submodel { k } => lrt_submodel(&d, *k, &opts)?,
            };
            let lambda = if cfg.bartlett { bartlett_correct(lambda, cfg.n, *m, 1)? } else { lambda };
            Ok((lambda, true))
        }
        Prepared::Feedback { sigma } => {
            let d = SuffStat::simulate(sigma, cfg.n, &mut data)?;
            let fit = mle_feedback(&d, &FeedbackOptions { seed: opt_seed, ..cfg.feedback })?;
            Ok((fit.lambda, fit.converged))
        }
        Prepared::Curve { model } => {
            let xbar = model.draw_mean(cfg.n, &mut data);
            Ok((lrt_mean_curve(xbar, cfg.n, model.curve)?, true))
        }
    }
}

/// Reference law either in closed form or as a Monte Carlo sample.
pub enum Reference {
    Exact(LimitLaw),
    Sampled(EmpiricalDist),
}

impl Reference {
    pub fn new(law: &LimitLaw, reps: usize, seed: u64) -> Result<Self> {
        law.validate()?;
        if law.survival(0.0).is_some() {
            Ok(Reference::Exact(law.clone()))
        } else {
            Ok(Reference::Sampled(sample_many(law, reps, derive_seed(seed, domain::REFERENCE, 0))?))
        }
    }

    pub fn pvalue(&self, lambda: f64) -> f64 {
        match self {
            Reference::Exact(law) => law.survival(lambda).unwrap_or(f64::NAN).clamp(0.0, 1.0),
            Reference::Sampled(d) => d.survival(lambda),
        }
    }

    pub fn ks(&self, sample: &EmpiricalDist) -> f64 {
        match self {
            Reference::Exact(law) => ks_one_sample(sample, |t| 1.0 - law.survival(t).unwrap_or(f64::NAN)),
            Reference::Sampled(d) => ks_two_sample(sample, d),
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let prep = prepare(&cfg.model)?;
    let (outcomes, reference) = with_threads(cfg.threads, || {
        let outcomes: Vec<Result<(f64, bool)>> =
            (0..cfg.reps as u64).into_par_iter().map(|r| replicate(cfg, &prep, r)).collect();
        (outcomes, Reference::new(&cfg.reference, cfg.reference_reps, cfg.seed))
    })?;
    let reference = reference?;

    let mut replicates = Vec::with_capacity(cfg.reps);
    let mut lambdas = Vec::with_capacity(cfg.reps);
    let mut failed = Vec::new();
    let mut nonconverged = 0;
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok((lambda, conv)) if lambda.is_finite() => {
                replicates.push(r);
                lambdas.push(lambda);
                nonconverged += usize::from(!conv);
            }
            _ => failed.push(r),
        }
    }
    if failed.len() as f64 > MAX_FAILURE_RATE * cfg.reps as f64 || lambdas.is_empty() {
        return Err(Error::TooManyFailures { failed: failed.len(), reps: cfg.reps });
    }
    let pvalues: Vec<f64> = lambdas.iter().map(|&l| reference.pvalue(l)).collect();

    let dist = EmpiricalDist::new(lambdas.clone())?;
    let pdist = EmpiricalDist::new(pvalues.clone())?;
    let level = cfg.critical.map(|c| empirical_level(&lambdas, c)).transpose()?;
    let summary = Summary {
        reps: cfg.reps,
        failures: failed.len(),
        nonconverged,
        mean: dist.mean(),
        mean_stderr: dist.mean_stderr(),
        q50: dist.quantile(0.5)?,
        q95: dist.quantile(0.95)?,
        q99: dist.quantile(0.99)?,
        ks_reference: reference.ks(&dist),
        ks_uniform: ks_uniform(&pvalues)?,
        pvalue_mean: pdist.mean(),
        pvalue_mean_stderr: pdist.mean_stderr(),
        level,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(ExperimentResult { config: cfg.clone(), replicates, lambdas, pvalues, failed, summary })
}

/// Fraction of statistics strictly above `critical`.
pub fn empirical_level(lambdas: &[f64], critical: f64) -> Result<Level> {
    if lambdas.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = lambdas.len() as f64;
    let rate = lambdas.iter().filter(|&&l| l > critical).count() as f64 / n;
    Ok(Level { critical, rate, stderr: (rate * (1.0 - rate) / n).sqrt() })
}

/// Monte Carlo `p`-quantile of `law` from `reps` draws. The standard error is
/// half the spread of the order statistics one binomial standard deviation
/// either side of `reps · p`.
pub fn estimate_critical(law: &LimitLaw, p: f64, reps: usize, seed: u64) -> Result<Critical> {
    if reps < 10_000 {
        return Err(Error::InvalidParameter(format!("critical values need >= 10000 draws, got {reps}")));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1)")));
    }
    let d = sample_many(law, reps, seed)?;
    let sd = (p * (1.0 - p) / reps as f64).sqrt();
    let lo = d.quantile((p - sd).max(0.0))?;
    let hi = d.quantile((p + sd).min(1.0))?;
    Ok(Critical { p, value: d.quantile(p)?, stderr: 0.5 * (hi - lo) })
}

/// Loadings pattern with uniquenesses `1/3`: nonzero pairs correlate at `3/4`.
pub fn fig3_truth(pattern: &[f64]) -> Result<FactorParams> {
    FactorParams::new(vec![1.0 / 3.0; pattern.len()], pattern.to_vec())
}

/// The four loading patterns shown side by side, smooth to most singular.
pub const FIG3_PATTERNS: [[f64; 4]; 4] =
    [[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]];

/// Equicorrelation matrix with off-diagonal `rho`.
pub fn fig4_truth(m: usize, rho: f64) -> Result<FactorParams> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("correlation {rho} outside [0, 1)")));
    }
    FactorParams::new(vec![1.0 - rho; m], vec![rho.sqrt(); m])
}

/// The correlations varied across the panels.
pub const FIG4_RHOS: [f64; 4] = [0.5, 0.3, 0.2, 0.1];

/// `I + ρ (E12 + E21)`.
pub fn table1_truth(m: usize, rho: f64) -> Result<FactorParams> {
    if !(0.0..1.0).contains(&rho) || m < 2 {
        return Err(Error::InvalidParameter(format!("need m >= 2 and 0 <= rho < 1, got m = {m}, rho = {rho}")));
    }
    let c = rho.sqrt();
    let mut delta = vec![1.0; m];
    let mut gamma = vec![0.0; m];
    for i in 0..2 {
        delta[i] = 1.0 - rho;
        gamma[i] = c;
    }
    FactorParams::new(delta, gamma)
}

pub const TABLE1_MS: [usize; 2] = [4, 8];
pub const TABLE1_NS: [usize; 3] = [100, 200, 500];
pub const TABLE1_RHOS: [f64; 7] = [0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2];

/// One cell of the level table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCell {
    pub m: usize,
    pub n: usize,
    pub rho: f64,
    pub level: Level,
    pub failures: usize,
}

/// Config for one cell of the level table: submodel `k = 3` tested against
/// the larger-eigenvalue critical value.
pub fn table1_config(m: usize, n: usize, rho: f64, reps: usize, seed: u64, critical: f64) -> Result<ExperimentConfig> {
    let model = ModelSpec::Factor { params: table1_truth(m, rho)?, test: FactorTest::Submodel { k: 3 } };
    let mut cfg = ExperimentConfig::new(model, n, reps, seed, LimitLaw::MaxEig { m });
    cfg.critical = Some(critical);
    Ok(cfg)
}

/// Feedback truths for the three identifiability regimes used in checks.
pub fn feedback_truth(class: crate::feedback::IdentClass) -> FeedbackParams {
    use crate::feedback::IdentClass::*;
    let beta = match class {
        Global => Beta { b21: 0.5, b24: 0.4, b31: 0.6, b32: 0.7, b43: 0.5 },
        LocalTwo => Beta { b21: 0.6, b24: 0.5, b31: -0.3, b32: 0.5, b43: 0.5 },
        GlobalDetBranch => Beta { b21: 0.5, b24: -1.0, b31: -0.5, b32: 1.0, b43: 1.0 },
        GlobalZeroBranch => Beta { b21: 0.5, b24: 0.5, b31: 0.0, b32: 0.0, b43: 0.5 },
    };
    FeedbackParams { beta, omega: [1.0; 4] }
}

/// Writes `replicate,lambda,pvalue` rows with lossless reals.
pub fn write_csv<W: Write>(result: &ExperimentResult, mut out: W) -> Result<()> {
    writeln!(out, "replicate,lambda,pvalue")?;
    for ((r, l), p) in result.replicates.iter().zip(&result.lambdas).zip(&result.pvalues) {
        writeln!(out, "{r},{l:.16e},{p:.16e}")?;
    }
    out.flush()?;
    Ok(())
}

/// Summary plus the config that reproduces the run.
pub fn summary_json(result: &ExperimentResult) -> serde_json::Value {
    serde_json::json!({
        "config": result.config,
        "summary": result.summary,
        "failed_replicates": result.failed,
    })
}

/// Writes `result.csv` and `summary.json` into `dir`.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(result, std::io::BufWriter::new(std::fs::File::create(dir.join("result.csv"))?))?;
    let text = serde_json::to_string_pretty(&summary_json(result)).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

/// Writes the level table as `m,n,rho,critical,level,stderr,failures`.
pub fn write_levels_csv<W: Write>(cells: &[LevelCell], mut out: W) -> Result<()> {
    writeln!(out, "m,n,rho,critical,level,stderr,failures")?;
    for c in cells {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            c.m, c.n, c.rho, c.level.critical, c.level.rate, c.level.stderr, c.failures
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::IdentClass;
    use crate::laws::ks_critical;

    fn small_factor(reps: usize, threads: Option<usize>) -> ExperimentConfig {
        let model = ModelSpec::Factor { params: fig3_truth(&[1.0, 1.0, 1.0, 1.0]).unwrap(), test: FactorTest::Saturated };
        let mut cfg = ExperimentConfig::new(model, 200, reps, 17, LimitLaw::ChiSq { df: 2 });
        cfg.threads = threads;
        cfg
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let runs: Vec<_> = [1, 4, 8].iter().map(|&t| run_experiment(&small_factor(60, Some(t))).unwrap()).collect();
        for r in &runs[1..] {
            assert_eq!(r.lambdas.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), runs[0].lambdas.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            assert_eq!(r.pvalues, runs[0].pvalues);
        }
        let model = ModelSpec::Feedback { truth: feedback_truth(IdentClass::LocalTwo) };
        let mut cfg = ExperimentConfig::new(model, 500, 40, 3, LimitLaw::TwoLineMin { rho: 0.3 });
        cfg.reference_reps = 2000;
        let a = run_experiment(&ExperimentConfig { threads: Some(1), ..cfg.clone() }).unwrap();
        let b = run_experiment(&ExperimentConfig { threads: Some(8), ..cfg }).unwrap();
        assert_eq!(a.lambdas, b.lambdas);
        assert_eq!(a.pvalues, b.pvalues);
    }

    #[test]
    fn lengths_and_pvalue_range() {
        let r = run_experiment(&small_factor(50, None)).unwrap();
        assert_eq!(r.lambdas.len() + r.failed.len(), 50);
        assert_eq!(r.pvalues.len(), r.lambdas.len());
        assert!(r.pvalues.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(r.lambdas.iter().all(|l| *l >= 0.0));
    }

    #[test]
    fn seed_changes_output() {
        let a = run_experiment(&small_factor(10, None)).unwrap();
        let b = run_experiment(&ExperimentConfig { seed: 18, ..small_factor(10, None) }).unwrap();
        assert_ne!(a.lambdas, b.lambdas);
    }

    #[test]
    fn invalid_configs() {
        assert!(run_experiment(&ExperimentConfig { reps: 0, ..small_factor(1, None) }).is_err());
        assert!(run_experiment(&ExperimentConfig { n: 3, ..small_factor(1, None) }).is_err());
        let model = ModelSpec::Curve { curve: PlaneCurve::Nodal, mu0: [0.5, 0.5] };
        assert!(run_experiment(&ExperimentConfig::new(model, 10, 10, 1, LimitLaw::ChiSq { df: 1 })).is_err());
        let model = ModelSpec::Curve { curve: PlaneCurve::Nodal, mu0: [0.0, 0.0] };
        let mut cfg = ExperimentConfig::new(model, 10, 10, 1, LimitLaw::ChiSq { df: 1 });
        cfg.bartlett = true;
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn curve_smooth_point_is_chisq1() {
        let model = ModelSpec::Curve { curve: PlaneCurve::Nodal, mu0: PlaneCurve::Nodal.point(2.0) };
        let r = run_experiment(&ExperimentConfig::new(model, 10_000, 4000, 5, LimitLaw::ChiSq { df: 1 })).unwrap();
        assert!(r.summary.ks_reference < ks_critical(0.001, 4000), "{:?}", r.summary);
        assert!(r.summary.ks_uniform < ks_critical(0.001, 4000));
    }

    #[test]
    fn level_examples() {
        assert_eq!(empirical_level(&[1.0, 2.0], 5.0).unwrap().rate, 0.0);
        let l = empirical_level(&[1.0, 2.0, 3.0, 6.0], 5.0).unwrap();
        assert_eq!(l.rate, 0.25);
        assert!((l.stderr - (0.25f64 * 0.75 / 4.0).sqrt()).abs() < 1e-15);
        assert!(empirical_level(&[], 1.0).is_err());
    }

    #[test]
    fn critical_values() {
        let c = estimate_critical(&LimitLaw::ChiSq { df: 2 }, 0.95, 100_000, 1).unwrap();
        assert!((c.value - 5.991).abs() < 0.05, "{c:?}");
        assert!(c.stderr > 0.0 && c.stderr < 0.05);
        assert_eq!(estimate_critical(&LimitLaw::ChiSq { df: 0 }, 0.95, 10_000, 1).unwrap().value, 0.0);
        assert!(estimate_critical(&LimitLaw::ChiSq { df: 2 }, 0.95, 100, 1).is_err());
    }

    /// `P(larger eigenvalue ≤ t)` for a 2×2 Wishart with 2 df. With `l = u²`
    /// the eigenvalue density is proportional to `e^{-(u²+v²)/2} (u² − v²)` on
    /// `0 < v < u`; the inner integral is closed form.
    fn maxeig4_cdf(t: f64) -> f64 {
        let inner = |u: f64| {
            let g = (std::f64::consts::PI / 2.0).sqrt() * statrs::function::erf::erf(u / 2f64.sqrt());
            (-u * u / 2.0).exp() * ((u * u - 1.0) * g + u * (-u * u / 2.0).exp())
        };
        let simpson = |b: f64| {
            let k = 20_000;
            let h = b / k as f64;
            let s: f64 = (0..=k)
                .map(|i| {
                    let w = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * inner(i as f64 * h)
                })
                .sum();
            s * h / 3.0
        };
        simpson(t.sqrt()) / simpson(14.0)
    }

    #[test]
    fn maxeig_quadrature_oracle() {
        assert!((maxeig4_cdf(MAXEIG4_Q95) - 0.95).abs() < 1e-9);
        assert!(maxeig4_cdf(1e-6) < 1e-6);
    }

    #[test]
    fn maxeig_critical_value_matches_oracle() {
        let law = LimitLaw::MaxEig { m: 4 };
        for seed in [101, 202] {
            let c = estimate_critical(&law, 0.95, 200_000, seed).unwrap();
            assert!((c.value - MAXEIG4_Q95).abs() < 4.0 * c.stderr, "{c:?}");
        }
    }

    /// 95% point of the larger eigenvalue of a 2×2 Wishart with 2 df, from
    /// the quadrature oracle.
    const MAXEIG4_Q95: f64 = 8.594875622828;

    #[test]
    fn truths() {
        let s = cov_from_params(&table1_truth(4, 0.5).unwrap()).unwrap();
        let want = CovMatrix::from_rows(&[&[1.0, 0.5, 0.0, 0.0], &[0.5, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0, 0.0, 1.0]]).unwrap();
        assert!((s.values() - want.values()).amax() < 1e-15);
        let s = cov_from_params(&fig4_truth(4, 0.3).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((s.get(i, j) - if i == j { 1.0 } else { 0.3 }).abs() < 1e-15);
            }
        }
        let s = cov_from_params(&fig3_truth(&[1.0, 1.0, 0.0, 0.0]).unwrap()).unwrap();
        assert!((s.get(0, 1) / s.get(0, 0) - 0.75).abs() < 1e-15);
        for class in [IdentClass::Global, IdentClass::LocalTwo, IdentClass::GlobalDetBranch, IdentClass::GlobalZeroBranch] {
            let p = feedback_truth(class);
            p.validate().unwrap();
            assert_eq!(crate::feedback::ident_class(&p.beta, crate::feedback::IDENT_TOL), class);
        }
    }

    #[test]
    fn csv_and_summary() {
        let r = run_experiment(&small_factor(5, None)).unwrap();
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "replicate,lambda,pvalue");
        assert_eq!(lines.len(), 6);
        assert!(!text.contains('\r'));
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[1].parse::<f64>().unwrap(), r.lambdas[0]);
        let v = summary_json(&r);
        let cfg: ExperimentConfig = serde_json::from_value(v["config"].clone()).unwrap();
        assert_eq!(cfg, r.config);
        assert_eq!(run_experiment(&cfg).unwrap().lambdas, r.lambdas);
        assert!(v["summary"]["q95"].is_number());
    }
}
