//! Bivariate normal mean constrained to a singular plane curve.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cones::{project_curve, ConeDescriptor, PlaneCurve};
use crate::{Error, Result};

const ON_CURVE_TOL: f64 = 1e-12;

/// `N₂(μ, I)` with `μ` restricted to a curve; `mu0` is the true mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveModel {
    pub curve: PlaneCurve,
    pub mu0: [f64; 2],
}

impl CurveModel {
    pub fn new(curve: PlaneCurve, mu0: [f64; 2]) -> Result<Self> {
        let model = Self { curve, mu0 };
        model.parameter()?;
        Ok(model)
    }

    /// Truth at parameter value `t`.
    pub fn at(curve: PlaneCurve, t: f64) -> Self {
        Self { curve, mu0: curve.point(t) }
    }

    /// All parameter values mapping to `mu0` (two at the node).
    pub fn parameter(&self) -> Result<Vec<f64>> {
        let (t, d2) = project_curve(self.mu0, self.curve);
        if d2.sqrt() > ON_CURVE_TOL * (1.0 + self.mu0[0].hypot(self.mu0[1])) {
            return Err(Error::Precondition(format!("mean {:?} is not on the {:?} curve", self.mu0, self.curve)));
        }
        Ok(match self.curve {
            PlaneCurve::Nodal if self.mu0 == [0.0, 0.0] => vec![-1.0, 1.0],
            _ => vec![t],
        })
    }

    /// Sample mean of `n` observations, drawn as `μ0 + Z / √n`.
    pub fn draw_mean<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> [f64; 2] {
        let s = (n as f64).sqrt();
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        [self.mu0[0] + z1 / s, self.mu0[1] + z2 / s]
    }
}

/// Likelihood ratio statistic `n · dist²(x̄, curve)`.
pub fn lrt_mean_curve(xbar: [f64; 2], n: usize, curve: PlaneCurve) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    Ok(n as f64 * project_curve(xbar, curve).1)
}

/// Tangent cone of the curve at `mu0`.
pub fn tangent_cone_curve(curve: PlaneCurve, mu0: [f64; 2]) -> Result<ConeDescriptor> {
    let ts = CurveModel { curve, mu0 }.parameter()?;
    let line = |d: [f64; 2]| ConeDescriptor::LinearSpan { ambient: 2, columns: vec![d.to_vec()] };
    Ok(match (curve, ts.as_slice()) {
        (PlaneCurve::Nodal, [a, b]) => {
            ConeDescriptor::UnionOf { members: vec![line(curve.derivative(*b)), line(curve.derivative(*a))] }
        }
        (PlaneCurve::Cuspidal, [t]) if *t == 0.0 || mu0 == [0.0, 0.0] => {
            ConeDescriptor::Ray { direction: vec![1.0, 0.0] }
        }
        (_, [t]) => line(curve.derivative(*t)),
        _ => unreachable!("at most two parameter values"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn on_curve_statistic_is_zero() {
        let m = CurveModel::at(PlaneCurve::Nodal, 2.0);
        assert!(lrt_mean_curve(m.mu0, 100, PlaneCurve::Nodal).unwrap() < 1e-18);
        assert!(lrt_mean_curve([0.0, 0.0], 0, PlaneCurve::Nodal).is_err());
    }

    #[test]
    fn off_curve_truth_rejected() {
        assert!(CurveModel::new(PlaneCurve::Cuspidal, [1.0, 0.5]).is_err());
        assert!(tangent_cone_curve(PlaneCurve::Nodal, [0.3, 0.3]).is_err());
    }

    #[test]
    fn tangent_cones() {
        let node = tangent_cone_curve(PlaneCurve::Nodal, [0.0, 0.0]).unwrap();
        assert_eq!(
            node,
            ConeDescriptor::UnionOf {
                members: vec![
                    ConeDescriptor::LinearSpan { ambient: 2, columns: vec![vec![2.0, 2.0]] },
                    ConeDescriptor::LinearSpan { ambient: 2, columns: vec![vec![-2.0, 2.0]] },
                ]
            }
        );
        let smooth = tangent_cone_curve(PlaneCurve::Cuspidal, [1.0, 1.0]).unwrap();
        assert_eq!(smooth, ConeDescriptor::LinearSpan { ambient: 2, columns: vec![vec![2.0, 3.0]] });
        let other = tangent_cone_curve(PlaneCurve::Nodal, [-1.0, 0.0]).unwrap();
        assert_eq!(other, ConeDescriptor::LinearSpan { ambient: 2, columns: vec![vec![0.0, -1.0]] });
        let cusp = tangent_cone_curve(PlaneCurve::Cuspidal, [0.0, 0.0]).unwrap();
        assert_eq!(cusp, ConeDescriptor::Ray { direction: vec![1.0, 0.0] });
    }

    #[test]
    fn draw_mean_is_centered() {
        let m = CurveModel::at(PlaneCurve::Cuspidal, 1.0);
        let mut r = rng::stream(3, 0);
        let reps = 20_000;
        let mut acc = [0.0; 2];
        for _ in 0..reps {
            let x = m.draw_mean(100, &mut r);
            acc[0] += x[0];
            acc[1] += x[1];
        }
        assert!((acc[0] / reps as f64 - 1.0).abs() < 5.0 * 0.1 / (reps as f64).sqrt());
        assert!((acc[1] / reps as f64 - 1.0).abs() < 5.0 * 0.1 / (reps as f64).sqrt());
    }
}
