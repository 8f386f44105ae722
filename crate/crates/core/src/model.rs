//! Exogenous rates, derived quantities and the stability region.
//!
//! Everything downstream of this module works in the orientation where
//! `alpha * lambda1 < mu * mu1` (contour radius above one). Callers hand in
//! parameters in their own labelling; [`normalize_orientation`] exchanges the
//! two streams when needed and reports whether it did, so results can be
//! relabelled on the way out.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|rho_i - 1|` at or below this value is reported as [`Verdict::Boundary`].
pub const BOUNDARY_TOL: f64 = 1e-12;

/// The five exogenous rates of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Arrival rate of stream 1.
    pub lambda1: f64,
    /// Arrival rate of stream 2.
    pub lambda2: f64,
    /// Service rate of the main server.
    pub mu: f64,
    /// Retrial rate of orbit 1 (constant, whenever the orbit is nonempty).
    pub mu1: f64,
    /// Retrial rate of orbit 2.
    pub mu2: f64,
}

impl SystemParams {
    pub fn new(lambda1: f64, lambda2: f64, mu: f64, mu1: f64, mu2: f64) -> Result<Self> {
        let p = Self {
            lambda1,
            lambda2,
            mu,
            mu1,
            mu2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.named_rates() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    pub fn named_rates(&self) -> [(&'static str, f64); 5] {
        [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("mu", self.mu),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
        ]
    }

    /// Exchange the labels of the two streams (and their orbits).
    pub fn swapped(&self) -> Self {
        Self {
            lambda1: self.lambda2,
            lambda2: self.lambda1,
            mu: self.mu,
            mu1: self.mu2,
            mu2: self.mu1,
        }
    }

    pub fn total_arrival(&self) -> f64 {
        self.lambda1 + self.lambda2
    }

    pub fn alpha(&self) -> f64 {
        self.total_arrival() + self.mu1 + self.mu2
    }
}

/// Quantities derived from [`SystemParams`] that the kernel is written in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    pub lambda: f64,
    pub alpha: f64,
    pub hat_lambda1: f64,
    pub hat_lambda2: f64,
    pub hat_mu1: f64,
    pub hat_mu2: f64,
    pub hat_lambda: f64,
    /// `sqrt(hat_mu1 / hat_lambda1)`, the radius of the circle carrying the
    /// boundary value problem.
    pub contour_radius: f64,
}

impl DerivedParams {
    /// Overall rate scale, used to make "small" tolerances dimensionless.
    pub fn scale(&self) -> f64 {
        self.hat_lambda + self.hat_mu1 + self.hat_mu2
    }
}

pub fn derive(params: &SystemParams) -> DerivedParams {
    let lambda = params.total_arrival();
    let alpha = lambda + params.mu1 + params.mu2;
    let hat_lambda1 = alpha * params.lambda1;
    let hat_lambda2 = alpha * params.lambda2;
    let hat_mu1 = params.mu * params.mu1;
    let hat_mu2 = params.mu * params.mu2;
    DerivedParams {
        lambda,
        alpha,
        hat_lambda1,
        hat_lambda2,
        hat_mu1,
        hat_mu2,
        hat_lambda: alpha * lambda,
        contour_radius: (hat_mu1 / hat_lambda1).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Boundary,
    Unstable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Boundary => "boundary",
            Verdict::Unstable => "unstable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub rho1: f64,
    pub rho2: f64,
    pub verdict: Verdict,
    /// Whether the analytic pipeline solves the problem with the two streams
    /// exchanged. Always `false` unless the verdict is `Stable`.
    pub swapped: bool,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.verdict == Verdict::Stable
    }

    pub fn require_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::NotStable {
                verdict: self.verdict,
                rho1: self.rho1,
                rho2: self.rho2,
            })
        }
    }
}

/// Loads `(lambda/mu)(1 + lambda_i/mu_i)` of both orbits.
pub fn loads(params: &SystemParams) -> (f64, f64) {
    let base = params.total_arrival() / params.mu;
    (
        base * (1.0 + params.lambda1 / params.mu1),
        base * (1.0 + params.lambda2 / params.mu2),
    )
}

pub fn check_stability(params: &SystemParams) -> StabilityReport {
    let (rho1, rho2) = loads(params);
    let worst = rho1.max(rho2);
    let verdict = if (rho1 - 1.0).abs() <= BOUNDARY_TOL || (rho2 - 1.0).abs() <= BOUNDARY_TOL {
        // an orbit sitting on the boundary is degenerate even if the other
        // one is comfortably stable
        if worst > 1.0 + BOUNDARY_TOL {
            Verdict::Unstable
        } else {
            Verdict::Boundary
        }
    } else if worst < 1.0 {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    let swapped = verdict == Verdict::Stable && needs_swap(params);
    StabilityReport {
        rho1,
        rho2,
        verdict,
        swapped,
    }
}

// Prefer the labelling with the larger contour radius sqrt(mu*mu1/(alpha*lambda1));
// on a tie keep the user's labelling. Cross-multiplied to avoid divisions.
fn needs_swap(params: &SystemParams) -> bool {
    params.mu2 * params.lambda1 > params.mu1 * params.lambda2
}

/// Relabel the streams so that `alpha * lambda1 < mu * mu1` holds.
///
/// Among the two labellings the one with the larger contour radius is
/// chosen, which in particular satisfies the inequality whenever the system
/// is stable. Non-stable input is refused.
pub fn normalize_orientation(params: &SystemParams) -> Result<(SystemParams, bool)> {
    params.validate()?;
    check_stability(params).require_stable()?;
    let swapped = needs_swap(params);
    let oriented = if swapped { params.swapped() } else { *params };
    let dp = derive(&oriented);
    if dp.hat_lambda1 >= dp.hat_mu1 {
        return Err(Error::MisOriented {
            hat_lambda1: dp.hat_lambda1,
            hat_mu1: dp.hat_mu1,
        });
    }
    Ok((oriented, swapped))
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn p(l1: f64, l2: f64, mu: f64, m1: f64, m2: f64) -> SystemParams {
        SystemParams::new(l1, l2, mu, m1, m2).unwrap()
    }

    #[test]
    fn derive_symmetric_set() {
        let dp = derive(&p(1.0, 1.0, 4.0, 2.0, 2.0));
        assert_eq!(dp.alpha, 6.0);
        assert_eq!(dp.hat_lambda1, 6.0);
        assert_eq!(dp.hat_lambda2, 6.0);
        assert_eq!(dp.hat_mu1, 8.0);
        assert_eq!(dp.hat_mu2, 8.0);
        assert_relative_eq!(dp.contour_radius, (4.0f64 / 3.0).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(dp.contour_radius, 1.154701, epsilon = 1e-6);
    }

    #[test]
    fn derive_fig3_set() {
        let dp = derive(&p(0.1, 1.0, 4.0, 2.0, 2.0));
        assert_relative_eq!(dp.lambda, 1.1, max_relative = 1e-15);
        assert_relative_eq!(dp.alpha, 5.1, max_relative = 1e-15);
    }

    #[test]
    fn alpha_identity() {
        let params = p(0.37, 1.21, 3.3, 0.8, 2.9);
        let dp = derive(&params);
        assert_eq!(dp.alpha, dp.lambda + params.mu1 + params.mu2);
        assert!((dp.alpha - dp.lambda - params.mu1 - params.mu2).abs() <= 4.0 * f64::EPSILON * dp.alpha);
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(matches!(
            SystemParams::new(0.0, 1.0, 1.0, 1.0, 1.0),
            Err(Error::InvalidParameter { name: "lambda1", .. })
        ));
        assert!(SystemParams::new(1.0, f64::NAN, 1.0, 1.0, 1.0).is_err());
        assert!(SystemParams::new(1.0, 1.0, f64::INFINITY, 1.0, 1.0).is_err());
        assert!(SystemParams::new(1.0, 1.0, 1.0, -2.0, 1.0).is_err());
    }

    #[test]
    fn stability_examples() {
        let r = check_stability(&p(1.2, 1.2, 4.0, 2.0, 2.1));
        assert_relative_eq!(r.rho1, 0.96, max_relative = 1e-14);
        assert_relative_eq!(r.rho2, 0.942857, epsilon = 1e-6);
        assert_eq!(r.verdict, Verdict::Stable);

        let r = check_stability(&p(1.0, 1.4, 4.0, 2.0, 2.0));
        assert_relative_eq!(r.rho2, 1.02, max_relative = 1e-14);
        assert_eq!(r.verdict, Verdict::Unstable);
        assert!(!r.swapped);

        let r = check_stability(&p(1.0, 1.0, 3.0, 2.0, 2.0));
        assert_relative_eq!(r.rho1, 1.0, max_relative = 1e-15);
        assert_eq!(r.verdict, Verdict::Boundary);
    }

    #[test]
    fn boundary_in_one_orbit_only() {
        // rho1 = 1 exactly, rho2 < 1
        let params = p(1.0, 0.5, 3.0, 1.0, 4.0);
        let r = check_stability(&params);
        assert_relative_eq!(r.rho1, 1.0, max_relative = 1e-15);
        assert!(r.rho2 < 1.0);
        assert_eq!(r.verdict, Verdict::Boundary);
    }

    #[test]
    fn orientation_examples() {
        let (out, swapped) = normalize_orientation(&p(1.0, 1.0, 4.0, 2.0, 2.0)).unwrap();
        assert!(!swapped);
        assert_eq!(out, p(1.0, 1.0, 4.0, 2.0, 2.0));

        let input = p(1.4, 0.2, 4.0, 1.8, 3.0);
        let dp = derive(&input);
        assert_relative_eq!(dp.hat_lambda1, 8.96, max_relative = 1e-14);
        assert_relative_eq!(dp.hat_mu1, 7.2, max_relative = 1e-14);
        let (out, swapped) = normalize_orientation(&input).unwrap();
        assert!(swapped);
        let dp = derive(&out);
        assert_relative_eq!(dp.hat_lambda1, 1.28, max_relative = 1e-14);
        assert_relative_eq!(dp.hat_mu1, 12.0, max_relative = 1e-14);
        assert!(check_stability(&input).swapped);
    }

    #[test]
    fn orientation_refuses_unstable() {
        assert!(matches!(
            normalize_orientation(&p(1.0, 1.4, 4.0, 2.0, 2.0)),
            Err(Error::NotStable {
                verdict: Verdict::Unstable,
                ..
            })
        ));
        assert!(matches!(
            normalize_orientation(&p(1.0, 1.0, 3.0, 2.0, 2.0)),
            Err(Error::NotStable {
                verdict: Verdict::Boundary,
                ..
            })
        ));
    }
}
