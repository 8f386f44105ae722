//! Performance measures: closed-form boundary probabilities, derivatives of
//! the boundary functions at 1 and mean orbit sizes.

use num_complex::Complex64;
use serde::Serialize;

use crate::bvp::{BvpSolution, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::kernel::{k_derivatives_at_1, ratio_ab_limits_at_1};
use crate::model::{normalize_orientation, SystemParams};

/// `|mu * mu_i - alpha * lambda_i|` below this fraction of the rate scale
/// counts as degenerate for the mean orbit size formulas.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PerformanceMeasures {
    /// `P(L = 1)`.
    pub p_busy: f64,
    /// `P(Q1 = 0, L = 0)`.
    pub p_q1_empty_idle: f64,
    /// `P(Q2 = 0, L = 0)`.
    pub p_q2_empty_idle: f64,
    pub p_empty: f64,
    pub eq1: f64,
    pub eq2: f64,
    pub el: f64,
    /// `d/dx H0(x, 0)` at 1.
    pub dh10: f64,
    /// `d/dy H0(0, y)` at 1.
    pub dh01: f64,
    /// Quadrature change under node doubling, or truncation mass for
    /// measures read off the truncated chain.
    pub error_estimate: f64,
    pub warnings: Vec<String>,
}

impl PerformanceMeasures {
    pub const FIELD_NAMES: [&'static str; 9] = [
        "p_busy",
        "p_q1_empty_idle",
        "p_q2_empty_idle",
        "p_empty",
        "eq1",
        "eq2",
        "el",
        "dh10",
        "dh01",
    ];

    pub fn fields(&self) -> [(&'static str, f64); 9] {
        let v = [
            self.p_busy,
            self.p_q1_empty_idle,
            self.p_q2_empty_idle,
            self.p_empty,
            self.eq1,
            self.eq2,
            self.el,
            self.dh10,
            self.dh01,
        ];
        let mut out = [("", 0.0); 9];
        for (slot, (name, value)) in out.iter_mut().zip(Self::FIELD_NAMES.iter().zip(v)) {
            *slot = (name, value);
        }
        out
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        self.fields().into_iter().find(|(n, _)| *n == field).map(|t| t.1)
    }

    /// The same measures with the labels of the two orbits exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            p_q1_empty_idle: self.p_q2_empty_idle,
            p_q2_empty_idle: self.p_q1_empty_idle,
            eq1: self.eq2,
            eq2: self.eq1,
            dh10: self.dh01,
            dh01: self.dh10,
            ..self.clone()
        }
    }
}

/// `(P(L = 1), P(Q1 = 0, L = 0), P(Q2 = 0, L = 0))`.
pub fn closed_boundary_values(p: &SystemParams) -> (f64, f64, f64) {
    let busy = p.total_arrival() / p.mu;
    (
        busy,
        1.0 - busy * (1.0 + p.lambda1 / p.mu1),
        1.0 - busy * (1.0 + p.lambda2 / p.mu2),
    )
}

pub fn dh10(sol: &BvpSolution) -> f64 {
    sol.dh10()
}

pub fn dh01(sol: &BvpSolution) -> Result<f64> {
    let (lim0, lim1) = ratio_ab_limits_at_1(&sol.params, &sol.dp)?;
    let (kp, _) = k_derivatives_at_1(&sol.dp);
    Ok(-lim0 * sol.dh10() * kp - lim1 * sol.h10)
}

pub fn p_empty(sol: &BvpSolution) -> f64 {
    sol.h0_x0(Complex64::new(0.0, 0.0))
        .expect("origin lies inside the contour")
        .re
}

pub fn expected_q1(sol: &BvpSolution) -> Result<f64> {
    let p = &sol.params;
    let al = sol.dp.alpha;
    let gap = p.mu * p.mu1 - al * p.lambda1;
    if gap.abs() < DEGENERACY_TOL * sol.dp.scale() {
        return Err(Error::Degenerate {
            what: "mu*mu1 - alpha*lambda1",
            value: gap,
        });
    }
    Ok((al + p.mu) * p.lambda1 * p.mu1 / (gap * gap) * ((al - p.mu1) * sol.h01 - p.mu2 * sol.h10)
        - p.mu2 * (p.lambda1 + p.mu1) / gap * sol.dh10())
}

/// `E[Q2]` and whether the degenerate fallback was used.
///
/// When `mu*mu2 = alpha*lambda2` the closed formula divides by zero. The
/// fallback differentiates `H0(1, y) = N(y) / (hat_lambda2 y - hat_mu2)`
/// with the derivatives of `N` taken from the series of `H0(0, y)`.
pub fn expected_q2(sol: &BvpSolution) -> Result<(f64, bool)> {
    let p = &sol.params;
    let dp = &sol.dp;
    let al = dp.alpha;
    let gap = p.mu * p.mu2 - al * p.lambda2;
    let d01 = dh01(sol)?;
    if gap.abs() >= DEGENERACY_TOL * dp.scale() {
        let eq2 = (al + p.mu) * p.lambda2 * p.mu2 / (gap * gap) * ((al - p.mu2) * sol.h10 - p.mu1 * sol.h01)
            - p.mu1 * (p.lambda2 + p.mu2) / gap * d01;
        return Ok((eq2, false));
    }
    let [_, g1, g2, g3] = sol.h0_0y_derivatives_at_1::<4>()?;
    let c = p.lambda2 * p.mu1;
    let n2 = c * (2.0 * g1 + g2);
    let n3 = c * (3.0 * g2 + g3);
    let d = dp.hat_lambda2 - dp.hat_mu2;
    let h0y = (n2 / 2.0 - n3 * d / (6.0 * dp.hat_lambda2)) / dp.hat_lambda2;
    Ok(((1.0 + al / p.mu) * h0y - p.mu1 * d01 / p.mu, true))
}

/// `E[Q2]` of the single orbit system (`lambda1 = 0`).
pub fn single_orbit_eq(lambda2: f64, mu: f64, mu2: f64) -> Result<f64> {
    let den = mu * mu2 - lambda2 * lambda2 - lambda2 * mu2;
    if !(den > 0.0) {
        return Err(Error::Degenerate {
            what: "mu*mu2 - lambda2^2 - lambda2*mu2",
            value: den,
        });
    }
    Ok(lambda2 * lambda2 * (lambda2 + mu + mu2) / (mu * den))
}

fn richardson(f: impl Fn(f64) -> Result<f64>, at_one: f64) -> Result<f64> {
    // one-sided differences from inside the disc, steps 1e-3 and 5e-4
    let d = |h: f64| -> Result<f64> { Ok((at_one - f(1.0 - h)?) / h) };
    Ok(2.0 * d(5e-4)? - d(1e-3)?)
}

/// `(E[Q1], E[Q2])` as derivatives of `H0 + H1` at `(1, 1)`.
pub fn pgf_expected_queues(sol: &BvpSolution) -> Result<(f64, f64)> {
    let one = Complex64::new(1.0, 0.0);
    let total = |x: f64, y: f64| -> Result<f64> {
        let (h0, h1) = sol.h_full(Complex64::new(x, 0.0), Complex64::new(y, 0.0))?;
        Ok((h0 + h1).re)
    };
    let (h0, h1) = sol.h_full(one, one)?;
    let at_one = (h0 + h1).re;
    Ok((
        richardson(|x| total(x, 1.0), at_one)?,
        richardson(|y| total(1.0, y), at_one)?,
    ))
}

/// Measures of an oriented solution, in its own labelling.
pub fn measures_of(sol: &BvpSolution) -> Result<PerformanceMeasures> {
    let (p_busy, _, _) = closed_boundary_values(&sol.params);
    let (eq2, fallback) = expected_q2(sol)?;
    let mut warnings = Vec::new();
    if fallback {
        warnings.push("eq2: mu*mu2 = alpha*lambda2, computed from series derivatives".to_string());
    }
    let (_, h1) = sol.h_full(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))?;
    Ok(PerformanceMeasures {
        p_busy,
        p_q1_empty_idle: sol.h01,
        p_q2_empty_idle: sol.h10,
        p_empty: p_empty(sol),
        eq1: expected_q1(sol)?,
        eq2,
        // E[L] = P(L = 1), here read off the full generating function
        el: h1.re,
        dh10: sol.dh10(),
        dh01: dh01(sol)?,
        error_estimate: 0.0,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureOptions {
    pub nodes: usize,
    /// Re-solve with twice the nodes and report the largest change.
    pub estimate_error: bool,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_NODES,
            estimate_error: true,
        }
    }
}

/// All measures for parameters in the caller's labelling.
pub fn compute(params: &SystemParams, opts: &MeasureOptions) -> Result<PerformanceMeasures> {
    let (oriented, swapped) = normalize_orientation(params)?;
    let sol = BvpSolution::solve_with_nodes(&oriented, opts.nodes)?;
    let mut m = measures_of(&sol)?;
    if opts.estimate_error {
        let fine = measures_of(&BvpSolution::solve_with_nodes(&oriented, 2 * opts.nodes)?)?;
        m.error_estimate = m
            .fields()
            .iter()
            .zip(fine.fields())
            .map(|(a, b)| (a.1 - b.1).abs())
            .fold(0.0, f64::max);
    }
    if swapped {
        m = m.swapped();
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn p(l1: f64, l2: f64, mu: f64, m1: f64, m2: f64) -> SystemParams {
        SystemParams::new(l1, l2, mu, m1, m2).unwrap()
    }

    #[test]
    fn closed_values() {
        let (b, q1, q2) = closed_boundary_values(&p(1.0, 1.0, 4.0, 2.0, 2.0));
        assert_eq!((b, q1, q2), (0.5, 0.25, 0.25));
        let (b, q1, q2) = closed_boundary_values(&p(0.1, 0.2, 4.0, 2.0, 2.0));
        assert_relative_eq!(b, 0.075, max_relative = 1e-14);
        assert_relative_eq!(q1, 0.92125, max_relative = 1e-14);
        assert_relative_eq!(q2, 0.9175, max_relative = 1e-14);
    }

    #[test]
    fn single_orbit_formula() {
        assert_relative_eq!(single_orbit_eq(1.0, 4.0, 2.0).unwrap(), 0.35, max_relative = 1e-15);
        assert_relative_eq!(single_orbit_eq(1.9, 4.0, 2.0).unwrap(), 28.519 / 2.36, max_relative = 1e-12);
        assert!(single_orbit_eq(1e-9, 4.0, 2.0).unwrap() < 1e-17);
        assert!(single_orbit_eq(2.0, 4.0, 2.0).is_err());
    }

    // Reference values below were produced by the truncated chain
    // (m_max = n_max = 240, boundary mass < 1e-12) and frozen.
    #[test]
    fn symmetric_set() {
        let m = compute(&p(1.0, 1.0, 4.0, 2.0, 2.0), &MeasureOptions::default()).unwrap();
        assert_eq!(m.p_busy, 0.5);
        assert_relative_eq!(m.p_q1_empty_idle, 0.25, max_relative = 1e-15);
        assert_relative_eq!(m.eq1, 1.75, max_relative = 1e-9);
        assert_relative_eq!(m.eq2, 1.75, max_relative = 1e-9);
        assert_relative_eq!(m.dh10, m.dh01, max_relative = 1e-9);
        assert_relative_eq!(m.p_empty, 0.155_073_006_206_94, max_relative = 1e-9);
        assert!(m.error_estimate < 1e-10);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn fig3_set() {
        let m = compute(&p(0.1, 1.0, 4.0, 2.0, 2.0), &MeasureOptions::default()).unwrap();
        assert_relative_eq!(m.p_busy, 0.275, max_relative = 1e-12);
        assert_relative_eq!(m.eq1, 0.028_647_5, max_relative = 1e-5);
        assert_relative_eq!(m.p_empty, 0.579_361_9, max_relative = 1e-6);
        assert_relative_eq!(m.eq2, 0.411_02, max_relative = 1e-4);
    }

    #[test]
    fn dh01_signs_and_symmetry() {
        let sol = BvpSolution::solve(&p(1.2, 1.2, 4.0, 2.0, 2.1)).unwrap();
        assert!(dh01(&sol).unwrap() > 0.0);
        assert!(dh10(&sol) > 0.0);
        let [_, g1] = sol.h0_0y_derivatives_at_1::<2>().unwrap();
        assert_relative_eq!(g1, dh01(&sol).unwrap(), max_relative = 1e-6);
    }

    #[test]
    fn dh10_matches_one_sided_difference() {
        let sol = BvpSolution::solve(&p(0.1, 1.0, 4.0, 2.0, 2.0)).unwrap();
        let f = |x: f64| Ok(sol.h0_x0(Complex64::new(x, 0.0))?.re);
        let fd = richardson(f, sol.h10).unwrap();
        assert!((fd - sol.dh10()).abs() < 1e-5);
    }

    #[test]
    fn closed_formulas_match_pgf_derivatives() {
        for params in [p(1.0, 1.0, 4.0, 2.0, 2.0), p(0.1, 1.0, 4.0, 2.0, 2.0), p(0.7, 0.4, 3.0, 1.1, 2.5)] {
            let sol = BvpSolution::solve(&params).unwrap();
            let (a, b) = pgf_expected_queues(&sol).unwrap();
            assert_relative_eq!(a, expected_q1(&sol).unwrap(), max_relative = 1e-5);
            assert_relative_eq!(b, expected_q2(&sol).unwrap().0, max_relative = 1e-5);
        }
    }

    #[test]
    fn degenerate_eq2_uses_series() {
        // mu*mu2 = alpha*lambda2: 4 * 2 = (1 + 1 + 2 + 2) * lambda2 needs
        // lambda2 = 4/3 with lambda1 = 2/3
        let params = p(2.0 / 3.0, 4.0 / 3.0, 4.0, 2.0, 2.0);
        let (oriented, _) = normalize_orientation(&params).unwrap();
        let sol = BvpSolution::solve(&oriented).unwrap();
        assert!((oriented.mu * oriented.mu2 - sol.dp.alpha * oriented.lambda2).abs() < 1e-12);
        let (eq2, fallback) = expected_q2(&sol).unwrap();
        assert!(fallback);
        let (_, pgf) = pgf_expected_queues(&sol).unwrap();
        assert_relative_eq!(eq2, pgf, max_relative = 1e-5);
        let m = compute(&params, &MeasureOptions::default()).unwrap();
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn swapped_input_gives_swapped_measures() {
        let params = p(1.4, 0.2, 4.0, 1.8, 3.0);
        let opts = MeasureOptions {
            estimate_error: false,
            ..Default::default()
        };
        let a = compute(&params, &opts).unwrap();
        let b = compute(&params.swapped(), &opts).unwrap();
        assert_eq!(a, b.swapped());
    }

    #[test]
    fn measures_field_access() {
        let m = PerformanceMeasures {
            eq2: 3.0,
            ..Default::default()
        };
        assert_eq!(m.get("eq2"), Some(3.0));
        assert_eq!(m.get("nope"), None);
        assert_eq!(m.swapped().eq1, 3.0);
    }
}
