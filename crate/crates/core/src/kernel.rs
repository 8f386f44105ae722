//! Algebra of the kernel `R(x, y)` and the coefficients `A`, `B`.
//!
//! `R(x, y) = 0` is quadratic in either variable. For fixed `y` the two roots
//! `k(y)` and `k_sigma(y)` multiply to `hat_mu1 / hat_lambda1`; the branch `k`
//! is the one bounded by the contour radius. The same holds for `h(x)` with
//! the indices exchanged.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DerivedParams, SystemParams};

/// Relative width of the band in which both roots are treated as lying on
/// the circle (the cut), where modulus no longer tells them apart.
const CUT_TOL: f64 = 1e-9;

pub fn kernel_r(x: Complex64, y: Complex64, dp: &DerivedParams) -> Complex64 {
    let xy = x * y;
    dp.hat_lambda1 * (1.0 - x) * xy + dp.hat_lambda2 * (1.0 - y) * xy
        - dp.hat_mu1 * (1.0 - x) * y
        - dp.hat_mu2 * (1.0 - y) * x
}

pub fn coeff_a(x: Complex64, y: Complex64, p: &SystemParams) -> Complex64 {
    ((1.0 - y) * (p.lambda2 * y - p.mu) + p.lambda1 * (1.0 - x) * y) * p.mu2 * x
}

pub fn coeff_b(x: Complex64, y: Complex64, p: &SystemParams) -> Complex64 {
    ((1.0 - x) * (p.lambda1 * x - p.mu) + p.lambda2 * (1.0 - y) * x) * p.mu1 * y
}

/// Both roots of the kernel in one variable: `bounded` is the analytic
/// branch (`k` or `h`), `companion` the other one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootPair {
    pub bounded: Complex64,
    pub companion: Complex64,
}

impl RootPair {
    fn on_cut(&self, radius: f64) -> bool {
        (self.bounded.norm() - self.companion.norm()).abs() <= CUT_TOL * radius
    }
}

// Roots of a z^2 + b z + c with disc = b^2 - 4ac supplied in factored form.
// The larger root is formed without cancellation and the smaller one from
// the product of roots.
fn quadratic_roots(a: Complex64, b: Complex64, c: Complex64, disc: Complex64) -> RootPair {
    let sq = disc.sqrt();
    let q = if (b.conj() * sq).re >= 0.0 {
        -(b + sq) * 0.5
    } else {
        -(b - sq) * 0.5
    };
    let zero = Complex64::new(0.0, 0.0);
    if q == zero {
        return RootPair {
            bounded: zero,
            companion: zero,
        };
    }
    let companion = if a == zero {
        Complex64::new(f64::INFINITY, 0.0)
    } else {
        q / a
    };
    RootPair {
        bounded: c / q,
        companion,
    }
}

/// `b(y)`, the middle coefficient of `R` as a quadratic in `x` (sign flipped).
pub fn poly_b(y: Complex64, dp: &DerivedParams) -> Complex64 {
    dp.hat_lambda2 * y * y - (dp.hat_mu1 + dp.hat_mu2 + dp.hat_lambda) * y + dp.hat_mu2
}

/// `(b_-(y), b_+(y))`; their product is the discriminant `c(y)`.
pub fn poly_b_pm(y: Complex64, dp: &DerivedParams) -> (Complex64, Complex64) {
    let b = poly_b(y, dp);
    let shift = 2.0 * (dp.hat_lambda1 * dp.hat_mu1).sqrt() * y;
    (b - shift, b + shift)
}

pub fn poly_c(y: Complex64, dp: &DerivedParams) -> Complex64 {
    let (minus, plus) = poly_b_pm(y, dp);
    minus * plus
}

pub fn poly_e(x: Complex64, dp: &DerivedParams) -> Complex64 {
    dp.hat_lambda1 * x * x - (dp.hat_mu1 + dp.hat_mu2 + dp.hat_lambda) * x + dp.hat_mu1
}

pub fn poly_e_pm(x: Complex64, dp: &DerivedParams) -> (Complex64, Complex64) {
    let e = poly_e(x, dp);
    let shift = 2.0 * (dp.hat_lambda2 * dp.hat_mu2).sqrt() * x;
    (e - shift, e + shift)
}

pub fn poly_d(x: Complex64, dp: &DerivedParams) -> Complex64 {
    let (minus, plus) = poly_e_pm(x, dp);
    minus * plus
}

/// Roots `x` of `R(x, y) = 0` for fixed `y`.
pub fn k_pair(y: Complex64, dp: &DerivedParams) -> RootPair {
    // R = -(hat_lambda1 y x^2 + b(y) x + hat_mu1 y)
    quadratic_roots(dp.hat_lambda1 * y, poly_b(y, dp), dp.hat_mu1 * y, poly_c(y, dp))
}

/// Roots `y` of `R(x, y) = 0` for fixed `x`.
pub fn h_pair(x: Complex64, dp: &DerivedParams) -> RootPair {
    quadratic_roots(dp.hat_lambda2 * x, poly_e(x, dp), dp.hat_mu2 * x, poly_d(x, dp))
}

/// The branch `k(y)`, bounded in modulus by the contour radius.
///
/// On the cuts both roots have that modulus and this returns the one with
/// nonnegative imaginary part; use [`BranchTracker`] to follow a path across
/// a cut continuously.
pub fn branch_k(y: Complex64, dp: &DerivedParams) -> Complex64 {
    let pair = k_pair(y, dp);
    if pair.on_cut(dp.contour_radius) && pair.bounded.im < 0.0 {
        pair.companion
    } else {
        pair.bounded
    }
}

/// The branch `h(x)`, bounded in modulus by `sqrt(hat_mu2 / hat_lambda2)`.
pub fn branch_h(x: Complex64, dp: &DerivedParams) -> Complex64 {
    let pair = h_pair(x, dp);
    let radius = (dp.hat_mu2 / dp.hat_lambda2).sqrt();
    if pair.on_cut(radius) && pair.bounded.im < 0.0 {
        pair.companion
    } else {
        pair.bounded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    K,
    H,
}

/// Evaluates `k` or `h` along a path, resolving the two-fold ambiguity on the
/// cuts by continuity with the previous evaluation.
///
/// Single-owner state; clone one per thread.
#[derive(Debug, Clone)]
pub struct BranchTracker {
    branch: Branch,
    dp: DerivedParams,
    previous: Option<Complex64>,
}

impl BranchTracker {
    pub fn new(branch: Branch, dp: DerivedParams) -> Self {
        Self {
            branch,
            dp,
            previous: None,
        }
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    pub fn eval(&mut self, arg: Complex64) -> Complex64 {
        let (pair, radius) = match self.branch {
            Branch::K => (k_pair(arg, &self.dp), self.dp.contour_radius),
            Branch::H => (
                h_pair(arg, &self.dp),
                (self.dp.hat_mu2 / self.dp.hat_lambda2).sqrt(),
            ),
        };
        let value = match (pair.on_cut(radius), self.previous) {
            (true, Some(prev)) => {
                if (pair.companion - prev).norm() < (pair.bounded - prev).norm() {
                    pair.companion
                } else {
                    pair.bounded
                }
            }
            (true, None) if pair.bounded.im < 0.0 => pair.companion,
            _ => pair.bounded,
        };
        self.previous = Some(value);
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchPoints {
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub y4: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
    pub xi1: f64,
    pub xi2: f64,
}

// Zeros of the two quadratics with middle coefficient -xi and constant term
// `constant`, leading coefficient `lead`: returns (small, large) per xi.
fn branch_quadratic(xi: f64, lead: f64, constant: f64) -> (f64, f64) {
    let root = (xi * xi - 4.0 * lead * constant).max(0.0).sqrt();
    let large = (xi + root) / (2.0 * lead);
    let small = 2.0 * constant / (xi + root);
    (small, large)
}

pub fn branch_points(dp: &DerivedParams) -> Result<BranchPoints> {
    let base = dp.hat_mu1 + dp.hat_mu2 + dp.hat_lambda;
    let s1 = 2.0 * (dp.hat_lambda1 * dp.hat_mu1).sqrt();
    let s2 = 2.0 * (dp.hat_lambda2 * dp.hat_mu2).sqrt();
    let (xi1, xi2) = (base + s1, base - s1);
    let (y1, y4) = branch_quadratic(xi1, dp.hat_lambda2, dp.hat_mu2);
    let (y2, y3) = branch_quadratic(xi2, dp.hat_lambda2, dp.hat_mu2);
    let (x1, x4) = branch_quadratic(base + s2, dp.hat_lambda1, dp.hat_mu1);
    let (x2, x3) = branch_quadratic(base - s2, dp.hat_lambda1, dp.hat_mu1);
    let bp = BranchPoints {
        y1,
        y2,
        y3,
        y4,
        x1,
        x2,
        x3,
        x4,
        xi1,
        xi2,
    };
    if !(0.0 < y1 && y1 < y2 && y2 < 1.0 && 1.0 < y3 && y3 < y4) {
        return Err(Error::BranchOrdering(format!(
            "expected 0 < y1 < y2 < 1 < y3 < y4, got {y1}, {y2}, {y3}, {y4}"
        )));
    }
    // x2 = 1 exactly when hat_lambda2 = hat_mu2; allow for rounding there
    if !(0.0 < x1 && x1 < x2 && x2 <= 1.0 + 1e-12 && 1.0 < x3 && x3 < x4) {
        return Err(Error::BranchOrdering(format!(
            "expected 0 < x1 < x2 <= 1 < x3 < x4, got {x1}, {x2}, {x3}, {x4}"
        )));
    }
    Ok(bp)
}

/// `(k'(1), k''(1))` from the closed forms; needs `hat_mu1 != hat_lambda1`.
pub fn k_derivatives_at_1(dp: &DerivedParams) -> (f64, f64) {
    let (l1, l2, m1, m2) = (dp.hat_lambda1, dp.hat_lambda2, dp.hat_mu1, dp.hat_mu2);
    let gap = m1 - l1;
    let kp1 = (l2 - m2) / gap;
    let kpp1 = 2.0 * ((m1 + m2 - 2.0 * (l1 + l2)) * m1 * m2 + l1 * l1 * m2 + l2 * l2 * m1)
        / (gap * gap * gap);
    (kp1, kpp1)
}

/// Limits at `y = 1` of `A(k(y),y)/B(k(y),y)` and of its derivative in `y`.
///
/// Both `A` and `B` vanish at `(1, 1)`; the limits follow from second-order
/// expansions of `A` and `B` along `x = k(y)`.
pub fn ratio_ab_limits_at_1(p: &SystemParams, dp: &DerivedParams) -> Result<(f64, f64)> {
    let (kp, kpp) = k_derivatives_at_1(dp);
    let (l1, l2, mu) = (p.lambda1, p.lambda2, p.mu);
    let den = l2 + (l1 - mu) * kp;
    if den.abs() <= 1e-12 * (l1 + l2 + mu) * (1.0 + kp.abs()) {
        return Err(Error::Degenerate {
            what: "lambda2 + (lambda1 - mu) k'(1)",
            value: den,
        });
    }
    let lim0 = (l2 - mu + l1 * kp) * p.mu2 / (den * p.mu1);
    let num = -l2 + (mu - l1) * kp + (l2 - mu) * kp * kp + l1 * kp * kp * kp
        + (mu - l1 - l2) * kpp * 0.5;
    let lim1 = -num * mu * p.mu2 / (p.mu1 * den * den);
    Ok((lim0, lim1))
}

/// `A(k(y),y) / B(k(y),y)` evaluated directly (undefined at `y = 1`).
pub fn ratio_ab_on_k(y: Complex64, p: &SystemParams, dp: &DerivedParams) -> Complex64 {
    let k = branch_k(y, dp);
    coeff_a(k, y, p) / coeff_b(k, y, p)
}
