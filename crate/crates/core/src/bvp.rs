//! Boundary value problem on the circle `|x| = sqrt(hat_mu1 / hat_lambda1)`.
//!
//! The unknown `H0(x, 0)` is recovered from the boundary condition
//! `Re(i U(x) H~(x)) = 0` by a log-density integral over the circle, then
//! `H0(0, y)` follows from the kernel relation along `x = k(y)` and a Cauchy
//! integral over the unit circle. All integrals use the trapezoidal rule on
//! equispaced nodes.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{
    branch_h, branch_k, coeff_a, coeff_b, k_derivatives_at_1, kernel_r, ratio_ab_limits_at_1,
};
use crate::model::{check_stability, derive, DerivedParams, SystemParams};

pub const DEFAULT_NODES: usize = 4096;
pub const MIN_NODES: usize = 256;
pub const MAX_NODES: usize = 65536;

/// Largest argument jump of `U` between neighbouring nodes before the grid
/// is refined.
const MAX_ARG_JUMP: f64 = PI / 2.0;

/// The trapezoidal error for a pole at distance `d` from a circle of radius
/// `R` with `N` nodes decays like `exp(-N d / R)`; integrands here have
/// singularities at distance `R - 1`, so keep `N (R - 1) / R` above this.
const RESOLUTION: f64 = 36.0;

/// Nodes closer than this angle to `t = 1` use the local expansion of `V`.
const V_NEAR_ONE: f64 = 1e-5;

/// Relative size of `|R|` below which `(x, y)` counts as a kernel zero.
const KERNEL_ZERO_TOL: f64 = 1e-9;

const MEAN_VALUE_RADIUS: f64 = 1e-3;
const MEAN_VALUE_POINTS: usize = 32;

/// Equispaced nodes on a circle centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourSpec {
    pub radius: f64,
    pub node_count: usize,
    pub phase_offset: f64,
}

impl ContourSpec {
    /// Half-step offset, so no node falls on the real axis.
    pub fn new(radius: f64, node_count: usize) -> Result<Self> {
        let spec = Self {
            radius,
            node_count,
            phase_offset: PI / node_count as f64,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count < MIN_NODES || self.node_count % 2 != 0 {
            return Err(Error::InvalidContour(format!(
                "node count must be even and at least {MIN_NODES}, got {}",
                self.node_count
            )));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidContour(format!("radius {}", self.radius)));
        }
        let step = 2.0 * PI / self.node_count as f64;
        let frac = (self.phase_offset / step).rem_euclid(1.0);
        if frac < 1e-6 || frac > 1.0 - 1e-6 {
            return Err(Error::InvalidContour(
                "phase offset places a node on the positive real axis".into(),
            ));
        }
        Ok(())
    }

    pub fn nodes(&self) -> Vec<Complex64> {
        let step = 2.0 * PI / self.node_count as f64;
        (0..self.node_count)
            .map(|j| Complex64::from_polar(self.radius, step * j as f64 + self.phase_offset))
            .collect()
    }
}

/// Positive zero of `A(x, h(x))` after removing its trivial factors.
pub fn compute_x0(p: &SystemParams) -> f64 {
    let lambda = p.total_arrival();
    let a = lambda * p.lambda1 * (lambda + p.mu1);
    let b = (lambda + p.mu1 - p.mu) * lambda * p.mu1;
    let c = -p.mu * p.mu1 * p.mu1;
    let s = (b * b - 4.0 * a * c).sqrt();
    if b >= 0.0 {
        2.0 * c / (-b - s)
    } else {
        (-b + s) / (2.0 * a)
    }
}

/// 1 when `x0` lies inside the contour and `A(x0, h(x0))` actually vanishes.
pub fn compute_r(p: &SystemParams, dp: &DerivedParams, x0: f64) -> u8 {
    let lambda = p.total_arrival();
    let inside = x0 <= dp.contour_radius;
    let image_ok = (lambda + p.mu1) * x0 / (lambda * x0 + p.mu1) <= (dp.hat_mu2 / dp.hat_lambda2).sqrt();
    u8::from(inside && image_ok)
}

/// Smallest power-of-two multiple of `requested` that resolves the gap
/// between the contour and the unit circle.
pub fn resolved_node_count(dp: &DerivedParams, requested: usize) -> Result<usize> {
    let gap = (dp.contour_radius - 1.0) / dp.contour_radius;
    let mut n = requested;
    while (n as f64) * gap < RESOLUTION {
        if n >= MAX_NODES {
            return Err(Error::InvalidContour(format!(
                "contour radius {} too close to 1 for {MAX_NODES} nodes",
                dp.contour_radius
            )));
        }
        n *= 2;
    }
    Ok(n)
}

/// Solved boundary value problem for one oriented, stable parameter set.
#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub params: SystemParams,
    pub dp: DerivedParams,
    pub x0: f64,
    pub r: u8,
    pub chi: i64,
    pub contour: ContourSpec,
    pub nodes: Vec<Complex64>,
    /// Continuously unwrapped `log J = -2i arg U` at the nodes.
    pub log_j: Vec<Complex64>,
    /// `H0(1, 0) = P(Q2 = 0, L = 0)`.
    pub h10: f64,
    /// `H0(0, 1) = P(Q1 = 0, L = 0)`.
    pub h01: f64,
    // (log J)_j z_j / (N (z_j - 1)): the integrand weights for H0(x, 0)
    weights: Vec<Complex64>,
    series: OnceLock<Vec<Complex64>>,
}

/// Samples of `U` on a contour, with the argument unwrapped node to node.
#[derive(Debug, Clone)]
pub struct ContourSamples {
    pub nodes: Vec<Complex64>,
    pub u: Vec<Complex64>,
    pub arg: Vec<f64>,
    pub max_jump: f64,
    /// Total change of `arg U` once around the circle.
    pub winding: f64,
}

pub fn u_of(x: Complex64, p: &SystemParams, dp: &DerivedParams, x0: f64, r: u8) -> Result<Complex64> {
    let y = branch_h(x, dp);
    let b = coeff_b(x, y, p);
    let floor = 1e-13 * dp.scale() * x.norm().max(1.0).powi(3);
    if b.norm() < floor {
        return Err(Error::VanishingOnContour {
            what: "B(x, h(x))",
            at: x,
            modulus: b.norm(),
        });
    }
    let mut u = coeff_a(x, y, p) / b;
    if r == 1 {
        u /= x - x0;
    }
    if u.norm() < 1e-14 {
        return Err(Error::VanishingOnContour {
            what: "U",
            at: x,
            modulus: u.norm(),
        });
    }
    Ok(u)
}

/// `J = conj(U) / U`; unimodular by construction.
pub fn j_of(x: Complex64, p: &SystemParams, dp: &DerivedParams, x0: f64, r: u8) -> Result<Complex64> {
    let u = u_of(x, p, dp, x0, r)?;
    Ok(u.conj() / u)
}

pub fn sample_contour(spec: &ContourSpec, p: &SystemParams, dp: &DerivedParams, x0: f64, r: u8) -> Result<ContourSamples> {
    let nodes = spec.nodes();
    let u = nodes
        .iter()
        .map(|&z| u_of(z, p, dp, x0, r))
        .collect::<Result<Vec<_>>>()?;
    let mut arg = Vec::with_capacity(u.len());
    let mut max_jump = 0.0f64;
    let mut current = u[0].arg();
    arg.push(current);
    let fold = |d: f64| d - 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
    for w in u.windows(2) {
        let d = fold(w[1].arg() - w[0].arg());
        max_jump = max_jump.max(d.abs());
        current += d;
        arg.push(current);
    }
    let closing = fold(u[0].arg() - u[u.len() - 1].arg());
    max_jump = max_jump.max(closing.abs());
    let winding = current + closing - arg[0];
    Ok(ContourSamples {
        nodes,
        u,
        arg,
        max_jump,
        winding,
    })
}

/// `-(1/pi)` times the winding of `arg U`, doubling the grid while any node
/// to node jump exceeds `pi/2`.
pub fn index_chi(spec: &ContourSpec, p: &SystemParams, dp: &DerivedParams, x0: f64, r: u8) -> Result<(i64, ContourSamples, ContourSpec)> {
    let mut spec = *spec;
    loop {
        let samples = sample_contour(&spec, p, dp, x0, r)?;
        if samples.max_jump <= MAX_ARG_JUMP || spec.node_count >= MAX_NODES {
            if samples.max_jump > MAX_ARG_JUMP {
                return Err(Error::InvalidContour(format!(
                    "argument of U still jumps by {} at {} nodes",
                    samples.max_jump, spec.node_count
                )));
            }
            let chi = (-samples.winding / PI).round() as i64;
            return Ok((chi, samples, spec));
        }
        spec = ContourSpec::new(spec.radius, spec.node_count * 2)?;
    }
}

impl BvpSolution {
    pub fn solve(params: &SystemParams) -> Result<Self> {
        Self::solve_with_nodes(params, DEFAULT_NODES)
    }

    /// Solve for parameters already in the oriented labelling
    /// (`alpha * lambda1 < mu * mu1`); see [`crate::model::normalize_orientation`].
    pub fn solve_with_nodes(params: &SystemParams, node_count: usize) -> Result<Self> {
        params.validate()?;
        check_stability(params).require_stable()?;
        let dp = derive(params);
        if dp.hat_lambda1 >= dp.hat_mu1 {
            return Err(Error::MisOriented {
                hat_lambda1: dp.hat_lambda1,
                hat_mu1: dp.hat_mu1,
            });
        }
        let x0 = compute_x0(params);
        let r = compute_r(params, &dp, x0);
        if r == 1 && (x0 - dp.contour_radius).abs() <= 1e-9 * dp.contour_radius {
            return Err(Error::ZeroOnContour {
                x0,
                radius: dp.contour_radius,
            });
        }
        let spec = ContourSpec::new(dp.contour_radius, resolved_node_count(&dp, node_count)?)?;
        let (chi, samples, spec) = index_chi(&spec, params, &dp, x0, r)?;
        if chi != 0 {
            return Err(Error::NonZeroIndex { chi });
        }
        let n = spec.node_count as f64;
        let log_j: Vec<Complex64> = samples.arg.iter().map(|&a| Complex64::new(0.0, -2.0 * a)).collect();
        let weights = samples
            .nodes
            .iter()
            .zip(&log_j)
            .map(|(&z, &lj)| lj * z / (n * (z - 1.0)))
            .collect();
        let base = params.total_arrival() / params.mu;
        Ok(Self {
            params: *params,
            dp,
            x0,
            r,
            chi,
            contour: spec,
            nodes: samples.nodes,
            log_j,
            h10: 1.0 - base * (1.0 + params.lambda2 / params.mu2),
            h01: 1.0 - base * (1.0 + params.lambda1 / params.mu1),
            weights,
            series: OnceLock::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.contour.node_count
    }

    fn pole_factor(&self, x: Complex64) -> Complex64 {
        if self.r == 1 {
            (1.0 - self.x0) / (x - self.x0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    }

    // (1/2 pi i) closed integral of log J (x-1)/((z-x)(z-1)) dz
    fn log_integral(&self, x: Complex64) -> Complex64 {
        let sum: Complex64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w / (z - x))
            .sum();
        (x - 1.0) * sum
    }

    /// `H0(x, 0)` for `|x|` below the contour radius.
    pub fn h0_x0(&self, x: Complex64) -> Result<Complex64> {
        if !(x.norm() < self.dp.contour_radius) {
            return Err(Error::OutOfDomain { what: "H0(x, 0)", value: x });
        }
        Ok(self.pole_factor(x) * self.h10 * self.log_integral(x).exp())
    }

    /// The constant `D` in `H0(x, 0) = D (x - x0)^-r exp(int log J / (z - x))`.
    pub fn d_constant(&self) -> Complex64 {
        let n = self.nodes.len() as f64;
        let sum: Complex64 = self
            .nodes
            .iter()
            .zip(&self.log_j)
            .map(|(&z, &lj)| lj * z / (z - 1.0))
            .sum::<Complex64>()
            / n;
        let lead = if self.r == 1 { 1.0 - self.x0 } else { 1.0 };
        lead * self.h10 * (-sum).exp()
    }

    /// `H0(x, 0)` written through [`Self::d_constant`].
    pub fn h0_x0_via_d(&self, x: Complex64) -> Complex64 {
        let n = self.nodes.len() as f64;
        let sum: Complex64 = self
            .nodes
            .iter()
            .zip(&self.log_j)
            .map(|(&z, &lj)| lj * z / (z - x))
            .sum::<Complex64>()
            / n;
        let pole = if self.r == 1 { 1.0 / (x - self.x0) } else { Complex64::new(1.0, 0.0) };
        self.d_constant() * pole * sum.exp()
    }

    /// `d H0(x, 0) / dx` at `x = 1`.
    pub fn dh10(&self) -> f64 {
        let sum: Complex64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w / (z - 1.0))
            .sum();
        let pole = if self.r == 1 { 1.0 / (self.x0 - 1.0) } else { 0.0 };
        self.h10 * (pole + sum.re)
    }

    /// `V(t) = -A(k(t),t)/B(k(t),t) H0(k(t), 0)`: boundary values of
    /// `H0(0, y)` on the unit circle.
    pub fn v_of(&self, t: Complex64) -> Result<Complex64> {
        let p = &self.params;
        let dp = &self.dp;
        let near = (t - 1.0).norm();
        if near < V_NEAR_ONE {
            let (lim0, lim1) = ratio_ab_limits_at_1(p, dp)?;
            let (kp, _) = k_derivatives_at_1(dp);
            let s = t - 1.0;
            return Ok(-(lim0 + lim1 * s) * (self.h10 + self.dh10() * kp * s));
        }
        let k = branch_k(t, dp);
        let b = coeff_b(k, t, p);
        if b.norm() < 1e-14 * dp.scale() {
            return Err(Error::VanishingOnContour {
                what: "B(k(t), t)",
                at: t,
                modulus: b.norm(),
            });
        }
        Ok(-coeff_a(k, t, p) / b * self.h0_x0(k)?)
    }

    fn unit_nodes(&self) -> Vec<Complex64> {
        ContourSpec::new(1.0, self.node_count())
            .expect("validated node count")
            .nodes()
    }

    fn v_samples(&self) -> Result<Vec<Complex64>> {
        self.unit_nodes().into_iter().map(|t| self.v_of(t)).collect()
    }

    fn build_series(&self) -> Result<Vec<Complex64>> {
        let m = self.node_count();
        let mut buf = self.v_samples()?;
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let keep = m / 2;
        Ok(buf
            .into_iter()
            .take(keep)
            .enumerate()
            .map(|(n, c)| c * Complex64::from_polar(1.0 / m as f64, -PI * n as f64 / m as f64))
            .collect())
    }

    /// Taylor coefficients of `H0(0, y)` at 0, i.e. `P(Q1 = 0, Q2 = n, L = 0)`.
    pub fn series_0y(&self) -> Result<&[Complex64]> {
        if let Some(s) = self.series.get() {
            return Ok(s);
        }
        let built = self.build_series()?;
        Ok(self.series.get_or_init(|| built))
    }

    /// `H0(0, y)` for `|y| <= 1`.
    pub fn h0_0y(&self, y: Complex64) -> Result<Complex64> {
        if y.norm() > 1.0 + 1e-12 {
            return Err(Error::OutOfDomain { what: "H0(0, y)", value: y });
        }
        if y == Complex64::new(1.0, 0.0) {
            return Ok(Complex64::new(self.h01, 0.0));
        }
        let coeffs = self.series_0y()?;
        // Horner
        Ok(coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * y + c))
    }

    /// `H0(0, y)` from the Cauchy integral evaluated directly, `|y| < 1`.
    pub fn h0_0y_cauchy(&self, y: Complex64) -> Result<Complex64> {
        if !(y.norm() < 1.0) {
            return Err(Error::OutOfDomain { what: "H0(0, y)", value: y });
        }
        let nodes = self.unit_nodes();
        let m = nodes.len() as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for t in nodes {
            acc += self.v_of(t)? * t / (t - y);
        }
        Ok(acc / m)
    }

    /// `H0(0, y)` for `|y| = 1` straight from the kernel relation.
    pub fn h0_0y_boundary(&self, y: Complex64) -> Result<Complex64> {
        if (y.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::OutOfDomain { what: "boundary H0(0, y)", value: y });
        }
        if (y - 1.0).norm() < 1e-12 {
            return Ok(Complex64::new(self.h01, 0.0));
        }
        self.v_of(y)
    }

    /// Derivatives of `H0(0, y)` at `y = 1` up to order `N - 1`, from the
    /// series.
    pub fn h0_0y_derivatives_at_1<const N: usize>(&self) -> Result<[f64; N]> {
        let coeffs = self.series_0y()?;
        let mut out = [0.0; N];
        for (n, c) in coeffs.iter().enumerate() {
            let mut falling = 1.0;
            for (order, slot) in out.iter_mut().enumerate() {
                if order > 0 {
                    falling *= n as f64 - (order as f64 - 1.0);
                }
                if falling == 0.0 {
                    break;
                }
                *slot += falling * c.re;
            }
        }
        Ok(out)
    }

    fn h0_direct(&self, x: Complex64, y: Complex64) -> Result<Complex64> {
        let p = &self.params;
        let r = kernel_r(x, y, &self.dp);
        Ok((coeff_a(x, y, p) * self.h0_x0(x)? + coeff_b(x, y, p) * self.h0_0y(y)?) / r)
    }

    /// `(H0(x, y), H1(x, y))` for `|x|, |y| <= 1`.
    pub fn h_full(&self, x: Complex64, y: Complex64) -> Result<(Complex64, Complex64)> {
        let p = &self.params;
        let dp = &self.dp;
        let one = Complex64::new(1.0, 0.0);
        if x.norm() > 1.0 + 1e-12 {
            return Err(Error::OutOfDomain { what: "H(x, y)", value: x });
        }
        if y.norm() > 1.0 + 1e-12 {
            return Err(Error::OutOfDomain { what: "H(x, y)", value: y });
        }
        let hx0 = self.h0_x0(x)?;
        let h0y = self.h0_0y(y)?;
        let h0 = if y == one {
            // A and B share the factor (1 - x) on this line
            (p.lambda1 * p.mu2 * x * hx0 + (p.lambda1 * x - p.mu) * p.mu1 * self.h01)
                / (dp.hat_lambda1 * x - dp.hat_mu1)
        } else if x == one {
            ((p.lambda2 * y - p.mu) * p.mu2 * self.h10 + p.lambda2 * p.mu1 * y * h0y)
                / (dp.hat_lambda2 * y - dp.hat_mu2)
        } else if kernel_r(x, y, dp).norm() >= KERNEL_ZERO_TOL * dp.scale() {
            self.h0_direct(x, y)?
        } else {
            // removable singularity: H0(., y) is analytic, so use its mean
            // over a small circle around x
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..MEAN_VALUE_POINTS {
                let theta = 2.0 * PI * (j as f64 + 0.5) / MEAN_VALUE_POINTS as f64;
                let xs = x + Complex64::from_polar(MEAN_VALUE_RADIUS, theta);
                let rs = kernel_r(xs, y, dp).norm();
                if rs < KERNEL_ZERO_TOL * dp.scale() {
                    return Err(Error::KernelZero { x, y, distance: rs });
                }
                acc += self.h0_direct(xs, y)?;
            }
            acc / MEAN_VALUE_POINTS as f64
        };
        let h1 = (dp.alpha * h0 - p.mu2 * hx0 - p.mu1 * h0y) / p.mu;
        Ok((h0, h1))
    }

    /// `P(Q1 = m, Q2 = n, L = k)` for `m, n < grid`, read off a 2D FFT of
    /// `H_k` on the torus `|x| = |y| = radius`.
    pub fn probabilities(&self, grid: usize, radius: f64) -> Result<[Vec<Vec<f64>>; 2]> {
        if grid < 2 || !(radius > 0.0 && radius < 1.0) {
            return Err(Error::InvalidContour(format!("torus grid {grid}, radius {radius}")));
        }
        let mut planes = [
            vec![Complex64::new(0.0, 0.0); grid * grid],
            vec![Complex64::new(0.0, 0.0); grid * grid],
        ];
        for a in 0..grid {
            let x = Complex64::from_polar(radius, 2.0 * PI * a as f64 / grid as f64);
            for b in 0..grid {
                let y = Complex64::from_polar(radius, 2.0 * PI * b as f64 / grid as f64);
                let (h0, h1) = self.h_full(x, y)?;
                planes[0][a * grid + b] = h0;
                planes[1][a * grid + b] = h1;
            }
        }
        let fft = FftPlanner::new().plan_fft_forward(grid);
        let mut column = vec![Complex64::new(0.0, 0.0); grid];
        let norm = (grid * grid) as f64;
        let mut out = [vec![vec![0.0; grid]; grid], vec![vec![0.0; grid]; grid]];
        for (plane, dest) in planes.iter_mut().zip(out.iter_mut()) {
            for row in plane.chunks_mut(grid) {
                fft.process(row);
            }
            for b in 0..grid {
                for a in 0..grid {
                    column[a] = plane[a * grid + b];
                }
                fft.process(&mut column);
                for a in 0..grid {
                    plane[a * grid + b] = column[a];
                }
            }
            for m in 0..grid {
                for n in 0..grid {
                    dest[m][n] = plane[m * grid + n].re / (norm * radius.powi((m + n) as i32));
                }
            }
        }
        Ok(out)
    }

    /// Largest `|A H0(x,0) + B H0(0,y)| / |B|` over points `y = h(x)` with
    /// `x` on a circle just inside the contour. The two boundary functions
    /// come from independent representations, so this measures how well
    /// they continue each other.
    pub fn continuation_residual(&self, samples: usize) -> Result<f64> {
        let p = &self.params;
        let radius = 0.98 * self.dp.contour_radius;
        let mut worst = 0.0f64;
        for j in 0..samples {
            let theta = 2.0 * PI * (j as f64 + 0.37) / samples as f64;
            let x = Complex64::from_polar(radius, theta);
            let y = branch_h(x, &self.dp);
            if y.norm() >= 1.0 {
                continue;
            }
            let b = coeff_b(x, y, p);
            let res = coeff_a(x, y, p) * self.h0_x0(x)? + b * self.h0_0y(y)?;
            worst = worst.max(res.norm() / b.norm());
        }
        Ok(worst)
    }
}
