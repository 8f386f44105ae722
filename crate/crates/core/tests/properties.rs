use std::f64::consts::PI;

use num_complex::Complex64;
use orbitq_core::bvp::{compute_r, compute_x0, BvpSolution};
use orbitq_core::kernel::{
    branch_h, branch_k, branch_points, coeff_a, coeff_b, h_pair, k_pair, kernel_r, poly_e_pm,
    Branch, BranchTracker,
};
use orbitq_core::measures::{closed_boundary_values, compute, MeasureOptions};
use orbitq_core::model::{check_stability, derive, loads, normalize_orientation, SystemParams, Verdict};
use proptest::prelude::*;

/// Stable sets with the larger load pinned to `target`, by choice of `mu`.
fn stable_params(target: std::ops::Range<f64>) -> impl Strategy<Value = SystemParams> {
    (0.05f64..2.0, 0.05f64..2.0, 0.3f64..4.0, 0.3f64..4.0, target).prop_map(|(l1, l2, m1, m2, rho)| {
        let lambda = l1 + l2;
        let worst = (lambda * (1.0 + l1 / m1)).max(lambda * (1.0 + l2 / m2));
        SystemParams::new(l1, l2, worst / rho, m1, m2).unwrap()
    })
}

fn oriented(target: std::ops::Range<f64>) -> impl Strategy<Value = SystemParams> {
    stable_params(target).prop_map(|p| normalize_orientation(&p).unwrap().0)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stability_is_swap_symmetric(p in stable_params(0.05..1.5)) {
        let a = check_stability(&p);
        let b = check_stability(&p.swapped());
        prop_assert_eq!(a.rho1, b.rho2);
        prop_assert_eq!(a.rho2, b.rho1);
        prop_assert_eq!(a.verdict, b.verdict);
    }

    #[test]
    fn loads_are_monotone(p in stable_params(0.05..1.5), bump in 1.001f64..1.5) {
        let (r1, r2) = loads(&p);
        let up = |q: SystemParams| loads(&q);
        let (a1, a2) = up(SystemParams { lambda1: p.lambda1 * bump, ..p });
        prop_assert!(a1 > r1 && a2 > r2);
        let (a1, a2) = up(SystemParams { lambda2: p.lambda2 * bump, ..p });
        prop_assert!(a1 > r1 && a2 > r2);
        let (a1, a2) = up(SystemParams { mu: p.mu * bump, ..p });
        prop_assert!(a1 < r1 && a2 < r2);
    }

    #[test]
    fn orientation_satisfies_the_radius_condition(p in stable_params(0.05..0.999)) {
        let (q, swapped) = normalize_orientation(&p).unwrap();
        let dp = derive(&q);
        prop_assert!(dp.hat_lambda1 < dp.hat_mu1);
        prop_assert!(dp.contour_radius > 1.0);
        prop_assert_eq!(swapped, check_stability(&p).swapped);
    }

    #[test]
    fn branch_point_ordering(p in oriented(0.05..0.98)) {
        let bp = branch_points(&derive(&p)).unwrap();
        prop_assert!(0.0 < bp.y1 && bp.y1 < bp.y2 && bp.y2 < 1.0 && 1.0 < bp.y3 && bp.y3 < bp.y4);
        prop_assert!(0.0 < bp.x1 && bp.x1 < bp.x2 && bp.x2 <= 1.0 + 1e-12 && 1.0 < bp.x3 && bp.x3 < bp.x4);
    }

    #[test]
    fn roots_solve_the_kernel(p in oriented(0.05..0.98)) {
        let dp = derive(&p);
        let scale = dp.scale();
        let bp = branch_points(&dp).unwrap();
        let ratio_k = dp.hat_mu1 / dp.hat_lambda1;
        let ratio_h = dp.hat_mu2 / dp.hat_lambda2;
        for j in 0..256 {
            let theta = 2.0 * PI * (j as f64 + 0.5) / 256.0;
            let y = Complex64::from_polar(1.0, theta);
            let pair = k_pair(y, &dp);
            prop_assert!(kernel_r(pair.bounded, y, &dp).norm() < 1e-10 * scale);
            prop_assert!((pair.bounded * pair.companion - ratio_k).norm() < 1e-12 * ratio_k);
            let x = Complex64::from_polar(dp.contour_radius, theta);
            let pair = h_pair(x, &dp);
            prop_assert!(kernel_r(x, pair.bounded, &dp).norm() < 1e-10 * scale);
            prop_assert!((pair.bounded * pair.companion - ratio_h).norm() < 1e-12 * ratio_h);
        }
        for j in 0..=64 {
            let y = c(bp.y1 + (bp.y2 - bp.y1) * j as f64 / 64.0);
            let k = branch_k(y, &dp);
            prop_assert!(kernel_r(k, y, &dp).norm() < 1e-10 * scale);
            prop_assert!((k.norm() - dp.contour_radius).abs() < 1e-6 * dp.contour_radius);
        }
    }

    #[test]
    fn h_maps_the_contour_ends_onto_branch_points(p in oriented(0.05..0.98)) {
        let dp = derive(&p);
        let bp = branch_points(&dp).unwrap();
        prop_assert!((branch_h(c(dp.contour_radius), &dp).re - bp.y2).abs() < 1e-10);
        prop_assert!((branch_h(c(-dp.contour_radius), &dp).re - bp.y1).abs() < 1e-10);
        // the contour stays left of x3
        prop_assert!(poly_e_pm(c(dp.contour_radius), &dp).1.re < 0.0);
    }

    #[test]
    fn a_and_b_do_not_vanish_on_the_cut(p in oriented(0.05..0.98)) {
        let dp = derive(&p);
        let bp = branch_points(&dp).unwrap();
        let mut tracker = BranchTracker::new(Branch::K, dp);
        for j in 0..=64 {
            let y = c(bp.y1 + (bp.y2 - bp.y1) * j as f64 / 64.0);
            let k = tracker.eval(y);
            prop_assert!(coeff_a(k, y, &p).norm() > 1e-12 * dp.scale());
            prop_assert!(coeff_b(k, y, &p).norm() > 1e-12 * dp.scale());
        }
    }

    #[test]
    fn k_is_continuous_on_the_unit_circle(p in oriented(0.05..0.98)) {
        let dp = derive(&p);
        let jump = |n: usize| {
            let pts: Vec<Complex64> = (0..=n)
                .map(|j| branch_k(Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64), &dp))
                .collect();
            pts.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (jump(512), jump(2048));
        prop_assert!(fine < coarse);
        prop_assert!(fine < 0.05);
    }

    #[test]
    fn x0_exceeds_one(p in oriented(0.05..0.98)) {
        let x0 = compute_x0(&p);
        prop_assert!(x0 > 1.0);
        let dp = derive(&p);
        if compute_r(&p, &dp, x0) == 1 {
            let y = branch_h(c(x0), &dp);
            prop_assert!(coeff_a(c(x0), y, &p).norm() < 1e-9 * dp.scale());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn index_vanishes_and_boundary_identities_hold(p in oriented(0.05..0.95)) {
        let sol = BvpSolution::solve(&p).unwrap();
        prop_assert_eq!(sol.chi, 0);
        let (busy, q1, q2) = closed_boundary_values(&p);
        let h10 = sol.h0_x0(c(1.0)).unwrap().re;
        let h01 = sol.h0_0y(c(1.0)).unwrap().re;
        let (_, h1) = sol.h_full(c(1.0), c(1.0)).unwrap();
        prop_assert!((h10 - q2).abs() <= 1e-8 * q2);
        prop_assert!((h01 - q1).abs() <= 1e-8 * q1);
        prop_assert!((h1.re - busy).abs() <= 1e-8 * busy);
        for x in [0.0, 0.5, 0.9] {
            let v = sol.h0_x0(c(x)).unwrap();
            prop_assert!(v.im.abs() < 1e-12);
            prop_assert!(v.re > 0.0 && v.re <= h10 + 1e-12);
        }
    }

    #[test]
    fn measures_are_consistent(p in stable_params(0.05..0.9)) {
        let opts = MeasureOptions { estimate_error: false, ..Default::default() };
        let m = compute(&p, &opts).unwrap();
        prop_assert!(m.eq1 >= 0.0 && m.eq2 >= 0.0);
        prop_assert!(m.p_empty > 0.0 && m.p_empty <= m.p_q1_empty_idle.min(m.p_q2_empty_idle));
        prop_assert!((m.el - m.p_busy).abs() < 1e-8 * m.p_busy);
        prop_assert!(m.dh10 >= 0.0 && m.dh01 >= 0.0);
        let s = compute(&p.swapped(), &opts).unwrap();
        prop_assert_eq!(s.swapped(), m);
        prop_assert_eq!(check_stability(&p).verdict, Verdict::Stable);
    }
}
