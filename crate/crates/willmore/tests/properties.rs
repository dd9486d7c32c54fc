//! Randomized invariants across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use willmore_dpw::analytic::Expr;
use willmore_dpw::factorize::{b_membership_residual, birkhoff, iwasawa, real_frame_at_one};
use willmore_dpw::gen;
use willmore_dpw::geometry::{lawson_vertex, real_expm};
use willmore_dpw::loopgroup::{CMat, LaurentLoop};
use willmore_dpw::lorentz::{frame_residual, inner, project_sphere, LorentzFrame};
use willmore_dpw::potential::{
    build_boundary_potential, circle_frame, classify_constants, sample_points, validate, BjorlingData, EquivariantData,
};

const N: usize = 12;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cmat(r: &mut ChaCha8Rng, dim: usize) -> CMat {
    CMat::from_fn(dim, dim, |_, _| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
}

/// Random element of `so(1,4)` scaled by `s`.
fn lorentz_generator(r: &mut ChaCha8Rng, s: f64) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(5, 5);
    for i in 0..5 {
        for j in i + 1..5 {
            let a = r.gen_range(-s..s);
            x[(i, j)] = a;
            x[(j, i)] = if i == 0 { a } else { -a };
        }
    }
    x
}

fn loop_of_degrees(r: &mut ChaCha8Rng, lo: i32, hi: i32) -> LaurentLoop {
    let terms: Vec<(i32, CMat)> = (lo..=hi).map(|d| (d, cmat(r, 5) * Complex64::new(0.5, 0.0))).collect();
    LaurentLoop::from_terms(5, &terms, N)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inner_is_symmetric_and_bilinear(seed in any::<u64>(), s in -5.0f64..5.0) {
        let mut r = rng(seed);
        let mut v = || DVector::from_fn(5, |_, _| r.gen_range(-3.0..3.0));
        let (a, b, cc) = (v(), v(), v());
        let ab = inner(&a, &b).unwrap();
        prop_assert_eq!(ab, inner(&b, &a).unwrap());
        let lhs = inner(&(&a * s + &cc), &b).unwrap();
        let rhs = s * ab + inner(&cc, &b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn accepted_frames_are_orthonormal(seed in any::<u64>(), eps in prop_oneof![Just(0.0), 1e-13f64..1e-8]) {
        let mut r = rng(seed);
        let g = real_expm(&lorentz_generator(&mut r, 1.0), 1.0);
        let noisy = g.map(|x| x + eps * r.gen_range(-1.0..1.0));
        if LorentzFrame::new(noisy.clone()).is_ok() {
            prop_assert!(frame_residual(&noisy).0 < 1e-10);
        }
        prop_assert!(LorentzFrame::new(g).is_ok());
    }

    #[test]
    fn sphere_projection_ignores_positive_scale(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let mut r = rng(seed);
        let x: DVector<f64> = DVector::from_fn(4, |_, _| r.gen_range(-1.0..1.0));
        let x = &x / x.norm();
        let y = DVector::from_iterator(5, std::iter::once(1.0).chain(x.iter().copied()));
        let a = project_sphere(&y).unwrap();
        let b = project_sphere(&(&y * scale)).unwrap();
        prop_assert!((a - b).amax() < 1e-14);
    }

    #[test]
    fn multiplication_is_associative_within_truncation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b, cc) = (loop_of_degrees(&mut r, -2, 2), loop_of_degrees(&mut r, -1, 2), loop_of_degrees(&mut r, -2, 1));
        let left = a.multiply(&b).value.multiply(&cc).value;
        let right = a.multiply(&b.multiply(&cc).value).value;
        prop_assert!(left.coeff_distance(&right) < 1e-12 * (1.0 + left.max_abs()));
    }

    #[test]
    fn reality_involution_is_an_involution(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = loop_of_degrees(&mut r, -3, 4);
        prop_assert_eq!(a.reality_involution().reality_involution(), a);
    }

    #[test]
    fn twisting_survives_products_and_inverses(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut u = || r.gen::<f64>();
        let m = gen::minus_loop(&mut u, 1, N);
        let p = gen::plus_loop(&mut u, 1, N);
        let x = gen::real_loop(&mut u, 1, N, 0.3);
        let mp = m.multiply(&p).value;
        prop_assert!(mp.multiply(&x).value.twisting_residual() < 1e-10);
        // Products of nilpotent exponentials have polynomial inverses.
        let inv = mp.invert().unwrap().value;
        prop_assert!(inv.twisting_residual() < 1e-10);
    }

    #[test]
    fn bracket_of_odd_elements_has_even_parity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut u = || r.gen::<f64>();
        let a = LaurentLoop::from_terms(5, &[(-1, gen::generic_p(&mut u, 1, 1.0)), (1, gen::generic_p(&mut u, 1, 1.0))], N);
        let b = LaurentLoop::from_terms(5, &[(1, gen::generic_p(&mut u, 1, 1.0)), (3, gen::generic_p(&mut u, 1, 1.0))], N);
        let br = a.bracket(&b);
        prop_assert!(br.terms().filter(|(d, _)| d % 2 != 0).all(|(_, m)| m.iter().all(|z| z.norm() == 0.0)));
        prop_assert!(br.twisting_residual() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn birkhoff_reconstructs_on_the_circle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut u = || r.gen::<f64>();
        let phi = gen::minus_loop(&mut u, 1, N).mul_full(&gen::plus_loop(&mut u, 1, N));
        let f = birkhoff(&phi).unwrap();
        prop_assert!(f.minus.mul_full(&f.plus).sup_distance_on_circle(&phi, 32) < 1e-9);
        prop_assert!(f.minus.twisting_residual() < 1e-10 && f.plus.twisting_residual() < 1e-10);
    }

    #[test]
    fn iwasawa_real_factor_is_a_positive_frame(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut u = || r.gen::<f64>();
        let phi = gen::real_loop(&mut u, 1, N, 0.3).mul_full(&gen::plus_b_loop(&mut u, 1, N));
        let f = iwasawa(&phi).unwrap();
        let (m, imag) = real_frame_at_one(&f.real);
        prop_assert!(imag < 1e-10);
        prop_assert!(LorentzFrame::new(m).is_ok());
        prop_assert!(b_membership_residual(&f.plus_b.coeff(0)) < 1e-10);
        prop_assert!(f.real.twisting_residual() < 1e-10 && f.plus_b.twisting_residual() < 1e-10);
    }

    #[test]
    fn iwasawa_is_idempotent_on_real_loops(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut u = || r.gen::<f64>();
        let x = gen::real_loop(&mut u, 1, N, 0.3);
        let f = iwasawa(&x).unwrap();
        prop_assert!(f.real.coeff_distance(&x) < 1e-9);
        prop_assert!(f.plus_b.coeff_distance(&LaurentLoop::identity(5, N)) < 1e-9);
    }

    #[test]
    fn constant_builders_are_twisted_algebra_elements(seed in any::<u64>(), with_gamma in any::<bool>()) {
        let mut r = rng(seed);
        let mut z = || Expr::constant(c(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)));
        let mut d = BjorlingData::new(z(), z(), z());
        if with_gamma {
            d = d.with_gamma(vec![z()]);
        }
        let p = build_boundary_potential(&d).unwrap();
        let (tw, alg) = p.membership_residuals(&sample_points(c(0.0, 0.0), 0.5, 20)).unwrap();
        prop_assert!(tw < 1e-12 && alg < 1e-12);
        if !with_gamma {
            prop_assert!(validate(&p).unwrap().isotropic_residual < 1e-12);
        }
    }

    #[test]
    fn minimality_class_ignores_positive_rescaling(seed in any::<u64>(), s in 0.1f64..10.0, zeros in 0u8..8) {
        let mut r = rng(seed);
        let mut x = || r.gen_range(-2.0..2.0);
        let mut d = EquivariantData::from_array([x(), x(), x(), x(), x(), x()]);
        if zeros & 1 != 0 { d.mu1 = 0.0; }
        if zeros & 2 != 0 { d.rho1 = 0.0; }
        if zeros & 4 != 0 { d.rho2 = 0.0; }
        let mut scaled = d;
        scaled.mu1 *= s;
        scaled.rho1 *= s;
        scaled.rho2 *= s;
        prop_assert_eq!(classify_constants(&d), classify_constants(&scaled));
    }

    #[test]
    fn lawson_curve_carries_the_circle_frame(rate in 0.2f64..4.0, u in -3.0f64..3.0) {
        let v = lawson_vertex(rate, u, 0.0);
        let want = circle_frame(u, rate * u + std::f64::consts::PI);
        prop_assert!((v.frame() - want).amax() < 1e-12);
    }
}
