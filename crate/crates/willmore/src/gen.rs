//! Structured random elements of the twisted loop group, driven by a
//! caller-supplied uniform source on `[0, 1)`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::loopgroup::{exp_loop, expm, CMat, LaurentLoop};

pub type Uniform<'a> = &'a mut dyn FnMut() -> f64;

fn sym(rnd: Uniform) -> f64 {
    2.0 * rnd() - 1.0
}

fn csym(rnd: Uniform) -> Complex64 {
    Complex64::new(sym(rnd), sym(rnd))
}

/// Random isotropic vector `b ∈ C^m` (`bᵗb = 0`).
pub fn isotropic_vector(rnd: Uniform, m: usize) -> DVector<Complex64> {
    let x = DVector::from_fn(m, |_, _| sym(rnd));
    let mut y = DVector::from_fn(m, |_, _| sym(rnd));
    y -= &x * (x.dot(&y) / x.norm_squared());
    y *= x.norm() / y.norm();
    let s = csym(rnd);
    DVector::from_fn(m, |i, _| s * Complex64::new(x[i], y[i]))
}

/// `[[0, B], [−BᵗI₁,₁, 0]]` for a `2 × m` block `B`.
pub fn p_element(b: &CMat) -> CMat {
    let m = b.ncols();
    let dim = m + 2;
    let mut x = CMat::zeros(dim, dim);
    x.view_mut((0, 2), (2, m)).copy_from(b);
    for j in 0..m {
        // −Bᵗ I₁,₁: column 0 picks up +b₀ⱼ, column 1 −b₁ⱼ.
        x[(2 + j, 0)] = b[(0, j)];
        x[(2 + j, 1)] = -b[(1, j)];
    }
    x
}

/// Random isotropic `𝔭` element: `B = (αb, βb)ᵗ` with `bᵗb = 0`, so `X³ = 0`.
pub fn isotropic_p(rnd: Uniform, n: usize, scale: f64) -> CMat {
    let m = n + 2;
    let b = isotropic_vector(rnd, m);
    let (a, c) = (csym(rnd) * scale, csym(rnd) * scale);
    let bb = CMat::from_fn(2, m, |i, j| if i == 0 { a * b[j] } else { c * b[j] });
    p_element(&bb)
}

/// Random `𝔭` element with arbitrary complex `B`.
pub fn generic_p(rnd: Uniform, n: usize, scale: f64) -> CMat {
    let m = n + 2;
    let bb = CMat::from_fn(2, m, |_, _| csym(rnd) * scale);
    p_element(&bb)
}

/// Random nilpotent `𝔨` element `a bᵗ − b aᵗ` in the `SO(m)` block (`X³ = 0`).
pub fn nilpotent_k(rnd: Uniform, n: usize, scale: f64) -> CMat {
    let m = n + 2;
    let b = isotropic_vector(rnd, m);
    let mut a = DVector::from_fn(m, |_, _| csym(rnd));
    // Make aᵗb = 0 by removing the component along b̄ (b̄ᵗb = |b|²).
    let bc = b.map(|z| z.conj());
    let t = a.dot(&b) / bc.dot(&b);
    a -= &bc * t;
    let x = (&a * b.transpose() - &b * a.transpose()) * Complex64::new(scale, 0.0);
    let mut out = CMat::zeros(m + 2, m + 2);
    out.view_mut((2, 2), (m, m)).copy_from(&x);
    out
}

/// Random element of `K^C = SO(1,1,C) × SO(m,C)` near the identity.
pub fn complex_k(rnd: Uniform, n: usize, scale: f64) -> CMat {
    let dim = n + 4;
    let mut x = CMat::zeros(dim, dim);
    let w = csym(rnd) * scale;
    x[(0, 1)] = w;
    x[(1, 0)] = w;
    for i in 2..dim {
        for j in i + 1..dim {
            let z = csym(rnd) * scale;
            x[(i, j)] = z;
            x[(j, i)] = -z;
        }
    }
    expm(&x)
}

/// Random real `𝔨` element of `so(1,1) ⊕ so(m)`.
pub fn real_k(rnd: Uniform, n: usize, scale: f64) -> CMat {
    let dim = n + 4;
    let mut x = CMat::zeros(dim, dim);
    let w = Complex64::new(sym(rnd) * scale, 0.0);
    x[(0, 1)] = w;
    x[(1, 0)] = w;
    for i in 2..dim {
        for j in i + 1..dim {
            let z = Complex64::new(sym(rnd) * scale, 0.0);
            x[(i, j)] = z;
            x[(j, i)] = -z;
        }
    }
    x
}

/// `exp(λ^d X)` for `X³ = 0`: the polynomial `I + λ^d X + λ^{2d} X²/2`.
pub fn nilpotent_exp(d: i32, x: &CMat, trunc: usize) -> LaurentLoop {
    let dim = x.nrows();
    let x2 = x * x * Complex64::new(0.5, 0.0);
    LaurentLoop::from_terms(dim, &[(0, CMat::identity(dim, dim)), (d, x.clone()), (2 * d, x2)], trunc)
}

/// Random `Λ⁻_*` group loop of degree ≤ 4: either two degree-2 odd factors
/// or a single even factor `exp(λ⁻²N)`.
pub fn minus_loop(rnd: Uniform, n: usize, trunc: usize) -> LaurentLoop {
    if rnd() < 0.7 {
        let a = nilpotent_exp(-1, &isotropic_p(rnd, n, 0.6), trunc);
        let b = nilpotent_exp(-1, &isotropic_p(rnd, n, 0.6), trunc);
        a.mul_full(&b).trim(0.0)
    } else {
        nilpotent_exp(-2, &nilpotent_k(rnd, n, 0.4), trunc).trim(0.0)
    }
}

/// Random `Λ⁺` group loop of degree ≤ 4 with a random `K^C` constant.
pub fn plus_loop(rnd: Uniform, n: usize, trunc: usize) -> LaurentLoop {
    let k = complex_k(rnd, n, 0.5);
    let a = nilpotent_exp(1, &isotropic_p(rnd, n, 0.6), trunc);
    let b = nilpotent_exp(1, &isotropic_p(rnd, n, 0.6), trunc);
    a.mul_full(&b).left_mul(&k).trim(0.0)
}

/// Random element of the solvable set `𝔅` (n = 1 block layout; for larger
/// `n` only the diagonal torus part of the `SO(m)` block is randomized).
pub fn solvable_b(rnd: Uniform, n: usize) -> CMat {
    let dim = n + 4;
    let m = n + 2;
    let th = sym(rnd);
    let mut b = CMat::zeros(dim, dim);
    let (c, s) = (th.cos(), th.sin());
    b[(0, 0)] = Complex64::new(c, 0.0);
    b[(1, 1)] = Complex64::new(c, 0.0);
    b[(0, 1)] = Complex64::new(0.0, s);
    b[(1, 0)] = Complex64::new(0.0, s);
    let i = Complex64::new(0.0, 1.0);
    let mut l = CMat::zeros(m, m);
    l[(1, 0)] = i * sym(rnd) * 0.6;
    l[(0, 1)] = -l[(1, 0)];
    let mut g = expm(&l);
    if m % 2 == 1 {
        let mut v = DVector::from_element(m, Complex64::new(0.0, 0.0));
        v[0] = Complex64::new(1.0, 0.0);
        v[1] = i;
        let mut e = DVector::from_element(m, Complex64::new(0.0, 0.0));
        e[m - 1] = Complex64::new(1.0, 0.0);
        let xp = (&v * e.transpose() - &e * v.transpose()) * (csym(rnd) * 0.5);
        g *= expm(&xp);
    }
    b.view_mut((2, 2), (m, m)).copy_from(&g);
    b
}

/// Random `Λ⁺_𝔅` loop: `b · exp(λP₁) · exp(λP₂)` with isotropic `P`s.
pub fn plus_b_loop(rnd: Uniform, n: usize, trunc: usize) -> LaurentLoop {
    let b = solvable_b(rnd, n);
    let a = nilpotent_exp(1, &isotropic_p(rnd, n, 0.5), trunc);
    let c = nilpotent_exp(1, &isotropic_p(rnd, n, 0.5), trunc);
    a.mul_full(&c).left_mul(&b).trim(0.0)
}

/// Random real twisted loop `exp(λ⁻¹P + K + λ·conj(P))`, truncated at `trunc`.
pub fn real_loop(rnd: Uniform, n: usize, trunc: usize, scale: f64) -> LaurentLoop {
    let p = generic_p(rnd, n, scale);
    let k = real_k(rnd, n, 1.0);
    let pc = p.map(|z| z.conj());
    let x = LaurentLoop::from_terms(n + 4, &[(-1, p), (0, k), (1, pc)], trunc);
    let e = exp_loop(&x).value;
    // Remove the rounding asymmetry so the loop is exactly c-fixed.
    e.add(&e.reality_involution()).scale(Complex64::new(0.5, 0.0)).trim(1e-18)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loopgroup::MembershipKind;

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    #[test]
    fn generated_loops_are_twisted_group_elements() {
        let mut r = lcg(7);
        for _ in 0..5 {
            for l in [minus_loop(&mut r, 1, 12), plus_loop(&mut r, 1, 12), plus_b_loop(&mut r, 1, 12), real_loop(&mut r, 1, 12, 0.3)] {
                let rep = l.check_membership(MembershipKind::Group);
                assert!(rep.orthogonality.unwrap() < 1e-11, "{rep:?}");
                assert!(rep.twisting < 1e-14, "{rep:?}");
            }
        }
    }

    #[test]
    fn degrees_of_polynomial_factors() {
        let mut r = lcg(3);
        let m = minus_loop(&mut r, 1, 12);
        assert!(m.min_deg() >= -4 && m.max_deg() == 0);
        let p = plus_loop(&mut r, 1, 12);
        assert!(p.min_deg() == 0 && p.max_deg() <= 4);
    }
}
