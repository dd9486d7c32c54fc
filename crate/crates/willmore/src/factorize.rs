//! Birkhoff and Iwasawa factorization of twisted loops.
//!
//! Birkhoff: `Φ = F₋·F₊` with `F₋ ∈ Λ⁻_*` (constant term `I`).  The negative
//! coefficients of `G = F₋⁻¹` solve a block-Toeplitz system whose condition
//! number doubles as the big-cell test.
//!
//! Iwasawa: `Φ = F·V₊` with `F` real and `V₊(0) ∈ 𝔅`.  With `W = c(Φ)⁻¹Φ =
//! c(V₊)⁻¹V₊`, the Birkhoff factor `W₊` equals `M·V₊(0)⁻¹V₊` for the middle
//! term `M = conj(V₊(0))⁻¹V₊(0)`, which is split inside `K^C` in closed form.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::lorentz::CVec;
use crate::loopgroup::{max_abs, metric_inverse, CMat, LaurentLoop};

/// Toeplitz condition number above which the loop is outside the big cell.
pub const BIG_CELL_COND: f64 = 1e12;
/// Condition number from which factorizations are flagged as near the boundary.
pub const NEAR_BOUNDARY_COND: f64 = 1e9;
/// Relative tolerance for the middle-term split.
pub const MIDDLE_SPLIT_TOL: f64 = 1e-8;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
pub enum FactorError {
    #[error("outside the big cell (Toeplitz condition number {cond:.3e})")]
    OutsideBigCell { cond: f64 },
    #[error("middle-term split failed: {reason} (residual {residual:.3e})")]
    MiddleSplitFailure { reason: String, residual: f64 },
}

#[derive(Debug, Clone)]
pub struct BirkhoffFactors {
    pub minus: LaurentLoop,
    pub plus: LaurentLoop,
    /// 1-norm condition number of the Toeplitz system (1 when trivial).
    pub cond: f64,
    /// Max coefficient distance between `Φ` and `minus·plus`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct IwasawaFactors {
    pub real: LaurentLoop,
    pub plus_b: LaurentLoop,
    pub cond: f64,
    pub near_boundary: bool,
    /// Max coefficient distance between `Φ` and `real·plus_b`.
    pub residual: f64,
}

/// `Φ = F₋·F₊`.
pub fn birkhoff(phi: &LaurentLoop) -> Result<BirkhoffFactors, FactorError> {
    let n = phi.dim();
    let trunc = phi.truncation();
    let k = (-phi.min_deg()).max(0) as usize;
    if k == 0 {
        check_invertible(&phi.coeff(0))?;
        return Ok(BirkhoffFactors {
            minus: LaurentLoop::identity(n, trunc),
            plus: phi.clone(),
            cond: 1.0,
            residual: 0.0,
        });
    }
    // Unknown X = [g₁ … g_K] with Σ_j g_j Φ_{j−m} = −Φ_{−m}, m = 1..K.
    // Transposed: Tᵗ Xᵗ = Rᵗ with T block (j, m) = Φ_{j−m}.
    let size = n * k;
    let mut tt = CMat::zeros(size, size);
    for j in 1..=k {
        for m in 1..=k {
            if let Some(c) = phi.coeff_ref(j as i32 - m as i32) {
                tt.view_mut(((m - 1) * n, (j - 1) * n), (n, n)).copy_from(&c.transpose());
            }
        }
    }
    let mut rhs = CMat::zeros(size, n);
    for m in 1..=k {
        if let Some(c) = phi.coeff_ref(-(m as i32)) {
            rhs.view_mut(((m - 1) * n, 0), (n, n)).copy_from(&(-c.transpose()));
        }
    }
    let norm_t = one_norm(&tt);
    let lu = tt.lu();
    if !lu.is_invertible() {
        return Err(FactorError::OutsideBigCell { cond: f64::INFINITY });
    }
    let cond = norm_t * inverse_one_norm(&lu);
    if !cond.is_finite() || cond > BIG_CELL_COND {
        return Err(FactorError::OutsideBigCell { cond });
    }
    let sol = lu.solve(&rhs).ok_or(FactorError::OutsideBigCell { cond: f64::INFINITY })?;
    let mut g_terms = vec![(0, CMat::identity(n, n))];
    for j in 1..=k {
        g_terms.push((-(j as i32), sol.view(((j - 1) * n, 0), (n, n)).transpose()));
    }
    let g = LaurentLoop::from_terms(n, &g_terms, trunc);
    let gphi = g.mul_full(phi);
    let plus = gphi.restrict(0, gphi.max_deg().max(0));
    check_invertible(&plus.coeff(0))?;
    let minus = series_inverse_minus(&g, k.max(trunc));
    let residual = minus.mul_full(&plus).coeff_distance(phi);
    Ok(BirkhoffFactors { minus, plus, cond, residual })
}

/// A rank-deficient `F₊(0)` means `Φ` is not a group loop.
fn check_invertible(m: &CMat) -> Result<(), FactorError> {
    let lu = m.clone().lu();
    if !lu.is_invertible() {
        return Err(FactorError::OutsideBigCell { cond: f64::INFINITY });
    }
    let cond = one_norm(m) * inverse_one_norm(&lu);
    if !cond.is_finite() || cond > BIG_CELL_COND {
        return Err(FactorError::OutsideBigCell { cond });
    }
    Ok(())
}

/// Inverse of `G = I + Σ_{j≥1} g_j λ^{−j}` as a power series in `λ⁻¹` up to `degree`.
fn series_inverse_minus(g: &LaurentLoop, degree: usize) -> LaurentLoop {
    let n = g.dim();
    let mut h: Vec<CMat> = vec![CMat::identity(n, n)];
    for m in 1..=degree {
        let mut acc = CMat::zeros(n, n);
        for j in 1..=m {
            if let Some(gj) = g.coeff_ref(-(j as i32)) {
                acc.gemm(-ONE, gj, &h[m - j], ONE);
            }
        }
        h.push(acc);
    }
    let terms: Vec<(i32, CMat)> = h.into_iter().enumerate().map(|(m, c)| (-(m as i32), c)).collect();
    LaurentLoop::from_terms(n, &terms, g.truncation()).trim(1e-15)
}

/// Hager's estimate of `‖A⁻¹‖₁` from an LU factorization.
fn inverse_one_norm(lu: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let n = lu.l().nrows();
    let (l, u, p) = (lu.l(), lu.u(), lu.p());
    // Aᴴ = Uᴴ Lᴴ P.
    let solve_adjoint = |b: &CVec| -> Option<CVec> {
        let y = u.ad_solve_upper_triangular(b)?;
        let mut w = l.ad_solve_lower_triangular(&y)?;
        p.inv_permute_rows(&mut w);
        Some(w)
    };
    let mut x = CVec::from_element(n, Complex64::new(1.0 / n as f64, 0.0));
    let mut est = 0.0;
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else { return f64::INFINITY };
        est = y.iter().map(|z| z.norm()).sum::<f64>();
        let xi = y.map(|z| if z.norm() > 0.0 { z / z.norm() } else { ONE });
        let Some(z) = solve_adjoint(&xi) else { return f64::INFINITY };
        let (j, zmax) = z.iter().enumerate().map(|(j, v)| (j, v.norm())).fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let zx = z.dotc(&x).re;
        if zmax <= zx {
            break;
        }
        x = CVec::zeros(n);
        x[j] = ONE;
    }
    // Higham's alternating-sign lower bound guards against underestimates.
    let alt = CVec::from_fn(n, |i, _| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        Complex64::new(s * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
    });
    if let Some(y) = lu.solve(&alt) {
        let bound = 2.0 * y.iter().map(|z| z.norm()).sum::<f64>() / (3.0 * n as f64);
        est = f64::max(est, bound);
    }
    est
}

fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `Φ = F·V₊` with `F` fixed by the reality involution and `V₊(0) ∈ 𝔅`.
pub fn iwasawa(phi: &LaurentLoop) -> Result<IwasawaFactors, FactorError> {
    let conj = phi.reality_involution();
    let mut f = factor_against(phi, &conj, true)?;
    f.real = f.real.add(&f.real.reality_involution()).scale(Complex64::new(0.5, 0.0));
    f.residual = f.real.mul_full(&f.plus_b).coeff_distance(phi);
    Ok(f)
}

/// Iwasawa-type splitting of `Φ` against an arbitrary holomorphic companion
/// `Φ̌` standing in for `c(Φ)`.
///
/// With `Φ̌ = c(Φ)` this is [`iwasawa`] without the final symmetrization.
/// With `Φ̌` the reflected value at another point it evaluates the
/// complexified frame `F(z, w)` (holomorphic in both arguments).
pub fn factor_against(phi: &LaurentLoop, phi_check: &LaurentLoop, real_case: bool) -> Result<IwasawaFactors, FactorError> {
    let trunc = phi.truncation();
    let w = phi_check.group_inverse().mul_full(phi);
    // End coefficients below rounding level only inflate the Toeplitz system.
    let tol = 1e-18 * w.max_abs();
    let w = w.trim(tol);
    let b = birkhoff(&w)?;
    let m = b.plus.coeff(0);
    let mut v0 = middle_split(&m, real_case)?;
    let m_inv = metric_inverse(&m);
    let lo = phi.min_deg().min(0);
    let hi = phi.max_deg().max(0);
    let span = hi - lo;
    let v_tail = b.plus.left_mul(&m_inv);
    let assemble = |v0: &CMat| {
        let v = v_tail.left_mul(v0).restrict(0, span);
        let real = phi.mul_full(&v.group_inverse()).restrict(lo.min(-hi), hi.max(-lo));
        (v, real)
    };
    let (mut plus_b, mut real) = assemble(&v0);
    // Fix the time orientation with the sign of b₁.
    if real.at_one()[(0, 0)].re < 0.0 {
        for i in 0..2 {
            for j in 0..2 {
                v0[(i, j)] = -v0[(i, j)];
            }
        }
        let r = assemble(&v0);
        plus_b = r.0;
        real = r.1;
    }
    let residual = real.mul_full(&plus_b).coeff_distance(phi);
    let cond = b.cond;
    Ok(IwasawaFactors {
        real: real.with_truncation(trunc),
        plus_b: plus_b.with_truncation(trunc),
        cond,
        near_boundary: cond >= NEAR_BOUNDARY_COND,
        residual,
    })
}

/// Splits `M = conj(b)⁻¹·b` with `b ∈ 𝔅`; returns `b`.
///
/// `SO(1,1,C)`: `M₁ = hyp(2iθ)` and `b₁ = hyp(iθ)`.  `SO(m,C)`: in a Witt
/// basis `U`, `U*M₂U = L·R` with `R = U*b₂U` upper triangular and
/// `diag L = diag R`; an unpivoted LDU factorization yields `R`.
pub fn middle_split(m: &CMat, real_case: bool) -> Result<CMat, FactorError> {
    let dim = m.nrows();
    let scale = max_abs(m).max(1.0);
    let mut off: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            if (i < 2) != (j < 2) {
                off = off.max(m[(i, j)].norm());
            }
        }
    }
    if off > MIDDLE_SPLIT_TOL * scale * 1e2 {
        return Err(FactorError::MiddleSplitFailure { reason: "constant term not in K^C".into(), residual: off });
    }
    // SO(1,1,C) block.
    let e = (m[(0, 0)] + m[(0, 1)] + m[(1, 0)] + m[(1, 1)]) * 0.5;
    if real_case && (e.norm() - 1.0).abs() > 1e-6 {
        return Err(FactorError::MiddleSplitFailure {
            reason: "SO(1,1) middle term is not unitary".into(),
            residual: (e.norm() - 1.0).abs(),
        });
    }
    if e.norm() < 1e-300 {
        return Err(FactorError::MiddleSplitFailure { reason: "degenerate SO(1,1) block".into(), residual: 1.0 });
    }
    let theta = e.ln() / (I * 2.0);
    let (c, s) = (theta.cos(), theta.sin());
    let mut b = CMat::zeros(dim, dim);
    b[(0, 0)] = c;
    b[(1, 1)] = c;
    b[(0, 1)] = I * s;
    b[(1, 0)] = I * s;
    // SO(m,C) block.
    let mm = dim - 2;
    let u = witt_basis(mm);
    let m2 = m.view((2, 2), (mm, mm)).into_owned();
    let mt = u.adjoint() * &m2 * &u;
    let (_, d, r) = ldu(&mt).ok_or_else(|| FactorError::MiddleSplitFailure {
        reason: "vanishing pivot in LDU".into(),
        residual: f64::INFINITY,
    })?;
    for k in 0..mm {
        let dk = d[k];
        if real_case && (dk.re <= 0.0 || dk.im.abs() > 1e-6 * dk.norm()) {
            return Err(FactorError::MiddleSplitFailure {
                reason: "middle term is not positive definite".into(),
                residual: dk.im.abs().max((-dk.re).max(0.0)),
            });
        }
    }
    let mut rr = r;
    for k in 0..mm {
        let sq = d[k].sqrt();
        for j in 0..mm {
            rr[(k, j)] *= sq;
        }
    }
    let b2 = &u * rr * u.adjoint();
    let orth = max_abs(&(b2.transpose() * &b2 - CMat::identity(mm, mm)));
    if orth > MIDDLE_SPLIT_TOL * 1e2 * scale {
        return Err(FactorError::MiddleSplitFailure { reason: "solvable factor is not orthogonal".into(), residual: orth });
    }
    b.view_mut((2, 2), (mm, mm)).copy_from(&b2);
    Ok(b)
}

/// Unitary Witt basis `(v₁ … v_p, [e_m], v̄_p … v̄₁)` with `v_j = (e_{2j} + i e_{2j+1})/√2`.
pub fn witt_basis(m: usize) -> CMat {
    let p = m / 2;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut u = CMat::zeros(m, m);
    for j in 0..p {
        u[(2 * j, j)] = Complex64::new(s, 0.0);
        u[(2 * j + 1, j)] = Complex64::new(0.0, s);
        let col = m - 1 - j;
        u[(2 * j, col)] = Complex64::new(s, 0.0);
        u[(2 * j + 1, col)] = Complex64::new(0.0, -s);
    }
    if m % 2 == 1 {
        u[(m - 1, p)] = ONE;
    }
    u
}

/// Unpivoted `A = L·diag(d)·U` with unit triangular `L`, `U`.
fn ldu(a: &CMat) -> Option<(CMat, Vec<Complex64>, CMat)> {
    let n = a.nrows();
    let mut w = a.clone();
    let mut l = CMat::identity(n, n);
    let scale = max_abs(a).max(1e-300);
    for k in 0..n {
        let p = w[(k, k)];
        if p.norm() <= 1e-13 * scale {
            return None;
        }
        for i in k + 1..n {
            let f = w[(i, k)] / p;
            l[(i, k)] = f;
            for j in k..n {
                let t = w[(k, j)];
                w[(i, j)] -= f * t;
            }
        }
    }
    let d: Vec<Complex64> = (0..n).map(|k| w[(k, k)]).collect();
    let mut u = CMat::identity(n, n);
    for k in 0..n {
        for j in k + 1..n {
            u[(k, j)] = w[(k, j)] / d[k];
        }
    }
    Some((l, d, u))
}

/// Distance of a constant matrix from the solvable set `𝔅`.
pub fn b_membership_residual(v0: &CMat) -> f64 {
    let dim = v0.nrows();
    let mut r: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            if (i < 2) != (j < 2) {
                r = r.max(v0[(i, j)].norm());
            }
        }
    }
    // b₁ = [[cos θ, i sin θ], [i sin θ, cos θ]] with real θ.
    r = r.max((v0[(0, 0)] - v0[(1, 1)]).norm());
    r = r.max((v0[(0, 1)] - v0[(1, 0)]).norm());
    r = r.max(v0[(0, 0)].im.abs()).max(v0[(0, 1)].re.abs());
    r = r.max((v0[(0, 0)].re.powi(2) + v0[(0, 1)].im.powi(2) - 1.0).abs());
    let mm = dim - 2;
    let u = witt_basis(mm);
    let t = u.adjoint() * v0.view((2, 2), (mm, mm)) * &u;
    for i in 0..mm {
        for j in 0..i {
            r = r.max(t[(i, j)].norm());
        }
        r = r.max(t[(i, i)].im.abs());
        if t[(i, i)].re <= 0.0 {
            r = r.max(1.0);
        }
    }
    r
}

/// Real-coefficient view of a loop value at `λ = 1`.
pub fn real_frame_at_one(real: &LaurentLoop) -> (DMatrix<f64>, f64) {
    let m = real.at_one();
    let imag = m.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    (m.map(|z| z.re), imag)
}
