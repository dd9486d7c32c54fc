//! Truncated Laurent loops in the twisted loop group of SO(1, n+3, C).
//!
//! A loop is stored as a dense run of matrix coefficients from `min_deg`
//! upward.  Products are truncated to `|d| ≤ N` and the discarded mass is
//! returned alongside the result.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::lorentz::metric_c;

pub type CMat = DMatrix<Complex64>;

/// Default truncation degree.
pub const DEFAULT_TRUNCATION: usize = 12;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoopError {
    #[error("evaluation at λ = 0 of a loop with negative degrees")]
    PoleAtZero,
    #[error("loop inverse residual {0:.3e} exceeds threshold")]
    IllConditioned(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaurentLoop {
    dim: usize,
    min_deg: i32,
    coeffs: Vec<CMat>,
    trunc: usize,
}

/// A loop together with the mass discarded by truncation.
#[derive(Debug, Clone)]
pub struct Truncated {
    pub value: LaurentLoop,
    pub tail: f64,
}

/// Result of [`LaurentLoop::invert`].
#[derive(Debug, Clone)]
pub struct Inverse {
    pub value: LaurentLoop,
    pub residual: f64,
}

/// Membership diagnostics; `None` where a check does not apply.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MembershipReport {
    /// `max ‖X(λ)ᵗ I X(λ) − I‖` over the unit-circle grid.
    pub orthogonality: Option<f64>,
    /// `max ‖XᵗI + IX‖` over coefficients.
    pub algebra: Option<f64>,
    /// Off-diagonal block mass of even coefficients.
    pub k_parity: f64,
    /// Diagonal block mass of odd coefficients.
    pub p_parity: f64,
    /// `max(k_parity, p_parity)`.
    pub twisting: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipKind {
    Group,
    Algebra,
}

/// Sum of the absolute values of the entries.
pub(crate) fn l1(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).sum()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Entry mass in the diagonal blocks (`𝔨` shape) of a matrix.
pub fn k_block_mass(m: &CMat) -> f64 {
    let mut s: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if (i < 2) == (j < 2) {
                s = s.max(m[(i, j)].norm());
            }
        }
    }
    s
}

/// Entry mass in the off-diagonal blocks (`𝔭` shape) of a matrix.
pub fn p_block_mass(m: &CMat) -> f64 {
    let mut s: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if (i < 2) != (j < 2) {
                s = s.max(m[(i, j)].norm());
            }
        }
    }
    s
}

/// `‖XᵗI + IX‖∞`.
pub fn so_residual(m: &CMat) -> f64 {
    let i = metric_c(m.nrows());
    max_abs(&(m.transpose() * &i + &i * m))
}

/// `I·Xᵗ·I`, the inverse of a complex Lorentz matrix.
pub fn metric_inverse(m: &CMat) -> CMat {
    let mut t = m.transpose();
    let n = t.nrows();
    for j in 1..n {
        t[(0, j)] = -t[(0, j)];
        t[(j, 0)] = -t[(j, 0)];
    }
    t
}

/// Unit-circle sample points `e^{2πik/count}`.
pub fn circle_points(count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / count as f64))
        .collect()
}

impl LaurentLoop {
    pub fn new(min_deg: i32, coeffs: Vec<CMat>, trunc: usize) -> Self {
        assert!(!coeffs.is_empty(), "a loop needs at least one coefficient");
        let dim = coeffs[0].nrows();
        for c in &coeffs {
            assert!(c.nrows() == dim && c.ncols() == dim, "coefficients must be square of equal size");
        }
        Self { dim, min_deg, coeffs, trunc }
    }

    pub fn zero(dim: usize, trunc: usize) -> Self {
        Self::new(0, vec![CMat::zeros(dim, dim)], trunc)
    }

    pub fn identity(dim: usize, trunc: usize) -> Self {
        Self::new(0, vec![CMat::identity(dim, dim)], trunc)
    }

    pub fn constant(m: CMat, trunc: usize) -> Self {
        Self::new(0, vec![m], trunc)
    }

    /// `λ^d · m`.
    pub fn monomial(d: i32, m: CMat, trunc: usize) -> Self {
        Self::new(d, vec![m], trunc)
    }

    /// Builds a loop from `(degree, coefficient)` pairs.
    pub fn from_terms(dim: usize, terms: &[(i32, CMat)], trunc: usize) -> Self {
        if terms.is_empty() {
            return Self::zero(dim, trunc);
        }
        let lo = terms.iter().map(|t| t.0).min().unwrap();
        let hi = terms.iter().map(|t| t.0).max().unwrap();
        let mut coeffs = vec![CMat::zeros(dim, dim); (hi - lo + 1) as usize];
        for (d, m) in terms {
            coeffs[(d - lo) as usize] += m;
        }
        Self::new(lo, coeffs, trunc)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min_deg(&self) -> i32 {
        self.min_deg
    }

    pub fn max_deg(&self) -> i32 {
        self.min_deg + self.coeffs.len() as i32 - 1
    }

    pub fn truncation(&self) -> usize {
        self.trunc
    }

    pub fn with_truncation(mut self, trunc: usize) -> Self {
        self.trunc = trunc;
        self
    }

    /// Coefficient of `λ^d` (zero outside the stored range).
    pub fn coeff(&self, d: i32) -> CMat {
        self.coeff_ref(d).cloned().unwrap_or_else(|| CMat::zeros(self.dim, self.dim))
    }

    pub fn coeff_ref(&self, d: i32) -> Option<&CMat> {
        if d < self.min_deg || d > self.max_deg() {
            None
        } else {
            Some(&self.coeffs[(d - self.min_deg) as usize])
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, &CMat)> {
        self.coeffs.iter().enumerate().map(move |(k, c)| (self.min_deg + k as i32, c))
    }

    /// `Σ coeff(d)·λᵈ` by direct powers.
    pub fn evaluate(&self, lambda: Complex64) -> Result<CMat, LoopError> {
        if lambda == ZERO && self.min_deg < 0 {
            return Err(LoopError::PoleAtZero);
        }
        let mut out = CMat::zeros(self.dim, self.dim);
        for (d, c) in self.terms() {
            out += c * lambda.powi(d);
        }
        Ok(out)
    }

    /// Horner evaluation: `λ^{min}·(c₀ + λ(c₁ + λ(…)))`.
    pub fn evaluate_horner(&self, lambda: Complex64) -> Result<CMat, LoopError> {
        if lambda == ZERO && self.min_deg < 0 {
            return Err(LoopError::PoleAtZero);
        }
        let mut acc = CMat::zeros(self.dim, self.dim);
        for c in self.coeffs.iter().rev() {
            acc *= lambda;
            acc += c;
        }
        if self.min_deg != 0 {
            acc *= lambda.powi(self.min_deg);
        }
        Ok(acc)
    }

    /// Truncated product; `tail` is the l1 mass of coefficients with `|d| > N`.
    pub fn multiply(&self, other: &LaurentLoop) -> Truncated {
        let n = self.trunc.min(other.trunc) as i32;
        let full = self.mul_full(other);
        let mut t = full.truncate(n as usize);
        t.value.trunc = n as usize;
        t
    }

    /// Untruncated product.
    pub fn mul_full(&self, other: &LaurentLoop) -> LaurentLoop {
        assert_eq!(self.dim, other.dim);
        let lo = self.min_deg + other.min_deg;
        let len = self.coeffs.len() + other.coeffs.len() - 1;
        let mut coeffs = vec![CMat::zeros(self.dim, self.dim); len];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j].gemm(ONE, a, b, ONE);
            }
        }
        LaurentLoop { dim: self.dim, min_deg: lo, coeffs, trunc: self.trunc.max(other.trunc) }
    }

    /// Drops degrees outside `[-n, n]`.
    pub fn truncate(&self, n: usize) -> Truncated {
        let n = n as i32;
        let lo = self.min_deg.max(-n);
        let hi = self.max_deg().min(n);
        let mut tail = 0.0;
        for (d, c) in self.terms() {
            if d < lo || d > hi {
                tail += l1(c);
            }
        }
        let value = if lo > hi {
            LaurentLoop::zero(self.dim, self.trunc)
        } else {
            let coeffs = self.coeffs[(lo - self.min_deg) as usize..=(hi - self.min_deg) as usize].to_vec();
            LaurentLoop { dim: self.dim, min_deg: lo, coeffs, trunc: self.trunc }
        };
        Truncated { value, tail }
    }

    /// Keeps only degrees in `[lo, hi]`.
    pub fn restrict(&self, lo: i32, hi: i32) -> LaurentLoop {
        let terms: Vec<(i32, CMat)> =
            self.terms().filter(|(d, _)| *d >= lo && *d <= hi).map(|(d, c)| (d, c.clone())).collect();
        LaurentLoop::from_terms(self.dim, &terms, self.trunc)
    }

    /// Removes end coefficients whose entries are all below `tol`.
    pub fn trim(mut self, tol: f64) -> Self {
        while self.coeffs.len() > 1 && max_abs(self.coeffs.last().unwrap()) <= tol {
            self.coeffs.pop();
        }
        while self.coeffs.len() > 1 && max_abs(&self.coeffs[0]) <= tol {
            self.coeffs.remove(0);
            self.min_deg += 1;
        }
        self
    }

    pub fn add(&self, other: &LaurentLoop) -> LaurentLoop {
        self.combine(other, ONE)
    }

    pub fn sub(&self, other: &LaurentLoop) -> LaurentLoop {
        self.combine(other, -ONE)
    }

    fn combine(&self, other: &LaurentLoop, s: Complex64) -> LaurentLoop {
        let lo = self.min_deg.min(other.min_deg);
        let hi = self.max_deg().max(other.max_deg());
        let mut coeffs = vec![CMat::zeros(self.dim, self.dim); (hi - lo + 1) as usize];
        for (d, c) in self.terms() {
            coeffs[(d - lo) as usize] += c;
        }
        for (d, c) in other.terms() {
            coeffs[(d - lo) as usize] += c * s;
        }
        LaurentLoop { dim: self.dim, min_deg: lo, coeffs, trunc: self.trunc.max(other.trunc) }
    }

    pub fn scale(&self, s: Complex64) -> LaurentLoop {
        self.map(|c| c * s)
    }

    pub fn map(&self, f: impl Fn(&CMat) -> CMat) -> LaurentLoop {
        LaurentLoop {
            dim: self.dim,
            min_deg: self.min_deg,
            coeffs: self.coeffs.iter().map(f).collect(),
            trunc: self.trunc,
        }
    }

    /// Left multiplication by a constant matrix.
    pub fn left_mul(&self, m: &CMat) -> LaurentLoop {
        self.map(|c| m * c)
    }

    /// Right multiplication by a constant matrix.
    pub fn right_mul(&self, m: &CMat) -> LaurentLoop {
        self.map(|c| c * m)
    }

    /// `c(Φ)(λ) = conj(Φ(1/λ̄))`: degree `d` becomes `conj(coeff(−d))`.
    pub fn reality_involution(&self) -> LaurentLoop {
        let coeffs: Vec<CMat> = self.coeffs.iter().rev().map(|c| c.map(|z| z.conj())).collect();
        LaurentLoop { dim: self.dim, min_deg: -self.max_deg(), coeffs, trunc: self.trunc }
    }

    /// `I·Φᵗ·I` coefficientwise; the exact inverse of a group-valued loop.
    pub fn group_inverse(&self) -> LaurentLoop {
        self.map(metric_inverse)
    }

    /// Inverse by least squares on the coefficient convolution system.
    ///
    /// The unknown inverse is sought in degrees `[-max_deg - N, -min_deg + N]`
    /// clipped to `[-N', N']` with `N' = N + max(|min_deg|, |max_deg|)`.
    pub fn invert(&self) -> Result<Inverse, LoopError> {
        self.invert_with_threshold(1e-6)
    }

    pub fn invert_with_threshold(&self, threshold: f64) -> Result<Inverse, LoopError> {
        let n = self.dim;
        let span = self.trunc as i32;
        let lo = -self.max_deg() - span;
        let hi = -self.min_deg + span;
        let nb = (hi - lo + 1) as usize;
        let plo = self.min_deg + lo;
        let phi = self.max_deg() + hi;
        let np = (phi - plo + 1) as usize;
        let mut a = CMat::zeros(np * n, nb * n);
        for j in 0..nb {
            let dj = lo + j as i32;
            for (d, c) in self.terms() {
                let row = (d + dj - plo) as usize;
                a.view_mut((row * n, j * n), (n, n)).copy_from(c);
            }
        }
        let mut rhs = CMat::zeros(np * n, n);
        let row0 = (-plo) as usize;
        rhs.view_mut((row0 * n, 0), (n, n)).copy_from(&CMat::identity(n, n));
        // Householder least squares; the complex SVD loses accuracy here.
        let qr = a.qr();
        let r = qr.r();
        let diag = r.diagonal().map(|z| z.norm());
        if diag.min() <= 1e-14 * diag.max() {
            return Err(LoopError::IllConditioned(f64::INFINITY));
        }
        let sol = r.solve_upper_triangular(&(qr.q().adjoint() * &rhs)).ok_or(LoopError::IllConditioned(f64::INFINITY))?;
        let coeffs: Vec<CMat> = (0..nb).map(|j| sol.view((j * n, 0), (n, n)).into_owned()).collect();
        let b = LaurentLoop { dim: n, min_deg: lo, coeffs, trunc: self.trunc }.trim(1e-15);
        let residual = self.mul_full(&b).sub(&LaurentLoop::identity(n, self.trunc)).l1_norm();
        let b = b.truncate(self.trunc).value;
        if !residual.is_finite() || residual > threshold {
            return Err(LoopError::IllConditioned(residual));
        }
        Ok(Inverse { value: b, residual })
    }

    /// Sum of l1 norms of all coefficients.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(l1).sum()
    }

    /// Largest entry modulus over all coefficients.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(max_abs).fold(0.0, f64::max)
    }

    /// Coefficientwise distance `max_d max_ij |a_d − b_d|`.
    pub fn coeff_distance(&self, other: &LaurentLoop) -> f64 {
        self.sub(other).max_abs()
    }

    /// `max ‖a(λ) − b(λ)‖∞` over `count` unit-circle points.
    pub fn sup_distance_on_circle(&self, other: &LaurentLoop, count: usize) -> f64 {
        circle_points(count)
            .into_iter()
            .map(|l| max_abs(&(self.evaluate(l).unwrap() - other.evaluate(l).unwrap())))
            .fold(0.0, f64::max)
    }

    /// `max_d ‖c(Φ)_d − Φ_d‖`.
    pub fn reality_residual(&self) -> f64 {
        self.coeff_distance(&self.reality_involution())
    }

    pub fn parity_residuals(&self) -> (f64, f64) {
        let mut k: f64 = 0.0;
        let mut p: f64 = 0.0;
        for (d, c) in self.terms() {
            if d.rem_euclid(2) == 0 {
                k = k.max(p_block_mass(c));
            } else {
                p = p.max(k_block_mass(c));
            }
        }
        (k, p)
    }

    pub fn twisting_residual(&self) -> f64 {
        let (k, p) = self.parity_residuals();
        k.max(p)
    }

    /// `max ‖Φ(λ)ᵗ I Φ(λ) − I‖∞` on `count` unit-circle points.
    pub fn orthogonality_residual(&self, count: usize) -> f64 {
        let i = metric_c(self.dim);
        circle_points(count)
            .into_iter()
            .map(|l| {
                let x = self.evaluate(l).unwrap();
                max_abs(&(x.transpose() * &i * &x - &i))
            })
            .fold(0.0, f64::max)
    }

    pub fn algebra_residual(&self) -> f64 {
        self.coeffs.iter().map(so_residual).fold(0.0, f64::max)
    }

    pub fn check_membership(&self, kind: MembershipKind) -> MembershipReport {
        let (k, p) = self.parity_residuals();
        let (orthogonality, algebra) = match kind {
            MembershipKind::Group => (Some(self.orthogonality_residual(32)), None),
            MembershipKind::Algebra => (None, Some(self.algebra_residual())),
        };
        MembershipReport { orthogonality, algebra, k_parity: k, p_parity: p, twisting: k.max(p) }
    }

    /// Untruncated commutator `[a, b]`.
    pub fn bracket(&self, other: &LaurentLoop) -> LaurentLoop {
        self.mul_full(other).sub(&other.mul_full(self))
    }

    /// Real part of the `λ = 1` value, for real loops.
    pub fn at_one(&self) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        for c in &self.coeffs {
            out += c;
        }
        out
    }
}

/// `exp(X)` of a loop-algebra element by scaling and squaring, truncated to `N`.
pub fn exp_loop(x: &LaurentLoop) -> Truncated {
    let n = x.dim();
    let norm = x.l1_norm();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let y = x.scale(Complex64::new(0.5f64.powi(s as i32), 0.0));
    let mut term = LaurentLoop::identity(n, x.truncation());
    let mut sum = LaurentLoop::identity(n, x.truncation());
    let mut tail = 0.0;
    for k in 1..30 {
        let t = term.multiply(&y);
        tail += t.tail;
        term = t.value.scale(Complex64::new(1.0 / k as f64, 0.0));
        sum = sum.add(&term);
        if term.max_abs() < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        let t = sum.multiply(&sum);
        tail += t.tail;
        sum = t.value;
    }
    Truncated { value: sum, tail }
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(m: &CMat) -> CMat {
    let n = m.nrows();
    let norm = l1(m);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let y = m * Complex64::new(0.5f64.powi(s), 0.0);
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for k in 1..30 {
        term = &term * &y * Complex64::new(1.0 / k as f64, 0.0);
        sum += &term;
        if max_abs(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn seq_mat(n: usize, seed: f64) -> CMat {
        CMat::from_fn(n, n, |i, j| c(((i * 7 + j * 3) as f64 * 0.37 + seed).sin(), ((i + 2 * j) as f64 * 0.91 - seed).cos()))
    }

    fn p_part(m: &CMat) -> CMat {
        CMat::from_fn(m.nrows(), m.ncols(), |i, j| if (i < 2) != (j < 2) { m[(i, j)] } else { ZERO })
    }

    fn so_project(m: &CMat) -> CMat {
        let i = metric_c(m.nrows());
        (m - &i * m.transpose() * &i) * c(0.5, 0.0)
    }

    #[test]
    fn identity_is_neutral() {
        let a = LaurentLoop::from_terms(5, &[(-1, seq_mat(5, 0.1)), (2, seq_mat(5, 0.7))], 12);
        let p = a.multiply(&LaurentLoop::identity(5, 12));
        assert_eq!(p.value, a);
        assert_eq!(p.tail, 0.0);
    }

    #[test]
    fn opposite_monomials_give_constant() {
        let a = seq_mat(5, 0.2);
        let b = seq_mat(5, 1.3);
        let p = LaurentLoop::monomial(1, a.clone(), 12).multiply(&LaurentLoop::monomial(-1, b.clone(), 12));
        assert_eq!(p.value.min_deg(), 0);
        assert_eq!(p.value.max_deg(), 0);
        assert!(max_abs(&(p.value.coeff(0) - a * b)) < 1e-14);
    }

    #[test]
    fn truncation_reports_tail() {
        let a = LaurentLoop::monomial(3, CMat::identity(5, 5), 4);
        let p = a.multiply(&a);
        assert_eq!(p.value.max_abs(), 0.0);
        assert!((p.tail - 5.0).abs() < 1e-15);
    }

    #[test]
    fn horner_matches_powers() {
        let a = LaurentLoop::from_terms(5, &[(-3, seq_mat(5, 0.4)), (0, seq_mat(5, 0.1)), (4, seq_mat(5, 2.0))], 12);
        for l in [c(0.3, 0.8), c(-1.2, 0.1), c(0.0, 1.0)] {
            let d = a.evaluate(l).unwrap() - a.evaluate_horner(l).unwrap();
            assert!(max_abs(&d) < 1e-13);
        }
        assert_eq!(a.evaluate(ZERO), Err(LoopError::PoleAtZero));
    }

    #[test]
    fn involution_maps_lambda_to_inverse() {
        let a = seq_mat(5, 0.3);
        let r = LaurentLoop::monomial(1, a.clone(), 12).reality_involution();
        assert_eq!(r.min_deg(), -1);
        assert_eq!(r.coeff(-1), a.map(|z| z.conj()));
        let i = LaurentLoop::identity(5, 12);
        assert_eq!(i.reality_involution(), i);
    }

    #[test]
    fn inverse_of_identity() {
        let inv = LaurentLoop::identity(5, 12).invert().unwrap();
        assert!(inv.value.coeff_distance(&LaurentLoop::identity(5, 12)) < 1e-14);
    }

    #[test]
    fn inverse_of_exponential() {
        let x = p_part(&so_project(&seq_mat(5, 0.5))) * c(0.2, 0.0);
        let e = exp_loop(&LaurentLoop::monomial(1, x.clone(), 12)).value;
        let em = exp_loop(&LaurentLoop::monomial(1, -x, 12)).value;
        let inv = e.invert().unwrap();
        assert!(inv.residual < 1e-9, "residual {}", inv.residual);
        assert!(inv.value.coeff_distance(&em) < 1e-9);
    }

    #[test]
    fn singular_loop_is_rejected() {
        let mut m = CMat::identity(5, 5);
        m[(4, 4)] = ZERO;
        assert!(matches!(LaurentLoop::constant(m, 4).invert(), Err(LoopError::IllConditioned(_))));
    }

    #[test]
    fn membership_of_parity_blocks() {
        let x = so_project(&seq_mat(5, 0.9));
        let k = &x - p_part(&x);
        let p = p_part(&x);
        let alg = LaurentLoop::from_terms(5, &[(-1, p.clone()), (0, k.clone()), (1, p)], 12);
        let rep = alg.check_membership(MembershipKind::Algebra);
        assert_eq!(rep.twisting, 0.0);
        assert!(rep.algebra.unwrap() < 1e-15);
        let dense = LaurentLoop::monomial(1, seq_mat(5, 0.2), 12).check_membership(MembershipKind::Algebra);
        assert!(dense.twisting > 0.1);
        assert!(dense.algebra.unwrap() > 0.1);
    }

    #[test]
    fn group_membership_of_exponential() {
        let x = so_project(&seq_mat(5, 0.6)) * c(0.3, 0.0);
        let p = p_part(&x);
        let e = exp_loop(&LaurentLoop::from_terms(5, &[(-1, p.clone()), (1, p)], 16)).value;
        let rep = e.check_membership(MembershipKind::Group);
        assert!(rep.orthogonality.unwrap() < 1e-12);
        assert!(rep.twisting < 1e-14);
    }

    #[test]
    fn bracket_of_odd_elements_is_even() {
        let p1 = p_part(&so_project(&seq_mat(5, 0.1)));
        let p2 = p_part(&so_project(&seq_mat(5, 1.7)));
        let a = LaurentLoop::monomial(1, p1, 12);
        let b = LaurentLoop::monomial(-1, p2, 12);
        let br = a.bracket(&b);
        assert_eq!(br.twisting_residual(), 0.0);
        assert!(br.algebra_residual() < 1e-14);
    }

    #[test]
    fn expm_matches_loop_exponential() {
        let x = so_project(&seq_mat(5, 0.8));
        let e = expm(&x);
        let el = exp_loop(&LaurentLoop::constant(x, 12)).value.coeff(0);
        assert!(max_abs(&(e - el)) < 1e-12);
    }
}
