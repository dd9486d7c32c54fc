//! Holomorphic potentials: boundary potentials from curve data, the
//! equivariant families, normalized examples, isotropy validation and the
//! minimality classifier.
//!
//! Matrix layout for codimension `n`: indices `0, 1` are `e₋₁, e₀`,
//! `2, 3` are `P₁, P₂`, and `4..4+n` are the normal vectors `ψⱼ`.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{add, mul, neg, pow, sub, EvalError, Expr};
use crate::loopgroup::{max_abs, CMat, LaurentLoop, MembershipKind};


/// Magnitudes below this count as zero for constant-data decisions.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("rotation rate r must be nonzero (use the circle family for r = 0)")]
    ZeroRate,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("data are not constant: {0} varies")]
    NotEquivariant(String),
    #[error("invalid Björling data: {}", format_report(.0))]
    InvalidBjorlingData(Vec<(String, f64)>),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

fn format_report(r: &[(String, f64)]) -> String {
    r.iter().map(|(k, v)| format!("{k} = {v:.3e}")).collect::<Vec<_>>().join(", ")
}

/// Square matrix of expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprMatrix {
    pub dim: usize,
    /// Row-major entries.
    pub entries: Vec<Expr>,
}

impl ExprMatrix {
    pub fn zeros(dim: usize) -> Self {
        ExprMatrix { dim, entries: vec![Expr::zero(); dim * dim] }
    }

    pub fn get(&self, i: usize, j: usize) -> &Expr {
        &self.entries[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: Expr) {
        self.entries[i * self.dim + j] = e;
    }

    pub fn eval(&self, z: Complex64) -> Result<CMat, EvalError> {
        let mut m = CMat::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let e = self.get(i, j);
                if !e.is_zero() {
                    m[(i, j)] = e.eval(z)?;
                }
            }
        }
        Ok(m)
    }

    pub fn conj_coeffs(&self) -> Self {
        ExprMatrix { dim: self.dim, entries: self.entries.iter().map(Expr::conj_coeffs).collect() }
    }

    /// `[[0, B], [−BᵗI₁,₁, 0]]` for a `2 × (dim−2)` block given by rows.
    pub fn p_shape(b: &[Vec<Expr>; 2]) -> Self {
        let m = b[0].len();
        let mut x = ExprMatrix::zeros(m + 2);
        for j in 0..m {
            x.set(0, 2 + j, b[0][j].clone());
            x.set(1, 2 + j, b[1][j].clone());
            x.set(2 + j, 0, b[0][j].clone());
            x.set(2 + j, 1, neg(b[1][j].clone()));
        }
        x
    }
}

/// `Ξ = Σⱼ λʲ ξⱼ(z) dz` with a base point for integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoloPotential {
    pub n: usize,
    pub base: Complex64,
    pub terms: BTreeMap<i32, ExprMatrix>,
}

impl HoloPotential {
    pub fn dim(&self) -> usize {
        self.n + 4
    }

    pub fn with_base(mut self, z0: Complex64) -> Self {
        self.base = z0;
        self
    }

    /// Coefficient `ξⱼ(z)`; zero for absent degrees.
    pub fn coeff(&self, j: i32, z: Complex64) -> Result<CMat, EvalError> {
        match self.terms.get(&j) {
            Some(m) => m.eval(z),
            None => Ok(CMat::zeros(self.dim(), self.dim())),
        }
    }

    pub fn evaluate(&self, z: Complex64, trunc: usize) -> Result<LaurentLoop, EvalError> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (j, m) in &self.terms {
            terms.push((*j, m.eval(z)?));
        }
        Ok(LaurentLoop::from_terms(self.dim(), &terms, trunc))
    }

    /// `Ξ(z, λ = 1)`.
    pub fn at_one(&self, z: Complex64) -> Result<CMat, EvalError> {
        let mut m = CMat::zeros(self.dim(), self.dim());
        for x in self.terms.values() {
            m += x.eval(z)?;
        }
        Ok(m)
    }

    /// The `2 × (n+2)` block `B₁` of the `λ⁻¹` coefficient.
    pub fn b1(&self, z: Complex64) -> Result<CMat, EvalError> {
        let c = self.coeff(-1, z)?;
        Ok(c.view((0, 2), (2, self.n + 2)).into_owned())
    }

    /// True when only the `λ⁻¹` term is present.
    pub fn is_normalized(&self) -> bool {
        self.terms.keys().all(|&j| j == -1)
    }

    pub fn min_degree(&self) -> i32 {
        self.terms.keys().next().copied().unwrap_or(0)
    }

    /// Largest twisting and `𝔰𝔬(1,n+3,C)` residuals over the given points.
    pub fn membership_residuals(&self, points: &[Complex64]) -> Result<(f64, f64), EvalError> {
        let mut tw: f64 = 0.0;
        let mut alg: f64 = 0.0;
        for &z in points {
            let l = self.evaluate(z, 64)?;
            let r = l.check_membership(MembershipKind::Algebra);
            tw = tw.max(r.twisting);
            alg = alg.max(r.algebra.unwrap_or(0.0));
        }
        Ok((tw, alg))
    }
}

/// Deterministic sample points in a disc of the given radius around `z0`.
pub fn sample_points(z0: Complex64, radius: f64, count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|k| {
            let t = 2.399_963_229_728_653 * k as f64;
            let r = radius * ((k as f64 + 0.5) / count as f64).sqrt();
            z0 + Complex64::from_polar(r, t)
        })
        .collect()
}

/// Curve data `(μ, k, ρ, γ)` of a boundary potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BjorlingData {
    pub mu: Expr,
    pub k: Expr,
    pub rho: Expr,
    /// One entry per normal direction; empty in the isotropic case.
    #[serde(default)]
    pub gamma: Vec<Expr>,
    #[serde(default = "default_n")]
    pub n: usize,
    /// `kⱼ` for the normals `ψ₂, …, ψₙ` (zero when absent).
    #[serde(default)]
    pub normal_k: Vec<Expr>,
    /// Normal connection entries `(j, l, b_jl)` with `j < l`, 0-based.
    #[serde(default)]
    pub normal_connection: Vec<(usize, usize, Expr)>,
}

fn default_n() -> usize {
    1
}

impl BjorlingData {
    pub fn new(mu: Expr, k: Expr, rho: Expr) -> Self {
        BjorlingData { mu, k, rho, gamma: Vec::new(), n: 1, normal_k: Vec::new(), normal_connection: Vec::new() }
    }

    pub fn with_gamma(mut self, gamma: Vec<Expr>) -> Self {
        self.n = self.n.max(gamma.len());
        self.gamma = gamma;
        self
    }

    pub fn with_codim(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    /// Constant data from the six real numbers `(μ₁, μ₂, k₁, k₂, ρ₁, ρ₂)`.
    pub fn from_constants(d: &EquivariantData) -> Self {
        BjorlingData::new(
            Expr::constant(Complex64::new(d.mu1, d.mu2)),
            Expr::constant(Complex64::new(d.k1, d.k2)),
            Expr::constant(Complex64::new(d.rho1, d.rho2)),
        )
    }

    fn validate_shape(&self) -> Result<(), PotentialError> {
        if self.n == 0 {
            return Err(PotentialError::Dimension("codimension n must be at least 1".into()));
        }
        if self.gamma.len() > self.n || self.normal_k.len() > self.n.saturating_sub(1) {
            return Err(PotentialError::Dimension(format!("too many normal entries for n = {}", self.n)));
        }
        for (j, l, _) in &self.normal_connection {
            if j >= l || *l >= self.n {
                return Err(PotentialError::Dimension(format!("normal connection index ({j}, {l})")));
            }
        }
        Ok(())
    }

    /// Evaluates `(μ, k, ρ)` at a point, for constant-data inspection.
    pub fn values_at(&self, z: Complex64) -> Result<(Complex64, Complex64, Complex64), EvalError> {
        Ok((self.mu.eval(z)?, self.k.eval(z)?, self.rho.eval(z)?))
    }
}

/// The real constants `(μ₁, μ₂, k₁, k₂, ρ₁, ρ₂)` of equivariant data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivariantData {
    pub mu1: f64,
    pub mu2: f64,
    pub k1: f64,
    pub k2: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl EquivariantData {
    pub fn as_array(&self) -> [f64; 6] {
        [self.mu1, self.mu2, self.k1, self.k2, self.rho1, self.rho2]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        EquivariantData { mu1: a[0], mu2: a[1], k1: a[2], k2: a[3], rho1: a[4], rho2: a[5] }
    }

    /// Largest entrywise difference relative to `max(1, |entries|)`.
    pub fn rel_distance(&self, other: &EquivariantData) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Boundary potential `Ξ = λ⁻¹𝒜₁ + 𝒜₀ + λ𝒜₋₁` of curve data.
pub fn build_boundary_potential(d: &BjorlingData) -> Result<HoloPotential, PotentialError> {
    d.validate_shape()?;
    let n = d.n;
    let dim = n + 4;
    let s = Expr::real(1.0 / (2.0 * SQRT_2));
    let one = Expr::one;
    let gamma = |j: usize| d.gamma.get(j).cloned().unwrap_or_else(Expr::zero);

    // 𝒜₀.
    let mut a0 = ExprMatrix::zeros(dim);
    let mu1 = d.mu.re_ext();
    let mu2 = d.mu.im_ext();
    a0.set(0, 1, mu1.clone());
    a0.set(1, 0, mu1);
    a0.set(2, 3, neg(mu2.clone()));
    a0.set(3, 2, mu2);
    for j in 0..n {
        let kj = if j == 0 { Some(&d.k) } else { d.normal_k.get(j - 1) };
        if let Some(kj) = kj {
            let (k1, k2) = (kj.re_ext(), kj.im_ext());
            let q = 4 + j;
            a0.set(2, q, mul(Expr::real(-2.0), k1.clone()));
            a0.set(q, 2, mul(Expr::real(2.0), k1));
            a0.set(3, q, mul(Expr::real(2.0), k2.clone()));
            a0.set(q, 3, mul(Expr::real(-2.0), k2));
        }
    }
    for (j, l, b) in &d.normal_connection {
        let b = b.re_ext();
        a0.set(4 + l, 4 + j, b.clone());
        a0.set(4 + j, 4 + l, neg(b));
    }

    // 𝒜₁ from B₁.
    let plus = add(one(), d.rho.clone());
    let minus = sub(one(), d.rho.clone());
    let mut row0 = vec![mul(s.clone(), plus.clone()), mul(s.clone(), mul(Expr::imag(-1.0), plus))];
    let mut row1 = vec![mul(s.clone(), minus.clone()), mul(s.clone(), mul(Expr::imag(-1.0), minus))];
    for j in 0..n {
        row0.push(mul(s.clone(), mul(Expr::real(4.0), gamma(j))));
        row1.push(mul(s.clone(), mul(Expr::real(-4.0), gamma(j))));
    }
    let a1 = ExprMatrix::p_shape(&[row0, row1]);
    let am1 = a1.conj_coeffs();

    let mut terms = BTreeMap::new();
    terms.insert(-1, a1);
    terms.insert(0, a0);
    terms.insert(1, am1);
    Ok(HoloPotential { n, base: Complex64::new(0.0, 0.0), terms })
}

/// Degree `−1` potential `λ⁻¹[[0, B̂₁], [−B̂₁ᵗI₁,₁, 0]]` with rows `b₁ᵗ, b₂ᵗ`.
pub fn normalized_potential_from_rows(b1: Vec<Expr>, b2: Vec<Expr>) -> Result<HoloPotential, PotentialError> {
    if b1.len() != b2.len() || b1.len() < 3 {
        return Err(PotentialError::Dimension(format!("rows of length {} and {}", b1.len(), b2.len())));
    }
    let n = b1.len() - 2;
    let mut terms = BTreeMap::new();
    terms.insert(-1, ExprMatrix::p_shape(&[b1, b2]));
    Ok(HoloPotential { n, base: Complex64::new(0.0, 0.0), terms })
}

/// `(1 − z²/8, −i(1 + z²/8), √2 z/2)`, the Enneper data vector.
fn enneper(z: Expr) -> Vec<Expr> {
    let z2 = pow(z.clone(), 2);
    let e = mul(Expr::real(0.125), z2);
    vec![
        sub(Expr::one(), e.clone()),
        mul(Expr::imag(-1.0), add(Expr::one(), e)),
        mul(Expr::real(SQRT_2 / 2.0), z),
    ]
}

fn scaled(c: Complex64, v: &[Expr]) -> Vec<Expr> {
    v.iter().map(|e| mul(Expr::constant(c), e.clone())).collect()
}

/// Clifford torus: `b₁ = 0`, `b₂ = (√2/4)·Enneper`.
pub fn clifford_potential() -> HoloPotential {
    let v = enneper(Expr::Var);
    normalized_potential_from_rows(vec![Expr::zero(); 3], scaled(Complex64::new(SQRT_2 / 4.0, 0.0), &v)).unwrap()
}

/// `b₁ = (i/4)·Enneper`, `b₂ = (√3/4)·Enneper`.
pub fn generalized_clifford_potential() -> HoloPotential {
    let v = enneper(Expr::Var);
    normalized_potential_from_rows(scaled(Complex64::new(0.0, 0.25), &v), scaled(Complex64::new(3f64.sqrt() / 4.0, 0.0), &v)).unwrap()
}

/// Clifford potential with `z ↦ 1/z`, based at `z₀ = 1`.
pub fn inverted_clifford_potential() -> HoloPotential {
    let w = crate::analytic::div(Expr::one(), Expr::Var);
    let v = enneper(w);
    normalized_potential_from_rows(vec![Expr::zero(); 3], scaled(Complex64::new(SQRT_2 / 4.0, 0.0), &v))
        .unwrap()
        .with_base(Complex64::new(1.0, 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum IsotropyClass {
    Isotropic,
    /// `B₁B₁ᵗ = γ̂E`; `γ̂` sampled at the report points.
    HalfIsotropic { gamma_hat: Vec<Complex64> },
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsotropyReport {
    pub class: IsotropyClass,
    pub points: Vec<Complex64>,
    /// `max ‖B₁B₁ᵗ‖`.
    pub isotropic_residual: f64,
    /// `max ‖B₁B₁ᵗ − γ̂E‖`.
    pub half_residual: f64,
    /// Generic rank of `B₁` over the samples.
    pub rank: usize,
    /// `B₁ = (b, −b)ᵗ` with `bᵗb ≠ 0`.
    pub degenerate_pattern: bool,
}

/// Classifies `B₁B₁ᵗ` on 20 points of the disc of radius 0.5 about the base.
pub fn validate(p: &HoloPotential) -> Result<IsotropyReport, PotentialError> {
    validate_at(p, &sample_points(p.base, 0.5, 20))
}

pub fn validate_at(p: &HoloPotential, points: &[Complex64]) -> Result<IsotropyReport, PotentialError> {
    let mut iso: f64 = 0.0;
    let mut half: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut gammas = Vec::with_capacity(points.len());
    let mut degenerate = true;
    let mut rank = 0;
    for &z in points {
        let b = p.b1(z)?;
        let m = &b * b.transpose();
        let g = (m[(0, 0)] + m[(1, 1)] - m[(0, 1)] - m[(1, 0)]) * 0.25;
        let e = CMat::from_row_slice(2, 2, &[g, -g, -g, g]);
        iso = iso.max(max_abs(&m));
        half = half.max(max_abs(&(&m - e)));
        scale = scale.max(max_abs(&b).powi(2));
        gammas.push(g);
        let sum = b.row(0) + b.row(1);
        if sum.iter().any(|x| x.norm() > ZERO_TOL * max_abs(&b).max(1.0)) {
            degenerate = false;
        }
        let sv = b.clone().svd(false, false).singular_values;
        let r = sv.iter().filter(|s| **s > 1e-9 * sv[0].max(1e-300)).count();
        rank = rank.max(if sv[0] == 0.0 { 0 } else { r });
    }
    let tol = 1e-10 * scale.max(1.0);
    let degenerate_pattern = degenerate && iso > tol;
    let class = if iso <= tol {
        IsotropyClass::Isotropic
    } else if degenerate_pattern || half > tol {
        IsotropyClass::Neither
    } else {
        IsotropyClass::HalfIsotropic { gamma_hat: gammas }
    };
    Ok(IsotropyReport { class, points: points.to_vec(), isotropic_residual: iso, half_residual: half, rank, degenerate_pattern })
}

/// Circle family `(μ, k, ρ) = (i m, β/2, ½(m² + β² − 1) − i m′)`.
pub fn build_circle_family(m: &Expr, beta: f64) -> BjorlingData {
    let mu = mul(Expr::imag(1.0), m.clone());
    let k = Expr::real(beta / 2.0);
    let rho = sub(
        mul(Expr::real(0.5), add(pow(m.clone(), 2), Expr::real(beta * beta - 1.0))),
        mul(Expr::imag(1.0), m.differentiate()),
    );
    BjorlingData::new(mu, k, rho)
}

/// Equivariant data of the `SO(4)` orbit family with rotation rate `r`.
pub fn so4_data(r: f64, theta: f64, phi: f64, l: f64, h: f64) -> Result<EquivariantData, PotentialError> {
    if r == 0.0 {
        return Err(PotentialError::ZeroRate);
    }
    let (a, b) = (theta.cos(), theta.sin());
    let (c, d) = (phi.cos(), phi.sin());
    let q = r * r - 1.0;
    // a² + r²b² written so that r = 1 gives R = 1 without rounding.
    let rr2 = 1.0 + q * b * b;
    let rr = rr2.sqrt();
    let ab = a * b;
    let mu2 = ab * q * (c * l * rr + d * r) / (r * rr) + rr * l / r * h;
    let k1 = -ab * c * q / (2.0 * rr) - 0.5 * h;
    let k2 = r / (2.0 * rr);
    let rho1 = -rr2 / 2.0
        + ab * ab * c * d * l * q * q / (r * rr)
        + l * l * (ab * ab * c * c * q * q - r * r) / (2.0 * r * r)
        + h * ab * q * (rr * c * l * l / (r * r) + d * l / r + c / rr)
        + h * h / 2.0 * (rr2 * l * l / (r * r) + 1.0);
    let rho2 = ab * d * l * q / rr + ab * c * l * l * q / r + h * (l * l * rr / r + r / rr);
    Ok(EquivariantData { mu1: l, mu2, k1, k2, rho1, rho2 })
}

/// Hopf cylinder data (`r = 1`).
pub fn hopf_data(l: f64, h: f64) -> EquivariantData {
    EquivariantData {
        mu1: l,
        mu2: h * l,
        k1: -h / 2.0,
        k2: 0.5,
        rho1: (h * h * (l * l + 1.0) - l * l - 1.0) / 2.0,
        rho2: h * (l * l + 1.0),
    }
}

pub fn build_equivariant_so4(r: f64, theta: f64, phi: f64, l: f64, h: f64) -> Result<BjorlingData, PotentialError> {
    Ok(BjorlingData::from_constants(&so4_data(r, theta, phi, l, h)?))
}

/// Parameters of the `SO(1,3)` orbit families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum So13Params {
    /// Orbit through `(1, 0, 0, 0, 1)` (`a = c = 1`, `b = 0`).
    Abz { h: f64, r: f64 },
    /// `r = 1` with `c = √cos 2θ ≠ 0`.
    Hopf { theta: f64, m: f64, q: f64, h: f64 },
    /// `r = 1` with `c = 0`.
    HopfNull { m: f64, h: f64, p: f64 },
}

pub fn so13_data(params: So13Params) -> Result<EquivariantData, PotentialError> {
    match params {
        So13Params::Abz { h, r } => Ok(EquivariantData {
            mu1: 0.0,
            mu2: 0.0,
            k1: -h / 2.0,
            k2: -r / 2.0,
            rho1: (h * h + 1.0) / 2.0,
            rho2: -h * r,
        }),
        So13Params::Hopf { theta, m, q, h } => {
            if !(0.0..std::f64::consts::FRAC_PI_4).contains(&theta) {
                return Err(PotentialError::Precondition(format!("theta = {theta} outside [0, pi/4)")));
            }
            let (a, b) = (theta.cos(), theta.sin());
            if b != 0.0 && q.abs() > 1.0 / b.abs() {
                return Err(PotentialError::Precondition(format!("|q| = {} exceeds 1/|sin theta| = {}", q.abs(), 1.0 / b.abs())));
            }
            let c = (2.0 * theta).cos().sqrt();
            let s = (1.0 - b * b * q * q).max(0.0).sqrt();
            let p = (a * m * h + a * a * q - b * c * m * s) / (a * c);
            let a2 = a * a;
            Ok(EquivariantData {
                mu1: m,
                mu2: a * c * q - p,
                k1: b * c * s / (2.0 * a) - h / 2.0,
                k2: -c / 2.0,
                rho1: (a2 * h * h - 2.0 * a * b * c * h * s + a2 * p * p + c.powi(4) * q * q - 2.0 * a2 * a * c * p * q - a2 * m * m + c * c)
                    / (2.0 * a2),
                rho2: (a2 * c * m * q - a * c * h - a * m * p - b * s) / a,
            })
        }
        So13Params::HopfNull { m, h, p } => {
            if (h * m).abs() > 1.0 {
                return Err(PotentialError::Precondition(format!("|h m| = {} exceeds 1", (h * m).abs())));
            }
            Ok(EquivariantData {
                mu1: m,
                mu2: -p,
                k1: -h / 2.0,
                k2: 0.0,
                rho1: (h * h + p * p - m * m) / 2.0,
                rho2: -p * m - (1.0 - h * h * m * m).sqrt(),
            })
        }
    }
}

pub fn build_so13_family(params: So13Params) -> Result<BjorlingData, PotentialError> {
    Ok(BjorlingData::from_constants(&so13_data(params)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MinimalClass {
    R3,
    S3,
    H3,
    None,
}

impl std::fmt::Display for MinimalClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MinimalClass::R3 => "R3",
            MinimalClass::S3 => "S3",
            MinimalClass::H3 => "H3",
            MinimalClass::None => "none",
        })
    }
}

/// Extracts the real constants of data whose expressions do not vary.
pub fn constant_data(d: &BjorlingData) -> Result<EquivariantData, PotentialError> {
    let pts = sample_points(Complex64::new(0.0, 0.0), 2.0, 10);
    for (name, e) in [("mu", &d.mu), ("k", &d.k), ("rho", &d.rho)] {
        let de = e.differentiate();
        for &z in &pts {
            if de.eval(z)?.norm() >= ZERO_TOL {
                return Err(PotentialError::NotEquivariant(name.into()));
            }
        }
    }
    let z0 = Complex64::new(0.0, 0.0);
    let (mu, k, rho) = d.values_at(z0)?;
    Ok(EquivariantData { mu1: mu.re, mu2: mu.im, k1: k.re, k2: k.im, rho1: rho.re, rho2: rho.im })
}

/// Minimality in a space form from constant data.
pub fn classify_constants(d: &EquivariantData) -> MinimalClass {
    let zero = |x: f64| x.abs() <= ZERO_TOL;
    if zero(d.rho1) && zero(d.rho2) {
        MinimalClass::R3
    } else if zero(d.mu1) && zero(d.rho2) {
        if d.rho1 < 0.0 {
            MinimalClass::S3
        } else {
            MinimalClass::H3
        }
    } else {
        MinimalClass::None
    }
}

pub fn classify_minimality(d: &BjorlingData) -> Result<MinimalClass, PotentialError> {
    let c = constant_data(d)?;
    for g in &d.gamma {
        if g.constant_value().map(|v| v.norm() > ZERO_TOL).unwrap_or(true) {
            return Ok(MinimalClass::None);
        }
    }
    Ok(classify_constants(&c))
}

/// Trichotomy for surfaces of revolution: `m² + β²` against 1.
pub fn sor_class(m: f64, beta: f64) -> MinimalClass {
    let s = m * m + beta * beta - 1.0;
    if s.abs() <= ZERO_TOL {
        MinimalClass::R3
    } else if s < 0.0 {
        MinimalClass::S3
    } else {
        MinimalClass::H3
    }
}

/// Curves along `𝕀` in coordinates of `ℝ¹'ⁿ⁺³`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BjorlingCurves {
    pub y0: Vec<Expr>,
    pub y_hat0: Vec<Expr>,
    pub psi0: Vec<Vec<Expr>>,
    /// Prescribed `γⱼ₂`; empty means zero.
    #[serde(default)]
    pub gamma12: Vec<Expr>,
}

fn sym_inner(a: &[Expr], b: &[Expr]) -> Expr {
    let mut s = neg(mul(a[0].clone(), b[0].clone()));
    for i in 1..a.len() {
        s = add(s, mul(a[i].clone(), b[i].clone()));
    }
    s
}

fn sym_deriv(a: &[Expr]) -> Vec<Expr> {
    a.iter().map(Expr::differentiate).collect()
}

fn sym_axpy(alpha: &Expr, x: &[Expr], y: &[Expr]) -> Vec<Expr> {
    x.iter().zip(y).map(|(xi, yi)| add(mul(alpha.clone(), xi.clone()), yi.clone())).collect()
}

/// Determinant by Laplace expansion along the first column.
fn sym_det(m: &[Vec<Expr>]) -> Expr {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut s = Expr::zero();
    for i in 0..n {
        if m[i][0].is_zero() {
            continue;
        }
        let minor: Vec<Vec<Expr>> =
            (0..n).filter(|&r| r != i).map(|r| m[r][1..].to_vec()).collect();
        let t = mul(m[i][0].clone(), sym_det(&minor));
        s = if i % 2 == 0 { add(s, t) } else { sub(s, t) };
    }
    s
}

/// `w` with `⟨w, x⟩ = det(c₀, c₁, c₂, x, c₃, …)`: the oriented completion.
fn sym_completion(cols: &[&[Expr]]) -> Vec<Expr> {
    let dim = cols[0].len();
    let mut w = Vec::with_capacity(dim);
    for i in 0..dim {
        // Cofactor of entry (i, 3) in the matrix with columns c₀ c₁ c₂ x c₃ …
        let rows: Vec<Vec<Expr>> = (0..dim)
            .filter(|&r| r != i)
            .map(|r| cols.iter().map(|c| c[r].clone()).collect())
            .collect();
        let cof = sym_det(&rows);
        let sign = if (i + 3) % 2 == 0 { 1.0 } else { -1.0 };
        // Raise the index with the metric.
        let eta = if i == 0 { -1.0 } else { 1.0 };
        w.push(mul(Expr::real(sign * eta), cof));
    }
    w
}

/// Boundary data read off from curves via the moving-frame equations.
///
/// `P₂` is the oriented completion of `(Y₀, Ŷ₀, P₁, ψ₀)`; preconditions are
/// checked at 16 points of `interval`.
pub fn extract_bjorling_from_curves(c: &BjorlingCurves, interval: (f64, f64)) -> Result<BjorlingData, PotentialError> {
    let n = c.psi0.len();
    let dim = n + 4;
    if n == 0 || c.y0.len() != dim || c.y_hat0.len() != dim || c.psi0.iter().any(|p| p.len() != dim) {
        return Err(PotentialError::Dimension(format!("curves must have {dim} components and at least one normal")));
    }
    let y = &c.y0;
    let yh = &c.y_hat0;
    let yu = sym_deriv(y);
    let yhu = sym_deriv(yh);
    let mu1 = sym_inner(&yu, yh);
    let p1 = sym_axpy(&mu1, y, &yu);
    let p1u = sym_deriv(&p1);
    let mut cols: Vec<&[Expr]> = vec![y, yh, &p1];
    for p in &c.psi0 {
        cols.push(p);
    }
    let p2 = sym_completion(&cols);

    // Preconditions at sample points.
    let mut report: Vec<(String, f64)> = Vec::new();
    let mut bump = |name: String, v: f64| {
        if let Some(e) = report.iter_mut().find(|(k, _)| *k == name) {
            e.1 = e.1.max(v);
        } else {
            report.push((name, v));
        }
    };
    for k in 0..16 {
        let u = interval.0 + (interval.1 - interval.0) * (k as f64 + 0.5) / 16.0;
        let chk = |a: &[Expr], b: &[Expr], target: f64| -> Result<f64, PotentialError> {
            let v = sym_inner(a, b).eval_real(u)?;
            Ok((v - target).norm())
        };
        bump("<Y0,Y0>".into(), chk(y, y, 0.0)?);
        bump("<Yhat0,Yhat0>".into(), chk(yh, yh, 0.0)?);
        bump("<Y0,Yhat0>+1".into(), chk(y, yh, -1.0)?);
        bump("<P1,P1>-1".into(), chk(&p1, &p1, 1.0)?);
        bump("<P1,Yhat0>".into(), chk(&p1, yh, 0.0)?);
        for (j, p) in c.psi0.iter().enumerate() {
            bump(format!("<psi{j},Y0>"), chk(p, y, 0.0)?);
            bump(format!("<psi{j},Yhat0>"), chk(p, yh, 0.0)?);
            bump(format!("<psi{j},P1>"), chk(p, &p1, 0.0)?);
            for (l, q) in c.psi0.iter().enumerate() {
                bump(format!("<psi{j},psi{l}>"), chk(p, q, if j == l { 1.0 } else { 0.0 })?);
            }
        }
        bump("<P2,P2>-1".into(), chk(&p2, &p2, 1.0)?);
    }
    let bad: Vec<(String, f64)> = report.iter().filter(|(_, v)| !(*v <= 1e-8)).cloned().collect();
    if !bad.is_empty() {
        return Err(PotentialError::InvalidBjorlingData(bad));
    }

    let rho1 = sym_inner(&yhu, &p1);
    let rho2 = sym_inner(&yhu, &p2);
    let mu2 = sym_inner(&p1u, &p2);
    let k_of = |psi: &[Expr]| {
        let psiu = sym_deriv(psi);
        (mul(Expr::real(0.5), sym_inner(&p1u, psi)), mul(Expr::real(0.5), sym_inner(&p2, &psiu)))
    };
    let complex = |re: Expr, im: Expr| add(re, mul(Expr::imag(1.0), im));
    let (k1, k2) = k_of(&c.psi0[0]);
    let mut gamma = Vec::new();
    for (j, psi) in c.psi0.iter().enumerate() {
        let g1 = mul(Expr::real(0.25), sym_inner(&yhu, psi));
        let g2 = c.gamma12.get(j).cloned().unwrap_or_else(Expr::zero);
        gamma.push(complex(g1, g2));
    }
    let all_zero = gamma.iter().all(|g| {
        (0..16).all(|k| {
            let u = interval.0 + (interval.1 - interval.0) * (k as f64 + 0.5) / 16.0;
            g.eval_real(u).map(|v| v.norm() < 1e-12).unwrap_or(false)
        })
    });
    let mut normal_k = Vec::new();
    for psi in &c.psi0[1..] {
        let (a, b) = k_of(psi);
        normal_k.push(complex(a, b));
    }
    let mut normal_connection = Vec::new();
    for j in 0..n {
        for l in j + 1..n {
            let b = sym_inner(&sym_deriv(&c.psi0[j]), &c.psi0[l]);
            if !b.is_zero() {
                normal_connection.push((j, l, b));
            }
        }
    }
    Ok(BjorlingData {
        mu: complex(mu1, mu2),
        k: complex(k1, k2),
        rho: complex(rho1, rho2),
        gamma: if all_zero && n == 1 { Vec::new() } else { gamma },
        n,
        normal_k,
        normal_connection,
    })
}

/// Pointwise curve data from a real frame `F = (e₋₁, e₀, P₁, P₂, ψ…)` and
/// its `u`-derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub mu1: f64,
    pub mu2: f64,
    pub k1: f64,
    pub k2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub gamma1: Vec<f64>,
}

pub fn frame_data(f: &DMatrix<f64>, fu: &DMatrix<f64>) -> FrameData {
    let ip = |a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>| -a[0] * b[0] + a.rows(1, a.len() - 1).dot(&b.rows(1, b.len() - 1));
    let col = |m: &DMatrix<f64>, j: usize| m.column(j).into_owned();
    let yh = (col(f, 0) + col(f, 1)) / SQRT_2;
    let yu = (col(fu, 0) - col(fu, 1)) / SQRT_2;
    let yhu = (col(fu, 0) + col(fu, 1)) / SQRT_2;
    let (p1, p2, psi) = (col(f, 2), col(f, 3), col(f, 4));
    let (p1u, psiu) = (col(fu, 2), col(fu, 4));
    let n = f.ncols() - 4;
    FrameData {
        mu1: ip(&yu, &yh),
        mu2: ip(&p1u, &p2),
        k1: 0.5 * ip(&p1u, &psi),
        k2: 0.5 * ip(&p2, &psiu),
        rho1: ip(&yhu, &p1),
        rho2: ip(&yhu, &p2),
        gamma1: (0..n).map(|j| 0.25 * ip(&yhu, &col(f, 4 + j))).collect(),
    }
}

/// The real frame `(e₋₁, e₀, P₁, P₂, ψ)` with `e₋₁ = (Y+Ŷ)/√2`, `e₀ = (Ŷ−Y)/√2`.
pub fn frame_from_curves(y: &[f64], y_hat: &[f64], p1: &[f64], p2: &[f64], psi: &[&[f64]]) -> DMatrix<f64> {
    let dim = y.len();
    let mut f = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        f[(i, 0)] = (y[i] + y_hat[i]) / SQRT_2;
        f[(i, 1)] = (y_hat[i] - y[i]) / SQRT_2;
        f[(i, 2)] = p1[i];
        f[(i, 3)] = p2[i];
        for (j, p) in psi.iter().enumerate() {
            f[(i, 4 + j)] = p[i];
        }
    }
    f
}

/// Frame of the circle `(cos u, sin u, 0, 0)` with normal angle `θ(u)`:
/// `Y = (1, cos u, sin u, 0, 0)`, `Ŷ = ½(1, −cos u, −sin u, 0, 0)`,
/// `ψ = −sin θ E₃ + cos θ E₄`, `P₂ = −cos θ E₃ − sin θ E₄`.
pub fn circle_frame(u: f64, theta: f64) -> DMatrix<f64> {
    let (c, s) = (u.cos(), u.sin());
    let (ct, st) = (theta.cos(), theta.sin());
    frame_from_curves(
        &[1.0, c, s, 0.0, 0.0],
        &[0.5, -0.5 * c, -0.5 * s, 0.0, 0.0],
        &[0.0, -s, c, 0.0, 0.0],
        &[0.0, 0.0, 0.0, -ct, -st],
        &[&[0.0, 0.0, 0.0, -st, ct]],
    )
}

/// Curves of [`circle_frame`] as expressions, with `θ` given as an expression.
pub fn circle_curves(theta: &Expr, gamma12: Option<Expr>) -> BjorlingCurves {
    use crate::analytic::{func, Func};
    let u = Expr::Var;
    let (c, s) = (func(Func::Cos, u.clone()), func(Func::Sin, u));
    let (ct, st) = (func(Func::Cos, theta.clone()), func(Func::Sin, theta.clone()));
    let z = Expr::zero;
    BjorlingCurves {
        y0: vec![Expr::one(), c.clone(), s.clone(), z(), z()],
        y_hat0: vec![Expr::real(0.5), mul(Expr::real(-0.5), c), mul(Expr::real(-0.5), s), z(), z()],
        psi0: vec![vec![z(), z(), z(), neg(st), ct]],
        gamma12: gamma12.into_iter().collect(),
    }
}
