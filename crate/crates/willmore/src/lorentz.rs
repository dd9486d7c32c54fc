//! Lorentzian linear algebra on R^{1,n+3}, light-cone lifts and projections to
//! the space-form models.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for lightlike and orthogonality tests.
pub const LIGHTLIKE_TOL: f64 = 1e-9;

/// Tolerance for frame validity `‖FᵗIF − I‖∞`.
pub const FRAME_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LorentzError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("dimension {0} is below the minimum of 5")]
    DimensionTooSmall(usize),
    #[error("vector is not forward lightlike (Y0 = {0})")]
    NotForwardLightlike(f64),
    #[error("point coincides with the projection pole")]
    PointAtInfinity,
    #[error("projection divisor {0} below tolerance")]
    DivisorVanishes(f64),
    #[error("slot {0} out of range for dimension {1}")]
    BadSlot(usize, usize),
    #[error("matrix is not a time-oriented Lorentz frame (residual {residual:.3e}, det {det:.6}, F00 {f00:.6})")]
    InvalidFrame { residual: f64, det: f64, f00: f64 },
}

/// The metric `diag(-1, 1, ..., 1)` of dimension `dim = n + 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    dim: usize,
}

impl Signature {
    pub fn new(dim: usize) -> Result<Self, LorentzError> {
        if dim < 5 {
            return Err(LorentzError::DimensionTooSmall(dim));
        }
        Ok(Self { dim })
    }

    /// Signature for surfaces in S^{n+2}.
    pub fn for_codim(n: usize) -> Self {
        Self { dim: n + 4 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sign(&self, i: usize) -> f64 {
        if i == 0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn metric(&self) -> DMatrix<f64> {
        metric(self.dim)
    }
}

pub type LorentzVec = DVector<f64>;
pub type CVec = DVector<Complex64>;

/// `I_{1,dim-1}` as a real matrix.
pub fn metric(dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(dim, dim);
    m[(0, 0)] = -1.0;
    m
}

/// `I_{1,dim-1}` as a complex matrix.
pub fn metric_c(dim: usize) -> DMatrix<Complex64> {
    metric(dim).map(|x| Complex64::new(x, 0.0))
}

/// `⟨a,b⟩ = −a₀b₀ + Σ aⱼbⱼ`.
pub fn inner(a: &LorentzVec, b: &LorentzVec) -> Result<f64, LorentzError> {
    if a.len() != b.len() {
        return Err(LorentzError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(inner_unchecked(a.as_slice(), b.as_slice()))
}

pub(crate) fn inner_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut s = -a[0] * b[0];
    for j in 1..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// Complex-bilinear extension of the metric (no conjugation).
pub fn inner_c(a: &CVec, b: &CVec) -> Complex64 {
    let mut s = -a[0] * b[0];
    for j in 1..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// Hermitian pairing `⟨a, b̄⟩`.
pub fn inner_h(a: &CVec, b: &CVec) -> Complex64 {
    let mut s = -a[0] * b[0].conj();
    for j in 1..a.len() {
        s += a[j] * b[j].conj();
    }
    s
}

/// The basis vector `E_i`.
pub fn basis(dim: usize, i: usize) -> LorentzVec {
    let mut v = DVector::zeros(dim);
    v[i] = 1.0;
    v
}

/// A frame in `SO⁺(1, dim−1)`: columns `(e₋₁, e₀, e₁, …)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzFrame {
    m: DMatrix<f64>,
}

impl LorentzFrame {
    /// Validates `FᵗIF = I`, `det F = 1` and `F₀₀ > 0`.
    pub fn new(m: DMatrix<f64>) -> Result<Self, LorentzError> {
        let (residual, det) = frame_residual(&m);
        let f00 = m[(0, 0)];
        if residual >= FRAME_TOL.max(1e-10) || (det - 1.0).abs() > 1e-8 || f00 <= 0.0 {
            return Err(LorentzError::InvalidFrame { residual, det, f00 });
        }
        Ok(Self { m })
    }

    /// Same checks with a caller-chosen orthonormality tolerance.
    pub fn with_tolerance(m: DMatrix<f64>, tol: f64) -> Result<Self, LorentzError> {
        let (residual, det) = frame_residual(&m);
        let f00 = m[(0, 0)];
        if residual >= tol || (det - 1.0).abs() > tol.max(1e-8) || f00 <= 0.0 {
            return Err(LorentzError::InvalidFrame { residual, det, f00 });
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn column(&self, j: usize) -> LorentzVec {
        self.m.column(j).into_owned()
    }

    /// `Y = (e₋₁ − e₀)/√2`.
    pub fn y(&self) -> LorentzVec {
        (self.column(0) - self.column(1)) / std::f64::consts::SQRT_2
    }

    /// `Ŷ = (e₋₁ + e₀)/√2`.
    pub fn y_hat(&self) -> LorentzVec {
        (self.column(0) + self.column(1)) / std::f64::consts::SQRT_2
    }

    /// Builds the frame `((Y+Ŷ)/√2, (−Y+Ŷ)/√2, P₁, P₂, ψ…)`.
    pub fn from_lifts(
        y: &LorentzVec,
        y_hat: &LorentzVec,
        rest: &[LorentzVec],
    ) -> Result<Self, LorentzError> {
        let dim = y.len();
        if rest.len() + 2 != dim {
            return Err(LorentzError::DimensionMismatch(rest.len() + 2, dim));
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut m = DMatrix::zeros(dim, dim);
        m.set_column(0, &((y + y_hat) * s));
        m.set_column(1, &((y_hat - y) * s));
        for (j, c) in rest.iter().enumerate() {
            m.set_column(j + 2, c);
        }
        Self::with_tolerance(m, 1e-8)
    }
}

/// `(‖FᵗIF − I‖∞, det F)`.
pub fn frame_residual(m: &DMatrix<f64>) -> (f64, f64) {
    let dim = m.nrows();
    let i = metric(dim);
    let r = m.transpose() * &i * m - &i;
    (r.amax(), m.determinant())
}

/// `y` with `Y = Y₀·(1, y)`.
pub fn project_sphere(y: &LorentzVec) -> Result<DVector<f64>, LorentzError> {
    let scale = y.amax().max(1.0);
    if y[0] <= LIGHTLIKE_TOL * scale {
        return Err(LorentzError::NotForwardLightlike(y[0]));
    }
    Ok(y.rows(1, y.len() - 1) / y[0])
}

/// Stereographic projection of `y ∈ S³` from `pole` onto the orthogonal hyperplane.
pub fn stereographic(y: &DVector<f64>, pole: &DVector<f64>) -> Result<DVector<f64>, LorentzError> {
    if y.len() != pole.len() {
        return Err(LorentzError::DimensionMismatch(y.len(), pole.len()));
    }
    let t = 1.0 - y.dot(pole);
    if t <= 1e-12 {
        return Err(LorentzError::PointAtInfinity);
    }
    let w = (y - pole * y.dot(pole)) / t;
    Ok(hyperplane_coords(&w, pole))
}

/// Inverse of [`stereographic`].
pub fn inverse_stereographic(x: &DVector<f64>, pole: &DVector<f64>) -> DVector<f64> {
    let w = from_hyperplane_coords(x, pole);
    let s = w.norm_squared();
    (w * 2.0 + pole * (s - 1.0)) / (s + 1.0)
}

// Coordinates in the hyperplane orthogonal to `pole`.  For a coordinate pole
// ±E_k this drops slot k; otherwise an orthonormal basis is built by
// Gram–Schmidt against the standard basis.
fn hyperplane_basis(pole: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = pole.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    let p = pole.normalize();
    let k = p.iamax();
    for i in 0..n {
        if i == k {
            continue;
        }
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e -= &p * p.dot(&e);
        for b in &basis {
            let c = b.dot(&e);
            e -= b * c;
        }
        basis.push(e.normalize());
    }
    basis
}

fn hyperplane_coords(w: &DVector<f64>, pole: &DVector<f64>) -> DVector<f64> {
    let basis = hyperplane_basis(pole);
    DVector::from_iterator(basis.len(), basis.iter().map(|b| b.dot(w)))
}

fn from_hyperplane_coords(x: &DVector<f64>, pole: &DVector<f64>) -> DVector<f64> {
    let basis = hyperplane_basis(pole);
    let mut w = DVector::zeros(pole.len());
    for (c, b) in x.iter().zip(basis.iter()) {
        w += b * *c;
    }
    w
}

/// Target model for [`project_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    /// `y ∈ S^{n+2} ⊂ R^{n+3}`.
    Sphere,
    /// `y ∈ S³` followed by stereographic projection from `pole`.
    Stereographic { pole: Vec<f64> },
    /// Divide the remaining coordinates by `Y_slot`.
    Hyperbolic { slot: usize },
    /// `(Y_a, Y_b, Y_c)/(Y_p − Y_q)`.
    PoincareBall { numer: [usize; 3], denom: (usize, usize) },
}

impl Default for Model {
    fn default() -> Self {
        Model::Stereographic { pole: vec![0.0, 0.0, 0.0, 1.0] }
    }
}

impl Model {
    /// The Poincaré-ball map `(Y₁,Y₂,Y₄)/(Y₀−Y₃)`.
    pub fn poincare_default() -> Self {
        Model::PoincareBall { numer: [1, 2, 4], denom: (0, 3) }
    }
}

pub fn project_model(y: &LorentzVec, model: &Model) -> Result<DVector<f64>, LorentzError> {
    let dim = y.len();
    let scale = y.amax().max(1e-300);
    match model {
        Model::Sphere => project_sphere(y),
        Model::Stereographic { pole } => {
            let p = project_sphere(y)?;
            stereographic(&p, &DVector::from_column_slice(pole))
        }
        Model::Hyperbolic { slot } => {
            if *slot >= dim {
                return Err(LorentzError::BadSlot(*slot, dim));
            }
            let d = y[*slot];
            if d.abs() <= LIGHTLIKE_TOL * scale {
                return Err(LorentzError::DivisorVanishes(d));
            }
            Ok(DVector::from_iterator(
                dim - 1,
                (0..dim).filter(|i| i != slot).map(|i| y[i] / d),
            ))
        }
        Model::PoincareBall { numer, denom } => {
            for &s in numer.iter().chain([denom.0, denom.1].iter()) {
                if s >= dim {
                    return Err(LorentzError::BadSlot(s, dim));
                }
            }
            let d = y[denom.0] - y[denom.1];
            if d.abs() <= LIGHTLIKE_TOL * scale {
                return Err(LorentzError::DivisorVanishes(d));
            }
            Ok(DVector::from_vec(numer.iter().map(|&i| y[i] / d).collect()))
        }
    }
}
