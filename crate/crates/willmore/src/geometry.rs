//! Closed-form oracles and geometric checks on surface fields.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpw::{DomainGrid, SurfaceField, SurfaceVertex, VertexStatus};
use crate::lorentz::{frame_residual, project_sphere, CVec};
use crate::loopgroup::{expm, metric_inverse, CMat};
use crate::potential::{HoloPotential, MinimalClass};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("translation {t} is not a multiple of the grid step {du}")]
    Misaligned { t: f64, du: f64 },
    #[error("need at least {need} valid vertices, have {have}")]
    TooFewVertices { need: usize, have: usize },
    #[error("{0}")]
    Precondition(String),
}

fn lorentz_dot(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) - 2.0 * a[0] * b[0]
}

fn lorentz_dot_c(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).enumerate().map(|(i, (x, y))| if i == 0 { -x * y } else { x * y }).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClosedFormFamily {
    Lawson { r: f64 },
    HyperbolicLawson { r: f64 },
    Clifford,
}

// Five-point Gauss–Legendre on [−1, 1].
const GL_X: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GL_W: [f64; 5] = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];

fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let panels = ((b - a).abs() / 0.02).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for k in 0..panels {
        let m = a + h * (k as f64 + 0.5);
        for (x, w) in GL_X.iter().zip(GL_W) {
            s += w * f(m + 0.5 * h * x);
        }
    }
    0.5 * h * s
}

fn stretch(r: f64, vt: f64, hyperbolic: bool) -> f64 {
    if hyperbolic {
        (vt.cosh().powi(2) + r * r * vt.sinh().powi(2)).sqrt()
    } else {
        (vt.cos().powi(2) + r * r * vt.sin().powi(2)).sqrt()
    }
}

/// Conformal coordinate `v(ṽ) = ∫₀^ṽ dw / R(w)`.
pub fn conformal_v(r: f64, vt: f64, hyperbolic: bool) -> f64 {
    gauss_legendre(|w| 1.0 / stretch(r, w, hyperbolic), 0.0, vt)
}

/// Inverts [`conformal_v`] by bisection.
pub fn native_v(r: f64, v: f64, hyperbolic: bool) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let sign = v.signum();
    let target = v.abs();
    let (mut lo, mut hi) = (0.0, target.max(1e-3));
    while conformal_v(r, hi, hyperbolic) < target {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if conformal_v(r, mid, hyperbolic) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    sign * 0.5 * (lo + hi)
}

fn vertex_from_parts(y: [f64; 5], y_hat: [f64; 5], p1: [f64; 5], p2: [f64; 5], psi: [f64; 5], yz: CVec) -> SurfaceVertex {
    let d = |a: [f64; 5]| DVector::from_row_slice(&a);
    let mut v = SurfaceVertex {
        y: d(y),
        y_hat: d(y_hat),
        p1: d(p1),
        p2: d(p2),
        psi: vec![d(psi)],
        yz: Some(yz),
        frame_residual: 0.0,
        imag_residual: 0.0,
    };
    v.frame_residual = frame_residual(&v.frame()).0;
    v
}

/// Lawson frame at `(u, ṽ)` with `Y_z` in the conformal coordinate.
pub fn lawson_vertex(r: f64, u: f64, vt: f64) -> SurfaceVertex {
    let (cu, su) = (u.cos(), u.sin());
    let (cr, sr) = ((r * u).cos(), (r * u).sin());
    let (cv, sv) = (vt.cos(), vt.sin());
    let big_r = stretch(r, vt, false);
    let y = [cu * cv, su * cv, cr * sv, sr * sv];
    let yu = [-su * cv, cu * cv, -r * sr * sv, r * cr * sv];
    let yt = [-cu * sv, -su * sv, cr * cv, sr * cv];
    let yz = CVec::from_fn(5, |i, _| if i == 0 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.5 * yu[i - 1], -0.5 * big_r * yt[i - 1]) });
    vertex_from_parts(
        [1.0, y[0], y[1], y[2], y[3]],
        [0.5, -0.5 * y[0], -0.5 * y[1], -0.5 * y[2], -0.5 * y[3]],
        [0.0, yu[0] / big_r, yu[1] / big_r, yu[2] / big_r, yu[3] / big_r],
        [0.0, yt[0], yt[1], yt[2], yt[3]],
        [0.0, -r * su * sv / big_r, r * cu * sv / big_r, sr * cv / big_r, -cr * cv / big_r],
        yz,
    )
}

/// Hyperbolic Lawson frame at `(u, ṽ)`; `Y = (f, 1)` with `f` in `ℝ¹'³`.
pub fn hyperbolic_lawson_vertex(r: f64, u: f64, vt: f64) -> SurfaceVertex {
    let (chu, shu) = (u.cosh(), u.sinh());
    let (cr, sr) = ((r * u).cos(), (r * u).sin());
    let (ch, sh) = (vt.cosh(), vt.sinh());
    let big_r = stretch(r, vt, true);
    let f = [ch * chu, ch * shu, sh * cr, sh * sr];
    let fu = [ch * shu, ch * chu, -r * sh * sr, r * sh * cr];
    let ft = [sh * chu, sh * shu, ch * cr, ch * sr];
    let yz = CVec::from_fn(5, |i, _| if i == 4 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.5 * fu[i], -0.5 * big_r * ft[i]) });
    vertex_from_parts(
        [f[0], f[1], f[2], f[3], 1.0],
        [0.5 * f[0], 0.5 * f[1], 0.5 * f[2], 0.5 * f[3], -0.5],
        [fu[0] / big_r, fu[1] / big_r, fu[2] / big_r, fu[3] / big_r, 0.0],
        [ft[0], ft[1], ft[2], ft[3], 0.0],
        [-r * sh * shu / big_r, -r * sh * chu / big_r, -ch * sr / big_r, ch * cr / big_r, 0.0],
        yz,
    )
}

/// Closed-form surface sampled on `grid` in conformal coordinates.
pub fn closed_form(family: ClosedFormFamily, grid: &DomainGrid) -> Result<SurfaceField, GeometryError> {
    grid.validate().map_err(|e| GeometryError::Precondition(e.to_string()))?;
    let (r, hyperbolic) = match family {
        ClosedFormFamily::Lawson { r } => (r, false),
        ClosedFormFamily::HyperbolicLawson { r } => (r, true),
        ClosedFormFamily::Clifford => (1.0, false),
    };
    if r == 0.0 || !r.is_finite() {
        return Err(GeometryError::Precondition("r must be finite and nonzero".into()));
    }
    let vts: Vec<f64> = (0..grid.nv).into_par_iter().map(|j| native_v(r, grid.v(j), hyperbolic)).collect();
    let mut vertices = Vec::with_capacity(grid.len());
    for vt in &vts {
        for i in 0..grid.nu {
            let u = grid.u(i);
            vertices.push(Some(if hyperbolic { hyperbolic_lawson_vertex(r, u, *vt) } else { lawson_vertex(r, u, *vt) }));
        }
    }
    Ok(SurfaceField {
        grid: grid.clone(),
        n: 1,
        vertices,
        status: vec![VertexStatus::Valid; grid.len()],
        near_boundary: vec![false; grid.len()],
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Axis {
    U,
    V,
}

/// Finite-difference derivative of a per-vertex vector: fourth order on any
/// window of five consecutive valid vertices containing the point, else lower.
fn derivative(sf: &SurfaceField, i: usize, j: usize, axis: Axis, f: &dyn Fn(&SurfaceVertex) -> DVector<f64>) -> Option<DVector<f64>> {
    let g = &sf.grid;
    let (pos, len, h) = match axis {
        Axis::U => (i as i64, g.nu as i64, g.du()),
        Axis::V => (j as i64, g.nv as i64, g.dv()),
    };
    let at = |k: i64| -> Option<DVector<f64>> {
        if k < 0 || k >= len {
            return None;
        }
        let idx = match axis {
            Axis::U => g.index(k as usize, j),
            Axis::V => g.index(i, k as usize),
        };
        sf.vertices[idx].as_ref().map(f)
    };
    at(pos)?;
    // Fourth-order stencils by offset window; fall back to second order.
    const STENCILS: [(i64, [f64; 5]); 5] = [
        (-2, [1.0, -8.0, 0.0, 8.0, -1.0]),
        (-1, [-3.0, -10.0, 18.0, -6.0, 1.0]),
        (-3, [-1.0, 6.0, -18.0, 10.0, 3.0]),
        (0, [-25.0, 48.0, -36.0, 16.0, -3.0]),
        (-4, [3.0, -16.0, 36.0, -48.0, 25.0]),
    ];
    for (start, w) in STENCILS {
        let vals: Option<Vec<DVector<f64>>> = (0..5).map(|k| at(pos + start + k)).collect();
        if let Some(vals) = vals {
            let mut acc = &vals[0] * w[0];
            for k in 1..5 {
                acc += &vals[k] * w[k];
            }
            return Some(acc / (12.0 * h));
        }
    }
    match (at(pos - 1), at(pos + 1)) {
        (Some(b), Some(d)) => Some((d - b) / (2.0 * h)),
        (Some(b), None) => Some((at(pos)? - b) / h),
        (None, Some(d)) => Some((d - at(pos)?) / h),
        _ => None,
    }
}

fn z_derivative(sf: &SurfaceField, i: usize, j: usize, f: &dyn Fn(&SurfaceVertex) -> DVector<f64>) -> Option<CVec> {
    let du = derivative(sf, i, j, Axis::U, f)?;
    let dv = derivative(sf, i, j, Axis::V, f)?;
    Some(du.zip_map(&dv, |a, b| Complex64::new(0.5 * a, -0.5 * b)))
}

/// `Y_z` from the field when known exactly, else by finite differences.
fn y_z(sf: &SurfaceField, i: usize, j: usize) -> Option<CVec> {
    let v = sf.get(i, j)?;
    v.yz.clone().or_else(|| z_derivative(sf, i, j, &|w| w.y.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexResiduals {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
    pub y_null: f64,
    pub y_hat_null: f64,
    pub duality: f64,
    /// `|⟨Y_z,Y_z⟩| / ⟨Y_z,Y_z̄⟩`, exact `Y_z` when available.
    pub conformality: f64,
    /// Same from finite differences of `Y`.
    pub conformality_fd: f64,
    pub frame: f64,
    /// `⟨Y_z,Y_z̄⟩`.
    pub immersion: f64,
    pub immersed: bool,
    pub near_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub rows: Vec<VertexResiduals>,
}

pub const RESIDUAL_COLUMNS: [&str; 9] = ["y_null", "y_hat_null", "duality", "conformality", "conformality_fd", "frame", "immersion", "immersed", "near_boundary"];

impl VertexResiduals {
    pub fn values(&self) -> [f64; 9] {
        [
            self.y_null,
            self.y_hat_null,
            self.duality,
            self.conformality,
            self.conformality_fd,
            self.frame,
            self.immersion,
            self.immersed as u8 as f64,
            self.near_boundary as u8 as f64,
        ]
    }
}

impl ResidualReport {
    /// `(name, value)` pairs: vertex counts and maxima over valid vertices.
    pub fn aggregates(&self) -> Vec<(String, f64)> {
        let valid: Vec<&VertexResiduals> = self.rows.iter().filter(|r| r.valid).collect();
        let max = |f: &dyn Fn(&VertexResiduals) -> f64| valid.iter().map(|r| f(r)).filter(|x| x.is_finite()).fold(0.0, f64::max);
        let immersed: Vec<&&VertexResiduals> = valid.iter().filter(|r| r.immersed).collect();
        vec![
            ("vertices".into(), self.rows.len() as f64),
            ("valid".into(), valid.len() as f64),
            ("immersed".into(), immersed.len() as f64),
            ("near_boundary".into(), valid.iter().filter(|r| r.near_boundary).count() as f64),
            ("max_y_null".into(), max(&|r| r.y_null)),
            ("max_y_hat_null".into(), max(&|r| r.y_hat_null)),
            ("max_duality".into(), max(&|r| r.duality)),
            ("max_conformality".into(), immersed.iter().map(|r| r.conformality).filter(|x| x.is_finite()).fold(0.0, f64::max)),
            ("max_conformality_fd".into(), immersed.iter().map(|r| r.conformality_fd).filter(|x| x.is_finite()).fold(0.0, f64::max)),
            ("max_frame".into(), max(&|r| r.frame)),
        ]
    }
}

fn conformality(yz: &CVec) -> (f64, f64) {
    let q = lorentz_dot_c(yz, yz).norm();
    let m = lorentz_dot_c(yz, &yz.map(|z| z.conj())).re;
    (q, m)
}

/// Immersion threshold relative to the largest `⟨Y_z,Y_z̄⟩` on the field.
pub const IMMERSION_REL_TOL: f64 = 1e-10;
pub const IMMERSION_ABS_TOL: f64 = 1e-20;

pub fn residual_report(sf: &SurfaceField) -> ResidualReport {
    let g = &sf.grid;
    let mut rows: Vec<VertexResiduals> = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = g.coords(idx);
            let mut r = VertexResiduals {
                u: g.u(i),
                v: g.v(j),
                valid: false,
                y_null: f64::NAN,
                y_hat_null: f64::NAN,
                duality: f64::NAN,
                conformality: f64::NAN,
                conformality_fd: f64::NAN,
                frame: f64::NAN,
                immersion: 0.0,
                immersed: false,
                near_boundary: sf.near_boundary[idx],
            };
            let Some(v) = sf.vertices[idx].as_ref() else { return r };
            r.valid = true;
            r.y_null = lorentz_dot(&v.y, &v.y).abs();
            r.y_hat_null = lorentz_dot(&v.y_hat, &v.y_hat).abs();
            r.duality = (lorentz_dot(&v.y, &v.y_hat) + 1.0).abs();
            r.frame = v.frame_residual;
            let fd = z_derivative(sf, i, j, &|w| w.y.clone());
            let exact = v.yz.clone().or_else(|| fd.clone());
            if let Some(yz) = exact {
                let (q, m) = conformality(&yz);
                r.immersion = m;
                r.conformality = if m > IMMERSION_ABS_TOL { q / m } else { q };
            }
            if let Some(yz) = fd {
                let (q, m) = conformality(&yz);
                r.conformality_fd = if m > IMMERSION_ABS_TOL { q / m } else { q };
            }
            r
        })
        .collect();
    let top = rows.iter().filter(|r| r.valid).map(|r| r.immersion).fold(0.0, f64::max);
    for r in &mut rows {
        r.immersed = r.valid && r.immersion > IMMERSION_ABS_TOL.max(IMMERSION_REL_TOL * top);
    }
    ResidualReport { rows }
}

/// `|κ|²`-density: `Σⱼ |⟨(ψⱼ)_z, Y_z⟩|² / ⟨Y_z,Y_z̄⟩`, independent of the lift
/// scale. `None` where the vertex is invalid or not immersed.
pub fn umbilic_density(sf: &SurfaceField) -> Vec<Option<f64>> {
    let g = &sf.grid;
    (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = g.coords(idx);
            let v = sf.vertices[idx].as_ref()?;
            let yz = y_z(sf, i, j)?;
            let (_, m) = conformality(&yz);
            if !(m > IMMERSION_ABS_TOL) {
                return None;
            }
            let mut s = 0.0;
            for k in 0..v.psi.len() {
                let pz = z_derivative(sf, i, j, &|w| w.psi[k].clone())?;
                s += lorentz_dot_c(&pz, &yz).norm_sqr();
            }
            Some(s / m)
        })
        .collect()
}

pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Umbilic threshold relative to the grid median of the density.
pub const UMBILIC_REL_TOL: f64 = 1e-5;

pub fn umbilic_mask(density: &[Option<f64>]) -> Vec<bool> {
    let med = median(density.iter().flatten().copied()).unwrap_or(0.0);
    density.iter().map(|g| g.map(|g| g < UMBILIC_REL_TOL * med).unwrap_or(false)).collect()
}

/// Generator `F₀·Ξ(λ=1)·F₀⁻¹` of the one-parameter group carrying a run with
/// `z`-independent potential along `u`.
pub fn equivariance_generator(p: &HoloPotential, f0: &DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
    let xi = p.at_one(p.base).map_err(|e| GeometryError::Precondition(e.to_string()))?;
    let f = f0.map(|x| Complex64::new(x, 0.0));
    Ok((&f * xi * metric_inverse(&f)).map(|z| z.re))
}

/// `exp(tX)` for a real matrix.
pub fn real_expm(x: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let c: CMat = x.map(|v| Complex64::new(v * t, 0.0));
    expm(&c).map(|z| z.re)
}

/// Generator rotating coordinate `a` towards `b` at unit rate.
pub fn rotation_generator(dim: usize, a: usize, b: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(dim, dim);
    x[(b, a)] = 1.0;
    x[(a, b)] = -1.0;
    x
}

/// Largest `S³` distance between `Y(u+t, v)` and `exp(tX)·Y(u, v)`.
pub fn equivariance_check(sf: &SurfaceField, generator: &DMatrix<f64>, t: f64) -> Result<f64, GeometryError> {
    let g = &sf.grid;
    let du = g.du();
    let k = (t / du).round();
    if (t - k * du).abs() > 1e-9 * du.max(t.abs()) {
        return Err(GeometryError::Misaligned { t, du });
    }
    let shift = k as i64;
    let m = real_expm(generator, t);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for j in 0..g.nv {
        for i in 0..g.nu {
            let i2 = i as i64 + shift;
            if i2 < 0 || i2 >= g.nu as i64 {
                continue;
            }
            let (Some(a), Some(b)) = (sf.get(i, j), sf.get(i2 as usize, j)) else { continue };
            let (Ok(pa), Ok(pb)) = (project_sphere(&(&m * &a.y)), project_sphere(&b.y)) else { continue };
            worst = worst.max((pa - pb).norm());
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(GeometryError::Precondition("no valid vertex pairs at this translation".into()));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantCombination {
    /// Fitted constant vector, unit Euclidean length.
    pub vector: Vec<f64>,
    /// Per vertex `(a, b)` with `aY + bŶ` the projection of the vector.
    pub coeffs: Vec<Option<(f64, f64)>>,
    /// `⟨X, X⟩`.
    pub causal: f64,
    /// RMS Euclidean distance of the vector from `span{Y, Ŷ}`.
    pub residual: f64,
    pub class: MinimalClass,
}

pub const COMBINATION_FIT_TOL: f64 = 1e-3;
pub const LIGHTLIKE_TOL: f64 = 1e-6;

/// Least-squares constant vector in `span{Y, Ŷ}` across the field.
pub fn find_constant_combination(sf: &SurfaceField) -> Result<ConstantCombination, GeometryError> {
    let valid: Vec<&SurfaceVertex> = sf.vertices.iter().flatten().collect();
    if valid.len() < 10 {
        return Err(GeometryError::TooFewVertices { need: 10, have: valid.len() });
    }
    let dim = valid[0].y.len();
    let bases: Vec<Option<DMatrix<f64>>> = sf
        .vertices
        .iter()
        .map(|v| {
            let v = v.as_ref()?;
            let e1 = v.y.normalize();
            let w = &v.y_hat - &e1 * e1.dot(&v.y_hat);
            let e2 = w.normalize();
            Some(DMatrix::from_columns(&[e1, e2]))
        })
        .collect();
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for q in bases.iter().flatten() {
        m += DMatrix::identity(dim, dim) - q * q.transpose();
    }
    let eig = m.symmetric_eigen();
    let k = (0..dim).min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).unwrap();
    let x = eig.eigenvectors.column(k).into_owned();
    let residual = (bases.iter().flatten().map(|q| (&x - q * (q.transpose() * &x)).norm_squared()).sum::<f64>() / valid.len() as f64).sqrt();
    let causal = lorentz_dot(&x, &x);
    let coeffs = sf
        .vertices
        .iter()
        .map(|v| {
            let v = v.as_ref()?;
            let a = DMatrix::from_columns(&[v.y.clone(), v.y_hat.clone()]);
            let sol = a.svd(true, true).solve(&x, 1e-14).ok()?;
            Some((sol[0], sol[1]))
        })
        .collect();
    let class = if residual > COMBINATION_FIT_TOL {
        MinimalClass::None
    } else if causal.abs() < LIGHTLIKE_TOL {
        MinimalClass::R3
    } else if causal < 0.0 {
        MinimalClass::S3
    } else {
        MinimalClass::H3
    };
    Ok(ConstantCombination { vector: x.iter().copied().collect(), coeffs, causal, residual, class })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadricFit {
    /// Trace-free symmetric form with unit Frobenius norm.
    pub form: Vec<Vec<f64>>,
    /// Eigenvalues scaled so the largest magnitude is 1, ascending.
    pub eigenvalues: Vec<f64>,
    /// RMS of `xᵗQx` over the points.
    pub residual: f64,
}

fn trace_free_basis(d: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            let mut m = DMatrix::zeros(d, d);
            m[(i, j)] = s;
            m[(j, i)] = s;
            out.push(m);
        }
    }
    // Diagonal: orthonormal basis of trace-free diagonals.
    for k in 1..d {
        let mut m = DMatrix::zeros(d, d);
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            m[(i, i)] = 1.0 / norm;
        }
        m[(k, k)] = -(k as f64) / norm;
        out.push(m);
    }
    out
}

/// Least-squares trace-free quadric `xᵗQx = 0` through points on a sphere.
pub fn fit_quadric(points: &[DVector<f64>]) -> Result<QuadricFit, GeometryError> {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    let basis = trace_free_basis(d);
    if points.len() < basis.len() + 1 {
        return Err(GeometryError::TooFewVertices { need: basis.len() + 1, have: points.len() });
    }
    let a = DMatrix::from_fn(points.len(), basis.len(), |r, c| (points[r].transpose() * &basis[c] * &points[r])[(0, 0)]);
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let k = (0..basis.len()).min_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y])).unwrap();
    let c = vt.row(k).transpose();
    let mut q = DMatrix::zeros(d, d);
    for (b, w) in basis.iter().zip(c.iter()) {
        q += b * *w;
    }
    let residual = ((&a * c).norm_squared() / points.len() as f64).sqrt();
    let mut ev: Vec<f64> = q.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    let top = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    ev.iter_mut().for_each(|x| *x /= top);
    ev.sort_by(f64::total_cmp);
    Ok(QuadricFit { form: (0..d).map(|i| q.row(i).iter().copied().collect()).collect(), eigenvalues: ev, residual })
}

/// Points of the field on the unit sphere `y[1..]/y[0]`.
pub fn sphere_points(sf: &SurfaceField) -> Vec<DVector<f64>> {
    sf.vertices.iter().flatten().filter_map(|v| project_sphere(&v.y).ok()).collect()
}

/// Largest `S³` distance between two fields on the same grid.
pub fn sphere_distance(a: &SurfaceField, b: &SurfaceField) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for (x, y) in a.vertices.iter().zip(&b.vertices) {
        let (Some(x), Some(y)) = (x, y) else { continue };
        let (Ok(px), Ok(py)) = (project_sphere(&x.y), project_sphere(&y.y)) else { continue };
        let d = (px - py).norm();
        worst = Some(worst.map_or(d, |w| w.max(d)));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpw::DomainGrid;
    use crate::lorentz::metric;

    fn grid() -> DomainGrid {
        DomainGrid::new([-std::f64::consts::PI, std::f64::consts::PI], [-0.6, 0.6], 33, 25, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn conformal_coordinate_round_trip() {
        for r in [0.5, 2.0, 3.0] {
            for hyperbolic in [false, true] {
                for v in [-0.6, 0.1, 0.45] {
                    let vt = native_v(r, v, hyperbolic);
                    assert!((conformal_v(r, vt, hyperbolic) - v).abs() < 1e-12);
                }
            }
        }
        // r = 1 is the identity reparametrization.
        assert!((native_v(1.0, 0.3, false) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn lawson_one_is_clifford() {
        // x₁² + x₂² = cos²ṽ, and ṽ = v when r = 1.
        let g = DomainGrid::new([-1.0, 1.0], [0.0, 1.0], 5, 3, [0.0, 0.0]).unwrap();
        let sf = closed_form(ClosedFormFamily::Clifford, &g).unwrap();
        for j in 0..3 {
            for i in 0..5 {
                let p = project_sphere(&sf.get(i, j).unwrap().y).unwrap();
                assert!((p[0] * p[0] + p[1] * p[1] - g.v(j).cos().powi(2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lawson_origin() {
        let v = lawson_vertex(2.0, 0.0, 0.0);
        assert_eq!(v.y.as_slice(), &[1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn closed_frames_are_lorentz_frames() {
        for fam in [ClosedFormFamily::Lawson { r: 2.0 }, ClosedFormFamily::HyperbolicLawson { r: 2.0 }, ClosedFormFamily::HyperbolicLawson { r: 0.5 }] {
            let sf = closed_form(fam, &grid()).unwrap();
            for v in sf.vertices.iter().flatten() {
                assert!(v.frame_residual < 1e-12, "{fam:?} {}", v.frame_residual);
                assert!((lorentz_dot(&v.y, &v.y_hat) + 1.0).abs() < 1e-12);
                for w in [&v.y, &v.y_hat, &v.p1, &v.p2] {
                    assert!(lorentz_dot(&v.psi[0], w).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn closed_form_conformality_exact_and_fd() {
        for fam in [ClosedFormFamily::Lawson { r: 2.0 }, ClosedFormFamily::HyperbolicLawson { r: 1.5 }] {
            let g = DomainGrid::new([-1.0, 1.0], [-0.5, 0.5], 161, 81, [0.0, 0.0]).unwrap();
            let sf = closed_form(fam, &g).unwrap();
            let rep = residual_report(&sf);
            let agg: std::collections::HashMap<String, f64> = rep.aggregates().into_iter().collect();
            assert!(agg["max_conformality"] < 1e-12, "{agg:?}");
            // Interior rows only for the finite-difference version.
            let fd = rep.rows.iter().filter(|r| r.u.abs() < 0.9 && r.v.abs() < 0.45).map(|r| r.conformality_fd).fold(0.0, f64::max);
            assert!(fd < 1e-6, "{fam:?} {fd}");
            // Exact Y_z agrees with the finite-difference Y_z.
            let (i, j) = (80, 40);
            let fdz = z_derivative(&sf, i, j, &|w| w.y.clone()).unwrap();
            let ex = sf.get(i, j).unwrap().yz.clone().unwrap();
            assert!((fdz - ex).norm() < 1e-7);
        }
    }

    #[test]
    fn constant_field_is_not_immersed() {
        let mut sf = closed_form(ClosedFormFamily::Clifford, &grid()).unwrap();
        let v0 = sf.vertices[0].clone().unwrap();
        for v in sf.vertices.iter_mut() {
            let mut w = v0.clone();
            w.yz = None;
            *v = Some(w);
        }
        let rep = residual_report(&sf);
        assert!(rep.rows.iter().all(|r| !r.immersed && r.conformality < 1e-15));
    }

    #[test]
    fn lawson_equivariance_is_exact() {
        let r = 2.0;
        let sf = closed_form(ClosedFormFamily::Lawson { r }, &grid()).unwrap();
        let mut x = rotation_generator(5, 1, 2);
        x += rotation_generator(5, 3, 4) * r;
        let t = 4.0 * sf.grid.du();
        assert!(equivariance_check(&sf, &x, t).unwrap() < 1e-12);
        assert!(equivariance_check(&sf, &x, 0.1234).is_err());
        // Wrong rate is caught.
        let y = rotation_generator(5, 1, 2) + rotation_generator(5, 3, 4);
        assert!(equivariance_check(&sf, &y, t).unwrap() > 1e-2);
    }

    #[test]
    fn lawson_constant_combination_is_spherical() {
        let sf = closed_form(ClosedFormFamily::Lawson { r: 2.0 }, &grid()).unwrap();
        let c = find_constant_combination(&sf).unwrap();
        assert!(c.residual < 1e-12);
        assert_eq!(c.class, MinimalClass::S3);
        // Y + 2Ŷ = (2, 0, 0, 0, 0).
        assert!((c.vector[0].abs() - 1.0).abs() < 1e-12);
        let (a, b) = c.coeffs[0].unwrap();
        assert!((b / a - 2.0).abs() < 1e-9);
        let h = closed_form(ClosedFormFamily::HyperbolicLawson { r: 2.0 }, &grid()).unwrap();
        assert_eq!(find_constant_combination(&h).unwrap().class, MinimalClass::H3);
    }

    #[test]
    fn clifford_quadric() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut pts = Vec::new();
        for i in 0..15 {
            for j in 0..15 {
                let (a, b) = (0.4 * i as f64, 0.4 * j as f64);
                pts.push(DVector::from_row_slice(&[h * a.cos(), h * a.sin(), h * b.cos(), h * b.sin()]));
            }
        }
        let fit = fit_quadric(&pts).unwrap();
        assert!(fit.residual < 1e-12);
        assert_eq!(fit.eigenvalues.iter().filter(|x| **x < 0.0).count(), 2);
        assert!(fit.eigenvalues.iter().all(|x| (x.abs() - 1.0).abs() < 1e-12));
        // Unequal radii admit no trace-free quadric.
        let pts: Vec<_> = pts.iter().map(|p| DVector::from_row_slice(&[0.6 * p[0] / h, 0.6 * p[1] / h, 0.8 * p[2] / h, 0.8 * p[3] / h])).collect();
        let fit = fit_quadric(&pts).unwrap();
        assert!(fit.residual > 1e-2, "{}", fit.residual);
    }

    #[test]
    fn umbilic_density_is_mobius_invariant() {
        let g = DomainGrid::new([-1.0, 1.0], [-0.5, 0.5], 41, 21, [0.0, 0.0]).unwrap();
        let sf = closed_form(ClosedFormFamily::Lawson { r: 2.0 }, &g).unwrap();
        let d0 = umbilic_density(&sf);
        let mut boost = DMatrix::identity(5, 5);
        let (c, s) = (0.7f64.cosh(), 0.7f64.sinh());
        boost[(0, 0)] = c;
        boost[(0, 3)] = s;
        boost[(3, 0)] = s;
        boost[(3, 3)] = c;
        let eta = metric(5);
        assert!((boost.transpose() * &eta * &boost - &eta).norm() < 1e-14);
        let d1 = umbilic_density(&sf.transform(&boost));
        let mut worst: f64 = 0.0;
        for (a, b) in d0.iter().zip(&d1) {
            worst = worst.max((a.unwrap() - b.unwrap()).abs());
        }
        assert!(worst < 1e-8, "{worst}");
        assert!(d0.iter().flatten().all(|x| *x > 1e-3));
    }
}
