//! Holomorphic frames, Iwasawa extraction on a grid, surfaces, and the
//! normalized potential.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::EvalError;
use crate::factorize::{birkhoff, factor_against, iwasawa, FactorError};
use crate::lorentz::{frame_residual, project_model, CVec, LorentzVec, Model};
use crate::loopgroup::{max_abs, CMat, LaurentLoop, DEFAULT_TRUNCATION};
use crate::potential::HoloPotential;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpwError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("potential not evaluable at {z}: {err}")]
    Eval { z: Complex64, err: EvalError },
    #[error("non-finite frame at {z} (singularity on the integration path)")]
    NonFinite { z: Complex64 },
    #[error("dimension mismatch: potential {0}, initial frame {1}")]
    Dimension(usize, usize),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// Rectangle `[u₀,u₁] × [v₀,v₁]` sampled at `nu × nv` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGrid {
    pub u_range: [f64; 2],
    pub v_range: [f64; 2],
    pub nu: usize,
    pub nv: usize,
    /// Base point `z₀ = (u, v)`.
    #[serde(default)]
    pub base: [f64; 2],
}

impl DomainGrid {
    pub fn new(u_range: [f64; 2], v_range: [f64; 2], nu: usize, nv: usize, base: [f64; 2]) -> Result<Self, DpwError> {
        let g = DomainGrid { u_range, v_range, nu, nv, base };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), DpwError> {
        if self.nu < 2 || self.nv < 2 {
            return Err(DpwError::Grid(format!("resolution {}x{} below 2x2", self.nu, self.nv)));
        }
        let finite = self.u_range.iter().chain(&self.v_range).chain(&self.base).all(|x| x.is_finite());
        if !finite || !(self.u_range[0] < self.u_range[1]) || !(self.v_range[0] < self.v_range[1]) {
            return Err(DpwError::Grid("empty or non-finite rectangle".into()));
        }
        let inside = |x: f64, r: [f64; 2]| x >= r[0] && x <= r[1];
        if !inside(self.base[0], self.u_range) || !inside(self.base[1], self.v_range) {
            return Err(DpwError::Grid(format!("base point ({}, {}) outside the rectangle", self.base[0], self.base[1])));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nu * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn du(&self) -> f64 {
        (self.u_range[1] - self.u_range[0]) / (self.nu - 1) as f64
    }

    pub fn dv(&self) -> f64 {
        (self.v_range[1] - self.v_range[0]) / (self.nv - 1) as f64
    }

    pub fn u(&self, i: usize) -> f64 {
        if i + 1 == self.nu {
            self.u_range[1]
        } else {
            self.u_range[0] + self.du() * i as f64
        }
    }

    pub fn v(&self, j: usize) -> f64 {
        if j + 1 == self.nv {
            self.v_range[1]
        } else {
            self.v_range[0] + self.dv() * j as f64
        }
    }

    pub fn z(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.u(i), self.v(j))
    }

    pub fn base_z(&self) -> Complex64 {
        Complex64::new(self.base[0], self.base[1])
    }

    /// Vertex index, `u` fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nu + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nu, idx / self.nu)
    }

    /// Row index of `v = 0` when it is a grid line.
    pub fn zero_row(&self) -> Option<usize> {
        (0..self.nv).find(|&j| self.v(j).abs() < 1e-12 * self.dv().max(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    /// Truncation degree `N` of the loop coefficients.
    pub trunc: usize,
    /// Largest RK4 step length.
    pub max_step: f64,
    /// Also integrate with twice the step and record the difference.
    pub richardson: bool,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions { trunc: DEFAULT_TRUNCATION, max_step: 0.01, richardson: true }
    }
}

/// Loop coefficients on the fixed window of degrees `−n..=n`.
#[derive(Clone)]
struct Window {
    n: usize,
    c: Vec<CMat>,
}

impl Window {
    fn from_loop(l: &LaurentLoop, n: usize) -> Window {
        let dim = l.dim();
        let c = (-(n as i32)..=n as i32).map(|d| l.coeff_ref(d).cloned().unwrap_or_else(|| CMat::zeros(dim, dim))).collect();
        Window { n, c }
    }

    fn to_loop(&self) -> LaurentLoop {
        LaurentLoop::new(-(self.n as i32), self.c.clone(), self.n).trim(0.0)
    }

    fn axpy(&self, h: Complex64, k: &Window) -> Window {
        Window { n: self.n, c: self.c.iter().zip(&k.c).map(|(a, b)| a + b * h).collect() }
    }

    fn is_finite(&self) -> bool {
        self.c.iter().all(|m| m.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    fn distance(&self, other: &Window) -> f64 {
        self.c.iter().zip(&other.c).map(|(a, b)| max_abs(&(a - b))).fold(0.0, f64::max)
    }
}

type Terms = Vec<(i32, CMat)>;

fn eval_terms(p: &HoloPotential, z: Complex64) -> Result<Terms, DpwError> {
    let mut out = Vec::with_capacity(p.terms.len());
    for (j, m) in &p.terms {
        let x = m.eval(z).map_err(|err| DpwError::Eval { z, err })?;
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(DpwError::NonFinite { z });
        }
        out.push((*j, x));
    }
    Ok(out)
}

/// `C·Ξ` on the window; returns the product and the largest dropped entry.
fn rhs(c: &Window, xi: &Terms) -> (Window, f64) {
    let n = c.n as i32;
    let dim = c.c[0].nrows();
    let mut out = vec![CMat::zeros(dim, dim); c.c.len()];
    let mut lost: f64 = 0.0;
    for (j, x) in xi {
        for (idx, cd) in c.c.iter().enumerate() {
            let d = idx as i32 - n + j;
            if d < -n || d > n {
                if max_abs(cd) > 0.0 {
                    lost = lost.max(max_abs(&(cd * x)));
                }
                continue;
            }
            out[(d + n) as usize].gemm(ONE, cd, x, ONE);
        }
    }
    (Window { n: c.n, c: out }, lost)
}

/// Integrates `C′ = C·Ξ` along the straight segment `z0 → z1`.
fn segment(p: &HoloPotential, mut c: Window, z0: Complex64, z1: Complex64, steps: usize) -> Result<(Window, f64), DpwError> {
    if steps == 0 || z0 == z1 {
        return Ok((c, 0.0));
    }
    let h = (z1 - z0) / steps as f64;
    let mut tail = 0.0;
    let mut xi0 = eval_terms(p, z0)?;
    for s in 0..steps {
        let z = z0 + h * s as f64;
        let zm = z + h * 0.5;
        let ze = if s + 1 == steps { z1 } else { z + h };
        let xim = eval_terms(p, zm)?;
        let xie = eval_terms(p, ze)?;
        let (k1, l1) = rhs(&c, &xi0);
        let (k2, l2) = rhs(&c.axpy(h * 0.5, &k1), &xim);
        let (k3, l3) = rhs(&c.axpy(h * 0.5, &k2), &xim);
        let (k4, l4) = rhs(&c.axpy(h, &k3), &xie);
        let mut next = c.clone();
        for idx in 0..next.c.len() {
            next.c[idx] += (&k1.c[idx] + (&k2.c[idx] + &k3.c[idx]) * Complex64::new(2.0, 0.0) + &k4.c[idx]) * (h / 6.0);
        }
        tail += h.norm() * (l1 + 2.0 * l2 + 2.0 * l3 + l4) / 6.0;
        c = next;
        if !c.is_finite() {
            return Err(DpwError::NonFinite { z: ze });
        }
        xi0 = xie;
    }
    Ok((c, tail))
}

fn steps_for(len: f64, max_step: f64, coarse: bool) -> usize {
    let m = (len / (2.0 * max_step)).ceil().max(1.0) as usize;
    if coarse {
        m
    } else {
        2 * m
    }
}

/// Integrates from `start` at `z_start` through `targets` in order.
fn march(
    p: &HoloPotential,
    start: Window,
    z_start: Complex64,
    targets: &[Complex64],
    max_step: f64,
    coarse: bool,
) -> Vec<Result<(Window, f64), DpwError>> {
    let mut out = Vec::with_capacity(targets.len());
    let mut cur = Ok((start, 0.0));
    let mut z = z_start;
    for &t in targets {
        cur = match cur {
            Ok((c, tail)) => {
                let steps = if (t - z).norm() == 0.0 { 0 } else { steps_for((t - z).norm(), max_step, coarse) };
                segment(p, c, z, t, steps).map(|(c, dt)| (c, tail + dt))
            }
            Err(e) => Err(e),
        };
        z = t;
        out.push(cur.clone());
    }
    out
}

/// Staircase integration: row through the base, then each column.
fn integrate_grid(p: &HoloPotential, grid: &DomainGrid, f0: &Window, max_step: f64, coarse: bool) -> Vec<Result<(Window, f64), DpwError>> {
    let z0 = grid.base_z();
    let vb = grid.base[1];
    let ub = grid.base[0];
    let right: Vec<usize> = (0..grid.nu).filter(|&i| grid.u(i) >= ub).collect();
    let left: Vec<usize> = (0..grid.nu).rev().filter(|&i| grid.u(i) < ub).collect();
    let mut row: Vec<Option<Result<(Window, f64), DpwError>>> = vec![None; grid.nu];
    for side in [right, left] {
        let targets: Vec<Complex64> = side.iter().map(|&i| Complex64::new(grid.u(i), vb)).collect();
        for (k, r) in march(p, f0.clone(), z0, &targets, max_step, coarse).into_iter().enumerate() {
            row[side[k]] = Some(r);
        }
    }
    let up: Vec<usize> = (0..grid.nv).filter(|&j| grid.v(j) >= vb).collect();
    let down: Vec<usize> = (0..grid.nv).rev().filter(|&j| grid.v(j) < vb).collect();
    let columns: Vec<Vec<Result<(Window, f64), DpwError>>> = (0..grid.nu)
        .into_par_iter()
        .map(|i| {
            let start = row[i].clone().unwrap();
            let zs = Complex64::new(grid.u(i), vb);
            let mut col: Vec<Option<Result<(Window, f64), DpwError>>> = vec![None; grid.nv];
            for side in [&up, &down] {
                let targets: Vec<Complex64> = side.iter().map(|&j| grid.z(i, j)).collect();
                let res = match &start {
                    Ok((c, tail)) => march(p, c.clone(), zs, &targets, max_step, coarse)
                        .into_iter()
                        .map(|r| r.map(|(c, t)| (c, t + tail)))
                        .collect(),
                    Err(e) => vec![Err(e.clone()); targets.len()],
                };
                for (k, r) in res.into_iter().enumerate() {
                    col[side[k]] = Some(r);
                }
            }
            col.into_iter().map(Option::unwrap).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(grid.len());
    for j in 0..grid.nv {
        for col in &columns {
            out.push(col[j].clone());
        }
    }
    out
}

/// Holomorphic frames `C(z, λ)` on a grid.
#[derive(Debug, Clone)]
pub struct HoloField {
    pub grid: DomainGrid,
    pub potential: HoloPotential,
    pub trunc: usize,
    pub frames: Vec<Result<LaurentLoop, DpwError>>,
    /// Richardson estimate `|C_h − C_2h|/15` (0 when disabled).
    pub error_estimate: Vec<f64>,
    /// Accumulated mass dropped by the degree window.
    pub tail: Vec<f64>,
}

fn check_dims(p: &HoloPotential, f0: &LaurentLoop) -> Result<(), DpwError> {
    if p.dim() != f0.dim() {
        return Err(DpwError::Dimension(p.dim(), f0.dim()));
    }
    Ok(())
}

/// Solves `C⁻¹dC = Ξ`, `C(z₀) = F₀`, along `z₀ → (u, v₀) → (u, v)`.
pub fn integrate_frame(p: &HoloPotential, grid: &DomainGrid, f0: &LaurentLoop, opts: &IntegrationOptions) -> Result<HoloField, DpwError> {
    grid.validate()?;
    check_dims(p, f0)?;
    let n = opts.trunc;
    let start = Window::from_loop(f0, n);
    let p = p.clone().with_base(grid.base_z());
    eval_terms(&p, grid.base_z())?;
    let fine = integrate_grid(&p, grid, &start, opts.max_step, false);
    let coarse = if opts.richardson { Some(integrate_grid(&p, grid, &start, opts.max_step, true)) } else { None };
    let mut frames = Vec::with_capacity(grid.len());
    let mut err = vec![0.0; grid.len()];
    let mut tail = vec![0.0; grid.len()];
    for (idx, r) in fine.into_iter().enumerate() {
        match r {
            Ok((w, t)) => {
                tail[idx] = t;
                if let Some(Ok((wc, _))) = coarse.as_ref().map(|c| &c[idx]) {
                    err[idx] = w.distance(wc) / 15.0;
                }
                frames.push(Ok(w.to_loop()));
            }
            Err(e) => {
                err[idx] = f64::INFINITY;
                frames.push(Err(e));
            }
        }
    }
    Ok(HoloField { grid: grid.clone(), potential: p, trunc: n, frames, error_estimate: err, tail })
}

/// Leg order of a staircase path from the base point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Staircase {
    /// `z₀ → (u, v₀) → (u, v)`.
    UFirst,
    /// `z₀ → (u₀, v) → (u, v)`.
    VFirst,
}

/// Holomorphic frame at one point, integrated along the staircase from the base.
pub fn holo_frame_at(p: &HoloPotential, f0: &LaurentLoop, z: Complex64, opts: &IntegrationOptions) -> Result<LaurentLoop, DpwError> {
    holo_frame_via(p, f0, z, Staircase::UFirst, opts)
}

pub fn holo_frame_via(p: &HoloPotential, f0: &LaurentLoop, z: Complex64, order: Staircase, opts: &IntegrationOptions) -> Result<LaurentLoop, DpwError> {
    check_dims(p, f0)?;
    let start = Window::from_loop(f0, opts.trunc);
    let z0 = p.base;
    let corner = match order {
        Staircase::UFirst => Complex64::new(z.re, z0.im),
        Staircase::VFirst => Complex64::new(z0.re, z.im),
    };
    let steps = |a: Complex64, b: Complex64| if a == b { 0 } else { steps_for((b - a).norm(), opts.max_step, false) };
    let (w, _) = segment(p, start, z0, corner, steps(z0, corner))?;
    let (w, _) = segment(p, w, corner, z, steps(corner, z))?;
    Ok(w.to_loop())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum VertexStatus {
    Valid,
    IntegrationFailed(String),
    OutsideBigCell { cond: f64 },
    MiddleSplitFailure { reason: String },
}

impl VertexStatus {
    pub fn is_valid(&self) -> bool {
        matches!(self, VertexStatus::Valid)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            VertexStatus::Valid => "valid",
            VertexStatus::IntegrationFailed(_) => "integration_failed",
            VertexStatus::OutsideBigCell { .. } => "outside_big_cell",
            VertexStatus::MiddleSplitFailure { .. } => "middle_split_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexInfo {
    pub status: VertexStatus,
    pub near_boundary: bool,
    pub cond: f64,
    /// `max ‖C − F·V₊‖` over coefficients.
    pub reconstruction: f64,
    pub integration_error: f64,
    pub tail: f64,
}

/// Per-vertex Iwasawa factors of a [`HoloField`].
#[derive(Debug, Clone)]
pub struct FrameField {
    pub grid: DomainGrid,
    pub potential: HoloPotential,
    pub holo: Vec<Option<LaurentLoop>>,
    pub real: Vec<Option<LaurentLoop>>,
    /// `V₊(λ = 0)`.
    pub v0: Vec<Option<CMat>>,
    pub info: Vec<VertexInfo>,
}

impl FrameField {
    pub fn valid_count(&self) -> usize {
        self.info.iter().filter(|i| i.status.is_valid()).count()
    }
}

pub fn extract_frames(h: &HoloField) -> FrameField {
    let results: Vec<_> = h
        .frames
        .par_iter()
        .enumerate()
        .map(|(idx, c)| {
            let mut info = VertexInfo {
                status: VertexStatus::Valid,
                near_boundary: false,
                cond: f64::NAN,
                reconstruction: f64::NAN,
                integration_error: h.error_estimate[idx],
                tail: h.tail[idx],
            };
            let c = match c {
                Ok(c) => c,
                Err(e) => {
                    info.status = VertexStatus::IntegrationFailed(e.to_string());
                    return (None, None, None, info);
                }
            };
            match iwasawa(c) {
                Ok(f) => {
                    info.cond = f.cond;
                    info.near_boundary = f.near_boundary;
                    info.reconstruction = f.residual;
                    let v0 = f.plus_b.coeff(0);
                    (Some(c.clone()), Some(f.real), Some(v0), info)
                }
                Err(FactorError::OutsideBigCell { cond }) => {
                    info.cond = cond;
                    info.status = VertexStatus::OutsideBigCell { cond };
                    (Some(c.clone()), None, None, info)
                }
                Err(FactorError::MiddleSplitFailure { reason, .. }) => {
                    info.status = VertexStatus::MiddleSplitFailure { reason };
                    (Some(c.clone()), None, None, info)
                }
            }
        })
        .collect();
    let mut ff = FrameField {
        grid: h.grid.clone(),
        potential: h.potential.clone(),
        holo: Vec::with_capacity(results.len()),
        real: Vec::with_capacity(results.len()),
        v0: Vec::with_capacity(results.len()),
        info: Vec::with_capacity(results.len()),
    };
    for (c, f, v, i) in results {
        ff.holo.push(c);
        ff.real.push(f);
        ff.v0.push(v);
        ff.info.push(i);
    }
    ff
}

/// Lifts and frame vectors at one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceVertex {
    pub y: LorentzVec,
    pub y_hat: LorentzVec,
    pub p1: LorentzVec,
    pub p2: LorentzVec,
    pub psi: Vec<LorentzVec>,
    /// `Y_z` modulo `Y`, when known exactly.
    pub yz: Option<CVec>,
    /// Orthonormality residual of the `λ = 1` frame.
    pub frame_residual: f64,
    /// Largest imaginary part of the `λ = 1` frame.
    pub imag_residual: f64,
}

impl SurfaceVertex {
    /// Columns `(Y+Ŷ)/√2, (Ŷ−Y)/√2, P₁, P₂, ψ…` as a matrix.
    pub fn frame(&self) -> DMatrix<f64> {
        let dim = self.y.len();
        let mut f = DMatrix::zeros(dim, dim);
        f.set_column(0, &((&self.y + &self.y_hat) / SQRT_2));
        f.set_column(1, &((&self.y_hat - &self.y) / SQRT_2));
        f.set_column(2, &self.p1);
        f.set_column(3, &self.p2);
        for (j, p) in self.psi.iter().enumerate() {
            f.set_column(4 + j, p);
        }
        f
    }

    pub fn from_frame(f: &DMatrix<f64>) -> SurfaceVertex {
        let c = |j: usize| f.column(j).into_owned();
        let (res, _) = frame_residual(f);
        SurfaceVertex {
            y: (c(0) - c(1)) / SQRT_2,
            y_hat: (c(0) + c(1)) / SQRT_2,
            p1: c(2),
            p2: c(3),
            psi: (4..f.ncols()).map(c).collect(),
            yz: None,
            frame_residual: res,
            imag_residual: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurfaceField {
    pub grid: DomainGrid,
    pub n: usize,
    pub vertices: Vec<Option<SurfaceVertex>>,
    pub status: Vec<VertexStatus>,
    pub near_boundary: Vec<bool>,
}

impl SurfaceField {
    pub fn valid_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.is_some()).count()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&SurfaceVertex> {
        self.vertices[self.grid.index(i, j)].as_ref()
    }

    /// Projected points; `None` at invalid vertices or where the model fails.
    pub fn project(&self, model: &Model) -> Vec<Option<DVector<f64>>> {
        self.vertices.iter().map(|v| v.as_ref().and_then(|v| project_model(&v.y, model).ok())).collect()
    }

    /// Applies a constant Lorentz transformation to every frame.
    pub fn transform(&self, t: &DMatrix<f64>) -> SurfaceField {
        let tc = t.map(|x| Complex64::new(x, 0.0));
        let vertices = self
            .vertices
            .iter()
            .map(|v| {
                v.as_ref().map(|v| SurfaceVertex {
                    y: t * &v.y,
                    y_hat: t * &v.y_hat,
                    p1: t * &v.p1,
                    p2: t * &v.p2,
                    psi: v.psi.iter().map(|p| t * p).collect(),
                    yz: v.yz.as_ref().map(|w| &tc * w),
                    frame_residual: v.frame_residual,
                    imag_residual: v.imag_residual,
                })
            })
            .collect();
        SurfaceField { grid: self.grid.clone(), n: self.n, vertices, status: self.status.clone(), near_boundary: self.near_boundary.clone() }
    }
}

/// `Y, Ŷ, P₁, P₂, ψ` from the `λ = 1` frame, with `Y_z` from `V₀ξ₋₁V₀⁻¹`.
pub fn extract_surfaces(ff: &FrameField) -> SurfaceField {
    let n = ff.potential.n;
    let vertices: Vec<Option<SurfaceVertex>> = (0..ff.grid.len())
        .into_par_iter()
        .map(|idx| {
            let f = ff.real[idx].as_ref()?;
            let m = f.at_one();
            let imag = m.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
            let fr = m.map(|z| z.re);
            let mut v = SurfaceVertex::from_frame(&fr);
            v.imag_residual = imag;
            let (i, j) = ff.grid.coords(idx);
            if let (Some(v0), Ok(xi)) = (&ff.v0[idx], ff.potential.coeff(-1, ff.grid.z(i, j))) {
                let a = v0 * xi * crate::loopgroup::metric_inverse(v0);
                let dim = n + 4;
                let mut w = CVec::zeros(dim);
                for k in 0..n + 2 {
                    w[2 + k] = (a[(0, 2 + k)] + a[(1, 2 + k)]) / SQRT_2;
                }
                v.yz = Some(m * w);
            }
            Some(v)
        })
        .collect();
    SurfaceField {
        grid: ff.grid.clone(),
        n,
        vertices,
        status: ff.info.iter().map(|i| i.status.clone()).collect(),
        near_boundary: ff.info.iter().map(|i| i.near_boundary).collect(),
    }
}

/// Constant loop from a real matrix.
pub fn constant_frame(m: &DMatrix<f64>, trunc: usize) -> LaurentLoop {
    LaurentLoop::constant(m.map(|x| Complex64::new(x, 0.0)), trunc)
}

/// Full pipeline for one potential.
pub fn run_dpw(p: &HoloPotential, grid: &DomainGrid, f0: &LaurentLoop, opts: &IntegrationOptions) -> Result<(FrameField, SurfaceField), DpwError> {
    let h = integrate_frame(p, grid, f0, opts)?;
    let ff = extract_frames(&h);
    let sf = extract_surfaces(&ff);
    Ok((ff, sf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationRoute {
    Birkhoff,
    Wu,
}

/// `η₋₁` sampled at points; the normalized potential is `λ⁻¹η₋₁ dz`.
#[derive(Debug, Clone)]
pub struct NormalizedSamples {
    pub route: NormalizationRoute,
    pub points: Vec<Complex64>,
    pub eta: Vec<Result<CMat, DpwError>>,
}

/// Step of the five-point derivative stencils.
pub const FD_STEP: f64 = 1e-3;

fn five_point(vals: &[CMat; 4], h: f64) -> CMat {
    // Order: z−2h, z−h, z+h, z+2h.
    (&vals[0] - &vals[1] * Complex64::new(8.0, 0.0) + &vals[2] * Complex64::new(8.0, 0.0) - &vals[3]) / Complex64::new(12.0 * h, 0.0)
}

const OFFSETS: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

fn normalize_base(f0: &LaurentLoop, x: &LaurentLoop) -> LaurentLoop {
    f0.group_inverse().mul_full(x)
}

/// `η₋₁(z)` by Birkhoff-splitting the extended frame near `z`.
fn eta_birkhoff(p: &HoloPotential, f0: &LaurentLoop, z: Complex64, opts: &IntegrationOptions) -> Result<CMat, DpwError> {
    let mut vals: Vec<CMat> = Vec::with_capacity(4);
    for k in OFFSETS {
        let zk = z + k * FD_STEP;
        let c = holo_frame_at(p, f0, zk, opts)?;
        let f = iwasawa(&c)?.real;
        let f = normalize_base(f0, &f).truncate(opts.trunc).value;
        let m = birkhoff(&f)?.minus;
        vals.push(m.coeff(-1));
    }
    Ok(five_point(&[vals[0].clone(), vals[1].clone(), vals[2].clone(), vals[3].clone()], FD_STEP))
}

/// `(δ₁, δ₀)`: the `λ⁻¹` and `λ⁰` parts of `F⁻¹∂F` for the frame with `z̄` frozen at `z̄₀`.
fn wu_deltas(p: &HoloPotential, f0: &LaurentLoop, c: &LaurentLoop, z: Complex64, opts: &IntegrationOptions) -> Result<(CMat, CMat), DpwError> {
    let dim = p.dim();
    let id = LaurentLoop::identity(dim, opts.trunc);
    let frame = |c: &LaurentLoop| -> Result<LaurentLoop, DpwError> {
        let cn = normalize_base(f0, c).truncate(opts.trunc).value;
        Ok(factor_against(&cn, &id, false)?.real)
    };
    let w = Window::from_loop(c, opts.trunc);
    let mut vals = Vec::with_capacity(4);
    for k in OFFSETS {
        let zk = z + k * FD_STEP;
        let (wk, _) = segment(p, w.clone(), z, zk, 2)?;
        vals.push(frame(&wk.to_loop())?);
    }
    let f = frame(c)?;
    let fi = f.group_inverse();
    let lo = vals.iter().map(|v| v.min_deg()).min().unwrap();
    let hi = vals.iter().map(|v| v.max_deg()).max().unwrap();
    let mut deriv = Vec::new();
    for d in lo..=hi {
        let cs = [vals[0].coeff(d), vals[1].coeff(d), vals[2].coeff(d), vals[3].coeff(d)];
        deriv.push(five_point(&cs, FD_STEP));
    }
    let df = LaurentLoop::new(lo, deriv, opts.trunc);
    let alpha = fi.mul_full(&df);
    Ok((alpha.coeff(-1), alpha.coeff(0)))
}

/// `η₋₁(z) = Δ₀δ₁Δ₀⁻¹` with `Δ₀⁻¹dΔ₀ = δ₀dz` integrated from the base.
fn eta_wu(p: &HoloPotential, f0: &LaurentLoop, z: Complex64, opts: &IntegrationOptions) -> Result<CMat, DpwError> {
    let z0 = p.base;
    let dim = p.dim();
    let len = (z - z0).norm();
    let m = ((len / (2.0 * opts.max_step)).ceil() as usize).max(1);
    let h = (z - z0) / m as f64;
    // Holomorphic frames at half steps along the segment.
    let mut cs = Vec::with_capacity(2 * m + 1);
    let mut w = Window::from_loop(&holo_frame_at(p, f0, z0, opts)?, opts.trunc);
    cs.push(w.to_loop());
    for k in 0..2 * m {
        let a = z0 + h * (k as f64 * 0.5);
        let b = z0 + h * ((k + 1) as f64 * 0.5);
        w = segment(p, w, a, b, 1)?.0;
        cs.push(w.to_loop());
    }
    let mut deltas = Vec::with_capacity(cs.len());
    for (k, c) in cs.iter().enumerate() {
        let zk = z0 + h * (k as f64 * 0.5);
        deltas.push(wu_deltas(p, f0, c, zk, opts)?);
    }
    let mut d = CMat::identity(dim, dim);
    for s in 0..m {
        let (x0, xm, x1) = (&deltas[2 * s].1, &deltas[2 * s + 1].1, &deltas[2 * s + 2].1);
        let k1 = &d * x0;
        let k2 = (&d + &k1 * (h * 0.5)) * xm;
        let k3 = (&d + &k2 * (h * 0.5)) * xm;
        let k4 = (&d + &k3 * h) * x1;
        d += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * (h / 6.0);
    }
    let delta1 = &deltas[2 * m].0;
    Ok(&d * delta1 * crate::loopgroup::metric_inverse(&d))
}

/// Degree `−1` normalized potential sampled at `points`, normalized so that
/// `F(z₀) = I` (the initial frame `f0` is divided out).
pub fn normalized_potential(
    p: &HoloPotential,
    f0: &LaurentLoop,
    points: &[Complex64],
    route: NormalizationRoute,
    opts: &IntegrationOptions,
) -> NormalizedSamples {
    let eta = points
        .par_iter()
        .map(|&z| match route {
            NormalizationRoute::Birkhoff => eta_birkhoff(p, f0, z, opts),
            NormalizationRoute::Wu => eta_wu(p, f0, z, opts),
        })
        .collect();
    NormalizedSamples { route, points: points.to_vec(), eta }
}

/// Finite-difference Maurer–Cartan form `F⁻¹F_u` of the extended frame at
/// grid vertex `(i, j)` (five-point central differences in `u`).
pub fn maurer_cartan_u(ff: &FrameField, i: usize, j: usize) -> Option<LaurentLoop> {
    if i < 2 || i + 2 >= ff.grid.nu {
        return None;
    }
    let g = &ff.grid;
    let at = |k: usize| ff.real[g.index(k, j)].as_ref();
    let f = at(i)?;
    let (a, b, c, d) = (at(i - 2)?, at(i - 1)?, at(i + 1)?, at(i + 2)?);
    let eight = Complex64::new(8.0, 0.0);
    let diff = a.sub(&b.scale(eight)).add(&c.scale(eight)).sub(d).scale(Complex64::new(1.0 / (12.0 * g.du()), 0.0));
    Some(f.group_inverse().mul_full(&diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loopgroup::expm;
    use crate::potential::{build_boundary_potential, clifford_potential, BjorlingData};
    use crate::analytic::Expr;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small_grid() -> DomainGrid {
        DomainGrid::new([-0.5, 0.5], [-0.3, 0.3], 5, 4, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(DomainGrid::new([0.0, 1.0], [0.0, 1.0], 1, 5, [0.0, 0.0]).is_err());
        assert!(DomainGrid::new([0.0, 1.0], [0.0, 1.0], 3, 3, [2.0, 0.0]).is_err());
        let g = small_grid();
        assert_eq!(g.len(), 20);
        assert_eq!(g.coords(g.index(3, 2)), (3, 2));
        assert_eq!(g.u(4), 0.5);
        assert_eq!(g.zero_row(), None);
        let g = DomainGrid::new([0.0, 1.0], [-1.0, 1.0], 3, 5, [0.0, 0.0]).unwrap();
        assert_eq!(g.zero_row(), Some(2));
    }

    #[test]
    fn zero_potential_keeps_initial_frame() {
        let mut p = clifford_potential();
        p.terms.clear();
        let f0 = constant_frame(&crate::potential::circle_frame(0.3, 0.2), 12);
        let h = integrate_frame(&p, &small_grid(), &f0, &IntegrationOptions::default()).unwrap();
        for f in &h.frames {
            assert!(f.as_ref().unwrap().coeff_distance(&f0) == 0.0);
        }
    }

    #[test]
    fn constant_potential_matches_exponential() {
        let d = BjorlingData::new(Expr::constant(c(0.2, 0.1)), Expr::constant(c(0.0, 0.5)), Expr::real(-0.5));
        let p = build_boundary_potential(&d).unwrap();
        let g = small_grid();
        let opts = IntegrationOptions { trunc: 20, max_step: 0.005, richardson: true };
        let h = integrate_frame(&p, &g, &LaurentLoop::identity(5, 20), &opts).unwrap();
        for lambda in [c(1.0, 0.0), c(0.6, 0.8), c(-1.0, 0.0)] {
            let xi = p.evaluate(c(0.0, 0.0), 20).unwrap().evaluate(lambda).unwrap();
            for idx in [0, 7, 19] {
                let z = g.z(g.coords(idx).0, g.coords(idx).1);
                let want = expm(&(&xi * z));
                let got = h.frames[idx].as_ref().unwrap().evaluate(lambda).unwrap();
                assert!(max_abs(&(got.clone() - want.clone())) < 1e-10, "{idx} {lambda} {}", max_abs(&(got - want)));
            }
        }
    }

    #[test]
    fn staircase_paths_agree() {
        let d = BjorlingData::new(crate::analytic::parse("0.3*sin(u)").unwrap(), crate::analytic::parse("i + 0.2*u").unwrap(), Expr::real(-0.5));
        let p = build_boundary_potential(&d).unwrap();
        let f0 = constant_frame(&crate::potential::circle_frame(0.0, 0.0), 12);
        let opts = IntegrationOptions { max_step: 0.01, ..Default::default() };
        for z in [c(0.8, 0.4), c(-0.5, -0.6), c(1.2, 0.1)] {
            let a = holo_frame_via(&p, &f0, z, Staircase::UFirst, &opts).unwrap();
            let b = holo_frame_via(&p, &f0, z, Staircase::VFirst, &opts).unwrap();
            assert!(a.coeff_distance(&b) < 1e-8, "{z} {}", a.coeff_distance(&b));
        }
    }

    #[test]
    fn maurer_cartan_has_degrees_minus_one_to_one() {
        let d = BjorlingData::new(crate::analytic::parse("0.3*sin(u)").unwrap(), Expr::imag(1.0), Expr::real(-0.5));
        let p = build_boundary_potential(&d).unwrap();
        let g = DomainGrid::new([-0.01, 0.01], [-0.3, 0.3], 11, 3, [0.0, 0.0]).unwrap();
        let opts = IntegrationOptions { max_step: 0.002, ..Default::default() };
        let (ff, _) = run_dpw(&p, &g, &LaurentLoop::identity(5, 12), &opts).unwrap();
        for j in 0..3 {
            let mc = maurer_cartan_u(&ff, 5, j).unwrap();
            let outside = mc.terms().filter(|(d, _)| d.abs() > 1).map(|(_, m)| max_abs(m)).fold(0.0, f64::max);
            let inside = mc.terms().filter(|(d, _)| d.abs() <= 1).map(|(_, m)| max_abs(m)).fold(0.0, f64::max);
            assert!(outside < 1e-7, "{outside}");
            assert!(inside > 0.1);
        }
    }

    #[test]
    fn base_vertex_keeps_initial_lifts() {
        let d = BjorlingData::new(Expr::zero(), Expr::imag(1.0), Expr::real(-0.5));
        let p = build_boundary_potential(&d).unwrap();
        let m = crate::potential::circle_frame(0.0, 0.7);
        let g = DomainGrid::new([-0.2, 0.2], [-0.2, 0.2], 3, 3, [0.0, 0.0]).unwrap();
        let (_, sf) = run_dpw(&p, &g, &constant_frame(&m, 12), &IntegrationOptions::default()).unwrap();
        let v = sf.get(1, 1).unwrap();
        let want = SurfaceVertex::from_frame(&m);
        assert!((&v.y - &want.y).norm() < 1e-14);
        assert!((&v.y_hat - &want.y_hat).norm() < 1e-14);
    }

    #[test]
    fn frames_on_the_real_line_are_real() {
        let d = BjorlingData::new(Expr::Var, crate::analytic::parse("i*cos(u)").unwrap(), crate::analytic::parse("-0.5 + 0.1*i*u").unwrap());
        let p = build_boundary_potential(&d).unwrap();
        let g = DomainGrid::new([-1.0, 1.0], [-0.4, 0.4], 5, 5, [0.0, 0.0]).unwrap();
        let opts = IntegrationOptions { max_step: 0.005, ..Default::default() };
        let (ff, sf) = run_dpw(&p, &g, &LaurentLoop::identity(5, 12), &opts).unwrap();
        let j0 = g.zero_row().unwrap();
        for i in 0..g.nu {
            let idx = g.index(i, j0);
            let v0 = ff.v0[idx].as_ref().unwrap();
            assert!(max_abs(&(v0 - CMat::identity(5, 5))) < 1e-8);
            assert!(ff.holo[idx].as_ref().unwrap().reality_residual() < 1e-12);
        }
        for v in sf.vertices.iter().flatten() {
            assert!(v.frame_residual < 1e-8, "{}", v.frame_residual);
            assert!(v.imag_residual < 1e-10);
        }
    }
}
