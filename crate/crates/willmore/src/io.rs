//! Run configuration, the end-to-end pipeline, and mesh/report export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::Expr;
use crate::dpw::{self, DomainGrid, DpwError, FrameField, IntegrationOptions, SurfaceField};
use crate::geometry::{self, ClosedFormFamily, GeometryError, ResidualReport, RESIDUAL_COLUMNS};
use crate::lorentz::{frame_residual, project_model, Model};
use crate::loopgroup::LaurentLoop;
use crate::potential::{self, BjorlingData, HoloPotential, PotentialError, So13Params};

pub const MIN_TRUNCATION: usize = 4;
pub const MAX_TRUNCATION: usize = 64;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {msg}")]
    Config { path: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Dpw(#[from] DpwError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("export: {0}")]
    Export(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Initial condition `F₀` of the holomorphic frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialFrame {
    Identity,
    /// Frame of the unit circle at the base point with normal angle `theta`.
    Circle { theta: f64 },
    /// Explicit columns `(e₋₁, e₀, P₁, P₂, ψ…)` given row by row.
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialPreset {
    Clifford,
    GeneralizedClifford,
    InvertedClifford,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Builder {
    Boundary {
        #[serde(flatten)]
        data: BjorlingData,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_frame: Option<InitialFrame>,
    },
    CircleFamily {
        m: Expr,
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_frame: Option<InitialFrame>,
    },
    EquivariantSo4 {
        r: f64,
        #[serde(default)]
        theta: f64,
        #[serde(default)]
        phi: f64,
        l: f64,
        h: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_frame: Option<InitialFrame>,
    },
    So13 {
        params: So13Params,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_frame: Option<InitialFrame>,
    },
    RawPotential {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<PotentialPreset>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        b1: Vec<Expr>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        b2: Vec<Expr>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_frame: Option<InitialFrame>,
    },
    ClosedForm {
        #[serde(flatten)]
        family: ClosedFormFamily,
    },
}

impl Builder {
    /// Base point implied by the builder when the grid leaves it open.
    fn default_base(&self) -> [f64; 2] {
        match self {
            Builder::RawPotential { preset: Some(PotentialPreset::InvertedClifford), .. } => [1.0, 0.0],
            _ => [0.0, 0.0],
        }
    }

    fn initial_frame(&self) -> InitialFrame {
        let given = match self {
            Builder::Boundary { initial_frame, .. }
            | Builder::CircleFamily { initial_frame, .. }
            | Builder::EquivariantSo4 { initial_frame, .. }
            | Builder::So13 { initial_frame, .. }
            | Builder::RawPotential { initial_frame, .. } => initial_frame.clone(),
            Builder::ClosedForm { .. } => None,
        };
        given.unwrap_or(match self {
            Builder::CircleFamily { .. } => InitialFrame::Circle { theta: 0.0 },
            _ => InitialFrame::Identity,
        })
    }

    /// Björling data for the curve-based builders.
    pub fn bjorling_data(&self) -> Result<Option<BjorlingData>, PotentialError> {
        Ok(match self {
            Builder::Boundary { data, .. } => Some(data.clone()),
            Builder::CircleFamily { m, beta, .. } => Some(potential::build_circle_family(m, *beta)),
            Builder::EquivariantSo4 { r, theta, phi, l, h, .. } => Some(potential::build_equivariant_so4(*r, *theta, *phi, *l, *h)?),
            Builder::So13 { params, .. } => Some(potential::build_so13_family(*params)?),
            Builder::RawPotential { .. } | Builder::ClosedForm { .. } => None,
        })
    }

    pub fn potential(&self) -> Result<Option<HoloPotential>, RunError> {
        if let Some(d) = self.bjorling_data()? {
            return Ok(Some(potential::build_boundary_potential(&d)?));
        }
        match self {
            Builder::RawPotential { preset, b1, b2, .. } => {
                let p = match (preset, b1.is_empty() && b2.is_empty()) {
                    (Some(PotentialPreset::Clifford), true) => potential::clifford_potential(),
                    (Some(PotentialPreset::GeneralizedClifford), true) => potential::generalized_clifford_potential(),
                    (Some(PotentialPreset::InvertedClifford), true) => potential::inverted_clifford_potential(),
                    (None, false) => potential::normalized_potential_from_rows(b1.clone(), b2.clone())?,
                    (Some(_), false) => return Err(RunError::Invalid("raw-potential takes either a preset or rows b1/b2, not both".into())),
                    (None, true) => return Err(RunError::Invalid("raw-potential needs a preset or rows b1/b2".into())),
                };
                Ok(Some(p))
            }
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub u_range: [f64; 2],
    pub v_range: [f64; 2],
    pub nu: usize,
    pub nv: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<[f64; 2]>,
}

impl Default for GridSpec {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        GridSpec { u_range: [-pi, pi], v_range: [-0.75, 0.75], nu: 65, nv: 65, base: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSpec {
    #[serde(default = "default_max_step")]
    pub max_step: f64,
    #[serde(default = "default_true")]
    pub richardson: bool,
}

fn default_max_step() -> f64 {
    IntegrationOptions::default().max_step
}

fn default_true() -> bool {
    true
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        IntegrationSpec { max_step: default_max_step(), richardson: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ply: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

/// Bounds checked by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tol_duality")]
    pub duality: f64,
    #[serde(default = "tol_conformality")]
    pub conformality: f64,
    #[serde(default = "tol_frame")]
    pub frame: f64,
    /// Minimum fraction of valid vertices.
    #[serde(default = "tol_valid")]
    pub valid_fraction: f64,
}

fn tol_duality() -> f64 {
    1e-8
}
fn tol_conformality() -> f64 {
    1e-6
}
fn tol_frame() -> f64 {
    1e-8
}
fn tol_valid() -> f64 {
    1.0
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { duality: tol_duality(), conformality: tol_conformality(), frame: tol_frame(), valid_fraction: tol_valid() }
    }
}

fn default_truncation() -> usize {
    crate::loopgroup::DEFAULT_TRUNCATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub builder: Builder,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default)]
    pub integration: IntegrationSpec,
    #[serde(default)]
    pub model: Model,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn new(builder: Builder) -> Self {
        RunConfig {
            builder,
            grid: GridSpec::default(),
            truncation: default_truncation(),
            integration: IntegrationSpec::default(),
            model: Model::default(),
            outputs: Outputs::default(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, RunError> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| RunError::Config { path: origin.into(), msg: e.to_string() })?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn domain_grid(&self) -> Result<DomainGrid, RunError> {
        let g = &self.grid;
        let base = g.base.unwrap_or_else(|| self.builder.default_base());
        DomainGrid::new(g.u_range, g.v_range, g.nu, g.nv, base).map_err(|e| RunError::Invalid(e.to_string()))
    }

    pub fn options(&self) -> IntegrationOptions {
        IntegrationOptions { trunc: self.truncation, max_step: self.integration.max_step, richardson: self.integration.richardson }
    }

    /// Checks everything that can be checked before integration.
    pub fn validate(&self) -> Result<(), RunError> {
        self.domain_grid()?;
        if !(MIN_TRUNCATION..=MAX_TRUNCATION).contains(&self.truncation) {
            return Err(RunError::Invalid(format!("truncation {} outside [{MIN_TRUNCATION}, {MAX_TRUNCATION}]", self.truncation)));
        }
        if !(self.integration.max_step > 0.0 && self.integration.max_step.is_finite()) {
            return Err(RunError::Invalid(format!("max_step {} must be positive", self.integration.max_step)));
        }
        Ok(())
    }

    pub fn initial_frame_matrix(&self, n: usize) -> Result<nalgebra::DMatrix<f64>, RunError> {
        let dim = n + 4;
        let base = self.domain_grid()?.base;
        match self.builder.initial_frame() {
            InitialFrame::Identity => Ok(nalgebra::DMatrix::identity(dim, dim)),
            InitialFrame::Circle { theta } => {
                if n != 1 {
                    return Err(RunError::Invalid("circle initial frame needs codimension 1".into()));
                }
                Ok(potential::circle_frame(base[0], theta))
            }
            InitialFrame::Matrix { rows } => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(RunError::Invalid(format!("initial frame must be {dim}x{dim}")));
                }
                let m = nalgebra::DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
                let (res, _) = frame_residual(&m);
                if res > 1e-8 {
                    return Err(RunError::Invalid(format!("initial frame is not a Lorentz frame (residual {res:.3e})")));
                }
                Ok(m)
            }
        }
    }
}

/// Grid-shaped vertex positions with optional scalar channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshOutput {
    pub nu: usize,
    pub nv: usize,
    /// Row-major (`u` fastest); `None` marks an invalid vertex.
    pub points: Vec<Option<[f64; 3]>>,
    pub channels: Vec<(String, Vec<f64>)>,
}

impl MeshOutput {
    pub fn from_surface(sf: &SurfaceField, model: &Model) -> Result<Self, RunError> {
        let mut points = Vec::with_capacity(sf.vertices.len());
        for v in &sf.vertices {
            let p = match v {
                Some(v) => match project_model(&v.y, model) {
                    Ok(p) if p.len() == 3 => {
                        let q = [p[0], p[1], p[2]];
                        q.iter().all(|x| x.is_finite()).then_some(q)
                    }
                    Ok(p) => return Err(RunError::Export(format!("model yields {}-dimensional points; meshes need 3", p.len()))),
                    Err(_) => None,
                },
                None => None,
            };
            points.push(p);
        }
        Ok(MeshOutput { nu: sf.grid.nu, nv: sf.grid.nv, points, channels: Vec::new() })
    }

    pub fn with_channel(mut self, name: &str, values: Vec<f64>) -> Self {
        self.channels.push((name.into(), values));
        self
    }

    /// Output index of each grid vertex (valid vertices only, in order).
    pub fn remap(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.points
            .iter()
            .map(|p| {
                p.map(|_| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }

    /// Quads `(i,j), (i+1,j), (i+1,j+1), (i,j+1)` in output indices whose
    /// corners are all valid.
    pub fn faces(&self) -> Vec<[usize; 4]> {
        let map = self.remap();
        let idx = |i: usize, j: usize| j * self.nu + i;
        let mut out = Vec::new();
        for j in 0..self.nv.saturating_sub(1) {
            for i in 0..self.nu.saturating_sub(1) {
                let c = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
                if let [Some(a), Some(b), Some(cc), Some(d)] = c.map(|k| map[k]) {
                    out.push([a, b, cc, d]);
                }
            }
        }
        out
    }

    pub fn valid_count(&self) -> usize {
        self.points.iter().flatten().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Obj,
    Ply,
}

pub fn write_obj(m: &MeshOutput, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "# {} vertices, {} faces", m.valid_count(), m.faces().len())?;
    for p in m.points.iter().flatten() {
        writeln!(out, "v {} {} {}", p[0], p[1], p[2])?;
    }
    for f in m.faces() {
        writeln!(out, "f {} {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1, f[3] + 1)?;
    }
    Ok(())
}

pub fn write_ply(m: &MeshOutput, out: &mut impl Write) -> std::io::Result<()> {
    let faces = m.faces();
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", m.valid_count())?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property float {axis}")?;
    }
    for (name, _) in &m.channels {
        writeln!(out, "property float {name}")?;
    }
    writeln!(out, "element face {}", faces.len())?;
    writeln!(out, "property list uchar int vertex_indices")?;
    writeln!(out, "end_header")?;
    for (k, p) in m.points.iter().enumerate() {
        let Some(p) = p else { continue };
        write!(out, "{} {} {}", p[0], p[1], p[2])?;
        for (_, vals) in &m.channels {
            write!(out, " {}", vals[k])?;
        }
        writeln!(out)?;
    }
    for f in faces {
        writeln!(out, "4 {} {} {} {}", f[0], f[1], f[2], f[3])?;
    }
    Ok(())
}

pub fn export_mesh(m: &MeshOutput, format: MeshFormat, path: &Path) -> Result<(), RunError> {
    let mut buf = Vec::new();
    match format {
        MeshFormat::Obj => write_obj(m, &mut buf),
        MeshFormat::Ply => write_ply(m, &mut buf),
    }
    .map_err(io_err(path))?;
    fs::write(path, buf).map_err(io_err(path))
}

/// CSV with one row per vertex and `# name=value` aggregate lines.
pub fn write_report(rr: &ResidualReport, extra: &[(&str, &[Option<f64>])], out: &mut impl Write) -> Result<(), RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["u".to_string(), "v".into(), "valid".into()];
    header.extend(RESIDUAL_COLUMNS.iter().map(|s| s.to_string()));
    header.extend(extra.iter().map(|(n, _)| n.to_string()));
    let csv_err = |e: csv::Error| RunError::Export(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (k, r) in rr.rows.iter().enumerate() {
        let mut rec = vec![r.u.to_string(), r.v.to_string(), (r.valid as u8).to_string()];
        rec.extend(r.values().iter().map(|x| x.to_string()));
        rec.extend(extra.iter().map(|(_, vals)| vals[k].unwrap_or(f64::NAN).to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| RunError::Export(e.to_string()))?;
    let io = |e: std::io::Error| RunError::Export(e.to_string());
    out.write_all(&body).map_err(io)?;
    for (name, value) in rr.aggregates() {
        writeln!(out, "# {name}={value}").map_err(io)?;
    }
    Ok(())
}

/// Parsed CSV report: header, rows, and aggregate lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub aggregates: Vec<(String, f64)>,
}

pub fn parse_report(text: &str) -> Result<ParsedReport, RunError> {
    let mut aggregates = Vec::new();
    for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
        let (k, v) = line.split_once('=').ok_or_else(|| RunError::Export(format!("bad aggregate line {line:?}")))?;
        let v: f64 = v.parse().map_err(|_| RunError::Export(format!("bad aggregate value {v:?}")))?;
        aggregates.push((k.to_string(), v));
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| RunError::Export(e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| RunError::Export(e.to_string()))?;
        let row: Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
        rows.push(row.map_err(|e| RunError::Export(e.to_string()))?);
    }
    Ok(ParsedReport { header, rows, aggregates })
}

/// Everything produced by [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub potential: Option<HoloPotential>,
    pub frames: Option<FrameField>,
    pub surface: SurfaceField,
    pub report: ResidualReport,
    pub umbilic: Vec<Option<f64>>,
    pub mesh: MeshOutput,
}

impl RunOutput {
    pub fn valid_count(&self) -> usize {
        self.surface.valid_count()
    }
}

/// Build, integrate, factor, extract, and verify; writes nothing.
pub fn run(config: &RunConfig) -> Result<RunOutput, RunError> {
    config.validate()?;
    let grid = config.domain_grid()?;
    let (potential, frames, surface) = match &config.builder {
        Builder::ClosedForm { family } => (None, None, geometry::closed_form(*family, &grid)?),
        b => {
            let p = b.potential()?.expect("non-closed-form builders yield a potential");
            let p = p.with_base(Complex64::new(grid.base[0], grid.base[1]));
            let f0 = dpw::constant_frame(&config.initial_frame_matrix(p.n)?, config.truncation);
            let (ff, sf) = dpw::run_dpw(&p, &grid, &f0, &config.options())?;
            (Some(p), Some(ff), sf)
        }
    };
    let report = geometry::residual_report(&surface);
    let umbilic = geometry::umbilic_density(&surface);
    let mesh = MeshOutput::from_surface(&surface, &config.model)?.with_channel("umbilic", umbilic.iter().map(|g| g.unwrap_or(f64::NAN)).collect()).with_channel(
        "conformality",
        report.rows.iter().map(|r| r.conformality).collect(),
    );
    Ok(RunOutput { potential, frames, surface, report, umbilic, mesh })
}

/// Writes the outputs named in the config.
pub fn write_outputs(outputs: &Outputs, out: &RunOutput) -> Result<(), RunError> {
    if let Some(p) = &outputs.obj {
        export_mesh(&out.mesh, MeshFormat::Obj, p)?;
    }
    if let Some(p) = &outputs.ply {
        export_mesh(&out.mesh, MeshFormat::Ply, p)?;
    }
    if let Some(p) = &outputs.report {
        let mut buf = Vec::new();
        write_report(&out.report, &[("umbilic", &out.umbilic)], &mut buf)?;
        fs::write(p, buf).map_err(io_err(p))?;
    }
    Ok(())
}

/// One `verify` line: name, measured value, bound, pass.
pub type Check = (String, f64, f64, bool);

pub fn verify(config: &RunConfig, out: &RunOutput) -> Vec<Check> {
    let agg: std::collections::HashMap<String, f64> = out.report.aggregates().into_iter().collect();
    let t = &config.tolerances;
    let total = agg["vertices"].max(1.0);
    let frac = agg["valid"] / total;
    let mut checks = vec![
        ("valid_fraction".to_string(), frac, t.valid_fraction, frac >= t.valid_fraction),
        ("max_duality".to_string(), agg["max_duality"], t.duality, agg["max_duality"] <= t.duality),
        ("max_conformality".to_string(), agg["max_conformality"], t.conformality, agg["max_conformality"] <= t.conformality),
        ("max_frame".to_string(), agg["max_frame"], t.frame, agg["max_frame"] <= t.frame),
    ];
    if agg["valid"] == 0.0 {
        checks.push(("valid_vertices".into(), 0.0, 1.0, false));
    }
    checks
}

/// The constant `F₀` loop of a config (for callers driving `dpw` directly).
pub fn initial_loop(config: &RunConfig, n: usize) -> Result<LaurentLoop, RunError> {
    Ok(dpw::constant_frame(&config.initial_frame_matrix(n)?, config.truncation))
}
