use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use willmore_dpw::geometry::{self, ClosedFormFamily};
use willmore_dpw::io::{self, Builder, MeshFormat, RunConfig};
use willmore_dpw::lorentz::Model;
use willmore_dpw::potential;

/// Willmore surfaces from loop-group potentials.
#[derive(Parser)]
#[command(name = "willmore", version)]
struct Cli {
    /// Worker threads (also read from WILLMORE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config and write the outputs it names.
    Generate {
        config: PathBuf,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Isotropy and minimality classification of a config's potential.
    Classify {
        config: PathBuf,
        /// Also run the surface and fit a constant linear combination of Y and Yhat.
        #[arg(long)]
        fit: bool,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Run a config and check residuals against its tolerances.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Sample a closed-form surface.
    Oracle {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Run a config and write a single mesh.
    Export {
        config: PathBuf,
        #[arg(long, value_enum)]
        format: MeshFormat,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        ov: Overrides,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Family {
    Lawson,
    HyperbolicLawson,
    Clifford,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Sphere,
    Stereographic,
    Poincare,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    nu: Option<usize>,
    #[arg(long)]
    nv: Option<usize>,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    u_range: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    v_range: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    base: Option<[f64; 2]>,
    #[arg(long)]
    trunc: Option<usize>,
    #[arg(long)]
    max_step: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// OBJ mesh path.
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    ply: Option<PathBuf>,
    /// CSV residual report path.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected a,b but got {s:?}"))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        let g = &mut c.grid;
        if let Some(x) = self.nu {
            g.nu = x;
        }
        if let Some(x) = self.nv {
            g.nv = x;
        }
        if let Some(x) = self.u_range {
            g.u_range = x;
        }
        if let Some(x) = self.v_range {
            g.v_range = x;
        }
        if self.base.is_some() {
            g.base = self.base;
        }
        if let Some(x) = self.trunc {
            c.truncation = x;
        }
        if let Some(x) = self.max_step {
            c.integration.max_step = x;
        }
        if let Some(m) = self.model {
            c.model = match m {
                ModelArg::Sphere => Model::Sphere,
                ModelArg::Stereographic => Model::default(),
                ModelArg::Poincare => Model::poincare_default(),
            };
        }
        if self.mesh.is_some() {
            c.outputs.obj = self.mesh.clone();
        }
        if self.ply.is_some() {
            c.outputs.ply = self.ply.clone();
        }
        if self.report.is_some() {
            c.outputs.report = self.report.clone();
        }
    }
}

fn load(path: &Path, ov: &Overrides) -> Result<RunConfig> {
    let mut c = RunConfig::load(path)?;
    ov.apply(&mut c);
    c.validate()?;
    Ok(c)
}

fn summary(out: &io::RunOutput) {
    for (name, value) in out.report.aggregates() {
        println!("{name}={value}");
    }
}

fn exit_for(out: &io::RunOutput) -> ExitCode {
    if out.valid_count() == 0 {
        eprintln!("no valid vertices");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("WILLMORE_THREADS") {
            Ok(s) => Some(s.trim().parse::<usize>().with_context(|| format!("WILLMORE_THREADS={s:?}"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn classify(c: &RunConfig, fit: bool) -> Result<ExitCode> {
    if let Some(d) = c.builder.bjorling_data()? {
        match potential::constant_data(&d) {
            Ok(e) => {
                println!("constants={:?}", e.as_array());
                println!("minimal={}", potential::classify_minimality(&d)?);
            }
            Err(e) => println!("minimal=unknown ({e})"),
        }
    }
    if let Some(p) = c.builder.potential()? {
        let r = potential::validate(&p)?;
        let class = match r.class {
            potential::IsotropyClass::Isotropic => "isotropic",
            potential::IsotropyClass::HalfIsotropic { .. } => "half-isotropic",
            potential::IsotropyClass::Neither => "neither",
        };
        println!("isotropy={class}");
        println!("isotropic_residual={:e}", r.isotropic_residual);
        println!("half_residual={:e}", r.half_residual);
        println!("rank={}", r.rank);
    }
    if fit {
        let out = io::run(c)?;
        let cc = geometry::find_constant_combination(&out.surface)?;
        println!("fit_class={}", cc.class);
        println!("fit_residual={:e}", cc.residual);
        return Ok(exit_for(&out));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    init_threads(cli.threads)?;
    match cli.cmd {
        Command::Generate { config, ov } => {
            let c = load(&config, &ov)?;
            let out = io::run(&c)?;
            io::write_outputs(&c.outputs, &out)?;
            summary(&out);
            Ok(exit_for(&out))
        }
        Command::Classify { config, fit, ov } => classify(&load(&config, &ov)?, fit),
        Command::Verify { config, ov } => {
            let c = load(&config, &ov)?;
            let out = io::run(&c)?;
            let checks = io::verify(&c, &out);
            let mut ok = true;
            for (name, value, bound, pass) in &checks {
                println!("{} {name}: {value:e} (bound {bound:e})", if *pass { "PASS" } else { "FAIL" });
                ok &= pass;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Oracle { family, r, ov } => {
            let family = match family {
                Family::Lawson => ClosedFormFamily::Lawson { r },
                Family::HyperbolicLawson => ClosedFormFamily::HyperbolicLawson { r },
                Family::Clifford => ClosedFormFamily::Clifford,
            };
            let mut c = RunConfig::new(Builder::ClosedForm { family });
            ov.apply(&mut c);
            c.validate()?;
            let out = io::run(&c)?;
            io::write_outputs(&c.outputs, &out)?;
            summary(&out);
            Ok(exit_for(&out))
        }
        Command::Export { config, format, out: path, ov } => {
            let c = load(&config, &ov)?;
            let out = io::run(&c)?;
            if out.valid_count() == 0 {
                bail!("no valid vertices to export");
            }
            io::export_mesh(&out.mesh, format, &path)?;
            summary(&out);
            Ok(ExitCode::SUCCESS)
        }
    }
}
