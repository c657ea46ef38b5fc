//! Scenario files and the command-line front end.
//!
//! A scenario is a flat `key = value` text file with dotted keys and `#`
//! comments. Numbers may carry a `pi` suffix (`2pi`, `0.25pi`), lists are
//! comma separated. Example:
//!
//! ```text
//! name = decay_equal_damping
//! phi = power:1
//! damping.a = 0.3
//! damping.b = 0.3
//! grid.x_hi = 2pi
//! grid.n_cells = 2048
//! initial.profile = sine_radial
//! initial.mean = 0.1
//! initial.amplitude = 0.05
//! solver.t_end = 1
//! solver.outputs = 21
//! analysis.decay = true
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    decay_harness, energy_law_residual, entropy_residual, riemann_invariant_diagnostics,
    TensorBump, WeightFunction,
};
use crate::entropy::{power_entropy_pair, verify_pair};
use crate::error::{Error, Result};
use crate::model::{classify_field, eigenstructure, Damping, FieldKind, PhiModel, State};
use crate::region::{
    boundary_flow_check, trajectory_containment, BoundaryPiece, RegionSigma,
    DEFAULT_CONTAINMENT_TOL,
};
use crate::solver::{
    save_snapshot, simulate, Boundary, Grid1D, Scheme, SolverConfig, Splitting, StateField,
    Trajectory,
};
use crate::viscous::{vanishing_viscosity_sweep, ViscosityReference};

pub const OUTPUT_DIR_ENV: &str = "KKD_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "kkd-output";

/// Parses a number with an optional `pi` multiplier suffix.
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim();
    let value = if let Some(prefix) = t.strip_suffix("pi") {
        let factor = match prefix.trim() {
            "" | "+" => 1.0,
            "-" => -1.0,
            p => p.trim_end_matches('*').trim().parse::<f64>().ok()?,
        };
        factor * std::f64::consts::PI
    } else {
        t.parse::<f64>().ok()?
    };
    value.is_finite().then_some(value)
}

/// φ family spec: `power:γ`, `shifted:c:γ`, `constant:c` or `table:path`.
pub fn parse_phi_spec(spec: &str, r_max: Option<f64>, base_dir: &Path) -> Result<PhiModel> {
    let invalid = |msg: String| Error::InvalidArgument(msg);
    let (family, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let nums = |n: usize| -> Result<Vec<f64>> {
        let parts: Vec<&str> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(':').collect()
        };
        if parts.len() != n {
            return Err(invalid(format!(
                "phi family `{family}` takes {n} parameter(s), got `{spec}`"
            )));
        }
        parts
            .iter()
            .map(|p| {
                parse_number(p)
                    .ok_or_else(|| invalid(format!("bad number `{p}` in phi spec `{spec}`")))
            })
            .collect()
    };
    let r_max = r_max.unwrap_or(10.0);
    match family.trim() {
        "power" => PhiModel::power(nums(1)?[0], r_max),
        "shifted" => {
            let p = nums(2)?;
            PhiModel::shifted(p[0], p[1], r_max)
        }
        "constant" => PhiModel::constant(nums(1)?[0], r_max),
        "table" => {
            if rest.is_empty() {
                return Err(invalid("table spec needs a path".into()));
            }
            let path = base_dir.join(rest);
            PhiModel::from_table_file(path, Some(r_max))
        }
        other => Err(invalid(format!("unknown phi family `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
    key_column: usize,
    value_column: usize,
}

/// Key-value pairs of a scenario file, consumed as they are interpreted.
#[derive(Debug, Clone, Default)]
struct Fields {
    entries: BTreeMap<String, Entry>,
}

fn parse_error(e: &Entry, message: impl Into<String>) -> Error {
    Error::Parse {
        line: e.line,
        column: e.value_column,
        message: message.into(),
    }
}

fn missing(key: &str) -> Error {
    Error::Validation {
        field: key.into(),
        message: "required key is missing".into(),
    }
}

impl Fields {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let key_column = content.chars().take_while(|c| c.is_whitespace()).count() + 1;
            let Some((key_part, value_part)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    column: key_column,
                    message: "expected `key = value`".into(),
                });
            };
            let key = key_part.trim();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            {
                return Err(Error::Parse {
                    line,
                    column: key_column,
                    message: format!("invalid key `{key}`"),
                });
            }
            let eq_column = key_part.chars().count() + 1;
            let value_column =
                eq_column + 1 + value_part.chars().take_while(|c| c.is_whitespace()).count();
            let value = value_part.trim();
            if value.is_empty() {
                return Err(Error::Parse {
                    line,
                    column: value_column,
                    message: format!("empty value for `{key}`"),
                });
            }
            let entry = Entry {
                value: value.to_string(),
                line,
                key_column,
                value_column,
            };
            if entries.insert(key.to_string(), entry).is_some() {
                return Err(Error::Parse {
                    line,
                    column: key_column,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn string(&mut self, key: &str, default: Option<&str>) -> Result<String> {
        match self.take(key) {
            Some(e) => Ok(e.value),
            None => default.map(str::to_string).ok_or_else(|| missing(key)),
        }
    }

    fn f64(&mut self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.take(key) {
            Some(e) => parse_number(&e.value)
                .ok_or_else(|| parse_error(&e, format!("`{}` is not a number", e.value))),
            None => default.ok_or_else(|| missing(key)),
        }
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        if self.entries.contains_key(key) {
            self.f64(key, None).map(Some)
        } else {
            Ok(None)
        }
    }

    fn usize(&mut self, key: &str, default: Option<usize>) -> Result<usize> {
        match self.take(key) {
            Some(e) => e.value.parse().map_err(|_| {
                parse_error(&e, format!("`{}` is not a nonnegative integer", e.value))
            }),
            None => default.ok_or_else(|| missing(key)),
        }
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            Some(e) => e.value.parse().map_err(|_| {
                parse_error(&e, format!("`{}` is not a nonnegative integer", e.value))
            }),
            None => Ok(default),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            Some(e) => match e.value.as_str() {
                "true" | "on" | "yes" => Ok(true),
                "false" | "off" | "no" => Ok(false),
                other => Err(parse_error(&e, format!("`{other}` is not a boolean"))),
            },
            None => Ok(default),
        }
    }

    fn f64_list(&mut self, key: &str, default: Option<Vec<f64>>) -> Result<Vec<f64>> {
        match self.take(key) {
            Some(e) => e
                .value
                .split(',')
                .map(|p| {
                    parse_number(p)
                        .ok_or_else(|| parse_error(&e, format!("`{}` is not a number", p.trim())))
                })
                .collect(),
            None => default.ok_or_else(|| missing(key)),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, e)| e.line) {
            Some((key, e)) => Err(Error::Parse {
                line: e.line,
                column: e.key_column,
                message: format!("unknown key `{key}`"),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    Constant {
        u: f64,
        v: f64,
    },
    /// r = mean + amplitude·sin(k x), angle = angle_mean + angle_amplitude·sin(angle_k x),
    /// u = r cos(angle), v = r sin(angle).
    SineRadial {
        mean: f64,
        amplitude: f64,
        wavenumber: f64,
        angle_mean: f64,
        angle_amplitude: f64,
        angle_wavenumber: f64,
    },
    /// u = u_mean + u_amplitude·sin(k x), v = v_mean + v_amplitude·sin(k x).
    SineComponents {
        u_mean: f64,
        u_amplitude: f64,
        v_mean: f64,
        v_amplitude: f64,
        wavenumber: f64,
    },
    RiemannStep {
        left: (f64, f64),
        right: (f64, f64),
        x_step: f64,
    },
    /// Whitespace-separated `x u v` rows, one per cell.
    FromFile {
        path: PathBuf,
    },
}

impl InitialProfile {
    /// Closed-form value at `x`, when the profile has one.
    pub fn eval(&self, x: f64) -> Option<(f64, f64)> {
        match *self {
            InitialProfile::Constant { u, v } => Some((u, v)),
            InitialProfile::SineRadial {
                mean,
                amplitude,
                wavenumber,
                angle_mean,
                angle_amplitude,
                angle_wavenumber,
            } => {
                let r = mean + amplitude * (wavenumber * x).sin();
                let angle = angle_mean + angle_amplitude * (angle_wavenumber * x).sin();
                Some((r * angle.cos(), r * angle.sin()))
            }
            InitialProfile::SineComponents {
                u_mean,
                u_amplitude,
                v_mean,
                v_amplitude,
                wavenumber,
            } => {
                let s = (wavenumber * x).sin();
                Some((u_mean + u_amplitude * s, v_mean + v_amplitude * s))
            }
            InitialProfile::RiemannStep {
                left,
                right,
                x_step,
            } => Some(if x < x_step { left } else { right }),
            InitialProfile::FromFile { .. } => None,
        }
    }

    pub fn field(&self, grid: Grid1D) -> Result<StateField> {
        match self {
            InitialProfile::FromFile { path } => {
                let text = fs::read_to_string(path)?;
                let (mut u, mut v) = (Vec::new(), Vec::new());
                for (idx, line) in text.lines().enumerate() {
                    let content = line.split('#').next().unwrap_or("").trim();
                    if content.is_empty() {
                        continue;
                    }
                    let cols: Vec<&str> = content.split_whitespace().collect();
                    let parsed: Option<Vec<f64>> = cols.iter().map(|c| c.parse().ok()).collect();
                    match parsed {
                        Some(p) if p.len() == 3 => {
                            u.push(p[1]);
                            v.push(p[2]);
                        }
                        _ => {
                            return Err(Error::Parse {
                                line: idx + 1,
                                column: 1,
                                message: format!("expected `x u v` in {}", path.display()),
                            })
                        }
                    }
                }
                if u.len() != grid.n_cells {
                    return Err(Error::Validation {
                        field: "initial.path".into(),
                        message: format!(
                            "file has {} rows but the grid has {} cells",
                            u.len(),
                            grid.n_cells
                        ),
                    });
                }
                StateField::new(grid, u, v, 0.0)
            }
            other => StateField::from_fn(grid, |x| other.eval(x).expect("closed-form profile")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySpec {
    pub p: Vec<f64>,
    pub weighted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentSpec {
    /// Defaults: C0 = max φ(r₀), C1 = 0, C2 = max u₀/v₀.
    pub c0: Option<f64>,
    pub c1: f64,
    pub c2: Option<f64>,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionFlowSpec {
    pub sigma: RegionSigma,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropySpec {
    pub m: f64,
    pub bumps: Vec<TensorBump>,
    /// Pass iff every residual is at most this.
    pub tol: f64,
    /// Random states for the pairing-residual check (0 disables it).
    pub pair_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Analyses {
    pub decay: Option<DecaySpec>,
    pub containment: Option<ContainmentSpec>,
    pub region_flow: Option<RegionFlowSpec>,
    pub riemann_invariants: bool,
    pub entropy: Option<EntropySpec>,
    /// Tolerance on |energy-law residual|.
    pub energy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub phi_spec: String,
    pub phi: PhiModel,
    pub damping: Damping,
    pub grid: Grid1D,
    pub initial: InitialProfile,
    pub solver: SolverConfig,
    pub output_count: Option<usize>,
    pub analyses: Analyses,
    /// Every input key and value, in file order, for the manifest.
    pub inputs: Vec<(String, String)>,
}

fn parse_bumps(e: &Entry) -> Result<Vec<TensorBump>> {
    e.value
        .split(';')
        .map(|group| {
            let nums: Option<Vec<f64>> = group.split_whitespace().map(parse_number).collect();
            match nums {
                Some(n) if n.len() == 4 => Ok(TensorBump::new(n[0], n[1], n[2], n[3])),
                _ => Err(parse_error(
                    e,
                    format!("bump `{}` needs four numbers `x0 wx t0 wt`", group.trim()),
                )),
            }
        })
        .collect()
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scenario");
        Self::parse(&text, base, stem)
    }

    /// Parses scenario text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, default_name: &str) -> Result<Self> {
        let mut fields = Fields::parse(text)?;
        let mut inputs: Vec<(usize, String, String)> = fields
            .entries
            .iter()
            .map(|(k, e)| (e.line, k.clone(), e.value.clone()))
            .collect();
        inputs.sort();
        let inputs = inputs.into_iter().map(|(_, k, v)| (k, v)).collect();

        let name = fields.string("name", Some(default_name))?;
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(Error::Validation {
                field: "name".into(),
                message: format!("`{name}` is not a valid run name"),
            });
        }
        let seed = fields.u64("seed", 0)?;

        let r_max = fields.f64("phi.r_max", Some(10.0))?;
        let phi_entry = fields.take("phi").ok_or_else(|| missing("phi"))?;
        let phi_spec = phi_entry.value.clone();
        let phi = parse_phi_spec(&phi_spec, Some(r_max), base_dir).map_err(|e| match e {
            Error::InvalidArgument(msg) => parse_error(&phi_entry, msg),
            other => other,
        })?;

        let a = fields.f64("damping.a", None)?;
        let b = fields.f64("damping.b", None)?;
        let damping = Damping::new(a, b).map_err(|e| Error::Validation {
            field: "damping".into(),
            message: e.to_string(),
        })?;
        if !damping.is_ordered() {
            return Err(Error::Validation {
                field: "damping".into(),
                message: format!("condition C2 requires a >= b, got a = {a}, b = {b}"),
            });
        }

        let x_lo = fields.f64("grid.x_lo", Some(0.0))?;
        let x_hi = fields.f64("grid.x_hi", None)?;
        let n_cells = fields.usize("grid.n_cells", None)?;
        let boundary = match fields.take("grid.boundary") {
            None => Boundary::Periodic,
            Some(e) => match e.value.as_str() {
                "periodic" => Boundary::Periodic,
                "outflow" => Boundary::Outflow,
                other => return Err(parse_error(&e, format!("unknown boundary `{other}`"))),
            },
        };
        let grid = Grid1D::new(x_lo, x_hi, n_cells, boundary).map_err(|e| Error::Validation {
            field: "grid".into(),
            message: e.to_string(),
        })?;

        let profile = fields
            .take("initial.profile")
            .ok_or_else(|| missing("initial.profile"))?;
        let initial = match profile.value.as_str() {
            "constant" => InitialProfile::Constant {
                u: fields.f64("initial.u", None)?,
                v: fields.f64("initial.v", None)?,
            },
            "sine_radial" => InitialProfile::SineRadial {
                mean: fields.f64("initial.mean", None)?,
                amplitude: fields.f64("initial.amplitude", None)?,
                wavenumber: fields.f64("initial.wavenumber", Some(1.0))?,
                angle_mean: fields.f64("initial.angle_mean", Some(std::f64::consts::FRAC_PI_4))?,
                angle_amplitude: fields.f64("initial.angle_amplitude", Some(0.0))?,
                angle_wavenumber: fields.f64("initial.angle_wavenumber", Some(1.0))?,
            },
            "sine_components" => InitialProfile::SineComponents {
                u_mean: fields.f64("initial.u_mean", Some(0.0))?,
                u_amplitude: fields.f64("initial.u_amplitude", None)?,
                v_mean: fields.f64("initial.v_mean", Some(0.0))?,
                v_amplitude: fields.f64("initial.v_amplitude", None)?,
                wavenumber: fields.f64("initial.wavenumber", Some(1.0))?,
            },
            "riemann_step" => {
                let pair = |fields: &mut Fields, key: &str| -> Result<(f64, f64)> {
                    let l = fields.f64_list(key, None)?;
                    if l.len() != 2 {
                        return Err(Error::Validation {
                            field: key.into(),
                            message: "expects `u, v`".into(),
                        });
                    }
                    Ok((l[0], l[1]))
                };
                InitialProfile::RiemannStep {
                    left: pair(&mut fields, "initial.left")?,
                    right: pair(&mut fields, "initial.right")?,
                    x_step: fields.f64("initial.x_step", Some(0.5 * (x_lo + x_hi)))?,
                }
            }
            "from_file" => InitialProfile::FromFile {
                path: base_dir.join(fields.string("initial.path", None)?),
            },
            other => {
                return Err(parse_error(
                    &profile,
                    format!("unknown initial profile `{other}`"),
                ))
            }
        };

        let scheme = match fields.take("solver.scheme") {
            None => Scheme::Rusanov,
            Some(e) => match e.value.as_str() {
                "rusanov" => Scheme::Rusanov,
                "lax_friedrichs" => Scheme::LaxFriedrichs,
                other => return Err(parse_error(&e, format!("unknown scheme `{other}`"))),
            },
        };
        let splitting = match fields.take("solver.splitting") {
            None => Splitting::Strang,
            Some(e) => match e.value.as_str() {
                "strang" => Splitting::Strang,
                "lie" => Splitting::Lie,
                other => return Err(parse_error(&e, format!("unknown splitting `{other}`"))),
            },
        };
        let mut solver = SolverConfig {
            scheme,
            splitting,
            cfl: fields.f64("solver.cfl", Some(0.45))?,
            t_end: fields.f64("solver.t_end", None)?,
            output_times: Vec::new(),
            record_every_step: fields.bool("solver.record_every_step", false)?,
        };
        let output_count = match fields.opt_f64("solver.outputs")? {
            Some(n) if n >= 2.0 && n.fract() == 0.0 => Some(n as usize),
            Some(n) => {
                return Err(Error::Validation {
                    field: "solver.outputs".into(),
                    message: format!("need an integer >= 2, got {n}"),
                })
            }
            None => None,
        };
        if let Some(n) = output_count {
            solver = solver.with_uniform_outputs(n);
        }
        solver.validate()?;

        let mut analyses = Analyses::default();
        let decay_on = fields.bool("analysis.decay", false)?;
        let decay = DecaySpec {
            p: fields.f64_list("analysis.decay.p", Some(vec![2.0]))?,
            weighted: fields.bool("analysis.decay.weighted", false)?,
        };
        if decay.p.iter().any(|p| !(*p >= 1.0)) {
            return Err(Error::Validation {
                field: "analysis.decay.p".into(),
                message: "exponents must be >= 1".into(),
            });
        }
        analyses.decay = decay_on.then_some(decay);

        let containment_on = fields.bool("analysis.containment", false)?;
        let containment = ContainmentSpec {
            c0: fields.opt_f64("analysis.containment.c0")?,
            c1: fields.f64("analysis.containment.c1", Some(0.0))?,
            c2: fields.opt_f64("analysis.containment.c2")?,
            tol: fields.f64("analysis.containment.tol", Some(DEFAULT_CONTAINMENT_TOL))?,
        };
        analyses.containment = containment_on.then_some(containment);

        let flow_on = fields.bool("analysis.region_flow", false)?;
        let flow_c0 = fields.opt_f64("analysis.region_flow.c0")?;
        let flow_c1 = fields.f64("analysis.region_flow.c1", Some(0.0))?;
        let flow_c2 = fields.opt_f64("analysis.region_flow.c2")?;
        let flow_samples = fields.usize("analysis.region_flow.samples", Some(100))?;
        if flow_on {
            let sigma = RegionSigma::new(
                flow_c0.ok_or_else(|| missing("analysis.region_flow.c0"))?,
                flow_c1,
                flow_c2.ok_or_else(|| missing("analysis.region_flow.c2"))?,
            )
            .map_err(|e| Error::Validation {
                field: "analysis.region_flow".into(),
                message: e.to_string(),
            })?;
            analyses.region_flow = Some(RegionFlowSpec {
                sigma,
                samples: flow_samples,
            });
        }

        analyses.riemann_invariants = fields.bool("analysis.riemann_invariants", false)?;

        let entropy_on = fields.bool("analysis.entropy", false)?;
        let m = fields.f64("analysis.entropy.m", Some(2.0))?;
        let bumps = match fields.take("analysis.entropy.bumps") {
            Some(e) => parse_bumps(&e)?,
            None => Vec::new(),
        };
        let entropy = EntropySpec {
            m,
            bumps,
            tol: fields.f64("analysis.entropy.tol", Some(0.0))?,
            pair_samples: fields.usize("analysis.entropy.pair_samples", Some(100))?,
        };
        if entropy_on {
            if entropy.m < 1.0 {
                return Err(Error::Validation {
                    field: "analysis.entropy.m".into(),
                    message: "the power entropy needs m >= 1".into(),
                });
            }
            if !solver.record_every_step {
                info!("entropy analysis enabled: recording every time step");
                solver.record_every_step = true;
            }
            analyses.entropy = Some(entropy);
        }

        let energy_on = fields.bool("analysis.energy", false)?;
        let energy_tol = fields.f64("analysis.energy.tol", Some(1e-2))?;
        if energy_on {
            if !solver.record_every_step {
                info!("energy analysis enabled: recording every time step");
                solver.record_every_step = true;
            }
            analyses.energy = Some(energy_tol);
        }
        fields.finish()?;

        Ok(Self {
            name,
            seed,
            phi_spec,
            phi,
            damping,
            grid,
            initial,
            solver,
            output_count,
            analyses,
            inputs,
        })
    }

    /// Same scenario on a grid with `n_cells` cells.
    pub fn with_cells(&self, n_cells: usize) -> Result<Self> {
        let mut out = self.clone();
        out.grid = self.grid.with_cells(n_cells)?;
        Ok(out)
    }

    pub fn initial_field(&self) -> Result<StateField> {
        let f = self.initial.field(self.grid)?;
        let r_sup = f.r().into_iter().fold(0.0, f64::max);
        if r_sup > self.phi.r_max() {
            return Err(Error::Validation {
                field: "phi.r_max".into(),
                message: format!(
                    "initial data reaches r = {r_sup}, beyond r_max = {}",
                    self.phi.r_max()
                ),
            });
        }
        Ok(f)
    }

    pub fn simulate(&self) -> Result<Trajectory> {
        simulate(
            &self.initial_field()?,
            &self.phi,
            &self.damping,
            &self.solver,
        )
    }

    /// Frames at the requested output times (all frames if none were requested).
    pub fn output_frames<'a>(&self, traj: &'a Trajectory) -> Vec<&'a StateField> {
        let t_end = self.solver.t_end;
        traj.frames
            .iter()
            .filter(|f| {
                !self.solver.record_every_step
                    || f.t == t_end
                    || self.solver.output_times.iter().any(|&o| o == f.t)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub name: String,
    pub out_dir: PathBuf,
    pub checks: Vec<CheckResult>,
}

impl RunReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn decay_checks(
    scn: &Scenario,
    traj: &Trajectory,
    spec: &DecaySpec,
    dir: &Path,
) -> Result<Vec<CheckResult>> {
    let frames: Vec<StateField> = scn.output_frames(traj).into_iter().cloned().collect();
    let sampled = Trajectory { frames };
    let weight = WeightFunction {
        center: 0.5 * (scn.grid.x_lo + scn.grid.x_hi),
    };
    let mut checks = Vec::new();
    for &p in &spec.p {
        let rep = decay_harness(
            &sampled,
            p,
            spec.weighted.then_some(&weight),
            &scn.damping,
            &scn.phi,
            None,
        )?;
        let verdict = format!(
            "{} fitted_rate={:e} theorem_rate={:e} K_est={:e} bound_holds={} rate_in_range={}",
            if rep.pass { "PASS" } else { "FAIL" },
            rep.fitted_rate,
            rep.theorem_rate,
            rep.k_est,
            rep.bound_holds,
            rep.rate_in_range
        );
        let mut body = format!("# p = {p:e}\n# t\tnorm\tbound\n");
        for ((t, n), b) in rep.times.iter().zip(&rep.norms).zip(&rep.bounds) {
            let _ = writeln!(body, "{t:e}\t{n:e}\t{b:e}");
        }
        let _ = writeln!(body, "# verdict: {verdict}");
        write_file(&dir.join(format!("{}_decay_p{p}.tsv", scn.name)), &body)?;
        checks.push(CheckResult {
            name: format!("decay_p{p}"),
            pass: rep.pass,
            detail: verdict,
        });
    }
    Ok(checks)
}

fn containment_check(
    scn: &Scenario,
    traj: &Trajectory,
    spec: &ContainmentSpec,
) -> Result<CheckResult> {
    let init = traj
        .first()
        .ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let mut w_max = f64::NEG_INFINITY;
    let mut z_max = f64::NEG_INFINITY;
    for i in 0..init.len() {
        let s = init.state(i);
        if s.v == 0.0 {
            return Err(Error::AxisState { u: s.u, v: s.v });
        }
        w_max = w_max.max(scn.phi.value(s.r()));
        z_max = z_max.max(s.u / s.v);
    }
    let sigma = RegionSigma::new(spec.c0.unwrap_or(w_max), spec.c1, spec.c2.unwrap_or(z_max))?;
    let rep = trajectory_containment(traj, &sigma, &scn.phi, spec.tol)?;
    Ok(CheckResult {
        name: "containment".into(),
        pass: rep.contained(),
        detail: format!(
            "C0={:e} C1={:e} C2={:e} max_violation={:e} violating_cells={} first_violation_time={}",
            sigma.c0,
            sigma.c1,
            sigma.c2,
            rep.max_violation,
            rep.violating_cells,
            rep.first_violation_time
                .map_or("none".to_string(), |t| format!("{t:e}"))
        ),
    })
}

fn region_flow_checks(scn: &Scenario, spec: &RegionFlowSpec) -> Result<Vec<CheckResult>> {
    let rep = boundary_flow_check(&spec.sigma, &scn.phi, &scn.damping, spec.samples)?;
    Ok(rep
        .pieces
        .iter()
        .map(|p| CheckResult {
            name: format!("region_flow_{}", p.piece),
            // the check passes when the sampled signs match the closed forms
            pass: p.closed_form_agrees,
            detail: format!(
                "inward={} min_dot={:e} max_dot={:e} samples={}",
                p.pass, p.min_dot, p.max_dot, p.samples
            ),
        })
        .collect())
}

fn riemann_invariant_check(scn: &Scenario, traj: &Trajectory, dir: &Path) -> Result<CheckResult> {
    let frames: Vec<StateField> = scn.output_frames(traj).into_iter().cloned().collect();
    let rep = riemann_invariant_diagnostics(&Trajectory { frames }, &scn.phi, &scn.damping)?;
    let mut body = String::from("# t\tsup_abs_Z\tpredicted_sup_abs_Z\tsup_W\n");
    for i in 0..rep.times.len() {
        let _ = writeln!(
            body,
            "{:e}\t{:e}\t{:e}\t{:e}",
            rep.times[i], rep.sup_abs_z[i], rep.predicted_sup_abs_z[i], rep.sup_w[i]
        );
    }
    write_file(
        &dir.join(format!("{}_riemann_invariants.tsv", scn.name)),
        &body,
    )?;
    Ok(CheckResult {
        name: "riemann_invariants".into(),
        pass: rep.pass,
        detail: format!(
            "z_ok={} w_ok={} fitted_z_rate={}",
            rep.z_ok,
            rep.w_ok,
            rep.fitted_z_rate
                .map_or("none".to_string(), |r| format!("{r:e}"))
        ),
    })
}

/// `n` random states with radius in (0, r_hi] and angle in (0, π/2).
pub fn random_states(seed: u64, n: usize, r_hi: f64) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = r_hi * (1.0 - rng.gen::<f64>());
            let angle = std::f64::consts::FRAC_PI_2 * (0.01 + 0.98 * rng.gen::<f64>());
            State::new(r * angle.cos(), r * angle.sin())
        })
        .collect()
}

fn entropy_checks(
    scn: &Scenario,
    traj: &Trajectory,
    spec: &EntropySpec,
    dir: &Path,
) -> Result<Vec<CheckResult>> {
    let pair = power_entropy_pair(spec.m, &scn.phi)?;
    let mut checks = Vec::new();
    if !spec.bumps.is_empty() {
        let rep = entropy_residual(traj, &pair, &scn.damping, &spec.bumps)?;
        let mut body = String::from("# x0\twx\tt0\twt\tresidual\n");
        for (b, r) in spec.bumps.iter().zip(&rep.residuals) {
            let _ = writeln!(
                body,
                "{:e}\t{:e}\t{:e}\t{:e}\t{r:e}",
                b.x0, b.wx, b.t0, b.wt
            );
        }
        write_file(
            &dir.join(format!("{}_entropy_residuals.tsv", scn.name)),
            &body,
        )?;
        checks.push(CheckResult {
            name: "entropy_inequality".into(),
            pass: rep.max_residual <= spec.tol,
            detail: format!("max_residual={:e} tol={:e}", rep.max_residual, spec.tol),
        });
    }
    if spec.pair_samples > 0 {
        let r_sup = traj
            .first()
            .map_or(1.0, |f| f.r().into_iter().fold(0.0, f64::max));
        let states = random_states(scn.seed, spec.pair_samples, r_sup.max(f64::MIN_POSITIVE));
        let rep = verify_pair(&pair, &scn.phi, &states)?;
        checks.push(CheckResult {
            name: "entropy_pair".into(),
            pass: rep.pass,
            detail: format!(
                "max_residual={:e} threshold={:e}",
                rep.max_residual, rep.threshold
            ),
        });
    }
    Ok(checks)
}

/// Simulates `scn`, runs every enabled analysis and writes the artifacts
/// into `out_dir`.
pub fn run_scenario(scn: &Scenario, out_dir: &Path, source: Option<&Path>) -> Result<RunReport> {
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let traj = scn.simulate()?;
    for f in scn.output_frames(&traj) {
        save_snapshot(out_dir, &scn.name, f, &scn.phi)?;
    }
    let an = &scn.analyses;
    let mut checks = Vec::new();
    if let Some(spec) = &an.decay {
        checks.extend(decay_checks(scn, &traj, spec, out_dir)?);
    }
    if let Some(spec) = &an.containment {
        checks.push(containment_check(scn, &traj, spec)?);
    }
    if let Some(spec) = &an.region_flow {
        checks.extend(region_flow_checks(scn, spec)?);
    }
    if an.riemann_invariants {
        checks.push(riemann_invariant_check(scn, &traj, out_dir)?);
    }
    if let Some(spec) = &an.entropy {
        checks.extend(entropy_checks(scn, &traj, spec, out_dir)?);
    }
    if let Some(tol) = an.energy {
        let res = energy_law_residual(&traj, &scn.damping)?;
        checks.push(CheckResult {
            name: "energy_law".into(),
            pass: res.abs() <= tol,
            detail: format!("residual={res:e} tol={tol:e}"),
        });
    }
    let mut table = String::from("# check\tresult\tdetail\n");
    for c in &checks {
        let _ = writeln!(
            table,
            "{}\t{}\t{}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    write_file(&out_dir.join(format!("{}_checks.tsv", scn.name)), &table)?;

    let mut manifest = format!("# kkd {}\n", env!("CARGO_PKG_VERSION"));
    if let Some(src) = source {
        let _ = writeln!(manifest, "scenario_file = {}", src.display());
    }
    for (k, v) in &scn.inputs {
        let _ = writeln!(manifest, "{k} = {v}");
    }
    let _ = writeln!(manifest, "frames = {}", traj.len());
    let _ = writeln!(
        manifest,
        "all_checks_pass = {}",
        checks.iter().all(|c| c.pass)
    );
    let _ = writeln!(
        manifest,
        "wall_time_seconds = {:e}",
        started.elapsed().as_secs_f64()
    );
    write_file(&out_dir.join("manifest.txt"), &manifest)?;
    Ok(RunReport {
        name: scn.name.clone(),
        out_dir: out_dir.to_path_buf(),
        checks,
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "kkd",
    version,
    about = "Damped symmetric Keyfitz-Kranzer laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceKind {
    /// Hyperbolic solver on the same grid
    Hyperbolic,
    /// Closed-form transport solution (constant phi only)
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PieceName {
    WUpper,
    ZLower,
    ZUpper,
}

impl From<PieceName> for BoundaryPiece {
    fn from(p: PieceName) -> Self {
        match p {
            PieceName::WUpper => BoundaryPiece::WUpper,
            PieceName::ZLower => BoundaryPiece::ZLower,
            PieceName::ZUpper => BoundaryPiece::ZUpper,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run scenario files with all their analyses
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Number of scenarios run concurrently
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output root (overrides KKD_OUTPUT_DIR)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a scenario and write snapshots only
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a scenario and fit the decay of the L^p norms
    Decay {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        p: Vec<f64>,
        /// Use the exponential weight centered on the domain
        #[arg(long)]
        weighted: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the power entropy pair (r^m, q)
    EntropyPair {
        #[arg(long)]
        m: f64,
        #[arg(long, default_value = "power:1")]
        phi: String,
        #[arg(long, default_value_t = 1.0)]
        r_max: f64,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Also write the table to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the direction of the damping source on the boundary of the region
    RegionCheck {
        #[arg(long, default_value = "power:1")]
        phi: String,
        #[arg(long, default_value_t = 10.0)]
        r_max: f64,
        #[arg(long, default_value_t = 0.6)]
        a: f64,
        #[arg(long, default_value_t = 0.2)]
        b: f64,
        #[arg(long, default_value_t = 2.0)]
        c0: f64,
        #[arg(long, default_value_t = 0.5)]
        c1: f64,
        #[arg(long, default_value_t = 2.0)]
        c2: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Boundary pieces left out of the verdict
        #[arg(long, value_enum, value_delimiter = ',')]
        skip: Vec<PieceName>,
    },
    /// Vanishing-viscosity sweep: L1 distance to a reference for each epsilon
    Convergence {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0.4)]
        diffusion_number: f64,
        #[arg(long, value_enum, default_value_t = ReferenceKind::Hyperbolic)]
        reference: ReferenceKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues, eigenvectors and field classification at one state
    Eigen {
        #[arg(long, default_value = "power:1")]
        phi: String,
        #[arg(long, default_value_t = 100.0)]
        r_max: f64,
        /// State as `u,v`
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        state: Vec<f64>,
    },
}

/// Output root: `--out`, else `$KKD_OUTPUT_DIR`, else `kkd-output`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    std::env::var_os(OUTPUT_DIR_ENV)
        .map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR), PathBuf::from)
}

fn with_context(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { .. } | Error::Validation { .. } => e,
        other => Error::Config(format!("{}: {other}", path.display())),
    }
}

fn print_checks(out: &mut dyn Write, report: &RunReport) -> Result<()> {
    for c in &report.checks {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            report.name,
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        )?;
    }
    writeln!(
        out,
        "{}\t{}",
        report.name,
        if report.pass() { "PASS" } else { "FAIL" }
    )?;
    Ok(())
}

fn run_batch(paths: &[PathBuf], jobs: usize, root: &Path, out: &mut dyn Write) -> Result<bool> {
    let scenarios = paths
        .iter()
        .map(|p| Scenario::from_file(p).map_err(|e| with_context(e, p)))
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!(
            "two scenarios share the run name `{}`",
            w[0]
        )));
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunReport>>>> =
        Mutex::new(scenarios.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, scenarios.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(scn) = scenarios.get(i) else { break };
                let res = run_scenario(scn, &root.join(&scn.name), Some(&paths[i]))
                    .map_err(|e| with_context(e, &paths[i]));
                results.lock().expect("results lock")[i] = Some(res);
            });
        }
    });
    let mut all = true;
    for res in results.into_inner().expect("results lock") {
        let report = res.expect("every scenario ran")?;
        print_checks(out, &report)?;
        all &= report.pass();
    }
    Ok(all)
}

/// Executes one command, writing human-readable tables to `out`.
/// Returns whether every check passed.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    match cli.command {
        Command::Run {
            scenarios,
            jobs,
            out: dir,
        } => run_batch(&scenarios, jobs, &output_root(dir.as_deref()), out),
        Command::Simulate { scenario, out: dir } => {
            let mut scn = Scenario::from_file(&scenario).map_err(|e| with_context(e, &scenario))?;
            scn.analyses = Analyses::default();
            let report = run_scenario(
                &scn,
                &output_root(dir.as_deref()).join(&scn.name),
                Some(&scenario),
            )?;
            writeln!(
                out,
                "{}\tsnapshots written to {}",
                scn.name,
                report.out_dir.display()
            )?;
            Ok(true)
        }
        Command::Decay {
            scenario,
            p,
            weighted,
            out: dir,
        } => {
            let mut scn = Scenario::from_file(&scenario).map_err(|e| with_context(e, &scenario))?;
            if p.iter().any(|p| !(*p >= 1.0)) {
                return Err(Error::InvalidArgument("norm exponents must be >= 1".into()));
            }
            scn.analyses = Analyses {
                decay: Some(DecaySpec { p, weighted }),
                ..Analyses::default()
            };
            let report = run_scenario(
                &scn,
                &output_root(dir.as_deref()).join(&scn.name),
                Some(&scenario),
            )?;
            print_checks(out, &report)?;
            Ok(report.pass())
        }
        Command::EntropyPair {
            m,
            phi,
            r_max,
            n,
            out: file,
        } => {
            let model = parse_phi_spec(&phi, Some(r_max), Path::new("."))?;
            let pair = power_entropy_pair(m, &model)?;
            let mut table = format!("# m = {m:e}, phi = {phi}\n# r\teta\tq\n");
            for i in 1..=n.max(1) {
                let r = r_max * i as f64 / n.max(1) as f64;
                let _ = writeln!(table, "{r:e}\t{:e}\t{:e}", pair.eta(r), pair.q(r)?);
            }
            out.write_all(table.as_bytes())?;
            if let Some(path) = file {
                write_file(&path, &table)?;
            }
            Ok(true)
        }
        Command::RegionCheck {
            phi,
            r_max,
            a,
            b,
            c0,
            c1,
            c2,
            samples,
            skip,
        } => {
            let model = parse_phi_spec(&phi, Some(r_max), Path::new("."))?;
            let d = Damping::new(a, b)?;
            let sigma = RegionSigma::new(c0, c1, c2)?;
            let rep = boundary_flow_check(&sigma, &model, &d, samples)?;
            let skipped: Vec<BoundaryPiece> = skip.into_iter().map(BoundaryPiece::from).collect();
            writeln!(
                out,
                "# piece\tdirection\tmin_dot\tmax_dot\tmatches_closed_form\tenabled"
            )?;
            let mut all = true;
            for p in &rep.pieces {
                let enabled = !skipped.contains(&p.piece);
                let direction = if p.pass { "inward" } else { "OUTWARD" };
                writeln!(
                    out,
                    "{}\t{direction}\t{:e}\t{:e}\t{}\t{enabled}",
                    p.piece, p.min_dot, p.max_dot, p.closed_form_agrees
                )?;
                if enabled {
                    all &= p.pass && p.closed_form_agrees;
                }
            }
            Ok(all)
        }
        Command::Convergence {
            scenario,
            eps,
            diffusion_number,
            reference,
            out: dir,
        } => {
            let scn = Scenario::from_file(&scenario).map_err(|e| with_context(e, &scenario))?;
            let init = scn.initial_field()?;
            let exact = exact_transport(&scn)?;
            let reference = match (&exact, reference) {
                (_, ReferenceKind::Hyperbolic) => ViscosityReference::Hyperbolic,
                (Some(f), ReferenceKind::Exact) => ViscosityReference::Exact(f.as_ref()),
                (None, ReferenceKind::Exact) => {
                    return Err(Error::InvalidArgument(
                        "the exact reference needs a constant phi, a periodic grid and a closed-form profile".into(),
                    ))
                }
            };
            let rows = vanishing_viscosity_sweep(
                &init,
                &scn.phi,
                &scn.damping,
                &scn.solver,
                &eps,
                diffusion_number,
                reference,
            )?;
            let mut table = String::from("# epsilon\tl1_distance\n");
            for r in &rows {
                let _ = writeln!(table, "{:e}\t{:e}", r.epsilon, r.distance);
            }
            out.write_all(table.as_bytes())?;
            let dir = output_root(dir.as_deref()).join(&scn.name);
            fs::create_dir_all(&dir)?;
            write_file(&dir.join(format!("{}_convergence.tsv", scn.name)), &table)?;
            Ok(true)
        }
        Command::Eigen { phi, r_max, state } => {
            if state.len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "--state takes `u,v`, got {} values",
                    state.len()
                )));
            }
            let model = parse_phi_spec(&phi, Some(r_max), Path::new("."))?;
            let s = State::new(state[0], state[1]);
            let es = eigenstructure(s, &model)?;
            writeln!(out, "state\t{:e}\t{:e}", s.u, s.v)?;
            writeln!(out, "lambda1\t{:e}", es.lambda.0)?;
            writeln!(out, "lambda2\t{:e}", es.lambda.1)?;
            writeln!(out, "r1\t{:e}\t{:e}", es.vectors.r1[0], es.vectors.r1[1])?;
            writeln!(out, "r2\t{:e}\t{:e}", es.vectors.r2[0], es.vectors.r2[1])?;
            for field in [1u8, 2] {
                let text = match classify_field(s, &model, field) {
                    Ok(c) => format!(
                        "{}\t{:e}",
                        match c.kind {
                            FieldKind::LinearlyDegenerate => "linearly_degenerate",
                            FieldKind::GenuinelyNonlinear => "genuinely_nonlinear",
                            FieldKind::Mixed => "mixed",
                        },
                        c.gn_value
                    ),
                    Err(Error::AxisState { .. }) => "undefined_on_axis".to_string(),
                    Err(e) => return Err(e),
                };
                writeln!(out, "field{field}\t{text}")?;
            }
            Ok(true)
        }
    }
}

type ExactFn = Box<dyn Fn(f64, f64) -> (f64, f64) + Sync>;

/// Closed-form solution for a constant φ = c on a periodic grid:
/// each component is transported at speed c and damped at its own rate.
pub fn exact_transport(scn: &Scenario) -> Result<Option<ExactFn>> {
    let crate::model::PhiFamily::Constant { c } = *scn.phi.family() else {
        return Ok(None);
    };
    if scn.grid.boundary != Boundary::Periodic || scn.initial.eval(0.0).is_none() {
        return Ok(None);
    }
    let (x_lo, x_hi) = (scn.grid.x_lo, scn.grid.x_hi);
    let profile = scn.initial.clone();
    let d = scn.damping;
    Ok(Some(Box::new(move |x, t| {
        let xi = x_lo + (x - c * t - x_lo).rem_euclid(x_hi - x_lo);
        let (u0, v0) = profile.eval(xi).expect("closed-form profile");
        (u0 * (-d.a * t).exp(), v0 * (-d.b * t).exp())
    })))
}
