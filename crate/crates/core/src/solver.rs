//! First-order finite-volume solver for the damped system
//!
//! ```text
//! u_t + (u φ(r))_x + a u = 0,   v_t + (v φ(r))_x + b v = 0
//! ```
//!
//! The flux part uses a Rusanov or Lax-Friedrichs flux, the damping is
//! integrated exactly, and the two are combined by Lie or Strang splitting.

use std::io::Write;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::model::{Damping, PhiModel, State};

/// Smallest wavespeed returned by [`max_wavespeed`].
pub const WAVESPEED_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    /// Zeroth-order extrapolation into the ghost cells.
    Outflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_cells: usize,
    pub boundary: Boundary,
}

impl Grid1D {
    pub fn new(x_lo: f64, x_hi: f64, n_cells: usize, boundary: Boundary) -> Result<Self> {
        if n_cells < 8 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 8 cells, got {n_cells}"
            )));
        }
        if !(x_hi > x_lo && x_lo.is_finite() && x_hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid grid interval [{x_lo}, {x_hi}]"
            )));
        }
        Ok(Self {
            x_lo,
            x_hi,
            n_cells,
            boundary,
        })
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.n_cells as f64
    }

    /// Center of cell `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.x(i)).collect()
    }

    pub fn with_cells(&self, n_cells: usize) -> Result<Self> {
        Self::new(self.x_lo, self.x_hi, n_cells, self.boundary)
    }
}

/// Cell averages of (u, v) at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub grid: Grid1D,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl StateField {
    pub fn new(grid: Grid1D, u: Vec<f64>, v: Vec<f64>, t: f64) -> Result<Self> {
        if u.len() != grid.n_cells || v.len() != grid.n_cells {
            return Err(Error::InvalidArgument(format!(
                "field length ({}, {}) does not match {} cells",
                u.len(),
                v.len(),
                grid.n_cells
            )));
        }
        if let Some(cell) = u
            .iter()
            .zip(&v)
            .position(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(Error::NonFinite { cell, t });
        }
        Ok(Self { grid, u, v, t })
    }

    /// Samples `init` at the cell centers.
    pub fn from_fn<F: Fn(f64) -> (f64, f64)>(grid: Grid1D, init: F) -> Result<Self> {
        let (u, v) = grid.centers().into_iter().map(init).unzip();
        Self::new(grid, u, v, 0.0)
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            grid,
            u: vec![0.0; grid.n_cells],
            v: vec![0.0; grid.n_cells],
            t: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn state(&self, i: usize) -> State {
        State::new(self.u[i], self.v[i])
    }

    pub fn r(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.state(i).r()).collect()
    }

    pub fn max_abs_u(&self) -> f64 {
        self.u.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_v(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// (Σ u Δx, Σ v Δx)
    pub fn mass(&self) -> (f64, f64) {
        let dx = self.grid.dx();
        (
            self.u.iter().sum::<f64>() * dx,
            self.v.iter().sum::<f64>() * dx,
        )
    }

    fn check_finite(&self) -> Result<()> {
        match self
            .u
            .iter()
            .zip(&self.v)
            .position(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            Some(cell) => Err(Error::NonFinite { cell, t: self.t }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    LaxFriedrichs,
    Rusanov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitting {
    /// D(dt) then H(dt)
    Lie,
    /// D(dt/2) H(dt) D(dt/2)
    Strang,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub cfl: f64,
    pub splitting: Splitting,
    pub t_end: f64,
    pub output_times: Vec<f64>,
    /// Keep every time step in the trajectory, not only the output times.
    pub record_every_step: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rusanov,
            cfl: 0.45,
            splitting: Splitting::Strang,
            t_end: 1.0,
            output_times: Vec::new(),
            record_every_step: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Validation {
                field: "solver.cfl".into(),
                message: format!("must lie in (0, 1], got {}", self.cfl),
            });
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Validation {
                field: "solver.t_end".into(),
                message: format!("must be nonnegative, got {}", self.t_end),
            });
        }
        if self
            .output_times
            .iter()
            .any(|t| !(t.is_finite() && *t >= 0.0 && *t <= self.t_end))
        {
            return Err(Error::Validation {
                field: "solver.output_times".into(),
                message: "times must lie in [0, t_end]".into(),
            });
        }
        Ok(())
    }

    /// `n` equally spaced output times on `[0, t_end]`, endpoints included.
    pub fn with_uniform_outputs(mut self, n: usize) -> Self {
        self.output_times = crate::numerics::linspace(0.0, self.t_end, n.max(2));
        self
    }
}

/// Stored snapshots of a run, in time order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub frames: Vec<StateField>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn first(&self) -> Option<&StateField> {
        self.frames.first()
    }

    pub fn last(&self) -> Option<&StateField> {
        self.frames.last()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn cell_speed(phi: &PhiModel, u: f64, v: f64) -> f64 {
    let r = (u * u + v * v).sqrt();
    let l1 = phi.value(r);
    l1.abs().max(phi.radial_speed(r).abs())
}

/// max over cells of max(|λ₁|, |λ₂|), floored at [`WAVESPEED_FLOOR`].
pub fn max_wavespeed(f: &StateField, phi: &PhiModel) -> Result<f64> {
    let mut s = WAVESPEED_FLOOR;
    for i in 0..f.len() {
        let r = f.state(i).r();
        phi.check_range(r)?;
        s = s.max(cell_speed(phi, f.u[i], f.v[i]));
    }
    Ok(s)
}

/// Copies the interior into a buffer with one ghost cell on each side.
fn with_ghosts(values: &[f64], boundary: Boundary) -> Vec<f64> {
    let n = values.len();
    let mut out = Vec::with_capacity(n + 2);
    match boundary {
        Boundary::Periodic => {
            out.push(values[n - 1]);
            out.extend_from_slice(values);
            out.push(values[0]);
        }
        Boundary::Outflow => {
            out.push(values[0]);
            out.extend_from_slice(values);
            out.push(values[n - 1]);
        }
    }
    out
}

/// Conservative flux update; returns the new (u, v) arrays.
fn flux_update(
    f: &StateField,
    phi: &PhiModel,
    scheme: Scheme,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = f.len();
    let dx = f.grid.dx();
    let speed = max_wavespeed(f, phi)?;
    let courant = dt * speed / dx;
    if courant > 1.0 + 1e-12 {
        return Err(Error::CflViolation {
            courant,
            limit: 1.0,
        });
    }
    let ug = with_ghosts(&f.u, f.grid.boundary);
    let vg = with_ghosts(&f.v, f.grid.boundary);
    let phis: Vec<f64> = ug
        .iter()
        .zip(&vg)
        .map(|(u, v)| phi.value((u * u + v * v).sqrt()))
        .collect();
    let speeds: Vec<f64> = match scheme {
        Scheme::Rusanov => ug
            .iter()
            .zip(&vg)
            .map(|(&u, &v)| cell_speed(phi, u, v))
            .collect(),
        Scheme::LaxFriedrichs => Vec::new(),
    };
    // interface j sits between ghosted cells j and j + 1
    let mut fu = vec![0.0; n + 1];
    let mut fv = vec![0.0; n + 1];
    for j in 0..=n {
        let alpha = match scheme {
            Scheme::Rusanov => speeds[j].max(speeds[j + 1]),
            Scheme::LaxFriedrichs => dx / dt,
        };
        let (ul, ur) = (ug[j], ug[j + 1]);
        let (vl, vr) = (vg[j], vg[j + 1]);
        fu[j] = 0.5 * (ul * phis[j] + ur * phis[j + 1]) - 0.5 * alpha * (ur - ul);
        fv[j] = 0.5 * (vl * phis[j] + vr * phis[j + 1]) - 0.5 * alpha * (vr - vl);
    }
    let lambda = dt / dx;
    let u = (0..n)
        .map(|i| f.u[i] - lambda * (fu[i + 1] - fu[i]))
        .collect();
    let v = (0..n)
        .map(|i| f.v[i] - lambda * (fv[i + 1] - fv[i]))
        .collect();
    Ok((u, v))
}

/// One conservative flux step of length `dt` (no damping).
pub fn hyperbolic_substep(
    f: &StateField,
    phi: &PhiModel,
    scheme: Scheme,
    dt: f64,
) -> Result<StateField> {
    let (u, v) = flux_update(f, phi, scheme, dt)?;
    let out = StateField {
        grid: f.grid,
        u,
        v,
        t: f.t + dt,
    };
    out.check_finite()?;
    Ok(out)
}

/// Exact solution of u' = −a u, v' = −b v over `dt`.
pub fn damping_substep(f: &StateField, d: &Damping, dt: f64) -> StateField {
    let mut out = f.clone();
    damp_in_place(&mut out, d, dt);
    out
}

fn damp_in_place(f: &mut StateField, d: &Damping, dt: f64) {
    let (ka, kb) = ((-d.a * dt).exp(), (-d.b * dt).exp());
    f.u.iter_mut().for_each(|x| *x *= ka);
    f.v.iter_mut().for_each(|x| *x *= kb);
}

/// Flux update plus an explicit ε·(3-point second difference) term built
/// from the same input field. With `eps == 0` this is exactly the flux update.
pub(crate) fn transport_diffuse(
    f: &StateField,
    phi: &PhiModel,
    scheme: Scheme,
    dt: f64,
    eps: f64,
) -> Result<StateField> {
    let (mut u, mut v) = flux_update(f, phi, scheme, dt)?;
    if eps > 0.0 {
        let dx = f.grid.dx();
        let mu = eps * dt / (dx * dx);
        let ug = with_ghosts(&f.u, f.grid.boundary);
        let vg = with_ghosts(&f.v, f.grid.boundary);
        for i in 0..f.len() {
            u[i] += mu * (ug[i] - 2.0 * ug[i + 1] + ug[i + 2]);
            v[i] += mu * (vg[i] - 2.0 * vg[i + 1] + vg[i + 2]);
        }
    }
    let out = StateField {
        grid: f.grid,
        u,
        v,
        t: f.t + dt,
    };
    out.check_finite()?;
    Ok(out)
}

/// One split step of the (optionally viscous) damped system.
pub(crate) fn split_step(
    f: &StateField,
    phi: &PhiModel,
    d: &Damping,
    scheme: Scheme,
    splitting: Splitting,
    dt: f64,
    eps: f64,
) -> Result<StateField> {
    let t_next = f.t + dt;
    let mut out = match splitting {
        Splitting::Strang => {
            let half = damping_substep(f, d, 0.5 * dt);
            let mut mid = transport_diffuse(&half, phi, scheme, dt, eps)?;
            damp_in_place(&mut mid, d, 0.5 * dt);
            mid
        }
        Splitting::Lie => {
            let damped = damping_substep(f, d, dt);
            transport_diffuse(&damped, phi, scheme, dt, eps)?
        }
    };
    out.t = t_next;
    Ok(out)
}

/// Time-stepping driver shared by the hyperbolic and viscous solvers.
/// `step_limit` maps the current field to the largest admissible dt.
pub(crate) fn drive<L, S>(
    init: &StateField,
    cfg: &SolverConfig,
    step_limit: L,
    mut step: S,
) -> Result<Trajectory>
where
    L: Fn(&StateField) -> Result<f64>,
    S: FnMut(&StateField, f64) -> Result<StateField>,
{
    cfg.validate()?;
    init.check_finite()?;
    let t0 = init.t;
    let mut targets: Vec<f64> = cfg
        .output_times
        .iter()
        .copied()
        .filter(|&t| t > t0)
        .collect();
    targets.push(cfg.t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    let mut traj = Trajectory::default();
    if cfg.record_every_step || cfg.output_times.iter().any(|&t| t <= t0) {
        traj.frames.push(init.clone());
    }
    let mut current = init.clone();
    let final_time = cfg.t_end.max(t0);
    let is_output = |t: f64| cfg.output_times.iter().any(|&o| o == t) || t == final_time;
    for &target in &targets {
        while current.t < target {
            let mut dt = step_limit(&current)?;
            let remaining = target - current.t;
            if dt >= remaining * (1.0 - 1e-12) {
                dt = remaining;
            }
            let mut next = step(&current, dt)?;
            if dt == remaining {
                next.t = target;
            }
            let hit = next.t == target;
            current = next;
            if cfg.record_every_step || (hit && is_output(target)) {
                traj.frames.push(current.clone());
            }
        }
    }
    if traj.frames.last().map(|f| f.t) != Some(current.t) {
        traj.frames.push(current);
    }
    Ok(traj)
}

/// Runs the split scheme from `init` to `cfg.t_end`, returning the fields at
/// the output times (and at `t_end`), or at every step when requested.
pub fn simulate(
    init: &StateField,
    phi: &PhiModel,
    d: &Damping,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    if !phi.c1().holds {
        let c1 = phi.c1();
        warn!(
            "phi violates the strict-hyperbolicity condition (|r phi'| = {:e} at r = {}); continuing",
            c1.worst_value, c1.worst_r
        );
    }
    let dx = init.grid.dx();
    drive(
        init,
        cfg,
        |f| Ok(cfg.cfl * dx / max_wavespeed(f, phi)?),
        |f, dt| split_step(f, phi, d, cfg.scheme, cfg.splitting, dt, 0.0),
    )
}

/// Convolves `init` with the unit-mass bump j_ε on the grid.
///
/// The discrete kernel weights are normalized to sum to one, so constants are
/// reproduced exactly and, on periodic grids, the total mass is preserved.
pub fn mollify_initial_data<F: Fn(f64) -> (f64, f64)>(
    init: F,
    eps: f64,
    grid: Grid1D,
) -> Result<StateField> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mollifier width must be positive, got {eps}"
        )));
    }
    let raw = StateField::from_fn(grid, init)?;
    let dx = grid.dx();
    if eps < dx {
        warn!("mollifier width {eps:e} is below the grid spacing {dx:e}; data is left unsmoothed");
        return Ok(raw);
    }
    let half = (eps / dx).floor() as isize;
    let mut weights: Vec<f64> = (-half..=half)
        .map(|k| crate::numerics::bump(k as f64 * dx / eps))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let n = grid.n_cells as isize;
    let index = |i: isize| -> usize {
        match grid.boundary {
            Boundary::Periodic => i.rem_euclid(n) as usize,
            Boundary::Outflow => i.clamp(0, n - 1) as usize,
        }
    };
    let convolve = |src: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * src[index(i + k as isize - half)])
                    .sum()
            })
            .collect()
    };
    StateField::new(grid, convolve(&raw.u), convolve(&raw.v), 0.0)
}

/// File name of a snapshot: `<run>_t<time>.tsv`.
pub fn snapshot_file_name(run: &str, t: f64) -> String {
    format!("{run}_t{t:e}.tsv")
}

/// Writes `x u v r W Z` for every cell, tab separated, with `#` headers.
pub fn write_snapshot<W: Write>(out: &mut W, f: &StateField, phi: &PhiModel) -> Result<()> {
    writeln!(out, "# t = {:e}", f.t)?;
    writeln!(out, "# x\tu\tv\tr\tW\tZ")?;
    for i in 0..f.len() {
        let s = f.state(i);
        let r = s.r();
        let z = if s.v == 0.0 { f64::NAN } else { s.u / s.v };
        writeln!(
            out,
            "{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
            f.grid.x(i),
            s.u,
            s.v,
            r,
            phi.value(r),
            z
        )?;
    }
    Ok(())
}

pub fn save_snapshot(
    dir: &Path,
    run: &str,
    f: &StateField,
    phi: &PhiModel,
) -> Result<std::path::PathBuf> {
    let path = dir.join(snapshot_file_name(run, f.t));
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    write_snapshot(&mut file, f, phi)?;
    file.flush()?;
    Ok(path)
}
