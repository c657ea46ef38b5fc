//! Parabolic regularization `U_t + f(U)_x = ε U_xx + g(U)` and
//! vanishing-viscosity sweeps.

use std::thread;

use crate::error::{Error, Result};
use crate::model::{Damping, PhiModel};
use crate::solver::{
    drive, max_wavespeed, simulate, split_step, SolverConfig, StateField, Trajectory,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ViscousConfig {
    pub epsilon: f64,
    pub base: SolverConfig,
    /// ε·dt/Δx² bound, in (0, 0.5].
    pub diffusion_number: f64,
}

impl ViscousConfig {
    pub fn new(epsilon: f64, base: SolverConfig) -> Self {
        Self {
            epsilon,
            base,
            diffusion_number: 0.4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation {
                field: "viscous.epsilon".into(),
                message: format!("must be nonnegative, got {}", self.epsilon),
            });
        }
        if !(self.diffusion_number > 0.0 && self.diffusion_number <= 0.5) {
            return Err(Error::Validation {
                field: "viscous.diffusion_number".into(),
                message: format!("must lie in (0, 0.5], got {}", self.diffusion_number),
            });
        }
        Ok(())
    }

    /// Largest dt allowed by the two stability constraints.
    pub fn step_limit(&self, f: &StateField, phi: &PhiModel) -> Result<f64> {
        let dx = f.grid.dx();
        let speed = max_wavespeed(f, phi)?;
        let mut limit = self.base.cfl * dx / speed;
        if self.epsilon > 0.0 {
            limit = limit.min(self.diffusion_number * dx * dx / self.epsilon);
        }
        Ok(limit)
    }

    /// Step used by [`simulate_viscous`]: within [`Self::step_limit`] and small
    /// enough that the combined transport-diffusion update is a convex
    /// combination of neighbouring values.
    fn working_step(&self, f: &StateField, phi: &PhiModel) -> Result<f64> {
        let dx = f.grid.dx();
        let speed = max_wavespeed(f, phi)?;
        let combined = 1.0 / (speed / dx + 2.0 * self.epsilon / (dx * dx));
        Ok(self.step_limit(f, phi)?.min(combined))
    }
}

/// One Strang-split step: half damping, flux plus ε·second difference, half damping.
pub fn viscous_step(
    f: &StateField,
    phi: &PhiModel,
    d: &Damping,
    cfg: &ViscousConfig,
    dt: f64,
) -> Result<StateField> {
    cfg.validate()?;
    let limit = cfg.step_limit(f, phi)?;
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StabilityViolation { dt, limit });
    }
    split_step(
        f,
        phi,
        d,
        cfg.base.scheme,
        cfg.base.splitting,
        dt,
        cfg.epsilon,
    )
}

pub fn simulate_viscous(
    init: &StateField,
    phi: &PhiModel,
    d: &Damping,
    cfg: &ViscousConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    drive(
        init,
        &cfg.base,
        |f| cfg.working_step(f, phi),
        |f, dt| {
            split_step(
                f,
                phi,
                d,
                cfg.base.scheme,
                cfg.base.splitting,
                dt,
                cfg.epsilon,
            )
        },
    )
}

/// What the viscous solutions are compared against.
#[derive(Clone, Copy)]
pub enum ViscosityReference<'a> {
    /// The hyperbolic solver on the same grid.
    Hyperbolic,
    /// A closed-form solution `(x, t) -> (u, v)`.
    Exact(&'a (dyn Fn(f64, f64) -> (f64, f64) + Sync)),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub distance: f64,
}

/// Σ √(Δu² + Δv²) Δx between two fields on the same grid.
pub fn l1_distance(a: &StateField, b: &StateField) -> f64 {
    let dx = a.grid.dx();
    a.u.iter()
        .zip(&a.v)
        .zip(b.u.iter().zip(&b.v))
        .map(|((ua, va), (ub, vb))| (ua - ub).hypot(va - vb))
        .sum::<f64>()
        * dx
}

/// Runs the viscous solver for each ε (concurrently) and reports the L¹
/// distance to the reference at `base_cfg.t_end`.
pub fn vanishing_viscosity_sweep(
    init: &StateField,
    phi: &PhiModel,
    d: &Damping,
    base_cfg: &SolverConfig,
    eps_list: &[f64],
    diffusion_number: f64,
    reference: ViscosityReference<'_>,
) -> Result<Vec<SweepRow>> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("empty viscosity list".into()));
    }
    if eps_list.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidArgument(
            "viscosity list must be strictly decreasing".into(),
        ));
    }
    let base = SolverConfig {
        output_times: Vec::new(),
        record_every_step: false,
        ..base_cfg.clone()
    };
    let target = match reference {
        ViscosityReference::Hyperbolic => simulate(init, phi, d, &base)?
            .last()
            .cloned()
            .expect("final frame"),
        ViscosityReference::Exact(exact) => {
            StateField::from_fn(init.grid, |x| exact(x, base.t_end)).map(|mut f| {
                f.t = base.t_end;
                f
            })?
        }
    };
    let results: Vec<Result<SweepRow>> = thread::scope(|scope| {
        let handles: Vec<_> = eps_list
            .iter()
            .map(|&epsilon| {
                let cfg = ViscousConfig {
                    epsilon,
                    base: base.clone(),
                    diffusion_number,
                };
                let target = &target;
                scope.spawn(move || {
                    let traj = simulate_viscous(init, phi, d, &cfg)?;
                    let last = traj.last().expect("final frame");
                    Ok(SweepRow {
                        epsilon,
                        distance: l1_distance(last, target),
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{Boundary, Grid1D};
    use std::f64::consts::PI;

    fn moments(f: &StateField) -> (f64, f64) {
        let xs = f.grid.centers();
        let mass: f64 = f.u.iter().sum();
        let mean = xs.iter().zip(&f.u).map(|(x, u)| x * u).sum::<f64>() / mass;
        let var = xs
            .iter()
            .zip(&f.u)
            .map(|(x, u)| (x - mean).powi(2) * u)
            .sum::<f64>()
            / mass;
        (mean, var)
    }

    #[test]
    fn heat_kernel_variance_growth() {
        let phi = PhiModel::constant(0.0, 10.0).unwrap();
        let grid = Grid1D::new(-2.0, 2.0, 1024, Boundary::Periodic).unwrap();
        let s0: f64 = 0.1;
        let init = StateField::from_fn(grid, |x| ((-x * x / (2.0 * s0 * s0)).exp(), 0.0)).unwrap();
        let eps = 0.01;
        let cfg = ViscousConfig::new(
            eps,
            SolverConfig {
                t_end: 1.0,
                ..Default::default()
            },
        );
        let traj = simulate_viscous(&init, &phi, &Damping::undamped(), &cfg).unwrap();
        let (_, v0) = moments(&init);
        let (_, v1) = moments(traj.last().unwrap());
        let growth = v1 - v0;
        assert!(
            (growth / (2.0 * eps) - 1.0).abs() < 0.02,
            "variance growth {growth}"
        );
    }

    #[test]
    fn zero_viscosity_matches_hyperbolic_path() {
        let phi = PhiModel::power(1.0, 10.0).unwrap();
        let grid = Grid1D::new(0.0, 2.0 * PI, 64, Boundary::Periodic).unwrap();
        let init = StateField::from_fn(grid, |x| (0.5 + 0.2 * x.sin(), 0.4)).unwrap();
        let d = Damping::new(0.3, 0.1).unwrap();
        let base = SolverConfig {
            t_end: 0.5,
            ..Default::default()
        };
        let a = simulate(&init, &phi, &d, &base).unwrap();
        let b = simulate_viscous(&init, &phi, &d, &ViscousConfig::new(0.0, base)).unwrap();
        assert_eq!(a.last().unwrap(), b.last().unwrap());
    }

    #[test]
    fn constants_stay_constant() {
        let phi = PhiModel::power(1.0, 10.0).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 32, Boundary::Periodic).unwrap();
        let init = StateField::from_fn(grid, |_| (0.3, 0.7)).unwrap();
        let cfg = ViscousConfig::new(
            0.05,
            SolverConfig {
                t_end: 0.2,
                ..Default::default()
            },
        );
        let traj = simulate_viscous(&init, &phi, &Damping::undamped(), &cfg).unwrap();
        let last = traj.last().unwrap();
        assert!(last.u.iter().all(|&u| (u - 0.3).abs() < 1e-14));
        assert!(last.v.iter().all(|&v| (v - 0.7).abs() < 1e-14));
    }

    #[test]
    fn step_limits_enforced() {
        let phi = PhiModel::power(1.0, 10.0).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 100, Boundary::Periodic).unwrap();
        let init = StateField::from_fn(grid, |_| (0.3, 0.4)).unwrap();
        let cfg = ViscousConfig::new(0.1, SolverConfig::default());
        let limit = cfg.step_limit(&init, &phi).unwrap();
        assert!((limit - 0.4 * 1e-4 / 0.1).abs() < 1e-15);
        let d = Damping::undamped();
        assert!(viscous_step(&init, &phi, &d, &cfg, limit).is_ok());
        assert!(matches!(
            viscous_step(&init, &phi, &d, &cfg, 2.0 * limit),
            Err(Error::StabilityViolation { .. })
        ));
        let bad = ViscousConfig {
            diffusion_number: 0.6,
            ..cfg
        };
        assert!(matches!(bad.validate(), Err(Error::Validation { .. })));
    }

    #[test]
    fn sweep_edge_cases() {
        let phi = PhiModel::power(1.0, 10.0).unwrap();
        let grid = Grid1D::new(0.0, 2.0 * PI, 128, Boundary::Periodic).unwrap();
        let init = StateField::from_fn(grid, |x| (0.2 + 0.05 * x.sin(), 0.2)).unwrap();
        let d = Damping::new(0.2, 0.2).unwrap();
        let base = SolverConfig {
            t_end: 0.5,
            ..Default::default()
        };
        let rows = vanishing_viscosity_sweep(
            &init,
            &phi,
            &d,
            &base,
            &[0.0],
            0.4,
            ViscosityReference::Hyperbolic,
        )
        .unwrap();
        assert_eq!(rows[0].distance, 0.0);
        let rows = vanishing_viscosity_sweep(
            &init,
            &phi,
            &d,
            &base,
            &[0.1, 0.05, 0.025],
            0.4,
            ViscosityReference::Hyperbolic,
        )
        .unwrap();
        assert!(
            rows.windows(2).all(|w| w[1].distance < w[0].distance),
            "{rows:?}"
        );
        assert!(vanishing_viscosity_sweep(
            &init,
            &phi,
            &d,
            &base,
            &[0.1, 0.2],
            0.4,
            ViscosityReference::Hyperbolic
        )
        .is_err());
    }
}
