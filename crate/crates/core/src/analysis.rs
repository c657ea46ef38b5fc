//! Norms, exact oracles, decay-rate fits, entropy-inequality residuals and
//! Riemann-invariant diagnostics over solver trajectories.

use std::cell::Cell;

use crate::entropy::EntropyPair;
use crate::error::{Error, Result};
use crate::model::{Damping, PhiModel};
use crate::numerics::{brent, bump, bump_derivative, bump_integral, fit_line, integrate, linspace};
use crate::solver::{Boundary, StateField, Trajectory};

/// Relative tolerance of the decay and Riemann-invariant checks.
pub const DIAGNOSTIC_TOL: f64 = 5e-2;

/// Weight k(x) = exp(−h(x)) with h(x) = √(1 + (x − center)²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFunction {
    pub center: f64,
}

impl Default for WeightFunction {
    fn default() -> Self {
        Self { center: 0.0 }
    }
}

impl WeightFunction {
    pub fn h(&self, x: f64) -> f64 {
        (1.0 + (x - self.center).powi(2)).sqrt()
    }

    pub fn h_prime(&self, x: f64) -> f64 {
        (x - self.center) / self.h(x)
    }

    pub fn h_second(&self, x: f64) -> f64 {
        self.h(x).powi(-3)
    }

    pub fn k(&self, x: f64) -> f64 {
        (-self.h(x)).exp()
    }

    pub fn k_prime(&self, x: f64) -> f64 {
        -self.h_prime(x) * self.k(x)
    }
}

/// (Σ r^p k Δx)^{1/p}, or max r for `p = ∞`.
pub fn lp_norm(f: &StateField, p: f64, w: Option<&WeightFunction>) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "norm exponent must be at least 1, got {p}"
        )));
    }
    let r = f.r();
    if p.is_infinite() {
        return Ok(r.into_iter().fold(0.0, f64::max));
    }
    let dx = f.grid.dx();
    let sum: f64 = r
        .iter()
        .enumerate()
        .map(|(i, ri)| ri.powf(p) * w.map_or(1.0, |w| w.k(f.grid.x(i))))
        .sum();
    Ok((sum * dx).powf(1.0 / p))
}

/// u0(x − a t)·exp(−b t): transport at speed `a` with decay rate `b`.
pub fn exact_scalar_solution<F: Fn(f64) -> f64>(u0: F, a: f64, b: f64, x: f64, t: f64) -> f64 {
    u0(x - a * t) * (-b * t).exp()
}

const ORACLE_MONOTONE_SAMPLES: usize = 64;

/// r(x, t) for equal damping `a` from smooth data `r0`, by characteristics.
///
/// The characteristic from ξ carries r0(ξ)e^{−as} and moves with speed
/// λ₂ = φ + rφ′ evaluated along that amplitude. Fails with `ShockFormed`
/// when the foot-point map ξ ↦ X(ξ, t) stops being increasing near the root.
pub fn radial_characteristics_oracle<F: Fn(f64) -> f64>(
    r0: F,
    phi: &PhiModel,
    a: f64,
    x: f64,
    t: f64,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(r0(x));
    }
    let decay = |r: f64, s: f64| r * (-a * s).exp();
    let foot = |xi: f64| -> Result<f64> {
        let amp = r0(xi);
        phi.check_range(amp)?;
        let shift = integrate(|s| phi.radial_speed(decay(amp, s)), 0.0, t, 1e-13)?;
        Ok(xi + shift - x)
    };
    // bracket the root by expanding from the backward-traced guess
    let guess = x - foot(x)?;
    let mut step = (foot(guess)?.abs()).max(1e-3);
    let (mut lo, mut hi) = (guess - step, guess + step);
    let mut expansions = 0;
    while foot(lo)? > 0.0 || foot(hi)? < 0.0 {
        step *= 2.0;
        lo = guess - step;
        hi = guess + step;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::RootBracketFailure(format!(
                "no foot point found for x = {x}, t = {t}"
            )));
        }
    }
    let samples = linspace(lo, hi, ORACLE_MONOTONE_SAMPLES);
    let mut prev = foot(samples[0])?;
    for &xi in &samples[1..] {
        let g = foot(xi)?;
        if g <= prev {
            return Err(Error::ShockFormed { t, xi });
        }
        prev = g;
    }
    let failed = Cell::new(false);
    let xi = brent(
        |xi| {
            foot(xi).unwrap_or_else(|_| {
                failed.set(true);
                f64::NAN
            })
        },
        lo,
        hi,
        1e-14,
    )?;
    if failed.get() {
        return Err(Error::RootBracketFailure(format!(
            "foot-point map failed near x = {x}, t = {t}"
        )));
    }
    Ok(decay(r0(xi), t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub p: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// norms(t₀)·(1 + tol)·exp(−theorem_rate (t − t₀))
    pub bounds: Vec<f64>,
    /// Least-squares slope of −log norm over the fit window.
    pub fitted_rate: f64,
    pub theorem_rate: f64,
    /// Fitted prefactor exp(intercept).
    pub k_est: f64,
    pub tol: f64,
    /// Slack on the admissible rate interval [min(a,b) − δ, max(a,b) + δ].
    pub delta: f64,
    pub bound_holds: bool,
    pub rate_in_range: bool,
    pub pass: bool,
}

/// Fits the exponential decay of ‖r‖_{L^p} along `traj` and checks it
/// against the Gronwall rate.
///
/// The rate is min(a, b) for unweighted periodic runs. Otherwise it is the
/// weighted-chain rate min(a, b) − 2M with M = sup φ over the initial range.
/// `fit_window` defaults to [0.1 T, T].
pub fn decay_harness(
    traj: &Trajectory,
    p: f64,
    w: Option<&WeightFunction>,
    d: &Damping,
    phi: &PhiModel,
    fit_window: Option<(f64, f64)>,
) -> Result<DecayReport> {
    if traj.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "decay fit needs at least 5 output times, got {}",
            traj.len()
        )));
    }
    let times = traj.times();
    let norms = traj
        .frames
        .iter()
        .map(|f| lp_norm(f, p, w))
        .collect::<Result<Vec<_>>>()?;
    let first = traj.first().expect("nonempty");
    let t0 = times[0];
    let t_end = *times.last().expect("nonempty");
    let (w_lo, w_hi) = fit_window.unwrap_or((t0 + 0.1 * (t_end - t0), t_end));
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&norms)
        .filter(|(t, n)| **t >= w_lo - 1e-12 && **t <= w_hi + 1e-12 && **n > 0.0)
        .map(|(t, n)| (*t, n.ln()))
        .unzip();
    if xs.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "only {} nonzero norms inside the fit window [{w_lo}, {w_hi}]",
            xs.len()
        )));
    }
    let (slope, intercept) = fit_line(&xs, &ys)
        .ok_or_else(|| Error::InsufficientData("degenerate fit window".into()))?;
    let unweighted_periodic = w.is_none() && first.grid.boundary == Boundary::Periodic;
    let theorem_rate = if unweighted_periodic {
        d.min_rate()
    } else {
        let r_sup = first.r().into_iter().fold(0.0, f64::max);
        d.min_rate() - 2.0 * phi.sup_on(r_sup, 1000)
    };
    let tol = DIAGNOSTIC_TOL;
    let bounds: Vec<f64> = times
        .iter()
        .map(|t| norms[0] * (1.0 + tol) * (-theorem_rate * (t - t0)).exp())
        .collect();
    let bound_holds = norms.iter().zip(&bounds).all(|(n, b)| n <= b);
    let fitted_rate = -slope;
    let delta = (0.05 * d.max_rate()).max(1e-3);
    let rate_in_range = fitted_rate >= d.min_rate() - delta && fitted_rate <= d.max_rate() + delta;
    Ok(DecayReport {
        p,
        times,
        norms,
        bounds,
        fitted_rate,
        theorem_rate,
        k_est: intercept.exp(),
        tol,
        delta,
        bound_holds,
        rate_in_range,
        pass: bound_holds && rate_in_range,
    })
}

/// θ(x, t) = j((x − x0)/wx)·j((t − t0)/wt) with the unit-mass bump j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorBump {
    pub x0: f64,
    pub wx: f64,
    pub t0: f64,
    pub wt: f64,
}

impl TensorBump {
    pub fn new(x0: f64, wx: f64, t0: f64, wt: f64) -> Self {
        Self { x0, wx, t0, wt }
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        bump((x - self.x0) / self.wx) * bump((t - self.t0) / self.wt)
    }

    pub fn dx(&self, x: f64, t: f64) -> f64 {
        bump_derivative((x - self.x0) / self.wx) / self.wx * bump((t - self.t0) / self.wt)
    }

    pub fn dt(&self, x: f64, t: f64) -> f64 {
        bump((x - self.x0) / self.wx) * bump_derivative((t - self.t0) / self.wt) / self.wt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyResidualReport {
    /// R(θ) for each test function, in input order.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub max_abs_residual: f64,
    pub dx: f64,
    /// Largest time step between stored frames.
    pub dt: f64,
}

/// R(θ) = −∬ [η θ_t + q θ_x − ∇η·(a u, b v) θ] dx dt for each θ.
///
/// The data are read as piecewise constant over cells and piecewise linear
/// in time between stored frames; θ is integrated exactly against that
/// representation. The trajectory should record every step.
pub fn entropy_residual(
    traj: &Trajectory,
    pair: &EntropyPair,
    d: &Damping,
    test_functions: &[TensorBump],
) -> Result<EntropyResidualReport> {
    if traj.len() < 2 {
        return Err(Error::InsufficientData(
            "entropy residual needs at least two frames".into(),
        ));
    }
    let first = traj.first().expect("nonempty");
    let grid = first.grid;
    let (t_lo, t_hi) = (first.t, traj.last().expect("nonempty").t);
    for th in test_functions {
        if !(th.wx > 0.0 && th.wt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "test function widths must be positive: {th:?}"
            )));
        }
        let inside_x = th.x0 - th.wx > grid.x_lo && th.x0 + th.wx < grid.x_hi;
        let inside_t = th.t0 - th.wt > t_lo && th.t0 + th.wt < t_hi;
        if !(inside_x && inside_t) {
            return Err(Error::TestFunctionSupport(format!(
                "{th:?} not inside ({}, {}) x ({t_lo}, {t_hi})",
                grid.x_lo, grid.x_hi
            )));
        }
    }
    let dx = grid.dx();
    let times = traj.times();
    let dt_max = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mut residuals = Vec::with_capacity(test_functions.len());
    for th in test_functions {
        // cell integrals of j and j′, with j(x) = bump((x − x0)/wx)
        let cells: Vec<(usize, f64, f64)> = (0..grid.n_cells)
            .filter(|&i| (grid.x(i) - th.x0).abs() < th.wx + dx)
            .map(|i| {
                let lo = (grid.x(i) - 0.5 * dx - th.x0) / th.wx;
                let hi = (grid.x(i) + 0.5 * dx - th.x0) / th.wx;
                (
                    i,
                    th.wx * (bump_integral(hi) - bump_integral(lo)),
                    bump(hi) - bump(lo),
                )
            })
            .collect();
        // per time interval: ∫τ and ∫(t − t_k)/h τ, with τ(t) = bump((t − t0)/wt)
        let tau = |t: f64| bump((t - th.t0) / th.wt);
        let mut i0 = vec![0.0; times.len() - 1];
        let mut i1 = vec![0.0; times.len() - 1];
        for k in 0..times.len() - 1 {
            let (a, b) = (times[k].max(th.t0 - th.wt), times[k + 1].min(th.t0 + th.wt));
            if a >= b {
                continue;
            }
            let h = times[k + 1] - times[k];
            i0[k] = integrate(tau, a, b, 1e-16)?;
            i1[k] = integrate(|t| (t - times[k]) / h * tau(t), a, b, 1e-16)?;
        }
        let mut total = 0.0;
        for (n, frame) in traj.frames.iter().enumerate() {
            // hat-function weights ∫φ_n τ and ∫φ_n τ′ = −∫φ_n′ τ
            let (mut w0, mut w1) = (0.0, 0.0);
            if n > 0 {
                let h = times[n] - times[n - 1];
                w0 += i1[n - 1];
                w1 -= i0[n - 1] / h;
            }
            if n + 1 < times.len() {
                let h = times[n + 1] - times[n];
                w0 += i0[n] - i1[n];
                w1 += i0[n] / h;
            }
            if w0 == 0.0 && w1 == 0.0 {
                continue;
            }
            for &(i, x0w, x1w) in &cells {
                let s = frame.state(i);
                let r = s.r();
                total += pair.eta(r) * x0w * w1 + pair.q(r)? * x1w * w0
                    - pair.damping_production(s, d) * x0w * w0;
            }
        }
        residuals.push(-total);
    }
    let max_residual = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_abs_residual = residuals.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
    Ok(EntropyResidualReport {
        residuals,
        max_residual,
        max_abs_residual,
        dx,
        dt: dt_max,
    })
}

/// Constant C of the scheme tolerance C·(Δx + Δt), calibrated as ten times
/// the largest residual magnitude of a smooth run.
pub fn calibrate_residual_constant(smooth: &EntropyResidualReport) -> f64 {
    10.0 * smooth.max_abs_residual / (smooth.dx + smooth.dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiemannInvariantReport {
    pub times: Vec<f64>,
    pub sup_abs_z: Vec<f64>,
    /// exp(−(a − b) t)·sup|Z(·, 0)|
    pub predicted_sup_abs_z: Vec<f64>,
    pub sup_w: Vec<f64>,
    /// Least-squares decay rate of sup|Z|; `None` when Z vanishes.
    pub fitted_z_rate: Option<f64>,
    pub z_ok: bool,
    pub w_ok: bool,
    pub pass: bool,
}

/// Tracks sup|Z| against its exact decay and sup W against the maximum principle.
pub fn riemann_invariant_diagnostics(
    traj: &Trajectory,
    phi: &PhiModel,
    d: &Damping,
) -> Result<RiemannInvariantReport> {
    let first = traj
        .first()
        .ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let mut times = Vec::with_capacity(traj.len());
    let mut sup_abs_z = Vec::with_capacity(traj.len());
    let mut sup_w = Vec::with_capacity(traj.len());
    for f in &traj.frames {
        let mut z_max: f64 = 0.0;
        let mut w_max = f64::NEG_INFINITY;
        for i in 0..f.len() {
            let s = f.state(i);
            if s.v == 0.0 {
                return Err(Error::AxisState { u: s.u, v: s.v });
            }
            z_max = z_max.max((s.u / s.v).abs());
            w_max = w_max.max(phi.value(s.r()));
        }
        times.push(f.t);
        sup_abs_z.push(z_max);
        sup_w.push(w_max);
    }
    let t0 = first.t;
    let predicted: Vec<f64> = times
        .iter()
        .map(|t| (-(d.a - d.b) * (t - t0)).exp() * sup_abs_z[0])
        .collect();
    let tol = DIAGNOSTIC_TOL;
    let z_ok = sup_abs_z
        .iter()
        .zip(&predicted)
        .all(|(z, p)| (z - p).abs() <= tol * p + 1e-300);
    let w_ok = sup_w.iter().all(|w| *w <= sup_w[0] + tol * sup_w[0].abs());
    let fitted_z_rate = if sup_abs_z.iter().all(|z| *z > 0.0) && times.len() >= 2 {
        let logs: Vec<f64> = sup_abs_z.iter().map(|z| z.ln()).collect();
        fit_line(&times, &logs).map(|(s, _)| -s)
    } else {
        None
    };
    Ok(RiemannInvariantReport {
        times,
        sup_abs_z,
        predicted_sup_abs_z: predicted,
        sup_w,
        fitted_z_rate,
        z_ok,
        w_ok,
        pass: z_ok && w_ok,
    })
}

/// (E(T) − E(0) + 2∫∫(a u² + b v²)) / T with E = ∫ r².
///
/// Vanishes for exact periodic solutions; on a trajectory recorded every
/// step it measures the scheme's dissipation rate.
pub fn energy_law_residual(traj: &Trajectory, d: &Damping) -> Result<f64> {
    if traj.len() < 2 {
        return Err(Error::InsufficientData(
            "energy law needs at least two frames".into(),
        ));
    }
    let energy = |f: &StateField| {
        f.u.iter()
            .zip(&f.v)
            .map(|(u, v)| u * u + v * v)
            .sum::<f64>()
            * f.grid.dx()
    };
    let loss = |f: &StateField| {
        f.u.iter()
            .zip(&f.v)
            .map(|(u, v)| d.a * u * u + d.b * v * v)
            .sum::<f64>()
            * f.grid.dx()
    };
    let mut integral = 0.0;
    for w in traj.frames.windows(2) {
        integral += 0.5 * (w[1].t - w[0].t) * (loss(&w[0]) + loss(&w[1]));
    }
    let first = traj.first().expect("nonempty");
    let last = traj.last().expect("nonempty");
    let span = last.t - first.t;
    if span <= 0.0 {
        return Err(Error::InsufficientData("trajectory spans no time".into()));
    }
    Ok((energy(last) - energy(first) + 2.0 * integral) / span)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedChainReport {
    /// max over steps of d/dt ∫η k − (∫q k′ − [q k] − ∫∇η·(au, bv) k), step-averaged.
    pub max_excess: f64,
    /// max over frames of |∫ q k′| / (2 m M ∫ r^m k).
    pub max_flux_ratio: f64,
}

/// Discrete check of the weighted entropy chain: for each stored step,
/// the change of ∫η k against its right-hand side, plus the flux bound
/// |∫q k′| ≤ 2mM ∫ r^m k.
pub fn weighted_chain_check(
    traj: &Trajectory,
    pair: &EntropyPair,
    d: &Damping,
    w: &WeightFunction,
) -> Result<WeightedChainReport> {
    let m = pair
        .m()
        .ok_or_else(|| Error::InvalidArgument("weighted chain needs a power entropy".into()))?;
    if traj.len() < 2 {
        return Err(Error::InsufficientData(
            "weighted chain needs at least two frames".into(),
        ));
    }
    let first = traj.first().expect("nonempty");
    let r_sup = first.r().into_iter().fold(0.0, f64::max);
    let sup_phi = pair.phi().sup_on(r_sup, 1000);
    let grid = first.grid;
    let dx = grid.dx();
    let xs = grid.centers();
    // (∫η k, right-hand side, ∫ q k′, ∫ r^m k) at one frame
    let terms = |f: &StateField| -> Result<(f64, f64, f64, f64)> {
        let (mut mass, mut flux, mut source, mut power) = (0.0, 0.0, 0.0, 0.0);
        for (i, &x) in xs.iter().enumerate() {
            let s = f.state(i);
            let r = s.r();
            let k = w.k(x);
            mass += pair.eta(r) * k;
            flux += pair.q(r)? * w.k_prime(x);
            source += pair.damping_production(s, d) * k;
            power += r.powf(m) * k;
        }
        let boundary = match grid.boundary {
            Boundary::Periodic => 0.0,
            Boundary::Outflow => {
                let n = f.len();
                pair.q(f.state(n - 1).r())? * w.k(grid.x_hi)
                    - pair.q(f.state(0).r())? * w.k(grid.x_lo)
            }
        };
        Ok((
            mass * dx,
            flux * dx - boundary - source * dx,
            flux * dx,
            power * dx,
        ))
    };
    let mut prev = terms(first)?;
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_flux_ratio: f64 = 0.0;
    if prev.3 > 0.0 {
        max_flux_ratio = prev.2.abs() / (2.0 * m * sup_phi * prev.3);
    }
    for win in traj.frames.windows(2) {
        let next = terms(&win[1])?;
        let h = win[1].t - win[0].t;
        let excess = (next.0 - prev.0) / h - 0.5 * (prev.1 + next.1);
        max_excess = max_excess.max(excess);
        if next.3 > 0.0 {
            max_flux_ratio = max_flux_ratio.max(next.2.abs() / (2.0 * m * sup_phi * next.3));
        }
        prev = next;
    }
    Ok(WeightedChainReport {
        max_excess,
        max_flux_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::power_entropy_pair;
    use crate::solver::{simulate, Grid1D, SolverConfig};
    use std::f64::consts::PI;

    fn periodic(n: usize) -> Grid1D {
        Grid1D::new(0.0, 2.0 * PI, n, Boundary::Periodic).unwrap()
    }

    #[test]
    fn norm_examples() {
        let g = Grid1D::new(0.0, 1.0, 16, Boundary::Periodic).unwrap();
        let c = StateField::from_fn(g, |_| (2.0, 0.0)).unwrap();
        assert!((lp_norm(&c, 2.0, None).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(lp_norm(&c, f64::INFINITY, None).unwrap(), 2.0);
        assert!(lp_norm(&c, 0.5, None).is_err());

        let s = StateField::from_fn(periodic(1024), |x| (x.sin().abs(), 0.0)).unwrap();
        assert!((lp_norm(&s, 2.0, None).unwrap() - PI.sqrt()).abs() < 1e-3);

        // even data on a symmetric grid: full weighted integral = twice the half
        let g = Grid1D::new(-4.0, 4.0, 400, Boundary::Outflow).unwrap();
        let e = StateField::from_fn(g, |x| ((-x * x).exp() + 0.1, 0.0)).unwrap();
        let w = WeightFunction::default();
        let full = lp_norm(&e, 1.0, Some(&w)).unwrap();
        let half: f64 = (200..400).map(|i| e.u[i] * w.k(g.x(i))).sum::<f64>() * g.dx();
        assert!((full - 2.0 * half).abs() < 1e-12);
    }

    #[test]
    fn weight_derivative_bound() {
        let w = WeightFunction { center: 0.3 };
        for x in linspace(-50.0, 50.0, 10_000) {
            assert!(w.k_prime(x).abs() <= w.k(x));
            assert!(w.h_prime(x).abs() <= 1.0 && w.h_second(x).abs() <= 1.0);
            let h = 1e-5;
            let fd = (w.k(x + h) - w.k(x - h)) / (2.0 * h);
            assert!((fd - w.k_prime(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn scalar_solution_examples() {
        assert!(exact_scalar_solution(f64::sin, 1.0, 0.5, 2.0, 2.0).abs() < 1e-15);
        assert_eq!(
            exact_scalar_solution(f64::sin, 1.0, 0.5, 0.7, 0.0),
            0.7f64.sin()
        );
        assert_eq!(
            exact_scalar_solution(f64::sin, 2.0, 0.0, 1.0, 0.25),
            0.5f64.sin()
        );
    }

    #[test]
    fn characteristics_oracle() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        let r = radial_characteristics_oracle(|_| 0.4, &lin, 0.3, 1.2, 2.0).unwrap();
        assert!((r - 0.4 * (-0.6f64).exp()).abs() < 1e-14);
        let r0 = |x: f64| 0.1 + 0.05 * x.sin();
        assert_eq!(
            radial_characteristics_oracle(r0, &lin, 0.3, 1.0, 0.0).unwrap(),
            r0(1.0)
        );
        // the returned value solves the implicit characteristic relation:
        // ξ + 2 r0(ξ)(1 − e^{−at})/a = x and r = r0(ξ) e^{−at}
        let (a, t, x) = (0.3, 1.0, 2.5);
        let r = radial_characteristics_oracle(r0, &lin, a, x, t).unwrap();
        let xi = brent(
            |xi| xi + 2.0 * r0(xi) * (1.0 - (-a * t).exp()) / a - x,
            x - 2.0,
            x,
            1e-15,
        )
        .unwrap();
        assert!((r - r0(xi) * (-a * t).exp()).abs() < 1e-12);
        // steep data with weak damping: characteristics cross by t = 5
        let steep = |x: f64| 1.0 + 0.8 * x.sin();
        let e = radial_characteristics_oracle(steep, &lin, 0.01, 3.0, 5.0);
        assert!(matches!(e, Err(Error::ShockFormed { .. })), "{e:?}");
    }

    #[test]
    fn decay_fit_equal_and_zero_damping() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        let init = StateField::from_fn(periodic(256), |x| {
            let r = 0.1 + 0.05 * x.sin();
            (r * (PI / 4.0).cos(), r * (PI / 4.0).sin())
        })
        .unwrap();
        let cfg = SolverConfig {
            t_end: 1.0,
            ..Default::default()
        }
        .with_uniform_outputs(11);
        let d = Damping::new(0.3, 0.3).unwrap();
        let traj = simulate(&init, &lin, &d, &cfg).unwrap();
        let rep = decay_harness(&traj, 2.0, None, &d, &lin, None).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!((rep.fitted_rate - 0.3).abs() < 0.006);

        let traj = simulate(&init, &lin, &Damping::undamped(), &cfg).unwrap();
        let rep = decay_harness(&traj, 2.0, None, &Damping::undamped(), &lin, None).unwrap();
        assert!(rep.fitted_rate.abs() <= 1e-3, "{}", rep.fitted_rate);

        let short = SolverConfig {
            t_end: 1.0,
            ..Default::default()
        }
        .with_uniform_outputs(3);
        let traj = simulate(&init, &lin, &d, &short).unwrap();
        assert!(matches!(
            decay_harness(&traj, 2.0, None, &d, &lin, None),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn z_decays_exactly_for_proportional_data() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        let init = StateField::from_fn(periodic(128), |x| {
            let v = 0.3 + 0.1 * x.cos();
            (0.5 * v, v)
        })
        .unwrap();
        let d = Damping::new(0.6, 0.2).unwrap();
        let cfg = SolverConfig {
            t_end: 1.0,
            ..Default::default()
        }
        .with_uniform_outputs(6);
        let traj = simulate(&init, &lin, &d, &cfg).unwrap();
        let rep = riemann_invariant_diagnostics(&traj, &lin, &d).unwrap();
        for (z, p) in rep.sup_abs_z.iter().zip(&rep.predicted_sup_abs_z) {
            assert!((z - p).abs() < 1e-13, "{z} vs {p}");
        }
        assert!((rep.fitted_z_rate.unwrap() - 0.4).abs() < 1e-10);
        assert!(rep.pass);
    }

    #[test]
    fn entropy_residual_support_and_sign() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        let init = StateField::from_fn(periodic(128), |x| (0.2 + 0.05 * x.sin(), 0.2)).unwrap();
        let d = Damping::new(0.2, 0.2).unwrap();
        let cfg = SolverConfig {
            t_end: 1.0,
            record_every_step: true,
            ..Default::default()
        };
        let traj = simulate(&init, &lin, &d, &cfg).unwrap();
        let pair = power_entropy_pair(2.0, &lin).unwrap();
        let bad = [TensorBump::new(0.1, 0.3, 0.5, 0.2)];
        assert!(matches!(
            entropy_residual(&traj, &pair, &d, &bad),
            Err(Error::TestFunctionSupport(_))
        ));
        let ok = [TensorBump::new(3.0, 0.5, 0.5, 0.3)];
        let rep = entropy_residual(&traj, &pair, &d, &ok).unwrap();
        assert!(rep.max_abs_residual < 1e-3, "{rep:?}");
    }

    #[test]
    fn energy_law_smooth_run() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        let d = Damping::new(0.4, 0.1).unwrap();
        let run = |n| {
            let init = StateField::from_fn(periodic(n), |x| {
                (0.2 + 0.05 * x.sin(), 0.2 + 0.05 * x.cos())
            })
            .unwrap();
            let cfg = SolverConfig {
                t_end: 0.5,
                record_every_step: true,
                ..Default::default()
            };
            energy_law_residual(&simulate(&init, &lin, &d, &cfg).unwrap(), &d)
                .unwrap()
                .abs()
        };
        let (coarse, fine) = (run(256), run(512));
        assert!(coarse < 1e-3);
        let ratio = coarse / fine;
        assert!((ratio - 2.0).abs() < 0.6, "ratio {ratio}");
    }

    #[test]
    fn weighted_chain_holds_per_step() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        let d = Damping::new(0.3, 0.2).unwrap();
        let grid = Grid1D::new(-6.0, 6.0, 400, Boundary::Outflow).unwrap();
        let init = StateField::from_fn(grid, |x| {
            let r = 0.05 + 0.3 * (-x * x).exp();
            (r * 0.6, r * 0.8)
        })
        .unwrap();
        let cfg = SolverConfig {
            t_end: 1.0,
            record_every_step: true,
            ..Default::default()
        };
        let traj = simulate(&init, &lin, &d, &cfg).unwrap();
        let pair = power_entropy_pair(2.0, &lin).unwrap();
        let rep = weighted_chain_check(&traj, &pair, &d, &WeightFunction::default()).unwrap();
        assert!(rep.max_excess < 1e-3, "{rep:?}");
        assert!(rep.max_flux_ratio <= 1.0);
    }
}
