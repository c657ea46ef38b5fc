//! The region Σ = {φ(r) ≤ C0, C1 ≤ u/v ≤ C2} in Riemann-invariant
//! coordinates, containment tests, and boundary flow-direction checks.
//!
//! Sign convention: the system is written `U_t + f(U)_x = g(U)` with the
//! source `g = (−a u, −b v)`. A boundary piece is inward-flowing when `g`
//! has non-positive component along the outward normal. The orientation
//! `h = (a u, b v) = −g` is reported alongside for comparison.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{Damping, PhiModel, State};
use crate::numerics::linspace;
use crate::solver::Trajectory;

pub const DEFAULT_CONTAINMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSigma {
    /// Upper bound on W = φ(r).
    pub c0: f64,
    /// Lower bound on Z = u/v.
    pub c1: f64,
    /// Upper bound on Z.
    pub c2: f64,
}

impl RegionSigma {
    pub fn new(c0: f64, c1: f64, c2: f64) -> Result<Self> {
        if !(c1 >= 0.0 && c2 > c1 && c0.is_finite() && c2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "region needs 0 <= C1 < C2 and finite C0, got C0={c0}, C1={c1}, C2={c2}"
            )));
        }
        Ok(Self { c0, c1, c2 })
    }

    /// Distance outside Σ (0 when inside); infinite on the axis v = 0.
    pub fn violation(&self, s: State, phi: &PhiModel) -> f64 {
        if s.v == 0.0 {
            return f64::INFINITY;
        }
        let w = phi.value(s.r());
        let z = s.u / s.v;
        (w - self.c0).max(self.c1 - z).max(z - self.c2).max(0.0)
    }
}

pub fn contains(s: State, sigma: &RegionSigma, phi: &PhiModel, tol: f64) -> Result<bool> {
    if s.v == 0.0 {
        return Err(Error::AxisState { u: s.u, v: s.v });
    }
    let w = phi.value(s.r());
    let z = s.u / s.v;
    Ok(w <= sigma.c0 + tol && z >= sigma.c1 - tol && z <= sigma.c2 + tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPiece {
    /// {W = C0}
    WUpper,
    /// {Z = C1}
    ZLower,
    /// {Z = C2}
    ZUpper,
}

impl fmt::Display for BoundaryPiece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryPiece::WUpper => "W=C0",
            BoundaryPiece::ZLower => "Z=C1",
            BoundaryPiece::ZUpper => "Z=C2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PieceReport {
    pub piece: BoundaryPiece,
    pub samples: usize,
    /// Range of ∇W·g or ∇Z·g over the samples (finite-difference gradients).
    pub min_dot: f64,
    pub max_dot: f64,
    /// Source points weakly inward at every sample.
    pub pass: bool,
    /// Same test with the opposite orientation h = −g.
    pub pass_opposite_orientation: bool,
    /// The sampled sign equals the closed-form sign at every sample.
    pub closed_form_agrees: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFlowReport {
    pub pieces: Vec<PieceReport>,
}

impl BoundaryFlowReport {
    pub fn piece(&self, p: BoundaryPiece) -> Option<&PieceReport> {
        self.pieces.iter().find(|r| r.piece == p)
    }
}

fn sign_with_tol(x: f64, scale: f64) -> i8 {
    if x.abs() <= 1e-8 * scale {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

fn fd_gradient<F: Fn(f64, f64) -> f64>(f: F, s: State) -> [f64; 2] {
    let hu = 1e-6 * s.u.abs().max(1e-3);
    let hv = 1e-6 * s.v.abs().max(1e-3);
    [
        (f(s.u + hu, s.v) - f(s.u - hu, s.v)) / (2.0 * hu),
        (f(s.u, s.v + hv) - f(s.u, s.v - hv)) / (2.0 * hv),
    ]
}

/// Samples each boundary piece of Σ and checks the direction of the damping
/// source against the outward normal.
///
/// Closed forms used for the sign comparison:
/// `∇W·g = −φ'(r)(a u² + b v²)/r` and `∇Z·g = −(a − b) u/v`.
pub fn boundary_flow_check(
    sigma: &RegionSigma,
    phi: &PhiModel,
    d: &Damping,
    n_samples: usize,
) -> Result<BoundaryFlowReport> {
    d.require_strict()?;
    let n = n_samples.max(2);
    let r_star = phi.inverse(sigma.c0)?;
    if r_star <= 0.0 {
        return Err(Error::Config(format!(
            "C0 = {} leaves no room above phi(0)",
            sigma.c0
        )));
    }
    if let Some(r) = linspace(r_star / n as f64, r_star, n)
        .into_iter()
        .find(|&r| !(phi.derivative(r) > 0.0))
    {
        return Err(Error::Config(format!(
            "phi' must be positive on the sampled range; fails at r = {r}"
        )));
    }
    let source = |s: State| [-d.a * s.u, -d.b * s.v];
    let w_fn = |u: f64, v: f64| phi.value((u * u + v * v).sqrt());
    let z_fn = |u: f64, v: f64| u / v;

    let on_ray = |z: f64, r: f64| {
        let v = r / (1.0 + z * z).sqrt();
        State::new(z * v, v)
    };
    let mut pieces = Vec::new();
    for piece in [
        BoundaryPiece::WUpper,
        BoundaryPiece::ZLower,
        BoundaryPiece::ZUpper,
    ] {
        let states: Vec<State> = match piece {
            BoundaryPiece::WUpper => linspace(sigma.c1, sigma.c2, n)
                .into_iter()
                .map(|z| on_ray(z, r_star))
                .collect(),
            BoundaryPiece::ZLower => linspace(r_star / n as f64, r_star, n)
                .into_iter()
                .map(|r| on_ray(sigma.c1, r))
                .collect(),
            BoundaryPiece::ZUpper => linspace(r_star / n as f64, r_star, n)
                .into_iter()
                .map(|r| on_ray(sigma.c2, r))
                .collect(),
        };
        // outward normal is +∇ for the upper bounds and −∇ for the lower one
        let outward = if piece == BoundaryPiece::ZLower {
            -1.0
        } else {
            1.0
        };
        let mut min_dot = f64::INFINITY;
        let mut max_dot = f64::NEG_INFINITY;
        let mut pass = true;
        let mut pass_opposite = true;
        let mut agrees = true;
        for s in &states {
            let g = source(*s);
            let r = s.r();
            let (grad, closed, scale) = match piece {
                BoundaryPiece::WUpper => {
                    let closed = -phi.derivative(r) * (d.a * s.u * s.u + d.b * s.v * s.v) / r;
                    (
                        fd_gradient(w_fn, *s),
                        closed,
                        phi.derivative(r) * d.max_rate() * r,
                    )
                }
                _ => {
                    let closed = -(d.a - d.b) * s.u / s.v;
                    (
                        fd_gradient(z_fn, *s),
                        closed,
                        d.max_rate() * (1.0 + (s.u / s.v).abs()),
                    )
                }
            };
            let dot = grad[0] * g[0] + grad[1] * g[1];
            min_dot = min_dot.min(dot);
            max_dot = max_dot.max(dot);
            let sign = sign_with_tol(dot, scale);
            agrees &= sign == sign_with_tol(closed, scale);
            pass &= outward * f64::from(sign) <= 0.0;
            pass_opposite &= -outward * f64::from(sign) <= 0.0;
        }
        pieces.push(PieceReport {
            piece,
            samples: states.len(),
            min_dot,
            max_dot,
            pass,
            pass_opposite_orientation: pass_opposite,
            closed_form_agrees: agrees,
        });
    }
    Ok(BoundaryFlowReport { pieces })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainmentReport {
    /// Largest distance outside Σ over all frames and cells.
    pub max_violation: f64,
    /// Time of the first frame with a violation above the tolerance.
    pub first_violation_time: Option<f64>,
    pub violating_cells: usize,
    pub tol: f64,
}

impl ContainmentReport {
    pub fn contained(&self) -> bool {
        self.first_violation_time.is_none()
    }
}

pub fn trajectory_containment(
    traj: &Trajectory,
    sigma: &RegionSigma,
    phi: &PhiModel,
    tol: f64,
) -> Result<ContainmentReport> {
    if traj.is_empty() {
        return Err(Error::InsufficientData("empty trajectory".into()));
    }
    let mut max_violation: f64 = 0.0;
    let mut first = None;
    let mut count = 0;
    for frame in &traj.frames {
        for i in 0..frame.len() {
            let viol = sigma.violation(frame.state(i), phi);
            max_violation = max_violation.max(viol);
            if viol > tol {
                count += 1;
                first.get_or_insert(frame.t);
            }
        }
    }
    Ok(ContainmentReport {
        max_violation,
        first_violation_time: first,
        violating_cells: count,
        tol,
    })
}
