//! Radial entropy-entropy flux pairs η(r), q(r).
//!
//! For the radial system a pair satisfies ∇η·A = ∇q iff
//! `q'(r) = η'(r) (φ(r) + r φ'(r))`. Writing `q = ψ + η φ` turns this into
//! `ψ'(r) = (r η'(r) − η(r)) φ'(r)`, which is what [`flux_from_eta`] integrates.
//! For the power family η = r^m an integration by parts gives the closed
//! form used by [`power_entropy_pair`]:
//!
//! ```text
//! q(r) = m r^m φ(r) − m (m − 1) ∫₀^r s^{m−1} φ(s) ds
//! ```

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{jacobian, Damping, PhiModel, State};
use crate::numerics::integrate;

pub const DEFAULT_QUADRATURE_TOL: f64 = 1e-10;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Eta {
    Power { m: f64 },
    Custom { eta: ScalarFn, deta: ScalarFn },
}

/// An immutable (η, q) pair for a fixed φ.
#[derive(Clone)]
pub struct EntropyPair {
    eta: Eta,
    phi: PhiModel,
    quadrature_tol: f64,
    flux_scale: f64,
}

impl fmt::Debug for EntropyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.eta {
            Eta::Power { m } => format!("Power {{ m: {m} }}"),
            Eta::Custom { .. } => "Custom".to_string(),
        };
        f.debug_struct("EntropyPair")
            .field("eta", &kind)
            .field("phi", &self.phi)
            .field("quadrature_tol", &self.quadrature_tol)
            .finish()
    }
}

/// Power entropy η = r^m with its flux. Requires m ≥ 1 (convex, Lipschitz at 0).
pub fn power_entropy_pair(m: f64, phi: &PhiModel) -> Result<EntropyPair> {
    power_entropy_pair_with_tol(m, phi, DEFAULT_QUADRATURE_TOL)
}

pub fn power_entropy_pair_with_tol(
    m: f64,
    phi: &PhiModel,
    quadrature_tol: f64,
) -> Result<EntropyPair> {
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "power entropy exponent must satisfy m >= 1, got {m}"
        )));
    }
    let pair = EntropyPair {
        eta: Eta::Power { m },
        phi: phi.clone(),
        quadrature_tol,
        flux_scale: 1.0,
    };
    // surface quadrature problems at construction rather than mid-run
    pair.q(phi.r_max())?;
    Ok(pair)
}

/// Builds q from an arbitrary radial η by integrating ψ' = (r η' − η) φ'.
pub fn flux_from_eta(eta: ScalarFn, deta: ScalarFn, phi: &PhiModel) -> Result<EntropyPair> {
    flux_from_eta_with_tol(eta, deta, phi, DEFAULT_QUADRATURE_TOL)
}

pub fn flux_from_eta_with_tol(
    eta: ScalarFn,
    deta: ScalarFn,
    phi: &PhiModel,
    quadrature_tol: f64,
) -> Result<EntropyPair> {
    let probes: Vec<f64> = (2..=12).map(|k| phi.r_max() * 10f64.powi(-k)).collect();
    let vals: Vec<f64> = probes.iter().map(|&r| (r * deta(r)).abs()).collect();
    let first = vals[0];
    if let Some(&bad) = vals
        .iter()
        .find(|v| !v.is_finite() || **v > 10.0 * first.max(1.0))
    {
        return Err(Error::NonLipschitz(bad));
    }
    let pair = EntropyPair {
        eta: Eta::Custom { eta, deta },
        phi: phi.clone(),
        quadrature_tol,
        flux_scale: 1.0,
    };
    pair.q(phi.r_max())?;
    Ok(pair)
}

impl EntropyPair {
    pub fn m(&self) -> Option<f64> {
        match self.eta {
            Eta::Power { m } => Some(m),
            Eta::Custom { .. } => None,
        }
    }

    pub fn phi(&self) -> &PhiModel {
        &self.phi
    }

    pub fn quadrature_tol(&self) -> f64 {
        self.quadrature_tol
    }

    pub fn eta(&self, r: f64) -> f64 {
        match &self.eta {
            Eta::Power { m } => r.powf(*m),
            Eta::Custom { eta, .. } => eta(r),
        }
    }

    pub fn eta_prime(&self, r: f64) -> f64 {
        match &self.eta {
            Eta::Power { m } => {
                if *m == 1.0 {
                    1.0
                } else {
                    m * r.powf(m - 1.0)
                }
            }
            Eta::Custom { deta, .. } => deta(r),
        }
    }

    /// Copy of this pair with q multiplied by `factor`; a negative control
    /// for [`verify_pair`].
    pub fn with_flux_scaled(&self, factor: f64) -> Self {
        Self {
            flux_scale: self.flux_scale * factor,
            ..self.clone()
        }
    }

    pub fn q(&self, r: f64) -> Result<f64> {
        self.q_unscaled(r).map(|q| q * self.flux_scale)
    }

    fn q_unscaled(&self, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(match &self.eta {
                Eta::Power { .. } => 0.0,
                Eta::Custom { eta, .. } => eta(0.0) * self.phi.value(0.0),
            });
        }
        let phi = &self.phi;
        match &self.eta {
            Eta::Power { m } => {
                let m = *m;
                let rm = r.powf(m);
                let head = m * rm * phi.value(r);
                if m == 1.0 {
                    return Ok(head);
                }
                // ∫₀^r s^{m-1} φ(s) ds = r^m ∫₀^1 t^{m-1} φ(r t) dt
                let scale = m * (m - 1.0) * rm;
                let inner = integrate(
                    |t| t.powf(m - 1.0) * phi.value(r * t),
                    0.0,
                    1.0,
                    self.quadrature_tol / scale,
                )?;
                Ok(head - scale * inner)
            }
            Eta::Custom { eta, deta } => {
                let psi = integrate(
                    |s| (s * deta(s) - eta(s)) * phi.derivative(s),
                    0.0,
                    r,
                    self.quadrature_tol,
                )?;
                Ok(psi + eta(r) * phi.value(r))
            }
        }
    }

    pub fn eta_state(&self, s: State) -> f64 {
        self.eta(s.r())
    }

    pub fn q_state(&self, s: State) -> Result<f64> {
        self.q(s.r())
    }

    /// ∇η·(a u, b v), the entropy production of the damping term.
    pub fn damping_production(&self, s: State, d: &Damping) -> f64 {
        let r = s.r();
        if r == 0.0 {
            return 0.0;
        }
        self.eta_prime(r) * (d.a * s.u * s.u + d.b * s.v * s.v) / r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairResidualReport {
    pub max_residual: f64,
    pub worst_state: State,
    pub threshold: f64,
    pub pass: bool,
}

fn fd5<F: Fn(f64) -> Result<f64>>(f: F, x: f64, h: f64) -> Result<f64> {
    Ok((f(x - 2.0 * h)? - 8.0 * f(x - h)? + 8.0 * f(x + h)? - f(x + 2.0 * h)?) / (12.0 * h))
}

/// max ‖∇η·A − ∇q‖ over `states`, with ∇η and ∇q from five-point finite
/// differences in (u, v). Passes iff the residual is at most 10× the
/// quadrature tolerance.
pub fn verify_pair(
    pair: &EntropyPair,
    phi: &PhiModel,
    states: &[State],
) -> Result<PairResidualReport> {
    let mut max_residual = 0.0;
    let mut worst_state = states.first().copied().unwrap_or(State::new(0.0, 0.0));
    for &s in states {
        let h = 1e-3 * s.r();
        let q_at = |u: f64, v: f64| pair.q(State::new(u, v).r());
        let eta_at = |u: f64, v: f64| Ok(pair.eta(State::new(u, v).r()));
        let deta = [
            fd5(|u| eta_at(u, s.v), s.u, h)?,
            fd5(|v| eta_at(s.u, v), s.v, h)?,
        ];
        let dq = [
            fd5(|u| q_at(u, s.v), s.u, h)?,
            fd5(|v| q_at(s.u, v), s.v, h)?,
        ];
        let a = jacobian(s, phi)?;
        let lhs = [
            deta[0] * a[0][0] + deta[1] * a[1][0],
            deta[0] * a[0][1] + deta[1] * a[1][1],
        ];
        let res = ((lhs[0] - dq[0]).powi(2) + (lhs[1] - dq[1]).powi(2)).sqrt();
        if !(res <= max_residual) {
            max_residual = res;
            worst_state = s;
        }
    }
    let threshold = 10.0 * pair.quadrature_tol;
    Ok(PairResidualReport {
        max_residual,
        worst_state,
        threshold,
        pass: max_residual <= threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxBoundReport {
    pub max_ratio: f64,
    pub at_r: f64,
    pub pass: bool,
}

/// Samples |q(r)| / (2 m M r^m) on (0, r_working].
pub fn flux_bound(
    pair: &EntropyPair,
    sup_phi: f64,
    r_working: f64,
    n_samples: usize,
) -> Result<FluxBoundReport> {
    let m = pair
        .m()
        .ok_or_else(|| Error::InvalidArgument("flux bound needs a power entropy".into()))?;
    let n = n_samples.max(1);
    let mut max_ratio = 0.0;
    let mut at_r = r_working;
    for i in 1..=n {
        let r = r_working * i as f64 / n as f64;
        let ratio = pair.q(r)?.abs() / (2.0 * m * sup_phi * r.powf(m));
        if !(ratio <= max_ratio) {
            max_ratio = ratio;
            at_r = r;
        }
    }
    Ok(FluxBoundReport {
        max_ratio,
        at_r,
        pass: max_ratio <= 1.0 + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_states(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<State> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| State::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi)))
            .collect()
    }

    #[test]
    fn power_pair_closed_forms() {
        let lin = PhiModel::power(1.0, 2.0).unwrap();
        let p = power_entropy_pair(2.0, &lin).unwrap();
        assert!((p.q(1.0).unwrap() - 4.0 / 3.0).abs() < 1e-10);
        assert!((p.q(1.7).unwrap() - 4.0 / 3.0 * 1.7f64.powi(3)).abs() < 1e-10);
        assert_eq!(p.q(0.0).unwrap(), 0.0);

        let one = PhiModel::constant(1.0, 2.0).unwrap();
        let p = power_entropy_pair(2.0, &one).unwrap();
        assert!((p.q(1.0).unwrap() - 1.0).abs() < 1e-10);

        let sh = PhiModel::shifted(1.0, 1.0, 2.0).unwrap();
        let p = power_entropy_pair(1.0, &sh).unwrap();
        assert_eq!(p.q(0.8).unwrap(), 0.8 * 1.8);
        assert!(power_entropy_pair(0.5, &sh).is_err());
    }

    #[test]
    fn flux_from_eta_examples() {
        let lin = PhiModel::power(1.0, 2.0).unwrap();
        let p = flux_from_eta(Arc::new(|r| r), Arc::new(|_| 1.0), &lin).unwrap();
        assert_eq!(p.q(1.3).unwrap(), 1.3 * 1.3);

        let p = flux_from_eta(Arc::new(|r| r * r), Arc::new(|r| 2.0 * r), &lin).unwrap();
        let power = power_entropy_pair(2.0, &lin).unwrap();
        for r in [0.1, 0.5, 1.0, 1.9] {
            assert!((p.q(r).unwrap() - 4.0 / 3.0 * r.powi(3)).abs() < 1e-10);
            assert!((p.q(r).unwrap() - power.q(r).unwrap()).abs() < 2e-10);
        }

        let sh = PhiModel::shifted(1.0, 1.0, 2.0).unwrap();
        let p = flux_from_eta(
            Arc::new(|r: f64| r.powi(3)),
            Arc::new(|r: f64| 3.0 * r * r),
            &sh,
        )
        .unwrap();
        for r in [0.2f64, 1.0, 2.0] {
            let expect = r.powi(4) / 2.0 + r.powi(3) * (1.0 + r);
            assert!((p.q(r).unwrap() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn non_lipschitz_eta_rejected() {
        let lin = PhiModel::power(1.0, 2.0).unwrap();
        let r = flux_from_eta(
            Arc::new(|r: f64| r.ln()),
            Arc::new(|r: f64| 1.0 / (r * r)),
            &lin,
        );
        assert!(matches!(r, Err(Error::NonLipschitz(_))));
    }

    #[test]
    fn verify_pair_examples() {
        let lin = PhiModel::power(1.0, 2.0).unwrap();
        let states = random_states(100, 0.1, 1.4, 7);
        let p = power_entropy_pair(2.0, &lin).unwrap();
        let rep = verify_pair(&p, &lin, &states).unwrap();
        assert!(rep.pass && rep.max_residual <= 1e-6, "{rep:?}");

        let quad = PhiModel::power(2.0, 2.0).unwrap();
        let p = flux_from_eta(Arc::new(|r| r), Arc::new(|_| 1.0), &quad).unwrap();
        let rep = verify_pair(&p, &quad, &states).unwrap();
        assert!(rep.max_residual < 1e-11, "{rep:?}");

        let p = power_entropy_pair(2.0, &lin)
            .unwrap()
            .with_flux_scaled(1.01);
        let rep = verify_pair(&p, &lin, &states).unwrap();
        assert!(!rep.pass && rep.max_residual > 1e-3);
    }

    #[test]
    fn flux_bound_examples() {
        let lin = PhiModel::power(1.0, 1.0).unwrap();
        let p = power_entropy_pair(2.0, &lin).unwrap();
        let rep = flux_bound(&p, 1.0, 1.0, 200).unwrap();
        assert!(rep.pass && (rep.max_ratio - 1.0 / 3.0).abs() < 1e-9);

        let p = power_entropy_pair(1.0, &lin).unwrap();
        let rep = flux_bound(&p, lin.sup_on(1.0, 101), 1.0, 200).unwrap();
        assert!(rep.pass && rep.max_ratio <= 0.5 + 1e-15);

        let one = PhiModel::constant(1.0, 1.0).unwrap();
        let p = power_entropy_pair(2.0, &one).unwrap();
        let rep = flux_bound(&p, 1.0, 1.0, 50).unwrap();
        assert!(rep.pass && (rep.max_ratio - 0.25).abs() < 1e-9);
    }

    #[test]
    fn damping_production_matches_gradient() {
        let lin = PhiModel::power(1.0, 4.0).unwrap();
        let p = power_entropy_pair(2.0, &lin).unwrap();
        let d = Damping::new(0.6, 0.2).unwrap();
        let s = State::new(0.3, 0.4);
        // ∇(u²+v²)·(au, bv) = 2(a u² + b v²)
        let expect = 2.0 * (0.6 * 0.09 + 0.2 * 0.16);
        assert!((p.damping_production(s, &d) - expect).abs() < 1e-15);
    }
}
