//! Flux, Jacobian, eigenstructure and Riemann invariants of the symmetric
//! Keyfitz-Kranzer system
//!
//! ```text
//! u_t + (u φ(r))_x = 0,   v_t + (v φ(r))_x = 0,   r = sqrt(u² + v²)
//! ```
//!
//! Everything here is a pure function of its inputs.

use std::path::Path;

use crate::error::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidArgument(
                "table needs at least two (r, phi) rows".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "table contains non-finite entries".into(),
            ));
        }
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = delta[0];
        slopes[n - 1] = delta[n - 2];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                slopes[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    fn locate(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&xk| xk <= x);
        k.saturating_sub(1).min(self.xs.len() - 2)
    }

    /// Value, first and second derivative at `x` (clamped to the table).
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let k = self.locate(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = ((x - self.xs[k]) / h).clamp(0.0, 1.0);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (d0, d1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * d1;
        let first = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * d1)
            / h;
        let second = ((12.0 * t - 6.0) * y0
            + (6.0 * t - 4.0) * d0
            + (-12.0 * t + 6.0) * y1
            + (6.0 * t - 2.0) * d1)
            / (h * h);
        (value, first, second)
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhiFamily {
    /// φ(r) = r^γ, γ > 0
    PowerLaw {
        gamma: f64,
    },
    /// φ(r) = c + r^γ
    ShiftedPower {
        c: f64,
        gamma: f64,
    },
    /// φ(r) = c
    Constant {
        c: f64,
    },
    Tabulated(MonotoneCubic),
}

/// Sampled status of the condition `lim r φ(r) = 0` and `r φ'(r) ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C1Status {
    pub holds: bool,
    pub limit_ok: bool,
    /// Sample radius where |r φ'(r)| is smallest.
    pub worst_r: f64,
    pub worst_value: f64,
}

fn pow(r: f64, gamma: f64) -> f64 {
    match gamma {
        g if g == 1.0 => r,
        g if g == 2.0 => r * r,
        g if g == 0.5 => r.sqrt(),
        g if g == 3.0 => r * r * r,
        g => r.powf(g),
    }
}

/// The velocity function φ(r) on its validity range `[0, r_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiModel {
    family: PhiFamily,
    r_max: f64,
    c1: C1Status,
}

const C1_SAMPLES: usize = 1000;

impl PhiModel {
    pub fn new(family: PhiFamily, r_max: f64) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "r_max must be positive, got {r_max}"
            )));
        }
        match &family {
            PhiFamily::PowerLaw { gamma } | PhiFamily::ShiftedPower { gamma, .. }
                if !(*gamma > 0.0 && gamma.is_finite()) =>
            {
                return Err(Error::InvalidArgument(format!(
                    "exponent must be positive, got {gamma}"
                )));
            }
            PhiFamily::ShiftedPower { c, .. } if !(*c >= 0.0 && c.is_finite()) => {
                return Err(Error::InvalidArgument(format!(
                    "shift must be nonnegative, got {c}"
                )));
            }
            PhiFamily::Constant { c } if !c.is_finite() => {
                return Err(Error::InvalidArgument("constant must be finite".into()));
            }
            PhiFamily::Tabulated(t) => {
                if t.x_min() != 0.0 {
                    return Err(Error::InvalidArgument(
                        "tabulated phi must start at r = 0".into(),
                    ));
                }
                if r_max > t.x_max() {
                    return Err(Error::InvalidArgument(format!(
                        "r_max {r_max} exceeds the table end {}",
                        t.x_max()
                    )));
                }
            }
            _ => {}
        }
        let mut model = Self {
            family,
            r_max,
            c1: C1Status {
                holds: false,
                limit_ok: false,
                worst_r: 0.0,
                worst_value: 0.0,
            },
        };
        model.c1 = model.sample_c1();
        Ok(model)
    }

    pub fn power(gamma: f64, r_max: f64) -> Result<Self> {
        Self::new(PhiFamily::PowerLaw { gamma }, r_max)
    }

    pub fn shifted(c: f64, gamma: f64, r_max: f64) -> Result<Self> {
        Self::new(PhiFamily::ShiftedPower { c, gamma }, r_max)
    }

    pub fn constant(c: f64, r_max: f64) -> Result<Self> {
        Self::new(PhiFamily::Constant { c }, r_max)
    }

    /// Loads a two-column `(r, φ)` text table. Blank lines and `#` comments are skipped.
    pub fn from_table_file(path: impl AsRef<Path>, r_max: Option<f64>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let (xs, ys) = parse_table(&text)?;
        let table = MonotoneCubic::new(xs, ys)?;
        let r_max = r_max.unwrap_or_else(|| table.x_max());
        Self::new(PhiFamily::Tabulated(table), r_max)
    }

    pub fn family(&self) -> &PhiFamily {
        &self.family
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn c1(&self) -> C1Status {
        self.c1
    }

    pub fn check_range(&self, r: f64) -> Result<()> {
        if r <= self.r_max * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                r,
                r_max: self.r_max,
            })
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match &self.family {
            PhiFamily::PowerLaw { gamma } => pow(r, *gamma),
            PhiFamily::ShiftedPower { c, gamma } => c + pow(r, *gamma),
            PhiFamily::Constant { c } => *c,
            PhiFamily::Tabulated(t) => t.eval(r).0,
        }
    }

    /// φ'(r); may be infinite at r = 0 for exponents below one.
    pub fn derivative(&self, r: f64) -> f64 {
        match &self.family {
            PhiFamily::PowerLaw { gamma } | PhiFamily::ShiftedPower { gamma, .. } => {
                if *gamma == 1.0 {
                    1.0
                } else {
                    gamma * pow(r, gamma - 1.0)
                }
            }
            PhiFamily::Constant { .. } => 0.0,
            PhiFamily::Tabulated(t) => t.eval(r).1,
        }
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        match &self.family {
            PhiFamily::PowerLaw { gamma } | PhiFamily::ShiftedPower { gamma, .. } => {
                let coeff = gamma * (gamma - 1.0);
                if coeff == 0.0 {
                    0.0
                } else if *gamma == 2.0 {
                    2.0
                } else {
                    coeff * pow(r, gamma - 2.0)
                }
            }
            PhiFamily::Constant { .. } => 0.0,
            PhiFamily::Tabulated(t) => t.eval(r).2,
        }
    }

    /// λ₂(r) = φ(r) + r φ'(r), the derivative of r ↦ r φ(r).
    pub fn radial_speed(&self, r: f64) -> f64 {
        if r == 0.0 {
            return self.value(0.0);
        }
        self.value(r) + r * self.derivative(r)
    }

    /// Smallest `r` in `[0, r_max]` with φ(r) = `level`, for increasing φ.
    pub fn inverse(&self, level: f64) -> Result<f64> {
        let lo = self.value(0.0);
        let hi = self.value(self.r_max);
        if !(level >= lo && level <= hi) {
            return Err(Error::RootBracketFailure(format!(
                "level {level} outside phi range [{lo}, {hi}]"
            )));
        }
        if level == lo {
            return Ok(0.0);
        }
        crate::numerics::brent(|r| self.value(r) - level, 0.0, self.r_max, 1e-15)
    }

    /// sup φ over `[0, r_hi]`, by sampling.
    pub fn sup_on(&self, r_hi: f64, n_samples: usize) -> f64 {
        crate::numerics::linspace(0.0, r_hi.min(self.r_max), n_samples.max(2))
            .into_iter()
            .map(|r| self.value(r))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn sample_c1(&self) -> C1Status {
        let tiny = self.r_max * 1e-12;
        let limit_ok = (tiny * self.value(tiny)).abs()
            <= 1e-9 * (1.0 + (self.r_max * self.value(self.r_max)).abs());
        let mut worst_r = self.r_max;
        let mut worst_value = f64::INFINITY;
        for i in 1..=C1_SAMPLES {
            let r = self.r_max * i as f64 / C1_SAMPLES as f64;
            let w = (r * self.derivative(r)).abs();
            if w < worst_value {
                worst_value = w;
                worst_r = r;
            }
        }
        C1Status {
            holds: limit_ok && worst_value > 0.0,
            limit_ok,
            worst_r,
            worst_value,
        }
    }
}

fn parse_table(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let cols: Vec<&str> = body
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if cols.len() < 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                column: 1,
                message: "expected two columns".into(),
            });
        }
        let parse = |s: &str, col: usize| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno + 1,
                column: col,
                message: format!("bad number `{s}`: {e}"),
            })
        };
        xs.push(parse(cols[0], 1)?);
        ys.push(parse(cols[1], line.find(cols[1]).map_or(1, |p| p + 1))?);
    }
    Ok((xs, ys))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub u: f64,
    pub v: f64,
}

impl State {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn r(&self) -> f64 {
        (self.u * self.u + self.v * self.v).sqrt()
    }
}

/// Linear damping rates: `a` on u, `b` on v.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Damping {
    pub a: f64,
    pub b: f64,
}

impl Damping {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "damping rates must be nonnegative, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn undamped() -> Self {
        Self { a: 0.0, b: 0.0 }
    }

    /// Ordering a ≥ b required by the invariant-region setting.
    pub fn is_ordered(&self) -> bool {
        self.a >= self.b
    }

    /// Strict a > b (condition C₂).
    pub fn require_strict(&self) -> Result<()> {
        if self.a > self.b {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "condition C2 requires a > b, got a={}, b={}",
                self.a, self.b
            )))
        }
    }

    pub fn min_rate(&self) -> f64 {
        self.a.min(self.b)
    }

    pub fn max_rate(&self) -> f64 {
        self.a.max(self.b)
    }
}

pub fn flux(s: State, phi: &PhiModel) -> Result<(f64, f64)> {
    let r = s.r();
    phi.check_range(r)?;
    if r == 0.0 {
        return Ok((0.0, 0.0));
    }
    let p = phi.value(r);
    Ok((s.u * p, s.v * p))
}

/// Analytic Jacobian `φ δᵢⱼ + wᵢ wⱼ φ'(r)/r` with `w = (u, v)`.
pub fn jacobian(s: State, phi: &PhiModel) -> Result<Mat2> {
    let r = s.r();
    phi.check_range(r)?;
    let p = phi.value(r);
    if r == 0.0 {
        if !p.is_finite() {
            return Err(Error::DegenerateState("phi(0+) is not finite".into()));
        }
        return Ok([[p, 0.0], [0.0, p]]);
    }
    let k = phi.derivative(r) / r;
    Ok([
        [p + s.u * s.u * k, s.u * s.v * k],
        [s.v * s.u * k, p + s.v * s.v * k],
    ])
}

/// `(λ₁, λ₂) = (φ, φ + r φ')`, not ordered.
pub fn eigenvalues(s: State, phi: &PhiModel) -> Result<(f64, f64)> {
    let r = s.r();
    phi.check_range(r)?;
    let p = phi.value(r);
    if r == 0.0 {
        if !p.is_finite() {
            return Err(Error::DegenerateState("phi(0+) is not finite".into()));
        }
        return Ok((p, p));
    }
    Ok((p, p + r * phi.derivative(r)))
}

/// Unit eigenvectors oriented with nonnegative first component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvectors {
    /// Contact direction, ∝ (1, -u/v).
    pub r1: [f64; 2],
    /// Radial direction, ∝ (1, v/u).
    pub r2: [f64; 2],
    /// Set when u = 0 or v = 0: the (1, ·) formulas are singular there and
    /// the returned vectors are their limiting directions.
    pub axis_limit: bool,
}

pub fn eigenvectors(s: State) -> Result<Eigenvectors> {
    let r = s.r();
    if r == 0.0 {
        return Err(Error::DegenerateState(
            "eigenvectors undefined at the origin".into(),
        ));
    }
    let orient = |x: [f64; 2]| {
        if x[0] < 0.0 || (x[0] == 0.0 && x[1] < 0.0) {
            [-x[0], -x[1]]
        } else {
            x
        }
    };
    Ok(Eigenvectors {
        r1: orient([s.v / r, -s.u / r]),
        r2: orient([s.u / r, s.v / r]),
        axis_limit: s.u == 0.0 || s.v == 0.0,
    })
}

/// `(W, Z) = (φ(r), u/v)`.
pub fn riemann_invariants(s: State, phi: &PhiModel) -> Result<(f64, f64)> {
    let r = s.r();
    phi.check_range(r)?;
    if s.v == 0.0 {
        return Err(Error::AxisState { u: s.u, v: s.v });
    }
    Ok((phi.value(r), s.u / s.v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    LinearlyDegenerate,
    GenuinelyNonlinear,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldClassification {
    pub field_index: u8,
    /// ∇λᵢ · rᵢ with rᵢ the unit eigenvector from [`eigenvectors`].
    pub gn_value: f64,
    pub kind: FieldKind,
}

/// Genuine-nonlinearity coefficient of field `i` at `s`.
///
/// Field 1 has ∇λ₁ ∥ (u, v) ⟂ r₁, so it is linearly degenerate for every φ.
/// For field 2, λ₂ depends on r only, so with the unit radial eigenvector
/// ∇λ₂·r̂₂ = sign(u) (2φ'(r) + r φ''(r)). With the unnormalized r₂ = (1, v/u)
/// this becomes `(2 (u,v)·∇φ + (u,v) H(φ) (u,v)ᵀ) / u = r (2φ' + r φ'') / u`,
/// see [`gn_value_unnormalized`].
pub fn classify_field(s: State, phi: &PhiModel, field: u8) -> Result<FieldClassification> {
    let r = s.r();
    if r == 0.0 {
        return Err(Error::DegenerateState("classification needs r > 0".into()));
    }
    if s.u == 0.0 || s.v == 0.0 {
        return Err(Error::AxisState { u: s.u, v: s.v });
    }
    phi.check_range(r)?;
    let dphi = phi.derivative(r);
    let (gn_value, scale) = match field {
        1 => {
            let ev = eigenvectors(s)?;
            let grad = [dphi * s.u / r, dphi * s.v / r];
            (grad[0] * ev.r1[0] + grad[1] * ev.r1[1], dphi.abs())
        }
        2 => {
            let d2 = phi.second_derivative(r);
            let raw = 2.0 * dphi + r * d2;
            (raw * s.u.signum(), 2.0 * dphi.abs() + (r * d2).abs())
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "field index must be 1 or 2, got {field}"
            )))
        }
    };
    let kind = if gn_value.abs() <= 1e-12 * scale || gn_value == 0.0 {
        FieldKind::LinearlyDegenerate
    } else {
        FieldKind::GenuinelyNonlinear
    };
    Ok(FieldClassification {
        field_index: field,
        gn_value,
        kind,
    })
}

/// ∇λ₂·(1, v/u), the unnormalized second-field coefficient.
pub fn gn_value_unnormalized(s: State, phi: &PhiModel) -> Result<f64> {
    let c = classify_field(s, phi, 2)?;
    let r = s.r();
    Ok(c.gn_value * s.u.signum() * r / s.u)
}

/// Classification over a set of states; `Mixed` when both kinds occur.
pub fn classify_field_over(states: &[State], phi: &PhiModel, field: u8) -> Result<FieldKind> {
    let mut seen_ld = false;
    let mut seen_gn = false;
    for &s in states {
        match classify_field(s, phi, field)?.kind {
            FieldKind::LinearlyDegenerate => seen_ld = true,
            _ => seen_gn = true,
        }
    }
    Ok(match (seen_ld, seen_gn) {
        (true, true) => FieldKind::Mixed,
        (false, true) => FieldKind::GenuinelyNonlinear,
        _ => FieldKind::LinearlyDegenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicityReport {
    pub pass: bool,
    /// min |r φ'(r)| over the samples
    pub min_gap: f64,
    pub at_r: f64,
    pub failures: usize,
}

/// Samples the eigenvalue gap λ₂ − λ₁ = r φ'(r) on `[r_lo, r_hi]`.
pub fn check_strict_hyperbolicity(
    phi: &PhiModel,
    r_lo: f64,
    r_hi: f64,
    n_samples: usize,
) -> HyperbolicityReport {
    let mut min_gap = f64::INFINITY;
    let mut at_r = r_lo;
    let mut failures = 0;
    for r in crate::numerics::linspace(r_lo, r_hi, n_samples.max(2)) {
        let gap = (r * phi.derivative(r)).abs();
        if !(gap > f64::EPSILON * phi.value(r).abs()) {
            failures += 1;
        }
        if gap < min_gap {
            min_gap = gap;
            at_r = r;
        }
    }
    HyperbolicityReport {
        pass: failures == 0,
        min_gap,
        at_r,
        failures,
    }
}

/// Full eigen-data at a state, with the residual ‖A rᵢ − λᵢ rᵢ‖ of each pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenstructure {
    pub lambda: (f64, f64),
    pub vectors: Eigenvectors,
    pub residuals: (f64, f64),
    pub field1: Option<FieldClassification>,
    pub field2: Option<FieldClassification>,
}

pub fn eigenstructure(s: State, phi: &PhiModel) -> Result<Eigenstructure> {
    let a = jacobian(s, phi)?;
    let lambda = eigenvalues(s, phi)?;
    let vectors = eigenvectors(s)?;
    let residual = |x: [f64; 2], l: f64| {
        let ax = [
            a[0][0] * x[0] + a[0][1] * x[1],
            a[1][0] * x[0] + a[1][1] * x[1],
        ];
        ((ax[0] - l * x[0]).powi(2) + (ax[1] - l * x[1]).powi(2)).sqrt()
    };
    Ok(Eigenstructure {
        lambda,
        residuals: (
            residual(vectors.r1, lambda.0),
            residual(vectors.r2, lambda.1),
        ),
        vectors,
        field1: classify_field(s, phi, 1).ok(),
        field2: classify_field(s, phi, 2).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian(s: State, phi: &PhiModel) -> Mat2 {
        let h = 1e-6;
        let mut j = [[0.0; 2]; 2];
        for col in 0..2 {
            let (mut p, mut m) = (s, s);
            if col == 0 {
                p.u += h;
                m.u -= h;
            } else {
                p.v += h;
                m.v -= h;
            }
            let fp = flux(p, phi).unwrap();
            let fm = flux(m, phi).unwrap();
            j[0][col] = (fp.0 - fm.0) / (2.0 * h);
            j[1][col] = (fp.1 - fm.1) / (2.0 * h);
        }
        j
    }

    fn sym_eigs(a: Mat2) -> (f64, f64) {
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        (0.5 * tr - disc, 0.5 * tr + disc)
    }

    #[test]
    fn flux_examples() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        assert_eq!(flux(State::new(3.0, 4.0), &lin).unwrap(), (15.0, 20.0));
        assert_eq!(flux(State::new(0.0, 0.0), &lin).unwrap(), (0.0, 0.0));
        let sh = PhiModel::shifted(1.0, 2.0, 10.0).unwrap();
        assert_eq!(flux(State::new(1.0, 0.0), &sh).unwrap(), (2.0, 0.0));
        assert!(matches!(
            flux(State::new(30.0, 40.0), &lin),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        let s = State::new(3.0, 4.0);
        let a = jacobian(s, &lin).unwrap();
        let expect = [
            [5.0 + 9.0 / 5.0, 12.0 / 5.0],
            [12.0 / 5.0, 5.0 + 16.0 / 5.0],
        ];
        let fd = fd_jacobian(s, &lin);
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] - expect[i][j]).abs() < 1e-12);
                assert!((fd[i][j] - expect[i][j]).abs() < 1e-8);
            }
        }
        let quad = PhiModel::power(2.0, 10.0).unwrap();
        let s = State::new(0.0, 1.0);
        let fd = fd_jacobian(s, &quad);
        let a = jacobian(s, &quad).unwrap();
        assert_eq!(a, [[1.0, 0.0], [0.0, 3.0]]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((fd[i][j] - a[i][j]).abs() < 1e-8);
            }
        }
        let c = PhiModel::constant(2.5, 10.0).unwrap();
        assert_eq!(
            jacobian(State::new(0.3, -0.7), &c).unwrap(),
            [[2.5, 0.0], [0.0, 2.5]]
        );
        assert_eq!(
            jacobian(State::new(0.0, 0.0), &c).unwrap(),
            [[2.5, 0.0], [0.0, 2.5]]
        );
    }

    #[test]
    fn eigenvalue_examples_against_fd_eigendecomposition() {
        let quad = PhiModel::power(2.0, 10.0).unwrap();
        let s = State::new(3.0, 4.0);
        assert_eq!(eigenvalues(s, &quad).unwrap(), (25.0, 75.0));
        let (l1, l2) = sym_eigs(fd_jacobian(s, &quad));
        assert!((l1 - 25.0).abs() < 1e-6 && (l2 - 75.0).abs() < 1e-6);

        let lin = PhiModel::power(1.0, 10.0).unwrap();
        assert_eq!(eigenvalues(State::new(0.0, 1.0), &lin).unwrap(), (1.0, 2.0));
        let (l1, l2) = sym_eigs(fd_jacobian(State::new(0.0, 1.0), &lin));
        assert!((l1 - 1.0).abs() < 1e-8 && (l2 - 2.0).abs() < 1e-8);

        let c = PhiModel::constant(0.7, 10.0).unwrap();
        assert_eq!(eigenvalues(State::new(1.0, 2.0), &c).unwrap(), (0.7, 0.7));
    }

    #[test]
    fn eigenvector_examples() {
        let ev = eigenvectors(State::new(1.0, 1.0)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((ev.r1[0] - h).abs() < 1e-15 && (ev.r1[1] + h).abs() < 1e-15);
        assert!((ev.r2[0] - h).abs() < 1e-15 && (ev.r2[1] - h).abs() < 1e-15);
        let ev = eigenvectors(State::new(3.0, 4.0)).unwrap();
        assert!((ev.r2[0] - 0.6).abs() < 1e-15 && (ev.r2[1] - 0.8).abs() < 1e-15);
        assert!(!ev.axis_limit);

        let quad = PhiModel::power(2.0, 10.0).unwrap();
        let a = fd_jacobian(State::new(3.0, 4.0), &quad);
        let ar = [
            a[0][0] * ev.r2[0] + a[0][1] * ev.r2[1],
            a[1][0] * ev.r2[0] + a[1][1] * ev.r2[1],
        ];
        assert!((ar[0] - 75.0 * ev.r2[0]).abs() < 1e-6 * 75.0);
        assert!((ar[1] - 75.0 * ev.r2[1]).abs() < 1e-6 * 75.0);

        let axis = eigenvectors(State::new(0.0, 2.0)).unwrap();
        assert!(axis.axis_limit);
        assert_eq!(axis.r1, [1.0, 0.0]);
        assert_eq!(axis.r2, [0.0, 1.0]);
        assert!(eigenvectors(State::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn riemann_invariant_examples() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        let (w, z) = riemann_invariants(State::new(1.0, 1.0), &lin).unwrap();
        assert!((w - 2f64.sqrt()).abs() < 1e-15 && z == 1.0);
        assert_eq!(
            riemann_invariants(State::new(2.0, 1.0), &lin).unwrap().1,
            2.0
        );
        assert!(matches!(
            riemann_invariants(State::new(2.0, 0.0), &lin),
            Err(Error::AxisState { .. })
        ));
    }

    #[test]
    fn classification_examples() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        let s = State::new(3.0, 4.0);
        let f1 = classify_field(s, &lin, 1).unwrap();
        assert_eq!(f1.kind, FieldKind::LinearlyDegenerate);
        assert!(f1.gn_value.abs() < 1e-15);
        let f2 = classify_field(s, &lin, 2).unwrap();
        assert_eq!(f2.kind, FieldKind::GenuinelyNonlinear);
        // finite-difference grad(lambda_2) dotted with unit r_2
        let h = 1e-6;
        let l2 = |u: f64, v: f64| eigenvalues(State::new(u, v), &lin).unwrap().1;
        let g = [
            (l2(3.0 + h, 4.0) - l2(3.0 - h, 4.0)) / (2.0 * h),
            (l2(3.0, 4.0 + h) - l2(3.0, 4.0 - h)) / (2.0 * h),
        ];
        let fd = g[0] * 0.6 + g[1] * 0.8;
        assert!((fd - f2.gn_value).abs() < 1e-6 * f2.gn_value.abs());
        // unnormalized form r (2φ' + rφ'')/u
        assert!((gn_value_unnormalized(s, &lin).unwrap() - 5.0 * 2.0 / 3.0).abs() < 1e-12);

        let c = PhiModel::constant(1.0, 10.0).unwrap();
        assert_eq!(
            classify_field(s, &c, 2).unwrap().kind,
            FieldKind::LinearlyDegenerate
        );
        assert!(matches!(
            classify_field(State::new(0.0, 1.0), &lin, 2),
            Err(Error::AxisState { .. })
        ));
        assert!(matches!(
            classify_field(State::new(0.0, 0.0), &lin, 2),
            Err(Error::DegenerateState(_))
        ));
    }

    #[test]
    fn mixed_classification() {
        // flat on [0, 1], increasing afterwards
        let xs = vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0];
        let ys = vec![1.0, 1.0, 1.0, 1.5, 2.0, 3.0];
        let phi = PhiModel::new(
            PhiFamily::Tabulated(MonotoneCubic::new(xs, ys).unwrap()),
            3.0,
        )
        .unwrap();
        let inner = State::new(0.3, 0.4);
        let outer = State::new(1.2, 1.6);
        assert_eq!(
            classify_field(inner, &phi, 2).unwrap().kind,
            FieldKind::LinearlyDegenerate
        );
        assert_eq!(
            classify_field(outer, &phi, 2).unwrap().kind,
            FieldKind::GenuinelyNonlinear
        );
        assert_eq!(
            classify_field_over(&[inner, outer], &phi, 2).unwrap(),
            FieldKind::Mixed
        );
        assert_eq!(
            classify_field_over(&[inner, outer], &phi, 1).unwrap(),
            FieldKind::LinearlyDegenerate
        );
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        assert_eq!(
            classify_field_over(&[inner, outer], &lin, 2).unwrap(),
            FieldKind::GenuinelyNonlinear
        );
    }

    #[test]
    fn strict_hyperbolicity_examples() {
        let lin = PhiModel::power(1.0, 10.0).unwrap();
        let rep = check_strict_hyperbolicity(&lin, 0.1, 10.0, 200);
        assert!(rep.pass);
        assert!((rep.at_r - 0.1).abs() < 1e-15 && (rep.min_gap - 0.1).abs() < 1e-15);
        let c = PhiModel::constant(2.0, 10.0).unwrap();
        let rep = check_strict_hyperbolicity(&c, 0.1, 10.0, 50);
        assert!(!rep.pass && rep.failures == 50);
        let xs = crate::numerics::linspace(0.0, 3.0, 301);
        let ys: Vec<f64> = xs.iter().map(|r| 1.0 / (1.0 + r)).collect();
        let dec = PhiModel::new(
            PhiFamily::Tabulated(MonotoneCubic::new(xs, ys).unwrap()),
            3.0,
        )
        .unwrap();
        let rep = check_strict_hyperbolicity(&dec, 0.5, 2.0, 100);
        assert!(rep.pass);
        // sampled rφ' against -r/(1+r)^2
        let r = 1.3;
        assert!((r * dec.derivative(r) + r / (1.0 + r).powi(2)).abs() < 1e-4);
    }

    #[test]
    fn c1_flags() {
        assert!(PhiModel::power(1.0, 5.0).unwrap().c1().holds);
        assert!(PhiModel::shifted(1.0, 1.0, 5.0).unwrap().c1().holds);
        let c = PhiModel::constant(1.0, 5.0).unwrap().c1();
        assert!(c.limit_ok && !c.holds && c.worst_value == 0.0);
    }

    #[test]
    fn zero_radius_limits() {
        let sqrt_phi = PhiModel::power(0.5, 4.0).unwrap();
        assert_eq!(sqrt_phi.value(0.0), 0.0);
        assert!(sqrt_phi.derivative(0.0).is_infinite());
        assert_eq!(sqrt_phi.radial_speed(0.0), 0.0);
        assert_eq!(
            eigenvalues(State::new(0.0, 0.0), &sqrt_phi).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn monotone_cubic_reproduces_monotone_data() {
        let xs = crate::numerics::linspace(0.0, 2.0, 21);
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let t = MonotoneCubic::new(xs, ys).unwrap();
        let mut prev = -1.0;
        for x in crate::numerics::linspace(0.0, 2.0, 1001) {
            let (y, d, _) = t.eval(x);
            assert!(y >= prev && d >= 0.0);
            assert!((y - x * x).abs() < 2e-3);
            prev = y;
        }
        assert!(MonotoneCubic::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn table_file_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.txt");
        std::fs::write(&path, "# r phi\n0 0\n0.5 0.5\n1 1\n2 2\n").unwrap();
        let phi = PhiModel::from_table_file(&path, None).unwrap();
        assert_eq!(phi.r_max(), 2.0);
        assert!((phi.value(0.75) - 0.75).abs() < 1e-12);
        std::fs::write(&path, "0 0\n1 x\n").unwrap();
        assert!(matches!(
            PhiModel::from_table_file(&path, None),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
