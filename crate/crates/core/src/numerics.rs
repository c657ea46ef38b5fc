//! Small numerical kernels shared by the modules: adaptive Gauss-Kronrod
//! quadrature, a bracketed root finder, least-squares line fits and the
//! compactly supported bump used for mollifiers and test functions.

use std::sync::OnceLock;

use crate::error::{Error, Result};

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1] (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 2000;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate drops below `abs_tol`. The integrand is never evaluated at the
/// endpoints, so integrable endpoint singularities are fine.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, abs_tol).map(|v| -v);
    }
    let (v0, e0) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v0, e0)];
    let mut total_err = e0;
    while total_err > abs_tol {
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureFailure {
                a,
                b,
                tol: abs_tol,
                estimate: total_err,
            });
        }
        let (worst, _) =
            intervals
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, iv)| {
                    if iv.3 > acc.1 {
                        (i, iv.3)
                    } else {
                        acc
                    }
                });
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(Error::QuadratureFailure {
                a,
                b,
                tol: abs_tol,
                estimate: total_err,
            });
        }
        let (vl, el) = gk15(&f, lo, mid);
        let (vr, er) = gk15(&f, mid, hi);
        intervals.push((lo, mid, vl, el));
        intervals.push((mid, hi, vr, er));
        total_err = intervals.iter().map(|iv| iv.3).sum();
        if !total_err.is_finite() {
            return Err(Error::QuadratureFailure {
                a,
                b,
                tol: abs_tol,
                estimate: total_err,
            });
        }
    }
    // sum in interval order so the result does not depend on bisection history
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(intervals.iter().map(|iv| iv.2).sum())
}

/// Brent's method on a sign-changing bracket `[a, b]`.
pub fn brent<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::RootBracketFailure(format!(
            "f({a}) = {fa:e} and f({b}) = {fb:e} have the same sign"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * m * q0 * (q0 - r) - (b - a) * (r - 1.0)),
                    (q0 - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::RootBracketFailure(
        "Brent iteration limit reached".into(),
    ))
}

/// Ordinary least-squares line `y = intercept + slope * x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn bump_raw(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| integrate(bump_raw, -1.0, 1.0, 1e-15).expect("bump mass quadrature"))
}

/// Unit-mass bump `j(s) = C exp(-1/(1 - s^2))` supported on `|s| < 1`.
pub fn bump(s: f64) -> f64 {
    bump_raw(s) / bump_mass()
}

pub fn bump_derivative(s: f64) -> f64 {
    if s.abs() < 1.0 {
        let one_minus = 1.0 - s * s;
        bump(s) * (-2.0 * s / (one_minus * one_minus))
    } else {
        0.0
    }
}

/// ∫_{-1}^{s} j, the cumulative mass of the unit bump.
pub fn bump_integral(s: f64) -> f64 {
    if s <= -1.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else if s <= 0.0 {
        integrate(bump, -1.0, s, 1e-15).expect("bump quadrature")
    } else {
        1.0 - integrate(bump, s, 1.0, 1e-15).expect("bump quadrature")
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-13);
        let v = integrate(|x| x * x, 3.0, 0.0, 1e-12).unwrap();
        assert!((v + 9.0).abs() < 1e-13);
    }

    #[test]
    fn integrates_endpoint_singularity() {
        let v = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn quadrature_failure_reported() {
        let r = integrate(|x: f64| 1.0 / x, 0.0, 1.0, 1e-10);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }

    #[test]
    fn brent_finds_cubic_root() {
        let x = brent(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((x - 2f64.cbrt()).abs() < 1e-13);
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn bump_has_unit_mass() {
        let m = integrate(bump, -1.0, 1.0, 1e-14).unwrap();
        assert!((m - 1.0).abs() < 1e-13);
        assert_eq!(bump(1.0), 0.0);
        let h = 1e-6;
        let fd = (bump(0.3 + h) - bump(0.3 - h)) / (2.0 * h);
        assert!((fd - bump_derivative(0.3)).abs() < 1e-8);
        assert_eq!(bump_integral(-2.0), 0.0);
        assert!((bump_integral(0.0) - 0.5).abs() < 1e-14);
        let fd = (bump_integral(0.4 + h) - bump_integral(0.4 - h)) / (2.0 * h);
        assert!((fd - bump(0.4)).abs() < 1e-8);
    }

    #[test]
    fn line_fit_recovers_slope() {
        let xs = linspace(0.0, 1.0, 11);
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.3 * x).collect();
        let (s, c) = fit_line(&xs, &ys).unwrap();
        assert!((s + 0.3).abs() < 1e-14 && (c - 2.0).abs() < 1e-14);
    }
}
