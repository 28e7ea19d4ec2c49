//! Adaptive Cash–Karp 4(5) stepping with sign-change bracketing on the
//! switching function f(x,y) = y and bisection refinement of the event.
//!
//! The scenario fields are polynomial and mild; event sharpness, not
//! accuracy, is the binding requirement, so the embedded pair runs at a
//! tight tolerance and every Σ-crossing is polished down to `TOL_EVENT`.

use crate::error::{Error, Result};
use crate::field::{FlowEvent, FlowEventKind, Point, PolynomialField, Window, TOL_EVENT};

const RTOL: f64 = 1e-11;
const ATOL: f64 = 1e-12;
const SAFETY: f64 = 0.9;
const MAX_STEPS: usize = 2_000_000;

// Cash–Karp tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 3.0 / 10.0;
const A42: f64 = -9.0 / 10.0;
const A43: f64 = 6.0 / 5.0;
const A51: f64 = -11.0 / 54.0;
const A52: f64 = 5.0 / 2.0;
const A53: f64 = -70.0 / 27.0;
const A54: f64 = 35.0 / 27.0;
const A61: f64 = 1631.0 / 55296.0;
const A62: f64 = 175.0 / 512.0;
const A63: f64 = 575.0 / 13824.0;
const A64: f64 = 44275.0 / 110592.0;
const A65: f64 = 253.0 / 4096.0;
const B5: [f64; 6] = [
    37.0 / 378.0,
    0.0,
    250.0 / 621.0,
    125.0 / 594.0,
    0.0,
    512.0 / 1771.0,
];
const B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    1.0 / 4.0,
];

fn rhs(field: &PolynomialField, dir: f64, p: Point) -> [f64; 2] {
    let v = [field.px().eval(p[0], p[1]), field.py().eval(p[0], p[1])];
    [dir * v[0], dir * v[1]]
}

/// One Cash–Karp step of size `h`; returns (5th order solution, error estimate).
fn ck_step(field: &PolynomialField, dir: f64, p: Point, h: f64) -> ([f64; 2], f64) {
    let k1 = rhs(field, dir, p);
    let k2 = rhs(field, dir, [p[0] + h * A21 * k1[0], p[1] + h * A21 * k1[1]]);
    let k3 = rhs(
        field,
        dir,
        [
            p[0] + h * (A31 * k1[0] + A32 * k2[0]),
            p[1] + h * (A31 * k1[1] + A32 * k2[1]),
        ],
    );
    let k4 = rhs(
        field,
        dir,
        [
            p[0] + h * (A41 * k1[0] + A42 * k2[0] + A43 * k3[0]),
            p[1] + h * (A41 * k1[1] + A42 * k2[1] + A43 * k3[1]),
        ],
    );
    let k5 = rhs(
        field,
        dir,
        [
            p[0] + h * (A51 * k1[0] + A52 * k2[0] + A53 * k3[0] + A54 * k4[0]),
            p[1] + h * (A51 * k1[1] + A52 * k2[1] + A53 * k3[1] + A54 * k4[1]),
        ],
    );
    let k6 = rhs(
        field,
        dir,
        [
            p[0] + h * (A61 * k1[0] + A62 * k2[0] + A63 * k3[0] + A64 * k4[0] + A65 * k5[0]),
            p[1] + h * (A61 * k1[1] + A62 * k2[1] + A63 * k3[1] + A64 * k4[1] + A65 * k5[1]),
        ],
    );
    let ks = [k1, k2, k3, k4, k5, k6];
    let mut y5 = p;
    let mut err = [0.0f64; 2];
    for (i, k) in ks.iter().enumerate() {
        y5[0] += h * B5[i] * k[0];
        y5[1] += h * B5[i] * k[1];
        err[0] += h * (B5[i] - B4[i]) * k[0];
        err[1] += h * (B5[i] - B4[i]) * k[1];
    }
    let scale0 = ATOL + RTOL * p[0].abs().max(y5[0].abs());
    let scale1 = ATOL + RTOL * p[1].abs().max(y5[1].abs());
    let e = ((err[0] / scale0).powi(2) + (err[1] / scale1).powi(2)).sqrt() / 2f64.sqrt();
    (y5, e)
}

/// Integrate until f = y changes sign (bisected to `|y| <= TOL_EVENT`),
/// the window is left, or the horizon elapses.
pub fn flow_to_event(
    field: &PolynomialField,
    start: Point,
    time_dir: f64,
    window: Window,
    horizon: f64,
) -> Result<(Vec<(f64, Point)>, FlowEvent)> {
    if horizon < 0.0 || !horizon.is_finite() {
        return Err(Error::Contract("horizon must be finite and >= 0".into()));
    }
    let dir = if time_dir >= 0.0 { 1.0 } else { -1.0 };
    let mut arc = vec![(0.0, start)];
    if horizon == 0.0 {
        return Ok((
            arc,
            FlowEvent {
                kind: FlowEventKind::HorizonReached,
                point: start,
                time: 0.0,
            },
        ));
    }

    let mut t = 0.0f64;
    let mut p = start;
    // Established sign of y away from the line; 0 while still launching.
    let mut sign: f64 = if p[1].abs() > TOL_EVENT {
        p[1].signum()
    } else {
        0.0
    };

    let v0 = rhs(field, dir, p);
    let speed0 = (v0[0] * v0[0] + v0[1] * v0[1]).sqrt().max(1e-9);
    let mut h = (0.01 / speed0).min(horizon).max(1e-12);
    let mut starved = 0usize;

    let diag = ((window.x[1] - window.x[0]).powi(2) + (window.y[1] - window.y[0]).powi(2)).sqrt();
    for _ in 0..MAX_STEPS {
        if t >= horizon {
            let ev = FlowEvent {
                kind: FlowEventKind::HorizonReached,
                point: p,
                time: dir * t,
            };
            return Ok((arc, ev));
        }
        // Cap the spatial step at a few percent of the window so a single
        // step cannot jump across the line and out of the window at once.
        let v = rhs(field, dir, p);
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if speed > 0.0 {
            h = h.min(0.03 * diag / speed);
        }
        h = h.min(horizon - t).max(1e-15);
        let (pn, e) = ck_step(field, dir, p, h);
        if e > 1.0 {
            let shrink = (SAFETY * e.powf(-0.25)).max(0.1);
            h *= shrink;
            starved += 1;
            if h < 1e-14 * t.abs().max(1.0) || starved > 10_000 {
                return starving_event(p, t, dir);
            }
            continue;
        }
        starved = 0;

        // Σ-crossing: strict sign change against the established sign.
        // Checked before the window test: the crossing happens first
        // whenever both fire inside one capped step.
        if sign != 0.0 && pn[1] * sign < -TOL_EVENT {
            let (tau, pe) = refine_sigma(field, dir, p, h, sign)?;
            if window.contains(pe, 1e-9) {
                arc.push((dir * (t + tau), pe));
                let ev = FlowEvent {
                    kind: FlowEventKind::HitSigma,
                    point: pe,
                    time: dir * (t + tau),
                };
                return Ok((arc, ev));
            }
        }

        // Window exit: bisect the crossing on the step.
        if !window.contains(pn, 0.0) {
            let (tau, pe) = bisect_predicate(field, dir, p, h, |q| window.contains(q, 0.0));
            arc.push((dir * (t + tau), pe));
            let ev = FlowEvent {
                kind: FlowEventKind::LeftDomainWindow,
                point: pe,
                time: dir * (t + tau),
            };
            return Ok((arc, ev));
        }
        if sign == 0.0 && pn[1].abs() > TOL_EVENT {
            sign = pn[1].signum();
        }

        t += h;
        p = pn;
        arc.push((dir * t, p));
        let grow = if e > 0.0 {
            (SAFETY * e.powf(-0.2)).min(5.0)
        } else {
            5.0
        };
        h *= grow.max(0.2);
    }
    Err(Error::BudgetExhausted(
        "integration exceeded the maximum step count".into(),
    ))
}

fn starving_event(p: Point, t: f64, dir: f64) -> Result<(Vec<(f64, Point)>, FlowEvent)> {
    if p[1].abs() <= 1e-6 {
        Ok((
            vec![(dir * t, p)],
            FlowEvent {
                kind: FlowEventKind::TangentialApproach,
                point: [p[0], 0.0],
                time: dir * t,
            },
        ))
    } else {
        Err(Error::Domain(format!(
            "step-size underflow away from the switching line at ({}, {})",
            p[0], p[1]
        )))
    }
}

/// Bisect the step fraction where `inside` flips from true to false; one
/// Cash–Karp substep per probe is accurate enough at event scale.
fn bisect_predicate(
    field: &PolynomialField,
    dir: f64,
    p: Point,
    h: f64,
    inside: impl Fn(Point) -> bool,
) -> (f64, Point) {
    let mut lo = 0.0f64;
    let mut hi = h;
    let mut pe = ck_step(field, dir, p, h).0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let pm = ck_step(field, dir, p, mid).0;
        if inside(pm) {
            lo = mid;
        } else {
            hi = mid;
            pe = pm;
        }
    }
    (hi, pe)
}

fn refine_sigma(
    field: &PolynomialField,
    dir: f64,
    p: Point,
    h: f64,
    sign: f64,
) -> Result<(f64, Point)> {
    // Invariant: y keeps the launch sign at fraction `lo`, has crossed at `hi`.
    let mut lo = 0.0f64;
    let mut hi = h;
    let mut p_hi = ck_step(field, dir, p, h).0;
    for _ in 0..200 {
        if p_hi[1].abs() <= TOL_EVENT {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let pm = ck_step(field, dir, p, mid).0;
        if pm[1] * sign >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
            p_hi = pm;
        }
    }
    // Snap exactly onto Σ; the residual is below the event tolerance.
    Ok((hi, [p_hi[0], 0.0]))
}

/// Adaptive Simpson quadrature, used for sliding-time integrals.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 40)
}

/// Integrate the scalar ODE x' = v(x) with adaptive RK45 until `t_max`
/// or until `stop` fires; returns (samples of (t, x), stopped_early).
pub fn scalar_flow(
    v: &impl Fn(f64) -> f64,
    x0: f64,
    t_max: f64,
    stop: &impl Fn(f64) -> bool,
) -> (Vec<(f64, f64)>, bool) {
    let mut t = 0.0;
    let mut x = x0;
    let mut out = vec![(0.0, x0)];
    let mut h = (t_max / 256.0).max(1e-9);
    for _ in 0..500_000 {
        if t >= t_max {
            return (out, false);
        }
        h = h.min(t_max - t);
        // RK4 with step doubling for error control.
        let full = rk4_scalar(v, x, h);
        let half = rk4_scalar(v, rk4_scalar(v, x, 0.5 * h), 0.5 * h);
        let err = (full - half).abs();
        let tol = 1e-12 + 1e-11 * x.abs();
        if err > tol && h > 1e-13 {
            h *= 0.5;
            continue;
        }
        t += h;
        x = half;
        out.push((t, x));
        if stop(x) {
            return (out, true);
        }
        if err < 0.01 * tol {
            h *= 2.0;
        }
    }
    (out, false)
}

fn rk4_scalar(v: &impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let k1 = v(x);
    let k2 = v(x + 0.5 * h * k1);
    let k3 = v(x + 0.5 * h * k2);
    let k4 = v(x + h * k3);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_integrates_smooth_functions() {
        let val = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert_abs_diff_eq!(val, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn scalar_flow_matches_exponential() {
        let (samples, stopped) = scalar_flow(&|x| -x, 1.0, 2.0, &|_| false);
        assert!(!stopped);
        let (t, x) = *samples.last().unwrap();
        assert_abs_diff_eq!(x, (-t).exp(), epsilon = 1e-8);
    }
}
