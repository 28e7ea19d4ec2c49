//! Registry of the built-in systems and their candidate sets, with the
//! expected-fact tables the validation command and the acceptance tests
//! run against.

use crate::error::{Error, Result};
use crate::field::PolynomialField;
use crate::poly::{poly_from_roots, Poly};
use crate::region::{RegionSpec, TOL_MEM};
use crate::sigma::Psvf;

/// A named system: the PSVF, its candidate region, the distinguished
/// tangency its reachability funnel routes through, and (where a sign
/// correction was forced) the verbatim lower field it replaces.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub psvf: Psvf,
    pub region: RegionSpec,
    pub region_name: &'static str,
    /// x-coordinate of the tangency every trajectory funnels through.
    pub funnel_x: f64,
    /// The published lower field before the sign correction (`z`, `z1`).
    pub paper_verbatim_lower: Option<PolynomialField>,
}

/// Exact fold positions of the constructed two-lobe scenario.
pub mod z2_constants {
    /// Fold positions p0..p4 on the switching line.
    pub const P0: f64 = -9.0 / 8.0;
    pub const P1: f64 = -1.0;
    pub const P2: f64 = 0.0;
    pub const P3: f64 = 1.0;
    pub const P4: f64 = 5.0 / 4.0;
    /// Skew of the lower field (root far outside the window) chosen so the
    /// lower boundary orbit closes up at both corners ±√2.
    pub const MU: f64 = 28.0 / 261.0;
    /// Scale of the lower field relative to the upper one; the resulting
    /// Filippov numerator has simple roots near -0.9533 and 1.1166.
    pub const LOWER_SCALE: f64 = 3.0;
}

pub fn builtin(name: &str) -> Result<Scenario> {
    match name {
        "z" => Ok(scenario_z()),
        "z1" => Ok(scenario_z1()),
        "z2" => Ok(scenario_z2()),
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["z", "z1", "z2"];

/// Theorem-level chaotic system: X = (1, -2x), Y = (-2, 2x - 4x³)
/// (sign-corrected), with the pinched region Λ between y = x⁴/2 - x²/2
/// and y = 1 - x².
fn scenario_z() -> Scenario {
    let upper = PolynomialField::graph(1.0, Poly::new(vec![0.0, -2.0]));
    let lower = PolynomialField::graph(-2.0, Poly::new(vec![0.0, 2.0, 0.0, -4.0]));
    let psvf = Psvf::new(upper, lower, [-1.0, 1.0]);
    let region = RegionSpec::new(
        [-1.0, 1.0],
        Poly::new(vec![1.0, 0.0, -1.0]),
        Poly::new(vec![0.0, 0.0, -0.5, 0.0, 0.5]),
        TOL_MEM,
    );
    Scenario {
        name: "z",
        psvf,
        region,
        region_name: "lambda",
        funnel_x: 0.0,
        paper_verbatim_lower: Some(PolynomialField::graph(
            -2.0,
            Poly::new(vec![0.0, -2.0, 0.0, 4.0]),
        )),
    }
}

/// Oriented-minimality example: X = (1, 1 - 2x),
/// Y = (-1, -(x-2)(4x²-7x-22)) (sign-corrected), with Λ₁ between
/// (x-4)(x-2)²(x+3) and -(x-4)(x+3) over [-3, 4].
fn scenario_z1() -> Scenario {
    let upper = PolynomialField::graph(1.0, Poly::new(vec![1.0, -2.0]));
    // (x-2)(4x²-7x-22) = 4x³ - 15x² - 8x + 44; corrected sign flips it.
    let lower = PolynomialField::graph(-1.0, Poly::new(vec![-44.0, 8.0, 15.0, -4.0]));
    let psvf = Psvf::new(upper, lower, [-3.0, 4.0]);
    // Upper boundary -(x-4)(x+3) = -x² + x + 12; lower (x-4)(x-2)²(x+3).
    let upper_curve = Poly::new(vec![12.0, 1.0, -1.0]);
    let lower_curve = poly_from_roots(1.0, &[4.0, 2.0, 2.0, -3.0]);
    let region = RegionSpec::new([-3.0, 4.0], upper_curve, lower_curve, TOL_MEM);
    Scenario {
        name: "z1",
        psvf,
        region,
        region_name: "lambda1",
        funnel_x: 2.0,
        paper_verbatim_lower: Some(PolynomialField::graph(
            -1.0,
            Poly::new(vec![44.0, -8.0, -15.0, 4.0]),
        )),
    }
}

/// Constructed two-lobe scenario realizing the five-tangency signature:
/// X = (-1, x³ - x) and Y = (1, 3(x + 9/8)(x - 5/4)(1 + 28x/261)·x(x² - 1)).
///
/// The upper orbit through the visible X-fold at the origin is
/// y = x²/2 - x⁴/4 with corners at ±√2; the skew 28/261 is the unique
/// value making the lower orbit through one corner close up at the other.
fn scenario_z2() -> Scenario {
    let sqrt2 = 2.0f64.sqrt();
    let w = Poly::new(vec![0.0, -1.0, 0.0, 1.0]); // x³ - x
    let upper = PolynomialField::graph(-1.0, w);

    let v = z2_lower_component();
    let lower = PolynomialField::graph(1.0, v.clone());

    let psvf = Psvf::new(upper, lower, [-sqrt2, sqrt2]);

    // Upper boundary: orbit of X through (0, 0): y = x²/2 - x⁴/4.
    let upper_curve = Poly::new(vec![0.0, 0.0, 0.5, 0.0, -0.25]);
    // Lower boundary: orbit of Y through (±√2, 0).
    let big_v = v.antiderivative();
    let lower_curve = big_v.add_constant(-big_v.eval(sqrt2));
    let region = RegionSpec::new([-sqrt2, sqrt2], upper_curve, lower_curve, TOL_MEM);
    Scenario {
        name: "z2",
        psvf,
        region,
        region_name: "lambda2",
        funnel_x: 0.0,
        paper_verbatim_lower: None,
    }
}

/// Vertical component of the z2 lower field, built from its factors.
fn z2_lower_component() -> Poly {
    use z2_constants::*;
    let factors = poly_from_roots(LOWER_SCALE, &[P0, P4, 0.0, P1, P3]);
    let skew = Poly::new(vec![1.0, MU]);
    factors.mul(&skew)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigma::{SigmaLabel, Stability, Visibility};
    use approx::assert_abs_diff_eq;

    #[test]
    fn unknown_name_is_rejected() {
        assert!(builtin("z3").is_err());
    }

    #[test]
    fn boundary_curves_are_orbits_of_their_own_fields() {
        for name in BUILTIN_NAMES {
            let sc = builtin(name).unwrap();
            let [a, b] = sc.region.interval;
            // Upper curve: an orbit of the upper field through its left end.
            let x0 = 0.5 * (a + b);
            let up = sc
                .psvf
                .upper
                .orbit_through([x0, sc.region.upper.eval(x0)])
                .unwrap();
            let lo = sc
                .psvf
                .lower
                .orbit_through([x0, sc.region.lower.eval(x0)])
                .unwrap();
            for k in 0..=40 {
                let x = a + (b - a) * k as f64 / 40.0;
                assert_abs_diff_eq!(
                    up.height(x).unwrap(),
                    sc.region.upper.eval(x),
                    epsilon = 1e-8
                );
                assert_abs_diff_eq!(
                    lo.height(x).unwrap(),
                    sc.region.lower.eval(x),
                    epsilon = 1e-8
                );
            }
        }
    }

    #[test]
    fn z2_signature_checklist() {
        let sc = builtin("z2").unwrap();
        let [a, b] = sc.psvf.window;
        let tangencies = sc.psvf.find_tangencies(a, b).unwrap();
        assert_eq!(tangencies.len(), 5);
        use z2_constants::*;
        let expect = [
            (P0, None, Some(Visibility::Invisible)),
            (P1, Some(Visibility::Invisible), Some(Visibility::Visible)),
            (P2, Some(Visibility::Visible), Some(Visibility::Invisible)),
            (P3, Some(Visibility::Invisible), Some(Visibility::Visible)),
            (P4, None, Some(Visibility::Invisible)),
        ];
        for (t, (x, up, lo)) in tangencies.iter().zip(expect) {
            assert_abs_diff_eq!(t.x, x, epsilon = 1e-9);
            assert_eq!(t.fields.upper, up, "upper visibility at {x}");
            assert_eq!(t.fields.lower, lo, "lower visibility at {x}");
            assert!(!t.singular);
        }

        // Segment layout: sew-down, slide, escape, slide, escape, sew-up.
        let segs = sc.psvf.segment_sigma(a, b).unwrap();
        let labels: Vec<_> = segs.iter().map(|s| s.label).collect();
        assert_eq!(
            labels,
            vec![
                SigmaLabel::SewingDown,
                SigmaLabel::Sliding,
                SigmaLabel::Escaping,
                SigmaLabel::Sliding,
                SigmaLabel::Escaping,
                SigmaLabel::SewingUp,
            ]
        );

        // Exactly one pseudo-equilibrium strictly between p1 and p2
        // (attracting) and one repelling one inside (p3, p4).
        let pes = sc.psvf.pseudo_equilibria(a, b).unwrap();
        assert_eq!(pes.len(), 2);
        assert!(pes[0].x > P1 && pes[0].x < P2);
        assert_eq!(pes[0].stability, Stability::Attracting);
        assert!(pes[1].x > P3 && pes[1].x < P4);
        assert_eq!(pes[1].stability, Stability::Repelling);
        // Independent oracle: the equilibria are roots of the cubic
        // 3(x + 9/8)(x - 5/4)(1 + 28x/261) + 1.
        let cubic = poly_from_roots(LOWER_SCALE, &[P0, P4])
            .mul(&Poly::new(vec![1.0, MU]))
            .add_constant(1.0);
        let left = crate::poly::bisect_root(&cubic, -1.0, 0.0);
        let right = crate::poly::bisect_root(&cubic, 1.0, 1.25);
        assert_abs_diff_eq!(pes[0].x, left, epsilon = 1e-9);
        assert_abs_diff_eq!(pes[1].x, right, epsilon = 1e-9);

        // The lower boundary orbit closes up at both corners and stays
        // strictly below the line in between.
        let sqrt2 = 2.0f64.sqrt();
        assert_abs_diff_eq!(sc.region.lower.eval(sqrt2), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sc.region.lower.eval(-sqrt2), 0.0, epsilon = 1e-12);
        for k in 1..200 {
            let x = -sqrt2 + 2.0 * sqrt2 * k as f64 / 200.0;
            assert!(sc.region.lower.eval(x) < -1e-4, "lower pokes up at {x}");
        }
        // Upper boundary touches the line only at the visible X-fold.
        assert_abs_diff_eq!(sc.region.upper.eval(0.0), 0.0);
        for k in 1..200 {
            let x = -sqrt2 + 2.0 * sqrt2 * k as f64 / 200.0;
            if x.abs() > 1e-3 {
                assert!(sc.region.upper.eval(x) > 0.0);
            }
        }
    }

    #[test]
    fn z2_area_is_positive() {
        assert!(builtin("z2").unwrap().region.area() > 0.5);
    }
}
