//! Classification of the switching line y = 0: sewing/sliding/escaping
//! segments, tangency detection with visibility data, the Filippov
//! convex-combination field on sliding and escaping segments, and its
//! pseudo-equilibria.

use crate::error::{Error, Result};
use crate::field::PolynomialField;
use crate::poly::{Poly, RootOnInterval, TOL_ROOT};

/// A piecewise smooth vector field: `upper` acts on y >= 0, `lower` on
/// y <= 0, glued along the switching line f(x,y) = y.
#[derive(Clone, Debug)]
pub struct Psvf {
    pub upper: PolynomialField,
    pub lower: PolynomialField,
    /// x-interval of interest on the switching line.
    pub window: [f64; 2],
}

/// Pointwise label of the switching line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaLabel {
    /// Both fields cross upward: X.f > 0 and Y.f > 0.
    SewingUp,
    /// Both fields cross downward.
    SewingDown,
    /// Both fields point at the line: X.f < 0 < Y.f; forward motion confined.
    Sliding,
    /// Both fields point away: Y.f < 0 < X.f; forward motion set-valued.
    Escaping,
    /// One of the Lie derivatives vanishes within the root tolerance.
    Tangency,
}

#[derive(Clone, Copy, Debug)]
pub struct SigmaClassification {
    pub label: SigmaLabel,
    pub at: f64,
    pub upper_lie1: f64,
    pub lower_lie1: f64,
}

/// Visibility of a fold, decided by the second Lie derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Visibility {
    Visible,
    Invisible,
    /// Second Lie derivative below tolerance: no guess is made.
    Degenerate,
}

/// Which of the two fields are tangent at the point.
#[derive(Clone, Copy, Debug, Default)]
pub struct TangentFields {
    pub upper: Option<Visibility>,
    pub lower: Option<Visibility>,
}

#[derive(Clone, Copy, Debug)]
pub struct TangencyInfo {
    pub x: f64,
    pub fields: TangentFields,
    /// Singular means invisible for both fields simultaneously.
    pub singular: bool,
    /// 2 for folds; higher contact is flagged degenerate instead.
    pub order: u32,
}

impl TangencyInfo {
    pub fn is_fold_of_upper(&self) -> bool {
        self.fields.upper.is_some()
    }
    pub fn is_fold_of_lower(&self) -> bool {
        self.fields.lower.is_some()
    }
}

/// The Filippov field sampled at one sliding/escaping point.
#[derive(Clone, Copy, Debug)]
pub struct SlidingSample {
    pub x: f64,
    /// Convex weight on the upper field, `Y.f / (Y.f - X.f)`.
    pub lambda: f64,
    /// Horizontal component of the combined field (the vertical one is
    /// zero by construction).
    pub velocity: f64,
    pub regime: SlidingRegime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlidingRegime {
    Sliding,
    Escaping,
}

/// One uniform piece of the segmented switching line.
#[derive(Clone, Copy, Debug)]
pub struct SigmaSegment {
    pub from: f64,
    pub to: f64,
    pub label: SigmaLabel,
}

/// A zero of the Filippov field inside a sliding or escaping segment.
#[derive(Clone, Copy, Debug)]
pub struct PseudoEquilibrium {
    pub x: f64,
    pub stability: Stability,
    pub regime: SlidingRegime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    Attracting,
    Repelling,
    /// On a segment boundary, or no velocity sign change across the root.
    BoundaryDegenerate,
}

impl Psvf {
    pub fn new(upper: PolynomialField, lower: PolynomialField, window: [f64; 2]) -> Self {
        assert!(
            window[0] < window[1] && window.iter().all(|v| v.is_finite()),
            "window must be finite and nonempty"
        );
        Psvf { upper, lower, window }
    }

    /// The negated PSVF (-X, -Y); sliding and escaping swap under it.
    pub fn negated(&self) -> Psvf {
        Psvf {
            upper: PolynomialField::new(self.upper.px().scale(-1.0), self.upper.py().scale(-1.0)),
            lower: PolynomialField::new(self.lower.px().scale(-1.0), self.lower.py().scale(-1.0)),
            window: self.window,
        }
    }

    /// X.f restricted to the line, as a univariate polynomial.
    pub fn upper_lie1(&self) -> Poly {
        self.upper.lie1()
    }

    pub fn lower_lie1(&self) -> Poly {
        self.lower.lie1()
    }

    pub fn classify_point(&self, x: f64) -> SigmaClassification {
        let xf = self.upper_lie1().eval(x);
        let yf = self.lower_lie1().eval(x);
        let tol = self.lie_tol();
        let label = if xf.abs() <= tol || yf.abs() <= tol {
            SigmaLabel::Tangency
        } else if xf > 0.0 && yf > 0.0 {
            SigmaLabel::SewingUp
        } else if xf < 0.0 && yf < 0.0 {
            SigmaLabel::SewingDown
        } else if xf < 0.0 && yf > 0.0 {
            SigmaLabel::Sliding
        } else {
            SigmaLabel::Escaping
        };
        SigmaClassification {
            label,
            at: x,
            upper_lie1: xf,
            lower_lie1: yf,
        }
    }

    /// Tolerance for treating a Lie-derivative value as zero, scaled to the
    /// polynomial's magnitude over the window.
    fn lie_tol(&self) -> f64 {
        let m = self.window[0].abs().max(self.window[1].abs()).max(1.0);
        let mag = |p: &Poly| -> f64 {
            p.coeffs()
                .iter()
                .enumerate()
                .map(|(k, c)| c.abs() * m.powi(k as i32))
                .sum::<f64>()
        };
        let scale = mag(&self.upper_lie1()).max(mag(&self.lower_lie1())).max(1.0);
        1e-9 * scale
    }

    /// Partition `[a, b]` into maximal subintervals of uniform label.
    /// Boundaries are isolated roots of (X.f)(Y.f).
    pub fn segment_sigma(&self, a: f64, b: f64) -> Result<Vec<SigmaSegment>> {
        if a >= b {
            return Ok(vec![]);
        }
        let mut cuts: Vec<f64> = vec![];
        for p in [self.upper_lie1(), self.lower_lie1()] {
            if p.is_zero() {
                return Err(Error::DegenerateBoundary {
                    x: a,
                    detail: "a Lie derivative vanishes identically on the window".into(),
                });
            }
            for r in p.roots_on(a, b) {
                cuts.push(r.x);
            }
        }
        cuts.retain(|x| *x > a + TOL_ROOT && *x < b - TOL_ROOT);
        cuts.sort_by(|u, v| u.partial_cmp(v).unwrap());
        cuts.dedup_by(|u, v| (*u - *v).abs() <= 1e-9 * (b - a).max(1.0));

        let mut bounds = vec![a];
        bounds.extend(cuts);
        bounds.push(b);
        let mut segments = vec![];
        for w in bounds.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let c = self.classify_point(mid);
            if c.label == SigmaLabel::Tangency {
                return Err(Error::DegenerateBoundary {
                    x: mid,
                    detail: "midpoint classification degenerate; root isolation budget exceeded"
                        .into(),
                });
            }
            segments.push(SigmaSegment {
                from: lo,
                to: hi,
                label: c.label,
            });
        }
        // Merge consecutive intervals whose labels agree (a cut produced by
        // one field's tangency need not change the combined label).
        let mut merged: Vec<SigmaSegment> = vec![];
        for s in segments {
            match merged.last_mut() {
                Some(last) if last.label == s.label && self.is_plain_cut(last.to) => {
                    last.to = s.to;
                }
                _ => merged.push(s),
            }
        }
        Ok(merged)
    }

    /// True when the point is not a tangency of either field (so two equal
    /// labels around it may be merged).
    fn is_plain_cut(&self, x: f64) -> bool {
        let tol = self.lie_tol();
        self.upper_lie1().eval(x).abs() > tol && self.lower_lie1().eval(x).abs() > tol
    }

    /// All tangency points of either field on `[a, b]`, classified via
    /// second Lie derivatives; coincident roots merge into one record.
    pub fn find_tangencies(&self, a: f64, b: f64) -> Result<Vec<TangencyInfo>> {
        let tol_merge = 1e-9 * (b - a).max(1.0);
        let mut infos: Vec<TangencyInfo> = vec![];
        let sides = [
            (true, self.upper_lie1(), &self.upper),
            (false, self.lower_lie1(), &self.lower),
        ];
        for (is_upper, lie1, field) in sides {
            for RootOnInterval { x, .. } in lie1.roots_on(a, b) {
                let l2 = field.lie_derivative(2, x)?;
                let tol2 = self.lie_tol();
                let vis = if l2.abs() <= tol2 {
                    Visibility::Degenerate
                } else if is_upper {
                    // Upper fold: visible iff the orbit curves back up.
                    if l2 > 0.0 {
                        Visibility::Visible
                    } else {
                        Visibility::Invisible
                    }
                } else if l2 < 0.0 {
                    Visibility::Visible
                } else {
                    Visibility::Invisible
                };
                let order = if vis == Visibility::Degenerate { 3 } else { 2 };
                let slot = infos.iter_mut().find(|t| (t.x - x).abs() <= tol_merge);
                let info = match slot {
                    Some(t) => t,
                    None => {
                        infos.push(TangencyInfo {
                            x,
                            fields: TangentFields::default(),
                            singular: false,
                            order: 2,
                        });
                        infos.last_mut().unwrap()
                    }
                };
                if is_upper {
                    info.fields.upper = Some(vis);
                } else {
                    info.fields.lower = Some(vis);
                }
                info.order = info.order.max(order);
            }
        }
        for info in &mut infos {
            info.singular = matches!(info.fields.upper, Some(Visibility::Invisible))
                && matches!(info.fields.lower, Some(Visibility::Invisible));
        }
        infos.sort_by(|u, v| u.x.partial_cmp(&v.x).unwrap());
        Ok(infos)
    }

    /// Numerator of the Filippov velocity: `Y.f·X₁ - X.f·Y₁` on the line.
    pub fn filippov_numerator(&self) -> Poly {
        let x1 = self.upper.px().at_y0();
        let y1 = self.lower.px().at_y0();
        self.lower_lie1()
            .mul(&x1)
            .sub(&self.upper_lie1().mul(&y1))
    }

    /// Denominator `Y.f - X.f`; positive on sliding, negative on escaping.
    pub fn filippov_denominator(&self) -> Poly {
        self.lower_lie1().sub(&self.upper_lie1())
    }

    /// Raw Filippov velocity at `x`, defined wherever the denominator is
    /// nonzero (no regime check).
    pub fn filippov_velocity(&self, x: f64) -> f64 {
        self.filippov_numerator().eval(x) / self.filippov_denominator().eval(x)
    }

    /// The Filippov convex combination at a sliding or escaping point.
    pub fn sliding_field(&self, x: f64) -> Result<SlidingSample> {
        let c = self.classify_point(x);
        let regime = match c.label {
            SigmaLabel::Sliding => SlidingRegime::Sliding,
            SigmaLabel::Escaping => SlidingRegime::Escaping,
            other => {
                return Err(Error::Contract(format!(
                    "sliding field requested at x = {x} which classifies as {other:?}"
                )))
            }
        };
        let lambda = c.lower_lie1 / (c.lower_lie1 - c.upper_lie1);
        let x1 = self.upper.px().eval(x, 0.0);
        let y1 = self.lower.px().eval(x, 0.0);
        let velocity = lambda * x1 + (1.0 - lambda) * y1;
        Ok(SlidingSample {
            x,
            lambda,
            velocity,
            regime,
        })
    }

    /// Pseudo-equilibria: isolated roots of the Filippov numerator inside
    /// the open sliding/escaping subintervals of `[a, b]`.
    pub fn pseudo_equilibria(&self, a: f64, b: f64) -> Result<Vec<PseudoEquilibrium>> {
        let segments = self.segment_sigma(a, b)?;
        let numerator = self.filippov_numerator();
        if numerator.is_zero() {
            return Err(Error::DegenerateBoundary {
                x: 0.5 * (a + b),
                detail: "Filippov numerator vanishes identically: degenerate continuum".into(),
            });
        }
        let boundary_tol = 1e-7 * (b - a).max(1.0);
        let mut out = vec![];
        for seg in segments {
            let regime = match seg.label {
                SigmaLabel::Sliding => SlidingRegime::Sliding,
                SigmaLabel::Escaping => SlidingRegime::Escaping,
                _ => continue,
            };
            for root in numerator.roots_on(seg.from, seg.to) {
                if root.x - seg.from <= boundary_tol || seg.to - root.x <= boundary_tol {
                    // At a fold-fold boundary the numerator vanishes
                    // structurally while the Filippov field's limit does
                    // not: no pseudo-equilibrium there. Anything else
                    // parked on a boundary is reported as degenerate.
                    let tol = self.lie_tol();
                    let fold_fold = self.upper_lie1().eval(root.x).abs() <= tol
                        && self.lower_lie1().eval(root.x).abs() <= tol;
                    if !fold_fold {
                        out.push(PseudoEquilibrium {
                            x: root.x,
                            stability: Stability::BoundaryDegenerate,
                            regime,
                        });
                    }
                    continue;
                }
                let probe = (seg.to - seg.from).min(boundary_tol * 100.0) * 0.25;
                let v_left = self.filippov_velocity(root.x - probe);
                let v_right = self.filippov_velocity(root.x + probe);
                let stability = if v_left > 0.0 && v_right < 0.0 {
                    Stability::Attracting
                } else if v_left < 0.0 && v_right > 0.0 {
                    Stability::Repelling
                } else {
                    Stability::BoundaryDegenerate
                };
                out.push(PseudoEquilibrium {
                    x: root.x,
                    stability,
                    regime,
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use approx::assert_abs_diff_eq;

    fn z() -> Psvf {
        scenarios::builtin("z").unwrap().psvf
    }

    fn z1() -> Psvf {
        scenarios::builtin("z1").unwrap().psvf
    }

    #[test]
    fn pointwise_labels_match_figure_layout() {
        let z = z();
        assert_eq!(z.classify_point(-0.5).label, SigmaLabel::Escaping);
        assert_eq!(z.classify_point(0.5).label, SigmaLabel::Sliding);
        assert_eq!(z.classify_point(0.9).label, SigmaLabel::SewingDown);
        assert_eq!(z.classify_point(-0.9).label, SigmaLabel::SewingUp);
        assert_eq!(z.classify_point(0.0).label, SigmaLabel::Tangency);
    }

    #[test]
    fn segmentation_of_the_chaotic_scenario() {
        let z = z();
        let segs = z.segment_sigma(-1.0, 1.0).unwrap();
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert_eq!(segs.len(), 4);
        assert_eq!(segs[0].label, SigmaLabel::SewingUp);
        assert_eq!(segs[1].label, SigmaLabel::Escaping);
        assert_eq!(segs[2].label, SigmaLabel::Sliding);
        assert_eq!(segs[3].label, SigmaLabel::SewingDown);
        assert_abs_diff_eq!(segs[0].to, -inv_sqrt2, epsilon = 1e-9);
        assert_abs_diff_eq!(segs[1].to, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(segs[2].to, inv_sqrt2, epsilon = 1e-9);
    }

    #[test]
    fn segmentation_of_the_oriented_example() {
        let z1 = z1();
        let segs = z1.segment_sigma(-3.0, 4.0).unwrap();
        let s = 401.0f64.sqrt();
        let p_minus = (7.0 - s) / 8.0;
        let p_plus = (7.0 + s) / 8.0;
        let labels: Vec<_> = segs.iter().map(|s| s.label).collect();
        assert_eq!(
            labels,
            vec![
                SigmaLabel::SewingUp,
                SigmaLabel::Escaping,
                SigmaLabel::SewingDown,
                SigmaLabel::Sliding,
                SigmaLabel::SewingDown,
            ]
        );
        assert_abs_diff_eq!(segs[1].from, p_minus, epsilon = 1e-9);
        assert_abs_diff_eq!(segs[1].to, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(segs[3].from, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(segs[3].to, p_plus, epsilon = 1e-9);
    }

    #[test]
    fn identical_pieces_sew_everywhere() {
        let x = PolynomialField::graph(1.0, Poly::new(vec![0.0, -2.0]));
        let psvf = Psvf::new(x.clone(), x, [0.25, 0.75]);
        let segs = psvf.segment_sigma(0.25, 0.75).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].label, SigmaLabel::SewingDown);
    }

    #[test]
    fn tangency_table_of_the_chaotic_scenario() {
        let z = z();
        let tangencies = z.find_tangencies(-1.0, 1.0).unwrap();
        assert_eq!(tangencies.len(), 3);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();

        let left = &tangencies[0];
        assert_abs_diff_eq!(left.x, -inv_sqrt2, epsilon = 1e-9);
        assert!(left.fields.upper.is_none());
        assert_eq!(left.fields.lower, Some(Visibility::Invisible));
        assert!(!left.singular);

        let pinch = &tangencies[1];
        assert_abs_diff_eq!(pinch.x, 0.0, epsilon = 1e-9);
        assert_eq!(pinch.fields.upper, Some(Visibility::Invisible));
        assert_eq!(pinch.fields.lower, Some(Visibility::Visible));
        assert!(!pinch.singular);

        let right = &tangencies[2];
        assert_abs_diff_eq!(right.x, inv_sqrt2, epsilon = 1e-9);
        assert_eq!(right.fields.lower, Some(Visibility::Invisible));
    }

    #[test]
    fn tangency_table_of_the_oriented_example() {
        let z1 = z1();
        let tangencies = z1.find_tangencies(-3.0, 4.0).unwrap();
        assert_eq!(tangencies.len(), 4);
        let s = 401.0f64.sqrt();
        let expect = [
            ((7.0 - s) / 8.0, false, Some(Visibility::Invisible)),
            (0.5, true, None),
            (2.0, false, Some(Visibility::Visible)),
            ((7.0 + s) / 8.0, false, Some(Visibility::Invisible)),
        ];
        for (t, (x, is_upper, lower_vis)) in tangencies.iter().zip(expect) {
            assert_abs_diff_eq!(t.x, x, epsilon = 1e-9);
            if is_upper {
                assert_eq!(t.fields.upper, Some(Visibility::Invisible));
                assert!(t.fields.lower.is_none());
            } else {
                assert_eq!(t.fields.lower, lower_vis);
            }
        }
    }

    #[test]
    fn no_upper_tangencies_when_x2_never_vanishes() {
        let x = PolynomialField::graph(1.0, Poly::constant(1.0));
        let y = PolynomialField::graph(-1.0, Poly::new(vec![0.0, 1.0]));
        let psvf = Psvf::new(x, y, [-1.0, 1.0]);
        let tangencies = psvf.find_tangencies(-1.0, 1.0).unwrap();
        assert!(tangencies.iter().all(|t| t.fields.upper.is_none()));
    }

    #[test]
    fn sliding_field_values() {
        let z = z();
        let s = z.sliding_field(0.5).unwrap();
        assert_eq!(s.regime, SlidingRegime::Sliding);
        assert_abs_diff_eq!(s.lambda, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.velocity, -1.0, epsilon = 1e-12);
        // Limit toward the pinch point from the right.
        let s = z.sliding_field(1e-6).unwrap();
        assert_abs_diff_eq!(s.velocity, -0.5, epsilon = 1e-5);
        // Escaping side uses the same convex combination.
        let e = z.sliding_field(-0.5).unwrap();
        assert_eq!(e.regime, SlidingRegime::Escaping);
        assert!(z.sliding_field(0.9).is_err());
    }

    #[test]
    fn symmetric_pair_slides_at_the_midpoint() {
        let x = PolynomialField::graph(1.0, Poly::constant(-1.0));
        let y = PolynomialField::graph(1.0, Poly::constant(1.0));
        let psvf = Psvf::new(x, y, [-1.0, 1.0]);
        let s = psvf.sliding_field(0.3).unwrap();
        assert_abs_diff_eq!(s.lambda, 0.5);
        assert_abs_diff_eq!(s.velocity, 1.0);
    }

    #[test]
    fn antisymmetric_pair_is_degenerate() {
        let x = PolynomialField::graph(1.0, Poly::constant(-1.0));
        let y = PolynomialField::graph(-1.0, Poly::constant(1.0));
        let psvf = Psvf::new(x, y, [-1.0, 1.0]);
        assert!(psvf.pseudo_equilibria(-1.0, 1.0).is_err());
    }

    #[test]
    fn pseudo_equilibrium_of_the_oriented_example() {
        let z1 = z1();
        let s = 401.0f64.sqrt();
        let p_minus = (7.0 - s) / 8.0;
        let pe = z1.pseudo_equilibria(p_minus, 0.5).unwrap();
        assert_eq!(pe.len(), 1);
        assert_eq!(pe[0].regime, SlidingRegime::Escaping);
        assert_eq!(pe[0].stability, Stability::Repelling);
        // Independent bisection oracle on 4x³ - 15x² - 6x + 43.
        let cubic = Poly::new(vec![43.0, -6.0, -15.0, 4.0]);
        let root = crate::poly::bisect_root(&cubic, -2.0, -1.0);
        assert_abs_diff_eq!(pe[0].x, root, epsilon = 1e-9);
        assert_abs_diff_eq!(root, -1.5695, epsilon = 1e-3);
    }

    #[test]
    fn no_pseudo_equilibrium_on_the_chaotic_sliding_segment() {
        let z = z();
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        let pe = z.pseudo_equilibria(1e-6, inv_sqrt2 - 1e-6).unwrap();
        assert!(pe.is_empty());
    }

    #[test]
    fn duality_swaps_sliding_and_escaping() {
        for name in ["z", "z1"] {
            let psvf = scenarios::builtin(name).unwrap().psvf;
            let neg = psvf.negated();
            let [a, b] = psvf.window;
            for k in 0..1000 {
                let x = a + (b - a) * (k as f64 + 0.5) / 1000.0;
                let l = psvf.classify_point(x).label;
                let ln = neg.classify_point(x).label;
                match l {
                    SigmaLabel::Sliding => assert_eq!(ln, SigmaLabel::Escaping),
                    SigmaLabel::Escaping => assert_eq!(ln, SigmaLabel::Sliding),
                    SigmaLabel::SewingUp => assert_eq!(ln, SigmaLabel::SewingDown),
                    SigmaLabel::SewingDown => assert_eq!(ln, SigmaLabel::SewingUp),
                    SigmaLabel::Tangency => assert_eq!(ln, SigmaLabel::Tangency),
                }
            }
        }
    }
}
