//! The smooth pieces of a planar PSVF: bivariate polynomial vector fields
//! with exact Lie derivatives, closed-form orbit families for graph fields,
//! and event-located numerical integration as the generic fallback.

use crate::error::{Error, Result};
use crate::integrate;
use crate::poly::{Poly, Poly2};

/// Event tolerance on the switching function after bisection refinement.
pub const TOL_EVENT: f64 = 1e-12;

/// A planar point.
pub type Point = [f64; 2];

/// A planar vector field with bivariate polynomial components.
#[derive(Clone, Debug)]
pub struct PolynomialField {
    px: Poly2,
    py: Poly2,
    graph_orbit: bool,
}

impl PolynomialField {
    pub fn new(px: Poly2, py: Poly2) -> Self {
        let graph_orbit = matches!(px.as_constant(), Some(c) if c != 0.0) && py.independent_of_y();
        PolynomialField { px, py, graph_orbit }
    }

    /// Constant horizontal speed plus a `y`-independent vertical component,
    /// the shape every built-in scenario uses.
    pub fn graph(px: f64, py_of_x: Poly) -> Self {
        PolynomialField::new(Poly2::constant(px), Poly2::from_poly_x(&py_of_x))
    }

    pub fn px(&self) -> &Poly2 {
        &self.px
    }

    pub fn py(&self) -> &Poly2 {
        &self.py
    }

    /// Set exactly when orbits are graphs `y = F(x) + c`: the horizontal
    /// component is a nonzero constant and the vertical one ignores `y`.
    pub fn is_graph_orbit(&self) -> bool {
        self.graph_orbit
    }

    /// Horizontal speed of a graph field.
    pub fn graph_speed(&self) -> Option<f64> {
        if self.graph_orbit {
            self.px.as_constant()
        } else {
            None
        }
    }

    pub fn eval(&self, p: Point) -> Result<[f64; 2]> {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::Domain(format!(
                "field evaluated at non-finite point ({}, {})",
                p[0], p[1]
            )));
        }
        Ok([self.px.eval(p[0], p[1]), self.py.eval(p[0], p[1])])
    }

    /// First Lie derivative of `f(x,y) = y` along the field, restricted to
    /// the switching line: simply `py(x, 0)`.
    pub fn lie1(&self) -> Poly {
        self.py.at_y0()
    }

    /// k-th Lie derivative of `f = y` along the field, as a bivariate
    /// polynomial. `L¹f = py`, `Lᵏf = ⟨∇Lᵏ⁻¹f, (px, py)⟩`; all exact
    /// polynomial arithmetic.
    pub fn lie_poly(&self, order: u32) -> Result<Poly2> {
        if order == 0 {
            return Err(Error::Contract(
                "Lie derivative order must be at least 1".into(),
            ));
        }
        let mut l = self.py.clone();
        for _ in 1..order {
            l = l.dx().mul(&self.px).add(&l.dy().mul(&self.py));
        }
        Ok(l)
    }

    /// k-th Lie derivative evaluated at the switching-line point `(x, 0)`.
    pub fn lie_derivative(&self, order: u32, x: f64) -> Result<f64> {
        Ok(self.lie_poly(order)?.eval(x, 0.0))
    }

    /// Closed-form orbit through `p` for a graph field: `y = F(x) + c` with
    /// `F' = py(x)/px` and `c = p_y - F(p_x)`.
    pub fn orbit_through(&self, p: Point) -> Result<OrbitCurve> {
        if !self.graph_orbit {
            return Err(Error::Unsupported(
                "closed-form orbit requested on a field without the graph-orbit property".into(),
            ));
        }
        let speed = self.px.as_constant().expect("graph field");
        let f = self.py.at_y0().scale(1.0 / speed).antiderivative();
        let c = p[1] - f.eval(p[0]);
        Ok(OrbitCurve::graph(f, c, speed.signum()))
    }

    /// Integrate the field from `start` until the switching line is hit,
    /// the window is left, or the horizon elapses. `time_dir` is ±1;
    /// `half_plane` constrains which side the arc is supposed to live on
    /// (the returned arc stays there up to the event tolerance).
    pub fn flow_to_event(
        &self,
        start: Point,
        time_dir: f64,
        half_plane: HalfPlane,
        window: Window,
        horizon: f64,
    ) -> Result<(Vec<Point>, FlowEvent)> {
        if !(start[0].is_finite() && start[1].is_finite()) {
            return Err(Error::Domain("non-finite start point".into()));
        }
        if !window.contains(start, TOL_EVENT) {
            return Err(Error::Domain("start lies outside the window".into()));
        }
        match half_plane {
            HalfPlane::Upper if start[1] < -TOL_EVENT => {
                return Err(Error::Domain("start below the closed upper half-plane".into()))
            }
            HalfPlane::Lower if start[1] > TOL_EVENT => {
                return Err(Error::Domain("start above the closed lower half-plane".into()))
            }
            _ => {}
        }
        let (timed, ev) = integrate::flow_to_event(self, start, time_dir, window, horizon)?;
        Ok((timed.into_iter().map(|(_, p)| p).collect(), ev))
    }
}

/// Which closed half-plane a flow arc belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HalfPlane {
    Upper,
    Lower,
}

/// Axis-aligned bounding box used as the integration window.
#[derive(Clone, Copy, Debug)]
pub struct Window {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Window {
    pub fn new(x: [f64; 2], y: [f64; 2]) -> Self {
        assert!(x[0] < x[1] && y[0] < y[1], "window must be nonempty");
        Window { x, y }
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p[0] >= self.x[0] - tol
            && p[0] <= self.x[1] + tol
            && p[1] >= self.y[0] - tol
            && p[1] <= self.y[1] + tol
    }
}

/// What terminated a flow arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowEventKind {
    HitSigma,
    LeftDomainWindow,
    HorizonReached,
    /// Step-size underflow while creeping along the switching line near a
    /// tangency; reported instead of crashing.
    TangentialApproach,
}

#[derive(Clone, Copy, Debug)]
pub struct FlowEvent {
    pub kind: FlowEventKind,
    pub point: Point,
    pub time: f64,
}

/// An orbit of one smooth piece: either a closed-form graph `y = F(x) + c`
/// or a numeric polyline.
#[derive(Clone, Debug)]
pub enum OrbitCurve {
    Graph {
        f: Poly,
        c: f64,
        /// Sign of dx/dt along the orbit.
        orientation: f64,
    },
    Polyline {
        samples: Vec<Point>,
        orientation: f64,
    },
}

impl OrbitCurve {
    pub fn graph(f: Poly, c: f64, orientation: f64) -> Self {
        OrbitCurve::Graph { f, c, orientation }
    }

    /// Height of the curve at `x` (graph case only).
    pub fn height(&self, x: f64) -> Option<f64> {
        match self {
            OrbitCurve::Graph { f, c, .. } => Some(f.eval(x) + c),
            OrbitCurve::Polyline { .. } => None,
        }
    }

    /// The graph polynomial `F(x) + c` with the offset folded in.
    pub fn graph_poly(&self) -> Option<Poly> {
        match self {
            OrbitCurve::Graph { f, c, .. } => Some(f.add_constant(*c)),
            OrbitCurve::Polyline { .. } => None,
        }
    }

    pub fn orientation(&self) -> f64 {
        match self {
            OrbitCurve::Graph { orientation, .. } | OrbitCurve::Polyline { orientation, .. } => {
                *orientation
            }
        }
    }

    /// Sample the curve on `[a, b]` with `n` intervals, ordered by the
    /// curve parameter (time direction).
    pub fn sample(&self, a: f64, b: f64, n: usize) -> Vec<Point> {
        match self {
            OrbitCurve::Graph { f, c, orientation } => {
                let n = n.max(1);
                let (from, to) = if *orientation >= 0.0 { (a, b) } else { (b, a) };
                (0..=n)
                    .map(|k| {
                        let t = k as f64 / n as f64;
                        let x = from + (to - from) * t;
                        [x, f.eval(x) + c]
                    })
                    .collect()
            }
            OrbitCurve::Polyline { samples, .. } => samples.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::poly::Poly;

    /// Upper piece of the chaotic scenario: X = (1, -2x).
    fn field_zx() -> PolynomialField {
        PolynomialField::graph(1.0, Poly::new(vec![0.0, -2.0]))
    }

    /// Corrected lower piece: Y = (-2, 2x - 4x³).
    fn field_zy() -> PolynomialField {
        PolynomialField::graph(-2.0, Poly::new(vec![0.0, 2.0, 0.0, -4.0]))
    }

    /// Upper piece of the oriented-minimality example: X = (1, 1 - 2x).
    fn field_z1x() -> PolynomialField {
        PolynomialField::graph(1.0, Poly::new(vec![1.0, -2.0]))
    }

    /// Corrected lower piece: Y = (-1, -(x-2)(4x²-7x-22)).
    fn field_z1y() -> PolynomialField {
        // (x-2)(4x²-7x-22) = 4x³ - 15x² - 8x + 44
        PolynomialField::graph(-1.0, Poly::new(vec![-44.0, 8.0, 15.0, -4.0]))
    }

    #[test]
    fn eval_matches_hand_values() {
        let zx = field_zx();
        let v = zx.eval([0.5, 0.2]).unwrap();
        assert_abs_diff_eq!(v[0], 1.0);
        assert_abs_diff_eq!(v[1], -1.0);

        let z1x = field_z1x();
        let v = z1x.eval([0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(v[0], 1.0);
        assert_abs_diff_eq!(v[1], 0.0);
    }

    #[test]
    fn eval_rejects_non_finite() {
        assert!(field_zx().eval([f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn eval_at_own_zero_is_zero() {
        // Field (x, y) vanishes at the origin.
        let f = PolynomialField::new(
            Poly2::from_terms(&[(1, 0, 1.0)]),
            Poly2::from_terms(&[(0, 1, 1.0)]),
        );
        let v = f.eval([0.0, 0.0]).unwrap();
        assert_eq!(v, [0.0, 0.0]);
    }

    #[test]
    fn lie_derivatives_are_exact() {
        let zx = field_zx();
        assert_abs_diff_eq!(zx.lie_derivative(1, 0.5).unwrap(), -1.0);
        assert_abs_diff_eq!(zx.lie_derivative(2, 0.3).unwrap(), -2.0);
        assert_abs_diff_eq!(zx.lie_derivative(2, -0.8).unwrap(), -2.0);
        // Tangency of the corrected z1 lower piece at x = 2.
        assert_abs_diff_eq!(field_z1y().lie_derivative(1, 2.0).unwrap(), 0.0);
        assert!(field_zx().lie_derivative(0, 0.0).is_err());
    }

    #[test]
    fn second_lie_matches_symbolic_expansion() {
        // L²f = ∂x(py)·px + ∂y(py)·py at (x, 0).
        let f = PolynomialField::new(
            Poly2::from_terms(&[(0, 0, 1.0), (1, 0, 0.5)]),
            Poly2::from_terms(&[(2, 0, 3.0), (0, 1, -1.0)]),
        );
        for &x in &[-1.0, 0.0, 0.7, 2.3] {
            let px = f.px().eval(x, 0.0);
            let py = f.py().eval(x, 0.0);
            let expect = f.py().dx().eval(x, 0.0) * px + f.py().dy().eval(x, 0.0) * py;
            assert_abs_diff_eq!(f.lie_derivative(2, x).unwrap(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn orbit_families_match_the_boundary_curves() {
        // X-orbit through (-1, 0) is y = 1 - x².
        let orbit = field_zx().orbit_through([-1.0, 0.0]).unwrap();
        for &x in &[-1.0, -0.3, 0.0, 0.5, 1.0] {
            assert_abs_diff_eq!(orbit.height(x).unwrap(), 1.0 - x * x, epsilon = 1e-12);
        }
        // Corrected Y-orbit through (1, 0) is y = x⁴/2 - x²/2.
        let orbit = field_zy().orbit_through([1.0, 0.0]).unwrap();
        for &x in &[-1.0f64, -0.4, 0.0, 0.8, 1.0] {
            let expect = 0.5 * x.powi(4) - 0.5 * x * x;
            assert_abs_diff_eq!(orbit.height(x).unwrap(), expect, epsilon = 1e-12);
        }
        // Corrected z1 Y-orbit through (2, 0) is (x-4)(x-2)²(x+3).
        let orbit = field_z1y().orbit_through([2.0, 0.0]).unwrap();
        for &x in &[-3.0, -1.0, 0.0, 2.0, 3.5, 4.0] {
            let expect = (x - 4.0) * (x - 2.0) * (x - 2.0) * (x + 3.0);
            assert_abs_diff_eq!(orbit.height(x).unwrap(), expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn orbit_requires_graph_property() {
        let f = PolynomialField::new(
            Poly2::from_terms(&[(0, 1, 1.0)]), // px = y: not constant
            Poly2::constant(1.0),
        );
        assert!(!f.is_graph_orbit());
        assert!(f.orbit_through([0.0, 0.0]).is_err());
    }

    #[test]
    fn flow_hits_sigma_where_the_parabola_says() {
        let zx = field_zx();
        let window = Window::new([-2.0, 2.0], [-2.0, 2.0]);
        let (arc, ev) = zx
            .flow_to_event([-1.0, 0.0], 1.0, HalfPlane::Upper, window, 10.0)
            .unwrap();
        assert_eq!(ev.kind, FlowEventKind::HitSigma);
        assert_abs_diff_eq!(ev.point[0], 1.0, epsilon = 1e-6);
        assert!(ev.point[1].abs() <= 1e-9);
        assert_abs_diff_eq!(ev.time, 2.0, epsilon = 1e-6);
        assert!(arc.len() > 2);
        // Arc stays in the closed upper half-plane.
        assert!(arc.iter().all(|p| p[1] >= -TOL_EVENT));

        let (_, ev) = zx
            .flow_to_event([0.5, 0.75], 1.0, HalfPlane::Upper, window, 10.0)
            .unwrap();
        assert_eq!(ev.kind, FlowEventKind::HitSigma);
        assert_abs_diff_eq!(ev.point[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_horizon_reports_immediately() {
        let zx = field_zx();
        let window = Window::new([-2.0, 2.0], [-2.0, 2.0]);
        let (arc, ev) = zx
            .flow_to_event([0.0, 1.0], 1.0, HalfPlane::Upper, window, 0.0)
            .unwrap();
        assert_eq!(ev.kind, FlowEventKind::HorizonReached);
        assert_eq!(ev.point, [0.0, 1.0]);
        assert_eq!(arc.len(), 1);
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let zx = field_zx();
        let window = Window::new([-2.0, 2.0], [-2.0, 2.0]);
        let (_, fwd) = zx
            .flow_to_event([-1.0, 0.0], 1.0, HalfPlane::Upper, window, 1.3)
            .unwrap();
        assert_eq!(fwd.kind, FlowEventKind::HorizonReached);
        let (_, back) = zx
            .flow_to_event(fwd.point, -1.0, HalfPlane::Upper, window, 1.3)
            .unwrap();
        assert_eq!(back.kind, FlowEventKind::HorizonReached);
        assert_abs_diff_eq!(back.point[0], -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(back.point[1], 0.0, epsilon = 1e-6);
    }
}
