//! Compact candidate sets: regions bounded by two closed-form orbit
//! graphs over an x-interval, boundary loops, and singletons.

use crate::field::Point;
use crate::poly::Poly;

/// Default membership tolerance band.
pub const TOL_MEM: f64 = 1e-6;

/// A region `{ (x, y) : a <= x <= b, lower(x) <= y <= upper(x) }` whose
/// boundary curves are polynomial graphs (closed-form orbits).
#[derive(Clone, Debug)]
pub struct RegionSpec {
    pub interval: [f64; 2],
    pub upper: Poly,
    pub lower: Poly,
    pub tol_mem: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Inside,
    Boundary,
    Outside,
}

impl RegionSpec {
    pub fn new(interval: [f64; 2], upper: Poly, lower: Poly, tol_mem: f64) -> Self {
        assert!(interval[0] < interval[1], "region interval must be nonempty");
        let r = RegionSpec {
            interval,
            upper,
            lower,
            tol_mem,
        };
        debug_assert!(
            (r.upper.eval(interval[0]) - r.lower.eval(interval[0])).abs() <= tol_mem.max(1e-9)
                && (r.upper.eval(interval[1]) - r.lower.eval(interval[1])).abs()
                    <= tol_mem.max(1e-9),
            "boundary curves must close up at the interval endpoints"
        );
        r
    }

    pub fn membership(&self, p: Point) -> Membership {
        let [a, b] = self.interval;
        let tol = self.tol_mem;
        if p[0] < a - tol || p[0] > b + tol {
            return Membership::Outside;
        }
        let up = self.upper.eval(p[0]);
        let lo = self.lower.eval(p[0]);
        if p[1] > up + tol || p[1] < lo - tol {
            return Membership::Outside;
        }
        let near_curve = (p[1] - up).abs() <= tol || (p[1] - lo).abs() <= tol;
        let near_end = p[0] <= a + tol || p[0] >= b - tol;
        if near_curve || (near_end && p[1] <= up + tol && p[1] >= lo - tol) {
            Membership::Boundary
        } else {
            Membership::Inside
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.membership(p) != Membership::Outside
    }

    /// Exact area by polynomial antidifferentiation of (upper - lower).
    pub fn area(&self) -> f64 {
        self.upper
            .sub(&self.lower)
            .integrate(self.interval[0], self.interval[1])
    }

    /// Diameter from a boundary discretization at the given x-resolution.
    pub fn diameter(&self, resolution: f64) -> f64 {
        let pts = self.boundary_points(resolution);
        let mut best = 0.0f64;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let dx = pts[i][0] - pts[j][0];
                let dy = pts[i][1] - pts[j][1];
                let d2 = dx * dx + dy * dy;
                if d2 > best {
                    best = d2;
                }
            }
        }
        best.sqrt()
    }

    pub fn boundary_points(&self, resolution: f64) -> Vec<Point> {
        let [a, b] = self.interval;
        let n = (((b - a) / resolution).ceil() as usize).max(8);
        let mut pts = Vec::with_capacity(2 * n + 2);
        for k in 0..=n {
            let x = a + (b - a) * k as f64 / n as f64;
            pts.push([x, self.upper.eval(x)]);
            pts.push([x, self.lower.eval(x)]);
        }
        pts
    }

    /// The boundary loop of this region as a candidate set.
    pub fn boundary_loop(&self) -> LoopSet {
        LoopSet {
            interval: self.interval,
            upper: self.upper.clone(),
            lower: self.lower.clone(),
        }
    }

    /// A deterministic stratified sample: interior grid points, points on
    /// both boundary curves, and points of the switching line inside the
    /// region. Returns at least `n` points when the region has interior.
    pub fn stratified_samples(&self, n: usize) -> Vec<Point> {
        let [a, b] = self.interval;
        let n_side = ((n as f64).sqrt().ceil() as usize).max(2);
        let mut pts = vec![];
        // Interior grid.
        for i in 0..n_side {
            let x = a + (b - a) * (i as f64 + 0.5) / n_side as f64;
            let up = self.upper.eval(x);
            let lo = self.lower.eval(x);
            if up - lo <= 2.0 * self.tol_mem {
                continue;
            }
            for j in 0..n_side {
                let y = lo + (up - lo) * (j as f64 + 0.5) / n_side as f64;
                pts.push([x, y]);
            }
        }
        // Boundary curves and the switching line.
        let m = n_side * 2;
        for i in 0..=m {
            let x = a + (b - a) * i as f64 / m as f64;
            pts.push([x, self.upper.eval(x)]);
            pts.push([x, self.lower.eval(x)]);
            if self.lower.eval(x) <= 0.0 && self.upper.eval(x) >= 0.0 {
                pts.push([x, 0.0]);
            }
        }
        pts
    }
}

/// A closed boundary loop (upper graph + lower graph over an interval),
/// used as a proper-subset candidate in minimality probes.
#[derive(Clone, Debug)]
pub struct LoopSet {
    pub interval: [f64; 2],
    pub upper: Poly,
    pub lower: Poly,
}

impl LoopSet {
    /// Euclidean distance from `p` to the loop, computed by minimizing the
    /// squared-distance polynomial along each graph (exact stationary
    /// points via root isolation).
    pub fn distance(&self, p: Point) -> f64 {
        let d_up = distance_to_graph(p, &self.upper, self.interval);
        let d_lo = distance_to_graph(p, &self.lower, self.interval);
        d_up.min(d_lo)
    }

    pub fn contains_within(&self, p: Point, tol: f64) -> bool {
        self.distance(p) <= tol
    }

    /// Points along the loop for invariance sampling.
    pub fn sample_points(&self, n: usize) -> Vec<Point> {
        let [a, b] = self.interval;
        let n = n.max(4);
        let mut pts = vec![];
        for k in 0..=n {
            let x = a + (b - a) * k as f64 / n as f64;
            pts.push([x, self.upper.eval(x)]);
            pts.push([x, self.lower.eval(x)]);
        }
        pts
    }
}

/// Distance from a point to the graph of `g` over `[a, b]`.
pub fn distance_to_graph(p: Point, g: &Poly, interval: [f64; 2]) -> f64 {
    let [a, b] = interval;
    // Stationary points of d²(x) = (x - px)² + (g(x) - py)²:
    // (x - px) + (g(x) - py) g'(x) = 0.
    let dg = g.derivative();
    let shifted = g.add_constant(-p[1]);
    let grad = Poly::new(vec![-p[0], 1.0]).add(&shifted.mul(&dg));
    let mut candidates = vec![a, b];
    if p[0] > a && p[0] < b {
        candidates.push(p[0]);
    }
    for r in grad.roots_on(a, b) {
        candidates.push(r.x);
    }
    candidates
        .into_iter()
        .map(|x| {
            let dx = x - p[0];
            let dy = g.eval(x) - p[1];
            (dx * dx + dy * dy).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// A candidate proper subset for the minimality probes.
#[derive(Clone, Debug)]
pub enum CandidateSet {
    BoundaryLoop(LoopSet),
    Singleton { point: Point, label: String },
}

impl CandidateSet {
    pub fn describe(&self) -> String {
        match self {
            CandidateSet::BoundaryLoop(l) => format!(
                "boundary loop over [{:.6}, {:.6}]",
                l.interval[0], l.interval[1]
            ),
            CandidateSet::Singleton { point, label } => {
                format!("{label} singleton at ({:.9}, {:.9})", point[0], point[1])
            }
        }
    }

    pub fn contains_within(&self, p: Point, tol: f64) -> bool {
        match self {
            CandidateSet::BoundaryLoop(l) => l.contains_within(p, tol),
            CandidateSet::Singleton { point, .. } => {
                let dx = p[0] - point[0];
                let dy = p[1] - point[1];
                (dx * dx + dy * dy).sqrt() <= tol
            }
        }
    }

    pub fn sample_points(&self, n: usize) -> Vec<Point> {
        match self {
            CandidateSet::BoundaryLoop(l) => l.sample_points(n),
            CandidateSet::Singleton { point, .. } => vec![*point],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// The chaotic-scenario region: -1 <= x <= 1, x⁴/2 - x²/2 <= y <= 1 - x².
    fn lambda() -> RegionSpec {
        RegionSpec::new(
            [-1.0, 1.0],
            Poly::new(vec![1.0, 0.0, -1.0]),
            Poly::new(vec![0.0, 0.0, -0.5, 0.0, 0.5]),
            TOL_MEM,
        )
    }

    #[test]
    fn membership_cases() {
        let r = lambda();
        assert_eq!(r.membership([0.0, 0.5]), Membership::Inside);
        assert_eq!(r.membership([-1.0, 0.0]), Membership::Boundary);
        assert_eq!(r.membership([0.0, 1.5]), Membership::Outside);
        assert_eq!(r.membership([2.0, 0.0]), Membership::Outside);
    }

    #[test]
    fn exact_area() {
        assert_abs_diff_eq!(lambda().area(), 22.0 / 15.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_region_has_zero_area() {
        let g = Poly::new(vec![1.0, 0.0, -1.0]);
        let r = RegionSpec::new([-1.0, 1.0], g.clone(), g, TOL_MEM);
        assert_abs_diff_eq!(r.area(), 0.0);
    }

    #[test]
    fn diameter_attained_at_the_corners() {
        let d = lambda().diameter(1e-3);
        assert_abs_diff_eq!(d, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn distance_to_graph_handles_steep_curves() {
        let g = Poly::new(vec![0.0, 0.0, 10.0]); // y = 10x²
        let d = distance_to_graph([0.0, 1.0], &g, [-1.0, 1.0]);
        // Closest point solves x(1 + 20(10x² - 1)) = 0 branches; compare
        // against a dense scan.
        let scan = (0..20000)
            .map(|k| {
                let x = -1.0 + 2.0 * k as f64 / 19999.0;
                let dy = g.eval(x) - 1.0;
                (x * x + dy * dy).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(d, scan, epsilon = 1e-4);
    }

    #[test]
    fn loop_distance_is_zero_on_the_loop() {
        let l = lambda().boundary_loop();
        assert!(l.contains_within([0.5, 1.0 - 0.25], 1e-9));
        assert!(!l.contains_within([0.0, 0.5], 0.4));
    }
}
