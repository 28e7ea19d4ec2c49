//! Local trajectories (the five-case admissibility table), oriented global
//! trajectories built from replayable decision records, and the
//! non-deterministic branch tree over sliding/escaping departures.
//!
//! Backward time is handled by one trick used throughout: the negative
//! trajectories of Z are exactly the positive trajectories of -Z with time
//! negated, and sliding/escaping labels swapped back when reporting.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{FlowEventKind, Point, PolynomialField, Window, TOL_EVENT};
use crate::integrate;
use crate::poly::Poly;
use crate::sigma::{
    PseudoEquilibrium, Psvf, SigmaLabel, SigmaSegment, TangencyInfo, Visibility,
};

/// Tolerance for junction continuity and closure checks.
pub const TOL_CLOSE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeDir {
    Forward,
    Backward,
}

impl TimeDir {
    pub fn sign(self) -> f64 {
        match self {
            TimeDir::Forward => 1.0,
            TimeDir::Backward => -1.0,
        }
    }
}

/// Horizontal direction of motion along the switching line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaDir {
    Left,
    Right,
}

impl SigmaDir {
    pub fn sign(self) -> f64 {
        match self {
            SigmaDir::Left => -1.0,
            SigmaDir::Right => 1.0,
        }
    }
    fn from_velocity(v: f64) -> Option<SigmaDir> {
        if v > 0.0 {
            Some(SigmaDir::Right)
        } else if v < 0.0 {
            Some(SigmaDir::Left)
        } else {
            None
        }
    }
}

/// One admissible continuation at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchChoice {
    /// Follow the upper field X.
    FollowUpper,
    /// Follow the lower field Y.
    FollowLower,
    /// Follow the Filippov field along the line in the given direction.
    FollowSigma(SigmaDir),
    /// Singular tangency: the constant trajectory.
    Stay,
    /// A degenerate tangency was met; the caller must decide policy.
    Degenerate,
}

impl BranchChoice {
    pub fn label(&self) -> &'static str {
        match self {
            BranchChoice::FollowUpper => "follow-x",
            BranchChoice::FollowLower => "follow-y",
            BranchChoice::FollowSigma(_) => "follow-sigma",
            BranchChoice::Stay => "stay",
            BranchChoice::Degenerate => "degenerate",
        }
    }
}

/// A decision plus optional early stops, sufficient for bit-exact replay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChoiceRecord {
    pub choice: BranchChoice,
    /// Cut the segment at this x-coordinate (departure from Σ-motion, or a
    /// deliberate cut where an arc grazes a tangency).
    pub stop_x: Option<f64>,
    /// Cut the segment once its elapsed time reaches this value.
    pub stop_t: Option<f64>,
}

impl ChoiceRecord {
    pub fn plain(choice: BranchChoice) -> Self {
        ChoiceRecord {
            choice,
            stop_x: None,
            stop_t: None,
        }
    }
    pub fn stop_at_x(choice: BranchChoice, x: f64) -> Self {
        ChoiceRecord {
            choice,
            stop_x: Some(x),
            stop_t: None,
        }
    }
    pub fn stop_at_t(choice: BranchChoice, t: f64) -> Self {
        ChoiceRecord {
            choice,
            stop_x: None,
            stop_t: Some(t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    UpperFlow,
    LowerFlow,
    SlidingMotion,
    EscapingMotion,
    Stationary,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::UpperFlow => "upper-flow",
            Regime::LowerFlow => "lower-flow",
            Regime::SlidingMotion => "sliding",
            Regime::EscapingMotion => "escaping",
            Regime::Stationary => "stationary",
        }
    }
}

/// Why a segment ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SegmentEnd {
    /// A transversal hit of the switching line.
    SigmaHit,
    /// Σ-motion arrived at the end tangency of its segment.
    SegmentEndpoint,
    /// Σ-motion converged toward a pseudo-equilibrium; truncated at the
    /// horizon and flagged.
    PseudoEquilibriumAsymptotic,
    HorizonReached,
    LeftWindow,
    /// Early cut requested by the decision record.
    Stopped,
}

/// One regime-homogeneous arc. Samples are time-ascending; for segments of
/// a negative trajectory the decision was taken at the later endpoint.
#[derive(Clone, Debug)]
pub struct TrajectorySegment {
    pub regime: Regime,
    pub start: Point,
    pub end: Point,
    pub t_start: f64,
    pub t_end: f64,
    /// (t, point) samples, ascending in t.
    pub samples: Vec<(f64, Point)>,
    pub choice: ChoiceRecord,
    pub end_kind: SegmentEnd,
}

impl TrajectorySegment {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Positive,
    Negative,
}

/// An oriented concatenation of local trajectory arcs.
#[derive(Clone, Debug)]
pub struct GlobalTrajectory {
    pub segments: Vec<TrajectorySegment>,
    pub orientation: Orientation,
    /// Decisions in the order they were taken (construction order).
    pub decisions: Vec<ChoiceRecord>,
}

impl GlobalTrajectory {
    /// The temporal start point (t = 0 for positive trajectories).
    pub fn initial_point(&self) -> Point {
        match self.orientation {
            Orientation::Positive => self.segments.first().map(|s| s.start).unwrap_or([0.0; 2]),
            Orientation::Negative => self.segments.last().map(|s| s.end).unwrap_or([0.0; 2]),
        }
    }

    /// The far endpoint in the direction of construction.
    pub fn final_point(&self) -> Point {
        match self.orientation {
            Orientation::Positive => self.segments.last().map(|s| s.end).unwrap_or([0.0; 2]),
            Orientation::Negative => self.segments.first().map(|s| s.start).unwrap_or([0.0; 2]),
        }
    }

    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration()).sum()
    }

    /// Maximum junction mismatch between consecutive segments.
    pub fn max_junction_gap(&self) -> f64 {
        self.segments
            .windows(2)
            .map(|w| {
                let a = w[0].end;
                let b = w[1].start;
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn all_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.segments.iter().flat_map(|s| s.samples.iter().map(|&(_, p)| p))
    }
}

/// Whether a scripted run covered its whole horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Completion {
    Completed,
    /// The decision list ran out before the horizon elapsed.
    Underrun { consumed: usize },
}

/// How a global trajectory resolves set-valued branches.
pub enum Policy {
    /// Replay a recorded decision list bit-exactly.
    Scripted(Vec<ChoiceRecord>),
    /// Seeded uniform choice among admissible continuations; departures
    /// from escaping motion are drawn uniformly over the traversal.
    Random(u64),
}

/// A node of the branch tree.
#[derive(Clone, Debug)]
pub struct BranchNode {
    pub point: Point,
    pub depth: usize,
    pub children: Vec<BranchEdge>,
    /// Combinatorial budget ran out below this node.
    pub truncated: bool,
    /// This node sits on an asymptotic approach to a pseudo-equilibrium.
    pub asymptotic: bool,
}

#[derive(Clone, Debug)]
pub struct BranchEdge {
    pub record: ChoiceRecord,
    pub segment: TrajectorySegment,
    pub node: BranchNode,
}

impl BranchNode {
    pub fn count_nodes(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|e| e.node.count_nodes())
            .sum::<usize>()
    }

    pub fn for_each_segment<'a>(&'a self, f: &mut impl FnMut(&'a TrajectorySegment)) {
        for e in &self.children {
            f(&e.segment);
            e.node.for_each_segment(f);
        }
    }

    pub fn leaves(&self) -> Vec<&BranchNode> {
        if self.children.is_empty() {
            vec![self]
        } else {
            self.children.iter().flat_map(|e| e.node.leaves()).collect()
        }
    }
}

/// Precomputed switching-line structure for one vector field pair.
#[derive(Clone, Debug)]
struct SigmaMap {
    segments: Vec<SigmaSegment>,
    tangencies: Vec<TangencyInfo>,
    pes: Vec<PseudoEquilibrium>,
}

impl SigmaMap {
    fn build(psvf: &Psvf) -> Result<SigmaMap> {
        let [a, b] = psvf.window;
        Ok(SigmaMap {
            segments: psvf.segment_sigma(a, b)?,
            tangencies: psvf.find_tangencies(a, b)?,
            pes: psvf.pseudo_equilibria(a, b)?,
        })
    }

    fn tangency_at(&self, x: f64, tol: f64) -> Option<&TangencyInfo> {
        self.tangencies.iter().find(|t| (t.x - x).abs() <= tol)
    }

    fn segment_containing(&self, x: f64, tol: f64) -> Option<&SigmaSegment> {
        self.segments
            .iter()
            .find(|s| x > s.from + tol && x < s.to - tol)
    }

    fn segment_right_of(&self, x: f64, tol: f64) -> Option<&SigmaSegment> {
        self.segments.iter().find(|s| (s.from - x).abs() <= tol)
    }

    fn segment_left_of(&self, x: f64, tol: f64) -> Option<&SigmaSegment> {
        self.segments.iter().find(|s| (s.to - x).abs() <= tol)
    }
}

/// Operational context: the PSVF plus everything derived from it that the
/// trajectory machinery needs, for both time directions.
pub struct Flow {
    psvf: Psvf,
    negated: Psvf,
    map: SigmaMap,
    neg_map: SigmaMap,
    window: Window,
    x_tol: f64,
}

impl Flow {
    pub fn new(psvf: &Psvf) -> Result<Flow> {
        let window = default_window(psvf);
        Flow::with_window(psvf, window)
    }

    pub fn with_window(psvf: &Psvf, window: Window) -> Result<Flow> {
        let negated = psvf.negated();
        let map = SigmaMap::build(psvf)?;
        let neg_map = SigmaMap::build(&negated)?;
        let x_tol = 1e-9 * (psvf.window[1] - psvf.window[0]).max(1.0);
        Ok(Flow {
            psvf: psvf.clone(),
            negated,
            map,
            neg_map,
            window,
            x_tol,
        })
    }

    pub fn psvf(&self) -> &Psvf {
        &self.psvf
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Forward-time segmentation of the switching line.
    pub fn sigma_segments(&self) -> &[SigmaSegment] {
        &self.map.segments
    }

    pub fn tangencies(&self) -> &[TangencyInfo] {
        &self.map.tangencies
    }

    pub fn pseudo_equilibria(&self) -> &[PseudoEquilibrium] {
        &self.map.pes
    }

    /// A horizon generous enough for any single arc inside the window.
    pub fn suggested_horizon(&self) -> f64 {
        let w = self.psvf.window[1] - self.psvf.window[0];
        let mut min_speed = f64::INFINITY;
        for f in [&self.psvf.upper, &self.psvf.lower] {
            if let Some(s) = f.graph_speed() {
                min_speed = min_speed.min(s.abs());
            }
        }
        if !min_speed.is_finite() || min_speed <= 0.0 {
            min_speed = 1.0;
        }
        50.0 * w / min_speed
    }

    fn effective(&self, dir: TimeDir) -> (&Psvf, &SigmaMap) {
        match dir {
            TimeDir::Forward => (&self.psvf, &self.map),
            TimeDir::Backward => (&self.negated, &self.neg_map),
        }
    }

    /// The admissible Definition-style continuations at `p`.
    pub fn local_successors(&self, p: Point, dir: TimeDir) -> Result<Vec<BranchChoice>> {
        let (psvf, map) = self.effective(dir);
        if p[1] > TOL_EVENT {
            return Ok(vec![BranchChoice::FollowUpper]);
        }
        if p[1] < -TOL_EVENT {
            return Ok(vec![BranchChoice::FollowLower]);
        }
        let x = p[0];
        let class = psvf.classify_point(x);
        let out = match class.label {
            SigmaLabel::SewingUp => vec![BranchChoice::FollowUpper],
            SigmaLabel::SewingDown => vec![BranchChoice::FollowLower],
            SigmaLabel::Sliding => {
                // Forward motion is confined to the line.
                let v = psvf.filippov_velocity(x);
                match SigmaDir::from_velocity(v) {
                    Some(d) => vec![BranchChoice::FollowSigma(d)],
                    // Parked on a sliding pseudo-equilibrium.
                    None => vec![BranchChoice::FollowSigma(SigmaDir::Right)],
                }
            }
            SigmaLabel::Escaping => {
                let mut out = vec![BranchChoice::FollowUpper, BranchChoice::FollowLower];
                let v = psvf.filippov_velocity(x);
                out.push(BranchChoice::FollowSigma(
                    SigmaDir::from_velocity(v).unwrap_or(SigmaDir::Right),
                ));
                out
            }
            SigmaLabel::Tangency => self.tangency_successors(psvf, map, x)?,
        };
        Ok(out)
    }

    /// Bullet-four admissibility at a regular tangency, decided from the
    /// visibility data and the labels of the adjacent segments, never by
    /// numeric probing of the two-dimensional flow.
    fn tangency_successors(
        &self,
        psvf: &Psvf,
        map: &SigmaMap,
        x: f64,
    ) -> Result<Vec<BranchChoice>> {
        let tol = self.x_tol.max(1e-7);
        let info = match map.tangency_at(x, tol) {
            Some(t) => *t,
            None => {
                // Tolerance said tangency but no recorded fold: classify by
                // nearest structure; treat as degenerate.
                return Ok(vec![BranchChoice::Degenerate]);
            }
        };
        if info.singular {
            return Ok(vec![BranchChoice::Stay]);
        }
        if matches!(info.fields.upper, Some(Visibility::Degenerate))
            || matches!(info.fields.lower, Some(Visibility::Degenerate))
        {
            return Ok(vec![BranchChoice::Degenerate]);
        }
        let mut out = vec![];
        let xf = psvf.upper_lie1().eval(x);
        let yf = psvf.lower_lie1().eval(x);
        let lie_tol = 1e-9 * (1.0 + xf.abs().max(yf.abs()));

        // Upper field: transversal ascent, or a visible fold.
        let upper_ok = if info.is_fold_of_upper() {
            info.fields.upper == Some(Visibility::Visible)
        } else {
            xf > lie_tol
        };
        if upper_ok {
            out.push(BranchChoice::FollowUpper);
        }
        // Lower field: transversal descent, or a visible fold.
        let lower_ok = if info.is_fold_of_lower() {
            info.fields.lower == Some(Visibility::Visible)
        } else {
            yf < -lie_tol
        };
        if lower_ok {
            out.push(BranchChoice::FollowLower);
        }
        // Σ-motion into an adjacent sliding/escaping segment whose
        // velocity points away from the tangency.
        if let Some(seg) = map.segment_right_of(x, tol) {
            if matches!(seg.label, SigmaLabel::Sliding | SigmaLabel::Escaping) {
                let probe = x + probe_distance(seg);
                if psvf.filippov_velocity(probe) > 0.0 {
                    out.push(BranchChoice::FollowSigma(SigmaDir::Right));
                }
            }
        }
        if let Some(seg) = map.segment_left_of(x, tol) {
            if matches!(seg.label, SigmaLabel::Sliding | SigmaLabel::Escaping) {
                let probe = x - probe_distance(seg);
                if psvf.filippov_velocity(probe) < 0.0 {
                    out.push(BranchChoice::FollowSigma(SigmaDir::Left));
                }
            }
        }
        Ok(out)
    }

    /// Follow one choice until its next qualitative event.
    /// `t0` is the absolute time at `p`; horizon is the remaining span.
    pub fn advance(
        &self,
        p: Point,
        record: ChoiceRecord,
        dir: TimeDir,
        horizon: f64,
        t0: f64,
    ) -> Result<TrajectorySegment> {
        if horizon <= 0.0 {
            return Err(Error::Contract("advance needs a positive horizon".into()));
        }
        let seg = self.advance_effective(p, record, dir, horizon)?;
        Ok(self.into_z_time(seg, dir, t0))
    }

    /// Advance in the effective (forward) system; times are 0-based local.
    fn advance_effective(
        &self,
        p: Point,
        record: ChoiceRecord,
        dir: TimeDir,
        horizon: f64,
    ) -> Result<RawSegment> {
        let (psvf, map) = self.effective(dir);
        match record.choice {
            BranchChoice::FollowUpper => {
                self.flow_arc(psvf, &psvf.upper, true, p, record, horizon)
            }
            BranchChoice::FollowLower => {
                self.flow_arc(psvf, &psvf.lower, false, p, record, horizon)
            }
            BranchChoice::FollowSigma(sdir) => self.sigma_arc(psvf, map, p, sdir, record, horizon),
            BranchChoice::Stay => {
                let dur = record.stop_t.unwrap_or(horizon).min(horizon);
                Ok(RawSegment {
                    regime: Regime::Stationary,
                    samples: vec![(0.0, p), (dur, p)],
                    end_kind: SegmentEnd::HorizonReached,
                    choice: record,
                })
            }
            BranchChoice::Degenerate => Err(Error::Contract(
                "cannot advance through a degenerate tangency without a caller policy".into(),
            )),
        }
    }

    /// A half-plane flow arc. Closed-form path for graph fields: the next
    /// transversal Σ-crossing of the orbit polynomial bounds the arc;
    /// tangential grazes do not break it.
    fn flow_arc(
        &self,
        psvf: &Psvf,
        field: &PolynomialField,
        is_upper: bool,
        p: Point,
        record: ChoiceRecord,
        horizon: f64,
    ) -> Result<RawSegment> {
        let regime = if is_upper {
            Regime::UpperFlow
        } else {
            Regime::LowerFlow
        };
        let _ = psvf;
        if !field.is_graph_orbit() {
            return self.flow_arc_numeric(field, is_upper, p, record, horizon, regime);
        }
        let speed = field.graph_speed().expect("graph field");
        let orbit = field.orbit_through(p)?;
        let q = orbit.graph_poly().expect("graph orbit");
        let s = speed.signum();

        // Admissibility probe just ahead: the arc must stay on its side.
        let scale = (self.window.x[1] - self.window.x[0]).max(1.0);
        let probe = p[0] + s * 1e-7 * scale;
        let yp = q.eval(probe);
        if (is_upper && yp < -1e-5 * scale) || (!is_upper && yp > 1e-5 * scale) {
            return Err(Error::Contract(format!(
                "flow arc through ({}, {}) immediately leaves its closed half-plane",
                p[0], p[1]
            )));
        }

        // Candidate stops in the direction of motion.
        let (wx0, wx1) = (self.window.x[0], self.window.x[1]);
        let mut x_stop = if s > 0.0 { wx1 } else { wx0 };
        let mut end_kind = SegmentEnd::LeftWindow;
        let sep = 1e-7 * scale;
        for root in q.roots_on(wx0, wx1) {
            if !root.sign_change {
                continue; // grazes do not end the arc
            }
            if s * (root.x - p[0]) > sep && s * (root.x - x_stop) < 0.0 {
                x_stop = root.x;
                end_kind = SegmentEnd::SigmaHit;
            }
        }
        // Horizon / stop_t cut.
        let t_limit = record.stop_t.unwrap_or(horizon).min(horizon);
        let x_horizon = p[0] + speed * t_limit;
        if s * (x_horizon - x_stop) < 0.0 {
            x_stop = x_horizon;
            end_kind = if record.stop_t.is_some() && t_limit < horizon {
                SegmentEnd::Stopped
            } else {
                SegmentEnd::HorizonReached
            };
        }
        // Requested cut.
        if let Some(cut) = record.stop_x {
            if s * (cut - p[0]) < -sep {
                return Err(Error::Contract(format!(
                    "stop_x = {cut} lies behind the arc start {}",
                    p[0]
                )));
            }
            if s * (cut - x_stop) < 0.0 {
                x_stop = cut;
                end_kind = SegmentEnd::Stopped;
            }
        }

        let n = 128usize;
        let mut samples = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let x = p[0] + (x_stop - p[0]) * k as f64 / n as f64;
            let mut y = q.eval(x);
            if k == 0 {
                y = p[1];
            }
            let t = (x - p[0]) / speed;
            samples.push((t, [x, y]));
        }
        if end_kind == SegmentEnd::SigmaHit {
            samples.last_mut().unwrap().1[1] = 0.0;
        }
        Ok(RawSegment {
            regime,
            samples,
            end_kind,
            choice: record,
        })
    }

    fn flow_arc_numeric(
        &self,
        field: &PolynomialField,
        is_upper: bool,
        p: Point,
        record: ChoiceRecord,
        horizon: f64,
        regime: Regime,
    ) -> Result<RawSegment> {
        let _ = is_upper;
        let t_limit = record.stop_t.unwrap_or(horizon).min(horizon);
        let (timed, ev) = integrate::flow_to_event(field, p, 1.0, self.window, t_limit)?;
        let end_kind = match ev.kind {
            FlowEventKind::HitSigma => SegmentEnd::SigmaHit,
            FlowEventKind::LeftDomainWindow => SegmentEnd::LeftWindow,
            FlowEventKind::HorizonReached => SegmentEnd::HorizonReached,
            FlowEventKind::TangentialApproach => SegmentEnd::SegmentEndpoint,
        };
        Ok(RawSegment {
            regime,
            samples: timed,
            end_kind,
            choice: record,
        })
    }

    /// Σ-motion arc: ride the Filippov field until the segment's end
    /// tangency, a blocking pseudo-equilibrium (asymptotic, flagged), an
    /// explicit stop, or the horizon.
    fn sigma_arc(
        &self,
        psvf: &Psvf,
        map: &SigmaMap,
        p: Point,
        sdir: SigmaDir,
        record: ChoiceRecord,
        horizon: f64,
    ) -> Result<RawSegment> {
        if p[1].abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "Σ-motion requested off the switching line (y = {})",
                p[1]
            )));
        }
        let x0 = p[0];
        let tol = self.x_tol.max(1e-9);
        let seg = map
            .segment_containing(x0, tol)
            .or_else(|| match sdir {
                SigmaDir::Right => map.segment_right_of(x0, 1e-7),
                SigmaDir::Left => map.segment_left_of(x0, 1e-7),
            })
            .ok_or_else(|| {
                Error::Contract(format!("no sliding/escaping segment at x = {x0}"))
            })?;
        let regime = match seg.label {
            SigmaLabel::Sliding => Regime::SlidingMotion,
            SigmaLabel::Escaping => Regime::EscapingMotion,
            other => {
                return Err(Error::Contract(format!(
                    "Σ-motion requested on a {other:?} segment"
                )))
            }
        };
        let sgn = sdir.sign();
        let x_end = if sgn > 0.0 { seg.to } else { seg.from };

        // First blocking pseudo-equilibrium strictly between x0 and x_end.
        let blocking = map
            .pes
            .iter()
            .filter(|pe| sgn * (pe.x - x0) > tol && sgn * (x_end - pe.x) > tol)
            .min_by(|a, b| {
                (sgn * (a.x - x0))
                    .partial_cmp(&(sgn * (b.x - x0)))
                    .unwrap()
            })
            .map(|pe| pe.x);
        let x_target = blocking.unwrap_or(x_end);

        // Parked exactly on a pseudo-equilibrium: constant motion.
        if map.pes.iter().any(|pe| (pe.x - x0).abs() <= tol) {
            let dur = record.stop_t.unwrap_or(horizon).min(horizon);
            return Ok(RawSegment {
                regime,
                samples: vec![(0.0, [x0, 0.0]), (dur, [x0, 0.0])],
                end_kind: SegmentEnd::PseudoEquilibriumAsymptotic,
                choice: record,
            });
        }

        let num = psvf.filippov_numerator();
        let den = psvf.filippov_denominator();
        let num_d = num.derivative();
        let den_d = den.derivative();
        let den_scale: f64 = den.coeffs().iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        // At a fold-fold both numerator and denominator vanish; the ratio
        // has a removable limit handled by one l'Hôpital step.
        let v = move |x: f64| -> f64 {
            let d = den.eval(x);
            if d.abs() > 1e-12 * den_scale {
                num.eval(x) / d
            } else {
                let dd = den_d.eval(x);
                if dd.abs() > 1e-12 * den_scale {
                    num_d.eval(x) / dd
                } else {
                    0.0
                }
            }
        };
        // Direction sanity: the field must actually move the right way.
        let v0 = v(x0 + sgn * tol.max(1e-10));
        if sgn * v0 <= 0.0 {
            return Err(Error::Contract(format!(
                "Σ-motion direction {sdir:?} disagrees with the Filippov field at x = {x0}"
            )));
        }

        let t_limit = record.stop_t.unwrap_or(horizon).min(horizon);
        let stop_cut = record.stop_x;
        let snap_tol = 1e-11 * (1.0 + x_target.abs());
        let stop = |x: f64| -> bool {
            if (x - x_target).abs() <= snap_tol || sgn * (x - x_target) >= 0.0 {
                return true;
            }
            if let Some(c) = stop_cut {
                if sgn * (x - c) >= 0.0 {
                    return true;
                }
            }
            false
        };
        let (mut samples, stopped) = integrate::scalar_flow(&v, x0, t_limit, &stop);

        let mut end_kind;
        if stopped {
            let (_, xf) = *samples.last().unwrap();
            if let Some(c) = stop_cut {
                if sgn * (xf - c) >= 0.0 && sgn * (x_target - xf) > snap_tol {
                    // Early departure cut: snap to the requested x.
                    samples.last_mut().unwrap().1 = c;
                    end_kind = SegmentEnd::Stopped;
                } else {
                    samples.last_mut().unwrap().1 = x_target;
                    end_kind = if blocking.is_some() {
                        SegmentEnd::PseudoEquilibriumAsymptotic
                    } else {
                        SegmentEnd::SegmentEndpoint
                    };
                }
            } else {
                samples.last_mut().unwrap().1 = x_target;
                end_kind = if blocking.is_some() {
                    SegmentEnd::PseudoEquilibriumAsymptotic
                } else {
                    SegmentEnd::SegmentEndpoint
                };
            }
        } else {
            // Horizon reached; flag an asymptotic stall if we are parked
            // near the blocking pseudo-equilibrium.
            let (_, xf) = *samples.last().unwrap();
            end_kind = SegmentEnd::HorizonReached;
            if let Some(b) = blocking {
                if (xf - b).abs() <= 1e-6 * (1.0 + b.abs()) {
                    end_kind = SegmentEnd::PseudoEquilibriumAsymptotic;
                }
            }
            if record.stop_t.is_some() && t_limit < horizon {
                end_kind = SegmentEnd::Stopped;
            }
        }
        // Asymptotic approaches never arrive: an endpoint equal to the
        // blocking equilibrium within snapping distance keeps the flag.
        if blocking.is_some() && end_kind == SegmentEnd::SegmentEndpoint {
            end_kind = SegmentEnd::PseudoEquilibriumAsymptotic;
        }
        let samples: Vec<(f64, Point)> =
            samples.into_iter().map(|(t, x)| (t, [x, 0.0])).collect();
        Ok(RawSegment {
            regime,
            samples,
            end_kind,
            choice: record,
        })
    }

    /// Translate an effective-system raw segment into Z-time at `t0`.
    fn into_z_time(&self, raw: RawSegment, dir: TimeDir, t0: f64) -> TrajectorySegment {
        let regime = match (dir, raw.regime) {
            (TimeDir::Forward, r) => r,
            // The negated system swaps sliding and escaping.
            (TimeDir::Backward, Regime::SlidingMotion) => Regime::EscapingMotion,
            (TimeDir::Backward, Regime::EscapingMotion) => Regime::SlidingMotion,
            (TimeDir::Backward, r) => r,
        };
        match dir {
            TimeDir::Forward => {
                let samples: Vec<(f64, Point)> =
                    raw.samples.iter().map(|&(t, p)| (t0 + t, p)).collect();
                TrajectorySegment {
                    regime,
                    start: samples.first().unwrap().1,
                    end: samples.last().unwrap().1,
                    t_start: samples.first().unwrap().0,
                    t_end: samples.last().unwrap().0,
                    samples,
                    choice: raw.choice,
                    end_kind: raw.end_kind,
                }
            }
            TimeDir::Backward => {
                let mut samples: Vec<(f64, Point)> =
                    raw.samples.iter().map(|&(t, p)| (t0 - t, p)).collect();
                samples.reverse();
                TrajectorySegment {
                    regime,
                    start: samples.first().unwrap().1,
                    end: samples.last().unwrap().1,
                    t_start: samples.first().unwrap().0,
                    t_end: samples.last().unwrap().0,
                    samples,
                    choice: raw.choice,
                    end_kind: raw.end_kind,
                }
            }
        }
    }

    /// Build an oriented global trajectory under the given policy.
    /// A scripted policy that runs out of decisions before the horizon is
    /// an error; use [`Flow::global_partial`] to keep the partial result.
    pub fn global(
        &self,
        p0: Point,
        policy: Policy,
        orientation: Orientation,
        horizon: f64,
    ) -> Result<GlobalTrajectory> {
        let (traj, completion) = self.global_partial(p0, policy, orientation, horizon)?;
        match completion {
            Completion::Completed => Ok(traj),
            Completion::Underrun { consumed } => Err(Error::PolicyUnderrun { consumed }),
        }
    }

    /// Like [`Flow::global`], but an exhausted scripted policy returns the
    /// partial trajectory along with the underrun marker.
    pub fn global_partial(
        &self,
        p0: Point,
        policy: Policy,
        orientation: Orientation,
        horizon: f64,
    ) -> Result<(GlobalTrajectory, Completion)> {
        let dir = match orientation {
            Orientation::Positive => TimeDir::Forward,
            Orientation::Negative => TimeDir::Backward,
        };
        let mut rng = match &policy {
            Policy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        let scripted: Option<&[ChoiceRecord]> = match &policy {
            Policy::Scripted(v) => Some(v),
            _ => None,
        };

        let mut p = p0;
        let mut elapsed = 0.0f64;
        let mut raw_segments: Vec<TrajectorySegment> = vec![];
        let mut decisions = vec![];
        let mut idx = 0usize;
        let mut completion = Completion::Completed;

        while elapsed < horizon - 1e-12 {
            let record = if let Some(list) = scripted {
                match list.get(idx) {
                    Some(r) => *r,
                    None => {
                        completion = Completion::Underrun { consumed: idx };
                        break;
                    }
                }
            } else {
                let succ = self.local_successors(p, dir)?;
                if succ.is_empty() {
                    break;
                }
                let rng = rng.as_mut().expect("random policy");
                let choice = succ[rng.gen_range(0..succ.len())];
                // Random escaping departures: draw a cut uniformly along
                // the remaining traversal footprint.
                if let BranchChoice::FollowSigma(sd) = choice {
                    let (psvf_eff, map) = self.effective(dir);
                    let _ = psvf_eff;
                    let seg = map
                        .segment_containing(p[0], self.x_tol)
                        .or_else(|| match sd {
                            SigmaDir::Right => map.segment_right_of(p[0], 1e-7),
                            SigmaDir::Left => map.segment_left_of(p[0], 1e-7),
                        });
                    if let Some(seg) = seg {
                        if seg.label == SigmaLabel::Escaping && rng.gen_bool(0.5) {
                            let x_end = if sd.sign() > 0.0 { seg.to } else { seg.from };
                            let cut = p[0] + (x_end - p[0]) * rng.gen_range(0.05..0.95);
                            ChoiceRecord::stop_at_x(choice, cut)
                        } else {
                            ChoiceRecord::plain(choice)
                        }
                    } else {
                        ChoiceRecord::plain(choice)
                    }
                } else {
                    ChoiceRecord::plain(choice)
                }
            };

            // Scripted records must still be admissible.
            if scripted.is_some() {
                let succ = self.local_successors(p, dir)?;
                if !succ.contains(&record.choice) {
                    return Err(Error::Contract(format!(
                        "scripted choice {:?} not admissible at ({}, {}); options {:?}",
                        record.choice, p[0], p[1], succ
                    )));
                }
            }

            let t0_signed = dir.sign() * elapsed;
            let seg = self.advance(p, record, dir, horizon - elapsed, t0_signed)?;
            elapsed += seg.duration();
            p = match dir {
                TimeDir::Forward => seg.end,
                TimeDir::Backward => seg.start,
            };
            let end_kind = seg.end_kind;
            raw_segments.push(seg);
            decisions.push(record);
            idx += 1;

            match end_kind {
                SegmentEnd::HorizonReached
                | SegmentEnd::LeftWindow
                | SegmentEnd::PseudoEquilibriumAsymptotic => break,
                _ => {}
            }
        }

        if dir == TimeDir::Backward {
            raw_segments.reverse();
        }
        Ok((
            GlobalTrajectory {
                segments: raw_segments,
                orientation,
                decisions,
            },
            completion,
        ))
    }

    /// Exhaustively enumerate admissible continuations to `depth` events.
    /// Departures from escaping Σ-motion are discretized to `escape_grid`
    /// equally spaced times per traversal plus the far endpoint.
    pub fn branch_tree(
        &self,
        p0: Point,
        dir: TimeDir,
        depth: usize,
        escape_grid: usize,
        horizon: f64,
        node_budget: usize,
    ) -> Result<BranchNode> {
        let mut budget = node_budget;
        self.expand_node(p0, dir, depth, escape_grid, horizon, &mut budget, false)
    }

    /// Enumerate the admissible one-event continuations from `p`, with the
    /// escape-grid discretization of set-valued Σ-departures.
    fn enumerate_children(
        &self,
        p: Point,
        dir: TimeDir,
        escape_grid: usize,
        horizon: f64,
        departure_forced: bool,
    ) -> Result<Vec<ChildArc>> {
        let mut out = vec![];
        let mut succ = self.local_successors(p, dir)?;
        if departure_forced {
            succ.retain(|c| matches!(c, BranchChoice::FollowUpper | BranchChoice::FollowLower));
        }
        for choice in succ {
            match choice {
                BranchChoice::FollowSigma(_sd) => {
                    // Full traversal first; grid departures carved out of it
                    // when the motion is set-valued in this direction.
                    let record = ChoiceRecord::plain(choice);
                    let seg = match self.advance(p, record, dir, horizon, 0.0) {
                        Ok(s) => s,
                        Err(_) => continue,
                    };
                    let is_escaping_fwd = seg.regime
                        == match dir {
                            TimeDir::Forward => Regime::EscapingMotion,
                            TimeDir::Backward => Regime::SlidingMotion,
                        };
                    let dur = seg.duration();
                    let endpoint = match dir {
                        TimeDir::Forward => seg.end,
                        TimeDir::Backward => seg.start,
                    };
                    let asym = seg.end_kind == SegmentEnd::PseudoEquilibriumAsymptotic;
                    let expandable = matches!(
                        seg.end_kind,
                        SegmentEnd::SegmentEndpoint | SegmentEnd::SigmaHit
                    );
                    out.push(ChildArc {
                        record,
                        segment: seg.clone(),
                        endpoint,
                        expandable,
                        departure_forced: false,
                        asymptotic: asym,
                    });
                    if is_escaping_fwd && escape_grid > 0 && dur > 1e-9 {
                        // Interior departure times, equally spaced.
                        for k in 1..=escape_grid {
                            let tau = dur * k as f64 / (escape_grid + 1) as f64;
                            let x_cut = interpolate_x(&seg, dir, tau);
                            let rec = ChoiceRecord::stop_at_x(choice, x_cut);
                            let cut_seg = match self.advance(p, rec, dir, horizon, 0.0) {
                                Ok(s) => s,
                                Err(_) => continue,
                            };
                            let ep = match dir {
                                TimeDir::Forward => cut_seg.end,
                                TimeDir::Backward => cut_seg.start,
                            };
                            out.push(ChildArc {
                                record: rec,
                                segment: cut_seg,
                                endpoint: ep,
                                expandable: true,
                                departure_forced: true,
                                asymptotic: false,
                            });
                        }
                    }
                }
                _ => {
                    let record = ChoiceRecord::plain(choice);
                    let seg = match self.advance(p, record, dir, horizon, 0.0) {
                        Ok(s) => s,
                        Err(_) => continue,
                    };
                    let endpoint = match dir {
                        TimeDir::Forward => seg.end,
                        TimeDir::Backward => seg.start,
                    };
                    let expandable = matches!(seg.end_kind, SegmentEnd::SigmaHit);
                    out.push(ChildArc {
                        record,
                        segment: seg,
                        endpoint,
                        expandable,
                        departure_forced: false,
                        asymptotic: false,
                    });
                }
            }
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn expand_node(
        &self,
        p: Point,
        dir: TimeDir,
        depth: usize,
        escape_grid: usize,
        horizon: f64,
        budget: &mut usize,
        departure_forced: bool,
    ) -> Result<BranchNode> {
        if *budget == 0 {
            return Ok(BranchNode {
                point: p,
                depth,
                children: vec![],
                truncated: true,
                asymptotic: false,
            });
        }
        *budget -= 1;
        let mut node = BranchNode {
            point: p,
            depth,
            children: vec![],
            truncated: false,
            asymptotic: false,
        };
        if depth == 0 || horizon <= 1e-12 {
            return Ok(node);
        }
        for child in self.enumerate_children(p, dir, escape_grid, horizon, departure_forced)? {
            let dur = child.segment.duration();
            let mut sub = if child.expandable && depth > 1 && horizon - dur > 1e-12 {
                self.expand_node(
                    child.endpoint,
                    dir,
                    depth - 1,
                    escape_grid,
                    horizon - dur,
                    budget,
                    child.departure_forced,
                )?
            } else {
                BranchNode {
                    point: child.endpoint,
                    depth: depth - 1,
                    children: vec![],
                    truncated: false,
                    asymptotic: false,
                }
            };
            sub.asymptotic |= child.asymptotic;
            node.children.push(BranchEdge {
                record: child.record,
                segment: child.segment,
                node: sub,
            });
        }
        Ok(node)
    }

    /// Stream the branch enumeration without materializing the tree.
    /// The visitor sees (decision path, segment) for every explored arc and
    /// returns `true` to keep expanding below that arc. Returns false when
    /// the node budget ran out (exploration truncated).
    pub fn walk_branches(
        &self,
        p0: Point,
        dir: TimeDir,
        depth: usize,
        escape_grid: usize,
        horizon: f64,
        node_budget: usize,
        visitor: &mut impl FnMut(&[ChoiceRecord], &TrajectorySegment) -> bool,
    ) -> Result<bool> {
        let mut budget = node_budget;
        let mut path = vec![];
        self.walk_inner(
            p0,
            dir,
            depth,
            escape_grid,
            horizon,
            &mut budget,
            false,
            &mut path,
            visitor,
        )?;
        Ok(budget > 0)
    }

    #[allow(clippy::too_many_arguments)]
    fn walk_inner(
        &self,
        p: Point,
        dir: TimeDir,
        depth: usize,
        escape_grid: usize,
        horizon: f64,
        budget: &mut usize,
        departure_forced: bool,
        path: &mut Vec<ChoiceRecord>,
        visitor: &mut impl FnMut(&[ChoiceRecord], &TrajectorySegment) -> bool,
    ) -> Result<()> {
        if *budget == 0 || depth == 0 || horizon <= 1e-12 {
            return Ok(());
        }
        *budget -= 1;
        for child in self.enumerate_children(p, dir, escape_grid, horizon, departure_forced)? {
            path.push(child.record);
            let keep = visitor(path, &child.segment);
            let dur = child.segment.duration();
            if keep && child.expandable && depth > 1 && horizon - dur > 1e-12 {
                self.walk_inner(
                    child.endpoint,
                    dir,
                    depth - 1,
                    escape_grid,
                    horizon - dur,
                    budget,
                    child.departure_forced,
                    path,
                    visitor,
                )?;
            }
            path.pop();
        }
        Ok(())
    }
}

struct ChildArc {
    record: ChoiceRecord,
    segment: TrajectorySegment,
    endpoint: Point,
    expandable: bool,
    departure_forced: bool,
    asymptotic: bool,
}

struct RawSegment {
    regime: Regime,
    samples: Vec<(f64, Point)>,
    end_kind: SegmentEnd,
    choice: ChoiceRecord,
}

fn probe_distance(seg: &SigmaSegment) -> f64 {
    ((seg.to - seg.from) / 64.0).min(1e-6).max(1e-12)
}

/// x-coordinate on a Σ-arc at local elapsed time `tau` (from the arc's
/// decision endpoint), linearly interpolated between samples.
fn interpolate_x(seg: &TrajectorySegment, dir: TimeDir, tau: f64) -> f64 {
    // Samples ascend in Z-time; for backward arcs the decision endpoint is
    // the temporally last sample.
    let pts: Vec<(f64, f64)> = match dir {
        TimeDir::Forward => seg
            .samples
            .iter()
            .map(|&(t, p)| (t - seg.t_start, p[0]))
            .collect(),
        TimeDir::Backward => seg
            .samples
            .iter()
            .rev()
            .map(|&(t, p)| (seg.t_end - t, p[0]))
            .collect(),
    };
    for w in pts.windows(2) {
        let (t0, x0) = w[0];
        let (t1, x1) = w[1];
        if tau >= t0 && tau <= t1 {
            let f = if t1 > t0 { (tau - t0) / (t1 - t0) } else { 0.0 };
            return x0 + (x1 - x0) * f;
        }
    }
    pts.last().map(|&(_, x)| x).unwrap_or(0.0)
}

/// A generous integration window around the PSVF's x-window: wide enough
/// that every orbit arc through the window's Σ-points stays inside.
pub fn default_window(psvf: &Psvf) -> Window {
    let [a, b] = psvf.window;
    let w = b - a;
    let xr = [a - 0.5 * w, b + 0.5 * w];
    let mut m = 1.0f64;
    for field in [&psvf.upper, &psvf.lower] {
        if let Some(speed) = field.graph_speed() {
            let f = field.py().at_y0().scale(1.0 / speed).antiderivative();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 0..=256 {
                let x = xr[0] + (xr[1] - xr[0]) * k as f64 / 256.0;
                let v = f.eval(x);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            m = m.max(2.0 * (hi - lo).abs() + 1.0);
        }
    }
    Window::new(xr, [-m, m])
}

/// CSV export: one row per sample with 17-significant-digit formatting,
/// bit-exact for replay comparison.
pub fn trajectory_to_csv(traj: &GlobalTrajectory) -> String {
    let mut out = String::from("segment_index,regime,t,x,y,branch_choice\n");
    for (i, seg) in traj.segments.iter().enumerate() {
        for &(t, p) in &seg.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i,
                seg.regime.label(),
                fmt17(t),
                fmt17(p[0]),
                fmt17(p[1]),
                seg.choice.choice.label()
            ));
        }
    }
    out
}

/// 17 significant digits: round-trips every finite f64 exactly.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use approx::assert_abs_diff_eq;

    fn flow_z() -> Flow {
        Flow::new(&scenarios::builtin("z").unwrap().psvf).unwrap()
    }

    fn flow_z1() -> Flow {
        Flow::new(&scenarios::builtin("z1").unwrap().psvf).unwrap()
    }

    #[test]
    fn successors_off_the_line() {
        let fl = flow_z();
        assert_eq!(
            fl.local_successors([0.3, 0.5], TimeDir::Forward).unwrap(),
            vec![BranchChoice::FollowUpper]
        );
        assert_eq!(
            fl.local_successors([0.3, -0.1], TimeDir::Forward).unwrap(),
            vec![BranchChoice::FollowLower]
        );
    }

    #[test]
    fn successors_on_sliding_and_escaping() {
        let fl = flow_z();
        // Sliding point: unique forward continuation along Σ (moving left).
        assert_eq!(
            fl.local_successors([0.5, 0.0], TimeDir::Forward).unwrap(),
            vec![BranchChoice::FollowSigma(SigmaDir::Left)]
        );
        // Escaping point: three forward options.
        let succ = fl.local_successors([-0.5, 0.0], TimeDir::Forward).unwrap();
        assert_eq!(succ.len(), 3);
        assert!(succ.contains(&BranchChoice::FollowUpper));
        assert!(succ.contains(&BranchChoice::FollowLower));
        assert!(succ.contains(&BranchChoice::FollowSigma(SigmaDir::Left)));
        // Backward they swap: sliding branches, escaping is confined.
        assert_eq!(
            fl.local_successors([-0.5, 0.0], TimeDir::Backward)
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            fl.local_successors([0.5, 0.0], TimeDir::Backward)
                .unwrap()
                .len(),
            3
        );
    }

    #[test]
    fn successors_at_the_pinch_tangency() {
        let fl = flow_z();
        let succ = fl.local_successors([0.0, 0.0], TimeDir::Forward).unwrap();
        // Visible lower fold admits follow-y; Σ-motion enters the adjacent
        // escaping segment leftward; the invisible upper fold excludes
        // follow-x.
        assert_eq!(
            succ,
            vec![
                BranchChoice::FollowLower,
                BranchChoice::FollowSigma(SigmaDir::Left)
            ]
        );
    }

    #[test]
    fn successors_at_z1_visible_fold() {
        let fl = flow_z1();
        let succ = fl.local_successors([2.0, 0.0], TimeDir::Forward).unwrap();
        assert_eq!(succ, vec![BranchChoice::FollowLower]);
    }

    #[test]
    fn successors_at_singular_tangency() {
        // X = (1, -2x): invisible fold at 0; Y = (-1, -x): invisible fold at 0.
        let x = PolynomialField::graph(1.0, Poly::new(vec![0.0, -2.0]));
        let y = PolynomialField::graph(-1.0, Poly::new(vec![0.0, -1.0]));
        let psvf = Psvf::new(x, y, [-1.0, 1.0]);
        let fl = Flow::new(&psvf).unwrap();
        let succ = fl.local_successors([0.0, 0.0], TimeDir::Forward).unwrap();
        assert_eq!(succ, vec![BranchChoice::Stay]);
        // Stay produces a spatially zero-length segment.
        let seg = fl
            .advance(
                [0.0, 0.0],
                ChoiceRecord::plain(BranchChoice::Stay),
                TimeDir::Forward,
                1.0,
                0.0,
            )
            .unwrap();
        assert_eq!(seg.start, seg.end);
        assert_eq!(seg.regime, Regime::Stationary);
    }

    #[test]
    fn sliding_arc_reaches_the_pinch() {
        let fl = flow_z();
        let seg = fl
            .advance(
                [0.5, 0.0],
                ChoiceRecord::plain(BranchChoice::FollowSigma(SigmaDir::Left)),
                TimeDir::Forward,
                10.0,
                0.0,
            )
            .unwrap();
        assert_eq!(seg.regime, Regime::SlidingMotion);
        assert_eq!(seg.end_kind, SegmentEnd::SegmentEndpoint);
        assert_abs_diff_eq!(seg.end[0], 0.0, epsilon = 1e-9);
        // Velocity -(1+2x²)/(2(1-x²)) is at most -1/2, so the slide takes
        // less than one time unit.
        assert!(seg.duration() < 1.0);
    }

    #[test]
    fn lower_arc_from_one_crosses_the_graze_and_lands_at_minus_one() {
        let fl = flow_z();
        let seg = fl
            .advance(
                [1.0, 0.0],
                ChoiceRecord::plain(BranchChoice::FollowLower),
                TimeDir::Forward,
                10.0,
                0.0,
            )
            .unwrap();
        assert_eq!(seg.regime, Regime::LowerFlow);
        assert_eq!(seg.end_kind, SegmentEnd::SigmaHit);
        assert_abs_diff_eq!(seg.end[0], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(seg.duration(), 1.0, epsilon = 1e-12);
        // The arc stays in the closed lower half-plane.
        assert!(seg.samples.iter().all(|(_, p)| p[1] <= TOL_EVENT));
    }

    #[test]
    fn z1_visible_fold_arc_runs_to_the_far_corner() {
        let fl = flow_z1();
        let seg = fl
            .advance(
                [2.0, 0.0],
                ChoiceRecord::plain(BranchChoice::FollowLower),
                TimeDir::Forward,
                100.0,
                0.0,
            )
            .unwrap();
        assert_eq!(seg.end_kind, SegmentEnd::SigmaHit);
        assert_abs_diff_eq!(seg.end[0], -3.0, epsilon = 1e-9);
        // Along (x-4)(x-2)²(x+3).
        for &(_, p) in &seg.samples {
            let expect = (p[0] - 4.0) * (p[0] - 2.0) * (p[0] - 2.0) * (p[0] + 3.0);
            assert_abs_diff_eq!(p[1], expect, epsilon = 1e-7);
        }
    }

    #[test]
    fn scripted_single_arc_across_the_top() {
        let fl = flow_z();
        let traj = fl
            .global(
                [-1.0, 0.0],
                Policy::Scripted(vec![ChoiceRecord::plain(BranchChoice::FollowUpper)]),
                Orientation::Positive,
                2.0,
            )
            .unwrap();
        assert_eq!(traj.segments.len(), 1);
        let seg = &traj.segments[0];
        assert_eq!(seg.regime, Regime::UpperFlow);
        assert_abs_diff_eq!(seg.end[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(seg.duration(), 2.0, epsilon = 1e-9);
        for &(_, p) in &seg.samples {
            assert_abs_diff_eq!(p[1], 1.0 - p[0] * p[0], epsilon = 1e-9);
        }
    }

    #[test]
    fn scripted_slide_then_dive() {
        let fl = flow_z();
        let (traj, completion) = fl
            .global_partial(
                [0.5, 0.0],
                Policy::Scripted(vec![
                    ChoiceRecord::plain(BranchChoice::FollowSigma(SigmaDir::Left)),
                    ChoiceRecord::plain(BranchChoice::FollowLower),
                ]),
                Orientation::Positive,
                5.0,
            )
            .unwrap();
        assert_eq!(completion, Completion::Underrun { consumed: 2 });
        assert_eq!(traj.segments.len(), 2);
        assert_eq!(traj.segments[0].regime, Regime::SlidingMotion);
        assert_abs_diff_eq!(traj.segments[0].end[0], 0.0, epsilon = 1e-9);
        assert_eq!(traj.segments[1].regime, Regime::LowerFlow);
        assert_abs_diff_eq!(traj.segments[1].end[0], -1.0, epsilon = 1e-9);
        assert!(traj.max_junction_gap() <= TOL_CLOSE);
    }

    #[test]
    fn policy_underrun_carries_an_error() {
        let fl = flow_z();
        let err = fl
            .global(
                [-1.0, 0.0],
                Policy::Scripted(vec![ChoiceRecord::plain(BranchChoice::FollowUpper)]),
                Orientation::Positive,
                50.0,
            )
            .unwrap_err();
        assert!(matches!(err, Error::PolicyUnderrun { consumed: 1 }));
    }

    #[test]
    fn replay_is_bit_identical() {
        let fl = flow_z();
        let decisions = vec![
            ChoiceRecord::plain(BranchChoice::FollowUpper),
            ChoiceRecord::plain(BranchChoice::FollowLower),
            ChoiceRecord::plain(BranchChoice::FollowSigma(SigmaDir::Left)),
            ChoiceRecord::stop_at_x(BranchChoice::FollowSigma(SigmaDir::Left), -0.3),
            ChoiceRecord::plain(BranchChoice::FollowUpper),
        ];
        // Cross up at -0.9, over the top to 0.9, dive to the sliding
        // segment, slide to the pinch, escape out to -0.3, lift off.
        let start = [-0.9, 0.0];
        let horizon = 12.0;
        let a = fl
            .global_partial(start, Policy::Scripted(decisions.clone()), Orientation::Positive, horizon)
            .map(|(t, _)| t);
        let b = fl
            .global_partial(start, Policy::Scripted(decisions), Orientation::Positive, horizon)
            .map(|(t, _)| t);
        // Both runs either fail identically or agree sample-for-sample.
        match (a, b) {
            (Ok(a), Ok(b)) => {
                assert_eq!(a.segments.len(), b.segments.len());
                for (sa, sb) in a.segments.iter().zip(&b.segments) {
                    assert_eq!(sa.samples.len(), sb.samples.len());
                    for (u, v) in sa.samples.iter().zip(&sb.samples) {
                        assert_eq!(u.0.to_bits(), v.0.to_bits());
                        assert_eq!(u.1[0].to_bits(), v.1[0].to_bits());
                        assert_eq!(u.1[1].to_bits(), v.1[1].to_bits());
                    }
                }
            }
            (a, b) => panic!("replay mismatch: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn backward_trajectory_times_descend_from_zero() {
        let fl = flow_z();
        // Backward from a sewing-down point: arrive via the upper field.
        let traj = fl
            .global(
                [0.9, 0.0],
                Policy::Scripted(vec![ChoiceRecord::plain(BranchChoice::FollowUpper)]),
                Orientation::Negative,
                1.0,
            )
            .unwrap();
        assert_eq!(traj.segments.len(), 1);
        let seg = &traj.segments[0];
        assert!(seg.t_start < seg.t_end);
        assert_abs_diff_eq!(seg.t_end, 0.0, epsilon = 1e-12);
        assert_eq!(seg.end, [0.9, 0.0]);
        assert_eq!(seg.regime, Regime::UpperFlow);
        // Upper arcs move right forward, so backward the x decreases.
        assert!(seg.start[0] < 0.9);
    }

    #[test]
    fn branch_tree_depth_zero_is_a_leaf() {
        let fl = flow_z();
        let tree = fl
            .branch_tree([0.0, 0.0], TimeDir::Forward, 0, 2, 10.0, 10_000)
            .unwrap();
        assert!(tree.children.is_empty());
    }

    #[test]
    fn branch_tree_at_sewing_point_has_one_child() {
        let fl = flow_z();
        let tree = fl
            .branch_tree([0.9, 0.0], TimeDir::Forward, 1, 2, 10.0, 10_000)
            .unwrap();
        assert_eq!(tree.children.len(), 1);
        assert_eq!(tree.children[0].record.choice, BranchChoice::FollowLower);
    }

    #[test]
    fn branch_tree_at_pinch_matches_the_expected_children() {
        let fl = flow_z();
        let tree = fl
            .branch_tree([0.0, 0.0], TimeDir::Forward, 1, 2, 10.0, 10_000)
            .unwrap();
        // follow-y, the Σ-traversal to the far tangency, and two interior
        // grid departures carved from it.
        let labels: Vec<_> = tree
            .children
            .iter()
            .map(|e| (e.record.choice, e.record.stop_x.is_some()))
            .collect();
        assert_eq!(labels[0], (BranchChoice::FollowLower, false));
        assert_eq!(
            labels[1],
            (BranchChoice::FollowSigma(SigmaDir::Left), false)
        );
        assert_eq!(labels.len(), 4);
        assert!(labels[2].1 && labels[3].1);
        // The full traversal ends at the left tangency -1/√2.
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert_abs_diff_eq!(
            tree.children[1].segment.end[0],
            -inv_sqrt2,
            epsilon = 1e-9
        );
    }

    #[test]
    fn escaping_point_has_at_least_three_children() {
        let fl = flow_z();
        let tree = fl
            .branch_tree([-0.5, 0.0], TimeDir::Forward, 1, 2, 10.0, 10_000)
            .unwrap();
        assert!(tree.children.len() >= 3);
    }

    #[test]
    fn csv_export_has_the_documented_shape() {
        let fl = flow_z();
        let traj = fl
            .global(
                [-1.0, 0.0],
                Policy::Scripted(vec![ChoiceRecord::plain(BranchChoice::FollowUpper)]),
                Orientation::Positive,
                2.0,
            )
            .unwrap();
        let csv = trajectory_to_csv(&traj);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "segment_index,regime,t,x,y,branch_choice"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,upper-flow,"));
        assert!(first.ends_with(",follow-x"));
    }

    use crate::poly::Poly;
    use crate::sigma::Psvf;
    use crate::field::PolynomialField;
}
