//! Reachability routing through the distinguished funnel tangency.
//!
//! Forward dynamics in the built-in systems drain onto a sliding segment
//! that empties into one visible fold; from that fold every point of the
//! invariant region can be reached by inverting the closed-form orbit
//! families. The router implements exactly that: a deterministic descent
//! to the funnel, a zone-recursive planner away from it, and a bounded
//! breadth-first fallback over the branch tree when the algebra does not
//! apply.

use crate::error::{Error, Result};
use crate::field::{Point, PolynomialField};
use crate::poly::Poly;
use crate::sigma::{SigmaLabel, Visibility};
use crate::trajectory::{
    BranchChoice, ChoiceRecord, Completion, Flow, GlobalTrajectory, Orientation, Policy, Regime,
    SegmentEnd, SigmaDir, TimeDir,
};

/// A verified route: replaying `decisions` from `from` lands within
/// `end_error` of `to` after `time`.
#[derive(Clone, Debug)]
pub struct RouteWitness {
    pub from: Point,
    pub to: Point,
    pub decisions: Vec<ChoiceRecord>,
    pub end_error: f64,
    pub time: f64,
}

pub struct Router<'f> {
    flow: &'f Flow,
    funnel: Point,
    leg_horizon: f64,
    /// Geometric tolerance for "a point lies on this orbit".
    geom_tol: f64,
}

impl<'f> Router<'f> {
    pub fn new(flow: &'f Flow, funnel_hint: Option<f64>) -> Result<Router<'f>> {
        let funnel_x = match funnel_hint {
            Some(x) => x,
            None => detect_funnel(flow)?,
        };
        Ok(Self::with_funnel(flow, funnel_x))
    }

    fn with_funnel(flow: &'f Flow, funnel_x: f64) -> Router<'f> {
        let [a, b] = flow.psvf().window;
        Router {
            flow,
            funnel: [funnel_x, 0.0],
            leg_horizon: flow.suggested_horizon(),
            geom_tol: 1e-9 * (b - a).max(1.0),
        }
    }

    pub fn funnel(&self) -> Point {
        self.funnel
    }

    /// Deterministic forward descent from `p` to the funnel point, cutting
    /// flow arcs where their orbit grazes the funnel.
    pub fn route_to_funnel(&self, p: Point) -> Result<Vec<ChoiceRecord>> {
        let mut decisions = vec![];
        let mut s = p;
        for _ in 0..64 {
            if self.at_funnel(s) {
                return Ok(decisions);
            }
            let succ = self.flow.local_successors(s, TimeDir::Forward)?;
            let choice = *succ.first().ok_or_else(|| {
                Error::BudgetExhausted("no admissible continuation during descent".into())
            })?;
            if choice == BranchChoice::Degenerate {
                return Err(Error::Contract("degenerate tangency on the descent".into()));
            }
            let mut record = ChoiceRecord::plain(choice);
            let seg = self
                .flow
                .advance(s, record, TimeDir::Forward, self.leg_horizon, 0.0)?;
            // Cut at the funnel when the arc passes over or through it.
            if let Some(cut) = self.graze_cut(&seg, choice, s) {
                record = cut;
                let seg = self
                    .flow
                    .advance(s, record, TimeDir::Forward, self.leg_horizon, 0.0)?;
                decisions.push(record);
                s = seg.end;
                continue;
            }
            match seg.end_kind {
                SegmentEnd::SigmaHit | SegmentEnd::SegmentEndpoint => {
                    decisions.push(record);
                    s = seg.end;
                }
                _ => {
                    return Err(Error::BudgetExhausted(format!(
                        "descent stalled with {:?} at ({:.6}, {:.6})",
                        seg.end_kind, seg.end[0], seg.end[1]
                    )))
                }
            }
        }
        Err(Error::BudgetExhausted(
            "descent hop budget exhausted before the funnel".into(),
        ))
    }

    fn at_funnel(&self, p: Point) -> bool {
        (p[0] - self.funnel[0]).abs() <= 1e-9 && p[1].abs() <= 1e-9
    }

    /// If a flow segment's orbit passes through the funnel strictly inside
    /// the segment's span, produce the record cutting it there.
    fn graze_cut(
        &self,
        seg: &crate::trajectory::TrajectorySegment,
        choice: BranchChoice,
        start: Point,
    ) -> Option<ChoiceRecord> {
        if !matches!(
            choice,
            BranchChoice::FollowUpper | BranchChoice::FollowLower
        ) {
            return None;
        }
        let field = self.pick_field(choice);
        let orbit = field.orbit_through(start).ok()?;
        let q = orbit.graph_poly()?;
        let fx = self.funnel[0];
        if q.eval(fx).abs() > self.geom_tol {
            return None;
        }
        let (x0, x1) = (seg.start[0], seg.end[0]);
        let lo = x0.min(x1);
        let hi = x0.max(x1);
        let sep = 1e-9;
        if fx > lo + sep && fx < hi - sep && (fx - start[0]).abs() > sep {
            Some(ChoiceRecord::stop_at_x(choice, fx))
        } else {
            None
        }
    }

    fn pick_field(&self, choice: BranchChoice) -> &PolynomialField {
        match choice {
            BranchChoice::FollowUpper => &self.flow.psvf().upper,
            _ => &self.flow.psvf().lower,
        }
    }

    /// Plan a verified decision list from the funnel to `q`.
    pub fn route_from_funnel(&self, q: Point, tol_hit: f64) -> Result<Vec<ChoiceRecord>> {
        let plan = self.plan_arrival(q, 6)?;
        let end = self.materialize_end(self.funnel, &plan)?;
        let err = dist(end, q);
        if err <= tol_hit {
            Ok(plan)
        } else {
            Err(Error::BudgetExhausted(format!(
                "funnel route missed the target by {err:.3e}"
            )))
        }
    }

    /// A positive-trajectory witness from `from` to `to`. Queries with
    /// `from == to` return a nondegenerate closed arc through the funnel.
    pub fn reach(&self, from: Point, to: Point, tol_hit: f64) -> Result<RouteWitness> {
        let head = self.route_to_funnel(from)?;
        let tail = if dist(to, self.funnel) <= 1e-12 && head.is_empty() {
            self.funnel_loop()?
        } else if dist(from, to) <= 1e-12 && head.is_empty() {
            // from == to == funnel handled above; otherwise head is nonempty.
            self.plan_arrival(to, 6)?
        } else {
            self.plan_arrival(to, 6)?
        };
        let mut decisions = head;
        decisions.extend(tail);
        if decisions.is_empty() {
            decisions = self.funnel_loop()?;
        }
        let traj = self.materialize(from, &decisions)?;
        let end_error = dist(traj.final_point(), to);
        if end_error > tol_hit {
            // Structured planning missed; fall back to breadth-first search.
            return self.bfs_fallback(from, to, tol_hit);
        }
        Ok(RouteWitness {
            from,
            to,
            decisions,
            end_error,
            time: traj.total_time(),
        })
    }

    /// The canonical nondegenerate closed arc through the funnel itself:
    /// leave along the first admissible flow choice, then descend back.
    fn funnel_loop(&self) -> Result<Vec<ChoiceRecord>> {
        let succ = self.flow.local_successors(self.funnel, TimeDir::Forward)?;
        let first_flow = succ
            .iter()
            .copied()
            .find(|c| matches!(c, BranchChoice::FollowUpper | BranchChoice::FollowLower))
            .ok_or_else(|| Error::Contract("no flow departure at the funnel".into()))?;
        let rec = ChoiceRecord::plain(first_flow);
        let seg = self
            .flow
            .advance(self.funnel, rec, TimeDir::Forward, self.leg_horizon, 0.0)?;
        let mut decisions = vec![rec];
        decisions.extend(self.route_to_funnel(seg.end)?);
        Ok(decisions)
    }

    /// Materialize a decision list and return the trajectory.
    pub fn materialize(&self, from: Point, decisions: &[ChoiceRecord]) -> Result<GlobalTrajectory> {
        let horizon = self.leg_horizon * (decisions.len() as f64 + 1.0);
        let (traj, completion) = self.flow.global_partial(
            from,
            Policy::Scripted(decisions.to_vec()),
            Orientation::Positive,
            horizon,
        )?;
        match completion {
            Completion::Underrun { .. } | Completion::Completed => Ok(traj),
        }
    }

    fn materialize_end(&self, from: Point, decisions: &[ChoiceRecord]) -> Result<Point> {
        if decisions.is_empty() {
            return Ok(from);
        }
        Ok(self.materialize(from, decisions)?.final_point())
    }

    /// Recursive zone planner: decisions from the funnel to `q`.
    fn plan_arrival(&self, q: Point, depth: usize) -> Result<Vec<ChoiceRecord>> {
        if depth == 0 {
            return Err(Error::BudgetExhausted("planner recursion depth".into()));
        }
        if self.at_funnel(q) && q[1].abs() <= 1e-12 {
            return Ok(vec![]);
        }
        // One-leg connections straight from the funnel.
        if let Some(plan) = self.direct_legs(self.funnel, q)? {
            return Ok(plan);
        }
        if q[1].abs() > 1e-9 {
            // Interior point: ride its own orbit from the arc's Σ-entry.
            let (choice, field) = if q[1] > 0.0 {
                (BranchChoice::FollowUpper, &self.flow.psvf().upper)
            } else {
                (BranchChoice::FollowLower, &self.flow.psvf().lower)
            };
            let x_e = self.orbit_entry(field, q)?;
            let mut plan = self.plan_departure([x_e, 0.0], choice, depth - 1)?;
            plan.push(ChoiceRecord::stop_at_x(choice, q[0]));
            return self.verify_prefix(plan, q);
        }
        // On the switching line.
        let x = q[0];
        let class = self.flow.psvf().classify_point(x);
        match class.label {
            SigmaLabel::Sliding | SigmaLabel::Escaping => self.plan_sigma_point(x, depth),
            SigmaLabel::SewingUp => {
                let field = &self.flow.psvf().lower;
                let x_e = self.orbit_entry_line(field, x)?;
                let mut plan =
                    self.plan_departure([x_e, 0.0], BranchChoice::FollowLower, depth - 1)?;
                plan.push(ChoiceRecord::stop_at_x(BranchChoice::FollowLower, x));
                self.verify_prefix(plan, q)
            }
            SigmaLabel::SewingDown => {
                let field = &self.flow.psvf().upper;
                let x_e = self.orbit_entry_line(field, x)?;
                let mut plan =
                    self.plan_departure([x_e, 0.0], BranchChoice::FollowUpper, depth - 1)?;
                plan.push(ChoiceRecord::stop_at_x(BranchChoice::FollowUpper, x));
                self.verify_prefix(plan, q)
            }
            SigmaLabel::Tangency => self.plan_tangency_arrival(x, depth),
        }
    }

    fn verify_prefix(&self, plan: Vec<ChoiceRecord>, q: Point) -> Result<Vec<ChoiceRecord>> {
        let end = self.materialize_end(self.funnel, &plan)?;
        if dist(end, q) <= 1e-6 {
            Ok(plan)
        } else {
            Err(Error::BudgetExhausted(format!(
                "planned leg missed ({:.6}, {:.6}) by {:.3e}",
                q[0],
                q[1],
                dist(end, q)
            )))
        }
    }

    /// Try every single-leg connection from `a` to `q`.
    fn direct_legs(&self, a: Point, q: Point) -> Result<Option<Vec<ChoiceRecord>>> {
        for choice in self.flow.local_successors(a, TimeDir::Forward)? {
            match choice {
                BranchChoice::FollowUpper | BranchChoice::FollowLower => {
                    let field = self.pick_field(choice);
                    let Ok(orbit) = field.orbit_through(a) else {
                        continue;
                    };
                    let poly = orbit.graph_poly().expect("graph field");
                    if (poly.eval(q[0]) - q[1]).abs() > 100.0 * self.geom_tol {
                        continue;
                    }
                    let s = field.graph_speed().unwrap_or(1.0).signum();
                    if s * (q[0] - a[0]) < 1e-12 {
                        continue;
                    }
                    // Respect the half-plane of the target.
                    if (choice == BranchChoice::FollowUpper && q[1] < -1e-9)
                        || (choice == BranchChoice::FollowLower && q[1] > 1e-9)
                    {
                        continue;
                    }
                    let rec = ChoiceRecord::stop_at_x(choice, q[0]);
                    if let Ok(seg) =
                        self.flow
                            .advance(a, rec, TimeDir::Forward, self.leg_horizon, 0.0)
                    {
                        if dist(seg.end, q) <= 1e-7 {
                            return Ok(Some(vec![rec]));
                        }
                    }
                }
                BranchChoice::FollowSigma(_) if q[1].abs() <= 1e-9 => {
                    let rec = ChoiceRecord::stop_at_x(choice, q[0]);
                    if let Ok(seg) =
                        self.flow
                            .advance(a, rec, TimeDir::Forward, self.leg_horizon, 0.0)
                    {
                        if dist(seg.end, q) <= 1e-7 {
                            return Ok(Some(vec![rec]));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(None)
    }

    /// Arrival at an interior sliding/escaping point: enter the segment at
    /// a draining end, or land on it upstream and ride the motion down.
    fn plan_sigma_point(&self, x: f64, depth: usize) -> Result<Vec<ChoiceRecord>> {
        let seg = self
            .flow
            .sigma_segments()
            .iter()
            .find(|s| x > s.from - 1e-12 && x < s.to + 1e-12)
            .copied()
            .ok_or_else(|| Error::Contract(format!("no Σ-segment at {x}")))?;
        let v_probe = |xx: f64| self.flow.psvf().filippov_velocity(xx);
        let probe = ((seg.to - seg.from) / 256.0).min(1e-6);

        // Candidate entries at the two ends, motion pointing inward, with
        // no blocking pseudo-equilibrium strictly between entry and target.
        let mut attempts: Vec<(f64, SigmaDir)> = vec![];
        if v_probe(seg.from + probe) > 0.0 && self.no_blocking_pe(seg.from, x) {
            attempts.push((seg.from, SigmaDir::Right));
        }
        if v_probe(seg.to - probe) < 0.0 && self.no_blocking_pe(seg.to, x) {
            attempts.push((seg.to, SigmaDir::Left));
        }
        for (端, dirn) in attempts {
            let entry = 端;
            let sub = if (entry - self.funnel[0]).abs() <= 1e-9 {
                Ok(vec![])
            } else {
                self.plan_tangency_arrival(entry, depth - 1)
            };
            if let Ok(mut plan) = sub {
                plan.push(ChoiceRecord::stop_at_x(
                    BranchChoice::FollowSigma(dirn),
                    x,
                ));
                if let Ok(p) = self.verify_prefix(plan, [x, 0.0]) {
                    return Ok(p);
                }
            }
        }
        // Landing strategy (sliding segments only: flow arcs can land there).
        if seg.label == SigmaLabel::Sliding {
            let v_here = v_probe(x + probe * v_probe(x + probe).signum() * 0.0 + probe);
            let upstream_end = if v_here < 0.0 { seg.to } else { seg.from };
            let sdir = if v_here < 0.0 {
                SigmaDir::Left
            } else {
                SigmaDir::Right
            };
            for f in [0.35, 0.6, 0.15, 0.8] {
                let u = x + (upstream_end - x) * f;
                if !self.no_blocking_pe(u, x) {
                    continue;
                }
                for (choice, field) in [
                    (BranchChoice::FollowUpper, &self.flow.psvf().upper),
                    (BranchChoice::FollowLower, &self.flow.psvf().lower),
                ] {
                    // The field must arrive at Σ there.
                    let lie = field.lie1().eval(u);
                    let arrives = match choice {
                        BranchChoice::FollowUpper => lie < -1e-9,
                        _ => lie > 1e-9,
                    };
                    if !arrives {
                        continue;
                    }
                    let Ok(x_e) = self.orbit_entry_line(field, u) else {
                        continue;
                    };
                    let Ok(mut plan) = self.plan_departure([x_e, 0.0], choice, depth - 1) else {
                        continue;
                    };
                    plan.push(ChoiceRecord::stop_at_x(choice, u));
                    plan.push(ChoiceRecord::stop_at_x(BranchChoice::FollowSigma(sdir), x));
                    if let Ok(p) = self.verify_prefix(plan, [x, 0.0]) {
                        return Ok(p);
                    }
                }
            }
        }
        Err(Error::BudgetExhausted(format!(
            "no admissible entry into the Σ-segment at {x}"
        )))
    }

    /// Arrival exactly at a tangency point.
    fn plan_tangency_arrival(&self, t: f64, depth: usize) -> Result<Vec<ChoiceRecord>> {
        if depth == 0 {
            return Err(Error::BudgetExhausted("planner recursion depth".into()));
        }
        if (t - self.funnel[0]).abs() <= 1e-9 {
            return Ok(vec![]);
        }
        if let Some(plan) = self.direct_legs(self.funnel, [t, 0.0])? {
            return Ok(plan);
        }
        let info = self
            .flow
            .tangencies()
            .iter()
            .find(|ti| (ti.x - t).abs() <= 1e-7)
            .copied()
            .ok_or_else(|| Error::Contract(format!("no tangency at {t}")))?;

        // A sliding segment draining into t carries arrivals.
        for seg in self.flow.sigma_segments() {
            if seg.label != SigmaLabel::Sliding {
                continue;
            }
            let probe = ((seg.to - seg.from) / 256.0).min(1e-6);
            let into_from_left =
                (seg.to - t).abs() <= 1e-9 && self.flow.psvf().filippov_velocity(seg.to - probe) > 0.0;
            let into_from_right = (seg.from - t).abs() <= 1e-9
                && self.flow.psvf().filippov_velocity(seg.from + probe) < 0.0;
            if !(into_from_left || into_from_right) {
                continue;
            }
            let sdir = if into_from_left {
                SigmaDir::Right
            } else {
                SigmaDir::Left
            };
            // Land upstream and slide in (the natural segment-endpoint stop
            // parks the motion exactly on the tangency).
            let upstream = if into_from_left { seg.from } else { seg.to };
            for f in [0.5, 0.25, 0.75, 0.9] {
                let u = t + (upstream - t) * f;
                if !self.no_blocking_pe(u, t) {
                    continue;
                }
                for (choice, field) in [
                    (BranchChoice::FollowUpper, &self.flow.psvf().upper),
                    (BranchChoice::FollowLower, &self.flow.psvf().lower),
                ] {
                    let lie = field.lie1().eval(u);
                    let arrives = match choice {
                        BranchChoice::FollowUpper => lie < -1e-9,
                        _ => lie > 1e-9,
                    };
                    if !arrives {
                        continue;
                    }
                    let Ok(x_e) = self.orbit_entry_line(field, u) else {
                        continue;
                    };
                    let Ok(mut plan) = self.plan_departure([x_e, 0.0], choice, depth - 1) else {
                        continue;
                    };
                    plan.push(ChoiceRecord::stop_at_x(choice, u));
                    plan.push(ChoiceRecord::plain(BranchChoice::FollowSigma(sdir)));
                    if let Ok(p) = self.verify_prefix(plan, [t, 0.0]) {
                        return Ok(p);
                    }
                }
            }
        }

        // Tangential arrival along the visible fold's own orbit.
        for (choice, field, vis) in [
            (
                BranchChoice::FollowUpper,
                &self.flow.psvf().upper,
                info.fields.upper,
            ),
            (
                BranchChoice::FollowLower,
                &self.flow.psvf().lower,
                info.fields.lower,
            ),
        ] {
            if vis != Some(Visibility::Visible) {
                continue;
            }
            let Ok(x_e) = self.orbit_entry_line(field, t) else {
                continue;
            };
            let Ok(mut plan) = self.plan_departure([x_e, 0.0], choice, depth - 1) else {
                continue;
            };
            plan.push(ChoiceRecord::stop_at_x(choice, t));
            if let Ok(p) = self.verify_prefix(plan, [t, 0.0]) {
                return Ok(p);
            }
        }
        Err(Error::BudgetExhausted(format!(
            "no planned arrival at the tangency {t}"
        )))
    }

    /// Arrange arrival at `(e, 0)` such that departing with `choice` is the
    /// admissible continuation there.
    fn plan_departure(&self, e: Point, choice: BranchChoice, depth: usize) -> Result<Vec<ChoiceRecord>> {
        if depth == 0 {
            return Err(Error::BudgetExhausted("planner recursion depth".into()));
        }
        let class = self.flow.psvf().classify_point(e[0]);
        let ok = match (class.label, choice) {
            (SigmaLabel::Escaping, _) => true,
            (SigmaLabel::SewingUp, BranchChoice::FollowUpper) => true,
            (SigmaLabel::SewingDown, BranchChoice::FollowLower) => true,
            (SigmaLabel::Tangency, _) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::BudgetExhausted(format!(
                "cannot depart via {choice:?} from a {:?} point at {}",
                class.label, e[0]
            )));
        }
        self.plan_arrival(e, depth)
    }

    /// x-coordinate of the previous transversal Σ-crossing of the orbit
    /// through a point strictly off the line.
    fn orbit_entry(&self, field: &PolynomialField, q: Point) -> Result<f64> {
        let orbit = field.orbit_through(q)?;
        let poly = orbit.graph_poly().expect("graph field");
        self.entry_root(field, &poly, q[0])
    }

    /// Same, for the orbit through a point on the line.
    fn orbit_entry_line(&self, field: &PolynomialField, x: f64) -> Result<f64> {
        let orbit = field.orbit_through([x, 0.0])?;
        let poly = orbit.graph_poly().expect("graph field");
        self.entry_root(field, &poly, x)
    }

    fn entry_root(&self, field: &PolynomialField, poly: &Poly, x_q: f64) -> Result<f64> {
        let s = field.graph_speed().unwrap_or(1.0).signum();
        let w = self.flow.window();
        let mut best: Option<f64> = None;
        for r in poly.roots_on(w.x[0], w.x[1]) {
            if !r.sign_change {
                continue;
            }
            // Behind the point against the flow direction.
            if s * (x_q - r.x) > 1e-9 {
                let closer = match best {
                    None => true,
                    Some(b) => s * (x_q - r.x) < s * (x_q - b),
                };
                if closer {
                    best = Some(r.x);
                }
            }
        }
        best.ok_or_else(|| {
            Error::BudgetExhausted(format!(
                "orbit through x = {x_q} has no Σ-entry inside the window"
            ))
        })
    }

    fn no_blocking_pe(&self, a: f64, b: f64) -> bool {
        let lo = a.min(b) + 1e-9;
        let hi = a.max(b) - 1e-9;
        !self
            .flow
            .pseudo_equilibria()
            .iter()
            .any(|pe| pe.x > lo && pe.x < hi)
    }

    /// Bounded breadth-first-style fallback over the branch enumeration.
    fn bfs_fallback(&self, from: Point, to: Point, tol_hit: f64) -> Result<RouteWitness> {
        let mut hit: Option<(Vec<ChoiceRecord>, f64)> = None;
        let depth = 10;
        let grid = 6;
        self.flow.walk_branches(
            from,
            TimeDir::Forward,
            depth,
            grid,
            self.leg_horizon * depth as f64,
            50_000,
            &mut |path, seg| {
                if hit.is_some() {
                    return false;
                }
                for &(_, p) in &seg.samples {
                    if dist(p, to) <= tol_hit * 0.5 {
                        let mut d: Vec<ChoiceRecord> = path.to_vec();
                        // Cut the hitting segment at the close approach.
                        if let Some(last) = d.last_mut() {
                            if matches!(seg.regime, Regime::Stationary) {
                                // keep as is
                            } else {
                                *last = ChoiceRecord::stop_at_x(last.choice, p[0]);
                            }
                        }
                        hit = Some((d, dist(p, to)));
                        return false;
                    }
                }
                true
            },
        )?;
        match hit {
            Some((decisions, _)) => {
                let traj = self.materialize(from, &decisions)?;
                let end_error = dist(traj.final_point(), to);
                if end_error <= tol_hit {
                    Ok(RouteWitness {
                        from,
                        to,
                        decisions,
                        end_error,
                        time: traj.total_time(),
                    })
                } else {
                    Err(Error::BudgetExhausted(format!(
                        "fallback route replays {end_error:.3e} away from the target"
                    )))
                }
            }
            None => Err(Error::BudgetExhausted(
                "reach budget exhausted without a witness (no claim of non-reachability)".into(),
            )),
        }
    }
}

/// A closed positive arc through `p`: the reach query `p -> p`, replayed
/// to confirm the period.
pub fn make_periodic(flow: &Flow, p: Point, funnel_hint: Option<f64>) -> Result<PeriodicOrbit> {
    let router = Router::new(flow, funnel_hint)?;
    let witness = router.reach(p, p, crate::trajectory::TOL_CLOSE)?;
    let traj = router.materialize(p, &witness.decisions)?;
    let period = traj.total_time();
    let closure = dist(traj.final_point(), p);
    // Replay over two periods: same decisions twice.
    let mut twice = witness.decisions.clone();
    twice.extend(witness.decisions.iter().copied());
    let double = router.materialize(p, &twice)?;
    let double_closure = dist(double.final_point(), p);
    Ok(PeriodicOrbit {
        trajectory: traj,
        period,
        closure,
        double_closure,
        decisions: witness.decisions,
    })
}

#[derive(Clone, Debug)]
pub struct PeriodicOrbit {
    pub trajectory: GlobalTrajectory,
    pub period: f64,
    pub closure: f64,
    /// Closure error after replaying the decision list twice.
    pub double_closure: f64,
    pub decisions: Vec<ChoiceRecord>,
}

/// Visible folds drained by a sliding segment: funnel candidates.
pub fn detect_funnel_candidates(flow: &Flow) -> Vec<f64> {
    let mut out = vec![];
    for t in flow.tangencies() {
        let visible = matches!(t.fields.upper, Some(Visibility::Visible))
            || matches!(t.fields.lower, Some(Visibility::Visible));
        if !visible {
            continue;
        }
        for seg in flow.sigma_segments() {
            if seg.label != SigmaLabel::Sliding {
                continue;
            }
            let probe = ((seg.to - seg.from) / 256.0).min(1e-6);
            let drains_right = (seg.to - t.x).abs() <= 1e-9
                && flow.psvf().filippov_velocity(seg.to - probe) > 0.0;
            let drains_left = (seg.from - t.x).abs() <= 1e-9
                && flow.psvf().filippov_velocity(seg.from + probe) < 0.0;
            if drains_right || drains_left {
                out.push(t.x);
                break;
            }
        }
    }
    out
}

/// The funnel tangency: when several visible folds are drained, score them
/// by how many probe descents actually terminate there.
pub fn detect_funnel(flow: &Flow) -> Result<f64> {
    let candidates = detect_funnel_candidates(flow);
    match candidates.len() {
        0 => Err(Error::Contract(
            "no visible fold drained by a sliding segment; routing unavailable".into(),
        )),
        1 => Ok(candidates[0]),
        _ => {
            let [a, b] = flow.psvf().window;
            let w = b - a;
            let probes = [
                [a + 0.3 * w, 0.05 * w],
                [a + 0.7 * w, 0.05 * w],
                [a + 0.5 * w, -0.02 * w],
            ];
            let mut best = (candidates[0], usize::MAX);
            for &c in &candidates {
                let router = Router::with_funnel(flow, c);
                let score: usize = probes
                    .iter()
                    .filter(|&&p| router.route_to_funnel(p).is_ok())
                    .count();
                // Highest score wins; ties resolved by candidate order.
                if best.1 == usize::MAX || score > best.1 {
                    best = (c, score);
                }
            }
            Ok(best.0)
        }
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use approx::assert_abs_diff_eq;

    fn router_z(flow: &Flow) -> Router<'_> {
        Router::new(flow, Some(0.0)).unwrap()
    }

    #[test]
    fn funnel_detection_matches_the_scenarios() {
        for (name, expect) in [("z", 0.0), ("z1", 2.0), ("z2", 0.0)] {
            let sc = scenarios::builtin(name).unwrap();
            let flow = Flow::new(&sc.psvf).unwrap();
            let got = detect_funnel(&flow).unwrap();
            assert!((got - expect).abs() <= 1e-9, "scenario {name}: funnel {got}");
        }
    }

    #[test]
    fn descend_from_the_corner() {
        let sc = scenarios::builtin("z").unwrap();
        let flow = Flow::new(&sc.psvf).unwrap();
        let r = router_z(&flow);
        let plan = r.route_to_funnel([-1.0, 0.0]).unwrap();
        let traj = r.materialize([-1.0, 0.0], &plan).unwrap();
        assert_abs_diff_eq!(traj.final_point()[0], 0.0, epsilon = 1e-9);
        assert!(traj.final_point()[1].abs() <= 1e-9);
    }

    #[test]
    fn reach_example_pair() {
        let sc = scenarios::builtin("z").unwrap();
        let flow = Flow::new(&sc.psvf).unwrap();
        let r = router_z(&flow);
        let w = r.reach([-1.0, 0.0], [0.3, 0.2], 1e-3).unwrap();
        assert!(w.end_error <= 1e-3);
        // Replay the witness: identical endpoint.
        let replay = r.materialize([-1.0, 0.0], &w.decisions).unwrap();
        assert!(dist(replay.final_point(), [0.3, 0.2]) <= 1e-3);
    }

    #[test]
    fn closed_arc_is_nondegenerate() {
        let sc = scenarios::builtin("z").unwrap();
        let flow = Flow::new(&sc.psvf).unwrap();
        let r = router_z(&flow);
        let w = r.reach([0.5, 0.25], [0.5, 0.25], 1e-6).unwrap();
        assert!(w.time > 0.1);
        assert!(w.end_error <= 1e-6);
    }

    #[test]
    fn boundary_loop_has_period_three() {
        let sc = scenarios::builtin("z").unwrap();
        let flow = Flow::new(&sc.psvf).unwrap();
        let orbit = make_periodic(&flow, [-1.0, 0.0], Some(0.0)).unwrap();
        assert_abs_diff_eq!(orbit.period, 3.0, epsilon = 1e-6);
        assert!(orbit.closure <= 1e-6);
        assert!(orbit.double_closure <= 2e-6);
    }
}
