//! Planar piecewise smooth vector fields under the Filippov convention.
//!
//! The crate implements the switching-line calculus (sewing, sliding and
//! escaping segments, tangencies with visibility data, the Filippov
//! convex-combination field and its pseudo-equilibria), set-valued local
//! and global trajectories with an explicit branch tree, and a family of
//! certificate-style checkers: invariance (plain and oriented),
//! reachability, topological transitivity, sensitive dependence,
//! non-deterministic chaos, and orientable-minimality probes.
//!
//! Everything is specialized to a straight switching line f(x, y) = y and
//! polynomial pieces; the built-in scenarios in [`scenarios`] exercise the
//! whole surface at desk scale.

pub mod error;
pub mod poly;
pub mod field;
pub mod integrate;
pub mod sigma;
pub mod region;
pub mod trajectory;
pub mod router;
pub mod scenarios;

pub use error::{Error, Result};
pub use field::{FlowEvent, FlowEventKind, HalfPlane, Point, PolynomialField, Window};
pub use region::{Membership, RegionSpec};
pub use sigma::{Psvf, SigmaLabel};
